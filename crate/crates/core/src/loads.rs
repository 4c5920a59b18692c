//! Hydrostatic pressure potential and enclosed volume on faceted surfaces.
//!
//! Both quantities are surface integrals of polynomials in the nodal
//! positions, so they are evaluated exactly on each flat facet: the volume
//! through `⅙ x0·(x1×x2)` and the pressure potential through the
//! edge-midpoint rule, which is exact for the quadratic integrand.

use nalgebra::{Matrix3x2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constitutive::{random_f, relaxed_energy_of, BoundsReport, MaterialProps};
use crate::error::{Error, Result};

/// Gas loading: `−P(z) = b z + p0` with the base of the balloon at z = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    /// Specific buoyancy b (N/m³).
    pub buoyancy: f64,
    /// Differential pressure at the base p0 (Pa).
    pub constant_pressure: f64,
    /// Target volume ω0 for a closed system (m³).
    #[serde(default)]
    pub target_volume: Option<f64>,
    /// Design pair (b_d, ω0_d) for the lift consistency check.
    #[serde(default)]
    pub design: Option<(f64, f64)>,
}

impl LoadSpec {
    pub fn open(buoyancy: f64, constant_pressure: f64) -> Self {
        Self {
            buoyancy,
            constant_pressure,
            target_volume: None,
            design: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.buoyancy > 0.0 && self.buoyancy.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "buoyancy must be positive, got {}",
                self.buoyancy
            )));
        }
        if let Some(w) = self.target_volume {
            if !(w > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "target volume must be positive, got {w}"
                )));
            }
        }
        Ok(())
    }

    /// Relative mismatch `|b ω0 − b_d ω0_d| / (b_d ω0_d)` when both the
    /// target volume and the design pair are present.
    pub fn archimedes_mismatch(&self) -> Option<f64> {
        let (bd, wd) = self.design?;
        let w = self.target_volume?;
        let lift_d = bd * wd;
        Some((self.buoyancy * w - lift_d).abs() / lift_d.abs())
    }

    /// `½ b z² + p0 z`, the antiderivative of `−P` in z.
    #[inline]
    pub fn potential_density(&self, z: f64) -> f64 {
        (0.5 * self.buoyancy * z + self.constant_pressure) * z
    }

    #[inline]
    fn potential_density_dz(&self, z: f64) -> f64 {
        self.buoyancy * z + self.constant_pressure
    }
}

/// `adj₂ F = F_{,1} × F_{,2}`, the area-normal of the deformed tangent plane.
#[inline]
pub fn adj2(f: &Matrix3x2<f64>) -> Vector3<f64> {
    f.column(0).cross(&f.column(1))
}

/// Signed volume contribution of an outward-wound facet.
#[inline]
pub fn facet_volume_contribution(x: &[Vector3<f64>; 3]) -> f64 {
    x[0].dot(&x[1].cross(&x[2])) / 6.0
}

/// Gradient of [`facet_volume_contribution`] with respect to the vertices.
#[inline]
pub fn facet_volume_gradient(x: &[Vector3<f64>; 3]) -> [Vector3<f64>; 3] {
    [
        x[1].cross(&x[2]) / 6.0,
        x[2].cross(&x[0]) / 6.0,
        x[0].cross(&x[1]) / 6.0,
    ]
}

const EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

/// `k · a` with `a = ½(x1−x0)×(x2−x0)`, the projected area on the xy plane.
#[inline]
fn projected_area(x: &[Vector3<f64>; 3]) -> f64 {
    let e1 = x[1] - x[0];
    let e2 = x[2] - x[0];
    0.5 * (e1.x * e2.y - e1.y * e2.x)
}

/// Facet contribution to `E_P = −∫ (½bz² + p0 z) k·n dS`.
pub fn facet_pressure_potential(x: &[Vector3<f64>; 3], spec: &LoadSpec) -> f64 {
    let ka = projected_area(x);
    let avg = EDGES
        .iter()
        .map(|&(a, b)| spec.potential_density(0.5 * (x[a].z + x[b].z)))
        .sum::<f64>()
        / 3.0;
    -ka * avg
}

/// Gradient of [`facet_pressure_potential`] with respect to the vertices.
pub fn facet_pressure_gradient(x: &[Vector3<f64>; 3], spec: &LoadSpec) -> [Vector3<f64>; 3] {
    let ka = projected_area(x);
    let mut avg = 0.0;
    let mut davg = [0.0; 3];
    for &(a, b) in &EDGES {
        let zm = 0.5 * (x[a].z + x[b].z);
        avg += spec.potential_density(zm) / 3.0;
        let d = spec.potential_density_dz(zm) / 6.0;
        davg[a] += d;
        davg[b] += d;
    }
    // ∂(k·a)/∂x_i for the planar cross product.
    let dka = |i: usize| -> Vector3<f64> {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        0.5 * Vector3::new(x[j].y - x[k].y, x[k].x - x[j].x, 0.0)
    };
    let mut g = [Vector3::zeros(); 3];
    for i in 0..3 {
        g[i] = -(dka(i) * avg + Vector3::new(0.0, 0.0, ka * davg[i]));
    }
    g
}

/// Pressure density `g_P(x, A) = −(½ b z² + p0 z) k·A`.
pub fn pressure_density(x: &Vector3<f64>, area_normal: &Vector3<f64>, spec: &LoadSpec) -> f64 {
    -spec.potential_density(x.z) * area_normal.z
}

/// Sampled check of the pressure-density bound
/// `|g_P(x, adj₂F)| ≤ (½bR² + |p0|R)|F|²` for `|x| ≤ R`, and the
/// coercivity estimate `⅛τν₁|F|⁴ ≤ W_f* + f_P + ρ₁`.
pub fn verify_load_bounds(
    spec: &LoadSpec,
    mat: &MaterialProps,
    r_bound: f64,
    nu1: f64,
    samples: usize,
    seed: u64,
) -> Result<BoundsReport> {
    if !(r_bound > 0.0) {
        return Err(Error::InvalidInput(format!(
            "bound radius must be positive, got {r_bound}"
        )));
    }
    if !(nu1 > 0.0 && nu1 < mat.poisson) {
        return Err(Error::InvalidInput(format!(
            "nu1 must lie in (0, nu), got {nu1}"
        )));
    }
    let mut rep = BoundsReport {
        samples,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = spec.buoyancy;
    let p0 = spec.constant_pressure.abs();
    let c = 0.5 * b * r_bound * r_bound + p0 * r_bound;
    let tau = mat.tau();
    let nu = mat.poisson;
    let k = tau * (1.0 + nu) + 2.0 * b * r_bound * r_bound + 4.0 * p0 * r_bound;
    let rho1 = k * k / (8.0 * tau * (nu - nu1));
    for _ in 0..samples {
        let x = random_in_ball(&mut rng, r_bound);
        let f = random_f(&mut rng, 10.0);
        let fn2 = f.norm_squared();
        let gp = pressure_density(&x, &adj2(&f), spec);
        let tol = 1e-12 * (1.0 + c * fn2);
        rep.check(gp.abs() <= c * fn2 + tol, "pressure density bound", || {
            format!("x={:?} |F|^2={fn2:.6e} g_P={gp:.6e} bound={:.6e}", x.as_slice(), c * fn2)
        });
        let lhs = tau * nu1 / 8.0 * fn2 * fn2;
        let rhs = relaxed_energy_of(&f, mat) + gp + rho1;
        let tol = 1e-12 * (tau * fn2 * fn2 + rho1);
        rep.check(lhs <= rhs + tol, "coercivity estimate", || {
            format!("|F|^2={fn2:.6e} lhs={lhs:.6e} rhs={rhs:.6e}")
        });
    }
    Ok(rep)
}

/// Sampled check of `|adj₂A − adj₂B| ≤ 3(|A|+|B|)|A−B|`.
pub fn verify_adjugate_bound(samples: usize, seed: u64) -> BoundsReport {
    let mut rep = BoundsReport {
        samples,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let a = random_f(&mut rng, 10.0);
        let b = if rng.gen_bool(0.5) {
            a + random_f(&mut rng, 1e-3)
        } else {
            random_f(&mut rng, 10.0)
        };
        let lhs = (adj2(&a) - adj2(&b)).norm();
        let rhs = 3.0 * (a.norm() + b.norm()) * (a - b).norm();
        rep.check(lhs <= rhs * (1.0 + 1e-12), "adjugate Lipschitz", || {
            format!("lhs={lhs:.6e} rhs={rhs:.6e}")
        });
        let n2 = a.norm_squared();
        rep.check(adj2(&a).norm() <= n2 * (1.0 + 1e-12), "adjugate size", || {
            format!("|adj|={:.6e} |F|^2={n2:.6e}", adj2(&a).norm())
        });
    }
    rep
}

fn random_in_ball<R: Rng>(rng: &mut R, r: f64) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if v.norm_squared() <= 1.0 {
            return v * r;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn unit_cube() -> Vec<[Vector3<f64>; 3]> {
        let p = |x: f64, y: f64, z: f64| Vector3::new(x, y, z);
        let quads = [
            [p(0., 0., 0.), p(0., 1., 0.), p(1., 1., 0.), p(1., 0., 0.)], // z=0, normal -k
            [p(0., 0., 1.), p(1., 0., 1.), p(1., 1., 1.), p(0., 1., 1.)], // z=1, +k
            [p(0., 0., 0.), p(1., 0., 0.), p(1., 0., 1.), p(0., 0., 1.)], // y=0, -j
            [p(0., 1., 0.), p(0., 1., 1.), p(1., 1., 1.), p(1., 1., 0.)], // y=1, +j
            [p(0., 0., 0.), p(0., 0., 1.), p(0., 1., 1.), p(0., 1., 0.)], // x=0, -i
            [p(1., 0., 0.), p(1., 1., 0.), p(1., 1., 1.), p(1., 0., 1.)], // x=1, +i
        ];
        quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect()
    }

    #[test]
    fn adj2_of_flat_identity() {
        let f = Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        assert_eq!(adj2(&f), Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn cube_volume_and_pressure() {
        let spec = LoadSpec::open(0.068, 200.0);
        let tris = unit_cube();
        let v: f64 = tris.iter().map(facet_volume_contribution).sum();
        assert!((v - 1.0).abs() < 1e-12);
        let ep: f64 = tris.iter().map(|t| facet_pressure_potential(t, &spec)).sum();
        assert!((ep + (0.5 * 0.068 + 200.0)).abs() < 1e-12);
    }

    #[test]
    fn flipping_a_facet_changes_volume_by_twice_its_contribution() {
        let mut tris = unit_cube();
        let before: f64 = tris.iter().map(facet_volume_contribution).sum();
        let c = facet_volume_contribution(&tris[3]);
        tris[3].swap(1, 2);
        let after: f64 = tris.iter().map(facet_volume_contribution).sum();
        assert_relative_eq!(after - before, -2.0 * c, epsilon = 1e-15);
    }

    #[test]
    fn constant_height_facet() {
        let spec = LoadSpec::open(0.068, 200.0);
        let c = 7.5;
        let x = [
            Vector3::new(0.0, 0.0, c),
            Vector3::new(2.0, 0.0, c),
            Vector3::new(0.0, 3.0, c),
        ];
        let ka = 3.0;
        assert_relative_eq!(
            facet_pressure_potential(&x, &spec),
            -(0.5 * 0.068 * c * c + 200.0 * c) * ka,
            max_relative = 1e-14
        );
    }

    #[test]
    fn midpoint_rule_is_exact_for_quadratics() {
        // ∫_T z² dA on the triangle (0,0),(1,0),(0,1) with z = u + 2v + 1,
        // integrated exactly: z² = u²+4v²+1+4uv+2u+4v.
        // Monomial integrals: ∫u² = ∫v² = 1/12, ∫uv = 1/24, ∫u = ∫v = 1/6, ∫1 = 1/2.
        let exact = 1.0 / 12.0 + 4.0 / 12.0 + 0.5 + 4.0 / 24.0 + 2.0 / 6.0 + 4.0 / 6.0;
        let z = |u: f64, v: f64| u + 2.0 * v + 1.0;
        let mids = [(0.5, 0.0), (0.5, 0.5), (0.0, 0.5)];
        let rule = 0.5 * mids.iter().map(|&(u, v)| z(u, v).powi(2)).sum::<f64>() / 3.0;
        assert!((rule - exact).abs() < 1e-15);
    }

    #[test]
    fn facet_gradients_match_finite_differences() {
        let spec = LoadSpec::open(0.068, 200.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x: [Vector3<f64>; 3] = std::array::from_fn(|_| random_in_ball(&mut rng, 30.0));
            let gp = facet_pressure_gradient(&x, &spec);
            let gv = facet_volume_gradient(&x);
            let scale_p = gp.iter().map(|g| g.amax()).fold(0.0, f64::max);
            let scale_v = gv.iter().map(|g| g.amax()).fold(0.0, f64::max);
            for i in 0..3 {
                for c in 0..3 {
                    let h = 1e-5;
                    let mut xp = x;
                    xp[i][c] += h;
                    let mut xm = x;
                    xm[i][c] -= h;
                    let fdp = (facet_pressure_potential(&xp, &spec) - facet_pressure_potential(&xm, &spec)) / (2.0 * h);
                    let fdv = (facet_volume_contribution(&xp) - facet_volume_contribution(&xm)) / (2.0 * h);
                    assert!((fdp - gp[i][c]).abs() < 1e-6 * scale_p);
                    assert!((fdv - gv[i][c]).abs() < 1e-6 * scale_v);
                }
            }
        }
    }

    #[test]
    fn load_bounds_hold() {
        let spec = LoadSpec::open(0.068, 200.0);
        let mat = MaterialProps::polyethylene_32um();
        let rep = verify_load_bounds(&spec, &mat, 60.0, mat.poisson / 2.0, 20_000, 3).unwrap();
        assert!(rep.passed(), "{:?}", rep.violations);
        // x = 0 gives zero pressure density.
        let f = Matrix3x2::new(1.0, 0.2, 0.3, 1.0, 0.1, 0.0);
        assert_eq!(pressure_density(&Vector3::zeros(), &adj2(&f), &spec), 0.0);
    }

    #[test]
    fn adjugate_bound_holds() {
        assert!(verify_adjugate_bound(20_000, 4).passed());
    }

    #[test]
    fn archimedes_mismatch() {
        let mut s = LoadSpec::open(0.068, 0.0);
        assert!(s.archimedes_mismatch().is_none());
        s.target_volume = Some(137_023.0);
        s.design = Some((0.068, 137_023.0));
        assert!(s.archimedes_mismatch().unwrap() < 1e-15);
        s.buoyancy = 0.034;
        assert_relative_eq!(s.archimedes_mismatch().unwrap(), 0.5, max_relative = 1e-12);
    }
}
