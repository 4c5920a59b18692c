//! Sampled property suites gathered into one report.

use nalgebra::{DVector, Matrix2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constitutive::{principal_of_symmetric, relaxed_energy, verify_energy_bounds, BoundsReport, MaterialProps};
use crate::error::Result;
use crate::gore_mesh::DeformationState;
use crate::loads::{
    facet_pressure_potential, facet_volume_contribution, verify_adjugate_bound, verify_load_bounds, LoadSpec,
};
use crate::pipeline::{MeshConfig, Prepared, Preset, RunConfig};
use crate::solver::{five_point_audit, Problem};

/// One named suite of the property report.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteEntry {
    pub name: String,
    pub checks: usize,
    pub violations: usize,
    /// First counterexamples or the measured quantity.
    pub detail: String,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    fn from_bounds(name: &str, r: &BoundsReport) -> Self {
        Self {
            name: name.into(),
            checks: r.checks,
            violations: r.violation_count,
            detail: r
                .violations
                .iter()
                .take(3)
                .map(|v| format!("{}: {}", v.check, v.detail))
                .collect::<Vec<_>>()
                .join("; "),
        }
    }

    fn single(name: &str, ok: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            checks: 1,
            violations: usize::from(!ok),
            detail,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub samples: usize,
    pub seed: u64,
    pub entries: Vec<SuiteEntry>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(SuiteEntry::passed)
    }

    pub fn entry(&self, name: &str) -> Option<&SuiteEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// The unit cube `[0,1]³` as 12 outward-oriented triangles.
pub fn unit_cube() -> Vec<[Vector3<f64>; 3]> {
    let p = Vector3::new;
    let quads = [
        [p(0., 0., 0.), p(0., 1., 0.), p(1., 1., 0.), p(1., 0., 0.)],
        [p(0., 0., 1.), p(1., 0., 1.), p(1., 1., 1.), p(0., 1., 1.)],
        [p(0., 0., 0.), p(1., 0., 0.), p(1., 0., 1.), p(0., 0., 1.)],
        [p(0., 1., 0.), p(0., 1., 1.), p(1., 1., 1.), p(1., 1., 0.)],
        [p(0., 0., 0.), p(0., 0., 1.), p(0., 1., 1.), p(0., 1., 0.)],
        [p(1., 0., 0.), p(1., 1., 0.), p(1., 1., 1.), p(1., 0., 1.)],
    ];
    quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect()
}

/// Unit icosphere with `20·4^k` outward triangles.
pub fn icosphere(subdivisions: usize) -> Vec<[Vector3<f64>; 3]> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let v: Vec<Vector3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let faces = [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let mut tris: Vec<[Vector3<f64>; 3]> = faces.iter().map(|f| [v[f[0]], v[f[1]], v[f[2]]]).collect();
    for _ in 0..subdivisions {
        tris = tris
            .iter()
            .flat_map(|[a, b, c]| {
                let ab = (a + b).normalize();
                let bc = (b + c).normalize();
                let ca = (c + a).normalize();
                [[*a, ab, ca], [ab, *b, bc], [ca, bc, *c], [ab, bc, ca]]
            })
            .collect();
    }
    tris
}

/// Volume as the sum of `⅓ · area · plane distance` over facets.
pub fn pyramid_volume(tris: &[[Vector3<f64>; 3]]) -> f64 {
    tris.iter()
        .map(|t| {
            let n = (t[1] - t[0]).cross(&(t[2] - t[0]));
            let area = 0.5 * n.norm();
            let height = ((t[0] + t[1] + t[2]) / 3.0).dot(&n.normalize());
            area * height / 3.0
        })
        .sum()
}

/// `1 − V/V_sphere` for the unit icosphere with `20·4^k` facets.
pub fn icosphere_deficit(subdivisions: usize) -> f64 {
    let v: f64 = icosphere(subdivisions).iter().map(facet_volume_contribution).sum();
    1.0 - v / (4.0 / 3.0 * std::f64::consts::PI)
}

fn random_strain<R: Rng>(rng: &mut R, size: f64) -> Matrix2<f64> {
    let (a, b, c) = (
        rng.gen_range(-size..size),
        rng.gen_range(-size..size),
        rng.gen_range(-size..size),
    );
    Matrix2::new(a, c, c, b)
}

fn relaxed_of_strain(g: &Matrix2<f64>, mat: &MaterialProps) -> f64 {
    let p = principal_of_symmetric(g);
    relaxed_energy(p.d1, p.d2, mat).w_star
}

/// Midpoint convexity of `W_f*` as a function of the strain tensor.
pub fn verify_relaxed_convexity(mat: &MaterialProps, samples: usize, seed: u64) -> BoundsReport {
    let mut rep = BoundsReport {
        samples,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let size = 10f64.powf(rng.gen_range(-4.0..0.0));
        let (a, b) = (random_strain(&mut rng, size), random_strain(&mut rng, size));
        let (wa, wb) = (relaxed_of_strain(&a, mat), relaxed_of_strain(&b, mat));
        let wm = relaxed_of_strain(&(0.5 * (a + b)), mat);
        let tol = 1e-12 * mat.tau() * size * size;
        rep.check(wm <= 0.5 * (wa + wb) + tol, "midpoint convexity", || {
            format!("W(mid)={wm:.6e} mean={:.6e}", 0.5 * (wa + wb))
        });
    }
    rep
}

/// Energy and resultants agree on both sides of every branch boundary.
pub fn verify_branch_continuity(mat: &MaterialProps, samples: usize, seed: u64) -> BoundsReport {
    let mut rep = BoundsReport {
        samples,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nu = mat.poisson;
    let eta = 1e-9;
    for _ in 0..samples {
        let r: f64 = rng.gen_range(1e-4..0.5);
        // (point on the boundary, unit normal across it)
        let (p, n) = match rng.gen_range(0..4) {
            0 => ((-nu * r, r), (1.0, nu)),
            1 => ((r, -nu * r), (nu, 1.0)),
            2 => ((0.0, -r), (1.0, 0.0)),
            _ => ((-r, 0.0), (0.0, 1.0)),
        };
        let len = f64::hypot(n.0, n.1);
        let side = |s: f64| relaxed_energy(p.0 + s * eta * n.0 / len, p.1 + s * eta * n.1 / len, mat);
        let (a, b) = (side(-1.0), side(1.0));
        // Jumps allowed by the resultants' size over a 2η step.
        let tol_w = 4.0 * eta * mat.tau() * (r + eta);
        let tol_mu = 4.0 * eta * mat.tau();
        if a.region == b.region {
            continue;
        }
        rep.check((a.w_star - b.w_star).abs() <= tol_w, "energy continuity", || {
            format!("boundary ({:.4e}, {:.4e}) W {:.6e} vs {:.6e}", p.0, p.1, a.w_star, b.w_star)
        });
        rep.check(
            (a.mu1 - b.mu1).abs() <= tol_mu && (a.mu2 - b.mu2).abs() <= tol_mu,
            "resultant continuity",
            || format!("boundary ({:.4e}, {:.4e}) mu ({:.4e}, {:.4e}) vs ({:.4e}, {:.4e})", p.0, p.1, a.mu1, a.mu2, b.mu1, b.mu2),
        );
    }
    rep
}

/// Dilates the whole mesh about the origin by `scale`.
pub fn dilated(state: &DeformationState, scale: f64) -> DeformationState {
    let mut s = state.clone();
    s.positions.iter_mut().for_each(|p| *p *= scale);
    s
}

/// Adds uniform noise of half-width `noise` (m) to every free variable.
pub fn jittered<R: Rng>(problem: &Problem, state: &DeformationState, noise: f64, rng: &mut R) -> DeformationState {
    let q = problem.dofs(state);
    let dq = DVector::from_fn(q.len(), |_, _| rng.gen_range(-noise..noise));
    problem.state(&(q + dq))
}

/// Worst audit error over `count` random admissible states of a small
/// closed pumpkin with tendons.
pub fn random_state_audit(count: usize, seed: u64) -> Result<Vec<f64>> {
    let cfg = RunConfig {
        mesh: MeshConfig {
            strips: 3,
            tris_per_strip: 20,
            ..Default::default()
        },
        ..RunConfig::preset(Preset::PumpkinTendons).closed(1.5e5)
    };
    let prepared = Prepared::new(&cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let base = dilated(&prepared.init, rng.gen_range(1.002..1.01));
        let p = Problem::new(
            &prepared.mesh,
            prepared.material,
            prepared.loads,
            prepared.constraints.clone(),
            base.clone(),
        )?;
        let st = jittered(&p, &base, 1e-3, &mut rng);
        out.push(five_point_audit(&p, &st, 1e-5)?.max_relative_error);
    }
    Ok(out)
}

/// Runs every sampled suite with `samples` draws each.
pub fn property_suite(mat: &MaterialProps, samples: usize, seed: u64) -> Result<SuiteReport> {
    mat.validate()?;
    let mut entries = Vec::new();
    entries.push(SuiteEntry::from_bounds(
        "energy bounds and relaxation sandwich",
        &verify_energy_bounds(mat, samples, seed),
    ));
    entries.push(SuiteEntry::from_bounds("adjugate Lipschitz bound", &verify_adjugate_bound(samples, seed + 1)));
    let spec = LoadSpec::open(0.068, 200.0);
    entries.push(SuiteEntry::from_bounds(
        "pressure density and coercivity bounds",
        &verify_load_bounds(&spec, mat, 100.0, 0.5 * mat.poisson, samples, seed + 2)?,
    ));
    entries.push(SuiteEntry::from_bounds(
        "relaxed energy midpoint convexity",
        &verify_relaxed_convexity(mat, samples, seed + 3),
    ));
    entries.push(SuiteEntry::from_bounds(
        "branch boundary continuity",
        &verify_branch_continuity(mat, samples, seed + 4),
    ));

    let audits = random_state_audit(20, seed + 5)?;
    let worst = audits.iter().copied().fold(0.0, f64::max);
    entries.push(SuiteEntry {
        name: "gradient audit on random states".into(),
        checks: audits.len(),
        violations: audits.iter().filter(|&&e| !(e < 1e-6)).count(),
        detail: format!("worst relative error {worst:.3e}"),
    });

    let cube = unit_cube();
    let v: f64 = cube.iter().map(facet_volume_contribution).sum();
    let ep: f64 = cube.iter().map(|t| facet_pressure_potential(t, &spec)).sum();
    let ep_exact = -(0.5 * spec.buoyancy + spec.constant_pressure);
    entries.push(SuiteEntry::single(
        "unit cube volume and pressure potential",
        (v - 1.0).abs() <= 1e-12 && (ep - ep_exact).abs() <= 1e-12,
        format!("V={v:.15} E_P={ep:.15}"),
    ));

    let sphere = icosphere(3);
    let vs: f64 = sphere.iter().map(facet_volume_contribution).sum();
    let vp = pyramid_volume(&sphere);
    entries.push(SuiteEntry::single(
        "icosphere volume against pyramid decomposition",
        sphere.len() == 1280 && (vs - vp).abs() <= 1e-12 * vp,
        format!("{} facets, V={vs:.15} pyramids={vp:.15}", sphere.len()),
    ));
    let deficits: Vec<f64> = (2..=4).map(icosphere_deficit).collect();
    entries.push(SuiteEntry::single(
        "icosphere convergence to the sphere",
        deficits.windows(2).all(|w| w[1] < 0.3 * w[0]) && deficits[2] < 5e-3,
        format!(
            "relative deficit {:.4e} at 320, {:.4e} at 1280, {:.4e} at 5120 facets",
            deficits[0], deficits[1], deficits[2]
        ),
    ));
    Ok(SuiteReport { samples, seed, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_is_closed_and_outward() {
        let s = icosphere(2);
        assert_eq!(s.len(), 320);
        for t in &s {
            let n = (t[1] - t[0]).cross(&(t[2] - t[0]));
            assert!(n.dot(&(t[0] + t[1] + t[2])) > 0.0);
        }
        // Translating a closed surface leaves its volume unchanged.
        let shift = Vector3::new(3.0, -2.0, 5.0);
        let v0: f64 = s.iter().map(facet_volume_contribution).sum();
        let v1: f64 = s.iter().map(|t| facet_volume_contribution(&[t[0] + shift, t[1] + shift, t[2] + shift])).sum();
        assert!((v1 - v0).abs() < 1e-12 * v0);
    }

    #[test]
    fn icosphere_volume_converges_from_below() {
        let exact = 4.0 / 3.0 * std::f64::consts::PI;
        let errs: Vec<f64> = (0..4)
            .map(|k| exact - icosphere(k).iter().map(facet_volume_contribution).sum::<f64>())
            .collect();
        assert!(errs.iter().all(|&e| e > 0.0));
        // Second order in the edge length.
        assert!(errs.windows(2).all(|w| w[1] < 0.4 * w[0]), "{errs:?}");
    }

    #[test]
    fn convexity_sweep_detects_a_concave_energy() {
        // Convex in strain, so a concave perturbation of the energy must fail.
        let mat = MaterialProps::polyethylene_32um();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut bad = 0;
        for _ in 0..1000 {
            let (a, b) = (random_strain(&mut rng, 0.1), random_strain(&mut rng, 0.1));
            let w = |g: &Matrix2<f64>| -relaxed_of_strain(g, &mat);
            if w(&(0.5 * (a + b))) > 0.5 * (w(&a) + w(&b)) + 1e-12 {
                bad += 1;
            }
        }
        assert!(bad > 0);
    }

    #[test]
    fn convexity_and_continuity_hold() {
        let mat = MaterialProps::polyethylene_32um();
        assert!(verify_relaxed_convexity(&mat, 20_000, 9).passed());
        let c = verify_branch_continuity(&mat, 20_000, 10);
        assert!(c.passed() && c.checks > 0);
    }
}
