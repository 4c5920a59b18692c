//! Isotropic linear-elastic membrane film and its tension-field relaxation.
//!
//! Strains are Cauchy–Green principal strains `δ_i = ½(λ_i² − 1)` of
//! `G = ½(FᵀF − I)` for a 3×2 membrane deformation gradient `F`. The film
//! energy density is the Koiter membrane term for a flat natural state;
//! the relaxed density replaces compressive states by the slack or
//! uniaxial (wrinkled) branch so the stress resultants never go negative.

use nalgebra::{Matrix2, Matrix3x2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Film thickness, Young's modulus and Poisson ratio (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialProps {
    /// Film thickness t (m).
    pub thickness: f64,
    /// Young's modulus E (Pa).
    pub youngs: f64,
    /// Poisson ratio ν. Values above 0.5 are allowed for thin polyethylene.
    pub poisson: f64,
}

impl MaterialProps {
    pub fn new(thickness: f64, youngs: f64, poisson: f64) -> Result<Self> {
        let m = Self {
            thickness,
            youngs,
            poisson,
        };
        m.validate()?;
        Ok(m)
    }

    /// 32 µm polyethylene at room temperature.
    pub fn polyethylene_32um() -> Self {
        Self {
            thickness: 32e-6,
            youngs: 404.2e6,
            poisson: 0.825,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.thickness > 0.0 && self.thickness.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "film thickness must be positive, got {}",
                self.thickness
            )));
        }
        if !(self.youngs > 0.0 && self.youngs.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "Young's modulus must be positive, got {}",
                self.youngs
            )));
        }
        if !(self.poisson > 0.0 && self.poisson < 1.0) {
            return Err(Error::InvalidInput(format!(
                "Poisson ratio must satisfy 0 < nu < 1, got {}",
                self.poisson
            )));
        }
        Ok(())
    }

    /// Membrane stiffness τ = tE/(1−ν²) (N/m).
    pub fn tau(&self) -> f64 {
        self.thickness * self.youngs / (1.0 - self.poisson * self.poisson)
    }

    /// Uniaxial membrane stiffness tE (N/m).
    pub fn te(&self) -> f64 {
        self.thickness * self.youngs
    }

    /// Lamé constants (λ, μ) of the bulk material.
    pub fn lame(&self) -> (f64, f64) {
        let (e, nu) = (self.youngs, self.poisson);
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let mu = e / (2.0 * (1.0 + nu));
        (lambda, mu)
    }

    /// Maximum gap between the film energy and its relaxation, ¼τ(1+ν).
    pub fn relaxation_gap(&self) -> f64 {
        0.25 * self.tau() * (1.0 + self.poisson)
    }

    pub fn with_thickness_scale(mut self, k: f64) -> Self {
        self.thickness *= k;
        self
    }
}

/// Pipkin's partition of the membrane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Slack,
    Wrinkled,
    Tense,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Slack => "slack",
            Region::Wrinkled => "wrinkled",
            Region::Tense => "tense",
        }
    }
}

/// Eigen-decomposition of `G`, ordered so that `d1 >= d2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalStrains {
    pub d1: f64,
    pub d2: f64,
    pub n1: Vector2<f64>,
    pub n2: Vector2<f64>,
}

/// Green strain `½(FᵀF − I)`.
pub fn green_strain(f: &Matrix3x2<f64>) -> Matrix2<f64> {
    0.5 * (f.transpose() * f - Matrix2::identity())
}

/// Principal strains and directions of a symmetric 2×2 strain.
pub fn principal_of_symmetric(g: &Matrix2<f64>) -> PrincipalStrains {
    let a = g[(0, 0)];
    let c = g[(1, 1)];
    let b = 0.5 * (g[(0, 1)] + g[(1, 0)]);
    let mean = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    let radius = half_diff.hypot(b);
    // atan2(0, 0) = 0 gives n1 = (1, 0) on ties.
    let phi = 0.5 * (2.0 * b).atan2(a - c);
    let n1 = Vector2::new(phi.cos(), phi.sin());
    let n2 = Vector2::new(-n1.y, n1.x);
    PrincipalStrains {
        d1: mean + radius,
        d2: mean - radius,
        n1,
        n2,
    }
}

/// Principal Cauchy–Green strains of a membrane deformation gradient.
pub fn principal_strains(f: &Matrix3x2<f64>) -> PrincipalStrains {
    principal_of_symmetric(&green_strain(f))
}

/// Unrelaxed film energy density W_f(δ1, δ2) (J/m²).
pub fn film_energy(d1: f64, d2: f64, mat: &MaterialProps) -> f64 {
    let nu = mat.poisson;
    0.5 * mat.tau() * (d1 * d1 + d2 * d2 + 2.0 * nu * d1 * d2)
}

/// The same density written in terms of the Cauchy strains λ_i².
pub fn film_energy_stretch(l1_sq: f64, l2_sq: f64, mat: &MaterialProps) -> f64 {
    let nu = mat.poisson;
    mat.tau() / 8.0
        * (l1_sq * l1_sq + l2_sq * l2_sq + 2.0 * nu * l1_sq * l2_sq
            - 2.0 * (1.0 + nu) * (l1_sq + l2_sq)
            + 2.0 * (1.0 + nu))
}

/// Relaxed energy density together with the relaxed principal resultants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxedResponse {
    pub w_star: f64,
    /// Relaxed resultant along the first principal direction (N/m).
    pub mu1: f64,
    /// Relaxed resultant along the second principal direction (N/m).
    pub mu2: f64,
    pub region: Region,
    /// Wrinkling strain magnitude; zero off the wrinkled branch.
    pub beta_sq: f64,
}

/// Which branch of the relaxed density applies to `(d1, d2)`.
///
/// Tests follow the branch order slack, `μ1 ≤ 0 ∧ δ2 ≥ 0`,
/// `μ2 ≤ 0 ∧ δ1 ≥ 0`, tense; first match wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    Slack,
    UniaxialSecond,
    UniaxialFirst,
    Tense,
}

fn branch(d1: f64, d2: f64, nu: f64) -> Branch {
    if d1 < 0.0 && d2 < 0.0 {
        return Branch::Slack;
    }
    let m1 = d1 + nu * d2;
    let m2 = d2 + nu * d1;
    if m1 <= 0.0 && d2 >= 0.0 {
        Branch::UniaxialSecond
    } else if m2 <= 0.0 && d1 >= 0.0 {
        Branch::UniaxialFirst
    } else {
        Branch::Tense
    }
}

/// Relaxed density W_f*(δ1, δ2). The inputs may come in either order;
/// the returned `mu1`/`mu2` refer to the inputs' order.
pub fn relaxed_energy(d1: f64, d2: f64, mat: &MaterialProps) -> RelaxedResponse {
    let nu = mat.poisson;
    let tau = mat.tau();
    let te = mat.te();
    match branch(d1, d2, nu) {
        Branch::Slack => RelaxedResponse {
            w_star: 0.0,
            mu1: 0.0,
            mu2: 0.0,
            region: Region::Slack,
            beta_sq: 0.0,
        },
        Branch::UniaxialSecond => RelaxedResponse {
            w_star: 0.5 * te * d2 * d2,
            mu1: 0.0,
            mu2: te * d2,
            region: Region::Wrinkled,
            beta_sq: -(d1 + nu * d2),
        },
        Branch::UniaxialFirst => RelaxedResponse {
            w_star: 0.5 * te * d1 * d1,
            mu1: te * d1,
            mu2: 0.0,
            region: Region::Wrinkled,
            beta_sq: -(d2 + nu * d1),
        },
        Branch::Tense => RelaxedResponse {
            w_star: film_energy(d1, d2, mat),
            mu1: tau * (d1 + nu * d2),
            mu2: tau * (d2 + nu * d1),
            region: Region::Tense,
            beta_sq: 0.0,
        },
    }
}

/// Relaxed second Piola–Kirchhoff resultant tensor S* for a strain G.
pub fn relaxed_stress(g: &Matrix2<f64>, mat: &MaterialProps) -> Matrix2<f64> {
    let p = principal_of_symmetric(g);
    let r = relaxed_energy(p.d1, p.d2, mat);
    match r.region {
        Region::Tense => {
            // S = τ[(1−ν)G + ν tr(G) I], identical to the spectral form.
            let nu = mat.poisson;
            mat.tau() * ((1.0 - nu) * g + nu * g.trace() * Matrix2::identity())
        }
        _ => r.mu1 * p.n1 * p.n1.transpose() + r.mu2 * p.n2 * p.n2.transpose(),
    }
}

/// Relaxed density and its derivative with respect to F, `∂W*/∂F = F S*`.
pub fn relaxed_density(f: &Matrix3x2<f64>, mat: &MaterialProps) -> (f64, Matrix3x2<f64>) {
    let g = green_strain(f);
    let p = principal_of_symmetric(&g);
    let r = relaxed_energy(p.d1, p.d2, mat);
    match r.region {
        Region::Slack => (0.0, Matrix3x2::zeros()),
        // Tensor form: principal values lose precision near equal stretches.
        Region::Tense => film_density(f, mat),
        Region::Wrinkled => (r.w_star, f * (r.mu1 * p.n1 * p.n1.transpose() + r.mu2 * p.n2 * p.n2.transpose())),
    }
}

/// Unrelaxed density and its derivative `F S` with `S = τ((1−ν)E + ν tr E I)`.
pub fn film_density(f: &Matrix3x2<f64>, mat: &MaterialProps) -> (f64, Matrix3x2<f64>) {
    let g = green_strain(f);
    let nu = mat.poisson;
    let s = mat.tau() * ((1.0 - nu) * g + nu * g.trace() * Matrix2::identity());
    (0.5 * (s.transpose() * g).trace(), f * s)
}

/// Analytic gradient `∂W*/∂F` (3×2).
pub fn relaxed_energy_gradient(f: &Matrix3x2<f64>, mat: &MaterialProps) -> Matrix3x2<f64> {
    relaxed_density(f, mat).1
}

/// Unrelaxed density as a function of F, used by the bound oracles.
pub fn film_energy_of(f: &Matrix3x2<f64>, mat: &MaterialProps) -> f64 {
    let p = principal_strains(f);
    film_energy(p.d1, p.d2, mat)
}

/// Relaxed density as a function of F.
pub fn relaxed_energy_of(f: &Matrix3x2<f64>, mat: &MaterialProps) -> f64 {
    let p = principal_strains(f);
    relaxed_energy(p.d1, p.d2, mat).w_star
}

/// One sampled counterexample from a bound sweep.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub check: String,
    pub detail: String,
}

/// Outcome of a sampled inequality sweep.
#[derive(Debug, Clone, Default, Serialize)]
pub struct BoundsReport {
    pub samples: usize,
    pub checks: usize,
    pub violation_count: usize,
    /// First few counterexamples.
    pub violations: Vec<Violation>,
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }

    pub(crate) fn check(&mut self, ok: bool, name: &str, detail: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violation_count += 1;
            if self.violations.len() < 16 {
                self.violations.push(Violation {
                    check: name.to_string(),
                    detail: detail(),
                });
            }
        }
    }

    pub fn merge(&mut self, other: BoundsReport) {
        self.samples += other.samples;
        self.checks += other.checks;
        self.violation_count += other.violation_count;
        self.violations.extend(other.violations);
        self.violations.truncate(16);
    }
}

/// Random 3×2 matrix with Frobenius norm uniform in `[0, max_norm]`.
pub(crate) fn random_f<R: Rng>(rng: &mut R, max_norm: f64) -> Matrix3x2<f64> {
    let m = Matrix3x2::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    let n = m.norm();
    if n == 0.0 {
        return m;
    }
    m * (rng.gen_range(0.0..max_norm) / n)
}

/// Sampled check of the film-energy bounds, the relaxation sandwich
/// `W_f − ¼τ(1+ν) ≤ W_f* ≤ W_f`, non-negative relaxed resultants, and the
/// quartic/quadratic comparison lemma used by the coercivity argument.
pub fn verify_energy_bounds(mat: &MaterialProps, samples: usize, seed: u64) -> BoundsReport {
    let mut rep = BoundsReport {
        samples,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = mat.tau();
    let nu = mat.poisson;
    let gap = mat.relaxation_gap();
    for _ in 0..samples {
        let f = random_f(&mut rng, 10.0);
        let fn2 = f.norm_squared();
        let p = principal_strains(&f);
        let wf = film_energy(p.d1, p.d2, mat);
        let r = relaxed_energy(p.d1, p.d2, mat);
        let scale = tau * (1.0 + fn2 * fn2);
        let tol = 1e-12 * scale;

        let lower = tau / 8.0 * (nu * fn2 * fn2 - 2.0 * (1.0 + nu) * fn2 + 2.0 * (1.0 + nu));
        let upper = tau / 8.0 * fn2 * fn2 + gap;
        rep.check(lower <= wf + tol, "W_f lower bound", || {
            format!("|F|^2={fn2:.6e} lower={lower:.6e} W_f={wf:.6e}")
        });
        rep.check(wf <= upper + tol, "W_f upper bound", || {
            format!("|F|^2={fn2:.6e} W_f={wf:.6e} upper={upper:.6e}")
        });
        rep.check(r.w_star >= -tol, "W_f* >= 0", || format!("W*={:.6e}", r.w_star));
        rep.check(r.w_star <= wf + tol, "W_f* <= W_f", || {
            format!("W*={:.6e} W_f={wf:.6e}", r.w_star)
        });
        rep.check(wf - gap <= r.w_star + tol, "W_f - gap <= W_f*", || {
            format!("W_f={wf:.6e} W*={:.6e} gap={gap:.6e}", r.w_star)
        });
        rep.check(
            r.mu1 >= 0.0 && r.mu2 >= 0.0,
            "relaxed resultants non-negative",
            || format!("mu1={:.6e} mu2={:.6e}", r.mu1, r.mu2),
        );

        // Comparison lemma with random constants 0 < α < κ1 < γ.
        let k1: f64 = rng.gen_range(0.1..10.0);
        let k2: f64 = rng.gen_range(0.1..10.0);
        let alpha = k1 * rng.gen_range(0.01..0.99);
        let gamma = k1 * rng.gen_range(1.01..5.0);
        let rho = k2 * k2 / (4.0 * (k1 - alpha));
        let u2: f64 = rng.gen_range(0.0..100.0);
        let mid = k1 * u2 * u2 - k2 * u2;
        let ltol = 1e-12 * (1.0 + k1 * u2 * u2 + rho);
        rep.check(alpha * u2 * u2 - rho <= mid + ltol, "lemma lower", || {
            format!("k1={k1} k2={k2} alpha={alpha} |u|^2={u2}")
        });
        rep.check(mid <= gamma * u2 * u2 + ltol, "lemma upper", || {
            format!("k1={k1} k2={k2} gamma={gamma} |u|^2={u2}")
        });
        let rho2 = k2 * k2 / (4.0 * (gamma - k1));
        rep.check(
            k1 * u2 * u2 + k2 * u2 <= gamma * u2 * u2 + rho2 + ltol,
            "lemma part ii",
            || format!("k1={k1} k2={k2} gamma={gamma} |u|^2={u2}"),
        );
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;

    fn mat() -> MaterialProps {
        MaterialProps::polyethylene_32um()
    }

    fn embed(l1: f64, l2: f64) -> Matrix3x2<f64> {
        Matrix3x2::new(l1, 0.0, 0.0, l2, 0.0, 0.0)
    }

    #[test]
    fn tau_matches_definition() {
        let m = mat();
        assert_relative_eq!(m.tau(), 32e-6 * 404.2e6 / (1.0 - 0.825 * 0.825), max_relative = 1e-15);
        let (l, mu) = m.lame();
        // E = μ(3λ+2μ)/(λ+μ), ν = λ/(2(λ+μ))
        assert_relative_eq!(mu * (3.0 * l + 2.0 * mu) / (l + mu), m.youngs, max_relative = 1e-12);
        assert_relative_eq!(l / (2.0 * (l + mu)), m.poisson, max_relative = 1e-12);
    }

    #[test]
    fn rejects_poisson_out_of_range() {
        assert!(MaterialProps::new(32e-6, 404.2e6, 1.0).is_err());
        assert!(MaterialProps::new(32e-6, 404.2e6, 0.0).is_err());
        assert!(MaterialProps::new(-1.0, 404.2e6, 0.3).is_err());
        assert!(MaterialProps::new(32e-6, 404.2e6, 0.825).is_ok());
    }

    #[test]
    fn identity_has_zero_strain() {
        let p = principal_strains(&embed(1.0, 1.0));
        assert_eq!((p.d1, p.d2), (0.0, 0.0));
        assert_eq!(p.n1, Vector2::new(1.0, 0.0));
    }

    #[test]
    fn diagonal_stretch_strains() {
        let p = principal_strains(&embed(1.3, 0.9));
        assert_relative_eq!(p.d1, 0.5 * (1.3f64.powi(2) - 1.0), epsilon = 1e-15);
        assert_relative_eq!(p.d2, 0.5 * (0.9f64.powi(2) - 1.0), epsilon = 1e-15);
    }

    #[test]
    fn eigenvalues_match_characteristic_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let f = random_f(&mut rng, 3.0);
            let g = green_strain(&f);
            // Roots of x² − tr x + det = 0, computed independently.
            let tr = g.trace();
            let det = g.determinant();
            let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
            let (r1, r2) = (0.5 * (tr + disc), 0.5 * (tr - disc));
            let p = principal_of_symmetric(&g);
            // The discriminant loses digits near ties, so allow its rounding.
            let tol = 1e-12 * (1.0 + g.norm()) + (1e-15 * (tr * tr + 4.0 * det.abs())).sqrt();
            assert!((p.d1 - r1).abs() < tol);
            assert!((p.d2 - r2).abs() < tol);
            assert!(p.d1 >= p.d2);
            assert!((p.n1.dot(&p.n2)).abs() < 1e-14);
            assert!((g * p.n1 - p.d1 * p.n1).norm() < 1e-12 * (1.0 + g.norm()));
        }
    }

    #[test]
    fn film_energy_at_full_compression_equals_gap() {
        let m = mat();
        assert_relative_eq!(film_energy(-0.5, -0.5, &m), m.relaxation_gap(), max_relative = 1e-14);
        assert_eq!(film_energy(0.0, 0.0, &m), 0.0);
    }

    #[test]
    fn strain_and_stretch_forms_agree() {
        let m = mat();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let d1: f64 = rng.gen_range(-0.5..2.0);
            let d2: f64 = rng.gen_range(-0.5..2.0);
            let a = film_energy(d1, d2, &m);
            let b = film_energy_stretch(1.0 + 2.0 * d1, 1.0 + 2.0 * d2, &m);
            assert!((a - b).abs() <= 1e-12 * a.abs().max(m.tau() * 1e-12));
        }
    }

    #[test]
    fn slack_corner() {
        let m = mat();
        let r = relaxed_energy(-0.5, -0.5, &m);
        assert_eq!(r.w_star, 0.0);
        assert_eq!(r.region, Region::Slack);
        assert_relative_eq!(film_energy(-0.5, -0.5, &m) - r.w_star, 0.25 * m.tau() * 1.825, max_relative = 1e-14);
    }

    #[test]
    fn wrinkled_uniaxial_branch() {
        let m = mat();
        let e = 0.01;
        let r = relaxed_energy(e, -m.poisson * e, &m);
        assert_relative_eq!(r.w_star, 0.5 * m.te() * e * e, max_relative = 1e-12);
        assert_eq!(r.region, Region::Wrinkled);
        assert_relative_eq!(r.mu1, m.te() * e, max_relative = 1e-12);
        assert_eq!(r.mu2, 0.0);
        // deeper into the wrinkled region
        let r = relaxed_energy(e, -0.02, &m);
        assert_eq!(r.region, Region::Wrinkled);
        assert_relative_eq!(r.beta_sq, -(-0.02 + m.poisson * e), max_relative = 1e-12);
        // G* = G + β² n2⊗n2 has principal strains {δ, −νδ}
        assert_relative_eq!(-0.02 + r.beta_sq, -m.poisson * e, max_relative = 1e-12);
    }

    #[test]
    fn tense_branch_is_full_energy() {
        let m = mat();
        let r = relaxed_energy(0.01, 0.005, &m);
        assert_eq!(r.region, Region::Tense);
        assert_relative_eq!(r.w_star, film_energy(0.01, 0.005, &m), max_relative = 1e-15);
        assert!(r.mu1 > 0.0 && r.mu2 > 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = mat();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let f = random_f(&mut rng, 2.5);
            let g = relaxed_energy_gradient(&f, &m);
            let h = 1e-6 * (1.0 + f.norm());
            let mut fd = Matrix3x2::zeros();
            for i in 0..3 {
                for j in 0..2 {
                    let mut fp = f;
                    fp[(i, j)] += h;
                    let mut fm = f;
                    fm[(i, j)] -= h;
                    fd[(i, j)] = (relaxed_energy_of(&fp, &m) - relaxed_energy_of(&fm, &m)) / (2.0 * h);
                }
            }
            let scale = g.amax().max(1e-6 * m.tau());
            worst = worst.max((g - fd).amax() / scale);
        }
        assert!(worst < 1e-6, "worst relative FD error {worst:e}");
    }

    #[test]
    fn unrelaxed_density_and_gradient() {
        let m = mat();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            let f = random_f(&mut rng, 2.0);
            let (w, p) = film_density(&f, &m);
            assert_relative_eq!(w, film_energy_of(&f, &m), max_relative = 1e-10, epsilon = 1e-9);
            let h = 1e-6;
            for i in 0..3 {
                for j in 0..2 {
                    let mut fp = f;
                    fp[(i, j)] += h;
                    let mut fm = f;
                    fm[(i, j)] -= h;
                    let fd = (film_density(&fp, &m).0 - film_density(&fm, &m).0) / (2.0 * h);
                    assert!((fd - p[(i, j)]).abs() < 1e-6 * (1.0 + p.amax()));
                }
            }
        }
    }

    #[test]
    fn slack_and_tense_gradients() {
        let m = mat();
        let f = embed(0.9, 0.95);
        assert_eq!(relaxed_energy_gradient(&f, &m), Matrix3x2::zeros());
        let f = embed(1.01, 1.02);
        let g = green_strain(&f);
        let s = m.tau() * ((1.0 - m.poisson) * g + m.poisson * g.trace() * Matrix2::identity());
        assert!((relaxed_energy_gradient(&f, &m) - f * s).amax() < 1e-12);
    }

    #[test]
    fn frame_indifference() {
        let m = mat();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let f = random_f(&mut rng, 3.0);
            let q = nalgebra::Rotation3::from_scaled_axis(nalgebra::Vector3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            ));
            let qf = Matrix3::from(q) * f;
            let a = relaxed_energy_of(&f, &m);
            let b = relaxed_energy_of(&qf, &m);
            assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn bound_sweep_has_no_violations() {
        let rep = verify_energy_bounds(&mat(), 20_000, 1);
        assert!(rep.passed(), "{:?}", &rep.violations[..rep.violations.len().min(3)]);
    }

    #[test]
    fn zero_gradient_bounds_chain() {
        // |F| = 0: lower bound is ¼τ(1+ν), W_f is the same, upper adds the gap.
        let m = mat();
        let f = Matrix3x2::zeros();
        let wf = film_energy_of(&f, &m);
        assert_relative_eq!(wf, m.relaxation_gap(), max_relative = 1e-14);
        assert_relative_eq!(m.tau() / 8.0 * 2.0 * (1.0 + m.poisson), wf, max_relative = 1e-14);
    }
}
