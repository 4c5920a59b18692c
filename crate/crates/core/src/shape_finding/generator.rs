//! Axisymmetric generating curve by shooting on the launch angle.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::ode::{integrate, Termination, Tolerances, Trajectory};
use super::DesignInput;
use crate::error::{Error, Result};

/// Integration state `[R, Z, θ, T]` with `T = R σ_m`.
pub type GeneratorState = [f64; 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSample {
    pub s: f64,
    pub r: f64,
    pub z: f64,
    pub theta: f64,
    /// Meridional tension per unit azimuth, `R σ_m` (N).
    pub tension: f64,
    pub sigma_m: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorCurve {
    pub samples: Vec<GeneratorSample>,
    pub total_length: f64,
    pub launch_angle: f64,
}

/// Right-hand side of the meridional equilibrium equations.
pub fn zpns_rhs(state: &GeneratorState, design: &DesignInput) -> Result<GeneratorState> {
    zpns_rhs_at(f64::NAN, state, design)
}

fn zpns_rhs_at(s: f64, y: &GeneratorState, d: &DesignInput) -> Result<GeneratorState> {
    let [r, z, theta, t] = *y;
    if !(t.abs() > TENSION_FLOOR) {
        return Err(Error::Singularity { s, value: t });
    }
    let (st, ct) = theta.sin_cos();
    let p = d.buoyancy * z + d.constant_pressure;
    let rw = d.weight_per_radian(r);
    let sc = d.circumferential_stress;
    Ok([
        st,
        ct,
        -(r * p + rw * st - sc * ct) / t,
        sc * st + rw * ct,
    ])
}

const TENSION_FLOOR: f64 = 1e-12;

impl DesignInput {
    /// `R w`: film weight on the current radius plus tendon weight smeared
    /// over one radian of azimuth.
    #[inline]
    pub fn weight_per_radian(&self, r: f64) -> f64 {
        r * self.film_weight + self.n_gores as f64 * self.tendon_weight / (2.0 * PI)
    }

    /// Vertical force carried by the envelope at the base.
    pub fn base_vertical_force(&self) -> f64 {
        let r0 = 0.5 * self.endplate_diameter;
        self.payload + PI * r0 * r0 * self.constant_pressure
    }

    /// Length scale `((L + πR0²p0) / b)^(1/3)` used to bound the shooting.
    pub fn length_scale(&self) -> f64 {
        (self.base_vertical_force().max(1e-30) / self.buoyancy).cbrt()
    }
}

fn base_state(d: &DesignInput, theta0: f64) -> GeneratorState {
    let t0 = d.base_vertical_force() / (2.0 * PI * theta0.cos());
    [0.5 * d.endplate_diameter, 0.0, theta0, t0]
}

fn tolerances() -> Tolerances {
    Tolerances::default()
}

/// Integrates from the base until the curve returns to the axis, curls past
/// `θ = −π`, or leaves the admissible length window.
pub fn integrate_to_axis(d: &DesignInput, theta0: f64) -> Result<Trajectory<4>> {
    let s_max = 40.0 * d.length_scale() + 10.0 * d.endplate_diameter;
    integrate(
        |s, y| zpns_rhs_at(s, y, d),
        0.0,
        base_state(d, theta0),
        s_max,
        tolerances(),
        |y| y[0],
        |_, y| y[2] < -PI,
    )
}

/// Integrates from the base over a fixed arclength.
fn integrate_fixed(d: &DesignInput, theta0: f64, length: f64) -> Result<Trajectory<4>> {
    integrate(
        |s, y| zpns_rhs_at(s, y, d),
        0.0,
        base_state(d, theta0),
        length,
        tolerances(),
        |_| 1.0,
        |_, _| false,
    )
}

/// Signed apex-angle mismatch `θ(L_d) + π/2` for a launch angle.
///
/// Curves that curl over before reaching the axis count as over-turned
/// (−π/2); curves that never return count as under-turned (+π/2).
fn apex_mismatch(d: &DesignInput, theta0: f64) -> Result<(f64, f64)> {
    let tr = integrate_to_axis(d, theta0)?;
    let last = tr.last();
    let m = match tr.termination {
        Termination::Event => last.y[2] + FRAC_PI_2,
        Termination::Aborted => -FRAC_PI_2,
        Termination::End => FRAC_PI_2,
    };
    Ok((m, last.s))
}

/// Residuals `(R(L_d)/ℓ, cos θ(L_d))` at fixed `(θ0, L_d)`.
pub fn shooting_residual(d: &DesignInput, theta0: f64, length: f64) -> Result<[f64; 2]> {
    let tr = integrate_fixed(d, theta0, length)?;
    let y = tr.last().y;
    Ok([y[0] / d.length_scale(), y[2].cos()])
}

/// Solves the two-point problem: base tension balancing the payload,
/// closure `R(L_d) = 0`, and zero vertical force at the apex.
pub fn solve_zpns_generator(design: &DesignInput, tol: f64) -> Result<GeneratorCurve> {
    solve_generator_with(design, tol, DEFAULT_SAMPLES)
}

pub const DEFAULT_SAMPLES: usize = 4001;

pub fn solve_generator_with(d: &DesignInput, tol: f64, n_samples: usize) -> Result<GeneratorCurve> {
    d.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    if n_samples < 2 {
        return Err(Error::InvalidInput("need at least two generator samples".into()));
    }
    if d.base_vertical_force() <= 0.0 {
        return Err(Error::ZeroTension);
    }

    let (theta0, length) = bracket_launch_angle(d)?;
    let (theta0, length) = newton_polish(d, theta0, length, tol)?;
    sample_curve(d, theta0, length, n_samples)
}

/// Scans `cos θ0` on a logarithmic grid for a sign change of the apex
/// mismatch, then bisects.
fn bracket_launch_angle(d: &DesignInput) -> Result<(f64, f64)> {
    let grid: Vec<f64> = (0..=160).map(|i| 10f64.powf(-8.0 + 8.0 * i as f64 / 160.0)).collect();
    let mut prev: Option<(f64, f64)> = None;
    for &c in grid.iter().rev() {
        let theta0 = c.min(1.0 - 1e-12).acos();
        let (m, _) = apex_mismatch(d, theta0)?;
        if let Some((cp, mp)) = prev {
            if (mp > 0.0) != (m > 0.0) {
                return bisect(d, cp, mp, c);
            }
        }
        prev = Some((c, m));
    }
    let (_, m) = prev.unwrap_or((1.0, f64::NAN));
    Err(Error::ShootingFailed {
        iterations: grid.len(),
        residual: [f64::NAN, m],
    })
}

fn bisect(d: &DesignInput, mut c_a: f64, m_a: f64, mut c_b: f64) -> Result<(f64, f64)> {
    let sign_a = m_a > 0.0;
    let mut last = (c_b.acos(), 0.0);
    for _ in 0..200 {
        // Bisect in log(cos θ0) while the bracket spans decades.
        let c_m = if c_a / c_b > 4.0 || c_b / c_a > 4.0 {
            (c_a * c_b).sqrt()
        } else {
            0.5 * (c_a + c_b)
        };
        let theta0 = c_m.acos();
        let (m, len) = apex_mismatch(d, theta0)?;
        last = (theta0, len);
        if m.abs() < 1e-13 || (c_a - c_b).abs() < 1e-16 * c_a.abs().max(c_b.abs()) {
            break;
        }
        if (m > 0.0) == sign_a {
            c_a = c_m;
        } else {
            c_b = c_m;
        }
    }
    Ok(last)
}

fn newton_polish(d: &DesignInput, theta0: f64, length: f64, tol: f64) -> Result<(f64, f64)> {
    let mut x = Vector2::new(theta0, length);
    let mut res = Vector2::from(shooting_residual(d, x[0], x[1])?);
    let scale = d.length_scale();
    let converged =
        |r: &Vector2<f64>, len: f64| r[0].abs() * scale < tol * len && r[1].abs() < tol;
    const MAX_ITER: usize = 40;
    for _ in 0..MAX_ITER {
        if converged(&res, x[1]) {
            return Ok((x[0], x[1]));
        }
        let h = [1e-7 * (1.0 + x[0].abs()), 1e-7 * x[1]];
        let mut jac = Matrix2::zeros();
        for k in 0..2 {
            let mut xp = x;
            xp[k] += h[k];
            let mut xm = x;
            xm[k] -= h[k];
            let rp = Vector2::from(shooting_residual(d, xp[0], xp[1])?);
            let rm = Vector2::from(shooting_residual(d, xm[0], xm[1])?);
            jac.set_column(k, &((rp - rm) / (2.0 * h[k])));
        }
        let step = jac.lu().solve(&(-res)).ok_or(Error::ShootingFailed {
            iterations: 0,
            residual: [res[0], res[1]],
        })?;
        let mut alpha = 1.0;
        loop {
            let trial = x + alpha * step;
            let ok = trial[0] > 0.0 && trial[0] < FRAC_PI_2 && trial[1] > 0.0;
            if ok {
                if let Ok(r) = shooting_residual(d, trial[0], trial[1]) {
                    let r = Vector2::from(r);
                    if r.norm() < res.norm() || alpha < 1e-3 {
                        x = trial;
                        res = r;
                        break;
                    }
                }
            }
            alpha *= 0.5;
            if alpha < 1e-6 {
                return Err(Error::ShootingFailed {
                    iterations: MAX_ITER,
                    residual: [res[0], res[1]],
                });
            }
        }
    }
    if converged(&res, x[1]) {
        Ok((x[0], x[1]))
    } else {
        Err(Error::ShootingFailed {
            iterations: MAX_ITER,
            residual: [res[0], res[1]],
        })
    }
}

fn sample_curve(d: &DesignInput, theta0: f64, length: f64, n: usize) -> Result<GeneratorCurve> {
    let tr = integrate_fixed(d, theta0, length)?;
    let r_max = tr.nodes.iter().map(|n| n.y[0]).fold(0.0, f64::max);
    let r_floor = 1e-6 * r_max;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let s = length * i as f64 / (n - 1) as f64;
        let y = tr.sample(s);
        let dy = zpns_rhs_at(s, &y, d)?;
        samples.push(GeneratorSample {
            s,
            r: y[0],
            z: y[1],
            theta: y[2],
            tension: y[3],
            sigma_m: y[3] / y[0].max(r_floor),
            kappa: -dy[2],
        });
    }
    Ok(GeneratorCurve {
        samples,
        total_length: length,
        launch_angle: theta0,
    })
}

impl GeneratorCurve {
    /// Builds a curve from tabulated `(s, R, Z, θ)` rows; curvature is
    /// recovered by finite differences of θ.
    pub fn from_table(rows: &[[f64; 4]]) -> Result<Self> {
        if rows.len() < 3 {
            return Err(Error::InvalidInput("generator table needs at least 3 rows".into()));
        }
        for w in rows.windows(2) {
            if !(w[1][0] > w[0][0]) {
                return Err(Error::InvalidInput("generator arclength must increase".into()));
            }
        }
        let n = rows.len();
        let kappa = |i: usize| -> f64 {
            let (a, b) = match i {
                0 => (0, 1),
                i if i == n - 1 => (n - 2, n - 1),
                i => (i - 1, i + 1),
            };
            -(rows[b][3] - rows[a][3]) / (rows[b][0] - rows[a][0])
        };
        let samples = rows
            .iter()
            .enumerate()
            .map(|(i, r)| GeneratorSample {
                s: r[0] - rows[0][0],
                r: r[1],
                z: r[2] - rows[0][2],
                theta: r[3],
                tension: f64::NAN,
                sigma_m: f64::NAN,
                kappa: kappa(i),
            })
            .collect::<Vec<_>>();
        Ok(Self {
            total_length: samples[n - 1].s,
            launch_angle: rows[0][3],
            samples,
        })
    }

    pub fn r_max(&self) -> f64 {
        self.samples.iter().map(|p| p.r).fold(0.0, f64::max)
    }

    /// Linear interpolation of the generator at arclength `s`.
    pub fn at(&self, s: f64) -> Result<GeneratorSample> {
        let sm = &self.samples;
        let (lo, hi) = (sm[0].s, sm[sm.len() - 1].s);
        let slack = 1e-9 * (hi - lo);
        if s < lo - slack || s > hi + slack {
            return Err(Error::Extrapolation { value: s, lo, hi });
        }
        let s = s.clamp(lo, hi);
        let k = sm.partition_point(|p| p.s <= s).clamp(1, sm.len() - 1) - 1;
        let (a, b) = (&sm[k], &sm[k + 1]);
        let t = (s - a.s) / (b.s - a.s);
        let lerp = |x: f64, y: f64| x + t * (y - x);
        Ok(GeneratorSample {
            s,
            r: lerp(a.r, b.r),
            z: lerp(a.z, b.z),
            theta: lerp(a.theta, b.theta),
            tension: lerp(a.tension, b.tension),
            sigma_m: lerp(a.sigma_m, b.sigma_m),
            kappa: lerp(a.kappa, b.kappa),
        })
    }

    /// Enclosed volume of the surface of revolution, `∫ π R² cos θ ds`.
    pub fn enclosed_volume(&self) -> f64 {
        trapezoid(&self.samples, |p| PI * p.r * p.r * p.theta.cos())
    }

    /// Envelope film area `∫ 2π R ds`.
    pub fn surface_area(&self) -> f64 {
        trapezoid(&self.samples, |p| 2.0 * PI * p.r)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["s", "R", "Z", "theta", "sigma_m", "kappa"])
            .map_err(csv_err)?;
        for p in &self.samples {
            out.write_record(
                [p.s, p.r, p.z, p.theta, p.sigma_m, p.kappa]
                    .iter()
                    .map(|v| format!("{v:e}")),
            )
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            let f = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::InvalidInput(format!("missing column {i}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("bad number: {e}")))
            };
            rows.push([f(0)?, f(1)?, f(2)?, f(3)?]);
        }
        Self::from_table(&rows)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}

pub(crate) fn trapezoid<T>(xs: &[T], f: impl Fn(&T) -> f64) -> f64
where
    T: HasArclength,
{
    xs.windows(2)
        .map(|w| 0.5 * (f(&w[0]) + f(&w[1])) * (w[1].arclength() - w[0].arclength()))
        .sum()
}

pub(crate) trait HasArclength {
    fn arclength(&self) -> f64;
}

impl HasArclength for GeneratorSample {
    fn arclength(&self) -> f64 {
        self.s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape_finding::DesignMode;
    use rand::{Rng, SeedableRng};

    fn weightless() -> DesignInput {
        DesignInput {
            film_weight: 0.0,
            tendon_weight: 0.0,
            ..DesignInput::reference_zpns()
        }
    }

    #[test]
    fn horizontal_tangent_without_weight() {
        let d = weightless();
        let y = [10.0, 30.0, FRAC_PI_2, 500.0];
        let dy = zpns_rhs(&y, &d).unwrap();
        let p = d.buoyancy * 30.0;
        assert!(dy[3].abs() < 1e-15);
        assert!((dy[2] + p / (500.0 / 10.0)).abs() < 1e-15);
    }

    #[test]
    fn vertical_tangent_at_base() {
        let d = DesignInput::reference_zpns();
        let y = [0.66, 0.0, 0.0, 700.0];
        let dy = zpns_rhs(&y, &d).unwrap();
        assert_eq!(dy[2], 0.0);
        assert!((dy[3] - d.weight_per_radian(0.66)).abs() < 1e-15);
    }

    #[test]
    fn vanishing_tension_is_a_singularity() {
        let d = DesignInput::reference_zpns();
        assert!(matches!(zpns_rhs(&[1.0, 1.0, 0.3, 0.0], &d), Err(Error::Singularity { .. })));
    }

    /// Five-point derivative of `T t(θ)` along the flow, checked against the
    /// vector balance `d/ds(T t) = σ_c i + R w k − R p n`.
    #[test]
    fn scalar_form_matches_vector_balance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for k in 0..1000 {
            let mut d = DesignInput::reference_pumpkin();
            d.circumferential_stress = if k % 2 == 0 { 0.0 } else { rng.gen_range(0.0..50.0) };
            let y = [
                rng.gen_range(0.5..40.0),
                rng.gen_range(0.0..100.0),
                rng.gen_range(-PI..PI),
                rng.gen_range(10.0..2000.0),
            ];
            let dy = zpns_rhs(&y, &d).unwrap();
            let flux = |h: f64| -> Vector2<f64> {
                let yy: Vec<f64> = (0..4).map(|i| y[i] + h * dy[i]).collect();
                Vector2::new(yy[2].sin(), yy[2].cos()) * yy[3]
            };
            let h = 1e-3 / (1.0 + dy[2].abs());
            let deriv = (flux(-2.0 * h) - 8.0 * flux(-h) + 8.0 * flux(h) - flux(2.0 * h)) / (12.0 * h);
            let p = d.buoyancy * y[1] + d.constant_pressure;
            let rw = d.weight_per_radian(y[0]);
            let normal = Vector2::new(y[2].cos(), -y[2].sin());
            let rhs = Vector2::new(d.circumferential_stress, rw) - normal * (y[0] * p);
            let scale = d.circumferential_stress + rw + y[0] * p + (dy[3].abs() + (y[3] * dy[2]).abs());
            let res = (deriv - rhs).norm() / scale;
            assert!(res < 1e-10, "state {y:?}: residual {res:.3e}");
        }
    }

    #[test]
    fn zero_load_is_rejected() {
        let d = DesignInput {
            payload: 0.0,
            ..weightless()
        };
        assert!(matches!(solve_zpns_generator(&d, 1e-9), Err(Error::ZeroTension)));
    }

    fn rk4(d: &DesignInput, theta0: f64, length: f64, steps: usize) -> GeneratorState {
        let mut y = base_state(d, theta0);
        let h = length / steps as f64;
        let f = |y: &GeneratorState| zpns_rhs(y, d).unwrap();
        let add = |y: &GeneratorState, k: &GeneratorState, c: f64| -> GeneratorState {
            [y[0] + c * k[0], y[1] + c * k[1], y[2] + c * k[2], y[3] + c * k[3]]
        };
        for _ in 0..steps {
            let k1 = f(&y);
            let k2 = f(&add(&y, &k1, 0.5 * h));
            let k3 = f(&add(&y, &k2, 0.5 * h));
            let k4 = f(&add(&y, &k3, h));
            for i in 0..4 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        y
    }

    #[test]
    fn converged_generator_satisfies_both_end_conditions() {
        let d = DesignInput::reference_zpns();
        let g = solve_zpns_generator(&d, 1e-9).unwrap();
        let first = &g.samples[0];
        assert_eq!(first.r, 0.66);
        let base = 2.0 * PI * first.tension * g.launch_angle.cos();
        assert!((base - d.payload).abs() < 1e-9 * d.payload);
        let end = rk4(&d, g.launch_angle, g.total_length, 20_000);
        assert!(end[0].abs() < 1e-6 * g.total_length, "R(L_d) = {}", end[0]);
        assert!(end[2].cos().abs() < 1e-6, "cos θ(L_d) = {}", end[2].cos());
        let last = g.samples.last().unwrap();
        assert!(last.r.abs() < 1e-9 * g.total_length);
    }

    #[test]
    fn natural_shape_is_a_closed_profile() {
        let g = solve_zpns_generator(&DesignInput::reference_zpns(), 1e-9).unwrap();
        assert!(g.samples.windows(2).all(|w| w[1].s > w[0].s));
        assert!(g.samples.iter().all(|p| p.r > -1e-9 && p.kappa.is_finite()));
        let imax = (0..g.samples.len()).max_by(|&a, &b| g.samples[a].r.total_cmp(&g.samples[b].r)).unwrap();
        assert!(g.samples[..=imax].windows(2).all(|w| w[1].r >= w[0].r));
        assert!(g.samples[imax..].windows(2).all(|w| w[1].r <= w[0].r));
        assert!(g.samples.iter().all(|p| p.sigma_m > 0.0));
    }

    #[test]
    fn pumpkin_generator_has_horizontal_apex() {
        let d = DesignInput::reference_pumpkin();
        let g = solve_zpns_generator(&d, 1e-9).unwrap();
        assert_eq!(d.mode, DesignMode::Pumpkin);
        let last = g.samples.last().unwrap();
        assert!((last.theta + FRAC_PI_2).abs() < 1e-6);
        assert!(g.r_max() > 30.0);
    }

    #[test]
    fn csv_round_trip_keeps_geometry() {
        let g = solve_generator_with(&DesignInput::reference_zpns(), 1e-9, 401).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let back = GeneratorCurve::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.samples.len(), g.samples.len());
        for (a, b) in g.samples.iter().zip(&back.samples) {
            assert_eq!(a.s, b.s);
            assert_eq!(a.r, b.r);
            assert_eq!(a.z, b.z);
            assert_eq!(a.theta, b.theta);
        }
        assert!((back.enclosed_volume() - g.enclosed_volume()).abs() < 1e-9 * g.enclosed_volume());
    }

    #[test]
    fn table_must_increase() {
        let rows = [[0.0, 1.0, 0.0, 0.0], [1.0, 1.0, 1.0, 0.0], [1.0, 1.0, 2.0, 0.0]];
        assert!(GeneratorCurve::from_table(&rows).is_err());
    }

    #[test]
    fn interpolation_refuses_to_extrapolate() {
        let rows = [[0.0, 1.0, 0.0, 0.0], [1.0, 1.0, 1.0, 0.0], [2.0, 1.0, 2.0, 0.0]];
        let g = GeneratorCurve::from_table(&rows).unwrap();
        assert!((g.at(1.5).unwrap().z - 1.5).abs() < 1e-15);
        assert!(matches!(g.at(2.1), Err(Error::Extrapolation { .. })));
    }

    #[test]
    fn cylinder_volume_and_area() {
        let rows: Vec<[f64; 4]> = (0..=10).map(|i| [i as f64, 2.0, i as f64, 0.0]).collect();
        let g = GeneratorCurve::from_table(&rows).unwrap();
        assert!((g.enclosed_volume() - PI * 4.0 * 10.0).abs() < 1e-12);
        assert!((g.surface_area() - 2.0 * PI * 2.0 * 10.0).abs() < 1e-12);
        assert!(g.samples.iter().all(|p| p.kappa == 0.0));
    }
}
