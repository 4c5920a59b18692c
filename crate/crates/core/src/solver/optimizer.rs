//! Augmented Lagrangian outer loop with damped-Newton or L-BFGS inner
//! minimization, all in nondimensional variables.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::problem::{DofRow, EnergyBreakdown, Problem};
use super::{InnerSolver, SolveConfig};
use crate::constraints::RowKind;
use crate::error::{Error, Result};

/// One line of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Continuation stage.
    pub stage: usize,
    pub outer: usize,
    pub inner: usize,
    /// Nondimensional augmented Lagrangian.
    pub merit: f64,
    /// Physical total energy (J).
    pub energy: f64,
    /// Max-norm of the merit gradient (nondimensional).
    pub grad_norm: f64,
    /// Largest nondimensional constraint violation.
    pub max_violation: f64,
    pub damping: f64,
}

/// Scalings: `z = q/ℓ`, energies by `e_s`, each row by its own unit.
#[derive(Debug, Clone)]
pub(crate) struct Scales {
    pub length: f64,
    pub energy: f64,
    pub rows: Vec<f64>,
}

pub(crate) struct Multiplier {
    pub value: f64,
}

pub(crate) struct AugmentedLagrangian<'p, 'a> {
    pub problem: &'p Problem<'a>,
    pub scales: Scales,
    pub multipliers: Vec<Multiplier>,
    pub penalty: f64,
    pub fd_step: f64,
}

pub(crate) struct MeritEval {
    pub merit: f64,
    pub grad: DVector<f64>,
    pub energy: EnergyBreakdown,
    pub rows: Vec<DofRow>,
    pub violation: f64,
    /// Sum of the magnitudes of the merit terms, for round-off estimates.
    pub magnitude: f64,
}

impl AugmentedLagrangian<'_, '_> {
    fn q(&self, z: &DVector<f64>) -> DVector<f64> {
        z * self.scales.length
    }

    /// Coefficient of `∇c` in the merit gradient, and whether the row's
    /// quadratic term is active.
    fn row_weight(&self, i: usize, c: f64, equality: bool) -> (f64, bool) {
        let lam = self.multipliers[i].value;
        if equality {
            (lam + self.penalty * c, true)
        } else {
            let w = lam + self.penalty * c;
            if w > 0.0 {
                (w, true)
            } else {
                (0.0, false)
            }
        }
    }

    pub fn eval(&self, z: &DVector<f64>) -> Result<MeritEval> {
        let q = self.q(z);
        let state = self.problem.state(&q);
        let (energy, grad_e) = self.problem.energy(&state)?;
        let rows = self.problem.constraint_rows(&state)?;
        let l = self.scales.length;
        let es = self.scales.energy;
        let mut merit = energy.total / es;
        let mut magnitude = (energy.film.abs() + energy.pressure.abs()) / es;
        let mut grad = grad_e * (l / es);
        let mut violation: f64 = 0.0;
        for (i, row) in rows.iter().enumerate() {
            let cs = self.scales.rows[i];
            let c = row.value / cs;
            let lam = self.multipliers[i].value;
            let rho = self.penalty;
            let reference = match row.kind {
                RowKind::Volume => self.problem.constraints.volume.unwrap_or(0.0).abs() / cs,
                RowKind::Tendon(_) => 1.0,
            };
            magnitude += (lam.abs() + rho * c.abs()) * reference.max(c.abs());
            if row.equality {
                merit += lam * c + 0.5 * rho * c * c;
                violation = violation.max(c.abs());
            } else {
                let w = (lam + rho * c).max(0.0);
                merit += (w * w - lam * lam) / (2.0 * rho);
                violation = violation.max(c.max(-lam / rho).abs());
            }
            let (w, _) = self.row_weight(i, c, row.equality);
            if w != 0.0 {
                grad.axpy(w * l / cs, &row.gradient, 1.0);
            }
        }
        Ok(MeritEval {
            merit,
            grad,
            energy,
            rows,
            violation,
            magnitude,
        })
    }

    pub fn hessian(&self, z: &DVector<f64>, ev: &MeritEval) -> DMatrix<f64> {
        let q = self.q(z);
        let state = self.problem.state(&q);
        let l = self.scales.length;
        let es = self.scales.energy;
        let mut h = self.problem.energy_hessian(&state, self.fd_step) * (l * l / es);
        for (i, row) in ev.rows.iter().enumerate() {
            let cs = self.scales.rows[i];
            let c = row.value / cs;
            let (w, active) = self.row_weight(i, c, row.equality);
            if !active {
                continue;
            }
            self.problem.add_row_hessian(&state, row.kind, w * l * l / cs, &mut h);
            let gs = &row.gradient * (l / cs);
            h.ger(self.penalty, &gs, &gs, 1.0);
        }
        h
    }

    /// Positive diagonal of the merit Hessian, floored relative to its largest
    /// entry; the Jacobi preconditioner of the quasi-Newton path.
    pub fn diagonal(&self, z: &DVector<f64>, ev: &MeritEval) -> DVector<f64> {
        let state = self.problem.state(&self.q(z));
        let l = self.scales.length;
        let mut d = self.problem.energy_hessian_diagonal(&state, self.fd_step) * (l * l / self.scales.energy);
        for (i, row) in ev.rows.iter().enumerate() {
            let cs = self.scales.rows[i];
            let (_, active) = self.row_weight(i, row.value / cs, row.equality);
            if active {
                d += row.gradient.map(|g| self.penalty * (g * l / cs).powi(2));
            }
        }
        let floor = 1e-12 * d.amax().max(1e-300);
        d.map(|v| v.max(floor))
    }

    /// Multiplier update after an inner solve.
    pub fn update_multipliers(&mut self, rows: &[DofRow]) {
        for (i, row) in rows.iter().enumerate() {
            let c = row.value / self.scales.rows[i];
            let m = &mut self.multipliers[i];
            m.value = if row.equality {
                m.value + self.penalty * c
            } else {
                (m.value + self.penalty * c).max(0.0)
            };
        }
    }
}

pub(crate) struct InnerOutcome {
    pub z: DVector<f64>,
    pub eval: MeritEval,
    pub iterations: usize,
    pub converged: bool,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

/// Damping beyond this multiple of the largest Hessian diagonal ends the
/// inner solve.
const MAX_DAMPING: f64 = 1e12;
const MAX_NU: f64 = 64.0;
const MAX_PENALTY: f64 = 1e12;
/// Quasi-Newton iterations between preconditioner updates.
const PRECONDITIONER_REFRESH: usize = 50;

/// Levenberg–Marquardt damped Newton on the merit function.
pub(crate) fn newton(
    al: &AugmentedLagrangian,
    mut z: DVector<f64>,
    tol: f64,
    max_iter: usize,
    damping: &mut f64,
    mut log: impl FnMut(usize, &MeritEval, f64),
) -> Result<InnerOutcome> {
    let mut ev = al.eval(&z)?;
    let mut nu = 2.0;
    for it in 0..max_iter {
        let gnorm = inf_norm(&ev.grad);
        log(it, &ev, *damping);
        if gnorm <= tol {
            return Ok(InnerOutcome {
                z,
                eval: ev,
                iterations: it,
                converged: true,
            });
        }
        let h = al.hessian(&z, &ev);
        let diag_max = h.diagonal().amax().max(1e-300);
        if *damping == 0.0 || !(*damping <= MAX_DAMPING * diag_max) {
            *damping = 1e-6 * diag_max;
        }
        let mut accepted = false;
        while *damping <= MAX_DAMPING * diag_max {
            let mut hd = h.clone();
            for i in 0..hd.nrows() {
                hd[(i, i)] += *damping;
            }
            let Some(chol) = hd.cholesky() else {
                *damping *= 4.0;
                continue;
            };
            let p = -chol.solve(&ev.grad);
            let pred = -(ev.grad.dot(&p) + 0.5 * p.dot(&(&h * &p)));
            let z_new = &z + &p;
            let ev_new = match al.eval(&z_new) {
                Ok(e) => e,
                Err(Error::NonFinite { .. }) => {
                    *damping *= nu;
                    nu = (2.0 * nu).min(MAX_NU);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let actual = ev.merit - ev_new.merit;
            let noise = 1e-13 * ev.magnitude.max(1e-300);
            let good = if pred.abs() <= noise {
                // Beyond the resolution of the merit value: accept on gradient decrease.
                inf_norm(&ev_new.grad) < gnorm
            } else {
                pred > 0.0 && actual / pred > 1e-4
            };
            if good {
                let ratio = if pred.abs() > noise { actual / pred } else { 1.0 };
                *damping *= (1.0 - (2.0 * ratio - 1.0).powi(3)).max(1.0 / 3.0);
                *damping = damping.max(1e-15 * diag_max);
                nu = 2.0;
                z = z_new;
                ev = ev_new;
                accepted = true;
                break;
            }
            *damping *= nu;
            nu = (2.0 * nu).min(MAX_NU);
        }
        if !accepted {
            *damping = 0.0;
            return Ok(InnerOutcome {
                z,
                eval: ev,
                iterations: it,
                converged: false,
            });
        }
    }
    let converged = inf_norm(&ev.grad) <= tol;
    Ok(InnerOutcome {
        z,
        eval: ev,
        iterations: max_iter,
        converged,
    })
}

/// Limited-memory BFGS with a backtracking Armijo line search.
pub(crate) fn lbfgs(
    al: &AugmentedLagrangian,
    mut z: DVector<f64>,
    tol: f64,
    max_iter: usize,
    memory: usize,
    mut log: impl FnMut(usize, &MeritEval, f64),
) -> Result<InnerOutcome> {
    let mut ev = al.eval(&z)?;
    let mut inv_diag = al.diagonal(&z, &ev).map(|v| 1.0 / v);
    let mut hist: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    for it in 0..max_iter {
        let gnorm = inf_norm(&ev.grad);
        log(it, &ev, 0.0);
        if gnorm <= tol {
            return Ok(InnerOutcome {
                z,
                eval: ev,
                iterations: it,
                converged: true,
            });
        }
        let mut d = -ev.grad.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * s.dot(&d);
            d.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        if it > 0 && it % PRECONDITIONER_REFRESH == 0 {
            inv_diag = al.diagonal(&z, &ev).map(|v| 1.0 / v);
        }
        d.component_mul_assign(&inv_diag);
        if let Some((s, y, _)) = hist.back() {
            d *= s.dot(y) / y.dot(&y.component_mul(&inv_diag));
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * y.dot(&d);
            d.axpy(a - b, s, 1.0);
        }
        let mut slope = ev.grad.dot(&d);
        if slope >= 0.0 {
            hist.clear();
            d = -ev.grad.component_mul(&inv_diag);
            slope = ev.grad.dot(&d);
        }
        let mut step = 1.0;
        let mut next = None;
        for _ in 0..40 {
            let zt = &z + &d * step;
            match al.eval(&zt) {
                Ok(e) if e.merit <= ev.merit + 1e-4 * step * slope => {
                    next = Some((zt, e));
                    break;
                }
                Ok(e) if (ev.merit - e.merit).abs() <= 1e-14 * ev.merit.abs() && inf_norm(&e.grad) < gnorm => {
                    next = Some((zt, e));
                    break;
                }
                Ok(_) | Err(Error::NonFinite { .. }) => step *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let Some((z_new, ev_new)) = next else {
            return Err(Error::LineSearch(format!("no sufficient decrease after 40 halvings at inner iteration {it}")));
        };
        let s = &z_new - &z;
        let y = &ev_new.grad - &ev.grad;
        let sy = s.dot(&y);
        if sy > 1e-16 * s.norm() * y.norm() {
            hist.push_back((s, y, 1.0 / sy));
            if hist.len() > memory {
                hist.pop_front();
            }
        }
        z = z_new;
        ev = ev_new;
    }
    let converged = inf_norm(&ev.grad) <= tol;
    Ok(InnerOutcome {
        z,
        eval: ev,
        iterations: max_iter,
        converged,
    })
}

pub(crate) struct OuterOutcome {
    pub z: DVector<f64>,
    pub eval: MeritEval,
    pub log: Vec<IterationRecord>,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub kkt: f64,
}

pub(crate) fn run(al: &mut AugmentedLagrangian, z0: DVector<f64>, cfg: &SolveConfig) -> Result<OuterOutcome> {
    let mut z = z0;
    let mut log = Vec::new();
    let mut damping = 0.0;
    let mut prev_violation = f64::INFINITY;
    let mut total_inner = 0;
    let has_rows = !al.scales.rows.is_empty();
    let mut last: Option<MeritEval> = None;
    let mut outer_done = 0;
    for outer in 0..cfg.max_outer.max(1) {
        outer_done = outer + 1;
        let mut record = |inner: usize, ev: &MeritEval, damping: f64| {
            log.push(IterationRecord {
                stage: 0,
                outer,
                inner,
                merit: ev.merit,
                energy: ev.energy.total,
                grad_norm: inf_norm(&ev.grad),
                max_violation: ev.violation,
                damping,
            })
        };
        let out = match cfg.inner {
            InnerSolver::ProjectedNewton => newton(al, z, cfg.grad_tol, cfg.max_inner, &mut damping, &mut record)?,
            InnerSolver::QuasiNewton => lbfgs(al, z, cfg.grad_tol, cfg.max_inner, cfg.lbfgs_memory, &mut record)?,
        };
        total_inner += out.iterations;
        z = out.z;
        let violation = out.eval.violation;
        if !has_rows {
            let kkt = inf_norm(&out.eval.grad);
            return Ok(OuterOutcome {
                z,
                eval: out.eval,
                log,
                converged: out.converged,
                outer_iterations: outer + 1,
                inner_iterations: total_inner,
                kkt,
            });
        }
        al.update_multipliers(&out.eval.rows);
        // Gradient of the Lagrangian with the updated multipliers equals the
        // merit gradient just minimized.
        let kkt = inf_norm(&out.eval.grad);
        if out.converged && violation <= cfg.constraint_tol {
            return Ok(OuterOutcome {
                z,
                eval: out.eval,
                log,
                converged: true,
                outer_iterations: outer + 1,
                inner_iterations: total_inner,
                kkt,
            });
        }
        if !out.converged && out.iterations == 0 && violation <= cfg.constraint_tol {
            // Feasible, and the inner solver can no longer make progress.
            last = Some(out.eval);
            break;
        }
        if violation > cfg.constraint_tol && violation > 0.25 * prev_violation {
            al.penalty = (al.penalty * cfg.penalty_growth).min(MAX_PENALTY);
        }
        prev_violation = violation;
        last = Some(out.eval);
    }
    let eval = match last {
        Some(e) => e,
        None => al.eval(&z)?,
    };
    let kkt = inf_norm(&eval.grad);
    Ok(OuterOutcome {
        z,
        eval,
        log,
        converged: false,
        outer_iterations: outer_done,
        inner_iterations: total_inner,
        kkt,
    })
}
