//! Constrained minimization of the relaxed total energy.
//!
//! The discrete problem minimizes `Σ A_ref W*(F) + E_P` over the free
//! variables of a [`RefMesh`], subject to tendon and volume rows. An
//! augmented Lagrangian handles the rows; the inner problems are solved by a
//! damped Newton method on a dense Hessian or by L-BFGS.

mod audit;
mod optimizer;
mod problem;

pub use audit::{fd_step_sweep, finite_difference_audit, five_point_audit, self_intersections, AuditReport};
pub use optimizer::IterationRecord;
pub use problem::{total_energy, DofRow, EnergyBreakdown, Problem};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::constraints::{tendon_length, tendon_strain, RowKind, TendonForm, TendonSense};
use crate::error::{Error, Result};
use crate::gore_mesh::{facet_responses, DeformationState, FacetResponse, Provenance};
use optimizer::{AugmentedLagrangian, Multiplier, Scales};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerSolver {
    /// Limited-memory BFGS.
    QuasiNewton,
    /// Damped Newton on the admissible subspace with a dense Hessian.
    #[default]
    ProjectedNewton,
}

impl std::str::FromStr for InnerSolver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quasi-newton" | "lbfgs" => Ok(Self::QuasiNewton),
            "projected-newton" | "newton" => Ok(Self::ProjectedNewton),
            other => Err(Error::Config(format!("unknown inner solver '{other}'"))),
        }
    }
}

/// Largest problem handled by the dense Newton path.
pub const DENSE_DOF_LIMIT: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub inner: InnerSolver,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Initial augmented Lagrangian penalty (nondimensional).
    pub penalty: f64,
    pub penalty_growth: f64,
    /// Max-norm tolerance on the nondimensional merit gradient.
    pub grad_tol: f64,
    /// Tolerance on nondimensional constraint rows.
    pub constraint_tol: f64,
    /// Length scale ℓ (m); defaults to the largest radius of the initial state.
    pub length_scale: Option<f64>,
    /// Energy scale (J); defaults to τ ℓ².
    pub energy_scale: Option<f64>,
    pub lbfgs_memory: usize,
    /// Hessian difference step relative to each facet's shortest edge.
    pub fd_step: f64,
    /// First weight α of the unrelaxed density; 0 disables continuation.
    pub continuation_start: f64,
    /// Ratio between successive α.
    pub continuation_factor: f64,
    /// Below this α the next stage is the relaxed problem itself.
    pub continuation_floor: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            inner: InnerSolver::ProjectedNewton,
            max_outer: 40,
            max_inner: 400,
            penalty: 100.0,
            penalty_growth: 10.0,
            grad_tol: 1e-10,
            constraint_tol: 1e-10,
            length_scale: None,
            energy_scale: None,
            lbfgs_memory: 20,
            fd_step: 1e-7,
            continuation_start: 0.0,
            continuation_factor: 0.1,
            continuation_floor: 1e-4,
        }
    }
}

impl SolveConfig {
    /// Weights α of the continuation stages, ending with 0.
    pub fn stages(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut a = self.continuation_start;
        while a >= self.continuation_floor {
            out.push(a);
            a *= self.continuation_factor;
        }
        out.push(0.0);
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.grad_tol > 0.0 && self.constraint_tol > 0.0) {
            return bad("solver tolerances must be positive");
        }
        if !(self.penalty_growth > 1.0) {
            return bad("penalty growth must exceed 1");
        }
        if !(self.penalty > 0.0) {
            return bad("initial penalty must be positive");
        }
        if !(self.fd_step > 0.0) {
            return bad("difference step must be positive");
        }
        if self.max_inner == 0 || self.lbfgs_memory == 0 {
            return bad("iteration counts must be positive");
        }
        if !(0.0..=1.0).contains(&self.continuation_start)
            || !(self.continuation_factor > 0.0 && self.continuation_factor < 1.0)
            || !(self.continuation_floor > 0.0)
        {
            return bad("continuation needs 0 ≤ start ≤ 1, 0 < factor < 1 and a positive floor");
        }
        for s in [self.length_scale, self.energy_scale].into_iter().flatten() {
            if !(s > 0.0 && s.is_finite()) {
                return bad("scales must be positive");
            }
        }
        Ok(())
    }
}

/// Converged tendon quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TendonReport {
    pub seam: usize,
    pub sense: TendonSense,
    /// Multiplier of the row in physical units.
    pub lambda: f64,
    /// Tension carried by one tendon (N).
    pub force: f64,
    /// Axial stiffness `λK` implied by the relaxed-energy form (N).
    pub stiffness: Option<f64>,
    pub strain: f64,
    pub length: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    /// Base pressure equivalent to the volume multiplier (Pa).
    pub volume: Option<f64>,
    pub tendons: Vec<TendonReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub state: DeformationState,
    pub energy: EnergyBreakdown,
    /// Whole-balloon volume (m³).
    pub volume: f64,
    pub multipliers: Multipliers,
    pub converged: bool,
    pub kkt_residual: f64,
    pub max_violation: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub length_scale: f64,
    pub energy_scale: f64,
    #[serde(skip)]
    pub log: Vec<IterationRecord>,
    #[serde(skip)]
    pub responses: Vec<FacetResponse>,
    pub self_intersections: Vec<(usize, usize)>,
}

impl SolveResult {
    pub fn write_log<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for r in &self.log {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

fn default_length_scale(state: &DeformationState) -> f64 {
    state
        .positions
        .iter()
        .map(|p| p.norm())
        .fold(0.0, f64::max)
        .max(1e-12)
}

fn row_scale(problem: &Problem, kind: RowKind, length: f64) -> f64 {
    match kind {
        RowKind::Volume => length.powi(3),
        RowKind::Tendon(i) => match problem.constraints.form {
            TendonForm::Strain => 1.0,
            TendonForm::RelaxedEnergy => problem.constraints.tendons[i].stiffness * length,
        },
    }
}

/// Minimizes the relaxed total energy from `init`.
///
/// Reaching the iteration limits is not an error: the best iterate is
/// returned with `converged = false`.
pub fn minimize(problem: &Problem, init: &DeformationState, cfg: &SolveConfig) -> Result<SolveResult> {
    cfg.validate()?;
    if cfg.inner == InnerSolver::ProjectedNewton && problem.n_dofs() > DENSE_DOF_LIMIT {
        return Err(Error::Config(format!(
            "{} free variables exceed the dense Newton limit of {DENSE_DOF_LIMIT}; use the quasi-Newton solver",
            problem.n_dofs()
        )));
    }
    let init = problem.mesh.project(init);
    let length = cfg.length_scale.unwrap_or_else(|| default_length_scale(&init));
    let energy = cfg.energy_scale.unwrap_or(problem.material.tau() * length * length);
    let rows0 = problem.constraint_rows(&init)?;
    let scales = Scales {
        length,
        energy,
        rows: rows0.iter().map(|r| row_scale(problem, r.kind, length)).collect(),
    };
    let mut z = problem.dofs(&init) / length;
    let mut carried: Vec<f64> = rows0.iter().map(|_| 0.0).collect();
    let mut penalty = cfg.penalty;
    let mut log = Vec::new();
    let mut inner_total = 0;
    let mut outer_total = 0;
    let stages = cfg.stages();
    let mut last = None;
    for (stage, &alpha) in stages.iter().enumerate() {
        let mut staged = problem.clone();
        staged.compression_stiffness = alpha;
        let mut al = AugmentedLagrangian {
            problem: &staged,
            multipliers: carried.iter().map(|&value| Multiplier { value }).collect(),
            scales: scales.clone(),
            penalty,
            fd_step: cfg.fd_step,
        };
        let mut out = optimizer::run(&mut al, z, cfg)?;
        out.log.iter_mut().for_each(|r| r.stage = stage);
        log.append(&mut out.log);
        inner_total += out.inner_iterations;
        outer_total += out.outer_iterations;
        carried = al.multipliers.iter().map(|m| m.value).collect();
        penalty = al.penalty;
        z = out.z.clone();
        last = Some(out);
    }
    let mut out = last.expect("at least one stage");
    out.log = log;
    out.inner_iterations = inner_total;
    out.outer_iterations = outer_total;
    let al_multipliers = carried;

    let q: DVector<f64> = &out.z * length;
    let mut state = problem.state(&q);
    state.provenance = if out.converged {
        Provenance::Converged
    } else {
        Provenance::Iterate
    };
    let mut multipliers = Multipliers::default();
    let copies = problem.mesh.copies();
    for (i, row) in out.eval.rows.iter().enumerate() {
        let lambda = al_multipliers[i] * energy / scales.rows[i];
        match row.kind {
            RowKind::Volume => {
                multipliers.volume = Some(problem.loads.constant_pressure - lambda);
            }
            RowKind::Tendon(t) => {
                let tc = &problem.constraints.tendons[t];
                let seam = &problem.mesh.seams[tc.seam];
                let length = tendon_length(&state, seam);
                let strain = tendon_strain(length, tc.rest_length);
                let count = copies * seam.weight;
                let sign = if tc.sense == TendonSense::AtLeast { -1.0 } else { 1.0 };
                let (force, stiffness) = match problem.constraints.form {
                    TendonForm::Strain => (sign * lambda / (tc.rest_length * count), None),
                    TendonForm::RelaxedEnergy => {
                        let k = sign * lambda * tc.stiffness / count;
                        (k * strain.max(0.0), Some(k))
                    }
                };
                multipliers.tendons.push(TendonReport {
                    seam: tc.seam,
                    sense: tc.sense,
                    lambda,
                    force,
                    stiffness,
                    strain,
                    length,
                });
            }
        }
    }
    let max_violation = out
        .eval
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let c = r.value / scales.rows[i];
            if r.equality {
                c.abs()
            } else {
                c.max(0.0)
            }
        })
        .fold(0.0, f64::max);
    let volume = crate::constraints::enclosed_volume(problem.mesh, &state);
    let responses = facet_responses(problem.mesh, &state, &problem.material);
    let self_intersections = self_intersections(problem.mesh, &state);
    Ok(SolveResult {
        energy: out.eval.energy,
        volume,
        multipliers,
        converged: out.converged,
        kkt_residual: out.kkt,
        max_violation,
        outer_iterations: out.outer_iterations,
        inner_iterations: out.inner_iterations,
        length_scale: length,
        energy_scale: energy,
        log: out.log,
        responses,
        self_intersections,
        state,
    })
}
