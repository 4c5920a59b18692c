use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::problem::Problem;
use crate::constraints::{RowKind, TendonForm, TendonSense};
use crate::error::Result;
use crate::gore_mesh::{DeformationState, RefMesh};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Worst `|analytic − FD| / (|analytic| + 1e−6 ‖analytic‖∞)`.
    pub max_relative_error: f64,
    pub checked: usize,
}

fn sample_dofs(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let stride = n as f64 / max as f64;
    (0..max).map(|k| (k as f64 * stride) as usize).collect()
}

/// Compares the analytic energy and constraint gradients against central
/// differences with step `step` (m) on up to 64 sampled free variables.
///
/// Energy and volume are differenced over the facets a variable moves, so
/// the large unchanged remainder does not swamp the difference.
pub fn finite_difference_audit(problem: &Problem, state: &DeformationState, step: f64) -> Result<AuditReport> {
    audit_with(problem, state, step, &[(1.0, 0.5)], false)
}

/// As [`finite_difference_audit`] with the fourth-order five-point stencil,
/// which is exact for energies polynomial of degree four or less. The step
/// of a variable is halved (up to 20 times) while the stencil would carry
/// one of its facets into another constitutive region, where the energy is
/// only once differentiable.
pub fn five_point_audit(problem: &Problem, state: &DeformationState, step: f64) -> Result<AuditReport> {
    audit_with(problem, state, step, &[(1.0, 2.0 / 3.0), (2.0, -1.0 / 12.0)], true)
}

/// Antisymmetric stencil given as `(offset, weight)` pairs.
fn audit_with(
    problem: &Problem,
    state: &DeformationState,
    step: f64,
    stencil: &[(f64, f64)],
    guard_regions: bool,
) -> Result<AuditReport> {
    let mesh = problem.mesh;
    let cons = &problem.constraints;
    let q0 = problem.dofs(state);
    let st = problem.state(&q0);
    let (_, g_e) = problem.energy(&st)?;
    let rows = problem.constraint_rows(&st)?;
    let mut moving: Vec<Vec<usize>> = vec![Vec::new(); q0.len()];
    for n in 0..st.positions.len() {
        for (d, _) in mesh.expansion(n) {
            if moving[d].last() != Some(&n) {
                moving[d].push(n);
            }
        }
    }
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); q0.len()];
    for (f, facet) in mesh.facets.iter().enumerate() {
        for &n in &facet.nodes {
            for (d, _) in mesh.expansion(n) {
                if touching[d].last() != Some(&f) {
                    touching[d].push(f);
                }
            }
        }
    }
    // Only the moved nodes' facets and tendon segments change, and the
    // change in their enclosed volume does not depend on the origin, so a
    // nearby origin avoids cancellation.
    let eval = |q: &DVector<f64>, d: usize, origin: &Vector3<f64>| -> Result<Vec<f64>> {
        let s = problem.state(q);
        let (e, v) = problem.partial_sums(&s, &touching[d], origin);
        let mut out = vec![e];
        for r in problem.constraint_rows(&s)? {
            out.push(match r.kind {
                RowKind::Volume => v,
                RowKind::Tendon(i) if cons.form == TendonForm::Strain => {
                    let t = &cons.tendons[i];
                    let nodes = &mesh.seams[t.seam].nodes;
                    let len: f64 = (1..nodes.len())
                        .filter(|&k| moving[d].contains(&nodes[k]) || moving[d].contains(&nodes[k - 1]))
                        .map(|k| (s.positions[nodes[k]] - s.positions[nodes[k - 1]]).norm())
                        .sum();
                    let sign = if t.sense == TendonSense::AtLeast { -1.0 } else { 1.0 };
                    sign * len / t.rest_length
                }
                RowKind::Tendon(_) => r.value,
            });
        }
        Ok(out)
    };
    let mut grads = vec![g_e];
    grads.extend(rows.into_iter().map(|r| r.gradient));
    let scales: Vec<f64> = grads.iter().map(|g| g.amax()).collect();
    let mut worst: f64 = 0.0;
    let dofs = sample_dofs(q0.len(), 64);
    for &d in &dofs {
        let origin = moving[d].first().map_or_else(Vector3::zeros, |&n| st.positions[n]);
        let reach = stencil.iter().map(|s| s.0).fold(0.0, f64::max);
        let mut step = step;
        if guard_regions {
            let here = problem.regions(&st, &touching[d]);
            let crosses = |h: f64| {
                [-h, h].iter().any(|&dh| {
                    let mut q = q0.clone();
                    q[d] += dh;
                    problem.regions(&problem.state(&q), &touching[d]) != here
                })
            };
            for _ in 0..20 {
                if !crosses(reach * step) {
                    break;
                }
                step *= 0.5;
            }
        }
        let mut fd = vec![0.0; grads.len()];
        for &(offset, weight) in stencil {
            let mut qp = q0.clone();
            qp[d] += offset * step;
            let mut qm = q0.clone();
            qm[d] -= offset * step;
            let (fp, fm) = (eval(&qp, d, &origin)?, eval(&qm, d, &origin)?);
            for k in 0..grads.len() {
                fd[k] += weight * (fp[k] - fm[k]) / step;
            }
        }
        for k in 0..grads.len() {
            let a = grads[k][d];
            let denom = a.abs() + 1e-6 * scales[k];
            if denom > 0.0 {
                worst = worst.max((a - fd[k]).abs() / denom);
            }
        }
    }
    Ok(AuditReport {
        max_relative_error: worst,
        checked: dofs.len(),
    })
}

/// Audit error for each step in `steps`.
pub fn fd_step_sweep(problem: &Problem, state: &DeformationState, steps: &[f64]) -> Result<Vec<(f64, f64)>> {
    steps
        .iter()
        .map(|&h| Ok((h, finite_difference_audit(problem, state, h)?.max_relative_error)))
        .collect()
}

/// Does segment `p`–`q` pierce triangle `t`?
fn segment_hits_triangle(p: &Vector3<f64>, q: &Vector3<f64>, t: &[Vector3<f64>; 3]) -> bool {
    let d = q - p;
    let e1 = t[1] - t[0];
    let e2 = t[2] - t[0];
    let h = d.cross(&e2);
    let a = e1.dot(&h);
    let scale = e1.norm() * e2.norm() * d.norm();
    if a.abs() <= 1e-12 * scale {
        return false;
    }
    let f = 1.0 / a;
    let s = p - t[0];
    let u = f * s.dot(&h);
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let qv = s.cross(&e1);
    let v = f * d.dot(&qv);
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    let w = f * e2.dot(&qv);
    (0.0..=1.0).contains(&w)
}

fn triangles_intersect(a: &[Vector3<f64>; 3], b: &[Vector3<f64>; 3]) -> bool {
    (0..3).any(|i| segment_hits_triangle(&a[i], &a[(i + 1) % 3], b))
        || (0..3).any(|i| segment_hits_triangle(&b[i], &b[(i + 1) % 3], a))
}

/// Pairs of facets without shared nodes whose triangles cross.
pub fn self_intersections(mesh: &RefMesh, state: &DeformationState) -> Vec<(usize, usize)> {
    let tris: Vec<[Vector3<f64>; 3]> = (0..mesh.facets.len()).map(|f| mesh.facet_points(f, state)).collect();
    let boxes: Vec<(Vector3<f64>, Vector3<f64>)> = tris
        .iter()
        .map(|t| (t[0].inf(&t[1]).inf(&t[2]), t[0].sup(&t[1]).sup(&t[2])))
        .collect();
    let mut hits = Vec::new();
    for i in 0..tris.len() {
        for j in i + 1..tris.len() {
            let (lo_i, hi_i) = &boxes[i];
            let (lo_j, hi_j) = &boxes[j];
            if (0..3).any(|c| hi_i[c] < lo_j[c] || hi_j[c] < lo_i[c]) {
                continue;
            }
            let shared = mesh.facets[i].nodes.iter().any(|n| mesh.facets[j].nodes.contains(n));
            if !shared && triangles_intersect(&tris[i], &tris[j]) {
                hits.push((i, j));
            }
        }
    }
    hits
}
