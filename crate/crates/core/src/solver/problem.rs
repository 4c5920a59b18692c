//! Energy, constraint and Hessian assembly over the free variables.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::constitutive::{film_density, principal_strains, relaxed_density, relaxed_energy, MaterialProps, Region};
use crate::constraints::{
    assemble_constraints, tendon_length, tendon_length_gradient, tendon_strain, ConstraintSet, RowKind, TendonForm,
    TendonSense,
};
use crate::error::{Error, Result};
use crate::gore_mesh::{deformation_gradient, DeformationState, RefMesh};
use crate::loads::{facet_pressure_gradient, facet_pressure_potential, facet_volume_contribution, LoadSpec};

/// Whole-balloon energy split into its parts (J).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub film: f64,
    pub pressure: f64,
    pub total: f64,
}

/// A constraint row over the free variables.
#[derive(Debug, Clone)]
pub struct DofRow {
    pub kind: RowKind,
    pub equality: bool,
    pub value: f64,
    pub gradient: DVector<f64>,
}

type Expansion = Vec<(usize, Vector3<f64>)>;

/// A discretized equilibrium problem: mesh, material, loads and constraints,
/// with fixed nodes taken from `base`.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub mesh: &'a RefMesh,
    pub material: MaterialProps,
    pub loads: LoadSpec,
    pub constraints: ConstraintSet,
    pub base: DeformationState,
    /// Weight α of the unrelaxed density in `W* + α(W − W*)`; zero for the
    /// physical problem.
    pub compression_stiffness: f64,
    expansions: Vec<Expansion>,
}

impl<'a> Problem<'a> {
    pub fn new(
        mesh: &'a RefMesh,
        material: MaterialProps,
        loads: LoadSpec,
        constraints: ConstraintSet,
        base: DeformationState,
    ) -> Result<Self> {
        material.validate()?;
        constraints.validate(mesh)?;
        if base.positions.len() != mesh.nodes.len() {
            return Err(Error::InvalidInput(format!(
                "state has {} nodes but the mesh has {}",
                base.positions.len(),
                mesh.nodes.len()
            )));
        }
        let expansions = (0..mesh.nodes.len()).map(|n| mesh.expansion(n)).collect();
        Ok(Self {
            mesh,
            material,
            loads,
            constraints,
            base,
            compression_stiffness: 0.0,
            expansions,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_dofs
    }

    pub fn state(&self, q: &DVector<f64>) -> DeformationState {
        self.mesh.positions_from_dofs(q, &self.base)
    }

    pub fn dofs(&self, state: &DeformationState) -> DVector<f64> {
        self.mesh.dofs_from_positions(state)
    }

    fn scatter(&self, node: usize, g: &Vector3<f64>, out: &mut DVector<f64>) {
        for (d, e) in &self.expansions[node] {
            out[*d] += e.dot(g);
        }
    }

    fn scatter_block(&self, a: usize, b: usize, block: &Matrix3<f64>, h: &mut DMatrix<f64>) {
        for (da, ea) in &self.expansions[a] {
            let row = block.transpose() * ea;
            for (db, eb) in &self.expansions[b] {
                h[(*da, *db)] += row.dot(eb);
            }
        }
    }

    /// Film energy of one facet (copies included) and its vertex gradient.
    fn film_terms(&self, f: usize, x: &[Vector3<f64>; 3]) -> (f64, [Vector3<f64>; 3]) {
        let facet = &self.mesh.facets[f];
        let copies = self.mesh.copies();
        let fm = deformation_gradient(facet, x);
        let (mut w, mut p) = relaxed_density(&fm, &self.material);
        let alpha = self.compression_stiffness;
        if alpha != 0.0 {
            let (wf, pf) = film_density(&fm, &self.material);
            w += alpha * (wf - w);
            p += alpha * (pf - p);
        }
        let g = p * facet.inv_edges.transpose() * (facet.ref_area * copies);
        let (g1, g2) = (g.column(0).into_owned(), g.column(1).into_owned());
        (copies * facet.ref_area * w, [-(g1 + g2), g1, g2])
    }

    /// Pressure potential of one facet (copies included) and its gradient.
    fn pressure_terms(&self, x: &[Vector3<f64>; 3]) -> (f64, [Vector3<f64>; 3]) {
        let copies = self.mesh.copies();
        let gp = facet_pressure_gradient(x, &self.loads);
        (
            copies * facet_pressure_potential(x, &self.loads),
            [gp[0] * copies, gp[1] * copies, gp[2] * copies],
        )
    }

    /// Energy of one facet (copies included) and its vertex gradient.
    fn facet_terms(&self, f: usize, x: &[Vector3<f64>; 3]) -> (f64, f64, [Vector3<f64>; 3]) {
        let (film, gf) = self.film_terms(f, x);
        let (pressure, gp) = self.pressure_terms(x);
        (film, pressure, [gf[0] + gp[0], gf[1] + gp[1], gf[2] + gp[2]])
    }

    /// Total energy and its gradient over the free variables.
    pub fn energy(&self, state: &DeformationState) -> Result<(EnergyBreakdown, DVector<f64>)> {
        let mut e = EnergyBreakdown::default();
        let mut grad = DVector::zeros(self.n_dofs());
        for (f, facet) in self.mesh.facets.iter().enumerate() {
            let x = self.mesh.facet_points(f, state);
            let (film, pressure, g) = self.facet_terms(f, &x);
            if !(film.is_finite() && pressure.is_finite() && g.iter().all(|v| v.iter().all(|c| c.is_finite()))) {
                return Err(Error::NonFinite { facet: f });
            }
            e.film += film;
            e.pressure += pressure;
            for k in 0..3 {
                self.scatter(facet.nodes[k], &g[k], &mut grad);
            }
        }
        e.total = e.film + e.pressure;
        Ok((e, grad))
    }

    /// Energy and enclosed volume (copies included, cones from `origin`)
    /// summed over `facets`.
    pub(super) fn partial_sums(&self, state: &DeformationState, facets: &[usize], origin: &Vector3<f64>) -> (f64, f64) {
        let copies = self.mesh.copies();
        facets.iter().fold((0.0, 0.0), |(e, v), &f| {
            let x = self.mesh.facet_points(f, state);
            let (film, pressure, _) = self.facet_terms(f, &x);
            let rel = [x[0] - origin, x[1] - origin, x[2] - origin];
            (e + film + pressure, v + copies * facet_volume_contribution(&rel))
        })
    }

    /// Constitutive region of each of `facets`.
    pub(super) fn regions(&self, state: &DeformationState, facets: &[usize]) -> Vec<Region> {
        facets
            .iter()
            .map(|&f| {
                let fm = deformation_gradient(&self.mesh.facets[f], &self.mesh.facet_points(f, state));
                let p = principal_strains(&fm);
                relaxed_energy(p.d1, p.d2, &self.material).region
            })
            .collect()
    }

    /// Local 9×9 energy Hessian of facet `f`, from central differences of the
    /// analytic facet gradients. The vertex step is `rel_step` times the
    /// facet's shortest reference edge.
    ///
    /// Differences that straddle a region boundary give indefinite film
    /// blocks although the relaxed density is convex in `F`, so the film
    /// block is projected onto the positive semidefinite cone.
    fn facet_hessian(&self, f: usize, state: &DeformationState, rel_step: f64) -> SMatrix<f64, 9, 9> {
        let x = self.mesh.facet_points(f, state);
        let r = &self.mesh.facets[f].reference;
        let h = rel_step * (r[1] - r[0]).norm().min((r[2] - r[1]).norm()).min((r[0] - r[2]).norm());
        let mut film = SMatrix::<f64, 9, 9>::zeros();
        let mut pressure = SMatrix::<f64, 9, 9>::zeros();
        for j in 0..3 {
            for c in 0..3 {
                let mut xp = x;
                xp[j][c] += h;
                let mut xm = x;
                xm[j][c] -= h;
                let span = xp[j][c] - xm[j][c];
                let (fp, fm) = (self.film_terms(f, &xp).1, self.film_terms(f, &xm).1);
                let (pp, pm) = (self.pressure_terms(&xp).1, self.pressure_terms(&xm).1);
                for i in 0..3 {
                    for k in 0..3 {
                        film[(3 * i + k, 3 * j + c)] = (fp[i][k] - fm[i][k]) / span;
                        pressure[(3 * i + k, 3 * j + c)] = (pp[i][k] - pm[i][k]) / span;
                    }
                }
            }
        }
        psd_projection(&(0.5 * (film + film.transpose()))) + 0.5 * (pressure + pressure.transpose())
    }

    /// Energy Hessian over the free variables; see [`Self::facet_hessian`].
    pub fn energy_hessian(&self, state: &DeformationState, rel_step: f64) -> DMatrix<f64> {
        let n = self.n_dofs();
        let mut hess = DMatrix::zeros(n, n);
        for (f, facet) in self.mesh.facets.iter().enumerate() {
            let local = self.facet_hessian(f, state, rel_step);
            for i in 0..3 {
                for j in 0..3 {
                    let block: Matrix3<f64> = local.fixed_view::<3, 3>(3 * i, 3 * j).into_owned();
                    self.scatter_block(facet.nodes[i], facet.nodes[j], &block, &mut hess);
                }
            }
        }
        hess
    }

    /// Diagonal of [`Self::energy_hessian`] without forming the matrix.
    pub fn energy_hessian_diagonal(&self, state: &DeformationState, rel_step: f64) -> DVector<f64> {
        let mut diag = DVector::zeros(self.n_dofs());
        for (f, facet) in self.mesh.facets.iter().enumerate() {
            let local = self.facet_hessian(f, state, rel_step);
            for i in 0..3 {
                for j in 0..3 {
                    let block: Matrix3<f64> = local.fixed_view::<3, 3>(3 * i, 3 * j).into_owned();
                    for (da, ea) in &self.expansions[facet.nodes[i]] {
                        for (db, eb) in &self.expansions[facet.nodes[j]] {
                            if da == db {
                                diag[*da] += ea.dot(&(block * eb));
                            }
                        }
                    }
                }
            }
        }
        diag
    }

    /// All constraint rows over the free variables; `≥` rows are negated so
    /// every inequality reads `c ≤ 0`.
    pub fn constraint_rows(&self, state: &DeformationState) -> Result<Vec<DofRow>> {
        let sys = assemble_constraints(self.mesh, state, &self.constraints)?;
        let n = self.n_dofs();
        let lift = |row: crate::constraints::ConstraintRow, equality: bool| {
            let mut g = DVector::zeros(n);
            for (node, v) in &row.gradient {
                self.scatter(*node, v, &mut g);
            }
            DofRow {
                kind: row.kind,
                equality,
                value: row.value,
                gradient: g,
            }
        };
        let mut rows: Vec<DofRow> = sys.equalities.into_iter().map(|r| lift(r, true)).collect();
        rows.extend(sys.inequalities.into_iter().map(|r| lift(r, false)));
        Ok(rows)
    }

    /// Adds `weight · ∇²c` of one row to `hess` (analytic).
    pub fn add_row_hessian(&self, state: &DeformationState, kind: RowKind, weight: f64, hess: &mut DMatrix<f64>) {
        if weight == 0.0 {
            return;
        }
        match kind {
            RowKind::Volume => {
                let w = weight * self.mesh.copies() / 6.0;
                for (f, facet) in self.mesh.facets.iter().enumerate() {
                    let x = self.mesh.facet_points(f, state);
                    for i in 0..3 {
                        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                        // ∂g_i/∂x_j = −[x_k]×, ∂g_i/∂x_k = [x_j]×
                        let bj = -x[k].cross_matrix() * w;
                        let bk = x[j].cross_matrix() * w;
                        self.scatter_block(facet.nodes[i], facet.nodes[j], &bj, hess);
                        self.scatter_block(facet.nodes[i], facet.nodes[k], &bk, hess);
                    }
                }
            }
            RowKind::Tendon(i) => {
                let t = &self.constraints.tendons[i];
                let seam = &self.mesh.seams[t.seam];
                let sign = if t.sense == TendonSense::AtLeast { -weight } else { weight };
                let eps = tendon_strain(tendon_length(state, seam), t.rest_length);
                let (slope, curvature) = match self.constraints.form {
                    TendonForm::Strain => (1.0 / t.rest_length, 0.0),
                    TendonForm::RelaxedEnergy if eps > 0.0 => (t.stiffness * eps, t.stiffness / t.rest_length),
                    TendonForm::RelaxedEnergy => (0.0, 0.0),
                };
                if slope != 0.0 {
                    for k in 1..seam.nodes.len() {
                        let (a, b) = (seam.nodes[k - 1], seam.nodes[k]);
                        let d = state.positions[b] - state.positions[a];
                        let len = d.norm();
                        if len == 0.0 {
                            continue;
                        }
                        let u = d / len;
                        let blk = (Matrix3::identity() - u * u.transpose()) * (sign * slope / len);
                        self.scatter_block(a, a, &blk, hess);
                        self.scatter_block(b, b, &blk, hess);
                        self.scatter_block(a, b, &(-blk), hess);
                        self.scatter_block(b, a, &(-blk), hess);
                    }
                }
                if curvature != 0.0 {
                    let mut gl = DVector::zeros(self.n_dofs());
                    for (node, v) in tendon_length_gradient(state, seam) {
                        self.scatter(node, &v, &mut gl);
                    }
                    hess.ger(sign * curvature, &gl, &gl, 1.0);
                }
            }
        }
    }
}

fn psd_projection(m: &SMatrix<f64, 9, 9>) -> SMatrix<f64, 9, 9> {
    let eig = m.symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return *m;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    eig.eigenvectors * SMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

/// Total energy and its gradient over the free variables of `mesh`.
pub fn total_energy(
    state: &DeformationState,
    mesh: &RefMesh,
    material: &MaterialProps,
    loads: &LoadSpec,
) -> Result<(f64, DVector<f64>)> {
    let p = Problem::new(mesh, *material, *loads, ConstraintSet::default(), state.clone())?;
    let (e, g) = p.energy(state)?;
    Ok((e.total, g))
}
