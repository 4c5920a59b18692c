//! Flat reference triangulation of gore sectors, the DOF map that encodes
//! symmetry planes and boundary conditions, and per-facet kinematics.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DVector, Matrix2, Matrix3x2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::constitutive::{
    green_strain, principal_of_symmetric, relaxed_energy, MaterialProps, Region,
};
use crate::error::{Error, Result};
use crate::shape_finding::{GorePattern, GoreSurface3D};

/// Portion of the balloon that is modelled explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "q")]
pub enum SymmetryMode {
    /// One half gore between a centerline plane and a seam plane.
    HalfGore,
    /// A sector spanning `π/q`, i.e. `N/q` half gores.
    Lobe(usize),
    /// All `2N` half gores with the last seam stitched to the first.
    Full,
}

impl SymmetryMode {
    /// Number of half gores in the sector for `n_gores`.
    pub fn half_gores(&self, n_gores: usize) -> Result<usize> {
        match *self {
            SymmetryMode::HalfGore => Ok(1),
            SymmetryMode::Lobe(q) => {
                if q == 0 || n_gores % q != 0 {
                    return Err(Error::Config(format!(
                        "lobe mode q = {q} must divide the gore count {n_gores}"
                    )));
                }
                Ok(n_gores / q)
            }
            SymmetryMode::Full => Ok(2 * n_gores),
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, SymmetryMode::Full)
    }
}

impl std::str::FromStr for SymmetryMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "half_gore" | "half-gore" | "half" => Ok(SymmetryMode::HalfGore),
            "full" => Ok(SymmetryMode::Full),
            _ => s
                .strip_prefix("lobe:")
                .or_else(|| s.strip_prefix("lobe"))
                .and_then(|q| q.trim_matches(|c| c == '(' || c == ')').parse().ok())
                .map(SymmetryMode::Lobe)
                .ok_or_else(|| Error::Config(format!("unknown symmetry mode '{s}'"))),
        }
    }
}

/// How a node's position is parameterized by the free variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DofKind {
    Free { first: usize },
    /// Confined to the vertical plane through the z-axis at azimuth `angle`.
    Plane { first: usize, angle: f64 },
    /// On the z-axis (apex).
    Axis { first: usize },
    /// Held at its initial position.
    Fixed,
    /// Slaved to the midpoint of two other nodes.
    Midpoint(usize, usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Facet {
    pub nodes: [usize; 3],
    /// Reference vertex coordinates in the facet's own gore chart.
    pub reference: [Vector2<f64>; 3],
    pub ref_area: f64,
    /// Inverse of the reference edge matrix `[P1−P0 | P2−P0]`.
    pub inv_edges: Matrix2<f64>,
    /// Global strip index.
    pub strip: usize,
    /// Position within the strip, 0 at the top.
    pub order: usize,
    pub half_gore: usize,
}

impl Facet {
    pub fn centroid(&self) -> Vector2<f64> {
        (self.reference[0] + self.reference[1] + self.reference[2]) / 3.0
    }
}

/// Where a node sits on the flat pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeChart {
    pub half_gore: usize,
    pub u: f64,
    pub v: f64,
    /// Fraction of the half-width from the centerline (−1..1).
    pub rib_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Seam {
    /// Node indices ordered bottom to top, ending at the apex.
    pub nodes: Vec<usize>,
    /// 1 for a seam inside the sector, ½ for one on a symmetry plane.
    pub weight: f64,
    /// Azimuth of the seam.
    pub angle: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefMesh {
    pub n_gores: usize,
    pub strips_per_half: usize,
    pub tris_per_strip: usize,
    pub half_gores: usize,
    pub wrapped: bool,
    pub mode: Option<SymmetryMode>,
    pub nodes: Vec<NodeChart>,
    pub facets: Vec<Facet>,
    pub dof: Vec<DofKind>,
    pub n_dofs: usize,
    pub seams: Vec<Seam>,
    pub centerline_nodes: Vec<usize>,
    pub apex: usize,
    /// Gore spacing `π/N` in azimuth.
    pub gore_spacing: f64,
    pub centerline_length: f64,
}

/// Triangulates one half gore: `strips` meridional strips of
/// `tris_per_strip` triangles each, rows uniform in the centerline coordinate.
pub fn triangulate_half_gore(pattern: &GorePattern, strips: usize, tris_per_strip: usize) -> Result<RefMesh> {
    triangulate_sector(pattern, strips, tris_per_strip, 1, false)
}

/// Triangulates `half_gores` adjacent half gores, alternating right and left
/// halves, optionally stitching the last seam column onto the first.
pub fn triangulate_sector(
    pattern: &GorePattern,
    strips: usize,
    tris_per_strip: usize,
    half_gores: usize,
    wrap: bool,
) -> Result<RefMesh> {
    if strips == 0 {
        return Err(Error::InvalidInput("need at least one strip".into()));
    }
    if tris_per_strip < 2 || tris_per_strip % 2 != 0 {
        return Err(Error::Pairing { strip: 0, count: tris_per_strip });
    }
    if half_gores == 0 || (wrap && half_gores % 2 != 0) {
        return Err(Error::InvalidInput(format!(
            "invalid half-gore count {half_gores} (wrap = {wrap})"
        )));
    }
    let rows = tris_per_strip / 2;
    let lc = pattern.centerline_length;
    let n_gores = pattern.n_gores.max(1);
    let columns = half_gores * strips + usize::from(!wrap);
    let col_id = |c: usize| if wrap { c % (half_gores * strips) } else { c };
    let grid_id = |c: usize, j: usize| col_id(c) * rows + j;
    let n_grid = columns * rows;
    let apex = n_grid;

    let v_row: Vec<f64> = (0..=rows).map(|j| lc * j as f64 / rows as f64).collect();
    let h_row: Vec<f64> = v_row
        .iter()
        .map(|&v| pattern.half_width(v))
        .collect::<Result<_>>()?;
    if h_row[..rows].iter().any(|&h| !(h > 0.0)) {
        return Err(Error::DegenerateFacet { facet: 0 });
    }

    // Chart u of local column i in half gore g at row j.
    let chart_u = |g: usize, i: usize, j: usize| -> f64 {
        let h = h_row[j];
        let frac = i as f64 / strips as f64;
        if g % 2 == 0 {
            frac * h
        } else {
            (frac - 1.0) * h
        }
    };
    let rib_fraction = |g: usize, i: usize| -> f64 {
        let frac = i as f64 / strips as f64;
        if g % 2 == 0 {
            frac
        } else {
            frac - 1.0
        }
    };

    let n_mid = half_gores * strips;
    let mut nodes = vec![
        NodeChart { half_gore: 0, u: 0.0, v: 0.0, rib_fraction: 0.0 };
        n_grid + 1 + n_mid
    ];
    let mut dof = vec![DofKind::Fixed; nodes.len()];
    for g in 0..half_gores {
        for i in 0..=strips {
            let c = g * strips + i;
            if wrap && c == half_gores * strips {
                continue;
            }
            // Home chart: first half gore that owns the column.
            if i == 0 && g > 0 {
                continue;
            }
            for j in 0..rows {
                nodes[grid_id(c, j)] = NodeChart {
                    half_gore: g,
                    u: chart_u(g, i, j),
                    v: v_row[j],
                    rib_fraction: rib_fraction(g, i),
                };
            }
        }
    }
    nodes[apex] = NodeChart { half_gore: 0, u: 0.0, v: lc, rib_fraction: 0.0 };

    let mut facets = Vec::with_capacity(half_gores * strips * tris_per_strip);
    let mut add = |nodes_ix: [usize; 3], pts: [Vector2<f64>; 3], strip: usize, order: usize, g: usize| -> Result<()> {
        let d = Matrix2::from_columns(&[pts[1] - pts[0], pts[2] - pts[0]]);
        let det = d.determinant();
        let id = facets.len();
        if !(det > 0.0) {
            return Err(Error::DegenerateFacet { facet: id });
        }
        let inv = d.try_inverse().ok_or(Error::DegenerateFacet { facet: id })?;
        facets.push(Facet {
            nodes: nodes_ix,
            reference: pts,
            ref_area: 0.5 * det,
            inv_edges: inv,
            strip,
            order,
            half_gore: g,
        });
        Ok(())
    };

    for g in 0..half_gores {
        for k in 0..strips {
            let strip = g * strips + k;
            let (c0, c1) = (g * strips + k, g * strips + k + 1);
            let p = |i: usize, j: usize| Vector2::new(chart_u(g, i, j), v_row[j]);
            // Top cell: split at the midpoint of its lower edge.
            let (a, b) = (grid_id(c0, rows - 1), grid_id(c1, rows - 1));
            let m = n_grid + 1 + strip;
            let (pa, pb) = (p(k, rows - 1), p(k + 1, rows - 1));
            let pm = 0.5 * (pa + pb);
            let papex = Vector2::new(0.0, lc);
            nodes[m] = NodeChart {
                half_gore: g,
                u: pm.x,
                v: pm.y,
                rib_fraction: 0.5 * (rib_fraction(g, k) + rib_fraction(g, k + 1)),
            };
            dof[m] = DofKind::Midpoint(a, b);
            add([a, m, apex], [pa, pm, papex], strip, 0, g)?;
            add([m, b, apex], [pm, pb, papex], strip, 1, g)?;
            let mut order = 2;
            for j in (0..rows - 1).rev() {
                let ids = [grid_id(c0, j), grid_id(c1, j), grid_id(c1, j + 1), grid_id(c0, j + 1)];
                let pts = [p(k, j), p(k + 1, j), p(k + 1, j + 1), p(k, j + 1)];
                let (up, low) = if j % 2 == 0 {
                    (([0, 2, 3]), ([0, 1, 2]))
                } else {
                    (([1, 2, 3]), ([0, 1, 3]))
                };
                add(up.map(|t| ids[t]), up.map(|t| pts[t]), strip, order, g)?;
                add(low.map(|t| ids[t]), low.map(|t| pts[t]), strip, order + 1, g)?;
                order += 2;
            }
        }
    }

    let spacing = PI / n_gores as f64;
    let mut seams = Vec::new();
    let mut centerline_nodes = Vec::new();
    let boundary_cols = if wrap { half_gores } else { half_gores + 1 };
    for mcol in 0..boundary_cols {
        let c = mcol * strips;
        let mut list: Vec<usize> = (0..rows).map(|j| grid_id(c, j)).collect();
        list.push(apex);
        let on_plane = !wrap && (mcol == 0 || mcol == half_gores);
        if mcol % 2 == 1 {
            seams.push(Seam {
                nodes: list,
                weight: if on_plane { 0.5 } else { 1.0 },
                angle: mcol as f64 * spacing,
            });
        } else {
            centerline_nodes.extend_from_slice(&list[..rows]);
        }
    }

    let mut mesh = RefMesh {
        n_gores,
        strips_per_half: strips,
        tris_per_strip,
        half_gores,
        wrapped: wrap,
        mode: None,
        nodes,
        facets,
        dof,
        n_dofs: 0,
        seams,
        centerline_nodes,
        apex,
        gore_spacing: spacing,
        centerline_length: lc,
    };
    mesh.assign_dofs(None);
    Ok(mesh)
}

/// Builds the mesh for a symmetry mode and applies its constraints.
pub fn build_mesh(pattern: &GorePattern, strips: usize, tris_per_strip: usize, mode: SymmetryMode) -> Result<RefMesh> {
    let k = mode.half_gores(pattern.n_gores)?;
    let mesh = triangulate_sector(pattern, strips, tris_per_strip, k, mode.is_full())?;
    apply_symmetry(&mesh, mode)
}

/// Assigns the DOF map for a symmetry mode: symmetry-plane nodes keep two
/// in-plane DOFs, the apex keeps z, the base row is fixed.
pub fn apply_symmetry(mesh: &RefMesh, mode: SymmetryMode) -> Result<RefMesh> {
    let k = mode.half_gores(mesh.n_gores)?;
    if k != mesh.half_gores || mode.is_full() != mesh.wrapped {
        return Err(Error::Config(format!(
            "symmetry mode {mode:?} needs {k} half gores (wrapped = {}), mesh has {} (wrapped = {})",
            mode.is_full(),
            mesh.half_gores,
            mesh.wrapped
        )));
    }
    let mut out = mesh.clone();
    out.mode = Some(mode);
    out.assign_dofs(Some(mode));
    Ok(out)
}

impl RefMesh {
    pub fn rows(&self) -> usize {
        self.tris_per_strip / 2
    }

    pub fn n_strips(&self) -> usize {
        self.half_gores * self.strips_per_half
    }

    /// Number of copies of the sector that make up the whole balloon.
    pub fn copies(&self) -> f64 {
        if self.wrapped {
            1.0
        } else {
            2.0 * self.n_gores as f64 / self.half_gores as f64
        }
    }

    fn grid_column_of(&self, node: usize) -> Option<usize> {
        let rows = self.rows();
        let n_grid = self.apex;
        (node < n_grid).then(|| node / rows)
    }

    fn assign_dofs(&mut self, mode: Option<SymmetryMode>) {
        let rows = self.rows();
        let strips = self.strips_per_half;
        let last_col = self.half_gores * strips;
        let mut next = 0;
        for n in 0..self.nodes.len() {
            if let DofKind::Midpoint(..) = self.dof[n] {
                continue;
            }
            let kind = if n == self.apex {
                DofKind::Axis { first: next }
            } else if n % rows == 0 && n < self.apex {
                DofKind::Fixed
            } else {
                let col = self.grid_column_of(n).unwrap_or(usize::MAX);
                let plane = match mode {
                    Some(m) if !m.is_full() => {
                        if col == 0 {
                            Some(0.0)
                        } else if col == last_col {
                            Some(self.half_gores as f64 * self.gore_spacing)
                        } else {
                            None
                        }
                    }
                    _ => None,
                };
                match plane {
                    Some(angle) => DofKind::Plane { first: next, angle },
                    None => DofKind::Free { first: next },
                }
            };
            next += match kind {
                DofKind::Free { .. } => 3,
                DofKind::Plane { .. } => 2,
                DofKind::Axis { .. } => 1,
                _ => 0,
            };
            self.dof[n] = kind;
        }
        self.n_dofs = next;
    }

    /// Linear expansion of a node position in terms of the free variables,
    /// as `(dof index, direction)` pairs; `None` for fixed nodes.
    pub fn expansion(&self, node: usize) -> Vec<(usize, Vector3<f64>)> {
        match self.dof[node] {
            DofKind::Free { first } => vec![
                (first, Vector3::x()),
                (first + 1, Vector3::y()),
                (first + 2, Vector3::z()),
            ],
            DofKind::Plane { first, angle } => vec![
                (first, Vector3::new(angle.cos(), angle.sin(), 0.0)),
                (first + 1, Vector3::z()),
            ],
            DofKind::Axis { first } => vec![(first, Vector3::z())],
            DofKind::Fixed => vec![],
            DofKind::Midpoint(a, b) => {
                let mut e = self.expansion(a);
                e.extend(self.expansion(b));
                e.iter_mut().for_each(|(_, d)| *d *= 0.5);
                e
            }
        }
    }

    /// Free variables of a state (orthogonal projection onto each DOF space).
    pub fn dofs_from_positions(&self, state: &DeformationState) -> DVector<f64> {
        let mut q = DVector::zeros(self.n_dofs);
        for (n, kind) in self.dof.iter().enumerate() {
            if matches!(kind, DofKind::Midpoint(..) | DofKind::Fixed) {
                continue;
            }
            for (d, e) in self.expansion(n) {
                q[d] = e.dot(&state.positions[n]);
            }
        }
        q
    }

    /// Positions from free variables; fixed nodes are taken from `base`.
    pub fn positions_from_dofs(&self, q: &DVector<f64>, base: &DeformationState) -> DeformationState {
        let mut positions = base.positions.clone();
        for (n, kind) in self.dof.iter().enumerate() {
            match kind {
                DofKind::Fixed | DofKind::Midpoint(..) => {}
                _ => {
                    positions[n] = self
                        .expansion(n)
                        .iter()
                        .fold(Vector3::zeros(), |acc, (d, e)| acc + e * q[*d]);
                }
            }
        }
        for (n, kind) in self.dof.iter().enumerate() {
            if let DofKind::Midpoint(a, b) = *kind {
                positions[n] = 0.5 * (positions[a] + positions[b]);
            }
        }
        DeformationState {
            positions,
            provenance: base.provenance,
        }
    }

    /// Projects a state onto the admissible set, keeping fixed nodes as given.
    pub fn project(&self, state: &DeformationState) -> DeformationState {
        self.positions_from_dofs(&self.dofs_from_positions(state), state)
    }

    /// Worst violation of the plane, axis and midpoint conditions.
    pub fn constraint_violation(&self, state: &DeformationState) -> f64 {
        let x = &state.positions;
        self.dof
            .iter()
            .enumerate()
            .map(|(n, kind)| match *kind {
                DofKind::Plane { angle, .. } => {
                    Vector3::new(-angle.sin(), angle.cos(), 0.0).dot(&x[n]).abs()
                }
                DofKind::Axis { .. } => x[n].x.abs().max(x[n].y.abs()),
                DofKind::Midpoint(a, b) => (x[n] - 0.5 * (x[a] + x[b])).amax(),
                _ => 0.0,
            })
            .fold(0.0, f64::max)
    }

    /// Counts of nodes per DOF kind: (free, plane, axis, fixed, midpoint).
    pub fn dof_counts(&self) -> [usize; 5] {
        let mut c = [0; 5];
        for k in &self.dof {
            c[match k {
                DofKind::Free { .. } => 0,
                DofKind::Plane { .. } => 1,
                DofKind::Axis { .. } => 2,
                DofKind::Fixed => 3,
                DofKind::Midpoint(..) => 4,
            }] += 1;
        }
        c
    }

    pub fn total_ref_area(&self) -> f64 {
        self.facets.iter().map(|f| f.ref_area).sum()
    }

    /// Facet indices of one strip, top to bottom.
    pub fn strip_facets(&self, strip: usize) -> Vec<usize> {
        let per = self.tris_per_strip;
        (strip * per..(strip + 1) * per).collect()
    }

    /// Deformed vertices of a facet.
    pub fn facet_points(&self, f: usize, state: &DeformationState) -> [Vector3<f64>; 3] {
        self.facets[f].nodes.map(|n| state.positions[n])
    }

    /// Writes vertex and face lines (`v x y z`, `f i j k`, 1-based).
    pub fn write_polygons<W: Write>(&self, state: &DeformationState, mut w: W) -> Result<()> {
        writeln!(w, "# {} vertices, {} faces", state.positions.len(), self.facets.len())?;
        for p in &state.positions {
            writeln!(w, "v {:.12e} {:.12e} {:.12e}", p.x, p.y, p.z)?;
        }
        for f in &self.facets {
            writeln!(w, "f {} {} {}", f.nodes[0] + 1, f.nodes[1] + 1, f.nodes[2] + 1)?;
        }
        Ok(())
    }

    pub fn write_nodes_csv<W: Write>(&self, state: &DeformationState, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
        out.write_record(["node", "half_gore", "u", "v", "kind", "x", "y", "z"]).map_err(io)?;
        for (n, (c, p)) in self.nodes.iter().zip(&state.positions).enumerate() {
            let kind = match self.dof[n] {
                DofKind::Free { .. } => "free",
                DofKind::Plane { .. } => "plane",
                DofKind::Axis { .. } => "axis",
                DofKind::Fixed => "fixed",
                DofKind::Midpoint(..) => "midpoint",
            };
            out.write_record([
                n.to_string(),
                c.half_gore.to_string(),
                format!("{:.12e}", c.u),
                format!("{:.12e}", c.v),
                kind.to_string(),
                format!("{:.12e}", p.x),
                format!("{:.12e}", p.y),
                format!("{:.12e}", p.z),
            ])
            .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    InitialGuess,
    Iterate,
    Converged,
}

/// Nodal positions of one configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeformationState {
    pub positions: Vec<Vector3<f64>>,
    pub provenance: Provenance,
}

impl DeformationState {
    /// The flat reference embedded in the z = 0 plane, using each node's
    /// home chart.
    pub fn flat_reference(mesh: &RefMesh) -> Self {
        Self {
            positions: mesh.nodes.iter().map(|c| Vector3::new(c.u, c.v, 0.0)).collect(),
            provenance: Provenance::InitialGuess,
        }
    }

    pub fn max_displacement(&self, other: &DeformationState) -> f64 {
        self.positions
            .iter()
            .zip(&other.positions)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Constant-strain gradient `F = [x1−x0 | x2−x0] D⁻¹`.
pub fn deformation_gradient(facet: &Facet, x: &[Vector3<f64>; 3]) -> Matrix3x2<f64> {
    Matrix3x2::from_columns(&[x[1] - x[0], x[2] - x[0]]) * facet.inv_edges
}

/// Checked variant for externally built facets.
pub fn deformation_gradient_checked(reference: &[Vector2<f64>; 3], x: &[Vector3<f64>; 3]) -> Result<Matrix3x2<f64>> {
    let d = Matrix2::from_columns(&[reference[1] - reference[0], reference[2] - reference[0]]);
    if d.determinant().abs() < 1e-300 {
        return Err(Error::DegenerateFacet { facet: usize::MAX });
    }
    let inv = d.try_inverse().ok_or(Error::DegenerateFacet { facet: usize::MAX })?;
    Ok(Matrix3x2::from_columns(&[x[1] - x[0], x[2] - x[0]]) * inv)
}

/// Kinematic and constitutive state of one facet.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FacetResponse {
    pub f: Matrix3x2<f64>,
    pub c: Matrix2<f64>,
    pub d1: f64,
    pub d2: f64,
    pub n1: Vector2<f64>,
    pub n2: Vector2<f64>,
    pub mu1: f64,
    pub mu2: f64,
    pub region: Region,
    pub energy_density: f64,
    pub ref_area: f64,
    pub strip: usize,
    pub order: usize,
}

pub fn facet_response(mesh: &RefMesh, f: usize, state: &DeformationState, mat: &MaterialProps) -> FacetResponse {
    let facet = &mesh.facets[f];
    let fm = deformation_gradient(facet, &mesh.facet_points(f, state));
    let c = fm.transpose() * fm;
    let p = principal_of_symmetric(&green_strain(&fm));
    let r = relaxed_energy(p.d1, p.d2, mat);
    FacetResponse {
        f: fm,
        c,
        d1: p.d1,
        d2: p.d2,
        n1: p.n1,
        n2: p.n2,
        mu1: r.mu1,
        mu2: r.mu2,
        region: r.region,
        energy_density: r.w_star,
        ref_area: facet.ref_area,
        strip: facet.strip,
        order: facet.order,
    }
}

pub fn facet_responses(mesh: &RefMesh, state: &DeformationState, mat: &MaterialProps) -> Vec<FacetResponse> {
    (0..mesh.facets.len()).map(|f| facet_response(mesh, f, state, mat)).collect()
}

/// Maps every node onto the design surface: the centerline coordinate picks
/// the generator station and the rib coordinate is proportional to the
/// half-width. The result is projected onto the admissible set.
pub fn lift_initial_guess(mesh: &RefMesh, pattern: &GorePattern, gore: &GoreSurface3D) -> Result<DeformationState> {
    let spacing = mesh.gore_spacing;
    let lc = pattern.centerline_length;
    let mut positions = vec![Vector3::zeros(); mesh.nodes.len()];
    for (n, c) in mesh.nodes.iter().enumerate() {
        if let DofKind::Midpoint(..) = mesh.dof[n] {
            continue;
        }
        positions[n] = if n == mesh.apex {
            gore.centerline(gore.generator.total_length)?
        } else {
            if c.v > lc * (1.0 + 1e-12) || c.v < -1e-12 * lc {
                return Err(Error::Extrapolation { value: c.v, lo: 0.0, hi: lc });
            }
            let s = pattern.arclength_at(c.v)?;
            let psi = c.rib_fraction * gore.rib_half_angle(s)?;
            let center = if c.half_gore % 2 == 0 {
                c.half_gore as f64 * spacing
            } else {
                (c.half_gore + 1) as f64 * spacing
            };
            let p = gore.point(s, psi)?;
            let (sn, cs) = center.sin_cos();
            Vector3::new(cs * p.x - sn * p.y, sn * p.x + cs * p.y, p.z)
        };
    }
    for (n, kind) in mesh.dof.iter().enumerate() {
        if let DofKind::Midpoint(a, b) = *kind {
            positions[n] = 0.5 * (positions[a] + positions[b]);
        }
    }
    let raw = DeformationState {
        positions,
        provenance: Provenance::InitialGuess,
    };
    Ok(mesh.project(&raw))
}
