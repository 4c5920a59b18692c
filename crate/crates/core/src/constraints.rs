//! Tendon and enclosed-volume constraints.
//!
//! Every row is reported in the form `c(x) = 0` or `c(x) ≤ 0` together with
//! its gradient with respect to nodal positions. Tendon rows act on the
//! polyline through a seam's deformed nodes.

use std::collections::BTreeSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gore_mesh::{DeformationState, RefMesh, Seam};
use crate::loads::{facet_volume_contribution, facet_volume_gradient};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TendonSense {
    #[serde(rename = "le")]
    AtMost,
    #[serde(rename = "eq")]
    Equal,
    #[serde(rename = "ge")]
    AtLeast,
}

impl std::str::FromStr for TendonSense {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "le" | "<=" => Ok(Self::AtMost),
            "eq" | "=" => Ok(Self::Equal),
            "ge" | ">=" => Ok(Self::AtLeast),
            other => Err(Error::Config(format!("unknown tendon sense '{other}'"))),
        }
    }
}

/// Which function of the tendon strain is constrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TendonForm {
    /// `ε` itself.
    #[default]
    Strain,
    /// The relaxed tendon energy `S*(ε)`.
    RelaxedEnergy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TendonConstraint {
    pub seam: usize,
    /// Unstretched tendon length L_t (m).
    pub rest_length: f64,
    /// Stiffness K (N).
    pub stiffness: f64,
    pub sense: TendonSense,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub tendons: Vec<TendonConstraint>,
    #[serde(default)]
    pub form: TendonForm,
    /// Enclosed volume ω0 (m³) of a closed system.
    pub volume: Option<f64>,
}

impl ConstraintSet {
    /// One tendon per mesh seam, all with the same rest length and sense.
    pub fn tendons_on_all_seams(mesh: &RefMesh, rest_length: f64, sense: TendonSense, form: TendonForm) -> Self {
        Self {
            tendons: (0..mesh.seams.len())
                .map(|seam| TendonConstraint {
                    seam,
                    rest_length,
                    stiffness: 1.0,
                    sense,
                })
                .collect(),
            form,
            volume: None,
        }
    }

    pub fn with_volume(mut self, omega0: Option<f64>) -> Self {
        self.volume = omega0;
        self
    }

    pub fn validate(&self, mesh: &RefMesh) -> Result<()> {
        let mut seen = BTreeSet::new();
        for t in &self.tendons {
            if t.seam >= mesh.seams.len() {
                return Err(Error::Config(format!(
                    "tendon references seam {} but the mesh has {}",
                    t.seam,
                    mesh.seams.len()
                )));
            }
            if !seen.insert(t.seam) {
                return Err(Error::Config(format!("seam {} has more than one tendon constraint", t.seam)));
            }
            if !(t.rest_length > 0.0 && t.rest_length.is_finite()) {
                return Err(Error::Config(format!("tendon rest length must be positive, got {}", t.rest_length)));
            }
            if !(t.stiffness > 0.0 && t.stiffness.is_finite()) {
                return Err(Error::Config(format!("tendon stiffness must be positive, got {}", t.stiffness)));
            }
            if mesh.seams[t.seam].nodes.len() < 2 {
                return Err(Error::Config(format!("seam {} has fewer than two nodes", t.seam)));
            }
        }
        if let Some(w) = self.volume {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("target volume must be positive, got {w}")));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.tendons.is_empty() && self.volume.is_none()
    }
}

/// Polyline length through the seam's deformed nodes.
pub fn tendon_length(state: &DeformationState, seam: &Seam) -> f64 {
    polyline_length(seam.nodes.iter().map(|&n| state.positions[n]))
}

pub fn polyline_length(points: impl IntoIterator<Item = Vector3<f64>>) -> f64 {
    let mut it = points.into_iter();
    let Some(mut prev) = it.next() else { return 0.0 };
    let mut len = 0.0;
    for p in it {
        len += (p - prev).norm();
        prev = p;
    }
    len
}

/// Gradient of [`tendon_length`] as (node, ∂L/∂x) pairs; repeated nodes
/// are accumulated.
pub fn tendon_length_gradient(state: &DeformationState, seam: &Seam) -> Vec<(usize, Vector3<f64>)> {
    let mut out: Vec<(usize, Vector3<f64>)> = seam.nodes.iter().map(|&n| (n, Vector3::zeros())).collect();
    for k in 1..seam.nodes.len() {
        let d = state.positions[seam.nodes[k]] - state.positions[seam.nodes[k - 1]];
        let len = d.norm();
        if len > 0.0 {
            let u = d / len;
            out[k].1 += u;
            out[k - 1].1 -= u;
        }
    }
    out
}

#[inline]
pub fn tendon_strain(length: f64, rest_length: f64) -> f64 {
    (length - rest_length) / rest_length
}

/// `S*(ε) = ½ K ε² L_t` for a stretched tendon, zero otherwise.
#[inline]
pub fn tendon_energy_relaxed(strain: f64, stiffness: f64, rest_length: f64) -> f64 {
    if strain > 0.0 {
        0.5 * stiffness * strain * strain * rest_length
    } else {
        0.0
    }
}

/// `dS*/dε`.
#[inline]
pub fn tendon_energy_relaxed_slope(strain: f64, stiffness: f64, rest_length: f64) -> f64 {
    if strain > 0.0 {
        stiffness * strain * rest_length
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowKind {
    Tendon(usize),
    Volume,
}

/// One constraint row with its gradient over nodal positions.
#[derive(Debug, Clone)]
pub struct ConstraintRow {
    pub kind: RowKind,
    pub value: f64,
    pub gradient: Vec<(usize, Vector3<f64>)>,
}

#[derive(Debug, Clone, Default)]
pub struct ConstraintSystem {
    /// Rows with `c = 0`.
    pub equalities: Vec<ConstraintRow>,
    /// Rows with `c ≤ 0`.
    pub inequalities: Vec<ConstraintRow>,
}

impl ConstraintSystem {
    pub fn is_empty(&self) -> bool {
        self.equalities.is_empty() && self.inequalities.is_empty()
    }

    pub fn len(&self) -> usize {
        self.equalities.len() + self.inequalities.len()
    }

    /// Largest violation over all rows.
    pub fn max_violation(&self) -> f64 {
        let eq = self.equalities.iter().map(|r| r.value.abs());
        let ineq = self.inequalities.iter().map(|r| r.value.max(0.0));
        eq.chain(ineq).fold(0.0, f64::max)
    }
}

/// Volume of the whole balloon represented by the mesh.
pub fn enclosed_volume(mesh: &RefMesh, state: &DeformationState) -> f64 {
    mesh.copies()
        * (0..mesh.facets.len())
            .map(|f| facet_volume_contribution(&mesh.facet_points(f, state)))
            .sum::<f64>()
}

pub fn enclosed_volume_gradient(mesh: &RefMesh, state: &DeformationState) -> Vec<(usize, Vector3<f64>)> {
    let copies = mesh.copies();
    let mut g = vec![Vector3::zeros(); state.positions.len()];
    for (f, facet) in mesh.facets.iter().enumerate() {
        let dv = facet_volume_gradient(&mesh.facet_points(f, state));
        for (k, &n) in facet.nodes.iter().enumerate() {
            g[n] += copies * dv[k];
        }
    }
    g.into_iter().enumerate().filter(|(_, v)| *v != Vector3::zeros()).collect()
}

/// Value and nodal gradient of one tendon row before the sense is applied.
pub fn tendon_row(state: &DeformationState, seam: &Seam, t: &TendonConstraint, form: TendonForm) -> (f64, Vec<(usize, Vector3<f64>)>) {
    let len = tendon_length(state, seam);
    let eps = tendon_strain(len, t.rest_length);
    let (value, slope) = match form {
        TendonForm::Strain => (eps, 1.0 / t.rest_length),
        TendonForm::RelaxedEnergy => (
            tendon_energy_relaxed(eps, t.stiffness, t.rest_length),
            tendon_energy_relaxed_slope(eps, t.stiffness, t.rest_length) / t.rest_length,
        ),
    };
    let mut grad = tendon_length_gradient(state, seam);
    grad.iter_mut().for_each(|(_, g)| *g *= slope);
    (value, grad)
}

/// Evaluates every configured row.
pub fn assemble_constraints(mesh: &RefMesh, state: &DeformationState, set: &ConstraintSet) -> Result<ConstraintSystem> {
    set.validate(mesh)?;
    let mut sys = ConstraintSystem::default();
    for (i, t) in set.tendons.iter().enumerate() {
        let (value, gradient) = tendon_row(state, &mesh.seams[t.seam], t, set.form);
        let row = |value: f64, gradient: Vec<(usize, Vector3<f64>)>| ConstraintRow {
            kind: RowKind::Tendon(i),
            value,
            gradient,
        };
        match t.sense {
            TendonSense::AtMost => sys.inequalities.push(row(value, gradient)),
            TendonSense::Equal => sys.equalities.push(row(value, gradient)),
            TendonSense::AtLeast => sys
                .inequalities
                .push(row(-value, gradient.into_iter().map(|(n, g)| (n, -g)).collect())),
        }
    }
    if let Some(w) = set.volume {
        sys.equalities.push(ConstraintRow {
            kind: RowKind::Volume,
            value: enclosed_volume(mesh, state) - w,
            gradient: enclosed_volume_gradient(mesh, state),
        });
    }
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gore_mesh::{build_mesh, Provenance, SymmetryMode};
    use crate::shape_finding::GorePattern;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn line_state(points: Vec<Vector3<f64>>) -> (DeformationState, Seam) {
        let seam = Seam {
            nodes: (0..points.len()).collect(),
            weight: 1.0,
            angle: 0.0,
        };
        let state = DeformationState {
            positions: points,
            provenance: Provenance::Iterate,
        };
        (state, seam)
    }

    fn semicircle(n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|i| {
                let t = PI * i as f64 / (n - 1) as f64;
                Vector3::new(t.cos(), 0.0, t.sin())
            })
            .collect()
    }

    #[test]
    fn straight_seam_length() {
        let (s, seam) = line_state((0..6).map(|i| Vector3::new(0.0, 0.0, i as f64)).collect());
        assert!((tendon_length(&s, &seam) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn semicircle_length_converges_monotonically() {
        let (s, seam) = line_state(semicircle(100));
        assert!((tendon_length(&s, &seam) - PI).abs() < 2e-4);
        let mut prev = 0.0;
        for n in [3, 5, 9, 17, 33, 65, 129, 257] {
            let (s, seam) = line_state(semicircle(n));
            let len = tendon_length(&s, &seam);
            assert!(len > prev && len < PI);
            prev = len;
        }
    }

    #[test]
    fn strain_and_relaxed_energy_values() {
        assert_eq!(tendon_strain(7.0, 7.0), 0.0);
        assert!((tendon_strain(1.01 * 3.0, 3.0) - 0.01).abs() < 1e-15);
        assert!((tendon_strain(0.98 * 100.0, 100.0) + 0.02).abs() < 1e-14);
        assert_eq!(tendon_energy_relaxed(-0.01, 1.0, 100.0), 0.0);
        assert!((tendon_energy_relaxed(0.01, 1.0, 100.0) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn relaxed_energy_is_c1_at_zero() {
        for h in [1e-4, 1e-6, 1e-8] {
            let (k, lt) = (3.0, 50.0);
            assert!(tendon_energy_relaxed(h, k, lt) <= 0.5 * k * lt * h * h * (1.0 + 1e-12));
            assert_eq!(tendon_energy_relaxed(-h, k, lt), 0.0);
            assert!(tendon_energy_relaxed_slope(h, k, lt).abs() <= k * lt * h * (1.0 + 1e-12));
            assert_eq!(tendon_energy_relaxed_slope(-h, k, lt), 0.0);
        }
    }

    fn fd_row(state: &DeformationState, seam: &Seam, t: &TendonConstraint, form: TendonForm) -> f64 {
        let (_, grad) = tendon_row(state, seam, t, form);
        let mut worst: f64 = 0.0;
        let scale = grad.iter().map(|(_, g)| g.amax()).fold(1e-300, f64::max);
        for (n, g) in grad {
            for c in 0..3 {
                let h = 1e-6;
                let mut p = state.clone();
                p.positions[n][c] += h;
                let mut m = state.clone();
                m.positions[n][c] -= h;
                let fd = (tendon_row(&p, seam, t, form).0 - tendon_row(&m, seam, t, form).0) / (2.0 * h);
                worst = worst.max((fd - g[c]).abs() / scale);
            }
        }
        worst
    }

    #[test]
    fn tendon_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let pts: Vec<_> = semicircle(12)
                .into_iter()
                .map(|p| p * 10.0 + Vector3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)))
                .collect();
            let (s, seam) = line_state(pts);
            let len = tendon_length(&s, &seam);
            // Alternate between stretched and slack tendons.
            let rest = if trial % 2 == 0 { 0.99 * len } else { 1.01 * len };
            let t = TendonConstraint {
                seam: 0,
                rest_length: rest,
                stiffness: 1.0,
                sense: TendonSense::AtMost,
            };
            assert!(fd_row(&s, &seam, &t, TendonForm::Strain) < 1e-6);
            assert!(fd_row(&s, &seam, &t, TendonForm::RelaxedEnergy) < 1e-6);
            if trial % 2 == 1 {
                let (_, g) = tendon_row(&s, &seam, &t, TendonForm::RelaxedEnergy);
                assert!(g.iter().all(|(_, v)| *v == Vector3::zeros()));
            }
        }
    }

    fn mesh_and_state() -> (RefMesh, DeformationState) {
        let pattern = GorePattern {
            n_gores: 100,
            ..GorePattern::rectangle(0.5, 10.0)
        };
        let mesh = build_mesh(&pattern, 3, 20, SymmetryMode::HalfGore).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut state = DeformationState::flat_reference(&mesh);
        for (n, p) in state.positions.iter_mut().enumerate() {
            let v = mesh.nodes[n].v;
            *p = Vector3::new(5.0 + 0.2 * v.sin(), p.x, v) + 0.01 * Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        }
        let state = mesh.project(&state);
        (mesh, state)
    }

    #[test]
    fn empty_set_gives_empty_system() {
        let (mesh, state) = mesh_and_state();
        let sys = assemble_constraints(&mesh, &state, &ConstraintSet::default()).unwrap();
        assert!(sys.is_empty());
        assert_eq!(sys.max_violation(), 0.0);
    }

    #[test]
    fn half_gore_has_one_tendon_row() {
        let (mesh, state) = mesh_and_state();
        let set = ConstraintSet::tendons_on_all_seams(&mesh, 10.0, TendonSense::AtMost, TendonForm::Strain);
        let sys = assemble_constraints(&mesh, &state, &set).unwrap();
        assert_eq!(sys.inequalities.len(), 1);
        assert!(sys.equalities.is_empty());
    }

    #[test]
    fn duplicate_seams_are_rejected() {
        let (mesh, state) = mesh_and_state();
        let mut set = ConstraintSet::tendons_on_all_seams(&mesh, 10.0, TendonSense::AtMost, TendonForm::Strain);
        set.tendons.push(TendonConstraint {
            sense: TendonSense::Equal,
            ..set.tendons[0]
        });
        assert!(matches!(assemble_constraints(&mesh, &state, &set), Err(Error::Config(_))));
        let bad = ConstraintSet {
            tendons: vec![TendonConstraint {
                seam: 7,
                rest_length: 1.0,
                stiffness: 1.0,
                sense: TendonSense::AtMost,
            }],
            ..Default::default()
        };
        assert!(matches!(bad.validate(&mesh), Err(Error::Config(_))));
    }

    #[test]
    fn senses_map_to_signed_rows() {
        let (mesh, state) = mesh_and_state();
        let len = tendon_length(&state, &mesh.seams[0]);
        let make = |sense| ConstraintSet::tendons_on_all_seams(&mesh, 0.9 * len, sense, TendonForm::Strain);
        let le = assemble_constraints(&mesh, &state, &make(TendonSense::AtMost)).unwrap();
        let ge = assemble_constraints(&mesh, &state, &make(TendonSense::AtLeast)).unwrap();
        let eq = assemble_constraints(&mesh, &state, &make(TendonSense::Equal)).unwrap();
        let eps = 1.0 / 0.9 - 1.0;
        assert!((le.inequalities[0].value - eps).abs() < 1e-12);
        assert!((ge.inequalities[0].value + eps).abs() < 1e-12);
        assert!((eq.equalities[0].value - eps).abs() < 1e-12);
        assert!((le.max_violation() - eps).abs() < 1e-12);
        assert_eq!(ge.max_violation(), 0.0);
    }

    #[test]
    fn volume_row_gradient_matches_finite_differences() {
        let (mesh, state) = mesh_and_state();
        let set = ConstraintSet::default().with_volume(Some(1.0));
        let sys = assemble_constraints(&mesh, &state, &set).unwrap();
        let row = &sys.equalities[0];
        assert_eq!(row.kind, RowKind::Volume);
        let scale = row.gradient.iter().map(|(_, g)| g.amax()).fold(0.0, f64::max);
        for &(n, g) in row.gradient.iter().step_by(7) {
            for c in 0..3 {
                let h = 1e-5;
                let mut p = state.clone();
                p.positions[n][c] += h;
                let mut m = state.clone();
                m.positions[n][c] -= h;
                let fd = (enclosed_volume(&mesh, &p) - enclosed_volume(&mesh, &m)) / (2.0 * h);
                assert!((fd - g[c]).abs() < 1e-6 * scale, "node {n} comp {c}: {fd} vs {}", g[c]);
            }
        }
    }

    proptest! {
        #[test]
        fn rows_are_invariant_under_rotation_about_the_axis(angle in -PI..PI) {
            let (mesh, state) = mesh_and_state();
            let set = ConstraintSet::tendons_on_all_seams(&mesh, 10.0, TendonSense::AtMost, TendonForm::Strain)
                .with_volume(Some(100.0));
            let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), angle);
            let rotated = DeformationState {
                positions: state.positions.iter().map(|p| rot * p).collect(),
                provenance: state.provenance,
            };
            let a = assemble_constraints(&mesh, &state, &set).unwrap();
            let b = assemble_constraints(&mesh, &rotated, &set).unwrap();
            prop_assert!((a.inequalities[0].value - b.inequalities[0].value).abs() < 1e-12);
            let va = a.equalities[0].value;
            let vb = b.equalities[0].value;
            prop_assert!((va - vb).abs() < 1e-12 * (1.0 + va.abs()));
        }
    }
}
