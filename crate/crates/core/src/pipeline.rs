//! Run configuration and the shapefind → mesh → solve → report pipeline.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::constitutive::MaterialProps;
use crate::constraints::{ConstraintSet, TendonForm, TendonSense};
use crate::error::{Error, Result};
use crate::gore_mesh::{build_mesh, lift_initial_guess, DeformationState, RefMesh, SymmetryMode};
use crate::loads::LoadSpec;
use crate::postprocess::{averaged_profiles, ProfileReport};
use crate::shape_finding::{
    build_pumpkin_gore, build_zpns_gore, layflat, solve_zpns_generator, DesignInput, DesignMode, GeneratorCurve,
    GorePattern, GoreSurface3D,
};
use crate::solver::{minimize, Problem, SolveConfig, SolveResult};

/// Float volume of the natural-shape design (m³).
pub const ZPNS_TARGET_VOLUME: f64 = 137_023.0;

/// Relative lift mismatch above which a warning is issued.
pub const ARCHIMEDES_WARNING: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub strips: usize,
    pub tris_per_strip: usize,
    pub symmetry: SymmetryMode,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            strips: 3,
            tris_per_strip: 100,
            symmetry: SymmetryMode::HalfGore,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TendonConfig {
    pub enabled: bool,
    pub sense: TendonSense,
    pub form: TendonForm,
    /// Fraction by which every tendon is shorter than the design length.
    pub shorten: f64,
}

impl Default for TendonConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            sense: TendonSense::AtMost,
            form: TendonForm::Strain,
            shorten: 0.0,
        }
    }
}

/// Everything needed to reproduce one run. Only `design` is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub design: DesignInput,
    #[serde(default = "MaterialProps::polyethylene_32um")]
    pub material: MaterialProps,
    /// Multiplies the film thickness of `material`.
    #[serde(default = "one")]
    pub thickness_scale: f64,
    /// Gas loading; defaults to the design's buoyancy and base pressure.
    #[serde(default)]
    pub loads: Option<LoadSpec>,
    #[serde(default)]
    pub tendons: TendonConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub solver: SolveConfig,
    /// Shooting tolerance of the generator.
    #[serde(default = "default_shape_tolerance")]
    pub shape_tolerance: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn one() -> f64 {
    1.0
}

fn default_shape_tolerance() -> f64 {
    1e-9
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/balloon")
}

/// Named experiment setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    ZpnsOpen,
    ZpnsClosed,
    PumpkinBare,
    PumpkinTendons,
    PumpkinShortened,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zpns-open" => Ok(Self::ZpnsOpen),
            "zpns-closed" => Ok(Self::ZpnsClosed),
            "pumpkin-bare" => Ok(Self::PumpkinBare),
            "pumpkin-tendons" => Ok(Self::PumpkinTendons),
            "pumpkin-shortened" => Ok(Self::PumpkinShortened),
            other => Err(Error::Config(format!("preset: unknown preset '{other}'"))),
        }
    }
}

impl RunConfig {
    pub fn new(design: DesignInput) -> Self {
        Self {
            design,
            material: MaterialProps::polyethylene_32um(),
            thickness_scale: 1.0,
            loads: None,
            tendons: TendonConfig::default(),
            mesh: MeshConfig::default(),
            solver: SolveConfig::default(),
            shape_tolerance: default_shape_tolerance(),
            output_dir: default_output_dir(),
        }
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::ZpnsOpen => Self::new(DesignInput::reference_zpns()),
            Preset::ZpnsClosed => Self::new(DesignInput::reference_zpns()).closed(ZPNS_TARGET_VOLUME),
            Preset::PumpkinBare => Self {
                thickness_scale: 4.0,
                tendons: TendonConfig {
                    enabled: false,
                    ..Default::default()
                },
                ..Self::new(DesignInput::reference_pumpkin())
            },
            Preset::PumpkinTendons => Self::new(DesignInput::reference_pumpkin()),
            Preset::PumpkinShortened => Self {
                tendons: TendonConfig {
                    shorten: 0.02,
                    ..Default::default()
                },
                ..Self::new(DesignInput::reference_pumpkin())
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The gas loading actually applied.
    pub fn loads(&self) -> LoadSpec {
        self.loads
            .unwrap_or_else(|| LoadSpec::open(self.design.buoyancy, self.design.constant_pressure))
    }

    /// Closed system with target volume `omega0`; the design pair defaults
    /// to the design buoyancy at the same volume.
    pub fn closed(mut self, omega0: f64) -> Self {
        let mut l = self.loads();
        l.target_volume = Some(omega0);
        l.design.get_or_insert((self.design.buoyancy, omega0));
        self.loads = Some(l);
        self
    }

    /// Open system at base pressure `p0`.
    pub fn open(mut self, p0: f64) -> Self {
        let mut l = self.loads();
        l.target_volume = None;
        l.constant_pressure = p0;
        self.loads = Some(l);
        self
    }

    pub fn material(&self) -> MaterialProps {
        self.material.with_thickness_scale(self.thickness_scale)
    }

    /// Checks every section, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let field = |name: &'static str| move |e: Error| Error::Config(format!("{name}: {e}"));
        self.design.validate().map_err(field("design"))?;
        if !(self.thickness_scale > 0.0 && self.thickness_scale.is_finite()) {
            return Err(Error::Config(format!(
                "thickness_scale: must be positive, got {}",
                self.thickness_scale
            )));
        }
        self.material().validate().map_err(field("material"))?;
        self.loads().validate().map_err(field("loads"))?;
        self.solver.validate().map_err(field("solver"))?;
        if self.mesh.strips == 0 || self.mesh.tris_per_strip < 2 || self.mesh.tris_per_strip % 2 != 0 {
            return Err(Error::Config(
                "mesh: needs at least one strip and an even number of at least 2 triangles per strip".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.tendons.shorten) {
            return Err(Error::Config(format!(
                "tendons.shorten: must lie in [0, 1), got {}",
                self.tendons.shorten
            )));
        }
        if !(self.shape_tolerance > 0.0) {
            return Err(Error::Config("shape_tolerance: must be positive".into()));
        }
        Ok(())
    }

    /// Relative lift mismatch when it exceeds [`ARCHIMEDES_WARNING`].
    pub fn archimedes_warning(&self) -> Option<f64> {
        self.loads().archimedes_mismatch().filter(|&m| m > ARCHIMEDES_WARNING)
    }
}

/// Design shape: generator, 3-D gore and its flat pattern.
#[derive(Debug, Clone)]
pub struct Shape {
    pub generator: GeneratorCurve,
    pub gore: GoreSurface3D,
    pub pattern: GorePattern,
}

pub fn find_shape(design: &DesignInput, tol: f64) -> Result<Shape> {
    design.validate()?;
    let generator = solve_zpns_generator(design, tol)?;
    let gore = match design.mode {
        DesignMode::Zpns => build_zpns_gore(&generator, design.n_gores)?,
        DesignMode::Pumpkin => build_pumpkin_gore(&generator, design.bulge_radius, design.n_gores)?,
    };
    let pattern = layflat(&gore);
    Ok(Shape {
        generator,
        gore,
        pattern,
    })
}

/// A meshed problem ready to solve.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub shape: Shape,
    pub mesh: RefMesh,
    pub init: DeformationState,
    pub material: MaterialProps,
    pub loads: LoadSpec,
    pub constraints: ConstraintSet,
}

impl Prepared {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let shape = find_shape(&config.design, config.shape_tolerance)?;
        Self::with_shape(config, shape)
    }

    /// Reuses an already computed shape for `config.design`.
    pub fn with_shape(config: &RunConfig, shape: Shape) -> Result<Self> {
        config.validate()?;
        let m = config.mesh;
        let mesh = build_mesh(&shape.pattern, m.strips, m.tris_per_strip, m.symmetry)?;
        let init = lift_initial_guess(&mesh, &shape.pattern, &shape.gore)?;
        let loads = config.loads();
        let t = config.tendons;
        let constraints = if t.enabled {
            let rest = shape.pattern.tendon_length * (1.0 - t.shorten);
            ConstraintSet::tendons_on_all_seams(&mesh, rest, t.sense, t.form)
        } else {
            ConstraintSet::default()
        }
        .with_volume(loads.target_volume);
        Ok(Self {
            config: config.clone(),
            shape,
            mesh,
            init,
            material: config.material(),
            loads,
            constraints,
        })
    }

    pub fn problem(&self) -> Result<Problem<'_>> {
        Problem::new(
            &self.mesh,
            self.material,
            self.loads,
            self.constraints.clone(),
            self.init.clone(),
        )
    }

    pub fn solve(&self) -> Result<SolveResult> {
        self.solve_from(&self.init)
    }

    pub fn solve_from(&self, start: &DeformationState) -> Result<SolveResult> {
        minimize(&self.problem()?, start, &self.config.solver)
    }

    pub fn report(&self, result: &SolveResult) -> Result<ProfileReport> {
        averaged_profiles(result, &self.mesh)
    }
}
