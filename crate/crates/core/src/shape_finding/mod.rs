//! Design shapes: the axisymmetric generator, pumpkin tube gores and their
//! flat cutting patterns.

mod generator;
mod gore;
pub mod ode;

pub use generator::{
    integrate_to_axis, shooting_residual, solve_generator_with, solve_zpns_generator, zpns_rhs,
    GeneratorCurve, GeneratorSample, GeneratorState, DEFAULT_SAMPLES,
};
pub use gore::{
    build_pumpkin_gore, build_pumpkin_gore_tabulated, build_zpns_gore, compute_bulge_angle,
    layflat, BulgeSample, GorePattern, GoreSurface3D, PatternSummary,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignMode {
    Zpns,
    Pumpkin,
}

impl DesignMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DesignMode::Zpns => "zpns",
            DesignMode::Pumpkin => "pumpkin",
        }
    }
}

impl std::str::FromStr for DesignMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zpns" => Ok(DesignMode::Zpns),
            "pumpkin" => Ok(DesignMode::Pumpkin),
            other => Err(Error::Config(format!("unknown design mode '{other}'"))),
        }
    }
}

/// Shape-finding inputs in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignInput {
    pub mode: DesignMode,
    pub n_gores: usize,
    /// N/m³
    pub buoyancy: f64,
    /// N
    pub payload: f64,
    /// N/m²
    pub film_weight: f64,
    /// N/m
    pub tendon_weight: f64,
    /// Pa
    #[serde(default)]
    pub constant_pressure: f64,
    /// m; pumpkin only
    #[serde(default)]
    pub bulge_radius: f64,
    /// m
    pub endplate_diameter: f64,
    /// N/m
    #[serde(default)]
    pub circumferential_stress: f64,
}

impl DesignInput {
    /// Float design of a 200-gore natural-shape balloon at b = 0.068 N/m³.
    pub fn reference_zpns() -> Self {
        Self {
            mode: DesignMode::Zpns,
            n_gores: 200,
            buoyancy: 0.068,
            payload: 4000.0,
            film_weight: 0.344,
            tendon_weight: 0.094,
            constant_pressure: 0.0,
            bulge_radius: 0.0,
            endplate_diameter: 1.32,
            circumferential_stress: 0.0,
        }
    }

    /// The same envelope as a pumpkin with 0.785 m lobes at 200 Pa.
    pub fn reference_pumpkin() -> Self {
        Self {
            mode: DesignMode::Pumpkin,
            constant_pressure: 200.0,
            bulge_radius: 0.785,
            ..Self::reference_zpns()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n_gores < 3 {
            return bad(format!("n_gores must be at least 3, got {}", self.n_gores));
        }
        let finite = [
            ("buoyancy", self.buoyancy),
            ("payload", self.payload),
            ("film_weight", self.film_weight),
            ("tendon_weight", self.tendon_weight),
            ("constant_pressure", self.constant_pressure),
            ("bulge_radius", self.bulge_radius),
            ("endplate_diameter", self.endplate_diameter),
            ("circumferential_stress", self.circumferential_stress),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if !(self.buoyancy > 0.0) {
            return bad(format!("buoyancy must be positive, got {}", self.buoyancy));
        }
        for (name, v) in [
            ("payload", self.payload),
            ("film_weight", self.film_weight),
            ("tendon_weight", self.tendon_weight),
            ("endplate_diameter", self.endplate_diameter),
        ] {
            if v < 0.0 {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        match self.mode {
            DesignMode::Zpns => {
                if self.circumferential_stress != 0.0 || self.constant_pressure != 0.0 {
                    return bad(
                        "natural-shape design requires zero circumferential stress and zero base pressure"
                            .into(),
                    );
                }
            }
            DesignMode::Pumpkin => {
                if !(self.bulge_radius > 0.0) {
                    return bad(format!(
                        "pumpkin design requires a positive bulge radius, got {}",
                        self.bulge_radius
                    ));
                }
            }
        }
        Ok(())
    }

    /// `tan(π/N)`, the slope of a gore wedge boundary.
    pub fn wedge_slope(&self) -> f64 {
        (std::f64::consts::PI / self.n_gores as f64).tan()
    }
}
