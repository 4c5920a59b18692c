use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::generator::{csv_err, GeneratorCurve};
use super::DesignMode;
use crate::error::{Error, Result};

/// Rib half-angle at one generator sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BulgeSample {
    pub s: f64,
    pub angle: f64,
    /// d(angle)/ds
    pub slope: f64,
}

/// Bulge angle from the wedge fit: the rib endpoints of the tube around the
/// generator land on the planes `y = ±tan(π/N) x`.
pub fn compute_bulge_angle(gen: &GeneratorCurve, r_b: f64, n_gores: usize) -> Result<Vec<BulgeSample>> {
    if !(r_b > 0.0) {
        return Err(Error::InvalidInput(format!("bulge radius must be positive, got {r_b}")));
    }
    if n_gores < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 gores, got {n_gores}")));
    }
    let t = (PI / n_gores as f64).tan();
    gen.samples
        .iter()
        .map(|p| {
            let r = p.r.max(0.0);
            if !(r_b > t * r) {
                return Err(Error::InfeasibleLobe { s: p.s });
            }
            let (st, ct) = p.theta.sin_cos();
            let q = (1.0 + t * t * ct * ct).sqrt();
            let amp = r_b * q;
            let u = t * r / amp;
            let angle = ((t * ct).atan() + u.asin()).max(0.0);
            // Chain rule with R' = sin θ and θ' = −κ.
            let dtheta = -p.kappa;
            let dphi = -t * st / (q * q) * dtheta;
            let damp = -r_b * t * t * ct * st / q * dtheta;
            let du = t * st / amp - t * r * damp / (amp * amp);
            let slope = dphi + du / (1.0 - u * u).sqrt();
            Ok(BulgeSample { s: p.s, angle, slope })
        })
        .collect()
}

/// Tubular (pumpkin) or developable (natural-shape) gore surface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoreSurface3D {
    pub mode: DesignMode,
    pub n_gores: usize,
    /// Lobe radius; zero for natural-shape gores.
    pub bulge_radius: f64,
    pub generator: GeneratorCurve,
    /// Half-angle of the rib at each generator sample.
    pub bulge: Vec<BulgeSample>,
    /// Vertical shift placing the base of the gore centerline at z = 0.
    pub z_offset: f64,
}

/// Natural-shape gore: the wedge of the surface of revolution.
pub fn build_zpns_gore(gen: &GeneratorCurve, n_gores: usize) -> Result<GoreSurface3D> {
    if n_gores < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 gores, got {n_gores}")));
    }
    let half = PI / n_gores as f64;
    Ok(GoreSurface3D {
        mode: DesignMode::Zpns,
        n_gores,
        bulge_radius: 0.0,
        bulge: gen
            .samples
            .iter()
            .map(|p| BulgeSample { s: p.s, angle: half, slope: 0.0 })
            .collect(),
        generator: gen.clone(),
        z_offset: -gen.samples[0].z,
    })
}

/// Pumpkin gore from the wedge-fit bulge angle.
pub fn build_pumpkin_gore(gen: &GeneratorCurve, r_b: f64, n_gores: usize) -> Result<GoreSurface3D> {
    let bulge = compute_bulge_angle(gen, r_b, n_gores)?;
    pumpkin_surface(gen, r_b, n_gores, bulge)
}

/// Pumpkin gore from an externally designed bulge-angle table `(s, v_B)`.
pub fn build_pumpkin_gore_tabulated(
    gen: &GeneratorCurve,
    r_b: f64,
    n_gores: usize,
    table: &[(f64, f64)],
) -> Result<GoreSurface3D> {
    if table.len() < 2 {
        return Err(Error::InvalidInput("bulge table needs at least 2 rows".into()));
    }
    if table.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InvalidInput("bulge table arclength must increase".into()));
    }
    let interp = |s: f64| -> Result<f64> {
        let (lo, hi) = (table[0].0, table[table.len() - 1].0);
        let slack = 1e-9 * (hi - lo);
        if s < lo - slack || s > hi + slack {
            return Err(Error::Extrapolation { value: s, lo, hi });
        }
        let k = table.partition_point(|r| r.0 <= s).clamp(1, table.len() - 1) - 1;
        let (a, b) = (table[k], table[k + 1]);
        Ok(a.1 + (s.clamp(lo, hi) - a.0) / (b.0 - a.0) * (b.1 - a.1))
    };
    let angles: Vec<f64> = gen.samples.iter().map(|p| interp(p.s)).collect::<Result<_>>()?;
    let n = angles.len();
    let bulge = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            let slope = (angles[b] - angles[a]) / (gen.samples[b].s - gen.samples[a].s);
            BulgeSample { s: gen.samples[i].s, angle: angles[i], slope }
        })
        .collect();
    pumpkin_surface(gen, r_b, n_gores, bulge)
}

fn pumpkin_surface(
    gen: &GeneratorCurve,
    r_b: f64,
    n_gores: usize,
    bulge: Vec<BulgeSample>,
) -> Result<GoreSurface3D> {
    for p in &gen.samples {
        if r_b * p.kappa >= 1.0 {
            return Err(Error::TubeFold { s: p.s, value: r_b * p.kappa });
        }
    }
    let p0 = &gen.samples[0];
    Ok(GoreSurface3D {
        mode: DesignMode::Pumpkin,
        n_gores,
        bulge_radius: r_b,
        generator: gen.clone(),
        bulge,
        z_offset: r_b * p0.theta.sin() - p0.z,
    })
}

impl GoreSurface3D {
    pub fn samples_len(&self) -> usize {
        self.bulge.len()
    }

    /// Rib half-angle at arclength `s` (linear between samples).
    pub fn rib_half_angle(&self, s: f64) -> Result<f64> {
        let b = &self.bulge;
        let (lo, hi) = (b[0].s, b[b.len() - 1].s);
        let slack = 1e-9 * (hi - lo);
        if s < lo - slack || s > hi + slack {
            return Err(Error::Extrapolation { value: s, lo, hi });
        }
        let s = s.clamp(lo, hi);
        let k = b.partition_point(|p| p.s <= s).clamp(1, b.len() - 1) - 1;
        let t = (s - b[k].s) / (b[k + 1].s - b[k].s);
        Ok(b[k].angle + t * (b[k + 1].angle - b[k].angle))
    }

    /// Surface point at generator arclength `s` and rib angle `psi`.
    ///
    /// The natural-shape gore is the ruled surface swept by hoop-direction
    /// lines through the generator, so that its development is exactly the
    /// flat pattern; `psi` then acts as the angle subtended at the axis.
    pub fn point(&self, s: f64, psi: f64) -> Result<Vector3<f64>> {
        let g = self.generator.at(s)?;
        let (st, ct) = g.theta.sin_cos();
        let p = match self.mode {
            DesignMode::Zpns => Vector3::new(g.r, g.r * psi, g.z),
            DesignMode::Pumpkin => {
                let axis = Vector3::new(g.r, 0.0, g.z);
                let j = Vector3::y();
                let bin = Vector3::new(-ct, 0.0, st);
                axis + self.bulge_radius * (j * psi.sin() - bin * psi.cos())
            }
        };
        Ok(p + Vector3::new(0.0, 0.0, self.z_offset))
    }

    /// Point on the gore centerline.
    pub fn centerline(&self, s: f64) -> Result<Vector3<f64>> {
        self.point(s, 0.0)
    }

    /// `y − tan(π/N) x` at the rib endpoint.
    pub fn wedge_residual(&self, s: f64) -> Result<f64> {
        let p = self.point(s, self.rib_half_angle(s)?)?;
        Ok(p.y - (PI / self.n_gores as f64).tan() * p.x)
    }

    /// Surface samples on a grid of `ns` stations by `nv` rib points each.
    pub fn grid(&self, ns: usize, nv: usize) -> Result<Vec<Vec<Vector3<f64>>>> {
        if ns < 2 || nv < 2 {
            return Err(Error::InvalidInput("grid needs at least 2x2 points".into()));
        }
        let len = self.generator.total_length;
        (0..ns)
            .map(|i| {
                let s = len * i as f64 / (ns - 1) as f64;
                let half = self.rib_half_angle(s)?;
                (0..nv)
                    .map(|k| self.point(s, half * (2.0 * k as f64 / (nv - 1) as f64 - 1.0)))
                    .collect()
            })
            .collect()
    }
}

/// Flat cutting pattern of one gore.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GorePattern {
    pub mode: DesignMode,
    pub n_gores: usize,
    /// Centerline coordinate of each sample.
    pub v: Vec<f64>,
    /// Half-width at each sample.
    pub h: Vec<f64>,
    /// Generator arclength of each sample.
    pub s: Vec<f64>,
    /// Rib half-angle per sample (pumpkin only).
    pub bulge_angle: Option<Vec<f64>>,
    pub centerline_length: f64,
    pub seam_length: f64,
    pub tendon_length: f64,
    pub design_length: f64,
    pub launch_angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternSummary {
    #[serde(rename = "L_d")]
    pub design_length: f64,
    #[serde(rename = "L_c")]
    pub centerline_length: f64,
    #[serde(rename = "L_t")]
    pub tendon_length: f64,
    #[serde(rename = "L_s")]
    pub seam_length: f64,
    pub theta0: f64,
}

fn trapz(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (ys[0] + ys[1]) * (xs[1] - xs[0]))
        .sum()
}

/// Unrolls a gore into its flat pattern and computes the length bookkeeping.
pub fn layflat(gore: &GoreSurface3D) -> GorePattern {
    let gen = &gore.generator;
    let s: Vec<f64> = gen.samples.iter().map(|p| p.s).collect();
    let n = s.len();
    let (v, h, dh, tendon_rate, bulge_angle) = match gore.mode {
        DesignMode::Zpns => {
            let k = PI / gore.n_gores as f64;
            let h = gen.samples.iter().map(|p| k * p.r.max(0.0)).collect();
            let dh = gen.samples.iter().map(|p| k * p.theta.sin()).collect::<Vec<_>>();
            (s.clone(), h, dh, vec![1.0; n], None)
        }
        DesignMode::Pumpkin => {
            let rb = gore.bulge_radius;
            let stretch: Vec<f64> = gen.samples.iter().map(|p| 1.0 + rb * p.kappa).collect();
            let mut v = vec![0.0; n];
            for i in 1..n {
                v[i] = v[i - 1] + 0.5 * (stretch[i] + stretch[i - 1]) * (s[i] - s[i - 1]);
            }
            let h = gore.bulge.iter().map(|b| rb * b.angle).collect();
            let dh = gore
                .bulge
                .iter()
                .zip(&stretch)
                .map(|(b, c)| rb * b.slope / c)
                .collect();
            let tendon = gen
                .samples
                .iter()
                .zip(&gore.bulge)
                .map(|(p, b)| 1.0 + rb * p.kappa * b.angle.cos())
                .collect();
            let angles = gore.bulge.iter().map(|b| b.angle).collect();
            (v, h, dh, tendon, Some(angles))
        }
    };
    let seam_rate: Vec<f64> = dh.iter().map(|d: &f64| (1.0 + d * d).sqrt()).collect();
    GorePattern {
        mode: gore.mode,
        n_gores: gore.n_gores,
        centerline_length: v[n - 1],
        seam_length: trapz(&v, &seam_rate),
        tendon_length: trapz(&s, &tendon_rate),
        design_length: gen.total_length,
        launch_angle: gen.launch_angle,
        v,
        h,
        s,
        bulge_angle,
    }
}

impl GorePattern {
    fn locate(&self, v: f64) -> Result<(usize, f64)> {
        let (lo, hi) = (self.v[0], self.v[self.v.len() - 1]);
        let slack = 1e-9 * (hi - lo);
        if v < lo - slack || v > hi + slack {
            return Err(Error::Extrapolation { value: v, lo, hi });
        }
        let v = v.clamp(lo, hi);
        let k = self.v.partition_point(|x| *x <= v).clamp(1, self.v.len() - 1) - 1;
        Ok((k, (v - self.v[k]) / (self.v[k + 1] - self.v[k])))
    }

    /// Half-width `h(v)`, linear between samples.
    pub fn half_width(&self, v: f64) -> Result<f64> {
        let (k, t) = self.locate(v)?;
        Ok(self.h[k] + t * (self.h[k + 1] - self.h[k]))
    }

    /// Generator arclength at centerline coordinate `v`.
    pub fn arclength_at(&self, v: f64) -> Result<f64> {
        let (k, t) = self.locate(v)?;
        Ok(self.s[k] + t * (self.s[k + 1] - self.s[k]))
    }

    /// Polyline length of the sampled seam `(v, h(v))`.
    pub fn seam_polyline_length(&self) -> f64 {
        self.v
            .windows(2)
            .zip(self.h.windows(2))
            .map(|(v, h)| (v[1] - v[0]).hypot(h[1] - h[0]))
            .sum()
    }

    /// `∫ h dv`, the area of one half gore.
    pub fn half_area(&self) -> f64 {
        trapz(&self.v, &self.h)
    }

    pub fn summary(&self) -> PatternSummary {
        PatternSummary {
            design_length: self.design_length,
            centerline_length: self.centerline_length,
            tendon_length: self.tendon_length,
            seam_length: self.seam_length,
            theta0: self.launch_angle,
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["v", "h"]).map_err(csv_err)?;
        for (v, h) in self.v.iter().zip(&self.h) {
            out.write_record([format!("{v:e}"), format!("{h:e}")])
                .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Pattern with a constant half-width, for tests and rectangles.
    pub fn rectangle(half_width: f64, length: f64) -> Self {
        GorePattern {
            mode: DesignMode::Zpns,
            n_gores: 0,
            v: vec![0.0, length],
            h: vec![half_width, half_width],
            s: vec![0.0, length],
            bulge_angle: None,
            centerline_length: length,
            seam_length: length,
            tendon_length: length,
            design_length: length,
            launch_angle: 0.0,
        }
    }
}
