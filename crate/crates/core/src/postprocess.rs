//! Averaged principal strain and stress-resultant profiles, region maps and
//! run summaries.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::constitutive::Region;
use crate::error::{Error, Result};
use crate::gore_mesh::{FacetResponse, RefMesh};
use crate::solver::{EnergyBreakdown, Multipliers, SolveResult};

/// Means over one adjacent pair of triangles `(2i−1, 2i)` of a strip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairAverage {
    pub strip: usize,
    /// Pair index, 1 at the top.
    pub pair: usize,
    /// Mean reference v of the two centroids (m), measured from the bottom.
    pub s_mid: f64,
    pub d1_avg: f64,
    pub d2_avg: f64,
    pub mu1_avg: f64,
    pub mu2_avg: f64,
    pub region_upper: Region,
    pub region_lower: Region,
    /// Acute angle between the two first principal directions (rad).
    pub angle_mismatch: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionFractions {
    pub slack: f64,
    pub wrinkled: f64,
    pub tense: f64,
}

impl RegionFractions {
    /// Reference-area fractions of each region over `facets`.
    pub fn of<'a>(facets: impl IntoIterator<Item = &'a FacetResponse>) -> Self {
        let mut acc = [0.0; 3];
        for r in facets {
            acc[region_slot(r.region)] += r.ref_area;
        }
        let total: f64 = acc.iter().sum();
        if total == 0.0 {
            return Self::default();
        }
        Self {
            slack: acc[0] / total,
            wrinkled: acc[1] / total,
            tense: acc[2] / total,
        }
    }

    pub fn sum(&self) -> f64 {
        self.slack + self.wrinkled + self.tense
    }
}

fn region_slot(r: Region) -> usize {
    match r {
        Region::Slack => 0,
        Region::Wrinkled => 1,
        Region::Tense => 2,
    }
}

fn parse_region(s: &str) -> Result<Region> {
    match s {
        "slack" => Ok(Region::Slack),
        "wrinkled" => Ok(Region::Wrinkled),
        "tense" => Ok(Region::Tense),
        other => Err(Error::InvalidInput(format!("unknown region '{other}'"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub pairs: Vec<PairAverage>,
    /// Largest averaged first principal strain.
    pub max_strain: f64,
    /// Largest averaged first principal stress resultant (N/m).
    pub max_resultant: f64,
    pub max_raw_strain: f64,
    pub max_raw_resultant: f64,
    pub fractions: RegionFractions,
    /// Fractions per strip.
    pub strip_fractions: Vec<RegionFractions>,
    /// Fractions over the strips that touch a seam.
    pub seam_fractions: RegionFractions,
    pub volume: f64,
    pub energy: EnergyBreakdown,
    pub multipliers: Multipliers,
    pub converged: bool,
}

/// Pair averages of facet responses, ordered by strip and then pair.
pub fn pair_averages(mesh: &RefMesh, responses: &[FacetResponse]) -> Result<Vec<PairAverage>> {
    let mut by_strip: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (f, r) in responses.iter().enumerate() {
        by_strip.entry(r.strip).or_default().push(f);
    }
    let mut out = Vec::new();
    for (strip, mut facets) in by_strip {
        if facets.len() % 2 != 0 {
            return Err(Error::Pairing { strip, count: facets.len() });
        }
        facets.sort_by_key(|&f| responses[f].order);
        for (i, pair) in facets.chunks_exact(2).enumerate() {
            let (a, b) = (&responses[pair[0]], &responses[pair[1]]);
            let s_mid = 0.5 * (mesh.facets[pair[0]].centroid().y + mesh.facets[pair[1]].centroid().y);
            let cos = a.n1.dot(&b.n1).abs().min(1.0);
            out.push(PairAverage {
                strip,
                pair: i + 1,
                s_mid,
                d1_avg: 0.5 * (a.d1 + b.d1),
                d2_avg: 0.5 * (a.d2 + b.d2),
                mu1_avg: 0.5 * (a.mu1 + b.mu1),
                mu2_avg: 0.5 * (a.mu2 + b.mu2),
                region_upper: a.region,
                region_lower: b.region,
                angle_mismatch: cos.acos(),
            });
        }
    }
    Ok(out)
}

/// Strips with at least one facet on a seam node.
pub fn seam_strips(mesh: &RefMesh) -> Vec<usize> {
    let on_seam: std::collections::HashSet<usize> = mesh
        .seams
        .iter()
        .flat_map(|s| s.nodes[..s.nodes.len() - 1].iter().copied())
        .collect();
    let mut strips: Vec<usize> = mesh
        .facets
        .iter()
        .filter(|f| f.nodes.iter().any(|n| on_seam.contains(n)))
        .map(|f| f.strip)
        .collect();
    strips.sort_unstable();
    strips.dedup();
    strips
}

/// Builds the report for a solved state.
pub fn averaged_profiles(result: &SolveResult, mesh: &RefMesh) -> Result<ProfileReport> {
    report_from_responses(mesh, &result.responses, result)
}

/// Same as [`averaged_profiles`] with explicit facet responses.
pub fn report_from_responses(mesh: &RefMesh, responses: &[FacetResponse], result: &SolveResult) -> Result<ProfileReport> {
    let pairs = pair_averages(mesh, responses)?;
    let n_strips = responses.iter().map(|r| r.strip + 1).max().unwrap_or(0);
    let strip_fractions = (0..n_strips)
        .map(|s| RegionFractions::of(responses.iter().filter(|r| r.strip == s)))
        .collect();
    let near = seam_strips(mesh);
    let seam_fractions = RegionFractions::of(responses.iter().filter(|r| near.contains(&r.strip)));
    let fmax = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::NEG_INFINITY, f64::max);
    Ok(ProfileReport {
        max_strain: fmax(&mut pairs.iter().map(|p| p.d1_avg)),
        max_resultant: fmax(&mut pairs.iter().map(|p| p.mu1_avg)),
        max_raw_strain: fmax(&mut responses.iter().map(|r| r.d1)),
        max_raw_resultant: fmax(&mut responses.iter().map(|r| r.mu1)),
        fractions: RegionFractions::of(responses),
        strip_fractions,
        seam_fractions,
        pairs,
        volume: result.volume,
        energy: result.energy,
        multipliers: result.multipliers.clone(),
        converged: result.converged,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct PairRow {
    strip: usize,
    pair: usize,
    s_mid: f64,
    d1_avg: f64,
    d2_avg: f64,
    mu1_avg: f64,
    mu2_avg: f64,
    region: String,
    angle_mismatch: f64,
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}

/// Writes the pair table as CSV.
pub fn write_profiles_csv<W: Write>(pairs: &[PairAverage], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in pairs {
        out.serialize(PairRow {
            strip: p.strip,
            pair: p.pair,
            s_mid: p.s_mid,
            d1_avg: p.d1_avg,
            d2_avg: p.d2_avg,
            mu1_avg: p.mu1_avg,
            mu2_avg: p.mu2_avg,
            region: format!("{}/{}", p.region_upper.as_str(), p.region_lower.as_str()),
            angle_mismatch: p.angle_mismatch,
        })
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_profiles_csv<R: Read>(r: R) -> Result<Vec<PairAverage>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rd.deserialize::<PairRow>() {
        let row = row.map_err(csv_err)?;
        let (up, low) = row
            .region
            .split_once('/')
            .ok_or_else(|| Error::InvalidInput(format!("bad region pair '{}'", row.region)))?;
        out.push(PairAverage {
            strip: row.strip,
            pair: row.pair,
            s_mid: row.s_mid,
            d1_avg: row.d1_avg,
            d2_avg: row.d2_avg,
            mu1_avg: row.mu1_avg,
            mu2_avg: row.mu2_avg,
            region_upper: parse_region(up)?,
            region_lower: parse_region(low)?,
            angle_mismatch: row.angle_mismatch,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetRow {
    pub facet: usize,
    pub strip: usize,
    pub order: usize,
    pub ref_area: f64,
    pub d1: f64,
    pub d2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub region: String,
}

/// Per-facet table.
pub fn write_facets_csv<W: Write>(responses: &[FacetResponse], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for (f, r) in responses.iter().enumerate() {
        out.serialize(FacetRow {
            facet: f,
            strip: r.strip,
            order: r.order,
            ref_area: r.ref_area,
            d1: r.d1,
            d2: r.d2,
            mu1: r.mu1,
            mu2: r.mu2,
            region: r.region.as_str().into(),
        })
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_facets_csv<R: Read>(r: R) -> Result<Vec<FacetRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(csv_err)
}

/// Area fractions recomputed from a per-facet table.
pub fn fractions_from_rows(rows: &[FacetRow]) -> Result<RegionFractions> {
    let mut acc = [0.0; 3];
    for r in rows {
        acc[region_slot(parse_region(&r.region)?)] += r.ref_area;
    }
    let total: f64 = acc.iter().sum();
    Ok(RegionFractions {
        slack: acc[0] / total,
        wrinkled: acc[1] / total,
        tense: acc[2] / total,
    })
}

/// JSON run summary: the report without the pair table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub max_strain: f64,
    pub max_resultant: f64,
    pub max_raw_strain: f64,
    pub max_raw_resultant: f64,
    pub fractions: RegionFractions,
    pub seam_fractions: RegionFractions,
    pub volume: f64,
    pub energy: EnergyBreakdown,
    pub multipliers: Multipliers,
    pub converged: bool,
}

impl From<&ProfileReport> for Summary {
    fn from(r: &ProfileReport) -> Self {
        Self {
            max_strain: r.max_strain,
            max_resultant: r.max_resultant,
            max_raw_strain: r.max_raw_strain,
            max_raw_resultant: r.max_raw_resultant,
            fractions: r.fractions,
            seam_fractions: r.seam_fractions,
            volume: r.volume,
            energy: r.energy,
            multipliers: r.multipliers.clone(),
            converged: r.converged,
        }
    }
}

pub fn write_summary_json<W: Write>(report: &ProfileReport, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, &Summary::from(report))?;
    Ok(())
}

/// Whitespace-separated table for plotting: strip, s_mid, d1, d2, mu1, mu2.
pub fn write_dat<W: Write>(pairs: &[PairAverage], mut w: W) -> Result<()> {
    writeln!(w, "# strip s_mid d1_avg d2_avg mu1_avg mu2_avg")?;
    let mut last = None;
    for p in pairs {
        if last.is_some_and(|s| s != p.strip) {
            writeln!(w)?;
            writeln!(w)?;
        }
        last = Some(p.strip);
        writeln!(
            w,
            "{} {:.9e} {:.9e} {:.9e} {:.9e} {:.9e}",
            p.strip, p.s_mid, p.d1_avg, p.d2_avg, p.mu1_avg, p.mu2_avg
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::{relaxed_energy, MaterialProps};
    use crate::gore_mesh::{facet_responses, build_mesh, DeformationState, SymmetryMode};
    use crate::shape_finding::GorePattern;
    use proptest::prelude::*;

    fn mesh() -> RefMesh {
        let pat = GorePattern {
            n_gores: 100,
            ..GorePattern::rectangle(0.5, 10.0)
        };
        build_mesh(&pat, 3, 20, SymmetryMode::HalfGore).unwrap()
    }

    fn responses(m: &RefMesh) -> Vec<FacetResponse> {
        let mut st = DeformationState::flat_reference(m);
        for p in st.positions.iter_mut() {
            p.x *= 1.01;
            p.y *= 1.002;
        }
        facet_responses(m, &st, &MaterialProps::polyethylene_32um())
    }

    #[test]
    fn uniform_and_alternating_means() {
        let m = mesh();
        let mut r = responses(&m);
        r.iter_mut().for_each(|x| x.mu1 = 100.0);
        assert!(pair_averages(&m, &r).unwrap().iter().all(|p| p.mu1_avg == 100.0));
        r.iter_mut().for_each(|x| x.mu1 = if x.order % 2 == 0 { 0.0 } else { 200.0 });
        let pairs = pair_averages(&m, &r).unwrap();
        assert_eq!(pairs.len(), m.facets.len() / 2);
        assert!(pairs.iter().all(|p| p.mu1_avg == 100.0));
    }

    #[test]
    fn pairs_per_strip_and_orientation() {
        let m = mesh();
        let pairs = pair_averages(&m, &responses(&m)).unwrap();
        for s in 0..3 {
            let sp: Vec<_> = pairs.iter().filter(|p| p.strip == s).collect();
            assert_eq!(sp.len(), 10);
            assert!(sp.windows(2).all(|w| w[0].s_mid > w[1].s_mid));
        }
    }

    #[test]
    fn odd_strip_is_a_pairing_error() {
        let m = mesh();
        let mut r = responses(&m);
        r.remove(5);
        assert!(matches!(pair_averages(&m, &r), Err(Error::Pairing { strip: 0, count: 19 })));
    }

    #[test]
    fn profile_csv_round_trip() {
        let m = mesh();
        let pairs = pair_averages(&m, &responses(&m)).unwrap();
        let mut buf = Vec::new();
        write_profiles_csv(&pairs, &mut buf).unwrap();
        assert_eq!(read_profiles_csv(buf.as_slice()).unwrap(), pairs);
    }

    #[test]
    fn fractions_from_facet_table() {
        let m = mesh();
        let mut r = responses(&m);
        for (i, x) in r.iter_mut().enumerate() {
            x.region = [Region::Slack, Region::Wrinkled, Region::Tense][i % 3];
        }
        let direct = RegionFractions::of(&r);
        assert!((direct.sum() - 1.0).abs() < 1e-12);
        let mut buf = Vec::new();
        write_facets_csv(&r, &mut buf).unwrap();
        let again = fractions_from_rows(&read_facets_csv(buf.as_slice()).unwrap()).unwrap();
        assert!((again.slack - direct.slack).abs() < 1e-12);
        assert!((again.wrinkled - direct.wrinkled).abs() < 1e-12);
        assert!((again.tense - direct.tense).abs() < 1e-12);
    }

    #[test]
    fn regions_match_constitutive_branch() {
        let m = mesh();
        let mat = MaterialProps::polyethylene_32um();
        for r in responses(&m) {
            let g = 0.5 * (r.f.transpose() * r.f - nalgebra::Matrix2::identity());
            let p = crate::constitutive::principal_of_symmetric(&g);
            assert_eq!(relaxed_energy(p.d1, p.d2, &mat).region, r.region);
        }
    }

    #[test]
    fn seam_strip_is_outermost() {
        assert_eq!(seam_strips(&mesh()), vec![2]);
    }

    proptest! {
        #[test]
        fn swapping_a_pair_changes_nothing(seed in 0usize..1000) {
            let m = mesh();
            let mut r = responses(&m);
            for (i, x) in r.iter_mut().enumerate() {
                let t = ((i * 7919 + seed) % 101) as f64;
                x.d1 = t * 1e-4;
                x.mu1 = t;
                x.mu2 = 0.5 * t;
            }
            let before = pair_averages(&m, &r).unwrap();
            let k = 2 * (seed % (m.facets.len() / 2));
            let (oa, ob) = (r[k].order, r[k + 1].order);
            r.swap(k, k + 1);
            r[k].order = oa;
            r[k + 1].order = ob;
            let after = pair_averages(&m, &r).unwrap();
            for (a, b) in before.iter().zip(&after) {
                prop_assert_eq!(a.mu1_avg, b.mu1_avg);
                prop_assert_eq!(a.mu2_avg, b.mu2_avg);
                prop_assert_eq!(a.d1_avg, b.d1_avg);
            }
        }

        #[test]
        fn averaged_max_below_raw_max(scale in 0.0..0.05f64) {
            let m = mesh();
            let mut st = DeformationState::flat_reference(&m);
            for (i, p) in st.positions.iter_mut().enumerate() {
                p.x *= 1.0 + scale * (i % 5) as f64 / 5.0;
            }
            let r = facet_responses(&m, &st, &MaterialProps::polyethylene_32um());
            let pairs = pair_averages(&m, &r).unwrap();
            let raw = r.iter().map(|x| x.mu1).fold(f64::MIN, f64::max);
            prop_assert!(pairs.iter().all(|p| p.mu1_avg <= raw));
        }
    }
}
