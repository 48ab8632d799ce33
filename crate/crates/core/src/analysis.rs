//! Per-attribute analysis: class-conditional densities, empirical promotion
//! probability over quantile bins, and threshold detection.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ProfileTable;
use crate::stats;

pub const GRID_POINTS: usize = 512;
/// The density grid extends this many bandwidths beyond the pooled range.
pub const GRID_PAD_BANDWIDTHS: f64 = 4.0;

/// Attributes built from Gini coefficients.
pub const DISPERSION_ATTRIBUTES: [&str; 8] = [
    "Revision_repartition",
    "PageTalks_repartition",
    "outTalksRepartition_adminSN",
    "inTalksRepartition_adminSN",
    "outTalksRepartition_userSN",
    "inTalksRepartition_userSN",
    "outTalksRepartition_burSN",
    "inTalksRepartition_burSN",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub bins: usize,
    pub support_floor: usize,
    pub min_class_size: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { bins: 20, support_floor: 10, min_class_size: 10 }
    }
}

/// Silverman's rule of thumb, `0.9 min(sd, IQR/1.34) n^(-1/5)`, falling back
/// to `sd`, then `|x[0]|`, then 1 when the scale estimate is zero.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let s = stats::sorted_copy(values);
    let sd = stats::std_dev(values);
    let iqr = stats::quantile_sorted(&s, 0.75) - stats::quantile_sorted(&s, 0.25);
    let mut lo = sd.min(iqr / 1.34);
    if lo == 0.0 || lo.is_nan() {
        lo = [sd, values[0].abs(), 1.0].into_iter().find(|&v| v > 0.0 && v.is_finite()).unwrap_or(1.0);
    }
    0.9 * lo * (values.len() as f64).powf(-0.2)
}

/// Gaussian kernel density estimate at `x`.
pub fn kde_at(values: &[f64], bandwidth: f64, x: f64) -> f64 {
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * bandwidth * values.len() as f64);
    values.iter().map(|&v| (-0.5 * ((x - v) / bandwidth).powi(2)).exp()).sum::<f64>() * norm
}

/// Trapezoid integral of `y` over an evenly spaced grid.
pub fn trapezoid(grid: &[f64], y: &[f64]) -> f64 {
    grid.windows(2).zip(y.windows(2)).map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDensity {
    pub count: usize,
    pub bandwidth: f64,
    pub density: Vec<f64>,
    pub q10: f64,
    pub q90: f64,
    pub interdecile: f64,
    /// All values equal; `density` is a unit spike at the nearest grid point.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityComparison {
    pub attribute: String,
    pub grid: Vec<f64>,
    pub rejected: ClassDensity,
    pub promoted: ClassDensity,
}

fn class_values(table: &ProfileTable, attribute: &str) -> Result<[Vec<f64>; 2]> {
    let col = table.column(attribute)?;
    let mut out = [Vec::new(), Vec::new()];
    for (v, p) in col.into_iter().zip(&table.profiles) {
        out[p.outcome as usize].push(v);
    }
    Ok(out)
}

fn class_density(values: &[f64], grid: &[f64]) -> ClassDensity {
    let sorted = stats::sorted_copy(values);
    let (q10, q90) = (stats::quantile_sorted(&sorted, 0.1), stats::quantile_sorted(&sorted, 0.9));
    let degenerate = sorted[0] == sorted[sorted.len() - 1];
    let bandwidth = silverman_bandwidth(values);
    let density = if degenerate {
        let mut d = vec![0.0; grid.len()];
        let nearest = (0..grid.len())
            .min_by(|&a, &b| (grid[a] - sorted[0]).abs().total_cmp(&(grid[b] - sorted[0]).abs()))
            .unwrap_or(0);
        d[nearest] = 1.0 / (grid[1] - grid[0]);
        d
    } else {
        grid.par_iter().map(|&x| kde_at(values, bandwidth, x)).collect()
    };
    ClassDensity { count: values.len(), bandwidth, density, q10, q90, interdecile: q90 - q10, degenerate }
}

/// Kernel densities of the attribute among rejected and promoted candidates
/// on a shared grid.
pub fn density_by_class(table: &ProfileTable, attribute: &str, cfg: &AnalysisConfig) -> Result<DensityComparison> {
    let [rejected, promoted] = class_values(table, attribute)?;
    for (name, v) in [("rejected", &rejected), ("promoted", &promoted)] {
        if v.len() < cfg.min_class_size {
            return Err(Error::Degenerate(format!(
                "{attribute}: {} {name} profiles, at least {} needed",
                v.len(),
                cfg.min_class_size
            )));
        }
    }
    let all: Vec<f64> = rejected.iter().chain(&promoted).copied().collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = GRID_PAD_BANDWIDTHS * silverman_bandwidth(&rejected).max(silverman_bandwidth(&promoted));
    let (start, end) = (lo - pad, hi + pad);
    let step = (end - start) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| start + step * i as f64).collect();
    Ok(DensityComparison {
        attribute: attribute.to_string(),
        rejected: class_density(&rejected, &grid),
        promoted: class_density(&promoted, &grid),
        grid,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityBin {
    pub lower: f64,
    pub upper: f64,
    /// Median of the bin's values.
    pub center: f64,
    pub count: usize,
    pub promoted: usize,
    pub probability: f64,
    pub low_support: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityCurve {
    pub attribute: String,
    pub bins: Vec<ProbabilityBin>,
    /// Center of the first supported bin from which P stays at or above 0.5.
    pub threshold: Option<f64>,
    pub threshold_bin: Option<usize>,
    /// Linear crossing of P = 0.5 between the preceding supported bin's
    /// center and the threshold bin's center.
    pub crossing: Option<f64>,
}

impl ProbabilityCurve {
    /// Index of the bin whose span contains `x`; spans meet halfway between
    /// the values of neighbouring bins.
    pub fn bin_of(&self, x: f64) -> usize {
        self.bins
            .windows(2)
            .position(|w| x < (w[0].upper + w[1].lower) / 2.0)
            .unwrap_or(self.bins.len() - 1)
    }
}

/// Equal-count cut positions into `sorted` that never separate equal values.
pub fn quantile_cuts(sorted: &[f64], bins: usize) -> Vec<usize> {
    let n = sorted.len();
    let mut cuts = Vec::with_capacity(bins + 1);
    cuts.push(0);
    for k in 1..bins {
        let mut c = (k * n + bins / 2) / bins;
        while c < n && c > 0 && sorted[c - 1] == sorted[c] {
            c += 1;
        }
        if c < n && c > *cuts.last().unwrap() {
            cuts.push(c);
        }
    }
    cuts.push(n);
    cuts
}

pub fn promotion_probability(table: &ProfileTable, attribute: &str, cfg: &AnalysisConfig) -> Result<ProbabilityCurve> {
    let col = table.column(attribute)?;
    probability_curve(attribute, &col, &table.outcomes(), cfg)
}

/// First supported bin from which P stays at or above 0.5, and the linear
/// crossing of P = 0.5 between the preceding supported bin's center and its
/// center (its own center when no supported bin precedes it).
pub fn detect_threshold(bins: &[ProbabilityBin]) -> (Option<usize>, Option<f64>) {
    let supported: Vec<usize> = (0..bins.len()).filter(|&i| !bins[i].low_support).collect();
    let start = supported
        .iter()
        .rposition(|&i| bins[i].probability < 0.5)
        .map_or(0, |k| k + 1);
    let threshold_bin = supported.get(start).copied();
    let crossing = threshold_bin.map(|b| match start.checked_sub(1).map(|k| &bins[supported[k]]) {
        Some(prev) => {
            let cur = &bins[b];
            let t = (0.5 - prev.probability) / (cur.probability - prev.probability);
            prev.center + t * (cur.center - prev.center)
        }
        None => bins[b].center,
    });
    (threshold_bin, crossing)
}

/// Probability curve of raw `(value, outcome)` pairs.
pub fn probability_curve(attribute: &str, values: &[f64], outcomes: &[bool], cfg: &AnalysisConfig) -> Result<ProbabilityCurve> {
    let n = values.len();
    if cfg.bins == 0 {
        return Err(Error::InvalidArgument("bins must be at least 1".into()));
    }
    if n < 2 * cfg.bins {
        return Err(Error::Degenerate(format!("{attribute}: {n} profiles for {} bins", cfg.bins)));
    }
    let mut pairs: Vec<(f64, bool)> = values.iter().copied().zip(outcomes.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    if pairs[0].0 == pairs[n - 1].0 {
        return Err(Error::Degenerate(format!("{attribute} is constant")));
    }
    let sorted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let cuts = quantile_cuts(&sorted, cfg.bins);
    let bins: Vec<ProbabilityBin> = cuts
        .windows(2)
        .map(|w| {
            let slice = &pairs[w[0]..w[1]];
            let promoted = slice.iter().filter(|p| p.1).count();
            ProbabilityBin {
                lower: slice[0].0,
                upper: slice[slice.len() - 1].0,
                center: stats::quantile_sorted(&sorted[w[0]..w[1]], 0.5),
                count: slice.len(),
                promoted,
                probability: promoted as f64 / slice.len() as f64,
                low_support: slice.len() < cfg.support_floor,
            }
        })
        .collect();

    let (threshold_bin, crossing) = detect_threshold(&bins);
    Ok(ProbabilityCurve {
        attribute: attribute.to_string(),
        threshold: threshold_bin.map(|b| bins[b].center),
        threshold_bin,
        crossing,
        bins,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionEntry {
    pub attribute: String,
    pub curve: Option<ProbabilityCurve>,
    /// Spearman correlation of bin center and P over supported bins.
    pub spearman: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Probability curves and monotonicity of the Gini-based attributes present
/// in the table. Attributes that cannot be binned are reported with a note.
pub fn dispersion_effect(table: &ProfileTable, cfg: &AnalysisConfig) -> Vec<DispersionEntry> {
    DISPERSION_ATTRIBUTES
        .par_iter()
        .filter(|a| table.index_of(a).is_ok())
        .map(|&attribute| match promotion_probability(table, attribute, cfg) {
            Ok(curve) => {
                let (x, y): (Vec<f64>, Vec<f64>) =
                    curve.bins.iter().filter(|b| !b.low_support).map(|b| (b.center, b.probability)).unzip();
                let spearman = if x.len() >= 3 { stats::spearman(&x, &y) } else { None };
                DispersionEntry { attribute: attribute.into(), curve: Some(curve), spearman, note: None }
            }
            Err(e) => DispersionEntry { attribute: attribute.into(), curve: None, spearman: None, note: Some(e.to_string()) },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeAnalysis {
    pub attribute: String,
    pub density: Option<DensityComparison>,
    pub probability: Option<ProbabilityCurve>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub fn analyze_attributes(table: &ProfileTable, attributes: &[String], cfg: &AnalysisConfig) -> Result<Vec<AttributeAnalysis>> {
    for a in attributes {
        table.index_of(a)?;
    }
    Ok(attributes
        .par_iter()
        .map(|a| {
            let mut notes = Vec::new();
            let density = density_by_class(table, a, cfg).map_err(|e| notes.push(e.to_string())).ok();
            let probability = promotion_probability(table, a, cfg).map_err(|e| notes.push(e.to_string())).ok();
            AttributeAnalysis { attribute: a.clone(), density, probability, notes }
        })
        .collect())
}

impl DensityComparison {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(["x", "rejected", "promoted"])?;
        for i in 0..self.grid.len() {
            wr.write_record([
                self.grid[i].to_string(),
                self.rejected.density[i].to_string(),
                self.promoted.density[i].to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

impl ProbabilityCurve {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(["bin", "lower", "upper", "center", "count", "promoted", "probability", "low_support"])?;
        for (i, b) in self.bins.iter().enumerate() {
            wr.write_record([
                i.to_string(),
                b.lower.to_string(),
                b.upper.to_string(),
                b.center.to_string(),
                b.count.to_string(),
                b.promoted.to_string(),
                b.probability.to_string(),
                b.low_support.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::CandidateProfile;
    use crate::ingest::UserId;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn table(values: &[f64], outcomes: &[bool]) -> ProfileTable {
        let profiles = values
            .iter()
            .zip(outcomes)
            .enumerate()
            .map(|(i, (&v, &o))| CandidateProfile {
                candidate: UserId::new(&format!("C{i}")).unwrap(),
                close_date: 0,
                outcome: o,
                values: vec![v],
            })
            .collect();
        ProfileTable { attributes: vec!["x".into()], profiles }
    }

    #[test]
    fn bandwidth_matches_reference_values() {
        // 0.9 * min(sd, IQR / 1.34) * n^(-1/5) for 1..=10
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let sd = (55.0f64 / 6.0).sqrt();
        let expected = 0.9 * sd.min(4.5 / 1.34) * 10f64.powf(-0.2);
        assert!((silverman_bandwidth(&x) - expected).abs() < 1e-12);
        assert!((silverman_bandwidth(&[0.0, 0.0, 0.0, 0.0, 8.0]) - 0.9 * (12.8f64).sqrt() * 5f64.powf(-0.2)).abs() < 1e-12);
        assert!((silverman_bandwidth(&[2.0, 2.0]) - 0.9 * 2.0 * 2f64.powf(-0.2)).abs() < 1e-12);
    }

    #[test]
    fn normal_density_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let d = kde_at(&v, silverman_bandwidth(&v), 0.0);
        assert!((d - 0.3989).abs() < 0.05, "{d}");
    }

    #[test]
    fn densities_integrate_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v: Vec<f64> = (0..300).map(|_| rng.random::<f64>().powi(3) * 50.0).collect();
        let o: Vec<bool> = (0..300).map(|i| i % 3 == 0).collect();
        let d = density_by_class(&table(&v, &o), "x", &AnalysisConfig::default()).unwrap();
        assert_eq!(d.grid.len(), GRID_POINTS);
        for c in [&d.rejected, &d.promoted] {
            assert!((trapezoid(&d.grid, &c.density) - 1.0).abs() < 1e-3);
            assert!(c.density.iter().all(|&y| y >= 0.0));
        }
    }

    #[test]
    fn tight_promoted_has_smaller_interdecile() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut v = Vec::new();
        let mut o = Vec::new();
        for i in 0..400 {
            let promoted = i % 2 == 0;
            let spread = if promoted { 1.0 } else { 10.0 };
            v.push(50.0 + spread * Distribution::<f64>::sample(&StandardNormal, &mut rng));
            o.push(promoted);
        }
        let d = density_by_class(&table(&v, &o), "x", &AnalysisConfig::default()).unwrap();
        assert!(d.promoted.interdecile < d.rejected.interdecile);
    }

    #[test]
    fn identical_classes_give_identical_curves() {
        let v: Vec<f64> = (0..40).map(|i| (i / 2) as f64).collect();
        let o: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let d = density_by_class(&table(&v, &o), "x", &AnalysisConfig::default()).unwrap();
        assert_eq!(d.rejected.density, d.promoted.density);
    }

    #[test]
    fn constant_class_is_a_point_mass() {
        let v: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 5.0 } else { i as f64 }).collect();
        let o: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let d = density_by_class(&table(&v, &o), "x", &AnalysisConfig::default()).unwrap();
        assert!(d.promoted.degenerate && !d.rejected.degenerate);
        assert!((trapezoid(&d.grid, &d.promoted.density) - 1.0).abs() < 1e-9);
        assert_eq!(d.promoted.interdecile, 0.0);
    }

    #[test]
    fn small_classes_are_rejected() {
        let v: Vec<f64> = (0..30).map(f64::from).collect();
        let o: Vec<bool> = (0..30).map(|i| i < 5).collect();
        assert!(density_by_class(&table(&v, &o), "x", &AnalysisConfig::default()).is_err());
    }

    #[test]
    fn cuts_respect_ties_and_partition() {
        let s = [1.0, 1.0, 1.0, 1.0, 2.0, 3.0, 3.0, 4.0];
        let cuts = quantile_cuts(&s, 4);
        assert_eq!(cuts, vec![0, 4, 7, 8]);
        let s = [7.0; 10];
        assert_eq!(quantile_cuts(&s, 3), vec![0, 10]);
    }

    #[test]
    fn planted_step_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..2000).map(|_| rng.random_range(0.0..200.0)).collect();
        let o: Vec<bool> = v.iter().map(|&x| x > 100.0).collect();
        let c = probability_curve("x", &v, &o, &AnalysisConfig::default()).unwrap();
        assert_eq!(c.bins.iter().map(|b| b.count).sum::<usize>(), 2000);
        assert!(c.bins.windows(2).all(|w| w[0].upper < w[1].lower));
        let b = c.threshold_bin.unwrap();
        assert!(c.bins[b].lower > 95.0 && c.bins[b - 1].upper < 100.0);
        let x = c.crossing.unwrap();
        assert_eq!(c.bin_of(x), c.bin_of(100.0));
    }

    #[test]
    fn threshold_requires_persistence_and_ignores_sparse_bins() {
        let bins = |p: &[(usize, usize)]| -> Vec<ProbabilityBin> {
            p.iter()
                .enumerate()
                .map(|(i, &(count, promoted))| ProbabilityBin {
                    lower: i as f64 * 10.0,
                    upper: i as f64 * 10.0 + 9.0,
                    center: i as f64 * 10.0 + 4.0,
                    count,
                    promoted,
                    probability: promoted as f64 / count as f64,
                    low_support: count < 10,
                })
                .collect()
        };
        assert_eq!(detect_threshold(&bins(&[(20, 2), (20, 12), (20, 4), (20, 14), (20, 16)])).0, Some(3));
        let (b, x) = detect_threshold(&bins(&[(20, 2), (20, 4), (20, 14), (20, 16), (5, 0)]));
        assert_eq!(b, Some(2));
        // P goes 0.2 -> 0.7 between centers 14 and 24.
        assert!((x.unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(detect_threshold(&bins(&[(5, 0), (20, 14), (20, 16)])), (Some(1), Some(14.0)));
        assert_eq!(detect_threshold(&bins(&[(20, 2), (20, 4), (20, 6), (20, 8)])), (None, None));
    }

    #[test]
    fn monotone_transform_relabels_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..10.0)).collect();
        let o: Vec<bool> = v.iter().map(|&x| rng.random_bool(x / 10.0)).collect();
        let cfg = AnalysisConfig::default();
        let a = probability_curve("x", &v, &o, &cfg).unwrap();
        let w: Vec<f64> = v.iter().map(|x| x.exp()).collect();
        let b = probability_curve("x", &w, &o, &cfg).unwrap();
        let probs = |c: &ProbabilityCurve| c.bins.iter().map(|b| (b.count, b.promoted)).collect::<Vec<_>>();
        assert_eq!(probs(&a), probs(&b));
        assert_eq!(a.threshold_bin, b.threshold_bin);
    }

    #[test]
    fn independent_attribute_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let o: Vec<bool> = (0..2000).map(|_| rng.random_bool(0.5)).collect();
        let c = probability_curve("x", &v, &o, &AnalysisConfig::default()).unwrap();
        for b in &c.bins {
            assert!((b.probability - 0.5).abs() <= 3.0 / (b.count as f64).sqrt());
        }
    }

    #[test]
    fn constant_attribute_errors() {
        let v = vec![1.0; 50];
        let o: Vec<bool> = (0..50).map(|i| i % 2 == 0).collect();
        assert!(probability_curve("x", &v, &o, &AnalysisConfig::default()).is_err());
    }

    #[test]
    fn dispersion_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let attributes = vec!["Revision_repartition".to_string(), "outTalksRepartition_adminSN".to_string()];
        let profiles = (0..1500)
            .map(|i| {
                let g: f64 = rng.random();
                let noise: f64 = rng.random();
                CandidateProfile {
                    candidate: UserId::new(&format!("C{i}")).unwrap(),
                    close_date: 0,
                    outcome: rng.random_bool(0.2 + 0.6 * g),
                    values: vec![noise, g],
                }
            })
            .collect();
        let t = ProfileTable { attributes, profiles };
        let report = dispersion_effect(&t, &AnalysisConfig::default());
        assert_eq!(report.len(), 2);
        assert!(report[1].spearman.unwrap() > 0.5);
        assert!(report[0].spearman.unwrap().abs() < 0.6);
    }
}
