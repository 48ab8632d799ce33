//! Repeated-holdout evaluation and paired model comparison.
//!
//! Run `r` draws its split from the stream `(seed, "split", r)`, so every
//! model evaluated with the same protocol sees the same splits. When a split
//! leaves the training part with a single class, the run is redrawn from the
//! next attempt of that stream and the event is counted.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{prune_correlated, FeatureSet, ModelKind, ProfileTable};
use crate::forest::{self, ForestConfig};
use crate::seed::{derive_seed, stage_rng};
use crate::stats;

pub const MAX_SPLIT_ATTEMPTS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub repetitions: usize,
    pub train_frac: f64,
    pub seed: u64,
    /// Split each class separately in the train fraction.
    pub stratified: bool,
    /// Prune Model 4 once on all profiles instead of inside each training split.
    pub global_prune: bool,
    pub prune_threshold: f64,
    pub forest: ForestConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            repetitions: 100,
            train_frac: 0.7,
            seed: 0,
            stratified: false,
            global_prune: false,
            prune_threshold: 0.8,
            forest: ForestConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// 1 + number of redraws needed for a two-class training part.
    pub attempts: u64,
}

fn fnv(indices: &[usize]) -> u64 {
    indices.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &i| {
        i.to_le_bytes().iter().fold(h, |h, &b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
    })
}

/// Train size used by the unstratified split: `floor(frac * n)`.
pub fn train_size(n: usize, frac: f64) -> usize {
    (frac * n as f64).floor() as usize
}

/// Split of run `run` for `labels`, redrawn until the training part holds
/// both classes.
pub fn holdout_split(labels: &[bool], cfg: &EvalConfig, run: usize) -> Result<Split> {
    let n = labels.len();
    let run_seed = derive_seed(cfg.seed, "split", run as u64);
    for attempt in 0..MAX_SPLIT_ATTEMPTS {
        let mut rng = stage_rng(run_seed, "attempt", attempt);
        let (mut train, mut test) = if cfg.stratified {
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for class in [false, true] {
                let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
                idx.shuffle(&mut rng);
                let k = train_size(idx.len(), cfg.train_frac);
                train.extend_from_slice(&idx[..k]);
                test.extend_from_slice(&idx[k..]);
            }
            (train, test)
        } else {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let k = train_size(n, cfg.train_frac);
            let test = idx.split_off(k);
            (idx, test)
        };
        train.sort_unstable();
        test.sort_unstable();
        let ones = train.iter().filter(|&&i| labels[i]).count();
        if ones > 0 && ones < train.len() {
            return Ok(Split { train, test, attempts: attempt + 1 });
        }
    }
    Err(Error::Degenerate(format!(
        "run {run}: no two-class training split in {MAX_SPLIT_ATTEMPTS} attempts"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: [[u64; 2]; 2],
    pub train_size: usize,
    pub test_size: usize,
    pub attempts: u64,
    /// FNV-1a digest of the test indices; equal across models sharing splits.
    pub split_digest: u64,
    pub attributes: usize,
    /// Attributes kept by per-run pruning (Model 4 only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let s = stats::sorted_copy(values);
        Self {
            median: stats::quantile_sorted(&s, 0.5),
            q1: stats::quantile_sorted(&s, 0.25),
            q3: stats::quantile_sorted(&s, 0.75),
            min: s[0],
            max: s[s.len() - 1],
            mean: stats::mean(values),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub profiles: usize,
    pub repetitions: usize,
    pub train_frac: f64,
    pub seed: u64,
    pub stratified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model_name: String,
    pub kind: ModelKind,
    pub attributes: Vec<String>,
    pub protocol: Protocol,
    pub forest: ForestConfig,
    pub global_prune: bool,
    pub runs: Vec<RunResult>,
    pub summary: Summary,
    pub mean_confusion: [[f64; 2]; 2],
    /// `mean_confusion[c][c] / row sum`; `None` when class `c` never reached a test split.
    pub per_class_accuracy: [Option<f64>; 2],
    pub resampled_runs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub global_selection: Option<FeatureSet>,
}

/// Confusion counts and accuracy of predictions against truth.
pub fn confusion(truth: &[u8], predicted: &[u8]) -> ([[u64; 2]; 2], f64) {
    let mut m = [[0u64; 2]; 2];
    for (&t, &p) in truth.iter().zip(predicted) {
        m[t as usize][p as usize] += 1;
    }
    let acc = (m[0][0] + m[1][1]) as f64 / truth.len() as f64;
    (m, acc)
}

fn run_once(
    table: &ProfileTable,
    fixed: Option<&FeatureSet>,
    cfg: &EvalConfig,
    run: usize,
) -> Result<RunResult> {
    let split = holdout_split(&table.outcomes(), cfg, run)?;
    let (attributes, selected) = match fixed {
        Some(fs) => (fs.attributes.clone(), None),
        None => {
            let fs = prune_correlated(table, Some(&split.train), cfg.prune_threshold)?;
            (fs.attributes.clone(), Some(fs.attributes))
        }
    };
    let train = table.dataset(&attributes, Some(&split.train))?;
    let test = table.dataset(&attributes, Some(&split.test))?;
    let forest_cfg = ForestConfig { seed: derive_seed(cfg.forest.seed, "forest", run as u64), ..cfg.forest };
    let model = forest::train(&train, &forest_cfg)?;
    let predicted = model.predict_dataset(&test)?;
    let (confusion, accuracy) = confusion(&test.labels, &predicted);
    Ok(RunResult {
        run,
        accuracy,
        confusion,
        train_size: split.train.len(),
        test_size: split.test.len(),
        attempts: split.attempts,
        split_digest: fnv(&split.test),
        attributes: attributes.len(),
        selected,
    })
}

pub fn repeated_holdout(table: &ProfileTable, kind: ModelKind, cfg: &EvalConfig) -> Result<EvaluationReport> {
    let n = table.len();
    if n < 10 {
        return Err(Error::Degenerate(format!("{n} profiles; at least 10 are needed")));
    }
    let ones = table.profiles.iter().filter(|p| p.outcome).count();
    if ones == 0 || ones == n {
        return Err(Error::Degenerate("profiles hold a single outcome class".into()));
    }
    if cfg.repetitions == 0 {
        return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
    }
    if !(cfg.train_frac > 0.0 && cfg.train_frac < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction {} outside (0, 1)", cfg.train_frac)));
    }
    let global_selection = if kind == ModelKind::Model4 && cfg.global_prune {
        Some(prune_correlated(table, None, cfg.prune_threshold)?)
    } else {
        None
    };
    let fixed = match kind {
        ModelKind::Model4 => global_selection.clone(),
        k => FeatureSet::fixed(k),
    };
    let runs: Vec<RunResult> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| run_once(table, fixed.as_ref(), cfg, r))
        .collect::<Result<_>>()?;

    let accuracies: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
    let reps = runs.len() as f64;
    let mean_confusion = [0, 1].map(|c| {
        [0, 1].map(|p| runs.iter().map(|r| r.confusion[c][p]).sum::<u64>() as f64 / reps)
    });
    let per_class_accuracy = [0, 1].map(|c| {
        let row = mean_confusion[c][0] + mean_confusion[c][1];
        (row > 0.0).then(|| mean_confusion[c][c] / row)
    });
    Ok(EvaluationReport {
        model_name: kind.to_string(),
        kind,
        attributes: fixed.map(|f| f.attributes).unwrap_or_default(),
        protocol: Protocol {
            profiles: n,
            repetitions: cfg.repetitions,
            train_frac: cfg.train_frac,
            seed: cfg.seed,
            stratified: cfg.stratified,
        },
        forest: cfg.forest,
        global_prune: cfg.global_prune,
        summary: Summary::of(&accuracies),
        mean_confusion,
        per_class_accuracy,
        resampled_runs: runs.iter().filter(|r| r.attempts > 1).count(),
        runs,
        global_selection: global_selection.filter(|_| kind == ModelKind::Model4),
    })
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Per-run accuracies and confusion counts.
    pub fn write_runs_csv<W: Write>(reports: &[EvaluationReport], w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(["model", "run", "accuracy", "tn", "fp", "fn", "tp", "train_size", "test_size", "attempts", "attributes"])?;
        for rep in reports {
            for r in &rep.runs {
                wr.write_record([
                    rep.model_name.clone(),
                    r.run.to_string(),
                    r.accuracy.to_string(),
                    r.confusion[0][0].to_string(),
                    r.confusion[0][1].to_string(),
                    r.confusion[1][0].to_string(),
                    r.confusion[1][1].to_string(),
                    r.train_size.to_string(),
                    r.test_size.to_string(),
                    r.attempts.to_string(),
                    r.attributes.to_string(),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Mean confusion matrices, one row per (model, true class).
    pub fn write_confusion_csv<W: Write>(reports: &[EvaluationReport], w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(["model", "true_class", "predicted_0", "predicted_1", "class_accuracy"])?;
        for rep in reports {
            for c in 0..2 {
                wr.write_record([
                    rep.model_name.clone(),
                    c.to_string(),
                    rep.mean_confusion[c][0].to_string(),
                    rep.mean_confusion[c][1].to_string(),
                    rep.per_class_accuracy[c].map_or_else(String::new, |a| a.to_string()),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model_name: String,
    pub summary: Summary,
    pub per_class_accuracy: [Option<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDelta {
    pub first: String,
    pub second: String,
    /// Per-run `accuracy(second) - accuracy(first)`.
    pub deltas: Vec<f64>,
    pub median_delta: f64,
    pub mean_delta: f64,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub sign_test_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub models: Vec<ModelRow>,
    pub pairs: Vec<PairedDelta>,
}

/// Exact two-sided sign test on `wins` against `losses` (ties excluded).
pub fn sign_test(wins: usize, losses: usize) -> f64 {
    let m = wins + losses;
    if m == 0 {
        return 1.0;
    }
    let k = wins.min(losses);
    let ln_half = -(m as f64) * std::f64::consts::LN_2;
    let mut ln_choose = 0.0;
    let mut tail = 0.0;
    for i in 0..=k {
        if i > 0 {
            ln_choose += ((m - i + 1) as f64).ln() - (i as f64).ln();
        }
        tail += (ln_choose + ln_half).exp();
    }
    (2.0 * tail).min(1.0)
}

pub fn compare_models(reports: &[EvaluationReport]) -> Result<Comparison> {
    let Some(first) = reports.first() else {
        return Err(Error::InvalidArgument("no reports to compare".into()));
    };
    for r in &reports[1..] {
        if r.protocol != first.protocol {
            return Err(Error::ProtocolMismatch(format!(
                "{} and {} use different protocols",
                first.model_name, r.model_name
            )));
        }
        let same_splits = r.runs.iter().zip(&first.runs).all(|(a, b)| a.split_digest == b.split_digest);
        if !same_splits {
            return Err(Error::ProtocolMismatch(format!(
                "{} and {} were evaluated on different splits",
                first.model_name, r.model_name
            )));
        }
    }
    let models = reports
        .iter()
        .map(|r| ModelRow { model_name: r.model_name.clone(), summary: r.summary, per_class_accuracy: r.per_class_accuracy })
        .collect();
    let mut pairs = Vec::new();
    for (i, a) in reports.iter().enumerate() {
        for b in &reports[i + 1..] {
            let deltas: Vec<f64> = a.runs.iter().zip(&b.runs).map(|(x, y)| y.accuracy - x.accuracy).collect();
            let wins = deltas.iter().filter(|&&d| d > 0.0).count();
            let losses = deltas.iter().filter(|&&d| d < 0.0).count();
            pairs.push(PairedDelta {
                first: a.model_name.clone(),
                second: b.model_name.clone(),
                median_delta: stats::quantile(&deltas, 0.5),
                mean_delta: stats::mean(&deltas),
                wins,
                losses,
                ties: deltas.len() - wins - losses,
                sign_test_p: sign_test(wins, losses),
                deltas,
            });
        }
    }
    Ok(Comparison { models, pairs })
}

impl Comparison {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(["model", "median", "q1", "q3", "min", "max", "class0_accuracy", "class1_accuracy"])?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |a| a.to_string());
        for m in &self.models {
            let s = m.summary;
            wr.write_record([
                m.model_name.clone(),
                s.median.to_string(),
                s.q1.to_string(),
                s.q3.to_string(),
                s.min.to_string(),
                s.max.to_string(),
                opt(m.per_class_accuracy[0]),
                opt(m.per_class_accuracy[1]),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{canonical_attributes, CandidateProfile};
    use crate::ingest::UserId;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Profiles whose outcome is `Revisions > 0.5`, other attributes noise.
    fn table(n: usize, seed: u64, separable: bool) -> ProfileTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let profiles = (0..n)
            .map(|i| {
                let values: Vec<f64> = (0..39).map(|_| rng.random::<f64>()).collect();
                let outcome = if separable { values[0] > 0.5 } else { rng.random_bool(0.5) };
                CandidateProfile { candidate: UserId::new(&format!("C{i}")).unwrap(), close_date: i as i64, outcome, values }
            })
            .collect();
        ProfileTable { attributes: canonical_attributes().to_vec(), profiles }
    }

    fn quick(reps: usize) -> EvalConfig {
        EvalConfig { repetitions: reps, seed: 5, forest: ForestConfig { n_trees: 25, ..Default::default() }, ..Default::default() }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let labels: Vec<bool> = (0..47).map(|i| i % 3 == 0).collect();
        let cfg = quick(1);
        let s = holdout_split(&labels, &cfg, 4).unwrap();
        assert_eq!(s.train.len(), 32);
        assert_eq!(s.test.len(), 15);
        assert_eq!(s, holdout_split(&labels, &cfg, 4).unwrap());
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..47).collect::<Vec<_>>());
        assert_ne!(s, holdout_split(&labels, &cfg, 5).unwrap());
    }

    #[test]
    fn rare_class_forces_resampling() {
        let mut labels = vec![false; 12];
        labels[0] = true;
        let cfg = quick(1);
        let attempts: Vec<u64> = (0..40).map(|r| holdout_split(&labels, &cfg, r).unwrap().attempts).collect();
        assert!(attempts.iter().any(|&a| a > 1));
        for r in 0..40 {
            assert!(holdout_split(&labels, &cfg, r).unwrap().train.contains(&0));
        }
    }

    #[test]
    fn stratified_keeps_class_ratio() {
        let labels: Vec<bool> = (0..100).map(|i| i < 30).collect();
        let cfg = EvalConfig { stratified: true, ..quick(1) };
        let s = holdout_split(&labels, &cfg, 0).unwrap();
        assert_eq!(s.train.iter().filter(|&&i| labels[i]).count(), 21);
        assert_eq!(s.train.len(), 70);
    }

    #[test]
    fn separable_corpus_is_perfect() {
        let t = table(120, 1, true);
        let rep = repeated_holdout(&t, ModelKind::Model1, &quick(5)).unwrap();
        assert_eq!(rep.summary.median, 1.0);
    }

    #[test]
    fn report_identities() {
        let t = table(57, 2, false);
        let rep = repeated_holdout(&t, ModelKind::Model4, &quick(7)).unwrap();
        assert_eq!(rep.runs.len(), 7);
        for r in &rep.runs {
            let c = r.confusion;
            let total = c[0][0] + c[0][1] + c[1][0] + c[1][1];
            assert_eq!(total as usize, 57 - 39);
            assert!((r.accuracy - (c[0][0] + c[1][1]) as f64 / total as f64).abs() <= 1e-12);
            assert!(r.selected.is_some());
        }
        for c in 0..2 {
            let row = rep.mean_confusion[c][0] + rep.mean_confusion[c][1];
            assert_eq!(rep.per_class_accuracy[c], Some(rep.mean_confusion[c][c] / row));
        }
        let again = repeated_holdout(&t, ModelKind::Model4, &quick(7)).unwrap();
        assert_eq!(rep.to_json().unwrap(), again.to_json().unwrap());
    }

    #[test]
    fn global_prune_selects_once() {
        let t = table(40, 3, false);
        let cfg = EvalConfig { global_prune: true, ..quick(3) };
        let rep = repeated_holdout(&t, ModelKind::Model4, &cfg).unwrap();
        assert!(rep.global_selection.is_some());
        assert!(rep.runs.iter().all(|r| r.selected.is_none()));
    }

    #[test]
    fn degenerate_inputs() {
        let mut t = table(30, 4, false);
        for p in &mut t.profiles {
            p.outcome = true;
        }
        assert!(matches!(repeated_holdout(&t, ModelKind::Model1, &quick(2)), Err(Error::Degenerate(_))));
        let t = table(9, 4, true);
        assert!(matches!(repeated_holdout(&t, ModelKind::Model1, &quick(2)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn comparison_of_identical_runs_is_flat() {
        let t = table(60, 6, false);
        let a = repeated_holdout(&t, ModelKind::Model2, &quick(6)).unwrap();
        let cmp = compare_models(&[a.clone(), a.clone()]).unwrap();
        let pair = &cmp.pairs[0];
        assert!(pair.deltas.iter().all(|&d| d == 0.0));
        assert_eq!((pair.ties, pair.sign_test_p), (6, 1.0));
        let other = repeated_holdout(&t, ModelKind::Model2, &EvalConfig { seed: 99, ..quick(6) }).unwrap();
        assert!(matches!(compare_models(&[a, other]), Err(Error::ProtocolMismatch(_))));
    }

    #[test]
    fn sign_test_values() {
        assert_eq!(sign_test(0, 0), 1.0);
        // 2 * (1 + 10) / 1024
        assert!((sign_test(9, 1) - 22.0 / 1024.0).abs() < 1e-15);
        assert!((sign_test(1, 9) - sign_test(9, 1)).abs() < 1e-15);
        assert_eq!(sign_test(5, 5), 1.0);
        assert!(sign_test(100, 0) > 0.0 && sign_test(100, 0) < 1e-29);
    }

    #[test]
    fn csv_writers() {
        let t = table(40, 8, false);
        let rep = repeated_holdout(&t, ModelKind::Model1, &quick(2)).unwrap();
        let mut buf = Vec::new();
        EvaluationReport::write_runs_csv(std::slice::from_ref(&rep), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
        let mut buf = Vec::new();
        EvaluationReport::write_confusion_csv(&[rep], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("model,true_class,"));
    }
}
