//! Random-forest classifier for two classes (0 = rejected, 1 = promoted).
//!
//! Each tree draws its bootstrap sample and split attributes from its own
//! RNG stream derived from the forest seed and the tree index, so training
//! is identical whatever the thread count.

mod importance;
mod tree;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::stage_rng;

pub use importance::{importance, Importance};
pub use tree::{Node, Tree};

use rand::Rng;
use tree::GrowParams;

pub const MODEL_FORMAT: &str = "rfa-forest";
pub const MODEL_VERSION: u32 = 1;

/// Feature-major training matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::WidthMismatch { expected: names.len(), found: columns.len() });
        }
        for c in &columns {
            if c.len() != labels.len() {
                return Err(Error::InvalidArgument(format!(
                    "column has {} rows, labels have {}",
                    c.len(),
                    labels.len()
                )));
            }
            if let Some((index, &value)) = c.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(Error::InvalidValue { index, value });
            }
        }
        if let Some(&l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidArgument(format!("label {l} is not 0 or 1")));
        }
        Ok(Self { names, columns, labels })
    }

    /// Build from row-major rows.
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>], labels: Vec<u8>) -> Result<Self> {
        let p = names.len();
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::WidthMismatch { expected: p, found: r.len() });
        }
        let columns = (0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::new(names, columns, labels)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - ones, ones]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Attributes tried per split; `None` means `floor(sqrt(p))`.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 500, mtry: None, min_leaf: 1, max_depth: None, seed: 0 }
    }
}

impl ForestConfig {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or_else(|| ((p as f64).sqrt().floor() as usize).max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format: String,
    pub version: u32,
    pub config: ForestConfig,
    pub mtry: usize,
    pub feature_names: Vec<String>,
    pub n_train: usize,
    pub trees: Vec<Tree>,
    /// Sorted out-of-bag row indices of each tree.
    pub oob: Vec<Vec<u32>>,
    pub importance: Option<Importance>,
}

/// Bootstrap sample of tree `tree`: `n` draws with replacement.
pub fn bootstrap_sample(seed: u64, tree: usize, n: usize) -> Vec<usize> {
    let mut rng = stage_rng(seed, "bootstrap", tree as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

pub fn train(data: &Dataset, config: &ForestConfig) -> Result<ForestModel> {
    let n = data.n_rows();
    let p = data.n_features();
    if config.n_trees == 0 {
        return Err(Error::InvalidArgument("n_trees must be at least 1".into()));
    }
    if config.min_leaf == 0 {
        return Err(Error::InvalidArgument("min_leaf must be at least 1".into()));
    }
    if p == 0 {
        return Err(Error::InvalidArgument("no features".into()));
    }
    let mtry = config.resolved_mtry(p);
    if !(1..=p).contains(&mtry) {
        return Err(Error::InvalidArgument(format!("mtry {mtry} outside 1..={p}")));
    }
    if n < 2 {
        return Err(Error::Degenerate(format!("{n} training rows")));
    }
    if data.class_counts().contains(&0) {
        return Err(Error::Degenerate("training data has a single class".into()));
    }
    let params = GrowParams { mtry, min_leaf: config.min_leaf, max_depth: config.max_depth };
    let grown: Vec<(Tree, Vec<u32>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let sample = bootstrap_sample(config.seed, t, n);
            let mut inbag = vec![false; n];
            for &r in &sample {
                inbag[r] = true;
            }
            let oob = (0..n as u32).filter(|&r| !inbag[r as usize]).collect();
            let mut rng = stage_rng(config.seed, "tree", t as u64);
            (Tree::grow(data, sample, &params, &mut rng), oob)
        })
        .collect();
    let (trees, oob) = grown.into_iter().unzip();
    Ok(ForestModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        config: *config,
        mtry,
        feature_names: data.names.clone(),
        n_train: n,
        trees,
        oob,
        importance: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OobSummary {
    pub accuracy: f64,
    /// Rows that were out of bag for at least one tree.
    pub covered: usize,
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn check_width(&self, found: usize) -> Result<()> {
        if found != self.n_features() {
            return Err(Error::WidthMismatch { expected: self.n_features(), found });
        }
        Ok(())
    }

    /// Trees voting for class 1.
    pub fn votes(&self, row: &[f64]) -> Result<usize> {
        self.check_width(row.len())?;
        Ok(self.trees.iter().filter(|t| t.predict(row) == 1).count())
    }

    /// Majority vote; a tie goes to class 0.
    pub fn predict_row(&self, row: &[f64]) -> Result<u8> {
        Ok(u8::from(2 * self.votes(row)? > self.trees.len()))
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<u8>> {
        rows.iter().map(|r| self.predict_row(r)).collect()
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<u8>> {
        self.check_width(data.n_features())?;
        Ok((0..data.n_rows())
            .into_par_iter()
            .map(|i| {
                let ones = self.trees.iter().filter(|t| t.predict_with(|f| data.columns[f][i]) == 1).count();
                u8::from(2 * ones > self.trees.len())
            })
            .collect())
    }

    /// Accuracy of the out-of-bag majority vote over covered rows of the
    /// training data.
    pub fn oob_summary(&self, train: &Dataset) -> Result<OobSummary> {
        self.check_width(train.n_features())?;
        if train.n_rows() != self.n_train {
            return Err(Error::InvalidArgument("dataset is not the training data".into()));
        }
        let mut votes = vec![[0usize; 2]; self.n_train];
        for (tree, oob) in self.trees.iter().zip(&self.oob) {
            for &r in oob {
                let r = r as usize;
                votes[r][tree.predict_with(|f| train.columns[f][r]) as usize] += 1;
            }
        }
        let (mut covered, mut correct) = (0usize, 0usize);
        for (v, &y) in votes.iter().zip(&train.labels) {
            if v[0] + v[1] > 0 {
                covered += 1;
                correct += usize::from(u8::from(v[1] > v[0]) == y);
            }
        }
        if covered == 0 {
            return Err(Error::Degenerate("no out-of-bag rows".into()));
        }
        Ok(OobSummary { accuracy: correct as f64 / covered as f64, covered })
    }

    pub fn used_features(&self) -> Vec<bool> {
        let mut used = vec![false; self.n_features()];
        for t in &self.trees {
            for f in t.split_features() {
                used[f] = true;
            }
        }
        used
    }

    pub fn with_importance(mut self, train: &Dataset) -> Result<Self> {
        self.importance = Some(importance(&self, train)?);
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: ForestModel = serde_json::from_str(text)?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported model document {} v{}",
                m.format, m.version
            )));
        }
        if m.trees.len() != m.oob.len() {
            return Err(Error::InvalidArgument("tree and out-of-bag counts differ".into()));
        }
        let p = m.n_features();
        for t in &m.trees {
            for node in &t.nodes {
                if let Node::Split { feature, left, right, .. } = node {
                    if *feature >= p || *left as usize >= t.nodes.len() || *right as usize >= t.nodes.len() {
                        return Err(Error::InvalidArgument("malformed tree".into()));
                    }
                }
            }
        }
        Ok(m)
    }
}
