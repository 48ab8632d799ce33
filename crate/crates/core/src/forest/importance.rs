//! Out-of-bag permutation importance (mean decrease in accuracy).

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, ForestModel};
use crate::error::{Error, Result};
use crate::seed::stage_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub feature_names: Vec<String>,
    /// Mean over trees of OOB accuracy lost when the attribute is permuted.
    pub overall: Vec<f64>,
    /// Same, with accuracy measured on OOB rows whose true label is 0.
    pub class0: Vec<f64>,
    /// Same, on OOB rows whose true label is 1.
    pub class1: Vec<f64>,
    /// Standard deviation of the per-tree overall decreases.
    pub overall_sd: Vec<f64>,
}

impl Importance {
    /// Feature indices by decreasing overall importance (ties by index).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.overall.len()).collect();
        idx.sort_by(|&a, &b| self.overall[b].total_cmp(&self.overall[a]).then(a.cmp(&b)));
        idx
    }

    pub fn top(&self, k: usize) -> Vec<&str> {
        self.ranking().into_iter().take(k).map(|i| self.feature_names[i].as_str()).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(["attribute", "overall", "class0", "class1", "overall_sd", "rank"])?;
        let mut rank = vec![0; self.overall.len()];
        for (r, i) in self.ranking().into_iter().enumerate() {
            rank[i] = r + 1;
        }
        for (i, rank) in rank.iter().enumerate() {
            wr.write_record([
                self.feature_names[i].clone(),
                self.overall[i].to_string(),
                self.class0[i].to_string(),
                self.class1[i].to_string(),
                self.overall_sd[i].to_string(),
                rank.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

struct TreeDecrease {
    overall: Vec<f64>,
    class: [Option<Vec<f64>>; 2],
}

/// Permutation importance on the training data the model was fitted to.
/// The permutation of attribute `j` in tree `t` comes from the stream
/// `(seed, "permute", t * p + j)`; the class-conditional scores reuse it.
pub fn importance(model: &ForestModel, train: &Dataset) -> Result<Importance> {
    let p = model.n_features();
    if train.n_features() != p {
        return Err(Error::WidthMismatch { expected: p, found: train.n_features() });
    }
    if train.n_rows() != model.n_train {
        return Err(Error::InvalidArgument("dataset is not the training data".into()));
    }
    if let Some(tree) = model.oob.iter().position(|o| o.is_empty()) {
        return Err(Error::NoOobRows { tree });
    }
    let per_tree: Vec<TreeDecrease> = model
        .trees
        .par_iter()
        .zip(&model.oob)
        .enumerate()
        .map(|(t, (tree, oob))| {
            let rows: Vec<usize> = oob.iter().map(|&r| r as usize).collect();
            let mut n_class = [0usize; 2];
            let mut base = [0usize; 2];
            for &r in &rows {
                let y = train.labels[r];
                n_class[y as usize] += 1;
                base[y as usize] += usize::from(tree.predict_with(|f| train.columns[f][r]) == y);
            }
            let used: Vec<bool> = {
                let mut u = vec![false; p];
                tree.split_features().for_each(|f| u[f] = true);
                u
            };
            let mut overall = vec![0.0; p];
            let mut class = [vec![0.0; p], vec![0.0; p]];
            let mut shuffled: Vec<f64> = Vec::with_capacity(rows.len());
            for j in 0..p {
                if !used[j] {
                    continue;
                }
                let mut rng = stage_rng(model.config.seed, "permute", (t * p + j) as u64);
                shuffled.clear();
                shuffled.extend(rows.iter().map(|&r| train.columns[j][r]));
                shuffled.shuffle(&mut rng);
                let mut hit = [0usize; 2];
                for (k, &r) in rows.iter().enumerate() {
                    let y = train.labels[r];
                    let pred = tree.predict_with(|f| if f == j { shuffled[k] } else { train.columns[f][r] });
                    hit[y as usize] += usize::from(pred == y);
                }
                let lost = |c: usize| base[c] as f64 - hit[c] as f64;
                overall[j] = (lost(0) + lost(1)) / rows.len() as f64;
                for c in 0..2 {
                    if n_class[c] > 0 {
                        class[c][j] = lost(c) / n_class[c] as f64;
                    }
                }
            }
            let [c0, c1] = class;
            TreeDecrease {
                overall,
                class: [(n_class[0] > 0).then_some(c0), (n_class[1] > 0).then_some(c1)],
            }
        })
        .collect();

    let t = per_tree.len() as f64;
    let mut overall = vec![0.0; p];
    let mut sq = vec![0.0; p];
    let mut class = [vec![0.0; p], vec![0.0; p]];
    let mut class_trees = [0usize; 2];
    for d in &per_tree {
        for j in 0..p {
            overall[j] += d.overall[j];
            sq[j] += d.overall[j] * d.overall[j];
        }
        for c in 0..2 {
            if let Some(v) = &d.class[c] {
                class_trees[c] += 1;
                for j in 0..p {
                    class[c][j] += v[j];
                }
            }
        }
    }
    let overall_sd = (0..p)
        .map(|j| {
            if per_tree.len() < 2 {
                0.0
            } else {
                let m = overall[j] / t;
                ((sq[j] - t * m * m).max(0.0) / (t - 1.0)).sqrt()
            }
        })
        .collect();
    for v in &mut overall {
        *v /= t;
    }
    for c in 0..2 {
        if class_trees[c] > 0 {
            for v in &mut class[c] {
                *v /= class_trees[c] as f64;
            }
        }
    }
    let [class0, class1] = class;
    Ok(Importance { feature_names: model.feature_names.clone(), overall, class0, class1, overall_sd })
}
