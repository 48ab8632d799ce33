//! CART classification trees on two classes with Gini splits.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf { class: u8 },
    /// `x[feature] <= threshold` goes to `left`.
    Split { feature: usize, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub mtry: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

/// Candidate split scored by the exact rational `num / den`, where
/// `num / den = (l0² + l1²) / nl + (r0² + r1²) / nr`.
#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    num: u128,
    den: u128,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        self.num * other.den > other.num * self.den
    }
}

fn score(l: [u64; 2], r: [u64; 2]) -> (u128, u128) {
    let (nl, nr) = ((l[0] + l[1]) as u128, (r[0] + r[1]) as u128);
    let sl = (l[0] as u128).pow(2) + (l[1] as u128).pow(2);
    let sr = (r[0] as u128).pow(2) + (r[1] as u128).pow(2);
    (sl * nr + sr * nl, nl * nr)
}

fn midpoint(a: f64, b: f64) -> f64 {
    let t = a + (b - a) / 2.0;
    if t > a && t < b {
        t
    } else {
        a
    }
}

fn leaf(counts: [u64; 2]) -> Node {
    Node::Leaf { class: u8::from(counts[1] > counts[0]) }
}

impl Tree {
    /// Grow a tree on `sample` (row indices, repeats allowed).
    pub(crate) fn grow<R: Rng>(data: &Dataset, sample: Vec<usize>, params: &GrowParams, rng: &mut R) -> Tree {
        let p = data.n_features();
        let mut nodes = vec![Node::Leaf { class: 0 }];
        let mut stack = vec![(0usize, sample, 0usize)];
        let mut pairs: Vec<(f64, u8)> = Vec::new();
        while let Some((slot, rows, depth)) = stack.pop() {
            let mut counts = [0u64; 2];
            for &r in &rows {
                counts[data.labels[r] as usize] += 1;
            }
            let n = rows.len();
            let stop = counts[0] == 0
                || counts[1] == 0
                || n < 2 * params.min_leaf
                || params.max_depth.is_some_and(|d| depth >= d);
            if stop {
                nodes[slot] = leaf(counts);
                continue;
            }
            let mut features = index::sample(rng, p, params.mtry).into_vec();
            features.sort_unstable();
            let parent_num = (counts[0] as u128).pow(2) + (counts[1] as u128).pow(2);
            let mut best: Option<Candidate> = None;
            for &f in &features {
                let col = &data.columns[f];
                pairs.clear();
                pairs.extend(rows.iter().map(|&r| (col[r], data.labels[r])));
                pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
                let mut l = [0u64; 2];
                for i in 0..n - 1 {
                    l[pairs[i].1 as usize] += 1;
                    let nl = i + 1;
                    if pairs[i].0 == pairs[i + 1].0 || nl < params.min_leaf || n - nl < params.min_leaf {
                        continue;
                    }
                    let r = [counts[0] - l[0], counts[1] - l[1]];
                    let (num, den) = score(l, r);
                    // Must strictly improve on the parent: num/den > parent_num/n.
                    if num * n as u128 <= parent_num * den {
                        continue;
                    }
                    let c = Candidate { feature: f, threshold: midpoint(pairs[i].0, pairs[i + 1].0), num, den };
                    if best.as_ref().is_none_or(|b| c.beats(b)) {
                        best = Some(c);
                    }
                }
            }
            let Some(best) = best else {
                nodes[slot] = leaf(counts);
                continue;
            };
            let col = &data.columns[best.feature];
            let (left, right): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&r| col[r] <= best.threshold);
            let (li, ri) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf { class: 0 });
            nodes.push(Node::Leaf { class: 0 });
            nodes[slot] = Node::Split { feature: best.feature, threshold: best.threshold, left: li as u32, right: ri as u32 };
            stack.push((ri, right, depth + 1));
            stack.push((li, left, depth + 1));
        }
        Tree { nodes }
    }

    pub fn predict_with(&self, value: impl Fn(usize) -> f64) -> u8 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { class } => return *class,
                Node::Split { feature, threshold, left, right } => {
                    i = if value(*feature) <= *threshold { *left } else { *right } as usize;
                }
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> u8 {
        self.predict_with(|f| row[f])
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }
}
