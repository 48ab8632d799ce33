//! Node-level statistics on a [`TalkGraph`].
//!
//! Distances are unweighted hops along edge direction. Edge weights
//! (message counts) enter only the talk counts, the Gini coefficients and
//! the PageRank transition probabilities.

use std::collections::VecDeque;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TalkGraph;
use crate::ingest::UserId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Degrees {
    /// Distinct neighbors ignoring direction.
    pub degree: usize,
    pub out_degree: usize,
    pub in_degree: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TalkCounts {
    pub total: u64,
    pub out: u64,
    pub inbound: u64,
}

pub fn degrees_at(g: &TalkGraph, u: usize) -> Degrees {
    let (out, inc) = (g.out_edges(u), g.in_edges(u));
    // Both lists are sorted by neighbor: merge to count the union.
    let (mut i, mut j, mut union) = (0, 0, 0);
    while i < out.len() || j < inc.len() {
        union += 1;
        match (out.get(i), inc.get(j)) {
            (Some(a), Some(b)) if a.0 == b.0 => {
                i += 1;
                j += 1;
            }
            (Some(a), Some(b)) if a.0 < b.0 => i += 1,
            (Some(_), None) => i += 1,
            _ => j += 1,
        }
    }
    Degrees { degree: union, out_degree: out.len(), in_degree: inc.len() }
}

pub fn degrees(g: &TalkGraph, user: &UserId) -> Result<Degrees> {
    Ok(degrees_at(g, g.require(user)?))
}

pub fn talk_counts_at(g: &TalkGraph, u: usize) -> TalkCounts {
    let out: u64 = g.out_edges(u).iter().map(|e| e.1).sum();
    let inbound: u64 = g.in_edges(u).iter().map(|e| e.1).sum();
    TalkCounts { total: out + inbound, out, inbound }
}

pub fn talk_counts(g: &TalkGraph, user: &UserId) -> Result<TalkCounts> {
    Ok(talk_counts_at(g, g.require(user)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ClosenessVariant {
    /// `|R| / sum of distances to R`, R the nodes reachable from the source.
    #[default]
    ReachableScaled,
    /// `1 / sum of distances to R`.
    RawInverse,
}

/// Hop distances from `src` along outgoing edges; `u32::MAX` = unreachable.
fn bfs(g: &TalkGraph, src: usize) -> Vec<u32> {
    let mut dist = vec![u32::MAX; g.node_count()];
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(v) = queue.pop_front() {
        for &(w, _) in g.out_edges(v) {
            if dist[w] == u32::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

pub fn closeness_at(g: &TalkGraph, u: usize, variant: ClosenessVariant) -> f64 {
    let (mut reached, mut sum) = (0u64, 0u64);
    for (v, d) in bfs(g, u).into_iter().enumerate() {
        if v != u && d != u32::MAX {
            reached += 1;
            sum += d as u64;
        }
    }
    if reached == 0 {
        return 0.0;
    }
    match variant {
        ClosenessVariant::ReachableScaled => reached as f64 / sum as f64,
        ClosenessVariant::RawInverse => 1.0 / sum as f64,
    }
}

pub fn closeness(g: &TalkGraph, user: &UserId) -> Result<f64> {
    Ok(closeness_at(g, g.require(user)?, ClosenessVariant::default()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageRankConfig {
    pub damping: f64,
    /// Stop when the L1 change between iterations drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        Self { damping: 0.85, tolerance: 1e-8, max_iterations: 200 }
    }
}

pub fn pagerank(g: &TalkGraph) -> Vec<f64> {
    pagerank_with(g, &PageRankConfig::default())
}

/// Weighted PageRank by power iteration. A node's mass flows along its
/// out-edges in proportion to their weights; dangling mass is spread
/// uniformly over all nodes.
pub fn pagerank_with(g: &TalkGraph, cfg: &PageRankConfig) -> Vec<f64> {
    let n = g.node_count();
    if n == 0 {
        return Vec::new();
    }
    let nf = n as f64;
    let out_w: Vec<f64> = (0..n).map(|u| g.out_edges(u).iter().map(|e| e.1 as f64).sum()).collect();
    let mut scores = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    for _ in 0..cfg.max_iterations {
        let dangling: f64 = (0..n).filter(|&u| out_w[u] == 0.0).map(|u| scores[u]).sum();
        let base = (1.0 - cfg.damping) / nf + cfg.damping * dangling / nf;
        for (v, slot) in next.iter_mut().enumerate() {
            let inflow: f64 = g.in_edges(v).iter().map(|&(u, w)| scores[u] * w as f64 / out_w[u]).sum();
            *slot = base + cfg.damping * inflow;
        }
        let delta: f64 = scores.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut scores, &mut next);
        if delta < cfg.tolerance {
            break;
        }
    }
    let total: f64 = scores.iter().sum();
    scores.iter_mut().for_each(|s| *s /= total);
    scores
}

const BRANDES_CHUNK: usize = 64;

/// Unnormalized directed betweenness of every node, by Brandes' dependency
/// accumulation over all sources. Sources are processed in fixed-size
/// chunks whose partial sums are reduced in chunk order, so the result does
/// not depend on the thread count.
pub fn betweenness_all(g: &TalkGraph) -> Vec<f64> {
    let n = g.node_count();
    let sources: Vec<usize> = (0..n).collect();
    let partials: Vec<Vec<f64>> = sources
        .par_chunks(BRANDES_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; n];
            let mut scratch = BrandesScratch::new(n);
            for &s in chunk {
                scratch.accumulate(g, s, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; n];
    for p in partials {
        for (t, x) in total.iter_mut().zip(p) {
            *t += x;
        }
    }
    total
}

struct BrandesScratch {
    dist: Vec<u32>,
    sigma: Vec<f64>,
    delta: Vec<f64>,
    order: Vec<usize>,
    queue: VecDeque<usize>,
}

impl BrandesScratch {
    fn new(n: usize) -> Self {
        Self {
            dist: vec![u32::MAX; n],
            sigma: vec![0.0; n],
            delta: vec![0.0; n],
            order: Vec::with_capacity(n),
            queue: VecDeque::new(),
        }
    }

    fn accumulate(&mut self, g: &TalkGraph, s: usize, acc: &mut [f64]) {
        for &v in &self.order {
            self.dist[v] = u32::MAX;
            self.sigma[v] = 0.0;
            self.delta[v] = 0.0;
        }
        self.order.clear();
        self.dist[s] = 0;
        self.sigma[s] = 1.0;
        self.queue.push_back(s);
        while let Some(v) = self.queue.pop_front() {
            self.order.push(v);
            for &(w, _) in g.out_edges(v) {
                if self.dist[w] == u32::MAX {
                    self.dist[w] = self.dist[v] + 1;
                    self.queue.push_back(w);
                }
                if self.dist[w] == self.dist[v] + 1 {
                    self.sigma[w] += self.sigma[v];
                }
            }
        }
        for &w in self.order.iter().rev() {
            let dw = self.dist[w];
            if dw == 0 {
                continue;
            }
            let coeff = (1.0 + self.delta[w]) / self.sigma[w];
            for &(v, _) in g.in_edges(w) {
                if self.dist[v] != u32::MAX && self.dist[v] + 1 == dw {
                    self.delta[v] += self.sigma[v] * coeff;
                }
            }
            acc[w] += self.delta[w];
        }
    }
}

pub fn betweenness(g: &TalkGraph, user: &UserId) -> Result<f64> {
    let u = g.require(user)?;
    Ok(betweenness_all(g)[u])
}

/// Gini coefficient `sum_ij |x_i - x_j| / (2 n^2 mean)`, computed from the
/// sorted values in O(n log n). Empty, singleton and all-zero inputs give 0.
pub fn gini(values: &[f64]) -> Result<f64> {
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidValue { index, value });
    }
    let n = values.len();
    let total: f64 = values.iter().sum();
    if n < 2 || total == 0.0 {
        return Ok(0.0);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - nf - 1.0) * x)
        .sum();
    Ok((weighted / (nf * total)).clamp(0.0, 1.0))
}

fn gini_counts(edges: &[(usize, u64)]) -> f64 {
    let v: Vec<f64> = edges.iter().map(|e| e.1 as f64).collect();
    gini(&v).expect("counts are non-negative")
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeStats {
    pub degree: usize,
    pub out_degree: usize,
    pub in_degree: usize,
    pub talks_total: u64,
    pub talks_out: u64,
    pub talks_in: u64,
    pub closeness: f64,
    pub pagerank: f64,
    pub betweenness: Option<f64>,
    pub out_talks_gini: f64,
    pub in_talks_gini: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StatsOptions {
    pub betweenness: bool,
    pub closeness: ClosenessVariant,
}

fn assemble(g: &TalkGraph, u: usize, pr: f64, bc: Option<f64>, opts: &StatsOptions) -> NodeStats {
    let d = degrees_at(g, u);
    let t = talk_counts_at(g, u);
    NodeStats {
        degree: d.degree,
        out_degree: d.out_degree,
        in_degree: d.in_degree,
        talks_total: t.total,
        talks_out: t.out,
        talks_in: t.inbound,
        closeness: closeness_at(g, u, opts.closeness),
        pagerank: pr,
        betweenness: bc,
        out_talks_gini: gini_counts(g.out_edges(u)),
        in_talks_gini: gini_counts(g.in_edges(u)),
    }
}

pub fn node_stats_at(g: &TalkGraph, u: usize, opts: &StatsOptions) -> NodeStats {
    let pr = pagerank(g)[u];
    let bc = opts.betweenness.then(|| betweenness_all(g)[u]);
    assemble(g, u, pr, bc, opts)
}

pub fn all_node_stats(g: &TalkGraph, opts: &StatsOptions) -> Vec<NodeStats> {
    let pr = pagerank(g);
    let bc = opts.betweenness.then(|| betweenness_all(g));
    (0..g.node_count())
        .map(|u| assemble(g, u, pr[u], bc.as_ref().map(|b| b[u]), opts))
        .collect()
}

/// Per-node statistics CSV for debugging.
pub fn write_node_stats<W: Write>(g: &TalkGraph, opts: &StatsOptions, w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wr.write_record([
        "node", "degree", "out_degree", "in_degree", "talks_total", "talks_out", "talks_in",
        "closeness", "pagerank", "betweenness", "out_talks_gini", "in_talks_gini",
    ])?;
    for (u, s) in all_node_stats(g, opts).into_iter().enumerate() {
        wr.write_record([
            g.nodes()[u].to_string(),
            s.degree.to_string(),
            s.out_degree.to_string(),
            s.in_degree.to_string(),
            s.talks_total.to_string(),
            s.talks_out.to_string(),
            s.talks_in.to_string(),
            s.closeness.to_string(),
            s.pagerank.to_string(),
            s.betweenness.map(|b| b.to_string()).unwrap_or_default(),
            s.out_talks_gini.to_string(),
            s.in_talks_gini.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
