//! Candidate profiles, the four feature sets, and correlation pruning.
//!
//! Attribute names and their order form the canonical registry: the seven
//! revision attributes, then eleven attributes for each of `adminSN`,
//! `userSN` and `burSN` (betweenness omitted on `userSN`), 39 in total.
//! Pruning drops the later member of a correlated pair, so the registry
//! order is part of the model definition.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::sync::LazyLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::Dataset;
use crate::graph::{scoped_snapshots, Scope, TalkGraph, TalkLog};
use crate::ingest::{Corpus, InteractionEvent, RevisionEvent, RfaCase, RoleBook, Timestamp, UserId};
use crate::metrics::{self, ClosenessVariant, StatsOptions};
use crate::stats;

pub const REVISION_ATTRIBUTES: [&str; 7] = [
    "Revisions",
    "Pages",
    "Categories",
    "TalkPages",
    "PageTalks",
    "Revision_repartition",
    "PageTalks_repartition",
];

const SOCIAL_STEMS: [&str; 11] = [
    "Degree",
    "outDegree",
    "inDegree",
    "TalksNumber",
    "outTalksNumber",
    "inTalksNumber",
    "Closeness",
    "PageRank",
    "Betweeness",
    "outTalksRepartition",
    "inTalksRepartition",
];

/// Scope order of the social attribute blocks.
pub const SOCIAL_SCOPES: [Scope; 3] = [Scope::AdminSN, Scope::UserSN, Scope::BurSN];

/// Optional column emitted when user-graph betweenness is requested. It is
/// never part of a model.
pub const USER_BETWEENNESS: &str = "Betweeness_userSN";

fn scope_has_betweenness(scope: Scope) -> bool {
    scope != Scope::UserSN
}

static SOCIAL: LazyLock<Vec<String>> = LazyLock::new(|| {
    SOCIAL_SCOPES
        .iter()
        .flat_map(|&scope| {
            SOCIAL_STEMS
                .iter()
                .filter(move |&&stem| stem != "Betweeness" || scope_has_betweenness(scope))
                .map(move |stem| format!("{stem}_{}", scope.suffix()))
        })
        .collect()
});

static CANONICAL: LazyLock<Vec<String>> = LazyLock::new(|| {
    REVISION_ATTRIBUTES.iter().map(|s| s.to_string()).chain(SOCIAL.iter().cloned()).collect()
});

pub fn social_attributes() -> &'static [String] {
    &SOCIAL
}

/// All 39 model attributes in registry order.
pub fn canonical_attributes() -> &'static [String] {
    &CANONICAL
}

pub fn registry_position(name: &str) -> Option<usize> {
    CANONICAL.iter().position(|a| a == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    Model1,
    Model2,
    Model3,
    Model4,
}

impl ModelKind {
    pub fn number(self) -> u8 {
        match self {
            ModelKind::Model1 => 1,
            ModelKind::Model2 => 2,
            ModelKind::Model3 => 3,
            ModelKind::Model4 => 4,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Self::Model1),
            2 => Some(Self::Model2),
            3 => Some(Self::Model3),
            4 => Some(Self::Model4),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "model{}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub first: String,
    pub second: String,
    pub r: f64,
    pub dropped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneTrace {
    pub threshold: f64,
    pub profiles: usize,
    pub constant_dropped: Vec<String>,
    /// Every pair of non-constant attributes, in processing order.
    pub pairs: Vec<PairRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub kind: ModelKind,
    pub attributes: Vec<String>,
    pub trace: Option<PruneTrace>,
}

impl FeatureSet {
    pub fn model1() -> Self {
        Self { kind: ModelKind::Model1, attributes: CANONICAL[..7].to_vec(), trace: None }
    }

    pub fn model2() -> Self {
        Self { kind: ModelKind::Model2, attributes: SOCIAL.clone(), trace: None }
    }

    pub fn model3() -> Self {
        Self { kind: ModelKind::Model3, attributes: CANONICAL.clone(), trace: None }
    }

    pub fn fixed(kind: ModelKind) -> Option<Self> {
        match kind {
            ModelKind::Model1 => Some(Self::model1()),
            ModelKind::Model2 => Some(Self::model2()),
            ModelKind::Model3 => Some(Self::model3()),
            ModelKind::Model4 => None,
        }
    }
}

/// One candidacy's feature vector; `values` align with the owning table's
/// attribute list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateProfile {
    pub candidate: UserId,
    pub close_date: Timestamp,
    pub outcome: bool,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable {
    pub attributes: Vec<String>,
    pub profiles: Vec<CandidateProfile>,
}

impl ProfileTable {
    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.attributes
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.index_of(name)?;
        Ok(self.profiles.iter().map(|p| p.values[i]).collect())
    }

    pub fn outcomes(&self) -> Vec<bool> {
        self.profiles.iter().map(|p| p.outcome).collect()
    }

    pub fn value(&self, row: usize, name: &str) -> Result<f64> {
        Ok(self.profiles[row].values[self.index_of(name)?])
    }

    /// Feature-major dataset of the given attributes over `rows`
    /// (all rows when `None`).
    pub fn dataset(&self, attributes: &[String], rows: Option<&[usize]>) -> Result<Dataset> {
        let idx: Vec<usize> = attributes.iter().map(|a| self.index_of(a)).collect::<Result<_>>()?;
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => r,
            None => {
                all = (0..self.len()).collect();
                &all
            }
        };
        let columns = idx
            .iter()
            .map(|&j| rows.iter().map(|&r| self.profiles[r].values[j]).collect())
            .collect();
        let labels = rows.iter().map(|&r| self.profiles[r].outcome as u8).collect();
        Dataset::new(attributes.to_vec(), columns, labels)
    }

    /// Feature matrix: header is the attribute names followed by `outcome`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(self.attributes.iter().map(String::as_str).chain(["outcome"]))?;
        for p in &self.profiles {
            let mut rec: Vec<String> = p.values.iter().map(|v| v.to_string()).collect();
            rec.push(if p.outcome { "1" } else { "0" }.into());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Row identities (`candidate,close_date`) matching [`Self::write_csv`].
    pub fn write_index<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(["candidate", "close_date"])?;
        for p in &self.profiles {
            wr.write_record([p.candidate.as_str(), &p.close_date.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Read a feature matrix, optionally with its row index. Without an
    /// index, rows are named `Row<n>`.
    pub fn read_csv(matrix: &str, index: Option<&str>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(matrix.as_bytes());
        let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        if header.last().map(String::as_str) != Some("outcome") {
            return Err(Error::BadHeader { expected: vec!["...".into(), "outcome".into()], found: header });
        }
        let attributes = header[..header.len() - 1].to_vec();
        let ids: Option<Vec<(UserId, Timestamp)>> = index
            .map(|text| {
                let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
                r.records()
                    .map(|rec| {
                        let rec = rec?;
                        let id = UserId::new(rec.get(0).unwrap_or_default())?;
                        let ts = rec
                            .get(1)
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| Error::InvalidArgument("bad close_date in index".into()))?;
                        Ok((id, ts))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        let mut profiles = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::InvalidArgument(format!("row {} has {} fields", i + 1, rec.len())));
            }
            let values = rec
                .iter()
                .take(attributes.len())
                .map(|s| s.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("row {}: bad number {s:?}", i + 1))))
                .collect::<Result<Vec<f64>>>()?;
            let outcome = match &rec[attributes.len()] {
                "1" => true,
                "0" => false,
                o => return Err(Error::InvalidArgument(format!("row {}: outcome {o:?}", i + 1))),
            };
            let (candidate, close_date) = match &ids {
                Some(ids) => ids.get(i).cloned().ok_or_else(|| Error::InvalidArgument("index shorter than matrix".into()))?,
                None => (UserId::new(&format!("Row{}", i + 1))?, 0),
            };
            profiles.push(CandidateProfile { candidate, close_date, outcome, values });
        }
        if ids.as_ref().is_some_and(|ids| ids.len() != profiles.len()) {
            return Err(Error::InvalidArgument("index and matrix row counts differ".into()));
        }
        Ok(Self { attributes, profiles })
    }
}

/// The seven revision attributes of one candidate from events strictly
/// before `cutoff`.
pub fn revision_features(
    revisions: &[RevisionEvent],
    article_talks: &[InteractionEvent],
    candidate: &UserId,
    cutoff: Timestamp,
) -> [f64; 7] {
    revision_features_from(
        revisions.iter().filter(|e| &e.user == candidate && e.timestamp < cutoff),
        article_talks.iter().filter(|e| &e.source == candidate && e.timestamp < cutoff),
    )
}

fn revision_features_from<'a>(
    revisions: impl Iterator<Item = &'a RevisionEvent>,
    talks: impl Iterator<Item = &'a InteractionEvent>,
) -> [f64; 7] {
    let mut per_page: HashMap<&str, u64> = HashMap::new();
    let mut categories: HashSet<&str> = HashSet::new();
    let mut n_rev = 0u64;
    for e in revisions {
        n_rev += 1;
        *per_page.entry(e.page.as_str()).or_default() += 1;
        categories.extend(e.categories.iter().map(String::as_str));
    }
    let mut per_talk_page: HashMap<&str, u64> = HashMap::new();
    let mut n_talk = 0u64;
    for e in talks {
        if let Some(page) = e.page() {
            n_talk += 1;
            *per_talk_page.entry(page).or_default() += 1;
        }
    }
    let g = |m: &HashMap<&str, u64>| {
        let v: Vec<f64> = m.values().map(|&c| c as f64).collect();
        metrics::gini(&v).expect("counts are non-negative")
    };
    [
        n_rev as f64,
        per_page.len() as f64,
        categories.len() as f64,
        per_talk_page.len() as f64,
        n_talk as f64,
        g(&per_page),
        g(&per_talk_page),
    ]
}

/// Per-user event positions for repeated prefix queries.
pub struct ActivityIndex<'a> {
    revisions: &'a [RevisionEvent],
    talks: &'a [InteractionEvent],
    rev_by_user: HashMap<&'a UserId, Vec<usize>>,
    talk_by_user: HashMap<&'a UserId, Vec<usize>>,
}

impl<'a> ActivityIndex<'a> {
    pub fn new(revisions: &'a [RevisionEvent], talks: &'a [InteractionEvent]) -> Self {
        let mut rev_by_user: HashMap<&UserId, Vec<usize>> = HashMap::new();
        for (i, e) in revisions.iter().enumerate() {
            rev_by_user.entry(&e.user).or_default().push(i);
        }
        let mut talk_by_user: HashMap<&UserId, Vec<usize>> = HashMap::new();
        for (i, e) in talks.iter().enumerate() {
            if e.page().is_some() {
                talk_by_user.entry(&e.source).or_default().push(i);
            }
        }
        for v in rev_by_user.values_mut() {
            v.sort_by_key(|&i| (revisions[i].timestamp, i));
        }
        for v in talk_by_user.values_mut() {
            v.sort_by_key(|&i| (talks[i].timestamp, i));
        }
        Self { revisions, talks, rev_by_user, talk_by_user }
    }

    pub fn revision_features(&self, candidate: &UserId, cutoff: Timestamp) -> [f64; 7] {
        let empty = Vec::new();
        let revs = self.rev_by_user.get(candidate).unwrap_or(&empty);
        let talks = self.talk_by_user.get(candidate).unwrap_or(&empty);
        let nr = revs.partition_point(|&i| self.revisions[i].timestamp < cutoff);
        let nt = talks.partition_point(|&i| self.talks[i].timestamp < cutoff);
        revision_features_from(
            revs[..nr].iter().map(|&i| &self.revisions[i]),
            talks[..nt].iter().map(|&i| &self.talks[i]),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SocialOptions {
    /// Also compute betweenness on the user graph (extra column, never in a model).
    pub user_betweenness: bool,
    pub closeness: ClosenessVariant,
}

/// Social attributes of the focus of `[userSN, adminSN, burSN]` snapshots,
/// in registry order, followed by user-graph betweenness when requested.
pub fn social_features(snapshots: &[TalkGraph; 3], opts: &SocialOptions) -> Result<Vec<f64>> {
    let focus = snapshots[0].focus_id();
    let cutoff = snapshots[0].cutoff();
    for (g, scope) in snapshots.iter().zip([Scope::UserSN, Scope::AdminSN, Scope::BurSN]) {
        if g.scope() != scope || g.focus_id() != focus || g.cutoff() != cutoff {
            return Err(Error::InvalidArgument(
                "snapshots must be userSN, adminSN, burSN of one candidate and cutoff".into(),
            ));
        }
    }
    let mut out = Vec::with_capacity(33);
    let mut user_bc = None;
    for scope in SOCIAL_SCOPES {
        let g = &snapshots[match scope {
            Scope::UserSN => 0,
            Scope::AdminSN => 1,
            Scope::BurSN => 2,
        }];
        let with_bc = scope_has_betweenness(scope) || opts.user_betweenness;
        let s = metrics::node_stats_at(g, g.focus(), &StatsOptions { betweenness: with_bc, closeness: opts.closeness });
        out.extend([
            s.degree as f64,
            s.out_degree as f64,
            s.in_degree as f64,
            s.talks_total as f64,
            s.talks_out as f64,
            s.talks_in as f64,
            s.closeness,
            s.pagerank,
        ]);
        if scope_has_betweenness(scope) {
            out.push(s.betweenness.unwrap_or(0.0));
        } else {
            user_bc = s.betweenness;
        }
        out.extend([s.out_talks_gini, s.in_talks_gini]);
    }
    if let Some(b) = user_bc {
        out.push(b);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    /// Snapshot cutoff = close date minus this margin.
    pub campaign_margin_secs: i64,
    pub social: SocialOptions,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self { campaign_margin_secs: 7 * 86_400, social: SocialOptions::default() }
    }
}

/// Profiles for every case, in case order. Extraction runs in parallel;
/// the output does not depend on the thread count.
pub fn extract_profiles(corpus: &Corpus, cases: &[RfaCase], cfg: &ExtractConfig) -> Result<ProfileTable> {
    let log = TalkLog::new(&corpus.user_talk);
    let book = RoleBook::new(&corpus.roles);
    let activity = ActivityIndex::new(&corpus.revisions, &corpus.article_talk);
    let mut attributes = canonical_attributes().to_vec();
    if cfg.social.user_betweenness {
        attributes.push(USER_BETWEENNESS.to_string());
    }
    let profiles = cases
        .par_iter()
        .map(|case| {
            let cutoff = case.close_date - cfg.campaign_margin_secs;
            let mut values = activity.revision_features(&case.candidate, cutoff).to_vec();
            let snaps = scoped_snapshots(&log, &book, &case.candidate, cutoff);
            values.extend(social_features(&snaps, &cfg.social)?);
            Ok(CandidateProfile {
                candidate: case.candidate.clone(),
                close_date: case.close_date,
                outcome: case.outcome,
                values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProfileTable { attributes, profiles })
}

/// Pearson-correlation pruning of Model 3 into Model 4.
///
/// Only `rows` of the table are used (all rows when `None`). Constant
/// attributes go first; then pairs are visited in descending `|r|` (ties by
/// registry position) and, while both members survive and `|r| > threshold`,
/// the member later in the registry is dropped. Rows are put in a canonical
/// order before any sums are formed, so the result does not depend on the
/// order of the profiles.
pub fn prune_correlated(table: &ProfileTable, rows: Option<&[usize]>, threshold: f64) -> Result<FeatureSet> {
    let all: Vec<usize>;
    let rows = match rows {
        Some(r) => r,
        None => {
            all = (0..table.len()).collect();
            &all
        }
    };
    if rows.len() < 3 {
        return Err(Error::Degenerate(format!("correlation pruning needs at least 3 profiles, got {}", rows.len())));
    }
    let attrs = canonical_attributes();
    let idx: Vec<usize> = attrs.iter().map(|a| table.index_of(a)).collect::<Result<_>>()?;
    let mut ordered: Vec<&[f64]> = rows.iter().map(|&r| table.profiles[r].values.as_slice()).collect();
    ordered.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let columns: Vec<Vec<f64>> = idx.iter().map(|&j| ordered.iter().map(|v| v[j]).collect()).collect();
    if let Some(bad) = columns.iter().flatten().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite feature value {bad}")));
    }

    let mut alive = vec![true; attrs.len()];
    let mut constant_dropped = Vec::new();
    for (i, c) in columns.iter().enumerate() {
        if c.iter().all(|&v| v == c[0]) {
            alive[i] = false;
            constant_dropped.push(attrs[i].clone());
            log::info!("pruning: dropped constant attribute {}", attrs[i]);
        }
    }

    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..attrs.len() {
        for j in i + 1..attrs.len() {
            if alive[i] && alive[j] {
                let r = stats::pearson(&columns[i], &columns[j]).unwrap_or(0.0);
                pairs.push((i, j, r));
            }
        }
    }
    pairs.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()).then((a.0, a.1).cmp(&(b.0, b.1))));

    let mut records = Vec::with_capacity(pairs.len());
    for (i, j, r) in pairs {
        let dropped = (alive[i] && alive[j] && r.abs() > threshold).then(|| {
            alive[j] = false;
            attrs[j].clone()
        });
        records.push(PairRecord { first: attrs[i].clone(), second: attrs[j].clone(), r, dropped });
    }

    Ok(FeatureSet {
        kind: ModelKind::Model4,
        attributes: attrs.iter().zip(&alive).filter(|(_, &a)| a).map(|(n, _)| n.clone()).collect(),
        trace: Some(PruneTrace { threshold, profiles: rows.len(), constant_dropped, pairs: records }),
    })
}
