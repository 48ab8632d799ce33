//! Seeded synthetic corpora with planted promotion signal.
//!
//! Each candidate gets two latent activity levels, one for the revision
//! family and one for the social family, drawn log-normally. Promoted
//! candidates have their log-mean shifted up by `ln(gap) / 2` and rejected
//! ones down by the same amount, so the geometric-mean ratio between the
//! classes is exactly `gap`. The two families are independent given the
//! outcome.
//!
//! Background users only talk among themselves, and candidates only talk to
//! background users, so a candidate's planted tallies are exactly what
//! feature extraction should recover for any campaign margin up to
//! [`QUIET_PERIOD_SECS`].

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::{
    utc_date, Corpus, InteractionEvent, RevisionEvent, RfaCase, Role, RoleAssignment, Timestamp,
    UserId, VoteCounts,
};
use crate::error::{Error, Result};
use crate::seed::{stage_rng, StageRng};

/// No candidate activity is generated within this span before its close date.
pub const QUIET_PERIOD_SECS: i64 = 30 * 86_400;

const LOG_SD: f64 = 0.7;
const BASE_REVISIONS: f64 = 300.0;
const BASE_CONTACTS: f64 = 25.0;
const PAGE_POOL: u32 = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    /// Promoted / rejected ratio of revision-family volumes.
    pub revision_gap: f64,
    /// Promoted / rejected ratio of social-family volumes.
    pub social_gap: f64,
    /// Promoted log-sd relative to rejected; below 1 clusters promoted
    /// candidates more tightly.
    pub spread_ratio: f64,
}

impl SignalSpec {
    pub fn none() -> Self {
        Self { revision_gap: 1.0, social_gap: 1.0, spread_ratio: 1.0 }
    }

    pub fn revisions_only(gap: f64) -> Self {
        Self { revision_gap: gap, ..Self::none() }
    }

    pub fn social_only(gap: f64) -> Self {
        Self { social_gap: gap, ..Self::none() }
    }

    pub fn both(revision_gap: f64, social_gap: f64) -> Self {
        Self { revision_gap, social_gap, spread_ratio: 1.0 }
    }
}

impl Default for SignalSpec {
    fn default() -> Self {
        Self { revision_gap: 2.5, social_gap: 2.5, spread_ratio: 0.85 }
    }
}

/// Tallies planted for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub candidate: UserId,
    pub outcome: bool,
    pub revisions: u64,
    pub pages: u64,
    pub categories: u64,
    pub talk_pages: u64,
    pub page_talks: u64,
    pub out_degree: u64,
    pub in_degree: u64,
    pub out_talks: u64,
    pub in_talks: u64,
    pub admin_out_degree: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// The cases rendered as vote records in the `wiki-RfA` text layout.
    pub rfa_records: String,
    pub truth: Vec<SyntheticTruth>,
}

pub fn activity_start() -> Timestamp {
    utc_date(2004, 1, 1)
}

fn user_name(i: usize) -> UserId {
    UserId::new(&format!("User{i:05}")).expect("non-empty")
}

pub fn page_categories(page: u32) -> BTreeSet<String> {
    [format!("Cat{}", page % 211), format!("Cat{}", 211 + page % 53)].into_iter().collect()
}

fn page_name(page: u32) -> String {
    format!("Page {page}")
}

fn latent(rng: &mut StageRng, base: f64, gap: f64, promoted: bool, spread: f64) -> f64 {
    let shift = gap.ln() / 2.0;
    let (mu, sd) = if promoted {
        (base.ln() + shift, LOG_SD * spread)
    } else {
        (base.ln() - shift, LOG_SD)
    };
    Normal::new(mu, sd).expect("finite").sample(rng)
}

/// Spread `total` items over `k` slots: one each, the rest skewed towards
/// low slot indices.
fn skewed_counts(rng: &mut StageRng, total: u64, k: usize) -> Vec<u64> {
    let mut counts = vec![1u64; k];
    for _ in k as u64..total {
        let u: f64 = rng.random();
        counts[((k as f64) * u * u) as usize] += 1;
    }
    counts
}

fn uniform_ts(rng: &mut StageRng, lo: Timestamp, hi: Timestamp) -> Timestamp {
    rng.random_range(lo..hi.max(lo + 1))
}

/// Build a deterministic corpus. Users `User00000..` up to `n_candidates`
/// are candidates, one election each; the rest form the background.
pub fn generate_synthetic_corpus(
    seed: u64,
    n_users: usize,
    n_candidates: usize,
    signal: SignalSpec,
) -> Result<SyntheticCorpus> {
    if n_users == 0 {
        return Err(Error::InvalidArgument("synthetic corpus needs at least one user".into()));
    }
    if n_candidates > n_users {
        return Err(Error::InvalidArgument(format!(
            "{n_candidates} candidates exceed {n_users} users"
        )));
    }
    for (name, g) in [("revision_gap", signal.revision_gap), ("social_gap", signal.social_gap), ("spread_ratio", signal.spread_ratio)] {
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {g}")));
        }
    }

    let background: Vec<usize> = (n_candidates..n_users).collect();
    let admins: Vec<usize> = background.iter().copied().filter(|i| i % 8 == 0).collect();
    let non_admins: Vec<usize> = background.iter().copied().filter(|i| i % 8 != 0).collect();
    let (window_start, window_end) = super::default_window();
    let start = activity_start();

    let mut corpus = Corpus::default();

    let mut rng = stage_rng(seed, "synthetic-roles", 0);
    for &a in &admins {
        let from = uniform_ts(&mut rng, utc_date(2002, 1, 1), start);
        corpus.roles.push(RoleAssignment { user: user_name(a), role: Role::Admin, effective_from: from });
        if a % 40 == 0 {
            corpus.roles.push(RoleAssignment { user: user_name(a), role: Role::Bureaucrat, effective_from: from });
        }
    }

    let mut rng = stage_rng(seed, "synthetic-background", 0);
    if background.len() > 1 {
        for &u in &background {
            for _ in 0..4 {
                let v = background[rng.random_range(0..background.len())];
                if v == u {
                    continue;
                }
                for _ in 0..rng.random_range(1..=3) {
                    let ts = uniform_ts(&mut rng, start, window_end);
                    corpus.user_talk.push(InteractionEvent::user_talk(user_name(u), user_name(v), ts));
                }
            }
        }
    }

    let mut truth = Vec::with_capacity(n_candidates);
    let mut rfa = String::new();
    for c in 0..n_candidates {
        let mut rng = stage_rng(seed, "synthetic-candidate", c as u64);
        let name = user_name(c);
        let promoted = rng.random_bool(0.5);
        let minutes = (window_end - window_start - 2 * 86_400) / 60;
        let close = window_start + 86_400 + rng.random_range(0..minutes) * 60;
        let active_end = close - QUIET_PERIOD_SECS;

        let mut t = SyntheticTruth {
            candidate: name.clone(),
            outcome: promoted,
            revisions: 0,
            pages: 0,
            categories: 0,
            talk_pages: 0,
            page_talks: 0,
            out_degree: 0,
            in_degree: 0,
            out_talks: 0,
            in_talks: 0,
            admin_out_degree: 0,
        };

        // Revision family.
        let a = latent(&mut rng, BASE_REVISIONS, signal.revision_gap, promoted, signal.spread_ratio);
        let revisions = a.exp().round() as u64;
        if revisions > 0 {
            let frac: f64 = rng.random_range(0.15..0.5);
            let k = ((revisions as f64 * frac).round() as u64).clamp(1, revisions) as usize;
            let pages: Vec<u32> = sample(&mut rng, PAGE_POOL as usize, k).into_iter().map(|p| p as u32).collect();
            let mut cats = BTreeSet::new();
            for (slot, n) in skewed_counts(&mut rng, revisions, k).into_iter().enumerate() {
                let page = pages[slot];
                cats.extend(page_categories(page));
                for _ in 0..n {
                    corpus.revisions.push(RevisionEvent {
                        user: name.clone(),
                        page: page_name(page),
                        categories: page_categories(page),
                        timestamp: uniform_ts(&mut rng, start, active_end),
                    });
                }
            }
            t.revisions = revisions;
            t.pages = k as u64;
            t.categories = cats.len() as u64;
        }
        let talks = (a + 0.25f64.ln() + Normal::new(0.0, 0.4).unwrap().sample(&mut rng)).exp().round() as u64;
        if talks > 0 {
            let frac: f64 = rng.random_range(0.2..0.6);
            let k = ((talks as f64 * frac).round() as u64).clamp(1, talks) as usize;
            let pages: Vec<u32> = sample(&mut rng, PAGE_POOL as usize, k).into_iter().map(|p| p as u32).collect();
            for (slot, n) in skewed_counts(&mut rng, talks, k).into_iter().enumerate() {
                for _ in 0..n {
                    let ts = uniform_ts(&mut rng, start, active_end);
                    corpus.article_talk.push(InteractionEvent::article_talk(
                        name.clone(),
                        format!("Talk:{}", page_name(pages[slot])),
                        ts,
                    ));
                }
            }
            t.talk_pages = k as u64;
            t.page_talks = talks;
        }

        // Social family.
        let s = latent(&mut rng, BASE_CONTACTS, signal.social_gap, promoted, signal.spread_ratio);
        let focus_sd = if promoted { 0.8 * (1.0 + 0.4 * signal.social_gap.ln()) } else { 0.8 };
        let per_target = LogNormal::new(0.0, focus_sd.max(1e-6)).expect("finite");
        let admin_frac: f64 = rng.random_range(0.1..0.25);
        let k_out = s.exp().round() as usize;
        let k_adm = ((k_out as f64 * admin_frac).round() as usize).min(admins.len());
        let k_other = (k_out - k_adm.min(k_out)).min(non_admins.len());
        let targets: Vec<usize> = sample(&mut rng, admins.len(), k_adm)
            .into_iter()
            .map(|i| admins[i])
            .chain(sample(&mut rng, non_admins.len(), k_other).into_iter().map(|i| non_admins[i]))
            .collect();
        for &v in &targets {
            let n = 1 + per_target.sample(&mut rng).floor() as u64;
            for _ in 0..n {
                let ts = uniform_ts(&mut rng, start, active_end);
                corpus.user_talk.push(InteractionEvent::user_talk(name.clone(), user_name(v), ts));
            }
            t.out_talks += n;
        }
        t.out_degree = targets.len() as u64;
        t.admin_out_degree = k_adm as u64;

        let k_in = ((s + Normal::new(0.0, 0.4).unwrap().sample(&mut rng)).exp() * 0.8).round() as usize;
        let k_in = k_in.min(background.len());
        for i in sample(&mut rng, background.len(), k_in) {
            let n = 1 + per_target.sample(&mut rng).floor() as u64;
            for _ in 0..n {
                let ts = uniform_ts(&mut rng, start, active_end);
                corpus.user_talk.push(InteractionEvent::user_talk(user_name(background[i]), name.clone(), ts));
            }
            t.in_talks += n;
        }
        t.in_degree = k_in as u64;

        // The election and its vote records.
        let (support, oppose) = if promoted {
            (rng.random_range(30..80), rng.random_range(0..15))
        } else {
            (rng.random_range(5..30), rng.random_range(10..40))
        };
        let neutral = rng.random_range(0..5);
        let votes = VoteCounts { support, oppose, neutral };
        corpus.cases.push(RfaCase { candidate: name.clone(), close_date: close, outcome: promoted, votes: Some(votes) });
        if promoted {
            corpus.roles.push(RoleAssignment { user: name.clone(), role: Role::Admin, effective_from: close });
        }
        let total = support + oppose + neutral;
        for v in 0..total {
            let vote = if v < support { 1 } else if v < support + oppose { -1 } else { 0 };
            let ts = if v == 0 { close } else { close - rng.random_range(0..6 * 24 * 60) * 60 };
            let voter = if background.is_empty() {
                format!("Voter{v}")
            } else {
                user_name(background[rng.random_range(0..background.len())]).to_string()
            };
            let date = chrono::DateTime::from_timestamp(ts, 0).expect("in range");
            let _ = writeln!(
                rfa,
                "SRC:{voter}\nTGT:{name}\nVOT:{vote}\nRES:{res}\nYEA:{year}\nDAT:{date}\nTXT:\n",
                res = if promoted { 1 } else { -1 },
                year = date.format("%Y"),
                date = date.format("%H:%M, %-d %B %Y"),
            );
        }
        truth.push(t);
    }

    corpus.user_talk.sort_by_key(|e| e.timestamp);
    corpus.article_talk.sort_by_key(|e| e.timestamp);
    corpus.revisions.sort_by_key(|e| e.timestamp);
    corpus.cases.sort_by(|a, b| (a.close_date, &a.candidate).cmp(&(b.close_date, &b.candidate)));

    Ok(SyntheticCorpus { corpus, rfa_records: rfa, truth })
}
