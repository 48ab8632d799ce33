//! Vote records in the Stanford `wiki-RfA` layout and election-case derivation.
//!
//! Records are blank-line separated blocks of `KEY:value` lines:
//!
//! ```text
//! SRC:Voter
//! TGT:Candidate
//! VOT:1
//! RES:1
//! YEA:2006
//! DAT:23:13, 19 April 2006
//! TXT:'''Support''' as co-nom.
//! ```

use std::collections::HashMap;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{push_issue, utc_month, Issue, RfaCase, Timestamp, UserId, VoteCounts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawVoteRecord {
    /// First line of the block (1-based).
    pub line: u64,
    pub source: UserId,
    pub target: UserId,
    pub vote: i8,
    pub result: i8,
    pub year: Option<i32>,
    pub date: Option<Timestamp>,
    pub raw_date: Option<String>,
    pub comment: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RfaParseReport {
    pub total_lines: u64,
    pub blank_lines: u64,
    pub consumed_lines: u64,
    pub rejected_lines: u64,
    pub blocks: u64,
    pub records: u64,
    pub rejected_records: u64,
    pub unknown_key_lines: u64,
    pub unparseable_dates: u64,
    pub issues: Vec<Issue>,
}

#[derive(Debug, Clone, Default)]
pub struct RfaParse {
    pub records: Vec<RawVoteRecord>,
    pub report: RfaParseReport,
}

const DATE_FORMATS: &[&str] = &[
    "%H:%M, %d %B %Y",
    "%H:%M, %B %d, %Y",
    "%H:%M %d %B %Y",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%SZ",
    "%Y-%m-%dT%H:%M:%S",
];

const DAY_FORMATS: &[&str] = &["%d %B %Y", "%B %d, %Y", "%Y-%m-%d"];

fn parse_date(raw: &str) -> Option<Timestamp> {
    let s = raw.trim().trim_end_matches("(UTC)").trim();
    if s.is_empty() {
        return None;
    }
    for f in DATE_FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, f) {
            return Some(dt.and_utc().timestamp());
        }
    }
    for f in DAY_FORMATS {
        if let Ok(d) = chrono::NaiveDate::parse_from_str(s, f) {
            return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp());
        }
    }
    None
}

#[derive(Default)]
struct Block {
    first_line: u64,
    lines: u64,
    fields: HashMap<&'static str, (u64, String)>,
}

const KEYS: &[&str] = &["SRC", "TGT", "VOT", "RES", "YEA", "DAT", "TXT"];

/// Parse vote records. Never fails: every line is either consumed into a
/// record or tallied as rejected, so
/// `consumed_lines + rejected_lines + blank_lines == total_lines`.
pub fn parse_rfa_records(text: &str) -> RfaParse {
    let mut out = RfaParse::default();
    let mut block: Option<Block> = None;

    for (i, line) in text.lines().enumerate() {
        let lineno = i as u64 + 1;
        out.report.total_lines += 1;
        if line.trim().is_empty() {
            out.report.blank_lines += 1;
            if let Some(b) = block.take() {
                finish_block(b, &mut out);
            }
            continue;
        }
        let b = block.get_or_insert_with(|| Block { first_line: lineno, ..Block::default() });
        let Some((key, value)) = line.split_once(':') else {
            out.report.rejected_lines += 1;
            out.report.unknown_key_lines += 1;
            push_issue(&mut out.report.issues, lineno, "line without KEY: prefix skipped");
            continue;
        };
        let Some(&key) = KEYS.iter().find(|k| **k == key.trim()) else {
            out.report.rejected_lines += 1;
            out.report.unknown_key_lines += 1;
            push_issue(&mut out.report.issues, lineno, format!("unknown key {:?} skipped", key.trim()));
            continue;
        };
        if b.fields.contains_key(key) {
            out.report.rejected_lines += 1;
            push_issue(&mut out.report.issues, lineno, format!("duplicate key {key} skipped"));
            continue;
        }
        b.lines += 1;
        b.fields.insert(key, (lineno, value.to_string()));
    }
    if let Some(b) = block.take() {
        finish_block(b, &mut out);
    }
    out
}

fn finish_block(mut b: Block, out: &mut RfaParse) {
    out.report.blocks += 1;
    let (first_line, lines) = (b.first_line, b.lines);
    let reject = move |out: &mut RfaParse, msg: String| {
        out.report.rejected_records += 1;
        out.report.rejected_lines += lines;
        push_issue(&mut out.report.issues, first_line, msg);
    };

    let user = |b: &Block, k: &str| b.fields.get(k).and_then(|(_, v)| UserId::new(v).ok());
    let (Some(source), Some(target)) = (user(&b, "SRC"), user(&b, "TGT")) else {
        let missing: Vec<&str> = ["SRC", "TGT"]
            .into_iter()
            .filter(|k| user(&b, k).is_none())
            .collect();
        reject(out, format!("record missing {}", missing.join(" and ")));
        return;
    };
    let int = |b: &Block, k: &str| b.fields.get(k).map(|(_, v)| v.trim().parse::<i32>());
    let vote = match int(&b, "VOT") {
        Some(Ok(v @ -1..=1)) => v as i8,
        other => {
            reject(out, format!("invalid or missing VOT ({other:?})"));
            return;
        }
    };
    let result = match int(&b, "RES") {
        Some(Ok(r @ (-1 | 1))) => r as i8,
        other => {
            reject(out, format!("invalid or missing RES ({other:?})"));
            return;
        }
    };
    let year = int(&b, "YEA").and_then(|r| r.ok());
    let raw_date = b.fields.remove("DAT").map(|(_, v)| v.trim().to_string());
    let date = raw_date.as_deref().and_then(parse_date);
    if date.is_none() {
        out.report.unparseable_dates += 1;
    }
    let comment = b.fields.remove("TXT").map(|(_, v)| v).unwrap_or_default();

    out.report.records += 1;
    out.report.consumed_lines += b.lines;
    out.records.push(RawVoteRecord {
        line: b.first_line,
        source,
        target,
        vote,
        result,
        year,
        date,
        raw_date,
        comment,
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DedupRule {
    /// Keep the election closing last within the calendar month.
    #[default]
    Latest,
    Earliest,
}

impl std::str::FromStr for DedupRule {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s.trim() {
            "latest" => Ok(Self::Latest),
            "earliest" => Ok(Self::Earliest),
            other => Err(crate::Error::InvalidArgument(format!("unknown dedup rule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseConfig {
    /// Half-open window `[start, end)` on the close date.
    pub window: (Timestamp, Timestamp),
    pub dedup: DedupRule,
    /// Consecutive records of one candidate further apart than this belong
    /// to different elections.
    pub election_gap_secs: i64,
}

impl Default for CaseConfig {
    fn default() -> Self {
        Self {
            window: super::default_window(),
            dedup: DedupRule::Latest,
            election_gap_secs: 14 * 86_400,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseReport {
    pub elections: u64,
    pub inconsistent: u64,
    pub undated: u64,
    pub outside_window: u64,
    pub deduplicated: u64,
    pub kept: u64,
    pub undated_records: u64,
}

#[derive(Debug, Clone, Default)]
pub struct CaseDerivation {
    /// Cases ordered by `(close_date, candidate)`.
    pub cases: Vec<RfaCase>,
    /// Indices into the input records making up each case.
    pub members: Vec<Vec<usize>>,
    pub report: CaseReport,
}

struct Election {
    members: Vec<usize>,
    last_date: Option<Timestamp>,
}

/// Group vote records into elections and reduce them to cases.
///
/// An election is a run of consecutive records with the same target, split
/// wherever two dated records are more than `election_gap_secs` apart. The
/// close date is the latest vote date of the election; undated records count
/// towards the vote tally only. Elections whose records disagree on the
/// result are excluded. Window filtering happens before the monthly
/// deduplication.
pub fn derive_rfa_cases(records: &[RawVoteRecord], config: &CaseConfig) -> CaseDerivation {
    let mut elections: Vec<Election> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let continues = elections.last().is_some_and(|e| {
            let prev = &records[*e.members.last().unwrap()];
            prev.target == r.target
                && match (e.last_date, r.date) {
                    (Some(a), Some(b)) => (b - a).abs() <= config.election_gap_secs,
                    _ => true,
                }
        });
        if !continues {
            elections.push(Election { members: Vec::new(), last_date: None });
        }
        let e = elections.last_mut().unwrap();
        e.members.push(i);
        if r.date.is_some() {
            e.last_date = r.date;
        }
    }

    let mut report = CaseReport { elections: elections.len() as u64, ..CaseReport::default() };
    let mut candidates: Vec<(RfaCase, Vec<usize>)> = Vec::new();
    for e in elections {
        let first = &records[e.members[0]];
        if e.members.iter().any(|&i| records[i].result != first.result) {
            report.inconsistent += 1;
            continue;
        }
        report.undated_records += e.members.iter().filter(|&&i| records[i].date.is_none()).count() as u64;
        let Some(close) = e.members.iter().filter_map(|&i| records[i].date).max() else {
            report.undated += 1;
            continue;
        };
        if close < config.window.0 || close >= config.window.1 {
            report.outside_window += 1;
            continue;
        }
        let mut votes = VoteCounts::default();
        for &i in &e.members {
            match records[i].vote {
                1 => votes.support += 1,
                -1 => votes.oppose += 1,
                _ => votes.neutral += 1,
            }
        }
        let case = RfaCase {
            candidate: first.target.clone(),
            close_date: close,
            outcome: first.result == 1,
            votes: Some(votes),
        };
        candidates.push((case, e.members));
    }

    // Monthly dedup. Iteration is in record order, so for equal close dates
    // "latest" keeps the election appearing later in the input.
    let mut slot: HashMap<(UserId, (i32, u32)), usize> = HashMap::new();
    let mut keep = vec![true; candidates.len()];
    for (i, (case, _)) in candidates.iter().enumerate() {
        let key = (case.candidate.clone(), utc_month(case.close_date));
        match slot.get(&key).copied() {
            None => {
                slot.insert(key, i);
            }
            Some(j) => {
                let prev = candidates[j].0.close_date;
                let replace = match config.dedup {
                    DedupRule::Latest => case.close_date >= prev,
                    DedupRule::Earliest => case.close_date < prev,
                };
                report.deduplicated += 1;
                if replace {
                    keep[j] = false;
                    slot.insert(key, i);
                } else {
                    keep[i] = false;
                }
            }
        }
    }

    let mut kept: Vec<(RfaCase, Vec<usize>)> = candidates
        .into_iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then_some(c))
        .collect();
    kept.sort_by(|a, b| {
        (a.0.close_date, &a.0.candidate, a.1[0]).cmp(&(b.0.close_date, &b.0.candidate, b.1[0]))
    });
    report.kept = kept.len() as u64;
    let (cases, members) = kept.into_iter().unzip();
    CaseDerivation { cases, members, report }
}
