//! Dataset ingestion: vote records, event tables, roles, and election cases.

mod rfa;
pub mod store;
pub mod synthetic;
mod tables;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use chrono::{Datelike, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use rfa::{
    derive_rfa_cases, parse_rfa_records, CaseConfig, CaseDerivation, CaseReport, DedupRule,
    RawVoteRecord, RfaParse, RfaParseReport,
};
pub use synthetic::{generate_synthetic_corpus, SignalSpec, SyntheticCorpus, SyntheticTruth};
pub use tables::{
    parse_article_talk, parse_event_table, parse_revisions, parse_roles, parse_user_talk,
    write_cases, write_interactions, write_revisions, write_roles, read_cases, EventSchema,
    EventTable, TableOptions, TableReport,
};

/// UTC epoch seconds.
pub type Timestamp = i64;

pub fn utc_date(year: i32, month: u32, day: u32) -> Timestamp {
    Utc.with_ymd_and_hms(year, month, day, 0, 0, 0)
        .single()
        .expect("valid calendar date")
        .timestamp()
}

/// (year, month) of an instant, evaluated in UTC.
pub fn utc_month(ts: Timestamp) -> (i32, u32) {
    let d = chrono::DateTime::from_timestamp(ts, 0)
        .map(|d| d.date_naive())
        .unwrap_or(NaiveDate::MIN);
    (d.year(), d.month())
}

/// Default analysis window: [2006-01-01, 2007-10-01).
pub fn default_window() -> (Timestamp, Timestamp) {
    (utc_date(2006, 1, 1), utc_date(2007, 10, 1))
}

/// A normalized user name.
///
/// Normalization follows MediaWiki title rules: surrounding whitespace is
/// trimmed, underscores become spaces, runs of whitespace collapse, and the
/// first character is upper-cased. The rest of the name stays case-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct UserId(String);

impl UserId {
    pub fn new(raw: &str) -> Result<Self> {
        let spaced = raw.replace('_', " ");
        let mut words = spaced.split_whitespace();
        let mut out = String::with_capacity(raw.len());
        if let Some(first) = words.next() {
            let mut chars = first.chars();
            if let Some(c) = chars.next() {
                out.extend(c.to_uppercase());
                out.push_str(chars.as_str());
            }
            for w in words {
                out.push(' ');
                out.push_str(w);
            }
        }
        if out.is_empty() {
            return Err(Error::EmptyUserId);
        }
        Ok(Self(out))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for UserId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Self::new(&s)
    }
}

impl From<UserId> for String {
    fn from(u: UserId) -> String {
        u.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InteractionKind {
    /// A message posted on another user's talk page.
    UserTalk { target: UserId },
    /// A message posted on an article's discussion page.
    ArticleTalk { page: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub source: UserId,
    pub timestamp: Timestamp,
    pub kind: InteractionKind,
}

impl InteractionEvent {
    pub fn user_talk(source: UserId, target: UserId, timestamp: Timestamp) -> Self {
        Self { source, timestamp, kind: InteractionKind::UserTalk { target } }
    }

    pub fn article_talk(source: UserId, page: impl Into<String>, timestamp: Timestamp) -> Self {
        Self { source, timestamp, kind: InteractionKind::ArticleTalk { page: page.into() } }
    }

    pub fn target(&self) -> Option<&UserId> {
        match &self.kind {
            InteractionKind::UserTalk { target } => Some(target),
            InteractionKind::ArticleTalk { .. } => None,
        }
    }

    pub fn page(&self) -> Option<&str> {
        match &self.kind {
            InteractionKind::UserTalk { .. } => None,
            InteractionKind::ArticleTalk { page } => Some(page),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RevisionEvent {
    pub user: UserId,
    pub page: String,
    pub categories: BTreeSet<String>,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Admin,
    Bureaucrat,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Admin => "admin",
            Role::Bureaucrat => "bureaucrat",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "admin" | "sysop" => Ok(Role::Admin),
            "bureaucrat" => Ok(Role::Bureaucrat),
            other => Err(Error::InvalidArgument(format!("unknown role {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub user: UserId,
    pub role: Role,
    pub effective_from: Timestamp,
}

/// Role lookup. A user holds a role at instant `t` iff one of its
/// assignments has `effective_from < t`; roles never expire.
#[derive(Debug, Clone, Default)]
pub struct RoleBook {
    since: HashMap<(UserId, Role), Timestamp>,
}

impl RoleBook {
    pub fn new(assignments: &[RoleAssignment]) -> Self {
        let mut since: HashMap<(UserId, Role), Timestamp> = HashMap::new();
        for a in assignments {
            since
                .entry((a.user.clone(), a.role))
                .and_modify(|t| *t = (*t).min(a.effective_from))
                .or_insert(a.effective_from);
        }
        Self { since }
    }

    pub fn holds(&self, user: &UserId, role: Role, at: Timestamp) -> bool {
        self.since
            .get(&(user.clone(), role))
            .is_some_and(|&from| from < at)
    }

    pub fn holders(&self, role: Role, at: Timestamp) -> impl Iterator<Item = &UserId> {
        self.since
            .iter()
            .filter(move |((_, r), &from)| *r == role && from < at)
            .map(|((u, _), _)| u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct VoteCounts {
    pub support: u32,
    pub oppose: u32,
    pub neutral: u32,
}

/// One candidacy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RfaCase {
    pub candidate: UserId,
    pub close_date: Timestamp,
    /// `true` when the candidate was promoted.
    pub outcome: bool,
    pub votes: Option<VoteCounts>,
}

/// All canonical inputs of the pipeline.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub user_talk: Vec<InteractionEvent>,
    pub article_talk: Vec<InteractionEvent>,
    pub revisions: Vec<RevisionEvent>,
    pub roles: Vec<RoleAssignment>,
    pub cases: Vec<RfaCase>,
}

/// Location and description of a rejected line or row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub line: u64,
    pub message: String,
}

/// Cap on the number of issues kept verbatim in a report; the counters stay exact.
pub const MAX_REPORTED_ISSUES: usize = 200;

pub(crate) fn push_issue(issues: &mut Vec<Issue>, line: u64, message: impl Into<String>) {
    if issues.len() < MAX_REPORTED_ISSUES {
        issues.push(Issue { line, message: message.into() });
    }
}
