//! Delimited event tables.
//!
//! | schema        | columns                                 |
//! |---------------|-----------------------------------------|
//! | user talk     | `source,target,timestamp`               |
//! | article talk  | `user,page,timestamp`                   |
//! | revisions     | `user,page,timestamp,categories`        |
//! | roles         | `user,role,effective_from`              |
//! | cases         | `candidate,close_date,outcome,support,oppose,neutral` |
//!
//! Files carry a header row. The delimiter (comma or tab) is detected from
//! the header; timestamps are integer UTC epoch seconds and revision
//! categories are `;`-joined.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    push_issue, InteractionEvent, InteractionKind, Issue, RevisionEvent, RfaCase, Role,
    RoleAssignment, Timestamp, UserId, VoteCounts,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventSchema {
    UserTalk,
    ArticleTalk,
    Revision,
}

impl EventSchema {
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            EventSchema::UserTalk => &["source", "target", "timestamp"],
            EventSchema::ArticleTalk => &["user", "page", "timestamp"],
            EventSchema::Revision => &["user", "page", "timestamp", "categories"],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableOptions {
    /// Keep user-talk messages a user posts on their own page.
    pub allow_self_talk: bool,
    /// Half-open `[start, end)` corpus bounds; rows outside are dropped.
    pub bounds: Option<(Timestamp, Timestamp)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableReport {
    pub rows: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub self_loops_dropped: u64,
    pub out_of_bounds: u64,
    pub issues: Vec<Issue>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventTable {
    Interactions(Vec<InteractionEvent>),
    Revisions(Vec<RevisionEvent>),
}

fn reader<'a>(text: &'a str, expected: &[&str]) -> Result<csv::Reader<&'a [u8]>> {
    let header = text.lines().next().unwrap_or_default();
    let delimiter = if header.contains('\t') { b'\t' } else { b',' };
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    if found != expected {
        return Err(Error::BadHeader {
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    Ok(rdr)
}

/// Walk the data rows, handing each to `row`. A row closure returning
/// `Err(msg)` rejects the row; `Ok(None)` drops it silently after the
/// closure tallied the reason itself.
fn scan<T>(
    text: &str,
    expected: &[&str],
    report: &mut TableReport,
    mut row: impl FnMut(&csv::StringRecord, &mut TableReport) -> std::result::Result<Option<T>, String>,
) -> Result<Vec<T>> {
    let mut rdr = reader(text, expected)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        report.rows += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                report.rejected += 1;
                push_issue(&mut report.issues, line, e.to_string());
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != expected.len() {
            report.rejected += 1;
            push_issue(
                &mut report.issues,
                line,
                format!("expected {} fields, found {}", expected.len(), rec.len()),
            );
            continue;
        }
        match row(&rec, report) {
            Ok(Some(v)) => {
                report.accepted += 1;
                out.push(v);
            }
            Ok(None) => {}
            Err(msg) => {
                report.rejected += 1;
                push_issue(&mut report.issues, line, msg);
            }
        }
    }
    Ok(out)
}

fn field_user(rec: &csv::StringRecord, i: usize, name: &str) -> std::result::Result<UserId, String> {
    UserId::new(&rec[i]).map_err(|_| format!("empty {name}"))
}

fn field_ts(rec: &csv::StringRecord, i: usize) -> std::result::Result<Timestamp, String> {
    rec[i]
        .parse::<Timestamp>()
        .map_err(|_| format!("non-numeric timestamp {:?}", &rec[i]))
}

fn in_bounds(ts: Timestamp, opts: &TableOptions, report: &mut TableReport) -> bool {
    match opts.bounds {
        Some((lo, hi)) if ts < lo || ts >= hi => {
            report.out_of_bounds += 1;
            false
        }
        _ => true,
    }
}

/// Parse one event table; output is stably sorted by timestamp.
pub fn parse_event_table(
    text: &str,
    schema: EventSchema,
    opts: &TableOptions,
) -> Result<(EventTable, TableReport)> {
    let mut report = TableReport::default();
    let table = match schema {
        EventSchema::UserTalk => {
            let mut ev = scan(text, schema.columns(), &mut report, |rec, rep| {
                let source = field_user(rec, 0, "source")?;
                let target = field_user(rec, 1, "target")?;
                let ts = field_ts(rec, 2)?;
                if source == target && !opts.allow_self_talk {
                    rep.self_loops_dropped += 1;
                    return Ok(None);
                }
                Ok(in_bounds(ts, opts, rep).then(|| InteractionEvent::user_talk(source, target, ts)))
            })?;
            ev.sort_by_key(|e| e.timestamp);
            EventTable::Interactions(ev)
        }
        EventSchema::ArticleTalk => {
            let mut ev = scan(text, schema.columns(), &mut report, |rec, rep| {
                let source = field_user(rec, 0, "user")?;
                if rec[1].is_empty() {
                    return Err("empty page".into());
                }
                let ts = field_ts(rec, 2)?;
                Ok(in_bounds(ts, opts, rep).then(|| InteractionEvent::article_talk(source, &rec[1], ts)))
            })?;
            ev.sort_by_key(|e| e.timestamp);
            EventTable::Interactions(ev)
        }
        EventSchema::Revision => {
            let mut ev = scan(text, schema.columns(), &mut report, |rec, rep| {
                let user = field_user(rec, 0, "user")?;
                if rec[1].is_empty() {
                    return Err("empty page".into());
                }
                let ts = field_ts(rec, 2)?;
                let categories: BTreeSet<String> = rec[3]
                    .split(';')
                    .map(str::trim)
                    .filter(|c| !c.is_empty())
                    .map(String::from)
                    .collect();
                Ok(in_bounds(ts, opts, rep).then(|| RevisionEvent {
                    user,
                    page: rec[1].to_string(),
                    categories,
                    timestamp: ts,
                }))
            })?;
            ev.sort_by_key(|e| e.timestamp);
            EventTable::Revisions(ev)
        }
    };
    Ok((table, report))
}

pub fn parse_user_talk(text: &str, opts: &TableOptions) -> Result<(Vec<InteractionEvent>, TableReport)> {
    match parse_event_table(text, EventSchema::UserTalk, opts)? {
        (EventTable::Interactions(ev), r) => Ok((ev, r)),
        _ => unreachable!(),
    }
}

pub fn parse_article_talk(text: &str, opts: &TableOptions) -> Result<(Vec<InteractionEvent>, TableReport)> {
    match parse_event_table(text, EventSchema::ArticleTalk, opts)? {
        (EventTable::Interactions(ev), r) => Ok((ev, r)),
        _ => unreachable!(),
    }
}

pub fn parse_revisions(text: &str, opts: &TableOptions) -> Result<(Vec<RevisionEvent>, TableReport)> {
    match parse_event_table(text, EventSchema::Revision, opts)? {
        (EventTable::Revisions(ev), r) => Ok((ev, r)),
        _ => unreachable!(),
    }
}

pub fn parse_roles(text: &str) -> Result<(Vec<RoleAssignment>, TableReport)> {
    let mut report = TableReport::default();
    let roles = scan(text, &["user", "role", "effective_from"], &mut report, |rec, _| {
        let user = field_user(rec, 0, "user")?;
        let role: Role = rec[1].parse().map_err(|e: Error| e.to_string())?;
        let effective_from = field_ts(rec, 2)?;
        Ok(Some(RoleAssignment { user, role, effective_from }))
    })?;
    Ok((roles, report))
}

pub fn read_cases(text: &str) -> Result<(Vec<RfaCase>, TableReport)> {
    let mut report = TableReport::default();
    let cols = ["candidate", "close_date", "outcome", "support", "oppose", "neutral"];
    let cases = scan(text, &cols, &mut report, |rec, _| {
        let candidate = field_user(rec, 0, "candidate")?;
        let close_date = field_ts(rec, 1)?;
        let outcome = match &rec[2] {
            "1" => true,
            "0" => false,
            o => return Err(format!("outcome must be 0 or 1, found {o:?}")),
        };
        let counts: Vec<Option<u32>> = (3..6).map(|i| rec[i].parse().ok()).collect();
        let votes = match counts[..] {
            [Some(support), Some(oppose), Some(neutral)] => Some(VoteCounts { support, oppose, neutral }),
            _ => None,
        };
        Ok(Some(RfaCase { candidate, close_date, outcome, votes }))
    })?;
    Ok((cases, report))
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// Write interactions in the table layout matching their kind. Mixed kinds
/// are rejected.
pub fn write_interactions<W: Write>(events: &[InteractionEvent], schema: EventSchema, w: W) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(schema.columns())?;
    for e in events {
        let ts = e.timestamp.to_string();
        match (&e.kind, schema) {
            (InteractionKind::UserTalk { target }, EventSchema::UserTalk) => {
                wr.write_record([e.source.as_str(), target.as_str(), &ts])?
            }
            (InteractionKind::ArticleTalk { page }, EventSchema::ArticleTalk) => {
                wr.write_record([e.source.as_str(), page.as_str(), &ts])?
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "event kind does not match table schema {schema:?}"
                )))
            }
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn write_revisions<W: Write>(events: &[RevisionEvent], w: W) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(EventSchema::Revision.columns())?;
    for e in events {
        let cats: Vec<&str> = e.categories.iter().map(String::as_str).collect();
        wr.write_record([e.user.as_str(), &e.page, &e.timestamp.to_string(), &cats.join(";")])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_roles<W: Write>(roles: &[RoleAssignment], w: W) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["user", "role", "effective_from"])?;
    for r in roles {
        wr.write_record([r.user.as_str(), r.role.as_str(), &r.effective_from.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_cases<W: Write>(cases: &[RfaCase], w: W) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["candidate", "close_date", "outcome", "support", "oppose", "neutral"])?;
    for c in cases {
        let (s, o, n) = c.votes.map_or((String::new(), String::new(), String::new()), |v| {
            (v.support.to_string(), v.oppose.to_string(), v.neutral.to_string())
        });
        wr.write_record([
            c.candidate.as_str(),
            &c.close_date.to_string(),
            if c.outcome { "1" } else { "0" },
            &s,
            &o,
            &n,
        ])?;
    }
    wr.flush()?;
    Ok(())
}
