//! Loading raw sources and the canonical on-disk event store.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    derive_rfa_cases, parse_article_talk, parse_revisions, parse_rfa_records, parse_roles, parse_user_talk,
    read_cases, write_cases, write_interactions, write_revisions, write_roles, CaseConfig, CaseReport, Corpus,
    EventSchema, RfaParseReport, TableOptions, TableReport,
};
use crate::error::{Error, Result};

pub const USER_TALK_FILE: &str = "user_talk.csv";
pub const ARTICLE_TALK_FILE: &str = "article_talk.csv";
pub const REVISIONS_FILE: &str = "revisions.csv";
pub const ROLES_FILE: &str = "roles.csv";
pub const CASES_FILE: &str = "cases.csv";

pub const STORE_FILES: [&str; 5] = [USER_TALK_FILE, ARTICLE_TALK_FILE, REVISIONS_FILE, ROLES_FILE, CASES_FILE];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcePaths {
    /// Vote records in `KEY:value` block format.
    pub rfa: PathBuf,
    pub user_talk: PathBuf,
    pub article_talk: PathBuf,
    pub revisions: PathBuf,
    pub roles: PathBuf,
}

impl SourcePaths {
    /// The default file names inside one directory.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            rfa: dir.join("wiki-RfA.txt"),
            user_talk: dir.join(USER_TALK_FILE),
            article_talk: dir.join(ARTICLE_TALK_FILE),
            revisions: dir.join(REVISIONS_FILE),
            roles: dir.join(ROLES_FILE),
        }
    }

    pub fn all(&self) -> [&Path; 5] {
        [&self.rfa, &self.user_talk, &self.article_talk, &self.revisions, &self.roles]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rfa: RfaParseReport,
    pub cases: CaseReport,
    pub user_talk: TableReport,
    pub article_talk: TableReport,
    pub revisions: TableReport,
    pub roles: TableReport,
    pub promoted: usize,
    pub success_rate: f64,
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::in_file(path, e))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::in_file(path, e))
}

/// Parse every source file and derive the election cases.
pub fn ingest_sources(paths: &SourcePaths, cases: &CaseConfig, tables: &TableOptions) -> Result<(Corpus, IngestReport)> {
    let texts: Vec<String> = paths.all().iter().map(|p| read_text(p)).collect::<Result<_>>()?;
    let parsed = parse_rfa_records(&texts[0]);
    let derived = derive_rfa_cases(&parsed.records, cases);
    let (user_talk, ut) = with_path(&paths.user_talk, parse_user_talk(&texts[1], tables))?;
    let (article_talk, at) = with_path(&paths.article_talk, parse_article_talk(&texts[2], tables))?;
    let (revisions, rv) = with_path(&paths.revisions, parse_revisions(&texts[3], tables))?;
    let (roles, ro) = with_path(&paths.roles, parse_roles(&texts[4]))?;
    let promoted = derived.cases.iter().filter(|c| c.outcome).count();
    let n = derived.cases.len();
    let report = IngestReport {
        rfa: parsed.report,
        cases: derived.report,
        user_talk: ut,
        article_talk: at,
        revisions: rv,
        roles: ro,
        promoted,
        success_rate: if n == 0 { 0.0 } else { promoted as f64 / n as f64 },
    };
    let corpus = Corpus { user_talk, article_talk, revisions, roles, cases: derived.cases };
    Ok((corpus, report))
}

fn create(path: PathBuf) -> Result<std::io::BufWriter<fs::File>> {
    fs::File::create(&path).map(std::io::BufWriter::new).map_err(|e| Error::in_file(&path, e))
}

/// Write the five canonical tables into `dir`.
pub fn write_store(dir: &Path, corpus: &Corpus) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::in_file(dir, e))?;
    write_interactions(&corpus.user_talk, EventSchema::UserTalk, create(dir.join(USER_TALK_FILE))?)?;
    write_interactions(&corpus.article_talk, EventSchema::ArticleTalk, create(dir.join(ARTICLE_TALK_FILE))?)?;
    write_revisions(&corpus.revisions, create(dir.join(REVISIONS_FILE))?)?;
    write_roles(&corpus.roles, create(dir.join(ROLES_FILE))?)?;
    write_cases(&corpus.cases, create(dir.join(CASES_FILE))?)?;
    Ok(())
}

/// Read a store written by [`write_store`]. Rows that fail to parse are
/// errors here, since the store is produced by this crate.
pub fn read_store(dir: &Path) -> Result<Corpus> {
    let opts = TableOptions { allow_self_talk: true, bounds: None };
    let load = |name: &str| {
        let path = dir.join(name);
        read_text(&path).map(|t| (path, t))
    };
    fn strict<T>(path: &Path, r: Result<(T, TableReport)>) -> Result<T> {
        let (v, rep) = with_path(path, r)?;
        if rep.rejected > 0 {
            return Err(Error::in_file(path, Error::InvalidArgument(format!("{} malformed rows", rep.rejected))));
        }
        Ok(v)
    }
    let (p, t) = load(USER_TALK_FILE)?;
    let user_talk = strict(&p, parse_user_talk(&t, &opts))?;
    let (p, t) = load(ARTICLE_TALK_FILE)?;
    let article_talk = strict(&p, parse_article_talk(&t, &opts))?;
    let (p, t) = load(REVISIONS_FILE)?;
    let revisions = strict(&p, parse_revisions(&t, &opts))?;
    let (p, t) = load(ROLES_FILE)?;
    let roles = strict(&p, parse_roles(&t))?;
    let (p, t) = load(CASES_FILE)?;
    let cases = strict(&p, read_cases(&t))?;
    Ok(Corpus { user_talk, article_talk, revisions, roles, cases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic_corpus, SignalSpec};

    #[test]
    fn store_round_trip() {
        let s = generate_synthetic_corpus(3, 60, 10, SignalSpec::default()).unwrap();
        let dir = std::env::temp_dir().join(format!("rfa-store-{}", std::process::id()));
        write_store(&dir, &s.corpus).unwrap();
        let back = read_store(&dir).unwrap();
        assert_eq!(back.user_talk, s.corpus.user_talk);
        assert_eq!(back.article_talk, s.corpus.article_talk);
        assert_eq!(back.revisions, s.corpus.revisions);
        assert_eq!(back.cases, s.corpus.cases);
        assert_eq!(back.roles.len(), s.corpus.roles.len());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn missing_file_names_the_path() {
        let paths = SourcePaths::in_dir(Path::new("/nonexistent/rfa-input"));
        let err = ingest_sources(&paths, &CaseConfig::default(), &TableOptions::default()).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/rfa-input/wiki-RfA.txt"));
        assert!(!err.is_degenerate());
    }
}
