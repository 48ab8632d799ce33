//! `key = value` pipeline configuration with command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rfa_core::eval::EvalConfig;
use rfa_core::features::{ExtractConfig, ModelKind, SocialOptions};
use rfa_core::forest::ForestConfig;
use rfa_core::ingest::store::SourcePaths;
use rfa_core::ingest::{CaseConfig, DedupRule, TableOptions, Timestamp};
use rfa_core::metrics::ClosenessVariant;
use rfa_core::analysis::AnalysisConfig;

use crate::CliError;

/// Every recognized key with its default (`None` = required or unset).
const KEYS: &[(&str, Option<&str>)] = &[
    ("rfa_records", None),
    ("user_talk", None),
    ("article_talk", None),
    ("revisions", None),
    ("roles", None),
    ("output", Some("out")),
    ("seed", None),
    ("window_start", Some("2006-01-01")),
    ("window_end", Some("2007-10-01")),
    ("dedup", Some("latest")),
    ("election_gap_days", Some("14")),
    ("allow_self_talk", Some("false")),
    ("campaign_margin_days", Some("7")),
    ("closeness", Some("reachable")),
    ("user_betweenness", Some("false")),
    ("models", Some("1,2,4")),
    ("trees", Some("500")),
    ("mtry", Some("auto")),
    ("min_leaf", Some("1")),
    ("max_depth", Some("none")),
    ("repetitions", Some("100")),
    ("train_fraction", Some("0.7")),
    ("stratified", Some("false")),
    ("global_prune", Some("false")),
    ("prune_threshold", Some("0.8")),
    ("bins", Some("20")),
    ("support_floor", Some("10")),
    ("min_class_size", Some("10")),
    ("top_k", Some("9")),
];

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub raw: BTreeMap<String, String>,
    pub sources: Option<SourcePaths>,
    pub output: PathBuf,
    pub seed: Option<u64>,
    pub cases: CaseConfig,
    pub tables: TableOptions,
    pub extract: ExtractConfig,
    pub models: Vec<ModelKind>,
    pub forest: ForestConfig,
    pub eval: EvalConfig,
    pub analysis: AnalysisConfig,
    pub top_k: usize,
}

fn bad(key: &str, value: &str, why: &str) -> CliError {
    CliError::Config(format!("{key} = {value:?}: {why}"))
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_settings(text: &str, origin: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config(format!("{origin}:{}: expected key = value", i + 1)));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_override(s: &str) -> Result<(String, String), CliError> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| CliError::Config(format!("--set {s:?}: expected key=value")))
}

fn date(key: &str, v: &str) -> Result<Timestamp, CliError> {
    let d = NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|_| bad(key, v, "expected YYYY-MM-DD"))?;
    Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp())
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| bad(key, v, "not a valid number"))
}

fn flag(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, v, "expected true or false")),
    }
}

fn optional<T: std::str::FromStr>(key: &str, v: &str, none: &str) -> Result<Option<T>, CliError> {
    if v == none {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

impl PipelineConfig {
    pub fn from_settings(settings: impl IntoIterator<Item = (String, String)>) -> Result<Self, CliError> {
        let mut raw: BTreeMap<String, String> =
            KEYS.iter().filter_map(|(k, d)| d.map(|d| (k.to_string(), d.to_string()))).collect();
        for (k, v) in settings {
            if !KEYS.iter().any(|(known, _)| *known == k) {
                return Err(CliError::Config(format!("unknown key {k:?}")));
            }
            raw.insert(k, v);
        }
        let get = |k: &str| raw.get(k).map(String::as_str).unwrap_or_default();

        let source_keys = ["rfa_records", "user_talk", "article_talk", "revisions", "roles"];
        let present: Vec<&str> = source_keys.iter().copied().filter(|k| raw.contains_key(*k)).collect();
        let sources = match present.len() {
            0 => None,
            5 => Some(SourcePaths {
                rfa: get("rfa_records").into(),
                user_talk: get("user_talk").into(),
                article_talk: get("article_talk").into(),
                revisions: get("revisions").into(),
                roles: get("roles").into(),
            }),
            _ => {
                let missing: Vec<&str> = source_keys.iter().copied().filter(|k| !present.contains(k)).collect();
                return Err(CliError::Config(format!("missing input paths: {}", missing.join(", "))));
            }
        };

        let seed = raw.get("seed").map(|v| num::<u64>("seed", v)).transpose()?;
        let window = (date("window_start", get("window_start"))?, date("window_end", get("window_end"))?);
        if window.0 >= window.1 {
            return Err(CliError::Config("window_start must precede window_end".into()));
        }
        let dedup: DedupRule = get("dedup").parse().map_err(|_| bad("dedup", get("dedup"), "expected latest or earliest"))?;
        let gap_days: i64 = num("election_gap_days", get("election_gap_days"))?;
        let cases = CaseConfig { window, dedup, election_gap_secs: gap_days * 86_400 };
        let tables = TableOptions { allow_self_talk: flag("allow_self_talk", get("allow_self_talk"))?, bounds: None };

        let margin: i64 = num("campaign_margin_days", get("campaign_margin_days"))?;
        if margin < 0 {
            return Err(bad("campaign_margin_days", get("campaign_margin_days"), "must not be negative"));
        }
        let closeness = match get("closeness") {
            "reachable" => ClosenessVariant::ReachableScaled,
            "raw" => ClosenessVariant::RawInverse,
            v => return Err(bad("closeness", v, "expected reachable or raw")),
        };
        let extract = ExtractConfig {
            campaign_margin_secs: margin * 86_400,
            social: SocialOptions { user_betweenness: flag("user_betweenness", get("user_betweenness"))?, closeness },
        };

        let mut models = Vec::new();
        for part in get("models").split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let n: u8 = num("models", part)?;
            let k = ModelKind::from_number(n).ok_or_else(|| bad("models", part, "models are 1 to 4"))?;
            if !models.contains(&k) {
                models.push(k);
            }
        }
        if models.is_empty() {
            return Err(bad("models", get("models"), "no model selected"));
        }
        models.sort();

        let forest = ForestConfig {
            n_trees: num("trees", get("trees"))?,
            mtry: optional("mtry", get("mtry"), "auto")?,
            min_leaf: num("min_leaf", get("min_leaf"))?,
            max_depth: optional("max_depth", get("max_depth"), "none")?,
            seed: seed.unwrap_or_default(),
        };
        if forest.n_trees == 0 || forest.min_leaf == 0 || forest.mtry == Some(0) {
            return Err(CliError::Config("trees, min_leaf and mtry must be at least 1".into()));
        }
        let train_frac: f64 = num("train_fraction", get("train_fraction"))?;
        if !(train_frac > 0.0 && train_frac < 1.0) {
            return Err(bad("train_fraction", get("train_fraction"), "must lie in (0, 1)"));
        }
        let eval = EvalConfig {
            repetitions: num("repetitions", get("repetitions"))?,
            train_frac,
            seed: seed.unwrap_or_default(),
            stratified: flag("stratified", get("stratified"))?,
            global_prune: flag("global_prune", get("global_prune"))?,
            prune_threshold: num("prune_threshold", get("prune_threshold"))?,
            forest,
        };
        if eval.repetitions == 0 {
            return Err(bad("repetitions", "0", "must be at least 1"));
        }
        let analysis = AnalysisConfig {
            bins: num("bins", get("bins"))?,
            support_floor: num("support_floor", get("support_floor"))?,
            min_class_size: num("min_class_size", get("min_class_size"))?,
        };
        if analysis.bins == 0 {
            return Err(bad("bins", "0", "must be at least 1"));
        }
        Ok(Self {
            sources,
            output: get("output").into(),
            seed,
            cases,
            tables,
            extract,
            models,
            forest,
            eval,
            analysis,
            top_k: num("top_k", get("top_k"))?,
            raw,
        })
    }

    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut settings = Vec::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new(""));
            for (k, v) in parse_settings(&text, &path.display().to_string())? {
                // Paths in a config file are relative to the file.
                let v = if PATH_KEYS.contains(&k.as_str()) && Path::new(&v).is_relative() {
                    base.join(&v).to_string_lossy().into_owned()
                } else {
                    v
                };
                settings.push((k, v));
            }
        }
        for o in overrides {
            settings.push(parse_override(o)?);
        }
        Self::from_settings(settings)
    }

    /// The seed, which every randomized stage requires.
    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::Config("seed is required (set it in the config or with --set seed=N)".into()))
    }

    pub fn require_sources(&self) -> Result<&SourcePaths, CliError> {
        self.sources.as_ref().ok_or_else(|| {
            CliError::Config("input paths rfa_records, user_talk, article_talk, revisions and roles are required".into())
        })
    }

    /// Raw settings restricted to `keys`, for stage cache keys.
    pub fn subset(&self, keys: &[&str]) -> BTreeMap<String, String> {
        keys.iter().filter_map(|k| self.raw.get(*k).map(|v| (k.to_string(), v.clone()))).collect()
    }
}

const PATH_KEYS: &[&str] = &["rfa_records", "user_talk", "article_talk", "revisions", "roles", "output"];

pub const INGEST_KEYS: &[&str] =
    &["rfa_records", "user_talk", "article_talk", "revisions", "roles", "window_start", "window_end", "dedup", "election_gap_days", "allow_self_talk"];
pub const FEATURE_KEYS: &[&str] = &["campaign_margin_days", "closeness", "user_betweenness"];
pub const EVAL_KEYS: &[&str] = &[
    "seed", "models", "trees", "mtry", "min_leaf", "max_depth", "repetitions", "train_fraction", "stratified",
    "global_prune", "prune_threshold",
];
pub const ANALYSIS_KEYS: &[&str] = &["seed", "trees", "mtry", "min_leaf", "max_depth", "bins", "support_floor", "min_class_size", "top_k"];
