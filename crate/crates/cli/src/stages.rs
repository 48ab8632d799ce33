//! Pipeline stages. Each stage reads its inputs from disk, writes its
//! artifacts under the output directory, and is skipped when its cache key
//! is unchanged.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use rfa_core::analysis::{analyze_attributes, dispersion_effect};
use rfa_core::eval::{compare_models, repeated_holdout, EvaluationReport};
use rfa_core::features::{extract_profiles, FeatureSet, ProfileTable};
use rfa_core::forest::{self, importance, ForestConfig, Importance};
use rfa_core::ingest::store::{ingest_sources, read_store, write_store, STORE_FILES};
use rfa_core::seed::derive_seed;

use crate::cache;
use crate::config::{PipelineConfig, ANALYSIS_KEYS, EVAL_KEYS, FEATURE_KEYS, INGEST_KEYS};
use crate::CliError;

pub const STORE_DIR: &str = "store";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const FEATURES: &str = "features.csv";
pub const FEATURES_INDEX: &str = "features_index.csv";
pub const EVAL_DIR: &str = "evaluation";
pub const ANALYSIS_DIR: &str = "analysis";
pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.json";

pub struct Stage<'a> {
    pub cfg: &'a PipelineConfig,
    pub out: PathBuf,
}

fn out_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| out_err(dir, e))?;
    }
    fs::File::create(path).map(BufWriter::new).map_err(|e| out_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| out_err(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| out_err(path, e))?;
    Ok(path.to_path_buf())
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> rfa_core::Result<()>) -> Result<PathBuf, CliError> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| out_err(path, e))?;
    Ok(path.to_path_buf())
}

fn require(path: &Path, stage: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{} is missing; run `rfa {stage}` first", path.display())))
    }
}

/// File names safe for any attribute name.
fn file_stem(attribute: &str) -> String {
    attribute.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}

impl<'a> Stage<'a> {
    pub fn new(cfg: &'a PipelineConfig) -> Self {
        Self { cfg, out: cfg.output.clone() }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn cached(&self, name: &str, keys: &[&str], inputs: &[PathBuf]) -> Result<Option<String>, CliError> {
        let key = cache::stage_key(name, &self.cfg.subset(keys), inputs)?;
        if cache::is_fresh(&self.out, name, &key) {
            eprintln!("{name}: up to date");
            return Ok(None);
        }
        Ok(Some(key))
    }

    pub fn ingest(&self) -> Result<(), CliError> {
        let sources = self.cfg.require_sources()?;
        for p in sources.all() {
            if !p.is_file() {
                return Err(CliError::Input(format!("{}: no such file", p.display())));
            }
        }
        let inputs: Vec<PathBuf> = sources.all().iter().map(|p| p.to_path_buf()).collect();
        let Some(key) = self.cached("ingest", INGEST_KEYS, &inputs)? else { return Ok(()) };
        let (corpus, report) = ingest_sources(sources, &self.cfg.cases, &self.cfg.tables)?;
        let store = self.path(STORE_DIR);
        write_store(&store, &corpus)?;
        let mut outputs: Vec<PathBuf> = STORE_FILES.iter().map(|f| store.join(f)).collect();
        outputs.push(write_json(&self.path(INGEST_REPORT), &report)?);
        cache::record(&self.out, "ingest", &key, &outputs)?;
        eprintln!(
            "ingest: {} vote records, {} cases ({:.1}% promoted), {} rejected lines -> {}",
            report.rfa.records,
            corpus.cases.len(),
            100.0 * report.success_rate,
            report.rfa.rejected_lines,
            store.display()
        );
        Ok(())
    }

    pub fn features(&self) -> Result<(), CliError> {
        let store = self.path(STORE_DIR);
        let inputs: Vec<PathBuf> = STORE_FILES.iter().map(|f| store.join(f)).collect();
        for p in &inputs {
            require(p, "ingest")?;
        }
        let Some(key) = self.cached("features", FEATURE_KEYS, &inputs)? else { return Ok(()) };
        let corpus = read_store(&store)?;
        if corpus.cases.is_empty() {
            return Err(CliError::Degenerate("no election cases survive the filters".into()));
        }
        let table = extract_profiles(&corpus, &corpus.cases, &self.cfg.extract)?;
        let outputs = vec![
            write_with(&self.path(FEATURES), |w| table.write_csv(w))?,
            write_with(&self.path(FEATURES_INDEX), |w| table.write_index(w))?,
        ];
        cache::record(&self.out, "features", &key, &outputs)?;
        eprintln!("features: {} profiles x {} attributes -> {}", table.len(), table.attributes.len(), outputs[0].display());
        Ok(())
    }

    fn load_features(&self) -> Result<(ProfileTable, Vec<PathBuf>), CliError> {
        let (m, ix) = (self.path(FEATURES), self.path(FEATURES_INDEX));
        require(&m, "features")?;
        let matrix = fs::read_to_string(&m).map_err(|e| CliError::Input(format!("{}: {e}", m.display())))?;
        let index = fs::read_to_string(&ix).ok();
        let table = ProfileTable::read_csv(&matrix, index.as_deref()).map_err(|e| rfa_core::Error::in_file(&m, e))?;
        let mut inputs = vec![m];
        if index.is_some() {
            inputs.push(ix);
        }
        Ok((table, inputs))
    }

    pub fn evaluate(&self) -> Result<(), CliError> {
        let seed = self.cfg.require_seed()?;
        let (table, inputs) = self.load_features()?;
        let Some(key) = self.cached("evaluate", EVAL_KEYS, &inputs)? else { return Ok(()) };
        let mut eval = self.cfg.eval;
        eval.seed = seed;
        eval.forest.seed = seed;
        let dir = self.path(EVAL_DIR);
        let mut reports: Vec<EvaluationReport> = Vec::new();
        let mut outputs = Vec::new();
        for &kind in &self.cfg.models {
            let report = repeated_holdout(&table, kind, &eval)?;
            eprintln!(
                "evaluate: {kind} median {:.1}% (q1 {:.1}%, q3 {:.1}%)",
                100.0 * report.summary.median,
                100.0 * report.summary.q1,
                100.0 * report.summary.q3
            );
            outputs.push(write_json(&dir.join(format!("{kind}.json")), &report)?);
            reports.push(report);
        }
        let comparison = compare_models(&reports)?;
        outputs.push(write_with(&dir.join("runs.csv"), |w| EvaluationReport::write_runs_csv(&reports, w))?);
        outputs.push(write_with(&dir.join("confusion.csv"), |w| EvaluationReport::write_confusion_csv(&reports, w))?);
        outputs.push(write_json(&dir.join("comparison.json"), &comparison)?);
        outputs.push(write_with(&dir.join("comparison.csv"), |w| comparison.write_csv(w))?);
        cache::record(&self.out, "evaluate", &key, &outputs)?;
        Ok(())
    }

    /// Importance from a forest on every profile and all 39 attributes.
    fn importance(&self, table: &ProfileTable, seed: u64) -> Result<Importance, CliError> {
        let attributes = FeatureSet::model3().attributes;
        let data = table.dataset(&attributes, None)?;
        let cfg = ForestConfig { seed: derive_seed(seed, "importance", 0), ..self.cfg.forest };
        let model = forest::train(&data, &cfg)?;
        Ok(importance(&model, &data)?)
    }

    pub fn analyze(&self) -> Result<(), CliError> {
        let seed = self.cfg.require_seed()?;
        let (table, inputs) = self.load_features()?;
        let Some(key) = self.cached("analyze", ANALYSIS_KEYS, &inputs)? else { return Ok(()) };
        let dir = self.path(ANALYSIS_DIR);
        let imp = self.importance(&table, seed)?;
        let mut outputs = vec![
            write_with(&dir.join("importance.csv"), |w| imp.write_csv(w))?,
            write_json(&dir.join("importance.json"), &imp)?,
        ];
        let top: Vec<String> = imp.top(self.cfg.top_k).into_iter().map(String::from).collect();
        let analyses = analyze_attributes(&table, &top, &self.cfg.analysis)?;
        #[derive(Serialize)]
        struct Row<'a> {
            attribute: &'a str,
            rank: usize,
            importance: f64,
            interdecile_rejected: Option<f64>,
            interdecile_promoted: Option<f64>,
            threshold: Option<f64>,
            crossing: Option<f64>,
            notes: &'a [String],
        }
        let mut rows = Vec::new();
        for (rank, a) in analyses.iter().enumerate() {
            let stem = file_stem(&a.attribute);
            if let Some(d) = &a.density {
                outputs.push(write_with(&dir.join(format!("{stem}.density.csv")), |w| d.write_csv(w))?);
            }
            if let Some(p) = &a.probability {
                outputs.push(write_with(&dir.join(format!("{stem}.probability.csv")), |w| p.write_csv(w))?);
            }
            let pos = imp.feature_names.iter().position(|n| n == &a.attribute).expect("ranked attribute");
            rows.push(Row {
                attribute: &a.attribute,
                rank: rank + 1,
                importance: imp.overall[pos],
                interdecile_rejected: a.density.as_ref().map(|d| d.rejected.interdecile),
                interdecile_promoted: a.density.as_ref().map(|d| d.promoted.interdecile),
                threshold: a.probability.as_ref().and_then(|p| p.threshold),
                crossing: a.probability.as_ref().and_then(|p| p.crossing),
                notes: &a.notes,
            });
        }
        outputs.push(write_json(&dir.join("summary.json"), &rows)?);
        outputs.push(write_json(&dir.join("dispersion.json"), &dispersion_effect(&table, &self.cfg.analysis))?);
        cache::record(&self.out, "analyze", &key, &outputs)?;
        eprintln!("analyze: top {} attributes {} -> {}", top.len(), top.join(", "), dir.display());
        Ok(())
    }

    /// Run every stage, then write a summary and a manifest of all outputs.
    pub fn report(&self) -> Result<(), CliError> {
        self.ingest()?;
        self.features()?;
        self.evaluate()?;
        self.analyze()?;
        let read_json = |rel: &str| -> Result<serde_json::Value, CliError> {
            let p = self.path(rel);
            let text = fs::read_to_string(&p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
        };
        let ingest = read_json(INGEST_REPORT)?;
        let comparison = read_json(&format!("{EVAL_DIR}/comparison.json"))?;
        let analysis = read_json(&format!("{ANALYSIS_DIR}/summary.json"))?;
        let summary = serde_json::json!({
            "version": rfa_core::VERSION,
            "cases": ingest["cases"]["kept"],
            "success_rate": ingest["success_rate"],
            "models": comparison["models"],
            "paired": comparison["pairs"].as_array().map(|ps| ps.iter().map(|p| serde_json::json!({
                "first": p["first"], "second": p["second"], "median_delta": p["median_delta"],
                "wins": p["wins"], "losses": p["losses"], "sign_test_p": p["sign_test_p"],
            })).collect::<Vec<_>>()),
            "top_attributes": analysis,
        });
        write_json(&self.path(SUMMARY), &summary)?;
        self.manifest()?;
        eprintln!("report: {}", self.out.display());
        Ok(())
    }

    fn manifest(&self) -> Result<(), CliError> {
        let mut files = Vec::new();
        collect_files(&self.out, &self.out, &mut files)?;
        files.sort();
        let entries: Vec<serde_json::Value> = files
            .iter()
            .filter(|rel| rel.as_str() != MANIFEST)
            .map(|rel| {
                let p = self.out.join(rel);
                let bytes = fs::metadata(&p).map(|m| m.len()).unwrap_or_default();
                Ok(serde_json::json!({ "path": rel, "sha256": cache::hash_file(&p)?, "bytes": bytes }))
            })
            .collect::<Result<_, CliError>>()?;
        let config: serde_json::Value = serde_json::to_value(&self.cfg.raw).expect("serializable");
        let config_hash = cache::hash_bytes(serde_json::to_string(&self.cfg.raw).expect("serializable").as_bytes());
        write_json(
            &self.path(MANIFEST),
            &serde_json::json!({
                "tool": "rfa",
                "version": rfa_core::VERSION,
                "config_sha256": config_hash,
                "config": config,
                "files": entries,
            }),
        )?;
        Ok(())
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), CliError> {
    for entry in fs::read_dir(dir).map_err(|e| out_err(dir, e))? {
        let entry = entry.map_err(|e| out_err(dir, e))?;
        let path = entry.path();
        if entry.file_name() == cache::CACHE_DIR {
            continue;
        }
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
            out.push(rel);
        }
    }
    Ok(())
}
