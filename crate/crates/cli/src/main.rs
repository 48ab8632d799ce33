//! `rfa`: ingest RfA records and activity tables, extract candidate
//! profiles, evaluate the random-forest models and analyze attributes.

mod cache;
mod config;
mod stages;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rfa_core::ingest::store::SourcePaths;
use rfa_core::ingest::{
    generate_synthetic_corpus, write_interactions, write_revisions, write_roles, EventSchema, SignalSpec,
};

use config::PipelineConfig;
use stages::Stage;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("output: {0}")]
    Output(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Core(#[from] rfa_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Degenerate(_) => 3,
            CliError::Core(e) if e.is_degenerate() => 3,
            _ => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "rfa", version, about = "Predict RfA outcomes from editing and talk activity")]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set trees=100`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the raw sources and write the canonical store.
    Ingest,
    /// Extract candidate profiles from the store.
    Features,
    /// Repeated hold-out evaluation of the configured models.
    Evaluate,
    /// Attribute importance, class densities and promotion probabilities.
    Analyze,
    /// Run every stage and write a manifest.
    Report,
    /// Generate a synthetic corpus with planted signal.
    Synth(SynthArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Directory receiving the source files and `rfa.conf`.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value_t = 3000)]
    users: usize,
    #[arg(long, default_value_t = 400)]
    candidates: usize,
    /// Promoted / rejected ratio of revision volumes.
    #[arg(long, default_value_t = 2.5)]
    revision_gap: f64,
    /// Promoted / rejected ratio of social volumes.
    #[arg(long, default_value_t = 2.5)]
    social_gap: f64,
}

fn synth(cfg: &PipelineConfig, args: &SynthArgs) -> Result<(), CliError> {
    let seed = cfg.require_seed()?;
    let signal = SignalSpec { revision_gap: args.revision_gap, social_gap: args.social_gap, ..SignalSpec::default() };
    let synthetic = generate_synthetic_corpus(seed, args.users, args.candidates, signal)?;
    let paths = SourcePaths::in_dir(&args.dir);
    fs::create_dir_all(&args.dir).map_err(|e| CliError::Output(format!("{}: {e}", args.dir.display())))?;
    let create = |path: &Path| {
        fs::File::create(path)
            .map(std::io::BufWriter::new)
            .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
    };
    let corpus = &synthetic.corpus;
    write_interactions(&corpus.user_talk, EventSchema::UserTalk, create(&paths.user_talk)?)?;
    write_interactions(&corpus.article_talk, EventSchema::ArticleTalk, create(&paths.article_talk)?)?;
    write_revisions(&corpus.revisions, create(&paths.revisions)?)?;
    write_roles(&corpus.roles, create(&paths.roles)?)?;
    let write = |path: &Path, text: &str| fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())));
    write(&paths.rfa, &synthetic.rfa_records)?;
    let name = |p: &Path| p.file_name().expect("file name").to_string_lossy().into_owned();
    let conf = format!(
        "# synthetic corpus: {} users, {} candidates\nseed = {seed}\nrfa_records = {}\nuser_talk = {}\narticle_talk = {}\nrevisions = {}\nroles = {}\noutput = out\n",
        args.users,
        args.candidates,
        name(&paths.rfa),
        name(&paths.user_talk),
        name(&paths.article_talk),
        name(&paths.revisions),
        name(&paths.roles),
    );
    write(&args.dir.join("rfa.conf"), &conf)?;
    eprintln!("synth: {} candidates -> {}", synthetic.truth.len(), args.dir.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    }
    let cfg = PipelineConfig::load(cli.config.as_deref(), &cli.set)?;
    let stage = Stage::new(&cfg);
    match &cli.command {
        Command::Ingest => stage.ingest(),
        Command::Features => stage.features(),
        Command::Evaluate => stage.evaluate(),
        Command::Analyze => stage.analyze(),
        Command::Report => stage.report(),
        Command::Synth(args) => synth(&cfg, args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
