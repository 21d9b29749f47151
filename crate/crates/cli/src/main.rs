//! `hyperseq`: generate session data, train and query models, evaluate, and
//! run hyperparameter sweeps.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 malformed data,
//! 3 internal error.

mod config;

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use hyperseq::dataio::{
    generate_synthetic, load_sessions_path, Dataset, ExclusionMode, MarkovSpec, SplitResult, StrategyRegistry,
};
use hyperseq::eval::{
    evaluate_with_reference, sliding_window_accuracy, summarize_folds, write_series_json, EvalReport, OracleModel,
    SweepSettings,
};
use hyperseq::{Codebook, ErrorKind, Model, ModelConfig};

use config::Resolved;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(hyperseq::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(e) => match e.kind() {
                ErrorKind::Validation => 1,
                ErrorKind::Data => 2,
                ErrorKind::Internal => 3,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<hyperseq::Error> for CliError {
    fn from(e: hyperseq::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(e.into())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "hyperseq", version, about = "Hyperdimensional next-state prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic session dataset (JSON lines).
    Gen(GenArgs),
    /// Train a model on a dataset and save it.
    Train(TrainArgs),
    /// Predict the next state for a prefix.
    Predict(PredictArgs),
    /// Evaluate a model, or train and evaluate per split fold.
    Eval(EvalArgs),
    /// Run a hyperparameter sweep, resuming any earlier run in the same
    /// output directory.
    Sweep(SweepArgs),
}

/// Flags shared by every subcommand. Each overrides the same key in the
/// `--config` file.
#[derive(Args, Debug)]
pub struct Shared {
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hypervector dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// n-gram length.
    #[arg(long)]
    pub ngram: Option<usize>,
    /// Rotation step between n-gram positions.
    #[arg(long)]
    pub shift: Option<usize>,
    /// Enable online adaptation (`--adaptive` or `--adaptive=false`).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub adaptive: Option<bool>,
    #[arg(long)]
    pub adapt_weight: Option<u32>,
    /// Accumulator width: 8, 16 or 32.
    #[arg(long)]
    pub entry_bits: Option<u8>,
    /// Maximum number of sweep cells run at once.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset in JSON lines.
    #[arg(long)]
    data: PathBuf,
    /// Labels to remove, comma separated.
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<String>,
    /// `splice` or `break-session`.
    #[arg(long)]
    exclusion_mode: Option<String>,
}

#[derive(Args)]
struct GenArgs {
    /// Markov spec JSON; defaults to a uniform chain over nine labels.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    /// Weight of each user's private transition matrix, in [0, 1].
    #[arg(long)]
    perturbation: Option<f64>,
    #[arg(long)]
    concentration: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    shared: Shared,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    shared: Shared,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// The `n-1` most recent states, comma separated, oldest first.
    #[arg(long)]
    prefix: String,
    #[command(flatten)]
    shared: Shared,
}

#[derive(Args)]
struct EvalArgs {
    /// Trained model. Without `--strategy` it is evaluated on the whole
    /// dataset; with one, its configuration seeds the per-fold training.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// `disjoint`, `overlapping` or `kfold`.
    #[arg(long)]
    strategy: Option<String>,
    /// Sliding-window size for the accuracy series.
    #[arg(long)]
    window: Option<usize>,
    /// Output directory for eval.csv, events.csv and series.json.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    shared: Shared,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Restrict the grid to one strategy.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    window: Option<usize>,
    /// Output directory for results.csv and series/.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    shared: Shared,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{}: no such file", path.display())))
    }
}

fn load_data(args: &DataArgs, cfg: &Resolved) -> CliResult<Dataset> {
    require_file(&args.data)?;
    let mut excluded: BTreeSet<String> = cfg.file.exclude.iter().flatten().cloned().collect();
    if !args.exclude.is_empty() {
        excluded = args.exclude.iter().cloned().collect();
    }
    let mode = match args.exclusion_mode.as_ref().or(cfg.file.exclusion_mode.as_ref()) {
        Some(m) => m.parse::<ExclusionMode>()?,
        None => ExclusionMode::default(),
    };
    Ok(load_sessions_path(&args.data, &excluded, mode)?)
}

fn cmd_gen(a: GenArgs) -> CliResult<()> {
    let cfg = Resolved::new(&a.shared)?;
    let base = cfg.file.synthetic.clone().unwrap_or_default();
    let syn = hyperseq::dataio::SyntheticConfig {
        users: a.users.unwrap_or(base.users),
        sessions_per_user: a.sessions.unwrap_or(base.sessions_per_user),
        session_len: a.length.unwrap_or(base.session_len),
        seed: cfg.seed.unwrap_or(base.seed),
        perturbation: a.perturbation.unwrap_or(base.perturbation),
        concentration: a.concentration.unwrap_or(base.concentration),
    };
    let spec = match &a.spec {
        Some(p) => {
            require_file(p)?;
            MarkovSpec::from_json_path(p)?
        }
        None => MarkovSpec::uniform(MarkovSpec::default_labels())?,
    };
    let data = generate_synthetic(&spec, &syn)?;
    data.save_jsonl_path(&a.out)?;
    println!(
        "wrote {} sessions from {} users ({} states) to {}",
        data.len(),
        data.users().len(),
        data.total_states(),
        a.out.display()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let cfg = Resolved::new(&a.shared)?;
    let config = cfg.model_config(ModelConfig::default());
    config.validate()?;
    let data = load_data(&a.data, &cfg)?;
    let start = Instant::now();
    let codebook = Codebook::build(data.label_universe().iter(), config.dim, config.seed)?;
    let (model, stats) = Model::train_with_stats(config, codebook, data.sessions())?;
    let elapsed = start.elapsed();
    model.save_to_path(&a.out)?;
    println!("train_ngram_count: {}", model.train_ngram_count());
    println!("sessions: {} ({} shorter than n)", stats.sessions, stats.short_sessions);
    println!("labels: {}", model.codebook().len());
    println!("wall_time_ms: {}", elapsed.as_millis());
    println!("model: {} ({} bytes)", a.out.display(), model.file_size());
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> CliResult<()> {
    require_file(&a.model)?;
    let model = Model::load_from_path(&a.model)?;
    let prefix: Vec<&str> = a.prefix.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let expected = model.config().n - 1;
    if prefix.len() != expected {
        return Err(CliError::Usage(format!(
            "prefix must hold n-1 = {expected} labels, got {}",
            prefix.len()
        )));
    }
    let result = model.predict_next(&prefix)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", result.predicted)?;
    for (label, score) in result.ranked() {
        writeln!(out, "{label}\t{score:.6}")?;
    }
    Ok(())
}

struct FoldRun {
    name: String,
    test_users: Vec<String>,
    report: EvalReport,
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let cfg = Resolved::new(&a.shared)?;
    let window = a.window.or(cfg.file.window).unwrap_or(30);
    if window == 0 {
        return Err(CliError::Usage("--window must be >= 1".into()));
    }
    let data = load_data(&a.data, &cfg)?;
    let strategy = a.strategy.clone().or(cfg.file.strategy.clone());
    let loaded = match &a.model {
        Some(p) => {
            require_file(p)?;
            Some(Model::load_from_path(p)?)
        }
        None => None,
    };

    let mut runs = Vec::new();
    let adaptive;
    match (strategy, loaded) {
        (None, None) => return Err(CliError::Usage("eval needs --model, --strategy, or both".into())),
        (None, Some(model)) => {
            adaptive = cfg.adaptive.unwrap_or(model.config().adaptive);
            runs.push(FoldRun {
                name: "all".into(),
                test_users: data.users().iter().map(|u| u.to_string()).collect(),
                report: evaluate_with_reference(&model, &data, adaptive, None)?,
            });
        }
        (Some(name), model) => {
            let base = model.map(|m| m.config().clone()).unwrap_or_default();
            let config = cfg.model_config(base);
            config.validate()?;
            adaptive = config.adaptive;
            let folds = StrategyRegistry::with_builtin()
                .create(&name, &cfg.split_params())?
                .folds(&data, config.seed)?;
            let codebook = Codebook::build(data.label_universe().iter(), config.dim, config.seed)?;
            let multi = folds.len() > 1;
            for (i, SplitResult { train, test }) in folds.iter().enumerate() {
                let model = Model::train(config.clone(), codebook.clone(), train.sessions())?;
                let oracle = OracleModel::build(train.sessions(), config.n);
                runs.push(FoldRun {
                    name: if multi { i.to_string() } else { name.clone() },
                    test_users: test.users().iter().map(|u| u.to_string()).collect(),
                    report: evaluate_with_reference(&model, test, adaptive, Some(&oracle))?,
                });
            }
        }
    }

    fs::create_dir_all(&a.out)?;
    write_eval_csv(&a.out.join("eval.csv"), &runs)?;
    write_events_csv(&a.out.join("events.csv"), &runs)?;
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    let summary = summarize_folds(&reports);
    if adaptive {
        let events: Vec<_> = reports.iter().flat_map(|r| r.events.iter().cloned()).collect();
        let series = sliding_window_accuracy(&events, window)?;
        write_series_json(&series, BufWriter::new(File::create(a.out.join("series.json"))?))?;
    }

    println!("events: {}", summary.events);
    println!("skipped_sessions: {}", summary.skipped_sessions);
    if runs.len() > 1 {
        println!("fold_mean_accuracy: {:.4}", summary.fold_mean_accuracy);
        println!("event_weighted_accuracy: {:.4}", summary.event_weighted_accuracy);
    } else {
        println!("overall_accuracy: {:.4}", summary.event_weighted_accuracy);
    }
    println!("reports: {}", a.out.display());
    Ok(())
}

fn write_eval_csv(path: &Path, runs: &[FoldRun]) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "fold",
        "test_users",
        "overall_accuracy",
        "events",
        "correct",
        "skipped_sessions",
        "unseen_prefix_events",
    ])
    .map_err(hyperseq::Error::from)?;
    for r in runs {
        let unseen = r.report.events.iter().filter(|e| e.unseen_prefix == Some(true)).count();
        w.write_record([
            r.name.clone(),
            r.test_users.join(";"),
            r.report.overall_accuracy.to_string(),
            r.report.events.len().to_string(),
            r.report.correct().to_string(),
            r.report.skipped_sessions.to_string(),
            unseen.to_string(),
        ])
        .map_err(hyperseq::Error::from)?;
    }
    if runs.len() > 1 {
        let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
        let s = summarize_folds(&reports);
        let correct: usize = reports.iter().map(EvalReport::correct).sum();
        let unseen = reports
            .iter()
            .flat_map(|r| &r.events)
            .filter(|e| e.unseen_prefix == Some(true))
            .count();
        for (name, acc) in [("mean", s.fold_mean_accuracy), ("pooled", s.event_weighted_accuracy)] {
            w.write_record([
                name.to_string(),
                String::new(),
                acc.to_string(),
                s.events.to_string(),
                correct.to_string(),
                s.skipped_sessions.to_string(),
                unseen.to_string(),
            ])
            .map_err(hyperseq::Error::from)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_events_csv(path: &Path, runs: &[FoldRun]) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "fold",
        "user",
        "session",
        "position",
        "predicted",
        "actual",
        "correct",
        "unseen_prefix",
    ])
    .map_err(hyperseq::Error::from)?;
    for r in runs {
        for e in &r.report.events {
            w.write_record([
                r.name.clone(),
                e.user.clone(),
                e.session_index.to_string(),
                e.position.to_string(),
                e.predicted.clone(),
                e.actual.clone(),
                e.correct.to_string(),
                e.unseen_prefix.map(|u| u.to_string()).unwrap_or_default(),
            ])
            .map_err(hyperseq::Error::from)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(File::create(path)?))
}

fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    let cfg = Resolved::new(&a.shared)?;
    let mut grid = cfg.grid();
    if let Some(s) = a.strategy.clone().or(cfg.file.strategy.clone()) {
        grid.strategies = vec![s];
    }
    let defaults = SweepSettings::default();
    let settings = SweepSettings {
        entry_bits: cfg.entry_bits.unwrap_or(defaults.entry_bits),
        adapt_weight: cfg.adapt_weight.unwrap_or(defaults.adapt_weight),
        split: cfg.split_params(),
        window: a.window.or(cfg.file.window).unwrap_or(defaults.window),
        jobs: cfg.jobs,
    };
    let data = load_data(&a.data, &cfg)?;
    let start = Instant::now();
    let outcome = hyperseq::run_sweep(&grid, &data, &a.out, &settings)?;
    println!(
        "cells: {} ({} computed, {} already done, {} skipped)",
        outcome.rows.len(),
        outcome.computed,
        outcome.resumed,
        outcome.skipped
    );
    for r in outcome
        .rows
        .iter()
        .filter(|r| r.status == hyperseq::eval::CellStatus::Skipped)
    {
        println!("skipped {}: {}", r.key().file_stem(), r.note);
    }
    println!("wall_time_ms: {}", start.elapsed().as_millis());
    println!("results: {}", a.out.join(hyperseq::eval::RESULTS_FILE).display());
    Ok(())
}
