//! Hyperparameter sweep over a grid of model configurations and split
//! strategies, with a resumable CSV result table.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, sliding_window_accuracy, summarize_folds, write_series_json, UserSeries};
use crate::codebook::Codebook;
use crate::dataio::{Dataset, SplitParams, StrategyRegistry};
use crate::error::{Error, Result};
use crate::hdvec::EntryBits;
use crate::model::{Model, ModelConfig, NgramSum};

pub const RESULTS_FILE: &str = "results.csv";
pub const SERIES_DIR: &str = "series";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub dims: Vec<usize>,
    pub ngram_lengths: Vec<usize>,
    pub shifts: Vec<usize>,
    pub adaptive: Vec<bool>,
    pub strategies: Vec<String>,
    pub seeds: Vec<u64>,
}

impl SweepGrid {
    /// 4 dimensions × 4 lengths × 3 shifts × 2 adaptive settings × 3
    /// strategies, one seed.
    pub fn full() -> Self {
        Self {
            dims: vec![1000, 5000, 10000, 20000],
            ngram_lengths: vec![3, 5, 7, 9],
            shifts: vec![2, 4, 6],
            adaptive: vec![false, true],
            strategies: vec!["disjoint".into(), "overlapping".into(), "kfold".into()],
            seeds: vec![0],
        }
    }

    pub fn validate(&self, registry: &StrategyRegistry) -> Result<()> {
        let empty = [
            ("dims", self.dims.is_empty()),
            ("ngram_lengths", self.ngram_lengths.is_empty()),
            ("shifts", self.shifts.is_empty()),
            ("adaptive", self.adaptive.is_empty()),
            ("strategies", self.strategies.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::InvalidConfig(format!("sweep grid field `{name}` is empty")));
        }
        for s in &self.strategies {
            registry.create(s, &SplitParams::default())?;
        }
        Ok(())
    }

    /// Cells in row-major order: seed, dim, n, shift, adaptive, strategy.
    /// Repeated values produce one cell.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for &seed in &self.seeds {
            for &dim in &self.dims {
                for &n in &self.ngram_lengths {
                    for &shift in &self.shifts {
                        for &adaptive in &self.adaptive {
                            for strategy in &self.strategies {
                                let key = CellKey {
                                    seed,
                                    dim,
                                    n,
                                    shift,
                                    adaptive,
                                    strategy: strategy.clone(),
                                };
                                if seen.insert(key.clone()) {
                                    out.push(key);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub seed: u64,
    pub dim: usize,
    pub n: usize,
    pub shift: usize,
    pub adaptive: bool,
    pub strategy: String,
}

impl CellKey {
    /// File stem for the cell's sliding-window series.
    pub fn file_stem(&self) -> String {
        format!(
            "seed{}_d{}_n{}_s{}_{}_{}",
            self.seed,
            self.dim,
            self.n,
            self.shift,
            if self.adaptive { "adaptive" } else { "static" },
            self.strategy
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Skipped,
}

/// One line of the result table. `fold_mean_accuracy` is only set for
/// multi-fold strategies, whose `overall_accuracy` pools all folds' events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub dim: usize,
    pub n: usize,
    pub shift: usize,
    pub adaptive: bool,
    pub strategy: String,
    pub overall_accuracy: Option<f64>,
    pub fold_mean_accuracy: Option<f64>,
    pub events: u64,
    pub skipped_sessions: u64,
    pub wall_time_ms: u64,
    pub status: CellStatus,
    pub note: String,
}

impl SweepRow {
    pub fn key(&self) -> CellKey {
        CellKey {
            seed: self.seed,
            dim: self.dim,
            n: self.n,
            shift: self.shift,
            adaptive: self.adaptive,
            strategy: self.strategy.clone(),
        }
    }

    fn skipped(key: &CellKey, reason: String, wall_time_ms: u64) -> Self {
        Self {
            seed: key.seed,
            dim: key.dim,
            n: key.n,
            shift: key.shift,
            adaptive: key.adaptive,
            strategy: key.strategy.clone(),
            overall_accuracy: None,
            fold_mean_accuracy: None,
            events: 0,
            skipped_sessions: 0,
            wall_time_ms,
            status: CellStatus::Skipped,
            note: reason,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub entry_bits: EntryBits,
    pub adapt_weight: u32,
    pub split: SplitParams,
    /// Sliding-window size for the adaptive cells' series.
    pub window: usize,
    /// Cap on concurrently running cells; `None` uses every core.
    pub jobs: Option<usize>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            entry_bits: EntryBits::default(),
            adapt_weight: 1,
            split: SplitParams::default(),
            window: 30,
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// Every grid cell's row, in grid order.
    pub rows: Vec<SweepRow>,
    pub computed: usize,
    pub resumed: usize,
    pub skipped: usize,
}

/// Runs every grid cell not already present in `out_dir/results.csv`.
///
/// Rows are appended and flushed as cells finish, so an interrupted sweep
/// resumes where it stopped. When all cells are done the table is rewritten
/// in grid order. Adaptive cells also write `series/<cell>.json`.
pub fn run_sweep(grid: &SweepGrid, data: &Dataset, out_dir: &Path, settings: &SweepSettings) -> Result<SweepOutcome> {
    run_sweep_with_registry(grid, data, out_dir, settings, &StrategyRegistry::with_builtin())
}

pub fn run_sweep_with_registry(
    grid: &SweepGrid,
    data: &Dataset,
    out_dir: &Path,
    settings: &SweepSettings,
    registry: &StrategyRegistry,
) -> Result<SweepOutcome> {
    grid.validate(registry)?;
    if settings.window == 0 {
        return Err(Error::InvalidConfig("sliding window must be >= 1".into()));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    fs::create_dir_all(out_dir.join(SERIES_DIR))?;
    let results = out_dir.join(RESULTS_FILE);
    let previous = read_rows(&results)?;
    let done: HashSet<CellKey> = previous.iter().map(SweepRow::key).collect();

    let cells = grid.cells();
    let pending: Vec<&CellKey> = cells.iter().filter(|k| !done.contains(*k)).collect();

    let needs_header = fs::metadata(&results).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(&results)?;
    let writer = Mutex::new(csv::WriterBuilder::new().has_headers(needs_header).from_writer(file));

    let run = || {
        pending
            .par_iter()
            .map(|key| {
                let row = run_cell(key, data, settings, registry, out_dir)?;
                let mut w = writer.lock().expect("writer lock poisoned");
                w.serialize(&row)?;
                w.flush()?;
                Ok(row)
            })
            .collect::<Result<Vec<SweepRow>>>()
    };
    let fresh = match settings.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    drop(writer);

    let computed = fresh.len();
    let mut by_key: HashMap<CellKey, SweepRow> = previous.into_iter().map(|r| (r.key(), r)).collect();
    by_key.extend(fresh.into_iter().map(|r| (r.key(), r)));
    let rows: Vec<SweepRow> = cells.iter().filter_map(|k| by_key.remove(k)).collect();
    // Rows from other grids sharing this directory are kept after ours.
    let mut foreign: Vec<SweepRow> = by_key.into_values().collect();
    foreign.sort_by_key(SweepRow::key);
    write_rows(&results, rows.iter().chain(&foreign))?;

    Ok(SweepOutcome {
        skipped: rows.iter().filter(|r| r.status == CellStatus::Skipped).count(),
        resumed: rows.len() - computed,
        computed,
        rows,
    })
}

/// Rows already on disk; unreadable records (such as a line cut short by an
/// interruption) are ignored so the cell is recomputed.
fn read_rows(path: &Path) -> Result<Vec<SweepRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    Ok(rdr.deserialize::<SweepRow>().filter_map(|r| r.ok()).collect())
}

fn write_rows<'a>(path: &Path, rows: impl Iterator<Item = &'a SweepRow>) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_writer(File::create(&tmp)?);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

struct CellOutput {
    overall: f64,
    fold_mean: Option<f64>,
    events: u64,
    skipped_sessions: u64,
    series: Option<Vec<UserSeries>>,
}

fn run_cell(
    key: &CellKey,
    data: &Dataset,
    settings: &SweepSettings,
    registry: &StrategyRegistry,
    out_dir: &Path,
) -> Result<SweepRow> {
    let start = Instant::now();
    let out = match compute_cell(key, data, settings, registry) {
        Ok(out) => out,
        Err(e) => return Ok(SweepRow::skipped(key, e.to_string(), elapsed_ms(start))),
    };
    if let Some(series) = &out.series {
        let path = out_dir.join(SERIES_DIR).join(format!("{}.json", key.file_stem()));
        write_series_json(series, std::io::BufWriter::new(File::create(path)?))?;
    }
    Ok(SweepRow {
        seed: key.seed,
        dim: key.dim,
        n: key.n,
        shift: key.shift,
        adaptive: key.adaptive,
        strategy: key.strategy.clone(),
        overall_accuracy: Some(out.overall),
        fold_mean_accuracy: out.fold_mean,
        events: out.events,
        skipped_sessions: out.skipped_sessions,
        wall_time_ms: elapsed_ms(start),
        status: CellStatus::Ok,
        note: String::new(),
    })
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

fn compute_cell(
    key: &CellKey,
    data: &Dataset,
    settings: &SweepSettings,
    registry: &StrategyRegistry,
) -> Result<CellOutput> {
    let config = ModelConfig {
        dim: key.dim,
        n: key.n,
        shift: key.shift,
        seed: key.seed,
        adaptive: key.adaptive,
        adapt_weight: settings.adapt_weight,
        entry_bits: settings.entry_bits,
    };
    let encoder = config.validate()?;
    let folds = registry.create(&key.strategy, &settings.split)?.folds(data, key.seed)?;
    let codebook = Codebook::build(data.label_universe().iter(), key.dim, key.seed)?;

    let mut reports = Vec::with_capacity(folds.len());
    if folds.len() == 1 {
        let model = Model::train(config, codebook, folds[0].train.sessions())?;
        reports.push(evaluate(&model, &folds[0].test, key.adaptive)?);
    } else {
        // Every session is encoded once; each fold sums its training sessions.
        let partial: HashMap<(&str, u64), NgramSum> = data
            .sessions()
            .par_iter()
            .map(|s| {
                let mut sum = NgramSum::zeros(key.dim)?;
                sum.add_session(&s.states, &codebook, &encoder)?;
                Ok(((s.user.as_str(), s.session), sum))
            })
            .collect::<Result<_>>()?;
        for fold in &folds {
            let mut sum = NgramSum::zeros(key.dim)?;
            for s in fold.train.sessions() {
                sum.merge(&partial[&(s.user.as_str(), s.session)])?;
            }
            let model = Model::from_sum(config.clone(), codebook.clone(), &sum)?;
            reports.push(evaluate(&model, &fold.test, key.adaptive)?);
        }
    }

    let summary = summarize_folds(&reports);
    let series = if key.adaptive {
        let events: Vec<_> = reports.iter().flat_map(|r| r.events.iter().cloned()).collect();
        Some(sliding_window_accuracy(&events, settings.window)?)
    } else {
        None
    };
    Ok(CellOutput {
        overall: if reports.len() == 1 {
            reports[0].overall_accuracy
        } else {
            summary.event_weighted_accuracy
        },
        fold_mean: (reports.len() > 1).then_some(summary.fold_mean_accuracy),
        events: summary.events as u64,
        skipped_sessions: summary.skipped_sessions as u64,
        series,
    })
}
