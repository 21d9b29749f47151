//! Evaluation: accuracy under a test-then-train protocol, sliding-window
//! accuracy series, a counting oracle, and the hyperparameter sweep.

mod oracle;
mod sweep;

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use serde::Serialize;

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};

pub use oracle::{
    bayes_optimal_accuracy, oracle_agreement, stationary_distribution, AgreementReport, Disagreement, OracleModel,
    DEFAULT_MARGIN,
};
pub use sweep::{
    run_sweep, run_sweep_with_registry, CellKey, CellStatus, SweepGrid, SweepOutcome, SweepRow, SweepSettings,
    RESULTS_FILE, SERIES_DIR,
};

/// One scored prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PredictionEvent {
    pub user: String,
    pub session_index: u64,
    /// Index of the predicted state within its session.
    pub position: usize,
    pub predicted: String,
    pub actual: String,
    pub correct: bool,
    /// Whether the prefix was absent from training and from adaptation so
    /// far; `None` when no training reference was supplied.
    pub unseen_prefix: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    pub per_user_accuracy: BTreeMap<String, f64>,
    pub events: Vec<PredictionEvent>,
    /// Test sessions shorter than `n`, which yield no prediction.
    pub skipped_sessions: usize,
    pub config: ModelConfig,
    pub adaptive_enabled: bool,
}

impl EvalReport {
    pub fn correct(&self) -> usize {
        self.events.iter().filter(|e| e.correct).count()
    }
}

fn accuracy(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Evaluates `model` on every test session without a training reference.
pub fn evaluate(model: &Model, test: &Dataset, adaptive_enabled: bool) -> Result<EvalReport> {
    evaluate_with_reference(model, test, adaptive_enabled, None)
}

/// For every test session, predicts each state from its `(n-1)`-prefix.
///
/// With `adaptive_enabled`, the true window is fed to the adaptive memory
/// after its prediction is recorded, and the adaptive memory is restored to
/// the model's state at the start of each user. Users are processed in
/// ascending order, each user's sessions in input order.
pub fn evaluate_with_reference(
    model: &Model,
    test: &Dataset,
    adaptive_enabled: bool,
    training: Option<&OracleModel>,
) -> Result<EvalReport> {
    if adaptive_enabled && !model.config().adaptive {
        return Err(Error::AdaptationDisabled);
    }
    let n = model.config().n;
    if let Some(o) = training {
        if o.n() != n {
            return Err(Error::InvalidConfig(format!(
                "training reference counts {}-grams, model uses {n}-grams",
                o.n()
            )));
        }
    }

    let mut events = Vec::new();
    let mut skipped_sessions = 0;
    let mut per_user_accuracy = BTreeMap::new();
    for (user, idx) in test.by_user() {
        let mut m = model.clone();
        let mut adapted: HashSet<Vec<String>> = HashSet::new();
        let (mut correct, mut total) = (0, 0);
        for i in idx {
            let session = &test.sessions()[i];
            let states = &session.states;
            if states.len() < n {
                skipped_sessions += 1;
                continue;
            }
            for end in n - 1..states.len() {
                let window = &states[end + 1 - n..=end];
                let prefix = &window[..n - 1];
                let result = m.predict_next(prefix)?;
                let actual = &window[n - 1];
                let hit = &result.predicted == actual;
                let unseen_prefix = training.map(|o| !o.contains_prefix(prefix) && !adapted.contains(prefix));
                events.push(PredictionEvent {
                    user: user.to_owned(),
                    session_index: session.session,
                    position: end,
                    predicted: result.predicted,
                    actual: actual.clone(),
                    correct: hit,
                    unseen_prefix,
                });
                correct += usize::from(hit);
                total += 1;
                if adaptive_enabled {
                    m.adapt(window)?;
                    if training.is_some() {
                        adapted.insert(prefix.to_vec());
                    }
                }
            }
        }
        if total > 0 {
            per_user_accuracy.insert(user.to_owned(), accuracy(correct, total));
        }
    }
    let correct = events.iter().filter(|e| e.correct).count();
    Ok(EvalReport {
        overall_accuracy: accuracy(correct, events.len()),
        per_user_accuracy,
        skipped_sessions,
        config: model.config().clone(),
        adaptive_enabled,
        events,
    })
}

/// Cross-validation summary over per-fold reports.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldSummary {
    /// Unweighted mean of the folds' overall accuracies.
    pub fold_mean_accuracy: f64,
    /// Accuracy over all events pooled across folds.
    pub event_weighted_accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    pub events: usize,
    pub skipped_sessions: usize,
}

pub fn summarize_folds(reports: &[EvalReport]) -> FoldSummary {
    let fold_accuracies: Vec<f64> = reports.iter().map(|r| r.overall_accuracy).collect();
    let events: usize = reports.iter().map(|r| r.events.len()).sum();
    let correct: usize = reports.iter().map(EvalReport::correct).sum();
    FoldSummary {
        fold_mean_accuracy: if fold_accuracies.is_empty() {
            0.0
        } else {
            fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64
        },
        event_weighted_accuracy: accuracy(correct, events),
        fold_accuracies,
        events,
        skipped_sessions: reports.iter().map(|r| r.skipped_sessions).sum(),
    }
}

/// One user's sliding-window accuracy: `(position, accuracy)` for every
/// position `i >= window-1` of the user's event stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserSeries {
    pub user: String,
    pub series: Vec<(usize, f64)>,
}

/// Accuracy over each run of `window` consecutive events, computed
/// separately per user. Users with fewer events than `window` get an empty
/// series.
pub fn sliding_window_accuracy(events: &[PredictionEvent], window: usize) -> Result<Vec<UserSeries>> {
    if window == 0 {
        return Err(Error::InvalidConfig("sliding window must be >= 1".into()));
    }
    let mut streams: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
    for e in events {
        streams.entry(e.user.as_str()).or_default().push(e.correct);
    }
    Ok(streams
        .into_iter()
        .map(|(user, hits)| {
            let mut series = Vec::new();
            let mut in_window = 0usize;
            for (i, &h) in hits.iter().enumerate() {
                in_window += usize::from(h);
                if i >= window {
                    in_window -= usize::from(hits[i - window]);
                }
                if i + 1 >= window {
                    series.push((i, in_window as f64 / window as f64));
                }
            }
            UserSeries {
                user: user.to_owned(),
                series,
            }
        })
        .collect())
}

pub fn write_series_json<W: Write>(series: &[UserSeries], mut w: W) -> Result<()> {
    serde_json::to_writer(&mut w, series)?;
    w.write_all(b"\n")?;
    Ok(())
}
