//! Seeded order-1 Markov session generator.
//!
//! Each user walks a personal chain `(1-ρ)·T + ρ·R_u`, where `T` is the
//! shared transition matrix and `R_u` a user-specific random stochastic
//! matrix whose rows are Dirichlet draws. Everything derives from one seed.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use super::{Dataset, SessionRecord};
use crate::error::{Error, Result};
use crate::seed::{substream, StreamRng, SYNTHETIC};

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovSpec {
    pub labels: Vec<String>,
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
}

impl MarkovSpec {
    /// Every state equally likely from everywhere.
    pub fn uniform(labels: Vec<String>) -> Result<Self> {
        let k = labels.len();
        let p = 1.0 / k as f64;
        let spec = Self {
            labels,
            initial: vec![p; k],
            transition: vec![vec![p; k]; k],
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Default nine-label alphabet `s0` … `s8`.
    pub fn default_labels() -> Vec<String> {
        (0..9).map(|i| format!("s{i}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.labels.len();
        if k == 0 {
            return Err(Error::InvalidConfig("Markov spec needs at least one label".into()));
        }
        let mut sorted: Vec<_> = self.labels.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateLabel(w[0].clone()));
        }
        if self.labels.iter().any(String::is_empty) {
            return Err(Error::InvalidConfig("state labels must be non-empty".into()));
        }
        check_distribution(&self.initial, k, "initial distribution")?;
        if self.transition.len() != k {
            return Err(Error::InvalidConfig(format!(
                "transition matrix has {} rows, expected {k}",
                self.transition.len()
            )));
        }
        for (i, row) in self.transition.iter().enumerate() {
            check_distribution(row, k, &format!("transition row {i}"))?;
        }
        Ok(())
    }

    pub fn from_json_path(path: impl AsRef<Path>) -> Result<Self> {
        let spec: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        spec.validate()?;
        Ok(spec)
    }
}

fn check_distribution(p: &[f64], k: usize, what: &str) -> Result<()> {
    if p.len() != k {
        return Err(Error::InvalidConfig(format!(
            "{what} has {} entries, expected {k}",
            p.len()
        )));
    }
    if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::InvalidConfig(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::InvalidConfig(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub users: usize,
    pub sessions_per_user: usize,
    pub session_len: usize,
    pub seed: u64,
    /// Mixing weight ρ of the user-specific matrix, in `[0, 1]`.
    pub perturbation: f64,
    /// Dirichlet concentration of the user-specific rows; small values make
    /// users more idiosyncratic.
    pub concentration: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            users: 21,
            sessions_per_user: 5,
            session_len: 100,
            seed: 0,
            perturbation: 0.0,
            concentration: 1.0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.sessions_per_user == 0 || self.session_len == 0 {
            return Err(Error::InvalidConfig(
                "users, sessions per user and session length must all be >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.perturbation) {
            return Err(Error::InvalidConfig(format!(
                "perturbation must lie in [0, 1], got {}",
                self.perturbation
            )));
        }
        if !(self.concentration.is_finite() && self.concentration > 0.0) {
            return Err(Error::InvalidConfig("concentration must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn user_id(index: usize, users: usize) -> String {
    let width = users.saturating_sub(1).to_string().len().max(2);
    format!("u{index:0width$}")
}

fn personal_matrix(spec: &MarkovSpec, cfg: &SyntheticConfig, user: &str) -> Result<Vec<Vec<f64>>> {
    let rho = cfg.perturbation;
    if rho == 0.0 {
        return Ok(spec.transition.clone());
    }
    let gamma = Gamma::new(cfg.concentration, 1.0).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = substream(cfg.seed, SYNTHETIC, format!("matrix/{user}").as_bytes());
    let k = spec.labels.len();
    Ok(spec
        .transition
        .iter()
        .map(|row| {
            let draw: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = draw.iter().sum();
            row.iter()
                .zip(&draw)
                .map(|(&t, &r)| {
                    let r = if total > 0.0 { r / total } else { 1.0 / k as f64 };
                    (1.0 - rho) * t + rho * r
                })
                .collect()
        })
        .collect())
}

fn walk(initial: &WeightedIndex<f64>, rows: &[WeightedIndex<f64>], len: usize, rng: &mut StreamRng) -> Vec<usize> {
    let mut state = initial.sample(rng);
    let mut out = Vec::with_capacity(len);
    out.push(state);
    while out.len() < len {
        state = rows[state].sample(rng);
        out.push(state);
    }
    out
}

/// Samples `users × sessions_per_user` sessions of `session_len` states.
pub fn generate_synthetic(spec: &MarkovSpec, cfg: &SyntheticConfig) -> Result<Dataset> {
    spec.validate()?;
    cfg.validate()?;
    let initial = WeightedIndex::new(&spec.initial).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut sessions = Vec::with_capacity(cfg.users * cfg.sessions_per_user);
    for u in 0..cfg.users {
        let user = user_id(u, cfg.users);
        let rows = personal_matrix(spec, cfg, &user)?
            .iter()
            .map(|row| WeightedIndex::new(row).map_err(|e| Error::InvalidConfig(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        for s in 0..cfg.sessions_per_user {
            let mut rng = substream(cfg.seed, SYNTHETIC, format!("session/{user}/{s}").as_bytes());
            let states = walk(&initial, &rows, cfg.session_len, &mut rng)
                .into_iter()
                .map(|i| spec.labels[i].clone())
                .collect();
            sessions.push(SessionRecord {
                user: user.clone(),
                session: s as u64,
                states,
            });
        }
    }
    Dataset::new(sessions)
}
