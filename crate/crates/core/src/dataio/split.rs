//! Train/test partitioning strategies, selectable by name.
//!
//! Every strategy returns one or more folds; each fold's train and test
//! sets are disjoint at the session level and together cover the input.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed::{substream, SPLIT};

/// Fraction of users used for training in the disjoint split (18 of 21).
pub const DEFAULT_TRAIN_USER_FRACTION: f64 = 18.0 / 21.0;
const FRACTION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitResult {
    pub train: Dataset,
    pub test: Dataset,
}

pub trait SplitStrategy: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Produces the folds for this strategy. Single-split strategies return
    /// exactly one fold.
    fn folds(&self, data: &Dataset, seed: u64) -> Result<Vec<SplitResult>>;
}

fn check_fraction(f: f64, what: &str) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{what} must lie strictly between 0 and 1, got {f}"
        )))
    }
}

/// Whole users go to either train or test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disjoint {
    pub train_user_fraction: f64,
}

impl Default for Disjoint {
    fn default() -> Self {
        Self {
            train_user_fraction: DEFAULT_TRAIN_USER_FRACTION,
        }
    }
}

/// Users shuffled by seed; `ceil(fraction·|users|)` of them train, clamped
/// so both sides keep at least one user.
pub fn split_disjoint(d: &Dataset, train_user_fraction: f64, seed: u64) -> Result<SplitResult> {
    check_fraction(train_user_fraction, "train user fraction")?;
    let mut users = d.users();
    if users.len() < 2 {
        return Err(Error::InsufficientUsers(users.len()));
    }
    let n_train = ((train_user_fraction * users.len() as f64 - FRACTION_EPS).ceil() as usize).clamp(1, users.len() - 1);
    users.shuffle(&mut substream(seed, SPLIT, b"disjoint"));
    let train_users: HashSet<&str> = users[..n_train].iter().copied().collect();
    let in_train: Vec<bool> = d
        .sessions()
        .iter()
        .map(|s| train_users.contains(s.user.as_str()))
        .collect();
    Ok(SplitResult {
        train: d.subset(|i| in_train[i]),
        test: d.subset(|i| !in_train[i]),
    })
}

/// Every user contributes sessions to both sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overlapping {
    pub train_fraction: f64,
    /// Take each user's first sessions for training instead of a seeded
    /// shuffle.
    pub chronological: bool,
}

impl Default for Overlapping {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            chronological: false,
        }
    }
}

/// Per user, `floor(fraction·n_u)` sessions train (at least 1, at most
/// `n_u - 1`), the rest test.
pub fn split_overlapping(d: &Dataset, train_fraction: f64, chronological: bool, seed: u64) -> Result<SplitResult> {
    check_fraction(train_fraction, "train fraction")?;
    let mut in_train = vec![false; d.len()];
    for (user, mut idx) in d.by_user() {
        if idx.len() < 2 {
            return Err(Error::InsufficientSessions(user.to_owned()));
        }
        let n_train = ((train_fraction * idx.len() as f64 + FRACTION_EPS).floor() as usize).clamp(1, idx.len() - 1);
        if chronological {
            idx.sort_by_key(|&i| d.sessions()[i].session);
        } else {
            idx.shuffle(&mut substream(seed, SPLIT, format!("overlapping/{user}").as_bytes()));
        }
        for &i in &idx[..n_train] {
            in_train[i] = true;
        }
    }
    Ok(SplitResult {
        train: d.subset(|i| in_train[i]),
        test: d.subset(|i| !in_train[i]),
    })
}

/// One fold per user, in ascending user order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LeaveOneUserOut;

pub fn folds_leave_one_user_out(d: &Dataset) -> Result<Vec<SplitResult>> {
    let users = d.users();
    if users.len() < 2 {
        return Err(Error::InsufficientUsers(users.len()));
    }
    Ok(users
        .iter()
        .map(|&u| SplitResult {
            train: d.subset(|i| d.sessions()[i].user != u),
            test: d.subset(|i| d.sessions()[i].user == u),
        })
        .collect())
}

impl SplitStrategy for Disjoint {
    fn name(&self) -> &'static str {
        "disjoint"
    }

    fn folds(&self, data: &Dataset, seed: u64) -> Result<Vec<SplitResult>> {
        split_disjoint(data, self.train_user_fraction, seed).map(|s| vec![s])
    }
}

impl SplitStrategy for Overlapping {
    fn name(&self) -> &'static str {
        "overlapping"
    }

    fn folds(&self, data: &Dataset, seed: u64) -> Result<Vec<SplitResult>> {
        split_overlapping(data, self.train_fraction, self.chronological, seed).map(|s| vec![s])
    }
}

impl SplitStrategy for LeaveOneUserOut {
    fn name(&self) -> &'static str {
        "kfold"
    }

    fn folds(&self, data: &Dataset, _seed: u64) -> Result<Vec<SplitResult>> {
        folds_leave_one_user_out(data)
    }
}

/// Parameters shared by the built-in strategy factories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitParams {
    pub train_user_fraction: f64,
    pub train_fraction: f64,
    pub chronological: bool,
}

impl Default for SplitParams {
    fn default() -> Self {
        Self {
            train_user_fraction: DEFAULT_TRAIN_USER_FRACTION,
            train_fraction: Overlapping::default().train_fraction,
            chronological: false,
        }
    }
}

type Factory = Box<dyn Fn(&SplitParams) -> Box<dyn SplitStrategy> + Send + Sync>;

/// Name → strategy factory table.
pub struct StrategyRegistry {
    factories: BTreeMap<String, Factory>,
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// `disjoint`, `overlapping` and `kfold` (alias `leave-one-user-out`).
    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register("disjoint", |p| {
            Box::new(Disjoint {
                train_user_fraction: p.train_user_fraction,
            })
        });
        r.register("overlapping", |p| {
            Box::new(Overlapping {
                train_fraction: p.train_fraction,
                chronological: p.chronological,
            })
        });
        r.register("kfold", |_| Box::new(LeaveOneUserOut));
        r.register("leave-one-user-out", |_| Box::new(LeaveOneUserOut));
        r
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&SplitParams) -> Box<dyn SplitStrategy> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_owned(), Box::new(factory));
    }

    pub fn create(&self, name: &str, params: &SplitParams) -> Result<Box<dyn SplitStrategy>> {
        self.factories
            .get(name)
            .map(|f| f(params))
            .ok_or_else(|| Error::UnknownStrategy(name.to_owned()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}
