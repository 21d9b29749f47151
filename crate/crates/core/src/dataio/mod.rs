//! Session datasets: JSON-lines ingestion with label exclusion, a seeded
//! synthetic generator, and train/test partitioning strategies.
//!
//! Dataset file format, one session per line:
//!
//! ```text
//! {"user": "u01", "session": 0, "states": ["typing", "idle", "typing"]}
//! ```

mod split;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use split::{
    folds_leave_one_user_out, split_disjoint, split_overlapping, Disjoint, LeaveOneUserOut, Overlapping, SplitParams,
    SplitResult, SplitStrategy, StrategyRegistry, DEFAULT_TRAIN_USER_FRACTION,
};
pub use synthetic::{generate_synthetic, MarkovSpec, SyntheticConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRecord {
    pub user: String,
    pub session: u64,
    pub states: Vec<String>,
}

impl AsRef<[String]> for SessionRecord {
    fn as_ref(&self) -> &[String] {
        &self.states
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    sessions: Vec<SessionRecord>,
    label_universe: BTreeSet<String>,
}

impl Dataset {
    /// Requires non-empty sessions with unique `(user, session)` keys.
    pub fn new(sessions: Vec<SessionRecord>) -> Result<Self> {
        let mut keys = HashSet::new();
        for (i, s) in sessions.iter().enumerate() {
            if s.states.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "session {} of user `{}` has no states",
                    s.session, s.user
                )));
            }
            if !keys.insert((s.user.as_str(), s.session)) {
                return Err(Error::Parse {
                    line: i + 1,
                    reason: format!("duplicate session {} for user `{}`", s.session, s.user),
                });
            }
        }
        Ok(Self::from_valid(sessions))
    }

    fn from_valid(sessions: Vec<SessionRecord>) -> Self {
        let label_universe = sessions.iter().flat_map(|s| s.states.iter().cloned()).collect();
        Self {
            sessions,
            label_universe,
        }
    }

    pub fn sessions(&self) -> &[SessionRecord] {
        &self.sessions
    }

    pub fn into_sessions(self) -> Vec<SessionRecord> {
        self.sessions
    }

    pub fn label_universe(&self) -> &BTreeSet<String> {
        &self.label_universe
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    /// Distinct users in ascending order.
    pub fn users(&self) -> Vec<&str> {
        self.sessions
            .iter()
            .map(|s| s.user.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Session indices grouped by user, users ascending, sessions in input
    /// order.
    pub(crate) fn by_user(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.sessions.iter().enumerate() {
            map.entry(s.user.as_str()).or_default().push(i);
        }
        map
    }

    /// Keeps the sessions whose index satisfies `keep`, preserving order.
    pub(crate) fn subset(&self, mut keep: impl FnMut(usize) -> bool) -> Dataset {
        Dataset::from_valid(
            self.sessions
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, s)| s.clone())
                .collect(),
        )
    }

    pub fn total_states(&self) -> usize {
        self.sessions.iter().map(|s| s.states.len()).sum()
    }

    pub fn save_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.sessions {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_jsonl_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.save_jsonl(BufWriter::new(File::create(path)?))
    }
}

/// What happens to a session at an excluded state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExclusionMode {
    /// Drop the excluded states and join what remains.
    #[default]
    Splice,
    /// Cut the session at excluded states; each fragment becomes its own
    /// session, renumbered per user in order of appearance.
    BreakSession,
}

impl FromStr for ExclusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "splice" => Ok(Self::Splice),
            "break-session" => Ok(Self::BreakSession),
            other => Err(Error::InvalidConfig(format!(
                "exclusion mode must be `splice` or `break-session`, got `{other}`"
            ))),
        }
    }
}

/// Reads a JSON-lines dataset, removing `excluded` labels. Sessions left
/// empty are dropped. Blank lines are ignored.
pub fn load_sessions<R: BufRead>(reader: R, excluded: &BTreeSet<String>, mode: ExclusionMode) -> Result<Dataset> {
    let mut raw = Vec::new();
    let mut keys = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SessionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        if rec.states.iter().any(String::is_empty) {
            return Err(Error::Parse {
                line: idx + 1,
                reason: "state labels must be non-empty".into(),
            });
        }
        if !keys.insert((rec.user.clone(), rec.session)) {
            return Err(Error::Parse {
                line: idx + 1,
                reason: format!("duplicate session {} for user `{}`", rec.session, rec.user),
            });
        }
        raw.push(rec);
    }

    let mut sessions = Vec::with_capacity(raw.len());
    match mode {
        ExclusionMode::Splice => {
            for mut rec in raw {
                rec.states.retain(|s| !excluded.contains(s));
                if !rec.states.is_empty() {
                    sessions.push(rec);
                }
            }
        }
        ExclusionMode::BreakSession => {
            let mut next_index: BTreeMap<String, u64> = BTreeMap::new();
            for rec in raw {
                for fragment in rec.states.split(|s| excluded.contains(s)).filter(|f| !f.is_empty()) {
                    let counter = next_index.entry(rec.user.clone()).or_default();
                    sessions.push(SessionRecord {
                        user: rec.user.clone(),
                        session: *counter,
                        states: fragment.to_vec(),
                    });
                    *counter += 1;
                }
            }
        }
    }
    if sessions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Dataset::from_valid(sessions))
}

pub fn load_sessions_path(path: impl AsRef<Path>, excluded: &BTreeSet<String>, mode: ExclusionMode) -> Result<Dataset> {
    load_sessions(BufReader::new(File::open(path)?), excluded, mode)
}
