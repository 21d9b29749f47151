//! Exact n-gram counting oracle and the Bayes-optimal reference accuracy of
//! a first-order Markov chain.

use std::collections::{BTreeMap, HashMap};

use crate::dataio::MarkovSpec;
use crate::error::{Error, Result};
use crate::model::Model;

/// Minimum count gap between the top two continuations for a prefix to be
/// used in agreement checks.
pub const DEFAULT_MARGIN: u64 = 2;

const STATIONARY_TOL: f64 = 1e-12;
const STATIONARY_MAX_ITERS: usize = 1_000_000;

/// Continuation counts for every `(n-1)`-prefix seen in training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleModel {
    n: usize,
    counts: HashMap<Vec<String>, BTreeMap<String, u64>>,
}

impl OracleModel {
    /// Counts every continuous n-window. Sessions shorter than `n` add
    /// nothing.
    pub fn build<S, T>(sessions: &[S], n: usize) -> Self
    where
        S: AsRef<[T]>,
        T: AsRef<str>,
    {
        let mut counts: HashMap<Vec<String>, BTreeMap<String, u64>> = HashMap::new();
        for s in sessions {
            let s = s.as_ref();
            if n == 0 || s.len() < n {
                continue;
            }
            for w in s.windows(n) {
                let prefix = w[..n - 1].iter().map(|x| x.as_ref().to_owned()).collect();
                *counts
                    .entry(prefix)
                    .or_default()
                    .entry(w[n - 1].as_ref().to_owned())
                    .or_default() += 1;
            }
        }
        Self { n, counts }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of windows counted.
    pub fn total_count(&self) -> u64 {
        self.counts.values().flat_map(|c| c.values()).sum()
    }

    pub fn prefix_count(&self) -> usize {
        self.counts.len()
    }

    pub fn prefixes(&self) -> impl Iterator<Item = &[String]> {
        self.counts.keys().map(Vec::as_slice)
    }

    pub fn contains_prefix<T: AsRef<str>>(&self, prefix: &[T]) -> bool {
        self.get(prefix).is_some()
    }

    fn get<T: AsRef<str>>(&self, prefix: &[T]) -> Option<&BTreeMap<String, u64>> {
        let key: Vec<String> = prefix.iter().map(|x| x.as_ref().to_owned()).collect();
        self.counts.get(&key)
    }

    pub fn continuations<T: AsRef<str>>(&self, prefix: &[T]) -> Option<&BTreeMap<String, u64>> {
        self.get(prefix)
    }

    /// Most frequent continuation, ties to the lexicographically smallest
    /// label; `None` for an unseen prefix.
    pub fn predict<T: AsRef<str>>(&self, prefix: &[T]) -> Option<&str> {
        self.top_two(prefix).map(|(label, _, _)| label)
    }

    /// Count gap between the most and second most frequent continuation
    /// (the runner-up counts as 0 when there is only one).
    pub fn margin<T: AsRef<str>>(&self, prefix: &[T]) -> Option<u64> {
        self.top_two(prefix).map(|(_, top, second)| top - second)
    }

    fn top_two<T: AsRef<str>>(&self, prefix: &[T]) -> Option<(&str, u64, u64)> {
        let conts = self.get(prefix)?;
        let mut best: Option<(&str, u64)> = None;
        let mut second = 0;
        for (label, &c) in conts {
            match best {
                Some((_, b)) if c <= b => second = second.max(c),
                Some((_, b)) => {
                    second = b;
                    best = Some((label, c));
                }
                None => best = Some((label, c)),
            }
        }
        best.map(|(l, c)| (l, c, second))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Disagreement {
    pub prefix: Vec<String>,
    pub oracle: String,
    pub model: String,
    pub margin: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementReport {
    /// Prefixes seen in training with a margin of at least the threshold.
    pub evaluated: usize,
    pub agreed: usize,
    /// Prefixes skipped as unseen or below the margin.
    pub excluded: usize,
    pub disagreements: Vec<Disagreement>,
}

impl AgreementReport {
    pub fn fraction(&self) -> f64 {
        if self.evaluated == 0 {
            0.0
        } else {
            self.agreed as f64 / self.evaluated as f64
        }
    }
}

/// Compares the model's decoded prediction with the oracle's for every
/// prefix whose top continuation leads the runner-up by at least `margin`.
pub fn oracle_agreement<P, T>(
    model: &Model,
    oracle: &OracleModel,
    prefixes: &[P],
    margin: u64,
) -> Result<AgreementReport>
where
    P: AsRef<[T]>,
    T: AsRef<str>,
{
    if oracle.n() != model.config().n {
        return Err(Error::InvalidConfig(format!(
            "oracle counts {}-grams, model uses {}-grams",
            oracle.n(),
            model.config().n
        )));
    }
    let mut report = AgreementReport {
        evaluated: 0,
        agreed: 0,
        excluded: 0,
        disagreements: Vec::new(),
    };
    for p in prefixes {
        let p = p.as_ref();
        let Some((expected, top, second)) = oracle.top_two(p) else {
            report.excluded += 1;
            continue;
        };
        if top - second < margin {
            report.excluded += 1;
            continue;
        }
        report.evaluated += 1;
        let got = model.predict_next(p)?.predicted;
        if got == expected {
            report.agreed += 1;
        } else {
            report.disagreements.push(Disagreement {
                prefix: p.iter().map(|x| x.as_ref().to_owned()).collect(),
                oracle: expected.to_owned(),
                model: got,
                margin: top - second,
            });
        }
    }
    Ok(report)
}

/// Stationary distribution by power iteration from the uniform
/// distribution, stopping once successive iterates differ by less than
/// 1e-12 in L1 norm.
pub fn stationary_distribution(spec: &MarkovSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let k = spec.labels.len();
    let mut pi = vec![1.0 / k as f64; k];
    let mut next = vec![0.0; k];
    for _ in 0..STATIONARY_MAX_ITERS {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, row) in spec.transition.iter().enumerate() {
            for (j, &t) in row.iter().enumerate() {
                next[j] += pi[i] * t;
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let diff: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if diff < STATIONARY_TOL {
            return Ok(pi);
        }
    }
    Err(Error::Convergence(STATIONARY_MAX_ITERS))
}

/// `Σ_i π_i · max_j T_ij`: the accuracy of always predicting the most
/// likely successor under the stationary distribution.
pub fn bayes_optimal_accuracy(spec: &MarkovSpec) -> Result<f64> {
    let pi = stationary_distribution(spec)?;
    Ok(pi
        .iter()
        .zip(&spec.transition)
        .map(|(p, row)| p * row.iter().cloned().fold(f64::MIN, f64::max))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(labels: &[&str], t: Vec<Vec<f64>>) -> MarkovSpec {
        let k = labels.len();
        MarkovSpec {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            initial: vec![1.0 / k as f64; k],
            transition: t,
        }
    }

    #[test]
    fn two_state_chain() {
        let s = spec(&["a", "b"], vec![vec![0.9, 0.1], vec![0.2, 0.8]]);
        let pi = stationary_distribution(&s).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-10);
        let acc = bayes_optimal_accuracy(&s).unwrap();
        // 2/3 · 0.9 + 1/3 · 0.8
        assert!((acc - 2.6 / 3.0).abs() < 1e-10, "{acc}");
    }

    #[test]
    fn deterministic_and_uniform_chains() {
        let cyc = spec(
            &["a", "b", "c"],
            vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]],
        );
        assert_eq!(bayes_optimal_accuracy(&cyc).unwrap(), 1.0);
        let u = MarkovSpec::uniform(MarkovSpec::default_labels()).unwrap();
        assert!((bayes_optimal_accuracy(&u).unwrap() - 1.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn periodic_chain_from_skewed_start_still_uses_uniform_start() {
        // A 2-cycle never mixes, but uniform is already stationary.
        let s = spec(&["a", "b"], vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(stationary_distribution(&s).unwrap(), [0.5, 0.5]);
    }

    #[test]
    fn non_converging_chain_errors() {
        // Period-2 chain whose uniform start is not stationary.
        let s = spec(
            &["a", "b", "c"],
            vec![vec![0.0, 0.5, 0.5], vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]],
        );
        assert!(matches!(stationary_distribution(&s), Err(Error::Convergence(_))));
    }

    fn agreement_at(dim: usize) -> f64 {
        use crate::codebook::Codebook;
        use crate::model::ModelConfig;
        use rand::seq::IndexedRandom;
        use rand::SeedableRng;

        let labels = MarkovSpec::default_labels();
        let (mut agreed, mut evaluated) = (0, 0);
        for seed in 0..10 {
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let session: Vec<String> = (0..502).map(|_| labels.choose(&mut r).unwrap().clone()).collect();
            let cfg = ModelConfig {
                dim,
                seed,
                ..Default::default()
            };
            let cb = Codebook::build(labels.iter(), dim, seed).unwrap();
            let m = Model::train(cfg, cb, std::slice::from_ref(&session)).unwrap();
            let o = OracleModel::build(&[session], 3);
            let prefixes: Vec<Vec<String>> = o.prefixes().map(<[String]>::to_vec).collect();
            let rep = oracle_agreement(&m, &o, &prefixes, 1).unwrap();
            agreed += rep.agreed;
            evaluated += rep.evaluated;
        }
        agreed as f64 / evaluated as f64
    }

    #[test]
    fn agreement_depends_on_dimension() {
        let tiny = agreement_at(64);
        let large = agreement_at(20_000);
        assert!(large > 0.9, "{large}");
        assert!(tiny + 0.1 < large, "D=64 {tiny} vs D=20000 {large}");
    }

    #[test]
    fn single_window_model_agrees() {
        use crate::codebook::Codebook;
        use crate::model::ModelConfig;

        let w = [["a", "b", "c"]];
        let cb = Codebook::build(["a", "b", "c"], 1000, 0).unwrap();
        let m = Model::train(
            ModelConfig {
                dim: 1000,
                ..Default::default()
            },
            cb,
            &w,
        )
        .unwrap();
        let o = OracleModel::build(&w, 3);
        let rep = oracle_agreement(&m, &o, &[["a", "b"]], 1).unwrap();
        assert_eq!((rep.evaluated, rep.fraction()), (1, 1.0));
    }

    #[test]
    fn oracle_majority_and_unseen() {
        let o = OracleModel::build(&[["a", "b", "c"], ["a", "b", "c"], ["a", "b", "d"]], 3);
        assert_eq!(o.predict(&["a", "b"]), Some("c"));
        assert_eq!(o.predict(&["b", "c"]), None);
        assert_eq!(o.total_count(), 3);
    }

    #[test]
    fn oracle_counts_and_ties() {
        let sessions = vec![
            vec!["a", "b", "c", "a", "b", "d"],
            vec!["a", "b", "d", "a", "b", "c"],
            vec!["x", "y"],
        ];
        let o = OracleModel::build(&sessions, 3);
        assert_eq!(o.continuations(&["a", "b"]).unwrap().values().sum::<u64>(), 4);
        // c and d tie at two each.
        assert_eq!(o.predict(&["a", "b"]), Some("c"));
        assert_eq!(o.margin(&["a", "b"]), Some(0));
        assert_eq!(o.predict(&["b", "c"]), Some("a"));
        assert_eq!(o.margin(&["b", "c"]), Some(1));
        assert_eq!(o.predict(&["x", "y"]), None);
        assert!(!o.contains_prefix(&["q", "q"]));
    }
}
