//! Sparse discrete-time Markov chain representation and reward structures.

use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Tolerance for row-stochasticity checks.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Structural validation failure when assembling a [`SparseDtmc`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DtmcError {
    #[error("initial state {initial} out of range (n = {n})")]
    InitialOutOfRange { initial: usize, n: usize },
    #[error("transition target {target} out of range in row {row} (n = {n})")]
    TargetOutOfRange { row: usize, target: usize, n: usize },
    #[error("probability {p} out of [0,1] in row {row}")]
    ProbabilityOutOfRange { row: usize, p: f64 },
    #[error("row {row} sums to {sum}, not 1")]
    RowNotStochastic { row: usize, sum: f64 },
    #[error("duplicate transition {row} -> {target}")]
    DuplicateTransition { row: usize, target: usize },
    #[error("label {label:?} refers to state {state} out of range (n = {n})")]
    LabelOutOfRange {
        label: String,
        state: usize,
        n: usize,
    },
    #[error("model has no states")]
    Empty,
}

/// A finite DTMC: indexed states, a distinguished initial state, sparse
/// row-stochastic transitions, and a label map.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDtmc {
    n: usize,
    initial: usize,
    rows: Vec<Vec<(usize, f64)>>,
    labels: BTreeMap<String, BTreeSet<usize>>,
}

impl SparseDtmc {
    /// Assembles and validates a DTMC. Each row must sum to 1 within
    /// [`ROW_SUM_TOLERANCE`]; rows are stored sorted by target index.
    pub fn try_from_rows(
        initial: usize,
        mut rows: Vec<Vec<(usize, f64)>>,
        labels: BTreeMap<String, BTreeSet<usize>>,
    ) -> Result<Self, DtmcError> {
        let n = rows.len();
        if n == 0 {
            return Err(DtmcError::Empty);
        }
        if initial >= n {
            return Err(DtmcError::InitialOutOfRange { initial, n });
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|&(t, _)| t);
            let mut sum = 0.0;
            let mut prev: Option<usize> = None;
            for &(t, p) in row.iter() {
                if t >= n {
                    return Err(DtmcError::TargetOutOfRange {
                        row: i,
                        target: t,
                        n,
                    });
                }
                if prev == Some(t) {
                    return Err(DtmcError::DuplicateTransition { row: i, target: t });
                }
                prev = Some(t);
                if !p.is_finite() || !(0.0..=1.0 + ROW_SUM_TOLERANCE).contains(&p) {
                    return Err(DtmcError::ProbabilityOutOfRange { row: i, p });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(DtmcError::RowNotStochastic { row: i, sum });
            }
        }
        for (label, states) in &labels {
            if let Some(&s) = states.iter().find(|&&s| s >= n) {
                return Err(DtmcError::LabelOutOfRange {
                    label: label.clone(),
                    state: s,
                    n,
                });
            }
        }
        Ok(SparseDtmc {
            n,
            initial,
            rows,
            labels,
        })
    }

    /// Number of states.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Index of the initial state.
    pub fn initial(&self) -> usize {
        self.initial
    }

    /// Outgoing transitions of state `i`, sorted by target index.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Total number of stored transitions.
    pub fn transition_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `P(i, j)`, zero when the transition is absent.
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(t, _)| t)
            .map(|pos| self.rows[i][pos].1)
            .unwrap_or(0.0)
    }

    /// Label map: label → set of state indices.
    pub fn labels(&self) -> &BTreeMap<String, BTreeSet<usize>> {
        &self.labels
    }

    /// States carrying `label`, if the label exists.
    pub fn label_states(&self, label: &str) -> Option<&BTreeSet<usize>> {
        self.labels.get(label)
    }

    /// Boolean mask over states for `label`.
    pub fn label_mask(&self, label: &str) -> Option<Vec<bool>> {
        self.labels.get(label).map(|set| {
            let mut mask = vec![false; self.n];
            for &s in set {
                mask[s] = true;
            }
            mask
        })
    }

    /// Predecessor adjacency: for each state, the states with an edge into it.
    pub fn predecessor_lists(&self) -> Vec<Vec<usize>> {
        let mut preds = vec![Vec::new(); self.n];
        for (s, row) in self.rows.iter().enumerate() {
            for &(t, p) in row {
                if p > 0.0 {
                    preds[t].push(s);
                }
            }
        }
        preds
    }
}

/// State and transition rewards aligned with a DTMC's indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardStructure {
    /// `ρ(s)` per state index.
    pub state: Vec<f64>,
    /// `ι(s, s')` per transition; absent entries are zero.
    pub trans: BTreeMap<(usize, usize), f64>,
}

impl RewardStructure {
    /// All-zero rewards for an `n`-state model.
    pub fn zero(n: usize) -> Self {
        RewardStructure {
            state: vec![0.0; n],
            trans: BTreeMap::new(),
        }
    }

    /// State reward 1 everywhere (counts steps), zero transition rewards.
    pub fn unit_state(n: usize) -> Self {
        RewardStructure {
            state: vec![1.0; n],
            trans: BTreeMap::new(),
        }
    }

    /// `ρ(i)`.
    pub fn state_reward(&self, i: usize) -> f64 {
        self.state[i]
    }

    /// `ι(i, j)`, zero when absent.
    pub fn trans_reward(&self, i: usize, j: usize) -> f64 {
        self.trans.get(&(i, j)).copied().unwrap_or(0.0)
    }

    /// Checks that every transition-reward entry lies on a transition of
    /// `dtmc`; returns the first offending pair otherwise.
    pub fn validate_support(&self, dtmc: &SparseDtmc) -> Result<(), (usize, usize)> {
        for &(i, j) in self.trans.keys() {
            if i >= dtmc.n() || dtmc.prob(i, j) == 0.0 {
                return Err((i, j));
            }
        }
        Ok(())
    }
}
