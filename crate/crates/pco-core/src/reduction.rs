//! Firing-state reduction of the population DTMC and the accompanying
//! reward transformation.
//!
//! Every non-firing global state has exactly one successor — the cyclic
//! phase shift — so runs through non-firing states are deterministic
//! corridors.  The reduced chain keeps only the firing states (plus the
//! initial state) and contracts each corridor into a single transition; a
//! reward transformation folds the rewards collected along a corridor into
//! the contracted transition so unbounded reachability-reward values are
//! preserved.

use crate::analysis::dtmc::{RewardStructure, SparseDtmc};
use crate::analysis::exact::{ExactDtmc, ExactRewardStructure};
use crate::params::ModelParams;
use crate::population::{ExactPopulationDtmc, GlobalState, PopulationDtmc};
use num::{BigRational, Zero};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

/// Errors from reduction operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReductionError {
    #[error("state {0} is not a firing state")]
    NotFiring(String),
    #[error("transition reward on ({from}, {to}) does not lie on a transition of the model")]
    RewardOffTransition { from: usize, to: usize },
}

/// Highest occupied phase of a global state.
pub fn delta_max(state: &GlobalState) -> u32 {
    let counts = state.counts();
    (1..=counts.len() as u32)
        .rev()
        .find(|&phase| counts[(phase - 1) as usize] > 0)
        .expect("a global state holds at least one oscillator")
}

/// Cyclic phase shift: every oscillator advances one phase. Defined on
/// non-firing states, where no group wraps around.
fn shift(state: &GlobalState) -> GlobalState {
    let counts = state.counts();
    debug_assert_eq!(*counts.last().expect("T >= 1"), 0, "shift of a firing state");
    let mut next = Vec::with_capacity(counts.len());
    next.push(0);
    next.extend_from_slice(&counts[..counts.len() - 1]);
    GlobalState::new(next)
}

/// Deterministic successor σ: the firing state reached by repeatedly
/// shifting; fixes firing states.
pub fn deterministic_successor(state: &GlobalState) -> GlobalState {
    let t = state.phases();
    let delta = delta_max(state);
    let counts = state.counts();
    let mut next = vec![0u32; (t - delta) as usize];
    next.extend_from_slice(&counts[..delta as usize]);
    GlobalState::new(next)
}

/// Number of deterministic shifts from `state` to `σ(state)`.
pub fn sigma_steps(state: &GlobalState) -> u32 {
    state.phases() - delta_max(state)
}

/// All non-firing predecessors of a firing state under σ: the down-shifts
/// of its occupied block.
pub fn predecessors(
    firing: &GlobalState,
    params: &ModelParams,
) -> Result<Vec<GlobalState>, ReductionError> {
    debug_assert_eq!(firing.phases(), params.t);
    if !firing.is_firing() {
        return Err(ReductionError::NotFiring(firing.to_string()));
    }
    let counts = firing.counts();
    let min_occupied = counts
        .iter()
        .position(|&k| k > 0)
        .expect("a global state holds at least one oscillator")
        + 1;
    let mut preds = Vec::with_capacity(min_occupied - 1);
    for j in 1..min_occupied {
        let mut shifted = counts[j..].to_vec();
        shifted.resize(counts.len(), 0);
        preds.push(GlobalState::new(shifted));
    }
    Ok(preds)
}

/// Contraction record for a removed non-firing state.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaChain {
    /// The firing state `σ(s)` the corridor ends in.
    pub target: GlobalState,
    /// Number of deterministic steps from `s` to `σ(s)`.
    pub steps: u32,
}

/// The reduced DTMC over firing states plus the initial state `ι` at index
/// 0; state `i ≥ 1` is `states()[i-1]`.
#[derive(Debug, Clone)]
pub struct ReducedDtmc {
    params: ModelParams,
    states: Vec<GlobalState>,
    index: HashMap<GlobalState, usize>,
    dtmc: SparseDtmc,
    chain: HashMap<GlobalState, SigmaChain>,
}

impl ReducedDtmc {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dtmc(&self) -> &SparseDtmc {
        &self.dtmc
    }

    /// Firing states in lexicographic order; DTMC index is position + 1.
    pub fn states(&self) -> &[GlobalState] {
        &self.states
    }

    /// The firing state at DTMC index `idx`, or `None` for `ι`.
    pub fn state(&self, idx: usize) -> Option<&GlobalState> {
        if idx == 0 {
            None
        } else {
            self.states.get(idx - 1)
        }
    }

    /// DTMC index of a firing state.
    pub fn index_of(&self, state: &GlobalState) -> Option<usize> {
        self.index.get(state).copied()
    }

    /// Contraction record for a removed non-firing state.
    pub fn chain(&self, state: &GlobalState) -> Option<&SigmaChain> {
        self.chain.get(state)
    }

    /// Display names per DTMC index: `init` for `ι`, the counts tuple
    /// otherwise.
    pub fn state_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.states.len() + 1);
        names.push("init".to_string());
        names.extend(self.states.iter().map(|s| s.to_string()));
        names
    }
}

fn firing_subset(states: &[GlobalState]) -> (Vec<GlobalState>, HashMap<GlobalState, usize>) {
    let firing: Vec<GlobalState> = states.iter().filter(|s| s.is_firing()).cloned().collect();
    let index = firing
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i + 1))
        .collect();
    (firing, index)
}

fn chain_map(states: &[GlobalState]) -> HashMap<GlobalState, SigmaChain> {
    states
        .iter()
        .filter(|s| !s.is_firing())
        .map(|s| {
            (
                s.clone(),
                SigmaChain {
                    target: deterministic_successor(s),
                    steps: sigma_steps(s),
                },
            )
        })
        .collect()
}

/// Builds the reduced DTMC by folding every transition target through σ.
pub fn build_reduced_dtmc(pop: &PopulationDtmc, params: &ModelParams) -> ReducedDtmc {
    let (firing, index) = firing_subset(pop.states());
    let chain = chain_map(pop.states());

    let reduce_row = |row: &[(usize, f64)]| -> Vec<(usize, f64)> {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for &(t, p) in row {
            let target = pop.state(t).expect("ι has no incoming transitions");
            let sigma = deterministic_successor(target);
            *acc.entry(index[&sigma]).or_insert(0.0) += p;
        }
        acc.into_iter().collect()
    };

    let mut rows = Vec::with_capacity(firing.len() + 1);
    rows.push(reduce_row(pop.dtmc().row(0)));
    for f in &firing {
        let full_idx = pop.index_of(f).expect("firing state is a population state");
        rows.push(reduce_row(pop.dtmc().row(full_idx)));
    }

    let mut labels = BTreeMap::new();
    labels.insert(
        "synch".to_string(),
        firing
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_synchronized())
            .map(|(i, _)| i + 1)
            .collect::<BTreeSet<usize>>(),
    );
    let dtmc = SparseDtmc::try_from_rows(0, rows, labels).expect("rows stochastic by construction");
    ReducedDtmc {
        params: params.clone(),
        states: firing,
        index,
        dtmc,
        chain,
    }
}

/// Exact-rational reduced DTMC with the same state indexing as
/// [`build_reduced_dtmc`].
pub struct ExactReducedDtmc {
    pub states: Vec<GlobalState>,
    pub dtmc: ExactDtmc,
}

/// Builds the reduced DTMC with exact rational probabilities.
pub fn build_reduced_dtmc_exact(pop: &ExactPopulationDtmc) -> ExactReducedDtmc {
    let (firing, index) = firing_subset(&pop.states);
    let full_index: HashMap<&GlobalState, usize> = pop
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| (s, i + 1))
        .collect();

    let reduce_row = |row: &[(usize, BigRational)]| -> Vec<(usize, BigRational)> {
        let mut acc: BTreeMap<usize, BigRational> = BTreeMap::new();
        for (t, p) in row {
            let target = &pop.states[*t - 1];
            let sigma = deterministic_successor(target);
            *acc.entry(index[&sigma]).or_insert_with(BigRational::zero) += p;
        }
        acc.into_iter().collect()
    };

    let mut rows = Vec::with_capacity(firing.len() + 1);
    rows.push(reduce_row(pop.dtmc.row(0)));
    for f in &firing {
        rows.push(reduce_row(pop.dtmc.row(full_index[f])));
    }

    let mut labels = BTreeMap::new();
    labels.insert(
        "synch".to_string(),
        firing
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_synchronized())
            .map(|(i, _)| i + 1)
            .collect::<BTreeSet<usize>>(),
    );
    let dtmc = ExactDtmc::try_from_rows(0, rows, labels).expect("rows stochastic by construction");
    ExactReducedDtmc {
        states: firing,
        dtmc,
    }
}

/// Total reward along the deterministic corridor that starts at population
/// state `start_idx` and ends at the first firing state, excluding that
/// firing state's own reward.
fn corridor_reward(
    pop: &PopulationDtmc,
    rewards: &RewardStructure,
    start_idx: usize,
) -> (usize, f64) {
    let mut cur = pop
        .state(start_idx)
        .expect("corridors never start at ι")
        .clone();
    let mut cur_idx = start_idx;
    let mut total = 0.0;
    while !cur.is_firing() {
        let next = shift(&cur);
        let next_idx = pop
            .index_of(&next)
            .expect("shift of a population state is a population state");
        total += rewards.state_reward(cur_idx) + rewards.trans_reward(cur_idx, next_idx);
        cur = next;
        cur_idx = next_idx;
    }
    (cur_idx, total)
}

/// Transforms a reward structure on the population DTMC into one on the
/// reduced DTMC with identical expected reachability rewards for firing
/// targets.
pub fn transform_rewards(
    pop: &PopulationDtmc,
    reduced: &ReducedDtmc,
    rewards: &RewardStructure,
) -> Result<RewardStructure, ReductionError> {
    if let Err((from, to)) = rewards.validate_support(pop.dtmc()) {
        return Err(ReductionError::RewardOffTransition { from, to });
    }

    let mut out = RewardStructure::zero(reduced.dtmc().n());
    for (i, f) in reduced.states().iter().enumerate() {
        let full_idx = pop.index_of(f).expect("firing state is a population state");
        out.state[i + 1] = rewards.state_reward(full_idx);
    }

    for (i, f1) in reduced.states().iter().enumerate() {
        let full_idx = pop.index_of(f1).expect("firing state is a population state");
        for &(t, _) in pop.dtmc().row(full_idx) {
            let first_hop = rewards.trans_reward(full_idx, t);
            let (end_idx, corridor) = corridor_reward(pop, rewards, t);
            let end_state = pop.state(end_idx).expect("corridor ends at a state");
            let reduced_target = reduced
                .index_of(end_state)
                .expect("corridor ends at a firing state");
            let total = first_hop + corridor;
            if total != 0.0 {
                out.trans.insert((i + 1, reduced_target), total);
            }
        }
    }

    let mut weighted: BTreeMap<usize, f64> = BTreeMap::new();
    for &(t, p) in pop.dtmc().row(0) {
        let first_hop = rewards.state_reward(0) + rewards.trans_reward(0, t);
        let (end_idx, corridor) = corridor_reward(pop, rewards, t);
        let end_state = pop.state(end_idx).expect("corridor ends at a state");
        let reduced_target = reduced
            .index_of(end_state)
            .expect("corridor ends at a firing state");
        *weighted.entry(reduced_target).or_insert(0.0) += p * (first_hop + corridor);
    }
    for (reduced_target, numerator) in weighted {
        let mass = reduced.dtmc().prob(0, reduced_target);
        if mass > 0.0 && numerator != 0.0 {
            out.trans.insert((0, reduced_target), numerator / mass);
        }
    }
    Ok(out)
}

/// Exact-rational reward transformation mirroring [`transform_rewards`].
pub fn transform_rewards_exact(
    pop: &ExactPopulationDtmc,
    reduced: &ExactReducedDtmc,
    rewards: &ExactRewardStructure,
) -> ExactRewardStructure {
    let full_index: HashMap<&GlobalState, usize> = pop
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| (s, i + 1))
        .collect();
    let reduced_index: HashMap<&GlobalState, usize> = reduced
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| (s, i + 1))
        .collect();

    let corridor = |start_idx: usize| -> (usize, BigRational) {
        let mut cur = pop.states[start_idx - 1].clone();
        let mut cur_idx = start_idx;
        let mut total = BigRational::zero();
        while !cur.is_firing() {
            let next = shift(&cur);
            let next_idx = full_index[&next];
            total += rewards.state_reward(cur_idx) + rewards.trans_reward(cur_idx, next_idx);
            cur = next;
            cur_idx = next_idx;
        }
        (cur_idx, total)
    };

    let mut out = ExactRewardStructure::zero(reduced.dtmc.n());
    for (i, f) in reduced.states.iter().enumerate() {
        out.state[i + 1] = rewards.state_reward(full_index[f]);
    }

    for (i, f1) in reduced.states.iter().enumerate() {
        let full_idx = full_index[f1];
        for (t, _) in pop.dtmc.row(full_idx) {
            let first_hop = rewards.trans_reward(full_idx, *t);
            let (end_idx, walked) = corridor(*t);
            let reduced_target = reduced_index[&pop.states[end_idx - 1]];
            let total = first_hop + walked;
            if !total.is_zero() {
                out.trans.insert((i + 1, reduced_target), total);
            }
        }
    }

    let mut weighted: BTreeMap<usize, BigRational> = BTreeMap::new();
    for (t, p) in pop.dtmc.row(0) {
        let first_hop = rewards.state_reward(0) + rewards.trans_reward(0, *t);
        let (end_idx, walked) = corridor(*t);
        let reduced_target = reduced_index[&pop.states[end_idx - 1]];
        *weighted
            .entry(reduced_target)
            .or_insert_with(BigRational::zero) += p * (first_hop + walked);
    }
    for (reduced_target, numerator) in weighted {
        let mass = reduced.dtmc.prob(0, reduced_target);
        if !mass.is_zero() && !numerator.is_zero() {
            out.trans.insert((0, reduced_target), numerator / mass);
        }
    }
    out
}

/// Closed form for the reduced state count: `1 + T^{(N−1)}/(N−1)!` with the
/// rising factorial `x^{(n)} = x(x+1)…(x+n−1)`.
pub fn reduced_state_count(n: u32, t: u32) -> u128 {
    let mut num: u128 = 1;
    for i in 0..(n - 1) as u128 {
        num *= t as u128 + i;
    }
    let mut den: u128 = 1;
    for i in 1..n as u128 {
        den *= i;
    }
    1 + num / den
}
