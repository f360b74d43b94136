//! The concrete per-oscillator DTMC: an explicit environment process with a
//! firing counter plus one process per oscillator.
//!
//! Rounds are driven by modes.  The environment resets its counter, then the
//! oscillators leave *start* mode one at a time — phase-`T` oscillators
//! broadcast (successfully or not), then remaining oscillators are handled
//! from the highest phase downwards, firing if the accumulated perturbation
//! pushes them past `T` — and finally one simultaneous phase update closes
//! the round.

use crate::analysis::dtmc::SparseDtmc;
use crate::params::ModelParams;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use thiserror::Error;

/// Default cap on the number of reachable states.
pub const DEFAULT_STATE_BUDGET: usize = 5_000_000;

/// Process mode within a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Start,
    Update,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Start => write!(f, "s"),
            Mode::Update => write!(f, "u"),
        }
    }
}

/// A state of the network: environment mode and counter plus per-oscillator
/// phase and mode.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConcreteState {
    pub env_mode: Mode,
    pub counter: u32,
    pub oscillators: Vec<(u32, Mode)>,
}

impl ConcreteState {
    /// All-start state with the given phases and a zeroed counter.
    pub fn from_phases(phases: &[u32]) -> Self {
        ConcreteState {
            env_mode: Mode::Start,
            counter: 0,
            oscillators: phases.iter().map(|&p| (p, Mode::Start)).collect(),
        }
    }

    /// True when every oscillator sits at the same phase.
    pub fn is_synchronized(&self) -> bool {
        let first = self.oscillators[0].0;
        self.oscillators.iter().all(|&(p, _)| p == first)
    }

    /// True when the environment and every oscillator are in start mode.
    pub fn is_round_start(&self) -> bool {
        self.env_mode == Mode::Start
            && self.oscillators.iter().all(|&(_, m)| m == Mode::Start)
    }

    fn start_indices(&self) -> Vec<usize> {
        self.oscillators
            .iter()
            .enumerate()
            .filter(|(_, &(_, m))| m == Mode::Start)
            .map(|(i, _)| i)
            .collect()
    }
}

impl fmt::Display for ConcreteState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(({},{})", self.env_mode, self.counter)?;
        for &(phase, mode) in &self.oscillators {
            write!(f, ",({phase},{mode})")?;
        }
        write!(f, ")")
    }
}

/// Errors from concrete-model construction.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConcreteError {
    #[error("state budget of {budget} states exceeded during construction")]
    BudgetExceeded { budget: usize },
    #[error("invalid initial distribution: {0}")]
    InvalidInitial(String),
}

/// Enumerates all successors of `state` with their probabilities, in a
/// canonical order: oscillators by index, broadcast success before failure.
pub fn concrete_transitions(
    state: &ConcreteState,
    params: &ModelParams,
) -> Vec<(ConcreteState, f64)> {
    let t = params.t;
    let mu = params.mu;

    if state.env_mode == Mode::Start {
        let mut next = state.clone();
        next.env_mode = Mode::Update;
        next.counter = 0;
        return vec![(next, 1.0)];
    }

    let starts = state.start_indices();
    if starts.is_empty() {
        return vec![(simultaneous_update(state, params), 1.0)];
    }

    let fire_group: Vec<usize> = starts
        .iter()
        .copied()
        .filter(|&i| state.oscillators[i].0 == t)
        .collect();
    if !fire_group.is_empty() {
        return broadcast_transitions(state, &fire_group, mu);
    }

    let any_at_t = state.oscillators.iter().any(|&(p, _)| p == t);
    if !any_at_t {
        let share = 1.0 / starts.len() as f64;
        return starts
            .iter()
            .map(|&i| {
                let mut next = state.clone();
                next.oscillators[i].1 = Mode::Update;
                (next, share)
            })
            .collect();
    }

    let top_phase = starts
        .iter()
        .map(|&i| state.oscillators[i].0)
        .max()
        .expect("start set is nonempty");
    let group: Vec<usize> = starts
        .iter()
        .copied()
        .filter(|&i| state.oscillators[i].0 == top_phase)
        .collect();
    let perturbed = top_phase + params.pert(top_phase, state.counter) + 1;
    if perturbed > t {
        broadcast_transitions(state, &group, mu)
    } else {
        let share = 1.0 / group.len() as f64;
        group
            .iter()
            .map(|&i| {
                let mut next = state.clone();
                next.oscillators[i].1 = Mode::Update;
                (next, share)
            })
            .collect()
    }
}

/// Success/failure branches for each member of a broadcasting group; a
/// success increments the counter. Zero-probability branches are omitted.
fn broadcast_transitions(
    state: &ConcreteState,
    group: &[usize],
    mu: f64,
) -> Vec<(ConcreteState, f64)> {
    let share = 1.0 / group.len() as f64;
    let mut out = Vec::with_capacity(group.len() * 2);
    for &i in group {
        if mu < 1.0 {
            let mut next = state.clone();
            next.oscillators[i].1 = Mode::Update;
            next.counter += 1;
            out.push((next, (1.0 - mu) * share));
        }
        if mu > 0.0 {
            let mut next = state.clone();
            next.oscillators[i].1 = Mode::Update;
            out.push((next, mu * share));
        }
    }
    out
}

/// The simultaneous phase update closing a round: phase-`T` oscillators wrap
/// to 1, refractory phases step by 1, the rest apply the accumulated
/// perturbation and wrap if they exceed `T`. The counter survives until the
/// next environment reset.
fn simultaneous_update(state: &ConcreteState, params: &ModelParams) -> ConcreteState {
    let t = params.t;
    let c = state.counter;
    let oscillators = state
        .oscillators
        .iter()
        .map(|&(phase, _)| {
            let next = if phase == t {
                1
            } else if phase <= params.r {
                phase + 1
            } else {
                let bumped = phase + params.pert(phase, c) + 1;
                if bumped <= t {
                    bumped
                } else {
                    1
                }
            };
            (next, Mode::Start)
        })
        .collect();
    ConcreteState {
        env_mode: Mode::Start,
        counter: c,
        oscillators,
    }
}

/// The concrete DTMC: a synthetic initial state `ι` at index 0 distributing
/// over phase assignments; state `i ≥ 1` is `states()[i-1]`.
#[derive(Debug, Clone)]
pub struct ConcreteDtmc {
    params: ModelParams,
    states: Vec<ConcreteState>,
    index: HashMap<ConcreteState, usize>,
    dtmc: SparseDtmc,
}

impl ConcreteDtmc {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dtmc(&self) -> &SparseDtmc {
        &self.dtmc
    }

    /// Reachable states in BFS encounter order; DTMC index is position + 1.
    pub fn states(&self) -> &[ConcreteState] {
        &self.states
    }

    /// The state at DTMC index `idx`, or `None` for `ι`.
    pub fn state(&self, idx: usize) -> Option<&ConcreteState> {
        if idx == 0 {
            None
        } else {
            self.states.get(idx - 1)
        }
    }

    /// DTMC index of a state.
    pub fn index_of(&self, state: &ConcreteState) -> Option<usize> {
        self.index.get(state).copied()
    }

    /// Display names per DTMC index.
    pub fn state_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.states.len() + 1);
        names.push("init".to_string());
        names.extend(self.states.iter().map(|s| s.to_string()));
        names
    }
}

/// Builds the concrete DTMC from the uniform initial phase assignment:
/// every `phases ∈ {1..T}^N` with probability `1/T^N`.
pub fn build_concrete_dtmc(
    params: &ModelParams,
    budget: usize,
) -> Result<ConcreteDtmc, ConcreteError> {
    let n = params.n as usize;
    let t = params.t as u64;
    let assignments = t
        .checked_pow(params.n)
        .filter(|&a| (a as usize) < budget)
        .ok_or(ConcreteError::BudgetExceeded { budget })?;
    let weight = 1.0 / assignments as f64;
    let mut initial = Vec::with_capacity(assignments as usize);
    let mut phases = vec![1u32; n];
    loop {
        initial.push((phases.clone(), weight));
        let mut pos = n;
        while pos > 0 {
            pos -= 1;
            if phases[pos] < params.t {
                phases[pos] += 1;
                break;
            }
            phases[pos] = 1;
            if pos == 0 {
                return build_concrete_dtmc_with_initial(params, &initial, budget);
            }
        }
    }
}

/// Builds the concrete DTMC from an explicit distribution over phase
/// assignments (all-start states with zeroed counters).
pub fn build_concrete_dtmc_with_initial(
    params: &ModelParams,
    initial: &[(Vec<u32>, f64)],
    budget: usize,
) -> Result<ConcreteDtmc, ConcreteError> {
    let mut total = 0.0;
    for (phases, p) in initial {
        if phases.len() != params.n as usize {
            return Err(ConcreteError::InvalidInitial(format!(
                "assignment has {} phases, expected {}",
                phases.len(),
                params.n
            )));
        }
        if let Some(&bad) = phases.iter().find(|&&p| p < 1 || p > params.t) {
            return Err(ConcreteError::InvalidInitial(format!(
                "phase {bad} out of 1..{}",
                params.t
            )));
        }
        if !(0.0..=1.0).contains(p) {
            return Err(ConcreteError::InvalidInitial(format!(
                "probability {p} out of [0,1]"
            )));
        }
        total += p;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(ConcreteError::InvalidInitial(format!(
            "probabilities sum to {total}, not 1"
        )));
    }

    let mut states: Vec<ConcreteState> = Vec::new();
    let mut index: HashMap<ConcreteState, usize> = HashMap::new();
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut intern = |s: ConcreteState,
                      states: &mut Vec<ConcreteState>,
                      queue: &mut VecDeque<usize>|
     -> Result<usize, ConcreteError> {
        if let Some(&i) = index.get(&s) {
            return Ok(i);
        }
        if states.len() + 1 >= budget {
            return Err(ConcreteError::BudgetExceeded { budget });
        }
        states.push(s.clone());
        let i = states.len();
        index.insert(s, i);
        queue.push_back(i);
        Ok(i)
    };

    let mut init_row: BTreeMap<usize, f64> = BTreeMap::new();
    for (phases, p) in initial {
        if *p == 0.0 {
            continue;
        }
        let i = intern(
            ConcreteState::from_phases(phases),
            &mut states,
            &mut queue,
        )?;
        *init_row.entry(i).or_insert(0.0) += p;
    }

    let mut rows: Vec<Vec<(usize, f64)>> = vec![init_row.into_iter().collect()];
    while let Some(i) = queue.pop_front() {
        let transitions = concrete_transitions(&states[i - 1], params);
        let mut row: BTreeMap<usize, f64> = BTreeMap::new();
        for (next, p) in transitions {
            let j = intern(next, &mut states, &mut queue)?;
            *row.entry(j).or_insert(0.0) += p;
        }
        debug_assert_eq!(rows.len(), i);
        rows.push(row.into_iter().collect());
    }

    let synch: BTreeSet<usize> = states
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_synchronized())
        .map(|(i, _)| i + 1)
        .collect();
    let mut labels = BTreeMap::new();
    labels.insert("synch".to_string(), synch);
    let dtmc = SparseDtmc::try_from_rows(0, rows, labels).expect("rows stochastic by construction");
    Ok(ConcreteDtmc {
        params: params.clone(),
        states,
        index,
        dtmc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_n1t2() -> ModelParams {
        ModelParams::linear(1, 2, 0, 0.3, 0.3)
    }

    #[test]
    fn env_reset_is_the_only_start_mode_transition() {
        let params = ModelParams::linear(2, 3, 0, 0.1, 0.2);
        let s = ConcreteState::from_phases(&[1, 3]);
        let succ = concrete_transitions(&s, &params);
        assert_eq!(succ.len(), 1);
        let (next, p) = &succ[0];
        assert_eq!(*p, 1.0);
        assert_eq!(next.env_mode, Mode::Update);
        assert_eq!(next.counter, 0);
        assert_eq!(next.oscillators, s.oscillators);
    }

    #[test]
    fn firing_splits_into_success_and_failure() {
        let params = params_n1t2();
        let s = ConcreteState {
            env_mode: Mode::Update,
            counter: 0,
            oscillators: vec![(2, Mode::Start)],
        };
        let succ = concrete_transitions(&s, &params);
        assert_eq!(succ.len(), 2);
        assert_eq!(succ[0].0.counter, 1);
        assert!((succ[0].1 - 0.7).abs() < 1e-15);
        assert_eq!(succ[1].0.counter, 0);
        assert!((succ[1].1 - 0.3).abs() < 1e-15);
        for (next, _) in &succ {
            assert_eq!(next.oscillators[0], (2, Mode::Update));
        }
    }

    #[test]
    fn no_failure_branch_when_mu_zero_and_no_success_when_mu_one() {
        let s = ConcreteState {
            env_mode: Mode::Update,
            counter: 0,
            oscillators: vec![(2, Mode::Start)],
        };
        let zero = concrete_transitions(&s, &ModelParams::linear(1, 2, 0, 0.3, 0.0));
        assert_eq!(zero.len(), 1);
        assert_eq!(zero[0].0.counter, 1);
        assert_eq!(zero[0].1, 1.0);
        let one = concrete_transitions(&s, &ModelParams::linear(1, 2, 0, 0.3, 1.0));
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].0.counter, 0);
        assert_eq!(one[0].1, 1.0);
    }

    #[test]
    fn mode_updates_are_uniform_when_nothing_can_fire() {
        let params = ModelParams::linear(3, 5, 0, 0.1, 0.2);
        let s = ConcreteState {
            env_mode: Mode::Update,
            counter: 0,
            oscillators: vec![(1, Mode::Start), (4, Mode::Start), (2, Mode::Start)],
        };
        let succ = concrete_transitions(&s, &params);
        assert_eq!(succ.len(), 3);
        for (next, p) in &succ {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
            assert_eq!(next.counter, 0);
            assert_eq!(
                next.oscillators
                    .iter()
                    .filter(|&&(_, m)| m == Mode::Update)
                    .count(),
                1
            );
        }
    }

    #[test]
    fn perturbation_respects_the_phase_order() {
        // One oscillator fired (phase 9, update mode); among start modes the
        // highest phase must move next.
        let params = ModelParams::linear(4, 9, 2, 0.4, 0.0);
        let s = ConcreteState {
            env_mode: Mode::Update,
            counter: 1,
            oscillators: vec![
                (9, Mode::Update),
                (8, Mode::Start),
                (5, Mode::Start),
                (2, Mode::Start),
            ],
        };
        let succ = concrete_transitions(&s, &params);
        assert_eq!(succ.len(), 1);
        let (next, p) = &succ[0];
        assert_eq!(*p, 1.0);
        assert_eq!(next.oscillators[1], (8, Mode::Update));
        assert_eq!(next.counter, 2);
    }

    #[test]
    fn chain_reaction_round_matches_hand_computation() {
        let params = ModelParams::linear(4, 9, 2, 0.4, 0.0);
        let mut state = ConcreteState::from_phases(&[9, 8, 5, 2]);
        for _ in 0..6 {
            let succ = concrete_transitions(&state, &params);
            assert_eq!(succ.len(), 1, "deterministic at {state}");
            state = succ.into_iter().next().unwrap().0;
        }
        assert_eq!(state.env_mode, Mode::Start);
        assert_eq!(state.counter, 3);
        let phases: Vec<u32> = state.oscillators.iter().map(|&(p, _)| p).collect();
        assert_eq!(phases, vec![1, 1, 1, 3]);
        assert!(state.is_round_start());
    }

    #[test]
    fn refractory_oscillator_only_increments() {
        let params = ModelParams::linear(2, 9, 2, 0.4, 0.0);
        let s = ConcreteState {
            env_mode: Mode::Update,
            counter: 1,
            oscillators: vec![(9, Mode::Update), (2, Mode::Update)],
        };
        let succ = concrete_transitions(&s, &params);
        assert_eq!(succ.len(), 1);
        let phases: Vec<u32> = succ[0].0.oscillators.iter().map(|&(p, _)| p).collect();
        assert_eq!(phases, vec![1, 3]);
    }

    #[test]
    fn update_phase_keeps_counter_until_next_reset() {
        let params = params_n1t2();
        let s = ConcreteState {
            env_mode: Mode::Update,
            counter: 1,
            oscillators: vec![(2, Mode::Update)],
        };
        let succ = concrete_transitions(&s, &params);
        assert_eq!(succ.len(), 1);
        let next = &succ[0].0;
        assert_eq!(next.env_mode, Mode::Start);
        assert_eq!(next.counter, 1);
        assert_eq!(next.oscillators, vec![(1, Mode::Start)]);
    }

    #[test]
    fn n1t2_reachable_closure_has_nine_states() {
        let params = params_n1t2();
        let model = build_concrete_dtmc(&params, DEFAULT_STATE_BUDGET).unwrap();
        assert_eq!(model.dtmc().n(), 9);
        let row0 = model.dtmc().row(0);
        assert_eq!(row0.len(), 2);
        for &(_, p) in row0 {
            assert!((p - 0.5).abs() < 1e-15);
        }
        for idx in 1..model.dtmc().n() {
            let s = model.state(idx).unwrap();
            let all_update = s.env_mode == Mode::Update
                && s.oscillators.iter().all(|&(_, m)| m == Mode::Update);
            if all_update {
                assert_eq!(model.dtmc().row(idx).len(), 1);
            }
        }
    }

    #[test]
    fn counter_never_exceeds_oscillator_count() {
        let params = ModelParams::linear(2, 3, 1, 0.1, 0.2);
        let model = build_concrete_dtmc(&params, DEFAULT_STATE_BUDGET).unwrap();
        for s in model.states() {
            assert!(s.counter <= params.n);
        }
    }

    #[test]
    fn synch_label_covers_equal_phase_states() {
        let params = ModelParams::linear(2, 3, 0, 0.1, 0.2);
        let model = build_concrete_dtmc(&params, DEFAULT_STATE_BUDGET).unwrap();
        let mask = model.dtmc().label_mask("synch").unwrap();
        assert!(!mask[0]);
        for (idx, &labeled) in mask.iter().enumerate().skip(1) {
            let s = model.state(idx).unwrap();
            assert_eq!(labeled, s.is_synchronized());
        }
    }

    #[test]
    fn budget_is_enforced() {
        let params = ModelParams::linear(2, 3, 0, 0.1, 0.2);
        let err = build_concrete_dtmc(&params, 5).unwrap_err();
        assert_eq!(err, ConcreteError::BudgetExceeded { budget: 5 });
        assert!(err.to_string().contains("5"));
    }

    #[test]
    fn custom_initial_distribution_is_validated() {
        let params = ModelParams::linear(2, 3, 0, 0.1, 0.2);
        let bad_len = build_concrete_dtmc_with_initial(&params, &[(vec![1], 1.0)], 1000);
        assert!(matches!(bad_len, Err(ConcreteError::InvalidInitial(_))));
        let bad_phase = build_concrete_dtmc_with_initial(&params, &[(vec![0, 1], 1.0)], 1000);
        assert!(matches!(bad_phase, Err(ConcreteError::InvalidInitial(_))));
        let bad_sum = build_concrete_dtmc_with_initial(&params, &[(vec![1, 1], 0.5)], 1000);
        assert!(matches!(bad_sum, Err(ConcreteError::InvalidInitial(_))));
        let ok = build_concrete_dtmc_with_initial(&params, &[(vec![3, 3], 1.0)], 1000).unwrap();
        assert!(ok.dtmc().n() > 1);
    }

    #[test]
    fn round_structure_between_resets() {
        // From any round-start state, N broadcast/mode steps plus the reset
        // and the simultaneous update return to a round-start state.
        let params = ModelParams::linear(2, 3, 1, 0.3, 0.5);
        let model = build_concrete_dtmc(&params, DEFAULT_STATE_BUDGET).unwrap();
        for idx in 1..model.dtmc().n() {
            let s = model.state(idx).unwrap();
            if !s.is_round_start() {
                continue;
            }
            // Depth N+2 from a round-start state lands on round-start states.
            let mut frontier = vec![idx];
            for _ in 0..params.n as usize + 2 {
                let mut next = Vec::new();
                for &i in &frontier {
                    for &(j, _) in model.dtmc().row(i) {
                        next.push(j);
                    }
                }
                next.sort_unstable();
                next.dedup();
                frontier = next;
            }
            for &i in &frontier {
                assert!(model.state(i).unwrap().is_round_start());
            }
        }
    }
}
