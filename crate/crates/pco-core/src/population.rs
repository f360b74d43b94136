//! Population model: global states counting oscillators per phase, failure
//! vectors, chain-reaction resolution, successor computation, transition
//! probabilities, and the DTMC builder.

use crate::analysis::dtmc::SparseDtmc;
use crate::analysis::exact::ExactDtmc;
use crate::params::ModelParams;
use num::rational::BigRational;
use num::{BigInt, BigUint, One, ToPrimitive, Zero};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use thiserror::Error;

/// Errors from population-model probability computations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PopulationError {
    #[error("failure count {f} exceeds firing count {k}")]
    FailuresExceedFirings { k: u32, f: u32 },
}

/// A population-model state: `counts[Φ-1]` oscillators share phase `Φ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GlobalState {
    counts: Vec<u32>,
}

impl GlobalState {
    pub fn new(counts: Vec<u32>) -> Self {
        debug_assert!(!counts.is_empty());
        GlobalState { counts }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Number of phases `T`.
    pub fn phases(&self) -> u32 {
        self.counts.len() as u32
    }

    /// `k_Φ`, the number of oscillators at `phase` (1-based).
    pub fn count(&self, phase: u32) -> u32 {
        self.counts[(phase - 1) as usize]
    }

    /// Total number of oscillators.
    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// A state is firing iff the phase-`T` group is nonempty.
    pub fn is_firing(&self) -> bool {
        *self.counts.last().unwrap() > 0
    }

    /// All oscillators share one phase.
    pub fn is_synchronized(&self) -> bool {
        self.counts.contains(&self.total())
    }
}

impl fmt::Display for GlobalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.counts.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

/// One entry of a failure vector: `⋆` marks a phase whose group did not
/// fire, a count records how many of its firings failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FailureEntry {
    Star,
    Count(u32),
}

/// Per-phase record of broadcast failures; `⋆` entries form a prefix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FailureVector {
    entries: Vec<FailureEntry>,
}

impl FailureVector {
    pub fn new(entries: Vec<FailureEntry>) -> Self {
        let v = FailureVector { entries };
        debug_assert!(v.has_star_prefix_property());
        v
    }

    /// The vector `{⋆}^T` of a phase-T group that does not fire.
    pub fn all_star(t: u32) -> Self {
        FailureVector {
            entries: vec![FailureEntry::Star; t as usize],
        }
    }

    pub fn entries(&self) -> &[FailureEntry] {
        &self.entries
    }

    /// Entry for `phase` (1-based).
    pub fn entry(&self, phase: u32) -> FailureEntry {
        self.entries[(phase - 1) as usize]
    }

    /// Every `⋆` is preceded only by `⋆`.
    pub fn has_star_prefix_property(&self) -> bool {
        let mut seen_count = false;
        for e in &self.entries {
            match e {
                FailureEntry::Count(_) => seen_count = true,
                FailureEntry::Star => {
                    if seen_count {
                        return false;
                    }
                }
            }
        }
        true
    }
}

impl fmt::Display for FailureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            match e {
                FailureEntry::Star => write!(f, "*")?,
                FailureEntry::Count(c) => write!(f, "{c}")?,
            }
        }
        write!(f, ")")
    }
}

/// Per-phase results of the descending chain-reaction recursion for one
/// state / failure-vector pair.
#[derive(Debug, Clone)]
pub struct Cascade {
    alpha: Vec<u32>,
    update: Vec<u32>,
    fire: Vec<bool>,
}

impl Cascade {
    /// `α^Φ`: firings perceived by the phase-`Φ` group.
    pub fn alpha(&self, phase: u32) -> u32 {
        self.alpha[(phase - 1) as usize]
    }

    /// `update^Φ`: the would-be next phase of the phase-`Φ` group.
    pub fn update(&self, phase: u32) -> u32 {
        self.update[(phase - 1) as usize]
    }

    /// `fire^Φ`: whether the phase-`Φ` group fires.
    pub fn fires(&self, phase: u32) -> bool {
        self.fire[(phase - 1) as usize]
    }
}

/// Resolves the chain reaction for `state` under `fvec`, computing
/// `α^Φ`, `update^Φ` and `fire^Φ` for every phase in one descending pass.
pub fn cascade(state: &GlobalState, fvec: &FailureVector, params: &ModelParams) -> Cascade {
    let t = params.t;
    let mut alpha = vec![0u32; t as usize];
    let mut update = vec![0u32; t as usize];
    let mut fire = vec![false; t as usize];
    let mut a = 0u32; // α^T = 0
    for phase in (1..=t).rev() {
        let i = (phase - 1) as usize;
        alpha[i] = a;
        let u = 1 + params.refr(phase, params.pert(phase, a));
        update[i] = u;
        fire[i] = u > t;
        if let FailureEntry::Count(f) = fvec.entry(phase) {
            debug_assert!(f <= state.count(phase));
            if fire[i] {
                a += state.count(phase) - f;
            }
        }
    }
    Cascade {
        alpha,
        update,
        fire,
    }
}

/// `α^Φ`: the number of firings perceived by the phase-`Φ` group.
pub fn alpha(state: &GlobalState, fvec: &FailureVector, phase: u32, params: &ModelParams) -> u32 {
    cascade(state, fvec, params).alpha(phase)
}

/// `(update^Φ, fire^Φ)` for the phase-`Φ` group.
pub fn update_fire(
    state: &GlobalState,
    fvec: &FailureVector,
    phase: u32,
    params: &ModelParams,
) -> (u32, bool) {
    let c = cascade(state, fvec, params);
    (c.update(phase), c.fires(phase))
}

/// Phase transition function `τ`: where the phase-`Φ` group moves.
pub fn tau(state: &GlobalState, phase: u32, fvec: &FailureVector, params: &ModelParams) -> u32 {
    let c = cascade(state, fvec, params);
    if c.fires(phase) {
        1
    } else {
        c.update(phase)
    }
}

/// Successor state: every phase group moves to its `τ` target.
pub fn successor(state: &GlobalState, fvec: &FailureVector, params: &ModelParams) -> GlobalState {
    let c = cascade(state, fvec, params);
    let mut counts = vec![0u32; params.t as usize];
    for phase in 1..=params.t {
        let target = if c.fires(phase) { 1 } else { c.update(phase) };
        counts[(target - 1) as usize] += state.count(phase);
    }
    GlobalState::new(counts)
}

/// All failure vectors possible in `state`: the descending recursion
/// branches over `f ∈ 0..=k_Φ` while the phase-`Φ` group fires and pads the
/// remaining prefix with `⋆` once the chain reaction stops. A state whose
/// phase-`T` group is empty has exactly the all-`⋆` vector.
pub fn enumerate_failure_vectors(state: &GlobalState, params: &ModelParams) -> Vec<FailureVector> {
    let t = params.t;
    if state.count(t) == 0 {
        return vec![FailureVector::all_star(t)];
    }
    let mut out = Vec::new();
    let mut entries = vec![FailureEntry::Star; t as usize];
    descend(state, params, t, 0, &mut entries, &mut out);
    out
}

fn descend(
    state: &GlobalState,
    params: &ModelParams,
    phase: u32,
    alpha: u32,
    entries: &mut Vec<FailureEntry>,
    out: &mut Vec<FailureVector>,
) {
    if phase == 0 {
        out.push(FailureVector::new(entries.clone()));
        return;
    }
    let update = 1 + params.refr(phase, params.pert(phase, alpha));
    if update > params.t {
        let k = state.count(phase);
        for f in 0..=k {
            entries[(phase - 1) as usize] = FailureEntry::Count(f);
            descend(state, params, phase - 1, alpha + k - f, entries, out);
        }
        entries[(phase - 1) as usize] = FailureEntry::Star;
    } else {
        out.push(FailureVector::new(entries.clone()));
    }
}

fn binomial(k: u32, f: u32) -> u128 {
    let f = f.min(k - f);
    let mut acc: u128 = 1;
    for i in 1..=f as u128 {
        acc = acc * (k as u128 - f as u128 + i) / i;
    }
    acc
}

/// Probability of exactly `f` broadcast failures among `k` firings.
pub fn pfail(k: u32, f: u32, mu: f64) -> Result<f64, PopulationError> {
    if f > k {
        return Err(PopulationError::FailuresExceedFirings { k, f });
    }
    Ok(mu.powi(f as i32) * (1.0 - mu).powi((k - f) as i32) * binomial(k, f) as f64)
}

/// Exact-rational version of [`pfail`]; `mu` is taken at its exact binary
/// floating-point value.
pub fn pfail_exact(k: u32, f: u32, mu: f64) -> Result<BigRational, PopulationError> {
    if f > k {
        return Err(PopulationError::FailuresExceedFirings { k, f });
    }
    let mu = BigRational::from_float(mu).expect("mu is finite");
    let one = BigRational::one();
    let mut acc = BigRational::from(BigInt::from(binomial(k, f)));
    for _ in 0..f {
        acc *= &mu;
    }
    let comp = &one - &mu;
    for _ in 0..(k - f) {
        acc *= &comp;
    }
    Ok(acc)
}

/// Probability of a failure vector: product of [`pfail`] over its numeric
/// entries.
pub fn pfailvec(state: &GlobalState, fvec: &FailureVector, mu: f64) -> f64 {
    let mut p = 1.0;
    for phase in 1..=state.phases() {
        if let FailureEntry::Count(f) = fvec.entry(phase) {
            p *= pfail(state.count(phase), f, mu).expect("entry bounded by group size");
        }
    }
    p
}

/// Exact-rational version of [`pfailvec`].
pub fn pfailvec_exact(state: &GlobalState, fvec: &FailureVector, mu: f64) -> BigRational {
    let mut p = BigRational::one();
    for phase in 1..=state.phases() {
        if let FailureEntry::Count(f) = fvec.entry(phase) {
            p *= pfail_exact(state.count(phase), f, mu).expect("entry bounded by group size");
        }
    }
    p
}

/// All weak compositions of `N` into `T` parts, in lexicographic order.
pub fn enumerate_global_states(params: &ModelParams) -> Vec<GlobalState> {
    let mut out = Vec::new();
    let mut counts = vec![0u32; params.t as usize];
    fn fill(out: &mut Vec<GlobalState>, counts: &mut Vec<u32>, pos: usize, remaining: u32) {
        if pos + 1 == counts.len() {
            counts[pos] = remaining;
            out.push(GlobalState::new(counts.clone()));
            counts[pos] = 0;
            return;
        }
        for v in 0..=remaining {
            counts[pos] = v;
            fill(out, counts, pos + 1, remaining - v);
        }
        counts[pos] = 0;
    }
    fill(&mut out, &mut counts, 0, params.n);
    out
}

fn factorial(n: u32) -> BigUint {
    let mut acc = BigUint::one();
    for i in 2..=n {
        acc *= BigUint::from(i);
    }
    acc
}

/// Exact initial probability of `state`: `multinomial(N; k_1..k_T) / T^N`.
pub fn initial_probability_exact(state: &GlobalState, params: &ModelParams) -> BigRational {
    let mut numer = factorial(params.n);
    for &k in state.counts() {
        numer /= factorial(k);
    }
    let denom = BigUint::from(params.t).pow(params.n);
    BigRational::new(BigInt::from(numer), BigInt::from(denom))
}

/// Initial probability of `state` under the uniform phase assignment.
pub fn initial_probability(state: &GlobalState, params: &ModelParams) -> f64 {
    initial_probability_exact(state, params)
        .to_f64()
        .expect("ratio fits f64")
}

/// The population DTMC: all global states plus a distinguished initial
/// state `ι` at index 0; state `i ≥ 1` is `states()[i-1]`.
#[derive(Debug, Clone)]
pub struct PopulationDtmc {
    params: ModelParams,
    states: Vec<GlobalState>,
    index: HashMap<GlobalState, usize>,
    dtmc: SparseDtmc,
}

impl PopulationDtmc {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dtmc(&self) -> &SparseDtmc {
        &self.dtmc
    }

    /// Global states in lexicographic order; DTMC index is position + 1.
    pub fn states(&self) -> &[GlobalState] {
        &self.states
    }

    /// The global state at DTMC index `idx`, or `None` for `ι`.
    pub fn state(&self, idx: usize) -> Option<&GlobalState> {
        if idx == 0 {
            None
        } else {
            self.states.get(idx - 1)
        }
    }

    /// DTMC index of a global state.
    pub fn index_of(&self, state: &GlobalState) -> Option<usize> {
        self.index.get(state).copied()
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

fn synch_indices(states: &[GlobalState]) -> BTreeSet<usize> {
    states
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_synchronized())
        .map(|(i, _)| i + 1)
        .collect()
}

/// Builds the population DTMC over all global states plus `ι`.
pub fn build_population_dtmc(params: &ModelParams) -> PopulationDtmc {
    let states = enumerate_global_states(params);
    let index: HashMap<GlobalState, usize> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i + 1))
        .collect();

    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(states.len() + 1);
    rows.push(
        states
            .iter()
            .enumerate()
            .map(|(i, s)| (i + 1, initial_probability(s, params)))
            .filter(|&(_, p)| p > 0.0)
            .collect(),
    );
    for s in &states {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for fvec in enumerate_failure_vectors(s, params) {
            let p = pfailvec(s, &fvec, params.mu);
            if p > 0.0 {
                *acc.entry(index[&successor(s, &fvec, params)]).or_insert(0.0) += p;
            }
        }
        rows.push(acc.into_iter().collect());
    }

    let mut labels = BTreeMap::new();
    labels.insert("synch".to_string(), synch_indices(&states));
    let dtmc = SparseDtmc::try_from_rows(0, rows, labels).expect("rows stochastic by construction");
    PopulationDtmc {
        params: params.clone(),
        states,
        index,
        dtmc,
    }
}

/// Exact-rational population DTMC with the same state indexing as
/// [`build_population_dtmc`].
pub struct ExactPopulationDtmc {
    pub states: Vec<GlobalState>,
    pub dtmc: ExactDtmc,
}

/// Builds the population DTMC with exact rational probabilities.
pub fn build_population_dtmc_exact(params: &ModelParams) -> ExactPopulationDtmc {
    let states = enumerate_global_states(params);
    let index: HashMap<GlobalState, usize> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i + 1))
        .collect();

    let mut rows: Vec<Vec<(usize, BigRational)>> = Vec::with_capacity(states.len() + 1);
    rows.push(
        states
            .iter()
            .enumerate()
            .map(|(i, s)| (i + 1, initial_probability_exact(s, params)))
            .filter(|(_, p)| !p.is_zero())
            .collect(),
    );
    for s in &states {
        let mut acc: BTreeMap<usize, BigRational> = BTreeMap::new();
        for fvec in enumerate_failure_vectors(s, params) {
            let p = pfailvec_exact(s, &fvec, params.mu);
            if !p.is_zero() {
                *acc.entry(index[&successor(s, &fvec, params)])
                    .or_insert_with(BigRational::zero) += p;
            }
        }
        rows.push(acc.into_iter().collect());
    }

    let mut labels = BTreeMap::new();
    labels.insert("synch".to_string(), synch_indices(&states));
    let dtmc = ExactDtmc::try_from_rows(0, rows, labels).expect("rows stochastic by construction");
    ExactPopulationDtmc { states, dtmc }
}
