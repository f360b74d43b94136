//! The counting abstraction from concrete to population states and a
//! computational correspondence checker.
//!
//! A concrete round runs from one round-start state (environment and all
//! oscillators in start mode) through the environment reset, one transition
//! per oscillator, and the simultaneous phase update — `N + 2` steps in
//! total.  Forward probability propagation over those steps, aggregated by
//! the abstraction `h`, must reproduce the population model's one-step
//! transition probabilities exactly; the checker verifies this pairwise and
//! compares the two models' synchronization probabilities.

use crate::analysis::solver::prob_unbounded_until;
use crate::analysis::AnalysisError;
use crate::concrete::{ConcreteDtmc, ConcreteState};
use crate::params::ModelParams;
use crate::population::{GlobalState, PopulationDtmc};
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use thiserror::Error;

/// Errors from abstraction and correspondence checking.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbstractionError {
    #[error("state {0} is not a round-start state")]
    NotRoundStart(String),
    #[error("models were built from different parameters")]
    ParamsMismatch,
    #[error("round propagation left the round-start set at {0} after {1} steps")]
    EscapedRound(String, u32),
    #[error("population model lacks global state {0}")]
    MissingPopulationState(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// Counts the oscillators sharing each phase: `h(s)_Φ = |{u : phase(u) = Φ}|`.
/// Defined on round-start states only.
pub fn abstract_state(
    state: &ConcreteState,
    params: &ModelParams,
) -> Result<GlobalState, AbstractionError> {
    if !state.is_round_start() {
        return Err(AbstractionError::NotRoundStart(state.to_string()));
    }
    let mut counts = vec![0u32; params.t as usize];
    for &(phase, _) in &state.oscillators {
        counts[(phase - 1) as usize] += 1;
    }
    Ok(GlobalState::new(counts))
}

/// One checked transition pair: the population probability against the
/// aggregated concrete round probability.
#[derive(Debug, Clone, Serialize)]
pub struct PairProbability {
    pub from: String,
    pub to: String,
    pub population: f64,
    pub concrete: f64,
}

/// Outcome of a correspondence check.
#[derive(Debug, Clone, Serialize)]
pub struct AbstractionReport {
    /// All compared transition pairs, including the initial distribution
    /// (`from = "init"`).
    pub pairs: Vec<PairProbability>,
    /// Largest absolute difference over all pairs.
    pub max_discrepancy: f64,
    /// `P [ F "synch" ]` at the population model's initial state.
    pub sync_population: f64,
    /// `P [ F "synch" ]` at the concrete model's initial state.
    pub sync_concrete: f64,
}

impl fmt::Display for AbstractionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:<24} {:>18} {:>18}", "from", "to", "population", "concrete")?;
        for pair in &self.pairs {
            writeln!(
                f,
                "{:<24} {:<24} {:>18} {:>18}",
                pair.from, pair.to, pair.population, pair.concrete
            )?;
        }
        writeln!(f, "max discrepancy: {:e}", self.max_discrepancy)?;
        writeln!(
            f,
            "sync probability: population {} vs concrete {}",
            self.sync_population, self.sync_concrete
        )
    }
}

fn propagate(
    concrete: &ConcreteDtmc,
    start: usize,
    steps: u32,
) -> HashMap<usize, f64> {
    let mut dist: HashMap<usize, f64> = HashMap::from([(start, 1.0)]);
    for _ in 0..steps {
        let mut next: HashMap<usize, f64> = HashMap::with_capacity(dist.len() * 2);
        for (&i, &p) in &dist {
            for &(j, q) in concrete.dtmc().row(i) {
                *next.entry(j).or_insert(0.0) += p * q;
            }
        }
        dist = next;
    }
    dist
}

fn aggregate_by_h(
    concrete: &ConcreteDtmc,
    params: &ModelParams,
    dist: &HashMap<usize, f64>,
    steps: u32,
) -> Result<BTreeMap<GlobalState, f64>, AbstractionError> {
    let mut agg: BTreeMap<GlobalState, f64> = BTreeMap::new();
    for (&i, &p) in dist {
        let state = concrete
            .state(i)
            .ok_or_else(|| AbstractionError::EscapedRound("init".to_string(), steps))?;
        if !state.is_round_start() {
            return Err(AbstractionError::EscapedRound(state.to_string(), steps));
        }
        *agg.entry(abstract_state(state, params)?).or_insert(0.0) += p;
    }
    Ok(agg)
}

fn compare_rows(
    from: &str,
    population_row: &BTreeMap<GlobalState, f64>,
    concrete_agg: &BTreeMap<GlobalState, f64>,
    pairs: &mut Vec<PairProbability>,
    max_discrepancy: &mut f64,
) {
    let mut targets: Vec<&GlobalState> = population_row.keys().collect();
    for key in concrete_agg.keys() {
        if !population_row.contains_key(key) {
            targets.push(key);
        }
    }
    targets.sort();
    for target in targets {
        let population = population_row.get(target).copied().unwrap_or(0.0);
        let concrete = concrete_agg.get(target).copied().unwrap_or(0.0);
        let diff = (population - concrete).abs();
        if diff > *max_discrepancy {
            *max_discrepancy = diff;
        }
        pairs.push(PairProbability {
            from: from.to_string(),
            to: target.to_string(),
            population,
            concrete,
        });
    }
}

fn population_row_by_state(
    population: &PopulationDtmc,
    idx: usize,
) -> BTreeMap<GlobalState, f64> {
    population
        .dtmc()
        .row(idx)
        .iter()
        .map(|&(t, p)| {
            (
                population
                    .state(t)
                    .expect("population transitions never re-enter ι")
                    .clone(),
                p,
            )
        })
        .collect()
}

fn sync_probability(dtmc: &crate::analysis::dtmc::SparseDtmc) -> Result<f64, AnalysisError> {
    let target = dtmc
        .label_mask("synch")
        .ok_or_else(|| AnalysisError::UnknownLabel("synch".to_string()))?;
    let all = vec![true; dtmc.n()];
    let (values, _) = prob_unbounded_until(dtmc, &all, &target)?;
    Ok(values[dtmc.initial()])
}

/// Verifies that the population model is the exact counting abstraction of
/// the concrete model: the initial distributions and every round's
/// transition probabilities agree under `h`, as do the synchronization
/// probabilities.
pub fn check_correspondence(
    concrete: &ConcreteDtmc,
    population: &PopulationDtmc,
) -> Result<AbstractionReport, AbstractionError> {
    if concrete.params() != population.params() {
        return Err(AbstractionError::ParamsMismatch);
    }
    let params = concrete.params();
    let steps = params.n + 2;

    let mut pairs = Vec::new();
    let mut max_discrepancy = 0.0;

    let mut initial_agg: BTreeMap<GlobalState, f64> = BTreeMap::new();
    for &(i, p) in concrete.dtmc().row(0) {
        let state = concrete
            .state(i)
            .expect("initial transitions target real states");
        *initial_agg
            .entry(abstract_state(state, params)?)
            .or_insert(0.0) += p;
    }
    let initial_pop = population_row_by_state(population, 0);
    compare_rows(
        "init",
        &initial_pop,
        &initial_agg,
        &mut pairs,
        &mut max_discrepancy,
    );

    let mut representatives: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
    for idx in 1..concrete.dtmc().n() {
        let state = concrete.state(idx).expect("non-initial index");
        if state.is_round_start() {
            let phases: Vec<u32> = state.oscillators.iter().map(|&(p, _)| p).collect();
            representatives.entry(phases).or_insert(idx);
        }
    }

    for (_, rep_idx) in representatives {
        let rep = concrete.state(rep_idx).expect("representative index");
        let from_global = abstract_state(rep, params)?;
        let pop_idx = population
            .index_of(&from_global)
            .ok_or_else(|| AbstractionError::MissingPopulationState(from_global.to_string()))?;
        let dist = propagate(concrete, rep_idx, steps);
        let agg = aggregate_by_h(concrete, params, &dist, steps)?;
        let pop_row = population_row_by_state(population, pop_idx);
        compare_rows(
            &rep.to_string(),
            &pop_row,
            &agg,
            &mut pairs,
            &mut max_discrepancy,
        );
    }

    let sync_population = sync_probability(population.dtmc())?;
    let sync_concrete = sync_probability(concrete.dtmc())?;

    Ok(AbstractionReport {
        pairs,
        max_discrepancy,
        sync_population,
        sync_concrete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concrete::{build_concrete_dtmc, Mode, DEFAULT_STATE_BUDGET};
    use crate::population::build_population_dtmc;

    #[test]
    fn abstraction_counts_phases() {
        let params = ModelParams::linear(8, 10, 2, 0.115, 0.1);
        let s = ConcreteState::from_phases(&[3, 3, 4, 7, 7, 7, 7, 7]);
        let h = abstract_state(&s, &params).unwrap();
        assert_eq!(h.counts(), &[0, 0, 2, 1, 0, 0, 5, 0, 0, 0]);
        assert_eq!(h.total(), 8);
    }

    #[test]
    fn abstraction_of_synchronized_state_is_a_unit_vector() {
        let params = ModelParams::linear(3, 4, 0, 0.1, 0.1);
        let s = ConcreteState::from_phases(&[2, 2, 2]);
        let h = abstract_state(&s, &params).unwrap();
        assert_eq!(h.counts(), &[0, 3, 0, 0]);
    }

    #[test]
    fn abstraction_rejects_mid_round_states() {
        let params = ModelParams::linear(1, 2, 0, 0.3, 0.3);
        let mut s = ConcreteState::from_phases(&[1]);
        s.env_mode = Mode::Update;
        assert!(matches!(
            abstract_state(&s, &params),
            Err(AbstractionError::NotRoundStart(_))
        ));
    }

    #[test]
    fn correspondence_holds_on_reference_instance() {
        let params = ModelParams::linear(2, 3, 1, 0.4, 0.2);
        let concrete = build_concrete_dtmc(&params, DEFAULT_STATE_BUDGET).unwrap();
        let population = build_population_dtmc(&params);
        let report = check_correspondence(&concrete, &population).unwrap();
        assert!(
            report.max_discrepancy < 1e-10,
            "max discrepancy {}",
            report.max_discrepancy
        );
        assert!(
            (report.sync_population - report.sync_concrete).abs() < 1e-10,
            "sync {} vs {}",
            report.sync_population,
            report.sync_concrete
        );
        assert!(report.pairs.iter().any(|p| p.from == "init"));
    }

    #[test]
    fn sync_probability_under_certain_failure_is_uniform_coincidence() {
        let params = ModelParams::linear(2, 3, 0, 0.4, 1.0);
        let concrete = build_concrete_dtmc(&params, DEFAULT_STATE_BUDGET).unwrap();
        let population = build_population_dtmc(&params);
        let report = check_correspondence(&concrete, &population).unwrap();
        let expected = (params.t as f64).powi(1 - params.n as i32);
        assert!((report.sync_population - expected).abs() < 1e-12);
        assert!((report.sync_concrete - expected).abs() < 1e-12);
    }

    #[test]
    fn h_covers_every_population_state() {
        let params = ModelParams::linear(2, 3, 0, 0.1, 0.2);
        let concrete = build_concrete_dtmc(&params, DEFAULT_STATE_BUDGET).unwrap();
        let population = build_population_dtmc(&params);
        let mut seen = std::collections::HashSet::new();
        for idx in 1..concrete.dtmc().n() {
            let s = concrete.state(idx).unwrap();
            if s.is_round_start() {
                seen.insert(abstract_state(s, &params).unwrap());
            }
        }
        for q in population.states() {
            assert!(seen.contains(q), "missing {q}");
        }
    }

    #[test]
    fn mismatched_parameters_are_rejected() {
        let a = ModelParams::linear(2, 3, 0, 0.1, 0.2);
        let b = ModelParams::linear(2, 3, 1, 0.1, 0.2);
        let concrete = build_concrete_dtmc(&a, DEFAULT_STATE_BUDGET).unwrap();
        let population = build_population_dtmc(&b);
        assert!(matches!(
            check_correspondence(&concrete, &population),
            Err(AbstractionError::ParamsMismatch)
        ));
    }

    #[test]
    fn report_serializes_to_json() {
        let params = ModelParams::linear(2, 3, 0, 0.1, 0.2);
        let concrete = build_concrete_dtmc(&params, DEFAULT_STATE_BUDGET).unwrap();
        let population = build_population_dtmc(&params);
        let report = check_correspondence(&concrete, &population).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("max_discrepancy"));
        assert!(json.contains("init"));
    }
}
