#![allow(dead_code)]
//! Shared fixtures and independent oracles for the integration suites.

use std::collections::BTreeSet;

use pco_core::params::ModelParams;
use pco_core::population::{FailureEntry, FailureVector, GlobalState};
use pco_core::reduction::ReducedDtmc;
use pco_core::PopulationDtmc;

pub fn linear(n: u32, t: u32, r: u32, epsilon: f64, mu: f64) -> ModelParams {
    let params = ModelParams::linear(n, t, r, epsilon, mu);
    params.validate().expect("test parameters are valid");
    params
}

/// `None` stands for `⋆`.
pub fn to_entries(fvec: &FailureVector) -> Vec<Option<u32>> {
    fvec.entries()
        .iter()
        .map(|e| match e {
            FailureEntry::Star => None,
            FailureEntry::Count(f) => Some(*f),
        })
        .collect()
}

/// Recomputes the chain-reaction cascade by the defining descending
/// recursion, reading failure entries only at phases above the one under
/// evaluation. Returns (alpha, fire) indexed by phase (1-based).
pub fn oracle_cascade(
    state: &GlobalState,
    entries: &[Option<u32>],
    params: &ModelParams,
) -> (Vec<u32>, Vec<bool>) {
    let t = params.t;
    let mut alpha = vec![0u32; (t + 1) as usize];
    let mut fire = vec![false; (t + 1) as usize];
    for phase in (1..=t).rev() {
        let a = if phase == t {
            0
        } else {
            let above = phase + 1;
            alpha[above as usize]
                + match entries[(above - 1) as usize] {
                    // Saturating keeps over-count candidates (f > k) from
                    // panicking; the consistency filter rejects them anyway.
                    Some(f) if fire[above as usize] => state.count(above).saturating_sub(f),
                    _ => 0,
                }
        };
        alpha[phase as usize] = a;
        let update = 1 + params.refr(phase, params.pert(phase, a));
        fire[phase as usize] = update > t;
    }
    (alpha, fire)
}

/// Enumerates the valid failure vectors of `state` by filtering every
/// candidate in `({0..N} ∪ {⋆})^T` against the cascade recursion.
pub fn brute_force_failure_vectors(
    state: &GlobalState,
    params: &ModelParams,
) -> BTreeSet<Vec<Option<u32>>> {
    let t = params.t as usize;
    let n = params.n;
    let mut valid = BTreeSet::new();
    if state.count(params.t) == 0 {
        valid.insert(vec![None; t]);
        return valid;
    }

    let mut candidate: Vec<Option<u32>> = vec![None; t];
    loop {
        let (_, fire) = oracle_cascade(state, &candidate, params);
        let consistent = (1..=params.t).all(|phase| match candidate[(phase - 1) as usize] {
            Some(f) => fire[phase as usize] && f <= state.count(phase),
            None => !fire[phase as usize],
        });
        if consistent {
            valid.insert(candidate.clone());
        }

        let mut pos = 0;
        loop {
            if pos == t {
                return valid;
            }
            candidate[pos] = match candidate[pos] {
                None => Some(0),
                Some(f) if f < n => Some(f + 1),
                Some(_) => {
                    candidate[pos] = None;
                    pos += 1;
                    continue;
                }
            };
            break;
        }
    }
}

/// States of the full population model in which the network is both
/// synchronized and firing (`k_T = N`).
pub fn firing_synch_mask_full(pop: &PopulationDtmc) -> Vec<bool> {
    let t = pop.params().t;
    let n = pop.params().n;
    (0..pop.dtmc().n())
        .map(|i| pop.state(i).is_some_and(|s| s.count(t) == n))
        .collect()
}

/// The same target inside the reduced model.
pub fn firing_synch_mask_reduced(reduced: &ReducedDtmc) -> Vec<bool> {
    let t = reduced.params().t;
    let n = reduced.params().n;
    (0..reduced.dtmc().n())
        .map(|i| reduced.state(i).is_some_and(|s| s.count(t) == n))
        .collect()
}

/// Label-derived mask, panicking when the label is missing.
pub fn label_mask(dtmc: &pco_core::SparseDtmc, label: &str) -> Vec<bool> {
    dtmc.label_mask(label)
        .unwrap_or_else(|| panic!("label {label:?} is present"))
}
