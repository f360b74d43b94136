//! Structural invariants checked over randomized inputs: the deterministic
//! contraction, formula grammar round-trips, solver monotonicity, the
//! multinomial initial distribution, and the concrete round shape.

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pco_core::analysis::pctl::{Bowtie, PathFormula};
use pco_core::analysis::{evaluate, parse_pctl, prob_bounded_until, prob_unbounded_until, EvalResult};
use pco_core::concrete::{build_concrete_dtmc, DEFAULT_STATE_BUDGET};
use pco_core::population::{build_population_dtmc, initial_probability};
use pco_core::reduction::{
    build_reduced_dtmc, delta_max, deterministic_successor, predecessors, sigma_steps,
};
use pco_core::{GlobalState, PctlFormula};

use common::{label_mask, linear};

/// Advances every oscillator one phase; the inverse of a predecessor
/// down-shift, defined whenever nothing wraps.
fn oracle_advance(state: &GlobalState) -> GlobalState {
    let counts = state.counts();
    assert_eq!(*counts.last().unwrap(), 0, "advance of a firing state");
    let mut next = vec![0];
    next.extend_from_slice(&counts[..counts.len() - 1]);
    GlobalState::new(next)
}

fn state_strategy() -> impl Strategy<Value = GlobalState> {
    (2u32..=8, 1usize..=6).prop_flat_map(|(t, n)| {
        proptest::collection::vec(1u32..=t, n).prop_map(move |phases| {
            let mut counts = vec![0u32; t as usize];
            for p in phases {
                counts[(p - 1) as usize] += 1;
            }
            GlobalState::new(counts)
        })
    })
}

proptest! {
    #[test]
    fn sigma_contracts_to_a_firing_state(state in state_strategy()) {
        let image = deterministic_successor(&state);
        prop_assert!(image.is_firing());
        prop_assert_eq!(deterministic_successor(&image).clone(), image.clone());
        prop_assert_eq!(sigma_steps(&image), 0);
        prop_assert_eq!(state.is_firing(), sigma_steps(&state) == 0);

        // Walking the advance map one step at a time must land on the same
        // firing state after exactly `sigma_steps` shifts.
        let mut walked = state.clone();
        for _ in 0..sigma_steps(&state) {
            walked = oracle_advance(&walked);
        }
        prop_assert_eq!(walked, image);
        prop_assert_eq!(sigma_steps(&state), state.phases() - delta_max(&state));
    }
}

fn bowtie_strategy() -> impl Strategy<Value = Bowtie> + Clone {
    prop_oneof![
        Just(Bowtie::Lt),
        Just(Bowtie::Le),
        Just(Bowtie::Ge),
        Just(Bowtie::Gt)
    ]
}

fn path_strategy(
    inner: impl Strategy<Value = PctlFormula> + Clone + 'static,
) -> impl Strategy<Value = PathFormula> {
    prop_oneof![
        inner.clone().prop_map(|f| PathFormula::Next(Box::new(f))),
        (inner.clone(), inner, proptest::option::of(0u64..=200)).prop_map(
            |(lhs, rhs, bound)| PathFormula::Until {
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                bound,
            }
        ),
    ]
}

/// Nested state formulas: probability and reward operators always carry a
/// threshold, since the query forms are only grammatical at top level.
fn nested_formula_strategy() -> impl Strategy<Value = PctlFormula> + Clone {
    let leaf = prop_oneof![
        Just(PctlFormula::True),
        Just(PctlFormula::False),
        "[a-z][a-z0-9_]{0,8}".prop_map(PctlFormula::Ap),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            inner.clone().prop_map(|f| PctlFormula::Not(Box::new(f))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| PctlFormula::And(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| PctlFormula::Or(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| PctlFormula::Implies(Box::new(a), Box::new(b))),
            ((bowtie_strategy(), 0.0..=1.0f64), path_strategy(inner.clone()))
                .prop_map(|(bound, path)| PctlFormula::Prob {
                    bound: Some(bound),
                    path,
                }),
            ((bowtie_strategy(), 0.0..=100.0f64), inner).prop_map(|(bound, target)| {
                PctlFormula::Reward {
                    bound: Some(bound),
                    target: Box::new(target),
                }
            }),
        ]
    })
}

/// Top-level formulas additionally allow the `P=?` / `R=?` query forms.
fn formula_strategy() -> impl Strategy<Value = PctlFormula> {
    prop_oneof![
        nested_formula_strategy(),
        path_strategy(nested_formula_strategy()).prop_map(|path| PctlFormula::Prob {
            bound: None,
            path,
        }),
        nested_formula_strategy().prop_map(|target| PctlFormula::Reward {
            bound: None,
            target: Box::new(target),
        }),
    ]
}

proptest! {
    #[test]
    fn formula_display_parses_back(formula in formula_strategy()) {
        let text = formula.to_string();
        let reparsed = parse_pctl(&text);
        prop_assert_eq!(reparsed, Ok(formula), "rendered form: {}", text);
    }
}

proptest! {
    #[test]
    fn linear_prf_is_monotone(
        t in 2u32..=12,
        r_frac in 0.0..=1.0f64,
        epsilon in 0.01..=0.9f64,
        alpha in 0u32..=10,
        phase in 1u32..=12,
        delta in 0u32..=12,
    ) {
        let phase = phase.min(t);
        let r = (r_frac * t as f64) as u32;
        let params = linear(3, t, r, epsilon, 0.1);
        prop_assert_eq!(params.pert(phase, 0), 0, "no perceived firing, no perturbation");
        if alpha > 0 {
            prop_assert!(params.pert(phase, alpha) >= params.pert(phase, alpha - 1));
        }
        if phase > 1 {
            prop_assert!(params.pert(phase, alpha) >= params.pert(phase - 1, alpha));
        }
        // Inside the refractory period the phase absorbs the perturbation;
        // outside it the full delta applies.
        let expected = if phase <= r { phase } else { phase + delta };
        prop_assert_eq!(params.refr(phase, delta), expected);
    }
}

#[test]
fn predecessors_partition_the_non_firing_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for _ in 0..20 {
        let n = rng.gen_range(1..=4u32);
        let t = rng.gen_range(2..=6u32);
        let params = linear(n, t, rng.gen_range(0..=t), rng.gen_range(0.05..0.5), 0.2);
        let pop = build_population_dtmc(&params);
        let reduced = build_reduced_dtmc(&pop, &params);

        let mut seen: BTreeSet<GlobalState> = BTreeSet::new();
        let mut non_firing = 0usize;
        for state in pop.states() {
            if state.is_firing() {
                for (j, pred) in predecessors(state, &params)
                    .expect("state is firing")
                    .iter()
                    .enumerate()
                {
                    assert!(!pred.is_firing(), "predecessors are non-firing");
                    assert_eq!(
                        &deterministic_successor(pred),
                        state,
                        "down-shift must contract back to its firing state"
                    );
                    assert_eq!(sigma_steps(pred) as usize, j + 1);
                    assert!(seen.insert(pred.clone()), "{pred:?} has two firing images");
                }
            } else {
                non_firing += 1;
                let chain = reduced.chain(state).expect("every non-firing state has a chain");
                assert_eq!(chain.target, deterministic_successor(state));
                assert_eq!(chain.steps, sigma_steps(state));
            }
        }
        assert_eq!(
            seen.len(),
            non_firing,
            "N={} T={}: down-shifts must cover every non-firing state",
            params.n,
            params.t
        );
    }
}

#[test]
fn bounded_until_is_monotone_and_below_the_limit() {
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    for _ in 0..12 {
        let n = rng.gen_range(2..=4u32);
        let t = rng.gen_range(2..=5u32);
        let params = linear(
            n,
            t,
            rng.gen_range(0..=1u32),
            rng.gen_range(0.1..0.4),
            rng.gen_range(0.0..=1.0f64),
        );
        let pop = build_population_dtmc(&params);
        let dtmc = pop.dtmc();
        let all = vec![true; dtmc.n()];
        let synch = label_mask(dtmc, "synch");
        let (unbounded, _) = prob_unbounded_until(dtmc, &all, &synch).expect("solve");
        let mut previous = vec![0.0; dtmc.n()];
        for k in [0, 1, 2, 5, 10, 50] {
            let bounded = prob_bounded_until(dtmc, &all, &synch, k);
            for s in 0..dtmc.n() {
                assert!(
                    bounded[s] >= previous[s] - 1e-12,
                    "horizon {k} state {s}: bounded value decreased"
                );
                assert!(
                    bounded[s] <= unbounded[s] + 1e-10,
                    "horizon {k} state {s}: bounded {} above unbounded {}",
                    bounded[s],
                    unbounded[s]
                );
            }
            previous = bounded;
        }
    }
}

#[test]
fn probability_thresholds_agree_with_the_query_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    for _ in 0..10 {
        let n = rng.gen_range(2..=4u32);
        let t = rng.gen_range(2..=5u32);
        let params = linear(n, t, 1, 0.3, rng.gen_range(0.0..=1.0f64));
        let pop = build_population_dtmc(&params);
        let query = parse_pctl("P=? [ F \"synch\" ]").unwrap();
        let value = match evaluate(pop.dtmc(), None, &query).unwrap().result {
            EvalResult::Value(v) => v,
            other => panic!("unexpected result {other:?}"),
        };
        for theta in [0.05, 0.25, 0.5, 0.75, 0.95] {
            if (value - theta).abs() < 1e-9 {
                continue; // undecidable at solver precision, skip the boundary
            }
            let threshold = parse_pctl(&format!("P>={theta} [ F \"synch\" ]")).unwrap();
            let sat = match evaluate(pop.dtmc(), None, &threshold).unwrap().result {
                EvalResult::Sat(mask) => mask[pop.dtmc().initial()],
                other => panic!("unexpected result {other:?}"),
            };
            assert_eq!(sat, value >= theta, "theta {theta} against value {value}");
        }
    }
}

#[test]
fn initial_row_is_the_multinomial_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(74);
    for _ in 0..10 {
        let n = rng.gen_range(1..=3u32);
        let t = rng.gen_range(2..=4u32);
        let params = linear(n, t, 1, 0.3, 0.2);
        let pop = build_population_dtmc(&params);
        let dtmc = pop.dtmc();

        // Brute-force histogram over all T^N phase assignments.
        let total = (t as u64).pow(n) as f64;
        let mut histogram: std::collections::BTreeMap<Vec<u32>, u64> = Default::default();
        let mut assignment = vec![1u32; n as usize];
        loop {
            let mut counts = vec![0u32; t as usize];
            for &p in &assignment {
                counts[(p - 1) as usize] += 1;
            }
            *histogram.entry(counts).or_insert(0) += 1;
            let mut pos = assignment.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                if assignment[pos] < t {
                    assignment[pos] += 1;
                    break;
                }
                assignment[pos] = 1;
            }
            if pos == 0 && assignment[0] == 1 {
                break;
            }
        }

        let mut row_sum = 0.0;
        for &(idx, p) in dtmc.row(dtmc.initial()) {
            let state = pop.state(idx).expect("initial row targets model states");
            let expected = histogram[state.counts()] as f64 / total;
            assert!(
                (p - expected).abs() < 1e-14,
                "N={n} T={t} {state:?}: row {p} vs histogram {expected}"
            );
            assert!(
                (initial_probability(state, &params) - expected).abs() < 1e-14,
                "closed-form initial probability disagrees with the histogram"
            );
            row_sum += p;
        }
        assert!((row_sum - 1.0).abs() < 1e-12);
        assert_eq!(
            dtmc.row(dtmc.initial()).len(),
            histogram.len(),
            "initial row must reach every phase-count class exactly once"
        );
    }
}

#[test]
fn concrete_rounds_have_exactly_n_plus_2_steps() {
    for (n, t) in [(1, 3), (2, 3), (2, 4), (3, 3)] {
        let params = linear(n, t, 1, 0.3, 0.2);
        let concrete = build_concrete_dtmc(&params, DEFAULT_STATE_BUDGET).expect("small instance");
        let dtmc = concrete.dtmc();
        let round_len = (n + 2) as usize;
        for start in 1..dtmc.n() {
            if !concrete
                .state(start)
                .is_some_and(|s| s.is_round_start())
            {
                continue;
            }
            let mut frontier = vec![start];
            for depth in 1..=round_len {
                let mut next = Vec::new();
                for s in frontier {
                    for &(dst, _) in dtmc.row(s) {
                        let at_start = concrete
                            .state(dst)
                            .is_some_and(|c| c.is_round_start());
                        if depth < round_len {
                            assert!(
                                !at_start,
                                "N={n} T={t}: round-start state reappears after {depth} steps"
                            );
                        } else {
                            assert!(
                                at_start,
                                "N={n} T={t}: round did not close after {round_len} steps"
                            );
                        }
                        next.push(dst);
                    }
                }
                next.sort_unstable();
                next.dedup();
                frontier = next;
            }
        }
    }
}
