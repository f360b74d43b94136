//! Numeric solvers for reachability probabilities and expected rewards.
//!
//! Unbounded quantities are computed by graph-based qualitative
//! precomputation (the probability-0 and probability-1 sets) followed by
//! Gauss–Seidel iteration on the remaining states.  A dense
//! Gaussian-elimination path is available as an independent cross-check for
//! small models.

use super::dtmc::{RewardStructure, SparseDtmc};
use super::AnalysisError;

/// Relative-residual convergence threshold for Gauss–Seidel. Tight enough
/// that expected rewards in the hundreds still land within 1e-10 absolute
/// of a direct solve.
pub const GS_TOLERANCE: f64 = 1e-14;
/// Iteration cap for Gauss–Seidel.
pub const GS_MAX_ITERATIONS: u64 = 1_000_000;
/// Largest model the dense cross-check solver accepts.
pub const DENSE_LIMIT: usize = 2000;

/// Convergence statistics of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    /// Final relative residual (max-norm update over the last sweep).
    pub residual: f64,
    /// Number of Gauss–Seidel sweeps performed.
    pub iterations: u64,
}

impl SolveStats {
    /// Combines statistics from successive solves: residuals worst-case,
    /// iteration counts summed.
    pub fn merge(&mut self, other: SolveStats) {
        self.residual = self.residual.max(other.residual);
        self.iterations += other.iterations;
    }
}

/// One-step probability of entering `target`: `Σ_{t ∈ target} P(s,t)`.
pub fn prob_next(dtmc: &SparseDtmc, target: &[bool]) -> Vec<f64> {
    (0..dtmc.n())
        .map(|s| {
            dtmc.row(s)
                .iter()
                .filter(|(t, _)| target[*t])
                .map(|(_, p)| p)
                .sum()
        })
        .collect()
}

/// Step-bounded until probabilities `P(s ⊨ a U^{≤k} b)` via backward
/// recursion.
pub fn prob_bounded_until(dtmc: &SparseDtmc, a: &[bool], b: &[bool], k: u64) -> Vec<f64> {
    let n = dtmc.n();
    let mut x: Vec<f64> = (0..n).map(|s| if b[s] { 1.0 } else { 0.0 }).collect();
    for _ in 0..k {
        let mut next = x.clone();
        for s in 0..n {
            if b[s] || !a[s] {
                continue;
            }
            next[s] = dtmc.row(s).iter().map(|&(t, p)| p * x[t]).sum();
        }
        x = next;
    }
    x
}

/// States with a path to `from` whose strictly earlier states all satisfy
/// `through` (states already in `from` are included).
fn backward_reachable(dtmc: &SparseDtmc, through: &[bool], from: &[bool]) -> Vec<bool> {
    let preds = dtmc.predecessor_lists();
    let mut reach = from.to_vec();
    let mut stack: Vec<usize> = (0..dtmc.n()).filter(|&s| from[s]).collect();
    while let Some(s) = stack.pop() {
        for &p in &preds[s] {
            if !reach[p] && through[p] {
                reach[p] = true;
                stack.push(p);
            }
        }
    }
    reach
}

/// Probability-0 and probability-1 sets for the until `a U b`.
pub fn qualitative_until(dtmc: &SparseDtmc, a: &[bool], b: &[bool]) -> (Vec<bool>, Vec<bool>) {
    let n = dtmc.n();
    let can_reach = backward_reachable(dtmc, a, b);
    let prob0: Vec<bool> = (0..n).map(|s| !can_reach[s]).collect();
    let a_not_b: Vec<bool> = (0..n).map(|s| a[s] && !b[s]).collect();
    let escapes = backward_reachable(dtmc, &a_not_b, &prob0);
    let prob1: Vec<bool> = (0..n).map(|s| !escapes[s]).collect();
    (prob0, prob1)
}

/// Gauss–Seidel sweep on `x[s] = base[s] + Σ_t P(s,t)·x[t]` restricted to
/// `unknown`; other entries of `x` are fixed boundary values.
fn gauss_seidel(
    dtmc: &SparseDtmc,
    unknown: &[usize],
    base: &[f64],
    x: &mut [f64],
) -> Result<SolveStats, AnalysisError> {
    let mut residual = f64::INFINITY;
    let mut previous;
    for iteration in 1..=GS_MAX_ITERATIONS {
        previous = residual;
        residual = 0.0;
        for &s in unknown {
            let mut sum = base[s];
            let mut self_prob = 0.0;
            for &(t, p) in dtmc.row(s) {
                if t == s {
                    self_prob = p;
                } else {
                    sum += p * x[t];
                }
            }
            let new = if self_prob < 1.0 {
                sum / (1.0 - self_prob)
            } else {
                x[s]
            };
            let delta = (new - x[s]).abs() / f64::max(1.0, new.abs());
            if delta > residual {
                residual = delta;
            }
            x[s] = new;
        }
        // A per-sweep change of d under contraction rate rho leaves a true
        // error of about d·rho/(1−rho), so slowly mixing chains must iterate
        // well past the point where the raw sweep delta looks converged.
        if residual <= GS_TOLERANCE {
            let rate = if previous.is_finite() && previous > 0.0 {
                (residual / previous).min(1.0 - 1e-6)
            } else {
                0.0
            };
            if residual * rate / (1.0 - rate) <= GS_TOLERANCE {
                return Ok(SolveStats {
                    residual,
                    iterations: iteration,
                });
            }
        }
    }
    Err(AnalysisError::NonConvergence {
        residual,
        iterations: GS_MAX_ITERATIONS,
    })
}

/// Unbounded until probabilities `P(s ⊨ a U b)` with qualitative
/// precomputation and Gauss–Seidel on the remaining states.
pub fn prob_unbounded_until(
    dtmc: &SparseDtmc,
    a: &[bool],
    b: &[bool],
) -> Result<(Vec<f64>, SolveStats), AnalysisError> {
    let n = dtmc.n();
    let (prob0, prob1) = qualitative_until(dtmc, a, b);
    let mut x: Vec<f64> = (0..n).map(|s| if prob1[s] { 1.0 } else { 0.0 }).collect();
    let unknown: Vec<usize> = (0..n).filter(|&s| !prob0[s] && !prob1[s]).collect();
    if unknown.is_empty() {
        return Ok((x, SolveStats::default()));
    }
    let base = vec![0.0; n];
    let stats = gauss_seidel(dtmc, &unknown, &base, &mut x)?;
    Ok((x, stats))
}

/// Expected cumulated reward until reaching `target`; states that reach the
/// target with probability < 1 get `f64::INFINITY`.
pub fn expected_reward(
    dtmc: &SparseDtmc,
    rewards: &RewardStructure,
    target: &[bool],
) -> Result<(Vec<f64>, SolveStats), AnalysisError> {
    let n = dtmc.n();
    let all = vec![true; n];
    let (_, prob1) = qualitative_until(dtmc, &all, target);
    let mut x = vec![0.0; n];
    let mut unknown = Vec::new();
    for s in 0..n {
        if !prob1[s] {
            x[s] = f64::INFINITY;
        } else if !target[s] {
            unknown.push(s);
        }
    }
    if unknown.is_empty() {
        return Ok((x, SolveStats::default()));
    }
    let mut base = vec![0.0; n];
    for &s in &unknown {
        let mut b = rewards.state_reward(s);
        for &(t, p) in dtmc.row(s) {
            debug_assert!(prob1[t], "successor of an almost-sure state left prob1");
            b += p * rewards.trans_reward(s, t);
        }
        base[s] = b;
    }
    let stats = gauss_seidel(dtmc, &unknown, &base, &mut x)?;
    Ok((x, stats))
}

/// Solves `A·x = b` in place by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let m = b.len();
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty system");
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        assert!(diag.abs() > 0.0, "singular linear system");
        let pivot_tail = a[col][col..].to_vec();
        for row in 0..m {
            if row == col {
                continue;
            }
            let factor = a[row][col] / diag;
            if factor == 0.0 {
                continue;
            }
            for (dst, &v) in a[row][col..].iter_mut().zip(&pivot_tail) {
                *dst -= factor * v;
            }
            b[row] -= factor * b[col];
        }
    }
    (0..m).map(|i| b[i] / a[i][i]).collect()
}

/// Builds and solves the dense linear system for the `unknown` states of
/// `x[s] = base[s] + Σ P(s,t)·x[t]`, writing results back into `x`.
fn dense_solve_unknowns(dtmc: &SparseDtmc, unknown: &[usize], base: &[f64], x: &mut [f64]) {
    let m = unknown.len();
    let mut pos = vec![usize::MAX; dtmc.n()];
    for (i, &s) in unknown.iter().enumerate() {
        pos[s] = i;
    }
    let mut a = vec![vec![0.0; m]; m];
    let mut rhs = vec![0.0; m];
    for (i, &s) in unknown.iter().enumerate() {
        a[i][i] = 1.0;
        rhs[i] = base[s];
        for &(t, p) in dtmc.row(s) {
            if pos[t] != usize::MAX {
                a[i][pos[t]] -= p;
            } else {
                rhs[i] += p * x[t];
            }
        }
    }
    let sol = solve_dense(a, rhs);
    for (i, &s) in unknown.iter().enumerate() {
        x[s] = sol[i];
    }
}

/// Unbounded until probabilities by dense Gaussian elimination; independent
/// cross-check for models with at most [`DENSE_LIMIT`] states.
pub fn dense_unbounded_until(
    dtmc: &SparseDtmc,
    a: &[bool],
    b: &[bool],
) -> Result<Vec<f64>, AnalysisError> {
    let n = dtmc.n();
    if n > DENSE_LIMIT {
        return Err(AnalysisError::DenseLimitExceeded {
            states: n,
            limit: DENSE_LIMIT,
        });
    }
    let (prob0, prob1) = qualitative_until(dtmc, a, b);
    let mut x: Vec<f64> = (0..n).map(|s| if prob1[s] { 1.0 } else { 0.0 }).collect();
    let unknown: Vec<usize> = (0..n).filter(|&s| !prob0[s] && !prob1[s]).collect();
    if !unknown.is_empty() {
        let base = vec![0.0; n];
        dense_solve_unknowns(dtmc, &unknown, &base, &mut x);
    }
    Ok(x)
}

/// Expected reachability reward by dense Gaussian elimination; independent
/// cross-check for models with at most [`DENSE_LIMIT`] states.
pub fn dense_expected_reward(
    dtmc: &SparseDtmc,
    rewards: &RewardStructure,
    target: &[bool],
) -> Result<Vec<f64>, AnalysisError> {
    let n = dtmc.n();
    if n > DENSE_LIMIT {
        return Err(AnalysisError::DenseLimitExceeded {
            states: n,
            limit: DENSE_LIMIT,
        });
    }
    let all = vec![true; n];
    let (_, prob1) = qualitative_until(dtmc, &all, target);
    let mut x = vec![0.0; n];
    let mut unknown = Vec::new();
    for s in 0..n {
        if !prob1[s] {
            x[s] = f64::INFINITY;
        } else if !target[s] {
            unknown.push(s);
        }
    }
    if !unknown.is_empty() {
        let mut base = vec![0.0; n];
        for &s in &unknown {
            let mut bval = rewards.state_reward(s);
            for &(t, p) in dtmc.row(s) {
                bval += p * rewards.trans_reward(s, t);
            }
            base[s] = bval;
        }
        dense_solve_unknowns(dtmc, &unknown, &base, &mut x);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeMap, BTreeSet};

    /// 0 → {1: 0.5, 2: 0.5}, 1 → 1, 2 → 2; label "goal" = {1}.
    fn coin() -> SparseDtmc {
        let rows = vec![
            vec![(1, 0.5), (2, 0.5)],
            vec![(1, 1.0)],
            vec![(2, 1.0)],
        ];
        let mut labels = BTreeMap::new();
        labels.insert("goal".to_string(), BTreeSet::from([1]));
        SparseDtmc::try_from_rows(0, rows, labels).unwrap()
    }

    /// Symmetric random walk on 0..=4 with absorbing ends.
    fn walk() -> SparseDtmc {
        let rows = vec![
            vec![(0, 1.0)],
            vec![(0, 0.5), (2, 0.5)],
            vec![(1, 0.5), (3, 0.5)],
            vec![(2, 0.5), (4, 0.5)],
            vec![(4, 1.0)],
        ];
        SparseDtmc::try_from_rows(2, rows, BTreeMap::new()).unwrap()
    }

    #[test]
    fn next_probability() {
        let d = coin();
        let target = vec![false, true, false];
        assert_eq!(prob_next(&d, &target), vec![0.5, 1.0, 0.0]);
    }

    #[test]
    fn qualitative_sets_for_coin() {
        let d = coin();
        let a = vec![true, true, true];
        let b = vec![false, true, false];
        let (p0, p1) = qualitative_until(&d, &a, &b);
        assert_eq!(p0, vec![false, false, true]);
        assert_eq!(p1, vec![false, true, false]);
    }

    #[test]
    fn unbounded_until_on_random_walk() {
        let d = walk();
        let a = vec![true; 5];
        let b = vec![false, false, false, false, true];
        let (x, stats) = prob_unbounded_until(&d, &a, &b).unwrap();
        for (i, &want) in [0.0, 0.25, 0.5, 0.75, 1.0].iter().enumerate() {
            assert!((x[i] - want).abs() < 1e-10, "state {i}: {} vs {want}", x[i]);
        }
        assert!(stats.iterations > 0);
        assert!(stats.residual <= GS_TOLERANCE);
    }

    #[test]
    fn bounded_until_converges_to_unbounded() {
        let d = walk();
        let a = vec![true; 5];
        let b = vec![false, false, false, false, true];
        let x2 = prob_bounded_until(&d, &a, &b, 2);
        assert!((x2[2] - 0.25).abs() < 1e-12);
        let x_big = prob_bounded_until(&d, &a, &b, 200);
        let (x_inf, _) = prob_unbounded_until(&d, &a, &b).unwrap();
        for i in 0..5 {
            assert!((x_big[i] - x_inf[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn dense_agrees_with_gauss_seidel() {
        let d = walk();
        let a = vec![true; 5];
        let b = vec![false, false, false, false, true];
        let (gs, _) = prob_unbounded_until(&d, &a, &b).unwrap();
        let dense = dense_unbounded_until(&d, &a, &b).unwrap();
        for i in 0..5 {
            assert!((gs[i] - dense[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_steps_on_random_walk() {
        let d = walk();
        let rewards = RewardStructure::unit_state(5);
        let target = vec![true, false, false, false, true];
        let (x, _) = expected_reward(&d, &rewards, &target).unwrap();
        // Hitting time of {0,4} from i is i·(4−i) for the symmetric walk.
        for (i, want) in [(1usize, 3.0), (2, 4.0), (3, 3.0)] {
            assert!((x[i] - want).abs() < 1e-9, "state {i}: {} vs {want}", x[i]);
        }
        let dense = dense_expected_reward(&d, &rewards, &target).unwrap();
        for i in 0..5 {
            assert!((x[i] - dense[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn unreachable_target_gives_infinite_reward() {
        let d = coin();
        let rewards = RewardStructure::unit_state(3);
        let target = vec![false, true, false];
        let (x, _) = expected_reward(&d, &rewards, &target).unwrap();
        assert!(x[0].is_infinite());
        assert_eq!(x[1], 0.0);
        assert!(x[2].is_infinite());
    }

    #[test]
    fn transition_rewards_enter_the_expectation() {
        let d = coin();
        let mut rewards = RewardStructure::zero(3);
        rewards.trans.insert((0, 1), 2.0);
        rewards.trans.insert((0, 2), 4.0);
        rewards.state[0] = 1.0;
        let target = vec![true, true, true];
        // One step is never taken: all states are targets.
        let (x, _) = expected_reward(&d, &rewards, &target).unwrap();
        assert_eq!(x, vec![0.0, 0.0, 0.0]);
        // From 0 the target {1,2} is hit in one step.
        let target = vec![false, true, true];
        let (x, _) = expected_reward(&d, &rewards, &target).unwrap();
        assert!((x[0] - (1.0 + 0.5 * 2.0 + 0.5 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn self_loop_states_are_solved() {
        // 0 → {0: 0.5, 1: 0.25, 2: 0.25}: reach 1 with probability 1/2.
        let rows = vec![
            vec![(0, 0.5), (1, 0.25), (2, 0.25)],
            vec![(1, 1.0)],
            vec![(2, 1.0)],
        ];
        let d = SparseDtmc::try_from_rows(0, rows, BTreeMap::new()).unwrap();
        let a = vec![true, true, true];
        let b = vec![false, true, false];
        let (x, _) = prob_unbounded_until(&d, &a, &b).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn dense_limit_is_enforced() {
        let rows: Vec<Vec<(usize, f64)>> = (0..DENSE_LIMIT + 1).map(|s| vec![(s, 1.0)]).collect();
        let d = SparseDtmc::try_from_rows(0, rows, BTreeMap::new()).unwrap();
        let a = vec![true; d.n()];
        let b = vec![false; d.n()];
        match dense_unbounded_until(&d, &a, &b) {
            Err(AnalysisError::DenseLimitExceeded { states, limit }) => {
                assert_eq!(states, DENSE_LIMIT + 1);
                assert_eq!(limit, DENSE_LIMIT);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
