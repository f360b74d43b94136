//! Exact-rational DTMC analysis.
//!
//! Mirrors the floating-point pipeline with `BigRational` arithmetic:
//! row-stochasticity is checked as an exact equality and unbounded
//! quantities are obtained by Gaussian elimination over the rationals, so
//! results carry no rounding error at all.

use super::dtmc::DtmcError;
use super::pctl::{Bowtie, PathFormula, PctlFormula};
use super::AnalysisError;
use num::{BigRational, One, Signed, ToPrimitive, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Largest model the exact solver accepts for unbounded queries.
pub const EXACT_LIMIT: usize = 600;

/// A finite DTMC with exact rational transition probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDtmc {
    n: usize,
    initial: usize,
    rows: Vec<Vec<(usize, BigRational)>>,
    labels: BTreeMap<String, BTreeSet<usize>>,
}

impl ExactDtmc {
    /// Assembles and validates an exact DTMC; each row must sum to exactly 1.
    pub fn try_from_rows(
        initial: usize,
        mut rows: Vec<Vec<(usize, BigRational)>>,
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
            let mut sum = BigRational::zero();
            let mut prev: Option<usize> = None;
            for (t, p) in row.iter() {
                if *t >= n {
                    return Err(DtmcError::TargetOutOfRange {
                        row: i,
                        target: *t,
                        n,
                    });
                }
                if prev == Some(*t) {
                    return Err(DtmcError::DuplicateTransition { row: i, target: *t });
                }
                prev = Some(*t);
                if p.is_negative() || *p > BigRational::one() {
                    return Err(DtmcError::ProbabilityOutOfRange {
                        row: i,
                        p: p.to_f64().unwrap_or(f64::NAN),
                    });
                }
                sum += p;
            }
            if !sum.is_one() {
                return Err(DtmcError::RowNotStochastic {
                    row: i,
                    sum: sum.to_f64().unwrap_or(f64::NAN),
                });
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
        Ok(ExactDtmc {
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
    pub fn row(&self, i: usize) -> &[(usize, BigRational)] {
        &self.rows[i]
    }

    /// Total number of stored transitions.
    pub fn transition_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `P(i, j)`, zero when the transition is absent.
    pub fn prob(&self, i: usize, j: usize) -> BigRational {
        self.rows[i]
            .binary_search_by_key(&j, |&(t, _)| t)
            .map(|pos| self.rows[i][pos].1.clone())
            .unwrap_or_else(|_| BigRational::zero())
    }

    /// Label map: label → set of state indices.
    pub fn labels(&self) -> &BTreeMap<String, BTreeSet<usize>> {
        &self.labels
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

    fn predecessor_lists(&self) -> Vec<Vec<usize>> {
        let mut preds = vec![Vec::new(); self.n];
        for (s, row) in self.rows.iter().enumerate() {
            for (t, p) in row {
                if !p.is_zero() {
                    preds[*t].push(s);
                }
            }
        }
        preds
    }

    /// Rounds every probability to `f64`, keeping structure and labels.
    pub fn to_sparse(&self) -> super::dtmc::SparseDtmc {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|(t, p)| (*t, p.to_f64().expect("finite probability")))
                    .collect()
            })
            .collect();
        super::dtmc::SparseDtmc::try_from_rows(self.initial, rows, self.labels.clone())
            .expect("rounded rows stay stochastic within tolerance")
    }
}

/// Exact rewards aligned with an [`ExactDtmc`]'s indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactRewardStructure {
    pub state: Vec<BigRational>,
    pub trans: BTreeMap<(usize, usize), BigRational>,
}

impl ExactRewardStructure {
    pub fn zero(n: usize) -> Self {
        ExactRewardStructure {
            state: vec![BigRational::zero(); n],
            trans: BTreeMap::new(),
        }
    }

    pub fn unit_state(n: usize) -> Self {
        ExactRewardStructure {
            state: vec![BigRational::one(); n],
            trans: BTreeMap::new(),
        }
    }

    pub fn state_reward(&self, i: usize) -> BigRational {
        self.state[i].clone()
    }

    pub fn trans_reward(&self, i: usize, j: usize) -> BigRational {
        self.trans
            .get(&(i, j))
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }
}

/// An exact expected reward: a rational, or infinite when the target is not
/// reached almost surely.
#[derive(Debug, Clone, PartialEq)]
pub enum ExactValue {
    Finite(BigRational),
    Infinite,
}

impl ExactValue {
    pub fn to_f64(&self) -> f64 {
        match self {
            ExactValue::Finite(v) => v.to_f64().unwrap_or(f64::NAN),
            ExactValue::Infinite => f64::INFINITY,
        }
    }

    fn satisfies(&self, op: Bowtie, threshold: f64) -> bool {
        match self {
            ExactValue::Finite(v) => {
                let t = BigRational::from_float(threshold).expect("finite threshold");
                match op {
                    Bowtie::Lt => *v < t,
                    Bowtie::Le => *v <= t,
                    Bowtie::Ge => *v >= t,
                    Bowtie::Gt => *v > t,
                }
            }
            ExactValue::Infinite => matches!(op, Bowtie::Ge | Bowtie::Gt),
        }
    }
}

impl fmt::Display for ExactValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExactValue::Finite(v) => write!(f, "{v}"),
            ExactValue::Infinite => write!(f, "inf"),
        }
    }
}

/// One-step probability of entering `target`.
pub fn exact_prob_next(dtmc: &ExactDtmc, target: &[bool]) -> Vec<BigRational> {
    (0..dtmc.n())
        .map(|s| {
            dtmc.row(s)
                .iter()
                .filter(|(t, _)| target[*t])
                .map(|(_, p)| p.clone())
                .sum()
        })
        .collect()
}

/// Step-bounded until probabilities by exact backward recursion.
pub fn exact_bounded_until(
    dtmc: &ExactDtmc,
    a: &[bool],
    b: &[bool],
    k: u64,
) -> Vec<BigRational> {
    let n = dtmc.n();
    let mut x: Vec<BigRational> = (0..n)
        .map(|s| {
            if b[s] {
                BigRational::one()
            } else {
                BigRational::zero()
            }
        })
        .collect();
    for _ in 0..k {
        let mut next = x.clone();
        for s in 0..n {
            if b[s] || !a[s] {
                continue;
            }
            next[s] = dtmc.row(s).iter().map(|(t, p)| p * &x[*t]).sum();
        }
        x = next;
    }
    x
}

fn backward_reachable(dtmc: &ExactDtmc, through: &[bool], from: &[bool]) -> Vec<bool> {
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

fn qualitative_until(dtmc: &ExactDtmc, a: &[bool], b: &[bool]) -> (Vec<bool>, Vec<bool>) {
    let n = dtmc.n();
    let can_reach = backward_reachable(dtmc, a, b);
    let prob0: Vec<bool> = (0..n).map(|s| !can_reach[s]).collect();
    let a_not_b: Vec<bool> = (0..n).map(|s| a[s] && !b[s]).collect();
    let escapes = backward_reachable(dtmc, &a_not_b, &prob0);
    let prob1: Vec<bool> = (0..n).map(|s| !escapes[s]).collect();
    (prob0, prob1)
}

/// Solves `A·x = b` exactly by Gauss–Jordan elimination.
fn solve_exact(mut a: Vec<Vec<BigRational>>, mut b: Vec<BigRational>) -> Vec<BigRational> {
    let m = b.len();
    for col in 0..m {
        let pivot = (col..m)
            .find(|&r| !a[r][col].is_zero())
            .expect("nonsingular reachability system");
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col].clone();
        for v in a[col][col..].iter_mut() {
            *v /= &diag;
        }
        b[col] /= &diag;
        let pivot_tail = a[col][col..].to_vec();
        for row in 0..m {
            if row == col || a[row][col].is_zero() {
                continue;
            }
            let factor = a[row][col].clone();
            for (dst, v) in a[row][col..].iter_mut().zip(&pivot_tail) {
                *dst -= &factor * v.clone();
            }
            let v = b[col].clone();
            b[row] -= factor * v;
        }
    }
    b
}

fn exact_solve_unknowns(
    dtmc: &ExactDtmc,
    unknown: &[usize],
    base: &[BigRational],
    x: &mut [BigRational],
) {
    let m = unknown.len();
    let mut pos = vec![usize::MAX; dtmc.n()];
    for (i, &s) in unknown.iter().enumerate() {
        pos[s] = i;
    }
    let mut a = vec![vec![BigRational::zero(); m]; m];
    let mut rhs = vec![BigRational::zero(); m];
    for (i, &s) in unknown.iter().enumerate() {
        a[i][i] = BigRational::one();
        rhs[i] = base[s].clone();
        for (t, p) in dtmc.row(s) {
            if pos[*t] != usize::MAX {
                a[i][pos[*t]] -= p;
            } else {
                rhs[i] += p * &x[*t];
            }
        }
    }
    let sol = solve_exact(a, rhs);
    for (i, &s) in unknown.iter().enumerate() {
        x[s] = sol[i].clone();
    }
}

fn check_limit(dtmc: &ExactDtmc) -> Result<(), AnalysisError> {
    if dtmc.n() > EXACT_LIMIT {
        return Err(AnalysisError::ExactLimitExceeded {
            states: dtmc.n(),
            limit: EXACT_LIMIT,
        });
    }
    Ok(())
}

/// Exact unbounded until probabilities.
pub fn exact_unbounded_until(
    dtmc: &ExactDtmc,
    a: &[bool],
    b: &[bool],
) -> Result<Vec<BigRational>, AnalysisError> {
    check_limit(dtmc)?;
    let n = dtmc.n();
    let (prob0, prob1) = qualitative_until(dtmc, a, b);
    let mut x: Vec<BigRational> = (0..n)
        .map(|s| {
            if prob1[s] {
                BigRational::one()
            } else {
                BigRational::zero()
            }
        })
        .collect();
    let unknown: Vec<usize> = (0..n).filter(|&s| !prob0[s] && !prob1[s]).collect();
    if !unknown.is_empty() {
        let base = vec![BigRational::zero(); n];
        exact_solve_unknowns(dtmc, &unknown, &base, &mut x);
    }
    Ok(x)
}

/// Exact expected cumulated reward until reaching `target`.
pub fn exact_expected_reward(
    dtmc: &ExactDtmc,
    rewards: &ExactRewardStructure,
    target: &[bool],
) -> Result<Vec<ExactValue>, AnalysisError> {
    check_limit(dtmc)?;
    let n = dtmc.n();
    let all = vec![true; n];
    let (_, prob1) = qualitative_until(dtmc, &all, target);
    let mut x = vec![BigRational::zero(); n];
    let mut unknown = Vec::new();
    for s in 0..n {
        if prob1[s] && !target[s] {
            unknown.push(s);
        }
    }
    if !unknown.is_empty() {
        let mut base = vec![BigRational::zero(); n];
        for &s in &unknown {
            let mut bval = rewards.state_reward(s);
            for (t, p) in dtmc.row(s) {
                bval += p * rewards.trans_reward(s, *t);
            }
            base[s] = bval;
        }
        exact_solve_unknowns(dtmc, &unknown, &base, &mut x);
    }
    Ok((0..n)
        .map(|s| {
            if prob1[s] {
                ExactValue::Finite(x[s].clone())
            } else {
                ExactValue::Infinite
            }
        })
        .collect())
}

/// Result of exact evaluation: a satisfaction set, or the exact value at the
/// initial state for query forms.
#[derive(Debug, Clone, PartialEq)]
pub enum ExactEvalResult {
    Sat(Vec<bool>),
    Value(ExactValue),
}

/// Evaluates `formula` on `dtmc` with exact arithmetic; `rewards` is
/// required for `R` operators.
pub fn evaluate_exact(
    dtmc: &ExactDtmc,
    rewards: Option<&ExactRewardStructure>,
    formula: &PctlFormula,
) -> Result<ExactEvalResult, AnalysisError> {
    match formula {
        PctlFormula::Prob { bound: None, path } => {
            let v = path_values(dtmc, rewards, path)?;
            Ok(ExactEvalResult::Value(ExactValue::Finite(
                v[dtmc.initial()].clone(),
            )))
        }
        PctlFormula::Reward { bound: None, target } => {
            let v = reward_values(dtmc, rewards, target)?;
            Ok(ExactEvalResult::Value(v[dtmc.initial()].clone()))
        }
        _ => Ok(ExactEvalResult::Sat(sat(dtmc, rewards, formula)?)),
    }
}

fn sat(
    dtmc: &ExactDtmc,
    rewards: Option<&ExactRewardStructure>,
    formula: &PctlFormula,
) -> Result<Vec<bool>, AnalysisError> {
    match formula {
        PctlFormula::True => Ok(vec![true; dtmc.n()]),
        PctlFormula::False => Ok(vec![false; dtmc.n()]),
        PctlFormula::Ap(label) => dtmc
            .label_mask(label)
            .ok_or_else(|| AnalysisError::UnknownLabel(label.clone())),
        PctlFormula::Not(inner) => {
            let mut v = sat(dtmc, rewards, inner)?;
            v.iter_mut().for_each(|b| *b = !*b);
            Ok(v)
        }
        PctlFormula::And(p, q) => {
            let vp = sat(dtmc, rewards, p)?;
            let vq = sat(dtmc, rewards, q)?;
            Ok(vp.iter().zip(&vq).map(|(&x, &y)| x && y).collect())
        }
        PctlFormula::Or(p, q) => {
            let vp = sat(dtmc, rewards, p)?;
            let vq = sat(dtmc, rewards, q)?;
            Ok(vp.iter().zip(&vq).map(|(&x, &y)| x || y).collect())
        }
        PctlFormula::Implies(p, q) => {
            let vp = sat(dtmc, rewards, p)?;
            let vq = sat(dtmc, rewards, q)?;
            Ok(vp.iter().zip(&vq).map(|(&x, &y)| !x || y).collect())
        }
        PctlFormula::Prob {
            bound: Some((op, threshold)),
            path,
        } => {
            let v = path_values(dtmc, rewards, path)?;
            Ok(v.iter()
                .map(|p| ExactValue::Finite(p.clone()).satisfies(*op, *threshold))
                .collect())
        }
        PctlFormula::Reward {
            bound: Some((op, threshold)),
            target,
        } => {
            let v = reward_values(dtmc, rewards, target)?;
            Ok(v.iter().map(|r| r.satisfies(*op, *threshold)).collect())
        }
        PctlFormula::Prob { bound: None, .. } | PctlFormula::Reward { bound: None, .. } => {
            Err(AnalysisError::NestedQuery)
        }
    }
}

fn path_values(
    dtmc: &ExactDtmc,
    rewards: Option<&ExactRewardStructure>,
    path: &PathFormula,
) -> Result<Vec<BigRational>, AnalysisError> {
    match path {
        PathFormula::Next(inner) => {
            let target = sat(dtmc, rewards, inner)?;
            Ok(exact_prob_next(dtmc, &target))
        }
        PathFormula::Until { lhs, rhs, bound } => {
            let a = sat(dtmc, rewards, lhs)?;
            let b = sat(dtmc, rewards, rhs)?;
            match bound {
                Some(k) => Ok(exact_bounded_until(dtmc, &a, &b, *k)),
                None => exact_unbounded_until(dtmc, &a, &b),
            }
        }
    }
}

fn reward_values(
    dtmc: &ExactDtmc,
    rewards: Option<&ExactRewardStructure>,
    target: &PctlFormula,
) -> Result<Vec<ExactValue>, AnalysisError> {
    let rew = rewards.ok_or(AnalysisError::RewardsRequired)?;
    let tgt = sat(dtmc, rewards, target)?;
    exact_expected_reward(dtmc, rew, &tgt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn walk() -> ExactDtmc {
        let rows = vec![
            vec![(0, r(1, 1))],
            vec![(0, r(1, 2)), (2, r(1, 2))],
            vec![(1, r(1, 2)), (3, r(1, 2))],
            vec![(2, r(1, 2)), (4, r(1, 2))],
            vec![(4, r(1, 1))],
        ];
        ExactDtmc::try_from_rows(2, rows, BTreeMap::new()).unwrap()
    }

    #[test]
    fn rejects_inexact_rows() {
        let err =
            ExactDtmc::try_from_rows(0, vec![vec![(0, r(1, 3))]], BTreeMap::new()).unwrap_err();
        assert!(matches!(err, DtmcError::RowNotStochastic { .. }));
    }

    #[test]
    fn unbounded_until_is_exact() {
        let d = walk();
        let a = vec![true; 5];
        let b = vec![false, false, false, false, true];
        let x = exact_unbounded_until(&d, &a, &b).unwrap();
        assert_eq!(x[0], r(0, 1));
        assert_eq!(x[1], r(1, 4));
        assert_eq!(x[2], r(1, 2));
        assert_eq!(x[3], r(3, 4));
        assert_eq!(x[4], r(1, 1));
    }

    #[test]
    fn expected_reward_is_exact_and_infinite_where_unreachable() {
        let d = walk();
        let rewards = ExactRewardStructure::unit_state(5);
        let target = vec![true, false, false, false, true];
        let v = exact_expected_reward(&d, &rewards, &target).unwrap();
        assert_eq!(v[2], ExactValue::Finite(r(4, 1)));
        let only_right = vec![false, false, false, false, true];
        let v = exact_expected_reward(&d, &rewards, &only_right).unwrap();
        assert_eq!(v[1], ExactValue::Infinite);
        assert_eq!(v[1].to_string(), "inf");
    }

    #[test]
    fn bounded_until_matches_hand_computation() {
        let d = walk();
        let a = vec![true; 5];
        let b = vec![false, false, false, false, true];
        let x = exact_bounded_until(&d, &a, &b, 2);
        assert_eq!(x[2], r(1, 4));
        assert_eq!(x[3], r(1, 2));
    }

    #[test]
    fn evaluate_exact_reachability_query() {
        let mut labels = BTreeMap::new();
        labels.insert("goal".to_string(), BTreeSet::from([4]));
        let rows = vec![
            vec![(0, r(1, 1))],
            vec![(0, r(1, 2)), (2, r(1, 2))],
            vec![(1, r(1, 2)), (3, r(1, 2))],
            vec![(2, r(1, 2)), (4, r(1, 2))],
            vec![(4, r(1, 1))],
        ];
        let labeled = ExactDtmc::try_from_rows(2, rows, labels).unwrap();
        let f = crate::analysis::pctl::parse_pctl("P=? [ F \"goal\" ]").unwrap();
        match evaluate_exact(&labeled, None, &f).unwrap() {
            ExactEvalResult::Value(ExactValue::Finite(v)) => assert_eq!(v, r(1, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exact_limit_is_enforced() {
        let rows: Vec<Vec<(usize, BigRational)>> =
            (0..EXACT_LIMIT + 1).map(|s| vec![(s, r(1, 1))]).collect();
        let d = ExactDtmc::try_from_rows(0, rows, BTreeMap::new()).unwrap();
        let a = vec![true; d.n()];
        let b = vec![false; d.n()];
        assert!(matches!(
            exact_unbounded_until(&d, &a, &b),
            Err(AnalysisError::ExactLimitExceeded { .. })
        ));
    }

    #[test]
    fn to_sparse_round_trips_structure() {
        let d = walk();
        let s = d.to_sparse();
        assert_eq!(s.n(), 5);
        assert_eq!(s.prob(1, 2), 0.5);
    }
}
