//! PCTL subset: abstract syntax, a PRISM-style concrete-syntax parser with
//! byte-accurate error positions, and the evaluator.
//!
//! Grammar (state formulas):
//! `Φ ::= true | false | "label" | !Φ | Φ & Φ | Φ | Φ | Φ => Φ |
//!        P⋈λ [ Ψ ] | R⋈r [ F Φ ]`
//! with path formulas `Ψ ::= X Φ | Φ U Φ | Φ U<=k Φ | F Φ | F<=k Φ`.
//! `P=? [ Ψ ]` and `R=? [ F Φ ]` are query forms, allowed only at top level;
//! they return the numeric value at the initial state.

use super::dtmc::{RewardStructure, SparseDtmc};
use super::solver::{
    expected_reward, prob_bounded_until, prob_next, prob_unbounded_until, SolveStats,
};
use super::AnalysisError;
use std::fmt;
use thiserror::Error;

/// Comparison operator in `P⋈λ` / `R⋈r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bowtie {
    Lt,
    Le,
    Ge,
    Gt,
}

impl Bowtie {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Bowtie::Lt => value < threshold,
            Bowtie::Le => value <= threshold,
            Bowtie::Ge => value >= threshold,
            Bowtie::Gt => value > threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Bowtie::Lt => "<",
            Bowtie::Le => "<=",
            Bowtie::Ge => ">=",
            Bowtie::Gt => ">",
        }
    }
}

/// Path formula under a probability operator.
#[derive(Debug, Clone, PartialEq)]
pub enum PathFormula {
    Next(Box<PctlFormula>),
    Until {
        lhs: Box<PctlFormula>,
        rhs: Box<PctlFormula>,
        /// `None` is the unbounded until.
        bound: Option<u64>,
    },
}

/// PCTL state formula (query forms carry `bound: None`).
#[derive(Debug, Clone, PartialEq)]
pub enum PctlFormula {
    True,
    False,
    Ap(String),
    Not(Box<PctlFormula>),
    And(Box<PctlFormula>, Box<PctlFormula>),
    Or(Box<PctlFormula>, Box<PctlFormula>),
    Implies(Box<PctlFormula>, Box<PctlFormula>),
    Prob {
        bound: Option<(Bowtie, f64)>,
        path: PathFormula,
    },
    Reward {
        bound: Option<(Bowtie, f64)>,
        target: Box<PctlFormula>,
    },
}

/// Syntax error with the byte offset where it occurred.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("parse error at byte {pos}: {message}")]
pub struct PctlParseError {
    pub pos: usize,
    pub message: String,
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Cursor { src, pos: 0 }
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, PctlParseError> {
        Err(PctlParseError {
            pos: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    /// Consumes `lit` if the input (after whitespace) starts with it.
    fn eat(&mut self, lit: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(lit) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    /// Consumes a keyword: like [`Cursor::eat`] but the next character must
    /// not continue an identifier.
    fn eat_keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        if let Some(tail) = rest.strip_prefix(kw) {
            let after = tail.chars().next();
            if !matches!(after, Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                self.pos += kw.len();
                return true;
            }
        }
        false
    }

    fn expect(&mut self, lit: &str) -> Result<(), PctlParseError> {
        if self.eat(lit) {
            Ok(())
        } else {
            self.error(format!("expected `{lit}`"))
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos == self.src.len()
    }

    fn number(&mut self) -> Result<f64, PctlParseError> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if self.pos == start {
            return self.error("expected a number");
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map_err(|_| PctlParseError {
                pos: start,
                message: format!("invalid number `{}`", &self.src[start..self.pos]),
            })
    }

    fn integer(&mut self) -> Result<u64, PctlParseError> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return self.error("expected an integer");
        }
        self.src[start..self.pos]
            .parse::<u64>()
            .map_err(|_| PctlParseError {
                pos: start,
                message: format!("integer `{}` out of range", &self.src[start..self.pos]),
            })
    }

    fn label(&mut self) -> Result<String, PctlParseError> {
        let start = self.pos;
        let mut out = String::new();
        for c in self.src[self.pos + 1..].chars() {
            if c == '"' {
                self.pos += 1 + out.len() + 1;
                return Ok(out);
            }
            if c == '\n' {
                break;
            }
            out.push(c);
        }
        Err(PctlParseError {
            pos: start,
            message: "unterminated label".to_string(),
        })
    }
}

/// Parses a PCTL formula; query forms (`P=?`, `R=?`) must span the whole
/// input.
pub fn parse_pctl(text: &str) -> Result<PctlFormula, PctlParseError> {
    let mut cur = Cursor::new(text);
    let formula = parse_top(&mut cur)?;
    if !cur.at_end() {
        return cur.error("unexpected trailing input");
    }
    Ok(formula)
}

fn parse_top(cur: &mut Cursor) -> Result<PctlFormula, PctlParseError> {
    cur.skip_ws();
    let save = cur.pos;
    if cur.eat_keyword("P") {
        if cur.eat("=?") {
            cur.expect("[")?;
            let path = parse_path(cur)?;
            cur.expect("]")?;
            return Ok(PctlFormula::Prob { bound: None, path });
        }
        cur.pos = save;
    }
    if cur.eat_keyword("R") {
        if cur.eat("=?") {
            cur.expect("[")?;
            let target = parse_reward_body(cur)?;
            cur.expect("]")?;
            return Ok(PctlFormula::Reward {
                bound: None,
                target: Box::new(target),
            });
        }
        cur.pos = save;
    }
    parse_implies(cur)
}

fn parse_implies(cur: &mut Cursor) -> Result<PctlFormula, PctlParseError> {
    let lhs = parse_or(cur)?;
    if cur.eat("=>") {
        let rhs = parse_implies(cur)?;
        return Ok(PctlFormula::Implies(Box::new(lhs), Box::new(rhs)));
    }
    Ok(lhs)
}

fn parse_or(cur: &mut Cursor) -> Result<PctlFormula, PctlParseError> {
    let mut lhs = parse_and(cur)?;
    while cur.eat("|") {
        let rhs = parse_and(cur)?;
        lhs = PctlFormula::Or(Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_and(cur: &mut Cursor) -> Result<PctlFormula, PctlParseError> {
    let mut lhs = parse_not(cur)?;
    while cur.eat("&") {
        let rhs = parse_not(cur)?;
        lhs = PctlFormula::And(Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_not(cur: &mut Cursor) -> Result<PctlFormula, PctlParseError> {
    if cur.eat("!") {
        let inner = parse_not(cur)?;
        return Ok(PctlFormula::Not(Box::new(inner)));
    }
    parse_atom(cur)
}

fn parse_atom(cur: &mut Cursor) -> Result<PctlFormula, PctlParseError> {
    if cur.eat("(") {
        let inner = parse_implies(cur)?;
        cur.expect(")")?;
        return Ok(inner);
    }
    if cur.eat_keyword("true") {
        return Ok(PctlFormula::True);
    }
    if cur.eat_keyword("false") {
        return Ok(PctlFormula::False);
    }
    match cur.peek() {
        Some('"') => Ok(PctlFormula::Ap(cur.label()?)),
        Some('P') => {
            cur.eat_keyword("P");
            if cur.eat("=?") {
                return cur.error("query operator `P=?` is only allowed at top level");
            }
            let bound = parse_bound(cur)?;
            if !(0.0..=1.0).contains(&bound.1) {
                return cur.error(format!("probability threshold {} out of [0,1]", bound.1));
            }
            cur.expect("[")?;
            let path = parse_path(cur)?;
            cur.expect("]")?;
            Ok(PctlFormula::Prob {
                bound: Some(bound),
                path,
            })
        }
        Some('R') => {
            cur.eat_keyword("R");
            if cur.eat("=?") {
                return cur.error("query operator `R=?` is only allowed at top level");
            }
            let bound = parse_bound(cur)?;
            cur.expect("[")?;
            let target = parse_reward_body(cur)?;
            cur.expect("]")?;
            Ok(PctlFormula::Reward {
                bound: Some(bound),
                target: Box::new(target),
            })
        }
        Some(_) => cur.error("expected a formula"),
        None => cur.error("unexpected end of input"),
    }
}

fn parse_bound(cur: &mut Cursor) -> Result<(Bowtie, f64), PctlParseError> {
    let op = if cur.eat("<=") {
        Bowtie::Le
    } else if cur.eat(">=") {
        Bowtie::Ge
    } else if cur.eat("<") {
        Bowtie::Lt
    } else if cur.eat(">") {
        Bowtie::Gt
    } else {
        return cur.error("expected one of `<`, `<=`, `>=`, `>`, `=?`");
    };
    let threshold = cur.number()?;
    Ok((op, threshold))
}

fn parse_step_bound(cur: &mut Cursor) -> Result<Option<u64>, PctlParseError> {
    if cur.eat("<=") {
        Ok(Some(cur.integer()?))
    } else {
        Ok(None)
    }
}

fn parse_path(cur: &mut Cursor) -> Result<PathFormula, PctlParseError> {
    if cur.eat_keyword("X") {
        let inner = parse_implies(cur)?;
        return Ok(PathFormula::Next(Box::new(inner)));
    }
    if cur.eat_keyword("F") {
        let bound = parse_step_bound(cur)?;
        let rhs = parse_implies(cur)?;
        return Ok(PathFormula::Until {
            lhs: Box::new(PctlFormula::True),
            rhs: Box::new(rhs),
            bound,
        });
    }
    let lhs = parse_implies(cur)?;
    if !cur.eat_keyword("U") {
        return cur.error("expected `U` in path formula");
    }
    let bound = parse_step_bound(cur)?;
    let rhs = parse_implies(cur)?;
    Ok(PathFormula::Until {
        lhs: Box::new(lhs),
        rhs: Box::new(rhs),
        bound,
    })
}

fn parse_reward_body(cur: &mut Cursor) -> Result<PctlFormula, PctlParseError> {
    if !cur.eat_keyword("F") {
        return cur.error("expected `F` in reward formula");
    }
    parse_implies(cur)
}

/// Result of evaluating a formula: a per-state satisfaction set for state
/// formulas, or the numeric value at the initial state for query forms.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalResult {
    Sat(Vec<bool>),
    Value(f64),
}

/// Evaluation result together with accumulated solver statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub result: EvalResult,
    pub stats: SolveStats,
}

/// Evaluates `formula` on `dtmc`; `rewards` is required for `R` operators.
pub fn evaluate(
    dtmc: &SparseDtmc,
    rewards: Option<&RewardStructure>,
    formula: &PctlFormula,
) -> Result<EvalOutcome, AnalysisError> {
    let mut stats = SolveStats::default();
    let result = match formula {
        PctlFormula::Prob { bound: None, path } => {
            let v = path_probabilities(dtmc, rewards, path, &mut stats)?;
            EvalResult::Value(v[dtmc.initial()])
        }
        PctlFormula::Reward { bound: None, target } => {
            let v = reward_values(dtmc, rewards, target, &mut stats)?;
            EvalResult::Value(v[dtmc.initial()])
        }
        _ => EvalResult::Sat(sat(dtmc, rewards, formula, &mut stats)?),
    };
    Ok(EvalOutcome { result, stats })
}

fn sat(
    dtmc: &SparseDtmc,
    rewards: Option<&RewardStructure>,
    formula: &PctlFormula,
    stats: &mut SolveStats,
) -> Result<Vec<bool>, AnalysisError> {
    match formula {
        PctlFormula::True => Ok(vec![true; dtmc.n()]),
        PctlFormula::False => Ok(vec![false; dtmc.n()]),
        PctlFormula::Ap(label) => dtmc
            .label_mask(label)
            .ok_or_else(|| AnalysisError::UnknownLabel(label.clone())),
        PctlFormula::Not(inner) => {
            let mut v = sat(dtmc, rewards, inner, stats)?;
            v.iter_mut().for_each(|b| *b = !*b);
            Ok(v)
        }
        PctlFormula::And(a, b) => {
            let va = sat(dtmc, rewards, a, stats)?;
            let vb = sat(dtmc, rewards, b, stats)?;
            Ok(va.iter().zip(&vb).map(|(&x, &y)| x && y).collect())
        }
        PctlFormula::Or(a, b) => {
            let va = sat(dtmc, rewards, a, stats)?;
            let vb = sat(dtmc, rewards, b, stats)?;
            Ok(va.iter().zip(&vb).map(|(&x, &y)| x || y).collect())
        }
        PctlFormula::Implies(a, b) => {
            let va = sat(dtmc, rewards, a, stats)?;
            let vb = sat(dtmc, rewards, b, stats)?;
            Ok(va.iter().zip(&vb).map(|(&x, &y)| !x || y).collect())
        }
        PctlFormula::Prob {
            bound: Some((op, threshold)),
            path,
        } => {
            let v = path_probabilities(dtmc, rewards, path, stats)?;
            Ok(v.iter().map(|&p| op.holds(p, *threshold)).collect())
        }
        PctlFormula::Reward {
            bound: Some((op, threshold)),
            target,
        } => {
            let v = reward_values(dtmc, rewards, target, stats)?;
            Ok(v.iter().map(|&r| op.holds(r, *threshold)).collect())
        }
        PctlFormula::Prob { bound: None, .. } | PctlFormula::Reward { bound: None, .. } => {
            Err(AnalysisError::NestedQuery)
        }
    }
}

fn path_probabilities(
    dtmc: &SparseDtmc,
    rewards: Option<&RewardStructure>,
    path: &PathFormula,
    stats: &mut SolveStats,
) -> Result<Vec<f64>, AnalysisError> {
    match path {
        PathFormula::Next(inner) => {
            let target = sat(dtmc, rewards, inner, stats)?;
            Ok(prob_next(dtmc, &target))
        }
        PathFormula::Until { lhs, rhs, bound } => {
            let a = sat(dtmc, rewards, lhs, stats)?;
            let b = sat(dtmc, rewards, rhs, stats)?;
            match bound {
                Some(k) => Ok(prob_bounded_until(dtmc, &a, &b, *k)),
                None => {
                    let (v, s) = prob_unbounded_until(dtmc, &a, &b)?;
                    stats.merge(s);
                    Ok(v)
                }
            }
        }
    }
}

fn reward_values(
    dtmc: &SparseDtmc,
    rewards: Option<&RewardStructure>,
    target: &PctlFormula,
    stats: &mut SolveStats,
) -> Result<Vec<f64>, AnalysisError> {
    let rew = rewards.ok_or(AnalysisError::RewardsRequired)?;
    let tgt = sat(dtmc, rewards, target, stats)?;
    let (v, s) = expected_reward(dtmc, rew, &tgt)?;
    stats.merge(s);
    Ok(v)
}

/// Formats a value for text output; infinities print as `inf`.
pub fn format_value(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        }
    } else {
        format!("{v}")
    }
}

impl fmt::Display for PctlFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PctlFormula::True => write!(f, "true"),
            PctlFormula::False => write!(f, "false"),
            PctlFormula::Ap(l) => write!(f, "\"{l}\""),
            PctlFormula::Not(x) => write!(f, "!({x})"),
            PctlFormula::And(a, b) => write!(f, "({a} & {b})"),
            PctlFormula::Or(a, b) => write!(f, "({a} | {b})"),
            PctlFormula::Implies(a, b) => write!(f, "({a} => {b})"),
            PctlFormula::Prob { bound, path } => {
                match bound {
                    Some((op, t)) => write!(f, "P{}{t} [ {path} ]", op.symbol()),
                    None => write!(f, "P=? [ {path} ]"),
                }
            }
            PctlFormula::Reward { bound, target } => match bound {
                Some((op, t)) => write!(f, "R{}{t} [ F {target} ]", op.symbol()),
                None => write!(f, "R=? [ F {target} ]"),
            },
        }
    }
}

impl fmt::Display for PathFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathFormula::Next(x) => write!(f, "X {x}"),
            PathFormula::Until { lhs, rhs, bound } => {
                let suffix = match bound {
                    Some(k) => format!("<={k}"),
                    None => String::new(),
                };
                if **lhs == PctlFormula::True {
                    write!(f, "F{suffix} {rhs}")
                } else {
                    write!(f, "{lhs} U{suffix} {rhs}")
                }
            }
        }
    }
}
