//! Network parameters and the pluggable phase-response / refractory machinery
//! shared by the concrete and population models.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Validation failure for [`ModelParams`] or a [`PhaseResponseFunction`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("N must be at least 1")]
    ZeroOscillators,
    #[error("T must be at least 1")]
    ZeroCycleLength,
    #[error("R exceeds T (R = {r}, T = {t})")]
    RefractoryExceedsCycle { r: u32, t: u32 },
    #[error("epsilon must be finite and nonnegative (got {0})")]
    EpsilonOutOfRange(f64),
    #[error("mu out of [0,1] (got {0})")]
    MuOutOfRange(f64),
    #[error("PRF table must have {expected} rows (one per phase 1..T), got {got}")]
    TableRowCount { expected: usize, got: usize },
    #[error("PRF table row for phase {phase} must have {expected} entries (alpha 0..N), got {got}")]
    TableColumnCount {
        phase: u32,
        expected: usize,
        got: usize,
    },
    #[error("PRF table entry for phase {phase} at alpha 0 must be 0, got {got}")]
    TableNonzeroAtAlphaZero { phase: u32, got: u32 },
    #[error("PRF table not monotone in alpha at phase {phase}, alpha {alpha}")]
    TableNotMonotone { phase: u32, alpha: u32 },
    #[error("PRF table has no entry for phase {phase}, alpha {alpha}")]
    TableMissingEntry { phase: u32, alpha: u32 },
}

/// Phase response function: maps (phase, perceived firings) to a nonnegative
/// integer phase perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PhaseResponseFunction {
    /// `pert(Φ, α, ε) = [Φ·α·ε]`, rounding half away from zero.
    Linear,
    /// Explicit `T × (N+1)` grid; `values[Φ-1][α]` is the perturbation.
    Table { values: Vec<Vec<u32>> },
}

/// Full parameter tuple of a pulse-coupled oscillator network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Number of oscillators.
    #[serde(rename = "N")]
    pub n: u32,
    /// Cycle length: phases run over 1..T.
    #[serde(rename = "T")]
    pub t: u32,
    /// Refractory period length: perturbations are ignored at phases 1..R.
    #[serde(rename = "R")]
    pub r: u32,
    /// Coupling strength.
    pub epsilon: f64,
    /// Broadcast failure probability.
    pub mu: f64,
    /// Phase response function.
    pub prf: PhaseResponseFunction,
}

impl ModelParams {
    /// Convenience constructor for the linear phase-response function.
    pub fn linear(n: u32, t: u32, r: u32, epsilon: f64, mu: f64) -> Self {
        ModelParams {
            n,
            t,
            r,
            epsilon,
            mu,
            prf: PhaseResponseFunction::Linear,
        }
    }

    /// Checks every parameter bound, reporting the first violation.
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.n < 1 {
            return Err(ParamError::ZeroOscillators);
        }
        if self.t < 1 {
            return Err(ParamError::ZeroCycleLength);
        }
        if self.r > self.t {
            return Err(ParamError::RefractoryExceedsCycle {
                r: self.r,
                t: self.t,
            });
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(ParamError::EpsilonOutOfRange(self.epsilon));
        }
        if !self.mu.is_finite() || !(0.0..=1.0).contains(&self.mu) {
            return Err(ParamError::MuOutOfRange(self.mu));
        }
        if let PhaseResponseFunction::Table { values } = &self.prf {
            let rows = self.t as usize;
            let cols = self.n as usize + 1;
            if values.len() != rows {
                return Err(ParamError::TableRowCount {
                    expected: rows,
                    got: values.len(),
                });
            }
            for (i, row) in values.iter().enumerate() {
                let phase = i as u32 + 1;
                if row.len() != cols {
                    return Err(ParamError::TableColumnCount {
                        phase,
                        expected: cols,
                        got: row.len(),
                    });
                }
                if row[0] != 0 {
                    return Err(ParamError::TableNonzeroAtAlphaZero {
                        phase,
                        got: row[0],
                    });
                }
                for alpha in 1..cols {
                    if row[alpha] < row[alpha - 1] {
                        return Err(ParamError::TableNotMonotone {
                            phase,
                            alpha: alpha as u32,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Perturbation for `phase` when `alpha` firings are perceived.
    ///
    /// Callers must pass `phase ∈ 1..=T` and `alpha ∈ 0..=N` on validated
    /// parameters; violations panic.
    pub fn pert(&self, phase: u32, alpha: u32) -> u32 {
        pert(phase, alpha, self.epsilon, &self.prf)
            .unwrap_or_else(|e| panic!("pert({phase}, {alpha}): {e}"))
    }

    /// Refractory-adjusted phase increment (see [`refr`]).
    pub fn refr(&self, phase: u32, delta: u32) -> u32 {
        refr(phase, delta, self.r)
    }
}

/// Phase response: perturbation of an oscillator at `phase` perceiving
/// `alpha` firings under coupling `epsilon`.
pub fn pert(
    phase: u32,
    alpha: u32,
    epsilon: f64,
    prf: &PhaseResponseFunction,
) -> Result<u32, ParamError> {
    match prf {
        PhaseResponseFunction::Linear => {
            // f64::round is round-half-away-from-zero.
            Ok(((phase as u64 * alpha as u64) as f64 * epsilon).round() as u32)
        }
        PhaseResponseFunction::Table { values } => values
            .get(phase.wrapping_sub(1) as usize)
            .and_then(|row| row.get(alpha as usize))
            .copied()
            .ok_or(ParamError::TableMissingEntry { phase, alpha }),
    }
}

/// Refractory function: `phase` itself inside the refractory period `[1,R]`,
/// `phase + delta` outside it. `R = 0` means the interval is empty.
pub fn refr(phase: u32, delta: u32, r: u32) -> u32 {
    if phase <= r {
        phase
    } else {
        phase + delta
    }
}
