//! Exact model construction and analysis for networks of discrete-time
//! pulse-coupled oscillators.
//!
//! The crate builds two Markov-chain views of the same synchronization
//! protocol: a concrete per-oscillator model with an environment counter
//! ([`concrete`]) and a population model that counts oscillators per phase
//! ([`population`]). On top of those it provides the firing-state reduction
//! with its reward transformation ([`reduction`]), a computational
//! correspondence checker between the two models ([`abstraction`]), a PCTL
//! subset with reachability and reward solvers ([`analysis`]), and
//! PRISM-compatible import/export ([`io`]).

pub mod abstraction;
pub mod analysis;
pub mod concrete;
pub mod io;
pub mod params;
pub mod population;
pub mod reduction;

pub use analysis::dtmc::{RewardStructure, SparseDtmc};
pub use analysis::pctl::{parse_pctl, PctlFormula};
pub use io::{export_explicit, export_prism_lang, load_params, ExportBundle, ModelKind};
pub use params::{ModelParams, PhaseResponseFunction};
pub use population::{FailureEntry, FailureVector, GlobalState, PopulationDtmc};
pub use reduction::ReducedDtmc;
