//! PRISM-language export.
//!
//! The module body enumerates one guarded command per reachable state of the
//! already-built model, so every phase-response function (linear or table)
//! exports exactly.  A boolean `configured` variable drives the initial
//! distribution: the single command enabled before configuration installs the
//! uniform phase assignment, after which the per-state commands take over.

use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::concrete::{build_concrete_dtmc, ConcreteState, Mode, DEFAULT_STATE_BUDGET};
use crate::params::{ModelParams, PhaseResponseFunction};
use crate::population::{build_population_dtmc, GlobalState};

/// Which of the two model families to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Population,
    Concrete,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Population => write!(f, "population"),
            ModelKind::Concrete => write!(f, "concrete"),
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "population" => Ok(ModelKind::Population),
            "concrete" => Ok(ModelKind::Concrete),
            other => Err(format!("unknown model kind `{other}` (expected population or concrete)")),
        }
    }
}

/// Failure to emit PRISM-language text.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrismExportError {
    #[error(transparent)]
    Concrete(#[from] crate::concrete::ConcreteError),
}

fn prf_tag(prf: &PhaseResponseFunction) -> &'static str {
    match prf {
        PhaseResponseFunction::Linear => "linear",
        PhaseResponseFunction::Table { .. } => "table",
    }
}

fn header(params: &ModelParams, kind: ModelKind) -> String {
    let mut text = String::from("dtmc\n\n");
    let _ = writeln!(
        text,
        "// pulse-coupled oscillator network ({kind} model)"
    );
    let _ = writeln!(
        text,
        "// N={} T={} R={} epsilon={} mu={} prf={}",
        params.n,
        params.t,
        params.r,
        params.epsilon,
        params.mu,
        prf_tag(&params.prf)
    );
    text.push('\n');
    text
}

fn pop_assign(state: &GlobalState) -> String {
    state
        .counts()
        .iter()
        .enumerate()
        .map(|(i, &c)| format!("(k{}'={c})", i + 1))
        .collect::<Vec<_>>()
        .join(" & ")
}

fn pop_guard(state: &GlobalState) -> String {
    let mut guard = String::from("configured");
    for (i, &c) in state.counts().iter().enumerate() {
        let _ = write!(guard, " & k{}={c}", i + 1);
    }
    guard
}

fn mode_bit(mode: Mode) -> u32 {
    match mode {
        Mode::Start => 0,
        Mode::Update => 1,
    }
}

fn concrete_assign(state: &ConcreteState) -> String {
    let mut parts = vec![
        format!("(em'={})", mode_bit(state.env_mode)),
        format!("(c'={})", state.counter),
    ];
    for (i, &(phase, mode)) in state.oscillators.iter().enumerate() {
        parts.push(format!("(p{}'={phase})", i + 1));
        parts.push(format!("(m{}'={})", i + 1, mode_bit(mode)));
    }
    parts.join(" & ")
}

fn concrete_guard(state: &ConcreteState) -> String {
    let mut guard = String::from("configured");
    let _ = write!(guard, " & em={} & c={}", mode_bit(state.env_mode), state.counter);
    for (i, &(phase, mode)) in state.oscillators.iter().enumerate() {
        let _ = write!(guard, " & p{}={phase} & m{}={}", i + 1, i + 1, mode_bit(mode));
    }
    guard
}

fn command(guard: &str, updates: &[(f64, String)]) -> String {
    let rendered: Vec<String> = updates
        .iter()
        .map(|(p, assign)| format!("{p} : {assign}"))
        .collect();
    format!("\t[] {guard} -> {};\n", rendered.join(" + "))
}

fn population_text(params: &ModelParams) -> String {
    let model = build_population_dtmc(params);
    let dtmc = model.dtmc();
    let mut text = header(params, ModelKind::Population);

    text.push_str("module population\n");
    let _ = writeln!(text, "\tconfigured : bool init false;");
    for i in 1..=params.t {
        let _ = writeln!(text, "\tk{i} : [0..{}] init 0;", params.n);
    }
    text.push('\n');

    for src in 0..dtmc.n() {
        let updates: Vec<(f64, String)> = dtmc
            .row(src)
            .iter()
            .map(|&(dst, p)| {
                let target = model.state(dst).expect("no transition targets the initial state");
                let assign = match model.state(src) {
                    None => format!("(configured'=true) & {}", pop_assign(target)),
                    Some(_) => pop_assign(target),
                };
                (p, assign)
            })
            .collect();
        let guard = match model.state(src) {
            None => "!configured".to_string(),
            Some(state) => pop_guard(state),
        };
        text.push_str(&command(&guard, &updates));
    }
    text.push_str("endmodule\n\n");

    let synch: Vec<String> = (1..=params.t).map(|i| format!("k{i}={}", params.n)).collect();
    let synch = synch.join(" | ");
    let _ = writeln!(text, "label \"synch\" = configured & ({synch});");
    text.push('\n');
    let _ = writeln!(text, "// sync_p: P=? [ F ({synch}) ]");
    text
}

fn concrete_text(params: &ModelParams, budget: usize) -> Result<String, PrismExportError> {
    let model = build_concrete_dtmc(params, budget)?;
    let dtmc = model.dtmc();
    let mut text = header(params, ModelKind::Concrete);

    text.push_str("module network\n");
    let _ = writeln!(text, "\tconfigured : bool init false;");
    let _ = writeln!(text, "\tem : [0..1] init 0; // 0 = start, 1 = update");
    let _ = writeln!(text, "\tc : [0..{}] init 0;", params.n);
    for i in 1..=params.n {
        let _ = writeln!(text, "\tp{i} : [1..{}] init 1;", params.t);
        let _ = writeln!(text, "\tm{i} : [0..1] init 0;");
    }
    text.push('\n');

    for src in 0..dtmc.n() {
        let updates: Vec<(f64, String)> = dtmc
            .row(src)
            .iter()
            .map(|&(dst, p)| {
                let target = model.state(dst).expect("no transition targets the initial state");
                let assign = match model.state(src) {
                    None => format!("(configured'=true) & {}", concrete_assign(target)),
                    Some(_) => concrete_assign(target),
                };
                (p, assign)
            })
            .collect();
        let guard = match model.state(src) {
            None => "!configured".to_string(),
            Some(state) => concrete_guard(state),
        };
        text.push_str(&command(&guard, &updates));
    }
    text.push_str("endmodule\n\n");

    let pairwise: Vec<String> = (2..=params.n).map(|i| format!("p1=p{i}")).collect();
    let synch = if pairwise.is_empty() {
        "true".to_string()
    } else {
        pairwise.join(" & ")
    };
    let _ = writeln!(text, "label \"synch\" = configured & ({synch});");
    text.push('\n');
    let _ = writeln!(text, "// sync_c: P=? [ F ({synch}) ]");
    Ok(text)
}

/// Emits a PRISM DTMC module for the given model family, together with the
/// matching synchronisation property as a trailing comment.
pub fn export_prism_lang(params: &ModelParams, kind: ModelKind) -> Result<String, PrismExportError> {
    export_prism_lang_with_budget(params, kind, DEFAULT_STATE_BUDGET)
}

/// [`export_prism_lang`] with an explicit state budget for the concrete
/// model build.
pub fn export_prism_lang_with_budget(
    params: &ModelParams,
    kind: ModelKind,
    budget: usize,
) -> Result<String, PrismExportError> {
    match kind {
        ModelKind::Population => Ok(population_text(params)),
        ModelKind::Concrete => concrete_text(params, budget),
    }
}
