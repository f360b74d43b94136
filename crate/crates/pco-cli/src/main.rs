//! `pco`: build, reduce, check, compare, simulate, and export models of
//! pulse-coupled oscillator networks.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pco_core::abstraction::{check_correspondence, AbstractionError};
use pco_core::analysis::pctl::{format_value, PathFormula, PctlFormula};
use pco_core::analysis::{
    evaluate, evaluate_exact, mc_estimate, parse_pctl, AnalysisError, EvalResult, ExactEvalResult,
    ExactRewardStructure,
};
use pco_core::concrete::{build_concrete_dtmc, ConcreteDtmc, ConcreteError, DEFAULT_STATE_BUDGET};
use pco_core::io::explicit::{parse_srew, parse_trew, ExplicitParseError};
use pco_core::io::params_file::LoadError;
use pco_core::io::properties::PropertyFileError;
use pco_core::io::{
    export_explicit, export_json, parse_properties, render_results_csv, ModelKind,
    PrismExportError, PropertyResult,
};
use pco_core::io::prism::export_prism_lang_with_budget;
use pco_core::params::ModelParams;
use pco_core::population::{
    build_population_dtmc, build_population_dtmc_exact, ExactPopulationDtmc, PopulationDtmc,
};
use pco_core::reduction::{
    build_reduced_dtmc, build_reduced_dtmc_exact, transform_rewards, transform_rewards_exact,
    ExactReducedDtmc, ReducedDtmc, ReductionError,
};
use pco_core::{RewardStructure, SparseDtmc};

const DISCREPANCY_TOLERANCE: f64 = 1e-10;

#[derive(Parser)]
#[command(
    name = "pco",
    version,
    about = "Exact model construction and analysis for pulse-coupled oscillator networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a model and print its size.
    Build(BuildArgs),
    /// Evaluate PCTL properties and emit a results CSV.
    Check(CheckArgs),
    /// Verify that the population model is the counting abstraction of the
    /// concrete model.
    Compare(CompareArgs),
    /// Emit the state-space reduction table over a grid of instances.
    Table(TableArgs),
    /// Estimate a reachability probability by simulation.
    Simulate(SimulateArgs),
    /// Export a model as explicit files, PRISM language, or JSON.
    Export(ExportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Population,
    Concrete,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Explicit,
    Prism,
    Json,
}

#[derive(Args)]
struct ModelArgs {
    /// Parameter file (JSON).
    #[arg(long, value_name = "FILE")]
    params: PathBuf,
    /// Model family to build.
    #[arg(long, value_enum, default_value_t = KindArg::Population)]
    kind: KindArg,
    /// Apply the firing-state reduction (population kind only).
    #[arg(long)]
    reduce: bool,
    /// Cap on the number of constructed states.
    #[arg(long, default_value_t = DEFAULT_STATE_BUDGET, value_name = "STATES")]
    budget: usize,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Property to evaluate (repeatable).
    #[arg(long = "prop", value_name = "PCTL")]
    props: Vec<String>,
    /// Property file: one formula per line, `#` comments.
    #[arg(long = "prop-file", value_name = "FILE")]
    prop_file: Option<PathBuf>,
    /// Rewards for R operators: `steps` for unit state rewards, or a stem
    /// read as STEM.srew / STEM.trew indexed over the built model's states.
    #[arg(long, value_name = "steps|STEM")]
    rewards: Option<String>,
    /// Solve with exact rational arithmetic (population kind only).
    #[arg(long)]
    exact: bool,
    /// Write the results CSV here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Parameter file (JSON).
    #[arg(long, value_name = "FILE")]
    params: PathBuf,
    /// Cap on the number of constructed states.
    #[arg(long, default_value_t = DEFAULT_STATE_BUDGET, value_name = "STATES")]
    budget: usize,
    /// Write the full report as JSON here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    /// Parameter file providing R, epsilon, mu, and the phase response
    /// function; N and T come from the grid.
    #[arg(long, value_name = "FILE")]
    params: PathBuf,
    /// Instances as `N,T;N,T;...`.
    #[arg(
        long,
        value_name = "GRID",
        default_value = "3,6;5,6;8,6;3,8;5,8;8,8;3,10;5,10;8,10"
    )]
    grid: String,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Reachability property of the form `P=? [ F phi ]`.
    #[arg(long, value_name = "PCTL")]
    prop: String,
    /// Number of simulated paths.
    #[arg(long, default_value_t = 100_000)]
    paths: u64,
    /// Step horizon; defaults to the property's step bound if present,
    /// otherwise 10·T·N.
    #[arg(long)]
    horizon: Option<u64>,
    /// Master seed for the per-path generators.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Output format.
    #[arg(long, value_enum, default_value_t = FormatArg::Explicit)]
    format: FormatArg,
    /// Output path: file stem for explicit, file for prism/json
    /// (prism/json default to stdout).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Rewards to include: `steps` or a STEM with .srew/.trew files.
    #[arg(long, value_name = "steps|STEM")]
    rewards: Option<String>,
}

enum CliError {
    Usage(String),
    Runtime(String),
    Budget(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
            CliError::Budget(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) | CliError::Budget(m) => m,
        }
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ConcreteError> for CliError {
    fn from(e: ConcreteError) -> Self {
        match e {
            ConcreteError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            ConcreteError::InvalidInitial(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<PrismExportError> for CliError {
    fn from(e: PrismExportError) -> Self {
        match e {
            PrismExportError::Concrete(inner) => inner.into(),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<AbstractionError> for CliError {
    fn from(e: AbstractionError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ReductionError> for CliError {
    fn from(e: ReductionError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<PropertyFileError> for CliError {
    fn from(e: PropertyFileError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ExplicitParseError> for CliError {
    fn from(e: ExplicitParseError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

enum BuiltModel {
    Population(Box<PopulationDtmc>),
    Reduced(Box<PopulationDtmc>, Box<ReducedDtmc>),
    Concrete(Box<ConcreteDtmc>),
}

impl BuiltModel {
    fn dtmc(&self) -> &SparseDtmc {
        match self {
            BuiltModel::Population(m) => m.dtmc(),
            BuiltModel::Reduced(_, m) => m.dtmc(),
            BuiltModel::Concrete(m) => m.dtmc(),
        }
    }

    fn names(&self) -> Vec<String> {
        match self {
            BuiltModel::Population(m) => m.state_names(),
            BuiltModel::Reduced(_, m) => m.state_names(),
            BuiltModel::Concrete(m) => m.state_names(),
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            BuiltModel::Population(_) => "population",
            BuiltModel::Reduced(_, _) => "population-reduced",
            BuiltModel::Concrete(_) => "concrete",
        }
    }
}

fn build_model(params: &ModelParams, args: &ModelArgs) -> Result<BuiltModel, CliError> {
    match (args.kind, args.reduce) {
        (KindArg::Population, false) => Ok(BuiltModel::Population(Box::new(
            build_population_dtmc(params),
        ))),
        (KindArg::Population, true) => {
            let pop = build_population_dtmc(params);
            let reduced = build_reduced_dtmc(&pop, params);
            Ok(BuiltModel::Reduced(Box::new(pop), Box::new(reduced)))
        }
        (KindArg::Concrete, false) => Ok(BuiltModel::Concrete(Box::new(build_concrete_dtmc(
            params,
            args.budget,
        )?))),
        (KindArg::Concrete, true) => Err(CliError::Usage(
            "--reduce applies only to --kind population".to_string(),
        )),
    }
}

enum BuiltExact {
    Population(ExactPopulationDtmc),
    Reduced(ExactPopulationDtmc, ExactReducedDtmc),
}

fn build_exact_model(params: &ModelParams, args: &ModelArgs) -> Result<BuiltExact, CliError> {
    match (args.kind, args.reduce) {
        (KindArg::Population, false) => {
            Ok(BuiltExact::Population(build_population_dtmc_exact(params)))
        }
        (KindArg::Population, true) => {
            let pop = build_population_dtmc_exact(params);
            let reduced = build_reduced_dtmc_exact(&pop);
            Ok(BuiltExact::Reduced(pop, reduced))
        }
        (KindArg::Concrete, _) => Err(CliError::Usage(
            "--exact supports only --kind population".to_string(),
        )),
    }
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut os = stem.as_os_str().to_owned();
    os.push(".");
    os.push(ext);
    PathBuf::from(os)
}

fn read_reward_files(stem: &Path, dtmc: &SparseDtmc) -> Result<RewardStructure, CliError> {
    let mut rewards = RewardStructure::zero(dtmc.n());
    let mut found = false;
    let srew_path = with_ext(stem, "srew");
    if srew_path.exists() {
        let (n, entries) = parse_srew(&fs::read_to_string(&srew_path)?)?;
        if n != dtmc.n() {
            return Err(CliError::Runtime(format!(
                "{} declares {n} states but the model has {}",
                srew_path.display(),
                dtmc.n()
            )));
        }
        for (state, reward) in entries {
            rewards.state[state] = reward;
        }
        found = true;
    }
    let trew_path = with_ext(stem, "trew");
    if trew_path.exists() {
        let (n, entries) = parse_trew(&fs::read_to_string(&trew_path)?)?;
        if n != dtmc.n() {
            return Err(CliError::Runtime(format!(
                "{} declares {n} states but the model has {}",
                trew_path.display(),
                dtmc.n()
            )));
        }
        for (src, dst, reward) in entries {
            rewards.trans.insert((src, dst), reward);
        }
        found = true;
    }
    if !found {
        return Err(CliError::Runtime(format!(
            "no reward files found at {} / {}",
            with_ext(stem, "srew").display(),
            with_ext(stem, "trew").display()
        )));
    }
    if let Err((from, to)) = rewards.validate_support(dtmc) {
        return Err(CliError::Runtime(format!(
            "transition reward on missing transition {from} -> {to}"
        )));
    }
    Ok(rewards)
}

fn build_rewards(model: &BuiltModel, spec: &str) -> Result<RewardStructure, CliError> {
    if spec == "steps" {
        match model {
            BuiltModel::Population(m) => Ok(RewardStructure::unit_state(m.dtmc().n())),
            BuiltModel::Concrete(m) => Ok(RewardStructure::unit_state(m.dtmc().n())),
            BuiltModel::Reduced(pop, reduced) => {
                let unit = RewardStructure::unit_state(pop.dtmc().n());
                Ok(transform_rewards(pop, reduced, &unit)?)
            }
        }
    } else {
        read_reward_files(Path::new(spec), model.dtmc())
    }
}

fn build_exact_rewards(model: &BuiltExact, spec: &str) -> Result<ExactRewardStructure, CliError> {
    if spec != "steps" {
        return Err(CliError::Usage(
            "--exact supports only --rewards steps".to_string(),
        ));
    }
    match model {
        BuiltExact::Population(m) => Ok(ExactRewardStructure::unit_state(m.dtmc.n())),
        BuiltExact::Reduced(pop, reduced) => {
            let unit = ExactRewardStructure::unit_state(pop.dtmc.n());
            Ok(transform_rewards_exact(pop, reduced, &unit))
        }
    }
}

fn write_or_print(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            fs::write(path, text)?;
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_build(args: &BuildArgs) -> Result<u8, CliError> {
    let params = load_params(&args.model.params)?;
    let model = build_model(&params, &args.model)?;
    let dtmc = model.dtmc();
    println!(
        "N={} T={} kind={} states={} transitions={}",
        params.n,
        params.t,
        model.tag(),
        dtmc.n(),
        dtmc.transition_count()
    );
    Ok(0)
}

fn collect_properties(args: &CheckArgs) -> Result<Vec<(String, PctlFormula)>, CliError> {
    let mut properties = Vec::new();
    for text in &args.props {
        let formula = parse_pctl(text).map_err(|e| CliError::Runtime(e.to_string()))?;
        properties.push((text.clone(), formula));
    }
    if let Some(path) = &args.prop_file {
        let text = fs::read_to_string(path)?;
        for line in parse_properties(&text)? {
            properties.push((line.text, line.formula));
        }
    }
    if properties.is_empty() {
        return Err(CliError::Usage(
            "provide at least one property via --prop or --prop-file".to_string(),
        ));
    }
    Ok(properties)
}

fn cmd_check(args: &CheckArgs) -> Result<u8, CliError> {
    let params = load_params(&args.model.params)?;
    let properties = collect_properties(args)?;
    let mut rows = Vec::new();
    let mut any_false = false;

    if args.exact {
        let model = build_exact_model(&params, &args.model)?;
        let dtmc = match &model {
            BuiltExact::Population(m) => &m.dtmc,
            BuiltExact::Reduced(_, m) => &m.dtmc,
        };
        let rewards = args
            .rewards
            .as_deref()
            .map(|spec| build_exact_rewards(&model, spec))
            .transpose()?;
        for (text, formula) in properties {
            let result = evaluate_exact(dtmc, rewards.as_ref(), &formula)?;
            let value = match result {
                ExactEvalResult::Value(v) => v.to_string(),
                ExactEvalResult::Sat(mask) => {
                    let holds = mask[dtmc.initial()];
                    any_false |= !holds;
                    holds.to_string()
                }
            };
            rows.push(PropertyResult {
                formula: text,
                value,
                residual: 0.0,
                iterations: 0,
            });
        }
    } else {
        let model = build_model(&params, &args.model)?;
        let rewards = args
            .rewards
            .as_deref()
            .map(|spec| build_rewards(&model, spec))
            .transpose()?;
        let dtmc = model.dtmc();
        for (text, formula) in properties {
            let outcome = evaluate(dtmc, rewards.as_ref(), &formula)?;
            let value = match outcome.result {
                EvalResult::Value(v) => format_value(v),
                EvalResult::Sat(mask) => {
                    let holds = mask[dtmc.initial()];
                    any_false |= !holds;
                    holds.to_string()
                }
            };
            rows.push(PropertyResult {
                formula: text,
                value,
                residual: outcome.stats.residual,
                iterations: outcome.stats.iterations,
            });
        }
    }

    write_or_print(args.out.as_ref(), &render_results_csv(&rows))?;
    Ok(if any_false { 1 } else { 0 })
}

fn cmd_compare(args: &CompareArgs) -> Result<u8, CliError> {
    let params = load_params(&args.params)?;
    let concrete = build_concrete_dtmc(&params, args.budget)?;
    let population = build_population_dtmc(&params);
    let report = check_correspondence(&concrete, &population)?;
    print!("{report}");
    if let Some(path) = &args.out {
        let mut text = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        fs::write(path, text)?;
    }
    Ok(if report.max_discrepancy > DISCREPANCY_TOLERANCE {
        1
    } else {
        0
    })
}

fn binom(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn parse_grid(text: &str) -> Result<Vec<(u32, u32)>, CliError> {
    let mut rows = Vec::new();
    for part in text.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let invalid = || CliError::Usage(format!("invalid grid entry `{part}` (expected N,T)"));
        let (n, t) = part.split_once(',').ok_or_else(invalid)?;
        let n: u32 = n.trim().parse().map_err(|_| invalid())?;
        let t: u32 = t.trim().parse().map_err(|_| invalid())?;
        rows.push((n, t));
    }
    if rows.is_empty() {
        return Err(CliError::Usage("empty grid".to_string()));
    }
    Ok(rows)
}

fn cmd_table(args: &TableArgs) -> Result<u8, CliError> {
    let base = load_params(&args.params)?;
    let grid = parse_grid(&args.grid)?;
    println!(
        "{:>4} {:>4} {:>10} {:>10} {:>10} {:>12} {:>12} {:>6}",
        "N", "T", "states", "reduced", "reduction", "trans", "red-trans", "bound"
    );
    for (n, t) in grid {
        let params = ModelParams {
            n,
            t,
            ..base.clone()
        };
        params
            .validate()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let pop = build_population_dtmc(&params);
        let reduced = build_reduced_dtmc(&pop, &params);
        let full_states = pop.dtmc().n();
        let reduced_states = reduced.dtmc().n();
        let reduction = 100.0 * (1.0 - reduced_states as f64 / full_states as f64);
        let full_trans = pop.dtmc().transition_count();
        let reduced_trans = reduced.dtmc().transition_count();
        let slack = 2 * binom((n + t - 2) as u64, n as u64);
        let bound_ok = (reduced_trans as u128) <= (full_trans as u128).saturating_sub(slack);
        println!(
            "{:>4} {:>4} {:>10} {:>10} {:>9.1}% {:>12} {:>12} {:>6}",
            n,
            t,
            full_states,
            reduced_states,
            reduction,
            full_trans,
            reduced_trans,
            if bound_ok { "pass" } else { "fail" }
        );
    }
    println!("note: the states column is the closed form C(N+T-1,N)+1; external tools may count encodings differently");
    Ok(0)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<u8, CliError> {
    let params = load_params(&args.model.params)?;
    let formula = parse_pctl(&args.prop).map_err(|e| CliError::Runtime(e.to_string()))?;
    let (target_formula, bound) = match &formula {
        PctlFormula::Prob {
            bound: None,
            path: PathFormula::Until { lhs, rhs, bound },
        } if **lhs == PctlFormula::True => (rhs.as_ref(), *bound),
        _ => {
            return Err(CliError::Usage(
                "simulate needs a property of the form P=? [ F phi ]".to_string(),
            ))
        }
    };

    let model = build_model(&params, &args.model)?;
    let dtmc = model.dtmc();
    let target = match evaluate(dtmc, None, target_formula)?.result {
        EvalResult::Sat(mask) => mask,
        EvalResult::Value(_) => unreachable!("queries below the top level are rejected earlier"),
    };
    let horizon = args
        .horizon
        .or(bound)
        .unwrap_or(10 * u64::from(params.t) * u64::from(params.n));
    let estimate = mc_estimate(dtmc, &target, args.paths, horizon, args.seed);
    println!(
        "estimate={} half_width={} hits={} paths={} horizon={} seed={}",
        estimate.estimate, estimate.half_width, estimate.hits, estimate.paths, horizon, args.seed
    );
    Ok(0)
}

fn cmd_export(args: &ExportArgs) -> Result<u8, CliError> {
    let params = load_params(&args.model.params)?;
    match args.format {
        FormatArg::Prism => {
            if args.model.reduce {
                return Err(CliError::Usage(
                    "prism export emits the unreduced model; drop --reduce".to_string(),
                ));
            }
            let kind = match args.model.kind {
                KindArg::Population => ModelKind::Population,
                KindArg::Concrete => ModelKind::Concrete,
            };
            let text = export_prism_lang_with_budget(&params, kind, args.model.budget)?;
            write_or_print(args.out.as_ref(), &text)?;
            Ok(0)
        }
        FormatArg::Json => {
            let model = build_model(&params, &args.model)?;
            let rewards = args
                .rewards
                .as_deref()
                .map(|spec| build_rewards(&model, spec))
                .transpose()?;
            let text = export_json(model.dtmc(), &model.names(), rewards.as_ref());
            write_or_print(args.out.as_ref(), &text)?;
            Ok(0)
        }
        FormatArg::Explicit => {
            let stem = args.out.as_ref().ok_or_else(|| {
                CliError::Usage("explicit export needs --out as a file stem".to_string())
            })?;
            let model = build_model(&params, &args.model)?;
            let rewards = args
                .rewards
                .as_deref()
                .map(|spec| build_rewards(&model, spec))
                .transpose()?;
            let bundle = export_explicit(model.dtmc(), &model.names(), rewards.as_ref());
            for path in bundle.write_to(stem)? {
                println!("wrote {}", path.display());
            }
            Ok(0)
        }
    }
}

fn load_params(path: &Path) -> Result<ModelParams, CliError> {
    Ok(pco_core::io::load_params(path)?)
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Build(args) => cmd_build(args),
        Command::Check(args) => cmd_check(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Table(args) => cmd_table(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Export(args) => cmd_export(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}
