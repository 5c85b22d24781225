//! Batch front end for the solvers and the evaluation harness.
//!
//! Four subcommands cover the workflows: `solve` writes the admissible-action
//! table of one model on one scenario instance, `simulate` runs the
//! closed-loop sweep over the aspiration grid and writes the metrics table,
//! `evaluate` scores recorded trajectories against a behavioral model, and
//! `oracle-check` cross-validates the solvers against brute-force
//! enumeration on randomized small games.
//!
//! Every command is deterministic given identical inputs and seed: re-runs
//! produce byte-identical files and stdout. Configuration comes from an
//! optional JSON run-config file; individual flags override its values.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 solver, 4 data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use traffic_games::eval::{
    assemble_records, match_rate, read_manifest, read_tracks, sweep, write_metrics_csv,
    write_runs_jsonl, EvalError, ModelId, ScenarioSpec, SweepRow, SWEEP_MODELS,
};
use traffic_games::game::{
    build_game_tree, ConditionDirection, GameConfig, GameError, GameTree, NodeId, Selection,
};
use traffic_games::kinematics::Maneuver;
use traffic_games::oracle::{differential_report, Concept};
use traffic_games::robust::{expand_types, robust_response, steps_of_agent, SolutionCache};
use traffic_games::strategic::{
    level1_tie_set, mspe_set, qlk_response, spne, sspe_set, update_consistent_belief,
    AgentSolution, BeliefL1, SolutionSet,
};

const CONFIG_SCHEMA: u32 = 1;
const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Parser)]
#[command(
    name = "traffic-games",
    version = concat!(env!("CARGO_PKG_VERSION"), " (config schema 1)"),
    about = "Game-theoretic driving-behavior solvers, sweeps, and evaluation"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Values that override the run-config file, which in turn overrides the
/// built-in defaults.
#[derive(Debug, Args)]
struct Overrides {
    /// JSON run-config file; flags take precedence over its values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Base RNG seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for generated files
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: logical cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Logit precision of the quantal model
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Tolerated per-hypothesis history mismatches in robust filtering
    #[arg(long, global = true)]
    slack: Option<usize>,
    /// Reading of the accommodating wait condition
    #[arg(long, global = true, value_enum)]
    ac_condition: Option<AcDirection>,
    /// Average over consistent opponent pairings in the level-1 rollout
    #[arg(long, global = true, value_name = "BOOL")]
    l1_expectation: Option<bool>,
    /// Safety-only left-hand side in the maneuver equilibrium filter
    #[arg(long, global = true, value_name = "BOOL")]
    mspe_lhs_safety: Option<bool>,
    /// Report every matching aspiration assignment, not just one witness
    #[arg(long, global = true, value_name = "BOOL")]
    witness_all: Option<bool>,
    /// Match only the opening maneuver instead of the whole sequence
    #[arg(long, global = true, value_name = "BOOL")]
    first_stage_only: Option<bool>,
    /// Pick rule applied to admissible sets in closed-loop simulation
    #[arg(long, global = true, value_enum)]
    selection: Option<SelectionArg>,
    /// Resolve equilibrium-free stages by min-max regret instead of failing
    #[arg(long, global = true, value_name = "BOOL")]
    nash_fallback: Option<bool>,
    /// Comma-separated aspiration grid, e.g. -1,-0.5,0,0.5,1
    #[arg(long, global = true, value_name = "LIST", allow_hyphen_values = true)]
    grid_types: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AcDirection {
    Equation,
    Prose,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SelectionArg {
    Greedy,
    Uniform,
    First,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Solve one scenario instance and write the admissible-action table
    Solve(SolveArgs),
    /// Sweep models over the aspiration grid and write success metrics
    Simulate(SimulateArgs),
    /// Match recorded trajectories against one behavioral model
    Evaluate(EvaluateArgs),
    /// Cross-check the solvers against brute-force enumeration
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Scenario description file
    #[arg(long, value_name = "FILE")]
    scenario: PathBuf,
    /// Model to solve: l1 | spne | sspe | mspe | qlk | robust
    #[arg(long)]
    model: String,
    /// Comma-separated aspiration per agent, e.g. 0,0
    #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
    types: String,
    /// Index into the scenario's initial-condition grid
    #[arg(long, default_value_t = 0)]
    init: usize,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario description file
    #[arg(long, value_name = "FILE")]
    scenario: PathBuf,
    /// Comma-separated models to sweep (default: l1,sspe,mspe,qlk,robust)
    #[arg(long, value_name = "LIST")]
    models: Option<String>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Trajectory CSV file
    #[arg(long, value_name = "FILE")]
    tracks: PathBuf,
    /// Game-window manifest JSON file
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Model to score records against
    #[arg(long)]
    model: String,
}

#[derive(Debug, Args)]
struct OracleArgs {
    /// Randomized instances per concept
    #[arg(long, default_value_t = 200)]
    instances: usize,
    /// Comma-separated concepts (default: all)
    #[arg(long, value_name = "LIST")]
    concepts: Option<String>,
}

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

/// A failed command: the message goes to stderr, the kind picks the exit
/// code (2 usage/config, 3 solver, 4 data).
#[derive(Debug)]
enum Failure {
    Usage(String),
    Solver(String),
    Data(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Data(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Solver(m) | Failure::Data(m) => m,
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Print to stdout, swallowing broken pipes so `... | head` truncates
/// cleanly instead of panicking.
macro_rules! emit {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

macro_rules! emit_raw {
    ($text:expr) => {{
        use std::io::Write as _;
        let _ = std::io::stdout().write_all($text.as_bytes());
    }};
}

/// Solver errors keep exit 3; a config complaint surfacing through the game
/// layer is still a usage problem.
fn from_game(e: GameError) -> Failure {
    match e {
        GameError::InvalidConfig(_) => Failure::Usage(e.to_string()),
        other => Failure::Solver(other.to_string()),
    }
}

/// Scenario and config complaints are usage errors; broken input files are
/// data errors; anything from the game layer keeps the solver split.
fn from_eval(e: EvalError) -> Failure {
    match e {
        EvalError::Scenario(_) => Failure::Usage(e.to_string()),
        EvalError::Game(g) => from_game(g),
        other => Failure::Data(other.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// On-disk companion of the command line: every field optional, flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    /// Config-schema version; rejected when newer than this binary knows.
    schema: Option<u32>,
    game: GameConfig,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    jobs: Option<usize>,
    /// Default model list for `simulate`.
    models: Option<Vec<String>>,
}

/// Everything resolved: defaults, then config file, then flags.
struct Effective {
    cfg: GameConfig,
    seed: u64,
    out: PathBuf,
    models: Option<Vec<String>>,
}

fn resolve(ov: &Overrides) -> Result<Effective, Failure> {
    let run = match &ov.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("config file {}: {e}", path.display())))?;
            let run: RunConfig = serde_json::from_str(&text)
                .map_err(|e| usage(format!("config file {}: {e}", path.display())))?;
            if let Some(schema) = run.schema {
                if schema > CONFIG_SCHEMA {
                    return Err(usage(format!(
                        "config schema {schema} is newer than the supported schema {CONFIG_SCHEMA}"
                    )));
                }
            }
            run
        }
        None => RunConfig::default(),
    };

    let mut cfg = run.game;
    if let Some(lambda) = ov.lambda {
        cfg.logit_lambda = lambda;
    }
    if let Some(slack) = ov.slack {
        cfg.flags.consistency_slack = slack;
    }
    if let Some(dir) = ov.ac_condition {
        cfg.flags.ac_condition = match dir {
            AcDirection::Equation => ConditionDirection::Equation,
            AcDirection::Prose => ConditionDirection::Prose,
        };
    }
    if let Some(v) = ov.l1_expectation {
        cfg.flags.l1_expectation = v;
    }
    if let Some(v) = ov.mspe_lhs_safety {
        cfg.flags.mspe_lhs_safety = v;
    }
    if let Some(v) = ov.witness_all {
        cfg.flags.witness_all = v;
    }
    if let Some(v) = ov.first_stage_only {
        cfg.flags.first_stage_only = v;
    }
    if let Some(sel) = ov.selection {
        cfg.flags.selection = match sel {
            SelectionArg::Greedy => Selection::Greedy,
            SelectionArg::Uniform => Selection::Uniform,
            SelectionArg::First => Selection::First,
        };
    }
    if let Some(v) = ov.nash_fallback {
        cfg.flags.nash_fallback = v;
    }
    if let Some(list) = &ov.grid_types {
        cfg.type_grid = parse_f64_list(list, "--grid-types")?;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    if let Some(jobs) = ov.jobs.or(run.jobs) {
        // Errors only when a pool already exists, which a CLI run never hits.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }

    Ok(Effective {
        cfg,
        seed: ov.seed.or(run.seed).unwrap_or(DEFAULT_SEED),
        out: ov
            .out
            .clone()
            .or(run.out_dir)
            .unwrap_or_else(|| PathBuf::from("out")),
        models: run.models,
    })
}

// ---------------------------------------------------------------------------
// Shared parsing helpers
// ---------------------------------------------------------------------------

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("{what}: `{s}` is not a number")))
        })
        .collect()
}

fn parse_model(name: &str) -> Result<ModelId, Failure> {
    ModelId::parse(name).ok_or_else(|| {
        usage(format!(
            "unknown model `{name}`; strategic models: l1, spne, sspe, mspe, qlk, robust; \
             automaton baselines: ac, nac, maxmax"
        ))
    })
}

fn parse_model_list(text: &str) -> Result<Vec<ModelId>, Failure> {
    text.split(',').map(|s| parse_model(s.trim())).collect()
}

fn load_scenario(path: &PathBuf) -> Result<ScenarioSpec, Failure> {
    // Everything wrong with a scenario file is a configuration problem.
    let spec = ScenarioSpec::load(path)
        .map_err(|e| usage(format!("scenario {}: {e}", path.display())))?;
    spec.validate()
        .map_err(|e| usage(format!("scenario {}: {e}", path.display())))?;
    Ok(spec)
}

fn write_output(path: &std::path::Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SolveOutput<'a> {
    scenario: &'a str,
    model: &'a str,
    types: &'a [f64],
    init: usize,
    solution: &'a SolutionSet,
}

fn cmd_solve(args: &SolveArgs, eff: &Effective) -> Result<(), Failure> {
    let spec = load_scenario(&args.scenario)?;
    let cfg = spec.apply(&eff.cfg);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let model = parse_model(&args.model)?;
    let types = parse_f64_list(&args.types, "--types")?;
    if types.len() != spec.agents.len() {
        return Err(usage(format!(
            "--types lists {} aspirations but scenario {} has {} agents",
            types.len(),
            spec.id,
            spec.agents.len()
        )));
    }
    let grid = spec.init_grid();
    let init = grid.get(args.init).ok_or_else(|| {
        usage(format!(
            "--init {} out of range: scenario {} has {} initial conditions",
            args.init,
            spec.id,
            grid.len()
        ))
    })?;
    let paths = spec.paths().map_err(from_eval)?;
    let states = spec.initial_states(&paths, init);
    let tree = build_game_tree(&states, &paths, &cfg).map_err(from_game)?;

    let solution = match model {
        ModelId::Spne => spne(&tree, &types, &cfg),
        ModelId::Sspe => sspe_set(&tree, &types, &cfg),
        ModelId::Mspe => mspe_set(&tree, &types, &cfg),
        ModelId::Qlk => qlk_response(&tree, cfg.logit_lambda, &types, &cfg),
        ModelId::L1 => l1_solution(&tree, &types, &cfg),
        ModelId::Robust => robust_solution(&tree, &types, &cfg),
        ModelId::Ac | ModelId::Nac | ModelId::Maxmax => {
            return Err(usage(format!(
                "model `{}` is a matching baseline without a per-history solution; \
                 solvable models: l1, spne, sspe, mspe, qlk, robust",
                model.name()
            )))
        }
    }
    .map_err(from_game)?;

    let out_path = eff.out.join(format!(
        "solution-{}-{}.json",
        spec.id.to_lowercase(),
        model.name()
    ));
    let output = SolveOutput {
        scenario: &spec.id,
        model: model.name(),
        types: &types,
        init: args.init,
        solution: &solution,
    };
    let mut json = serde_json::to_vec_pretty(&output)
        .map_err(|e| Failure::Data(e.to_string()))?;
    json.push(b'\n');
    write_output(&out_path, &json)?;

    emit_raw!(action_table(&tree, &solution, &spec.id, model, &types, args.init));
    emit!("wrote {}", out_path.display());
    Ok(())
}

fn maneuver_tag(m: Maneuver) -> &'static str {
    match m {
        Maneuver::Wait => "wait",
        Maneuver::Proceed => "proceed",
    }
}

/// Human-readable companion of the solution JSON: per history, per agent,
/// each admissible action with its maneuver and target speed.
fn action_table(
    tree: &GameTree,
    solution: &SolutionSet,
    scenario: &str,
    model: ModelId,
    types: &[f64],
    init: usize,
) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "scenario {scenario}  model {}  types {types:?}  init {init}",
        model.name()
    );
    for (&node_id, per_agent) in &solution.by_history {
        let node = tree.node(node_id);
        let _ = writeln!(out, "history {node_id} (stage {})", node.stage);
        for (&agent, sol) in per_agent {
            let _ = write!(out, "  agent {agent}:");
            match sol.probabilities() {
                Some(probs) => {
                    for (a, p) in probs {
                        let t = node.trajectory(agent, a);
                        let _ = write!(
                            out,
                            " {a}:{}->{:.1}@{p:.4}",
                            maneuver_tag(t.maneuver),
                            t.target_speed
                        );
                    }
                }
                None => {
                    for a in sol.ids() {
                        let t = node.trajectory(agent, a);
                        let _ = write!(
                            out,
                            " {a}:{}->{:.1}",
                            maneuver_tag(t.maneuver),
                            t.target_speed
                        );
                    }
                }
            }
            let _ = writeln!(out);
        }
    }
    if !solution.path.is_empty() {
        let ids: Vec<String> = solution.path.iter().map(|id| id.to_string()).collect();
        let _ = writeln!(out, "equilibrium path: {}", ids.join(" -> "));
    }
    if !solution.fallback_histories.is_empty() {
        let _ = writeln!(
            out,
            "histories resolved by the min-max-regret fallback: {:?}",
            solution.fallback_histories
        );
    }
    out
}

/// Internal histories in ascending id order: where a solution table has rows.
fn internal_nodes(tree: &GameTree) -> impl Iterator<Item = NodeId> + '_ {
    (0..tree.nodes.len()).filter(move |&id| {
        let n = tree.node(id);
        n.stage < tree.stages() && !n.stuck
    })
}

/// Level-1 admissible sets at every history, with each agent's interval
/// beliefs about the others folded from that history's observations.
fn l1_solution(tree: &GameTree, types: &[f64], cfg: &GameConfig) -> Result<SolutionSet, GameError> {
    let n = tree.n_agents();
    let mut out = SolutionSet {
        by_history: BTreeMap::new(),
        equilibrium: BTreeMap::new(),
        fallback_histories: Vec::new(),
        path: Vec::new(),
    };
    for id in internal_nodes(tree) {
        let play = tree.history(id);
        let mut per_agent = BTreeMap::new();
        for agent in 0..n {
            let beliefs: Vec<Option<BeliefL1>> = (0..n)
                .map(|j| {
                    (j != agent).then(|| {
                        let steps = steps_of_agent(tree, &play, j);
                        update_consistent_belief(tree, &steps, j, cfg)
                    })
                })
                .collect();
            let ids = match level1_tie_set(tree, id, &beliefs, agent, types[agent]) {
                Ok(ids) => ids,
                // Histories no automaton type explains get the same
                // treatment as in the closed loop: restart from the
                // uninformed interval.
                Err(GameError::EmptyBelief) => {
                    let fresh: Vec<Option<BeliefL1>> =
                        (0..n).map(|j| (j != agent).then(BeliefL1::full)).collect();
                    level1_tie_set(tree, id, &fresh, agent, types[agent])?
                }
                Err(e) => return Err(e),
            };
            per_agent.insert(agent, AgentSolution::Set(ids));
        }
        out.by_history.insert(id, per_agent);
    }
    Ok(out)
}

/// Robust choices at every history: singleton sets, since the planner picks
/// one action against its least favorable surviving hypothesis.
fn robust_solution(
    tree: &GameTree,
    types: &[f64],
    cfg: &GameConfig,
) -> Result<SolutionSet, GameError> {
    let n = tree.n_agents();
    let hypotheses = expand_types(&cfg.type_grid);
    let mut cache = SolutionCache::new();
    let mut out = SolutionSet {
        by_history: BTreeMap::new(),
        equilibrium: BTreeMap::new(),
        fallback_histories: Vec::new(),
        path: Vec::new(),
    };
    for id in internal_nodes(tree) {
        let play = tree.history(id);
        let mut per_agent = BTreeMap::new();
        for agent in 0..n {
            let beliefs: Vec<(usize, Vec<_>)> = (0..n)
                .filter(|&j| j != agent)
                .map(|j| (j, hypotheses.clone()))
                .collect();
            let decision = robust_response(
                tree,
                id,
                &play,
                &beliefs,
                agent,
                types[agent],
                cfg,
                &mut cache,
            )?;
            per_agent.insert(agent, AgentSolution::Set(vec![decision.action]));
        }
        out.by_history.insert(id, per_agent);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn cmd_simulate(args: &SimulateArgs, eff: &Effective) -> Result<(), Failure> {
    let spec = load_scenario(&args.scenario)?;
    let models = match (&args.models, &eff.models) {
        (Some(list), _) => parse_model_list(list)?,
        (None, Some(names)) => {
            let joined = names.join(",");
            parse_model_list(&joined)?
        }
        (None, None) => SWEEP_MODELS.to_vec(),
    };
    if models.is_empty() {
        return Err(usage("--models lists no models"));
    }

    let report = sweep(&spec, &eff.cfg, &models, eff.seed).map_err(from_eval)?;

    fs::create_dir_all(&eff.out)
        .map_err(|e| Failure::Data(format!("{}: {e}", eff.out.display())))?;
    let csv_path = eff.out.join("metrics.csv");
    write_metrics_csv(&csv_path, &report.rows).map_err(from_eval)?;
    let jsonl_path = eff.out.join("runs.jsonl");
    write_runs_jsonl(&jsonl_path, &report.runs).map_err(from_eval)?;

    emit_raw!(metrics_table(&report.rows));
    emit!(
        "wrote {} ({} rows) and {} ({} runs)",
        csv_path.display(),
        report.rows.len(),
        jsonl_path.display(),
        report.runs.len()
    );
    Ok(())
}

fn metrics_table(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:<10} {:>12} {:>16} {:>10}",
        "model", "scenario", "mean_success", "sd_across_types", "crash_rate"
    );
    for row in rows {
        let _ = writeln!(
            out,
            "{:<8} {:<10} {:>12.3} {:>16.3} {:>10.3}",
            row.model, row.scenario, row.mean_success, row.sd_across_types, row.crash_rate
        );
    }
    out
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

fn cmd_evaluate(args: &EvaluateArgs, eff: &Effective) -> Result<(), Failure> {
    let model = parse_model(&args.model)?;
    for (what, path) in [("trajectory file", &args.tracks), ("manifest", &args.manifest)] {
        if !path.exists() {
            return Err(usage(format!("{what} {} does not exist", path.display())));
        }
    }
    let tracks = read_tracks(&args.tracks).map_err(from_eval)?;
    let manifest = read_manifest(&args.manifest).map_err(from_eval)?;
    let records = assemble_records(&tracks, &manifest, &eff.cfg).map_err(from_eval)?;
    let report = match_rate(&records, model, &eff.cfg).map_err(from_eval)?;

    let out_path = eff.out.join(format!("match-{}.json", model.name()));
    let mut json =
        serde_json::to_vec_pretty(&report).map_err(|e| Failure::Data(e.to_string()))?;
    json.push(b'\n');
    write_output(&out_path, &json)?;

    emit!(
        "{:<8} {:>6} {:>8} {:>10} {:>8} {:>11}",
        "model", "games", "matched", "uncovered", "rate", "mean_gamma"
    );
    let gamma = match report.mean_gamma {
        Some(g) => format!("{g:.4}"),
        None => "-".to_string(),
    };
    emit!(
        "{:<8} {:>6} {:>8} {:>10} {:>8.5} {:>11}",
        model.name(),
        report.total,
        report.matched,
        report.uncovered,
        report.rate(),
        gamma
    );
    emit!("wrote {}", out_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// oracle-check
// ---------------------------------------------------------------------------

fn cmd_oracle_check(args: &OracleArgs, eff: &Effective) -> Result<(), Failure> {
    let concepts: Vec<Concept> = match &args.concepts {
        Some(list) => list
            .split(',')
            .map(|s| {
                let name = s.trim();
                Concept::ALL
                    .iter()
                    .copied()
                    .find(|c| c.name() == name)
                    .ok_or_else(|| {
                        usage(format!(
                            "unknown concept `{name}`; concepts: spne, ac, nac, l1, sspe, \
                             mspe, robust"
                        ))
                    })
            })
            .collect::<Result<_, _>>()?,
        None => Concept::ALL.to_vec(),
    };
    if args.instances == 0 {
        return Err(usage("--instances must be positive"));
    }

    emit!(
        "{:<8} {:>9} {:>10} {:>8} {:>7}",
        "concept", "instances", "agreements", "skipped", "result"
    );
    let mut failed = false;
    let mut diagnostics: Vec<String> = Vec::new();
    for concept in concepts {
        let report = differential_report(concept, args.instances, eff.seed);
        let verdict = if report.passed() { "pass" } else { "FAIL" };
        emit!(
            "{:<8} {:>9} {:>10} {:>8} {:>7}",
            report.concept, report.instances, report.agreements, report.skipped, verdict
        );
        if !report.passed() {
            failed = true;
            for f in report.failures.iter().take(5) {
                diagnostics.push(format!("{}: {f}", report.concept));
            }
        }
    }
    if failed {
        for d in &diagnostics {
            eprintln!("{d}");
        }
        return Err(Failure::Solver(
            "solver disagrees with the brute-force oracle".to_string(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let cli = Cli::parse();
    let eff = match resolve(&cli.overrides) {
        Ok(eff) => eff,
        Err(f) => {
            eprintln!("error: {}", f.message());
            return ExitCode::from(f.code());
        }
    };
    let result = match &cli.cmd {
        Cmd::Solve(args) => cmd_solve(args, &eff),
        Cmd::Simulate(args) => cmd_simulate(args, &eff),
        Cmd::Evaluate(args) => cmd_evaluate(args, &eff),
        Cmd::OracleCheck(args) => cmd_oracle_check(args, &eff),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
