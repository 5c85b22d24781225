//! Bundled scenario geometry, closed-loop simulation, and grid sweeps.
//!
//! A scenario file fixes the road layout (agent paths plus the geometric
//! predicate inputs), the initial-condition grid, and optional solver
//! overrides. A sweep crosses that grid with every aspiration assignment
//! and every model under test, simulates each cell closed-loop, and reports
//! mean success, the spread of per-assignment means, and the crash rate.
//!
//! Agent order is meaningful: `agents[0]` is the subject the success
//! predicate talks about (the turner in IC, the merging vehicle in MBI, the
//! pulling-out vehicle in PP), and in the two-agent scenarios `agents[1]`
//! is the on-lane vehicle whose lane frame anchors the predicate.

use std::collections::HashMap;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matching::ModelId;
use super::records::{Track, TrackSample};
use super::replay::states_from_play;
use super::EvalError;
use crate::automata::{maxmax_set, step_automaton, AutomatonKind};
use crate::game::{
    build_game_tree, value_from, GameConfig, GameError, GameTree, NodeId, Selection,
};
use crate::kinematics::{min_gap, Maneuver, Path, VehicleState, STOP_SPEED};
use crate::robust::{filter_consistent, robust_response, PlayStep, SolutionCache};
use crate::strategic::{
    level1_response, mspe_set, qlk_response, spne, sspe_set, BeliefL1, SolutionSet,
};

/// One road user of a scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentSpec {
    /// Human-readable part this agent plays (subject, on-lane, ...).
    pub role: String,
    /// Centerline waypoints the agent is bound to.
    pub path: Vec<[f64; 2]>,
    /// Initial-speed grid [m/s].
    pub speeds_mps: Vec<f64>,
    /// Initial-position grid: arc lengths along `path` [m].
    pub starts_m: Vec<f64>,
    /// Pin this agent to a fixed model instead of the swept one.
    #[serde(default)]
    pub model: Option<String>,
}

/// A scenario file: geometry, grids, and solver overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// `IC`, `MBI`, or `PP`.
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub agents: Vec<AgentSpec>,
    /// Intersection polygon (IC): the region the subject must clear.
    #[serde(default)]
    pub intersection: Option<Vec<[f64; 2]>>,
    /// Where the subject's path joins the on-lane path (MBI, PP).
    #[serde(default)]
    pub merge_point: Option<[f64; 2]>,
    /// Trajectory targets per maneuver, overriding the run configuration.
    #[serde(default)]
    pub n_samples: Option<usize>,
    /// Selection rule override for set-valued models.
    #[serde(default)]
    pub selection: Option<Selection>,
    /// Logit precision override for the quantal model.
    #[serde(default)]
    pub logit_lambda: Option<f64>,
}

/// One agent's initial condition inside a sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitPoint {
    pub speed_mps: f64,
    pub start_m: f64,
}

impl ScenarioSpec {
    pub fn load(path: &std::path::Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path)?;
        let spec: ScenarioSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Structural checks; geometry mistakes fail here rather than deep in a
    /// sweep.
    pub fn validate(&self) -> Result<(), EvalError> {
        let fail = |msg: String| Err(EvalError::Scenario(msg));
        let n_expected = match self.id.as_str() {
            "IC" => 3,
            "MBI" | "PP" => 2,
            other => return fail(format!("unknown scenario id `{other}` (IC, MBI, PP)")),
        };
        if self.agents.len() != n_expected {
            return fail(format!(
                "{} takes exactly {n_expected} agents, got {}",
                self.id,
                self.agents.len()
            ));
        }
        match self.id.as_str() {
            "IC" => {
                let poly = self.intersection.as_deref().unwrap_or(&[]);
                if poly.len() < 3 {
                    return fail("IC needs an intersection polygon of at least 3 vertices".into());
                }
                let path = Path::new(&self.agents[0].path)
                    .map_err(|e| EvalError::Scenario(format!("subject path: {e}")))?;
                let crosses = (0..=(path.total_len() / 0.25) as usize)
                    .any(|k| point_in_polygon(path.point_at(k as f64 * 0.25), poly));
                if !crosses {
                    return fail("the IC subject path never enters the intersection polygon".into());
                }
            }
            _ => {
                if self.merge_point.is_none() {
                    return fail(format!("{} needs a merge point", self.id));
                }
            }
        }
        for (i, agent) in self.agents.iter().enumerate() {
            if agent.path.len() < 2 {
                return fail(format!("agent {i}: a path needs at least two waypoints"));
            }
            if agent.speeds_mps.is_empty() || agent.starts_m.is_empty() {
                return fail(format!("agent {i}: empty initial-condition grid"));
            }
            if agent
                .speeds_mps
                .iter()
                .any(|v| !v.is_finite() || *v < 0.0)
            {
                return fail(format!("agent {i}: initial speeds must be finite and >= 0"));
            }
            if let Some(name) = &agent.model {
                if ModelId::parse(name).is_none() {
                    return fail(format!(
                        "agent {i}: unknown model `{name}` (known: {})",
                        ModelId::ALL.map(|m| m.name()).join(", ")
                    ));
                }
            }
        }
        if let Some(lambda) = self.logit_lambda {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return fail(format!(
                    "the logit precision override must be positive and finite, got {lambda}"
                ));
            }
        }
        Ok(())
    }

    /// The run configuration with this scenario's overrides applied.
    pub fn apply(&self, cfg: &GameConfig) -> GameConfig {
        let mut out = cfg.clone();
        if let Some(n) = self.n_samples {
            out.n_samples = n;
        }
        if let Some(sel) = self.selection {
            out.flags.selection = sel;
        }
        if let Some(lambda) = self.logit_lambda {
            out.logit_lambda = lambda;
        }
        out
    }

    pub fn paths(&self) -> Result<Vec<Path>, EvalError> {
        self.agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                Path::new(&a.path).map_err(|e| EvalError::Scenario(format!("agent {i} path: {e}")))
            })
            .collect()
    }

    /// Cross product of every agent's (speed x start) options, in row-major
    /// agent order.
    pub fn init_grid(&self) -> Vec<Vec<InitPoint>> {
        self.agents
            .iter()
            .map(|a| {
                a.speeds_mps
                    .iter()
                    .cartesian_product(&a.starts_m)
                    .map(|(&speed_mps, &start_m)| InitPoint { speed_mps, start_m })
                    .collect::<Vec<_>>()
            })
            .multi_cartesian_product()
            .collect()
    }

    /// Initial vehicle states for one grid point.
    pub fn initial_states(&self, paths: &[Path], point: &[InitPoint]) -> Vec<VehicleState> {
        point
            .iter()
            .zip(paths)
            .map(|(p, path)| {
                let pos = path.point_at(p.start_m);
                VehicleState::moving(pos[0], pos[1], p.speed_mps, path.heading_at(p.start_m))
            })
            .collect()
    }
}

/// Even-odd ray casting; points on an edge count as inside often enough for
/// coarse region tests, which is all the predicates need.
pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// One simulated cell: who played what, and how it ended.
#[derive(Debug, Clone, Serialize)]
pub struct OutcomeRecord {
    pub scenario: String,
    pub model: String,
    pub types: Vec<f64>,
    pub init: Vec<InitPoint>,
    pub seed: u64,
    pub success: bool,
    pub crash: bool,
    pub stuck: bool,
    /// Smallest pairwise gap over the whole run [m].
    pub min_gap_m: f64,
    /// Chosen action ids, one row per stage.
    pub actions: Vec<Vec<usize>>,
    /// Maneuver classes of the chosen actions, same shape.
    pub maneuvers: Vec<Vec<Maneuver>>,
    /// Times a level-1 agent's opponent hypotheses all died and its beliefs
    /// were restarted from scratch.
    pub belief_resets: usize,
}

/// Raw closed-loop result before the scenario predicate is applied.
pub struct LoopOutcome {
    pub play: Vec<PlayStep>,
    pub actions: Vec<Vec<usize>>,
    pub stuck: bool,
    pub min_gap_m: f64,
    pub belief_resets: usize,
}

/// Per-tree solver reuse across the runs of a sweep: the satisficing cache
/// feeds robust hypothesis checks, the whole-tree map everything else.
pub struct SolverBank {
    cache: SolutionCache,
    whole: HashMap<(&'static str, Vec<u64>), Option<SolutionSet>>,
}

impl SolverBank {
    pub fn new() -> Self {
        Self {
            cache: SolutionCache::new(),
            whole: HashMap::new(),
        }
    }

    fn solved(
        &mut self,
        model: ModelId,
        tree: &GameTree,
        types: &[f64],
        cfg: &GameConfig,
    ) -> Option<&SolutionSet> {
        let key = (
            model.name(),
            types.iter().map(|g| g.to_bits()).collect::<Vec<u64>>(),
        );
        self.whole
            .entry(key)
            .or_insert_with(|| {
                match model {
                    ModelId::Spne => spne(tree, types, cfg),
                    ModelId::Sspe => sspe_set(tree, types, cfg),
                    ModelId::Mspe => mspe_set(tree, types, cfg),
                    ModelId::Qlk => qlk_response(tree, cfg.logit_lambda, types, cfg),
                    _ => unreachable!("only whole-tree solvers live in the bank"),
                }
                .ok()
            })
            .as_ref()
    }
}

impl Default for SolverBank {
    fn default() -> Self {
        Self::new()
    }
}

/// Greedy pick from a satisficing set: own aggregated value with everyone
/// else held at the stage equilibrium, ties to the lowest action id.
fn greedy_in_set(
    tree: &GameTree,
    sol: &SolutionSet,
    node_id: NodeId,
    agent: usize,
    gamma: f64,
    ids: &[usize],
) -> usize {
    let node = tree.node(node_id);
    let eq = sol.equilibrium[&node_id];
    let below = |c: NodeId| sol.equilibrium[&c];
    let mut best = (f64::NEG_INFINITY, ids[0]);
    for &a in ids {
        let v = value_from(tree, node_id, node.with_action(eq, agent, a), &below, agent, gamma)
            .combined;
        if v > best.0 {
            best = (v, a);
        }
    }
    best.1
}

fn pick_from_set(
    ids: &[usize],
    selection: Selection,
    rng: &mut ChaCha8Rng,
    greedy: impl FnOnce(&[usize]) -> usize,
) -> usize {
    match selection {
        Selection::Greedy => greedy(ids),
        Selection::Uniform => ids[rng.gen_range(0..ids.len())],
        Selection::First => ids[0],
    }
}

/// Simulate one cell: every agent consults its model at the realized node,
/// the joint action advances the tree, beliefs fold in what was actually
/// played. An agent with no feasible trajectory ends the run with the stuck
/// flag set instead of failing the sweep.
pub fn run_closed_loop(
    tree: &GameTree,
    assignment: &[ModelId],
    types: &[f64],
    cfg: &GameConfig,
    seed: u64,
    bank: &mut SolverBank,
) -> Result<LoopOutcome, GameError> {
    assert_eq!(assignment.len(), tree.n_agents());
    assert_eq!(types.len(), tree.n_agents());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let selection = cfg.flags.selection;
    let n = tree.n_agents();
    let stages = tree.stages();

    // Level-1 agents track interval beliefs about everyone else.
    let mut beliefs: Vec<Option<Vec<Option<BeliefL1>>>> = assignment
        .iter()
        .enumerate()
        .map(|(i, m)| {
            (*m == ModelId::L1)
                .then(|| (0..n).map(|j| (j != i).then(BeliefL1::full)).collect())
        })
        .collect();

    let mut play: Vec<PlayStep> = Vec::with_capacity(stages);
    let mut actions: Vec<Vec<usize>> = Vec::with_capacity(stages);
    let mut min_gap_m = f64::INFINITY;
    let mut belief_resets = 0usize;
    let mut stuck = false;
    let mut at = tree.root();

    'stages: for stage in 0..stages {
        let node = tree.node(at);
        if node.stuck {
            stuck = true;
            break;
        }
        let mut ids = Vec::with_capacity(n);
        for agent in 0..n {
            let gamma = types[agent];
            let chosen = match assignment[agent] {
                ModelId::Ac | ModelId::Nac => {
                    let kind = if assignment[agent] == ModelId::Ac {
                        AutomatonKind::AC
                    } else {
                        AutomatonKind::NAC
                    };
                    match step_automaton(kind, node, agent, gamma, cfg) {
                        Ok((_, support)) => {
                            pick_from_set(&support, selection, &mut rng, |s| s[0])
                        }
                        Err(GameError::Stuck { .. }) => {
                            stuck = true;
                            break 'stages;
                        }
                        Err(e) => return Err(e),
                    }
                }
                ModelId::Maxmax => {
                    let set = maxmax_set(node, agent, gamma)?;
                    pick_from_set(&set, selection, &mut rng, |s| s[0])
                }
                ModelId::L1 => {
                    let view = beliefs[agent].as_ref().expect("level-1 agents hold beliefs");
                    match level1_response(tree, at, view, agent, gamma) {
                        Ok(choice) => choice.action,
                        Err(GameError::EmptyBelief) => {
                            // every hypothesis about someone died: restart
                            // from the uninformed interval and re-decide
                            belief_resets += 1;
                            let fresh: Vec<Option<BeliefL1>> =
                                (0..n).map(|j| (j != agent).then(BeliefL1::full)).collect();
                            let choice = level1_response(tree, at, &fresh, agent, gamma)?;
                            beliefs[agent] = Some(fresh);
                            choice.action
                        }
                        Err(e) => return Err(e),
                    }
                }
                ModelId::Spne => {
                    let sol = bank
                        .solved(ModelId::Spne, tree, types, cfg)
                        .expect("fallback-enabled equilibrium always solves");
                    node.action_of(sol.equilibrium[&at], agent)
                }
                ModelId::Sspe | ModelId::Mspe => {
                    let Some(sol) = bank.solved(assignment[agent], tree, types, cfg) else {
                        return Err(GameError::NoPureEquilibrium { node: at });
                    };
                    let ids = sol.by_history[&at][&agent].ids();
                    if ids.is_empty() {
                        // an empty maneuver filter falls back to the stage
                        // equilibrium action itself
                        node.action_of(sol.equilibrium[&at], agent)
                    } else {
                        // borrow dance: the greedy closure needs the bank's
                        // solution immutably
                        let sel = pick_from_set(&ids, selection, &mut rng, |s| {
                            greedy_in_set(tree, sol, at, agent, gamma, s)
                        });
                        sel
                    }
                }
                ModelId::Qlk => {
                    let sol = bank
                        .solved(ModelId::Qlk, tree, types, cfg)
                        .expect("the quantal policy is total");
                    let probs = sol.by_history[&at][&agent]
                        .probabilities()
                        .expect("the quantal solution is weighted");
                    // the policy is a distribution; realize it by seeded
                    // inverse-CDF sampling regardless of the selection rule
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut pick = probs.last().expect("non-stuck nodes have actions").0;
                    for &(a, p) in &probs {
                        acc += p;
                        if u < acc {
                            pick = a;
                            break;
                        }
                    }
                    pick
                }
                ModelId::Robust => {
                    let views: Vec<(usize, Vec<_>)> = (0..n)
                        .filter(|&j| j != agent)
                        .map(|j| {
                            (j, filter_consistent(tree, &play, j, gamma, cfg, &mut bank.cache))
                        })
                        .collect();
                    match robust_response(tree, at, &play, &views, agent, gamma, cfg, &mut bank.cache)
                    {
                        Ok(d) => d.action,
                        Err(GameError::Stuck { .. }) => {
                            stuck = true;
                            break 'stages;
                        }
                        Err(e) => return Err(e),
                    }
                }
            };
            ids.push(chosen);
        }

        // realized gaps of this stage
        for i in 0..n {
            for j in (i + 1)..n {
                let gap = min_gap(node.trajectory(i, ids[i]), node.trajectory(j, ids[j]))
                    .expect("trajectories of one node share the sampling");
                min_gap_m = min_gap_m.min(gap);
            }
        }

        let joint = node.compose(&ids);
        play.push((at, joint));
        actions.push(ids.clone());

        // level-1 observers fold in what was just played
        for i in 0..n {
            if let Some(view) = beliefs[i].as_mut() {
                for (j, &a) in ids.iter().enumerate() {
                    if let Some(b) = view[j].as_mut() {
                        b.observe(node, j, node.actions[j].maneuver_of(a), cfg);
                    }
                }
            }
        }

        if stage + 1 < stages {
            at = node.children[joint].expect("inner joints of non-stuck nodes have children");
        }
    }

    Ok(LoopOutcome {
        play,
        actions,
        stuck,
        min_gap_m,
        belief_resets,
    })
}

/// Final states after the last played stage.
fn final_states(tree: &GameTree, outcome: &LoopOutcome) -> Vec<VehicleState> {
    match outcome.play.last() {
        Some(&(node_id, joint)) => {
            let node = tree.node(node_id);
            (0..tree.n_agents())
                .map(|i| *node.trajectory(i, node.action_of(joint, i)).end_state())
                .collect()
        }
        None => tree.node(tree.root()).states.clone(),
    }
}

/// Scenario-specific success predicate. Crashes and stuck runs never count
/// as success.
fn judge(
    spec: &ScenarioSpec,
    paths: &[Path],
    tree: &GameTree,
    outcome: &LoopOutcome,
    crash: bool,
) -> bool {
    if crash || outcome.stuck || outcome.play.len() < tree.stages() {
        return false;
    }
    let finals = final_states(tree, outcome);
    match spec.id.as_str() {
        "IC" => {
            let poly = spec.intersection.as_deref().expect("validated: IC has a polygon");
            let subject = &paths[0];
            // arc length at which the subject's path last leaves the polygon
            let mut exit_arc = 0.0;
            let steps = (subject.total_len() / 0.25).ceil() as usize;
            for k in 0..=steps {
                let s = k as f64 * 0.25;
                if point_in_polygon(subject.point_at(s), poly) {
                    exit_arc = s;
                }
            }
            let cleared = subject.project([finals[0].x, finals[0].y]) > exit_arc;
            let blocked = finals
                .iter()
                .any(|f| point_in_polygon([f.x, f.y], poly) && f.speed() < STOP_SPEED);
            cleared && !blocked
        }
        "MBI" => {
            let lane = &paths[1];
            let s_subject = lane.project([finals[0].x, finals[0].y]);
            let on_lane = {
                let q = lane.point_at(s_subject);
                (q[0] - finals[0].x).hypot(q[1] - finals[0].y) <= 1.75
            };
            let s_other = lane.project([finals[1].x, finals[1].y]);
            on_lane && s_subject > s_other
        }
        "PP" => {
            let lane = &paths[1];
            let mp = spec.merge_point.expect("validated: PP has a merge point");
            let mp_arc = lane.project(mp);
            // first stage the subject chose a proceed-class action
            let first_proceed = outcome.play.iter().enumerate().find(|&(stage, &(nid, _))| {
                let node = tree.node(nid);
                let a = outcome.actions[stage][0];
                node.actions[0].maneuver_of(a) == Maneuver::Proceed
            });
            match first_proceed {
                // never pulling out violates nothing
                None => true,
                Some((_, &(nid, _))) => {
                    let s = tree.node(nid).states[1];
                    lane.project([s.x, s.y]) >= mp_arc
                }
            }
        }
        other => unreachable!("validated scenario id `{other}`"),
    }
}

/// One row of the metrics table.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub model: String,
    pub scenario: String,
    pub mean_success: f64,
    pub sd_across_types: f64,
    pub crash_rate: f64,
}

/// Everything a sweep produces: the metrics table and every raw run.
#[derive(Debug)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub runs: Vec<OutcomeRecord>,
}

fn population_sd(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Aggregate one model's runs: overall mean success and crash rate, spread
/// taken across the per-aspiration-assignment means.
fn summarize(
    model: ModelId,
    scenario: &str,
    per_combo: &[Vec<&OutcomeRecord>],
) -> SweepRow {
    let combo_means: Vec<f64> = per_combo
        .iter()
        .map(|runs| {
            runs.iter().filter(|r| r.success).count() as f64 / runs.len().max(1) as f64
        })
        .collect();
    let all: Vec<&OutcomeRecord> = per_combo.iter().flatten().copied().collect();
    let mean_success = all.iter().filter(|r| r.success).count() as f64 / all.len().max(1) as f64;
    let crash_rate = all.iter().filter(|r| r.crash).count() as f64 / all.len().max(1) as f64;
    SweepRow {
        model: model.name().to_string(),
        scenario: scenario.to_string(),
        mean_success,
        sd_across_types: population_sd(&combo_means),
        crash_rate,
    }
}

/// Cross models x aspiration assignments x initial conditions, simulate
/// every cell, and aggregate per model. Per-cell seeds derive from
/// `base_seed` and the cell index alone, so results do not depend on
/// scheduling.
pub fn sweep(
    spec: &ScenarioSpec,
    cfg_in: &GameConfig,
    models: &[ModelId],
    base_seed: u64,
) -> Result<SweepReport, EvalError> {
    spec.validate()?;
    let cfg = spec.apply(cfg_in);
    cfg.validate().map_err(EvalError::Game)?;
    let paths = spec.paths()?;
    let n = spec.agents.len();

    let assignments: Vec<(ModelId, Vec<ModelId>)> = models
        .iter()
        .map(|&m| {
            let per_agent = spec
                .agents
                .iter()
                .map(|a| match &a.model {
                    None => Ok(m),
                    Some(name) => ModelId::parse(name).ok_or_else(|| {
                        EvalError::Scenario(format!("unknown pinned model `{name}`"))
                    }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((m, per_agent))
        })
        .collect::<Result<_, EvalError>>()?;

    let combos: Vec<Vec<f64>> = (0..n)
        .map(|_| cfg.type_grid.iter().copied())
        .multi_cartesian_product()
        .collect();
    let inits = spec.init_grid();

    // One tree per initial condition, shared across models and assignments;
    // each parallel worker owns one tree plus its solver bank.
    let per_init: Vec<Result<Vec<(usize, OutcomeRecord)>, EvalError>> = inits
        .par_iter()
        .enumerate()
        .map(|(ii, init)| {
            let states = spec.initial_states(&paths, init);
            let tree = build_game_tree(&states, &paths, &cfg).map_err(EvalError::Game)?;
            let mut bank = SolverBank::new();
            let mut out = Vec::with_capacity(assignments.len() * combos.len());
            for (mi, (model, assignment)) in assignments.iter().enumerate() {
                for (ci, types) in combos.iter().enumerate() {
                    let cell = (mi * combos.len() + ci) * inits.len() + ii;
                    let seed = base_seed
                        ^ (cell as u64)
                            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                            .wrapping_add(0xD1B5_4A32_D192_ED03);
                    let outcome = run_closed_loop(&tree, assignment, types, &cfg, seed, &mut bank)
                        .map_err(EvalError::Game)?;
                    let crash = outcome.min_gap_m <= cfg.crash_gap_m;
                    let success = judge(spec, &paths, &tree, &outcome, crash);
                    let maneuvers = outcome
                        .play
                        .iter()
                        .zip(&outcome.actions)
                        .map(|(&(nid, _), row)| {
                            let node = tree.node(nid);
                            row.iter()
                                .enumerate()
                                .map(|(i, &a)| node.actions[i].maneuver_of(a))
                                .collect()
                        })
                        .collect();
                    out.push((
                        cell,
                        OutcomeRecord {
                            scenario: spec.id.clone(),
                            model: model.name().to_string(),
                            types: types.clone(),
                            init: init.clone(),
                            seed,
                            success,
                            crash,
                            stuck: outcome.stuck,
                            min_gap_m: outcome.min_gap_m,
                            actions: outcome.actions,
                            maneuvers,
                            belief_resets: outcome.belief_resets,
                        },
                    ));
                }
            }
            Ok(out)
        })
        .collect();

    let mut indexed: Vec<(usize, OutcomeRecord)> = Vec::new();
    for chunk in per_init {
        indexed.extend(chunk?);
    }
    indexed.sort_by_key(|(cell, _)| *cell);
    let runs: Vec<OutcomeRecord> = indexed.into_iter().map(|(_, r)| r).collect();

    let mut rows = Vec::with_capacity(models.len());
    for (mi, &model) in models.iter().enumerate() {
        let per_combo: Vec<Vec<&OutcomeRecord>> = (0..combos.len())
            .map(|ci| {
                let lo = (mi * combos.len() + ci) * inits.len();
                runs[lo..lo + inits.len()].iter().collect()
            })
            .collect();
        rows.push(summarize(model, &spec.id, &per_combo));
    }
    Ok(SweepReport { rows, runs })
}

/// Write the metrics table; column order is part of the interface.
pub fn write_metrics_csv(path: &std::path::Path, rows: &[SweepRow]) -> Result<(), EvalError> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Write one JSON object per run, in sweep cell order.
pub fn write_runs_jsonl(path: &std::path::Path, runs: &[OutcomeRecord]) -> Result<(), EvalError> {
    use std::io::Write as _;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for run in runs {
        serde_json::to_writer(&mut f, run)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Export a played history in the ingest schema, one track per agent with
/// ids `0..n`.
pub fn tracks_from_play(tree: &GameTree, play: &[PlayStep], dt: f64) -> Vec<Track> {
    (0..tree.n_agents())
        .map(|agent| Track {
            id: agent as u64,
            samples: states_from_play(tree, play, agent)
                .into_iter()
                .enumerate()
                .map(|(k, state)| TrackSample {
                    frame: k as u64,
                    t_s: k as f64 * dt,
                    state,
                })
                .collect(),
        })
        .collect()
}
