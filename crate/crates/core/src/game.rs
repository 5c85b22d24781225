//! Game configuration, utilities, and the stage-game tree.
//!
//! A game is played over `K = horizon_s / period_s` simultaneous stages. At
//! every stage each agent commits to one maneuver-tagged trajectory of
//! duration `period_s`; the joint choice advances every agent to the
//! trajectory endpoints, which form the child node. Histories are paths from
//! the root, so the tree branches over joint trajectory choices.
//!
//! Stage ("step") utilities score one stage in isolation: a sigmoid of the
//! worst gap to any other agent (safety) and saturating arc-length progress.
//! A type parameter `gamma` aggregates the two lexicographically: safety
//! counts on its own whenever it does not exceed `gamma`, otherwise progress
//! counts. Values over the remaining horizon are discounted, normalized
//! means of the per-stage aggregates plus a frozen-extension continuation
//! term (every agent keeps cruising at its final velocity).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{
    extend_constant, generate_trajectories, min_gap, trajectory_length, KinematicsError, Maneuver,
    KinematicLimits, Path, Trajectory, VehicleState,
};

/// Which comparison direction the accommodating automaton's preference
/// condition uses; see [`crate::automata`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionDirection {
    /// Wait when even the best wait option's safety is at most gamma.
    #[default]
    Equation,
    /// Wait when some wait option reaches safety at least gamma.
    Prose,
}

/// How discounting interacts with lexicographic aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateMode {
    /// Aggregate each stage first, then discount the aggregates.
    #[default]
    PerStep,
    /// Discount raw safety and progress separately, aggregating at the end.
    DiscountRaw,
}

/// Selection rule for simulated agents that hold a *set* of acceptable
/// actions (the satisficing equilibrium concepts).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Highest own aggregated value against the equilibrium complement,
    /// ties to the lowest action id.
    #[default]
    Greedy,
    /// Seeded uniform draw from the acceptable set.
    Uniform,
    /// Lowest action id in the acceptable set: the first option that is good
    /// enough, which by the id ordering is also the most cautious one.
    First,
}

/// Switches for the documented behavioral alternatives. Defaults reproduce
/// the primary semantics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureFlags {
    pub ac_condition: ConditionDirection,
    /// Average (rather than maximize) over consistent opponent trajectories
    /// in the level-1 response.
    pub l1_expectation: bool,
    /// Use the literal safety-only left-hand side in the maneuver-based
    /// equilibrium filter.
    pub mspe_lhs_safety: bool,
    /// Compare single-stage rather than remaining-horizon safety in the
    /// satisficing equilibrium filter.
    pub sspe_step_safety: bool,
    pub aggregate_mode: AggregateMode,
    /// Tolerated history mismatches (per hypothesis) in robust filtering.
    pub consistency_slack: usize,
    /// Resolve stages without a pure equilibrium by the min-max-regret cell
    /// instead of failing.
    pub nash_fallback: bool,
    pub selection: Selection,
    /// Match only the opening maneuver instead of the whole sequence.
    pub first_stage_only: bool,
    /// Report every matching type combination instead of one witness.
    pub witness_all: bool,
}

impl Default for FeatureFlags {
    fn default() -> Self {
        Self {
            ac_condition: ConditionDirection::Equation,
            l1_expectation: false,
            mspe_lhs_safety: false,
            sspe_step_safety: false,
            aggregate_mode: AggregateMode::PerStep,
            consistency_slack: 0,
            nash_fallback: true,
            selection: Selection::Greedy,
            first_stage_only: false,
            witness_all: false,
        }
    }
}

/// All tunables for building and solving a game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameConfig {
    /// Trajectory sample step [s].
    pub dt_s: f64,
    /// Stage duration [s].
    pub period_s: f64,
    /// Game horizon [s]; must be a multiple of `period_s`.
    pub horizon_s: f64,
    /// Per-stage discount factor.
    pub discount: f64,
    /// Number of frozen-extension stages valued beyond the horizon.
    pub continuation_stages: usize,
    /// Safety sigmoid steepness [1/m].
    pub sigmoid_alpha: f64,
    /// Safety sigmoid midpoint gap [m].
    pub sigmoid_d0: f64,
    /// Arc length that saturates the progress utility [m].
    pub progress_cap_m: f64,
    /// Pairwise gap at or below which a run counts as a crash [m].
    pub crash_gap_m: f64,
    /// Trajectory targets sampled per maneuver.
    pub n_samples: usize,
    /// Logit precision of the quantal level-1 policy.
    pub logit_lambda: f64,
    /// Discrete aspiration levels used wherever types are enumerated.
    pub type_grid: Vec<f64>,
    pub limits: KinematicLimits,
    pub flags: FeatureFlags,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            dt_s: 0.1,
            period_s: 2.0,
            horizon_s: 6.0,
            discount: 0.9,
            continuation_stages: 3,
            sigmoid_alpha: 1.5,
            sigmoid_d0: 2.0,
            progress_cap_m: 28.0,
            crash_gap_m: 0.1,
            n_samples: 3,
            logit_lambda: 1.0,
            type_grid: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            limits: KinematicLimits::default(),
            flags: FeatureFlags::default(),
        }
    }
}

impl GameConfig {
    /// Number of decision stages.
    pub fn stages(&self) -> usize {
        (self.horizon_s / self.period_s).round() as usize
    }

    /// Check the structural invariants the rest of the crate relies on.
    pub fn validate(&self) -> Result<(), GameError> {
        let bad = |msg: String| Err(GameError::InvalidConfig(msg));
        if self.dt_s <= 0.0 {
            return bad(format!("sample step must be positive, got {}", self.dt_s));
        }
        let steps = self.period_s / self.dt_s;
        if (steps - steps.round()).abs() > 1e-9 || steps < 1.0 {
            return bad(format!(
                "stage duration {} is not a multiple of the sample step {}",
                self.period_s, self.dt_s
            ));
        }
        let k = self.horizon_s / self.period_s;
        if (k - k.round()).abs() > 1e-9 || k < 1.0 {
            return bad(format!(
                "horizon {} is not a multiple of the stage duration {}",
                self.horizon_s, self.period_s
            ));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad(format!("discount must lie in (0, 1], got {}", self.discount));
        }
        if self.type_grid.is_empty() {
            return bad("the type grid must not be empty".into());
        }
        if self.type_grid.iter().any(|g| !(-1.0..=1.0).contains(g)) {
            return bad("every grid type must lie in [-1, 1]".into());
        }
        if self.type_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("the type grid must be strictly increasing".into());
        }
        if self.n_samples < 1 {
            return bad("need at least one trajectory target per maneuver".into());
        }
        if !(self.logit_lambda > 0.0 && self.logit_lambda.is_finite()) {
            return bad(format!(
                "the logit precision must be positive and finite, got {}",
                self.logit_lambda
            ));
        }
        if !(self.limits.a_min < 0.0 && self.limits.a_max > 0.0 && self.limits.v_max > 0.0) {
            return bad("kinematic limits must allow both braking and accelerating".into());
        }
        if self.progress_cap_m <= 0.0 {
            return bad("the progress cap must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    /// An agent has no trajectory in either maneuver class.
    #[error("agent {agent} is stuck at stage {stage}: no feasible trajectory in either maneuver")]
    Stuck { agent: usize, stage: usize },
    /// A stage matrix admits no pure equilibrium and the fallback is off.
    #[error("no pure-strategy equilibrium at history {node}")]
    NoPureEquilibrium { node: usize },
    /// Observed behavior is inconsistent with every grid type.
    #[error("no level-0 type on the grid is consistent with the observed history")]
    EmptyBelief,
    /// A brute-force enumeration would exceed the safety bound.
    #[error("enumeration of {count} strategy profiles exceeds the bound of {bound}")]
    TooLarge { count: f64, bound: f64 },
}

/// Safety and progress scores for one stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StepUtilities {
    /// Sigmoid-mapped worst gap to any other agent, in [-1, 1).
    pub safety: f64,
    /// Saturating normalized arc length, in [0, 1].
    pub progress: f64,
}

/// Map a gap [m] into a safety score in (-1, 1): the sigmoid is centered at
/// `sigmoid_d0` and scaled by `sigmoid_alpha`.
pub fn safety_utility(gap_m: f64, cfg: &GameConfig) -> f64 {
    2.0 / (1.0 + (-cfg.sigmoid_alpha * (gap_m - cfg.sigmoid_d0)).exp()) - 1.0
}

/// Normalized, saturating progress for an arc length [m].
pub fn progress_utility(length_m: f64, cfg: &GameConfig) -> f64 {
    (length_m / cfg.progress_cap_m).min(1.0)
}

/// Lexicographic aggregation: safety speaks for itself while it is at most
/// `gamma`; above the aspiration level only progress matters.
pub fn aggregate(step: StepUtilities, gamma: f64) -> f64 {
    if step.safety <= gamma {
        step.safety
    } else {
        step.progress
    }
}

/// Sum of the first `periods` discount weights, `d^1 + ... + d^periods`.
pub fn discount_sum(discount: f64, periods: usize) -> f64 {
    let mut total = 0.0;
    let mut w = 1.0;
    for _ in 0..periods {
        w *= discount;
        total += w;
    }
    total
}

/// Normalization weight for values measured from `stage`: the discount sum
/// over the remaining in-horizon stages plus the continuation stages.
pub fn discount_divisor(cfg: &GameConfig, stage: usize) -> f64 {
    discount_sum(cfg.discount, cfg.stages() - stage + cfg.continuation_stages)
}

/// Discounted normalized mean of a play's per-stage values: `step_values`
/// are weighted by `d^1..d^n`, then `continuation` fills `periods` further
/// stages, and the total is normalized by the full weight sum.
pub fn discounted_mean(
    step_values: &[f64],
    continuation: f64,
    periods: usize,
    discount: f64,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut w = 1.0;
    for &v in step_values {
        w *= discount;
        num += w * v;
        den += w;
    }
    for _ in 0..periods {
        w *= discount;
        num += w * continuation;
        den += w;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Node index into [`GameTree::nodes`].
pub type NodeId = usize;

/// An agent's trajectory menu at one node: wait actions first (targets
/// ascending), then proceed actions (targets ascending). Action ids are
/// positions in this list, so "lowest id" tie-breaking is deterministic.
#[derive(Debug, Clone)]
pub struct ActionSet {
    pub trajectories: Vec<Trajectory>,
    wait_count: usize,
}

impl ActionSet {
    /// Sample both maneuver families from `state` along `path`. A maneuver
    /// with no feasible trajectory simply contributes nothing.
    pub fn generate(
        state: &VehicleState,
        path: &Path,
        cfg: &GameConfig,
    ) -> Self {
        let mut trajectories = generate_trajectories(
            state,
            path,
            Maneuver::Wait,
            cfg.n_samples,
            &cfg.limits,
            cfg.dt_s,
            cfg.period_s,
        )
        .unwrap_or_default();
        let wait_count = trajectories.len();
        trajectories.extend(
            generate_trajectories(
                state,
                path,
                Maneuver::Proceed,
                cfg.n_samples,
                &cfg.limits,
                cfg.dt_s,
                cfg.period_s,
            )
            .unwrap_or_default(),
        );
        Self {
            trajectories,
            wait_count,
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Action ids of one maneuver class.
    pub fn ids_of(&self, maneuver: Maneuver) -> std::ops::Range<usize> {
        match maneuver {
            Maneuver::Wait => 0..self.wait_count,
            Maneuver::Proceed => self.wait_count..self.trajectories.len(),
        }
    }

    pub fn maneuver_of(&self, action: usize) -> Maneuver {
        self.trajectories[action].maneuver
    }
}

/// Generate every agent's menu at a joint state.
pub fn generate_action_sets(
    states: &[VehicleState],
    paths: &[Path],
    cfg: &GameConfig,
) -> Vec<ActionSet> {
    states
        .iter()
        .zip(paths)
        .map(|(s, p)| ActionSet::generate(s, p, cfg))
        .collect()
}

/// One simultaneous-move node of the game tree.
#[derive(Debug, Clone)]
pub struct GameNode {
    pub id: NodeId,
    pub stage: usize,
    /// Parent node and the joint action that led here.
    pub parent: Option<(NodeId, usize)>,
    pub states: Vec<VehicleState>,
    pub actions: Vec<ActionSet>,
    /// Agent strides for the mixed-radix joint index (agent 0 major).
    strides: Vec<usize>,
    /// True when some agent has no action at all; the branch freezes here.
    pub stuck: bool,
    /// Child per joint action; `None` past the last decision stage.
    pub children: Vec<Option<NodeId>>,
    /// Step utilities, indexed `joint * n_agents + agent`.
    step: Vec<StepUtilities>,
    /// Frozen-extension utilities (last decision stage only), same indexing.
    cont: Vec<StepUtilities>,
    /// Worst-case safety per `(agent, action)`: the safety utility of the
    /// smallest gap to any opposing trajectory, flattened per agent.
    worst_safety: Vec<Vec<f64>>,
}

impl GameNode {
    pub fn n_agents(&self) -> usize {
        self.states.len()
    }

    /// Number of joint actions.
    pub fn joint_count(&self) -> usize {
        if self.stuck {
            0
        } else {
            self.actions.iter().map(ActionSet::len).product()
        }
    }

    /// Agent `agent`'s action id inside joint action `joint`.
    pub fn action_of(&self, joint: usize, agent: usize) -> usize {
        (joint / self.strides[agent]) % self.actions[agent].len()
    }

    /// Compose per-agent action ids into a joint index.
    pub fn compose(&self, actions: &[usize]) -> usize {
        actions
            .iter()
            .zip(&self.strides)
            .map(|(a, s)| a * s)
            .sum()
    }

    /// The joint index equal to `joint` except that `agent` plays `action`.
    pub fn with_action(&self, joint: usize, agent: usize, action: usize) -> usize {
        let stride = self.strides[agent];
        joint - self.action_of(joint, agent) * stride + action * stride
    }

    pub fn step_utils(&self, joint: usize, agent: usize) -> StepUtilities {
        self.step[joint * self.n_agents() + agent]
    }

    /// Frozen-extension utilities for a terminal joint action.
    pub fn continuation_utils(&self, joint: usize, agent: usize) -> StepUtilities {
        if self.cont.is_empty() {
            StepUtilities::default()
        } else {
            self.cont[joint * self.n_agents() + agent]
        }
    }

    /// Worst-case single-stage safety of one candidate trajectory against
    /// every opposing trajectory at this node.
    pub fn step_safety(&self, agent: usize, action: usize) -> f64 {
        self.worst_safety[agent][action]
    }

    /// Trajectory behind an `(agent, action)` pair.
    pub fn trajectory(&self, agent: usize, action: usize) -> &Trajectory {
        &self.actions[agent].trajectories[action]
    }
}

/// The full stage-game tree. Only decision nodes (stages `0..K`) are
/// materialized; the states after the final stage live in the last stage's
/// trajectory endpoints.
#[derive(Debug, Clone)]
pub struct GameTree {
    pub cfg: GameConfig,
    pub paths: Vec<Path>,
    pub nodes: Vec<GameNode>,
}

impl GameTree {
    pub fn root(&self) -> NodeId {
        0
    }

    pub fn n_agents(&self) -> usize {
        self.nodes[0].states.len()
    }

    pub fn stages(&self) -> usize {
        self.cfg.stages()
    }

    pub fn node(&self, id: NodeId) -> &GameNode {
        &self.nodes[id]
    }

    /// Number of (virtual) outcomes after the final decision stage.
    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.stage == self.stages() - 1)
            .map(GameNode::joint_count)
            .sum()
    }

    /// The `(node, joint action)` history from the root down to `node`
    /// (exclusive of `node` itself).
    pub fn history(&self, node: NodeId) -> Vec<(NodeId, usize)> {
        let mut out = Vec::new();
        let mut cur = node;
        while let Some((p, j)) = self.nodes[cur].parent {
            out.push((p, j));
            cur = p;
        }
        out.reverse();
        out
    }
}

/// Build the game tree rooted at `states`, breadth-first.
pub fn build_game_tree(
    states: &[VehicleState],
    paths: &[Path],
    cfg: &GameConfig,
) -> Result<GameTree, GameError> {
    cfg.validate()?;
    assert_eq!(states.len(), paths.len(), "one path per agent");
    assert!(!states.is_empty(), "need at least one agent");
    let k = cfg.stages();
    let mut tree = GameTree {
        cfg: cfg.clone(),
        paths: paths.to_vec(),
        nodes: Vec::new(),
    };
    tree.nodes.push(blank_node(0, 0, None, states.to_vec()));
    let mut cursor = 0;
    while cursor < tree.nodes.len() {
        let id = cursor;
        cursor += 1;
        let stage = tree.nodes[id].stage;
        let node_states = tree.nodes[id].states.clone();
        let actions = generate_action_sets(&node_states, &tree.paths, cfg);
        if actions.iter().any(ActionSet::is_empty) {
            if id == 0 {
                let agent = actions.iter().position(ActionSet::is_empty).unwrap();
                return Err(GameError::Stuck { agent, stage });
            }
            tree.nodes[id].stuck = true;
            continue;
        }
        let (step, worst_safety) = stage_tables(&actions, cfg);
        let joints = actions.iter().map(ActionSet::len).product::<usize>();
        let strides = strides_of(&actions);
        let last_stage = stage + 1 == k;
        let mut children = vec![None; joints];
        let mut cont = Vec::new();
        if last_stage {
            cont = continuation_table(&actions, &strides, cfg.continuation_stages, cfg);
        } else {
            for joint in 0..joints {
                let child_states: Vec<VehicleState> = actions
                    .iter()
                    .zip(&strides)
                    .map(|(set, stride)| {
                        let a = (joint / stride) % set.len();
                        *set.trajectories[a].end_state()
                    })
                    .collect();
                let child_id = tree.nodes.len();
                tree.nodes
                    .push(blank_node(child_id, stage + 1, Some((id, joint)), child_states));
                children[joint] = Some(child_id);
            }
        }
        let node = &mut tree.nodes[id];
        node.actions = actions;
        node.strides = strides;
        node.children = children;
        node.step = step;
        node.cont = cont;
        node.worst_safety = worst_safety;
    }
    Ok(tree)
}

fn blank_node(
    id: NodeId,
    stage: usize,
    parent: Option<(NodeId, usize)>,
    states: Vec<VehicleState>,
) -> GameNode {
    GameNode {
        id,
        stage,
        parent,
        states,
        actions: Vec::new(),
        strides: Vec::new(),
        stuck: false,
        children: Vec::new(),
        step: Vec::new(),
        cont: Vec::new(),
        worst_safety: Vec::new(),
    }
}

fn strides_of(actions: &[ActionSet]) -> Vec<usize> {
    let n = actions.len();
    let mut strides = vec![1; n];
    for i in (0..n.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * actions[i + 1].len();
    }
    strides
}

/// Pairwise gap matrices -> per-joint step utilities and per-action
/// worst-case safeties.
fn stage_tables(actions: &[ActionSet], cfg: &GameConfig) -> (Vec<StepUtilities>, Vec<Vec<f64>>) {
    let n = actions.len();
    // gap[i][j][a * |A_j| + b] for i < j
    let mut gaps = vec![vec![Vec::new(); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let mut m = Vec::with_capacity(actions[i].len() * actions[j].len());
            for a in &actions[i].trajectories {
                for b in &actions[j].trajectories {
                    m.push(min_gap(a, b).expect("stage trajectories share sampling"));
                }
            }
            gaps[i][j] = m;
        }
    }
    let gap_of = |i: usize, j: usize, ai: usize, aj: usize| -> f64 {
        if i < j {
            gaps[i][j][ai * actions[j].len() + aj]
        } else {
            gaps[j][i][aj * actions[i].len() + ai]
        }
    };

    let progress: Vec<Vec<f64>> = actions
        .iter()
        .map(|set| {
            set.trajectories
                .iter()
                .map(|t| progress_utility(trajectory_length(t), cfg))
                .collect()
        })
        .collect();

    let worst_safety: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..actions[i].len())
                .map(|a| {
                    let mut worst = f64::INFINITY;
                    for j in 0..n {
                        if j == i {
                            continue;
                        }
                        for b in 0..actions[j].len() {
                            worst = worst.min(gap_of(i, j, a, b));
                        }
                    }
                    safety_utility(worst, cfg)
                })
                .collect()
        })
        .collect();

    let strides = strides_of(actions);
    let joints: usize = actions.iter().map(ActionSet::len).product();
    let mut step = Vec::with_capacity(joints * n);
    for joint in 0..joints {
        let ids: Vec<usize> = (0..n)
            .map(|i| (joint / strides[i]) % actions[i].len())
            .collect();
        for i in 0..n {
            let mut worst = f64::INFINITY;
            for j in 0..n {
                if j != i {
                    worst = worst.min(gap_of(i, j, ids[i], ids[j]));
                }
            }
            step.push(StepUtilities {
                safety: safety_utility(worst, cfg),
                progress: progress[i][ids[i]],
            });
        }
    }
    (step, worst_safety)
}

/// Utilities of the frozen extension after a final-stage joint action:
/// worst gap over the whole extension window, progress per period.
fn continuation_table(
    actions: &[ActionSet],
    strides: &[usize],
    periods: usize,
    cfg: &GameConfig,
) -> Vec<StepUtilities> {
    let n = actions.len();
    let joints: usize = actions.iter().map(ActionSet::len).product();
    if periods == 0 {
        return vec![StepUtilities::default(); joints * n];
    }
    let window = periods as f64 * cfg.period_s;
    // Extension segment per (agent, action), including the shared boundary
    // sample so segments of one joint action line up in time.
    let segments: Vec<Vec<Trajectory>> = actions
        .iter()
        .map(|set| {
            set.trajectories
                .iter()
                .map(|t| {
                    let base = t.samples.len();
                    let ext = extend_constant(t, window, cfg.dt_s);
                    Trajectory {
                        maneuver: t.maneuver,
                        target_speed: t.target_speed,
                        samples: ext.samples[base - 1..].to_vec(),
                    }
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(joints * n);
    for joint in 0..joints {
        let ids: Vec<usize> = (0..n)
            .map(|i| (joint / strides[i]) % actions[i].len())
            .collect();
        for i in 0..n {
            let mut worst = f64::INFINITY;
            for j in 0..n {
                if j != i {
                    worst = worst.min(
                        min_gap(&segments[i][ids[i]], &segments[j][ids[j]])
                            .expect("extension segments share sampling"),
                    );
                }
            }
            out.push(StepUtilities {
                safety: safety_utility(worst, cfg),
                progress: progress_utility(
                    trajectory_length(&segments[i][ids[i]]) / periods as f64,
                    cfg,
                ),
            });
        }
    }
    out
}

/// A normalized discounted value over the remaining horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Value {
    /// Mode-dependent combination of safety and progress.
    pub combined: f64,
    /// Discounted normalized mean of the raw safety scores.
    pub safety: f64,
    /// Discounted normalized mean of the raw progress scores.
    pub progress: f64,
}

/// Evaluate agent `agent`'s value at `node` when `first_joint` is played now
/// and `below` dictates the joint action at every later node. The same walk
/// is used by every solver and by the brute-force oracle, so equal plays
/// produce bit-identical values.
pub fn value_from(
    tree: &GameTree,
    node: NodeId,
    first_joint: usize,
    below: &dyn Fn(NodeId) -> usize,
    agent: usize,
    gamma: f64,
) -> Value {
    let cfg = &tree.cfg;
    let k = tree.stages();
    let mut steps = Vec::with_capacity(k - tree.node(node).stage);
    let mut cur = node;
    let mut joint = first_joint;
    let (cont, periods) = loop {
        let n = tree.node(cur);
        steps.push(n.step_utils(joint, agent));
        if n.stage + 1 == k {
            break (n.continuation_utils(joint, agent), cfg.continuation_stages);
        }
        let child = n.children[joint].expect("non-final stages have materialized children");
        let child_node = tree.node(child);
        if child_node.stuck {
            // The branch freezes early: everyone extends the trajectory that
            // led here for the rest of the horizon plus the continuation.
            let periods = (k - child_node.stage) + cfg.continuation_stages;
            break (frozen_utils(tree, cur, joint, agent, periods), periods);
        }
        cur = child;
        joint = below(child);
    };

    let d = cfg.discount;
    let safeties: Vec<f64> = steps.iter().map(|s| s.safety).collect();
    let progresses: Vec<f64> = steps.iter().map(|s| s.progress).collect();
    let safety = discounted_mean(&safeties, cont.safety, periods, d);
    let progress = discounted_mean(&progresses, cont.progress, periods, d);
    let combined = match cfg.flags.aggregate_mode {
        AggregateMode::PerStep => {
            let aggs: Vec<f64> = steps.iter().map(|s| aggregate(*s, gamma)).collect();
            discounted_mean(&aggs, aggregate(cont, gamma), periods, d)
        }
        AggregateMode::DiscountRaw => aggregate(
            StepUtilities { safety, progress },
            gamma,
        ),
    };
    Value {
        combined,
        safety,
        progress,
    }
}

/// Continuation utilities for a joint action whose child froze (cold path;
/// uncached).
pub(crate) fn frozen_utils(
    tree: &GameTree,
    node: NodeId,
    joint: usize,
    agent: usize,
    periods: usize,
) -> StepUtilities {
    let n = tree.node(node);
    let table = continuation_table(&n.actions, &n.strides, periods, &tree.cfg);
    table[joint * n.n_agents() + agent]
}
