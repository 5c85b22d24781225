//! Strategic solvers: consistent-belief level-1 response, subgame-perfect
//! equilibrium by backward induction, the two satisficing solution sets
//! built on top of it, and the quantal level-k baseline.
//!
//! The level-1 machinery watches an opponent and maintains, per automaton
//! kind, the interval of aspiration levels that could have produced the
//! observed maneuvers; the response then best-responds against the union of
//! automaton supports over the surviving grid types. The equilibrium-family
//! solvers are complete-information: they take one aspiration level per
//! agent and work on the full tree.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};

use itertools::Itertools;
use serde::Serialize;

use crate::automata::{max_step_safety, maxmax_set, step_automaton, AutomatonKind};
use crate::game::{
    aggregate, discount_divisor, discount_sum, frozen_utils, value_from, ConditionDirection,
    GameConfig, GameError, GameNode, GameTree, NodeId,
};
use crate::kinematics::Maneuver;

// ---------------------------------------------------------------------------
// Consistent beliefs
// ---------------------------------------------------------------------------

/// A (possibly half-open, possibly empty) interval of aspiration levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub lo_open: bool,
    pub hi: f64,
    pub hi_open: bool,
}

impl Interval {
    /// The full aspiration range, both ends closed.
    pub fn full() -> Self {
        Self {
            lo: -1.0,
            lo_open: false,
            hi: 1.0,
            hi_open: false,
        }
    }

    pub fn empty() -> Self {
        Self {
            lo: 1.0,
            lo_open: true,
            hi: -1.0,
            hi_open: true,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && (self.lo_open || self.hi_open))
    }

    pub fn contains(&self, g: f64) -> bool {
        let above = g > self.lo || (!self.lo_open && g == self.lo);
        let below = g < self.hi || (!self.hi_open && g == self.hi);
        above && below
    }

    /// Intersect with `{g : g >= bound}` (or `> bound` when open).
    pub fn tighten_lower(&mut self, bound: f64, open: bool) {
        if bound > self.lo {
            self.lo = bound;
            self.lo_open = open;
        } else if bound == self.lo {
            self.lo_open |= open;
        }
    }

    /// Intersect with `{g : g <= bound}` (or `< bound` when open).
    pub fn tighten_upper(&mut self, bound: f64, open: bool) {
        if bound < self.hi {
            self.hi = bound;
            self.hi_open = open;
        } else if bound == self.hi {
            self.hi_open |= open;
        }
    }

    /// Grid types inside the interval.
    pub fn grid_types<'a>(&'a self, grid: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        grid.iter().copied().filter(|&g| self.contains(g))
    }
}

/// Per-automaton-kind intervals of aspiration levels consistent with an
/// observed history. An empty interval means the corresponding automaton
/// cannot explain the history at all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeliefL1 {
    pub ac: Interval,
    pub nac: Interval,
}

impl BeliefL1 {
    pub fn full() -> Self {
        Self {
            ac: Interval::full(),
            nac: Interval::full(),
        }
    }

    /// Fold one observed maneuver at `node` into both intervals.
    pub fn observe(&mut self, node: &GameNode, agent: usize, maneuver: Maneuver, cfg: &GameConfig) {
        let best_wait = max_step_safety(node, agent, Maneuver::Wait);
        let best_proceed = max_step_safety(node, agent, Maneuver::Proceed);
        apply_observation(
            &mut self.ac,
            AutomatonKind::AC,
            maneuver,
            best_wait,
            best_proceed.is_none(),
            cfg.flags.ac_condition,
        );
        apply_observation(
            &mut self.nac,
            AutomatonKind::NAC,
            maneuver,
            best_proceed,
            best_wait.is_none(),
            cfg.flags.ac_condition,
        );
    }
}

/// One observed stage of an agent's play: the node it was at, the in-tree
/// trajectory its motion mapped to, and the maneuver class that was actually
/// observed (kept separately so classification never depends on the
/// projection).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedStep {
    pub node: NodeId,
    pub action: usize,
    pub maneuver: Maneuver,
}

/// Tighten `interval` with one observation of automaton `kind`.
///
/// `best_directed` is the best single-stage safety in the maneuver class the
/// kind's preference condition references (wait for AC, proceed for NAC), or
/// `None` when that class is empty; `other_empty` says whether the opposite
/// class is empty. When either class is missing the automaton emits one
/// maneuver regardless of its aspiration, so the observation is either
/// uninformative or impossible.
pub fn apply_observation(
    interval: &mut Interval,
    kind: AutomatonKind,
    observed: Maneuver,
    best_directed: Option<f64>,
    other_empty: bool,
    direction: ConditionDirection,
) {
    let directed_maneuver = match kind {
        AutomatonKind::AC => Maneuver::Wait,
        AutomatonKind::NAC => Maneuver::Proceed,
    };
    let Some(best) = best_directed else {
        // Condition is forced false; the automaton emits the other class.
        if observed == directed_maneuver {
            *interval = Interval::empty();
        }
        return;
    };
    if other_empty {
        // Both condition outcomes end up emitting the directed class.
        if observed != directed_maneuver {
            *interval = Interval::empty();
        }
        return;
    }
    let condition_held = observed == directed_maneuver;
    match (kind, direction) {
        // Condition: best <= gamma. Held: gamma >= best; failed: gamma < best.
        (AutomatonKind::AC, ConditionDirection::Equation) => {
            if condition_held {
                interval.tighten_lower(best, false);
            } else {
                interval.tighten_upper(best, true);
            }
        }
        // Flipped reading: best >= gamma.
        (AutomatonKind::AC, ConditionDirection::Prose) => {
            if condition_held {
                interval.tighten_upper(best, false);
            } else {
                interval.tighten_lower(best, true);
            }
        }
        // Condition: best > gamma. Held: gamma < best; failed: gamma >= best.
        (AutomatonKind::NAC, _) => {
            if condition_held {
                interval.tighten_upper(best, true);
            } else {
                interval.tighten_lower(best, false);
            }
        }
    }
}

/// The belief after folding an entire observed history of one agent.
pub fn update_consistent_belief(
    tree: &GameTree,
    steps: &[ObservedStep],
    agent: usize,
    cfg: &GameConfig,
) -> BeliefL1 {
    let mut belief = BeliefL1::full();
    for step in steps {
        belief.observe(tree.node(step.node), agent, step.maneuver, cfg);
    }
    belief
}

/// Union of automaton supports over every grid type the belief still admits.
/// Sorted, deduplicated action ids.
pub fn level0_consistent_actions(
    node: &GameNode,
    belief: &BeliefL1,
    agent: usize,
    cfg: &GameConfig,
) -> Result<Vec<usize>, GameError> {
    let mut out: Vec<usize> = Vec::new();
    let mut any_type = false;
    for (kind, interval) in [
        (AutomatonKind::AC, &belief.ac),
        (AutomatonKind::NAC, &belief.nac),
    ] {
        for gamma in interval.grid_types(&cfg.type_grid) {
            any_type = true;
            let (_, support) = step_automaton(kind, node, agent, gamma, cfg)?;
            out.extend(support);
        }
    }
    if !any_type {
        return Err(GameError::EmptyBelief);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

// ---------------------------------------------------------------------------
// Level-1 response
// ---------------------------------------------------------------------------

/// Argmax over a rows-by-columns value grid, scanning rows then columns and
/// keeping strict improvements only, so ties resolve to the lexicographically
/// lowest (row, column).
pub fn argmax_grid(rows: usize, cols: usize, value: &dyn Fn(usize, usize) -> f64) -> (usize, usize) {
    assert!(rows > 0 && cols > 0, "argmax over an empty grid");
    let mut best = f64::NEG_INFINITY;
    let mut arg = (0, 0);
    for r in 0..rows {
        for c in 0..cols {
            let v = value(r, c);
            if v > best {
                best = v;
                arg = (r, c);
            }
        }
    }
    arg
}

/// The level-1 choice at one node: the agent's own best-responding
/// trajectory and the full joint action of the maximizing pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct L1Choice {
    pub action: usize,
    pub joint: usize,
}

struct L1Rollout<'a> {
    tree: &'a GameTree,
    /// One belief per agent; `None` for the responder itself.
    beliefs: &'a [Option<BeliefL1>],
    agent: usize,
    gamma: f64,
    memo: RefCell<HashMap<NodeId, L1Choice>>,
}

impl L1Rollout<'_> {
    /// Sorted consistent sets for every opponent, in agent order.
    fn opponent_sets(&self, node: &GameNode) -> Result<Vec<(usize, Vec<usize>)>, GameError> {
        let cfg = &self.tree.cfg;
        (0..node.n_agents())
            .filter(|&j| j != self.agent)
            .map(|j| {
                let belief = self.beliefs[j]
                    .as_ref()
                    .expect("every opponent carries a belief");
                level0_consistent_actions(node, belief, j, cfg).map(|set| (j, set))
            })
            .collect()
    }

    fn choose(&self, id: NodeId) -> L1Choice {
        if let Some(&c) = self.memo.borrow().get(&id) {
            return c;
        }
        let node = self.tree.node(id);
        let own: Vec<usize> = (0..node.actions[self.agent].len()).collect();
        let sets = self
            .opponent_sets(node)
            .expect("belief admits a grid type (checked at the entry node)");
        let combos: Vec<Vec<usize>> = if sets.is_empty() {
            vec![Vec::new()]
        } else {
            sets.iter()
                .map(|(_, set)| set.iter().copied())
                .multi_cartesian_product()
                .collect()
        };
        let joint_of = |own_action: usize, combo: &[usize]| -> usize {
            let mut ids = vec![0usize; node.n_agents()];
            ids[self.agent] = own_action;
            for ((j, _), &b) in sets.iter().zip(combo) {
                ids[*j] = b;
            }
            node.compose(&ids)
        };
        let value = |r: usize, c: usize| -> f64 {
            let joint = joint_of(own[r], &combos[c]);
            value_from(
                self.tree,
                id,
                joint,
                &|child| self.choose(child).joint,
                self.agent,
                self.gamma,
            )
            .combined
        };
        let choice = if self.tree.cfg.flags.l1_expectation {
            // Average over opponent combinations; the pairing walked below
            // resolves to the first combination.
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (r, _) in own.iter().enumerate() {
                let mean = (0..combos.len()).map(|c| value(r, c)).sum::<f64>() / combos.len() as f64;
                if mean > best {
                    best = mean;
                    arg = r;
                }
            }
            L1Choice {
                action: own[arg],
                joint: joint_of(own[arg], &combos[0]),
            }
        } else {
            let (r, c) = argmax_grid(own.len(), combos.len(), &value);
            L1Choice {
                action: own[r],
                joint: joint_of(own[r], &combos[c]),
            }
        };
        self.memo.borrow_mut().insert(id, choice);
        choice
    }
}

/// Best response of `agent` at `node` against the level-0 models its
/// beliefs still admit: maximize the discounted value over (own trajectory,
/// consistent opponent trajectories) pairings, assuming the same response
/// process repeats at later nodes with the belief frozen. Ties go to the
/// lexicographically lowest ids.
pub fn level1_response(
    tree: &GameTree,
    node: NodeId,
    beliefs: &[Option<BeliefL1>],
    agent: usize,
    gamma: f64,
) -> Result<L1Choice, GameError> {
    let roll = L1Rollout {
        tree,
        beliefs,
        agent,
        gamma,
        memo: RefCell::new(HashMap::new()),
    };
    // Surface EmptyBelief eagerly; deeper nodes share the frozen belief and
    // their supports are never empty, so the rollout itself cannot fail.
    roll.opponent_sets(tree.node(node))?;
    Ok(roll.choose(node))
}

/// Every own action whose level-1 score ties the optimum at `node`: the
/// per-action score is the max (or, under the expectation switch, the mean)
/// over consistent opponent pairings of the rollout value. Ascending ids.
pub fn level1_tie_set(
    tree: &GameTree,
    node: NodeId,
    beliefs: &[Option<BeliefL1>],
    agent: usize,
    gamma: f64,
) -> Result<Vec<usize>, GameError> {
    let roll = L1Rollout {
        tree,
        beliefs,
        agent,
        gamma,
        memo: RefCell::new(HashMap::new()),
    };
    let n = tree.node(node);
    let sets = roll.opponent_sets(n)?;
    let combos: Vec<Vec<usize>> = if sets.is_empty() {
        vec![Vec::new()]
    } else {
        sets.iter()
            .map(|(_, set)| set.iter().copied())
            .multi_cartesian_product()
            .collect()
    };
    let n_own = n.actions[agent].len();
    let scores: Vec<f64> = (0..n_own)
        .map(|a| {
            let values = combos.iter().map(|combo| {
                let mut ids = vec![0usize; n.n_agents()];
                ids[agent] = a;
                for ((j, _), &b) in sets.iter().zip(combo) {
                    ids[*j] = b;
                }
                value_from(tree, node, n.compose(&ids), &|c| roll.choose(c).joint, agent, gamma)
                    .combined
            });
            if tree.cfg.flags.l1_expectation {
                values.sum::<f64>() / combos.len() as f64
            } else {
                values.fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect();
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((0..n_own).filter(|&a| scores[a] == best).collect())
}

// ---------------------------------------------------------------------------
// Equilibrium solvers
// ---------------------------------------------------------------------------

/// Admissible actions of one agent at one history: a plain set or a
/// probability-weighted one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum AgentSolution {
    Set(Vec<usize>),
    Weighted(BTreeMap<usize, f64>),
}

impl AgentSolution {
    pub fn ids(&self) -> Vec<usize> {
        match self {
            AgentSolution::Set(ids) => ids.clone(),
            AgentSolution::Weighted(m) => m.keys().copied().collect(),
        }
    }

    pub fn probabilities(&self) -> Option<Vec<(usize, f64)>> {
        match self {
            AgentSolution::Set(_) => None,
            AgentSolution::Weighted(m) => Some(m.iter().map(|(&a, &p)| (a, p)).collect()),
        }
    }
}

/// Output of a tree solver: admissible actions per history plus, for the
/// equilibrium family, the recorded joint choice per history and the
/// realized equilibrium path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionSet {
    /// history (node id) -> agent -> admissible actions
    pub by_history: BTreeMap<NodeId, BTreeMap<usize, AgentSolution>>,
    /// history -> the joint action the equilibrium plays there
    pub equilibrium: BTreeMap<NodeId, usize>,
    /// histories whose stage matrix had no pure equilibrium cell
    pub fallback_histories: Vec<NodeId>,
    /// node ids visited when the equilibrium is played from the root
    pub path: Vec<NodeId>,
}

impl SolutionSet {
    fn empty() -> Self {
        Self {
            by_history: BTreeMap::new(),
            equilibrium: BTreeMap::new(),
            fallback_histories: Vec::new(),
            path: Vec::new(),
        }
    }
}

/// All pure equilibrium cells of a stage payoff matrix (`payoffs[joint][agent]`,
/// joint indices mixed-radix over `dims`, agent 0 major).
pub fn pure_nash_cells(payoffs: &[Vec<f64>], dims: &[usize]) -> Vec<usize> {
    let strides = strides_for(dims);
    (0..payoffs.len())
        .filter(|&joint| {
            (0..dims.len()).all(|agent| {
                let here = payoffs[joint][agent];
                (0..dims[agent]).all(|a| {
                    let dev = with_action_in(joint, agent, a, dims, &strides);
                    payoffs[dev][agent] <= here
                })
            })
        })
        .collect()
}

/// The cell minimizing the maximum unilateral improvement any agent could
/// gain by deviating; ties to the lowest joint index. Used when no pure
/// equilibrium exists.
pub fn fallback_cell(payoffs: &[Vec<f64>], dims: &[usize]) -> usize {
    let strides = strides_for(dims);
    let mut best = f64::INFINITY;
    let mut arg = 0;
    for joint in 0..payoffs.len() {
        let mut regret: f64 = 0.0;
        for agent in 0..dims.len() {
            for a in 0..dims[agent] {
                let dev = with_action_in(joint, agent, a, dims, &strides);
                regret = regret.max(payoffs[dev][agent] - payoffs[joint][agent]);
            }
        }
        if regret < best {
            best = regret;
            arg = joint;
        }
    }
    arg
}

fn strides_for(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    strides
}

fn with_action_in(joint: usize, agent: usize, action: usize, dims: &[usize], strides: &[usize]) -> usize {
    let old = (joint / strides[agent]) % dims[agent];
    joint - old * strides[agent] + action * strides[agent]
}

/// Among pure equilibrium cells, pick the welfare-maximizing one (highest
/// sum of agent payoffs), ties to the lowest joint index.
fn select_among(cells: &[usize], payoffs: &[Vec<f64>]) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut arg = cells[0];
    for &joint in cells {
        let sum: f64 = payoffs[joint].iter().sum();
        if sum > best {
            best = sum;
            arg = joint;
        }
    }
    arg
}

/// Subgame-perfect equilibrium by backward induction with one aspiration
/// level per agent. Every history records the selected joint action and the
/// per-agent singleton; histories resolved by the no-pure-equilibrium
/// fallback are listed separately.
pub fn spne(tree: &GameTree, types: &[f64], cfg: &GameConfig) -> Result<SolutionSet, GameError> {
    assert_eq!(types.len(), tree.n_agents(), "one aspiration per agent");
    let mut out = SolutionSet::empty();
    // Children precede parents in reverse creation order.
    for id in (0..tree.nodes.len()).rev() {
        let node = tree.node(id);
        if node.stuck {
            continue;
        }
        let n_agents = node.n_agents();
        let dims: Vec<usize> = node.actions.iter().map(|s| s.len()).collect();
        let below = |child: NodeId| out.equilibrium[&child];
        let payoffs: Vec<Vec<f64>> = (0..node.joint_count())
            .map(|joint| {
                (0..n_agents)
                    .map(|agent| value_from(tree, id, joint, &below, agent, types[agent]).combined)
                    .collect()
            })
            .collect();
        let cells = pure_nash_cells(&payoffs, &dims);
        let joint = if cells.is_empty() {
            if !cfg.flags.nash_fallback {
                return Err(GameError::NoPureEquilibrium { node: id });
            }
            out.fallback_histories.push(id);
            fallback_cell(&payoffs, &dims)
        } else {
            select_among(&cells, &payoffs)
        };
        out.equilibrium.insert(id, joint);
        let per_agent: BTreeMap<usize, AgentSolution> = (0..n_agents)
            .map(|agent| (agent, AgentSolution::Set(vec![node.action_of(joint, agent)])))
            .collect();
        out.by_history.insert(id, per_agent);
    }
    out.fallback_histories.sort_unstable();
    // Realized path under the equilibrium.
    let mut cur = tree.root();
    loop {
        out.path.push(cur);
        let node = tree.node(cur);
        if node.stuck {
            break;
        }
        let joint = out.equilibrium[&cur];
        match node.children.get(joint).copied().flatten() {
            Some(next) => cur = next,
            None => break,
        }
    }
    Ok(out)
}

/// The safety-satisficing admissible sets around an equilibrium: at every
/// history, an action is acceptable for agent `i` when its safety against
/// the others' equilibrium play stays at or above the smaller of the
/// equilibrium safety there and the agent's aspiration.
pub fn sspe_set(tree: &GameTree, types: &[f64], cfg: &GameConfig) -> Result<SolutionSet, GameError> {
    let mut out = spne(tree, types, cfg)?;
    let step_level = cfg.flags.sspe_step_safety;
    for (&id, per_agent) in out.by_history.iter_mut() {
        let node = tree.node(id);
        let eq_joint = out.equilibrium[&id];
        let below = |child: NodeId| out.equilibrium[&child];
        for agent in 0..node.n_agents() {
            let safety_of = |joint: usize| -> f64 {
                if step_level {
                    node.step_utils(joint, agent).safety
                } else {
                    value_from(tree, id, joint, &below, agent, types[agent]).safety
                }
            };
            let eq_safety = safety_of(eq_joint);
            let floor = eq_safety.min(types[agent]);
            let admissible: Vec<usize> = (0..node.actions[agent].len())
                .filter(|&a| safety_of(node.with_action(eq_joint, agent, a)) >= floor)
                .collect();
            per_agent.insert(agent, AgentSolution::Set(admissible));
        }
    }
    Ok(out)
}

/// Which actions clear the maneuver-satisficing bar: same maneuver as the
/// equilibrium action and a left-hand value strictly above every
/// other-maneuver value against the equilibrium complement. Factored out so
/// the empty-other-maneuver convention (max over nothing = -inf, everything
/// same-maneuver passes) is directly testable.
pub fn maneuver_admissible(
    maneuvers: &[Maneuver],
    lhs: &[f64],
    rhs: &[f64],
    eq_action: usize,
) -> Vec<usize> {
    let m_star = maneuvers[eq_action];
    let bar = maneuvers
        .iter()
        .zip(rhs)
        .filter(|(m, _)| **m != m_star)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    (0..maneuvers.len())
        .filter(|&a| maneuvers[a] == m_star && lhs[a] > bar)
        .collect()
}

/// The maneuver-satisficing admissible sets around an equilibrium.
pub fn mspe_set(tree: &GameTree, types: &[f64], cfg: &GameConfig) -> Result<SolutionSet, GameError> {
    let mut out = spne(tree, types, cfg)?;
    for (&id, per_agent) in out.by_history.iter_mut() {
        let node = tree.node(id);
        let eq_joint = out.equilibrium[&id];
        let below = |child: NodeId| out.equilibrium[&child];
        for agent in 0..node.n_agents() {
            let n_own = node.actions[agent].len();
            let maneuvers: Vec<Maneuver> =
                (0..n_own).map(|a| node.actions[agent].maneuver_of(a)).collect();
            let mut lhs = Vec::with_capacity(n_own);
            let mut rhs = Vec::with_capacity(n_own);
            for a in 0..n_own {
                let joint = node.with_action(eq_joint, agent, a);
                let value = value_from(tree, id, joint, &below, agent, types[agent]);
                lhs.push(if cfg.flags.mspe_lhs_safety {
                    value.safety
                } else {
                    value.combined
                });
                rhs.push(value.combined);
            }
            let eq_action = node.action_of(eq_joint, agent);
            per_agent.insert(
                agent,
                AgentSolution::Set(maneuver_admissible(&maneuvers, &lhs, &rhs, eq_action)),
            );
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Quantal level-k
// ---------------------------------------------------------------------------

/// Logit choice probabilities: `P(a) proportional to exp(lambda * v_a)`,
/// shifted for numerical stability.
pub fn softmax(values: &[f64], lambda: f64) -> Vec<f64> {
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = values.iter().map(|v| (lambda * (v - top)).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Quantal level-1 policies for every agent at every history: opponents are
/// modeled as uniform over their own optimistic-baseline argmax set, and the
/// agent plays a logit distribution over the expected discounted values,
/// solved bottom-up.
pub fn qlk_response(
    tree: &GameTree,
    lambda: f64,
    types: &[f64],
    cfg: &GameConfig,
) -> Result<SolutionSet, GameError> {
    assert!(lambda > 0.0, "logit precision must be positive");
    assert_eq!(types.len(), tree.n_agents(), "one aspiration per agent");
    let k = tree.stages();
    let d = cfg.discount;
    let cont_weight = discount_sum(d, cfg.continuation_stages);
    let mut out = SolutionSet::empty();
    // Per agent: node id -> expected discounted numerator below that node.
    let mut numerators: Vec<HashMap<NodeId, f64>> = vec![HashMap::new(); tree.n_agents()];
    for id in (0..tree.nodes.len()).rev() {
        let node = tree.node(id);
        if node.stuck {
            continue;
        }
        let mut per_agent: BTreeMap<usize, AgentSolution> = BTreeMap::new();
        for agent in 0..node.n_agents() {
            let sets: Vec<(usize, Vec<usize>)> = (0..node.n_agents())
                .filter(|&j| j != agent)
                .map(|j| maxmax_set(node, j, types[j]).map(|s| (j, s)))
                .collect::<Result<_, _>>()?;
            let combos: Vec<Vec<usize>> = if sets.is_empty() {
                vec![Vec::new()]
            } else {
                sets.iter()
                    .map(|(_, s)| s.iter().copied())
                    .multi_cartesian_product()
                    .collect()
            };
            let combo_prob = 1.0
                / sets
                    .iter()
                    .map(|(_, s)| s.len() as f64)
                    .product::<f64>()
                    .max(1.0);
            let n_own = node.actions[agent].len();
            let mut q_num = vec![0.0; n_own];
            for a in 0..n_own {
                for combo in &combos {
                    let mut ids = vec![0usize; node.n_agents()];
                    ids[agent] = a;
                    for ((j, _), &b) in sets.iter().zip(combo) {
                        ids[*j] = b;
                    }
                    let joint = node.compose(&ids);
                    let step = aggregate(node.step_utils(joint, agent), types[agent]);
                    let rest = if node.stage + 1 == k {
                        cont_weight * aggregate(node.continuation_utils(joint, agent), types[agent])
                    } else {
                        let child = node.children[joint].expect("inner joints have children");
                        let child_node = tree.node(child);
                        if child_node.stuck {
                            let periods = (k - child_node.stage) + cfg.continuation_stages;
                            discount_sum(d, periods)
                                * aggregate(
                                    frozen_utils(tree, id, joint, agent, periods),
                                    types[agent],
                                )
                        } else {
                            numerators[agent][&child]
                        }
                    };
                    q_num[a] += combo_prob * d * (step + rest);
                }
            }
            let divisor = discount_divisor(cfg, node.stage);
            let scaled: Vec<f64> = q_num.iter().map(|q| q / divisor).collect();
            let probs = softmax(&scaled, lambda);
            let value: f64 = probs.iter().zip(&q_num).map(|(p, q)| p * q).sum();
            numerators[agent].insert(id, value);
            per_agent.insert(
                agent,
                AgentSolution::Weighted(probs.into_iter().enumerate().map(|(a, p)| (a, p)).collect()),
            );
        }
        out.by_history.insert(id, per_agent);
    }
    Ok(out)
}
