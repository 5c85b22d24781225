//! Non-strategic level-0 behavior: two finite-state automata over the
//! maneuver classes, plus the maxmax baseline.
//!
//! Both automata are memoryless over nodes: at every node they evaluate a
//! preference condition on the single-stage safety of their own candidate
//! trajectories (worst case over every opposing trajectory, so no opponent
//! model is involved) and move to a wait or proceed state. The state fixes
//! the maneuver class; within the class the agent randomizes uniformly over
//! a support of acceptable trajectories.
//!
//! The accommodating automaton waits when even its best wait option's safety
//! does not exceed its aspiration `gamma` (the aspiration marks where safety
//! stops being a concern, so "still below gamma" means waiting is what the
//! agent cares to do); the non-accommodating automaton proceeds when its
//! best proceed option is strictly safer than `gamma`. A config flag flips
//! the accommodating comparison for experimentation.

use serde::{Deserialize, Serialize};

use crate::game::{aggregate, ConditionDirection, GameConfig, GameError, GameNode};
use crate::kinematics::Maneuver;

/// The two level-0 behavior families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AutomatonKind {
    /// Accommodating: yields whenever waiting still matters for safety.
    AC,
    /// Non-accommodating: proceeds whenever proceeding is safe enough.
    NAC,
}

/// Automaton state; doubles as the maneuver class of the emitted support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutomatonState {
    W,
    P,
}

impl AutomatonState {
    pub fn maneuver(self) -> Maneuver {
        match self {
            AutomatonState::W => Maneuver::Wait,
            AutomatonState::P => Maneuver::Proceed,
        }
    }
}

/// A level-0 agent: automaton kind, aspiration level, current state, and an
/// optional scripted kind switch per stage.
#[derive(Debug, Clone)]
pub struct Level0Agent {
    pub kind: AutomatonKind,
    pub gamma: f64,
    pub state: AutomatonState,
    /// `(stage, kind)` pairs applied before acting at that stage.
    pub switch_policy: Vec<(usize, AutomatonKind)>,
}

impl Level0Agent {
    pub fn new(kind: AutomatonKind, gamma: f64) -> Self {
        let state = match kind {
            AutomatonKind::AC => AutomatonState::W,
            AutomatonKind::NAC => AutomatonState::P,
        };
        Self {
            kind,
            gamma,
            state,
            switch_policy: Vec::new(),
        }
    }

    /// Apply the switch script, evaluate the preference condition, update
    /// the state, and return the uniform-randomization support at `node`.
    pub fn step(
        &mut self,
        node: &GameNode,
        agent: usize,
        cfg: &GameConfig,
    ) -> Result<Vec<usize>, GameError> {
        if let Some(&(_, kind)) = self
            .switch_policy
            .iter()
            .find(|(stage, _)| *stage == node.stage)
        {
            self.kind = kind;
        }
        let (state, support) = step_automaton(self.kind, node, agent, self.gamma, cfg)?;
        self.state = state;
        Ok(support)
    }
}

/// Best (maximum) single-stage safety among the agent's trajectories of one
/// maneuver class at `node`; `None` when the class is empty.
pub fn max_step_safety(node: &GameNode, agent: usize, maneuver: Maneuver) -> Option<f64> {
    node.actions[agent]
        .ids_of(maneuver)
        .map(|a| node.step_safety(agent, a))
        .fold(None, |acc, s| Some(acc.map_or(s, |m: f64| m.max(s))))
}

/// The preference condition on a maneuver class's best safety, factored out
/// so it can be checked against known inputs. `best` is `None` when the
/// referenced maneuver class is empty, which forces the condition false.
pub fn condition_from_best_safety(
    kind: AutomatonKind,
    best: Option<f64>,
    gamma: f64,
    direction: ConditionDirection,
) -> bool {
    let Some(best) = best else { return false };
    match kind {
        AutomatonKind::AC => match direction {
            ConditionDirection::Equation => best <= gamma,
            ConditionDirection::Prose => best >= gamma,
        },
        AutomatonKind::NAC => best > gamma,
    }
}

/// Evaluate the automaton's preference condition at a node. AC references
/// the wait class, NAC the proceed class.
pub fn preference_condition(
    kind: AutomatonKind,
    node: &GameNode,
    agent: usize,
    gamma: f64,
    cfg: &GameConfig,
) -> bool {
    let maneuver = match kind {
        AutomatonKind::AC => Maneuver::Wait,
        AutomatonKind::NAC => Maneuver::Proceed,
    };
    condition_from_best_safety(
        kind,
        max_step_safety(node, agent, maneuver),
        gamma,
        cfg.flags.ac_condition,
    )
}

/// One automaton transition: the new state and the support of trajectories
/// the agent randomizes over. The condition-directed maneuver class gets the
/// safety filter (keep trajectories with step safety >= gamma when any
/// qualify); the opposite state emits its full class. If the directed class
/// turns out empty the other class is emitted unfiltered, and only a node
/// with no trajectories at all is an error.
pub fn step_automaton(
    kind: AutomatonKind,
    node: &GameNode,
    agent: usize,
    gamma: f64,
    cfg: &GameConfig,
) -> Result<(AutomatonState, Vec<usize>), GameError> {
    if node.actions[agent].is_empty() {
        return Err(GameError::Stuck {
            agent,
            stage: node.stage,
        });
    }
    let condition = preference_condition(kind, node, agent, gamma, cfg);
    let (state, filtered) = match (kind, condition) {
        (AutomatonKind::AC, true) => (AutomatonState::W, true),
        (AutomatonKind::AC, false) => (AutomatonState::P, false),
        (AutomatonKind::NAC, true) => (AutomatonState::P, true),
        (AutomatonKind::NAC, false) => (AutomatonState::W, false),
    };
    let support = support_in(node, agent, state.maneuver(), filtered.then_some(gamma));
    if !support.is_empty() {
        return Ok((state, support));
    }
    // The directed class is empty; fall back to whatever exists.
    let other = match state {
        AutomatonState::W => AutomatonState::P,
        AutomatonState::P => AutomatonState::W,
    };
    let support = support_in(node, agent, other.maneuver(), None);
    debug_assert!(!support.is_empty(), "non-empty action set has some class");
    Ok((other, support))
}

/// Action ids of one maneuver class, optionally keeping only those with
/// step safety at least `gamma` (falling back to the full class when none
/// qualify).
fn support_in(node: &GameNode, agent: usize, maneuver: Maneuver, floor: Option<f64>) -> Vec<usize> {
    let all: Vec<usize> = node.actions[agent].ids_of(maneuver).collect();
    if let Some(gamma) = floor {
        let safe: Vec<usize> = all
            .iter()
            .copied()
            .filter(|&a| node.step_safety(agent, a) >= gamma)
            .collect();
        if !safe.is_empty() {
            return safe;
        }
    }
    all
}

/// Per-stage supports of an automaton along a node sequence; the trace is
/// the cross-product of the stages.
#[derive(Debug, Clone)]
pub struct Trace {
    pub supports: Vec<Vec<usize>>,
}

impl Trace {
    /// Number of action sequences in the trace.
    pub fn len(&self) -> usize {
        self.supports.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.supports.iter().any(Vec::is_empty)
    }

    /// Whether an action sequence (one id per stage) is a member.
    pub fn contains(&self, actions: &[usize]) -> bool {
        actions.len() == self.supports.len()
            && actions
                .iter()
                .zip(&self.supports)
                .all(|(a, support)| support.contains(a))
    }
}

/// Evaluate the automaton's supports along `nodes` (no kind switching inside
/// a trace).
pub fn trace(
    kind: AutomatonKind,
    gamma: f64,
    nodes: &[&GameNode],
    agent: usize,
    cfg: &GameConfig,
) -> Result<Trace, GameError> {
    let supports = nodes
        .iter()
        .map(|n| step_automaton(kind, n, agent, gamma, cfg).map(|(_, s)| s))
        .collect::<Result<_, _>>()?;
    Ok(Trace { supports })
}

/// Every own action achieving the best optimistic single-stage value:
/// argmax over own trajectories of the maximum aggregate over the others'
/// choices. Ascending ids, so the first entry is the deterministic pick.
pub fn maxmax_set(node: &GameNode, agent: usize, gamma: f64) -> Result<Vec<usize>, GameError> {
    if node.actions[agent].is_empty() {
        return Err(GameError::Stuck {
            agent,
            stage: node.stage,
        });
    }
    let n_own = node.actions[agent].len();
    let mut best_of = vec![f64::NEG_INFINITY; n_own];
    for joint in 0..node.joint_count() {
        let a = node.action_of(joint, agent);
        let v = aggregate(node.step_utils(joint, agent), gamma);
        if v > best_of[a] {
            best_of[a] = v;
        }
    }
    let best = best_of.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((0..n_own).filter(|&a| best_of[a] == best).collect())
}

/// The deterministic maxmax baseline action (lowest id among the argmax set).
pub fn maxmax_action(node: &GameNode, agent: usize, gamma: f64) -> Result<usize, GameError> {
    Ok(maxmax_set(node, agent, gamma)?[0])
}
