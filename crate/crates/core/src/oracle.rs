//! Brute-force reference implementations of every solution concept, used to
//! cross-check the main solvers on instances small enough to enumerate.
//!
//! The first half of this module recomputes decisions from first principles:
//! preference conditions from raw pairwise gaps, consistency by simulating
//! hypotheses over the observed play, equilibria by enumerating whole
//! strategy profiles (or stage cells) and testing deviations literally. The
//! only code shared with the solvers is the kinematic layer, the utility
//! functions (`value_from` and friends), the tree plumbing, and the public
//! data types; none of the solver shortcuts -- cached safety tables, interval
//! beliefs, memoized rollouts, solution caches -- appear here. The
//! differential harness in the second half is the one place that calls both
//! sides and compares them.

use std::collections::{BTreeMap, BTreeSet};

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::automata::AutomatonKind;
use crate::game::{
    aggregate, build_game_tree, discount_sum, frozen_utils, safety_utility, value_from,
    ConditionDirection, GameConfig, GameError, GameNode, GameTree, NodeId,
};
use crate::kinematics::{min_gap, Maneuver, Path, VehicleState};
use crate::robust::{AugmentedType, ObserverModel, PlayStep, ALL_MODELS};

/// Enumerations larger than this many profiles are refused.
pub const PROFILE_BOUND: f64 = 1e7;

// ---------------------------------------------------------------------------
// Strategy profiles and subgame perfection by exhaustion
// ---------------------------------------------------------------------------

/// A pure strategy profile: one joint action at every (non-stuck) history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyProfile {
    /// history (node id) -> joint action id
    pub choices: BTreeMap<NodeId, usize>,
}

impl StrategyProfile {
    pub fn joint_at(&self, id: NodeId) -> usize {
        self.choices[&id]
    }

    /// Defined at every live history, with every choice inside the node's
    /// joint action range.
    pub fn is_total(&self, tree: &GameTree) -> bool {
        (0..tree.nodes.len()).all(|id| {
            let node = tree.node(id);
            if node.stuck {
                return true;
            }
            self.choices
                .get(&id)
                .is_some_and(|&j| j < node.joint_count())
        })
    }
}

/// Number of pure strategy profiles of the tree (product of per-history
/// joint counts), as a float so oversized trees still report a magnitude.
pub fn profile_count(tree: &GameTree) -> f64 {
    (0..tree.nodes.len())
        .map(|id| tree.node(id))
        .filter(|n| !n.stuck)
        .map(|n| n.joint_count() as f64)
        .product()
}

/// Lazy mixed-radix enumeration of every pure strategy profile.
pub struct ProfileStream<'a> {
    nodes: Vec<NodeId>,
    radices: Vec<usize>,
    counter: Vec<usize>,
    done: bool,
    _tree: &'a GameTree,
}

impl Iterator for ProfileStream<'_> {
    type Item = StrategyProfile;

    fn next(&mut self) -> Option<StrategyProfile> {
        if self.done {
            return None;
        }
        let profile = StrategyProfile {
            choices: self
                .nodes
                .iter()
                .zip(&self.counter)
                .map(|(&id, &j)| (id, j))
                .collect(),
        };
        // Increment the counter, least significant digit last.
        self.done = true;
        for i in (0..self.counter.len()).rev() {
            self.counter[i] += 1;
            if self.counter[i] < self.radices[i] {
                self.done = false;
                break;
            }
            self.counter[i] = 0;
        }
        if self.counter.is_empty() {
            self.done = true;
        }
        Some(profile)
    }
}

/// Stream every pure strategy profile exactly once, refusing trees whose
/// profile count exceeds [`PROFILE_BOUND`].
pub fn enumerate_profiles(tree: &GameTree) -> Result<ProfileStream<'_>, GameError> {
    let count = profile_count(tree);
    if count > PROFILE_BOUND {
        return Err(GameError::TooLarge {
            count,
            bound: PROFILE_BOUND,
        });
    }
    let nodes: Vec<NodeId> = (0..tree.nodes.len())
        .filter(|&id| !tree.node(id).stuck)
        .collect();
    let radices: Vec<usize> = nodes.iter().map(|&id| tree.node(id).joint_count()).collect();
    Ok(ProfileStream {
        counter: vec![0; nodes.len()],
        nodes,
        radices,
        done: false,
        _tree: tree,
    })
}

/// No agent can gain at any history by changing only its action there while
/// the profile continues everywhere else (strict improvement fails it).
pub fn passes_one_shot_deviations(tree: &GameTree, profile: &StrategyProfile, types: &[f64]) -> bool {
    let below = |c: NodeId| profile.joint_at(c);
    for (&id, &joint) in &profile.choices {
        let node = tree.node(id);
        for agent in 0..node.n_agents() {
            let here = value_from(tree, id, joint, &below, agent, types[agent]).combined;
            for a in 0..node.actions[agent].len() {
                if a == node.action_of(joint, agent) {
                    continue;
                }
                let dev = node.with_action(joint, agent, a);
                if value_from(tree, id, dev, &below, agent, types[agent]).combined > here {
                    return false;
                }
            }
        }
    }
    true
}

/// Every subgame-perfect pure profile, found by full enumeration plus the
/// one-shot deviation test (sufficient for a finite horizon).
pub fn oracle_spne(tree: &GameTree, types: &[f64]) -> Result<Vec<StrategyProfile>, GameError> {
    assert_eq!(types.len(), tree.n_agents(), "one aspiration per agent");
    Ok(enumerate_profiles(tree)?
        .filter(|p| passes_one_shot_deviations(tree, p, types))
        .collect())
}

// ---------------------------------------------------------------------------
// Stage matrices: literal equilibrium cells
// ---------------------------------------------------------------------------

fn matrix_strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    strides
}

fn matrix_deviation(joint: usize, agent: usize, action: usize, dims: &[usize], strides: &[usize]) -> usize {
    let old = (joint / strides[agent]) % dims[agent];
    joint - old * strides[agent] + action * strides[agent]
}

/// Pure equilibrium cells of a payoff matrix, by testing every unilateral
/// deviation of every agent at every cell.
pub fn reference_nash_cells(payoffs: &[Vec<f64>], dims: &[usize]) -> Vec<usize> {
    let strides = matrix_strides(dims);
    let mut cells = Vec::new();
    'joints: for joint in 0..payoffs.len() {
        for agent in 0..dims.len() {
            for a in 0..dims[agent] {
                let dev = matrix_deviation(joint, agent, a, dims, &strides);
                if payoffs[dev][agent] > payoffs[joint][agent] {
                    continue 'joints;
                }
            }
        }
        cells.push(joint);
    }
    cells
}

/// The cell whose worst unilateral improvement is smallest (lowest joint id
/// on ties); the stand-in when no cell is an equilibrium.
fn reference_regret_cell(payoffs: &[Vec<f64>], dims: &[usize]) -> usize {
    let strides = matrix_strides(dims);
    let mut best = f64::INFINITY;
    let mut arg = 0;
    for joint in 0..payoffs.len() {
        let mut regret: f64 = 0.0;
        for agent in 0..dims.len() {
            for a in 0..dims[agent] {
                let dev = matrix_deviation(joint, agent, a, dims, &strides);
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

// ---------------------------------------------------------------------------
// Level-0 automata from raw gaps
// ---------------------------------------------------------------------------

/// Worst-case single-stage safety of one trajectory, recomputed from raw
/// pairwise gaps against every opposing trajectory.
fn raw_worst_safety(node: &GameNode, agent: usize, action: usize, cfg: &GameConfig) -> f64 {
    let mut worst = f64::INFINITY;
    for j in 0..node.n_agents() {
        if j == agent {
            continue;
        }
        for b in 0..node.actions[j].len() {
            let gap = min_gap(node.trajectory(agent, action), node.trajectory(j, b))
                .expect("stage trajectories share sampling");
            worst = worst.min(gap);
        }
    }
    safety_utility(worst, cfg)
}

fn class_ids(node: &GameNode, agent: usize, maneuver: Maneuver) -> Vec<usize> {
    (0..node.actions[agent].len())
        .filter(|&a| node.actions[agent].maneuver_of(a) == maneuver)
        .collect()
}

fn raw_best_class_safety(node: &GameNode, agent: usize, maneuver: Maneuver, cfg: &GameConfig) -> Option<f64> {
    class_ids(node, agent, maneuver)
        .into_iter()
        .map(|a| raw_worst_safety(node, agent, a, cfg))
        .fold(None, |acc, s| Some(acc.map_or(s, |m: f64| m.max(s))))
}

/// What a level-0 automaton with aspiration `gamma` emits at a node: the
/// committed maneuver and the trajectories it randomizes over, recomputed
/// from raw gaps. When the preference condition holds, the directed class is
/// filtered to trajectories with single-stage safety at least `gamma` (full
/// class when none qualify); an entirely missing class falls back to the
/// other one.
pub fn reference_support(
    tree: &GameTree,
    at: NodeId,
    agent: usize,
    kind: AutomatonKind,
    gamma: f64,
) -> Result<(Maneuver, Vec<usize>), GameError> {
    let node = tree.node(at);
    let cfg = &tree.cfg;
    if node.actions[agent].is_empty() {
        return Err(GameError::Stuck {
            agent,
            stage: node.stage,
        });
    }
    let directed_class = match kind {
        AutomatonKind::AC => Maneuver::Wait,
        AutomatonKind::NAC => Maneuver::Proceed,
    };
    let condition = match raw_best_class_safety(node, agent, directed_class, cfg) {
        None => false,
        Some(best) => match (kind, cfg.flags.ac_condition) {
            (AutomatonKind::AC, ConditionDirection::Equation) => best <= gamma,
            (AutomatonKind::AC, ConditionDirection::Prose) => best >= gamma,
            (AutomatonKind::NAC, _) => best > gamma,
        },
    };
    let target = match (kind, condition) {
        (AutomatonKind::AC, true) | (AutomatonKind::NAC, false) => Maneuver::Wait,
        (AutomatonKind::AC, false) | (AutomatonKind::NAC, true) => Maneuver::Proceed,
    };
    let all = class_ids(node, agent, target);
    let mut support: Vec<usize> = if condition {
        all.iter()
            .copied()
            .filter(|&a| raw_worst_safety(node, agent, a, cfg) >= gamma)
            .collect()
    } else {
        Vec::new()
    };
    if support.is_empty() {
        support = all;
    }
    if support.is_empty() {
        let other = match target {
            Maneuver::Wait => Maneuver::Proceed,
            Maneuver::Proceed => Maneuver::Wait,
        };
        return Ok((other, class_ids(node, agent, other)));
    }
    Ok((target, support))
}

/// Level-0 hypotheses that survive an observed play: `(kind, gamma)` is kept
/// when, at every step, the observed maneuver matches the class the automaton
/// would have committed to there. Grid order, AC before NAC.
pub fn consistent_level0_types(
    tree: &GameTree,
    play: &[PlayStep],
    observed: usize,
) -> Vec<(AutomatonKind, f64)> {
    let grid = &tree.cfg.type_grid;
    [AutomatonKind::AC, AutomatonKind::NAC]
        .into_iter()
        .flat_map(|kind| grid.iter().map(move |&g| (kind, g)))
        .filter(|&(kind, gamma)| {
            play.iter().all(|&(node_id, joint)| {
                let node = tree.node(node_id);
                let action = node.action_of(joint, observed);
                let seen = node.actions[observed].maneuver_of(action);
                match reference_support(tree, node_id, observed, kind, gamma) {
                    Ok((emitted, _)) => emitted == seen,
                    Err(_) => false,
                }
            })
        })
        .collect()
}

/// Union of surviving hypotheses' supports at `at`, ascending and
/// deduplicated; errs when nothing on the grid explains the play.
pub fn reference_consistent_actions(
    tree: &GameTree,
    play: &[PlayStep],
    observed: usize,
    at: NodeId,
) -> Result<Vec<usize>, GameError> {
    let survivors = consistent_level0_types(tree, play, observed);
    if survivors.is_empty() {
        return Err(GameError::EmptyBelief);
    }
    let mut union = BTreeSet::new();
    for (kind, gamma) in survivors {
        let (_, support) = reference_support(tree, at, observed, kind, gamma)?;
        union.extend(support);
    }
    Ok(union.into_iter().collect())
}

// ---------------------------------------------------------------------------
// Level-1 response by plain recursion
// ---------------------------------------------------------------------------

type Survivors = Vec<(usize, Vec<(AutomatonKind, f64)>)>;

fn survivors_per_opponent(
    tree: &GameTree,
    play: &[PlayStep],
    agent: usize,
) -> Result<Survivors, GameError> {
    let mut out = Vec::new();
    for j in 0..tree.n_agents() {
        if j == agent {
            continue;
        }
        let survivors = consistent_level0_types(tree, play, j);
        if survivors.is_empty() {
            return Err(GameError::EmptyBelief);
        }
        out.push((j, survivors));
    }
    Ok(out)
}

fn survivor_sets(tree: &GameTree, at: NodeId, survivors: &Survivors) -> Vec<(usize, Vec<usize>)> {
    survivors
        .iter()
        .map(|(j, hyps)| {
            let mut union = BTreeSet::new();
            for &(kind, gamma) in hyps {
                let (_, support) = reference_support(tree, at, *j, kind, gamma)
                    .expect("live nodes have nonempty supports");
                union.extend(support);
            }
            (*j, union.into_iter().collect())
        })
        .collect()
}

/// The joint the level-1 process walks at `at`, recomputed recursively with
/// the surviving hypotheses frozen: consistent opponent sets are re-derived
/// at every node, the own action maximizes over pairings (or over the
/// pairing-average under the expectation switch), ties to the lowest ids.
fn ref_l1_joint(tree: &GameTree, at: NodeId, survivors: &Survivors, agent: usize, gamma: f64) -> usize {
    let node = tree.node(at);
    let sets = survivor_sets(tree, at, survivors);
    let combos: Vec<Vec<usize>> = if sets.is_empty() {
        vec![Vec::new()]
    } else {
        sets.iter()
            .map(|(_, s)| s.iter().copied())
            .multi_cartesian_product()
            .collect()
    };
    let joint_of = |a: usize, combo: &[usize]| -> usize {
        let mut ids = vec![0usize; node.n_agents()];
        ids[agent] = a;
        for ((j, _), &b) in sets.iter().zip(combo) {
            ids[*j] = b;
        }
        node.compose(&ids)
    };
    let value = |a: usize, combo: &[usize]| -> f64 {
        value_from(
            tree,
            at,
            joint_of(a, combo),
            &|c| ref_l1_joint(tree, c, survivors, agent, gamma),
            agent,
            gamma,
        )
        .combined
    };
    let n_own = node.actions[agent].len();
    if tree.cfg.flags.l1_expectation {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for a in 0..n_own {
            let mean = combos.iter().map(|c| value(a, c)).sum::<f64>() / combos.len() as f64;
            if mean > best {
                best = mean;
                arg = a;
            }
        }
        joint_of(arg, &combos[0])
    } else {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for a in 0..n_own {
            for combo in &combos {
                let v = value(a, combo);
                if v > best {
                    best = v;
                    arg = joint_of(a, combo);
                }
            }
        }
        arg
    }
}

/// Reference level-1 choice at `at` after `play`: filter the level-0 grid by
/// maneuver agreement, then best-respond by plain recursion.
pub fn reference_level1(
    tree: &GameTree,
    at: NodeId,
    play: &[PlayStep],
    agent: usize,
    gamma: f64,
) -> Result<usize, GameError> {
    let survivors = survivors_per_opponent(tree, play, agent)?;
    let joint = ref_l1_joint(tree, at, &survivors, agent, gamma);
    Ok(tree.node(at).action_of(joint, agent))
}

/// Every own action tying the best level-1 score at `at` (max over pairings,
/// or mean under the expectation switch), ascending.
pub fn reference_level1_ties(
    tree: &GameTree,
    at: NodeId,
    play: &[PlayStep],
    agent: usize,
    gamma: f64,
) -> Result<Vec<usize>, GameError> {
    let survivors = survivors_per_opponent(tree, play, agent)?;
    let node = tree.node(at);
    let sets = survivor_sets(tree, at, &survivors);
    let combos: Vec<Vec<usize>> = if sets.is_empty() {
        vec![Vec::new()]
    } else {
        sets.iter()
            .map(|(_, s)| s.iter().copied())
            .multi_cartesian_product()
            .collect()
    };
    let n_own = node.actions[agent].len();
    let scores: Vec<f64> = (0..n_own)
        .map(|a| {
            let values = combos.iter().map(|combo| {
                let mut ids = vec![0usize; node.n_agents()];
                ids[agent] = a;
                for ((j, _), &b) in sets.iter().zip(combo) {
                    ids[*j] = b;
                }
                value_from(
                    tree,
                    at,
                    node.compose(&ids),
                    &|c| ref_l1_joint(tree, c, &survivors, agent, gamma),
                    agent,
                    gamma,
                )
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
// Equilibrium family by recursive re-derivation
// ---------------------------------------------------------------------------

/// Reference output of the equilibrium-family filters.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    /// history -> per-agent admissible action ids (ascending)
    pub admissible: BTreeMap<NodeId, Vec<Vec<usize>>>,
    /// history -> selected equilibrium joint
    pub equilibrium: BTreeMap<NodeId, usize>,
    /// histories resolved without a pure equilibrium cell
    pub fallbacks: Vec<NodeId>,
}

fn solve_history(
    tree: &GameTree,
    id: NodeId,
    types: &[f64],
    cfg: &GameConfig,
    eq: &mut BTreeMap<NodeId, usize>,
    fallbacks: &mut Vec<NodeId>,
) -> Result<(), GameError> {
    if eq.contains_key(&id) || tree.node(id).stuck {
        return Ok(());
    }
    let node = tree.node(id);
    if node.stage + 1 < tree.stages() {
        for child in node.children.iter().flatten() {
            solve_history(tree, *child, types, cfg, eq, fallbacks)?;
        }
    }
    let dims: Vec<usize> = node.actions.iter().map(|s| s.len()).collect();
    let below = |c: NodeId| eq[&c];
    let payoffs: Vec<Vec<f64>> = (0..node.joint_count())
        .map(|joint| {
            (0..node.n_agents())
                .map(|agent| value_from(tree, id, joint, &below, agent, types[agent]).combined)
                .collect()
        })
        .collect();
    let cells = reference_nash_cells(&payoffs, &dims);
    let joint = if cells.is_empty() {
        if !cfg.flags.nash_fallback {
            return Err(GameError::NoPureEquilibrium { node: id });
        }
        fallbacks.push(id);
        reference_regret_cell(&payoffs, &dims)
    } else {
        let mut best = f64::NEG_INFINITY;
        let mut arg = cells[0];
        for &cell in &cells {
            let welfare: f64 = payoffs[cell].iter().sum();
            if welfare > best {
                best = welfare;
                arg = cell;
            }
        }
        arg
    };
    eq.insert(id, joint);
    Ok(())
}

/// The backward-selected equilibrium recomputed recursively with literal
/// deviation tests at every stage matrix.
pub fn reference_equilibrium(
    tree: &GameTree,
    types: &[f64],
    cfg: &GameConfig,
) -> Result<(BTreeMap<NodeId, usize>, Vec<NodeId>), GameError> {
    let mut eq = BTreeMap::new();
    let mut fallbacks = Vec::new();
    for id in 0..tree.nodes.len() {
        solve_history(tree, id, types, cfg, &mut eq, &mut fallbacks)?;
    }
    fallbacks.sort_unstable();
    Ok((eq, fallbacks))
}

/// Safety-satisficing admissible sets, transcribed directly: keep an action
/// when its safety against the others' equilibrium play is at least the
/// smaller of the equilibrium safety and the agent's aspiration.
pub fn reference_sspe(
    tree: &GameTree,
    types: &[f64],
    cfg: &GameConfig,
) -> Result<ReferenceSolution, GameError> {
    let (eq, fallbacks) = reference_equilibrium(tree, types, cfg)?;
    let mut admissible = BTreeMap::new();
    for (&id, &eq_joint) in &eq {
        let node = tree.node(id);
        let below = |c: NodeId| eq[&c];
        let per_agent: Vec<Vec<usize>> = (0..node.n_agents())
            .map(|agent| {
                let safety_of = |joint: usize| -> f64 {
                    if cfg.flags.sspe_step_safety {
                        node.step_utils(joint, agent).safety
                    } else {
                        value_from(tree, id, joint, &below, agent, types[agent]).safety
                    }
                };
                let floor = safety_of(eq_joint).min(types[agent]);
                (0..node.actions[agent].len())
                    .filter(|&a| safety_of(node.with_action(eq_joint, agent, a)) >= floor)
                    .collect()
            })
            .collect();
        admissible.insert(id, per_agent);
    }
    Ok(ReferenceSolution {
        admissible,
        equilibrium: eq,
        fallbacks,
    })
}

/// Maneuver-satisficing admissible sets, transcribed directly: keep an
/// action when it shares the equilibrium action's maneuver and its value
/// (or safety, under the switch) strictly exceeds every other-maneuver
/// value against the equilibrium complement.
pub fn reference_mspe(
    tree: &GameTree,
    types: &[f64],
    cfg: &GameConfig,
) -> Result<ReferenceSolution, GameError> {
    let (eq, fallbacks) = reference_equilibrium(tree, types, cfg)?;
    let mut admissible = BTreeMap::new();
    for (&id, &eq_joint) in &eq {
        let node = tree.node(id);
        let below = |c: NodeId| eq[&c];
        let per_agent: Vec<Vec<usize>> = (0..node.n_agents())
            .map(|agent| {
                let n_own = node.actions[agent].len();
                let values: Vec<crate::game::Value> = (0..n_own)
                    .map(|a| {
                        value_from(
                            tree,
                            id,
                            node.with_action(eq_joint, agent, a),
                            &below,
                            agent,
                            types[agent],
                        )
                    })
                    .collect();
                let lhs = |a: usize| -> f64 {
                    if cfg.flags.mspe_lhs_safety {
                        values[a].safety
                    } else {
                        values[a].combined
                    }
                };
                let m_star = node.actions[agent].maneuver_of(node.action_of(eq_joint, agent));
                let bar = (0..n_own)
                    .filter(|&a| node.actions[agent].maneuver_of(a) != m_star)
                    .map(|a| values[a].combined)
                    .fold(f64::NEG_INFINITY, f64::max);
                (0..n_own)
                    .filter(|&a| node.actions[agent].maneuver_of(a) == m_star && lhs(a) > bar)
                    .collect()
            })
            .collect();
        admissible.insert(id, per_agent);
    }
    Ok(ReferenceSolution {
        admissible,
        equilibrium: eq,
        fallbacks,
    })
}

// ---------------------------------------------------------------------------
// Robust layer by literal transcription
// ---------------------------------------------------------------------------

fn reference_hypothesis_mismatches(
    tree: &GameTree,
    play: &[PlayStep],
    observed: usize,
    hypothesis: AugmentedType,
    gamma_r: f64,
    cfg: &GameConfig,
) -> usize {
    let disqualified = play.len() + 1;
    match hypothesis.model {
        ObserverModel::AC | ObserverModel::NAC => {
            let kind = match hypothesis.model {
                ObserverModel::AC => AutomatonKind::AC,
                _ => AutomatonKind::NAC,
            };
            play.iter()
                .filter(|&&(node_id, joint)| {
                    let action = tree.node(node_id).action_of(joint, observed);
                    match reference_support(tree, node_id, observed, kind, hypothesis.gamma) {
                        Ok((_, support)) => !support.contains(&action),
                        Err(_) => true,
                    }
                })
                .count()
        }
        ObserverModel::Level1 => play
            .iter()
            .enumerate()
            .filter(|&(t, &(node_id, joint))| {
                let action = tree.node(node_id).action_of(joint, observed);
                if cfg.flags.l1_expectation {
                    match reference_level1_ties(tree, node_id, &play[..t], observed, hypothesis.gamma)
                    {
                        Ok(ties) => !ties.contains(&action),
                        Err(_) => true,
                    }
                } else {
                    match reference_level1(tree, node_id, &play[..t], observed, hypothesis.gamma) {
                        Ok(choice) => choice != action,
                        Err(_) => true,
                    }
                }
            })
            .count(),
        ObserverModel::SSPE | ObserverModel::MSPE => {
            let types: Vec<f64> = (0..tree.n_agents())
                .map(|j| if j == observed { hypothesis.gamma } else { gamma_r })
                .collect();
            let solved = match hypothesis.model {
                ObserverModel::SSPE => reference_sspe(tree, &types, cfg),
                _ => reference_mspe(tree, &types, cfg),
            };
            let Ok(sol) = solved else {
                return disqualified;
            };
            play.iter()
                .filter(|&&(node_id, joint)| {
                    let action = tree.node(node_id).action_of(joint, observed);
                    sol.admissible
                        .get(&node_id)
                        .map(|per_agent| &per_agent[observed])
                        .is_none_or(|adm| !adm.contains(&action))
                })
                .count()
        }
    }
}

/// Hypotheses about `observed` surviving the play, transcribed literally
/// (every surviving model re-solved from scratch, no caching).
pub fn reference_hypotheses(
    tree: &GameTree,
    play: &[PlayStep],
    observed: usize,
    gamma_r: f64,
    cfg: &GameConfig,
) -> Vec<AugmentedType> {
    ALL_MODELS
        .iter()
        .flat_map(|&model| {
            cfg.type_grid
                .iter()
                .map(move |&gamma| AugmentedType { model, gamma })
        })
        .filter(|&h| {
            reference_hypothesis_mismatches(tree, play, observed, h, gamma_r, cfg)
                <= cfg.flags.consistency_slack
        })
        .collect()
}

fn reference_predicted(
    tree: &GameTree,
    at: NodeId,
    play: &[PlayStep],
    opponent: usize,
    hypothesis: AugmentedType,
    gamma_r: f64,
    cfg: &GameConfig,
) -> Vec<usize> {
    match hypothesis.model {
        ObserverModel::AC | ObserverModel::NAC => {
            let kind = match hypothesis.model {
                ObserverModel::AC => AutomatonKind::AC,
                _ => AutomatonKind::NAC,
            };
            reference_support(tree, at, opponent, kind, hypothesis.gamma)
                .map(|(_, support)| support)
                .unwrap_or_default()
        }
        ObserverModel::Level1 => reference_level1(tree, at, play, opponent, hypothesis.gamma)
            .map(|a| vec![a])
            .unwrap_or_default(),
        ObserverModel::SSPE | ObserverModel::MSPE => {
            let types: Vec<f64> = (0..tree.n_agents())
                .map(|j| if j == opponent { hypothesis.gamma } else { gamma_r })
                .collect();
            let solved = match hypothesis.model {
                ObserverModel::SSPE => reference_sspe(tree, &types, cfg),
                _ => reference_mspe(tree, &types, cfg),
            };
            solved
                .ok()
                .and_then(|sol| sol.admissible.get(&at).map(|per| per[opponent].clone()))
                .unwrap_or_default()
        }
    }
}

/// The joint maximizing the planner's own value at `id`, recursively.
fn ref_optimistic_joint(tree: &GameTree, id: NodeId, agent: usize, gamma: f64) -> usize {
    let node = tree.node(id);
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for joint in 0..node.joint_count() {
        let v = value_from(
            tree,
            id,
            joint,
            &|c| ref_optimistic_joint(tree, c, agent, gamma),
            agent,
            gamma,
        )
        .combined;
        if v > best {
            best = v;
            arg = joint;
        }
    }
    arg
}

fn ref_minimax_numerator(tree: &GameTree, id: NodeId, agent: usize, gamma: f64) -> (usize, f64) {
    let node = tree.node(id);
    let k = tree.stages();
    let d = tree.cfg.discount;
    let rest_of = |joint: usize| -> f64 {
        if node.stage + 1 == k {
            return discount_sum(d, tree.cfg.continuation_stages)
                * aggregate(node.continuation_utils(joint, agent), gamma);
        }
        let child = node.children[joint].expect("inner joints have children");
        if tree.node(child).stuck {
            let periods = (k - tree.node(child).stage) + tree.cfg.continuation_stages;
            discount_sum(d, periods) * aggregate(frozen_utils(tree, id, joint, agent, periods), gamma)
        } else {
            ref_minimax_numerator(tree, child, agent, gamma).1
        }
    };
    let mut best = f64::NEG_INFINITY;
    let mut best_joint = 0;
    for a in 0..node.actions[agent].len() {
        let mut worst = f64::INFINITY;
        let mut worst_joint = usize::MAX;
        for joint in 0..node.joint_count() {
            if node.action_of(joint, agent) != a {
                continue;
            }
            let v = d * (aggregate(node.step_utils(joint, agent), gamma) + rest_of(joint));
            if v < worst {
                worst = v;
                worst_joint = joint;
            }
        }
        if worst > best {
            best = worst;
            best_joint = worst_joint;
        }
    }
    (best_joint, best)
}

/// Reference robust choice at `at` after `play`: filter hypotheses per
/// opponent, predict their actions literally, and pick the own action whose
/// worst surviving hypothesis combination is best. Returns the action and
/// whether the unrestricted-maxmin fallback produced it.
pub fn reference_robust_action(
    tree: &GameTree,
    at: NodeId,
    play: &[PlayStep],
    agent: usize,
    gamma_r: f64,
    cfg: &GameConfig,
) -> Result<(usize, bool), GameError> {
    let node = tree.node(at);
    if node.actions[agent].is_empty() {
        return Err(GameError::Stuck {
            agent,
            stage: node.stage,
        });
    }
    let opponents: Vec<usize> = (0..tree.n_agents()).filter(|&j| j != agent).collect();
    let survivor_lists: Vec<(usize, Vec<AugmentedType>)> = opponents
        .iter()
        .map(|&j| (j, reference_hypotheses(tree, play, j, gamma_r, cfg)))
        .collect();

    let combos: Vec<Vec<(usize, AugmentedType)>> = if survivor_lists.is_empty() {
        Vec::new()
    } else {
        survivor_lists
            .iter()
            .map(|(j, set)| set.iter().map(move |&h| (*j, h)))
            .multi_cartesian_product()
            .collect()
    };
    let mut predictions: Vec<Vec<(usize, Vec<usize>)>> = Vec::new();
    for combo in &combos {
        let per_opp: Vec<(usize, Vec<usize>)> = combo
            .iter()
            .map(|&(j, h)| (j, reference_predicted(tree, at, play, j, h, gamma_r, cfg)))
            .collect();
        if per_opp.iter().all(|(_, p)| !p.is_empty()) {
            predictions.push(per_opp);
        }
    }

    if predictions.is_empty() {
        let (joint, _) = ref_minimax_numerator(tree, at, agent, gamma_r);
        return Ok((node.action_of(joint, agent), true));
    }

    let value_of = |joint: usize| -> f64 {
        value_from(
            tree,
            at,
            joint,
            &|c| ref_optimistic_joint(tree, c, agent, gamma_r),
            agent,
            gamma_r,
        )
        .combined
    };
    let mut best = f64::NEG_INFINITY;
    let mut best_action = 0;
    for a in 0..node.actions[agent].len() {
        let mut score = f64::INFINITY;
        for per_opp in &predictions {
            let m = per_opp
                .iter()
                .map(|(j, pred)| pred.iter().map(move |&b| (*j, b)))
                .multi_cartesian_product()
                .map(|assign| {
                    let mut ids = vec![0usize; node.n_agents()];
                    ids[agent] = a;
                    for (j, b) in assign {
                        ids[j] = b;
                    }
                    value_of(node.compose(&ids))
                })
                .fold(f64::NEG_INFINITY, f64::max);
            score = score.min(m);
        }
        if score > best {
            best = score;
            best_action = a;
        }
    }
    Ok((best_action, false))
}

// ---------------------------------------------------------------------------
// Differential harness
// ---------------------------------------------------------------------------

/// The concepts the differential suite can exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Concept {
    Spne,
    Ac,
    Nac,
    Level1,
    Sspe,
    Mspe,
    Robust,
}

impl Concept {
    pub const ALL: [Concept; 7] = [
        Concept::Spne,
        Concept::Ac,
        Concept::Nac,
        Concept::Level1,
        Concept::Sspe,
        Concept::Mspe,
        Concept::Robust,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Concept::Spne => "spne",
            Concept::Ac => "ac",
            Concept::Nac => "nac",
            Concept::Level1 => "l1",
            Concept::Sspe => "sspe",
            Concept::Mspe => "mspe",
            Concept::Robust => "robust",
        }
    }
}

/// Outcome of one randomized instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstanceOutcome {
    Agree,
    /// The membership assertion did not apply (e.g. the equilibrium needed
    /// the no-pure-cell fallback, so it is not expected in the oracle set).
    Skipped,
    Disagree(String),
}

/// Aggregated result of a differential run for one concept.
#[derive(Debug, Clone, Serialize)]
pub struct ConceptReport {
    pub concept: &'static str,
    pub instances: usize,
    pub agreements: usize,
    pub skipped: usize,
    /// Per-failure diagnostics, `seed: what diverged`.
    pub failures: Vec<String>,
}

impl ConceptReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Two agents on crossing or laterally offset straight paths, sized so the
/// whole horizon plus the frozen extension stays on-path.
fn random_scene(rng: &mut ChaCha8Rng) -> (Vec<Path>, Vec<VehicleState>) {
    let speed = |rng: &mut ChaCha8Rng| -> f64 {
        if rng.gen_bool(0.15) {
            0.0
        } else {
            rng.gen_range(0.3..13.0)
        }
    };
    if rng.gen_bool(0.7) {
        let angle = rng.gen_range(0.35..2.8_f64);
        let (c, s) = (angle.cos(), angle.sin());
        let d0 = rng.gen_range(4.0..28.0);
        let d1 = rng.gen_range(4.0..28.0);
        let v0 = speed(rng);
        let v1 = speed(rng);
        let paths = vec![
            Path::new(&[[-60.0, 0.0], [360.0, 0.0]]).expect("two distinct points"),
            Path::new(&[[-60.0 * c, -60.0 * s], [360.0 * c, 360.0 * s]]).expect("two distinct points"),
        ];
        let states = vec![
            VehicleState::moving(-d0, 0.0, v0, 0.0),
            VehicleState::moving(-d1 * c, -d1 * s, v1, angle),
        ];
        (paths, states)
    } else {
        let offset = rng.gen_range(1.0..9.0);
        let x0 = rng.gen_range(-8.0..8.0);
        let x1 = rng.gen_range(-8.0..8.0);
        let v0 = speed(rng);
        let v1 = speed(rng);
        let paths = vec![
            Path::new(&[[-60.0, 0.0], [360.0, 0.0]]).expect("two distinct points"),
            Path::new(&[[-60.0, offset], [360.0, offset]]).expect("two distinct points"),
        ];
        let states = vec![
            VehicleState::moving(x0, 0.0, v0, 0.0),
            VehicleState::moving(x1, offset, v1, 0.0),
        ];
        (paths, states)
    }
}

fn random_tree(rng: &mut ChaCha8Rng, stages: usize, n_samples: usize) -> GameTree {
    let cfg = GameConfig {
        horizon_s: 2.0 * stages as f64,
        n_samples,
        ..GameConfig::default()
    };
    for _ in 0..16 {
        let (paths, states) = random_scene(rng);
        if let Ok(tree) = build_game_tree(&states, &paths, &cfg) {
            return tree;
        }
    }
    unreachable!("scene generation stays within kinematic limits");
}

/// Uniform random walk of `len` joints from the root (stops early at a
/// frozen branch).
fn random_play(rng: &mut ChaCha8Rng, tree: &GameTree, len: usize) -> Vec<PlayStep> {
    let mut play = Vec::with_capacity(len);
    let mut cur = tree.root();
    for _ in 0..len {
        let node = tree.node(cur);
        let joint = rng.gen_range(0..node.joint_count());
        play.push((cur, joint));
        match node.children.get(joint).copied().flatten() {
            Some(next) if !tree.node(next).stuck => cur = next,
            _ => break,
        }
    }
    play
}

fn node_after(tree: &GameTree, play: &[PlayStep]) -> NodeId {
    match play.last() {
        None => tree.root(),
        Some(&(id, joint)) => tree
            .node(id)
            .children
            .get(joint)
            .copied()
            .flatten()
            .unwrap_or(id),
    }
}

fn grid_pick(rng: &mut ChaCha8Rng, grid: &[f64]) -> f64 {
    grid[rng.gen_range(0..grid.len())]
}

/// Tree sizes that keep each concept's brute force inside the enumeration
/// budget.
fn concept_sizes(rng: &mut ChaCha8Rng, concept: Concept) -> (usize, usize) {
    let stages = match concept {
        Concept::Spne => rng.gen_range(1..=2),
        Concept::Robust | Concept::Level1 => rng.gen_range(2..=3),
        _ => rng.gen_range(1..=3),
    };
    let n_samples = match (concept, stages) {
        (Concept::Spne, 2) => 1,
        (_, 3) => 1,
        (_, 2) => rng.gen_range(1..=2),
        _ => rng.gen_range(1..=3),
    };
    (stages, n_samples)
}

/// Run one randomized instance of a concept and compare the main solver with
/// the brute-force reference.
pub fn check_instance(concept: Concept, seed: u64) -> InstanceOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (concept as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let (stages, n_samples) = concept_sizes(&mut rng, concept);
    let tree = random_tree(&mut rng, stages, n_samples);
    let cfg = tree.cfg.clone();
    let grid = cfg.type_grid.clone();
    let types: Vec<f64> = (0..tree.n_agents()).map(|_| grid_pick(&mut rng, &grid)).collect();

    match concept {
        Concept::Spne => {
            use crate::strategic::spne;
            let main = match spne(&tree, &types, &cfg) {
                Ok(s) => s,
                Err(e) => return InstanceOutcome::Disagree(format!("{seed}: solver failed: {e}")),
            };
            let oracle = match oracle_spne(&tree, &types) {
                Ok(o) => o,
                Err(e) => return InstanceOutcome::Disagree(format!("{seed}: enumeration failed: {e}")),
            };
            if oracle.is_empty() && main.fallback_histories.is_empty() {
                return InstanceOutcome::Disagree(format!(
                    "{seed}: no subgame-perfect profile exists but the solver used no fallback"
                ));
            }
            if !main.fallback_histories.is_empty() {
                return InstanceOutcome::Skipped;
            }
            if oracle.iter().any(|p| p.choices == main.equilibrium) {
                InstanceOutcome::Agree
            } else {
                InstanceOutcome::Disagree(format!(
                    "{seed}: solver profile not in the {}-element oracle set",
                    oracle.len()
                ))
            }
        }
        Concept::Ac | Concept::Nac => {
            use crate::automata::step_automaton;
            let kind = if concept == Concept::Ac {
                AutomatonKind::AC
            } else {
                AutomatonKind::NAC
            };
            let mut gammas = grid.clone();
            gammas.push(rng.gen_range(-1.0..1.0));
            gammas.push(rng.gen_range(-1.0..1.0));
            for id in 0..tree.nodes.len() {
                if tree.node(id).stuck {
                    continue;
                }
                for agent in 0..tree.n_agents() {
                    for &gamma in &gammas {
                        let main = step_automaton(kind, tree.node(id), agent, gamma, &cfg)
                            .map(|(state, support)| (state.maneuver(), support));
                        let reference = reference_support(&tree, id, agent, kind, gamma);
                        match (main, reference) {
                            (Ok(m), Ok(r)) if m == r => {}
                            (Err(_), Err(_)) => {}
                            (m, r) => {
                                return InstanceOutcome::Disagree(format!(
                                    "{seed}: node {id} agent {agent} gamma {gamma}: {m:?} vs {r:?}"
                                ))
                            }
                        }
                    }
                }
            }
            InstanceOutcome::Agree
        }
        Concept::Level1 => {
            use crate::strategic::{level0_consistent_actions, level1_response, BeliefL1};
            let agent = rng.gen_range(0..tree.n_agents());
            let gamma = grid_pick(&mut rng, &grid);
            let prefix = rng.gen_range(0..stages);
            let play = random_play(&mut rng, &tree, prefix);
            let at = node_after(&tree, &play);
            // Fold the interval beliefs exactly as a planner would.
            let mut beliefs: Vec<Option<BeliefL1>> = (0..tree.n_agents())
                .map(|j| (j != agent).then(BeliefL1::full))
                .collect();
            for &(node_id, joint) in &play {
                let node = tree.node(node_id);
                for j in 0..tree.n_agents() {
                    if j == agent {
                        continue;
                    }
                    let action = node.action_of(joint, j);
                    let maneuver = node.actions[j].maneuver_of(action);
                    beliefs[j].as_mut().expect("opponent").observe(node, j, maneuver, &cfg);
                }
            }
            for j in 0..tree.n_agents() {
                if j == agent {
                    continue;
                }
                let main = level0_consistent_actions(
                    tree.node(at),
                    beliefs[j].as_ref().expect("opponent"),
                    j,
                    &cfg,
                );
                let reference = reference_consistent_actions(&tree, &play, j, at);
                match (&main, &reference) {
                    (Ok(m), Ok(r)) if m == r => {}
                    (Err(GameError::EmptyBelief), Err(GameError::EmptyBelief)) => {}
                    _ => {
                        return InstanceOutcome::Disagree(format!(
                            "{seed}: consistent set of agent {j}: {main:?} vs {reference:?}"
                        ))
                    }
                }
            }
            let main = level1_response(&tree, at, &beliefs, agent, gamma).map(|c| c.action);
            let reference = reference_level1(&tree, at, &play, agent, gamma);
            match (&main, &reference) {
                (Ok(m), Ok(r)) if m == r => InstanceOutcome::Agree,
                (Err(GameError::EmptyBelief), Err(GameError::EmptyBelief)) => InstanceOutcome::Agree,
                _ => InstanceOutcome::Disagree(format!(
                    "{seed}: response: {main:?} vs {reference:?}"
                )),
            }
        }
        Concept::Sspe | Concept::Mspe => {
            use crate::strategic::{mspe_set, sspe_set};
            let (main, reference) = if concept == Concept::Sspe {
                (sspe_set(&tree, &types, &cfg), reference_sspe(&tree, &types, &cfg))
            } else {
                (mspe_set(&tree, &types, &cfg), reference_mspe(&tree, &types, &cfg))
            };
            let (main, reference) = match (main, reference) {
                (Ok(m), Ok(r)) => (m, r),
                (m, r) => {
                    return InstanceOutcome::Disagree(format!(
                        "{seed}: solver {:?} vs reference {:?}",
                        m.map(|_| ()),
                        r.map(|_| ())
                    ))
                }
            };
            if main.equilibrium != reference.equilibrium {
                return InstanceOutcome::Disagree(format!("{seed}: equilibrium joints diverge"));
            }
            if main.fallback_histories != reference.fallbacks {
                return InstanceOutcome::Disagree(format!("{seed}: fallback histories diverge"));
            }
            for (&id, per_agent) in &main.by_history {
                let Some(ref_per_agent) = reference.admissible.get(&id) else {
                    return InstanceOutcome::Disagree(format!("{seed}: history {id} missing"));
                };
                for (&agent, sol) in per_agent {
                    if sol.ids() != ref_per_agent[agent] {
                        return InstanceOutcome::Disagree(format!(
                            "{seed}: history {id} agent {agent}: {:?} vs {:?}",
                            sol.ids(),
                            ref_per_agent[agent]
                        ));
                    }
                }
            }
            InstanceOutcome::Agree
        }
        Concept::Robust => {
            use crate::robust::{filter_consistent, robust_response, SolutionCache};
            let agent = rng.gen_range(0..tree.n_agents());
            let gamma_r = grid_pick(&mut rng, &grid);
            let prefix = rng.gen_range(0..stages);
            let play = random_play(&mut rng, &tree, prefix);
            let at = node_after(&tree, &play);
            let mut cache = SolutionCache::new();
            let mut beliefs = Vec::new();
            for j in 0..tree.n_agents() {
                if j == agent {
                    continue;
                }
                let main = filter_consistent(&tree, &play, j, gamma_r, &cfg, &mut cache);
                let reference = reference_hypotheses(&tree, &play, j, gamma_r, &cfg);
                if main != reference {
                    return InstanceOutcome::Disagree(format!(
                        "{seed}: surviving hypotheses of agent {j}: {main:?} vs {reference:?}"
                    ));
                }
                beliefs.push((j, main));
            }
            let main = robust_response(&tree, at, &play, &beliefs, agent, gamma_r, &cfg, &mut cache);
            let reference = reference_robust_action(&tree, at, &play, agent, gamma_r, &cfg);
            match (&main, &reference) {
                (Ok(m), Ok((action, fallback))) => {
                    if m.action == *action && m.used_fallback == *fallback {
                        InstanceOutcome::Agree
                    } else {
                        InstanceOutcome::Disagree(format!(
                            "{seed}: decision {} (fallback {}) vs {} (fallback {})",
                            m.action, m.used_fallback, action, fallback
                        ))
                    }
                }
                (Err(_), Err(_)) => InstanceOutcome::Agree,
                _ => InstanceOutcome::Disagree(format!("{seed}: one side failed")),
            }
        }
    }
}

/// Run `instances` seeded instances of one concept (in parallel) and
/// aggregate the outcomes.
pub fn differential_report(concept: Concept, instances: usize, base_seed: u64) -> ConceptReport {
    let outcomes: Vec<InstanceOutcome> = (0..instances as u64)
        .into_par_iter()
        .map(|i| check_instance(concept, base_seed.wrapping_add(i)))
        .collect();
    let mut report = ConceptReport {
        concept: concept.name(),
        instances,
        agreements: 0,
        skipped: 0,
        failures: Vec::new(),
    };
    for outcome in outcomes {
        match outcome {
            InstanceOutcome::Agree => report.agreements += 1,
            InstanceOutcome::Skipped => report.skipped += 1,
            InstanceOutcome::Disagree(msg) => report.failures.push(msg),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::build_game_tree;

    fn lane_tree(stages: usize, n_samples: usize, gap_m: f64) -> GameTree {
        let cfg = GameConfig {
            horizon_s: 2.0 * stages as f64,
            n_samples,
            ..GameConfig::default()
        };
        let paths = vec![
            Path::new(&[[-20.0, 0.0], [380.0, 0.0]]).unwrap(),
            Path::new(&[[-20.0, gap_m], [380.0, gap_m]]).unwrap(),
        ];
        let states = vec![
            VehicleState::moving(0.0, 0.0, 10.0, 0.0),
            VehicleState::moving(0.0, gap_m, 10.0, 0.0),
        ];
        build_game_tree(&states, &paths, &cfg).unwrap()
    }

    #[test]
    fn profile_counts_match_the_closed_forms() {
        // One stage, two actions per agent: 4 joints at one history.
        let tree = lane_tree(1, 1, 80.0);
        assert_eq!(profile_count(&tree), 4.0);
        let profiles: Vec<StrategyProfile> = enumerate_profiles(&tree).unwrap().collect();
        assert_eq!(profiles.len(), 4);
        assert!(profiles.iter().all(|p| p.is_total(&tree)));
        // Two stages: 4 root joints x 4 choices at each of the 4 children.
        let tree = lane_tree(2, 1, 80.0);
        assert_eq!(profile_count(&tree), 1024.0);
        assert_eq!(enumerate_profiles(&tree).unwrap().count(), 1024);
    }

    #[test]
    fn enumerated_profiles_are_distinct() {
        let tree = lane_tree(2, 1, 80.0);
        let seen: BTreeSet<Vec<(NodeId, usize)>> = enumerate_profiles(&tree)
            .unwrap()
            .map(|p| p.choices.into_iter().collect())
            .collect();
        assert_eq!(seen.len(), 1024);
    }

    #[test]
    fn oversized_trees_are_refused() {
        // Three stages at two actions per agent: 4^21 profiles.
        let tree = lane_tree(3, 1, 80.0);
        let expected = 4.0_f64.powi(21);
        assert_eq!(profile_count(&tree), expected);
        match enumerate_profiles(&tree) {
            Err(GameError::TooLarge { count, bound }) => {
                assert_eq!(count, expected);
                assert_eq!(bound, PROFILE_BOUND);
            }
            other => panic!("expected TooLarge, got {:?}", other.is_ok()),
        }
    }

    #[test]
    fn dominance_solvable_tree_has_a_unique_equilibrium_profile() {
        // Far-apart cruisers: safety saturates, so faster is strictly better
        // everywhere and the all-max-speed profile is the only survivor.
        let tree = lane_tree(2, 1, 80.0);
        let types = vec![0.0, 0.0];
        let oracle = oracle_spne(&tree, &types).unwrap();
        assert_eq!(oracle.len(), 1);
        let main = crate::strategic::spne(&tree, &types, &tree.cfg.clone()).unwrap();
        assert!(main.fallback_histories.is_empty());
        assert_eq!(oracle[0].choices, main.equilibrium);
    }

    #[test]
    fn oracle_set_is_enumeration_order_independent() {
        let tree = lane_tree(2, 1, 6.0);
        let types = vec![0.5, 0.5];
        let forward: BTreeSet<Vec<(NodeId, usize)>> = oracle_spne(&tree, &types)
            .unwrap()
            .into_iter()
            .map(|p| p.choices.into_iter().collect())
            .collect();
        let mut reversed: Vec<StrategyProfile> = enumerate_profiles(&tree).unwrap().collect();
        reversed.reverse();
        let backward: BTreeSet<Vec<(NodeId, usize)>> = reversed
            .into_iter()
            .filter(|p| passes_one_shot_deviations(&tree, p, &types))
            .map(|p| p.choices.into_iter().collect())
            .collect();
        assert_eq!(forward, backward);
    }

    #[test]
    fn literal_nash_cells_match_the_classics() {
        // Matching pennies: no pure cell.
        let mp = vec![
            vec![1.0, -1.0],
            vec![-1.0, 1.0],
            vec![-1.0, 1.0],
            vec![1.0, -1.0],
        ];
        assert!(reference_nash_cells(&mp, &[2, 2]).is_empty());
        // Prisoner's dilemma: mutual defection only.
        let pd = vec![
            vec![3.0, 3.0],
            vec![0.0, 5.0],
            vec![5.0, 0.0],
            vec![1.0, 1.0],
        ];
        assert_eq!(reference_nash_cells(&pd, &[2, 2]), vec![3]);
        // And the solver's detector agrees on both.
        assert_eq!(
            reference_nash_cells(&mp, &[2, 2]),
            crate::strategic::pure_nash_cells(&mp, &[2, 2])
        );
        assert_eq!(
            reference_nash_cells(&pd, &[2, 2]),
            crate::strategic::pure_nash_cells(&pd, &[2, 2])
        );
    }

    #[test]
    fn minimal_aspiration_admits_every_action() {
        let tree = lane_tree(2, 1, 6.0);
        let sol = reference_sspe(&tree, &[-1.0, -1.0], &tree.cfg.clone()).unwrap();
        for (&id, per_agent) in &sol.admissible {
            let node = tree.node(id);
            for (agent, adm) in per_agent.iter().enumerate() {
                let all: Vec<usize> = (0..node.actions[agent].len()).collect();
                assert_eq!(adm, &all, "node {id} agent {agent}");
            }
        }
    }

    #[test]
    fn lone_surviving_hypothesis_reduces_to_a_plain_best_response() {
        // Crossing geometry, one grid type: observing a maneuver that only
        // one automaton kind explains leaves a singleton hypothesis set.
        let cfg = GameConfig {
            horizon_s: 4.0,
            type_grid: vec![0.3],
            ..GameConfig::default()
        };
        let paths = vec![
            Path::new(&[[-60.0, 0.0], [360.0, 0.0]]).unwrap(),
            Path::new(&[[22.0, -60.0], [22.0, 360.0]]).unwrap(),
        ];
        let states = vec![
            VehicleState::moving(0.0, 0.0, 10.0, 0.0),
            VehicleState::moving(22.0, -20.0, 10.0, std::f64::consts::FRAC_PI_2),
        ];
        let tree = build_game_tree(&states, &paths, &cfg).unwrap();
        let root = tree.root();
        let node = tree.node(root);
        // Find a root joint whose observed maneuver for agent 1 matches
        // exactly one automaton's emission.
        let emissions: Vec<Maneuver> = [AutomatonKind::AC, AutomatonKind::NAC]
            .iter()
            .map(|&k| reference_support(&tree, root, 1, k, 0.3).unwrap().0)
            .collect();
        assert_ne!(emissions[0], emissions[1], "fixture must split the kinds");
        let joint = (0..node.joint_count())
            .find(|&j| {
                let m = node.actions[1].maneuver_of(node.action_of(j, 1));
                m == emissions[1] // NAC's class, so AC is ruled out
            })
            .expect("both classes exist for a moving vehicle");
        let play = vec![(root, joint)];
        let survivors = consistent_level0_types(&tree, &play, 1);
        assert_eq!(survivors, vec![(AutomatonKind::NAC, 0.3)]);

        let at = node_after(&tree, &play);
        // With one hypothesis the response is a plain best reply to its
        // support, which the main solver must reproduce.
        let reference = reference_level1(&tree, at, &play, 0, 0.5).unwrap();
        let mut beliefs = vec![None, Some(crate::strategic::BeliefL1::full())];
        let n = tree.node(root);
        let action = n.action_of(joint, 1);
        beliefs[1].as_mut().unwrap().observe(
            n,
            1,
            n.actions[1].maneuver_of(action),
            &cfg,
        );
        let main = crate::strategic::level1_response(&tree, at, &beliefs, 0, 0.5).unwrap();
        assert_eq!(main.action, reference);
    }

    #[test]
    fn differential_smoke_runs_clean() {
        for concept in Concept::ALL {
            let report = differential_report(concept, 8, 0xD1FF);
            assert!(
                report.passed(),
                "{}: {:?}",
                report.concept,
                report.failures
            );
        }
    }
}
