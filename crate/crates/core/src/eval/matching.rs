//! Record/model matching: which behavioral models explain an observed game.
//!
//! A record matches a model when some aspiration assignment lets the model
//! reproduce the focal agent's observed maneuver sequence along the realized
//! history. Point-prediction models must emit the observed class at every
//! stage; set-valued models must contain it; the quantal model must give the
//! whole observed sequence at least even odds.
//!
//! The two automata split every record between them: a record counts for
//! the accommodating automaton exactly when some aspiration is consistent
//! with the observations, and for the non-accommodating one otherwise, so
//! the two rates always sum to one. Residual records that no
//! non-accommodating aspiration covers either are flagged, not double
//! counted.

use std::collections::HashMap;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use super::replay::{replay_record, ReplayedGame};
use super::records::GameRecord;
use super::EvalError;
use crate::automata::maxmax_set;
use crate::game::{GameConfig, GameError, GameTree, NodeId};
use crate::kinematics::Maneuver;
use crate::robust::{filter_consistent, robust_response, SolutionCache};
use crate::strategic::{
    level1_response, mspe_set, qlk_response, spne, sspe_set, BeliefL1, SolutionSet,
};

/// Every behavioral model the toolkit can score or simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    Ac,
    Nac,
    Maxmax,
    L1,
    Spne,
    Sspe,
    Mspe,
    Qlk,
    Robust,
}

impl ModelId {
    pub const ALL: [ModelId; 9] = [
        ModelId::Ac,
        ModelId::Nac,
        ModelId::Maxmax,
        ModelId::L1,
        ModelId::Spne,
        ModelId::Sspe,
        ModelId::Mspe,
        ModelId::Qlk,
        ModelId::Robust,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::Ac => "ac",
            ModelId::Nac => "nac",
            ModelId::Maxmax => "maxmax",
            ModelId::L1 => "l1",
            ModelId::Spne => "spne",
            ModelId::Sspe => "sspe",
            ModelId::Mspe => "mspe",
            ModelId::Qlk => "qlk",
            ModelId::Robust => "robust",
        }
    }

    pub fn parse(s: &str) -> Option<ModelId> {
        ModelId::ALL.into_iter().find(|m| m.name() == s)
    }

    /// True for the models whose aspiration enters only through the focal
    /// agent (opponent grid types play no role in their predictions).
    fn focal_only(self) -> bool {
        matches!(
            self,
            ModelId::Ac | ModelId::Nac | ModelId::Maxmax | ModelId::L1 | ModelId::Robust
        )
    }
}

/// The strategic models exercised by scenario sweeps.
pub const SWEEP_MODELS: [ModelId; 5] = [
    ModelId::L1,
    ModelId::Sspe,
    ModelId::Mspe,
    ModelId::Qlk,
    ModelId::Robust,
];

/// Per-record match outcome.
#[derive(Debug, Clone, Serialize)]
pub struct GameMatch {
    pub id: String,
    pub matched: bool,
    /// The reported aspiration witness: smallest by total magnitude among
    /// all matching assignments (focal aspiration alone for the models that
    /// ignore opponent types).
    pub witness: Option<Vec<f64>>,
    /// Every matching assignment; populated only under the witness-all
    /// switch.
    pub witnesses: Vec<Vec<f64>>,
    /// Residual record assigned to the non-accommodating automaton without
    /// any aspiration of its own actually covering it.
    pub uncovered: bool,
}

/// Aggregate match statistics for one model over a record set.
#[derive(Debug, Clone, Serialize)]
pub struct MatchReport {
    pub model: ModelId,
    pub total: usize,
    pub matched: usize,
    pub uncovered: usize,
    /// Mean focal witness aspiration over matched records (absent when
    /// nothing matched with a witness).
    pub mean_gamma: Option<f64>,
    pub per_game: Vec<GameMatch>,
}

impl MatchReport {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.matched as f64 / self.total as f64
        }
    }
}

/// Replay every record and score it against `model`.
pub fn match_rate(
    records: &[GameRecord],
    model: ModelId,
    cfg: &GameConfig,
) -> Result<MatchReport, EvalError> {
    let mut per_game = Vec::with_capacity(records.len());
    for record in records {
        let replayed = replay_record(record, cfg)?;
        per_game.push(match_replayed(&record.id, &replayed, model, cfg)?);
    }
    let matched = per_game.iter().filter(|g| g.matched).count();
    let uncovered = per_game.iter().filter(|g| g.uncovered).count();
    let witnesses: Vec<f64> = per_game
        .iter()
        .filter(|g| g.matched)
        .filter_map(|g| g.witness.as_ref().map(|w| w[0]))
        .collect();
    let mean_gamma = if witnesses.is_empty() {
        None
    } else {
        Some(witnesses.iter().sum::<f64>() / witnesses.len() as f64)
    };
    Ok(MatchReport {
        model,
        total: records.len(),
        matched,
        uncovered,
        mean_gamma,
        per_game,
    })
}

/// Focal-agent observations along the replayed history, truncated to the
/// opening stage under the first-stage-only switch.
fn focal_steps(replayed: &ReplayedGame, cfg: &GameConfig) -> Vec<(NodeId, Maneuver)> {
    let upto = if cfg.flags.first_stage_only {
        replayed.play.len().min(1)
    } else {
        replayed.play.len()
    };
    (0..upto)
        .map(|t| (replayed.play[t].0, replayed.maneuvers[t][0]))
        .collect()
}

/// Score one replayed record against one model.
pub fn match_replayed(
    id: &str,
    replayed: &ReplayedGame,
    model: ModelId,
    cfg: &GameConfig,
) -> Result<GameMatch, GameError> {
    if matches!(model, ModelId::Ac | ModelId::Nac) {
        return Ok(match_automata(id, replayed, model, cfg));
    }
    let steps = focal_steps(replayed, cfg);
    let grid = &cfg.type_grid;
    let n = replayed.tree.n_agents();
    let mut memo = SolverMemo::new(&replayed.tree, cfg);

    // Candidate aspiration assignments, row-major ascending; focal-only
    // models collapse the scan to the focal coordinate.
    let vectors: Vec<Vec<f64>> = if model.focal_only() {
        grid.iter().map(|&g| vec![g]).collect()
    } else {
        (0..n)
            .map(|_| grid.iter().copied())
            .multi_cartesian_product()
            .collect()
    };

    let mut witnesses = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for types in vectors {
        // A solver failure just means this assignment cannot explain the
        // record; it is no reason to abort the whole report.
        let hit = vector_matches(model, replayed, &steps, &types, cfg, &mut memo).unwrap_or(false);
        if !hit {
            continue;
        }
        let weight: f64 = types.iter().map(|g| g.abs()).sum();
        if best.as_ref().is_none_or(|(w, _)| weight < w - 1e-12) {
            best = Some((weight, types.clone()));
        }
        if cfg.flags.witness_all {
            witnesses.push(types);
        }
    }
    Ok(GameMatch {
        id: id.to_string(),
        matched: best.is_some(),
        witness: best.map(|(_, w)| w),
        witnesses,
        uncovered: false,
    })
}

/// Does one aspiration assignment reproduce the observed sequence?
fn vector_matches(
    model: ModelId,
    replayed: &ReplayedGame,
    steps: &[(NodeId, Maneuver)],
    types: &[f64],
    cfg: &GameConfig,
    memo: &mut SolverMemo,
) -> Result<bool, GameError> {
    let tree = &replayed.tree;
    match model {
        ModelId::Ac | ModelId::Nac => unreachable!("automata take the interval route"),
        ModelId::Maxmax => {
            for &(node, observed) in steps {
                let set = maxmax_set(tree.node(node), 0, types[0])?;
                if !set
                    .iter()
                    .any(|&a| tree.node(node).actions[0].maneuver_of(a) == observed)
                {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        ModelId::L1 => {
            let mut beliefs: Vec<Option<BeliefL1>> = (0..tree.n_agents())
                .map(|j| (j != 0).then(BeliefL1::full))
                .collect();
            for (t, &(node_id, observed)) in steps.iter().enumerate() {
                let node = tree.node(node_id);
                let choice = level1_response(tree, node_id, &beliefs, 0, types[0])?;
                if node.actions[0].maneuver_of(choice.action) != observed {
                    return Ok(false);
                }
                for j in 1..tree.n_agents() {
                    let m = replayed.maneuvers[t][j];
                    if let Some(b) = beliefs[j].as_mut() {
                        b.observe(node, j, m, cfg);
                    }
                }
            }
            Ok(true)
        }
        ModelId::Spne => {
            let Some(sol) = memo.equilibrium(ModelId::Spne, types) else {
                return Ok(false);
            };
            for &(node, observed) in steps {
                let joint = sol.equilibrium[&node];
                let action = replayed.tree.node(node).action_of(joint, 0);
                if replayed.tree.node(node).actions[0].maneuver_of(action) != observed {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        ModelId::Sspe | ModelId::Mspe => {
            let Some(sol) = memo.equilibrium(model, types) else {
                return Ok(false);
            };
            for &(node, observed) in steps {
                let ids = sol.by_history[&node][&0].ids();
                if !ids
                    .iter()
                    .any(|&a| tree.node(node).actions[0].maneuver_of(a) == observed)
                {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        ModelId::Qlk => {
            let Some(sol) = memo.equilibrium(ModelId::Qlk, types) else {
                return Ok(false);
            };
            let mut sequence_prob = 1.0;
            for &(node, observed) in steps {
                let probs = sol.by_history[&node][&0]
                    .probabilities()
                    .expect("the quantal solution is weighted");
                let class: f64 = probs
                    .iter()
                    .filter(|(a, _)| tree.node(node).actions[0].maneuver_of(*a) == observed)
                    .map(|(_, p)| p)
                    .sum();
                sequence_prob *= class;
            }
            Ok(sequence_prob >= 0.5 - 1e-12)
        }
        ModelId::Robust => {
            let gamma_r = types[0];
            let mut cache = SolutionCache::new();
            for (t, &(node_id, observed)) in steps.iter().enumerate() {
                let play = &replayed.play[..t];
                let beliefs: Vec<(usize, Vec<_>)> = (1..tree.n_agents())
                    .map(|j| (j, filter_consistent(tree, play, j, gamma_r, cfg, &mut cache)))
                    .collect();
                let decision =
                    robust_response(tree, node_id, play, &beliefs, 0, gamma_r, cfg, &mut cache)?;
                let node = tree.node(node_id);
                if node.actions[0].maneuver_of(decision.action) != observed {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

/// Automata matching: fold the observed maneuvers into the aspiration
/// intervals, then split the record by whether the accommodating automaton
/// has any consistent grid aspiration.
fn match_automata(id: &str, replayed: &ReplayedGame, model: ModelId, cfg: &GameConfig) -> GameMatch {
    let mut belief = BeliefL1::full();
    for (node, observed) in focal_steps(replayed, cfg) {
        belief.observe(replayed.tree.node(node), 0, observed, cfg);
    }
    let ac: Vec<f64> = belief.ac.grid_types(&cfg.type_grid).collect();
    let nac: Vec<f64> = belief.nac.grid_types(&cfg.type_grid).collect();
    let (matched, own, mut uncovered) = match model {
        ModelId::Ac => (!ac.is_empty(), ac, false),
        ModelId::Nac => (ac.is_empty(), nac, true),
        _ => unreachable!("only the automata take this route"),
    };
    uncovered &= matched && own.is_empty();
    let witness = matched.then(|| smallest_magnitude(&own)).flatten();
    let witnesses = if cfg.flags.witness_all && matched {
        own.iter().map(|&g| vec![g]).collect()
    } else {
        Vec::new()
    };
    GameMatch {
        id: id.to_string(),
        matched,
        witness: witness.map(|g| vec![g]),
        witnesses,
        uncovered,
    }
}

/// Smallest-|gamma| element, ties to the more negative one.
fn smallest_magnitude(gammas: &[f64]) -> Option<f64> {
    gammas
        .iter()
        .copied()
        .min_by(|a, b| (a.abs(), *a).partial_cmp(&(b.abs(), *b)).expect("grid types are finite"))
}

/// Memoized per-tree solver calls so the grid scan does not resolve the
/// same assignment twice.
struct SolverMemo<'a> {
    tree: &'a GameTree,
    cfg: &'a GameConfig,
    cells: HashMap<(&'static str, Vec<u64>), Option<SolutionSet>>,
}

impl<'a> SolverMemo<'a> {
    fn new(tree: &'a GameTree, cfg: &'a GameConfig) -> Self {
        Self {
            tree,
            cfg,
            cells: HashMap::new(),
        }
    }

    fn equilibrium(&mut self, model: ModelId, types: &[f64]) -> Option<&SolutionSet> {
        let key = (
            model.name(),
            types.iter().map(|g| g.to_bits()).collect::<Vec<u64>>(),
        );
        self.cells
            .entry(key)
            .or_insert_with(|| {
                let solved = match model {
                    ModelId::Spne => spne(self.tree, types, self.cfg),
                    ModelId::Sspe => sspe_set(self.tree, types, self.cfg),
                    ModelId::Mspe => mspe_set(self.tree, types, self.cfg),
                    ModelId::Qlk => {
                        qlk_response(self.tree, self.cfg.logit_lambda, types, self.cfg)
                    }
                    _ => unreachable!("only whole-tree solvers are memoized"),
                };
                solved.ok()
            })
            .as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::records::{AgentTrack, GameRecord, ScenarioTag};
    use crate::eval::replay::states_from_play;
    use crate::game::build_game_tree;
    use crate::kinematics::{Path, VehicleState};
    use crate::robust::PlayStep;

    /// Default semantics, two targets per maneuver: small enough trees that
    /// the grid scans in these tests stay quick.
    fn quick_cfg() -> GameConfig {
        GameConfig {
            n_samples: 2,
            ..GameConfig::default()
        }
    }

    fn crossing_tree(cfg: &GameConfig, approach: f64) -> GameTree {
        let paths = vec![
            Path::new(&[[-60.0, 0.0], [360.0, 0.0]]).unwrap(),
            Path::new(&[[18.0, -60.0], [18.0, 360.0]]).unwrap(),
        ];
        let states = vec![
            VehicleState::moving(-6.0, 0.0, 9.0, 0.0),
            VehicleState::moving(18.0, -approach, 10.0, std::f64::consts::FRAC_PI_2),
        ];
        build_game_tree(&states, &paths, cfg).unwrap()
    }

    fn record_of_play(tree: &GameTree, play: &[PlayStep], id: &str) -> GameRecord {
        GameRecord {
            id: id.into(),
            scenario: ScenarioTag::LT,
            t0_s: 0.0,
            agents: (0..tree.n_agents())
                .map(|i| AgentTrack {
                    track_id: i as u64,
                    states: states_from_play(tree, play, i),
                })
                .collect(),
        }
    }

    fn walk<F: FnMut(usize, &crate::game::GameNode) -> usize>(
        tree: &GameTree,
        mut pick: F,
    ) -> Vec<PlayStep> {
        let mut play = Vec::new();
        let mut at = tree.root();
        for stage in 0..tree.stages() {
            let node = tree.node(at);
            let joint = pick(stage, node);
            play.push((at, joint));
            if stage + 1 < tree.stages() {
                at = node.children[joint].unwrap();
            }
        }
        play
    }

    fn varied_records(cfg: &GameConfig) -> Vec<GameRecord> {
        let tree = crossing_tree(cfg, 21.0);
        let mut records = Vec::new();
        for (k, stride) in [(0usize, 0usize), (1, 3), (2, 7), (3, 11), (4, 5)] {
            let play = walk(&tree, |stage, node| (stage * stride + k) % node.joint_count());
            records.push(record_of_play(&tree, &play, &format!("g{k}")));
        }
        records
    }

    #[test]
    fn automata_rates_partition_every_record_set() {
        let cfg = quick_cfg();
        let records = varied_records(&cfg);
        let ac = match_rate(&records, ModelId::Ac, &cfg).unwrap();
        let nac = match_rate(&records, ModelId::Nac, &cfg).unwrap();
        assert_eq!(ac.total, nac.total);
        assert_eq!(ac.matched + nac.matched, ac.total);
        assert_eq!(ac.rate() + nac.rate(), 1.0);
    }

    #[test]
    fn an_equilibrium_walk_matches_the_equilibrium_model() {
        let mut cfg = quick_cfg();
        cfg.type_grid = vec![-0.5, 0.0, 0.5];
        let mut flagged = cfg.clone();
        flagged.flags.witness_all = true;
        let tree = crossing_tree(&cfg, 21.0);
        let types = vec![0.0, 0.0];
        let sol = spne(&tree, &types, &cfg).unwrap();
        let play = walk(&tree, |_, node| sol.equilibrium[&node.id]);
        let records = vec![record_of_play(&tree, &play, "eq")];
        let report = match_rate(&records, ModelId::Spne, &flagged).unwrap();
        assert_eq!(report.matched, 1);
        assert!(
            report.per_game[0].witnesses.iter().any(|w| w == &types),
            "the generating assignment must be among the witnesses"
        );
    }

    #[test]
    fn satisficing_sets_contain_their_equilibrium_walks() {
        let mut cfg = quick_cfg();
        cfg.type_grid = vec![-0.5, 0.5];
        let tree = crossing_tree(&cfg, 21.0);
        let sol = spne(&tree, &[0.5, -0.5], &cfg).unwrap();
        let play = walk(&tree, |_, node| sol.equilibrium[&node.id]);
        let records = vec![record_of_play(&tree, &play, "eq")];
        let sspe = match_rate(&records, ModelId::Sspe, &cfg).unwrap();
        assert_eq!(sspe.matched, 1, "equilibrium play satisfies its own set");
    }

    #[test]
    fn the_quantal_model_matches_its_modal_sequence_under_high_precision() {
        let mut cfg = quick_cfg();
        cfg.type_grid = vec![0.0];
        cfg.logit_lambda = 60.0;
        let tree = crossing_tree(&cfg, 21.0);
        let types = vec![0.0, 0.0];
        let sol = qlk_response(&tree, cfg.logit_lambda, &types, &cfg).unwrap();
        let play = walk(&tree, |_, node| {
            let ids: Vec<usize> = (0..node.n_agents())
                .map(|i| {
                    sol.by_history[&node.id][&i]
                        .probabilities()
                        .unwrap()
                        .into_iter()
                        .max_by(|a, b| a.1.total_cmp(&b.1))
                        .unwrap()
                        .0
                })
                .collect();
            node.compose(&ids)
        });
        let records = vec![record_of_play(&tree, &play, "modal")];
        let report = match_rate(&records, ModelId::Qlk, &cfg).unwrap();
        assert_eq!(report.matched, 1);
    }

    #[test]
    fn first_stage_only_relaxes_later_divergence() {
        let mut cfg = quick_cfg();
        cfg.type_grid = vec![0.0];
        let tree = crossing_tree(&cfg, 21.0);
        // opening joint from the focal maxmax response, then deliberately
        // flip the focal agent to the other maneuver class
        let gamma = 0.0;
        let play = walk(&tree, |stage, node| {
            let set = maxmax_set(node, 0, gamma).unwrap();
            let lead = set[0];
            let a = if stage == 0 {
                lead
            } else {
                let m = node.actions[0].maneuver_of(lead);
                let other = match m {
                    Maneuver::Wait => Maneuver::Proceed,
                    Maneuver::Proceed => Maneuver::Wait,
                };
                node.actions[0].ids_of(other).next().unwrap_or(lead)
            };
            let mut ids = vec![0usize; node.n_agents()];
            ids[0] = a;
            node.compose(&ids)
        });
        let records = vec![record_of_play(&tree, &play, "opening")];
        let strict = match_rate(&records, ModelId::Maxmax, &cfg).unwrap();
        let mut relaxed_cfg = cfg.clone();
        relaxed_cfg.flags.first_stage_only = true;
        let relaxed = match_rate(&records, ModelId::Maxmax, &relaxed_cfg).unwrap();
        assert_eq!(strict.matched, 0);
        assert_eq!(relaxed.matched, 1);
    }

    #[test]
    fn witnesses_prefer_the_smallest_magnitude() {
        assert_eq!(smallest_magnitude(&[-1.0, -0.5, 0.5, 1.0]), Some(-0.5));
        assert_eq!(smallest_magnitude(&[0.5, 1.0]), Some(0.5));
        assert_eq!(smallest_magnitude(&[]), None);
    }

    #[test]
    fn model_names_round_trip() {
        for m in ModelId::ALL {
            assert_eq!(ModelId::parse(m.name()), Some(m));
        }
        assert_eq!(ModelId::parse("unknown"), None);
    }
}
