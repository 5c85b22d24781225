//! Replaying a time-aligned record as a stage game.
//!
//! A record fixes who was where; the replay rebuilds the same decision
//! problem the solvers work on: polyline paths fitted to the observed
//! positions, a game tree grown from the initial states, one classified
//! maneuver per agent and stage, and the realized history as tree joints
//! (each observed segment snaps to the generated trajectory it tracks most
//! closely within its maneuver class).

use super::records::GameRecord;
use crate::game::{build_game_tree, GameError, GameTree, NodeId};
use crate::kinematics::{classify_speed_profile, Maneuver, Path, VehicleState};
use crate::robust::PlayStep;

/// A record lifted into game terms.
#[derive(Debug)]
pub struct ReplayedGame {
    pub tree: GameTree,
    /// Realized `(node, joint)` per stage. Shorter than the horizon only
    /// when the observations steer into a state some agent cannot leave
    /// (no feasible trajectory); later stages are then unmodeled.
    pub play: Vec<PlayStep>,
    /// Observed maneuver per stage and agent, aligned with `play`.
    pub maneuvers: Vec<Vec<Maneuver>>,
}

/// Fit a drivable centerline to observed positions: waypoints are kept at
/// half-meter spacing, and a track that never moved that far becomes a ray
/// along its recorded heading.
pub fn path_from_states(states: &[VehicleState]) -> Path {
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for s in states {
        let p = [s.x, s.y];
        if pts
            .last()
            .is_none_or(|q| (q[0] - p[0]).hypot(q[1] - p[1]) >= 0.5)
        {
            pts.push(p);
        }
    }
    if pts.len() < 2 {
        let s0 = &states[0];
        return Path::ray([s0.x, s0.y], s0.theta);
    }
    Path::new(&pts).expect("waypoints at half-meter spacing are distinct")
}

/// Sum of squared distances between an observed segment and a generated
/// trajectory, sample by sample.
fn tracking_cost(observed: &[VehicleState], traj: &crate::kinematics::Trajectory) -> f64 {
    observed
        .iter()
        .zip(&traj.samples)
        .map(|(o, t)| {
            let (dx, dy) = (o.x - t.state.x, o.y - t.state.y);
            dx * dx + dy * dy
        })
        .sum()
}

/// Rebuild the stage game a record traversed.
pub fn replay_record(record: &GameRecord, cfg: &crate::game::GameConfig) -> Result<ReplayedGame, GameError> {
    let paths: Vec<Path> = record
        .agents
        .iter()
        .map(|a| path_from_states(&a.states))
        .collect();
    let inits: Vec<VehicleState> = record.agents.iter().map(|a| a.states[0]).collect();
    let tree = build_game_tree(&inits, &paths, cfg)?;
    let spp = (cfg.period_s / cfg.dt_s).round() as usize;
    let stages = tree.stages();

    let mut play = Vec::with_capacity(stages);
    let mut maneuvers = Vec::with_capacity(stages);
    let mut at: NodeId = tree.root();
    for stage in 0..stages {
        let node = tree.node(at);
        if node.stuck {
            break;
        }
        let lo = stage * spp;
        let hi = (stage + 1) * spp;
        let mut ids = Vec::with_capacity(record.agents.len());
        let mut row = Vec::with_capacity(record.agents.len());
        for (agent, track) in record.agents.iter().enumerate() {
            let window = &track.states[lo..=hi];
            let m = classify_speed_profile(
                window.first().unwrap().speed(),
                window.last().unwrap().speed(),
                cfg.period_s,
            );
            row.push(m);
            // Snap within the observed class; an empty class means the tree
            // cannot express the observation, so fall back to every action.
            let class = node.actions[agent].ids_of(m);
            let candidates = if class.is_empty() {
                0..node.actions[agent].len()
            } else {
                class
            };
            let best = candidates
                .min_by(|&a, &b| {
                    tracking_cost(window, node.trajectory(agent, a))
                        .total_cmp(&tracking_cost(window, node.trajectory(agent, b)))
                })
                .expect("non-stuck nodes offer every agent an action");
            ids.push(best);
        }
        let joint = node.compose(&ids);
        play.push((at, joint));
        maneuvers.push(row);
        if stage + 1 < stages {
            at = node.children[joint].expect("inner joints of non-stuck nodes have children");
        }
    }
    Ok(ReplayedGame {
        tree,
        play,
        maneuvers,
    })
}

/// The stitched state sequence one agent traces along a played history, on
/// the same grid a record uses (both stage endpoints included once).
pub fn states_from_play(tree: &GameTree, play: &[PlayStep], agent: usize) -> Vec<VehicleState> {
    let mut out = Vec::new();
    for (i, &(node_id, joint)) in play.iter().enumerate() {
        let node = tree.node(node_id);
        let traj = node.trajectory(agent, node.action_of(joint, agent));
        let skip = usize::from(i > 0); // stage boundary appears once
        out.extend(traj.samples.iter().skip(skip).map(|s| s.state));
    }
    out
}
