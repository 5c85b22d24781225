//! Shared helpers for the integration suites: seeded small game trees on a
//! crossing layout. Each test target compiles its own copy, so not every
//! helper is used everywhere.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use traffic_games::game::{build_game_tree, GameConfig, GameTree};
use traffic_games::kinematics::Path;
use traffic_games::VehicleState;

/// A two-agent perpendicular crossing: eastbound along y = 0, southbound
/// along x = 0, meeting at the origin. Stand-off is the initial distance to
/// the crossing point.
pub fn crossing_with(
    n_samples: usize,
    horizon_s: f64,
    v: [f64; 2],
    stand_off: [f64; 2],
) -> (GameTree, GameConfig) {
    let mut cfg = GameConfig::default();
    cfg.n_samples = n_samples;
    cfg.horizon_s = horizon_s;
    let east = Path::new(&[[-60.0, 0.0], [90.0, 0.0]]).expect("straight path");
    let south = Path::new(&[[0.0, 60.0], [0.0, -90.0]]).expect("straight path");
    let states = vec![
        VehicleState {
            x: -stand_off[0],
            y: 0.0,
            vx: v[0],
            vy: 0.0,
            ax: 0.0,
            ay: 0.0,
            theta: 0.0,
        },
        VehicleState {
            x: 0.0,
            y: stand_off[1],
            vx: v[1],
            vy: 0.0,
            ax: 0.0,
            ay: 0.0,
            theta: -std::f64::consts::FRAC_PI_2,
        },
    ];
    let tree = build_game_tree(&states, &[east, south], &cfg).expect("crossing tree builds");
    (tree, cfg)
}

/// Seeded speeds, stand-off distances, sampling density, and horizon.
/// Trees stay at oracle scale: at most two targets per maneuver and at
/// most three stages.
pub fn random_crossing(seed: u64) -> (GameTree, GameConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_samples = 1 + (rng.gen::<u32>() % 2) as usize;
    let horizon_s = if rng.gen::<bool>() { 6.0 } else { 4.0 };
    let v = [5.0 + 7.0 * rng.gen::<f64>(), 5.0 + 7.0 * rng.gen::<f64>()];
    let stand_off = [10.0 + 25.0 * rng.gen::<f64>(), 10.0 + 25.0 * rng.gen::<f64>()];
    crossing_with(n_samples, horizon_s, v, stand_off)
}

/// Ascending ids of every internal, non-stuck history of `tree`.
pub fn internal_nodes(tree: &GameTree) -> Vec<usize> {
    (0..tree.nodes.len())
        .filter(|&id| {
            let n = tree.node(id);
            n.stage < tree.stages() && !n.stuck
        })
        .collect()
}
