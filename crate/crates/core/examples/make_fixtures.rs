//! Regenerates the bundled synthetic evaluation fixture under `fixtures/`:
//! a trajectory CSV plus the game manifest that cuts it into two-agent
//! games.
//!
//! Forty games on a fixed ramp-merge geometry with seeded-random starts,
//! speeds, and behaviors. Thirty games are driven by the wait/proceed
//! automata at drawn aspiration levels, so the corpus contains genuinely
//! accommodating and non-accommodating records with recoverable witnesses;
//! the last ten play uniformly at random, which mostly fits neither
//! automaton cleanly and lands in the residual bucket. Output is
//! deterministic; rerun after changing the record schema.
//!
//!     cargo run --release --example make_fixtures

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use traffic_games::eval::scenario::SolverBank;
use traffic_games::eval::{
    run_closed_loop, tracks_from_play, write_tracks, Manifest, ManifestGame, ModelId,
    ScenarioTag, Track,
};
use traffic_games::game::{build_game_tree, GameConfig};
use traffic_games::robust::PlayStep;
use traffic_games::GameTree;

const GAMES: usize = 40;
const AUTOMATON_GAMES: usize = 30;
const MASTER_SEED: u64 = 2024;

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// A short ramp joining a straight lane, with per-game randomized initial
/// conditions.
fn game_spec(rng: &mut ChaCha8Rng) -> traffic_games::eval::ScenarioSpec {
    let merge_speed = 5.0 + 2.0 * rng.gen::<f64>();
    let merge_start = 2.0 * rng.gen::<f64>();
    let lane_speed = 7.0 + 4.0 * rng.gen::<f64>();
    let lane_start = 18.0 + 18.0 * rng.gen::<f64>();
    serde_json::from_value(json!({
        "id": "MBI",
        "description": "fixture geometry",
        "agents": [
            {
                "role": "merging",
                "path": [[-22.0, -3.5], [-6.0, -1.2], [0.0, 0.0], [300.0, 0.0]],
                "speeds_mps": [merge_speed],
                "starts_m": [merge_start]
            },
            {
                "role": "on-lane",
                "path": [[-60.0, 0.0], [300.0, 0.0]],
                "speeds_mps": [lane_speed],
                "starts_m": [lane_start]
            }
        ],
        "merge_point": [0.0, 0.0]
    }))
    .expect("fixture scenario deserializes")
}

/// Uniform joint choice per stage down the tree.
fn random_play(tree: &GameTree, rng: &mut ChaCha8Rng) -> Vec<PlayStep> {
    let mut play = Vec::new();
    let mut at = tree.root();
    loop {
        let node = tree.node(at);
        if node.stage >= tree.stages() || node.stuck {
            break;
        }
        let joint = rng.gen_range(0..node.joint_count());
        play.push((at, joint));
        match node.children[joint] {
            Some(next) => at = next,
            None => break,
        }
    }
    play
}

fn main() {
    let cfg = GameConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    let mut tracks: Vec<Track> = Vec::new();
    let mut games: Vec<ManifestGame> = Vec::new();

    for g in 0..GAMES {
        let spec = game_spec(&mut rng);
        spec.validate().expect("fixture scenario is valid");
        let cfg = spec.apply(&cfg);
        let paths = spec.paths().expect("fixture paths build");
        let init = &spec.init_grid()[0];
        let states = spec.initial_states(&paths, init);
        let tree = build_game_tree(&states, &paths, &cfg).expect("fixture tree builds");
        let play = if g < AUTOMATON_GAMES {
            // Mixed automaton pairings over the aspiration grid.
            let kinds = [
                [ModelId::Ac, ModelId::Ac],
                [ModelId::Ac, ModelId::Nac],
                [ModelId::Nac, ModelId::Ac],
                [ModelId::Nac, ModelId::Nac],
            ];
            let assignment = kinds[g % kinds.len()];
            let types: Vec<f64> = (0..2)
                .map(|_| cfg.type_grid[rng.gen_range(0..cfg.type_grid.len())])
                .collect();
            let seed = rng.gen::<u64>();
            let mut bank = SolverBank::new();
            run_closed_loop(&tree, &assignment, &types, &cfg, seed, &mut bank)
                .expect("automaton fixture game runs")
                .play
        } else {
            random_play(&tree, &mut rng)
        };
        assert_eq!(play.len(), tree.stages(), "fixture play spans the horizon");

        let ids: Vec<u64> = (0..2).map(|a| (g * 2 + a) as u64).collect();
        for (agent, mut track) in tracks_from_play(&tree, &play, cfg.dt_s)
            .into_iter()
            .enumerate()
        {
            track.id = ids[agent];
            tracks.push(track);
        }
        games.push(ManifestGame {
            id: format!("g{g:03}"),
            scenario: if g % 2 == 0 { ScenarioTag::LT } else { ScenarioTag::RT },
            agents: ids,
            t0_s: 0.0,
        });
    }

    let dir = fixture_dir();
    std::fs::create_dir_all(&dir).expect("fixtures directory");
    let csv = dir.join("tracks.csv");
    write_tracks(&csv, &tracks).expect("trajectory CSV written");
    let manifest_path = dir.join("manifest.json");
    let manifest = Manifest { games };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&manifest_path, text).expect("manifest written");
    println!(
        "wrote {} ({} tracks) and {} ({} games)",
        csv.display(),
        tracks.len(),
        manifest_path.display(),
        GAMES
    );
}
