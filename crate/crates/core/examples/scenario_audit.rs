//! Geometry audit for the bundled scenario files.
//!
//! For every initial condition of a scenario this walks the whole game tree
//! and reports the smallest pairwise gap any combination of simultaneous
//! choices can produce. A floor above the crash threshold is a proof that no
//! policy — sampled, adversarial, or otherwise — can crash there. It then
//! runs the full model sweep and prints the metrics table so the crash /
//! success profile can be inspected while tuning the geometry.
//!
//! Usage: `cargo run --release --example scenario_audit [scenario.json ...]`

use std::time::Instant;

use traffic_games::eval::{sweep, ScenarioSpec, SWEEP_MODELS};
use traffic_games::game::{build_game_tree, GameConfig, GameTree};
use traffic_games::kinematics::min_gap;

/// Smallest gap any pair of agents can realize anywhere in the tree, plus
/// where it happens: (gap, stage, agent i, agent j, position of i).
fn worst_case_gap(tree: &GameTree) -> (f64, usize, usize, usize, [f64; 2]) {
    let n = tree.n_agents();
    let mut worst = (f64::INFINITY, 0, 0, 0, [0.0, 0.0]);
    for node in &tree.nodes {
        if node.stuck {
            continue;
        }
        for i in 0..n {
            for j in i + 1..n {
                for ai in 0..node.actions[i].len() {
                    for aj in 0..node.actions[j].len() {
                        let g = min_gap(node.trajectory(i, ai), node.trajectory(j, aj))
                            .expect("trajectories share a sample count");
                        if g < worst.0 {
                            let e = node.trajectory(i, ai).end_state();
                            worst = (g, node.stage, i, j, [e.x, e.y]);
                        }
                    }
                }
            }
        }
    }
    worst
}

/// Grid-search the through-traffic start offsets for the widest worst-case
/// gap floor across every initial condition.
fn search_staggers(spec: &ScenarioSpec, cfg: &traffic_games::game::GameConfig) {
    let paths = spec.paths().expect("paths build");
    let mut best: Vec<(f64, f64, f64)> = Vec::new();
    for sb10 in (210..=240).step_by(1) {
        let sb = sb10 as f64 / 10.0;
        for eb10 in (-40..=20).step_by(5) {
            let eb = eb10 as f64 / 10.0;
            let mut probe = spec.clone();
            probe.agents[1].starts_m = vec![sb];
            probe.agents[2].starts_m = vec![eb];
            let mut floor = f64::INFINITY;
            for init in probe.init_grid() {
                let states = probe.initial_states(&paths, &init);
                let tree = build_game_tree(&states, &paths, cfg).expect("tree builds");
                floor = floor.min(worst_case_gap(&tree).0);
            }
            best.push((floor, sb, eb));
        }
    }
    best.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (floor, sb, eb) in best.iter().take(12) {
        println!("  floor {floor:.3} m at sb={sb} eb={eb}");
    }
}

/// Sweep-level search over the on-lane start: prints each candidate's crash
/// count per model so the merge conflict can be placed where the orderings
/// come out right.
fn search_onlane(spec: &ScenarioSpec) {
    for s10 in (280..=420).step_by(5) {
        let start = s10 as f64 / 10.0;
        let mut probe = spec.clone();
        probe.agents[1].starts_m = vec![start];
        let report = sweep(&probe, &GameConfig::default(), &SWEEP_MODELS, 7).expect("sweep runs");
        let line: Vec<String> = report
            .rows
            .iter()
            .map(|row| {
                let tightest = report
                    .runs
                    .iter()
                    .filter(|r| r.model == row.model && !r.crash)
                    .map(|r| r.min_gap_m)
                    .fold(f64::INFINITY, f64::min);
                format!(
                    "{} {:.0}/{:.2}/{:.2}",
                    row.model,
                    row.crash_rate * report.runs.len() as f64 / SWEEP_MODELS.len() as f64,
                    row.mean_success,
                    tightest,
                )
            })
            .collect();
        println!("  start {start}: {}", line.join("  "));
    }
}

fn audit(path: &std::path::Path) {
    let spec = ScenarioSpec::load(path).expect("scenario loads");
    let cfg = spec.apply(&GameConfig::default());
    let paths = spec.paths().expect("paths build");
    println!("=== {} ({}) ===", spec.id, path.display());

    if std::env::var("AUDIT_SEARCH").is_ok() {
        search_staggers(&spec, &cfg);
        return;
    }
    if std::env::var("AUDIT_SEARCH_ONLANE").is_ok() {
        search_onlane(&spec);
        return;
    }

    for init in spec.init_grid() {
        let states = spec.initial_states(&paths, &init);
        let tree = build_game_tree(&states, &paths, &cfg).expect("tree builds");
        let (floor, stage, i, j, at) = worst_case_gap(&tree);
        let desc: Vec<String> = init
            .iter()
            .map(|p| format!("v={} s={}", p.speed_mps, p.start_m))
            .collect();
        println!(
            "  init [{}]: {} nodes, worst-case gap {:.3} m {} [stage {stage}, {i} vs {j}, near ({:.1},{:.1})]",
            desc.join(", "),
            tree.nodes.len(),
            floor,
            if floor > cfg.crash_gap_m { "(crash-free)" } else { "(CRASHABLE)" },
            at[0], at[1],
        );
    }

    if std::env::var("AUDIT_NO_SWEEP").is_ok() {
        return;
    }
    let models: Vec<_> = match std::env::var("AUDIT_MODELS") {
        Ok(list) => list
            .split(',')
            .map(|s| traffic_games::eval::ModelId::parse(s.trim()).expect("known model"))
            .collect(),
        Err(_) => SWEEP_MODELS.to_vec(),
    };
    let t0 = Instant::now();
    let report = sweep(&spec, &GameConfig::default(), &models, 7).expect("sweep runs");
    let dt = t0.elapsed();
    println!("  sweep: {} runs in {:.1} s", report.runs.len(), dt.as_secs_f64());
    for row in &report.rows {
        let model_runs: Vec<_> = report
            .runs
            .iter()
            .filter(|r| r.model == row.model)
            .collect();
        let crashes = model_runs.iter().filter(|r| r.crash).count();
        let stuck = model_runs.iter().filter(|r| r.stuck).count();
        let tightest = model_runs
            .iter()
            .map(|r| r.min_gap_m)
            .fold(f64::INFINITY, f64::min);
        println!(
            "  {:>7}: success {:.3} sd {:.3} crash {:.3} ({} runs, {} crashes, {} stuck, tightest {:.2} m)",
            row.model, row.mean_success, row.sd_across_types, row.crash_rate,
            model_runs.len(), crashes, stuck, tightest,
        );
    }
    if std::env::var("AUDIT_CRASH_DETAIL").is_ok() {
        for r in report.runs.iter().filter(|r| r.crash) {
            println!(
                "    CRASH {} types {:?} init {:?} gap {:.3} actions {:?} maneuvers {:?}",
                r.model, r.types, r.init, r.min_gap_m, r.actions, r.maneuvers,
            );
            let states = spec.initial_states(&paths, &r.init);
            let tree = build_game_tree(&states, &paths, &cfg).expect("tree builds");
            let mut node = tree.root();
            for row in &r.actions {
                let n = tree.node(node);
                let joint = n.compose(row);
                for (agent, &a) in row.iter().enumerate() {
                    let t = n.trajectory(agent, a);
                    let s0 = &t.samples.first().unwrap().state;
                    let s1 = t.end_state();
                    println!(
                        "      stage {} agent {agent} a{a}: ({:.1},{:.1}) v{:.1} -> ({:.1},{:.1}) v{:.1}",
                        n.stage, s0.x, s0.y, s0.speed(), s1.x, s1.y, s1.speed(),
                    );
                }
                match n.children[joint] {
                    Some(c) => node = c,
                    None => break,
                }
            }
        }
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let defaults = ["scenarios/ic.json", "scenarios/mbi.json", "scenarios/pp.json"];
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    if args.is_empty() {
        for name in defaults {
            audit(&root.join(name));
        }
    } else {
        for name in &args {
            audit(std::path::Path::new(name));
        }
    }
}
