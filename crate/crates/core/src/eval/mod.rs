//! Offline evaluation: trajectory ingest, model/record matching, and
//! closed-loop scenario sweeps.
//!
//! The pipeline has two halves. The *matching* half replays recorded
//! trajectories as stage games and asks, per behavioral model, whether some
//! aspiration assignment explains the observed maneuver sequence. The
//! *simulation* half runs the models closed-loop on bundled scenario
//! geometry over a grid of aspirations and initial conditions, reporting
//! success, spread, and crash statistics.

pub mod matching;
pub mod records;
pub mod replay;
pub mod scenario;

use thiserror::Error;

use crate::game::GameError;

/// Everything that can go wrong between raw files and finished reports.
#[derive(Debug, Error)]
pub enum EvalError {
    /// The input file does not have the documented shape.
    #[error("schema error: {0}")]
    Schema(String),
    /// Missing samples: consecutive rows (or record edges) further apart
    /// than the tolerated gap.
    #[error("track {track}: data gap of {seconds:.2} s exceeds the 0.5 s tolerance")]
    Gap { track: u64, seconds: f64 },
    /// A manifest entry references a track id absent from the trajectory
    /// file.
    #[error("game {game}: track {track} is not in the trajectory file")]
    MissingTrack { game: String, track: u64 },
    /// Scenario description that fails validation.
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub use matching::{match_rate, GameMatch, MatchReport, ModelId, SWEEP_MODELS};
pub use records::{
    assemble_records, read_manifest, read_tracks, write_tracks, AgentTrack, GameRecord, Manifest,
    ManifestGame, ScenarioTag, Track, TrackSample, MAX_GAP_S, TRAJECTORY_HEADER,
};
pub use replay::{replay_record, ReplayedGame};
pub use scenario::{
    run_closed_loop, sweep, tracks_from_play, write_metrics_csv, write_runs_jsonl, AgentSpec,
    InitPoint, OutcomeRecord, ScenarioSpec, SweepReport, SweepRow,
};
