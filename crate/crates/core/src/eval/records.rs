//! Raw trajectory files, the game manifest, and time-aligned records.
//!
//! Trajectories arrive as one flat CSV holding every vehicle track; a JSON
//! manifest groups track ids into games and stamps each with a scenario tag
//! and a start time. `assemble_records` joins the two and resamples every
//! agent onto the solver's sample grid over the game horizon.

use std::collections::BTreeMap;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::game::GameConfig;
use crate::kinematics::{normalize_angle, VehicleState};

/// Exact column set (and order) the trajectory CSV must carry.
pub const TRAJECTORY_HEADER: [&str; 10] = [
    "track_id", "frame", "t_s", "x_m", "y_m", "vx_ms", "vy_ms", "ax_ms2", "ay_ms2", "theta_rad",
];

/// Largest tolerated spacing between consecutive samples of a track [s].
pub const MAX_GAP_S: f64 = 0.5;

/// One CSV row after parsing.
#[derive(Debug, Clone, Copy)]
pub struct TrackSample {
    pub frame: u64,
    pub t_s: f64,
    pub state: VehicleState,
}

/// All samples of one vehicle, ascending in time.
#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub samples: Vec<TrackSample>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawRow {
    track_id: u64,
    frame: u64,
    t_s: f64,
    x_m: f64,
    y_m: f64,
    vx_ms: f64,
    vy_ms: f64,
    ax_ms2: f64,
    ay_ms2: f64,
    theta_rad: f64,
}

/// Which recorded situation a game was cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioTag {
    /// Left turn across oncoming traffic.
    LT,
    /// Right turn into a gap.
    RT,
}

/// One game entry of the manifest: which tracks play, from when.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestGame {
    pub id: String,
    pub scenario: ScenarioTag,
    /// Participating track ids; the first one is the focal agent whose
    /// behavior the match reports are about.
    pub agents: Vec<u64>,
    pub t0_s: f64,
}

/// Top-level manifest file contents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub games: Vec<ManifestGame>,
}

/// One agent of a record: its track id and its state at every grid instant
/// `t0 + k*dt` across the horizon (inclusive of both ends).
#[derive(Debug, Clone)]
pub struct AgentTrack {
    pub track_id: u64,
    pub states: Vec<VehicleState>,
}

/// A manifest game joined with its resampled trajectories.
#[derive(Debug, Clone)]
pub struct GameRecord {
    pub id: String,
    pub scenario: ScenarioTag,
    pub t0_s: f64,
    pub agents: Vec<AgentTrack>,
}

/// Read and group the trajectory CSV. The header must match
/// [`TRAJECTORY_HEADER`] byte for byte; row order in the file does not
/// matter, each track is sorted by time (ties by frame number).
pub fn read_tracks(path: &FsPath) -> Result<BTreeMap<u64, Track>, EvalError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<&str> = reader.headers()?.iter().collect();
    if headers != TRAJECTORY_HEADER {
        return Err(EvalError::Schema(format!(
            "trajectory header must be `{}`, found `{}`",
            TRAJECTORY_HEADER.join(","),
            headers.join(",")
        )));
    }
    let mut tracks: BTreeMap<u64, Track> = BTreeMap::new();
    for row in reader.deserialize() {
        let row: RawRow = row?;
        if !row.t_s.is_finite() {
            return Err(EvalError::Schema(format!(
                "track {} frame {}: non-finite timestamp",
                row.track_id, row.frame
            )));
        }
        let state = VehicleState {
            x: row.x_m,
            y: row.y_m,
            vx: row.vx_ms,
            vy: row.vy_ms,
            ax: row.ax_ms2,
            ay: row.ay_ms2,
            theta: normalize_angle(row.theta_rad),
        };
        tracks
            .entry(row.track_id)
            .or_insert_with(|| Track {
                id: row.track_id,
                samples: Vec::new(),
            })
            .samples
            .push(TrackSample {
                frame: row.frame,
                t_s: row.t_s,
                state,
            });
    }
    for track in tracks.values_mut() {
        track
            .samples
            .sort_by(|a, b| a.t_s.total_cmp(&b.t_s).then(a.frame.cmp(&b.frame)));
    }
    Ok(tracks)
}

/// Write tracks back out in the ingest schema (fixtures, exports).
pub fn write_tracks(path: &FsPath, tracks: &[Track]) -> Result<(), EvalError> {
    let mut writer = csv::Writer::from_path(path)?;
    for track in tracks {
        for s in &track.samples {
            writer.serialize(RawRow {
                track_id: track.id,
                frame: s.frame,
                t_s: s.t_s,
                x_m: s.state.x,
                y_m: s.state.y,
                vx_ms: s.state.vx,
                vy_ms: s.state.vy,
                ax_ms2: s.state.ax,
                ay_ms2: s.state.ay,
                theta_rad: s.state.theta,
            })?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Parse the game manifest.
pub fn read_manifest(path: &FsPath) -> Result<Manifest, EvalError> {
    let text = std::fs::read_to_string(path)?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    for game in &manifest.games {
        if game.agents.is_empty() {
            return Err(EvalError::Schema(format!(
                "game {}: needs at least one agent",
                game.id
            )));
        }
    }
    Ok(manifest)
}

/// Join tracks and manifest into records aligned at `cfg.dt_s` over
/// `[t0, t0 + horizon]`. Fails when a referenced track is missing, when the
/// track does not cover the window, or when consecutive source samples sit
/// further than [`MAX_GAP_S`] apart inside it.
pub fn assemble_records(
    tracks: &BTreeMap<u64, Track>,
    manifest: &Manifest,
    cfg: &GameConfig,
) -> Result<Vec<GameRecord>, EvalError> {
    let mut records = Vec::with_capacity(manifest.games.len());
    for game in &manifest.games {
        let mut agents = Vec::with_capacity(game.agents.len());
        for &track_id in &game.agents {
            let track = tracks.get(&track_id).ok_or_else(|| EvalError::MissingTrack {
                game: game.id.clone(),
                track: track_id,
            })?;
            let states = resample(track, game.t0_s, cfg)?;
            agents.push(AgentTrack { track_id, states });
        }
        records.push(GameRecord {
            id: game.id.clone(),
            scenario: game.scenario,
            t0_s: game.t0_s,
            agents,
        });
    }
    Ok(records)
}

/// Linear interpolation of one track onto the grid instants of the window.
fn resample(track: &Track, t0: f64, cfg: &GameConfig) -> Result<Vec<VehicleState>, EvalError> {
    let eps = 1e-6;
    let horizon = cfg.horizon_s;
    let n = (horizon / cfg.dt_s).round() as usize;
    let samples = &track.samples;
    let first = samples.first().map(|s| s.t_s).unwrap_or(f64::INFINITY);
    let last = samples.last().map(|s| s.t_s).unwrap_or(f64::NEG_INFINITY);
    if first > t0 + eps {
        return Err(EvalError::Gap {
            track: track.id,
            seconds: first - t0,
        });
    }
    if last < t0 + horizon - eps {
        return Err(EvalError::Gap {
            track: track.id,
            seconds: t0 + horizon - last,
        });
    }
    // Gaps are only a problem where they overlap the game window.
    for w in samples.windows(2) {
        let (a, b) = (w[0].t_s, w[1].t_s);
        if b - a > MAX_GAP_S + eps && b > t0 - eps && a < t0 + horizon + eps {
            return Err(EvalError::Gap {
                track: track.id,
                seconds: b - a,
            });
        }
    }
    let mut out = Vec::with_capacity(n + 1);
    let mut hi = 0usize;
    for k in 0..=n {
        let t = t0 + k as f64 * cfg.dt_s;
        while hi + 1 < samples.len() && samples[hi].t_s < t - eps {
            hi += 1;
        }
        if samples[hi].t_s >= t - eps && (samples[hi].t_s - t).abs() <= eps {
            out.push(samples[hi].state);
            continue;
        }
        // samples[hi] is the first sample at or after t; interpolate from
        // its predecessor.
        let (lo_i, hi_i) = if samples[hi].t_s >= t {
            (hi.saturating_sub(1), hi)
        } else {
            (hi, (hi + 1).min(samples.len() - 1))
        };
        let (a, b) = (&samples[lo_i], &samples[hi_i]);
        let span = (b.t_s - a.t_s).max(eps);
        let alpha = ((t - a.t_s) / span).clamp(0.0, 1.0);
        out.push(lerp_state(&a.state, &b.state, alpha));
    }
    Ok(out)
}

fn lerp_state(a: &VehicleState, b: &VehicleState, alpha: f64) -> VehicleState {
    let mix = |p: f64, q: f64| p + alpha * (q - p);
    VehicleState {
        x: mix(a.x, b.x),
        y: mix(a.y, b.y),
        vx: mix(a.vx, b.vx),
        vy: mix(a.vy, b.vy),
        ax: mix(a.ax, b.ax),
        ay: mix(a.ay, b.ay),
        // shortest-arc blend so wrapped headings do not sweep the long way
        theta: normalize_angle(a.theta + alpha * normalize_angle(b.theta - a.theta)),
    }
}
