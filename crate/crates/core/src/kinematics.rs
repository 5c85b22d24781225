//! Vehicle kinematics: states, reference paths, and maneuver-tagged
//! trajectory families.
//!
//! Trajectories are sampled along a reference path (a polyline extended
//! linearly beyond both ends). The longitudinal speed profile between the
//! current speed and a target end speed is the minimum-peak-acceleration
//! member of the cubic position family — a constant-acceleration ramp — so
//! the acceleration bound needed to realize a target is exactly
//! `(target - v0) / duration`. Targets that would violate the acceleration
//! limits are clamped away by intersecting the target interval with the
//! reachable speed interval before sampling.
//!
//! Every generated trajectory is guaranteed to classify (via
//! [`classify_speed_profile`]) to the maneuver it is tagged with; candidates
//! that would not are dropped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A vehicle counts as stopped when its speed falls below this [m/s].
pub const STOP_SPEED: f64 = 0.5;

/// Mean longitudinal accelerations below this classify a speed profile as
/// a wait maneuver [m/s^2].
pub const WAIT_ACCEL: f64 = -0.2;

/// Proceed trajectories may end at most this much slower than they started
/// [m/s].
pub const SPEED_SLACK: f64 = 0.1;

/// Kinematic envelope used both when sampling trajectories and when
/// validating them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicLimits {
    /// Maximum speed [m/s].
    pub v_max: f64,
    /// Strongest allowed deceleration [m/s^2] (negative).
    pub a_min: f64,
    /// Strongest allowed acceleration [m/s^2].
    pub a_max: f64,
    /// Maximum magnitude of jerk [m/s^3].
    pub jerk_max: f64,
}

impl Default for KinematicLimits {
    fn default() -> Self {
        Self {
            v_max: 14.0,
            a_min: -4.5,
            a_max: 3.0,
            jerk_max: 10.0,
        }
    }
}

/// Discrete maneuver classes a trajectory can be tagged with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Maneuver {
    /// Decelerate (or remain stopped).
    Wait,
    /// Maintain speed or accelerate.
    Proceed,
}

/// Planar vehicle state. Velocity and acceleration are expressed in the body
/// frame: `vx`/`ax` longitudinal (along the heading), `vy`/`ay` lateral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Position east [m].
    pub x: f64,
    /// Position north [m].
    pub y: f64,
    /// Longitudinal velocity [m/s].
    pub vx: f64,
    /// Lateral velocity [m/s].
    pub vy: f64,
    /// Longitudinal acceleration [m/s^2].
    pub ax: f64,
    /// Lateral acceleration [m/s^2].
    pub ay: f64,
    /// Heading, normalized to (-pi, pi] [rad].
    pub theta: f64,
}

impl VehicleState {
    /// A state at rest at `(x, y)` facing `theta`.
    pub fn at_rest(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            vx: 0.0,
            vy: 0.0,
            ax: 0.0,
            ay: 0.0,
            theta: normalize_angle(theta),
        }
    }

    /// A state moving at `speed` along `theta` with zero acceleration.
    pub fn moving(x: f64, y: f64, speed: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            vx: speed,
            vy: 0.0,
            ax: 0.0,
            ay: 0.0,
            theta: normalize_angle(theta),
        }
    }

    /// Total speed [m/s].
    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    /// Planar position.
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Normalize an angle into (-pi, pi].
pub fn normalize_angle(theta: f64) -> f64 {
    let mut t = theta % std::f64::consts::TAU;
    if t <= -std::f64::consts::PI {
        t += std::f64::consts::TAU;
    } else if t > std::f64::consts::PI {
        t -= std::f64::consts::TAU;
    }
    t
}

#[derive(Debug, Error)]
pub enum KinematicsError {
    /// No trajectory of the requested maneuver survives the limits and the
    /// maneuver classifier.
    #[error("no feasible {maneuver:?} trajectory from speed {speed:.2} m/s")]
    EmptyActionSet { maneuver: Maneuver, speed: f64 },
    /// Gap computations require both trajectories to share the same sample
    /// times.
    #[error("mismatched trajectory sampling: {left} vs {right} samples")]
    MismatchedSampling { left: usize, right: usize },
    /// A reference path needs at least two distinct points.
    #[error("degenerate reference path (fewer than two distinct points)")]
    DegeneratePath,
}

/// Piecewise-linear reference path with arc-length lookup. Queries beyond
/// either end continue straight along the corresponding end segment.
#[derive(Debug, Clone)]
pub struct Path {
    pts: Vec<[f64; 2]>,
    cum: Vec<f64>,
}

impl Path {
    /// Build a path from waypoints; consecutive duplicates are dropped.
    pub fn new(points: &[[f64; 2]]) -> Result<Self, KinematicsError> {
        let mut pts: Vec<[f64; 2]> = Vec::with_capacity(points.len());
        for &p in points {
            if pts.last().is_none_or(|q| dist(*q, p) > 1e-9) {
                pts.push(p);
            }
        }
        if pts.len() < 2 {
            return Err(KinematicsError::DegeneratePath);
        }
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            cum.push(cum.last().unwrap() + dist(w[0], w[1]));
        }
        Ok(Self { pts, cum })
    }

    /// A unit-length straight path from `origin` along `theta`; combined with
    /// the linear extension this behaves as an infinite ray.
    pub fn ray(origin: [f64; 2], theta: f64) -> Self {
        let end = [origin[0] + theta.cos(), origin[1] + theta.sin()];
        Self::new(&[origin, end]).expect("ray endpoints are distinct")
    }

    /// Total polyline length [m].
    pub fn total_len(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn segment_of(&self, s: f64) -> usize {
        if s <= 0.0 {
            return 0;
        }
        match self
            .cum
            .binary_search_by(|c| c.partial_cmp(&s).expect("arc lengths are finite"))
        {
            Ok(i) => i.min(self.pts.len() - 2),
            Err(i) => (i - 1).min(self.pts.len() - 2),
        }
    }

    /// Point at arc length `s` (extended linearly beyond both ends).
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let i = self.segment_of(s);
        let [a, b] = [self.pts[i], self.pts[i + 1]];
        let len = dist(a, b);
        let t = (s - self.cum[i]) / len;
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    /// Tangent heading at arc length `s` [rad].
    pub fn heading_at(&self, s: f64) -> f64 {
        let i = self.segment_of(s);
        let [a, b] = [self.pts[i], self.pts[i + 1]];
        (b[1] - a[1]).atan2(b[0] - a[0])
    }

    /// Arc length of the point on the (extended) path nearest to `p`.
    /// Ties resolve to the smallest arc length.
    pub fn project(&self, p: [f64; 2]) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        let last = self.pts.len() - 2;
        for i in 0..=last {
            let [a, b] = [self.pts[i], self.pts[i + 1]];
            let len = dist(a, b);
            let ab = [b[0] - a[0], b[1] - a[1]];
            let mut t = ((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / (len * len);
            // Only the end segments extend beyond the polyline.
            if i > 0 || t > 0.0 {
                t = t.max(0.0);
            }
            if i < last || t < 1.0 {
                t = t.min(1.0);
            }
            let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
            let d = dist(p, q);
            if d < best.0 - 1e-12 {
                best = (d, self.cum[i] + t * len);
            }
        }
        best.1
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// One timestamped pose along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    /// Time since the trajectory start [s].
    pub t: f64,
    pub state: VehicleState,
}

/// A maneuver-tagged, uniformly sampled trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub maneuver: Maneuver,
    /// End speed the longitudinal profile ramps to [m/s].
    pub target_speed: f64,
    /// Samples at a fixed time step, starting at t = 0.
    pub samples: Vec<Sample>,
}

impl Trajectory {
    /// Duration covered by the samples [s].
    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Final sampled state.
    pub fn end_state(&self) -> &VehicleState {
        &self.samples.last().expect("trajectories are non-empty").state
    }

    /// Start speed [m/s].
    pub fn start_speed(&self) -> f64 {
        self.samples.first().expect("trajectories are non-empty").state.speed()
    }
}

/// Classify a speed profile: decelerating below [`WAIT_ACCEL`] on average or
/// ending slower than [`STOP_SPEED`] is a wait; anything else is a proceed.
pub fn classify_speed_profile(start_speed: f64, end_speed: f64, duration: f64) -> Maneuver {
    let mean_accel = (end_speed - start_speed) / duration;
    if mean_accel < WAIT_ACCEL || end_speed < STOP_SPEED {
        Maneuver::Wait
    } else {
        Maneuver::Proceed
    }
}

/// Sample the family of trajectories of one maneuver class from `state`
/// along `path`.
///
/// Wait targets are spaced over `[lo, v0)` and proceed targets over
/// `[v0, hi]`, where `lo`/`hi` are clamped to the speeds reachable within
/// `duration` under `limits`. A stopped vehicle waits by staying stopped and
/// proceeds by ramping up to at least [`STOP_SPEED`]. Candidates whose speed
/// profile would not classify back to `maneuver` are dropped, so the tag and
/// [`classify_speed_profile`] always agree on the result.
///
/// The caller is expected to pass a `state` within lateral tolerance of
/// `path`; the start pose is snapped onto the path.
pub fn generate_trajectories(
    state: &VehicleState,
    path: &Path,
    maneuver: Maneuver,
    n_samples: usize,
    limits: &KinematicLimits,
    dt: f64,
    duration: f64,
) -> Result<Vec<Trajectory>, KinematicsError> {
    assert!(n_samples >= 1, "need at least one target per maneuver");
    let v0 = state.speed();
    let mut targets: Vec<f64> = Vec::with_capacity(n_samples);
    match maneuver {
        Maneuver::Wait => {
            if v0 < 1e-9 {
                targets.push(0.0); // already stopped: stay stopped
            } else {
                let lo = (v0 + limits.a_min * duration).max(0.0);
                for k in 0..n_samples {
                    targets.push(lo + (v0 - lo) * k as f64 / n_samples as f64);
                }
            }
        }
        Maneuver::Proceed => {
            let hi = (v0 + limits.a_max * duration).min(limits.v_max);
            // A proceed must end at least at STOP_SPEED, or the profile
            // would classify as a wait.
            let lo = v0.max(STOP_SPEED).min(hi);
            if hi < STOP_SPEED {
                return Err(KinematicsError::EmptyActionSet { maneuver, speed: v0 });
            }
            if n_samples == 1 {
                targets.push(lo);
            } else {
                for k in 0..n_samples {
                    targets.push(lo + (hi - lo) * k as f64 / (n_samples - 1) as f64);
                }
            }
        }
    }
    targets.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let s0 = path.project(state.position());
    let steps = (duration / dt).round() as usize;
    debug_assert!(
        (steps as f64 * dt - duration).abs() < 1e-6,
        "duration must be a multiple of the sample step"
    );

    let mut out = Vec::with_capacity(targets.len());
    for target in targets {
        if classify_speed_profile(v0, target, duration) != maneuver {
            continue;
        }
        let accel = (target - v0) / duration;
        let mut samples = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let t = k as f64 * dt;
            let v = v0 + accel * t;
            let s = s0 + v0 * t + 0.5 * accel * t * t;
            let [x, y] = path.point_at(s);
            samples.push(Sample {
                t,
                state: VehicleState {
                    x,
                    y,
                    vx: v,
                    vy: 0.0,
                    ax: accel,
                    ay: 0.0,
                    theta: normalize_angle(path.heading_at(s)),
                },
            });
        }
        out.push(Trajectory {
            maneuver,
            target_speed: target,
            samples,
        });
    }
    if out.is_empty() {
        return Err(KinematicsError::EmptyActionSet { maneuver, speed: v0 });
    }
    Ok(out)
}

/// Arc length traversed by a trajectory: the sum of distances between
/// consecutive samples [m].
pub fn trajectory_length(traj: &Trajectory) -> f64 {
    traj.samples
        .windows(2)
        .map(|w| dist(w[0].state.position(), w[1].state.position()))
        .sum()
}

/// Minimum Euclidean distance between two trajectories over their shared
/// sample times [m].
pub fn min_gap(a: &Trajectory, b: &Trajectory) -> Result<f64, KinematicsError> {
    if a.samples.len() != b.samples.len()
        || a.samples
            .iter()
            .zip(&b.samples)
            .any(|(p, q)| (p.t - q.t).abs() > 1e-9)
    {
        return Err(KinematicsError::MismatchedSampling {
            left: a.samples.len(),
            right: b.samples.len(),
        });
    }
    Ok(a.samples
        .iter()
        .zip(&b.samples)
        .map(|(p, q)| dist(p.state.position(), q.state.position()))
        .fold(f64::INFINITY, f64::min))
}

/// Extend a trajectory by `extra` seconds at its final speed and heading.
/// Truncating the result back to the original sample count recovers the
/// input exactly.
pub fn extend_constant(traj: &Trajectory, extra: f64, dt: f64) -> Trajectory {
    assert!(extra > 0.0, "extension must be positive");
    let mut out = traj.clone();
    let last = *traj.samples.last().expect("trajectories are non-empty");
    let speed = last.state.speed();
    let (dir_x, dir_y) = (last.state.theta.cos(), last.state.theta.sin());
    let steps = (extra / dt).round() as usize;
    for k in 1..=steps {
        let t = k as f64 * dt;
        out.samples.push(Sample {
            t: last.t + t,
            state: VehicleState {
                x: last.state.x + speed * t * dir_x,
                y: last.state.y + speed * t * dir_y,
                vx: last.state.vx,
                vy: last.state.vy,
                ax: 0.0,
                ay: 0.0,
                theta: last.state.theta,
            },
        });
    }
    out
}

/// Check sampled speeds, accelerations, and jerks against `limits` using
/// central finite differences of the sampled positions.
pub fn respects_limits(traj: &Trajectory, limits: &KinematicLimits) -> bool {
    let n = traj.samples.len();
    if n < 3 {
        return true;
    }
    let dt = traj.samples[1].t - traj.samples[0].t;
    let pos: Vec<[f64; 2]> = traj.samples.iter().map(|s| s.state.position()).collect();
    let speed: Vec<f64> = (1..n - 1)
        .map(|k| dist(pos[k + 1], pos[k - 1]) / (2.0 * dt))
        .collect();
    let tol = 1e-6;
    if speed.iter().any(|&v| v > limits.v_max + tol) {
        return false;
    }
    let accel: Vec<f64> = speed.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    if accel
        .iter()
        .any(|&a| a < limits.a_min - tol || a > limits.a_max + tol)
    {
        return false;
    }
    accel
        .windows(2)
        .all(|w| ((w[1] - w[0]) / dt).abs() <= limits.jerk_max + tol)
}
