//! Game-theoretic models of interactive driving.
//!
//! The crate builds finite dynamic games from vehicle kinematics and solves
//! them with a family of bounded-rational solution concepts:
//!
//! * [`kinematics`] — maneuver-tagged trajectory sampling along reference
//!   paths, gap/length measurements, constant-velocity extension.
//! * [`game`] — game configuration, step utilities (safety / progress),
//!   lexicographic aggregation, discounted values, and the stage-game tree.
//! * [`automata`] — non-strategic accommodating / non-accommodating driver
//!   automata and the maxmax baseline.
//! * [`strategic`] — belief intervals over automaton types, the level-1
//!   best response, subgame-perfect equilibria and their satisficing /
//!   maneuver-based relaxations, and the quantal level-k model.
//! * [`robust`] — consistency filtering over an augmented type space and the
//!   worst-case (over types) best response.
//! * [`oracle`] — brute-force re-derivations of every solution concept used
//!   for differential testing.
//! * [`eval`] — trajectory record ingestion, model/data matching, scenario
//!   simulation, and sweep metrics.

pub mod automata;
pub mod eval;
pub mod game;
pub mod kinematics;
pub mod oracle;
pub mod robust;
pub mod strategic;

pub use game::{GameConfig, GameError, GameTree};
pub use kinematics::{KinematicLimits, Maneuver, Trajectory, VehicleState};
