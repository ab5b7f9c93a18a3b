//! Privacy-aware mechanism construction and auditing.
//!
//! The crate builds exact output distributions for randomized selection
//! mechanisms (the exponential mechanism, its uniform mixture, and a filtered
//! poll), models agent populations with privacy valuations, and audits the
//! resulting games: differential privacy on small instances by exhaustive
//! neighbor enumeration, truthtelling dominance by exhaustive deviation scans,
//! and accuracy against closed-form bounds (exactly where enumeration is
//! feasible, by seeded Monte Carlo otherwise).

pub mod admissibility;
pub mod config;
pub mod domain;
pub mod game;
pub mod instances;
pub mod mechanisms;
pub mod privacy;
pub mod runner;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("instance too large: {size} cases exceed enumeration guard {guard}")]
    InstanceTooLarge { size: u128, guard: u128 },
    #[error("gap condition violated: types {a} and {b} have no separating alternative")]
    GapViolation { a: usize, b: usize },
    #[error("inputs are not neighboring (Hamming distance {distance})")]
    NotNeighboring { distance: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
