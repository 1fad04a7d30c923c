//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Argument fell outside the admissible interval of the fixed-point map.
    /// Carries the left boundary `x_star` of that interval.
    #[error("x = {x} is outside the admissible interval (x* = {x_star})")]
    OutsideAdmissible { x: f64, x_star: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// Explosion guard: the simulation produced more events than the cap.
    #[error("event cap exceeded: {count} events by t = {time:.6} (cap {cap})")]
    EventCapExceeded { count: u64, cap: u64, time: f64 },

    #[error("dominating rate construction failed for kernel {kernel}: {reason}")]
    DominatingRate { kernel: String, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Two events at the same instant; probability zero under the model.
    #[error("simultaneous events at t = {0}")]
    SimultaneousEvents(f64),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
