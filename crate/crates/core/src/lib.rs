//! Simulation and numerical analysis for two-population Hawkes processes where
//! an inhibitory population multiplicatively damps an excitatory one.
//!
//! The toolkit covers four layers:
//!
//! - [`kernels`]: memory kernels, inhibition/feedback nonlinearities and the
//!   model parameterization, with exact L1 masses.
//! - [`mod@simulate`]: exact event-driven simulation of the N-particle system
//!   by thinning, plus the coupled particle/limit construction used for
//!   finite-size scaling experiments.
//! - [`meanfield`]: deterministic solvers for the limit intensity system (a
//!   coupled Volterra system; an ODE reduction when every kernel is
//!   exponential) and limit-cycle detection.
//! - [`longtime`] and [`stats`]: closed-form long-time regime classification
//!   via the fixed-point map, and the intensity estimators / inhibition test
//!   built on top of the simulator.

pub mod error;
pub mod kernels;
pub mod longtime;
pub mod meanfield;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use kernels::{
    eval_inhibition, eval_kernel, FeedbackSpec, InhibitionSpec, Kappas, KernelSpec, ModelSpec,
};
pub use meanfield::{
    detect_oscillation, solve_ode_reduction, solve_volterra, MeanFieldSolution,
    MeanFieldTrajectory, OscillationReport,
};
pub use simulate::{
    coupled_simulate, empirical_intensity, simulate, CoupledLog, Event, EventLog, Population,
    PopulationConfig, SimOptions,
};

/// Deterministic seed derivation for replica/stream schedules (splitmix64).
pub fn mix_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
