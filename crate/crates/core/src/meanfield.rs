//! Deterministic solvers for the large-population limit of the intensity
//! system.
//!
//! In the limit, the population intensities solve the causal convolution
//! system
//!
//! ```text
//! lambda_A(t) = (mu_A + a * int h1(t-u) lambda_A(u) du) * phi_ba((1-a) * int h2(t-u) lambda_B(u) du)
//! lambda_B(t) =  mu_B + (1-a) * int h3(t-u) lambda_B(u) du + phi_ab(a * int h4(t-u) lambda_A(u) du)
//! ```
//!
//! with `a = alpha`. [`solve_volterra`] steps the system forward on a uniform
//! grid with trapezoidal quadrature (each step solves the implicit endpoint by
//! a short fixed-point correction); all convolutions are maintained in O(1)
//! per step. When every kernel is exponential the system collapses to a
//! four-dimensional ODE, integrated by [`solve_ode_reduction`] with the
//! classical fourth-order method.
//!
//! Supercritical parameterizations blow up in finite time; that is reported
//! as a [`Divergence`] value, not an error.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, ModelSpec};

/// Values above this are treated as numerically divergent.
const BLOWUP: f64 = 1e12;

/// Default relative-amplitude threshold for oscillation detection.
pub const OSC_THRESHOLD_DEFAULT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Volterra,
    OdeReduction,
}

/// Discretized limit intensities and their cumulative integrals on a uniform
/// grid `0, dt, 2 dt, ..`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanFieldTrajectory {
    pub dt: f64,
    pub lambda_a: Vec<f64>,
    pub lambda_b: Vec<f64>,
    pub m_a: Vec<f64>,
    pub m_b: Vec<f64>,
    pub method: Method,
}

/// Blow-up report for supercritical regimes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Divergence {
    /// First grid time at which an intensity left the finite range.
    pub time: f64,
    pub step: usize,
}

/// A solved trajectory together with an optional blow-up report. When
/// divergence occurs the trajectory is truncated at the last finite step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanFieldSolution {
    pub trajectory: MeanFieldTrajectory,
    pub divergence: Option<Divergence>,
}

impl MeanFieldTrajectory {
    pub fn len(&self) -> usize {
        self.lambda_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda_a.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    fn interp(&self, values: &[f64], t: f64) -> f64 {
        let n = values.len();
        if n == 0 {
            return 0.0;
        }
        let pos = (t / self.dt).max(0.0);
        let j = (pos.floor() as usize).min(n - 1);
        if j + 1 >= n {
            return values[n - 1];
        }
        let frac = pos - j as f64;
        values[j] + frac * (values[j + 1] - values[j])
    }

    /// Linear interpolation of `lambda_A` at time `t` (clamped to the grid).
    pub fn lambda_a_at(&self, t: f64) -> f64 {
        self.interp(&self.lambda_a, t)
    }

    /// Linear interpolation of `lambda_B` at time `t` (clamped to the grid).
    pub fn lambda_b_at(&self, t: f64) -> f64 {
        self.interp(&self.lambda_b, t)
    }

    pub fn m_a_at(&self, t: f64) -> f64 {
        self.interp(&self.m_a, t)
    }

    pub fn m_b_at(&self, t: f64) -> f64 {
        self.interp(&self.m_b, t)
    }

    pub fn max_lambda_a(&self) -> f64 {
        self.lambda_a.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_lambda_b(&self) -> f64 {
        self.lambda_b.iter().copied().fold(0.0, f64::max)
    }

    /// Plot-ready CSV: `t,lambda_A,lambda_B,m_A,m_B` with 12 significant
    /// digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,lambda_A,lambda_B,m_A,m_B")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{:.11e},{:.11e},{:.11e},{:.11e},{:.11e}",
                self.time(k),
                self.lambda_a[k],
                self.lambda_b[k],
                self.m_a[k],
                self.m_b[k]
            )?;
        }
        Ok(())
    }
}

/// Running convolution `int_0^t h(t-u) lambda(u) du` under trapezoidal
/// quadrature, advanced in O(1) per step.
///
/// `Indicator` needs no state: the convolution is a sliding-window integral
/// read off the cumulative integral of the interpolated intensity, with the
/// cell containing the window edge split exactly. `Exponential` keeps the
/// decayed node sum. `Erlang` keeps full-weight component sums for each power
/// and applies endpoint corrections on evaluation.
#[derive(Debug, Clone)]
enum Conv {
    Zero,
    Indicator {
        theta: f64,
    },
    Exponential {
        theta: f64,
        state: f64,
    },
    Erlang {
        theta: f64,
        n: u32,
        state: Vec<f64>,
        shifted: Vec<f64>,
    },
}

/// Per-population view of the solver history during one step.
struct StepCtx<'a> {
    /// Intensities at grid nodes `0..k`.
    lam: &'a [f64],
    /// Cumulative trapezoid integrals at grid nodes `0..k`.
    cum: &'a [f64],
    /// Index of the node being computed.
    k: usize,
    dt: f64,
}

impl Conv {
    fn new(kernel: &KernelSpec, lam0: f64, dt: f64) -> Conv {
        match *kernel {
            KernelSpec::Zero => Conv::Zero,
            KernelSpec::Indicator { theta } => Conv::Indicator { theta },
            KernelSpec::Exponential { theta } => Conv::Exponential { theta, state: 0.0 },
            KernelSpec::Erlang { theta, n } => {
                let mut state = vec![0.0; n as usize + 1];
                state[0] = dt * lam0;
                Conv::Erlang { theta, n, state, shifted: vec![0.0; n as usize + 1] }
            }
        }
    }

    /// Shift the node sums from `t_{k-1}` to `t_k`; `lam_prev` is the value at
    /// node `k-1`.
    fn begin_step(&mut self, dt: f64, lam_prev: f64) {
        match self {
            Conv::Zero | Conv::Indicator { .. } => {}
            Conv::Exponential { theta, state } => {
                let d = (-dt / *theta).exp();
                // decay old sum; node k-1 moves from end weight dt/2 to full dt
                *state = d * (*state) + 0.5 * dt * d * lam_prev;
            }
            Conv::Erlang { theta, n, state, shifted } => {
                let d = (-dt / *theta).exp();
                let _ = n;
                for (i, out) in shifted.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    let mut w = 1.0; // dt^(i-r) / (i-r)! for r = i down to 0
                    for r in (0..=i).rev() {
                        acc += w * state[r];
                        w *= dt / (i - r + 1) as f64;
                    }
                    *out = d * acc;
                }
            }
        }
    }

    /// Convolution value at `t_k` given a trial value for the unknown node.
    fn eval(&self, ctx: &StepCtx, trial: f64) -> f64 {
        let dt = ctx.dt;
        let k = ctx.k;
        match self {
            Conv::Zero => 0.0,
            Conv::Indicator { theta } => {
                let t_k = k as f64 * dt;
                let cum_k = ctx.cum[k - 1] + 0.5 * dt * (ctx.lam[k - 1] + trial);
                let lo = t_k - theta;
                if lo <= 0.0 {
                    return cum_k;
                }
                // cumulative integral of the interpolant at the window edge
                let j = ((lo / dt).floor() as usize).min(k - 1);
                let frac = lo - j as f64 * dt;
                let (lam_j, lam_j1) =
                    if j + 1 < k { (ctx.lam[j], ctx.lam[j + 1]) } else { (ctx.lam[j], trial) };
                let cum_j = if j < k { ctx.cum[j] } else { cum_k };
                let cum_lo = cum_j + frac * lam_j + frac * frac / (2.0 * dt) * (lam_j1 - lam_j);
                cum_k - cum_lo
            }
            Conv::Exponential { state, .. } => state + 0.5 * dt * trial,
            Conv::Erlang { theta, n, shifted, .. } => {
                let m = *n as usize;
                let t_k = k as f64 * dt;
                let h0 = if *n == 0 { 1.0 } else { 0.0 };
                let h_tk = KernelSpec::Erlang { theta: *theta, n: *n }.value(t_k);
                shifted[m] + 0.5 * dt * h0 * trial - 0.5 * dt * h_tk * ctx.lam[0]
            }
        }
    }

    /// Incorporate the accepted node `k` value.
    fn end_step(&mut self, dt: f64, lam_k: f64) {
        match self {
            Conv::Zero | Conv::Indicator { .. } => {}
            Conv::Exponential { state, .. } => *state += 0.5 * dt * lam_k,
            Conv::Erlang { n, state, shifted, .. } => {
                state.copy_from_slice(shifted);
                state[0] += dt * lam_k;
                let _ = n;
            }
        }
    }
}

fn grid_steps(horizon: f64, dt: f64) -> Result<usize> {
    if dt.is_nan() || dt <= 0.0 || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if horizon.is_nan() || horizon <= 0.0 || !horizon.is_finite() {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    let ratio = horizon / dt;
    if ratio > 1e8 {
        return Err(Error::InvalidParameter(format!(
            "horizon/dt = {ratio:.3e} exceeds the grid cap of 1e8"
        )));
    }
    Ok(((ratio - 1e-9).ceil() as usize).max(1))
}

/// Forward quadrature solver for the limit intensity system.
pub fn solve_volterra(model: &ModelSpec, horizon: f64, dt: f64) -> Result<MeanFieldSolution> {
    model.validate()?;
    let steps = grid_steps(horizon, dt)?;
    let alpha = model.alpha;

    let lam_a0 = model.mu_a * model.phi_ba.value(0.0);
    let lam_b0 = model.mu_b;
    let mut lam_a = Vec::with_capacity(steps + 1);
    let mut lam_b = Vec::with_capacity(steps + 1);
    let mut cum_a = Vec::with_capacity(steps + 1);
    let mut cum_b = Vec::with_capacity(steps + 1);
    lam_a.push(lam_a0);
    lam_b.push(lam_b0);
    cum_a.push(0.0);
    cum_b.push(0.0);

    let mut c1 = Conv::new(&model.h1, lam_a0, dt);
    let mut c2 = Conv::new(&model.h2, lam_b0, dt);
    let mut c3 = Conv::new(&model.h3, lam_b0, dt);
    let mut c4 = Conv::new(&model.h4, lam_a0, dt);

    let mut divergence = None;
    for k in 1..=steps {
        c1.begin_step(dt, lam_a[k - 1]);
        c2.begin_step(dt, lam_b[k - 1]);
        c3.begin_step(dt, lam_b[k - 1]);
        c4.begin_step(dt, lam_a[k - 1]);

        let ctx_a = StepCtx { lam: &lam_a, cum: &cum_a, k, dt };
        let ctx_b = StepCtx { lam: &lam_b, cum: &cum_b, k, dt };

        // implicit trapezoid endpoint solved by fixed-point correction
        let mut trial_a = lam_a[k - 1];
        let mut trial_b = lam_b[k - 1];
        let mut next_a = trial_a;
        let mut next_b = trial_b;
        for _ in 0..8 {
            let x1 = alpha * c1.eval(&ctx_a, trial_a);
            let x2 = (1.0 - alpha) * c2.eval(&ctx_b, trial_b);
            let x3 = (1.0 - alpha) * c3.eval(&ctx_b, trial_b);
            let x4 = alpha * c4.eval(&ctx_a, trial_a);
            next_a = model.lambda_a(x1, x2);
            next_b = model.lambda_b(x3, x4);
            if !next_a.is_finite() || !next_b.is_finite() {
                break;
            }
            let moved = (next_a - trial_a).abs() + (next_b - trial_b).abs();
            trial_a = next_a;
            trial_b = next_b;
            if moved <= 1e-13 * (1.0 + next_a.abs() + next_b.abs()) {
                break;
            }
        }

        if !next_a.is_finite() || !next_b.is_finite() || next_a > BLOWUP || next_b > BLOWUP {
            divergence = Some(Divergence { time: k as f64 * dt, step: k });
            break;
        }

        c1.end_step(dt, next_a);
        c2.end_step(dt, next_b);
        c3.end_step(dt, next_b);
        c4.end_step(dt, next_a);
        cum_a.push(cum_a[k - 1] + 0.5 * dt * (lam_a[k - 1] + next_a));
        cum_b.push(cum_b[k - 1] + 0.5 * dt * (lam_b[k - 1] + next_b));
        lam_a.push(next_a);
        lam_b.push(next_b);
    }

    Ok(MeanFieldSolution {
        trajectory: MeanFieldTrajectory {
            dt,
            lambda_a: lam_a,
            lambda_b: lam_b,
            m_a: cum_a,
            m_b: cum_b,
            method: Method::Volterra,
        },
        divergence,
    })
}

/// Exponentially weighted activities; the ODE state of the reduction.
/// All components start at zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OdeState {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub x4: f64,
}

impl OdeState {
    fn as_array(self) -> [f64; 4] {
        [self.x1, self.x2, self.x3, self.x4]
    }

    fn from_array(a: [f64; 4]) -> OdeState {
        OdeState { x1: a[0], x2: a[1], x3: a[2], x4: a[3] }
    }
}

fn inv_theta(kernel: &KernelSpec, which: &str) -> Result<f64> {
    match *kernel {
        KernelSpec::Exponential { theta } => Ok(1.0 / theta),
        // a zero kernel contributes a frozen zero activity
        KernelSpec::Zero => Ok(0.0),
        _ => Err(Error::Unsupported(format!(
            "ode reduction requires exponential (or zero) kernels, {which} is {}",
            kernel.family_name()
        ))),
    }
}

/// ODE fast path for all-exponential kernels.
///
/// With `h_i(u) = exp(-u/theta_i)` the weighted activities
/// `X_i = w_i int h_i(t-s) lambda(s) ds` solve a closed four-dimensional
/// system; intensities are reconstructed as
/// `lambda_A = (mu_A + X1) phi_ba(X2)` and `lambda_B = mu_B + X3 + phi_ab(X4)`.
pub fn solve_ode_reduction(model: &ModelSpec, horizon: f64, dt: f64) -> Result<MeanFieldSolution> {
    model.validate()?;
    let steps = grid_steps(horizon, dt)?;
    let alpha = model.alpha;
    let g1 = inv_theta(&model.h1, "h1")?;
    let g2 = inv_theta(&model.h2, "h2")?;
    let g3 = inv_theta(&model.h3, "h3")?;
    let g4 = inv_theta(&model.h4, "h4")?;
    let zero1 = matches!(model.h1, KernelSpec::Zero);
    let zero2 = matches!(model.h2, KernelSpec::Zero);
    let zero3 = matches!(model.h3, KernelSpec::Zero);
    let zero4 = matches!(model.h4, KernelSpec::Zero);

    let deriv = |s: [f64; 4]| -> [f64; 4] {
        let la = model.lambda_a(s[0], s[1]);
        let lb = model.lambda_b(s[2], s[3]);
        [
            if zero1 { 0.0 } else { -g1 * s[0] + alpha * la },
            if zero2 { 0.0 } else { -g2 * s[1] + (1.0 - alpha) * lb },
            if zero3 { 0.0 } else { -g3 * s[2] + (1.0 - alpha) * lb },
            if zero4 { 0.0 } else { -g4 * s[3] + alpha * la },
        ]
    };

    let mut state = OdeState::default();
    let mut lam_a = vec![model.mu_a * model.phi_ba.value(0.0)];
    let mut lam_b = vec![model.mu_b];
    let mut m_a = vec![0.0];
    let mut m_b = vec![0.0];
    let mut divergence = None;

    for k in 1..=steps {
        let x = state.as_array();
        let k1 = deriv(x);
        let k2 = deriv(add(x, scale(k1, 0.5 * dt)));
        let k3 = deriv(add(x, scale(k2, 0.5 * dt)));
        let k4 = deriv(add(x, scale(k3, dt)));
        let mut x = x;
        for i in 0..4 {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            x[i] = x[i].max(0.0);
        }
        state = OdeState::from_array(x);
        let la = model.lambda_a(state.x1, state.x2);
        let lb = model.lambda_b(state.x3, state.x4);
        if !la.is_finite() || !lb.is_finite() || la > BLOWUP || lb > BLOWUP {
            divergence = Some(Divergence { time: k as f64 * dt, step: k });
            break;
        }
        m_a.push(m_a[k - 1] + 0.5 * dt * (lam_a[k - 1] + la));
        m_b.push(m_b[k - 1] + 0.5 * dt * (lam_b[k - 1] + lb));
        lam_a.push(la);
        lam_b.push(lb);
    }

    Ok(MeanFieldSolution {
        trajectory: MeanFieldTrajectory {
            dt,
            lambda_a: lam_a,
            lambda_b: lam_b,
            m_a,
            m_b,
            method: Method::OdeReduction,
        },
        divergence,
    })
}

#[inline]
fn add(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

#[inline]
fn scale(a: [f64; 4], s: f64) -> [f64; 4] {
    [a[0] * s, a[1] * s, a[2] * s, a[3] * s]
}

/// Limit-cycle summary of a post-burn-in trajectory window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OscillationReport {
    pub oscillating: bool,
    pub lower_a: f64,
    pub upper_a: f64,
    pub lower_b: f64,
    pub upper_b: f64,
    /// Mean spacing of detected peaks of `lambda_B`, when at least two exist.
    pub period: Option<f64>,
    pub peak_count: usize,
    /// Relative amplitude of `lambda_B` on the window.
    pub relative_amplitude: f64,
}

/// Classifies the tail of a trajectory as oscillating or settled.
///
/// Oscillation requires both a relative amplitude of `lambda_B` above
/// `threshold` on the post-burn-in window and at least three detected peaks.
/// Peaks below a quarter of the window amplitude are ignored as ripple.
pub fn detect_oscillation(
    traj: &MeanFieldTrajectory,
    burn_in: f64,
    threshold: f64,
) -> Result<OscillationReport> {
    if !(0.0..=0.9).contains(&burn_in) {
        return Err(Error::InvalidParameter(format!(
            "burn_in must lie in [0, 0.9], got {burn_in}"
        )));
    }
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "oscillation threshold must be positive, got {threshold}"
        )));
    }
    let n = traj.len();
    let start = ((n as f64) * burn_in).ceil() as usize;
    if n.saturating_sub(start) < 10 {
        return Err(Error::InvalidParameter(format!(
            "post-burn-in window has {} grid points, need at least 10",
            n.saturating_sub(start)
        )));
    }
    let wa = &traj.lambda_a[start..];
    let wb = &traj.lambda_b[start..];
    if wb.iter().chain(wa.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("trajectory contains non-finite values".into()));
    }

    let (lower_a, upper_a) = min_max(wa);
    let (lower_b, upper_b) = min_max(wb);
    let amplitude = upper_b - lower_b;
    let relative_amplitude = amplitude / upper_b.max(1e-12);

    // below rounding scale the trajectory is flat; don't count noise ripples
    let peaks = if amplitude > 1e-9 * upper_b.max(1e-12) {
        peak_indices(wb, lower_b + 0.25 * amplitude)
    } else {
        Vec::new()
    };
    let peak_count = peaks.len();
    let period = if peak_count >= 2 {
        let spacings: f64 = peaks.windows(2).map(|w| (w[1] - w[0]) as f64).sum();
        Some(spacings / (peak_count - 1) as f64 * traj.dt)
    } else {
        None
    };

    Ok(OscillationReport {
        oscillating: relative_amplitude > threshold && peak_count >= 3,
        lower_a,
        upper_a,
        lower_b,
        upper_b,
        period,
        peak_count,
        relative_amplitude,
    })
}

fn min_max(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Indices of local maxima above `floor`; plateaus count once, at their
/// midpoint.
fn peak_indices(values: &[f64], floor: f64) -> Vec<usize> {
    let n = values.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if values[i] > values[i - 1] {
            // scan over a possible plateau
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[j] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[j] && values[i] >= floor {
                peaks.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}
