//! Estimators and the inhibition test, plus the finite-size scaling
//! experiment for the particle/limit coupling.
//!
//! The per-neuron rate estimator is `Z_T / T`. For two independent
//! recordings (control and toxin) with estimates `l_C`, `l_T`, the one-sided
//! test rejects "no inhibition" at asymptotic level `a` when
//!
//! ```text
//! l_C - l_T >= s_a,   s_a = sqrt((l_C + l_T) / T) * q(1 - a)
//! ```
//!
//! with `q` the standard normal quantile. The scaling experiment fits the
//! log-log decay of the mean coupling discrepancy against the population
//! size; the coupling construction predicts slope -1/2.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::kernels::ModelSpec;
use crate::meanfield::solve_volterra;
use crate::simulate::{
    coupled_simulate_with_options, CoupledOptions, EventLog, PopulationConfig,
};

/// `T/N` above this triggers the asymptotics warning on test results.
pub const T_OVER_N_WARN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    RejectH0,
    AcceptH0,
}

/// Outcome of the inhibition test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub ell_hat_control: f64,
    pub ell_hat_toxin: f64,
    /// Estimate from an optional wash recording, reported descriptively only.
    pub ell_hat_wash: Option<f64>,
    /// `l_C - l_T`.
    pub statistic: f64,
    /// Rejection threshold `s_a`.
    pub threshold: f64,
    pub level: f64,
    pub decision: Decision,
    pub horizon: f64,
    pub n: u32,
    /// Neurons averaged per estimate. The threshold is per-neuron and is not
    /// rescaled for larger subsets; `subset_heuristic` marks that case.
    pub subset_size: u32,
    pub subset_heuristic: bool,
    /// Set when `T/N` is too large for the asymptotics to be trustworthy.
    pub t_over_n_warning: bool,
}

/// Per-neuron rate estimate `Z_T / T`.
pub fn estimate_ell(log: &EventLog, neuron: u32) -> Result<f64> {
    if neuron >= log.pop.n {
        return Err(Error::InvalidParameter(format!(
            "neuron {neuron} out of range (n = {})",
            log.pop.n
        )));
    }
    Ok(log.count(neuron) as f64 / log.horizon)
}

fn subset_estimate(log: &EventLog, subset: u32) -> Result<f64> {
    if subset == 0 || subset > log.pop.n_a {
        return Err(Error::InvalidParameter(format!(
            "subset size {subset} invalid for population A of size {}",
            log.pop.n_a
        )));
    }
    let mut acc = 0.0;
    for i in 0..subset {
        acc += estimate_ell(log, i)?;
    }
    Ok(acc / subset as f64)
}

/// One-sided test of inhibition at asymptotic level `level`, using one A
/// neuron per recording.
pub fn inhibition_test(control: &EventLog, toxin: &EventLog, level: f64) -> Result<TestResult> {
    inhibition_test_with(control, toxin, None, level, 1)
}

/// Full-control variant: optional wash recording and a configurable neuron
/// subset per estimate.
pub fn inhibition_test_with(
    control: &EventLog,
    toxin: &EventLog,
    wash: Option<&EventLog>,
    level: f64,
    subset: u32,
) -> Result<TestResult> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level must lie in (0, 1), got {level}")));
    }
    if (control.horizon - toxin.horizon).abs() > 1e-9 * control.horizon.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "mismatched horizons: control T = {}, toxin T = {}",
            control.horizon, toxin.horizon
        )));
    }
    let horizon = control.horizon;
    let ell_c = subset_estimate(control, subset)?;
    let ell_t = subset_estimate(toxin, subset)?;
    let ell_w = wash.map(|w| subset_estimate(w, subset)).transpose()?;
    let statistic = ell_c - ell_t;
    let threshold = ((ell_c + ell_t) / horizon).sqrt() * normal_quantile(1.0 - level);
    let decision = if statistic >= threshold { Decision::RejectH0 } else { Decision::AcceptH0 };
    let n = control.pop.n;
    Ok(TestResult {
        ell_hat_control: ell_c,
        ell_hat_toxin: ell_t,
        ell_hat_wash: ell_w,
        statistic,
        threshold,
        level,
        decision,
        horizon,
        n,
        subset_size: subset,
        subset_heuristic: subset > 1,
        t_over_n_warning: horizon / n as f64 > T_OVER_N_WARN,
    })
}

impl TestResult {
    /// Recomputes the threshold from the stored fields; must reproduce the
    /// stored value exactly.
    pub fn recompute_threshold(&self) -> f64 {
        ((self.ell_hat_control + self.ell_hat_toxin) / self.horizon).sqrt()
            * normal_quantile(1.0 - self.level)
    }
}

/// Standard normal quantile by rational approximation (relative error below
/// 1e-9 across (0, 1)).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Outcome of the fluctuation-regime condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CltCondition {
    pub satisfied: bool,
    /// `(1 + k1 mu_A / (1 - k1)) (k1 + k2)`, when `k1 < 1`.
    pub term_a: Option<f64>,
    /// `k3 + k4`.
    pub term_b: f64,
    pub reason: Option<String>,
}

/// Checks `max{(1 + k1 mu_A/(1-k1))(k1 + k2), k3 + k4} < 1`.
pub fn clt_condition(model: &ModelSpec) -> CltCondition {
    let k = model.kappas();
    let term_b = k.k3 + k.k4;
    if k.k1 >= 1.0 {
        return CltCondition {
            satisfied: false,
            term_a: None,
            term_b,
            reason: Some(format!("k1 = {} is not below 1", k.k1)),
        };
    }
    let term_a = (1.0 + k.k1 * model.mu_a / (1.0 - k.k1)) * (k.k1 + k.k2);
    let satisfied = term_a.max(term_b) < 1.0;
    CltCondition {
        satisfied,
        term_a: Some(term_a),
        term_b,
        reason: if satisfied {
            None
        } else {
            Some(format!("max({term_a:.6}, {term_b:.6}) >= 1"))
        },
    }
}

/// One raw scaling observation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChaosSample {
    pub n: u32,
    pub replica: u32,
    pub discrepancy: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChaosPoint {
    pub n: u32,
    pub mean_sup_discrepancy: f64,
    pub std_error: f64,
    pub replicas_used: u32,
}

/// Finite-size scaling of the coupling discrepancy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChaosScalingResult {
    pub points: Vec<ChaosPoint>,
    pub samples: Vec<ChaosSample>,
    /// Fitted log-log slope; `None` when the fit is degenerate.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub degenerate: bool,
    /// Runs excluded because they hit the event cap.
    pub excluded: u64,
}

impl ChaosScalingResult {
    /// Raw data as CSV `N,replica,discrepancy`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "N,replica,discrepancy")?;
        for s in &self.samples {
            writeln!(w, "{},{},{:.6e}", s.n, s.replica, s.discrepancy)?;
        }
        Ok(())
    }
}

/// Runs coupled simulations over `sizes x replicas` and fits
/// `log(mean discrepancy)` against `log N`. Replicas run in parallel with a
/// deterministic seed schedule.
pub fn chaos_experiment(
    model: &ModelSpec,
    sizes: &[u32],
    horizon: f64,
    dt: f64,
    replicas: u32,
    seed: u64,
) -> Result<ChaosScalingResult> {
    if sizes.len() < 3 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "need at least 3 strictly increasing population sizes".into(),
        ));
    }
    if replicas < 5 {
        return Err(Error::InvalidParameter(format!(
            "need at least 5 replicas, got {replicas}"
        )));
    }
    let sol = solve_volterra(model, horizon, dt)?;
    if let Some(div) = sol.divergence {
        return Err(Error::Numerical(format!(
            "limit trajectory diverges at t = {:.6}; the scaling experiment needs a subcritical model",
            div.time
        )));
    }
    let traj = &sol.trajectory;
    let opts = CoupledOptions { event_cap: 100_000_000, dt_max: dt };

    let tasks: Vec<(usize, u32)> = (0..sizes.len())
        .flat_map(|i| (0..replicas).map(move |r| (i, r)))
        .collect();
    let outcomes: Vec<(usize, u32, Result<f64>)> = tasks
        .into_par_iter()
        .map(|(i, r)| {
            let run = PopulationConfig::new(sizes[i], model.alpha).and_then(|pop| {
                let s = crate::mix_seed(seed, ((i as u64) << 32) | r as u64);
                coupled_simulate_with_options(model, &pop, horizon, s, traj, &opts)
                    .map(|c| c.mean_sup_discrepancy())
            });
            (i, r, run)
        })
        .collect();

    let mut samples = Vec::new();
    let mut per_size: Vec<Vec<f64>> = vec![Vec::new(); sizes.len()];
    let mut excluded = 0u64;
    for (i, r, outcome) in outcomes {
        match outcome {
            Ok(d) => {
                samples.push(ChaosSample { n: sizes[i], replica: r, discrepancy: d });
                per_size[i].push(d);
            }
            Err(Error::EventCapExceeded { .. }) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    samples.sort_by_key(|s| (s.n, s.replica));

    let mut points = Vec::new();
    for (i, vals) in per_size.iter().enumerate() {
        if vals.is_empty() {
            continue;
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = if vals.len() > 1 {
            vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64
        } else {
            0.0
        };
        points.push(ChaosPoint {
            n: sizes[i],
            mean_sup_discrepancy: m,
            std_error: (var / vals.len() as f64).sqrt(),
            replicas_used: vals.len() as u32,
        });
    }

    let fit: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.mean_sup_discrepancy > 0.0)
        .map(|p| ((p.n as f64).ln(), p.mean_sup_discrepancy.ln()))
        .collect();
    let degenerate = fit.len() < 2;
    let (slope, intercept) = if degenerate {
        (None, None)
    } else {
        let n = fit.len() as f64;
        let sx: f64 = fit.iter().map(|p| p.0).sum();
        let sy: f64 = fit.iter().map(|p| p.1).sum();
        let sxx: f64 = fit.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = fit.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        (Some(slope), Some((sy - slope * sx) / n))
    };

    Ok(ChaosScalingResult { points, samples, slope, intercept, degenerate, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{FeedbackSpec, InhibitionSpec, KernelSpec};
    use crate::simulate::simulate;
    use proptest::prelude::*;

    fn poisson_model(mu_a: f64) -> ModelSpec {
        ModelSpec {
            alpha: 0.8,
            mu_a,
            mu_b: 0.0,
            h1: KernelSpec::Zero,
            h2: KernelSpec::Zero,
            h3: KernelSpec::Zero,
            h4: KernelSpec::Zero,
            phi_ba: InhibitionSpec::One,
            phi_ab: FeedbackSpec::Zero,
        }
    }

    #[test]
    fn normal_quantile_reference_values() {
        let cases = [
            (0.5, 0.0),
            (0.95, 1.6448536269514722),
            (0.975, 1.959963984540054),
            (0.99, 2.3263478740408408),
            (0.01, -2.3263478740408408),
            (0.999999, 4.753424308822899),
        ];
        for (p, want) in cases {
            let got = normal_quantile(p);
            assert!(
                (got - want).abs() <= 1e-8 * (1.0 + want.abs()),
                "q({p}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn estimate_ell_cases() {
        let m = poisson_model(2.0);
        let pop = PopulationConfig::new(5, 0.8).unwrap();
        let mut log = simulate(&m, &pop, 10.0, 3).unwrap();
        log.events.clear();
        assert_eq!(estimate_ell(&log, 0).unwrap(), 0.0);
        assert!(estimate_ell(&log, 99).is_err());

        let long = simulate(&m, &pop, 1000.0, 3).unwrap();
        let hat = estimate_ell(&long, 0).unwrap();
        let band = 3.0 * (2.0f64 / 1000.0).sqrt();
        assert!((hat - 2.0).abs() < band, "ell_hat = {hat}");
    }

    #[test]
    fn estimate_ell_long_run_near_limit() {
        // inhibition-quenched configuration: the per-neuron rate estimate
        // approaches the predicted limit 2.922 once T washes out the transient
        let m = ModelSpec {
            alpha: 0.8,
            mu_a: 10.0,
            mu_b: 1.0,
            h1: KernelSpec::Indicator { theta: 1.875 },
            h2: KernelSpec::Indicator { theta: 2.5 },
            h3: KernelSpec::Indicator { theta: 2.5 },
            h4: KernelSpec::Indicator { theta: 1.25 },
            phi_ba: InhibitionSpec::Polynomial { tau: 1.0, beta: 1.0 },
            phi_ab: FeedbackSpec::Identity,
        };
        let pop = PopulationConfig::new(400, 0.8).unwrap();
        let log = simulate(&m, &pop, 1000.0, 271828).unwrap();
        let hat = estimate_ell(&log, 0).unwrap();
        assert!((hat - 2.922).abs() <= 0.05 * 2.922, "ell_hat = {hat}");
    }

    #[test]
    fn identical_logs_accept_h0() {
        let m = poisson_model(2.0);
        let pop = PopulationConfig::new(5, 0.8).unwrap();
        let log = simulate(&m, &pop, 50.0, 3).unwrap();
        let res = inhibition_test(&log, &log, 0.05).unwrap();
        assert_eq!(res.statistic, 0.0);
        assert!(res.threshold > 0.0);
        assert_eq!(res.decision, Decision::AcceptH0);
    }

    #[test]
    fn mismatched_horizons_rejected() {
        let m = poisson_model(2.0);
        let pop = PopulationConfig::new(5, 0.8).unwrap();
        let a = simulate(&m, &pop, 50.0, 3).unwrap();
        let b = simulate(&m, &pop, 60.0, 4).unwrap();
        assert!(inhibition_test(&a, &b, 0.05).is_err());
    }

    #[test]
    fn threshold_recomputation_is_bit_exact() {
        let m = poisson_model(2.0);
        let pop = PopulationConfig::new(5, 0.8).unwrap();
        let a = simulate(&m, &pop, 50.0, 3).unwrap();
        let b = simulate(&m, &pop, 50.0, 4).unwrap();
        let res = inhibition_test(&a, &b, 0.05).unwrap();
        let json = serde_json::to_string(&res).unwrap();
        let back: TestResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back.recompute_threshold().to_bits(), res.threshold.to_bits());
    }

    #[test]
    fn clt_condition_cases() {
        // k1 = k2 = k3 = k4 = 0.1 with mu_A = 1
        let m = ModelSpec {
            alpha: 0.5,
            mu_a: 1.0,
            mu_b: 0.0,
            h1: KernelSpec::Indicator { theta: 0.2 },
            h2: KernelSpec::Indicator { theta: 0.2 },
            h3: KernelSpec::Indicator { theta: 0.2 },
            h4: KernelSpec::Indicator { theta: 0.2 },
            phi_ba: InhibitionSpec::Polynomial { tau: 1.0, beta: 1.0 },
            phi_ab: FeedbackSpec::Identity,
        };
        let c = clt_condition(&m);
        assert!(c.satisfied);
        assert!((c.term_a.unwrap() - (1.0 + 1.0 / 9.0) * 0.2).abs() < 1e-12);

        let mut heavy = m.clone();
        heavy.h3 = KernelSpec::Indicator { theta: 1.6 }; // k3 = 0.8, term_b = 0.9 < 1
        heavy.h4 = KernelSpec::Indicator { theta: 1.4 }; // k4 = 0.7 -> term_b = 1.5
        let c = clt_condition(&heavy);
        assert!(!c.satisfied);

        let mut super_a = m;
        super_a.h1 = KernelSpec::Indicator { theta: 3.0 }; // k1 = 1.5
        let c = clt_condition(&super_a);
        assert!(!c.satisfied);
        assert!(c.term_a.is_none());
        assert!(c.reason.unwrap().contains("k1"));
    }

    proptest! {
        #[test]
        fn clt_condition_monotone_in_kappas(
            k1 in 0.01f64..0.9,
            k2 in 0.0f64..1.0,
            k3 in 0.0f64..1.0,
            k4 in 0.0f64..1.0,
            mu_a in 0.0f64..5.0,
            bump in 0.01f64..0.5,
            which in 0usize..4,
        ) {
            let build = |k: [f64; 4]| ModelSpec {
                alpha: 0.5,
                mu_a,
                mu_b: 0.0,
                h1: if k[0] > 0.0 { KernelSpec::Indicator { theta: 2.0 * k[0] } } else { KernelSpec::Zero },
                h2: if k[1] > 0.0 { KernelSpec::Indicator { theta: 2.0 * k[1] } } else { KernelSpec::Zero },
                h3: if k[2] > 0.0 { KernelSpec::Indicator { theta: 2.0 * k[2] } } else { KernelSpec::Zero },
                h4: if k[3] > 0.0 { KernelSpec::Indicator { theta: 2.0 * k[3] } } else { KernelSpec::Zero },
                phi_ba: InhibitionSpec::Polynomial { tau: 1.0, beta: 1.0 },
                phi_ab: FeedbackSpec::Identity,
            };
            let base = [k1, k2, k3, k4];
            let mut bumped = base;
            bumped[which] += bump;
            let before = clt_condition(&build(base)).satisfied;
            let after = clt_condition(&build(bumped)).satisfied;
            // increasing any coupling can only lose the condition
            prop_assert!(!(after && !before));
        }
    }

    #[test]
    fn statistic_symmetric_under_h0() {
        // sign-flip check: under identical models the statistic is symmetric
        // about zero (binomial test at level 0.01)
        let m = ModelSpec {
            alpha: 0.5,
            mu_a: 2.0,
            mu_b: 0.0,
            h1: KernelSpec::Exponential { theta: 0.6 },
            h2: KernelSpec::Zero,
            h3: KernelSpec::Zero,
            h4: KernelSpec::Zero,
            phi_ba: InhibitionSpec::One,
            phi_ab: FeedbackSpec::Zero,
        };
        let pop = PopulationConfig::new(30, 0.5).unwrap();
        let replicas: u32 = 500;
        let signs: Vec<i32> = (0..replicas)
            .into_par_iter()
            .map(|r| {
                let c = simulate(&m, &pop, 30.0, crate::mix_seed(5150, r as u64 * 2)).unwrap();
                let t = simulate(&m, &pop, 30.0, crate::mix_seed(5150, r as u64 * 2 + 1)).unwrap();
                let res = inhibition_test(&c, &t, 0.05).unwrap();
                if res.statistic > 0.0 {
                    1
                } else if res.statistic < 0.0 {
                    -1
                } else {
                    0
                }
            })
            .collect();
        let pos = signs.iter().filter(|&&s| s > 0).count() as f64;
        let nonzero = signs.iter().filter(|&&s| s != 0).count() as f64;
        assert!(nonzero > 100.0);
        let phat = pos / nonzero;
        let cutoff = 2.576 * 0.5 / nonzero.sqrt();
        assert!((phat - 0.5).abs() < cutoff, "sign fraction {phat} over {nonzero} draws");
    }

    #[test]
    fn chaos_zero_rate_degenerate() {
        let mut m = poisson_model(0.0);
        m.alpha = 0.5;
        let res = chaos_experiment(&m, &[10, 20, 40], 5.0, 0.05, 5, 99).unwrap();
        assert!(res.degenerate);
        assert!(res.slope.is_none());
        assert!(res.samples.iter().all(|s| s.discrepancy == 0.0));
        let mut csv = Vec::new();
        res.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("N,replica,discrepancy"));
    }

    #[test]
    fn chaos_deterministic_across_runs() {
        let m = ModelSpec {
            alpha: 0.5,
            mu_a: 2.0,
            mu_b: 1.0,
            h1: KernelSpec::Exponential { theta: 0.4 },
            h2: KernelSpec::Zero,
            h3: KernelSpec::Exponential { theta: 0.4 },
            h4: KernelSpec::Zero,
            phi_ba: InhibitionSpec::One,
            phi_ab: FeedbackSpec::Zero,
        };
        let a = chaos_experiment(&m, &[10, 20, 40], 5.0, 0.02, 5, 31).unwrap();
        let b = chaos_experiment(&m, &[10, 20, 40], 5.0, 0.02, 5, 31).unwrap();
        assert_eq!(a.slope, b.slope);
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!((x.n, x.replica), (y.n, y.replica));
            assert_eq!(x.discrepancy.to_bits(), y.discrepancy.to_bits());
        }
    }

    #[test]
    fn chaos_rejects_bad_inputs() {
        let m = poisson_model(1.0);
        assert!(chaos_experiment(&m, &[10, 20], 5.0, 0.05, 5, 1).is_err());
        assert!(chaos_experiment(&m, &[10, 20, 15], 5.0, 0.05, 5, 1).is_err());
        assert!(chaos_experiment(&m, &[10, 20, 40], 5.0, 0.05, 3, 1).is_err());
    }
}
