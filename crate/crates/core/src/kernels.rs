//! Memory kernels, coupling nonlinearities and the model parameterization.
//!
//! The model couples an excitatory population A (fraction `alpha` of the
//! network) to an inhibitory population B through four memory kernels and two
//! coupling functions. Writing `x1..x4` for the convolutions of the population
//! activities with the kernels `h1..h4`, the population intensities are
//!
//! ```text
//! lambda_A = (mu_A + x1) * phi_ba(x2)          x1: A self-excitation (h1)
//! lambda_B = mu_B + x3 + phi_ab(x4)            x2: inhibition drive   (h2)
//!                                              x3: B self-excitation  (h3)
//!                                              x4: feedback drive     (h4)
//! ```
//!
//! `phi_ba` maps the inhibitory drive to a damping factor in [0, 1];
//! `phi_ab` is a nondecreasing feedback with `phi_ab(0) = 0`. Base rates are
//! linear (`mu + x`); see [`BaseRate`] for the extension point.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Effective coupling strengths: population fraction times kernel mass.
///
/// `k1 = alpha*|h1|_1`, `k2 = (1-alpha)*|h2|_1`, `k3 = (1-alpha)*|h3|_1`,
/// `k4 = alpha*|h4|_1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappas {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

/// A nonnegative memory kernel h(t) on [0, inf) with known L1 mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// h = 0.
    Zero,
    /// h(t) = 1 on [0, theta], 0 beyond.
    Indicator { theta: f64 },
    /// h(t) = exp(-t/theta).
    Exponential { theta: f64 },
    /// h(t) = exp(-t/theta) * t^n / n!.
    Erlang { theta: f64, n: u32 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Zero => Ok(()),
            KernelSpec::Indicator { theta } | KernelSpec::Exponential { theta } => {
                if theta > 0.0 && theta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "kernel theta must be positive and finite, got {theta}"
                    )))
                }
            }
            KernelSpec::Erlang { theta, .. } => {
                if theta > 0.0 && theta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "erlang theta must be positive and finite, got {theta}"
                    )))
                }
            }
        }
    }

    /// Kernel value at `t >= 0`. Callers guarantee the domain.
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        match *self {
            KernelSpec::Zero => 0.0,
            KernelSpec::Indicator { theta } => {
                if t <= theta {
                    1.0
                } else {
                    0.0
                }
            }
            KernelSpec::Exponential { theta } => (-t / theta).exp(),
            KernelSpec::Erlang { theta, n } => {
                let mut acc = (-t / theta).exp();
                for k in 1..=n {
                    acc *= t / k as f64;
                }
                acc
            }
        }
    }

    /// Domain-checked evaluation: `t < 0` is rejected.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::Domain(format!(
                "kernel evaluation requires t >= 0, got {t}"
            )));
        }
        Ok(self.value(t))
    }

    /// Exact L1 mass of the kernel.
    pub fn l1_norm(&self) -> f64 {
        match *self {
            KernelSpec::Zero => 0.0,
            KernelSpec::Indicator { theta } => theta,
            KernelSpec::Exponential { theta } => theta,
            // int_0^inf exp(-t/theta) t^n / n! dt = theta^(n+1)
            KernelSpec::Erlang { theta, n } => theta.powi(n as i32 + 1),
        }
    }

    /// Supremum of the kernel over [0, inf).
    pub fn sup_norm(&self) -> f64 {
        match *self {
            KernelSpec::Zero => 0.0,
            KernelSpec::Indicator { .. } | KernelSpec::Exponential { .. } => 1.0,
            KernelSpec::Erlang { theta, n } => {
                if n == 0 {
                    1.0
                } else {
                    // maximum at t = n*theta
                    self.value(n as f64 * theta)
                }
            }
        }
    }

    /// True when the kernel is non-increasing on [0, inf).
    pub fn monotone_decreasing(&self) -> bool {
        match *self {
            KernelSpec::Zero | KernelSpec::Indicator { .. } | KernelSpec::Exponential { .. } => {
                true
            }
            KernelSpec::Erlang { n, .. } => n == 0,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            KernelSpec::Zero => "zero",
            KernelSpec::Indicator { .. } => "indicator",
            KernelSpec::Exponential { .. } => "exponential",
            KernelSpec::Erlang { .. } => "erlang",
        }
    }
}

/// The inhibition factor applied to population A's excitatory drive.
///
/// Every family maps [0, inf) into [0, 1] and is non-increasing. All families
/// except `Arctan` are normalized to 1 at 0; all families except `One` vanish
/// at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum InhibitionSpec {
    /// No inhibition: identically 1.
    One,
    /// 1 / (1 + tau x^beta).
    Polynomial { tau: f64, beta: f64 },
    /// exp(-tau x).
    Exponential { tau: f64 },
    /// 1 / (1 + (x/r)^beta); equals `Polynomial` with tau = r^(-beta).
    SigmoidPolynomial { r: f64, beta: f64 },
    /// 1/2 - arctan(beta (x - r)) / pi.
    Arctan { r: f64, beta: f64 },
    /// Hard threshold: 1 on [0, r], 0 beyond. Not Lipschitz; analyzers fall
    /// back to the threshold heuristic for it.
    Indicator { r: f64 },
}

impl InhibitionSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            InhibitionSpec::One => true,
            InhibitionSpec::Polynomial { tau, beta } => tau > 0.0 && beta > 0.0,
            InhibitionSpec::Exponential { tau } => tau > 0.0,
            InhibitionSpec::SigmoidPolynomial { r, beta } | InhibitionSpec::Arctan { r, beta } => {
                r > 0.0 && beta > 0.0
            }
            InhibitionSpec::Indicator { r } => r > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "inhibition parameters must be strictly positive: {self:?}"
            )))
        }
    }

    /// Value at `x >= 0`, always in [0, 1].
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        match *self {
            InhibitionSpec::One => 1.0,
            InhibitionSpec::Polynomial { tau, beta } => 1.0 / (1.0 + tau * x.powf(beta)),
            InhibitionSpec::Exponential { tau } => (-tau * x).exp(),
            InhibitionSpec::SigmoidPolynomial { r, beta } => 1.0 / (1.0 + (x / r).powf(beta)),
            InhibitionSpec::Arctan { r, beta } => 0.5 - (beta * (x - r)).atan() / PI,
            InhibitionSpec::Indicator { r } => {
                if x <= r {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative at `x > 0` (one-sided at 0). Undefined for `Indicator`.
    pub fn deriv(&self, x: f64) -> f64 {
        match *self {
            InhibitionSpec::One => 0.0,
            InhibitionSpec::Polynomial { tau, beta } => {
                let d = 1.0 + tau * x.powf(beta);
                -tau * beta * x.powf(beta - 1.0) / (d * d)
            }
            InhibitionSpec::Exponential { tau } => -tau * (-tau * x).exp(),
            InhibitionSpec::SigmoidPolynomial { r, beta } => {
                InhibitionSpec::Polynomial { tau: r.powf(-beta), beta }.deriv(x)
            }
            InhibitionSpec::Arctan { r, beta } => {
                let z = beta * (x - r);
                -(beta / PI) / (1.0 + z * z)
            }
            InhibitionSpec::Indicator { .. } => f64::NAN,
        }
    }

    /// False exactly for `Arctan`, whose value at 0 is below 1.
    pub fn normalized_at_zero(&self) -> bool {
        !matches!(self, InhibitionSpec::Arctan { .. })
    }

    /// False exactly for the discontinuous `Indicator` family.
    pub fn lipschitz(&self) -> bool {
        !matches!(self, InhibitionSpec::Indicator { .. })
    }

    /// True when the factor vanishes at infinity (all families except `One`).
    pub fn vanishes_at_infinity(&self) -> bool {
        !matches!(self, InhibitionSpec::One)
    }

    /// True when the family is convex on (0, inf). Convexity is the regime
    /// where convergence of the coupled intensities is conjectured even
    /// outside the certified conditions.
    pub fn is_convex(&self) -> bool {
        match *self {
            InhibitionSpec::One | InhibitionSpec::Exponential { .. } => true,
            InhibitionSpec::Polynomial { beta, .. }
            | InhibitionSpec::SigmoidPolynomial { beta, .. } => beta <= 1.0,
            InhibitionSpec::Arctan { .. } | InhibitionSpec::Indicator { .. } => false,
        }
    }

    /// Threshold of the hard-inhibition limit of the family, when one exists:
    /// the `r` such that the family approaches `1 on [0, r], 0 beyond` as its
    /// steepness grows. Used by the threshold phase-transition heuristic.
    pub fn threshold(&self) -> Option<f64> {
        match *self {
            InhibitionSpec::Indicator { r }
            | InhibitionSpec::SigmoidPolynomial { r, .. }
            | InhibitionSpec::Arctan { r, .. } => Some(r),
            InhibitionSpec::Polynomial { tau, beta } => Some(tau.powf(-1.0 / beta)),
            InhibitionSpec::One | InhibitionSpec::Exponential { .. } => None,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            InhibitionSpec::One => "one",
            InhibitionSpec::Polynomial { .. } => "polynomial",
            InhibitionSpec::Exponential { .. } => "exponential",
            InhibitionSpec::SigmoidPolynomial { .. } => "sigmoid_polynomial",
            InhibitionSpec::Arctan { .. } => "arctan",
            InhibitionSpec::Indicator { .. } => "indicator",
        }
    }
}

/// Domain-checked inhibition evaluation (`x >= 0`).
pub fn eval_inhibition(spec: &InhibitionSpec, x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!(
            "inhibition evaluation requires x >= 0, got {x}"
        )));
    }
    Ok(spec.value(x))
}

/// Domain-checked kernel evaluation (`t >= 0`).
pub fn eval_kernel(kernel: &KernelSpec, t: f64) -> Result<f64> {
    kernel.eval(t)
}

/// Additive feedback of population A onto population B.
///
/// Nondecreasing with value 0 at 0; `Identity` and `Linear` grow without
/// bound, `Zero` switches the feedback channel off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeedbackSpec {
    Zero,
    Identity,
    Linear { slope: f64 },
}

impl FeedbackSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FeedbackSpec::Linear { slope } if !(slope > 0.0 && slope.is_finite()) => Err(
                Error::InvalidParameter(format!("feedback slope must be positive, got {slope}")),
            ),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        match *self {
            FeedbackSpec::Zero => 0.0,
            FeedbackSpec::Identity => x,
            FeedbackSpec::Linear { slope } => slope * x,
        }
    }

    pub fn deriv(&self, _x: f64) -> f64 {
        match *self {
            FeedbackSpec::Zero => 0.0,
            FeedbackSpec::Identity => 1.0,
            FeedbackSpec::Linear { slope } => slope,
        }
    }

    /// Slope of the feedback; 0 when the channel is off.
    pub fn slope(&self) -> f64 {
        self.deriv(0.0)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, FeedbackSpec::Zero)
    }
}

/// Base firing rate of a population as a function of its recurrent drive.
///
/// The shipped model uses the linear rate `mu + x` for both populations; this
/// trait is the extension point for other Lipschitz rate families.
pub trait BaseRate {
    fn rate(&self, x: f64) -> f64;
}

/// The linear base rate `mu + x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearRate {
    pub mu: f64,
}

impl BaseRate for LinearRate {
    #[inline]
    fn rate(&self, x: f64) -> f64 {
        self.mu + x
    }
}

/// Full parameterization of the two-population model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Fraction of excitatory neurons, in (0, 1).
    pub alpha: f64,
    /// Spontaneous rate of population A.
    pub mu_a: f64,
    /// Spontaneous rate of population B.
    pub mu_b: f64,
    /// A -> A memory kernel.
    pub h1: KernelSpec,
    /// B -> A memory kernel (inhibitory drive).
    pub h2: KernelSpec,
    /// B -> B memory kernel.
    pub h3: KernelSpec,
    /// A -> B memory kernel (feedback drive).
    pub h4: KernelSpec,
    /// Inhibition factor applied to A.
    pub phi_ba: InhibitionSpec,
    /// Feedback applied to B.
    pub phi_ab: FeedbackSpec,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.mu_a >= 0.0 && self.mu_a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mu_a must be nonnegative, got {}",
                self.mu_a
            )));
        }
        if !(self.mu_b >= 0.0 && self.mu_b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mu_b must be nonnegative, got {}",
                self.mu_b
            )));
        }
        self.h1.validate()?;
        self.h2.validate()?;
        self.h3.validate()?;
        self.h4.validate()?;
        self.phi_ba.validate()?;
        self.phi_ab.validate()?;
        let k = self.kappas();
        for (name, v) in [("k1", k.k1), ("k2", k.k2), ("k3", k.k3), ("k4", k.k4)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
        }
        Ok(())
    }

    /// Effective coupling strengths from the kernel masses.
    pub fn kappas(&self) -> Kappas {
        Kappas {
            k1: self.alpha * self.h1.l1_norm(),
            k2: (1.0 - self.alpha) * self.h2.l1_norm(),
            k3: (1.0 - self.alpha) * self.h3.l1_norm(),
            k4: self.alpha * self.h4.l1_norm(),
        }
    }

    /// Intensity of population A from the drives `x1`, `x2`.
    #[inline]
    pub fn lambda_a(&self, x1: f64, x2: f64) -> f64 {
        (self.mu_a + x1) * self.phi_ba.value(x2)
    }

    /// Intensity of population B from the drives `x3`, `x4`.
    #[inline]
    pub fn lambda_b(&self, x3: f64, x4: f64) -> f64 {
        self.mu_b + x3 + self.phi_ab.value(x4)
    }

    /// Inhibition is active only if the B -> A kernel has mass and the
    /// inhibition factor actually varies.
    pub fn inhibition_active(&self) -> bool {
        self.kappas().k2 > 0.0 && !matches!(self.phi_ba, InhibitionSpec::One)
    }

    /// Feedback is active only if the A -> B kernel has mass and the feedback
    /// function is not identically zero.
    pub fn feedback_active(&self) -> bool {
        self.kappas().k4 > 0.0 && !self.phi_ab.is_zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Composite Simpson quadrature, used as the independent check of the
    /// closed-form L1 masses.
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cells: usize) -> f64 {
        let h = (b - a) / cells as f64;
        let mut acc = 0.0;
        for i in 0..cells {
            let x0 = a + i as f64 * h;
            acc += h / 6.0 * (f(x0) + 4.0 * f(x0 + 0.5 * h) + f(x0 + h));
        }
        acc
    }

    fn quadrature_horizon(k: &KernelSpec) -> f64 {
        match *k {
            KernelSpec::Zero => 1.0,
            KernelSpec::Indicator { theta } => theta,
            KernelSpec::Exponential { theta } => theta * (theta / 1e-9).ln().max(1.0),
            KernelSpec::Erlang { theta, n } => theta * (60.0 + 4.0 * n as f64),
        }
    }

    #[test]
    fn eval_indicator_inside_and_outside_support() {
        let k = KernelSpec::Indicator { theta: 2.0 };
        assert_eq!(eval_kernel(&k, 1.0).unwrap(), 1.0);
        assert_eq!(eval_kernel(&k, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn eval_exponential_direct() {
        let k = KernelSpec::Exponential { theta: 2.0 };
        // e^(-t/theta) at t = 2 is e^(-1)
        assert_relative_eq!(
            eval_kernel(&k, 2.0).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn eval_rejects_negative_time() {
        let k = KernelSpec::Exponential { theta: 2.0 };
        assert!(eval_kernel(&k, -0.5).is_err());
    }

    #[test]
    fn kappas_from_kernel_masses() {
        let mut m = fixture_model();
        m.alpha = 0.8;
        m.h1 = KernelSpec::Indicator { theta: 1.875 };
        m.h2 = KernelSpec::Indicator { theta: 2.5 };
        m.h4 = KernelSpec::Exponential { theta: 1.25 };
        let k = m.kappas();
        assert_relative_eq!(k.k1, 1.5, max_relative = 1e-14);
        assert_relative_eq!(k.k2, 0.5, max_relative = 1e-14);
        assert_relative_eq!(k.k4, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn inhibition_values() {
        let p = InhibitionSpec::Polynomial { tau: 1.0, beta: 1.0 };
        assert_relative_eq!(
            eval_inhibition(&p, 3.922).unwrap(),
            1.0 / 4.922,
            max_relative = 1e-14
        );
        for s in [
            InhibitionSpec::One,
            InhibitionSpec::Polynomial { tau: 0.7, beta: 2.0 },
            InhibitionSpec::Exponential { tau: 0.3 },
            InhibitionSpec::SigmoidPolynomial { r: 1.5, beta: 8.0 },
            InhibitionSpec::Indicator { r: 1.0 },
        ] {
            assert_eq!(s.value(0.0), 1.0, "{s:?} must be 1 at 0");
            assert!(s.normalized_at_zero());
        }
        let atan = InhibitionSpec::Arctan { r: 1.0, beta: 4.0 };
        assert!(!atan.normalized_at_zero());
        assert!(atan.value(0.0) > 0.0 && atan.value(0.0) < 1.0);
        assert_eq!(InhibitionSpec::Indicator { r: 1.0 }.value(1.5), 0.0);
    }

    #[test]
    fn l1_norms_match_quadrature() {
        let kernels = [
            KernelSpec::Zero,
            KernelSpec::Indicator { theta: 2.0 },
            KernelSpec::Exponential { theta: 0.7 },
            KernelSpec::Erlang { theta: 0.9, n: 0 },
            KernelSpec::Erlang { theta: 0.6, n: 1 },
            KernelSpec::Erlang { theta: 1.3, n: 3 },
            KernelSpec::Erlang { theta: 0.4, n: 7 },
        ];
        for k in kernels {
            let horizon = quadrature_horizon(&k);
            let numeric = simpson(|t| k.value(t), 0.0, horizon, 200_000);
            assert!(
                (numeric - k.l1_norm()).abs() < 1e-6,
                "{k:?}: quadrature {numeric} vs closed form {}",
                k.l1_norm()
            );
        }
    }

    #[test]
    fn erlang_sup_norm_is_global_max() {
        let k = KernelSpec::Erlang { theta: 0.8, n: 4 };
        let sup = k.sup_norm();
        let mut grid_max: f64 = 0.0;
        for i in 0..40_000 {
            grid_max = grid_max.max(k.value(i as f64 * 1e-3));
        }
        assert!(grid_max <= sup * (1.0 + 1e-12));
        assert_relative_eq!(grid_max, sup, max_relative = 1e-5);
    }

    #[test]
    fn monotonicity_flags() {
        assert!(KernelSpec::Indicator { theta: 1.0 }.monotone_decreasing());
        assert!(KernelSpec::Exponential { theta: 1.0 }.monotone_decreasing());
        assert!(KernelSpec::Erlang { theta: 1.0, n: 0 }.monotone_decreasing());
        assert!(!KernelSpec::Erlang { theta: 1.0, n: 2 }.monotone_decreasing());
    }

    #[test]
    fn feedback_values() {
        assert_eq!(FeedbackSpec::Zero.value(3.0), 0.0);
        assert_eq!(FeedbackSpec::Identity.value(3.0), 3.0);
        assert_eq!(FeedbackSpec::Linear { slope: 2.0 }.value(3.0), 6.0);
        for f in [
            FeedbackSpec::Zero,
            FeedbackSpec::Identity,
            FeedbackSpec::Linear { slope: 0.5 },
        ] {
            assert_eq!(f.value(0.0), 0.0);
        }
    }

    #[test]
    fn model_validation() {
        let mut m = fixture_model();
        assert!(m.validate().is_ok());
        m.alpha = 1.0;
        assert!(m.validate().is_err());
        m.alpha = 0.8;
        m.mu_a = -1.0;
        assert!(m.validate().is_err());
    }

    pub(crate) fn fixture_model() -> ModelSpec {
        ModelSpec {
            alpha: 0.8,
            mu_a: 10.0,
            mu_b: 1.0,
            h1: KernelSpec::Indicator { theta: 1.875 },
            h2: KernelSpec::Indicator { theta: 2.5 },
            h3: KernelSpec::Indicator { theta: 2.5 },
            h4: KernelSpec::Indicator { theta: 1.25 },
            phi_ba: InhibitionSpec::Polynomial { tau: 1.0, beta: 1.0 },
            phi_ab: FeedbackSpec::Identity,
        }
    }

    fn inhibition_strategy() -> impl Strategy<Value = InhibitionSpec> {
        prop_oneof![
            Just(InhibitionSpec::One),
            (0.05f64..4.0, 0.2f64..3.0)
                .prop_map(|(tau, beta)| InhibitionSpec::Polynomial { tau, beta }),
            (0.05f64..4.0).prop_map(|tau| InhibitionSpec::Exponential { tau }),
            (0.2f64..4.0, 0.5f64..40.0)
                .prop_map(|(r, beta)| InhibitionSpec::SigmoidPolynomial { r, beta }),
            (0.2f64..4.0, 0.5f64..40.0).prop_map(|(r, beta)| InhibitionSpec::Arctan { r, beta }),
            (0.2f64..4.0).prop_map(|r| InhibitionSpec::Indicator { r }),
        ]
    }

    proptest! {
        #[test]
        fn inhibition_bounded_and_nonincreasing(
            spec in inhibition_strategy(),
            x in 0.0f64..50.0,
            gap in 0.0f64..50.0,
        ) {
            let y = x + gap;
            let vx = spec.value(x);
            let vy = spec.value(y);
            prop_assert!((0.0..=1.0).contains(&vx));
            prop_assert!((0.0..=1.0).contains(&vy));
            prop_assert!(vx >= vy - 1e-15);
        }

        #[test]
        fn sigmoid_polynomial_matches_polynomial(
            r in 0.2f64..4.0,
            beta in 0.5f64..20.0,
            x in 0.0f64..30.0,
        ) {
            let sig = InhibitionSpec::SigmoidPolynomial { r, beta };
            let pol = InhibitionSpec::Polynomial { tau: r.powf(-beta), beta };
            prop_assert!((sig.value(x) - pol.value(x)).abs() < 1e-12);
        }

        #[test]
        fn kernels_nonnegative_and_vanish(
            theta in 0.1f64..4.0,
            n in 0u32..6,
            t in 0.0f64..100.0,
        ) {
            for k in [
                KernelSpec::Indicator { theta },
                KernelSpec::Exponential { theta },
                KernelSpec::Erlang { theta, n },
            ] {
                prop_assert!(k.value(t) >= 0.0);
                let far = 1e4 * theta * (n as f64 + 1.0);
                prop_assert!(k.value(far) < 1e-6);
            }
        }
    }
}
