//! Closed-form long-time analysis of the limit intensity system.
//!
//! With linear base rates, the candidate limit of `lambda_B` is the unique
//! fixed point of the nonincreasing map
//!
//! ```text
//! psi1(x) = mu_A phi_ba(k2 x) / (1 - k1 phi_ba(k2 x))     (limit of lambda_A given lambda_B -> x)
//! psi2(x) = (mu_B + phi_ab(k4 x)) / (1 - k3)              (limit of lambda_B given lambda_A -> x)
//! Phi     = psi2 . psi1
//! ```
//!
//! on the admissible set `{x >= 0 : k1 phi_ba(k2 x) < 1}`. The module
//! computes the fixed point by bisection, checks the uniqueness condition for
//! the two-sided hull of `Phi` (which certifies convergence of the
//! intensities), classifies the regime from the coupling structure and the
//! kappa parameters, evaluates the three-level hierarchy of `lambda_A`
//! limits, and implements the hard-threshold phase-transition heuristic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{InhibitionSpec, Kappas, ModelSpec};

/// Absolute tolerance for the fixed-point bisection.
pub const FIXED_POINT_TOL: f64 = 1e-10;
/// Grid size for the numerical uniqueness test.
const U_GRID: usize = 10_000;
/// Strictness margin for the numerical uniqueness test.
const U_MARGIN: f64 = 1e-12;
/// Contraction certificate margin: sampled |Phi'| must stay below 1 minus this.
const CONTRACTION_DELTA: f64 = 0.05;

/// Drive parameters of the fixed-point map: `a = mu_B k2 / (1 - k3)` measures
/// the baseline inhibitory pressure on A, `b = k2 k4 / (1 - k3)` the strength
/// of the loop through both couplings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbParams {
    pub a: f64,
    pub b: f64,
}

/// Status of the uniqueness condition behind the convergence certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionU {
    /// A shipped sufficient condition applies.
    Proven,
    /// The grid test `u < Phi(Phi(u))` held strictly below the fixed point.
    NumericallyHolds,
    /// The grid test found a violation; oscillation is possible.
    NumericallyFails,
    NotApplicable,
}

/// Whether the a priori lower bound on `liminf lambda_B` is known to lie in
/// the admissible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UbInI {
    Guaranteed,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    DecoupledBothSub,
    DecoupledASuper,
    DecoupledBSuper,
    InhibOnlySub,
    InhibOnlyASuper,
    InhibOnlyBSuperAKilled,
    FeedbackOnlyBothSub,
    FeedbackOnlyBSuper,
    FeedbackOnlyBothSuper,
    FullCoupledConvergent,
    FullCoupledBSuperAKilled,
    FullCoupledOscillatoryCandidate,
    OutsideTheory,
}

/// Predicted long-time limit of one intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Limit {
    Finite(f64),
    Infinite,
    Unknown,
}

impl Limit {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Limit::Finite(v) => Some(*v),
            _ => None,
        }
    }
}

/// Outcome of the hard-threshold phase-transition heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseTransition {
    FixedPointExists,
    NoFixedPointOscillationExpected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checks {
    /// The sufficient condition `k1 phi_ba(k2 mu_B / (1 - k3)) < 1`.
    pub subcritical_condition: bool,
    pub assumption_u: AssumptionU,
    pub ub_in_admissible: UbInI,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub fixed_point_abs: f64,
    pub uniqueness_margin: f64,
}

/// Regime classification, fixed point and predicted limits for one model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LongTimeReport {
    pub kappas: Kappas,
    /// Present when `k3 < 1`.
    pub ab: Option<AbParams>,
    pub regime: Regime,
    /// Fixed point of the composed map, when defined.
    pub ell: Option<f64>,
    pub limit_a: Limit,
    pub limit_b: Limit,
    pub checks: Checks,
    /// Identifier of the classification rule that fired.
    pub rule: String,
    /// Convex inhibition: convergence is conjectured but not certified when
    /// the uniqueness condition fails.
    pub conjecture_convex: bool,
    /// Hard-threshold heuristic, reported for discontinuous inhibition.
    pub threshold_heuristic: Option<PhaseTransition>,
    pub tolerances: Tolerances,
}

fn kappa_checked(model: &ModelSpec) -> Kappas {
    model.kappas()
}

/// `a` and `b` drive parameters; requires `k3 < 1`.
pub fn ab_params(model: &ModelSpec) -> Result<AbParams> {
    let k = kappa_checked(model);
    if k.k3 >= 1.0 {
        return Err(Error::NotApplicable(format!(
            "a/b parameters require k3 < 1, got k3 = {}",
            k.k3
        )));
    }
    Ok(AbParams { a: model.mu_b * k.k2 / (1.0 - k.k3), b: k.k2 * k.k4 / (1.0 - k.k3) })
}

/// Left boundary of the admissible set `{x : k1 phi_ba(k2 x) < 1}`.
///
/// `Ok(None)` means the whole half-line is admissible. `Err` means the set is
/// empty (constant inhibition with `k1 >= 1`).
pub fn admissible_boundary(model: &ModelSpec) -> Result<Option<f64>> {
    let k = kappa_checked(model);
    let phi0 = model.phi_ba.value(0.0);
    if k.k1 * phi0 < 1.0 {
        return Ok(None);
    }
    if k.k2 == 0.0 || !model.phi_ba.vanishes_at_infinity() {
        return Err(Error::NotApplicable(
            "admissible set is empty: inhibition factor never falls below 1/k1".into(),
        ));
    }
    let x_star = match model.phi_ba {
        InhibitionSpec::Polynomial { tau, beta } => ((k.k1 - 1.0) / tau).powf(1.0 / beta) / k.k2,
        InhibitionSpec::SigmoidPolynomial { r, beta } => {
            r * (k.k1 - 1.0).powf(1.0 / beta) / k.k2
        }
        InhibitionSpec::Exponential { tau } => k.k1.ln() / (tau * k.k2),
        InhibitionSpec::Arctan { r, beta } => {
            let z = r + (std::f64::consts::PI * (0.5 - 1.0 / k.k1)).tan() / beta;
            z / k.k2
        }
        InhibitionSpec::Indicator { r } => r / k.k2,
        InhibitionSpec::One => unreachable!("constant inhibition handled above"),
    };
    Ok(Some(x_star.max(0.0)))
}

/// Limit of `lambda_A` given that `lambda_B` converges to `x`.
pub fn psi1(x: f64, model: &ModelSpec) -> Result<f64> {
    let k = kappa_checked(model);
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("psi1 requires x >= 0, got {x}")));
    }
    let phi = model.phi_ba.value(k.k2 * x);
    let denom = 1.0 - k.k1 * phi;
    if denom <= 0.0 {
        let x_star = admissible_boundary(model)?.unwrap_or(f64::INFINITY);
        return Err(Error::OutsideAdmissible { x, x_star });
    }
    Ok(model.mu_a * phi / denom)
}

/// Limit of `lambda_B` given that `lambda_A` converges to `x`; requires
/// `k3 < 1`.
pub fn psi2(x: f64, model: &ModelSpec) -> Result<f64> {
    let k = kappa_checked(model);
    if k.k3 >= 1.0 {
        return Err(Error::NotApplicable(format!("psi2 requires k3 < 1, got k3 = {}", k.k3)));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("psi2 requires x >= 0, got {x}")));
    }
    Ok((model.mu_b + model.phi_ab.value(k.k4 * x)) / (1.0 - k.k3))
}

/// The composed fixed-point map `psi2 . psi1`.
pub fn big_phi(x: f64, model: &ModelSpec) -> Result<f64> {
    psi2(psi1(x, model)?, model)
}

/// Derivative of the composed map at an admissible `x`.
fn big_phi_deriv(x: f64, model: &ModelSpec) -> Result<f64> {
    let k = kappa_checked(model);
    let phi = model.phi_ba.value(k.k2 * x);
    let denom = 1.0 - k.k1 * phi;
    if denom <= 0.0 {
        let x_star = admissible_boundary(model)?.unwrap_or(f64::INFINITY);
        return Err(Error::OutsideAdmissible { x, x_star });
    }
    let dphi = model.phi_ba.deriv(k.k2 * x) * k.k2;
    let psi1_val = model.mu_a * phi / denom;
    let psi1_deriv = model.mu_a * dphi / (denom * denom);
    let psi2_deriv = k.k4 * model.phi_ab.deriv(k.k4 * psi1_val) / (1.0 - k.k3);
    Ok(psi2_deriv * psi1_deriv)
}

fn require_lipschitz(model: &ModelSpec) -> Result<()> {
    if model.phi_ba.lipschitz() {
        Ok(())
    } else {
        Err(Error::NotApplicable(
            "discontinuous (hard-threshold) inhibition is outside the fixed-point theory".into(),
        ))
    }
}

/// Left end of the bisection bracket: above the admissible boundary and above
/// the a priori lower bound `mu_B / (1 - k3)`, with the composed map finite.
fn bracket_low(model: &ModelSpec) -> Result<f64> {
    let k = kappa_checked(model);
    let floor = model.mu_b / (1.0 - k.k3);
    let lo = match admissible_boundary(model)? {
        None => floor,
        Some(x_star) => {
            let mut eps = (x_star.abs() * 1e-12).max(1e-12);
            let mut lo = (x_star + eps).max(floor);
            let mut tries = 0;
            while !big_phi(lo, model).map(f64::is_finite).unwrap_or(false) {
                eps *= 10.0;
                lo = (x_star + eps).max(floor);
                tries += 1;
                if tries > 60 {
                    return Err(Error::Numerical(format!(
                        "could not find a finite value of the fixed-point map above x* = {x_star}"
                    )));
                }
            }
            lo
        }
    };
    Ok(lo)
}

/// Unique fixed point of the composed map on the admissible set, by bisection
/// on `Phi(x) - x` down to [`FIXED_POINT_TOL`].
pub fn fixed_point(model: &ModelSpec) -> Result<f64> {
    model.validate()?;
    require_lipschitz(model)?;
    let k = kappa_checked(model);
    if k.k3 >= 1.0 {
        return Err(Error::NotApplicable(format!(
            "fixed point requires k3 < 1, got k3 = {}",
            k.k3
        )));
    }
    let lo0 = bracket_low(model)?;
    let g = |x: f64| -> Result<f64> { Ok(big_phi(x, model)? - x) };

    let mut lo = lo0;
    let mut glo = g(lo)?;
    if glo < 0.0 {
        // only possible through rounding right at the bracket edge
        if glo > -1e-9 * (1.0 + lo.abs()) {
            return Ok(lo);
        }
        return Err(Error::Numerical(format!(
            "bracketing failure: Phi(x) - x = {glo} at the left bracket x = {lo}"
        )));
    }
    let hi0 = big_phi(lo, model)?;
    let mut hi = hi0.max(lo);
    if g(hi)? > 0.0 {
        // Phi(hi) <= Phi(lo) = hi for a nonincreasing map; tolerate rounding
        hi += (1.0 + hi.abs()) * 1e-9;
        if g(hi)? > 0.0 {
            return Err(Error::Numerical(format!(
                "bracketing failure: no sign change on [{lo}, {hi}]"
            )));
        }
    }

    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid)?;
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm > 0.0 {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
        if hi - lo < FIXED_POINT_TOL && glo.abs() < 1e-9 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Closed-form fixed point for polynomial inhibition with exponent 1.
///
/// Solves the quadratic obtained from `x = a/k2 + s mu_A b / (k2 (1 - k1 + tau k2 x))`
/// where `s` is the feedback slope; only the root in the admissible set is
/// returned.
pub fn ell_linear_beta1(model: &ModelSpec) -> Result<f64> {
    #[allow(clippy::redundant_guards)] // a float literal pattern reads worse
    let tau = match model.phi_ba {
        InhibitionSpec::Polynomial { tau, beta } if beta == 1.0 => tau,
        InhibitionSpec::SigmoidPolynomial { r, beta } if beta == 1.0 => 1.0 / r,
        _ => {
            return Err(Error::Unsupported(format!(
                "closed form requires polynomial inhibition with exponent 1, got {:?}",
                model.phi_ba
            )))
        }
    };
    let k = kappa_checked(model);
    if k.k3 >= 1.0 {
        return Err(Error::NotApplicable(format!(
            "closed form requires k3 < 1, got k3 = {}",
            k.k3
        )));
    }
    if k.k2 <= 0.0 {
        return Err(Error::Unsupported("closed form requires k2 > 0".into()));
    }
    let AbParams { a, b } = ab_params(model)?;
    let b_eff = b * model.phi_ab.slope();
    let c0 = 1.0 - k.k1 - tau * a;
    let disc = c0 * c0 + 4.0 * tau * ((1.0 - k.k1) * a + model.mu_a * b_eff);
    Ok((-c0 + disc.sqrt()) / (2.0 * tau * k.k2))
}

/// True when the composed map does not depend on its argument.
fn composed_map_constant(model: &ModelSpec) -> bool {
    !model.feedback_active() || !model.inhibition_active() || model.mu_a == 0.0
}

/// Decides the uniqueness condition that certifies convergence.
///
/// Order of certificates: constancy; polynomial inhibition with exponent at
/// most one under the subcriticality condition; a sampled contraction bound;
/// sampled strict concavity of the composed square. Failing all of those, the
/// grid test `u < Phi(Phi(u))` below the fixed point decides numerically.
pub fn check_assumption_u(model: &ModelSpec) -> AssumptionU {
    let k = kappa_checked(model);
    if k.k3 >= 1.0 || !model.phi_ba.lipschitz() {
        return AssumptionU::NotApplicable;
    }
    if composed_map_constant(model) {
        return AssumptionU::Proven;
    }
    let ab = match ab_params(model) {
        Ok(v) => v,
        Err(_) => return AssumptionU::NotApplicable,
    };

    // polynomial inhibition, exponent <= 1, below the critical coupling
    let poly_tau_beta = match model.phi_ba {
        InhibitionSpec::Polynomial { tau, beta } => Some((tau, beta)),
        InhibitionSpec::SigmoidPolynomial { r, beta } => Some((r.powf(-beta), beta)),
        _ => None,
    };
    if let Some((tau, beta)) = poly_tau_beta {
        if beta <= 1.0 && k.k1 < 1.0 + tau * ab.a.powf(beta) {
            return AssumptionU::Proven;
        }
    }

    let ell = match fixed_point(model) {
        Ok(v) => v,
        Err(_) => return AssumptionU::NotApplicable,
    };
    let lo = match bracket_low(model) {
        Ok(v) => v,
        Err(_) => return AssumptionU::NotApplicable,
    };

    // sampled contraction certificate on the bisection bracket
    let hi = big_phi(lo, model).unwrap_or(ell).max(ell);
    if hi > lo {
        let samples = 2048;
        let mut contraction = true;
        for i in 0..samples {
            let x = lo + (i as f64 + 0.5) / samples as f64 * (hi - lo);
            match big_phi_deriv(x, model) {
                Ok(d) if d.abs() < 1.0 - CONTRACTION_DELTA => {}
                _ => {
                    contraction = false;
                    break;
                }
            }
        }
        if contraction {
            return AssumptionU::Proven;
        }
    }

    let phi2 = |u: f64| -> Option<f64> {
        let v = big_phi(u, model).ok()?;
        big_phi(v, model).ok()
    };

    // sampled strict concavity of Phi . Phi on (lo, ell)
    if ell > lo {
        let samples = 512;
        let h = (ell - lo) / (samples as f64 + 1.0);
        let mut concave = true;
        for i in 1..=samples {
            let u = lo + i as f64 * h;
            match (phi2(u - h), phi2(u), phi2(u + h)) {
                (Some(a), Some(b), Some(c)) => {
                    if a + c - 2.0 * b >= -U_MARGIN {
                        concave = false;
                        break;
                    }
                }
                _ => {
                    concave = false;
                    break;
                }
            }
        }
        if concave {
            return AssumptionU::Proven;
        }
    }

    // grid test below the fixed point
    if ell - lo <= U_MARGIN {
        return AssumptionU::NumericallyHolds;
    }
    for i in 0..U_GRID {
        let u = lo + (i as f64 + 0.5) / U_GRID as f64 * (ell - lo);
        match phi2(u) {
            Some(v) if u < v - U_MARGIN => {}
            _ => return AssumptionU::NumericallyFails,
        }
    }
    AssumptionU::NumericallyHolds
}

/// Hard-threshold phase-transition heuristic.
///
/// For inhibition with a finite threshold `r`, compares the largest
/// self-consistent inhibitory drive against the isolated limit of
/// population A: a fixed point exists when `(r - a) / b >= mu_A / (1 - k1)`
/// (or when the baseline drive already exceeds the threshold); otherwise the
/// loop has no rest point and oscillation is expected.
pub fn indicator_phase_transition(model: &ModelSpec) -> Result<PhaseTransition> {
    let r = model.phi_ba.threshold().ok_or_else(|| {
        Error::Unsupported(format!(
            "no hard-threshold limit for inhibition family {}",
            model.phi_ba.family_name()
        ))
    })?;
    let k = kappa_checked(model);
    if k.k1 >= 1.0 {
        return Err(Error::NotApplicable(format!(
            "threshold heuristic requires k1 < 1, got k1 = {}",
            k.k1
        )));
    }
    if k.k3 >= 1.0 {
        return Err(Error::NotApplicable(format!(
            "threshold heuristic requires k3 < 1, got k3 = {}",
            k.k3
        )));
    }
    let AbParams { a, b } = ab_params(model)?;
    let b_eff = b * model.phi_ab.slope();
    if a > r {
        // baseline inhibitory drive already above threshold: A is silenced at
        // the rest point
        return Ok(PhaseTransition::FixedPointExists);
    }
    if b_eff == 0.0 {
        return Ok(PhaseTransition::FixedPointExists);
    }
    if (r - a) / b_eff >= model.mu_a / (1.0 - k.k1) {
        Ok(PhaseTransition::FixedPointExists)
    } else {
        Ok(PhaseTransition::NoFixedPointOscillationExpected)
    }
}

/// A posteriori admissibility check: given an observed lower bound on the
/// tail of `lambda_B` (typically `lower_b` from an oscillation report),
/// decides whether it lies in the admissible set, i.e. whether
/// `k1 phi_ba(k2 lower_b) < 1`. This settles membership after the fact when
/// the a priori sufficient condition is unavailable.
pub fn admissible_lower_bound_check(model: &ModelSpec, lower_b: f64) -> Result<bool> {
    if lower_b.is_nan() || lower_b < 0.0 {
        return Err(Error::Domain(format!(
            "observed lower bound must be nonnegative, got {lower_b}"
        )));
    }
    let k = kappa_checked(model);
    Ok(k.k1 * model.phi_ba.value(k.k2 * lower_b) < 1.0)
}

/// The three-level hierarchy of `lambda_A` limits: isolated, with inhibition
/// only, and with the full loop. Slots are `None` when their preconditions
/// fail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitHierarchy {
    pub isolated: Option<f64>,
    pub inhibition_only: Option<f64>,
    pub fully_coupled: Option<f64>,
    /// All three limits coincide (inhibition factor identically one).
    pub collapsed: bool,
}

impl LimitHierarchy {
    pub fn strictly_ordered(&self) -> Option<bool> {
        match (self.isolated, self.inhibition_only, self.fully_coupled) {
            (Some(a), Some(b), Some(c)) => Some(a > b && b > c),
            _ => None,
        }
    }
}

pub fn limit_hierarchy(model: &ModelSpec) -> LimitHierarchy {
    let k = kappa_checked(model);
    let collapsed = matches!(model.phi_ba, InhibitionSpec::One);

    let isolated = if k.k1 < 1.0 { Some(model.mu_a / (1.0 - k.k1)) } else { None };

    let inhibition_only = if k.k3 < 1.0 && model.phi_ba.lipschitz() {
        let l_b = model.mu_b / (1.0 - k.k3);
        let s = k.k1 * model.phi_ba.value(k.k2 * l_b);
        if s < 1.0 {
            psi1(l_b, model).ok()
        } else {
            None
        }
    } else {
        None
    };

    let subcond = k.k3 < 1.0
        && k.k1 * model.phi_ba.value(k.k2 * model.mu_b / (1.0 - k.k3)) < 1.0;
    let fully_coupled = if model.feedback_active()
        && subcond
        && matches!(
            check_assumption_u(model),
            AssumptionU::Proven | AssumptionU::NumericallyHolds
        ) {
        fixed_point(model).ok().and_then(|ell| psi1(ell, model).ok())
    } else {
        None
    };

    LimitHierarchy { isolated, inhibition_only, fully_coupled, collapsed }
}

struct ReportBuilder {
    kappas: Kappas,
    ab: Option<AbParams>,
    checks: Checks,
    convexity: bool,
    heuristic: Option<PhaseTransition>,
}

impl ReportBuilder {
    fn done(
        self,
        regime: Regime,
        rule: &str,
        ell: Option<f64>,
        limit_a: Limit,
        limit_b: Limit,
    ) -> LongTimeReport {
        LongTimeReport {
            kappas: self.kappas,
            ab: self.ab,
            regime,
            ell,
            limit_a,
            limit_b,
            checks: self.checks,
            rule: rule.to_string(),
            conjecture_convex: self.convexity,
            threshold_heuristic: self.heuristic,
            tolerances: Tolerances {
                fixed_point_abs: FIXED_POINT_TOL,
                uniqueness_margin: U_MARGIN,
            },
        }
    }

    fn outside(self, rule: &str) -> LongTimeReport {
        self.done(Regime::OutsideTheory, rule, None, Limit::Unknown, Limit::Unknown)
    }
}

/// Decision tree over the coupling structure and kappa parameters.
///
/// Exact criticality (`k1 == 1` or `k3 == 1` where the parameter matters) is
/// reported as [`Regime::OutsideTheory`]; so is active discontinuous
/// inhibition, for which only the threshold heuristic is attached.
pub fn classify_regime(model: &ModelSpec) -> LongTimeReport {
    let k = kappa_checked(model);
    let inhib = model.inhibition_active();
    let feed = model.feedback_active();

    let ab = ab_params(model).ok();
    let subcond = if k.k3 < 1.0 {
        k.k1 * model.phi_ba.value(k.k2 * model.mu_b / (1.0 - k.k3)) < 1.0
    } else {
        false
    };
    let assumption_u = check_assumption_u(model);
    let ub_in_admissible = if subcond { UbInI::Guaranteed } else { UbInI::Unknown };
    let builder = ReportBuilder {
        kappas: k,
        ab,
        checks: Checks { subcritical_condition: subcond, assumption_u, ub_in_admissible },
        convexity: model.phi_ba.is_convex(),
        heuristic: None,
    };

    if inhib && !model.phi_ba.lipschitz() {
        let mut builder = builder;
        builder.heuristic = indicator_phase_transition(model).ok();
        return builder.outside("outside-theory.discontinuous-inhibition");
    }

    match (inhib, feed) {
        (false, false) => classify_decoupled(model, k, builder),
        (true, false) => classify_inhibition_only(model, k, builder),
        (false, true) => classify_feedback_only(model, k, builder),
        (true, true) => classify_full(model, k, builder),
    }
}

fn isolated_limit(k1: f64, mu: f64) -> Option<Limit> {
    if k1 == 1.0 {
        None
    } else if k1 < 1.0 {
        Some(Limit::Finite(mu / (1.0 - k1)))
    } else if mu > 0.0 {
        Some(Limit::Infinite)
    } else {
        Some(Limit::Finite(0.0))
    }
}

fn classify_decoupled(model: &ModelSpec, k: Kappas, b: ReportBuilder) -> LongTimeReport {
    let (la, lb) = match (isolated_limit(k.k1, model.mu_a), isolated_limit(k.k3, model.mu_b)) {
        (Some(la), Some(lb)) => (la, lb),
        _ => return b.outside("outside-theory.critical-boundary"),
    };
    let (regime, rule) = match (la, lb) {
        (Limit::Infinite, _) => (Regime::DecoupledASuper, "decoupled.a-supercritical"),
        (_, Limit::Infinite) => (Regime::DecoupledBSuper, "decoupled.b-supercritical"),
        _ => (Regime::DecoupledBothSub, "decoupled.both-subcritical"),
    };
    b.done(regime, rule, None, la, lb)
}

fn classify_inhibition_only(model: &ModelSpec, k: Kappas, b: ReportBuilder) -> LongTimeReport {
    if k.k3 == 1.0 {
        return b.outside("outside-theory.critical-boundary");
    }
    if k.k3 > 1.0 {
        if model.mu_b > 0.0 {
            return b.done(
                Regime::InhibOnlyBSuperAKilled,
                "inhibition-only.b-supercritical-a-killed",
                None,
                Limit::Finite(0.0),
                Limit::Infinite,
            );
        }
        // mu_B = 0 above criticality: B stays silent, A is effectively isolated
        return classify_inhibited_a(model, k, 0.0, b);
    }
    let l_b = model.mu_b / (1.0 - k.k3);
    classify_inhibited_a(model, k, l_b, b)
}

/// Population A against a B-population settled at `l_b`, with no feedback.
fn classify_inhibited_a(model: &ModelSpec, k: Kappas, l_b: f64, b: ReportBuilder) -> LongTimeReport {
    let phi = model.phi_ba.value(k.k2 * l_b);
    let s = k.k1 * phi;
    if s == 1.0 {
        return b.outside("outside-theory.critical-boundary");
    }
    if s < 1.0 {
        let l_a = model.mu_a * phi / (1.0 - s);
        b.done(
            Regime::InhibOnlySub,
            "inhibition-only.subcritical",
            None,
            Limit::Finite(l_a),
            Limit::Finite(l_b),
        )
    } else if model.mu_a > 0.0 {
        b.done(
            Regime::InhibOnlyASuper,
            "inhibition-only.a-supercritical",
            None,
            Limit::Infinite,
            Limit::Finite(l_b),
        )
    } else {
        b.done(
            Regime::InhibOnlySub,
            "inhibition-only.subcritical",
            None,
            Limit::Finite(0.0),
            Limit::Finite(l_b),
        )
    }
}

fn classify_feedback_only(model: &ModelSpec, k: Kappas, b: ReportBuilder) -> LongTimeReport {
    if k.k1 == 1.0 || k.k3 == 1.0 {
        return b.outside("outside-theory.critical-boundary");
    }
    if k.k1 > 1.0 && model.mu_a > 0.0 {
        return b.done(
            Regime::FeedbackOnlyBothSuper,
            "feedback-only.both-supercritical",
            None,
            Limit::Infinite,
            Limit::Infinite,
        );
    }
    // A settles (possibly at zero when mu_A = 0 above criticality)
    let l_a = if k.k1 < 1.0 { model.mu_a / (1.0 - k.k1) } else { 0.0 };
    if k.k3 > 1.0 {
        let input = model.mu_b + model.phi_ab.value(k.k4 * l_a);
        if input > 0.0 {
            return b.done(
                Regime::FeedbackOnlyBSuper,
                "feedback-only.b-supercritical",
                None,
                Limit::Finite(l_a),
                Limit::Infinite,
            );
        }
        return b.done(
            Regime::FeedbackOnlyBothSub,
            "feedback-only.both-subcritical",
            None,
            Limit::Finite(0.0),
            Limit::Finite(0.0),
        );
    }
    let l_b = (model.mu_b + model.phi_ab.value(k.k4 * l_a)) / (1.0 - k.k3);
    b.done(
        Regime::FeedbackOnlyBothSub,
        "feedback-only.both-subcritical",
        None,
        Limit::Finite(l_a),
        Limit::Finite(l_b),
    )
}

fn classify_full(model: &ModelSpec, k: Kappas, mut b: ReportBuilder) -> LongTimeReport {
    if k.k3 == 1.0 {
        return b.outside("outside-theory.critical-boundary");
    }
    if k.k3 > 1.0 {
        if model.mu_b > 0.0 || model.mu_a > 0.0 {
            return b.done(
                Regime::FullCoupledBSuperAKilled,
                "full-coupling.b-supercritical-a-killed",
                None,
                Limit::Finite(0.0),
                Limit::Infinite,
            );
        }
        // no drive anywhere: intensities are identically zero
        return b.done(
            Regime::FullCoupledConvergent,
            "full-coupling.quiescent",
            Some(0.0),
            Limit::Finite(0.0),
            Limit::Finite(0.0),
        );
    }
    if model.mu_a == 0.0 {
        // A never activates; B settles at its isolated limit
        let ell = model.mu_b / (1.0 - k.k3);
        b.checks.ub_in_admissible = UbInI::Guaranteed;
        return b.done(
            Regime::FullCoupledConvergent,
            "full-coupling.convergent-fixed-point",
            Some(ell),
            Limit::Finite(0.0),
            Limit::Finite(ell),
        );
    }
    let ell = match fixed_point(model) {
        Ok(v) => v,
        Err(_) => return b.outside("outside-theory.numerical-failure"),
    };
    let u_holds = matches!(
        b.checks.assumption_u,
        AssumptionU::Proven | AssumptionU::NumericallyHolds
    );
    // certified convergence needs both the uniqueness condition and the
    // admissibility of the liminf, which only the subcriticality condition
    // guarantees a priori; anything else stays a candidate (it may still
    // converge, and if it does the limit is (psi1(ell), ell))
    if u_holds && b.checks.subcritical_condition {
        let l_a = match psi1(ell, model) {
            Ok(v) => v,
            Err(_) => return b.outside("outside-theory.numerical-failure"),
        };
        b.done(
            Regime::FullCoupledConvergent,
            "full-coupling.convergent-fixed-point",
            Some(ell),
            Limit::Finite(l_a),
            Limit::Finite(ell),
        )
    } else {
        let rule = if u_holds {
            "full-coupling.uncertified-admissibility"
        } else {
            "full-coupling.oscillation-candidate"
        };
        b.done(
            Regime::FullCoupledOscillatoryCandidate,
            rule,
            Some(ell),
            Limit::Unknown,
            Limit::Unknown,
        )
    }
}
