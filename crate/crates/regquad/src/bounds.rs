//! Closed-form complexity envelopes.
//!
//! Every rate that the solvers in this crate provably satisfy (or provably
//! cannot beat) is evaluated here with its explicit constants, so that
//! experiment traces can be sandwiched between curves instead of compared
//! against O-notation. Upper bounds apply to gradient descent with the
//! theoretical step size; the lower bounds are attained by the adversarial
//! instances from [`crate::instances`].
//!
//! Exponentials are evaluated in log space; values that would fall below
//! `1e-300` are clamped to `0` and flagged, and parameter combinations that
//! collapse a bound (condition number 1, zero prefactor) are flagged as
//! degenerate instead of producing infinities.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{modified_condition_number, CondNumberForm};

/// Smallest representable bound before clamping to zero.
const MIN_LN: f64 = -690.0; // ln(1e-300) ~ -690.78

/// A bound evaluation together with the guard flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundValue {
    pub value: f64,
    /// The parameters collapse this bound (condition number 1, zero
    /// prefactor); the value is a convention, not an informative bound.
    pub degenerate: bool,
    /// The true value lies below `1e-300` and was clamped to `0`.
    pub underflow: bool,
}

impl BoundValue {
    fn finite(value: f64) -> Self {
        Self { value, degenerate: false, underflow: false }
    }

    fn degenerate(value: f64) -> Self {
        Self { value, degenerate: true, underflow: false }
    }

    fn underflow() -> Self {
        Self { value: 0.0, degenerate: false, underflow: true }
    }
}

/// `prefactor * exp(ln_decay)` with zero-prefactor and underflow guards.
fn decayed(prefactor: f64, ln_decay: f64) -> BoundValue {
    if prefactor == 0.0 {
        return BoundValue::degenerate(0.0);
    }
    if prefactor.ln() + ln_decay < MIN_LN {
        return BoundValue::underflow();
    }
    BoundValue::finite(prefactor * ln_decay.exp())
}

fn require(cond: bool, message: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(message.to_string()))
    }
}

fn require_p_above_2(p: f64, what: &str) -> Result<()> {
    if p > 2.0 {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("{what} requires p > 2, got p = {p}")))
    }
}

/// Functional-residual upper bound for gradient descent with backtracked or
/// constant smoothness estimates bounded by `max(2 M*, M0)`:
///
/// ```text
/// F_k <= F0 * [ 8 max(2M*, M0) / (4s)^(2/p) * (p-1)^(2(p-1)/p)
///               * ((p F0)^((p-2)/p) (p-2) k + 1)^(-1) ]^(p/(p-2))
/// ```
pub fn upper_bound_gd(
    f0: f64,
    m_star: f64,
    m0: f64,
    s: f64,
    p: f64,
    k: usize,
) -> Result<BoundValue> {
    require_p_above_2(p, "gradient descent rate")?;
    require(s > 0.0, "s must be > 0")?;
    require(f0 > 0.0, "F0 must be > 0")?;
    let numerator = 8.0 * (2.0 * m_star).max(m0) / (4.0 * s).powf(2.0 / p)
        * (p - 1.0).powf(2.0 * (p - 1.0) / p);
    let denominator = (p * f0).powf((p - 2.0) / p) * (p - 2.0) * k as f64 + 1.0;
    let ln_bracket = numerator.ln() - denominator.ln();
    Ok(decayed(f0, p / (p - 2.0) * ln_bracket))
}

/// Bound on the functional residual at the origin:
/// `f(0) - f* <= 2^-3 ((p-1) s)^(-2/(p-2)) M*^(p/(p-2))`.
pub fn init_residual_bound(m_star: f64, s: f64, p: f64) -> Result<BoundValue> {
    require_p_above_2(p, "origin residual bound")?;
    require(s > 0.0, "s must be > 0")?;
    require(m_star > 0.0, "M* must be > 0")?;
    let ln_value = -3.0 * 2f64.ln() - 2.0 / (p - 2.0) * ((p - 1.0) * s).ln()
        + p / (p - 2.0) * m_star.ln();
    if ln_value < MIN_LN {
        return Ok(BoundValue::underflow());
    }
    Ok(BoundValue::finite(ln_value.exp()))
}

/// One-step-method distance lower bound `r exp(-N / (Qbar - 1))` with
/// `Qbar = (L + s(p-1)r^(p-2)) / (mu + s(p-1)r^(p-2))`.
pub fn lb_one_step_distance(
    l: f64,
    s: f64,
    p: f64,
    r: f64,
    n: usize,
    mu: f64,
) -> Result<BoundValue> {
    let q_bar = modified_condition_number(mu, l, s, p, r, CondNumberForm::OneStep)?;
    if q_bar <= 1.0 {
        return Ok(BoundValue::degenerate(0.0));
    }
    Ok(decayed(r, -(n as f64) / (q_bar - 1.0)))
}

/// One-step-method residual lower bound at the theory-optimal radius
/// `r = (L / (s(p-1)N))^(1/(p-2))`:
/// `f(x_N) - f* >= s / (p 2^(p-2) e^p) * (L / (s(p-1)N))^(p/(p-2))`.
pub fn lb_one_step_residual(l: f64, s: f64, p: f64, n: usize) -> Result<BoundValue> {
    require_p_above_2(p, "one-step residual lower bound")?;
    require(s > 0.0 && l > 0.0 && n >= 1, "requires s > 0, L > 0, N >= 1")?;
    let prefactor = s / (p * 2f64.powf(p - 2.0));
    let ln_radius_term = p / (p - 2.0) * (l / (s * (p - 1.0) * n as f64)).ln();
    Ok(decayed(prefactor, ln_radius_term - p))
}

/// Gradient-norm companion of [`lb_one_step_residual`]:
/// `||grad f(x_N)|| >= s 2^(2-p) ((p-1) e^p)^(-(p-1)/p)
///                     * (L / (s(p-1)N))^((p-1)/(p-2))`.
pub fn lb_one_step_grad(l: f64, s: f64, p: f64, n: usize) -> Result<BoundValue> {
    require_p_above_2(p, "one-step gradient lower bound")?;
    require(s > 0.0 && l > 0.0 && n >= 1, "requires s > 0, L > 0, N >= 1")?;
    let prefactor = s * 2f64.powf(2.0 - p);
    let ln_decay = -(p - 1.0) / p * ((p - 1.0).ln() + p)
        + (p - 1.0) / (p - 2.0) * (l / (s * (p - 1.0) * n as f64)).ln();
    Ok(decayed(prefactor, ln_decay))
}

/// Uniform polynomial approximation constant
/// `Theta(c) = 2 / (a^n + a^-n)` with `a = (sqrt(c)+1)/(sqrt(c)-1)`.
pub fn theta_c(c: f64, n: usize) -> Result<BoundValue> {
    require(c >= 1.0, "condition number must be >= 1")?;
    if c == 1.0 {
        return Ok(BoundValue::degenerate(1.0));
    }
    let sqrt_c = c.sqrt();
    let ln_a = ((sqrt_c + 1.0) / (sqrt_c - 1.0)).ln();
    let t = n as f64 * ln_a;
    if t > 700.0 {
        // a^-n is negligible; Theta ~ 2 a^-n.
        return Ok(decayed(2.0, -t));
    }
    Ok(BoundValue::finite(2.0 / (t.exp() + (-t).exp())))
}

/// Elementary lower bound on [`theta_c`]:
/// `Theta(c) >= 1 / (exp(2n / (sqrt(c)-1)) + 1)`.
pub fn theta_lower(c: f64, n: usize) -> Result<BoundValue> {
    require(c >= 1.0, "condition number must be >= 1")?;
    if c == 1.0 {
        return Ok(BoundValue::degenerate(1.0));
    }
    let t = 2.0 * n as f64 / (c.sqrt() - 1.0);
    if t > 700.0 {
        return Ok(decayed(1.0, -t));
    }
    Ok(BoundValue::finite(1.0 / (t.exp() + 1.0)))
}

fn q_star(mu: f64, l: f64, s: f64, p: f64, r: f64) -> Result<f64> {
    modified_condition_number(mu, l, s, p, r, CondNumberForm::Multistep)
}

fn check_simplified(mu: f64, q: f64, simplified: bool) -> Result<()> {
    if simplified && (mu != 0.0 || q < 2.0) {
        return Err(Error::InvalidArgument(format!(
            "simplified multi-step bounds require mu = 0 and Q* >= 2 (got mu = {mu}, Q* = {q})"
        )));
    }
    Ok(())
}

/// Exponent `16 N sqrt(s r^(p-2) / L)` of the simplified (mu = 0) forms.
fn simplified_rate(l: f64, s: f64, p: f64, r: f64, n: usize) -> f64 {
    16.0 * n as f64 * (s * r.powf(p - 2.0) / l).sqrt()
}

/// Multi-step (Krylov-class) distance lower bound
/// `||x_N - x*|| >= r exp(-8N / (sqrt(Q*) - 1))`,
/// or `r exp(-16 N sqrt(s r^(p-2) / L))` in simplified form.
pub fn lb_multistep_distance(
    mu: f64,
    l: f64,
    s: f64,
    p: f64,
    r: f64,
    n: usize,
    simplified: bool,
) -> Result<BoundValue> {
    let q = q_star(mu, l, s, p, r)?;
    check_simplified(mu, q, simplified)?;
    if q <= 1.0 {
        return Ok(BoundValue::degenerate(0.0));
    }
    let ln_decay = if simplified {
        -simplified_rate(l, s, p, r, n)
    } else {
        -8.0 * n as f64 / (q.sqrt() - 1.0)
    };
    Ok(decayed(r, ln_decay))
}

/// Multi-step residual lower bound
/// `f(x_N) - f* >= (s / (p 2^(p-2))) r^p exp(-8pN / (sqrt(Q*) - 1))`.
pub fn lb_multistep_residual(
    mu: f64,
    l: f64,
    s: f64,
    p: f64,
    r: f64,
    n: usize,
    simplified: bool,
) -> Result<BoundValue> {
    let q = q_star(mu, l, s, p, r)?;
    check_simplified(mu, q, simplified)?;
    if q <= 1.0 {
        return Ok(BoundValue::degenerate(0.0));
    }
    let prefactor = s / (p * 2f64.powf(p - 2.0)) * r.powf(p);
    let ln_decay = if simplified {
        -p * simplified_rate(l, s, p, r, n)
    } else {
        -8.0 * p * n as f64 / (q.sqrt() - 1.0)
    };
    Ok(decayed(prefactor, ln_decay))
}

/// Multi-step gradient-norm lower bound
/// `||grad f(x_N)|| >= 2^(2-p) s (p-1)^(-(p-1)/p) r^(p-1)
///                     * exp(-8(p-1)N / (sqrt(Q*) - 1))`.
pub fn lb_multistep_grad(
    mu: f64,
    l: f64,
    s: f64,
    p: f64,
    r: f64,
    n: usize,
    simplified: bool,
) -> Result<BoundValue> {
    let q = q_star(mu, l, s, p, r)?;
    check_simplified(mu, q, simplified)?;
    if q <= 1.0 {
        return Ok(BoundValue::degenerate(0.0));
    }
    let prefactor =
        2f64.powf(2.0 - p) * s * (p - 1.0).powf(-(p - 1.0) / p) * r.powf(p - 1.0);
    let ln_decay = if simplified {
        -(p - 1.0) * simplified_rate(l, s, p, r, n)
    } else {
        -8.0 * (p - 1.0) * n as f64 / (q.sqrt() - 1.0)
    };
    Ok(decayed(prefactor, ln_decay))
}

/// Radius that maximizes the multi-step residual bound after `N` steps:
/// `r = (L / (3 s N^2))^(1/(p-2))`. With this choice `Q* = 3N^2 + 1`.
pub fn auto_radius_multistep(l: f64, s: f64, p: f64, n: usize) -> Result<f64> {
    require_p_above_2(p, "auto radius")?;
    require(s > 0.0 && l > 0.0 && n >= 1, "requires s > 0, L > 0, N >= 1")?;
    Ok((l / (3.0 * s * (n as f64).powi(2))).powf(1.0 / (p - 2.0)))
}

/// Fully explicit worst-case residual bound after `N` steps of any
/// Krylov-subspace method, at the automatic radius:
/// `(s / (p 2^(p-2))) (L / (3sN^2))^(p/(p-2)) exp(-16p / sqrt(3))`.
pub fn lb_final_residual(l: f64, s: f64, p: f64, n: usize) -> Result<BoundValue> {
    require_p_above_2(p, "final residual lower bound")?;
    require(s > 0.0 && l > 0.0 && n >= 1, "requires s > 0, L > 0, N >= 1")?;
    let prefactor = s / (p * 2f64.powf(p - 2.0));
    let ln_decay = p / (p - 2.0) * (l / (3.0 * s * (n as f64).powi(2))).ln()
        - 16.0 * p / 3f64.sqrt();
    Ok(decayed(prefactor, ln_decay))
}

/// Gradient-norm companion of [`lb_final_residual`]:
/// `s 2^(2-p) (p-1)^(-(p-1)/p) (L / (3sN^2))^((p-1)/(p-2)) exp(-16(p-1)/sqrt(3))`.
pub fn lb_final_grad(l: f64, s: f64, p: f64, n: usize) -> Result<BoundValue> {
    require_p_above_2(p, "final gradient lower bound")?;
    require(s > 0.0 && l > 0.0 && n >= 1, "requires s > 0, L > 0, N >= 1")?;
    let prefactor = s * 2f64.powf(2.0 - p) * (p - 1.0).powf(-(p - 1.0) / p);
    let ln_decay = (p - 1.0) / (p - 2.0) * (l / (3.0 * s * (n as f64).powi(2))).ln()
        - 16.0 * (p - 1.0) / 3f64.sqrt();
    Ok(decayed(prefactor, ln_decay))
}

/// Strongly convex (p = 2) lower bounds with `Q* = (L+s)/(mu+s)`:
/// residual `>= s r^2 exp(-16N / (sqrt(Q*)-1))` and gradient norm
/// `>= s r exp(-8N / (sqrt(Q*)-1))`.
pub fn lb_strongly_convex(
    mu: f64,
    l: f64,
    s: f64,
    r: f64,
    n: usize,
) -> Result<(BoundValue, BoundValue)> {
    require(mu > 0.0 || s > 0.0, "requires mu > 0 or s > 0")?;
    require(l >= mu && mu >= 0.0 && s >= 0.0, "requires L >= mu >= 0 and s >= 0")?;
    let q = (l + s) / (mu + s);
    if q <= 1.0 {
        return Ok((BoundValue::degenerate(0.0), BoundValue::degenerate(0.0)));
    }
    let rate = 8.0 * n as f64 / (q.sqrt() - 1.0);
    Ok((decayed(s * r * r, -2.0 * rate), decayed(s * r, -rate)))
}

/// Envelope curve kinds, named after what they bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    UpperGd,
    LbOneStepDist,
    LbOneStepRes,
    LbOneStepGrad,
    LbMultiDist,
    LbMultiRes,
    LbMultiGrad,
    LbFinalRes,
    LbFinalGrad,
    LbStrongcvxRes,
    LbStrongcvxGrad,
    InitRes,
}

impl BoundKind {
    pub const ALL: [BoundKind; 12] = [
        BoundKind::UpperGd,
        BoundKind::LbOneStepDist,
        BoundKind::LbOneStepRes,
        BoundKind::LbOneStepGrad,
        BoundKind::LbMultiDist,
        BoundKind::LbMultiRes,
        BoundKind::LbMultiGrad,
        BoundKind::LbFinalRes,
        BoundKind::LbFinalGrad,
        BoundKind::LbStrongcvxRes,
        BoundKind::LbStrongcvxGrad,
        BoundKind::InitRes,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BoundKind::UpperGd => "upper-gd",
            BoundKind::LbOneStepDist => "lb-one-step-dist",
            BoundKind::LbOneStepRes => "lb-one-step-res",
            BoundKind::LbOneStepGrad => "lb-one-step-grad",
            BoundKind::LbMultiDist => "lb-multi-dist",
            BoundKind::LbMultiRes => "lb-multi-res",
            BoundKind::LbMultiGrad => "lb-multi-grad",
            BoundKind::LbFinalRes => "lb-final-res",
            BoundKind::LbFinalGrad => "lb-final-grad",
            BoundKind::LbStrongcvxRes => "lb-strongcvx-res",
            BoundKind::LbStrongcvxGrad => "lb-strongcvx-grad",
            BoundKind::InitRes => "init-res",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == text)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown bound kind `{text}`")))
    }
}

/// Parameters shared by the envelope kinds; fields that a given kind does
/// not use may stay NaN.
#[derive(Debug, Clone, Copy)]
pub struct BoundParams {
    pub p: f64,
    pub s: f64,
    pub mu: f64,
    pub l: f64,
    pub r: f64,
    pub m_star: f64,
    pub m0: f64,
    pub f0: f64,
    pub simplified: bool,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self {
            p: f64::NAN,
            s: f64::NAN,
            mu: f64::NAN,
            l: f64::NAN,
            r: f64::NAN,
            m_star: f64::NAN,
            m0: f64::NAN,
            f0: f64::NAN,
            simplified: false,
        }
    }
}

fn param(value: f64, name: &str, kind: BoundKind) -> Result<f64> {
    if value.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "bound kind `{}` requires parameter `{name}`",
            kind.as_str()
        )));
    }
    Ok(value)
}

/// A bound evaluated over a set of iteration counts, ready for CSV overlay.
#[derive(Debug, Clone)]
pub struct BoundEnvelope {
    pub kind: BoundKind,
    pub values: Vec<(usize, f64)>,
}

impl BoundEnvelope {
    pub fn evaluate(kind: BoundKind, params: &BoundParams, iters: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(iters.len());
        for &k in iters {
            values.push((k, Self::evaluate_at(kind, params, k)?.value));
        }
        Ok(Self { kind, values })
    }

    pub fn evaluate_at(kind: BoundKind, params: &BoundParams, k: usize) -> Result<BoundValue> {
        let p = *params;
        match kind {
            BoundKind::UpperGd => upper_bound_gd(
                param(p.f0, "f0", kind)?,
                param(p.m_star, "m_star", kind)?,
                param(p.m0, "m0", kind)?,
                param(p.s, "s", kind)?,
                param(p.p, "p", kind)?,
                k,
            ),
            BoundKind::LbOneStepDist => lb_one_step_distance(
                param(p.l, "l", kind)?,
                param(p.s, "s", kind)?,
                param(p.p, "p", kind)?,
                param(p.r, "r", kind)?,
                k,
                param(p.mu, "mu", kind)?,
            ),
            BoundKind::LbOneStepRes => lb_one_step_residual(
                param(p.l, "l", kind)?,
                param(p.s, "s", kind)?,
                param(p.p, "p", kind)?,
                k.max(1),
            ),
            BoundKind::LbOneStepGrad => lb_one_step_grad(
                param(p.l, "l", kind)?,
                param(p.s, "s", kind)?,
                param(p.p, "p", kind)?,
                k.max(1),
            ),
            BoundKind::LbMultiDist => lb_multistep_distance(
                param(p.mu, "mu", kind)?,
                param(p.l, "l", kind)?,
                param(p.s, "s", kind)?,
                param(p.p, "p", kind)?,
                param(p.r, "r", kind)?,
                k,
                p.simplified,
            ),
            BoundKind::LbMultiRes => lb_multistep_residual(
                param(p.mu, "mu", kind)?,
                param(p.l, "l", kind)?,
                param(p.s, "s", kind)?,
                param(p.p, "p", kind)?,
                param(p.r, "r", kind)?,
                k,
                p.simplified,
            ),
            BoundKind::LbMultiGrad => lb_multistep_grad(
                param(p.mu, "mu", kind)?,
                param(p.l, "l", kind)?,
                param(p.s, "s", kind)?,
                param(p.p, "p", kind)?,
                param(p.r, "r", kind)?,
                k,
                p.simplified,
            ),
            BoundKind::LbFinalRes => lb_final_residual(
                param(p.l, "l", kind)?,
                param(p.s, "s", kind)?,
                param(p.p, "p", kind)?,
                k.max(1),
            ),
            BoundKind::LbFinalGrad => lb_final_grad(
                param(p.l, "l", kind)?,
                param(p.s, "s", kind)?,
                param(p.p, "p", kind)?,
                k.max(1),
            ),
            BoundKind::LbStrongcvxRes => Ok(lb_strongly_convex(
                param(p.mu, "mu", kind)?,
                param(p.l, "l", kind)?,
                param(p.s, "s", kind)?,
                param(p.r, "r", kind)?,
                k,
            )?
            .0),
            BoundKind::LbStrongcvxGrad => Ok(lb_strongly_convex(
                param(p.mu, "mu", kind)?,
                param(p.l, "l", kind)?,
                param(p.s, "s", kind)?,
                param(p.r, "r", kind)?,
                k,
            )?
            .1),
            BoundKind::InitRes => init_residual_bound(
                param(p.m_star, "m_star", kind)?,
                param(p.s, "s", kind)?,
                param(p.p, "p", kind)?,
            ),
        }
    }

    /// Same CSV schema as solver traces use for overlays: iter, value, kind.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["iter", "value", "kind"])?;
        for (iter, value) in &self.values {
            out.write_record([
                iter.to_string(),
                format!("{value}"),
                self.kind.as_str().to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn loglog_slope(v1: f64, v2: f64, k1: f64, k2: f64) -> f64 {
        (v2.ln() - v1.ln()) / (k2.ln() - k1.ln())
    }

    #[test]
    fn upper_bound_gd_tail_slope_is_minus_p_over_p_minus_2() {
        for &p in &[2.5, 3.0, 4.0] {
            // The +1 inside the envelope decays like 1/k, so probe deep in
            // the tail where the power law dominates.
            let v1 = upper_bound_gd(1.0, 5.0, 1.0, 0.5, p, 1_000_000).unwrap().value;
            let v2 = upper_bound_gd(1.0, 5.0, 1.0, 0.5, p, 1_000_000_000).unwrap().value;
            let slope = loglog_slope(v1, v2, 1e6, 1e9);
            assert_abs_diff_eq!(slope, -p / (p - 2.0), epsilon = 1e-3);
        }
    }

    #[test]
    fn upper_bound_gd_is_non_increasing() {
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let v = upper_bound_gd(2.0, 10.0, 1.0, 0.1, 3.0, k).unwrap().value;
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn upper_bound_gd_rejects_p2() {
        assert!(matches!(
            upper_bound_gd(1.0, 1.0, 1.0, 1.0, 2.0, 1),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn init_residual_bound_hand_values() {
        // p=3, s=1, M*=2: 2^-3 * (2)^-2 * 2^3 = 1/4.
        assert_relative_eq!(
            init_residual_bound(2.0, 1.0, 3.0).unwrap().value,
            0.25,
            max_relative = 1e-14
        );
        // p=4, s=1, M*=1: 2^-3 * 3^-1 = 1/24.
        assert_relative_eq!(
            init_residual_bound(1.0, 1.0, 4.0).unwrap().value,
            1.0 / 24.0,
            max_relative = 1e-14
        );
        // Doubling M* multiplies by 2^(p/(p-2)).
        let a = init_residual_bound(3.0, 0.7, 3.0).unwrap().value;
        let b = init_residual_bound(6.0, 0.7, 3.0).unwrap().value;
        assert_relative_eq!(b / a, 8.0, max_relative = 1e-12);
    }

    #[test]
    fn one_step_distance_matches_hand_values() {
        // N=0 keeps the radius exactly.
        assert_eq!(lb_one_step_distance(2.0, 1.0, 3.0, 1.5, 0, 0.0).unwrap().value, 1.5);
        // r=1, s=1, p=3, L=2, N=1, mu=0: Qbar = (2+2)/2 = 2, exp(-1).
        assert_relative_eq!(
            lb_one_step_distance(2.0, 1.0, 3.0, 1.0, 1, 0.0).unwrap().value,
            (-1f64).exp(),
            max_relative = 1e-14
        );
        // Doubling N squares the decay factor.
        let d1 = lb_one_step_distance(2.0, 1.0, 3.0, 1.0, 3, 0.0).unwrap().value;
        let d2 = lb_one_step_distance(2.0, 1.0, 3.0, 1.0, 6, 0.0).unwrap().value;
        assert_relative_eq!(d2, d1 * d1, max_relative = 1e-12);
        // mu = L makes Qbar = 1 and collapses the bound.
        let flat = lb_one_step_distance(2.0, 1.0, 3.0, 1.0, 1, 2.0).unwrap();
        assert!(flat.degenerate);
        assert_eq!(flat.value, 0.0);
    }

    #[test]
    fn one_step_residual_hand_value_and_slope() {
        // p=3, L=1, s=1, N=1: (1/(3*2*e^3)) * (1/2)^3 = 1/(48 e^3).
        assert_relative_eq!(
            lb_one_step_residual(1.0, 1.0, 3.0, 1).unwrap().value,
            1.0 / (48.0 * 3f64.exp()),
            max_relative = 1e-13
        );
        for &p in &[2.5, 3.0, 4.0] {
            let v1 = lb_one_step_residual(1.0, 1.0, p, 100).unwrap().value;
            let v2 = lb_one_step_residual(1.0, 1.0, p, 10_000).unwrap().value;
            assert_abs_diff_eq!(
                loglog_slope(v1, v2, 1e2, 1e4),
                -p / (p - 2.0),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn one_step_grad_consistent_with_residual_exponents() {
        // grad bound ^ (p/(p-1)) and residual bound share the radius power.
        let p = 3.0;
        let v1 = lb_one_step_grad(1.0, 1.0, p, 10).unwrap().value;
        let v2 = lb_one_step_grad(1.0, 1.0, p, 1000).unwrap().value;
        assert_abs_diff_eq!(
            loglog_slope(v1, v2, 10.0, 1000.0),
            -(p - 1.0) / (p - 2.0),
            epsilon = 1e-9
        );
    }

    #[test]
    fn theta_hand_values_and_ordering() {
        assert_eq!(theta_c(4.0, 0).unwrap().value, 1.0);
        // c=9, n=1: a = 2, 2/(2 + 1/2) = 0.8.
        assert_relative_eq!(theta_c(9.0, 1).unwrap().value, 0.8, max_relative = 1e-15);
        let degenerate = theta_c(1.0, 5).unwrap();
        assert!(degenerate.degenerate);
        assert_eq!(degenerate.value, 1.0);
        for &c in &[1.0001, 1.5, 2.0, 9.0, 100.0, 1e4] {
            for n in 0..=100 {
                let t = theta_c(c, n).unwrap().value;
                let lower = theta_lower(c, n).unwrap().value;
                assert!(
                    t >= lower - 1e-15,
                    "theta ordering violated at c = {c}, n = {n}: {t} < {lower}"
                );
            }
        }
    }

    #[test]
    fn multistep_bounds_hand_values() {
        // N=0 keeps the prefactors exactly.
        assert_eq!(
            lb_multistep_distance(0.0, 3.0, 1.0, 3.0, 1.0, 0, false).unwrap().value,
            1.0
        );
        assert_relative_eq!(
            lb_multistep_residual(0.0, 3.0, 1.0, 3.0, 1.0, 0, false).unwrap().value,
            1.0 / 6.0,
            max_relative = 1e-15
        );
        // mu=0, L=3, s=1, p=3, r=1, N=1: Q* = 4, distance >= exp(-8).
        assert_relative_eq!(
            lb_multistep_distance(0.0, 3.0, 1.0, 3.0, 1.0, 1, false).unwrap().value,
            (-8f64).exp(),
            max_relative = 1e-13
        );
        // mu = L with r = 0 gives Q* = 1: degenerate.
        let flat = lb_multistep_residual(2.0, 2.0, 1.0, 3.0, 0.0, 1, false).unwrap();
        assert!(flat.degenerate);
        assert_eq!(flat.value, 0.0);
    }

    #[test]
    fn theta_chain_dominates_exp_form() {
        // r theta_c(Q, 2N) >= 2r theta_lower(Q, 2N) >= r exp(-8N/(sqrt(Q)-1)).
        let r = 1.0;
        for &q in &[1.2, 2.0, 4.0, 13.0, 301.0, 1e4] {
            for &n in &[1usize, 2, 5, 10, 50, 100] {
                let sharp = r * theta_c(q, 2 * n).unwrap().value;
                let mid = 2.0 * r * theta_lower(q, 2 * n).unwrap().value;
                let exp_form = r * (-8.0 * n as f64 / (q.sqrt() - 1.0)).exp();
                assert!(sharp >= mid - 1e-18, "q = {q}, n = {n}");
                assert!(mid >= exp_form - 1e-18, "q = {q}, n = {n}");
            }
        }
    }

    #[test]
    fn simplified_forms_require_mu_zero_and_q_at_least_2() {
        assert!(lb_multistep_distance(0.5, 3.0, 1.0, 3.0, 1.0, 1, true).is_err());
        // Q* = 1 + L/(s r) = 4 with these values, fine:
        assert!(lb_multistep_distance(0.0, 3.0, 1.0, 3.0, 1.0, 1, true).is_ok());
        // Tiny L pushes Q* below 2.
        assert!(lb_multistep_distance(0.0, 0.5, 1.0, 3.0, 1.0, 1, true).is_err());
    }

    #[test]
    fn final_bounds_have_constant_exponential_factor_and_matching_slope() {
        let p = 3.0;
        // The exponential factor is N-independent, so the ratio between two
        // N values is a pure power law.
        let v1 = lb_final_residual(1.0, 1.0, p, 10).unwrap().value;
        let v2 = lb_final_residual(1.0, 1.0, p, 1000).unwrap().value;
        assert_abs_diff_eq!(
            loglog_slope(v1, v2, 10.0, 1000.0),
            -2.0 * p / (p - 2.0),
            epsilon = 1e-3
        );
        assert_abs_diff_eq!(loglog_slope(v1, v2, 10.0, 1000.0), -6.0, epsilon = 1e-3);
        let g1 = lb_final_grad(1.0, 1.0, p, 10).unwrap().value;
        let g2 = lb_final_grad(1.0, 1.0, p, 1000).unwrap().value;
        assert_abs_diff_eq!(
            loglog_slope(g1, g2, 10.0, 1000.0),
            -2.0 * (p - 1.0) / (p - 2.0),
            epsilon = 1e-3
        );
    }

    #[test]
    fn auto_radius_gives_condition_number_3n2_plus_1() {
        for &n in &[1usize, 5, 20, 100] {
            for &(l, s, p) in &[(1.0, 1.0, 3.0), (10.0, 0.1, 2.5), (2.0, 0.5, 4.0)] {
                let r = auto_radius_multistep(l, s, p, n).unwrap();
                let q = crate::model::modified_condition_number(
                    0.0,
                    l,
                    s,
                    p,
                    r,
                    crate::model::CondNumberForm::Multistep,
                )
                .unwrap();
                assert_relative_eq!(q, 3.0 * (n as f64).powi(2) + 1.0, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn trust_region_scaling_limit_slope_approaches_minus_2() {
        // With s = 1/D^p the final-bound slope -2p/(p-2) tends to -2 as p
        // grows: large p makes the regularizer an indicator of the ball of
        // radius D.
        let d: f64 = 2.0;
        let mut prev_gap = f64::INFINITY;
        for &p in &[4.0, 8.0, 16.0, 32.0] {
            let s = d.powf(-p);
            let v1 = lb_final_residual(1.0, s, p, 10).unwrap().value;
            let v2 = lb_final_residual(1.0, s, p, 1000).unwrap().value;
            let slope = loglog_slope(v1, v2, 10.0, 1000.0);
            let gap = (slope + 2.0).abs();
            assert!(gap < prev_gap, "slope gap must shrink with p");
            assert_abs_diff_eq!(slope, -2.0 * p / (p - 2.0), epsilon = 1e-3);
            prev_gap = gap;
        }
        assert!(prev_gap < 0.14);
    }

    #[test]
    fn strongly_convex_bounds() {
        // N=0 keeps the prefactors.
        let (res, grad) = lb_strongly_convex(1.0, 9.0, 2.0, 1.5, 0).unwrap();
        assert_eq!(res.value, 2.0 * 1.5 * 1.5);
        assert_eq!(grad.value, 2.0 * 1.5);
        // s=0 zeroes the bound and flags it.
        let (res, grad) = lb_strongly_convex(1.0, 9.0, 0.0, 1.0, 1).unwrap();
        assert!(res.degenerate && grad.degenerate);
        assert_eq!((res.value, grad.value), (0.0, 0.0));
        // mu = L with s > 0 degenerates.
        let (res, _) = lb_strongly_convex(2.0, 2.0, 1.0, 1.0, 3).unwrap();
        assert!(res.degenerate);
    }

    #[test]
    fn underflow_clamps_to_zero_with_flag() {
        let v = lb_multistep_distance(0.0, 1.0, 1.0, 3.0, 1.0, 100_000, false).unwrap();
        assert_eq!(v.value, 0.0);
        assert!(v.underflow);
    }

    #[test]
    fn envelope_evaluates_and_serializes() {
        let params = BoundParams {
            p: 3.0,
            s: 1.0,
            mu: 0.0,
            l: 1.0,
            r: 1.0,
            ..BoundParams::default()
        };
        let iters: Vec<usize> = (0..=10).collect();
        let envelope =
            BoundEnvelope::evaluate(BoundKind::LbMultiRes, &params, &iters).unwrap();
        assert_eq!(envelope.values.len(), 11);
        // Lower bounds are non-increasing in k.
        for w in envelope.values.windows(2) {
            assert!(w[1].1 <= w[0].1);
        }
        let mut buffer = Vec::new();
        envelope.write_csv(&mut buffer).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        assert!(text.starts_with("iter,value,kind\n"));
        assert!(text.contains("lb-multi-res"));
        // Missing parameters are reported, not defaulted.
        let missing = BoundEnvelope::evaluate(BoundKind::UpperGd, &params, &iters);
        assert!(missing.is_err());
    }
}
