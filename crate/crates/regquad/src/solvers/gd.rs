//! Gradient descent: fixed step, theoretical step, and the adaptive variant
//! that searches for a workable smoothness estimate by doubling.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{m_star_from, FirstOrderInfo};

use super::{
    eta_theoretical, require_finite, resolve_tol, FirstOrderOracle, IterRecord, SolverConfig,
    SolverTrace, TerminalStatus,
};

/// How gradient descent picks its step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `min(1/M*, (p / (s 2^(p-2) ||g||^(p-2)))^(1/(p-1)))` with `M*` built
    /// from the solution norm: the one passed here, or the instance's own.
    /// Supported for `p > 2` only.
    Theoretical { r_star: Option<f64> },
    /// Constant step size; no knowledge of the solution required.
    Fixed(f64),
}

/// Gradient descent from the origin.
pub fn gd_run(
    oracle: &mut dyn FirstOrderOracle,
    rule: StepRule,
    config: &SolverConfig,
) -> Result<SolverTrace> {
    let (p, s, l) = (oracle.exponent(), oracle.reg_weight(), oracle.lipschitz());
    let m_star = match rule {
        StepRule::Theoretical { r_star } => {
            if p <= 2.0 {
                return Err(Error::Unsupported(
                    "the theoretical step size covers p > 2; use a fixed step \
                     or the composite method at p = 2"
                        .to_string(),
                ));
            }
            let r_star = r_star.or_else(|| oracle.solution_norm()).ok_or_else(|| {
                Error::InvalidArgument(
                    "the theoretical step size needs the solution norm; pass it \
                     explicitly or use an instance that carries its solution"
                        .to_string(),
                )
            })?;
            Some(m_star_from(l, s, p, r_star))
        }
        StepRule::Fixed(eta) => {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "fixed step size must be positive and finite, got {eta}"
                )));
            }
            None
        }
    };

    let mut x = DVector::zeros(oracle.dim());
    let mut records = Vec::new();
    let mut iterates = config.record_trace.then(Vec::new);
    let mut tol = None;
    let mut status = TerminalStatus::IterBudget;

    for k in 0..=config.max_iters {
        let info = oracle.first_order(&x)?;
        require_finite(info.value, "objective value")?;
        let grad_norm = info.gradient.norm();
        let tol = *tol.get_or_insert_with(|| resolve_tol(config, grad_norm));
        if let Some(iterates) = iterates.as_mut() {
            iterates.push(x.clone());
        }
        if grad_norm <= tol || k == config.max_iters {
            records.push(IterRecord {
                iter: k,
                f: info.value,
                grad_norm,
                step_or_m: None,
                counter: oracle.counter(),
            });
            if grad_norm <= tol {
                status = TerminalStatus::Converged;
            }
            break;
        }
        let eta = match (rule, m_star) {
            (StepRule::Theoretical { .. }, Some(m)) => eta_theoretical(m, s, p, grad_norm),
            (StepRule::Fixed(eta), _) => eta,
            (StepRule::Theoretical { .. }, None) => unreachable!("checked above"),
        };
        records.push(IterRecord {
            iter: k,
            f: info.value,
            grad_norm,
            step_or_m: Some(eta),
            counter: oracle.counter(),
        });
        x.axpy(-eta, &info.gradient, 1.0);
    }

    Ok(SolverTrace {
        records,
        status,
        final_x: x,
        counter: oracle.counter(),
        f_star: oracle.optimal_value(),
        iterates,
    })
}

/// Largest number of doublings tried before declaring a stall; progress
/// below this resolution is floating-point noise, not curvature.
const MAX_DOUBLINGS: usize = 200;

/// Adaptive gradient descent. Each iteration quarters the current
/// smoothness estimate and doubles until the step satisfies
/// `f(x_k) - f(x_+) >= (eta_+ / 2) ||g_k||^2` (so the first candidate is
/// `M_k / 2`); the estimate can both shrink and grow, and accepted
/// estimates never exceed `max(2 M*, M_0)`. Needs neither `L` nor `||x*||`.
pub fn adaptive_gd_run(
    oracle: &mut dyn FirstOrderOracle,
    config: &SolverConfig,
) -> Result<SolverTrace> {
    let (p, s) = (oracle.exponent(), oracle.reg_weight());
    if !(config.m0.is_finite() && config.m0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "initial smoothness estimate must be positive, got {}",
            config.m0
        )));
    }

    let mut x = DVector::zeros(oracle.dim());
    let mut info = oracle.first_order(&x)?;
    let mut m = config.m0;
    let mut records = Vec::new();
    let mut iterates = config.record_trace.then(Vec::new);
    let mut tol = None;
    let mut status = TerminalStatus::IterBudget;

    for k in 0..=config.max_iters {
        require_finite(info.value, "objective value")?;
        let grad_norm = info.gradient.norm();
        let tol = *tol.get_or_insert_with(|| resolve_tol(config, grad_norm));
        if let Some(iterates) = iterates.as_mut() {
            iterates.push(x.clone());
        }
        if grad_norm <= tol || k == config.max_iters {
            records.push(IterRecord {
                iter: k,
                f: info.value,
                grad_norm,
                step_or_m: None,
                counter: oracle.counter(),
            });
            if grad_norm <= tol {
                status = TerminalStatus::Converged;
            }
            break;
        }

        let mut m_plus = m / 4.0;
        let mut accepted = None;
        for _ in 0..MAX_DOUBLINGS {
            m_plus *= 2.0;
            let eta = eta_theoretical(m_plus, s, p, grad_norm);
            let mut x_plus = x.clone();
            x_plus.axpy(-eta, &info.gradient, 1.0);
            let f_plus = oracle.value(&x_plus)?;
            if info.value - f_plus >= 0.5 * eta * grad_norm * grad_norm {
                accepted = Some((x_plus, f_plus));
                break;
            }
        }
        let Some((x_plus, f_plus)) = accepted else {
            records.push(IterRecord {
                iter: k,
                f: info.value,
                grad_norm,
                step_or_m: None,
                counter: oracle.counter(),
            });
            status = TerminalStatus::Stalled;
            break;
        };
        records.push(IterRecord {
            iter: k,
            f: info.value,
            grad_norm,
            step_or_m: Some(m_plus),
            counter: oracle.counter(),
        });
        m = m_plus;
        x = x_plus;
        let gradient = oracle.gradient(&x)?;
        info = FirstOrderInfo { value: f_plus, gradient };
    }

    Ok(SolverTrace {
        records,
        status,
        final_x: x,
        counter: oracle.counter(),
        f_star: oracle.optimal_value(),
        iterates,
    })
}
