//! Ground-truth solver. In the eigenbasis the stationarity condition
//! collapses to one scalar equation for the solution norm, so instances
//! with spectral storage are solved to near machine precision.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::RegQuadProblem;

/// Solves `min f` for `p > 2` (use [`RegQuadProblem::closed_form_p2`] at
/// `p = 2`, or [`solve_stationary`] to dispatch).
///
/// The minimizer is `x* = (A + s r^(p-2) I)^(-1) b` where `r = ||x*||`
/// solves `h(r) = r - phi(r) = 0` with
/// `phi(r) = sqrt( sum_i  bt_i^2 / (lambda_i + s r^(p-2))^2 )` and
/// `bt = U^T b`. `h` is strictly increasing, so bisection-safeguarded
/// Newton converges to the unique root; `tol` bounds `|h(r)| / max(1, r)`.
pub fn exact_solve(problem: &RegQuadProblem, tol: f64) -> Result<DVector<f64>> {
    if problem.p() == 2.0 {
        return Err(Error::Unsupported(
            "p = 2 has a closed form; this root-finder handles p > 2".to_string(),
        ));
    }
    let (p, s) = (problem.p(), problem.s());
    let lambda = problem.matrix().eigenvalues();
    let b_norm = problem.b().norm();
    if b_norm == 0.0 {
        return Ok(DVector::zeros(problem.dim()));
    }
    // Coefficients of b in the eigenbasis.
    let b_tilde = match problem.matrix().factor() {
        Some(u) => u.transpose() * problem.b(),
        None => problem.b().clone(),
    };

    let phi_squared = |shift: f64| -> f64 {
        lambda
            .iter()
            .zip(b_tilde.iter())
            .map(|(&lam, &bt)| (bt / (lam + shift)).powi(2))
            .sum()
    };

    let h = |r: f64| -> f64 { r - phi_squared(s * r.powf(p - 2.0)).sqrt() };

    // At stationarity (mu + s r^(p-2)) r <= ||b||, so s r^(p-1) <= ||b||
    // bounds the root; double defensively in case of rounding at the edge.
    let mut hi = (b_norm / s).powf(1.0 / (p - 1.0)).max(1.0);
    let mut doubles = 0;
    while h(hi) < 0.0 {
        hi *= 2.0;
        doubles += 1;
        if doubles > 100 {
            return Err(Error::Numerical(
                "failed to bracket the solution norm from above".to_string(),
            ));
        }
    }
    let mut lo = 0.0f64; // h(0+) <= 0 always: phi >= 0, and b != 0.
    let mut r = 0.5 * hi;
    for _ in 0..200 {
        let value = h(r);
        if value.abs() <= tol * r.max(1.0) {
            break;
        }
        if value > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        // h'(r) = 1 + s(p-2) r^(p-3) * sum bt^2/(lam+shift)^3 / phi.
        let shift = s * r.powf(p - 2.0);
        let phi = phi_squared(shift).sqrt();
        let weighted: f64 = lambda
            .iter()
            .zip(b_tilde.iter())
            .map(|(&lam, &bt)| bt * bt / (lam + shift).powi(3))
            .sum();
        let slope = 1.0 + s * (p - 2.0) * r.powf(p - 3.0) * weighted / phi;
        let newton = r - value / slope;
        r = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }

    let shift = s * r.powf(p - 2.0);
    let solution_eigen =
        DVector::from_iterator(problem.dim(), lambda.iter().zip(b_tilde.iter()).map(|(&lam, &bt)| bt / (lam + shift)));
    Ok(match problem.matrix().factor() {
        Some(u) => u * solution_eigen,
        None => solution_eigen,
    })
}

/// Minimizer for any `p >= 2`: closed form at `p = 2`, secular root above.
pub fn solve_stationary(problem: &RegQuadProblem, tol: f64) -> Result<DVector<f64>> {
    if problem.p() == 2.0 {
        problem.closed_form_p2()
    } else {
        exact_solve(problem, tol)
    }
}
