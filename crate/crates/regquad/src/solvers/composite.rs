//! Composite gradient mapping: linearize only the quadratic part, keep the
//! regularizer exact, and solve the radial proximal subproblem in closed
//! form up to a scalar root.

use nalgebra::DVector;

use crate::error::{Error, Result};

use super::{
    require_finite, resolve_tol, FirstOrderOracle, IterRecord, SolverConfig, SolverTrace,
    TerminalStatus,
};

/// Root of the secular equation `(L + s rho^(p-2)) rho = target` on
/// `rho >= 0`. The left side is strictly increasing, so the root is unique;
/// solved by Newton steps safeguarded with bisection.
pub fn secular_root(l: f64, s: f64, p: f64, target: f64, tol: f64) -> Result<f64> {
    let weights_ok = l > 0.0 || s > 0.0;
    if !(l >= 0.0 && s >= 0.0 && weights_ok && p >= 2.0 && target >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "secular equation needs L, s >= 0 (not both zero), p >= 2, target >= 0 \
             (got L = {l}, s = {s}, p = {p}, target = {target})"
        )));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    if s == 0.0 {
        return Ok(target / l);
    }
    if p == 2.0 {
        return Ok(target / (l + s));
    }
    // s * hi^(p-1) = target already clears the target, and so does
    // L * hi = target when L > 0; start from the tighter bracket.
    let mut hi = (target / s).powf(1.0 / (p - 1.0));
    if l > 0.0 {
        hi = hi.min(target / l);
    }
    let mut lo = 0.0f64;
    let mut rho = hi;
    for _ in 0..200 {
        let value = l * rho + s * rho.powf(p - 1.0) - target;
        if value.abs() <= tol * target.max(1.0) {
            return Ok(rho);
        }
        if value > 0.0 {
            hi = rho;
        } else {
            lo = rho;
        }
        let slope = l + s * (p - 1.0) * rho.powf(p - 2.0);
        let newton = rho - value / slope;
        rho = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * hi {
            return Ok(rho);
        }
    }
    Err(Error::Numerical(format!(
        "secular equation did not converge: bracket [{lo}, {hi}]"
    )))
}

/// Composite gradient-mapping method from the origin. One iteration maps
/// `x` to the minimizer of
/// `q(x) + <grad q(x), y - x> + (L/2)||y - x||^2 + (s/p)||y||^p`,
/// which is `u / (L + s rho^(p-2))` with `u = Lx - grad q(x)` and `rho`
/// the secular root at `target = ||u||`.
pub fn composite_gm_run(
    oracle: &mut dyn FirstOrderOracle,
    config: &SolverConfig,
) -> Result<SolverTrace> {
    let (p, s, l) = (oracle.exponent(), oracle.reg_weight(), oracle.lipschitz());
    if l <= 0.0 {
        return Err(Error::InvalidArgument(
            "composite step needs a positive quadratic smoothness constant".to_string(),
        ));
    }

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
        // grad q(x) = grad f(x) - s ||x||^(p-2) x.
        let x_norm = x.norm();
        let reg_coeff = if p == 2.0 { s } else { s * x_norm.powf(p - 2.0) };
        let mut u = info.gradient.scale(-1.0);
        u.axpy(l + reg_coeff, &x, 1.0); // u = Lx - grad q(x)
        let rho = secular_root(l, s, p, u.norm(), config.inner_tol)?;
        let denom = l + if p == 2.0 { s } else { s * rho.powf(p - 2.0) };
        let beta = 1.0 / denom;
        records.push(IterRecord {
            iter: k,
            f: info.value,
            grad_norm,
            step_or_m: Some(beta),
            counter: oracle.counter(),
        });
        x = u.scale(beta);
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RegQuadProblem, SpectralMatrix};
    use crate::solvers::ProblemOracle;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn secular_root_satisfies_its_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let l = rng.random::<f64>() * 10.0;
            let s = 0.01 + rng.random::<f64>() * 5.0;
            let p = 2.0 + rng.random::<f64>() * 3.0;
            let target = rng.random::<f64>() * 100.0;
            let rho = secular_root(l, s, p, target, 1e-14).unwrap();
            let lhs = l * rho + s * rho.powf(p - 1.0);
            assert_abs_diff_eq!(lhs, target, epsilon = 1e-9 * target.max(1.0));
        }
    }

    #[test]
    fn secular_root_closed_forms() {
        assert_eq!(secular_root(2.0, 1.0, 3.0, 0.0, 1e-14).unwrap(), 0.0);
        // p = 2: rho = target / (L + s).
        assert_relative_eq!(
            secular_root(3.0, 1.0, 2.0, 8.0, 1e-14).unwrap(),
            2.0,
            max_relative = 1e-15
        );
        // p = 3, L = 1, s = 1, target = 2: (1 + rho) rho = 2, rho = 1.
        assert_relative_eq!(
            secular_root(1.0, 1.0, 3.0, 2.0, 1e-14).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        // s = 0 degenerates to the linear equation.
        assert_relative_eq!(
            secular_root(4.0, 0.0, 3.0, 2.0, 1e-14).unwrap(),
            0.5,
            max_relative = 1e-15
        );
    }

    fn cubic_1d() -> RegQuadProblem {
        RegQuadProblem::new(
            SpectralMatrix::diagonal(vec![2.0]).unwrap(),
            DVector::from_vec(vec![3.0]),
            3.0,
            1.0,
            Some(DVector::from_vec(vec![1.0])),
        )
        .unwrap()
    }

    #[test]
    fn composite_matches_scalar_recursion() {
        // d = 1: u_k = (L - a) x_k + b with a = 2 = L, so u_k = b = 3 every
        // iteration and x_{k+1} is the fixed point immediately: the secular
        // root of (2 + rho) rho = 3 is rho = 1.
        let problem = cubic_1d();
        let mut oracle = ProblemOracle::new(&problem);
        let trace = composite_gm_run(
            &mut oracle,
            &SolverConfig { max_iters: 5, grad_tol: Some(1e-11), ..Default::default() },
        )
        .unwrap();
        assert_eq!(trace.status, TerminalStatus::Converged);
        assert_abs_diff_eq!(trace.final_x[0], 1.0, epsilon = 1e-11);
        // One productive step plus the terminal record.
        assert!(trace.records.len() <= 3);
    }

    #[test]
    fn composite_decreases_monotonically_on_random_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dim = 8;
        let eigenvalues: Vec<f64> = (0..dim).map(|i| 0.5 + i as f64).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let problem = RegQuadProblem::new(
            SpectralMatrix::diagonal(eigenvalues).unwrap(),
            DVector::from_vec(b),
            3.0,
            0.5,
            None,
        )
        .unwrap();
        let mut oracle = ProblemOracle::new(&problem);
        let trace = composite_gm_run(
            &mut oracle,
            &SolverConfig { max_iters: 400, grad_tol: Some(1e-10), ..Default::default() },
        )
        .unwrap();
        assert_eq!(trace.status, TerminalStatus::Converged);
        for pair in trace.records.windows(2) {
            assert!(pair[1].f <= pair[0].f + 1e-14);
        }
        // Converged point is stationary for the full objective.
        assert!(problem.stationarity_residual(&trace.final_x) <= 1e-9);
    }

    #[test]
    fn composite_iterate_norm_equals_secular_root() {
        let problem = cubic_1d();
        let mut oracle = ProblemOracle::new(&problem);
        let trace = composite_gm_run(
            &mut oracle,
            &SolverConfig { max_iters: 1, record_trace: true, ..Default::default() },
        )
        .unwrap();
        let iterates = trace.iterates.as_ref().unwrap();
        // ||x_1|| must solve (L + s rho) rho = ||L x_0 - grad q(x_0)|| = 3.
        let rho = secular_root(2.0, 1.0, 3.0, 3.0, 1e-14).unwrap();
        assert_abs_diff_eq!(iterates[1].norm(), rho, epsilon = 1e-12);
    }
}
