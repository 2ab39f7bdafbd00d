//! Krylov-subspace solver: the iterate reported at row `k` of the trace
//! minimizes `f` exactly over `span{b, Ab, ..., A^(2k-2) b}` — two Krylov
//! orders per completed round, the largest subspace a first-order method
//! can have uncovered by then. The basis comes from the Lanczos process
//! with full reorthogonalization; the reduced problem is a small instance
//! of the same problem class and is solved by the exact secular solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{OracleCounter, RegQuadProblem, SpectralMatrix};

use super::{exact::solve_stationary, IterRecord, SolverConfig, SolverTrace, TerminalStatus};

/// Relative spectral slack tolerated before a reduced eigenvalue is deemed
/// genuinely negative instead of rounding noise.
const EIGENVALUE_SLACK: f64 = 1e-8;

struct Lanczos<'a> {
    problem: &'a RegQuadProblem,
    /// Orthonormal basis of the Krylov space; first column is `b/||b||`.
    vs: Vec<DVector<f64>>,
    /// Diagonal of the projected tridiagonal matrix.
    alphas: Vec<f64>,
    /// Off-diagonal of the projected tridiagonal matrix.
    betas: Vec<f64>,
    breakdown_tol: f64,
    exhausted: bool,
}

impl<'a> Lanczos<'a> {
    fn new(problem: &'a RegQuadProblem, b_norm: f64) -> Self {
        Self {
            problem,
            vs: vec![problem.b().unscale(b_norm)],
            alphas: Vec::new(),
            betas: Vec::new(),
            breakdown_tol: 1e-12 * b_norm,
            exhausted: false,
        }
    }

    /// Number of completed columns of the projected matrix.
    fn order(&self) -> usize {
        self.alphas.len()
    }

    /// Processes one more basis vector; `Ok(false)` once the Krylov space is
    /// exhausted (an invariant subspace contains `b`).
    fn extend(&mut self, counter: &mut OracleCounter) -> Result<bool> {
        if self.exhausted {
            return Ok(false);
        }
        let j = self.alphas.len();
        counter.matvecs += 1;
        let mut w = self.problem.matrix().matvec(&self.vs[j]);
        let alpha = self.vs[j].dot(&w);
        w.axpy(-alpha, &self.vs[j], 1.0);
        if j > 0 {
            w.axpy(-self.betas[j - 1], &self.vs[j - 1], 1.0);
        }
        // Full reorthogonalization, two passes: the adversarial spectra are
        // deliberately ill-conditioned and three-term recurrences alone lose
        // orthogonality there.
        for _ in 0..2 {
            for v in &self.vs {
                let overlap = v.dot(&w);
                w.axpy(-overlap, v, 1.0);
            }
        }
        self.alphas.push(alpha);
        let beta = w.norm();
        if beta < self.breakdown_tol {
            self.exhausted = true;
        } else {
            let v_new = w.unscale(beta);
            let worst =
                self.vs.iter().map(|v| v.dot(&v_new).abs()).fold(0.0f64, f64::max);
            if worst > 1e-6 {
                return Err(Error::Numerical(format!(
                    "Lanczos basis lost orthogonality: max overlap {worst:.3e}"
                )));
            }
            self.betas.push(beta);
            self.vs.push(v_new);
        }
        Ok(true)
    }

    /// Minimizer of `f` restricted to the first `m` basis vectors, found by
    /// eigendecomposing the tridiagonal projection and solving the reduced
    /// problem — itself an instance of the same class — exactly.
    fn minimizer(&self, m: usize, b_norm: f64, inner_tol: f64) -> Result<DVector<f64>> {
        let t = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                self.alphas[i]
            } else if i.abs_diff(j) == 1 {
                self.betas[i.min(j)]
            } else {
                0.0
            }
        });
        let eigen = t.symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| {
            eigen.eigenvalues[i].partial_cmp(&eigen.eigenvalues[j]).expect("finite")
        });
        let slack = EIGENVALUE_SLACK * self.problem.lipschitz().max(1.0);
        let mut eigenvalues = Vec::with_capacity(m);
        for &i in &order {
            let lambda = eigen.eigenvalues[i];
            if lambda < -slack {
                return Err(Error::Numerical(format!(
                    "projected matrix has eigenvalue {lambda:.3e} on a \
                     positive-semidefinite instance"
                )));
            }
            eigenvalues.push(lambda.max(0.0));
        }
        let factor =
            DMatrix::from_fn(m, m, |row, col| eigen.eigenvectors[(row, order[col])]);
        // The basis starts at b/||b||, so the reduced right-hand side is
        // exactly ||b|| e_1.
        let mut b_reduced = DVector::zeros(m);
        b_reduced[0] = b_norm;
        let reduced = RegQuadProblem::new(
            SpectralMatrix::dense(eigenvalues, factor)?,
            b_reduced,
            self.problem.p(),
            self.problem.s(),
            None,
        )?;
        let y = solve_stationary(&reduced, inner_tol)?;
        let mut x = DVector::zeros(self.problem.dim());
        for (coefficient, v) in y.iter().zip(&self.vs) {
            x.axpy(*coefficient, v, 1.0);
        }
        Ok(x)
    }
}

/// Runs the Krylov solver; iterate `k` is optimal over a `(2k-1)`-dimensional
/// Krylov space (or the whole reachable space once it is exhausted, after
/// which the run reports convergence).
pub fn krylov_run(problem: &RegQuadProblem, config: &SolverConfig) -> Result<SolverTrace> {
    let b_norm = problem.b().norm();
    let f_star =
        problem.known_solution().map(|x_star| problem.first_order_at(x_star).value);
    let mut counter = OracleCounter::default();
    let mut records = Vec::new();
    let mut iterates = config.record_trace.then(Vec::new);

    let mut x = DVector::zeros(problem.dim());
    let info = problem.eval(&x, &mut counter);
    let grad_norm = info.gradient.norm();
    let tol = config.grad_tol.unwrap_or(1e-12 * grad_norm.max(1.0));
    records.push(IterRecord {
        iter: 0,
        f: info.value,
        grad_norm,
        step_or_m: None,
        counter,
    });
    if let Some(iterates) = iterates.as_mut() {
        iterates.push(x.clone());
    }
    let mut status = TerminalStatus::IterBudget;
    if b_norm == 0.0 || grad_norm <= tol {
        return Ok(SolverTrace {
            records,
            status: TerminalStatus::Converged,
            final_x: x,
            counter,
            f_star,
            iterates,
        });
    }

    let mut lanczos = Lanczos::new(problem, b_norm);
    let mut last_m = 0;
    for k in 1..=config.max_iters {
        let target = 2 * k - 1;
        while lanczos.order() < target {
            if !lanczos.extend(&mut counter)? {
                break;
            }
        }
        let m = lanczos.order().min(target);
        if m == last_m {
            // No new directions since the last iterate: it is optimal over
            // the whole reachable space.
            status = TerminalStatus::Converged;
            break;
        }
        last_m = m;
        x = lanczos.minimizer(m, b_norm, config.inner_tol)?;
        let info = problem.eval(&x, &mut counter);
        let grad_norm = info.gradient.norm();
        records.push(IterRecord {
            iter: k,
            f: info.value,
            grad_norm,
            step_or_m: None,
            counter,
        });
        if let Some(iterates) = iterates.as_mut() {
            iterates.push(x.clone());
        }
        if grad_norm <= tol || (lanczos.exhausted && m == lanczos.order()) {
            status = TerminalStatus::Converged;
            break;
        }
    }

    Ok(SolverTrace { records, status, final_x: x, counter, f_star, iterates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::random_dense_instance;
    use crate::solvers::exact_solve;
    use approx::assert_abs_diff_eq;

    #[test]
    fn one_dimensional_krylov_space_converges_in_one_iteration() {
        // b = e1 aligned with an eigenvector: the Krylov space stops growing
        // after one vector and the first iterate is globally optimal.
        let problem = RegQuadProblem::new(
            SpectralMatrix::diagonal(vec![2.0, 5.0, 7.0]).unwrap(),
            DVector::from_vec(vec![3.0, 0.0, 0.0]),
            3.0,
            1.0,
            None,
        )
        .unwrap();
        let trace = krylov_run(&problem, &SolverConfig::default()).unwrap();
        assert_eq!(trace.status, TerminalStatus::Converged);
        assert_eq!(trace.final_record().iter, 1);
        // (2 + r) r = 3 at the stationary point: x = (1, 0, 0).
        assert_abs_diff_eq!(trace.final_x[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(trace.final_x[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn full_space_iterate_matches_exact_solver() {
        let problem = random_dense_instance(3, 15, 3.0, 0.5);
        // 2k-1 >= 15 at k = 8: the basis spans everything.
        let config = SolverConfig { max_iters: 11, ..SolverConfig::default() };
        let trace = krylov_run(&problem, &config).unwrap();
        let exact = exact_solve(&problem, 1e-14).unwrap();
        assert!(
            (trace.final_x - &exact).norm() <= 1e-8 * exact.norm().max(1.0),
            "full-space Krylov iterate must agree with the exact solver"
        );
    }

    #[test]
    fn objective_decreases_monotonically_along_iterates() {
        // Nested subspaces: each iterate minimizes over a superset.
        let problem = random_dense_instance(5, 24, 2.5, 0.3);
        let config = SolverConfig { max_iters: 12, ..SolverConfig::default() };
        let trace = krylov_run(&problem, &config).unwrap();
        for pair in trace.records.windows(2) {
            assert!(pair[1].f <= pair[0].f + 1e-12);
        }
    }

    #[test]
    fn reduced_problem_fidelity() {
        // f(V y) computed in the ambient space matches the reduced objective
        // value: the basis is orthonormal to rounding error.
        let problem = random_dense_instance(9, 20, 3.0, 1.0);
        let b_norm = problem.b().norm();
        let mut counter = OracleCounter::default();
        let mut lanczos = Lanczos::new(&problem, b_norm);
        for _ in 0..7 {
            assert!(lanczos.extend(&mut counter).unwrap());
        }
        let x = lanczos.minimizer(7, b_norm, 1e-14).unwrap();
        // Reduced objective at y = V' x: recompute through the coordinates.
        let y = DVector::from_iterator(7, lanczos.vs.iter().take(7).map(|v| v.dot(&x)));
        let t = DMatrix::from_fn(7, 7, |i, j| {
            if i == j {
                lanczos.alphas[i]
            } else if i.abs_diff(j) == 1 {
                lanczos.betas[i.min(j)]
            } else {
                0.0
            }
        });
        let reduced_value = 0.5 * y.dot(&(&t * &y)) - b_norm * y[0]
            + problem.s() / problem.p() * y.norm().powf(problem.p());
        let ambient_value = problem.first_order_at(&x).value;
        assert_abs_diff_eq!(
            reduced_value,
            ambient_value,
            epsilon = 1e-10 * ambient_value.abs().max(1.0)
        );
    }

    #[test]
    fn zero_rhs_stops_at_origin() {
        let problem = RegQuadProblem::new(
            SpectralMatrix::diagonal(vec![1.0, 2.0]).unwrap(),
            DVector::zeros(2),
            3.0,
            1.0,
            None,
        )
        .unwrap();
        let trace = krylov_run(&problem, &SolverConfig::default()).unwrap();
        assert_eq!(trace.status, TerminalStatus::Converged);
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.final_x.norm(), 0.0);
    }

    #[test]
    fn p2_reduced_solves_agree_with_closed_form() {
        let problem = random_dense_instance(11, 12, 2.0, 0.8);
        let config = SolverConfig { max_iters: 8, ..SolverConfig::default() };
        let trace = krylov_run(&problem, &config).unwrap();
        let closed = problem.closed_form_p2().unwrap();
        assert!((trace.final_x - &closed).norm() <= 1e-8 * closed.norm().max(1.0));
    }

    #[test]
    fn matvec_accounting_covers_basis_and_records() {
        let problem = random_dense_instance(2, 30, 3.0, 0.5);
        let config = SolverConfig { max_iters: 6, ..SolverConfig::default() };
        let trace = krylov_run(&problem, &config).unwrap();
        // One matvec per record (trace evaluation) plus one per Lanczos
        // column; the basis for iterate k has at most 2k-1 columns.
        let records = trace.records.len() as u64;
        let max_columns = 2 * (records - 1) - 1;
        assert!(trace.counter.matvecs >= records);
        assert!(trace.counter.matvecs <= records + max_columns);
    }
}
