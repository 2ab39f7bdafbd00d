//! First-order and Krylov-subspace solvers.
//!
//! All iterative methods start from the origin, log one [`IterRecord`] per
//! iterate, and report cumulative oracle costs, so traces from different
//! methods (and from the adversarial oracle in [`crate::resist`]) are
//! directly comparable. Gradient descent and the composite step run against
//! the [`FirstOrderOracle`] trait rather than a concrete problem: the same
//! loop serves plain instances and the resisting oracle.

mod composite;
mod exact;
mod gd;
mod krylov;

pub use composite::{composite_gm_run, secular_root};
pub use exact::{exact_solve, solve_stationary};
pub use gd::{adaptive_gd_run, gd_run, StepRule};
pub use krylov::krylov_run;

use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{FirstOrderInfo, OracleCounter, RegQuadProblem};

/// Shared solver options.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Maximum number of steps; a run emits at most `max_iters + 1` records.
    pub max_iters: usize,
    /// Stop once the gradient norm falls below this; `None` picks
    /// `1e-12 * max(1, ||grad f(0)||)`.
    pub grad_tol: Option<f64>,
    /// Initial smoothness estimate for the adaptive method.
    pub m0: f64,
    /// Relative tolerance for inner scalar root-finding.
    pub inner_tol: f64,
    /// Keep every iterate vector (needed to replay a run against the
    /// adversary); the scalar per-iteration records are always kept.
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            grad_tol: None,
            m0: 1.0,
            inner_tol: 1e-12,
            record_trace: false,
        }
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalStatus {
    /// Gradient tolerance reached (or the search space was exhausted and the
    /// iterate is optimal over it).
    Converged,
    /// Iteration budget spent.
    IterBudget,
    /// No acceptable step found; progress is below floating-point resolution.
    Stalled,
}

/// State at one iterate. `step_or_m` holds the step size (gradient methods),
/// the accepted smoothness estimate (adaptive method), or nothing on the
/// terminal row; `counter` is the cumulative oracle cost at logging time.
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub iter: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub step_or_m: Option<f64>,
    pub counter: OracleCounter,
}

/// Full run log.
#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub records: Vec<IterRecord>,
    pub status: TerminalStatus,
    pub final_x: DVector<f64>,
    pub counter: OracleCounter,
    /// Optimal value when the instance carries its solution.
    pub f_star: Option<f64>,
    /// All iterates, present when [`SolverConfig::record_trace`] was set.
    pub iterates: Option<Vec<DVector<f64>>>,
}

impl SolverTrace {
    pub fn final_record(&self) -> &IterRecord {
        self.records.last().expect("a trace always has the starting record")
    }

    /// Columns: `iter,f,f_gap,grad_norm,step_or_M,matvecs`; `f_gap` stays
    /// blank when the optimal value is unknown.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["iter", "f", "f_gap", "grad_norm", "step_or_M", "matvecs"])?;
        for record in &self.records {
            let f_gap = self
                .f_star
                .map(|f_star| format!("{}", record.f - f_star))
                .unwrap_or_default();
            let step = record.step_or_m.map(|v| format!("{v}")).unwrap_or_default();
            out.write_record([
                record.iter.to_string(),
                format!("{}", record.f),
                f_gap,
                format!("{}", record.grad_norm),
                step,
                record.counter.matvecs.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// What the gradient methods are allowed to see: problem constants and a
/// priced first-order oracle. Implemented by plain problems and by the
/// resisting oracle.
pub trait FirstOrderOracle {
    fn dim(&self) -> usize;
    /// Regularization exponent `p`.
    fn exponent(&self) -> f64;
    /// Regularization weight `s`.
    fn reg_weight(&self) -> f64;
    /// Largest eigenvalue of the quadratic part.
    fn lipschitz(&self) -> f64;
    /// `||x*||` when the instance is built around a known solution.
    fn solution_norm(&self) -> Option<f64> {
        None
    }
    /// `f(x*)` when available; fills the `f_gap` trace column.
    fn optimal_value(&self) -> Option<f64> {
        None
    }
    fn first_order(&mut self, x: &DVector<f64>) -> Result<FirstOrderInfo>;
    /// Value-only query. The default costs a full query; plain problems
    /// override it with the cheaper price.
    fn value(&mut self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.first_order(x)?.value)
    }
    /// Gradient-only query, same pricing convention as [`Self::value`].
    fn gradient(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.first_order(x)?.gradient)
    }
    fn counter(&self) -> OracleCounter;
}

/// Oracle view of a plain instance.
pub struct ProblemOracle<'a> {
    problem: &'a RegQuadProblem,
    counter: OracleCounter,
    f_star: Option<f64>,
}

impl<'a> ProblemOracle<'a> {
    pub fn new(problem: &'a RegQuadProblem) -> Self {
        let f_star = problem
            .known_solution()
            .map(|x_star| problem.first_order_at(x_star).value);
        Self { problem, counter: OracleCounter::default(), f_star }
    }

    pub fn problem(&self) -> &RegQuadProblem {
        self.problem
    }
}

impl FirstOrderOracle for ProblemOracle<'_> {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn exponent(&self) -> f64 {
        self.problem.p()
    }

    fn reg_weight(&self) -> f64 {
        self.problem.s()
    }

    fn lipschitz(&self) -> f64 {
        self.problem.lipschitz()
    }

    fn solution_norm(&self) -> Option<f64> {
        self.problem.known_solution().map(|x| x.norm())
    }

    fn optimal_value(&self) -> Option<f64> {
        self.f_star
    }

    fn first_order(&mut self, x: &DVector<f64>) -> Result<FirstOrderInfo> {
        Ok(self.problem.eval(x, &mut self.counter))
    }

    fn value(&mut self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.problem.eval_value(x, &mut self.counter))
    }

    fn gradient(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.problem.eval_grad(x, &mut self.counter))
    }

    fn counter(&self) -> OracleCounter {
        self.counter
    }
}

/// Step size that guarantees `f(x_k) - f(x_{k+1}) >= (eta/2) ||grad f(x_k)||^2`
/// for any smoothness estimate `m >= M*`:
/// `eta = min( 1/m, (p / (s 2^(p-2) ||g||^(p-2)))^(1/(p-1)) )`.
pub fn eta_theoretical(m: f64, s: f64, p: f64, grad_norm: f64) -> f64 {
    let reg_limited = if p == 2.0 {
        2.0 / s
    } else if grad_norm == 0.0 {
        f64::INFINITY
    } else {
        (p / (s * 2f64.powf(p - 2.0) * grad_norm.powf(p - 2.0))).powf(1.0 / (p - 1.0))
    };
    (1.0 / m).min(reg_limited)
}

/// Resolves the gradient tolerance once the starting gradient norm is known.
fn resolve_tol(config: &SolverConfig, first_grad_norm: f64) -> f64 {
    config.grad_tol.unwrap_or(1e-12 * first_grad_norm.max(1.0))
}

fn require_finite(value: f64, what: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{what} is not finite: {value}")))
    }
}
