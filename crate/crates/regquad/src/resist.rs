//! Adaptive adversary for first-order methods.
//!
//! The oracle serves exact values and gradients of a regularized quadratic
//! whose orthogonal factor is rebuilt on the fly: whenever a query leaves the
//! subspace the method was entitled to explore, a Householder reflection
//! rotates the unexplored part of the spectrum so that the query lands inside
//! a two-orders-larger Krylov subspace, without changing any answer already
//! served. After any run, [`ResistingOracle::finalize`] returns the single
//! fixed instance that would have produced the identical transcript.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::instances::{build_multistep, InstanceSpec};
use crate::model::{FirstOrderInfo, OracleCounter, RegQuadProblem, SpectralMatrix};
use crate::solvers::FirstOrderOracle;

/// A query point is deemed inside the protected subspace when its
/// out-of-subspace component is below `IN_SUBSPACE_TOL * (1 + ||x||)`.
const IN_SUBSPACE_TOL: f64 = 1e-10;

/// Reflections with a shorter reflector than this act as the identity.
const DEGENERATE_REFLECTOR_TOL: f64 = 1e-12;

/// Relative threshold for deciding the Krylov chain has saturated.
const RANK_TOL: f64 = 1e-10;

/// Replay agreement required of the finalized instance.
const REPLAY_TOL: f64 = 1e-8;

/// One logged oracle exchange.
#[derive(Clone, Debug)]
pub struct QueryRecord {
    pub point: DVector<f64>,
    pub answer: FirstOrderInfo,
}

/// The fixed instance equivalent to an adversary session, plus the evidence
/// that it reproduces the session's transcript.
#[derive(Debug)]
pub struct FinalizedAdversary {
    pub problem: RegQuadProblem,
    pub queries: Vec<QueryRecord>,
    /// Largest relative deviation between a logged answer and the finalized
    /// instance's oracle, over the whole transcript.
    pub max_replay_deviation: f64,
    /// Number of rounds that actually rotated the spectrum.
    pub rotations: usize,
    /// Number of nonzero queries served.
    pub rounds: usize,
}

/// Adaptive first-order adversary for a Chebyshev-spectrum instance.
pub struct ResistingOracle {
    lambdas: DVector<f64>,
    b: DVector<f64>,
    b_norm: f64,
    p: f64,
    s: f64,
    /// Solution norm; invariant under the orthogonal updates.
    r: f64,
    f_star: f64,
    /// Solution of the unrotated base instance.
    base_solution: DVector<f64>,
    /// Accumulated orthogonal factor, so the current matrix is `U diag(Λ) Uᵀ`.
    u: DMatrix<f64>,
    rotated: bool,
    /// Orthonormal Krylov basis of the current function, grown lazily.
    basis: Vec<DVector<f64>>,
    saturated: bool,
    rounds: usize,
    rotations: usize,
    budget: usize,
    log: Vec<QueryRecord>,
    counter: OracleCounter,
}

impl ResistingOracle {
    /// Builds the adversary around a multi-step instance description.
    pub fn from_spec(spec: &InstanceSpec) -> Result<Self> {
        let parts = build_multistep(spec)?;
        let problem = parts.problem;
        let solution = problem
            .known_solution()
            .ok_or_else(|| Error::InvalidArgument("adversary base needs a known solution".into()))?
            .clone();
        let f_star = problem.first_order_at(&solution).value;
        let lambdas = problem.matrix().eigenvalues().clone();
        let b = problem.b().clone();
        let b_norm = b.norm();
        if b_norm == 0.0 {
            return Err(Error::Degenerate("adversary needs a nonzero right-hand side".into()));
        }
        let max_dim = max_krylov_dim(&lambdas, &b);
        let dim = lambdas.len();
        Ok(Self {
            lambdas,
            b,
            b_norm,
            p: problem.p(),
            s: problem.s(),
            r: parts.r,
            f_star,
            base_solution: solution,
            u: DMatrix::identity(dim, dim),
            rotated: false,
            basis: Vec::new(),
            saturated: false,
            rounds: 0,
            rotations: 0,
            budget: max_dim / 2,
            log: Vec::new(),
            counter: OracleCounter::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    /// Nonzero queries served so far.
    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// Rounds that rotated the spectrum.
    pub fn rotations(&self) -> usize {
        self.rotations
    }

    /// Maximum number of nonzero queries this instance can absorb.
    pub fn budget(&self) -> usize {
        self.budget
    }

    /// Solution norm of every function the adversary may end up committing to.
    pub fn solution_norm(&self) -> f64 {
        self.r
    }

    pub fn optimal_value(&self) -> f64 {
        self.f_star
    }

    /// Matrix-vector product with the current rotated matrix.
    fn a_matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.rotated {
            let mut y = self.u.tr_mul(x);
            y.component_mul_assign(&self.lambdas);
            &self.u * y
        } else {
            x.component_mul(&self.lambdas)
        }
    }

    /// Exact oracle of the current function.
    fn oracle_at(&self, x: &DVector<f64>) -> FirstOrderInfo {
        let ax = self.a_matvec(x);
        let norm = x.norm();
        let reg_coeff = if self.p == 2.0 { self.s } else { self.s * norm.powf(self.p - 2.0) };
        let value = 0.5 * x.dot(&ax) - self.b.dot(x)
            + self.s / self.p * norm.powf(self.p);
        let gradient = &ax - &self.b + x * reg_coeff;
        FirstOrderInfo { value, gradient }
    }

    /// Grows the Krylov basis of the current function up to `target` vectors
    /// (or until the chain saturates), modified Gram–Schmidt with one
    /// reorthogonalization pass.
    fn ensure_basis(&mut self, target: usize) {
        if self.basis.is_empty() {
            self.basis.push(self.b.unscale(self.b_norm));
        }
        while !self.saturated && self.basis.len() < target.min(self.dim()) {
            let last = self.basis.last().expect("nonempty").clone();
            let mut w = self.a_matvec(&last);
            let scale = w.norm().max(self.b_norm);
            for _ in 0..2 {
                for v in &self.basis {
                    let overlap = v.dot(&w);
                    w.axpy(-overlap, v, 1.0);
                }
            }
            let norm = w.norm();
            if norm <= RANK_TOL * scale {
                self.saturated = true;
            } else {
                self.basis.push(w.unscale(norm));
            }
        }
        if self.basis.len() >= self.dim() {
            self.saturated = true;
        }
    }

    /// Component of `x` orthogonal to the first `count` basis vectors.
    fn out_of_subspace(&self, x: &DVector<f64>, count: usize) -> DVector<f64> {
        let mut residual = x.clone();
        for _ in 0..2 {
            for v in self.basis.iter().take(count) {
                let overlap = v.dot(&residual);
                residual.axpy(-overlap, v, 1.0);
            }
        }
        residual
    }

    /// Serves the first-order oracle at `x`, rotating the hidden part of the
    /// spectrum first if `x` escapes the protected subspace.
    pub fn query(&mut self, x: &DVector<f64>) -> Result<FirstOrderInfo> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("query point must be finite".into()));
        }
        let x_norm = x.norm();
        if x_norm > 0.0 {
            if self.rounds >= self.budget {
                return Err(Error::AdversaryExhausted(format!(
                    "round budget {} exhausted; finalize the session",
                    self.budget
                )));
            }
            let k = self.rounds;
            let protected = 2 * k + 1;
            self.ensure_basis(protected);
            let visible = protected.min(self.basis.len());
            let residual = self.out_of_subspace(x, visible);
            let out_norm = residual.norm();
            if out_norm > IN_SUBSPACE_TOL * (1.0 + x_norm) {
                // The query escaped: align the next hidden basis direction
                // with it so the trajectory stays inside the Krylov chain.
                self.ensure_basis(protected + 1);
                if self.basis.len() < protected + 1 {
                    return Err(Error::AdversaryExhausted(format!(
                        "Krylov chain saturated at dimension {}; cannot absorb an \
                         out-of-subspace query",
                        self.basis.len()
                    )));
                }
                let y = residual.unscale(out_norm);
                let slot = self.basis[protected].clone();
                let mut reflector = &slot - &y;
                let reflector_norm = reflector.norm();
                if reflector_norm >= DEGENERATE_REFLECTOR_TOL {
                    reflector.unscale_mut(reflector_norm);
                    // U <- H U with H = I - 2 w wᵀ, applied as a rank-one update.
                    let projections = reflector.tr_mul(&self.u);
                    self.u.ger(-2.0, &reflector, &projections.transpose(), 1.0);
                    self.rotated = true;
                    self.basis[protected] = y;
                }
                self.rotations += 1;
            }
            self.rounds += 1;
        }
        let info = self.oracle_at(x);
        self.counter.func_evals += 1;
        self.counter.grad_evals += 1;
        self.counter.matvecs += 1;
        self.log.push(QueryRecord { point: x.clone(), answer: info.clone() });
        Ok(info)
    }

    /// Commits to the current function, verifies it reproduces the whole
    /// transcript, and returns it with the evidence.
    pub fn finalize(self) -> Result<FinalizedAdversary> {
        let b_dev = (&self.u * &self.b - &self.b).norm();
        if b_dev > 1e-9 * self.b_norm {
            return Err(Error::Numerical(format!(
                "orthogonal factor lost b-invariance: deviation {b_dev:.3e}"
            )));
        }
        let solution = &self.u * &self.base_solution;
        let eigenvalues: Vec<f64> = self.lambdas.iter().copied().collect();
        let matrix = if self.rotated {
            SpectralMatrix::dense(eigenvalues, self.u.clone())?
        } else {
            SpectralMatrix::diagonal(eigenvalues)?
        };
        let problem = RegQuadProblem::new(matrix, self.b.clone(), self.p, self.s, Some(solution))?;

        let mut max_dev = 0.0f64;
        for record in &self.log {
            let replay = problem.first_order_at(&record.point);
            let scale = 1.0 + record.answer.value.abs() + record.answer.gradient.norm();
            let dev = ((replay.value - record.answer.value).abs())
                .max((&replay.gradient - &record.answer.gradient).norm())
                / scale;
            max_dev = max_dev.max(dev);
        }
        if max_dev > REPLAY_TOL {
            return Err(Error::Numerical(format!(
                "finalized instance fails to reproduce the transcript: \
                 max deviation {max_dev:.3e}"
            )));
        }
        Ok(FinalizedAdversary {
            problem,
            queries: self.log,
            max_replay_deviation: max_dev,
            rotations: self.rotations,
            rounds: self.rounds,
        })
    }
}

/// Maximal Krylov dimension: distinct eigenvalues carrying right-hand-side
/// weight (the chain grows by one per order until it saturates there).
fn max_krylov_dim(lambdas: &DVector<f64>, b: &DVector<f64>) -> usize {
    let mut count = 0;
    let mut i = 0;
    let n = lambdas.len();
    while i < n {
        let mut weight = 0.0f64;
        let mut j = i;
        while j < n && lambdas[j] == lambdas[i] {
            weight += b[j].abs();
            j += 1;
        }
        if weight > 0.0 {
            count += 1;
        }
        i = j;
    }
    count
}

impl FirstOrderOracle for ResistingOracle {
    fn dim(&self) -> usize {
        self.lambdas.len()
    }

    fn exponent(&self) -> f64 {
        self.p
    }

    fn reg_weight(&self) -> f64 {
        self.s
    }

    fn lipschitz(&self) -> f64 {
        self.lambdas[self.lambdas.len() - 1]
    }

    fn solution_norm(&self) -> Option<f64> {
        Some(self.r)
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(self.f_star)
    }

    fn first_order(&mut self, x: &DVector<f64>) -> Result<FirstOrderInfo> {
        self.query(x)
    }

    fn counter(&self) -> OracleCounter {
        self.counter
    }
}
