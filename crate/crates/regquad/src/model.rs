//! Problem data and first-order oracle for the objective
//!
//! ```text
//!     f(x) = 1/2 x'Ax - b'x + (s/p) ||x||^p
//! ```
//!
//! with `A` symmetric positive semidefinite, `s > 0` and `p >= 2`. The
//! regularizer makes `f` uniformly convex of degree `p` with parameter
//! `sigma_p = s * 2^(2-p)`, so every instance has a unique minimizer even
//! when `A` is singular.
//!
//! Matrices are stored in spectral form (eigenvalues plus an optional
//! orthogonal factor), which keeps matrix-vector products, shifted solves
//! `(A + cI)^{-1} v` and the exact extremal eigenvalues cheap for every
//! instance family this crate generates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Max allowed deviation of `U'U` from the identity in a dense factor.
const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Relative stationarity tolerance for a stored `known_solution`.
const KNOWN_SOLUTION_TOL: f64 = 1e-9;

/// Symmetric PSD matrix in spectral form: `A = U diag(lambda) U'` with
/// eigenvalues stored in ascending order. `factor = None` means `U = I`,
/// i.e. a diagonal matrix.
#[derive(Debug, Clone)]
pub struct SpectralMatrix {
    eigenvalues: DVector<f64>,
    factor: Option<DMatrix<f64>>,
}

impl SpectralMatrix {
    /// Diagonal matrix `diag(eigenvalues)`; the entries must be ascending.
    pub fn diagonal(eigenvalues: Vec<f64>) -> Result<Self> {
        let eigenvalues = DVector::from_vec(eigenvalues);
        Self::validate_order(&eigenvalues)?;
        Ok(Self { eigenvalues, factor: None })
    }

    /// Dense matrix `U diag(eigenvalues) U'`. `factor` must be orthogonal
    /// (columns are the eigenvectors, in the same order as the eigenvalues).
    pub fn dense(eigenvalues: Vec<f64>, factor: DMatrix<f64>) -> Result<Self> {
        let eigenvalues = DVector::from_vec(eigenvalues);
        Self::validate_order(&eigenvalues)?;
        if factor.nrows() != eigenvalues.len() || !factor.is_square() {
            return Err(Error::DimensionMismatch {
                expected: eigenvalues.len(),
                got: factor.nrows(),
            });
        }
        let gram = factor.transpose() * &factor;
        let deviation = (gram - DMatrix::identity(factor.nrows(), factor.ncols()))
            .amax();
        if deviation > ORTHOGONALITY_TOL {
            return Err(Error::InvalidArgument(format!(
                "factor is not orthogonal: |U'U - I| = {deviation:.3e}"
            )));
        }
        Ok(Self { eigenvalues, factor: Some(factor) })
    }

    fn validate_order(eigenvalues: &DVector<f64>) -> Result<()> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidArgument("empty spectrum".into()));
        }
        if eigenvalues.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidArgument("non-finite eigenvalue".into()));
        }
        if eigenvalues.as_slice().windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument(
                "eigenvalues must be in ascending order".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn factor(&self) -> Option<&DMatrix<f64>> {
        self.factor.as_ref()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// `A x`.
    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.factor {
            None => self.eigenvalues.component_mul(x),
            Some(u) => {
                let mut y = u.transpose() * x;
                y.component_mul_assign(&self.eigenvalues);
                u * y
            }
        }
    }

    /// `(A + shift I)^{-1} rhs`. Fails if any shifted eigenvalue is not
    /// strictly positive.
    pub fn shifted_solve(&self, shift: f64, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if self.eigenvalues[0] + shift <= 0.0 {
            return Err(Error::Singular(format!(
                "A + {shift:.3e} I has smallest eigenvalue {:.3e}",
                self.eigenvalues[0] + shift
            )));
        }
        match &self.factor {
            None => Ok(DVector::from_iterator(
                self.dim(),
                rhs.iter().zip(self.eigenvalues.iter()).map(|(r, l)| r / (l + shift)),
            )),
            Some(u) => {
                let mut y = u.transpose() * rhs;
                for (yi, l) in y.iter_mut().zip(self.eigenvalues.iter()) {
                    *yi /= l + shift;
                }
                Ok(u * y)
            }
        }
    }
}

/// One oracle answer: objective value and gradient at the query point.
#[derive(Debug, Clone)]
pub struct FirstOrderInfo {
    pub value: f64,
    pub gradient: DVector<f64>,
}

/// Cumulative oracle work. Solvers snapshot this into their traces so that
/// per-iteration cost accounting survives into the CSV output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCounter {
    pub func_evals: u64,
    pub grad_evals: u64,
    pub matvecs: u64,
}

/// An instance of the regularized quadratic problem.
///
/// Immutable after construction; evaluation counters live with the caller.
#[derive(Debug, Clone)]
pub struct RegQuadProblem {
    matrix: SpectralMatrix,
    b: DVector<f64>,
    p: f64,
    s: f64,
    known_solution: Option<DVector<f64>>,
}

impl RegQuadProblem {
    pub fn new(
        matrix: SpectralMatrix,
        b: DVector<f64>,
        p: f64,
        s: f64,
        known_solution: Option<DVector<f64>>,
    ) -> Result<Self> {
        if !(p >= 2.0) || !p.is_finite() {
            return Err(Error::InvalidArgument(format!("p must be >= 2, got {p}")));
        }
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidArgument(format!("s must be > 0, got {s}")));
        }
        if matrix.min_eigenvalue() < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "matrix must be positive semidefinite, smallest eigenvalue {:.3e}",
                matrix.min_eigenvalue()
            )));
        }
        if b.len() != matrix.dim() {
            return Err(Error::DimensionMismatch { expected: matrix.dim(), got: b.len() });
        }
        if let Some(x) = &known_solution {
            if x.len() != matrix.dim() {
                return Err(Error::DimensionMismatch { expected: matrix.dim(), got: x.len() });
            }
        }
        let problem = Self { matrix, b, p, s, known_solution };
        if let Some(x) = &problem.known_solution {
            let residual = problem.stationarity_residual(x);
            let tol = KNOWN_SOLUTION_TOL * problem.b.norm().max(1.0);
            if residual > tol {
                return Err(Error::InvalidArgument(format!(
                    "known_solution is not stationary: residual {residual:.3e} > {tol:.3e}"
                )));
            }
        }
        Ok(problem)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn matrix(&self) -> &SpectralMatrix {
        &self.matrix
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn known_solution(&self) -> Option<&DVector<f64>> {
        self.known_solution.as_ref()
    }

    /// Smallest eigenvalue of `A`.
    pub fn mu(&self) -> f64 {
        self.matrix.min_eigenvalue()
    }

    /// Largest eigenvalue of `A`, i.e. the Lipschitz constant of the
    /// quadratic part's gradient.
    pub fn lipschitz(&self) -> f64 {
        self.matrix.max_eigenvalue()
    }

    /// Uniform convexity parameter `sigma_p = s * 2^(2-p)` of degree `p`.
    pub fn sigma_p(&self) -> f64 {
        self.s * 2f64.powf(2.0 - self.p)
    }

    /// Coefficient of `x` contributed by the regularizer gradient:
    /// `s ||x||^(p-2)`, with the convention that it is `s` for `p = 2`
    /// (where the regularizer is quadratic) and `0` at the origin for
    /// `p > 2` (where the regularizer's Hessian vanishes).
    fn reg_coeff(&self, x_norm: f64) -> f64 {
        if self.p == 2.0 {
            self.s
        } else {
            self.s * x_norm.powf(self.p - 2.0)
        }
    }

    /// Value and gradient without counter bookkeeping.
    pub fn first_order_at(&self, x: &DVector<f64>) -> FirstOrderInfo {
        let ax = self.matrix.matvec(x);
        self.first_order_from_matvec(x, &ax)
    }

    fn first_order_from_matvec(&self, x: &DVector<f64>, ax: &DVector<f64>) -> FirstOrderInfo {
        let x_norm = x.norm();
        let value = 0.5 * x.dot(ax) - self.b.dot(x) + self.s / self.p * x_norm.powf(self.p);
        let mut gradient = ax - &self.b;
        gradient.axpy(self.reg_coeff(x_norm), x, 1.0);
        FirstOrderInfo { value, gradient }
    }

    /// Full first-order oracle; costs one matrix-vector product.
    pub fn eval(&self, x: &DVector<f64>, counter: &mut OracleCounter) -> FirstOrderInfo {
        counter.matvecs += 1;
        counter.func_evals += 1;
        counter.grad_evals += 1;
        self.first_order_at(x)
    }

    /// Value-only oracle; costs one matrix-vector product.
    pub fn eval_value(&self, x: &DVector<f64>, counter: &mut OracleCounter) -> f64 {
        counter.matvecs += 1;
        counter.func_evals += 1;
        let ax = self.matrix.matvec(x);
        let x_norm = x.norm();
        0.5 * x.dot(&ax) - self.b.dot(x) + self.s / self.p * x_norm.powf(self.p)
    }

    /// Gradient-only oracle; costs one matrix-vector product.
    pub fn eval_grad(&self, x: &DVector<f64>, counter: &mut OracleCounter) -> DVector<f64> {
        counter.matvecs += 1;
        counter.grad_evals += 1;
        let ax = self.matrix.matvec(x);
        let x_norm = x.norm();
        let mut gradient = ax - &self.b;
        gradient.axpy(self.reg_coeff(x_norm), x, 1.0);
        gradient
    }

    /// `||grad f(x)||`, the natural certificate of approximate optimality.
    pub fn stationarity_residual(&self, x: &DVector<f64>) -> f64 {
        self.first_order_at(x).gradient.norm()
    }

    /// Closed-form minimizer for `p = 2`: `x* = (A + sI)^{-1} b`.
    pub fn closed_form_p2(&self) -> Result<DVector<f64>> {
        if self.p != 2.0 {
            return Err(Error::Unsupported(format!(
                "closed form requires p = 2, got p = {}",
                self.p
            )));
        }
        self.matrix.shifted_solve(self.s, &self.b)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ProblemDto::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dto: ProblemDto = serde_json::from_str(text)?;
        dto.into_problem()
    }
}

/// Smoothness constant of `f` on the ball `||x|| <= 2 r_star`:
/// `M* = L + s (p-1) 2^(p-2) r_star^(p-2)`.
pub fn m_star(problem: &RegQuadProblem, r_star: f64) -> f64 {
    m_star_from(problem.lipschitz(), problem.s(), problem.p(), r_star)
}

/// [`m_star`] from raw constants, for callers that only see an oracle.
pub fn m_star_from(l: f64, s: f64, p: f64, r_star: f64) -> f64 {
    if p == 2.0 {
        l + s
    } else {
        l + s * (p - 1.0) * 2f64.powf(p - 2.0) * r_star.powf(p - 2.0)
    }
}

/// Which modified condition number a bound needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CondNumberForm {
    /// `(L + s r^(p-2)) / (mu + s r^(p-2))`, governing multi-step (Krylov)
    /// lower bounds.
    Multistep,
    /// `(L + s(p-1) r^(p-2)) / (mu + s(p-1) r^(p-2))`, governing the
    /// per-step contraction of one-step methods.
    OneStep,
}

/// Condition number of the quadratic after the regularizer's curvature at
/// radius `r` is folded in.
pub fn modified_condition_number(
    mu: f64,
    l: f64,
    s: f64,
    p: f64,
    r: f64,
    form: CondNumberForm,
) -> Result<f64> {
    let weight = match form {
        CondNumberForm::Multistep => 1.0,
        CondNumberForm::OneStep => p - 1.0,
    };
    let shift = if p == 2.0 { weight * s } else { weight * s * r.powf(p - 2.0) };
    let denom = mu + shift;
    if denom <= 0.0 {
        return Err(Error::Degenerate(format!(
            "condition number undefined: mu + shift = {denom:.3e}"
        )));
    }
    Ok((l + shift) / denom)
}

/// Serialization schema. Floats round-trip bit-exactly through JSON
/// (shortest-representation printing), so instances can be regenerated
/// byte-identically from disk.
#[derive(Serialize, Deserialize)]
struct ProblemDto {
    dim: usize,
    p: f64,
    s: f64,
    eigenvalues: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    factor: Option<Vec<Vec<f64>>>,
    b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    known_solution: Option<Vec<f64>>,
}

impl From<&RegQuadProblem> for ProblemDto {
    fn from(problem: &RegQuadProblem) -> Self {
        Self {
            dim: problem.dim(),
            p: problem.p,
            s: problem.s,
            eigenvalues: problem.matrix.eigenvalues.iter().copied().collect(),
            factor: problem.matrix.factor.as_ref().map(|u| {
                u.row_iter().map(|row| row.iter().copied().collect()).collect()
            }),
            b: problem.b.iter().copied().collect(),
            known_solution: problem
                .known_solution
                .as_ref()
                .map(|x| x.iter().copied().collect()),
        }
    }
}

impl ProblemDto {
    fn into_problem(self) -> Result<RegQuadProblem> {
        if self.eigenvalues.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: self.eigenvalues.len(),
            });
        }
        let matrix = match self.factor {
            None => SpectralMatrix::diagonal(self.eigenvalues)?,
            Some(rows) => {
                if rows.len() != self.dim || rows.iter().any(|r| r.len() != self.dim) {
                    return Err(Error::DimensionMismatch { expected: self.dim, got: rows.len() });
                }
                let factor = DMatrix::from_row_iterator(
                    self.dim,
                    self.dim,
                    rows.iter().flat_map(|r| r.iter().copied()),
                );
                SpectralMatrix::dense(self.eigenvalues, factor)?
            }
        };
        RegQuadProblem::new(
            matrix,
            DVector::from_vec(self.b),
            self.p,
            self.s,
            self.known_solution.map(DVector::from_vec),
        )
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::random_dense_instance;
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn identity_instance() -> RegQuadProblem {
        // d = 2, A = I, b = (1, 1), s = 1, p = 3.
        RegQuadProblem::new(
            SpectralMatrix::diagonal(vec![1.0, 1.0]).unwrap(),
            DVector::from_vec(vec![1.0, 1.0]),
            3.0,
            1.0,
            None,
        )
        .unwrap()
    }

    #[test]
    fn value_and_gradient_on_identity_instance() {
        let problem = identity_instance();
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let mut counter = OracleCounter::default();
        let info = problem.eval(&x, &mut counter);
        // f = 1/2 (1 + 4) - (1 + 2) + (1/3) 5^{3/2}
        let expected = 2.5 - 3.0 + 5f64.powf(1.5) / 3.0;
        assert_relative_eq!(info.value, expected, max_relative = 1e-15);
        // grad = x - b + ||x|| x
        let norm = 5f64.sqrt();
        assert_relative_eq!(info.gradient[0], 1.0 - 1.0 + norm * 1.0, max_relative = 1e-15);
        assert_relative_eq!(info.gradient[1], 2.0 - 1.0 + norm * 2.0, max_relative = 1e-15);
        assert_eq!(counter, OracleCounter { func_evals: 1, grad_evals: 1, matvecs: 1 });
    }

    #[test]
    fn origin_value_is_zero_and_gradient_is_minus_b() {
        let problem = identity_instance();
        let x = DVector::zeros(2);
        let info = problem.first_order_at(&x);
        assert_eq!(info.value, 0.0);
        assert_eq!(info.gradient, -problem.b().clone());
    }

    #[test]
    fn gradient_vanishes_at_one_dimensional_stationary_point() {
        // d = 1, A = 2, b = 3, s = 1, p = 3: x (2 + |x|) = 3 has root x = 1.
        let problem = RegQuadProblem::new(
            SpectralMatrix::diagonal(vec![2.0]).unwrap(),
            DVector::from_vec(vec![3.0]),
            3.0,
            1.0,
            None,
        )
        .unwrap();
        let residual = problem.stationarity_residual(&DVector::from_vec(vec![1.0]));
        assert_abs_diff_eq!(residual, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn closed_form_p2_solves_diagonal_instance() {
        // A = diag(1, 3), s = 1, b = (2, 8): x* = (1, 2).
        let problem = RegQuadProblem::new(
            SpectralMatrix::diagonal(vec![1.0, 3.0]).unwrap(),
            DVector::from_vec(vec![2.0, 8.0]),
            2.0,
            1.0,
            None,
        )
        .unwrap();
        let x = problem.closed_form_p2().unwrap();
        assert_relative_eq!(x[0], 1.0, max_relative = 1e-15);
        assert_relative_eq!(x[1], 2.0, max_relative = 1e-15);
    }

    #[test]
    fn closed_form_p2_handles_zero_matrix() {
        // A = 0, s = 2, b = (4,): x* = 2.
        let problem = RegQuadProblem::new(
            SpectralMatrix::diagonal(vec![0.0]).unwrap(),
            DVector::from_vec(vec![4.0]),
            2.0,
            2.0,
            None,
        )
        .unwrap();
        assert_eq!(problem.closed_form_p2().unwrap()[0], 2.0);
    }

    #[test]
    fn closed_form_p2_rejects_other_exponents() {
        let problem = identity_instance();
        assert!(matches!(problem.closed_form_p2(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn closed_form_p2_on_random_dense_instance_is_stationary() {
        for seed in 0..5 {
            let problem = random_dense_instance(seed, 30, 2.0, 0.7);
            let x = problem.closed_form_p2().unwrap();
            let residual = problem.stationarity_residual(&x);
            assert!(
                residual <= 1e-10 * problem.b().norm(),
                "residual {residual:.3e} too large for seed {seed}"
            );
        }
    }

    #[test]
    fn sigma_p_matches_hand_values() {
        let mk = |p: f64, s: f64| {
            RegQuadProblem::new(
                SpectralMatrix::diagonal(vec![1.0]).unwrap(),
                DVector::from_vec(vec![1.0]),
                p,
                s,
                None,
            )
            .unwrap()
        };
        assert_eq!(mk(2.0, 1.0).sigma_p(), 1.0);
        assert_eq!(mk(3.0, 1.0).sigma_p(), 0.5);
        assert_eq!(mk(4.0, 2.0).sigma_p(), 0.5);
    }

    #[test]
    fn m_star_matches_hand_values() {
        let mk = |p: f64, s: f64, l: f64| {
            RegQuadProblem::new(
                SpectralMatrix::diagonal(vec![0.0, l]).unwrap(),
                DVector::from_vec(vec![1.0, 1.0]),
                p,
                s,
                None,
            )
            .unwrap()
        };
        // p = 2: L + s, independently of r.
        assert_eq!(m_star(&mk(2.0, 0.5, 3.0), 7.0), 3.5);
        // p = 3, L = 1, s = 1, r = 1: 1 + 1 * 2 * 2 * 1 = 5.
        assert_eq!(m_star(&mk(3.0, 1.0, 1.0), 1.0), 5.0);
        // r = 0 with p > 2 collapses to L.
        assert_eq!(m_star(&mk(3.0, 1.0, 4.0), 0.0), 4.0);
    }

    #[test]
    fn modified_condition_numbers_match_hand_values() {
        // p = 3, L = 1, s = 1, r = 1, mu = 0.
        let q_star =
            modified_condition_number(0.0, 1.0, 1.0, 3.0, 1.0, CondNumberForm::Multistep)
                .unwrap();
        assert_eq!(q_star, 2.0);
        let q_bar = modified_condition_number(0.0, 1.0, 1.0, 3.0, 1.0, CondNumberForm::OneStep)
            .unwrap();
        assert_eq!(q_bar, 1.5);
        // mu = L gives 1 in both forms.
        for form in [CondNumberForm::Multistep, CondNumberForm::OneStep] {
            assert_eq!(modified_condition_number(2.0, 2.0, 1.0, 3.0, 1.0, form).unwrap(), 1.0);
        }
        // mu = 0, s = 0 is degenerate.
        assert!(modified_condition_number(0.0, 1.0, 0.0, 3.0, 1.0, CondNumberForm::Multistep)
            .is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(p, s) in &[(2.0, 1.0), (2.5, 0.3), (3.0, 1.0), (4.0, 2.0)] {
            let problem = random_dense_instance(rng.random(), 12, p, s);
            let x = DVector::from_fn(12, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let grad = problem.first_order_at(&x).gradient;
            let h = 1e-6;
            for i in 0..12 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd =
                    (problem.first_order_at(&xp).value - problem.first_order_at(&xm).value)
                        / (2.0 * h);
                assert_relative_eq!(grad[i], fd, max_relative = 1e-5, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn uniform_convexity_holds_between_random_points() {
        // f(y) >= f(x) + <grad f(x), y - x> + (sigma_p / p) ||y - x||^p.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(p, s) in &[(2.0, 0.5), (3.0, 1.0), (4.0, 0.2)] {
            let problem = random_dense_instance(rng.random(), 10, p, s);
            for _ in 0..50 {
                let x =
                    DVector::from_fn(10, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
                let y =
                    DVector::from_fn(10, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
                let fx = problem.first_order_at(&x);
                let fy = problem.first_order_at(&y);
                let diff = &y - &x;
                let lower = fx.value
                    + fx.gradient.dot(&diff)
                    + problem.sigma_p() / p * diff.norm().powf(p);
                assert!(
                    fy.value >= lower - 1e-10 * fy.value.abs().max(1.0),
                    "uniform convexity violated: p = {p}, gap = {:.3e}",
                    lower - fy.value
                );
            }
        }
    }

    #[test]
    fn hessian_curvature_is_bounded_along_random_directions() {
        // h' grad^2 f(y) h <= L + s (p-1) ||y||^(p-2) for unit h, probed with
        // central gradient differences.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for &(p, s) in &[(2.0, 1.0), (3.0, 0.5), (4.0, 1.0)] {
            let problem = random_dense_instance(rng.random(), 10, p, s);
            for _ in 0..20 {
                let y =
                    DVector::from_fn(10, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
                let mut h =
                    DVector::from_fn(10, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
                h /= h.norm();
                let eps = 1e-5;
                let gp = problem.first_order_at(&(&y + eps * &h)).gradient;
                let gm = problem.first_order_at(&(&y - eps * &h)).gradient;
                let curvature = (gp - gm).dot(&h) / (2.0 * eps);
                let coeff = if p == 2.0 { s } else { s * y.norm().powf(p - 2.0) };
                let bound = problem.lipschitz() + (p - 1.0) * coeff;
                assert!(
                    curvature <= bound * (1.0 + 1e-6) + 1e-6,
                    "curvature {curvature:.6} exceeds bound {bound:.6} (p = {p})"
                );
            }
        }
    }

    #[test]
    fn rejects_invalid_parameters() {
        let eye = || SpectralMatrix::diagonal(vec![1.0]).unwrap();
        let b = || DVector::from_vec(vec![1.0]);
        assert!(RegQuadProblem::new(eye(), b(), 1.5, 1.0, None).is_err());
        assert!(RegQuadProblem::new(eye(), b(), 3.0, 0.0, None).is_err());
        assert!(RegQuadProblem::new(
            SpectralMatrix::diagonal(vec![-0.1, 1.0]).unwrap(),
            DVector::from_vec(vec![1.0, 1.0]),
            3.0,
            1.0,
            None
        )
        .is_err());
        assert!(SpectralMatrix::diagonal(vec![2.0, 1.0]).is_err());
    }

    #[test]
    fn rejects_non_stationary_known_solution() {
        let result = RegQuadProblem::new(
            SpectralMatrix::diagonal(vec![2.0]).unwrap(),
            DVector::from_vec(vec![3.0]),
            3.0,
            1.0,
            Some(DVector::from_vec(vec![0.9])),
        );
        assert!(result.is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for seed in 0..5 {
            let mut problem = random_dense_instance(seed, 8, 3.0, 0.1 + rng.random::<f64>());
            if seed % 2 == 0 {
                // Also cover the diagonal storage path.
                problem = RegQuadProblem::new(
                    SpectralMatrix::diagonal(
                        problem.matrix().eigenvalues().iter().copied().collect(),
                    )
                    .unwrap(),
                    problem.b().clone(),
                    problem.p(),
                    problem.s(),
                    None,
                )
                .unwrap();
            }
            let text = problem.to_json().unwrap();
            let back = RegQuadProblem::from_json(&text).unwrap();
            assert_eq!(problem.p().to_bits(), back.p().to_bits());
            assert_eq!(problem.s().to_bits(), back.s().to_bits());
            for (a, b) in problem
                .matrix()
                .eigenvalues()
                .iter()
                .zip(back.matrix().eigenvalues().iter())
            {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            for (a, b) in problem.b().iter().zip(back.b().iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            match (problem.matrix().factor(), back.matrix().factor()) {
                (None, None) => {}
                (Some(u), Some(v)) => {
                    for (a, b) in u.iter().zip(v.iter()) {
                        assert_eq!(a.to_bits(), b.to_bits());
                    }
                }
                _ => panic!("factor presence changed in round trip"),
            }
        }
    }
}
