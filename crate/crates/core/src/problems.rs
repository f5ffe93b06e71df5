//! Finite-sum stochastic problems with uniform sampling.
//!
//! A problem is `f(x) = (1/n) Σᵢ fᵢ(x)` where the sampled index is uniform on
//! `{0, .., n-1}`. Because the distribution is finite, the conditional mean and
//! second moment of the stochastic gradient are computed exactly by
//! enumeration (see [`FiniteSumProblem::exact_conditional_moment`]).

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{psd_null_space, rank_tolerance, symmetric_extremes};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("a finite-sum problem needs at least one component")]
    Empty,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid constant {name} = {value}")]
    InvalidConstant { name: &'static str, value: f64 },
    #[error("component {component} produced a non-finite value or gradient")]
    NonFinite { component: usize },
    #[error("matrix has rank {rank} but {dim} columns")]
    RankDeficient { rank: usize, dim: usize },
    #[error(
        "system has {rows} rows but {cols} columns; at least as many rows as columns are required"
    )]
    TooFewRows { rows: usize, cols: usize },
    #[error("row {row} is zero and cannot be normalized")]
    ZeroRow { row: usize },
    #[error("component {component} is not quadratic; constants must be supplied")]
    NotQuadratic { component: usize },
    #[error("quadratic objective is unbounded below")]
    Unbounded,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{what} violated: {detail}")]
    ConstantViolated { what: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One summand `fᵢ` of a finite-sum objective.
pub trait Component: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient_into(&self, x: &DVector<f64>, out: &mut DVector<f64>);

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        self.gradient_into(x, &mut g);
        g
    }

    /// Constant Hessian, for quadratic components only.
    fn hessian(&self) -> Option<DMatrix<f64>> {
        None
    }
}

/// `0.5 (⟨a, x⟩ − b)²`, half the squared distance to the hyperplane
/// `⟨a, x⟩ = b` when `‖a‖ = 1`.
#[derive(Debug, Clone)]
pub struct RowComponent {
    pub a: DVector<f64>,
    pub b: f64,
}

impl RowComponent {
    pub fn new(a: DVector<f64>, b: f64) -> Self {
        Self { a, b }
    }

    #[inline]
    fn residual(&self, x: &DVector<f64>) -> f64 {
        self.a.dot(x) - self.b
    }
}

impl Component for RowComponent {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let r = self.residual(x);
        0.5 * r * r
    }

    fn gradient_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let r = self.residual(x);
        out.copy_from(&self.a);
        *out *= r;
    }

    fn hessian(&self) -> Option<DMatrix<f64>> {
        Some(&self.a * self.a.transpose())
    }
}

/// `0.5 xᵀHx − ⟨l, x⟩ + c` with symmetric positive semidefinite `H`.
#[derive(Debug, Clone)]
pub struct QuadraticComponent {
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    offset: f64,
}

impl QuadraticComponent {
    pub fn new(
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        offset: f64,
    ) -> Result<Self, ProblemError> {
        let d = linear.len();
        if hessian.nrows() != d || hessian.ncols() != d {
            return Err(ProblemError::DimensionMismatch {
                expected: d,
                found: hessian.nrows(),
            });
        }
        let (lo, hi) = symmetric_extremes(&hessian);
        if lo < -rank_tolerance(hi, d) {
            return Err(ProblemError::InvalidConstant {
                name: "hessian eigenvalue",
                value: lo,
            });
        }
        let hessian = (&hessian + hessian.transpose()) * 0.5;
        Ok(Self {
            hessian,
            linear,
            offset,
        })
    }

    /// `0.5 (x − center)ᵀ H (x − center)`.
    pub fn centered(hessian: DMatrix<f64>, center: &DVector<f64>) -> Result<Self, ProblemError> {
        let linear = &hessian * center;
        let offset = 0.5 * center.dot(&linear);
        Self::new(hessian, linear, offset)
    }

    /// `0.5 (⟨a, x⟩ − b)² + 0.5 ridge ‖x‖²`.
    pub fn least_squares_row(a: &DVector<f64>, b: f64, ridge: f64) -> Result<Self, ProblemError> {
        let d = a.len();
        let hessian = a * a.transpose() + DMatrix::identity(d, d) * ridge;
        Self::new(hessian, a * b, 0.5 * b * b)
    }
}

impl Component for QuadraticComponent {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) - self.linear.dot(x) + self.offset
    }

    fn gradient_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        self.hessian.mul_to(x, out);
        *out -= &self.linear;
    }

    fn hessian(&self) -> Option<DMatrix<f64>> {
        Some(self.hessian.clone())
    }
}

/// The minimizer set `S` of a problem.
#[derive(Debug, Clone, PartialEq)]
pub enum SolutionSet {
    Point(DVector<f64>),
    /// `base + span(basis)` with orthonormal basis columns.
    Affine {
        base: DVector<f64>,
        basis: DMatrix<f64>,
    },
}

impl SolutionSet {
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            SolutionSet::Point(p) => p.clone(),
            SolutionSet::Affine { base, basis } => {
                if basis.ncols() == 0 {
                    return base.clone();
                }
                let offset = x - base;
                base + basis * (basis.transpose() * offset)
            }
        }
    }

    pub fn dist_sq(&self, x: &DVector<f64>) -> f64 {
        match self {
            SolutionSet::Point(p) => (x - p).norm_squared(),
            SolutionSet::Affine { .. } => (x - self.project(x)).norm_squared(),
        }
    }

    /// A distinguished member: the point itself, or the affine base.
    pub fn representative(&self) -> &DVector<f64> {
        match self {
            SolutionSet::Point(p) => p,
            SolutionSet::Affine { base, .. } => base,
        }
    }

    pub fn dim(&self) -> usize {
        self.representative().len()
    }
}

/// Smoothness and convexity constants of a problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    /// Lipschitz constant of ∇f.
    pub lipschitz: f64,
    /// Supremum of the component gradient Lipschitz constants.
    pub per_component_l0: f64,
    /// Strong convexity modulus, 0 when not asserted.
    pub strong_mu: f64,
    /// Restricted strong convexity modulus toward the solution set.
    pub restricted_mu: f64,
    /// Infimum of f over the whole space.
    pub f_star: f64,
}

/// Exact conditional mean and second moment of the sampled gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMoment {
    pub mean_grad: DVector<f64>,
    pub second_moment: f64,
    /// `E‖∇fᵢ(x) − ∇f(x)‖²`, accumulated from centered terms.
    pub variance: f64,
}

/// `f = (1/n) Σ fᵢ` with uniform sampling and a known solution set.
#[derive(Debug, Clone)]
pub struct FiniteSumProblem {
    dim: usize,
    components: Vec<Arc<dyn Component>>,
    constants: ProblemConstants,
    solution: SolutionSet,
    beta_sq: f64,
}

impl FiniteSumProblem {
    /// Problem with caller-supplied constants. Use
    /// [`validate_constants`](Self::validate_constants) to probe them.
    pub fn new(
        components: Vec<Arc<dyn Component>>,
        constants: ProblemConstants,
        solution: SolutionSet,
    ) -> Result<Self, ProblemError> {
        let dim = check_components(&components)?;
        for (name, value) in [
            ("lipschitz", constants.lipschitz),
            ("per_component_l0", constants.per_component_l0),
            ("strong_mu", constants.strong_mu),
            ("restricted_mu", constants.restricted_mu),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ProblemError::InvalidConstant { name, value });
            }
        }
        if !constants.f_star.is_finite() {
            return Err(ProblemError::InvalidConstant {
                name: "f_star",
                value: constants.f_star,
            });
        }
        if solution.dim() != dim {
            return Err(ProblemError::DimensionMismatch {
                expected: dim,
                found: solution.dim(),
            });
        }
        let mut problem = Self {
            dim,
            components,
            constants,
            solution,
            beta_sq: 0.0,
        };
        problem.beta_sq = problem
            .exact_conditional_moment(problem.solution.representative())?
            .second_moment;
        Ok(problem)
    }

    /// Problem whose components all expose a constant Hessian. Every constant
    /// and the solution set come from the spectrum of the mean Hessian.
    pub fn from_quadratics(components: Vec<Arc<dyn Component>>) -> Result<Self, ProblemError> {
        let dim = check_components(&components)?;
        let n = components.len() as f64;
        let mut mean_hessian = DMatrix::zeros(dim, dim);
        let mut l0 = 0.0f64;
        for (i, c) in components.iter().enumerate() {
            let h = c
                .hessian()
                .ok_or(ProblemError::NotQuadratic { component: i })?;
            l0 = l0.max(symmetric_extremes(&h).1);
            mean_hessian += h;
        }
        mean_hessian /= n;

        // ∇f(x) = H̄x + ∇f(0)
        let zero = DVector::zeros(dim);
        let mut grad0 = DVector::zeros(dim);
        let mut buf = DVector::zeros(dim);
        for c in &components {
            c.gradient_into(&zero, &mut buf);
            grad0 += &buf;
        }
        grad0 /= n;

        let (lambda_min, lambda_max) = symmetric_extremes(&mean_hessian);
        let (null_basis, min_positive) = psd_null_space(&mean_hessian);
        let base = pseudo_solve_psd(&mean_hessian, &(-&grad0));
        let residual = (&mean_hessian * &base + &grad0).norm();
        if residual > 1e-9 * (1.0 + grad0.norm()) {
            return Err(ProblemError::Unbounded);
        }
        let solution = if null_basis.ncols() == 0 {
            SolutionSet::Point(base)
        } else {
            SolutionSet::Affine {
                base,
                basis: null_basis.clone(),
            }
        };
        let strong_mu = if null_basis.ncols() == 0 {
            lambda_min.max(0.0)
        } else {
            0.0
        };
        let mut problem = Self {
            dim,
            components,
            constants: ProblemConstants {
                lipschitz: lambda_max.max(0.0),
                per_component_l0: l0.max(0.0),
                strong_mu,
                restricted_mu: min_positive,
                f_star: 0.0,
            },
            solution,
            beta_sq: 0.0,
        };
        problem.constants.f_star = problem.value(problem.solution.representative());
        problem.beta_sq = problem
            .exact_conditional_moment(problem.solution.representative())?
            .second_moment;
        Ok(problem)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &dyn Component {
        self.components[i].as_ref()
    }

    pub fn constants(&self) -> &ProblemConstants {
        &self.constants
    }

    pub fn lipschitz(&self) -> f64 {
        self.constants.lipschitz
    }

    pub fn strong_mu(&self) -> f64 {
        self.constants.strong_mu
    }

    pub fn restricted_mu(&self) -> f64 {
        self.constants.restricted_mu
    }

    pub fn per_component_l0(&self) -> f64 {
        self.constants.per_component_l0
    }

    pub fn f_star(&self) -> f64 {
        self.constants.f_star
    }

    pub fn solution(&self) -> &SolutionSet {
        &self.solution
    }

    /// `E‖∇K(x̄, ξ)‖²` at the representative solution point.
    pub fn beta_sq(&self) -> f64 {
        self.beta_sq
    }

    pub fn project_to_solution(&self, x: &DVector<f64>) -> DVector<f64> {
        self.solution.project(x)
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let sum: f64 = self.components.iter().map(|c| c.value(x)).sum();
        sum / self.components.len() as f64
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.gradient_into(x, &mut out);
        out
    }

    pub fn gradient_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        let mut buf = DVector::zeros(self.dim);
        for c in &self.components {
            c.gradient_into(x, &mut buf);
            *out += &buf;
        }
        *out /= self.components.len() as f64;
    }

    #[inline]
    pub fn component_gradient_into(&self, i: usize, x: &DVector<f64>, out: &mut DVector<f64>) {
        self.components[i].gradient_into(x, out);
    }

    /// Exact `(E[∇fᵢ(x)], E‖∇fᵢ(x)‖²)` under uniform sampling.
    pub fn exact_conditional_moment(
        &self,
        x: &DVector<f64>,
    ) -> Result<ConditionalMoment, ProblemError> {
        let mut mean_grad = DVector::zeros(self.dim);
        let mut buf = DVector::zeros(self.dim);
        let mut second = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            c.gradient_into(x, &mut buf);
            if !buf.iter().all(|v| v.is_finite()) {
                return Err(ProblemError::NonFinite { component: i });
            }
            second += buf.norm_squared();
            mean_grad += &buf;
        }
        let n = self.components.len() as f64;
        mean_grad /= n;
        let mut variance = 0.0;
        for c in &self.components {
            c.gradient_into(x, &mut buf);
            buf -= &mean_grad;
            variance += buf.norm_squared();
        }
        Ok(ConditionalMoment {
            mean_grad,
            second_moment: second / n,
            variance: variance / n,
        })
    }

    /// `max_i ‖∇fᵢ(x)‖²`.
    pub fn max_component_grad_sq(&self, x: &DVector<f64>) -> f64 {
        let mut buf = DVector::zeros(self.dim);
        self.components
            .iter()
            .map(|c| {
                c.gradient_into(x, &mut buf);
                buf.norm_squared()
            })
            .fold(0.0, f64::max)
    }

    /// Checks the stated constants on probe points: mean consistency,
    /// Lipschitz continuity of ∇f on all pairs, restricted strong convexity
    /// and idempotence of the solution projector.
    pub fn validate_constants(&self, probes: &[DVector<f64>]) -> Result<(), ProblemError> {
        let grads: Vec<DVector<f64>> = probes.iter().map(|x| self.gradient(x)).collect();
        for (x, g) in probes.iter().zip(&grads) {
            let moment = self.exact_conditional_moment(x)?;
            if (&moment.mean_grad - g).norm() > 1e-12 * (1.0 + g.norm()) {
                return Err(ProblemError::ConstantViolated {
                    what: "unbiasedness",
                    detail: format!("mean component gradient differs from ∇f at {x:?}"),
                });
            }
        }
        let lip = self.constants.lipschitz;
        for j in 0..probes.len() {
            for k in (j + 1)..probes.len() {
                let lhs = (&grads[j] - &grads[k]).norm();
                let rhs = lip * (&probes[j] - &probes[k]).norm();
                if lhs > rhs * (1.0 + 1e-9) + 1e-12 {
                    return Err(ProblemError::ConstantViolated {
                        what: "gradient Lipschitz bound",
                        detail: format!("pair ({j}, {k}): {lhs} > {rhs}"),
                    });
                }
            }
        }
        let mu = self.constants.restricted_mu;
        for (j, x) in probes.iter().enumerate() {
            let px = self.project_to_solution(x);
            let twice = self.project_to_solution(&px);
            if (&twice - &px).norm() > 1e-12 * (1.0 + px.norm()) {
                return Err(ProblemError::ConstantViolated {
                    what: "solution projector idempotence",
                    detail: format!("probe {j}"),
                });
            }
            if mu > 0.0 {
                let gap = self.value(x) - self.value(&px);
                let bound = 0.5 * mu * (x - &px).norm_squared();
                if gap < bound * (1.0 - 1e-9) - 1e-12 * (1.0 + self.value(x).abs()) {
                    return Err(ProblemError::ConstantViolated {
                        what: "restricted strong convexity",
                        detail: format!("probe {j}: {gap} < {bound}"),
                    });
                }
            }
        }
        Ok(())
    }
}

fn check_components(components: &[Arc<dyn Component>]) -> Result<usize, ProblemError> {
    let first = components.first().ok_or(ProblemError::Empty)?;
    let dim = first.dim();
    if dim == 0 {
        return Err(ProblemError::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    for c in components {
        if c.dim() != dim {
            return Err(ProblemError::DimensionMismatch {
                expected: dim,
                found: c.dim(),
            });
        }
    }
    Ok(dim)
}

/// Minimum-norm solution of `Hx = rhs` for symmetric PSD `H`.
fn pseudo_solve_psd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let eig = nalgebra::SymmetricEigen::new((h + h.transpose()) * 0.5);
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let tol = rank_tolerance(top, h.nrows());
    let mut x = DVector::zeros(h.nrows());
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > tol {
            let v = eig.eigenvectors.column(k);
            x += v * (v.dot(rhs) / lambda);
        }
    }
    x
}

/// Linear system with unit-norm rows, the data of randomized Kaczmarz.
#[derive(Debug, Clone)]
pub struct KaczmarzSystem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    consistent: bool,
    least_squares: DVector<f64>,
}

/// Residual level under which a system counts as consistent.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-10;

impl KaczmarzSystem {
    /// Normalizes every row of `[A | b]` by `‖aᵢ‖` and checks that `A` has full
    /// column rank with at least as many rows as columns.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, ProblemError> {
        let (m, d) = a.shape();
        if b.len() != m {
            return Err(ProblemError::DimensionMismatch {
                expected: m,
                found: b.len(),
            });
        }
        if d == 0 {
            return Err(ProblemError::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if m < d {
            return Err(ProblemError::TooFewRows { rows: m, cols: d });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(ProblemError::InvalidConstant {
                name: "matrix entry",
                value: f64::NAN,
            });
        }
        let mut a = a;
        let mut b = b;
        for i in 0..m {
            let norm = a.row(i).norm();
            if norm == 0.0 {
                return Err(ProblemError::ZeroRow { row: i });
            }
            a.row_mut(i).unscale_mut(norm);
            b[i] /= norm;
        }
        let svd = SVD::new(a.clone(), true, true);
        let top = svd.singular_values.max();
        let tol = rank_tolerance(top, d);
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        if rank < d {
            return Err(ProblemError::RankDeficient { rank, dim: d });
        }
        let least_squares = svd
            .solve(&b, tol)
            .map_err(|_| ProblemError::RankDeficient { rank, dim: d })?;
        let residual = (&a * &least_squares - &b).norm();
        Ok(Self {
            a,
            b,
            consistent: residual <= CONSISTENCY_TOLERANCE,
            least_squares,
        })
    }

    /// `m × d` standard Gaussian matrix with `b = A x♮`, `x♮` standard normal.
    pub fn gaussian_consistent(m: usize, d: usize, seed: u64) -> Result<Self, ProblemError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(m, d, |_, _| StandardNormal.sample(&mut rng));
        let x_true = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let b = &a * x_true;
        Self::new(a, b)
    }

    /// As [`gaussian_consistent`](Self::gaussian_consistent) with additive
    /// Gaussian noise of standard deviation `noise` on `b`.
    pub fn gaussian_noisy(m: usize, d: usize, noise: f64, seed: u64) -> Result<Self, ProblemError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(m, d, |_, _| StandardNormal.sample(&mut rng));
        let x_true = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let eps = DVector::from_fn(m, |_, _| {
            noise * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let b = &a * x_true + eps;
        Self::new(a, b)
    }

    /// Parses `m d` followed by `m` lines of `d + 1` reals (row, then bᵢ).
    pub fn parse(text: &str) -> Result<Self, ProblemError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(ProblemError::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| ProblemError::Parse {
                line: hline,
                message: format!("bad header: {e}"),
            })?;
        let [m, d] = dims[..] else {
            return Err(ProblemError::Parse {
                line: hline,
                message: "header must be `m d`".into(),
            });
        };
        let mut a = DMatrix::zeros(m, d);
        let mut b = DVector::zeros(m);
        for i in 0..m {
            let (ln, row) = lines.next().ok_or(ProblemError::Parse {
                line: hline + i + 1,
                message: format!("expected {m} rows, found {i}"),
            })?;
            let values: Vec<f64> = row
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| ProblemError::Parse {
                    line: ln,
                    message: e.to_string(),
                })?;
            if values.len() != d + 1 {
                return Err(ProblemError::Parse {
                    line: ln,
                    message: format!("expected {} values, found {}", d + 1, values.len()),
                });
            }
            for j in 0..d {
                a[(i, j)] = values[j];
            }
            b[i] = values[d];
        }
        if let Some((ln, _)) = lines.next() {
            return Err(ProblemError::Parse {
                line: ln,
                message: "trailing data after last row".into(),
            });
        }
        Self::new(a, b)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProblemError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn is_consistent(&self) -> bool {
        self.consistent
    }

    /// `A†b = (AᵀA)⁻¹Aᵀb`.
    pub fn least_squares_solution(&self) -> &DVector<f64> {
        &self.least_squares
    }

    pub fn gram(&self) -> DMatrix<f64> {
        self.a.transpose() * &self.a
    }
}

/// `f(x) = (1/m) Σ 0.5 (⟨aᵢ, x⟩ − bᵢ)²`, the mean squared hyperplane distance.
pub fn make_kaczmarz_problem(sys: &KaczmarzSystem) -> FiniteSumProblem {
    let m = sys.rows() as f64;
    let components: Vec<Arc<dyn Component>> = (0..sys.rows())
        .map(|i| {
            Arc::new(RowComponent::new(sys.a.row(i).transpose(), sys.b[i])) as Arc<dyn Component>
        })
        .collect();
    let (lo, hi) = symmetric_extremes(&sys.gram());
    let solution = sys.least_squares.clone();
    let mut problem = FiniteSumProblem {
        dim: sys.cols(),
        components,
        constants: ProblemConstants {
            lipschitz: hi / m,
            per_component_l0: 1.0,
            strong_mu: lo / m,
            restricted_mu: lo / m,
            f_star: 0.0,
        },
        solution: SolutionSet::Point(solution),
        beta_sq: 0.0,
    };
    problem.constants.f_star = problem.value(problem.solution.representative());
    problem.beta_sq = problem
        .exact_conditional_moment(problem.solution.representative())
        .map(|m| m.second_moment)
        .unwrap_or(f64::INFINITY);
    problem
}

/// `f₁ = 0.5 (x − 1)²`, `f₂ = 0.5 (x + 1)²`, so `f = 0.5 x² + 0.5`.
pub fn make_two_point_quadratic() -> FiniteSumProblem {
    let one = DMatrix::from_element(1, 1, 1.0);
    let components: Vec<Arc<dyn Component>> = [1.0, -1.0]
        .into_iter()
        .map(|c| {
            Arc::new(
                QuadraticComponent::centered(one.clone(), &DVector::from_element(1, c))
                    .expect("unit quadratic"),
            ) as Arc<dyn Component>
        })
        .collect();
    FiniteSumProblem::from_quadratics(components).expect("two-point quadratic is well posed")
}

/// Seeded regularized least squares: `fᵢ = 0.5 (⟨aᵢ, x⟩ − bᵢ)² + 0.5 ridge ‖x‖²`
/// with unit Gaussian rows, a sparse planted `x♮` and noisy observations.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresSpec {
    pub dim: usize,
    pub components: usize,
    pub ridge: f64,
    pub noise: f64,
    /// Fraction of planted coordinates set to zero.
    pub sparsity: f64,
    pub seed: u64,
}

impl Default for LeastSquaresSpec {
    fn default() -> Self {
        Self {
            dim: 10,
            components: 20,
            ridge: 0.1,
            noise: 0.5,
            sparsity: 0.5,
            seed: 42,
        }
    }
}

pub fn make_least_squares(spec: &LeastSquaresSpec) -> Result<FiniteSumProblem, ProblemError> {
    if spec.dim == 0 || spec.components == 0 {
        return Err(ProblemError::Empty);
    }
    if !(spec.ridge >= 0.0) {
        return Err(ProblemError::InvalidConstant {
            name: "ridge",
            value: spec.ridge,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let zeros = (spec.sparsity.clamp(0.0, 1.0) * spec.dim as f64).round() as usize;
    let x_true = DVector::from_fn(spec.dim, |j, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        if j < zeros {
            0.0
        } else {
            v
        }
    });
    let mut components: Vec<Arc<dyn Component>> = Vec::with_capacity(spec.components);
    for _ in 0..spec.components {
        let mut a = DVector::from_fn(spec.dim, |_, _| StandardNormal.sample(&mut rng));
        let norm = a.norm();
        a /= norm;
        let eps: f64 = StandardNormal.sample(&mut rng);
        let b = a.dot(&x_true) + spec.noise * eps;
        components.push(Arc::new(QuadraticComponent::least_squares_row(
            &a, b, spec.ridge,
        )?));
    }
    FiniteSumProblem::from_quadratics(components)
}

/// Deterministic probe points: `count` seeded standard-normal vectors, each
/// scaled by every entry of `scales`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGrid {
    pub seed: u64,
    pub count: usize,
    pub scales: Vec<f64>,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        Self {
            seed: 0,
            count: 32,
            scales: vec![0.1, 1.0, 10.0],
        }
    }
}

impl ProbeGrid {
    pub fn points(&self, dim: usize) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let base: Vec<DVector<f64>> = (0..self.count)
            .map(|_| DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        self.scales
            .iter()
            .flat_map(|&s| base.iter().map(move |p| p * s))
            .collect()
    }
}
