//! Projections, proximity operators and linear resolvents.
//!
//! Every operator here is exact and closed form (or a single dense solve), so
//! iterations built on them carry no inner-loop error.

use nalgebra::{DMatrix, DVector, LU, SVD};
use thiserror::Error;

use crate::linalg::{rank_tolerance, symmetric_extremes};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("operator is not monotone: symmetric part has eigenvalue {0}")]
    NotMonotone(f64),
    #[error("resolvent system is ill-conditioned (condition estimate {0:e})")]
    IllConditioned(f64),
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
}

/// Condition-number ceiling for resolvent solves.
pub const MAX_CONDITION: f64 = 1e12;

/// Closed convex sets with closed-form projections.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexSet {
    WholeSpace,
    /// `{x : ⟨a, x⟩ = b}`.
    Hyperplane {
        normal: DVector<f64>,
        offset: f64,
    },
    /// `{x : ⟨a, x⟩ ≤ b}`.
    Halfspace {
        normal: DVector<f64>,
        offset: f64,
    },
    Box {
        lo: DVector<f64>,
        hi: DVector<f64>,
    },
    Ball {
        center: DVector<f64>,
        radius: f64,
    },
    Affine(AffineSet),
}

/// `{x : A_eq x = b_eq}` with a projector precomputed from a QR factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSet {
    /// Orthonormal basis of the row space of `A_eq` (d × k).
    row_basis: DMatrix<f64>,
    /// Minimum-norm point of the set.
    anchor: DVector<f64>,
}

impl AffineSet {
    pub fn new(a_eq: &DMatrix<f64>, b_eq: &DVector<f64>) -> Result<Self, GeometryError> {
        let (k, d) = a_eq.shape();
        if b_eq.len() != k {
            return Err(GeometryError::DimensionMismatch {
                expected: k,
                found: b_eq.len(),
            });
        }
        if k == 0 || k > d {
            return Err(GeometryError::InvalidParameter(format!(
                "affine constraint matrix must have 1..={d} rows, got {k}"
            )));
        }
        let qr = a_eq.transpose().qr();
        let r = qr.r();
        let top = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = rank_tolerance(top, d);
        if r.diagonal().iter().any(|v| v.abs() <= tol) {
            return Err(GeometryError::InvalidParameter(
                "affine constraints must have full row rank".into(),
            ));
        }
        let q = qr.q();
        // A_eq = Rᵀ Qᵀ, so x = Q y with Rᵀ y = b_eq.
        let y = r
            .transpose()
            .solve_lower_triangular(b_eq)
            .ok_or_else(|| GeometryError::InvalidParameter("singular affine constraints".into()))?;
        Ok(Self {
            anchor: &q * y,
            row_basis: q,
        })
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    fn project_in_place(&self, x: &mut DVector<f64>) {
        let offset = &*x - &self.anchor;
        let correction = &self.row_basis * (self.row_basis.transpose() * offset);
        *x -= correction;
    }
}

impl ConvexSet {
    pub fn hyperplane(normal: DVector<f64>, offset: f64) -> Result<Self, GeometryError> {
        check_normal(&normal)?;
        Ok(Self::Hyperplane { normal, offset })
    }

    pub fn halfspace(normal: DVector<f64>, offset: f64) -> Result<Self, GeometryError> {
        check_normal(&normal)?;
        Ok(Self::Halfspace { normal, offset })
    }

    pub fn boxed(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self, GeometryError> {
        if lo.len() != hi.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(GeometryError::InvalidParameter("empty box: lo > hi".into()));
        }
        Ok(Self::Box { lo, hi })
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::InvalidParameter(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(Self::Ball { center, radius })
    }

    pub fn affine(a_eq: &DMatrix<f64>, b_eq: &DVector<f64>) -> Result<Self, GeometryError> {
        AffineSet::new(a_eq, b_eq).map(Self::Affine)
    }

    /// Dimension, or `None` for the whole space.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ConvexSet::WholeSpace => None,
            ConvexSet::Hyperplane { normal, .. } | ConvexSet::Halfspace { normal, .. } => {
                Some(normal.len())
            }
            ConvexSet::Box { lo, .. } => Some(lo.len()),
            ConvexSet::Ball { center, .. } => Some(center.len()),
            ConvexSet::Affine(a) => Some(a.dim()),
        }
    }

    pub fn is_whole_space(&self) -> bool {
        matches!(self, ConvexSet::WholeSpace)
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        self.project_in_place(&mut y);
        y
    }

    pub fn project_in_place(&self, x: &mut DVector<f64>) {
        match self {
            ConvexSet::WholeSpace => {}
            ConvexSet::Hyperplane { normal, offset } => {
                let t = (normal.dot(x) - offset) / normal.norm_squared();
                x.axpy(-t, normal, 1.0);
            }
            ConvexSet::Halfspace { normal, offset } => {
                let excess = normal.dot(x) - offset;
                if excess > 0.0 {
                    x.axpy(-excess / normal.norm_squared(), normal, 1.0);
                }
            }
            ConvexSet::Box { lo, hi } => {
                for ((xi, l), h) in x.iter_mut().zip(lo.iter()).zip(hi.iter()) {
                    *xi = xi.clamp(*l, *h);
                }
            }
            ConvexSet::Ball { center, radius } => {
                let dist = (&*x - center).norm();
                if dist > *radius {
                    let scale = radius / dist;
                    for (xi, ci) in x.iter_mut().zip(center.iter()) {
                        *xi = ci + (*xi - ci) * scale;
                    }
                }
            }
            ConvexSet::Affine(a) => a.project_in_place(x),
        }
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        (self.project(x) - x).norm() <= tol * (1.0 + x.norm())
    }

    /// Whether `q` lies in the normal cone of the set at `y ∈ C`, tested by
    /// `P_C(y + q) = y`.
    pub fn normal_cone_contains(&self, y: &DVector<f64>, q: &DVector<f64>, tol: f64) -> bool {
        let shifted = y + q;
        (self.project(&shifted) - y).norm() <= tol * (1.0 + y.norm() + q.norm())
    }
}

fn check_normal(normal: &DVector<f64>) -> Result<(), GeometryError> {
    if normal.norm_squared() > 0.0 && normal.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GeometryError::InvalidParameter(
            "normal vector must be nonzero and finite".into(),
        ))
    }
}

/// Proper closed convex functions `g` with closed-form proximity operators.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    Zero,
    Constant(f64),
    /// `weight · ‖x‖₁`.
    L1 {
        weight: f64,
    },
    Indicator(ConvexSet),
    /// `0.5 xᵀQx + ⟨q, x⟩ + c` with `Q` symmetric PSD. With `Q = 0` this is
    /// the affine function whose subdifferential is the constant `{q}`.
    Quadratic {
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        offset: f64,
    },
}

impl Regularizer {
    pub fn l1(weight: f64) -> Result<Self, GeometryError> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(GeometryError::InvalidParameter(format!(
                "l1 weight must be nonnegative, got {weight}"
            )));
        }
        Ok(Self::L1 { weight })
    }

    pub fn quadratic(
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        offset: f64,
    ) -> Result<Self, GeometryError> {
        let d = linear.len();
        if hessian.shape() != (d, d) {
            return Err(GeometryError::DimensionMismatch {
                expected: d,
                found: hessian.nrows(),
            });
        }
        let (lo, hi) = symmetric_extremes(&hessian);
        if lo < -rank_tolerance(hi, d) {
            return Err(GeometryError::NotMonotone(lo));
        }
        let hessian = (&hessian + hessian.transpose()) * 0.5;
        Ok(Self::Quadratic {
            hessian,
            linear,
            offset,
        })
    }

    /// `g` is constant, so `prox_{γg} = Id` and the subgradient is zero.
    pub fn is_constant(&self) -> bool {
        match self {
            Regularizer::Zero | Regularizer::Constant(_) => true,
            Regularizer::L1 { weight } => *weight == 0.0,
            Regularizer::Indicator(set) => set.is_whole_space(),
            Regularizer::Quadratic { .. } => false,
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Regularizer::Zero => 0.0,
            Regularizer::Constant(c) => *c,
            Regularizer::L1 { weight } => weight * x.lp_norm(1),
            Regularizer::Indicator(set) => {
                if set.contains(x, 1e-12) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Regularizer::Quadratic {
                hessian,
                linear,
                offset,
            } => 0.5 * x.dot(&(hessian * x)) + linear.dot(x) + offset,
        }
    }

    /// `argmin_y g(y) + ‖y − x‖² / (2γ)`.
    pub fn prox(&self, gamma: f64, x: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        self.prox_in_place(gamma, &mut y);
        y
    }

    pub fn prox_in_place(&self, gamma: f64, x: &mut DVector<f64>) {
        match self {
            Regularizer::Zero | Regularizer::Constant(_) => {}
            Regularizer::L1 { weight } => {
                let t = gamma * weight;
                for xi in x.iter_mut() {
                    *xi = soft_threshold(*xi, t);
                }
            }
            Regularizer::Indicator(set) => set.project_in_place(x),
            Regularizer::Quadratic {
                hessian, linear, ..
            } => {
                let d = linear.len();
                let system = DMatrix::identity(d, d) + hessian * gamma;
                let rhs = &*x - linear * gamma;
                // I + γQ is symmetric positive definite for PSD Q.
                let chol = system.cholesky().expect("I + γQ is positive definite");
                *x = chol.solve(&rhs);
            }
        }
    }

    /// Whether `q ∈ ∂g(y)`, checked from the closed form of each kind.
    pub fn subgradient_contains(&self, y: &DVector<f64>, q: &DVector<f64>, tol: f64) -> bool {
        match self {
            Regularizer::Zero | Regularizer::Constant(_) => q.norm() <= tol,
            Regularizer::L1 { weight } => y.iter().zip(q.iter()).all(|(&yi, &qi)| {
                let scale = tol * (1.0 + weight);
                if yi == 0.0 {
                    qi.abs() <= weight + scale
                } else {
                    (qi - weight * yi.signum()).abs() <= scale
                }
            }),
            Regularizer::Indicator(set) => {
                set.contains(y, tol) && set.normal_cone_contains(y, q, tol)
            }
            Regularizer::Quadratic {
                hessian, linear, ..
            } => {
                let grad = hessian * y + linear;
                (grad - q).norm() <= tol * (1.0 + q.norm())
            }
        }
    }
}

/// `sign(x) · max(|x| − t, 0)`.
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Linear monotone operator `x ↦ Mx` (`M + Mᵀ` positive semidefinite).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMonotoneOperator {
    matrix: DMatrix<f64>,
    cocoercivity_beta: f64,
    strong_monotonicity: f64,
}

impl LinearMonotoneOperator {
    /// Validates monotonicity and computes the moduli.
    ///
    /// `β` is exact for invertible or symmetric `M` (`λ_min` of the symmetric
    /// part of `M⁻¹`, respectively `1/λ_max`) and 0 otherwise, which is always
    /// a valid constant. The zero operator gets `β = ∞`.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, GeometryError> {
        let d = matrix.nrows();
        if matrix.ncols() != d {
            return Err(GeometryError::DimensionMismatch {
                expected: d,
                found: matrix.ncols(),
            });
        }
        let (lo, hi) = symmetric_extremes(&matrix);
        let scale = matrix.norm();
        if lo < -rank_tolerance(scale, d) {
            return Err(GeometryError::NotMonotone(lo));
        }
        let strong_monotonicity = lo.max(0.0);
        let cocoercivity_beta = if scale == 0.0 {
            f64::INFINITY
        } else if let Some(inv) = invert_well_conditioned(&matrix) {
            symmetric_extremes(&inv).0.max(0.0)
        } else if (&matrix - matrix.transpose()).norm() <= 1e-12 * scale {
            1.0 / hi
        } else {
            0.0
        };
        Ok(Self {
            matrix,
            cocoercivity_beta,
            strong_monotonicity,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(DMatrix::zeros(dim, dim)).expect("zero operator is monotone")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cocoercivity_beta(&self) -> f64 {
        self.cocoercivity_beta
    }

    pub fn strong_monotonicity(&self) -> f64 {
        self.strong_monotonicity
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|&v| v == 0.0)
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    /// Factorization of `I + γM` for repeated resolvent evaluations.
    pub fn resolvent_map(&self, gamma: f64) -> Result<Resolvent, GeometryError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(GeometryError::InvalidStep(gamma));
        }
        let d = self.dim();
        let system = DMatrix::identity(d, d) + &self.matrix * gamma;
        let cond = condition_number(&system);
        if !(cond <= MAX_CONDITION) {
            return Err(GeometryError::IllConditioned(cond));
        }
        Ok(Resolvent {
            gamma,
            lu: system.lu(),
        })
    }

    /// `(I + γM)⁻¹ x`.
    pub fn resolvent(&self, gamma: f64, x: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        let map = self.resolvent_map(gamma)?;
        Ok(map.apply(x))
    }
}

/// Prepared `(I + γM)⁻¹`.
#[derive(Debug, Clone)]
pub struct Resolvent {
    gamma: f64,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Resolvent {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        self.apply_in_place(&mut y);
        y
    }

    pub fn apply_in_place(&self, x: &mut DVector<f64>) {
        // The condition check at construction guarantees invertibility.
        let ok = self.lu.solve_mut(x);
        debug_assert!(ok);
    }
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = SVD::new(m.clone(), false, false).singular_values;
    let hi = s.max();
    let lo = s.min();
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn invert_well_conditioned(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if condition_number(m) > MAX_CONDITION {
        return None;
    }
    m.clone().try_inverse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn random_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(d, |_, _| {
            scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut *rng)
        })
    }

    fn sample_sets() -> Vec<ConvexSet> {
        vec![
            ConvexSet::WholeSpace,
            ConvexSet::hyperplane(v(&[1.0, 2.0, -1.0]), 0.5).unwrap(),
            ConvexSet::halfspace(v(&[0.0, 1.0, 1.0]), -0.3).unwrap(),
            ConvexSet::boxed(v(&[-1.0, 0.0, -2.0]), v(&[1.0, 0.5, 2.0])).unwrap(),
            ConvexSet::ball(v(&[0.3, -0.2, 1.0]), 1.5).unwrap(),
            ConvexSet::affine(
                &DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, -1.0]),
                &v(&[1.0, 2.0]),
            )
            .unwrap(),
        ]
    }

    #[test]
    fn projection_examples() {
        let h = ConvexSet::hyperplane(v(&[1.0, 0.0]), 0.0).unwrap();
        assert_eq!(h.project(&v(&[3.0, 4.0])), v(&[0.0, 4.0]));
        let b = ConvexSet::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        assert_relative_eq!(b.project(&v(&[3.0, 4.0])), v(&[0.6, 0.8]), epsilon = 1e-15);
        let bx = ConvexSet::boxed(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        assert_eq!(bx.project(&v(&[2.0, -1.0])), v(&[1.0, 0.0]));
        assert_eq!(
            ConvexSet::WholeSpace.project(&v(&[2.0, -1.0])),
            v(&[2.0, -1.0])
        );
    }

    #[test]
    fn invalid_sets_are_rejected() {
        assert!(ConvexSet::boxed(v(&[1.0]), v(&[0.0])).is_err());
        assert!(ConvexSet::ball(v(&[0.0]), 0.0).is_err());
        assert!(ConvexSet::hyperplane(v(&[0.0, 0.0]), 1.0).is_err());
        let dependent = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        assert!(ConvexSet::affine(&dependent, &v(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn affine_projection_lands_on_constraints() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, -1.0]);
        let b = v(&[1.0, 2.0]);
        let set = ConvexSet::affine(&a, &b).unwrap();
        let p = set.project(&v(&[4.0, -2.0, 7.0]));
        assert_relative_eq!(&a * &p, b, epsilon = 1e-12);
        // residual is orthogonal to the constraint manifold
        let direction = v(&[1.0, -1.0, -1.0]);
        assert!((p - v(&[4.0, -2.0, 7.0])).dot(&direction).abs() < 1e-12);
    }

    #[test]
    fn projections_are_idempotent_and_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for set in sample_sets() {
            for _ in 0..100 {
                let x = random_vec(&mut rng, 3, 3.0);
                let y = random_vec(&mut rng, 3, 3.0);
                let px = set.project(&x);
                assert!(
                    (set.project(&px) - &px).norm() <= 1e-12 * (1.0 + px.norm()),
                    "{set:?}"
                );
                assert!((&px - set.project(&y)).norm() <= (&x - &y).norm() + 1e-12);
            }
        }
    }

    #[test]
    fn prox_examples() {
        let l1 = Regularizer::l1(1.0).unwrap();
        assert_eq!(l1.prox(1.0, &v(&[2.0, -0.5])), v(&[1.0, 0.0]));
        let c = Regularizer::Constant(3.0);
        assert_eq!(c.prox(0.7, &v(&[2.0, -0.5])), v(&[2.0, -0.5]));
        let ind = Regularizer::Indicator(ConvexSet::ball(v(&[0.0, 0.0]), 1.0).unwrap());
        assert_relative_eq!(
            ind.prox(7.0, &v(&[3.0, 4.0])),
            v(&[0.6, 0.8]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn prox_of_indicator_is_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for set in sample_sets() {
            let reg = Regularizer::Indicator(set.clone());
            for _ in 0..32 {
                let x = random_vec(&mut rng, 3, 2.0);
                for gamma in [0.1, 1.0, 10.0] {
                    assert!((reg.prox(gamma, &x) - set.project(&x)).norm() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn prox_satisfies_subgradient_inclusion() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let regs = vec![
            Regularizer::Zero,
            Regularizer::Constant(-1.0),
            Regularizer::l1(0.7).unwrap(),
            Regularizer::quadratic(h, v(&[0.1, -0.2, 0.3]), 1.0).unwrap(),
            Regularizer::quadratic(DMatrix::zeros(3, 3), v(&[1.0, 2.0, 3.0]), 0.0).unwrap(),
        ]
        .into_iter()
        .chain(sample_sets().into_iter().map(Regularizer::Indicator));
        for reg in regs {
            for _ in 0..50 {
                let x = random_vec(&mut rng, 3, 3.0);
                let gamma = 0.3;
                let y = reg.prox(gamma, &x);
                let q = (&x - &y) / gamma;
                assert!(reg.subgradient_contains(&y, &q, 1e-9), "{reg:?} at {x:?}");
            }
        }
    }

    #[test]
    fn affine_regularizer_has_constant_subgradient() {
        let q = v(&[1.0, -2.0]);
        let reg = Regularizer::quadratic(DMatrix::zeros(2, 2), q.clone(), 0.0).unwrap();
        let x = v(&[0.5, 0.5]);
        assert_relative_eq!(reg.prox(0.5, &x), &x - &q * 0.5, epsilon = 1e-15);
    }

    #[test]
    fn firm_nonexpansiveness() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let op = LinearMonotoneOperator::new(DMatrix::from_row_slice(
            3,
            3,
            &[
                1.0, 2.0, 0.0, //
                -2.0, 1.0, 0.0, //
                0.0, 0.0, 0.5,
            ],
        ))
        .unwrap();
        let resolvent = op.resolvent_map(0.8).unwrap();
        let regs = [
            Regularizer::l1(0.4).unwrap(),
            Regularizer::Indicator(sample_sets()[4].clone()),
        ];
        for _ in 0..100 {
            let x = random_vec(&mut rng, 3, 2.0);
            let y = random_vec(&mut rng, 3, 2.0);
            let mut images: Vec<(DVector<f64>, DVector<f64>)> = regs
                .iter()
                .map(|r| (r.prox(0.8, &x), r.prox(0.8, &y)))
                .collect();
            images.push((resolvent.apply(&x), resolvent.apply(&y)));
            for (tx, ty) in images {
                let lhs = (&tx - &ty).norm_squared();
                let rhs = (&x - &y).dot(&(&tx - &ty));
                assert!(lhs <= rhs + 1e-10);
            }
        }
    }

    #[test]
    fn resolvent_examples() {
        let x = v(&[3.0, 5.0]);
        assert_eq!(
            LinearMonotoneOperator::zero(2).resolvent(0.9, &x).unwrap(),
            x
        );
        let id = LinearMonotoneOperator::new(DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(id.resolvent(1.0, &x).unwrap(), &x / 2.0, epsilon = 1e-15);
        let diag = LinearMonotoneOperator::new(DMatrix::from_diagonal(&v(&[1.0, 3.0]))).unwrap();
        assert_relative_eq!(
            diag.resolvent(0.5, &x).unwrap(),
            v(&[2.0, 2.0]),
            epsilon = 1e-15
        );
        assert!(matches!(
            diag.resolvent(0.0, &x),
            Err(GeometryError::InvalidStep(_))
        ));
    }

    #[test]
    fn resolvent_matches_quadratic_prox() {
        let q = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.0, 0.1, 0.0, 0.3]);
        let op = LinearMonotoneOperator::new(q.clone()).unwrap();
        let reg = Regularizer::quadratic(q, DVector::zeros(3), 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..32 {
            let x = random_vec(&mut rng, 3, 4.0);
            for gamma in [0.1, 1.0, 10.0] {
                assert!((op.resolvent(gamma, &x).unwrap() - reg.prox(gamma, &x)).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn operator_moduli() {
        let sym = LinearMonotoneOperator::new(DMatrix::from_diagonal(&v(&[1.0, 4.0]))).unwrap();
        assert_relative_eq!(sym.cocoercivity_beta(), 0.25, epsilon = 1e-12);
        assert_relative_eq!(sym.strong_monotonicity(), 1.0, epsilon = 1e-12);
        let skew =
            LinearMonotoneOperator::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]))
                .unwrap();
        assert_eq!(skew.strong_monotonicity(), 0.0);
        assert_eq!(skew.cocoercivity_beta(), 0.0);
        assert!(LinearMonotoneOperator::new(DMatrix::from_diagonal(&v(&[1.0, -1.0]))).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, -1.0, 1.0]);
        let op = LinearMonotoneOperator::new(m.clone()).unwrap();
        let beta = op.cocoercivity_beta();
        assert!(beta > 0.0);
        for _ in 0..100 {
            let d = random_vec(&mut rng, 2, 1.0);
            let md = &m * &d;
            assert!(d.dot(&md) >= 0.0);
            assert!(d.dot(&md) >= beta * md.norm_squared() - 1e-12);
        }
    }

    #[test]
    fn ill_conditioned_resolvent_is_reported() {
        let op = LinearMonotoneOperator::new(DMatrix::from_diagonal(&v(&[1e-3, 1e14]))).unwrap();
        assert!(matches!(
            op.resolvent_map(1.0),
            Err(GeometryError::IllConditioned(_))
        ));
    }
}
