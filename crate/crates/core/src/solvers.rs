//! Stochastic gradient iterations with seedable sampling.
//!
//! All four methods share one forward-backward step
//!
//! ```text
//! x₊ = T_γ(x − γ ∇fᵢ(x))
//! ```
//!
//! where the backward map `T_γ` is the identity (SGM), a projection (projected
//! SGM), `prox_{γg}` (proximal SGM) or `(I + γA)⁻¹` (resolvent SGM). The
//! stochastic gradient mapping is `G = (x − x₊)/γ = q + ∇fᵢ(x)` with `q` in
//! the subdifferential of `g` (or `q = A x₊`) at `x₊`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{ConvexSet, GeometryError, LinearMonotoneOperator, Regularizer, Resolvent};
use crate::problems::{FiniteSumProblem, ProblemError, SolutionSet};
use crate::rng::{replication_rng, sample_index};

/// Iterates with a norm above this abort the run.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Trajectories longer than this store a thinned list of points.
pub const MAX_STORED_POINTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("method {method} cannot be combined with geometry {geometry}")]
    Incompatible {
        method: Method,
        geometry: &'static str,
    },
    #[error("dimension mismatch: problem has {expected}, geometry or start point has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite iterate at t = {t}")]
    NonFinite { t: usize },
    #[error("iterate norm {norm:e} exceeds the divergence guard at t = {t}")]
    Diverged { t: usize, norm: f64 },
    #[error("step-size hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("deterministic reference solve stalled after {iterations} iterations (residual {residual:e})")]
    ReferenceNotConverged { iterations: usize, residual: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Sgm,
    Psgm,
    ProxSgm,
    ResolventSgm,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sgm => "sgm",
            Method::Psgm => "psgm",
            Method::ProxSgm => "prox_sgm",
            Method::ResolventSgm => "resolvent_sgm",
        }
    }

    /// Projected and plain SGM use the sufficient-condition rate; proximal and
    /// resolvent SGM the floored rate with the `1 − 2γLM` factor.
    pub fn uses_prox_rate(self) -> bool {
        matches!(self, Method::ProxSgm | Method::ResolventSgm)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sgm" => Ok(Method::Sgm),
            "psgm" => Ok(Method::Psgm),
            "prox_sgm" => Ok(Method::ProxSgm),
            "resolvent_sgm" => Ok(Method::ResolventSgm),
            other => Err(SolverError::InvalidArgument(format!(
                "unknown method `{other}`"
            ))),
        }
    }
}

/// The `g`/`C`/`A` side of an iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    None,
    Set(ConvexSet),
    Regularizer(Regularizer),
    Operator(LinearMonotoneOperator),
}

impl Geometry {
    fn kind(&self) -> &'static str {
        match self {
            Geometry::None => "none",
            Geometry::Set(_) => "convex set",
            Geometry::Regularizer(_) => "regularizer",
            Geometry::Operator(_) => "linear operator",
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Geometry::None => None,
            Geometry::Set(s) => s.dim(),
            Geometry::Regularizer(Regularizer::Indicator(s)) => s.dim(),
            Geometry::Regularizer(Regularizer::Quadratic { linear, .. }) => Some(linear.len()),
            Geometry::Regularizer(_) => None,
            Geometry::Operator(op) => Some(op.dim()),
        }
    }

    /// The backward map leaves every point fixed.
    pub fn is_trivial(&self) -> bool {
        match self {
            Geometry::None => true,
            Geometry::Set(s) => s.is_whole_space(),
            Geometry::Regularizer(r) => r.is_constant(),
            Geometry::Operator(op) => op.is_zero(),
        }
    }
}

/// Step rule `γ_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy {
    Constant(f64),
    /// `γ_t = c / (1 + t)`.
    InverseT(f64),
}

impl StepPolicy {
    pub fn constant(gamma: f64) -> Result<Self, SolverError> {
        check_step(gamma)?;
        Ok(Self::Constant(gamma))
    }

    pub fn inverse_t(c: f64) -> Result<Self, SolverError> {
        check_step(c)?;
        Ok(Self::InverseT(c))
    }

    /// Inverse-t policy with the default constant `c = 2/μ`.
    pub fn inverse_t_for(mu: f64) -> Result<Self, SolverError> {
        if !(mu > 0.0) {
            return Err(SolverError::InvalidArgument(format!(
                "default inverse-t constant needs μ > 0, got {mu}"
            )));
        }
        Self::inverse_t(2.0 / mu)
    }

    #[inline]
    pub fn gamma(&self, t: usize) -> f64 {
        match *self {
            StepPolicy::Constant(g) => g,
            StepPolicy::InverseT(c) => c / (1.0 + t as f64),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, StepPolicy::Constant(_))
    }
}

fn check_step(gamma: f64) -> Result<(), SolverError> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(SolverError::InvalidStep(gamma))
    }
}

/// Scratch buffers reused across steps.
#[derive(Debug, Clone)]
pub struct Workspace {
    grad: DVector<f64>,
    resolvent: Option<Resolvent>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        Self {
            grad: DVector::zeros(dim),
            resolvent: None,
        }
    }
}

/// One evaluation of the stochastic gradient mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMapping {
    /// `G = (x − x₊)/γ`.
    pub g: DVector<f64>,
    /// `q = G − ∇fᵢ(x)`.
    pub q: DVector<f64>,
    pub next: DVector<f64>,
}

/// A method bound to its problem and geometry, plus the reference solution
/// set distances are measured against.
#[derive(Debug, Clone)]
pub struct Scheme {
    problem: Arc<FiniteSumProblem>,
    method: Method,
    geometry: Geometry,
    target: SolutionSet,
}

impl Scheme {
    /// Checks method/geometry compatibility and resolves the reference
    /// solution: the problem's own solution set when the backward map is
    /// trivial, otherwise a high-accuracy deterministic forward-backward solve.
    pub fn new(
        problem: Arc<FiniteSumProblem>,
        method: Method,
        geometry: Geometry,
    ) -> Result<Self, SolverError> {
        let compatible = matches!(
            (method, &geometry),
            (Method::Sgm, Geometry::None)
                | (Method::Psgm, Geometry::Set(_))
                | (Method::ProxSgm, Geometry::Regularizer(_))
                | (Method::ResolventSgm, Geometry::Operator(_))
        );
        if !compatible {
            return Err(SolverError::Incompatible {
                method,
                geometry: geometry.kind(),
            });
        }
        if let Some(d) = geometry.dim() {
            if d != problem.dim() {
                return Err(SolverError::DimensionMismatch {
                    expected: problem.dim(),
                    found: d,
                });
            }
        }
        let target = if geometry.is_trivial() {
            problem.solution().clone()
        } else {
            SolutionSet::Point(solve_reference(&problem, &geometry, REFERENCE_TOLERANCE)?)
        };
        Ok(Self {
            problem,
            method,
            geometry,
            target,
        })
    }

    pub fn sgm(problem: Arc<FiniteSumProblem>) -> Self {
        Self::new(problem, Method::Sgm, Geometry::None).expect("plain SGM is always valid")
    }

    /// Overrides the reference solution set.
    pub fn with_target(mut self, target: SolutionSet) -> Result<Self, SolverError> {
        if target.dim() != self.problem.dim() {
            return Err(SolverError::DimensionMismatch {
                expected: self.problem.dim(),
                found: target.dim(),
            });
        }
        self.target = target;
        Ok(self)
    }

    pub fn problem(&self) -> &FiniteSumProblem {
        &self.problem
    }

    pub fn problem_arc(&self) -> &Arc<FiniteSumProblem> {
        &self.problem
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn target(&self) -> &SolutionSet {
        &self.target
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    /// Projection of the zero vector onto the feasible set.
    pub fn default_start(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.dim());
        match &self.geometry {
            Geometry::Set(set) | Geometry::Regularizer(Regularizer::Indicator(set)) => {
                set.project_in_place(&mut x)
            }
            _ => {}
        }
        x
    }

    /// Applies the backward map in place.
    fn backward(
        &self,
        gamma: f64,
        y: &mut DVector<f64>,
        ws: &mut Workspace,
    ) -> Result<(), GeometryError> {
        match &self.geometry {
            Geometry::None => {}
            Geometry::Set(set) => set.project_in_place(y),
            Geometry::Regularizer(reg) => reg.prox_in_place(gamma, y),
            Geometry::Operator(op) => {
                let stale = ws.resolvent.as_ref().map_or(true, |r| r.gamma() != gamma);
                if stale {
                    ws.resolvent = Some(op.resolvent_map(gamma)?);
                }
                ws.resolvent
                    .as_ref()
                    .expect("prepared above")
                    .apply_in_place(y);
            }
        }
        Ok(())
    }

    /// `out ← T_γ(x − γ ∇fᵢ(x))`.
    pub fn step_into(
        &self,
        gamma: f64,
        x: &DVector<f64>,
        i: usize,
        ws: &mut Workspace,
        out: &mut DVector<f64>,
    ) -> Result<(), GeometryError> {
        self.problem.component_gradient_into(i, x, &mut ws.grad);
        out.copy_from(x);
        out.axpy(-gamma, &ws.grad, 1.0);
        self.backward(gamma, out, ws)
    }

    pub fn step(
        &self,
        gamma: f64,
        x: &DVector<f64>,
        i: usize,
    ) -> Result<DVector<f64>, SolverError> {
        check_step(gamma)?;
        let mut ws = Workspace::new(self.dim());
        let mut out = DVector::zeros(self.dim());
        self.step_into(gamma, x, i, &mut ws, &mut out)?;
        Ok(out)
    }

    /// `G(x, i) = (x − x₊)/γ` and its decomposition `G = q + ∇fᵢ(x)`.
    pub fn gradient_mapping(
        &self,
        gamma: f64,
        x: &DVector<f64>,
        i: usize,
    ) -> Result<GradientMapping, SolverError> {
        let next = self.step(gamma, x, i)?;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(SolverError::NonFinite { t: 0 });
        }
        let g = (x - &next) / gamma;
        let q = &g - self.problem.component(i).gradient(x);
        Ok(GradientMapping { g, q, next })
    }

    /// Whether `q` is a valid backward-side term at `y`: `q ∈ ∂g(y)`, `q` in
    /// the normal cone of `C` at `y`, or `q = A y`.
    pub fn backward_term_valid(&self, y: &DVector<f64>, q: &DVector<f64>, tol: f64) -> bool {
        match &self.geometry {
            Geometry::None => q.norm() <= tol,
            Geometry::Set(set) => set.contains(y, tol) && set.normal_cone_contains(y, q, tol),
            Geometry::Regularizer(reg) => reg.subgradient_contains(y, q, tol),
            Geometry::Operator(op) => (op.apply(y) - q).norm() <= tol * (1.0 + q.norm()),
        }
    }

    /// Exact `E_i ‖x₊ − P_S(x₊)‖²` by enumerating all components.
    pub fn expected_next_dist_sq(&self, gamma: f64, x: &DVector<f64>) -> Result<f64, SolverError> {
        check_step(gamma)?;
        let n = self.problem.n_components();
        let mut ws = Workspace::new(self.dim());
        let mut out = DVector::zeros(self.dim());
        let mut total = 0.0;
        for i in 0..n {
            self.step_into(gamma, x, i, &mut ws, &mut out)?;
            total += self.target.dist_sq(&out);
        }
        Ok(total / n as f64)
    }
}

/// Relative fixed-point residual the reference solve must reach.
pub const REFERENCE_TOLERANCE: f64 = 1e-12;

/// Deterministic forward-backward iteration `x ← T_{1/L}(x − ∇f(x)/L)` run to
/// a fixed-point residual of `tol` relative to `1 + ‖x‖`.
pub fn solve_reference(
    problem: &FiniteSumProblem,
    geometry: &Geometry,
    tol: f64,
) -> Result<DVector<f64>, SolverError> {
    const MAX_ITERS: usize = 2_000_000;
    let d = problem.dim();
    let lip = problem.lipschitz();
    let gamma = if lip > 0.0 { 1.0 / lip } else { 1.0 };
    let scheme_like = Scheme {
        problem: Arc::new(problem.clone()),
        method: Method::Sgm,
        geometry: geometry.clone(),
        target: problem.solution().clone(),
    };
    let mut ws = Workspace::new(d);
    let mut x = scheme_like.default_start();
    let mut next = DVector::zeros(d);
    let mut grad = DVector::zeros(d);
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        problem.gradient_into(&x, &mut grad);
        next.copy_from(&x);
        next.axpy(-gamma, &grad, 1.0);
        scheme_like.backward(gamma, &mut next, &mut ws)?;
        residual = (&next - &x).norm() / (1.0 + next.norm());
        std::mem::swap(&mut x, &mut next);
        if !residual.is_finite() {
            break;
        }
        if residual <= tol * 1e-3 {
            return Ok(x);
        }
    }
    if residual <= tol {
        Ok(x)
    } else {
        Err(SolverError::ReferenceNotConverged {
            iterations: MAX_ITERS,
            residual,
        })
    }
}

/// Which iterates a trajectory keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recording {
    /// Every iterate, index and step.
    Full,
    /// Every iterate when `T ≤ 10⁴`, else every `⌈T/10⁴⌉`-th; all indices
    /// and steps.
    #[default]
    Thinned,
    /// Distances only.
    DistanceOnly,
}

/// Everything needed to reproduce one replication.
#[derive(Debug, Clone)]
pub struct SolverRun {
    pub scheme: Arc<Scheme>,
    pub step: StepPolicy,
    pub x0: Option<DVector<f64>>,
    pub iters: usize,
    pub seed: u64,
    pub replication: u64,
    pub recording: Recording,
}

impl SolverRun {
    pub fn new(scheme: Arc<Scheme>, step: StepPolicy, iters: usize, seed: u64) -> Self {
        Self {
            scheme,
            step,
            x0: None,
            iters,
            seed,
            replication: 0,
            recording: Recording::default(),
        }
    }

    pub fn with_start(mut self, x0: DVector<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn with_recording(mut self, recording: Recording) -> Self {
        self.recording = recording;
        self
    }

    pub fn with_replication(mut self, replication: u64) -> Self {
        self.replication = replication;
        self
    }
}

/// One recorded run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub replication: u64,
    /// `points[k] = x_{k · point_stride}`.
    pub points: Vec<DVector<f64>>,
    pub point_stride: usize,
    /// `‖x_t − P_S(x_t)‖²` for `t = 0..=T`.
    pub dist_sq: Vec<f64>,
    /// `i_t` for `t = 0..T` (empty for distance-only recording).
    pub sampled_indices: Vec<usize>,
    /// `γ_t` for `t = 0..T` (empty for distance-only recording).
    pub step_values: Vec<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.dist_sq.len() - 1
    }

    /// Iterate `x_t` if it was stored.
    pub fn point(&self, t: usize) -> Option<&DVector<f64>> {
        if self.point_stride == 0 || t % self.point_stride != 0 {
            return None;
        }
        self.points.get(t / self.point_stride)
    }

    pub fn has_all_points(&self) -> bool {
        self.point_stride == 1 && self.points.len() == self.dist_sq.len()
    }
}

fn point_stride(recording: Recording, iters: usize) -> usize {
    match recording {
        Recording::Full => 1,
        Recording::Thinned => iters.div_ceil(MAX_STORED_POINTS).max(1),
        Recording::DistanceOnly => 0,
    }
}

/// Runs one replication. Identical inputs give bitwise identical output.
pub fn run(spec: &SolverRun) -> Result<Trajectory, SolverError> {
    let scheme = spec.scheme.as_ref();
    let d = scheme.dim();
    let n = scheme.problem().n_components();
    let mut x = match &spec.x0 {
        Some(x0) if x0.len() != d => {
            return Err(SolverError::DimensionMismatch {
                expected: d,
                found: x0.len(),
            })
        }
        Some(x0) => x0.clone(),
        None => scheme.default_start(),
    };
    if !x.iter().all(|v| v.is_finite()) {
        return Err(SolverError::NonFinite { t: 0 });
    }
    let (StepPolicy::Constant(g) | StepPolicy::InverseT(g)) = spec.step;
    check_step(g)?;

    let stride = point_stride(spec.recording, spec.iters);
    let keep_steps = spec.recording != Recording::DistanceOnly;
    let mut traj = Trajectory {
        replication: spec.replication,
        points: Vec::with_capacity(if stride > 0 {
            spec.iters / stride + 1
        } else {
            0
        }),
        point_stride: stride,
        dist_sq: Vec::with_capacity(spec.iters + 1),
        sampled_indices: Vec::with_capacity(if keep_steps { spec.iters } else { 0 }),
        step_values: Vec::with_capacity(if keep_steps { spec.iters } else { 0 }),
    };
    let target = scheme.target();
    traj.dist_sq.push(target.dist_sq(&x));
    if stride > 0 {
        traj.points.push(x.clone());
    }

    let mut rng = replication_rng(spec.seed, spec.replication);
    let mut ws = Workspace::new(d);
    let mut next = DVector::zeros(d);
    for t in 0..spec.iters {
        let i = sample_index(&mut rng, n);
        let gamma = spec.step.gamma(t);
        scheme.step_into(gamma, &x, i, &mut ws, &mut next)?;
        let norm = next.norm();
        if !norm.is_finite() {
            return Err(SolverError::NonFinite { t: t + 1 });
        }
        if norm > DIVERGENCE_NORM {
            return Err(SolverError::Diverged { t: t + 1, norm });
        }
        std::mem::swap(&mut x, &mut next);
        traj.dist_sq.push(target.dist_sq(&x));
        if keep_steps {
            traj.sampled_indices.push(i);
            traj.step_values.push(gamma);
        }
        if stride > 0 && (t + 1) % stride == 0 {
            traj.points.push(x.clone());
        }
    }
    Ok(traj)
}

/// Runs replications `range` concurrently on the current rayon pool; output is
/// ordered by replication index.
pub fn run_replications(
    spec: &SolverRun,
    range: std::ops::Range<u64>,
) -> Result<Vec<Trajectory>, SolverError> {
    range
        .into_par_iter()
        .map(|r| run(&spec.clone().with_replication(r)))
        .collect()
}

/// A step size with its predicted contraction `ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecommendation {
    pub gamma: f64,
    pub rho: f64,
}

/// `ρ = γμ(1 − γLM)`, the contraction of projected SGM under weak growth.
pub fn projected_rho(gamma: f64, lipschitz: f64, m: f64, mu: f64) -> f64 {
    gamma * mu * (1.0 - gamma * lipschitz * m)
}

/// `ρ = γμ(1 − 2γLM)`, the contraction of proximal SGM under weak growth.
pub fn proximal_rho(gamma: f64, lipschitz: f64, m: f64, mu: f64) -> f64 {
    gamma * mu * (1.0 - 2.0 * gamma * lipschitz * m)
}

/// Step maximizing the predicted contraction for `method`.
///
/// Projected/plain SGM: `γ = 1/(2LM)`, `ρ = μ/(4LM)`, requiring `μ < 4LM`.
/// Proximal/resolvent SGM: `γ = 1/(4LM)`, `ρ = μ/(8LM)`.
pub fn recommend_step(
    lipschitz: f64,
    m: f64,
    mu: f64,
    method: Method,
) -> Result<StepRecommendation, SolverError> {
    for (name, v) in [("L", lipschitz), ("M", m), ("mu", mu)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(SolverError::InvalidArgument(format!(
                "{name} must be positive and finite, got {v}"
            )));
        }
    }
    let lm = lipschitz * m;
    let rec = if method.uses_prox_rate() {
        let gamma = 1.0 / (4.0 * lm);
        StepRecommendation {
            gamma,
            rho: proximal_rho(gamma, lipschitz, m, mu),
        }
    } else {
        if !(mu < 4.0 * lm) {
            return Err(SolverError::Hypothesis(format!(
                "the projected rate needs μ < 4LM, got μ = {mu} and 4LM = {} \
                 (the non-strict form μ ≤ 4LM is not accepted)",
                4.0 * lm
            )));
        }
        let gamma = 1.0 / (2.0 * lm);
        StepRecommendation {
            gamma,
            rho: projected_rho(gamma, lipschitz, m, mu),
        }
    };
    if !(rec.rho > 0.0 && rec.rho < 1.0) {
        return Err(SolverError::Hypothesis(format!(
            "predicted contraction ρ = {} is outside (0, 1)",
            rec.rho
        )));
    }
    Ok(rec)
}

/// Contraction predicted for a given constant step, checking the step bound
/// each method needs: `γ ≤ 1/(2LM)` for projected SGM and `γ < 1/(2LM)` for
/// the proximal variants.
pub fn predicted_rho(
    gamma: f64,
    lipschitz: f64,
    m: f64,
    mu: f64,
    method: Method,
) -> Result<f64, SolverError> {
    check_step(gamma)?;
    let bound = 1.0 / (2.0 * lipschitz * m);
    let rho = if method.uses_prox_rate() {
        if !(gamma < bound) {
            return Err(SolverError::Hypothesis(format!(
                "proximal rate needs γ < 1/(2LM) = {bound}, got {gamma}"
            )));
        }
        proximal_rho(gamma, lipschitz, m, mu)
    } else {
        if !(mu < 4.0 * lipschitz * m) {
            return Err(SolverError::Hypothesis(format!(
                "projected rate needs μ < 4LM = {}",
                4.0 * lipschitz * m
            )));
        }
        if gamma > bound {
            return Err(SolverError::Hypothesis(format!(
                "projected rate needs γ ≤ 1/(2LM) = {bound}, got {gamma}"
            )));
        }
        projected_rho(gamma, lipschitz, m, mu)
    };
    if rho > 0.0 && rho < 1.0 {
        Ok(rho)
    } else {
        Err(SolverError::Hypothesis(format!(
            "predicted contraction ρ = {rho} is outside (0, 1)"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{
        make_kaczmarz_problem, make_two_point_quadratic, KaczmarzSystem, RowComponent,
    };
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn two_point() -> Arc<FiniteSumProblem> {
        Arc::new(make_two_point_quadratic())
    }

    #[test]
    fn two_point_sgm_first_step_and_recurrence() {
        let scheme = Arc::new(Scheme::sgm(two_point()));
        let traj = run(
            &SolverRun::new(scheme, StepPolicy::constant(0.5).unwrap(), 50, 3)
                .with_recording(Recording::Full),
        )
        .unwrap();
        assert_eq!(traj.dist_sq[0], 0.0);
        assert_eq!(traj.points[1].norm(), 0.5);
        // x₊ = (1 − γ) x + γ c with c = ±1 the sampled center
        for t in 0..50 {
            let c = if traj.sampled_indices[t] == 0 {
                1.0
            } else {
                -1.0
            };
            assert_eq!(traj.points[t + 1][0], 0.5 * traj.points[t][0] + 0.5 * c);
        }
    }

    #[test]
    fn projection_onto_single_row_hyperplane_is_absorbing() {
        let a = v(&[0.6, 0.8]);
        let row = RowComponent::new(a.clone(), 2.0);
        let problem = Arc::new(FiniteSumProblem::from_quadratics(vec![Arc::new(row)]).unwrap());
        let set = ConvexSet::hyperplane(a, 2.0).unwrap();
        let scheme =
            Arc::new(Scheme::new(problem, Method::Psgm, Geometry::Set(set.clone())).unwrap());
        let run_spec = SolverRun::new(scheme, StepPolicy::constant(1.0).unwrap(), 20, 1)
            .with_start(v(&[-3.0, 7.0]))
            .with_recording(Recording::Full);
        let traj = run(&run_spec).unwrap();
        assert!(set.contains(&traj.points[1], 1e-12));
        for p in &traj.points[1..] {
            assert_eq!(p, &traj.points[1]);
        }
    }

    #[test]
    fn gradient_mapping_with_constant_g() {
        let problem = two_point();
        for geometry in [
            Geometry::Regularizer(Regularizer::Constant(4.0)),
            Geometry::Regularizer(Regularizer::Indicator(ConvexSet::WholeSpace)),
        ] {
            let scheme = Scheme::new(problem.clone(), Method::ProxSgm, geometry).unwrap();
            let x = v(&[2.5]);
            let gm = scheme.gradient_mapping(0.3, &x, 1).unwrap();
            assert!(gm.q.norm() <= 1e-14);
            assert_relative_eq!(gm.g, problem.component(1).gradient(&x), epsilon = 1e-14);
        }
    }

    #[test]
    fn gradient_mapping_with_l1() {
        // f₀ = 0.5 (x − 2)², so ∇f₀(3) = 1.
        let c = crate::problems::QuadraticComponent::centered(DMatrix::identity(1, 1), &v(&[2.0]))
            .unwrap();
        let problem = Arc::new(FiniteSumProblem::from_quadratics(vec![Arc::new(c)]).unwrap());
        let scheme = Scheme::new(
            problem,
            Method::ProxSgm,
            Geometry::Regularizer(Regularizer::l1(1.0).unwrap()),
        )
        .unwrap();
        let gm = scheme.gradient_mapping(1.0, &v(&[3.0]), 0).unwrap();
        assert_eq!(gm.next, v(&[1.0]));
        assert_eq!(gm.g, v(&[2.0]));
        assert_eq!(gm.q, v(&[1.0]));
        assert!(scheme.backward_term_valid(&gm.next, &gm.q, 1e-12));
    }

    #[test]
    fn gradient_mapping_with_resolvent_gives_operator_image() {
        let problem = two_point();
        let op = LinearMonotoneOperator::new(DMatrix::from_element(1, 1, 2.0)).unwrap();
        let scheme = Scheme::new(problem, Method::ResolventSgm, Geometry::Operator(op)).unwrap();
        let gm = scheme.gradient_mapping(0.25, &v(&[1.5]), 0).unwrap();
        assert!(scheme.backward_term_valid(&gm.next, &gm.q, 1e-12));
    }

    #[test]
    fn incompatible_geometry_is_rejected() {
        let err = Scheme::new(
            two_point(),
            Method::Psgm,
            Geometry::Regularizer(Regularizer::Zero),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            SolverError::Incompatible {
                method: Method::Psgm,
                ..
            }
        ));
        let err = Scheme::new(
            two_point(),
            Method::Sgm,
            Geometry::Set(ConvexSet::WholeSpace),
        )
        .unwrap_err();
        assert!(matches!(err, SolverError::Incompatible { .. }));
        let ball = ConvexSet::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        let err = Scheme::new(two_point(), Method::Psgm, Geometry::Set(ball)).unwrap_err();
        assert!(matches!(err, SolverError::DimensionMismatch { .. }));
    }

    #[test]
    fn reference_solution_for_l1() {
        // f = 0.5 x² + 0.5 with g = 0.25|x| has minimizer 0; shift it.
        let c = crate::problems::QuadraticComponent::centered(DMatrix::identity(1, 1), &v(&[2.0]))
            .unwrap();
        let problem = Arc::new(FiniteSumProblem::from_quadratics(vec![Arc::new(c)]).unwrap());
        let scheme = Scheme::new(
            problem,
            Method::ProxSgm,
            Geometry::Regularizer(Regularizer::l1(0.5).unwrap()),
        )
        .unwrap();
        assert_relative_eq!(scheme.target().representative()[0], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let scheme = Arc::new(Scheme::sgm(two_point()));
        let err = run(&SolverRun::new(
            scheme,
            StepPolicy::constant(5.0).unwrap(),
            1000,
            0,
        ))
        .unwrap_err();
        match err {
            SolverError::Diverged { t, norm } => {
                assert!(t > 1 && t < 1000);
                assert!(norm > DIVERGENCE_NORM);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn thinning_rule() {
        assert_eq!(point_stride(Recording::Thinned, 10_000), 1);
        assert_eq!(point_stride(Recording::Thinned, 10_001), 2);
        assert_eq!(point_stride(Recording::Thinned, 100_000), 10);
        let scheme = Arc::new(Scheme::sgm(two_point()));
        let traj = run(&SolverRun::new(
            scheme,
            StepPolicy::constant(0.1).unwrap(),
            25_000,
            0,
        ))
        .unwrap();
        assert_eq!(traj.point_stride, 3);
        assert_eq!(traj.points.len(), 25_000 / 3 + 1);
        assert_eq!(traj.dist_sq.len(), 25_001);
        assert_eq!(
            traj.point(3).unwrap()[0] * traj.point(3).unwrap()[0],
            traj.dist_sq[3]
        );
        assert!(traj.point(4).is_none());
    }

    #[test]
    fn inverse_t_policy() {
        let p = StepPolicy::inverse_t_for(0.5).unwrap();
        assert_eq!(p.gamma(0), 4.0);
        assert_eq!(p.gamma(3), 1.0);
        assert!(StepPolicy::constant(0.0).is_err());
        assert!(StepPolicy::inverse_t_for(0.0).is_err());
    }

    #[test]
    fn recommend_step_examples() {
        let r = recommend_step(1.0, 1.0, 1.0, Method::Psgm).unwrap();
        assert_eq!((r.gamma, r.rho), (0.5, 0.25));
        let r = recommend_step(1.0, 2.0, 1.0, Method::Psgm).unwrap();
        assert_eq!((r.gamma, r.rho), (0.25, 0.125));
        let r = recommend_step(1.0, 1.0, 1.0, Method::ProxSgm).unwrap();
        assert_eq!((r.gamma, r.rho), (0.25, 0.125));
        let err = recommend_step(1.0, 1.0, 4.0, Method::Sgm).unwrap_err();
        assert!(matches!(err, SolverError::Hypothesis(msg) if msg.contains("μ < 4LM")));
        assert!(recommend_step(0.0, 1.0, 1.0, Method::Sgm).is_err());
    }

    #[test]
    fn recommended_prox_step_maximizes_rho() {
        let (l, m, mu) = (1.3, 2.7, 0.4);
        let best = recommend_step(l, m, mu, Method::ProxSgm).unwrap();
        for k in 1..200 {
            let gamma = k as f64 / (200.0 * 2.0 * l * m);
            assert!(proximal_rho(gamma, l, m, mu) <= best.rho + 1e-15);
        }
        let best = recommend_step(l, m, mu, Method::Psgm).unwrap();
        for k in 1..=200 {
            let gamma = k as f64 / (200.0 * 2.0 * l * m);
            assert!(projected_rho(gamma, l, m, mu) <= best.rho + 1e-15);
        }
    }

    #[test]
    fn predicted_rho_enforces_step_bounds() {
        assert!(predicted_rho(0.5, 1.0, 1.0, 1.0, Method::Sgm).is_ok());
        assert!(predicted_rho(0.6, 1.0, 1.0, 1.0, Method::Sgm).is_err());
        assert!(predicted_rho(0.5, 1.0, 1.0, 1.0, Method::ProxSgm).is_err());
        assert_relative_eq!(
            predicted_rho(0.25, 1.0, 1.0, 1.0, Method::ProxSgm).unwrap(),
            0.125
        );
    }

    #[test]
    fn kaczmarz_one_step_contraction_holds() {
        let sys = KaczmarzSystem::gaussian_consistent(20, 5, 42).unwrap();
        let problem = Arc::new(make_kaczmarz_problem(&sys));
        let gram = sys.gram();
        let (lo, hi) = crate::linalg::symmetric_extremes(&gram);
        let m = 20.0 * hi / (lo * lo);
        let rec =
            recommend_step(problem.lipschitz(), m, problem.restricted_mu(), Method::Sgm).unwrap();
        let scheme = Arc::new(Scheme::sgm(problem));
        let traj = run(&SolverRun::new(
            scheme.clone(),
            StepPolicy::constant(rec.gamma).unwrap(),
            200,
            9,
        )
        .with_recording(Recording::Full))
        .unwrap();
        for t in 0..=200 {
            let expected = scheme
                .expected_next_dist_sq(rec.gamma, &traj.points[t])
                .unwrap();
            assert!(
                expected <= (1.0 - rec.rho) * traj.dist_sq[t] * (1.0 + 1e-12) + 1e-300,
                "t = {t}"
            );
        }
    }
}
