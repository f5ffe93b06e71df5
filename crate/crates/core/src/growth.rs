//! Growth constants computed exactly on probe sets.
//!
//! For a finite sum every conditional expectation is an average over the
//! components, so the strong growth constant `B`, the weak growth pair
//! `(M, σ²)` and both sides of the one-step necessary condition are exact
//! quantities at each probe point. Constants are only claimed on the probe set
//! that produced them; every report carries its descriptor.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::symmetric_extremes;
use crate::problems::{FiniteSumProblem, KaczmarzSystem, ProbeGrid, ProblemError};
use crate::solvers::{Scheme, SolverError, Trajectory, Workspace};

/// `‖∇f(x)‖` at or below this counts as a zero gradient.
pub const ZERO_GRADIENT: f64 = 1e-12;

/// `σ²` at or below this counts as zero.
pub const ZERO_SIGMA_SQ: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GrowthError {
    #[error("probe set is empty")]
    EmptyProbes,
    #[error("probe {0} is not finite")]
    NonFiniteProbe(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("trajectory must store every iterate")]
    ThinnedTrajectory,
    #[error("no contraction: measured one-step factor {0} is not below 1")]
    NoContraction(f64),
    #[error(
        "weak growth bound with M = {m}, σ² = {sigma_sq} fails at probe {probe}: {lhs} > {rhs}"
    )]
    BoundViolated {
        m: f64,
        sigma_sq: f64,
        probe: usize,
        lhs: f64,
        rhs: f64,
    },
    #[error("malformed growth record: {0}")]
    Record(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Where the growth chain `SGC ⟹ GC ⟹ WGC` places a problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Sgc,
    Gc,
    Wgc,
    None,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Sgc => "SGC",
            Classification::Gc => "GC",
            Classification::Wgc => "WGC",
            Classification::None => "none",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Classification {
    type Err = GrowthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "SGC" => Ok(Self::Sgc),
            "GC" => Ok(Self::Gc),
            "WGC" => Ok(Self::Wgc),
            "none" => Ok(Self::None),
            other => Err(GrowthError::Record(format!(
                "unknown classification `{other}`"
            ))),
        }
    }
}

/// How a probe set was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDescriptor {
    pub seed: Option<u64>,
    pub scales: Vec<f64>,
    /// Points added beyond the seeded grid (e.g. solution points).
    pub extra_points: usize,
}

/// Probe points with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub points: Vec<DVector<f64>>,
    pub descriptor: ProbeDescriptor,
}

impl ProbeSet {
    pub fn grid(grid: &ProbeGrid, dim: usize) -> Self {
        Self {
            points: grid.points(dim),
            descriptor: ProbeDescriptor {
                seed: Some(grid.seed),
                scales: grid.scales.clone(),
                extra_points: 0,
            },
        }
    }

    pub fn explicit(points: Vec<DVector<f64>>) -> Self {
        let extra_points = points.len();
        Self {
            points,
            descriptor: ProbeDescriptor {
                seed: None,
                scales: Vec::new(),
                extra_points,
            },
        }
    }

    /// Default grid plus the representative solution point, so that a zero
    /// gradient probe pins down `σ²`.
    pub fn for_problem(problem: &FiniteSumProblem, grid: &ProbeGrid) -> Self {
        let mut set = Self::grid(grid, problem.dim());
        set.push(problem.solution().representative().clone());
        set
    }

    pub fn push(&mut self, point: DVector<f64>) {
        self.points.push(point);
        self.descriptor.extra_points += 1;
    }

    fn check(&self) -> Result<(), GrowthError> {
        if self.points.is_empty() {
            return Err(GrowthError::EmptyProbes);
        }
        if let Some(k) = self
            .points
            .iter()
            .position(|p| !p.iter().all(|v| v.is_finite()))
        {
            return Err(GrowthError::NonFiniteProbe(k));
        }
        Ok(())
    }
}

/// Measured or analytic growth constants.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    /// Smallest strong growth constant on the probes; `∞` when none exists.
    pub b_sgc: Option<f64>,
    pub m_wgc: f64,
    pub sigma_sq: f64,
    pub classification: Classification,
    pub probes: ProbeDescriptor,
    pub analytic: bool,
    /// All probe gradients vanished, so `M = 1` is a convention.
    pub degenerate: bool,
}

/// `(‖∇f(x)‖², E‖∇fᵢ(x)‖², E‖∇fᵢ(x) − ∇f(x)‖²)` at each probe, evaluated in
/// parallel and returned in probe order.
fn moment_triples(
    problem: &FiniteSumProblem,
    probes: &ProbeSet,
) -> Result<Vec<(f64, f64, f64)>, GrowthError> {
    probes.check()?;
    probes
        .points
        .par_iter()
        .map(|x| {
            let m = problem.exact_conditional_moment(x)?;
            Ok((m.mean_grad.norm_squared(), m.second_moment, m.variance))
        })
        .collect()
}

/// Minimal `(M, σ²)` with `E‖∇fᵢ(x)‖² ≤ M ‖∇f(x)‖² + σ²` on the probes,
/// minimizing `σ²` first: `σ²` is the largest moment at a zero-gradient probe
/// and `M` the largest remaining excess ratio, clamped below at 1. The ratio
/// is evaluated as `1 + (variance − σ²)/‖∇f‖²`, and variance excesses at
/// round-off level are ignored, so that a constant variance gives `M = 1`.
pub fn fit_wgc(problem: &FiniteSumProblem, probes: &ProbeSet) -> Result<GrowthReport, GrowthError> {
    let triples = moment_triples(problem, probes)?;
    let zero_sq = ZERO_GRADIENT * ZERO_GRADIENT;
    let sigma_sq = triples
        .iter()
        .filter(|(g, _, _)| *g <= zero_sq)
        .map(|&(_, moment, _)| moment)
        .fold(0.0, f64::max);
    let mut degenerate = true;
    let mut m = 1.0f64;
    let variance_tol = ZERO_SIGMA_SQ * (1.0 + sigma_sq);
    for &(g, _, variance) in &triples {
        if g > zero_sq {
            degenerate = false;
            let excess = variance - sigma_sq;
            if excess > variance_tol {
                m = m.max(1.0 + excess / g);
            }
        }
    }
    let classification = if !m.is_finite() {
        Classification::None
    } else if sigma_sq <= ZERO_SIGMA_SQ {
        Classification::Gc
    } else {
        Classification::Wgc
    };
    Ok(GrowthReport {
        b_sgc: None,
        m_wgc: m,
        sigma_sq,
        classification,
        probes: probes.descriptor.clone(),
        analytic: false,
        degenerate,
    })
}

/// `sup_x maxᵢ ‖∇fᵢ(x)‖² / ‖∇f(x)‖²` over the probes; infinite when a probe
/// has a zero full gradient but a nonzero component gradient.
pub fn fit_sgc(problem: &FiniteSumProblem, probes: &ProbeSet) -> Result<f64, GrowthError> {
    probes.check()?;
    let ratios: Vec<f64> = probes
        .points
        .par_iter()
        .map(|x| {
            let g = problem.gradient(x).norm();
            let worst = problem.max_component_grad_sq(x);
            if g <= ZERO_GRADIENT {
                if worst.sqrt() > ZERO_GRADIENT {
                    f64::INFINITY
                } else {
                    0.0
                }
            } else {
                worst / (g * g)
            }
        })
        .collect();
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

/// Weak growth fit upgraded to `SGC` when the strong growth constant is finite.
pub fn classify(
    problem: &FiniteSumProblem,
    probes: &ProbeSet,
) -> Result<GrowthReport, GrowthError> {
    let mut report = fit_wgc(problem, probes)?;
    let b = fit_sgc(problem, probes)?;
    report.b_sgc = Some(b);
    if b.is_finite() && report.sigma_sq <= ZERO_SIGMA_SQ {
        report.classification = Classification::Sgc;
    }
    Ok(report)
}

/// `M = m ‖A‖² ‖(AᵀA)⁻¹‖²` from the extreme eigenvalues of `AᵀA`.
pub fn kaczmarz_m(sys: &KaczmarzSystem) -> Result<f64, GrowthError> {
    let (lo, hi) = symmetric_extremes(&sys.gram());
    if !(lo > 0.0) {
        return Err(ProblemError::RankDeficient {
            rank: sys.cols().saturating_sub(1),
            dim: sys.cols(),
        }
        .into());
    }
    Ok(sys.rows() as f64 * hi / (lo * lo))
}

/// Analytic report for a consistent Kaczmarz system (`σ² = 0`).
pub fn kaczmarz_report(sys: &KaczmarzSystem) -> Result<GrowthReport, GrowthError> {
    if !sys.is_consistent() {
        return Err(GrowthError::InvalidArgument(
            "analytic Kaczmarz constants need a consistent system".into(),
        ));
    }
    Ok(GrowthReport {
        b_sgc: None,
        m_wgc: kaczmarz_m(sys)?,
        sigma_sq: 0.0,
        classification: Classification::Gc,
        probes: ProbeDescriptor {
            seed: None,
            scales: Vec::new(),
            extra_points: 0,
        },
        analytic: true,
        degenerate: false,
    })
}

/// Weak growth constants `M = 4L₀/μ`, `σ² = 2β²` built from component
/// smoothness and restricted strong convexity, with `β²` the largest
/// `E‖∇fᵢ(x̄)‖²` over solution projections of the probes. The bound is then
/// checked at every probe.
pub fn example1_constants(
    problem: &FiniteSumProblem,
    probes: &ProbeSet,
) -> Result<(f64, f64), GrowthError> {
    let mu = problem.restricted_mu();
    let l0 = problem.per_component_l0();
    if !(mu > 0.0) {
        return Err(GrowthError::InvalidArgument(
            "restricted strong convexity modulus must be positive".into(),
        ));
    }
    if !(l0 > 0.0) {
        return Err(GrowthError::InvalidArgument(
            "component smoothness constant must be positive".into(),
        ));
    }
    probes.check()?;
    let mut beta_sq = problem.beta_sq();
    for x in &probes.points {
        let bar = problem.project_to_solution(x);
        beta_sq = beta_sq.max(problem.exact_conditional_moment(&bar)?.second_moment);
    }
    let m = 4.0 * l0 / mu;
    let sigma_sq = 2.0 * beta_sq;
    for (k, (g, moment, _)) in moment_triples(problem, probes)?.into_iter().enumerate() {
        let rhs = m * g + sigma_sq;
        if moment > rhs * (1.0 + 1e-9) + 1e-12 {
            return Err(GrowthError::BoundViolated {
                m,
                sigma_sq,
                probe: k,
                lhs: moment,
                rhs,
            });
        }
    }
    Ok((m, sigma_sq))
}

/// `σ₁² = σ² + 2LM (min_C f − f⋆)` for projected SGM.
pub fn projected_sigma1_sq(
    sigma_sq: f64,
    lipschitz: f64,
    m: f64,
    min_over_c: f64,
    f_star: f64,
) -> f64 {
    sigma_sq + 2.0 * lipschitz * m * (min_over_c - f_star).max(0.0)
}

/// `σ₁² = 2(1 + 2M) ‖∇f(x*)‖² + 2σ²` for proximal SGM.
pub fn proximal_sigma1_sq(m: f64, grad_norm_sq_at_opt: f64, sigma_sq: f64) -> f64 {
    2.0 * (1.0 + 2.0 * m) * grad_norm_sq_at_opt + 2.0 * sigma_sq
}

/// Both sides of the one-step inequalities at one iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateMargin {
    pub t: usize,
    /// `E‖G(x_t, ξ)‖²`.
    pub lhs: f64,
    /// `‖E G(x_t, ξ)‖² / (1 − ω) + σ²`.
    pub rhs: f64,
    pub margin: f64,
    /// `E‖x₊ − x*‖² ≤ ω ‖x_t − x*‖² + γ²σ²` held at `x_t`.
    pub hypothesis_holds: bool,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NecessaryConditionReport {
    pub omega: f64,
    pub sigma_sq: f64,
    pub margins: Vec<IterateMargin>,
    /// Iterates where the conclusion failed although the hypothesis held.
    pub violations: Vec<usize>,
    /// Iterates excluded because the hypothesis failed there.
    pub hypothesis_failures: Vec<usize>,
}

impl NecessaryConditionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn min_relative_margin(&self) -> f64 {
        self.margins
            .iter()
            .filter(|m| m.hypothesis_holds)
            .map(|m| m.margin / (1.0 + m.rhs))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Relative tolerance for flagging a negative margin.
pub const MARGIN_TOLERANCE: f64 = 1e-9;

struct OneStep {
    /// `E‖G‖²`.
    mean_sq_mapping: f64,
    /// `‖E G‖²`.
    sq_mean_mapping: f64,
    /// `E‖x₊ − x*‖²`.
    next_dist_sq: f64,
}

fn enumerate_step(
    scheme: &Scheme,
    gamma: f64,
    x: &DVector<f64>,
    anchor: &DVector<f64>,
) -> Result<OneStep, GrowthError> {
    let n = scheme.problem().n_components();
    let d = scheme.dim();
    let mut ws = Workspace::new(d);
    let mut next = DVector::zeros(d);
    let mut mean_g = DVector::zeros(d);
    let mut mean_sq = 0.0;
    let mut next_dist = 0.0;
    for i in 0..n {
        scheme
            .step_into(gamma, x, i, &mut ws, &mut next)
            .map_err(SolverError::from)?;
        let g = (x - &next) / gamma;
        mean_sq += g.norm_squared();
        mean_g += &g;
        next_dist += (&next - anchor).norm_squared();
    }
    let nf = n as f64;
    mean_g /= nf;
    Ok(OneStep {
        mean_sq_mapping: mean_sq / nf,
        sq_mean_mapping: mean_g.norm_squared(),
        next_dist_sq: next_dist / nf,
    })
}

fn anchor_of(scheme: &Scheme, traj: &Trajectory) -> Result<DVector<f64>, GrowthError> {
    let x0 = traj.point(0).ok_or(GrowthError::ThinnedTrajectory)?;
    Ok(scheme.target().project(x0))
}

fn check_full(traj: &Trajectory) -> Result<(), GrowthError> {
    if !traj.has_all_points() || traj.step_values.len() != traj.horizon() {
        return Err(GrowthError::ThinnedTrajectory);
    }
    Ok(())
}

/// Squared distances below this multiple of `1 + ‖x*‖²` are round-off and
/// carry no contraction information.
pub const ROUNDOFF_DISTANCE: f64 = 1e6 * f64::EPSILON * f64::EPSILON;

/// Worst one-step contraction `max_t (E‖x₊ − x*‖² − γ_t²σ²) / ‖x_t − x*‖²`
/// over the iterates of `traj` (iterates at `x*` up to round-off are skipped). Returns an
/// error when the factor is not below 1; a nonpositive factor is raised to
/// the smallest positive value so it can serve as `ω ∈ (0, 1)`.
pub fn measure_omega(
    scheme: &Scheme,
    traj: &Trajectory,
    sigma_sq: f64,
) -> Result<f64, GrowthError> {
    check_full(traj)?;
    let anchor = anchor_of(scheme, traj)?;
    let negligible = ROUNDOFF_DISTANCE * (1.0 + anchor.norm_squared());
    let mut omega = f64::NEG_INFINITY;
    for t in 0..traj.horizon() {
        let x = &traj.points[t];
        let dist = (x - &anchor).norm_squared();
        if dist <= negligible {
            continue;
        }
        let gamma = traj.step_values[t];
        let step = enumerate_step(scheme, gamma, x, &anchor)?;
        omega = omega.max((step.next_dist_sq - gamma * gamma * sigma_sq) / dist);
    }
    if !(omega < 1.0) {
        return Err(GrowthError::NoContraction(omega));
    }
    Ok(omega.max(f64::MIN_POSITIVE))
}

/// Checks at every iterate of `traj`, by exact enumeration of the sampled
/// index, the hypothesis `E‖x₊ − x*‖² ≤ ω‖x_t − x*‖² + γ_t²σ²` and the
/// conclusion `E‖G‖² ≤ ‖E G‖²/(1 − ω) + σ²`. The conclusion is only judged
/// where the hypothesis holds.
pub fn verify_necessary_condition(
    scheme: &Scheme,
    traj: &Trajectory,
    omega: f64,
    sigma_sq: f64,
) -> Result<NecessaryConditionReport, GrowthError> {
    if !(omega > 0.0 && omega < 1.0) {
        return Err(GrowthError::InvalidArgument(format!(
            "ω must lie in (0, 1), got {omega}"
        )));
    }
    if !(sigma_sq >= 0.0 && sigma_sq.is_finite()) {
        return Err(GrowthError::InvalidArgument(format!(
            "σ² must be nonnegative, got {sigma_sq}"
        )));
    }
    check_full(traj)?;
    let anchor = anchor_of(scheme, traj)?;
    let mut margins = Vec::with_capacity(traj.horizon());
    let mut violations = Vec::new();
    let mut hypothesis_failures = Vec::new();
    for t in 0..traj.horizon() {
        let x = &traj.points[t];
        let gamma = traj.step_values[t];
        let step = enumerate_step(scheme, gamma, x, &anchor)?;
        let bound = omega * (x - &anchor).norm_squared() + gamma * gamma * sigma_sq;
        let hypothesis_holds = step.next_dist_sq <= bound + MARGIN_TOLERANCE * (1.0 + bound);
        let lhs = step.mean_sq_mapping;
        let rhs = step.sq_mean_mapping / (1.0 - omega) + sigma_sq;
        let margin = rhs - lhs;
        let violated = hypothesis_holds && margin < -MARGIN_TOLERANCE * (1.0 + rhs);
        if !hypothesis_holds {
            hypothesis_failures.push(t);
        }
        if violated {
            violations.push(t);
        }
        margins.push(IterateMargin {
            t,
            lhs,
            rhs,
            margin,
            hypothesis_holds,
            violated,
        });
    }
    Ok(NecessaryConditionReport {
        omega,
        sigma_sq,
        margins,
        violations,
        hypothesis_failures,
    })
}

fn format_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:?}")
    }
}

fn parse_f64(s: &str) -> Result<f64, GrowthError> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s
            .parse()
            .map_err(|_| GrowthError::Record(format!("bad number `{s}`"))),
    }
}

impl GrowthReport {
    /// Flat `key = value` record with keys `B`, `M`, `sigma_sq`,
    /// `classification`, `probes.seed`, `probes.scales`, `analytic`.
    pub fn to_record(&self) -> String {
        let scales: Vec<String> = self.probes.scales.iter().map(|s| format_f64(*s)).collect();
        let mut out = String::new();
        out.push_str(&format!(
            "B = {}\n",
            self.b_sgc.map_or("unset".to_string(), format_f64)
        ));
        out.push_str(&format!("M = {}\n", format_f64(self.m_wgc)));
        out.push_str(&format!("sigma_sq = {}\n", format_f64(self.sigma_sq)));
        out.push_str(&format!("classification = {}\n", self.classification));
        out.push_str(&format!(
            "probes.seed = {}\n",
            self.probes
                .seed
                .map_or("none".to_string(), |s| s.to_string())
        ));
        out.push_str(&format!("probes.scales = [{}]\n", scales.join(", ")));
        out.push_str(&format!("probes.extra = {}\n", self.probes.extra_points));
        out.push_str(&format!("analytic = {}\n", self.analytic));
        out.push_str(&format!("degenerate = {}\n", self.degenerate));
        out
    }

    pub fn from_record(text: &str) -> Result<Self, GrowthError> {
        let mut report = GrowthReport {
            b_sgc: None,
            m_wgc: f64::NAN,
            sigma_sq: f64::NAN,
            classification: Classification::None,
            probes: ProbeDescriptor {
                seed: None,
                scales: Vec::new(),
                extra_points: 0,
            },
            analytic: false,
            degenerate: false,
        };
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| {
                    GrowthError::Record(format!("expected `key = value`, got `{line}`"))
                })?;
            let parse_bool = |v: &str| {
                v.parse::<bool>()
                    .map_err(|_| GrowthError::Record(format!("bad bool `{v}`")))
            };
            match key {
                "B" => {
                    report.b_sgc = if value == "unset" {
                        None
                    } else {
                        Some(parse_f64(value)?)
                    }
                }
                "M" => report.m_wgc = parse_f64(value)?,
                "sigma_sq" => report.sigma_sq = parse_f64(value)?,
                "classification" => report.classification = value.parse()?,
                "probes.seed" => {
                    report.probes.seed = if value == "none" {
                        None
                    } else {
                        Some(
                            value
                                .parse()
                                .map_err(|_| GrowthError::Record(format!("bad seed `{value}`")))?,
                        )
                    }
                }
                "probes.scales" => {
                    let inner = value
                        .strip_prefix('[')
                        .and_then(|v| v.strip_suffix(']'))
                        .ok_or_else(|| {
                            GrowthError::Record("scales must be a bracketed list".into())
                        })?;
                    report.probes.scales = inner
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(parse_f64)
                        .collect::<Result<_, _>>()?;
                }
                "probes.extra" => {
                    report.probes.extra_points = value
                        .parse()
                        .map_err(|_| GrowthError::Record(format!("bad count `{value}`")))?
                }
                "analytic" => report.analytic = parse_bool(value)?,
                "degenerate" => report.degenerate = parse_bool(value)?,
                other => return Err(GrowthError::Record(format!("unknown key `{other}`"))),
            }
        }
        if report.m_wgc.is_nan() || report.sigma_sq.is_nan() {
            return Err(GrowthError::Record("missing M or sigma_sq".into()));
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_kaczmarz_problem, make_two_point_quadratic, QuadraticComponent};
    use crate::solvers::{run, Method, Recording, SolverRun, StepPolicy};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn points_1d(xs: &[f64]) -> ProbeSet {
        ProbeSet::explicit(xs.iter().map(|&x| v(&[x])).collect())
    }

    fn unit_circle(k: usize) -> ProbeSet {
        ProbeSet::explicit(
            (0..k)
                .map(|j| {
                    let th = 2.0 * std::f64::consts::PI * j as f64 / k as f64 + 0.1;
                    v(&[th.cos(), th.sin()])
                })
                .collect(),
        )
    }

    fn identity_kaczmarz() -> KaczmarzSystem {
        KaczmarzSystem::new(DMatrix::identity(2, 2), v(&[0.0, 0.0])).unwrap()
    }

    #[test]
    fn two_point_is_weak_growth_only() {
        let p = make_two_point_quadratic();
        let report = fit_wgc(&p, &points_1d(&[0.0, 1.0, -1.0, 3.0, -3.0])).unwrap();
        assert_eq!(report.m_wgc, 1.0);
        assert_eq!(report.sigma_sq, 1.0);
        assert_eq!(report.classification, Classification::Wgc);
        assert_eq!(fit_sgc(&p, &points_1d(&[0.0, 2.0])).unwrap(), f64::INFINITY);
    }

    #[test]
    fn identity_kaczmarz_is_growth_condition() {
        let p = make_kaczmarz_problem(&identity_kaczmarz());
        let report = fit_wgc(&p, &unit_circle(16)).unwrap();
        assert!(report.m_wgc <= 2.0 + 1e-12);
        assert_eq!(report.sigma_sq, 0.0);
        assert_eq!(report.classification, Classification::Gc);
        let b = fit_sgc(&p, &unit_circle(16)).unwrap();
        assert!(b.is_finite() && b <= 4.0 + 1e-12);
        assert_eq!(kaczmarz_m(&identity_kaczmarz()).unwrap(), 2.0);
    }

    #[test]
    fn orthogonal_kaczmarz_m_is_row_count() {
        let th: f64 = 0.3;
        let q = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let sys = KaczmarzSystem::new(q, v(&[1.0, 2.0])).unwrap();
        assert_relative_eq!(kaczmarz_m(&sys).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn single_component_has_unit_constants() {
        let c = QuadraticComponent::centered(DMatrix::identity(2, 2), &v(&[1.0, 1.0])).unwrap();
        let p = FiniteSumProblem::from_quadratics(vec![Arc::new(c)]).unwrap();
        let probes = ProbeSet::grid(&ProbeGrid::default(), 2);
        let report = classify(&p, &probes).unwrap();
        assert_relative_eq!(report.m_wgc, 1.0, epsilon = 1e-12);
        assert_eq!(report.sigma_sq, 0.0);
        assert_relative_eq!(report.b_sgc.unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(report.classification, Classification::Sgc);
    }

    #[test]
    fn degenerate_probe_set_is_flagged() {
        let p = make_two_point_quadratic();
        let report = fit_wgc(&p, &points_1d(&[0.0])).unwrap();
        assert!(report.degenerate);
        assert_eq!(report.m_wgc, 1.0);
        assert!(matches!(
            fit_wgc(&p, &ProbeSet::explicit(vec![])),
            Err(GrowthError::EmptyProbes)
        ));
    }

    #[test]
    fn example1_constants_on_two_point() {
        let p = make_two_point_quadratic();
        let (m, s) = example1_constants(&p, &points_1d(&[0.0, 0.5, -2.0, 7.0])).unwrap();
        assert_eq!((m, s), (4.0, 2.0));
    }

    #[test]
    fn example1_constants_on_consistent_kaczmarz() {
        let p = make_kaczmarz_problem(&identity_kaczmarz());
        let (m, s) = example1_constants(&p, &unit_circle(8)).unwrap();
        assert_eq!(s, 0.0);
        assert_relative_eq!(m, 4.0 / p.restricted_mu());
    }

    #[test]
    fn example1_m_is_scale_invariant() {
        let centers = [v(&[1.0, 0.0]), v(&[-1.0, 2.0])];
        let make = |c: f64| {
            let comps: Vec<Arc<dyn crate::problems::Component>> = centers
                .iter()
                .map(|z| {
                    Arc::new(QuadraticComponent::centered(DMatrix::identity(2, 2) * c, z).unwrap())
                        as Arc<dyn crate::problems::Component>
                })
                .collect();
            FiniteSumProblem::from_quadratics(comps).unwrap()
        };
        let probes = ProbeSet::grid(&ProbeGrid::default(), 2);
        let (m1, _) = example1_constants(&make(1.0), &probes).unwrap();
        let (m3, _) = example1_constants(&make(3.0), &probes).unwrap();
        assert_relative_eq!(m1, m3, epsilon = 1e-12);
    }

    #[test]
    fn growth_record_round_trip() {
        let p = make_two_point_quadratic();
        let mut probes = ProbeSet::grid(&ProbeGrid::default(), 1);
        probes.push(v(&[0.0]));
        let report = classify(&p, &probes).unwrap();
        let text = report.to_record();
        assert!(text.contains("B = inf\n"));
        assert!(text.contains("probes.scales = [0.1, 1.0, 10.0]\n"));
        assert_eq!(GrowthReport::from_record(&text).unwrap(), report);
        assert!(GrowthReport::from_record("M = 1\nsigma_sq = 0\nbogus = 2\n").is_err());
    }

    #[test]
    fn two_point_necessary_condition_closed_form() {
        let problem = Arc::new(make_two_point_quadratic());
        let scheme = Scheme::sgm(problem);
        let traj = run(&SolverRun::new(
            Arc::new(scheme.clone()),
            StepPolicy::constant(0.5).unwrap(),
            40,
            2,
        )
        .with_recording(Recording::Full))
        .unwrap();
        // E x₊² = 0.25 x² + 0.25, so ω = 0.25 exactly with γ²σ² = 0.25.
        let omega = measure_omega(&scheme, &traj, 1.0).unwrap();
        assert_relative_eq!(omega, 0.25, epsilon = 1e-12);
        let report = verify_necessary_condition(&scheme, &traj, omega, 1.0).unwrap();
        assert!(report.passed());
        assert!(report.hypothesis_failures.is_empty());
        // at x₀ = 0: E‖G‖² = 1, ‖E G‖² = 0, rhs = σ² = 1
        assert_eq!(report.margins[0].lhs, 1.0);
        assert_eq!(report.margins[0].rhs, 1.0);
    }

    #[test]
    fn deterministic_descent_has_zero_variance_margin() {
        let c =
            QuadraticComponent::centered(DMatrix::from_diagonal(&v(&[1.0, 2.0])), &v(&[1.0, -1.0]))
                .unwrap();
        let problem = Arc::new(FiniteSumProblem::from_quadratics(vec![Arc::new(c)]).unwrap());
        let scheme = Scheme::sgm(problem);
        let traj = run(&SolverRun::new(
            Arc::new(scheme.clone()),
            StepPolicy::constant(0.3).unwrap(),
            30,
            0,
        )
        .with_recording(Recording::Full))
        .unwrap();
        let omega = measure_omega(&scheme, &traj, 0.0).unwrap();
        let report = verify_necessary_condition(&scheme, &traj, omega, 0.0).unwrap();
        assert!(report.passed());
        for m in &report.margins {
            assert!(m.lhs <= m.rhs);
        }
    }

    #[test]
    fn hypothesis_failures_are_excluded() {
        let problem = Arc::new(make_two_point_quadratic());
        let scheme = Scheme::sgm(problem);
        let traj = run(&SolverRun::new(
            Arc::new(scheme.clone()),
            StepPolicy::constant(0.5).unwrap(),
            20,
            2,
        )
        .with_recording(Recording::Full))
        .unwrap();
        // σ² = 0 makes the hypothesis fail at x = 0
        let report = verify_necessary_condition(&scheme, &traj, 0.5, 0.0).unwrap();
        assert!(report.hypothesis_failures.contains(&0));
        assert!(!report.margins[0].violated);
    }

    #[test]
    fn thinned_trajectories_are_refused() {
        let scheme = Scheme::sgm(Arc::new(make_two_point_quadratic()));
        let traj = run(&SolverRun::new(
            Arc::new(scheme.clone()),
            StepPolicy::constant(0.5).unwrap(),
            10,
            2,
        )
        .with_recording(Recording::DistanceOnly))
        .unwrap();
        assert!(matches!(
            verify_necessary_condition(&scheme, &traj, 0.5, 1.0),
            Err(GrowthError::ThinnedTrajectory)
        ));
    }

    #[test]
    fn proximal_scheme_necessary_condition() {
        let problem = Arc::new(crate::problems::make_least_squares(&Default::default()).unwrap());
        let scheme = Scheme::new(
            problem.clone(),
            Method::ProxSgm,
            crate::solvers::Geometry::Regularizer(crate::geometry::Regularizer::l1(0.05).unwrap()),
        )
        .unwrap();
        let probes = ProbeSet::for_problem(&problem, &ProbeGrid::default());
        let report = fit_wgc(&problem, &probes).unwrap();
        let gamma = crate::solvers::recommend_step(
            problem.lipschitz(),
            report.m_wgc,
            problem.strong_mu(),
            Method::ProxSgm,
        )
        .unwrap()
        .gamma;
        let traj = run(&SolverRun::new(
            Arc::new(scheme.clone()),
            StepPolicy::constant(gamma).unwrap(),
            100,
            5,
        )
        .with_recording(Recording::Full))
        .unwrap();
        let sigma_sq = 4.0 * problem.beta_sq();
        let omega = measure_omega(&scheme, &traj, sigma_sq).unwrap();
        let nc = verify_necessary_condition(&scheme, &traj, omega, sigma_sq).unwrap();
        assert!(nc.passed(), "{:?}", nc.violations);
        assert!(nc.hypothesis_failures.is_empty());
    }

    #[test]
    fn sigma1_formulas() {
        assert_eq!(projected_sigma1_sq(1.0, 2.0, 3.0, 5.0, 4.5), 1.0 + 6.0);
        assert_eq!(projected_sigma1_sq(1.0, 2.0, 3.0, 4.5, 4.5), 1.0);
        assert_eq!(proximal_sigma1_sq(1.0, 0.5, 1.0), 2.0 * 3.0 * 0.5 + 2.0);
    }
}
