//! Ensemble statistics, rate and floor fits, and step-size predictions.

use rayon::prelude::*;
use thiserror::Error;

use crate::solvers::{
    projected_rho, proximal_rho, run, Method, Recording, SolverError, SolverRun, StepPolicy,
    Trajectory,
};

/// Smallest horizon accepted by [`fit_linear_rate`].
pub const MIN_FIT_HORIZON: usize = 50;
/// Smallest number of points in a rate-fit window.
pub const MIN_FIT_WINDOW: usize = 10;
/// Floors at or below this are treated as zero.
pub const ZERO_FLOOR: f64 = 1e-14;
/// Guard inside the logarithm.
pub const LOG_GUARD: f64 = 1e-300;
/// Smallest horizon accepted by [`check_inverse_t_rate`].
pub const MIN_INVERSE_T_HORIZON: usize = 1000;
/// Accepted log-log slope band for decaying steps.
pub const INVERSE_T_BAND: (f64, f64) = (-1.3, -0.7);
/// Replications simulated per parallel batch.
const BATCH: usize = 256;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no trajectories to aggregate")]
    Empty,
    #[error("horizon mismatch: expected {expected}, found {found}")]
    HorizonMismatch { expected: usize, found: usize },
    #[error("horizon {horizon} is below the minimum {min}")]
    HorizonTooShort { horizon: usize, min: usize },
    #[error("fit window [{start}, {end}) has fewer than {MIN_FIT_WINDOW} points")]
    WindowTooShort { start: usize, end: usize },
    #[error("contraction ρ = {0} must lie in (0, 1)")]
    InvalidRho(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Per-iteration mean and standard error of `‖x_t − x̄_t‖²` over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub horizon: usize,
    pub replications: usize,
    pub mean_dist_sq: Vec<f64>,
    pub stderr: Vec<f64>,
    pub step: StepPolicy,
    pub predicted_rho: Option<f64>,
    pub predicted_floor: Option<f64>,
    /// First index of the tail window (the final 10%).
    pub tail_start: usize,
    /// Mean over replications of each replication's tail average.
    pub tail_mean: f64,
    /// Standard error of `tail_mean` across replications.
    pub tail_stderr: f64,
}

/// First index of the final-10% window of a sequence of `len` values.
pub fn tail_start(len: usize) -> usize {
    len - len.div_ceil(10).max(1)
}

impl EnsembleStats {
    /// Wraps a single deterministic sequence (`R = 1`).
    pub fn from_sequence(values: Vec<f64>, step: StepPolicy) -> Result<Self, AnalysisError> {
        if values.is_empty() {
            return Err(AnalysisError::Empty);
        }
        let mut acc = EnsembleAccumulator::new(values.len() - 1);
        acc.push(&values)?;
        Ok(acc.finish(step))
    }

    pub fn with_prediction(mut self, rho: f64, floor: f64) -> Self {
        self.predicted_rho = Some(rho);
        self.predicted_floor = Some(floor);
        self
    }
}

/// Welford accumulator over replications, fed in a fixed order.
#[derive(Debug, Clone)]
pub struct EnsembleAccumulator {
    horizon: usize,
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    tail_start: usize,
    tail_mean: f64,
    tail_m2: f64,
}

impl EnsembleAccumulator {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            count: 0,
            mean: vec![0.0; horizon + 1],
            m2: vec![0.0; horizon + 1],
            tail_start: tail_start(horizon + 1),
            tail_mean: 0.0,
            tail_m2: 0.0,
        }
    }

    pub fn push(&mut self, dist_sq: &[f64]) -> Result<(), AnalysisError> {
        if dist_sq.len() != self.horizon + 1 {
            return Err(AnalysisError::HorizonMismatch {
                expected: self.horizon,
                found: dist_sq.len().saturating_sub(1),
            });
        }
        self.count += 1;
        let k = self.count as f64;
        for ((mean, m2), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(dist_sq) {
            let delta = v - *mean;
            *mean += delta / k;
            *m2 += delta * (v - *mean);
        }
        let tail = &dist_sq[self.tail_start..];
        let avg = tail.iter().sum::<f64>() / tail.len() as f64;
        let delta = avg - self.tail_mean;
        self.tail_mean += delta / k;
        self.tail_m2 += delta * (avg - self.tail_mean);
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(self, step: StepPolicy) -> EnsembleStats {
        let r = self.count;
        let se = |m2: f64| {
            if r < 2 {
                0.0
            } else {
                (m2.max(0.0) / (r - 1) as f64).sqrt() / (r as f64).sqrt()
            }
        };
        EnsembleStats {
            horizon: self.horizon,
            replications: r,
            stderr: self.m2.iter().map(|&m2| se(m2)).collect(),
            mean_dist_sq: self.mean.into_iter().map(|m| m.max(0.0)).collect(),
            step,
            predicted_rho: None,
            predicted_floor: None,
            tail_start: self.tail_start,
            tail_mean: self.tail_mean.max(0.0),
            tail_stderr: se(self.tail_m2),
        }
    }
}

/// Aggregates trajectories in replication order, so the result does not
/// depend on the order of `runs`.
pub fn aggregate(
    mut runs: Vec<Trajectory>,
    step: StepPolicy,
) -> Result<EnsembleStats, AnalysisError> {
    let horizon = runs.first().ok_or(AnalysisError::Empty)?.horizon();
    runs.sort_by_key(|t| t.replication);
    let mut acc = EnsembleAccumulator::new(horizon);
    for t in &runs {
        acc.push(&t.dist_sq)?;
    }
    Ok(acc.finish(step))
}

/// Runs replications `0..replications` of `spec` in parallel batches and
/// aggregates their distances. The result is independent of the thread count.
pub fn simulate_ensemble(
    spec: &SolverRun,
    replications: usize,
) -> Result<EnsembleStats, AnalysisError> {
    if replications == 0 {
        return Err(AnalysisError::InvalidArgument(
            "at least one replication is required".into(),
        ));
    }
    let base = spec.clone().with_recording(Recording::DistanceOnly);
    let mut acc = EnsembleAccumulator::new(spec.iters);
    let mut start = 0usize;
    while start < replications {
        let end = (start + BATCH).min(replications);
        let batch: Vec<Trajectory> = (start as u64..end as u64)
            .into_par_iter()
            .map(|r| run(&base.clone().with_replication(r)))
            .collect::<Result<_, _>>()?;
        for t in &batch {
            acc.push(&t.dist_sq)?;
        }
        start = end;
    }
    Ok(acc.finish(spec.step))
}

/// Log-linear fit of an ensemble's decay.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub rate_per_iter: f64,
    /// Standard error of `rate_per_iter` from the regression.
    pub rate_stderr: f64,
    pub floor_estimate: f64,
    /// Half-open window `[start, end)` of iterations used.
    pub fit_window: (usize, usize),
    pub r_squared: f64,
}

struct LineFit {
    slope: f64,
    slope_stderr: f64,
    r_squared: f64,
}

fn least_squares_line(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let sse = (syy - slope * sxy).max(0.0);
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_stderr = if xs.len() > 2 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LineFit {
        slope,
        slope_stderr,
        r_squared,
    }
}

/// Values at or below this multiple of `ε² · a₀` are treated as round-off
/// when fitting a floorless sequence.
const ROUNDOFF_FACTOR: f64 = 100.0;

/// Fits `a_t ≈ f̂ + C r^t` to `stats.mean_dist_sq`.
///
/// The floor `f̂` is the mean of the final 10%. With a positive floor the
/// window is the initial run of iterations with `a_t ≥ 10 f̂`; with a zero
/// floor it is `[0.1T, 0.9T]`, cut where the sequence reaches round-off (and
/// started at 0 if that cut leaves too few points).
pub fn fit_linear_rate(stats: &EnsembleStats) -> Result<RateFit, AnalysisError> {
    let a = &stats.mean_dist_sq;
    let t_max = stats.horizon;
    if t_max < MIN_FIT_HORIZON {
        return Err(AnalysisError::HorizonTooShort {
            horizon: t_max,
            min: MIN_FIT_HORIZON,
        });
    }
    let tail = &a[tail_start(a.len())..];
    let floor = tail.iter().sum::<f64>() / tail.len() as f64;
    let (start, end, subtract) = if floor <= ZERO_FLOOR {
        let nominal_end = t_max * 9 / 10 + 1;
        let roundoff = ROUNDOFF_FACTOR * f64::EPSILON * f64::EPSILON * a[0];
        let end = (0..nominal_end)
            .find(|&t| a[t] <= roundoff)
            .unwrap_or(nominal_end);
        // fast decay reaches round-off before 0.1T: fit from the start instead
        let start = if end >= t_max / 10 + MIN_FIT_WINDOW {
            t_max / 10
        } else {
            0
        };
        (start, end, 0.0)
    } else {
        let end = a.iter().position(|&v| v < 10.0 * floor).unwrap_or(a.len());
        (0, end, floor)
    };
    if end < start + MIN_FIT_WINDOW {
        return Err(AnalysisError::WindowTooShort { start, end });
    }
    let xs: Vec<f64> = (start..end).map(|t| t as f64).collect();
    let ys: Vec<f64> = a[start..end]
        .iter()
        .map(|&v| (v - subtract).max(LOG_GUARD).ln())
        .collect();
    let line = least_squares_line(&xs, &ys);
    let rate = line.slope.exp().min(1.0);
    Ok(RateFit {
        rate_per_iter: rate,
        rate_stderr: rate * line.slope_stderr,
        floor_estimate: floor,
        fit_window: (start, end),
        r_squared: line.r_squared,
    })
}

/// Fixed point `γ²σ₁²/ρ` of `r ↦ (1 − ρ) r + γ²σ₁²`.
pub fn predict_floor(gamma: f64, rho: f64, sigma1_sq: f64) -> Result<f64, AnalysisError> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(AnalysisError::InvalidRho(rho));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(AnalysisError::InvalidArgument(format!(
            "step must be positive, got {gamma}"
        )));
    }
    if !(sigma1_sq >= 0.0 && sigma1_sq.is_finite()) {
        return Err(AnalysisError::InvalidArgument(format!(
            "σ₁² must be nonnegative, got {sigma1_sq}"
        )));
    }
    Ok(gamma * gamma * sigma1_sq / rho)
}

/// Predicted `floor(γ/2) / floor(γ)` with `ρ` recomputed at each step size,
/// i.e. `(γ/2)² ρ(γ) / (γ² ρ(γ/2))`.
pub fn halved_step_floor_ratio(
    gamma: f64,
    lipschitz: f64,
    m: f64,
    mu: f64,
    method: Method,
) -> Result<f64, AnalysisError> {
    let rho = |g: f64| {
        if method.uses_prox_rate() {
            proximal_rho(g, lipschitz, m, mu)
        } else {
            projected_rho(g, lipschitz, m, mu)
        }
    };
    let (full, half) = (rho(gamma), rho(gamma / 2.0));
    for r in [full, half] {
        if !(r > 0.0 && r < 1.0) {
            return Err(AnalysisError::InvalidRho(r));
        }
    }
    Ok(0.25 * full / half)
}

/// Outcome of the decaying-step slope check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseTCheck {
    pub slope: f64,
    pub r_squared: f64,
    pub passed: bool,
}

/// Slope of `log a_t` against `log t` over `[0.1T, T]`; passes inside
/// [`INVERSE_T_BAND`].
pub fn check_inverse_t_rate(stats: &EnsembleStats) -> Result<InverseTCheck, AnalysisError> {
    if !matches!(stats.step, StepPolicy::InverseT(_)) {
        return Err(AnalysisError::InvalidArgument(
            "the decaying-step check needs an inverse-t policy".into(),
        ));
    }
    if stats.horizon < MIN_INVERSE_T_HORIZON {
        return Err(AnalysisError::HorizonTooShort {
            horizon: stats.horizon,
            min: MIN_INVERSE_T_HORIZON,
        });
    }
    let start = (stats.horizon / 10).max(1);
    let xs: Vec<f64> = (start..=stats.horizon).map(|t| (t as f64).ln()).collect();
    let ys: Vec<f64> = stats.mean_dist_sq[start..]
        .iter()
        .map(|&v| v.max(LOG_GUARD).ln())
        .collect();
    let line = least_squares_line(&xs, &ys);
    let passed = line.slope >= INVERSE_T_BAND.0 && line.slope <= INVERSE_T_BAND.1;
    Ok(InverseTCheck {
        slope: line.slope,
        r_squared: line.r_squared,
        passed,
    })
}
