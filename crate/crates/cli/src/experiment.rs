use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use constep::analysis::{
    check_inverse_t_rate, fit_linear_rate, predict_floor, simulate_ensemble, EnsembleStats, RateFit,
};
use constep::geometry::{ConvexSet, LinearMonotoneOperator, Regularizer};
use constep::growth::{
    classify, fit_sgc, fit_wgc, kaczmarz_report, measure_omega, projected_sigma1_sq,
    proximal_sigma1_sq, verify_necessary_condition, GrowthReport, ProbeSet,
};
use constep::problems::{
    make_kaczmarz_problem, make_least_squares, make_two_point_quadratic, FiniteSumProblem,
    KaczmarzSystem, LeastSquaresSpec, ProbeGrid,
};
use constep::solvers::{
    predicted_rho, recommend_step, run, Geometry, Method, Recording, Scheme, SolverRun, StepPolicy,
    Trajectory,
};
use constep::{DMatrix, DVector};
use serde_json::json;

use crate::config::{Check, ExperimentConfig, GeometryConfig, ProblemConfig, StepConfig};
use crate::output::{audit_csv, ensemble_csv, num, Record};
use crate::CliError;

/// Longest fully recorded audit trajectory.
pub const AUDIT_MAX_STEPS: usize = 10_000;
/// Relative tolerance of the per-step contraction audit.
pub const CONTRACTION_TOLERANCE: f64 = 1e-9;
/// Absolute slack added to rate comparisons.
pub const RATE_SLACK: f64 = 0.01;
/// A zero predicted floor passes when the fitted floor is at most this.
pub const ZERO_FLOOR_PASS: f64 = 1e-12;
/// Lower end of the accepted floor band, as a fraction of the prediction.
pub const FLOOR_BAND_FACTOR: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub enum CheckStatus {
    Pass,
    Fail(String),
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub check: Check,
    pub status: CheckStatus,
    pub detail: String,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    fn from_bool(check: Check, ok: bool, detail: String) -> Self {
        let status = if ok {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail(detail.clone())
        };
        Self {
            check,
            status,
            detail,
        }
    }

    fn skipped(check: Check, reason: impl Into<String>) -> Self {
        let reason = reason.into();
        Self {
            check,
            status: CheckStatus::Skipped(reason.clone()),
            detail: reason,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub checks: Vec<CheckResult>,
    pub stats: EnsembleStats,
    pub growth: GrowthReport,
    pub summary: Record,
    pub rate_fit: Option<RateFit>,
}

impl ExperimentOutcome {
    /// True when every requested check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn check(&self, check: Check) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.check == check)
    }
}

/// Problem, its Kaczmarz system when there is one, and a label.
struct Built {
    problem: Arc<FiniteSumProblem>,
    system: Option<KaczmarzSystem>,
    label: &'static str,
}

fn build_problem(cfg: &ExperimentConfig) -> Result<Built, CliError> {
    let kaczmarz = |sys: KaczmarzSystem, label| Built {
        problem: Arc::new(make_kaczmarz_problem(&sys)),
        system: Some(sys),
        label,
    };
    Ok(match &cfg.problem {
        ProblemConfig::Kaczmarz {
            rows,
            cols,
            seed,
            noise,
        } => {
            let sys = if *noise == 0.0 {
                KaczmarzSystem::gaussian_consistent(*rows, *cols, *seed)?
            } else {
                KaczmarzSystem::gaussian_noisy(*rows, *cols, *noise, *seed)?
            };
            kaczmarz(sys, "kaczmarz")
        }
        ProblemConfig::CustomMatrixFile { path } => kaczmarz(
            KaczmarzSystem::load(cfg.resolve(path))?,
            "custom_matrix_file",
        ),
        ProblemConfig::TwoPoint => Built {
            problem: Arc::new(make_two_point_quadratic()),
            system: None,
            label: "two_point",
        },
        ProblemConfig::QuadraticL1 {
            dim,
            components,
            ridge,
            noise,
            sparsity,
            seed,
        } => {
            let spec = LeastSquaresSpec {
                dim: *dim,
                components: *components,
                ridge: *ridge,
                noise: *noise,
                sparsity: *sparsity,
                seed: *seed,
            };
            Built {
                problem: Arc::new(make_least_squares(&spec)?),
                system: None,
                label: "quadratic_l1",
            }
        }
    })
}

fn vector(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}

fn build_geometry(cfg: &GeometryConfig, method: Method, dim: usize) -> Result<Geometry, CliError> {
    let set = |s: ConvexSet| match method {
        Method::ProxSgm => Geometry::Regularizer(Regularizer::Indicator(s)),
        _ => Geometry::Set(s),
    };
    Ok(match cfg {
        GeometryConfig::None => match method {
            Method::Sgm => Geometry::None,
            Method::Psgm => Geometry::Set(ConvexSet::WholeSpace),
            Method::ProxSgm => Geometry::Regularizer(Regularizer::Zero),
            Method::ResolventSgm => Geometry::Operator(LinearMonotoneOperator::zero(dim)),
        },
        GeometryConfig::L1 { weight } => Geometry::Regularizer(Regularizer::l1(*weight)?),
        GeometryConfig::Box { lo, hi } => set(ConvexSet::boxed(vector(lo), vector(hi))?),
        GeometryConfig::Ball { center, radius } => set(ConvexSet::ball(vector(center), *radius)?),
        GeometryConfig::Hyperplane { normal, offset } => {
            set(ConvexSet::hyperplane(vector(normal), *offset)?)
        }
        GeometryConfig::Halfspace { normal, offset } => {
            set(ConvexSet::halfspace(vector(normal), *offset)?)
        }
        GeometryConfig::Operator { matrix } => {
            let rows = matrix.len();
            let cols = matrix.first().map_or(0, Vec::len);
            if matrix.iter().any(|r| r.len() != cols) {
                return Err(CliError::Config(
                    "`geometry.matrix`: rows have different lengths".into(),
                ));
            }
            let flat: Vec<f64> = matrix.iter().flatten().copied().collect();
            Geometry::Operator(LinearMonotoneOperator::new(DMatrix::from_row_slice(
                rows, cols, &flat,
            ))?)
        }
    })
}

/// Scheme and problem ready to run.
pub struct Prepared {
    pub scheme: Arc<Scheme>,
    pub growth: GrowthReport,
    pub probes: ProbeSet,
    pub step: StepPolicy,
    pub lipschitz: f64,
    pub mu: f64,
    pub sigma1_sq: f64,
    pub rho_pred: Result<f64, String>,
    pub problem_label: &'static str,
}

/// Builds everything a run needs without simulating.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let method: Method = cfg.experiment.method.parse()?;
    let built = build_problem(cfg)?;
    let problem = built.problem.clone();
    let geometry = build_geometry(&cfg.geometry, method, problem.dim())?;
    let scheme = Arc::new(Scheme::new(problem.clone(), method, geometry)?);

    let grid = ProbeGrid {
        seed: cfg.probes.seed,
        count: cfg.probes.count,
        scales: cfg.probes.scales.clone(),
    };
    let probes = ProbeSet::for_problem(&problem, &grid);
    let growth = match &built.system {
        Some(sys) if sys.is_consistent() => kaczmarz_report(sys)?,
        _ => classify(&problem, &probes)?,
    };

    let lipschitz = problem.lipschitz();
    let mu = problem.restricted_mu();
    let m = growth.m_wgc;
    let x_star = scheme.target().representative();
    let sigma1_sq = if method.uses_prox_rate() {
        proximal_sigma1_sq(m, problem.gradient(x_star).norm_squared(), growth.sigma_sq)
    } else {
        projected_sigma1_sq(
            growth.sigma_sq,
            lipschitz,
            m,
            problem.value(x_star),
            problem.f_star(),
        )
    };

    let step = match cfg.step {
        StepConfig::Constant { gamma } => StepPolicy::constant(gamma)?,
        StepConfig::Recommend => {
            StepPolicy::constant(recommend_step(lipschitz, m, mu, method)?.gamma)?
        }
        StepConfig::InverseT { c: Some(c) } => StepPolicy::inverse_t(c)?,
        StepConfig::InverseT { c: None } => StepPolicy::inverse_t_for(mu)?,
    };
    let rho_pred = match step {
        StepPolicy::Constant(gamma) => {
            predicted_rho(gamma, lipschitz, m, mu, method).map_err(|e| e.to_string())
        }
        StepPolicy::InverseT(_) => Err("no contraction prediction for a decaying step".to_string()),
    };
    Ok(Prepared {
        scheme,
        growth,
        probes,
        step,
        lipschitz,
        mu,
        sigma1_sq,
        rho_pred,
        problem_label: built.label,
    })
}

/// Worst relative excess of `E‖x₊ − x*‖² ≤ (1 − ρ)‖x_t − x*‖² + γ²σ₁²` over
/// the audited iterates, and the number of iterates where it fails.
fn contraction_audit(
    scheme: &Scheme,
    traj: &Trajectory,
    rho: f64,
    sigma1_sq: f64,
) -> Result<(usize, f64), CliError> {
    let target = scheme.target();
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for (t, x) in traj.points.iter().enumerate().take(traj.horizon()) {
        let gamma = traj.step_values[t];
        let lhs = scheme.expected_next_dist_sq(gamma, x)?;
        let rhs = (1.0 - rho) * target.dist_sq(x) + gamma * gamma * sigma1_sq;
        let excess = (lhs - rhs) / (1.0 + rhs);
        worst = worst.max(excess);
        if excess > CONTRACTION_TOLERANCE {
            violations += 1;
        }
    }
    Ok((violations, worst))
}

fn output_dir(cfg: &ExperimentConfig, root: Option<&Path>) -> PathBuf {
    let root = match (root, &cfg.experiment.output) {
        (Some(r), _) => r.to_path_buf(),
        (None, Some(o)) => cfg.resolve(o),
        (None, None) => PathBuf::from("results"),
    };
    root.join(&cfg.experiment.name)
}

fn policy_label(step: StepPolicy) -> (&'static str, f64) {
    match step {
        StepPolicy::Constant(g) => ("constant", g),
        StepPolicy::InverseT(c) => ("inverse_t", c),
    }
}

/// Runs `cfg` and writes its artifacts under `root` (or the configured
/// output directory). Uses the current rayon pool.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    root: Option<&Path>,
) -> Result<ExperimentOutcome, CliError> {
    let prep = prepare(cfg)?;
    let scheme = prep.scheme.clone();
    let problem = scheme.problem();
    let e = &cfg.experiment;

    let spec = SolverRun::new(scheme.clone(), prep.step, e.iterations, e.seed);
    let mut stats = simulate_ensemble(&spec, e.replications)?;
    let audit_steps = e.iterations.min(AUDIT_MAX_STEPS);
    let audit = run(
        &SolverRun::new(scheme.clone(), prep.step, audit_steps, e.seed)
            .with_recording(Recording::Full),
    )?;

    let floor_pred = match (&prep.rho_pred, prep.step) {
        (Ok(rho), StepPolicy::Constant(gamma)) => {
            predict_floor(gamma, *rho, prep.sigma1_sq).map_err(|e| e.to_string())
        }
        (Err(reason), _) => Err(reason.clone()),
        _ => Err("no floor prediction for a decaying step".to_string()),
    };
    if let (Ok(rho), Ok(floor)) = (&prep.rho_pred, &floor_pred) {
        stats = stats.with_prediction(*rho, *floor);
    }
    let rate_fit = if prep.step.is_constant() {
        fit_linear_rate(&stats).map_err(|e| e.to_string())
    } else {
        Err("rate fit needs a constant step".to_string())
    };

    let mut summary = Record::default();
    let (policy, gamma) = policy_label(prep.step);
    summary.set("experiment", e.name.clone());
    summary.set("problem", prep.problem_label);
    summary.set("method", scheme.method().as_str());
    summary.set("step_policy", policy);
    summary.set_num(
        if prep.step.is_constant() {
            "gamma"
        } else {
            "c"
        },
        gamma,
    );
    summary.set("iterations", e.iterations.to_string());
    summary.set("replications", e.replications.to_string());
    summary.set("seed", e.seed.to_string());
    summary.set_num("L", prep.lipschitz);
    summary.set_num("mu", prep.mu);
    summary.set_num("M", prep.growth.m_wgc);
    summary.set_num("sigma_sq", prep.growth.sigma_sq);
    summary.set_num("sigma1_sq", prep.sigma1_sq);
    summary.set(
        "rho_pred",
        prep.rho_pred.as_ref().map_or("none".into(), |r| num(*r)),
    );
    summary.set(
        "floor_pred",
        floor_pred.as_ref().map_or("none".into(), |f| num(*f)),
    );
    if let Ok(fit) = &rate_fit {
        summary.set_num("rate_fit", fit.rate_per_iter);
        summary.set_num("rate_stderr", fit.rate_stderr);
        summary.set(
            "rate_window",
            format!("{}..{}", fit.fit_window.0, fit.fit_window.1),
        );
        summary.set_num("r_squared", fit.r_squared);
    }
    summary.set_num("floor_fit", stats.tail_mean);
    summary.set_num("floor_stderr", stats.tail_stderr);
    summary.set_num("final_mean_dist_sq", stats.mean_dist_sq[e.iterations]);

    let mut growth = prep.growth.clone();
    let mut checks = Vec::with_capacity(e.checks.len());
    for &check in &e.checks {
        let result = match check {
            Check::Wgc => {
                let probed = fit_wgc(problem, &prep.probes)?;
                let mut ok = probed.m_wgc >= 1.0 - 1e-12;
                for x in &prep.probes.points {
                    let m = problem.exact_conditional_moment(x)?;
                    let bound = growth.m_wgc * m.mean_grad.norm_squared() + growth.sigma_sq;
                    ok &= m.second_moment <= bound + 1e-9 * (1.0 + bound);
                }
                summary.set_num("M_probed", probed.m_wgc);
                summary.set_num("sigma_sq_probed", probed.sigma_sq);
                let detail = format!(
                    "M = {}, sigma_sq = {}, classification = {}{}",
                    num(growth.m_wgc),
                    num(growth.sigma_sq),
                    growth.classification,
                    if growth.analytic { " (analytic)" } else { "" }
                );
                CheckResult::from_bool(check, ok, detail)
            }
            Check::Sgc => {
                let b = fit_sgc(problem, &prep.probes)?;
                growth.b_sgc = Some(b);
                summary.set_num("B", b);
                let probed_sigma = fit_wgc(problem, &prep.probes)?.sigma_sq;
                let ok = !b.is_finite() || probed_sigma <= 1e-12;
                CheckResult::from_bool(check, ok, format!("B = {}", num(b)))
            }
            Check::Necessary => {
                // the linear recursion is established with σ₁², not the growth σ²
                let sigma_sq = prep.sigma1_sq;
                match measure_omega(&scheme, &audit, sigma_sq) {
                    Ok(omega) => {
                        let report = verify_necessary_condition(&scheme, &audit, omega, sigma_sq)?;
                        summary.set_num("omega", omega);
                        summary.set("necessary_violations", report.violations.len().to_string());
                        summary.set(
                            "hypothesis_failures",
                            report.hypothesis_failures.len().to_string(),
                        );
                        let detail = format!(
                            "omega = {}, {} iterates, {} violations, {} hypothesis failures",
                            num(omega),
                            report.margins.len(),
                            report.violations.len(),
                            report.hypothesis_failures.len()
                        );
                        CheckResult::from_bool(check, report.passed(), detail)
                    }
                    Err(err) => CheckResult::from_bool(check, false, err.to_string()),
                }
            }
            Check::Rate => match (&prep.rho_pred, &rate_fit) {
                (Err(reason), _) | (_, Err(reason)) => CheckResult::skipped(check, reason.clone()),
                (Ok(rho), Ok(fit)) => {
                    let (violations, worst) =
                        contraction_audit(&scheme, &audit, *rho, prep.sigma1_sq)?;
                    let bound = 1.0 - rho + 3.0 * fit.rate_stderr + RATE_SLACK;
                    summary.set("contraction_violations", violations.to_string());
                    summary.set_num("contraction_worst_excess", worst);
                    let detail = format!(
                        "rate_fit = {} <= {} and {violations} contraction violations over {} iterates",
                        num(fit.rate_per_iter),
                        num(bound),
                        audit.horizon()
                    );
                    CheckResult::from_bool(
                        check,
                        fit.rate_per_iter <= bound && violations == 0,
                        detail,
                    )
                }
            },
            Check::Floor => match &floor_pred {
                Err(reason) => CheckResult::skipped(check, reason.clone()),
                Ok(pred) => {
                    let fit = stats.tail_mean;
                    let ok = if *pred == 0.0 {
                        fit <= ZERO_FLOOR_PASS
                    } else {
                        fit >= pred / FLOOR_BAND_FACTOR && fit <= pred + 3.0 * stats.tail_stderr
                    };
                    let detail = format!(
                        "floor_fit = {} +- {}, floor_pred = {}",
                        num(fit),
                        num(stats.tail_stderr),
                        num(*pred)
                    );
                    CheckResult::from_bool(check, ok, detail)
                }
            },
            Check::InverseT => match check_inverse_t_rate(&stats) {
                Ok(c) => {
                    summary.set_num("inverse_t_slope", c.slope);
                    CheckResult::from_bool(check, c.passed, format!("slope = {}", num(c.slope)))
                }
                Err(err) => CheckResult::skipped(check, err.to_string()),
            },
        };
        checks.push(result);
    }
    for c in &checks {
        summary.set(
            &format!("pass.{}", c.check.as_str()),
            status_word(&c.status),
        );
    }

    let dir = output_dir(cfg, root);
    let outcome = ExperimentOutcome {
        dir,
        checks,
        stats,
        growth,
        summary,
        rate_fit: rate_fit.ok(),
    };
    write_artifacts(&outcome, &audit)?;
    Ok(outcome)
}

/// Runs `cfg` on a dedicated pool of `threads` workers (all cores when `None`).
pub fn run_with_threads(
    cfg: &ExperimentConfig,
    root: Option<&Path>,
    threads: Option<usize>,
) -> Result<ExperimentOutcome, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_experiment(cfg, root))
}

fn status_word(status: &CheckStatus) -> &'static str {
    match status {
        CheckStatus::Pass => "pass",
        CheckStatus::Fail(_) => "fail",
        CheckStatus::Skipped(_) => "skipped",
    }
}

pub const ENSEMBLE_FILE: &str = "ensemble.csv";
pub const AUDIT_FILE: &str = "audit.csv";
pub const GROWTH_FILE: &str = "growth.txt";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

fn write_artifacts(outcome: &ExperimentOutcome, audit: &Trajectory) -> Result<(), CliError> {
    let dir = &outcome.dir;
    let io = |e: std::io::Error, what: &Path| CliError::Io(format!("{}: {e}", what.display()));
    fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| io(e, &path))
    };
    write(ENSEMBLE_FILE, ensemble_csv(&outcome.stats))?;
    write(AUDIT_FILE, audit_csv(audit))?;
    write(GROWTH_FILE, outcome.growth.to_record())?;
    write(SUMMARY_FILE, outcome.summary.render())?;
    let checks: Vec<_> = outcome
        .checks
        .iter()
        .map(|c| {
            let mut entry = json!({ "check": c.check.as_str(), "status": status_word(&c.status), "detail": c.detail });
            if let CheckStatus::Skipped(reason) = &c.status {
                entry["reason"] = json!(reason);
            }
            entry
        })
        .collect();
    let manifest = json!({
        "experiment": outcome.summary.get("experiment"),
        "passed": outcome.passed(),
        "checks": checks,
        "files": [ENSEMBLE_FILE, AUDIT_FILE, GROWTH_FILE, SUMMARY_FILE],
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    write(MANIFEST_FILE, text + "\n")
}

/// Reads back a finished run directory: summary record and per-check status.
pub fn read_report(dir: &Path) -> Result<(Record, Vec<(String, String, String)>), CliError> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    };
    let summary = Record::parse(&read(SUMMARY_FILE)?)
        .ok_or_else(|| CliError::Io(format!("{}: malformed summary", dir.display())))?;
    let manifest: serde_json::Value = serde_json::from_str(&read(MANIFEST_FILE)?)
        .map_err(|e| CliError::Io(format!("manifest: {e}")))?;
    let checks = manifest["checks"]
        .as_array()
        .ok_or_else(|| CliError::Io("manifest has no check list".into()))?
        .iter()
        .map(|c| {
            let field = |k: &str| c[k].as_str().unwrap_or_default().to_string();
            (field("check"), field("status"), field("detail"))
        })
        .collect();
    Ok((summary, checks))
}
