//! Runs a parsed config: builds the problem, settles the step size, solves once
//! per seed, and writes traces plus a summary report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rdciag::applications::{build_augmented_l1, build_best_approximation, build_num};
use rdciag::diagnostics::{drop_burn_in, estimate_sigma, fit_series, seed_mean, sigma_probes};
use rdciag::{
    CompositeProblem, DelaySchedule, Method, ProblemConstants, RateReport, ReferenceSolution, RunOptions, StopRule,
    Trace, TraceField,
};

use crate::config::{AlphaChoice, ConfigErrors, ExperimentConfig, ProblemConfig, ReferenceChoice, SigmaChoice};
use crate::trace_csv::{write_trace_csv, CsvError};

/// Iteration cap for reference solves.
pub const REFERENCE_ITERS: u64 = 1_000_000;
/// Probe count for `sigma = estimate`.
pub const SIGMA_PROBES: usize = 400;
/// Fraction of each trace ignored by the rate fits.
pub const BURN_IN: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid config:\n{0}")]
    Config(#[from] ConfigErrors),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Solver(#[from] rdciag::Error),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    /// 2 on divergence, 3 on validation failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Solver(rdciag::Error::Divergence { .. }) => 2,
            ExperimentError::Config(_)
            | ExperimentError::Invalid(_)
            | ExperimentError::Solver(rdciag::Error::Build(_) | rdciag::Error::UnsupportedComponent(_)) => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn build_problem(p: &ProblemConfig) -> rdciag::Result<CompositeProblem> {
    match p {
        ProblemConfig::BestApprox(s) => build_best_approximation(s),
        ProblemConfig::AugL1 { spec, .. } => build_augmented_l1(spec),
        ProblemConfig::Num(s) => build_num(s),
    }
}

/// The problem with its reference and growth estimate, shared by every method
/// run against it.
pub struct Session {
    pub config: ExperimentConfig,
    pub problem: CompositeProblem,
    pub reference: Option<ReferenceSolution>,
    pub sigma: Option<f64>,
}

impl Session {
    pub fn new(config: ExperimentConfig, base_dir: &Path) -> Result<Self, ExperimentError> {
        let problem = build_problem(&config.problem)?;
        let reference = match &config.reference {
            None => None,
            Some(ReferenceChoice::Compute) => Some(ReferenceSolution::compute(&problem, REFERENCE_ITERS)?),
            Some(ReferenceChoice::File(f)) => Some(ReferenceSolution::read(&base_dir.join(f), &problem)?),
        };
        let sigma = match (config.sigma, &reference) {
            (Some(SigmaChoice::Given(s)), _) => Some(s),
            (Some(SigmaChoice::Estimate), Some(r)) => {
                let probes = sigma_probes(&problem, r, &problem.initial_dual_point(), SIGMA_PROBES, 0)?;
                Some(estimate_sigma(&problem, r, &probes)?)
            }
            (Some(SigmaChoice::Estimate), None) => {
                return Err(ExperimentError::Invalid("sigma = estimate needs a reference".into()))
            }
            (None, _) => None,
        };
        if let Some(s) = sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(ExperimentError::Invalid(format!("estimated sigma {s} is not positive")));
            }
        }
        Ok(Session {
            config,
            problem,
            reference,
            sigma,
        })
    }

    /// Constants, step and predicted rate for `method` under the configured
    /// delay schedule.
    pub fn plan(&self, method: Method) -> Result<Plan, ExperimentError> {
        if method == Method::SparseKaczmarz && !matches!(self.config.problem, ProblemConfig::AugL1 { .. }) {
            return Err(ExperimentError::Invalid("sparse_kaczmarz solves aug_l1 problems only".into()));
        }
        let schedule = if method.uses_delays() {
            self.config.delay
        } else {
            DelaySchedule::Zero
        };
        let constants = ProblemConstants::new(&self.problem, schedule.tau_max())?;
        let alpha = match self.config.alpha {
            AlphaChoice::Fixed(a) => a,
            AlphaChoice::Auto => {
                let sigma = self
                    .sigma
                    .ok_or_else(|| ExperimentError::Invalid("alpha = auto needs sigma".into()))?;
                constants.max_stepsize_and_rate(sigma).0
            }
        };
        let theoretical_rate = self.sigma.map(|s| constants.rate(alpha, s));
        Ok(Plan {
            method,
            schedule,
            alpha,
            constants,
            theoretical_rate,
        })
    }

    /// Solves once per seed, writing `trace_{method}_seed{seed}_run{q}.csv`
    /// into `out_dir`, and returns the summary.
    pub fn run_method(&self, method: Method, out_dir: &Path) -> Result<Report, ExperimentError> {
        let plan = self.plan(method)?;
        std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
        let c = &self.config;
        let jobs: Vec<(usize, u64)> = c.seeds.iter().copied().enumerate().collect();
        let opts = |seed| RunOptions {
            method,
            schedule: plan.schedule,
            alpha: plan.alpha,
            seed,
            stop: StopRule {
                max_iter: c.max_iter,
                gap_tol: c.gap_tol,
                record_every: c.record_every,
            },
            timing: c.timing,
            verify: false,
        };
        let results = parallel_map(&jobs, thread_cap(), |&(q, seed)| -> Result<(PathBuf, Trace), ExperimentError> {
            let trace = rdciag::run(&self.problem, &opts(seed), self.reference.as_ref())?;
            let path = out_dir.join(trace_file_name(method, seed, q));
            write_trace_csv(&trace, &path)?;
            Ok((path, trace))
        });
        let mut files = Vec::new();
        let mut traces = Vec::new();
        for r in results {
            let (path, trace) = r?;
            files.push(path);
            traces.push(trace);
        }
        Ok(Report::new(self, plan, traces, files))
    }
}

pub fn trace_file_name(method: Method, seed: u64, run: usize) -> String {
    format!("trace_{method}_seed{seed}_run{run}.csv")
}

#[derive(Clone, Debug)]
pub struct Plan {
    pub method: Method,
    pub schedule: DelaySchedule,
    pub alpha: f64,
    pub constants: ProblemConstants,
    pub theoretical_rate: Option<f64>,
}

/// `RDCIAG_THREADS` when set to a positive integer, else the machine's
/// available parallelism.
pub fn thread_cap() -> usize {
    std::env::var("RDCIAG_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Applies `f` to every job on at most `threads` workers; output order follows
/// input order regardless of scheduling.
pub fn parallel_map<T: Sync, R: Send>(jobs: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = threads.clamp(1, jobs.len().max(1));
    if workers == 1 {
        return jobs.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let q = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(q) else { break };
                let r = f(job);
                slots.lock().expect("worker panicked")[q] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// Γ when a reference is available, otherwise the duality gap.
pub fn fit_field(traces: &[Trace]) -> TraceField {
    let has_gamma = traces.iter().all(|t| t.series(TraceField::Gamma).len() == t.series(TraceField::Gap).len());
    if has_gamma && !traces.is_empty() {
        TraceField::Gamma
    } else {
        TraceField::Gap
    }
}

pub fn fit_with_burn_in(series: &[(u64, f64)], burn_in: f64) -> rdciag::Result<RateReport> {
    fit_series(drop_burn_in(series, burn_in))
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub seed: u64,
    pub final_k: u64,
    pub final_gap: f64,
    pub fit: Option<RateReport>,
    pub file: PathBuf,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub problem: &'static str,
    pub plan: Plan,
    pub sigma: Option<f64>,
    pub field: TraceField,
    pub runs: Vec<RunSummary>,
    pub mean_fit: Option<RateReport>,
    pub max_dual_norm: f64,
    pub traces: Vec<Trace>,
}

impl Report {
    fn new(s: &Session, mut plan: Plan, traces: Vec<Trace>, files: Vec<PathBuf>) -> Self {
        // the predicted rate only concerns the delayed-gradient scheme
        if plan.method == Method::SparseKaczmarz {
            plan.theoretical_rate = None;
        }
        let field = fit_field(&traces);
        let runs = traces
            .iter()
            .zip(files)
            .map(|(t, file)| {
                let last = t.last().or(t.initial.as_ref());
                RunSummary {
                    seed: t.meta.seed,
                    final_k: last.map_or(0, |r| r.k),
                    final_gap: last.map_or(f64::NAN, |r| r.gap),
                    fit: fit_with_burn_in(&t.series(field), BURN_IN).ok(),
                    file,
                }
            })
            .collect();
        let mean_fit = seed_mean(&traces, field)
            .ok()
            .and_then(|m| fit_with_burn_in(&m, BURN_IN).ok())
            .map(|mut r| {
                r.theoretical_rate = plan.theoretical_rate;
                r
            });
        Report {
            problem: s.config.problem.kind(),
            sigma: s.sigma,
            field,
            runs,
            mean_fit,
            max_dual_norm: traces.iter().map(|t| t.max_dual_norm).fold(0.0, f64::max),
            plan,
            traces,
        }
    }

    /// The seed-mean fit is no slower than the predicted contraction.
    pub fn within_theory(&self) -> Option<bool> {
        let fit = self.mean_fit.as_ref()?;
        Some(fit.empirical_rate <= self.plan.theoretical_rate?)
    }

    /// `key=value` lines; free of timing so repeated runs match byte for byte.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("na".to_string(), |v| v.to_string());
        let c = &self.plan.constants;
        let mut o = String::new();
        let mut kv = |k: &str, v: String| {
            writeln!(o, "{k}={v}").ok();
        };
        kv("problem", self.problem.into());
        kv("method", self.plan.method.to_string());
        kv("alpha", self.plan.alpha.to_string());
        kv("sigma", opt(self.sigma));
        kv("tau", c.tau.to_string());
        kv("theoretical_rate", opt(self.plan.theoretical_rate));
        kv("ell_min", c.ell.iter().copied().fold(f64::INFINITY, f64::min).to_string());
        kv("ell_max", c.ell_max.to_string());
        kv("ell_mean", (c.ell.iter().sum::<f64>() / c.ell.len() as f64).to_string());
        kv("eta1", c.eta1.to_string());
        kv("eta2", c.eta2.to_string());
        kv("beta", c.beta.to_string());
        kv("z0", opt(self.sigma.map(|s| c.z0(s))));
        kv("fit_field", format!("{:?}", self.field).to_lowercase());
        kv("burn_in_fraction", BURN_IN.to_string());
        kv("runs", self.runs.len().to_string());
        for (q, r) in self.runs.iter().enumerate() {
            kv(&format!("run{q}.seed"), r.seed.to_string());
            kv(&format!("run{q}.final_k"), r.final_k.to_string());
            kv(&format!("run{q}.final_gap"), r.final_gap.to_string());
            kv(&format!("run{q}.rate"), opt(r.fit.as_ref().map(|f| f.empirical_rate)));
            kv(&format!("run{q}.r_squared"), opt(r.fit.as_ref().map(|f| f.r_squared)));
        }
        let m = self.mean_fit.as_ref();
        kv("seed_mean.rate", opt(m.map(|f| f.empirical_rate)));
        kv("seed_mean.r_squared", opt(m.map(|f| f.r_squared)));
        kv("seed_mean.points", m.map_or("na".into(), |f| f.points.to_string()));
        kv(
            "seed_mean.within_theory",
            self.within_theory().map_or("na".into(), |b| b.to_string()),
        );
        kv("max_dual_norm", self.max_dual_norm.to_string());
        o
    }

    pub fn write(&self, path: &Path) -> Result<(), ExperimentError> {
        std::fs::write(path, self.to_text()).map_err(io_err(path))
    }
}

/// `solve`: the configured method, traces plus `report.txt` in `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, base_dir: &Path, out_dir: &Path) -> Result<Report, ExperimentError> {
    let session = Session::new(config.clone(), base_dir)?;
    let report = session.run_method(config.method, out_dir)?;
    report.write(&out_dir.join("report.txt"))?;
    Ok(report)
}

/// `compare`: each method against one shared reference, with a
/// `report_{method}.txt` per method.
pub fn run_comparison(
    config: &ExperimentConfig,
    methods: &[Method],
    base_dir: &Path,
    out_dir: &Path,
) -> Result<Vec<Report>, ExperimentError> {
    let session = Session::new(config.clone(), base_dir)?;
    for &m in methods {
        session.plan(m)?;
    }
    let mut out = Vec::new();
    for &m in methods {
        let report = session.run_method(m, out_dir)?;
        report.write(&out_dir.join(format!("report_{m}.txt")))?;
        out.push(report);
    }
    Ok(out)
}

/// `rate`: per-file fits of Γ (or the gap when Γ is absent) after dropping
/// `burn_in` of the rows, plus a seed-mean fit when the files align.
pub fn analyze_traces(paths: &[PathBuf], burn_in: f64) -> Result<String, ExperimentError> {
    if !(0.0..1.0).contains(&burn_in) {
        return Err(ExperimentError::Invalid(format!("burn-in fraction {burn_in} is outside [0, 1)")));
    }
    let mut traces = Vec::new();
    for path in paths {
        let rows = crate::trace_csv::read_trace_csv(path)?;
        let mut t = Trace::new(rdciag::TraceMeta {
            method: String::new(),
            alpha: f64::NAN,
            tau: 0,
            seed: 0,
            num_primal_blocks: 0,
            num_dual_blocks: 0,
        });
        rows.into_iter().for_each(|r| t.push(r));
        traces.push(t);
    }
    let field = fit_field(&traces);
    let mut out = String::new();
    writeln!(out, "fit_field={}", format!("{field:?}").to_lowercase()).ok();
    for (path, t) in paths.iter().zip(&traces) {
        match fit_with_burn_in(&t.series(field), burn_in) {
            Ok(r) => writeln!(
                out,
                "{}: rate={} r_squared={} points={} burn_in={}",
                path.display(),
                r.empirical_rate,
                r.r_squared,
                r.points,
                r.burn_in
            ),
            Err(e) => writeln!(out, "{}: {e}", path.display()),
        }
        .ok();
    }
    if traces.len() > 1 {
        match seed_mean(&traces, field).and_then(|m| fit_with_burn_in(&m, burn_in)) {
            Ok(r) => writeln!(out, "seed_mean: rate={} r_squared={} points={}", r.empirical_rate, r.r_squared, r.points),
            Err(e) => writeln!(out, "seed_mean: {e}"),
        }
        .ok();
    }
    Ok(out)
}
