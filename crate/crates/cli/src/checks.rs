//! The acceptance suite behind `rdciag check`: eight numbered criteria, each
//! reduced to a pass/fail line with a short measurement.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdciag::applications::{
    build_augmented_l1, build_best_approximation, build_num, desk_aug_l1, desk_best_approx, desk_num,
    random_component, random_problem, random_set,
};
use rdciag::diagnostics::{
    check_descent, check_tail_recurrence, collect_descent_history, drop_burn_in, estimate_sigma, fit_series,
    primal_error_bound, seed_mean, sigma_probes, tail_sequences,
};
use rdciag::{
    dual_pg_step, piag_step, random_dbcd_step, rdciag_step, solve_z0, BlockLayout, BlockOperator, BlockVector,
    ComponentKind, CompositeProblem, DelaySchedule, DenseMatrix, Method, ProblemConstants, ReferenceSolution,
    RngSpec, RunOptions, SolverState, StopRule, Trace, TraceField,
};

use crate::config::parse_config;
use crate::experiment::{parallel_map, run_experiment, thread_cap};

/// Delay schedule used by every desk-scale run in the suite.
const DESK_SCHEDULE: DelaySchedule = DelaySchedule::Cyclic { period: 2 };
const REFERENCE_ITERS: u64 = 2_000_000;

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "criterion {} {:<22} {verdict} ({:.1}s) {}",
            self.id, self.name, self.seconds, self.detail
        )
    }
}

pub const CRITERIA: [(u8, &str); 8] = [
    (1, "operator-calculus"),
    (2, "reduction-lattice"),
    (3, "constants"),
    (4, "best-approximation"),
    (5, "augmented-l1"),
    (6, "network-utility"),
    (7, "theory-checkers"),
    (8, "determinism"),
];

/// Shared state across criteria: where the shipped configs live and the
/// 50-seed ℓ₁ sweep that criteria 5 and 7 both read.
pub struct CheckContext {
    pub configs_dir: PathBuf,
    l1: OnceLock<Result<L1Sweep, String>>,
}

impl CheckContext {
    pub fn new(configs_dir: impl Into<PathBuf>) -> Self {
        CheckContext {
            configs_dir: configs_dir.into(),
            l1: OnceLock::new(),
        }
    }

    fn l1(&self) -> Result<&L1Sweep, String> {
        self.l1.get_or_init(|| L1Sweep::run().map_err(|e| e.to_string())).as_ref().map_err(Clone::clone)
    }
}

/// Criteria whose number or name contains `filter` (all when `None`).
pub fn select(filter: Option<&str>) -> Vec<u8> {
    CRITERIA
        .iter()
        .filter(|(id, name)| filter.is_none_or(|f| name.contains(f) || id.to_string() == f))
        .map(|(id, _)| *id)
        .collect()
}

pub fn run_check(id: u8, ctx: &CheckContext) -> CheckOutcome {
    let name = CRITERIA.iter().find(|c| c.0 == id).map_or("unknown", |c| c.1);
    let start = Instant::now();
    let result = match id {
        1 => operator_calculus(),
        2 => reduction_lattice(),
        3 => constants(),
        4 => best_approximation(),
        5 => augmented_l1(ctx),
        6 => network_utility(),
        7 => theory_checkers(ctx),
        8 => determinism(&ctx.configs_dir),
        _ => Err(format!("no criterion {id}")),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (passed, detail) = match result {
        Ok(v) => (v.passed, v.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    CheckOutcome {
        id,
        name,
        passed,
        detail,
        seconds,
    }
}

pub fn run_checks(filter: Option<&str>, ctx: &CheckContext) -> Vec<CheckOutcome> {
    select(filter).into_iter().map(|id| run_check(id, ctx)).collect()
}

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Verdict {
            passed,
            detail: detail.into(),
        }
    }
}

type Outcome = Result<Verdict, String>;

fn e2s(e: impl fmt::Display) -> String {
    e.to_string()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn point(rng: &mut ChaCha8Rng, d: usize, r: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-r..r)).collect()
}

const CASES: u64 = 1000;
const CALCULUS_TOL: f64 = 1e-9;

fn operator_calculus() -> Outcome {
    let start = Instant::now();
    let mut failures: Vec<String> = Vec::new();
    for kind in ComponentKind::ALL {
        let mut bad = [0usize; 3];
        for seed in 0..CASES {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phi = random_component(kind, &mut rng);
            let d = phi.dim();
            // Moreau: prox_{αφ}(y) + α·prox_{α⁻¹φ*}(y/α) = y
            let y = point(&mut rng, d, 5.0);
            let alpha = rng.random_range(0.05..20.0);
            let p = phi.prox(&y, alpha);
            let scaled: Vec<f64> = y.iter().map(|v| v / alpha).collect();
            let q = phi.prox_conjugate(&scaled, 1.0 / alpha);
            if p.iter().zip(&q).zip(&y).any(|((a, b), c)| (a + alpha * b - c).abs() > CALCULUS_TOL) {
                bad[0] += 1;
            }
            // Fenchel–Young equality at x = ∇φ*(u)
            let u = point(&mut rng, d, 5.0);
            match phi.conjugate_grad(&u) {
                Ok(x) => {
                    let (fx, fu) = phi.pair_values(&x, &u);
                    if (fx + fu - dot(&x, &u)).abs() > CALCULUS_TOL {
                        bad[1] += 1;
                    }
                }
                Err(_) if phi.strong_convexity() == 0.0 => {}
                Err(_) => bad[1] += 1,
            }
            // firm nonexpansiveness
            let w = point(&mut rng, d, 5.0);
            let pw = phi.prox(&w, alpha);
            let dp: Vec<f64> = p.iter().zip(&pw).map(|(a, b)| a - b).collect();
            let dy: Vec<f64> = y.iter().zip(&w).map(|(a, b)| a - b).collect();
            if dot(&dp, &dp) > dot(&dp, &dy) + CALCULUS_TOL {
                bad[2] += 1;
            }
        }
        for (what, n) in ["moreau", "fenchel-young", "firm-nonexpansive"].iter().zip(bad) {
            if n > 0 {
                failures.push(format!("{} {what}: {n}", kind.name()));
            }
        }
    }
    let mut proj_bad = 0;
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
        let d = rng.random_range(1..=4);
        let set = random_set(&mut rng, d, true).map_err(e2s)?;
        let (x, z) = (point(&mut rng, d, 6.0), point(&mut rng, d, 6.0));
        let (px, pz) = (set.project(&x), set.project(&z));
        if dist(&set.project(&px), &px) > CALCULUS_TOL || dist(&px, &pz) > dist(&x, &z) + CALCULUS_TOL {
            proj_bad += 1;
        }
    }
    if proj_bad > 0 {
        failures.push(format!("projection: {proj_bad}"));
    }
    let mut adj_bad = 0;
    for seed in 0..CASES {
        if adjoint_gap(seed)? > 1e-10 {
            adj_bad += 1;
        }
    }
    if adj_bad > 0 {
        failures.push(format!("adjoint: {adj_bad}"));
    }
    let secs = start.elapsed().as_secs_f64();
    let in_time = secs < 10.0;
    Ok(Verdict::new(
        failures.is_empty() && in_time,
        if failures.is_empty() {
            format!("{CASES} cases per kind, projections and operators; {secs:.2}s of 10s")
        } else {
            failures.join("; ")
        },
    ))
}

/// Relative adjoint mismatch `|⟨𝒜x,y⟩ − ⟨x,𝒜*y⟩| / (‖𝒜‖‖x‖‖y‖)` on a random
/// operator with total dimension at most 64.
fn adjoint_gap(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xad70);
    let rows: Vec<usize> = (0..rng.random_range(1..=4)).map(|_| rng.random_range(1..=8)).collect();
    let cols: Vec<usize> = (0..rng.random_range(1..=4)).map(|_| rng.random_range(1..=8)).collect();
    let (rl, cl) = (BlockLayout::new(rows.clone()).map_err(e2s)?, BlockLayout::new(cols.clone()).map_err(e2s)?);
    let mut entries = Vec::new();
    for (j, &r) in rows.iter().enumerate() {
        for (i, &c) in cols.iter().enumerate() {
            if rng.random_bool(0.6) {
                let data = point(&mut rng, r * c, 3.0);
                entries.push((j, i, DenseMatrix::new(r, c, data).map_err(e2s)?));
            }
        }
    }
    let op = BlockOperator::new(&rl, &cl, entries).map_err(e2s)?;
    let x = BlockVector::from_flat(&cl, point(&mut rng, cl.total_dim(), 2.0)).map_err(e2s)?;
    let y = BlockVector::from_flat(&rl, point(&mut rng, rl.total_dim(), 2.0)).map_err(e2s)?;
    let lhs = op.apply(&x).map_err(e2s)?.dot(&y);
    let rhs = x.dot(&op.adjoint_apply(&y).map_err(e2s)?);
    let scale = op.norm_bound() * x.norm() * y.norm();
    Ok(if scale > 0.0 { (lhs - rhs).abs() / scale } else { (lhs - rhs).abs() })
}

fn reduction_lattice() -> Outcome {
    const STEPS: usize = 1000;
    let mut worst = [0.0f64; 3];
    for seed in 0..5u64 {
        let p = random_problem(seed, 6, 6).map_err(e2s)?;
        let alpha = 1.0 / p.dual_smoothness();
        let mk = |p: &CompositeProblem| SolverState::new(p, alpha, RngSpec { seed }, DelaySchedule::Zero).map_err(e2s);
        let (mut a, mut b, mut c) = (mk(&p)?, mk(&p)?, mk(&p)?);
        let mut y = a.y.clone();
        for _ in 0..STEPS {
            rdciag_step(&p, &mut a).map_err(e2s)?;
            random_dbcd_step(&p, &mut b).map_err(e2s)?;
            piag_step(&p, &mut c).map_err(e2s)?;
            y = dual_pg_step(&p, &y, alpha).map_err(e2s)?;
            worst[0] = worst[0].max(a.y.max_abs_diff(&b.y));
            worst[2] = worst[2].max(c.y.max_abs_diff(&y));
        }
        let p1 = random_problem(seed, 6, 1).map_err(e2s)?;
        let alpha1 = 1.0 / p1.dual_smoothness();
        let mut s = SolverState::new(&p1, alpha1, RngSpec { seed }, DelaySchedule::Zero).map_err(e2s)?;
        let mut y1 = s.y.clone();
        for _ in 0..STEPS {
            rdciag_step(&p1, &mut s).map_err(e2s)?;
            y1 = dual_pg_step(&p1, &y1, alpha1).map_err(e2s)?;
            worst[1] = worst[1].max(s.y.max_abs_diff(&y1));
        }
    }
    Ok(Verdict::new(
        worst.iter().all(|w| *w <= 1e-12),
        format!(
            "max deviation rdciag/dbcd {:.1e}, rdciag(|J|=1)/dual_pg {:.1e}, piag/dual_pg {:.1e}",
            worst[0], worst[1], worst[2]
        ),
    ))
}

fn desk_problems() -> Result<Vec<(&'static str, CompositeProblem)>, String> {
    Ok(vec![
        ("best_approx", build_best_approximation(&desk_best_approx()).map_err(e2s)?),
        ("aug_l1", build_augmented_l1(&desk_aug_l1(10, 30, 7)).map_err(e2s)?),
        ("num", build_num(&desk_num()).map_err(e2s)?),
    ])
}

fn gaussian(p: &CompositeProblem, rng: &mut ChaCha8Rng, scale: f64) -> Result<BlockVector, String> {
    let data = (0..p.dual_layout().total_dim())
        .map(|_| scale * rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    BlockVector::from_flat(p.dual_layout(), data).map_err(e2s)
}

fn constants() -> Outcome {
    let mut violations = 0;
    let mut samples = 0;
    for (_, p) in desk_problems()? {
        let ell = p.lipschitz_constants().map_err(e2s)?;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for q in 0..10_000 {
            let i = q % p.num_primal_blocks();
            let scale = [0.1, 1.0, 10.0][q % 3];
            let y = gaussian(&p, &mut rng, scale)?;
            let mut y2 = y.clone();
            y2.axpy(1.0, &gaussian(&p, &mut rng, scale * 0.1)?);
            let diff = p.grad_h(i, &y).map_err(e2s)?.dist_sq(&p.grad_h(i, &y2).map_err(e2s)?).sqrt();
            samples += 1;
            if diff > ell[i] * y.dist_sq(&y2).sqrt() * (1.0 + 1e-12) {
                violations += 1;
            }
        }
    }
    let mut worst_resid: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let tau = rng.random_range(1..=12u64);
        let (beta, gamma) = (rng.random_range(0.0..0.99), rng.random_range(1e-4..50.0));
        let z = solve_z0(tau, beta, gamma);
        let resid = ((1.0 + z) / (1.0 + beta * z)).powi(tau as i32) - 1.0 - gamma / (1.0 + z);
        worst_resid = worst_resid.max(resid.abs());
    }
    let sqrt2 = (solve_z0(1, 0.5, 1.0) - 2f64.sqrt()).abs();
    Ok(Verdict::new(
        violations == 0 && worst_resid <= 1e-12 && sqrt2 <= 1e-10,
        format!("{violations}/{samples} Lipschitz violations, z0 residual {worst_resid:.1e}, |z0(1,½,1) − √2| {sqrt2:.1e}"),
    ))
}

/// Growth estimate, constants, largest admissible step and its rate under
/// [`DESK_SCHEDULE`].
fn theory_step(p: &CompositeProblem, r: &ReferenceSolution) -> Result<(f64, ProblemConstants, f64, f64), String> {
    let probes = sigma_probes(p, r, &p.initial_dual_point(), 400, 0).map_err(e2s)?;
    let sigma = estimate_sigma(p, r, &probes).map_err(e2s)?;
    let c = ProblemConstants::new(p, DESK_SCHEDULE.tau_max()).map_err(e2s)?;
    let (alpha, rate) = c.max_stepsize_and_rate(sigma);
    Ok((sigma, c, alpha, rate))
}

fn best_approximation() -> Outcome {
    let start = Instant::now();
    let spec = desk_best_approx();
    let p = build_best_approximation(&spec).map_err(e2s)?;
    let r = ReferenceSolution::compute(&p, 1_000_000).map_err(e2s)?;
    let (_, _, alpha, _) = theory_step(&p, &r)?;
    let mut s = SolverState::new(&p, alpha, RngSpec { seed: 0 }, DESK_SCHEDULE).map_err(e2s)?;
    let mut infeasible = 0;
    let mut reached = None;
    for k in 0..100_000u64 {
        s.prepare(&p).map_err(e2s)?;
        let x = p.primal_from_dual(&s.y).map_err(e2s)?;
        if !spec.omega0.contains(x.as_slice()) || !spec.omega0.contains(s.table.primal(&p).as_slice()) {
            infeasible += 1;
        }
        if p.duality_gap(&x, &s.y).map_err(e2s)? <= 1e-8 {
            reached = Some((k, x));
            break;
        }
        rdciag_step(&p, &mut s).map_err(e2s)?;
    }
    let secs = start.elapsed().as_secs_f64();
    let Some((k, x)) = reached else {
        return Ok(Verdict::new(false, "gap stayed above 1e-8 for 1e5 iterations"));
    };
    let err = x.dist_sq(&r.x_star).sqrt();
    Ok(Verdict::new(
        err <= 1e-6 && infeasible == 0 && secs < 30.0,
        format!("alpha {alpha:.4e}, gap ≤ 1e-8 at k = {k}, ‖x − x_ref‖ {err:.1e}, {infeasible} infeasible iterates, {secs:.1}s of 30s"),
    ))
}

/// Fifty seeded RDCIAG runs on the desk ℓ₁ instance at the largest admissible
/// step, recorded every 1000 iterations.
struct L1Sweep {
    problem: CompositeProblem,
    reference: ReferenceSolution,
    sigma: f64,
    constants: ProblemConstants,
    alpha: f64,
    rate: f64,
    traces: Vec<Trace>,
    seconds: f64,
}

impl L1Sweep {
    fn run() -> Result<Self, String> {
        let start = Instant::now();
        let problem = build_augmented_l1(&desk_aug_l1(10, 30, 7)).map_err(e2s)?;
        let reference = ReferenceSolution::compute(&problem, REFERENCE_ITERS).map_err(e2s)?;
        let (sigma, constants, alpha, rate) = theory_step(&problem, &reference)?;
        let seeds: Vec<u64> = (0..50).collect();
        let runs = parallel_map(&seeds, thread_cap(), |&seed| {
            let opts = RunOptions {
                method: Method::Rdciag,
                schedule: DESK_SCHEDULE,
                alpha,
                seed,
                stop: StopRule {
                    max_iter: 100_000,
                    gap_tol: f64::INFINITY,
                    record_every: 1000,
                },
                timing: false,
                verify: false,
            };
            rdciag::run(&problem, &opts, Some(&reference))
        });
        let traces = runs.into_iter().collect::<Result<Vec<_>, _>>().map_err(e2s)?;
        Ok(L1Sweep {
            problem,
            reference,
            sigma,
            constants,
            alpha,
            rate,
            traces,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Final primal error of `method` at step 0.5, run to the floor.
fn l1_agreement(sweep: &L1Sweep, method: Method) -> Result<f64, String> {
    let opts = RunOptions {
        method,
        schedule: DESK_SCHEDULE,
        alpha: 0.5,
        seed: 1,
        stop: StopRule {
            max_iter: 200_000,
            gap_tol: if method == Method::SparseKaczmarz { f64::INFINITY } else { 1e-14 },
            record_every: 100,
        },
        timing: false,
        verify: false,
    };
    let t = rdciag::run(&sweep.problem, &opts, Some(&sweep.reference)).map_err(e2s)?;
    let last = t.last().ok_or("empty trace")?;
    Ok(last.primal_err2.ok_or("no reference error")?.sqrt())
}

fn augmented_l1(ctx: &CheckContext) -> Outcome {
    let start = Instant::now();
    let cached = ctx.l1.get().is_some();
    let sweep = ctx.l1()?;
    let mut errs = Vec::new();
    for m in [Method::Rdciag, Method::Dbcd, Method::SparseKaczmarz] {
        errs.push((m, l1_agreement(sweep, m)?));
    }
    let mean = seed_mean(&sweep.traces, TraceField::Gamma).map_err(e2s)?;
    let fit = fit_series(drop_burn_in(&mean, 0.2)).map_err(e2s)?;
    // a sweep computed earlier still counts toward this criterion's budget
    let secs = start.elapsed().as_secs_f64() + if cached { sweep.seconds } else { 0.0 };
    let agree = errs.iter().all(|e| e.1 <= 1e-5);
    let detail = format!(
        "{}; σ̂ {:.4}, alpha {:.4e}, fit {:.7} (r² {:.4}) vs theory {:.7}, {secs:.0}s of 180s",
        errs.iter()
            .map(|(m, e)| format!("{m} ‖x − x_ref‖ {e:.1e}"))
            .collect::<Vec<_>>()
            .join(", "),
        sweep.sigma,
        sweep.alpha,
        fit.empirical_rate,
        fit.r_squared,
        sweep.rate
    );
    Ok(Verdict::new(
        agree && fit.r_squared >= 0.98 && fit.empirical_rate <= sweep.rate && secs < 180.0,
        detail,
    ))
}

fn network_utility() -> Outcome {
    let spec = desk_num();
    let p = build_num(&spec).map_err(e2s)?;
    let r = ReferenceSolution::compute(&p, REFERENCE_ITERS).map_err(e2s)?;
    let (_, _, alpha, _) = theory_step(&p, &r)?;
    let opts = RunOptions {
        method: Method::Rdciag,
        schedule: DESK_SCHEDULE,
        alpha,
        seed: 0,
        stop: StopRule {
            max_iter: 100_000,
            gap_tol: 1e-6,
            record_every: 100,
        },
        timing: false,
        verify: false,
    };
    let t = rdciag::run(&p, &opts, Some(&r)).map_err(e2s)?;
    let last = t.last().ok_or("empty trace")?;
    let mut s = SolverState::new(&p, alpha, RngSpec { seed: 0 }, DESK_SCHEDULE).map_err(e2s)?;
    for _ in 0..last.k {
        rdciag_step(&p, &mut s).map_err(e2s)?;
    }
    s.prepare(&p).map_err(e2s)?;
    let x = s.table.primal(&p);
    let rates_ok = spec
        .sources
        .iter()
        .enumerate()
        .all(|(q, src)| (0.0..=src.cap).contains(&x.block(q)[0]));
    let worst_excess = (0..spec.capacities.len())
        .map(|l| spec.sources_on_link(l).iter().map(|&q| x.block(q)[0]).sum::<f64>() - spec.capacities[l])
        .fold(f64::NEG_INFINITY, f64::max);
    let step_dev = num_closed_form_deviation()?;
    Ok(Verdict::new(
        last.gap <= 1e-6 && rates_ok && worst_excess <= 1e-8 && step_dev <= 1e-12,
        format!(
            "gap {:.1e} at k = {}, rates in [0, M] {rates_ok}, max load − capacity {worst_excess:.1e}, closed-form step deviation {step_dev:.1e}",
            last.gap, last.k
        ),
    ))
}

/// Largest gap between a full-block undelayed step and the hand-derived price
/// update `yₗ ← max(0, yₗ + α(Σ_{s∈S(ℓ)} xₛ − cₗ))`.
fn num_closed_form_deviation() -> Result<f64, String> {
    let spec = desk_num();
    let p = build_num(&spec).map_err(e2s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let y0: Vec<f64> = (0..spec.capacities.len()).map(|_| rng.random_range(0.0..1.5)).collect();
        let start = BlockVector::from_flat(p.dual_layout(), y0.clone()).map_err(e2s)?;
        let alpha = rng.random_range(0.01..1.0);
        let mut s =
            SolverState::with_start(&p, start, alpha, RngSpec { seed: 0 }, DelaySchedule::Zero).map_err(e2s)?;
        piag_step(&p, &mut s).map_err(e2s)?;
        let lam = spec.lambda;
        let x: Vec<f64> = spec
            .sources
            .iter()
            .map(|src| {
                // stationarity 1/(1+x) = price + λx, solved as λx² + (λ+price)x + (price−1) = 0
                let price: f64 = src.links.iter().map(|&l| y0[l]).sum();
                let (b, c) = (lam + price, price - 1.0);
                let root = -2.0 * c / (b + (b * b - 4.0 * lam * c).sqrt());
                root.clamp(0.0, src.cap)
            })
            .collect();
        for (l, &cap) in spec.capacities.iter().enumerate() {
            let load: f64 = spec.sources_on_link(l).iter().map(|&q| x[q]).sum();
            let expect = (y0[l] + alpha * load - alpha * cap).max(0.0);
            worst = worst.max((s.y.block(l)[0] - expect).abs());
        }
    }
    Ok(worst)
}

/// Sequences satisfying the tail recurrence by construction.
fn synthetic_tail_instance(seed: u64) -> (Vec<f64>, Vec<f64>, f64, f64, f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: f64 = rng.random_range(0.3..0.99);
    let k0 = rng.random_range(0..4usize);
    let c = rng.random_range(0.0..1.0);
    let cond = c / (1.0 - a) * (1.0 - a.powi(k0 as i32 + 1)) / a.powi(k0 as i32);
    let b = cond * rng.random_range(1.0..3.0) + rng.random_range(0.0..0.5);
    let n = rng.random_range(20..200);
    let mut v = vec![rng.random_range(0.1..10.0)];
    let mut w = Vec::with_capacity(n);
    for k in 0..n {
        let wk = if b > 0.0 { rng.random_range(0.0..1.0) * a * v[k] / (2.0 * b) } else { 0.0 };
        w.push(wk);
        let tail: f64 = w[k.saturating_sub(k0)..=k].iter().sum();
        v.push((a * v[k] - b * wk + c * tail).max(0.0) * rng.random_range(0.0..=1.0));
    }
    (v, w, a, b, c, k0)
}

fn theory_checkers(ctx: &CheckContext) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    let mut checked = 0;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for (_, p) in desk_problems()? {
        let r = ReferenceSolution::compute(&p, REFERENCE_ITERS).map_err(e2s)?;
        let (_, c, alpha, _) = theory_step(&p, &r)?;
        let mut s = SolverState::new(&p, alpha, RngSpec { seed: 3 }, DESK_SCHEDULE).map_err(e2s)?;
        let history = collect_descent_history(&p, &mut s, 3400).map_err(e2s)?;
        let rep = check_descent(&p, &history, alpha, &c, Some(&r.y_star)).map_err(e2s)?;
        checked += history.len();
        violations += rep.violations;
        worst = worst.max(rep.max_excess);
    }
    ok &= violations == 0 && checked >= 10_000;
    notes.push(format!("descent {violations} violations over {checked} steps (max excess {worst:.1e})"));

    let synthetic_fail = (0..1000u64)
        .filter(|&seed| {
            let (v, w, a, b, c, k0) = synthetic_tail_instance(seed);
            !check_tail_recurrence(&v, &w, a, b, c, k0).all_pass()
        })
        .count();
    ok &= synthetic_fail == 0;
    notes.push(format!("tail lemma {synthetic_fail}/1000 synthetic failures"));

    let p = build_best_approximation(&desk_best_approx()).map_err(e2s)?;
    let r = ReferenceSolution::compute(&p, 1_000_000).map_err(e2s)?;
    let (_, c, alpha, rate) = theory_step(&p, &r)?;
    let seeds: Vec<u64> = (0..50).collect();
    let (v, w) = tail_sequences(&p, &r, alpha, DESK_SCHEDULE, &seeds, 3000).map_err(e2s)?;
    let nj = p.num_dual_blocks() as f64;
    let rep = check_tail_recurrence(&v, &w, rate, 1.0 / (4.0 * alpha), c.eta2 / nj, c.tau as usize);
    ok &= rep.hypothesis_fraction >= 0.99;
    notes.push(format!("tail hypothesis on {:.2}% of RDCIAG steps", 100.0 * rep.hypothesis_fraction));

    let sweep = ctx.l1()?;
    let gamma0 = sweep.traces[0]
        .initial
        .as_ref()
        .and_then(|r| r.gamma)
        .ok_or("missing initial Lyapunov value")?;
    let mut bound_violations = 0;
    let mut rows = 0;
    for (k, err) in seed_mean(&sweep.traces, TraceField::PrimalErr2).map_err(e2s)? {
        // the bound starts once the first τ iterations have passed
        if k < sweep.constants.tau {
            continue;
        }
        rows += 1;
        let bound =
            primal_error_bound(sweep.alpha, gamma0, &sweep.constants, sweep.rate, k, sweep.constants.tau).map_err(e2s)?;
        if err > bound {
            bound_violations += 1;
        }
    }
    ok &= bound_violations == 0;
    notes.push(format!("primal bound {bound_violations}/{rows} recorded rows violated"));
    Ok(Verdict::new(ok, notes.join(", ")))
}

fn determinism(configs_dir: &Path) -> Outcome {
    let mut configs: Vec<PathBuf> = std::fs::read_dir(configs_dir)
        .map_err(|e| format!("{}: {e}", configs_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    configs.sort();
    if configs.is_empty() {
        return Ok(Verdict::new(false, format!("no .cfg files in {}", configs_dir.display())));
    }
    let mut mismatched = Vec::new();
    let mut files = 0;
    for cfg in &configs {
        let text = std::fs::read_to_string(cfg).map_err(|e| format!("{}: {e}", cfg.display()))?;
        let config = parse_config(&text, configs_dir).map_err(|e| format!("{}: {e}", cfg.display()))?;
        let dirs = [tempfile::tempdir().map_err(e2s)?, tempfile::tempdir().map_err(e2s)?];
        for d in &dirs {
            run_experiment(&config, configs_dir, d.path()).map_err(|e| format!("{}: {e}", cfg.display()))?;
        }
        let listing = |d: &Path| -> Result<Vec<PathBuf>, String> {
            let mut v: Vec<PathBuf> = std::fs::read_dir(d)
                .map_err(e2s)?
                .filter_map(|e| e.ok().map(|e| PathBuf::from(e.file_name())))
                .collect();
            v.sort();
            Ok(v)
        };
        let (a, b) = (listing(dirs[0].path())?, listing(dirs[1].path())?);
        if a != b {
            mismatched.push(format!("{}: different file sets", cfg.display()));
            continue;
        }
        for name in &a {
            files += 1;
            let read = |d: &Path| std::fs::read(d.join(name)).map_err(e2s);
            if read(dirs[0].path())? != read(dirs[1].path())? {
                mismatched.push(format!("{}: {}", cfg.display(), name.display()));
            }
        }
    }
    Ok(Verdict::new(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("{} configs, {files} files identical across two runs", configs.len())
        } else {
            format!("differing: {}", mismatched.join(", "))
        },
    ))
}
