//! RDCIAG with simulated stale gradients, and the baselines it is compared
//! against: dual proximal gradient, random dual block coordinate descent,
//! PIAG and randomized sparse Kaczmarz.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{lyapunov_value, Trace, TraceMeta, TraceRow};
use crate::error::{Error, Result};
use crate::functions::{ConvexSet, SeparableComponent};
use crate::problem::{CompositeProblem, ReferenceSolution};
use crate::spaces::{dot, BlockVector};

/// Deterministic generator behind every random draw.
pub type SolverRng = ChaCha8Rng;

/// Seed for the block-index sequence `j₀, j₁, …`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngSpec {
    pub seed: u64,
}

impl RngSpec {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn generator(&self) -> SolverRng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Rdciag,
    Dbcd,
    DualPg,
    Piag,
    SparseKaczmarz,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Rdciag,
        Method::Dbcd,
        Method::DualPg,
        Method::Piag,
        Method::SparseKaczmarz,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Rdciag => "rdciag",
            Method::Dbcd => "dbcd",
            Method::DualPg => "dual_pg",
            Method::Piag => "piag",
            Method::SparseKaczmarz => "sparse_kaczmarz",
        }
    }

    /// Whether the method reads from a stale gradient table.
    pub fn uses_delays(&self) -> bool {
        matches!(self, Method::Rdciag | Method::Piag)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// How per-component snapshot refreshes are scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DelaySchedule {
    /// Refresh every component at every iteration.
    Zero,
    /// Refresh component `i` at iterations `k ≡ i (mod period)`.
    Cyclic { period: u64 },
    /// Refresh each component with probability `1/(τ+1)`, forcing a refresh
    /// whenever the snapshot would otherwise be older than `τ`.
    RandomBounded { tau: u64, seed: u64 },
}

impl DelaySchedule {
    pub fn validate(&self) -> Result<()> {
        if let DelaySchedule::Cyclic { period: 0 } = self {
            return Err(Error::InvalidArgument("cyclic period must be at least 1".into()));
        }
        Ok(())
    }

    /// The bound `τ` on every delay this schedule produces.
    pub fn tau_max(&self) -> u64 {
        match *self {
            DelaySchedule::Zero => 0,
            DelaySchedule::Cyclic { period } => period.saturating_sub(1),
            DelaySchedule::RandomBounded { tau, .. } => tau,
        }
    }
}

/// Stale per-component primal snapshots and their aggregated image under `𝒜`.
#[derive(Clone, Debug)]
pub struct GradientTable {
    u_snapshot: Vec<Vec<f64>>,
    x_snapshot: Vec<Vec<f64>>,
    snap_iter: Vec<u64>,
    /// Some `yⱼ` feeding component `i` changed since its snapshot.
    dirty: Vec<bool>,
    aggregate: BlockVector,
}

impl GradientTable {
    /// Every snapshot taken at `y` as iteration `k`.
    pub fn new(p: &CompositeProblem, y: &BlockVector, k: u64) -> Self {
        let n = p.num_primal_blocks();
        let mut t = GradientTable {
            u_snapshot: Vec::with_capacity(n),
            x_snapshot: Vec::with_capacity(n),
            snap_iter: vec![k; n],
            dirty: vec![false; n],
            aggregate: BlockVector::zeros(p.dual_layout()),
        };
        for i in 0..n {
            let mut u = vec![0.0; p.primal_layout().block_dim(i)];
            p.operator().col_adjoint_into(i, y, &mut u);
            let x = p.primal_block(i, &u);
            p.operator().col_scatter_add(i, &x, &mut t.aggregate);
            t.u_snapshot.push(u);
            t.x_snapshot.push(x);
        }
        t
    }

    fn refresh(&mut self, p: &CompositeProblem, i: usize, y: &BlockVector, k: u64) {
        self.snap_iter[i] = k;
        if !self.dirty[i] {
            return;
        }
        self.dirty[i] = false;
        p.operator().col_adjoint_into(i, y, &mut self.u_snapshot[i]);
        let x = p.primal_block(i, &self.u_snapshot[i]);
        let delta: Vec<f64> = x.iter().zip(&self.x_snapshot[i]).map(|(a, b)| a - b).collect();
        p.operator().col_scatter_add(i, &delta, &mut self.aggregate);
        self.x_snapshot[i] = x;
    }

    fn mark_row_changed(&mut self, p: &CompositeProblem, j: usize) {
        for i in p.operator().cols_in_row(j) {
            self.dirty[i] = true;
        }
    }

    /// `sⱼ = Σᵢ 𝒜ⱼᵢ x_snapshot[i]`
    pub fn aggregate(&self) -> &BlockVector {
        &self.aggregate
    }

    pub fn x_snapshot(&self, i: usize) -> &[f64] {
        &self.x_snapshot[i]
    }

    pub fn u_snapshot(&self, i: usize) -> &[f64] {
        &self.u_snapshot[i]
    }

    /// Iteration whose iterate produced component `i`'s snapshot.
    pub fn snapshot_iteration(&self, i: usize) -> u64 {
        self.snap_iter[i]
    }

    pub fn age(&self, i: usize, k: u64) -> u64 {
        k - self.snap_iter[i]
    }

    pub fn max_age(&self, k: u64) -> u64 {
        self.snap_iter.iter().map(|s| k - s).max().unwrap_or(0)
    }

    /// Snapshots assembled into a primal block vector.
    pub fn primal(&self, p: &CompositeProblem) -> BlockVector {
        let mut x = BlockVector::zeros(p.primal_layout());
        for (i, xi) in self.x_snapshot.iter().enumerate() {
            x.set_block(i, xi);
        }
        x
    }

    /// Largest deviation of the incremental aggregate from recomputation.
    pub fn reconcile_error(&self, p: &CompositeProblem) -> f64 {
        let direct = p.operator().apply(&self.primal(p)).expect("table layout");
        direct.max_abs_diff(&self.aggregate)
    }
}

/// Iterate, gradient table, counter and random streams of one run.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub y: BlockVector,
    pub table: GradientTable,
    pub k: u64,
    pub alpha: f64,
    rng: SolverRng,
    schedule: DelaySchedule,
    delay_rng: Option<SolverRng>,
    tau_bound: u64,
    prepared: Option<u64>,
    verify: bool,
}

impl SolverState {
    pub fn new(p: &CompositeProblem, alpha: f64, rng: RngSpec, schedule: DelaySchedule) -> Result<Self> {
        Self::with_start(p, p.initial_dual_point(), alpha, rng, schedule)
    }

    pub fn with_start(
        p: &CompositeProblem,
        y: BlockVector,
        alpha: f64,
        rng: RngSpec,
        schedule: DelaySchedule,
    ) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("step size {alpha} must be positive")));
        }
        schedule.validate()?;
        if y.layout().block_dims() != p.dual_layout().block_dims() {
            return Err(Error::Dimension("start point does not match the dual layout".into()));
        }
        let delay_rng = match schedule {
            DelaySchedule::RandomBounded { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        Ok(SolverState {
            table: GradientTable::new(p, &y, 0),
            y,
            k: 0,
            alpha,
            rng: rng.generator(),
            schedule,
            delay_rng,
            tau_bound: schedule.tau_max(),
            prepared: None,
            verify: false,
        })
    }

    /// Override the delay bound enforced at use time.
    pub fn set_staleness_bound(&mut self, tau: u64) {
        self.tau_bound = tau;
    }

    /// Assert the single-block decomposition and aggregate consistency.
    pub fn set_verify(&mut self, on: bool) {
        self.verify = on;
    }

    pub fn schedule(&self) -> DelaySchedule {
        self.schedule
    }

    /// Apply the refreshes the schedule dictates at the current iteration.
    /// Idempotent for a given `k`, so recording and stepping see the same table.
    pub fn prepare(&mut self, p: &CompositeProblem) -> Result<()> {
        if self.prepared == Some(self.k) {
            return Ok(());
        }
        let k = self.k;
        for i in 0..p.num_primal_blocks() {
            let due = match self.schedule {
                DelaySchedule::Zero => true,
                DelaySchedule::Cyclic { period } => k % period == i as u64 % period,
                DelaySchedule::RandomBounded { tau, .. } => {
                    let rng = self.delay_rng.as_mut().expect("random schedule has a generator");
                    let coin = rng.random_bool(1.0 / (tau as f64 + 1.0));
                    coin || k - self.table.snap_iter[i] > tau
                }
            };
            if due {
                self.table.refresh(p, i, &self.y, k);
            }
            let age = self.table.age(i, k);
            if age > self.tau_bound {
                return Err(Error::Staleness {
                    component: i,
                    delay: age,
                    bound: self.tau_bound,
                });
            }
        }
        self.prepared = Some(k);
        Ok(())
    }

    pub fn max_age(&self) -> u64 {
        self.table.max_age(self.k)
    }

    fn draw_block(&mut self, nj: usize) -> usize {
        self.rng.random_range(0..nj)
    }
}

/// `prox_{αgⱼ*}(yⱼ + α·sⱼ)` for one block.
fn block_update(p: &CompositeProblem, j: usize, yj: &[f64], sj: &[f64], alpha: f64) -> Vec<f64> {
    let arg: Vec<f64> = yj.iter().zip(sj).map(|(y, s)| y + alpha * s).collect();
    p.g_components()[j].prox_conjugate(&arg, alpha)
}

/// One RDCIAG iteration: refresh per schedule, draw `jₖ`, update block `jₖ`
/// from the stale aggregate.
pub fn rdciag_step(p: &CompositeProblem, state: &mut SolverState) -> Result<()> {
    state.prepare(p)?;
    let j = state.draw_block(p.num_dual_blocks());
    let candidate = state.verify.then(|| deterministic_candidate(p, state));
    let yj = block_update(p, j, state.y.block(j), state.table.aggregate.block(j), state.alpha);
    let before = state.verify.then(|| state.y.clone());
    state.y.set_block(j, &yj);
    state.table.mark_row_changed(p, j);
    state.k += 1;
    if let (Some(c), Some(b)) = (candidate, before) {
        for q in 0..p.num_dual_blocks() {
            let expect = if q == j { c.block(q) } else { b.block(q) };
            assert_eq!(state.y.block(q), expect, "iterate is not a single-block embedding at block {q}");
        }
        if state.k.is_multiple_of(1000) {
            let err = state.table.reconcile_error(p);
            assert!(err <= 1e-10, "aggregate drifted by {err:e}");
        }
    }
    Ok(())
}

/// `ỹ^{k+1}`: every block updated from the current table. Call after
/// [`SolverState::prepare`].
pub fn deterministic_candidate(p: &CompositeProblem, state: &SolverState) -> BlockVector {
    let mut out = BlockVector::zeros(p.dual_layout());
    for j in 0..p.num_dual_blocks() {
        let yj = block_update(p, j, state.y.block(j), state.table.aggregate.block(j), state.alpha);
        out.set_block(j, &yj);
    }
    out
}

/// One dual proximal gradient step with a freshly recovered primal.
pub fn dual_pg_step(p: &CompositeProblem, y: &BlockVector, alpha: f64) -> Result<BlockVector> {
    let x = p.primal_from_dual(y)?;
    let ax = p.operator().apply(&x)?;
    let mut out = BlockVector::zeros(p.dual_layout());
    for j in 0..p.num_dual_blocks() {
        out.set_block(j, &block_update(p, j, y.block(j), ax.block(j), alpha));
    }
    Ok(out)
}

/// One random dual block coordinate step with fresh gradients.
pub fn random_dbcd_step(p: &CompositeProblem, state: &mut SolverState) -> Result<()> {
    let j = state.draw_block(p.num_dual_blocks());
    let mut s = vec![0.0; p.dual_layout().block_dim(j)];
    let mut u = Vec::new();
    for i in p.operator().cols_in_row(j) {
        u.resize(p.primal_layout().block_dim(i), 0.0);
        p.operator().col_adjoint_into(i, &state.y, &mut u);
        let xi = p.primal_block(i, &u);
        p.operator().block(j, i).expect("stored block").mul_add(&xi, &mut s);
    }
    let yj = block_update(p, j, state.y.block(j), &s, state.alpha);
    state.y.set_block(j, &yj);
    state.table.mark_row_changed(p, j);
    state.k += 1;
    Ok(())
}

/// One PIAG iteration: refresh per schedule, then adopt every candidate block.
pub fn piag_step(p: &CompositeProblem, state: &mut SolverState) -> Result<()> {
    state.prepare(p)?;
    state.y = deterministic_candidate(p, state);
    for j in 0..p.num_dual_blocks() {
        state.table.mark_row_changed(p, j);
    }
    state.k += 1;
    Ok(())
}

/// Randomized sparse Kaczmarz for `min λ‖x‖₁ + ½‖x‖²` subject to `Ax = b`.
#[derive(Clone, Debug)]
pub struct KaczmarzState {
    rows: Vec<Vec<f64>>,
    row_norm_sq: Vec<f64>,
    rhs: Vec<f64>,
    lambda: f64,
    /// `x* = Aᵀt`
    pub x_dual: Vec<f64>,
    pub x: Vec<f64>,
    /// Multipliers `t` with `x* = Aᵀt`.
    pub t: Vec<f64>,
    pub k: u64,
    rng: SolverRng,
}

impl KaczmarzState {
    pub fn new(rows: Vec<Vec<f64>>, rhs: Vec<f64>, lambda: f64, rng: RngSpec) -> Result<Self> {
        if rows.is_empty() || rows.len() != rhs.len() {
            return Err(Error::Dimension(format!("{} rows and {} right-hand sides", rows.len(), rhs.len())));
        }
        let n = rows[0].len();
        if let Some(r) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::Dimension(format!("row {r} has length {}, expected {n}", rows[r].len())));
        }
        let row_norm_sq: Vec<f64> = rows.iter().map(|r| dot(r, r)).collect();
        if let Some(r) = row_norm_sq.iter().position(|&v| v == 0.0) {
            return Err(Error::InvalidArgument(format!("row {r} is zero")));
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda {lambda}")));
        }
        Ok(KaczmarzState {
            t: vec![0.0; rows.len()],
            rows,
            row_norm_sq,
            rhs,
            lambda,
            x_dual: vec![0.0; n],
            x: vec![0.0; n],
            k: 0,
            rng: rng.generator(),
        })
    }

    /// Extracts `A`, `b`, `λ` from an augmented ℓ₁ problem: scalar elastic-net
    /// blocks and hyperplane constraints on the full vector.
    pub fn from_problem(p: &CompositeProblem, rng: RngSpec) -> Result<Self> {
        let unsupported = || {
            Error::UnsupportedComponent(
                "sparse Kaczmarz needs elastic-net scalar blocks with hyperplane constraints".into(),
            )
        };
        let mut lambda = None;
        for f in p.f_components() {
            match f {
                SeparableComponent::ElasticNetScalar { lambda: l } if lambda.is_none_or(|v| v == *l) => {
                    lambda = Some(*l)
                }
                _ => return Err(unsupported()),
            }
        }
        let n = p.num_primal_blocks();
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for (j, g) in p.g_components().iter().enumerate() {
            let SeparableComponent::Indicator(ConvexSet::Hyperplane { normal, offset }) = g else {
                return Err(unsupported());
            };
            if normal.len() != n || p.operator().cols_in_row(j).count() != n {
                return Err(unsupported());
            }
            for (i, col) in p.operator().cols_in_row(j).enumerate() {
                let m = p.operator().block(j, col).expect("stored block");
                let selects = m.cols() == 1 && (0..m.rows()).all(|r| m.get(r, 0) == if r == col { 1.0 } else { 0.0 });
                if col != i || !selects {
                    return Err(unsupported());
                }
            }
            rows.push(normal.clone());
            rhs.push(*offset);
        }
        Self::new(rows, rhs, lambda.ok_or_else(unsupported)?, rng)
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// `f*(Aᵀt) − ⟨b, t⟩`, minimized at the same value as the block dual.
    pub fn dual_value(&self) -> f64 {
        let fstar: f64 = self
            .x_dual
            .iter()
            .map(|v| {
                let t = (v.abs() - self.lambda).max(0.0);
                0.5 * t * t
            })
            .sum();
        fstar - dot(&self.rhs, &self.t)
    }
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

pub fn sparse_kaczmarz_step(state: &mut KaczmarzState) {
    let r = state.rng.random_range(0..state.rows.len());
    let row = &state.rows[r];
    let step = (dot(row, &state.x) - state.rhs[r]) / state.row_norm_sq[r];
    for (v, a) in state.x_dual.iter_mut().zip(row) {
        *v -= step * a;
    }
    state.t[r] -= step;
    for (x, v) in state.x.iter_mut().zip(&state.x_dual) {
        *x = soft(*v, state.lambda);
    }
    state.k += 1;
}

/// Stopping and recording policy of [`run`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopRule {
    pub max_iter: u64,
    /// Stop at the first recorded row with gap at or below this value; a
    /// non-finite value disables early stopping.
    pub gap_tol: f64,
    pub record_every: u64,
}

impl StopRule {
    pub fn new(max_iter: u64, gap_tol: f64) -> Self {
        StopRule {
            max_iter,
            gap_tol,
            record_every: default_record_every(max_iter),
        }
    }
}

pub fn default_record_every(max_iter: u64) -> u64 {
    (max_iter / 10_000).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub method: Method,
    pub schedule: DelaySchedule,
    pub alpha: f64,
    pub seed: u64,
    pub stop: StopRule,
    /// Fill the `seconds` column with wall-clock time.
    pub timing: bool,
    pub verify: bool,
}

enum Engine {
    Table(SolverState),
    Kaczmarz(KaczmarzState),
}

/// Runs one seeded solve and records its trace.
pub fn run(p: &CompositeProblem, opts: &RunOptions, reference: Option<&ReferenceSolution>) -> Result<Trace> {
    if opts.stop.record_every == 0 {
        return Err(Error::InvalidArgument("record_every must be at least 1".into()));
    }
    let spec = RngSpec { seed: opts.seed };
    let schedule = if opts.method.uses_delays() {
        opts.schedule
    } else {
        DelaySchedule::Zero
    };
    let mut engine = match opts.method {
        Method::SparseKaczmarz => Engine::Kaczmarz(KaczmarzState::from_problem(p, spec)?),
        _ => {
            let mut s = SolverState::new(p, opts.alpha, spec, schedule)?;
            s.set_verify(opts.verify);
            Engine::Table(s)
        }
    };
    let start = Instant::now();
    let mut trace = Trace::new(TraceMeta {
        method: opts.method.name().to_string(),
        alpha: opts.alpha,
        tau: schedule.tau_max(),
        seed: opts.seed,
        num_primal_blocks: p.num_primal_blocks(),
        num_dual_blocks: p.num_dual_blocks(),
    });
    let initial = record(p, opts, &mut engine, reference, None)?;
    let d0 = initial.d;
    trace.initial = Some(initial);

    for it in 1..=opts.stop.max_iter {
        match &mut engine {
            Engine::Table(s) => match opts.method {
                Method::Rdciag => rdciag_step(p, s)?,
                Method::Dbcd => random_dbcd_step(p, s)?,
                Method::Piag => piag_step(p, s)?,
                Method::DualPg => {
                    s.y = dual_pg_step(p, &s.y, s.alpha)?;
                    s.k += 1;
                }
                Method::SparseKaczmarz => unreachable!(),
            },
            Engine::Kaczmarz(s) => sparse_kaczmarz_step(s),
        }
        if it % opts.stop.record_every == 0 || it == opts.stop.max_iter {
            let seconds = opts.timing.then(|| start.elapsed().as_secs_f64());
            let row = record(p, opts, &mut engine, reference, seconds)?;
            if row.d.is_nan() || row.d - d0 > 1e6 * d0.abs().max(1.0) {
                return Err(Error::Divergence {
                    iteration: it,
                    value: row.d,
                    initial: d0,
                });
            }
            let done = row.gap <= opts.stop.gap_tol && opts.stop.gap_tol.is_finite();
            trace.push(row);
            if let Engine::Table(s) = &engine {
                trace.max_dual_norm = trace.max_dual_norm.max(s.y.norm());
            }
            if done {
                break;
            }
        }
    }
    Ok(trace)
}

fn record(
    p: &CompositeProblem,
    opts: &RunOptions,
    engine: &mut Engine,
    reference: Option<&ReferenceSolution>,
    seconds: Option<f64>,
) -> Result<TraceRow> {
    let (k, d, x, dist2, max_age) = match engine {
        Engine::Table(s) => {
            let x = if opts.method.uses_delays() {
                s.prepare(p)?;
                s.table.primal(p)
            } else {
                p.primal_from_dual(&s.y)?
            };
            let dist2 = reference.map(|r| s.y.dist_sq(&r.y_star));
            let age = if opts.method.uses_delays() { s.max_age() } else { 0 };
            (s.k, p.dual_value(&s.y)?, x, dist2, age)
        }
        Engine::Kaczmarz(s) => {
            let x = BlockVector::from_flat(p.primal_layout(), s.x.clone())?;
            (s.k, s.dual_value(), x, None, 0)
        }
    };
    let gap = p.primal_value(&x)? + d;
    let gamma = match (reference, dist2) {
        (Some(r), Some(d2)) => Some(lyapunov_value(d, r.d_star, d2, opts.alpha)),
        _ => None,
    };
    Ok(TraceRow {
        k,
        d,
        gap,
        dist2,
        gamma,
        primal_err2: reference.map(|r| x.dist_sq(&r.x_star)),
        max_age,
        seconds,
    })
}
