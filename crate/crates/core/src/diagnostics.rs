//! Traces and numerical checks of the convergence theory on recorded runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::algorithms::{deterministic_candidate, rdciag_step, SolverState};
use crate::error::{Error, Result};
use crate::problem::{CompositeProblem, ProblemConstants, ReferenceSolution};
use crate::spaces::BlockVector;

/// Values at or below this are treated as the floating-point floor by the
/// rate fit.
pub const FIT_FLOOR: f64 = 1e-14;

/// Minimum probe count for [`estimate_sigma`].
pub const MIN_SIGMA_PROBES: usize = 100;

/// One recorded iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub k: u64,
    pub d: f64,
    pub gap: f64,
    pub dist2: Option<f64>,
    pub gamma: Option<f64>,
    pub primal_err2: Option<f64>,
    pub max_age: u64,
    pub seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceMeta {
    pub method: String,
    pub alpha: f64,
    pub tau: u64,
    pub seed: u64,
    pub num_primal_blocks: usize,
    pub num_dual_blocks: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub meta: TraceMeta,
    /// State before the first iteration.
    pub initial: Option<TraceRow>,
    pub rows: Vec<TraceRow>,
    /// Largest `‖y‖` over the recorded iterates.
    pub max_dual_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceField {
    D,
    Gap,
    Dist2,
    Gamma,
    PrimalErr2,
}

impl TraceField {
    pub fn of(&self, row: &TraceRow) -> Option<f64> {
        match self {
            TraceField::D => Some(row.d),
            TraceField::Gap => Some(row.gap),
            TraceField::Dist2 => row.dist2,
            TraceField::Gamma => row.gamma,
            TraceField::PrimalErr2 => row.primal_err2,
        }
    }
}

impl Trace {
    pub fn new(meta: TraceMeta) -> Self {
        Trace {
            meta,
            initial: None,
            rows: Vec::new(),
            max_dual_norm: 0.0,
        }
    }

    pub fn push(&mut self, row: TraceRow) {
        if let Some(last) = self.rows.last() {
            assert!(row.k > last.k, "trace rows must have increasing k");
        }
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// `(k, value)` for rows carrying `field`, including the initial row.
    pub fn series(&self, field: TraceField) -> Vec<(u64, f64)> {
        self.initial
            .iter()
            .chain(&self.rows)
            .filter_map(|r| field.of(r).map(|v| (r.k, v)))
            .collect()
    }
}

/// Row-wise mean of `field` over traces recorded at identical iterations.
pub fn seed_mean(traces: &[Trace], field: TraceField) -> Result<Vec<(u64, f64)>> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InsufficientData("no traces to average".into()))?
        .series(field);
    let mut sums: Vec<(u64, f64)> = first.clone();
    for t in &traces[1..] {
        let s = t.series(field);
        if s.len() != first.len() || s.iter().zip(&first).any(|(a, b)| a.0 != b.0) {
            return Err(Error::InsufficientData(
                "traces are not recorded at identical iterations".into(),
            ));
        }
        for (acc, (_, v)) in sums.iter_mut().zip(s) {
            acc.1 += v;
        }
    }
    let n = traces.len() as f64;
    Ok(sums.into_iter().map(|(k, v)| (k, v / n)).collect())
}

/// `Γ_α(y) = D(y) − D* + dist²/(2α)`
pub fn lyapunov_value(d_y: f64, d_star: f64, dist2: f64, alpha: f64) -> f64 {
    d_y - d_star + dist2 / (2.0 * alpha)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub empirical_rate: f64,
    pub r_squared: f64,
    pub theoretical_rate: Option<f64>,
    /// Iterations before the first fitted row.
    pub burn_in: u64,
    pub points: usize,
}

/// Least-squares fit of `log v` against `k` on a series, cut at the first value
/// at or below [`FIT_FLOOR`]; infinite values are skipped.
pub fn fit_series(series: &[(u64, f64)]) -> Result<RateReport> {
    let usable: Vec<(f64, f64)> = series
        .iter()
        .take_while(|(_, v)| *v > FIT_FLOOR)
        // an infeasible primal point makes the gap infinite; such rows carry no rate
        .filter(|(_, v)| v.is_finite())
        .map(|&(k, v)| (k as f64, v.ln()))
        .collect();
    if usable.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} usable points, need at least 10",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let mk = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut skk, mut skl, mut sll) = (0.0, 0.0, 0.0);
    for &(k, l) in &usable {
        skk += (k - mk) * (k - mk);
        skl += (k - mk) * (l - ml);
        sll += (l - ml) * (l - ml);
    }
    let slope = skl / skk;
    let r_squared = if sll == 0.0 {
        1.0
    } else {
        (skl * skl / (skk * sll)).clamp(0.0, 1.0)
    };
    Ok(RateReport {
        empirical_rate: slope.exp(),
        r_squared,
        theoretical_rate: None,
        burn_in: series[0].0,
        points: usable.len(),
    })
}

/// Drops the first `burn_in` fraction of rows, then fits `field`.
pub fn fit_linear_rate(trace: &Trace, field: TraceField, burn_in: f64) -> Result<RateReport> {
    let series = trace.series(field);
    fit_series(drop_burn_in(&series, burn_in))
}

pub fn drop_burn_in<T>(series: &[T], fraction: f64) -> &[T] {
    let skip = ((series.len() as f64) * fraction.clamp(0.0, 1.0)).floor() as usize;
    &series[skip.min(series.len())..]
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailReport {
    /// First `k` where `V_{k+1} ≤ aV_k − bw_k + cΣw` fails.
    pub hypothesis_violation: Option<usize>,
    /// Fraction of checked `k` where the hypothesis holds.
    pub hypothesis_fraction: f64,
    pub condition_value: f64,
    pub condition_holds: bool,
    /// First `k` where `V_k ≤ a^k V_0` fails.
    pub conclusion_violation: Option<usize>,
}

impl TailReport {
    pub fn all_pass(&self) -> bool {
        self.hypothesis_violation.is_none() && self.condition_holds && self.conclusion_violation.is_none()
    }
}

/// Checks the tail-vanishing recurrence clauses on finite sequences.
pub fn check_tail_recurrence(v: &[f64], w: &[f64], a: f64, b: f64, c: f64, k0: usize) -> TailReport {
    const SLACK: f64 = 1e-10;
    let wk = |k: isize| if k < 0 { 0.0 } else { w.get(k as usize).copied().unwrap_or(0.0) };
    let mut first = None;
    let mut holds = 0usize;
    let steps = v.len().saturating_sub(1).min(w.len());
    for k in 0..steps {
        let tail: f64 = (k as isize - k0 as isize..=k as isize).map(wk).sum();
        let rhs = a * v[k] - b * w[k] + c * tail;
        if v[k + 1] <= rhs + SLACK {
            holds += 1;
        } else if first.is_none() {
            first = Some(k);
        }
    }
    let condition_value = c / (1.0 - a) * (1.0 - a.powi(k0 as i32 + 1)) / a.powi(k0 as i32);
    let conclusion_violation = v
        .first()
        .and_then(|&v0| (0..v.len()).find(|&k| v[k] > a.powi(k as i32) * v0 + SLACK));
    TailReport {
        hypothesis_violation: first,
        hypothesis_fraction: if steps == 0 { 1.0 } else { holds as f64 / steps as f64 },
        condition_value,
        condition_holds: condition_value <= b,
        conclusion_violation,
    }
}

/// Inputs of the descent inequality at one iteration.
#[derive(Clone, Debug)]
pub struct DescentStep {
    pub k: u64,
    /// `y^k`
    pub y: BlockVector,
    /// `ỹ^{k+1}`
    pub candidate: BlockVector,
    /// `Σ_{s=k−τ}^{k−1} ‖y^{s+1} − y^s‖²`
    pub tail: f64,
}

/// Advances `state` by RDCIAG for `steps` iterations, recording each step's
/// descent-inequality inputs.
pub fn collect_descent_history(
    p: &CompositeProblem,
    state: &mut SolverState,
    steps: usize,
) -> Result<Vec<DescentStep>> {
    let tau = state.schedule().tau_max() as usize;
    let mut recent: std::collections::VecDeque<f64> = std::collections::VecDeque::new();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        state.prepare(p)?;
        let candidate = deterministic_candidate(p, state);
        let y = state.y.clone();
        out.push(DescentStep {
            k: state.k,
            tail: recent.iter().sum(),
            y: y.clone(),
            candidate,
        });
        rdciag_step(p, state)?;
        recent.push_back(state.y.dist_sq(&y));
        if recent.len() > tau {
            recent.pop_front();
        }
    }
    Ok(out)
}

/// Seed means of `V_k = Γ_α(y^k)` (`k = 0..=steps`) and
/// `w_k = ‖y^{k+1} − y^k‖²` (`k = 0..steps`) over RDCIAG runs.
pub fn tail_sequences(
    p: &CompositeProblem,
    reference: &ReferenceSolution,
    alpha: f64,
    schedule: crate::algorithms::DelaySchedule,
    seeds: &[u64],
    steps: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut v = vec![0.0; steps + 1];
    let mut w = vec![0.0; steps];
    let gamma = |y: &BlockVector| -> Result<f64> {
        Ok(lyapunov_value(p.dual_value(y)?, reference.d_star, y.dist_sq(&reference.y_star), alpha))
    };
    for &seed in seeds {
        let mut state = SolverState::new(p, alpha, crate::algorithms::RngSpec { seed }, schedule)?;
        v[0] += gamma(&state.y)?;
        for k in 0..steps {
            let prev = state.y.clone();
            rdciag_step(p, &mut state)?;
            w[k] += state.y.dist_sq(&prev);
            v[k + 1] += gamma(&state.y)?;
        }
    }
    let n = seeds.len().max(1) as f64;
    v.iter_mut().chain(w.iter_mut()).for_each(|x| *x /= n);
    Ok((v, w))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescentReport {
    pub checked: usize,
    pub violations: usize,
    /// Largest `lhs − rhs` seen (negative when every check has room).
    pub max_excess: f64,
}

/// Evaluates the descent inequality at `y = y^k` and, when given, at `y_star`.
/// An excess above `1e−8` counts as a violation.
pub fn check_descent(
    p: &CompositeProblem,
    history: &[DescentStep],
    alpha: f64,
    constants: &ProblemConstants,
    y_star: Option<&BlockVector>,
) -> Result<DescentReport> {
    const SLACK: f64 = 1e-8;
    let mut report = DescentReport {
        checked: 0,
        violations: 0,
        max_excess: f64::NEG_INFINITY,
    };
    let inv = 1.0 / (2.0 * alpha);
    for step in history {
        let d_cand = p.dual_value(&step.candidate)?;
        let move_sq = step.candidate.dist_sq(&step.y);
        for y in std::iter::once(&step.y).chain(y_star) {
            let rhs = p.dual_value(y)? + inv * y.dist_sq(&step.y) - inv * y.dist_sq(&step.candidate) - inv * move_sq
                + constants.eta2 * (move_sq + step.tail);
            let excess = d_cand - rhs;
            report.checked += 1;
            report.max_excess = report.max_excess.max(excess);
            if excess > SLACK || excess.is_nan() {
                report.violations += 1;
            }
        }
    }
    Ok(report)
}

/// `σ̂ = min 2(D(y) − D*)/‖y − y_star‖²` over probes with a usable distance.
pub fn estimate_sigma(p: &CompositeProblem, reference: &ReferenceSolution, probes: &[BlockVector]) -> Result<f64> {
    let mut sigma = f64::INFINITY;
    let mut used = 0;
    for y in probes {
        let dist2 = y.dist_sq(&reference.y_star);
        if dist2 <= 1e-12 {
            continue;
        }
        let d = p.dual_value(y)?;
        if !d.is_finite() {
            continue;
        }
        used += 1;
        sigma = sigma.min(2.0 * (d - reference.d_star) / dist2);
    }
    if used < MIN_SIGMA_PROBES {
        return Err(Error::InsufficientData(format!(
            "{used} usable probes, need at least {MIN_SIGMA_PROBES}"
        )));
    }
    Ok(sigma)
}

/// Probe points in `dom g*` within distance `‖start − y_star‖` of `y_star`.
///
/// Half lie on the segment from `y_star` to `start`; the rest are random
/// perturbations pulled back into the domain by a unit dual prox step taken at
/// the reference pair, which fixes `y_star` and is nonexpansive.
pub fn sigma_probes(
    p: &CompositeProblem,
    reference: &ReferenceSolution,
    start: &BlockVector,
    count: usize,
    seed: u64,
) -> Result<Vec<BlockVector>> {
    let radius = match start.dist_sq(&reference.y_star).sqrt() {
        r if r > 0.0 => r,
        _ => 1.0,
    };
    let shift = p.operator().apply(&reference.x_star)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let n = p.dual_layout().total_dim();
    for q in 0..count {
        if q % 2 == 0 {
            let t = (q / 2 + 1) as f64 / (count / 2 + 1) as f64;
            let mut y = reference.y_star.scaled(1.0 - t);
            y.axpy(t, start);
            out.push(y);
            continue;
        }
        let mut dir: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = radius * rng.random_range(1e-3..=1.0) / len;
        dir.iter_mut().for_each(|v| *v *= scale);
        let xi = BlockVector::from_flat(p.dual_layout(), dir)?;
        let mut y = BlockVector::zeros(p.dual_layout());
        for (j, g) in p.g_components().iter().enumerate() {
            let arg: Vec<f64> = reference
                .y_star
                .block(j)
                .iter()
                .zip(shift.block(j))
                .zip(xi.block(j))
                .map(|((a, s), e)| a + s + e)
                .collect();
            y.set_block(j, &g.prox_conjugate(&arg, 1.0));
        }
        out.push(y);
    }
    Ok(out)
}

/// `2αΓ₀·ΣᵢΣⱼ(‖𝒜ⱼᵢ‖²/μᵢ²)·rate^{k−τ}`
pub fn primal_error_bound(
    alpha: f64,
    gamma0: f64,
    constants: &ProblemConstants,
    rate: f64,
    k: u64,
    tau: u64,
) -> Result<f64> {
    if k < tau {
        return Err(Error::InvalidArgument(format!("iteration {k} precedes the delay bound {tau}")));
    }
    Ok(2.0 * alpha * gamma0 * constants.primal_bound_factor * rate.powf((k - tau) as f64))
}
