use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdciag::applications::{
    build_augmented_l1, build_best_approximation, build_num, desk_aug_l1, desk_best_approx, desk_num,
};
use rdciag::diagnostics::{
    check_descent, check_tail_recurrence, collect_descent_history, estimate_sigma, fit_linear_rate, fit_series,
    lyapunov_value, primal_error_bound, seed_mean, sigma_probes, tail_sequences, DescentStep,
};
use rdciag::{
    run, BlockLayout, BlockOperator, BlockVector, CompositeProblem, ConvexSet, DelaySchedule, DenseMatrix, Error,
    Method, ProblemConstants, ReferenceSolution, RngSpec, RunOptions, SeparableComponent, SolverState, StopRule,
    Trace, TraceField, TraceMeta, TraceRow,
};

fn geometric_trace(ratio: f64, n: u64) -> Trace {
    let mut t = Trace::new(TraceMeta {
        method: "synthetic".into(),
        alpha: 1.0,
        tau: 0,
        seed: 0,
        num_primal_blocks: 1,
        num_dual_blocks: 1,
    });
    for k in 1..=n {
        t.push(TraceRow {
            k,
            d: 0.0,
            gap: ratio.powi(k as i32),
            dist2: None,
            gamma: Some(3.0 * ratio.powi(k as i32)),
            primal_err2: None,
            max_age: 0,
            seconds: None,
        });
    }
    t
}

/// `f = ½‖x‖²`, `g = δ_{c}`, `𝒜 = √(2t)·I`, so `D(y) − D* = t‖y − y*‖²`.
fn exact_quadratic(t: f64) -> CompositeProblem {
    let n = 3;
    let l = BlockLayout::new(vec![n]).unwrap();
    let mut a = DenseMatrix::identity(n);
    for q in 0..n {
        a.set(q, q, (2.0 * t).sqrt());
    }
    let op = BlockOperator::new(&l, &l, [(0, 0, a)]).unwrap();
    let c = vec![0.3, -0.2, 0.7];
    let f = SeparableComponent::quadratic_plus_indicator(vec![0.5, 1.0, -1.0], ConvexSet::whole(n).unwrap()).unwrap();
    let g = SeparableComponent::indicator(ConvexSet::boxed(c.clone(), c).unwrap()).unwrap();
    CompositeProblem::new(vec![f], vec![g], op).unwrap()
}

fn random_probes(_p: &CompositeProblem, r: &ReferenceSolution, count: usize) -> Vec<BlockVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    (0..count)
        .map(|_| {
            let mut y = r.y_star.clone();
            for v in y.as_mut_slice() {
                *v += rng.random_range(-1.0..1.0);
            }
            y
        })
        .collect()
}

#[test]
fn exact_quadratic_growth_recovers_two() {
    let p = exact_quadratic(1.0);
    let r = ReferenceSolution::compute(&p, 100_000).unwrap();
    let sigma = estimate_sigma(&p, &r, &random_probes(&p, &r, 200)).unwrap();
    assert!((sigma - 2.0).abs() <= 1e-10, "{sigma}");
}

#[test]
fn sigma_is_scale_covariant() {
    let base = {
        let p = exact_quadratic(1.0);
        let r = ReferenceSolution::compute(&p, 100_000).unwrap();
        estimate_sigma(&p, &r, &random_probes(&p, &r, 150)).unwrap()
    };
    for t in [0.25, 3.0, 10.0] {
        let p = exact_quadratic(t);
        let r = ReferenceSolution::compute(&p, 100_000).unwrap();
        let s = estimate_sigma(&p, &r, &random_probes(&p, &r, 150)).unwrap();
        assert!((s - t * base).abs() <= 1e-9 * t, "{t}: {s} vs {}", t * base);
    }
}

#[test]
fn probes_at_solution_are_skipped() {
    let p = exact_quadratic(1.0);
    let r = ReferenceSolution::compute(&p, 100_000).unwrap();
    let mut probes = random_probes(&p, &r, 99);
    probes.extend(std::iter::repeat_n(r.y_star.clone(), 10));
    assert!(matches!(estimate_sigma(&p, &r, &probes), Err(Error::InsufficientData(_))));
    probes.push(random_probes(&p, &r, 100).pop().unwrap());
    assert!(estimate_sigma(&p, &r, &probes).is_ok());
}

#[test]
fn best_approx_growth_is_positive() {
    let p = build_best_approximation(&desk_best_approx()).unwrap();
    let r = ReferenceSolution::compute(&p, 1_000_000).unwrap();
    let probes = sigma_probes(&p, &r, &p.initial_dual_point(), 400, 9).unwrap();
    assert!(probes.iter().all(|y| p.dual_value(y).unwrap().is_finite()));
    let sigma = estimate_sigma(&p, &r, &probes).unwrap();
    assert!(sigma > 0.0, "{sigma}");
}

#[test]
fn geometric_fit_is_exact() {
    for ratio in [0.85, 0.9, 0.999] {
        let rep = fit_linear_rate(&geometric_trace(ratio, 200), TraceField::Gap, 0.2).unwrap();
        assert!((rep.empirical_rate - ratio).abs() <= 1e-10);
        assert!(rep.r_squared >= 1.0 - 1e-12);
        // rows k = 1..=40 dropped, so iterations 0..=40 precede the fit
        assert_eq!(rep.burn_in, 41);
    }
}

#[test]
fn fit_truncates_at_the_floor() {
    let rep = fit_linear_rate(&geometric_trace(0.5, 200), TraceField::Gap, 0.0).unwrap();
    // 0.5^47 is the last value above 1e−14
    assert_eq!(rep.points, 46);
    assert!((rep.empirical_rate - 0.5).abs() <= 1e-10);
    assert!(matches!(
        fit_linear_rate(&geometric_trace(0.5, 8), TraceField::Gap, 0.0),
        Err(Error::InsufficientData(_))
    ));
    assert!(fit_linear_rate(&geometric_trace(0.5, 100), TraceField::Dist2, 0.0).is_err());
}

#[test]
fn seed_mean_averages_aligned_rows() {
    let (a, b) = (geometric_trace(0.5, 30), geometric_trace(0.8, 30));
    let mean = seed_mean(&[a, b], TraceField::Gamma).unwrap();
    assert_eq!(mean.len(), 30);
    for (k, v) in mean {
        let expect = 1.5 * (0.5f64.powi(k as i32) + 0.8f64.powi(k as i32));
        assert!((v - expect).abs() <= 1e-15 * expect.max(1.0));
    }
    let short = geometric_trace(0.5, 10);
    assert!(seed_mean(&[geometric_trace(0.5, 30), short], TraceField::Gamma).is_err());
}

#[test]
fn lyapunov_dominates_dual_suboptimality() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let (d, ds, d2, a) = (
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(0.0..3.0),
            rng.random_range(0.01..4.0),
        );
        assert!(lyapunov_value(d, ds, d2, a) >= d - ds);
        assert_eq!(lyapunov_value(d, ds, d2, a), d - ds + d2 / (2.0 * a));
    }
}

#[test]
fn descent_holds_with_tiny_slack_on_quadratic() {
    // τ = 0, |J| = 1 on a 3-dimensional quadratic
    let p = exact_quadratic(0.7);
    let c = ProblemConstants::new(&p, 0).unwrap();
    let alpha = 1.0 / (4.0 * (c.eta1 + c.eta2));
    let mut s = SolverState::new(&p, alpha, RngSpec { seed: 0 }, DelaySchedule::Zero).unwrap();
    let history = collect_descent_history(&p, &mut s, 200).unwrap();
    let rep = check_descent(&p, &history, alpha, &c, None).unwrap();
    assert_eq!(rep.violations, 0);
    assert!(rep.max_excess <= 1e-10, "{}", rep.max_excess);
}

#[test]
fn descent_at_fixed_point_is_zero() {
    let p = exact_quadratic(1.0);
    let r = ReferenceSolution::compute(&p, 100_000).unwrap();
    let c = ProblemConstants::new(&p, 0).unwrap();
    let step = DescentStep {
        k: 0,
        y: r.y_star.clone(),
        candidate: r.y_star.clone(),
        tail: 0.0,
    };
    let rep = check_descent(&p, &[step], 0.1, &c, Some(&r.y_star)).unwrap();
    assert_eq!(rep.checked, 2);
    assert!(rep.max_excess.abs() <= 1e-15);
}

#[test]
fn descent_sweep_over_desk_instances() {
    let problems = [
        build_best_approximation(&desk_best_approx()).unwrap(),
        build_augmented_l1(&desk_aug_l1(10, 30, 7)).unwrap(),
        build_num(&desk_num()).unwrap(),
    ];
    let schedule = DelaySchedule::Cyclic { period: 2 };
    let mut checked = 0;
    for p in &problems {
        let r = ReferenceSolution::compute(p, 2_000_000).unwrap();
        let sigma = estimate_sigma(p, &r, &sigma_probes(p, &r, &p.initial_dual_point(), 400, 1).unwrap()).unwrap();
        let c = ProblemConstants::new(p, schedule.tau_max()).unwrap();
        let (alpha, _) = c.max_stepsize_and_rate(sigma);
        let mut s = SolverState::new(p, alpha, RngSpec { seed: 3 }, schedule).unwrap();
        let history = collect_descent_history(p, &mut s, 3400).unwrap();
        let rep = check_descent(p, &history, alpha, &c, Some(&r.y_star)).unwrap();
        assert_eq!(rep.violations, 0, "max excess {:e}", rep.max_excess);
        checked += history.len();
    }
    assert!(checked >= 10_000);
}

#[test]
fn tail_sequences_from_rdciag_satisfy_the_recurrence() {
    let p = build_best_approximation(&desk_best_approx()).unwrap();
    let r = ReferenceSolution::compute(&p, 1_000_000).unwrap();
    let schedule = DelaySchedule::Cyclic { period: 2 };
    let sigma = estimate_sigma(&p, &r, &sigma_probes(&p, &r, &p.initial_dual_point(), 400, 1).unwrap()).unwrap();
    let c = ProblemConstants::new(&p, schedule.tau_max()).unwrap();
    let (alpha, rate) = c.max_stepsize_and_rate(sigma);
    let seeds: Vec<u64> = (0..50).collect();
    let (v, w) = tail_sequences(&p, &r, alpha, schedule, &seeds, 3000).unwrap();
    let nj = p.num_dual_blocks() as f64;
    let rep = check_tail_recurrence(&v, &w, rate, 1.0 / (4.0 * alpha), c.eta2 / nj, c.tau as usize);
    assert!(rep.hypothesis_fraction >= 0.99, "{rep:?}");
}

#[test]
fn primal_bound_holds_on_best_approximation() {
    let p = build_best_approximation(&desk_best_approx()).unwrap();
    let r = ReferenceSolution::compute(&p, 1_000_000).unwrap();
    let schedule = DelaySchedule::Cyclic { period: 2 };
    let sigma = estimate_sigma(&p, &r, &sigma_probes(&p, &r, &p.initial_dual_point(), 400, 1).unwrap()).unwrap();
    let c = ProblemConstants::new(&p, schedule.tau_max()).unwrap();
    let (alpha, rate) = c.max_stepsize_and_rate(sigma);
    let traces: Vec<Trace> = (0..50)
        .map(|seed| {
            let opts = RunOptions {
                method: Method::Rdciag,
                schedule,
                alpha,
                seed,
                stop: StopRule {
                    max_iter: 2000,
                    gap_tol: f64::INFINITY,
                    record_every: 10,
                },
                timing: false,
                verify: false,
            };
            run(&p, &opts, Some(&r)).unwrap()
        })
        .collect();
    let gamma0 = traces[0].initial.as_ref().unwrap().gamma.unwrap();
    for (k, err) in seed_mean(&traces, TraceField::PrimalErr2).unwrap() {
        if k < c.tau {
            continue;
        }
        let bound = primal_error_bound(alpha, gamma0, &c, rate, k, c.tau).unwrap();
        assert!(err <= bound, "k {k}: {err} > {bound}");
    }
}

#[test]
fn primal_bound_requires_k_at_least_tau() {
    let p = exact_quadratic(1.0);
    let c = ProblemConstants::new(&p, 3).unwrap();
    assert!(primal_error_bound(0.1, 1.0, &c, 0.9, 2, 3).is_err());
    assert_eq!(primal_error_bound(0.1, 0.0, &c, 0.9, 7, 3).unwrap(), 0.0);
}

#[test]
fn fit_of_real_run_is_bounded_by_theory() {
    let p = build_best_approximation(&desk_best_approx()).unwrap();
    let r = ReferenceSolution::compute(&p, 1_000_000).unwrap();
    let schedule = DelaySchedule::Cyclic { period: 2 };
    let sigma = estimate_sigma(&p, &r, &sigma_probes(&p, &r, &p.initial_dual_point(), 400, 1).unwrap()).unwrap();
    let c = ProblemConstants::new(&p, schedule.tau_max()).unwrap();
    let (alpha, rate) = c.max_stepsize_and_rate(sigma);
    let traces: Vec<Trace> = (0..20)
        .map(|seed| {
            let opts = RunOptions {
                method: Method::Rdciag,
                schedule,
                alpha,
                seed,
                stop: StopRule {
                    max_iter: 3000,
                    gap_tol: f64::INFINITY,
                    record_every: 10,
                },
                timing: false,
                verify: false,
            };
            run(&p, &opts, Some(&r)).unwrap()
        })
        .collect();
    let mean = seed_mean(&traces, TraceField::Gamma).unwrap();
    let rep = fit_series(rdciag::diagnostics::drop_burn_in(&mean, 0.2)).unwrap();
    assert!(rep.empirical_rate <= rate, "{} > {rate}", rep.empirical_rate);
}

/// Sequences satisfying the hypothesis by construction: `w` small enough that
/// the right side stays nonnegative, `V` anywhere in `[0, rhs]`.
fn synthetic_instance(seed: u64) -> (Vec<f64>, Vec<f64>, f64, f64, f64, usize) {
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
        let rhs = a * v[k] - b * wk + c * tail;
        v.push(rhs.max(0.0) * rng.random_range(0.0..=1.0));
    }
    (v, w, a, b, c, k0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn tail_lemma_on_valid_instances(seed in any::<u64>()) {
        let (v, w, a, b, c, k0) = synthetic_instance(seed);
        let rep = check_tail_recurrence(&v, &w, a, b, c, k0);
        prop_assert!(rep.hypothesis_violation.is_none());
        prop_assert!(rep.condition_holds);
        prop_assert!(rep.conclusion_violation.is_none(), "{rep:?}");
    }

    #[test]
    fn geometric_fit_recovers_any_ratio(ratio in 0.65f64..0.9999) {
        let rep = fit_linear_rate(&geometric_trace(ratio, 60), TraceField::Gap, 0.2).unwrap();
        prop_assert!((rep.empirical_rate - ratio).abs() <= 1e-10);
        prop_assert!(rep.r_squared >= 1.0 - 1e-12 && rep.r_squared <= 1.0);
    }
}
