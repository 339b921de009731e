use std::path::{Path, PathBuf};
use std::process::Command;

use rdciag::{Trace, TraceMeta, TraceRow};
use rdciag_cli::config::{AlphaChoice, ProblemConfig, ReferenceChoice, SigmaChoice};
use rdciag_cli::experiment::{parallel_map, trace_file_name};
use rdciag_cli::trace_csv::HEADER;
use rdciag_cli::{
    analyze_traces, parse_config, read_trace_csv, run_experiment, serialize_config, write_trace_csv, ExperimentConfig,
};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn shipped(name: &str) -> (ExperimentConfig, PathBuf) {
    let dir = configs_dir();
    let text = std::fs::read_to_string(dir.join(name)).unwrap();
    (parse_config(&text, &dir).unwrap(), dir)
}

fn small_best_approx(seeds: &str, max_iter: u64, reference: bool) -> ExperimentConfig {
    let text = format!(
        "[problem]\nkind = best_approx\nv = 2, 2\nomega0 = box(0, 0; 3, 3)\nconstraint = halfspace(1, 1; 2)\n\
         [method]\nalpha = 0.1\n[delay]\nkind = cyclic\nperiod = 2\n\
         [run]\nseeds = {seeds}\nmax_iter = {max_iter}\ngap_tol = inf\n{}",
        if reference { "reference = compute\n" } else { "" }
    );
    parse_config(&text, Path::new(".")).unwrap()
}

fn meta() -> TraceMeta {
    TraceMeta {
        method: "rdciag".into(),
        alpha: 0.1,
        tau: 0,
        seed: 0,
        num_primal_blocks: 1,
        num_dual_blocks: 1,
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rdciag"))
}

#[test]
fn errors_carry_line_numbers_and_are_all_reported() {
    let text = "\
[problem]
kind = best_approx
v = 1, oops
constraint = halfspace(1; 2; 3)
colour = red
[method]
name = newton
alpha = -1
[delay]
kind = cyclic
[run]
max_iter = 0
";
    let errs = parse_config(text, Path::new(".")).unwrap_err();
    let lines: Vec<usize> = errs.0.iter().map(|e| e.line).collect();
    // a missing key is reported at its section header
    for expect in [3, 4, 5, 7, 8, 9, 12] {
        assert!(lines.contains(&expect), "no error on line {expect}:\n{errs}");
    }
    assert!(errs.to_string().contains("line 5: unknown key `colour`"));
}

#[test]
fn negative_alpha_is_named_with_its_line() {
    let text = "[problem]\nkind = best_approx\nv = 1\n[method]\nalpha = -1\n";
    let errs = parse_config(text, Path::new(".")).unwrap_err();
    assert_eq!(errs.0.len(), 1, "{errs}");
    assert_eq!(errs.0[0].line, 5);
    assert!(errs.0[0].message.contains("alpha"));
}

#[test]
fn key_not_applicable_to_problem_kind() {
    let text = "[problem]\nkind = best_approx\nv = 1\nlambda = 2\n[method]\nalpha = 1\n";
    let errs = parse_config(text, Path::new(".")).unwrap_err();
    assert_eq!(errs.0[0].line, 4, "{errs}");
    assert!(errs.0[0].message.contains("does not apply"));
}

#[test]
fn semantic_rules() {
    let base = "[problem]\nkind = best_approx\nv = 1\n";
    let parse = |rest: &str| parse_config(&format!("{base}{rest}"), Path::new("."));
    // sigma = estimate without a reference
    assert!(parse("[method]\nsigma = estimate\n").is_err());
    assert!(parse("[method]\nsigma = estimate\n[run]\nreference = compute\n").is_ok());
    // Kaczmarz is for sparse recovery only
    assert!(parse("[method]\nname = sparse_kaczmarz\nalpha = 1\n").is_err());
    // a file reference is kept verbatim
    let c = parse("[method]\nalpha = 1\n[run]\nreference = ref.txt\n").unwrap();
    assert_eq!(c.reference, Some(ReferenceChoice::File("ref.txt".into())));
    assert_eq!(c.alpha, AlphaChoice::Fixed(1.0));
    assert!(parse("[method]\nsigma = 0\n").is_err());
    assert!(parse("[method]\nalpha = 1\n[run]\nseeds =\n").is_err());
    assert!(parse("[method]\nalpha = 1\n[run]\ngap_tol = -1\n").is_err());
}

#[test]
fn shipped_configs_round_trip() {
    for name in ["best_approx.cfg", "aug_l1.cfg", "num.cfg"] {
        let (c, dir) = shipped(name);
        let again = parse_config(&serialize_config(&c), &dir).unwrap();
        assert_eq!(c, again, "{name}");
        assert_eq!(c.alpha, AlphaChoice::Auto);
        assert_eq!(c.sigma, Some(SigmaChoice::Estimate));
    }
    let (c, _) = shipped("aug_l1.cfg");
    let ProblemConfig::AugL1 { spec, .. } = &c.problem else {
        panic!("wrong kind")
    };
    // the data files hold the desk instance exactly
    assert_eq!(spec, &rdciag::applications::desk_aug_l1(10, 30, 7));
}

#[test]
fn matrix_file_problems_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ragged.txt"), "1 2\n3\n").unwrap();
    std::fs::write(dir.path().join("zero.txt"), "1 0\n0 0\n").unwrap();
    let cfg = |a: &str, b: &str| {
        format!("[problem]\nkind = aug_l1\na_file = {a}\nb = {b}\nlambda = 0.1\n[method]\nalpha = 1\n")
    };
    for (a, b) in [("ragged.txt", "1, 2"), ("zero.txt", "1, 0"), ("missing.txt", "1"), ("zero.txt", "1")] {
        let errs = parse_config(&cfg(a, b), dir.path()).unwrap_err();
        assert!(errs.0.iter().all(|e| e.line == 3 || e.line == 4), "{a}: {errs}");
    }
}

#[test]
fn csv_round_trip_is_exact() {
    let mut t = Trace::new(meta());
    t.initial = Some(TraceRow {
        k: 0,
        d: 1.0 / 3.0,
        gap: std::f64::consts::PI,
        dist2: Some(1e-300),
        gamma: Some(-0.0),
        primal_err2: Some(123456789.12345679),
        max_age: 0,
        seconds: None,
    });
    for k in 1..=5u64 {
        t.push(TraceRow {
            k: k * 7,
            d: (k as f64).sqrt(),
            gap: 1.0 / k as f64,
            dist2: Some(k as f64 * 1e-17),
            gamma: Some((k as f64).ln()),
            primal_err2: None,
            max_age: k,
            seconds: Some(k as f64 * 0.1),
        });
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    write_trace_csv(&t, &path).unwrap();
    let back = read_trace_csv(&path).unwrap();
    let mut expect = vec![t.initial.clone().unwrap()];
    expect.extend(t.rows.clone());
    assert_eq!(back, expect);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("k,D,gap,dist2,gamma,primal_err2,max_age,seconds\n"));
    assert!(text.contains("\n0,3.3333333333333331e-1,"), "{text}");
}

#[test]
fn empty_trace_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    write_trace_csv(&Trace::new(meta()), &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{}\n", HEADER.join(",")));
    assert!(read_trace_csv(&path).unwrap().is_empty());
}

#[test]
fn reader_rejects_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    };
    let header = HEADER.join(",");
    assert!(read_trace_csv(&write("h.csv", "k,D\n")).is_err());
    assert!(read_trace_csv(&write("n.csv", &format!("{header}\n1,x,1,,,,0,\n"))).is_err());
    assert!(read_trace_csv(&write("o.csv", &format!("{header}\n2,1,1,,,,0,\n1,1,1,,,,0,\n"))).is_err());
    assert!(read_trace_csv(&dir.path().join("absent.csv")).is_err());
}

#[test]
fn run_without_reference_leaves_fields_empty() {
    let out = tempfile::tempdir().unwrap();
    let report = run_experiment(&small_best_approx("3", 50, false), Path::new("."), out.path()).unwrap();
    let path = out.path().join(trace_file_name(rdciag::Method::Rdciag, 3, 0));
    let text = std::fs::read_to_string(&path).unwrap();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 8);
        assert!(fields[3].is_empty() && fields[4].is_empty() && fields[5].is_empty() && fields[7].is_empty());
    }
    let rows = read_trace_csv(&path).unwrap();
    assert!(rows.iter().all(|r| r.dist2.is_none() && r.gamma.is_none()));
    assert!(report.to_text().contains("sigma=na"));
}

#[test]
fn ten_iterations_give_ten_row_trace_and_report() {
    let out = tempfile::tempdir().unwrap();
    run_experiment(&small_best_approx("0", 10, true), Path::new("."), out.path()).unwrap();
    let rows = read_trace_csv(&out.path().join(trace_file_name(rdciag::Method::Rdciag, 0, 0))).unwrap();
    let ks: Vec<u64> = rows.iter().map(|r| r.k).collect();
    assert_eq!(ks, (0..=10).collect::<Vec<_>>());
    let report = std::fs::read_to_string(out.path().join("report.txt")).unwrap();
    for key in ["alpha=0.1", "eta1=", "eta2=", "z0=", "ell_max=", "run0.seed=0", "theoretical_rate=na"] {
        assert!(report.contains(key), "{key} missing from\n{report}");
    }
}

#[test]
fn identical_seeds_give_identical_files() {
    let out = tempfile::tempdir().unwrap();
    run_experiment(&small_best_approx("5, 5", 300, true), Path::new("."), out.path()).unwrap();
    let read = |run| std::fs::read(out.path().join(trace_file_name(rdciag::Method::Rdciag, 5, run))).unwrap();
    assert_eq!(read(0), read(1));
    // and a rerun reproduces the directory byte for byte
    let again = tempfile::tempdir().unwrap();
    run_experiment(&small_best_approx("5, 5", 300, true), Path::new("."), again.path()).unwrap();
    for name in ["report.txt", &trace_file_name(rdciag::Method::Rdciag, 5, 0)] {
        assert_eq!(
            std::fs::read(out.path().join(name)).unwrap(),
            std::fs::read(again.path().join(name)).unwrap()
        );
    }
}

#[test]
fn parallel_map_keeps_input_order() {
    let jobs: Vec<u64> = (0..37).collect();
    for threads in [1, 3, 8] {
        let out = parallel_map(&jobs, threads, |&j| j * j);
        assert_eq!(out, jobs.iter().map(|j| j * j).collect::<Vec<_>>());
    }
}

#[test]
fn shipped_l1_sweep_is_within_theory() {
    let (c, dir) = shipped("aug_l1.cfg");
    let out = tempfile::tempdir().unwrap();
    let report = run_experiment(&c, &dir, out.path()).unwrap();
    assert_eq!(report.runs.len(), 20);
    let fit = report.mean_fit.as_ref().unwrap();
    let theory = report.plan.theoretical_rate.unwrap();
    assert!(fit.empirical_rate <= theory, "{} > {theory}", fit.empirical_rate);
    assert_eq!(report.within_theory(), Some(true));

    let files: Vec<PathBuf> = report.runs.iter().map(|r| r.file.clone()).collect();
    let text = analyze_traces(&files, 0.2).unwrap();
    assert!(text.starts_with("fit_field=gamma\n"));
    let mean_line = text.lines().find(|l| l.starts_with("seed_mean:")).unwrap();
    assert!(mean_line.contains(&format!("rate={}", fit.empirical_rate)), "{mean_line}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.txt"), "1\n").unwrap();
    let divergent = dir.path().join("div.cfg");
    std::fs::write(
        &divergent,
        "[problem]\nkind = aug_l1\na_file = a.txt\nb = 1\nlambda = 0.1\n[method]\nalpha = 3\n[run]\nmax_iter = 1000\n",
    )
    .unwrap();
    let invalid = dir.path().join("bad.cfg");
    std::fs::write(&invalid, "[problem]\nkind = best_approx\nv = 1\n[method]\nalpha = -1\n").unwrap();
    let fine = dir.path().join("ok.cfg");
    std::fs::write(&fine, serialize_config(&small_best_approx("0", 20, false))).unwrap();
    let out = dir.path().join("out");

    let status = |args: &[&Path]| bin().args(args).status().unwrap().code();
    let solve = Path::new("solve");
    let flag = Path::new("--out");
    assert_eq!(status(&[solve, &fine, flag, &out]), Some(0));
    assert_eq!(status(&[solve, &divergent, flag, &out]), Some(2));
    assert_eq!(status(&[solve, &invalid, flag, &out]), Some(3));
    assert_eq!(status(&[solve, &dir.path().join("none.cfg"), flag, &out]), Some(1));

    let stderr = bin().args([solve, &invalid]).output().unwrap().stderr;
    assert!(String::from_utf8_lossy(&stderr).contains("line 5"));

    let compare = bin()
        .args([Path::new("compare"), &fine, Path::new("--methods"), Path::new("rdciag,dbcd,dual_pg"), flag, &out])
        .output()
        .unwrap();
    assert_eq!(compare.status.code(), Some(0));
    for m in ["rdciag", "dbcd", "dual_pg"] {
        assert!(out.join(format!("report_{m}.txt")).exists());
    }
    let kaczmarz_on_wrong_problem =
        status(&[Path::new("compare"), &fine, Path::new("--methods"), Path::new("sparse_kaczmarz"), flag, &out]);
    assert_eq!(kaczmarz_on_wrong_problem, Some(3));
}
