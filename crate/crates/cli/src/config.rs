//! Experiment configuration: a line-oriented `key = value` format grouped under
//! `[problem]`, `[method]`, `[delay]` and `[run]` headers.
//!
//! ```text
//! [problem]
//! kind = best_approx
//! v = 1.5, 0.8
//! omega0 = box(-1, -1; 1, 1)
//! constraint = halfspace(1, 1; 1.5)
//!
//! [method]
//! name = rdciag
//! alpha = auto
//! sigma = estimate
//!
//! [delay]
//! kind = cyclic
//! period = 2
//!
//! [run]
//! seeds = 0, 1
//! max_iter = 100000
//! gap_tol = 1e-8
//! reference = compute
//! ```
//!
//! Sets are written `whole(n)`, `box(lo; hi)`, `hyperplane(a; b)`,
//! `halfspace(a; c)` and `ball(center; r)`; utilities are `log` or
//! `quadratic(q, p)`; a NUM source is `utility; cap; link, link, …`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use rdciag::applications::{AugL1Spec, BestApproxSpec, NumSource, NumSpec};
use rdciag::{ConvexSet, DelaySchedule, DenseMatrix, Method, Utility};

/// One problem found while reading a config, tied to its line.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

/// Every problem found in one pass over a config.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (q, e) in self.0.iter().enumerate() {
            if q > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum VectorSource {
    Inline(Vec<f64>),
    File(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemConfig {
    BestApprox(BestApproxSpec),
    AugL1 {
        a_file: String,
        b: VectorSource,
        /// Matrix and right-hand side as loaded from the referenced files.
        spec: AugL1Spec,
    },
    Num(NumSpec),
}

impl ProblemConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemConfig::BestApprox(_) => "best_approx",
            ProblemConfig::AugL1 { .. } => "aug_l1",
            ProblemConfig::Num(_) => "num",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaChoice {
    /// The largest step the theory admits for the configured σ.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmaChoice {
    Given(f64),
    /// Probe-based estimate around the reference solution.
    Estimate,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReferenceChoice {
    Compute,
    File(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub method: Method,
    pub alpha: AlphaChoice,
    pub sigma: Option<SigmaChoice>,
    pub delay: DelaySchedule,
    pub seeds: Vec<u64>,
    pub max_iter: u64,
    pub gap_tol: f64,
    pub record_every: u64,
    pub reference: Option<ReferenceChoice>,
    /// Fill the `seconds` column; off by default so traces are reproducible.
    pub timing: bool,
}

const SECTIONS: [&str; 4] = ["problem", "method", "delay", "run"];

fn allowed_keys(section: &str) -> &'static [&'static str] {
    match section {
        "problem" => &[
            "kind", "v", "omega0", "constraint", "a_file", "b", "b_file", "lambda", "capacities", "source",
        ],
        "method" => &["name", "alpha", "sigma"],
        "delay" => &["kind", "period", "tau", "seed"],
        "run" => &["seeds", "max_iter", "gap_tol", "record_every", "reference", "timing"],
        _ => &[],
    }
}

fn repeatable(section: &str, key: &str) -> bool {
    section == "problem" && (key == "constraint" || key == "source")
}

#[derive(Clone, Debug)]
struct Entry {
    line: usize,
    value: String,
}

/// Entries of one section, keyed by name; repeatable keys keep every value.
#[derive(Default, Debug)]
struct Section {
    header_line: usize,
    entries: BTreeMap<String, Vec<Entry>>,
}

struct Reader<'a> {
    sections: BTreeMap<&'static str, Section>,
    errors: Vec<ConfigError>,
    end_line: usize,
    base_dir: &'a Path,
}

impl Reader<'_> {
    fn err(&mut self, line: usize, message: impl Into<String>) {
        self.errors.push(ConfigError {
            line,
            message: message.into(),
        });
    }

    fn take(&mut self, section: &str, key: &str) -> Option<Entry> {
        self.sections
            .get_mut(section)
            .and_then(|s| s.entries.remove(key))
            .and_then(|mut v| (!v.is_empty()).then(|| v.remove(0)))
    }

    fn take_all(&mut self, section: &str, key: &str) -> Vec<Entry> {
        self.sections
            .get_mut(section)
            .and_then(|s| s.entries.remove(key))
            .unwrap_or_default()
    }

    fn section_line(&self, section: &str) -> usize {
        self.sections.get(section).map_or(self.end_line, |s| s.header_line)
    }

    fn required(&mut self, section: &str, key: &str) -> Option<Entry> {
        let e = self.take(section, key);
        if e.is_none() {
            let line = self.section_line(section);
            self.err(line, format!("missing required key `{key}` in [{section}]"));
        }
        e
    }

    /// Parses an optional entry, recording a type error on failure.
    fn parsed<T>(&mut self, section: &str, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Option<(usize, T)> {
        let e = self.take(section, key)?;
        match parse(&e.value) {
            Ok(v) => Some((e.line, v)),
            Err(m) => {
                self.err(e.line, format!("`{key}`: {m}"));
                None
            }
        }
    }

    fn parsed_required<T>(
        &mut self,
        section: &str,
        key: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Option<(usize, T)> {
        let e = self.required(section, key)?;
        match parse(&e.value) {
            Ok(v) => Some((e.line, v)),
            Err(m) => {
                self.err(e.line, format!("`{key}`: {m}"));
                None
            }
        }
    }

    /// Flags keys left over after interpretation as not applicable.
    fn reject_leftovers(&mut self, section: &str, context: &str) {
        let leftovers: Vec<(String, usize)> = self
            .sections
            .get_mut(section)
            .map(|s| {
                std::mem::take(&mut s.entries)
                    .into_iter()
                    .flat_map(|(k, v)| v.into_iter().map(move |e| (k.clone(), e.line)))
                    .collect()
            })
            .unwrap_or_default();
        for (key, line) in leftovers {
            self.err(line, format!("key `{key}` does not apply to {context}"));
        }
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("expected a number, found {:?}", s.trim()))
}

fn parse_u64(s: &str) -> Result<u64, String> {
    s.trim()
        .parse::<u64>()
        .map_err(|_| format!("expected a nonnegative integer, found {:?}", s.trim()))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("expected true or false, found {other:?}")),
    }
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(item).collect()
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    parse_list(s, parse_f64)
}

/// `name(args)` → (`name`, `args`)
fn call_form(s: &str) -> Option<(&str, &str)> {
    let s = s.trim();
    let open = s.find('(')?;
    s.ends_with(')').then(|| (s[..open].trim(), &s[open + 1..s.len() - 1]))
}

fn parse_set(s: &str) -> Result<ConvexSet, String> {
    let (name, args) = call_form(s).ok_or_else(|| format!("expected a set like box(lo; hi), found {:?}", s.trim()))?;
    let parts: Vec<&str> = args.split(';').collect();
    let want = |n: usize| {
        if parts.len() == n {
            Ok(())
        } else {
            Err(format!("{name} takes {n} `;`-separated arguments, found {}", parts.len()))
        }
    };
    let set = match name {
        "whole" => {
            want(1)?;
            let n = parse_u64(parts[0])? as usize;
            ConvexSet::whole(n)
        }
        "box" => {
            want(2)?;
            ConvexSet::boxed(parse_f64_list(parts[0])?, parse_f64_list(parts[1])?)
        }
        "hyperplane" => {
            want(2)?;
            ConvexSet::hyperplane(parse_f64_list(parts[0])?, parse_f64(parts[1])?)
        }
        "halfspace" => {
            want(2)?;
            ConvexSet::halfspace(parse_f64_list(parts[0])?, parse_f64(parts[1])?)
        }
        "ball" => {
            want(2)?;
            ConvexSet::ball(parse_f64_list(parts[0])?, parse_f64(parts[1])?)
        }
        other => return Err(format!("unknown set kind {other:?}")),
    };
    set.map_err(|e| e.to_string())
}

fn parse_utility(s: &str) -> Result<Utility, String> {
    if s.trim() == "log" {
        return Ok(Utility::Log);
    }
    match call_form(s) {
        Some(("quadratic", args)) => match parse_f64_list(args)?.as_slice() {
            [q, p] if *p >= 0.0 => Ok(Utility::Quadratic { q: *q, p: *p }),
            [_, _] => Err("quadratic utility needs p ≥ 0".into()),
            _ => Err("quadratic takes two arguments q, p".into()),
        },
        _ => Err(format!("expected log or quadratic(q, p), found {:?}", s.trim())),
    }
}

fn parse_source(s: &str) -> Result<NumSource, String> {
    let parts: Vec<&str> = s.split(';').collect();
    let [utility, cap, links] = parts.as_slice() else {
        return Err("a source is `utility; cap; link, link, …`".into());
    };
    Ok(NumSource {
        utility: parse_utility(utility)?,
        cap: parse_f64(cap)?,
        links: parse_list(links, |l| parse_u64(l).map(|v| v as usize))?,
    })
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.trim().parse::<Method>().map_err(|e| e.to_string())
}

fn parse_alpha(s: &str) -> Result<AlphaChoice, String> {
    match s.trim() {
        "auto" => Ok(AlphaChoice::Auto),
        other => parse_f64(other).map(AlphaChoice::Fixed),
    }
}

fn parse_sigma(s: &str) -> Result<SigmaChoice, String> {
    match s.trim() {
        "estimate" => Ok(SigmaChoice::Estimate),
        other => parse_f64(other).map(SigmaChoice::Given),
    }
}

fn parse_reference(s: &str) -> Result<ReferenceChoice, String> {
    match s.trim() {
        "" => Err("empty reference".into()),
        "compute" => Ok(ReferenceChoice::Compute),
        path => Ok(ReferenceChoice::File(path.to_string())),
    }
}

/// Whitespace-delimited numbers, one matrix row per nonblank line.
fn read_numeric_rows(path: &Path) -> Result<Vec<Vec<f64>>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(q, l)| {
            l.split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| format!("{}:{}: not a number: {t:?}", path.display(), q + 1))
                })
                .collect()
        })
        .collect()
}

/// Parses and validates a config; relative data paths resolve against
/// `base_dir`. Every error found is reported, not just the first.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ExperimentConfig, ConfigErrors> {
    let mut r = Reader {
        sections: BTreeMap::new(),
        errors: Vec::new(),
        end_line: text.lines().count().max(1),
        base_dir,
    };
    scan(text, &mut r);
    let problem = read_problem(&mut r);
    let method = r.parsed("method", "name", parse_method).map(|(_, m)| m).unwrap_or(Method::Rdciag);
    let alpha = r.parsed("method", "alpha", parse_alpha);
    let sigma = r.parsed("method", "sigma", parse_sigma);
    r.reject_leftovers("method", "[method]");
    let delay = read_delay(&mut r);
    let seeds = r.parsed("run", "seeds", |s| parse_list(s, parse_u64));
    let max_iter = r.parsed("run", "max_iter", parse_u64);
    let gap_tol = r.parsed("run", "gap_tol", parse_f64);
    let record_every = r.parsed("run", "record_every", parse_u64);
    let reference = r.parsed("run", "reference", parse_reference);
    let timing = r.parsed("run", "timing", parse_bool).map(|(_, t)| t).unwrap_or(false);
    r.reject_leftovers("run", "[run]");

    let run_line = r.section_line("run");
    let method_line = r.section_line("method");
    let alpha_line = alpha.as_ref().map_or(method_line, |a| a.0);
    let alpha = alpha.map(|a| a.1).unwrap_or(AlphaChoice::Auto);
    if let AlphaChoice::Fixed(a) = alpha {
        if !(a > 0.0 && a.is_finite()) {
            r.err(alpha_line, format!("alpha must be a positive finite number, got {a}"));
        }
    }
    if let Some((line, SigmaChoice::Given(s))) = sigma {
        if !(s > 0.0 && s.is_finite()) {
            r.err(line, format!("sigma must be positive, got {s}"));
        }
    }
    if alpha == AlphaChoice::Auto && sigma.is_none() {
        r.err(alpha_line, "alpha = auto needs sigma (a number or `estimate`)");
    }
    if let (Some((line, SigmaChoice::Estimate)), None) = (sigma, &reference) {
        r.err(line, "sigma = estimate needs a reference (`reference = compute` or a file)");
    }
    let seeds_line = seeds.as_ref().map_or(run_line, |s| s.0);
    let seeds = seeds.map(|s| s.1).unwrap_or_else(|| vec![0]);
    if seeds.is_empty() {
        r.err(seeds_line, "seeds must list at least one seed");
    }
    let max_iter_line = max_iter.map_or(run_line, |m| m.0);
    let max_iter = max_iter.map(|m| m.1).unwrap_or(10_000);
    if max_iter == 0 {
        r.err(max_iter_line, "max_iter must be at least 1");
    }
    let gap_tol = match gap_tol {
        Some((line, g)) if g.is_nan() || g < 0.0 => {
            r.err(line, format!("gap_tol must be nonnegative, got {g}"));
            g
        }
        Some((_, g)) => g,
        None => 1e-8,
    };
    let record_every = match record_every {
        Some((line, 0)) => {
            r.err(line, "record_every must be at least 1");
            1
        }
        Some((_, v)) => v,
        None => rdciag::algorithms::default_record_every(max_iter),
    };
    if method == Method::SparseKaczmarz {
        if let Some(p) = &problem {
            if !matches!(p, ProblemConfig::AugL1 { .. }) {
                r.err(method_line, "sparse_kaczmarz solves aug_l1 problems only");
            }
        }
    }

    for e in r.errors.iter_mut() {
        e.line = e.line.max(1);
    }
    r.errors.sort_by_key(|e| e.line);
    match (problem, r.errors.is_empty()) {
        (Some(problem), true) => Ok(ExperimentConfig {
            problem,
            method,
            alpha,
            sigma: sigma.map(|s| s.1),
            delay,
            seeds,
            max_iter,
            gap_tol,
            record_every,
            reference: reference.map(|r| r.1),
            timing,
        }),
        _ => Err(ConfigErrors(r.errors)),
    }
}

fn scan(text: &str, r: &mut Reader<'_>) {
    let mut current: Option<&'static str> = None;
    for (q, raw) in text.lines().enumerate() {
        let line = q + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            match SECTIONS.iter().find(|s| **s == name.trim()) {
                Some(s) => {
                    if r.sections.contains_key(s) {
                        r.err(line, format!("section [{s}] appears twice"));
                    }
                    r.sections.entry(s).or_default().header_line = line;
                    current = Some(s);
                }
                None => {
                    r.err(line, format!("unknown section [{}]", name.trim()));
                    current = None;
                }
            }
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            r.err(line, format!("expected `key = value`, found {body:?}"));
            continue;
        };
        let key = key.trim();
        let Some(section) = current else {
            if r.sections.is_empty() {
                r.err(line, format!("key `{key}` appears before any section header"));
            }
            continue;
        };
        if !allowed_keys(section).contains(&key) {
            r.err(line, format!("unknown key `{key}` in [{section}]"));
            continue;
        }
        let entries = r.sections.get_mut(section).expect("section registered").entries.entry(key.to_string()).or_default();
        if !entries.is_empty() && !repeatable(section, key) {
            let first = entries[0].line;
            r.err(line, format!("key `{key}` repeats line {first}"));
            continue;
        }
        entries.push(Entry {
            line,
            value: value.trim().to_string(),
        });
    }
}

fn read_problem(r: &mut Reader<'_>) -> Option<ProblemConfig> {
    if !r.sections.contains_key("problem") {
        let line = r.end_line;
        r.err(line, "missing [problem] section");
        return None;
    }
    let (kind_line, kind) = r.parsed_required("problem", "kind", |s| Ok(s.trim().to_string()))?;
    let problem = match kind.as_str() {
        "best_approx" => read_best_approx(r, kind_line),
        "aug_l1" => read_aug_l1(r, kind_line),
        "num" => read_num(r, kind_line),
        other => {
            r.err(kind_line, format!("unknown problem kind {other:?} (best_approx, aug_l1, num)"));
            r.take_all("problem", "constraint");
            r.take_all("problem", "source");
            if let Some(s) = r.sections.get_mut("problem") {
                s.entries.clear();
            }
            return None;
        }
    };
    r.reject_leftovers("problem", &format!("problem kind {kind}"));
    problem
}

fn read_best_approx(r: &mut Reader<'_>, kind_line: usize) -> Option<ProblemConfig> {
    let v = r.parsed_required("problem", "v", parse_f64_list);
    let omega0 = r.parsed("problem", "omega0", parse_set);
    let mut constraints = Vec::new();
    let mut ok = true;
    for e in r.take_all("problem", "constraint") {
        match parse_set(&e.value) {
            Ok(s) => constraints.push((e.line, s)),
            Err(m) => {
                r.err(e.line, format!("`constraint`: {m}"));
                ok = false;
            }
        }
    }
    let (v_line, v) = v?;
    if v.is_empty() {
        r.err(v_line, "v must have at least one entry");
        return None;
    }
    let omega0 = match omega0 {
        Some((line, s)) if s.dim() != v.len() => {
            r.err(line, format!("omega0 has dimension {}, v has {}", s.dim(), v.len()));
            ok = false;
            s
        }
        Some((_, s)) => s,
        None => ConvexSet::whole(v.len()).expect("positive dimension"),
    };
    for (line, s) in &constraints {
        if s.dim() != v.len() {
            r.err(*line, format!("constraint has dimension {}, v has {}", s.dim(), v.len()));
            ok = false;
        }
    }
    let _ = kind_line;
    ok.then(|| {
        ProblemConfig::BestApprox(BestApproxSpec {
            v,
            omega0,
            constraints: constraints.into_iter().map(|c| c.1).collect(),
        })
    })
}

fn read_aug_l1(r: &mut Reader<'_>, kind_line: usize) -> Option<ProblemConfig> {
    let a_file = r.parsed_required("problem", "a_file", |s| Ok(s.trim().to_string()));
    let b_inline = r.parsed("problem", "b", parse_f64_list);
    let b_file = r.parsed("problem", "b_file", |s| Ok(s.trim().to_string()));
    let lambda = r.parsed_required("problem", "lambda", parse_f64);
    if let Some((line, l)) = lambda {
        if !(l > 0.0 && l.is_finite()) {
            r.err(line, format!("lambda must be positive, got {l}"));
        }
    }
    let (b_line, b) = match (b_inline, b_file) {
        (Some((line, b)), None) => (line, VectorSource::Inline(b)),
        (None, Some((line, f))) => (line, VectorSource::File(f)),
        (Some((line, _)), Some(_)) => {
            r.err(line, "give either `b` or `b_file`, not both");
            return None;
        }
        (None, None) => {
            r.err(kind_line, "aug_l1 needs `b` or `b_file`");
            return None;
        }
    };
    let (a_line, a_file) = a_file?;
    let (_, lambda) = lambda?;
    let rows = match read_numeric_rows(&r.base_dir.join(&a_file)) {
        Ok(rows) => rows,
        Err(m) => {
            r.err(a_line, m);
            return None;
        }
    };
    let a = match DenseMatrix::from_rows(&rows) {
        Ok(a) if !rows.is_empty() => a,
        Ok(_) => {
            r.err(a_line, "matrix file is empty");
            return None;
        }
        Err(e) => {
            r.err(a_line, format!("matrix rows differ in length: {e}"));
            return None;
        }
    };
    let b_values = match &b {
        VectorSource::Inline(v) => v.clone(),
        VectorSource::File(f) => match read_numeric_rows(&r.base_dir.join(f)) {
            Ok(rows) => rows.into_iter().flatten().collect(),
            Err(m) => {
                r.err(b_line, m);
                return None;
            }
        },
    };
    if b_values.len() != a.rows() {
        r.err(b_line, format!("b has {} entries, A has {} rows", b_values.len(), a.rows()));
        return None;
    }
    if let Some(row) = (0..a.rows()).find(|&q| a.row(q).iter().all(|v| *v == 0.0)) {
        r.err(a_line, format!("row {row} of A is zero"));
        return None;
    }
    if !(lambda > 0.0) {
        return None;
    }
    Some(ProblemConfig::AugL1 {
        a_file,
        b,
        spec: AugL1Spec {
            a,
            b: b_values,
            lambda,
        },
    })
}

fn read_num(r: &mut Reader<'_>, kind_line: usize) -> Option<ProblemConfig> {
    let lambda = r.parsed_required("problem", "lambda", parse_f64);
    let capacities = r.parsed_required("problem", "capacities", parse_f64_list);
    let mut sources = Vec::new();
    let mut ok = true;
    for e in r.take_all("problem", "source") {
        match parse_source(&e.value) {
            Ok(s) => sources.push((e.line, s)),
            Err(m) => {
                r.err(e.line, format!("`source`: {m}"));
                ok = false;
            }
        }
    }
    if sources.is_empty() && ok {
        r.err(kind_line, "num needs at least one `source`");
        ok = false;
    }
    if let Some((line, l)) = lambda {
        if !(l > 0.0 && l.is_finite()) {
            r.err(line, format!("lambda must be positive (strong convexity), got {l}"));
            ok = false;
        }
    }
    let (_, lambda) = lambda?;
    let (cap_line, capacities) = capacities?;
    if capacities.is_empty() {
        r.err(cap_line, "capacities must list at least one link");
        ok = false;
    }
    for (l, c) in capacities.iter().enumerate() {
        if !(*c > 0.0 && c.is_finite()) {
            r.err(cap_line, format!("capacity of link {l} must be positive, got {c}"));
            ok = false;
        }
    }
    for (line, s) in &sources {
        if !(s.cap > 0.0 && s.cap.is_finite()) {
            r.err(*line, format!("source cap must be positive, got {}", s.cap));
            ok = false;
        }
        if s.links.is_empty() {
            r.err(*line, "source must use at least one link");
            ok = false;
        }
        if let Some(l) = s.links.iter().find(|&&l| l >= capacities.len()) {
            r.err(*line, format!("link {l} is not among the {} capacities", capacities.len()));
            ok = false;
        }
        let mut seen = s.links.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != s.links.len() {
            r.err(*line, "source lists a link twice");
            ok = false;
        }
    }
    ok.then(|| {
        ProblemConfig::Num(NumSpec {
            sources: sources.into_iter().map(|s| s.1).collect(),
            capacities,
            lambda,
        })
    })
}

fn read_delay(r: &mut Reader<'_>) -> DelaySchedule {
    let Some((line, kind)) = r.parsed("delay", "kind", |s| Ok(s.trim().to_string())) else {
        r.reject_leftovers("delay", "[delay] without `kind`");
        return DelaySchedule::Zero;
    };
    let schedule = match kind.as_str() {
        "zero" => DelaySchedule::Zero,
        "cyclic" => match r.parsed_required("delay", "period", parse_u64) {
            Some((pl, 0)) => {
                r.err(pl, "period must be at least 1");
                DelaySchedule::Zero
            }
            Some((_, period)) => DelaySchedule::Cyclic { period },
            None => DelaySchedule::Zero,
        },
        "random_bounded" => {
            let tau = r.parsed_required("delay", "tau", parse_u64);
            let seed = r.parsed("delay", "seed", parse_u64).map(|s| s.1).unwrap_or(0);
            DelaySchedule::RandomBounded {
                tau: tau.map(|t| t.1).unwrap_or(0),
                seed,
            }
        }
        other => {
            r.err(line, format!("unknown delay kind {other:?} (zero, cyclic, random_bounded)"));
            if let Some(s) = r.sections.get_mut("delay") {
                s.entries.clear();
            }
            return DelaySchedule::Zero;
        }
    };
    r.reject_leftovers("delay", &format!("delay kind {kind}"));
    schedule
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn set_text(s: &ConvexSet) -> String {
    match s {
        ConvexSet::WholeSpace { dim } => format!("whole({dim})"),
        ConvexSet::Box { lo, hi } => format!("box({}; {})", join(lo), join(hi)),
        ConvexSet::Hyperplane { normal, offset } => format!("hyperplane({}; {offset})", join(normal)),
        ConvexSet::Halfspace { normal, bound } => format!("halfspace({}; {bound})", join(normal)),
        ConvexSet::Ball { center, radius } => format!("ball({}; {radius})", join(center)),
    }
}

fn utility_text(u: &Utility) -> String {
    match u {
        Utility::Log => "log".into(),
        Utility::Quadratic { q, p } => format!("quadratic({q}, {p})"),
    }
}

/// Canonical text form; parsing it back yields an equal config.
pub fn serialize_config(c: &ExperimentConfig) -> String {
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "[problem]").ok();
    writeln!(w, "kind = {}", c.problem.kind()).ok();
    match &c.problem {
        ProblemConfig::BestApprox(s) => {
            writeln!(w, "v = {}", join(&s.v)).ok();
            writeln!(w, "omega0 = {}", set_text(&s.omega0)).ok();
            for k in &s.constraints {
                writeln!(w, "constraint = {}", set_text(k)).ok();
            }
        }
        ProblemConfig::AugL1 { a_file, b, spec } => {
            writeln!(w, "a_file = {a_file}").ok();
            match b {
                VectorSource::Inline(v) => writeln!(w, "b = {}", join(v)).ok(),
                VectorSource::File(f) => writeln!(w, "b_file = {f}").ok(),
            };
            writeln!(w, "lambda = {}", spec.lambda).ok();
        }
        ProblemConfig::Num(s) => {
            writeln!(w, "lambda = {}", s.lambda).ok();
            writeln!(w, "capacities = {}", join(&s.capacities)).ok();
            for src in &s.sources {
                let links = src.links.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(", ");
                writeln!(w, "source = {}; {}; {links}", utility_text(&src.utility), src.cap).ok();
            }
        }
    }
    writeln!(w, "\n[method]").ok();
    writeln!(w, "name = {}", c.method).ok();
    match c.alpha {
        AlphaChoice::Auto => writeln!(w, "alpha = auto").ok(),
        AlphaChoice::Fixed(a) => writeln!(w, "alpha = {a}").ok(),
    };
    match c.sigma {
        Some(SigmaChoice::Given(s)) => writeln!(w, "sigma = {s}").ok(),
        Some(SigmaChoice::Estimate) => writeln!(w, "sigma = estimate").ok(),
        None => None,
    };
    writeln!(w, "\n[delay]").ok();
    match c.delay {
        DelaySchedule::Zero => writeln!(w, "kind = zero").ok(),
        DelaySchedule::Cyclic { period } => writeln!(w, "kind = cyclic\nperiod = {period}").ok(),
        DelaySchedule::RandomBounded { tau, seed } => {
            writeln!(w, "kind = random_bounded\ntau = {tau}\nseed = {seed}").ok()
        }
    };
    writeln!(w, "\n[run]").ok();
    let seeds = c.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ");
    writeln!(w, "seeds = {seeds}").ok();
    writeln!(w, "max_iter = {}", c.max_iter).ok();
    writeln!(w, "gap_tol = {}", c.gap_tol).ok();
    writeln!(w, "record_every = {}", c.record_every).ok();
    match &c.reference {
        Some(ReferenceChoice::Compute) => writeln!(w, "reference = compute").ok(),
        Some(ReferenceChoice::File(f)) => writeln!(w, "reference = {f}").ok(),
        None => None,
    };
    writeln!(w, "timing = {}", c.timing).ok();
    out
}
