//! Builders for best approximation, augmented ℓ₁ minimization and network
//! utility maximization, plus deterministic small instances of each.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::functions::{ComponentKind, ConvexSet, SeparableComponent, Utility};
use crate::problem::CompositeProblem;
use crate::spaces::{dot, BlockLayout, BlockOperator, DenseMatrix};

/// Outcome of a build-time sanity certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct Certification {
    pub certified: bool,
    pub residual: f64,
}

/// Nearest point of `v` in `Ω₀ ∩ ⋂ⱼ Ωⱼ`.
#[derive(Clone, Debug, PartialEq)]
pub struct BestApproxSpec {
    pub v: Vec<f64>,
    pub omega0: ConvexSet,
    pub constraints: Vec<ConvexSet>,
}

impl BestApproxSpec {
    /// Cyclic projections from `v`; certified when every set is within `1e−6`
    /// of the final point.
    pub fn certify(&self) -> Certification {
        let mut x = self.v.clone();
        for _ in 0..10_000 {
            x = self.omega0.project(&x);
            for c in &self.constraints {
                x = c.project(&x);
            }
        }
        let residual = std::iter::once(&self.omega0)
            .chain(&self.constraints)
            .map(|s| s.distance(&x))
            .fold(0.0, f64::max);
        Certification {
            certified: residual <= 1e-6,
            residual,
        }
    }
}

/// One dual block per constraint with `𝒜ⱼ = I`. An empty constraint list is
/// replaced by the whole space so that the dual is nonempty.
pub fn build_best_approximation(spec: &BestApproxSpec) -> Result<CompositeProblem> {
    let n = spec.v.len();
    if n == 0 {
        return Err(Error::Build("empty point v".into()));
    }
    spec.omega0.validate().map_err(|e| Error::Build(format!("omega0: {e}")))?;
    if spec.omega0.dim() != n {
        return Err(Error::Build(format!("omega0 has dimension {}, v has {n}", spec.omega0.dim())));
    }
    for (j, c) in spec.constraints.iter().enumerate() {
        c.validate().map_err(|e| Error::Build(format!("constraint {j}: {e}")))?;
        if c.dim() != n {
            return Err(Error::Build(format!("constraint {j} has dimension {}, v has {n}", c.dim())));
        }
    }
    let sets = if spec.constraints.is_empty() {
        vec![ConvexSet::whole(n)?]
    } else {
        spec.constraints.clone()
    };
    let cert = spec.certify();
    if !cert.certified {
        log::warn!(
            "best approximation: intersection not certified (alternating projection residual {:e})",
            cert.residual
        );
    }
    let cols = BlockLayout::new(vec![n])?;
    let rows = BlockLayout::uniform(sets.len(), n)?;
    let op = BlockOperator::new(&rows, &cols, (0..sets.len()).map(|j| (j, 0, DenseMatrix::identity(n))))?;
    let f = vec![SeparableComponent::quadratic_plus_indicator(spec.v.clone(), spec.omega0.clone())?];
    let g = sets
        .into_iter()
        .map(SeparableComponent::indicator)
        .collect::<Result<Vec<_>>>()?;
    CompositeProblem::new(f, g, op)
}

/// `min λ‖x‖₁ + ½‖x‖²` subject to `Ax = b`.
#[derive(Clone, Debug, PartialEq)]
pub struct AugL1Spec {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub lambda: f64,
}

impl AugL1Spec {
    /// Least-squares residual `‖Ax̂ − b‖` through the smaller Gram system.
    pub fn certify(&self) -> Certification {
        let (m, n) = (self.a.rows(), self.a.cols());
        let x = if m <= n {
            let gram = gram(&self.a, false);
            solve_dense(gram, self.b.clone()).map(|z| self.a.tmul_vec(&z))
        } else {
            let gram = gram(&self.a, true);
            solve_dense(gram, self.a.tmul_vec(&self.b))
        };
        let residual = match x {
            Some(x) => {
                let r = self.a.mul_vec(&x);
                r.iter().zip(&self.b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
            }
            None => f64::INFINITY,
        };
        Certification {
            certified: residual <= 1e-8,
            residual,
        }
    }
}

/// `AAᵀ` (or `AᵀA` when `cols` is set).
fn gram(a: &DenseMatrix, cols: bool) -> Vec<Vec<f64>> {
    let t = a.transpose();
    let m = if cols { &t } else { a };
    let k = m.rows();
    (0..k)
        .map(|r| (0..k).map(|c| dot(m.row(r), m.row(c))).collect())
        .collect()
}

/// Gaussian elimination with partial pivoting; `None` if numerically singular.
fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    let scale = m.iter().flatten().fold(0.0_f64, |s, v| s.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))?;
        if m[piv][col].abs() <= 1e-13 * scale {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let factor = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= factor * m[col][c];
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    Some(x)
}

/// `n` scalar elastic-net blocks and `m` hyperplane blocks in `ℝⁿ`; `𝒜ⱼᵢ`
/// places coordinate `i` into block `j`.
pub fn build_augmented_l1(spec: &AugL1Spec) -> Result<CompositeProblem> {
    let (m, n) = (spec.a.rows(), spec.a.cols());
    if m == 0 || n == 0 {
        return Err(Error::Build("empty matrix".into()));
    }
    if spec.b.len() != m {
        return Err(Error::Build(format!("b has {} entries for {m} rows", spec.b.len())));
    }
    if !(spec.lambda > 0.0) {
        return Err(Error::Build(format!("lambda {} must be positive", spec.lambda)));
    }
    if let Some(r) = (0..m).find(|&r| spec.a.row(r).iter().all(|v| *v == 0.0)) {
        return Err(Error::Build(format!("row {r} of A is zero")));
    }
    let cert = spec.certify();
    if !cert.certified {
        log::warn!("augmented l1: Ax = b not certified consistent (residual {:e})", cert.residual);
    }
    let cols = BlockLayout::uniform(n, 1)?;
    let rows = BlockLayout::uniform(m, n)?;
    let selector = |i: usize| {
        let mut e = DenseMatrix::zeros(n, 1);
        e.set(i, 0, 1.0);
        e
    };
    let op = BlockOperator::new(
        &rows,
        &cols,
        (0..m).flat_map(|j| (0..n).map(move |i| (j, i, selector(i)))),
    )?;
    let f = (0..n)
        .map(|_| SeparableComponent::elastic_net(spec.lambda))
        .collect::<Result<Vec<_>>>()?;
    let g = (0..m)
        .map(|j| SeparableComponent::indicator(ConvexSet::hyperplane(spec.a.row(j).to_vec(), spec.b[j])?))
        .collect::<Result<Vec<_>>>()?;
    CompositeProblem::new(f, g, op)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NumSource {
    pub utility: Utility,
    pub cap: f64,
    /// Links on this source's route.
    pub links: Vec<usize>,
}

/// Rate allocation `max Σₛ uₛ(xₛ) − (λ/2)‖x‖²` under link capacities.
#[derive(Clone, Debug, PartialEq)]
pub struct NumSpec {
    pub sources: Vec<NumSource>,
    pub capacities: Vec<f64>,
    pub lambda: f64,
}

impl NumSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() || self.capacities.is_empty() {
            return Err(Error::Build("network needs at least one source and one link".into()));
        }
        for (l, c) in self.capacities.iter().enumerate() {
            if !(*c > 0.0) || !c.is_finite() {
                return Err(Error::Build(format!("link {l} capacity {c} must be positive")));
            }
        }
        for (s, src) in self.sources.iter().enumerate() {
            if src.links.is_empty() {
                return Err(Error::Build(format!("source {s} uses no link")));
            }
            if let Some(l) = src.links.iter().find(|&&l| l >= self.capacities.len()) {
                return Err(Error::Build(format!("source {s} routes over unknown link {l}")));
            }
            let mut seen = src.links.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != src.links.len() {
                return Err(Error::Build(format!("source {s} lists a link twice")));
            }
            if !(src.cap > 0.0) {
                return Err(Error::Build(format!("source {s} cap {} must be positive", src.cap)));
            }
        }
        Ok(())
    }

    /// `𝒮(ℓ)`
    pub fn sources_on_link(&self, link: usize) -> Vec<usize> {
        (0..self.sources.len())
            .filter(|&s| self.sources[s].links.contains(&link))
            .collect()
    }
}

/// Sources as scalar primal blocks, links as scalar halfspace blocks
/// `y_ℓ ↦ δ_{(−∞, c_ℓ]}`, `𝒜_{ℓs} = 1` on routes.
pub fn build_num(spec: &NumSpec) -> Result<CompositeProblem> {
    if !(spec.lambda > 0.0) {
        return Err(Error::UnsupportedComponent(format!(
            "regularization lambda = {} leaves the source objectives without strong convexity",
            spec.lambda
        )));
    }
    spec.validate()?;
    let cols = BlockLayout::uniform(spec.sources.len(), 1)?;
    let rows = BlockLayout::uniform(spec.capacities.len(), 1)?;
    let op = BlockOperator::new(
        &rows,
        &cols,
        spec.sources
            .iter()
            .enumerate()
            .flat_map(|(s, src)| src.links.iter().map(move |&l| (l, s, DenseMatrix::identity(1)))),
    )?;
    let f = spec
        .sources
        .iter()
        .map(|s| SeparableComponent::neg_utility(s.utility, s.cap, spec.lambda))
        .collect::<Result<Vec<_>>>()?;
    let g = spec
        .capacities
        .iter()
        .map(|&c| SeparableComponent::indicator(ConvexSet::halfspace(vec![1.0], c)?))
        .collect::<Result<Vec<_>>>()?;
    CompositeProblem::new(f, g, op)
}

/// Five-dimensional best approximation: box `[−1,1]⁵` and three halfspaces
/// with independent normals, `v` outside all of them.
pub fn desk_best_approx() -> BestApproxSpec {
    let hs = |a: Vec<f64>, c: f64| ConvexSet::halfspace(a, c).expect("valid halfspace");
    BestApproxSpec {
        v: vec![1.5, 0.8, -0.4, 1.2, 0.9],
        omega0: ConvexSet::boxed(vec![-1.0; 5], vec![1.0; 5]).expect("valid box"),
        constraints: vec![
            hs(vec![1.0, 1.0, 1.0, 1.0, 1.0], 1.5),
            hs(vec![1.0, -1.0, 0.0, 0.0, 0.0], 0.2),
            hs(vec![0.0, 0.0, 1.0, 2.0, 0.0], 0.5),
        ],
    }
}

/// `m × n` Gaussian matrix with unit rows, `b = Ax♮` for a 3-sparse `x♮`.
pub fn desk_aug_l1(m: usize, n: usize, seed: u64) -> AugL1Spec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<f64> = (0..m * n).map(|_| rng.sample(StandardNormal)).collect();
    for row in data.chunks_mut(n) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    }
    let a = DenseMatrix::new(m, n, data).expect("shape");
    let mut truth = vec![0.0; n];
    let mut placed = 0;
    while placed < 3.min(n) {
        let i = rng.random_range(0..n);
        if truth[i] == 0.0 {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            truth[i] = sign * rng.random_range(1.0..2.0);
            placed += 1;
        }
    }
    let b = a.mul_vec(&truth);
    AugL1Spec { a, b, lambda: 0.1 }
}

/// Four sources over three links with logarithmic utilities.
pub fn desk_num() -> NumSpec {
    let src = |links: Vec<usize>| NumSource {
        utility: Utility::Log,
        cap: 10.0,
        links,
    };
    NumSpec {
        sources: vec![src(vec![0]), src(vec![0, 1]), src(vec![1, 2]), src(vec![2])],
        capacities: vec![1.0, 2.0, 1.5],
        lambda: 0.1,
    }
}

/// A random problem mixing every component kind, for structural tests.
/// Blocks have dimension 1 or 2; roughly half of the operator grid is stored,
/// with every row and column touched.
pub fn random_problem(seed: u64, num_primal: usize, num_dual: usize) -> Result<CompositeProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let mut f = Vec::new();
    let mut col_dims = Vec::new();
    for _ in 0..num_primal {
        let kind = rng.random_range(0..4);
        let d = if kind < 2 { rng.random_range(1..=2) } else { 1 };
        let v: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        let comp = match kind {
            0 => SeparableComponent::quadratic_plus_indicator(v, ConvexSet::whole(d)?)?,
            1 => SeparableComponent::quadratic_plus_indicator(v, random_set(&mut rng, d, false)?)?,
            2 => SeparableComponent::elastic_net(rng.random_range(0.0..1.0))?,
            _ => SeparableComponent::neg_utility(
                if rng.random_bool(0.5) {
                    Utility::Log
                } else {
                    Utility::Quadratic {
                        q: rng.random_range(0.5..2.0),
                        p: rng.random_range(0.0..1.0),
                    }
                },
                rng.random_range(1.0..5.0),
                rng.random_range(0.5..2.0),
            )?,
        };
        col_dims.push(d);
        f.push(comp);
    }
    let mut g = Vec::new();
    let mut row_dims = Vec::new();
    for _ in 0..num_dual {
        let d = rng.random_range(1..=2);
        let comp = if rng.random_range(0..5) == 0 {
            if d == 1 {
                SeparableComponent::elastic_net(rng.random_range(0.0..1.0))?
            } else {
                SeparableComponent::quadratic_plus_indicator(
                    (0..d).map(|_| normal(&mut rng)).collect(),
                    ConvexSet::whole(d)?,
                )?
            }
        } else {
            SeparableComponent::indicator(random_set(&mut rng, d, true)?)?
        };
        row_dims.push(d);
        g.push(comp);
    }
    let cols = BlockLayout::new(col_dims.clone())?;
    let rows = BlockLayout::new(row_dims.clone())?;
    let mut blocks = Vec::new();
    for j in 0..num_dual {
        for i in 0..num_primal {
            let forced = i == j % num_primal || j == i % num_dual;
            if forced || rng.random_bool(0.5) {
                let data = (0..row_dims[j] * col_dims[i]).map(|_| normal(&mut rng)).collect();
                blocks.push((j, i, DenseMatrix::new(row_dims[j], col_dims[i], data)?));
            }
        }
    }
    let op = BlockOperator::new(&rows, &cols, blocks)?;
    CompositeProblem::new(f, g, op)
}

/// A random component of the given kind; multi-dimensional kinds get
/// dimension 1 to 3.
pub fn random_component(kind: ComponentKind, rng: &mut ChaCha8Rng) -> SeparableComponent {
    let d = rng.random_range(1..=3);
    let comp = match kind {
        ComponentKind::QuadraticPlusIndicator => {
            let v = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            random_set(rng, d, true).and_then(|s| SeparableComponent::quadratic_plus_indicator(v, s))
        }
        ComponentKind::ElasticNetScalar => SeparableComponent::elastic_net(rng.random_range(0.0..2.0)),
        ComponentKind::NegUtilityBoxed => {
            let utility = if rng.random_bool(0.5) {
                Utility::Log
            } else {
                Utility::Quadratic {
                    q: rng.random_range(-1.0..3.0),
                    p: rng.random_range(0.0..2.0),
                }
            };
            SeparableComponent::neg_utility(utility, rng.random_range(0.5..10.0), rng.random_range(0.05..2.0))
        }
        ComponentKind::IndicatorSet => random_set(rng, d, true).and_then(SeparableComponent::indicator),
    };
    comp.expect("random parameters are valid")
}

/// A random box, ball, halfspace and, with `allow_affine`, hyperplane or
/// whole space of dimension `d`.
pub fn random_set(rng: &mut ChaCha8Rng, d: usize, allow_affine: bool) -> Result<ConvexSet> {
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let vec: Vec<f64> = (0..d).map(|_| normal()).collect();
    let kinds = if allow_affine { 5 } else { 3 };
    match rng.random_range(0..kinds) {
        0 => {
            let lo: Vec<f64> = vec.iter().map(|v| v - 1.0).collect();
            let hi: Vec<f64> = vec.iter().map(|v| v + rng.random_range(0.0..2.0)).collect();
            ConvexSet::boxed(lo, hi)
        }
        1 => ConvexSet::ball(vec, rng.random_range(0.2..2.0)),
        2 => ConvexSet::halfspace(vec, rng.random_range(-1.0..1.0)),
        3 => ConvexSet::hyperplane(vec, rng.random_range(-1.0..1.0)),
        _ => ConvexSet::whole(d),
    }
}
