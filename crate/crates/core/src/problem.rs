//! The primal/dual problem pair, gap evaluation, and step-size theory.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::functions::SeparableComponent;
use crate::spaces::{BlockLayout, BlockOperator, BlockVector};

/// Gap accepted for a reference solution at load time.
pub const REFERENCE_GAP_TOL: f64 = 1e-8;

/// `min_x Σᵢ fᵢ(xᵢ) + Σⱼ gⱼ(𝒜ⱼx)` together with its dual
/// `D(y) = Σᵢ fᵢ*(−(𝒜*y)ᵢ) + Σⱼ gⱼ*(yⱼ)`.
#[derive(Clone, Debug)]
pub struct CompositeProblem {
    f: Vec<SeparableComponent>,
    g: Vec<SeparableComponent>,
    op: BlockOperator,
}

impl CompositeProblem {
    pub fn new(
        f: Vec<SeparableComponent>,
        g: Vec<SeparableComponent>,
        op: BlockOperator,
    ) -> Result<Self> {
        if f.len() != op.col_layout().num_blocks() || g.len() != op.row_layout().num_blocks() {
            return Err(Error::Dimension(format!(
                "{} f components and {} g components for a {}×{} block operator",
                f.len(),
                g.len(),
                op.row_layout().num_blocks(),
                op.col_layout().num_blocks()
            )));
        }
        for (i, fi) in f.iter().enumerate() {
            fi.validate()?;
            if fi.dim() != op.col_layout().block_dim(i) {
                return Err(Error::Dimension(format!(
                    "f[{i}] has dimension {}, primal block has {}",
                    fi.dim(),
                    op.col_layout().block_dim(i)
                )));
            }
            if !(fi.strong_convexity() > 0.0) {
                return Err(Error::UnsupportedComponent(format!(
                    "f[{i}] ({}) is not strongly convex",
                    fi.kind_name()
                )));
            }
        }
        for (j, gj) in g.iter().enumerate() {
            gj.validate()?;
            if gj.dim() != op.row_layout().block_dim(j) {
                return Err(Error::Dimension(format!(
                    "g[{j}] has dimension {}, dual block has {}",
                    gj.dim(),
                    op.row_layout().block_dim(j)
                )));
            }
        }
        Ok(CompositeProblem { f, g, op })
    }

    pub fn f_components(&self) -> &[SeparableComponent] {
        &self.f
    }

    pub fn g_components(&self) -> &[SeparableComponent] {
        &self.g
    }

    pub fn operator(&self) -> &BlockOperator {
        &self.op
    }

    pub fn primal_layout(&self) -> &Arc<BlockLayout> {
        self.op.col_layout()
    }

    pub fn dual_layout(&self) -> &Arc<BlockLayout> {
        self.op.row_layout()
    }

    /// `|I|`
    pub fn num_primal_blocks(&self) -> usize {
        self.f.len()
    }

    /// `|J|`
    pub fn num_dual_blocks(&self) -> usize {
        self.g.len()
    }

    /// `xᵢ = ∇fᵢ*(−uᵢ)` for a given block of `𝒜*y`.
    pub(crate) fn primal_block(&self, i: usize, u: &[f64]) -> Vec<f64> {
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        self.f[i].conjugate_grad_unchecked(&neg)
    }

    /// `x = ∇f*(−𝒜*y)`
    pub fn primal_from_dual(&self, y: &BlockVector) -> Result<BlockVector> {
        let u = self.op.adjoint_apply(y)?;
        let mut x = BlockVector::zeros(self.primal_layout());
        for i in 0..self.f.len() {
            x.set_block(i, &self.primal_block(i, u.block(i)));
        }
        Ok(x)
    }

    pub fn dual_value(&self, y: &BlockVector) -> Result<f64> {
        let u = self.op.adjoint_apply(y)?;
        let mut total = 0.0;
        for (i, fi) in self.f.iter().enumerate() {
            let neg: Vec<f64> = u.block(i).iter().map(|v| -v).collect();
            total += fi.conjugate(&neg);
        }
        for (j, gj) in self.g.iter().enumerate() {
            total += gj.conjugate(y.block(j));
        }
        Ok(total)
    }

    pub fn primal_value(&self, x: &BlockVector) -> Result<f64> {
        let ax = self.op.apply(x)?;
        let mut total = 0.0;
        for (i, fi) in self.f.iter().enumerate() {
            total += fi.value(x.block(i));
        }
        for (j, gj) in self.g.iter().enumerate() {
            total += gj.value(ax.block(j));
        }
        Ok(total)
    }

    /// `F(x) + D(y)`
    pub fn duality_gap(&self, x: &BlockVector, y: &BlockVector) -> Result<f64> {
        Ok(self.primal_value(x)? + self.dual_value(y)?)
    }

    /// `y⁰`: zero, except blocks where 0 lies outside `dom gⱼ*`, which fall back
    /// to `prox_{gⱼ*}(0)`.
    pub fn initial_dual_point(&self) -> BlockVector {
        let mut y = BlockVector::zeros(self.dual_layout());
        for (j, gj) in self.g.iter().enumerate() {
            let zero = vec![0.0; gj.dim()];
            if !gj.conjugate(&zero).is_finite() {
                y.set_block(j, &gj.prox_conjugate(&zero, 1.0));
            }
        }
        y
    }

    /// `∇hᵢ(y)` with blocks `∇ⱼhᵢ(y) = −𝒜ⱼᵢ∇fᵢ*(−(𝒜*y)ᵢ)`.
    pub fn grad_h(&self, i: usize, y: &BlockVector) -> Result<BlockVector> {
        if i >= self.f.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.f.len(),
            });
        }
        let mut u = vec![0.0; self.primal_layout().block_dim(i)];
        self.op.col_adjoint_into(i, y, &mut u);
        let xi = self.primal_block(i, &u);
        let mut out = BlockVector::zeros(self.dual_layout());
        let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
        self.op.col_scatter_add(i, &neg, &mut out);
        Ok(out)
    }

    /// `ℓᵢ = √((Σⱼ‖𝒜ⱼᵢ‖²/μᵢ²)·|J|·maxⱼ‖𝒜ⱼᵢ‖²)`
    pub fn lipschitz_constants(&self) -> Result<Vec<f64>> {
        let nj = self.g.len() as f64;
        (0..self.f.len())
            .map(|i| {
                let mu = self.f[i].strong_convexity();
                if !(mu > 0.0) {
                    return Err(Error::UnsupportedComponent(format!("f[{i}] has modulus {mu}")));
                }
                let (sum, max) = self
                    .op
                    .col_norms(i)
                    .fold((0.0_f64, 0.0_f64), |(s, m), n| (s + n * n, m.max(n * n)));
                Ok((sum / (mu * mu) * nj * max).sqrt())
            })
            .collect()
    }

    /// `ΣᵢΣⱼ‖𝒜ⱼᵢ‖²/μᵢ²`, the factor in the primal error bound.
    pub fn primal_bound_factor(&self) -> f64 {
        (0..self.f.len())
            .map(|i| {
                let mu = self.f[i].strong_convexity();
                self.op.col_norms(i).map(|n| n * n).sum::<f64>() / (mu * mu)
            })
            .sum()
    }

    /// `‖𝒜‖² / minᵢ μᵢ`, a Lipschitz constant of the full dual gradient.
    pub fn dual_smoothness(&self) -> f64 {
        let mu_min = self
            .f
            .iter()
            .map(|f| f.strong_convexity())
            .fold(f64::INFINITY, f64::min);
        let n = self.op.operator_norm();
        n * n / mu_min
    }
}

/// Constants of the convergence theory for a given maximum delay `τ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemConstants {
    pub ell: Vec<f64>,
    pub ell_max: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub tau: u64,
    pub beta: f64,
    pub num_primal_blocks: usize,
    pub num_dual_blocks: usize,
    pub primal_bound_factor: f64,
}

impl ProblemConstants {
    pub fn new(p: &CompositeProblem, tau: u64) -> Result<Self> {
        let ell = p.lipschitz_constants()?;
        let ni = p.num_primal_blocks();
        let nj = p.num_dual_blocks();
        let ell_max = ell.iter().copied().fold(0.0, f64::max);
        let sum: f64 = ell.iter().sum();
        Ok(ProblemConstants {
            eta1: (nj as f64 - 1.0) * sum / nj as f64,
            eta2: ell_max * ni as f64 * (tau as f64 + 1.0) / 2.0,
            beta: 1.0 - 1.0 / nj as f64,
            ell,
            ell_max,
            tau,
            num_primal_blocks: ni,
            num_dual_blocks: nj,
            primal_bound_factor: p.primal_bound_factor(),
        })
    }

    /// `γ = (η₂/|J|)·σ·(1−β)/8`
    pub fn gamma(&self, sigma: f64) -> f64 {
        self.eta2 / self.num_dual_blocks as f64 * sigma * (1.0 - self.beta) / 8.0
    }

    pub fn z0(&self, sigma: f64) -> f64 {
        solve_z0(self.tau, self.beta, self.gamma(sigma))
    }

    /// Largest admissible constant step and the contraction factor at it.
    pub fn max_stepsize_and_rate(&self, sigma: f64) -> (f64, f64) {
        let nj = self.num_dual_blocks as f64;
        let mut alpha = (self.eta2 / (8.0 * nj)).min(1.0 / (4.0 * (self.eta1 + self.eta2)));
        let z0 = self.z0(sigma);
        if z0.is_finite() {
            alpha = alpha.min(z0 / sigma);
        }
        (alpha, self.rate(alpha, sigma))
    }

    /// `1 − ασ/(|J|(1+ασ))`
    pub fn rate(&self, alpha: f64, sigma: f64) -> f64 {
        contraction_rate(alpha, sigma, self.num_dual_blocks)
    }
}

pub fn contraction_rate(alpha: f64, sigma: f64, num_dual_blocks: usize) -> f64 {
    let s = alpha * sigma;
    1.0 - s / (num_dual_blocks as f64 * (1.0 + s))
}

/// Positive root of `((1+z)/(1+βz))^τ = 1 + γ/(1+z)`; `+∞` when `τ = 0`.
pub fn solve_z0(tau: u64, beta: f64, gamma: f64) -> f64 {
    if tau == 0 {
        return f64::INFINITY;
    }
    if !(gamma > 0.0) {
        return 0.0;
    }
    let resid = |z: f64| ((1.0 + z) / (1.0 + beta * z)).powf(tau as f64) - 1.0 - gamma / (1.0 + z);
    let mut lo = 1e-12;
    if resid(lo) >= 0.0 {
        return lo;
    }
    let mut hi = 1.0;
    while resid(hi) <= 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    // bisect down to adjacent floats, then keep the endpoint nearer the root
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if resid(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if resid(lo).abs() <= resid(hi).abs() {
        lo
    } else {
        hi
    }
}

/// A high-accuracy primal/dual pair used as the stand-in for the solution set.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSolution {
    pub x_star: BlockVector,
    pub y_star: BlockVector,
    pub d_star: f64,
    pub provenance: String,
}

impl ReferenceSolution {
    /// Long-run dual proximal gradient at step `1/L`, stopping early once the
    /// iterate stops moving.
    pub fn compute(p: &CompositeProblem, max_iter: u64) -> Result<Self> {
        let l = p.dual_smoothness();
        if !(l > 0.0) {
            return Err(Error::InvalidArgument("operator is zero".into()));
        }
        let alpha = 1.0 / l;
        let mut y = p.initial_dual_point();
        let mut iters = 0;
        while iters < max_iter {
            let next = crate::algorithms::dual_pg_step(p, &y, alpha)?;
            iters += 1;
            let scale = next.as_slice().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            let moved = next.max_abs_diff(&y);
            y = next;
            if moved <= 1e-15 * scale {
                break;
            }
        }
        let x = p.primal_from_dual(&y)?;
        let d_star = p.dual_value(&y)?;
        log::debug!("reference solve stopped after {iters} iterations, D* = {d_star:e}");
        Ok(ReferenceSolution {
            x_star: x,
            y_star: y,
            d_star,
            provenance: format!("dual proximal gradient, alpha = 1/L = {alpha:e}, {iters} iterations"),
        })
    }

    /// Returns the duality gap, or an error if it exceeds the load tolerance.
    pub fn validate(&self, p: &CompositeProblem) -> Result<f64> {
        let gap = p.duality_gap(&self.x_star, &self.y_star)?;
        if !(gap.abs() <= REFERENCE_GAP_TOL) {
            return Err(Error::InvalidArgument(format!(
                "reference duality gap {gap:e} exceeds {REFERENCE_GAP_TOL:e}"
            )));
        }
        Ok(gap)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for line in self.provenance.lines() {
            let _ = writeln!(s, "# {line}");
        }
        let _ = writeln!(s, "D_star {:.16e}", self.d_star);
        for (tag, v) in [("x", &self.x_star), ("y", &self.y_star)] {
            for (q, block) in v.blocks().enumerate() {
                let _ = write!(s, "{tag} {q}");
                for val in block {
                    let _ = write!(s, " {val:.16e}");
                }
                s.push('\n');
            }
        }
        s
    }

    /// Parses the text form against the layouts of `p` and checks the gap.
    pub fn from_text(text: &str, p: &CompositeProblem, origin: &str) -> Result<Self> {
        let fmt = |m: String| Error::Format {
            path: origin.to_string(),
            message: m,
        };
        let mut provenance = Vec::new();
        let mut d_star = None;
        let mut x_blocks: Vec<Option<Vec<f64>>> = vec![None; p.num_primal_blocks()];
        let mut y_blocks: Vec<Option<Vec<f64>>> = vec![None; p.num_dual_blocks()];
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                provenance.push(c.trim().to_string());
                continue;
            }
            let mut toks = line.split_whitespace();
            let tag = toks.next().unwrap_or_default();
            let parse = |t: &str| {
                t.parse::<f64>()
                    .map_err(|_| fmt(format!("line {}: bad number {t:?}", n + 1)))
            };
            match tag {
                "D_star" => {
                    let v = toks.next().ok_or_else(|| fmt(format!("line {}: missing value", n + 1)))?;
                    d_star = Some(parse(v)?);
                }
                "x" | "y" => {
                    let slots = if tag == "x" { &mut x_blocks } else { &mut y_blocks };
                    let q: usize = toks
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| fmt(format!("line {}: missing block index", n + 1)))?;
                    if q >= slots.len() {
                        return Err(fmt(format!("line {}: block {q} out of range", n + 1)));
                    }
                    let vals = toks.map(parse).collect::<Result<Vec<f64>>>()?;
                    slots[q] = Some(vals);
                }
                other => return Err(fmt(format!("line {}: unknown record {other:?}", n + 1))),
            }
        }
        let collect = |slots: Vec<Option<Vec<f64>>>, tag: &str| {
            slots
                .into_iter()
                .enumerate()
                .map(|(q, b)| b.ok_or_else(|| fmt(format!("missing {tag} block {q}"))))
                .collect::<Result<Vec<_>>>()
        };
        let x_star = BlockVector::from_blocks(p.primal_layout(), &collect(x_blocks, "x")?)?;
        let y_star = BlockVector::from_blocks(p.dual_layout(), &collect(y_blocks, "y")?)?;
        let r = ReferenceSolution {
            x_star,
            y_star,
            d_star: d_star.ok_or_else(|| fmt("missing D_star".into()))?,
            provenance: provenance.join("\n"),
        };
        r.validate(p)?;
        Ok(r)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path, p: &CompositeProblem) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, p, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::ConvexSet;
    use crate::spaces::DenseMatrix;

    fn scalar_problem(f: SeparableComponent, g: SeparableComponent, a: f64) -> CompositeProblem {
        let l = BlockLayout::new(vec![1]).unwrap();
        let op = BlockOperator::new(&l, &l, [(0, 0, DenseMatrix::from_rows(&[vec![a]]).unwrap())]).unwrap();
        CompositeProblem::new(vec![f], vec![g], op).unwrap()
    }

    #[test]
    fn one_dimensional_dual_value() {
        let f = SeparableComponent::quadratic_plus_indicator(vec![1.0], ConvexSet::whole(1).unwrap()).unwrap();
        let g = SeparableComponent::indicator(ConvexSet::boxed(vec![0.0], vec![0.0]).unwrap()).unwrap();
        let p = scalar_problem(f, g, 1.0);
        let y = BlockVector::from_flat(p.dual_layout(), vec![1.0]).unwrap();
        assert!((p.dual_value(&y).unwrap() + 0.5).abs() < 1e-15);
        // D(y) = ½(1−y)² − ½ at a few more points
        for &t in &[-2.0, 0.0, 0.3, 4.0] {
            let y = BlockVector::from_flat(p.dual_layout(), vec![t]).unwrap();
            let expect = 0.5 * (1.0 - t) * (1.0 - t) - 0.5;
            assert!((p.dual_value(&y).unwrap() - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn lipschitz_direct_substitution() {
        let f = SeparableComponent::neg_utility(crate::Utility::Log, 1.0, 2.0).unwrap();
        let g = SeparableComponent::indicator(ConvexSet::whole(1).unwrap()).unwrap();
        let p = scalar_problem(f, g, 1.0);
        assert!((p.lipschitz_constants().unwrap()[0] - 0.5).abs() < 1e-15);

        let cols = BlockLayout::new(vec![1]).unwrap();
        let rows = BlockLayout::new(vec![1, 1]).unwrap();
        let op = BlockOperator::new(
            &rows,
            &cols,
            [
                (0, 0, DenseMatrix::from_rows(&[vec![3.0]]).unwrap()),
                (1, 0, DenseMatrix::from_rows(&[vec![-4.0]]).unwrap()),
            ],
        )
        .unwrap();
        let p = CompositeProblem::new(
            vec![SeparableComponent::elastic_net(1.0).unwrap()],
            vec![
                SeparableComponent::indicator(ConvexSet::whole(1).unwrap()).unwrap(),
                SeparableComponent::indicator(ConvexSet::whole(1).unwrap()).unwrap(),
            ],
            op,
        )
        .unwrap();
        assert!((p.lipschitz_constants().unwrap()[0] - 800f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn z0_cases() {
        assert_eq!(solve_z0(0, 0.5, 1.0), f64::INFINITY);
        assert!((solve_z0(1, 0.5, 1.0) - 2f64.sqrt()).abs() < 1e-10);
        let zs: Vec<f64> = [1, 2, 4, 8].iter().map(|&t| solve_z0(t, 0.5, 1.0)).collect();
        assert!(zs.windows(2).all(|w| w[1] < w[0]), "{zs:?}");
        for &(t, b, g) in &[(1, 0.0, 0.01), (3, 0.9, 5.0), (50, 0.99, 1e-3)] {
            let z = solve_z0(t, b, g);
            let r = ((1.0 + z) / (1.0 + b * z)).powf(t as f64) - 1.0 - g / (1.0 + z);
            assert!(z > 0.0 && r.abs() <= 1e-12, "τ={t}: z={z} r={r}");
        }
    }

    #[test]
    fn stepsize_and_rate_substitution() {
        let c = ProblemConstants {
            ell: vec![1.0],
            ell_max: 1.0,
            eta1: 1.0,
            eta2: 1.0,
            tau: 0,
            beta: 0.0,
            num_primal_blocks: 1,
            num_dual_blocks: 1,
            primal_bound_factor: 1.0,
        };
        let (a, r) = c.max_stepsize_and_rate(1.0);
        assert_eq!(a, 0.125);
        assert!((r - 8.0 / 9.0).abs() < 1e-15);
        let grid: Vec<f64> = (1..50).map(|k| c.rate(k as f64 * 0.01, 1.0)).collect();
        assert!(grid.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rejects_non_strongly_convex_f() {
        let l = BlockLayout::new(vec![1]).unwrap();
        let op = BlockOperator::new(&l, &l, [(0, 0, DenseMatrix::identity(1))]).unwrap();
        let whole = || SeparableComponent::indicator(ConvexSet::whole(1).unwrap()).unwrap();
        assert!(matches!(
            CompositeProblem::new(vec![whole()], vec![whole()], op),
            Err(Error::UnsupportedComponent(_))
        ));
    }
}
