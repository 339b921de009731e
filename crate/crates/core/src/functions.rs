//! Separable convex components with values, conjugates, proximal maps and
//! conjugate gradients.
//!
//! Every algorithm step reduces to calls into this module: `conjugate_grad`
//! recovers primal blocks from dual information, `prox_conjugate` performs the
//! dual block update, and `pair_values` feeds the objective and gap
//! evaluations. Values outside an effective domain are `f64::INFINITY`.

use crate::error::{Error, Result};
use crate::spaces::{dist_sq, dot, norm};

/// Relative distance under which a point counts as inside a set when an
/// indicator is evaluated.
pub const MEMBERSHIP_TOL: f64 = 1e-11;

/// Relative residual under which a dual vector counts as lying in the span (or
/// cone) of a hyperplane/halfspace normal when a support function is evaluated.
pub const SPAN_TOL: f64 = 1e-8;

/// Absolute allowance added to the span residual test, absorbing rounding
/// noise of unit-scale arithmetic.
pub const SPAN_FLOOR: f64 = 1e-14;

/// Absolute norm under which a dual vector counts as zero for the support
/// function of the whole space.
pub const ZERO_TOL: f64 = 1e-10;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub enum ConvexSet {
    WholeSpace { dim: usize },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `{x : ⟨normal, x⟩ = offset}`
    Hyperplane { normal: Vec<f64>, offset: f64 },
    /// `{x : ⟨normal, x⟩ ≤ bound}`
    Halfspace { normal: Vec<f64>, bound: f64 },
    Ball { center: Vec<f64>, radius: f64 },
}

impl ConvexSet {
    pub fn whole(dim: usize) -> Result<Self> {
        let s = ConvexSet::WholeSpace { dim };
        s.validate()?;
        Ok(s)
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let s = ConvexSet::Box { lo, hi };
        s.validate()?;
        Ok(s)
    }

    pub fn hyperplane(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let s = ConvexSet::Hyperplane { normal, offset };
        s.validate()?;
        Ok(s)
    }

    pub fn halfspace(normal: Vec<f64>, bound: f64) -> Result<Self> {
        let s = ConvexSet::Halfspace { normal, bound };
        s.validate()?;
        Ok(s)
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let s = ConvexSet::Ball { center, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match self {
            ConvexSet::WholeSpace { dim } => {
                if *dim == 0 {
                    return bad("whole space of dimension 0".into());
                }
            }
            ConvexSet::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return bad(format!("box bounds of lengths {} and {}", lo.len(), hi.len()));
                }
                if let Some(k) = (0..lo.len()).find(|&k| !(lo[k] <= hi[k]) || lo[k].is_nan()) {
                    return bad(format!("box coordinate {k}: lo {} > hi {}", lo[k], hi[k]));
                }
            }
            ConvexSet::Hyperplane { normal, offset: c } | ConvexSet::Halfspace { normal, bound: c } => {
                if normal.is_empty() || norm(normal) == 0.0 {
                    return bad("zero normal vector".into());
                }
                if !c.is_finite() || normal.iter().any(|v| !v.is_finite()) {
                    return bad("non-finite normal or offset".into());
                }
            }
            ConvexSet::Ball { center, radius } => {
                if center.is_empty() {
                    return bad("ball of dimension 0".into());
                }
                if !(*radius > 0.0) || !radius.is_finite() {
                    return bad(format!("ball radius {radius} must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::WholeSpace { dim } => *dim,
            ConvexSet::Box { lo, .. } => lo.len(),
            ConvexSet::Hyperplane { normal, .. } | ConvexSet::Halfspace { normal, .. } => normal.len(),
            ConvexSet::Ball { center, .. } => center.len(),
        }
    }

    /// Euclidean projection.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ConvexSet::WholeSpace { .. } => x.to_vec(),
            ConvexSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| v.max(*l).min(*h))
                .collect(),
            ConvexSet::Hyperplane { normal, offset } => {
                let t = (dot(normal, x) - offset) / dot(normal, normal);
                x.iter().zip(normal).map(|(v, a)| v - t * a).collect()
            }
            ConvexSet::Halfspace { normal, bound } => {
                let excess = dot(normal, x) - bound;
                if excess <= 0.0 {
                    x.to_vec()
                } else {
                    let t = excess / dot(normal, normal);
                    x.iter().zip(normal).map(|(v, a)| v - t * a).collect()
                }
            }
            ConvexSet::Ball { center, radius } => {
                let d = dist_sq(x, center).sqrt();
                if d <= *radius {
                    x.to_vec()
                } else {
                    let s = radius / d;
                    x.iter().zip(center).map(|(v, c)| c + s * (v - c)).collect()
                }
            }
        }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        dist_sq(x, &self.project(x)).sqrt()
    }

    /// Membership up to `MEMBERSHIP_TOL · max(1, ‖x‖)`.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            ConvexSet::WholeSpace { .. } => true,
            _ => self.distance(x) <= MEMBERSHIP_TOL * norm(x).max(1.0),
        }
    }

    /// Support function `σ_S(u) = sup_{x ∈ S} ⟨u, x⟩`, the conjugate of the
    /// indicator.
    pub fn support(&self, u: &[f64]) -> f64 {
        match self {
            ConvexSet::WholeSpace { .. } => {
                if norm(u) <= ZERO_TOL {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ConvexSet::Box { lo, hi } => {
                let mut s = 0.0;
                for (v, (l, h)) in u.iter().zip(lo.iter().zip(hi)) {
                    if *v > 0.0 {
                        s += v * h;
                    } else if *v < 0.0 {
                        s += v * l;
                    }
                }
                s
            }
            ConvexSet::Hyperplane { normal, offset } => match span_coefficient(normal, u) {
                Some(t) => t * offset,
                None => f64::INFINITY,
            },
            ConvexSet::Halfspace { normal, bound } => match span_coefficient(normal, u) {
                Some(t) if t >= -(SPAN_TOL * norm(u) + SPAN_FLOOR) / norm(normal) => t * bound,
                _ => f64::INFINITY,
            },
            ConvexSet::Ball { center, radius } => dot(center, u) + radius * norm(u),
        }
    }
}

/// `t` with `u ≈ t·a`, if the residual is within `SPAN_TOL · ‖u‖`.
fn span_coefficient(a: &[f64], u: &[f64]) -> Option<f64> {
    let t = dot(a, u) / dot(a, a);
    let resid: f64 = u
        .iter()
        .zip(a)
        .map(|(v, ai)| (v - t * ai) * (v - t * ai))
        .sum::<f64>()
        .sqrt();
    (resid <= SPAN_TOL * norm(u) + SPAN_FLOOR).then_some(t)
}

/// Concave utility families for network rate allocation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Utility {
    /// `log(1 + x)`
    Log,
    /// `q·x − ½·p·x²` with `p ≥ 0`
    Quadratic { q: f64, p: f64 },
}

impl Utility {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Utility::Log => (1.0 + x).ln(),
            Utility::Quadratic { q, p } => q * x - 0.5 * p * x * x,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Utility::Log => 1.0 / (1.0 + x),
            Utility::Quadratic { q, p } => q - p * x,
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match *self {
            Utility::Log => -1.0 / ((1.0 + x) * (1.0 + x)),
            Utility::Quadratic { p, .. } => -p,
        }
    }
}

/// `argmax_{z ∈ [0, cap]} s·z + u(z) − ½κz²` by guarded Newton with bisection
/// fallback. The objective is strictly concave for `κ > 0`.
fn utility_argmax(utility: Utility, cap: f64, s: f64, kappa: f64) -> f64 {
    let deriv = |z: f64| s + utility.derivative(z) - kappa * z;
    if deriv(0.0) <= 0.0 {
        return 0.0;
    }
    if deriv(cap) >= 0.0 {
        return cap;
    }
    let (mut lo, mut hi) = (0.0_f64, cap);
    let mut z = 0.5 * (lo + hi);
    for _ in 0..NEWTON_MAX_ITER {
        let d = deriv(z);
        if d == 0.0 {
            return z;
        }
        if d > 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let curvature = utility.second_derivative(z) - kappa;
        let newton = z - d / curvature;
        let accepted = curvature < 0.0 && newton > lo && newton < hi;
        let next = if accepted { newton } else { 0.5 * (lo + hi) };
        // a short bisection step says nothing about the distance to the root
        let tol = NEWTON_TOL * z.abs().max(1.0);
        if (accepted && (next - z).abs() <= tol) || hi - lo <= f64::EPSILON * hi.max(1.0) {
            return next;
        }
        z = next;
    }
    z
}

fn soft_threshold(u: f64, t: f64) -> f64 {
    u.signum() * (u.abs() - t).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ComponentKind {
    QuadraticPlusIndicator,
    ElasticNetScalar,
    NegUtilityBoxed,
    IndicatorSet,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 4] = [
        ComponentKind::QuadraticPlusIndicator,
        ComponentKind::ElasticNetScalar,
        ComponentKind::NegUtilityBoxed,
        ComponentKind::IndicatorSet,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ComponentKind::QuadraticPlusIndicator => "quadratic_plus_indicator",
            ComponentKind::ElasticNetScalar => "elastic_net_scalar",
            ComponentKind::NegUtilityBoxed => "neg_utility_boxed",
            ComponentKind::IndicatorSet => "indicator_set",
        }
    }
}

/// A convex piece `f_i` or `g_j` of the composite objective.
#[derive(Clone, Debug, PartialEq)]
pub enum SeparableComponent {
    /// `½‖x − center‖² + δ_set(x)`; modulus 1.
    QuadraticPlusIndicator { center: Vec<f64>, set: ConvexSet },
    /// `λ|x| + ½x²` on a scalar block; modulus 1.
    ElasticNetScalar { lambda: f64 },
    /// `−u(x) + δ_[0,cap](x) + ½λx²` on a scalar block; modulus `λ`.
    NegUtilityBoxed {
        utility: Utility,
        cap: f64,
        lambda: f64,
    },
    /// `δ_set`; not strongly convex.
    Indicator(ConvexSet),
}

impl SeparableComponent {
    pub fn quadratic_plus_indicator(center: Vec<f64>, set: ConvexSet) -> Result<Self> {
        let c = SeparableComponent::QuadraticPlusIndicator { center, set };
        c.validate()?;
        Ok(c)
    }

    pub fn elastic_net(lambda: f64) -> Result<Self> {
        let c = SeparableComponent::ElasticNetScalar { lambda };
        c.validate()?;
        Ok(c)
    }

    pub fn neg_utility(utility: Utility, cap: f64, lambda: f64) -> Result<Self> {
        let c = SeparableComponent::NegUtilityBoxed {
            utility,
            cap,
            lambda,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn indicator(set: ConvexSet) -> Result<Self> {
        set.validate()?;
        Ok(SeparableComponent::Indicator(set))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SeparableComponent::QuadraticPlusIndicator { center, set } => {
                set.validate()?;
                if center.len() != set.dim() {
                    return Err(Error::Dimension(format!(
                        "center has {} entries, set has dimension {}",
                        center.len(),
                        set.dim()
                    )));
                }
            }
            SeparableComponent::ElasticNetScalar { lambda } => {
                if !(*lambda >= 0.0) || !lambda.is_finite() {
                    return Err(Error::InvalidArgument(format!("elastic net weight {lambda}")));
                }
            }
            SeparableComponent::NegUtilityBoxed {
                utility,
                cap,
                lambda,
            } => {
                if !(*cap > 0.0) || !cap.is_finite() {
                    return Err(Error::InvalidArgument(format!("rate cap {cap} must be positive")));
                }
                if !(*lambda >= 0.0) || !lambda.is_finite() {
                    return Err(Error::InvalidArgument(format!("regularization {lambda}")));
                }
                if let Utility::Quadratic { q, p } = utility {
                    if !(*p >= 0.0) || !q.is_finite() || !p.is_finite() {
                        return Err(Error::InvalidArgument(format!(
                            "quadratic utility needs finite q and p ≥ 0, got q={q} p={p}"
                        )));
                    }
                }
            }
            SeparableComponent::Indicator(set) => set.validate()?,
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            SeparableComponent::QuadraticPlusIndicator { set, .. } => set.dim(),
            SeparableComponent::ElasticNetScalar { .. } => 1,
            SeparableComponent::NegUtilityBoxed { .. } => 1,
            SeparableComponent::Indicator(set) => set.dim(),
        }
    }

    /// Strong convexity modulus `μ`; 0 when not strongly convex.
    pub fn strong_convexity(&self) -> f64 {
        match self {
            SeparableComponent::QuadraticPlusIndicator { .. } => 1.0,
            SeparableComponent::ElasticNetScalar { .. } => 1.0,
            SeparableComponent::NegUtilityBoxed { lambda, .. } => *lambda,
            SeparableComponent::Indicator(_) => 0.0,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            SeparableComponent::QuadraticPlusIndicator { center, set } => {
                if set.contains(x) {
                    0.5 * dist_sq(x, center)
                } else {
                    f64::INFINITY
                }
            }
            SeparableComponent::ElasticNetScalar { lambda } => {
                lambda * x[0].abs() + 0.5 * x[0] * x[0]
            }
            SeparableComponent::NegUtilityBoxed {
                utility,
                cap,
                lambda,
            } => {
                let z = x[0];
                let tol = MEMBERSHIP_TOL * cap.max(1.0);
                if z < -tol || z > cap + tol {
                    f64::INFINITY
                } else {
                    -utility.value(z) + 0.5 * lambda * z * z
                }
            }
            SeparableComponent::Indicator(set) => {
                if set.contains(x) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Fenchel conjugate `φ*(u) = sup_x ⟨x, u⟩ − φ(x)`.
    pub fn conjugate(&self, u: &[f64]) -> f64 {
        match self {
            SeparableComponent::QuadraticPlusIndicator { center, set } => {
                // ½‖v+u‖² − ½‖v‖² − ½ d²(v+u, Ω)
                let shifted: Vec<f64> = center.iter().zip(u).map(|(v, w)| v + w).collect();
                let d = set.distance(&shifted);
                0.5 * dot(&shifted, &shifted) - 0.5 * dot(center, center) - 0.5 * d * d
            }
            SeparableComponent::ElasticNetScalar { lambda } => {
                let t = (u[0].abs() - lambda).max(0.0);
                0.5 * t * t
            }
            SeparableComponent::NegUtilityBoxed {
                utility,
                cap,
                lambda,
            } => {
                if *lambda > 0.0 {
                    let z = utility_argmax(*utility, *cap, u[0], *lambda);
                    u[0] * z + utility.value(z) - 0.5 * lambda * z * z
                } else {
                    concave_sup_on_interval(*utility, *cap, u[0])
                }
            }
            SeparableComponent::Indicator(set) => set.support(u),
        }
    }

    /// `(φ(x), φ*(u))`
    pub fn pair_values(&self, x: &[f64], u: &[f64]) -> (f64, f64) {
        (self.value(x), self.conjugate(u))
    }

    /// `argmin_z φ(z) + ‖z − y‖²/(2α)`
    pub fn prox(&self, y: &[f64], alpha: f64) -> Vec<f64> {
        debug_assert!(alpha > 0.0);
        match self {
            SeparableComponent::QuadraticPlusIndicator { center, set } => {
                let w: Vec<f64> = center
                    .iter()
                    .zip(y)
                    .map(|(v, yy)| (alpha * v + yy) / (1.0 + alpha))
                    .collect();
                set.project(&w)
            }
            SeparableComponent::ElasticNetScalar { lambda } => {
                vec![soft_threshold(y[0], alpha * lambda) / (1.0 + alpha)]
            }
            SeparableComponent::NegUtilityBoxed {
                utility,
                cap,
                lambda,
            } => vec![utility_argmax(*utility, *cap, y[0] / alpha, lambda + 1.0 / alpha)],
            SeparableComponent::Indicator(set) => set.project(y),
        }
    }

    /// `prox_{αφ*}(y) = y − α·prox_{α⁻¹φ}(y/α)`
    pub fn prox_conjugate(&self, y: &[f64], alpha: f64) -> Vec<f64> {
        debug_assert!(alpha > 0.0);
        // closed forms keep the result exactly on the span of the normal, where
        // the support function is finite
        if let SeparableComponent::Indicator(set) = self {
            match set {
                ConvexSet::WholeSpace { dim } => return vec![0.0; *dim],
                ConvexSet::Hyperplane { normal, offset } => {
                    let t = (dot(normal, y) - alpha * offset) / dot(normal, normal);
                    return normal.iter().map(|a| t * a).collect();
                }
                ConvexSet::Halfspace { normal, bound } => {
                    let t = ((dot(normal, y) - alpha * bound) / dot(normal, normal)).max(0.0);
                    return normal.iter().map(|a| t * a).collect();
                }
                _ => {}
            }
        }
        let scaled: Vec<f64> = y.iter().map(|v| v / alpha).collect();
        let p = self.prox(&scaled, 1.0 / alpha);
        y.iter().zip(&p).map(|(v, pp)| v - alpha * pp).collect()
    }

    /// `∇φ*(u) = argmax_x ⟨x, u⟩ − φ(x)`; requires `μ > 0`.
    pub fn conjugate_grad(&self, u: &[f64]) -> Result<Vec<f64>> {
        if !(self.strong_convexity() > 0.0) {
            return Err(Error::UnsupportedComponent(format!(
                "conjugate gradient needs a strongly convex component, got {}",
                self.kind_name()
            )));
        }
        Ok(self.conjugate_grad_unchecked(u))
    }

    pub(crate) fn conjugate_grad_unchecked(&self, u: &[f64]) -> Vec<f64> {
        match self {
            SeparableComponent::QuadraticPlusIndicator { center, set } => {
                let shifted: Vec<f64> = center.iter().zip(u).map(|(v, w)| v + w).collect();
                set.project(&shifted)
            }
            SeparableComponent::ElasticNetScalar { lambda } => vec![soft_threshold(u[0], *lambda)],
            SeparableComponent::NegUtilityBoxed {
                utility,
                cap,
                lambda,
            } => vec![utility_argmax(*utility, *cap, u[0], *lambda)],
            SeparableComponent::Indicator(_) => unreachable!("indicators are not strongly convex"),
        }
    }

    pub fn kind(&self) -> ComponentKind {
        match self {
            SeparableComponent::QuadraticPlusIndicator { .. } => ComponentKind::QuadraticPlusIndicator,
            SeparableComponent::ElasticNetScalar { .. } => ComponentKind::ElasticNetScalar,
            SeparableComponent::NegUtilityBoxed { .. } => ComponentKind::NegUtilityBoxed,
            SeparableComponent::Indicator(_) => ComponentKind::IndicatorSet,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        self.kind().name()
    }
}

/// `sup_{z ∈ [0, cap]} s·z + u(z)` for the λ = 0 case (concave, maybe linear).
fn concave_sup_on_interval(utility: Utility, cap: f64, s: f64) -> f64 {
    let z = match utility {
        Utility::Quadratic { p, .. } if p == 0.0 => {
            if s + utility.derivative(0.0) > 0.0 {
                cap
            } else {
                0.0
            }
        }
        _ => utility_argmax(utility, cap, s, 0.0),
    };
    s * z + utility.value(z)
}

/// Euclidean projection onto a convex set.
pub fn project_set(set: &ConvexSet, x: &[f64]) -> Vec<f64> {
    set.project(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn elastic_net_at_origin() {
        let phi = SeparableComponent::elastic_net(1.0).unwrap();
        assert_eq!(phi.pair_values(&[0.0], &[0.0]), (0.0, 0.0));
    }

    #[test]
    fn halfspace_support_matches_grid_sup() {
        let phi = SeparableComponent::indicator(ConvexSet::halfspace(vec![1.0], 3.0).unwrap()).unwrap();
        assert!(close(phi.conjugate(&[2.0]), 6.0, 1e-12));
        assert_eq!(phi.conjugate(&[-1.0]), f64::INFINITY);
        // sup over the grid [-10, 3] of u·x
        for &u in &[0.0, 0.5, 2.0] {
            let grid = (0..=13_000)
                .map(|k| -10.0 + k as f64 * 1e-3)
                .map(|x| u * x)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(close(phi.conjugate(&[u]), grid, 1e-9));
        }
    }

    #[test]
    fn box_prox_clamps() {
        let phi = SeparableComponent::indicator(ConvexSet::boxed(vec![0.0], vec![1.0]).unwrap()).unwrap();
        for &a in &[0.1, 1.0, 7.0] {
            assert_eq!(phi.prox(&[2.0], a), vec![1.0]);
        }
    }

    #[test]
    fn elastic_net_prox_matches_golden_section() {
        let phi = SeparableComponent::elastic_net(1.0).unwrap();
        assert!(close(phi.prox(&[3.0], 1.0)[0], 1.0, 1e-15));
        // golden-section search on z ↦ |z| + z²/2 + (z − 3)²/2
        let obj = |z: f64| z.abs() + 0.5 * z * z + 0.5 * (z - 3.0) * (z - 3.0);
        let (mut a, mut b) = (-10.0_f64, 10.0_f64);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if obj(c) < obj(d) {
                b = d;
            } else {
                a = c;
            }
        }
        assert!(close(0.5 * (a + b), 1.0, 1e-7));
    }

    #[test]
    fn halfspace_prox_conjugate_is_positive_part() {
        let phi = SeparableComponent::indicator(ConvexSet::halfspace(vec![1.0], 3.0).unwrap()).unwrap();
        assert!(close(phi.prox_conjugate(&[5.0], 1.0)[0], 2.0, 1e-15));
        assert!(close(phi.prox_conjugate(&[1.0], 1.0)[0], 0.0, 1e-15));
        assert!(close(phi.prox_conjugate(&[5.0], 0.5)[0], 3.5, 1e-15));
    }

    #[test]
    fn whole_space_prox_conjugate_is_zero() {
        let phi = SeparableComponent::indicator(ConvexSet::whole(3).unwrap()).unwrap();
        let p = phi.prox_conjugate(&[1.0, -4.0, 2.5], 0.7);
        assert!(p.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn quadratic_conjugate_gradient_unconstrained() {
        let phi = SeparableComponent::quadratic_plus_indicator(vec![1.0, 2.0], ConvexSet::whole(2).unwrap())
            .unwrap();
        assert_eq!(phi.conjugate_grad(&[3.0, 4.0]).unwrap(), vec![4.0, 6.0]);
    }

    #[test]
    fn elastic_net_conjugate_gradient_matches_grid_argmax() {
        let phi = SeparableComponent::elastic_net(1.0).unwrap();
        assert_eq!(phi.conjugate_grad(&[-3.0]).unwrap(), vec![-2.0]);
        assert_eq!(phi.conjugate_grad(&[0.5]).unwrap(), vec![0.0]);
        for &u in &[-3.0, 0.5] {
            let mut best = (f64::NEG_INFINITY, 0.0);
            let mut x: f64 = -5.0;
            while x <= 5.0 {
                let v = u * x - (x.abs() + 0.5 * x * x);
                if v > best.0 {
                    best = (v, x);
                }
                x += 1e-6;
            }
            assert!(close(phi.conjugate_grad(&[u]).unwrap()[0], best.1, 2e-6));
        }
    }

    #[test]
    fn indicator_conjugate_gradient_unsupported() {
        let phi = SeparableComponent::indicator(ConvexSet::whole(1).unwrap()).unwrap();
        assert!(matches!(
            phi.conjugate_grad(&[1.0]),
            Err(Error::UnsupportedComponent(_))
        ));
        let zero = SeparableComponent::neg_utility(Utility::Log, 1.0, 0.0).unwrap();
        assert!(zero.conjugate_grad(&[1.0]).is_err());
    }

    #[test]
    fn log_utility_argmax_matches_quadratic_formula() {
        // −1/(1+x) + λx + w = 0  ⇔  λx² + (λ + w)x + (w − 1) = 0
        let lambda = 0.1;
        let phi = SeparableComponent::neg_utility(Utility::Log, 10.0, lambda).unwrap();
        for &w in &[-0.5, 0.0, 0.3, 0.9, 1.5] {
            let b = lambda + w;
            let root = (-b + (b * b - 4.0 * lambda * (w - 1.0)).sqrt()) / (2.0 * lambda);
            let expect = root.clamp(0.0, 10.0);
            let got = phi.conjugate_grad(&[-w]).unwrap()[0];
            assert!(close(got, expect, 1e-12), "w={w}: {got} vs {expect}");
        }
    }

    #[test]
    fn projections() {
        let h = ConvexSet::hyperplane(vec![1.0, 0.0], 0.0).unwrap();
        assert_eq!(h.project(&[2.0, 3.0]), vec![0.0, 3.0]);
        let hs = ConvexSet::halfspace(vec![1.0, 1.0], 2.0).unwrap();
        assert_eq!(hs.project(&[0.5, 0.25]), vec![0.5, 0.25]);
        let b = ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        let p = b.project(&[3.0, 4.0]);
        assert!(close(p[0], 0.6, 1e-15) && close(p[1], 0.8, 1e-15));
    }

    #[test]
    fn invalid_sets_rejected() {
        assert!(ConvexSet::boxed(vec![1.0], vec![0.0]).is_err());
        assert!(ConvexSet::hyperplane(vec![0.0, 0.0], 1.0).is_err());
        assert!(ConvexSet::halfspace(vec![], 1.0).is_err());
        assert!(ConvexSet::ball(vec![0.0], 0.0).is_err());
        assert!(ConvexSet::whole(0).is_err());
    }
}
