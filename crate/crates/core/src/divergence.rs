//! Decomposable Bregman divergences.
//!
//! A decomposable divergence is generated by `F(x) = Σ f_i(x_i)` and evaluates
//! as a sum of univariate divergences `D_F(x‖y) = Σ D_{f_i}(x_i‖y_i)`. Each
//! coordinate carries its own [`CoordinateRule`], and the product of the rule
//! domains is the axis-aligned box on which the divergence is defined.
//!
//! All logarithms are natural. Rescaling a divergence by a positive constant
//! does not change neighbour order, so this matches base-2 formulations for
//! search purposes.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Minimum distance a validated coordinate must keep from a finite domain edge.
pub const DOMAIN_MARGIN: f64 = 1e-12;

/// Allowed deviation of a row sum from 1 for simplex-valued (`kl`) data.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Below this `|a/b - 1|` the GKL and IS kernels switch to a power series to
/// avoid cancellation.
const SERIES_CUTOFF: f64 = 0.01;

/// An open interval `(lo, hi)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };
    pub const POSITIVE: Interval = Interval {
        lo: 0.0,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::Config(format!("empty interval ({lo}, {hi})")));
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn contains(&self, v: f64) -> bool {
        self.lo < v && v < self.hi
    }

    /// `v` lies inside with at least `margin` to spare on every finite side.
    #[inline]
    pub fn contains_with_margin(&self, v: f64, margin: f64) -> bool {
        self.contains(v) && v - self.lo >= margin && self.hi - v >= margin
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo < hi).then_some(Interval { lo, hi })
    }

    /// Clamps `v` into the interior, keeping [`DOMAIN_MARGIN`] from finite ends.
    #[inline]
    pub fn clamp_interior(&self, v: f64) -> f64 {
        let lo = self.lo + DOMAIN_MARGIN;
        let hi = self.hi - DOMAIN_MARGIN;
        if v < lo {
            lo
        } else if v > hi {
            hi
        } else {
            v
        }
    }
}

/// Which argument the query occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Direction {
    /// `D(q‖x)`: divergence measured from the query.
    #[default]
    Primal,
    /// `D(x‖q)`: divergence measured to the query.
    Dual,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "primal" => Ok(Direction::Primal),
            "dual" => Ok(Direction::Dual),
            other => Err(Error::Config(format!(
                "unknown direction '{other}' (expected primal or dual)"
            ))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Primal => "primal",
            Direction::Dual => "dual",
        })
    }
}

/// The univariate divergence applied along one coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum RuleKind {
    SquaredEuclidean,
    GeneralizedKl,
    ItakuraSaito,
    BhattacharyyaLike,
    /// `weight * left + (1 - weight) * right`.
    Hybrid {
        weight: f64,
        left: Box<CoordinateRule>,
        right: Box<CoordinateRule>,
    },
}

/// A univariate divergence together with its open domain.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateRule {
    kind: RuleKind,
    domain: Interval,
}

impl CoordinateRule {
    pub fn squared_euclidean() -> Self {
        Self {
            kind: RuleKind::SquaredEuclidean,
            domain: Interval::REAL_LINE,
        }
    }

    pub fn generalized_kl() -> Self {
        Self {
            kind: RuleKind::GeneralizedKl,
            domain: Interval::POSITIVE,
        }
    }

    pub fn itakura_saito() -> Self {
        Self {
            kind: RuleKind::ItakuraSaito,
            domain: Interval::POSITIVE,
        }
    }

    pub fn bhattacharyya_like() -> Self {
        Self {
            kind: RuleKind::BhattacharyyaLike,
            domain: Interval::POSITIVE,
        }
    }

    /// Convex combination of two rules on the intersection of their domains.
    pub fn hybrid(weight: f64, left: CoordinateRule, right: CoordinateRule) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Config(format!(
                "hybrid weight {weight} is outside [0, 1]"
            )));
        }
        let domain = left.domain.intersect(&right.domain).ok_or_else(|| {
            Error::Config("hybrid rule has an empty domain intersection".into())
        })?;
        Ok(Self {
            kind: RuleKind::Hybrid {
                weight,
                left: Box::new(left),
                right: Box::new(right),
            },
            domain,
        })
    }

    /// Parses a base rule name: `sqeuc`, `gkl`, `is` or `bhat`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "sqeuc" => Ok(Self::squared_euclidean()),
            "gkl" => Ok(Self::generalized_kl()),
            "is" => Ok(Self::itakura_saito()),
            "bhat" => Ok(Self::bhattacharyya_like()),
            other => Err(Error::Config(format!("unknown divergence '{other}'"))),
        }
    }

    pub fn kind(&self) -> &RuleKind {
        &self.kind
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    /// `D_f(a‖b)`, checking that both arguments lie inside the domain.
    pub fn coord_div(&self, a: f64, b: f64) -> Result<f64> {
        for v in [a, b] {
            if !self.domain.contains(v) {
                return Err(Error::Domain {
                    dim: 0,
                    value: v,
                    lo: self.domain.lo,
                    hi: self.domain.hi,
                });
            }
        }
        Ok(self.eval(a, b))
    }

    /// `D_f(a‖b)` without domain checks.
    #[inline]
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        match &self.kind {
            RuleKind::SquaredEuclidean => sq_euclidean(a, b),
            RuleKind::GeneralizedKl => gen_kl(a, b),
            RuleKind::ItakuraSaito => itakura_saito(a, b),
            RuleKind::BhattacharyyaLike => bhattacharyya_like(a, b),
            RuleKind::Hybrid {
                weight,
                left,
                right,
            } => weight * left.eval(a, b) + (1.0 - weight) * right.eval(a, b),
        }
    }

    fn label(&self) -> String {
        match &self.kind {
            RuleKind::SquaredEuclidean => "sqeuc".into(),
            RuleKind::GeneralizedKl => "gkl".into(),
            RuleKind::ItakuraSaito => "is".into(),
            RuleKind::BhattacharyyaLike => "bhat".into(),
            RuleKind::Hybrid {
                weight,
                left,
                right,
            } => format!("hybrid:{}:{}:{}", left.label(), right.label(), weight),
        }
    }
}

#[inline]
fn sq_euclidean(a: f64, b: f64) -> f64 {
    let diff = a - b;
    diff * diff
}

// (1+t)ln(1+t) - t = t^2 * Σ_m (-1)^m t^m / ((m+2)(m+1))
const GKL_SERIES: [f64; 8] = {
    let mut c = [0.0; 8];
    let mut m = 0;
    while m < 8 {
        let mag = 1.0 / (((m + 2) * (m + 1)) as f64);
        c[m] = if m % 2 == 0 { mag } else { -mag };
        m += 1;
    }
    c
};

// t - ln(1+t) = t^2 * Σ_m (-1)^m t^m / (m+2)
const IS_SERIES: [f64; 8] = {
    let mut c = [0.0; 8];
    let mut m = 0;
    while m < 8 {
        let mag = 1.0 / ((m + 2) as f64);
        c[m] = if m % 2 == 0 { mag } else { -mag };
        m += 1;
    }
    c
};

#[inline]
fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

/// `a ln(a/b) - a + b`.
#[inline]
fn gen_kl(a: f64, b: f64) -> f64 {
    let t = (a - b) / b;
    if t.abs() < SERIES_CUTOFF {
        b * t * t * horner(&GKL_SERIES, t)
    } else {
        a * (a / b).ln() - a + b
    }
}

/// `a/b - ln(a/b) - 1`.
#[inline]
fn itakura_saito(a: f64, b: f64) -> f64 {
    let t = (a - b) / b;
    if t.abs() < SERIES_CUTOFF {
        t * t * horner(&IS_SERIES, t)
    } else {
        let r = a / b;
        r - r.ln() - 1.0
    }
}

/// `√b/2 + a/(2√b) - √a`, evaluated as `(√a - √b)^2 / (2√b)`.
#[inline]
fn bhattacharyya_like(a: f64, b: f64) -> f64 {
    let sa = a.sqrt();
    let sb = b.sqrt();
    let diff = (a - b) / (sa + sb);
    diff * diff / (2.0 * sb)
}

/// Homogeneous base kernels get a dedicated loop in full evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kernel {
    SquaredEuclidean,
    GeneralizedKl,
    ItakuraSaito,
    BhattacharyyaLike,
}

impl Kernel {
    fn of(kind: &RuleKind) -> Option<Self> {
        match kind {
            RuleKind::SquaredEuclidean => Some(Kernel::SquaredEuclidean),
            RuleKind::GeneralizedKl => Some(Kernel::GeneralizedKl),
            RuleKind::ItakuraSaito => Some(Kernel::ItakuraSaito),
            RuleKind::BhattacharyyaLike => Some(Kernel::BhattacharyyaLike),
            RuleKind::Hybrid { .. } => None,
        }
    }
}

#[inline]
fn sum_kernel(f: impl Fn(f64, f64) -> f64, x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        acc += f(a, b);
    }
    acc
}

/// Same summation order as [`sum_kernel`], giving up once the partial sum
/// exceeds `bound`. Every term is non-negative, so an abandoned sum would
/// have ended above `bound` too. The bound is tested once per group of
/// terms so that their evaluations can overlap.
#[inline]
fn sum_kernel_bounded(f: impl Fn(f64, f64) -> f64, x: &[f64], y: &[f64], bound: f64) -> Option<f64> {
    const GROUP: usize = 4;
    let mut acc = 0.0;
    let mut xs = x.chunks_exact(GROUP);
    let mut ys = y.chunks_exact(GROUP);
    for (a, b) in (&mut xs).zip(&mut ys) {
        let terms = [f(a[0], b[0]), f(a[1], b[1]), f(a[2], b[2]), f(a[3], b[3])];
        for t in terms {
            acc += t;
        }
        if acc > bound {
            return None;
        }
    }
    for (&a, &b) in xs.remainder().iter().zip(ys.remainder()) {
        acc += f(a, b);
    }
    if acc > bound {
        None
    } else {
        Some(acc)
    }
}

/// Scans row-major `block` against `q`, handing every completed divergence to
/// `offer`, which returns the new abandon bound. With `BOUNDED == false` every
/// sum runs to completion.
#[inline(always)]
fn scan_kernel<const BOUNDED: bool>(
    f: impl Fn(f64, f64) -> f64,
    q: &[f64],
    block: &[f64],
    mut bound: f64,
    offer: &mut impl FnMut(usize, f64) -> f64,
) {
    for (pos, x) in block.chunks_exact(q.len()).enumerate() {
        let value = if BOUNDED {
            sum_kernel_bounded(&f, q, x, bound)
        } else {
            Some(sum_kernel(&f, q, x))
        };
        if let Some(value) = value {
            bound = offer(pos, value);
        }
    }
}

/// A Bregman divergence generated by a sum of univariate generators.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposableDivergence {
    name: String,
    rules: Vec<CoordinateRule>,
    simplex: bool,
    kernel: Option<Kernel>,
}

impl DecomposableDivergence {
    pub fn from_rules(name: impl Into<String>, rules: Vec<CoordinateRule>) -> Result<Self> {
        if rules.is_empty() {
            return Err(Error::Config("a divergence needs at least one coordinate".into()));
        }
        let kernel = Kernel::of(&rules[0].kind)
            .filter(|_| rules.iter().all(|r| r.kind == rules[0].kind));
        Ok(Self {
            name: name.into(),
            rules,
            simplex: false,
            kernel,
        })
    }

    /// The same rule repeated along all `dim` coordinates.
    pub fn uniform(rule: CoordinateRule, dim: usize) -> Result<Self> {
        let name = rule.label();
        Self::from_rules(name, vec![rule; dim])
    }

    pub fn squared_euclidean(dim: usize) -> Result<Self> {
        Self::uniform(CoordinateRule::squared_euclidean(), dim)
    }

    pub fn generalized_kl(dim: usize) -> Result<Self> {
        Self::uniform(CoordinateRule::generalized_kl(), dim)
    }

    /// GKL restricted to the open simplex; validation also checks row sums.
    pub fn kl(dim: usize) -> Result<Self> {
        let mut div = Self::generalized_kl(dim)?;
        div.name = "kl".into();
        div.simplex = true;
        Ok(div)
    }

    pub fn itakura_saito(dim: usize) -> Result<Self> {
        Self::uniform(CoordinateRule::itakura_saito(), dim)
    }

    pub fn bhattacharyya_like(dim: usize) -> Result<Self> {
        Self::uniform(CoordinateRule::bhattacharyya_like(), dim)
    }

    /// Parses `sqeuc`, `gkl`, `kl`, `is`, `bhat` or `hybrid:<a>:<b>:<weight>`.
    pub fn parse(spec: &str, dim: usize) -> Result<Self> {
        let spec = spec.trim();
        if spec == "kl" {
            return Self::kl(dim);
        }
        if let Some(rest) = spec.strip_prefix("hybrid:") {
            let parts: Vec<&str> = rest.split(':').collect();
            let [left, right, weight] = parts.as_slice() else {
                return Err(Error::Config(format!(
                    "hybrid divergence must be hybrid:<name>:<name>:<weight>, got '{spec}'"
                )));
            };
            let weight: f64 = weight
                .parse()
                .map_err(|_| Error::Config(format!("bad hybrid weight '{weight}'")))?;
            let rule = CoordinateRule::hybrid(
                weight,
                CoordinateRule::from_name(left)?,
                CoordinateRule::from_name(right)?,
            )?;
            return Self::uniform(rule, dim);
        }
        Self::uniform(CoordinateRule::from_name(spec)?, dim)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.rules.len()
    }

    pub fn rules(&self) -> &[CoordinateRule] {
        &self.rules
    }

    pub fn rule(&self, dim: usize) -> &CoordinateRule {
        &self.rules[dim]
    }

    /// Whether points are additionally required to lie on the simplex.
    pub fn is_simplex(&self) -> bool {
        self.simplex
    }

    /// Checked `D_{f_dim}(a‖b)`.
    pub fn coord_div(&self, dim: usize, a: f64, b: f64) -> Result<f64> {
        let rule = self.rules.get(dim).ok_or_else(|| {
            Error::Shape(format!("dimension {dim} out of range for d = {}", self.dim()))
        })?;
        rule.coord_div(a, b).map_err(|e| match e {
            Error::Domain { value, lo, hi, .. } => Error::Domain { dim, value, lo, hi },
            other => other,
        })
    }

    /// Checked `D_F(x‖y)`.
    pub fn full_div(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_shape(x)?;
        self.check_shape(y)?;
        for p in [x, y] {
            for (dim, (&v, rule)) in p.iter().zip(&self.rules).enumerate() {
                if !rule.domain.contains(v) {
                    return Err(Error::Domain {
                        dim,
                        value: v,
                        lo: rule.domain.lo,
                        hi: rule.domain.hi,
                    });
                }
            }
        }
        Ok(self.eval_full(x, y))
    }

    /// Ok iff every coordinate lies inside its domain with [`DOMAIN_MARGIN`]
    /// to spare, and (for simplex divergences) the coordinates sum to 1.
    pub fn validate_domain(&self, p: &[f64]) -> Result<()> {
        self.check_shape(p)?;
        for (dim, (&v, rule)) in p.iter().zip(&self.rules).enumerate() {
            if !v.is_finite() || !rule.domain.contains_with_margin(v, DOMAIN_MARGIN) {
                return Err(Error::Domain {
                    dim,
                    value: v,
                    lo: rule.domain.lo,
                    hi: rule.domain.hi,
                });
            }
        }
        if self.simplex {
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(Error::NotOnSimplex { sum });
            }
        }
        Ok(())
    }

    fn check_shape(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim() {
            return Err(Error::Shape(format!(
                "point has {} coordinates, divergence expects {}",
                p.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Unchecked `D_{f_dim}(a‖b)`.
    #[inline]
    pub fn eval_coord(&self, dim: usize, a: f64, b: f64) -> f64 {
        self.rules[dim].eval(a, b)
    }

    /// Unchecked `D_F(x‖y)`, summed left to right over coordinates.
    #[inline]
    pub fn eval_full(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(y.len(), self.dim());
        match self.kernel {
            Some(Kernel::SquaredEuclidean) => sum_kernel(sq_euclidean, x, y),
            Some(Kernel::GeneralizedKl) => sum_kernel(gen_kl, x, y),
            Some(Kernel::ItakuraSaito) => sum_kernel(itakura_saito, x, y),
            Some(Kernel::BhattacharyyaLike) => sum_kernel(bhattacharyya_like, x, y),
            None => {
                let mut acc = 0.0;
                for ((&a, &b), rule) in x.iter().zip(y).zip(&self.rules) {
                    acc += rule.eval(a, b);
                }
                acc
            }
        }
    }

    /// Unchecked `D_F(x‖y)` if it does not exceed `bound`, otherwise `None`.
    /// Returned values are bit-identical to [`Self::eval_full`].
    #[inline]
    pub fn eval_full_bounded(&self, x: &[f64], y: &[f64], bound: f64) -> Option<f64> {
        match self.kernel {
            Some(Kernel::SquaredEuclidean) => sum_kernel_bounded(sq_euclidean, x, y, bound),
            Some(Kernel::GeneralizedKl) => sum_kernel_bounded(gen_kl, x, y, bound),
            Some(Kernel::ItakuraSaito) => sum_kernel_bounded(itakura_saito, x, y, bound),
            Some(Kernel::BhattacharyyaLike) => sum_kernel_bounded(bhattacharyya_like, x, y, bound),
            None => {
                let mut acc = 0.0;
                for ((&a, &b), rule) in x.iter().zip(y).zip(&self.rules) {
                    acc += rule.eval(a, b);
                    if acc > bound {
                        return None;
                    }
                }
                Some(acc)
            }
        }
    }

    #[inline]
    pub fn eval_directed_bounded(
        &self,
        q: &[f64],
        x: &[f64],
        direction: Direction,
        bound: f64,
    ) -> Option<f64> {
        match direction {
            Direction::Primal => self.eval_full_bounded(q, x, bound),
            Direction::Dual => self.eval_full_bounded(x, q, bound),
        }
    }

    /// Evaluates the divergence between `q` and each row of the row-major
    /// `block` in `direction`. `offer(row, value)` receives each value and
    /// returns the current acceptance bound; when `abandon` is set, sums that
    /// exceed the bound are dropped early. Values passed to `offer` are
    /// bit-identical to [`Self::eval_directed`].
    pub fn scan_block(
        &self,
        q: &[f64],
        block: &[f64],
        direction: Direction,
        abandon: bool,
        bound: f64,
        mut offer: impl FnMut(usize, f64) -> f64,
    ) {
        debug_assert_eq!(block.len() % self.dim(), 0);
        macro_rules! dispatch {
            ($kernel:expr) => {{
                let k = $kernel;
                match (direction, abandon) {
                    (Direction::Primal, true) => {
                        scan_kernel::<true>(|a, b| k(a, b), q, block, bound, &mut offer)
                    }
                    (Direction::Primal, false) => {
                        scan_kernel::<false>(|a, b| k(a, b), q, block, bound, &mut offer)
                    }
                    (Direction::Dual, true) => {
                        scan_kernel::<true>(|a, b| k(b, a), q, block, bound, &mut offer)
                    }
                    (Direction::Dual, false) => {
                        scan_kernel::<false>(|a, b| k(b, a), q, block, bound, &mut offer)
                    }
                }
            }};
        }
        match self.kernel {
            Some(Kernel::SquaredEuclidean) => dispatch!(sq_euclidean),
            Some(Kernel::GeneralizedKl) => dispatch!(gen_kl),
            Some(Kernel::ItakuraSaito) => dispatch!(itakura_saito),
            Some(Kernel::BhattacharyyaLike) => dispatch!(bhattacharyya_like),
            None => {
                let mut bound = bound;
                for (pos, x) in block.chunks_exact(self.dim()).enumerate() {
                    let value = if abandon {
                        self.eval_directed_bounded(q, x, direction, bound)
                    } else {
                        Some(self.eval_directed(q, x, direction))
                    };
                    if let Some(value) = value {
                        bound = offer(pos, value);
                    }
                }
            }
        }
    }

    /// Unchecked divergence between query `q` and data point `x` in `direction`.
    #[inline]
    pub fn eval_directed(&self, q: &[f64], x: &[f64], direction: Direction) -> f64 {
        match direction {
            Direction::Primal => self.eval_full(q, x),
            Direction::Dual => self.eval_full(x, q),
        }
    }

    /// Unchecked single-coordinate divergence in `direction`.
    #[inline]
    pub fn eval_coord_directed(&self, dim: usize, q: f64, x: f64, direction: Direction) -> f64 {
        match direction {
            Direction::Primal => self.eval_coord(dim, q, x),
            Direction::Dual => self.eval_coord(dim, x, q),
        }
    }
}

impl fmt::Display for DecomposableDivergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}
