//! High-precision reference for per-coordinate divergences, built from each
//! rule's generator: `D(a, b) = f(a) - f(b) - f'(b) (a - b)`.
//!
//! Inputs are converted exactly and the formula is evaluated with 384-bit
//! mantissas, far more than the cancellation between its terms can eat for any
//! pair of `f64` inputs.

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use bregman_kd::{CoordinateRule, Interval, RuleKind};
use rand::Rng;

const PREC: usize = 384;
const RM: RoundingMode = RoundingMode::ToEven;

pub struct Reference {
    cc: Consts,
}

impl Reference {
    pub fn new() -> Self {
        Self { cc: Consts::new().expect("astro-float constants") }
    }

    fn big(x: f64) -> BigFloat {
        BigFloat::from_f64(x, PREC)
    }

    /// `(f(x), f'(x))` for the rule's generator.
    fn generator(&mut self, kind: &RuleKind, x: &BigFloat) -> (BigFloat, BigFloat) {
        match kind {
            // f = x^2
            RuleKind::SquaredEuclidean => (x.mul(x, PREC, RM), x.mul(&Self::big(2.0), PREC, RM)),
            // f = x ln x - x
            RuleKind::GeneralizedKl => {
                let ln = x.ln(PREC, RM, &mut self.cc);
                (x.mul(&ln, PREC, RM).sub(x, PREC, RM), ln)
            }
            // f = -ln x
            RuleKind::ItakuraSaito => {
                let ln = x.ln(PREC, RM, &mut self.cc);
                (ln.neg(), x.reciprocal(PREC, RM).neg())
            }
            // f = -sqrt x
            RuleKind::BhattacharyyaLike => {
                let root = x.sqrt(PREC, RM);
                let slope = root.mul(&Self::big(2.0), PREC, RM).reciprocal(PREC, RM).neg();
                (root.neg(), slope)
            }
            // f = w f_left + (1 - w) f_right
            RuleKind::Hybrid { weight, left, right } => {
                let w = Self::big(*weight);
                let v = Self::big(1.0).sub(&w, PREC, RM);
                let (fl, dl) = self.generator(left.kind(), x);
                let (fr, dr) = self.generator(right.kind(), x);
                (
                    w.mul(&fl, PREC, RM).add(&v.mul(&fr, PREC, RM), PREC, RM),
                    w.mul(&dl, PREC, RM).add(&v.mul(&dr, PREC, RM), PREC, RM),
                )
            }
        }
    }

    pub fn divergence(&mut self, rule: &CoordinateRule, a: f64, b: f64) -> BigFloat {
        let (a, b) = (Self::big(a), Self::big(b));
        let (fa, _) = self.generator(rule.kind(), &a);
        let (fb, dfb) = self.generator(rule.kind(), &b);
        let step = a.sub(&b, PREC, RM);
        fa.sub(&fb, PREC, RM).sub(&dfb.mul(&step, PREC, RM), PREC, RM)
    }

    /// Relative error of `value` against the reference (0 when both are 0,
    /// infinite when only the reference is 0).
    pub fn relative_error(&mut self, reference: &BigFloat, value: f64) -> f64 {
        let diff = Self::big(value).sub(reference, PREC, RM).abs();
        if diff.is_zero() {
            return 0.0;
        }
        if reference.is_zero() {
            return f64::INFINITY;
        }
        let rel = diff.div(&reference.abs(), PREC, RM);
        self.as_f64(&rel)
    }

    pub fn as_f64(&mut self, x: &BigFloat) -> f64 {
        let text = x
            .format(Radix::Dec, RM, &mut self.cc)
            .expect("decimal formatting");
        text.parse().expect("astro-float prints parseable decimals")
    }
}

/// Draws a pair from `domain`, mixing independent wide-range draws, draws on
/// the unit interval and nearly equal pairs (where cancellation is worst).
pub fn sample_pair(rng: &mut impl Rng, domain: Interval) -> (f64, f64) {
    let positive = domain.lo >= 0.0;
    let wide = |rng: &mut dyn rand::RngCore| -> f64 {
        if positive {
            10f64.powf(rng.random_range(-8.0..8.0))
        } else {
            rng.random_range(-1e3..1e3)
        }
    };
    match rng.random_range(0..3) {
        0 => (wide(rng), wide(rng)),
        1 => {
            let lo = if positive { 1e-9 } else { -1.0 };
            (rng.random_range(lo..1.0), rng.random_range(lo..1.0))
        }
        _ => {
            let b = wide(rng);
            let rel = 10f64.powf(rng.random_range(-14.0..-0.5));
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let a = b * (1.0 + sign * rel);
            (a, b)
        }
    }
}
