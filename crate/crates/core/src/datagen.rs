//! Deterministic synthetic datasets.
//!
//! Row `i` of every dataset is drawn from its own ChaCha8 stream: the
//! generator is seeded with `seed_from_u64(seed)` and switched to stream `i`.
//! Output is therefore a pure function of the [`GenSpec`], independent of
//! platform and of how rows are scheduled across threads.

use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use crate::divergence::DOMAIN_MARGIN;
use crate::error::{Error, Result};
use crate::points::PointSet;

/// Smallest coordinate emitted by the simplex generators, relative to the
/// margin every validated coordinate must keep from zero.
const SIMPLEX_FLOOR: f64 = 4.0 * DOMAIN_MARGIN;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GenKind {
    /// i.i.d. uniform on `(δ, 1 - δ)^d`.
    UniformCube,
    /// Uniform on the open simplex (flat Dirichlet).
    UniformSimplex,
    /// `softmax(z / temperature)` with `z` standard normal.
    SoftmaxGaussian { temperature: f64 },
}

impl fmt::Display for GenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GenKind::UniformCube => f.write_str("cube"),
            GenKind::UniformSimplex => f.write_str("simplex"),
            GenKind::SoftmaxGaussian { temperature } => write!(f, "softmax(T={temperature})"),
        }
    }
}

impl FromStr for GenKind {
    type Err = Error;

    /// `cube`, `simplex` or `softmax` (temperature 1).
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cube" => Ok(GenKind::UniformCube),
            "simplex" => Ok(GenKind::UniformSimplex),
            "softmax" => Ok(GenKind::SoftmaxGaussian { temperature: 1.0 }),
            other => Err(Error::Config(format!(
                "unknown dataset kind '{other}' (expected cube, simplex or softmax)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenSpec {
    pub kind: GenKind,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
}

impl GenSpec {
    pub fn cube(n: usize, d: usize, seed: u64) -> Self {
        Self { kind: GenKind::UniformCube, n, d, seed }
    }

    pub fn simplex(n: usize, d: usize, seed: u64) -> Self {
        Self { kind: GenKind::UniformSimplex, n, d, seed }
    }

    pub fn softmax(n: usize, d: usize, temperature: f64, seed: u64) -> Self {
        Self {
            kind: GenKind::SoftmaxGaussian { temperature },
            n,
            d,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::Config(format!(
                "dataset needs n >= 1 and d >= 1, got n = {}, d = {}",
                self.n, self.d
            )));
        }
        if let GenKind::SoftmaxGaussian { temperature } = self.kind {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(Error::Config(format!(
                    "softmax temperature must be positive, got {temperature}"
                )));
            }
        }
        Ok(())
    }
}

pub fn generate(spec: &GenSpec) -> Result<PointSet> {
    spec.validate()?;
    let mut data = vec![0.0; spec.n * spec.d];
    data.par_chunks_mut(spec.d)
        .enumerate()
        .for_each(|(row, out)| fill_row(spec, row as u64, out));
    PointSet::new(data, spec.d)
}

fn fill_row(spec: &GenSpec, row: u64, out: &mut [f64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(row);
    match spec.kind {
        GenKind::UniformCube => {
            let width = 1.0 - 4.0 * DOMAIN_MARGIN;
            for v in out.iter_mut() {
                let u: f64 = Open01.sample(&mut rng);
                *v = 2.0 * DOMAIN_MARGIN + width * u;
            }
        }
        GenKind::UniformSimplex => {
            for v in out.iter_mut() {
                *v = Exp1.sample(&mut rng);
            }
            normalize_with_floor(out);
        }
        GenKind::SoftmaxGaussian { temperature } => {
            for v in out.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = z / temperature;
            }
            let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for v in out.iter_mut() {
                *v = (*v - max).exp();
            }
            normalize_with_floor(out);
        }
    }
}

/// Lifts weights to at least `SIMPLEX_FLOOR` times their total, then divides by
/// the new total once. Every output coordinate stays above twice the domain
/// margin for any practical dimension.
fn normalize_with_floor(weights: &mut [f64]) {
    let raw: f64 = weights.iter().sum();
    let floor = SIMPLEX_FLOOR * raw;
    for w in weights.iter_mut() {
        *w = w.max(floor);
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::DecomposableDivergence;

    #[test]
    fn simplex_rows_sum_to_one() {
        let data = generate(&GenSpec::simplex(500, 10, 7)).unwrap();
        for row in data.rows() {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn deterministic_bytes() {
        for spec in [
            GenSpec::cube(100, 5, 3),
            GenSpec::simplex(100, 5, 3),
            GenSpec::softmax(100, 5, 0.5, 3),
        ] {
            let a = generate(&spec).unwrap();
            let b = generate(&spec).unwrap();
            let bits = |p: &PointSet| p.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
            let other = generate(&GenSpec { seed: 4, ..spec }).unwrap();
            assert_ne!(bits(&a), bits(&other));
        }
    }

    #[test]
    fn prefix_rows_do_not_depend_on_n() {
        let small = generate(&GenSpec::simplex(10, 4, 11)).unwrap();
        let large = generate(&GenSpec::simplex(50, 4, 11)).unwrap();
        assert_eq!(small.as_slice(), &large.as_slice()[..40]);
    }

    #[test]
    fn high_temperature_flattens_softmax() {
        let data = generate(&GenSpec::softmax(2000, 10, 100.0, 5)).unwrap();
        let below = data
            .rows()
            .filter(|r| r.iter().copied().fold(0.0, f64::max) < 0.2)
            .count();
        assert!(below as f64 >= 0.99 * 2000.0);
    }

    #[test]
    fn cold_softmax_stays_in_domain() {
        // Tiny temperatures underflow exp(); the floor keeps rows valid.
        let data = generate(&GenSpec::softmax(200, 50, 0.01, 9)).unwrap();
        let kl = DecomposableDivergence::kl(50).unwrap();
        for row in data.rows() {
            kl.validate_domain(row).unwrap();
        }
    }

    #[test]
    fn generated_points_validate() {
        let gkl = DecomposableDivergence::generalized_kl(8).unwrap();
        let is = DecomposableDivergence::itakura_saito(8).unwrap();
        let sq = DecomposableDivergence::squared_euclidean(8).unwrap();
        for spec in [GenSpec::cube(300, 8, 1), GenSpec::simplex(300, 8, 1), GenSpec::softmax(300, 8, 1.0, 1)] {
            for row in generate(&spec).unwrap().rows() {
                gkl.validate_domain(row).unwrap();
                is.validate_domain(row).unwrap();
                sq.validate_domain(row).unwrap();
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&GenSpec::cube(0, 3, 1)).is_err());
        assert!(generate(&GenSpec::cube(3, 0, 1)).is_err());
        assert!(generate(&GenSpec::softmax(3, 3, 0.0, 1)).is_err());
        assert!("torus".parse::<GenKind>().is_err());
    }
}
