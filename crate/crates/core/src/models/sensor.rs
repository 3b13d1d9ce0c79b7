//! Interval-censored sensor observations of a Gaussian random walk.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::normal;
use crate::error::{Error, Result};
use crate::smc::FeynmanKacModel;
use crate::stream::from_seed;

/// `μ = N(0, 1)`, `M(z, ·) = N(z, σ²)`, `G_p = 1[y_p, y_p + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorHmmModel {
    pub sigma2: f64,
    pub observations: Vec<i64>,
}

impl SensorHmmModel {
    pub fn new(sigma2: f64, observations: Vec<i64>) -> Result<Self> {
        let m = Self { sigma2, observations };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::config("sigma2 must be positive"));
        }
        if self.observations.is_empty() {
            return Err(Error::config("need at least one observation"));
        }
        Ok(())
    }

    /// Largest `|y_p - y_{p+1}|`, zero for a single observation.
    pub fn max_gap(&self) -> u64 {
        max_gap(&self.observations)
    }
}

pub fn max_gap(y: &[i64]) -> u64 {
    y.windows(2).map(|w| w[0].abs_diff(w[1])).max().unwrap_or(0)
}

/// One latent path and its sensor readings.
pub fn simulate<R: Rng + ?Sized>(sigma2: f64, n: usize, rng: &mut R) -> (Vec<f64>, Vec<i64>) {
    let mut z = Vec::with_capacity(n);
    let mut x: f64 = StandardNormal.sample(rng);
    for p in 0..n {
        if p > 0 {
            let e: f64 = StandardNormal.sample(rng);
            x += sigma2.sqrt() * e;
        }
        z.push(x);
    }
    let y = z.iter().map(|v| v.floor() as i64).collect();
    (z, y)
}

/// Simulate data sets from `seed` until one has exactly the requested maximum
/// gap. Returns the readings and the number of data sets drawn.
pub fn simulate_with_max_gap(sigma2: f64, n: usize, gap: u64, seed: u64, max_tries: u64) -> Result<(Vec<i64>, u64)> {
    let mut rng = from_seed(seed);
    for tries in 1..=max_tries {
        let (_, y) = simulate(sigma2, n, &mut rng);
        if max_gap(&y) == gap {
            return Ok((y, tries));
        }
    }
    Err(Error::budget(max_tries).with_context(format!("no data set with max gap {gap} in {max_tries} draws")))
}

impl FeynmanKacModel for SensorHmmModel {
    type Point = f64;

    fn horizon(&self) -> usize {
        self.observations.len()
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        StandardNormal.sample(rng)
    }

    fn sample_transition<R: Rng + ?Sized>(&self, _t: usize, from: &f64, rng: &mut R) -> f64 {
        let e: f64 = StandardNormal.sample(rng);
        from + self.sigma2.sqrt() * e
    }

    fn log_potential(&self, t: usize, z: &f64) -> f64 {
        let y = self.observations[t] as f64;
        if *z >= y && *z < y + 1.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn log_potential_upper(&self, _t: usize) -> Option<f64> {
        Some(0.0)
    }
}

/// Data-dependent constant `A` from the widest consecutive pair of readings.
///
/// For a gap `d = |y_{k+1} - y_k|` the worst density ratio is
/// `exp((2d + 1) / 2σ²)` and the smallest one-step hit probability is
/// `Φ((d+1)/σ) - Φ(d/σ)`. Both grow with `d`, so the widest gap is the
/// binding pair. A single reading gives `1 / μ(S_1)`.
pub fn sensor_a_bound(model: &SensorHmmModel) -> f64 {
    if model.observations.len() == 1 {
        let y = model.observations[0] as f64;
        return 1.0 / normal::interval_prob(y, y + 1.0);
    }
    let d = model.max_gap() as f64;
    let sd = model.sigma2.sqrt();
    let ratio = ((2.0 * d + 1.0) / (2.0 * model.sigma2)).exp();
    ratio / normal::interval_prob(d / sd, (d + 1.0) / sd)
}
