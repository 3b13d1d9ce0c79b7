//! A particle diffusing as a Gaussian random walk, killed on leaving `[lo, hi]`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::normal;
use crate::error::{Error, Result};
use crate::smc::FeynmanKacModel;

/// `μ = U[0, 1]`, `M(z, ·) = N(z, σ²)`, `G_p = 1_S` with `S = [lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorbingMediumModel {
    pub lo: f64,
    pub hi: f64,
    pub sigma2: f64,
    pub n: usize,
}

impl AbsorbingMediumModel {
    pub fn new(lo: f64, hi: f64, sigma2: f64, n: usize) -> Result<Self> {
        let m = Self { lo, hi, sigma2, n };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::config(format!(
                "absorbing set [{}, {}] must be a finite interval with lo < hi",
                self.lo, self.hi
            )));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::config("sigma2 must be positive"));
        }
        if self.n == 0 {
            return Err(Error::config("horizon n must be at least 1"));
        }
        Ok(())
    }

    fn inside(&self, z: f64) -> bool {
        z >= self.lo && z <= self.hi
    }
}

impl FeynmanKacModel for AbsorbingMediumModel {
    type Point = f64;

    fn horizon(&self) -> usize {
        self.n
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.random::<f64>()
    }

    fn sample_transition<R: Rng + ?Sized>(&self, _t: usize, from: &f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        from + self.sigma2.sqrt() * z
    }

    fn log_potential(&self, _t: usize, z: &f64) -> f64 {
        if self.inside(*z) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn log_potential_upper(&self, _t: usize) -> Option<f64> {
        Some(0.0)
    }
}

/// Closed-form constant `A` for the absorbing model.
///
/// With `w = hi - lo`, the worst one-step density ratio over `S` is
/// `exp(w² / 2σ²)` and the smallest survival probability from a point of `S`
/// is `Φ(w/σ) - 1/2`, attained at an endpoint. The first step is covered by
/// `1 / μ(S)`. For `S = [0, 1]`, `σ² = 0.25` this gives about `15.48`.
pub fn absorbing_a_bound(model: &AbsorbingMediumModel) -> Result<f64> {
    model.validate()?;
    let w = model.hi - model.lo;
    let sd = model.sigma2.sqrt();
    let survive = normal::interval_prob(0.0, w / sd);
    let ratio = (w * w / (2.0 * model.sigma2)).exp();
    let a = ratio / survive;
    let mu_mass = (model.hi.min(1.0) - model.lo.max(0.0)).max(0.0);
    if mu_mass <= 0.0 {
        return Err(Error::config(
            "S does not meet the support of μ = U[0, 1]; no finite A. \
             Supply numeric suprema to bound_f_m_step instead",
        ));
    }
    Ok(a.max(1.0 / mu_mass))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_value() {
        let m = AbsorbingMediumModel::new(0.0, 1.0, 0.25, 100).unwrap();
        let a = absorbing_a_bound(&m).unwrap();
        assert!((a - 15.483).abs() < 1e-3, "{a}");
        assert!(a < 15.5);
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(AbsorbingMediumModel::new(1.0, 1.0, 0.25, 1).is_err());
        let m = AbsorbingMediumModel { lo: 2.0, hi: 3.0, sigma2: 1.0, n: 1 };
        assert!(absorbing_a_bound(&m).is_err());
    }
}
