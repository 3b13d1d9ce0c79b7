//! Scalar linear Gaussian state space model and its exact Kalman oracles.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::normal;
use crate::error::{Error, Result};
use crate::smc::FeynmanKacModel;
use crate::stream::from_seed;

/// `Z_1 ~ N(mu_mean, mu_var)`, `Z_{p+1} | z ~ N(a z, q)`, `Y_p | z ~ N(c z, r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianModel {
    pub a_coef: f64,
    pub q_var: f64,
    pub c_coef: f64,
    pub r_var: f64,
    pub mu_mean: f64,
    pub mu_var: f64,
    pub observations: Vec<f64>,
}

/// Per-step Kalman filter output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanStep {
    pub pred_mean: f64,
    pub pred_var: f64,
    pub filt_mean: f64,
    pub filt_var: f64,
    /// `log γ_p(1) - log γ_{p-1}(1)`.
    pub log_increment: f64,
}

impl LinearGaussianModel {
    /// The model used in the experiments: `a = 0.9`, unit variances, `c = 1`
    /// and a standard normal initial law.
    pub fn standard(observations: Vec<f64>) -> Self {
        Self {
            a_coef: 0.9,
            q_var: 1.0,
            c_coef: 1.0,
            r_var: 1.0,
            mu_mean: 0.0,
            mu_var: 1.0,
            observations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("q_var", self.q_var), ("r_var", self.r_var), ("mu_var", self.mu_var)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !self.a_coef.is_finite() || !self.c_coef.is_finite() || !self.mu_mean.is_finite() {
            return Err(Error::config("coefficients must be finite"));
        }
        if self.observations.is_empty() {
            return Err(Error::config("need at least one observation"));
        }
        if self.observations.iter().any(|y| !y.is_finite()) {
            return Err(Error::config("observations must be finite"));
        }
        Ok(())
    }

    pub fn with_observations(&self, observations: Vec<f64>) -> Self {
        Self { observations, ..self.clone() }
    }

    /// Draw a latent path and observations of length `n` from the model.
    pub fn simulate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut z = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut x = self.mu_mean + self.mu_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
        for p in 0..n {
            if p > 0 {
                x = self.a_coef * x + self.q_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
            }
            z.push(x);
            y.push(self.c_coef * x + self.r_var.sqrt() * rng.sample::<f64, _>(StandardNormal));
        }
        (z, y)
    }

    /// Observations of length `n` simulated from a fresh stream seeded by `seed`.
    pub fn simulate_observations(&self, seed: u64, n: usize) -> Vec<f64> {
        self.simulate(n, &mut from_seed(seed)).1
    }

    pub fn kalman_filter(&self) -> Vec<KalmanStep> {
        let mut out = Vec::with_capacity(self.observations.len());
        let (mut m, mut v) = (self.mu_mean, self.mu_var);
        for (p, &y) in self.observations.iter().enumerate() {
            let (pm, pv) = if p == 0 {
                (m, v)
            } else {
                (self.a_coef * m, self.a_coef * self.a_coef * v + self.q_var)
            };
            let s = self.c_coef * self.c_coef * pv + self.r_var;
            let gain = pv * self.c_coef / s;
            m = pm + gain * (y - self.c_coef * pm);
            v = (1.0 - gain * self.c_coef) * pv;
            out.push(KalmanStep {
                pred_mean: pm,
                pred_var: pv,
                filt_mean: m,
                filt_var: v,
                log_increment: normal::log_pdf(y, self.c_coef * pm, s),
            });
        }
        out
    }

    /// `log γ_n(1)`, the log marginal likelihood.
    pub fn log_evidence(&self) -> f64 {
        self.kalman_filter().iter().map(|s| s.log_increment).sum()
    }

    /// Exact `γ_p(1) / γ_{p-1}(1)` for every step.
    pub fn exact_increments(&self) -> Vec<f64> {
        self.kalman_filter().iter().map(|s| s.log_increment.exp()).collect()
    }

    /// Rauch–Tung–Striebel smoothed marginals `(mean, var)`.
    pub fn kalman_smoother(&self) -> Vec<(f64, f64)> {
        smooth(&self.kalman_filter(), self.a_coef)
    }

    /// Exact draw from the smoothing distribution by forward filtering,
    /// backward sampling.
    pub fn sample_posterior_path<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let f = self.kalman_filter();
        let n = f.len();
        let mut path = vec![0.0; n];
        let z: f64 = rng.sample(StandardNormal);
        path[n - 1] = f[n - 1].filt_mean + f[n - 1].filt_var.sqrt() * z;
        for t in (0..n - 1).rev() {
            let j = f[t].filt_var * self.a_coef / f[t + 1].pred_var;
            let mean = f[t].filt_mean + j * (path[t + 1] - f[t + 1].pred_mean);
            let var = (f[t].filt_var - j * self.a_coef * f[t].filt_var).max(0.0);
            let z: f64 = rng.sample(StandardNormal);
            path[t] = mean + var.sqrt() * z;
        }
        path
    }
}

/// RTS backward pass over filter output.
pub fn smooth(f: &[KalmanStep], a: f64) -> Vec<(f64, f64)> {
    let n = f.len();
    let mut out = vec![(0.0, 0.0); n];
    if n == 0 {
        return out;
    }
    out[n - 1] = (f[n - 1].filt_mean, f[n - 1].filt_var);
    for t in (0..n - 1).rev() {
        let j = f[t].filt_var * a / f[t + 1].pred_var;
        let (ms, vs) = out[t + 1];
        out[t] = (
            f[t].filt_mean + j * (ms - f[t + 1].pred_mean),
            f[t].filt_var + j * j * (vs - f[t + 1].pred_var),
        );
    }
    out
}

impl FeynmanKacModel for LinearGaussianModel {
    type Point = f64;

    fn horizon(&self) -> usize {
        self.observations.len()
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mu_mean + self.mu_var.sqrt() * z
    }

    fn sample_transition<R: Rng + ?Sized>(&self, _t: usize, from: &f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.a_coef * from + self.q_var.sqrt() * z
    }

    fn log_potential(&self, t: usize, z: &f64) -> f64 {
        normal::log_pdf(self.observations[t], self.c_coef * z, self.r_var)
    }

    fn log_potential_upper(&self, _t: usize) -> Option<f64> {
        Some(-0.5 * (2.0 * std::f64::consts::PI * self.r_var).ln())
    }
}
