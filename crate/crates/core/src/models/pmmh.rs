//! Particle marginal Metropolis–Hastings over the parameters of the linear
//! Gaussian model, with an artificial atom grafted on so the chain regenerates.
//!
//! `θ = (a, q, c, r)`: transition coefficient and variance, observation
//! coefficient and variance. The extended target puts mass `1/2` on the
//! ordinary pseudo-marginal posterior and `1/2` on the atom `(a_θ, a_w)`.
//! From an ordinary state the proposal is a random-walk move with probability
//! `w_mix` and the atom otherwise; from the atom it is `q(θ*, ·)` together
//! with a fresh likelihood estimate.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::linear_gaussian::LinearGaussianModel;
use super::normal;
use crate::error::{Error, Result};
use crate::regen::AtomicKernel;
use crate::smc::{estimate_log_nc, run_smc};

pub type Theta = [f64; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    /// Particle filter estimate with the configured particle count.
    Estimated,
    /// Kalman-exact likelihood; the chain reduces to marginal MH.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmmhSettings {
    pub n_particles: usize,
    pub proposal_sd: f64,
    pub prior_mean: Theta,
    pub prior_sd: f64,
    pub theta_star: Theta,
    /// Probability of an ordinary random-walk proposal from a non-atom state.
    pub w_mix: f64,
    pub likelihood: Likelihood,
    /// Initial law of the latent chain, not part of `θ`.
    pub mu_mean: f64,
    pub mu_var: f64,
}

impl Default for PmmhSettings {
    fn default() -> Self {
        Self {
            n_particles: 2048,
            proposal_sd: 0.1,
            prior_mean: [0.0; 4],
            prior_sd: 0.2,
            theta_star: [0.9, 1.0, 1.0, 1.0],
            w_mix: 0.5,
            likelihood: Likelihood::Estimated,
            mu_mean: 0.0,
            mu_var: 1.0,
        }
    }
}

impl PmmhSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::config("n_particles must be at least 1"));
        }
        if !(self.proposal_sd > 0.0 && self.prior_sd > 0.0) {
            return Err(Error::config("proposal_sd and prior_sd must be positive"));
        }
        if !(self.w_mix > 0.0 && self.w_mix < 1.0) {
            return Err(Error::config("w_mix must lie in (0, 1)"));
        }
        if !(self.mu_var > 0.0) {
            return Err(Error::config("mu_var must be positive"));
        }
        Ok(())
    }
}

/// A state of the extended chain. `log_w` is the log likelihood estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmmhState {
    Atom,
    Point { theta: Theta, log_w: f64 },
}

impl PmmhState {
    pub fn theta(&self) -> Option<&Theta> {
        match self {
            PmmhState::Point { theta, .. } => Some(theta),
            PmmhState::Atom => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomizedPmmhKernel {
    pub observations: Vec<f64>,
    pub settings: PmmhSettings,
    /// `log a_w`.
    pub log_atom_weight: f64,
}

impl AtomizedPmmhKernel {
    pub fn new(observations: Vec<f64>, settings: PmmhSettings, log_atom_weight: f64) -> Result<Self> {
        settings.validate()?;
        if observations.is_empty() {
            return Err(Error::config("need at least one observation"));
        }
        if !log_atom_weight.is_finite() {
            return Err(Error::config("atom weight must be positive and finite"));
        }
        Ok(Self {
            observations,
            settings,
            log_atom_weight,
        })
    }

    /// Build the kernel with `a_w` estimated by one particle filter run at
    /// `θ*` with `atom_particles` particles.
    pub fn build<R: Rng + ?Sized>(
        observations: Vec<f64>,
        settings: PmmhSettings,
        atom_particles: usize,
        rng: &mut R,
    ) -> Result<Self> {
        settings.validate()?;
        let proto = Self {
            observations,
            settings,
            log_atom_weight: 0.0,
        };
        let model = proto
            .model(&proto.settings.theta_star)
            .ok_or_else(|| Error::config("theta_star has a nonpositive variance"))?;
        let v = run_smc(&model, atom_particles, rng)?;
        let log_aw = estimate_log_nc(&v)?;
        Self::new(proto.observations, proto.settings, log_aw)
    }

    /// The latent model at `θ`, or `None` if a variance is not positive.
    pub fn model(&self, theta: &Theta) -> Option<LinearGaussianModel> {
        if !(theta[1] > 0.0 && theta[3] > 0.0) || theta.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(LinearGaussianModel {
            a_coef: theta[0],
            q_var: theta[1],
            c_coef: theta[2],
            r_var: theta[3],
            mu_mean: self.settings.mu_mean,
            mu_var: self.settings.mu_var,
            observations: self.observations.clone(),
        })
    }

    /// Log likelihood (estimate) at `θ`. Invalid parameters and particle
    /// death give `-inf`, so the move is rejected.
    pub fn log_likelihood<R: Rng + ?Sized>(&self, theta: &Theta, rng: &mut R) -> Result<f64> {
        let Some(model) = self.model(theta) else {
            return Ok(f64::NEG_INFINITY);
        };
        match self.settings.likelihood {
            Likelihood::Exact => Ok(model.log_evidence()),
            Likelihood::Estimated => match run_smc(&model, self.settings.n_particles, rng).and_then(|v| estimate_log_nc(&v)) {
                Ok(l) => Ok(l),
                Err(Error::ParticleDeath { .. }) => Ok(f64::NEG_INFINITY),
                Err(e) => Err(e),
            },
        }
    }

    fn log_gauss(x: &Theta, mean: &Theta, sd: f64) -> f64 {
        x.iter().zip(mean).map(|(a, m)| normal::log_pdf(*a, *m, sd * sd)).sum()
    }

    pub fn log_prior(&self, theta: &Theta) -> f64 {
        Self::log_gauss(theta, &self.settings.prior_mean, self.settings.prior_sd)
    }

    /// `log q(θ*, θ)`.
    pub fn log_reentry(&self, theta: &Theta) -> f64 {
        Self::log_gauss(theta, &self.settings.theta_star, self.settings.proposal_sd)
    }

    fn perturb<R: Rng + ?Sized>(&self, centre: &Theta, rng: &mut R) -> Theta {
        let mut out = *centre;
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += self.settings.proposal_sd * z;
        }
        out
    }

    /// Log acceptance ratio for `θ → θ'` between ordinary states.
    pub fn log_ratio_move(&self, theta: &Theta, log_w: f64, theta_new: &Theta, log_w_new: f64) -> f64 {
        self.log_prior(theta_new) + log_w_new - self.log_prior(theta) - log_w
    }

    /// Log acceptance ratio for an ordinary state proposing the atom.
    pub fn log_ratio_to_atom(&self, theta: &Theta, log_w: f64) -> f64 {
        self.log_atom_weight + self.log_reentry(theta)
            - self.log_prior(theta)
            - log_w
            - (1.0 - self.settings.w_mix).ln()
    }

    /// Log acceptance ratio for the atom proposing `θ'`.
    pub fn log_ratio_from_atom(&self, theta_new: &Theta, log_w_new: f64) -> f64 {
        self.log_prior(theta_new) + log_w_new + (1.0 - self.settings.w_mix).ln()
            - self.log_atom_weight
            - self.log_reentry(theta_new)
    }

    fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
        if log_ratio.is_nan() || log_ratio == f64::NEG_INFINITY {
            return false;
        }
        log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
    }
}

impl AtomicKernel for AtomizedPmmhKernel {
    type State = PmmhState;

    fn sample<R: Rng + ?Sized>(&self, x: &PmmhState, rng: &mut R) -> PmmhState {
        self.try_sample(x, rng).expect("likelihood estimation failed")
    }

    fn try_sample<R: Rng + ?Sized>(&self, x: &PmmhState, rng: &mut R) -> Result<PmmhState> {
        match x {
            PmmhState::Atom => {
                let theta = self.perturb(&self.settings.theta_star, rng);
                let log_w = self.log_likelihood(&theta, rng)?;
                let r = self.log_ratio_from_atom(&theta, log_w);
                Ok(if Self::accept(r, rng) {
                    PmmhState::Point { theta, log_w }
                } else {
                    PmmhState::Atom
                })
            }
            PmmhState::Point { theta, log_w } => {
                if rng.random::<f64>() < self.settings.w_mix {
                    let theta_new = self.perturb(theta, rng);
                    let log_w_new = self.log_likelihood(&theta_new, rng)?;
                    let r = self.log_ratio_move(theta, *log_w, &theta_new, log_w_new);
                    Ok(if Self::accept(r, rng) {
                        PmmhState::Point {
                            theta: theta_new,
                            log_w: log_w_new,
                        }
                    } else {
                        x.clone()
                    })
                } else {
                    let r = self.log_ratio_to_atom(theta, *log_w);
                    Ok(if Self::accept(r, rng) { PmmhState::Atom } else { x.clone() })
                }
            }
        }
    }

    fn atom(&self) -> PmmhState {
        PmmhState::Atom
    }

    fn is_atom(&self, x: &PmmhState) -> bool {
        matches!(x, PmmhState::Atom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel() -> AtomizedPmmhKernel {
        let s = PmmhSettings {
            likelihood: Likelihood::Exact,
            ..Default::default()
        };
        AtomizedPmmhKernel::new(vec![0.1, 0.5, -0.2], s, -4.0).unwrap()
    }

    #[test]
    fn equal_prior_and_weight_gives_ratio_one() {
        let k = kernel();
        let t = [0.1, 0.2, 0.3, 0.4];
        let t2 = [-0.1, 0.2, 0.3, -0.4];
        assert!(k.log_ratio_move(&t, -3.0, &t2, -3.0).abs() < 1e-12);
    }

    #[test]
    fn atom_ratios_are_reciprocal() {
        let k = kernel();
        let t = [0.8, 1.1, 0.9, 1.2];
        let a = k.log_ratio_to_atom(&t, -5.0);
        let b = k.log_ratio_from_atom(&t, -5.0);
        assert!((a + b).abs() < 1e-12);
    }

    #[test]
    fn negative_variance_is_rejected() {
        let k = kernel();
        let mut rng = crate::stream::from_seed(3);
        assert_eq!(k.log_likelihood(&[0.9, -1.0, 1.0, 1.0], &mut rng).unwrap(), f64::NEG_INFINITY);
    }
}
