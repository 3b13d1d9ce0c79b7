//! JSON model configuration.
//!
//! ```json
//! {"model": "sensor", "sigma2": 5.0, "observations": {"simulate": {"seed": 1, "n": 100}}, "max_gap": 3}
//! ```
//!
//! Floats are parsed with exact round-tripping, so observations written back
//! out are bit-identical.

use serde::{Deserialize, Serialize};

use super::absorbing::AbsorbingMediumModel;
use super::finite::FiniteChain;
use super::linear_gaussian::LinearGaussianModel;
use super::pmmh::{Likelihood, PmmhSettings, Theta};
use super::sensor::{self, SensorHmmModel};
use crate::error::{Error, Result};
use crate::stream::from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulateSpec {
    pub seed: u64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Observations<T> {
    Values(Vec<T>),
    Simulate { simulate: SimulateSpec },
}

fn d_one() -> f64 {
    1.0
}
fn d_a() -> f64 {
    0.9
}
fn d_sigma2_absorbing() -> f64 {
    0.25
}
fn d_hi() -> f64 {
    1.0
}
fn d_particles() -> usize {
    2048
}
fn d_atom_particles() -> usize {
    16384
}
fn d_prior_sd() -> f64 {
    0.2
}
fn d_proposal_sd() -> f64 {
    0.1
}
fn d_theta_star() -> Theta {
    [0.9, 1.0, 1.0, 1.0]
}
fn d_half() -> f64 {
    0.5
}
fn d_max_tries() -> u64 {
    1_000_000
}
fn d_likelihood() -> Likelihood {
    Likelihood::Estimated
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelConfig {
    LinearGaussian {
        #[serde(default = "d_a")]
        a_coef: f64,
        #[serde(default = "d_one")]
        q_var: f64,
        #[serde(default = "d_one")]
        c_coef: f64,
        #[serde(default = "d_one")]
        r_var: f64,
        #[serde(default)]
        mu_mean: f64,
        #[serde(default = "d_one")]
        mu_var: f64,
        observations: Observations<f64>,
    },
    Absorbing {
        #[serde(default)]
        lo: f64,
        #[serde(default = "d_hi")]
        hi: f64,
        #[serde(default = "d_sigma2_absorbing")]
        sigma2: f64,
        n: usize,
    },
    Sensor {
        sigma2: f64,
        observations: Observations<i64>,
        /// With simulated observations, redraw until the widest gap equals
        /// this value.
        #[serde(default)]
        max_gap: Option<u64>,
        #[serde(default = "d_max_tries")]
        max_tries: u64,
    },
    Pmmh {
        observations: Observations<f64>,
        #[serde(default = "d_particles")]
        n_particles: usize,
        #[serde(default = "d_atom_particles")]
        atom_particles: usize,
        #[serde(default)]
        prior_mean: Theta,
        #[serde(default = "d_prior_sd")]
        prior_sd: f64,
        #[serde(default = "d_proposal_sd")]
        proposal_sd: f64,
        #[serde(default = "d_theta_star")]
        theta_star: Theta,
        #[serde(default = "d_half")]
        w_mix: f64,
        #[serde(default = "d_likelihood")]
        likelihood: Likelihood,
    },
    FiniteChain {
        transition: Vec<Vec<f64>>,
        #[serde(default)]
        atom: usize,
    },
}

/// A configuration with its observations materialized.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    LinearGaussian(LinearGaussianModel),
    Absorbing(AbsorbingMediumModel),
    Sensor(SensorHmmModel),
    Pmmh {
        observations: Vec<f64>,
        settings: PmmhSettings,
        atom_particles: usize,
    },
    FiniteChain(FiniteChain),
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::LinearGaussian(_) => "linear_gaussian",
            Model::Absorbing(_) => "absorbing",
            Model::Sensor(_) => "sensor",
            Model::Pmmh { .. } => "pmmh",
            Model::FiniteChain(_) => "finite_chain",
        }
    }
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("model config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn resolve(&self) -> Result<Model> {
        Ok(match self {
            ModelConfig::LinearGaussian {
                a_coef,
                q_var,
                c_coef,
                r_var,
                mu_mean,
                mu_var,
                observations,
            } => {
                let mut m = LinearGaussianModel {
                    a_coef: *a_coef,
                    q_var: *q_var,
                    c_coef: *c_coef,
                    r_var: *r_var,
                    mu_mean: *mu_mean,
                    mu_var: *mu_var,
                    observations: vec![0.0],
                };
                m.validate()?;
                m.observations = match observations {
                    Observations::Values(v) => v.clone(),
                    Observations::Simulate { simulate } => m.simulate_observations(simulate.seed, simulate.n),
                };
                m.validate()?;
                Model::LinearGaussian(m)
            }
            ModelConfig::Absorbing { lo, hi, sigma2, n } => {
                Model::Absorbing(AbsorbingMediumModel::new(*lo, *hi, *sigma2, *n)?)
            }
            ModelConfig::Sensor {
                sigma2,
                observations,
                max_gap,
                max_tries,
            } => {
                let y = match (observations, max_gap) {
                    (Observations::Values(v), _) => v.clone(),
                    (Observations::Simulate { simulate }, Some(g)) => {
                        sensor::simulate_with_max_gap(*sigma2, simulate.n, *g, simulate.seed, *max_tries)?.0
                    }
                    (Observations::Simulate { simulate }, None) => {
                        sensor::simulate(*sigma2, simulate.n, &mut from_seed(simulate.seed)).1
                    }
                };
                Model::Sensor(SensorHmmModel::new(*sigma2, y)?)
            }
            ModelConfig::Pmmh {
                observations,
                n_particles,
                atom_particles,
                prior_mean,
                prior_sd,
                proposal_sd,
                theta_star,
                w_mix,
                likelihood,
            } => {
                let settings = PmmhSettings {
                    n_particles: *n_particles,
                    proposal_sd: *proposal_sd,
                    prior_mean: *prior_mean,
                    prior_sd: *prior_sd,
                    theta_star: *theta_star,
                    w_mix: *w_mix,
                    likelihood: *likelihood,
                    ..Default::default()
                };
                settings.validate()?;
                if *atom_particles == 0 {
                    return Err(Error::config("atom_particles must be at least 1"));
                }
                let observations = match observations {
                    Observations::Values(v) => v.clone(),
                    Observations::Simulate { simulate } => {
                        LinearGaussianModel::standard(vec![]).simulate_observations(simulate.seed, simulate.n)
                    }
                };
                if observations.is_empty() {
                    return Err(Error::config("need at least one observation"));
                }
                Model::Pmmh {
                    observations,
                    settings,
                    atom_particles: *atom_particles,
                }
            }
            ModelConfig::FiniteChain { transition, atom } => Model::FiniteChain(FiniteChain::new(transition.clone(), *atom)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_and_simulate() {
        let c = ModelConfig::from_json(r#"{"model":"linear_gaussian","observations":[0.1,0.30000000000000004]}"#).unwrap();
        match c.resolve().unwrap() {
            Model::LinearGaussian(m) => assert_eq!(m.observations, vec![0.1, 0.30000000000000004]),
            _ => panic!(),
        }
        let c = ModelConfig::from_json(r#"{"model":"sensor","sigma2":5,"observations":{"simulate":{"seed":3,"n":40}},"max_gap":3}"#)
            .unwrap();
        match c.resolve().unwrap() {
            Model::Sensor(m) => assert_eq!(m.max_gap(), 3),
            _ => panic!(),
        }
    }

    #[test]
    fn bad_configs_are_config_errors() {
        assert!(matches!(ModelConfig::from_json(r#"{"model":"nope"}"#), Err(Error::Config(_))));
        let c = ModelConfig::from_json(r#"{"model":"absorbing","lo":1,"hi":0,"n":3}"#).unwrap();
        assert!(matches!(c.resolve(), Err(Error::Config(_))));
    }
}
