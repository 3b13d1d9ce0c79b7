//! Concrete models and exact oracles.

pub mod absorbing;
pub mod config;
pub mod finite;
pub mod linear_gaussian;
pub mod normal;
pub mod pmmh;
pub mod sensor;

pub use absorbing::{absorbing_a_bound, AbsorbingMediumModel};
pub use finite::{finite_chain_oracle, FiniteChain, FiniteFkModel};
pub use linear_gaussian::{KalmanStep, LinearGaussianModel};
pub use pmmh::{AtomizedPmmhKernel, Likelihood, PmmhSettings, PmmhState};
pub use sensor::{sensor_a_bound, SensorHmmModel};
