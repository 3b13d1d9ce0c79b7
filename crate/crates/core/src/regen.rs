//! Perfect samplers for Markov kernels with a singleton atom.
//!
//! A kernel `Π` has an atom `a` with `p(x) = Π(x, {a}) >= β > ε` for every
//! state. Two exact samplers are provided: the imputation sampler, which runs
//! the chain and decides regeneration retrospectively with an `ε/p`-coin, and
//! the multigamma sampler, which draws the number of steps first and runs the
//! residual chain.

use std::fmt::Debug;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{run_beta_diagnostic, Verdict};
use crate::error::{Error, Result};
use crate::factory::{flip_eps_over_p_coin, flip_one_minus_p_coin, CoinSource, FactoryConfig};
use crate::stream::geometric;

/// A Markov kernel with a distinguished singleton atom.
///
/// Implementations must be immutable after construction; all randomness comes
/// through the stream argument.
pub trait AtomicKernel {
    type State: Clone + PartialEq + Debug;

    /// One draw from `Π(x, ·)`.
    fn sample<R: Rng + ?Sized>(&self, x: &Self::State, rng: &mut R) -> Self::State;

    /// Fallible form of [`AtomicKernel::sample`], for kernels whose draws
    /// can fail (for example, kernels built on particle filters). Samplers
    /// call this method.
    fn try_sample<R: Rng + ?Sized>(&self, x: &Self::State, rng: &mut R) -> Result<Self::State> {
        Ok(self.sample(x, rng))
    }

    fn atom(&self) -> Self::State;

    fn is_atom(&self, x: &Self::State) -> bool {
        *x == self.atom()
    }
}

/// The `p(x)`-coin: each flip draws `Y ~ Π(x, ·)` and reports whether `Y` is
/// the atom. These draws never become chain moves.
///
/// A failed kernel draw is parked and reported by [`KernelCoin::take_error`];
/// later flips return tails without drawing.
pub struct KernelCoin<'a, K: AtomicKernel + ?Sized> {
    kernel: &'a K,
    x: &'a K::State,
    flips: u64,
    error: Option<Error>,
}

impl<'a, K: AtomicKernel + ?Sized> KernelCoin<'a, K> {
    pub fn new(kernel: &'a K, x: &'a K::State) -> Self {
        Self {
            kernel,
            x,
            flips: 0,
            error: None,
        }
    }

    pub fn take_error(&mut self) -> Option<Error> {
        self.error.take()
    }

    /// Attach a parked kernel error in place of whatever the factory returned.
    fn settle<T>(&mut self, r: Result<T>) -> Result<T> {
        match self.error.take() {
            Some(e) => Err(e),
            None => r,
        }
    }
}

impl<K: AtomicKernel + ?Sized> CoinSource for KernelCoin<'_, K> {
    fn flip<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        self.flips += 1;
        if self.error.is_some() {
            return false;
        }
        match self.kernel.try_sample(self.x, rng) {
            Ok(y) => self.kernel.is_atom(&y),
            Err(e) => {
                self.error = Some(e);
                false
            }
        }
    }

    fn flips_used(&self) -> u64 {
        self.flips
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cost {
    /// Draws from `Π` that moved the chain, including rejected residual draws.
    pub kernel_draws: u64,
    /// `(1-p)/(1-ε)`-coins consumed.
    pub subcoin_flips: u64,
    /// Raw `p`-coin flips, each one extra draw from `Π`.
    pub raw_flips: u64,
}

impl Cost {
    pub fn add(&mut self, other: &Cost) {
        self.kernel_draws += other.kernel_draws;
        self.subcoin_flips += other.subcoin_flips;
        self.raw_flips += other.raw_flips;
    }
}

/// Limits that turn non-termination into an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    /// Draws per call of [`sample_residual`].
    pub rejection: u64,
    /// Kernel draws per tour or per perfect sample.
    pub tour_length: u64,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            rejection: 1_000_000,
            tour_length: 10_000_000,
        }
    }
}

/// One excursion of the split chain: the draws after leaving the atom, up to
/// and including the draw that returns to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tour<S> {
    pub states: Vec<S>,
    pub cost: Cost,
}

impl<S> Tour<S> {
    pub fn length(&self) -> usize {
        self.states.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Imputation,
    Multigamma,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "imputation" => Ok(Algorithm::Imputation),
            "multigamma" => Ok(Algorithm::Multigamma),
            other => Err(Error::config(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Per-sample record of the optional `β` diagnostic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticTrace {
    pub states_checked: u64,
    /// Diagnostic flips, kept apart from sampler cost.
    pub flips: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfectSampleReport<S> {
    pub sample: S,
    pub algorithm: Algorithm,
    pub cost: Cost,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diagnostics: Option<DiagnosticTrace>,
}

/// Draw from `Π(x, ·)` until the draw is not the atom. Returns the state and
/// the number of draws used.
pub fn sample_residual<K, R>(kernel: &K, x: &K::State, budget: u64, rng: &mut R) -> Result<(K::State, u64)>
where
    K: AtomicKernel + ?Sized,
    R: Rng + ?Sized,
{
    for draws in 1..=budget {
        let y = kernel.try_sample(x, rng)?;
        if !kernel.is_atom(&y) {
            return Ok((y, draws));
        }
    }
    Err(Error::budget(budget))
}

/// Configurable perfect sampler.
#[derive(Debug, Clone, Copy)]
pub struct PerfectSampler<'a, K: ?Sized> {
    pub kernel: &'a K,
    pub cfg: FactoryConfig,
    pub budgets: Budgets,
    /// Run the `β` diagnostic with this flip budget at every visited state.
    pub diagnose: Option<u64>,
}

impl<'a, K: AtomicKernel + ?Sized> PerfectSampler<'a, K> {
    pub fn new(kernel: &'a K, cfg: FactoryConfig) -> Self {
        Self {
            kernel,
            cfg,
            budgets: Budgets::default(),
            diagnose: None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, algorithm: Algorithm, rng: &mut R) -> Result<PerfectSampleReport<K::State>> {
        match algorithm {
            Algorithm::Imputation => self.imputation(rng),
            Algorithm::Multigamma => self.multigamma(rng),
        }
    }

    fn check_state<R: Rng + ?Sized>(
        &self,
        x: &K::State,
        trace: &mut Option<DiagnosticTrace>,
        rng: &mut R,
    ) -> Result<()> {
        let (Some(budget), Some(t)) = (self.diagnose, trace.as_mut()) else {
            return Ok(());
        };
        let mut coin = KernelCoin::new(self.kernel, x);
        let out = run_beta_diagnostic(&mut coin, self.cfg.beta, budget, rng);
        let out = coin.settle(out)?;
        t.states_checked += 1;
        t.flips += out.flips_used;
        if out.verdict == Verdict::BudgetExceeded {
            return Err(Error::DiagnosticFailed(format!(
                "p(x) did not exceed beta = {} within {budget} flips at state {x:?}",
                self.cfg.beta
            )));
        }
        Ok(())
    }

    fn with_state<T>(&self, x: &K::State, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            Error::BudgetExceeded { flips, .. } => Error::BudgetExceeded {
                flips,
                context: Some(format!(
                    "at state {x:?}; beta = {} is likely above the true minimum of p(x)",
                    self.cfg.beta
                )),
            },
            other => other,
        })
    }

    /// Run the chain from the atom; whenever a draw lands on the atom, flip an
    /// `ε/p(x)`-coin at the previous state `x` and output `x` on a head.
    pub fn imputation<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PerfectSampleReport<K::State>> {
        self.cfg.validate()?;
        let mut cost = Cost::default();
        let mut trace = self.diagnose.map(|_| DiagnosticTrace::default());
        let mut prev = self.kernel.atom();
        self.check_state(&prev, &mut trace, rng)?;
        loop {
            if cost.kernel_draws >= self.budgets.tour_length {
                return Err(Error::budget(cost.kernel_draws));
            }
            let next = self.kernel.try_sample(&prev, rng)?;
            cost.kernel_draws += 1;
            if self.kernel.is_atom(&next) {
                let mut coin = KernelCoin::new(self.kernel, &prev);
                let race = flip_eps_over_p_coin(&mut coin, &self.cfg, rng);
                cost.raw_flips += coin.flips_used();
                let race = coin.settle(race);
                let race = self.with_state(&prev, race)?;
                cost.subcoin_flips += race.subcoin_flips;
                if race.bit {
                    return Ok(PerfectSampleReport {
                        sample: prev,
                        algorithm: Algorithm::Imputation,
                        cost,
                        diagnostics: trace,
                    });
                }
            }
            prev = next;
            self.check_state(&prev, &mut trace, rng)?;
        }
    }

    /// Draw `N ~ Geometric(ε)`, start at the atom and take `N - 1` steps of the
    /// kernel `(1-p)/(1-ε) R + (p-ε)/(1-ε) δ_a`.
    pub fn multigamma<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PerfectSampleReport<K::State>> {
        self.cfg.validate()?;
        let mut cost = Cost::default();
        let mut trace = self.diagnose.map(|_| DiagnosticTrace::default());
        let steps = geometric(rng, self.cfg.eps) - 1;
        let mut x = self.kernel.atom();
        for _ in 0..steps {
            self.check_state(&x, &mut trace, rng)?;
            let mut coin = KernelCoin::new(self.kernel, &x);
            let move_off = flip_one_minus_p_coin(&mut coin, &self.cfg, rng);
            cost.raw_flips += coin.flips_used();
            let move_off = coin.settle(move_off);
            cost.subcoin_flips += 1;
            if self.with_state(&x, move_off)? {
                let remaining = self.budgets.tour_length.saturating_sub(cost.kernel_draws);
                let (y, draws) = sample_residual(self.kernel, &x, self.budgets.rejection.min(remaining), rng)?;
                cost.kernel_draws += draws;
                x = y;
            } else {
                x = self.kernel.atom();
            }
        }
        Ok(PerfectSampleReport {
            sample: x,
            algorithm: Algorithm::Multigamma,
            cost,
            diagnostics: trace,
        })
    }
}

pub fn perfect_sample_imputation<K, R>(kernel: &K, cfg: &FactoryConfig, rng: &mut R) -> Result<PerfectSampleReport<K::State>>
where
    K: AtomicKernel + ?Sized,
    R: Rng + ?Sized,
{
    PerfectSampler::new(kernel, *cfg).imputation(rng)
}

pub fn perfect_sample_multigamma<K, R>(kernel: &K, cfg: &FactoryConfig, rng: &mut R) -> Result<PerfectSampleReport<K::State>>
where
    K: AtomicKernel + ?Sized,
    R: Rng + ?Sized,
{
    PerfectSampler::new(kernel, *cfg).multigamma(rng)
}

/// Run the natural split chain from the atom until it returns.
pub fn simulate_tour<K, R>(kernel: &K, budget: u64, rng: &mut R) -> Result<Tour<K::State>>
where
    K: AtomicKernel + ?Sized,
    R: Rng + ?Sized,
{
    let mut states = Vec::new();
    let mut x = kernel.atom();
    loop {
        if states.len() as u64 >= budget {
            return Err(Error::budget(states.len() as u64));
        }
        let y = kernel.try_sample(&x, rng)?;
        let done = kernel.is_atom(&y);
        states.push(y.clone());
        if done {
            let n = states.len() as u64;
            return Ok(Tour {
                states,
                cost: Cost {
                    kernel_draws: n,
                    ..Cost::default()
                },
            });
        }
        x = y;
    }
}
