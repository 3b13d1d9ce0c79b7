//! Checks on the assumption `β <= inf_x p(x)`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};
use crate::factory::CoinSource;
use crate::regen::{AtomicKernel, KernelCoin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Passed,
    BudgetExceeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticOutcome {
    /// First `n` with running mean above `β`.
    pub stopped_at: Option<u64>,
    pub flips_used: u64,
    pub budget: u64,
    pub verdict: Verdict,
}

/// `⌈50 (1 - β) / β⌉`.
pub fn default_budget(beta: f64) -> u64 {
    (50.0 * (1.0 - beta) / beta).ceil().max(1.0) as u64
}

/// Flip the coin until the running mean exceeds `β`, or the budget runs out.
pub fn run_beta_diagnostic<C, R>(coin: &mut C, beta: f64, budget: u64, rng: &mut R) -> Result<DiagnosticOutcome>
where
    C: CoinSource + ?Sized,
    R: Rng + ?Sized,
{
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::config(format!("diagnostic beta = {beta} outside (0, 1)")));
    }
    if budget == 0 {
        return Err(Error::config("diagnostic budget must be positive"));
    }
    let mut heads = 0u64;
    for n in 1..=budget {
        if coin.flip(rng) {
            heads += 1;
        }
        if heads as f64 / n as f64 > beta {
            return Ok(DiagnosticOutcome {
                stopped_at: Some(n),
                flips_used: n,
                budget,
                verdict: Verdict::Passed,
            });
        }
    }
    Ok(DiagnosticOutcome {
        stopped_at: None,
        flips_used: budget,
        budget,
        verdict: Verdict::BudgetExceeded,
    })
}

/// Probability that the diagnostic never stops when `β = 1/m` and `p < β`:
/// `1 - p (m - 1) / (1 - p)`.
pub fn prob_never_stop(p: f64, m: u32) -> Result<f64> {
    if m < 2 {
        return Err(Error::config("m must be at least 2"));
    }
    let beta = 1.0 / m as f64;
    if !(0.0..beta).contains(&p) {
        return Err(Error::config(format!("p = {p} must lie in [0, 1/m = {beta})")));
    }
    Ok(1.0 - p * (m - 1) as f64 / (1.0 - p))
}

/// Total variation bound `1 - ε_true / ε_used` between the law targeted with
/// an overstated `ε` and the true invariant law. Zero when `ε_used <= ε_true`.
pub fn tv_sensitivity_bound(eps_true: f64, eps_used: f64) -> f64 {
    if eps_used <= eps_true {
        0.0
    } else {
        1.0 - eps_true / eps_used
    }
}

/// One-sided Clopper–Pearson lower bound on a binomial proportion.
pub fn clopper_pearson_lower(successes: u64, trials: u64, alpha: f64) -> f64 {
    if successes == 0 || trials == 0 {
        return 0.0;
    }
    let a = successes as f64;
    let b = (trials - successes + 1) as f64;
    Beta::new(a, b).map(|d| d.inverse_cdf(alpha)).unwrap_or(0.0)
}

/// Per-state evidence behind [`estimate_p_lower`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeEstimate {
    pub hits: u64,
    pub flips: u64,
    pub lower: f64,
}

/// Minimum over probe states of a 99% Clopper–Pearson lower bound on
/// `Π(x, {a})`, with the per-state evidence.
pub fn estimate_p_lower_detailed<K, R>(
    kernel: &K,
    probe_states: &[K::State],
    flips_per_state: u64,
    rng: &mut R,
) -> Result<(f64, Vec<ProbeEstimate>)>
where
    K: AtomicKernel + ?Sized,
    R: Rng + ?Sized,
{
    if probe_states.is_empty() {
        return Err(Error::config("no probe states"));
    }
    if flips_per_state == 0 {
        return Err(Error::config("flips_per_state must be positive"));
    }
    let mut out = Vec::with_capacity(probe_states.len());
    for x in probe_states {
        let mut coin = KernelCoin::new(kernel, x);
        let hits = (0..flips_per_state).filter(|_| coin.flip(rng)).count() as u64;
        if let Some(e) = coin.take_error() {
            return Err(e);
        }
        out.push(ProbeEstimate {
            hits,
            flips: flips_per_state,
            lower: clopper_pearson_lower(hits, flips_per_state, 0.01),
        });
    }
    let min = out.iter().map(|e| e.lower).fold(f64::INFINITY, f64::min);
    Ok((min, out))
}

pub fn estimate_p_lower<K, R>(kernel: &K, probe_states: &[K::State], flips_per_state: u64, rng: &mut R) -> Result<f64>
where
    K: AtomicKernel + ?Sized,
    R: Rng + ?Sized,
{
    estimate_p_lower_detailed(kernel, probe_states, flips_per_state, rng).map(|r| r.0)
}

/// States visited by a pilot run of the chain from the atom, deduplicated in
/// visiting order.
pub fn pilot_states<K, R>(kernel: &K, steps: usize, rng: &mut R) -> Result<Vec<K::State>>
where
    K: AtomicKernel + ?Sized,
    R: Rng + ?Sized,
{
    let mut x = kernel.atom();
    let mut seen = vec![x.clone()];
    for _ in 0..steps {
        x = kernel.try_sample(&x, rng)?;
        if !seen.contains(&x) {
            seen.push(x.clone());
        }
    }
    Ok(seen)
}
