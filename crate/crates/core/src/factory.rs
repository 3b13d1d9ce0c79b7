//! Bernoulli factories driven by coins of unknown bias.
//!
//! Every function here turns flips of a `p`-coin into a flip of some
//! `f(p)`-coin without ever learning `p`. The workhorse is the linear factory
//! [`flip_scaled_coin`], which produces a `C·q`-coin from a `q`-coin whenever
//! `q` is known to lie below `b` with `C·b < 1`.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::{bernoulli, geometric_failures};

/// Default hard limit on raw coin flips per factory call.
pub const DEFAULT_FLIP_BUDGET: u64 = 10_000_000;

/// A source of independent Bernoulli draws with an unknown success
/// probability.
pub trait CoinSource {
    fn flip<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool;

    /// Number of flips produced so far.
    fn flips_used(&self) -> u64;

    /// The true bias, when known (synthetic coins only).
    fn true_p(&self) -> Option<f64> {
        None
    }
}

/// A synthetic coin with a known bias.
#[derive(Debug, Clone)]
pub struct BernoulliCoin {
    p: f64,
    flips: u64,
}

impl BernoulliCoin {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(format!("coin bias {p} outside [0, 1]")));
        }
        Ok(Self { p, flips: 0 })
    }
}

impl CoinSource for BernoulliCoin {
    fn flip<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        self.flips += 1;
        bernoulli(rng, self.p)
    }

    fn flips_used(&self) -> u64 {
        self.flips
    }

    fn true_p(&self) -> Option<f64> {
        Some(self.p)
    }
}

/// A coin backed by an arbitrary closure.
pub struct FnCoin<F> {
    f: F,
    flips: u64,
}

impl<F: FnMut(&mut dyn RngCore) -> bool> FnCoin<F> {
    pub fn new(f: F) -> Self {
        Self { f, flips: 0 }
    }
}

impl<F: FnMut(&mut dyn RngCore) -> bool> CoinSource for FnCoin<F> {
    fn flip<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        self.flips += 1;
        (self.f)(&mut DynRng(rng))
    }

    fn flips_used(&self) -> u64 {
        self.flips
    }
}

/// Sized wrapper so an unsized generator can be passed as `&mut dyn RngCore`.
struct DynRng<'a, R: ?Sized>(&'a mut R);

impl<R: RngCore + ?Sized> RngCore for DynRng<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Negates every flip of the wrapped coin, turning a `p`-coin into a
/// `(1-p)`-coin. Flips are counted by the inner coin.
pub struct Complement<'a, C: ?Sized>(pub &'a mut C);

impl<C: CoinSource + ?Sized> CoinSource for Complement<'_, C> {
    fn flip<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        !self.0.flip(rng)
    }

    fn flips_used(&self) -> u64 {
        self.0.flips_used()
    }

    fn true_p(&self) -> Option<f64> {
        self.0.true_p().map(|p| 1.0 - p)
    }
}

/// Parameters shared by the sampler-facing factories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactoryConfig {
    /// Lower bound on every `p(x)`.
    pub beta: f64,
    pub eps: f64,
    /// The `γ` of the linear factory.
    pub gamma_split: f64,
    pub flip_budget: u64,
}

impl FactoryConfig {
    pub fn new(beta: f64, eps: f64) -> Result<Self> {
        let cfg = Self {
            beta,
            eps,
            gamma_split: 0.5,
            flip_budget: DEFAULT_FLIP_BUDGET,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `eps = beta / 2`.
    pub fn with_beta(beta: f64) -> Result<Self> {
        Self::new(beta, beta / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::config(format!("beta = {} outside (0, 1]", self.beta)));
        }
        if !(self.eps > 0.0 && self.eps < self.beta) {
            return Err(Error::config(format!(
                "eps = {} must lie in (0, beta = {})",
                self.eps, self.beta
            )));
        }
        if !(self.gamma_split > 0.0 && self.gamma_split < 1.0) {
            return Err(Error::config("gamma_split must lie in (0, 1)"));
        }
        if self.flip_budget == 0 {
            return Err(Error::config("flip budget must be positive"));
        }
        Ok(())
    }
}

/// Flip a `C·q`-coin using a `q`-coin with `q <= bound_b`, `C·bound_b < 1`.
///
/// A random walk on the integers starts at 1. A head moves it down by one; a
/// tail moves it up by `G` with `P(G = j) = (1 - 1/C) C^-j`, so that
/// `(Cq)^i` is a martingale. Hitting 0 outputs 1. Reaching a level `i >= k`
/// is thinned by `(1 + γε)^-i`; survivors continue with `C` inflated by
/// `1 + γε` and the slack `ε` reduced accordingly.
pub fn flip_scaled_coin<C, R>(
    coin: &mut C,
    c: f64,
    bound_b: f64,
    gamma: f64,
    budget: u64,
    rng: &mut R,
) -> Result<bool>
where
    C: CoinSource + ?Sized,
    R: Rng + ?Sized,
{
    if !(c > 1.0) || !(bound_b >= 0.0) || !(c * bound_b < 1.0) {
        return Err(Error::config(format!(
            "scaled coin needs C > 1 and C*b < 1, got C = {c}, b = {bound_b}"
        )));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::config("gamma must lie in (0, 1)"));
    }
    let start = coin.flips_used();
    let mut c = c;
    let mut eps = (1.0 - c * bound_b).min(0.644);
    let mut i: u64 = 1;
    loop {
        let k = (2.3 / (gamma * eps)).ceil() as u64;
        let tail = 1.0 - 1.0 / c;
        while i > 0 && i < k {
            let used = coin.flips_used() - start;
            if used >= budget {
                return Err(Error::budget(used));
            }
            if coin.flip(rng) {
                i -= 1;
            } else {
                i = i.saturating_add(geometric_failures(rng, tail));
            }
        }
        if i == 0 {
            return Ok(true);
        }
        let keep = (-(i as f64) * (gamma * eps).ln_1p()).exp();
        if !bernoulli(rng, keep) {
            return Ok(false);
        }
        c *= 1.0 + gamma * eps;
        eps = 1.0 - (1.0 - eps) * (1.0 + gamma * eps);
    }
}

/// Flip a `(1-p)/(1-ε)`-coin from a `p`-coin with `p >= β > ε`.
pub fn flip_one_minus_p_coin<C, R>(coin: &mut C, cfg: &FactoryConfig, rng: &mut R) -> Result<bool>
where
    C: CoinSource + ?Sized,
    R: Rng + ?Sized,
{
    flip_one_minus_p_coin_budget(coin, cfg, cfg.flip_budget, rng)
}

fn flip_one_minus_p_coin_budget<C, R>(
    coin: &mut C,
    cfg: &FactoryConfig,
    budget: u64,
    rng: &mut R,
) -> Result<bool>
where
    C: CoinSource + ?Sized,
    R: Rng + ?Sized,
{
    let mut q = Complement(coin);
    flip_scaled_coin(
        &mut q,
        1.0 / (1.0 - cfg.eps),
        1.0 - cfg.beta,
        cfg.gamma_split,
        budget,
        rng,
    )
}

/// Result of an `ε/p` race.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RaceOutcome {
    pub bit: bool,
    /// Number of `(1-p)/(1-ε)`-coins consumed.
    pub subcoin_flips: u64,
}

/// Flip an `ε/p`-coin from a `p`-coin with `p >= β > ε`.
///
/// Each round flips an `ε`-coin (a head wins with 1), then a
/// `(p-ε)/(1-ε)`-coin (a head wins with 0).
pub fn flip_eps_over_p_coin<C, R>(coin: &mut C, cfg: &FactoryConfig, rng: &mut R) -> Result<RaceOutcome>
where
    C: CoinSource + ?Sized,
    R: Rng + ?Sized,
{
    let start = coin.flips_used();
    race(cfg.eps, rng, |rng| {
        let used = coin.flips_used() - start;
        if used >= cfg.flip_budget {
            return Err(Error::budget(used));
        }
        flip_one_minus_p_coin_budget(coin, cfg, cfg.flip_budget - used, rng).map_err(|e| match e {
            Error::BudgetExceeded { .. } => Error::budget(coin.flips_used() - start),
            other => other,
        })
    })
}

fn race<R, S>(eps: f64, rng: &mut R, mut one_minus_p: S) -> Result<RaceOutcome>
where
    R: Rng + ?Sized,
    S: FnMut(&mut R) -> Result<bool>,
{
    let mut subcoin_flips = 0;
    loop {
        if bernoulli(rng, eps) {
            return Ok(RaceOutcome { bit: true, subcoin_flips });
        }
        subcoin_flips += 1;
        if !one_minus_p(rng)? {
            return Ok(RaceOutcome { bit: false, subcoin_flips });
        }
    }
}

/// A real function `φ` integrated against a sampleable law `μ`, with a known
/// sup norm and a known positive lower bound on `μ(φ)`.
pub trait SignProblem {
    type Point;
    fn sample_mu<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Point;
    fn phi(&self, x: &Self::Point) -> f64;
    /// Lower bound on `μ(φ)`.
    fn delta(&self) -> f64;
    /// Upper bound on `|φ|`.
    fn phi_sup(&self) -> f64;
}

/// [`SignProblem`] assembled from closures.
pub struct SignProblemSpec<S, F> {
    pub mu_sampler: S,
    pub phi: F,
    pub delta: f64,
    pub phi_sup: f64,
}

impl<X, S, F> SignProblem for SignProblemSpec<S, F>
where
    S: Fn(&mut dyn RngCore) -> X,
    F: Fn(&X) -> f64,
{
    type Point = X;

    fn sample_mu<R: Rng + ?Sized>(&self, rng: &mut R) -> X {
        (self.mu_sampler)(&mut DynRng(rng))
    }

    fn phi(&self, x: &X) -> f64 {
        (self.phi)(x)
    }

    fn delta(&self) -> f64 {
        self.delta
    }

    fn phi_sup(&self) -> f64 {
        self.phi_sup
    }
}

/// Maximum `μ` draws spent finding one accepted point from `μ_|φ|`.
pub const DEFAULT_REJECTION_BUDGET: u64 = 1_000_000;

fn checked_phi<P: SignProblem + ?Sized>(spec: &P, x: &P::Point) -> Result<f64> {
    let v = spec.phi(x);
    if !(v.abs() <= spec.phi_sup()) {
        return Err(Error::contract(format!(
            "|phi(x)| = {} exceeds phi_sup = {}",
            v.abs(),
            spec.phi_sup()
        )));
    }
    Ok(v)
}

struct NegativeSignCoin<'a, P: ?Sized> {
    spec: &'a P,
    flips: u64,
    error: Option<Error>,
}

impl<P: SignProblem + ?Sized> CoinSource for NegativeSignCoin<'_, P> {
    fn flip<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        self.flips += 1;
        if self.error.is_some() {
            return false;
        }
        let sup = self.spec.phi_sup();
        for _ in 0..DEFAULT_REJECTION_BUDGET {
            let z = self.spec.sample_mu(rng);
            let v = match checked_phi(self.spec, &z) {
                Ok(v) => v,
                Err(e) => {
                    self.error = Some(e);
                    return false;
                }
            };
            if bernoulli(rng, v.abs() / sup) {
                return v < 0.0;
            }
        }
        self.error = Some(Error::budget(DEFAULT_REJECTION_BUDGET));
        false
    }

    fn flips_used(&self) -> u64 {
        self.flips
    }
}

/// Unbiased, almost surely nonnegative estimate of `μ(φ)` for a signed `φ`.
///
/// Returns `|φ(ξ)|(1 - Y)` with `ξ ~ μ` and `Y` a `2q`-coin, where `q` is the
/// mass of `{φ < 0}` under `μ_|φ| ∝ |φ| μ`.
pub fn sign_problem_estimate<P, R>(spec: &P, rng: &mut R) -> Result<f64>
where
    P: SignProblem + ?Sized,
    R: Rng + ?Sized,
{
    let sup = spec.phi_sup();
    let delta = spec.delta();
    if !(delta > 0.0 && delta <= sup && sup.is_finite()) {
        return Err(Error::config(format!(
            "need 0 < delta <= phi_sup < inf, got delta = {delta}, phi_sup = {sup}"
        )));
    }
    let xi = spec.sample_mu(rng);
    let w = checked_phi(spec, &xi)?.abs();
    let mut coin = NegativeSignCoin {
        spec,
        flips: 0,
        error: None,
    };
    let bound = 0.5 * (1.0 - delta / sup);
    let y = flip_scaled_coin(&mut coin, 2.0, bound, 0.5, DEFAULT_FLIP_BUDGET, rng);
    if let Some(e) = coin.error {
        return Err(e);
    }
    Ok(if y? { 0.0 } else { w })
}

struct Shifted<'a, P: ?Sized> {
    inner: &'a P,
    shift: f64,
    delta: f64,
    sup: f64,
    lo: f64,
    hi: f64,
}

impl<P: SignProblem + ?Sized> SignProblem for Shifted<'_, P> {
    type Point = P::Point;

    fn sample_mu<R: Rng + ?Sized>(&self, rng: &mut R) -> P::Point {
        self.inner.sample_mu(rng)
    }

    fn phi(&self, x: &P::Point) -> f64 {
        let v = self.inner.phi(x);
        if v < self.lo || v > self.hi {
            // Pushes the value past the sup check.
            return f64::INFINITY;
        }
        v - self.shift
    }

    fn delta(&self) -> f64 {
        self.delta
    }

    fn phi_sup(&self) -> f64 {
        self.sup
    }
}

/// Unbiased estimate `W` of `μ(φ)` with `b <= W <= b + max(b - a, c - b)`,
/// given `a <= φ <= c` and `μ(φ) >= δ > b`.
pub fn constrained_unbiased_estimate<P, R>(spec: &P, a: f64, b: f64, c: f64, rng: &mut R) -> Result<f64>
where
    P: SignProblem + ?Sized,
    R: Rng + ?Sized,
{
    if !(a <= b && b <= c) {
        return Err(Error::config(format!("need a <= b <= c, got {a}, {b}, {c}")));
    }
    if !(spec.delta() > b) {
        return Err(Error::config(format!(
            "delta = {} must exceed the lower target b = {b}",
            spec.delta()
        )));
    }
    let sup = (b - a).max(c - b);
    let shifted = Shifted {
        inner: spec,
        shift: b,
        delta: (spec.delta() - b).min(sup),
        sup,
        lo: a,
        hi: c,
    };
    Ok(b + sign_problem_estimate(&shifted, rng)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::from_seed;

    #[test]
    fn zero_coin_never_fires() {
        let mut rng = from_seed(11);
        let mut coin = BernoulliCoin::new(0.0).unwrap();
        for _ in 0..1000 {
            assert!(!flip_scaled_coin(&mut coin, 1.5, 0.5, 0.5, DEFAULT_FLIP_BUDGET, &mut rng).unwrap());
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = from_seed(0);
        let mut coin = BernoulliCoin::new(0.3).unwrap();
        assert!(matches!(
            flip_scaled_coin(&mut coin, 2.0, 0.5, 0.5, 10, &mut rng),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            flip_scaled_coin(&mut coin, 1.0, 0.5, 0.5, 10, &mut rng),
            Err(Error::Config(_))
        ));
        assert!(FactoryConfig::new(0.3, 0.3).is_err());
        assert!(FactoryConfig::new(0.3, 0.1).is_ok());
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let mut rng = from_seed(5);
        let mut coin = BernoulliCoin::new(0.0).unwrap();
        // q-coin never heads: the walk only climbs, but very slowly when C is
        // close to one, so a tiny budget runs out first.
        let err = flip_scaled_coin(&mut coin, 1.0001, 0.0, 0.5, 3, &mut rng);
        match err {
            Err(Error::BudgetExceeded { flips, .. }) => assert_eq!(flips, 3),
            Ok(false) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn one_minus_p_of_certain_coin_is_zero() {
        let mut rng = from_seed(2);
        let cfg = FactoryConfig::new(0.5, 0.25).unwrap();
        let mut coin = BernoulliCoin::new(1.0).unwrap();
        for _ in 0..1000 {
            assert!(!flip_one_minus_p_coin(&mut coin, &cfg, &mut rng).unwrap());
        }
    }

    #[test]
    fn race_at_boundary_always_one() {
        // p = eps: the (p - eps)/(1 - eps) coin never fires.
        let mut rng = from_seed(3);
        for _ in 0..1000 {
            let out = race(0.2, &mut rng, |_| Ok(true)).unwrap();
            assert!(out.bit);
        }
    }

    #[test]
    fn determinism() {
        let cfg = FactoryConfig::new(0.4, 0.2).unwrap();
        let run = || {
            let mut rng = from_seed(99);
            let mut coin = BernoulliCoin::new(0.6).unwrap();
            let bits: Vec<bool> = (0..200)
                .map(|_| flip_eps_over_p_coin(&mut coin, &cfg, &mut rng).unwrap().bit)
                .collect();
            (bits, coin.flips_used())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn nonnegative_phi_gives_abs_value() {
        let spec = SignProblemSpec {
            mu_sampler: |r: &mut dyn RngCore| r.random::<f64>(),
            phi: |x: &f64| *x,
            delta: 0.1,
            phi_sup: 1.0,
        };
        let mut rng = from_seed(4);
        for _ in 0..500 {
            let mut probe = rng.clone();
            let xi = spec.sample_mu(&mut probe);
            let w = sign_problem_estimate(&spec, &mut rng).unwrap();
            assert_eq!(w, xi);
        }
    }

    #[test]
    fn contract_violation_on_large_phi() {
        let spec = SignProblemSpec {
            mu_sampler: |_: &mut dyn RngCore| 2.0f64,
            phi: |x: &f64| *x,
            delta: 0.5,
            phi_sup: 1.0,
        };
        let mut rng = from_seed(4);
        assert!(matches!(
            sign_problem_estimate(&spec, &mut rng),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn constrained_requires_delta_above_b() {
        let spec = SignProblemSpec {
            mu_sampler: |r: &mut dyn RngCore| r.random::<f64>(),
            phi: |x: &f64| *x,
            delta: 0.1,
            phi_sup: 1.0,
        };
        let mut rng = from_seed(4);
        assert!(matches!(
            constrained_unbiased_estimate(&spec, 0.0, 0.2, 1.0, &mut rng),
            Err(Error::Config(_))
        ));
    }
}
