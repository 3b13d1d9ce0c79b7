//! Feynman–Kac models extended with an artificial atom.
//!
//! The extended state space adds a tagged point `a`. The initial law puts mass
//! `b` on it, the transitions keep it absorbing, and its potential at step `t`
//! is `ψ_t`. The extended path measure is then the mixture
//! `k·π + (1 - k)·δ_{(a, …, a)}`, so an exact draw from it that is not the atom
//! path is an exact draw from `π`. The i-cSMC kernel on the extended model has
//! the atom path as a singleton atom, which is what the regeneration samplers
//! need.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factory::FactoryConfig;
use crate::regen::{AtomicKernel, Cost, DiagnosticTrace, PerfectSampler};
use crate::smc::{estimate_pi_f, icsmc_step, log_mean_exp, run_smc, FeynmanKacModel};
use crate::stream::bernoulli;

pub use crate::regen::Algorithm;

/// A point of the base space, or the atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZExt<Z> {
    Point(Z),
    Atom,
}

impl<Z> ZExt<Z> {
    pub fn is_atom(&self) -> bool {
        matches!(self, ZExt::Atom)
    }

    pub fn point(&self) -> Option<&Z> {
        match self {
            ZExt::Point(z) => Some(z),
            ZExt::Atom => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtendedModel<M> {
    pub base: M,
    pub b: f64,
    log_psi: Vec<f64>,
}

impl<M: FeynmanKacModel> ExtendedModel<M> {
    pub fn psi(&self) -> Vec<f64> {
        self.log_psi.iter().map(|l| l.exp()).collect()
    }

    pub fn log_psi(&self) -> &[f64] {
        &self.log_psi
    }
}

/// Attach an atom with prior weight `b` and potentials `ψ`.
pub fn extend_model<M: FeynmanKacModel>(base: M, b: f64, psi: &[f64]) -> Result<ExtendedModel<M>> {
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::config(format!("atom weight b = {b} outside (0, 1)")));
    }
    if psi.len() != base.horizon() {
        return Err(Error::config(format!(
            "{} psi values for a horizon of {}",
            psi.len(),
            base.horizon()
        )));
    }
    if let Some(bad) = psi.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::config(format!("psi values must be positive and finite, got {bad}")));
    }
    Ok(ExtendedModel {
        base,
        b,
        log_psi: psi.iter().map(|p| p.ln()).collect(),
    })
}

impl<M: FeynmanKacModel> FeynmanKacModel for ExtendedModel<M> {
    type Point = ZExt<M::Point>;

    fn horizon(&self) -> usize {
        self.base.horizon()
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Point {
        if bernoulli(rng, self.b) {
            ZExt::Atom
        } else {
            ZExt::Point(self.base.sample_initial(rng))
        }
    }

    fn sample_transition<R: Rng + ?Sized>(&self, t: usize, from: &Self::Point, rng: &mut R) -> Self::Point {
        match from {
            ZExt::Atom => ZExt::Atom,
            ZExt::Point(z) => ZExt::Point(self.base.sample_transition(t, z, rng)),
        }
    }

    fn log_potential(&self, t: usize, z: &Self::Point) -> f64 {
        match z {
            ZExt::Atom => self.log_psi[t],
            ZExt::Point(z) => self.base.log_potential(t, z),
        }
    }

    fn log_potential_upper(&self, t: usize) -> Option<f64> {
        self.base.log_potential_upper(t).map(|u| u.max(self.log_psi[t]))
    }
}

/// Mass `k` of the base law in the extended path measure, from logarithms of
/// `Π ψ_t` and `γ_n(1)`.
pub fn mixture_weight_k_log(b: f64, log_psi_sum: f64, log_gamma_n1: f64) -> f64 {
    // k = 1 / (1 + b/(1-b) · exp(Σ log ψ - log γ)).
    let log_odds = (b / (1.0 - b)).ln() + log_psi_sum - log_gamma_n1;
    if log_odds > 0.0 {
        let e = (-log_odds).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + log_odds.exp())
    }
}

/// `(1-b) / (1-b + b Π ψ_t / γ_n(1))`.
pub fn mixture_weight_k(b: f64, psi: &[f64], gamma_n1: f64) -> f64 {
    let s: f64 = psi.iter().map(|p| p.ln()).sum();
    mixture_weight_k_log(b, s, gamma_n1.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    pub n_prime: usize,
    pub reps: usize,
    /// Atom prior weight used for the atom-mass runs.
    pub b: f64,
    /// Multiplier applied to the lower confidence bound.
    pub safety: f64,
    /// One-sided confidence level of the lower bound.
    pub confidence: f64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            n_prime: 10_000,
            reps: 20,
            b: 0.5,
            safety: 0.5,
            confidence: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub psi: Vec<f64>,
    pub log_psi: Vec<f64>,
    pub atom_mass_estimates: Vec<f64>,
    pub atom_mass_mean: f64,
    /// Hoeffding lower confidence bound on the atom mass.
    pub atom_mass_lower: f64,
    pub beta_recommendation: f64,
    pub n_prime: usize,
    pub reps: usize,
    pub b: f64,
}

/// Set `ψ_t` to the mean potential at step `t` of one large particle filter,
/// then estimate the extended-model atom mass from `reps` further runs.
pub fn tune_psi<M, R>(base: &M, cfg: &TuningConfig, rng: &mut R) -> Result<TuningReport>
where
    M: FeynmanKacModel,
    R: Rng + ?Sized,
{
    if cfg.n_prime < 2 {
        return Err(Error::config("n_prime must be at least 2"));
    }
    if cfg.reps == 0 {
        return Err(Error::config("reps must be positive"));
    }
    if !(cfg.confidence > 0.0 && cfg.confidence < 1.0) {
        return Err(Error::config("confidence must lie in (0, 1)"));
    }
    let v = run_smc(base, cfg.n_prime, rng)?;
    let log_psi: Vec<f64> = v.log_potentials.iter().map(|lg| log_mean_exp(lg)).collect();
    let psi: Vec<f64> = log_psi.iter().map(|l| l.exp()).collect();
    let ext = extend_model(base, cfg.b, &psi)?;
    let mut estimates = Vec::with_capacity(cfg.reps);
    for _ in 0..cfg.reps {
        let v = run_smc(&ext, cfg.n_prime, rng)?;
        estimates.push(estimate_pi_f(&v, |path| {
            if path.last().is_some_and(ZExt::is_atom) {
                1.0
            } else {
                0.0
            }
        })?);
    }
    let mean = estimates.iter().sum::<f64>() / cfg.reps as f64;
    let half_width = ((1.0 / (1.0 - cfg.confidence)).ln() / (2.0 * cfg.reps as f64)).sqrt();
    let lower = (mean - half_width).max(0.0);
    Ok(TuningReport {
        psi,
        log_psi,
        atom_mass_estimates: estimates,
        atom_mass_mean: mean,
        atom_mass_lower: lower,
        beta_recommendation: lower * cfg.safety,
        n_prime: cfg.n_prime,
        reps: cfg.reps,
        b: cfg.b,
    })
}

/// `((N-1) / (N + 2(F-1)))^n`.
pub fn epsilon_n_bound(n_particles: usize, f: f64, n: usize) -> f64 {
    let nn = n_particles as f64;
    (((nn - 1.0) / (nn + 2.0 * (f - 1.0))).ln() * n as f64).exp()
}

/// `(1 + 2(F-1)/N)^n`, the bound on the renormalized normalizing-constant
/// estimate.
pub fn rn_derivative_bound(n_particles: usize, f: f64, n: usize) -> f64 {
    ((2.0 * (f - 1.0) / n_particles as f64).ln_1p() * n as f64).exp()
}

/// Smallest `N >= 2` with `epsilon_n_bound(N, F, n) >= target`, solved in
/// closed form: with `r = target^(1/n)`, `N >= (1 + 2r(F-1)) / (1 - r)`.
pub fn recommended_particles(f: f64, n: usize, target: f64) -> usize {
    let log_r = target.ln() / n as f64;
    let r = log_r.exp();
    let mut nn = ((1.0 + 2.0 * r * (f - 1.0)) / -log_r.exp_m1()).ceil().max(2.0) as usize;
    // Guard against rounding at the boundary.
    while epsilon_n_bound(nn, f, n) < target {
        nn += 1;
    }
    nn
}

/// The linear rule `N = ⌈-2(F-1) n / ln(target)⌉`. It matches the
/// asymptotic rate but can undershoot `target` for the finite-`N` bound;
/// prefer [`recommended_particles`].
pub fn linear_particles_rule(f: f64, n: usize, target: f64) -> usize {
    (-2.0 * (f - 1.0) * n as f64 / target.ln()).ceil().max(2.0) as usize
}

/// `F` from one-step suprema: the potential ratio times the kernel density
/// ratio.
pub fn bound_f_one_step(sup_ratio_g_over_mg: f64, sup_kernel_ratio: f64) -> f64 {
    sup_ratio_g_over_mg * sup_kernel_ratio
}

/// `F` from `m`-step suprema.
pub fn bound_f_m_step(sup_potential_product_ratio: f64, sup_m_step_kernel_ratio: f64) -> f64 {
    sup_potential_product_ratio * sup_m_step_kernel_ratio
}

/// Bound `F·E^n` on the forgetting constant of the extended model, where
/// `E >= 1` bounds the ratio between `ψ_t` and the exact increment.
pub fn bound_f_check(f: f64, e: f64, n: usize) -> f64 {
    (f.ln() + n as f64 * e.ln()).exp()
}

/// The i-cSMC kernel on the extended model; its atom is the all-atom path.
pub struct IcsmcAtomKernel<'a, M> {
    pub model: &'a ExtendedModel<M>,
    pub n_particles: usize,
}

impl<M: FeynmanKacModel> AtomicKernel for IcsmcAtomKernel<'_, M> {
    type State = Vec<ZExt<M::Point>>;

    fn sample<R: Rng + ?Sized>(&self, x: &Self::State, rng: &mut R) -> Self::State {
        self.try_sample(x, rng)
            .expect("i-cSMC move from a positive-weight path cannot lose every particle")
    }

    fn try_sample<R: Rng + ?Sized>(&self, x: &Self::State, rng: &mut R) -> Result<Self::State> {
        icsmc_step(self.model, self.n_particles, x, rng)
    }

    fn atom(&self) -> Self::State {
        vec![ZExt::Atom; self.model.horizon()]
    }

    fn is_atom(&self, x: &Self::State) -> bool {
        x.iter().all(ZExt::is_atom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSampleReport<Z> {
    pub path: Vec<Z>,
    /// Perfect draws of the extended law used, including atom outcomes.
    pub attempts: u64,
    pub cost: Cost,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diagnostics: Option<DiagnosticTrace>,
}

/// Settings for [`perfect_sample_path`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSamplerConfig {
    pub n_particles: usize,
    pub b: f64,
    pub factory: FactoryConfig,
    pub algorithm: Algorithm,
    /// Give up after this many atom outcomes in a row.
    pub max_attempts: u64,
    /// Run the `β` diagnostic at every visited path with this flip budget.
    pub diagnose: Option<u64>,
}

/// Exact draw from `π` on paths: perfect-sample the extended law through the
/// i-cSMC kernel and repeat until the draw is not the atom path.
pub fn perfect_sample_path<M, R>(
    base: &M,
    psi: &[f64],
    cfg: &PathSamplerConfig,
    rng: &mut R,
) -> Result<PathSampleReport<M::Point>>
where
    M: FeynmanKacModel,
    R: Rng + ?Sized,
{
    let ext = extend_model(base, cfg.b, psi)?;
    perfect_sample_path_ext(&ext, cfg, rng)
}

/// [`perfect_sample_path`] on an already extended model.
pub fn perfect_sample_path_ext<M, R>(
    ext: &ExtendedModel<M>,
    cfg: &PathSamplerConfig,
    rng: &mut R,
) -> Result<PathSampleReport<<M as FeynmanKacModel>::Point>>
where
    M: FeynmanKacModel,
    R: Rng + ?Sized,
{
    if cfg.n_particles < 1 {
        return Err(Error::config("need at least one particle"));
    }
    let kernel = IcsmcAtomKernel {
        model: ext,
        n_particles: cfg.n_particles,
    };
    let mut sampler = PerfectSampler::new(&kernel, cfg.factory);
    sampler.diagnose = cfg.diagnose;
    let mut cost = Cost::default();
    let mut diagnostics = cfg.diagnose.map(|_| DiagnosticTrace::default());
    for attempt in 1..=cfg.max_attempts {
        let report = sampler.sample(cfg.algorithm, rng)?;
        cost.add(&report.cost);
        if let (Some(total), Some(d)) = (diagnostics.as_mut(), report.diagnostics) {
            total.states_checked += d.states_checked;
            total.flips += d.flips;
        }
        if !kernel.is_atom(&report.sample) {
            let path = report
                .sample
                .into_iter()
                .map(|z| match z {
                    ZExt::Point(p) => Ok(p),
                    ZExt::Atom => Err(Error::contract("non-atom path contains the atom")),
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(PathSampleReport {
                path,
                attempts: attempt,
                cost,
                diagnostics,
            });
        }
    }
    Err(Error::budget(cost.raw_flips).with_context(format!(
        "{} consecutive atom outcomes; raise max_attempts or retune psi",
        cfg.max_attempts
    )))
}
