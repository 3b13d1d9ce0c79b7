//! Feynman–Kac particle machinery.
//!
//! Time indices are 0-based: a model of horizon `n` has steps `0..n`, the
//! initial law at step 0 and transitions into steps `1..n`. Particle and
//! lineage indices are 0-based as well. Potentials are handled as logarithms,
//! with `-inf` standing for a zero potential.

use std::fmt::Debug;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stream::categorical;

/// A discrete-time Feynman–Kac model: initial law, transitions and potentials
/// over a horizon.
pub trait FeynmanKacModel {
    type Point: Clone + PartialEq + Debug;

    fn horizon(&self) -> usize;

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Point;

    /// Draw the state at step `t >= 1` given the state at step `t - 1`.
    fn sample_transition<R: Rng + ?Sized>(&self, t: usize, from: &Self::Point, rng: &mut R) -> Self::Point;

    /// `log G_t(z)`.
    fn log_potential(&self, t: usize, z: &Self::Point) -> f64;

    /// Optional upper bound on `log G_t`, checked on every evaluation.
    fn log_potential_upper(&self, _t: usize) -> Option<f64> {
        None
    }
}

impl<M: FeynmanKacModel + ?Sized> FeynmanKacModel for &M {
    type Point = M::Point;

    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Point {
        (**self).sample_initial(rng)
    }
    fn sample_transition<R: Rng + ?Sized>(&self, t: usize, from: &Self::Point, rng: &mut R) -> Self::Point {
        (**self).sample_transition(t, from, rng)
    }
    fn log_potential(&self, t: usize, z: &Self::Point) -> f64 {
        (**self).log_potential(t, z)
    }
    fn log_potential_upper(&self, t: usize) -> Option<f64> {
        (**self).log_potential_upper(t)
    }
}

/// All variables produced by one particle filter run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticleSystem<Z> {
    /// `particles[t][i]`.
    pub particles: Vec<Vec<Z>>,
    /// `ancestors[t][i]` is the parent at step `t` of particle `i` at `t + 1`.
    pub ancestors: Vec<Vec<usize>>,
    /// `log_potentials[t][i] = log G_t(particles[t][i])`.
    pub log_potentials: Vec<Vec<f64>>,
}

impl<Z: Clone> ParticleSystem<Z> {
    pub fn n_particles(&self) -> usize {
        self.particles.first().map_or(0, Vec::len)
    }

    pub fn horizon(&self) -> usize {
        self.particles.len()
    }

    /// Indices `(B_0, …, B_{n-1})` of the ancestral line of terminal particle `k`.
    pub fn lineage(&self, k: usize) -> Vec<usize> {
        let n = self.horizon();
        let mut line = vec![0; n];
        line[n - 1] = k;
        for t in (0..n - 1).rev() {
            line[t] = self.ancestors[t][line[t + 1]];
        }
        line
    }

    pub fn path_along(&self, lineage: &[usize]) -> Vec<Z> {
        lineage
            .iter()
            .enumerate()
            .map(|(t, &i)| self.particles[t][i].clone())
            .collect()
    }

    /// The full path ending at terminal particle `k`.
    pub fn path(&self, k: usize) -> Vec<Z> {
        self.path_along(&self.lineage(k))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PickedPath<Z> {
    pub lineage: Vec<usize>,
    pub path: Vec<Z>,
}

/// Weights `exp(lw - max lw)`. `None` when every weight is zero.
pub fn normalized_weights(log_w: &[f64]) -> Option<Vec<f64>> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return None;
    }
    Some(log_w.iter().map(|&l| (l - max).exp()).collect())
}

/// `log(mean(exp(lw)))`, or `-inf` when every weight is zero.
pub fn log_mean_exp(log_w: &[f64]) -> f64 {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = log_w.iter().map(|&l| (l - max).exp()).sum();
    max + (s / log_w.len() as f64).ln()
}

/// `count` i.i.d. draws from the categorical law given by `log_w`.
pub fn resample_multinomial<R: Rng + ?Sized>(
    log_w: &[f64],
    count: usize,
    step: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let w = normalized_weights(log_w).ok_or(Error::ParticleDeath { step })?;
    (0..count)
        .map(|_| categorical(rng, &w).ok_or(Error::ParticleDeath { step }))
        .collect()
}

fn eval_potential<M: FeynmanKacModel + ?Sized>(model: &M, t: usize, z: &M::Point) -> Result<f64> {
    let lg = model.log_potential(t, z);
    if lg.is_nan() || lg == f64::INFINITY {
        return Err(Error::contract(format!("log potential at step {t} is {lg}")));
    }
    if let Some(upper) = model.log_potential_upper(t) {
        if lg > upper + 1e-12 * upper.abs().max(1.0) {
            return Err(Error::contract(format!(
                "log potential {lg} at step {t} exceeds its declared bound {upper}"
            )));
        }
    }
    Ok(lg)
}

fn check_alive(log_g: &[f64], step: usize) -> Result<()> {
    if log_g.iter().all(|&l| l == f64::NEG_INFINITY) {
        Err(Error::ParticleDeath { step })
    } else {
        Ok(())
    }
}

/// Particle filter with multinomial resampling at every step.
pub fn run_smc<M, R>(model: &M, n_particles: usize, rng: &mut R) -> Result<ParticleSystem<M::Point>>
where
    M: FeynmanKacModel + ?Sized,
    R: Rng + ?Sized,
{
    run_filter(model, n_particles, None, rng).map(|(_, v)| v)
}

/// Conditional particle filter: the reference path is kept verbatim in slots
/// `K_t` drawn independently and uniformly. Returns the lineage `K` and the
/// system.
pub fn run_csmc<M, R>(
    model: &M,
    n_particles: usize,
    ref_path: &[M::Point],
    rng: &mut R,
) -> Result<(Vec<usize>, ParticleSystem<M::Point>)>
where
    M: FeynmanKacModel + ?Sized,
    R: Rng + ?Sized,
{
    if ref_path.len() != model.horizon() {
        return Err(Error::config(format!(
            "reference path has length {}, model horizon is {}",
            ref_path.len(),
            model.horizon()
        )));
    }
    let (lineage, v) = run_filter(model, n_particles, Some(ref_path), rng)?;
    Ok((lineage.expect("conditional run has a lineage"), v))
}

fn run_filter<M, R>(
    model: &M,
    n_particles: usize,
    reference: Option<&[M::Point]>,
    rng: &mut R,
) -> Result<(Option<Vec<usize>>, ParticleSystem<M::Point>)>
where
    M: FeynmanKacModel + ?Sized,
    R: Rng + ?Sized,
{
    let n = model.horizon();
    if n_particles == 0 {
        return Err(Error::config("need at least one particle"));
    }
    if n == 0 {
        return Err(Error::config("model horizon must be positive"));
    }
    let lineage: Option<Vec<usize>> =
        reference.map(|_| (0..n).map(|_| rng.random_range(0..n_particles)).collect());

    let mut particles = Vec::with_capacity(n);
    let mut ancestors = Vec::with_capacity(n.saturating_sub(1));
    let mut log_potentials = Vec::with_capacity(n);

    let mut zeta: Vec<M::Point> = (0..n_particles)
        .map(|i| match (&lineage, reference) {
            (Some(k), Some(x)) if k[0] == i => x[0].clone(),
            _ => model.sample_initial(rng),
        })
        .collect();
    for t in 0..n {
        let log_g = zeta
            .iter()
            .map(|z| eval_potential(model, t, z))
            .collect::<Result<Vec<_>>>()?;
        if reference.is_none() {
            check_alive(&log_g, t)?;
        }
        if t + 1 < n {
            let w = normalized_weights(&log_g).ok_or(Error::ParticleDeath { step: t })?;
            let mut anc = Vec::with_capacity(n_particles);
            let mut next = Vec::with_capacity(n_particles);
            for i in 0..n_particles {
                match (&lineage, reference) {
                    (Some(k), Some(x)) if k[t + 1] == i => {
                        anc.push(k[t]);
                        next.push(x[t + 1].clone());
                    }
                    _ => {
                        let a = categorical(rng, &w).ok_or(Error::ParticleDeath { step: t })?;
                        anc.push(a);
                        next.push(model.sample_transition(t + 1, &zeta[a], rng));
                    }
                }
            }
            particles.push(std::mem::replace(&mut zeta, next));
            ancestors.push(anc);
        } else {
            particles.push(std::mem::take(&mut zeta));
        }
        log_potentials.push(log_g);
    }
    Ok((
        lineage,
        ParticleSystem {
            particles,
            ancestors,
            log_potentials,
        },
    ))
}

/// Draw a terminal index proportional to its potential and trace its line.
pub fn pick_path<Z: Clone, R: Rng + ?Sized>(v: &ParticleSystem<Z>, rng: &mut R) -> Result<PickedPath<Z>> {
    let n = v.horizon();
    let w = normalized_weights(&v.log_potentials[n - 1]).ok_or(Error::ParticleDeath { step: n - 1 })?;
    let k = categorical(rng, &w).ok_or(Error::ParticleDeath { step: n - 1 })?;
    let lineage = v.lineage(k);
    let path = v.path_along(&lineage);
    Ok(PickedPath { lineage, path })
}

/// One step of the iterated conditional SMC kernel.
pub fn icsmc_step<M, R>(model: &M, n_particles: usize, x: &[M::Point], rng: &mut R) -> Result<Vec<M::Point>>
where
    M: FeynmanKacModel + ?Sized,
    R: Rng + ?Sized,
{
    let (_, v) = run_csmc(model, n_particles, x, rng)?;
    Ok(pick_path(&v, rng)?.path)
}

/// `log Π_t mean_i G_t(ζ_t^i)`.
pub fn estimate_log_nc<Z>(v: &ParticleSystem<Z>) -> Result<f64> {
    let mut total = 0.0;
    for (t, lg) in v.log_potentials.iter().enumerate() {
        let l = log_mean_exp(lg);
        if l == f64::NEG_INFINITY {
            return Err(Error::ParticleDeath { step: t });
        }
        total += l;
    }
    Ok(total)
}

/// Terminal-weighted average of `f` over all ancestral paths.
pub fn estimate_pi_f<Z: Clone, F>(v: &ParticleSystem<Z>, mut f: F) -> Result<f64>
where
    F: FnMut(&[Z]) -> f64,
{
    let n = v.horizon();
    let w = normalized_weights(&v.log_potentials[n - 1]).ok_or(Error::ParticleDeath { step: n - 1 })?;
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    for (k, wk) in w.iter().enumerate() {
        if *wk > 0.0 {
            acc += wk * f(&v.path(k));
        }
    }
    Ok(acc / total)
}

/// Unbiased estimate of `γ_n(f)`: `exp(log_nc) · π^N(f)`.
pub fn estimate_gamma_f<Z: Clone, F>(v: &ParticleSystem<Z>, f: F) -> Result<f64>
where
    F: FnMut(&[Z]) -> f64,
{
    Ok(estimate_log_nc(v)?.exp() * estimate_pi_f(v, f)?)
}

/// Conditional SMC from an exact draw of `π`, then the weighted average of
/// `f` over all paths. Unbiased for `π(f)`.
pub fn self_normalized_unbiased<M, F, R>(
    perfect_x: &[M::Point],
    model: &M,
    n_particles: usize,
    f: F,
    rng: &mut R,
) -> Result<f64>
where
    M: FeynmanKacModel + ?Sized,
    F: FnMut(&[M::Point]) -> f64,
    R: Rng + ?Sized,
{
    let (_, v) = run_csmc(model, n_particles, perfect_x, rng)?;
    estimate_pi_f(&v, f)
}

/// A law on `{1, 2, …}` that can be sampled and evaluated.
pub trait DiscreteLaw {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64;
    fn pmf(&self, k: u64) -> f64;
}

/// Geometric law on `{1, 2, …}` with success probability `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricLaw {
    pub p: f64,
}

impl DiscreteLaw for GeometricLaw {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        crate::stream::geometric(rng, self.p)
    }

    fn pmf(&self, k: u64) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.p * (1.0 - self.p).powf((k - 1) as f64)
        }
    }
}

/// Unbiased estimate of `π(f)` by regeneration: with `M` the first
/// regeneration time of the split chain, returns 0 unless `M = 1`, and
/// otherwise `Z / g(K)` with `K ~ g` and `Z` an unbiased estimate of
/// `γ_K(f)`.
pub fn unbiased_pi_f_regen<S, G, E, R>(mut first_regen: S, g: &G, mut gamma_f: E, rng: &mut R) -> Result<f64>
where
    S: FnMut(&mut R) -> u64,
    G: DiscreteLaw + ?Sized,
    E: FnMut(u64, &mut R) -> Result<f64>,
    R: Rng + ?Sized,
{
    if first_regen(rng) != 1 {
        return Ok(0.0);
    }
    let k = g.sample(rng);
    let gk = g.pmf(k);
    if !(gk > 0.0) {
        return Err(Error::config(format!("g({k}) = {gk} for a drawn K")));
    }
    Ok(gamma_f(k, rng)? / gk)
}
