//! Browser demo: three small interactive views of the sampler, exported to
//! JavaScript through `wasm-bindgen`. Every export takes plain numbers and
//! returns a JSON string so the page needs no glue beyond `JSON.parse`.
//!
//! The plain Rust functions (`factory_costs`, `chain_histogram`, `tour_maxima`)
//! hold the logic and are what the native tests exercise.

use atomic_regen::experiments::oracle_chain;
use atomic_regen::factory::{flip_eps_over_p_coin, flip_one_minus_p_coin, BernoulliCoin, CoinSource, FactoryConfig};
use atomic_regen::models::finite_chain_oracle;
use atomic_regen::regen::{Algorithm, PerfectSampler};
use atomic_regen::stream::from_seed;
use atomic_regen::tours::{length_stats, run_parallel_tours};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Upper limits that keep one click responsive in a browser tab.
const MAX_REPS: u32 = 200_000;
const MAX_SAMPLES: u32 = 50_000;
const MAX_TOURS: u32 = 100_000;

#[derive(Debug, Serialize)]
pub struct FactoryCosts {
    pub p: f64,
    pub beta: f64,
    pub eps: f64,
    pub reps: u32,
    pub eps_over_p_freq: f64,
    pub eps_over_p_exact: f64,
    pub one_minus_freq: f64,
    pub one_minus_exact: f64,
    /// Mean `p`-coin flips per `ε/p` draw.
    pub mean_flips: f64,
    /// Histogram of `p`-coin flips per draw; the last bin collects the tail.
    pub flip_histogram: Vec<u32>,
}

/// Run both factory coins `reps` times against a Bernoulli(`p`) source.
pub fn factory_costs(p: f64, beta: f64, eps: f64, reps: u32, seed: u64) -> Result<FactoryCosts, String> {
    let cfg = FactoryConfig::new(beta, eps).map_err(|e| e.to_string())?;
    if !(p >= beta && p <= 1.0) {
        return Err(format!("p = {p} must lie in [beta, 1]"));
    }
    let reps = reps.clamp(1, MAX_REPS);
    let mut rng = from_seed(seed);
    let mut race_heads = 0u32;
    let mut comp_heads = 0u32;
    let mut histogram = vec![0u32; 31];
    let mut total_flips = 0u64;
    for _ in 0..reps {
        let mut coin = BernoulliCoin::new(p).map_err(|e| e.to_string())?;
        let out = flip_eps_over_p_coin(&mut coin, &cfg, &mut rng).map_err(|e| e.to_string())?;
        race_heads += u32::from(out.bit);
        let used = coin.flips_used();
        total_flips += used;
        histogram[(used as usize).min(30)] += 1;

        let mut coin = BernoulliCoin::new(p).map_err(|e| e.to_string())?;
        comp_heads += u32::from(flip_one_minus_p_coin(&mut coin, &cfg, &mut rng).map_err(|e| e.to_string())?);
    }
    let n = f64::from(reps);
    Ok(FactoryCosts {
        p,
        beta,
        eps,
        reps,
        eps_over_p_freq: f64::from(race_heads) / n,
        eps_over_p_exact: eps / p,
        one_minus_freq: f64::from(comp_heads) / n,
        one_minus_exact: (1.0 - p) / (1.0 - eps),
        mean_flips: total_flips as f64 / n,
        flip_histogram: histogram,
    })
}

#[derive(Debug, Serialize)]
pub struct ChainHistogram {
    pub algorithm: Algorithm,
    pub samples: u32,
    pub counts: Vec<u32>,
    pub stationary: Vec<f64>,
    pub total_variation: f64,
    pub mean_kernel_draws: f64,
}

/// Perfect samples from the five-state demo chain, binned by state.
pub fn chain_histogram(samples: u32, algorithm: &str, beta: f64, seed: u64) -> Result<ChainHistogram, String> {
    let algorithm: Algorithm = algorithm.parse().map_err(|e: atomic_regen::Error| e.to_string())?;
    let chain = oracle_chain();
    let cfg = FactoryConfig::with_beta(beta).map_err(|e| e.to_string())?;
    let samples = samples.clamp(1, MAX_SAMPLES);
    let sampler = PerfectSampler::new(&chain, cfg);
    let mut rng = from_seed(seed);
    let mut counts = vec![0u32; chain.n_states()];
    let mut draws = 0u64;
    for _ in 0..samples {
        let r = sampler.sample(algorithm, &mut rng).map_err(|e| e.to_string())?;
        counts[r.sample] += 1;
        draws += r.cost.kernel_draws;
    }
    let stationary = finite_chain_oracle(&chain.transition).map_err(|e| e.to_string())?;
    let n = f64::from(samples);
    let total_variation = 0.5
        * counts
            .iter()
            .zip(&stationary)
            .map(|(&c, p)| (f64::from(c) / n - p).abs())
            .sum::<f64>();
    Ok(ChainHistogram {
        algorithm,
        samples,
        counts,
        stationary,
        total_variation,
        mean_kernel_draws: draws as f64 / n,
    })
}

#[derive(Debug, Serialize)]
pub struct TourMaxima {
    pub tours: u32,
    pub lengths: Vec<usize>,
    pub max: usize,
    pub mean: f64,
    pub david_bound: f64,
    pub harmonic_lower: f64,
    pub harmonic_upper: f64,
}

/// Tour lengths of the demo chain with the bounds on their maximum.
pub fn tour_maxima(tours: u32, seed: u64) -> Result<TourMaxima, String> {
    let tours = tours.clamp(1, MAX_TOURS);
    let chain = oracle_chain();
    // One worker: browsers without shared memory cannot spawn threads.
    let c = run_parallel_tours(&chain, tours as usize, 1, seed, 1_000_000).map_err(|e| e.to_string())?;
    let lengths = c.lengths();
    let s = length_stats(&lengths).map_err(|e| e.to_string())?;
    Ok(TourMaxima {
        tours,
        lengths,
        max: s.max,
        mean: s.mean,
        david_bound: s.david_bound,
        harmonic_lower: s.harmonic_lower,
        harmonic_upper: s.harmonic_upper,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.map(|v| serde_json::to_string(&v).expect("demo results serialize"))
        .map_err(|e| JsValue::from_str(&e))
}

// JavaScript numbers lose precision past 2^53, so seeds cross the boundary as
// f64 and are truncated here.
fn seed_from_js(seed: f64) -> u64 {
    seed.max(0.0) as u64
}

#[wasm_bindgen(js_name = factoryCosts)]
pub fn factory_costs_js(p: f64, beta: f64, eps: f64, reps: u32, seed: f64) -> Result<String, JsValue> {
    to_js(factory_costs(p, beta, eps, reps, seed_from_js(seed)))
}

#[wasm_bindgen(js_name = chainHistogram)]
pub fn chain_histogram_js(samples: u32, algorithm: &str, beta: f64, seed: f64) -> Result<String, JsValue> {
    to_js(chain_histogram(samples, algorithm, beta, seed_from_js(seed)))
}

#[wasm_bindgen(js_name = tourMaxima)]
pub fn tour_maxima_js(tours: u32, seed: f64) -> Result<String, JsValue> {
    to_js(tour_maxima(tours, seed_from_js(seed)))
}
