//! Independent regeneration tours simulated in parallel and pieced together.
//!
//! Tour `i` always uses the stream [`substream`]`(master_seed, i)`, so the
//! collection does not depend on how many workers ran it or in what order.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regen::{simulate_tour, AtomicKernel, Tour};
use crate::stream::substream;

/// A finished tour, or the reason it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TourOutcome<S> {
    Complete(Tour<S>),
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TourCollection<S> {
    pub master_seed: u64,
    /// Indexed by tour number.
    pub tours: Vec<TourOutcome<S>>,
    /// Scheduling detail; excluded from serialization and equality-relevant
    /// output.
    #[serde(skip)]
    pub worker_count: usize,
}

impl<S> TourCollection<S> {
    pub fn failures(&self) -> usize {
        self.tours
            .iter()
            .filter(|t| matches!(t, TourOutcome::Failed { .. }))
            .count()
    }

    pub fn complete(&self) -> impl Iterator<Item = &Tour<S>> {
        self.tours.iter().filter_map(|t| match t {
            TourOutcome::Complete(t) => Some(t),
            TourOutcome::Failed { .. } => None,
        })
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.complete().map(Tour::length).collect()
    }
}

/// Simulate `n_tours` tours on `workers` threads pulling indices from a shared
/// counter.
pub fn run_parallel_tours<K>(kernel: &K, n_tours: usize, workers: usize, master_seed: u64, budget: u64) -> Result<TourCollection<K::State>>
where
    K: AtomicKernel + Sync,
    K::State: Send,
{
    if n_tours == 0 {
        return Err(Error::config("n_tours must be at least 1"));
    }
    if workers == 0 {
        return Err(Error::config("workers must be at least 1"));
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<TourOutcome<K::State>>>> = Mutex::new((0..n_tours).map(|_| None).collect());
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= n_tours {
            break;
        }
        let mut rng = substream(master_seed, i as u64);
        let outcome = match simulate_tour(kernel, budget, &mut rng) {
            Ok(t) => TourOutcome::Complete(t),
            Err(e) => TourOutcome::Failed { error: e.to_string() },
        };
        slots.lock().expect("no worker panics while holding the lock")[i] = Some(outcome);
    };
    if workers == 1 {
        // No thread at all, which also keeps single-threaded targets working.
        work();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..workers.min(n_tours) {
                scope.spawn(work);
            }
        });
    }
    let tours = slots
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|t| t.expect("every index is claimed exactly once"))
        .collect();
    Ok(TourCollection {
        master_seed,
        tours,
        worker_count: workers,
    })
}

/// Regenerative estimate `Σ f / Σ length` over the tours in index order.
/// Failed tours are an error unless `drop_failed` is set.
pub fn stitch_tours<S, F>(c: &TourCollection<S>, mut f: F, drop_failed: bool) -> Result<f64>
where
    F: FnMut(&S) -> f64,
{
    if !drop_failed && c.failures() > 0 {
        return Err(Error::config(format!(
            "{} failed tours; pass drop_failed to ignore them",
            c.failures()
        )));
    }
    let mut sum = 0.0;
    let mut len = 0usize;
    for t in c.complete() {
        sum += t.states.iter().map(&mut f).sum::<f64>();
        len += t.length();
    }
    if len == 0 {
        return Err(Error::config("no complete tours to stitch"));
    }
    Ok(sum / len as f64)
}

/// Concatenation of the complete tours, in index order.
pub fn stitched_trace<S: Clone>(c: &TourCollection<S>) -> Vec<S> {
    c.complete().flat_map(|t| t.states.iter().cloned()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxTourStats {
    pub n_tours: usize,
    pub max: usize,
    pub mean: f64,
    pub variance: f64,
    /// `E[τ] + (n - 1) sqrt(Var(τ) / (2n - 1))` with empirical moments.
    pub david_bound: f64,
    /// `H_n / λ` with `λ = -ln(1 - 1/mean)`, the geometric-case lower bound.
    pub harmonic_lower: f64,
    pub harmonic_upper: f64,
}

/// `H_n = Σ_{i<=n} 1/i`.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|i| 1.0 / i as f64).sum()
}

/// Bound on the expected maximum of `n` i.i.d. variables with the given mean
/// and variance.
pub fn david_bound(mean: f64, variance: f64, n: usize) -> f64 {
    let nf = n as f64;
    mean + (nf - 1.0) * (variance / (2.0 * nf - 1.0)).sqrt()
}

/// `(H_n/λ, 1 + H_n/λ)` with `λ = -ln(1 - q)`.
pub fn geometric_max_bounds(q: f64, n: usize) -> (f64, f64) {
    let lambda = -(-q).ln_1p();
    let h = harmonic(n) / lambda;
    (h, 1.0 + h)
}

/// Length statistics of the complete tours.
pub fn max_tour_stats<S>(c: &TourCollection<S>) -> Result<MaxTourStats> {
    length_stats(&c.lengths())
}

pub fn length_stats(lengths: &[usize]) -> Result<MaxTourStats> {
    let n = lengths.len();
    if n == 0 {
        return Err(Error::config("no complete tours"));
    }
    let mean = lengths.iter().sum::<usize>() as f64 / n as f64;
    let variance = if n > 1 {
        lengths.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let (harmonic_lower, harmonic_upper) = if mean > 1.0 {
        geometric_max_bounds(1.0 / mean, n)
    } else {
        (1.0, 1.0)
    };
    Ok(MaxTourStats {
        n_tours: n,
        max: *lengths.iter().max().expect("nonempty"),
        mean,
        variance,
        david_bound: david_bound(mean, variance, n),
        harmonic_lower,
        harmonic_upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_numbers() {
        assert_eq!(harmonic(1), 1.0);
        assert!((harmonic(4) - 25.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn single_length_stats() {
        let s = length_stats(&[7]).unwrap();
        assert_eq!(s.max, 7);
        assert!(s.david_bound >= 7.0);
    }
}
