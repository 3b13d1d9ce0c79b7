use atomic_regen::experiments::oracle_chain;
use atomic_regen::models::{finite_chain_oracle, FiniteChain};
use atomic_regen::regen::simulate_tour;
use atomic_regen::stream::{from_seed, substream};
use atomic_regen::tours::*;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn collection_does_not_depend_on_worker_count() {
    let chain = oracle_chain();
    let base = run_parallel_tours(&chain, 300, 1, 17, 10_000).unwrap();
    for workers in [2, 3, 7, 64] {
        let other = run_parallel_tours(&chain, 300, workers, 17, 10_000).unwrap();
        assert_eq!(other.tours, base.tours, "workers = {workers}");
        assert_eq!(other.worker_count, workers);
        assert_eq!(
            serde_json::to_string(&other).unwrap(),
            serde_json::to_string(&base).unwrap()
        );
    }
}

#[test]
fn tours_match_sequential_simulation() {
    let chain = oracle_chain();
    let c = run_parallel_tours(&chain, 50, 4, 99, 10_000).unwrap();
    for (i, outcome) in c.tours.iter().enumerate() {
        let seq = simulate_tour(&chain, 10_000, &mut substream(99, i as u64)).unwrap();
        assert_eq!(outcome, &TourOutcome::Complete(seq));
    }
    let trace = stitched_trace(&c);
    assert_eq!(trace.len(), c.lengths().iter().sum::<usize>());
}

#[test]
fn every_tour_ends_at_the_atom_only() {
    let chain = oracle_chain();
    let c = run_parallel_tours(&chain, 500, 2, 3, 10_000).unwrap();
    for t in c.complete() {
        let (last, body) = t.states.split_last().unwrap();
        assert_eq!(*last, 0);
        assert!(!body.contains(&0));
    }
}

#[test]
fn stitched_estimate_matches_stationary_law() {
    let chain = oracle_chain();
    let pi = finite_chain_oracle(&chain.transition).unwrap();
    let n_tours = 20_000;
    let c = run_parallel_tours(&chain, n_tours, 2, 5, 10_000).unwrap();
    assert_eq!(stitch_tours(&c, |_| 1.0, false).unwrap(), 1.0);
    for (state, &p) in pi.iter().enumerate() {
        let est = stitch_tours(&c, |&x| if x == state { 1.0 } else { 0.0 }, false).unwrap();
        // Ratio-estimator standard error via per-tour residuals.
        let mean_len = c.lengths().iter().sum::<usize>() as f64 / n_tours as f64;
        let resid: Vec<f64> = c
            .complete()
            .map(|t| t.states.iter().filter(|&&x| x == state).count() as f64 - est * t.length() as f64)
            .collect();
        let var = resid.iter().map(|r| r * r).sum::<f64>() / (n_tours - 1) as f64;
        let se = (var / n_tours as f64).sqrt() / mean_len;
        assert!((est - p).abs() < 4.0 * se, "state {state}: {est} vs {p} (se {se})");
    }
}

#[test]
fn failed_tours_are_reported() {
    // State 1 almost never returns, so a tiny budget fails most tours.
    let sticky = FiniteChain::new(vec![vec![0.0, 1.0], vec![0.001, 0.999]], 0).unwrap();
    let c = run_parallel_tours(&sticky, 20, 2, 1, 5).unwrap();
    assert!(c.failures() > 0);
    assert!(stitch_tours(&c, |_| 1.0, false).is_err());
    if c.failures() < 20 {
        assert_eq!(stitch_tours(&c, |_| 1.0, true).unwrap(), 1.0);
    }
    assert!(run_parallel_tours(&sticky, 0, 1, 1, 5).is_err());
    assert!(run_parallel_tours(&sticky, 1, 0, 1, 5).is_err());
}

#[test]
fn single_tour_statistics() {
    let s = length_stats(&[7]).unwrap();
    assert_eq!((s.n_tours, s.max, s.mean, s.variance), (1, 7, 7.0, 0.0));
    assert_eq!(s.david_bound, 7.0);
    assert!(length_stats(&[]).is_err());
}

fn geometric<R: Rng>(q: f64, rng: &mut R) -> usize {
    let mut k = 1;
    while !rng.random_bool(q) {
        k += 1;
    }
    k
}

#[test]
fn mixture_maximum_respects_the_moment_bound() {
    // Half Geometric(0.5), half Geometric(0.05): far from geometric, so only
    // the moment bound applies.
    let (mean, second) = (0.5 * 2.0 + 0.5 * 20.0, 0.5 * 6.0 + 0.5 * 1.95 / 0.0025);
    let var = second - mean * mean;
    let n = 50;
    let bound = david_bound(mean, var, n);
    let mut rng = from_seed(8);
    let reps = 4_000;
    let maxes: Vec<f64> = (0..reps)
        .map(|_| {
            (0..n)
                .map(|_| geometric(if rng.random_bool(0.5) { 0.5 } else { 0.05 }, &mut rng))
                .max()
                .unwrap() as f64
        })
        .collect();
    let m = maxes.iter().sum::<f64>() / reps as f64;
    assert!(m < bound, "{m} vs {bound}");
}

#[test]
fn geometric_maximum_sits_between_harmonic_bounds() {
    let (q, n) = (0.2, 100);
    let (lo, hi) = geometric_max_bounds(q, n);
    let mut rng = from_seed(9);
    let reps = 4_000;
    let maxes: Vec<f64> = (0..reps)
        .map(|_| (0..n).map(|_| geometric(q, &mut rng)).max().unwrap() as f64)
        .collect();
    let m = maxes.iter().sum::<f64>() / reps as f64;
    let se = (maxes.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1) as f64 / reps as f64).sqrt();
    assert!(m > lo - 4.0 * se && m < hi + 4.0 * se, "{m} not in [{lo}, {hi}]");
    assert!((harmonic(4) - 25.0 / 12.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stats_are_consistent(lengths in proptest::collection::vec(1usize..500, 1..60)) {
        let s = length_stats(&lengths).unwrap();
        prop_assert_eq!(s.max, *lengths.iter().max().unwrap());
        prop_assert!(s.mean <= s.max as f64 + 1e-9);
        prop_assert!(s.david_bound >= s.mean);
        prop_assert!(s.harmonic_upper - s.harmonic_lower <= 1.0 + 1e-12);
    }

    #[test]
    fn worker_count_never_changes_output(seed in any::<u64>(), workers in 1usize..9) {
        let chain = oracle_chain();
        let a = run_parallel_tours(&chain, 25, 1, seed, 10_000).unwrap();
        let b = run_parallel_tours(&chain, 25, workers, seed, 10_000).unwrap();
        prop_assert_eq!(a.tours, b.tours);
    }
}
