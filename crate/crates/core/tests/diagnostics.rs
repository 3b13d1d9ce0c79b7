use atomic_regen::diagnostics::*;
use atomic_regen::experiments::oracle_chain;
use atomic_regen::factory::BernoulliCoin;
use atomic_regen::stream::{from_seed, substream};
use proptest::prelude::*;

fn stop_fraction(p: f64, beta: f64, budget: u64, trials: u64, seed: u64) -> f64 {
    let mut rng = from_seed(seed);
    let mut stopped = 0;
    for _ in 0..trials {
        let mut coin = BernoulliCoin::new(p).unwrap();
        let out = run_beta_diagnostic(&mut coin, beta, budget, &mut rng).unwrap();
        match out.verdict {
            Verdict::Passed => {
                stopped += 1;
                assert_eq!(out.stopped_at, Some(out.flips_used));
            }
            Verdict::BudgetExceeded => {
                assert_eq!(out.stopped_at, None);
                assert_eq!(out.flips_used, budget);
            }
        }
    }
    stopped as f64 / trials as f64
}

#[test]
fn coin_above_beta_always_stops() {
    let f = stop_fraction(0.3, 0.2, default_budget(0.2), 5_000, 1);
    assert!(f > 0.999, "{f}");
}

#[test]
fn coin_below_beta_never_stops_at_the_closed_form_rate() {
    let (p, m) = (0.1, 4);
    let trials = 10_000u64;
    let stopped = stop_fraction(p, 1.0 / m as f64, 5_000, trials, 2);
    let never = 1.0 - stopped;
    let want = prob_never_stop(p, m).unwrap();
    let se = (want * (1.0 - want) / trials as f64).sqrt();
    assert!((never - want).abs() < 4.0 * se, "{never} vs {want}");
}

#[test]
fn coin_at_beta_is_inconclusive() {
    // Recurrent drift-free walk: it stops eventually, but the default budget
    // cuts off a sizeable fraction of runs.
    let f = stop_fraction(0.25, 0.25, default_budget(0.25), 5_000, 3);
    assert!(f > 0.5 && f < 0.99, "{f}");
}

#[test]
fn never_stop_rejects_out_of_range() {
    assert!(prob_never_stop(0.3, 4).is_err());
    assert!(prob_never_stop(0.1, 1).is_err());
    assert_eq!(prob_never_stop(0.0, 3).unwrap(), 1.0);
}

#[test]
fn probe_lower_bound_covers_the_true_minimum() {
    let chain = oracle_chain();
    let true_min = chain.min_p_atom();
    let states: Vec<usize> = (0..chain.n_states()).collect();
    let trials = 400;
    let covered = (0..trials)
        .filter(|&i| estimate_p_lower(&chain, &states, 500, &mut substream(4, i)).unwrap() <= true_min)
        .count();
    assert!(covered as f64 >= 0.99 * trials as f64, "{covered}/{trials}");
}

#[test]
fn probe_evidence_is_reported_per_state() {
    let chain = oracle_chain();
    let (min, per) = estimate_p_lower_detailed(&chain, &[0, 3], 2_000, &mut from_seed(5)).unwrap();
    assert_eq!(per.len(), 2);
    assert!(per.iter().all(|e| e.flips == 2_000 && e.lower <= e.hits as f64 / 2_000.0));
    assert_eq!(min, per[0].lower.min(per[1].lower));
    assert!(estimate_p_lower(&chain, &[], 10, &mut from_seed(5)).is_err());
    assert!(estimate_p_lower(&chain, &[0], 0, &mut from_seed(5)).is_err());
}

#[test]
fn pilot_states_start_at_the_atom_and_are_distinct() {
    let chain = oracle_chain();
    let s = pilot_states(&chain, 200, &mut from_seed(6)).unwrap();
    assert_eq!(s[0], 0);
    let mut sorted = s.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), s.len());
    assert_eq!(s.len(), 5);
}

proptest! {
    #[test]
    fn tv_bound_lies_in_unit_interval(a in 1e-6f64..1.0, b in 1e-6f64..1.0, c in 1e-6f64..1.0) {
        let t = tv_sensitivity_bound(a, b);
        prop_assert!((0.0..1.0).contains(&t));
        if b <= a {
            prop_assert_eq!(t, 0.0);
        }
        // Overstating further never shrinks the bound.
        let (lo, hi) = if b < c { (b, c) } else { (c, b) };
        prop_assert!(tv_sensitivity_bound(a, hi) >= tv_sensitivity_bound(a, lo));
    }

    #[test]
    fn never_stop_is_monotone(p in 0.0f64..0.2, dp in 0.0f64..0.04, m in 2u32..5) {
        let beta = 1.0 / m as f64;
        prop_assume!(p + dp < beta);
        let a = prob_never_stop(p, m).unwrap();
        let b = prob_never_stop(p + dp, m).unwrap();
        prop_assert!(b <= a);
        prop_assert!((0.0..=1.0).contains(&a));
        // A larger m means a smaller beta, so stopping becomes likelier.
        if p + dp < 1.0 / (m + 1) as f64 {
            prop_assert!(prob_never_stop(p + dp, m + 1).unwrap() <= b);
        }
    }

    #[test]
    fn clopper_pearson_is_below_the_point_estimate(k in 0u64..200, extra in 0u64..200) {
        let n = k + extra + 1;
        let lo = clopper_pearson_lower(k, n, 0.01);
        prop_assert!(lo >= 0.0 && lo <= k as f64 / n as f64);
        prop_assert!(clopper_pearson_lower(k, n, 0.05) >= lo);
    }
}
