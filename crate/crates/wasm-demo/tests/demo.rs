use atomic_regen_wasm::{chain_histogram, factory_costs, tour_maxima};

#[test]
fn factory_panel_matches_exact_rates() {
    let r = factory_costs(0.3, 0.2, 0.1, 50_000, 1).unwrap();
    assert!((r.eps_over_p_freq - r.eps_over_p_exact).abs() < 0.01);
    assert!((r.one_minus_freq - r.one_minus_exact).abs() < 0.01);
    assert_eq!(r.flip_histogram.iter().sum::<u32>(), 50_000);
    assert!(r.mean_flips >= 1.0);
    assert!(factory_costs(0.1, 0.2, 0.1, 10, 1).is_err());
    assert!(factory_costs(0.3, 0.2, 0.3, 10, 1).is_err());
}

#[test]
fn chain_panel_is_close_to_stationary() {
    for alg in ["imputation", "multigamma"] {
        let r = chain_histogram(20_000, alg, 0.2, 2).unwrap();
        assert_eq!(r.counts.iter().sum::<u32>(), 20_000);
        assert!(r.total_variation < 0.02, "{alg}: {}", r.total_variation);
    }
    assert!(chain_histogram(10, "gibbs", 0.2, 2).is_err());
}

#[test]
fn tour_panel_is_reproducible() {
    let a = tour_maxima(500, 3).unwrap();
    let b = tour_maxima(500, 3).unwrap();
    assert_eq!(a.lengths, b.lengths);
    assert_eq!(a.max, *a.lengths.iter().max().unwrap());
    assert!(a.david_bound >= a.mean);
    // Inputs beyond the page limits are clamped, not rejected.
    assert_eq!(tour_maxima(0, 3).unwrap().tours, 1);
}
