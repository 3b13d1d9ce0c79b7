use atomic_regen::experiments::oracle_chain;
use atomic_regen::factory::FactoryConfig;
use atomic_regen::models::FiniteChain;
use atomic_regen::regen::*;
use atomic_regen::stream::{from_seed, substream};
use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn assert_within(label: &str, est: f64, se: f64, target: f64, k: f64) {
    assert!(
        (est - target).abs() <= k * se,
        "{label}: {est} vs {target} (se {se}, {:.2} se)",
        (est - target) / se
    );
}

fn freq(xs: &[usize], k: usize) -> Vec<f64> {
    let mut h = vec![0.0; k];
    for &x in xs {
        h[x] += 1.0;
    }
    h.iter().map(|c| c / xs.len() as f64).collect()
}

/// A kernel that never reaches its atom.
struct Avoider;

impl AtomicKernel for Avoider {
    type State = u8;
    fn sample<R: Rng + ?Sized>(&self, _x: &u8, rng: &mut R) -> u8 {
        1 + rng.random_range(0..3)
    }
    fn atom(&self) -> u8 {
        0
    }
}

#[test]
fn residual_without_atom_mass_takes_one_draw() {
    let mut rng = from_seed(1);
    for _ in 0..100 {
        let (y, draws) = sample_residual(&Avoider, &0, 10, &mut rng).unwrap();
        assert_ne!(y, 0);
        assert_eq!(draws, 1);
    }
}

#[test]
fn residual_law_and_draw_count() {
    let chain = FiniteChain::iid(vec![0.5, 0.3, 0.2], 0).unwrap();
    let mut rng = from_seed(2);
    let n = 100_000;
    let mut ys = Vec::with_capacity(n);
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        let (y, d) = sample_residual(&chain, &1, 1_000_000, &mut rng).unwrap();
        ys.push(y);
        draws.push(d as f64);
    }
    let f = freq(&ys, 3);
    assert_eq!(f[0], 0.0);
    let se = (0.6 * 0.4 / n as f64).sqrt();
    assert_within("residual P(s1)", f[1], se, 0.6, 3.0);
    let (m, se) = mean_se(&draws);
    assert_within("draws per residual", m, se, 2.0, 3.0);
}

#[test]
fn residual_budget_is_an_error() {
    let always_atom = FiniteChain::iid(vec![1.0, 0.0], 0).unwrap();
    let err = sample_residual(&always_atom, &1, 50, &mut from_seed(3)).unwrap_err();
    assert!(matches!(err, atomic_regen::Error::BudgetExceeded { flips: 50, .. }));
}

#[test]
fn kernel_coin_matches_atom_probability() {
    let chain = oracle_chain();
    let mut rng = from_seed(4);
    let n = 40_000;
    for x in 0..5 {
        let hits = (0..n).filter(|_| chain.sample(&x, &mut rng) == 0).count();
        let p = chain.p_atom(x);
        assert_within("p(x)", hits as f64 / n as f64, (p * (1.0 - p) / n as f64).sqrt(), p, 3.0);
    }
}

fn run(chain: &FiniteChain, cfg: FactoryConfig, algo: Algorithm, n: usize, seed: u64) -> Vec<PerfectSampleReport<usize>> {
    let sampler = PerfectSampler::new(chain, cfg);
    let mut rng = from_seed(seed);
    (0..n).map(|_| sampler.sample(algo, &mut rng).unwrap()).collect()
}

#[test]
fn iid_kernel_imputation_is_exact() {
    let pi = vec![0.25, 0.3, 0.2, 0.15, 0.1];
    let chain = FiniteChain::iid(pi.clone(), 0).unwrap();
    let cfg = FactoryConfig::new(0.25, 0.125).unwrap();
    let reps = run(&chain, cfg, Algorithm::Imputation, 100_000, 5);
    let f = freq(&reps.iter().map(|r| r.sample).collect::<Vec<_>>(), 5);
    let tv: f64 = 0.5 * f.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum::<f64>();
    assert!(tv < 0.01, "TV {tv}");
    let draws: Vec<f64> = reps.iter().map(|r| r.cost.kernel_draws as f64).collect();
    let (m, se) = mean_se(&draws);
    assert_within("kernel draws", m, se, 8.0, 3.0);
}

#[test]
fn both_samplers_match_stationary_law_per_state() {
    let chain = oracle_chain();
    let pi = chain.stationary().unwrap();
    let cfg = FactoryConfig::new(0.25, 0.125).unwrap();
    let n = 100_000;
    for (algo, seed) in [(Algorithm::Imputation, 6), (Algorithm::Multigamma, 7)] {
        let reps = run(&chain, cfg, algo, n, seed);
        let f = freq(&reps.iter().map(|r| r.sample).collect::<Vec<_>>(), 5);
        for (x, (a, b)) in f.iter().zip(&pi).enumerate() {
            assert_within(&format!("{algo:?} state {x}"), *a, (b * (1.0 - b) / n as f64).sqrt(), *b, 4.0);
        }
    }
}

#[test]
fn cost_equivalence_between_samplers() {
    let chain = oracle_chain();
    let cfg = FactoryConfig::new(0.25, 0.125).unwrap();
    let n = 50_000;
    let imp: Vec<f64> = run(&chain, cfg, Algorithm::Imputation, n, 8)
        .iter()
        .map(|r| r.cost.kernel_draws as f64)
        .collect();
    let mg = run(&chain, cfg, Algorithm::Multigamma, n, 9);
    let mg_draws: Vec<f64> = mg.iter().map(|r| r.cost.kernel_draws as f64).collect();
    let mg_sub: Vec<f64> = mg.iter().map(|r| r.cost.subcoin_flips as f64).collect();
    let (a, sa) = mean_se(&imp);
    let (b, sb) = mean_se(&mg_draws);
    assert_within("imputation - multigamma draws", a - b, (sa * sa + sb * sb).sqrt(), 0.0, 4.0);
    let (m, se) = mean_se(&mg_sub);
    assert_within("multigamma subcoins", m, se, 7.0, 3.0);
}

#[test]
fn multigamma_on_atom_only_kernel_returns_atom() {
    let to_atom = FiniteChain::iid(vec![1.0, 0.0, 0.0], 0).unwrap();
    let cfg = FactoryConfig::new(0.9, 0.5).unwrap();
    for r in run(&to_atom, cfg, Algorithm::Multigamma, 1_000, 10) {
        assert_eq!(r.sample, 0);
        assert_eq!(r.cost.kernel_draws, 0);
    }
}

#[test]
fn tours_of_an_atom_only_kernel_have_length_one() {
    let to_atom = FiniteChain::iid(vec![1.0, 0.0], 0).unwrap();
    let mut rng = from_seed(11);
    for _ in 0..100 {
        let t = simulate_tour(&to_atom, 10, &mut rng).unwrap();
        assert_eq!(t.length(), 1);
        assert_eq!(t.states, vec![0]);
    }
}

#[test]
fn mean_tour_length_is_inverse_atom_mass() {
    let chain = oracle_chain();
    let pi = chain.stationary().unwrap();
    let mut rng = from_seed(12);
    let lens: Vec<f64> = (0..50_000)
        .map(|_| simulate_tour(&chain, 1_000_000, &mut rng).unwrap().length() as f64)
        .collect();
    let (m, se) = mean_se(&lens);
    assert_within("Kac", m, se, 1.0 / pi[0], 3.0);
}

#[test]
fn iid_tour_lengths_are_geometric() {
    let q = 0.3;
    let chain = FiniteChain::iid(vec![q, 1.0 - q], 0).unwrap();
    let mut rng = from_seed(13);
    let n = 20_000;
    let cells = 12;
    let mut counts = vec![0f64; cells];
    for _ in 0..n {
        let l = simulate_tour(&chain, 1_000_000, &mut rng).unwrap().length();
        counts[(l - 1).min(cells - 1)] += 1.0;
    }
    let mut stat = 0.0;
    for (i, c) in counts.iter().enumerate() {
        let p = if i + 1 < cells {
            q * (1.0 - q).powi(i as i32)
        } else {
            (1.0 - q).powi(i as i32)
        };
        let e = p * n as f64;
        stat += (c - e).powi(2) / e;
    }
    let pval = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat);
    assert!(pval > 0.01, "chi2 {stat}, p {pval}");
}

#[test]
fn tour_budget_is_an_error() {
    let no_return = FiniteChain::new(vec![vec![0.0, 1.0], vec![0.0, 1.0]], 0).unwrap();
    let err = simulate_tour(&no_return, 100, &mut from_seed(14)).unwrap_err();
    assert!(matches!(err, atomic_regen::Error::BudgetExceeded { .. }));
}

#[test]
fn overstated_beta_surfaces_as_budget_error_with_context() {
    // min p(x) is 0.25 but beta claims 0.9; with a small flip budget the
    // walk runs out and the error names the state.
    let chain = oracle_chain();
    let mut cfg = FactoryConfig::new(0.9, 0.45).unwrap();
    cfg.flip_budget = 20;
    let sampler = PerfectSampler::new(&chain, cfg);
    let mut rng = from_seed(15);
    let mut saw_context = false;
    for _ in 0..200 {
        match sampler.imputation(&mut rng) {
            Err(atomic_regen::Error::BudgetExceeded { context, .. }) => {
                saw_context |= context.is_some_and(|c| c.contains("beta"));
            }
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => {}
        }
    }
    assert!(saw_context);
}

#[test]
fn diagnostic_trace_counts_states() {
    let chain = oracle_chain();
    let mut sampler = PerfectSampler::new(&chain, FactoryConfig::new(0.2, 0.1).unwrap());
    sampler.diagnose = Some(1_000);
    let mut rng = from_seed(16);
    for _ in 0..200 {
        let r = sampler.imputation(&mut rng).unwrap();
        let t = r.diagnostics.unwrap();
        // The atom plus one state per kernel draw before the output.
        assert!(t.states_checked >= 1 && t.states_checked <= r.cost.kernel_draws);
        assert!(t.flips >= t.states_checked);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reports_are_seed_deterministic(seed in any::<u64>(), multigamma in any::<bool>()) {
        let chain = oracle_chain();
        let sampler = PerfectSampler::new(&chain, FactoryConfig::new(0.25, 0.125).unwrap());
        let algo = if multigamma { Algorithm::Multigamma } else { Algorithm::Imputation };
        let a = sampler.sample(algo, &mut substream(seed, 3)).unwrap();
        let b = sampler.sample(algo, &mut substream(seed, 3)).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn report_cost_invariants(seed in any::<u64>()) {
        let chain = oracle_chain();
        let sampler = PerfectSampler::new(&chain, FactoryConfig::new(0.25, 0.125).unwrap());
        let mut rng = from_seed(seed);
        let imp = sampler.imputation(&mut rng).unwrap();
        prop_assert!(imp.cost.kernel_draws >= 1);
        prop_assert!(imp.cost.subcoin_flips <= imp.cost.raw_flips);
        let mg = sampler.multigamma(&mut rng).unwrap();
        // Zero residual steps means the output is the atom.
        if mg.cost.kernel_draws == 0 {
            prop_assert_eq!(mg.sample, 0);
        }
    }

    #[test]
    fn tour_structure(seed in any::<u64>()) {
        let chain = oracle_chain();
        let t = simulate_tour(&chain, 1_000_000, &mut from_seed(seed)).unwrap();
        prop_assert!(t.length() >= 1);
        prop_assert_eq!(t.length() as u64, t.cost.kernel_draws);
        prop_assert!(chain.is_atom(t.states.last().unwrap()));
        prop_assert!(t.states[..t.length() - 1].iter().all(|s| !chain.is_atom(s)));
    }
}
