use atomic_regen::models::config::{Model, ModelConfig};
use atomic_regen::models::pmmh::{Likelihood, PmmhSettings, PmmhState};
use atomic_regen::models::*;
use atomic_regen::regen::AtomicKernel;
use atomic_regen::stream::{from_seed, substream};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn gauss(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Forward filter on a uniform grid with the trapezoid rule.
fn grid_log_evidence(m: &LinearGaussianModel) -> f64 {
    let h = 0.01;
    let xs: Vec<f64> = (0..=2400).map(|i| -12.0 + i as f64 * h).collect();
    let mut alpha: Vec<f64> = xs
        .iter()
        .map(|&x| gauss(x, m.mu_mean, m.mu_var) * gauss(m.observations[0], m.c_coef * x, m.r_var))
        .collect();
    for &y in &m.observations[1..] {
        alpha = xs
            .iter()
            .map(|&x2| {
                let pred: f64 = xs
                    .iter()
                    .zip(&alpha)
                    .map(|(&x, &a)| a * gauss(x2, m.a_coef * x, m.q_var))
                    .sum::<f64>()
                    * h;
                pred * gauss(y, m.c_coef * x2, m.r_var)
            })
            .collect();
    }
    (alpha.iter().sum::<f64>() * h).ln()
}

#[test]
fn kalman_evidence_matches_quadrature() {
    let mut m = LinearGaussianModel::standard(vec![0.4, -1.1, 2.3, 0.7]);
    assert!((m.log_evidence() - grid_log_evidence(&m)).abs() < 1e-6);
    m.a_coef = -0.5;
    m.q_var = 0.7;
    m.c_coef = 1.4;
    m.r_var = 0.3;
    m.mu_mean = 0.5;
    assert!((m.log_evidence() - grid_log_evidence(&m)).abs() < 1e-6);
    let incr: f64 = m.exact_increments().iter().map(|p| p.ln()).sum();
    assert!((incr - m.log_evidence()).abs() < 1e-10);
}

#[test]
fn smoother_matches_sampled_posterior_paths() {
    let m = LinearGaussianModel::standard(vec![0.4, -1.1, 2.3]);
    let sm = m.kalman_smoother();
    let mut rng = from_seed(1);
    let draws = 40_000;
    let mut sums = vec![0.0; 3];
    for _ in 0..draws {
        for (s, z) in sums.iter_mut().zip(m.sample_posterior_path(&mut rng)) {
            *s += z;
        }
    }
    for (s, (mean, var)) in sums.iter().zip(&sm) {
        let se = (var / draws as f64).sqrt();
        assert!((s / draws as f64 - mean).abs() < 4.0 * se);
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let n = 2000;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `sup` density ratio over a grid times the inverse of the smallest
/// one-step mass into `target`, all from first principles.
fn grid_a(from: (f64, f64), target: (f64, f64), sigma2: f64) -> f64 {
    let grid = |(lo, hi): (f64, f64)| -> Vec<f64> { (0..=100).map(|i| lo + (hi - lo) * i as f64 / 100.0).collect() };
    let (zs, ys) = (grid(from), grid(target));
    let mut ratio: f64 = 0.0;
    for &y in &ys {
        let dens: Vec<f64> = zs.iter().map(|&z| gauss(y, z, sigma2)).collect();
        let max = dens.iter().cloned().fold(0.0, f64::max);
        let min = dens.iter().cloned().fold(f64::INFINITY, f64::min);
        ratio = ratio.max(max / min);
    }
    let mass = zs
        .iter()
        .map(|&z| simpson(|y| gauss(y, z, sigma2), target.0, target.1))
        .fold(f64::INFINITY, f64::min);
    ratio / mass
}

#[test]
fn absorbing_constant_matches_grid() {
    let m = AbsorbingMediumModel::new(0.0, 1.0, 0.25, 10).unwrap();
    let a = absorbing_a_bound(&m).unwrap();
    assert!((a - grid_a((0.0, 1.0), (0.0, 1.0), 0.25)).abs() / a < 1e-6);
    assert!((a - 15.4826).abs() < 1e-3, "{a}");
}

#[test]
fn sensor_constant_matches_grid() {
    let m = SensorHmmModel::new(5.0, vec![0, 3, 2]).unwrap();
    let a = sensor_a_bound(&m);
    let widest = grid_a((0.0, 1.0), (3.0, 4.0), 5.0);
    assert!((a - widest).abs() / a < 1e-6, "{a} vs {widest}");
    assert!(grid_a((3.0, 4.0), (2.0, 3.0), 5.0) < widest);
    assert!((a - 37.9687).abs() < 1e-3, "{a}");
}

fn exact_pmmh() -> AtomizedPmmhKernel {
    let settings = PmmhSettings {
        likelihood: Likelihood::Exact,
        proposal_sd: 0.15,
        prior_mean: [0.9, 1.0, 1.0, 1.0],
        prior_sd: 0.5,
        ..Default::default()
    };
    AtomizedPmmhKernel::new(vec![0.3, -0.4, 1.2, 0.8, -0.1], settings, -7.0).unwrap()
}

#[test]
fn exact_pmmh_leaves_the_atom_at_the_ideal_rate() {
    let k = exact_pmmh();
    // Ideal acceptance from the atom: E over θ' ~ q(θ*, ·) of min(1, r(θ')),
    // computed with independent proposal draws and the Kalman likelihood.
    let mut rng = from_seed(2);
    let reps = 20_000;
    let ideal: Vec<f64> = (0..reps)
        .map(|_| {
            let mut t = k.settings.theta_star;
            for v in t.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += k.settings.proposal_sd * z;
            }
            let ll = k.log_likelihood(&t, &mut rng).unwrap();
            k.log_ratio_from_atom(&t, ll).exp().min(1.0)
        })
        .collect();
    let ideal_mean = ideal.iter().sum::<f64>() / reps as f64;
    let ideal_var = ideal.iter().map(|x| (x - ideal_mean).powi(2)).sum::<f64>() / (reps - 1) as f64;

    let mut rng = from_seed(3);
    let left = (0..reps).filter(|_| !k.is_atom(&k.sample(&PmmhState::Atom, &mut rng))).count();
    let emp = left as f64 / reps as f64;
    let se = ((ideal_var + emp * (1.0 - emp)) / reps as f64).sqrt();
    assert!((emp - ideal_mean).abs() < 4.0 * se, "{emp} vs {ideal_mean}");
    assert!(emp > 0.05 && emp < 0.95);
}

#[test]
fn exact_pmmh_enters_the_atom_at_the_ideal_rate() {
    let k = exact_pmmh();
    let theta = [0.85, 0.9, 1.1, 1.05];
    let ll = k.log_likelihood(&theta, &mut from_seed(4)).unwrap();
    let want = (1.0 - k.settings.w_mix) * k.log_ratio_to_atom(&theta, ll).exp().min(1.0);
    let x = PmmhState::Point { theta, log_w: ll };
    let mut rng = from_seed(5);
    let reps = 20_000;
    let hits = (0..reps).filter(|_| k.is_atom(&k.sample(&x, &mut rng))).count();
    let emp = hits as f64 / reps as f64;
    let se = (want * (1.0 - want) / reps as f64).sqrt().max(1e-4);
    assert!((emp - want).abs() < 4.0 * se, "{emp} vs {want}");
}

#[test]
fn exact_likelihood_is_kalman() {
    let k = exact_pmmh();
    let theta = [0.7, 1.2, 0.9, 0.8];
    let lg = k.model(&theta).unwrap();
    assert_eq!(k.log_likelihood(&theta, &mut from_seed(6)).unwrap(), lg.log_evidence());
    assert!(k.model(&[0.7, -1.0, 0.9, 0.8]).is_none());
}

fn power_iteration(p: &[Vec<f64>]) -> Vec<f64> {
    let k = p.len();
    let mut pi = vec![1.0 / k as f64; k];
    for _ in 0..5_000 {
        let mut next = vec![0.0; k];
        for i in 0..k {
            for j in 0..k {
                next[j] += pi[i] * p[i][j];
            }
        }
        pi = next;
    }
    pi
}

#[test]
fn stationary_oracle_matches_power_iteration() {
    for i in 0..50 {
        let mut rng = substream(7, i);
        let p: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                let row: Vec<f64> = (0..5).map(|_| rng.random::<f64>() + 0.01).collect();
                let s: f64 = row.iter().sum();
                row.into_iter().map(|v| v / s).collect()
            })
            .collect();
        let oracle = finite_chain_oracle(&p).unwrap();
        for (a, b) in oracle.iter().zip(power_iteration(&p)) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}

#[test]
fn bad_chains_are_rejected() {
    assert!(FiniteChain::new(vec![vec![0.5, 0.4], vec![0.5, 0.5]], 0).is_err());
    assert!(FiniteChain::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]], 2).is_err());
    assert!(ModelConfig::from_json(r#"{"model": "nope"}"#).is_err());
    assert!(ModelConfig::from_json(r#"{"model": "absorbing", "n": 5, "lo": 1, "hi": 0}"#)
        .unwrap()
        .resolve()
        .is_err());
}

#[test]
fn example_configs_resolve() {
    let text = r#"{"model": "sensor", "sigma2": 5.0, "observations": {"simulate": {"seed": 1, "n": 100}}, "max_gap": 3}"#;
    match ModelConfig::from_json(text).unwrap().resolve().unwrap() {
        Model::Sensor(s) => {
            assert_eq!(s.observations.len(), 100);
            assert_eq!(s.max_gap(), 3);
        }
        other => panic!("resolved to {}", other.name()),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trip_is_bit_exact(ys in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..20),
                                     a in -2.0f64..2.0, q in 1e-3f64..10.0) {
        let cfg = ModelConfig::LinearGaussian {
            a_coef: a,
            q_var: q,
            c_coef: 1.0,
            r_var: 1.0,
            mu_mean: 0.0,
            mu_var: 1.0,
            observations: config::Observations::Values(ys.clone()),
        };
        let back = ModelConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(&back, &cfg);
        match back.resolve().unwrap() {
            Model::LinearGaussian(m) => {
                for (x, y) in m.observations.iter().zip(&ys) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
                prop_assert_eq!(m.a_coef.to_bits(), a.to_bits());
            }
            _ => prop_assert!(false),
        }
    }
}
