use evomerge::es::{centered_ranks, EsConfig, EsState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn oracle_ranks(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| {
            let below = (0..n).filter(|&j| f[j] < f[i] || (f[j] == f[i] && j < i)).count();
            below as f64 / (n - 1) as f64 - 0.5
        })
        .collect()
}

/// One generation written out in scalar form: mirrored gradient, Adam with
/// bias-corrected step size, then decays.
fn oracle_step(es: &EsState<f64>, fitness: &[f64]) -> (Vec<f64>, f64, f64) {
    let pop = es.ask();
    let c = &es.config;
    let n = fitness.len();
    let shaped = oracle_ranks(fitness);
    let t = (es.adam_step + 1) as i32;
    let step = es.lr * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t));
    let mu = (0..es.dim())
        .map(|i| {
            let mut g = 0.0;
            for k in 0..n {
                let e = pop.noise(k / 2)[i];
                g += shaped[k] * if k % 2 == 0 { e } else { -e };
            }
            g /= n as f64 * es.sigma;
            let grad = -g + c.weight_decay * es.mu[i];
            let m = c.beta1 * es.adam_m[i] + (1.0 - c.beta1) * grad;
            let v = c.beta2 * es.adam_v[i] + (1.0 - c.beta2) * grad * grad;
            es.mu[i] - step * m / (v.sqrt() + c.epsilon)
        })
        .collect();
    let lr = (es.lr * c.lr_decay).max(c.lr_limit);
    let sigma = (es.sigma * c.sigma_decay).max(c.sigma_limit);
    (mu, lr, sigma)
}

fn sphere(x: &[f64]) -> f64 {
    -x.iter().map(|v| v * v).sum::<f64>()
}

#[test]
fn tell_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = EsConfig { weight_decay: 0.01, ..EsConfig::default().with_population(12) };
    let mu0: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut es = EsState::new(cfg, mu0, 4).unwrap();
    for _ in 0..25 {
        let fitness: Vec<f64> = (0..12).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (mu, lr, sigma) = oracle_step(&es, &fitness);
        es.tell(&fitness).unwrap();
        for (a, b) in es.mu.iter().zip(&mu) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!((es.lr, es.sigma), (lr, sigma));
    }
}

#[test]
fn converges_on_sphere() {
    let mut es = EsState::new(EsConfig::default().with_population(64), vec![3.0, 3.0], 0).unwrap();
    for _ in 0..300 {
        let fit: Vec<f64> = es.ask().candidates().iter().map(|c| sphere(c)).collect();
        es.tell(&fit).unwrap();
    }
    let norm = sphere(&es.mu).abs().sqrt();
    assert!(norm < 0.1, "|mu| = {norm}");
}

#[test]
fn mirrored_offsets_cancel_exactly() {
    let mut es = EsState::new(EsConfig::default().with_population(16), vec![0.5; 9], 3).unwrap();
    for _ in 0..50 {
        let pop = es.ask();
        let mut sum = vec![0.0; es.dim()];
        for k in 0..pop.len() {
            sum.iter_mut().zip(pop.offset(k)).for_each(|(s, o)| *s += o);
        }
        assert!(sum.iter().all(|&s| s == 0.0));
        let fit: Vec<f64> = pop.candidates().iter().map(|c| sphere(c)).collect();
        es.tell(&fit).unwrap();
    }
}

#[test]
fn schedules_are_monotone_and_bounded() {
    let cfg = EsConfig {
        lr_decay: 0.9,
        sigma_decay: 0.8,
        ..EsConfig::default().with_population(4)
    };
    let mut es = EsState::new(cfg.clone(), vec![0.0; 3], 0).unwrap();
    let (mut lr, mut sigma) = (es.lr, es.sigma);
    for _ in 0..100 {
        es.tell(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(es.lr <= lr && es.lr >= cfg.lr_limit);
        assert!(es.sigma <= sigma && es.sigma >= cfg.sigma_limit);
        (lr, sigma) = (es.lr, es.sigma);
    }
    assert_eq!((es.lr, es.sigma), (cfg.lr_limit, cfg.sigma_limit));
}

#[test]
fn same_seed_same_trajectory() {
    let run = || {
        let mut es = EsState::new(EsConfig::default().with_population(8), vec![1.0; 5], 77).unwrap();
        for _ in 0..20 {
            let fit: Vec<f64> = es.ask().candidates().iter().map(|c| sphere(c)).collect();
            es.tell(&fit).unwrap();
        }
        es
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn ranks_are_a_centered_permutation(f in prop::collection::vec(-1e6f64..1e6, 2..40)) {
        let r = centered_ranks(&f).unwrap();
        prop_assert_eq!(&r, &oracle_ranks(&f));
        let mut sorted = r.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(sorted[0], -0.5);
        prop_assert_eq!(sorted[sorted.len() - 1], 0.5);
        prop_assert!(r.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn updates_depend_only_on_order(
        f in prop::collection::vec(-100f64..100.0, 10),
        scale in 0.01f64..100.0,
        shift in -50f64..50.0,
    ) {
        let cfg = EsConfig::default().with_population(10);
        let mut a = EsState::new(cfg.clone(), vec![0.2; 4], 5).unwrap();
        let mut b = a.clone();
        a.tell(&f).unwrap();
        let g: Vec<f64> = f.iter().map(|x| (x * scale + shift).tanh() * 1e3 + x.powi(3)).collect();
        // Only strictly increasing images of f are admissible here.
        let increasing = (0..10).all(|i| (0..10).all(|j| (f[i] < f[j]) == (g[i] < g[j]) && (f[i] == f[j]) == (g[i] == g[j])));
        prop_assume!(increasing);
        b.tell(&g).unwrap();
        prop_assert_eq!(a.mu, b.mu);
    }
}

#[test]
fn nan_fitness_ranks_lowest() {
    let r = centered_ranks(&[1.0, f64::NAN, 0.5]).unwrap();
    assert_eq!(r, vec![0.5, -0.5, 0.0]);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let mut es = EsState::new(EsConfig::default().with_population(6), vec![0.1, -2.0, 3.3], 9).unwrap();
    es.tell(&[1.0, 5.0, 2.0, 0.0, 3.0, 4.0]).unwrap();
    let blob = es.checkpoint();
    let back: EsState<f64> = EsState::restore(&blob).unwrap();
    assert_eq!(back, es);
    assert_eq!(back.checkpoint(), blob);
}
