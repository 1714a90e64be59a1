use evomerge::net::{NetworkSpec, RuleVariant, SynapseRules, W_MAX};
use evomerge::rules::{RuleParams, RuleSet};
use evomerge::Network;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-synapse reference: walks (layer, post, pre) explicitly.
fn scalar_oracle(net: &Network, rules: &RuleSet<f64>) -> Vec<Vec<f64>> {
    let spec = net.spec();
    let acts = net.activations().expect("forward ran");
    let mut out = Vec::new();
    for layer in 0..spec.n_weight_layers() {
        let n_pre = spec.layer_sizes[layer];
        let n_post = spec.layer_sizes[layer + 1];
        let mut w = vec![0.0; n_pre * n_post];
        for post in 0..n_post {
            for pre in 0..n_pre {
                let s = spec.synapse_index(layer, post, pre);
                let p = &rules.rules[rules.assignment[s]];
                let (oi, oj) = (acts[layer][pre], acts[layer + 1][post]);
                let hebb = p.a * oi * oj + p.b * oi + p.c * oj;
                let dw = match rules.variant {
                    RuleVariant::AbcdAlpha => p.alpha * (hebb + p.d),
                    RuleVariant::Abc => hebb,
                };
                let v = net.weight(layer, post, pre) + dw;
                w[post * n_pre + pre] = v.clamp(-W_MAX, W_MAX);
            }
        }
        out.push(w);
    }
    out
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Network, RuleSet<f64>, Vec<f64>) {
    let depth = rng.random_range(2..=4);
    let layers: Vec<usize> = loop {
        let l: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=6)).collect();
        let n: usize = l.windows(2).map(|w| w[0] * w[1]).sum();
        if n <= 64 {
            break l;
        }
    };
    let variant = if rng.random_bool(0.5) { RuleVariant::AbcdAlpha } else { RuleVariant::Abc };
    let spec = NetworkSpec::plastic_net(layers.clone(), variant).unwrap();
    let n_syn = spec.connection_count();
    let mut net = Network::new(spec).unwrap();
    for layer in 0..layers.len() - 1 {
        for post in 0..layers[layer + 1] {
            for pre in 0..layers[layer] {
                net.set_weight(layer, post, pre, rng.random_range(-5.0..=5.0));
            }
        }
    }
    let n_rules = rng.random_range(1..=n_syn);
    let rules = (0..n_rules)
        .map(|_| {
            let mut g = || rng.random_range(-2.0..2.0);
            RuleParams::new(g(), g(), g(), g(), g())
        })
        .collect();
    let assignment = (0..n_syn).map(|_| rng.random_range(0..n_rules)).collect();
    let obs = (0..layers[0]).map(|_| rng.random_range(-3.0..3.0)).collect();
    (net, RuleSet { variant, rules, assignment }, obs)
}

#[test]
fn vectorized_update_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let (mut net, rules, obs) = random_instance(&mut rng);
        net.forward(&obs).unwrap();
        let expected = scalar_oracle(&net, &rules);
        let mut expanded = net.clone();
        net.hebbian_update(&rules).unwrap();
        expanded.hebbian_update_expanded(&SynapseRules::new(&rules).unwrap()).unwrap();
        for (layer, want) in expected.iter().enumerate() {
            for (got, want) in net.layer_weights(layer).iter().zip(want) {
                assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
            }
            assert_eq!(net.layer_weights(layer), expanded.layer_weights(layer));
        }
    }
}

#[test]
fn clamp_holds_over_long_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let (mut net, mut rules, obs) = random_instance(&mut rng);
        for r in &mut rules.rules {
            *r = RuleParams::new(r.a * 10.0, r.b * 10.0, r.c, r.d * 10.0, r.alpha.abs() + 1.0);
        }
        for _ in 0..200 {
            net.forward(&obs).unwrap();
            net.hebbian_update(&rules).unwrap();
            assert!(net.max_abs_weight() <= W_MAX);
        }
    }
}

#[test]
fn zero_rules_keep_weights_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let (mut net, mut rules, obs) = random_instance(&mut rng);
        rules.rules.iter_mut().for_each(|r| *r = RuleParams::zero());
        net.forward(&obs).unwrap();
        let before = net.clone();
        net.hebbian_update(&rules).unwrap();
        for layer in 0..net.spec().n_weight_layers() {
            let same = net
                .layer_weights(layer)
                .iter()
                .zip(before.layer_weights(layer))
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same);
        }
    }
}

#[test]
fn forward_is_pure() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut net, _, obs) = random_instance(&mut rng);
    let a = net.forward(&obs).unwrap().to_vec();
    let b = net.forward(&obs).unwrap().to_vec();
    assert_eq!(a, b);
}
