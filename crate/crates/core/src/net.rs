//! Bias-free tanh feedforward networks and the per-step ABCD weight update.
//!
//! Weights of layer `k` are stored as one row-major matrix of shape
//! `(layer_sizes[k + 1], layer_sizes[k])`: row = postsynaptic neuron,
//! column = presynaptic neuron. The global synapse index (used by genomes and
//! rule assignments) walks layers in order and each matrix row-major, so
//! synapse `pre -> post` of layer `k` sits at
//! `offset(k) + post * layer_sizes[k] + pre`.

use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::RuleSet;
use crate::scalar::Scalar;
use crate::seed;

/// Absolute bound applied to every weight after a plastic update.
pub const W_MAX: f64 = 5.0;

/// Half-width of the uniform range plastic weights are drawn from.
pub const INIT_WEIGHT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleVariant {
    /// `dw = alpha * (A*pre*post + B*pre + C*post + D)`
    AbcdAlpha,
    /// `dw = A*pre*post + B*pre + C*post`
    Abc,
}

impl RuleVariant {
    pub fn params_per_rule(self) -> usize {
        match self {
            RuleVariant::AbcdAlpha => 5,
            RuleVariant::Abc => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub plastic: bool,
    pub rule_variant: RuleVariant,
}

impl NetworkSpec {
    pub const DEFAULT_LAYERS: [usize; 4] = [28, 128, 64, 8];

    pub fn new(layer_sizes: Vec<usize>, plastic: bool, rule_variant: RuleVariant) -> Result<Self> {
        let spec = NetworkSpec {
            layer_sizes,
            plastic,
            rule_variant,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn static_net(layer_sizes: Vec<usize>) -> Result<Self> {
        Self::new(layer_sizes, false, RuleVariant::AbcdAlpha)
    }

    pub fn plastic_net(layer_sizes: Vec<usize>, rule_variant: RuleVariant) -> Result<Self> {
        Self::new(layer_sizes, true, rule_variant)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "a network needs at least 2 layers, got {}",
                self.layer_sizes.len()
            )));
        }
        if self.layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive: {:?}",
                self.layer_sizes
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec has layers")
    }

    pub fn n_weight_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn connection_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1]).sum()
    }

    /// Global synapse index of the first weight in each layer.
    pub fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.n_weight_layers());
        let mut acc = 0;
        for w in self.layer_sizes.windows(2) {
            offsets.push(acc);
            acc += w[0] * w[1];
        }
        offsets
    }

    /// Global index of synapse `pre -> post` in weight layer `layer`.
    pub fn synapse_index(&self, layer: usize, post: usize, pre: usize) -> usize {
        let before: usize = self.layer_sizes[..=layer]
            .windows(2)
            .map(|w| w[0] * w[1])
            .sum();
        before + post * self.layer_sizes[layer] + pre
    }
}

/// Weights plus the layer outputs of the most recent forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState<T> {
    spec: NetworkSpec,
    weights: Vec<Vec<T>>,
    activations: Vec<Vec<T>>,
    has_activations: bool,
}

impl<T: Scalar> NetworkState<T> {
    /// Network with all weights zero.
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let weights = spec
            .layer_sizes
            .windows(2)
            .map(|w| vec![T::zero(); w[0] * w[1]])
            .collect();
        let activations = spec.layer_sizes.iter().map(|&n| vec![T::zero(); n]).collect();
        Ok(NetworkState {
            spec,
            weights,
            activations,
            has_activations: false,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Row-major `(post, pre)` weight matrix of one layer.
    pub fn layer_weights(&self, layer: usize) -> &[T] {
        &self.weights[layer]
    }

    pub fn weight(&self, layer: usize, post: usize, pre: usize) -> T {
        self.weights[layer][post * self.spec.layer_sizes[layer] + pre]
    }

    pub fn set_weight(&mut self, layer: usize, post: usize, pre: usize, value: T) {
        let n_in = self.spec.layer_sizes[layer];
        self.weights[layer][post * n_in + pre] = value;
    }

    /// Per-layer outputs of the last forward pass; index 0 is the raw input.
    pub fn activations(&self) -> Option<&[Vec<T>]> {
        self.has_activations.then_some(self.activations.as_slice())
    }

    pub fn max_abs_weight(&self) -> T {
        self.weights
            .iter()
            .flatten()
            .fold(T::zero(), |m, w| m.max(w.abs()))
    }

    pub fn forward(&mut self, obs: &[T]) -> Result<&[T]> {
        let n_in = self.spec.input_dim();
        if obs.len() != n_in {
            return Err(Error::InputShape {
                expected: n_in,
                got: obs.len(),
            });
        }
        self.activations[0].copy_from_slice(obs);
        for layer in 0..self.spec.n_weight_layers() {
            let (done, rest) = self.activations.split_at_mut(layer + 1);
            let input = &done[layer];
            let output = &mut rest[0];
            let n_in = input.len();
            for (post, out) in output.iter_mut().enumerate() {
                let row = &self.weights[layer][post * n_in..(post + 1) * n_in];
                let sum = row
                    .iter()
                    .zip(input)
                    .fold(T::zero(), |acc, (&w, &x)| acc + w * x);
                *out = sum.tanh();
            }
        }
        self.has_activations = true;
        Ok(self.activations.last().expect("at least two layers"))
    }

    /// Applies one ABCD update to every synapse using its assigned rule, then
    /// clamps weights to `[-W_MAX, W_MAX]`.
    pub fn hebbian_update(&mut self, rules: &RuleSet<T>) -> Result<()> {
        self.hebbian_update_observed(rules, |_, _, _| {})
    }

    /// Same as [`hebbian_update`](Self::hebbian_update), calling
    /// `observe(synapse, rule, dw)` with every unclamped increment.
    pub fn hebbian_update_observed<F>(&mut self, rules: &RuleSet<T>, mut observe: F) -> Result<()>
    where
        F: FnMut(usize, usize, T),
    {
        if !self.has_activations {
            return Err(Error::State(
                "hebbian update requires a prior forward pass".into(),
            ));
        }
        let n_syn = self.spec.connection_count();
        if rules.assignment.len() != n_syn {
            return Err(Error::Encoding(format!(
                "assignment covers {} synapses, network has {}",
                rules.assignment.len(),
                n_syn
            )));
        }
        if let Some(&bad) = rules.assignment.iter().find(|&&r| r >= rules.rules.len()) {
            return Err(Error::Encoding(format!(
                "assignment references rule {bad} but only {} rules exist",
                rules.rules.len()
            )));
        }
        let w_max = T::of(W_MAX);
        let variant = rules.variant;
        let mut synapse = 0;
        for layer in 0..self.spec.n_weight_layers() {
            let pre_out = &self.activations[layer];
            let post_out = &self.activations[layer + 1];
            let weights = &mut self.weights[layer];
            let n_in = pre_out.len();
            for (post, &o_j) in post_out.iter().enumerate() {
                let row = &mut weights[post * n_in..(post + 1) * n_in];
                for (w, &o_i) in row.iter_mut().zip(pre_out) {
                    let r = rules.assignment[synapse];
                    let p = &rules.rules[r];
                    let dw = match variant {
                        RuleVariant::AbcdAlpha => {
                            p.alpha * (p.a * o_i * o_j + p.b * o_i + p.c * o_j + p.d)
                        }
                        RuleVariant::Abc => p.a * o_i * o_j + p.b * o_i + p.c * o_j,
                    };
                    observe(synapse, r, dw);
                    *w = (*w + dw).max(-w_max).min(w_max);
                    synapse += 1;
                }
            }
        }
        Ok(())
    }

    /// [`hebbian_update`](Self::hebbian_update) with rules already expanded to
    /// one coefficient set per synapse. Produces identical weights.
    pub fn hebbian_update_expanded(&mut self, rules: &SynapseRules<T>) -> Result<()> {
        if !self.has_activations {
            return Err(Error::State(
                "hebbian update requires a prior forward pass".into(),
            ));
        }
        if rules.a.len() != self.spec.connection_count() {
            return Err(Error::Encoding(format!(
                "expanded rules cover {} synapses, network has {}",
                rules.a.len(),
                self.spec.connection_count()
            )));
        }
        let w_max = T::of(W_MAX);
        let mut start = 0;
        for layer in 0..self.spec.n_weight_layers() {
            let pre_out = &self.activations[layer];
            let post_out = &self.activations[layer + 1];
            let n_in = pre_out.len();
            for (post, &o_j) in post_out.iter().enumerate() {
                let row = &mut self.weights[layer][post * n_in..(post + 1) * n_in];
                let span = start..start + n_in;
                let (a, b, c) = (&rules.a[span.clone()], &rules.b[span.clone()], &rules.c[span.clone()]);
                match rules.variant {
                    RuleVariant::AbcdAlpha => {
                        let (d, alpha) = (&rules.d[span.clone()], &rules.alpha[span]);
                        for i in 0..n_in {
                            let o_i = pre_out[i];
                            let dw = alpha[i] * (a[i] * o_i * o_j + b[i] * o_i + c[i] * o_j + d[i]);
                            row[i] = (row[i] + dw).max(-w_max).min(w_max);
                        }
                    }
                    RuleVariant::Abc => {
                        for i in 0..n_in {
                            let o_i = pre_out[i];
                            let dw = a[i] * o_i * o_j + b[i] * o_i + c[i] * o_j;
                            row[i] = (row[i] + dw).max(-w_max).min(w_max);
                        }
                    }
                }
                start += n_in;
            }
        }
        Ok(())
    }

    /// Draws every weight i.i.d. from `U(-0.1, 0.1)`.
    pub fn init_weights(&mut self, seed: u64) {
        let mut rng = seed::rng(seed, &[seed::STREAM_WEIGHTS]);
        let dist = Uniform::new_inclusive(-INIT_WEIGHT_RANGE, INIT_WEIGHT_RANGE)
            .expect("valid uniform range");
        for w in self.weights.iter_mut().flatten() {
            *w = T::of(dist.sample(&mut rng));
        }
        self.has_activations = false;
    }

    /// Fills the weights from a flat genome in global synapse order.
    pub fn set_genome_static(&mut self, genome: &[T]) -> Result<()> {
        let n = self.spec.connection_count();
        if genome.len() != n {
            return Err(Error::Encoding(format!(
                "static genome needs {n} values, got {}",
                genome.len()
            )));
        }
        let mut rest = genome;
        for layer in &mut self.weights {
            let (head, tail) = rest.split_at(layer.len());
            layer.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    pub fn genome_static(&self) -> Vec<T> {
        self.weights.iter().flatten().copied().collect()
    }
}

/// Rule coefficients gathered per synapse, in global synapse order.
#[derive(Debug, Clone, PartialEq)]
pub struct SynapseRules<T> {
    variant: RuleVariant,
    a: Vec<T>,
    b: Vec<T>,
    c: Vec<T>,
    d: Vec<T>,
    alpha: Vec<T>,
}

impl<T: Scalar> SynapseRules<T> {
    pub fn new(rules: &RuleSet<T>) -> Result<Self> {
        if let Some(&bad) = rules.assignment.iter().find(|&&r| r >= rules.rules.len()) {
            return Err(Error::Encoding(format!(
                "assignment references rule {bad} but only {} rules exist",
                rules.rules.len()
            )));
        }
        let gather = |f: fn(&crate::rules::RuleParams<T>) -> T| -> Vec<T> {
            rules.assignment.iter().map(|&r| f(&rules.rules[r])).collect()
        };
        Ok(SynapseRules {
            variant: rules.variant,
            a: gather(|p| p.a),
            b: gather(|p| p.b),
            c: gather(|p| p.c),
            d: gather(|p| p.d),
            alpha: gather(|p| p.alpha),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{RuleParams, RuleSet};

    fn net(sizes: &[usize]) -> NetworkState<f64> {
        NetworkState::new(NetworkSpec::static_net(sizes.to_vec()).unwrap()).unwrap()
    }

    fn single_rule(sizes: &[usize], rule: RuleParams<f64>) -> RuleSet<f64> {
        let n: usize = sizes.windows(2).map(|w| w[0] * w[1]).sum();
        RuleSet {
            variant: RuleVariant::AbcdAlpha,
            rules: vec![rule],
            assignment: vec![0; n],
        }
    }

    #[test]
    fn default_spec_connection_count() {
        let spec = NetworkSpec::static_net(NetworkSpec::DEFAULT_LAYERS.to_vec()).unwrap();
        assert_eq!(spec.connection_count(), 12_288);
        assert_eq!(spec.layer_offsets(), vec![0, 3584, 3584 + 8192]);
        assert_eq!(spec.synapse_index(1, 2, 3), 3584 + 2 * 128 + 3);
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(matches!(NetworkSpec::static_net(vec![3]), Err(Error::Config(_))));
        assert!(matches!(NetworkSpec::static_net(vec![3, 0, 2]), Err(Error::Config(_))));
    }

    #[test]
    fn zero_weights_give_zero_action() {
        let mut n = net(&[5, 4, 3]);
        let out = n.forward(&[1.0, -2.0, 3.0, 0.5, 7.0]).unwrap();
        assert_eq!(out, &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_weight_forward() {
        let mut n = net(&[1, 1]);
        n.set_weight(0, 0, 0, 0.5);
        let out = n.forward(&[1.0]).unwrap()[0];
        assert!((out - 0.462_117_157_260_009_8).abs() < 1e-12);
    }

    #[test]
    fn default_net_emits_eight_actions() {
        let spec = NetworkSpec::static_net(NetworkSpec::DEFAULT_LAYERS.to_vec()).unwrap();
        let mut n = NetworkState::<f64>::new(spec).unwrap();
        n.init_weights(3);
        let obs: Vec<f64> = (0..28).map(|i| (i as f64 * 0.37).sin()).collect();
        let out = n.forward(&obs).unwrap().to_vec();
        assert_eq!(out.len(), 8);
        assert!(out.iter().all(|v| v.abs() <= 1.0));
        let again = n.forward(&obs).unwrap().to_vec();
        assert_eq!(out, again);
    }

    #[test]
    fn forward_checks_input_length() {
        let mut n = net(&[3, 2]);
        assert!(matches!(
            n.forward(&[1.0, 2.0]),
            Err(Error::InputShape { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn update_needs_activations() {
        let mut n = net(&[2, 2]);
        let rules = single_rule(&[2, 2], RuleParams::zero());
        assert!(matches!(n.hebbian_update(&rules), Err(Error::State(_))));
    }

    #[test]
    fn update_rejects_assignment_gap() {
        let mut n = net(&[2, 2]);
        n.forward(&[1.0, 1.0]).unwrap();
        let mut rules = single_rule(&[2, 2], RuleParams::zero());
        rules.assignment.pop();
        assert!(matches!(n.hebbian_update(&rules), Err(Error::Encoding(_))));
        rules.assignment.push(3);
        assert!(matches!(n.hebbian_update(&rules), Err(Error::Encoding(_))));
    }

    #[test]
    fn zero_rule_is_identity() {
        let mut n = net(&[3, 4, 2]);
        n.init_weights(11);
        n.forward(&[0.3, -0.9, 2.0]).unwrap();
        let before = n.genome_static();
        n.hebbian_update(&single_rule(&[3, 4, 2], RuleParams::zero()))
            .unwrap();
        let after = n.genome_static();
        assert!(before
            .iter()
            .zip(&after)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn pure_hebb_term() {
        // tanh(40) rounds to exactly 1.0, giving o_i = o_j = 1.
        let mut n = net(&[1, 1]);
        n.set_weight(0, 0, 0, 40.0);
        n.forward(&[1.0]).unwrap();
        assert_eq!(n.activations().unwrap()[1][0], 1.0);
        n.set_weight(0, 0, 0, 0.0);
        let rule = RuleParams::new(1.0, 0.0, 0.0, 0.0, 1.0);
        n.hebbian_update(&single_rule(&[1, 1], rule)).unwrap();
        assert_eq!(n.weight(0, 0, 0), 1.0);
    }

    #[test]
    fn constant_term_scaled_by_alpha() {
        let mut n = net(&[3, 2]);
        n.forward(&[0.4, -0.1, 9.0]).unwrap();
        let rule = RuleParams::new(0.0, 0.0, 0.0, 1.0, 0.5);
        n.hebbian_update(&single_rule(&[3, 2], rule)).unwrap();
        assert!(n.genome_static().iter().all(|&w| w == 0.5));
    }

    #[test]
    fn abc_variant_ignores_alpha_and_d() {
        let mut n = net(&[1, 1]);
        n.set_weight(0, 0, 0, 40.0);
        n.forward(&[1.0]).unwrap();
        n.set_weight(0, 0, 0, 0.0);
        let rules = RuleSet {
            variant: RuleVariant::Abc,
            rules: vec![RuleParams::new(0.25, 0.5, 0.125, 100.0, 100.0)],
            assignment: vec![0],
        };
        n.hebbian_update(&rules).unwrap();
        assert_eq!(n.weight(0, 0, 0), 0.875);
    }

    #[test]
    fn weights_are_clamped() {
        let mut n = net(&[2, 2]);
        n.forward(&[1.0, 1.0]).unwrap();
        let rules = single_rule(&[2, 2], RuleParams::new(0.0, 0.0, 0.0, 3.0, 1.0));
        for _ in 0..5 {
            n.hebbian_update(&rules).unwrap();
        }
        assert_eq!(n.max_abs_weight(), W_MAX);
        let neg = single_rule(&[2, 2], RuleParams::new(0.0, 0.0, 0.0, -30.0, 1.0));
        n.hebbian_update(&neg).unwrap();
        assert!(n.genome_static().iter().all(|&w| w == -W_MAX));
    }

    #[test]
    fn init_weights_is_seeded_uniform() {
        let spec = NetworkSpec::static_net(vec![100, 100]).unwrap();
        let mut a = NetworkState::<f64>::new(spec.clone()).unwrap();
        let mut b = NetworkState::<f64>::new(spec.clone()).unwrap();
        let mut c = NetworkState::<f64>::new(spec).unwrap();
        a.init_weights(5);
        b.init_weights(5);
        c.init_weights(6);
        let ga = a.genome_static();
        assert_eq!(ga.len(), 10_000);
        assert_eq!(ga, b.genome_static());
        assert_ne!(ga, c.genome_static());
        assert!(ga.iter().all(|w| (-0.1..=0.1).contains(w)));
        let mean = ga.iter().sum::<f64>() / ga.len() as f64;
        assert!(mean.abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn static_genome_round_trip() {
        let spec = NetworkSpec::static_net(vec![3, 4, 2]).unwrap();
        let mut n = NetworkState::<f32>::new(spec).unwrap();
        assert!(matches!(n.set_genome_static(&[0.0; 5]), Err(Error::Encoding(_))));
        let genome: Vec<f32> = (0..20).map(|i| i as f32 * 0.25 - 2.0).collect();
        n.set_genome_static(&genome).unwrap();
        assert_eq!(n.genome_static(), genome);
        assert_eq!(n.weight(1, 1, 3), genome[12 + 4 + 3]);
        n.set_genome_static(&[0.0; 20]).unwrap();
        assert!(n.genome_static().iter().all(|&w| w == 0.0));
    }
}
