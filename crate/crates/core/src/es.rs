//! OpenAI-style evolution strategy with mirrored sampling, centered-rank
//! fitness shaping and an Adam step on the search mean.
//!
//! Candidate `2p` is `mu + sigma * eps_p` and candidate `2p + 1` is
//! `mu - sigma * eps_p`. The noise of generation `g` is regenerated from
//! `(rng_seed, g)`, so the state never stores noise and a checkpoint only
//! needs the scalars below.

use std::cmp::Ordering;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsConfig {
    pub population_size: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_limit: f64,
    pub sigma0: f64,
    pub sigma_decay: f64,
    pub sigma_limit: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig {
            population_size: 500,
            lr0: 0.1,
            lr_decay: 0.9999,
            lr_limit: 0.001,
            sigma0: 0.1,
            sigma_decay: 0.999,
            sigma_limit: 0.01,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl EsConfig {
    pub fn with_population(mut self, population_size: usize) -> Self {
        self.population_size = population_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.population_size < 2 || self.population_size % 2 != 0 {
            return bad(format!(
                "population_size must be even and >= 2, got {}",
                self.population_size
            ));
        }
        for (name, v) in [
            ("lr0", self.lr0),
            ("lr_limit", self.lr_limit),
            ("sigma0", self.sigma0),
            ("sigma_limit", self.sigma_limit),
            ("epsilon", self.epsilon),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("lr_decay", self.lr_decay), ("sigma_decay", self.sigma_decay)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} must lie in (0, 1], got {v}"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.lr_limit > self.lr0 {
            return bad(format!("lr_limit {} exceeds lr0 {}", self.lr_limit, self.lr0));
        }
        if self.sigma_limit > self.sigma0 {
            return bad(format!(
                "sigma_limit {} exceeds sigma0 {}",
                self.sigma_limit, self.sigma0
            ));
        }
        Ok(())
    }
}

/// Replaces fitnesses by `rank / (n - 1) - 0.5`, ranks ascending from 0 with
/// ties (and NaNs, which rank lowest) broken by index.
pub fn centered_ranks(fitnesses: &[f64]) -> Result<Vec<f64>> {
    let n = fitnesses.len();
    if n < 2 {
        return Err(Error::Argument(format!(
            "centered ranks need at least 2 fitnesses, got {n}"
        )));
    }
    let key = |x: f64| if x.is_nan() { f64::NEG_INFINITY } else { x };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        key(fitnesses[i])
            .partial_cmp(&key(fitnesses[j]))
            .unwrap_or(Ordering::Equal)
            .then(i.cmp(&j))
    });
    let denom = (n - 1) as f64;
    let mut shaped = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        shaped[i] = rank as f64 / denom - 0.5;
    }
    Ok(shaped)
}

/// Mirrored population for one generation.
#[derive(Debug, Clone)]
pub struct Population<T> {
    mu: Vec<T>,
    sigma: T,
    noise: Vec<Vec<T>>,
}

impl<T: Scalar> Population<T> {
    pub fn len(&self) -> usize {
        2 * self.noise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noise.is_empty()
    }

    pub fn mean(&self) -> &[T] {
        &self.mu
    }

    /// Standard-normal draw of the mirrored pair `k / 2`.
    pub fn noise(&self, pair: usize) -> &[T] {
        &self.noise[pair]
    }

    /// `candidate(k) - mu` as the strategy sees it: `+-sigma * eps`.
    pub fn offset(&self, k: usize) -> Vec<T> {
        let sign = if k % 2 == 0 { self.sigma } else { -self.sigma };
        self.noise[k / 2].iter().map(|&e| sign * e).collect()
    }

    pub fn candidate(&self, k: usize) -> Vec<T> {
        let off = self.offset(k);
        self.mu.iter().zip(off).map(|(&m, o)| m + o).collect()
    }

    pub fn candidates(&self) -> Vec<Vec<T>> {
        (0..self.len()).map(|k| self.candidate(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EsState<T> {
    pub config: EsConfig,
    pub mu: Vec<T>,
    pub sigma: T,
    pub lr: T,
    pub adam_m: Vec<T>,
    pub adam_v: Vec<T>,
    pub adam_step: u64,
    pub generation: u64,
    pub rng_seed: u64,
}

const CHECKPOINT_TAG: &str = "evomerge-es";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct EsBlob<T> {
    format: String,
    version: u32,
    state: EsState<T>,
}

impl<T: Scalar> EsState<T> {
    pub fn new(config: EsConfig, mu: Vec<T>, rng_seed: u64) -> Result<Self> {
        config.validate()?;
        let n = mu.len();
        Ok(EsState {
            sigma: T::of(config.sigma0),
            lr: T::of(config.lr0),
            config,
            mu,
            adam_m: vec![T::zero(); n],
            adam_v: vec![T::zero(); n],
            adam_step: 0,
            generation: 0,
            rng_seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn draw_noise(&self) -> Vec<Vec<T>> {
        let mut rng = seed::rng(self.rng_seed, &[seed::STREAM_ES_NOISE, self.generation]);
        let half = self.config.population_size / 2;
        (0..half)
            .map(|_| {
                (0..self.mu.len())
                    .map(|_| T::of(StandardNormal.sample(&mut rng)))
                    .collect()
            })
            .collect()
    }

    pub fn ask(&self) -> Population<T> {
        Population {
            mu: self.mu.clone(),
            sigma: self.sigma,
            noise: self.draw_noise(),
        }
    }

    /// Search-gradient estimate `sum_k shaped_k * (+-eps_k) / (n * sigma)`,
    /// accumulated over candidates in ask order.
    pub fn gradient(&self, shaped: &[f64]) -> Vec<T> {
        let noise = self.draw_noise();
        let n = self.config.population_size;
        let mut g = vec![T::zero(); self.mu.len()];
        for (k, &s) in shaped.iter().enumerate() {
            let s = T::of(if k % 2 == 0 { s } else { -s });
            for (gi, &e) in g.iter_mut().zip(&noise[k / 2]) {
                *gi = *gi + s * e;
            }
        }
        let scale = T::of(n as f64) * self.sigma;
        g.iter_mut().for_each(|gi| *gi = *gi / scale);
        g
    }

    /// Updates the mean from fitnesses given in ask order, then decays the
    /// learning rate and sigma.
    pub fn tell(&mut self, fitnesses: &[f64]) -> Result<()> {
        if fitnesses.len() != self.config.population_size {
            return Err(Error::Argument(format!(
                "expected {} fitnesses, got {}",
                self.config.population_size,
                fitnesses.len()
            )));
        }
        let shaped = centered_ranks(fitnesses)?;
        let g = self.gradient(&shaped);
        let wd = T::of(self.config.weight_decay);
        let descent: Vec<T> = g
            .iter()
            .zip(&self.mu)
            .map(|(&gi, &m)| -gi + wd * m)
            .collect();
        self.adam_step(&descent);

        let cfg = &self.config;
        self.lr = (self.lr * T::of(cfg.lr_decay)).max(T::of(cfg.lr_limit));
        self.sigma = (self.sigma * T::of(cfg.sigma_decay)).max(T::of(cfg.sigma_limit));
        self.generation += 1;
        Ok(())
    }

    fn adam_step(&mut self, grad: &[T]) {
        let b1 = T::of(self.config.beta1);
        let b2 = T::of(self.config.beta2);
        let eps = T::of(self.config.epsilon);
        let one = T::one();
        self.adam_step += 1;
        let t = i32::try_from(self.adam_step).unwrap_or(i32::MAX);
        let a = self.lr * (one - b2.powi(t)).sqrt() / (one - b1.powi(t));
        for (((mu, m), v), &g) in self
            .mu
            .iter_mut()
            .zip(self.adam_m.iter_mut())
            .zip(self.adam_v.iter_mut())
            .zip(grad)
        {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            *mu = *mu - a * *m / (v.sqrt() + eps);
        }
    }

    /// Installs a new mean (possibly of a different length) with fresh Adam
    /// moments; sigma, learning rate and generation carry on.
    pub fn replace_mean(&mut self, mu: Vec<T>) {
        let n = mu.len();
        self.mu = mu;
        self.adam_m = vec![T::zero(); n];
        self.adam_v = vec![T::zero(); n];
        self.adam_step = 0;
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let n = self.mu.len();
        if self.adam_m.len() != n || self.adam_v.len() != n {
            return Err(Error::Format(format!(
                "Adam moments ({}, {}) do not match mean length {n}",
                self.adam_m.len(),
                self.adam_v.len()
            )));
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Vec<u8> {
        let blob = EsBlob {
            format: CHECKPOINT_TAG.into(),
            version: CHECKPOINT_VERSION,
            state: self.clone(),
        };
        serde_json::to_vec(&blob).expect("ES state serializes")
    }

    pub fn restore(bytes: &[u8]) -> Result<Self> {
        let blob: EsBlob<T> = serde_json::from_slice(bytes)
            .map_err(|e| Error::Format(format!("ES checkpoint: {e}")))?;
        if blob.format != CHECKPOINT_TAG {
            return Err(Error::Format(format!("not an ES checkpoint: {}", blob.format)));
        }
        if blob.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "ES checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                blob.version
            )));
        }
        blob.state.validate()?;
        Ok(blob.state)
    }
}

pub fn es_checkpoint<T: Scalar>(state: &EsState<T>) -> Vec<u8> {
    state.checkpoint()
}

pub fn es_restore<T: Scalar>(blob: &[u8]) -> Result<EsState<T>> {
    EsState::restore(blob)
}
