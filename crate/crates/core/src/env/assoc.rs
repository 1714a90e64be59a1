//! Episodic association task for exercising plasticity.
//!
//! Step `t` presents one-hot pattern `t mod n_patterns`; the reward is
//! `-||action - target(pattern)||^2`. Targets are fixed per task seed and
//! drawn from `U(-0.8, 0.8)`, inside the tanh range.

use rand::distr::{Distribution, Uniform};

use super::{EnvSpec, Environment, MorphologyVariant, RewardMode, Transition};
use crate::error::{Error, Result};
use crate::seed;

const TARGET_RANGE: f64 = 0.8;

#[derive(Debug, Clone)]
pub struct AssocTask {
    spec: EnvSpec,
    targets: Vec<Vec<f64>>,
    step: usize,
    started: bool,
    score: f64,
}

impl AssocTask {
    pub fn new(n_patterns: usize, n_outputs: usize, episode_steps: usize, task_seed: u64) -> Result<Self> {
        if n_patterns == 0 || n_outputs == 0 || episode_steps == 0 {
            return Err(Error::Config(
                "association task needs patterns, outputs and steps".into(),
            ));
        }
        let mut rng = seed::rng(task_seed, &[seed::STREAM_ENV]);
        let dist = Uniform::new_inclusive(-TARGET_RANGE, TARGET_RANGE).expect("valid range");
        let targets = (0..n_patterns)
            .map(|_| (0..n_outputs).map(|_| dist.sample(&mut rng)).collect())
            .collect();
        Ok(Self::with_targets(targets, episode_steps))
    }

    /// Task with explicit targets, one row per pattern.
    pub fn with_targets(targets: Vec<Vec<f64>>, episode_steps: usize) -> Self {
        AssocTask {
            spec: EnvSpec {
                obs_dim: targets.len(),
                act_dim: targets[0].len(),
                episode_steps,
                reward_mode: RewardMode::Full,
            },
            targets,
            step: 0,
            started: false,
            score: 0.0,
        }
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn pattern(&self, index: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.targets.len()];
        p[index % self.targets.len()] = 1.0;
        p
    }
}

impl Environment for AssocTask {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn n_limbs(&self) -> usize {
        0
    }

    fn reset(&mut self, variant: &MorphologyVariant, _seed: u64) -> Result<Vec<f64>> {
        variant.validate(0)?;
        self.step = 0;
        self.started = true;
        self.score = 0.0;
        Ok(self.pattern(0))
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition> {
        if action.len() != self.spec.act_dim {
            return Err(Error::InputShape {
                expected: self.spec.act_dim,
                got: action.len(),
            });
        }
        if !self.started {
            return Err(Error::State("step before reset".into()));
        }
        if self.step >= self.spec.episode_steps {
            return Err(Error::State("step after episode end".into()));
        }
        let target = &self.targets[self.step % self.targets.len()];
        let reward = -action
            .iter()
            .zip(target)
            .map(|(a, t)| (a.clamp(-1.0, 1.0) - t).powi(2))
            .sum::<f64>();
        self.score += reward;
        self.step += 1;
        Ok(Transition {
            obs: self.pattern(self.step),
            reward,
            done: self.step >= self.spec.episode_steps,
        })
    }

    /// Cumulative reward; the task has no spatial axis.
    fn position(&self) -> f64 {
        self.score
    }
}
