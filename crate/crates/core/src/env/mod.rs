//! Environment contract, morphology variants and the built-in environments.

mod assoc;
mod walker;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use assoc::AssocTask;
pub use walker::{SegWalker2D, LIMB_IDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Locomotion reward plus a per-step survival bonus.
    Full,
    /// Per-step displacement along the target axis only.
    DistanceOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub episode_steps: usize,
    pub reward_mode: RewardMode,
}

/// Per-limb multiplicative length factors for one evaluation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphologyVariant {
    pub limb_scales: Vec<f64>,
    pub label: String,
}

impl MorphologyVariant {
    pub const STANDARD_LABEL: &'static str = "standard";

    pub fn standard(n_limbs: usize) -> Self {
        MorphologyVariant {
            limb_scales: vec![1.0; n_limbs],
            label: Self::STANDARD_LABEL.into(),
        }
    }

    pub fn is_standard(&self) -> bool {
        self.limb_scales.iter().all(|&s| s == 1.0)
    }

    pub fn validate(&self, n_limbs: usize) -> Result<()> {
        if self.limb_scales.len() != n_limbs {
            return Err(Error::Config(format!(
                "variant {} has {} limb scales, environment has {n_limbs} limbs",
                self.label,
                self.limb_scales.len()
            )));
        }
        if let Some(s) = self.limb_scales.iter().find(|&&s| !(s > 0.0 && s <= 1.0)) {
            return Err(Error::Config(format!(
                "variant {}: limb scale {s} outside (0, 1]",
                self.label
            )));
        }
        Ok(())
    }
}

/// Reduction levels of the full grid: lower-leg length 0.39 .. 0.35 over 0.4.
pub const GRID_REDUCTIONS: [f64; 5] = [0.975, 0.95, 0.925, 0.9, 0.875];

/// Leg subsets of the full grid: each single leg, both front legs, and one diagonal.
pub fn grid_limb_combos() -> Vec<Vec<&'static str>> {
    vec![
        vec!["frontleft"],
        vec!["frontright"],
        vec!["backleft"],
        vec!["backright"],
        vec!["frontleft", "frontright"],
        vec!["frontleft", "backright"],
    ]
}

/// Cartesian product of limb subsets and scale levels, combo-major.
/// Labels read `frontleft+backright@0.875`.
pub fn make_variant_grid<S: AsRef<str>>(reductions: &[f64], limb_combos: &[Vec<S>]) -> Result<Vec<MorphologyVariant>> {
    if reductions.is_empty() || limb_combos.is_empty() {
        return Err(Error::Config("variant grid needs reductions and limb combos".into()));
    }
    let mut out = Vec::with_capacity(reductions.len() * limb_combos.len());
    for combo in limb_combos {
        let mut idx = Vec::with_capacity(combo.len());
        for limb in combo {
            let limb = limb.as_ref();
            let i = LIMB_IDS
                .iter()
                .position(|&id| id == limb)
                .ok_or_else(|| Error::Config(format!("unknown limb id '{limb}'")))?;
            idx.push(i);
        }
        if idx.is_empty() {
            return Err(Error::Config("empty limb combo".into()));
        }
        let name: Vec<&str> = combo.iter().map(|s| s.as_ref()).collect();
        for &level in reductions {
            let mut scales = vec![1.0; LIMB_IDS.len()];
            idx.iter().for_each(|&i| scales[i] = level);
            let v = MorphologyVariant {
                limb_scales: scales,
                label: format!("{}@{}", name.join("+"), level),
            };
            v.validate(LIMB_IDS.len())?;
            out.push(v);
        }
    }
    Ok(out)
}

/// The 30-variant evaluation grid.
pub fn full_variant_grid() -> Vec<MorphologyVariant> {
    make_variant_grid(&GRID_REDUCTIONS, &grid_limb_combos()).expect("static grid is valid")
}

/// Named grids accepted on the command line.
pub fn named_grid(name: &str) -> Result<Vec<MorphologyVariant>> {
    match name {
        "full30" => Ok(full_variant_grid()),
        "deepest" => make_variant_grid(&[0.875], &grid_limb_combos()),
        "none" | "standard" => Ok(Vec::new()),
        other => Err(Error::Config(format!(
            "unknown grid '{other}' (expected full30, deepest or none)"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub fitness: f64,
    pub distance: f64,
    pub steps_survived: usize,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Number of scalable limbs a [`MorphologyVariant`] must describe.
    fn n_limbs(&self) -> usize;

    fn reset(&mut self, variant: &MorphologyVariant, seed: u64) -> Result<Vec<f64>>;

    /// Advances one step. Actions are clamped to `[-1, 1]`.
    fn step(&mut self, action: &[f64]) -> Result<Transition>;

    /// Current position along the target axis.
    fn position(&self) -> f64;
}

/// Which built-in environment to construct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    Segwalker {
        #[serde(default = "default_episode_steps")]
        episode_steps: usize,
        #[serde(default = "default_reward_mode")]
        reward_mode: RewardMode,
    },
    Assoc {
        #[serde(default = "default_assoc_patterns")]
        n_patterns: usize,
        #[serde(default = "default_assoc_outputs")]
        n_outputs: usize,
        #[serde(default = "default_assoc_steps")]
        episode_steps: usize,
        #[serde(default)]
        task_seed: u64,
    },
}

fn default_episode_steps() -> usize {
    1000
}
fn default_reward_mode() -> RewardMode {
    RewardMode::Full
}
fn default_assoc_patterns() -> usize {
    4
}
fn default_assoc_outputs() -> usize {
    2
}
fn default_assoc_steps() -> usize {
    100
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::Segwalker {
            episode_steps: default_episode_steps(),
            reward_mode: default_reward_mode(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let (steps, ok) = match *self {
            EnvConfig::Segwalker { episode_steps, .. } => (episode_steps, true),
            EnvConfig::Assoc {
                n_patterns,
                n_outputs,
                episode_steps,
                ..
            } => (episode_steps, n_patterns >= 1 && n_outputs >= 1),
        };
        if steps == 0 || !ok {
            return Err(Error::Config(format!("invalid environment: {self:?}")));
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        match *self {
            EnvConfig::Segwalker { .. } => walker::OBS_DIM,
            EnvConfig::Assoc { n_patterns, .. } => n_patterns,
        }
    }

    pub fn act_dim(&self) -> usize {
        match *self {
            EnvConfig::Segwalker { .. } => walker::ACT_DIM,
            EnvConfig::Assoc { n_outputs, .. } => n_outputs,
        }
    }

    pub fn n_limbs(&self) -> usize {
        match self {
            EnvConfig::Segwalker { .. } => LIMB_IDS.len(),
            EnvConfig::Assoc { .. } => 0,
        }
    }

    pub fn standard_variant(&self) -> MorphologyVariant {
        MorphologyVariant::standard(self.n_limbs())
    }

    /// Builds the environment, optionally overriding the reward mode.
    pub fn build(&self, reward_mode: Option<RewardMode>) -> Result<Box<dyn Environment>> {
        self.validate()?;
        Ok(match *self {
            EnvConfig::Segwalker {
                episode_steps,
                reward_mode: mode,
            } => Box::new(SegWalker2D::new(episode_steps, reward_mode.unwrap_or(mode))),
            EnvConfig::Assoc {
                n_patterns,
                n_outputs,
                episode_steps,
                task_seed,
            } => Box::new(AssocTask::new(n_patterns, n_outputs, episode_steps, task_seed)?),
        })
    }
}

/// Adds i.i.d. `N(0, sigma_noise)` to every observation element.
pub fn add_observation_noise<R: Rng + ?Sized>(obs: &[f64], sigma_noise: f64, rng: &mut R) -> Vec<f64> {
    if sigma_noise == 0.0 {
        return obs.to_vec();
    }
    let normal = Normal::new(0.0, sigma_noise).expect("sigma_noise must be finite and >= 0");
    obs.iter().map(|&x| x + normal.sample(rng)).collect()
}
