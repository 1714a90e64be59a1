use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, MorphologyVariant, RewardMode};
use crate::error::{Error, Result};
use crate::harness::train::TrainedModel;
use crate::seed;

const STREAM_EVAL: u64 = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub n_episodes: usize,
    pub reward_mode: RewardMode,
    pub base_seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            n_episodes: 100,
            reward_mode: RewardMode::DistanceOnly,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub label: String,
    pub mean: f64,
    /// Population standard deviation over episodes.
    pub std: f64,
    pub worst: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
    /// Mean of the per-variant means, standard row excluded.
    pub mean_over_variants: f64,
    /// Mean of the per-variant worst episodes, standard row excluded.
    pub worst_mean: f64,
}

impl ScoreTable {
    pub fn row(&self, label: &str) -> Option<&ScoreRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Variant score retained relative to the standard morphology:
/// `mean_over_variants / standard mean`. `None` when the standard score is
/// not positive, since the ratio is then meaningless.
pub fn retention(table: &ScoreTable) -> Option<f64> {
    let standard = table.row(MorphologyVariant::STANDARD_LABEL)?.mean;
    (standard > 0.0).then(|| table.mean_over_variants / standard)
}

/// Scores a model on every variant. All variants share the episode seeds;
/// plastic weights are redrawn per episode.
pub fn evaluate(
    model: &TrainedModel,
    env: &EnvConfig,
    variants: &[MorphologyVariant],
    settings: &EvalSettings,
) -> Result<ScoreTable> {
    if variants.is_empty() || settings.n_episodes == 0 {
        return Err(Error::Argument("evaluation needs variants and episodes".into()));
    }
    let seeds: Vec<u64> = (0..settings.n_episodes as u64)
        .map(|e| seed::derive(settings.base_seed, &[STREAM_EVAL, e]))
        .collect();
    let jobs: Vec<(usize, u64)> = (0..variants.len())
        .flat_map(|v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let scores = jobs
        .par_iter()
        .map(|&(v, s)| -> Result<f64> {
            let mut ctrl = model.controller()?;
            let mut e = env.build(Some(settings.reward_mode))?;
            Ok(ctrl.run_episode(e.as_mut(), &variants[v], s, 0.0)?.fitness)
        })
        .collect::<Result<Vec<f64>>>()?;

    let rows: Vec<ScoreRow> = variants
        .iter()
        .zip(scores.chunks(settings.n_episodes))
        .map(|(v, s)| summarize(&v.label, s))
        .collect();
    let variant_rows: Vec<&ScoreRow> = {
        let non_standard: Vec<&ScoreRow> = rows
            .iter()
            .filter(|r| r.label != MorphologyVariant::STANDARD_LABEL)
            .collect();
        if non_standard.is_empty() {
            rows.iter().collect()
        } else {
            non_standard
        }
    };
    let n = variant_rows.len() as f64;
    let mean_over_variants = variant_rows.iter().map(|r| r.mean).sum::<f64>() / n;
    let worst_mean = variant_rows.iter().map(|r| r.worst).sum::<f64>() / n;
    Ok(ScoreTable {
        rows,
        mean_over_variants,
        worst_mean,
    })
}

fn summarize(label: &str, scores: &[f64]) -> ScoreRow {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let worst = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if worst == max {
        // Constant scores: avoid rounding residue in mean and std.
        return ScoreRow { label: label.to_string(), mean: worst, std: 0.0, worst, max };
    }
    ScoreRow {
        label: label.to_string(),
        mean: mean.clamp(worst, max),
        std: var.sqrt(),
        worst,
        max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_bounds() {
        let r = summarize("x", &[0.1, 0.1, 0.1]);
        assert!(r.worst <= r.mean && r.mean <= r.max);
        assert_eq!(r.std, 0.0);
        let r = summarize("y", &[1.0, 3.0]);
        assert_eq!((r.mean, r.std, r.worst, r.max), (2.0, 1.0, 1.0, 3.0));
    }
}
