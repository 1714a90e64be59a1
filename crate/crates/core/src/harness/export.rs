use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, MorphologyVariant};
use crate::error::{Error, Result};
use crate::harness::train::TrainedModel;

/// Every weight change one rule made during an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleUpdates {
    pub rule_id: usize,
    /// Synapses assigned to the rule.
    pub count: usize,
    pub updates: Vec<f64>,
}

/// Runs one episode and records the increments of the `top_k` rules with the
/// most assigned synapses (ties go to the lower index).
pub fn export_rule_updates(
    model: &TrainedModel,
    env: &EnvConfig,
    variant: &MorphologyVariant,
    seed: u64,
    top_k: usize,
) -> Result<Vec<RuleUpdates>> {
    let rules = model.rules.as_ref().ok_or_else(|| {
        Error::Kind(format!(
            "{}: static models have no learning rules to export",
            model.config.name
        ))
    })?;
    let usage = rules.usage();
    let mut order: Vec<usize> = (0..usage.len()).collect();
    order.sort_by(|&a, &b| usage[b].cmp(&usage[a]).then(a.cmp(&b)));
    order.truncate(top_k);

    let mut slot = vec![None; usage.len()];
    for (i, &r) in order.iter().enumerate() {
        slot[r] = Some(i);
    }
    let mut out: Vec<RuleUpdates> = order
        .iter()
        .map(|&r| RuleUpdates {
            rule_id: r,
            count: usage[r],
            updates: Vec::new(),
        })
        .collect();

    let mut ctrl = model.controller()?;
    let mut e = env.build(None)?;
    ctrl.run_episode_observed(
        e.as_mut(),
        variant,
        seed,
        0.0,
        |_, rule, dw| {
            if let Some(i) = slot[rule] {
                out[i].updates.push(dw);
            }
        },
        |_| {},
    )?;
    Ok(out)
}
