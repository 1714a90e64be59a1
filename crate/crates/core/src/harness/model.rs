use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::es::EsConfig;
use crate::net::{NetworkSpec, RuleVariant};

/// Hidden sizes of the small static baseline.
pub const SMALL_HIDDEN: [usize; 2] = [32, 16];

pub const DEFAULT_GENERATIONS: u64 = 1600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeSchedule {
    pub first_merge_gen: u64,
    pub merge_interval: u64,
    /// Smallest rule count a merge may produce.
    pub floor: usize,
}

impl Default for MergeSchedule {
    fn default() -> Self {
        MergeSchedule {
            first_merge_gen: 600,
            merge_interval: 200,
            floor: 384,
        }
    }
}

/// One scheduled halving: after `generation` completed generations the rule
/// set shrinks from `from` to `to` rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergePoint {
    pub generation: u64,
    pub from: usize,
    pub to: usize,
}

impl MergeSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.first_merge_gen == 0 || self.merge_interval == 0 || self.floor == 0 {
            return Err(Error::Config(format!(
                "merge schedule needs positive first_merge_gen, merge_interval and floor: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn merge_points(&self, budget: u64, initial_rules: usize) -> Vec<MergePoint> {
        let mut points = Vec::new();
        let mut count = initial_rules;
        let mut generation = self.first_merge_gen;
        while generation < budget && count / 2 >= self.floor.max(1) {
            points.push(MergePoint {
                generation,
                from: count,
                to: count / 2,
            });
            count /= 2;
            generation += self.merge_interval;
        }
        points
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelKind {
    PlainStatic,
    SmallStatic,
    /// Static network trained with `N(0, sigma)` observation noise.
    NoisyStatic { sigma: f64 },
    Abc,
    AlphaAbcd,
    /// Fixed number of rules with random synapse assignment.
    FixedRules { n_rules: usize },
    EvolveMerge { schedule: MergeSchedule },
}

impl ModelKind {
    pub fn is_plastic(&self) -> bool {
        matches!(
            self,
            ModelKind::Abc
                | ModelKind::AlphaAbcd
                | ModelKind::FixedRules { .. }
                | ModelKind::EvolveMerge { .. }
        )
    }

    pub fn observation_noise(&self) -> f64 {
        match *self {
            ModelKind::NoisyStatic { sigma } => sigma,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub kind: ModelKind,
    pub network: NetworkSpec,
    pub es: EsConfig,
    pub generations: u64,
}

impl ModelConfig {
    /// Builds the effective network for `kind` from the base architecture
    /// (input, hidden..., output).
    pub fn new(
        name: impl Into<String>,
        kind: ModelKind,
        base_layers: &[usize],
        es: EsConfig,
        generations: u64,
    ) -> Result<Self> {
        if base_layers.len() < 2 {
            return Err(Error::Config("base architecture needs input and output layers".into()));
        }
        let layers = match kind {
            ModelKind::SmallStatic => {
                let mut l = vec![base_layers[0]];
                l.extend(SMALL_HIDDEN);
                l.push(*base_layers.last().expect("len >= 2"));
                l
            }
            _ => base_layers.to_vec(),
        };
        let variant = match kind {
            ModelKind::Abc => RuleVariant::Abc,
            _ => RuleVariant::AbcdAlpha,
        };
        let network = NetworkSpec::new(layers, kind.is_plastic(), variant)?;
        let cfg = ModelConfig {
            name: name.into(),
            kind,
            network,
            es,
            generations,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.es.validate()?;
        if self.network.plastic != self.kind.is_plastic() {
            return Err(Error::Config(format!(
                "{}: network plasticity does not match model kind",
                self.name
            )));
        }
        let expected_variant = if self.kind == ModelKind::Abc {
            RuleVariant::Abc
        } else {
            RuleVariant::AbcdAlpha
        };
        if self.network.plastic && self.network.rule_variant != expected_variant {
            return Err(Error::Config(format!("{}: wrong rule variant", self.name)));
        }
        match &self.kind {
            ModelKind::NoisyStatic { sigma } if !(sigma.is_finite() && *sigma >= 0.0) => {
                Err(Error::Config(format!("observation noise must be >= 0, got {sigma}")))
            }
            ModelKind::FixedRules { n_rules }
                if *n_rules == 0 || *n_rules > self.network.connection_count() =>
            {
                Err(Error::Config(format!(
                    "fixed rule count must be in 1..={}, got {n_rules}",
                    self.network.connection_count()
                )))
            }
            ModelKind::EvolveMerge { schedule } => schedule.validate(),
            _ => Ok(()),
        }
    }

    pub fn is_plastic(&self) -> bool {
        self.kind.is_plastic()
    }

    pub fn initial_rule_count(&self) -> Option<usize> {
        match self.kind {
            ModelKind::FixedRules { n_rules } => Some(n_rules),
            _ if self.is_plastic() => Some(self.network.connection_count()),
            _ => None,
        }
    }

    pub fn merge_points(&self) -> Vec<MergePoint> {
        match (&self.kind, self.initial_rule_count()) {
            (ModelKind::EvolveMerge { schedule }, Some(n)) => {
                schedule.merge_points(self.generations, n)
            }
            _ => Vec::new(),
        }
    }

    /// Rule count at the end of the generation budget.
    pub fn final_rule_count(&self) -> Option<usize> {
        let initial = self.initial_rule_count()?;
        Some(self.merge_points().last().map_or(initial, |p| p.to))
    }
}

/// Trainable parameters after the full budget: weights for static models,
/// rule parameters for plastic ones.
pub fn parameter_count(config: &ModelConfig) -> usize {
    match config.final_rule_count() {
        Some(rules) => rules * config.network.rule_variant.params_per_rule(),
        None => config.network.connection_count(),
    }
}

/// The twelve compared model types at full scale, in reporting order.
pub fn standard_models() -> Vec<ModelConfig> {
    standard_models_with(&NetworkSpec::DEFAULT_LAYERS, &EsConfig::default(), DEFAULT_GENERATIONS)
}

/// The twelve model types on a given base architecture, ES settings and
/// budget. Merge schedules are scaled with the budget.
pub fn standard_models_with(base_layers: &[usize], es: &EsConfig, generations: u64) -> Vec<ModelConfig> {
    let schedule = scaled_schedule(generations);
    let n_syn: usize = base_layers.windows(2).map(|w| w[0] * w[1]).sum();
    let mut kinds = vec![
        ("plain_static".to_string(), ModelKind::PlainStatic),
        ("small_static".to_string(), ModelKind::SmallStatic),
        ("noisy_0.05".to_string(), ModelKind::NoisyStatic { sigma: 0.05 }),
        ("noisy_0.1".to_string(), ModelKind::NoisyStatic { sigma: 0.1 }),
        ("500_from_start".to_string(), ModelKind::FixedRules { n_rules: 500.min(n_syn) }),
        ("abc".to_string(), ModelKind::Abc),
        ("alpha_abcd".to_string(), ModelKind::AlphaAbcd),
    ];
    for halvings in 1..=5u32 {
        let floor = (n_syn >> halvings).max(1);
        kinds.push((
            format!("rules_{floor}"),
            ModelKind::EvolveMerge {
                schedule: MergeSchedule { floor, ..schedule },
            },
        ));
    }
    kinds
        .into_iter()
        .map(|(name, kind)| {
            ModelConfig::new(name, kind, base_layers, es.clone(), generations)
                .expect("registry configurations are valid")
        })
        .collect()
}

/// First merge at 3/8 of the budget, then every 1/8 (600 and 200 of 1600).
pub fn scaled_schedule(generations: u64) -> MergeSchedule {
    let interval = (generations / 8).max(1);
    MergeSchedule {
        first_merge_gen: (3 * generations / 8).max(1),
        merge_interval: interval,
        floor: 1,
    }
}
