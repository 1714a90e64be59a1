//! Checkpoints, experiment configs and tabular exports.
//!
//! Checkpoints and run records are JSON. Reals are written in their shortest
//! round-trip decimal form (at most 17 significant digits), so every `f64`
//! reads back bit-identically. CSV column orders are fixed per
//! [`FORMAT_VERSION`]:
//!
//! | file                | columns                                          |
//! |---------------------|--------------------------------------------------|
//! | `metrics.csv`       | generation, pop_mean, pop_max, sigma, lr, rule_count |
//! | `eval.csv`          | variant, mean, std, worst                        |
//! | `rule_updates.csv`  | rule_id, count, dw (one row per update)          |

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{named_grid, EnvConfig, MorphologyVariant, RewardMode};
use crate::error::{Error, Result};
use crate::es::EsConfig;
use crate::harness::{
    EvalSettings, GenerationStats, Lineage, MergeEvent, MergeSchedule, ModelConfig, ModelKind,
    RuleUpdates, RunRecord, ScoreTable, TrainSettings, Trainer,
};
use crate::kmeans::KMeansConfig;
use crate::net::NetworkSpec;
use crate::{Es, Rules};

pub const FORMAT_VERSION: u32 = 1;
const CHECKPOINT_FORMAT: &str = "evomerge-checkpoint";
const RECORD_FORMAT: &str = "evomerge-run-record";

pub const METRICS_HEADER: [&str; 6] = ["generation", "pop_mean", "pop_max", "sigma", "lr", "rule_count"];
pub const EVAL_HEADER: [&str; 4] = ["variant", "mean", "std", "worst"];
pub const RULE_UPDATES_HEADER: [&str; 3] = ["rule_id", "count", "dw"];

/// Complete resumable training state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub format_version: u32,
    pub name: String,
    pub model: ModelConfig,
    pub network: NetworkSpec,
    pub settings: TrainSettings,
    pub replicate_seed: u64,
    pub generation: u64,
    pub es: Es,
    pub rules: Option<Rules>,
    pub history: Vec<GenerationStats>,
    pub merges: Vec<MergeEvent>,
    pub merging: bool,
    pub lineage: Lineage,
}

impl Checkpoint {
    pub fn from_trainer(t: &Trainer) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            format_version: FORMAT_VERSION,
            name: t.name.clone(),
            model: t.config.clone(),
            network: t.config.network.clone(),
            settings: t.settings.clone(),
            replicate_seed: t.replicate_seed,
            generation: t.generation(),
            es: t.es.clone(),
            rules: t.rules_template.clone(),
            history: t.history.clone(),
            merges: t.merges.clone(),
            merging: t.merging,
            lineage: t.lineage.clone(),
        }
    }

    pub fn into_trainer(self) -> Result<Trainer> {
        self.validate()?;
        Ok(Trainer {
            name: self.name,
            config: self.model,
            settings: self.settings,
            replicate_seed: self.replicate_seed,
            es: self.es,
            rules_template: self.rules,
            history: self.history,
            merges: self.merges,
            merging: self.merging,
            lineage: self.lineage,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("not a checkpoint: format '{}'", self.format)));
        }
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint version {} unsupported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.model.validate().map_err(|e| Error::Format(e.to_string()))?;
        self.es.validate()?;
        if self.network != self.model.network || self.generation != self.es.generation {
            return Err(Error::Format("checkpoint fields disagree".into()));
        }
        if let Some(r) = &self.rules {
            r.validate().map_err(|e| Error::Format(e.to_string()))?;
            if r.to_genome().len() != self.es.dim() {
                return Err(Error::Format("rule set does not match ES mean".into()));
            }
        }
        Ok(())
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, trainer: &Trainer) -> Result<()> {
    write_json(path, &Checkpoint::from_trainer(trainer))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let cp: Checkpoint = read_json(&path)?;
    cp.validate()?;
    Ok(cp)
}

#[derive(Serialize, Deserialize)]
struct RecordFile {
    format: String,
    format_version: u32,
    #[serde(flatten)]
    record: RunRecord,
}

pub fn save_record(path: impl AsRef<Path>, record: &RunRecord) -> Result<()> {
    write_json(
        path,
        &RecordFile {
            format: RECORD_FORMAT.into(),
            format_version: FORMAT_VERSION,
            record: record.clone(),
        },
    )
}

pub fn load_record(path: impl AsRef<Path>) -> Result<RunRecord> {
    let f: RecordFile = read_json(&path)?;
    if f.format != RECORD_FORMAT || f.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported record format {} v{}",
            path.as_ref().display(),
            f.format,
            f.format_version
        )));
    }
    Ok(f.record)
}

fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).expect("values serialize");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- config

/// Experiment configuration file (TOML). Unknown keys are rejected.
///
/// ```toml
/// [model]
/// kind = "evolve_merge"   # plain_static | small_static | noisy_static | abc
///                         # | alpha_abcd | fixed_rules | evolve_merge
/// generations = 1600
/// # noise_sigma = 0.05    # noisy_static
/// # n_rules = 500         # fixed_rules
///
/// [network]
/// layer_sizes = [28, 128, 64, 8]
///
/// [es]                    # every field optional, defaults as below
/// population_size = 500
/// lr0 = 0.1
/// lr_decay = 0.9999
/// lr_limit = 0.001
/// sigma0 = 0.1
/// sigma_decay = 0.999
/// sigma_limit = 0.01
/// weight_decay = 0.0
///
/// [schedule]              # evolve_merge only
/// first_merge_gen = 600
/// merge_interval = 200
/// floor = 384
///
/// [env]
/// name = "segwalker"      # or "assoc"
/// episode_steps = 1000
/// reward_mode = "full"
///
/// [eval]
/// grid = "full30"
/// episodes = 100
/// seed = 0
///
/// [run]
/// seed = 0
/// replicates = 5
/// episodes_per_candidate = 1
/// checkpoint_every = 50
/// kmeans_n_init = 10
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub es: EsConfig,
    #[serde(default)]
    pub schedule: MergeSchedule,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    PlainStatic,
    SmallStatic,
    NoisyStatic,
    Abc,
    AlphaAbcd,
    FixedRules,
    EvolveMerge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: KindName,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_generations")]
    pub generations: u64,
    #[serde(default)]
    pub noise_sigma: Option<f64>,
    #[serde(default)]
    pub n_rules: Option<usize>,
}

fn default_generations() -> u64 {
    crate::harness::DEFAULT_GENERATIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub layer_sizes: Vec<usize>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            layer_sizes: NetworkSpec::DEFAULT_LAYERS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub grid: String,
    pub episodes: usize,
    pub seed: u64,
    pub reward_mode: RewardMode,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            grid: "full30".into(),
            episodes: 100,
            seed: 0,
            reward_mode: RewardMode::DistanceOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub replicates: usize,
    pub episodes_per_candidate: usize,
    pub checkpoint_every: u64,
    pub kmeans_n_init: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            replicates: 5,
            episodes_per_candidate: 1,
            checkpoint_every: 50,
            kmeans_n_init: crate::harness::MERGE_N_INIT,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        let m = &self.model;
        let kind = match m.kind {
            KindName::PlainStatic => ModelKind::PlainStatic,
            KindName::SmallStatic => ModelKind::SmallStatic,
            KindName::NoisyStatic => ModelKind::NoisyStatic {
                sigma: m.noise_sigma.ok_or_else(|| {
                    Error::Config("noisy_static needs model.noise_sigma".into())
                })?,
            },
            KindName::Abc => ModelKind::Abc,
            KindName::AlphaAbcd => ModelKind::AlphaAbcd,
            KindName::FixedRules => ModelKind::FixedRules {
                n_rules: m
                    .n_rules
                    .ok_or_else(|| Error::Config("fixed_rules needs model.n_rules".into()))?,
            },
            KindName::EvolveMerge => ModelKind::EvolveMerge {
                schedule: self.schedule,
            },
        };
        if m.noise_sigma.is_some() && m.kind != KindName::NoisyStatic {
            return Err(Error::Config("model.noise_sigma only applies to noisy_static".into()));
        }
        if m.n_rules.is_some() && m.kind != KindName::FixedRules {
            return Err(Error::Config("model.n_rules only applies to fixed_rules".into()));
        }
        Ok(kind)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let kind = self.model_kind()?;
        let name = self.model.name.clone().unwrap_or_else(|| {
            serde_json::to_value(self.model.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default()
        });
        ModelConfig::new(name, kind, &self.network.layer_sizes, self.es.clone(), self.model.generations)
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            env: self.env.clone(),
            episodes_per_candidate: self.run.episodes_per_candidate,
            kmeans: KMeansConfig {
                n_init: self.run.kmeans_n_init,
                ..KMeansConfig::default()
            },
        }
    }

    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            n_episodes: self.eval.episodes,
            reward_mode: self.eval.reward_mode,
            base_seed: self.eval.seed,
        }
    }

    /// Standard morphology followed by the configured grid.
    pub fn eval_variants(&self) -> Result<Vec<MorphologyVariant>> {
        let mut v = vec![self.env.standard_variant()];
        if self.env.n_limbs() > 0 {
            v.extend(named_grid(&self.eval.grid)?);
        }
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        self.es.validate()?;
        self.env.validate()?;
        let cfg = self.model_config()?;
        if cfg.network.input_dim() != self.env.obs_dim() || cfg.network.output_dim() != self.env.act_dim() {
            return Err(Error::Config(format!(
                "network {:?} does not fit the environment ({} obs, {} actions)",
                cfg.network.layer_sizes,
                self.env.obs_dim(),
                self.env.act_dim()
            )));
        }
        named_grid(&self.eval.grid)?;
        if self.eval.episodes == 0 || self.run.episodes_per_candidate == 0 || self.run.kmeans_n_init == 0 {
            return Err(Error::Config("episode and restart counts must be positive".into()));
        }
        Ok(())
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

// ---------------------------------------------------------------- CSV

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_metrics_csv(path: impl AsRef<Path>, history: &[GenerationStats]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(METRICS_HEADER).map_err(|e| csv_error(path, e))?;
    for s in history {
        w.write_record([
            s.generation.to_string(),
            s.pop_mean.to_string(),
            s.pop_max.to_string(),
            s.sigma.to_string(),
            s.lr.to_string(),
            s.rule_count.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_eval_csv(path: impl AsRef<Path>, table: &ScoreTable) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(EVAL_HEADER).map_err(|e| csv_error(path, e))?;
    for r in &table.rows {
        w.write_record([
            r.label.clone(),
            r.mean.to_string(),
            r.std.to_string(),
            r.worst.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_rule_updates_csv(path: impl AsRef<Path>, updates: &[RuleUpdates]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(RULE_UPDATES_HEADER).map_err(|e| csv_error(path, e))?;
    for u in updates {
        for dw in &u.updates {
            w.write_record([u.rule_id.to_string(), u.count.to_string(), dw.to_string()])
                .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Col {
    Int,
    Real,
    Text,
}

/// Checks header and per-column types of a CSV export; returns its data row count.
fn validate_csv(path: &Path, header: &[&str], cols: &[Col]) -> Result<usize> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let found = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Format(format!(
            "{}: header {:?}, expected {header:?}",
            path.display(),
            found
        )));
    }
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != cols.len() {
            return Err(Error::Format(format!("{}: row {rows} has {} fields", path.display(), rec.len())));
        }
        for (field, col) in rec.iter().zip(cols) {
            let ok = match col {
                Col::Int => field.parse::<u64>().is_ok(),
                Col::Real => field.parse::<f64>().is_ok(),
                Col::Text => !field.is_empty(),
            };
            if !ok {
                return Err(Error::Format(format!(
                    "{}: row {rows}: '{field}' is not a valid {col:?}",
                    path.display()
                )));
            }
        }
        rows += 1;
    }
    Ok(rows)
}

pub fn validate_metrics_csv(path: impl AsRef<Path>) -> Result<usize> {
    use Col::*;
    validate_csv(path.as_ref(), &METRICS_HEADER, &[Int, Real, Real, Real, Real, Int])
}

pub fn validate_eval_csv(path: impl AsRef<Path>) -> Result<usize> {
    use Col::*;
    validate_csv(path.as_ref(), &EVAL_HEADER, &[Text, Real, Real, Real])
}

pub fn validate_rule_updates_csv(path: impl AsRef<Path>) -> Result<usize> {
    use Col::*;
    validate_csv(path.as_ref(), &RULE_UPDATES_HEADER, &[Int, Int, Real])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gets_table_one_defaults() {
        let cfg = ExperimentConfig::from_toml("[model]\nkind = \"alpha_abcd\"\n").unwrap();
        assert_eq!(cfg.es, EsConfig::default());
        let m = cfg.model_config().unwrap();
        assert_eq!(m.generations, 1600);
        assert_eq!(m.network.layer_sizes, vec![28, 128, 64, 8]);
        assert_eq!(m.name, "alpha_abcd");
    }

    #[test]
    fn overrides_and_strictness() {
        let cfg = ExperimentConfig::from_toml(
            "[model]\nkind = \"plain_static\"\n[es]\npopulation_size = 16\n",
        )
        .unwrap();
        assert_eq!(cfg.model_config().unwrap().es.population_size, 16);

        let bad = ExperimentConfig::from_toml("[model]\nkind = \"abc\"\n[es]\nsigma0 = -0.1\n");
        assert!(matches!(bad, Err(Error::Config(_))));
        let unknown = ExperimentConfig::from_toml("[model]\nkind = \"abc\"\ncolour = 3\n");
        assert!(matches!(unknown, Err(Error::Config(_))));
        let missing = ExperimentConfig::from_toml("[model]\nkind = \"noisy_static\"\n");
        assert!(matches!(missing, Err(Error::Config(_))));
        let mismatch = ExperimentConfig::from_toml(
            "[model]\nkind = \"abc\"\n[network]\nlayer_sizes = [4, 2]\n",
        );
        assert!(matches!(mismatch, Err(Error::Config(_))));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml(
            "[model]\nkind = \"fixed_rules\"\nn_rules = 500\n[env]\nname = \"segwalker\"\nepisode_steps = 10\n",
        )
        .unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(crate::harness::parameter_count(&cfg.model_config().unwrap()), 2_500);
    }
}
