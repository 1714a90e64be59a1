use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::es::EsState;
use crate::harness::model::{MergePoint, ModelConfig, ModelKind};
use crate::harness::rollout::Controller;
use crate::kmeans::KMeansConfig;
use crate::rules::{init_rules, merge_rules};
use crate::{seed, Es, Rules};

const STREAM_MERGE: u64 = 8;

/// K-Means restarts per merge. Lower than the clustering default because a
/// merge clusters thousands of rules into thousands of centers.
pub const MERGE_N_INIT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub env: EnvConfig,
    /// Episodes averaged per candidate; all candidates share the seeds.
    pub episodes_per_candidate: usize,
    pub kmeans: KMeansConfig,
}

impl TrainSettings {
    pub fn new(env: EnvConfig) -> Self {
        TrainSettings {
            env,
            episodes_per_candidate: 1,
            kmeans: KMeansConfig {
                n_init: MERGE_N_INIT,
                ..KMeansConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: u64,
    pub pop_mean: f64,
    pub pop_max: f64,
    pub sigma: f64,
    pub lr: f64,
    pub rule_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    /// Completed generations when the merge happened.
    pub generation: u64,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Lineage {
    pub parent: Option<String>,
    pub fork_generation: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: String,
    pub replicate_seed: u64,
    pub config: ModelConfig,
    pub env: EnvConfig,
    pub history: Vec<GenerationStats>,
    pub merges: Vec<MergeEvent>,
    pub lineage: Lineage,
    pub final_genome: Vec<f64>,
    pub final_rules: Option<Rules>,
}

impl RunRecord {
    pub fn model(&self) -> Result<TrainedModel> {
        TrainedModel::new(self.config.clone(), self.final_genome.clone(), self.final_rules.clone())
    }
}

/// The evaluated artifact: the search mean decoded into a controller recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub genome: Vec<f64>,
    /// Rule set with the genome applied (plastic models only).
    pub rules: Option<Rules>,
}

impl TrainedModel {
    pub fn new(config: ModelConfig, genome: Vec<f64>, rules: Option<Rules>) -> Result<Self> {
        let rules = match (config.is_plastic(), rules) {
            (true, Some(r)) => Some(r.with_genome(&genome)?),
            (true, None) => {
                return Err(Error::State(format!("{}: plastic model without rules", config.name)))
            }
            (false, _) => None,
        };
        let model = TrainedModel { config, genome, rules };
        model.controller()?;
        Ok(model)
    }

    pub fn controller(&self) -> Result<Controller> {
        Controller::from_genome(&self.config, &self.genome, self.rules.as_ref())
    }
}

/// One training run, advanced generation by generation. The whole struct is
/// the resumable state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    pub name: String,
    pub config: ModelConfig,
    pub settings: TrainSettings,
    pub replicate_seed: u64,
    pub es: Es,
    /// Current rule set (its parameters track the ES mean only at merges;
    /// use [`Trainer::rules`] for the up-to-date set).
    pub rules_template: Option<Rules>,
    pub history: Vec<GenerationStats>,
    pub merges: Vec<MergeEvent>,
    pub merging: bool,
    pub lineage: Lineage,
}

impl Trainer {
    pub fn new(config: ModelConfig, settings: TrainSettings, replicate_seed: u64) -> Result<Self> {
        config.validate()?;
        settings.env.validate()?;
        if settings.episodes_per_candidate == 0 {
            return Err(Error::Config("episodes_per_candidate must be >= 1".into()));
        }
        let (obs, act) = (settings.env.obs_dim(), settings.env.act_dim());
        if config.network.input_dim() != obs || config.network.output_dim() != act {
            return Err(Error::Config(format!(
                "{}: network {:?} does not fit environment ({obs} obs, {act} actions)",
                config.name, config.network.layer_sizes
            )));
        }
        let (mu, rules_template) = match config.initial_rule_count() {
            Some(n) => {
                let rules = init_rules::<f64>(&config.network, n, replicate_seed)?;
                (rules.to_genome(), Some(rules))
            }
            // Static networks start from the zero genome.
            None => (vec![0.0; config.network.connection_count()], None),
        };
        let es = EsState::new(config.es.clone(), mu, replicate_seed)?;
        Ok(Trainer {
            name: config.name.clone(),
            config,
            settings,
            replicate_seed,
            es,
            rules_template,
            history: Vec::new(),
            merges: Vec::new(),
            merging: true,
            lineage: Lineage::default(),
        })
    }

    pub fn generation(&self) -> u64 {
        self.es.generation
    }

    pub fn is_finished(&self) -> bool {
        self.generation() >= self.config.generations
    }

    pub fn rule_count(&self) -> usize {
        self.rules_template.as_ref().map_or(0, |r| r.len())
    }

    pub fn rules(&self) -> Result<Option<Rules>> {
        self.rules_template
            .as_ref()
            .map(|t| t.with_genome(&self.es.mu))
            .transpose()
    }

    pub fn model(&self) -> Result<TrainedModel> {
        TrainedModel::new(self.config.clone(), self.es.mu.clone(), self.rules_template.clone())
    }

    /// Seed shared by every candidate's `e`-th episode in `generation`.
    pub fn episode_seed(&self, generation: u64, episode: usize) -> u64 {
        seed::derive(
            self.replicate_seed,
            &[seed::STREAM_EPISODE, generation, episode as u64],
        )
    }

    /// Evaluates one population and applies the ES update.
    pub fn step_generation(&mut self) -> Result<()> {
        let pop = self.es.ask();
        let generation = self.generation();
        let seeds: Vec<u64> = (0..self.settings.episodes_per_candidate)
            .map(|e| self.episode_seed(generation, e))
            .collect();
        let noise = self.config.kind.observation_noise();
        let standard = self.settings.env.standard_variant();
        let fitness = (0..pop.len())
            .into_par_iter()
            .map(|k| -> Result<f64> {
                let genome = pop.candidate(k);
                let mut ctrl =
                    Controller::from_genome(&self.config, &genome, self.rules_template.as_ref())?;
                let mut env = self.settings.env.build(None)?;
                let mut total = 0.0;
                for &s in &seeds {
                    total += ctrl.run_episode(env.as_mut(), &standard, s, noise)?.fitness;
                }
                Ok(total / seeds.len() as f64)
            })
            .collect::<Result<Vec<f64>>>()?;

        let pop_mean = fitness.iter().sum::<f64>() / fitness.len() as f64;
        let pop_max = fitness.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.history.push(GenerationStats {
            generation,
            pop_mean,
            pop_max,
            sigma: self.es.sigma,
            lr: self.es.lr,
            rule_count: self.rule_count(),
        });
        self.es.tell(&fitness)
    }

    /// The merge scheduled right after the generations completed so far.
    pub fn pending_merge(&self) -> Option<MergePoint> {
        if !self.merging {
            return None;
        }
        self.config
            .merge_points()
            .get(self.merges.len())
            .copied()
            .filter(|p| p.generation == self.generation())
    }

    /// Clusters the current rules down to `point.to`, installs the merged
    /// genome and resets the Adam moments.
    pub fn apply_merge(&mut self, point: MergePoint) -> Result<()> {
        let rules = self
            .rules()?
            .ok_or_else(|| Error::Kind(format!("{}: static models cannot merge", self.name)))?;
        if rules.len() != point.from {
            return Err(Error::State(format!(
                "merge expects {} rules, found {}",
                point.from,
                rules.len()
            )));
        }
        let kcfg = KMeansConfig {
            seed: seed::derive(self.replicate_seed, &[STREAM_MERGE, self.merges.len() as u64]),
            ..self.settings.kmeans.clone()
        };
        let merged = merge_rules(&rules, point.to, &kcfg)?;
        self.es.replace_mean(merged.to_genome());
        self.rules_template = Some(merged);
        self.merges.push(MergeEvent {
            generation: point.generation,
            from: point.from,
            to: point.to,
        });
        Ok(())
    }

    /// Runs to the end of the budget, merging as scheduled. `hook` runs after
    /// every generation (and its merge, if any).
    pub fn run<H>(&mut self, mut hook: H) -> Result<()>
    where
        H: FnMut(&Trainer) -> Result<()>,
    {
        while !self.is_finished() {
            self.step_generation()?;
            if let Some(p) = self.pending_merge() {
                self.apply_merge(p)?;
            }
            hook(self)?;
        }
        Ok(())
    }

    /// Copy that continues without further merges.
    pub fn fork(&self, name: impl Into<String>) -> Trainer {
        let mut branch = self.clone();
        branch.name = name.into();
        branch.merging = false;
        branch.lineage = Lineage {
            parent: Some(self.name.clone()),
            fork_generation: Some(self.generation()),
        };
        branch
    }

    pub fn record(&self) -> RunRecord {
        RunRecord {
            model: self.name.clone(),
            replicate_seed: self.replicate_seed,
            config: self.config.clone(),
            env: self.settings.env.clone(),
            history: self.history.clone(),
            merges: self.merges.clone(),
            lineage: self.lineage.clone(),
            final_genome: self.es.mu.clone(),
            final_rules: self.rules().expect("mean matches template"),
        }
    }
}

pub fn train(config: &ModelConfig, settings: &TrainSettings, replicate_seed: u64) -> Result<RunRecord> {
    let mut t = Trainer::new(config.clone(), settings.clone(), replicate_seed)?;
    t.run(|_| Ok(()))?;
    Ok(t.record())
}

/// Name used for a rule-set run with `n` rules.
pub fn rules_run_name(n: usize) -> String {
    format!("rules_{n}")
}

/// Evolve & Merge with branching: before every merge the current rule set is
/// forked and trained, unmerged, to the full budget. Returns the branches in
/// fork order followed by the trunk.
pub fn branch_runs(config: &ModelConfig, settings: &TrainSettings, replicate_seed: u64) -> Result<Vec<RunRecord>> {
    let trunk = Trainer::new(config.clone(), settings.clone(), replicate_seed)?;
    branch_runs_from(trunk, |_| Ok(()))
}

/// [`branch_runs`] from an existing (possibly resumed) trunk; `hook` sees
/// every trainer after every generation.
pub fn branch_runs_from<H>(mut trunk: Trainer, mut hook: H) -> Result<Vec<RunRecord>>
where
    H: FnMut(&Trainer) -> Result<()>,
{
    if !matches!(trunk.config.kind, ModelKind::EvolveMerge { .. }) {
        return Err(Error::Kind(format!(
            "{}: branching needs an evolve-merge model",
            trunk.config.name
        )));
    }
    let mut records = Vec::new();
    while !trunk.is_finished() {
        trunk.step_generation()?;
        if let Some(p) = trunk.pending_merge() {
            let mut branch = trunk.fork(rules_run_name(p.from));
            hook(&branch)?;
            branch.run(&mut hook)?;
            records.push(branch.record());
            trunk.apply_merge(p)?;
        }
        hook(&trunk)?;
    }
    records.push(trunk.record());
    Ok(records)
}
