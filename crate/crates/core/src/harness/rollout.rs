use crate::env::{add_observation_noise, EpisodeResult, Environment, MorphologyVariant};
use crate::error::{Error, Result};
use crate::harness::model::ModelConfig;
use crate::net::SynapseRules;
use crate::{seed, Network, Rules};

/// A network ready to act: static weights, or plastic weights plus rules.
#[derive(Debug, Clone)]
pub enum Controller {
    Static(Network),
    Plastic {
        net: Network,
        rules: Rules,
        expanded: SynapseRules<f64>,
    },
}

impl Controller {
    /// Decodes a genome. Plastic models need the rule-set template whose
    /// assignment the genome's rules are bound to.
    pub fn from_genome(config: &ModelConfig, genome: &[f64], template: Option<&Rules>) -> Result<Self> {
        let mut net = Network::new(config.network.clone())?;
        if config.is_plastic() {
            let template = template.ok_or_else(|| {
                Error::State(format!("{}: plastic model needs a rule set", config.name))
            })?;
            let rules = template.with_genome(genome)?;
            if rules.connection_count() != config.network.connection_count() {
                return Err(Error::Encoding(format!(
                    "rule set covers {} synapses, network has {}",
                    rules.connection_count(),
                    config.network.connection_count()
                )));
            }
            let expanded = SynapseRules::new(&rules)?;
            Ok(Controller::Plastic { net, rules, expanded })
        } else {
            net.set_genome_static(genome)?;
            Ok(Controller::Static(net))
        }
    }

    pub fn is_plastic(&self) -> bool {
        matches!(self, Controller::Plastic { .. })
    }

    pub fn network(&self) -> &Network {
        match self {
            Controller::Static(net) | Controller::Plastic { net, .. } => net,
        }
    }

    pub fn run_episode(
        &mut self,
        env: &mut dyn Environment,
        variant: &MorphologyVariant,
        episode_seed: u64,
        obs_noise: f64,
    ) -> Result<EpisodeResult> {
        self.run(env, variant, episode_seed, obs_noise, None::<fn(usize, usize, f64)>, |_| {})
    }

    /// Runs one episode. Plastic weights are redrawn from the episode seed and
    /// updated once after every action. `on_update(synapse, rule, dw)` sees
    /// every plastic increment; `on_action` sees every action.
    pub fn run_episode_observed<U, A>(
        &mut self,
        env: &mut dyn Environment,
        variant: &MorphologyVariant,
        episode_seed: u64,
        obs_noise: f64,
        on_update: U,
        on_action: A,
    ) -> Result<EpisodeResult>
    where
        U: FnMut(usize, usize, f64),
        A: FnMut(&[f64]),
    {
        self.run(env, variant, episode_seed, obs_noise, Some(on_update), on_action)
    }

    fn run<U, A>(
        &mut self,
        env: &mut dyn Environment,
        variant: &MorphologyVariant,
        episode_seed: u64,
        obs_noise: f64,
        mut on_update: Option<U>,
        mut on_action: A,
    ) -> Result<EpisodeResult>
    where
        U: FnMut(usize, usize, f64),
        A: FnMut(&[f64]),
    {
        if let Controller::Plastic { net, .. } = self {
            net.init_weights(episode_seed);
        }
        let mut noise_rng = seed::rng(episode_seed, &[seed::STREAM_OBS_NOISE]);
        let mut obs = env.reset(variant, episode_seed)?;
        let start = env.position();
        let mut fitness = 0.0;
        let mut steps = 0;
        let mut action = Vec::with_capacity(env.spec().act_dim);
        loop {
            let input = add_observation_noise(&obs, obs_noise, &mut noise_rng);
            action.clear();
            match self {
                Controller::Static(net) => action.extend_from_slice(net.forward(&input)?),
                Controller::Plastic { net, .. } => action.extend_from_slice(net.forward(&input)?),
            }
            on_action(&action);
            let tr = env.step(&action)?;
            if let Controller::Plastic { net, rules, expanded } = self {
                match on_update.as_mut() {
                    Some(f) => net.hebbian_update_observed(rules, f)?,
                    None => net.hebbian_update_expanded(expanded)?,
                }
            }
            fitness += tr.reward;
            steps += 1;
            obs = tr.obs;
            if tr.done {
                break;
            }
        }
        Ok(EpisodeResult {
            fitness,
            distance: env.position() - start,
            steps_survived: steps,
        })
    }
}
