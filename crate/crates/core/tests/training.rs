use evomerge::env::{AssocTask, EnvConfig, Environment, MorphologyVariant, RewardMode};
use evomerge::es::EsConfig;
use evomerge::harness::{
    branch_runs, export_rule_updates, parameter_count, train, Controller, MergeSchedule,
    ModelConfig, ModelKind, TrainSettings, TrainedModel, Trainer,
};
use evomerge::io;
use evomerge::kmeans::KMeansConfig;
use evomerge::net::RuleVariant;
use evomerge::rules::{merge_rules, RuleParams, RuleSet};
use evomerge::{Error, Network};

fn walker(steps: usize) -> EnvConfig {
    EnvConfig::Segwalker {
        episode_steps: steps,
        reward_mode: RewardMode::Full,
    }
}

fn tiny_merge_model(generations: u64) -> ModelConfig {
    let schedule = MergeSchedule {
        first_merge_gen: 4,
        merge_interval: 4,
        floor: 36,
    };
    ModelConfig::new(
        "tiny",
        ModelKind::EvolveMerge { schedule },
        &[28, 4, 8],
        EsConfig::default().with_population(8),
        generations,
    )
    .unwrap()
}

fn settings() -> TrainSettings {
    TrainSettings {
        kmeans: KMeansConfig { n_init: 3, ..Default::default() },
        ..TrainSettings::new(walker(30))
    }
}

fn actions(ctrl: &mut Controller, env: &mut dyn Environment, seed: u64) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let standard = MorphologyVariant::standard(env.n_limbs());
    ctrl.run_episode_observed(
        env,
        &standard,
        seed,
        0.0,
        |_, _, _| {},
        |a| out.push(a.iter().map(|x| x.to_bits()).collect()),
    )
    .unwrap();
    out
}

#[test]
fn resume_reproduces_uninterrupted_run() {
    let cfg = tiny_merge_model(20);
    let full = train(&cfg, &settings(), 42).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.json");
    let mut t = Trainer::new(cfg, settings(), 42).unwrap();
    while t.generation() < 10 {
        t.step_generation().unwrap();
        if let Some(p) = t.pending_merge() {
            t.apply_merge(p).unwrap();
        }
    }
    io::save_checkpoint(&path, &t).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let mut resumed = io::load_checkpoint(&path).unwrap().into_trainer().unwrap();
    assert_eq!(resumed, t);
    io::save_checkpoint(&path, &resumed).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);

    resumed.run(|_| Ok(())).unwrap();
    let rec = resumed.record();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&rec.final_genome), bits(&full.final_genome));
    assert_eq!(rec, full);
}

#[test]
fn merges_halve_the_encoding() {
    let cfg = tiny_merge_model(12);
    let rec = train(&cfg, &settings(), 3).unwrap();
    let counts: Vec<(usize, usize)> = rec.merges.iter().map(|m| (m.from, m.to)).collect();
    assert_eq!(counts, vec![(144, 72), (72, 36)]);
    assert_eq!(rec.final_rules.as_ref().unwrap().len(), 36);
    assert_eq!(rec.final_genome.len(), 36 * 5);
    assert_eq!(parameter_count(&cfg), 180);
    let rules: Vec<usize> = rec.history.iter().map(|h| h.rule_count).collect();
    assert_eq!(&rules[..4], &[144; 4]);
    assert_eq!(&rules[4..8], &[72; 4]);
    assert_eq!(&rules[8..], &[36; 4]);
}

#[test]
fn branches_share_the_trunk_prefix() {
    let cfg = tiny_merge_model(12);
    let records = branch_runs(&cfg, &settings(), 5).unwrap();
    let names: Vec<&str> = records.iter().map(|r| r.model.as_str()).collect();
    assert_eq!(names, vec!["rules_144", "rules_72", "tiny"]);
    let trunk = records.last().unwrap();
    for branch in &records[..records.len() - 1] {
        let fork = branch.lineage.fork_generation.unwrap() as usize;
        assert_eq!(branch.history.len(), 12);
        assert_eq!(&branch.history[..fork], &trunk.history[..fork]);
        assert_ne!(&branch.history[fork..], &trunk.history[fork..]);
        assert_eq!(branch.lineage.parent.as_deref(), Some("tiny"));
    }
}

#[test]
fn training_is_deterministic() {
    let cfg = ModelConfig::new(
        "s",
        ModelKind::NoisyStatic { sigma: 0.1 },
        &[28, 6, 8],
        EsConfig::default().with_population(6),
        5,
    )
    .unwrap();
    let a = train(&cfg, &settings(), 9).unwrap();
    let b = train(&cfg, &settings(), 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, train(&cfg, &settings(), 10).unwrap());
}

#[test]
fn zero_rules_match_static_network() {
    let es = EsConfig::default().with_population(4);
    let plastic = ModelConfig::new("p", ModelKind::AlphaAbcd, &[28, 16, 8], es.clone(), 1).unwrap();
    let fixed = ModelConfig::new("s", ModelKind::PlainStatic, &[28, 16, 8], es, 1).unwrap();
    let n = plastic.network.connection_count();
    let zero = RuleSet::uniform(RuleVariant::AbcdAlpha, n, RuleParams::zero());
    let mut p = Controller::from_genome(&plastic, &zero.to_genome(), Some(&zero)).unwrap();

    for seed in [0, 17, 99] {
        let mut init = Network::new(plastic.network.clone()).unwrap();
        init.init_weights(seed);
        let mut s = Controller::from_genome(&fixed, &init.genome_static(), None).unwrap();
        let env = walker(300);
        let a = actions(&mut p, env.build(None).unwrap().as_mut(), seed);
        let b = actions(&mut s, env.build(None).unwrap().as_mut(), seed);
        assert_eq!(a.len(), 300);
        assert_eq!(a, b);
    }
}

#[test]
fn merging_duplicated_rules_keeps_trajectories() {
    let cfg = ModelConfig::new("p", ModelKind::AlphaAbcd, &[28, 8, 8], EsConfig::default(), 1).unwrap();
    let n = cfg.network.connection_count();
    let distinct = [
        RuleParams::new(0.2, -0.05, 0.1, 0.01, 0.3),
        RuleParams::new(-0.3, 0.1, 0.0, -0.02, 0.2),
        RuleParams::new(0.05, 0.05, -0.1, 0.0, 0.5),
        RuleParams::new(0.0, -0.2, 0.3, 0.04, 0.1),
    ];
    let rules = RuleSet {
        variant: RuleVariant::AbcdAlpha,
        rules: (0..n).map(|i| distinct[(i * 7) % 4]).collect(),
        assignment: (0..n).collect(),
    };
    let merged = merge_rules(&rules, 4, &KMeansConfig::default()).unwrap();
    assert_eq!(merged.len(), 4);
    let mut before = Controller::from_genome(&cfg, &rules.to_genome(), Some(&rules)).unwrap();
    let mut after = Controller::from_genome(&cfg, &merged.to_genome(), Some(&merged)).unwrap();
    let env = walker(400);
    let a = actions(&mut before, env.build(None).unwrap().as_mut(), 8);
    let b = actions(&mut after, env.build(None).unwrap().as_mut(), 8);
    assert_eq!(a, b);
}

fn single_synapse(rule: RuleParams<f64>) -> (ModelConfig, RuleSet<f64>) {
    let cfg = ModelConfig::new("one", ModelKind::AlphaAbcd, &[1, 1], EsConfig::default(), 1).unwrap();
    let rules = RuleSet::uniform(RuleVariant::AbcdAlpha, 1, rule);
    (cfg, rules)
}

#[test]
fn anti_hebbian_rule_tracks_the_target() {
    // dw = alpha * (target - o_j) with a constant unit input.
    let target = 0.6;
    let (cfg, rules) = single_synapse(RuleParams::new(-1.0, target, 0.0, 0.0, 0.2));
    let mut ctrl = Controller::from_genome(&cfg, &rules.to_genome(), Some(&rules)).unwrap();
    let mut env = AssocTask::with_targets(vec![vec![target]], 200);
    let mut rewards = Vec::new();
    let mut outputs = Vec::new();
    ctrl.run_episode_observed(&mut env, &MorphologyVariant::standard(0), 4, 0.0, |_, _, _| {}, |a| {
        outputs.push(a[0]);
        rewards.push(-(a[0] - target).powi(2));
    })
    .unwrap();
    assert!(rewards[0] < -0.1);
    assert!((outputs.last().unwrap() - target).abs() < 1e-6);
    assert!(rewards.windows(2).all(|w| w[1] >= w[0] - 1e-15));
}

#[test]
fn export_records_every_increment() {
    let (cfg, rules) = single_synapse(RuleParams::new(0.5, 0.0, 0.0, 0.0, 0.1));
    let model = TrainedModel::new(cfg, rules.to_genome(), Some(rules)).unwrap();
    let env = EnvConfig::Assoc {
        n_patterns: 1,
        n_outputs: 1,
        episode_steps: 40,
        task_seed: 0,
    };
    for seed in 0..5 {
        let out = export_rule_updates(&model, &env, &MorphologyVariant::standard(0), seed, 4).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!((out[0].rule_id, out[0].count, out[0].updates.len()), (0, 1, 40));
        // A purely Hebbian term on a unit input pushes w away from zero:
        // every increment shares the sign of the initial weight.
        let first = out[0].updates[0].signum();
        assert!(out[0].updates.iter().all(|u| u.signum() == first));
    }
}

#[test]
fn export_rejects_static_models() {
    let cfg = ModelConfig::new("s", ModelKind::PlainStatic, &[1, 1], EsConfig::default(), 1).unwrap();
    let model = TrainedModel::new(cfg, vec![0.3], None).unwrap();
    let env = EnvConfig::Assoc {
        n_patterns: 1,
        n_outputs: 1,
        episode_steps: 5,
        task_seed: 0,
    };
    let err = export_rule_updates(&model, &env, &MorphologyVariant::standard(0), 0, 1).unwrap_err();
    assert!(matches!(err, Error::Kind(_)));
}
