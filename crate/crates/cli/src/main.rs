use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evomerge::env::{named_grid, MorphologyVariant};
use evomerge::harness::{
    branch_runs_from, evaluate, export_rule_updates, parameter_count, retention, RunRecord,
    ScoreTable, TrainedModel, Trainer,
};
use evomerge::io::{self, ExperimentConfig};
use evomerge::{Error, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "evomerge", version, about = "Evolve & Merge plastic networks")]
struct Cli {
    /// Worker threads for rollouts (defaults to all cores).
    #[arg(long, global = true, env = "EVOMERGE_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model type.
    Train(TrainArgs),
    /// Train an evolve-and-merge model, optionally with branches.
    EvolveMerge {
        #[command(flatten)]
        train: TrainArgs,
        /// Fork an unmerged run before every merge.
        #[arg(long)]
        branches: bool,
    },
    /// Score a checkpoint or run record on a morphology grid.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "full30")]
        grid: String,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for eval.csv and eval.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Record the increments of the most used rules over one episode.
    ExportRules {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 4)]
        top_k: usize,
        /// Variant label from the full grid, or "standard".
        #[arg(long, default_value = "standard")]
        variant: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for rule_updates.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the trainable parameter count of a configuration.
    ParamCount {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run train, merge, evaluate and export on a tiny configuration.
    Smoke {
        #[arg(long, default_value = "runs/smoke")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Override a config value, e.g. `--set es.population_size=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Continue from a checkpoint instead of starting fresh.
    #[arg(long)]
    resume: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Argument(_)
        | Error::Format(_)
        | Error::Kind(_)
        | Error::Io { .. }
        | Error::InputShape { .. } => 1,
        _ => 2,
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(args) => {
            let cfg = load_config(&args.config, &args.overrides)?;
            train_cmd(&cfg, &args, false)
        }
        Command::EvolveMerge { train, branches } => {
            let cfg = load_config(&train.config, &train.overrides)?;
            if cfg.model.kind != io::KindName::EvolveMerge {
                return Err(Error::Kind("evolve-merge needs model.kind = \"evolve_merge\"".into()));
            }
            train_cmd(&cfg, &train, branches)
        }
        Command::Evaluate {
            checkpoint,
            grid,
            episodes,
            seed,
            out,
        } => {
            let (model, env) = load_model(&checkpoint)?;
            let mut variants = vec![env.standard_variant()];
            if env.n_limbs() > 0 {
                variants.extend(named_grid(&grid)?);
            }
            let settings = evomerge::harness::EvalSettings {
                n_episodes: episodes,
                base_seed: seed,
                ..Default::default()
            };
            let table = evaluate(&model, &env, &variants, &settings)?;
            write_eval(&out, &table)?;
            println!(
                "{}: mean over variants {}, retention {}",
                model.config.name,
                table.mean_over_variants,
                retention(&table).map_or("n/a".into(), |r| r.to_string())
            );
            Ok(())
        }
        Command::ExportRules {
            checkpoint,
            top_k,
            variant,
            seed,
            out,
        } => {
            let (model, env) = load_model(&checkpoint)?;
            let v = find_variant(&variant, env.n_limbs())?;
            let updates = export_rule_updates(&model, &env, &v, seed, top_k)?;
            let path = out.join("rule_updates.csv");
            io::write_rule_updates_csv(&path, &updates)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::ParamCount { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            println!("{}", parameter_count(&cfg.model_config()?));
            Ok(())
        }
        Command::Smoke { out } => smoke(&out),
    }
}

fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    if overrides.is_empty() {
        return io::load_config(path);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    ExperimentConfig::from_toml(&table.to_string())
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Argument(format!("override '{spec}' is not KEY=VALUE")))?;
    let value: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Argument(format!("empty key in '{spec}'")))?;
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Argument(format!("'{p}' in '{key}' is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn run_dir(out: &Path, model: &str, seed: u64) -> PathBuf {
    out.join(model).join(seed.to_string())
}

fn train_cmd(cfg: &ExperimentConfig, args: &TrainArgs, branches: bool) -> Result<()> {
    let trunk = match &args.resume {
        Some(path) => {
            let cp = io::load_checkpoint(path)?;
            if cp.replicate_seed != args.seed {
                return Err(Error::Argument(format!(
                    "checkpoint was trained with seed {}, not {}",
                    cp.replicate_seed, args.seed
                )));
            }
            cp.into_trainer()?
        }
        None => Trainer::new(cfg.model_config()?, cfg.train_settings(), args.seed)?,
    };
    let every = cfg.run.checkpoint_every;
    let out = args.out.clone();
    let seed = args.seed;
    let mut hook = |t: &Trainer| -> Result<()> {
        let dir = run_dir(&out, &t.name, seed);
        if every > 0 && t.generation() % every == 0 {
            let name = format!("gen_{:06}.json", t.generation());
            io::save_checkpoint(dir.join("checkpoints").join(name), t)?;
        }
        if t.generation() % 10 == 0 || t.is_finished() {
            if let Some(s) = t.history.last() {
                eprintln!(
                    "[{}] gen {} mean {:.3} max {:.3} rules {}",
                    t.name,
                    t.generation(),
                    s.pop_mean,
                    s.pop_max,
                    s.rule_count
                );
            }
        }
        if t.is_finished() {
            io::save_checkpoint(dir.join("checkpoint.json"), t)?;
        }
        Ok(())
    };
    let records = if branches {
        branch_runs_from(trunk, &mut hook)?
    } else {
        let mut t = trunk;
        t.run(&mut hook)?;
        if t.is_finished() && t.history.is_empty() {
            hook(&t)?;
        }
        vec![t.record()]
    };
    for r in &records {
        write_run(&args.out, r, cfg)?;
    }
    Ok(())
}

fn write_run(out: &Path, record: &RunRecord, cfg: &ExperimentConfig) -> Result<()> {
    let dir = run_dir(out, &record.model, record.replicate_seed);
    io::save_record(dir.join("record.json"), record)?;
    io::write_metrics_csv(dir.join("metrics.csv"), &record.history)?;
    let cfg_path = dir.join("config.toml");
    fs::write(&cfg_path, cfg.to_toml()).map_err(|e| Error::io(&cfg_path, e))?;
    println!("wrote {}", dir.display());
    Ok(())
}

/// Accepts a checkpoint or a run record.
fn load_model(path: &Path) -> Result<(TrainedModel, evomerge::env::EnvConfig)> {
    match io::load_checkpoint(path) {
        Ok(cp) => {
            let t = cp.into_trainer()?;
            Ok((t.model()?, t.settings.env))
        }
        Err(Error::Format(cp_err)) => match io::load_record(path) {
            Ok(r) => Ok((r.model()?, r.env)),
            Err(_) => Err(Error::Format(cp_err)),
        },
        Err(e) => Err(e),
    }
}

fn find_variant(label: &str, n_limbs: usize) -> Result<MorphologyVariant> {
    if label == MorphologyVariant::STANDARD_LABEL {
        return Ok(MorphologyVariant::standard(n_limbs));
    }
    named_grid("full30")?
        .into_iter()
        .find(|v| v.label == label)
        .ok_or_else(|| Error::Argument(format!("unknown variant '{label}'")))
}

#[derive(Serialize)]
struct EvalSummary<'a> {
    table: &'a ScoreTable,
    retention: Option<f64>,
}

fn write_eval(out: &Path, table: &ScoreTable) -> Result<()> {
    io::write_eval_csv(out.join("eval.csv"), table)?;
    let json = serde_json::to_string_pretty(&EvalSummary {
        table,
        retention: retention(table),
    })
    .expect("table serializes");
    let path = out.join("eval.json");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

const SMOKE_CONFIG: &str = r#"
[model]
kind = "evolve_merge"
name = "smoke"
generations = 8

[network]
layer_sizes = [28, 4, 8]

[es]
population_size = 8

[schedule]
first_merge_gen = 3
merge_interval = 2
floor = 36

[env]
name = "segwalker"
episode_steps = 50

[run]
checkpoint_every = 4
kmeans_n_init = 3
"#;

fn smoke(out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::from_toml(SMOKE_CONFIG)?;
    let seed = 1;
    let args = TrainArgs {
        config: PathBuf::new(),
        seed,
        out: out.to_path_buf(),
        overrides: Vec::new(),
        resume: None,
    };
    train_cmd(&cfg, &args, true)?;

    let trunk_dir = run_dir(out, "smoke", seed);
    let record = io::load_record(trunk_dir.join("record.json"))?;
    let expected = [144, 72, 36];
    let counts: Vec<usize> = std::iter::once(144).chain(record.merges.iter().map(|m| m.to)).collect();
    if counts != expected {
        return Err(Error::State(format!("smoke merges gave {counts:?}, expected {expected:?}")));
    }

    let (model, env) = load_model(&trunk_dir.join("checkpoint.json"))?;
    let mut variants = vec![env.standard_variant()];
    variants.extend(named_grid("deepest")?);
    let settings = evomerge::harness::EvalSettings {
        n_episodes: 2,
        ..Default::default()
    };
    let table = evaluate(&model, &env, &variants, &settings)?;
    let eval_dir = out.join("eval");
    write_eval(&eval_dir, &table)?;
    let updates = export_rule_updates(&model, &env, &variants[0], 0, 4)?;
    io::write_rule_updates_csv(eval_dir.join("rule_updates.csv"), &updates)?;

    let mut checked = 0;
    for dir in [run_dir(out, "rules_144", seed), run_dir(out, "rules_72", seed), trunk_dir] {
        io::validate_metrics_csv(dir.join("metrics.csv"))?;
        io::load_record(dir.join("record.json"))?;
        io::load_checkpoint(dir.join("checkpoint.json"))?;
        checked += 3;
    }
    let rows = io::validate_eval_csv(eval_dir.join("eval.csv"))?;
    if rows != variants.len() {
        return Err(Error::State(format!("eval.csv has {rows} rows")));
    }
    io::validate_rule_updates_csv(eval_dir.join("rule_updates.csv"))?;
    let eval_json: Checked = read_json(&eval_dir.join("eval.json"))?;
    if eval_json.table.rows.len() != rows {
        return Err(Error::State("eval.json disagrees with eval.csv".into()));
    }
    checked += 3;
    println!("smoke ok: {checked} files validated under {}", out.display());
    Ok(())
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct Checked {
    table: ScoreTable,
    #[allow(dead_code)]
    retention: Option<f64>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
