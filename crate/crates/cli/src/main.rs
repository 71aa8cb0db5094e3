use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use cadent_core::harness::{
    default_episodes, resolve_output_dir, run_experiment, write_run_csv, CellFilter, EpisodeRecord, ExperimentConfig,
    ExperimentOptions,
};
use cadent_core::teacher::{build_knowledge, greedy_rollout, load_knowledge, save_knowledge, train_teacher};
use cadent_core::{
    make_env, train_student, EnvName, EnvSpec, RunOptions, StudentLearner, Variant, VariantPreset,
};

#[derive(Parser)]
#[command(name = "cadent", version, about = "Trust-gated teacher-student transfer for tabular RL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a teacher on a source layout and save its distilled knowledge.
    TrainTeacher {
        #[arg(long)]
        env: EnvName,
        /// Defaults to the config's teacher budget.
        #[arg(long)]
        episodes: Option<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        layout_seed: u64,
        /// Experiment config supplying learning parameters and aggregation mode.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the teacher Q-table snapshot here.
        #[arg(long)]
        qtable: Option<PathBuf>,
    },
    /// Train students on a target layout.
    TrainStudent {
        #[arg(long)]
        env: EnvName,
        /// cadent, ad, pd, none (no_transfer) or fixed-trust (no_trust_gate).
        #[arg(long)]
        variant: VariantPreset,
        #[arg(long)]
        knowledge: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<u32>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Abort on a hard violation of the update bound.
        #[arg(long)]
        assert_bound: bool,
    },
    /// Run a full multi-environment, multi-variant, multi-seed experiment.
    Experiment {
        #[arg(long, required_unless_present = "dump_default_config")]
        config: Option<PathBuf>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        parallel: usize,
        /// Restrict cells, e.g. `env=dungeon_quest,variant=cadent`.
        #[arg(long)]
        only: Option<String>,
        #[arg(long)]
        assert_bound: bool,
        /// Print the default config and exit.
        #[arg(long)]
        dump_default_config: bool,
    },
    /// Print an environment's automaton, layout and shortest solution length.
    Inspect {
        #[arg(long)]
        env: EnvName,
        #[arg(long, default_value = "target")]
        variant: Variant,
        #[arg(long, default_value_t = 0)]
        layout_seed: u64,
        #[arg(long)]
        dump_layout: bool,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn train_teacher_cmd(
    name: EnvName,
    episodes: Option<u32>,
    seed: u64,
    layout_seed: u64,
    config: Option<&Path>,
    out: &Path,
    qtable: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config)?;
    let env = make_env(EnvSpec::new(name, Variant::Source, layout_seed))?;
    let episodes = episodes.unwrap_or(cfg.teacher.episodes);
    let (q, log) = train_teacher(&env, &cfg.teacher_learning(), episodes, seed)?;
    let rollout = greedy_rollout(&env, &q)?;
    let golden = env.shortest_solution().map_or(0, |s| s.len());
    let tk = build_knowledge(&env, &q, &log, cfg.learning.tau, cfg.teacher.aggregation, seed)?;
    save_knowledge(&tk, out)?;
    if let Some(path) = qtable {
        q.save(path)?;
    }
    println!(
        "{name}: {} of {episodes} episodes succeeded; greedy rollout {} in {} steps (shortest {golden})",
        log.successes,
        if rollout.accepted { "accepts" } else { "fails" },
        rollout.steps
    );
    println!("knowledge written to {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_student_cmd(
    name: EnvName,
    variant: VariantPreset,
    knowledge: Option<&Path>,
    episodes: Option<u32>,
    seeds: &[u64],
    config: Option<&Path>,
    out: &Path,
    assert_bound: bool,
) -> Result<()> {
    let cfg = load_config(config)?;
    let student = variant.apply(&cfg.base_student());
    let knowledge = match knowledge {
        Some(p) if student.uses_knowledge() => Some(load_knowledge(p)?),
        _ => None,
    };
    let env = make_env(EnvSpec::new(name, Variant::Target, 0))?;
    let episodes = episodes.unwrap_or_else(|| default_episodes(name));
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut diagnostics = std::collections::BTreeMap::new();
    for &seed in seeds {
        let mut learner = StudentLearner::new(&env, student, knowledge.as_ref())?;
        let mut records = Vec::new();
        let mut cumulative = 0;
        train_student(&env, &mut learner, episodes, seed, RunOptions { assert_bound }, &mut |e| {
            cumulative += e.steps as u64;
            records.push(EpisodeRecord {
                variant,
                env: name,
                seed,
                episode: e.episode,
                reward: e.reward,
                steps: e.steps,
                cumulative_steps: cumulative,
                reached_accept: e.reached_accept,
            });
        })?;
        write_run_csv(&out.join(format!("{name}__{variant}__seed{seed}.csv")), &records)?;
        let tail = &records[records.len().saturating_sub(100)..];
        let mean = tail.iter().map(|r| r.reward).sum::<f64>() / tail.len() as f64;
        let d = &learner.diagnostics;
        println!(
            "seed {seed}: final mean reward {mean:.3}, max |dQ| {:.3} (bound {:.3}), soft/hard violations {}/{}",
            d.max_abs_delta_q, d.bound, d.soft_violations, d.hard_violations
        );
        diagnostics.insert(seed, learner.diagnostics);
    }
    let path = out.join("diagnostics.json");
    fs::write(&path, serde_json::to_string_pretty(&diagnostics)? + "\n")?;
    Ok(())
}

fn experiment_cmd(config: &Path, parallel: usize, only: Option<&str>, assert_bound: bool) -> Result<bool> {
    let cfg = load_config(Some(config))?;
    let filter = only.map(CellFilter::parse).transpose()?.unwrap_or_default();
    let out = resolve_output_dir(&cfg);
    let options = ExperimentOptions { parallel, filter, assert_bound };
    let results = run_experiment(&cfg, &options, &out)?;
    let s = &results.summary;
    for (env, order) in &s.ranking {
        let stats = &s.steps_to_threshold[env];
        let finals = &s.final_performance[env];
        println!("{env} (threshold {:.3}):", s.thresholds[env].value);
        for v in order {
            println!(
                "  {:<14} steps-to-threshold {:>12.1}  final reward {:>8.3}",
                v.as_str(),
                stats[v].mean_steps,
                finals[v].mean
            );
        }
    }
    for f in &s.failures {
        eprintln!("failed: {} {} seed {}: {}", f.env, f.variant, f.seed, f.error);
    }
    println!("outputs written to {}", out.display());
    Ok(s.failures.is_empty())
}

fn inspect_cmd(name: EnvName, variant: Variant, layout_seed: u64, dump_layout: bool) -> Result<()> {
    let env = make_env(EnvSpec::new(name, variant, layout_seed))?;
    let dfa = env.dfa();
    println!("automaton: {} states, start {}", dfa.n_states(), dfa.state_name(dfa.start()));
    for (a, b) in dfa.progress_edges() {
        let accept = if dfa.is_accepting(b) { " (accepting)" } else { "" };
        println!("  {} -> {}{accept}", dfa.state_name(a), dfa.state_name(b));
    }
    if dump_layout {
        print!("{}", env.render_layout());
    }
    match env.shortest_solution() {
        Some(path) => println!("shortest solution: {} steps", path.len()),
        None => bail!("{name} has no solution within {} steps", env.max_steps()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::TrainTeacher { env, episodes, seed, layout_seed, config, out, qtable } => {
            train_teacher_cmd(env, episodes, seed, layout_seed, config.as_deref(), &out, qtable.as_deref()).map(|_| true)
        }
        Command::TrainStudent { env, variant, knowledge, episodes, seeds, config, out, assert_bound } => {
            train_student_cmd(env, variant, knowledge.as_deref(), episodes, &seeds, config.as_deref(), &out, assert_bound)
                .map(|_| true)
        }
        Command::Experiment { dump_default_config: true, .. } => ExperimentConfig::default()
            .to_json_pretty()
            .map(|text| {
                print!("{text}");
                true
            })
            .map_err(Into::into),
        Command::Experiment { config, parallel, only, assert_bound, .. } => {
            experiment_cmd(config.as_deref().expect("required by clap"), parallel, only.as_deref(), assert_bound)
        }
        Command::Inspect { env, variant, layout_seed, dump_layout } => {
            inspect_cmd(env, variant, layout_seed, dump_layout).map(|_| true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
