//! Multi-seed experiment orchestration, metrics and file outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::VariantPreset;
use crate::cadent::{
    train_student, GateMode, GuidanceParams, RunOptions, StudentConfig, StudentDiagnostics, StudentLearner,
    TrustParams,
};
use crate::envs::{make_env, EnvName, EnvSpec, Environment, Variant};
use crate::error::{Error, Result};
use crate::tabular::{EpsilonSchedule, LearningParams};
use crate::teacher::{load_knowledge, prepare_teacher, save_knowledge, PolicyAggregation, TeacherKnowledge};

/// Environment variable that overrides [`ExperimentConfig::output_dir`].
pub const OUTPUT_ENV_VAR: &str = "CADENT_OUT";

/// Points on the shared cumulative-step grid.
pub const GRID_POINTS: usize = 200;

pub const RUN_HEADER: &str = "variant,env,seed,episode,reward,steps,cumulative_steps,reached_accept";
pub const AGGREGATE_HEADER: &str = "x,mean,stderr,n";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherSettings {
    pub episodes: u32,
    /// Exploration schedule for teacher training.
    pub epsilon: EpsilonSchedule,
    pub seed: u64,
    /// Seed of the source layouts the teachers train on.
    pub layout_seed: u64,
    pub aggregation: PolicyAggregation,
    /// Pre-trained knowledge per environment; environments not listed train inline.
    #[serde(default)]
    pub knowledge: BTreeMap<EnvName, PathBuf>,
}

impl Default for TeacherSettings {
    fn default() -> Self {
        Self {
            episodes: 5000,
            epsilon: EpsilonSchedule::default(),
            seed: 0,
            layout_seed: 0,
            aggregation: PolicyAggregation::VisitationWeighted,
            knowledge: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSettings {
    /// Fixed thresholds; environments not listed derive one from the run.
    #[serde(default)]
    pub reward: BTreeMap<EnvName, f64>,
    /// Fraction of the reference variant's final mean reward.
    pub fraction: f64,
    /// Trailing window for steps-to-threshold.
    pub window: usize,
    /// Trailing window for final performance.
    pub final_window: usize,
}

impl Default for ThresholdSettings {
    fn default() -> Self {
        Self {
            reward: BTreeMap::new(),
            fraction: 0.8,
            window: 20,
            final_window: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environments: Vec<EnvName>,
    pub variants: Vec<VariantPreset>,
    pub seeds: Vec<u64>,
    pub episodes: BTreeMap<EnvName, u32>,
    pub teacher: TeacherSettings,
    pub learning: LearningParams,
    pub trust: TrustParams,
    pub guidance: GuidanceParams,
    pub thresholds: ThresholdSettings,
    pub output_dir: PathBuf,
}

pub fn default_episodes(name: EnvName) -> u32 {
    match name {
        EnvName::BlindCraftsman | EnvName::DungeonQuest => 1500,
        EnvName::MountainCarCollection | EnvName::WarehouseRobotics => 3000,
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            environments: EnvName::ALL.to_vec(),
            variants: vec![
                VariantPreset::Cadent,
                VariantPreset::Ad,
                VariantPreset::Pd,
                VariantPreset::NoTransfer,
                VariantPreset::NoTrustGate,
            ],
            seeds: (1..=5).collect(),
            episodes: EnvName::ALL.iter().map(|&n| (n, default_episodes(n))).collect(),
            teacher: TeacherSettings::default(),
            learning: LearningParams::default(),
            trust: TrustParams::default(),
            guidance: GuidanceParams::default(),
            thresholds: ThresholdSettings::default(),
            output_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.environments.is_empty() || self.variants.is_empty() {
            return bad("environments and variants must be non-empty".into());
        }
        for env in &self.environments {
            match self.episodes.get(env) {
                Some(&n) if n > 0 => {}
                _ => return bad(format!("episodes for {env} must be positive")),
            }
        }
        if self.teacher.episodes == 0 {
            return bad("teacher episodes must be positive".into());
        }
        for (env, path) in &self.teacher.knowledge {
            if !path.is_file() {
                return bad(format!("knowledge file for {env} not found: {}", path.display()));
            }
        }
        let t = &self.thresholds;
        if t.window == 0 || t.final_window == 0 {
            return bad("threshold windows must be positive".into());
        }
        if !(t.fraction > 0.0 && t.fraction.is_finite()) {
            return bad("threshold fraction must be positive".into());
        }
        self.teacher_learning().validate()?;
        self.base_student().validate()
    }

    /// Student settings before a preset is applied.
    pub fn base_student(&self) -> StudentConfig {
        StudentConfig {
            learning: self.learning,
            trust: self.trust,
            guidance: self.guidance,
            gate: GateMode::Dynamic,
        }
    }

    /// Learning parameters for teacher training.
    pub fn teacher_learning(&self) -> LearningParams {
        LearningParams {
            epsilon: self.teacher.epsilon,
            ..self.learning
        }
    }

    /// Config as echoed into the summary: everything except where the output goes.
    pub fn echo(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
        }
        Ok(v)
    }

    /// SHA-256 over the echoed config.
    pub fn hash(&self) -> Result<String> {
        Ok(hex(&Sha256::digest(serde_json::to_string(&self.echo()?)?.as_bytes())))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub variant: VariantPreset,
    pub env: EnvName,
    pub seed: u64,
    pub episode: u32,
    pub reward: f64,
    pub steps: u32,
    pub cumulative_steps: u64,
    pub reached_accept: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Mean and standard error (sample sd over √n; 0 for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Episode-aligned mean curve.
pub fn aggregate_by_episode(streams: &[Vec<f64>]) -> Result<Vec<CurvePoint>> {
    let len = match streams.first() {
        Some(s) => s.len(),
        None => return Err(Error::Aggregate("no streams".into())),
    };
    if streams.iter().any(|s| s.len() != len) {
        return Err(Error::Aggregate("streams differ in length".into()));
    }
    let mut column = Vec::with_capacity(streams.len());
    Ok((0..len)
        .map(|i| {
            column.clear();
            column.extend(streams.iter().map(|s| s[i]));
            let (mean, stderr) = mean_stderr(&column);
            CurvePoint { x: i as f64, mean, stderr, n: streams.len() }
        })
        .collect())
}

/// Reward against cumulative steps, resampled onto [`GRID_POINTS`] evenly
/// spaced points from 0 to the smallest final cumulative step. Each stream is
/// a step function holding the reward of its latest completed episode; grid
/// points before the first completion take the first episode's reward.
pub fn aggregate_by_cumulative_steps(streams: &[(Vec<u64>, Vec<f64>)]) -> Result<Vec<CurvePoint>> {
    if streams.is_empty() {
        return Err(Error::Aggregate("no streams".into()));
    }
    if streams.iter().any(|(c, r)| c.is_empty() || c.len() != r.len()) {
        return Err(Error::Aggregate("empty or ragged cumulative stream".into()));
    }
    let end = streams.iter().map(|(c, _)| *c.last().unwrap()).min().unwrap() as f64;
    let mut cursors = vec![0usize; streams.len()];
    let mut column = Vec::with_capacity(streams.len());
    Ok((0..GRID_POINTS)
        .map(|i| {
            let x = end * i as f64 / (GRID_POINTS - 1) as f64;
            column.clear();
            for ((cum, rew), cur) in streams.iter().zip(cursors.iter_mut()) {
                while *cur + 1 < cum.len() && cum[*cur + 1] as f64 <= x {
                    *cur += 1;
                }
                column.push(rew[*cur]);
            }
            let (mean, stderr) = mean_stderr(&column);
            CurvePoint { x, mean, stderr, n: streams.len() }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateSet {
    pub reward_per_episode: Vec<CurvePoint>,
    pub steps_per_episode: Vec<CurvePoint>,
    pub reward_per_cumulative_steps: Vec<CurvePoint>,
}

impl AggregateSet {
    pub fn metrics(&self) -> [(&'static str, &[CurvePoint]); 3] {
        [
            ("reward_per_episode", &self.reward_per_episode),
            ("steps_per_episode", &self.steps_per_episode),
            ("reward_per_cumulative_steps", &self.reward_per_cumulative_steps),
        ]
    }
}

/// All three curves over per-seed record streams.
pub fn aggregate(runs: &[Vec<EpisodeRecord>]) -> Result<AggregateSet> {
    let rewards: Vec<Vec<f64>> = runs.iter().map(|r| r.iter().map(|e| e.reward).collect()).collect();
    let steps: Vec<Vec<f64>> = runs.iter().map(|r| r.iter().map(|e| e.steps as f64).collect()).collect();
    let cumulative: Vec<(Vec<u64>, Vec<f64>)> = runs
        .iter()
        .map(|r| (r.iter().map(|e| e.cumulative_steps).collect(), r.iter().map(|e| e.reward).collect()))
        .collect();
    Ok(AggregateSet {
        reward_per_episode: aggregate_by_episode(&rewards)?,
        steps_per_episode: aggregate_by_episode(&steps)?,
        reward_per_cumulative_steps: aggregate_by_cumulative_steps(&cumulative)?,
    })
}

/// Cumulative steps at the first episode whose trailing `window`-episode mean
/// reward reaches `threshold`. Only full windows count.
pub fn steps_to_threshold(records: &[EpisodeRecord], threshold: f64, window: usize) -> Option<u64> {
    assert!(window >= 1, "window must be positive");
    let mut sum = 0.0;
    for (i, r) in records.iter().enumerate() {
        sum += r.reward;
        if i >= window {
            sum -= records[i - window].reward;
        }
        // Recompute exactly at each candidate to avoid drift in the running sum.
        if i + 1 >= window && sum / window as f64 >= threshold - 1e-9 {
            let exact = records[i + 1 - window..=i].iter().map(|r| r.reward).sum::<f64>() / window as f64;
            if exact >= threshold {
                return Some(r.cumulative_steps);
            }
        }
    }
    None
}

/// Mean reward over the last `window` episodes (or all, if fewer).
pub fn final_mean(records: &[EpisodeRecord], window: usize) -> f64 {
    let tail = &records[records.len().saturating_sub(window)..];
    tail.iter().map(|r| r.reward).sum::<f64>() / tail.len() as f64
}

/// Reward range used to normalize curves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
}

impl Normalization {
    /// `min`: every step penalized until the step limit. `max`: every
    /// progress reward on a shortest accepting path plus the acceptance bonus.
    pub fn for_env(env: &Environment) -> Self {
        let r = env.rewards();
        let dfa = env.dfa();
        let path_len = shortest_accepting_path(dfa);
        Self {
            min: env.max_steps() as f64 * r.step_penalty,
            max: path_len as f64 * r.progress + r.accept_bonus,
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }
}

fn shortest_accepting_path(dfa: &crate::automaton::Dfa) -> usize {
    let edges = dfa.progress_edges();
    let mut frontier = vec![dfa.start()];
    let mut seen = BTreeSet::from([dfa.start()]);
    let mut depth = 0;
    while !frontier.is_empty() {
        if frontier.iter().any(|&q| dfa.is_accepting(q)) {
            return depth;
        }
        let mut next = Vec::new();
        for &q in &frontier {
            for &(a, b) in &edges {
                if a == q && seen.insert(b) {
                    next.push(b);
                }
            }
        }
        frontier = next;
        depth += 1;
    }
    0
}

/// Subset of cells to run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CellFilter {
    pub envs: Option<BTreeSet<EnvName>>,
    pub variants: Option<BTreeSet<VariantPreset>>,
}

impl CellFilter {
    /// Parses `env=a,variant=b,...`; repeated keys accumulate.
    pub fn parse(text: &str) -> Result<Self> {
        let mut f = CellFilter::default();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("filter term `{part}` is not key=value")))?;
            match key.trim() {
                "env" => {
                    f.envs.get_or_insert_with(BTreeSet::new).insert(value.trim().parse()?);
                }
                "variant" => {
                    f.variants.get_or_insert_with(BTreeSet::new).insert(value.trim().parse()?);
                }
                other => return Err(Error::InvalidConfig(format!("unknown filter key `{other}`"))),
            }
        }
        Ok(f)
    }

    pub fn apply(&self, config: &ExperimentConfig) -> ExperimentConfig {
        let mut c = config.clone();
        if let Some(envs) = &self.envs {
            c.environments.retain(|e| envs.contains(e));
        }
        if let Some(variants) = &self.variants {
            c.variants.retain(|v| variants.contains(v));
        }
        c
    }
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentOptions {
    /// Worker threads for cells; 0 uses rayon's default.
    pub parallel: usize,
    pub filter: CellFilter,
    /// Abort cells on hard update-bound violations.
    pub assert_bound: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub env: EnvName,
    pub variant: VariantPreset,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdInfo {
    pub value: f64,
    /// `config`, a variant name whose final mean it derives from, or `none`.
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStat {
    /// Mean over seeds; seeds that never reach the threshold count their final cumulative steps.
    pub mean_steps: f64,
    pub stderr: f64,
    pub reached: usize,
    pub per_seed: BTreeMap<u64, Option<u64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalStat {
    pub mean: f64,
    pub stderr: f64,
    pub normalized_mean: f64,
    pub success_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub config: serde_json::Value,
    pub normalization: BTreeMap<EnvName, Normalization>,
    pub thresholds: BTreeMap<EnvName, ThresholdInfo>,
    pub steps_to_threshold: BTreeMap<EnvName, BTreeMap<VariantPreset, ThresholdStat>>,
    pub final_performance: BTreeMap<EnvName, BTreeMap<VariantPreset, FinalStat>>,
    /// Variants by ascending mean steps-to-threshold.
    pub ranking: BTreeMap<EnvName, Vec<VariantPreset>>,
    pub failures: Vec<CellFailure>,
    pub diagnostics: BTreeMap<String, StudentDiagnostics>,
}

/// Everything produced by an experiment, before or after writing.
#[derive(Clone, Debug)]
pub struct ExperimentResults {
    pub runs: BTreeMap<(EnvName, VariantPreset, u64), Vec<EpisodeRecord>>,
    pub curves: BTreeMap<(EnvName, VariantPreset), AggregateSet>,
    pub summary: Summary,
    pub teachers: BTreeMap<EnvName, TeacherKnowledge>,
}

fn run_cell(
    env: &Environment,
    variant: VariantPreset,
    seed: u64,
    episodes: u32,
    base: &StudentConfig,
    knowledge: Option<&TeacherKnowledge>,
    assert_bound: bool,
) -> Result<(Vec<EpisodeRecord>, StudentDiagnostics)> {
    let cfg = variant.apply(base);
    let knowledge = if cfg.uses_knowledge() { knowledge } else { None };
    let mut learner = StudentLearner::new(env, cfg, knowledge)?;
    let mut records = Vec::with_capacity(episodes as usize);
    let mut cumulative = 0u64;
    train_student(env, &mut learner, episodes, seed, RunOptions { assert_bound }, &mut |e| {
        cumulative += e.steps as u64;
        records.push(EpisodeRecord {
            variant,
            env: env.name(),
            seed,
            episode: e.episode,
            reward: e.reward,
            steps: e.steps,
            cumulative_steps: cumulative,
            reached_accept: e.reached_accept,
        });
    })?;
    Ok((records, learner.diagnostics))
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Runs every (env, variant, seed) cell of `config` and computes curves and
/// the summary. Nothing is written to disk.
pub fn run_cells(config: &ExperimentConfig, options: &ExperimentOptions) -> Result<ExperimentResults> {
    let config = options.filter.apply(config);
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallel)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let base = config.base_student();
    let needs_teacher = config.variants.iter().any(|v| v.apply(&base).uses_knowledge());

    let envs: BTreeMap<EnvName, Result<Environment>> = config
        .environments
        .iter()
        .map(|&n| (n, make_env(EnvSpec::new(n, Variant::Target, 0))))
        .collect();

    let teacher_results: Vec<(EnvName, Result<TeacherKnowledge>)> = if needs_teacher {
        pool.install(|| {
            config
                .environments
                .par_iter()
                .map(|&name| {
                    let r = match config.teacher.knowledge.get(&name) {
                        Some(path) => load_knowledge(path),
                        None => prepare_teacher(
                            EnvSpec::new(name, Variant::Source, config.teacher.layout_seed),
                            &config.teacher_learning(),
                            config.teacher.episodes,
                            config.teacher.seed,
                            config.teacher.aggregation,
                        )
                        .map(|t| t.knowledge),
                    };
                    (name, r)
                })
                .collect()
        })
    } else {
        Vec::new()
    };
    let mut teachers = BTreeMap::new();
    let mut teacher_errors = BTreeMap::new();
    for (name, r) in teacher_results {
        match r {
            Ok(tk) => {
                teachers.insert(name, tk);
            }
            Err(e) => {
                teacher_errors.insert(name, e.to_string());
            }
        }
    }

    let mut cells: Vec<(EnvName, VariantPreset, u64)> = Vec::new();
    for &e in &config.environments {
        for &v in &config.variants {
            cells.extend(config.seeds.iter().map(|&s| (e, v, s)));
        }
    }
    let outcomes: Vec<Result<(Vec<EpisodeRecord>, StudentDiagnostics), String>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(name, variant, seed)| {
                let env = envs[&name].as_ref().map_err(|e| e.to_string())?;
                let uses = variant.apply(&base).uses_knowledge();
                if uses {
                    if let Some(e) = teacher_errors.get(&name) {
                        return Err(format!("teacher: {e}"));
                    }
                }
                let episodes = config.episodes[&name];
                let knowledge = teachers.get(&name);
                catch_unwind(AssertUnwindSafe(|| {
                    run_cell(env, variant, seed, episodes, &base, knowledge, options.assert_bound)
                }))
                .map_err(panic_message)?
                .map_err(|e| e.to_string())
            })
            .collect()
    });

    let mut runs = BTreeMap::new();
    let mut failures = Vec::new();
    let mut diagnostics = BTreeMap::new();
    for (&(env, variant, seed), outcome) in cells.iter().zip(outcomes) {
        match outcome {
            Ok((records, diag)) => {
                diagnostics.insert(format!("{env}/{variant}/{seed}"), diag);
                runs.insert((env, variant, seed), records);
            }
            Err(error) => failures.push(CellFailure { env, variant, seed, error }),
        }
    }

    let mut curves = BTreeMap::new();
    let mut normalization = BTreeMap::new();
    let mut thresholds = BTreeMap::new();
    let mut stt_table = BTreeMap::new();
    let mut final_table = BTreeMap::new();
    let mut ranking = BTreeMap::new();
    let th = &config.thresholds;
    for &name in &config.environments {
        if let Ok(env) = &envs[&name] {
            normalization.insert(name, Normalization::for_env(env));
        }
        let by_variant: BTreeMap<VariantPreset, Vec<&Vec<EpisodeRecord>>> = config
            .variants
            .iter()
            .map(|&v| {
                let seeds = config.seeds.iter().filter_map(|&s| runs.get(&(name, v, s))).collect();
                (v, seeds)
            })
            .collect();

        let mut finals = BTreeMap::new();
        for (&v, seeds) in &by_variant {
            if seeds.is_empty() {
                continue;
            }
            let owned: Vec<Vec<EpisodeRecord>> = seeds.iter().map(|r| (*r).clone()).collect();
            curves.insert((name, v), aggregate(&owned)?);
            let per_seed: Vec<f64> = seeds.iter().map(|r| final_mean(r, th.final_window)).collect();
            let success: f64 = seeds
                .iter()
                .map(|r| {
                    let tail = &r[r.len().saturating_sub(th.final_window)..];
                    tail.iter().filter(|e| e.reached_accept).count() as f64 / tail.len() as f64
                })
                .sum::<f64>()
                / seeds.len() as f64;
            let (mean, stderr) = mean_stderr(&per_seed);
            let normalized_mean = normalization.get(&name).map_or(f64::NAN, |n: &Normalization| n.apply(mean));
            finals.insert(v, FinalStat { mean, stderr, normalized_mean, success_rate: success });
        }

        let threshold = if let Some(&value) = th.reward.get(&name) {
            Some(ThresholdInfo { value, source: "config".into() })
        } else if let Some(f) = finals.get(&VariantPreset::NoTransfer) {
            Some(ThresholdInfo { value: th.fraction * f.mean, source: VariantPreset::NoTransfer.to_string() })
        } else {
            finals
                .iter()
                .max_by(|a, b| a.1.mean.total_cmp(&b.1.mean))
                .map(|(v, f)| ThresholdInfo { value: th.fraction * f.mean, source: v.to_string() })
        };

        let mut stats = BTreeMap::new();
        if let Some(info) = &threshold {
            for (&v, seeds) in &by_variant {
                if seeds.is_empty() {
                    continue;
                }
                let mut per_seed = BTreeMap::new();
                let mut censored = Vec::new();
                for r in seeds {
                    let hit = steps_to_threshold(r, info.value, th.window);
                    per_seed.insert(r[0].seed, hit);
                    censored.push(hit.unwrap_or_else(|| r.last().map_or(0, |e| e.cumulative_steps)) as f64);
                }
                let (mean_steps, stderr) = mean_stderr(&censored);
                let reached = per_seed.values().filter(|h| h.is_some()).count();
                stats.insert(v, ThresholdStat { mean_steps, stderr, reached, per_seed });
            }
            let mut order: Vec<VariantPreset> = stats.keys().copied().collect();
            order.sort_by(|a, b| stats[a].mean_steps.total_cmp(&stats[b].mean_steps).then(a.cmp(b)));
            ranking.insert(name, order);
            thresholds.insert(name, info.clone());
        }
        stt_table.insert(name, stats);
        final_table.insert(name, finals);
    }

    let summary = Summary {
        config_hash: config.hash()?,
        config: config.echo()?,
        normalization,
        thresholds,
        steps_to_threshold: stt_table,
        final_performance: final_table,
        ranking,
        failures,
        diagnostics,
    };
    Ok(ExperimentResults { runs, curves, summary, teachers })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(file))
}

fn write_header(w: &mut csv::Writer<fs::File>, header: &str) -> Result<()> {
    w.write_record(header.split(','))?;
    Ok(())
}

/// Writes one per-run CSV.
pub fn write_run_csv(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    write_header(&mut w, RUN_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_run_csv(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|rec| rec.map_err(Error::from)).collect()
}

pub fn write_curve_csv(path: &Path, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    write_header(&mut w, AGGREGATE_HEADER)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `runs/`, `aggregate/`, `teachers/` and `summary.json` under `dir`.
pub fn write_outputs(dir: &Path, results: &ExperimentResults) -> Result<()> {
    let runs_dir = dir.join("runs");
    let agg_dir = dir.join("aggregate");
    mkdir(&runs_dir)?;
    mkdir(&agg_dir)?;
    for ((env, variant, seed), records) in &results.runs {
        write_run_csv(&runs_dir.join(format!("{env}__{variant}__seed{seed}.csv")), records)?;
    }
    for ((env, variant), set) in &results.curves {
        for (metric, points) in set.metrics() {
            write_curve_csv(&agg_dir.join(format!("{env}__{variant}__{metric}.csv")), points)?;
        }
    }
    if !results.teachers.is_empty() {
        let teacher_dir = dir.join("teachers");
        mkdir(&teacher_dir)?;
        for (env, tk) in &results.teachers {
            save_knowledge(tk, &teacher_dir.join(format!("{env}.json")))?;
        }
    }
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&results.summary)? + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Output directory after applying the `CADENT_OUT` override.
pub fn resolve_output_dir(config: &ExperimentConfig) -> PathBuf {
    std::env::var_os(OUTPUT_ENV_VAR)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| config.output_dir.clone())
}

/// Runs the experiment and writes all outputs to `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, options: &ExperimentOptions, out_dir: &Path) -> Result<ExperimentResults> {
    let results = run_cells(config, options)?;
    write_outputs(out_dir, &results)?;
    Ok(results)
}
