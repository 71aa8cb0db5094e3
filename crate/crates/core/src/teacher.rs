//! Teacher training on source layouts and distillation into transferable
//! knowledge: automaton-transition values `Q_AD(q, q')` and per-automaton-state
//! policies `π_teacher(·|q)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::automaton::{Dfa, ProductState, StateId};
use crate::envs::{EnvName, EnvSpec, Environment, Variant};
use crate::error::{Error, Result};
use crate::tabular::{
    epsilon_greedy, q_update, softmax_policy, stream_rng, td_error, FixedMap, LearningParams, QTable,
};

pub const KNOWLEDGE_VERSION: u32 = 1;

/// RNG stream offset for teacher runs; student streams use a disjoint range.
const TEACHER_STREAM: u64 = 0x7eac_0000;

/// Distinct `(state, action)` pairs that triggered each automaton edge.
pub type TriggerLog = BTreeMap<(StateId, StateId), BTreeSet<(ProductState, usize)>>;

/// Per-state, per-action visit counts.
pub type VisitCounts = FixedMap<ProductState, Vec<u64>>;

#[derive(Clone, Debug, Default)]
pub struct TrainingLog {
    pub visits: VisitCounts,
    pub triggers: TriggerLog,
    pub successes: u32,
    pub episodes: u32,
}

impl TrainingLog {
    /// Total visits to `s` across actions.
    pub fn state_visits(&self, s: &ProductState) -> u64 {
        self.visits.get(s).map_or(0, |v| v.iter().sum())
    }
}

/// Standard Q-learning on the source product MDP.
pub fn train_teacher(
    env: &Environment,
    params: &LearningParams,
    episodes: u32,
    seed: u64,
) -> Result<(QTable, TrainingLog)> {
    if env.spec().variant != Variant::Source {
        return Err(Error::InvalidSpec(format!(
            "teachers train on source layouts, got {} target",
            env.name()
        )));
    }
    params.validate()?;
    let n_actions = env.n_actions();
    let mut q = QTable::new(n_actions);
    let mut log = TrainingLog {
        episodes,
        ..TrainingLog::default()
    };
    let mut rng = stream_rng(seed, TEACHER_STREAM + env.name().index());
    for episode in 0..episodes {
        let eps = params.epsilon.at(episode);
        let mut s = env.reset();
        let mut qa = env.dfa().start();
        let mut t = 0;
        loop {
            let ps = env.product(&s, qa);
            let a = epsilon_greedy(&q, &ps, eps, &mut rng);
            let out = env.env_step(&s, qa, t, a)?;
            let next = env.product(&out.next_state, out.q_next);
            let delta = td_error(&q, &ps, a, out.reward, &next, out.done, params.gamma);
            q_update(&mut q, ps, a, delta, params.alpha)?;
            log.visits.entry(ps).or_insert_with(|| vec![0; n_actions])[a] += 1;
            if out.q_next != qa {
                log.triggers.entry((qa, out.q_next)).or_default().insert((ps, a));
            }
            t += 1;
            if out.done {
                if out.accepted() {
                    log.successes += 1;
                }
                break;
            }
            s = out.next_state;
            qa = out.q_next;
        }
    }
    if log.successes == 0 {
        return Err(Error::TeacherIncompetent {
            env: env.name().to_string(),
            episodes,
        });
    }
    Ok((q, log))
}

/// Outcome of a greedy rollout from reset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rollout {
    pub steps: u32,
    pub accepted: bool,
}

pub fn greedy_rollout(env: &Environment, q: &QTable) -> Result<Rollout> {
    let mut s = env.reset();
    let mut qa = env.dfa().start();
    let mut t = 0;
    loop {
        let a = q.greedy_action(&env.product(&s, qa));
        let out = env.env_step(&s, qa, t, a)?;
        t += 1;
        if out.done {
            return Ok(Rollout {
                steps: t,
                accepted: out.accepted(),
            });
        }
        s = out.next_state;
        qa = out.q_next;
    }
}

/// `Q_AD(q, q')`: mean teacher value over the distinct triggers of each edge.
///
/// Every edge on an accepting path must have been triggered at least once.
pub fn distill_automaton_values(
    q_teacher: &QTable,
    dfa: &Dfa,
    triggers: &TriggerLog,
) -> Result<BTreeMap<(StateId, StateId), f64>> {
    let uncovered: Vec<String> = dfa
        .edges_on_accepting_paths()
        .into_iter()
        .filter(|e| triggers.get(e).is_none_or(BTreeSet::is_empty))
        .map(|(a, b)| format!("{}->{}", dfa.state_name(a), dfa.state_name(b)))
        .collect();
    if !uncovered.is_empty() {
        return Err(Error::UncoveredEdges(uncovered));
    }
    Ok(triggers
        .iter()
        .filter(|((a, b), set)| a != b && !set.is_empty())
        .map(|(&edge, set)| {
            let sum: f64 = set.iter().map(|(s, a)| q_teacher.get(s, *a)).sum();
            (edge, sum / set.len() as f64)
        })
        .collect())
}

/// How teacher Q rows are pooled over the environment states of an automaton state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyAggregation {
    #[default]
    VisitationWeighted,
    Unweighted,
}

/// `π_teacher(·|q)`: softmax over the pooled teacher Q rows of the environment
/// states visited while in `q`.
pub fn distill_teacher_policy(
    q_teacher: &QTable,
    visits: &VisitCounts,
    dfa: &Dfa,
    tau: f64,
    mode: PolicyAggregation,
) -> Result<BTreeMap<StateId, Vec<f64>>> {
    let n = q_teacher.n_actions();
    let mut sorted: Vec<(&ProductState, u64)> = visits
        .iter()
        .map(|(s, c)| (s, c.iter().sum::<u64>()))
        .filter(|&(_, c)| c > 0)
        .collect();
    sorted.sort_unstable_by_key(|&(s, _)| *s);

    let mut pooled: BTreeMap<StateId, (Vec<f64>, f64)> = BTreeMap::new();
    for (s, count) in sorted {
        let w = match mode {
            PolicyAggregation::VisitationWeighted => count as f64,
            PolicyAggregation::Unweighted => 1.0,
        };
        let (acc, total) = pooled.entry(s.q).or_insert_with(|| (vec![0.0; n], 0.0));
        for (x, v) in acc.iter_mut().zip(q_teacher.row(s)) {
            *x += w * v;
        }
        *total += w;
    }

    let missing: Vec<String> = dfa
        .decision_states()
        .into_iter()
        .filter(|q| !pooled.contains_key(q))
        .map(|q| dfa.state_name(q).to_owned())
        .collect();
    if !missing.is_empty() {
        return Err(Error::UnvisitedStates(missing));
    }
    Ok(pooled
        .into_iter()
        .map(|(q, (acc, total))| {
            let mean: Vec<f64> = acc.iter().map(|x| x / total).collect();
            (q, softmax_policy(&mean, tau))
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub env: EnvName,
    /// SHA-256 of the source spec's JSON encoding.
    pub source_spec_hash: String,
    pub episodes: u32,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeValue {
    pub from: String,
    pub to: String,
    pub value: f64,
}

/// Distilled teacher knowledge, keyed by automaton state names so it can be
/// bound to any automaton with the same alphabet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherKnowledge {
    pub version: u32,
    pub provenance: Provenance,
    pub alphabet: Vec<String>,
    pub tau: f64,
    pub aggregation: PolicyAggregation,
    pub q_ad: Vec<EdgeValue>,
    pub pi_teacher: BTreeMap<String, Vec<f64>>,
}

pub fn hash_spec(spec: &EnvSpec) -> Result<String> {
    let digest = Sha256::digest(spec.to_json()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl TeacherKnowledge {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidKnowledge(msg));
        if self.version != KNOWLEDGE_VERSION {
            return Err(Error::Version {
                found: self.version.to_string(),
                expected: KNOWLEDGE_VERSION.to_string(),
            });
        }
        if self.provenance.source_spec_hash.is_empty() {
            return bad("provenance has no source spec hash".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau {} is not positive", self.tau));
        }
        for e in &self.q_ad {
            if e.from == e.to {
                return bad(format!("self-loop {} in q_ad", e.from));
            }
            if !e.value.is_finite() {
                return bad(format!("non-finite q_ad value on {}->{}", e.from, e.to));
            }
        }
        for (q, row) in &self.pi_teacher {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return bad(format!("pi_teacher row for `{q}` is not a distribution (sum {sum})"));
            }
        }
        Ok(())
    }

    /// Largest `|Q_AD|`, used by the update bound.
    pub fn q_ad_max(&self) -> f64 {
        self.q_ad.iter().map(|e| e.value.abs()).fold(0.0, f64::max)
    }

    /// Resolves state names against `dfa` into dense lookup tables.
    pub fn bind(&self, dfa: &Dfa, n_actions: usize) -> Result<BoundKnowledge> {
        if self.alphabet != dfa.alphabet() {
            return Err(Error::KnowledgeMismatch(format!(
                "alphabet {:?} differs from {:?}",
                self.alphabet,
                dfa.alphabet()
            )));
        }
        let lookup = |name: &str| {
            dfa.state_id(name)
                .ok_or_else(|| Error::KnowledgeMismatch(format!("unknown automaton state `{name}`")))
        };
        let n = dfa.n_states();
        let mut q_ad = vec![None; n * n];
        for e in &self.q_ad {
            let (a, b) = (lookup(&e.from)?, lookup(&e.to)?);
            q_ad[a.0 as usize * n + b.0 as usize] = Some(e.value);
        }
        let mut pi = vec![None; n];
        for (name, row) in &self.pi_teacher {
            if row.len() != n_actions {
                return Err(Error::KnowledgeMismatch(format!(
                    "policy row for `{name}` has {} actions, environment has {n_actions}",
                    row.len()
                )));
            }
            pi[lookup(name)?.0 as usize] = Some(row.clone().into_boxed_slice());
        }
        Ok(BoundKnowledge {
            n_states: n,
            q_ad,
            pi,
            q_ad_max: self.q_ad_max(),
        })
    }
}

/// Knowledge resolved against a concrete automaton.
#[derive(Clone, Debug)]
pub struct BoundKnowledge {
    n_states: usize,
    q_ad: Vec<Option<f64>>,
    pi: Vec<Option<Box<[f64]>>>,
    q_ad_max: f64,
}

impl BoundKnowledge {
    /// Knowledge with no edges and no policies.
    pub fn empty(n_states: usize) -> Self {
        Self {
            n_states,
            q_ad: vec![None; n_states * n_states],
            pi: vec![None; n_states],
            q_ad_max: 0.0,
        }
    }

    #[inline]
    pub fn q_ad(&self, q: StateId, q_next: StateId) -> Option<f64> {
        self.q_ad[q.0 as usize * self.n_states + q_next.0 as usize]
    }

    #[inline]
    pub fn pi_teacher(&self, q: StateId) -> Option<&[f64]> {
        self.pi[q.0 as usize].as_deref()
    }

    pub fn q_ad_max(&self) -> f64 {
        self.q_ad_max
    }
}

/// Distills knowledge from a trained teacher.
pub fn build_knowledge(
    env: &Environment,
    q_teacher: &QTable,
    log: &TrainingLog,
    tau: f64,
    mode: PolicyAggregation,
    seed: u64,
) -> Result<TeacherKnowledge> {
    let dfa = env.dfa();
    let q_ad = distill_automaton_values(q_teacher, dfa, &log.triggers)?;
    let pi = distill_teacher_policy(q_teacher, &log.visits, dfa, tau, mode)?;
    let tk = TeacherKnowledge {
        version: KNOWLEDGE_VERSION,
        provenance: Provenance {
            env: env.name(),
            source_spec_hash: hash_spec(env.spec())?,
            episodes: log.episodes,
            seed,
        },
        alphabet: dfa.alphabet().to_vec(),
        tau,
        aggregation: mode,
        q_ad: q_ad
            .into_iter()
            .map(|((a, b), value)| EdgeValue {
                from: dfa.state_name(a).to_owned(),
                to: dfa.state_name(b).to_owned(),
                value,
            })
            .collect(),
        pi_teacher: pi
            .into_iter()
            .map(|(q, row)| (dfa.state_name(q).to_owned(), row))
            .collect(),
    };
    tk.validate()?;
    Ok(tk)
}

/// Trained teacher plus its distilled knowledge.
#[derive(Clone, Debug)]
pub struct Teacher {
    pub q: QTable,
    pub log: TrainingLog,
    pub knowledge: TeacherKnowledge,
}

/// Trains on `spec` (a source layout) and distills knowledge in one go.
pub fn prepare_teacher(
    spec: EnvSpec,
    params: &LearningParams,
    episodes: u32,
    seed: u64,
    mode: PolicyAggregation,
) -> Result<Teacher> {
    let env = crate::envs::make_env(spec)?;
    let (q, log) = train_teacher(&env, params, episodes, seed)?;
    let knowledge = build_knowledge(&env, &q, &log, params.tau, mode, seed)?;
    Ok(Teacher { q, log, knowledge })
}

pub fn save_knowledge(tk: &TeacherKnowledge, path: &Path) -> Result<()> {
    tk.validate()?;
    let text = serde_json::to_string_pretty(tk)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_knowledge(path: &Path) -> Result<TeacherKnowledge> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Corrupted {
        path: path.into(),
        reason: e.to_string(),
    })?;
    match value.get("version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == KNOWLEDGE_VERSION as u64 => {}
        other => {
            return Err(Error::Version {
                found: other.map_or_else(|| "none".into(), |v| v.to_string()),
                expected: KNOWLEDGE_VERSION.to_string(),
            })
        }
    }
    let tk: TeacherKnowledge = serde_json::from_value(value).map_err(|e| Error::Corrupted {
        path: path.into(),
        reason: e.to_string(),
    })?;
    tk.validate()?;
    Ok(tk)
}
