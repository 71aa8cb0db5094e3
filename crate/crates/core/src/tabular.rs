//! Tabular Q-learning primitives shared by teachers, students and baselines.

use std::collections::{BTreeMap, HashMap};
use std::hash::{BuildHasherDefault, DefaultHasher};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::automaton::{ProductState, StateId};
use crate::error::{Error, Result};

/// Hash builder with fixed keys, so map iteration order depends only on the
/// insertion sequence.
pub type FixedState = BuildHasherDefault<DefaultHasher>;
pub type FixedMap<K, V> = HashMap<K, V, FixedState>;

/// The experiment-wide PRNG.
pub type RunRng = ChaCha8Rng;

/// Derives an independent stream from `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    /// Multiplicative decay applied once per episode.
    pub decay: f64,
}

impl EpsilonSchedule {
    pub fn at(&self, episode: u32) -> f64 {
        (self.start * self.decay.powi(episode as i32)).max(self.end)
    }
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            decay: 0.995,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningParams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    /// Softmax temperature used when distilling teacher policies.
    pub tau: f64,
}

impl Default for LearningParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.99,
            epsilon: EpsilonSchedule::default(),
            tau: 0.25,
        }
    }
}

impl LearningParams {
    pub fn validate(&self) -> Result<()> {
        let e = &self.epsilon;
        let checks = [
            (self.alpha > 0.0 && self.alpha <= 1.0, "alpha must lie in (0, 1]"),
            (self.gamma >= 0.0 && self.gamma < 1.0, "gamma must lie in [0, 1)"),
            (self.tau > 0.0 && self.tau.is_finite(), "tau must be positive"),
            (e.start <= 1.0 && e.start >= e.end && e.end >= 0.0, "epsilon needs 1 >= start >= end >= 0"),
            (e.decay > 0.0 && e.decay <= 1.0, "epsilon decay must lie in (0, 1]"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::InvalidParam((*msg).into())),
            None => Ok(()),
        }
    }
}

/// Sparse action-value table. Absent entries read as `0.0`.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    n_actions: usize,
    rows: FixedMap<ProductState, Box<[f64]>>,
    zeros: Box<[f64]>,
}

impl QTable {
    pub fn new(n_actions: usize) -> Self {
        Self {
            n_actions,
            rows: FixedMap::default(),
            zeros: vec![0.0; n_actions].into_boxed_slice(),
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Number of stored states.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, s: &ProductState) -> bool {
        self.rows.contains_key(s)
    }

    #[inline]
    pub fn get(&self, s: &ProductState, a: usize) -> f64 {
        self.row(s)[a]
    }

    /// The action values at `s`; a shared zero row when `s` was never written.
    #[inline]
    pub fn row(&self, s: &ProductState) -> &[f64] {
        self.rows.get(s).map_or(&self.zeros, |r| r)
    }

    #[inline]
    pub fn max_value(&self, s: &ProductState) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    #[inline]
    pub fn greedy_action(&self, s: &ProductState) -> usize {
        argmax(self.row(s))
    }

    pub fn set(&mut self, s: ProductState, a: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite { context: "Q-table entry", value });
        }
        let n = self.n_actions;
        self.rows.entry(s).or_insert_with(|| vec![0.0; n].into_boxed_slice())[a] = value;
        Ok(())
    }

    /// Stored rows ordered by state.
    pub fn sorted_rows(&self) -> Vec<(ProductState, &[f64])> {
        let mut rows: Vec<_> = self.rows.iter().map(|(s, r)| (*s, &r[..])).collect();
        rows.sort_by_key(|(s, _)| *s);
        rows
    }

    /// Applies `f` to every stored value.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> QTable {
        let mut out = self.clone();
        for row in out.rows.values_mut() {
            for v in row.iter_mut() {
                *v = f(*v);
            }
        }
        out
    }

    /// Writes the versioned text snapshot.
    pub fn write_snapshot<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(w);
        let rows = self.sorted_rows();
        writeln!(w, "{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}")?;
        writeln!(w, "actions {}", self.n_actions)?;
        writeln!(w, "entries {}", rows.len() * self.n_actions)?;
        for (s, row) in rows {
            for (a, v) in row.iter().enumerate() {
                writeln!(w, "{} {} {} {}", s.env, s.q.0, a, v)?;
            }
        }
        w.flush()
    }

    pub fn read_snapshot<R: Read>(r: R, origin: &Path) -> Result<Self> {
        let corrupt = |reason: String| Error::Corrupted {
            path: origin.to_path_buf(),
            reason,
        };
        let mut lines = BufReader::new(r).lines();
        let mut next = |what: &str| -> Result<String> {
            match lines.next() {
                Some(Ok(l)) => Ok(l),
                Some(Err(e)) => Err(Error::io(origin, e)),
                None => Err(corrupt(format!("missing {what}"))),
            }
        };
        let header = next("header")?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(SNAPSHOT_MAGIC) {
            return Err(corrupt("not a Q-table snapshot".into()));
        }
        let version = parts.next().unwrap_or("");
        if version != SNAPSHOT_VERSION {
            return Err(Error::Version {
                found: version.into(),
                expected: SNAPSHOT_VERSION.into(),
            });
        }
        let field = |line: String, name: &str| -> Result<usize> {
            line.strip_prefix(name)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| corrupt(format!("bad `{name}` line")))
        };
        let n_actions = field(next("actions")?, "actions")?;
        let entries = field(next("entries")?, "entries")?;
        let mut table = QTable::new(n_actions);
        for i in 0..entries {
            let line = next("entry")?;
            let cols: Vec<&str> = line.split_whitespace().collect();
            let parsed = (|| {
                if cols.len() != 4 {
                    return None;
                }
                Some((
                    cols[0].parse::<u64>().ok()?,
                    cols[1].parse::<u32>().ok()?,
                    cols[2].parse::<usize>().ok()?,
                    cols[3].parse::<f64>().ok()?,
                ))
            })();
            let (env, q, a, v) = parsed.ok_or_else(|| corrupt(format!("bad entry {i}")))?;
            if a >= n_actions {
                return Err(corrupt(format!("entry {i} action {a} out of range")));
            }
            table
                .set(ProductState::new(env, StateId(q)), a, v)
                .map_err(|e| corrupt(e.to_string()))?;
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_snapshot(file).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_snapshot(file, path)
    }
}

const SNAPSHOT_MAGIC: &str = "cadent-qtable";
const SNAPSHOT_VERSION: &str = "1";

/// Index of the largest value; ties go to the lowest index.
#[inline]
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One-step TD residual `r + γ·max Q(s',·) − Q(s,a)`, without bootstrap when `done`.
#[inline]
pub fn td_error(
    table: &QTable,
    s: &ProductState,
    a: usize,
    reward: f64,
    s_next: &ProductState,
    done: bool,
    gamma: f64,
) -> f64 {
    let target = if done {
        reward
    } else {
        reward + gamma * table.max_value(s_next)
    };
    target - table.get(s, a)
}

/// `Q(s,a) ← Q(s,a) + α·delta`.
#[inline]
pub fn q_update(table: &mut QTable, s: ProductState, a: usize, delta: f64, alpha: f64) -> Result<()> {
    if !delta.is_finite() {
        return Err(Error::NonFinite { context: "Q update delta", value: delta });
    }
    let current = table.get(&s, a);
    table.set(s, a, current + alpha * delta)
}

/// Temperature softmax with max-subtraction.
pub fn softmax_policy(q_row: &[f64], tau: f64) -> Vec<f64> {
    let max = q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = q_row.iter().map(|q| ((q - max) / tau).exp()).collect();
    let z: f64 = p.iter().sum();
    for v in &mut p {
        *v /= z;
    }
    p
}

/// ε-greedy action selection.
///
/// RNG protocol: when `epsilon > 0` one uniform `f64` is drawn, and if it is
/// below `epsilon` a second draw picks the action with `gen_range(0..n)`.
/// With `epsilon == 0` no randomness is consumed.
#[inline]
pub fn epsilon_greedy<R: Rng + ?Sized>(table: &QTable, s: &ProductState, epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return rng.gen_range(0..table.n_actions());
    }
    table.greedy_action(s)
}

/// Greedy action for every stored state.
pub fn greedy_policy(table: &QTable) -> BTreeMap<ProductState, usize> {
    table
        .sorted_rows()
        .into_iter()
        .map(|(s, row)| (s, argmax(row)))
        .collect()
}
