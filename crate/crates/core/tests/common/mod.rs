//! Independent oracles shared by the integration tests.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::HashMap;

use cadent_core::{EnvState, Environment, StateId};

/// A finite deterministic MDP given as an explicit table.
pub struct TableMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `next[s][a] = (s', reward, terminal)`.
    pub next: Vec<Vec<(usize, f64, bool)>>,
}

/// Optimal action values by value iteration, to `tol` in sup norm.
pub fn value_iteration(mdp: &TableMdp, gamma: f64, tol: f64) -> Vec<Vec<f64>> {
    let mut q = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
    loop {
        let v: Vec<f64> = q.iter().map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
        let mut diff: f64 = 0.0;
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let (n, r, term) = mdp.next[s][a];
                let target = if term { r } else { r + gamma * v[n] };
                diff = diff.max((target - q[s][a]).abs());
                q[s][a] = target;
            }
        }
        if diff < tol {
            return q;
        }
    }
}

/// The product MDP of an environment, enumerated from reset. The step limit
/// is ignored, so episodes end only on acceptance or environment failure.
/// States are indexed by their full value: the warehouse key drops the
/// battery tick, so keys alone would merge distinct states.
pub struct EnumeratedEnv {
    pub mdp: TableMdp,
    pub states: Vec<(EnvState, StateId)>,
    pub index: HashMap<(EnvState, StateId), usize>,
}

/// Accepting states get a self-looping terminal row with zero reward.
pub fn enumerate(env: &Environment) -> EnumeratedEnv {
    let states = env.reachable_states();
    let index: HashMap<(EnvState, StateId), usize> = states.iter().enumerate().map(|(i, &sq)| (sq, i)).collect();
    let n_actions = env.n_actions();
    let next = states
        .iter()
        .enumerate()
        .map(|(i, (s, q))| {
            (0..n_actions)
                .map(|a| {
                    if env.dfa().is_accepting(*q) {
                        return (i, 0.0, true);
                    }
                    let out = env.env_step(s, *q, 0, a).unwrap();
                    // Failure states are never expanded; entering them ends the
                    // episode, so their own rows are never bootstrapped from.
                    match index.get(&(out.next_state, out.q_next)) {
                        Some(&j) => (j, out.reward, out.done),
                        None => (i, 0.0, true),
                    }
                })
                .collect()
        })
        .collect();
    EnumeratedEnv {
        mdp: TableMdp { n_states: states.len(), n_actions, next },
        states,
        index,
    }
}

/// `V_n` of an EWMA fed a constant `|δ| = c` from `v0`: `c + (v0 − c)(1−η)ⁿ`.
pub fn ewma_closed_form(v0: f64, c: f64, eta: f64, n: i32) -> f64 {
    c + (v0 - c) * (1.0 - eta).powi(n)
}

/// Logistic function evaluated directly.
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
