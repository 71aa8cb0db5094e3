//! Deterministic finite automata over environment event alphabets.
//!
//! Automata are described externally by a [`DfaDef`] (named states and
//! symbols, partial transition list) and compiled into a dense [`Dfa`] whose
//! transition table is total: any `(state, symbol)` pair the definition leaves
//! out becomes a self-loop.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense automaton-state id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateId(pub u32);

/// Dense alphabet-symbol id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SymbolId(pub u32);

/// What an environment observed on a step: a labeled event or nothing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Event {
    Null,
    Symbol(SymbolId),
}

impl Event {
    pub fn is_null(self) -> bool {
        matches!(self, Event::Null)
    }
}

/// Key of every Q-table: an environment-state key paired with an automaton state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProductState {
    pub env: u64,
    pub q: StateId,
}

impl ProductState {
    pub fn new(env: u64, q: StateId) -> Self {
        Self { env, q }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionDef {
    pub from: String,
    pub symbol: String,
    pub to: String,
}

/// External (JSON) automaton definition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DfaDef {
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    pub start: String,
    pub accepting: Vec<String>,
    pub transitions: Vec<TransitionDef>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NoStates,
    DuplicateState(String),
    DuplicateSymbol(String),
    UnknownStart(String),
    UnknownAccepting(String),
    UnknownTransitionState { state: String },
    UnknownSymbol { from: String, symbol: String },
    ConflictingTransition { from: String, symbol: String },
    UnreachableAccepting(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoStates => write!(f, "automaton has no states"),
            Violation::DuplicateState(s) => write!(f, "duplicate state `{s}`"),
            Violation::DuplicateSymbol(s) => write!(f, "duplicate symbol `{s}`"),
            Violation::UnknownStart(s) => write!(f, "start state `{s}` is not a declared state"),
            Violation::UnknownAccepting(s) => {
                write!(f, "accepting state `{s}` is not a declared state")
            }
            Violation::UnknownTransitionState { state } => {
                write!(f, "transition references undeclared state `{state}`")
            }
            Violation::UnknownSymbol { from, symbol } => {
                write!(f, "transition from `{from}` uses symbol `{symbol}` outside the alphabet")
            }
            Violation::ConflictingTransition { from, symbol } => {
                write!(f, "state `{from}` has conflicting targets on `{symbol}`")
            }
            Violation::UnreachableAccepting(s) => {
                write!(f, "accepting state `{s}` is unreachable from start")
            }
        }
    }
}

impl DfaDef {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks every structural invariant. Never fails; an empty list means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.states.is_empty() {
            out.push(Violation::NoStates);
        }
        let mut state_idx = HashMap::new();
        for (i, s) in self.states.iter().enumerate() {
            if state_idx.insert(s.as_str(), i).is_some() {
                out.push(Violation::DuplicateState(s.clone()));
            }
        }
        let mut seen_symbols = BTreeSet::new();
        for sym in &self.alphabet {
            if !seen_symbols.insert(sym.as_str()) {
                out.push(Violation::DuplicateSymbol(sym.clone()));
            }
        }
        if !state_idx.contains_key(self.start.as_str()) {
            out.push(Violation::UnknownStart(self.start.clone()));
        }
        for acc in &self.accepting {
            if !state_idx.contains_key(acc.as_str()) {
                out.push(Violation::UnknownAccepting(acc.clone()));
            }
        }

        let mut targets: HashMap<(&str, &str), &str> = HashMap::new();
        let mut adjacency: HashMap<&str, Vec<&str>> = HashMap::new();
        for t in &self.transitions {
            let mut ok = true;
            for state in [&t.from, &t.to] {
                if !state_idx.contains_key(state.as_str()) {
                    out.push(Violation::UnknownTransitionState {
                        state: state.clone(),
                    });
                    ok = false;
                }
            }
            if !seen_symbols.contains(t.symbol.as_str()) {
                out.push(Violation::UnknownSymbol {
                    from: t.from.clone(),
                    symbol: t.symbol.clone(),
                });
                ok = false;
            }
            if !ok {
                continue;
            }
            match targets.insert((t.from.as_str(), t.symbol.as_str()), t.to.as_str()) {
                Some(prev) if prev != t.to => out.push(Violation::ConflictingTransition {
                    from: t.from.clone(),
                    symbol: t.symbol.clone(),
                }),
                _ => adjacency.entry(t.from.as_str()).or_default().push(t.to.as_str()),
            }
        }

        if state_idx.contains_key(self.start.as_str()) {
            let mut reached = BTreeSet::from([self.start.as_str()]);
            let mut queue = VecDeque::from([self.start.as_str()]);
            while let Some(s) = queue.pop_front() {
                for &n in adjacency.get(s).map(Vec::as_slice).unwrap_or(&[]) {
                    if reached.insert(n) {
                        queue.push_back(n);
                    }
                }
            }
            for acc in &self.accepting {
                if state_idx.contains_key(acc.as_str()) && !reached.contains(acc.as_str()) {
                    out.push(Violation::UnreachableAccepting(acc.clone()));
                }
            }
        }
        out
    }
}

/// A validated automaton with a total, dense transition table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dfa {
    states: Vec<String>,
    alphabet: Vec<String>,
    table: Vec<StateId>,
    start: StateId,
    accepting: Vec<bool>,
}

impl Dfa {
    /// Validates `def` and completes missing transitions with self-loops.
    pub fn from_def(def: &DfaDef) -> Result<Self> {
        let violations = def.validate();
        if !violations.is_empty() {
            return Err(Error::InvalidDfa(violations));
        }
        let state_id = |name: &str| {
            StateId(def.states.iter().position(|s| s == name).expect("validated") as u32)
        };
        let n_sym = def.alphabet.len();
        let mut table: Vec<StateId> = (0..def.states.len())
            .flat_map(|q| std::iter::repeat_n(StateId(q as u32), n_sym))
            .collect();
        for t in &def.transitions {
            let from = state_id(&t.from);
            let sym = def.alphabet.iter().position(|s| *s == t.symbol).expect("validated");
            table[from.0 as usize * n_sym + sym] = state_id(&t.to);
        }
        let mut accepting = vec![false; def.states.len()];
        for a in &def.accepting {
            accepting[state_id(a).0 as usize] = true;
        }
        Ok(Self {
            states: def.states.clone(),
            alphabet: def.alphabet.clone(),
            table,
            start: state_id(&def.start),
            accepting,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_def(&DfaDef::from_json(text)?)
    }

    /// Inverse of [`Dfa::from_def`], listing only non-self-loop transitions.
    pub fn to_def(&self) -> DfaDef {
        let mut transitions = Vec::new();
        for q in self.state_ids() {
            for (i, sym) in self.alphabet.iter().enumerate() {
                let to = self.step(q, Event::Symbol(SymbolId(i as u32)));
                if to != q {
                    transitions.push(TransitionDef {
                        from: self.state_name(q).to_owned(),
                        symbol: sym.clone(),
                        to: self.state_name(to).to_owned(),
                    });
                }
            }
        }
        DfaDef {
            states: self.states.clone(),
            alphabet: self.alphabet.clone(),
            start: self.state_name(self.start).to_owned(),
            accepting: self
                .state_ids()
                .filter(|&q| self.is_accepting(q))
                .map(|q| self.state_name(q).to_owned())
                .collect(),
            transitions,
        }
    }

    /// `δ(q, l)`; the null event leaves the state unchanged.
    #[inline]
    pub fn step(&self, q: StateId, event: Event) -> StateId {
        match event {
            Event::Null => q,
            Event::Symbol(sym) => {
                self.table[q.0 as usize * self.alphabet.len() + sym.0 as usize]
            }
        }
    }

    #[inline]
    pub fn is_accepting(&self, q: StateId) -> bool {
        self.accepting[q.0 as usize]
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_ids(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.states.len() as u32).map(StateId)
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn state_name(&self, q: StateId) -> &str {
        &self.states[q.0 as usize]
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name).map(|i| StateId(i as u32))
    }

    pub fn symbol_id(&self, name: &str) -> Option<SymbolId> {
        self.alphabet.iter().position(|s| s == name).map(|i| SymbolId(i as u32))
    }

    pub fn symbol_name(&self, sym: SymbolId) -> &str {
        &self.alphabet[sym.0 as usize]
    }

    /// Shorthand for `Event::Symbol(symbol_id(name))`; panics on unknown names.
    pub fn event(&self, name: &str) -> Event {
        Event::Symbol(
            self.symbol_id(name)
                .unwrap_or_else(|| panic!("symbol `{name}` not in alphabet")),
        )
    }

    /// All `(q, q')` pairs with `q != q'` connected by some symbol.
    pub fn progress_edges(&self) -> BTreeSet<(StateId, StateId)> {
        let mut edges = BTreeSet::new();
        for q in self.state_ids() {
            for s in 0..self.alphabet.len() as u32 {
                let to = self.step(q, Event::Symbol(SymbolId(s)));
                if to != q {
                    edges.insert((q, to));
                }
            }
        }
        edges
    }

    fn reachable_from_start(&self) -> Vec<bool> {
        let edges = self.progress_edges();
        let mut seen = vec![false; self.n_states()];
        seen[self.start.0 as usize] = true;
        let mut queue = VecDeque::from([self.start]);
        while let Some(q) = queue.pop_front() {
            for (_, to) in edges.range((q, StateId(0))..=(q, StateId(u32::MAX))) {
                if !seen[to.0 as usize] {
                    seen[to.0 as usize] = true;
                    queue.push_back(*to);
                }
            }
        }
        seen
    }

    fn coreachable_to_accept(&self) -> Vec<bool> {
        let edges = self.progress_edges();
        let mut co: Vec<bool> = self.accepting.clone();
        loop {
            let mut changed = false;
            for &(from, to) in &edges {
                if co[to.0 as usize] && !co[from.0 as usize] {
                    co[from.0 as usize] = true;
                    changed = true;
                }
            }
            if !changed {
                return co;
            }
        }
    }

    /// Progress edges that lie on at least one path from start to an accepting state.
    pub fn edges_on_accepting_paths(&self) -> BTreeSet<(StateId, StateId)> {
        let reach = self.reachable_from_start();
        let co = self.coreachable_to_accept();
        self.progress_edges()
            .into_iter()
            .filter(|(f, t)| reach[f.0 as usize] && co[t.0 as usize])
            .collect()
    }

    /// Non-accepting states on some path from start to an accepting state:
    /// the states in which an agent must act.
    pub fn decision_states(&self) -> Vec<StateId> {
        let reach = self.reachable_from_start();
        let co = self.coreachable_to_accept();
        self.state_ids()
            .filter(|q| reach[q.0 as usize] && co[q.0 as usize] && !self.is_accepting(*q))
            .collect()
    }
}
