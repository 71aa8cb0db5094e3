//! The four benchmark environments, their labeling functions and bundled
//! task automata.
//!
//! Every environment is deterministic given its [`EnvSpec`]. An
//! [`Environment`] pairs the raw dynamics with the environment's automaton and
//! applies the shared reward table, so a step always returns the next product
//! state.

mod craftsman;
mod dungeon;
mod layout;
mod mountain_car;
mod warehouse;

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::automaton::{Dfa, DfaDef, Event, ProductState, StateId, TransitionDef};
use crate::error::{Error, Result};

pub use layout::EnvParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    BlindCraftsman,
    DungeonQuest,
    MountainCarCollection,
    WarehouseRobotics,
}

impl EnvName {
    pub const ALL: [EnvName; 4] = [
        EnvName::BlindCraftsman,
        EnvName::DungeonQuest,
        EnvName::MountainCarCollection,
        EnvName::WarehouseRobotics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::BlindCraftsman => "blind_craftsman",
            EnvName::DungeonQuest => "dungeon_quest",
            EnvName::MountainCarCollection => "mountain_car_collection",
            EnvName::WarehouseRobotics => "warehouse_robotics",
        }
    }

    /// Stable small integer, used to derive RNG streams.
    pub fn index(self) -> u64 {
        self as u64
    }

    pub fn default_max_steps(self) -> u32 {
        match self {
            EnvName::BlindCraftsman | EnvName::DungeonQuest => 500,
            EnvName::MountainCarCollection | EnvName::WarehouseRobotics => 1000,
        }
    }

    pub fn n_actions(self) -> usize {
        match self {
            EnvName::WarehouseRobotics => 5,
            _ => 4,
        }
    }

    pub fn action_names(self) -> &'static [&'static str] {
        match self {
            EnvName::BlindCraftsman | EnvName::DungeonQuest => &["up", "down", "left", "right"],
            EnvName::MountainCarCollection => {
                &["accelerate_left", "no_op", "accelerate_right", "interact"]
            }
            EnvName::WarehouseRobotics => &["up", "down", "left", "right", "interact"],
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::UnknownEnv(s.to_owned()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Source,
    Target,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(Variant::Source),
            "target" => Ok(Variant::Target),
            other => Err(Error::InvalidSpec(format!("unknown variant `{other}`"))),
        }
    }
}

/// Event alphabet of an environment's labeling function.
pub fn labeling_alphabet(name: EnvName) -> &'static [&'static str] {
    match name {
        EnvName::BlindCraftsman => &["wood", "factory", "home"],
        EnvName::DungeonQuest => &["key", "chest", "sword", "shield", "dragon"],
        EnvName::MountainCarCollection => {
            &["power_cell", "sensor_array", "data_crystal", "base_station"]
        }
        EnvName::WarehouseRobotics => {
            &["scanner", "scan", "charging_station", "item", "deliver"]
        }
    }
}

/// Tools required before Blind Craftsman's home transition in the bundled automaton.
pub const CRAFTSMAN_QUOTA: u8 = 3;

/// The canonical automaton for `name`, parsed from the bundled definition file.
pub fn bundled_dfa(name: EnvName) -> Dfa {
    Dfa::from_def(&bundled_dfa_def(name)).expect("bundled automata are valid")
}

pub fn bundled_dfa_def(name: EnvName) -> DfaDef {
    let text = match name {
        EnvName::BlindCraftsman => include_str!("../../dfa/blind_craftsman.json"),
        EnvName::DungeonQuest => include_str!("../../dfa/dungeon_quest.json"),
        EnvName::MountainCarCollection => include_str!("../../dfa/mountain_car_collection.json"),
        EnvName::WarehouseRobotics => include_str!("../../dfa/warehouse_robotics.json"),
    };
    DfaDef::from_json(text).expect("bundled automata parse")
}

/// Blind Craftsman automaton for an arbitrary quota: `wood`/`factory` loop
/// `quota` times, then `home`.
pub fn craftsman_dfa_def(quota: u8) -> DfaDef {
    let t = |from: String, symbol: &str, to: String| TransitionDef {
        from,
        symbol: symbol.into(),
        to,
    };
    let mut states = Vec::new();
    let mut transitions = Vec::new();
    for k in 0..quota {
        let idle = format!("tools{k}");
        let carrying = format!("tools{k}_wood");
        let next = format!("tools{}", k + 1);
        transitions.push(t(idle.clone(), "wood", carrying.clone()));
        transitions.push(t(carrying.clone(), "factory", next));
        states.push(idle);
        states.push(carrying);
    }
    let done = format!("tools{quota}");
    transitions.push(t(done.clone(), "home", "home".into()));
    states.push(done);
    states.push("home".into());
    DfaDef {
        states,
        alphabet: labeling_alphabet(EnvName::BlindCraftsman)
            .iter()
            .map(|s| s.to_string())
            .collect(),
        start: "tools0".into(),
        accepting: vec!["home".into()],
        transitions,
    }
}

/// Grid coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: u8,
    pub col: u8,
}

impl Cell {
    pub const fn new(row: u8, col: u8) -> Self {
        Self { row, col }
    }
}

/// Moves one cell in a gridworld; actions 0..4 are up, down, left, right.
/// Moves into walls or off the grid leave the position unchanged, as does
/// any other action.
pub(crate) fn grid_move(pos: Cell, action: usize, rows: u8, cols: u8, walls: &[Cell]) -> Cell {
    let (r, c) = (pos.row as i16, pos.col as i16);
    let (nr, nc) = match action {
        0 => (r - 1, c),
        1 => (r + 1, c),
        2 => (r, c - 1),
        3 => (r, c + 1),
        _ => (r, c),
    };
    if nr < 0 || nc < 0 || nr >= rows as i16 || nc >= cols as i16 {
        return pos;
    }
    let next = Cell::new(nr as u8, nc as u8);
    if walls.contains(&next) {
        pos
    } else {
        next
    }
}

/// Per-environment discrete state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvState {
    Craftsman { pos: Cell, wood: u8, tools: u8 },
    Dungeon { pos: Cell, stage: u8 },
    MountainCar { position: u8, velocity: i8, energy: u8, stage: u8 },
    /// `tick` counts steps since the last battery decrement and is not part of the key.
    Warehouse { pos: Cell, stage: u8, battery: u8, tick: u8 },
}

impl EnvState {
    /// Opaque Q-table key.
    pub fn key(&self) -> u64 {
        let cell = |c: Cell| c.row as u64 | (c.col as u64) << 8;
        match *self {
            EnvState::Craftsman { pos, wood, tools } => {
                cell(pos) | (wood as u64) << 16 | (tools as u64) << 24
            }
            EnvState::Dungeon { pos, stage } => 1 << 56 | cell(pos) | (stage as u64) << 16,
            EnvState::MountainCar { position, velocity, energy, stage } => {
                2 << 56
                    | position as u64
                    | ((velocity as i16 + 128) as u64) << 8
                    | (energy as u64) << 16
                    | (stage as u64) << 24
            }
            EnvState::Warehouse { pos, stage, battery, .. } => {
                3 << 56 | cell(pos) | (stage as u64) << 16 | (battery as u64) << 24
            }
        }
    }
}

/// Extrinsic reward table shared by all environments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardTable {
    pub step_penalty: f64,
    pub progress: f64,
    pub accept_bonus: f64,
}

impl Default for RewardTable {
    fn default() -> Self {
        Self {
            step_penalty: -0.01,
            progress: 1.0,
            accept_bonus: 10.0,
        }
    }
}

impl RewardTable {
    pub fn reward(&self, progressed: bool, accepted: bool) -> f64 {
        let mut r = self.step_penalty;
        if progressed {
            r += self.progress;
        }
        if accepted {
            r += self.accept_bonus;
        }
        r
    }

    /// Largest single-step reward magnitude.
    pub fn r_max(&self) -> f64 {
        self.step_penalty
            .abs()
            .max(self.reward(true, true).abs())
            .max(self.reward(true, false).abs())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: EnvName,
    pub variant: Variant,
    pub layout_seed: u64,
    pub max_steps_per_episode: u32,
    pub parameters: EnvParams,
}

impl EnvSpec {
    /// Canonical spec for `(name, variant)`. Source layouts of the two
    /// gridworlds jitter item positions by `layout_seed`.
    pub fn new(name: EnvName, variant: Variant, layout_seed: u64) -> Self {
        Self {
            name,
            variant,
            layout_seed,
            max_steps_per_episode: name.default_max_steps(),
            parameters: layout::generate(name, variant, layout_seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps_per_episode == 0 {
            return Err(Error::InvalidSpec("max_steps_per_episode must be positive".into()));
        }
        layout::validate(self.name, self.variant, &self.parameters)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub q_next: StateId,
    pub reward: f64,
    pub event: Event,
    pub done: bool,
    /// Episode ended without acceptance (step limit or depleted battery).
    pub timeout: bool,
}

impl StepOutcome {
    pub fn accepted(&self) -> bool {
        self.done && !self.timeout
    }
}

/// Raw dynamics result before automaton bookkeeping.
pub(crate) struct RawStep {
    pub next: EnvState,
    pub event: Option<&'static str>,
    /// Environment-side failure (depleted battery).
    pub failed: bool,
}

#[derive(Clone, Debug)]
pub struct Environment {
    spec: EnvSpec,
    dfa: Dfa,
    rewards: RewardTable,
    events: HashMap<&'static str, Event>,
}

/// Builds an environment from a validated spec.
pub fn make_env(spec: EnvSpec) -> Result<Environment> {
    spec.validate()?;
    let dfa = match (&spec.parameters, spec.name) {
        (EnvParams::Craftsman { quota, .. }, EnvName::BlindCraftsman) if *quota != CRAFTSMAN_QUOTA => {
            Dfa::from_def(&craftsman_dfa_def(*quota))?
        }
        (_, name) => bundled_dfa(name),
    };
    let events = labeling_alphabet(spec.name)
        .iter()
        .map(|&s| (s, dfa.event(s)))
        .collect();
    Ok(Environment {
        spec,
        dfa,
        rewards: RewardTable::default(),
        events,
    })
}

impl Environment {
    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn name(&self) -> EnvName {
        self.spec.name
    }

    pub fn dfa(&self) -> &Dfa {
        &self.dfa
    }

    pub fn rewards(&self) -> &RewardTable {
        &self.rewards
    }

    pub fn n_actions(&self) -> usize {
        self.spec.name.n_actions()
    }

    pub fn max_steps(&self) -> u32 {
        self.spec.max_steps_per_episode
    }

    /// The fixed initial state of the layout.
    pub fn reset(&self) -> EnvState {
        match &self.spec.parameters {
            EnvParams::Craftsman { start, .. } => EnvState::Craftsman { pos: *start, wood: 0, tools: 0 },
            EnvParams::Dungeon { start, .. } => EnvState::Dungeon { pos: *start, stage: 0 },
            EnvParams::MountainCar { valley, .. } => mountain_car::initial(*valley),
            EnvParams::Warehouse { start, .. } => EnvState::Warehouse {
                pos: *start,
                stage: 0,
                battery: warehouse::FULL_BATTERY,
                tick: 0,
            },
        }
    }

    pub fn product(&self, s: &EnvState, q: StateId) -> ProductState {
        ProductState::new(s.key(), q)
    }

    /// Raw dynamics: next environment state and the labeled event, if any.
    pub(crate) fn transition(&self, s: &EnvState, action: usize) -> Result<RawStep> {
        let n_actions = self.n_actions();
        if action >= n_actions {
            return Err(Error::InvalidAction { action, n_actions });
        }
        let p = &self.spec.parameters;
        Ok(match (p, s) {
            (EnvParams::Craftsman { .. }, EnvState::Craftsman { .. }) => craftsman::step(p, s, action),
            (EnvParams::Dungeon { .. }, EnvState::Dungeon { .. }) => dungeon::step(p, s, action),
            (EnvParams::MountainCar { .. }, EnvState::MountainCar { .. }) => {
                mountain_car::step(p, s, action)
            }
            (EnvParams::Warehouse { .. }, EnvState::Warehouse { .. }) => warehouse::step(p, s, action),
            _ => {
                return Err(Error::InvalidSpec(format!(
                    "state {s:?} does not belong to {}",
                    self.spec.name
                )))
            }
        })
    }

    /// One product-MDP step from `(s, q)` after `steps_taken` steps of the episode.
    pub fn env_step(&self, s: &EnvState, q: StateId, steps_taken: u32, action: usize) -> Result<StepOutcome> {
        let raw = self.transition(s, action)?;
        let event = raw.event.map_or(Event::Null, |e| self.events[e]);
        let q_next = self.dfa.step(q, event);
        let accepted = self.dfa.is_accepting(q_next);
        let reward = self.rewards.reward(q_next != q, accepted);
        let out_of_steps = steps_taken + 1 >= self.spec.max_steps_per_episode;
        let timeout = !accepted && (raw.failed || out_of_steps);
        Ok(StepOutcome {
            next_state: raw.next,
            q_next,
            reward,
            event,
            done: accepted || timeout,
            timeout,
        })
    }

    /// Plain-text map of the layout.
    pub fn render_layout(&self) -> String {
        layout::render(&self.spec)
    }

    /// Breadth-first search over product states for a shortest action
    /// sequence from reset to acceptance within the step limit.
    pub fn shortest_solution(&self) -> Option<Vec<usize>> {
        let start = (self.reset(), self.dfa.start());
        let mut parent: HashMap<(EnvState, StateId), ((EnvState, StateId), usize)> = HashMap::new();
        let mut depth = HashMap::from([(start, 0u32)]);
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            let d = depth[&node];
            for a in 0..self.n_actions() {
                let out = self.env_step(&node.0, node.1, d, a).expect("valid action");
                let next = (out.next_state, out.q_next);
                if depth.contains_key(&next) {
                    continue;
                }
                depth.insert(next, d + 1);
                parent.insert(next, (node, a));
                if out.accepted() {
                    let mut actions = vec![a];
                    let mut cur = node;
                    while let Some(&(prev, act)) = parent.get(&cur) {
                        actions.push(act);
                        cur = prev;
                    }
                    actions.reverse();
                    return Some(actions);
                }
                if !out.done {
                    queue.push_back(next);
                }
            }
        }
        None
    }

    /// Every product state reachable from reset, ignoring the step limit.
    /// Terminal states (accepting or failed) are included but not expanded.
    pub fn reachable_states(&self) -> Vec<(EnvState, StateId)> {
        let start = (self.reset(), self.dfa.start());
        let mut seen = HashMap::from([(start, ())]);
        let mut order = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some((s, q)) = queue.pop_front() {
            for a in 0..self.n_actions() {
                let raw = self.transition(&s, a).expect("valid action");
                let event = raw.event.map_or(Event::Null, |e| self.events[e]);
                let next = (raw.next, self.dfa.step(q, event));
                if seen.insert(next, ()).is_none() {
                    order.push(next);
                    if !raw.failed && !self.dfa.is_accepting(next.1) {
                        queue.push_back(next);
                    }
                }
            }
        }
        order
    }

    /// Replays `actions` from reset; returns the final outcome and step count.
    pub fn rollout(&self, actions: &[usize]) -> Result<(StepOutcome, u32)> {
        let mut s = self.reset();
        let mut q = self.dfa.start();
        let mut last = None;
        for (t, &a) in actions.iter().enumerate() {
            let out = self.env_step(&s, q, t as u32, a)?;
            s = out.next_state;
            q = out.q_next;
            last = Some(out);
            if out.done {
                return Ok((out, t as u32 + 1));
            }
        }
        last.map(|o| (o, actions.len() as u32))
            .ok_or_else(|| Error::InvalidParam("empty action sequence".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(name: EnvName, variant: Variant) -> Environment {
        make_env(EnvSpec::new(name, variant, 0)).unwrap()
    }

    #[test]
    fn bundled_dfas_match_alphabets_and_validate() {
        for name in EnvName::ALL {
            let def = bundled_dfa_def(name);
            assert!(def.validate().is_empty(), "{name}");
            assert_eq!(def.alphabet, labeling_alphabet(name), "{name}");
            let dfa = bundled_dfa(name);
            assert!(!dfa.is_accepting(dfa.start()), "{name}");
        }
    }

    #[test]
    fn bundled_craftsman_equals_generated_quota_three() {
        let bundled = bundled_dfa(EnvName::BlindCraftsman);
        let generated = Dfa::from_def(&craftsman_dfa_def(CRAFTSMAN_QUOTA)).unwrap();
        assert_eq!(bundled, generated);
    }

    #[test]
    fn automaton_shapes() {
        let dq = bundled_dfa(EnvName::DungeonQuest);
        assert_eq!(dq.n_states(), 6);
        assert_eq!(dq.progress_edges().len(), 5);
        assert_eq!(dq.state_ids().filter(|q| dq.is_accepting(*q)).count(), 1);
        let q_key = dq.step(dq.start(), dq.event("key"));
        assert_eq!(dq.state_name(q_key), "has_key");
        assert!(!dq.is_accepting(q_key));
        assert!(dq.is_accepting(dq.state_id("dragon_defeated").unwrap()));

        assert_eq!(bundled_dfa(EnvName::WarehouseRobotics).n_states(), 6);
        assert_eq!(bundled_dfa(EnvName::MountainCarCollection).n_states(), 5);

        let bc = bundled_dfa(EnvName::BlindCraftsman);
        let carrying = bc.state_id("tools0_wood").unwrap();
        assert_eq!(bc.state_name(bc.step(carrying, bc.event("factory"))), "tools1");
    }

    #[test]
    fn craftsman_accepting_paths_alternate_quota_times() {
        // Enumerate symbol strings up to length 2*quota+1 and keep the accepted ones.
        let dfa = bundled_dfa(EnvName::BlindCraftsman);
        let n = dfa.alphabet().len();
        let len = 2 * CRAFTSMAN_QUOTA as usize + 1;
        let mut accepted = Vec::new();
        for code in 0..n.pow(len as u32) {
            let word: Vec<usize> = (0..len).map(|i| code / n.pow(i as u32) % n).collect();
            let mut q = dfa.start();
            let mut progressed = Vec::new();
            for &sym in &word {
                let next = dfa.step(q, Event::Symbol(crate::automaton::SymbolId(sym as u32)));
                if next != q {
                    progressed.push(dfa.alphabet()[sym].clone());
                }
                q = next;
            }
            if dfa.is_accepting(q) {
                accepted.push(progressed);
            }
        }
        assert!(!accepted.is_empty());
        let expected: Vec<String> = ["wood", "factory", "wood", "factory", "wood", "factory", "home"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for path in accepted {
            assert_eq!(path, expected);
        }
    }

    #[test]
    fn spec_sizes() {
        let dims = |name, variant| match EnvSpec::new(name, variant, 0).parameters {
            EnvParams::Craftsman { rows, cols, .. }
            | EnvParams::Dungeon { rows, cols, .. }
            | EnvParams::Warehouse { rows, cols, .. } => (rows, cols),
            EnvParams::MountainCar { positions, .. } => (positions, 1),
        };
        assert_eq!(dims(EnvName::BlindCraftsman, Variant::Target), (25, 25));
        assert_eq!(dims(EnvName::BlindCraftsman, Variant::Source), (15, 15));
        assert_eq!(dims(EnvName::DungeonQuest, Variant::Target), (20, 20));
        assert_eq!(dims(EnvName::DungeonQuest, Variant::Source), (12, 12));
        assert_eq!(dims(EnvName::WarehouseRobotics, Variant::Target), (10, 12));
        assert_eq!(dims(EnvName::WarehouseRobotics, Variant::Source), (6, 8));
        assert_eq!(dims(EnvName::MountainCarCollection, Variant::Target), (15, 1));
        assert_eq!(dims(EnvName::MountainCarCollection, Variant::Source), (9, 1));
    }

    #[test]
    fn same_spec_same_layout() {
        for name in EnvName::ALL {
            for variant in [Variant::Source, Variant::Target] {
                let a = EnvSpec::new(name, variant, 17);
                let b = EnvSpec::new(name, variant, 17);
                assert_eq!(a, b);
                assert_eq!(make_env(a).unwrap().render_layout(), make_env(b).unwrap().render_layout());
            }
        }
    }

    #[test]
    fn layout_seed_moves_source_items() {
        let layouts: std::collections::BTreeSet<String> = (0..8)
            .map(|seed| EnvSpec::new(EnvName::DungeonQuest, Variant::Source, seed).to_json().unwrap())
            .collect();
        assert!(layouts.len() > 1);
        for seed in 0..8 {
            EnvSpec::new(EnvName::DungeonQuest, Variant::Source, seed).validate().unwrap();
            EnvSpec::new(EnvName::BlindCraftsman, Variant::Source, seed).validate().unwrap();
        }
    }

    #[test]
    fn reset_states() {
        match env(EnvName::DungeonQuest, Variant::Target).reset() {
            EnvState::Dungeon { stage, .. } => assert_eq!(stage, 0),
            other => panic!("{other:?}"),
        }
        let bc = env(EnvName::BlindCraftsman, Variant::Target);
        match bc.reset() {
            EnvState::Craftsman { pos, wood, tools } => {
                assert_eq!((wood, tools), (0, 0));
                let EnvParams::Craftsman { home, .. } = bc.spec().parameters else { unreachable!() };
                assert_ne!(pos, home);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_action_is_rejected() {
        let e = env(EnvName::DungeonQuest, Variant::Target);
        let s = e.reset();
        assert!(matches!(
            e.env_step(&s, e.dfa().start(), 0, 4),
            Err(Error::InvalidAction { action: 4, n_actions: 4 })
        ));
    }

    #[test]
    fn wall_bump_is_a_penalized_noop() {
        let e = env(EnvName::DungeonQuest, Variant::Target);
        let s = EnvState::Dungeon { pos: Cell::new(0, 0), stage: 0 };
        let out = e.env_step(&s, e.dfa().start(), 0, 0).unwrap();
        assert_eq!(out.next_state, s);
        assert_eq!(out.event, Event::Null);
        assert_eq!(out.reward, -0.01);
        assert!(!out.done);
    }

    #[test]
    fn step_limit_times_out() {
        let e = env(EnvName::DungeonQuest, Variant::Target);
        let s = e.reset();
        let out = e.env_step(&s, e.dfa().start(), e.max_steps() - 1, 0).unwrap();
        assert!(out.done && out.timeout && !out.accepted());
    }

    #[test]
    fn every_environment_is_solvable_within_step_limit() {
        for name in EnvName::ALL {
            for variant in [Variant::Source, Variant::Target] {
                let e = env(name, variant);
                let plan = e.shortest_solution().unwrap_or_else(|| panic!("{name} {variant:?}"));
                let (out, steps) = e.rollout(&plan).unwrap();
                assert!(out.accepted(), "{name} {variant:?}");
                assert_eq!(steps as usize, plan.len());
                assert!(steps <= e.max_steps());
            }
        }
    }

    #[test]
    fn reward_table_bounds() {
        let r = RewardTable::default();
        assert_eq!(r.reward(false, false), -0.01);
        assert!((r.reward(true, false) - 0.99).abs() < 1e-12);
        assert!((r.reward(true, true) - 10.99).abs() < 1e-12);
        assert!((r.r_max() - 10.99).abs() < 1e-12);
    }

    #[test]
    fn env_names_parse() {
        for name in EnvName::ALL {
            assert_eq!(name.as_str().parse::<EnvName>().unwrap(), name);
        }
        assert!(matches!("nope".parse::<EnvName>(), Err(Error::UnknownEnv(_))));
    }
}
