//! Trust-gated transfer for tabular reinforcement learning.
//!
//! A teacher trained on a small source layout is distilled into two kinds of
//! knowledge: values attached to task-automaton transitions and a softened
//! policy per automaton state. A student on the larger target layout blends
//! its own TD error with that guidance, weighting each state-action pair by
//! how volatile its recent TD errors have been.
//!
//! ```
//! use cadent_core::{make_env, EnvName, EnvSpec, Variant};
//!
//! let env = make_env(EnvSpec::new(EnvName::DungeonQuest, Variant::Source, 0)).unwrap();
//! let path = env.shortest_solution().unwrap();
//! assert!(path.len() < env.max_steps() as usize);
//! ```

pub mod automaton;
pub mod baselines;
pub mod cadent;
pub mod envs;
pub mod error;
pub mod harness;
pub mod tabular;
pub mod teacher;

pub use automaton::{Dfa, DfaDef, Event, ProductState, StateId, SymbolId};
pub use baselines::{resolve_preset, VariantPreset};
pub use cadent::{
    train_student, GateMode, GuidanceParams, RunOptions, StudentConfig, StudentDiagnostics, StudentLearner,
    TrustParams,
};
pub use envs::{make_env, EnvName, EnvSpec, EnvState, Environment, StepOutcome, Variant};
pub use error::{Error, Result};
pub use harness::{EpisodeRecord, ExperimentConfig, ExperimentOptions, Summary};
pub use tabular::{EpsilonSchedule, LearningParams, QTable};
pub use teacher::{PolicyAggregation, TeacherKnowledge};
