//! Shared fixtures for the benchmarks.

use cadent_core::harness::ExperimentConfig;
use cadent_core::teacher::prepare_teacher;
use cadent_core::{make_env, EnvName, EnvSpec, Environment, TeacherKnowledge, Variant};

/// Dungeon target layout plus knowledge from a default-config teacher.
pub fn dungeon_fixture() -> (Environment, TeacherKnowledge) {
    let cfg = ExperimentConfig::default();
    let teacher = prepare_teacher(
        EnvSpec::new(EnvName::DungeonQuest, Variant::Source, cfg.teacher.layout_seed),
        &cfg.teacher_learning(),
        cfg.teacher.episodes,
        cfg.teacher.seed,
        cfg.teacher.aggregation,
    )
    .expect("dungeon teacher trains");
    let env = make_env(EnvSpec::new(EnvName::DungeonQuest, Variant::Target, 0)).expect("valid spec");
    (env, teacher.knowledge)
}
