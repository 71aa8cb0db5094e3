use criterion::{criterion_group, criterion_main, Criterion};

use cadent_bench::dungeon_fixture;
use cadent_core::harness::ExperimentConfig;
use cadent_core::teacher::train_teacher;
use cadent_core::{
    make_env, train_student, EnvName, EnvSpec, RunOptions, StudentLearner, Variant, VariantPreset,
};

fn students(c: &mut Criterion) {
    let (env, tk) = dungeon_fixture();
    let base = ExperimentConfig::default().base_student();
    let mut group = c.benchmark_group("dungeon_student_100_episodes");
    group.sample_size(10);
    for preset in [VariantPreset::NoTransfer, VariantPreset::Cadent] {
        let cfg = preset.apply(&base);
        group.bench_function(preset.as_str(), |b| {
            b.iter(|| {
                let mut learner = StudentLearner::new(&env, cfg, Some(&tk)).unwrap();
                train_student(&env, &mut learner, 100, 1, RunOptions::default(), &mut |_| {}).unwrap();
                learner.diagnostics.steps
            })
        });
    }
    group.finish();
}

fn teacher(c: &mut Criterion) {
    let env = make_env(EnvSpec::new(EnvName::DungeonQuest, Variant::Source, 0)).unwrap();
    let params = ExperimentConfig::default().teacher_learning();
    let mut group = c.benchmark_group("dungeon_teacher");
    group.sample_size(10);
    group.bench_function("500_episodes", |b| b.iter(|| train_teacher(&env, &params, 500, 0).unwrap().1.successes));
    group.finish();
}

criterion_group!(benches, students, teacher);
criterion_main!(benches);
