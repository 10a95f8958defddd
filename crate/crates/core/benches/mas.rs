use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mas_core::{
    evaluate, score_instance, synth_dump, write_dump, AggregationMode, AttentionDump, EvalConfig,
    Execution, SchemaInstance, TiePolicy,
};

const SENTENCE: &str = "The trophy doesn't fit in the suitcase because it is too small.";
const TOKENS: &str =
    "[CLS] the trophy doesn ' t fit in the suitcase because it is too small . [SEP]";

fn tokens() -> Vec<String> {
    TOKENS.split_whitespace().map(str::to_string).collect()
}

fn modes() -> Vec<(&'static str, Execution)> {
    let mut modes = vec![("sequential", Execution::Sequential)];
    if cfg!(feature = "parallel") {
        modes.push(("parallel", Execution::Parallel { threads: None }));
    }
    modes
}

/// BERT-large sized dumps, scored in memory.
fn batch_scoring(c: &mut Criterion) {
    let dumps: Vec<AttentionDump> = (0..64)
        .map(|seed| synth_dump(&tokens(), 24, 16, 11, 9, 0.2, seed).unwrap())
        .collect();
    let candidates = [vec![1usize, 2], vec![8, 9]];

    let mut group = c.benchmark_group("score_batch");
    for (name, exec) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                exec.map(&dumps, |d| {
                    score_instance(
                        d,
                        &[11],
                        &candidates,
                        AggregationMode::Sum,
                        TiePolicy::NoneWins,
                        "b",
                    )
                    .unwrap()
                    .decision
                })
            })
        });
    }
    group.finish();
}

/// Full pipeline from disk: read dumps, align spans, score, summarize.
fn dataset_evaluation(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let instances: Vec<SchemaInstance> = (0..128)
        .map(|i| {
            SchemaInstance::new(
                format!("custom-{i:03}"),
                SENTENCE,
                "it",
                47,
                vec!["the trophy".into(), "the suitcase".into()],
                Some(1),
            )
            .unwrap()
        })
        .collect();
    for (i, inst) in instances.iter().enumerate() {
        let mut d = synth_dump(&tokens(), 12, 12, 11, 9, 0.3, i as u64).unwrap();
        d.example_id = inst.id.clone();
        write_dump(&d, dir.path().join(&inst.id)).unwrap();
    }

    let mut group = c.benchmark_group("evaluate");
    group.sample_size(20);
    for (name, execution) in modes() {
        let config = EvalConfig {
            execution,
            ..EvalConfig::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(evaluate(&instances, dir.path(), &config).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, batch_scoring, dataset_evaluation);
criterion_main!(benches);
