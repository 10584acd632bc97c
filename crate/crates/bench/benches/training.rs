use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use twotower_core::objective::{semantic_indicators, BatchWorkspace, Gradients};
use twotower_core::trainer::example_weights;
use twotower_core::{
    generate_corpus, init_params, train, ContentDims, LossWeights, ModelConfig, SemanticLabelConfig, SynthConfig,
    TrainConfig,
};

fn batch_gradients(c: &mut Criterion) {
    let data = generate_corpus(&SynthConfig::reference()).unwrap();
    let model = ModelConfig::default();
    let params = init_params(&model, data.n_videos(), ContentDims::of(&data), 1).unwrap();
    let mut group = c.benchmark_group("batch_gradients");
    for b in [64usize, 256, 1024] {
        let batch = &data.pairs()[..b];
        let indicators = semantic_indicators(data.videos(), batch, &SemanticLabelConfig::default()).unwrap();
        let weights = example_weights(batch, true).unwrap();
        let mut ws = BatchWorkspace::default();
        let mut grads = Gradients::zeros_like(&params);
        group.bench_function(format!("b{b}"), |bench| {
            bench.iter(|| {
                ws.compute(
                    &params,
                    &model,
                    data.videos(),
                    black_box(batch),
                    &indicators,
                    &weights,
                    &LossWeights::ratio(500.0),
                    &mut grads,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn one_epoch(c: &mut Criterion) {
    let data = generate_corpus(&SynthConfig {
        n_pairs: 10_000,
        ..SynthConfig::reference()
    })
    .unwrap();
    let model = ModelConfig::default();
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("epoch_10k_pairs", |b| {
        b.iter(|| train(black_box(&data), &model, &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, batch_gradients, one_epoch);
criterion_main!(benches);
