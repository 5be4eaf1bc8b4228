use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use carenote_core::corpus::{generate_corpus, GeneratorConfig};
use carenote_core::eval::{tune_thresholds, MetricsReport};
use carenote_core::model::{Batch, EncoderConfig, Mode, Transformer};
use carenote_core::subword::train_vocab;
use carenote_core::window::{encode_corpus, ContextWindow, EncodedDocument};
use carenote_core::{LabelSet, N_LABELS};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus() -> (Vec<EncodedDocument>, usize) {
    let docs = generate_corpus(&GeneratorConfig { n_documents: 60, ..GeneratorConfig::default() }).unwrap();
    let vocab = train_vocab(docs.iter().flat_map(|d| d.sentences.iter().map(|s| s.text.clone())), 2000).unwrap();
    (encode_corpus(&docs, &vocab), vocab.len())
}

fn windows(docs: &[EncodedDocument], n: usize) -> Vec<ContextWindow> {
    docs.iter().flat_map(|d| (0..d.len()).map(move |i| d.window(i, 2, 512))).take(n).collect()
}

fn bench_windows(c: &mut Criterion) {
    let (docs, _) = corpus();
    c.bench_function("windows k=2, 60 notes", |b| b.iter(|| black_box(windows(&docs, usize::MAX).len())));
}

fn bench_encoder(c: &mut Criterion) {
    let (docs, v) = corpus();
    let model = Transformer::new(EncoderConfig::desk(v), 1).unwrap();
    let ws = windows(&docs, 32);
    let batch = Batch::pack(&ws);
    let targets = Array2::from_elem((ws.len(), N_LABELS), 0.0);
    let mut g = c.benchmark_group("desk encoder, 32 windows");
    g.sample_size(10);
    g.bench_function("forward", |b| b.iter(|| black_box(model.classify(&batch).unwrap())));
    g.bench_function("forward + backward", |b| {
        b.iter_batched(
            || model.params.clone(),
            |mut grads| model.classification_loss(&batch, &targets, 1.0, Mode::Eval, Some(&mut grads)).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn bench_metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let scores: Vec<[f64; N_LABELS]> = (0..10_000).map(|_| std::array::from_fn(|_| rng.gen())).collect();
    let labels: Vec<LabelSet> = (0..10_000).map(|_| LabelSet::from_bools(&std::array::from_fn(|_| rng.gen_bool(0.05)))).collect();
    c.bench_function("tune thresholds, 10k x 7", |b| b.iter(|| black_box(tune_thresholds(&scores, &labels).unwrap())));
    let t = tune_thresholds(&scores, &labels).unwrap();
    c.bench_function("metrics report, 10k x 7", |b| b.iter(|| black_box(MetricsReport::compute(&scores, &labels, &t))));
}

criterion_group!(benches, bench_windows, bench_encoder, bench_metrics);
criterion_main!(benches);
