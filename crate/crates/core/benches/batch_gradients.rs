use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ser_core::exec::ExecMode;
use ser_core::net::{ModelSpec, Network, SampleRef, Shape2D, Targets};

const FRAMES: usize = 300;
const DIMS: usize = 120;

fn batch(n: usize) -> Vec<(Vec<f32>, usize, Targets)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|i| {
            let x = (0..FRAMES * DIMS)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let valid = rng.random_range(150..=FRAMES);
            (
                x,
                valid,
                Targets {
                    emotion: i % 4,
                    gender: Some(i % 2),
                },
            )
        })
        .collect()
}

fn bench(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch_gradients");
    group.sample_size(10);
    for model in ["compact", "temporal"] {
        let spec = ModelSpec::preset(model, 4, true).unwrap();
        let net = Network::<f32>::new(spec, Shape2D::new(FRAMES, DIMS), 3).unwrap();
        let data = batch(32);
        let refs: Vec<SampleRef<'_>> = data
            .iter()
            .map(|(x, v, t)| SampleRef {
                features: x,
                valid: *v,
                targets: *t,
            })
            .collect();
        for mode in [ExecMode::Sequential, ExecMode::Parallel] {
            group.bench_with_input(
                BenchmarkId::new(model, format!("{mode:?}")),
                &mode,
                |b, &mode| b.iter(|| net.batch_gradients(&refs, Some(11), mode).unwrap()),
            );
        }
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
