use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::Rng;
use ucfalloc_bench::{desk_instance, population_doubling_ratio};
use ucfalloc_core::nn::{Mlp, OutputActivation};
use ucfalloc_core::optim::{ao_optimize, AoConfig};
use ucfalloc_core::{rng, Assignment};

fn random_assignment(k: usize, s: usize, seed: u64) -> Assignment {
    let mut r = rng::stream(seed, &[]);
    Assignment::from_indices(&(0..k).map(|_| r.random_range(0..s)).collect::<Vec<_>>(), s).unwrap()
}

fn objective(c: &mut Criterion) {
    let ev = desk_instance(12, 4, 1);
    let a = random_assignment(12, 4, 1);
    c.bench_function("evaluate K=12 S=4", |b| b.iter(|| ev.evaluate(&a)));
    c.bench_function("zero-forcing K=12 S=4", |b| b.iter(|| ev.phy(&a).unwrap()));
}

fn network(c: &mut Criterion) {
    let mut r = rng::stream(2, &[]);
    let net = Mlp::new(&[96, 64, 32, 48], OutputActivation::Softmax { group: 4 }, &mut r).unwrap();
    let x: Vec<f64> = (0..96).map(|_| r.random_range(-1.0..1.0)).collect();
    let g: Vec<f64> = (0..48).map(|_| r.random_range(-1.0..1.0)).collect();
    c.bench_function("actor forward", |b| b.iter(|| net.forward(&x).unwrap()));
    c.bench_function("actor forward+backward", |b| {
        b.iter(|| {
            let cache = net.forward_cached(&x).unwrap();
            net.backward(&cache, &g).unwrap()
        })
    });
}

fn aquila(c: &mut Criterion) {
    let ev = desk_instance(12, 4, 3);
    let mut group = c.benchmark_group("aquila");
    group.sample_size(10);
    for p in [10, 20] {
        let cfg = AoConfig { population: p, iterations: 20, parallel: false, ..Default::default() };
        group.bench_function(format!("P={p} T=20"), |b| b.iter_batched(|| (), |_| ao_optimize(&ev, &cfg, 0), BatchSize::SmallInput));
    }
    group.finish();
    // Cost should roughly double with the population; reported, not enforced.
    println!("population doubling time ratio: {:.2}", population_doubling_ratio(&ev, 10, 20, 3));
}

criterion_group!(benches, objective, network, aquila);
criterion_main!(benches);
