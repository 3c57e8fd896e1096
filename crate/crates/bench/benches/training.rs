use std::hint::black_box;

use bnnal_bench::{digits_like, lenet};
use bnnal_core::nn::Family;
use bnnal_core::train::{adam_step, objective_and_gradients, OptimizerState};
use bnnal_core::RngStream;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn train_step(c: &mut Criterion) {
    let batch = digits_like(32);
    let mut g = c.benchmark_group("train_step_32");
    for (name, family) in [("plain", Family::Plain), ("dropout", Family::Dropout), ("bayesian", Family::Bayesian)] {
        let mut net = lenet(family);
        let mut opt = OptimizerState::new(net.parameters().iter().map(|p| p.len()));
        let mut stream = RngStream::derive(0, 4);
        let kl = net.is_bayesian().then_some(1.0 / 1000.0);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let noise = (family != Family::Plain).then(|| net.draw_noise(32, true, &mut stream));
                let (loss, grads) =
                    objective_and_gradients(&net, black_box(&batch.features), &batch.targets, noise.as_ref(), kl).unwrap();
                adam_step(&mut net.parameters_mut(), &grads, &mut opt, 1e-3).unwrap();
                loss
            })
        });
    }
    g.finish();
}

criterion_group!(benches, train_step);
criterion_main!(benches);
