//! Benchmarks for the training hot path and the reference solvers.

use criterion::{criterion_group, criterion_main, Criterion};

use varsolve::diffengine::grad_params;
use varsolve::network::{init_params, kernels, ResNetConfig};
use varsolve::problems::{builtin, lagrangian_elliptic, NetRef, PrimalRef};
use varsolve::sampling::{sample_batch, stream_rng};

fn bench_forward(c: &mut Criterion) {
    let cfg = ResNetConfig::new(2, 50, 6).unwrap();
    let params = init_params(&cfg, 1);
    let mut rng = stream_rng(1, 0);
    let batch = sample_batch(2, 512, 64, &mut rng);
    c.bench_function("forward_values_512", |b| {
        b.iter(|| kernels::forward_values(&cfg, params.as_slice(), batch.interior.view()))
    });
    c.bench_function("forward_values_grads_512", |b| {
        b.iter(|| kernels::forward_values_grads(&cfg, params.as_slice(), batch.interior.view()))
    });
}

fn bench_gradient_step(c: &mut Criterion) {
    let spec = builtin("poisson2d").unwrap();
    let cfg = ResNetConfig::new(2, 50, 6).unwrap();
    let mu_cfg = ResNetConfig::new(2, 50, 2).unwrap();
    let params = init_params(&cfg, 1);
    let mu = init_params(&mu_cfg, 2);
    let mut rng = stream_rng(1, 0);
    let batch = sample_batch(2, 512, 64, &mut rng);
    c.bench_function("elliptic_loss_grad_512", |b| {
        b.iter(|| {
            grad_params(&params, |tape| {
                lagrangian_elliptic(
                    tape,
                    &spec,
                    &PrimalRef::plain(NetRef::Tracked(&cfg)),
                    Some(&NetRef::Frozen(&mu_cfg, &mu)),
                    &batch,
                    100.0,
                )
            })
            .unwrap()
        })
    });
}

fn bench_oracle(c: &mut Criterion) {
    let spec = builtin("poisson2d").unwrap();
    c.bench_function("fd_poisson_n64", |b| {
        b.iter(|| varsolve::oracle::fd_poisson(&spec, 64).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_forward, bench_gradient_step, bench_oracle
}
criterion_main!(benches);
