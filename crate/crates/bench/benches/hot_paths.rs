use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use surprise_rl::density::{fit_params, ObsBuffer, Vae, VaeConfig, SIGMA_FLOOR};
use surprise_rl::env::{generate_level, EnvState, GameId};
use surprise_rl::nn::{Activation, Mlp};

const DIM: usize = 256;
const MINIBATCH: usize = 512;

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

fn random_rows(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| r.gen::<f64>())
}

fn full_buffer(r: &mut ChaCha8Rng) -> ObsBuffer {
    let mut buffer = ObsBuffer::for_minibatch(MINIBATCH, DIM);
    while buffer.len() < buffer.capacity() {
        buffer.push(random_rows(r, MINIBATCH, DIM).view()).unwrap();
    }
    buffer
}

fn normal_density(c: &mut Criterion) {
    let mut r = rng();
    let buffer = full_buffer(&mut r);
    c.bench_function("fit_params/10240x256", |b| {
        b.iter(|| fit_params(black_box(&buffer), SIGMA_FLOOR).unwrap())
    });

    let params = fit_params(&buffer, SIGMA_FLOOR).unwrap();
    let batch = random_rows(&mut r, MINIBATCH, DIM);
    c.bench_function("sm_rewards/512x256", |b| {
        b.iter(|| params.sm_rewards(black_box(batch.view())).unwrap())
    });
}

fn mlp(c: &mut Criterion) {
    let mut r = rng();
    let net = Mlp::init(
        &[DIM, 64, 64, 5],
        &[Activation::Tanh, Activation::Tanh, Activation::Identity],
        &mut r,
    )
    .unwrap();
    let x = random_rows(&mut r, 64, DIM);
    let dy = random_rows(&mut r, 64, 5);
    c.bench_function("mlp_forward/64x256", |b| {
        b.iter(|| net.forward(black_box(x.view())).unwrap())
    });
    let (_, tape) = net.forward(x.view()).unwrap();
    c.bench_function("mlp_backward/64x256", |b| {
        b.iter(|| net.backward(black_box(&tape), dy.view()).unwrap())
    });
}

fn vae(c: &mut Criterion) {
    let mut r = rng();
    let cfg = VaeConfig::default();
    let mut vae = Vae::new(3 * DIM, cfg, &mut r).unwrap();
    let batch = random_rows(&mut r, 64, 3 * DIM);
    let noise = random_rows(&mut r, 64, cfg.latent_dim);
    c.bench_function("vae_update/64x768", |b| {
        b.iter(|| vae.update(black_box(batch.view()), noise.view()).unwrap())
    });
}

fn env_step(c: &mut Criterion) {
    for game in [GameId::CoinSeek, GameId::DodgeFight] {
        let level = Arc::new(generate_level(game, 7).unwrap());
        let mut r = rng();
        c.bench_function(&format!("env_step/{}", game.name()), |b| {
            b.iter_batched(
                || EnvState::reset(level.clone(), 256).0,
                |mut env| {
                    for _ in 0..32 {
                        if env.done {
                            break;
                        }
                        black_box(env.step(r.gen_range(0..game.num_actions())).unwrap());
                    }
                },
                BatchSize::SmallInput,
            )
        });
    }
}

criterion_group!(benches, normal_density, mlp, vae, env_step);
criterion_main!(benches);
