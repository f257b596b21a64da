use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use magaisil_core::demos::Quality;
use magaisil_core::eval::evaluate_scripted;
use magaisil_core::nn::{Gradients, Head, Mlp};
use magaisil_core::par::Execution;
use magaisil_core::world::{raycast_sonar, Pose, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn batch_gradients(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = Mlp::init(&[10, 64, 64, 5], Head::Softmax, 0.01, &mut rng).unwrap();
    let inputs: Vec<Vec<f64>> = (0..1024).map(|_| (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut g = c.benchmark_group("batch_gradients_1024");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                Gradients::accumulate(&net, exec, inputs.len(), |i, grads| {
                    let (out, cache) = net.forward(&inputs[i]).unwrap();
                    let mut dz = out.clone();
                    dz[i % 5] -= 1.0;
                    net.accumulate_raw(&cache, &dz, grads).unwrap();
                    -out[i % 5].ln()
                })
            })
        });
    }
    g.finish();
}

fn eval_episodes(c: &mut Criterion) {
    let task = Task::resolve("task2").unwrap();
    let mut g = c.benchmark_group("scripted_eval_8_episodes");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate_scripted(Quality::Optimal, &task, 8, 0, false, exec).unwrap())
        });
    }
    g.finish();
}

fn sonar_sweep(c: &mut Criterion) {
    let task = Task::resolve("task2").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let poses: Vec<Pose> = (0..4096)
        .map(|_| Pose::new(rng.gen_range(5.0..95.0), rng.gen_range(-10.0..10.0), rng.gen_range(-3.1..3.1)))
        .collect();
    let mut g = c.benchmark_group("sonar_4096_poses");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exec.map(&poses, |p| black_box(raycast_sonar(&task.corridor, p).unwrap().nearest())))
        });
    }
    g.finish();
}

criterion_group!(benches, batch_gradients, eval_episodes, sonar_sweep);
criterion_main!(benches);
