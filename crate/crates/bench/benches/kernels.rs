use bermuda_bench::{max_call, stream};
use bermuda_core::iz::{solve_boundary_point, BoundaryPointJob};
use bermuda_core::{fit_ensemble, price, Engine, ExerciseRule, IzBoundary, PricingConfig, TrainingSet};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn gbm_step(c: &mut Criterion) {
    let (p, s) = max_call(100.0);
    let kernel = p.step_kernel(s.dt());
    let mut values = vec![100.0; 3];
    let mut scratch = vec![0.0; kernel.scratch_len()];
    let mut z = vec![0.0; 3];
    let mut rng = stream(0);
    c.bench_function("gbm_step_d3", |b| {
        b.iter(|| {
            rng.fill_normal(&mut z);
            kernel.advance(&p, &mut values, &z, &mut scratch);
            values.iter_mut().for_each(|v| *v = v.clamp(50.0, 200.0));
            black_box(&values);
        })
    });
}

fn stump_score(c: &mut Criterion) {
    let mut rng = stream(1);
    let xs: Vec<Vec<f64>> = (0..2000).map(|_| (0..3).map(|_| 100.0 + 20.0 * rng.next_normal()).collect()).collect();
    let betas = xs.iter().map(|x| x.iter().copied().fold(f64::MIN, f64::max) - 115.0).collect();
    let ens = fit_ensemble(&TrainingSet::from_betas(xs.clone(), betas).unwrap(), 100).unwrap();
    let mut i = 0;
    c.bench_function("stump_score_100_rounds", |b| {
        b.iter(|| {
            i = (i + 1) % xs.len();
            black_box(ens.score(&xs[i]))
        })
    });
}

fn boundary_point(c: &mut Criterion) {
    let (p, s) = max_call(100.0);
    let later = IzBoundary::terminal(&p, &s);
    let job = BoundaryPointJob { date_index: 8, asset: 0, seed_point: vec![90.0, 95.0], n1: 500, epsilon: 0.01, max_iter: 100 };
    c.bench_function("iz_point_solve_last_date_n1_500", |b| {
        b.iter(|| {
            let mut rng = stream(2);
            black_box(solve_boundary_point(&job, &later, &p, &s, &mut rng, false).unwrap().level)
        })
    });
}

fn pricing_block(c: &mut Criterion) {
    let (p, s) = max_call(100.0);
    let engine = Engine::new(1);
    c.bench_function("price_european_4096_paths", |b| {
        b.iter(|| {
            let cfg = PricingConfig { n_paths: 4096, seed: 3, nb_tasks: Some(1) };
            black_box(price(&p, &s, ExerciseRule::European, cfg, &engine).unwrap().price)
        })
    });
}

criterion_group!(benches, gbm_step, stump_score, boundary_point, pricing_block);
criterion_main!(benches);
