use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use fracreact::linsolve::{assemble, solve, DEFAULT_TOLERANCE};
use fracreact::{advance_step, find_scenario, react_cell, CellChemState, ReactionParams, ReactionScheme};

/// Five-point Laplacian plus identity on an `n x n` grid.
fn grid_system(n: usize) -> (Vec<(usize, usize, f64)>, Vec<f64>) {
    let mut triplets = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            triplets.push((k, k, 5.0));
            if i > 0 {
                triplets.push((k, k - 1, -1.0));
            }
            if i + 1 < n {
                triplets.push((k, k + 1, -1.0));
            }
            if j > 0 {
                triplets.push((k, k - n, -1.0));
            }
            if j + 1 < n {
                triplets.push((k, k + n, -1.0));
            }
        }
    }
    let rhs = (0..n * n).map(|k| (k % 7) as f64).collect();
    (triplets, rhs)
}

fn linear_solve(c: &mut Criterion) {
    let n = 50;
    let (triplets, rhs) = grid_system(n);
    let a = assemble(&triplets, n * n).unwrap();
    c.bench_function("solve 50x50 grid", |b| {
        b.iter(|| solve(black_box(&a), black_box(&rhs), DEFAULT_TOLERANCE).unwrap())
    });
}

fn reaction(c: &mut Criterion) {
    let rp = ReactionParams { lambda0: 10.0, act: 4.0, u_e: 1.0, rate_exponent: 2.0 };
    let state = CellChemState { u: 2.0, w: 0.3, theta: 1.5 };
    for scheme in [ReactionScheme::ExplicitEuler, ReactionScheme::Heun] {
        c.bench_function(&format!("react_cell {scheme:?}"), |b| {
            b.iter(|| react_cell(black_box(state), 0.05, &rp, scheme).unwrap())
        });
    }
}

fn split_step(c: &mut Criterion) {
    let scenario = find_scenario("single_fracture_injection").unwrap().config().unwrap().build().unwrap();
    let dt = scenario.grid.dt();
    c.bench_function("advance_step single fracture", |b| {
        b.iter(|| advance_step(&scenario.model, black_box(&scenario.initial), dt, 1).unwrap())
    });
}

criterion_group!(benches, linear_solve, reaction, split_step);
criterion_main!(benches);
