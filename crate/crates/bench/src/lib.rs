//! Criterion benchmarks of the solver kernels live in `benches/`.
