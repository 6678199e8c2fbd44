//! Criterion benchmarks for the dcstat solvers live in `benches/`.
