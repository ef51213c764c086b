//! Criterion benchmarks for the optimizer hot loops live in `benches/`.
