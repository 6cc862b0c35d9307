//! Criterion benchmarks of the simulator live in `benches/`.
