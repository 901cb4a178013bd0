//! Criterion benchmarks for the sensing and simulation hot paths; see `benches/`.
