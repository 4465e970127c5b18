//! Criterion benchmarks for gated-depth; see `benches/pipeline.rs`.
