//! Benchmark-only crate; see `benches/filters.rs`. No library code.
