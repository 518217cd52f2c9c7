//! Criterion benchmarks for `smm-core`; see `benches/`.
