//! Criterion benchmarks of the geolayout kernels; see `benches/kernels.rs`.
