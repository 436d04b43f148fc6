//! Empty library crate: the criterion micro-benchmarks live in `benches/`.
