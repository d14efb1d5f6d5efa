//! Criterion benchmarks for the metrics and the simulation loop live in
//! `benches/`; run them with `cargo bench -p deploysim-bench`.
