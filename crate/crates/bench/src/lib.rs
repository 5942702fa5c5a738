//! Benchmark-only crate; the targets live in `benches/solver.rs`.
//! Run with `cargo bench -p varsolve-bench`.
