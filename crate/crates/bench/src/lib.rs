//! Criterion harness crate; see `benches/methods.rs`.
