//! Benchmark-only crate; see the `pipeline` bench target.
