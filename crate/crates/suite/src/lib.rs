//! Holds the end-to-end acceptance suite in `tests/acceptance.rs`; run it with
//! `cargo test -p qgraph-suite --test acceptance -- --nocapture`.
