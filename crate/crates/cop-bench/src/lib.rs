//! This crate only exists to host the criterion benchmarks under
//! `benches/`; there is no library code.
