//! Two-party semi-honest secure-comparison engine.
//!
//! Implements the chunked millionaires' protocol in two variants — the
//! OT-style baseline (two-round leaf comparison, Beaver-triple tree merge)
//! and a tape-assisted minimal-interaction design (one-round leaf
//! comparison against a synchronized-seed mask, one-round polynomial
//! merge with correlated-randomness reuse) — over an instrumented
//! in-process channel that accounts every round and payload bit, plus the
//! analytical cost models and reporting used by the benchmark CLI.

pub mod bits;
pub mod cost;
pub mod error;
pub mod leaf;
pub mod merge;
pub mod nonlinear;
pub mod report;
pub mod reuse;
pub mod tape;
pub mod transport;

pub use bits::{ArithShare, BitShareVector, ChunkVector, PackedBits, RingValue, Role};
pub use error::{Error, Result};

/// Default tape seed used by the CLI and test fixtures when none is given.
pub const DEFAULT_SEED: u64 = 0x6d69_6c6c_666f_7267;
