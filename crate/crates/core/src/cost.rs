//! Analytical computation-cost models and the end-to-end time estimator.
//!
//! The hash-pipeline models give cycle and memory-transfer counts for
//! processing `N` blocks through seed key expansion plus block encryption:
//! a conventional sequential CPU schedule versus a four-lane interleaved
//! pipeline that keeps round keys in flight instead of spilling them.
//! The estimator combines modeled compute time with the transport's
//! simulated network time; it reports trend ratios, never absolute
//! wall-clock reproductions.

use serde::Serialize;

use crate::transport::{simulated_time, ChannelStats, NetworkPreset};

/// Which pipeline organization a cost profile models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CrhModel {
    Cpu,
    Pipelined,
}

/// Cycle/transfer model with an operating clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrhCostProfile {
    pub model: CrhModel,
    pub clock_hz: f64,
}

/// Default clock for the constrained-client CPU model.
pub const DEFAULT_CPU_CLOCK_HZ: f64 = 800e6;
/// Default clock for the pipelined accelerator model.
pub const DEFAULT_ACCEL_CLOCK_HZ: f64 = 170e6;

impl CrhCostProfile {
    pub fn cpu() -> CrhCostProfile {
        CrhCostProfile {
            model: CrhModel::Cpu,
            clock_hz: DEFAULT_CPU_CLOCK_HZ,
        }
    }

    pub fn pipelined() -> CrhCostProfile {
        CrhCostProfile {
            model: CrhModel::Pipelined,
            clock_hz: DEFAULT_ACCEL_CLOCK_HZ,
        }
    }

    pub fn cost(&self, blocks: f64) -> (f64, f64) {
        match self.model {
            CrhModel::Cpu => crh_cpu_cost(blocks),
            CrhModel::Pipelined => crh_pipelined_cost(blocks),
        }
    }

    pub fn seconds(&self, blocks: f64) -> f64 {
        self.cost(blocks).0 / self.clock_hz
    }
}

/// Sequential schedule: `(11N + 100)` key-expansion cycles plus
/// `(11N + 42)` encryption cycles; `22N + 36N` memory transfers.
pub fn crh_cpu_cost(blocks: f64) -> (f64, f64) {
    let cycles = (11.0 * blocks + 100.0) + (11.0 * blocks + 42.0);
    let transfers = 22.0 * blocks + 36.0 * blocks;
    (cycles, transfers)
}

/// Four-lane interleaved schedule: the stage maximum
/// `max(13N/4, 18N/4)` cycles; `12N/4 + 13N/4` transfers.
pub fn crh_pipelined_cost(blocks: f64) -> (f64, f64) {
    let ke = 13.0 * blocks / 4.0;
    let aes = 18.0 * blocks / 4.0;
    let cycles = ke.max(aes);
    let transfers = 12.0 * blocks / 4.0 + 13.0 * blocks / 4.0;
    (cycles, transfers)
}

/// Pad-derivation block count for a comparison workload: each block yields
/// 128 pseudorandom bits.
pub fn crh_blocks_for_pads(items: u64, n: usize, q: u8) -> f64 {
    let pad_bits = items as f64 * n as f64 * (1u64 << q) as f64 * 2.0;
    (pad_bits / 128.0).ceil()
}

/// Modeled per-party compute times feeding the end-to-end estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComputeProfile {
    pub sender_seconds: f64,
    pub receiver_seconds: f64,
}

impl ComputeProfile {
    pub fn symmetric(profile: &CrhCostProfile, blocks: f64) -> ComputeProfile {
        let s = profile.seconds(blocks);
        ComputeProfile {
            sender_seconds: s,
            receiver_seconds: s,
        }
    }
}

/// Itemized end-to-end estimate for one network preset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EndToEndEstimate {
    pub compute_seconds: f64,
    pub network_seconds: f64,
    pub total_seconds: f64,
}

/// Modeled compute time (slower party) plus simulated network time.
pub fn estimate_end_to_end(
    stats: &ChannelStats,
    compute: &ComputeProfile,
    preset: &NetworkPreset,
) -> EndToEndEstimate {
    let compute_seconds = compute.sender_seconds.max(compute.receiver_seconds);
    let network_seconds = simulated_time(stats, preset);
    EndToEndEstimate {
        compute_seconds,
        network_seconds,
        total_seconds: compute_seconds + network_seconds,
    }
}
