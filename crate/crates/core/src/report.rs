//! Per-run protocol reports: measured rounds and volumes, simulated times
//! per network preset, and first-class discrepancy notes wherever measured
//! costs diverge from the reference complexity formulas.

use serde::Serialize;

use crate::cost::EndToEndEstimate;
use crate::transport::{simulated_time, ChannelStats, NetworkPreset};

/// Security parameter used by the synthetic offline-cost formulas.
pub const LAMBDA: u64 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReportConfig {
    pub bits: u8,
    pub chunk: u8,
    pub interleaved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CpuTimes {
    pub sender_ms: f64,
    pub receiver_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulatedTimes {
    pub lan_ms: f64,
    pub wan_ms: f64,
    pub mobile_ms: f64,
}

impl SimulatedTimes {
    pub fn from_stats(stats: &ChannelStats) -> SimulatedTimes {
        SimulatedTimes {
            lan_ms: simulated_time(stats, &NetworkPreset::LAN) * 1e3,
            wan_ms: simulated_time(stats, &NetworkPreset::WAN) * 1e3,
            mobile_ms: simulated_time(stats, &NetworkPreset::MOBILE) * 1e3,
        }
    }

    pub fn by_name(&self, name: &str) -> Option<f64> {
        match name {
            "lan" => Some(self.lan_ms),
            "wan" => Some(self.wan_ms),
            "mobile" => Some(self.mobile_ms),
            _ => None,
        }
    }
}

/// Per-preset end-to-end estimates attached by the estimate command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateBlock {
    pub lan: EndToEndEstimate,
    pub wan: EndToEndEstimate,
    pub mobile: EndToEndEstimate,
}

/// One protocol run (or batch): variant, correctness, measured costs,
/// simulated times, and discrepancy notes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolReport {
    pub variant: String,
    pub op: String,
    pub config: ReportConfig,
    pub count: u64,
    pub correct: u64,
    pub rounds: u32,
    /// Flight count when adjacent opposite-direction phases are overlapped
    /// across batch items; reported alongside the dependency-depth count.
    pub pipelined_rounds: Option<u32>,
    pub bits_s2r: u64,
    pub bits_r2s: u64,
    pub bytes_s2r: u64,
    pub bytes_r2s: u64,
    /// Synthetic offline volume per the reference formulas (the tape
    /// itself is communication-free).
    pub offline_bits: u64,
    pub cpu_ms: Option<CpuTimes>,
    pub simulated_ms: SimulatedTimes,
    pub estimate: Option<EstimateBlock>,
    pub discrepancy_notes: Vec<String>,
    pub seed: u64,
}

impl ProtocolReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

/// Reference online-bit formulas the engine documents and checks against.
pub mod reference {
    /// Baseline leaf online bits as published: `n(q + 2^q)`.
    pub fn baseline_leaf_online_bits(n: u64, q: u8) -> u64 {
        n * (q as u64 + (1u64 << q))
    }

    /// Measured baseline leaf online bits: the masked operand plus a
    /// two-bit payload per oblivious entry.
    pub fn baseline_leaf_measured_bits(n: u64, q: u8) -> u64 {
        n * q as u64 + 2 * n * (1u64 << q)
    }

    /// Tape-assisted leaf online bits as published: `n*q`.
    pub fn tami_leaf_online_bits(n: u64, q: u8) -> u64 {
        n * q as u64
    }

    /// Measured tape-assisted leaf online bits: all masked entries travel.
    pub fn tami_leaf_measured_bits(n: u64, q: u8) -> u64 {
        2 * n * (1u64 << q)
    }

    /// Baseline merge online bits: `8(n-1)`, measured and published agree.
    pub fn baseline_merge_online_bits(n: u64) -> u64 {
        8 * (n - 1)
    }

    /// Tape-assisted merge online bits as published: `n-1`.
    pub fn tami_merge_online_bits(n: u64) -> u64 {
        n - 1
    }

    /// Measured tape-assisted merge online bits: one masked share per
    /// merge variable, one direction when interleaved.
    pub fn tami_merge_measured_bits(n: u64, interleaved: bool) -> u64 {
        let one_way = 2 * n - 1;
        if interleaved {
            one_way
        } else {
            2 * one_way
        }
    }

    /// Synthetic offline bits for the baseline leaf (OT-extension row).
    pub fn baseline_leaf_offline_bits(n: u64, q: u8) -> u64 {
        2 * super::LAMBDA * n * q as u64
    }

    /// Synthetic offline bits for the baseline merge (triple generation).
    pub fn baseline_merge_offline_bits(n: u64) -> u64 {
        8 * (n - 1) * (super::LAMBDA + 1)
    }
}

/// Notes for a baseline run: the leaf payload doubling is documented.
pub fn baseline_notes(n: u64, q: u8) -> Vec<String> {
    vec![format!(
        "leaf online bits: measured {} vs reference formula n(q+2^q) = {}; \
         every oblivious entry carries a 2-bit (lt, eq) payload",
        reference::baseline_leaf_measured_bits(n, q),
        reference::baseline_leaf_online_bits(n, q),
    )]
}

/// Notes for a tape-assisted run: measured leaf and merge volumes versus
/// the published reference formulas, plus the pipelined-round reading.
pub fn tami_notes(n: u64, q: u8, interleaved: bool, pipelined_rounds: Option<u32>) -> Vec<String> {
    let mut notes = vec![
        format!(
            "leaf online bits: measured {} vs reference formula nk = {}; the message \
             structure sends all 2^q masked entries per chunk and no payload \
             compression is assumed",
            reference::tami_leaf_measured_bits(n, q),
            reference::tami_leaf_online_bits(n, q),
        ),
        format!(
            "merge online bits: measured {} vs reference formula n-1 = {}; one masked \
             share per merge variable (n lt, n-1 eq){}",
            reference::tami_merge_measured_bits(n, interleaved),
            reference::tami_merge_online_bits(n),
            if interleaved {
                ", receiver-to-sender only under interleaving"
            } else {
                ", both directions without interleaving"
            }
        ),
    ];
    if let Some(p) = pipelined_rounds {
        notes.push(format!(
            "rounds: {} by dependency depth; {} when adjacent opposite-direction \
             flights are overlapped across items",
            p + 1,
            p
        ));
    }
    notes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_formulas() {
        assert_eq!(reference::baseline_leaf_online_bits(8, 4), 8 * 20);
        assert_eq!(reference::baseline_leaf_measured_bits(8, 4), 32 + 256);
        assert_eq!(reference::tami_leaf_measured_bits(8, 4), 256);
        assert_eq!(reference::baseline_merge_online_bits(8), 56);
        assert_eq!(reference::tami_merge_measured_bits(8, true), 15);
        assert_eq!(reference::tami_merge_measured_bits(8, false), 30);
        assert_eq!(reference::baseline_leaf_offline_bits(8, 4), 2 * 128 * 32);
        assert_eq!(reference::baseline_merge_offline_bits(8), 56 * 129);
    }

    #[test]
    fn report_json_is_deterministic() {
        let stats = ChannelStats {
            rounds: 2,
            messages: 3,
            bits_s2r: 100,
            bits_r2s: 50,
            bytes_s2r: 13,
            bytes_r2s: 7,
        };
        let mk = || ProtocolReport {
            variant: "tami".into(),
            op: "millionaire".into(),
            config: ReportConfig {
                bits: 8,
                chunk: 4,
                interleaved: true,
            },
            count: 10,
            correct: 10,
            rounds: stats.rounds,
            pipelined_rounds: Some(1),
            bits_s2r: stats.bits_s2r,
            bits_r2s: stats.bits_r2s,
            bytes_s2r: stats.bytes_s2r,
            bytes_r2s: stats.bytes_r2s,
            offline_bits: 0,
            cpu_ms: None,
            simulated_ms: SimulatedTimes::from_stats(&stats),
            estimate: None,
            discrepancy_notes: tami_notes(2, 4, true, Some(1)),
            seed: 7,
        };
        assert_eq!(mk().to_json_string(), mk().to_json_string());
    }
}
