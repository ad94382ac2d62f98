//! Instrumented duplex channel between the two parties.
//!
//! Frames are `tag (1 byte) | byte length (4 bytes LE) | payload`; payloads
//! are packed bit vectors and are never compressed. Statistics count
//! payload bits and bytes only — framing overhead is excluded so measured
//! volumes map directly onto the protocol cost formulas.
//!
//! Rounds are dependency depth, not message count: every frame is stamped
//! `1 + max(stamp over frames its sender had already received)`, and the
//! session's round count is the largest stamp. A batch of frames sent
//! before any reply therefore counts as one round, concurrent
//! opposite-direction flights within a phase count once, and a
//! request/response pair counts twice. Protocol routines keep the stamps
//! schedule-independent by always sending a phase's frames before blocking
//! on the peer's.

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex};

use serde::Serialize;

use crate::bits::{PackedBits, Role};
use crate::error::{Error, Result};

pub const TAG_LEAF_TMP: u8 = 0x11;
pub const TAG_LEAF_MSGS: u8 = 0x12;
pub const TAG_MERGE_OPEN_BASE: u8 = 0x21;
pub const TAG_MERGE_OPEN_TAMI: u8 = 0x22;
pub const TAG_POLY_OPEN: u8 = 0x23;
pub const TAG_MUX_OPEN: u8 = 0x31;
pub const TAG_RAW: u8 = 0x01;

pub fn known_tag(tag: u8) -> bool {
    matches!(
        tag,
        TAG_LEAF_TMP
            | TAG_LEAF_MSGS
            | TAG_MERGE_OPEN_BASE
            | TAG_MERGE_OPEN_TAMI
            | TAG_POLY_OPEN
            | TAG_MUX_OPEN
            | TAG_RAW
    )
}

/// Encodes a frame for the wire: tag, payload byte count, payload bytes.
pub fn encode_frame(tag: u8, payload: &PackedBits) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + payload.byte_len());
    out.push(tag);
    out.extend_from_slice(&(payload.byte_len() as u32).to_le_bytes());
    out.extend_from_slice(payload.as_bytes());
    out
}

/// Decodes one frame; the logical bit count is supplied by protocol
/// context.
pub fn decode_frame(data: &[u8], payload_bits: usize) -> Result<(u8, PackedBits)> {
    if data.len() < 5 {
        return Err(Error::MalformedFrame);
    }
    let tag = data[0];
    if !known_tag(tag) {
        return Err(Error::UnknownTag(tag));
    }
    let len = u32::from_le_bytes(data[1..5].try_into().unwrap()) as usize;
    if data.len() != 5 + len || len != payload_bits.div_ceil(8) {
        return Err(Error::MalformedFrame);
    }
    let mut wire = (payload_bits as u32).to_le_bytes().to_vec();
    wire.extend_from_slice(&data[5..]);
    let payload = PackedBits::from_wire(&wire)?;
    Ok((tag, payload))
}

/// Cumulative channel statistics. Byte counts are per-frame
/// `ceil(bits / 8)`; bit counts are exact payload bits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ChannelStats {
    pub rounds: u32,
    pub messages: u64,
    pub bits_s2r: u64,
    pub bits_r2s: u64,
    pub bytes_s2r: u64,
    pub bytes_r2s: u64,
}

impl ChannelStats {
    pub fn total_bits(&self) -> u64 {
        self.bits_s2r + self.bits_r2s
    }

    pub fn total_bytes(&self) -> u64 {
        self.bytes_s2r + self.bytes_r2s
    }
}

/// Simulated network environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetworkPreset {
    pub name: &'static str,
    pub bandwidth_bps: f64,
    pub one_way_latency_s: f64,
}

impl NetworkPreset {
    pub const LAN: NetworkPreset = NetworkPreset {
        name: "lan",
        bandwidth_bps: 3e9,
        one_way_latency_s: 0.3e-3,
    };
    pub const WAN: NetworkPreset = NetworkPreset {
        name: "wan",
        bandwidth_bps: 200e6,
        one_way_latency_s: 50e-3,
    };
    pub const MOBILE: NetworkPreset = NetworkPreset {
        name: "mobile",
        bandwidth_bps: 100e6,
        one_way_latency_s: 80e-3,
    };

    pub fn all() -> [NetworkPreset; 3] {
        [NetworkPreset::LAN, NetworkPreset::WAN, NetworkPreset::MOBILE]
    }

    pub fn by_name(name: &str) -> Option<NetworkPreset> {
        match name.to_ascii_lowercase().as_str() {
            "lan" => Some(NetworkPreset::LAN),
            "wan" => Some(NetworkPreset::WAN),
            "mobile" => Some(NetworkPreset::MOBILE),
            _ => None,
        }
    }
}

/// Converts accounting into seconds: each round costs a full round trip,
/// and every payload byte crosses the configured bandwidth.
pub fn simulated_time(stats: &ChannelStats, preset: &NetworkPreset) -> f64 {
    stats.rounds as f64 * 2.0 * preset.one_way_latency_s
        + (stats.total_bytes() as f64) * 8.0 / preset.bandwidth_bps
}

/// One recorded frame: direction, tag, payload, and the dependency
/// bookkeeping needed to recount rounds from the trace alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEvent {
    /// Sending party.
    pub from: Role,
    pub tag: u8,
    /// Round stamp assigned when sent.
    pub round: u32,
    /// Position within the sender's own send sequence.
    pub seq: u64,
    /// How many frames the sender had received before sending this one.
    pub recv_count: u64,
    pub payload: PackedBits,
}

/// Scheduling discipline for the two party routines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerMode {
    /// Both parties run freely; receives block on a condition variable.
    Threaded,
    /// A baton serializes execution: a party runs until it blocks on an
    /// empty queue, then explicitly yields to its peer. Deterministic.
    Lockstep,
}

#[derive(Default)]
struct Queue {
    frames: VecDeque<(u8, u32, PackedBits)>,
    closed: bool,
}

struct Shared {
    // Queue index: frames *addressed to* Sender = 0, to Receiver = 1.
    queues: [Mutex<Queue>; 2],
    queue_cvs: [Condvar; 2],
    stats: Mutex<ChannelStats>,
    transcript: Option<Mutex<Vec<TranscriptEvent>>>,
    mode: SchedulerMode,
    baton: Mutex<Role>,
    baton_cv: Condvar,
}

fn dir_index(role: Role) -> usize {
    match role {
        Role::Sender => 0,
        Role::Receiver => 1,
    }
}

/// One party's end of the channel.
pub struct Endpoint {
    shared: Arc<Shared>,
    role: Role,
    max_recv_round: u32,
    recv_count: u64,
    sent: u64,
}

/// Driver-side handle for reading statistics and transcripts after the
/// party routines finish.
#[derive(Clone)]
pub struct SessionMonitor {
    shared: Arc<Shared>,
}

/// Opens a threaded session with transcript recording enabled.
pub fn open_session() -> (Endpoint, Endpoint) {
    let (s, r, _) = open_session_with(SchedulerMode::Threaded, true);
    (s, r)
}

pub fn open_session_with(mode: SchedulerMode, record: bool) -> (Endpoint, Endpoint, SessionMonitor) {
    let shared = Arc::new(Shared {
        queues: [Mutex::new(Queue::default()), Mutex::new(Queue::default())],
        queue_cvs: [Condvar::new(), Condvar::new()],
        stats: Mutex::new(ChannelStats::default()),
        transcript: if record {
            Some(Mutex::new(Vec::new()))
        } else {
            None
        },
        mode,
        baton: Mutex::new(Role::Sender),
        baton_cv: Condvar::new(),
    });
    let mk = |role| Endpoint {
        shared: Arc::clone(&shared),
        role,
        max_recv_round: 0,
        recv_count: 0,
        sent: 0,
    };
    (
        mk(Role::Sender),
        mk(Role::Receiver),
        SessionMonitor { shared },
    )
}

impl Endpoint {
    pub fn role(&self) -> Role {
        self.role
    }

    pub fn stats(&self) -> ChannelStats {
        *self.shared.stats.lock().unwrap()
    }

    fn wait_for_baton(&self) {
        if self.shared.mode != SchedulerMode::Lockstep {
            return;
        }
        let mut baton = self.shared.baton.lock().unwrap();
        while *baton != self.role {
            baton = self.shared.baton_cv.wait(baton).unwrap();
        }
    }

    fn yield_baton(&self) {
        let mut baton = self.shared.baton.lock().unwrap();
        *baton = self.role.peer();
        drop(baton);
        self.shared.baton_cv.notify_all();
    }

    /// Sends one frame to the peer. Never blocks on the peer's progress
    /// (beyond lockstep turn-taking).
    pub fn send(&mut self, tag: u8, payload: &PackedBits) -> Result<()> {
        if !known_tag(tag) {
            return Err(Error::UnknownTag(tag));
        }
        self.wait_for_baton();
        let round = self.max_recv_round + 1;
        {
            let mut stats = self.shared.stats.lock().unwrap();
            stats.rounds = stats.rounds.max(round);
            stats.messages += 1;
            let bits = payload.len() as u64;
            let bytes = payload.byte_len() as u64;
            match self.role {
                Role::Sender => {
                    stats.bits_s2r += bits;
                    stats.bytes_s2r += bytes;
                }
                Role::Receiver => {
                    stats.bits_r2s += bits;
                    stats.bytes_r2s += bytes;
                }
            }
        }
        if let Some(t) = &self.shared.transcript {
            t.lock().unwrap().push(TranscriptEvent {
                from: self.role,
                tag,
                round,
                seq: self.sent,
                recv_count: self.recv_count,
                payload: payload.clone(),
            });
        }
        self.sent += 1;
        let peer = dir_index(self.role.peer());
        let mut queue = self.shared.queues[peer].lock().unwrap();
        queue.frames.push_back((tag, round, payload.clone()));
        drop(queue);
        self.shared.queue_cvs[peer].notify_all();
        Ok(())
    }

    /// Blocking receive; rejects frames whose tag differs from `expected`.
    /// Spins briefly before parking: protocol exchanges typically complete
    /// within microseconds and thread wakeups would dominate otherwise.
    pub fn recv(&mut self, expected: u8) -> Result<PackedBits> {
        let my_queue = dir_index(self.role);
        let mut spins = 0u32;
        loop {
            self.wait_for_baton();
            let mut queue = self.shared.queues[my_queue].lock().unwrap();
            if let Some((tag, round, payload)) = queue.frames.pop_front() {
                drop(queue);
                if tag != expected {
                    return Err(Error::UnexpectedTag { expected, got: tag });
                }
                self.max_recv_round = self.max_recv_round.max(round);
                self.recv_count += 1;
                return Ok(payload);
            }
            if queue.closed {
                return Err(Error::ChannelClosed);
            }
            match self.shared.mode {
                SchedulerMode::Threaded => {
                    if spins < 1000 {
                        spins += 1;
                        drop(queue);
                        for _ in 0..64 {
                            std::hint::spin_loop();
                        }
                    } else {
                        let _unused = self.shared.queue_cvs[my_queue].wait(queue).unwrap();
                    }
                }
                SchedulerMode::Lockstep => {
                    drop(queue);
                    self.yield_baton();
                }
            }
        }
    }

    /// Send-then-receive on the same tag; the concurrent-exchange idiom
    /// that keeps opposite-direction flights within one round.
    pub fn exchange(&mut self, tag: u8, payload: &PackedBits) -> Result<PackedBits> {
        self.send(tag, payload)?;
        self.recv(tag)
    }
}

impl Drop for Endpoint {
    fn drop(&mut self) {
        let peer = dir_index(self.role.peer());
        let mut queue = self.shared.queues[peer].lock().unwrap();
        queue.closed = true;
        drop(queue);
        if self.shared.mode == SchedulerMode::Lockstep {
            self.yield_baton();
        }
        self.shared.queue_cvs[peer].notify_all();
    }
}

impl SessionMonitor {
    pub fn stats(&self) -> ChannelStats {
        *self.shared.stats.lock().unwrap()
    }

    /// Transcript in canonical order: by round stamp, direction (sender
    /// first), then per-sender sequence. Canonicalization makes dumps
    /// byte-identical across scheduler interleavings.
    pub fn transcript(&self) -> Vec<TranscriptEvent> {
        let Some(t) = &self.shared.transcript else {
            return Vec::new();
        };
        let mut events = t.lock().unwrap().clone();
        events.sort_by_key(|e| (e.round, dir_index(e.from), e.seq));
        events
    }

    /// Serialized transcript dump: per event, direction byte, tag,
    /// receive-count, and the wire-framed payload.
    pub fn dump_transcript(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in self.transcript() {
            out.push(dir_index(e.from) as u8);
            out.push(e.tag);
            out.extend_from_slice(&e.recv_count.to_le_bytes());
            out.extend_from_slice(&e.payload.to_wire());
        }
        out
    }
}

/// Independent recount of rounds and volumes from a canonical transcript.
///
/// Frame stamps are recomputed from scratch: a frame's stamp is one more
/// than the largest stamp among the first `recv_count` opposite-direction
/// frames, which are exactly the frames its sender had read. Used to check
/// that live accounting matches a replay of the trace.
pub fn replay_stats(events: &[TranscriptEvent]) -> ChannelStats {
    let mut stats = ChannelStats::default();
    let mut stamps: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
    let mut ordered: Vec<&TranscriptEvent> = events.iter().collect();
    ordered.sort_by_key(|e| (e.round, dir_index(e.from), e.seq));
    for e in ordered {
        let from = dir_index(e.from);
        let opposite = &stamps[1 - from];
        let depth = opposite
            .iter()
            .take(e.recv_count as usize)
            .copied()
            .max()
            .unwrap_or(0);
        let stamp = depth + 1;
        stamps[from].push(stamp);
        stats.rounds = stats.rounds.max(stamp);
        stats.messages += 1;
        let bits = e.payload.len() as u64;
        let bytes = e.payload.byte_len() as u64;
        match e.from {
            Role::Sender => {
                stats.bits_s2r += bits;
                stats.bytes_s2r += bytes;
            }
            Role::Receiver => {
                stats.bits_r2s += bits;
                stats.bytes_r2s += bytes;
            }
        }
    }
    stats
}

/// Runs the two party routines to completion and returns their outputs
/// with the session stats and canonical transcript.
pub fn run_pair<S, R, FS, FR>(
    mode: SchedulerMode,
    record: bool,
    sender_fn: FS,
    receiver_fn: FR,
) -> Result<(S, R, ChannelStats, Vec<TranscriptEvent>)>
where
    S: Send,
    R: Send,
    FS: FnOnce(&mut Endpoint) -> Result<S> + Send,
    FR: FnOnce(&mut Endpoint) -> Result<R> + Send,
{
    let (mut ep_s, mut ep_r, monitor) = open_session_with(mode, record);
    let (out_s, out_r) = std::thread::scope(|scope| {
        let hs = scope.spawn(move || {
            let out = sender_fn(&mut ep_s);
            drop(ep_s);
            out
        });
        let hr = scope.spawn(move || {
            let out = receiver_fn(&mut ep_r);
            drop(ep_r);
            out
        });
        (hs.join().expect("sender thread"), hr.join().expect("receiver thread"))
    });
    Ok((out_s?, out_r?, monitor.stats(), monitor.transcript()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(n: usize) -> PackedBits {
        PackedBits::zeros(n)
    }

    #[test]
    fn fresh_session_stats_zero() {
        let (ep, _ep2, mon) = open_session_with(SchedulerMode::Threaded, true);
        assert_eq!(ep.stats(), ChannelStats::default());
        assert_eq!(mon.stats().rounds, 0);
    }

    #[test]
    fn one_way_send_is_one_round() {
        let (s, r, stats, _) = run_pair(
            SchedulerMode::Threaded,
            true,
            |ep| {
                ep.send(TAG_RAW, &bits(80))?;
                Ok(())
            },
            |ep| ep.recv(TAG_RAW),
        )
        .unwrap();
        let _ = (s, r);
        assert_eq!(stats.rounds, 1);
        assert_eq!(stats.bytes_s2r, 10);
        assert_eq!(stats.bits_s2r, 80);
        assert_eq!(stats.bytes_r2s, 0);
    }

    #[test]
    fn ping_pong_counts_two_rounds_per_iteration() {
        let k = 5;
        let (_, _, stats, events) = run_pair(
            SchedulerMode::Threaded,
            true,
            |ep| {
                for _ in 0..k {
                    ep.send(TAG_RAW, &bits(8))?;
                    ep.recv(TAG_RAW)?;
                }
                Ok(())
            },
            |ep| {
                for _ in 0..k {
                    ep.recv(TAG_RAW)?;
                    ep.send(TAG_RAW, &bits(8))?;
                }
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(stats.rounds, 2 * k);
        assert_eq!(replay_stats(&events), stats);
    }

    #[test]
    fn concurrent_exchange_is_one_round() {
        let (_, _, stats, events) = run_pair(
            SchedulerMode::Threaded,
            true,
            |ep| ep.exchange(TAG_RAW, &bits(16)),
            |ep| ep.exchange(TAG_RAW, &bits(16)),
        )
        .unwrap();
        assert_eq!(stats.rounds, 1);
        assert_eq!(stats.bits_s2r, 16);
        assert_eq!(stats.bits_r2s, 16);
        assert_eq!(replay_stats(&events), stats);
    }

    #[test]
    fn batch_of_frames_is_one_round() {
        let (_, _, stats, _) = run_pair(
            SchedulerMode::Threaded,
            true,
            |ep| {
                ep.send(TAG_RAW, &bits(8))?;
                ep.send(TAG_RAW, &bits(8))?;
                ep.send(TAG_RAW, &bits(8))?;
                Ok(())
            },
            |ep| {
                ep.recv(TAG_RAW)?;
                ep.recv(TAG_RAW)?;
                ep.recv(TAG_RAW)
            },
        )
        .unwrap();
        assert_eq!(stats.rounds, 1);
        assert_eq!(stats.messages, 3);
    }

    #[test]
    fn unexpected_and_unknown_tags_rejected() {
        let (_, r, _, _) = run_pair(
            SchedulerMode::Threaded,
            false,
            |ep| {
                ep.send(TAG_LEAF_TMP, &bits(8))?;
                Ok(())
            },
            |ep| Ok(ep.recv(TAG_LEAF_MSGS)),
        )
        .unwrap();
        assert_eq!(
            r.unwrap_err(),
            Error::UnexpectedTag {
                expected: TAG_LEAF_MSGS,
                got: TAG_LEAF_TMP
            }
        );

        let (mut ep, _ep2, _) = open_session_with(SchedulerMode::Threaded, false);
        assert_eq!(ep.send(0x7f, &bits(8)), Err(Error::UnknownTag(0x7f)));
    }

    #[test]
    fn frame_codec_roundtrip() {
        let payload = PackedBits::from_bools(&[true, false, true, true, false]);
        let wire = encode_frame(TAG_LEAF_MSGS, &payload);
        assert_eq!(wire[0], TAG_LEAF_MSGS);
        assert_eq!(wire.len(), 5 + 1);
        let (tag, decoded) = decode_frame(&wire, 5).unwrap();
        assert_eq!(tag, TAG_LEAF_MSGS);
        assert_eq!(decoded, payload);
        assert!(matches!(decode_frame(&[0x7f, 0, 0, 0, 0], 0), Err(Error::UnknownTag(0x7f))));
    }

    #[test]
    fn simulated_time_examples() {
        let one_round = ChannelStats {
            rounds: 1,
            ..Default::default()
        };
        assert!((simulated_time(&one_round, &NetworkPreset::MOBILE) - 0.16).abs() < 1e-12);

        let bandwidth_only = ChannelStats {
            bytes_s2r: 12_500_000,
            ..Default::default()
        };
        assert!((simulated_time(&bandwidth_only, &NetworkPreset::MOBILE) - 1.0).abs() < 1e-9);

        let mixed = ChannelStats {
            rounds: 3,
            bytes_s2r: 600_000,
            bytes_r2s: 400_000,
            ..Default::default()
        };
        assert!((simulated_time(&mixed, &NetworkPreset::WAN) - 0.34).abs() < 1e-9);
    }

    #[test]
    fn lockstep_matches_threaded() {
        let routine_s = |ep: &mut Endpoint| {
            ep.send(TAG_RAW, &bits(24))?;
            let got = ep.exchange(TAG_MERGE_OPEN_TAMI, &bits(8))?;
            Ok(got.len())
        };
        let routine_r = |ep: &mut Endpoint| {
            ep.recv(TAG_RAW)?;
            let got = ep.exchange(TAG_MERGE_OPEN_TAMI, &bits(8))?;
            Ok(got.len())
        };
        let (_, _, st_t, ev_t) =
            run_pair(SchedulerMode::Threaded, true, routine_s, routine_r).unwrap();
        let (_, _, st_l, ev_l) =
            run_pair(SchedulerMode::Lockstep, true, routine_s, routine_r).unwrap();
        assert_eq!(st_t, st_l);
        assert_eq!(ev_t, ev_l);
        assert_eq!(replay_stats(&ev_t), st_t);
    }
}
