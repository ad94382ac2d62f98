//! Per-chunk secure comparison: XOR shares of `lt_j = 1{y_j < x_j}` and
//! `eq_j = 1{y_j = x_j}`.
//!
//! Two variants share the same oblivious-message structure. The baseline
//! takes two online rounds: the receiver masks its operand with the
//! offline selection value and sends `tmp_j = x_j ^ c_j`, then the sender
//! answers with all `2^q` masked payload entries per chunk. The
//! tape-assisted variant derives both `x_j` and `c_j` from synchronized
//! seeds, so the sender already holds `tmp_j` and the first round
//! disappears entirely.
//!
//! Message layout (`LEAF_MSGS`): chunk-major, entry-minor, two bits per
//! entry — the less-than payload then the equality payload. Batched
//! flights concatenate items in order, one frame per phase.

use crate::bits::{BitShareVector, ChunkVector, PackedBits, Role};
use crate::error::{Error, Result};
use crate::tape::{LeafOffline, PadPair};
use crate::transport::{Endpoint, TAG_LEAF_MSGS, TAG_LEAF_TMP};

/// One party's shares of the per-chunk comparison bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafResult {
    pub lt: BitShareVector,
    pub eq: BitShareVector,
}

impl LeafResult {
    pub fn n(&self) -> usize {
        self.lt.len()
    }
}

fn check_dims(off: &LeafOffline, chunks: &ChunkVector) -> Result<()> {
    if off.q != chunks.q() {
        return Err(Error::ChunkWidth {
            q: chunks.q(),
            width: off.q,
        });
    }
    if off.n != chunks.n() {
        return Err(Error::BundleCount {
            expected: chunks.n(),
            got: off.n,
        });
    }
    Ok(())
}

fn batch_shape(offs: &[LeafOffline]) -> Result<(usize, u8)> {
    let first = offs.first().ok_or_else(|| Error::Config("empty batch".into()))?;
    for off in offs {
        if off.n != first.n || off.q != first.q {
            return Err(Error::BundleCount {
                expected: first.n,
                got: off.n,
            });
        }
    }
    Ok((first.n, first.q))
}

/// Writes one item's masked oblivious messages at `base` bits into the
/// combined flight.
fn write_messages(
    dst: &mut PackedBits,
    base: usize,
    y: &ChunkVector,
    tmps: &[u8],
    off: &LeafOffline,
) -> Result<()> {
    let entries = 1usize << off.q;
    let sender = off.sender_chunks()?;
    for (j, chunk) in sender.iter().enumerate() {
        let yj = y.chunk(j);
        for t in 0..entries {
            let pad = chunk.pads[(tmps[j] ^ t as u8) as usize];
            let lt_bit = ((yj as usize) < t) ^ chunk.lt_share ^ pad.lt;
            let eq_bit = (yj as usize == t) ^ chunk.eq_share ^ pad.eq;
            let at = base + (j * entries + t) * 2;
            dst.set(at, lt_bit);
            dst.set(at + 1, eq_bit);
        }
    }
    Ok(())
}

fn sender_result(off: &LeafOffline) -> Result<LeafResult> {
    let sender = off.sender_chunks()?;
    Ok(LeafResult {
        lt: BitShareVector::new(
            PackedBits::from_bools(&sender.iter().map(|c| c.lt_share).collect::<Vec<_>>()),
            Role::Sender,
        ),
        eq: BitShareVector::new(
            PackedBits::from_bools(&sender.iter().map(|c| c.eq_share).collect::<Vec<_>>()),
            Role::Sender,
        ),
    })
}

/// Decrypts the single addressed entry of one chunk's message list.
pub fn decrypt_selected(
    messages: &[(bool, bool)],
    index: u8,
    pad: PadPair,
) -> Result<(bool, bool)> {
    let (lt, eq) = messages
        .get(index as usize)
        .copied()
        .ok_or(Error::IndexOutOfRange {
            index: index as usize,
            limit: messages.len(),
        })?;
    Ok((lt ^ pad.lt, eq ^ pad.eq))
}

/// Decrypts one item's addressed entries from the combined flight.
fn decrypt_at(
    msgs: &PackedBits,
    base: usize,
    off: &LeafOffline,
    operands: &[u8],
) -> Result<LeafResult> {
    let entries = 1usize << off.q;
    let receiver = off.receiver_chunks()?;
    let mut lt = Vec::with_capacity(off.n);
    let mut eq = Vec::with_capacity(off.n);
    for (j, chunk) in receiver.iter().enumerate() {
        let row: Vec<(bool, bool)> = (0..entries)
            .map(|t| {
                let at = base + (j * entries + t) * 2;
                (msgs.get(at), msgs.get(at + 1))
            })
            .collect();
        let (l, e) = decrypt_selected(&row, operands[j], chunk.kept_pad)?;
        lt.push(l);
        eq.push(e);
    }
    Ok(LeafResult {
        lt: BitShareVector::new(PackedBits::from_bools(&lt), Role::Receiver),
        eq: BitShareVector::new(PackedBits::from_bools(&eq), Role::Receiver),
    })
}

/// Streams one item's messages into a combined flight and returns the
/// sender's result shares, letting the caller drop the pad-heavy offline
/// bundle immediately. `tmps_override` supplies the wire-received masked
/// operands on the baseline path; the tape-assisted path reads them from
/// the bundle.
pub(crate) fn render_sender_item(
    dst: &mut PackedBits,
    base: usize,
    y: &ChunkVector,
    off: &LeafOffline,
    tmps_override: Option<&[u8]>,
) -> Result<LeafResult> {
    check_dims(off, y)?;
    let tmps: Vec<u8> = match tmps_override {
        Some(t) => t.to_vec(),
        None => off
            .sender_chunks()?
            .iter()
            .map(|c| c.tmp.ok_or(Error::VariantMismatch("masked selection")))
            .collect::<Result<_>>()?,
    };
    write_messages(dst, base, y, &tmps, off)?;
    sender_result(off)
}

/// Baseline sender over a batch: one masked-operand flight in, one message
/// flight out.
pub fn baseline_sender_batch(
    ep: &mut Endpoint,
    ys: &[ChunkVector],
    offs: &[LeafOffline],
) -> Result<Vec<LeafResult>> {
    let (n, q) = batch_shape(offs)?;
    if ys.len() != offs.len() {
        return Err(Error::BundleCount {
            expected: ys.len(),
            got: offs.len(),
        });
    }
    for (y, off) in ys.iter().zip(offs) {
        check_dims(off, y)?;
    }
    let entries = 1usize << q;
    let tmp_frame = ep.recv(TAG_LEAF_TMP)?;
    if tmp_frame.len() != offs.len() * n * q as usize {
        return Err(Error::MalformedFrame);
    }
    let mut msgs = PackedBits::zeros(offs.len() * n * entries * 2);
    for (i, (y, off)) in ys.iter().zip(offs).enumerate() {
        let tmps: Vec<u8> = (0..n)
            .map(|j| tmp_frame.get_value((i * n + j) * q as usize, q) as u8)
            .collect();
        write_messages(&mut msgs, i * n * entries * 2, y, &tmps, off)?;
    }
    ep.send(TAG_LEAF_MSGS, &msgs)?;
    offs.iter().map(sender_result).collect()
}

/// Baseline receiver over a batch: masks every operand with its offline
/// selection value, then decrypts the addressed entries.
pub fn baseline_receiver_batch(
    ep: &mut Endpoint,
    xs: &[ChunkVector],
    offs: &[LeafOffline],
) -> Result<Vec<LeafResult>> {
    let (n, q) = batch_shape(offs)?;
    if xs.len() != offs.len() {
        return Err(Error::BundleCount {
            expected: xs.len(),
            got: offs.len(),
        });
    }
    for (x, off) in xs.iter().zip(offs) {
        check_dims(off, x)?;
    }
    let entries = 1usize << q;
    let mut tmp_frame = PackedBits::zeros(offs.len() * n * q as usize);
    for (i, (x, off)) in xs.iter().zip(offs).enumerate() {
        let receiver = off.receiver_chunks()?;
        for (j, chunk) in receiver.iter().enumerate() {
            let c = chunk.select.ok_or(Error::VariantMismatch("selection value"))?;
            tmp_frame.set_value((i * n + j) * q as usize, q, (x.chunk(j) ^ c) as u64);
        }
    }
    ep.send(TAG_LEAF_TMP, &tmp_frame)?;
    let msgs = ep.recv(TAG_LEAF_MSGS)?;
    if msgs.len() != offs.len() * n * entries * 2 {
        return Err(Error::MalformedFrame);
    }
    xs.iter()
        .zip(offs)
        .enumerate()
        .map(|(i, (x, off))| decrypt_at(&msgs, i * n * entries * 2, off, x.chunks()))
        .collect()
}

/// Tape-assisted sender over a batch: the masked operands came off the
/// tape, so the single flight goes out immediately.
pub fn tami_sender_batch(
    ep: &mut Endpoint,
    ys: &[ChunkVector],
    offs: &[LeafOffline],
) -> Result<Vec<LeafResult>> {
    let (n, q) = batch_shape(offs)?;
    if ys.len() != offs.len() {
        return Err(Error::BundleCount {
            expected: ys.len(),
            got: offs.len(),
        });
    }
    for (y, off) in ys.iter().zip(offs) {
        check_dims(off, y)?;
    }
    let entries = 1usize << q;
    let mut msgs = PackedBits::zeros(offs.len() * n * entries * 2);
    for (i, (y, off)) in ys.iter().zip(offs).enumerate() {
        let tmps: Vec<u8> = off
            .sender_chunks()?
            .iter()
            .map(|c| c.tmp.ok_or(Error::VariantMismatch("masked selection")))
            .collect::<Result<_>>()?;
        write_messages(&mut msgs, i * n * entries * 2, y, &tmps, off)?;
    }
    ep.send(TAG_LEAF_MSGS, &msgs)?;
    offs.iter().map(sender_result).collect()
}

/// Tape-assisted receiver over a batch: operands are the tape masks;
/// nothing to send.
pub fn tami_receiver_batch(ep: &mut Endpoint, offs: &[LeafOffline]) -> Result<Vec<LeafResult>> {
    let (n, q) = batch_shape(offs)?;
    let entries = 1usize << q;
    let msgs = ep.recv(TAG_LEAF_MSGS)?;
    if msgs.len() != offs.len() * n * entries * 2 {
        return Err(Error::MalformedFrame);
    }
    offs.iter()
        .enumerate()
        .map(|(i, off)| {
            let operands: Vec<u8> = off
                .receiver_chunks()?
                .iter()
                .map(|c| c.mask.ok_or(Error::VariantMismatch("tape mask")))
                .collect::<Result<_>>()?;
            decrypt_at(&msgs, i * n * entries * 2, off, &operands)
        })
        .collect()
}

/// Baseline sender: waits for the masked operands, answers with the full
/// message flight.
pub fn baseline_sender(
    ep: &mut Endpoint,
    y: &ChunkVector,
    off: &LeafOffline,
) -> Result<LeafResult> {
    Ok(baseline_sender_batch(ep, std::slice::from_ref(y), std::slice::from_ref(off))?.remove(0))
}

/// Baseline receiver: masks its operand with the offline selection value,
/// then decrypts its addressed entries.
pub fn baseline_receiver(
    ep: &mut Endpoint,
    x: &ChunkVector,
    off: &LeafOffline,
) -> Result<LeafResult> {
    Ok(baseline_receiver_batch(ep, std::slice::from_ref(x), std::slice::from_ref(off))?.remove(0))
}

/// Tape-assisted sender for a single comparison.
pub fn tami_sender(ep: &mut Endpoint, y: &ChunkVector, off: &LeafOffline) -> Result<LeafResult> {
    Ok(tami_sender_batch(ep, std::slice::from_ref(y), std::slice::from_ref(off))?.remove(0))
}

/// Tape-assisted receiver for a single comparison.
pub fn tami_receiver(ep: &mut Endpoint, off: &LeafOffline) -> Result<LeafResult> {
    Ok(tami_receiver_batch(ep, std::slice::from_ref(off))?.remove(0))
}

/// Plaintext oracle for the per-chunk comparison bits.
pub fn plain_leaf_bits(y: &ChunkVector, x: &ChunkVector) -> (Vec<bool>, Vec<bool>) {
    let lt = y
        .chunks()
        .iter()
        .zip(x.chunks())
        .map(|(&yj, &xj)| yj < xj)
        .collect();
    let eq = y
        .chunks()
        .iter()
        .zip(x.chunks())
        .map(|(&yj, &xj)| yj == xj)
        .collect();
    (lt, eq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::{reconstruct, split_chunks, RingValue};
    use crate::tape::{TapeSeed, TeeTape};
    use crate::transport::{run_pair, SchedulerMode};

    fn run_baseline(
        seed: u64,
        width: u8,
        q: u8,
        y: u64,
        x: u64,
    ) -> (Vec<bool>, Vec<bool>, crate::transport::ChannelStats) {
        let n = (width / q) as usize;
        let ts = TapeSeed::from_u64(seed, 0);
        let mut tape_s = TeeTape::new(&ts, Role::Sender);
        let mut tape_r = TeeTape::new(&ts, Role::Receiver);
        let off_s = tape_s.leaf_offline_baseline(n, q).unwrap();
        let off_r = tape_r.leaf_offline_baseline(n, q).unwrap();
        let yc = split_chunks(RingValue::new(y, width).unwrap(), q).unwrap();
        let xc = split_chunks(RingValue::new(x, width).unwrap(), q).unwrap();
        let (rs, rr, stats, _) = run_pair(
            SchedulerMode::Threaded,
            false,
            move |ep| baseline_sender(ep, &yc, &off_s),
            move |ep| baseline_receiver(ep, &xc, &off_r),
        )
        .unwrap();
        let lt = reconstruct(&rs.lt, &rr.lt).unwrap();
        let eq = reconstruct(&rs.eq, &rr.eq).unwrap();
        (lt.iter().collect(), eq.iter().collect(), stats)
    }

    #[test]
    fn baseline_example_0x2f_0x1a() {
        let (lt, eq, stats) = run_baseline(1, 8, 4, 0x1A, 0x2F);
        assert_eq!(lt, vec![true, true]);
        assert_eq!(eq, vec![false, false]);
        assert_eq!(stats.rounds, 2);
        // r->s: n*q bits, s->r: n*2^q*2 bits.
        assert_eq!(stats.bits_r2s, 8);
        assert_eq!(stats.bits_s2r, 64);
        assert_eq!(stats.bytes_r2s, 1);
        assert_eq!(stats.bytes_s2r, 8);
    }

    #[test]
    fn baseline_equal_inputs() {
        let (lt, eq, _) = run_baseline(2, 8, 4, 0x5C, 0x5C);
        assert_eq!(lt, vec![false, false]);
        assert_eq!(eq, vec![true, true]);
    }

    #[test]
    fn baseline_sampled_8bit_matches_plaintext() {
        let mut seed = 0u64;
        for x in (0..=255u64).step_by(5) {
            for y in (0..=255u64).step_by(17) {
                seed += 1;
                let (lt, eq, _) = run_baseline(seed, 8, 4, y, x);
                let yc = split_chunks(RingValue::new(y, 8).unwrap(), 4).unwrap();
                let xc = split_chunks(RingValue::new(x, 8).unwrap(), 4).unwrap();
                let (plt, peq) = plain_leaf_bits(&yc, &xc);
                assert_eq!(lt, plt, "lt mismatch x={x} y={y}");
                assert_eq!(eq, peq, "eq mismatch x={x} y={y}");
            }
        }
    }

    #[test]
    fn tami_single_round_and_silent_receiver() {
        let ts = TapeSeed::from_u64(7, 0);
        let mut tape_s = TeeTape::new(&ts, Role::Sender);
        let mut tape_r = TeeTape::new(&ts, Role::Receiver);
        let off_s = tape_s.leaf_offline(2, 4).unwrap();
        let off_r = tape_r.leaf_offline(2, 4).unwrap();
        let x = off_r.receiver_mask().unwrap();
        let yc = split_chunks(RingValue::new(0x3B, 8).unwrap(), 4).unwrap();
        let (rs, rr, stats, _) = run_pair(
            SchedulerMode::Threaded,
            false,
            move |ep| tami_sender(ep, &yc, &off_s),
            move |ep| tami_receiver(ep, &off_r),
        )
        .unwrap();
        assert_eq!(stats.rounds, 1);
        assert_eq!(stats.bits_r2s, 0);
        assert_eq!(stats.bytes_r2s, 0);
        assert_eq!(stats.bits_s2r, 64);

        let lt = reconstruct(&rs.lt, &rr.lt).unwrap();
        let yc2 = split_chunks(RingValue::new(0x3B, 8).unwrap(), 4).unwrap();
        let xc = split_chunks(x, 4).unwrap();
        let (plt, _) = plain_leaf_bits(&yc2, &xc);
        assert_eq!(lt.iter().collect::<Vec<_>>(), plt);
    }

    #[test]
    fn tami_exhaustive_over_y_and_seeds() {
        for q in [2u8, 4] {
            let n = (8 / q) as usize;
            for seed in 0..64u64 {
                let ts = TapeSeed::from_u64(seed, 0);
                let mut tape_s = TeeTape::new(&ts, Role::Sender);
                let mut tape_r = TeeTape::new(&ts, Role::Receiver);
                let off_s = tape_s.leaf_offline(n, q).unwrap();
                let off_r = tape_r.leaf_offline(n, q).unwrap();
                let x = off_r.receiver_mask().unwrap();
                let xc = split_chunks(x, q).unwrap();
                for y in (0..=255u64).step_by(11) {
                    let yc = split_chunks(RingValue::new(y, 8).unwrap(), q).unwrap();
                    let yc2 = yc.clone();
                    let off_s2 = off_s.clone();
                    let off_r2 = off_r.clone();
                    let (rs, rr, _, _) = run_pair(
                        SchedulerMode::Threaded,
                        false,
                        move |ep| tami_sender(ep, &yc2, &off_s2),
                        move |ep| tami_receiver(ep, &off_r2),
                    )
                    .unwrap();
                    let lt = reconstruct(&rs.lt, &rr.lt).unwrap();
                    let eq = reconstruct(&rs.eq, &rr.eq).unwrap();
                    let (plt, peq) = plain_leaf_bits(&yc, &xc);
                    assert_eq!(lt.iter().collect::<Vec<_>>(), plt);
                    assert_eq!(eq.iter().collect::<Vec<_>>(), peq);
                }
            }
        }
    }

    #[test]
    fn batched_flight_matches_singles() {
        let ts = TapeSeed::from_u64(21, 0);
        let mut tape_s = TeeTape::new(&ts, Role::Sender);
        let mut tape_r = TeeTape::new(&ts, Role::Receiver);
        let count = 5;
        let offs_s: Vec<_> = (0..count).map(|_| tape_s.leaf_offline(2, 4).unwrap()).collect();
        let offs_r: Vec<_> = (0..count).map(|_| tape_r.leaf_offline(2, 4).unwrap()).collect();
        let ys: Vec<_> = (0..count)
            .map(|i| split_chunks(RingValue::new(37 * i as u64 + 1, 8).unwrap(), 4).unwrap())
            .collect();

        let ys2 = ys.clone();
        let offs_s2 = offs_s.clone();
        let offs_r2 = offs_r.clone();
        let (batch_s, batch_r, stats, _) = run_pair(
            SchedulerMode::Threaded,
            false,
            move |ep| tami_sender_batch(ep, &ys2, &offs_s2),
            move |ep| tami_receiver_batch(ep, &offs_r2),
        )
        .unwrap();
        assert_eq!(stats.rounds, 1);
        assert_eq!(stats.bits_s2r, count as u64 * 64);

        for i in 0..count {
            let y = ys[i].clone();
            let off_s = offs_s[i].clone();
            let off_r = offs_r[i].clone();
            let (s, r, _, _) = run_pair(
                SchedulerMode::Threaded,
                false,
                move |ep| tami_sender(ep, &y, &off_s),
                move |ep| tami_receiver(ep, &off_r),
            )
            .unwrap();
            assert_eq!(s, batch_s[i]);
            assert_eq!(r, batch_r[i]);
        }
    }

    #[test]
    fn decrypt_selected_examples() {
        let msgs = vec![(true, false), (false, true), (true, true)];
        // Pad equal to the addressed entry decrypts to zero.
        assert_eq!(
            decrypt_selected(&msgs, 1, PadPair { lt: false, eq: true }).unwrap(),
            (false, false)
        );
        assert_eq!(
            decrypt_selected(&msgs, 2, PadPair { lt: false, eq: true }).unwrap(),
            (true, false)
        );
        assert!(decrypt_selected(&msgs, 3, PadPair::default()).is_err());
    }

    #[test]
    fn chunk_mismatch_rejected() {
        let ts = TapeSeed::from_u64(9, 0);
        let mut tape_s = TeeTape::new(&ts, Role::Sender);
        let off_s = tape_s.leaf_offline(2, 4).unwrap();
        let yc = split_chunks(RingValue::new(0x3B, 8).unwrap(), 2).unwrap();
        let (mut ep, _other, _) =
            crate::transport::open_session_with(SchedulerMode::Threaded, false);
        assert!(tami_sender(&mut ep, &yc, &off_s).is_err());
    }
}
