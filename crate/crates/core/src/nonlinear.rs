//! Composed protocols: the full millionaires' comparison, the sign test
//! over additive shares, and rectified-linear evaluation, in single-shot
//! and phase-batched forms.
//!
//! Batched runs send each phase for all items in one flight, so the round
//! count is independent of the batch size. The sign test reduces to one
//! comparison: `1{(r+s) mod 2^w < 2^{w-1}}` is the complement of the sum's
//! top bit, and the carry into that bit is `1{(2^{w-1}-1-s_low) < r_low}`,
//! a millionaires' instance whose receiver operand is derivable from the
//! receiver-side mask. Rectification multiplies the sign bit back onto the
//! shared value with a single multiplexed product: the parties open the
//! bit under a tape-held XOR mask and the value under a tape-held ring
//! mask, then finish locally with the mask's bit/ring double sharing.

use std::sync::Arc;
use std::time::Instant;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bits::{split_chunks, width_mask, ArithShare, ChunkVector, PackedBits, RingValue, Role};
use crate::error::{Error, Result};
use crate::leaf::{self};
use crate::merge::{self, comparison_plan};
use crate::report::{
    self, baseline_notes, tami_notes, CpuTimes, ProtocolReport, ReportConfig, SimulatedTimes,
};
use crate::reuse::ReusePlan;
use crate::tape::{LeafOffline, MuxCorrelation, NonlinearOffline, SubsetProductShares, TapeSeed, TeeTape};
use crate::transport::{
    run_pair, ChannelStats, Endpoint, SchedulerMode, TranscriptEvent, TAG_LEAF_MSGS, TAG_LEAF_TMP,
    TAG_MUX_OPEN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Variant {
    Baseline,
    Tami,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Tami => "tami",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MillionaireConfig {
    pub width: u8,
    pub q: u8,
    pub variant: Variant,
    pub interleaved: bool,
}

impl MillionaireConfig {
    pub fn new(width: u8, q: u8, variant: Variant, interleaved: bool) -> Result<MillionaireConfig> {
        if width == 0 || width > 64 {
            return Err(Error::InvalidWidth(width));
        }
        if q == 0 || q > 8 || width % q != 0 {
            return Err(Error::ChunkWidth { q, width });
        }
        if interleaved && variant == Variant::Baseline {
            return Err(Error::Config(
                "interleaving applies to the tape-assisted variant only".into(),
            ));
        }
        Ok(MillionaireConfig {
            width,
            q,
            variant,
            interleaved,
        })
    }

    pub fn n(&self) -> usize {
        (self.width / self.q) as usize
    }
}

fn input_rng(seed: u64, label: &str) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(b"millforge.inputs");
    h.update([label.len() as u8]);
    h.update(label.as_bytes());
    h.update(seed.to_le_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

/// Plaintext sign-test oracle: 1 when the value interpreted in
/// two's complement is non-negative.
pub fn plain_drelu(z: u64, width: u8) -> bool {
    (z >> (width - 1)) & 1 == 0
}

/// Plaintext rectifier oracle.
pub fn plain_relu(z: u64, width: u8) -> u64 {
    if plain_drelu(z, width) {
        z
    } else {
        0
    }
}

// ---------------------------------------------------------------------
// Single-shot composed runs.
// ---------------------------------------------------------------------

fn tami_compare_sender(
    ep: &mut Endpoint,
    cfg: &MillionaireConfig,
    plan: &ReusePlan,
    off: &NonlinearOffline,
    y: RingValue,
) -> Result<bool> {
    let yc = split_chunks(y, cfg.q)?;
    let leaf = leaf::tami_sender(ep, &yc, &off.leaf)?;
    merge::polymult_tami_sender(ep, &leaf, plan, &off.subset, cfg.interleaved)
}

fn tami_compare_receiver(
    ep: &mut Endpoint,
    cfg: &MillionaireConfig,
    plan: &ReusePlan,
    off: &NonlinearOffline,
) -> Result<bool> {
    let leaf = leaf::tami_receiver(ep, &off.leaf)?;
    let releases: Vec<(bool, bool)> = off
        .leaf
        .receiver_chunks()?
        .iter()
        .map(|c| c.release.ok_or(Error::VariantMismatch("combined release")))
        .collect::<Result<_>>()?;
    merge::polymult_tami_receiver(
        ep,
        &leaf,
        plan,
        &off.subset,
        Some(&releases),
        cfg.interleaved,
    )
}

fn baseline_compare_sender(
    ep: &mut Endpoint,
    cfg: &MillionaireConfig,
    off: &LeafOffline,
    triples: &[crate::tape::TripleShare],
    y: RingValue,
) -> Result<bool> {
    let yc = split_chunks(y, cfg.q)?;
    let leaf = leaf::baseline_sender(ep, &yc, off)?;
    merge::merge_baseline(ep, Role::Sender, &leaf, triples)
}

fn baseline_compare_receiver(
    ep: &mut Endpoint,
    off: &LeafOffline,
    triples: &[crate::tape::TripleShare],
    x: RingValue,
    q: u8,
) -> Result<bool> {
    let xc = split_chunks(x, q)?;
    let leaf = leaf::baseline_receiver(ep, &xc, off)?;
    merge::merge_baseline(ep, Role::Receiver, &leaf, triples)
}

/// Sender side of one millionaires' comparison: share of `1{y < x}`.
pub fn millionaire_sender(
    ep: &mut Endpoint,
    tape: &mut TeeTape,
    cfg: &MillionaireConfig,
    y: RingValue,
) -> Result<bool> {
    if y.width() != cfg.width {
        return Err(Error::InvalidWidth(y.width()));
    }
    let n = cfg.n();
    match cfg.variant {
        Variant::Baseline => {
            let off = tape.leaf_offline_baseline(n, cfg.q)?;
            let triples = tape.beaver_triples(2 * (n - 1));
            baseline_compare_sender(ep, cfg, &off, &triples, y)
        }
        Variant::Tami => {
            let plan = comparison_plan(n)?;
            let off = tape.millionaire_offline(cfg.width, cfg.q, &plan)?;
            tami_compare_sender(ep, cfg, &plan, &off, y)
        }
    }
}

/// Receiver side of one millionaires' comparison. The baseline takes the
/// receiver's operand explicitly; the tape-assisted variant fixes it to
/// the tape mask and returns the operand actually used.
pub fn millionaire_receiver(
    ep: &mut Endpoint,
    tape: &mut TeeTape,
    cfg: &MillionaireConfig,
    x: Option<RingValue>,
) -> Result<(bool, RingValue)> {
    let n = cfg.n();
    match cfg.variant {
        Variant::Baseline => {
            let x = x.ok_or_else(|| {
                Error::Config("baseline variant needs the receiver operand".into())
            })?;
            if x.width() != cfg.width {
                return Err(Error::InvalidWidth(x.width()));
            }
            let off = tape.leaf_offline_baseline(n, cfg.q)?;
            let triples = tape.beaver_triples(2 * (n - 1));
            let bit = baseline_compare_receiver(ep, &off, &triples, x, cfg.q)?;
            Ok((bit, x))
        }
        Variant::Tami => {
            if x.is_some() {
                return Err(Error::Config(
                    "tape-assisted variant fixes the receiver operand to the tape mask".into(),
                ));
            }
            let plan = comparison_plan(n)?;
            let off = tape.millionaire_offline(cfg.width, cfg.q, &plan)?;
            let mask = off.leaf.receiver_mask()?;
            let bit = tami_compare_receiver(ep, cfg, &plan, &off)?;
            Ok((bit, mask))
        }
    }
}

fn drelu_sender_operand(cfg: &MillionaireConfig, share: ArithShare) -> Result<RingValue> {
    let low_mask = width_mask(cfg.width - 1);
    RingValue::new(low_mask - (share.value() & low_mask), cfg.width)
}

/// Sender side of the sign test on additively shared input.
pub fn drelu_sender(
    ep: &mut Endpoint,
    tape: &mut TeeTape,
    cfg: &MillionaireConfig,
    share: ArithShare,
) -> Result<bool> {
    if cfg.width < 2 || share.width() != cfg.width {
        return Err(Error::InvalidWidth(cfg.width.min(share.width())));
    }
    let n = cfg.n();
    let y = drelu_sender_operand(cfg, share)?;
    let wrap = match cfg.variant {
        Variant::Baseline => {
            let off = tape.leaf_offline_baseline(n, cfg.q)?;
            let triples = tape.beaver_triples(2 * (n - 1));
            baseline_compare_sender(ep, cfg, &off, &triples, y)?
        }
        Variant::Tami => {
            let plan = comparison_plan(n)?;
            let off = tape.drelu_offline(cfg.width, cfg.q, &plan, false)?;
            tami_compare_sender(ep, cfg, &plan, &off, y)?
        }
    };
    Ok(((share.value() >> (cfg.width - 1)) & 1 == 1) ^ wrap)
}

/// Receiver side of the sign test. Baseline takes the receiver's additive
/// share; the tape-assisted variant draws it from the tape and returns it.
pub fn drelu_receiver(
    ep: &mut Endpoint,
    tape: &mut TeeTape,
    cfg: &MillionaireConfig,
    share: Option<ArithShare>,
) -> Result<(bool, ArithShare)> {
    if cfg.width < 2 {
        return Err(Error::InvalidWidth(cfg.width));
    }
    let n = cfg.n();
    let (wrap, share) = match cfg.variant {
        Variant::Baseline => {
            let share = share.ok_or_else(|| {
                Error::Config("baseline variant needs the receiver share".into())
            })?;
            let off = tape.leaf_offline_baseline(n, cfg.q)?;
            let triples = tape.beaver_triples(2 * (n - 1));
            let x = RingValue::new(share.value() & width_mask(cfg.width - 1), cfg.width)?;
            (
                baseline_compare_receiver(ep, &off, &triples, x, cfg.q)?,
                share,
            )
        }
        Variant::Tami => {
            if share.is_some() {
                return Err(Error::Config(
                    "tape-assisted variant draws the receiver share from the tape".into(),
                ));
            }
            let plan = comparison_plan(n)?;
            let off = tape.drelu_offline(cfg.width, cfg.q, &plan, false)?;
            let share = off.arith_mask.ok_or(Error::VariantMismatch("arith mask"))?;
            (tami_compare_receiver(ep, cfg, &plan, &off)?, share)
        }
    };
    // The complement constant of the sign test lives on the receiver side.
    Ok((
        !((share.value() >> (cfg.width - 1)) & 1 == 1) ^ wrap,
        share,
    ))
}

/// Opens the multiplexer inputs for a batch of items and finishes the
/// bit-times-value products locally. Both parties call this with their own
/// bit and value shares; one concurrent exchange.
fn mux_open_batch(
    ep: &mut Endpoint,
    bits: &[bool],
    values: &[u64],
    muxes: &[MuxCorrelation],
    width: u8,
) -> Result<Vec<u64>> {
    let wmask = width_mask(width);
    let item_bits = 1 + width as usize;
    let mut frame = PackedBits::zeros(bits.len() * item_bits);
    for i in 0..bits.len() {
        let m = &muxes[i];
        frame.set(i * item_bits, bits[i] ^ m.xor_share);
        frame.set_value(
            i * item_bits + 1,
            width,
            values[i].wrapping_sub(m.a_share) & wmask,
        );
    }
    let theirs = ep.exchange(TAG_MUX_OPEN, &frame)?;
    if theirs.len() != frame.len() {
        return Err(Error::MalformedFrame);
    }
    let mut out = Vec::with_capacity(bits.len());
    for i in 0..bits.len() {
        let m = &muxes[i];
        let eps = frame.get(i * item_bits) ^ theirs.get(i * item_bits);
        let d = frame
            .get_value(i * item_bits + 1, width)
            .wrapping_add(theirs.get_value(i * item_bits + 1, width))
            & wmask;
        // value*bit = eps*value + (1-2*eps)*(d*mask + masked product).
        let masked = d.wrapping_mul(m.bit_arith_share).wrapping_add(m.c_share) & wmask;
        let share = if eps {
            values[i].wrapping_sub(masked) & wmask
        } else {
            masked
        };
        out.push(share);
    }
    Ok(out)
}

/// Sender side of one rectified-linear evaluation.
pub fn relu_sender(
    ep: &mut Endpoint,
    tape: &mut TeeTape,
    cfg: &MillionaireConfig,
    share: ArithShare,
) -> Result<ArithShare> {
    if cfg.width < 2 || share.width() != cfg.width {
        return Err(Error::InvalidWidth(cfg.width.min(share.width())));
    }
    let n = cfg.n();
    let y = drelu_sender_operand(cfg, share)?;
    let (wrap, mux) = match cfg.variant {
        Variant::Baseline => {
            let off = tape.leaf_offline_baseline(n, cfg.q)?;
            let triples = tape.beaver_triples(2 * (n - 1));
            let mux = tape.mux_correlations(1, cfg.width)?[0];
            (baseline_compare_sender(ep, cfg, &off, &triples, y)?, mux)
        }
        Variant::Tami => {
            let plan = comparison_plan(n)?;
            let off = tape.drelu_offline(cfg.width, cfg.q, &plan, true)?;
            let mux = off.mux.ok_or(Error::VariantMismatch("mux correlation"))?;
            (tami_compare_sender(ep, cfg, &plan, &off, y)?, mux)
        }
    };
    let bit = ((share.value() >> (cfg.width - 1)) & 1 == 1) ^ wrap;
    let out = mux_open_batch(ep, &[bit], &[share.value()], &[mux], cfg.width)?;
    ArithShare::new(out[0], cfg.width)
}

/// Receiver side of one rectified-linear evaluation; returns the output
/// share and the input share used.
pub fn relu_receiver(
    ep: &mut Endpoint,
    tape: &mut TeeTape,
    cfg: &MillionaireConfig,
    share: Option<ArithShare>,
) -> Result<(ArithShare, ArithShare)> {
    if cfg.width < 2 {
        return Err(Error::InvalidWidth(cfg.width));
    }
    let n = cfg.n();
    let (wrap, input, mux) = match cfg.variant {
        Variant::Baseline => {
            let input = share.ok_or_else(|| {
                Error::Config("baseline variant needs the receiver share".into())
            })?;
            let off = tape.leaf_offline_baseline(n, cfg.q)?;
            let triples = tape.beaver_triples(2 * (n - 1));
            let mux = tape.mux_correlations(1, cfg.width)?[0];
            let x = RingValue::new(input.value() & width_mask(cfg.width - 1), cfg.width)?;
            (
                baseline_compare_receiver(ep, &off, &triples, x, cfg.q)?,
                input,
                mux,
            )
        }
        Variant::Tami => {
            if share.is_some() {
                return Err(Error::Config(
                    "tape-assisted variant draws the receiver share from the tape".into(),
                ));
            }
            let plan = comparison_plan(n)?;
            let off = tape.drelu_offline(cfg.width, cfg.q, &plan, true)?;
            let input = off.arith_mask.ok_or(Error::VariantMismatch("arith mask"))?;
            let mux = off.mux.ok_or(Error::VariantMismatch("mux correlation"))?;
            (tami_compare_receiver(ep, cfg, &plan, &off)?, input, mux)
        }
    };
    let bit = !((input.value() >> (cfg.width - 1)) & 1 == 1) ^ wrap;
    let out = mux_open_batch(ep, &[bit], &[input.value()], &[mux], cfg.width)?;
    Ok((ArithShare::new(out[0], cfg.width)?, input))
}

// ---------------------------------------------------------------------
// Phase-batched runs and reporting.
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BatchOp {
    Millionaire,
    Drelu,
    Relu,
}

impl BatchOp {
    pub fn name(&self) -> &'static str {
        match self {
            BatchOp::Millionaire => "millionaire",
            BatchOp::Drelu => "drelu",
            BatchOp::Relu => "relu",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchSpec {
    pub op: BatchOp,
    pub cfg: MillionaireConfig,
    pub count: usize,
    pub seed: u64,
    pub session_id: u64,
    pub mode: SchedulerMode,
    pub timing: bool,
    pub record_transcript: bool,
}

impl BatchSpec {
    pub fn new(op: BatchOp, cfg: MillionaireConfig, count: usize, seed: u64) -> BatchSpec {
        BatchSpec {
            op,
            cfg,
            count,
            seed,
            session_id: 0,
            mode: SchedulerMode::Threaded,
            timing: false,
            record_transcript: false,
        }
    }
}

/// Outcome of a batched run: the report plus the raw stats/transcript.
pub struct BatchRun {
    pub report: ProtocolReport,
    pub stats: ChannelStats,
    pub transcript: Vec<TranscriptEvent>,
}

struct SenderBatchOut {
    bits: Vec<bool>,
    ring: Vec<u64>,
    elapsed_ms: f64,
}

struct ReceiverBatchOut {
    bits: Vec<bool>,
    ring: Vec<u64>,
    operands: Vec<u64>,
    elapsed_ms: f64,
}

fn split_offline(offs: Vec<NonlinearOffline>) -> (Vec<LeafOffline>, Vec<SubsetProductShares>, Vec<Option<ArithShare>>, Vec<Option<MuxCorrelation>>) {
    let mut leafs = Vec::with_capacity(offs.len());
    let mut subsets = Vec::with_capacity(offs.len());
    let mut masks = Vec::with_capacity(offs.len());
    let mut muxes = Vec::with_capacity(offs.len());
    for off in offs {
        leafs.push(off.leaf);
        subsets.push(off.subset);
        masks.push(off.arith_mask);
        muxes.push(off.mux);
    }
    (leafs, subsets, masks, muxes)
}

fn batch_sender_routine(
    ep: &mut Endpoint,
    spec: &BatchSpec,
    tape: &mut TeeTape,
    plan: Option<&Arc<ReusePlan>>,
    sender_inputs: &[u64],
) -> Result<SenderBatchOut> {
    let cfg = &spec.cfg;
    let n = cfg.n();
    let count = spec.count;
    let start = Instant::now();

    let (ys, msb_shares): (Vec<RingValue>, Vec<bool>) = match spec.op {
        BatchOp::Millionaire => (
            sender_inputs
                .iter()
                .map(|&v| RingValue::new(v, cfg.width))
                .collect::<Result<_>>()?,
            vec![false; count],
        ),
        BatchOp::Drelu | BatchOp::Relu => {
            let mut ys = Vec::with_capacity(count);
            let mut msbs = Vec::with_capacity(count);
            for &v in sender_inputs {
                let share = ArithShare::new(v, cfg.width)?;
                ys.push(drelu_sender_operand(cfg, share)?);
                msbs.push((v >> (cfg.width - 1)) & 1 == 1);
            }
            (ys, msbs)
        }
    };
    let ycs: Vec<ChunkVector> = ys
        .iter()
        .map(|&y| split_chunks(y, cfg.q))
        .collect::<Result<_>>()?;

    // Items are streamed into the combined flight one at a time so the
    // pad-heavy offline bundles never coexist for a large batch.
    let item_bits = n * (1usize << cfg.q) * 2;
    let (wraps, muxes) = match cfg.variant {
        Variant::Baseline => {
            let tmp_frame = ep.recv(TAG_LEAF_TMP)?;
            if tmp_frame.len() != count * n * cfg.q as usize {
                return Err(Error::MalformedFrame);
            }
            let mut msgs = PackedBits::zeros(count * item_bits);
            let mut leafs = Vec::with_capacity(count);
            for i in 0..count {
                let off = tape.leaf_offline_baseline(n, cfg.q)?;
                let tmps: Vec<u8> = (0..n)
                    .map(|j| tmp_frame.get_value((i * n + j) * cfg.q as usize, cfg.q) as u8)
                    .collect();
                leafs.push(leaf::render_sender_item(
                    &mut msgs,
                    i * item_bits,
                    &ycs[i],
                    &off,
                    Some(&tmps),
                )?);
            }
            let triples = tape.beaver_triples(2 * (n - 1) * count);
            let muxes = if spec.op == BatchOp::Relu {
                tape.mux_correlations(count, cfg.width)?
            } else {
                Vec::new()
            };
            ep.send(TAG_LEAF_MSGS, &msgs)?;
            (
                merge::merge_baseline_batch(ep, Role::Sender, &leafs, &triples)?,
                muxes,
            )
        }
        Variant::Tami => {
            let plan = plan.expect("plan required for tape-assisted batches");
            let mut msgs = PackedBits::zeros(count * item_bits);
            let mut leafs = Vec::with_capacity(count);
            let mut subsets = Vec::with_capacity(count);
            let mut muxes = Vec::new();
            for i in 0..count {
                let off = match spec.op {
                    BatchOp::Millionaire => tape.millionaire_offline(cfg.width, cfg.q, plan)?,
                    BatchOp::Drelu => tape.drelu_offline(cfg.width, cfg.q, plan, false)?,
                    BatchOp::Relu => tape.drelu_offline(cfg.width, cfg.q, plan, true)?,
                };
                leafs.push(leaf::render_sender_item(
                    &mut msgs,
                    i * item_bits,
                    &ycs[i],
                    &off.leaf,
                    None,
                )?);
                subsets.push(off.subset);
                if spec.op == BatchOp::Relu {
                    muxes.push(off.mux.ok_or(Error::VariantMismatch("mux correlation"))?);
                }
            }
            ep.send(TAG_LEAF_MSGS, &msgs)?;
            let wraps = merge::polymult_tami_sender_batch(
                ep,
                &leafs,
                plan,
                &subsets,
                cfg.interleaved,
            )?;
            (wraps, muxes)
        }
    };

    let bits: Vec<bool> = wraps
        .iter()
        .zip(&msb_shares)
        .map(|(&w, &m)| w ^ m)
        .collect();

    let ring = if spec.op == BatchOp::Relu {
        mux_open_batch(ep, &bits, sender_inputs, &muxes, cfg.width)?
    } else {
        Vec::new()
    };

    Ok(SenderBatchOut {
        bits,
        ring,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

fn batch_receiver_routine(
    ep: &mut Endpoint,
    spec: &BatchSpec,
    tape: &mut TeeTape,
    plan: Option<&Arc<ReusePlan>>,
    receiver_inputs: &[u64],
) -> Result<ReceiverBatchOut> {
    let cfg = &spec.cfg;
    let n = cfg.n();
    let count = spec.count;
    let start = Instant::now();

    match cfg.variant {
        Variant::Baseline => {
            let offs: Vec<LeafOffline> = (0..count)
                .map(|_| tape.leaf_offline_baseline(n, cfg.q))
                .collect::<Result<_>>()?;
            let triples = tape.beaver_triples(2 * (n - 1) * count);
            let muxes = if spec.op == BatchOp::Relu {
                tape.mux_correlations(count, cfg.width)?
            } else {
                Vec::new()
            };
            let xcs: Vec<ChunkVector> = receiver_inputs
                .iter()
                .map(|&v| {
                    let x = match spec.op {
                        BatchOp::Millionaire => v,
                        BatchOp::Drelu | BatchOp::Relu => v & width_mask(cfg.width - 1),
                    };
                    split_chunks(RingValue::new(x, cfg.width)?, cfg.q)
                })
                .collect::<Result<_>>()?;
            let leafs = leaf::baseline_receiver_batch(ep, &xcs, &offs)?;
            let wraps = merge::merge_baseline_batch(ep, Role::Receiver, &leafs, &triples)?;
            let bits: Vec<bool> = match spec.op {
                BatchOp::Millionaire => wraps,
                BatchOp::Drelu | BatchOp::Relu => wraps
                    .iter()
                    .zip(receiver_inputs)
                    .map(|(&w, &r)| !((r >> (cfg.width - 1)) & 1 == 1) ^ w)
                    .collect(),
            };
            let ring = if spec.op == BatchOp::Relu {
                mux_open_batch(ep, &bits, receiver_inputs, &muxes, cfg.width)?
            } else {
                Vec::new()
            };
            Ok(ReceiverBatchOut {
                bits,
                ring,
                operands: receiver_inputs.to_vec(),
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            })
        }
        Variant::Tami => {
            let plan = plan.expect("plan required for tape-assisted batches");
            let offs: Vec<NonlinearOffline> = (0..count)
                .map(|_| match spec.op {
                    BatchOp::Millionaire => tape.millionaire_offline(cfg.width, cfg.q, plan),
                    BatchOp::Drelu => tape.drelu_offline(cfg.width, cfg.q, plan, false),
                    BatchOp::Relu => tape.drelu_offline(cfg.width, cfg.q, plan, true),
                })
                .collect::<Result<_>>()?;
            let operands: Vec<u64> = match spec.op {
                BatchOp::Millionaire => offs
                    .iter()
                    .map(|o| o.leaf.receiver_mask().map(|m| m.value()))
                    .collect::<Result<_>>()?,
                BatchOp::Drelu | BatchOp::Relu => offs
                    .iter()
                    .map(|o| {
                        o.arith_mask
                            .map(|m| m.value())
                            .ok_or(Error::VariantMismatch("arith mask"))
                    })
                    .collect::<Result<_>>()?,
            };
            let releases: Vec<Vec<(bool, bool)>> = offs
                .iter()
                .map(|o| {
                    o.leaf
                        .receiver_chunks()?
                        .iter()
                        .map(|c| c.release.ok_or(Error::VariantMismatch("combined release")))
                        .collect()
                })
                .collect::<Result<_>>()?;
            let (leaf_offs, subsets, _, mux_opts) = split_offline(offs);
            let leafs = leaf::tami_receiver_batch(ep, &leaf_offs)?;
            let wraps = merge::polymult_tami_receiver_batch(
                ep,
                &leafs,
                plan,
                &subsets,
                Some(&releases),
                cfg.interleaved,
            )?;
            let bits: Vec<bool> = match spec.op {
                BatchOp::Millionaire => wraps,
                BatchOp::Drelu | BatchOp::Relu => wraps
                    .iter()
                    .zip(&operands)
                    .map(|(&w, &r)| !((r >> (cfg.width - 1)) & 1 == 1) ^ w)
                    .collect(),
            };
            let ring = if spec.op == BatchOp::Relu {
                let muxes: Vec<MuxCorrelation> = mux_opts
                    .into_iter()
                    .map(|m| m.ok_or(Error::VariantMismatch("mux correlation")))
                    .collect::<Result<_>>()?;
                mux_open_batch(ep, &bits, &operands, &muxes, cfg.width)?
            } else {
                Vec::new()
            };
            Ok(ReceiverBatchOut {
                bits,
                ring,
                operands,
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            })
        }
    }
}

/// Runs a phase-batched workload and assembles the protocol report.
pub fn run_batch(spec: &BatchSpec) -> Result<BatchRun> {
    let cfg = spec.cfg;
    if spec.count == 0 {
        return Err(Error::Config("batch needs at least one item".into()));
    }
    if (cfg.width < 2 || cfg.n() < 1) && matches!(spec.op, BatchOp::Drelu | BatchOp::Relu) {
        return Err(Error::InvalidWidth(cfg.width));
    }
    let n = cfg.n() as u64;
    let plan = match cfg.variant {
        Variant::Tami => Some(comparison_plan(cfg.n())?),
        Variant::Baseline => None,
    };

    // Deterministic inputs: the sender's values are data, the receiver's
    // are data only on the baseline path.
    let mut rng = input_rng(spec.seed, spec.op.name());
    let wmask = width_mask(cfg.width);
    let sender_inputs: Vec<u64> = (0..spec.count).map(|_| rng.next_u64() & wmask).collect();
    let receiver_inputs: Vec<u64> = (0..spec.count).map(|_| rng.next_u64() & wmask).collect();

    let seed = TapeSeed::from_u64(spec.seed, spec.session_id);
    let mut tape_s = TeeTape::new(&seed, Role::Sender);
    let mut tape_r = TeeTape::new(&seed, Role::Receiver);

    let plan_s = plan.clone();
    let plan_r = plan.clone();
    let spec_s = *spec;
    let spec_r = *spec;
    let sender_in = sender_inputs.clone();
    let receiver_in = receiver_inputs.clone();
    let (s_out, r_out, stats, transcript) = run_pair(
        spec.mode,
        spec.record_transcript,
        move |ep| batch_sender_routine(ep, &spec_s, &mut tape_s, plan_s.as_ref(), &sender_in),
        move |ep| batch_receiver_routine(ep, &spec_r, &mut tape_r, plan_r.as_ref(), &receiver_in),
    )?;

    // Reconstruct against the plaintext oracles.
    let mut correct = 0u64;
    for i in 0..spec.count {
        let ok = match spec.op {
            BatchOp::Millionaire => {
                let expected = sender_inputs[i] < r_out.operands[i];
                (s_out.bits[i] ^ r_out.bits[i]) == expected
            }
            BatchOp::Drelu => {
                let z = sender_inputs[i].wrapping_add(r_out.operands[i]) & wmask;
                (s_out.bits[i] ^ r_out.bits[i]) == plain_drelu(z, cfg.width)
            }
            BatchOp::Relu => {
                let z = sender_inputs[i].wrapping_add(r_out.operands[i]) & wmask;
                let got = s_out.ring[i].wrapping_add(r_out.ring[i]) & wmask;
                got == plain_relu(z, cfg.width)
            }
        };
        if ok {
            correct += 1;
        }
    }

    let (offline_bits, pipelined, notes) = match cfg.variant {
        Variant::Baseline => (
            spec.count as u64
                * (report::reference::baseline_leaf_offline_bits(n, cfg.q)
                    + report::reference::baseline_merge_offline_bits(n)),
            None,
            baseline_notes(n, cfg.q),
        ),
        Variant::Tami => {
            let pipelined = Some(stats.rounds.saturating_sub(1).max(1));
            (0, pipelined, tami_notes(n, cfg.q, cfg.interleaved, pipelined))
        }
    };

    let report = ProtocolReport {
        variant: cfg.variant.name().to_string(),
        op: spec.op.name().to_string(),
        config: ReportConfig {
            bits: cfg.width,
            chunk: cfg.q,
            interleaved: cfg.interleaved,
        },
        count: spec.count as u64,
        correct,
        rounds: stats.rounds,
        pipelined_rounds: pipelined,
        bits_s2r: stats.bits_s2r,
        bits_r2s: stats.bits_r2s,
        bytes_s2r: stats.bytes_s2r,
        bytes_r2s: stats.bytes_r2s,
        offline_bits,
        cpu_ms: if spec.timing {
            Some(CpuTimes {
                sender_ms: s_out.elapsed_ms,
                receiver_ms: r_out.elapsed_ms,
            })
        } else {
            None
        },
        simulated_ms: SimulatedTimes::from_stats(&stats),
        estimate: None,
        discrepancy_notes: notes,
        seed: spec.seed,
    };

    Ok(BatchRun {
        report,
        stats,
        transcript,
    })
}

// ---------------------------------------------------------------------
// Verification sweeps.
// ---------------------------------------------------------------------

/// One failing case with enough context to replay it.
#[derive(Debug, Clone, Serialize)]
pub struct Counterexample {
    pub op: String,
    pub seed: u64,
    pub session_id: u64,
    pub index: u64,
    pub sender_value: u64,
    pub receiver_value: u64,
    pub got: u64,
    pub expected: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutcome {
    pub runs: u64,
    pub mismatches: u64,
    pub counterexamples: Vec<Counterexample>,
}

impl SweepOutcome {
    pub fn passed(&self) -> bool {
        self.mismatches == 0
    }
}

/// Deliberate corruptions for negative-control verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultInjection {
    None,
    /// Flip the receiver's retained pad for the most significant chunk of
    /// the first item; the decrypted lt bit, and hence the comparison,
    /// flips unconditionally.
    CorruptTape,
}

fn corrupt_receiver_leaf(off: &mut LeafOffline) {
    let last = off.bundles.len() - 1;
    if let crate::tape::LeafBundleView::Receiver(chunk) = &mut off.bundles[last].view {
        chunk.kept_pad.lt = !chunk.kept_pad.lt;
    }
}

/// Exhaustive or sampled correctness sweep of the millionaires'
/// comparison. Baseline sweeps enumerate all operand pairs up to 16 total
/// input bits (sampling beyond); tape-assisted sweeps enumerate the sender
/// operand across `tami_seeds` tape sessions.
pub fn sweep_millionaire(
    cfg: &MillionaireConfig,
    seed: u64,
    tami_seeds: u64,
    fault: FaultInjection,
) -> Result<SweepOutcome> {
    let width = cfg.width;
    let wmask = width_mask(width);
    match cfg.variant {
        Variant::Baseline => {
            let exhaustive = 2 * width as u32 <= 16;
            let pairs: Vec<(u64, u64)> = if exhaustive {
                (0..=wmask)
                    .flat_map(|x| (0..=wmask).map(move |y| (y, x)))
                    .collect()
            } else {
                let mut rng = input_rng(seed, "mill-sweep");
                (0..10_000)
                    .map(|_| (rng.next_u64() & wmask, rng.next_u64() & wmask))
                    .collect()
            };
            let cfg_s = *cfg;
            let cfg_r = *cfg;
            let pairs_s = pairs.clone();
            let pairs_r = pairs.clone();
            let (s_bits, r_bits, _, _) = run_pair(
                SchedulerMode::Threaded,
                false,
                move |ep| {
                    let mut tape = TeeTape::new(&TapeSeed::from_u64(seed, 0), Role::Sender);
                    let mut out = Vec::with_capacity(pairs_s.len());
                    for &(y, _) in &pairs_s {
                        out.push(millionaire_sender(
                            ep,
                            &mut tape,
                            &cfg_s,
                            RingValue::new(y, width)?,
                        )?);
                    }
                    Ok(out)
                },
                move |ep| {
                    let mut tape = TeeTape::new(&TapeSeed::from_u64(seed, 0), Role::Receiver);
                    let mut out = Vec::with_capacity(pairs_r.len());
                    for (i, &(_, x)) in pairs_r.iter().enumerate() {
                        if fault == FaultInjection::CorruptTape && i == 0 {
                            // Inline the receiver run with a corrupted pad.
                            let n = cfg_r.n();
                            let mut off = tape.leaf_offline_baseline(n, cfg_r.q)?;
                            corrupt_receiver_leaf(&mut off);
                            let triples = tape.beaver_triples(2 * (n - 1));
                            out.push(baseline_compare_receiver(
                                ep,
                                &off,
                                &triples,
                                RingValue::new(x, width)?,
                                cfg_r.q,
                            )?);
                            continue;
                        }
                        out.push(
                            millionaire_receiver(
                                ep,
                                &mut tape,
                                &cfg_r,
                                Some(RingValue::new(x, width)?),
                            )?
                            .0,
                        );
                    }
                    Ok(out)
                },
            )?;
            let mut outcome = SweepOutcome {
                runs: pairs.len() as u64,
                mismatches: 0,
                counterexamples: Vec::new(),
            };
            for (i, &(y, x)) in pairs.iter().enumerate() {
                let got = s_bits[i] ^ r_bits[i];
                if got != (y < x) {
                    outcome.mismatches += 1;
                    if outcome.counterexamples.len() < 5 {
                        outcome.counterexamples.push(Counterexample {
                            op: "millionaire".into(),
                            seed,
                            session_id: 0,
                            index: i as u64,
                            sender_value: y,
                            receiver_value: x,
                            got: got as u64,
                            expected: (y < x) as u64,
                        });
                    }
                }
            }
            Ok(outcome)
        }
        Variant::Tami => {
            let ys: Vec<u64> = if width <= 16 {
                (0..=wmask).collect()
            } else {
                let mut rng = input_rng(seed, "mill-sweep-tami");
                (0..64).map(|_| rng.next_u64() & wmask).collect()
            };
            let plan = comparison_plan(cfg.n())?;
            let mut outcome = SweepOutcome {
                runs: 0,
                mismatches: 0,
                counterexamples: Vec::new(),
            };
            for session in 0..tami_seeds {
                let cfg_s = *cfg;
                let cfg_r = *cfg;
                let ys_s = ys.clone();
                let ys_r = ys.clone();
                let plan_r = Arc::clone(&plan);
                let (s_bits, r_pairs, _, _) = run_pair(
                    SchedulerMode::Threaded,
                    false,
                    move |ep| {
                        let mut tape =
                            TeeTape::new(&TapeSeed::from_u64(seed, session), Role::Sender);
                        let mut out = Vec::with_capacity(ys_s.len());
                        for &y in &ys_s {
                            out.push(millionaire_sender(
                                ep,
                                &mut tape,
                                &cfg_s,
                                RingValue::new(y, width)?,
                            )?);
                        }
                        Ok(out)
                    },
                    move |ep| {
                        let mut tape =
                            TeeTape::new(&TapeSeed::from_u64(seed, session), Role::Receiver);
                        let mut out = Vec::with_capacity(ys_r.len());
                        for (i, _) in ys_r.iter().enumerate() {
                            if fault == FaultInjection::CorruptTape && i == 0 && session == 0 {
                                let mut off =
                                    tape.millionaire_offline(cfg_r.width, cfg_r.q, &plan_r)?;
                                corrupt_receiver_leaf(&mut off.leaf);
                                let mask = off.leaf.receiver_mask()?;
                                let bit = tami_compare_receiver(ep, &cfg_r, &plan_r, &off)?;
                                out.push((bit, mask.value()));
                                continue;
                            }
                            let (bit, mask) =
                                millionaire_receiver(ep, &mut tape, &cfg_r, None)?;
                            out.push((bit, mask.value()));
                        }
                        Ok(out)
                    },
                )?;
                for (i, &y) in ys.iter().enumerate() {
                    let (r_bit, x) = r_pairs[i];
                    let got = s_bits[i] ^ r_bit;
                    outcome.runs += 1;
                    if got != (y < x) {
                        outcome.mismatches += 1;
                        if outcome.counterexamples.len() < 5 {
                            outcome.counterexamples.push(Counterexample {
                                op: "millionaire".into(),
                                seed,
                                session_id: session,
                                index: i as u64,
                                sender_value: y,
                                receiver_value: x,
                                got: got as u64,
                                expected: (y < x) as u64,
                            });
                        }
                    }
                }
            }
            Ok(outcome)
        }
    }
}

/// Correctness sweep of the sign test or the rectifier over additive
/// shares. Baseline sweeps enumerate all share pairs up to 20 total input
/// bits; tape-assisted sweeps enumerate the sender share per tape session.
pub fn sweep_nonlinear(
    op: BatchOp,
    cfg: &MillionaireConfig,
    seed: u64,
    tami_seeds: u64,
    samples: u64,
) -> Result<SweepOutcome> {
    if op == BatchOp::Millionaire {
        return sweep_millionaire(cfg, seed, tami_seeds, FaultInjection::None);
    }
    let width = cfg.width;
    let wmask = width_mask(width);
    let is_relu = op == BatchOp::Relu;

    match cfg.variant {
        Variant::Baseline => {
            let exhaustive = 2 * width as u32 <= 20;
            let pairs: Vec<(u64, u64)> = if exhaustive {
                (0..=wmask)
                    .flat_map(|a| (0..=wmask).map(move |b| (a, b)))
                    .collect()
            } else {
                let mut rng = input_rng(seed, "nl-sweep");
                (0..samples)
                    .map(|_| (rng.next_u64() & wmask, rng.next_u64() & wmask))
                    .collect()
            };
            let cfg_s = *cfg;
            let cfg_r = *cfg;
            let pairs_s = pairs.clone();
            let pairs_r = pairs.clone();
            let (s_out, r_out, _, _) = run_pair(
                SchedulerMode::Threaded,
                false,
                move |ep| {
                    let mut tape = TeeTape::new(&TapeSeed::from_u64(seed, 1), Role::Sender);
                    let mut out = Vec::with_capacity(pairs_s.len());
                    for &(a, _) in &pairs_s {
                        let share = ArithShare::new(a, width)?;
                        if is_relu {
                            out.push(relu_sender(ep, &mut tape, &cfg_s, share)?.value());
                        } else {
                            out.push(drelu_sender(ep, &mut tape, &cfg_s, share)? as u64);
                        }
                    }
                    Ok(out)
                },
                move |ep| {
                    let mut tape = TeeTape::new(&TapeSeed::from_u64(seed, 1), Role::Receiver);
                    let mut out = Vec::with_capacity(pairs_r.len());
                    for &(_, b) in &pairs_r {
                        let share = ArithShare::new(b, width)?;
                        if is_relu {
                            out.push(relu_receiver(ep, &mut tape, &cfg_r, Some(share))?.0.value());
                        } else {
                            out.push(drelu_receiver(ep, &mut tape, &cfg_r, Some(share))?.0 as u64);
                        }
                    }
                    Ok(out)
                },
            )?;
            let mut outcome = SweepOutcome {
                runs: pairs.len() as u64,
                mismatches: 0,
                counterexamples: Vec::new(),
            };
            for (i, &(a, b)) in pairs.iter().enumerate() {
                let z = a.wrapping_add(b) & wmask;
                let (got, expected) = if is_relu {
                    (
                        s_out[i].wrapping_add(r_out[i]) & wmask,
                        plain_relu(z, width),
                    )
                } else {
                    (
                        (s_out[i] != 0) as u64 ^ (r_out[i] != 0) as u64,
                        plain_drelu(z, width) as u64,
                    )
                };
                if got != expected {
                    outcome.mismatches += 1;
                    if outcome.counterexamples.len() < 5 {
                        outcome.counterexamples.push(Counterexample {
                            op: op.name().into(),
                            seed,
                            session_id: 1,
                            index: i as u64,
                            sender_value: a,
                            receiver_value: b,
                            got,
                            expected,
                        });
                    }
                }
            }
            Ok(outcome)
        }
        Variant::Tami => {
            let senders: Vec<u64> = if width <= 10 {
                (0..=wmask).collect()
            } else {
                let mut rng = input_rng(seed, "nl-sweep-tami");
                (0..samples.max(1)).map(|_| rng.next_u64() & wmask).collect()
            };
            let mut outcome = SweepOutcome {
                runs: 0,
                mismatches: 0,
                counterexamples: Vec::new(),
            };
            for session in 0..tami_seeds {
                let cfg_s = *cfg;
                let cfg_r = *cfg;
                let senders_s = senders.clone();
                let senders_r = senders.clone();
                let (s_out, r_out, _, _) = run_pair(
                    SchedulerMode::Threaded,
                    false,
                    move |ep| {
                        let mut tape =
                            TeeTape::new(&TapeSeed::from_u64(seed, session), Role::Sender);
                        let mut out = Vec::with_capacity(senders_s.len());
                        for &a in &senders_s {
                            let share = ArithShare::new(a, width)?;
                            if is_relu {
                                out.push(relu_sender(ep, &mut tape, &cfg_s, share)?.value());
                            } else {
                                out.push(drelu_sender(ep, &mut tape, &cfg_s, share)? as u64);
                            }
                        }
                        Ok(out)
                    },
                    move |ep| {
                        let mut tape =
                            TeeTape::new(&TapeSeed::from_u64(seed, session), Role::Receiver);
                        let mut out = Vec::with_capacity(senders_r.len());
                        for _ in &senders_r {
                            if is_relu {
                                let (share, input) = relu_receiver(ep, &mut tape, &cfg_r, None)?;
                                out.push((share.value(), input.value()));
                            } else {
                                let (bit, input) = drelu_receiver(ep, &mut tape, &cfg_r, None)?;
                                out.push((bit as u64, input.value()));
                            }
                        }
                        Ok(out)
                    },
                )?;
                for (i, &a) in senders.iter().enumerate() {
                    let (r_val, b) = r_out[i];
                    let z = a.wrapping_add(b) & wmask;
                    let (got, expected) = if is_relu {
                        (s_out[i].wrapping_add(r_val) & wmask, plain_relu(z, width))
                    } else {
                        (
                            (s_out[i] != 0) as u64 ^ (r_val != 0) as u64,
                            plain_drelu(z, width) as u64,
                        )
                    };
                    outcome.runs += 1;
                    if got != expected {
                        outcome.mismatches += 1;
                        if outcome.counterexamples.len() < 5 {
                            outcome.counterexamples.push(Counterexample {
                                op: op.name().into(),
                                seed,
                                session_id: session,
                                index: i as u64,
                                sender_value: a,
                                receiver_value: b,
                                got,
                                expected,
                            });
                        }
                    }
                }
            }
            Ok(outcome)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::SchedulerMode;

    fn run_millionaire(
        cfg: MillionaireConfig,
        seed: u64,
        y: u64,
        x: Option<u64>,
    ) -> (bool, u64, ChannelStats) {
        let ts = TapeSeed::from_u64(seed, 0);
        let mut tape_s = TeeTape::new(&ts, Role::Sender);
        let mut tape_r = TeeTape::new(&ts, Role::Receiver);
        let width = cfg.width;
        let (s, r, stats, _) = run_pair(
            SchedulerMode::Threaded,
            false,
            move |ep| millionaire_sender(ep, &mut tape_s, &cfg, RingValue::new(y, width).unwrap()),
            move |ep| {
                millionaire_receiver(
                    ep,
                    &mut tape_r,
                    &cfg,
                    x.map(|v| RingValue::new(v, width).unwrap()),
                )
            },
        )
        .unwrap();
        let (r_bit, operand) = r;
        (s ^ r_bit, operand.value(), stats)
    }

    #[test]
    fn baseline_round_law_32_bits() {
        let cfg = MillionaireConfig::new(32, 4, Variant::Baseline, false).unwrap();
        let (bit, x, stats) = run_millionaire(cfg, 5, 123456, Some(99999999));
        assert_eq!(bit, 123456 < x);
        assert_eq!(stats.rounds, 2 + 3);
    }

    #[test]
    fn tami_round_law() {
        let cfg = MillionaireConfig::new(32, 4, Variant::Tami, true).unwrap();
        let (bit, x, stats) = run_millionaire(cfg, 6, 4242, None);
        assert_eq!(bit, 4242 < x);
        assert_eq!(stats.rounds, 2);
    }

    #[test]
    fn equal_inputs_compare_false() {
        let cfg = MillionaireConfig::new(8, 4, Variant::Baseline, false).unwrap();
        let (bit, _, _) = run_millionaire(cfg, 7, 0x5C, Some(0x5C));
        assert!(!bit);
    }

    #[test]
    fn millionaire_sweeps_pass() {
        for q in [2u8, 4] {
            let cfg = MillionaireConfig::new(8, q, Variant::Baseline, false).unwrap();
            let outcome = sweep_millionaire(&cfg, 11, 0, FaultInjection::None).unwrap();
            assert_eq!(outcome.runs, 65536);
            assert!(outcome.passed(), "{:?}", outcome.counterexamples.first());

            let cfg = MillionaireConfig::new(8, q, Variant::Tami, true).unwrap();
            let outcome = sweep_millionaire(&cfg, 11, 16, FaultInjection::None).unwrap();
            assert_eq!(outcome.runs, 16 * 256);
            assert!(outcome.passed(), "{:?}", outcome.counterexamples.first());
        }
    }

    #[test]
    fn fault_injection_is_caught() {
        let cfg = MillionaireConfig::new(8, 4, Variant::Tami, false).unwrap();
        let outcome = sweep_millionaire(&cfg, 13, 2, FaultInjection::CorruptTape).unwrap();
        assert_eq!(outcome.mismatches, 1);
        assert_eq!(outcome.counterexamples[0].index, 0);

        let cfg = MillionaireConfig::new(8, 4, Variant::Baseline, false).unwrap();
        let outcome = sweep_millionaire(&cfg, 13, 0, FaultInjection::CorruptTape).unwrap();
        assert_eq!(outcome.mismatches, 1);
    }

    #[test]
    fn drelu_boundary_values() {
        // a+b = 0 is non-negative; a+b = 2^(w-1) is negative.
        for (a, b, expected) in [
            (0u64, 0u64, true),
            (3, (1u64 << 8) - 3, true),
            (1u64 << 6, 1u64 << 6, false),
            (200, 200, false),
        ] {
            let cfg = MillionaireConfig::new(8, 4, Variant::Baseline, false).unwrap();
            let ts = TapeSeed::from_u64(17, 0);
            let mut tape_s = TeeTape::new(&ts, Role::Sender);
            let mut tape_r = TeeTape::new(&ts, Role::Receiver);
            let (s, r, _, _) = run_pair(
                SchedulerMode::Threaded,
                false,
                move |ep| drelu_sender(ep, &mut tape_s, &cfg, ArithShare::new(a, 8).unwrap()),
                move |ep| {
                    drelu_receiver(ep, &mut tape_r, &cfg, Some(ArithShare::new(b, 8).unwrap()))
                },
            )
            .unwrap();
            assert_eq!(s ^ r.0, expected, "a={a} b={b}");
        }
    }

    #[test]
    fn relu_examples() {
        let cfg = MillionaireConfig::new(8, 4, Variant::Tami, true).unwrap();
        // Tape-assisted: receiver share comes off the tape; steer the sum
        // via the sender share after reading the mask back.
        for (seed, desired) in [(31u64, 7i64), (32, -5), (33, 0), (34, -128)] {
            let ts = TapeSeed::from_u64(seed, 0);
            let mut probe = TeeTape::new(&ts, Role::Receiver);
            let plan = comparison_plan(2).unwrap();
            let r_share = probe
                .drelu_offline(8, 4, &plan, true)
                .unwrap()
                .arith_mask
                .unwrap()
                .value();
            let z = (desired as u64) & 0xFF;
            let a = z.wrapping_sub(r_share) & 0xFF;

            let mut tape_s = TeeTape::new(&ts, Role::Sender);
            let mut tape_r = TeeTape::new(&ts, Role::Receiver);
            let (s, r, stats, _) = run_pair(
                SchedulerMode::Threaded,
                false,
                move |ep| relu_sender(ep, &mut tape_s, &cfg, ArithShare::new(a, 8).unwrap()),
                move |ep| relu_receiver(ep, &mut tape_r, &cfg, None),
            )
            .unwrap();
            let got = s.value().wrapping_add(r.0.value()) & 0xFF;
            let expected = if desired >= 0 { desired as u64 } else { 0 };
            assert_eq!(got, expected, "desired={desired}");
            assert_eq!(stats.rounds, 3);
        }
    }

    #[test]
    fn batch_rounds_independent_of_count() {
        let cfg = MillionaireConfig::new(8, 2, Variant::Tami, true).unwrap();
        for count in [1usize, 3, 16] {
            let spec = BatchSpec::new(BatchOp::Relu, cfg, count, 19);
            let run = run_batch(&spec).unwrap();
            assert_eq!(run.report.rounds, 3, "count={count}");
            assert_eq!(run.report.correct, count as u64);
        }
        let cfg = MillionaireConfig::new(8, 2, Variant::Baseline, false).unwrap();
        for count in [1usize, 5] {
            let spec = BatchSpec::new(BatchOp::Relu, cfg, count, 19);
            let run = run_batch(&spec).unwrap();
            assert_eq!(run.report.rounds, 2 + 2 + 1, "count={count}");
            assert_eq!(run.report.correct, count as u64);
        }
    }

    #[test]
    fn batch_of_one_matches_single_call() {
        let cfg = MillionaireConfig::new(8, 4, Variant::Tami, true).unwrap();
        let spec = BatchSpec::new(BatchOp::Millionaire, cfg, 1, 23);
        let run = run_batch(&spec).unwrap();
        assert_eq!(run.report.correct, 1);

        // Replicate the same tape draws and input derivation by hand.
        let mut rng = input_rng(23, "millionaire");
        let y = rng.next_u64() & 0xFF;
        let (bit, x, _) = run_millionaire(cfg, 23, y, None);
        assert_eq!(bit, y < x);
    }

    #[test]
    fn batch_is_deterministic() {
        let cfg = MillionaireConfig::new(8, 4, Variant::Tami, true).unwrap();
        let mut spec = BatchSpec::new(BatchOp::Relu, cfg, 8, 29);
        spec.record_transcript = true;
        let a = run_batch(&spec).unwrap();
        let b = run_batch(&spec).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.transcript, b.transcript);
        spec.mode = SchedulerMode::Lockstep;
        let c = run_batch(&spec).unwrap();
        assert_eq!(a.report, c.report);
        assert_eq!(a.transcript, c.transcript);
    }
}
