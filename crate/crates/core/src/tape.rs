//! Emulated trusted-execution tape: a deterministic, seed-synchronized
//! source of correlated randomness with per-value visibility tags.
//!
//! Two tapes built from the same [`TapeSeed`] derive byte-identical
//! internal streams; each host only ever receives the values its role is
//! licensed to see. Values tagged [`Visibility::TeeInternal`] (the
//! selection values `c_j`, the merge mask bits `r_v`, raw pad products)
//! are consumed during derivation and never emitted into any host view.
//!
//! Every stream is domain-separated by a short label and a per-use
//! instance counter; value derivation is a fixed draw order from a
//! ChaCha20 stream keyed by `SHA-256(master_seed, session_id, label,
//! instance)`. That ordering is part of the wire-stability contract: two
//! parties that perform the same sequence of offline calls hold matching
//! correlated values without exchanging a single byte.

use std::collections::HashMap;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

use crate::bits::{width_mask, ArithShare, PackedBits, RingValue, Role};
use crate::error::{Error, Result};
use crate::reuse::{mask_to_indices, ReusePlan};

/// Seed material shared by the two parties' emulated enclaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapeSeed {
    pub master_seed: [u8; 32],
    pub session_id: u64,
}

impl TapeSeed {
    pub fn new(master_seed: [u8; 32], session_id: u64) -> TapeSeed {
        TapeSeed {
            master_seed,
            session_id,
        }
    }

    /// Expands a short seed into full master-seed material.
    pub fn from_u64(seed: u64, session_id: u64) -> TapeSeed {
        let mut h = Sha256::new();
        h.update(b"millforge.tape.seed");
        h.update(seed.to_le_bytes());
        TapeSeed {
            master_seed: h.finalize().into(),
            session_id,
        }
    }
}

/// Who may see a tape-derived value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    SenderHost,
    ReceiverHost,
    BothHosts,
    TeeInternal,
}

impl Visibility {
    pub fn licenses(self, role: Role) -> bool {
        match self {
            Visibility::SenderHost => role == Role::Sender,
            Visibility::ReceiverHost => role == Role::Receiver,
            Visibility::BothHosts => true,
            Visibility::TeeInternal => false,
        }
    }

    fn code(self) -> u8 {
        match self {
            Visibility::SenderHost => 0,
            Visibility::ReceiverHost => 1,
            Visibility::BothHosts => 2,
            Visibility::TeeInternal => 3,
        }
    }

    fn from_code(code: u8) -> Result<Visibility> {
        Ok(match code {
            0 => Visibility::SenderHost,
            1 => Visibility::ReceiverHost,
            2 => Visibility::BothHosts,
            3 => Visibility::TeeInternal,
            _ => return Err(Error::MalformedFrame),
        })
    }
}

/// One host-visible emission from the tape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TapeRecord {
    pub label: &'static str,
    pub index: u64,
    pub visibility: Visibility,
    pub value: PackedBits,
}

/// A parsed record from a serialized tape dump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DumpRecord {
    pub label: String,
    pub index: u64,
    pub visibility: Visibility,
    pub value: PackedBits,
}

/// Handle pairing the offline draws of one comparison instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ComparisonId(pub u64);

/// One oblivious-message pad: a bit for the less-than payload and a bit
/// for the equality payload.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PadPair {
    pub lt: bool,
    pub eq: bool,
}

/// Sender-side offline material for one chunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SenderLeafChunk {
    /// Masked selection `x_j ^ c_j`; present only on the tape-assisted path
    /// (the baseline receives it over the wire).
    pub tmp: Option<u8>,
    /// All `2^q` pad pairs, indexed by pad slot.
    pub pads: Vec<PadPair>,
    pub lt_share: bool,
    pub eq_share: bool,
}

/// Receiver-side offline material for one chunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceiverLeafChunk {
    /// Tape-derived comparison operand `x_j` (tape-assisted path only).
    pub mask: Option<u8>,
    /// Selection value `c_j` (baseline path only, where the receiver picks
    /// its own oblivious index).
    pub select: Option<u8>,
    /// The single retained pad, equal to the sender's pad at slot `c_j`.
    pub kept_pad: PadPair,
    /// Combined release `(lt_share ^ r, eq_share ^ r')` enabling the
    /// one-directional merge opening.
    pub release: Option<(bool, bool)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LeafBundleView {
    Sender(SenderLeafChunk),
    Receiver(ReceiverLeafChunk),
}

/// Per-chunk offline bundle as seen by one host.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafOfflineBundle {
    pub q: u8,
    pub view: LeafBundleView,
}

/// All leaf bundles of one comparison instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafOffline {
    pub comparison: ComparisonId,
    pub n: usize,
    pub q: u8,
    pub bundles: Vec<LeafOfflineBundle>,
}

impl LeafOffline {
    pub fn sender_chunks(&self) -> Result<Vec<&SenderLeafChunk>> {
        self.bundles
            .iter()
            .map(|b| match &b.view {
                LeafBundleView::Sender(s) => Ok(s),
                LeafBundleView::Receiver(_) => Err(Error::VariantMismatch("sender view")),
            })
            .collect()
    }

    pub fn receiver_chunks(&self) -> Result<Vec<&ReceiverLeafChunk>> {
        self.bundles
            .iter()
            .map(|b| match &b.view {
                LeafBundleView::Receiver(r) => Ok(r),
                LeafBundleView::Sender(_) => Err(Error::VariantMismatch("receiver view")),
            })
            .collect()
    }

    /// Recomposes the tape-derived comparison operand from the receiver view.
    pub fn receiver_mask(&self) -> Result<RingValue> {
        let chunks = self.receiver_chunks()?;
        let mut value = 0u64;
        for (j, c) in chunks.iter().enumerate() {
            let m = c.mask.ok_or(Error::VariantMismatch("tape mask"))?;
            value |= (m as u64) << (j as u32 * self.q as u32);
        }
        RingValue::new(value, (self.n * self.q as usize) as u8)
    }
}

/// One party's XOR shares of the subset products of the merge mask bits,
/// stored positionally in the order the subsets were requested. The
/// fingerprint ties the positions back to the generating subset list so a
/// bundle cannot be evaluated against a different plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetProductShares {
    pub comparison: ComparisonId,
    pub role: Role,
    num_vars: usize,
    fingerprint: u64,
    shares: PackedBits,
}

impl SubsetProductShares {
    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }

    pub fn share_at(&self, idx: usize) -> Result<bool> {
        if idx >= self.shares.len() {
            return Err(Error::IndexOutOfRange {
                index: idx,
                limit: self.shares.len(),
            });
        }
        Ok(self.shares.get(idx))
    }
}

/// GF(2) multiplication triple: shares of `(a, b, c)` with `c = a AND b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripleShare {
    pub a: bool,
    pub b: bool,
    pub c: bool,
}

/// Correlated randomness for one bit-times-ring multiplexed product:
/// a random bit held both XOR-shared and additively shared, plus a ring
/// triple whose second factor is that bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MuxCorrelation {
    pub width: u8,
    /// XOR share of the masking bit.
    pub xor_share: bool,
    /// Additive share of the masking bit as a ring element.
    pub bit_arith_share: u64,
    /// Additive share of the triple partner `a`.
    pub a_share: u64,
    /// Additive share of the product `a * bit`.
    pub c_share: u64,
}

/// One party's additive shares of the monomials `prod_j r_j^{e_j}` needed
/// by an arithmetic polynomial evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialShares {
    pub width: u8,
    columns: usize,
    exponents: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
    shares: Vec<u64>,
}

impl MonomialShares {
    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn share_for(&self, exponent: &[u32]) -> Result<u64> {
        match self.index.get(exponent) {
            Some(&idx) => Ok(self.shares[idx]),
            None => Err(Error::RandomnessGap(exponent.to_vec())),
        }
    }

    /// Share of the bare mask `r_j` for column `j`.
    pub fn column_mask_share(&self, j: usize) -> Result<u64> {
        let mut unit = vec![0u32; self.columns];
        unit[j] = 1;
        self.share_for(&unit)
    }
}

/// Bundled offline material for one composed nonlinear operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NonlinearOffline {
    pub leaf: LeafOffline,
    pub subset: SubsetProductShares,
    /// Receiver only: the tape-drawn additive input share.
    pub arith_mask: Option<ArithShare>,
    pub mux: Option<MuxCorrelation>,
}

fn draw_bit(rng: &mut ChaCha20Rng) -> bool {
    rng.next_u32() & 1 == 1
}

fn draw_value(rng: &mut ChaCha20Rng, width: u8) -> u64 {
    rng.next_u64() & width_mask(width)
}

fn bits_of_value(value: u64, width: u8) -> PackedBits {
    let mut b = PackedBits::zeros(width as usize);
    b.set_value(0, width, value);
    b
}

/// Deterministic, replayable stream of correlated randomness for one party.
///
/// A tape is a stateful draw cursor: single-owner, never shared. The two
/// parties' tapes stay synchronized because both run the same protocol
/// schedule and therefore the same sequence of draws.
pub struct TeeTape {
    key: [u8; 32],
    role: Role,
    next_comparison: u64,
    next_triple_batch: u64,
    next_mux_batch: u64,
    next_poly: u64,
    recording: bool,
    view: Vec<TapeRecord>,
}

impl TeeTape {
    pub fn new(seed: &TapeSeed, role: Role) -> TeeTape {
        let mut h = Sha256::new();
        h.update(b"millforge.tape.key");
        h.update(seed.master_seed);
        h.update(seed.session_id.to_le_bytes());
        TeeTape {
            key: h.finalize().into(),
            role,
            next_comparison: 0,
            next_triple_batch: 0,
            next_mux_batch: 0,
            next_poly: 0,
            recording: false,
            view: Vec::new(),
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// Enables host-view recording (disabled by default; sweeps would
    /// otherwise accumulate unbounded records).
    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    /// Host-visible emissions in derivation order.
    pub fn view(&self) -> &[TapeRecord] {
        &self.view
    }

    fn stream(&self, label: &str, instance: u64) -> ChaCha20Rng {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update([label.len() as u8]);
        h.update(label.as_bytes());
        h.update(instance.to_le_bytes());
        ChaCha20Rng::from_seed(h.finalize().into())
    }

    /// Raw bytes of one domain-separated stream; test hook for determinism
    /// and avalanche checks.
    pub fn raw_stream(&self, label: &str, len: usize) -> Vec<u8> {
        let mut rng = self.stream(label, 0);
        let mut out = vec![0u8; len];
        rng.fill_bytes(&mut out);
        out
    }

    fn emit(&mut self, label: &'static str, index: u64, visibility: Visibility, value: PackedBits) {
        debug_assert!(visibility != Visibility::TeeInternal);
        if self.recording && visibility.licenses(self.role) {
            self.view.push(TapeRecord {
                label,
                index,
                visibility,
                value,
            });
        }
    }

    pub fn begin_comparison(&mut self) -> ComparisonId {
        let id = ComparisonId(self.next_comparison);
        self.next_comparison += 1;
        id
    }

    /// Merge mask bits and the sender's singleton shares for one comparison
    /// instance. Prefix-stable in `num_vars`, so the leaf releases and the
    /// subset shares of the same instance always agree.
    fn merge_rand(&self, id: ComparisonId, num_vars: usize) -> (Vec<bool>, Vec<bool>) {
        let mut rng = self.stream("mrand", id.0);
        let mut r = Vec::with_capacity(num_vars);
        let mut sender_share = Vec::with_capacity(num_vars);
        for _ in 0..num_vars {
            r.push(draw_bit(&mut rng));
            sender_share.push(draw_bit(&mut rng));
        }
        (r, sender_share)
    }

    /// Tape-assisted leaf material: the receiver's operand is the tape
    /// mask itself. Consumes no communication.
    pub fn leaf_offline(&mut self, n: usize, q: u8) -> Result<LeafOffline> {
        let id = self.begin_comparison();
        self.leaf_offline_at(id, None, n, q)
    }

    /// Tape-assisted leaf material with a caller-fixed mask derived from
    /// earlier tape draws (the arithmetic-share path).
    fn leaf_offline_masked(&mut self, id: ComparisonId, mask: u64, n: usize, q: u8) -> Result<LeafOffline> {
        self.leaf_offline_at(id, Some(mask), n, q)
    }

    fn leaf_offline_at(
        &mut self,
        id: ComparisonId,
        fixed_mask: Option<u64>,
        n: usize,
        q: u8,
    ) -> Result<LeafOffline> {
        if q == 0 || q > 8 || n == 0 {
            return Err(Error::ChunkWidth {
                q,
                width: (n * q as usize).min(255) as u8,
            });
        }
        let num_vars = 2 * n - 1;
        let (_merge_r, merge_share_s) = self.merge_rand(id, num_vars);

        let mut rng = self.stream("leaf", id.0);
        let nonce = rng.next_u64();
        self.emit("comparison.nonce", id.0, Visibility::BothHosts, bits_of_value(nonce, 64));

        let qmask = width_mask(q) as u8;
        let entries = 1usize << q;
        let mut bundles = Vec::with_capacity(n);
        for j in 0..n {
            let x = match fixed_mask {
                Some(m) => ((m >> (j as u32 * q as u32)) as u8) & qmask,
                None => (rng.next_u32() as u8) & qmask,
            };
            // Selection value: TEE-internal, discarded after tmp is formed.
            let c = (rng.next_u32() as u8) & qmask;
            let tmp = x ^ c;
            let mut pads = Vec::with_capacity(entries);
            for _ in 0..entries {
                pads.push(PadPair {
                    lt: draw_bit(&mut rng),
                    eq: draw_bit(&mut rng),
                });
            }
            let lt_share = draw_bit(&mut rng);
            let eq_share = draw_bit(&mut rng);
            let spare = draw_bit(&mut rng);

            let lt_release = lt_share ^ merge_share_s[j];
            // Chunk 0's equality bit never enters the merge polynomial; its
            // release slot is filled with a dedicated spare mask bit.
            let eq_release = if j == 0 {
                eq_share ^ spare
            } else {
                eq_share ^ merge_share_s[n + j - 1]
            };

            match self.role {
                Role::Sender => {
                    self.emit("leaf.tmp", j as u64, Visibility::SenderHost, bits_of_value(tmp as u64, q));
                    for (t, p) in pads.iter().enumerate() {
                        self.emit(
                            "leaf.pad",
                            (j * entries + t) as u64,
                            Visibility::SenderHost,
                            PackedBits::from_bools(&[p.lt, p.eq]),
                        );
                    }
                    self.emit(
                        "leaf.share",
                        j as u64,
                        Visibility::SenderHost,
                        PackedBits::from_bools(&[lt_share, eq_share]),
                    );
                    bundles.push(LeafOfflineBundle {
                        q,
                        view: LeafBundleView::Sender(SenderLeafChunk {
                            tmp: Some(tmp),
                            pads,
                            lt_share,
                            eq_share,
                        }),
                    });
                }
                Role::Receiver => {
                    let kept = pads[c as usize];
                    self.emit("leaf.mask", j as u64, Visibility::ReceiverHost, bits_of_value(x as u64, q));
                    self.emit(
                        "leaf.pad.kept",
                        j as u64,
                        Visibility::ReceiverHost,
                        PackedBits::from_bools(&[kept.lt, kept.eq]),
                    );
                    self.emit(
                        "leaf.release",
                        j as u64,
                        Visibility::ReceiverHost,
                        PackedBits::from_bools(&[lt_release, eq_release]),
                    );
                    bundles.push(LeafOfflineBundle {
                        q,
                        view: LeafBundleView::Receiver(ReceiverLeafChunk {
                            mask: Some(x),
                            select: None,
                            kept_pad: kept,
                            release: Some((lt_release, eq_release)),
                        }),
                    });
                }
            }
        }
        Ok(LeafOffline {
            comparison: id,
            n,
            q,
            bundles,
        })
    }

    /// Baseline leaf material: pads plus a receiver-visible selection value
    /// per chunk; the receiver's operand arrives online.
    pub fn leaf_offline_baseline(&mut self, n: usize, q: u8) -> Result<LeafOffline> {
        if q == 0 || q > 8 || n == 0 {
            return Err(Error::ChunkWidth {
                q,
                width: (n * q as usize).min(255) as u8,
            });
        }
        let id = self.begin_comparison();
        let mut rng = self.stream("bleaf", id.0);
        let nonce = rng.next_u64();
        self.emit("comparison.nonce", id.0, Visibility::BothHosts, bits_of_value(nonce, 64));

        let qmask = width_mask(q) as u8;
        let entries = 1usize << q;
        let mut bundles = Vec::with_capacity(n);
        for j in 0..n {
            let c = (rng.next_u32() as u8) & qmask;
            let mut pads = Vec::with_capacity(entries);
            for _ in 0..entries {
                pads.push(PadPair {
                    lt: draw_bit(&mut rng),
                    eq: draw_bit(&mut rng),
                });
            }
            let lt_share = draw_bit(&mut rng);
            let eq_share = draw_bit(&mut rng);

            match self.role {
                Role::Sender => {
                    for (t, p) in pads.iter().enumerate() {
                        self.emit(
                            "leaf.pad",
                            (j * entries + t) as u64,
                            Visibility::SenderHost,
                            PackedBits::from_bools(&[p.lt, p.eq]),
                        );
                    }
                    self.emit(
                        "leaf.share",
                        j as u64,
                        Visibility::SenderHost,
                        PackedBits::from_bools(&[lt_share, eq_share]),
                    );
                    bundles.push(LeafOfflineBundle {
                        q,
                        view: LeafBundleView::Sender(SenderLeafChunk {
                            tmp: None,
                            pads,
                            lt_share,
                            eq_share,
                        }),
                    });
                }
                Role::Receiver => {
                    let kept = pads[c as usize];
                    self.emit("leaf.select", j as u64, Visibility::ReceiverHost, bits_of_value(c as u64, q));
                    self.emit(
                        "leaf.pad.kept",
                        j as u64,
                        Visibility::ReceiverHost,
                        PackedBits::from_bools(&[kept.lt, kept.eq]),
                    );
                    bundles.push(LeafOfflineBundle {
                        q,
                        view: LeafBundleView::Receiver(ReceiverLeafChunk {
                            mask: None,
                            select: Some(c),
                            kept_pad: kept,
                            release: None,
                        }),
                    });
                }
            }
        }
        Ok(LeafOffline {
            comparison: id,
            n,
            q,
            bundles,
        })
    }

    /// Subset-product shares for a standalone plan (fresh instance).
    pub fn subset_product_shares(&mut self, plan: &ReusePlan) -> Result<SubsetProductShares> {
        let id = self.begin_comparison();
        self.subset_product_shares_for(id, plan)
    }

    /// Subset-product shares bound to an existing comparison instance so
    /// the singleton shares match that instance's leaf releases.
    pub fn subset_product_shares_for(
        &mut self,
        id: ComparisonId,
        plan: &ReusePlan,
    ) -> Result<SubsetProductShares> {
        self.subset_product_shares_raw(id, plan.num_vars(), plan.subsets())
    }

    /// Low-level subset share derivation; rejects duplicate or empty
    /// subsets and out-of-range variables.
    pub fn subset_product_shares_raw(
        &mut self,
        id: ComparisonId,
        num_vars: usize,
        subsets: &[u64],
    ) -> Result<SubsetProductShares> {
        if num_vars == 0 || num_vars > 64 {
            return Err(Error::TooManyColumns(num_vars));
        }
        let mut index = HashMap::with_capacity(subsets.len());
        for (i, &s) in subsets.iter().enumerate() {
            if s == 0 {
                return Err(Error::DuplicateSubset(vec![]));
            }
            if s & !width_mask(num_vars as u8) != 0 {
                return Err(Error::IndexOutOfRange {
                    index: 63 - s.leading_zeros() as usize,
                    limit: num_vars,
                });
            }
            if index.insert(s, i).is_some() {
                return Err(Error::DuplicateSubset(mask_to_indices(s)));
            }
        }

        let (merge_r, merge_share_s) = self.merge_rand(id, num_vars);
        let mut rng = self.stream("subsetsh", id.0);
        let mut shares = PackedBits::zeros(subsets.len());
        for (i, &s) in subsets.iter().enumerate() {
            let (sender_share, receiver_share) = if s.count_ones() == 1 {
                let v = s.trailing_zeros() as usize;
                (merge_share_s[v], merge_r[v] ^ merge_share_s[v])
            } else {
                let product = mask_to_indices(s).iter().all(|&v| merge_r[v]);
                let sender_share = draw_bit(&mut rng);
                (sender_share, product ^ sender_share)
            };
            let own = match self.role {
                Role::Sender => sender_share,
                Role::Receiver => receiver_share,
            };
            let vis = match self.role {
                Role::Sender => Visibility::SenderHost,
                Role::Receiver => Visibility::ReceiverHost,
            };
            self.emit("subset.share", i as u64, vis, PackedBits::from_bools(&[own]));
            shares.set(i, own);
        }
        Ok(SubsetProductShares {
            comparison: id,
            role: self.role,
            num_vars,
            fingerprint: crate::reuse::subsets_fingerprint(num_vars, subsets),
            shares,
        })
    }

    /// GF(2) multiplication triples; each satisfies `c = a AND b` on
    /// reconstruction.
    pub fn beaver_triples(&mut self, count: usize) -> Vec<TripleShare> {
        let batch = self.next_triple_batch;
        self.next_triple_batch += 1;
        let mut rng = self.stream("triples", batch);
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let a_s = draw_bit(&mut rng);
            let a_r = draw_bit(&mut rng);
            let b_s = draw_bit(&mut rng);
            let b_r = draw_bit(&mut rng);
            let c_s = draw_bit(&mut rng);
            let c = (a_s ^ a_r) & (b_s ^ b_r);
            let share = match self.role {
                Role::Sender => TripleShare {
                    a: a_s,
                    b: b_s,
                    c: c_s,
                },
                Role::Receiver => TripleShare {
                    a: a_r,
                    b: b_r,
                    c: c ^ c_s,
                },
            };
            let vis = match self.role {
                Role::Sender => Visibility::SenderHost,
                Role::Receiver => Visibility::ReceiverHost,
            };
            self.emit(
                "triple.share",
                batch.wrapping_mul(1 << 32).wrapping_add(i as u64),
                vis,
                PackedBits::from_bools(&[share.a, share.b, share.c]),
            );
            out.push(share);
        }
        out
    }

    /// Multiplexer correlations over `Z_{2^width}`.
    pub fn mux_correlations(&mut self, count: usize, width: u8) -> Result<Vec<MuxCorrelation>> {
        if width == 0 || width > 64 {
            return Err(Error::InvalidWidth(width));
        }
        let batch = self.next_mux_batch;
        self.next_mux_batch += 1;
        let mut rng = self.stream("mux", batch);
        let wmask = width_mask(width);
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let rhat = draw_bit(&mut rng);
            let xor_s = draw_bit(&mut rng);
            let bit_arith_s = draw_value(&mut rng, width);
            let a_s = draw_value(&mut rng, width);
            let a_r = draw_value(&mut rng, width);
            let c_s = draw_value(&mut rng, width);
            let a = a_s.wrapping_add(a_r) & wmask;
            let c = if rhat { a } else { 0 };
            let share = match self.role {
                Role::Sender => MuxCorrelation {
                    width,
                    xor_share: xor_s,
                    bit_arith_share: bit_arith_s,
                    a_share: a_s,
                    c_share: c_s,
                },
                Role::Receiver => MuxCorrelation {
                    width,
                    xor_share: rhat ^ xor_s,
                    bit_arith_share: (rhat as u64).wrapping_sub(bit_arith_s) & wmask,
                    a_share: a_r,
                    c_share: c.wrapping_sub(c_s) & wmask,
                },
            };
            let vis = match self.role {
                Role::Sender => Visibility::SenderHost,
                Role::Receiver => Visibility::ReceiverHost,
            };
            let mut packed = PackedBits::zeros(1 + 3 * width as usize);
            packed.set(0, share.xor_share);
            packed.set_value(1, width, share.bit_arith_share);
            packed.set_value(1 + width as usize, width, share.a_share);
            packed.set_value(1 + 2 * width as usize, width, share.c_share);
            self.emit(
                "mux.share",
                batch.wrapping_mul(1 << 32).wrapping_add(i as u64),
                vis,
                packed,
            );
            out.push(share);
        }
        Ok(out)
    }

    /// Additive shares of every monomial `prod_j r_j^{e_j}` a polynomial
    /// evaluation over `Z_{2^width}` can request: all componentwise
    /// exponents `0 < e <= E_i` of every row, deduplicated across rows.
    pub fn poly_randomness(
        &mut self,
        matrix: &crate::reuse::ExponentMatrix,
        width: u8,
    ) -> Result<MonomialShares> {
        if width == 0 || width > 64 {
            return Err(Error::InvalidWidth(width));
        }
        let cols = matrix.num_cols();
        let mut set = std::collections::BTreeSet::new();
        for row in matrix.rows() {
            let mut e = vec![0u32; cols];
            loop {
                // Advance the componentwise odometer bounded by the row.
                let mut k = 0;
                while k < cols {
                    if e[k] < row[k] {
                        e[k] += 1;
                        for slot in e.iter_mut().take(k) {
                            *slot = 0;
                        }
                        break;
                    }
                    k += 1;
                }
                if k == cols {
                    break;
                }
                set.insert(e.clone());
            }
        }
        let exponents: Vec<Vec<u32>> = set.into_iter().collect();

        let instance = self.next_poly;
        self.next_poly += 1;
        let wmask = width_mask(width);
        let mut rng = self.stream("polyr", instance);
        let r: Vec<u64> = (0..cols).map(|_| draw_value(&mut rng, width)).collect();
        let mut rng_sh = self.stream("polysh", instance);

        let mut shares = Vec::with_capacity(exponents.len());
        let mut index = HashMap::with_capacity(exponents.len());
        for (k, e) in exponents.iter().enumerate() {
            let mut value = 1u64;
            for (j, &exp) in e.iter().enumerate() {
                for _ in 0..exp {
                    value = value.wrapping_mul(r[j]) & wmask;
                }
            }
            let sender_share = draw_value(&mut rng_sh, width);
            let own = match self.role {
                Role::Sender => sender_share,
                Role::Receiver => value.wrapping_sub(sender_share) & wmask,
            };
            let vis = match self.role {
                Role::Sender => Visibility::SenderHost,
                Role::Receiver => Visibility::ReceiverHost,
            };
            self.emit("poly.share", k as u64, vis, bits_of_value(own, width));
            index.insert(e.clone(), k);
            shares.push(own);
        }
        Ok(MonomialShares {
            width,
            columns: cols,
            exponents,
            index,
            shares,
        })
    }

    /// Offline material for one tape-assisted millionaire run: leaf bundles
    /// with a uniformly drawn receiver operand, plus the matching subset
    /// shares.
    pub fn millionaire_offline(&mut self, width: u8, q: u8, plan: &ReusePlan) -> Result<NonlinearOffline> {
        if q == 0 || q > 8 || width % q != 0 {
            return Err(Error::ChunkWidth { q, width });
        }
        let n = (width / q) as usize;
        let leaf = self.leaf_offline(n, q)?;
        let subset = self.subset_product_shares_for(leaf.comparison, plan)?;
        Ok(NonlinearOffline {
            leaf,
            subset,
            arith_mask: None,
            mux: None,
        })
    }

    /// Offline material for one tape-assisted sign test: the receiver's
    /// additive input share is drawn here and the comparison operand is its
    /// low-bits complement, derived inside the tape so the sender host
    /// never sees it.
    pub fn drelu_offline(
        &mut self,
        width: u8,
        q: u8,
        plan: &ReusePlan,
        with_mux: bool,
    ) -> Result<NonlinearOffline> {
        if width < 2 {
            return Err(Error::InvalidWidth(width));
        }
        if q == 0 || q > 8 || width % q != 0 {
            return Err(Error::ChunkWidth { q, width });
        }
        let n = (width / q) as usize;
        let id = self.begin_comparison();
        let mut rng = self.stream("arith", id.0);
        let r = draw_value(&mut rng, width);
        if self.role == Role::Receiver {
            self.emit("arith.mask", id.0, Visibility::ReceiverHost, bits_of_value(r, width));
        }
        let mask = r & width_mask(width - 1);
        let leaf = self.leaf_offline_masked(id, mask, n, q)?;
        let subset = self.subset_product_shares_for(id, plan)?;
        let mux = if with_mux {
            Some(self.mux_correlations(1, width)?[0])
        } else {
            None
        };
        Ok(NonlinearOffline {
            leaf,
            subset,
            arith_mask: match self.role {
                Role::Receiver => Some(ArithShare::new(r, width)?),
                Role::Sender => None,
            },
            mux,
        })
    }

    /// Serializes the host view: length-prefixed records of
    /// `(stream-label, index, visibility, packed value)`.
    pub fn dump_view(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for rec in &self.view {
            let mut body = Vec::new();
            body.push(rec.label.len() as u8);
            body.extend_from_slice(rec.label.as_bytes());
            body.extend_from_slice(&rec.index.to_le_bytes());
            body.push(rec.visibility.code());
            body.extend_from_slice(&rec.value.to_wire());
            out.extend_from_slice(&(body.len() as u32).to_le_bytes());
            out.extend_from_slice(&body);
        }
        out
    }
}

/// Parses a serialized tape dump back into records.
pub fn parse_dump(data: &[u8]) -> Result<Vec<DumpRecord>> {
    let mut records = Vec::new();
    let mut pos = 0usize;
    while pos < data.len() {
        if pos + 4 > data.len() {
            return Err(Error::MalformedFrame);
        }
        let len = u32::from_le_bytes(data[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        if pos + len > data.len() {
            return Err(Error::MalformedFrame);
        }
        let body = &data[pos..pos + len];
        pos += len;
        if body.is_empty() {
            return Err(Error::MalformedFrame);
        }
        let label_len = body[0] as usize;
        if body.len() < 1 + label_len + 8 + 1 + 4 {
            return Err(Error::MalformedFrame);
        }
        let label = String::from_utf8(body[1..1 + label_len].to_vec())
            .map_err(|_| Error::MalformedFrame)?;
        let mut at = 1 + label_len;
        let index = u64::from_le_bytes(body[at..at + 8].try_into().unwrap());
        at += 8;
        let visibility = Visibility::from_code(body[at])?;
        at += 1;
        let value = PackedBits::from_wire(&body[at..])?;
        records.push(DumpRecord {
            label,
            index,
            visibility,
            value,
        });
    }
    Ok(records)
}
