//! Combining per-chunk comparison shares into the full-width comparison
//! bit.
//!
//! The baseline multiplies the chains layer by layer over a binary tree of
//! Beaver multiplications, one opening round per level. The tape-assisted
//! path evaluates the whole merge polynomial in a single opening round:
//! every variable is opened as `d_v = v ^ r_v`, and each party then sums,
//! per polynomial row, over all splits of the row into an opened part and
//! a subset-product of mask bits. The all-opened term belongs to exactly
//! one party (the sender) so reconstruction neither drops nor
//! double-counts it.
//!
//! Merge variables are ordered `lt_0 .. lt_{n-1}, eq_1 .. eq_{n-1}`; the
//! equality bit of chunk 0 never enters the polynomial. Batched flights
//! concatenate items in order: the baseline packs `(d, e)` openings
//! level-major then item-major, the polynomial path one masked-share
//! vector per item.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::bits::{width_mask, PackedBits, Role};
use crate::error::{Error, Result};
use crate::leaf::LeafResult;
use crate::reuse::{build_reuse_plan, ExponentMatrix, ReusePlan, RowTerm};
use crate::tape::{MonomialShares, SubsetProductShares, TripleShare};
use crate::transport::{Endpoint, TAG_MERGE_OPEN_BASE, TAG_MERGE_OPEN_TAMI, TAG_POLY_OPEN};

/// Number of merge variables for `n` chunks.
pub fn num_merge_vars(n: usize) -> usize {
    2 * n - 1
}

pub fn lt_var(i: usize) -> usize {
    i
}

pub fn eq_var(n: usize, j: usize) -> usize {
    debug_assert!(j >= 1);
    n + j - 1
}

/// The comparison merge polynomial as an exponent matrix: one row per
/// chunk, most significant first; the row for chunk `i` holds `lt_i` and
/// every `eq_j` with `j > i`.
pub fn comparison_merge_matrix(n: usize) -> Result<ExponentMatrix> {
    if n == 0 {
        return Err(Error::Config("need at least one chunk".into()));
    }
    if num_merge_vars(n) > 64 {
        return Err(Error::TooManyColumns(num_merge_vars(n)));
    }
    let cols = num_merge_vars(n);
    let mut rows = Vec::with_capacity(n);
    for i in (0..n).rev() {
        let mut row = vec![0u32; cols];
        row[lt_var(i)] = 1;
        for j in i + 1..n {
            row[eq_var(n, j)] = 1;
        }
        rows.push(row);
    }
    ExponentMatrix::new(rows)
}

/// Cached reuse plan for the comparison merge of `n` chunks.
pub fn comparison_plan(n: usize) -> Result<Arc<ReusePlan>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<ReusePlan>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    if let Some(plan) = guard.get(&n) {
        return Ok(Arc::clone(plan));
    }
    let plan = Arc::new(build_reuse_plan(&comparison_merge_matrix(n)?)?);
    guard.insert(n, Arc::clone(&plan));
    Ok(plan)
}

/// Plaintext merge oracle: `XOR_i (lt_i AND prod_{j>i} eq_j)`.
pub fn plain_merge(lt: &[bool], eq: &[bool]) -> bool {
    let n = lt.len();
    let mut out = false;
    for i in 0..n {
        let mut term = lt[i];
        for j in i + 1..n {
            term &= eq[j];
        }
        out ^= term;
    }
    out
}

#[derive(Debug, Clone, Copy)]
enum Group {
    /// This party's XOR shares of the group's (lt, eq) pair.
    Secret { lt: bool, eq: bool },
    /// Publicly known constants (padding groups).
    Public { lt: bool, eq: bool },
}

fn leaf_shares(leaf: &LeafResult) -> (Vec<bool>, Vec<bool>) {
    (leaf.lt.bits.iter().collect(), leaf.eq.bits.iter().collect())
}

struct PendingMult {
    item: usize,
    point: usize,
    hi_lt: bool,
    hi_eq: bool,
    lo_lt: bool,
    lo_eq: bool,
}

/// Baseline tree merge over a batch of leaf results (all the same width).
/// Pads to a power of two with neutral `(lt, eq) = (0, 1)` groups; only
/// merges of two secret groups consume triples, which keeps the cost at
/// `2(n-1)` multiplications per item for every `n`. One opening exchange
/// per level for the whole batch.
pub fn merge_baseline_batch(
    ep: &mut Endpoint,
    role: Role,
    leafs: &[LeafResult],
    triples: &[TripleShare],
) -> Result<Vec<bool>> {
    let first_n = leafs.first().map(|l| l.n()).ok_or_else(|| Error::Config("empty batch".into()))?;
    if first_n == 0 {
        return Err(Error::Config("empty leaf result".into()));
    }
    for l in leafs {
        if l.n() != first_n {
            return Err(Error::BundleCount {
                expected: first_n,
                got: l.n(),
            });
        }
    }
    let size = first_n.next_power_of_two();
    let mut items: Vec<Vec<Group>> = leafs
        .iter()
        .map(|leaf| {
            let (lt, eq) = leaf_shares(leaf);
            (0..size)
                .map(|i| {
                    if i < first_n {
                        Group::Secret { lt: lt[i], eq: eq[i] }
                    } else {
                        Group::Public { lt: false, eq: true }
                    }
                })
                .collect()
        })
        .collect();

    let designated = role == Role::Sender;
    let mut next_triple = 0usize;
    let mut level_width = size;

    while level_width > 1 {
        let mut pending: Vec<PendingMult> = Vec::new();
        let mut next: Vec<Vec<Option<Group>>> = vec![vec![None; level_width / 2]; items.len()];
        for (item, groups) in items.iter().enumerate() {
            for p in 0..level_width / 2 {
                let lo = groups[2 * p];
                let hi = groups[2 * p + 1];
                next[item][p] = match (hi, lo) {
                    (Group::Secret { lt: hlt, eq: heq }, Group::Secret { lt: llt, eq: leq }) => {
                        pending.push(PendingMult {
                            item,
                            point: p,
                            hi_lt: hlt,
                            hi_eq: heq,
                            lo_lt: llt,
                            lo_eq: leq,
                        });
                        None
                    }
                    (Group::Public { lt: hlt, eq: heq }, Group::Secret { lt: llt, eq: leq }) => {
                        Some(Group::Secret {
                            lt: (heq & llt) ^ (designated & hlt),
                            eq: heq & leq,
                        })
                    }
                    (Group::Secret { lt: hlt, eq: heq }, Group::Public { lt: llt, eq: leq }) => {
                        Some(Group::Secret {
                            lt: hlt ^ (llt & heq),
                            eq: leq & heq,
                        })
                    }
                    (Group::Public { lt: hlt, eq: heq }, Group::Public { lt: llt, eq: leq }) => {
                        Some(Group::Public {
                            lt: hlt ^ (heq & llt),
                            eq: heq & leq,
                        })
                    }
                };
            }
        }

        if !pending.is_empty() {
            if next_triple + 2 * pending.len() > triples.len() {
                return Err(Error::InsufficientTriples {
                    needed: 2 * pending.len(),
                    have: triples.len().saturating_sub(next_triple),
                });
            }
            // Per pending point: (d, e) of the lt-chain multiplication,
            // then of the eq-chain multiplication.
            let mut opening = PackedBits::zeros(pending.len() * 4);
            for (k, m) in pending.iter().enumerate() {
                let t_lt = &triples[next_triple + 2 * k];
                let t_eq = &triples[next_triple + 2 * k + 1];
                opening.set(4 * k, m.hi_eq ^ t_lt.a);
                opening.set(4 * k + 1, m.lo_lt ^ t_lt.b);
                opening.set(4 * k + 2, m.hi_eq ^ t_eq.a);
                opening.set(4 * k + 3, m.lo_eq ^ t_eq.b);
            }
            let theirs = ep.exchange(TAG_MERGE_OPEN_BASE, &opening)?;
            if theirs.len() != opening.len() {
                return Err(Error::MalformedFrame);
            }
            for (k, m) in pending.iter().enumerate() {
                let t_lt = &triples[next_triple + 2 * k];
                let t_eq = &triples[next_triple + 2 * k + 1];
                let d_lt = opening.get(4 * k) ^ theirs.get(4 * k);
                let e_lt = opening.get(4 * k + 1) ^ theirs.get(4 * k + 1);
                let d_eq = opening.get(4 * k + 2) ^ theirs.get(4 * k + 2);
                let e_eq = opening.get(4 * k + 3) ^ theirs.get(4 * k + 3);
                let prod_lt =
                    t_lt.c ^ (d_lt & t_lt.b) ^ (e_lt & t_lt.a) ^ (designated & d_lt & e_lt);
                let prod_eq =
                    t_eq.c ^ (d_eq & t_eq.b) ^ (e_eq & t_eq.a) ^ (designated & d_eq & e_eq);
                next[m.item][m.point] = Some(Group::Secret {
                    lt: m.hi_lt ^ prod_lt,
                    eq: prod_eq,
                });
            }
            next_triple += 2 * pending.len();
        }

        items = next
            .into_iter()
            .map(|row| row.into_iter().map(Option::unwrap).collect())
            .collect();
        level_width /= 2;
    }

    Ok(items
        .into_iter()
        .map(|groups| match groups[0] {
            Group::Secret { lt, .. } => lt,
            Group::Public { lt, .. } => designated & lt,
        })
        .collect())
}

/// Baseline tree merge for one party and one comparison.
pub fn merge_baseline(
    ep: &mut Endpoint,
    role: Role,
    leaf: &LeafResult,
    triples: &[TripleShare],
) -> Result<bool> {
    Ok(merge_baseline_batch(ep, role, std::slice::from_ref(leaf), triples)?[0])
}

/// The party's XOR shares of the merge variable vector.
fn merge_variable_shares(leaf: &LeafResult) -> Vec<bool> {
    let (lt, eq) = leaf_shares(leaf);
    let n = lt.len();
    let mut vars = Vec::with_capacity(num_merge_vars(n));
    vars.extend_from_slice(&lt);
    vars.extend_from_slice(&eq[1..]);
    vars
}

fn check_plan(plan: &ReusePlan, subset: &SubsetProductShares, num_vars: usize) -> Result<()> {
    if plan.num_vars() != num_vars || subset.num_vars() != num_vars {
        return Err(Error::PlanMismatch {
            plan_vars: plan.num_vars(),
            session_vars: num_vars,
        });
    }
    if plan.fingerprint() != subset.fingerprint() {
        return Err(Error::PlanMismatch {
            plan_vars: plan.len(),
            session_vars: subset.len(),
        });
    }
    Ok(())
}

/// Evaluates every plan row against the opened differences; the designated
/// party also adds the all-opened terms.
fn eval_plan_gf2(
    plan: &ReusePlan,
    subset: &SubsetProductShares,
    d_mask: u64,
    designated: bool,
) -> Result<bool> {
    let mut acc = false;
    for row in 0..plan.num_rows() {
        for &RowTerm { opened, rand } in plan.row_terms(row) {
            if d_mask & opened != opened {
                continue;
            }
            match rand {
                Some(idx) => acc ^= subset.share_at(idx)?,
                None => acc ^= designated,
            }
        }
    }
    Ok(acc)
}

fn masked_shares_into(
    frame: &mut PackedBits,
    base: usize,
    vars: &[bool],
    plan: &ReusePlan,
    subset: &SubsetProductShares,
) -> Result<()> {
    for (v, &share) in vars.iter().enumerate() {
        // A column that appears in no row has no mask; its slot carries a
        // constant placeholder and is never evaluated.
        let masked = match plan.singleton_index(v) {
            Some(idx) => share ^ subset.share_at(idx)?,
            None => false,
        };
        frame.set(base + v, masked);
    }
    Ok(())
}

/// One-round polynomial merge over a batch, sender side. In interleaved
/// mode the sender sends nothing: its masked shares were already released
/// to the receiver by the tape.
pub fn polymult_tami_sender_batch(
    ep: &mut Endpoint,
    leafs: &[LeafResult],
    plan: &ReusePlan,
    subsets: &[SubsetProductShares],
    interleaved: bool,
) -> Result<Vec<bool>> {
    if leafs.is_empty() || leafs.len() != subsets.len() {
        return Err(Error::BundleCount {
            expected: leafs.len(),
            got: subsets.len(),
        });
    }
    let width = num_merge_vars(leafs[0].n());
    let mut mine = PackedBits::zeros(leafs.len() * width);
    for (i, (leaf, subset)) in leafs.iter().zip(subsets).enumerate() {
        let vars = merge_variable_shares(leaf);
        check_plan(plan, subset, vars.len())?;
        masked_shares_into(&mut mine, i * width, &vars, plan, subset)?;
    }
    let theirs = if interleaved {
        ep.recv(TAG_MERGE_OPEN_TAMI)?
    } else {
        ep.exchange(TAG_MERGE_OPEN_TAMI, &mine)?
    };
    if theirs.len() != mine.len() {
        return Err(Error::MalformedFrame);
    }
    leafs
        .iter()
        .zip(subsets)
        .enumerate()
        .map(|(i, (_, subset))| {
            let mut d_mask = 0u64;
            for v in 0..width {
                if mine.get(i * width + v) ^ theirs.get(i * width + v) {
                    d_mask |= 1 << v;
                }
            }
            eval_plan_gf2(plan, subset, d_mask, true)
        })
        .collect()
}

/// One-round polynomial merge over a batch, receiver side. In interleaved
/// mode the opened differences come from the receiver's own masked shares
/// XORed with the tape releases (one `(lt, eq)` pair per chunk per item).
pub fn polymult_tami_receiver_batch(
    ep: &mut Endpoint,
    leafs: &[LeafResult],
    plan: &ReusePlan,
    subsets: &[SubsetProductShares],
    releases: Option<&[Vec<(bool, bool)>]>,
    interleaved: bool,
) -> Result<Vec<bool>> {
    if leafs.is_empty() || leafs.len() != subsets.len() {
        return Err(Error::BundleCount {
            expected: leafs.len(),
            got: subsets.len(),
        });
    }
    let n = leafs[0].n();
    let width = num_merge_vars(n);
    let mut mine = PackedBits::zeros(leafs.len() * width);
    for (i, (leaf, subset)) in leafs.iter().zip(subsets).enumerate() {
        let vars = merge_variable_shares(leaf);
        check_plan(plan, subset, vars.len())?;
        masked_shares_into(&mut mine, i * width, &vars, plan, subset)?;
    }

    let mut d_masks = vec![0u64; leafs.len()];
    if interleaved {
        let releases = releases.ok_or(Error::VariantMismatch("tape releases"))?;
        if releases.len() != leafs.len() {
            return Err(Error::BundleCount {
                expected: leafs.len(),
                got: releases.len(),
            });
        }
        ep.send(TAG_MERGE_OPEN_TAMI, &mine)?;
        for (i, rel) in releases.iter().enumerate() {
            if rel.len() != n {
                return Err(Error::BundleCount {
                    expected: n,
                    got: rel.len(),
                });
            }
            for v in 0..width {
                let release = if v < n { rel[v].0 } else { rel[v - n + 1].1 };
                if mine.get(i * width + v) ^ release {
                    d_masks[i] |= 1 << v;
                }
            }
        }
    } else {
        let theirs = ep.exchange(TAG_MERGE_OPEN_TAMI, &mine)?;
        if theirs.len() != mine.len() {
            return Err(Error::MalformedFrame);
        }
        for (i, mask) in d_masks.iter_mut().enumerate() {
            for v in 0..width {
                if mine.get(i * width + v) ^ theirs.get(i * width + v) {
                    *mask |= 1 << v;
                }
            }
        }
    }

    leafs
        .iter()
        .zip(subsets)
        .zip(&d_masks)
        .map(|((_, subset), &d_mask)| eval_plan_gf2(plan, subset, d_mask, false))
        .collect()
}

/// One-round polynomial merge, sender side, single comparison.
pub fn polymult_tami_sender(
    ep: &mut Endpoint,
    leaf: &LeafResult,
    plan: &ReusePlan,
    subset: &SubsetProductShares,
    interleaved: bool,
) -> Result<bool> {
    Ok(polymult_tami_sender_batch(
        ep,
        std::slice::from_ref(leaf),
        plan,
        std::slice::from_ref(subset),
        interleaved,
    )?[0])
}

/// One-round polynomial merge, receiver side, single comparison.
pub fn polymult_tami_receiver(
    ep: &mut Endpoint,
    leaf: &LeafResult,
    plan: &ReusePlan,
    subset: &SubsetProductShares,
    releases: Option<&[(bool, bool)]>,
    interleaved: bool,
) -> Result<bool> {
    let releases_vec = releases.map(|r| vec![r.to_vec()]);
    Ok(polymult_tami_receiver_batch(
        ep,
        std::slice::from_ref(leaf),
        plan,
        std::slice::from_ref(subset),
        releases_vec.as_deref(),
        interleaved,
    )?[0])
}

/// GF(2) polynomial evaluation over an arbitrary exponent matrix: the
/// Boolean collapse makes exponents irrelevant, so this is the plan-driven
/// masked evaluation with the party's raw variable shares.
pub fn eval_poly_gf2(
    ep: &mut Endpoint,
    role: Role,
    shares: &[bool],
    plan: &ReusePlan,
    subset: &SubsetProductShares,
) -> Result<bool> {
    check_plan(plan, subset, shares.len())?;
    let mut mine = PackedBits::zeros(shares.len());
    masked_shares_into(&mut mine, 0, shares, plan, subset)?;
    let theirs = ep.exchange(TAG_MERGE_OPEN_TAMI, &mine)?;
    if theirs.len() != shares.len() {
        return Err(Error::MalformedFrame);
    }
    let mut d_mask = 0u64;
    for v in 0..shares.len() {
        if mine.get(v) ^ theirs.get(v) {
            d_mask |= 1 << v;
        }
    }
    eval_plan_gf2(plan, subset, d_mask, role == Role::Sender)
}

fn binomial(n: u32, k: u32) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

/// Arithmetic polynomial evaluation over `Z_{2^width}` in one opening
/// round. Reconstruction equals `sum_i prod_j (x_j + y_j)^{E_{i,j}}`.
pub fn eval_poly_z2k(
    ep: &mut Endpoint,
    role: Role,
    matrix: &ExponentMatrix,
    shares: &[u64],
    rand: &MonomialShares,
) -> Result<u64> {
    let cols = matrix.num_cols();
    if shares.len() != cols || rand.columns() != cols {
        return Err(Error::PlanMismatch {
            plan_vars: rand.columns(),
            session_vars: cols,
        });
    }
    let width = rand.width;
    let wmask = width_mask(width);

    // Open d_j = v_j - r_j by exchanging local shares of the difference.
    // Columns with no positive exponent anywhere have no mask; their slot
    // carries a constant placeholder and is never evaluated.
    let mut frame = PackedBits::zeros(cols * width as usize);
    for (j, &s) in shares.iter().enumerate() {
        let local = match rand.column_mask_share(j) {
            Ok(r) => s.wrapping_sub(r) & wmask,
            Err(_) => 0,
        };
        frame.set_value(j * width as usize, width, local);
    }
    let theirs = ep.exchange(TAG_POLY_OPEN, &frame)?;
    if theirs.len() != frame.len() {
        return Err(Error::MalformedFrame);
    }
    let d: Vec<u64> = (0..cols)
        .map(|j| {
            frame
                .get_value(j * width as usize, width)
                .wrapping_add(theirs.get_value(j * width as usize, width))
                & wmask
        })
        .collect();

    let designated = role == Role::Sender;
    let mut acc = 0u64;
    for row in matrix.rows() {
        // Iterate the componentwise exponent splits 0 <= e <= row.
        let mut e = vec![0u32; cols];
        loop {
            let mut coef: u64 = 1;
            let mut public: u64 = 1;
            for j in 0..cols {
                coef = coef.wrapping_mul(binomial(row[j], e[j])) & wmask;
                for _ in 0..(row[j] - e[j]) {
                    public = public.wrapping_mul(d[j]) & wmask;
                }
            }
            let term = if e.iter().all(|&x| x == 0) {
                if designated {
                    coef.wrapping_mul(public) & wmask
                } else {
                    0
                }
            } else {
                coef.wrapping_mul(public).wrapping_mul(rand.share_for(&e)?) & wmask
            };
            acc = acc.wrapping_add(term) & wmask;

            // Odometer bounded by the row exponents.
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
        }
    }
    Ok(acc)
}

/// Plaintext oracle for the arithmetic polynomial.
pub fn plain_poly_z2k(matrix: &ExponentMatrix, values: &[u64], width: u8) -> u64 {
    let wmask = width_mask(width);
    let mut acc = 0u64;
    for row in matrix.rows() {
        let mut term = 1u64;
        for (j, &e) in row.iter().enumerate() {
            for _ in 0..e {
                term = term.wrapping_mul(values[j]) & wmask;
            }
        }
        acc = acc.wrapping_add(term) & wmask;
    }
    acc
}

/// Plaintext merge-variable vector (lt bits then eq bits from index 1).
pub fn merge_variable_values(lt: &[bool], eq: &[bool]) -> Vec<bool> {
    let mut vars = Vec::with_capacity(num_merge_vars(lt.len()));
    vars.extend_from_slice(lt);
    vars.extend_from_slice(&eq[1..]);
    vars
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::{BitShareVector, PackedBits};
    use crate::tape::{TapeSeed, TeeTape};
    use crate::transport::{run_pair, SchedulerMode};
    use rand::{Rng, SeedableRng};

    fn leaf_from_bits(lt: &[bool], eq: &[bool], share_seed: u64, role: Role) -> LeafResult {
        let mut rng = rand::rngs::StdRng::seed_from_u64(share_seed);
        let mask_lt: Vec<bool> = lt.iter().map(|_| rng.gen()).collect();
        let mask_eq: Vec<bool> = eq.iter().map(|_| rng.gen()).collect();
        let (s_lt, r_lt): (Vec<bool>, Vec<bool>) =
            lt.iter().zip(&mask_lt).map(|(&v, &m)| (m, v ^ m)).unzip();
        let (s_eq, r_eq): (Vec<bool>, Vec<bool>) =
            eq.iter().zip(&mask_eq).map(|(&v, &m)| (m, v ^ m)).unzip();
        match role {
            Role::Sender => LeafResult {
                lt: BitShareVector::new(PackedBits::from_bools(&s_lt), Role::Sender),
                eq: BitShareVector::new(PackedBits::from_bools(&s_eq), Role::Sender),
            },
            Role::Receiver => LeafResult {
                lt: BitShareVector::new(PackedBits::from_bools(&r_lt), Role::Receiver),
                eq: BitShareVector::new(PackedBits::from_bools(&r_eq), Role::Receiver),
            },
        }
    }

    fn run_baseline_merge(
        lt: &[bool],
        eq: &[bool],
        seed: u64,
    ) -> (bool, crate::transport::ChannelStats) {
        let n = lt.len();
        let ts = TapeSeed::from_u64(seed, 0);
        let mut tape_s = TeeTape::new(&ts, Role::Sender);
        let mut tape_r = TeeTape::new(&ts, Role::Receiver);
        let triples_s = tape_s.beaver_triples(2 * (n.max(1) - 1));
        let triples_r = tape_r.beaver_triples(2 * (n.max(1) - 1));
        let leaf_s = leaf_from_bits(lt, eq, seed ^ 0x5555, Role::Sender);
        let leaf_r = leaf_from_bits(lt, eq, seed ^ 0x5555, Role::Receiver);
        let (s, r, stats, _) = run_pair(
            SchedulerMode::Threaded,
            false,
            move |ep| merge_baseline(ep, Role::Sender, &leaf_s, &triples_s),
            move |ep| merge_baseline(ep, Role::Receiver, &leaf_r, &triples_r),
        )
        .unwrap();
        (s ^ r, stats)
    }

    #[test]
    fn matrix_examples() {
        let m1 = comparison_merge_matrix(1).unwrap();
        assert_eq!(m1.rows(), &[vec![1]]);

        let m3 = comparison_merge_matrix(3).unwrap();
        // Variables: lt0 lt1 lt2 eq1 eq2; rows most significant first.
        assert_eq!(
            m3.rows(),
            &[
                vec![0, 0, 1, 0, 0],
                vec![0, 1, 0, 0, 1],
                vec![1, 0, 0, 1, 1],
            ]
        );
    }

    #[test]
    fn matrix_plaintext_matches_integer_comparison() {
        for n in 1..=6usize {
            let matrix = comparison_merge_matrix(n).unwrap();
            let q = 2u8;
            let width = (q as usize * n) as u8;
            for x in 0..(1u64 << width.min(12)) {
                let y = x.wrapping_mul(0x9E3779B97F4A7C15) & width_mask(width);
                let xc = crate::bits::split_chunks(
                    crate::bits::RingValue::new(x, width).unwrap(),
                    q,
                )
                .unwrap();
                let yc = crate::bits::split_chunks(
                    crate::bits::RingValue::new(y, width).unwrap(),
                    q,
                )
                .unwrap();
                let (lt, eq) = crate::leaf::plain_leaf_bits(&yc, &xc);
                let vars = merge_variable_values(&lt, &eq);
                let mut out = false;
                for row in matrix.rows() {
                    let mut term = true;
                    for (v, &e) in row.iter().enumerate() {
                        if e > 0 {
                            term &= vars[v];
                        }
                    }
                    out ^= term;
                }
                assert_eq!(out, y < x, "n={n} x={x} y={y}");
                assert_eq!(plain_merge(&lt, &eq), y < x);
            }
        }
    }

    #[test]
    fn baseline_merge_exhaustive_n4() {
        // All assignments of the seven merge variables, eq_0 both ways.
        for assignment in 0..(1u32 << 8) {
            let lt: Vec<bool> = (0..4).map(|i| (assignment >> i) & 1 == 1).collect();
            let eq: Vec<bool> = (4..8).map(|i| (assignment >> i) & 1 == 1).collect();
            let (bit, stats) = run_baseline_merge(&lt, &eq, 1000 + assignment as u64);
            assert_eq!(bit, plain_merge(&lt, &eq), "lt={lt:?} eq={eq:?}");
            assert_eq!(stats.rounds, 2);
            assert_eq!(stats.total_bits(), 8 * 3);
        }
    }

    #[test]
    fn baseline_merge_round_and_bit_laws() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(77);
        for n in [1usize, 2, 3, 5, 8, 11, 16] {
            let lt: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
            let eq: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
            let (bit, stats) = run_baseline_merge(&lt, &eq, 2000 + n as u64);
            assert_eq!(bit, plain_merge(&lt, &eq));
            let expected_rounds = if n == 1 { 0 } else { (n as f64).log2().ceil() as u32 };
            assert_eq!(stats.rounds, expected_rounds, "n={n}");
            assert_eq!(stats.total_bits(), 8 * (n as u64 - 1), "n={n}");
        }
    }

    #[test]
    fn baseline_merge_batch_matches_singles() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(99);
        let n = 3;
        let count = 4;
        let plaintexts: Vec<(Vec<bool>, Vec<bool>)> = (0..count)
            .map(|_| {
                (
                    (0..n).map(|_| rng.gen()).collect(),
                    (0..n).map(|_| rng.gen()).collect(),
                )
            })
            .collect();
        let ts = TapeSeed::from_u64(4242, 0);
        let mut tape_s = TeeTape::new(&ts, Role::Sender);
        let mut tape_r = TeeTape::new(&ts, Role::Receiver);
        let triples_s = tape_s.beaver_triples(2 * (n - 1) * count);
        let triples_r = tape_r.beaver_triples(2 * (n - 1) * count);
        let leafs_s: Vec<_> = plaintexts
            .iter()
            .enumerate()
            .map(|(i, (lt, eq))| leaf_from_bits(lt, eq, 9000 + i as u64, Role::Sender))
            .collect();
        let leafs_r: Vec<_> = plaintexts
            .iter()
            .enumerate()
            .map(|(i, (lt, eq))| leaf_from_bits(lt, eq, 9000 + i as u64, Role::Receiver))
            .collect();
        let (s, r, stats, _) = run_pair(
            SchedulerMode::Threaded,
            false,
            move |ep| merge_baseline_batch(ep, Role::Sender, &leafs_s, &triples_s),
            move |ep| merge_baseline_batch(ep, Role::Receiver, &leafs_r, &triples_r),
        )
        .unwrap();
        assert_eq!(stats.rounds, 2); // ceil(log2 3) levels for every item
        for (i, (lt, eq)) in plaintexts.iter().enumerate() {
            assert_eq!(s[i] ^ r[i], plain_merge(lt, eq));
        }
    }

    #[test]
    fn insufficient_triples_detected() {
        let lt = vec![true, false, true, true];
        let eq = vec![false, true, true, false];
        let leaf_s = leaf_from_bits(&lt, &eq, 3, Role::Sender);
        let leaf_r = leaf_from_bits(&lt, &eq, 3, Role::Receiver);
        let ts = TapeSeed::from_u64(3, 0);
        let mut tape_s = TeeTape::new(&ts, Role::Sender);
        let mut tape_r = TeeTape::new(&ts, Role::Receiver);
        let triples_s = tape_s.beaver_triples(3);
        let triples_r = tape_r.beaver_triples(3);
        let (s, r, _, _) = run_pair(
            SchedulerMode::Threaded,
            false,
            move |ep| Ok(merge_baseline(ep, Role::Sender, &leaf_s, &triples_s)),
            move |ep| Ok(merge_baseline(ep, Role::Receiver, &leaf_r, &triples_r)),
        )
        .unwrap();
        assert!(matches!(s, Err(Error::InsufficientTriples { .. })));
        assert!(matches!(r, Err(Error::InsufficientTriples { .. })));
    }

    fn run_polymult(
        lt: &[bool],
        eq: &[bool],
        seed: u64,
        interleaved: bool,
    ) -> (bool, crate::transport::ChannelStats) {
        let n = lt.len();
        let plan = comparison_plan(n).unwrap();
        let ts = TapeSeed::from_u64(seed, 0);
        let mut tape_s = TeeTape::new(&ts, Role::Sender);
        let mut tape_r = TeeTape::new(&ts, Role::Receiver);

        // Tape-drawn sender shares keep the interleaved release path
        // consistent; the receiver shares are fixed to hit the target bits.
        let off_s = tape_s.leaf_offline(n, 2).unwrap();
        let off_r = tape_r.leaf_offline(n, 2).unwrap();
        let ss = tape_s
            .subset_product_shares_for(off_s.comparison, &plan)
            .unwrap();
        let rs = tape_r
            .subset_product_shares_for(off_r.comparison, &plan)
            .unwrap();

        let sc = off_s.sender_chunks().unwrap();
        let s_lt: Vec<bool> = sc.iter().map(|c| c.lt_share).collect();
        let s_eq: Vec<bool> = sc.iter().map(|c| c.eq_share).collect();
        let r_lt: Vec<bool> = (0..n).map(|j| lt[j] ^ s_lt[j]).collect();
        let r_eq: Vec<bool> = (0..n).map(|j| eq[j] ^ s_eq[j]).collect();

        let leaf_s = LeafResult {
            lt: BitShareVector::new(PackedBits::from_bools(&s_lt), Role::Sender),
            eq: BitShareVector::new(PackedBits::from_bools(&s_eq), Role::Sender),
        };
        let leaf_r = LeafResult {
            lt: BitShareVector::new(PackedBits::from_bools(&r_lt), Role::Receiver),
            eq: BitShareVector::new(PackedBits::from_bools(&r_eq), Role::Receiver),
        };
        let releases: Vec<(bool, bool)> = off_r
            .receiver_chunks()
            .unwrap()
            .iter()
            .map(|c| c.release.unwrap())
            .collect();

        let plan_s = Arc::clone(&plan);
        let plan_r = plan;
        let (s, r, stats, _) = run_pair(
            SchedulerMode::Threaded,
            false,
            move |ep| polymult_tami_sender(ep, &leaf_s, &plan_s, &ss, interleaved),
            move |ep| {
                polymult_tami_receiver(ep, &leaf_r, &plan_r, &rs, Some(&releases), interleaved)
            },
        )
        .unwrap();
        (s ^ r, stats)
    }

    #[test]
    fn polymult_pure_product_row() {
        // A single full-product row behaves as an AND.
        let matrix = ExponentMatrix::new(vec![vec![1, 1, 1]]).unwrap();
        let plan = build_reuse_plan(&matrix).unwrap();
        assert_eq!(plan.len(), 7);
        for seed in 0..16u64 {
            for assignment in 0..8u32 {
                let values: Vec<bool> = (0..3).map(|i| (assignment >> i) & 1 == 1).collect();
                let ts = TapeSeed::from_u64(9000 + seed, 0);
                let mut tape_s = TeeTape::new(&ts, Role::Sender);
                let mut tape_r = TeeTape::new(&ts, Role::Receiver);
                let ss = tape_s.subset_product_shares(&plan).unwrap();
                let rs = tape_r.subset_product_shares(&plan).unwrap();
                let mut rng = rand::rngs::StdRng::seed_from_u64(seed * 8 + assignment as u64);
                let s_sh: Vec<bool> = values.iter().map(|_| rng.gen()).collect();
                let r_sh: Vec<bool> = values.iter().zip(&s_sh).map(|(&v, &m)| v ^ m).collect();
                let plan_s = plan.clone();
                let plan_r = plan.clone();
                let (s, r, stats, _) = run_pair(
                    SchedulerMode::Threaded,
                    false,
                    move |ep| eval_poly_gf2(ep, Role::Sender, &s_sh, &plan_s, &ss),
                    move |ep| eval_poly_gf2(ep, Role::Receiver, &r_sh, &plan_r, &rs),
                )
                .unwrap();
                assert_eq!(s ^ r, values.iter().all(|&v| v), "seed={seed} a={assignment}");
                assert_eq!(stats.rounds, 1);
            }
        }
    }

    #[test]
    fn polymult_exhaustive_n4_with_seeds() {
        for seed in 0..64u64 {
            for assignment in 0..(1u32 << 7) {
                let lt: Vec<bool> = (0..4).map(|i| (assignment >> i) & 1 == 1).collect();
                let mut eq = vec![false; 4];
                for j in 1..4 {
                    eq[j] = (assignment >> (3 + j)) & 1 == 1;
                }
                let interleaved = (seed + assignment as u64) % 2 == 0;
                let (bit, stats) =
                    run_polymult(&lt, &eq, 3000 + seed * 131 + assignment as u64, interleaved);
                assert_eq!(bit, plain_merge(&lt, &eq), "seed={seed} a={assignment}");
                assert_eq!(stats.rounds, 1);
            }
        }
    }

    #[test]
    fn interleaving_halves_volume() {
        let lt = vec![true, false, true, true];
        let eq = vec![false, true, true, false];
        let (_, full) = run_polymult(&lt, &eq, 41, false);
        let (_, half) = run_polymult(&lt, &eq, 41, true);
        assert_eq!(full.total_bits(), 2 * (2 * 4 - 1));
        assert_eq!(half.total_bits(), 2 * 4 - 1);
        assert_eq!(half.bits_s2r, 0);
        assert_eq!(full.rounds, 1);
        assert_eq!(half.rounds, 1);
    }

    #[test]
    fn gf2_exponents_collapse() {
        // E=[[2,0,1]] evaluates identically to E=[[1,0,1]].
        let e_sq = ExponentMatrix::new(vec![vec![2, 0, 1]]).unwrap();
        let e_lin = ExponentMatrix::new(vec![vec![1, 0, 1]]).unwrap();
        let plan_sq = build_reuse_plan(&e_sq).unwrap();
        let plan_lin = build_reuse_plan(&e_lin).unwrap();
        assert_eq!(plan_sq, plan_lin);
        for assignment in 0..8u32 {
            let values: Vec<bool> = (0..3).map(|i| (assignment >> i) & 1 == 1).collect();
            let expected = values[0] & values[2];
            let ts = TapeSeed::from_u64(500 + assignment as u64, 0);
            let mut tape_s = TeeTape::new(&ts, Role::Sender);
            let mut tape_r = TeeTape::new(&ts, Role::Receiver);
            let ss = tape_s.subset_product_shares(&plan_sq).unwrap();
            let rs = tape_r.subset_product_shares(&plan_sq).unwrap();
            let s_sh = vec![false, true, false];
            let r_sh: Vec<bool> = values.iter().zip(&s_sh).map(|(&v, &m)| v ^ m).collect();
            let plan_s = plan_sq.clone();
            let plan_r = plan_sq.clone();
            let (s, r, _, _) = run_pair(
                SchedulerMode::Threaded,
                false,
                move |ep| eval_poly_gf2(ep, Role::Sender, &s_sh, &plan_s, &ss),
                move |ep| eval_poly_gf2(ep, Role::Receiver, &r_sh, &plan_r, &rs),
            )
            .unwrap();
            assert_eq!(s ^ r, expected);
        }
    }

    #[test]
    fn z2k_squaring_example() {
        // width 16, E=[[2]], x+y=3: reconstruction is 9 for any seed.
        let matrix = ExponentMatrix::new(vec![vec![2]]).unwrap();
        for seed in 0..32u64 {
            let ts = TapeSeed::from_u64(600 + seed, 0);
            let mut tape_s = TeeTape::new(&ts, Role::Sender);
            let mut tape_r = TeeTape::new(&ts, Role::Receiver);
            let ms = tape_s.poly_randomness(&matrix, 16).unwrap();
            let mr = tape_r.poly_randomness(&matrix, 16).unwrap();
            let x = 0xFFFFu64 & (seed.wrapping_mul(0x12345));
            let y = 3u64.wrapping_sub(x) & 0xFFFF;
            let m_s = matrix.clone();
            let m_r = matrix.clone();
            let (s, r, stats, _) = run_pair(
                SchedulerMode::Threaded,
                false,
                move |ep| eval_poly_z2k(ep, Role::Sender, &m_s, &[x], &ms),
                move |ep| eval_poly_z2k(ep, Role::Receiver, &m_r, &[y], &mr),
            )
            .unwrap();
            assert_eq!(s.wrapping_add(r) & 0xFFFF, 9);
            assert_eq!(stats.rounds, 1);
        }
    }

    #[test]
    fn z2k_random_matrices_match_plaintext() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(90);
        for case in 0..100u64 {
            let cols = rng.gen_range(1..=3);
            let rows = rng.gen_range(1..=3);
            let mut data = Vec::new();
            for _ in 0..rows {
                loop {
                    let row: Vec<u32> = (0..cols).map(|_| rng.gen_range(0..=2)).collect();
                    if row.iter().any(|&e| e > 0) {
                        data.push(row);
                        break;
                    }
                }
            }
            let matrix = ExponentMatrix::new(data).unwrap();
            let width = 16u8;
            let values: Vec<u64> = (0..cols).map(|_| rng.gen::<u64>() & 0xFFFF).collect();
            let xs: Vec<u64> = values.iter().map(|_| rng.gen::<u64>() & 0xFFFF).collect();
            let ys: Vec<u64> = values
                .iter()
                .zip(&xs)
                .map(|(&v, &x)| v.wrapping_sub(x) & 0xFFFF)
                .collect();

            let ts = TapeSeed::from_u64(700 + case, 0);
            let mut tape_s = TeeTape::new(&ts, Role::Sender);
            let mut tape_r = TeeTape::new(&ts, Role::Receiver);
            let ms = tape_s.poly_randomness(&matrix, width).unwrap();
            let mr = tape_r.poly_randomness(&matrix, width).unwrap();
            let m_s = matrix.clone();
            let m_r = matrix.clone();
            let (s, r, _, _) = run_pair(
                SchedulerMode::Threaded,
                false,
                move |ep| eval_poly_z2k(ep, Role::Sender, &m_s, &xs, &ms),
                move |ep| eval_poly_z2k(ep, Role::Receiver, &m_r, &ys, &mr),
            )
            .unwrap();
            let expected = plain_poly_z2k(&matrix, &values, width);
            assert_eq!(s.wrapping_add(r) & width_mask(width), expected, "case {case}");
        }
    }

    #[test]
    fn subset_instances_are_shared_across_rows() {
        // Structural reuse check: the number of distinct subset instances
        // referenced by all rows equals the plan size, and subsets shared
        // between rows resolve to the same index.
        let matrix = comparison_merge_matrix(4).unwrap();
        let plan = build_reuse_plan(&matrix).unwrap();
        let mut used = std::collections::HashSet::new();
        for row in 0..plan.num_rows() {
            for term in plan.row_terms(row) {
                if let Some(idx) = term.rand {
                    used.insert(idx);
                }
            }
        }
        assert_eq!(used.len(), plan.len());
        // eq_3's singleton appears in three rows and maps to one entry.
        let v = eq_var(4, 3);
        let idx = plan.subset_index(1u64 << v).unwrap();
        let mut rows_using = 0;
        for row in 0..plan.num_rows() {
            if plan.row_terms(row).iter().any(|t| t.rand == Some(idx)) {
                rows_using += 1;
            }
        }
        assert_eq!(rows_using, 3);
    }
}
