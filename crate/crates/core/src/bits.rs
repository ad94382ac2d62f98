//! Fixed-width integers, chunk decomposition, and XOR/arithmetic secret sharing.
//!
//! Bit vectors are stored packed, eight bits per byte, least-significant
//! first: bit `i` of the logical vector occupies bit `i % 8` of byte
//! `i / 8`. The same layout is the wire serialization used by transport
//! frames, so it is bit-exact and round-trips.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Party role in all two-party protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Sender,
    Receiver,
}

impl Role {
    pub fn peer(self) -> Role {
        match self {
            Role::Sender => Role::Receiver,
            Role::Receiver => Role::Sender,
        }
    }
}

/// Mask selecting the low `width` bits of a `u64`.
pub fn width_mask(width: u8) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// An unsigned integer reduced modulo `2^width`, `1 <= width <= 64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RingValue {
    value: u64,
    width: u8,
}

impl RingValue {
    /// Reduces `value` modulo `2^width`.
    pub fn new(value: u64, width: u8) -> Result<RingValue> {
        if width == 0 || width > 64 {
            return Err(Error::InvalidWidth(width));
        }
        Ok(RingValue {
            value: value & width_mask(width),
            width,
        })
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn width(&self) -> u8 {
        self.width
    }

    /// Most significant bit (the sign bit under two's complement).
    pub fn msb(&self) -> bool {
        (self.value >> (self.width - 1)) & 1 == 1
    }

    /// The low `k` bits as a plain integer.
    pub fn low(&self, k: u8) -> u64 {
        self.value & width_mask(k)
    }
}

/// Little-endian chunk decomposition: chunk 0 holds the least significant
/// `q` bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkVector {
    chunks: Vec<u8>,
    q: u8,
    width: u8,
}

/// Splits `x` into `width/q` chunks of `q` bits each.
pub fn split_chunks(x: RingValue, q: u8) -> Result<ChunkVector> {
    if q == 0 || q > 8 || x.width() % q != 0 {
        return Err(Error::ChunkWidth {
            q,
            width: x.width(),
        });
    }
    let n = (x.width() / q) as usize;
    let mask = width_mask(q);
    let chunks = (0..n)
        .map(|j| ((x.value() >> (j as u32 * q as u32)) & mask) as u8)
        .collect();
    Ok(ChunkVector {
        chunks,
        q,
        width: x.width(),
    })
}

impl ChunkVector {
    pub fn from_chunks(chunks: Vec<u8>, q: u8) -> Result<ChunkVector> {
        if q == 0 || q > 8 {
            return Err(Error::ChunkWidth { q, width: 0 });
        }
        let width = chunks.len() * q as usize;
        if width == 0 || width > 64 {
            return Err(Error::InvalidWidth(width.min(255) as u8));
        }
        for &c in &chunks {
            debug_assert!((c as u64) <= width_mask(q));
        }
        Ok(ChunkVector {
            chunks,
            q,
            width: width as u8,
        })
    }

    pub fn recompose(&self) -> RingValue {
        let mut value = 0u64;
        for (j, &c) in self.chunks.iter().enumerate() {
            value |= (c as u64) << (j as u32 * self.q as u32);
        }
        RingValue {
            value,
            width: self.width,
        }
    }

    pub fn n(&self) -> usize {
        self.chunks.len()
    }

    pub fn q(&self) -> u8 {
        self.q
    }

    pub fn chunk(&self, j: usize) -> u8 {
        self.chunks[j]
    }

    pub fn chunks(&self) -> &[u8] {
        &self.chunks
    }
}

/// Packed bit vector, least-significant-first within each byte.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedBits {
    bytes: Vec<u8>,
    len: usize,
}

impl PackedBits {
    pub fn new() -> PackedBits {
        PackedBits::default()
    }

    /// All-zero vector of `len` bits.
    pub fn zeros(len: usize) -> PackedBits {
        PackedBits {
            bytes: vec![0u8; len.div_ceil(8)],
            len,
        }
    }

    pub fn from_bools(bits: &[bool]) -> PackedBits {
        let mut v = PackedBits::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of bytes occupied by the packed payload.
    pub fn byte_len(&self) -> usize {
        self.bytes.len()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn push(&mut self, bit: bool) {
        if self.len % 8 == 0 {
            self.bytes.push(0);
        }
        let i = self.len;
        self.len += 1;
        self.set(i, bit);
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.bytes[i / 8] >> (i % 8)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        if bit {
            self.bytes[i / 8] |= 1 << (i % 8);
        } else {
            self.bytes[i / 8] &= !(1 << (i % 8));
        }
    }

    /// Reads `width <= 64` bits starting at `offset`, least significant first.
    pub fn get_value(&self, offset: usize, width: u8) -> u64 {
        let mut v = 0u64;
        for k in 0..width as usize {
            if self.get(offset + k) {
                v |= 1 << k;
            }
        }
        v
    }

    /// Writes the low `width` bits of `value` starting at `offset`.
    pub fn set_value(&mut self, offset: usize, width: u8, value: u64) {
        for k in 0..width as usize {
            self.set(offset + k, (value >> k) & 1 == 1);
        }
    }

    pub fn xor_in_place(&mut self, other: &PackedBits) -> Result<()> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                left: self.len,
                right: other.len,
            });
        }
        for (a, b) in self.bytes.iter_mut().zip(&other.bytes) {
            *a ^= b;
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Serialization: `u32` little-endian bit count followed by the packed
    /// payload bytes.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.bytes.len());
        out.extend_from_slice(&(self.len as u32).to_le_bytes());
        out.extend_from_slice(&self.bytes);
        out
    }

    pub fn from_wire(data: &[u8]) -> Result<PackedBits> {
        if data.len() < 4 {
            return Err(Error::MalformedFrame);
        }
        let len = u32::from_le_bytes([data[0], data[1], data[2], data[3]]) as usize;
        let payload = &data[4..];
        if payload.len() != len.div_ceil(8) {
            return Err(Error::MalformedFrame);
        }
        // Spare bits above `len` in the last byte must be zero.
        if len % 8 != 0 {
            let last = payload[payload.len() - 1];
            if last >> (len % 8) != 0 {
                return Err(Error::MalformedFrame);
            }
        }
        Ok(PackedBits {
            bytes: payload.to_vec(),
            len,
        })
    }
}

/// XOR-additive share of a bit vector held by one party.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitShareVector {
    pub bits: PackedBits,
    pub owner: Role,
}

impl BitShareVector {
    pub fn new(bits: PackedBits, owner: Role) -> BitShareVector {
        BitShareVector { bits, owner }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Splits `secret` into the XOR sharing `(mask, secret ^ mask)`; the first
/// share goes to the sender, the second to the receiver.
pub fn share_bits(secret: &PackedBits, mask: &PackedBits) -> Result<(BitShareVector, BitShareVector)> {
    if secret.len() != mask.len() {
        return Err(Error::LengthMismatch {
            left: secret.len(),
            right: mask.len(),
        });
    }
    let mut masked = secret.clone();
    masked.xor_in_place(mask)?;
    Ok((
        BitShareVector::new(mask.clone(), Role::Sender),
        BitShareVector::new(masked, Role::Receiver),
    ))
}

/// Bitwise XOR of two opposite-owner shares.
pub fn reconstruct(a: &BitShareVector, b: &BitShareVector) -> Result<PackedBits> {
    if a.owner == b.owner {
        return Err(Error::SameOwner(a.owner));
    }
    let mut out = a.bits.clone();
    out.xor_in_place(&b.bits)?;
    Ok(out)
}

/// Additive share in `Z_{2^width}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArithShare {
    value: u64,
    width: u8,
}

impl ArithShare {
    pub fn new(value: u64, width: u8) -> Result<ArithShare> {
        if width == 0 || width > 64 {
            return Err(Error::InvalidWidth(width));
        }
        Ok(ArithShare {
            value: value & width_mask(width),
            width,
        })
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn width(&self) -> u8 {
        self.width
    }
}

/// Addition modulo `2^width` of two shares of equal width.
pub fn reconstruct_arith(a: &ArithShare, b: &ArithShare) -> Result<u64> {
    if a.width != b.width {
        return Err(Error::LengthMismatch {
            left: a.width as usize,
            right: b.width as usize,
        });
    }
    Ok(a.value.wrapping_add(b.value) & width_mask(a.width))
}
