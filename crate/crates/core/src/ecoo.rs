//! Enhanced COO stream codec.
//!
//! A vector is cut into groups of `G` elements. Every non-zero element of a
//! group becomes a `(value, offset, eog)` triplet, where `offset` is its
//! absolute position inside the group and `eog` marks the group's last
//! triplet. A group with no non-zeros keeps a single zero placeholder so the
//! group boundary survives compression. Weight triplets carry one more flag,
//! `eok`, on the last triplet of a kernel.
//!
//! 16-bit values travel as two 8-bit payloads with equal offsets, high half
//! first. The high half is sign-carrying, the low half is an unsigned byte.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{Precision, Scalar};

pub const DEFAULT_GROUP_LEN: usize = 16;
pub const MAX_GROUP_LEN: usize = 256;

/// One compressed element (or one half of a 16-bit element).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct EcooTriplet {
    pub value: i8,
    pub offset: u8,
    pub eog: bool,
    pub eok: bool,
    pub tag16: bool,
    pub hi: bool,
}

/// An 8-bit operand widened for the multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lane {
    pub value: i16,
    /// High half of a 16-bit value; its products are shifted left by 8.
    pub high: bool,
}

impl EcooTriplet {
    /// The all-zero-group placeholder. Halves of 16-bit values may hold a
    /// zero byte, so only untagged zeros count.
    pub fn is_placeholder(&self) -> bool {
        !self.tag16 && self.value == 0
    }

    pub fn lane(&self) -> Lane {
        let value = if self.tag16 && !self.hi {
            self.value as u8 as i16
        } else {
            self.value as i16
        };
        Lane {
            value,
            high: self.tag16 && self.hi,
        }
    }

    fn placeholder(group_len: usize) -> Self {
        EcooTriplet {
            value: 0,
            offset: (group_len - 1) as u8,
            eog: true,
            ..Default::default()
        }
    }
}

/// Aligned operand pair handed from selection to the multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AlignedPair {
    pub w: i16,
    pub f: i16,
    /// 0, 8 or 16.
    pub shift: u8,
}

impl AlignedPair {
    pub fn from_lanes(w: Lane, f: Lane) -> Self {
        AlignedPair {
            w: w.value,
            f: f.value,
            shift: 8 * (w.high as u8 + f.high as u8),
        }
    }

    pub fn product(&self) -> i64 {
        (self.w as i64 * self.f as i64) << self.shift
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamKind {
    Feature,
    Weight,
}

pub fn check_group_len(group_len: usize) -> Result<()> {
    if group_len == 0 || group_len > MAX_GROUP_LEN {
        return Err(invalid(format!("group length {group_len} outside [1, {MAX_GROUP_LEN}]")));
    }
    Ok(())
}

/// Splits `values` into consecutive groups of `group_len`; the last group
/// may be shorter.
pub fn partition_groups<T>(values: &[T], group_len: usize) -> Result<Vec<&[T]>> {
    check_group_len(group_len)?;
    Ok(values.chunks(group_len).collect())
}

fn split16(v: i32) -> (i8, i8) {
    let bits = v as i16;
    ((bits >> 8) as i8, (bits & 0xff) as u8 as i8)
}

fn join16(hi: i8, lo: i8) -> i32 {
    hi as i32 * 256 + lo as u8 as i32
}

/// Encodes one group. `is_last_of_kernel` sets `eok` on its final triplet.
pub fn encode_group(group: &[Scalar], group_len: usize, is_last_of_kernel: bool) -> Result<Vec<EcooTriplet>> {
    check_group_len(group_len)?;
    if group.len() > group_len {
        return Err(invalid(format!(
            "group of {} elements exceeds group length {group_len}",
            group.len()
        )));
    }
    let mut out = Vec::new();
    for (offset, s) in group.iter().enumerate().filter(|(_, s)| !s.is_zero()) {
        let offset = offset as u8;
        match s.precision() {
            Precision::Bits8 => out.push(EcooTriplet {
                value: s.value() as i8,
                offset,
                ..Default::default()
            }),
            Precision::Bits16 => {
                let (hi, lo) = split16(s.value());
                out.push(EcooTriplet {
                    value: hi,
                    offset,
                    tag16: true,
                    hi: true,
                    ..Default::default()
                });
                out.push(EcooTriplet {
                    value: lo,
                    offset,
                    tag16: true,
                    ..Default::default()
                });
            }
        }
    }
    if out.is_empty() {
        out.push(EcooTriplet::placeholder(group_len));
    }
    let last = out.last_mut().expect("non-empty");
    last.eog = true;
    last.eok = is_last_of_kernel;
    Ok(out)
}

/// Bit layout of a packed triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletLayout {
    pub kind: StreamKind,
    pub offset_bits: u32,
    pub mixed: bool,
}

impl TripletLayout {
    pub fn new(kind: StreamKind, group_len: usize, mixed: bool) -> Self {
        let needed = usize::BITS - (group_len.max(1) - 1).leading_zeros();
        TripletLayout {
            kind,
            offset_bits: needed.max(4),
            mixed,
        }
    }

    /// 13 bits for features, 14 for weights, plus one tag bit when mixed
    /// precision is enabled.
    pub fn bits(&self) -> u32 {
        8 + self.offset_bits + 1 + (self.kind == StreamKind::Weight) as u32 + self.mixed as u32
    }
}

/// An encoded vector: the concatenation of its encoded groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressedStream {
    pub triplets: Vec<EcooTriplet>,
    pub group_len: usize,
    pub kind: StreamKind,
    /// Mixed-precision tagging enabled for this stream's layout.
    pub mixed: bool,
    /// Source length of each group, needed to restore short groups.
    pub group_sizes: Vec<usize>,
}

impl CompressedStream {
    /// Encodes `values` chunked by `group_len`.
    pub fn encode(values: &[Scalar], group_len: usize, kind: StreamKind, mixed: bool) -> Result<Self> {
        Self::from_groups(partition_groups(values, group_len)?, group_len, kind, mixed)
    }

    /// Encodes pre-cut groups in order. Weight streams get `eok` on the final
    /// triplet.
    pub fn from_groups<'a, I>(groups: I, group_len: usize, kind: StreamKind, mixed: bool) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [Scalar]>,
    {
        let groups: Vec<&[Scalar]> = groups.into_iter().collect();
        let mut triplets = Vec::new();
        let n = groups.len();
        for (i, g) in groups.iter().enumerate() {
            let eok = kind == StreamKind::Weight && i + 1 == n;
            triplets.extend(encode_group(g, group_len, eok)?);
        }
        Ok(CompressedStream {
            triplets,
            group_len,
            kind,
            mixed,
            group_sizes: groups.iter().map(|g| g.len()).collect(),
        })
    }

    pub fn layout(&self) -> TripletLayout {
        TripletLayout::new(self.kind, self.group_len, self.mixed)
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn footprint_bits(&self) -> u64 {
        stream_footprint_bits(self)
    }

    /// Iterates the encoded groups (split after each `eog`).
    pub fn groups(&self) -> impl Iterator<Item = &[EcooTriplet]> {
        self.triplets.split_inclusive(|t| t.eog)
    }

    pub fn decode(&self) -> Result<Vec<Scalar>> {
        decode_stream(self)
    }

    pub fn pack(&self) -> Vec<u8> {
        pack_triplets(&self.triplets, self.layout())
    }
}

/// Restores the dense vector, validating every stream invariant on the way.
pub fn decode_stream(stream: &CompressedStream) -> Result<Vec<Scalar>> {
    check_group_len(stream.group_len)?;
    let g = stream.group_len;
    let ts = &stream.triplets;
    let mut out = Vec::with_capacity(stream.group_sizes.iter().sum());
    let mut i = 0;
    for (gi, &size) in stream.group_sizes.iter().enumerate() {
        if size > g {
            return Err(invalid(format!("group {gi} declares {size} elements, G is {g}")));
        }
        let base = out.len();
        out.resize(base + size, Scalar::ZERO);
        let mut last_offset: Option<u8> = None;
        loop {
            let Some(t) = ts.get(i) else {
                return Err(Error::Format {
                    index: i,
                    reason: format!("stream ends inside group {gi} (missing eog)"),
                });
            };
            let fail = |reason: String| Error::Format { index: i, reason };
            if t.eok && (stream.kind == StreamKind::Feature || !t.eog) {
                return Err(fail("eok outside the final triplet of a weight group".into()));
            }
            if t.offset as usize >= g {
                return Err(fail(format!("offset {} >= group length {g}", t.offset)));
            }
            if t.is_placeholder() {
                if last_offset.is_some() || !t.eog {
                    return Err(fail("placeholder must be the only triplet of its group".into()));
                }
                i += 1;
                break;
            }
            if last_offset.is_some_and(|prev| t.offset <= prev) {
                return Err(fail(format!("offset regression to {}", t.offset)));
            }
            if t.offset as usize >= size {
                return Err(fail(format!("offset {} beyond group size {size}", t.offset)));
            }
            let value = if t.tag16 {
                if !t.hi {
                    return Err(fail("low half without a preceding high half".into()));
                }
                if t.eog {
                    return Err(fail("eog on a high half".into()));
                }
                let lo = ts.get(i + 1).filter(|l| l.tag16 && !l.hi && l.offset == t.offset).ok_or_else(|| {
                    Error::Format {
                        index: i + 1,
                        reason: "high half not followed by its low half".into(),
                    }
                })?;
                if lo.eok && (stream.kind == StreamKind::Feature || !lo.eog) {
                    return Err(Error::Format {
                        index: i + 1,
                        reason: "eok outside the final triplet of a weight group".into(),
                    });
                }
                i += 1;
                Scalar::new(join16(t.value, lo.value), Precision::Bits16).expect("two bytes fit 16 bits")
            } else {
                Scalar::int8(t.value)
            };
            out[base + t.offset as usize] = value;
            last_offset = Some(t.offset);
            let eog = ts[i].eog;
            i += 1;
            if eog {
                break;
            }
        }
    }
    if i != ts.len() {
        return Err(Error::Format {
            index: i,
            reason: format!("{} trailing triplets after the last declared group", ts.len() - i),
        });
    }
    if stream.kind == StreamKind::Weight && !ts.is_empty() && !ts[ts.len() - 1].eok {
        return Err(Error::Format {
            index: ts.len() - 1,
            reason: "weight stream lacks end-of-kernel".into(),
        });
    }
    Ok(out)
}

pub fn stream_footprint_bits(stream: &CompressedStream) -> u64 {
    stream.triplets.len() as u64 * stream.layout().bits() as u64
}

/// Packs triplets little-endian, least significant bit first, field order
/// `value[8] | offset | eog | eok (weights) | tag16 (mixed)`.
pub fn pack_triplets(triplets: &[EcooTriplet], layout: TripletLayout) -> Vec<u8> {
    let total = triplets.len() * layout.bits() as usize;
    let mut out = vec![0u8; total.div_ceil(8)];
    let mut pos = 0usize;
    let mut put = |value: u32, width: u32| {
        for b in 0..width {
            if value >> b & 1 == 1 {
                out[pos / 8] |= 1 << (pos % 8);
            }
            pos += 1;
        }
    };
    for t in triplets {
        put(t.value as u8 as u32, 8);
        put(t.offset as u32, layout.offset_bits);
        put(t.eog as u32, 1);
        if layout.kind == StreamKind::Weight {
            put(t.eok as u32, 1);
        }
        if layout.mixed {
            put(t.tag16 as u32, 1);
        }
    }
    out
}

/// Inverse of [`pack_triplets`]. The `hi` flag is not on the wire; tagged
/// triplets alternate high, low.
pub fn unpack_triplets(bytes: &[u8], count: usize, layout: TripletLayout) -> Result<Vec<EcooTriplet>> {
    let need = (count * layout.bits() as usize).div_ceil(8);
    if bytes.len() < need {
        return Err(Error::Format {
            index: 0,
            reason: format!("{count} triplets need {need} bytes, got {}", bytes.len()),
        });
    }
    let mut pos = 0usize;
    let mut get = |width: u32| {
        let mut v = 0u32;
        for b in 0..width {
            v |= ((bytes[pos / 8] >> (pos % 8) & 1) as u32) << b;
            pos += 1;
        }
        v
    };
    let mut expect_lo = false;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let value = get(8) as u8 as i8;
        let offset = get(layout.offset_bits);
        if offset > u8::MAX as u32 {
            return Err(Error::Format {
                index: out.len(),
                reason: format!("offset {offset} does not fit a group"),
            });
        }
        let eog = get(1) == 1;
        let eok = layout.kind == StreamKind::Weight && get(1) == 1;
        let tag16 = layout.mixed && get(1) == 1;
        let hi = tag16 && !expect_lo;
        expect_lo = tag16 && hi;
        out.push(EcooTriplet {
            value,
            offset: offset as u8,
            eog,
            eok,
            tag16,
            hi,
        });
    }
    Ok(out)
}

/// Untimed reference for pair selection: intersects two encoded groups by
/// offset and expands 16-bit operands into their shifted 8-bit sub-products.
pub fn aligned_pairs_oracle(wgroup: &[EcooTriplet], fgroup: &[EcooTriplet]) -> Vec<AlignedPair> {
    fn lanes_by_offset(group: &[EcooTriplet]) -> BTreeMap<u8, Vec<Lane>> {
        let mut m: BTreeMap<u8, Vec<Lane>> = BTreeMap::new();
        for t in group.iter().filter(|t| !t.is_placeholder()) {
            m.entry(t.offset).or_default().push(t.lane());
        }
        m
    }
    let w = lanes_by_offset(wgroup);
    let f = lanes_by_offset(fgroup);
    let mut out = Vec::new();
    for (off, wl) in &w {
        let Some(fl) = f.get(off) else { continue };
        for &a in wl {
            for &b in fl {
                out.push(AlignedPair::from_lanes(a, b));
            }
        }
    }
    out
}
