//! Small LZSS coder used as the default second stage.
//!
//! Stream layout: varint decoded length, then blocks of at most `BLOCK` input
//! bytes. Each block starts with `varint (raw_len << 1 | stored)`. A stored
//! block is followed by its raw bytes. A coded block is followed by `varint
//! coded_len` and groups of one flag byte plus up to eight items: flag bit `i`
//! (LSB first) set means item `i` is a match encoded as `u16 LE distance - 1`
//! and `u8 length - MIN_MATCH`, clear means a single literal byte. Matches may
//! reach back into earlier blocks. Blocks that would not shrink are stored, so
//! incompressible input costs a few bytes per block instead of one bit per byte.

use super::LrError;
use crate::varint;

pub const WINDOW: usize = 1 << 16;
pub const MIN_MATCH: usize = 4;
pub const MAX_MATCH: usize = MIN_MATCH + 255;
pub const BLOCK: usize = 1 << 16;

const HASH_BITS: u32 = 16;
const MAX_PROBES: usize = 32;
const NIL: u32 = u32::MAX;

#[inline]
fn hash4(bytes: &[u8]) -> usize {
    let v = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    (v.wrapping_mul(0x9e37_79b1) >> (32 - HASH_BITS)) as usize
}

struct Writer {
    out: Vec<u8>,
    flag_at: usize,
    items: u8,
}

impl Writer {
    fn item(&mut self, is_match: bool) {
        if self.items == 8 {
            self.items = 0;
        }
        if self.items == 0 {
            self.flag_at = self.out.len();
            self.out.push(0);
        }
        if is_match {
            self.out[self.flag_at] |= 1 << self.items;
        }
        self.items += 1;
    }
}

struct Matcher<'a> {
    data: &'a [u8],
    head: Vec<u32>,
    prev: Vec<u32>,
}

impl Matcher<'_> {
    fn insert(&mut self, p: usize) {
        if p + MIN_MATCH <= self.data.len() {
            let h = hash4(&self.data[p..]);
            self.prev[p % WINDOW] = self.head[h];
            self.head[h] = p as u32;
        }
    }

    /// Longest match for `pos` no longer than `limit`, as (length, distance).
    fn find(&self, pos: usize, limit: usize) -> (usize, usize) {
        let data = self.data;
        let (mut best_len, mut best_dist) = (0, 0);
        if limit < MIN_MATCH {
            return (0, 0);
        }
        let mut cand = self.head[hash4(&data[pos..])];
        let mut probes = 0;
        while cand != NIL && probes < MAX_PROBES {
            let c = cand as usize;
            if pos - c > WINDOW {
                break;
            }
            if data[c + best_len.min(limit - 1)] == data[pos + best_len.min(limit - 1)] {
                let mut len = 0;
                while len < limit && data[c + len] == data[pos + len] {
                    len += 1;
                }
                if len > best_len {
                    best_len = len;
                    best_dist = pos - c;
                    if len == limit {
                        break;
                    }
                }
            }
            let next = self.prev[c % WINDOW];
            // Chain entries are strictly decreasing; anything else is a
            // stale slot overwritten by a newer position.
            if next == NIL || next as usize >= c {
                break;
            }
            cand = next;
            probes += 1;
        }
        (best_len, best_dist)
    }

    fn code_block(&mut self, start: usize, end: usize) -> Vec<u8> {
        let mut w = Writer {
            out: Vec::with_capacity(end - start + (end - start) / 8 + 1),
            flag_at: 0,
            items: 0,
        };
        let mut pos = start;
        while pos < end {
            let (len, dist) = self.find(pos, (end - pos).min(MAX_MATCH));
            if len >= MIN_MATCH {
                w.item(true);
                w.out.extend_from_slice(&((dist - 1) as u16).to_le_bytes());
                w.out.push((len - MIN_MATCH) as u8);
                for p in pos..pos + len {
                    self.insert(p);
                }
                pos += len;
            } else {
                w.item(false);
                w.out.push(self.data[pos]);
                self.insert(pos);
                pos += 1;
            }
        }
        w.out
    }
}

pub fn encode(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() / 2 + 16);
    varint::write_u64(&mut out, data.len() as u64);
    let mut m = Matcher {
        data,
        head: vec![NIL; 1 << HASH_BITS],
        prev: vec![NIL; WINDOW],
    };
    let mut start = 0;
    while start < data.len() {
        let end = (start + BLOCK).min(data.len());
        let raw_len = (end - start) as u64;
        let coded = m.code_block(start, end);
        let mut coded_header = Vec::new();
        varint::write_u64(&mut coded_header, coded.len() as u64);
        if coded.len() + coded_header.len() < end - start {
            varint::write_u64(&mut out, raw_len << 1);
            out.extend_from_slice(&coded_header);
            out.extend_from_slice(&coded);
        } else {
            varint::write_u64(&mut out, raw_len << 1 | 1);
            out.extend_from_slice(&data[start..end]);
        }
        start = end;
    }
    out
}

pub fn decode(buf: &[u8]) -> Result<Vec<u8>, LrError> {
    let corrupt = |what: &str| LrError::CorruptPayload(format!("lzss: {what}"));
    let mut pos = 0usize;
    let len = varint::read_u64(buf, &mut pos).ok_or_else(|| corrupt("missing length"))?;
    // A match item expands at most MAX_MATCH bytes from 3 input bytes.
    if len > (buf.len() as u64).saturating_mul(MAX_MATCH as u64) {
        return Err(corrupt("declared length impossible for payload size"));
    }
    let len = len as usize;
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let header = varint::read_u64(buf, &mut pos).ok_or_else(|| corrupt("truncated block header"))?;
        let raw_len = header >> 1;
        if raw_len == 0 || raw_len > BLOCK as u64 || raw_len > (len - out.len()) as u64 {
            return Err(corrupt("bad block length"));
        }
        let block_end = out.len() + raw_len as usize;
        if header & 1 == 1 {
            let raw = buf
                .get(pos..pos + raw_len as usize)
                .ok_or_else(|| corrupt("truncated stored block"))?;
            out.extend_from_slice(raw);
            pos += raw.len();
            continue;
        }
        let coded_len = varint::read_u64(buf, &mut pos).ok_or_else(|| corrupt("truncated block header"))?;
        let coded_end = usize::try_from(coded_len)
            .ok()
            .and_then(|c| pos.checked_add(c))
            .filter(|&e| e <= buf.len())
            .ok_or_else(|| corrupt("truncated coded block"))?;
        while out.len() < block_end {
            let flags = *buf[..coded_end].get(pos).ok_or_else(|| corrupt("truncated flags"))?;
            pos += 1;
            for bit in 0..8 {
                if out.len() >= block_end {
                    break;
                }
                if flags & (1 << bit) != 0 {
                    let item = buf[..coded_end]
                        .get(pos..pos + 3)
                        .ok_or_else(|| corrupt("truncated match"))?;
                    pos += 3;
                    let dist = usize::from(u16::from_le_bytes([item[0], item[1]])) + 1;
                    let mlen = usize::from(item[2]) + MIN_MATCH;
                    if dist > out.len() || out.len() + mlen > block_end {
                        return Err(corrupt("match out of range"));
                    }
                    let start = out.len() - dist;
                    for i in 0..mlen {
                        out.push(out[start + i]);
                    }
                } else {
                    out.push(*buf[..coded_end].get(pos).ok_or_else(|| corrupt("truncated literal"))?);
                    pos += 1;
                }
            }
        }
        if pos != coded_end {
            return Err(corrupt("coded block length mismatch"));
        }
    }
    if pos != buf.len() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn repetitive_input_shrinks() {
        let data: Vec<u8> = b"the quick brown fox ".iter().cycle().take(10_000).copied().collect();
        let enc = encode(&data);
        assert!(enc.len() < 500, "{}", enc.len());
        assert_eq!(decode(&enc).unwrap(), data);
    }

    #[test]
    fn empty() {
        assert_eq!(decode(&encode(&[])).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn far_repeat_outside_window_is_not_referenced() {
        let mut data: Vec<u8> = (0..WINDOW + 100).map(|i| (i * 7 % 251) as u8).collect();
        data.extend_from_within(..50);
        assert_eq!(decode(&encode(&data)).unwrap(), data);
    }

    #[test]
    fn corrupt_streams_are_rejected() {
        let data: Vec<u8> = b"abcabcabcabcabcabc".to_vec();
        let enc = encode(&data);
        assert!(decode(&enc[..enc.len() - 1]).is_err());
        let mut extra = enc.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        // Coded block whose only match reaches before the start of output.
        assert!(decode(&[5, 10, 4, 0b1, 0x10, 0x00, 0x01]).is_err());
        // Stored block longer than the declared total.
        assert!(decode(&[2, 7, 1, 2, 3]).is_err());
    }

    #[test]
    fn incompressible_input_is_stored() {
        use rand::{RngCore, SeedableRng};
        let mut data = vec![0u8; 3 * BLOCK + 123];
        rand_chacha::ChaCha8Rng::seed_from_u64(1).fill_bytes(&mut data);
        let enc = encode(&data);
        assert!(enc.len() <= data.len() + 16, "{}", enc.len());
        assert_eq!(decode(&enc).unwrap(), data);
    }

    #[test]
    fn matches_reach_across_blocks() {
        use rand::{RngCore, SeedableRng};
        let mut data = vec![0u8; BLOCK - 10];
        rand_chacha::ChaCha8Rng::seed_from_u64(2).fill_bytes(&mut data);
        data.extend_from_within(100..2000);
        let enc = encode(&data);
        // The first block is stored; the repeat in the second block is coded
        // against it.
        assert!(enc.len() < BLOCK + 100, "{}", enc.len());
        assert_eq!(decode(&enc).unwrap(), data);
    }

    proptest! {
        #[test]
        fn round_trip(data in proptest::collection::vec(0u8..4, 0..5000)) {
            prop_assert_eq!(decode(&encode(&data)).unwrap(), data);
        }

        #[test]
        fn round_trip_multi_block(seed in any::<u64>(), len in 0usize..300_000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut data = Vec::with_capacity(len);
            while data.len() < len {
                if data.len() > 100 && rng.gen_bool(0.5) {
                    let from = rng.gen_range(0..data.len() - 50);
                    let n = rng.gen_range(4..500).min(data.len() - from);
                    let copy = data[from..from + n].to_vec();
                    data.extend_from_slice(&copy);
                } else {
                    let n = rng.gen_range(1..400);
                    data.extend((0..n).map(|_| rng.gen::<u8>()));
                }
            }
            data.truncate(len);
            prop_assert_eq!(decode(&encode(&data)).unwrap(), data);
        }
    }
}
