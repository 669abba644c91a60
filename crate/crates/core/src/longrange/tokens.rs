//! Long-range match finding and the token stream it produces.

use super::rolling::{bucket, RollingHash};
use super::{LrError, LrParams};
use crate::varint;

const EMPTY: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Literal(Vec<u8>),
    /// Copy `length` bytes starting `distance` bytes back. `distance < length`
    /// is legal and repeats the last `distance` bytes.
    Match { distance: u64, length: u64 },
}

impl Token {
    pub fn len(&self) -> u64 {
        match self {
            Token::Literal(bytes) => bytes.len() as u64,
            Token::Match { length, .. } => *length,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    /// Matches shorter than this are rejected by the decoder.
    pub min_match: u32,
    pub tokens: Vec<Token>,
}

impl TokenStream {
    /// A stream built by hand; any non-empty match length is accepted.
    pub fn from_tokens(tokens: Vec<Token>) -> Self {
        Self {
            min_match: 1,
            tokens,
        }
    }

    /// Total number of bytes the stream decodes to.
    pub fn decoded_len(&self) -> u64 {
        self.tokens.iter().map(Token::len).sum()
    }

    /// Bytes reproduced by match tokens.
    pub fn matched_len(&self) -> u64 {
        self.tokens
            .iter()
            .filter_map(|t| match t {
                Token::Match { length, .. } => Some(*length),
                Token::Literal(_) => None,
            })
            .sum()
    }
}

/// Bucketed hash table: every bucket holds up to `chain` positions, most recent first.
struct ChainTable {
    bits: u32,
    chain: usize,
    slots: Vec<u32>,
}

impl ChainTable {
    fn new(bits: u32, chain: usize) -> Self {
        Self {
            bits,
            chain,
            slots: vec![EMPTY; (1usize << bits) * chain],
        }
    }

    #[inline]
    fn bucket(&self, hash: u64) -> &[u32] {
        let start = bucket(hash, self.bits) * self.chain;
        &self.slots[start..start + self.chain]
    }

    #[inline]
    fn insert(&mut self, hash: u64, pos: u32) {
        let start = bucket(hash, self.bits) * self.chain;
        let slots = &mut self.slots[start..start + self.chain];
        slots.copy_within(..self.chain - 1, 1);
        slots[0] = pos;
    }
}

/// Table size adapts to the input so small inputs do not pay for a large table.
fn table_bits(len: usize, max_bits: u32) -> u32 {
    let needed = usize::BITS - len.max(1).leading_zeros();
    needed.clamp(16, max_bits)
}

#[inline]
fn common_prefix(a: &[u8], b: &[u8]) -> usize {
    let n = a.len().min(b.len());
    let mut i = 0;
    while i + 8 <= n {
        let x = u64::from_le_bytes(a[i..i + 8].try_into().unwrap());
        let y = u64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        if x != y {
            return i + ((x ^ y).trailing_zeros() / 8) as usize;
        }
        i += 8;
    }
    while i < n && a[i] == b[i] {
        i += 1;
    }
    i
}

/// Greedy left-to-right long-range parse.
///
/// # Panics
///
/// If `data` is 4 GiB or larger; positions are stored as `u32`.
pub fn lr_encode(data: &[u8], params: &LrParams) -> TokenStream {
    assert!(
        data.len() < EMPTY as usize,
        "long-range encoder input must be smaller than 4 GiB"
    );
    let k = params.min_match() as usize;
    let mut tokens = Vec::new();
    if data.len() < k {
        if !data.is_empty() {
            tokens.push(Token::Literal(data.to_vec()));
        }
        return TokenStream {
            min_match: params.min_match(),
            tokens,
        };
    }

    let mut table = ChainTable::new(
        table_bits(data.len(), params.hash_bits()),
        params.max_chain() as usize,
    );
    let mut hash = RollingHash::new(k);
    hash.reset(&data[..k]);
    let mut pos = 0usize;
    let mut literal_start = 0usize;

    while pos + k <= data.len() {
        let h = hash.value();
        let mut best_len = 0usize;
        let mut best_pos = 0usize;
        for &cand in table.bucket(h) {
            if cand == EMPTY {
                break;
            }
            let cand = cand as usize;
            let len = common_prefix(&data[cand..], &data[pos..]);
            if len >= k && len > best_len {
                best_len = len;
                best_pos = cand;
            }
        }

        if best_len >= k {
            if literal_start < pos {
                tokens.push(Token::Literal(data[literal_start..pos].to_vec()));
            }
            tokens.push(Token::Match {
                distance: (pos - best_pos) as u64,
                length: best_len as u64,
            });
            let end = pos + best_len;
            let mut p = pos;
            while p < end && p + k <= data.len() {
                let ph = if p == pos { h } else { RollingHash::full(&data[p..p + k]) };
                table.insert(ph, p as u32);
                p += k;
            }
            pos = end;
            literal_start = pos;
            if pos + k <= data.len() {
                hash.reset(&data[pos..pos + k]);
            }
        } else {
            table.insert(h, pos as u32);
            if pos + k < data.len() {
                hash.roll(data[pos], data[pos + k]);
            }
            pos += 1;
        }
    }
    if literal_start < data.len() {
        tokens.push(Token::Literal(data[literal_start..].to_vec()));
    }
    TokenStream {
        min_match: params.min_match(),
        tokens,
    }
}

pub fn lr_decode(stream: &TokenStream) -> Result<Vec<u8>, LrError> {
    let min_len = u64::from(stream.min_match.max(1));
    let mut out: Vec<u8> = Vec::with_capacity(stream.decoded_len().min(1 << 30) as usize);
    for (index, token) in stream.tokens.iter().enumerate() {
        match token {
            Token::Literal(bytes) => {
                if bytes.is_empty() {
                    return Err(LrError::BadLength { index, length: 0 });
                }
                out.extend_from_slice(bytes);
            }
            &Token::Match { distance, length } => {
                if length < min_len {
                    return Err(LrError::BadLength { index, length });
                }
                if distance == 0 || distance > out.len() as u64 {
                    return Err(LrError::BadDistance {
                        index,
                        distance,
                        available: out.len() as u64,
                    });
                }
                let length = usize::try_from(length)
                    .map_err(|_| LrError::BadLength { index, length })?;
                let start = out.len() - distance as usize;
                out.try_reserve(length)
                    .map_err(|_| LrError::BadLength { index, length: length as u64 })?;
                let mut copied = 0usize;
                while copied < length {
                    let src = start + copied;
                    let n = (length - copied).min(out.len() - src);
                    out.extend_from_within(src..src + n);
                    copied += n;
                }
            }
        }
    }
    Ok(out)
}

/// Serialized layout: `varint total_len, varint token_count`, then per token a
/// varint `len << 1 | is_match` followed by the literal bytes or a varint
/// distance, then a little-endian CRC-32 of the decoded data.
pub(crate) fn serialize(stream: &TokenStream, crc: u32) -> Vec<u8> {
    let literal_bytes: usize = stream
        .tokens
        .iter()
        .map(|t| match t {
            Token::Literal(b) => b.len(),
            Token::Match { .. } => 0,
        })
        .sum();
    let mut out = Vec::with_capacity(literal_bytes + stream.tokens.len() * 6 + 24);
    varint::write_u64(&mut out, stream.decoded_len());
    varint::write_u64(&mut out, stream.tokens.len() as u64);
    for token in &stream.tokens {
        match token {
            Token::Literal(bytes) => {
                varint::write_u64(&mut out, (bytes.len() as u64) << 1);
                out.extend_from_slice(bytes);
            }
            Token::Match { distance, length } => {
                varint::write_u64(&mut out, (length << 1) | 1);
                varint::write_u64(&mut out, *distance);
            }
        }
    }
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Inverse of [`serialize`]; returns the stream, the declared length and the CRC.
pub(crate) fn deserialize(buf: &[u8], min_match: u32) -> Result<(TokenStream, u64, u32), LrError> {
    let corrupt = |what: &str| LrError::CorruptPayload(what.to_string());
    let mut pos = 0usize;
    let total = varint::read_u64(buf, &mut pos).ok_or_else(|| corrupt("missing length"))?;
    let count = varint::read_u64(buf, &mut pos).ok_or_else(|| corrupt("missing token count"))?;
    // Every token takes at least one byte.
    if count > buf.len() as u64 {
        return Err(corrupt("token count exceeds payload"));
    }
    let mut tokens = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let head = varint::read_u64(buf, &mut pos).ok_or_else(|| corrupt("truncated token"))?;
        let len = head >> 1;
        if head & 1 == 1 {
            let distance =
                varint::read_u64(buf, &mut pos).ok_or_else(|| corrupt("truncated distance"))?;
            tokens.push(Token::Match {
                distance,
                length: len,
            });
        } else {
            let end = usize::try_from(len)
                .ok()
                .and_then(|l| pos.checked_add(l))
                .filter(|&end| end <= buf.len())
                .ok_or_else(|| corrupt("truncated literal"))?;
            tokens.push(Token::Literal(buf[pos..end].to_vec()));
            pos = end;
        }
    }
    if buf.len() != pos + 4 {
        return Err(corrupt("bad trailer"));
    }
    let crc = u32::from_le_bytes(buf[pos..].try_into().unwrap());
    Ok((TokenStream { min_match, tokens }, total, crc))
}
