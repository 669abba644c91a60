//! Long-range deduplicating compressor.
//!
//! The first stage scans the whole input with a rolling hash over
//! `min_match`-byte windows and replaces repeated content with back-references
//! that may reach arbitrarily far back. The serialized token stream is then
//! handed to a second-stage [`BackendSpec`].
//!
//! Container layout (little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `LRC1` |
//! | 2 | version |
//! | 1 | backend id (0 identity, 1 lzss, 2 external) |
//! | 4 | min_match |
//! | 1 | reserved, zero |
//! | .. | backend payload |
//!
//! An empty input produces a header-only container.

mod external;
pub mod lzss;
pub mod rolling;
mod tokens;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tokens::{lr_decode, lr_encode, Token, TokenStream};

pub const MAGIC: &[u8; 4] = b"LRC1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum LrError {
    #[error("bad magic, not an LRC1 container")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown backend id {0}")]
    UnknownBackend(u8),
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),
    #[error("token {index}: distance {distance} reaches before stream start ({available} bytes decoded)")]
    BadDistance {
        index: usize,
        distance: u64,
        available: u64,
    },
    #[error("token {index}: invalid length {length}")]
    BadLength { index: usize, length: u64 },
    #[error("external backend `{command}` failed: {reason}")]
    ExternalBackendFailed { command: String, reason: String },
    #[error("container uses an external backend; a decompression command is required")]
    ExternalBackendRequired,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("input of {0} bytes is too large (limit 4 GiB)")]
    InputTooLarge(usize),
}

/// Long-range stage parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLrParams", into = "RawLrParams")]
pub struct LrParams {
    min_match: u32,
    hash_bits: u32,
    max_chain: u32,
}

#[derive(Serialize, Deserialize)]
struct RawLrParams {
    min_match: u32,
    hash_bits: u32,
    max_chain: u32,
}

impl TryFrom<RawLrParams> for LrParams {
    type Error = LrError;
    fn try_from(raw: RawLrParams) -> Result<Self, LrError> {
        LrParams::new(raw.min_match, raw.hash_bits, raw.max_chain)
    }
}

impl From<LrParams> for RawLrParams {
    fn from(p: LrParams) -> Self {
        RawLrParams {
            min_match: p.min_match,
            hash_bits: p.hash_bits,
            max_chain: p.max_chain,
        }
    }
}

impl Default for LrParams {
    fn default() -> Self {
        Self {
            min_match: 64,
            hash_bits: 22,
            max_chain: 4,
        }
    }
}

impl LrParams {
    pub fn new(min_match: u32, hash_bits: u32, max_chain: u32) -> Result<Self, LrError> {
        if min_match < 16 {
            return Err(LrError::InvalidParams(format!(
                "min_match must be at least 16, got {min_match}"
            )));
        }
        if !(16..=28).contains(&hash_bits) {
            return Err(LrError::InvalidParams(format!(
                "hash_bits must be in 16..=28, got {hash_bits}"
            )));
        }
        if max_chain == 0 {
            return Err(LrError::InvalidParams("max_chain must be at least 1".into()));
        }
        Ok(Self {
            min_match,
            hash_bits,
            max_chain,
        })
    }

    pub fn with_min_match(self, min_match: u32) -> Result<Self, LrError> {
        Self::new(min_match, self.hash_bits, self.max_chain)
    }

    pub fn min_match(&self) -> u32 {
        self.min_match
    }

    pub fn hash_bits(&self) -> u32 {
        self.hash_bits
    }

    pub fn max_chain(&self) -> u32 {
        self.max_chain
    }
}

/// Second stage applied to the serialized token stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BackendSpec {
    Identity,
    /// 64 KiB window, minimum match 4, flag-byte framing.
    Lzss,
    External {
        compress: String,
        decompress: String,
    },
}

impl BackendSpec {
    /// External backend whose inverse is the same command with `-d` appended,
    /// the convention of gzip, bzip2, xz and zstd.
    pub fn external(command: impl Into<String>) -> Self {
        let compress = command.into();
        let decompress = format!("{compress} -d");
        BackendSpec::External {
            compress,
            decompress,
        }
    }

    pub fn id(&self) -> u8 {
        match self {
            BackendSpec::Identity => 0,
            BackendSpec::Lzss => 1,
            BackendSpec::External { .. } => 2,
        }
    }

    /// Fails early when an external backend's program is not installed.
    pub fn probe(&self) -> Result<(), LrError> {
        match self {
            BackendSpec::External { compress, decompress } => {
                external::probe(compress)?;
                external::probe(decompress)
            }
            _ => Ok(()),
        }
    }

    /// Short name used in reports: `identity`, `lzss` or `ext:<command>`.
    pub fn name(&self) -> String {
        self.to_string()
    }

    fn apply(&self, data: Vec<u8>) -> Result<Vec<u8>, LrError> {
        match self {
            BackendSpec::Identity => Ok(data),
            BackendSpec::Lzss => Ok(lzss::encode(&data)),
            BackendSpec::External { compress, .. } => external::run(compress, &data),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Identity => f.write_str("identity"),
            BackendSpec::Lzss => f.write_str("lzss"),
            BackendSpec::External { compress, .. } => write!(f, "ext:{compress}"),
        }
    }
}

impl FromStr for BackendSpec {
    type Err = LrError;

    fn from_str(s: &str) -> Result<Self, LrError> {
        match s {
            "identity" => Ok(BackendSpec::Identity),
            "lzss" => Ok(BackendSpec::Lzss),
            _ => match s.strip_prefix("ext:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(BackendSpec::external(cmd.trim())),
                _ => Err(LrError::InvalidParams(format!(
                    "unknown backend `{s}` (expected lzss, identity or ext:<command>)"
                ))),
            },
        }
    }
}

impl Serialize for BackendSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BackendSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn header(backend: u8, min_match: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(backend);
    out.extend_from_slice(&min_match.to_le_bytes());
    out.push(0);
    out
}

pub fn compress(data: &[u8], params: &LrParams, backend: &BackendSpec) -> Result<Vec<u8>, LrError> {
    if data.len() >= u32::MAX as usize {
        return Err(LrError::InputTooLarge(data.len()));
    }
    let mut out = header(backend.id(), params.min_match());
    if data.is_empty() {
        return Ok(out);
    }
    let stream = lr_encode(data, params);
    let serialized = tokens::serialize(&stream, crc32fast::hash(data));
    out.extend_from_slice(&backend.apply(serialized)?);
    Ok(out)
}

/// Decompresses a container produced with a builtin backend.
pub fn decompress(container: &[u8]) -> Result<Vec<u8>, LrError> {
    decompress_with(container, None)
}

/// Decompresses any container; `external` supplies the command for backend id 2.
pub fn decompress_with(container: &[u8], external: Option<&BackendSpec>) -> Result<Vec<u8>, LrError> {
    if container.len() < 4 || &container[..4] != MAGIC {
        return Err(LrError::BadMagic);
    }
    if container.len() < HEADER_LEN {
        return Err(LrError::CorruptPayload("truncated header".into()));
    }
    let version = u16::from_le_bytes([container[4], container[5]]);
    if version != VERSION {
        return Err(LrError::UnsupportedVersion(version));
    }
    let backend = container[6];
    let min_match = u32::from_le_bytes(container[7..11].try_into().unwrap());
    if container[11] != 0 {
        return Err(LrError::CorruptPayload("reserved byte set".into()));
    }
    let payload = &container[HEADER_LEN..];
    if payload.is_empty() {
        return match backend {
            0..=2 => Ok(Vec::new()),
            id => Err(LrError::UnknownBackend(id)),
        };
    }
    let serialized = match backend {
        0 => payload.to_vec(),
        1 => lzss::decode(payload)?,
        2 => match external {
            Some(BackendSpec::External { decompress, .. }) => external::run(decompress, payload)?,
            _ => return Err(LrError::ExternalBackendRequired),
        },
        id => return Err(LrError::UnknownBackend(id)),
    };
    let (stream, total, crc) = tokens::deserialize(&serialized, min_match)?;
    if stream.decoded_len() != total {
        return Err(LrError::CorruptPayload("token lengths disagree with declared size".into()));
    }
    let data = lr_decode(&stream).map_err(|e| LrError::CorruptPayload(e.to_string()))?;
    if crc32fast::hash(&data) != crc {
        return Err(LrError::CorruptPayload("checksum mismatch".into()));
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_input_is_header_only() {
        for b in [BackendSpec::Identity, BackendSpec::Lzss] {
            let c = compress(&[], &LrParams::default(), &b).unwrap();
            assert_eq!(c.len(), HEADER_LEN);
            assert!(decompress(&c).unwrap().is_empty());
        }
    }

    #[test]
    fn header_layout() {
        let c = compress(b"x", &LrParams::default(), &BackendSpec::Lzss).unwrap();
        assert_eq!(&c[..4], b"LRC1");
        assert_eq!(u16::from_le_bytes([c[4], c[5]]), 1);
        assert_eq!(c[6], 1);
        assert_eq!(u32::from_le_bytes(c[7..11].try_into().unwrap()), 64);
        assert_eq!(c[11], 0);
    }

    #[test]
    fn container_errors() {
        assert!(matches!(decompress(b"nope"), Err(LrError::BadMagic)));
        let mut c = compress(b"hello world", &LrParams::default(), &BackendSpec::Identity).unwrap();
        let mut v = c.clone();
        v[4] = 9;
        assert!(matches!(decompress(&v), Err(LrError::UnsupportedVersion(9))));
        let mut v = c.clone();
        v[6] = 7;
        assert!(matches!(decompress(&v), Err(LrError::UnknownBackend(7))));
        let last = c.len() - 1;
        c[last] ^= 0xff;
        assert!(matches!(decompress(&c), Err(LrError::CorruptPayload(_))));
    }

    #[test]
    fn flipped_literal_byte_fails_checksum() {
        let data = b"some literal data that is long enough".to_vec();
        let mut c = compress(&data, &LrParams::default(), &BackendSpec::Identity).unwrap();
        c[HEADER_LEN + 5] ^= 1;
        assert!(matches!(decompress(&c), Err(LrError::CorruptPayload(_))));
    }

    #[test]
    fn external_round_trip_and_requirement() {
        let backend = BackendSpec::External {
            compress: "cat".into(),
            decompress: "cat".into(),
        };
        let data: Vec<u8> = (0..10_000u32).map(|i| (i % 13) as u8).collect();
        let c = compress(&data, &LrParams::default(), &backend).unwrap();
        assert!(matches!(decompress(&c), Err(LrError::ExternalBackendRequired)));
        assert_eq!(decompress_with(&c, Some(&backend)).unwrap(), data);
    }

    #[test]
    fn doubled_random_block_with_identity_backend() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = vec![0u8; 1 << 20];
        rng.fill(&mut x[..]);
        let data = [x.as_slice(), x.as_slice()].concat();
        let c = compress(&data, &LrParams::default(), &BackendSpec::Identity).unwrap();
        let bound = x.len() + x.len() / 50 + 1024;
        assert!(c.len() <= bound, "{} > {bound}", c.len());
        assert_eq!(decompress(&c).unwrap(), data);
    }

    #[test]
    fn backend_names_parse() {
        assert_eq!("lzss".parse::<BackendSpec>().unwrap(), BackendSpec::Lzss);
        assert_eq!("identity".parse::<BackendSpec>().unwrap(), BackendSpec::Identity);
        assert_eq!(
            "ext:xz -9".parse::<BackendSpec>().unwrap(),
            BackendSpec::External {
                compress: "xz -9".into(),
                decompress: "xz -9 -d".into()
            }
        );
        assert!("zip".parse::<BackendSpec>().is_err());
        assert!("ext:".parse::<BackendSpec>().is_err());
    }

    #[test]
    fn params_validation() {
        assert!(LrParams::new(15, 22, 4).is_err());
        assert!(LrParams::new(16, 15, 4).is_err());
        assert!(LrParams::new(16, 29, 4).is_err());
        assert!(LrParams::new(16, 28, 0).is_err());
        assert!(LrParams::new(16, 28, 1).is_ok());
        assert!(serde_json::from_str::<LrParams>(r#"{"min_match":8,"hash_bits":20,"max_chain":2}"#).is_err());
    }
}
