//! `SIMG` group archives: a photo group's files concatenated in group order and
//! compressed as a single long-range stream.
//!
//! Layout (integers little-endian, `varint` is unsigned LEB128):
//!
//! ```text
//! "SIMG" | u16 version | varint label_len | label
//!        | u8 backend id | u32 min_match | u8 hash_bits | u32 max_chain
//!        | varint entry_count | { varint name_len | name | varint raw_len }*
//!        | LRC1 container (to end of file)
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::longrange::{self, BackendSpec, LrError, LrParams};
use crate::similarity::PhotoGroup;
use crate::varint;

pub const MAGIC: &[u8; 4] = b"SIMG";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("bad magic, not a SIMG archive")]
    BadMagic,
    #[error("unsupported archive version {0}")]
    UnsupportedVersion(u16),
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),
    #[error("entry table does not match payload: {0}")]
    EntryTableMismatch(String),
    #[error("no file for image id `{0}`")]
    MissingFile(String),
    #[error("cannot pack an empty group")]
    EmptyGroup,
    #[error("entry name `{0}` appears twice")]
    DuplicateName(String),
    #[error("entry name `{0}` is not a safe relative path")]
    BadName(String),
    #[error("compressed size must be at least one byte")]
    ZeroCompressedSize,
    #[error(transparent)]
    Backend(LrError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ArchiveError {
    pub fn is_external_failure(&self) -> bool {
        matches!(
            self,
            ArchiveError::Backend(LrError::ExternalBackendFailed { .. } | LrError::ExternalBackendRequired)
        )
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        ArchiveError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<LrError> for ArchiveError {
    fn from(e: LrError) -> Self {
        match e {
            LrError::ExternalBackendFailed { .. }
            | LrError::ExternalBackendRequired
            | LrError::InputTooLarge(_)
            | LrError::InvalidParams(_) => ArchiveError::Backend(e),
            other => ArchiveError::CorruptPayload(other.to_string()),
        }
    }
}

/// Compression factor: original size over compressed size.
pub fn compression_factor(s_old: u64, s_new: u64) -> Result<f64, ArchiveError> {
    if s_new == 0 {
        return Err(ArchiveError::ZeroCompressedSize);
    }
    Ok(s_old as f64 / s_new as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfRecord {
    pub group: String,
    pub strategy: String,
    pub compressor: String,
    /// Sum of the raw file sizes.
    pub s_old: u64,
    /// Size of the whole archive file.
    pub s_new: u64,
    pub cf: f64,
}

impl CfRecord {
    pub fn new(
        group: impl Into<String>,
        strategy: impl Into<String>,
        compressor: impl Into<String>,
        s_old: u64,
        s_new: u64,
    ) -> Result<Self, ArchiveError> {
        Ok(Self {
            group: group.into(),
            strategy: strategy.into(),
            compressor: compressor.into(),
            s_old,
            s_new,
            cf: compression_factor(s_old, s_new)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveEntry {
    pub name: String,
    pub raw_len: u64,
}

/// Header and entry table of an archive.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveInfo {
    pub label: String,
    pub backend_id: u8,
    pub params: LrParams,
    pub entries: Vec<ArchiveEntry>,
    /// Offset of the LRC1 container.
    pub payload_offset: usize,
}

impl ArchiveInfo {
    pub fn raw_total(&self) -> u64 {
        self.entries.iter().map(|e| e.raw_len).sum()
    }
}

fn check_name(name: &str) -> Result<(), ArchiveError> {
    let path = Path::new(name);
    let safe = !name.is_empty()
        && !name.contains('\\')
        && path
            .components()
            .all(|c| matches!(c, Component::Normal(_)));
    if safe {
        Ok(())
    } else {
        Err(ArchiveError::BadName(name.to_string()))
    }
}

/// Packs a group. `resolve` maps an image id to its entry name and bytes.
pub fn pack<F>(
    group: &PhotoGroup,
    mut resolve: F,
    params: &LrParams,
    backend: &BackendSpec,
) -> Result<Vec<u8>, ArchiveError>
where
    F: FnMut(&str) -> Option<(String, Vec<u8>)>,
{
    if group.image_ids.is_empty() {
        return Err(ArchiveError::EmptyGroup);
    }
    let mut names = HashSet::new();
    let mut entries = Vec::with_capacity(group.image_ids.len());
    let mut concat = Vec::new();
    for id in &group.image_ids {
        let (name, bytes) = resolve(id).ok_or_else(|| ArchiveError::MissingFile(id.clone()))?;
        check_name(&name)?;
        if !names.insert(name.clone()) {
            return Err(ArchiveError::DuplicateName(name));
        }
        entries.push(ArchiveEntry {
            name,
            raw_len: bytes.len() as u64,
        });
        concat.extend_from_slice(&bytes);
    }
    let container = longrange::compress(&concat, params, backend)?;

    let mut out = Vec::with_capacity(container.len() + 64 + entries.len() * 24);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    varint::write_u64(&mut out, group.label.len() as u64);
    out.extend_from_slice(group.label.as_bytes());
    out.push(backend.id());
    out.extend_from_slice(&params.min_match().to_le_bytes());
    out.push(params.hash_bits() as u8);
    out.extend_from_slice(&params.max_chain().to_le_bytes());
    varint::write_u64(&mut out, entries.len() as u64);
    for e in &entries {
        varint::write_u64(&mut out, e.name.len() as u64);
        out.extend_from_slice(e.name.as_bytes());
        varint::write_u64(&mut out, e.raw_len);
    }
    out.extend_from_slice(&container);
    Ok(out)
}

/// Parses the header and entry table without decompressing.
pub fn inspect(archive: &[u8]) -> Result<ArchiveInfo, ArchiveError> {
    if archive.len() < 4 || &archive[..4] != MAGIC {
        return Err(ArchiveError::BadMagic);
    }
    let corrupt = |what: &str| ArchiveError::CorruptPayload(what.to_string());
    let mut pos = 4usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], ArchiveError> {
        let end = pos
            .checked_add(n)
            .filter(|&e| e <= archive.len())
            .ok_or_else(|| corrupt("truncated header"))?;
        let s = &archive[*pos..end];
        *pos = end;
        Ok(s)
    };
    let version = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap());
    if version != VERSION {
        return Err(ArchiveError::UnsupportedVersion(version));
    }
    let read_varint = |pos: &mut usize| varint::read_u64(archive, pos).ok_or_else(|| corrupt("truncated header"));
    let label_len = read_varint(&mut pos)? as usize;
    let label = String::from_utf8(take(&mut pos, label_len)?.to_vec()).map_err(|_| corrupt("label is not UTF-8"))?;
    let backend_id = take(&mut pos, 1)?[0];
    let min_match = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    let hash_bits = take(&mut pos, 1)?[0];
    let max_chain = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    let params = LrParams::new(min_match, u32::from(hash_bits), max_chain)
        .map_err(|e| ArchiveError::CorruptPayload(e.to_string()))?;
    let count = read_varint(&mut pos)?;
    if count > archive.len() as u64 {
        return Err(corrupt("entry count exceeds archive size"));
    }
    let mut entries = Vec::with_capacity(count as usize);
    let mut names = HashSet::new();
    for _ in 0..count {
        let name_len = read_varint(&mut pos)? as usize;
        let name =
            String::from_utf8(take(&mut pos, name_len)?.to_vec()).map_err(|_| corrupt("entry name is not UTF-8"))?;
        check_name(&name)?;
        if !names.insert(name.clone()) {
            return Err(ArchiveError::EntryTableMismatch(format!("duplicate entry `{name}`")));
        }
        let raw_len = read_varint(&mut pos)?;
        entries.push(ArchiveEntry { name, raw_len });
    }
    Ok(ArchiveInfo {
        label,
        backend_id,
        params,
        entries,
        payload_offset: pos,
    })
}

/// Decompresses an archive into `(name, bytes)` pairs in group order.
/// `external` is needed only for archives packed with an external backend.
pub fn unpack(archive: &[u8], external: Option<&BackendSpec>) -> Result<Vec<(String, Vec<u8>)>, ArchiveError> {
    let info = inspect(archive)?;
    let container = &archive[info.payload_offset..];
    if container.len() > 6 && container[..4] == *longrange::MAGIC && container[6] != info.backend_id {
        return Err(ArchiveError::CorruptPayload("backend id disagrees with payload".into()));
    }
    let data = match longrange::decompress_with(container, external) {
        Err(LrError::BadMagic) => return Err(ArchiveError::CorruptPayload("missing LRC1 payload".into())),
        other => other?,
    };
    if data.len() as u64 != info.raw_total() {
        return Err(ArchiveError::EntryTableMismatch(format!(
            "entries total {} bytes, payload holds {}",
            info.raw_total(),
            data.len()
        )));
    }
    let mut out = Vec::with_capacity(info.entries.len());
    let mut at = 0usize;
    for e in info.entries {
        let end = at + e.raw_len as usize;
        out.push((e.name, data[at..end].to_vec()));
        at = end;
    }
    Ok(out)
}

/// Unpacks into `dir`. Everything is decoded and written to a staging
/// directory first; files are moved into place only when all writes succeed.
pub fn unpack_to_dir(
    archive: &[u8],
    dir: &Path,
    external: Option<&BackendSpec>,
) -> Result<Vec<String>, ArchiveError> {
    let files = unpack(archive, external)?;
    fs::create_dir_all(dir).map_err(|e| ArchiveError::io(dir, e))?;
    let staging = tempfile::Builder::new()
        .prefix(".simg-unpack-")
        .tempdir_in(dir)
        .map_err(|e| ArchiveError::io(dir, e))?;
    for (name, bytes) in &files {
        let path = staging.path().join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| ArchiveError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| ArchiveError::io(&path, e))?;
    }
    for (name, _) in &files {
        let target = dir.join(name);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(|e| ArchiveError::io(parent, e))?;
        }
        fs::rename(staging.path().join(name), &target).map_err(|e| ArchiveError::io(&target, e))?;
    }
    Ok(files.into_iter().map(|(n, _)| n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::Strategy;
    use std::collections::HashMap;

    fn group(ids: &[&str]) -> PhotoGroup {
        PhotoGroup {
            label: "g1".into(),
            strategy: Strategy::TopN,
            image_ids: ids.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn files() -> HashMap<String, Vec<u8>> {
        let mut m = HashMap::new();
        m.insert("a".to_string(), b"first file contents".repeat(20));
        m.insert("b".to_string(), b"second".to_vec());
        m.insert("c".to_string(), Vec::new());
        m
    }

    fn resolver(m: &HashMap<String, Vec<u8>>) -> impl FnMut(&str) -> Option<(String, Vec<u8>)> + '_ {
        move |id| m.get(id).map(|b| (format!("img/{id}.ppm"), b.clone()))
    }

    #[test]
    fn cf_values() {
        assert_eq!(compression_factor(1000, 500).unwrap(), 2.0);
        assert_eq!(compression_factor(777, 777).unwrap(), 1.0);
        assert!(matches!(compression_factor(5, 0), Err(ArchiveError::ZeroCompressedSize)));
    }

    #[test]
    fn round_trip_preserves_order_and_names() {
        let m = files();
        for backend in [BackendSpec::Identity, BackendSpec::Lzss] {
            let bytes = pack(&group(&["b", "a", "c"]), resolver(&m), &LrParams::default(), &backend).unwrap();
            let info = inspect(&bytes).unwrap();
            assert_eq!(info.label, "g1");
            assert_eq!(info.backend_id, backend.id());
            let out = unpack(&bytes, None).unwrap();
            let names: Vec<&str> = out.iter().map(|(n, _)| n.as_str()).collect();
            assert_eq!(names, ["img/b.ppm", "img/a.ppm", "img/c.ppm"]);
            assert_eq!(out[1].1, m["a"]);
            assert_eq!(info.raw_total(), out.iter().map(|(_, b)| b.len() as u64).sum::<u64>());
        }
    }

    #[test]
    fn order_changes_bytes_not_contents() {
        let m = files();
        let p = LrParams::default();
        let ab = pack(&group(&["a", "b"]), resolver(&m), &p, &BackendSpec::Lzss).unwrap();
        let ba = pack(&group(&["b", "a"]), resolver(&m), &p, &BackendSpec::Lzss).unwrap();
        assert_ne!(ab, ba);
        let mut x = unpack(&ab, None).unwrap();
        let mut y = unpack(&ba, None).unwrap();
        x.sort();
        y.sort();
        assert_eq!(x, y);
    }

    #[test]
    fn pack_errors() {
        let m = files();
        let p = LrParams::default();
        assert!(matches!(
            pack(&group(&["a", "zzz"]), resolver(&m), &p, &BackendSpec::Lzss),
            Err(ArchiveError::MissingFile(id)) if id == "zzz"
        ));
        assert!(matches!(
            pack(&group(&[]), resolver(&m), &p, &BackendSpec::Lzss),
            Err(ArchiveError::EmptyGroup)
        ));
        assert!(matches!(
            pack(&group(&["a", "a"]), resolver(&m), &p, &BackendSpec::Lzss),
            Err(ArchiveError::DuplicateName(_))
        ));
        for bad in ["../x", "/etc/passwd", "a/../../b", ""] {
            let r = pack(&group(&["a"]), |_| Some((bad.to_string(), vec![1])), &p, &BackendSpec::Lzss);
            assert!(matches!(r, Err(ArchiveError::BadName(_))), "{bad}");
        }
    }

    #[test]
    fn every_truncation_is_rejected() {
        let m = files();
        let bytes = pack(&group(&["a", "b"]), resolver(&m), &LrParams::default(), &BackendSpec::Lzss).unwrap();
        for cut in 4..bytes.len() {
            match unpack(&bytes[..cut], None) {
                Err(ArchiveError::CorruptPayload(_)) | Err(ArchiveError::EntryTableMismatch(_)) => {}
                other => panic!("cut {cut}: {other:?}"),
            }
        }
        assert!(matches!(unpack(b"SIM", None), Err(ArchiveError::BadMagic)));
    }

    #[test]
    fn entry_table_mismatch() {
        let m = files();
        let mut bytes = pack(&group(&["b"]), resolver(&m), &LrParams::default(), &BackendSpec::Lzss).unwrap();
        let info = inspect(&bytes).unwrap();
        // raw_len of the single entry is the byte just before the payload.
        bytes[info.payload_offset - 1] = 5;
        assert!(matches!(unpack(&bytes, None), Err(ArchiveError::EntryTableMismatch(_))));
    }

    #[test]
    fn unpack_to_dir_leaves_nothing_on_failure() {
        let m = files();
        let bytes = pack(&group(&["a", "b"]), resolver(&m), &LrParams::default(), &BackendSpec::Lzss).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        assert!(unpack_to_dir(&bytes[..bytes.len() - 3], &out, None).is_err());
        assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());
        let names = unpack_to_dir(&bytes, &out, None).unwrap();
        assert_eq!(names, ["img/a.ppm", "img/b.ppm"]);
        assert_eq!(fs::read(out.join("img/a.ppm")).unwrap(), m["a"]);
        // Only the extracted tree remains; the staging directory is gone.
        assert_eq!(fs::read_dir(&out).unwrap().count(), 1);
    }
}
