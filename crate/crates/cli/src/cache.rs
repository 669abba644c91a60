//! On-disk feature cache: one `SFT1` file per image, named after a hash of the
//! image bytes and the extraction parameters, so renamed or moved images still
//! hit and a parameter change never returns stale features.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use simpack_core::features::{cache, extract_features, FeatureSet, ScaleSpaceParams};
use simpack_core::parse_pnm;

use crate::error::Failure;

pub struct FeatureCache {
    dir: Option<PathBuf>,
    params: ScaleSpaceParams,
    params_key: Vec<u8>,
}

impl FeatureCache {
    pub fn new(dir: Option<PathBuf>, params: ScaleSpaceParams) -> Result<Self, Failure> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|e| Failure::data(e).context(format!("creating {}", d.display())))?;
        }
        let params_key = serde_json::to_vec(&params).expect("params serialize");
        Ok(Self {
            dir,
            params,
            params_key,
        })
    }

    pub fn path_for(&self, bytes: &[u8]) -> Option<PathBuf> {
        let dir = self.dir.as_ref()?;
        let mut h = Sha256::new();
        h.update(&self.params_key);
        h.update([0u8]);
        h.update(bytes);
        let digest = h.finalize();
        let name: String = digest[..16].iter().map(|b| format!("{b:02x}")).collect();
        Some(dir.join(format!("{name}.sft")))
    }

    /// Cached features for `bytes` under `id`, extracting and storing on a miss.
    /// Unreadable cache files are treated as misses and replaced.
    pub fn get(&self, id: &str, bytes: &[u8]) -> anyhow::Result<FeatureSet> {
        let path = self.path_for(bytes);
        if let Some(p) = &path {
            if let Ok(buf) = fs::read(p) {
                if let Ok(mut set) = cache::decode(&buf) {
                    set.image_id = id.to_string();
                    return Ok(set);
                }
            }
        }
        let img = parse_pnm(bytes).map_err(|e| anyhow::anyhow!("image `{id}`: {e}"))?;
        let set = extract_features(id, &img, &self.params).map_err(|e| anyhow::anyhow!("image `{id}`: {e}"))?;
        if let Some(p) = &path {
            write_atomic(p, &cache::encode(&set))?;
        }
        Ok(set)
    }
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    use std::io::Write;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
