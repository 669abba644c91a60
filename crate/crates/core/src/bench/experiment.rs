use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{CfReport, SmallClusterFlag};
use super::synth::{SynthCorpus, SynthParams};
use super::BenchError;
use crate::archive::{pack, CfRecord};
use crate::features::{extract_features, FeatureSet, MatchParams, ScaleSpaceParams};
use crate::longrange::{BackendSpec, LrParams};
use crate::pnm::{parse_pnm, write_pnm};
use crate::similarity::{
    load_manifest, mixed_group, random_group, sift_picked_with, tags_in_order, top_n, validate_manifest,
    with_workers, ManifestEntry, PhotoGroup, Strategy, DEFAULT_THRESHOLD,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategies: Vec<Strategy>,
    /// Top-N sizes per tag; SIFT-picked groups are drawn from the largest.
    pub sizes: Vec<usize>,
    pub compressors: Vec<BackendSpec>,
    /// Seed for the mixed and random group draws.
    pub seed: u64,
    /// Synthetic corpus, used when `manifest` is absent.
    pub corpus: SynthParams,
    pub manifest: Option<PathBuf>,
    pub threshold: usize,
    pub ratio: f32,
    pub two_sided: bool,
    pub lr: LrParams,
    pub features: ScaleSpaceParams,
    pub mixed_groups: usize,
    pub random_groups: usize,
    /// Size of each mixed and random group.
    pub pool_group_size: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategies: vec![Strategy::TopN, Strategy::SiftPicked, Strategy::Mixed, Strategy::Random],
            sizes: vec![10, 5, 2],
            compressors: vec![BackendSpec::Lzss, BackendSpec::Identity],
            seed: 7,
            corpus: SynthParams::default(),
            manifest: None,
            threshold: DEFAULT_THRESHOLD,
            ratio: MatchParams::default().ratio,
            two_sided: true,
            lr: LrParams::default(),
            features: ScaleSpaceParams::default(),
            mixed_groups: 2,
            random_groups: 2,
            pool_group_size: 10,
        }
    }
}

impl ExperimentConfig {
    /// Parses a JSON config; a relative `manifest` path is taken relative to `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, BenchError> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        if let Some(m) = cfg.manifest.as_mut() {
            if m.is_relative() {
                *m = base_dir.join(&*m);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))
    }

    pub fn match_params(&self) -> MatchParams {
        MatchParams {
            ratio: self.ratio,
            two_sided: self.two_sided,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Config(m.to_string()));
        let uses = |s: Strategy| self.strategies.contains(&s);
        if (uses(Strategy::TopN) || uses(Strategy::SiftPicked)) && self.sizes.is_empty() {
            return bad("`sizes` must not be empty for top_n or sift_picked");
        }
        if self.sizes.contains(&0) {
            return bad("sizes must be at least 1");
        }
        if !self.strategies.is_empty() && self.compressors.is_empty() {
            return bad("`compressors` must not be empty");
        }
        if (uses(Strategy::Mixed) || uses(Strategy::Random)) && self.pool_group_size == 0 {
            return bad("pool_group_size must be at least 1");
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return bad("ratio must lie in (0, 1]");
        }
        self.features
            .validate()
            .map_err(|e| BenchError::Config(e.to_string()))?;
        if self.manifest.is_none() {
            self.corpus.validate()?;
        }
        Ok(())
    }
}

/// Manifest entries with their file contents.
#[derive(Debug, Clone)]
pub struct Corpus {
    entries: Vec<ManifestEntry>,
    names: BTreeMap<String, String>,
    data: BTreeMap<String, Vec<u8>>,
}

impl Corpus {
    /// `entries` paths become archive entry names, so they should be relative.
    pub fn new(entries: Vec<ManifestEntry>, data: BTreeMap<String, Vec<u8>>) -> Result<Self, BenchError> {
        validate_manifest(&entries)?;
        let mut names = BTreeMap::new();
        for e in &entries {
            if !data.contains_key(&e.image_id) {
                return Err(BenchError::MissingImage(e.image_id.clone()));
            }
            names.insert(e.image_id.clone(), e.path.to_string_lossy().replace('\\', "/"));
        }
        Ok(Self { entries, names, data })
    }

    /// Loads a manifest and every file it lists.
    pub fn load(manifest: &Path) -> Result<Self, BenchError> {
        let entries = load_manifest(manifest)?;
        let base = manifest.parent().unwrap_or(Path::new("."));
        let mut data = BTreeMap::new();
        let mut named = Vec::with_capacity(entries.len());
        for mut e in entries {
            let bytes = fs::read(&e.path).map_err(|err| BenchError::io(&e.path, err))?;
            data.insert(e.image_id.clone(), bytes);
            e.path = match e.path.strip_prefix(base) {
                Ok(rel) => rel.to_path_buf(),
                Err(_) => PathBuf::from(e.path.file_name().unwrap_or_default()),
            };
            named.push(e);
        }
        Self::new(named, data)
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn bytes(&self, id: &str) -> Option<&[u8]> {
        self.data.get(id).map(Vec::as_slice)
    }

    /// Archive entry name for an image id.
    pub fn name(&self, id: &str) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }
}

impl From<&SynthCorpus> for Corpus {
    fn from(s: &SynthCorpus) -> Self {
        let data = s
            .images
            .iter()
            .map(|im| (im.id.clone(), write_pnm(&im.image)))
            .collect();
        Corpus::new(s.manifest(), data).expect("synthetic manifests are consistent")
    }
}

/// Feature source for SIFT-picked grouping: image id and file bytes in,
/// features out. Lets callers put a cache in front of extraction.
pub type Extractor<'a> = dyn Fn(&str, &[u8]) -> Result<FeatureSet, BenchError> + Sync + 'a;

pub fn run_experiment(
    corpus: &Corpus,
    config: &ExperimentConfig,
    jobs: usize,
    archive_dir: Option<&Path>,
) -> Result<CfReport, BenchError> {
    let params = config.features;
    let extract = move |id: &str, bytes: &[u8]| -> Result<FeatureSet, BenchError> {
        let img = parse_pnm(bytes).map_err(|source| BenchError::Pnm {
            id: id.to_string(),
            source,
        })?;
        extract_features(id, &img, &params).map_err(|source| BenchError::Feature {
            id: id.to_string(),
            source,
        })
    };
    run_experiment_with(corpus, config, jobs, archive_dir, &extract)
}

struct Cell {
    group: String,
    strategy: String,
    photos: PhotoGroup,
}

// Distinct, reproducible seeds for the i-th mixed or random draw.
fn draw_seed(seed: u64, kind: u8, i: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (u64::from(kind) << 56) ^ i as u64
}

fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Builds every (group, strategy) cell, packs it with every compressor and
/// collects the CF rows. `jobs` as in [`with_workers`]. With `archive_dir`,
/// archives are written there as `<group>__<strategy>__<compressor>.simg`.
pub fn run_experiment_with(
    corpus: &Corpus,
    config: &ExperimentConfig,
    jobs: usize,
    archive_dir: Option<&Path>,
    extract: &Extractor<'_>,
) -> Result<CfReport, BenchError> {
    if config.strategies.is_empty() {
        return Ok(CfReport::default());
    }
    config.validate()?;
    let strategies: BTreeSet<Strategy> = config.strategies.iter().copied().collect();
    let entries = corpus.entries();
    let tags = tags_in_order(entries);
    let mut sizes = config.sizes.clone();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes.dedup();

    let mut cells = Vec::new();
    if strategies.contains(&Strategy::TopN) {
        for tag in &tags {
            for &n in &sizes {
                let photos = top_n(entries, tag, n)?;
                cells.push(Cell {
                    group: tag.clone(),
                    strategy: photos.label.clone(),
                    photos,
                });
            }
        }
    }

    let mut flags = Vec::new();
    if strategies.contains(&Strategy::SiftPicked) {
        let tops = tags
            .iter()
            .map(|t| top_n(entries, t, sizes[0]))
            .collect::<Result<Vec<_>, _>>()?;
        let ids: BTreeSet<&str> = tops.iter().flat_map(|g| g.image_ids.iter().map(String::as_str)).collect();
        let ids: Vec<&str> = ids.into_iter().collect();
        let params = config.match_params();
        let picks = with_workers(jobs, || -> Result<Vec<PhotoGroup>, BenchError> {
            let sets: BTreeMap<&str, FeatureSet> = ids
                .par_iter()
                .map(|&id| {
                    let bytes = corpus.bytes(id).ok_or_else(|| BenchError::MissingImage(id.to_string()))?;
                    extract(id, bytes).map(|fs| (id, fs))
                })
                .collect::<Result<_, _>>()?;
            tops.par_iter()
                .map(|g| {
                    let group_sets: Vec<FeatureSet> =
                        g.image_ids.iter().map(|id| sets[id.as_str()].clone()).collect();
                    Ok(sift_picked_with(&group_sets, config.threshold, &params, 0)?)
                })
                .collect()
        })??;
        for (tag, photos) in tags.iter().zip(picks) {
            if photos.len() < 3 {
                flags.push(SmallClusterFlag {
                    group: tag.clone(),
                    size: photos.len(),
                });
            }
            cells.push(Cell {
                group: tag.clone(),
                strategy: Strategy::SiftPicked.to_string(),
                photos,
            });
        }
    }

    for (strategy, count, prefix, kind) in [
        (Strategy::Mixed, config.mixed_groups, "m", b'm'),
        (Strategy::Random, config.random_groups, "r", b'r'),
    ] {
        if !strategies.contains(&strategy) {
            continue;
        }
        for i in 1..=count {
            let seed = draw_seed(config.seed, kind, i);
            let photos = match strategy {
                Strategy::Mixed => mixed_group(entries, config.pool_group_size, seed)?,
                _ => random_group(entries, config.pool_group_size, seed)?,
            };
            cells.push(Cell {
                group: format!("{prefix}{i}"),
                strategy: strategy.to_string(),
                photos,
            });
        }
    }

    if let Some(dir) = archive_dir {
        fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }
    let work: Vec<(&Cell, &BackendSpec)> = cells
        .iter()
        .flat_map(|c| config.compressors.iter().map(move |b| (c, b)))
        .collect();
    let rows = with_workers(jobs, || {
        work.par_iter()
            .map(|&(cell, backend)| pack_cell(corpus, cell, backend, &config.lr, archive_dir))
            .collect::<Result<Vec<_>, _>>()
    })??;
    Ok(CfReport::from_rows(rows, flags))
}

fn pack_cell(
    corpus: &Corpus,
    cell: &Cell,
    backend: &BackendSpec,
    lr: &LrParams,
    archive_dir: Option<&Path>,
) -> Result<CfRecord, BenchError> {
    let photos = cell
        .photos
        .clone()
        .with_label(format!("{}/{}", cell.group, cell.strategy));
    let mut s_old = 0u64;
    let archive = pack(
        &photos,
        |id| {
            let bytes = corpus.bytes(id)?;
            s_old += bytes.len() as u64;
            Some((corpus.name(id)?.to_string(), bytes.to_vec()))
        },
        lr,
        backend,
    )?;
    let compressor = backend.to_string();
    if let Some(dir) = archive_dir {
        let path = dir.join(format!(
            "{}__{}__{}.simg",
            file_stem(&cell.group),
            file_stem(&cell.strategy),
            file_stem(&compressor)
        ));
        fs::write(&path, &archive).map_err(|e| BenchError::io(&path, e))?;
    }
    Ok(CfRecord::new(
        &cell.group,
        &cell.strategy,
        compressor,
        s_old,
        archive.len() as u64,
    )?)
}
