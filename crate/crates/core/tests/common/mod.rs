//! Oracles and fixtures shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simpack_core::bench::{synth_corpus, SynthParams};
use simpack_core::pnm::PnmError;
use simpack_core::RawImage;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pnm")
}

pub fn read_dir_sorted(dir: PathBuf) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

/// Error class each malformed fixture must raise.
pub fn expected_error(name: &str) -> fn(&PnmError) -> bool {
    match name {
        "unknown_magic_p3.ppm" => |e| matches!(e, PnmError::UnknownMagic),
        "unsupported_maxval_16bit.pgm" => |e| matches!(e, PnmError::UnsupportedMaxval(65535)),
        "malformed_header_missing_height.pgm" => |e| matches!(e, PnmError::MalformedHeader(_)),
        "truncated_payload.ppm" => |e| matches!(e, PnmError::TruncatedPayload { expected: 48, found: 47 }),
        "trailing_garbage.pgm" => |e| matches!(e, PnmError::TrailingGarbage(1)),
        "sample_out_of_range.pgm" => |e| matches!(e, PnmError::SampleOutOfRange { offset: 2, value: 16, maxval: 15 }),
        other => panic!("no expectation for fixture {other}"),
    }
}

/// Pixels decoded by the `image` crate, for 8-bit full-range files.
pub fn image_crate_pixels(bytes: &[u8]) -> Option<(u32, u32, Vec<u8>)> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Pnm).ok()?;
    let (w, h) = (img.width(), img.height());
    let px = match img {
        image::DynamicImage::ImageLuma8(b) => b.into_raw(),
        image::DynamicImage::ImageRgb8(b) => b.into_raw(),
        _ => return None,
    };
    Some((w, h, px))
}

/// Random symmetric shared-count table; `density` is the chance a pair gets a
/// count at or above `threshold`.
pub fn random_counts(rng: &mut ChaCha8Rng, n: usize, threshold: usize, density: f64) -> Vec<((usize, usize), usize)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let c = if rng.gen_bool(density) {
                rng.gen_range(threshold..threshold + 50)
            } else {
                rng.gen_range(0..threshold)
            };
            out.push(((i, j), c));
        }
    }
    out
}

/// Components by depth-first search over an adjacency matrix, sorted by size
/// descending then smallest member.
pub fn dfs_components(n: usize, counts: &[((usize, usize), usize)], threshold: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![vec![false; n]; n];
    for &((i, j), c) in counts {
        if c >= threshold {
            adj[i][j] = true;
            adj[j][i] = true;
        }
    }
    let mut seen = vec![false; n];
    let mut comps = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut stack = vec![s];
        let mut comp = Vec::new();
        seen[s] = true;
        while let Some(u) = stack.pop() {
            comp.push(u);
            for v in 0..n {
                if adj[u][v] && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    comps
}

/// (max, mean, min, second_min) from a sorted copy.
pub fn stats_oracle(values: &[f64]) -> (f64, f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v[v.len() - 1], mean, v[0], v[1.min(v.len() - 1)])
}

pub fn random_stats_input(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.gen_range(1..60);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..5.0)).collect();
    // Force duplicates of the minimum now and then.
    if n > 2 && rng.gen_bool(0.3) {
        let m = v.iter().cloned().fold(f64::INFINITY, f64::min);
        v[rng.gen_range(0..n)] = m;
    }
    v
}

/// Rotates 90° clockwise: (x, y) maps to (h - 1 - y, x).
pub fn rotate90(img: &RawImage) -> RawImage {
    let (w, h, c) = (img.width() as usize, img.height() as usize, img.channels() as usize);
    let src = img.pixels();
    let mut out = vec![0u8; src.len()];
    for y in 0..h {
        for x in 0..w {
            let (nx, ny) = (h - 1 - y, x);
            let d = (ny * h + nx) * c;
            out[d..d + c].copy_from_slice(&src[(y * w + x) * c..(y * w + x) * c + c]);
        }
    }
    RawImage::new(h as u32, w as u32, img.channels(), img.maxval(), out).unwrap()
}

pub fn noise_image(seed: u64, w: u32, h: u32) -> RawImage {
    let mut px = vec![0u8; (w * h) as usize];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut px);
    RawImage::new(w, h, 1, 255, px).unwrap()
}

/// A richly textured 256x256 RGB scene.
pub fn textured_image() -> RawImage {
    let corpus = synth_corpus(&SynthParams {
        n_bases: 1,
        variants_per_base: 1,
        ..SynthParams::default()
    })
    .unwrap();
    corpus.images[0].image.clone()
}

/// Seeded random files of the given sizes: a mix of noise, runs and copies of
/// earlier content so the long-range stage has something to find.
pub fn random_files(seed: u64, sizes: &[usize]) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut files: Vec<Vec<u8>> = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut f = Vec::with_capacity(size);
        while f.len() < size {
            let n = rng.gen_range(1..65536).min(size - f.len());
            match rng.gen_range(0..4) {
                0 => f.resize(f.len() + n, rng.gen()),
                1 if !files.is_empty() => {
                    let src = &files[rng.gen_range(0..files.len())];
                    if src.is_empty() {
                        continue;
                    }
                    let from = rng.gen_range(0..src.len());
                    let take = n.min(src.len() - from);
                    f.extend_from_slice(&src[from..from + take]);
                }
                _ => {
                    let start = f.len();
                    f.resize(start + n, 0);
                    rng.fill_bytes(&mut f[start..]);
                }
            }
        }
        files.push(f);
    }
    files
}

pub fn by_name(files: Vec<(String, Vec<u8>)>) -> BTreeMap<String, Vec<u8>> {
    files.into_iter().collect()
}
