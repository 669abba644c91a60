//! Seeded synthetic corpus standing in for tagged photo collections.
//!
//! Each base scene is a procedural texture rendered on a canvas slightly larger
//! than the output so variants can be cropped at an offset. Variant `k` of a
//! base carries perturbation strength `s = (k - 1) / (V - 1)`: translation,
//! noise and brightness changes grow with `s`, and with probability
//! `off_topic_max * s^2` the variant is replaced by an unrelated scene, the
//! way low-ranked search results drift off topic.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::pnm::{write_pnm, RawImage};
use crate::similarity::ManifestEntry;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// Shift of up to ±10 levels on a band of rows.
    BrightnessShift,
    /// Crop offset of up to 5% of each side.
    Translation,
    /// Additive Gaussian noise, σ = 2 levels, on a band of rows.
    GaussianNoise,
    /// Resampling about the centre by a factor in 0.9–1.1.
    Rescale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub seed: u64,
    pub n_bases: usize,
    pub variants_per_base: usize,
    pub width: u32,
    pub height: u32,
    pub perturbations: BTreeSet<Perturbation>,
    /// Chance that the last-ranked variant is off topic.
    pub off_topic_max: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 7,
            n_bases: 12,
            variants_per_base: 10,
            width: 256,
            height: 256,
            perturbations: [
                Perturbation::BrightnessShift,
                Perturbation::Translation,
                Perturbation::GaussianNoise,
            ]
            .into_iter()
            .collect(),
            off_topic_max: 0.8,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidParams(m.to_string()));
        if self.n_bases == 0 {
            return bad("n_bases must be at least 1");
        }
        if self.variants_per_base == 0 {
            return bad("variants_per_base must be at least 1");
        }
        if self.width < 64 || self.height < 64 {
            return bad("width and height must be at least 64");
        }
        if self.width > 8192 || self.height > 8192 {
            return bad("width and height must be at most 8192");
        }
        if !(0.0..=1.0).contains(&self.off_topic_max) {
            return bad("off_topic_max must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthImage {
    pub id: String,
    pub tag: String,
    pub rank: u32,
    /// Index of the base scene this image was derived from; `None` when off topic.
    pub base: Option<usize>,
    pub strength: f64,
    pub image: RawImage,
}

impl SynthImage {
    pub fn file_name(&self) -> String {
        format!("{}.ppm", self.id)
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub params: SynthParams,
    pub images: Vec<SynthImage>,
}

impl SynthCorpus {
    /// Manifest with paths relative to the corpus directory.
    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.images
            .iter()
            .map(|im| ManifestEntry {
                path: PathBuf::from(im.file_name()),
                image_id: im.id.clone(),
                tags: vec![im.tag.clone()],
                relevance_rank: im.rank,
                size_bytes: write_pnm(&im.image).len() as u64,
            })
            .collect()
    }

    /// Writes every image as PPM plus `manifest.json`; returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, BenchError> {
        fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
        for im in &self.images {
            let path = dir.join(im.file_name());
            fs::write(&path, write_pnm(&im.image)).map_err(|e| BenchError::io(&path, e))?;
        }
        let path = dir.join(MANIFEST_NAME);
        let mut json = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        json.push('\n');
        fs::write(&path, json).map_err(|e| BenchError::io(&path, e))?;
        Ok(path)
    }
}

// Independent RNG streams per purpose so changing one knob does not reshuffle
// everything else.
const STREAM_SCENE: u64 = 1 << 32;
const STREAM_DISTRACTOR: u64 = 2 << 32;
const STREAM_VARIANT: u64 = 3 << 32;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn synth_corpus(p: &SynthParams) -> Result<SynthCorpus, BenchError> {
    p.validate()?;
    let (w, h) = (p.width as usize, p.height as usize);
    let (mx, my) = (margin(w), margin(h));
    let v = p.variants_per_base;
    let mut images = Vec::with_capacity(p.n_bases * v);
    for b in 0..p.n_bases {
        let scene = render_scene(&mut rng_for(p.seed, STREAM_SCENE + b as u64), w + mx, h + my);
        for k in 1..=v {
            let s = if v == 1 { 0.0 } else { (k - 1) as f64 / (v - 1) as f64 };
            let idx = (b * v + k - 1) as u64;
            let mut rng = rng_for(p.seed, STREAM_VARIANT + idx);
            let off_topic = rng.gen::<f64>() < p.off_topic_max * s * s;
            let (pixels, base) = if off_topic {
                let other = render_scene(&mut rng_for(p.seed, STREAM_DISTRACTOR + idx), w, h);
                (other.crop(0, 0, w, h), None)
            } else {
                (variant(&scene, w, h, s, &p.perturbations, &mut rng), Some(b))
            };
            images.push(SynthImage {
                id: format!("g{}_{:02}", b + 1, k),
                tag: format!("g{}", b + 1),
                rank: k as u32,
                base,
                strength: s,
                image: RawImage::new(p.width, p.height, 3, 255, pixels).expect("dimensions match"),
            });
        }
    }
    Ok(SynthCorpus {
        params: p.clone(),
        images,
    })
}

fn margin(side: usize) -> usize {
    (side * 5).div_ceil(100)
}

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<[f32; 3]>,
}

impl Canvas {
    fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                out.extend(self.px[y * self.w + x].iter().map(|&c| c.round().clamp(0.0, 255.0) as u8));
            }
        }
        out
    }
}

fn random_color(rng: &mut ChaCha8Rng) -> [f32; 3] {
    [0, 1, 2].map(|_| rng.gen_range(20.0..235.0))
}

/// Gradient background, a few dozen flat, ringed and striped shapes, then
/// mild sensor-like noise.
fn render_scene(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Canvas {
    let (c0, c1) = (random_color(rng), random_color(rng));
    let angle: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
    let (ux, uy) = (angle.cos(), angle.sin());
    let span = (w + h) as f32;
    let mut px = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let t = ((x as f32 * ux + y as f32 * uy) / span + 0.5).clamp(0.0, 1.0);
            px.push([0, 1, 2].map(|c| c0[c] + (c1[c] - c0[c]) * t));
        }
    }
    let mut canvas = Canvas { w, h, px };

    let count = (w * h / 1100).max(8);
    let max_r = (w.min(h) / 7).max(6) as f32;
    for _ in 0..count {
        let cx = rng.gen_range(0.0..w as f32);
        let cy = rng.gen_range(0.0..h as f32);
        let r = rng.gen_range(3.0..max_r);
        let color = random_color(rng);
        let kind = rng.gen_range(0..4);
        let aspect = rng.gen_range(0.5..2.0f32);
        let (period, phase) = (rng.gen_range(3.0..10.0f32), rng.gen_range(0.0..std::f32::consts::TAU));
        let stripe_angle: f32 = rng.gen_range(0.0..std::f32::consts::PI);
        let (sx, sy) = (stripe_angle.cos(), stripe_angle.sin());
        let x0 = (cx - r * aspect - 1.0).max(0.0) as usize;
        let x1 = ((cx + r * aspect + 1.0) as usize).min(w - 1);
        let y0 = (cy - r - 1.0).max(0.0) as usize;
        let y1 = ((cy + r + 1.0) as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = (x as f32 - cx) / aspect;
                let dy = y as f32 - cy;
                let d = (dx * dx + dy * dy).sqrt();
                let paint = match kind {
                    0 => (d <= r).then_some(1.0),
                    1 => (dx.abs() <= r && dy.abs() <= r * 0.7).then_some(1.0),
                    2 => (d <= r && d >= r * 0.6).then_some(1.0),
                    _ => (dx.abs() <= r && dy.abs() <= r).then(|| {
                        let u = x as f32 * sx + y as f32 * sy;
                        0.5 + 0.5 * (u * std::f32::consts::TAU / period + phase).sin()
                    }),
                };
                if let Some(a) = paint {
                    let p = &mut canvas.px[y * w + x];
                    for c in 0..3 {
                        p[c] = p[c] * (1.0 - a) + color[c] * a;
                    }
                }
            }
        }
    }

    let noise = Normal::new(0.0f32, 1.5).expect("valid sigma");
    for p in &mut canvas.px {
        for c in p.iter_mut() {
            *c += noise.sample(rng);
        }
    }
    canvas
}

fn variant(
    scene: &Canvas,
    w: usize,
    h: usize,
    s: f64,
    kinds: &BTreeSet<Perturbation>,
    rng: &mut ChaCha8Rng,
) -> Vec<u8> {
    let (dx, dy) = if kinds.contains(&Perturbation::Translation) {
        let mx = (scene.w - w) as f64;
        let my = (scene.h - h) as f64;
        ((s * mx).round() as usize, (s * my * 0.5).round() as usize)
    } else {
        (0, 0)
    };
    let mut px = scene.crop(dx, dy, w, h);

    if kinds.contains(&Perturbation::Rescale) && s > 0.0 {
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        px = rescale(&px, w, h, 1.0 + sign * 0.1 * s);
    }

    // One band of rows covering a fraction `s` of the image, starting at a
    // random row and wrapping: noise on the first part, brightness on the rest.
    let noise = kinds.contains(&Perturbation::GaussianNoise);
    let bright = kinds.contains(&Perturbation::BrightnessShift);
    let band = (s * h as f64).round() as usize;
    let start = rng.gen_range(0..h);
    let noise_rows = match (noise, bright) {
        (true, true) => (band as f64 * 0.6).round() as usize,
        (true, false) => band,
        _ => 0,
    };
    let shift: i16 = if rng.gen::<bool>() { 10 } else { -10 };
    let gauss = Normal::new(0.0f32, 2.0).expect("valid sigma");
    for i in 0..band {
        let y = (start + i) % h;
        let row = &mut px[y * w * 3..(y + 1) * w * 3];
        if i < noise_rows {
            for v in row.iter_mut() {
                *v = (*v as f32 + gauss.sample(rng)).round().clamp(0.0, 255.0) as u8;
            }
        } else if bright {
            for v in row.iter_mut() {
                *v = (*v as i16 + shift).clamp(0, 255) as u8;
            }
        }
    }
    px
}

/// Bilinear resampling about the image centre, edges clamped.
fn rescale(px: &[u8], w: usize, h: usize, factor: f64) -> Vec<u8> {
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let at = |x: usize, y: usize, c: usize| px[(y * w + x) * 3 + c] as f64;
    let mut out = Vec::with_capacity(px.len());
    for y in 0..h {
        let sy = ((y as f64 - cy) / factor + cy).clamp(0.0, (h - 1) as f64);
        let (y0, fy) = (sy.floor() as usize, sy.fract());
        let y1 = (y0 + 1).min(h - 1);
        for x in 0..w {
            let sx = ((x as f64 - cx) / factor + cx).clamp(0.0, (w - 1) as f64);
            let (x0, fx) = (sx.floor() as usize, sx.fract());
            let x1 = (x0 + 1).min(w - 1);
            for c in 0..3 {
                let top = at(x0, y0, c) * (1.0 - fx) + at(x1, y0, c) * fx;
                let bottom = at(x0, y1, c) * (1.0 - fx) + at(x1, y1, c) * fx;
                out.push((top * (1.0 - fy) + bottom * fy).round() as u8);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthParams {
        SynthParams {
            n_bases: 2,
            variants_per_base: 4,
            width: 64,
            height: 64,
            ..SynthParams::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = synth_corpus(&small()).unwrap();
        let b = synth_corpus(&small()).unwrap();
        assert_eq!(a.images.len(), 8);
        for (x, y) in a.images.iter().zip(&b.images) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.image, y.image);
        }
        let c = synth_corpus(&SynthParams { seed: 8, ..small() }).unwrap();
        assert_ne!(a.images[0].image, c.images[0].image);
    }

    #[test]
    fn first_variant_is_unperturbed_crop() {
        let p = small();
        let corpus = synth_corpus(&p).unwrap();
        let first = &corpus.images[0];
        assert_eq!((first.rank, first.base, first.strength), (1, Some(0), 0.0));
        let scene = render_scene(&mut rng_for(p.seed, STREAM_SCENE), 64 + margin(64), 64 + margin(64));
        assert_eq!(first.image.pixels(), scene.crop(0, 0, 64, 64));
    }

    #[test]
    fn manifest_tags_and_ranks() {
        let corpus = synth_corpus(&small()).unwrap();
        let m = corpus.manifest();
        assert_eq!(m[5].image_id, "g2_02");
        assert_eq!(m[5].tags, ["g2"]);
        assert_eq!(m[5].relevance_rank, 2);
        assert_eq!(m[5].size_bytes, 64 * 64 * 3 + 13);
        crate::similarity::validate_manifest(&m).unwrap();
    }

    #[test]
    fn single_variant_corpus_is_unrelated_bases() {
        let p = SynthParams {
            variants_per_base: 1,
            ..small()
        };
        let corpus = synth_corpus(&p).unwrap();
        assert_eq!(corpus.images.len(), 2);
        assert!(corpus.images.iter().all(|im| im.strength == 0.0 && im.base.is_some()));
        assert_ne!(corpus.images[0].image, corpus.images[1].image);
    }

    #[test]
    fn params_validation() {
        assert!(synth_corpus(&SynthParams { n_bases: 0, ..small() }).is_err());
        assert!(synth_corpus(&SynthParams { variants_per_base: 0, ..small() }).is_err());
        assert!(synth_corpus(&SynthParams { width: 63, ..small() }).is_err());
        assert!(synth_corpus(&SynthParams { off_topic_max: 1.5, ..small() }).is_err());
    }

    #[test]
    fn rescale_identity() {
        let px: Vec<u8> = (0..64 * 64 * 3).map(|i| (i * 7 % 251) as u8).collect();
        assert_eq!(rescale(&px, 64, 64, 1.0), px);
    }
}
