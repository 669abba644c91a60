//! Gaussian / difference-of-Gaussians pyramid, extremum detection and
//! orientation assignment.

use std::f32::consts::PI;

use super::descriptor;
use super::image::GrayF32;
use super::{Descriptor, Keypoint, ScaleSpaceParams};

/// Blur already present in the input image.
const INPUT_SIGMA: f32 = 0.5;
const MIN_OCTAVE_SIDE: usize = 16;
const REFINE_STEPS: usize = 5;
const ORI_BINS: usize = 36;
const ORI_SIGMA_FACTOR: f32 = 1.5;
const ORI_RADIUS_FACTOR: f32 = 3.0 * ORI_SIGMA_FACTOR;
const ORI_PEAK_RATIO: f32 = 0.8;

pub(crate) struct Octave {
    pub gauss: Vec<GrayF32>,
    pub dog: Vec<GrayF32>,
}

pub(crate) fn octave_count(width: usize, height: usize, requested: Option<usize>) -> usize {
    let mut fit = 1;
    let mut side = width.min(height) / 2;
    while side >= MIN_OCTAVE_SIDE {
        fit += 1;
        side /= 2;
    }
    requested.map_or(fit, |r| r.clamp(1, fit))
}

pub(crate) fn build_pyramid(base: &GrayF32, p: &ScaleSpaceParams) -> Vec<Octave> {
    let s = p.scales_per_octave;
    let k = 2f32.powf(1.0 / s as f32);
    let first_blur = (p.base_sigma * p.base_sigma - INPUT_SIGMA * INPUT_SIGMA)
        .max(0.01)
        .sqrt();
    // Incremental blur taking level i-1 to level i within an octave.
    let increments: Vec<f32> = (1..s + 3)
        .map(|i| {
            let prev = p.base_sigma * k.powi(i as i32 - 1);
            let next = prev * k;
            (next * next - prev * prev).sqrt()
        })
        .collect();

    let n = octave_count(base.width, base.height, p.octaves);
    let mut octaves: Vec<Octave> = Vec::with_capacity(n);
    let mut seed = base.blur(first_blur);
    for o in 0..n {
        if o > 0 {
            seed = octaves[o - 1].gauss[s].decimate();
        }
        let mut gauss = Vec::with_capacity(s + 3);
        gauss.push(seed.clone());
        for sigma in &increments {
            let next = gauss.last().unwrap().blur(*sigma);
            gauss.push(next);
        }
        let dog = gauss.windows(2).map(|w| w[1].subtract(&w[0])).collect();
        octaves.push(Octave { gauss, dog });
    }
    octaves
}

fn is_extremum(dog: &[GrayF32], layer: usize, x: usize, y: usize) -> bool {
    let v = dog[layer].at(x, y);
    let maximum = v > 0.0;
    for (li, img) in dog.iter().enumerate().take(layer + 2).skip(layer - 1) {
        let w = img.width;
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if li == layer && yy == y && xx == x {
                    continue;
                }
                let n = img.data[yy * w + xx];
                if (maximum && n >= v) || (!maximum && n <= v) {
                    return false;
                }
            }
        }
    }
    true
}

struct Refined {
    x: usize,
    y: usize,
    layer: usize,
    offset: [f32; 3],
    value: f32,
}

/// Quadratic fit of the DoG around a discrete extremum (offsets in x, y, scale).
fn refine(dog: &[GrayF32], mut layer: usize, mut x: usize, mut y: usize, s: usize) -> Option<Refined> {
    let w = dog[0].width;
    let h = dog[0].height;
    for _ in 0..REFINE_STEPS {
        let (prev, cur, next) = (&dog[layer - 1], &dog[layer], &dog[layer + 1]);
        let v = cur.at(x, y);
        let dx = (cur.at(x + 1, y) - cur.at(x - 1, y)) * 0.5;
        let dy = (cur.at(x, y + 1) - cur.at(x, y - 1)) * 0.5;
        let ds = (next.at(x, y) - prev.at(x, y)) * 0.5;
        let dxx = cur.at(x + 1, y) + cur.at(x - 1, y) - 2.0 * v;
        let dyy = cur.at(x, y + 1) + cur.at(x, y - 1) - 2.0 * v;
        let dss = next.at(x, y) + prev.at(x, y) - 2.0 * v;
        let dxy = (cur.at(x + 1, y + 1) - cur.at(x - 1, y + 1) - cur.at(x + 1, y - 1)
            + cur.at(x - 1, y - 1))
            * 0.25;
        let dxs = (next.at(x + 1, y) - next.at(x - 1, y) - prev.at(x + 1, y) + prev.at(x - 1, y))
            * 0.25;
        let dys = (next.at(x, y + 1) - next.at(x, y - 1) - prev.at(x, y + 1) + prev.at(x, y - 1))
            * 0.25;
        let hess = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
        let offset = solve3(hess, [-dx, -dy, -ds])?;
        if offset.iter().all(|o| o.abs() < 0.5) {
            let value = v + 0.5 * (dx * offset[0] + dy * offset[1] + ds * offset[2]);
            return Some(Refined {
                x,
                y,
                layer,
                offset,
                value,
            });
        }
        if offset.iter().any(|o| o.abs() > 1e3) {
            return None;
        }
        let nx = x as i64 + offset[0].round() as i64;
        let ny = y as i64 + offset[1].round() as i64;
        let nl = layer as i64 + offset[2].round() as i64;
        if nl < 1 || nl > s as i64 || nx < 1 || ny < 1 || nx >= w as i64 - 1 || ny >= h as i64 - 1 {
            return None;
        }
        x = nx as usize;
        y = ny as usize;
        layer = nl as usize;
    }
    None
}

/// Cramer's rule; `None` for a (near-)singular system.
fn solve3(m: [[f32; 3]; 3], b: [f32; 3]) -> Option<[f32; 3]> {
    let det = |m: &[[f32; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if d.abs() < 1e-12 || !d.is_finite() {
        return None;
    }
    let mut out = [0.0f32; 3];
    for (col, slot) in out.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = b[row];
        }
        *slot = det(&mc) / d;
    }
    Some(out)
}

fn on_edge(cur: &GrayF32, x: usize, y: usize, edge_ratio: f32) -> bool {
    let v = cur.at(x, y);
    let dxx = cur.at(x + 1, y) + cur.at(x - 1, y) - 2.0 * v;
    let dyy = cur.at(x, y + 1) + cur.at(x, y - 1) - 2.0 * v;
    let dxy = (cur.at(x + 1, y + 1) - cur.at(x - 1, y + 1) - cur.at(x + 1, y - 1)
        + cur.at(x - 1, y - 1))
        * 0.25;
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    det <= 0.0 || tr * tr * edge_ratio >= (edge_ratio + 1.0).powi(2) * det
}

/// Dominant gradient orientations around (x, y) in octave coordinates.
fn orientations(img: &GrayF32, x: f32, y: f32, sigma: f32) -> Vec<f32> {
    let cx = x.round() as i64;
    let cy = y.round() as i64;
    let radius = (ORI_RADIUS_FACTOR * sigma).round() as i64;
    let weight_scale = -1.0 / (2.0 * (ORI_SIGMA_FACTOR * sigma).powi(2));
    let mut hist = [0.0f32; ORI_BINS];
    for dy in -radius..=radius {
        let py = cy + dy;
        if py < 1 || py >= img.height as i64 - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let px = cx + dx;
            if px < 1 || px >= img.width as i64 - 1 {
                continue;
            }
            let (px, py) = (px as usize, py as usize);
            let gx = img.at(px + 1, py) - img.at(px - 1, py);
            let gy = img.at(px, py + 1) - img.at(px, py - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let weight = (((dx * dx + dy * dy) as f32) * weight_scale).exp();
            let angle = gy.atan2(gx).rem_euclid(2.0 * PI);
            let bin = ((angle * ORI_BINS as f32 / (2.0 * PI)).round() as usize) % ORI_BINS;
            hist[bin] += weight * mag;
        }
    }
    // [1 4 6 4 1] / 16 circular smoothing.
    let mut smooth = [0.0f32; ORI_BINS];
    for (i, s) in smooth.iter_mut().enumerate() {
        let at = |o: i64| hist[(i as i64 + o).rem_euclid(ORI_BINS as i64) as usize];
        *s = (at(-2) + at(2)) * (1.0 / 16.0) + (at(-1) + at(1)) * (4.0 / 16.0) + at(0) * (6.0 / 16.0);
    }
    let max = smooth.iter().copied().fold(0.0f32, f32::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..ORI_BINS {
        let l = smooth[(i + ORI_BINS - 1) % ORI_BINS];
        let r = smooth[(i + 1) % ORI_BINS];
        let c = smooth[i];
        if c > l && c > r && c >= ORI_PEAK_RATIO * max {
            let shift = 0.5 * (l - r) / (l - 2.0 * c + r);
            let bin = (i as f32 + shift).rem_euclid(ORI_BINS as f32);
            let angle = (bin * 2.0 * PI / ORI_BINS as f32).rem_euclid(2.0 * PI);
            // rem_euclid can round up to exactly 2π in f32.
            out.push(if angle >= 2.0 * PI { 0.0 } else { angle });
        }
    }
    out
}

pub(crate) fn detect(base: &GrayF32, p: &ScaleSpaceParams) -> (Vec<Keypoint>, Vec<Descriptor>) {
    let s = p.scales_per_octave;
    let pyramid = build_pyramid(base, p);
    let threshold = p.contrast_threshold / s as f32;
    let prefilter = 0.5 * threshold;
    let border = p.border as f32;
    let (w0, h0) = (base.width as f32, base.height as f32);

    let mut keypoints = Vec::new();
    let mut descriptors = Vec::new();
    for (o, octave) in pyramid.iter().enumerate() {
        let (w, h) = (octave.dog[0].width, octave.dog[0].height);
        if w < 3 || h < 3 {
            continue;
        }
        let scale = 2f32.powi(o as i32);
        for layer in 1..=s {
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let v = octave.dog[layer].at(x, y);
                    if v.abs() <= prefilter || !is_extremum(&octave.dog, layer, x, y) {
                        continue;
                    }
                    let Some(r) = refine(&octave.dog, layer, x, y, s) else {
                        continue;
                    };
                    if r.value.abs() < threshold {
                        continue;
                    }
                    if on_edge(&octave.dog[r.layer], r.x, r.y, p.edge_ratio) {
                        continue;
                    }
                    let ox = r.x as f32 + r.offset[0];
                    let oy = r.y as f32 + r.offset[1];
                    let (kx, ky) = (ox * scale, oy * scale);
                    if kx < border || ky < border || kx >= w0 - border || ky >= h0 - border {
                        continue;
                    }
                    let octave_sigma =
                        p.base_sigma * 2f32.powf((r.layer as f32 + r.offset[2]) / s as f32);
                    let gauss = &octave.gauss[r.layer];
                    for angle in orientations(gauss, ox, oy, octave_sigma) {
                        let Some(desc) = descriptor::compute(gauss, ox, oy, octave_sigma, angle)
                        else {
                            continue;
                        };
                        keypoints.push(Keypoint {
                            x: kx,
                            y: ky,
                            sigma: octave_sigma * scale,
                            orientation: angle,
                            octave: o as u32,
                            layer: r.layer as u32,
                            response: r.value.abs(),
                        });
                        descriptors.push(desc);
                    }
                }
            }
        }
    }
    (keypoints, descriptors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn octave_counts() {
        assert_eq!(octave_count(32, 32, None), 2);
        assert_eq!(octave_count(256, 256, None), 5);
        assert_eq!(octave_count(256, 40, None), 2);
        assert_eq!(octave_count(256, 256, Some(2)), 2);
        assert_eq!(octave_count(256, 256, Some(50)), 5);
    }

    #[test]
    fn solve3_identity() {
        let m = [[2.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(solve3(m, [2.0, 2.0, -3.0]).unwrap(), [1.0, 0.5, -3.0]);
        assert!(solve3([[0.0; 3]; 3], [1.0; 3]).is_none());
    }

    #[test]
    fn pyramid_shapes() {
        let base = GrayF32::new(64, 48);
        let p = ScaleSpaceParams::default();
        let pyr = build_pyramid(&base, &p);
        assert_eq!(pyr.len(), 2);
        assert_eq!(pyr[0].gauss.len(), 6);
        assert_eq!(pyr[0].dog.len(), 5);
        assert_eq!((pyr[1].gauss[0].width, pyr[1].gauss[0].height), (32, 24));
    }
}
