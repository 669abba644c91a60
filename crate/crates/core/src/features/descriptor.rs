//! 4x4 spatial grid of 8-bin gradient orientation histograms.

use std::f32::consts::PI;

use super::image::GrayF32;
use super::Descriptor;

const GRID: usize = 4;
const BINS: usize = 8;
pub const DESCRIPTOR_LEN: usize = GRID * GRID * BINS;
/// Width of one grid cell in units of the keypoint scale.
const CELL_SCALE: f32 = 3.0;
pub(crate) const CLAMP: f32 = 0.2;

pub(crate) fn compute(img: &GrayF32, x: f32, y: f32, sigma: f32, angle: f32) -> Option<Descriptor> {
    let cell = CELL_SCALE * sigma;
    let radius = (cell * std::f32::consts::SQRT_2 * (GRID as f32 + 1.0) * 0.5).round() as i64;
    let (sin_t, cos_t) = angle.sin_cos();
    let cx = x.round() as i64;
    let cy = y.round() as i64;
    // Fractional part of the keypoint position, so samples are taken relative
    // to the subpixel centre.
    let (fx, fy) = (x - cx as f32, y - cy as f32);
    let weight_scale = -1.0 / (2.0 * (0.5 * GRID as f32).powi(2));
    let half = GRID as f32 / 2.0 - 0.5;

    // Padded accumulator so trilinear spill-over needs no bounds checks.
    let mut hist = [[[0.0f32; BINS + 1]; GRID + 2]; GRID + 2];
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
            let (ox, oy) = (dx as f32 - fx, dy as f32 - fy);
            // Offset in the keypoint frame, in cell units.
            let c = (ox * cos_t + oy * sin_t) / cell;
            let r = (-ox * sin_t + oy * cos_t) / cell;
            let cbin = c + half;
            let rbin = r + half;
            if cbin <= -1.0 || cbin >= GRID as f32 || rbin <= -1.0 || rbin >= GRID as f32 {
                continue;
            }
            let (px, py) = (px as usize, py as usize);
            let gx = img.at(px + 1, py) - img.at(px - 1, py);
            let gy = img.at(px, py + 1) - img.at(px, py - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let rel = (gy.atan2(gx) - angle).rem_euclid(2.0 * PI);
            let obin = (rel * BINS as f32 / (2.0 * PI)).min(BINS as f32 - 1e-4);
            let weight = mag * ((c * c + r * r) * weight_scale).exp();

            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (dr, dc, dob) = (rbin - r0, cbin - c0, obin - o0);
            let (ri, ci, oi) = ((r0 as i64 + 1) as usize, (c0 as i64 + 1) as usize, o0 as usize);
            for (a, wr) in [(0usize, 1.0 - dr), (1, dr)] {
                for (b, wc) in [(0usize, 1.0 - dc), (1, dc)] {
                    for (k, wo) in [(0usize, 1.0 - dob), (1, dob)] {
                        hist[ri + a][ci + b][oi + k] += weight * wr * wc * wo;
                    }
                }
            }
        }
    }

    let mut v = [0.0f32; DESCRIPTOR_LEN];
    for r in 0..GRID {
        for c in 0..GRID {
            let cellh = &hist[r + 1][c + 1];
            for o in 0..BINS {
                // Bin BINS wraps to 0.
                let wrap = if o == 0 { cellh[BINS] } else { 0.0 };
                v[(r * GRID + c) * BINS + o] = cellh[o] + wrap;
            }
        }
    }
    clamp_normalize(&mut v).then_some(Descriptor(v))
}

/// Scales `v` to unit length with no component above [`CLAMP`].
///
/// Solves for the factor `s` with `|min(s v, CLAMP)| = 1`, i.e. the fixed point
/// of repeated clamp-and-renormalise. Returns `false` when no such vector
/// exists (fewer than 1 / CLAMP² non-zero components).
pub(crate) fn clamp_normalize(v: &mut [f32; DESCRIPTOR_LEN]) -> bool {
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return false;
    }
    let nonzero = v.iter().filter(|x| **x > 0.0).count();
    if (nonzero as f32) * CLAMP * CLAMP < 1.0 {
        return false;
    }
    let mut sorted: Vec<f64> = v.iter().map(|&x| f64::from(x)).filter(|x| *x > 0.0).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let clamp = f64::from(CLAMP);
    // tail[m] = sum of squares of sorted[m..]
    let mut tail = vec![0.0f64; sorted.len() + 1];
    for i in (0..sorted.len()).rev() {
        tail[i] = tail[i + 1] + sorted[i] * sorted[i];
    }
    let mut factor = None;
    for m in 0..sorted.len() {
        let rest = 1.0 - clamp * clamp * m as f64;
        if rest <= 0.0 || tail[m] <= 0.0 {
            break;
        }
        let s = (rest / tail[m]).sqrt();
        let head_ok = m == 0 || s * sorted[m - 1] >= clamp;
        if head_ok && s * sorted[m] <= clamp {
            factor = Some(s);
            break;
        }
    }
    let Some(s) = factor else {
        return false;
    };
    for x in v.iter_mut() {
        *x = (f64::from(*x) * s).min(clamp) as f32;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clamp_normalize_meets_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..2000 {
            let mut v = [0.0f32; DESCRIPTOR_LEN];
            let spiky = trial % 3 == 0;
            for x in v.iter_mut() {
                *x = if spiky && rng.gen_bool(0.7) { 0.0 } else { rng.gen::<f32>().powi(4) };
            }
            if !clamp_normalize(&mut v) {
                assert!(v.iter().filter(|x| **x > 0.0).count() < 25);
                continue;
            }
            let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-3, "norm {norm}");
            assert!(v.iter().all(|&x| (0.0..=CLAMP + 1e-3).contains(&x)));
        }
    }

    #[test]
    fn clamp_normalize_agrees_with_iteration() {
        // Repeated clamp-then-renormalise converges to the same vector.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut v = [0.0f32; DESCRIPTOR_LEN];
        for (i, x) in v.iter_mut().enumerate() {
            *x = if i < 10 { 5.0 } else { rng.gen::<f32>() };
        }
        let mut iter: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
        for _ in 0..10_000 {
            let n = iter.iter().map(|x| x * x).sum::<f64>().sqrt();
            iter.iter_mut().for_each(|x| *x = (*x / n).min(0.2));
        }
        let n = iter.iter().map(|x| x * x).sum::<f64>().sqrt();
        iter.iter_mut().for_each(|x| *x /= n);
        assert!(clamp_normalize(&mut v));
        for (a, b) in v.iter().zip(&iter) {
            assert!((f64::from(*a) - b).abs() < 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn sparse_vector_is_rejected() {
        let mut v = [0.0f32; DESCRIPTOR_LEN];
        v[..10].fill(1.0);
        assert!(!clamp_normalize(&mut v));
        let mut v = [0.0f32; DESCRIPTOR_LEN];
        assert!(!clamp_normalize(&mut v));
    }
}
