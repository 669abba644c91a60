//! Single-channel float images and the filters the scale space needs.

#[derive(Debug, Clone, PartialEq)]
pub struct GrayF32 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayF32 {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8], maxval: u8) -> Self {
        let scale = 1.0 / f32::from(maxval);
        Self {
            width,
            height,
            data: bytes.iter().map(|&v| f32::from(v) * scale).collect(),
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Every other pixel in both directions, starting at (0, 0).
    pub fn decimate(&self) -> Self {
        let width = (self.width / 2).max(1);
        let height = (self.height / 2).max(1);
        let mut out = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                out.data[y * width + x] = self.at(2 * x, 2 * y);
            }
        }
        out
    }

    pub fn subtract(&self, other: &Self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// Area-averaging resize (each output pixel is the mean of the source
    /// region it covers). Used for downscaling only.
    pub fn resize_area(&self, width: usize, height: usize) -> Self {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let x_spans = spans(self.width, width, sx);
        let y_spans = spans(self.height, height, sy);
        let mut out = Self::new(width, height);
        for (oy, ys) in y_spans.iter().enumerate() {
            for (ox, xs) in x_spans.iter().enumerate() {
                let mut acc = 0.0f64;
                for &(y, wy) in ys {
                    let row = &self.data[y * self.width..];
                    for &(x, wx) in xs {
                        acc += f64::from(row[x]) * wx * wy;
                    }
                }
                out.data[oy * width + ox] = (acc / (sx * sy)) as f32;
            }
        }
        out
    }

    /// Separable Gaussian blur with clamped borders.
    pub fn blur(&self, sigma: f32) -> Self {
        let kernel = gaussian_kernel(sigma);
        let r = kernel.len() / 2;
        let (w, h) = (self.width, self.height);
        let mut tmp = vec![0.0f32; w * h];
        for y in 0..h {
            let row = &self.data[y * w..(y + 1) * w];
            for x in 0..w {
                let mut acc = 0.0f32;
                for (k, &kv) in kernel.iter().enumerate() {
                    let sx = (x + k).saturating_sub(r).min(w - 1);
                    acc += kv * row[sx];
                }
                tmp[y * w + x] = acc;
            }
        }
        let mut out = Self::new(w, h);
        for y in 0..h {
            for (k, &kv) in kernel.iter().enumerate() {
                let sy = (y + k).saturating_sub(r).min(h - 1);
                let src = &tmp[sy * w..(sy + 1) * w];
                let dst = &mut out.data[y * w..(y + 1) * w];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += kv * s;
                }
            }
        }
        out
    }
}

/// Source pixel indices and coverage weights for each output pixel.
fn spans(src: usize, dst: usize, scale: f64) -> Vec<Vec<(usize, f64)>> {
    (0..dst)
        .map(|o| {
            let start = o as f64 * scale;
            let end = ((o + 1) as f64 * scale).min(src as f64);
            let mut v = Vec::new();
            let mut i = start.floor() as usize;
            while (i as f64) < end && i < src {
                let lo = start.max(i as f64);
                let hi = end.min((i + 1) as f64);
                if hi > lo {
                    v.push((i, hi - lo));
                }
                i += 1;
            }
            v
        })
        .collect()
}

pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let r = ((3.0 * sigma).ceil() as usize).max(1);
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f32> = (0..=2 * r)
        .map(|i| {
            let d = i as f32 - r as f32;
            (-d * d / denom).exp()
        })
        .collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}
