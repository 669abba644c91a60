//! Exhaustive nearest-neighbour matching with the distance-ratio test.

use serde::{Deserialize, Serialize};

use super::{Descriptor, FeatureSet, DESCRIPTOR_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchParams {
    pub ratio: f32,
    pub two_sided: bool,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            ratio: 0.6,
            two_sided: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchResult {
    /// (index into A, index into B), sorted by the A index.
    pub pairs: Vec<(usize, usize)>,
}

impl MatchResult {
    pub fn shared_count(&self) -> usize {
        self.pairs.len()
    }
}

/// Squared Euclidean distance. Symmetric bit-for-bit in its arguments.
#[inline]
pub fn distance_sq(a: &Descriptor, b: &Descriptor) -> f32 {
    let mut lanes = [0.0f32; 8];
    for (ca, cb) in a.0.chunks_exact(8).zip(b.0.chunks_exact(8)) {
        for k in 0..8 {
            let d = ca[k] - cb[k];
            lanes[k] += d * d;
        }
    }
    ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]))
}

const _: () = assert!(DESCRIPTOR_LEN.is_multiple_of(8));

#[derive(Clone, Copy)]
struct Nearest {
    index: usize,
    best: f32,
    second: f32,
}

impl Nearest {
    fn passes(&self, ratio: f32) -> bool {
        // A lone candidate has no runner-up and always passes.
        self.best.sqrt() < ratio * self.second.sqrt()
    }
}

fn nearest<I: Iterator<Item = f32>>(dists: I) -> Option<Nearest> {
    let mut out: Option<Nearest> = None;
    for (index, d) in dists.enumerate() {
        match &mut out {
            None => {
                out = Some(Nearest {
                    index,
                    best: d,
                    second: f32::INFINITY,
                })
            }
            Some(n) => {
                if d < n.best {
                    n.second = n.best;
                    n.best = d;
                    n.index = index;
                } else if d < n.second {
                    n.second = d;
                }
            }
        }
    }
    out
}

pub fn match_features(a: &FeatureSet, b: &FeatureSet, ratio: f32, two_sided: bool) -> MatchResult {
    match_features_with(a, b, &MatchParams { ratio, two_sided })
}

/// Pairs `(i, j)` where `j` is the nearest B descriptor to `a[i]` and passes the
/// ratio test; with `two_sided`, `i` must also be the ratio-passing nearest A
/// descriptor to `b[j]`. One-sided results keep, for each `j`, only the
/// closest A claimant so indices stay unique.
pub fn match_features_with(a: &FeatureSet, b: &FeatureSet, params: &MatchParams) -> MatchResult {
    let (n, m) = (a.descriptors.len(), b.descriptors.len());
    if n == 0 || m == 0 {
        return MatchResult::default();
    }
    let mut dist = vec![0.0f32; n * m];
    for (i, da) in a.descriptors.iter().enumerate() {
        let row = &mut dist[i * m..(i + 1) * m];
        for (slot, db) in row.iter_mut().zip(&b.descriptors) {
            *slot = distance_sq(da, db);
        }
    }
    let forward: Vec<Nearest> = (0..n)
        .map(|i| nearest(dist[i * m..(i + 1) * m].iter().copied()).expect("m > 0"))
        .collect();

    let mut pairs = Vec::new();
    if params.two_sided {
        let backward: Vec<Nearest> = (0..m)
            .map(|j| nearest((0..n).map(|i| dist[i * m + j])).expect("n > 0"))
            .collect();
        for (i, f) in forward.iter().enumerate() {
            let back = &backward[f.index];
            if back.index == i && f.passes(params.ratio) && back.passes(params.ratio) {
                pairs.push((i, f.index));
            }
        }
    } else {
        let mut claimant: Vec<Option<usize>> = vec![None; m];
        for (i, f) in forward.iter().enumerate() {
            let slot = &mut claimant[f.index];
            match slot {
                Some(prev) if forward[*prev].best <= f.best => {}
                _ => *slot = Some(i),
            }
        }
        for (i, f) in forward.iter().enumerate() {
            if claimant[f.index] == Some(i) && f.passes(params.ratio) {
                pairs.push((i, f.index));
            }
        }
    }
    MatchResult { pairs }
}
