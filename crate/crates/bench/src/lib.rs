//! Inputs shared by the criterion benchmarks in `benches/`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simpack_core::bench::{synth_corpus, SynthParams};
use simpack_core::RawImage;

/// `len` bytes of seeded noise in which roughly half the content repeats
/// earlier material at long distances, the shape of concatenated similar files.
pub fn redundant_stream(len: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        if out.len() > 1 << 16 && rng.gen_bool(0.5) {
            let n = rng.gen_range(1024..16384).min(out.len() / 2);
            let from = rng.gen_range(0..out.len() - n);
            out.extend_from_within(from..from + n);
        } else {
            let mut chunk = vec![0u8; rng.gen_range(1024..16384)];
            rng.fill_bytes(&mut chunk);
            out.extend_from_slice(&chunk);
        }
    }
    out.truncate(len);
    out
}

/// The first two images of a synthetic base scene: an image and a lightly
/// perturbed near-duplicate.
pub fn image_pair(size: u32) -> (RawImage, RawImage) {
    let corpus = synth_corpus(&SynthParams {
        n_bases: 1,
        variants_per_base: 10,
        width: size,
        height: size,
        ..SynthParams::default()
    })
    .expect("valid synthetic params");
    let mut it = corpus.images.into_iter().map(|im| im.image);
    (it.next().unwrap(), it.next().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_is_deterministic_and_sized() {
        assert_eq!(redundant_stream(300_000, 1), redundant_stream(300_000, 1));
        assert_eq!(redundant_stream(12_345, 2).len(), 12_345);
    }
}
