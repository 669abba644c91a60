//! `SFT1` feature cache records.
//!
//! Layout, little-endian: magic `SFT1`, `u32` id length, id bytes (UTF-8),
//! `u32` keypoint count, then per keypoint `x y sigma orientation response` as
//! `f32`, `octave layer` as `u32`, and its 128 `f32` descriptor values.

use super::{Descriptor, FeatureError, FeatureSet, Keypoint, DESCRIPTOR_LEN};

pub const MAGIC: &[u8; 4] = b"SFT1";
const RECORD_LEN: usize = 5 * 4 + 2 * 4 + DESCRIPTOR_LEN * 4;

pub fn encode(set: &FeatureSet) -> Vec<u8> {
    let id = set.image_id.as_bytes();
    let mut out = Vec::with_capacity(12 + id.len() + set.len() * RECORD_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(id.len() as u32).to_le_bytes());
    out.extend_from_slice(id);
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    for (kp, desc) in set.keypoints.iter().zip(&set.descriptors) {
        for v in [kp.x, kp.y, kp.sigma, kp.orientation, kp.response] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&kp.octave.to_le_bytes());
        out.extend_from_slice(&kp.layer.to_le_bytes());
        for v in desc.0 {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FeatureError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| FeatureError::Cache("truncated record".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FeatureError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, FeatureError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(buf: &[u8]) -> Result<FeatureSet, FeatureError> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(FeatureError::Cache("bad magic".into()));
    }
    let id_len = c.u32()? as usize;
    let image_id = std::str::from_utf8(c.take(id_len)?)
        .map_err(|_| FeatureError::Cache("image id is not UTF-8".into()))?
        .to_string();
    let count = c.u32()? as usize;
    if count.saturating_mul(RECORD_LEN) != buf.len() - c.pos {
        return Err(FeatureError::Cache("record count disagrees with file size".into()));
    }
    let mut keypoints = Vec::with_capacity(count);
    let mut descriptors = Vec::with_capacity(count);
    for _ in 0..count {
        let (x, y, sigma, orientation, response) = (c.f32()?, c.f32()?, c.f32()?, c.f32()?, c.f32()?);
        let (octave, layer) = (c.u32()?, c.u32()?);
        keypoints.push(Keypoint {
            x,
            y,
            sigma,
            orientation,
            octave,
            layer,
            response,
        });
        let mut d = [0.0f32; DESCRIPTOR_LEN];
        for v in d.iter_mut() {
            *v = c.f32()?;
        }
        descriptors.push(Descriptor(d));
    }
    Ok(FeatureSet {
        image_id,
        keypoints,
        descriptors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureSet {
        let kp = Keypoint {
            x: 10.5,
            y: 20.25,
            sigma: 2.0,
            orientation: 1.0,
            octave: 1,
            layer: 2,
            response: 0.03,
        };
        let mut d = [0.0f32; DESCRIPTOR_LEN];
        d.iter_mut().enumerate().for_each(|(i, v)| *v = i as f32 / 1000.0);
        FeatureSet {
            image_id: "ünïcode/id".into(),
            keypoints: vec![kp, kp],
            descriptors: vec![Descriptor(d), Descriptor([0.0; DESCRIPTOR_LEN])],
        }
    }

    #[test]
    fn round_trip() {
        let set = sample();
        let bytes = encode(&set);
        assert_eq!(&bytes[..4], b"SFT1");
        assert_eq!(bytes.len(), 4 + 4 + set.image_id.len() + 4 + 2 * RECORD_LEN);
        assert_eq!(decode(&bytes).unwrap(), set);
    }

    #[test]
    fn rejects_damage() {
        let bytes = encode(&sample());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
