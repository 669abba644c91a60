//! Binary netpbm images: P5 (grayscale) and P6 (RGB), 8-bit samples only.
//!
//! The parser is strict. Exactly one whitespace byte separates `maxval` from the
//! payload, the payload must be exactly `width * height * channels` bytes, and
//! anything after it is rejected.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PnmError {
    #[error("unknown magic number (only binary P5 and P6 are supported)")]
    UnknownMagic,
    #[error("maxval {0} needs 16-bit samples, only 8-bit images are supported")]
    UnsupportedMaxval(u32),
    #[error("malformed header: {0}")]
    MalformedHeader(&'static str),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("{0} trailing bytes after the payload")]
    TrailingGarbage(usize),
    #[error("sample value {value} at byte {offset} exceeds maxval {maxval}")]
    SampleOutOfRange { offset: usize, value: u8, maxval: u8 },
    #[error("invalid image: {0}")]
    InvalidImage(&'static str),
}

/// A decoded raw image. Pixels are row-major and channel-interleaved.
#[derive(Clone, PartialEq, Eq)]
pub struct RawImage {
    width: u32,
    height: u32,
    channels: u8,
    maxval: u8,
    pixels: Vec<u8>,
}

impl fmt::Debug for RawImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RawImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .field("maxval", &self.maxval)
            .field("pixels", &format_args!("[{} bytes]", self.pixels.len()))
            .finish()
    }
}

impl RawImage {
    /// Builds an image, checking every invariant of the type.
    pub fn new(
        width: u32,
        height: u32,
        channels: u8,
        maxval: u8,
        pixels: Vec<u8>,
    ) -> Result<Self, PnmError> {
        if width == 0 || height == 0 {
            return Err(PnmError::InvalidImage("dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(PnmError::InvalidImage("channels must be 1 or 3"));
        }
        if maxval == 0 {
            return Err(PnmError::InvalidImage("maxval must be at least 1"));
        }
        let expected = payload_len(width, height, channels)
            .ok_or(PnmError::InvalidImage("dimensions overflow"))?;
        if pixels.len() != expected {
            return Err(PnmError::InvalidImage("pixel buffer length mismatch"));
        }
        check_samples(&pixels, maxval)?;
        Ok(Self {
            width,
            height,
            channels,
            maxval,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn maxval(&self) -> u8 {
        self.maxval
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }
}

fn payload_len(width: u32, height: u32, channels: u8) -> Option<usize> {
    (width as usize)
        .checked_mul(height as usize)?
        .checked_mul(channels as usize)
}

fn check_samples(pixels: &[u8], maxval: u8) -> Result<(), PnmError> {
    if maxval == u8::MAX {
        return Ok(());
    }
    match pixels.iter().position(|&v| v > maxval) {
        Some(offset) => Err(PnmError::SampleOutOfRange {
            offset,
            value: pixels[offset],
            maxval,
        }),
        None => Ok(()),
    }
}

struct HeaderReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.data.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.data.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &'static str) -> Result<u64, PnmError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        let mut value: u64 = 0;
        while let Some(&b) = self.data.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(u64::from(b - b'0')))
                .ok_or(PnmError::MalformedHeader("header number overflows"))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(PnmError::MalformedHeader(what));
        }
        Ok(value)
    }
}

/// Parses a binary P5/P6 image.
pub fn parse_pnm(data: &[u8]) -> Result<RawImage, PnmError> {
    let channels = match data.get(..2) {
        Some(b"P5") => 1u8,
        Some(b"P6") => 3u8,
        _ => return Err(PnmError::UnknownMagic),
    };
    let mut reader = HeaderReader { data, pos: 2 };
    match data.get(2) {
        Some(b) if b.is_ascii_whitespace() || *b == b'#' => {}
        _ => return Err(PnmError::MalformedHeader("missing separator after magic")),
    }
    let width = reader.number("missing width")?;
    let height = reader.number("missing height")?;
    let maxval = reader.number("missing maxval")?;
    if width == 0 || height == 0 {
        return Err(PnmError::MalformedHeader("zero dimension"));
    }
    if width > u64::from(u32::MAX) || height > u64::from(u32::MAX) {
        return Err(PnmError::MalformedHeader("dimension too large"));
    }
    if maxval == 0 {
        return Err(PnmError::MalformedHeader("maxval must be at least 1"));
    }
    if maxval > 255 {
        if maxval > 65535 {
            return Err(PnmError::MalformedHeader("maxval out of range"));
        }
        return Err(PnmError::UnsupportedMaxval(maxval as u32));
    }
    match data.get(reader.pos) {
        Some(b) if b.is_ascii_whitespace() => reader.pos += 1,
        Some(_) => return Err(PnmError::MalformedHeader("garbage after maxval")),
        None => {
            return Err(PnmError::MalformedHeader(
                "missing whitespace byte after maxval",
            ))
        }
    }

    let (width, height, maxval) = (width as u32, height as u32, maxval as u8);
    let expected = payload_len(width, height, channels)
        .ok_or(PnmError::MalformedHeader("dimensions overflow"))?;
    let payload = &data[reader.pos..];
    if payload.len() < expected {
        return Err(PnmError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(PnmError::TrailingGarbage(payload.len() - expected));
    }
    check_samples(payload, maxval)?;
    Ok(RawImage {
        width,
        height,
        channels,
        maxval,
        pixels: payload.to_vec(),
    })
}

/// Emits the canonical encoding: `P5`/`P6`, one line for the dimensions, one
/// for maxval, then the raw payload.
pub fn write_pnm(img: &RawImage) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let header = format!("{magic}\n{} {}\n{}\n", img.width, img.height, img.maxval);
    let mut out = Vec::with_capacity(header.len() + img.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.pixels);
    out
}

/// BT.601 luma. Grayscale input is returned unchanged.
pub fn to_grayscale(img: &RawImage) -> RawImage {
    if img.channels == 1 {
        return img.clone();
    }
    let pixels = img
        .pixels
        .chunks_exact(3)
        .map(|px| {
            let weighted =
                299 * u32::from(px[0]) + 587 * u32::from(px[1]) + 114 * u32::from(px[2]);
            ((weighted + 500) / 1000).min(u32::from(img.maxval)) as u8
        })
        .collect();
    RawImage {
        width: img.width,
        height: img.height,
        channels: 1,
        maxval: img.maxval,
        pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn with_payload(header: &str, payload: &[u8]) -> Vec<u8> {
        let mut v = header.as_bytes().to_vec();
        v.extend_from_slice(payload);
        v
    }

    #[test]
    fn minimal_p5() {
        let img = parse_pnm(&with_payload("P5\n2 2\n255\n", &[0, 1, 2, 3])).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (2, 2, 1));
        assert_eq!(img.maxval(), 255);
        assert_eq!(img.pixels(), &[0, 1, 2, 3]);
    }

    #[test]
    fn single_red_pixel() {
        let img = parse_pnm(&with_payload("P6\n1 1\n255\n", &[255, 0, 0])).unwrap();
        assert_eq!(img.channels(), 3);
        assert_eq!(img.pixels(), &[255, 0, 0]);
        assert_eq!(write_pnm(&img), with_payload("P6\n1 1\n255\n", &[255, 0, 0]));
    }

    #[test]
    fn payload_starting_with_whitespace_byte() {
        // The first payload byte is 0x0a; only one separator byte may be consumed.
        let img = parse_pnm(&with_payload("P5 1 2 255\n", &[b'\n', 7])).unwrap();
        assert_eq!(img.pixels(), &[b'\n', 7]);
    }

    #[test]
    fn error_classes() {
        assert_eq!(parse_pnm(b"P3\n1 1\n255\n1 2 3"), Err(PnmError::UnknownMagic));
        assert_eq!(parse_pnm(b""), Err(PnmError::UnknownMagic));
        assert_eq!(
            parse_pnm(&with_payload("P5\n1 1\n65535\n", &[0, 0])),
            Err(PnmError::UnsupportedMaxval(65535))
        );
        assert!(matches!(
            parse_pnm(&with_payload("P5\n2 2\n255\n", &[1, 2, 3])),
            Err(PnmError::TruncatedPayload { expected: 4, found: 3 })
        ));
        assert_eq!(
            parse_pnm(&with_payload("P5\n1 1\n255\n", &[1, 2])),
            Err(PnmError::TrailingGarbage(1))
        );
        assert!(matches!(
            parse_pnm(b"P5\n1 x\n255\n\x00"),
            Err(PnmError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_pnm(b"P5\n0 1\n255\n"),
            Err(PnmError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_pnm(&with_payload("P5\n1 1\n15\n", &[16])),
            Err(PnmError::SampleOutOfRange { value: 16, .. })
        ));
    }

    #[test]
    fn luma_weights() {
        let img = RawImage::new(3, 1, 3, 255, vec![255, 255, 255, 255, 0, 0, 0, 255, 0]).unwrap();
        assert_eq!(to_grayscale(&img).pixels(), &[255, 76, 150]);
    }

    #[test]
    fn grayscale_is_identity_on_single_channel() {
        let img = RawImage::new(2, 1, 1, 9, vec![3, 9]).unwrap();
        assert_eq!(to_grayscale(&img), img);
    }

    fn arb_image() -> impl Strategy<Value = RawImage> {
        (1u32..12, 1u32..12, prop_oneof![Just(1u8), Just(3u8)], 1u8..=255).prop_flat_map(
            |(w, h, c, maxval)| {
                let len = (w * h * c as u32) as usize;
                proptest::collection::vec(0..=maxval, len)
                    .prop_map(move |px| RawImage::new(w, h, c, maxval, px).unwrap())
            },
        )
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(img in arb_image()) {
            prop_assert_eq!(parse_pnm(&write_pnm(&img)).unwrap(), img);
        }

        #[test]
        fn grayscale_length_and_idempotence(img in arb_image()) {
            let gray = to_grayscale(&img);
            prop_assert_eq!(gray.pixels().len(), (img.width() * img.height()) as usize);
            prop_assert_eq!(to_grayscale(&gray), gray.clone());
            prop_assert!(gray.pixels().iter().all(|&v| v <= img.maxval()));
        }
    }
}
