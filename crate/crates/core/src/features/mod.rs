//! Scale-invariant local features and shared-feature counting.
//!
//! Keypoints are extrema of a difference-of-Gaussians pyramid, refined to
//! subpixel accuracy and filtered by contrast and edge response. Each keypoint
//! gets one or more dominant orientations and a 4x4x8 gradient histogram
//! descriptor. Two feature sets are compared with an exhaustive
//! nearest-neighbour search and the distance-ratio test.

pub mod cache;
mod descriptor;
mod detect;
pub mod image;
mod matching;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pnm::{to_grayscale, RawImage};

pub use descriptor::DESCRIPTOR_LEN;
pub use matching::{distance_sq, match_features, match_features_with, MatchParams, MatchResult};

use self::image::GrayF32;

/// Smallest accepted input side.
pub const MIN_SIDE: u32 = 32;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("image is {width}x{height}, feature extraction needs at least {MIN_SIDE} px per side")]
    ImageTooSmall { width: u32, height: u32 },
    #[error("invalid scale-space parameters: {0}")]
    InvalidParams(&'static str),
    #[error("feature cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaleSpaceParams {
    /// `None` builds octaves until the smaller side would drop below 16 px.
    pub octaves: Option<usize>,
    pub scales_per_octave: usize,
    pub base_sigma: f32,
    /// Minimum |DoG| at the refined extremum, on [0, 1] intensities, divided
    /// by `scales_per_octave`.
    pub contrast_threshold: f32,
    pub edge_ratio: f32,
    /// Keypoints closer than this to the image edge are dropped.
    pub border: u32,
    /// Images larger than this are area-downscaled before extraction.
    pub max_dimension: Option<u32>,
}

impl Default for ScaleSpaceParams {
    fn default() -> Self {
        Self {
            octaves: None,
            scales_per_octave: 3,
            base_sigma: 1.6,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            border: 8,
            max_dimension: Some(512),
        }
    }
}

impl ScaleSpaceParams {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.octaves == Some(0) {
            return Err(FeatureError::InvalidParams("octaves must be at least 1"));
        }
        if self.scales_per_octave == 0 {
            return Err(FeatureError::InvalidParams("scales_per_octave must be at least 1"));
        }
        if self.base_sigma.is_nan() || self.base_sigma <= 0.0 {
            return Err(FeatureError::InvalidParams("base_sigma must be positive"));
        }
        if self.contrast_threshold.is_nan() || self.contrast_threshold <= 0.0 {
            return Err(FeatureError::InvalidParams("contrast_threshold must be positive"));
        }
        if self.edge_ratio.is_nan() || self.edge_ratio <= 1.0 {
            return Err(FeatureError::InvalidParams("edge_ratio must exceed 1"));
        }
        if self.max_dimension.is_some_and(|d| d < MIN_SIDE) {
            return Err(FeatureError::InvalidParams("max_dimension below minimum side"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    /// Subpixel position in octave-0 (extraction image) coordinates.
    pub x: f32,
    pub y: f32,
    pub sigma: f32,
    /// Radians in [0, 2π), measured from +x towards +y (image rows grow downwards).
    pub orientation: f32,
    pub octave: u32,
    pub layer: u32,
    pub response: f32,
}

/// Unit-length 4x4x8 gradient histogram with every component at most 0.2.
#[derive(Clone, PartialEq)]
pub struct Descriptor(pub [f32; DESCRIPTOR_LEN]);

impl std::fmt::Debug for Descriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Descriptor(|v|={:.4})", self.norm())
    }
}

impl Descriptor {
    pub fn norm(&self) -> f32 {
        self.0.iter().map(|v| v * v).sum::<f32>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSet {
    pub image_id: String,
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
}

impl FeatureSet {
    pub fn empty(image_id: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

/// Extracts keypoints and descriptors from any P5/P6 image.
pub fn extract_features(
    image_id: &str,
    img: &RawImage,
    params: &ScaleSpaceParams,
) -> Result<FeatureSet, FeatureError> {
    params.validate()?;
    if img.width() < MIN_SIDE || img.height() < MIN_SIDE {
        return Err(FeatureError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
        });
    }
    let gray = to_grayscale(img);
    let mut base = GrayF32::from_bytes(
        gray.width() as usize,
        gray.height() as usize,
        gray.pixels(),
        gray.maxval(),
    );
    if let Some(limit) = params.max_dimension {
        let longest = base.width.max(base.height);
        if longest > limit as usize {
            let scale = limit as f64 / longest as f64;
            let w = ((base.width as f64 * scale).round() as usize).max(1);
            let h = ((base.height as f64 * scale).round() as usize).max(1);
            base = base.resize_area(w, h);
        }
    }
    let (keypoints, descriptors) = detect::detect(&base, params);
    Ok(FeatureSet {
        image_id: image_id.to_string(),
        keypoints,
        descriptors,
    })
}
