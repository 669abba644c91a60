//! Similarity-aware archiving of raw images.
//!
//! Images are grouped by content similarity (tag relevance ranks or clusters of
//! shared local features), each group is concatenated into one stream and
//! compressed with a long-range deduplicating compressor, and the resulting
//! compression factors are collected into reports.
//!
//! Module map:
//! - [`pnm`]: binary P5/P6 parsing and emission
//! - [`features`]: difference-of-Gaussians keypoints, 128-d descriptors, ratio-test matching
//! - [`similarity`]: thresholded shared-feature graph, clusters, photo group strategies
//! - [`longrange`]: rolling-hash long-range matcher, second-stage backends, `LRC1` container
//! - [`archive`]: the `SIMG` group archive and compression factor
//! - [`bench`]: synthetic corpus, experiment sweeps, statistics and CSV reports

pub mod archive;
pub mod bench;
pub mod features;
pub mod longrange;
pub mod pnm;
pub mod similarity;
pub mod varint;

pub use archive::{compression_factor, pack, unpack, unpack_to_dir, ArchiveError, CfRecord};
pub use features::{extract_features, match_features, FeatureSet, MatchResult, ScaleSpaceParams};
pub use longrange::{compress, decompress, lr_decode, lr_encode, BackendSpec, LrParams, TokenStream};
pub use pnm::{parse_pnm, to_grayscale, write_pnm, RawImage};
pub use similarity::{
    build_graph, connected_components, largest_cluster, mixed_group, sift_picked, top_n, Cluster,
    ManifestEntry, PhotoGroup, SimilarityGraph, Strategy,
};
