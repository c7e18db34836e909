//! Face verification from SIFT keypoints grouped around facial landmarks.
//!
//! The pipeline:
//!
//! 1. [`keypoint`] extracts difference-of-Gaussians keypoints with 128-element
//!    descriptors from 8-bit PGM images ([`image`]).
//! 2. [`landmarks`] assigns keypoints to circular regions around the left eye,
//!    right eye, nose and mouth.
//! 3. [`graphmatch`] turns each regional group into a complete attributed graph
//!    and labels gallery nodes with probe nodes by probabilistic relaxation.
//! 4. [`fusion`] combines the four regional scores with Dempster's rule into a
//!    belief in "genuine" and an accept/reject decision.
//! 5. [`eval`] runs all-vs-all trials over a manifest and reports ROC, EER,
//!    accuracy and rank-1 identification.
//!
//! Batch work goes through [`exec::Exec`], which uses rayon when the
//! `parallel` feature (on by default) is enabled.

pub mod eval;
pub mod exec;
pub mod fusion;
pub mod graphmatch;
pub mod image;
pub mod keypoint;
pub mod landmarks;
pub mod pipeline;
pub mod synth;

pub use exec::Exec;
pub use fusion::{dempster_combine, fuse_region_scores, score_to_mass, FusionConfig, MassFunction};
pub use graphmatch::{relax, AttributedGraph, ProbabilityMatrix, RelaxationConfig, RelaxationResult};
pub use image::{load_image, GrayImage};
pub use keypoint::{descriptor_similarity, extract_keypoints, Keypoint, SiftConfig};
pub use landmarks::{group_keypoints, LandmarkSet, Region, RegionGroups};
pub use pipeline::{match_faces, PipelineConfig, PreparedFace};
