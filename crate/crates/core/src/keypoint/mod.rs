//! Scale-invariant keypoints: extraction, similarity and CSV persistence.

mod io;
mod sift;

use thiserror::Error;

pub use self::io::{load_keypoints, read_keypoints, save_keypoints, write_keypoints, KeypointFileError};
pub use self::sift::{extract_keypoints, SiftConfig};

/// Number of elements in a keypoint descriptor (4x4 spatial cells, 8 orientation bins).
pub const DESCRIPTOR_LEN: usize = 128;

#[derive(Debug, Error, PartialEq)]
pub enum KeypointError {
    #[error("descriptor must have {DESCRIPTOR_LEN} elements, got {0}")]
    DescriptorLength(usize),
    #[error("descriptor lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("keypoint scale must be positive and finite, got {0}")]
    Scale(f64),
    #[error("keypoint field {0} is not finite")]
    NonFinite(&'static str),
    #[error("image {width}x{height} is too small for extraction (need at least 32x32)")]
    ImageTooSmall { width: usize, height: usize },
    #[error("invalid SIFT configuration: {0}")]
    Config(String),
}

/// A located, oriented keypoint with its gradient-histogram descriptor.
///
/// `x` is the column and `y` the row, in pixels of the source image with
/// pixel centers at integer coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    pub orientation: f64,
    pub descriptor: Vec<f64>,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, scale: f64, orientation: f64, descriptor: Vec<f64>) -> Result<Self, KeypointError> {
        if !x.is_finite() {
            return Err(KeypointError::NonFinite("x"));
        }
        if !y.is_finite() {
            return Err(KeypointError::NonFinite("y"));
        }
        if !orientation.is_finite() {
            return Err(KeypointError::NonFinite("orientation"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(KeypointError::Scale(scale));
        }
        if descriptor.len() != DESCRIPTOR_LEN {
            return Err(KeypointError::DescriptorLength(descriptor.len()));
        }
        if descriptor.iter().any(|v| !v.is_finite()) {
            return Err(KeypointError::NonFinite("descriptor"));
        }
        Ok(Self {
            x,
            y,
            scale,
            orientation,
            descriptor,
        })
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn distance_to(&self, other: &Keypoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Similarity of two unit-norm, non-negative descriptors: their dot product
/// clamped into `[0, 1]`.
pub fn descriptor_similarity(a: &Keypoint, b: &Keypoint) -> Result<f64, KeypointError> {
    descriptor_dot(&a.descriptor, &b.descriptor)
}

pub fn descriptor_dot(a: &[f64], b: &[f64]) -> Result<f64, KeypointError> {
    if a.len() != b.len() {
        return Err(KeypointError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() != DESCRIPTOR_LEN {
        return Err(KeypointError::DescriptorLength(a.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kp(descriptor: Vec<f64>) -> Keypoint {
        Keypoint::new(0.0, 0.0, 1.0, 0.0, descriptor).unwrap()
    }

    fn uniform() -> Vec<f64> {
        vec![1.0 / (DESCRIPTOR_LEN as f64).sqrt(); DESCRIPTOR_LEN]
    }

    fn basis(k: usize) -> Vec<f64> {
        let mut d = vec![0.0; DESCRIPTOR_LEN];
        d[k] = 1.0;
        d
    }

    #[test]
    fn self_similarity_is_one() {
        let a = kp(uniform());
        assert!((descriptor_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_support_is_zero() {
        assert_eq!(descriptor_similarity(&kp(basis(0)), &kp(basis(5))).unwrap(), 0.0);
    }

    #[test]
    fn uniform_against_basis() {
        let s = descriptor_similarity(&kp(uniform()), &kp(basis(0))).unwrap();
        // 1/sqrt(128)
        assert!((s - 0.088_388_347_648_318_44).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_reported() {
        assert_eq!(
            descriptor_dot(&[1.0; 3], &[1.0; 4]),
            Err(KeypointError::LengthMismatch(3, 4))
        );
        assert!(Keypoint::new(0.0, 0.0, 1.0, 0.0, vec![0.0; 127]).is_err());
        assert!(Keypoint::new(0.0, 0.0, 0.0, 0.0, uniform()).is_err());
    }
}
