//! Procedural face-like images with known landmarks.
//!
//! Each subject is a fixed arrangement of Gaussian blobs around the four
//! landmarks; each rendering applies a small random shift, gain change and
//! pixel noise. Useful for fixtures and benchmarks where real face data is
//! not available.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::{save_image, GrayImage, ImageError};
use crate::landmarks::{LandmarkSet, Region};

pub const FACE_WIDTH: usize = 100;
pub const FACE_HEIGHT: usize = 140;

const BASE_LANDMARKS: [(f64, f64); 4] = [(32.0, 56.0), (68.0, 56.0), (50.0, 82.0), (50.0, 108.0)];

#[derive(Debug, Clone, Copy)]
struct Blob {
    dx: f64,
    dy: f64,
    sigma_x: f64,
    sigma_y: f64,
    amplitude: f64,
}

/// Identity-specific appearance.
#[derive(Debug, Clone)]
pub struct SubjectModel {
    blobs: [Vec<Blob>; 4],
    landmark_jitter: [(f64, f64); 4],
    skin: f64,
}

impl SubjectModel {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blobs = Region::ALL.map(|_| {
            let count = rng.gen_range(5..9);
            (0..count)
                .map(|_| Blob {
                    dx: rng.gen_range(-13.0..13.0),
                    dy: rng.gen_range(-11.0..11.0),
                    sigma_x: rng.gen_range(1.4..3.2),
                    sigma_y: rng.gen_range(1.4..3.2),
                    amplitude: if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(0.2..0.45),
                })
                .collect()
        });
        let landmark_jitter = Region::ALL.map(|_| (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)));
        Self {
            blobs,
            landmark_jitter,
            skin: rng.gen_range(0.45..0.6),
        }
    }

    /// Renders one image of this subject; `variant` seeds the nuisance factors.
    pub fn render(&self, variant: u64) -> SyntheticFace {
        let mut rng = ChaCha8Rng::seed_from_u64(variant);
        let shift = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let gain = rng.gen_range(0.92..1.08);
        let noise = 0.01;
        let centers = Region::ALL.map(|r| {
            let (bx, by) = BASE_LANDMARKS[r.index()];
            let (jx, jy) = self.landmark_jitter[r.index()];
            (bx + jx + shift.0, by + jy + shift.1)
        });
        let (fcx, fcy) = (50.0 + shift.0, 78.0 + shift.1);
        let image = GrayImage::from_fn(FACE_WIDTH, FACE_HEIGHT, |x, y| {
            let (x, y) = (x as f64, y as f64);
            // soft elliptical face on a dark background
            let r = ((x - fcx) / 40.0).powi(2) + ((y - fcy) / 58.0).powi(2);
            let mut v = 0.15 + (self.skin - 0.15) / (1.0 + ((r - 1.0) * 12.0).exp());
            for (region, blobs) in Region::ALL.iter().zip(&self.blobs) {
                let (cx, cy) = centers[region.index()];
                for b in blobs {
                    let ex = (x - cx - b.dx) / b.sigma_x;
                    let ey = (y - cy - b.dy) / b.sigma_y;
                    v += b.amplitude * (-0.5 * (ex * ex + ey * ey)).exp();
                }
            }
            gain * v + noise * (rng.gen::<f64>() - 0.5) * 2.0
        });
        let landmarks =
            LandmarkSet::new(centers, FACE_WIDTH, FACE_HEIGHT).expect("synthetic landmarks lie inside the image");
        SyntheticFace { image, landmarks }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticFace {
    pub image: GrayImage,
    pub landmarks: LandmarkSet,
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Writes `subjects x images_per_subject` faces plus landmark files and a
/// `manifest.csv` into `dir`, returning the manifest path.
pub fn write_dataset(dir: &Path, subjects: usize, images_per_subject: usize, seed: u64) -> Result<PathBuf, SynthError> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::from("subject_id,image,landmarks\n");
    for s in 0..subjects {
        let model = SubjectModel::new(seed.wrapping_mul(1_000_003).wrapping_add(s as u64));
        for k in 0..images_per_subject {
            let face = model.render(seed ^ ((s as u64) << 32 | k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let stem = format!("s{s:02}_{k}");
            save_image(&face.image, dir.join(format!("{stem}.pgm")))?;
            fs::write(dir.join(format!("{stem}.txt")), face.landmarks.to_text())?;
            manifest.push_str(&format!("subject{s:02},{stem}.pgm,{stem}.txt\n"));
        }
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, manifest)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering_is_deterministic() {
        let a = SubjectModel::new(7).render(3);
        let b = SubjectModel::new(7).render(3);
        assert_eq!(a.image, b.image);
        assert_eq!(a.landmarks, b.landmarks);
        assert_ne!(SubjectModel::new(7).render(4).image, a.image);
    }
}
