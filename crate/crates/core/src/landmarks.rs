//! Annotated facial landmarks and circular-ROI grouping of keypoints.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::keypoint::Keypoint;

/// ROI radius as a fraction of image height when none is given.
pub const DEFAULT_ROI_FRACTION: f64 = 0.18;

/// The four salient regions, in precedence order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    LeftEye,
    RightEye,
    Nose,
    Mouth,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::LeftEye, Region::RightEye, Region::Nose, Region::Mouth];

    pub fn name(self) -> &'static str {
        match self {
            Region::LeftEye => "left_eye",
            Region::RightEye => "right_eye",
            Region::Nose => "nose",
            Region::Mouth => "mouth",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Region {
    type Err = LandmarkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Region::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| LandmarkError::UnknownRegion(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum LandmarkError {
    #[error("failed to read landmark file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing landmark for region {0}")]
    MissingRegion(Region),
    #[error("region {0} listed more than once")]
    DuplicateRegion(Region),
    #[error("unknown region name {0:?}")]
    UnknownRegion(String),
    #[error("line {line}: expected `region x y`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("{region} at ({x}, {y}) lies outside the {width}x{height} image")]
    OutOfBounds {
        region: Region,
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("{0} and {1} share the same position")]
    Coincident(Region, Region),
    #[error("ROI radius must be positive, got {0}")]
    Radius(f64),
}

/// Pixel positions of the four salient landmarks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkSet {
    centers: [(f64, f64); 4],
}

impl LandmarkSet {
    /// Points are given in [`Region::ALL`] order and validated against `width x height`.
    pub fn new(centers: [(f64, f64); 4], width: usize, height: usize) -> Result<Self, LandmarkError> {
        for (region, &(x, y)) in Region::ALL.iter().zip(&centers) {
            let inside = x.is_finite()
                && y.is_finite()
                && x >= 0.0
                && y >= 0.0
                && x <= (width as f64 - 1.0)
                && y <= (height as f64 - 1.0);
            if !inside {
                return Err(LandmarkError::OutOfBounds {
                    region: *region,
                    x,
                    y,
                    width,
                    height,
                });
            }
        }
        for a in 0..4 {
            for b in a + 1..4 {
                if centers[a] == centers[b] {
                    return Err(LandmarkError::Coincident(Region::ALL[a], Region::ALL[b]));
                }
            }
        }
        Ok(Self { centers })
    }

    pub fn center(&self, region: Region) -> (f64, f64) {
        self.centers[region.index()]
    }

    /// Parses `region x y` lines. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str, width: usize, height: usize) -> Result<Self, LandmarkError> {
        let mut slots: [Option<(f64, f64)>; 4] = [None; 4];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = || LandmarkError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            };
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [name, x, y] = parts[..] else {
                return Err(syntax());
            };
            let region: Region = name.parse()?;
            let x: f64 = x.parse().map_err(|_| syntax())?;
            let y: f64 = y.parse().map_err(|_| syntax())?;
            let slot = &mut slots[region.index()];
            if slot.is_some() {
                return Err(LandmarkError::DuplicateRegion(region));
            }
            *slot = Some((x, y));
        }
        let mut centers = [(0.0, 0.0); 4];
        for region in Region::ALL {
            centers[region.index()] = slots[region.index()].ok_or(LandmarkError::MissingRegion(region))?;
        }
        Self::new(centers, width, height)
    }

    pub fn to_text(&self) -> String {
        Region::ALL
            .iter()
            .map(|r| {
                let (x, y) = self.center(*r);
                format!("{} {} {}\n", r.name(), x, y)
            })
            .collect()
    }
}

pub fn load_landmarks(path: impl AsRef<Path>, width: usize, height: usize) -> Result<LandmarkSet, LandmarkError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| LandmarkError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    LandmarkSet::parse(&text, width, height)
}

pub fn default_roi_radius(image_height: usize) -> f64 {
    DEFAULT_ROI_FRACTION * image_height as f64
}

/// Keypoints partitioned into the four landmark regions.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGroups {
    groups: [Vec<Keypoint>; 4],
    roi_radius: f64,
}

impl RegionGroups {
    pub fn group(&self, region: Region) -> &[Keypoint] {
        &self.groups[region.index()]
    }

    pub fn roi_radius(&self) -> f64 {
        self.roi_radius
    }

    pub fn iter(&self) -> impl Iterator<Item = (Region, &[Keypoint])> {
        Region::ALL.into_iter().map(move |r| (r, self.group(r)))
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }
}

/// Region whose center is nearest to `(x, y)` among those within `radius`;
/// ties go to the earlier region in [`Region::ALL`].
pub fn nearest_region(x: f64, y: f64, lm: &LandmarkSet, radius: f64) -> Option<Region> {
    let mut best: Option<(Region, f64)> = None;
    for region in Region::ALL {
        let (cx, cy) = lm.center(region);
        let d = (x - cx).hypot(y - cy);
        if d <= radius && best.is_none_or(|(_, bd)| d < bd) {
            best = Some((region, d));
        }
    }
    best.map(|(r, _)| r)
}

pub fn group_keypoints(points: &[Keypoint], lm: &LandmarkSet, radius: f64) -> Result<RegionGroups, LandmarkError> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(LandmarkError::Radius(radius));
    }
    let mut groups: [Vec<Keypoint>; 4] = Default::default();
    for kp in points {
        if let Some(region) = nearest_region(kp.x, kp.y, lm, radius) {
            groups[region.index()].push(kp.clone());
        }
    }
    Ok(RegionGroups {
        groups,
        roi_radius: radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keypoint::DESCRIPTOR_LEN;

    fn lm() -> LandmarkSet {
        LandmarkSet::new([(30.0, 50.0), (70.0, 50.0), (50.0, 75.0), (50.0, 105.0)], 100, 140).unwrap()
    }

    fn kp_at(x: f64, y: f64) -> Keypoint {
        let mut d = vec![0.0; DESCRIPTOR_LEN];
        d[0] = 1.0;
        Keypoint::new(x, y, 1.6, 0.0, d).unwrap()
    }

    #[test]
    fn parse_valid_file() {
        let text = "left_eye 30 50\nright_eye 70.5 50\nnose 50 75\nmouth 50 105\n";
        let set = LandmarkSet::parse(text, 100, 140).unwrap();
        assert_eq!(set.center(Region::RightEye), (70.5, 50.0));
        assert_eq!(set.center(Region::Mouth), (50.0, 105.0));
        assert_eq!(LandmarkSet::parse(&set.to_text(), 100, 140).unwrap(), set);
    }

    #[test]
    fn missing_mouth_is_named() {
        let err = LandmarkSet::parse("left_eye 30 50\nright_eye 70 50\nnose 50 75\n", 100, 140).unwrap_err();
        assert!(matches!(err, LandmarkError::MissingRegion(Region::Mouth)));
        assert!(err.to_string().contains("mouth"));
    }

    #[test]
    fn duplicate_nose_rejected() {
        let text = "left_eye 30 50\nright_eye 70 50\nnose 50 75\nnose 51 75\nmouth 50 105\n";
        assert!(matches!(
            LandmarkSet::parse(text, 100, 140),
            Err(LandmarkError::DuplicateRegion(Region::Nose))
        ));
    }

    #[test]
    fn out_of_bounds_and_syntax() {
        let text = "left_eye 30 50\nright_eye 170 50\nnose 50 75\nmouth 50 105\n";
        assert!(matches!(
            LandmarkSet::parse(text, 100, 140),
            Err(LandmarkError::OutOfBounds {
                region: Region::RightEye,
                ..
            })
        ));
        assert!(matches!(
            LandmarkSet::parse("left_eye 30\n", 100, 140),
            Err(LandmarkError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            LandmarkSet::parse("chin 1 1\n", 100, 140),
            Err(LandmarkError::UnknownRegion(_))
        ));
        let same = "left_eye 30 50\nright_eye 30 50\nnose 50 75\nmouth 50 105\n";
        assert!(matches!(
            LandmarkSet::parse(same, 100, 140),
            Err(LandmarkError::Coincident(Region::LeftEye, Region::RightEye))
        ));
    }

    #[test]
    fn keypoint_at_nose_center() {
        let g = group_keypoints(&[kp_at(50.0, 75.0)], &lm(), 20.0).unwrap();
        assert_eq!(g.group(Region::Nose).len(), 1);
        assert_eq!(g.total(), 1);
    }

    #[test]
    fn far_keypoint_dropped() {
        let g = group_keypoints(&[kp_at(2.0, 2.0)], &lm(), 20.0).unwrap();
        assert_eq!(g.total(), 0);
    }

    #[test]
    fn tie_goes_to_left_eye() {
        // left_eye (30,50) and nose (50,75): the midpoint (40, 62.5) is
        // sqrt(10^2 + 12.5^2) = 16.0078 from both
        let (x, y) = (40.0, 62.5);
        let d_eye = (x - 30.0f64).hypot(y - 50.0);
        let d_nose = (x - 50.0f64).hypot(y - 75.0);
        assert_eq!(d_eye, d_nose);
        let g = group_keypoints(&[kp_at(x, y)], &lm(), 20.0).unwrap();
        assert_eq!(g.group(Region::LeftEye).len(), 1);
        assert!(g.group(Region::Nose).is_empty());
    }

    #[test]
    fn nearest_center_wins_within_overlap() {
        let g = group_keypoints(&[kp_at(45.0, 70.0)], &lm(), 30.0).unwrap();
        assert_eq!(g.group(Region::Nose).len(), 1);
    }

    #[test]
    fn radius_must_be_positive() {
        assert!(matches!(
            group_keypoints(&[], &lm(), 0.0),
            Err(LandmarkError::Radius(_))
        ));
    }

    #[test]
    fn default_radius_at_face_resolution() {
        assert!((default_roi_radius(140) - 25.2).abs() < 1e-12);
    }
}
