//! End-to-end comparison of two annotated faces: group keypoints by region,
//! relax each regional graph pair and fuse the four regional scores.

use thiserror::Error;

use crate::fusion::{fuse_region_scores, FusionConfig, FusionError, MassFunction, RegionScores};
use crate::graphmatch::{build_graph, relax, AttributedGraph, GraphError, RelaxationConfig, RelaxationResult};
use crate::image::GrayImage;
use crate::keypoint::{extract_keypoints, Keypoint, KeypointError, SiftConfig};
use crate::landmarks::{default_roi_radius, group_keypoints, LandmarkError, LandmarkSet, Region, RegionGroups};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Keypoint(#[from] KeypointError),
    #[error(transparent)]
    Landmark(#[from] LandmarkError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub sift: SiftConfig,
    /// ROI radius in pixels; `None` uses a fixed fraction of each image's height.
    pub roi_radius: Option<f64>,
    pub relaxation: RelaxationConfig,
    pub fusion: FusionConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.sift.validate()?;
        self.relaxation.validate()?;
        self.fusion.validate()?;
        if let Some(r) = self.roi_radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(LandmarkError::Radius(r).into());
            }
        }
        Ok(())
    }

    pub fn radius_for(&self, image_height: usize) -> f64 {
        self.roi_radius.unwrap_or_else(|| default_roi_radius(image_height))
    }
}

/// A face reduced to its four regional graphs.
#[derive(Debug, Clone)]
pub struct PreparedFace {
    pub groups: RegionGroups,
    graphs: [AttributedGraph; 4],
}

impl PreparedFace {
    pub fn from_keypoints(
        keypoints: &[Keypoint],
        landmarks: &LandmarkSet,
        image_height: usize,
        cfg: &PipelineConfig,
    ) -> Result<Self, PipelineError> {
        let groups = group_keypoints(keypoints, landmarks, cfg.radius_for(image_height))?;
        let graphs = Region::ALL.map(|r| build_graph(groups.group(r)));
        Ok(Self { groups, graphs })
    }

    pub fn from_image(image: &GrayImage, landmarks: &LandmarkSet, cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let keypoints = extract_keypoints(image, &cfg.sift)?;
        Self::from_keypoints(&keypoints, landmarks, image.height(), cfg)
    }

    pub fn graph(&self, region: Region) -> &AttributedGraph {
        &self.graphs[region.index()]
    }
}

#[derive(Debug, Clone)]
pub struct MatchReport {
    /// Relaxation outcome per region; `None` when either side has no keypoints there.
    pub regions: [Option<RelaxationResult>; 4],
    pub region_scores: RegionScores,
    pub fused: MassFunction,
    pub accept: bool,
}

impl MatchReport {
    pub fn genuine_belief(&self) -> f64 {
        self.fused.genuine()
    }
}

/// Compares `gallery` against `probe`. A region empty on either side counts as
/// missing evidence; with all four missing the fused mass is vacuous and the
/// pair is rejected.
pub fn match_faces(
    gallery: &PreparedFace,
    probe: &PreparedFace,
    cfg: &PipelineConfig,
) -> Result<MatchReport, PipelineError> {
    let mut regions: [Option<RelaxationResult>; 4] = Default::default();
    let mut scores: RegionScores = [None; 4];
    for region in Region::ALL {
        let (g, p) = (gallery.graph(region), probe.graph(region));
        if g.is_empty() || p.is_empty() {
            continue;
        }
        let result = relax(g, p, &cfg.relaxation)?;
        scores[region.index()] = Some(result.score);
        regions[region.index()] = Some(result);
    }
    let (fused, accept) = if scores.iter().all(Option::is_none) {
        (MassFunction::VACUOUS, false)
    } else {
        let out = fuse_region_scores(&scores, &cfg.fusion)?;
        (out.mass, out.accept)
    };
    Ok(MatchReport {
        regions,
        region_scores: scores,
        fused,
        accept,
    })
}
