//! Dempster-Shafer fusion of regional match scores over the frame
//! `{genuine, impostor}`.

use thiserror::Error;

use crate::landmarks::Region;

const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("{name} must lie in [0, 1], got {value}")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("invalid mass function ({genuine}, {impostor}, {uncertain})")]
    InvalidMass {
        genuine: f64,
        impostor: f64,
        uncertain: f64,
    },
    #[error("total conflict between evidence sources (K = {0})")]
    TotalConflict(f64),
    #[error("no region produced a score")]
    NoEvidence,
}

/// Basic probability assignment: mass on `{genuine}`, `{impostor}`, and the
/// whole frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassFunction {
    genuine: f64,
    impostor: f64,
    uncertain: f64,
}

impl MassFunction {
    /// All mass on the whole frame; the identity of [`dempster_combine`].
    pub const VACUOUS: MassFunction = MassFunction {
        genuine: 0.0,
        impostor: 0.0,
        uncertain: 1.0,
    };

    pub fn new(genuine: f64, impostor: f64, uncertain: f64) -> Result<Self, FusionError> {
        let ok = [genuine, impostor, uncertain]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
            && (genuine + impostor + uncertain - 1.0).abs() <= MASS_TOLERANCE;
        if !ok {
            return Err(FusionError::InvalidMass {
                genuine,
                impostor,
                uncertain,
            });
        }
        Ok(Self {
            genuine,
            impostor,
            uncertain,
        })
    }

    pub fn genuine(&self) -> f64 {
        self.genuine
    }

    pub fn impostor(&self) -> f64 {
        self.impostor
    }

    pub fn uncertain(&self) -> f64 {
        self.uncertain
    }

    /// Conflict mass `K` against `other`.
    pub fn conflict(&self, other: &MassFunction) -> f64 {
        self.genuine * other.impostor + self.impostor * other.genuine
    }
}

fn unit(name: &'static str, value: f64) -> Result<f64, FusionError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(FusionError::OutOfRange { name, value })
    }
}

/// Linear bridge from a match score to masses, reserving `alpha` for the frame.
pub fn score_to_mass(score: f64, alpha: f64) -> Result<MassFunction, FusionError> {
    let score = unit("score", score)?;
    let alpha = unit("alpha", alpha)?;
    Ok(MassFunction {
        genuine: (1.0 - alpha) * score,
        impostor: (1.0 - alpha) * (1.0 - score),
        uncertain: alpha,
    })
}

/// Dempster's rule of combination on the two-element frame.
pub fn dempster_combine(a: &MassFunction, b: &MassFunction) -> Result<MassFunction, FusionError> {
    let k = a.conflict(b);
    let norm = 1.0 - k;
    if norm.is_nan() || norm <= 0.0 {
        return Err(FusionError::TotalConflict(k));
    }
    Ok(MassFunction {
        genuine: (a.genuine * b.genuine + a.genuine * b.uncertain + a.uncertain * b.genuine) / norm,
        impostor: (a.impostor * b.impostor + a.impostor * b.uncertain + a.uncertain * b.impostor) / norm,
        uncertain: a.uncertain * b.uncertain / norm,
    })
}

/// How regions without a score enter the combination. Both policies give the
/// same fused mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingRegionPolicy {
    #[default]
    Vacuous,
    Skip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub uncertainty_alpha: f64,
    /// Accept when the fused genuine mass reaches this value.
    pub decision_threshold: f64,
    pub missing_region_policy: MissingRegionPolicy,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            uncertainty_alpha: 0.1,
            decision_threshold: 0.5,
            missing_region_policy: MissingRegionPolicy::Vacuous,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        unit("uncertainty_alpha", self.uncertainty_alpha)?;
        unit("decision_threshold", self.decision_threshold)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionOutcome {
    pub mass: MassFunction,
    pub accept: bool,
}

/// Per-region scores in [`Region::ALL`] order; `None` marks a missing region.
pub type RegionScores = [Option<f64>; 4];

/// Combines the regional masses left to right in region order and thresholds
/// the fused genuine mass.
pub fn fuse_region_scores(scores: &RegionScores, cfg: &FusionConfig) -> Result<FusionOutcome, FusionError> {
    cfg.validate()?;
    if scores.iter().all(Option::is_none) {
        return Err(FusionError::NoEvidence);
    }
    let mut fused: Option<MassFunction> = None;
    for region in Region::ALL {
        let mass = match (scores[region.index()], cfg.missing_region_policy) {
            (Some(s), _) => score_to_mass(s, cfg.uncertainty_alpha)?,
            (None, MissingRegionPolicy::Vacuous) => MassFunction::VACUOUS,
            (None, MissingRegionPolicy::Skip) => continue,
        };
        fused = Some(match fused {
            None => mass,
            Some(acc) => dempster_combine(&acc, &mass)?,
        });
    }
    let mass = fused.ok_or(FusionError::NoEvidence)?;
    Ok(FusionOutcome {
        mass,
        accept: mass.genuine >= cfg.decision_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(g: f64, i: f64, u: f64) -> MassFunction {
        MassFunction::new(g, i, u).unwrap()
    }

    fn close(a: &MassFunction, b: (f64, f64, f64), tol: f64) -> bool {
        (a.genuine - b.0).abs() < tol && (a.impostor - b.1).abs() < tol && (a.uncertain - b.2).abs() < tol
    }

    #[test]
    fn bridge_examples() {
        assert_eq!(score_to_mass(1.0, 0.0).unwrap(), m(1.0, 0.0, 0.0));
        assert!(close(&score_to_mass(0.5, 0.2).unwrap(), (0.4, 0.4, 0.2), 1e-15));
        assert!(close(&score_to_mass(0.75, 0.1).unwrap(), (0.675, 0.225, 0.1), 1e-15));
        assert!(matches!(
            score_to_mass(1.2, 0.1),
            Err(FusionError::OutOfRange { name: "score", .. })
        ));
        assert!(matches!(
            score_to_mass(0.5, -0.1),
            Err(FusionError::OutOfRange { name: "alpha", .. })
        ));
    }

    #[test]
    fn vacuous_identity() {
        let a = m(0.6, 0.3, 0.1);
        assert_eq!(dempster_combine(&a, &MassFunction::VACUOUS).unwrap(), a);
        assert_eq!(dempster_combine(&MassFunction::VACUOUS, &a).unwrap(), a);
    }

    #[test]
    fn total_conflict() {
        assert_eq!(
            dempster_combine(&m(1.0, 0.0, 0.0), &m(0.0, 1.0, 0.0)),
            Err(FusionError::TotalConflict(1.0))
        );
    }

    #[test]
    fn worked_combination() {
        let r = dempster_combine(&m(0.6, 0.3, 0.1), &m(0.5, 0.2, 0.3)).unwrap();
        assert!((m(0.6, 0.3, 0.1).conflict(&m(0.5, 0.2, 0.3)) - 0.27).abs() < 1e-15);
        // 0.53/0.73, 0.17/0.73, 0.03/0.73
        assert!(close(
            &r,
            (0.726_027_397_260_274, 0.232_876_712_328_767_1, 0.041_095_890_410_958_9),
            1e-12
        ));
    }

    #[test]
    fn fusion_all_perfect() {
        let out = fuse_region_scores(&[Some(1.0); 4], &FusionConfig::default()).unwrap();
        assert!(out.mass.genuine() > 0.99);
        assert!(out.accept);
    }

    #[test]
    fn fusion_single_region() {
        let cfg = FusionConfig {
            uncertainty_alpha: 0.2,
            ..Default::default()
        };
        for policy in [MissingRegionPolicy::Vacuous, MissingRegionPolicy::Skip] {
            let cfg = FusionConfig {
                missing_region_policy: policy,
                ..cfg.clone()
            };
            let out = fuse_region_scores(&[None, Some(0.5), None, None], &cfg).unwrap();
            assert!(close(&out.mass, (0.4, 0.4, 0.2), 1e-15));
            assert!(!out.accept);
        }
    }

    #[test]
    fn fusion_conflict_and_no_evidence() {
        let cfg = FusionConfig {
            uncertainty_alpha: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            fuse_region_scores(&[Some(1.0), Some(0.0), None, None], &cfg),
            Err(FusionError::TotalConflict(_))
        ));
        assert_eq!(fuse_region_scores(&[None; 4], &cfg), Err(FusionError::NoEvidence));
    }

    #[test]
    fn mass_validation() {
        assert!(MassFunction::new(0.5, 0.5, 0.5).is_err());
        assert!(MassFunction::new(-0.1, 0.6, 0.5).is_err());
        assert!(MassFunction::new(0.2, 0.3, 0.5).is_ok());
    }
}
