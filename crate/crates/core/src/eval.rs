//! Batch verification over a dataset manifest: all-vs-all trials, threshold
//! sweeps, ROC tables, EER, best accuracy and rank-1 identification.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::exec::Exec;
use crate::fusion::RegionScores;
use crate::image::{load_image, ImageError};
use crate::keypoint::{extract_keypoints, load_keypoints, KeypointFileError};
use crate::landmarks::{load_landmarks, LandmarkError};
use crate::pipeline::{match_faces, PipelineConfig, PipelineError, PreparedFace};

pub const DEFAULT_SWEEP: usize = 1001;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("failed to read manifest {path}: {source}")]
    ManifestIo {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("manifest line {line}: {reason}")]
    Manifest { line: u64, reason: String },
    #[error("entry {index} ({subject}): {source}")]
    Image {
        index: usize,
        subject: String,
        #[source]
        source: ImageError,
    },
    #[error("entry {index} ({subject}): {source}")]
    Landmarks {
        index: usize,
        subject: String,
        #[source]
        source: LandmarkError,
    },
    #[error("entry {index} ({subject}): {source}")]
    Keypoints {
        index: usize,
        subject: String,
        #[source]
        source: KeypointFileError,
    },
    #[error("entry {index} ({subject}): {source}")]
    Pipeline {
        index: usize,
        subject: String,
        #[source]
        source: PipelineError,
    },
    #[error("trial {gallery} vs {probe}: {source}")]
    Trial {
        gallery: usize,
        probe: usize,
        #[source]
        source: PipelineError,
    },
    #[error(transparent)]
    Config(#[from] PipelineError),
    #[error("ROC needs at least one genuine trial")]
    NoGenuine,
    #[error("ROC needs at least one impostor trial")]
    NoImpostor,
    #[error("threshold sweep needs at least 2 points, got {0}")]
    Sweep(usize),
    #[error("failed to write ROC table: {0}")]
    Write(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub image: PathBuf,
    pub landmarks: PathBuf,
    /// Precomputed keypoint CSV used instead of extraction.
    pub keypoints: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Reads `subject_id,image,landmarks[,keypoints]`; relative paths resolve
    /// against `base_dir`.
    pub fn from_reader<R: Read>(input: R, base_dir: &Path) -> Result<Self, EvalError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let mut records = rdr.records();
        let csv_err = |e: csv::Error| EvalError::Manifest {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        };
        let header = match records.next() {
            Some(r) => r.map_err(csv_err)?,
            None => {
                return Err(EvalError::Manifest {
                    line: 1,
                    reason: "empty manifest".into(),
                })
            }
        };
        let cols: Vec<&str> = header.iter().collect();
        let with_keypoints = match cols.as_slice() {
            ["subject_id", "image", "landmarks"] => false,
            ["subject_id", "image", "landmarks", "keypoints"] => true,
            _ => {
                return Err(EvalError::Manifest {
                    line: 1,
                    reason: "header must be subject_id,image,landmarks[,keypoints]".into(),
                })
            }
        };
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        let mut entries = Vec::new();
        for rec in records {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != header.len() {
                return Err(EvalError::Manifest {
                    line,
                    reason: format!("expected {} fields, found {}", header.len(), rec.len()),
                });
            }
            let subject_id = rec[0].to_string();
            if subject_id.is_empty() {
                return Err(EvalError::Manifest {
                    line,
                    reason: "empty subject_id".into(),
                });
            }
            let keypoints = if with_keypoints && !rec[3].is_empty() {
                Some(resolve(&rec[3]))
            } else {
                None
            };
            entries.push(ManifestEntry {
                subject_id,
                image: resolve(&rec[1]),
                landmarks: resolve(&rec[2]),
                keypoints,
            });
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| EvalError::ManifestIo {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_reader(io::BufReader::new(file), base)
    }

    pub fn subject_count(&self) -> usize {
        let mut ids: Vec<&str> = self.entries.iter().map(|e| e.subject_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

/// One gallery/probe comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub gallery_index: usize,
    pub probe_index: usize,
    pub gallery_id: String,
    pub probe_id: String,
    pub fused_genuine_belief: f64,
    pub is_genuine: bool,
    pub region_scores: RegionScores,
}

/// Loads and prepares every manifest entry once.
pub fn prepare_manifest(
    manifest: &DatasetManifest,
    cfg: &PipelineConfig,
    exec: Exec,
) -> Result<Vec<PreparedFace>, EvalError> {
    cfg.validate()?;
    let indexed: Vec<(usize, &ManifestEntry)> = manifest.entries.iter().enumerate().collect();
    exec.map(&indexed, |&(index, entry)| prepare_entry(index, entry, cfg))
        .into_iter()
        .collect()
}

fn prepare_entry(index: usize, entry: &ManifestEntry, cfg: &PipelineConfig) -> Result<PreparedFace, EvalError> {
    let subject = || entry.subject_id.clone();
    let image = load_image(&entry.image).map_err(|source| EvalError::Image {
        index,
        subject: subject(),
        source,
    })?;
    let landmarks =
        load_landmarks(&entry.landmarks, image.width(), image.height()).map_err(|source| EvalError::Landmarks {
            index,
            subject: subject(),
            source,
        })?;
    let pipeline_err = |source: PipelineError| EvalError::Pipeline {
        index,
        subject: subject(),
        source,
    };
    let keypoints = match &entry.keypoints {
        Some(path) => load_keypoints(path).map_err(|source| EvalError::Keypoints {
            index,
            subject: subject(),
            source,
        })?,
        None => extract_keypoints(&image, &cfg.sift).map_err(|e| pipeline_err(e.into()))?,
    };
    PreparedFace::from_keypoints(&keypoints, &landmarks, image.height(), cfg).map_err(pipeline_err)
}

/// Scores every ordered pair of distinct faces, gallery-major.
pub fn score_trials(
    faces: &[PreparedFace],
    subject_ids: &[String],
    cfg: &PipelineConfig,
    exec: Exec,
) -> Result<Vec<Trial>, EvalError> {
    assert_eq!(faces.len(), subject_ids.len(), "one subject id per face");
    let n = faces.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|g| (0..n).filter(move |&p| p != g).map(move |p| (g, p)))
        .collect();
    exec.map(&pairs, |&(g, p)| {
        let report = match_faces(&faces[g], &faces[p], cfg).map_err(|source| EvalError::Trial {
            gallery: g,
            probe: p,
            source,
        })?;
        Ok(Trial {
            gallery_index: g,
            probe_index: p,
            gallery_id: subject_ids[g].clone(),
            probe_id: subject_ids[p].clone(),
            fused_genuine_belief: report.genuine_belief(),
            is_genuine: subject_ids[g] == subject_ids[p],
            region_scores: report.region_scores,
        })
    })
    .into_iter()
    .collect()
}

pub fn run_verification(manifest: &DatasetManifest, cfg: &PipelineConfig, exec: Exec) -> Result<Vec<Trial>, EvalError> {
    let faces = prepare_manifest(manifest, cfg, exec)?;
    let ids: Vec<String> = manifest.entries.iter().map(|e| e.subject_id.clone()).collect();
    score_trials(&faces, &ids, cfg, exec)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub false_accept_rate: f64,
    pub false_reject_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocSummary {
    pub points: Vec<RocPoint>,
    /// Mean of FAR and FRR at the swept threshold where they are closest.
    pub eer: f64,
    pub eer_threshold: f64,
    pub best_accuracy: f64,
}

/// ROC over `(belief, is_genuine)` pairs with `n_thresholds` thresholds spread
/// uniformly over `[0, 1]`. A trial is accepted when its belief is at least the threshold.
pub fn compute_roc_scores(scores: &[(f64, bool)], n_thresholds: usize) -> Result<RocSummary, EvalError> {
    if n_thresholds < 2 {
        return Err(EvalError::Sweep(n_thresholds));
    }
    let mut genuine: Vec<f64> = scores.iter().filter(|s| s.1).map(|s| s.0).collect();
    let mut impostor: Vec<f64> = scores.iter().filter(|s| !s.1).map(|s| s.0).collect();
    if genuine.is_empty() {
        return Err(EvalError::NoGenuine);
    }
    if impostor.is_empty() {
        return Err(EvalError::NoImpostor);
    }
    genuine.sort_by(f64::total_cmp);
    impostor.sort_by(f64::total_cmp);
    let (ng, ni) = (genuine.len(), impostor.len());
    let total = (ng + ni) as f64;

    let mut points = Vec::with_capacity(n_thresholds);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    // rejecting everything is always an available operating point
    let mut best_accuracy = ni as f64 / total;
    for k in 0..n_thresholds {
        let t = k as f64 / (n_thresholds - 1) as f64;
        let rejected_genuine = genuine.partition_point(|&v| v < t);
        let rejected_impostor = impostor.partition_point(|&v| v < t);
        let far = (ni - rejected_impostor) as f64 / ni as f64;
        let frr = rejected_genuine as f64 / ng as f64;
        let gap = (far - frr).abs();
        if gap < best.0 {
            best = (gap, t, 0.5 * (far + frr));
        }
        let correct = (ng - rejected_genuine) + rejected_impostor;
        best_accuracy = f64::max(best_accuracy, correct as f64 / total);
        points.push(RocPoint {
            threshold: t,
            false_accept_rate: far,
            false_reject_rate: frr,
        });
    }
    Ok(RocSummary {
        points,
        eer: best.2,
        eer_threshold: best.1,
        best_accuracy,
    })
}

pub fn compute_roc(trials: &[Trial], n_thresholds: usize) -> Result<RocSummary, EvalError> {
    let scores: Vec<(f64, bool)> = trials.iter().map(|t| (t.fused_genuine_belief, t.is_genuine)).collect();
    compute_roc_scores(&scores, n_thresholds)
}

/// Fraction of probes whose best-scoring gallery subject is their own subject.
///
/// Each gallery subject scores the maximum belief over its images; ties go to
/// the subject whose first image comes earliest. Probes without another image
/// of their own subject are not counted.
pub fn rank1_identification(trials: &[Trial]) -> f64 {
    let mut per_probe: BTreeMap<usize, Vec<&Trial>> = BTreeMap::new();
    for t in trials {
        per_probe.entry(t.probe_index).or_default().push(t);
    }
    let (mut eligible, mut correct) = (0usize, 0usize);
    for candidates in per_probe.values() {
        if !candidates.iter().any(|t| t.is_genuine) {
            continue;
        }
        eligible += 1;
        // subject -> (best belief, first gallery index)
        let mut by_subject: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        for t in candidates {
            let e = by_subject
                .entry(t.gallery_id.as_str())
                .or_insert((f64::NEG_INFINITY, t.gallery_index));
            e.0 = e.0.max(t.fused_genuine_belief);
            e.1 = e.1.min(t.gallery_index);
        }
        let winner = by_subject
            .iter()
            .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
            .map(|(s, _)| *s);
        if winner == Some(candidates[0].probe_id.as_str()) {
            correct += 1;
        }
    }
    if eligible == 0 {
        0.0
    } else {
        correct as f64 / eligible as f64
    }
}

/// `threshold,far,frr` with a header line.
pub fn write_roc_csv<W: Write>(points: &[RocPoint], mut out: W) -> io::Result<()> {
    writeln!(out, "threshold,far,frr")?;
    for p in points {
        writeln!(
            out,
            "{:.3},{:.6},{:.6}",
            p.threshold, p.false_accept_rate, p.false_reject_rate
        )?;
    }
    out.flush()
}

pub fn summary_line(summary: &RocSummary, rank1: f64) -> String {
    format!(
        "eer={:.6} best_accuracy={:.6} rank1={:.6}",
        summary.eer, summary.best_accuracy, rank1
    )
}
