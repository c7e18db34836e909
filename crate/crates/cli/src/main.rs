//! `facegraph` command-line tool: keypoint extraction, single-pair
//! verification and batch evaluation.

use std::error::Error;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use facegraph::eval::{self, DatasetManifest, DEFAULT_SWEEP};
use facegraph::graphmatch::ScoreRule;
use facegraph::keypoint::{load_keypoints, save_keypoints};
use facegraph::landmarks::load_landmarks;
use facegraph::{extract_keypoints, load_image, match_faces, Exec, PipelineConfig, PreparedFace, Region, SiftConfig};

type BoxError = Box<dyn Error>;

#[derive(Parser)]
#[command(
    name = "facegraph",
    version,
    about = "Face verification by regional SIFT graph matching"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract SIFT keypoints from a PGM image into a CSV file.
    Extract {
        image: PathBuf,
        #[arg(long, value_name = "CSV")]
        keypoints_out: PathBuf,
        #[command(flatten)]
        sift: SiftArgs,
    },
    /// Verify a probe face against a gallery face.
    Match {
        gallery_image: PathBuf,
        gallery_landmarks: PathBuf,
        probe_image: PathBuf,
        probe_landmarks: PathBuf,
        /// Use precomputed keypoints instead of extracting them.
        #[arg(long, num_args = 2, value_names = ["GALLERY_CSV", "PROBE_CSV"])]
        keypoints_in: Option<Vec<PathBuf>>,
        /// Write the per-region relaxation convergence trace.
        #[arg(long, value_name = "CSV")]
        trace_out: Option<PathBuf>,
        /// Accept when the fused genuine belief reaches this value.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[command(flatten)]
        sift: SiftArgs,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// Run all-vs-all verification over a manifest and write the ROC table.
    Evaluate {
        manifest: PathBuf,
        #[arg(long, value_name = "CSV")]
        roc_out: PathBuf,
        /// Number of thresholds swept over [0, 1].
        #[arg(long, default_value_t = DEFAULT_SWEEP)]
        sweep: usize,
        #[command(flatten)]
        sift: SiftArgs,
        #[command(flatten)]
        matching: MatchArgs,
    },
}

#[derive(Args)]
struct SiftArgs {
    #[arg(long, default_value_t = 4)]
    octaves: usize,
    #[arg(long, default_value_t = 3)]
    scales_per_octave: usize,
    /// Minimum |DoG| response at a refined extremum, for intensities in [0, 1].
    #[arg(long, default_value_t = 0.03)]
    contrast_threshold: f64,
    /// Principal curvature ratio above which edge-like extrema are dropped.
    #[arg(long, default_value_t = 10.0)]
    edge_threshold: f64,
    /// Skip the initial 2x upsampling.
    #[arg(long)]
    no_upsample: bool,
}

impl SiftArgs {
    fn config(&self) -> SiftConfig {
        SiftConfig {
            octaves: self.octaves,
            scales_per_octave: self.scales_per_octave,
            contrast_threshold: self.contrast_threshold,
            edge_response_threshold: self.edge_threshold,
            upsample: !self.no_upsample,
            ..SiftConfig::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RegionScore {
    /// Posterior-weighted assigned fraction.
    Posterior,
    /// As `posterior`, also weighted by descriptor similarity of each assigned pair.
    Weighted,
}

#[derive(Args)]
struct MatchArgs {
    /// ROI radius in pixels [default: 0.18 x image height]
    #[arg(long)]
    roi_radius: Option<f64>,
    /// Relaxation stops when no probability changes by more than this.
    #[arg(long, default_value_t = 1e-4)]
    phi: f64,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    /// Edge similarity length scale in pixels.
    #[arg(long, default_value_t = 10.0)]
    sigma_e: f64,
    /// Mass reserved for uncertainty when converting region scores.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = RegionScore::Weighted)]
    region_score: RegionScore,
}

impl MatchArgs {
    fn config(&self, sift: SiftConfig, threshold: Option<f64>) -> PipelineConfig {
        let mut cfg = PipelineConfig {
            sift,
            roi_radius: self.roi_radius,
            ..PipelineConfig::default()
        };
        cfg.relaxation.phi = self.phi;
        cfg.relaxation.max_iterations = self.max_iters;
        cfg.relaxation.sigma_e = self.sigma_e;
        cfg.relaxation.score_rule = match self.region_score {
            RegionScore::Posterior => ScoreRule::PosteriorCoverage,
            RegionScore::Weighted => ScoreRule::SimilarityWeighted,
        };
        cfg.fusion.uncertainty_alpha = self.alpha;
        if let Some(t) = threshold {
            cfg.fusion.decision_threshold = t;
        }
        cfg
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut source = e.source();
            while let Some(s) = source {
                msg.push_str(&format!(": {s}"));
                source = s.source();
            }
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, BoxError> {
    match command {
        Command::Extract {
            image,
            keypoints_out,
            sift,
        } => {
            let cfg = sift.config();
            cfg.validate()?;
            let img = load_image(&image)?;
            let keypoints = extract_keypoints(&img, &cfg)?;
            save_keypoints(&keypoints, &keypoints_out)?;
            println!("{} keypoints", keypoints.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Match {
            gallery_image,
            gallery_landmarks,
            probe_image,
            probe_landmarks,
            keypoints_in,
            trace_out,
            threshold,
            sift,
            matching,
        } => {
            let cfg = matching.config(sift.config(), Some(threshold));
            cfg.validate()?;
            let csvs = keypoints_in.unwrap_or_default();
            let gallery = prepare(&gallery_image, &gallery_landmarks, csvs.first(), &cfg)?;
            let probe = prepare(&probe_image, &probe_landmarks, csvs.get(1), &cfg)?;
            let report = match_faces(&gallery, &probe, &cfg)?;
            for region in Region::ALL {
                let nodes = (gallery.groups.group(region).len(), probe.groups.group(region).len());
                match &report.regions[region.index()] {
                    Some(r) => println!(
                        "{region}: score={:.6} nodes={}x{} iterations={} converged={}",
                        r.score, nodes.0, nodes.1, r.iterations_used, r.converged
                    ),
                    None => println!("{region}: missing nodes={}x{}", nodes.0, nodes.1),
                }
            }
            println!("belief={:.6}", report.genuine_belief());
            if let Some(path) = trace_out {
                let mut out = BufWriter::new(File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?);
                writeln!(out, "region,iteration,max_delta")?;
                for region in Region::ALL {
                    if let Some(r) = &report.regions[region.index()] {
                        for (k, delta) in r.trace.iter().enumerate() {
                            writeln!(out, "{region},{},{delta:e}", k + 1)?;
                        }
                    }
                }
                out.flush()?;
            }
            if report.accept {
                println!("ACCEPT");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("REJECT");
                Ok(ExitCode::from(1))
            }
        }
        Command::Evaluate {
            manifest,
            roc_out,
            sweep,
            sift,
            matching,
        } => {
            let cfg = matching.config(sift.config(), None);
            cfg.validate()?;
            let manifest = DatasetManifest::load(&manifest)?;
            let trials = eval::run_verification(&manifest, &cfg, Exec::default())?;
            let summary = eval::compute_roc(&trials, sweep)?;
            let file = File::create(&roc_out).map_err(|e| format!("{}: {e}", roc_out.display()))?;
            eval::write_roc_csv(&summary.points, BufWriter::new(file))?;
            println!("{}", eval::summary_line(&summary, eval::rank1_identification(&trials)));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn prepare(
    image: &PathBuf,
    landmarks: &PathBuf,
    keypoints: Option<&PathBuf>,
    cfg: &PipelineConfig,
) -> Result<PreparedFace, BoxError> {
    let img = load_image(image)?;
    let lm = load_landmarks(landmarks, img.width(), img.height())?;
    let points = match keypoints {
        Some(path) => load_keypoints(path)?,
        None => extract_keypoints(&img, &cfg.sift)?,
    };
    Ok(PreparedFace::from_keypoints(&points, &lm, img.height(), cfg)?)
}
