use std::fs;
use std::path::Path;

use facegraph::eval::{
    compute_roc_scores, rank1_identification, run_verification, write_roc_csv, DatasetManifest, EvalError,
    DEFAULT_SWEEP,
};
use facegraph::synth::write_dataset;
use facegraph::{Exec, PipelineConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn manifest_with(dir: &Path, lines: &[&str]) -> DatasetManifest {
    let text = format!("subject_id,image,landmarks\n{}\n", lines.join("\n"));
    DatasetManifest::from_reader(text.as_bytes(), dir).unwrap()
}

fn assert_monotone(scores: &[(f64, bool)], n: usize) {
    let roc = compute_roc_scores(scores, n).unwrap();
    for w in roc.points.windows(2) {
        assert!(w[1].threshold > w[0].threshold);
        assert!(w[1].false_accept_rate <= w[0].false_accept_rate);
        assert!(w[1].false_reject_rate >= w[0].false_reject_rate);
    }
    let ng = scores.iter().filter(|s| s.1).count() as f64;
    let frac = ng / scores.len() as f64;
    assert!(roc.best_accuracy >= frac.max(1.0 - frac) - 1e-12);
}

#[test]
fn pair_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), 2, 2, 5).unwrap();
    let cfg = PipelineConfig::default();

    let same = manifest_with(dir.path(), &["a,s00_0.pgm,s00_0.txt", "a,s00_1.pgm,s00_1.txt"]);
    let trials = run_verification(&same, &cfg, Exec::default()).unwrap();
    assert_eq!(trials.len(), 2);
    assert!(trials.iter().all(|t| t.is_genuine));
    assert_eq!((trials[0].gallery_index, trials[0].probe_index), (0, 1));
    assert_eq!((trials[1].gallery_index, trials[1].probe_index), (1, 0));

    let different = manifest_with(dir.path(), &["a,s00_0.pgm,s00_0.txt", "b,s01_0.pgm,s01_0.txt"]);
    let trials = run_verification(&different, &cfg, Exec::default()).unwrap();
    assert_eq!(trials.len(), 2);
    assert!(trials.iter().all(|t| !t.is_genuine));
}

#[test]
fn identical_copy_dominates_impostors() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), 3, 2, 9).unwrap();
    fs::copy(dir.path().join("s00_0.pgm"), dir.path().join("copy.pgm")).unwrap();
    let manifest = manifest_with(
        dir.path(),
        &[
            "subject00,s00_0.pgm,s00_0.txt",
            "subject00,s00_1.pgm,s00_1.txt",
            "subject01,s01_0.pgm,s01_0.txt",
            "subject01,s01_1.pgm,s01_1.txt",
            "subject02,s02_0.pgm,s02_0.txt",
            "subject00,copy.pgm,s00_0.txt",
        ],
    );
    let trials = run_verification(&manifest, &PipelineConfig::default(), Exec::default()).unwrap();
    assert_eq!(trials.len(), 30);
    let copy = trials
        .iter()
        .find(|t| t.gallery_index == 0 && t.probe_index == 5)
        .unwrap()
        .fused_genuine_belief;
    let worst_impostor = trials
        .iter()
        .filter(|t| !t.is_genuine)
        .map(|t| t.fused_genuine_belief)
        .fold(0.0, f64::max);
    assert!(copy >= worst_impostor, "copy {copy} vs impostor {worst_impostor}");
}

#[test]
fn reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_dataset(dir.path(), 2, 2, 3).unwrap();
    let manifest = DatasetManifest::load(&path).unwrap();
    let cfg = PipelineConfig::default();
    let a = run_verification(&manifest, &cfg, Exec::Parallel).unwrap();
    let b = run_verification(&manifest, &cfg, Exec::Sequential).unwrap();
    assert_eq!(a, b);
    let csv = |trials| {
        let roc = facegraph::eval::compute_roc(trials, DEFAULT_SWEEP).unwrap();
        let mut out = Vec::new();
        write_roc_csv(&roc.points, &mut out).unwrap();
        out
    };
    let bytes = csv(&a);
    assert_eq!(bytes, csv(&b));
    assert_eq!(String::from_utf8(bytes).unwrap().lines().count(), DEFAULT_SWEEP + 1);
    assert!((0.0..=1.0).contains(&rank1_identification(&a)));
}

#[test]
fn unreadable_entry_names_subject() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), 1, 1, 1).unwrap();
    let manifest = manifest_with(dir.path(), &["a,s00_0.pgm,s00_0.txt", "ghost,missing.pgm,s00_0.txt"]);
    let err = run_verification(&manifest, &PipelineConfig::default(), Exec::default()).unwrap_err();
    assert!(matches!(&err, EvalError::Image { index: 1, subject, .. } if subject == "ghost"));
}

#[test]
fn identical_distributions_give_half_eer() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let scores: Vec<(f64, bool)> = (0..2000).map(|k| (rng.gen::<f64>(), k % 2 == 0)).collect();
    let roc = compute_roc_scores(&scores, DEFAULT_SWEEP).unwrap();
    assert!((roc.eer - 0.5).abs() <= 0.05, "eer {}", roc.eer);
}

#[test]
fn adversarial_trial_sets_stay_monotone() {
    // all ties, values on sweep points, extremes and a single trial per class
    assert_monotone(&[(0.6, true), (0.6, false)], DEFAULT_SWEEP);
    assert_monotone(&[(0.0, true), (1.0, false), (1.0, true), (0.0, false)], DEFAULT_SWEEP);
    let on_grid: Vec<(f64, bool)> = (0..=100).map(|k| (k as f64 / 100.0, k % 3 == 0)).collect();
    assert_monotone(&on_grid, 101);
    assert_monotone(&[(0.5, true), (0.5, true), (0.5, false)], 2);
}

proptest! {
    #[test]
    fn random_trial_sets_stay_monotone(
        scores in prop::collection::vec((0.0..=1.0f64, any::<bool>()), 2..300),
        n in 2usize..300,
    ) {
        prop_assume!(scores.iter().any(|s| s.1) && scores.iter().any(|s| !s.1));
        assert_monotone(&scores, n);
    }
}
