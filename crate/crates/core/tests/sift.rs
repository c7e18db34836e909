mod common;

use std::f64::consts::TAU;

use facegraph::keypoint::{descriptor_similarity, extract_keypoints, SiftConfig, DESCRIPTOR_LEN};

use common::{blob_texture, embed, gaussian_blob};

#[test]
fn constant_image_is_empty() {
    let img = facegraph::GrayImage::from_fn(100, 140, |_, _| 0.37);
    assert!(extract_keypoints(&img, &SiftConfig::default()).unwrap().is_empty());
}

#[test]
fn gaussian_blob_is_localized() {
    // a Gaussian blob's DoG response is radially symmetric about its center,
    // so the center is the spatial extremum
    let (cx, cy) = (40.3, 37.6);
    let img = gaussian_blob(81, 77, cx, cy, 4.0);
    let kps = extract_keypoints(&img, &SiftConfig::default()).unwrap();
    assert!(!kps.is_empty());
    let best = kps
        .iter()
        .map(|k| (k.x - cx).hypot(k.y - cy))
        .fold(f64::INFINITY, f64::min);
    assert!(best < 2.0, "closest keypoint {best} px from the blob center");
}

#[test]
fn invariants_hold_on_texture() {
    let img = blob_texture(100, 140, 60, 6.0, 11);
    let kps = extract_keypoints(&img, &SiftConfig::default()).unwrap();
    assert!(kps.len() > 20, "only {} keypoints", kps.len());
    for k in &kps {
        assert_eq!(k.descriptor.len(), DESCRIPTOR_LEN);
        let norm = k.descriptor.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert!(k.descriptor.iter().all(|&v| v >= 0.0));
        assert!(k.scale > 0.0);
        assert!((0.0..TAU).contains(&k.orientation));
        assert!(k.x >= 0.0 && k.x <= 99.0 && k.y >= 0.0 && k.y <= 139.0);
    }
    // deterministic, including order
    assert_eq!(extract_keypoints(&img, &SiftConfig::default()).unwrap(), kps);
}

#[test]
fn rotation_by_ninety_degrees() {
    // odd side lengths keep every octave's sampling grid aligned under rotation
    let img = blob_texture(97, 97, 50, 8.0, 5);
    let rot = img.rotate90();
    let cfg = SiftConfig::default();
    let a = extract_keypoints(&img, &cfg).unwrap();
    let b = extract_keypoints(&rot, &cfg).unwrap();
    let ratio = b.len() as f64 / a.len() as f64;
    assert!((0.9..=1.1).contains(&ratio), "{} vs {} keypoints", a.len(), b.len());

    // exact coordinate map of the rotation: (x, y) -> (h - 1 - y, x)
    let h = img.height() as f64;
    let matched = a
        .iter()
        .filter(|k| {
            let (mx, my) = (h - 1.0 - k.y, k.x);
            b.iter()
                .filter(|c| (c.x - mx).hypot(c.y - my) < 1.0)
                .any(|c| descriptor_similarity(k, c).unwrap() >= 0.9)
        })
        .count();
    let rate = matched as f64 / a.len() as f64;
    assert!(rate >= 0.9, "match rate {rate}");

    // plain nearest-neighbour matching in descriptor space agrees
    let nn = a
        .iter()
        .filter(|k| {
            b.iter()
                .map(|c| descriptor_similarity(k, c).unwrap())
                .fold(0.0, f64::max)
                >= 0.9
        })
        .count();
    assert!(nn as f64 / a.len() as f64 >= 0.9);
}

#[test]
fn integer_translation_shifts_keypoints() {
    let patch = blob_texture(64, 64, 30, 10.0, 21);
    let cfg = SiftConfig::default();
    // shifts are multiples of the coarsest octave's sampling step
    // and leave room for the coarsest blur to stay clear of the canvas border
    let base = embed(&patch, 176, 176, 40, 40, 0.5);
    let moved = embed(&patch, 176, 176, 56, 72, 0.5);
    let a = extract_keypoints(&base, &cfg).unwrap();
    let b = extract_keypoints(&moved, &cfg).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a.len(), b.len());
    for (ka, kb) in a.iter().zip(&b) {
        assert!((kb.x - ka.x - 16.0).abs() < 0.5 && (kb.y - ka.y - 32.0).abs() < 0.5);
        assert!((ka.scale - kb.scale).abs() < 1e-9);
    }
}

#[test]
fn without_upsampling() {
    let img = blob_texture(100, 140, 60, 6.0, 11);
    let cfg = SiftConfig {
        upsample: false,
        ..SiftConfig::default()
    };
    let coarse = extract_keypoints(&img, &cfg).unwrap();
    let fine = extract_keypoints(&img, &SiftConfig::default()).unwrap();
    assert!(!coarse.is_empty());
    assert!(fine.len() >= coarse.len());
}
