#![allow(dead_code)]

use facegraph::graphmatch::{build_graph, AttributedGraph};
use facegraph::keypoint::{Keypoint, DESCRIPTOR_LEN};
use facegraph::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random Gaussian blobs on a flat background, all kept `margin` pixels from the border.
pub fn blob_texture(width: usize, height: usize, blobs: usize, margin: f64, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spots: Vec<(f64, f64, f64, f64)> = (0..blobs)
        .map(|_| {
            (
                rng.gen_range(margin..width as f64 - margin),
                rng.gen_range(margin..height as f64 - margin),
                rng.gen_range(1.5..4.0),
                if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(0.15..0.4),
            )
        })
        .collect();
    GrayImage::from_fn(width, height, |x, y| {
        let mut v = 0.5;
        for &(cx, cy, s, a) in &spots {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            v += a * (-d2 / (2.0 * s * s)).exp();
        }
        v
    })
}

pub fn gaussian_blob(width: usize, height: usize, cx: f64, cy: f64, sigma: f64) -> GrayImage {
    GrayImage::from_fn(width, height, |x, y| {
        let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
        0.1 + 0.8 * (-d2 / (2.0 * sigma * sigma)).exp()
    })
}

/// Embeds `img` into a larger canvas at offset `(dx, dy)`, filling with `background`.
pub fn embed(img: &GrayImage, width: usize, height: usize, dx: usize, dy: usize, background: f64) -> GrayImage {
    GrayImage::from_fn(width, height, |x, y| {
        if x >= dx && y >= dy && x - dx < img.width() && y - dy < img.height() {
            img.get(x - dx, y - dy)
        } else {
            background
        }
    })
}

/// Keypoint with `raw` zero-padded to full descriptor length and normalized.
pub fn keypoint(x: f64, y: f64, raw: &[f64]) -> Keypoint {
    let mut desc = raw.to_vec();
    desc.resize(DESCRIPTOR_LEN, 0.0);
    let norm = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    let desc = desc.iter().map(|v| v / norm).collect();
    Keypoint::new(x, y, 2.0, 0.0, desc).unwrap()
}

/// Graph with 1..=max_nodes nodes, sparse random descriptors and positions in a 60 px square.
pub fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize) -> AttributedGraph {
    let n = rng.gen_range(1..=max_nodes);
    let nodes: Vec<Keypoint> = (0..n)
        .map(|_| {
            let mut d: Vec<f64> = (0..DESCRIPTOR_LEN)
                .map(|_| if rng.gen_bool(0.4) { rng.gen::<f64>() } else { 0.0 })
                .collect();
            d[0] += 0.05;
            keypoint(rng.gen_range(0.0..60.0), rng.gen_range(0.0..60.0), &d)
        })
        .collect();
    build_graph(&nodes)
}

/// Direct evaluation of one relaxation cycle: plain products and sums, no logs.
#[allow(clippy::needless_range_loop)]
pub fn brute_force_step(prob: &[Vec<f64>], se: impl Fn(usize, usize, usize, usize) -> f64) -> Vec<Vec<f64>> {
    let n = prob.len();
    let m = prob[0].len();
    let mut q = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut product = 1.0;
            for p in 0..n {
                if p == i {
                    continue;
                }
                let mut sum = 0.0;
                for qq in 0..m {
                    sum += se(i, p, j, qq) * prob[p][qq];
                }
                product *= sum;
            }
            q[i][j] = prob[i][j] * product;
        }
    }
    (0..n)
        .map(|i| {
            let den: f64 = (0..m).map(|k| prob[i][k] * q[i][k]).sum();
            (0..m).map(|j| prob[i][j] * q[i][j] / den).collect()
        })
        .collect()
}
