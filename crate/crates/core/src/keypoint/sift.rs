//! Difference-of-Gaussians keypoint detection and 128-element gradient descriptors.
//!
//! The pipeline follows Lowe's construction: a Gaussian scale space sampled at
//! `scales_per_octave + 3` levels per octave, DoG extrema over 26 neighbours,
//! quadratic sub-pixel refinement, contrast and edge-response rejection,
//! orientation histograms, and 4x4x8 descriptors with trilinear binning.

use std::f64::consts::PI;

use super::{Keypoint, KeypointError, DESCRIPTOR_LEN};
use crate::image::GrayImage;

const TAU: f64 = 2.0 * PI;
/// Pixels ignored at each octave border during extremum search.
const BORDER: usize = 5;
const MAX_REFINE_STEPS: usize = 5;
const ORI_BINS: usize = 36;
const ORI_SIGMA_FACTOR: f64 = 1.5;
const ORI_RADIUS_FACTOR: f64 = 3.0 * ORI_SIGMA_FACTOR;
const ORI_PEAK_RATIO: f64 = 0.8;
const DESC_WIDTH: usize = 4;
const DESC_BINS: usize = 8;
const DESC_SCALE_FACTOR: f64 = 3.0;
/// Smallest octave side length still searched for extrema.
const MIN_OCTAVE_SIDE: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct SiftConfig {
    pub octaves: usize,
    pub scales_per_octave: usize,
    /// Minimum |DoG| at the refined extremum, for images scaled to `[0, 1]`.
    pub contrast_threshold: f64,
    /// Maximum ratio of principal curvatures.
    pub edge_response_threshold: f64,
    pub descriptor_clamp: f64,
    /// Blur of the first scale-space level.
    pub base_sigma: f64,
    /// Blur assumed to be present in the input image.
    pub assumed_blur: f64,
    /// Double the image resolution before building the first octave.
    pub upsample: bool,
}

impl Default for SiftConfig {
    fn default() -> Self {
        Self {
            octaves: 4,
            scales_per_octave: 3,
            contrast_threshold: 0.03,
            edge_response_threshold: 10.0,
            descriptor_clamp: 0.2,
            base_sigma: 1.6,
            assumed_blur: 0.5,
            upsample: true,
        }
    }
}

impl SiftConfig {
    pub fn validate(&self) -> Result<(), KeypointError> {
        let bad = |msg: &str| Err(KeypointError::Config(msg.to_string()));
        if self.octaves < 1 {
            return bad("octaves must be at least 1");
        }
        if self.scales_per_octave < 2 {
            return bad("scales_per_octave must be at least 2");
        }
        for (name, v) in [
            ("contrast_threshold", self.contrast_threshold),
            ("edge_response_threshold", self.edge_response_threshold),
            ("descriptor_clamp", self.descriptor_clamp),
            ("base_sigma", self.base_sigma),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(KeypointError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.assumed_blur.is_finite() && self.assumed_blur >= 0.0) {
            return bad("assumed_blur must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Plane {
    #[inline]
    fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }

    fn downsample(&self) -> Plane {
        let w = self.w.div_ceil(2);
        let h = self.h.div_ceil(2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(self.at(2 * x, 2 * y));
            }
        }
        Plane { w, h, data }
    }

    fn sub(&self, other: &Plane) -> Plane {
        Plane {
            w: self.w,
            h: self.h,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Bilinear 2x upsampling; output pixel `(x, y)` samples input `(x / 2, y / 2)`.
fn upsample(src: &Plane) -> Plane {
    let (w, h) = (2 * src.w - 1, 2 * src.h - 1);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let (y0, y1) = (y / 2, y.div_ceil(2));
        for x in 0..w {
            let (x0, x1) = (x / 2, x.div_ceil(2));
            data.push(0.25 * (src.at(x0, y0) + src.at(x1, y0) + src.at(x0, y1) + src.at(x1, y1)));
        }
    }
    Plane { w, h, data }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Half-sample symmetric border: -1 -> 0, n -> n-1.
#[inline]
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

fn blur(src: &Plane, sigma: f64) -> Plane {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (w, h) = (src.w, src.h);
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (t, kv) in k.iter().enumerate() {
                acc += kv * row[reflect(x as i64 + t as i64 - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, kv) in k.iter().enumerate() {
                acc += kv * tmp[reflect(y as i64 + t as i64 - r, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    Plane { w, h, data: out }
}

struct Octave {
    gauss: Vec<Plane>,
    dog: Vec<Plane>,
}

fn octave_count(width: usize, height: usize, wanted: usize) -> usize {
    let mut side = width.min(height);
    let mut n = 0;
    while n < wanted && side >= MIN_OCTAVE_SIDE {
        n += 1;
        side = side.div_ceil(2);
    }
    n.max(1)
}

fn build_scale_space(image: &GrayImage, cfg: &SiftConfig) -> Vec<Octave> {
    let s = cfg.scales_per_octave;
    let mut base = Plane {
        w: image.width(),
        h: image.height(),
        data: image.data().to_vec(),
    };
    let mut blur_present = cfg.assumed_blur;
    if cfg.upsample {
        base = upsample(&base);
        blur_present *= 2.0;
    }
    let init = (cfg.base_sigma.powi(2) - blur_present.powi(2)).max(0.01).sqrt();
    let mut first = blur(&base, init);
    let k = 2f64.powf(1.0 / s as f64);
    let n_oct = octave_count(base.w, base.h, cfg.octaves);
    let mut octaves = Vec::with_capacity(n_oct);
    for o in 0..n_oct {
        if o > 0 {
            let prev: &Octave = &octaves[o - 1];
            first = prev.gauss[s].downsample();
        }
        let mut gauss = Vec::with_capacity(s + 3);
        gauss.push(first.clone());
        for level in 1..s + 3 {
            let prev_sigma = cfg.base_sigma * k.powi(level as i32 - 1);
            let total = prev_sigma * k;
            let inc = (total * total - prev_sigma * prev_sigma).sqrt();
            let next = blur(&gauss[level - 1], inc);
            gauss.push(next);
        }
        let dog = gauss.windows(2).map(|p| p[1].sub(&p[0])).collect();
        octaves.push(Octave { gauss, dog });
    }
    octaves
}

fn is_extremum(dog: &[Plane], layer: usize, x: usize, y: usize) -> bool {
    let v = dog[layer].at(x, y);
    let mut is_max = true;
    let mut is_min = true;
    for plane in &dog[layer - 1..=layer + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if std::ptr::eq(plane, &dog[layer]) && xx == x && yy == y {
                    continue;
                }
                let n = plane.at(xx, yy);
                is_max &= v > n;
                is_min &= v < n;
                if !is_max && !is_min {
                    return false;
                }
            }
        }
    }
    is_max || is_min
}

struct Refined {
    x: usize,
    y: usize,
    layer: usize,
    offset: [f64; 3],
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if d.abs() < 1e-15 {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, slot) in out.iter_mut().enumerate() {
        let mut mc = m;
        for r in 0..3 {
            mc[r][c] = b[r];
        }
        *slot = det(&mc) / d;
    }
    Some(out)
}

fn refine(dog: &[Plane], cfg: &SiftConfig, x: usize, y: usize, layer: usize) -> Option<Refined> {
    let s = cfg.scales_per_octave;
    let (w, h) = (dog[0].w, dog[0].h);
    let (mut x, mut y, mut layer) = (x as i64, y as i64, layer as i64);
    for _ in 0..MAX_REFINE_STEPS {
        let (xu, yu, l) = (x as usize, y as usize, layer as usize);
        let (prev, cur, next) = (&dog[l - 1], &dog[l], &dog[l + 1]);
        let v = cur.at(xu, yu);
        let dx = 0.5 * (cur.at(xu + 1, yu) - cur.at(xu - 1, yu));
        let dy = 0.5 * (cur.at(xu, yu + 1) - cur.at(xu, yu - 1));
        let ds = 0.5 * (next.at(xu, yu) - prev.at(xu, yu));
        let dxx = cur.at(xu + 1, yu) + cur.at(xu - 1, yu) - 2.0 * v;
        let dyy = cur.at(xu, yu + 1) + cur.at(xu, yu - 1) - 2.0 * v;
        let dss = next.at(xu, yu) + prev.at(xu, yu) - 2.0 * v;
        let dxy =
            0.25 * (cur.at(xu + 1, yu + 1) - cur.at(xu - 1, yu + 1) - cur.at(xu + 1, yu - 1) + cur.at(xu - 1, yu - 1));
        let dxs = 0.25 * (next.at(xu + 1, yu) - next.at(xu - 1, yu) - prev.at(xu + 1, yu) + prev.at(xu - 1, yu));
        let dys = 0.25 * (next.at(xu, yu + 1) - next.at(xu, yu - 1) - prev.at(xu, yu + 1) + prev.at(xu, yu - 1));
        let hess = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
        let off = solve3(hess, [-dx, -dy, -ds])?;
        if off.iter().all(|o| o.abs() < 0.5) {
            let contrast = v + 0.5 * (dx * off[0] + dy * off[1] + ds * off[2]);
            if contrast.abs() < cfg.contrast_threshold {
                return None;
            }
            let tr = dxx + dyy;
            let det = dxx * dyy - dxy * dxy;
            let r = cfg.edge_response_threshold;
            if det <= 0.0 || tr * tr * r >= (r + 1.0).powi(2) * det {
                return None;
            }
            return Some(Refined {
                x: xu,
                y: yu,
                layer: l,
                offset: off,
            });
        }
        if off.iter().any(|o| o.abs() > 1e3) {
            return None;
        }
        x += off[0].round() as i64;
        y += off[1].round() as i64;
        layer += off[2].round() as i64;
        let b = BORDER as i64;
        if layer < 1 || layer > s as i64 || x < b || x >= w as i64 - b || y < b || y >= h as i64 - b {
            return None;
        }
    }
    None
}

#[inline]
fn gradient(p: &Plane, x: usize, y: usize) -> (f64, f64) {
    (p.at(x + 1, y) - p.at(x - 1, y), p.at(x, y + 1) - p.at(x, y - 1))
}

fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Dominant gradient orientations around `(x, y)` in octave coordinates.
fn orientations(p: &Plane, x: usize, y: usize, sigma: f64) -> Vec<f64> {
    let radius = (ORI_RADIUS_FACTOR * sigma).round() as i64;
    let weight_sigma = ORI_SIGMA_FACTOR * sigma;
    let denom = 2.0 * weight_sigma * weight_sigma;
    let mut hist = [0.0f64; ORI_BINS];
    for dy in -radius..=radius {
        let yy = y as i64 + dy;
        if yy < 1 || yy >= p.h as i64 - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let xx = x as i64 + dx;
            if xx < 1 || xx >= p.w as i64 - 1 {
                continue;
            }
            let (gx, gy) = gradient(p, xx as usize, yy as usize);
            let mag = gx.hypot(gy);
            let ang = wrap_angle(gy.atan2(gx));
            let bin = ((ang / TAU * ORI_BINS as f64).round() as usize) % ORI_BINS;
            hist[bin] += mag * (-((dx * dx + dy * dy) as f64) / denom).exp();
        }
    }
    let mut smooth = [0.0f64; ORI_BINS];
    for (i, slot) in smooth.iter_mut().enumerate() {
        let at = |o: i64| hist[(i as i64 + o).rem_euclid(ORI_BINS as i64) as usize];
        *slot = (at(-2) + at(2)) / 16.0 + 4.0 * (at(-1) + at(1)) / 16.0 + 6.0 * at(0) / 16.0;
    }
    let max = smooth.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..ORI_BINS {
        let l = smooth[(i + ORI_BINS - 1) % ORI_BINS];
        let c = smooth[i];
        let r = smooth[(i + 1) % ORI_BINS];
        if c > l && c > r && c >= ORI_PEAK_RATIO * max {
            let interp = i as f64 + 0.5 * (l - r) / (l - 2.0 * c + r);
            out.push(wrap_angle(interp / ORI_BINS as f64 * TAU));
        }
    }
    out
}

fn descriptor(p: &Plane, x: usize, y: usize, sigma: f64, angle: f64, clamp: f64) -> Option<Vec<f64>> {
    let d = DESC_WIDTH as f64;
    let n = DESC_BINS as f64;
    let hist_width = DESC_SCALE_FACTOR * sigma;
    let radius = (hist_width * std::f64::consts::SQRT_2 * (d + 1.0) * 0.5).round() as i64;
    let radius = radius.min(((p.w * p.w + p.h * p.h) as f64).sqrt() as i64);
    let (sin_t, cos_t) = angle.sin_cos();
    let weight_denom = 2.0 * (0.5 * d) * (0.5 * d);
    let mut hist = vec![0.0f64; DESCRIPTOR_LEN];
    for i in -radius..=radius {
        for j in -radius..=radius {
            // rotate the pixel offset into the keypoint frame, in cell units
            let c_rot = (j as f64 * cos_t + i as f64 * sin_t) / hist_width;
            let r_rot = (-(j as f64) * sin_t + i as f64 * cos_t) / hist_width;
            let rbin = r_rot + 0.5 * d - 0.5;
            let cbin = c_rot + 0.5 * d - 0.5;
            if rbin <= -1.0 || rbin >= d || cbin <= -1.0 || cbin >= d {
                continue;
            }
            let (xx, yy) = (x as i64 + j, y as i64 + i);
            if xx < 1 || xx >= p.w as i64 - 1 || yy < 1 || yy >= p.h as i64 - 1 {
                continue;
            }
            let (gx, gy) = gradient(p, xx as usize, yy as usize);
            let mag = gx.hypot(gy) * (-(c_rot * c_rot + r_rot * r_rot) / weight_denom).exp();
            let obin = wrap_angle(gy.atan2(gx) - angle) / TAU * n;

            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (fr, fc, fo) = (rbin - r0, cbin - c0, obin - o0);
            for (ri, wr) in [(r0 as i64, 1.0 - fr), (r0 as i64 + 1, fr)] {
                if ri < 0 || ri >= DESC_WIDTH as i64 {
                    continue;
                }
                for (ci, wc) in [(c0 as i64, 1.0 - fc), (c0 as i64 + 1, fc)] {
                    if ci < 0 || ci >= DESC_WIDTH as i64 {
                        continue;
                    }
                    for (oi, wo) in [(o0 as i64, 1.0 - fo), (o0 as i64 + 1, fo)] {
                        let ob = oi.rem_euclid(DESC_BINS as i64) as usize;
                        let idx = (ri as usize * DESC_WIDTH + ci as usize) * DESC_BINS + ob;
                        hist[idx] += mag * wr * wc * wo;
                    }
                }
            }
        }
    }
    normalize(&mut hist)?;
    hist.iter_mut().for_each(|v| *v = v.min(clamp));
    normalize(&mut hist)?;
    Some(hist)
}

fn normalize(v: &mut [f64]) -> Option<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm.is_nan() || norm <= 1e-12 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(())
}

/// Detects DoG extrema and computes their descriptors.
///
/// Output order is by octave, then scale, then row, then column, then orientation.
pub fn extract_keypoints(image: &GrayImage, cfg: &SiftConfig) -> Result<Vec<Keypoint>, KeypointError> {
    cfg.validate()?;
    if image.width() < 32 || image.height() < 32 {
        return Err(KeypointError::ImageTooSmall {
            width: image.width(),
            height: image.height(),
        });
    }
    let s = cfg.scales_per_octave;
    let prefilter = 0.8 * cfg.contrast_threshold;
    let octaves = build_scale_space(image, cfg);
    let mut found: Vec<(usize, Keypoint)> = Vec::new();

    for (o, oct) in octaves.iter().enumerate() {
        let (w, h) = (oct.dog[0].w, oct.dog[0].h);
        if w <= 2 * BORDER || h <= 2 * BORDER {
            continue;
        }
        // octave pixel -> input pixel
        let factor = f64::from(1u32 << o) / if cfg.upsample { 2.0 } else { 1.0 };
        for layer in 1..=s {
            for y in BORDER..h - BORDER {
                for x in BORDER..w - BORDER {
                    if oct.dog[layer].at(x, y).abs() <= prefilter || !is_extremum(&oct.dog, layer, x, y) {
                        continue;
                    }
                    let Some(r) = refine(&oct.dog, cfg, x, y, layer) else {
                        continue;
                    };
                    let oct_sigma = cfg.base_sigma * 2f64.powf((r.layer as f64 + r.offset[2]) / s as f64);
                    let kx = (r.x as f64 + r.offset[0]) * factor;
                    let ky = (r.y as f64 + r.offset[1]) * factor;
                    let plane = &oct.gauss[r.layer];
                    for angle in orientations(plane, r.x, r.y, oct_sigma) {
                        if let Some(desc) = descriptor(plane, r.x, r.y, oct_sigma, angle, cfg.descriptor_clamp) {
                            found.push((o, Keypoint::new(kx, ky, oct_sigma * factor, angle, desc)?));
                        }
                    }
                }
            }
        }
    }

    found.sort_by(|(oa, a), (ob, b)| {
        oa.cmp(ob)
            .then(a.scale.total_cmp(&b.scale))
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
            .then(a.orientation.total_cmp(&b.orientation))
    });
    Ok(found.into_iter().map(|(_, kp)| kp).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_is_half_sample_symmetric() {
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-2, 5), 1);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(6, 5), 3);
        assert_eq!(reflect(2, 5), 2);
    }

    #[test]
    fn kernel_sums_to_one() {
        for s in [0.5, 1.6, 3.2] {
            let k = gaussian_kernel(s);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(k.len() % 2, 1);
        }
    }

    #[test]
    fn solve3_identity() {
        let m = [[2.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 1.0]];
        let x = solve3(m, [2.0, 2.0, 3.0]).unwrap();
        assert_eq!(x, [1.0, 0.5, 3.0]);
        assert!(solve3([[0.0; 3]; 3], [1.0; 3]).is_none());
    }

    #[test]
    fn octave_count_respects_size() {
        assert_eq!(octave_count(100, 140, 4), 4);
        assert_eq!(octave_count(32, 32, 4), 2);
        assert_eq!(octave_count(512, 512, 4), 4);
    }

    #[test]
    fn rejects_small_image_and_bad_config() {
        let img = GrayImage::from_fn(16, 40, |_, _| 0.5);
        assert!(matches!(
            extract_keypoints(&img, &SiftConfig::default()),
            Err(KeypointError::ImageTooSmall { .. })
        ));
        let img = GrayImage::from_fn(40, 40, |_, _| 0.5);
        let cfg = SiftConfig {
            scales_per_octave: 1,
            ..SiftConfig::default()
        };
        assert!(matches!(extract_keypoints(&img, &cfg), Err(KeypointError::Config(_))));
    }

    #[test]
    fn constant_image_has_no_keypoints() {
        let img = GrayImage::from_fn(64, 48, |_, _| 0.42);
        assert!(extract_keypoints(&img, &SiftConfig::default()).unwrap().is_empty());
    }
}
