//! Grayscale images and binary PGM (P5) input/output.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Largest width or height accepted by the PGM reader.
pub const MAX_DIMENSION: usize = 4096;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image file not found: {0}")]
    NotFound(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed PGM image {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("unsupported PGM bit depth in {path}: maxval {maxval} (only 8-bit images are supported)")]
    UnsupportedBitDepth { path: PathBuf, maxval: u32 },
    #[error("invalid image: {0}")]
    Invalid(String),
}

/// Row-major luminance image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Invalid(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(ImageError::Invalid(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ImageError::Invalid(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel, clamping into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Rotates the image by 90 degrees clockwise (as displayed with y pointing down).
    ///
    /// Pixel `(x, y)` moves to `(height - 1 - y, x)`.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.height, self.width);
        Self::from_fn(w, h, |x, y| self.get(y, self.height - 1 - x))
    }

    /// Quantizes to 8 bits.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| {
        if source.kind() == io::ErrorKind::NotFound {
            ImageError::NotFound(path.to_path_buf())
        } else {
            ImageError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    decode_pgm(&bytes).map_err(|e| match e {
        PgmFault::Malformed(reason) => ImageError::Malformed {
            path: path.to_path_buf(),
            reason,
        },
        PgmFault::Depth(maxval) => ImageError::UnsupportedBitDepth {
            path: path.to_path_buf(),
            maxval,
        },
    })
}

pub fn save_image(image: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let io_err = |source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    file.write_all(&encode_pgm(image)).map_err(io_err)?;
    file.flush().map_err(io_err)
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.to_bytes());
    out
}

enum PgmFault {
    Malformed(String),
    Depth(u32),
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn field(&mut self, name: &str) -> Result<u32, PgmFault> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PgmFault::Malformed(format!("missing or non-numeric {name}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PgmFault::Malformed(format!("{name} out of range")))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, PgmFault> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(PgmFault::Malformed("missing P5 magic number".into()));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.field("width")? as usize;
    let height = cur.field("height")? as usize;
    let maxval = cur.field("maxval")?;
    if width == 0 || height == 0 {
        return Err(PgmFault::Malformed(format!("zero dimension {width}x{height}")));
    }
    if width > MAX_DIMENSION || height > MAX_DIMENSION {
        return Err(PgmFault::Malformed(format!(
            "dimensions {width}x{height} exceed {MAX_DIMENSION}"
        )));
    }
    if maxval == 0 {
        return Err(PgmFault::Malformed("maxval must be positive".into()));
    }
    if maxval > 255 {
        return Err(PgmFault::Depth(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(PgmFault::Malformed("header not terminated before raster".into())),
    }
    let raster = &bytes[cur.pos..];
    let needed = width * height;
    if raster.len() < needed {
        return Err(PgmFault::Malformed(format!(
            "truncated raster: expected {needed} bytes, found {}",
            raster.len()
        )));
    }
    let scale = f64::from(maxval);
    let data = raster[..needed]
        .iter()
        .map(|&b| (f64::from(b) / scale).min(1.0))
        .collect();
    Ok(GrayImage { width, height, data })
}
