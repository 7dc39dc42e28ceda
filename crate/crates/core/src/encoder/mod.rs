//! Binary-to-image encoders: raw-byte grayscale and Hilbert-mapped
//! sliding-window entropy.

mod hilbert;

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

pub use hilbert::{hilbert_d2xy, hilbert_xy2d, HilbertOrder};

pub const DEFAULT_SIDE: usize = 64;
pub const DEFAULT_ENTROPY_WINDOW: usize = 64;

/// An arbitrary byte sequence with a source identity and optional label.
#[derive(Debug, Clone)]
pub struct RawBinary {
    bytes: Vec<u8>,
    pub source_id: String,
    pub label: Option<usize>,
}

impl RawBinary {
    pub fn new(bytes: Vec<u8>, source_id: impl Into<String>) -> Result<Self> {
        let source_id = source_id.into();
        if bytes.is_empty() {
            return Err(Error::EmptyInput(source_id));
        }
        Ok(RawBinary {
            bytes,
            source_id,
            label: None,
        })
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }
}

/// `side x side` single-channel image, one byte per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub side: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Pixels scaled to [0, 1], shaped `[side, side, 1]`.
    pub fn to_tensor<F: Scalar>(&self) -> Tensor<F> {
        let scale = F::from(255.0).unwrap();
        let data = self
            .pixels
            .iter()
            .map(|&p| F::from(p).unwrap() / scale)
            .collect();
        Tensor::from_vec(&[self.side, self.side, 1], data).unwrap()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        image::GrayImage::from_raw(self.side as u32, self.side as u32, self.pixels.clone())
            .expect("pixel count matches dimensions")
            .save(path)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }
}

/// `side x side` RGB image encoding local entropy along the Hilbert curve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntropyImage {
    pub side: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl EntropyImage {
    /// Channels scaled to [0, 1], shaped `[side, side, 3]`.
    pub fn to_tensor<F: Scalar>(&self) -> Tensor<F> {
        let scale = F::from(255.0).unwrap();
        let mut data = Vec::with_capacity(self.pixels.len() * 3);
        for rgb in &self.pixels {
            for &c in rgb {
                data.push(F::from(c).unwrap() / scale);
            }
        }
        Tensor::from_vec(&[self.side, self.side, 3], data).unwrap()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        image::RgbImage::from_raw(self.side as u32, self.side as u32, raw)
            .expect("pixel count matches dimensions")
            .save(path)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }
}

/// Reshape the file's bytes into a `side x side` grayscale image: pixel `i`
/// (row-major) is byte `i`. Short files are zero-padded, long files truncated.
pub fn bytes_to_gray(bin: &RawBinary, side: usize) -> Result<GrayImage> {
    if side == 0 {
        return Err(Error::Config("image side must be >= 1".into()));
    }
    let n = side * side;
    let mut pixels = vec![0u8; n];
    let take = bin.bytes().len().min(n);
    pixels[..take].copy_from_slice(&bin.bytes()[..take]);
    Ok(GrayImage { side, pixels })
}

/// Shannon entropy, in bits per byte, of the window of `window` bytes
/// centered at `center` and clipped to the file extent. Result is in [0, 8].
pub fn window_entropy(bytes: &[u8], center: usize, window: usize) -> Result<f64> {
    if bytes.is_empty() {
        return Err(Error::EmptyInput("entropy window over empty bytes".into()));
    }
    if window == 0 {
        return Err(Error::Config("entropy window must be >= 1".into()));
    }
    let lo = center.saturating_sub(window / 2);
    let hi = (center + window.div_ceil(2)).min(bytes.len());
    let lo = lo.min(hi.saturating_sub(1));
    let slice = &bytes[lo..hi];

    let mut freq = [0usize; 256];
    for &b in slice {
        freq[b as usize] += 1;
    }
    let len = slice.len() as f64;
    let mut h = 0.0;
    for &c in &freq {
        if c > 0 {
            let p = c as f64 / len;
            h -= p * p.log2();
        }
    }
    Ok(h.clamp(0.0, 8.0))
}

/// Map an entropy value in [0, 8] to an RGB color, black -> blue -> magenta.
pub fn color_map(e: f64) -> Result<[u8; 3]> {
    if !(0.0..=8.0).contains(&e) {
        return Err(Error::Domain(format!("entropy {e} outside [0, 8]")));
    }
    let t = e / 8.0;
    let r = (255.0 * (2.0 * t - 1.0).clamp(0.0, 1.0)).round() as u8;
    let b = (255.0 * (2.0 * t).clamp(0.0, 1.0)).round() as u8;
    Ok([r, 0, b])
}

/// Encode a file as a Hilbert-curve entropy image: curve step `d` samples the
/// window entropy at offset `d * len / side^2` and places its color at the
/// cell the curve visits at step `d`.
pub fn bytes_to_entropy_image(bin: &RawBinary, side: usize, window: usize) -> Result<EntropyImage> {
    let order = HilbertOrder::for_side(side)?;
    let bytes = bin.bytes();
    let cells = order.cells();
    let mut pixels = vec![[0u8; 3]; cells];
    for d in 0..cells {
        let offset = d * bytes.len() / cells;
        let e = window_entropy(bytes, offset, window)?;
        let (x, y) = hilbert_d2xy(order, d)?;
        pixels[y * side + x] = color_map(e)?;
    }
    Ok(EntropyImage { side, pixels })
}
