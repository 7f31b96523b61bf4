//! Per-image normalization and seeded k-fold augmentation.
//!
//! Augmentation copy 0 is always the deterministic "clean view": a center
//! crop with no flip and no photometric jitter. Copies `1..k` apply, in
//! order, a random crop, a horizontal flip, a brightness shift and a
//! saturation change, each drawn from the substream keyed by
//! `(seed, image index, copy index)`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{substream, Domain};

pub const CHANNELS: usize = 3;

/// Smallest height/width accepted by [`augment`].
pub const MIN_AUGMENT_EXTENT: usize = 8;

/// Upper bound of raw 8-bit intensities.
pub const PIXEL_MAX: f64 = 255.0;

/// Luma weights used to compute gray in [`adjust_saturation`].
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Whether pixel values are on the raw `[0, 255]` ingest scale or have had
/// their mean subtracted. Photometric ops only clamp raw images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelDomain {
    Raw,
    Centered,
}

/// H×W×3 image stored row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
    domain: PixelDomain,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        Self::with_domain(height, width, pixels, PixelDomain::Raw)
    }

    pub fn with_domain(
        height: usize,
        width: usize,
        pixels: Vec<f64>,
        domain: PixelDomain,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::validation(format!(
                "empty image ({height}x{width})"
            )));
        }
        if pixels.len() != height * width * CHANNELS {
            return Err(Error::validation(format!(
                "{height}x{width}x{CHANNELS} image needs {} values, got {}",
                height * width * CHANNELS,
                pixels.len()
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite pixel value"));
        }
        Ok(ImageTensor {
            height,
            width,
            pixels,
            domain,
        })
    }

    /// Builds an image from a per-(row, column, channel) function.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    pixels.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn domain(&self) -> PixelDomain {
        self.domain
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * CHANNELS + c]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    fn map_values(&self, f: impl Fn(f64) -> f64) -> ImageTensor {
        ImageTensor {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
            domain: self.domain,
        }
    }

    fn region(&self, top: usize, left: usize, h: usize, w: usize) -> ImageTensor {
        let mut pixels = Vec::with_capacity(h * w * CHANNELS);
        for y in top..top + h {
            let start = (y * self.width + left) * CHANNELS;
            pixels.extend_from_slice(&self.pixels[start..start + w * CHANNELS]);
        }
        ImageTensor {
            height: h,
            width: w,
            pixels,
            domain: self.domain,
        }
    }
}

/// How the mean is taken in [`per_image_normalize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizeMode {
    /// One scalar mean over all H·W·3 values.
    #[default]
    Scalar,
    /// Separate mean per color channel.
    PerChannel,
}

/// Subtracts the per-image pixel mean. Output has zero mean and is marked
/// [`PixelDomain::Centered`].
pub fn per_image_normalize(img: &ImageTensor, mode: NormalizeMode) -> ImageTensor {
    let mut out = match mode {
        NormalizeMode::Scalar => {
            let mean = img.mean();
            img.map_values(|v| v - mean)
        }
        NormalizeMode::PerChannel => {
            let count = (img.height * img.width) as f64;
            let mut means = [0.0; CHANNELS];
            for px in img.pixels.chunks_exact(CHANNELS) {
                for (m, &v) in means.iter_mut().zip(px) {
                    *m += v;
                }
            }
            means.iter_mut().for_each(|m| *m /= count);
            let mut out = img.clone();
            for px in out.pixels.chunks_exact_mut(CHANNELS) {
                for (v, m) in px.iter_mut().zip(&means) {
                    *v -= m;
                }
            }
            out
        }
    };
    out.domain = PixelDomain::Centered;
    out
}

fn crop_extent(img: &ImageTensor, fraction: f64) -> Result<(usize, usize)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "crop fraction {fraction} outside (0, 1]"
        )));
    }
    let h = (fraction * img.height as f64).floor() as usize;
    let w = (fraction * img.width as f64).floor() as usize;
    if h == 0 || w == 0 {
        return Err(Error::invalid(format!(
            "crop fraction {fraction} leaves an empty region of a {}x{} image",
            img.height, img.width
        )));
    }
    Ok((h, w))
}

/// Crops a `floor(fraction·H) × floor(fraction·W)` window at a uniformly
/// drawn offset.
pub fn random_crop<R: Rng + ?Sized>(
    img: &ImageTensor,
    fraction: f64,
    rng: &mut R,
) -> Result<ImageTensor> {
    let (h, w) = crop_extent(img, fraction)?;
    let top = rng.random_range(0..=img.height - h);
    let left = rng.random_range(0..=img.width - w);
    Ok(img.region(top, left, h, w))
}

/// Crops the same window as [`random_crop`], centered (offsets rounded down).
pub fn center_crop(img: &ImageTensor, fraction: f64) -> Result<ImageTensor> {
    let (h, w) = crop_extent(img, fraction)?;
    Ok(img.region((img.height - h) / 2, (img.width - w) / 2, h, w))
}

/// Reverses column order within every row.
pub fn flip_horizontal(img: &ImageTensor) -> ImageTensor {
    let mut out = img.clone();
    let row_len = img.width * CHANNELS;
    for (src, dst) in img
        .pixels
        .chunks_exact(row_len)
        .zip(out.pixels.chunks_exact_mut(row_len))
    {
        for (s, d) in src
            .chunks_exact(CHANNELS)
            .rev()
            .zip(dst.chunks_exact_mut(CHANNELS))
        {
            d.copy_from_slice(s);
        }
    }
    out
}

#[inline]
fn clamp_raw(domain: PixelDomain, v: f64) -> f64 {
    match domain {
        PixelDomain::Raw => v.clamp(0.0, PIXEL_MAX),
        PixelDomain::Centered => v,
    }
}

/// Adds `delta` to every value; raw images are clamped to `[0, 255]`.
pub fn adjust_brightness(img: &ImageTensor, delta: f64) -> ImageTensor {
    let domain = img.domain;
    img.map_values(|v| clamp_raw(domain, v + delta))
}

/// Scales each pixel's chroma around its luma:
/// `out_c = gray + factor·(c − gray)` with `gray = 0.299R + 0.587G + 0.114B`.
/// Raw images are clamped to `[0, 255]`.
pub fn adjust_saturation(img: &ImageTensor, factor: f64) -> Result<ImageTensor> {
    if !(factor >= 0.0 && factor.is_finite()) {
        return Err(Error::invalid(format!(
            "saturation factor {factor} must be finite and >= 0"
        )));
    }
    let mut out = img.clone();
    for px in out.pixels.chunks_exact_mut(CHANNELS) {
        let gray = LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2];
        for v in px.iter_mut() {
            *v = clamp_raw(img.domain, gray + factor * (*v - gray));
        }
    }
    Ok(out)
}

/// Parameters of [`augment`].
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub k: usize,
    pub crop_fraction: f64,
    pub brightness_delta_max: f64,
    pub saturation_range: (f64, f64),
    pub flip_prob: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            k: 10,
            crop_fraction: 0.875,
            brightness_delta_max: 32.0,
            saturation_range: (0.5, 1.5),
            flip_prob: 0.5,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "crop_fraction {} outside (0, 1]",
                self.crop_fraction
            )));
        }
        if !(self.brightness_delta_max >= 0.0 && self.brightness_delta_max.is_finite()) {
            return Err(Error::invalid("brightness_delta_max must be finite and >= 0"));
        }
        let (lo, hi) = self.saturation_range;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::invalid(format!(
                "saturation range ({lo}, {hi}) must satisfy 0 <= lo <= hi"
            )));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::invalid(format!(
                "flip_prob {} outside [0, 1]",
                self.flip_prob
            )));
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    // Always consume one draw so stream positions do not depend on the range.
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}

/// Produces `cfg.k` augmented copies of one image.
///
/// `image_index` is the image's position in its dataset; together with
/// `cfg.seed` and the copy index it fully determines the random draws.
pub fn augment(
    img: &ImageTensor,
    image_index: u64,
    cfg: &AugmentConfig,
) -> Result<Vec<ImageTensor>> {
    cfg.validate()?;
    if img.height < MIN_AUGMENT_EXTENT || img.width < MIN_AUGMENT_EXTENT {
        return Err(Error::validation(format!(
            "image {image_index} is {}x{}, augmentation needs at least {MIN_AUGMENT_EXTENT}x{MIN_AUGMENT_EXTENT}",
            img.height, img.width
        )));
    }
    let mut copies = Vec::with_capacity(cfg.k);
    copies.push(center_crop(img, cfg.crop_fraction)?);
    for copy in 1..cfg.k {
        let mut rng = substream(cfg.seed, Domain::Augment, &[image_index, copy as u64]);
        let mut out = random_crop(img, cfg.crop_fraction, &mut rng)?;
        if rng.random::<f64>() < cfg.flip_prob {
            out = flip_horizontal(&out);
        }
        let delta = uniform(&mut rng, -cfg.brightness_delta_max, cfg.brightness_delta_max);
        out = adjust_brightness(&out, delta);
        let (lo, hi) = cfg.saturation_range;
        let factor = uniform(&mut rng, lo, hi);
        out = adjust_saturation(&out, factor)?;
        copies.push(out);
    }
    Ok(copies)
}

/// Augments a batch in parallel; image `i` uses index `first_index + i`.
pub fn augment_batch(
    images: &[ImageTensor],
    first_index: u64,
    cfg: &AugmentConfig,
) -> Result<Vec<Vec<ImageTensor>>> {
    images
        .par_iter()
        .enumerate()
        .map(|(i, img)| augment(img, first_index + i as u64, cfg))
        .collect()
}
