//! Low-light degradation: contrast, brightness, Gaussian blur, gamma and
//! additive noise, applied in that order with clamping after each stage.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidConfig("image dimensions must be positive".into()));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let n = width as usize * height as usize;
        Self::new(width, height, rgb.iter().copied().cycle().take(n * 3).collect())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Mean Rec.601 luma in 8-bit units.
    pub fn mean_luminance(&self) -> f64 {
        let f: Vec<f64> = self.pixels.iter().map(|&v| f64::from(v)).collect();
        mean_luma(&f)
    }
}

fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn mean_luma(buf: &[f64]) -> f64 {
    let n = buf.len() / 3;
    buf.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).sum::<f64>() / n as f64
}

pub const CONTRAST_DEFAULT: f64 = 0.7;
pub const GAMMA_DEFAULT: f64 = 2.2;
pub const BRIGHTNESS_RANGE: (f64, f64) = (0.2, 0.5);
pub const BLUR_SIGMA_RANGE: (f64, f64) = (0.5, 2.0);
pub const NOISE_SIGMA_RANGE: (f64, f64) = (2.0, 15.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub contrast: f64,
    pub brightness_scale: f64,
    /// Values `<= 0` skip the blur stage.
    pub blur_sigma: f64,
    pub gamma: f64,
    /// Standard deviation in 8-bit units; 0 disables noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl AugmentParams {
    /// Parameters under which [`enhance`] returns its input unchanged.
    pub fn identity() -> Self {
        Self { contrast: 1.0, brightness_scale: 1.0, blur_sigma: 0.0, gamma: 1.0, noise_sigma: 0.0, seed: 0 }
    }

    pub fn without_noise(mut self) -> Self {
        self.noise_sigma = 0.0;
        self
    }
}

/// Sampling ranges for the randomized fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentRanges {
    pub contrast: f64,
    pub gamma: f64,
    pub brightness: (f64, f64),
    pub blur_sigma: (f64, f64),
    pub noise_sigma: (f64, f64),
}

impl Default for AugmentRanges {
    fn default() -> Self {
        Self {
            contrast: CONTRAST_DEFAULT,
            gamma: GAMMA_DEFAULT,
            brightness: BRIGHTNESS_RANGE,
            blur_sigma: BLUR_SIGMA_RANGE,
            noise_sigma: NOISE_SIGMA_RANGE,
        }
    }
}

impl AugmentRanges {
    pub fn validate(&self) -> Result<()> {
        let ok = |r: (f64, f64)| r.0 > 0.0 && r.0 <= r.1 && r.1.is_finite();
        if self.contrast > 0.0
            && self.gamma > 0.0
            && ok(self.brightness)
            && ok(self.blur_sigma)
            && ok(self.noise_sigma)
        {
            Ok(())
        } else {
            Err(Error::InvalidConfig("augmentation ranges must be positive and ordered".into()))
        }
    }

    pub fn sample(&self, seed: u64) -> AugmentParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |(lo, hi): (f64, f64)| if lo == hi { lo } else { rng.random_range(lo..=hi) };
        let brightness_scale = draw(self.brightness);
        let blur_sigma = draw(self.blur_sigma);
        let noise_sigma = draw(self.noise_sigma);
        AugmentParams { contrast: self.contrast, brightness_scale, blur_sigma, gamma: self.gamma, noise_sigma, seed }
    }
}

pub fn sample_params(seed: u64) -> AugmentParams {
    AugmentRanges::default().sample(seed)
}

pub fn gamma_correct(value: f64, gamma: f64) -> f64 {
    libm::pow(value, gamma)
}

fn clamp_all(buf: &mut [f64]) {
    for v in buf {
        *v = v.clamp(0.0, 255.0);
    }
}

fn contrast(buf: &mut [f64], c: f64) {
    if c == 1.0 {
        return;
    }
    let mean = mean_luma(buf);
    for v in buf.iter_mut() {
        *v = mean + c * (*v - mean);
    }
    clamp_all(buf);
}

fn brightness(buf: &mut [f64], s: f64) {
    if s == 1.0 {
        return;
    }
    for v in buf.iter_mut() {
        *v *= s;
    }
    clamp_all(buf);
}

/// Normalized Gaussian kernel of radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = libm::ceil(3.0 * sigma) as i64;
    let mut k: Vec<f64> = (-r..=r).map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma))).collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

fn blur(buf: &mut [f64], w: usize, h: usize, sigma: f64) {
    if !(sigma > 0.0) {
        return;
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let mut tmp = vec![0.0; buf.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (j, kv) in k.iter().enumerate() {
                    let xs = (x as i64 + j as i64 - r).clamp(0, w as i64 - 1) as usize;
                    acc += kv * buf[(y * w + xs) * 3 + c];
                }
                tmp[(y * w + x) * 3 + c] = acc;
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (j, kv) in k.iter().enumerate() {
                    let ys = (y as i64 + j as i64 - r).clamp(0, h as i64 - 1) as usize;
                    acc += kv * tmp[(ys * w + x) * 3 + c];
                }
                buf[(y * w + x) * 3 + c] = acc;
            }
        }
    }
    clamp_all(buf);
}

fn gamma(buf: &mut [f64], g: f64) {
    if g == 1.0 {
        return;
    }
    for v in buf.iter_mut() {
        *v = 255.0 * gamma_correct(*v / 255.0, g);
    }
    clamp_all(buf);
}

/// Adds i.i.d. noise; row `y` draws from stream `y` of the seeded
/// ChaCha generator, so each row is reproducible on its own.
fn noise(buf: &mut [f64], w: usize, sigma: f64, seed: u64) {
    if !(sigma > 0.0) {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("positive finite sigma");
    for (y, row) in buf.chunks_mut(w * 3).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(y as u64);
        for v in row {
            *v += normal.sample(&mut rng);
        }
    }
    clamp_all(buf);
}

fn check_params(p: &AugmentParams) -> Result<()> {
    let finite = [p.contrast, p.brightness_scale, p.blur_sigma, p.gamma, p.noise_sigma].iter().all(|v| v.is_finite());
    if !finite || p.contrast < 0.0 || p.brightness_scale < 0.0 || p.gamma <= 0.0 || p.noise_sigma < 0.0 {
        return Err(Error::InvalidConfig("augmentation parameters out of range".into()));
    }
    Ok(())
}

/// Runs every stage except noise and returns the unrounded buffer.
pub fn enhance_pre_noise(img: &Image, p: &AugmentParams) -> Result<Vec<f64>> {
    check_params(p)?;
    let (w, h) = (img.width as usize, img.height as usize);
    let mut buf: Vec<f64> = img.pixels.iter().map(|&v| f64::from(v)).collect();
    contrast(&mut buf, p.contrast);
    brightness(&mut buf, p.brightness_scale);
    blur(&mut buf, w, h, p.blur_sigma);
    gamma(&mut buf, p.gamma);
    Ok(buf)
}

pub fn enhance(img: &Image, p: &AugmentParams) -> Result<Image> {
    let mut buf = enhance_pre_noise(img, p)?;
    noise(&mut buf, img.width as usize, p.noise_sigma, p.seed);
    let pixels = buf.iter().map(|v| libm::round(*v) as u8).collect();
    Image::new(img.width, img.height, pixels)
}
