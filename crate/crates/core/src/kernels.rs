//! Blur-kernel pool and kernel downsampling.
//!
//! A low-resolution image is produced from a high-resolution one by
//! cross-correlating with a kernel drawn from the pool and keeping every
//! `s`-th sample. Pools are built from rotated anisotropic Gaussians or
//! loaded from text files written by an external kernel estimator.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::image::Image;

const MAGIC: &str = "KERN1";

/// Loaded kernels whose stored sum deviates from 1 by more than this are
/// flagged as renormalized.
pub const RENORMALIZE_FLAG_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel {
    /// Builds a kernel from row-major weights, normalizing them to sum 1.
    pub fn from_weights(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::arg(format!("kernel size must be odd and positive, got {size}")));
        }
        if weights.len() != size * size {
            return Err(Error::arg(format!("expected {} weights, got {}", size * size, weights.len())));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::arg("kernel weights must be finite"));
        }
        let sum: f64 = weights.iter().sum();
        if sum.abs() < 1e-12 {
            return Err(Error::arg("kernel weights sum to zero"));
        }
        Ok(Self {
            size,
            weights: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    /// The identity kernel: 1 at the center, 0 elsewhere.
    pub fn delta(size: usize) -> Result<Self> {
        let mut w = vec![0.0; size * size];
        if let Some(center) = w.get_mut(size * size / 2) {
            *center = 1.0;
        }
        Self::from_weights(size, w)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn transpose(&self) -> Kernel {
        let n = self.size;
        let weights = (0..n * n).map(|i| self.at(i % n, i / n)).collect();
        Kernel { size: n, weights }
    }
}

/// Rotated anisotropic Gaussian sampled at integer offsets from the center
/// and normalized to sum 1. `sigma_x` is the spread along the axis rotated
/// by `theta` from the column axis.
pub fn gaussian_aniso_kernel(sigma_x: f64, sigma_y: f64, theta: f64, size: usize) -> Result<Kernel> {
    if !(sigma_x > 0.0 && sigma_y > 0.0) {
        return Err(Error::arg(format!("sigmas must be positive, got ({sigma_x}, {sigma_y})")));
    }
    if size == 0 || size % 2 == 0 {
        return Err(Error::arg(format!("kernel size must be odd and positive, got {size}")));
    }
    let r = (size / 2) as f64;
    let (sin, cos) = theta.sin_cos();
    let mut weights = Vec::with_capacity(size * size);
    for row in 0..size {
        let dy = row as f64 - r;
        for col in 0..size {
            let dx = col as f64 - r;
            let u = dx * cos + dy * sin;
            let v = -dx * sin + dy * cos;
            weights.push((-0.5 * (u * u / (sigma_x * sigma_x) + v * v / (sigma_y * sigma_y))).exp());
        }
    }
    Kernel::from_weights(size, weights)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelPool {
    kernels: Vec<Kernel>,
}

impl KernelPool {
    pub fn new(kernels: Vec<Kernel>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::arg("kernel pool is empty"));
        }
        Ok(Self { kernels })
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Kernel> {
        self.kernels.get(index)
    }

    pub fn max_size(&self) -> usize {
        self.kernels.iter().map(Kernel::size).max().unwrap_or(1)
    }

    /// Uniform draw of one pool index.
    pub fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.kernels.len())
    }

    /// Serialized pool: one `KERN1` block per kernel.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, k) in self.kernels.iter().enumerate() {
            let _ = writeln!(out, "# kernel {i}");
            out.push_str(&kernel_to_text(k));
        }
        out
    }

    pub fn from_text(text: &str, source_name: &str) -> Result<(Self, Vec<LoadedKernel>)> {
        let loaded = parse_kernels(text, source_name)?;
        if loaded.is_empty() {
            return Err(Error::parse(source_name, 0, "no kernels found"));
        }
        let pool = KernelPool::new(loaded.iter().map(|l| l.kernel.clone()).collect())?;
        Ok((pool, loaded))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fsutil::atomic_write(path.as_ref(), self.to_text().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read_text(path)?;
        Ok(Self::from_text(&text, &path.display().to_string())?.0)
    }
}

/// Ranges for synthesizing a Gaussian kernel pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSynthesis {
    pub count: usize,
    pub size: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl Default for KernelSynthesis {
    fn default() -> Self {
        Self {
            count: 64,
            size: 11,
            sigma_min: 0.7,
            sigma_max: 2.5,
        }
    }
}

impl KernelSynthesis {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::arg("kernel count must be at least 1"));
        }
        if self.size == 0 || self.size % 2 == 0 {
            return Err(Error::arg(format!("kernel size must be odd, got {}", self.size)));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min <= self.sigma_max && self.sigma_max.is_finite()) {
            return Err(Error::arg(format!(
                "sigma range [{}, {}] is invalid",
                self.sigma_min, self.sigma_max
            )));
        }
        Ok(())
    }

    /// Draws `count` kernels: each sigma uniform in `[sigma_min, sigma_max]`,
    /// orientation uniform in `[0, pi)`.
    pub fn build<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<KernelPool> {
        self.validate()?;
        let mut kernels = Vec::with_capacity(self.count);
        for _ in 0..self.count {
            let sx = rng.random_range(self.sigma_min..=self.sigma_max);
            let sy = rng.random_range(self.sigma_min..=self.sigma_max);
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            kernels.push(gaussian_aniso_kernel(sx, sy, theta, self.size)?);
        }
        KernelPool::new(kernels)
    }
}

/// Cross-correlates every channel with `k` (edge-clamped) and keeps samples
/// at rows and columns `0, s, 2s, ...`. Output is `ceil(h/s) x ceil(w/s)`,
/// clamped to `[0,1]`.
pub fn downsample(img: &Image, k: &Kernel, s: usize) -> Result<Image> {
    if s == 0 {
        return Err(Error::arg("downsampling stride must be at least 1"));
    }
    if img.height() < k.size() || img.width() < k.size() {
        return Err(Error::arg(format!(
            "image {}x{} is smaller than the {}x{} kernel",
            img.height(),
            img.width(),
            k.size(),
            k.size()
        )));
    }
    let (oh, ow) = (img.height().div_ceil(s), img.width().div_ceil(s));
    let r = k.radius() as isize;
    let n = k.size();
    Image::from_fn(oh, ow, img.channels(), |c, oy, ox| {
        let (cy, cx) = ((oy * s) as isize, (ox * s) as isize);
        let mut acc = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let w = k.at(i, j);
                if w != 0.0 {
                    acc += w * img.get_clamped(c, cy + i as isize - r, cx + j as isize - r) as f64;
                }
            }
        }
        acc.clamp(0.0, 1.0) as f32
    })
}

/// A kernel read from disk together with how far its stored weights were
/// from summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedKernel {
    pub kernel: Kernel,
    pub stored_sum: f64,
    pub renormalized: bool,
}

fn kernel_to_text(k: &Kernel) -> String {
    let mut out = format!("{MAGIC} {}\n", k.size());
    for row in 0..k.size() {
        let line: Vec<String> = (0..k.size()).map(|col| format!("{:e}", k.at(row, col))).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn save_kernel(k: &Kernel, path: impl AsRef<Path>) -> Result<()> {
    fsutil::atomic_write(path.as_ref(), kernel_to_text(k).as_bytes())
}

/// Loads the first kernel of a kernel file.
pub fn load_kernel(path: impl AsRef<Path>) -> Result<LoadedKernel> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let text = read_text(path)?;
    parse_kernels(&text, &name)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::parse(name, 0, "no kernel found"))
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = fsutil::read(path)?;
    String::from_utf8(bytes).map_err(|_| Error::parse(path.display().to_string(), 0, "file is not UTF-8"))
}

/// Parses every `KERN1` block in `text`. Comment lines (`#`) and blank lines
/// may appear between blocks.
pub fn parse_kernels(text: &str, source_name: &str) -> Result<Vec<LoadedKernel>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut out = Vec::new();
    loop {
        let Some((lineno, header)) = lines.by_ref().find(|(_, l)| !l.is_empty() && !l.starts_with('#')) else {
            break;
        };
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(Error::parse(source_name, lineno, format!("expected `{MAGIC} <size>` header")));
        }
        let size: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .filter(|&s: &usize| s % 2 == 1)
            .ok_or_else(|| Error::parse(source_name, lineno, "kernel size must be an odd positive integer"))?;
        if parts.next().is_some() {
            return Err(Error::parse(source_name, lineno, "trailing tokens after kernel size"));
        }
        let mut weights = Vec::with_capacity(size * size);
        for row in 0..size {
            let (ln, line) = lines.next().ok_or_else(|| {
                Error::parse(source_name, lineno + row + 1, format!("expected {size} rows, found {row}"))
            })?;
            let values: Vec<&str> = line.split_whitespace().collect();
            if values.len() != size {
                return Err(Error::parse(
                    source_name,
                    ln,
                    format!("expected {size} values, found {}", values.len()),
                ));
            }
            for v in values {
                let x: f64 = v
                    .parse()
                    .map_err(|_| Error::parse(source_name, ln, format!("`{v}` is not a number")))?;
                if !x.is_finite() {
                    return Err(Error::parse(source_name, ln, format!("non-finite weight `{v}`")));
                }
                weights.push(x);
            }
        }
        let stored_sum: f64 = weights.iter().sum();
        let kernel = Kernel::from_weights(size, weights).map_err(|e| Error::parse(source_name, lineno, e.to_string()))?;
        out.push(LoadedKernel {
            kernel,
            stored_sum,
            renormalized: (stored_sum - 1.0).abs() > RENORMALIZE_FLAG_TOLERANCE,
        });
    }
    Ok(out)
}
