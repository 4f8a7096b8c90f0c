//! Sensor-noise harvesting and injection.
//!
//! A `p x p` window of a real image is taken as a noise sample when it is
//! homogeneous: every tiled `q x q` sub-window has mean and variance close to
//! the window's own (relative tolerances `mu` and `gamma`) and the window
//! variance is at least `phi`, which rejects saturated or flat regions.
//! Subtracting the per-channel mean leaves a zero-mean residual that is
//! later added tile by tile to downsampled images.

use std::path::Path;

use log::{debug, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::degrade::list_images;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::image::Image;
use crate::io::load_image;
use crate::parallel::run_parallel;

const POOL_MAGIC: &[u8; 5] = b"NPOL1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseScanParams {
    pub patch_size: usize,
    pub sub_size: usize,
    pub mu: f64,
    pub gamma: f64,
    /// Minimum window variance, in squared 8-bit intensity units.
    pub phi: f64,
    /// Window step; `None` means `patch_size` (non-overlapping windows).
    pub stride: Option<usize>,
}

impl Default for NoiseScanParams {
    fn default() -> Self {
        Self {
            patch_size: 32,
            sub_size: 8,
            mu: 0.1,
            gamma: 0.25,
            phi: 0.5,
            stride: None,
        }
    }
}

impl NoiseScanParams {
    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.patch_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sub_size == 0 || self.sub_size > self.patch_size {
            return Err(Error::arg(format!(
                "need 0 < sub_size <= patch_size, got {} and {}",
                self.sub_size, self.patch_size
            )));
        }
        if self.patch_size > u16::MAX as usize {
            return Err(Error::arg("patch_size does not fit the pool format"));
        }
        if !(self.mu > 0.0 && self.gamma > 0.0) {
            return Err(Error::arg("mu and gamma must be positive"));
        }
        if !(self.phi >= 0.0) {
            return Err(Error::arg("phi must be non-negative"));
        }
        if self.stride() == 0 {
            return Err(Error::arg("stride must be at least 1"));
        }
        Ok(())
    }
}

/// Arithmetic mean and population variance.
pub fn patch_stats(window: &[f64]) -> (f64, f64) {
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let var = window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Homogeneity test on a row-major `patch_size x patch_size` window of
/// luminance in 8-bit units. Sub-windows tile the patch at stride
/// `sub_size`; a trailing strip narrower than `sub_size` is ignored.
pub fn is_smooth(window: &[f64], params: &NoiseScanParams) -> bool {
    let p = params.patch_size;
    let q = params.sub_size;
    if window.len() != p * p || q == 0 || q > p {
        return false;
    }
    let (mean_p, var_p) = patch_stats(window);
    if var_p < params.phi {
        return false;
    }
    let mean_tol = params.mu * mean_p;
    let var_tol = params.gamma * var_p;
    let mut sub = Vec::with_capacity(q * q);
    for sy in (0..=p - q).step_by(q) {
        for sx in (0..=p - q).step_by(q) {
            sub.clear();
            for y in sy..sy + q {
                sub.extend_from_slice(&window[y * p + sx..y * p + sx + q]);
            }
            let (mean_q, var_q) = patch_stats(&sub);
            if (mean_q - mean_p).abs() > mean_tol || (var_q - var_p).abs() > var_tol {
                return false;
            }
        }
    }
    true
}

/// Zero-mean residual patch, planar channel-major layout.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePatch {
    size: usize,
    channels: usize,
    residuals: Vec<f32>,
}

impl NoisePatch {
    pub fn new(size: usize, channels: usize, residuals: Vec<f32>) -> Result<Self> {
        if size == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::arg(format!("invalid noise patch shape {size}x{size}x{channels}")));
        }
        if residuals.len() != size * size * channels {
            return Err(Error::arg(format!(
                "noise patch needs {} samples, got {}",
                size * size * channels,
                residuals.len()
            )));
        }
        if residuals.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("noise patch has non-finite residuals"));
        }
        Ok(Self {
            size,
            channels,
            residuals,
        })
    }

    pub fn zeros(size: usize, channels: usize) -> Result<Self> {
        Self::new(size, channels, vec![0.0; size * size * channels])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn residuals(&self) -> &[f32] {
        &self.residuals
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.residuals[(channel * self.size + row) * self.size + col]
    }

    pub fn channel_mean(&self, channel: usize) -> f64 {
        let n = self.size * self.size;
        self.residuals[channel * n..(channel + 1) * n].iter().map(|&v| v as f64).sum::<f64>() / n as f64
    }
}

/// A harvested patch together with where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct HarvestedPatch {
    pub row: usize,
    pub col: usize,
    /// Per-channel means removed from the source window, image units.
    pub channel_means: Vec<f64>,
    pub patch: NoisePatch,
}

/// Slides a window over `img` in row-major order and keeps every window
/// whose luminance passes [`is_smooth`].
pub fn harvest_noise_patches(img: &Image, params: &NoiseScanParams) -> Result<Vec<HarvestedPatch>> {
    params.validate()?;
    let p = params.patch_size;
    let (h, w) = (img.height(), img.width());
    if h < p || w < p {
        return Ok(Vec::new());
    }
    let luma: Vec<f64> = img.to_gray().data().iter().map(|&v| v as f64 * 255.0).collect();
    let mut window = vec![0f64; p * p];
    let mut out = Vec::new();
    for row in (0..=h - p).step_by(params.stride()) {
        for col in (0..=w - p).step_by(params.stride()) {
            for y in 0..p {
                let src = (row + y) * w + col;
                window[y * p..(y + 1) * p].copy_from_slice(&luma[src..src + p]);
            }
            if !is_smooth(&window, params) {
                continue;
            }
            let mut residuals = Vec::with_capacity(p * p * img.channels());
            let mut channel_means = Vec::with_capacity(img.channels());
            for c in 0..img.channels() {
                let samples: Vec<f64> = (0..p)
                    .flat_map(|y| (0..p).map(move |x| (y, x)))
                    .map(|(y, x)| img.get(c, row + y, col + x) as f64)
                    .collect();
                let (mean, _) = patch_stats(&samples);
                residuals.extend(samples.iter().map(|v| (v - mean) as f32));
                channel_means.push(mean);
            }
            out.push(HarvestedPatch {
                row,
                col,
                channel_means,
                patch: NoisePatch::new(p, img.channels(), residuals)?,
            });
        }
    }
    Ok(out)
}

pub fn scan_noise_patches(img: &Image, params: &NoiseScanParams) -> Result<Vec<NoisePatch>> {
    Ok(harvest_noise_patches(img, params)?.into_iter().map(|h| h.patch).collect())
}

/// Per-source outcome of [`harvest_directory`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarvestSource {
    pub source_path: String,
    pub patches: usize,
    /// Set when the file could not be used.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub skipped: Option<String>,
}

fn with_channels(img: Image, channels: usize) -> Result<Image> {
    match (img.channels(), channels) {
        (a, b) if a == b => Ok(img),
        (3, 1) => Ok(img.to_gray()),
        (1, 3) => Image::from_fn(img.height(), img.width(), 3, |_, y, x| img.get(0, y, x)),
        (_, c) => Err(Error::arg(format!("noise pools hold 1 or 3 channels, not {c}"))),
    }
}

/// Scans every PNG/JPEG under `dir` (sorted by relative path) and pools the
/// harvested patches in scan order. Gray sources are replicated to three
/// channels, or color sources reduced to luminance, to match `channels`.
pub fn harvest_directory(
    dir: &Path,
    params: &NoiseScanParams,
    channels: usize,
    jobs: usize,
) -> Result<(NoisePool, Vec<HarvestSource>)> {
    params.validate()?;
    if channels != 1 && channels != 3 {
        return Err(Error::arg(format!("noise pools hold 1 or 3 channels, not {channels}")));
    }
    let inputs = list_images(dir)?;
    if inputs.is_empty() {
        return Err(Error::Validation(format!("no PNG or JPEG images under {}", dir.display())));
    }
    let results = run_parallel(jobs, inputs.len(), |i| -> Result<(Vec<NoisePatch>, HarvestSource)> {
        let (rel, path) = &inputs[i];
        let img = match load_image(path) {
            Ok(img) => img,
            Err(e @ Error::Decode { .. }) => {
                warn!("{rel}: {e}, skipping");
                return Ok((
                    Vec::new(),
                    HarvestSource {
                        source_path: rel.clone(),
                        patches: 0,
                        skipped: Some(e.to_string()),
                    },
                ));
            }
            Err(e) => return Err(e),
        };
        let patches = scan_noise_patches(&with_channels(img, channels)?, params)?;
        debug!("{rel}: {} smooth windows", patches.len());
        let source = HarvestSource {
            source_path: rel.clone(),
            patches: patches.len(),
            skipped: None,
        };
        Ok((patches, source))
    })?;
    let mut all = Vec::new();
    let mut sources = Vec::with_capacity(results.len());
    for r in results {
        let (patches, source) = r?;
        all.extend(patches);
        sources.push(source);
    }
    Ok((NoisePool::new(all)?, sources))
}

/// Ordered pool of same-shaped noise patches.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct NoisePool {
    patches: Vec<NoisePatch>,
}

impl NoisePool {
    pub fn new(patches: Vec<NoisePatch>) -> Result<Self> {
        if let Some(first) = patches.first() {
            if let Some(odd) = patches
                .iter()
                .position(|p| p.size != first.size || p.channels != first.channels)
            {
                return Err(Error::arg(format!(
                    "noise patch {odd} is {}x{}x{}, pool holds {}x{}x{}",
                    patches[odd].size, patches[odd].size, patches[odd].channels, first.size, first.size, first.channels
                )));
            }
        }
        Ok(Self { patches })
    }

    pub fn patches(&self) -> &[NoisePatch] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Tile size used by [`inject_noise`].
    pub fn patch_size(&self) -> Option<usize> {
        self.patches.first().map(NoisePatch::size)
    }

    pub fn channels(&self) -> Option<usize> {
        self.patches.first().map(NoisePatch::channels)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = POOL_MAGIC.to_vec();
        out.extend_from_slice(&(self.patches.len() as u32).to_le_bytes());
        for p in &self.patches {
            out.extend_from_slice(&(p.size as u16).to_le_bytes());
            out.push(p.channels as u8);
            for v in &p.residuals {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], source_name: &str) -> Result<Self> {
        let bad = |offset: usize, reason: &str| Error::parse(source_name, 0, format!("byte {offset}: {reason}"));
        if bytes.len() < 9 || &bytes[..5] != POOL_MAGIC {
            return Err(bad(0, "missing NPOL1 header"));
        }
        let count = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let mut pos = 9;
        let mut patches = Vec::with_capacity(count.min(1 << 16));
        for i in 0..count {
            if bytes.len() < pos + 3 {
                return Err(bad(pos, &format!("truncated header of patch {i}")));
            }
            let size = u16::from_le_bytes([bytes[pos], bytes[pos + 1]]) as usize;
            let channels = bytes[pos + 2] as usize;
            pos += 3;
            let n = size * size * channels;
            if bytes.len() < pos + 4 * n {
                return Err(bad(pos, &format!("truncated samples of patch {i}")));
            }
            let residuals = bytes[pos..pos + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            pos += 4 * n;
            patches.push(NoisePatch::new(size, channels, residuals).map_err(|e| bad(pos, &e.to_string()))?);
        }
        if pos != bytes.len() {
            return Err(bad(pos, "trailing bytes after last patch"));
        }
        NoisePool::new(patches).map_err(|e| bad(pos, &e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fsutil::atomic_write(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fsutil::read(path)?, &path.display().to_string())
    }
}

/// Number of noise tiles covering an `h x w` image.
pub fn tile_count(h: usize, w: usize, tile: usize) -> usize {
    h.div_ceil(tile) * w.div_ceil(tile)
}

fn check_compatible(img: &Image, pool: &NoisePool) -> Result<usize> {
    let tile = pool.patch_size().ok_or_else(|| Error::arg("noise pool is empty"))?;
    if pool.channels() != Some(img.channels()) {
        return Err(Error::ShapeMismatch(format!(
            "noise patches have {} channels, image has {}",
            pool.channels().unwrap_or(0),
            img.channels()
        )));
    }
    Ok(tile)
}

/// Adds pool patches tile by tile: tile `t` (row-major) receives
/// `pool[indices[t]]`, cropped at the right and bottom borders. The result is
/// clamped to `[0,1]`.
pub fn apply_noise_tiles(img: &Image, pool: &NoisePool, indices: &[usize]) -> Result<Image> {
    let tile = check_compatible(img, pool)?;
    let (h, w) = (img.height(), img.width());
    let tiles_x = w.div_ceil(tile);
    if indices.len() != tile_count(h, w, tile) {
        return Err(Error::arg(format!(
            "expected {} tile indices, got {}",
            tile_count(h, w, tile),
            indices.len()
        )));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= pool.len()) {
        return Err(Error::arg(format!("noise index {bad} outside pool of {}", pool.len())));
    }
    Image::from_fn(h, w, img.channels(), |c, y, x| {
        let patch = &pool.patches[indices[(y / tile) * tiles_x + x / tile]];
        (img.get(c, y, x) + patch.get(c, y % tile, x % tile)).clamp(0.0, 1.0)
    })
}

/// Draws one pool index per tile, row-major, uniformly.
pub fn draw_tile_indices<R: Rng + ?Sized>(h: usize, w: usize, pool: &NoisePool, rng: &mut R) -> Result<Vec<usize>> {
    let tile = pool.patch_size().ok_or_else(|| Error::arg("noise pool is empty"))?;
    Ok((0..tile_count(h, w, tile)).map(|_| rng.random_range(0..pool.len())).collect())
}

/// Injects noise and returns the per-tile pool indices that were drawn.
pub fn inject_noise_recorded<R: Rng + ?Sized>(
    img: &Image,
    pool: &NoisePool,
    rng: &mut R,
) -> Result<(Image, Vec<usize>)> {
    check_compatible(img, pool)?;
    let indices = draw_tile_indices(img.height(), img.width(), pool, rng)?;
    let out = apply_noise_tiles(img, pool, &indices)?;
    Ok((out, indices))
}

pub fn inject_noise<R: Rng + ?Sized>(img: &Image, pool: &NoisePool, rng: &mut R) -> Result<Image> {
    Ok(inject_noise_recorded(img, pool, rng)?.0)
}
