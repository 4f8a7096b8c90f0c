//! End-to-end degradation: blur and subsample, add real noise, compress.
//!
//! Every random choice is drawn from a per-image generator in a fixed order
//! (kernel index, per-tile noise indices, JPEG coin flip) and written to a
//! [`DegradationRecord`], so any low-resolution output can be rebuilt from
//! its record and the pools.

use std::path::{Path, PathBuf};

use log::{debug, warn};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::image::Image;
use crate::io::{jpeg_roundtrip, load_image, save_png};
use crate::kernels::{downsample, KernelPool};
use crate::noise::{apply_noise_tiles, draw_tile_indices, NoisePool};
use crate::parallel::run_parallel;
use crate::resample::bicubic_resize;
use crate::seed::{pair_seed, rng_from_seed, sha256_hex, sub_seed};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationConfig {
    pub scale: usize,
    pub jpeg_quality: u8,
    pub jpeg_probability: f64,
    pub noise_enabled: bool,
    pub augment_scales: Vec<f64>,
    pub global_seed: u64,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        Self {
            scale: 4,
            jpeg_quality: 30,
            jpeg_probability: 0.9,
            noise_enabled: true,
            augment_scales: vec![1.0, 0.75, 0.5, 0.25],
            global_seed: 0,
        }
    }
}

impl DegradationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 {
            return Err(Error::arg("scale must be at least 1"));
        }
        if !(1..=100).contains(&self.jpeg_quality) {
            return Err(Error::arg(format!("jpeg_quality must be in 1..=100, got {}", self.jpeg_quality)));
        }
        if !(0.0..=1.0).contains(&self.jpeg_probability) {
            return Err(Error::arg(format!(
                "jpeg_probability must be in [0,1], got {}",
                self.jpeg_probability
            )));
        }
        if self.augment_scales.is_empty() {
            return Err(Error::arg("augment_scales is empty"));
        }
        if let Some(bad) = self.augment_scales.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
            return Err(Error::arg(format!("augment scale {bad} outside (0, 1]")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationRecord {
    pub source_path: String,
    pub kernel_index: usize,
    pub noise_indices: Vec<usize>,
    pub jpeg_applied: bool,
    pub augment_scale: f64,
    pub derived_seed: u64,
}

fn check_inputs(hr: &Image, kpool: &KernelPool, npool: &NoisePool, cfg: &DegradationConfig) -> Result<()> {
    cfg.validate()?;
    if kpool.is_empty() {
        return Err(Error::arg("kernel pool is empty"));
    }
    if cfg.noise_enabled && npool.is_empty() {
        return Err(Error::arg("noise is enabled but the noise pool is empty"));
    }
    let min_side = hr.height().min(hr.width());
    if min_side < cfg.scale || min_side < kpool.max_size() {
        return Err(Error::arg(format!(
            "HR image {}x{} is smaller than the scale {} or the largest kernel {}",
            hr.height(),
            hr.width(),
            cfg.scale,
            kpool.max_size()
        )));
    }
    Ok(())
}

/// Degrades one HR image. Draw order: kernel index, tile noise indices (when
/// noise is enabled), one uniform for the JPEG decision.
pub fn degrade_image<R: Rng + ?Sized>(
    hr: &Image,
    kpool: &KernelPool,
    npool: &NoisePool,
    cfg: &DegradationConfig,
    rng: &mut R,
) -> Result<(Image, DegradationRecord)> {
    check_inputs(hr, kpool, npool, cfg)?;
    let kernel_index = kpool.draw_index(rng);
    let down = downsample(hr, &kpool.kernels()[kernel_index], cfg.scale)?;
    let noise_indices = if cfg.noise_enabled {
        draw_tile_indices(down.height(), down.width(), npool, rng)?
    } else {
        Vec::new()
    };
    let jpeg_applied = rng.random::<f64>() < cfg.jpeg_probability;
    let record = DegradationRecord {
        source_path: String::new(),
        kernel_index,
        noise_indices,
        jpeg_applied,
        augment_scale: 1.0,
        derived_seed: 0,
    };
    let lr = finish_stages(down, npool, cfg, &record)?;
    Ok((lr, record))
}

fn finish_stages(down: Image, npool: &NoisePool, cfg: &DegradationConfig, rec: &DegradationRecord) -> Result<Image> {
    let noisy = if cfg.noise_enabled {
        apply_noise_tiles(&down, npool, &rec.noise_indices)?
    } else {
        down
    };
    if rec.jpeg_applied {
        jpeg_roundtrip(&noisy, cfg.jpeg_quality)
    } else {
        Ok(noisy)
    }
}

/// Rebuilds the LR image described by `rec` without drawing any randomness.
pub fn replay_record(
    hr: &Image,
    kpool: &KernelPool,
    npool: &NoisePool,
    cfg: &DegradationConfig,
    rec: &DegradationRecord,
) -> Result<Image> {
    check_inputs(hr, kpool, npool, cfg)?;
    let kernel = kpool
        .get(rec.kernel_index)
        .ok_or_else(|| Error::arg(format!("kernel index {} outside pool of {}", rec.kernel_index, kpool.len())))?;
    let down = downsample(hr, kernel, cfg.scale)?;
    finish_stages(down, npool, cfg, rec)
}

/// Crops the bottom and right edges so both sides are multiples of `s`.
pub fn crop_to_multiple(img: &Image, s: usize) -> Result<Image> {
    let (h, w) = (img.height() - img.height() % s, img.width() - img.width() % s);
    if h == 0 || w == 0 {
        return Err(Error::arg(format!(
            "{}x{} has no full {s}x{s} block",
            img.height(),
            img.width()
        )));
    }
    if h == img.height() && w == img.width() {
        return Ok(img.clone());
    }
    img.crop(0, 0, h, w)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub hr_file: String,
    pub lr_file: String,
    pub hr_height: usize,
    pub hr_width: usize,
    pub record: DegradationRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedInput {
    pub source_path: String,
    pub augment_scale: Option<f64>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: DegradationConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub run_config: Option<serde_json::Value>,
    pub kernel_pool_sha256: String,
    pub noise_pool_sha256: String,
    pub pairs: Vec<PairEntry>,
    pub skipped: Vec<SkippedInput>,
}

#[derive(Clone, Debug, Default)]
pub struct GenerateOptions {
    /// Worker threads; 0 or 1 run on the calling thread.
    pub jobs: usize,
    /// Caller configuration echoed into the manifest.
    pub run_config: Option<serde_json::Value>,
}

/// `scale` rendered for file names: `1`, `0.75`, `0.5`, ...
pub fn scale_label(scale: f64) -> String {
    format!("{scale}")
}

/// Decodable-looking inputs under `dir`, sorted, as `/`-separated relative paths.
pub fn list_images(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::io(dir, e.into()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let ext = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if !matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(dir)
            .expect("walkdir yields children of its root")
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        out.push((rel, entry.path().to_path_buf()));
    }
    Ok(out)
}

/// Output stem for a relative input path: extension dropped, directory
/// separators replaced by `__`.
pub fn output_stem(rel: &str) -> String {
    let no_ext = match rel.rfind('.') {
        Some(dot) if !rel[dot..].contains('/') => &rel[..dot],
        _ => rel,
    };
    no_ext.replace('/', "__")
}

enum Outcome {
    Pair(PairEntry),
    Skip(SkippedInput),
}

fn dedupe_stems(inputs: Vec<(String, PathBuf)>, skipped: &mut Vec<SkippedInput>) -> Vec<(String, PathBuf)> {
    let mut seen = std::collections::BTreeSet::new();
    let mut kept = Vec::new();
    for (rel, path) in inputs {
        if seen.insert(output_stem(&rel)) {
            kept.push((rel, path));
        } else {
            warn!("{rel}: output name collides with an earlier input, skipping");
            skipped.push(SkippedInput {
                source_path: rel,
                augment_scale: None,
                reason: "output name collides with an earlier input".into(),
            });
        }
    }
    kept
}

/// Builds HR/LR training pairs for every image under `hq_dir` and every
/// augmentation scale, writing PNGs and `manifest.json` into `out_dir`.
///
/// Each pair's randomness comes from [`pair_seed`] of the global seed, the
/// relative path and the scale, so outputs do not depend on `jobs`.
pub fn generate_pairs(
    hq_dir: &Path,
    kpool: &KernelPool,
    npool: &NoisePool,
    cfg: &DegradationConfig,
    out_dir: &Path,
    opts: &GenerateOptions,
) -> Result<Manifest> {
    cfg.validate()?;
    if cfg.noise_enabled && npool.is_empty() {
        return Err(Error::arg("noise is enabled but the noise pool is empty"));
    }
    let inputs = list_images(hq_dir)?;
    if inputs.is_empty() {
        return Err(Error::Validation(format!("no PNG or JPEG images under {}", hq_dir.display())));
    }
    fsutil::create_dir_all(out_dir)?;
    let mut skipped = Vec::new();
    let inputs = dedupe_stems(inputs, &mut skipped);

    let per_image = run_parallel(opts.jobs, inputs.len(), |i| {
        let (rel, path) = &inputs[i];
        process_image(rel, path, kpool, npool, cfg, out_dir)
    })?;

    let mut pairs = Vec::new();
    for outcomes in per_image {
        for o in outcomes? {
            match o {
                Outcome::Pair(p) => pairs.push(p),
                Outcome::Skip(s) => skipped.push(s),
            }
        }
    }
    skipped.sort_by(|a, b| a.source_path.cmp(&b.source_path));

    let manifest = Manifest {
        config: cfg.clone(),
        run_config: opts.run_config.clone(),
        kernel_pool_sha256: sha256_hex(kpool.to_text().as_bytes()),
        noise_pool_sha256: sha256_hex(&npool.to_bytes()),
        pairs,
        skipped,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    fsutil::atomic_write(&out_dir.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}

fn process_image(
    rel: &str,
    path: &Path,
    kpool: &KernelPool,
    npool: &NoisePool,
    cfg: &DegradationConfig,
    out_dir: &Path,
) -> Result<Vec<Outcome>> {
    let hq = match load_image(path) {
        Ok(img) => img,
        Err(e @ Error::Decode { .. }) => {
            warn!("{rel}: {e}, skipping");
            return Ok(vec![Outcome::Skip(SkippedInput {
                source_path: rel.to_string(),
                augment_scale: None,
                reason: e.to_string(),
            })]);
        }
        Err(e) => return Err(e),
    };
    let stem = output_stem(rel);
    let mut out = Vec::with_capacity(cfg.augment_scales.len());
    for &scale in &cfg.augment_scales {
        let skip = |reason: String| {
            warn!("{rel} at scale {scale}: {reason}, skipping");
            Outcome::Skip(SkippedInput {
                source_path: rel.to_string(),
                augment_scale: Some(scale),
                reason,
            })
        };
        // The HR written to disk is 8-bit, so degrade that exact image; the
        // pair on disk then replays from its own files.
        let hr = match bicubic_resize(&hq, scale).and_then(|img| crop_to_multiple(&img, cfg.scale)) {
            Ok(img) => img.quantize_8bit(),
            Err(e) => {
                out.push(skip(e.to_string()));
                continue;
            }
        };
        let derived_seed = pair_seed(cfg.global_seed, rel, scale);
        let mut rng = rng_from_seed(derived_seed);
        let (lr, mut record) = match degrade_image(&hr, kpool, npool, cfg, &mut rng) {
            Ok(r) => r,
            Err(e @ (Error::InvalidArgument(_) | Error::ShapeMismatch(_))) => {
                out.push(skip(e.to_string()));
                continue;
            }
            Err(e) => return Err(e),
        };
        debug_assert_eq!(lr.height() * cfg.scale, hr.height());
        record.source_path = rel.to_string();
        record.augment_scale = scale;
        record.derived_seed = derived_seed;

        let label = scale_label(scale);
        let hr_file = format!("{stem}_x{label}_hr.png");
        let lr_file = format!("{stem}_x{label}_lr.png");
        save_png(&hr, out_dir.join(&hr_file))?;
        save_png(&lr, out_dir.join(&lr_file))?;
        debug!("{rel} x{label}: kernel {} jpeg {}", record.kernel_index, record.jpeg_applied);
        out.push(Outcome::Pair(PairEntry {
            hr_file,
            lr_file,
            hr_height: hr.height(),
            hr_width: hr.width(),
            record,
        }));
    }
    Ok(out)
}

/// Synthetic corruption for building evaluation sets with known ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCorruption {
    pub scale: usize,
    /// Gaussian noise standard deviation in 8-bit intensity units.
    pub sigma: f64,
    pub jpeg_quality: u8,
}

impl Default for SyntheticCorruption {
    fn default() -> Self {
        Self {
            scale: 4,
            sigma: 8.0,
            jpeg_quality: 30,
        }
    }
}

impl SyntheticCorruption {
    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 {
            return Err(Error::arg("scale must be at least 1"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::arg(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        if !(1..=100).contains(&self.jpeg_quality) {
            return Err(Error::arg(format!("jpeg_quality must be in 1..=100, got {}", self.jpeg_quality)));
        }
        Ok(())
    }
}

/// Blur/subsample with a random pool kernel and add i.i.d. Gaussian noise
/// of standard deviation `sigma / 255`; clamped, not yet compressed.
pub fn synthetic_noise_stage<R: Rng + ?Sized>(
    hr: &Image,
    kpool: &KernelPool,
    params: &SyntheticCorruption,
    rng: &mut R,
) -> Result<Image> {
    params.validate()?;
    if kpool.is_empty() {
        return Err(Error::arg("kernel pool is empty"));
    }
    let k = kpool.draw_index(rng);
    let down = downsample(hr, &kpool.kernels()[k], params.scale)?;
    let normal = Normal::new(0.0, params.sigma / 255.0).expect("sigma validated");
    let data = down
        .data()
        .iter()
        .map(|&v| (v as f64 + normal.sample(rng)).clamp(0.0, 1.0) as f32)
        .collect();
    Image::new(down.height(), down.width(), down.channels(), data)
}

/// [`synthetic_noise_stage`] followed by JPEG compression.
pub fn synthetic_corrupt<R: Rng + ?Sized>(
    hr: &Image,
    kpool: &KernelPool,
    params: &SyntheticCorruption,
    rng: &mut R,
) -> Result<Image> {
    let noisy = synthetic_noise_stage(hr, kpool, params, rng)?;
    jpeg_roundtrip(&noisy, params.jpeg_quality)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEntry {
    pub source_path: String,
    pub gt_file: String,
    pub lr_file: String,
    pub derived_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticManifest {
    pub params: SyntheticCorruption,
    pub global_seed: u64,
    pub kernel_pool_sha256: String,
    pub entries: Vec<SyntheticEntry>,
    pub skipped: Vec<SkippedInput>,
}

/// Corrupts every image under `hq_dir`, writing `<stem>_gt.png` (cropped to a
/// multiple of the scale) and `<stem>_lr.png`.
pub fn corrupt_directory(
    hq_dir: &Path,
    kpool: &KernelPool,
    params: &SyntheticCorruption,
    global_seed: u64,
    out_dir: &Path,
    jobs: usize,
) -> Result<SyntheticManifest> {
    params.validate()?;
    let inputs = list_images(hq_dir)?;
    if inputs.is_empty() {
        return Err(Error::Validation(format!("no PNG or JPEG images under {}", hq_dir.display())));
    }
    fsutil::create_dir_all(out_dir)?;
    let mut skipped = Vec::new();
    let inputs = dedupe_stems(inputs, &mut skipped);
    let results = run_parallel(jobs, inputs.len(), |i| -> Result<std::result::Result<SyntheticEntry, SkippedInput>> {
        let (rel, path) = &inputs[i];
        let skip = |reason: String| {
            warn!("{rel}: {reason}, skipping");
            Ok(Err(SkippedInput {
                source_path: rel.clone(),
                augment_scale: None,
                reason,
            }))
        };
        let img = match load_image(path) {
            Ok(img) => img,
            Err(e @ Error::Decode { .. }) => return skip(e.to_string()),
            Err(e) => return Err(e),
        };
        let gt = match crop_to_multiple(&img, params.scale) {
            Ok(gt) if gt.height().min(gt.width()) >= kpool.max_size() => gt,
            Ok(_) => return skip("image smaller than the largest kernel".into()),
            Err(e) => return skip(e.to_string()),
        };
        let derived_seed = sub_seed(pair_seed(global_seed, rel, 1.0), "synthetic");
        let lr = synthetic_corrupt(&gt, kpool, params, &mut rng_from_seed(derived_seed))?;
        let stem = output_stem(rel);
        let entry = SyntheticEntry {
            source_path: rel.clone(),
            gt_file: format!("{stem}_gt.png"),
            lr_file: format!("{stem}_lr.png"),
            derived_seed,
        };
        save_png(&gt, out_dir.join(&entry.gt_file))?;
        save_png(&lr, out_dir.join(&entry.lr_file))?;
        Ok(Ok(entry))
    })?;
    let mut entries = Vec::new();
    for r in results {
        match r? {
            Ok(e) => entries.push(e),
            Err(s) => skipped.push(s),
        }
    }
    let manifest = SyntheticManifest {
        params: params.clone(),
        global_seed,
        kernel_pool_sha256: sha256_hex(kpool.to_text().as_bytes()),
        entries,
        skipped,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    fsutil::atomic_write(&out_dir.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Kernel, KernelSynthesis};
    use crate::metrics::psnr;
    use crate::noise::NoisePatch;

    fn random_image(h: usize, w: usize, ch: usize, seed: u64) -> Image {
        let mut rng = rng_from_seed(seed);
        Image::from_fn(h, w, ch, |_, _, _| rng.random::<f32>()).unwrap()
    }

    fn smooth_image(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, 3, |c, y, x| {
            0.5 + 0.35 * ((x as f32 * 0.05 + c as f32).sin() * (y as f32 * 0.04).cos())
        })
        .unwrap()
    }

    fn neutral() -> (KernelPool, NoisePool, DegradationConfig) {
        let kpool = KernelPool::new(vec![Kernel::delta(11).unwrap()]).unwrap();
        let npool = NoisePool::new(vec![NoisePatch::zeros(32, 3).unwrap()]).unwrap();
        let cfg = DegradationConfig {
            jpeg_probability: 0.0,
            ..Default::default()
        };
        (kpool, npool, cfg)
    }

    fn realistic_pools(seed: u64) -> (KernelPool, NoisePool) {
        let mut rng = rng_from_seed(seed);
        let kpool = KernelSynthesis { count: 8, ..Default::default() }.build(&mut rng).unwrap();
        let normal = Normal::new(0.0, 0.01).unwrap();
        let patches = (0..5)
            .map(|_| {
                let raw: Vec<f32> = (0..32 * 32 * 3).map(|_| normal.sample(&mut rng) as f32).collect();
                NoisePatch::new(32, 3, raw).unwrap()
            })
            .collect();
        (kpool, NoisePool::new(patches).unwrap())
    }

    #[test]
    fn neutral_pipeline_is_plain_subsampling() {
        let (kpool, npool, cfg) = neutral();
        let hr = random_image(48, 64, 3, 1);
        let (lr, rec) = degrade_image(&hr, &kpool, &npool, &cfg, &mut rng_from_seed(0)).unwrap();
        assert!(!rec.jpeg_applied);
        assert_eq!((lr.height(), lr.width()), (12, 16));
        for c in 0..3 {
            for y in 0..12 {
                for x in 0..16 {
                    assert_eq!(lr.get(c, y, x), hr.get(c, 4 * y, 4 * x));
                }
            }
        }
    }

    #[test]
    fn same_seed_same_output() {
        let (kpool, npool) = realistic_pools(2);
        let cfg = DegradationConfig::default();
        let hr = smooth_image(96, 80);
        let a = degrade_image(&hr, &kpool, &npool, &cfg, &mut rng_from_seed(9)).unwrap();
        let b = degrade_image(&hr, &kpool, &npool, &cfg, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.noise_indices.len(), 1);
    }

    #[test]
    fn record_replays_exactly() {
        let (kpool, npool) = realistic_pools(3);
        let cfg = DegradationConfig {
            jpeg_probability: 1.0,
            ..Default::default()
        };
        let hr = smooth_image(160, 136);
        let (lr, rec) = degrade_image(&hr, &kpool, &npool, &cfg, &mut rng_from_seed(5)).unwrap();
        assert!(rec.jpeg_applied);
        assert_eq!(rec.noise_indices.len(), 4);
        assert_eq!(replay_record(&hr, &kpool, &npool, &cfg, &rec).unwrap(), lr);
    }

    #[test]
    fn noise_can_be_disabled() {
        let (kpool, _) = realistic_pools(3);
        let cfg = DegradationConfig {
            noise_enabled: false,
            ..Default::default()
        };
        let hr = smooth_image(64, 64);
        let (_, rec) = degrade_image(&hr, &kpool, &NoisePool::default(), &cfg, &mut rng_from_seed(1)).unwrap();
        assert!(rec.noise_indices.is_empty());
    }

    #[test]
    fn degrade_errors() {
        let (kpool, npool, cfg) = neutral();
        let hr = random_image(8, 8, 3, 0);
        assert!(degrade_image(&hr, &kpool, &npool, &cfg, &mut rng_from_seed(0)).is_err());
        let hr = random_image(64, 64, 3, 0);
        assert!(degrade_image(&hr, &kpool, &NoisePool::default(), &cfg, &mut rng_from_seed(0)).is_err());
        let bad = DegradationConfig {
            jpeg_probability: 1.5,
            ..cfg
        };
        assert!(degrade_image(&hr, &kpool, &npool, &bad, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn crop_keeps_top_left() {
        let img = random_image(10, 13, 1, 4);
        let c = crop_to_multiple(&img, 4).unwrap();
        assert_eq!((c.height(), c.width()), (8, 12));
        assert_eq!(c.get(0, 7, 11), img.get(0, 7, 11));
        assert!(crop_to_multiple(&random_image(3, 9, 1, 0), 4).is_err());
    }

    #[test]
    fn stems_and_labels() {
        assert_eq!(output_stem("a.png"), "a");
        assert_eq!(output_stem("sub/dir/b.face.jpg"), "sub__dir__b.face");
        assert_eq!(output_stem("noext"), "noext");
        assert_eq!(scale_label(1.0), "1");
        assert_eq!(scale_label(0.75), "0.75");
    }

    #[test]
    fn near_lossless_synthetic_corruption() {
        let kpool = KernelPool::new(vec![Kernel::delta(11).unwrap()]).unwrap();
        let params = SyntheticCorruption {
            sigma: 0.0,
            jpeg_quality: 100,
            ..Default::default()
        };
        // Channels share their structure so 4:2:0 chroma subsampling has
        // little to discard.
        let hr = Image::from_fn(256, 256, 3, |c, y, x| {
            let tint = [0.05, 0.0, -0.05][c];
            0.5 + tint + 0.35 * ((x as f32 * 0.05).sin() * (y as f32 * 0.04).cos())
        })
        .unwrap();
        let lr = synthetic_corrupt(&hr, &kpool, &params, &mut rng_from_seed(0)).unwrap();
        let sub = downsample(&hr, &kpool.kernels()[0], 4).unwrap();
        let p = psnr(&lr, &sub).unwrap();
        assert!(p > 45.0, "psnr {p}");
    }

    #[test]
    fn synthetic_noise_has_requested_sigma() {
        let kpool = KernelPool::new(vec![Kernel::delta(11).unwrap()]).unwrap();
        let params = SyntheticCorruption::default();
        let hr = Image::filled(512, 512, 1, 0.5).unwrap();
        let noisy = synthetic_noise_stage(&hr, &kpool, &params, &mut rng_from_seed(8)).unwrap();
        assert_eq!((noisy.height(), noisy.width()), (128, 128));
        let m = noisy.mean();
        let var = noisy.data().iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / (noisy.len() - 1) as f64;
        let target = 8.0 / 255.0;
        assert!((var.sqrt() - target).abs() < 0.05 * target, "{} vs {target}", var.sqrt());
    }

    #[test]
    fn synthetic_is_reproducible() {
        let (kpool, _) = realistic_pools(6);
        let hr = smooth_image(128, 128);
        let p = SyntheticCorruption::default();
        let a = synthetic_corrupt(&hr, &kpool, &p, &mut rng_from_seed(77)).unwrap();
        let b = synthetic_corrupt(&hr, &kpool, &p, &mut rng_from_seed(77)).unwrap();
        assert_eq!(a, b);
        assert!(synthetic_corrupt(&hr, &kpool, &SyntheticCorruption { sigma: -1.0, ..p }, &mut rng_from_seed(0)).is_err());
    }
}
