//! Full-reference image quality metrics, the perceptual index and
//! directory-level evaluation reports.

pub mod lpips;
pub mod nlpd;
pub mod ssim;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use log::{info, warn};
use serde::Deserialize;

use crate::degrade::{list_images, output_stem};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::image::Image;
use crate::io::load_image;
use crate::parallel::run_parallel;

pub use lpips::{lpips, lpips_with, ConvExtractor, FeatureExtractor, IdentityExtractor, LpipsVariant};
pub use nlpd::nlpd;
pub use ssim::{max_ms_ssim_scales, ms_ssim, ms_ssim_with_scales, ssim};

/// Peak signal-to-noise ratio in dB for samples in `[0,1]`. Identical
/// images give `+inf`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse / a.len() as f64;
    Ok(-10.0 * mse.log10())
}

/// `((10 - nrqm) + niqe) / 2`; lower is better.
pub fn perceptual_index(niqe: f64, nrqm: f64) -> Result<f64> {
    if !niqe.is_finite() || !nrqm.is_finite() {
        return Err(Error::arg(format!("perceptual index needs finite scores, got niqe={niqe} nrqm={nrqm}")));
    }
    Ok(((10.0 - nrqm) + niqe) / 2.0)
}

/// No-reference scores for one image, supplied by an external tool.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NrScores {
    pub niqe: f64,
    pub nrqm: f64,
}

#[derive(Deserialize)]
struct NrRow {
    image: String,
    niqe: f64,
    nrqm: f64,
}

/// Parses a CSV with header `image,niqe,nrqm`. The image column is matched
/// by stem, so `a.png` and `a` name the same image.
pub fn parse_nr_scores(text: &str, source_name: &str) -> Result<BTreeMap<String, NrScores>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for row in rdr.deserialize::<NrRow>() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(source_name, line, e.to_string())
        })?;
        let key = output_stem(&row.image);
        if out.insert(key, NrScores { niqe: row.niqe, nrqm: row.nrqm }).is_some() {
            return Err(Error::Validation(format!("{source_name}: duplicate scores for {}", row.image)));
        }
    }
    Ok(out)
}

/// Per-image scores plus aggregate mean and population standard deviation
/// for every metric column.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub metrics: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub image: String,
    pub scores: BTreeMap<String, f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().all(|v| *v == values[0]) {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl MetricReport {
    pub fn new(metrics: Vec<String>, rows: Vec<ReportRow>) -> Result<Self> {
        for row in &rows {
            for m in &metrics {
                if !row.scores.contains_key(m) {
                    return Err(Error::Validation(format!("{}: missing {m} score", row.image)));
                }
            }
        }
        let mut mean = BTreeMap::new();
        let mut std = BTreeMap::new();
        for m in &metrics {
            let values: Vec<f64> = rows.iter().map(|r| r.scores[m]).collect();
            let (mu, sd) = mean_std(&values);
            mean.insert(m.clone(), mu);
            std.insert(m.clone(), sd);
        }
        Ok(Self { metrics, rows, mean, std })
    }

    /// CSV text: header `image,<metrics..>`, one row per image, then a
    /// trailing `mean` row.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let enc = |e: csv::Error| Error::Encode(e.to_string());
        let mut header = vec!["image".to_string()];
        header.extend(self.metrics.iter().cloned());
        wtr.write_record(&header).map_err(enc)?;
        for row in &self.rows {
            let mut rec = vec![row.image.clone()];
            rec.extend(self.metrics.iter().map(|m| format_score(row.scores[m])));
            wtr.write_record(&rec).map_err(enc)?;
        }
        let mut rec = vec!["mean".to_string()];
        rec.extend(self.metrics.iter().map(|m| format_score(self.mean[m])));
        wtr.write_record(&rec).map_err(enc)?;
        wtr.into_inner().map_err(|e| Error::Encode(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fsutil::atomic_write(path, &self.to_csv()?)
    }
}

fn format_score(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

#[derive(Clone, Default)]
pub struct EvaluateOptions {
    /// Feature extractor for LPIPS; the seed-fixed random bank when `None`.
    pub extractor: Option<Arc<dyn FeatureExtractor>>,
    pub lpips_variant: LpipsVariant,
    /// Enables the `niqe`, `nrqm` and `pi` columns.
    pub nr_scores: Option<BTreeMap<String, NrScores>>,
    pub jobs: usize,
}

/// Scores every image in `sr_dir` against the image with the same stem in
/// `gt_dir`. MS-SSIM uses as many scales (up to five) as the image allows.
pub fn evaluate(sr_dir: &Path, gt_dir: &Path, opts: &EvaluateOptions) -> Result<MetricReport> {
    let sr = list_images(sr_dir)?;
    let gt: BTreeMap<String, _> = list_images(gt_dir)?
        .into_iter()
        .map(|(rel, path)| (output_stem(&rel), path))
        .collect();
    if sr.is_empty() {
        return Err(Error::Validation(format!("no images found in {}", sr_dir.display())));
    }
    let mut pairs = Vec::with_capacity(sr.len());
    for (rel, path) in sr {
        let stem = output_stem(&rel);
        let gt_path = gt
            .get(&stem)
            .ok_or_else(|| Error::Validation(format!("{rel}: no ground-truth image with stem {stem}")))?;
        if pairs.iter().any(|(s, _, _)| *s == stem) {
            return Err(Error::Validation(format!("{rel}: stem {stem} appears more than once")));
        }
        pairs.push((stem, path, gt_path.clone()));
    }
    if gt.len() > pairs.len() {
        warn!("{} ground-truth images have no counterpart", gt.len() - pairs.len());
    }
    if let Some(nr) = &opts.nr_scores {
        for (stem, _, _) in &pairs {
            if !nr.contains_key(stem) {
                return Err(Error::Validation(format!("no-reference scores missing for {stem}")));
            }
        }
    }

    let defaults = [ConvExtractor::default_for(1), ConvExtractor::default_for(3)];
    let rows = run_parallel(opts.jobs, pairs.len(), |i| {
        let (stem, sr_path, gt_path) = &pairs[i];
        let a = load_image(sr_path)?;
        let b = load_image(gt_path)?;
        if !a.same_shape(&b) {
            return Err(Error::ShapeMismatch(format!(
                "{stem}: {}x{}x{} vs ground truth {}x{}x{}",
                a.height(),
                a.width(),
                a.channels(),
                b.height(),
                b.width(),
                b.channels()
            )));
        }
        let fx: &dyn FeatureExtractor = match &opts.extractor {
            Some(fx) => fx.as_ref(),
            None => &defaults[if a.channels() == 1 { 0 } else { 1 }],
        };
        let scales = max_ms_ssim_scales(a.height(), a.width());
        if scales == 0 {
            return Err(Error::arg(format!(
                "{stem}: {}x{} is too small for SSIM",
                a.height(),
                a.width()
            )));
        }
        let mut scores = BTreeMap::new();
        scores.insert("psnr".to_string(), psnr(&a, &b)?);
        scores.insert("ssim".to_string(), ssim(&a, &b)?);
        scores.insert("ms_ssim".to_string(), ms_ssim_with_scales(&a, &b, scales)?);
        scores.insert("nlpd".to_string(), nlpd(&a, &b)?);
        scores.insert("lpips".to_string(), lpips_with(&a, &b, fx, opts.lpips_variant)?);
        if let Some(nr) = &opts.nr_scores {
            let s = nr[stem];
            scores.insert("niqe".to_string(), s.niqe);
            scores.insert("nrqm".to_string(), s.nrqm);
            scores.insert("pi".to_string(), perceptual_index(s.niqe, s.nrqm)?);
        }
        info!("{stem}: scored");
        Ok(ReportRow {
            image: stem.clone(),
            scores,
        })
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut metrics: Vec<String> = ["psnr", "ssim", "ms_ssim", "nlpd", "lpips"].map(String::from).to_vec();
    if opts.nr_scores.is_some() {
        metrics.extend(["niqe", "nrqm", "pi"].map(String::from));
    }
    MetricReport::new(metrics, rows)
}
