//! Forward values of the generator training losses.
//!
//! The adversarial term is the relativistic-average generator loss with
//! softplus: for every patch `p`,
//! `softplus(-(fake_p - mean(real))) + softplus(real_p - mean(fake))`,
//! averaged over the patch grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_pix: f64,
    pub lambda_adv: f64,
    pub lambda_lpips: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_pix: 0.01,
            lambda_adv: 0.005,
            lambda_lpips: 0.001,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_pix: f64, lambda_adv: f64, lambda_lpips: f64) -> Result<Self> {
        let w = Self {
            lambda_pix,
            lambda_adv,
            lambda_lpips,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_pix", self.lambda_pix),
            ("lambda_adv", self.lambda_adv),
            ("lambda_lpips", self.lambda_lpips),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::arg(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Discriminator logits, one per image patch, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchLogitGrid {
    rows: usize,
    cols: usize,
    logits: Vec<f64>,
}

impl PatchLogitGrid {
    pub fn new(rows: usize, cols: usize, logits: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::arg("logit grid must be non-empty"));
        }
        if logits.len() != rows * cols {
            return Err(Error::arg(format!("{} logits for a {rows}x{cols} grid", logits.len())));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("logits must be finite"));
        }
        Ok(Self { rows, cols, logits })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn mean(&self) -> f64 {
        self.logits.iter().sum::<f64>() / self.logits.len() as f64
    }
}

/// `ln(1 + e^x)` without overflow for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Mean absolute difference over all samples.
pub fn pixel_loss(gen: &Image, gt: &Image) -> Result<f64> {
    gen.ensure_same_shape(gt)?;
    let sum: f64 = gen
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum();
    Ok(sum / gen.len() as f64)
}

pub fn adv_gen_loss(fake: &PatchLogitGrid, real: &PatchLogitGrid) -> Result<f64> {
    if fake.rows != real.rows || fake.cols != real.cols {
        return Err(Error::ShapeMismatch(format!(
            "fake grid {}x{} vs real grid {}x{}",
            fake.rows, fake.cols, real.rows, real.cols
        )));
    }
    let (mf, mr) = (fake.mean(), real.mean());
    let sum: f64 = fake
        .logits
        .iter()
        .zip(&real.logits)
        .map(|(&f, &r)| softplus(-(f - mr)) + softplus(r - mf))
        .sum();
    Ok(sum / fake.logits.len() as f64)
}

/// `lambda_pix * l_pix + lambda_adv * l_adv + lambda_lpips * l_lpips`.
pub fn generator_loss(l_pix: f64, l_adv: f64, l_lpips: f64, w: &LossWeights) -> Result<f64> {
    if !(l_pix.is_finite() && l_adv.is_finite() && l_lpips.is_finite()) {
        return Err(Error::arg(format!(
            "loss terms must be finite, got ({l_pix}, {l_adv}, {l_lpips})"
        )));
    }
    w.validate()?;
    Ok(w.lambda_pix * l_pix + w.lambda_adv * l_adv + w.lambda_lpips * l_lpips)
}
