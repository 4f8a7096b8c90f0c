//! LPIPS-style perceptual distance over a pluggable feature extractor.
//!
//! For each layer the feature vector at every spatial position is scaled to
//! unit length across channels, squared differences are weighted per channel
//! by the layer's `tau`, summed over channels and averaged over positions.
//! Layer distances are summed and divided by the layer count.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::image::Image;
use crate::seed::rng_from_seed;

const NORM_EPS: f64 = 1e-10;

/// Seed of the default random filter bank.
pub const DEFAULT_EXTRACTOR_SEED: u64 = 0x1e1e_5eed;

/// Channel-major feature stack of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    fn from_image(img: &Image) -> Self {
        Self {
            channels: img.channels(),
            height: img.height(),
            width: img.width(),
            data: img.data().iter().map(|&v| v as f64).collect(),
        }
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Deterministic multi-layer feature extractor.
pub trait FeatureExtractor: Send + Sync {
    fn layer_count(&self) -> usize;

    /// Features of every layer, shallowest first.
    fn extract(&self, img: &Image) -> Result<Vec<FeatureMap>>;

    /// Non-negative channel weights of `layer`.
    fn layer_weights(&self, layer: usize) -> &[f64];
}

/// One layer whose features are the image samples themselves, `tau = 1`.
#[derive(Clone, Debug)]
pub struct IdentityExtractor {
    tau: Vec<f64>,
}

impl IdentityExtractor {
    pub fn new(channels: usize) -> Self {
        Self {
            tau: vec![1.0; channels],
        }
    }
}

impl FeatureExtractor for IdentityExtractor {
    fn layer_count(&self) -> usize {
        1
    }

    fn extract(&self, img: &Image) -> Result<Vec<FeatureMap>> {
        if img.channels() != self.tau.len() {
            return Err(Error::ShapeMismatch(format!(
                "extractor expects {} channels, image has {}",
                self.tau.len(),
                img.channels()
            )));
        }
        Ok(vec![FeatureMap::from_image(img)])
    }

    fn layer_weights(&self, _layer: usize) -> &[f64] {
        &self.tau
    }
}

/// Convolution layer: optional 2x2 average pooling, then an edge-clamped
/// same-size convolution and ReLU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvLayer {
    pub pool: bool,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    /// `[out][in][row][col]`, flattened.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub tau: Vec<f64>,
}

impl ConvLayer {
    fn validate(&self, index: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(format!("extractor layer {index}: {msg}")));
        if self.kernel_size % 2 == 0 {
            return bad(format!("kernel size {} is not odd", self.kernel_size));
        }
        let k2 = self.kernel_size * self.kernel_size;
        if self.weights.len() != self.out_channels * self.in_channels * k2 {
            return bad(format!("{} weights for a {}x{}x{k2} bank", self.weights.len(), self.out_channels, self.in_channels));
        }
        if self.bias.len() != self.out_channels || self.tau.len() != self.out_channels {
            return bad("bias and tau need one entry per output channel".into());
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return bad("non-finite weights".into());
        }
        if self.tau.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return bad("tau entries must be finite and non-negative".into());
        }
        Ok(())
    }

    fn forward(&self, input: &FeatureMap) -> FeatureMap {
        let x = if self.pool { avg_pool2(input) } else { input.clone() };
        let (h, w, k) = (x.height, x.width, self.kernel_size);
        let r = (k / 2) as isize;
        let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
        let mut data = vec![0.0; self.out_channels * h * w];
        for o in 0..self.out_channels {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = self.bias[o];
                    for i in 0..self.in_channels {
                        for ky in 0..k {
                            let sy = clamp(y as isize + ky as isize - r, h);
                            for kx in 0..k {
                                let sx = clamp(xx as isize + kx as isize - r, w);
                                acc += self.weights[((o * self.in_channels + i) * k + ky) * k + kx] * x.get(i, sy, sx);
                            }
                        }
                    }
                    data[(o * h + y) * w + xx] = acc.max(0.0);
                }
            }
        }
        FeatureMap {
            channels: self.out_channels,
            height: h,
            width: w,
            data,
        }
    }
}

fn avg_pool2(x: &FeatureMap) -> FeatureMap {
    let (h, w) = (x.height / 2, x.width / 2);
    let mut data = Vec::with_capacity(x.channels * h * w);
    for c in 0..x.channels {
        for y in 0..h {
            for xx in 0..w {
                data.push(
                    0.25 * (x.get(c, 2 * y, 2 * xx)
                        + x.get(c, 2 * y, 2 * xx + 1)
                        + x.get(c, 2 * y + 1, 2 * xx)
                        + x.get(c, 2 * y + 1, 2 * xx + 1)),
                );
            }
        }
    }
    FeatureMap {
        channels: x.channels,
        height: h,
        width: w,
        data,
    }
}

/// Chain of [`ConvLayer`]s; every layer's output is one feature level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvExtractor {
    pub in_channels: usize,
    pub layers: Vec<ConvLayer>,
}

impl ConvExtractor {
    pub fn new(in_channels: usize, layers: Vec<ConvLayer>) -> Result<Self> {
        let fx = Self { in_channels, layers };
        fx.validate()?;
        Ok(fx)
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Validation("extractor has no layers".into()));
        }
        let mut ch = self.in_channels;
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_channels != ch {
                return Err(Error::Validation(format!(
                    "extractor layer {i} expects {} inputs, previous layer gives {ch}",
                    l.in_channels
                )));
            }
            l.validate(i)?;
            ch = l.out_channels;
        }
        Ok(())
    }

    /// Seed-fixed bank of random 3x3 filters over three scales
    /// (8, 16 and 32 channels; 2x pooling before the second and third).
    pub fn random(in_channels: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut layers = Vec::new();
        let mut ch = in_channels;
        for (i, out) in [8usize, 16, 32].into_iter().enumerate() {
            let fan_in = (ch * 9) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            let weights = (0..out * ch * 9).map(|_| normal.sample(&mut rng)).collect();
            layers.push(ConvLayer {
                pool: i > 0,
                in_channels: ch,
                out_channels: out,
                kernel_size: 3,
                weights,
                bias: vec![0.0; out],
                tau: vec![1.0; out],
            });
            ch = out;
        }
        Self { in_channels, layers }
    }

    pub fn default_for(channels: usize) -> Self {
        Self::random(channels, DEFAULT_EXTRACTOR_SEED)
    }

    /// Loads layer weights from JSON (`{"in_channels": .., "layers": [..]}`).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fsutil::read(path)?;
        let fx: ConvExtractor = serde_json::from_slice(&bytes).map_err(|e| {
            Error::parse(path.display().to_string(), e.line(), e.to_string())
        })?;
        fx.validate()?;
        Ok(fx)
    }

    fn pool_count(&self) -> usize {
        self.layers.iter().filter(|l| l.pool).count()
    }
}

impl FeatureExtractor for ConvExtractor {
    fn layer_count(&self) -> usize {
        self.layers.len()
    }

    fn extract(&self, img: &Image) -> Result<Vec<FeatureMap>> {
        if img.channels() != self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "extractor expects {} channels, image has {}",
                self.in_channels,
                img.channels()
            )));
        }
        let min_side = 1usize << self.pool_count();
        if img.height().min(img.width()) < min_side {
            return Err(Error::ShapeMismatch(format!(
                "extractor needs at least {min_side}x{min_side} inputs, got {}x{}",
                img.height(),
                img.width()
            )));
        }
        let mut x = FeatureMap::from_image(img);
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            x = layer.forward(&x);
            out.push(x.clone());
        }
        Ok(out)
    }

    fn layer_weights(&self, layer: usize) -> &[f64] {
        &self.layers[layer].tau
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpipsVariant {
    /// Channel-normalized, squared differences.
    #[default]
    Standard,
    /// Raw signed differences weighted by `tau` and averaged, no
    /// normalization or squaring.
    Literal,
}

pub fn lpips(a: &Image, b: &Image, fx: &dyn FeatureExtractor) -> Result<f64> {
    lpips_with(a, b, fx, LpipsVariant::Standard)
}

pub fn lpips_with(a: &Image, b: &Image, fx: &dyn FeatureExtractor, variant: LpipsVariant) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let fa = fx.extract(a)?;
    let fb = fx.extract(b)?;
    let k = fx.layer_count();
    if fa.len() != k || fb.len() != k {
        return Err(Error::ShapeMismatch(format!("extractor returned {} layers, declared {k}", fa.len())));
    }
    let mut total = 0.0;
    for (layer, (ma, mb)) in fa.iter().zip(&fb).enumerate() {
        let tau = fx.layer_weights(layer);
        if tau.len() != ma.channels {
            return Err(Error::ShapeMismatch(format!(
                "layer {layer} has {} channels but {} weights",
                ma.channels,
                tau.len()
            )));
        }
        total += match variant {
            LpipsVariant::Standard => normalized_layer_distance(ma, mb, tau),
            LpipsVariant::Literal => literal_layer_distance(ma, mb, tau),
        };
    }
    Ok(total / k as f64)
}

fn normalized_layer_distance(a: &FeatureMap, b: &FeatureMap, tau: &[f64]) -> f64 {
    let n = a.height * a.width;
    let mut sum = 0.0;
    for p in 0..n {
        let norm = |m: &FeatureMap| {
            (0..m.channels).map(|c| m.data[c * n + p].powi(2)).sum::<f64>().sqrt() + NORM_EPS
        };
        let (na, nb) = (norm(a), norm(b));
        for (c, t) in tau.iter().enumerate() {
            let d = a.data[c * n + p] / na - b.data[c * n + p] / nb;
            sum += t * d * d;
        }
    }
    sum / n as f64
}

fn literal_layer_distance(a: &FeatureMap, b: &FeatureMap, tau: &[f64]) -> f64 {
    let n = a.height * a.width;
    let mut sum = 0.0;
    for (c, t) in tau.iter().enumerate() {
        for p in 0..n {
            sum += t * (a.data[c * n + p] - b.data[c * n + p]);
        }
    }
    sum / n as f64
}
