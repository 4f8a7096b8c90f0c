//! SSIM and multi-scale SSIM on luminance.
//!
//! Windows are 11x11 Gaussians (sigma 1.5) evaluated only where they fit
//! entirely inside the image. Dynamic range is 1.0.

use crate::error::{Error, Result};
use crate::image::Image;

pub const WINDOW: usize = 11;
pub const WINDOW_SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;
pub const C1: f64 = K1 * K1;
pub const C2: f64 = K2 * K2;

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; WINDOW] {
    let r = (WINDOW / 2) as f64;
    let mut g = [0.0; WINDOW];
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-(d * d) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Row-major plane of f64 samples.
#[derive(Clone, Debug)]
pub(crate) struct Plane {
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

impl Plane {
    pub fn luminance(img: &Image) -> Plane {
        let g = img.to_gray();
        Plane {
            h: g.height(),
            w: g.width(),
            v: g.data().iter().map(|&x| x as f64).collect(),
        }
    }

    fn map2(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        Plane {
            h: self.h,
            w: self.w,
            v: self.v.iter().zip(&other.v).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Separable valid-mode filtering with `taps`.
    fn filter_valid(&self, taps: &[f64]) -> Plane {
        let n = taps.len();
        let ow = self.w + 1 - n;
        let oh = self.h + 1 - n;
        let mut horiz = vec![0.0; self.h * ow];
        for y in 0..self.h {
            let row = &self.v[y * self.w..(y + 1) * self.w];
            for x in 0..ow {
                horiz[y * ow + x] = taps.iter().zip(&row[x..x + n]).map(|(t, v)| t * v).sum();
            }
        }
        let mut v = vec![0.0; oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                let mut s = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    s += t * horiz[(y + k) * ow + x];
                }
                v[y * ow + x] = s;
            }
        }
        Plane { h: oh, w: ow, v }
    }

    /// 2x2 mean, edge replicated; output `ceil(h/2) x ceil(w/2)`.
    pub fn halve(&self) -> Plane {
        let (h, w) = (self.h.div_ceil(2), self.w.div_ceil(2));
        let at = |y: usize, x: usize| self.v[y.min(self.h - 1) * self.w + x.min(self.w - 1)];
        let mut v = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                v.push(0.25 * (at(2 * y, 2 * x) + at(2 * y, 2 * x + 1) + at(2 * y + 1, 2 * x) + at(2 * y + 1, 2 * x + 1)));
            }
        }
        Plane { h, w, v }
    }
}

/// Mean SSIM and mean contrast-structure term over all valid windows.
pub(crate) fn ssim_components(a: &Plane, b: &Plane) -> (f64, f64) {
    let taps = gaussian_taps();
    let mu_a = a.filter_valid(&taps);
    let mu_b = b.filter_valid(&taps);
    let aa = a.map2(a, |x, y| x * y).filter_valid(&taps);
    let bb = b.map2(b, |x, y| x * y).filter_valid(&taps);
    let ab = a.map2(b, |x, y| x * y).filter_valid(&taps);
    let n = mu_a.v.len();
    let (mut ssim_sum, mut cs_sum) = (0.0, 0.0);
    for i in 0..n {
        let (ma, mb) = (mu_a.v[i], mu_b.v[i]);
        let va = aa.v[i] - ma * ma;
        let vb = bb.v[i] - mb * mb;
        let cov = ab.v[i] - ma * mb;
        let cs = (2.0 * cov + C2) / (va + vb + C2);
        let l = (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
        ssim_sum += l * cs;
        cs_sum += cs;
    }
    (ssim_sum / n as f64, cs_sum / n as f64)
}

fn check_pair(a: &Image, b: &Image, min_side: usize) -> Result<()> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    if a.height().min(a.width()) < min_side {
        return Err(Error::arg(format!(
            "{}x{} is smaller than the required {min_side}x{min_side}",
            a.height(),
            a.width()
        )));
    }
    Ok(())
}

/// Structural similarity of the luminance of `a` and `b`.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_pair(a, b, WINDOW)?;
    Ok(ssim_components(&Plane::luminance(a), &Plane::luminance(b)).0)
}

/// Smallest side needed for `scales` levels.
pub fn ms_ssim_min_side(scales: usize) -> usize {
    WINDOW << scales.saturating_sub(1)
}

/// Largest scale count (at most 5) an `h x w` image supports; 0 if none.
pub fn max_ms_ssim_scales(h: usize, w: usize) -> usize {
    (1..=MS_SSIM_WEIGHTS.len())
        .rev()
        .find(|&s| h.min(w) >= ms_ssim_min_side(s))
        .unwrap_or(0)
}

/// Five-scale MS-SSIM.
pub fn ms_ssim(a: &Image, b: &Image) -> Result<f64> {
    ms_ssim_with_scales(a, b, MS_SSIM_WEIGHTS.len())
}

/// MS-SSIM over the first `scales` levels with the standard exponents
/// renormalized to sum 1. The coarsest level contributes the full SSIM, the
/// finer ones the contrast-structure term; negative terms are clamped to 0.
pub fn ms_ssim_with_scales(a: &Image, b: &Image, scales: usize) -> Result<f64> {
    if !(1..=MS_SSIM_WEIGHTS.len()).contains(&scales) {
        return Err(Error::arg(format!("MS-SSIM supports 1..=5 scales, got {scales}")));
    }
    check_pair(a, b, ms_ssim_min_side(scales))?;
    let weights = &MS_SSIM_WEIGHTS[..scales];
    let total: f64 = weights.iter().sum();
    let (mut pa, mut pb) = (Plane::luminance(a), Plane::luminance(b));
    let mut score = 1.0;
    for (level, w) in weights.iter().enumerate() {
        let (s, cs) = ssim_components(&pa, &pb);
        let term = if level + 1 == scales { s } else { cs };
        score *= term.max(0.0).powf(w / total);
        if level + 1 < scales {
            pa = pa.halve();
            pb = pb.halve();
        }
    }
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use rand::Rng;

    fn random(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = rng_from_seed(seed);
        Image::from_fn(h, w, 1, |_, _, _| rng.random::<f32>()).unwrap()
    }

    #[test]
    fn reflexive() {
        let a = random(32, 40, 1);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let big = random(180, 190, 2);
        assert!((ms_ssim(&big, &big).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_pair_is_luminance_only() {
        let a = Image::filled(16, 16, 1, 0.3).unwrap();
        let b = Image::filled(16, 16, 1, 0.7).unwrap();
        let expect = (2.0 * 0.3 * 0.7 + C1) / (0.09 + 0.49 + C1);
        let got = ssim(&a, &b).unwrap();
        assert!((got - expect).abs() < 1e-6, "{got} vs {expect}");
        assert!((got - 0.7241).abs() < 1e-4);
    }

    #[test]
    fn single_scale_is_ssim() {
        let (a, b) = (random(24, 30, 3), random(24, 30, 4));
        assert_eq!(ms_ssim_with_scales(&a, &b, 1).unwrap(), ssim(&a, &b).unwrap());
    }

    #[test]
    fn size_requirements() {
        let (a, b) = (random(10, 30, 5), random(10, 30, 6));
        assert!(ssim(&a, &b).is_err());
        let (a, b) = (random(175, 200, 5), random(175, 200, 6));
        assert!(ms_ssim(&a, &b).is_err());
        assert!(ms_ssim_with_scales(&a, &b, 4).is_ok());
        assert_eq!(max_ms_ssim_scales(175, 200), 4);
        assert_eq!(max_ms_ssim_scales(176, 176), 5);
        assert_eq!(max_ms_ssim_scales(10, 100), 0);
        assert!(ssim(&random(20, 20, 0), &random(20, 21, 0)).is_err());
    }
}
