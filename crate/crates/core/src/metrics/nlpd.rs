//! Normalized Laplacian pyramid distance.
//!
//! Both images are decomposed into a Laplacian pyramid on luminance. Each
//! band is divided by a per-level constant plus the 5x5 local mean of its
//! absolute values, and the distance is the mean over levels of the RMS
//! difference between normalized bands.

use super::ssim::Plane;
use crate::error::{Error, Result};
use crate::image::Image;

pub const MAX_LEVELS: usize = 6;

/// Per-level additive constants of the divisive normalization, for
/// luminance in `[0,1]`.
pub const LEVEL_CONSTANTS: [f64; MAX_LEVELS] = [0.0248, 0.0185, 0.0179, 0.0191, 0.0220, 0.2782];

const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
const LOCAL_MEAN: usize = 5;

/// Levels used for an `h x w` image: halve until a side would drop below 2,
/// at most [`MAX_LEVELS`].
pub fn level_count(h: usize, w: usize) -> usize {
    let (mut ch, mut cw, mut levels) = (h, w, 1);
    while levels < MAX_LEVELS && ch.min(cw) >= 2 {
        ch = ch.div_ceil(2);
        cw = cw.div_ceil(2);
        levels += 1;
    }
    levels
}

fn filter_same(p: &Plane, taps: &[f64]) -> Plane {
    let r = (taps.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut horiz = vec![0.0; p.h * p.w];
    for y in 0..p.h {
        for x in 0..p.w {
            horiz[y * p.w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * p.v[y * p.w + clamp(x as isize + k as isize - r, p.w)])
                .sum();
        }
    }
    let mut v = vec![0.0; p.h * p.w];
    for y in 0..p.h {
        for x in 0..p.w {
            v[y * p.w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * horiz[clamp(y as isize + k as isize - r, p.h) * p.w + x])
                .sum();
        }
    }
    Plane { h: p.h, w: p.w, v }
}

fn reduce(p: &Plane) -> Plane {
    let blurred = filter_same(p, &BINOMIAL);
    let (h, w) = (p.h.div_ceil(2), p.w.div_ceil(2));
    let mut v = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            v.push(blurred.v[2 * y * p.w + 2 * x]);
        }
    }
    Plane { h, w, v }
}

/// Zero-insertion upsampling to `h x w` followed by 4x the binomial blur.
fn expand(p: &Plane, h: usize, w: usize) -> Plane {
    let mut v = vec![0.0; h * w];
    for y in (0..h).step_by(2) {
        for x in (0..w).step_by(2) {
            v[y * w + x] = p.v[(y / 2) * p.w + x / 2];
        }
    }
    let mut out = filter_same(&Plane { h, w, v }, &BINOMIAL);
    for s in &mut out.v {
        *s *= 4.0;
    }
    out
}

fn laplacian_pyramid(img: &Plane, levels: usize) -> Vec<Plane> {
    let mut bands = Vec::with_capacity(levels);
    let mut g = img.clone();
    for _ in 0..levels - 1 {
        let low = reduce(&g);
        let up = expand(&low, g.h, g.w);
        bands.push(Plane {
            h: g.h,
            w: g.w,
            v: g.v.iter().zip(&up.v).map(|(a, b)| a - b).collect(),
        });
        g = low;
    }
    bands.push(g);
    bands
}

fn normalize(band: &Plane, constant: f64) -> Plane {
    let abs = Plane {
        h: band.h,
        w: band.w,
        v: band.v.iter().map(|v| v.abs()).collect(),
    };
    let box_taps = [1.0 / LOCAL_MEAN as f64; LOCAL_MEAN];
    let local = filter_same(&abs, &box_taps);
    Plane {
        h: band.h,
        w: band.w,
        v: band.v.iter().zip(&local.v).map(|(b, m)| b / (constant + m)).collect(),
    }
}

pub fn nlpd(a: &Image, b: &Image) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let levels = level_count(a.height(), a.width());
    let pa = laplacian_pyramid(&Plane::luminance(a), levels);
    let pb = laplacian_pyramid(&Plane::luminance(b), levels);
    let mut total = 0.0;
    for (level, (ba, bb)) in pa.iter().zip(&pb).enumerate() {
        let na = normalize(ba, LEVEL_CONSTANTS[level]);
        let nb = normalize(bb, LEVEL_CONSTANTS[level]);
        let mse = na.v.iter().zip(&nb.v).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / na.v.len() as f64;
        total += mse.sqrt();
    }
    Ok(total / levels as f64)
}
