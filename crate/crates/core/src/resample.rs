//! Catmull-Rom bicubic resampling (`a = -0.5`) with edge-clamped taps.

use crate::error::{Error, Result};
use crate::image::Image;

pub const CUBIC_A: f64 = -0.5;

/// Cubic convolution weight for a tap at distance `t`.
pub fn cubic_weight(t: f64) -> f64 {
    let t = t.abs();
    let a = CUBIC_A;
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

/// Four taps per output coordinate: (first source index, weights).
fn axis_taps(in_len: usize, out_len: usize) -> Vec<(isize, [f64; 4])> {
    let ratio = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = (o as f64 + 0.5) * ratio - 0.5;
            let base = src.floor();
            let frac = src - base;
            let mut w = [
                cubic_weight(frac + 1.0),
                cubic_weight(frac),
                cubic_weight(1.0 - frac),
                cubic_weight(2.0 - frac),
            ];
            let sum: f64 = w.iter().sum();
            for v in &mut w {
                *v /= sum;
            }
            (base as isize - 1, w)
        })
        .collect()
}

/// Resizes to an explicit output size.
pub fn resize_to(img: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::arg(format!("output size {out_h}x{out_w} is empty")));
    }
    let (h, w) = (img.height(), img.width());
    let cols = axis_taps(w, out_w);
    let rows = axis_taps(h, out_h);
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut data = Vec::with_capacity(out_h * out_w * img.channels());
    let mut horiz = vec![0f64; h * out_w];
    for c in 0..img.channels() {
        let plane = img.plane(c);
        for y in 0..h {
            let row = &plane[y * w..(y + 1) * w];
            for (x, (start, wts)) in cols.iter().enumerate() {
                let mut s = 0.0;
                for (k, wt) in wts.iter().enumerate() {
                    s += wt * row[clamp(start + k as isize, w)] as f64;
                }
                horiz[y * out_w + x] = s;
            }
        }
        for (start, wts) in &rows {
            for x in 0..out_w {
                let mut s = 0.0;
                for (k, wt) in wts.iter().enumerate() {
                    s += wt * horiz[clamp(start + k as isize, h) * out_w + x];
                }
                data.push(s.clamp(0.0, 1.0) as f32);
            }
        }
    }
    Image::new(out_h, out_w, img.channels(), data)
}

/// Output size for a scale factor: each dimension is `round(dim * scale)`.
pub fn scaled_dims(h: usize, w: usize, scale: f64) -> Result<(usize, usize)> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::arg(format!("scale must be positive, got {scale}")));
    }
    let oh = (h as f64 * scale).round() as usize;
    let ow = (w as f64 * scale).round() as usize;
    if oh == 0 || ow == 0 {
        return Err(Error::arg(format!("scale {scale} maps {h}x{w} to an empty image")));
    }
    Ok((oh, ow))
}

pub fn bicubic_resize(img: &Image, scale: f64) -> Result<Image> {
    let (oh, ow) = scaled_dims(img.height(), img.width(), scale)?;
    resize_to(img, oh, ow)
}
