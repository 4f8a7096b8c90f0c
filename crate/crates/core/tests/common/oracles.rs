//! Direct-definition scalar reference implementations used to cross-check
//! the library. They favor obviousness over speed: explicit 2-D windows, no
//! separable filters, no shared helpers with the code under test.
#![allow(dead_code)]

use degradekit::Image;

pub type Grid = Vec<Vec<f64>>;

/// BT.601 luminance, stored at f32 precision like every image sample.
pub fn luma(img: &Image) -> Grid {
    (0..img.height())
        .map(|y| {
            (0..img.width())
                .map(|x| {
                    if img.channels() == 1 {
                        img.get(0, y, x) as f64
                    } else {
                        let v = 0.299 * img.get(0, y, x) as f64
                            + 0.587 * img.get(1, y, x) as f64
                            + 0.114 * img.get(2, y, x) as f64;
                        v as f32 as f64
                    }
                })
                .collect()
        })
        .collect()
}

pub fn psnr(a: &Image, b: &Image) -> f64 {
    let mut sse = 0.0;
    let mut n = 0usize;
    for c in 0..a.channels() {
        for y in 0..a.height() {
            for x in 0..a.width() {
                let d = a.get(c, y, x) as f64 - b.get(c, y, x) as f64;
                sse += d * d;
                n += 1;
            }
        }
    }
    if sse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / (sse / n as f64)).log10()
    }
}

fn gaussian_window() -> Grid {
    let mut w = vec![vec![0.0; 11]; 11];
    let mut total = 0.0;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    for row in &mut w {
        for v in row {
            *v /= total;
        }
    }
    w
}

/// Mean SSIM and mean contrast-structure over all fully contained windows.
pub fn ssim_parts(a: &Grid, b: &Grid) -> (f64, f64) {
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let win = gaussian_window();
    let (h, w) = (a.len(), a[0].len());
    let (mut s_sum, mut cs_sum, mut n) = (0.0, 0.0, 0usize);
    for y in 0..=h - 11 {
        for x in 0..=w - 11 {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let g = win[i][j];
                    let (va, vb) = (a[y + i][x + j], b[y + i][x + j]);
                    ma += g * va;
                    mb += g * vb;
                    saa += g * va * va;
                    sbb += g * vb * vb;
                    sab += g * va * vb;
                }
            }
            let var_a = saa - ma * ma;
            let var_b = sbb - mb * mb;
            let cov = sab - ma * mb;
            let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            let cs = (2.0 * cov + c2) / (var_a + var_b + c2);
            s_sum += l * cs;
            cs_sum += cs;
            n += 1;
        }
    }
    (s_sum / n as f64, cs_sum / n as f64)
}

pub fn ssim(a: &Image, b: &Image) -> f64 {
    ssim_parts(&luma(a), &luma(b)).0
}

/// Halves a grid by averaging 2x2 blocks; odd edges repeat the last row or
/// column.
pub fn halve(g: &Grid) -> Grid {
    let (h, w) = (g.len(), g[0].len());
    let at = |y: usize, x: usize| g[y.min(h - 1)][x.min(w - 1)];
    (0..h.div_ceil(2))
        .map(|y| {
            (0..w.div_ceil(2))
                .map(|x| (at(2 * y, 2 * x) + at(2 * y, 2 * x + 1) + at(2 * y + 1, 2 * x) + at(2 * y + 1, 2 * x + 1)) / 4.0)
                .collect()
        })
        .collect()
}

pub fn ms_ssim(a: &Image, b: &Image, scales: usize) -> f64 {
    let weights = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
    let total: f64 = weights[..scales].iter().sum();
    let (mut ga, mut gb) = (luma(a), luma(b));
    let mut result = 1.0;
    for s in 0..scales {
        let (full, cs) = ssim_parts(&ga, &gb);
        let term = if s == scales - 1 { full } else { cs };
        result *= term.max(0.0).powf(weights[s] / total);
        ga = halve(&ga);
        gb = halve(&gb);
    }
    result
}

fn filter2d(g: &Grid, k: &Grid) -> Grid {
    let (h, w) = (g.len() as isize, g[0].len() as isize);
    let r = (k.len() / 2) as isize;
    (0..h)
        .map(|y| {
            (0..w)
                .map(|x| {
                    let mut s = 0.0;
                    for (i, krow) in k.iter().enumerate() {
                        for (j, kv) in krow.iter().enumerate() {
                            let yy = (y + i as isize - r).clamp(0, h - 1) as usize;
                            let xx = (x + j as isize - r).clamp(0, w - 1) as usize;
                            s += kv * g[yy][xx];
                        }
                    }
                    s
                })
                .collect()
        })
        .collect()
}

fn binomial2d() -> Grid {
    let t = [1.0, 4.0, 6.0, 4.0, 1.0];
    t.iter().map(|a| t.iter().map(|b| a * b / 256.0).collect()).collect()
}

pub fn nlpd(a: &Image, b: &Image) -> f64 {
    let consts = [0.0248, 0.0185, 0.0179, 0.0191, 0.0220, 0.2782];
    let (h, w) = (a.height(), a.width());
    let mut levels = 1;
    let (mut ch, mut cw) = (h, w);
    while levels < 6 && ch.min(cw) >= 2 {
        ch = ch.div_ceil(2);
        cw = cw.div_ceil(2);
        levels += 1;
    }
    let pyramid = |img: &Image| {
        let k = binomial2d();
        let mut g = luma(img);
        let mut bands = Vec::new();
        for _ in 0..levels - 1 {
            let blurred = filter2d(&g, &k);
            let (gh, gw) = (g.len(), g[0].len());
            let low: Grid = (0..gh.div_ceil(2))
                .map(|y| (0..gw.div_ceil(2)).map(|x| blurred[2 * y][2 * x]).collect())
                .collect();
            let mut up = vec![vec![0.0; gw]; gh];
            for y in (0..gh).step_by(2) {
                for x in (0..gw).step_by(2) {
                    up[y][x] = low[y / 2][x / 2];
                }
            }
            let up = filter2d(&up, &k);
            bands.push(
                (0..gh)
                    .map(|y| (0..gw).map(|x| g[y][x] - 4.0 * up[y][x]).collect::<Vec<_>>())
                    .collect::<Grid>(),
            );
            g = low;
        }
        bands.push(g);
        bands
    };
    let box5: Grid = vec![vec![1.0 / 25.0; 5]; 5];
    let normalize = |band: &Grid, c: f64| -> Grid {
        let abs: Grid = band.iter().map(|r| r.iter().map(|v| v.abs()).collect()).collect();
        let local = filter2d(&abs, &box5);
        band.iter()
            .zip(&local)
            .map(|(r, l)| r.iter().zip(l).map(|(v, m)| v / (c + m)).collect())
            .collect()
    };
    let (pa, pb) = (pyramid(a), pyramid(b));
    let mut total = 0.0;
    for (lvl, (ba, bb)) in pa.iter().zip(&pb).enumerate() {
        let (na, nb) = (normalize(ba, consts[lvl]), normalize(bb, consts[lvl]));
        let mut sq = 0.0;
        let mut n = 0usize;
        for (ra, rb) in na.iter().zip(&nb) {
            for (x, y) in ra.iter().zip(rb) {
                sq += (x - y) * (x - y);
                n += 1;
            }
        }
        total += (sq / n as f64).sqrt();
    }
    total / levels as f64
}

/// Feature stack `[channel][row][col]`.
pub type Stack = Vec<Grid>;

pub fn image_stack(img: &Image) -> Stack {
    (0..img.channels())
        .map(|c| {
            (0..img.height())
                .map(|y| (0..img.width()).map(|x| img.get(c, y, x) as f64).collect())
                .collect()
        })
        .collect()
}

/// Mean over positions of the tau-weighted squared difference between
/// channel-normalized feature vectors.
pub fn lpips_layer(fa: &Stack, fb: &Stack, tau: &[f64]) -> f64 {
    let (h, w) = (fa[0].len(), fa[0][0].len());
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let na = fa.iter().map(|c| c[y][x] * c[y][x]).sum::<f64>().sqrt() + 1e-10;
            let nb = fb.iter().map(|c| c[y][x] * c[y][x]).sum::<f64>().sqrt() + 1e-10;
            for (ch, t) in tau.iter().enumerate() {
                let d = fa[ch][y][x] / na - fb[ch][y][x] / nb;
                total += t * d * d;
            }
        }
    }
    total / (h * w) as f64
}

pub fn lpips_identity(a: &Image, b: &Image) -> f64 {
    lpips_layer(&image_stack(a), &image_stack(b), &vec![1.0; a.channels()])
}

/// One conv layer: optional 2x2 mean pooling, edge-clamped cross-correlation,
/// bias, ReLU. Weights are `[out][in][ky][kx]` flattened.
pub fn conv_layer(x: &Stack, pool: bool, out_ch: usize, k: usize, weights: &[f64], bias: &[f64]) -> Stack {
    let x: Stack = if pool {
        x.iter()
            .map(|g| {
                (0..g.len() / 2)
                    .map(|y| {
                        (0..g[0].len() / 2)
                            .map(|xx| (g[2 * y][2 * xx] + g[2 * y][2 * xx + 1] + g[2 * y + 1][2 * xx] + g[2 * y + 1][2 * xx + 1]) / 4.0)
                            .collect()
                    })
                    .collect()
            })
            .collect()
    } else {
        x.clone()
    };
    let in_ch = x.len();
    let (h, w) = (x[0].len() as isize, x[0][0].len() as isize);
    let r = (k / 2) as isize;
    (0..out_ch)
        .map(|o| {
            (0..h)
                .map(|y| {
                    (0..w)
                        .map(|xx| {
                            let mut s = bias[o];
                            for (i, plane) in x.iter().enumerate() {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let sy = (y + ky as isize - r).clamp(0, h - 1) as usize;
                                        let sx = (xx + kx as isize - r).clamp(0, w - 1) as usize;
                                        s += weights[((o * in_ch + i) * k + ky) * k + kx] * plane[sy][sx];
                                    }
                                }
                            }
                            s.max(0.0)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Window re-check of the homogeneity test on 8-bit luminance samples
/// (row-major `p x p`).
pub fn is_smooth(window: &[f64], p: usize, q: usize, mu: f64, gamma: f64, phi: f64) -> bool {
    let stats = |vals: &[f64]| {
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        (m, vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
    };
    let (mp, vp) = stats(window);
    if vp < phi {
        return false;
    }
    for by in 0..p / q {
        for bx in 0..p / q {
            let mut sub = Vec::new();
            for y in 0..q {
                for x in 0..q {
                    sub.push(window[(by * q + y) * p + bx * q + x]);
                }
            }
            let (mq, vq) = stats(&sub);
            if (mq - mp).abs() > mu * mp || (vq - vp).abs() > gamma * vp {
                return false;
            }
        }
    }
    true
}
