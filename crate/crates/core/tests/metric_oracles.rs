mod common;

use common::oracles;
use degradekit::metrics::{self, ConvExtractor, FeatureExtractor, IdentityExtractor};
use degradekit::seed::rng_from_seed;
use degradekit::Image;
use rand::Rng;

fn random(h: usize, w: usize, ch: usize, seed: u64) -> Image {
    let mut rng = rng_from_seed(seed);
    Image::from_fn(h, w, ch, |_, _, _| rng.random::<f32>()).unwrap()
}

/// A correlated pair: `b` is `a` plus moderate noise, so structure terms are
/// far from zero.
fn related(h: usize, w: usize, ch: usize, seed: u64) -> (Image, Image) {
    let a = random(h, w, ch, seed);
    let mut rng = rng_from_seed(seed ^ 0xabcd);
    let b = Image::from_fn(h, w, ch, |c, y, x| (a.get(c, y, x) + 0.2 * (rng.random::<f32>() - 0.5)).clamp(0.0, 1.0))
        .unwrap();
    (a, b)
}

#[test]
fn psnr_matches_scalar_loop() {
    let (a, b) = related(17, 23, 3, 1);
    let got = metrics::psnr(&a, &b).unwrap();
    assert!((got - oracles::psnr(&a, &b)).abs() < 1e-9);
}

#[test]
fn ssim_matches_direct_windows() {
    for seed in 0..3 {
        let (a, b) = related(32, 32, 3, seed);
        let got = metrics::ssim(&a, &b).unwrap();
        let want = oracles::ssim(&a, &b);
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn ms_ssim_matches_direct_definition_at_256() {
    let (a, b) = related(256, 256, 1, 9);
    let got = metrics::ms_ssim(&a, &b).unwrap();
    let want = oracles::ms_ssim(&a, &b, 5);
    assert!((got - want).abs() < 1e-5, "{got} vs {want}");
}

#[test]
fn ms_ssim_with_fewer_scales_matches_oracle() {
    let (a, b) = related(50, 61, 3, 4);
    for scales in 1..=3 {
        let got = metrics::ms_ssim_with_scales(&a, &b, scales).unwrap();
        assert!((got - oracles::ms_ssim(&a, &b, scales)).abs() < 1e-6);
    }
}

#[test]
fn nlpd_matches_direct_pyramid() {
    for (h, w, seed) in [(40, 40, 1), (33, 57, 2), (70, 20, 3)] {
        let (a, b) = related(h, w, 3, seed);
        let got = metrics::nlpd(&a, &b).unwrap();
        let want = oracles::nlpd(&a, &b);
        assert!((got - want).abs() < 1e-6, "{h}x{w}: {got} vs {want}");
    }
}

#[test]
fn lpips_identity_extractor_matches_scalar_oracle() {
    let (a, b) = related(9, 13, 3, 5);
    let got = metrics::lpips(&a, &b, &IdentityExtractor::new(3)).unwrap();
    assert!((got - oracles::lpips_identity(&a, &b)).abs() < 1e-7);
}

#[test]
fn lpips_conv_extractor_matches_direct_convolution() {
    let fx = ConvExtractor::default_for(3);
    let (a, b) = related(20, 24, 3, 6);
    let mut sa = oracles::image_stack(&a);
    let mut sb = oracles::image_stack(&b);
    let mut want = 0.0;
    for (i, layer) in fx.layers.iter().enumerate() {
        sa = oracles::conv_layer(&sa, layer.pool, layer.out_channels, layer.kernel_size, &layer.weights, &layer.bias);
        sb = oracles::conv_layer(&sb, layer.pool, layer.out_channels, layer.kernel_size, &layer.weights, &layer.bias);
        want += oracles::lpips_layer(&sa, &sb, fx.layer_weights(i));
    }
    want /= fx.layer_count() as f64;
    let got = metrics::lpips(&a, &b, &fx).unwrap();
    assert!((got - want).abs() < 1e-7, "{got} vs {want}");
}

#[test]
fn reflexive_and_symmetric() {
    let fx = ConvExtractor::default_for(3);
    let (a, b) = related(48, 48, 3, 7);
    assert_eq!(metrics::psnr(&a, &a).unwrap(), f64::INFINITY);
    assert_eq!(metrics::ssim(&a, &a).unwrap(), 1.0);
    assert_eq!(metrics::ms_ssim_with_scales(&a, &a, 3).unwrap(), 1.0);
    assert_eq!(metrics::nlpd(&a, &a).unwrap(), 0.0);
    assert_eq!(metrics::lpips(&a, &a, &fx).unwrap(), 0.0);
    assert_eq!(metrics::psnr(&a, &b).unwrap(), metrics::psnr(&b, &a).unwrap());
    assert_eq!(metrics::ssim(&a, &b).unwrap(), metrics::ssim(&b, &a).unwrap());
    assert_eq!(
        metrics::ms_ssim_with_scales(&a, &b, 3).unwrap(),
        metrics::ms_ssim_with_scales(&b, &a, 3).unwrap()
    );
    assert_eq!(metrics::nlpd(&a, &b).unwrap(), metrics::nlpd(&b, &a).unwrap());
    assert_eq!(metrics::lpips(&a, &b, &fx).unwrap(), metrics::lpips(&b, &a, &fx).unwrap());
}
