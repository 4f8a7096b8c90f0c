//! Planar floating-point raster.
//!
//! Samples live in `[0, 1]` and are stored channel-major (all of channel 0,
//! then channel 1, ...), row-major within a channel. 8-bit values only exist
//! at the codec boundary.

use crate::error::{Error, Result};

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::arg(format!("image dimensions must be positive, got {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::arg(format!("images have 1 or 3 channels, got {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::arg(format!(
                "sample count {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite sample {bad}")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Builds an image by evaluating `f(channel, row, col)` for every sample.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn plane(&self, channel: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[channel * n..(channel + 1) * n]
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, row: usize, col: usize, value: f32) {
        self.data[(channel * self.height + row) * self.width + col] = value;
    }

    /// Sample lookup with coordinates clamped to the image border.
    #[inline]
    pub fn get_clamped(&self, channel: usize, row: isize, col: isize) -> f32 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.get(channel, r, c)
    }

    pub fn clamp01(mut self) -> Self {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    /// Snaps every sample to the nearest 8-bit level, exactly as a PNG
    /// save and reload would.
    pub fn quantize_8bit(mut self) -> Self {
        for v in &mut self.data {
            *v = quantize_u8(*v) as f32 / 255.0;
        }
        self
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub(crate) fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.height, self.width, self.channels, other.height, other.width, other.channels
            )))
        }
    }

    /// Top-left anchored crop.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Image> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::arg(format!(
                "crop {height}x{width} at ({row},{col}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        Image::from_fn(height, width, self.channels, |c, y, x| self.get(c, row + y, col + x))
    }

    /// Luminance in `[0,1]`: `0.299 R + 0.587 G + 0.114 B`. Single-channel
    /// images pass through unchanged.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let n = self.height * self.width;
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        let data = (0..n)
            .map(|i| {
                (LUMA_WEIGHTS[0] * r[i] as f64 + LUMA_WEIGHTS[1] * g[i] as f64 + LUMA_WEIGHTS[2] * b[i] as f64)
                    as f32
            })
            .collect();
        Image {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }
}

/// Free-function form of [`Image::to_gray`].
pub fn to_gray(img: &Image) -> Image {
    img.to_gray()
}

/// Maps a `[0,1]` sample to its nearest 8-bit code.
#[inline]
pub fn quantize_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Image::new(2, 2, 3, vec![0.0; 11]).is_err());
        assert!(Image::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(Image::new(0, 2, 1, vec![]).is_err());
        assert!(Image::new(1, 1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn gray_of_primaries() {
        let white = Image::filled(1, 1, 3, 1.0).unwrap();
        assert!((white.to_gray().get(0, 0, 0) - 1.0).abs() < 1e-7);
        let red = Image::new(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        assert!((red.to_gray().get(0, 0, 0) - 0.299).abs() < 1e-7);
    }

    #[test]
    fn gray_passes_through_single_channel() {
        let img = Image::from_fn(3, 4, 1, |_, y, x| (y * 4 + x) as f32 / 12.0).unwrap();
        assert_eq!(img.to_gray(), img);
    }

    #[test]
    fn gray_matches_weighted_sum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let img = Image::from_fn(9, 7, 3, |_, _, _| rng.random::<f32>()).unwrap();
        let gray = img.to_gray();
        for y in 0..9 {
            for x in 0..7 {
                let expect = 0.299 * img.get(0, y, x) as f64
                    + 0.587 * img.get(1, y, x) as f64
                    + 0.114 * img.get(2, y, x) as f64;
                assert!((gray.get(0, y, x) as f64 - expect).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn clamped_lookup() {
        let img = Image::from_fn(2, 2, 1, |_, y, x| (y * 2 + x) as f32 / 4.0).unwrap();
        assert_eq!(img.get_clamped(0, -5, -5), 0.0);
        assert_eq!(img.get_clamped(0, 9, 9), 0.75);
    }
}
