//! PNG / JPEG codec boundary.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::image::{quantize_u8, Image};
use crate::jpeg;

/// Reads a PNG or JPEG file. 8-bit samples map to `v / 255`; alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fsutil::read(path)?;
    decode_bytes(&bytes).map_err(|reason| Error::Decode {
        path: path.to_path_buf(),
        reason,
    })
}

/// Decodes an in-memory PNG or JPEG stream.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    decode_bytes(bytes).map_err(|reason| Error::Decode {
        path: "<memory>".into(),
        reason,
    })
}

fn decode_bytes(bytes: &[u8]) -> std::result::Result<Image, String> {
    let format = image::guess_format(bytes).map_err(|e| e.to_string())?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(format!("unsupported format {format:?}"));
    }
    let decoded = image::load_from_memory_with_format(bytes, format).map_err(|e| e.to_string())?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, raw): (usize, Vec<u8>) = match decoded {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
        DynamicImage::ImageLumaA8(_) => (1, decoded.to_luma8().into_raw()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw()),
        DynamicImage::ImageRgba8(_) => (3, decoded.to_rgb8().into_raw()),
        other => return Err(format!("unsupported color type {:?}", other.color())),
    };
    let mut data = vec![0f32; h * w * channels];
    let plane = h * w;
    for (i, px) in raw.chunks_exact(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            data[c * plane + i] = v as f32 / 255.0;
        }
    }
    Image::new(h, w, channels, data).map_err(|e| e.to_string())
}

/// Interleaved 8-bit samples of `img`.
pub fn to_interleaved_u8(img: &Image) -> Vec<u8> {
    let (n, ch) = (img.height() * img.width(), img.channels());
    let mut out = vec![0u8; n * ch];
    for c in 0..ch {
        for (i, &v) in img.plane(c).iter().enumerate() {
            out[i * ch + c] = quantize_u8(v);
        }
    }
    out
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let raw = to_interleaved_u8(img);
    let dynimg = if img.channels() == 1 {
        DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, raw).expect("buffer sized above"))
    } else {
        DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, raw).expect("buffer sized above"))
    };
    let mut out = Cursor::new(Vec::new());
    dynimg
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

/// Writes `img` as an 8-bit PNG, atomically.
pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    fsutil::atomic_write(path.as_ref(), &encode_png(img)?)
}

/// Baseline JPEG, 4:2:0 for color input. See [`crate::jpeg`].
pub fn encode_jpeg(img: &Image, quality: u8) -> Result<Vec<u8>> {
    jpeg::encode(img, quality)
}

/// Compresses and decompresses `img`, returning the image with JPEG artifacts.
pub fn jpeg_roundtrip(img: &Image, quality: u8) -> Result<Image> {
    let bytes = encode_jpeg(img, quality)?;
    let out = decode_image(&bytes)?;
    debug_assert!(out.same_shape(img));
    Ok(out)
}
