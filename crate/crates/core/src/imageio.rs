//! Image files and conversions between 8-bit images and planar tensors.
//!
//! PPM (P6) and PGM (P5) are the exact interchange formats; PNG is accepted
//! and produced as a convenience.

use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, GrayImage, ImageEncoder, ImageFormat, ImageReader, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn decode(bytes: &[u8]) -> Result<DynamicImage> {
    Ok(ImageReader::new(Cursor::new(bytes)).with_guessed_format()?.decode()?)
}

pub fn load(path: impl AsRef<Path>) -> Result<DynamicImage> {
    Ok(ImageReader::open(path)?.with_guessed_format()?.decode()?)
}

pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    Ok(load(path)?.to_rgb8())
}

pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    Ok(load(path)?.to_luma8())
}

pub fn encode_ppm(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)?;
    Ok(out)
}

pub fn encode_pgm(img: &GrayImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::L8)?;
    Ok(out)
}

pub fn encode_png(img: &DynamicImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)?;
    Ok(out)
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Writes PNG for a `.png` extension, binary PPM otherwise.
pub fn save_rgb(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if is_png(path) {
        encode_png(&DynamicImage::ImageRgb8(img.clone()))?
    } else {
        encode_ppm(img)?
    };
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Writes PNG for a `.png` extension, binary PGM otherwise.
pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if is_png(path) {
        encode_png(&DynamicImage::ImageLuma8(img.clone()))?
    } else {
        encode_pgm(img)?
    };
    std::fs::write(path, bytes)?;
    Ok(())
}

/// `[1, 3, H, W]` with values `v / 255`.
pub fn rgb_to_tensor<T: Scalar>(img: &RgbImage) -> Tensor<T> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    Tensor::from_fn(&[1, 3, h, w], |i| {
        let (c, p) = (i / (h * w), i % (h * w));
        T::lit(raw[p * 3 + c] as f64 / 255.0)
    })
}

/// `[1, 1, H, W]` with values `v / 255`.
pub fn gray_to_tensor<T: Scalar>(img: &GrayImage) -> Tensor<T> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    Tensor::from_fn(&[1, 1, h, w], |i| T::lit(raw[i] as f64 / 255.0))
}

fn quantize<T: Scalar>(v: T) -> u8 {
    let v = v.as_f64();
    if v.is_nan() {
        0
    } else {
        (v.clamp(0.0, 1.0) * 255.0).round() as u8
    }
}

/// Inverse of [`rgb_to_tensor`], clamping to `[0, 1]` and rounding.
pub fn tensor_to_rgb<T: Scalar>(t: &Tensor<T>) -> Result<RgbImage> {
    let (b, c, h, w) = t.dims4()?;
    if b != 1 || c != 3 {
        return Err(Error::dim(format!(
            "expected [1,3,H,W] image tensor, got {:?}",
            t.shape()
        )));
    }
    let d = t.data();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let p = y as usize * w + x as usize;
        Rgb([quantize(d[p]), quantize(d[h * w + p]), quantize(d[2 * h * w + p])])
    }))
}

pub fn tensor_to_gray<T: Scalar>(t: &Tensor<T>) -> Result<GrayImage> {
    let (b, c, h, w) = t.dims4()?;
    if b != 1 || c != 1 {
        return Err(Error::dim(format!("expected [1,1,H,W] tensor, got {:?}", t.shape())));
    }
    let d = t.data();
    Ok(GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([quantize(d[y as usize * w + x as usize])])
    }))
}
