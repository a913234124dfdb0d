//! Canvas and artwork images as standardized 224 x 224 x 3 tensors.

use std::path::Path;

use image::ImageFormat;
use rand::Rng as _;

use crate::error::{precondition, Error, Result};
use crate::nn::Tensor;
use crate::rng::Rng;
use crate::scalar::Scalar;

pub const IMAGE_SIZE: usize = 224;
pub const CHANNELS: usize = 3;
pub const MIN_SIDE: u32 = 8;
const MEAN: f64 = 0.5;
const STD: f64 = 0.5;

/// Height x width x RGB, values `(pixel - 0.5) / 0.5` for pixels in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor<T> {
    values: Vec<T>,
}

impl<T: Scalar> ImageTensor<T> {
    pub fn from_values(values: Vec<T>) -> Result<Self> {
        if values.len() != IMAGE_SIZE * IMAGE_SIZE * CHANNELS {
            return Err(Error::Shape(format!(
                "image tensor needs {} values, got {}",
                IMAGE_SIZE * IMAGE_SIZE * CHANNELS,
                values.len()
            )));
        }
        Ok(ImageTensor { values })
    }

    /// Build from unit-range RGB pixels laid out height x width x 3.
    pub fn from_unit_rgb(pixels: &[f32], height: usize, width: usize) -> Result<Self> {
        if pixels.len() != height * width * CHANNELS {
            return Err(Error::Shape(format!("{height}x{width} RGB needs {} values", height * width * CHANNELS)));
        }
        let resized = resize_bilinear(pixels, height, width, CHANNELS, IMAGE_SIZE, IMAGE_SIZE);
        let values = resized.into_iter().map(|p| T::cast((p as f64 - MEAN) / STD)).collect();
        Ok(ImageTensor { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn shape(&self) -> [usize; 3] {
        [IMAGE_SIZE, IMAGE_SIZE, CHANNELS]
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.values[(y * IMAGE_SIZE + x) * CHANNELS + c]
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::from_vec(&[IMAGE_SIZE, IMAGE_SIZE, CHANNELS], self.values.clone()).expect("image tensor shape")
    }

    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            bytes.extend_from_slice(&v.as_f32().to_le_bytes());
        }
        crate::hash::digest(&bytes)
    }

    pub fn cast<U: Scalar>(&self) -> ImageTensor<U> {
        ImageTensor { values: self.values.iter().map(|v| U::cast(v.as_f64())).collect() }
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for y in 0..IMAGE_SIZE {
            for x in (0..IMAGE_SIZE).rev() {
                let o = (y * IMAGE_SIZE + x) * CHANNELS;
                values.extend_from_slice(&self.values[o..o + CHANNELS]);
            }
        }
        ImageTensor { values }
    }

    /// Crop a square window (side as a fraction of the image, top-left
    /// corner as a fraction of the free margin) and resize it back.
    pub fn crop_resize(&self, area_fraction: f64, offset: (f64, f64)) -> Self {
        let side = ((IMAGE_SIZE as f64) * area_fraction.clamp(0.0, 1.0).sqrt()).round() as usize;
        let side = side.clamp(1, IMAGE_SIZE);
        if side == IMAGE_SIZE {
            return self.clone();
        }
        let margin = IMAGE_SIZE - side;
        let top = ((margin as f64) * offset.0.clamp(0.0, 1.0)).round() as usize;
        let left = ((margin as f64) * offset.1.clamp(0.0, 1.0)).round() as usize;
        let mut window = Vec::with_capacity(side * side * CHANNELS);
        for y in top..top + side {
            let o = (y * IMAGE_SIZE + left) * CHANNELS;
            window.extend(self.values[o..o + side * CHANNELS].iter().map(|v| v.as_f32()));
        }
        let values = resize_bilinear(&window, side, side, CHANNELS, IMAGE_SIZE, IMAGE_SIZE)
            .into_iter()
            .map(|v| T::cast(v as f64))
            .collect();
        ImageTensor { values }
    }
}

/// Bilinear resampling with half-pixel centers; same-size input is returned unchanged.
pub fn resize_bilinear(src: &[f32], h: usize, w: usize, c: usize, out_h: usize, out_w: usize) -> Vec<f32> {
    if h == out_h && w == out_w {
        return src.to_vec();
    }
    let coords = |o: usize, n_in: usize, n_out: usize| -> (usize, usize, f32) {
        let pos = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, (pos - i0 as f64) as f32)
    };
    let xs: Vec<_> = (0..out_w).map(|x| coords(x, w, out_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for y in 0..out_h {
        let (y0, y1, fy) = coords(y, h, out_h);
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let p = |yy: usize, xx: usize| src[(yy * w + xx) * c + ch];
                let top = p(y0, x0) + (p(y0, x1) - p(y0, x0)) * fx;
                let bot = p(y1, x0) + (p(y1, x1) - p(y1, x0)) * fx;
                out.push(top + (bot - top) * fy);
            }
        }
    }
    out
}

/// Decode a PNG or BMP, resize to 224 x 224 and standardize.
pub fn ingest_image<T: Scalar>(raw: &[u8]) -> Result<ImageTensor<T>> {
    let format = image::guess_format(raw).map_err(|e| Error::Decode(format!("unrecognized image: {e}")))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Bmp) {
        return Err(Error::UnsupportedFormat(format!("{format:?} images (PNG and BMP only)")));
    }
    let img = image::load_from_memory_with_format(raw, format).map_err(|e| Error::Decode(e.to_string()))?;
    if img.width() < MIN_SIDE || img.height() < MIN_SIDE {
        return precondition(format!("image is {}x{}, minimum is {MIN_SIDE}x{MIN_SIDE}", img.width(), img.height()));
    }
    let rgb = img.to_rgb32f();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    ImageTensor::from_unit_rgb(rgb.as_raw(), h, w)
}

pub fn read_image<T: Scalar>(path: impl AsRef<Path>) -> Result<ImageTensor<T>> {
    let path = path.as_ref();
    let raw = std::fs::read(path).map_err(|e| Error::from(e).at(path))?;
    ingest_image(&raw).map_err(|e| e.at(path))
}

/// Augmentation decisions drawn for one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageAugment {
    pub flip: bool,
    pub area_fraction: f64,
    pub offset: (f64, f64),
}

impl ImageAugment {
    pub fn draw(rng: &mut Rng) -> Self {
        ImageAugment {
            flip: rng.gen_bool(0.5),
            area_fraction: rng.gen_range(0.8..=1.0),
            offset: (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)),
        }
    }

    pub fn apply<T: Scalar>(&self, img: &ImageTensor<T>) -> ImageTensor<T> {
        let cropped = img.crop_resize(self.area_fraction, self.offset);
        if self.flip {
            cropped.flip_horizontal()
        } else {
            cropped
        }
    }
}

/// Random horizontal flip (p = 0.5) and square crop keeping 80–100 % of the area.
pub fn augment_image<T: Scalar>(img: &ImageTensor<T>, rng: &mut Rng) -> ImageTensor<T> {
    ImageAugment::draw(rng).apply(img)
}

/// Write unit-range RGB pixels as a PNG.
pub fn write_png(path: impl AsRef<Path>, pixels: &[u8], width: u32, height: u32) -> Result<()> {
    let path = path.as_ref();
    let img = image::RgbImage::from_raw(width, height, pixels.to_vec())
        .ok_or_else(|| Error::Shape(format!("{width}x{height} RGB buffer has {} bytes", pixels.len())))?;
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())).at(path))
}

pub fn encode_png(pixels: &[u8], width: u32, height: u32) -> Result<Vec<u8>> {
    let img = image::RgbImage::from_raw(width, height, pixels.to_vec())
        .ok_or_else(|| Error::Shape(format!("{width}x{height} RGB buffer has {} bytes", pixels.len())))?;
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).map_err(|e| Error::Decode(e.to_string()))?;
    Ok(out.into_inner())
}
