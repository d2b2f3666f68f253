//! PNG <-> tensor conversion. Colour frames become `[3, W, H]` in `[0, 1]`;
//! masks become `[W, H]` with values in `{0, 1}`.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn rgb_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * w * h];
    for (x, y, px) in img.enumerate_pixels() {
        let (x, y) = (x as usize, y as usize);
        for c in 0..3 {
            data[c * w * h + x * h + y] = px.0[c] as f64 / 255.0;
        }
    }
    Tensor::from_parts(vec![3, w, h], data)
}

pub fn tensor_to_rgb(t: &Tensor) -> Result<RgbImage> {
    if t.rank() != 3 || t.shape()[0] != 3 {
        return Err(Error::arg(format!("expected [3, W, H], got {:?}", t.shape())));
    }
    let (w, h) = (t.shape()[1], t.shape()[2]);
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgb([0, 1, 2].map(|c| q(t.data()[c * w * h + x * h + y])))
    }))
}

/// Decodes PNG bytes into a colour frame tensor. Any PNG colour type is
/// accepted and converted to 8-bit RGB.
pub fn decode_frame_png(bytes: &[u8]) -> Result<Tensor> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::format("png", "zero-sized image"));
    }
    Ok(rgb_to_tensor(&img.to_rgb8()))
}

pub fn encode_frame_png(t: &Tensor) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    tensor_to_rgb(t)?.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn load_frame(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_frame_png(&bytes)
}

pub fn save_frame(t: &Tensor, path: &Path) -> Result<()> {
    let bytes = encode_frame_png(t)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decodes an 8-bit mask: luma >= 128 is foreground.
pub fn decode_mask_png(bytes: &[u8]) -> Result<Tensor> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::format("png", "zero-sized mask"));
    }
    let mut data = vec![0.0; w * h];
    for (x, y, px) in img.enumerate_pixels() {
        if px.0[0] >= 128 {
            data[x as usize * h + y as usize] = 1.0;
        }
    }
    Ok(Tensor::from_parts(vec![w, h], data))
}

/// Encodes `mask >= 0.5` as an 8-bit 0/255 grayscale PNG.
pub fn encode_mask_png(mask: &Tensor) -> Result<Vec<u8>> {
    if mask.rank() != 2 {
        return Err(Error::arg(format!("expected [W, H] mask, got {:?}", mask.shape())));
    }
    let (w, h) = (mask.shape()[0], mask.shape()[1]);
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([if mask.data()[x as usize * h + y as usize] >= 0.5 { 255 } else { 0 }])
    });
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn load_mask(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mask_png(&bytes)
}

pub fn save_mask(mask: &Tensor, path: &Path) -> Result<()> {
    let bytes = encode_mask_png(mask)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
