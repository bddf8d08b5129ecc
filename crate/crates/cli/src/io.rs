//! Image files: 8/16-bit PNG and uncompressed multi-page TIFF.
//!
//! Float rasters are stored as TIFF with one `Gray32Float` page per channel.
//! Integer samples are scaled to `[0, 1]` on read.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use pei_core::Image;
use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};

use crate::error::{io_at, CliResult};

fn is_tiff(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("tif" | "tiff")
    )
}

fn is_png(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("png")
    )
}

/// Whether `path` has an extension this module can read.
pub fn is_supported(path: &Path) -> bool {
    is_tiff(path) || is_png(path)
}

/// Reads a PNG or TIFF file into a `C x H x W` image.
pub fn read_image(path: &Path) -> CliResult<Image<f32>> {
    if is_tiff(path) {
        read_tiff(path)
    } else if is_png(path) {
        read_png(path)
    } else {
        Err(io_at(path, "unsupported image format (expected .png or .tif/.tiff)"))
    }
}

/// Writes a float image losslessly as a multi-page TIFF.
pub fn write_tiff(path: &Path, img: &Image<f32>) -> CliResult<()> {
    let file = File::create(path).map_err(|e| io_at(path, e))?;
    let mut enc = TiffEncoder::new(BufWriter::new(file)).map_err(|e| io_at(path, e))?;
    let (c, h, w) = img.dims();
    for k in 0..c {
        enc.write_image::<colortype::Gray32Float>(w as u32, h as u32, img.plane(k))
            .map_err(|e| io_at(path, e))?;
    }
    Ok(())
}

fn samples_to_f32(data: DecodingResult, path: &Path) -> CliResult<Vec<f32>> {
    Ok(match data {
        DecodingResult::U8(v) => v.into_iter().map(|s| s as f32 / 255.0).collect(),
        DecodingResult::U16(v) => v.into_iter().map(|s| s as f32 / 65535.0).collect(),
        DecodingResult::U32(v) => v.into_iter().map(|s| (s as f64 / u32::MAX as f64) as f32).collect(),
        DecodingResult::F32(v) => v,
        DecodingResult::F64(v) => v.into_iter().map(|s| s as f32).collect(),
        _ => return Err(io_at(path, "unsupported TIFF sample format")),
    })
}

fn read_tiff(path: &Path) -> CliResult<Image<f32>> {
    let file = File::open(path).map_err(|e| io_at(path, e))?;
    let mut dec = Decoder::new(BufReader::new(file)).map_err(|e| io_at(path, e))?;
    let mut planes: Vec<Vec<f32>> = Vec::new();
    let mut size: Option<(usize, usize)> = None;
    loop {
        let (w, h) = dec.dimensions().map_err(|e| io_at(path, e))?;
        let (w, h) = (w as usize, h as usize);
        match size {
            None => size = Some((h, w)),
            Some(s) if s != (h, w) => return Err(io_at(path, "TIFF pages differ in size")),
            _ => {}
        }
        let samples = dec.colortype().map_err(|e| io_at(path, e))?.num_samples() as usize;
        let data = samples_to_f32(dec.read_image().map_err(|e| io_at(path, e))?, path)?;
        if data.len() != w * h * samples {
            return Err(io_at(path, "TIFF page has an unexpected sample count"));
        }
        for s in 0..samples {
            planes.push(data.iter().skip(s).step_by(samples).copied().collect());
        }
        if !dec.more_images() {
            break;
        }
        dec.next_image().map_err(|e| io_at(path, e))?;
    }
    let (h, w) = size.unwrap_or((0, 0));
    let c = planes.len();
    Ok(Image::from_vec(c, h, w, planes.concat())?)
}

fn read_png(path: &Path) -> CliResult<Image<f32>> {
    let img = image::open(path).map_err(|e| io_at(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    // alpha is dropped; grey stays single-channel
    let colour = img.color().has_color();
    let c = if colour { 3 } else { 1 };
    let buf = img.into_rgb16();
    let mut out = Image::zeros(c, h, w);
    for (x, y, p) in buf.enumerate_pixels() {
        for k in 0..c {
            out.set(k, y as usize, x as usize, p.0[k] as f32 / 65535.0);
        }
    }
    Ok(out)
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes the first three channels (or the first one for C < 3) as an
/// 8-bit PNG, clamping to `[0, 1]`.
pub fn write_png(path: &Path, img: &Image<f32>) -> CliResult<()> {
    let (c, h, w) = img.dims();
    let result = if c >= 3 {
        let buf: RgbImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            Rgb([0, 1, 2].map(|k| to_u8(img.get(k, y as usize, x as usize))))
        });
        buf.save(path)
    } else {
        let buf: GrayImage =
            ImageBuffer::from_fn(w as u32, h as u32, |x, y| Luma([to_u8(img.get(0, y as usize, x as usize))]));
        buf.save(path)
    };
    result.map_err(|e| io_at(path, e))
}

/// Writes a `1 x H x W` binary mask as an 8-bit PNG (0 or 255).
pub fn write_mask(path: &Path, mask: &Image<f32>) -> CliResult<()> {
    write_png(path, &mask.channel(0))
}

/// Reads a mask written by [`write_mask`]; any non-zero pixel is kept.
pub fn read_mask(path: &Path) -> CliResult<Image<f32>> {
    let img = read_png(path)?;
    Ok(img.channel(0).map(|v| if v > 0.5 { 1.0 } else { 0.0 }))
}
