//! The SKIM container for skeleton images, plus PNG export.
//!
//! Layout: the bytes `SKIM`, a `u8` version (1), little-endian `u32`
//! channels, width and height, then `C * W * H` little-endian `f32` values,
//! planar and row-major within each plane.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::render::SkeletonImage;

pub const MAGIC: &[u8; 4] = b"SKIM";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 12;

pub fn encode_skim(img: &SkeletonImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * img.data.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for d in [img.channels, img.width, img.height] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in &img.data {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

/// Decodes a SKIM buffer. The layout id is not stored in the file and is
/// left empty.
pub fn decode_skim(bytes: &[u8]) -> Result<SkeletonImage> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Skim(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Skim("bad magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::Skim(format!("unsupported version {}", bytes[4])));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().unwrap()) as usize;
    let (c, w, h) = (dim(0), dim(1), dim(2));
    let n = c
        .checked_mul(w)
        .and_then(|v| v.checked_mul(h))
        .ok_or_else(|| Error::Skim("dimensions overflow".into()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 4 * n {
        return Err(Error::Skim(format!(
            "{c}x{w}x{h} needs {} data bytes, found {}",
            4 * n,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Ok(SkeletonImage {
        layout: String::new(),
        channels: c,
        width: w,
        height: h,
        data,
    })
}

pub fn write_skim(path: impl AsRef<Path>, img: &SkeletonImage) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_skim(img)).map_err(|e| Error::io(path, e))
}

pub fn read_skim(path: impl AsRef<Path>) -> Result<SkeletonImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_skim(&bytes)
}

/// The image after a SKIM round trip (values rounded to `f32`).
pub fn quantize(img: &SkeletonImage) -> SkeletonImage {
    SkeletonImage {
        data: img.data.iter().map(|v| *v as f32 as f64).collect(),
        ..img.clone()
    }
}

#[inline]
fn to_byte(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

pub fn channel_png(img: &SkeletonImage, channel: usize) -> GrayImage {
    let plane = img.plane(channel);
    GrayImage::from_fn(img.width as u32, img.height as u32, |x, y| {
        Luma([to_byte(plane[y as usize * img.width + x as usize])])
    })
}

const PALETTE: [[f64; 3]; 8] = [
    [1.0, 1.0, 1.0],
    [1.0, 0.2, 0.2],
    [0.2, 0.4, 1.0],
    [1.0, 0.8, 0.1],
    [0.1, 0.9, 0.4],
    [0.9, 0.3, 0.9],
    [0.2, 0.9, 0.9],
    [1.0, 0.5, 0.1],
];

/// False-color preview: each channel tints its pixels with a fixed palette
/// color, channels combined by per-component maximum.
pub fn composite_png(img: &SkeletonImage) -> RgbImage {
    RgbImage::from_fn(img.width as u32, img.height as u32, |x, y| {
        let mut rgb = [0.0f64; 3];
        for c in 0..img.channels {
            let v = img.get(c, y as usize, x as usize);
            let color = PALETTE[c % PALETTE.len()];
            for k in 0..3 {
                rgb[k] = rgb[k].max(v * color[k]);
            }
        }
        Rgb(rgb.map(to_byte))
    })
}

/// Writes `{stem}_c{N}.png` per channel and `{stem}_composite.png` into
/// `dir`; returns the written paths.
pub fn write_pngs(dir: impl AsRef<Path>, stem: &str, img: &SkeletonImage) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for c in 0..img.channels {
        let path = dir.join(format!("{stem}_c{c}.png"));
        channel_png(img, c).save(&path)?;
        written.push(path);
    }
    let path = dir.join(format!("{stem}_composite.png"));
    composite_png(img).save(&path)?;
    written.push(path);
    Ok(written)
}
