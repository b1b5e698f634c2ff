//! Raster files: a self-describing raw `f64` format for exact round trips,
//! plus 8-bit PNG and binary PGM.
//!
//! Raw layout, all integers little-endian:
//!
//! | offset | size | field                               |
//! |--------|------|-------------------------------------|
//! | 0      | 8    | magic `RDKRAW1\0`                   |
//! | 8      | 4    | height                              |
//! | 12     | 4    | width                               |
//! | 16     | 4    | channels                            |
//! | 20     | 1    | domain code                         |
//! | 21     | 1    | sample type, `1` = `f64`            |
//! | 22     | 2    | reserved, zero                      |
//! | 24     | -    | `height * width * channels` samples |
//!
//! PNG and PGM store `round(255 * v)`, so values must lie in `[0, 1]` and a
//! round trip is exact to `1/255`. Loaded 8-bit files are composites; an
//! alpha channel is dropped.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};
use ridekit_core::{BinaryMask, Domain, ImageGrid};

use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 8] = b"RDKRAW1\0";
pub const RAW_HEADER_LEN: usize = 24;
const SAMPLE_F64: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    Raw,
    Png,
    Pgm,
}

impl RasterFormat {
    /// Chosen by extension: `.raw`, `.png`, `.pgm`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("raw") => Ok(RasterFormat::Raw),
            Some("png") => Ok(RasterFormat::Png),
            Some("pgm") => Ok(RasterFormat::Pgm),
            _ => Err(Error::Format { path: path.into(), reason: "unknown raster extension (raw, png, pgm)".into() }),
        }
    }
}

pub fn encode_raw(grid: &ImageGrid) -> Vec<u8> {
    let (h, w, c) = grid.shape();
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + 8 * grid.data().len());
    out.extend_from_slice(RAW_MAGIC);
    for dim in [h, w, c] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&[grid.domain().code(), SAMPLE_F64, 0, 0]);
    for v in grid.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8]) -> std::result::Result<ImageGrid, String> {
    if bytes.len() < RAW_HEADER_LEN || &bytes[..8] != RAW_MAGIC {
        return Err("not a raw raster (bad magic)".into());
    }
    let dim = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (h, w, c) = (dim(8), dim(12), dim(16));
    let domain = Domain::from_code(bytes[20]).ok_or_else(|| format!("unknown domain code {}", bytes[20]))?;
    if bytes[21] != SAMPLE_F64 {
        return Err(format!("unsupported sample type {}", bytes[21]));
    }
    let n = h.checked_mul(w).and_then(|n| n.checked_mul(c)).ok_or_else(|| "dimensions overflow".to_string())?;
    let payload = &bytes[RAW_HEADER_LEN..];
    if payload.len() != 8 * n {
        return Err(format!("payload holds {} bytes, header implies {}", payload.len(), 8 * n));
    }
    let data = payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    ImageGrid::new(h, w, c, data, domain).map_err(|e| e.to_string())
}

pub fn load_raster(path: &Path) -> Result<ImageGrid> {
    match RasterFormat::from_path(path)? {
        RasterFormat::Raw => {
            let bytes = fs::read(path).map_err(Error::io(path))?;
            decode_raw(&bytes).map_err(|reason| Error::Format { path: path.into(), reason })
        }
        format => load_8bit(path, format),
    }
}

fn load_8bit(path: &Path, format: RasterFormat) -> Result<ImageGrid> {
    let image_format = if format == RasterFormat::Png { ImageFormat::Png } else { ImageFormat::Pnm };
    let mut reader = ImageReader::open(path).map_err(Error::io(path))?;
    reader.set_format(image_format);
    let img = reader.decode().map_err(|e| Error::Format { path: path.into(), reason: e.to_string() })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, bytes) = match img {
        DynamicImage::ImageLuma8(g) => (1, g.into_raw()),
        DynamicImage::ImageLumaA8(_) => (1, img.to_luma8().into_raw()),
        DynamicImage::ImageRgb8(g) => (3, g.into_raw()),
        DynamicImage::ImageRgba8(_) => (3, img.to_rgb8().into_raw()),
        other => return Err(Error::BitDepth { path: path.into(), found: format!("{:?}", other.color()) }),
    };
    let data = bytes.into_iter().map(|b| f64::from(b) / 255.0).collect();
    Ok(ImageGrid::new(h, w, channels, data, Domain::Composite)?)
}

pub fn save_raster(path: &Path, grid: &ImageGrid) -> Result<()> {
    let format = RasterFormat::from_path(path)?;
    if format == RasterFormat::Raw {
        return fs::write(path, encode_raw(grid)).map_err(Error::io(path));
    }
    let bytes = quantize(grid).map_err(|reason| Error::Format { path: path.into(), reason })?;
    let (h, w, c) = grid.shape();
    let file = fs::File::create(path).map_err(Error::io(path))?;
    let out = BufWriter::new(file);
    let result = match (format, c) {
        (RasterFormat::Png, 1) => {
            image::codecs::png::PngEncoder::new(out).write_image(&bytes, w as u32, h as u32, ExtendedColorType::L8)
        }
        (RasterFormat::Png, 3) => {
            image::codecs::png::PngEncoder::new(out).write_image(&bytes, w as u32, h as u32, ExtendedColorType::Rgb8)
        }
        (RasterFormat::Pgm, 1) => PnmEncoder::new(out)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(&bytes, w as u32, h as u32, ExtendedColorType::L8),
        _ => {
            return Err(Error::Format {
                path: path.into(),
                reason: format!("{c} channels cannot be stored as {format:?}"),
            })
        }
    };
    result.map_err(|e| Error::Format { path: path.into(), reason: e.to_string() })
}

fn quantize(grid: &ImageGrid) -> std::result::Result<Vec<u8>, String> {
    grid.data()
        .iter()
        .map(|&v| {
            if (0.0..=1.0).contains(&v) {
                Ok((v * 255.0).round() as u8)
            } else {
                Err(format!("value {v} outside [0, 1] cannot be stored in 8 bits"))
            }
        })
        .collect()
}

pub fn save_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    save_raster(path, &mask.to_grid())
}

/// Single-channel raster thresholded at one half.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let grid = load_raster(path)?;
    if grid.channels() != 1 {
        return Err(Error::Format { path: path.into(), reason: "masks must be single-channel".into() });
    }
    Ok(BinaryMask::from_threshold(&grid, 0.5)?)
}
