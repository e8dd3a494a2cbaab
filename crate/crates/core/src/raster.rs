//! Binary PNM helpers: 16-bit depth PGM, 8-bit label PGM, and RGB PPM.

use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
pub use image::RgbImage;
use image::{DynamicImage, ImageEncoder, ImageFormat};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
    #[error("unexpected pixel format: expected {expected}")]
    Format { expected: &'static str },
}

fn decode_pnm(bytes: &[u8]) -> Result<DynamicImage, RasterError> {
    Ok(image::load_from_memory_with_format(bytes, ImageFormat::Pnm)?)
}

/// Reads a P5 graymap with 16-bit samples.
pub fn read_pgm16(path: impl AsRef<Path>) -> Result<(u32, u32, Vec<u16>), RasterError> {
    match decode_pnm(&std::fs::read(path)?)? {
        DynamicImage::ImageLuma16(img) => Ok((img.width(), img.height(), img.into_raw())),
        DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            Ok((w, h, img.into_raw().into_iter().map(u16::from).collect()))
        }
        _ => Err(RasterError::Format { expected: "16-bit graymap (P5)" }),
    }
}

/// Reads a P5 graymap with 8-bit samples.
pub fn read_pgm8(path: impl AsRef<Path>) -> Result<(u32, u32, Vec<u8>), RasterError> {
    match decode_pnm(&std::fs::read(path)?)? {
        DynamicImage::ImageLuma8(img) => Ok((img.width(), img.height(), img.into_raw())),
        _ => Err(RasterError::Format { expected: "8-bit graymap (P5)" }),
    }
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage, RasterError> {
    Ok(decode_pnm(&std::fs::read(path)?)?.to_rgb8())
}

pub fn write_pgm16(path: impl AsRef<Path>, width: u32, height: u32, data: &[u16]) -> Result<(), RasterError> {
    if data.len() != (width as usize) * (height as usize) {
        return Err(RasterError::Format { expected: "width × height samples" });
    }
    // The codec cannot encode 16-bit graymaps, so the header is written here.
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(data.len() * 2);
    for v in data {
        out.extend_from_slice(&v.to_be_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_pgm8(path: impl AsRef<Path>, width: u32, height: u32, data: &[u8]) -> Result<(), RasterError> {
    if data.len() != (width as usize) * (height as usize) {
        return Err(RasterError::Format { expected: "width × height samples" });
    }
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(data, width, height, image::ExtendedColorType::L8)?;
    std::fs::write(path, out)?;
    Ok(())
}

pub fn encode_ppm(img: &RgbImage) -> Result<Vec<u8>, RasterError> {
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)?;
    Ok(out)
}

pub fn write_ppm(path: impl AsRef<Path>, img: &RgbImage) -> Result<(), RasterError> {
    std::fs::write(path, encode_ppm(img)?)?;
    Ok(())
}

/// PNG bytes, used for data-URL image attachments.
pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, RasterError> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}
