use std::io::Cursor;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::codecs::png::PngDecoder;
use image::{DynamicImage, ImageFormat};

use super::{ImageBuf, ImageError};

pub const DEFAULT_JPEG_QUALITY: u8 = 95;

/// Decodes PNG (8/16-bit) or baseline JPEG bytes.
///
/// 8-bit samples map to `v / 255`, 16-bit to `v / 65535`; grayscale is
/// replicated into all three channels and alpha is dropped.
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuf, ImageError> {
    let format = image::guess_format(bytes).map_err(|e| ImageError::MalformedFile(e.to_string()))?;
    match format {
        ImageFormat::Png => {
            let decoder = PngDecoder::new(Cursor::new(bytes)).map_err(|e| ImageError::MalformedFile(e.to_string()))?;
            if decoder.is_apng().unwrap_or(false) {
                return Err(ImageError::UnsupportedFormat("animated PNG".into()));
            }
        }
        ImageFormat::Jpeg => {}
        other => return Err(ImageError::UnsupportedFormat(format!("{other:?}"))),
    }
    let dynimg = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| ImageError::MalformedFile(e.to_string()))?;
    Ok(from_dynamic(&dynimg))
}

fn from_dynamic(img: &DynamicImage) -> ImageBuf {
    let (w, h) = (img.width(), img.height());
    let n = w as usize * h as usize;
    let mut data = vec![0.0f32; n * 3];
    let sixteen = matches!(
        img,
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) | DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_)
    );
    if sixteen {
        let rgb = img.to_rgb16();
        for (i, px) in rgb.pixels().enumerate() {
            for c in 0..3 {
                data[c * n + i] = px.0[c] as f32 / 65535.0;
            }
        }
    } else {
        let rgb = img.to_rgb8();
        for (i, px) in rgb.pixels().enumerate() {
            for c in 0..3 {
                data[c * n + i] = px.0[c] as f32 / 255.0;
            }
        }
    }
    ImageBuf { width: w, height: h, data }
}

fn quantize8(img: &ImageBuf) -> image::RgbImage {
    let n = img.pixel_count();
    let mut out = image::RgbImage::new(img.width, img.height);
    for (i, px) in out.pixels_mut().enumerate() {
        for c in 0..3 {
            px.0[c] = (super::clamp01(img.data[c * n + i]) * 255.0).round() as u8;
        }
    }
    out
}

/// Encodes as an 8-bit RGB PNG.
pub fn encode_png(img: &ImageBuf) -> Vec<u8> {
    let mut buf = Vec::new();
    quantize8(img)
        .write_to(&mut Cursor::new(&mut buf), ImageFormat::Png)
        .expect("in-memory PNG encoding cannot fail");
    buf
}

pub fn encode_jpeg(img: &ImageBuf, quality: u8) -> Vec<u8> {
    let mut buf = Vec::new();
    let enc = JpegEncoder::new_with_quality(&mut buf, quality.clamp(1, 100));
    quantize8(img).write_with_encoder(enc).expect("in-memory JPEG encoding cannot fail");
    buf
}

pub fn load_image(path: &Path) -> Result<ImageBuf, ImageError> {
    let bytes = std::fs::read(path).map_err(|source| ImageError::Io { path: path.display().to_string(), source })?;
    decode_image(&bytes)
}

/// Writes PNG or JPEG depending on the file extension (PNG when unknown).
pub fn save_image(img: &ImageBuf, path: &Path) -> Result<(), ImageError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let bytes = match ext.as_str() {
        "jpg" | "jpeg" => encode_jpeg(img, DEFAULT_JPEG_QUALITY),
        _ => encode_png(img),
    };
    std::fs::write(path, bytes).map_err(|source| ImageError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn png_bytes(img: DynamicImage) -> Vec<u8> {
        let mut buf = Vec::new();
        img.write_to(&mut Cursor::new(&mut buf), ImageFormat::Png).unwrap();
        buf
    }

    #[test]
    fn red_png_maps_exactly() {
        let img = image::RgbImage::from_pixel(2, 2, image::Rgb([255, 0, 0]));
        let decoded = decode_image(&png_bytes(DynamicImage::ImageRgb8(img))).unwrap();
        assert_eq!(decoded.dims(), (2, 2));
        for y in 0..2 {
            for x in 0..2 {
                assert_eq!(decoded.pixel(x, y), [1.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn gray_replicates() {
        let img = image::GrayImage::from_pixel(1, 1, image::Luma([128]));
        let decoded = decode_image(&png_bytes(DynamicImage::ImageLuma8(img))).unwrap();
        let expected = 128.0f32 / 255.0;
        assert_eq!(decoded.pixel(0, 0), [expected; 3]);
        assert!((expected - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn sixteen_bit_png() {
        let img = image::ImageBuffer::<image::Rgb<u16>, _>::from_pixel(3, 1, image::Rgb([65535u16, 32768, 0]));
        let decoded = decode_image(&png_bytes(DynamicImage::ImageRgb16(img))).unwrap();
        let px = decoded.pixel(1, 0);
        assert_eq!(px[0], 1.0);
        assert!((px[1] - 32768.0 / 65535.0).abs() < 1e-7);
    }

    #[test]
    fn png_round_trip_is_bit_exact() {
        let img = image::RgbImage::from_fn(13, 7, |x, y| image::Rgb([(x * 19) as u8, (y * 31) as u8, (x * y) as u8]));
        let first = decode_image(&png_bytes(DynamicImage::ImageRgb8(img))).unwrap();
        let second = decode_image(&encode_png(&first)).unwrap();
        assert_eq!(first.samples(), second.samples());
    }

    #[test]
    fn jpeg_decodes() {
        let img = ImageBuf::filled(16, 16, [0.5, 0.25, 0.75]);
        let decoded = decode_image(&encode_jpeg(&img, 95)).unwrap();
        assert_eq!(decoded.dims(), (16, 16));
        assert!((decoded.pixel(8, 8)[0] - 0.5).abs() < 0.02);
    }

    #[test]
    fn garbage_is_malformed() {
        assert!(matches!(decode_image(b"definitely not an image"), Err(ImageError::MalformedFile(_))));
        let mut truncated = encode_png(&ImageBuf::filled(8, 8, [0.1; 3]));
        truncated.truncate(40);
        assert!(decode_image(&truncated).is_err());
    }

    #[test]
    fn other_formats_unsupported() {
        let mut buf = Vec::new();
        DynamicImage::ImageRgb8(image::RgbImage::new(2, 2))
            .write_to(&mut Cursor::new(&mut buf), ImageFormat::Png)
            .unwrap();
        // GIF magic with nothing else
        assert!(matches!(decode_image(b"GIF89a\x01\x00\x01\x00"), Err(ImageError::UnsupportedFormat(_))));
    }
}
