//! File formats: JSON documents and 16-bit grayscale PNG magnitude images.

use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{invalid, Result, SdrError};
use crate::mri::ComplexImage;

/// Magnitude mapped to white in PNG output unless stated otherwise.
pub const DEFAULT_PNG_FULL_SCALE: f64 = 64.0;

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Reads a JSON or TOML (by `.toml` extension) document; missing fields take
/// their defaults where the type allows it.
pub fn read_config<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml")) {
        toml::from_str(&text).map_err(|e| SdrError::Format(format!("{}: {e}", path.display())))
    } else {
        Ok(serde_json::from_str(&text)?)
    }
}

/// Encodes `|x|` as a 16-bit grayscale PNG; values at or above `full_scale`
/// saturate.
pub fn encode_png_magnitude(x: &ComplexImage, full_scale: f64) -> Result<Vec<u8>> {
    if !(full_scale > 0.0) {
        return Err(invalid("full_scale must be positive"));
    }
    let samples: Vec<u8> = x
        .data()
        .iter()
        .flat_map(|z| {
            let v = (z.norm() / full_scale).clamp(0.0, 1.0);
            ((v * 65535.0).round() as u16).to_be_bytes()
        })
        .collect();
    encode_png_raw(x.width(), x.height(), png::ColorType::Grayscale, png::BitDepth::Sixteen, &samples)
}

/// Encodes raw samples; used for plots and images alike.
pub fn encode_png_raw(
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    samples: &[u8],
) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc.write_header().map_err(|e| SdrError::Format(e.to_string()))?;
        writer.write_image_data(samples).map_err(|e| SdrError::Format(e.to_string()))?;
    }
    Ok(buf)
}

pub fn write_png_magnitude(x: &ComplexImage, path: impl AsRef<Path>, full_scale: f64) -> Result<()> {
    std::fs::write(path, encode_png_magnitude(x, full_scale)?)?;
    Ok(())
}

/// Decodes an 8- or 16-bit grayscale PNG into a real image scaled so that
/// white equals `full_scale`.
pub fn decode_png_magnitude(bytes: &[u8], full_scale: f64) -> Result<ComplexImage> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| SdrError::Format(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| SdrError::Format("PNG too large".into()))?];
    let info = reader.next_frame(&mut buf).map_err(|e| SdrError::Format(e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(SdrError::Format(format!("expected grayscale PNG, got {:?}", info.color_type)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let values: Vec<f64> = match info.bit_depth {
        png::BitDepth::Sixteen => buf[..w * h * 2]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0 * full_scale)
            .collect(),
        png::BitDepth::Eight => buf[..w * h].iter().map(|&b| b as f64 / 255.0 * full_scale).collect(),
        d => return Err(SdrError::Format(format!("unsupported PNG bit depth {d:?}"))),
    };
    ComplexImage::from_real(w, h, &values)
}

pub fn read_png_magnitude(path: impl AsRef<Path>, full_scale: f64) -> Result<ComplexImage> {
    decode_png_magnitude(&std::fs::read(path)?, full_scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn png_round_trip_within_quantization() {
        let data = (0..12 * 7).map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let x = ComplexImage::from_vec(12, 7, data).unwrap();
        let bytes = encode_png_magnitude(&x, 2.0).unwrap();
        let y = decode_png_magnitude(&bytes, 2.0).unwrap();
        assert_eq!((y.width(), y.height()), (12, 7));
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a.norm() - b.re).abs() <= 2.0 / 65535.0);
            assert_eq!(b.im, 0.0);
        }
    }

    #[test]
    fn saturates_above_full_scale() {
        let x = ComplexImage::from_real(2, 2, &[5.0, 0.0, 1.0, 0.5]).unwrap();
        let y = decode_png_magnitude(&encode_png_magnitude(&x, 1.0).unwrap(), 1.0).unwrap();
        assert_eq!(y.data()[0].re, 1.0);
    }

    #[test]
    fn toml_config_with_defaults() {
        #[derive(serde::Deserialize, PartialEq, Debug, Default)]
        #[serde(default)]
        struct Cfg {
            a: u32,
            b: Vec<f64>,
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "b = [4.0, 8.0]\n").unwrap();
        assert_eq!(read_config::<Cfg>(&p).unwrap(), Cfg { a: 0, b: vec![4.0, 8.0] });
        std::fs::write(&p, "b = \"x\"\n").unwrap();
        assert!(matches!(read_config::<Cfg>(&p), Err(SdrError::Format(_))));
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        let x = ComplexImage::from_real(2, 2, &[1.0, 2.0, 3.0, 4.5]).unwrap();
        write_json(&x, &p).unwrap();
        assert_eq!(read_json::<ComplexImage>(&p).unwrap(), x);
    }
}
