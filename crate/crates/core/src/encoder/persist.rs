//! Binary model format:
//!
//! ```text
//! b"SDRENC" | u32 version | u32 header_len | JSON header | f64 LE parameters
//! ```
//!
//! Parameters are written in the order conv1_w, conv1_b, conv2_w, conv2_b, head.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{EncoderModel, EncoderVariant};
use crate::error::{Result, SdrError};

const MAGIC: &[u8; 6] = b"SDRENC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    channels: usize,
    pool: usize,
    feature_dim: usize,
    variant: EncoderVariant,
    seed: u64,
    input_scale: f64,
    n_params: usize,
}

fn format_err(msg: impl Into<String>) -> SdrError {
    SdrError::Format(msg.into())
}

pub fn write_model<W: Write>(model: &EncoderModel, mut out: W) -> Result<()> {
    model.validate()?;
    let arrays = [&model.conv1_w, &model.conv1_b, &model.conv2_w, &model.conv2_b, &model.head];
    let header = serde_json::to_vec(&Header {
        channels: model.channels,
        pool: model.pool,
        feature_dim: model.feature_dim,
        variant: model.variant,
        seed: model.seed,
        input_scale: model.input_scale,
        n_params: arrays.iter().map(|a| a.len()).sum(),
    })?;
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(header.len() as u32).to_le_bytes())?;
    out.write_all(&header)?;
    for a in arrays {
        for v in a.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_model<R: Read>(mut input: R) -> Result<EncoderModel> {
    let mut magic = [0u8; 6];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(format_err("not an encoder model file"));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported model format version {version}")));
    }
    input.read_exact(&mut word)?;
    let mut header = vec![0u8; u32::from_le_bytes(word) as usize];
    input.read_exact(&mut header)?;
    let h: Header = serde_json::from_slice(&header)?;
    let c = h.channels;
    let sizes = [c * 9, c, c * c * 9, c, h.feature_dim * c * h.pool * h.pool];
    if sizes.iter().sum::<usize>() != h.n_params {
        return Err(format_err("parameter count does not match header dimensions"));
    }
    let mut read_array = |n: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; n * 8];
        input.read_exact(&mut buf)?;
        Ok(buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect())
    };
    let model = EncoderModel {
        channels: c,
        pool: h.pool,
        feature_dim: h.feature_dim,
        conv1_w: read_array(sizes[0])?,
        conv1_b: read_array(sizes[1])?,
        conv2_w: read_array(sizes[2])?,
        conv2_b: read_array(sizes[3])?,
        head: read_array(sizes[4])?,
        variant: h.variant,
        seed: h.seed,
        input_scale: h.input_scale,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &EncoderModel, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_model(model, std::io::BufWriter::new(file))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EncoderModel> {
    read_model(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let m = EncoderModel::new(3, 5, 10, 42, EncoderVariant::Trainable).unwrap();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        assert_eq!(&buf[..6], b"SDRENC");
        assert_eq!(read_model(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn truncated_or_foreign_input_fails() {
        let m = EncoderModel::reference(1);
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        assert!(read_model(&buf[..buf.len() - 3]).is_err());
        assert!(read_model(&b"PNG\x00\x00\x00\x00\x00\x00\x00"[..]).is_err());
        buf[6] = 9;
        assert!(matches!(read_model(buf.as_slice()), Err(SdrError::Format(_))));
    }
}
