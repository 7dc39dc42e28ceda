//! Purpose-built model file format.
//!
//! Layout (little-endian throughout):
//! magic `BINSIGHT` (8 bytes) | format version u32 | config block
//! (height, width, channels, classes, kernel, three conv widths, dense
//! width, seed; each u32) | per-tensor records (rank u32, dims u32 x rank,
//! payload of f32 values) | trailing CRC-32 over everything before it.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Layer, Model, ModelConfig};
use crate::nn::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"BINSIGHT";
pub const FORMAT_VERSION: u32 = 1;

pub fn save_model(model: &Model<f32>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, FORMAT_VERSION);

    let c = &model.config;
    for v in [
        c.input_side,
        c.input_side,
        c.channels,
        c.num_classes,
        c.kernel_size,
        c.conv_channels[0],
        c.conv_channels[1],
        c.conv_channels[2],
        c.dense_width,
        c.seed as usize,
    ] {
        put_u32(&mut buf, v as u32);
    }

    for tensor in model.params() {
        put_u32(&mut buf, tensor.shape().len() as u32);
        for &d in tensor.shape() {
            put_u32(&mut buf, d as u32);
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    let crc = crc32fast::hash(&buf);
    put_u32(&mut buf, crc);
    fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model<f32>> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    if buf.len() < MAGIC.len() + 4 {
        return Err(Error::Truncated);
    }
    if &buf[..8] != MAGIC {
        return Err(Error::BadMagic);
    }
    let (body, tail) = buf.split_at(buf.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }

    let mut cur = Cursor {
        buf: body,
        pos: 8,
    };
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }

    let height = cur.u32()? as usize;
    let width = cur.u32()? as usize;
    if height != width {
        return Err(Error::Config(format!(
            "non-square input {height}x{width} in model file"
        )));
    }
    let config = ModelConfig {
        input_side: height,
        channels: cur.u32()? as usize,
        num_classes: cur.u32()? as usize,
        kernel_size: cur.u32()? as usize,
        conv_channels: [
            cur.u32()? as usize,
            cur.u32()? as usize,
            cur.u32()? as usize,
        ],
        dense_width: cur.u32()? as usize,
        seed: cur.u32()?,
    };
    config.validate()?;

    // Rebuild the stack with the stored tensors in params() order.
    let template: Model<f32> = crate::model::build_model(&config)?;
    let mut layers: Vec<Layer<f32>> = template.layers().to_vec();
    for layer in &mut layers {
        match layer {
            Layer::Conv2d { weights, bias, .. } | Layer::Dense { weights, bias, .. } => {
                *weights = cur.tensor(weights.shape())?;
                *bias = cur.tensor(bias.shape())?;
            }
            _ => {}
        }
    }
    if cur.pos != body.len() {
        return Err(Error::Truncated);
    }
    Ok(Model::from_parts(config, layers))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        if end > self.buf.len() {
            return Err(Error::Truncated);
        }
        let v = u32::from_le_bytes(self.buf[self.pos..end].try_into().unwrap());
        self.pos = end;
        Ok(v)
    }

    fn tensor(&mut self, expect_shape: &[usize]) -> Result<Tensor<f32>> {
        let rank = self.u32()? as usize;
        if rank != expect_shape.len() {
            return Err(Error::Config(format!(
                "tensor rank {rank} in file, expected {}",
                expect_shape.len()
            )));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32()? as usize);
        }
        if shape != expect_shape {
            return Err(Error::Shape(format!(
                "tensor shape {shape:?} in file, expected {expect_shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        let end = self.pos + n * 4;
        if end > self.buf.len() {
            return Err(Error::Truncated);
        }
        let data = self.buf[self.pos..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        self.pos = end;
        Tensor::from_vec(&shape, data)
    }
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_model;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn small_config() -> ModelConfig {
        ModelConfig {
            input_side: 8,
            seed: 42,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bsm");
        let model = build_model::<f32>(&small_config()).unwrap();
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.config, model.config);
        for (a, b) in model.params().iter().zip(loaded.params()) {
            assert_eq!(a.shape(), b.shape());
            let ab: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
    }

    #[test]
    fn roundtrip_predictions_agree_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bsm");
        let model = build_model::<f32>(&small_config()).unwrap();
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..20 {
            let data: Vec<f32> = (0..8 * 8).map(|_| rng.gen_range(0.0..1.0)).collect();
            let input = Tensor::from_vec(&[8, 8, 1], data).unwrap();
            let a = model.predict(&input).unwrap();
            let b = loaded.predict(&input).unwrap();
            assert_eq!(
                a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn single_byte_corruption_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bsm");
        let model = build_model::<f32>(&small_config()).unwrap();
        save_model(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x01;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(Error::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bsm");
        std::fs::write(&path, b"NOTMODEL____________").unwrap();
        assert!(matches!(load_model(&path), Err(Error::BadMagic)));
    }

    #[test]
    fn unsupported_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bsm");
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        put_u32(&mut buf, 99);
        let crc = crc32fast::hash(&buf);
        put_u32(&mut buf, crc);
        std::fs::write(&path, &buf).unwrap();
        assert!(matches!(load_model(&path), Err(Error::UnsupportedVersion(99))));
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bsm");
        let model = build_model::<f32>(&small_config()).unwrap();
        save_model(&model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        // Drop the tail but keep a valid CRC over the shortened body.
        let mut short = bytes[..bytes.len() / 2].to_vec();
        let crc = crc32fast::hash(&short);
        put_u32(&mut short, crc);
        std::fs::write(&path, &short).unwrap();
        assert!(load_model(&path).is_err());
    }

    #[test]
    fn default_model_file_size_under_17mb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bsm");
        let model = build_model::<f32>(&ModelConfig::default()).unwrap();
        save_model(&model, &path).unwrap();
        let len = std::fs::metadata(&path).unwrap().len();
        let payload = 4_219_779u64 * 4;
        assert!(len > payload, "file smaller than raw parameters");
        assert!(len < 17 * 1024 * 1024, "file unexpectedly large: {len}");
        // Header + records overhead is tiny relative to the payload.
        assert!(len < payload + 4096);
    }
}
