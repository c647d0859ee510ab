//! Self-describing checkpoint files.
//!
//! A checkpoint embeds the full [`ModelConfig`], so loading needs no external
//! context, plus every parameter and buffer tensor keyed by layer path, and
//! the epoch metadata. The round trip is bit-exact.
//!
//! Layout: 8-byte magic, u32 format version, u32 JSON header length, the
//! header, then the raw little-endian tensor payload in header order.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nets::{build_model, Element, SegmentationModel, TensorKind};
use crate::types::{ImageFrame, SegMask};

const MAGIC: &[u8; 8] = b"ECHOSEG\0";
const VERSION: u32 = 1;

/// A trained model together with its selection metadata.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: SegmentationModel<f32>,
    pub epoch: usize,
    pub val_dice: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    epoch: usize,
    val_dice: Option<f64>,
    dtype: String,
    tensors: Vec<TensorRecord>,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    path: String,
    kind: String,
    shape: Vec<usize>,
    byte_len: u64,
}

impl Checkpoint {
    pub fn new(model: SegmentationModel<f32>, epoch: usize, val_dice: Option<f64>) -> Self {
        Self {
            model,
            epoch,
            val_dice,
        }
    }

    /// Per-pixel argmax prediction; ties resolve to background.
    pub fn predict(&self, image: &ImageFrame) -> Result<SegMask> {
        super::predict(&self.model, image)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tensors = Vec::new();
        let mut payload: Vec<u8> = Vec::new();
        self.model.visit_tensors(&mut |tensor_path, kind, view| {
            let start = payload.len();
            for &value in view.iter() {
                f32::write_le(value, &mut payload);
            }
            tensors.push(TensorRecord {
                path: tensor_path.to_string(),
                kind: match kind {
                    TensorKind::Param => "param".to_string(),
                    TensorKind::Buffer => "buffer".to_string(),
                },
                shape: view.shape().to_vec(),
                byte_len: (payload.len() - start) as u64,
            });
        });

        let header = Header {
            config: self.model.config().clone(),
            epoch: self.epoch,
            val_dice: self.val_dice,
            dtype: f32::DTYPE.to_string(),
            tensors,
        };
        let header_json = serde_json::to_vec(&header).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;

        let mut bytes = Vec::with_capacity(16 + header_json.len() + payload.len());
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&header_json);
        bytes.extend_from_slice(&payload);
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let fail = |reason: &str| Error::checkpoint(path, reason);
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(fail("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(fail(&format!("unsupported format version {version}")));
        }
        let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        if bytes.len() < 16 + header_len {
            return Err(fail("truncated header"));
        }
        let header: Header = serde_json::from_slice(&bytes[16..16 + header_len])
            .map_err(|e| fail(&format!("unreadable header: {e}")))?;
        if header.dtype != f32::DTYPE {
            return Err(fail(&format!("unsupported dtype {}", header.dtype)));
        }

        let payload = &bytes[16 + header_len..];
        let expected: u64 = header.tensors.iter().map(|t| t.byte_len).sum();
        if payload.len() as u64 != expected {
            return Err(fail(&format!(
                "payload is {} bytes, header describes {expected}",
                payload.len()
            )));
        }

        let mut offsets = HashMap::new();
        let mut cursor = 0usize;
        for record in &header.tensors {
            offsets.insert(
                record.path.clone(),
                (cursor, record.byte_len as usize, record.shape.clone()),
            );
            cursor += record.byte_len as usize;
        }

        let mut model = build_model::<f32>(&header.config, 0)
            .map_err(|e| fail(&format!("embedded config is invalid: {e}")))?;
        let mut problem: Option<String> = None;
        let mut filled = 0usize;
        model.visit_tensors_mut(&mut |tensor_path, _, mut view| {
            if problem.is_some() {
                return;
            }
            match offsets.get(tensor_path) {
                None => problem = Some(format!("missing tensor {tensor_path}")),
                Some((start, len, shape)) => {
                    if shape != view.shape() || *len != view.len() * f32::BYTE_WIDTH {
                        problem = Some(format!("tensor {tensor_path} has mismatched shape"));
                        return;
                    }
                    let data = &payload[*start..*start + *len];
                    for (i, value) in view.iter_mut().enumerate() {
                        *value = f32::read_le(&data[i * 4..i * 4 + 4]);
                    }
                    filled += 1;
                }
            }
        });
        if let Some(reason) = problem {
            return Err(fail(&reason));
        }
        if filled != header.tensors.len() {
            return Err(fail("checkpoint carries tensors unknown to this architecture"));
        }

        Ok(Self {
            model,
            epoch: header.epoch,
            val_dice: header.val_dice,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ModelConfig, Normalization, Upsampling, Variant};
    use ndarray::Array4;
    use tempfile::tempdir;

    fn test_model() -> SegmentationModel<f32> {
        let config = ModelConfig::custom(
            Variant::Unet2,
            vec![4, 8],
            4,
            Upsampling::Deconvolution,
            Normalization::BatchNorm,
            8,
        )
        .unwrap();
        build_model(&config, 5).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = test_model();
        let x = Array4::from_shape_fn((2, 1, 8, 8), |(_, _, r, c)| (r * 8 + c) as f32 / 64.0);
        let before = model.forward(&x).unwrap();

        Checkpoint::new(model, 3, Some(0.91)).save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.epoch, 3);
        assert_eq!(loaded.val_dice, Some(0.91));
        let after = loaded.model.forward(&x).unwrap();
        assert_eq!(before, after, "forward output must be bit-identical");
    }

    #[test]
    fn config_rides_along() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("unet1.ckpt");
        let config = ModelConfig::unet1(0.25).unwrap().with_input_size(16);
        let model = build_model::<f32>(&config, 1).unwrap();
        Checkpoint::new(model, 1, None).save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.model.config(), &config);
        assert_eq!(
            loaded.model.structure().upsampling,
            Upsampling::NearestRepeat
        );
    }

    #[test]
    fn truncated_file_is_an_error_not_a_model() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        Checkpoint::new(test_model(), 1, None).save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(Error::Checkpoint { .. })
        ));
        std::fs::write(&path, b"garbage").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
