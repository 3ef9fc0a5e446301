use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainState};
use crate::corpus::VocabSet;
use crate::error::{Error, Result};
use crate::framing;
use crate::models::{CodeSearchModel, ModelConfig};
use crate::nn::Module;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CSCKPT01";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Role {
    Value,
    AdamM,
    AdamV,
    Buffer,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    role: Role,
    shape: [usize; 2],
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelConfig,
    train: Option<TrainConfig>,
    state: TrainState,
    model_digest: String,
    vocab_digest: String,
    vocab: VocabSet,
    tensors: Vec<TensorEntry>,
    data_sha256: String,
}

/// Everything needed to resume training or serve queries.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: CodeSearchModel<f32>,
    pub state: TrainState,
    pub vocab: VocabSet,
    pub train: Option<TrainConfig>,
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &CodeSearchModel<f32>,
    state: &TrainState,
    vocab: &VocabSet,
    train: Option<&TrainConfig>,
) -> Result<()> {
    if vocab.sizes() != model.config.vocab_sizes {
        return Err(Error::InvalidArgument(
            "vocabulary sizes differ from the model configuration".into(),
        ));
    }
    let mut data = Vec::new();
    let mut tensors = Vec::new();
    let mut push = |name: &str, role: Role, a: &ndarray::Array2<f32>, data: &mut Vec<u8>| {
        tensors.push(TensorEntry {
            name: name.to_string(),
            role,
            shape: [a.nrows(), a.ncols()],
            offset: data.len(),
        });
        framing::push_f32(data, a);
    };
    for p in model.params() {
        push(&p.name, Role::Value, &p.value, &mut data);
        push(&p.name, Role::AdamM, &p.adam_m, &mut data);
        push(&p.name, Role::AdamV, &p.adam_v, &mut data);
    }
    for b in model.buffers() {
        push(&b.name, Role::Buffer, &b.value, &mut data);
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        model: model.config.clone(),
        train: train.cloned(),
        state: state.clone(),
        model_digest: model.digest(),
        vocab_digest: vocab.digest(),
        vocab: vocab.clone(),
        tensors,
        data_sha256: framing::sha256_hex(&data),
    };
    framing::write(path.as_ref(), CHECKPOINT_MAGIC, &serde_json::to_vec(&header)?, &data)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let (header, data) = framing::read(path, CHECKPOINT_MAGIC)?;
    let header: Header =
        serde_json::from_slice(&header).map_err(|e| Error::corrupt(path, format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::corrupt(
            path,
            format!("unsupported format version {}", header.format_version),
        ));
    }
    let actual = framing::sha256_hex(&data);
    if actual != header.data_sha256 {
        return Err(Error::DigestMismatch {
            expected: header.data_sha256,
            actual,
        });
    }
    let vocab_digest = header.vocab.digest();
    if vocab_digest != header.vocab_digest {
        return Err(Error::DigestMismatch {
            expected: header.vocab_digest,
            actual: vocab_digest,
        });
    }

    let mut model = CodeSearchModel::<f32>::build(header.model.clone())?;
    let mut entries = header.tensors.iter();
    let mut next = |name: &str, role: Role, shape: [usize; 2]| -> Result<ndarray::Array2<f32>> {
        let e = entries
            .next()
            .ok_or_else(|| Error::corrupt(path, format!("missing tensor {name}")))?;
        if e.name != name || e.role != role || e.shape != shape {
            return Err(Error::corrupt(
                path,
                format!("tensor {} {:?} {:?} where {name} {role:?} {shape:?} was expected", e.name, e.role, e.shape),
            ));
        }
        framing::take_f32(&data, e.offset, e.shape, path)
    };
    for p in model.params_mut() {
        let shape = p.shape();
        p.value = next(&p.name, Role::Value, shape)?;
        p.adam_m = next(&p.name, Role::AdamM, shape)?;
        p.adam_v = next(&p.name, Role::AdamV, shape)?;
    }
    for b in model.buffers_mut() {
        let shape = [b.value.nrows(), b.value.ncols()];
        b.value = next(&b.name, Role::Buffer, shape)?;
    }
    if entries.next().is_some() {
        return Err(Error::corrupt(path, "unexpected extra tensors"));
    }
    let digest = model.digest();
    if digest != header.model_digest {
        return Err(Error::DigestMismatch {
            expected: header.model_digest,
            actual: digest,
        });
    }
    Ok(Checkpoint {
        model,
        state: header.state,
        vocab: header.vocab,
        train: header.train,
    })
}
