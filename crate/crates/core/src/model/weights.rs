//! Named parameter tensors: deterministic initialization, census, and a
//! bit-exact versioned checkpoint container.

use base64::Engine;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

use super::{AttentionVariant, ModelConfig};

#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    Xavier,
    Zeros,
    Ones,
    /// Small-scale normal for free score parameters and position embeddings.
    Normal02,
}

#[derive(Debug, Clone)]
pub(crate) struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

fn spec(name: String, rows: usize, cols: usize, init: Init) -> TensorSpec {
    TensorSpec {
        name,
        rows,
        cols,
        init,
    }
}

/// Enumerates every tensor of a model in a fixed, reproducible order.
pub(crate) fn tensor_specs(cfg: &ModelConfig) -> Vec<TensorSpec> {
    let d = cfg.model_dim;
    let dk = cfg.head_dim();
    let n = cfg.seq_len;
    let mut out = vec![
        spec("input.w".into(), cfg.input_dim, d, Init::Xavier),
        spec("input.b".into(), 1, d, Init::Zeros),
        spec("pos".into(), n, d, Init::Normal02),
    ];
    for l in 0..cfg.layers {
        for h in 0..cfg.heads {
            let p = format!("l{l}.h{h}");
            if cfg.variant.has_query_key() {
                out.push(spec(format!("{p}.wq"), dk, dk, Init::Xavier));
                out.push(spec(format!("{p}.wk"), dk, dk, Init::Xavier));
            }
            out.push(spec(format!("{p}.wv"), dk, dk, Init::Xavier));
            match cfg.variant {
                AttentionVariant::Dense | AttentionVariant::MixDense => {
                    out.push(spec(format!("{p}.syn.w1"), dk, dk, Init::Xavier));
                    out.push(spec(format!("{p}.syn.b1"), 1, dk, Init::Zeros));
                    out.push(spec(format!("{p}.syn.w2"), dk, n, Init::Xavier));
                    out.push(spec(format!("{p}.syn.b2"), 1, n, Init::Zeros));
                }
                AttentionVariant::Random | AttentionVariant::MixRandom => {
                    out.push(spec(format!("{p}.syn.r"), n, n, Init::Normal02));
                }
                AttentionVariant::FactorizedDense => {
                    out.push(spec(format!("{p}.syn.fa_w"), dk, cfg.factor_k1, Init::Xavier));
                    out.push(spec(format!("{p}.syn.fa_b"), 1, cfg.factor_k1, Init::Zeros));
                    out.push(spec(format!("{p}.syn.fb_w"), dk, cfg.factor_k2, Init::Xavier));
                    out.push(spec(format!("{p}.syn.fb_b"), 1, cfg.factor_k2, Init::Zeros));
                }
                AttentionVariant::FactorizedRandom => {
                    out.push(spec(format!("{p}.syn.r1"), n, cfg.factor_rank, Init::Normal02));
                    out.push(spec(format!("{p}.syn.r2"), n, cfg.factor_rank, Init::Normal02));
                }
                AttentionVariant::Vanilla => {}
            }
        }
        out.push(spec(format!("l{l}.attn_out.w"), d, d, Init::Xavier));
        out.push(spec(format!("l{l}.attn_out.b"), 1, d, Init::Zeros));
        out.push(spec(format!("l{l}.ln1.g"), 1, d, Init::Ones));
        out.push(spec(format!("l{l}.ln1.b"), 1, d, Init::Zeros));
        out.push(spec(format!("l{l}.ffn.w1"), d, cfg.ffn_dim, Init::Xavier));
        out.push(spec(format!("l{l}.ffn.b1"), 1, cfg.ffn_dim, Init::Zeros));
        out.push(spec(format!("l{l}.ffn.w2"), cfg.ffn_dim, d, Init::Xavier));
        out.push(spec(format!("l{l}.ffn.b2"), 1, d, Init::Zeros));
        out.push(spec(format!("l{l}.ln2.g"), 1, d, Init::Ones));
        out.push(spec(format!("l{l}.ln2.b"), 1, d, Init::Zeros));
    }
    out.push(spec("head.w".into(), d, 1, Init::Xavier));
    out.push(spec("head.b".into(), 1, 1, Init::Zeros));
    out
}

/// The learnable state of one model, as an ordered list of named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    tensors: Vec<(String, Array2<f64>)>,
}

impl Weights {
    /// Deterministic initialization for a validated config.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.02).expect("valid scale");
        let tensors = tensor_specs(cfg)
            .into_iter()
            .map(|s| {
                let value = match s.init {
                    Init::Zeros => Array2::zeros((s.rows, s.cols)),
                    Init::Ones => Array2::ones((s.rows, s.cols)),
                    Init::Normal02 => {
                        Array2::from_shape_fn((s.rows, s.cols), |_| normal.sample(&mut rng))
                    }
                    Init::Xavier => {
                        let bound = (6.0 / (s.rows + s.cols) as f64).sqrt();
                        let dist = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
                        Array2::from_shape_fn((s.rows, s.cols), |_| dist.sample(&mut rng))
                    }
                };
                (s.name, value)
            })
            .collect();
        Ok(Self { tensors })
    }

    pub(crate) fn from_tensors(tensors: Vec<(String, Array2<f64>)>) -> Self {
        Self { tensors }
    }

    pub fn get(&self, name: &str) -> Result<&Array2<f64>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Array2<f64>> {
        self.tensors
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.tensors.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Array2<f64>)> {
        self.tensors.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Per-tensor element counts, in storage order.
    pub fn census(&self) -> Vec<(String, usize)> {
        self.tensors
            .iter()
            .map(|(n, t)| (n.clone(), t.len()))
            .collect()
    }

    pub fn total_params(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.len()).sum()
    }

    /// Sum of synthetic-attention parameters for one head of one layer.
    pub fn synthetic_params_per_head(&self) -> usize {
        self.tensors
            .iter()
            .filter(|(n, _)| n.starts_with("l0.h0.syn."))
            .map(|(_, t)| t.len())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    rows: usize,
    cols: usize,
    /// Base64 of the little-endian f64 bytes, row-major.
    data: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    config: ModelConfig,
    tensors: Vec<TensorRecord>,
}

/// Writes config plus tensors; floating-point payloads are byte-encoded so
/// the round-trip is bit-exact.
pub fn save_checkpoint(path: impl AsRef<Path>, cfg: &ModelConfig, weights: &Weights) -> Result<()> {
    let engine = base64::engine::general_purpose::STANDARD;
    let tensors = weights
        .iter()
        .map(|(name, t)| {
            let mut bytes = Vec::with_capacity(t.len() * 8);
            for v in t.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            TensorRecord {
                name: name.to_string(),
                rows: t.nrows(),
                cols: t.ncols(),
                data: engine.encode(bytes),
            }
        })
        .collect();
    let file = CheckpointFile {
        format_version: CHECKPOINT_VERSION,
        config: cfg.clone(),
        tensors,
    };
    let json = serde_json::to_string(&file).map_err(|e| Error::Checkpoint(e.to_string()))?;
    std::fs::write(path.as_ref(), json)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelConfig, Weights)> {
    let json = std::fs::read_to_string(path.as_ref())?;
    let file: CheckpointFile =
        serde_json::from_str(&json).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if file.format_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}",
            file.format_version
        )));
    }
    let engine = base64::engine::general_purpose::STANDARD;
    let mut tensors = Vec::with_capacity(file.tensors.len());
    for rec in file.tensors {
        let bytes = engine
            .decode(&rec.data)
            .map_err(|e| Error::Checkpoint(format!("tensor {}: {e}", rec.name)))?;
        if bytes.len() != rec.rows * rec.cols * 8 {
            return Err(Error::Checkpoint(format!(
                "tensor {}: payload is {} bytes, expected {}",
                rec.name,
                bytes.len(),
                rec.rows * rec.cols * 8
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let arr = Array2::from_shape_vec((rec.rows, rec.cols), values)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        tensors.push((rec.name, arr));
    }
    Ok((file.config, Weights::from_tensors(tensors)))
}
