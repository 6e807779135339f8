//! Graph construction for the decoder-only forecaster.
//!
//! One code path builds the attention scores, the decoder blocks, and the
//! loss for training, evaluation, and the standalone score/attend operations.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

use super::weights::Weights;
use super::{AttentionVariant, ModelConfig};

/// Per-head parameter nodes, one arm per synthesizer.
pub(crate) enum HeadParamIds {
    Vanilla {
        wq: NodeId,
        wk: NodeId,
    },
    Dense {
        w1: NodeId,
        b1: NodeId,
        w2: NodeId,
        b2: NodeId,
    },
    Random {
        r: NodeId,
    },
    FactorizedDense {
        fa_w: NodeId,
        fa_b: NodeId,
        fb_w: NodeId,
        fb_b: NodeId,
        k1: usize,
        k2: usize,
    },
    FactorizedRandom {
        r1: NodeId,
        r2: NodeId,
    },
    MixDense {
        wq: NodeId,
        wk: NodeId,
        w1: NodeId,
        b1: NodeId,
        w2: NodeId,
        b2: NodeId,
    },
    MixRandom {
        wq: NodeId,
        wk: NodeId,
        r: NodeId,
    },
}

/// Scaled dot-product logits for one head: `Q Kᵀ / sqrt(d_k)`.
pub(crate) fn build_dot_scores(g: &mut Graph, q: NodeId, k: NodeId, d_k: usize) -> NodeId {
    let kt = g.transpose(k);
    let qk = g.matmul(q, kt);
    g.scale(qk, 1.0 / (d_k as f64).sqrt())
}

/// Pre-softmax attention logits for one head, per variant.
///
/// `x` is the N x d_k head input; the result is N x N.
pub(crate) fn build_scores(
    g: &mut Graph,
    x: NodeId,
    params: &HeadParamIds,
    d_k: usize,
    seq_len: usize,
) -> NodeId {
    match params {
        HeadParamIds::Vanilla { wq, wk } => {
            let q = g.matmul(x, *wq);
            let k = g.matmul(x, *wk);
            build_dot_scores(g, q, k, d_k)
        }
        HeadParamIds::Dense { w1, b1, w2, b2 } => {
            let h = g.matmul(x, *w1);
            let h = g.add_row(h, *b1);
            let h = g.relu(h);
            let s = g.matmul(h, *w2);
            g.add_row(s, *b2)
        }
        HeadParamIds::Random { r } => *r,
        HeadParamIds::FactorizedDense {
            fa_w,
            fa_b,
            fb_w,
            fb_b,
            k1,
            k2,
        } => {
            // Row-wise factors a (len k1) and b (len k2); each is tiled out to
            // length N = k1*k2 and the factors combine elementwise.
            let a = g.matmul(x, *fa_w);
            let a = g.add_row(a, *fa_b);
            let b = g.matmul(x, *fb_w);
            let b = g.add_row(b, *fb_b);
            let a_t = g.tile_cols(a, seq_len / k1);
            let b_t = g.tile_cols(b, seq_len / k2);
            g.mul(a_t, b_t)
        }
        HeadParamIds::FactorizedRandom { r1, r2 } => {
            let r2t = g.transpose(*r2);
            g.matmul(*r1, r2t)
        }
        HeadParamIds::MixDense {
            wq,
            wk,
            w1,
            b1,
            w2,
            b2,
        } => {
            let vanilla = {
                let q = g.matmul(x, *wq);
                let k = g.matmul(x, *wk);
                build_dot_scores(g, q, k, d_k)
            };
            let synthetic = build_scores(
                g,
                x,
                &HeadParamIds::Dense {
                    w1: *w1,
                    b1: *b1,
                    w2: *w2,
                    b2: *b2,
                },
                d_k,
                seq_len,
            );
            g.add(vanilla, synthetic)
        }
        HeadParamIds::MixRandom { wq, wk, r } => {
            let vanilla = {
                let q = g.matmul(x, *wq);
                let k = g.matmul(x, *wk);
                build_dot_scores(g, q, k, d_k)
            };
            g.add(vanilla, *r)
        }
    }
}

/// Pre-sampled inverted-dropout masks (entries 0 or 1/(1-p)), two per layer.
pub(crate) struct DropoutMasks {
    pub attn: Vec<Array2<f64>>,
    pub ffn: Vec<Array2<f64>>,
}

pub(crate) struct ForwardBuild {
    /// N x 1 per-position predictions.
    pub output: NodeId,
    /// Parameter leaves in weight-storage order, for gradient collection.
    pub params: Vec<(String, NodeId)>,
}

fn load_params(
    g: &mut Graph,
    weights: &Weights,
    trainable: bool,
) -> Vec<(String, NodeId)> {
    weights
        .iter()
        .map(|(name, t)| {
            let id = if trainable {
                g.parameter(t.clone())
            } else {
                g.constant(t.clone())
            };
            (name.to_string(), id)
        })
        .collect()
}

fn find(params: &[(String, NodeId)], name: &str) -> NodeId {
    params
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, id)| *id)
        .expect("tensor enumerated by spec")
}

fn head_param_ids(
    cfg: &ModelConfig,
    params: &[(String, NodeId)],
    layer: usize,
    head: usize,
) -> HeadParamIds {
    let p = format!("l{layer}.h{head}");
    match cfg.variant {
        AttentionVariant::Vanilla => HeadParamIds::Vanilla {
            wq: find(params, &format!("{p}.wq")),
            wk: find(params, &format!("{p}.wk")),
        },
        AttentionVariant::Dense => HeadParamIds::Dense {
            w1: find(params, &format!("{p}.syn.w1")),
            b1: find(params, &format!("{p}.syn.b1")),
            w2: find(params, &format!("{p}.syn.w2")),
            b2: find(params, &format!("{p}.syn.b2")),
        },
        AttentionVariant::Random => HeadParamIds::Random {
            r: find(params, &format!("{p}.syn.r")),
        },
        AttentionVariant::FactorizedDense => HeadParamIds::FactorizedDense {
            fa_w: find(params, &format!("{p}.syn.fa_w")),
            fa_b: find(params, &format!("{p}.syn.fa_b")),
            fb_w: find(params, &format!("{p}.syn.fb_w")),
            fb_b: find(params, &format!("{p}.syn.fb_b")),
            k1: cfg.factor_k1,
            k2: cfg.factor_k2,
        },
        AttentionVariant::FactorizedRandom => HeadParamIds::FactorizedRandom {
            r1: find(params, &format!("{p}.syn.r1")),
            r2: find(params, &format!("{p}.syn.r2")),
        },
        AttentionVariant::MixDense => HeadParamIds::MixDense {
            wq: find(params, &format!("{p}.wq")),
            wk: find(params, &format!("{p}.wk")),
            w1: find(params, &format!("{p}.syn.w1")),
            b1: find(params, &format!("{p}.syn.b1")),
            w2: find(params, &format!("{p}.syn.w2")),
            b2: find(params, &format!("{p}.syn.b2")),
        },
        AttentionVariant::MixRandom => HeadParamIds::MixRandom {
            wq: find(params, &format!("{p}.wq")),
            wk: find(params, &format!("{p}.wk")),
            r: find(params, &format!("{p}.syn.r")),
        },
    }
}

/// Builds the whole forward pass.
///
/// Blocks follow the decoder layout: masked multi-head attention, residual
/// and layer norm, position-wise feed-forward, residual and layer norm.
/// `masks` enables dropout (training); `check_finite` scans each block output
/// and reports the offending layer.
pub(crate) fn build_forward(
    g: &mut Graph,
    cfg: &ModelConfig,
    weights: &Weights,
    window: &Array2<f64>,
    masks: Option<&DropoutMasks>,
    trainable: bool,
    check_finite: bool,
) -> Result<ForwardBuild> {
    let (rows, cols) = window.dim();
    if rows != cfg.seq_len || cols != cfg.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "window is {rows}x{cols}, model expects {}x{}",
            cfg.seq_len, cfg.input_dim
        )));
    }
    let params = load_params(g, weights, trainable);
    let d_k = cfg.head_dim();

    let x_in = g.constant(window.clone());
    let proj = g.matmul(x_in, find(&params, "input.w"));
    let proj = g.add_row(proj, find(&params, "input.b"));
    let mut x = g.add(proj, find(&params, "pos"));

    for layer in 0..cfg.layers {
        let mut head_outputs = Vec::with_capacity(cfg.heads);
        for head in 0..cfg.heads {
            let x_h = g.slice_cols(x, head * d_k, d_k);
            let ids = head_param_ids(cfg, &params, layer, head);
            let scores = build_scores(g, x_h, &ids, d_k, cfg.seq_len);
            let probs = g.causal_softmax(scores);
            let v = g.matmul(x_h, find(&params, &format!("l{layer}.h{head}.wv")));
            head_outputs.push(g.matmul(probs, v));
        }
        let concat = g.concat_cols(&head_outputs);
        let attn = g.matmul(concat, find(&params, &format!("l{layer}.attn_out.w")));
        let mut attn = g.add_row(attn, find(&params, &format!("l{layer}.attn_out.b")));
        if let Some(m) = masks {
            let mask = g.constant(m.attn[layer].clone());
            attn = g.mul(attn, mask);
        }
        let res = g.add(x, attn);
        x = g.layer_norm(
            res,
            find(&params, &format!("l{layer}.ln1.g")),
            find(&params, &format!("l{layer}.ln1.b")),
        );

        let h = g.matmul(x, find(&params, &format!("l{layer}.ffn.w1")));
        let h = g.add_row(h, find(&params, &format!("l{layer}.ffn.b1")));
        let h = g.relu(h);
        let h = g.matmul(h, find(&params, &format!("l{layer}.ffn.w2")));
        let mut ffn = g.add_row(h, find(&params, &format!("l{layer}.ffn.b2")));
        if let Some(m) = masks {
            let mask = g.constant(m.ffn[layer].clone());
            ffn = g.mul(ffn, mask);
        }
        let res = g.add(x, ffn);
        x = g.layer_norm(
            res,
            find(&params, &format!("l{layer}.ln2.g")),
            find(&params, &format!("l{layer}.ln2.b")),
        );

        if check_finite && !g.value(x).iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteActivation {
                layer,
                context: "decoder block output".into(),
            });
        }
    }

    let out = g.matmul(x, find(&params, "head.w"));
    let output = g.add_row(out, find(&params, "head.b"));
    if check_finite && !g.value(output).iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteActivation {
            layer: cfg.layers,
            context: "output head".into(),
        });
    }
    Ok(ForwardBuild { output, params })
}

/// Appends the mean-squared-error loss against an N x 1 target.
pub(crate) fn build_mse_loss(g: &mut Graph, output: NodeId, target: &Array2<f64>) -> NodeId {
    let t = g.constant(target.clone());
    let diff = g.sub(output, t);
    let sq = g.mul(diff, diff);
    g.mean_all(sq)
}
