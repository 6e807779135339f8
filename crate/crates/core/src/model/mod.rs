//! Decoder-only transformer with interchangeable attention-score
//! synthesizers, plus gradient verification by central finite differences.

mod net;
mod weights;

pub use weights::{load_checkpoint, save_checkpoint, Weights};

use chrono::{Days, NaiveDate};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::ingest::FeatureFrame;

pub(crate) use net::{build_forward, build_mse_loss, DropoutMasks};

/// How attention logits are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionVariant {
    Vanilla,
    Dense,
    Random,
    FactorizedDense,
    FactorizedRandom,
    MixDense,
    MixRandom,
}

impl AttentionVariant {
    pub const ALL: [AttentionVariant; 7] = [
        AttentionVariant::Vanilla,
        AttentionVariant::Dense,
        AttentionVariant::Random,
        AttentionVariant::FactorizedDense,
        AttentionVariant::FactorizedRandom,
        AttentionVariant::MixDense,
        AttentionVariant::MixRandom,
    ];

    /// Variants that keep the query/key projections.
    pub fn has_query_key(self) -> bool {
        matches!(
            self,
            AttentionVariant::Vanilla | AttentionVariant::MixDense | AttentionVariant::MixRandom
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            AttentionVariant::Vanilla => "vanilla",
            AttentionVariant::Dense => "dense",
            AttentionVariant::Random => "random",
            AttentionVariant::FactorizedDense => "factorized_dense",
            AttentionVariant::FactorizedRandom => "factorized_random",
            AttentionVariant::MixDense => "mix_dense",
            AttentionVariant::MixRandom => "mix_random",
        }
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: AttentionVariant,
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub seq_len: usize,
    pub dropout: f64,
    pub input_dim: usize,
    /// Width of the position-wise feed-forward hidden layer.
    pub ffn_dim: usize,
    /// Factorized dense: row factors of length k1 and k2 with k1 * k2 = seq_len.
    pub factor_k1: usize,
    pub factor_k2: usize,
    /// Factorized random: rank of the R1 R2ᵀ product.
    pub factor_rank: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: AttentionVariant::FactorizedDense,
            layers: 4,
            heads: 4,
            model_dim: 64,
            seq_len: 64,
            dropout: 0.2,
            input_dim: 1,
            ffn_dim: 256,
            factor_k1: 8,
            factor_k2: 8,
            factor_rank: 8,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    /// Largest divisor pair (k1, k2) of `n` with k1 <= sqrt(n) <= k2.
    pub fn factor_pair(n: usize) -> (usize, usize) {
        let mut best = 1;
        let mut d = 1;
        while d * d <= n {
            if n % d == 0 {
                best = d;
            }
            d += 1;
        }
        (best, n / best)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.layers == 0 || self.heads == 0 || self.model_dim == 0 || self.seq_len == 0 {
            return fail("layers, heads, model_dim, seq_len must be positive".into());
        }
        if self.model_dim % self.heads != 0 {
            return fail(format!(
                "model_dim {} not divisible by heads {}",
                self.model_dim, self.heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.input_dim == 0 || self.ffn_dim == 0 {
            return fail("input_dim and ffn_dim must be positive".into());
        }
        if self.variant == AttentionVariant::FactorizedDense
            && self.factor_k1 * self.factor_k2 != self.seq_len
        {
            return fail(format!(
                "factor_k1 {} * factor_k2 {} must equal seq_len {}",
                self.factor_k1, self.factor_k2, self.seq_len
            ));
        }
        if self.variant == AttentionVariant::FactorizedRandom && self.factor_rank == 0 {
            return fail("factor_rank must be positive".into());
        }
        Ok(())
    }
}

/// The learnable tensors of one attention head, by variant.
#[derive(Debug, Clone)]
pub enum AttentionParams {
    Vanilla {
        wq: Array2<f64>,
        wk: Array2<f64>,
    },
    Dense {
        w1: Array2<f64>,
        b1: Array2<f64>,
        w2: Array2<f64>,
        b2: Array2<f64>,
    },
    Random {
        r: Array2<f64>,
    },
    FactorizedDense {
        fa_w: Array2<f64>,
        fa_b: Array2<f64>,
        fb_w: Array2<f64>,
        fb_b: Array2<f64>,
    },
    FactorizedRandom {
        r1: Array2<f64>,
        r2: Array2<f64>,
    },
    MixDense {
        wq: Array2<f64>,
        wk: Array2<f64>,
        w1: Array2<f64>,
        b1: Array2<f64>,
        w2: Array2<f64>,
        b2: Array2<f64>,
    },
    MixRandom {
        wq: Array2<f64>,
        wk: Array2<f64>,
        r: Array2<f64>,
    },
}

/// Scaled dot-product logits `Q Kᵀ / sqrt(d_k)` for already-projected Q, K.
pub fn scaled_dot_scores(q: &Array2<f64>, k: &Array2<f64>) -> Result<Array2<f64>> {
    if q.ncols() != k.ncols() || q.nrows() != k.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "q is {:?}, k is {:?}",
            q.dim(),
            k.dim()
        )));
    }
    let mut g = Graph::new();
    let qn = g.constant(q.clone());
    let kn = g.constant(k.clone());
    let s = net::build_dot_scores(&mut g, qn, kn, q.ncols());
    Ok(g.value(s).clone())
}

/// Pre-softmax N x N attention logits for one head input X (N x d_k).
pub fn synthesize_scores(x: &Array2<f64>, params: &AttentionParams) -> Result<Array2<f64>> {
    let (n, d_k) = x.dim();
    let mut g = Graph::new();
    let xn = g.constant(x.clone());
    let mut load = |a: &Array2<f64>| g.constant(a.clone());

    let ids = match params {
        AttentionParams::Vanilla { wq, wk } => {
            expect_shape("wq", wq, (d_k, d_k))?;
            expect_shape("wk", wk, (d_k, d_k))?;
            net::HeadParamIds::Vanilla {
                wq: load(wq),
                wk: load(wk),
            }
        }
        AttentionParams::Dense { w1, b1, w2, b2 } => {
            expect_shape("w1", w1, (d_k, d_k))?;
            expect_shape("b1", b1, (1, d_k))?;
            expect_shape("w2", w2, (d_k, n))?;
            expect_shape("b2", b2, (1, n))?;
            net::HeadParamIds::Dense {
                w1: load(w1),
                b1: load(b1),
                w2: load(w2),
                b2: load(b2),
            }
        }
        AttentionParams::Random { r } => {
            expect_shape("r", r, (n, n))?;
            net::HeadParamIds::Random { r: load(r) }
        }
        AttentionParams::FactorizedDense {
            fa_w,
            fa_b,
            fb_w,
            fb_b,
        } => {
            let k1 = fa_w.ncols();
            let k2 = fb_w.ncols();
            if k1 == 0 || k2 == 0 || k1 * k2 != n {
                return Err(Error::ShapeMismatch(format!(
                    "factor lengths {k1} x {k2} must multiply to seq_len {n}"
                )));
            }
            expect_shape("fa_w", fa_w, (d_k, k1))?;
            expect_shape("fa_b", fa_b, (1, k1))?;
            expect_shape("fb_w", fb_w, (d_k, k2))?;
            expect_shape("fb_b", fb_b, (1, k2))?;
            net::HeadParamIds::FactorizedDense {
                fa_w: load(fa_w),
                fa_b: load(fa_b),
                fb_w: load(fb_w),
                fb_b: load(fb_b),
                k1,
                k2,
            }
        }
        AttentionParams::FactorizedRandom { r1, r2 } => {
            let k = r1.ncols();
            expect_shape("r1", r1, (n, k))?;
            expect_shape("r2", r2, (n, k))?;
            net::HeadParamIds::FactorizedRandom {
                r1: load(r1),
                r2: load(r2),
            }
        }
        AttentionParams::MixDense {
            wq,
            wk,
            w1,
            b1,
            w2,
            b2,
        } => {
            expect_shape("wq", wq, (d_k, d_k))?;
            expect_shape("wk", wk, (d_k, d_k))?;
            expect_shape("w1", w1, (d_k, d_k))?;
            expect_shape("b1", b1, (1, d_k))?;
            expect_shape("w2", w2, (d_k, n))?;
            expect_shape("b2", b2, (1, n))?;
            net::HeadParamIds::MixDense {
                wq: load(wq),
                wk: load(wk),
                w1: load(w1),
                b1: load(b1),
                w2: load(w2),
                b2: load(b2),
            }
        }
        AttentionParams::MixRandom { wq, wk, r } => {
            expect_shape("wq", wq, (d_k, d_k))?;
            expect_shape("wk", wk, (d_k, d_k))?;
            expect_shape("r", r, (n, n))?;
            net::HeadParamIds::MixRandom {
                wq: load(wq),
                wk: load(wk),
                r: load(r),
            }
        }
    };
    let s = net::build_scores(&mut g, xn, &ids, d_k, n);
    Ok(g.value(s).clone())
}

fn expect_shape(name: &str, a: &Array2<f64>, want: (usize, usize)) -> Result<()> {
    if a.dim() != want {
        return Err(Error::ShapeMismatch(format!(
            "{name} is {:?}, expected {want:?}",
            a.dim()
        )));
    }
    Ok(())
}

/// The causally masked softmax of a score matrix: row i holds the attention
/// weights over positions 0..=i, masked positions are exactly zero.
pub fn causal_attention_weights(scores: &Array2<f64>) -> Result<Array2<f64>> {
    let (n, m) = scores.dim();
    if n != m {
        return Err(Error::ShapeMismatch(format!(
            "scores must be square, got {n}x{m}"
        )));
    }
    let mut g = Graph::new();
    let s = g.constant(scores.clone());
    let probs = g.causal_softmax(s);
    Ok(g.value(probs).clone())
}

/// Causally masked softmax of `scores`, applied to `v`. Masked positions
/// (column j > row i) receive no weight; every visible row sums to one.
pub fn attend(scores: &Array2<f64>, v: &Array2<f64>) -> Result<Array2<f64>> {
    let (n, m) = scores.dim();
    if n != m {
        return Err(Error::ShapeMismatch(format!(
            "scores must be square, got {n}x{m}"
        )));
    }
    if v.nrows() != n {
        return Err(Error::ShapeMismatch(format!(
            "v has {} rows, scores are {n}x{n}",
            v.nrows()
        )));
    }
    let mut g = Graph::new();
    let s = g.constant(scores.clone());
    let vn = g.constant(v.clone());
    let probs = g.causal_softmax(s);
    let out = g.matmul(probs, vn);
    Ok(g.value(out).clone())
}

/// Runs the model over one fully-populated window (seq_len x input_dim).
/// Output element t is the prediction for day t + 1.
pub fn forward(cfg: &ModelConfig, weights: &Weights, window: &Array2<f64>) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut g = Graph::new();
    let built = net::build_forward(&mut g, cfg, weights, window, None, false, true)?;
    Ok(g.value(built.output).column(0).to_vec())
}

/// Per-day forecasts on the transformed-volatility scale, aligned one day
/// ahead of each input window's last date.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSeries {
    /// The forecast dates (input window's last date + 1 day).
    pub target_dates: Vec<NaiveDate>,
    pub predictions: Vec<f64>,
    /// Frame row index of each window's last date.
    pub anchor_rows: Vec<usize>,
}

/// Feature matrix plus target column for a complete frame.
pub struct DesignMatrix {
    pub features: Array2<f64>,
    pub target: Vec<f64>,
    pub feature_names: Vec<String>,
}

pub fn design_matrix(frame: &FeatureFrame) -> Result<DesignMatrix> {
    let names: Vec<String> = frame.feature_names().iter().map(|s| s.to_string()).collect();
    let rows = frame.len();
    let mut features = Array2::zeros((rows, names.len()));
    for (j, name) in names.iter().enumerate() {
        let col = frame.column(name)?;
        for (i, v) in col.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::UnfilledColumn(name.clone()));
            }
            features[[i, j]] = *v;
        }
    }
    let target = frame.target()?.to_vec();
    if let Some(bad) = target.iter().find(|v| !v.is_finite()) {
        let _ = bad;
        return Err(Error::UnfilledColumn(frame.target_column().to_string()));
    }
    Ok(DesignMatrix {
        features,
        target,
        feature_names: names,
    })
}

/// Slides a stride-1 window over the frame and keeps each window's
/// final-position prediction.
pub fn predict_series(
    cfg: &ModelConfig,
    weights: &Weights,
    frame: &FeatureFrame,
) -> Result<ForecastSeries> {
    let dm = design_matrix(frame)?;
    predict_series_from_matrix(cfg, weights, &dm.features, frame.dates())
}

pub(crate) fn predict_series_from_matrix(
    cfg: &ModelConfig,
    weights: &Weights,
    features: &Array2<f64>,
    dates: &[NaiveDate],
) -> Result<ForecastSeries> {
    cfg.validate()?;
    let rows = features.nrows();
    if features.ncols() != cfg.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "frame has {} feature columns, model expects {}",
            features.ncols(),
            cfg.input_dim
        )));
    }
    if rows < cfg.seq_len {
        return Err(Error::FrameTooShort {
            rows,
            need: cfg.seq_len,
            seq_len: cfg.seq_len,
        });
    }
    let mut target_dates = Vec::new();
    let mut predictions = Vec::new();
    let mut anchor_rows = Vec::new();
    for end in (cfg.seq_len - 1)..rows {
        let start = end + 1 - cfg.seq_len;
        let window = features
            .slice(ndarray::s![start..=end, ..])
            .to_owned();
        let out = forward(cfg, weights, &window)?;
        predictions.push(*out.last().expect("seq_len >= 1"));
        anchor_rows.push(end);
        target_dates.push(
            dates[end]
                .checked_add_days(Days::new(1))
                .expect("date arithmetic"),
        );
    }
    Ok(ForecastSeries {
        target_dates,
        predictions,
        anchor_rows,
    })
}

/// One training example: a window and its per-position targets.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

/// Mean over examples of the per-window MSE, evaluation mode.
pub fn batch_loss(cfg: &ModelConfig, weights: &Weights, batch: &[TrainExample]) -> Result<f64> {
    let mut total = 0.0;
    for ex in batch {
        let mut g = Graph::new();
        let built = net::build_forward(&mut g, cfg, weights, &ex.x, None, false, false)?;
        let loss = net::build_mse_loss(&mut g, built.output, &ex.y);
        total += g.value(loss)[[0, 0]];
    }
    Ok(total / batch.len() as f64)
}

/// Analytic gradient of [`batch_loss`] w.r.t. every tensor, in storage order.
pub fn batch_gradients(
    cfg: &ModelConfig,
    weights: &Weights,
    batch: &[TrainExample],
) -> Result<(f64, Vec<Array2<f64>>)> {
    let scale = 1.0 / batch.len() as f64;
    let mut grads: Vec<Array2<f64>> = weights
        .iter()
        .map(|(_, t)| Array2::zeros(t.raw_dim()))
        .collect();
    let mut total = 0.0;
    for ex in batch {
        let mut g = Graph::new();
        let built = net::build_forward(&mut g, cfg, weights, &ex.x, None, true, false)?;
        let loss = net::build_mse_loss(&mut g, built.output, &ex.y);
        total += g.value(loss)[[0, 0]];
        g.backward(loss);
        for (i, (_, id)) in built.params.iter().enumerate() {
            grads[i] += &(g.grad(*id) * scale);
        }
    }
    Ok((total * scale, grads))
}

/// Result of a finite-difference gradient audit.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Tensor and flat coordinate of the worst error.
    pub worst: Option<(String, usize)>,
    pub per_tensor: Vec<(String, f64)>,
    pub coords_checked: usize,
}

/// Compares analytic gradients of the batch loss against central finite
/// differences on a deterministic sample of coordinates per tensor.
/// Dropout is disabled throughout.
pub fn grad_check(
    cfg: &ModelConfig,
    weights: &Weights,
    batch: &[TrainExample],
    eps: f64,
    samples_per_tensor: usize,
) -> Result<GradCheckReport> {
    assert!(eps > 0.0, "eps must be positive");
    let (_, analytic) = batch_gradients(cfg, weights, batch)?;
    let mut max_rel_err: f64 = 0.0;
    let mut worst = None;
    let mut per_tensor = Vec::new();
    let mut coords_checked = 0;

    let names: Vec<String> = weights.iter().map(|(n, _)| n.to_string()).collect();
    for (ti, name) in names.iter().enumerate() {
        let len = weights.get(name)?.len();
        let take = samples_per_tensor.min(len).max(1);
        let mut tensor_worst: f64 = 0.0;
        for s in 0..take {
            // Evenly spread coordinates, always including the first.
            let flat = if take == 1 {
                0
            } else {
                s * (len - 1) / (take - 1)
            };
            let cols = weights.get(name)?.ncols();
            let (r, c) = (flat / cols, flat % cols);

            let mut probe = weights.clone();
            probe.get_mut(name)?[[r, c]] += eps;
            let up = batch_loss(cfg, &probe, batch)?;
            probe.get_mut(name)?[[r, c]] -= 2.0 * eps;
            let down = batch_loss(cfg, &probe, batch)?;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[ti][[r, c]];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            coords_checked += 1;
            if rel > tensor_worst {
                tensor_worst = rel;
            }
            if rel > max_rel_err {
                max_rel_err = rel;
                worst = Some((name.clone(), flat));
            }
        }
        per_tensor.push((name.clone(), tensor_worst));
    }
    Ok(GradCheckReport {
        max_rel_err,
        worst,
        per_tensor,
        coords_checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn tiny_cfg(variant: AttentionVariant) -> ModelConfig {
        ModelConfig {
            variant,
            layers: 1,
            heads: 1,
            model_dim: 2,
            seq_len: 4,
            dropout: 0.0,
            input_dim: 2,
            ffn_dim: 4,
            factor_k1: 2,
            factor_k2: 2,
            factor_rank: 2,
        }
    }

    fn random_window(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn vanilla_scores_hand_case() {
        // N = 2, d_k = 1, Q = [1, 2]ᵀ, K = [1, 1]ᵀ -> [[1, 1], [2, 2]].
        let q = array![[1.0], [2.0]];
        let k = array![[1.0], [1.0]];
        let s = scaled_dot_scores(&q, &k).unwrap();
        assert_eq!(s, array![[1.0, 1.0], [2.0, 2.0]]);
    }

    #[test]
    fn zero_parameter_synthesizers_give_zero_scores() {
        let x = random_window(4, 2, 1);
        let s = synthesize_scores(
            &x,
            &AttentionParams::Random {
                r: Array2::zeros((4, 4)),
            },
        )
        .unwrap();
        assert_eq!(s, Array2::<f64>::zeros((4, 4)));

        let s = synthesize_scores(
            &x,
            &AttentionParams::Dense {
                w1: Array2::from_elem((2, 2), 0.7),
                b1: Array2::zeros((1, 2)),
                w2: Array2::zeros((2, 4)),
                b2: Array2::zeros((1, 4)),
            },
        )
        .unwrap();
        assert_eq!(s, Array2::<f64>::zeros((4, 4)));
    }

    #[test]
    fn mix_random_is_vanilla_plus_r() {
        let x = random_window(4, 2, 2);
        let wq = array![[0.3, -0.2], [0.4, 0.1]];
        let wk = array![[-0.5, 0.2], [0.3, 0.9]];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = Array2::from_shape_fn((4, 4), |_| rng.random_range(-1.0..1.0));

        let vanilla = synthesize_scores(
            &x,
            &AttentionParams::Vanilla {
                wq: wq.clone(),
                wk: wk.clone(),
            },
        )
        .unwrap();
        let mixed = synthesize_scores(
            &x,
            &AttentionParams::MixRandom {
                wq,
                wk,
                r: r.clone(),
            },
        )
        .unwrap();
        assert_eq!(mixed, vanilla + r);
    }

    #[test]
    fn factorized_random_with_identity_r2_reproduces_random() {
        let x = random_window(4, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = Array2::from_shape_fn((4, 4), |_| rng.random_range(-1.0..1.0));
        let full = synthesize_scores(&x, &AttentionParams::Random { r: r.clone() }).unwrap();
        let factored = synthesize_scores(
            &x,
            &AttentionParams::FactorizedRandom {
                r1: r.clone(),
                r2: Array2::eye(4),
            },
        )
        .unwrap();
        assert_eq!(full, factored);
    }

    #[test]
    fn factorized_dense_tiles_and_multiplies() {
        // d_k = 1, x = [[2],[3]], identity-ish maps: a = [x*1 + 0] (k1 = 1),
        // b = [x*1, x*2] (k2 = 2). Row 0: a=[2], b=[2,4] -> tiled a=[2,2],
        // scores row = [4, 8].
        let x = array![[2.0], [3.0]];
        let s = synthesize_scores(
            &x,
            &AttentionParams::FactorizedDense {
                fa_w: array![[1.0]],
                fa_b: array![[0.0]],
                fb_w: array![[1.0, 2.0]],
                fb_b: array![[0.0, 0.0]],
            },
        )
        .unwrap();
        assert_eq!(s, array![[4.0, 8.0], [9.0, 18.0]]);
    }

    #[test]
    fn attend_hand_cases() {
        // N = 1: softmax of a single visible entry is 1.
        let out = attend(&array![[3.7]], &array![[2.0, 5.0]]).unwrap();
        assert_eq!(out, array![[2.0, 5.0]]);

        // Equal scores: causal row i averages rows 0..=i of V.
        let v = array![[1.0, 0.0], [0.0, 1.0], [4.0, 4.0]];
        let out = attend(&Array2::zeros((3, 3)), &v).unwrap();
        assert_eq!(out.row(0).to_vec(), vec![1.0, 0.0]);
        assert_eq!(out.row(1).to_vec(), vec![0.5, 0.5]);
        let r2 = out.row(2);
        assert!((r2[0] - 5.0 / 3.0).abs() < 1e-12);

        // Softmax(1, 0) on the last (fully visible) row.
        let scores = array![[0.0, 0.0], [1.0, 0.0]];
        let v = array![[1.0, 0.0], [0.0, 1.0]];
        let out = attend(&scores, &v).unwrap();
        assert!((out[[1, 0]] - 0.7310585786300049).abs() < 1e-9);
        assert!((out[[1, 1]] - 0.2689414213699951).abs() < 1e-9);
    }

    #[test]
    fn forward_output_length_matches_seq_len() {
        for variant in AttentionVariant::ALL {
            let cfg = tiny_cfg(variant);
            let w = Weights::init(&cfg, 7).unwrap();
            let out = forward(&cfg, &w, &random_window(4, 2, 8)).unwrap();
            assert_eq!(out.len(), 4, "{variant:?}");
        }
    }

    #[test]
    fn forward_is_causal_under_perturbation() {
        for variant in AttentionVariant::ALL {
            let cfg = tiny_cfg(variant);
            let w = Weights::init(&cfg, 21).unwrap();
            let base_window = random_window(4, 2, 9);
            let base = forward(&cfg, &w, &base_window).unwrap();
            for t in 0..4 {
                let mut perturbed = base_window.clone();
                perturbed[[t, 0]] += 10.0;
                perturbed[[t, 1]] -= 3.0;
                let out = forward(&cfg, &w, &perturbed).unwrap();
                for s in 0..t {
                    assert_eq!(out[s], base[s], "{variant:?}: pos {s} changed by row {t}");
                }
            }
        }
    }

    #[test]
    fn forward_rejects_bad_window_shape() {
        let cfg = tiny_cfg(AttentionVariant::Vanilla);
        let w = Weights::init(&cfg, 0).unwrap();
        assert!(matches!(
            forward(&cfg, &w, &random_window(3, 2, 0)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn forward_reports_non_finite_activations_with_layer() {
        let mut cfg = tiny_cfg(AttentionVariant::Dense);
        cfg.layers = 2;
        let mut w = Weights::init(&cfg, 1).unwrap();
        w.get_mut("l1.ffn.w2").unwrap()[[0, 0]] = f64::INFINITY;
        match forward(&cfg, &w, &random_window(4, 2, 2)) {
            Err(Error::NonFiniteActivation { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("expected NonFiniteActivation, got {other:?}"),
        }
    }

    /// Independent straight-line oracle for a 1-layer 1-head d=2 Vanilla
    /// model, written with plain nested loops and no shared graph code.
    fn straight_line_vanilla(
        w: &Weights,
        window: &[[f64; 2]; 4],
    ) -> Vec<f64> {
        let get = |name: &str| w.get(name).unwrap();
        let n = 4usize;
        let d = 2usize;
        let mm = |a: &Vec<Vec<f64>>, b: &Array2<f64>| -> Vec<Vec<f64>> {
            let (_, bc) = b.dim();
            let mut out = vec![vec![0.0; bc]; a.len()];
            for i in 0..a.len() {
                for jj in 0..bc {
                    let mut acc = 0.0;
                    for kk in 0..a[0].len() {
                        acc += a[i][kk] * b[[kk, jj]];
                    }
                    out[i][jj] = acc;
                }
            }
            out
        };
        let layer_norm = |x: &Vec<Vec<f64>>, g: &Array2<f64>, b: &Array2<f64>| -> Vec<Vec<f64>> {
            let m = x[0].len() as f64;
            x.iter()
                .map(|row| {
                    let mean = row.iter().sum::<f64>() / m;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
                    let inv = 1.0 / (var + crate::graph::LAYER_NORM_EPS).sqrt();
                    row.iter()
                        .enumerate()
                        .map(|(j, v)| (v - mean) * inv * g[[0, j]] + b[[0, j]])
                        .collect()
                })
                .collect()
        };

        let xin: Vec<Vec<f64>> = window.iter().map(|r| r.to_vec()).collect();
        let mut x = mm(&xin, get("input.w"));
        for (i, row) in x.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += get("input.b")[[0, j]] + get("pos")[[i, j]];
            }
        }
        // single head, d_k = d
        let q = mm(&x, get("l0.h0.wq"));
        let k = mm(&x, get("l0.h0.wk"));
        let v = mm(&x, get("l0.h0.wv"));
        let scale = 1.0 / (d as f64).sqrt();
        let mut attn_out = vec![vec![0.0; d]; n];
        for i in 0..n {
            let mut logits = vec![0.0; i + 1];
            for (j, logit) in logits.iter_mut().enumerate() {
                let mut acc = 0.0;
                for t in 0..d {
                    acc += q[i][t] * k[j][t];
                }
                *logit = acc * scale;
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let denom: f64 = exps.iter().sum();
            for t in 0..d {
                attn_out[i][t] = exps
                    .iter()
                    .enumerate()
                    .map(|(j, e)| e / denom * v[j][t])
                    .sum();
            }
        }
        let mut attn = mm(&attn_out, get("l0.attn_out.w"));
        for row in attn.iter_mut() {
            for (j, val) in row.iter_mut().enumerate() {
                *val += get("l0.attn_out.b")[[0, j]];
            }
        }
        let res: Vec<Vec<f64>> = x
            .iter()
            .zip(&attn)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect())
            .collect();
        let x1 = layer_norm(&res, get("l0.ln1.g"), get("l0.ln1.b"));

        let mut h = mm(&x1, get("l0.ffn.w1"));
        for row in h.iter_mut() {
            for (j, val) in row.iter_mut().enumerate() {
                *val = (*val + get("l0.ffn.b1")[[0, j]]).max(0.0);
            }
        }
        let mut f = mm(&h, get("l0.ffn.w2"));
        for row in f.iter_mut() {
            for (j, val) in row.iter_mut().enumerate() {
                *val += get("l0.ffn.b2")[[0, j]];
            }
        }
        let res2: Vec<Vec<f64>> = x1
            .iter()
            .zip(&f)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect())
            .collect();
        let x2 = layer_norm(&res2, get("l0.ln2.g"), get("l0.ln2.b"));

        x2.iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, v)| v * w.get("head.w").unwrap()[[j, 0]])
                    .sum::<f64>()
                    + w.get("head.b").unwrap()[[0, 0]]
            })
            .collect()
    }

    #[test]
    fn forward_matches_independent_straight_line_oracle() {
        let cfg = tiny_cfg(AttentionVariant::Vanilla);
        let w = Weights::init(&cfg, 31).unwrap();
        let window = [[0.4, -0.2], [0.1, 0.9], [-0.6, 0.3], [0.2, 0.2]];
        let flat: Vec<f64> = window.iter().flatten().copied().collect();
        let arr = Array2::from_shape_vec((4, 2), flat).unwrap();
        let got = forward(&cfg, &w, &arr).unwrap();
        let want = straight_line_vanilla(&w, &window);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn grad_check_tiny_models() {
        // Full per-variant audit at the acceptance scale lives in the
        // acceptance suite; this is a quick smoke at d=2.
        for variant in [AttentionVariant::Dense, AttentionVariant::MixRandom] {
            let cfg = tiny_cfg(variant);
            let w = Weights::init(&cfg, 13).unwrap();
            let batch = vec![TrainExample {
                x: random_window(4, 2, 14),
                y: random_window(4, 1, 15),
            }];
            let report = grad_check(&cfg, &w, &batch, 1e-5, 3).unwrap();
            assert!(
                report.max_rel_err <= 1e-4,
                "{variant:?}: {}",
                report.max_rel_err
            );
        }
    }

    #[test]
    fn linear_path_gradient_is_exact_to_1e7() {
        // Linear-only check: no attention, straight graph of the loss
        // against a linear map, where central differences are essentially
        // exact at double precision.
        let mut g = Graph::new();
        let x = g.constant(random_window(6, 3, 40));
        let w = g.parameter(random_window(3, 1, 41));
        let y = g.constant(random_window(6, 1, 42));
        let pred = g.matmul(x, w);
        let diff = g.sub(pred, y);
        let sq = g.mul(diff, diff);
        let loss = g.mean_all(sq);
        g.backward(loss);
        let analytic = g.grad(w);

        let eps = 1e-6;
        let base_w = g.value(w).clone();
        for flat in 0..3 {
            let eval = |delta: f64| {
                let mut g2 = Graph::new();
                let x2 = g2.constant(random_window(6, 3, 40));
                let mut wv = base_w.clone();
                wv[[flat, 0]] += delta;
                let w2 = g2.constant(wv);
                let y2 = g2.constant(random_window(6, 1, 42));
                let p = g2.matmul(x2, w2);
                let d = g2.sub(p, y2);
                let s = g2.mul(d, d);
                let l = g2.mean_all(s);
                g2.value(l)[[0, 0]]
            };
            let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
            let a = analytic[[flat, 0]];
            assert!(
                (a - numeric).abs() / a.abs().max(1.0) <= 1e-7,
                "{a} vs {numeric}"
            );
        }
    }

    #[test]
    fn unused_parameter_has_exactly_zero_gradient() {
        let mut g = Graph::new();
        let used = g.parameter(array![[1.0, 2.0]]);
        let unused = g.parameter(array![[5.0, 6.0]]);
        let loss = g.mean_all(used);
        g.backward(loss);
        assert_eq!(g.grad(unused), Array2::<f64>::zeros((1, 2)));
        let _ = unused;
    }

    #[test]
    fn predict_series_aligns_one_day_ahead() {
        let cfg = tiny_cfg(AttentionVariant::Random);
        let w = Weights::init(&cfg, 50).unwrap();
        let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        let dates: Vec<NaiveDate> = (0..6)
            .map(|i| start.checked_add_days(Days::new(i)).unwrap())
            .collect();
        let frame = FeatureFrame::new(
            dates.clone(),
            vec!["a".into(), "b".into(), "y".into()],
            vec![
                (0..6).map(|i| i as f64 * 0.1).collect(),
                (0..6).map(|i| 1.0 - i as f64 * 0.05).collect(),
                vec![0.5; 6],
            ],
            "y",
        )
        .unwrap();
        let series = predict_series(&cfg, &w, &frame).unwrap();
        assert_eq!(series.predictions.len(), 3); // rows 3, 4, 5 anchor windows
        assert_eq!(series.anchor_rows, vec![3, 4, 5]);
        assert_eq!(
            series.target_dates[0],
            dates[3].checked_add_days(Days::new(1)).unwrap()
        );
    }
}
