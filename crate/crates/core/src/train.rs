//! Optimizer loop with early stopping, and grid search over the
//! hyperparameter space.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::ingest::FeatureFrame;
use crate::model::{
    self, design_matrix, DropoutMasks, ModelConfig, TrainExample, Weights,
};

/// Optimizer and stopping parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            weight_decay: 1e-6,
            batch_size: 4,
            max_epochs: 10_000,
            patience: 200,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::InvalidConfig(format!(
                "patience {} must be below max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

/// Per-epoch record of one training run. Epochs are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch - 1]
    }
}

/// Adam with decoupled weight decay. The decay shrinks weights directly
/// (not scaled by the learning rate), so a zero learning rate with nonzero
/// decay still decays.
pub struct Adam {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64, weights: &Weights) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: weights.iter().map(|(_, t)| Array2::zeros(t.raw_dim())).collect(),
            v: weights.iter().map(|(_, t)| Array2::zeros(t.raw_dim())).collect(),
        }
    }

    pub fn step(&mut self, weights: &mut Weights, grads: &[Array2<f64>]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, (_, w)) in weights.iter_mut().enumerate() {
            let g = &grads[i];
            self.m[i] = &self.m[i] * self.beta1 + g * (1.0 - self.beta1);
            self.v[i] = &self.v[i] * self.beta2 + &g.mapv(|x| x * x) * (1.0 - self.beta2);
            let m_hat = &self.m[i] / bc1;
            let v_hat = &self.v[i] / bc2;
            let update = m_hat / (v_hat.mapv(f64::sqrt) + self.eps);
            *w -= &(update * self.lr);
            if self.weight_decay != 0.0 {
                *w -= &(w.clone() * self.weight_decay);
            }
        }
    }
}

/// Stride-1 sliding windows over a frame's design matrix.
pub fn window_examples(frame: &FeatureFrame, seq_len: usize) -> Result<Vec<TrainExample>> {
    let dm = design_matrix(frame)?;
    let rows = dm.features.nrows();
    if rows < seq_len + 1 {
        return Err(Error::FrameTooShort {
            rows,
            need: seq_len + 1,
            seq_len,
        });
    }
    let mut out = Vec::with_capacity(rows - seq_len + 1);
    for start in 0..=(rows - seq_len) {
        let x = dm.features.slice(ndarray::s![start..start + seq_len, ..]).to_owned();
        let y = Array2::from_shape_vec(
            (seq_len, 1),
            dm.target[start..start + seq_len].to_vec(),
        )
        .expect("window shape");
        out.push(TrainExample { x, y });
    }
    Ok(out)
}

fn sample_masks(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Option<DropoutMasks> {
    if cfg.dropout == 0.0 {
        return None;
    }
    let keep = 1.0 - cfg.dropout;
    let shape = (cfg.seq_len, cfg.model_dim);
    let draw = |rng: &mut ChaCha8Rng| {
        Array2::from_shape_fn(shape, |_| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        })
    };
    Some(DropoutMasks {
        attn: (0..cfg.layers).map(|_| draw(rng)).collect(),
        ffn: (0..cfg.layers).map(|_| draw(rng)).collect(),
    })
}

/// One optimizer step over a batch; returns the mean batch loss (with
/// dropout active).
fn train_step(
    cfg: &ModelConfig,
    weights: &mut Weights,
    adam: &mut Adam,
    batch: &[TrainExample],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let scale = 1.0 / batch.len() as f64;
    let mut grads: Vec<Array2<f64>> = weights
        .iter()
        .map(|(_, t)| Array2::zeros(t.raw_dim()))
        .collect();
    let mut total = 0.0;
    for ex in batch {
        let masks = sample_masks(cfg, rng);
        let mut g = Graph::new();
        let built = model::build_forward(&mut g, cfg, weights, &ex.x, masks.as_ref(), true, false)?;
        let loss = model::build_mse_loss(&mut g, built.output, &ex.y);
        total += g.value(loss)[[0, 0]];
        g.backward(loss);
        for (i, (_, id)) in built.params.iter().enumerate() {
            grads[i] += &(g.grad(*id) * scale);
        }
    }
    adam.step(weights, &grads);
    Ok(total * scale)
}

/// RMSE of final-position predictions over a window set, evaluation mode.
pub fn validation_rmse(cfg: &ModelConfig, weights: &Weights, windows: &[TrainExample]) -> Result<f64> {
    let mut sum_sq = 0.0;
    for ex in windows {
        let out = model::forward(cfg, weights, &ex.x)?;
        let last = cfg.seq_len - 1;
        let err = out[last] - ex.y[[last, 0]];
        sum_sq += err * err;
    }
    Ok((sum_sq / windows.len() as f64).sqrt())
}

/// RMSE over every position of every window, evaluation mode.
pub fn full_rmse(cfg: &ModelConfig, weights: &Weights, windows: &[TrainExample]) -> Result<f64> {
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for ex in windows {
        let out = model::forward(cfg, weights, &ex.x)?;
        for (t, o) in out.iter().enumerate() {
            let err = o - ex.y[[t, 0]];
            sum_sq += err * err;
        }
        count += out.len();
    }
    Ok((sum_sq / count as f64).sqrt())
}

/// Trains with Adam over stride-1 windows, early-stopping on validation RMSE
/// and restoring the best-epoch weights.
pub fn train(
    mc: &ModelConfig,
    tc: &TrainConfig,
    train_frame: &FeatureFrame,
    val_frame: &FeatureFrame,
) -> Result<(Weights, TrainHistory)> {
    tc.validate()?;
    let train_windows = window_examples(train_frame, mc.seq_len)?;
    let val_windows = window_examples(val_frame, mc.seq_len)?;
    let weights = Weights::init(mc, tc.seed)?;
    run_training_loop(mc, tc, weights, &train_windows, |cfg, w, _| {
        validation_rmse(cfg, w, &val_windows)
    })
}

/// The training engine, generic over the validation scorer so stopping
/// behaviour can be exercised against arbitrary validation streams.
pub fn run_training_loop(
    mc: &ModelConfig,
    tc: &TrainConfig,
    mut weights: Weights,
    train_windows: &[TrainExample],
    mut validate: impl FnMut(&ModelConfig, &Weights, usize) -> Result<f64>,
) -> Result<(Weights, TrainHistory)> {
    mc.validate()?;
    tc.validate()?;
    let mut adam = Adam::new(tc.learning_rate, tc.weight_decay, &weights);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed ^ 0x9e37_79b9_7f4a_7c15);

    let mut history = TrainHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        stopped_epoch: 0,
    };
    let mut best_val = f64::INFINITY;
    let mut best_weights = weights.clone();

    for epoch in 1..=tc.max_epochs {
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in train_windows.chunks(tc.batch_size) {
            let loss = train_step(mc, &mut weights, &mut adam, batch, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            epoch_loss += loss;
            batches += 1;
        }
        history.train_loss.push(epoch_loss / batches as f64);

        let val = validate(mc, &weights, epoch)?;
        if !val.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.val_loss.push(val);
        if val < best_val {
            best_val = val;
            best_weights = weights.clone();
            history.best_epoch = epoch;
        }
        history.stopped_epoch = epoch;
        if epoch - history.best_epoch >= tc.patience {
            break;
        }
    }
    Ok((best_weights, history))
}

/// The hyperparameter axes swept by [`grid_search`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub layers: Vec<usize>,
    pub heads: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub dropout: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            layers: vec![1, 2, 4, 8],
            heads: vec![2, 4, 8],
            batch_size: vec![4, 8, 16, 32, 64],
            dropout: vec![0.1, 0.2],
        }
    }
}

impl HyperGrid {
    /// Cartesian product in a fixed axis order.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &layers in &self.layers {
            for &heads in &self.heads {
                for &batch_size in &self.batch_size {
                    for &dropout in &self.dropout {
                        out.push(GridPoint {
                            layers,
                            heads,
                            batch_size,
                            dropout,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn contains(&self, p: &GridPoint) -> bool {
        self.layers.contains(&p.layers)
            && self.heads.contains(&p.heads)
            && self.batch_size.contains(&p.batch_size)
            && self.dropout.contains(&p.dropout)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub layers: usize,
    pub heads: usize,
    pub batch_size: usize,
    pub dropout: f64,
}

impl GridPoint {
    pub fn label(&self) -> String {
        format!(
            "l{}_h{}_b{}_d{}",
            self.layers, self.heads, self.batch_size, self.dropout
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridEntry {
    pub point: GridPoint,
    pub best_val_rmse: f64,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best_model: ModelConfig,
    pub best_train: TrainConfig,
    /// Every grid point with its score, ranked best first.
    pub leaderboard: Vec<GridEntry>,
    /// Best-epoch weights per point, aligned with the leaderboard.
    pub checkpoints: Vec<Weights>,
}

/// Leaderboard ordering: lowest validation RMSE first; ties break toward
/// fewer layers, fewer heads, smaller batches, lower dropout.
fn rank_order(a: &GridEntry, b: &GridEntry) -> std::cmp::Ordering {
    a.best_val_rmse
        .partial_cmp(&b.best_val_rmse)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.point.layers.cmp(&b.point.layers))
        .then(a.point.heads.cmp(&b.point.heads))
        .then(a.point.batch_size.cmp(&b.point.batch_size))
        .then(
            a.point
                .dropout
                .partial_cmp(&b.point.dropout)
                .unwrap_or(std::cmp::Ordering::Equal),
        )
}

/// Seed for grid job `index`, derived from the base seed (splitmix64 step).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Trains one model per grid point and ranks by best validation RMSE.
/// Ties break toward fewer layers, fewer heads, smaller batches, lower
/// dropout. Jobs are independent; `parallel` fans them out with a
/// deterministic merge.
pub fn grid_search(
    grid: &HyperGrid,
    mc_base: &ModelConfig,
    tc_base: &TrainConfig,
    train_frame: &FeatureFrame,
    val_frame: &FeatureFrame,
    parallel: bool,
) -> Result<GridOutcome> {
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::EmptyGrid);
    }

    let run_one = |(index, point): (usize, &GridPoint)| -> Result<(GridEntry, Weights)> {
        let mut mc = mc_base.clone();
        mc.layers = point.layers;
        mc.heads = point.heads;
        mc.dropout = point.dropout;
        let mut tc = tc_base.clone();
        tc.batch_size = point.batch_size;
        tc.seed = derive_seed(tc_base.seed, index as u64);
        let (weights, history) = train(&mc, &tc, train_frame, val_frame).map_err(|e| {
            Error::GridPoint {
                coords: point.label(),
                source: Box::new(e),
            }
        })?;
        Ok((
            GridEntry {
                point: *point,
                best_val_rmse: history.best_val_loss(),
                best_epoch: history.best_epoch,
                stopped_epoch: history.stopped_epoch,
            },
            weights,
        ))
    };

    let mut ranked: Vec<(GridEntry, Weights)> = if parallel {
        points
            .par_iter()
            .enumerate()
            .map(run_one)
            .collect::<Result<Vec<_>>>()?
    } else {
        points
            .iter()
            .enumerate()
            .map(run_one)
            .collect::<Result<Vec<_>>>()?
    };

    ranked.sort_by(|(a, _), (b, _)| rank_order(a, b));

    let best = ranked[0].0.clone();
    let mut best_model = mc_base.clone();
    best_model.layers = best.point.layers;
    best_model.heads = best.point.heads;
    best_model.dropout = best.point.dropout;
    let mut best_train = tc_base.clone();
    best_train.batch_size = best.point.batch_size;
    let (leaderboard, checkpoints) = ranked.into_iter().unzip();
    Ok(GridOutcome {
        best_model,
        best_train,
        leaderboard,
        checkpoints,
    })
}
