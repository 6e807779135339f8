//! The pipeline configuration file: one TOML document wiring every stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use volspike_core::backtest::StrategyKind;
use volspike_core::features::TransformMethod;
use volspike_core::model::AttentionVariant;
use volspike_core::{HyperGrid, SplitBoundaries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root seed; every random stream derives from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub split: SplitConfig,
    #[serde(default)]
    pub fill: FillConfig,
    pub features: FeaturesConfig,
    #[serde(default)]
    pub whale: WhaleConfig,
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub backtest: BacktestSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Raw daily dataset: `date` column plus OHLCV and any extra features.
    pub dataset: PathBuf,
    /// Newline-delimited `<ISO date>\t<tweet>` corpus (parse-tweets input).
    #[serde(default)]
    pub tweet_corpus: Option<PathBuf>,
    /// Daily whale CSV merged during prepare (parse-tweets output).
    #[serde(default)]
    pub whale_csv: Option<PathBuf>,
    /// Prepared feature CSV: prepare writes it, later stages read it.
    pub features_csv: PathBuf,
    #[serde(default = "default_target_column")]
    pub target_column: String,
}

fn default_target_column() -> String {
    "vol_future".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_end: NaiveDate,
    pub val_end: NaiveDate,
    pub test_end: NaiveDate,
}

impl SplitConfig {
    pub fn boundaries(&self) -> SplitBoundaries {
        SplitBoundaries {
            train_end: self.train_end,
            val_end: self.val_end,
            test_end: self.test_end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FillConfig {
    /// Columns repaired with first-available / carry-forward values.
    #[serde(default)]
    pub backfill: Vec<String>,
    /// Columns whose pre-availability period counts as zero.
    #[serde(default)]
    pub zero: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesConfig {
    #[serde(default = "default_ema_window")]
    pub ema_window: usize,
    #[serde(default = "default_ema_smoothing")]
    pub ema_smoothing: f64,
    /// Trailing returns per realized-volatility estimate.
    #[serde(default = "default_vol_window")]
    pub vol_window: usize,
    #[serde(default = "default_annualization")]
    pub annualization: f64,
    #[serde(default = "default_spike_threshold")]
    pub spike_threshold: f64,
    /// Standardization applied to the volatility target.
    #[serde(default = "default_target_transform")]
    pub target_transform: TransformMethod,
    /// Per-column standardization recipes.
    #[serde(default)]
    pub transforms: BTreeMap<String, TransformMethod>,
    /// Model input columns, in order.
    pub feature_columns: Vec<String>,
}

fn default_ema_window() -> usize {
    10
}
fn default_ema_smoothing() -> f64 {
    2.0
}
fn default_vol_window() -> usize {
    7
}
fn default_annualization() -> f64 {
    365.0
}
fn default_spike_threshold() -> f64 {
    1.0
}
fn default_target_transform() -> TransformMethod {
    TransformMethod::Pow14
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhaleConfig {
    /// Exchange registry; aggregate whale flows depend on this list.
    pub exchanges: Vec<String>,
}

impl Default for WhaleConfig {
    fn default() -> Self {
        Self {
            exchanges: vec![
                "Bitfinex".into(),
                "Gemini".into(),
                "Binance".into(),
                "Coinbase".into(),
                "Kraken".into(),
                "Huobi".into(),
                "OKEx".into(),
                "Bitstamp".into(),
                "Poloniex".into(),
                "Bittrex".into(),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub variant: AttentionVariant,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_heads")]
    pub heads: usize,
    #[serde(default = "default_model_dim")]
    pub model_dim: usize,
    #[serde(default = "default_seq_len")]
    pub seq_len: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default)]
    pub ffn_dim: Option<usize>,
    #[serde(default)]
    pub factor_k1: Option<usize>,
    #[serde(default)]
    pub factor_k2: Option<usize>,
    #[serde(default = "default_factor_rank")]
    pub factor_rank: usize,
}

fn default_layers() -> usize {
    4
}
fn default_heads() -> usize {
    4
}
fn default_model_dim() -> usize {
    64
}
fn default_seq_len() -> usize {
    64
}
fn default_dropout() -> f64 {
    0.2
}
fn default_factor_rank() -> usize {
    8
}

impl ModelSection {
    /// Resolves to a core config; `input_dim` comes from the feature list.
    pub fn to_model_config(&self, input_dim: usize) -> volspike_core::ModelConfig {
        let (k1_auto, k2_auto) = volspike_core::ModelConfig::factor_pair(self.seq_len);
        volspike_core::ModelConfig {
            variant: self.variant,
            layers: self.layers,
            heads: self.heads,
            model_dim: self.model_dim,
            seq_len: self.seq_len,
            dropout: self.dropout,
            input_dim,
            ffn_dim: self.ffn_dim.unwrap_or(4 * self.model_dim),
            factor_k1: self.factor_k1.unwrap_or(k1_auto),
            factor_k2: self.factor_k2.unwrap_or(k2_auto),
            factor_rank: self.factor_rank,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
}

fn default_lr() -> f64 {
    1e-5
}
fn default_weight_decay() -> f64 {
    1e-6
}
fn default_batch_size() -> usize {
    4
}
fn default_max_epochs() -> usize {
    10_000
}
fn default_patience() -> usize {
    200
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            weight_decay: default_weight_decay(),
            batch_size: default_batch_size(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> volspike_core::TrainConfig {
        volspike_core::TrainConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_grid_layers")]
    pub layers: Vec<usize>,
    #[serde(default = "default_grid_heads")]
    pub heads: Vec<usize>,
    #[serde(default = "default_grid_batch")]
    pub batch_size: Vec<usize>,
    #[serde(default = "default_grid_dropout")]
    pub dropout: Vec<f64>,
    #[serde(default)]
    pub parallel: bool,
}

fn default_grid_layers() -> Vec<usize> {
    vec![1, 2, 4, 8]
}
fn default_grid_heads() -> Vec<usize> {
    vec![2, 4, 8]
}
fn default_grid_batch() -> Vec<usize> {
    vec![4, 8, 16, 32, 64]
}
fn default_grid_dropout() -> Vec<f64> {
    vec![0.1, 0.2]
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            layers: default_grid_layers(),
            heads: default_grid_heads(),
            batch_size: default_grid_batch(),
            dropout: default_grid_dropout(),
            parallel: false,
        }
    }
}

impl GridSection {
    pub fn to_hyper_grid(&self) -> HyperGrid {
        HyperGrid {
            layers: self.layers.clone(),
            heads: self.heads.clone(),
            batch_size: self.batch_size.clone(),
            dropout: self.dropout.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Prediction thresholds for the sweep; the first is the headline value.
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
}

fn default_thresholds() -> Vec<f64> {
    vec![1.0, 1.1, 1.2, 1.3]
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            thresholds: default_thresholds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestSection {
    #[serde(default = "default_strategies")]
    pub strategies: Vec<StrategyKind>,
    #[serde(default = "default_capital")]
    pub initial_capital: f64,
    #[serde(default = "default_fraction")]
    pub position_fraction: f64,
    #[serde(default = "default_fee")]
    pub fee_rate: f64,
    #[serde(default = "default_spike_threshold")]
    pub spike_threshold: f64,
    /// Run each strategy unscaled, volatility-scaled, or both.
    #[serde(default = "default_scalings")]
    pub scalings: Vec<Scaling>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    Unscaled,
    Scaled,
}

impl Scaling {
    pub fn tag(self) -> &'static str {
        match self {
            Scaling::Unscaled => "u",
            Scaling::Scaled => "s",
        }
    }
}

fn default_strategies() -> Vec<StrategyKind> {
    StrategyKind::ALL.to_vec()
}
fn default_capital() -> f64 {
    10_000.0
}
fn default_fraction() -> f64 {
    0.05
}
fn default_fee() -> f64 {
    0.001
}
fn default_scalings() -> Vec<Scaling> {
    vec![Scaling::Unscaled, Scaling::Scaled]
}

impl Default for BacktestSection {
    fn default() -> Self {
        Self {
            strategies: default_strategies(),
            initial_capital: default_capital(),
            position_fraction: default_fraction(),
            fee_rate: default_fee(),
            spike_threshold: default_spike_threshold(),
            scalings: default_scalings(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            anyhow::anyhow!("cannot read config {}: {e}", path.as_ref().display())
        })?;
        let cfg: PipelineConfig = toml::from_str(&text)?;
        Ok(cfg)
    }

    /// Canonical serialized form: parse -> serialize is a fixed point.
    #[cfg_attr(not(test), allow(dead_code))]
    pub fn canonical(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Collects every violated field; empty means valid.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.split.train_end < self.split.val_end && self.split.val_end < self.split.test_end)
        {
            v.push("split: boundaries must satisfy train_end < val_end < test_end".into());
        }
        if self.features.feature_columns.is_empty() {
            v.push("features.feature_columns: must not be empty".into());
        }
        if self
            .features
            .feature_columns
            .contains(&self.data.target_column)
        {
            v.push(format!(
                "features.feature_columns: must not contain the target column {}",
                self.data.target_column
            ));
        }
        if self.features.vol_window < 2 {
            v.push("features.vol_window: must be at least 2".into());
        }
        if self.features.ema_window == 0 {
            v.push("features.ema_window: must be positive".into());
        }
        if self.features.spike_threshold <= 0.0 {
            v.push("features.spike_threshold: must be positive".into());
        }
        for col in &self.fill.backfill {
            if self.fill.zero.contains(col) {
                v.push(format!("fill: column {col} appears in both backfill and zero"));
            }
        }
        if self.whale.exchanges.is_empty() {
            v.push("whale.exchanges: must not be empty".into());
        }
        let mc = self
            .model
            .to_model_config(self.features.feature_columns.len());
        if let Err(e) = mc.validate() {
            v.push(format!("model: {e}"));
        }
        let tc = self.train.to_train_config(self.seed);
        if let Err(e) = tc.validate() {
            v.push(format!("train: {e}"));
        }
        if self.grid.layers.is_empty()
            || self.grid.heads.is_empty()
            || self.grid.batch_size.is_empty()
            || self.grid.dropout.is_empty()
        {
            v.push("grid: every axis needs at least one value".into());
        }
        if self.eval.thresholds.is_empty() {
            v.push("eval.thresholds: must not be empty".into());
        }
        if !(self.backtest.position_fraction > 0.0 && self.backtest.position_fraction <= 1.0) {
            v.push("backtest.position_fraction: must be in (0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.backtest.fee_rate) {
            v.push("backtest.fee_rate: must be in [0, 1)".into());
        }
        if self.backtest.initial_capital <= 0.0 {
            v.push("backtest.initial_capital: must be positive".into());
        }
        if self.backtest.strategies.is_empty() || self.backtest.scalings.is_empty() {
            v.push("backtest: strategies and scalings must not be empty".into());
        }
        v
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.out_dir.join("checkpoint.json")
    }
}
