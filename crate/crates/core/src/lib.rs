//! Forecasting next-day Bitcoin volatility spikes from on-chain features and
//! whale-alert tweets, with a decoder-only transformer whose attention scores
//! come from pluggable synthesizers, plus the evaluation and trading-strategy
//! machinery around it.

pub mod backtest;
pub mod error;
pub mod eval;
pub mod features;
pub mod graph;
pub mod ingest;
pub mod model;
pub mod train;
pub mod whale;

pub use error::{Error, Result};
pub use ingest::{FeatureFrame, FillPolicy, SplitBoundaries};
pub use model::{
    AttentionParams, AttentionVariant, ForecastSeries, ModelConfig, Weights,
};
pub use train::{HyperGrid, TrainConfig, TrainHistory};
