//! Implementations of the pipeline subcommands. Every artifact is a
//! deterministic function of (config, seed, inputs): no timestamps, no
//! ambient randomness.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use chrono::NaiveDate;

use volspike_core::backtest::{portfolio_metrics, run_backtest, StrategyConfig};
use volspike_core::eval::{
    confusion_at_threshold, correlation_stats, feature_ablation, feature_means, rmse,
    spike_metrics, threshold_sweep,
};
use volspike_core::features::{
    apply_transform, candle_spreads, ema, label_spikes, log_returns, realized_volatility,
    EmaParams, SpikeRule, TransformMethod, VolatilityParams,
};
use volspike_core::ingest::{
    fill_missing, is_missing, load_dataset, save_dataset, split_by_date, FeatureFrame, FillPolicy,
    MISSING,
};
use volspike_core::model::{
    load_checkpoint, predict_series, save_checkpoint, ModelConfig, Weights,
};
use volspike_core::train::{grid_search, train};
use volspike_core::whale::{
    aggregate_daily, net_exchange_flow, parse_corpus, save_daily_flows, ExchangeRegistry,
};

use crate::config::{PipelineConfig, Scaling};

fn ensure_out_dir(cfg: &PipelineConfig) -> anyhow::Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    Ok(())
}

fn write_text(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// parse-tweets
// ---------------------------------------------------------------------------

pub fn cmd_parse_tweets(cfg: &PipelineConfig) -> anyhow::Result<()> {
    ensure_out_dir(cfg)?;
    let corpus_path = cfg
        .data
        .tweet_corpus
        .as_ref()
        .ok_or_else(|| anyhow!("config: data.tweet_corpus is required for parse-tweets"))?;
    let corpus = std::fs::read_to_string(corpus_path)
        .with_context(|| format!("reading corpus {}", corpus_path.display()))?;
    let registry = ExchangeRegistry::new(cfg.whale.exchanges.iter().map(|s| s.as_str()));
    let (transfers, stats) = parse_corpus(&corpus, &registry)?;

    let out_path = cfg
        .data
        .whale_csv
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("whale_daily.csv"));
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent)?;
    }

    if transfers.is_empty() {
        save_daily_flows(&[], &out_path)?;
        println!(
            "no transfers parsed ({} lines, {} filtered, {} malformed); wrote empty {}",
            stats.lines,
            stats.filtered_out,
            stats.malformed,
            out_path.display()
        );
        return Ok(());
    }
    let start = transfers.iter().map(|(t, _)| t.timestamp).min().expect("non-empty");
    let end = transfers.iter().map(|(t, _)| t.timestamp).max().expect("non-empty");
    let flows = aggregate_daily(&transfers, start, end);
    save_daily_flows(&flows, &out_path)?;

    let peak_net = flows
        .iter()
        .map(net_exchange_flow)
        .fold(0.0_f64, f64::max);
    println!(
        "parsed {} transfers over {} days ({} lines, {} filtered, {} malformed, {} unregistered #-entities); peak |BTCplus-BTCminus| = {peak_net}",
        stats.transfers,
        flows.len(),
        stats.lines,
        stats.filtered_out,
        stats.malformed,
        stats.unknown_hash_entities,
    );
    println!("wrote {}", out_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

/// Applies a transform to the present cells only, preserving missing markers.
fn transform_with_missing(values: &[f64], m: TransformMethod) -> anyhow::Result<Vec<f64>> {
    let present: Vec<f64> = values.iter().copied().filter(|v| !is_missing(*v)).collect();
    let transformed = apply_transform(&present, m)?;
    let mut it = transformed.into_iter();
    Ok(values
        .iter()
        .map(|v| {
            if is_missing(*v) {
                MISSING
            } else {
                it.next().expect("one output per present cell")
            }
        })
        .collect())
}

/// Derived columns get warm-up gaps repaired by backfill unless the config
/// explicitly routes them to the zero set.
fn derived_backfill(cfg: &PipelineConfig, derived: &[String]) -> Vec<String> {
    let mut backfill = cfg.fill.backfill.clone();
    for name in derived {
        if !backfill.contains(name) && !cfg.fill.zero.contains(name) {
            backfill.push(name.clone());
        }
    }
    backfill
}

pub fn cmd_prepare(cfg: &PipelineConfig) -> anyhow::Result<()> {
    ensure_out_dir(cfg)?;
    let mut frame = load_dataset(&cfg.data.dataset, &cfg.data.target_column)?;

    // Merge the daily whale flows by date; days outside the whale CSV's
    // range stay missing and fall to the fill policy (zero, per config).
    if let Some(whale_path) = &cfg.data.whale_csv {
        if whale_path.exists() {
            let whale = load_dataset(whale_path, "BTCminus")?;
            for name in ["BTCminus", "BTCplus", "USDminus", "USDplus"] {
                let col = whale.column(name)?;
                let mut aligned = vec![MISSING; frame.len()];
                for (i, date) in frame.dates().iter().enumerate() {
                    if let Ok(offset) = usize::try_from(
                        (*date - whale.dates()[0]).num_days(),
                    ) {
                        if offset < whale.len() {
                            aligned[i] = col[offset];
                        }
                    }
                }
                frame.set_column(name, aligned)?;
            }
        } else {
            bail!("whale csv {} does not exist; run parse-tweets first", whale_path.display());
        }
    }

    for required in ["open", "high", "low", "close"] {
        if !frame.has_column(required) {
            bail!("dataset is missing the {required} column needed for indicators");
        }
    }
    let closes = frame.column("close")?.to_vec();
    if let Some(i) = closes.iter().position(|c| is_missing(*c)) {
        bail!("close column has a missing value at row {i}; cannot derive indicators");
    }
    let n = frame.len();

    // Technical indicators on the raw series.
    let returns = log_returns(&closes)?;
    let mut lr_col = vec![MISSING; n];
    lr_col[1..].copy_from_slice(&returns);

    let ema_name = format!("ema{}", cfg.features.ema_window);
    let ema_col = ema(
        &closes,
        &EmaParams {
            n: cfg.features.ema_window,
            s: cfg.features.ema_smoothing,
        },
    )?;

    let mut hl_col = vec![MISSING; n];
    let mut co_col = vec![MISSING; n];
    let (open_c, high_c, low_c) = (
        frame.column("open")?.to_vec(),
        frame.column("high")?.to_vec(),
        frame.column("low")?.to_vec(),
    );
    for i in 0..n {
        let (hl, co) = candle_spreads(open_c[i], high_c[i], low_c[i], closes[i])?;
        hl_col[i] = hl;
        co_col[i] = co;
    }

    // Realized volatility of the trailing return window, then the target
    // standardization; day t uses returns ending at day t.
    let vp = VolatilityParams {
        window: cfg.features.vol_window,
        annualization: cfg.features.annualization,
    };
    let rv = realized_volatility(&returns, &vp)?;
    let rv_t = apply_transform(&rv, cfg.features.target_transform)?;
    let mut vol_col = vec![MISSING; n];
    vol_col[cfg.features.vol_window..].copy_from_slice(&rv_t);

    // Next-day target and companions, shifted back one day.
    let mut vol_future = vec![MISSING; n];
    vol_future[..n - 1].copy_from_slice(&vol_col[1..]);
    let mut ret_future = vec![MISSING; n];
    ret_future[..n - 1].copy_from_slice(&lr_col[1..]);

    frame.set_column("log_returns", lr_col)?;
    frame.set_column(&ema_name, ema_col)?;
    frame.set_column("HL_sprd", hl_col)?;
    frame.set_column("CO_sprd", co_col)?;
    frame.set_column("vol", vol_col)?;
    frame.set_column(&cfg.data.target_column, vol_future)?;
    frame.set_column("ret_future", ret_future)?;
    frame.set_column("close_raw", closes.clone())?;

    // The last day has no next-day target.
    frame.truncate_tail(1);

    let derived = vec![
        "log_returns".to_string(),
        ema_name,
        "vol".to_string(),
        cfg.data.target_column.clone(),
        "ret_future".to_string(),
    ];
    let policy = FillPolicy::new(derived_backfill(cfg, &derived), cfg.fill.zero.clone())?;
    let mut frame = fill_missing(&frame, &policy)?;

    // Per-column standardization recipes.
    for (name, method) in &cfg.features.transforms {
        let col = frame.column(name)?.to_vec();
        let transformed = transform_with_missing(&col, *method)
            .with_context(|| format!("transforming column {name}"))?;
        frame.set_column(name, transformed)?;
    }

    // Spike labels for the target day.
    let spikes = label_spikes(
        frame.target()?,
        frame.column("ret_future")?,
        &SpikeRule {
            threshold: cfg.features.spike_threshold,
        },
    )?;
    frame.set_column(
        "spike_future",
        spikes.iter().map(|s| if *s { 1.0 } else { 0.0 }).collect(),
    )?;

    // Every model input must exist.
    for col in &cfg.features.feature_columns {
        if !frame.has_column(col) {
            bail!("feature_columns references {col}, which is not in the prepared frame");
        }
    }

    if let Some(parent) = cfg.data.features_csv.parent() {
        std::fs::create_dir_all(parent)?;
    }
    save_dataset(&frame, &cfg.data.features_csv)?;
    let spike_count = frame
        .column("spike_future")?
        .iter()
        .filter(|v| **v == 1.0)
        .count();
    println!(
        "prepared {} rows x {} columns ({} spike days); wrote {}",
        frame.len(),
        frame.names().len(),
        spike_count,
        cfg.data.features_csv.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// shared loading for the model stages
// ---------------------------------------------------------------------------

struct Prepared {
    /// Full prepared frame (all columns).
    frame: FeatureFrame,
    /// Feature-selected view used by the model.
    model_view: FeatureFrame,
    /// Row ranges of the three splits in `frame` coordinates.
    train_rows: std::ops::Range<usize>,
    test_rows: std::ops::Range<usize>,
}

fn load_prepared(cfg: &PipelineConfig) -> anyhow::Result<Prepared> {
    let frame = load_dataset(&cfg.data.features_csv, &cfg.data.target_column)
        .with_context(|| "loading prepared features (run `prepare` first)")?;
    let keep: Vec<&str> = cfg
        .features
        .feature_columns
        .iter()
        .map(|s| s.as_str())
        .collect();
    let model_view = frame.select(&keep)?;

    let b = cfg.split.boundaries();
    let (train, val, test) = split_by_date(&frame, &b)?;
    let train_rows = 0..train.len();
    let val_start = train.len();
    let test_start = val_start + val.len();
    let test_rows = test_start..test_start + test.len();
    Ok(Prepared {
        frame,
        model_view,
        train_rows,
        test_rows,
    })
}

fn split_views(
    cfg: &PipelineConfig,
    p: &Prepared,
) -> anyhow::Result<(FeatureFrame, FeatureFrame)> {
    let b = cfg.split.boundaries();
    let (train, val, _) = split_by_date(&p.model_view, &b)?;
    Ok((train, val))
}

fn model_config(cfg: &PipelineConfig) -> ModelConfig {
    cfg.model
        .to_model_config(cfg.features.feature_columns.len())
}

/// Predictions anchored on the test rows, with their aligned companions.
struct TestSeries {
    dates: Vec<NaiveDate>,
    pred_vol: Vec<f64>,
    truth_vol: Vec<f64>,
    ret_future: Vec<f64>,
    spike_future: Vec<bool>,
    log_returns: Vec<f64>,
    closes_raw: Vec<f64>,
}

fn predict_test(
    p: &Prepared,
    mc: &ModelConfig,
    weights: &Weights,
) -> anyhow::Result<TestSeries> {
    let series = predict_series(mc, weights, &p.model_view)?;
    let truth_col = p.frame.target()?;
    let ret_col = p.frame.column("ret_future")?;
    let spike_col = p.frame.column("spike_future")?;
    let lr_col = p.frame.column("log_returns")?;
    let close_col = p.frame.column("close_raw")?;

    let mut out = TestSeries {
        dates: Vec::new(),
        pred_vol: Vec::new(),
        truth_vol: Vec::new(),
        ret_future: Vec::new(),
        spike_future: Vec::new(),
        log_returns: Vec::new(),
        closes_raw: Vec::new(),
    };
    for (i, &row) in series.anchor_rows.iter().enumerate() {
        if p.test_rows.contains(&row) {
            out.dates.push(p.frame.dates()[row]);
            out.pred_vol.push(series.predictions[i]);
            out.truth_vol.push(truth_col[row]);
            out.ret_future.push(ret_col[row]);
            out.spike_future.push(spike_col[row] == 1.0);
            out.log_returns.push(lr_col[row]);
            out.closes_raw.push(close_col[row]);
        }
    }
    if out.dates.is_empty() {
        bail!(
            "no test-row predictions: the frame has {} rows but windows of length {} never reach the test range",
            p.frame.len(),
            mc.seq_len
        );
    }
    Ok(out)
}

fn load_model(cfg: &PipelineConfig) -> anyhow::Result<(ModelConfig, Weights)> {
    let path = cfg.checkpoint_path();
    let (mc, weights) =
        load_checkpoint(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let expected = cfg.features.feature_columns.len();
    if mc.input_dim != expected {
        bail!(
            "checkpoint was trained with input_dim {}, config lists {} feature columns",
            mc.input_dim,
            expected
        );
    }
    Ok((mc, weights))
}

// ---------------------------------------------------------------------------
// train / grid
// ---------------------------------------------------------------------------

pub fn cmd_train(cfg: &PipelineConfig) -> anyhow::Result<()> {
    ensure_out_dir(cfg)?;
    let prepared = load_prepared(cfg)?;
    let (train_view, val_view) = split_views(cfg, &prepared)?;
    let mc = model_config(cfg);
    let tc = cfg.train.to_train_config(cfg.seed);

    let (weights, history) = train(&mc, &tc, &train_view, &val_view)?;
    save_checkpoint(cfg.checkpoint_path(), &mc, &weights)?;
    println!("wrote {}", cfg.checkpoint_path().display());

    let mut csv = String::from("epoch,train_loss,val_loss\n");
    for (i, (tl, vl)) in history.train_loss.iter().zip(&history.val_loss).enumerate() {
        writeln!(csv, "{},{tl},{vl}", i + 1).expect("string write");
    }
    write_text(&cfg.out_dir.join("history.csv"), &csv)?;

    let summary = serde_json::json!({
        "best_epoch": history.best_epoch,
        "stopped_epoch": history.stopped_epoch,
        "best_val_rmse": history.best_val_loss(),
    });
    write_text(
        &cfg.out_dir.join("train_summary.json"),
        &format!("{}\n", serde_json::to_string_pretty(&summary)?),
    )?;
    println!(
        "training stopped at epoch {} (best epoch {}, val RMSE {})",
        history.stopped_epoch,
        history.best_epoch,
        history.best_val_loss()
    );
    Ok(())
}

pub fn cmd_grid(cfg: &PipelineConfig) -> anyhow::Result<()> {
    ensure_out_dir(cfg)?;
    let prepared = load_prepared(cfg)?;
    let (train_view, val_view) = split_views(cfg, &prepared)?;
    let mc = model_config(cfg);
    let tc = cfg.train.to_train_config(cfg.seed);
    let grid = cfg.grid.to_hyper_grid();

    let outcome = grid_search(&grid, &mc, &tc, &train_view, &val_view, cfg.grid.parallel)?;

    let mut csv =
        String::from("rank,layers,heads,batch_size,dropout,best_val_rmse,best_epoch,stopped_epoch\n");
    for (rank, entry) in outcome.leaderboard.iter().enumerate() {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            rank + 1,
            entry.point.layers,
            entry.point.heads,
            entry.point.batch_size,
            entry.point.dropout,
            entry.best_val_rmse,
            entry.best_epoch,
            entry.stopped_epoch
        )
        .expect("string write");
    }
    write_text(&cfg.out_dir.join("leaderboard.csv"), &csv)?;

    let grid_dir = cfg.out_dir.join("grid");
    std::fs::create_dir_all(&grid_dir)?;
    for (entry, weights) in outcome.leaderboard.iter().zip(&outcome.checkpoints) {
        let mut point_mc = mc.clone();
        point_mc.layers = entry.point.layers;
        point_mc.heads = entry.point.heads;
        point_mc.dropout = entry.point.dropout;
        let path = grid_dir.join(format!("ckpt_{}.json", entry.point.label()));
        save_checkpoint(&path, &point_mc, weights)?;
    }
    println!("wrote {} grid checkpoints to {}", outcome.checkpoints.len(), grid_dir.display());

    // The winner becomes the default checkpoint for later stages.
    save_checkpoint(
        cfg.checkpoint_path(),
        &outcome.best_model,
        &outcome.checkpoints[0],
    )?;
    let best = &outcome.leaderboard[0];
    println!(
        "best point {} with val RMSE {}; wrote {}",
        best.point.label(),
        best.best_val_rmse,
        cfg.checkpoint_path().display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate / ablate / backtest
// ---------------------------------------------------------------------------

pub fn cmd_evaluate(cfg: &PipelineConfig) -> anyhow::Result<()> {
    ensure_out_dir(cfg)?;
    let prepared = load_prepared(cfg)?;
    let (mc, weights) = load_model(cfg)?;
    let t = predict_test(&prepared, &mc, &weights)?;

    let test_rmse = rmse(&t.pred_vol, &t.truth_vol)?;
    let headline_t = cfg.features.spike_threshold;
    let counts = confusion_at_threshold(&t.pred_vol, &t.ret_future, &t.spike_future, headline_t)?;
    let m = spike_metrics(&counts);

    let metrics_json = serde_json::json!({
        "days": t.dates.len(),
        "true_spikes": t.spike_future.iter().filter(|s| **s).count(),
        "rmse": test_rmse,
        "threshold": headline_t,
        "tp": counts.tp,
        "fn": counts.fn_,
        "tn": counts.tn,
        "fp": counts.fp,
        "precision": m.precision,
        "recall": m.recall,
        "f1": m.f1,
    });
    write_text(
        &cfg.out_dir.join("metrics.json"),
        &format!("{}\n", serde_json::to_string_pretty(&metrics_json)?),
    )?;

    let mut csv = String::from("rmse,threshold,tp,fn,tn,fp,precision,recall,f1\n");
    writeln!(
        csv,
        "{test_rmse},{headline_t},{},{},{},{},{},{},{}",
        counts.tp, counts.fn_, counts.tn, counts.fp, m.precision, m.recall, m.f1
    )
    .expect("string write");
    write_text(&cfg.out_dir.join("metrics.csv"), &csv)?;

    let rows = threshold_sweep(
        &t.pred_vol,
        &t.ret_future,
        &t.spike_future,
        &cfg.eval.thresholds,
    )?;
    let mut csv = String::from("threshold,tp,fn,tn,fp,precision,recall,f1\n");
    for row in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            row.threshold,
            row.counts.tp,
            row.counts.fn_,
            row.counts.tn,
            row.counts.fp,
            row.metrics.precision,
            row.metrics.recall,
            row.metrics.f1
        )
        .expect("string write");
    }
    write_text(&cfg.out_dir.join("threshold_sweep.csv"), &csv)?;

    // Feature-vs-target correlations over the whole prepared frame.
    let target = prepared.frame.target()?;
    let mut csv = String::from("feature,r2,pearson,spearman\n");
    for name in &cfg.features.feature_columns {
        let col = prepared.frame.column(name)?;
        match correlation_stats(col, target) {
            Ok((r2, p, s)) => writeln!(csv, "{name},{r2},{p},{s}").expect("string write"),
            Err(_) => writeln!(csv, "{name},,,").expect("string write"),
        }
    }
    write_text(&cfg.out_dir.join("feature_correlations.csv"), &csv)?;

    println!(
        "evaluated {} test days: RMSE {test_rmse}, precision {}, recall {}, f1 {}",
        t.dates.len(),
        m.precision,
        m.recall,
        m.f1
    );
    Ok(())
}

pub fn cmd_ablate(cfg: &PipelineConfig) -> anyhow::Result<()> {
    ensure_out_dir(cfg)?;
    let prepared = load_prepared(cfg)?;
    let (mc, weights) = load_model(cfg)?;

    // Baseline: per-feature means over the training rows.
    let train_view = prepared
        .model_view
        .slice_rows(prepared.train_rows.start, prepared.train_rows.end);
    let baseline = feature_means(&train_view)?;

    // Evaluate over windows anchored in the test range (context reaches back
    // seq_len - 1 rows before it).
    let start = prepared.test_rows.start.saturating_sub(mc.seq_len - 1);
    let eval_view = prepared.model_view.slice_rows(start, prepared.test_rows.end);
    let report = feature_ablation(&mc, &weights, &eval_view, &baseline)?;

    let mut csv = String::from("rank,feature,score\n");
    for (rank, e) in report.entries.iter().enumerate() {
        writeln!(csv, "{},{},{}", rank + 1, e.feature, e.score).expect("string write");
    }
    write_text(&cfg.out_dir.join("ablation.csv"), &csv)?;

    println!("top features by |ablation score|:");
    for e in report.top(3) {
        println!("  {}  {}", e.feature, e.score);
    }
    Ok(())
}

pub fn cmd_backtest(cfg: &PipelineConfig) -> anyhow::Result<()> {
    ensure_out_dir(cfg)?;
    let prepared = load_prepared(cfg)?;
    let (mc, weights) = load_model(cfg)?;
    let t = predict_test(&prepared, &mc, &weights)?;

    let mut metrics_csv = String::from(
        "strategy,scaling,time_in_market_pct,sharpe,max_drawdown_pct,kelly_pct,daily_var_95_pct,pnl_pct,trades,skipped_buys\n",
    );
    for &kind in &cfg.backtest.strategies {
        for &scaling in &cfg.backtest.scalings {
            let strategy = StrategyConfig {
                kind,
                initial_capital: cfg.backtest.initial_capital,
                position_fraction: cfg.backtest.position_fraction,
                fee_rate: cfg.backtest.fee_rate,
                volatility_scaled: scaling == Scaling::Scaled,
                spike_threshold: cfg.backtest.spike_threshold,
                liquidate_at_end: false,
            };
            let (log, curve) = run_backtest(
                &t.dates,
                &t.closes_raw,
                &t.log_returns,
                &t.pred_vol,
                &strategy,
            )?;
            let m = portfolio_metrics(&curve, &log)?;
            let tag = format!("{}_{}", kind.name(), scaling.tag());

            let mut csv = String::from("date,side,units,price,fee\n");
            for trade in &log.trades {
                writeln!(
                    csv,
                    "{},{},{},{},{}",
                    trade.date.format("%Y-%m-%d"),
                    match trade.side {
                        volspike_core::backtest::Side::Buy => "buy",
                        volspike_core::backtest::Side::Sell => "sell",
                    },
                    trade.units,
                    trade.price,
                    trade.fee
                )
                .expect("string write");
            }
            write_text(&cfg.out_dir.join(format!("trades_{tag}.csv")), &csv)?;

            let mut csv = String::from("date,equity,units\n");
            for (i, date) in curve.dates.iter().enumerate() {
                writeln!(
                    csv,
                    "{},{},{}",
                    date.format("%Y-%m-%d"),
                    curve.values[i + 1],
                    curve.units[i]
                )
                .expect("string write");
            }
            write_text(&cfg.out_dir.join(format!("equity_{tag}.csv")), &csv)?;

            writeln!(
                metrics_csv,
                "{},{},{},{},{},{},{},{},{},{}",
                kind.name(),
                scaling.tag(),
                m.time_in_market,
                m.sharpe,
                m.max_drawdown,
                m.kelly,
                m.daily_var_95,
                m.pnl,
                log.trades.len(),
                log.skipped_buys
            )
            .expect("string write");
        }
    }
    write_text(&cfg.out_dir.join("backtest_metrics.csv"), &metrics_csv)?;
    println!("backtested {} days across {} runs", t.dates.len(),
        cfg.backtest.strategies.len() * cfg.backtest.scalings.len());
    Ok(())
}
