//! Technical indicators, the realized-volatility target, standardization
//! transforms, and spike labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponential moving average parameters. The multiplier is `S / (1 + n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmaParams {
    /// Window length in days.
    pub n: usize,
    /// Smoothing factor.
    pub s: f64,
}

impl Default for EmaParams {
    fn default() -> Self {
        Self { n: 10, s: 2.0 }
    }
}

/// Trailing-window realized volatility parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolatilityParams {
    /// Number of trailing daily returns per estimate.
    pub window: usize,
    /// Scale applied inside the square root (365 for a 24/365 market).
    pub annualization: f64,
}

impl Default for VolatilityParams {
    fn default() -> Self {
        Self {
            window: 7,
            annualization: 365.0,
        }
    }
}

/// Elementwise standardization transforms, one per skewness regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformMethod {
    None,
    Log,
    Sqrt,
    Cbrt,
    Pow14,
    Log1p,
}

impl TransformMethod {
    /// Numeric codes 0..=5 as used in column recipes.
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::None),
            1 => Some(Self::Log),
            2 => Some(Self::Sqrt),
            3 => Some(Self::Cbrt),
            4 => Some(Self::Pow14),
            5 => Some(Self::Log1p),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Self::None => 0,
            Self::Log => 1,
            Self::Sqrt => 2,
            Self::Cbrt => 3,
            Self::Pow14 => 4,
            Self::Log1p => 5,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Log => "log",
            Self::Sqrt => "sqrt",
            Self::Cbrt => "cbrt",
            Self::Pow14 => "pow14",
            Self::Log1p => "log1p",
        }
    }
}

/// A day is a spike when transformed volatility reaches the threshold and the
/// close-to-close log-return is positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeRule {
    pub threshold: f64,
}

impl Default for SpikeRule {
    fn default() -> Self {
        Self { threshold: 1.0 }
    }
}

/// Close-to-close log-returns; output element `i` is `ln(C_{i+1} / C_i)`.
pub fn log_returns(closes: &[f64]) -> Result<Vec<f64>> {
    if closes.len() < 2 {
        return Err(Error::SeriesTooShort {
            need: 2,
            got: closes.len(),
        });
    }
    if let Some(i) = closes.iter().position(|c| *c <= 0.0) {
        return Err(Error::NonPositivePrice {
            index: i,
            value: closes[i],
        });
    }
    Ok(closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

/// Annualized realized volatility over a trailing window of returns.
///
/// For each position `t >= window - 1`,
/// `V_t = sqrt( sum_{i in window}(x_i - mu)^2 * annualization / window )`
/// with `mu` the window mean. Earlier positions are absent from the output.
pub fn realized_volatility(returns: &[f64], p: &VolatilityParams) -> Result<Vec<f64>> {
    if p.window < 2 {
        return Err(Error::WindowTooSmall(p.window));
    }
    if returns.len() < p.window {
        return Err(Error::SeriesTooShort {
            need: p.window,
            got: returns.len(),
        });
    }
    let n = p.window as f64;
    Ok(returns
        .windows(p.window)
        .map(|w| {
            let mu = w.iter().sum::<f64>() / n;
            let ss: f64 = w.iter().map(|x| (x - mu) * (x - mu)).sum();
            (ss * p.annualization / n).sqrt()
        })
        .collect())
}

/// Exponential moving average seeded with the first observation.
pub fn ema(series: &[f64], p: &EmaParams) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::SeriesTooShort { need: 1, got: 0 });
    }
    let alpha = p.s / (1.0 + p.n as f64);
    let mut out = Vec::with_capacity(series.len());
    let mut prev = series[0];
    out.push(prev);
    for &x in &series[1..] {
        prev = x * alpha + prev * (1.0 - alpha);
        out.push(prev);
    }
    Ok(out)
}

/// Intraday spreads for one candle: `(high - low) / close` and
/// `(close - open) / open`.
pub fn candle_spreads(open: f64, high: f64, low: f64, close: f64) -> Result<(f64, f64)> {
    if !(high >= low) || open <= 0.0 || high <= 0.0 || low <= 0.0 || close <= 0.0 {
        return Err(Error::InvalidCandle {
            open,
            high,
            low,
            close,
        });
    }
    Ok(((high - low) / close, (close - open) / open))
}

/// Applies one transform elementwise, validating its domain.
pub fn apply_transform(values: &[f64], m: TransformMethod) -> Result<Vec<f64>> {
    let check = |ok: bool, index: usize, value: f64| {
        if ok {
            Ok(())
        } else {
            Err(Error::TransformDomain {
                method: m.name(),
                index,
                value,
            })
        }
    };
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| match m {
            TransformMethod::None => Ok(v),
            TransformMethod::Log => {
                check(v > 0.0, i, v)?;
                Ok(v.ln())
            }
            TransformMethod::Sqrt => {
                check(v >= 0.0, i, v)?;
                Ok(v.sqrt())
            }
            TransformMethod::Cbrt => Ok(v.cbrt()),
            TransformMethod::Pow14 => {
                check(v >= 0.0, i, v)?;
                Ok(v.powf(0.25))
            }
            TransformMethod::Log1p => {
                check(v > -1.0, i, v)?;
                Ok(v.ln_1p())
            }
        })
        .collect()
}

/// Spike flags: `vol_t >= threshold` and `log_ret_t > 0`.
pub fn label_spikes(transformed_vol: &[f64], log_ret: &[f64], rule: &SpikeRule) -> Result<Vec<bool>> {
    if transformed_vol.len() != log_ret.len() {
        return Err(Error::LengthMismatch {
            left: transformed_vol.len(),
            right: log_ret.len(),
        });
    }
    Ok(transformed_vol
        .iter()
        .zip(log_ret)
        .map(|(&v, &r)| v >= rule.threshold && r > 0.0)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn log_returns_basics() {
        assert_eq!(log_returns(&[100.0, 100.0, 100.0]).unwrap(), vec![0.0, 0.0]);
        close(log_returns(&[100.0, 110.0]).unwrap()[0], 0.0953102, 1e-7);
        close(log_returns(&[50.0, 100.0]).unwrap()[0], std::f64::consts::LN_2, 1e-12);
        assert!(matches!(
            log_returns(&[100.0, -1.0]),
            Err(Error::NonPositivePrice { index: 1, .. })
        ));
        assert!(matches!(log_returns(&[1.0]), Err(Error::SeriesTooShort { .. })));
    }

    #[test]
    fn realized_volatility_hand_cases() {
        let p = VolatilityParams { window: 3, annualization: 365.0 };
        let v = realized_volatility(&[0.02, 0.02, 0.02], &p).unwrap();
        assert_eq!(v, vec![0.0]);

        let p2 = VolatilityParams { window: 2, annualization: 365.0 };
        let v = realized_volatility(&[0.01, -0.01], &p2).unwrap();
        close(v[0], 0.19104973174542803, 1e-12); // sqrt(0.0002 * 365 / 2)

        let v = realized_volatility(&[0.0; 5], &p2).unwrap();
        assert!(v.iter().all(|x| *x == 0.0));

        assert!(matches!(
            realized_volatility(&[0.1, 0.2], &VolatilityParams { window: 1, annualization: 365.0 }),
            Err(Error::WindowTooSmall(1))
        ));
    }

    #[test]
    fn realized_volatility_output_alignment() {
        let p = VolatilityParams { window: 3, annualization: 365.0 };
        let v = realized_volatility(&[0.1, -0.1, 0.05, 0.02, -0.02], &p).unwrap();
        assert_eq!(v.len(), 3); // positions 2, 3, 4 of the return series
    }

    #[test]
    fn ema_matches_recurrence() {
        let c = ema(&[7.5; 6], &EmaParams::default()).unwrap();
        assert!(c.iter().all(|x| *x == 7.5));

        let v = ema(&[1.0, 4.0], &EmaParams { n: 2, s: 2.0 }).unwrap();
        assert_eq!(v, vec![1.0, 3.0]); // 4*(2/3) + 1*(1/3)

        let v = ema(&[3.0, 9.0, -4.0], &EmaParams { n: 5, s: 0.0 }).unwrap();
        assert_eq!(v, vec![3.0, 3.0, 3.0]);
    }

    #[test]
    fn candle_spread_cases() {
        let (hl, co) = candle_spreads(95.0, 110.0, 90.0, 100.0).unwrap();
        close(hl, 0.2, 1e-12);
        close(co, 0.05263157894736842, 1e-12);

        let (hl, co) = candle_spreads(100.0, 100.0, 100.0, 100.0).unwrap();
        assert_eq!((hl, co), (0.0, 0.0));

        let (_, co) = candle_spreads(100.0, 120.0, 95.0, 100.0).unwrap();
        assert_eq!(co, 0.0);

        assert!(matches!(
            candle_spreads(100.0, 90.0, 110.0, 100.0),
            Err(Error::InvalidCandle { .. })
        ));
    }

    #[test]
    fn transform_values() {
        let v = apply_transform(&[8.67], TransformMethod::Pow14).unwrap();
        close(v[0], 1.7159505741329182, 1e-12);
        assert!(v[0] > 1.715 && v[0] < 1.720);

        let v = apply_transform(&[0.000234], TransformMethod::Pow14).unwrap();
        close(v[0], 0.12368127805281749, 1e-12);

        assert_eq!(apply_transform(&[4.0], TransformMethod::Sqrt).unwrap(), vec![2.0]);
        assert_eq!(apply_transform(&[0.0], TransformMethod::Log1p).unwrap(), vec![0.0]);
        assert_eq!(apply_transform(&[-8.0], TransformMethod::Cbrt).unwrap(), vec![-2.0]);
    }

    #[test]
    fn transform_domain_violation_reports_index() {
        match apply_transform(&[1.0, 0.0, 2.0], TransformMethod::Log) {
            Err(Error::TransformDomain { index, value, .. }) => {
                assert_eq!(index, 1);
                assert_eq!(value, 0.0);
            }
            other => panic!("expected domain error, got {other:?}"),
        }
        assert!(apply_transform(&[-0.5], TransformMethod::Pow14).is_err());
        assert!(apply_transform(&[-1.0], TransformMethod::Log1p).is_err());
    }

    #[test]
    fn spike_rule_cases() {
        let rule = SpikeRule { threshold: 1.0 };
        assert_eq!(label_spikes(&[1.05], &[0.02], &rule).unwrap(), vec![true]);
        assert_eq!(label_spikes(&[1.40], &[-0.01], &rule).unwrap(), vec![false]);
        assert_eq!(label_spikes(&[0.90], &[0.03], &rule).unwrap(), vec![false]);
        assert!(matches!(
            label_spikes(&[1.0], &[0.1, 0.2], &rule),
            Err(Error::LengthMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn pow14_round_trips(x in 0.0f64..1e6) {
            let y = apply_transform(&[x], TransformMethod::Pow14).unwrap()[0];
            let back = y.powi(4);
            prop_assert!((back - x).abs() <= 1e-12 * x.max(1.0));
        }

        #[test]
        fn transforms_preserve_order(mut xs in proptest::collection::vec(0.01f64..100.0, 2..20)) {
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for m in [TransformMethod::None, TransformMethod::Log, TransformMethod::Sqrt,
                      TransformMethod::Cbrt, TransformMethod::Pow14, TransformMethod::Log1p] {
                let t = apply_transform(&xs, m).unwrap();
                for w in t.windows(2) {
                    prop_assert!(w[0] <= w[1], "{m:?} broke ordering");
                }
            }
        }

        #[test]
        fn volatility_is_scale_invariant(scale in 0.1f64..10.0, prices in proptest::collection::vec(10.0f64..500.0, 8..20)) {
            let p = VolatilityParams::default();
            let base = realized_volatility(&log_returns(&prices).unwrap(), &p).unwrap();
            let scaled_prices: Vec<f64> = prices.iter().map(|x| x * scale).collect();
            let scaled = realized_volatility(&log_returns(&scaled_prices).unwrap(), &p).unwrap();
            for (a, b) in base.iter().zip(&scaled) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }

        #[test]
        fn ema_stays_in_range(series in proptest::collection::vec(-50.0f64..50.0, 1..40), n in 1usize..20, s in 0.0f64..1.0) {
            // s in [0, 1] keeps the multiplier within [0, 1] for any n >= 1.
            let p = EmaParams { n, s };
            let out = ema(&series, &p).unwrap();
            let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in out {
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }

        #[test]
        fn spike_count_monotone_in_threshold(
            vol in proptest::collection::vec(0.0f64..2.0, 1..50),
            rets in proptest::collection::vec(-0.1f64..0.1, 1..50),
        ) {
            let n = vol.len().min(rets.len());
            let (vol, rets) = (&vol[..n], &rets[..n]);
            let mut prev = usize::MAX;
            for t in [0.5, 0.8, 1.0, 1.2, 1.5] {
                let count = label_spikes(vol, rets, &SpikeRule { threshold: t })
                    .unwrap()
                    .iter()
                    .filter(|b| **b)
                    .count();
                prop_assert!(count <= prev);
                prev = count;
            }
        }
    }
}
