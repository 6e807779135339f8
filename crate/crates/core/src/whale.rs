//! Whale-alert tweet parsing and daily flow aggregation.
//!
//! Tweets of the form
//! `997 #BTC (6,269,280 USD) transferred from #Bitfinex to Unknown wallet`
//! become [`WhaleTransfer`] records. Direction against an exchange registry
//! classifies each transfer, and per-day sums produce the four whale
//! features: BTCminus / BTCplus / USDminus / USDplus.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use chrono::{Days, NaiveDate};

use crate::error::{Error, Result};

/// One parsed whale transaction.
#[derive(Debug, Clone, PartialEq)]
pub struct WhaleTransfer {
    pub timestamp: NaiveDate,
    pub btc_amount: f64,
    pub usd_amount: f64,
    pub source: String,
    pub destination: String,
}

/// Direction of a transfer relative to exchanges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowDirection {
    /// Wallet -> exchange: coins headed for a potential sale.
    WalletToExchange,
    /// Exchange -> wallet: coins withdrawn into custody.
    ExchangeToWallet,
    /// Wallet -> wallet and exchange -> exchange are not counted.
    Ignored,
}

/// Daily aggregates of classified transfers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyWhaleFlows {
    pub date: NaiveDate,
    /// BTC flowing out of wallets into exchanges.
    pub btc_minus: f64,
    /// BTC flowing into wallets from exchanges.
    pub btc_plus: f64,
    /// USD flowing out of wallets into exchanges.
    pub usd_minus: f64,
    /// USD flowing into wallets from exchanges.
    pub usd_plus: f64,
}

/// Case-insensitive exchange name lookup; a leading `#` is ignored.
#[derive(Debug, Clone)]
pub struct ExchangeRegistry {
    names: HashSet<String>,
}

impl ExchangeRegistry {
    pub fn new<S: AsRef<str>>(names: impl IntoIterator<Item = S>) -> Self {
        Self {
            names: names
                .into_iter()
                .map(|n| normalize_entity(n.as_ref()))
                .collect(),
        }
    }

    /// A starter set of large exchanges; the list is configuration, and
    /// aggregate values depend on it.
    pub fn default_exchanges() -> Self {
        Self::new([
            "Bitfinex", "Gemini", "Binance", "Coinbase", "Kraken", "Huobi", "OKEx", "Bitstamp",
            "Poloniex", "Bittrex", "Bitmex", "Kucoin",
        ])
    }

    pub fn is_exchange(&self, entity: &str) -> bool {
        self.names.contains(&normalize_entity(entity))
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

fn normalize_entity(s: &str) -> String {
    s.trim().trim_start_matches('#').to_lowercase()
}

/// Outcome of parsing one tweet, kept separate from the public option-based
/// API so corpus statistics can distinguish filtered text from feed noise.
#[derive(Debug, Clone, PartialEq)]
pub enum TweetParse {
    /// Not a `#BTC ... transferred` tweet at all.
    NotRelevant,
    /// Matched the filter but an amount or entity failed to parse.
    Malformed,
    Transfer(WhaleTransfer),
}

/// Parses one tweet; returns a transfer only for `#BTC` + `transferred`
/// texts whose amounts and entities extract cleanly.
pub fn parse_tweet(text: &str, date: NaiveDate) -> Option<WhaleTransfer> {
    match parse_tweet_detailed(text, date) {
        TweetParse::Transfer(t) => Some(t),
        _ => None,
    }
}

/// Full classification of one tweet line.
pub fn parse_tweet_detailed(text: &str, date: NaiveDate) -> TweetParse {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let has_btc = tokens.iter().any(|t| *t == "#BTC");
    let has_transferred = tokens
        .iter()
        .any(|t| t.trim_matches(|c: char| !c.is_alphanumeric()) == "transferred");
    if !has_btc || !has_transferred {
        return TweetParse::NotRelevant;
    }

    // Leading amount: the token immediately before "#BTC".
    let btc_pos = match tokens.iter().position(|t| *t == "#BTC") {
        Some(p) if p > 0 => p,
        _ => return TweetParse::Malformed,
    };
    let btc_amount = match parse_amount(tokens[btc_pos - 1]) {
        Some(v) if v > 0.0 => v,
        _ => return TweetParse::Malformed,
    };

    // Parenthesized USD amount: "(6,269,280 USD)".
    let usd_amount = match extract_usd(text) {
        Some(v) => v,
        None => return TweetParse::Malformed,
    };

    // Source spans "from" .. "to"; destination spans "to" .. end of text.
    let from_pos = match tokens.iter().position(|t| *t == "from") {
        Some(p) => p,
        None => return TweetParse::Malformed,
    };
    let to_pos = match tokens[from_pos + 1..].iter().position(|t| *t == "to") {
        Some(p) => from_pos + 1 + p,
        None => return TweetParse::Malformed,
    };
    let source = tokens[from_pos + 1..to_pos].join(" ");
    let destination = tokens[to_pos + 1..].join(" ");
    if source.is_empty() || destination.is_empty() {
        return TweetParse::Malformed;
    }

    TweetParse::Transfer(WhaleTransfer {
        timestamp: date,
        btc_amount,
        usd_amount,
        source,
        destination,
    })
}

/// Parses a comma-grouped integer or decimal ("6,269,280" / "997.5").
fn parse_amount(token: &str) -> Option<f64> {
    let cleaned: String = token.chars().filter(|c| *c != ',').collect();
    if cleaned.is_empty() || !cleaned.chars().all(|c| c.is_ascii_digit() || c == '.') {
        return None;
    }
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn extract_usd(text: &str) -> Option<f64> {
    let open = text.find('(')?;
    let close = text[open..].find(')')? + open;
    let inner = text[open + 1..close].trim();
    let amount = inner.strip_suffix("USD")?.trim();
    parse_amount(amount)
}

/// Classifies a transfer by whether its endpoints are registered exchanges.
pub fn classify_direction(t: &WhaleTransfer, reg: &ExchangeRegistry) -> FlowDirection {
    let src_exchange = reg.is_exchange(&t.source);
    let dst_exchange = reg.is_exchange(&t.destination);
    match (src_exchange, dst_exchange) {
        (false, true) => FlowDirection::WalletToExchange,
        (true, false) => FlowDirection::ExchangeToWallet,
        _ => FlowDirection::Ignored,
    }
}

/// Sums classified transfers into one record per day of `[start, end]`.
/// Days without transfers are all-zero; transfers outside the range are
/// dropped.
///
/// Each day's amounts are summed in a canonical order, so permuting the
/// input yields bit-identical output despite floating-point rounding.
pub fn aggregate_daily(
    transfers: &[(WhaleTransfer, FlowDirection)],
    start: NaiveDate,
    end: NaiveDate,
) -> Vec<DailyWhaleFlows> {
    let n_days = ((end - start).num_days().max(-1) + 1) as usize;
    // Buckets per day: [btc_minus, usd_minus, btc_plus, usd_plus].
    let mut buckets: Vec<[Vec<f64>; 4]> = (0..n_days).map(|_| Default::default()).collect();
    for (t, dir) in transfers {
        if t.timestamp < start || t.timestamp > end {
            continue;
        }
        let idx = (t.timestamp - start).num_days() as usize;
        match dir {
            FlowDirection::WalletToExchange => {
                buckets[idx][0].push(t.btc_amount);
                buckets[idx][1].push(t.usd_amount);
            }
            FlowDirection::ExchangeToWallet => {
                buckets[idx][2].push(t.btc_amount);
                buckets[idx][3].push(t.usd_amount);
            }
            FlowDirection::Ignored => {}
        }
    }
    let sum_sorted = |amounts: &mut Vec<f64>| -> f64 {
        amounts.sort_by(|a, b| a.total_cmp(b));
        amounts.iter().sum()
    };
    buckets
        .iter_mut()
        .enumerate()
        .map(|(i, b)| DailyWhaleFlows {
            date: start.checked_add_days(Days::new(i as u64)).unwrap(),
            btc_minus: sum_sorted(&mut b[0]),
            usd_minus: sum_sorted(&mut b[1]),
            btc_plus: sum_sorted(&mut b[2]),
            usd_plus: sum_sorted(&mut b[3]),
        })
        .collect()
}

/// Net daily exchange flow, `|BTCplus - BTCminus|`.
pub fn net_exchange_flow(f: &DailyWhaleFlows) -> f64 {
    (f.btc_plus - f.btc_minus).abs()
}

/// Corpus-level counters reported by [`parse_corpus`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub lines: usize,
    pub transfers: usize,
    pub filtered_out: usize,
    pub malformed: usize,
    /// `#`-prefixed entities that were not in the registry (treated as wallets).
    pub unknown_hash_entities: usize,
}

/// Parses a newline-delimited corpus of `<ISO date>\t<tweet text>` lines.
pub fn parse_corpus(
    contents: &str,
    reg: &ExchangeRegistry,
) -> Result<(Vec<(WhaleTransfer, FlowDirection)>, CorpusStats)> {
    let mut stats = CorpusStats::default();
    let mut out = Vec::new();
    for (lineno, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        let (date_str, text) = line.split_once('\t').ok_or_else(|| Error::BadDate {
            row: lineno + 1,
            text: line.chars().take(40).collect(),
        })?;
        let date =
            NaiveDate::parse_from_str(date_str.trim(), "%Y-%m-%d").map_err(|_| Error::BadDate {
                row: lineno + 1,
                text: date_str.to_string(),
            })?;
        match parse_tweet_detailed(text, date) {
            TweetParse::NotRelevant => stats.filtered_out += 1,
            TweetParse::Malformed => stats.malformed += 1,
            TweetParse::Transfer(t) => {
                for entity in [&t.source, &t.destination] {
                    if entity.starts_with('#') && !reg.is_exchange(entity) {
                        stats.unknown_hash_entities += 1;
                    }
                }
                let dir = classify_direction(&t, reg);
                out.push((t, dir));
                stats.transfers += 1;
            }
        }
    }
    Ok((out, stats))
}

/// Writes daily flows as a FeatureFrame-compatible CSV with the four whale
/// columns.
pub fn save_daily_flows(flows: &[DailyWhaleFlows], path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    writeln!(out, "date,BTCminus,BTCplus,USDminus,USDplus")?;
    for f in flows {
        writeln!(
            out,
            "{},{},{},{},{}",
            f.date.format("%Y-%m-%d"),
            f.btc_minus,
            f.btc_plus,
            f.usd_minus,
            f.usd_plus
        )?;
    }
    out.flush()?;
    Ok(())
}
