//! Dataset loading, missing-value repair, and date-based splitting.
//!
//! A [`FeatureFrame`] is a date-indexed table of named real-valued columns.
//! Dates are strictly daily and gap-free; cells that could not be parsed (or
//! that predate a feature's availability) carry an explicit missing marker
//! until [`fill_missing`] runs. The marker is IEEE NaN, which is not a
//! representable data value in any column, so it can never collide with a
//! meaningful zero.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use chrono::{Days, NaiveDate};

use crate::error::{Error, Result};

/// Explicit not-a-value marker for cells with no observation.
pub const MISSING: f64 = f64::NAN;

/// Returns true if a cell holds the missing marker.
#[inline]
pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}

/// Date-indexed table of real-valued feature columns plus the forecast target.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    dates: Vec<NaiveDate>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    target_column: String,
}

impl FeatureFrame {
    /// Builds a frame, validating the date calendar and column lengths.
    pub fn new(
        dates: Vec<NaiveDate>,
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
        target_column: impl Into<String>,
    ) -> Result<Self> {
        validate_calendar(&dates)?;
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != dates.len() {
                return Err(Error::ColumnLength {
                    name: name.clone(),
                    got: col.len(),
                    expected: dates.len(),
                });
            }
        }
        debug_assert_eq!(names.len(), columns.len());
        Ok(Self {
            dates,
            names,
            columns,
            target_column: target_column.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    /// Column names in frame order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn target_column(&self) -> &str {
        &self.target_column
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.index_of(name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    pub fn target(&self) -> Result<&[f64]> {
        self.column(&self.target_column.clone())
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Adds or replaces a column.
    pub fn set_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.dates.len() {
            return Err(Error::ColumnLength {
                name: name.to_string(),
                got: values.len(),
                expected: self.dates.len(),
            });
        }
        match self.index_of(name) {
            Some(i) => self.columns[i] = values,
            None => {
                self.names.push(name.to_string());
                self.columns.push(values);
            }
        }
        Ok(())
    }

    /// Projection onto a subset of columns (plus the target), keeping dates.
    pub fn select(&self, keep: &[&str]) -> Result<FeatureFrame> {
        let mut names = Vec::new();
        let mut columns = Vec::new();
        for &name in keep {
            let i = self
                .index_of(name)
                .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
            names.push(self.names[i].clone());
            columns.push(self.columns[i].clone());
        }
        if !keep.contains(&self.target_column.as_str()) {
            let i = self
                .index_of(&self.target_column)
                .ok_or_else(|| Error::UnknownColumn(self.target_column.clone()))?;
            names.push(self.names[i].clone());
            columns.push(self.columns[i].clone());
        }
        FeatureFrame::new(self.dates.clone(), names, columns, self.target_column.clone())
    }

    /// Feature column names: every column except the target.
    pub fn feature_names(&self) -> Vec<&str> {
        self.names
            .iter()
            .filter(|n| **n != self.target_column)
            .map(|s| s.as_str())
            .collect()
    }

    /// Drops the last `n` rows.
    pub fn truncate_tail(&mut self, n: usize) {
        let keep = self.dates.len().saturating_sub(n);
        self.dates.truncate(keep);
        for col in &mut self.columns {
            col.truncate(keep);
        }
    }

    /// Row range as a new frame over the half-open interval `[start, end)`.
    pub fn slice_rows(&self, start: usize, end: usize) -> FeatureFrame {
        FeatureFrame {
            dates: self.dates[start..end].to_vec(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| c[start..end].to_vec())
                .collect(),
            target_column: self.target_column.clone(),
        }
    }

    /// Row index of the first date strictly after `d` (frame length if none).
    fn first_after(&self, d: NaiveDate) -> usize {
        self.dates.partition_point(|x| *x <= d)
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.dates.first().copied()
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.dates.last().copied()
    }

    /// True when no cell in any column is the missing marker.
    pub fn is_complete(&self) -> bool {
        self.columns
            .iter()
            .all(|c| c.iter().all(|v| !is_missing(*v)))
    }
}

fn validate_calendar(dates: &[NaiveDate]) -> Result<()> {
    for w in dates.windows(2) {
        if w[1] == w[0] {
            return Err(Error::DuplicateDate(w[1]));
        }
        if w[1] < w[0] {
            return Err(Error::NonMonotoneDates(w[1]));
        }
        if w[0].checked_add_days(Days::new(1)) != Some(w[1]) {
            return Err(Error::DateGap(w[1]));
        }
    }
    Ok(())
}

/// Train/validation/test cut points, all inclusive end dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SplitBoundaries {
    pub train_end: NaiveDate,
    pub val_end: NaiveDate,
    pub test_end: NaiveDate,
}

/// How to repair missing cells, by column.
///
/// Backfill columns take the first available observation for the leading gap
/// and carry the previous observation forward across interior gaps. Zero
/// columns treat the pre-availability period as zero.
#[derive(Debug, Clone, Default)]
pub struct FillPolicy {
    backfill_columns: HashSet<String>,
    zero_columns: HashSet<String>,
}

impl FillPolicy {
    pub fn new<S: Into<String>>(
        backfill: impl IntoIterator<Item = S>,
        zero: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let backfill_columns: HashSet<String> = backfill.into_iter().map(Into::into).collect();
        let zero_columns: HashSet<String> = zero.into_iter().map(Into::into).collect();
        if let Some(dup) = backfill_columns.intersection(&zero_columns).next() {
            return Err(Error::FillPolicyOverlap(dup.clone()));
        }
        Ok(Self {
            backfill_columns,
            zero_columns,
        })
    }

    pub fn is_backfill(&self, name: &str) -> bool {
        self.backfill_columns.contains(name)
    }

    pub fn is_zero(&self, name: &str) -> bool {
        self.zero_columns.contains(name)
    }
}

/// Loads a comma-separated dataset with a `date` column (YYYY-MM-DD).
///
/// Every other column is parsed as a real number; cells that do not parse
/// become the missing marker. The calendar must be daily, duplicate-free and
/// gap-free.
pub fn load_dataset(path: impl AsRef<Path>, target_column: &str) -> Result<FeatureFrame> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(path)?;
    let headers = reader.headers()?.clone();
    let date_idx = headers
        .iter()
        .position(|h| h == "date")
        .ok_or_else(|| Error::MissingDateColumn(path.to_path_buf()))?;

    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != date_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut dates = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let raw_date = record.get(date_idx).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|_| Error::BadDate {
            row: row + 2, // header is line 1
            text: raw_date.to_string(),
        })?;
        dates.push(date);
        let mut k = 0;
        for (i, cell) in record.iter().enumerate() {
            if i == date_idx {
                continue;
            }
            let v = cell.trim().parse::<f64>().unwrap_or(MISSING);
            columns[k].push(v);
            k += 1;
        }
    }
    FeatureFrame::new(dates, names, columns, target_column)
}

/// Writes a frame back to CSV. Missing cells serialize as empty strings;
/// finite values round-trip bit-identically through [`load_dataset`].
pub fn save_dataset(frame: &FeatureFrame, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    write!(out, "date")?;
    for name in frame.names() {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for (r, date) in frame.dates().iter().enumerate() {
        write!(out, "{}", date.format("%Y-%m-%d"))?;
        for name in frame.names() {
            let v = frame.column(name).expect("own column")[r];
            if is_missing(v) {
                write!(out, ",")?;
            } else {
                write!(out, ",{v}")?;
            }
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Repairs missing cells per the policy.
///
/// Every column that still has missing cells must be covered by exactly one
/// policy set; a backfill column that is entirely missing is an error.
pub fn fill_missing(frame: &FeatureFrame, policy: &FillPolicy) -> Result<FeatureFrame> {
    let mut out = frame.clone();
    for ci in 0..out.names.len() {
        let name = out.names[ci].clone();
        let col = &mut out.columns[ci];
        if col.iter().all(|v| !is_missing(*v)) {
            continue;
        }
        if policy.is_zero(&name) {
            for v in col.iter_mut() {
                if is_missing(*v) {
                    *v = 0.0;
                }
            }
        } else if policy.is_backfill(&name) {
            let first = col
                .iter()
                .copied()
                .find(|v| !is_missing(*v))
                .ok_or_else(|| Error::AllMissing(name.clone()))?;
            let mut last = first;
            for v in col.iter_mut() {
                if is_missing(*v) {
                    *v = last;
                } else {
                    last = *v;
                }
            }
        } else {
            return Err(Error::UnfilledColumn(name));
        }
    }
    Ok(out)
}

/// Cuts the frame into train / validation / test partitions by date.
///
/// Train covers `[first, train_end]`, validation `(train_end, val_end]`, test
/// `(val_end, test_end]`. Rows after `test_end` are dropped. Each segment
/// must be non-empty and each boundary must lie inside the frame's range.
pub fn split_by_date(
    frame: &FeatureFrame,
    b: &SplitBoundaries,
) -> Result<(FeatureFrame, FeatureFrame, FeatureFrame)> {
    if !(b.train_end < b.val_end && b.val_end < b.test_end) {
        return Err(Error::BoundariesUnordered {
            train_end: b.train_end,
            val_end: b.val_end,
            test_end: b.test_end,
        });
    }
    let (first, last) = match (frame.first_date(), frame.last_date()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::BoundaryOutOfRange(b.train_end)),
    };
    for d in [b.train_end, b.val_end, b.test_end] {
        if d < first || d > last {
            return Err(Error::BoundaryOutOfRange(d));
        }
    }
    let t_end = frame.first_after(b.train_end);
    let v_end = frame.first_after(b.val_end);
    let s_end = frame.first_after(b.test_end);
    if t_end == 0 {
        return Err(Error::EmptySplit(first, b.train_end));
    }
    if v_end == t_end {
        return Err(Error::EmptySplit(b.train_end, b.val_end));
    }
    if s_end == v_end {
        return Err(Error::EmptySplit(b.val_end, b.test_end));
    }
    Ok((
        frame.slice_rows(0, t_end),
        frame.slice_rows(t_end, v_end),
        frame.slice_rows(v_end, s_end),
    ))
}
