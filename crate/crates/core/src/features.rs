//! Model inputs: keyword daily counts, normalization, lag matrices, and the
//! price-return target.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, ThematicField, TokenizerConfig, TweetCollection};
use crate::day::Day;
use crate::error::{Error, Result};

/// A named series of values over strictly increasing days.
#[derive(Clone, Debug, PartialEq)]
pub struct DailySeries {
    pub name: String,
    days: Vec<Day>,
    values: Vec<f64>,
}

impl DailySeries {
    pub fn new(name: impl Into<String>, days: Vec<Day>, values: Vec<f64>) -> Result<DailySeries> {
        let name = name.into();
        if days.len() != values.len() {
            return Err(Error::MisalignedSeries(format!("`{name}` has {} days but {} values", days.len(), values.len())));
        }
        if days.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::MisalignedSeries(format!("`{name}` days are not strictly increasing")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("`{name}` has non-finite values")));
        }
        Ok(DailySeries { name, days, values })
    }

    /// Series over consecutive calendar days starting at `start`.
    pub fn contiguous(name: impl Into<String>, start: Day, values: Vec<f64>) -> DailySeries {
        let days = (0..values.len() as i64).map(|i| Day(start.0 + i)).collect();
        DailySeries::new(name, days, values).expect("contiguous days are increasing")
    }

    pub fn days(&self) -> &[Day] {
        &self.days
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_gap_free(&self) -> bool {
        self.days.windows(2).all(|w| w[1].0 == w[0].0 + 1)
    }
}

/// One series per keyword: the number of tweets per day whose tokens contain
/// the keyword. Days span the corpus date range with zeros on silent days.
pub fn keyword_daily_counts(
    collection: &TweetCollection,
    keywords: &ThematicField,
    cfg: &TokenizerConfig,
) -> Vec<DailySeries> {
    let (first, last) = collection.date_range();
    let len = (last.0 - first.0 + 1) as usize;
    let mut counts: BTreeMap<&str, Vec<f64>> =
        keywords.keywords().iter().map(|k| (k.as_str(), vec![0.0; len])).collect();
    for t in collection.tweets() {
        let tokens: BTreeSet<String> = tokenize(t, cfg).into_iter().collect();
        let slot = (t.day().0 - first.0) as usize;
        for (k, series) in counts.iter_mut() {
            if tokens.contains(*k) {
                series[slot] += 1.0;
            }
        }
    }
    counts.into_iter().map(|(k, v)| DailySeries::contiguous(k, first, v)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Zscore,
    Minmax,
}

/// Rescales a series. Constant series become all zeros under either method;
/// z-scores use the population standard deviation.
pub fn normalize_series(s: &DailySeries, method: Normalization) -> Result<DailySeries> {
    if s.is_empty() {
        return Err(Error::InvalidArgument(format!("series `{}` is empty", s.name)));
    }
    let v = &s.values;
    let values = match method {
        Normalization::Zscore => {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            if sd == 0.0 {
                vec![0.0; v.len()]
            } else {
                v.iter().map(|x| (x - mean) / sd).collect()
            }
        }
        Normalization::Minmax => {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi == lo {
                vec![0.0; v.len()]
            } else {
                v.iter().map(|x| (x - lo) / (hi - lo)).collect()
            }
        }
    };
    Ok(DailySeries { name: s.name.clone(), days: s.days.clone(), values })
}

/// Date-indexed design matrix stored column-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    dates: Vec<Day>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(dates: Vec<Day>, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<FeatureMatrix> {
        if names.len() != columns.len() {
            return Err(Error::InvalidArgument("column names and columns differ in number".into()));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::MisalignedSeries("matrix dates are not strictly increasing".into()));
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != dates.len() {
                return Err(Error::MisalignedSeries(format!("column `{name}` has the wrong length")));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("column `{name}` has non-finite values")));
            }
        }
        if names.iter().collect::<BTreeSet<_>>().len() != names.len() {
            return Err(Error::InvalidArgument("duplicate column names".into()));
        }
        Ok(FeatureMatrix { dates, names, columns })
    }

    pub fn dates(&self) -> &[Day] {
        &self.dates
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    pub fn rows(&self) -> usize {
        self.dates.len()
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Keeps only the rows at the given (sorted) indices.
    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            dates: idx.iter().map(|&i| self.dates[i]).collect(),
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
        }
    }

    /// Writes `date,<col>,...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (i, d) in self.dates.iter().enumerate() {
            let mut rec = vec![d.to_string()];
            rec.extend(self.columns.iter().map(|c| c[i].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Writes several series sharing one day axis as `date,<name>,...`.
pub fn write_series_csv<W: Write>(series: &[DailySeries], out: W) -> Result<()> {
    let first = series.first().ok_or_else(|| Error::InvalidArgument("no series to write".into()))?;
    let m = FeatureMatrix::new(
        first.days.clone(),
        series.iter().map(|s| s.name.clone()).collect(),
        series.iter().map(|s| s.values.clone()).collect(),
    )?;
    if series.iter().any(|s| s.days != first.days) {
        return Err(Error::MisalignedSeries("series do not share a day axis".into()));
    }
    m.write_csv(out)
}

/// Columns `<name>_lag<k>` with value `series[t - k]`, for every series (in
/// input order) and every lag (ascending). The first `max(lags)` rows are
/// dropped so that every entry is defined.
pub fn make_lag_matrix(series: &[DailySeries], lags: &BTreeSet<usize>) -> Result<FeatureMatrix> {
    let first = series.first().ok_or_else(|| Error::InvalidArgument("no series given".into()))?;
    let max_lag = *lags.iter().next_back().ok_or_else(|| Error::InvalidArgument("no lags given".into()))?;
    if series.iter().any(|s| s.days != first.days) {
        return Err(Error::MisalignedSeries("series do not share a day axis".into()));
    }
    let len = first.len();
    if max_lag >= len {
        return Err(Error::LagTooLarge { lag: max_lag, len });
    }
    let mut names = Vec::new();
    let mut columns = Vec::new();
    for s in series {
        for &k in lags {
            names.push(format!("{}_lag{k}", s.name));
            columns.push((max_lag..len).map(|t| s.values[t - k]).collect());
        }
    }
    FeatureMatrix::new(first.days[max_lag..].to_vec(), names, columns)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReturnSeries {
    dates: Vec<Day>,
    returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(dates: Vec<Day>, returns: Vec<f64>) -> Result<ReturnSeries> {
        if dates.len() != returns.len() {
            return Err(Error::MisalignedSeries("return dates and values differ in length".into()));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::MisalignedSeries("return dates are not strictly increasing".into()));
        }
        if returns.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidArgument("non-finite return".into()));
        }
        Ok(ReturnSeries { dates, returns })
    }

    pub fn dates(&self) -> &[Day] {
        &self.dates
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

/// `r_t = (p_t - p_{t-1}) / p_{t-1}`, dated at `t`.
pub fn price_returns(prices: &DailySeries) -> Result<ReturnSeries> {
    if prices.len() < 2 {
        return Err(Error::InvalidArgument("need at least two prices".into()));
    }
    if let Some((d, &p)) = prices.days.iter().zip(&prices.values).find(|&(_, &p)| p <= 0.0) {
        return Err(Error::NonpositivePrice { date: d.to_string(), price: p });
    }
    let returns = prices.values.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect();
    ReturnSeries::new(prices.days[1..].to_vec(), returns)
}

#[derive(Deserialize)]
struct PriceRow {
    date: String,
    close: f64,
}

/// Reads a `date,close` CSV; rows are sorted by date.
pub fn read_prices<R: Read>(input: R, name: &str) -> Result<DailySeries> {
    let mut reader = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in reader.deserialize::<PriceRow>() {
        let rec = rec?;
        rows.push((rec.date.parse::<Day>()?, rec.close));
    }
    rows.sort_by_key(|r| r.0);
    let (days, values) = rows.into_iter().unzip();
    DailySeries::new(name, days, values)
}

/// Pairs the features of day `t` with the return `horizon` observations
/// later on the return axis. Both outputs are dated by the feature day.
pub fn align(x: &FeatureMatrix, y: &ReturnSeries, horizon: usize) -> Result<(FeatureMatrix, ReturnSeries)> {
    let by_date: BTreeMap<Day, usize> = x.dates.iter().enumerate().map(|(i, &d)| (d, i)).collect();
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for j in horizon..y.len() {
        if let Some(&i) = by_date.get(&y.dates[j - horizon]) {
            rows.push(i);
            targets.push(y.returns[j]);
        }
    }
    if rows.is_empty() {
        return Err(Error::NoOverlap);
    }
    let xs = x.select_rows(&rows);
    let ys = ReturnSeries::new(xs.dates.clone(), targets)?;
    Ok((xs, ys))
}
