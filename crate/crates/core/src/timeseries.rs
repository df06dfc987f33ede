//! Date-indexed daily series and the transforms shared by every model.
//!
//! A [`TimeSeries`] is a start date plus one value per consecutive day. All
//! transforms are pure and return new series; those that consume a warm-up
//! (harmonic smoothing) advance the start date accordingly.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    start: NaiveDate,
    values: Vec<f64>,
}

impl TimeSeries {
    /// Builds a gap-free daily series. Rejects empty or non-finite input.
    pub fn new(start: NaiveDate, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("a time series needs at least one value"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at {}",
                start + Duration::days(i as i64)
            )));
        }
        Ok(Self { start, values })
    }

    pub fn constant(start: NaiveDate, len: usize, value: f64) -> Result<Self> {
        Self::new(start, vec![value; len])
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    /// Last covered date (inclusive).
    pub fn end(&self) -> NaiveDate {
        self.date_at(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start + Duration::days(index as i64)
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start).num_days();
        (offset >= 0 && (offset as usize) < self.values.len()).then_some(offset as usize)
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.values.len()).map(move |i| self.date_at(i))
    }

    pub fn value_on(&self, date: NaiveDate) -> Option<f64> {
        self.index_of(date).map(|i| self.values[i])
    }

    /// Sub-series covering `from..=to`; both dates must fall inside the span.
    pub fn slice_dates(&self, from: NaiveDate, to: NaiveDate) -> Result<Self> {
        let (Some(a), Some(b)) = (self.index_of(from), self.index_of(to)) else {
            return Err(Error::alignment(format!(
                "range {from}..={to} is outside {}..={}",
                self.start,
                self.end()
            )));
        };
        if a > b {
            return Err(Error::invalid(format!("empty range {from}..={to}")));
        }
        Ok(Self {
            start: from,
            values: self.values[a..=b].to_vec(),
        })
    }

    /// Applies `f` element-wise, keeping the span.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.start, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn same_span(&self, other: &TimeSeries) -> bool {
        self.start == other.start && self.len() == other.len()
    }
}

/// Min and max of the series a min-max normalisation was computed on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min: f64,
    pub max: f64,
}

impl NormalizationParams {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || max < min {
            return Err(Error::invalid(format!("bad normalisation range [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    /// Set when the source series had no spread; its normalised form is all zeros.
    pub fn is_constant(&self) -> bool {
        !(self.max - self.min > constant_tolerance(self.min.abs().max(self.max.abs())))
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn normalize(&self, v: f64) -> f64 {
        if self.is_constant() {
            0.0
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        v * (self.max - self.min) + self.min
    }
}

/// Maximal lag-shifted Pearson correlation between two series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagCorrelation {
    /// Positive when the second series is shifted back in time to line up.
    pub lag_days: i64,
    pub r: f64,
}

fn constant_tolerance(scale: f64) -> f64 {
    64.0 * f64::EPSILON * scale
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population variance.
pub(crate) fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

/// True when the values are equal up to accumulated rounding.
pub fn is_constant(values: &[f64]) -> bool {
    let (lo, hi) = min_max_of(values);
    !(hi - lo > constant_tolerance(lo.abs().max(hi.abs())))
}

fn min_max_of(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Weights `1/p` for `p = 1..=window`, most recent first.
pub fn harmonic_weights(window: usize) -> Vec<f64> {
    (1..=window).map(|p| 1.0 / p as f64).collect()
}

/// Trailing harmonic mean over slices; output is `len - window + 1` long.
pub fn harmonic_smooth_values(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::invalid("smoothing window must be positive"));
    }
    if values.len() < window {
        return Err(Error::InsufficientHistory {
            needed: window,
            available: values.len(),
        });
    }
    let weights = harmonic_weights(window);
    let total: f64 = weights.iter().sum();
    Ok((window - 1..values.len())
        .map(|i| {
            weights
                .iter()
                .enumerate()
                .map(|(k, w)| values[i - k] * w)
                .sum::<f64>()
                / total
        })
        .collect())
}

/// Harmonically weighted trailing mean of the `window` most recent days.
///
/// `s_i = (Σ_{p=1..D} x_{i-p+1} / p) / (Σ_{p=1..D} 1/p)`. The first `window - 1`
/// days have no full history and are dropped.
pub fn harmonic_smooth(series: &TimeSeries, window: usize) -> Result<TimeSeries> {
    let values = harmonic_smooth_values(series.values(), window)?;
    TimeSeries::new(series.date_at(window - 1), values)
}

/// Min-max normalisation of a slice; constant input maps to zeros.
pub fn min_max_values(values: &[f64]) -> Result<(Vec<f64>, NormalizationParams)> {
    if values.is_empty() {
        return Err(Error::invalid("cannot normalise an empty vector"));
    }
    let (lo, hi) = min_max_of(values);
    let params = NormalizationParams::new(lo, hi)?;
    Ok((values.iter().map(|&v| params.normalize(v)).collect(), params))
}

pub fn min_max_normalize(series: &TimeSeries) -> Result<(TimeSeries, NormalizationParams)> {
    let (values, params) = min_max_values(series.values())?;
    Ok((TimeSeries::new(series.start(), values)?, params))
}

pub fn min_max_denormalize(series: &TimeSeries, params: &NormalizationParams) -> Result<TimeSeries> {
    series.map(|v| params.denormalize(v))
}

/// Standardisation with the population standard deviation.
pub fn z_score_values(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            available: values.len(),
        });
    }
    if is_constant(values) {
        return Err(Error::Degenerate("z-score of a constant series".into()));
    }
    let m = mean(values);
    let sd = variance(values).sqrt();
    Ok(values.iter().map(|v| (v - m) / sd).collect())
}

pub fn z_score(series: &TimeSeries) -> Result<TimeSeries> {
    TimeSeries::new(series.start(), z_score_values(series.values())?)
}

/// Residuals after removing the least-squares line over the day index.
pub fn linear_detrend_values(values: &[f64]) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            available: n,
        });
    }
    let t_mean = (n - 1) as f64 / 2.0;
    let y_mean = mean(values);
    let (mut sty, mut stt) = (0.0, 0.0);
    for (i, &y) in values.iter().enumerate() {
        let dt = i as f64 - t_mean;
        sty += dt * (y - y_mean);
        stt += dt * dt;
    }
    let slope = sty / stt;
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, &y)| (y - y_mean) - slope * (i as f64 - t_mean))
        .collect())
}

pub fn linear_detrend(series: &TimeSeries) -> Result<TimeSeries> {
    TimeSeries::new(series.start(), linear_detrend_values(series.values())?)
}

/// Centred moving average; near the edges the window is truncated to the days
/// that exist, so the output keeps the input length.
pub fn moving_average(series: &TimeSeries, window: usize) -> Result<TimeSeries> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "moving-average window must be odd and positive, got {window}"
        )));
    }
    let values = series.values();
    if values.len() < window {
        return Err(Error::InsufficientHistory {
            needed: window,
            available: values.len(),
        });
    }
    let half = window / 2;
    let out = (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(values.len() - 1);
            mean(&values[lo..=hi])
        })
        .collect();
    TimeSeries::new(series.start(), out)
}

/// Weekly means over complete Monday-to-Sunday weeks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeeklySeries {
    /// Monday of the first complete week.
    pub first_week: NaiveDate,
    pub values: Vec<f64>,
}

impl WeeklySeries {
    pub fn week_start(&self, index: usize) -> NaiveDate {
        self.first_week + Duration::weeks(index as i64)
    }
}

/// Means of each complete Monday-aligned week; partial weeks at either end are dropped.
pub fn resample_weekly(series: &TimeSeries) -> Result<WeeklySeries> {
    let skip = (7 - series.start().weekday().num_days_from_monday() as usize) % 7;
    let available = series.len().saturating_sub(skip);
    if available < 7 {
        return Err(Error::InsufficientHistory {
            needed: 7,
            available,
        });
    }
    let values = series.values()[skip..]
        .chunks_exact(7)
        .map(mean)
        .collect();
    let first_week = series.date_at(skip);
    debug_assert_eq!(first_week.weekday(), Weekday::Mon);
    Ok(WeeklySeries { first_week, values })
}

/// Pearson correlation of two equally long slices.
pub fn pearson_values(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::InsufficientHistory {
            needed: 3,
            available: a.len(),
        });
    }
    if is_constant(a) || is_constant(b) {
        return Err(Error::Degenerate("correlation with a constant series".into()));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson(a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
    pearson_values(a.values(), b.values())
}

/// Index ranges `(a_range, b_range)` pairing `a[t]` with `b[t + lag]`.
pub fn lag_overlap(
    a_len: usize,
    b_len: usize,
    lag: i64,
) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let a_lo = if lag < 0 { (-lag) as usize } else { 0 };
    let a_hi_signed = (b_len as i64 - lag).min(a_len as i64);
    let a_hi = a_hi_signed.max(a_lo as i64) as usize;
    let b_lo = (a_lo as i64 + lag) as usize;
    let b_hi = (a_hi as i64 + lag).max(b_lo as i64) as usize;
    (a_lo..a_hi, b_lo..b_hi)
}

/// Correlation of `a[t]` with `b[t + lag]` over the overlap; `None` when the
/// overlap is shorter than 3 days or either side is constant on it.
pub fn lagged_pearson(a: &[f64], b: &[f64], lag: i64) -> Option<f64> {
    let (ra, rb) = lag_overlap(a.len(), b.len(), lag);
    if ra.len() < 3 {
        return None;
    }
    pearson_values(&a[ra], &b[rb]).ok()
}

/// Candidate lags in tie-break order: 0, -1, 1, -2, 2, ...
pub fn lags_by_preference(max_shift: usize) -> impl Iterator<Item = i64> {
    std::iter::once(0).chain((1..=max_shift as i64).flat_map(|k| [-k, k]))
}

/// Tolerance under which two correlations count as tied.
pub(crate) const TIE_EPS: f64 = 1e-12;

/// Shift of `b` relative to `a` that maximises their correlation.
///
/// A positive lag means `b` lags behind `a` (it is brought back by `lag` days to
/// line up). Ties go to the smallest `|lag|`, then to the negative lag.
pub fn best_lag_values(a: &[f64], b: &[f64], max_shift: usize) -> Result<LagCorrelation> {
    let mut best: Option<LagCorrelation> = None;
    for lag in lags_by_preference(max_shift) {
        if let Some(r) = lagged_pearson(a, b, lag) {
            if best.is_none_or(|b| r > b.r + TIE_EPS) {
                best = Some(LagCorrelation { lag_days: lag, r });
            }
        }
    }
    best.ok_or_else(|| {
        Error::InsufficientOverlap(format!(
            "no shift within ±{max_shift} days leaves 3 non-constant overlapping days"
        ))
    })
}

pub fn best_lag_correlation(
    a: &TimeSeries,
    b: &TimeSeries,
    max_shift: usize,
) -> Result<LagCorrelation> {
    best_lag_values(a.values(), b.values(), max_shift)
}

pub fn mae_values(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            estimate.len(),
            truth.len()
        )));
    }
    if estimate.is_empty() {
        return Err(Error::invalid("mean absolute error of empty vectors"));
    }
    Ok(estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t).abs())
        .sum::<f64>()
        / estimate.len() as f64)
}

pub fn mae(estimate: &TimeSeries, truth: &TimeSeries) -> Result<f64> {
    mae_values(estimate.values(), truth.values())
}

/// Quantile by linear interpolation between order statistics (`h = (n − 1)p`).
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("quantile level {p} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}
