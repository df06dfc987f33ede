//! Symptom-weighted unsupervised search score and its multi-year seasonal baseline.
//!
//! Every symptom category is a set of queries whose frequencies are summed,
//! smoothed, detrended over the full span and min-max normalised. Categories
//! are then averaged with symptom-occurrence weights (`x = Xw / Σw`). The
//! historical part of the panel is cut into fixed 365-day seasons to give a
//! mean trend with a two-standard-deviation band.

use chrono::{Datelike, Duration, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{self, NormalizationParams, TimeSeries};

/// Harmonic smoothing window applied to every category before weighting.
pub const CATEGORY_SMOOTHING_DAYS: usize = 14;

/// Weight of the category holding generic disease terms.
pub const COVID_TERMS_WEIGHT: f64 = 1.0;

/// Symptom occurrence probabilities among confirmed cases (first-few-hundred survey).
pub const FF100_SYMPTOMS: [(&str, f64); 19] = [
    ("cough", 0.777),
    ("fatigue", 0.709),
    ("fever", 0.601),
    ("headache", 0.567),
    ("muscle ache", 0.509),
    ("appetite loss", 0.441),
    ("shortness of breath", 0.404),
    ("sore throat", 0.386),
    ("joint ache", 0.339),
    ("runny nose", 0.325),
    ("loss of smell", 0.291),
    ("diarrhoea", 0.276),
    ("sneezing", 0.239),
    ("nausea", 0.236),
    ("vomiting", 0.087),
    ("altered consciousness", 0.068),
    ("nose bleed", 0.060),
    ("rash", 0.052),
    ("seizure", 0.008),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ff100Weights {
    entries: Vec<(String, f64)>,
}

impl Default for Ff100Weights {
    fn default() -> Self {
        Self {
            entries: FF100_SYMPTOMS
                .iter()
                .map(|(n, w)| (n.to_string(), *w))
                .collect(),
        }
    }
}

impl Ff100Weights {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        if entries.len() != FF100_SYMPTOMS.len() {
            return Err(Error::invalid(format!(
                "expected {} symptom weights, got {}",
                FF100_SYMPTOMS.len(),
                entries.len()
            )));
        }
        if let Some((n, w)) = entries.iter().find(|(_, w)| !(*w > 0.0 && *w <= 1.0)) {
            return Err(Error::invalid(format!("weight of {n} must be in (0, 1], got {w}")));
        }
        Ok(Self { entries })
    }

    pub fn get(&self, symptom: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(n, _)| n == symptom)
            .map(|(_, w)| *w)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryKind {
    Symptom,
    CovidTerms,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymptomCategory {
    pub name: String,
    pub weight: f64,
    pub kind: CategoryKind,
    pub member_queries: Vec<String>,
}

impl SymptomCategory {
    pub fn new(
        name: impl Into<String>,
        weight: f64,
        kind: CategoryKind,
        member_queries: Vec<String>,
    ) -> Result<Self> {
        let name = name.into();
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(Error::invalid(format!(
                "category {name}: weight must be in (0, 1], got {weight}"
            )));
        }
        if kind == CategoryKind::CovidTerms && weight != COVID_TERMS_WEIGHT {
            return Err(Error::invalid(format!(
                "category {name}: disease-terms category must carry weight {COVID_TERMS_WEIGHT}"
            )));
        }
        if member_queries.is_empty() {
            return Err(Error::invalid(format!("category {name} has no queries")));
        }
        Ok(Self {
            name,
            weight,
            kind,
            member_queries,
        })
    }
}

/// Element-wise sum of the member query series of one category.
pub fn aggregate_category(query_series: &[TimeSeries]) -> Result<TimeSeries> {
    let (first, rest) = query_series
        .split_first()
        .ok_or_else(|| Error::invalid("a category needs at least one query series"))?;
    let mut total = first.values().to_vec();
    for s in rest {
        if !s.same_span(first) {
            return Err(Error::alignment(format!(
                "query spans differ: {}..={} vs {}..={}",
                first.start(),
                first.end(),
                s.start(),
                s.end()
            )));
        }
        total.iter_mut().zip(s.values()).for_each(|(t, v)| *t += v);
    }
    TimeSeries::new(first.start(), total)
}

/// Smooth (harmonic, `window` days), detrend, then min-max normalise.
///
/// The returned params describe the detrended series; they are flagged
/// constant when the category carries no signal.
pub fn preprocess_category_with(
    series: &TimeSeries,
    window: usize,
) -> Result<(TimeSeries, NormalizationParams)> {
    let smoothed = timeseries::harmonic_smooth(series, window)?;
    let detrended = timeseries::linear_detrend_values(smoothed.values())?;
    let scale = smoothed.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // Rounding left over from smoothing/detrending a flat series must not be
    // stretched to [0, 1].
    if detrended
        .iter()
        .all(|v| v.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE))
    {
        let zeros = TimeSeries::constant(smoothed.start(), smoothed.len(), 0.0)?;
        return Ok((zeros, NormalizationParams::new(0.0, 0.0)?));
    }
    let (values, params) = timeseries::min_max_values(&detrended)?;
    Ok((TimeSeries::new(smoothed.start(), values)?, params))
}

pub fn preprocess_category(series: &TimeSeries) -> Result<(TimeSeries, NormalizationParams)> {
    preprocess_category_with(series, CATEGORY_SMOOTHING_DAYS)
}

/// Weighted average of the category columns per day: `Xw / Σw`.
pub fn weighted_score(x: &DMatrix<f64>, weights: &[f64]) -> Result<Vec<f64>> {
    if x.ncols() != weights.len() {
        return Err(Error::invalid(format!(
            "{} categories but {} weights",
            x.ncols(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("at least one weight must be positive"));
    }
    Ok(x.row_iter()
        .map(|row| {
            row.iter()
                .zip(weights)
                .map(|(v, w)| v * w)
                .sum::<f64>()
                / total
        })
        .collect())
}

/// Calendar day on which each seasonal year begins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonStart {
    pub month: u32,
    pub day: u32,
}

impl Default for SeasonStart {
    fn default() -> Self {
        Self { month: 9, day: 30 }
    }
}

impl SeasonStart {
    pub fn new(month: u32, day: u32) -> Result<Self> {
        // 2021 is not a leap year, so Feb 29 is rejected here.
        if NaiveDate::from_ymd_opt(2021, month, day).is_none() {
            return Err(Error::invalid(format!("invalid season start {month:02}-{day:02}")));
        }
        Ok(Self { month, day })
    }

    fn in_year(&self, year: i32) -> NaiveDate {
        NaiveDate::from_ymd_opt(year, self.month, self.day).expect("validated month/day")
    }

    /// First season start on or after `date`.
    pub fn first_on_or_after(&self, date: NaiveDate) -> NaiveDate {
        let candidate = self.in_year(date.year());
        if candidate >= date {
            candidate
        } else {
            self.in_year(date.year() + 1)
        }
    }
}

pub const DAYS_PER_SEASON: usize = 365;

/// Mean seasonal trend with a ±2σ band (population σ across seasons).
///
/// Index `i` is the `i`-th day of the season with Feb 29 skipped; the series is
/// dated from the season start that follows the historical span.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineBand {
    pub mean_trend: TimeSeries,
    pub upper: TimeSeries,
    pub lower: TimeSeries,
    pub seasons: usize,
}

fn is_leap_day(d: NaiveDate) -> bool {
    d.month() == 2 && d.day() == 29
}

/// Splits a daily series into complete 365-day seasons (Feb 29 dropped).
pub fn split_seasons(
    values: &[f64],
    start: NaiveDate,
    season_start: SeasonStart,
) -> (Vec<Vec<f64>>, NaiveDate) {
    let end = start + Duration::days(values.len() as i64);
    let mut seasons = Vec::new();
    let mut cursor = season_start.first_on_or_after(start);
    loop {
        let next = season_start.in_year(cursor.year() + 1);
        if next > end {
            break;
        }
        let season: Vec<f64> = (0..(next - cursor).num_days())
            .map(|k| cursor + Duration::days(k))
            .filter(|d| !is_leap_day(*d))
            .map(|d| values[(d - start).num_days() as usize])
            .collect();
        debug_assert_eq!(season.len(), DAYS_PER_SEASON);
        seasons.push(season);
        cursor = next;
    }
    (seasons, cursor)
}

pub fn historical_baseline(
    h: &DMatrix<f64>,
    h_start: NaiveDate,
    weights: &[f64],
    season_start: SeasonStart,
) -> Result<BaselineBand> {
    let weighted = weighted_score(h, weights)?;
    let (seasons, next_season) = split_seasons(&weighted, h_start, season_start);
    if seasons.len() < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2 * DAYS_PER_SEASON,
            available: weighted.len(),
        });
    }
    let n = seasons.len() as f64;
    let (mut mean, mut upper, mut lower) = (
        Vec::with_capacity(DAYS_PER_SEASON),
        Vec::with_capacity(DAYS_PER_SEASON),
        Vec::with_capacity(DAYS_PER_SEASON),
    );
    for day in 0..DAYS_PER_SEASON {
        let m = seasons.iter().map(|s| s[day]).sum::<f64>() / n;
        let var = seasons.iter().map(|s| (s[day] - m).powi(2)).sum::<f64>() / n;
        let half = 2.0 * var.sqrt();
        mean.push(m);
        upper.push(m + half);
        lower.push(m - half);
    }
    Ok(BaselineBand {
        mean_trend: TimeSeries::new(next_season, mean)?,
        upper: TimeSeries::new(next_season, upper)?,
        lower: TimeSeries::new(next_season, lower)?,
        seasons: seasons.len(),
    })
}

/// Preprocessed category matrices split into historical and current periods.
#[derive(Clone, Debug)]
pub struct SymptomPanel {
    pub categories: Vec<SymptomCategory>,
    /// Days from `current_start` onwards, one column per category.
    pub current: DMatrix<f64>,
    pub current_start: NaiveDate,
    /// Days before `current_start`.
    pub historical: DMatrix<f64>,
    pub historical_start: NaiveDate,
    /// Categories whose preprocessed series carried no signal.
    pub constant_categories: Vec<String>,
}

impl SymptomPanel {
    /// Builds the panel from one raw (summed) series per category. Preprocessing
    /// runs over each category's full span before the historical/current split.
    pub fn from_category_series(
        categories: Vec<SymptomCategory>,
        raw: &[TimeSeries],
        current_start: NaiveDate,
        smoothing_window: usize,
    ) -> Result<Self> {
        if categories.is_empty() || categories.len() != raw.len() {
            return Err(Error::invalid(format!(
                "{} categories but {} series",
                categories.len(),
                raw.len()
            )));
        }
        let mut processed = Vec::with_capacity(raw.len());
        let mut constant_categories = Vec::new();
        for (cat, series) in categories.iter().zip(raw) {
            if !series.same_span(&raw[0]) {
                return Err(Error::alignment(format!(
                    "category {} spans {}..={}, expected {}..={}",
                    cat.name,
                    series.start(),
                    series.end(),
                    raw[0].start(),
                    raw[0].end()
                )));
            }
            let (s, params) = preprocess_category_with(series, smoothing_window)?;
            if params.is_constant() {
                constant_categories.push(cat.name.clone());
            }
            processed.push(s);
        }
        let start = processed[0].start();
        let days = processed[0].len();
        let split = (current_start - start).num_days().clamp(0, days as i64) as usize;
        if split == days {
            return Err(Error::invalid(format!(
                "current period starting {current_start} is after the data ends"
            )));
        }
        let k = processed.len();
        let historical = DMatrix::from_fn(split, k, |i, j| processed[j].values()[i]);
        let current = DMatrix::from_fn(days - split, k, |i, j| processed[j].values()[split + i]);
        Ok(Self {
            categories,
            current,
            current_start: start + Duration::days(split as i64),
            historical,
            historical_start: start,
            constant_categories,
        })
    }

    pub fn weights(&self) -> Vec<f64> {
        self.categories.iter().map(|c| c.weight).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub include_covid_terms: bool,
    /// Equal weights for every included category.
    pub uniform_weights: bool,
    pub season_start: SeasonStart,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            include_covid_terms: true,
            uniform_weights: false,
            season_start: SeasonStart::default(),
        }
    }
}

/// Current-period weighted score and the historical baseline band.
pub fn build_panel_scores(
    panel: &SymptomPanel,
    options: &ScoreOptions,
) -> Result<(TimeSeries, BaselineBand)> {
    let weights: Vec<f64> = panel
        .categories
        .iter()
        .map(|c| {
            let included = options.include_covid_terms || c.kind != CategoryKind::CovidTerms;
            match (included, options.uniform_weights) {
                (false, _) => 0.0,
                (true, true) => 1.0,
                (true, false) => c.weight,
            }
        })
        .collect();
    let score = TimeSeries::new(panel.current_start, weighted_score(&panel.current, &weights)?)?;
    let band = historical_baseline(
        &panel.historical,
        panel.historical_start,
        &weights,
        options.season_start,
    )?;
    Ok((score, band))
}
