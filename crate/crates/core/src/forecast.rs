//! Direct multi-day-ahead forecasting of clinical outcomes with GP models,
//! plus the persistence baseline and a rolling-origin evaluation harness.

use chrono::{Duration, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GpFitOptions, GpModel, KernelKind, KernelSpec};
use crate::timeseries::{self, NormalizationParams, TimeSeries};

pub const DEFAULT_LAGS: usize = 6;
pub const DEFAULT_HORIZONS: [usize; 2] = [7, 14];
pub const DEATHS_START_THRESHOLD: f64 = 10.0;
pub const CASES_START_THRESHOLD: f64 = 250.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ForecastKind {
    #[serde(rename = "AR-F")]
    ArF,
    #[serde(rename = "SAR-F")]
    SarF,
    #[serde(rename = "PER-F")]
    PerF,
}

impl ForecastKind {
    pub const ALL: [ForecastKind; 3] = [ForecastKind::ArF, ForecastKind::SarF, ForecastKind::PerF];

    pub fn label(self) -> &'static str {
        match self {
            ForecastKind::ArF => "AR-F",
            ForecastKind::SarF => "SAR-F",
            ForecastKind::PerF => "PER-F",
        }
    }

    fn kernel(self) -> Option<KernelKind> {
        match self {
            ForecastKind::ArF => Some(KernelKind::Autoregressive),
            ForecastKind::SarF => Some(KernelKind::SearchAutoregressive),
            ForecastKind::PerF => None,
        }
    }
}

/// Mean of the min-max normalised query series.
pub fn search_signal(queries: &[TimeSeries]) -> Result<TimeSeries> {
    let first = queries
        .first()
        .ok_or_else(|| Error::invalid("search signal needs at least one query"))?;
    let mut total = vec![0.0; first.len()];
    for q in queries {
        if !q.same_span(first) {
            return Err(Error::alignment("query series must share a span"));
        }
        let (v, _) = timeseries::min_max_values(q.values())?;
        total.iter_mut().zip(v).for_each(|(t, x)| *t += x);
    }
    let n = queries.len() as f64;
    TimeSeries::new(first.start(), total.into_iter().map(|v| v / n).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaggedDesign {
    /// `[z_t..z_{t-L}, y_t..y_{t-L}]` (SAR-F) or `[y_t..y_{t-L}]` (AR-F).
    pub rows: DMatrix<f64>,
    /// `y_{t+D}`.
    pub targets: Vec<f64>,
    /// Index `t` of each row's last observation.
    pub origins: Vec<usize>,
    pub lags: usize,
    pub horizon: usize,
    pub kind: KernelKind,
}

fn feature_row(z: &[f64], y: &[f64], t: usize, lags: usize, kind: KernelKind) -> Vec<f64> {
    let mut row = Vec::with_capacity(2 * (lags + 1));
    if kind == KernelKind::SearchAutoregressive {
        row.extend((0..=lags).map(|k| z[t - k]));
    }
    row.extend((0..=lags).map(|k| y[t - k]));
    row
}

/// Design over every origin `t` with `L ≤ t` and `t + D < len`.
pub fn build_design_values(z: &[f64], y: &[f64], lags: usize, horizon: usize, kind: KernelKind) -> Result<LaggedDesign> {
    if z.len() != y.len() {
        return Err(Error::alignment(format!("search has {} days, outcome {}", z.len(), y.len())));
    }
    if horizon == 0 {
        return Err(Error::invalid("forecast horizon must be at least one day"));
    }
    if y.len() < lags + horizon + 1 {
        return Err(Error::InsufficientHistory {
            needed: lags + horizon + 1,
            available: y.len(),
        });
    }
    let origins: Vec<usize> = (lags..y.len() - horizon).collect();
    let width = if kind == KernelKind::SearchAutoregressive { 2 * (lags + 1) } else { lags + 1 };
    let mut rows = DMatrix::zeros(origins.len(), width);
    for (r, &t) in origins.iter().enumerate() {
        for (c, v) in feature_row(z, y, t, lags, kind).into_iter().enumerate() {
            rows[(r, c)] = v;
        }
    }
    Ok(LaggedDesign {
        rows,
        targets: origins.iter().map(|&t| y[t + horizon]).collect(),
        origins,
        lags,
        horizon,
        kind,
    })
}

pub fn build_design(z: &TimeSeries, y: &TimeSeries, lags: usize, horizon: usize, kind: KernelKind) -> Result<LaggedDesign> {
    if !z.same_span(y) {
        return Err(Error::alignment("search signal and outcome must share a span"));
    }
    build_design_values(z.values(), y.values(), lags, horizon, kind)
}

/// `ŷ_{t+D} = y_t`; the result is dated `D` days after `y`.
pub fn persistence_forecast(y: &TimeSeries, horizon: usize) -> Result<TimeSeries> {
    TimeSeries::new(y.start() + Duration::days(horizon as i64), y.values().to_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    pub target_date: NaiveDate,
    pub origin_date: NaiveDate,
    /// Latest target date among the training rows.
    pub train_last_target: Option<NaiveDate>,
    pub forecast: f64,
    pub stddev: f64,
    pub truth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub kind: ForecastKind,
    pub horizon: usize,
    pub points: Vec<ForecastPoint>,
    /// Test days whose model could not be fitted.
    pub missing: Vec<NaiveDate>,
    pub mae: f64,
    /// Population standard deviation of the absolute errors.
    pub mae_std: f64,
}

impl ForecastRecord {
    fn new(kind: ForecastKind, horizon: usize, points: Vec<ForecastPoint>, missing: Vec<NaiveDate>) -> Self {
        let errors: Vec<f64> = points.iter().map(|p| (p.forecast - p.truth).abs()).collect();
        let (mae, mae_std) = if errors.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (timeseries::mean(&errors), timeseries::variance(&errors).sqrt())
        };
        Self { kind, horizon, points, missing, mae, mae_std }
    }

    /// Test days where training used a target dated after the forecast origin.
    pub fn leakage_violations(&self) -> usize {
        self.points
            .iter()
            .filter(|p| p.train_last_target.is_some_and(|d| d > p.origin_date) || p.origin_date >= p.target_date)
            .count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RollingOptions {
    pub lags: usize,
    pub horizon: usize,
    /// Testing starts once the cumulative outcome at the origin reaches this value.
    pub start_threshold: f64,
    pub min_train_rows: usize,
    /// Only the last this many admissible test days are evaluated.
    pub max_test_days: Option<usize>,
    pub gp: GpFitOptions,
    /// After the first test day, start from the previous day's hyperparameters with a single start.
    pub warm_start: bool,
    pub kinds: Vec<ForecastKind>,
}

impl Default for RollingOptions {
    fn default() -> Self {
        Self {
            lags: DEFAULT_LAGS,
            horizon: DEFAULT_HORIZONS[0],
            start_threshold: DEATHS_START_THRESHOLD,
            min_train_rows: 10,
            max_test_days: None,
            gp: GpFitOptions::default(),
            warm_start: true,
            kinds: ForecastKind::ALL.to_vec(),
        }
    }
}

/// Origins `t` that can be tested: enough training rows, start rule met, truth available.
pub fn test_origins(y: &[f64], options: &RollingOptions) -> Vec<usize> {
    let (lags, horizon) = (options.lags, options.horizon);
    let earliest = lags + horizon + options.min_train_rows.max(2) - 1;
    let mut cumulative = 0.0;
    let mut out = Vec::new();
    for (t, v) in y.iter().enumerate() {
        cumulative += v;
        if t + horizon >= y.len() {
            break;
        }
        if t >= earliest && cumulative >= options.start_threshold {
            out.push(t);
        }
    }
    if let Some(k) = options.max_test_days {
        let skip = out.len().saturating_sub(k);
        out.drain(..skip);
    }
    out
}

fn normalised_prefix(values: &[f64], t: usize) -> Result<(Vec<f64>, NormalizationParams)> {
    timeseries::min_max_values(&values[..=t])
}

/// Retrains every model at every test origin on data observed up to that origin.
pub fn rolling_evaluation(z: &TimeSeries, y: &TimeSeries, options: &RollingOptions) -> Result<Vec<ForecastRecord>> {
    if !z.same_span(y) {
        return Err(Error::alignment("search signal and outcome must share a span"));
    }
    let (zv, yv) = (z.values(), y.values());
    let (lags, horizon) = (options.lags, options.horizon);
    let origins = test_origins(yv, options);
    if origins.is_empty() {
        return Err(Error::InsufficientHistory {
            needed: lags + horizon + options.min_train_rows + 1,
            available: yv.len(),
        });
    }
    let mut records = Vec::new();
    for &kind in &options.kinds {
        let mut points = Vec::with_capacity(origins.len());
        let mut missing = Vec::new();
        let mut previous: Option<KernelSpec> = None;
        for &t in &origins {
            let target_date = y.date_at(t + horizon);
            let origin_date = y.date_at(t);
            let truth = yv[t + horizon];
            let Some(gp_kind) = kind.kernel() else {
                points.push(ForecastPoint {
                    target_date,
                    origin_date,
                    train_last_target: None,
                    forecast: yv[t],
                    stddev: 0.0,
                    truth,
                });
                continue;
            };
            let (zn, _) = normalised_prefix(zv, t)?;
            let (yn, params) = normalised_prefix(yv, t)?;
            let design = build_design_values(&zn, &yn, lags, horizon, gp_kind)?;
            let train_last_target = design.origins.last().map(|&o| y.date_at(o + horizon));
            let mut gp_options = options.gp.clone();
            if options.warm_start {
                if let Some(spec) = previous.take() {
                    gp_options.initial = Some(spec);
                    gp_options.restarts = 1;
                }
            }
            gp_options.seed = options.gp.seed.wrapping_add(t as u64);
            match GpModel::fit(gp_kind, lags, &design.rows, &design.targets, &gp_options) {
                Ok(model) => {
                    let (mean, var) = model.predict(&feature_row(&zn, &yn, t, lags, gp_kind))?;
                    points.push(ForecastPoint {
                        target_date,
                        origin_date,
                        train_last_target,
                        forecast: params.denormalize(mean),
                        stddev: var.sqrt() * params.range(),
                        truth,
                    });
                    previous = Some(model.kernel);
                }
                Err(e) if e.is_numerical() => missing.push(target_date),
                Err(e) => return Err(e),
            }
        }
        let record = ForecastRecord::new(kind, horizon, points, missing);
        assert_eq!(record.leakage_violations(), 0, "training data reached past a forecast origin");
        records.push(record);
    }
    Ok(records)
}

/// Min-max over every cell jointly, then the mean of each column.
pub fn normalize_mae_table(cells: &[Vec<f64>]) -> Result<Vec<f64>> {
    let cols = cells.first().map_or(0, Vec::len);
    if cols == 0 || cells.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid("MAE table must be a non-empty rectangle"));
    }
    let flat: Vec<f64> = cells.iter().flatten().copied().collect();
    let (normed, _) = timeseries::min_max_values(&flat)?;
    Ok((0..cols)
        .map(|c| normed.iter().skip(c).step_by(cols).sum::<f64>() / cells.len() as f64)
        .collect())
}
