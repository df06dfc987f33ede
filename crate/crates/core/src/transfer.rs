//! Transfer of a source-country elastic-net ensemble to a target country.
//!
//! Source queries are mapped to the target query in the same symptom category
//! that correlates best after a global temporal shift. Mapped target columns
//! are min-max normalised, rescaled to the source column means, and fed to
//! every model of the source path whose sparsity lies in the configured band.

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::elastic_net::{self, ElasticNetModel, RegularizationPath};
use crate::error::{Error, Result};
use crate::timeseries::{self, NormalizationParams, TimeSeries, TIE_EPS};

pub const DEFAULT_MAX_SHIFT: usize = 45;
pub const DEFAULT_MIN_ACTIVE: usize = 3;
pub const DEFAULT_MAX_ACTIVE: usize = 49;
pub const LOWER_QUANTILE: f64 = 0.025;
pub const UPPER_QUANTILE: f64 = 0.975;
const MIN_OVERLAP: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLabel {
    pub id: String,
    pub category: String,
}

impl QueryLabel {
    pub fn new(id: impl Into<String>, category: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            category: category.into(),
        }
    }
}

pub(crate) fn column(m: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = m.nrows();
    &m.as_slice()[j * n..(j + 1) * n]
}

/// Best target column (and its r) for every source column at every candidate shift.
struct ShiftTable {
    shifts: Vec<i64>,
    best: Vec<Vec<(usize, f64)>>,
}

impl ShiftTable {
    fn new(s: &DMatrix<f64>, t: &DMatrix<f64>, max_shift: usize) -> Result<Self> {
        if s.ncols() == 0 || t.ncols() == 0 {
            return Err(Error::invalid("source and target need at least one query each"));
        }
        let shifts: Vec<i64> = timeseries::lags_by_preference(max_shift).collect();
        for &lag in &shifts {
            let (a, _) = timeseries::lag_overlap(s.nrows(), t.nrows(), lag);
            if a.len() < MIN_OVERLAP {
                return Err(Error::InsufficientOverlap(format!(
                    "{} overlapping days at shift {lag}, need {MIN_OVERLAP}",
                    a.len()
                )));
            }
        }
        let best = shifts
            .iter()
            .map(|&lag| {
                (0..s.ncols())
                    .map(|i| best_target(s, i, t, 0..t.ncols(), lag))
                    .collect()
            })
            .collect();
        Ok(Self { shifts, best })
    }

    /// Shift maximising the mean best correlation over `sources`.
    fn best_shift(&self, sources: &[usize]) -> i64 {
        let mut best = (self.shifts[0], f64::NEG_INFINITY);
        for (k, &lag) in self.shifts.iter().enumerate() {
            let score = sources.iter().map(|&i| self.best[k][i].1).sum::<f64>() / sources.len() as f64;
            if score > best.1 + TIE_EPS {
                best = (lag, score);
            }
        }
        best.0
    }
}

/// Correlation at `lag` (positive: target delayed); undefined correlations count as 0.
fn lagged_r(s: &DMatrix<f64>, i: usize, t: &DMatrix<f64>, j: usize, lag: i64) -> f64 {
    timeseries::lagged_pearson(column(s, i), column(t, j), lag).unwrap_or(0.0)
}

fn best_target(
    s: &DMatrix<f64>,
    i: usize,
    t: &DMatrix<f64>,
    candidates: impl IntoIterator<Item = usize>,
    lag: i64,
) -> (usize, f64) {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for j in candidates {
        let r = lagged_r(s, i, t, j, lag);
        if r > best.1 + TIE_EPS {
            best = (j, r);
        }
    }
    best
}

/// Global shift in `[-z, z]` maximising the mean over source columns of their
/// best target correlation. Positive means the target lags the source.
pub fn align_temporal(s_active: &DMatrix<f64>, t: &DMatrix<f64>, max_shift: usize) -> Result<i64> {
    let table = ShiftTable::new(s_active, t, max_shift)?;
    Ok(table.best_shift(&(0..s_active.ncols()).collect::<Vec<_>>()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappedQuery {
    pub source: String,
    pub target: String,
    pub target_index: usize,
    pub category: String,
    pub r: f64,
    /// The source category had no target query; the best of all targets was used.
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryMapping {
    pub pairs: Vec<MappedQuery>,
    pub global_shift: i64,
}

pub fn map_queries(
    s_active: &DMatrix<f64>,
    source_labels: &[QueryLabel],
    t: &DMatrix<f64>,
    target_labels: &[QueryLabel],
    shift: i64,
) -> Result<QueryMapping> {
    if source_labels.len() != s_active.ncols() || target_labels.len() != t.ncols() {
        return Err(Error::invalid("every query column needs exactly one label"));
    }
    if t.ncols() == 0 {
        return Err(Error::invalid("target has no queries to map onto"));
    }
    let pairs = source_labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let same: Vec<usize> = (0..t.ncols())
                .filter(|&j| target_labels[j].category == label.category)
                .collect();
            let fallback = same.is_empty();
            let (j, r) = if fallback {
                best_target(s_active, i, t, 0..t.ncols(), shift)
            } else {
                best_target(s_active, i, t, same, shift)
            };
            MappedQuery {
                source: label.id.clone(),
                target: target_labels[j].id.clone(),
                target_index: j,
                category: label.category.clone(),
                r,
                fallback,
            }
        })
        .collect();
    Ok(QueryMapping {
        pairs,
        global_shift: shift,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaledTarget {
    pub matrix: DMatrix<f64>,
    pub ratios: Vec<f64>,
    /// Target columns with zero mean, left unscaled.
    pub zero_mean_columns: Vec<usize>,
}

/// Multiplies column `j` of `z` by `mean(s_j) / mean(z_j)`.
pub fn scale_target(z: &DMatrix<f64>, s_active: &DMatrix<f64>) -> Result<ScaledTarget> {
    if z.ncols() != s_active.ncols() {
        return Err(Error::invalid(format!(
            "target has {} columns, source {}",
            z.ncols(),
            s_active.ncols()
        )));
    }
    let mut matrix = z.clone();
    let mut ratios = Vec::with_capacity(z.ncols());
    let mut zero_mean_columns = Vec::new();
    for j in 0..z.ncols() {
        let zm = timeseries::mean(column(z, j));
        let ratio = if zm == 0.0 {
            zero_mean_columns.push(j);
            1.0
        } else {
            timeseries::mean(column(s_active, j)) / zm
        };
        matrix.column_mut(j).scale_mut(ratio);
        ratios.push(ratio);
    }
    Ok(ScaledTarget {
        matrix,
        ratios,
        zero_mean_columns,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceEnsemble {
    pub models: Vec<ElasticNetModel>,
    pub y_params: NormalizationParams,
    pub min_active: usize,
    pub max_active: usize,
}

impl SourceEnsemble {
    /// Features active in at least one member, ascending.
    pub fn active_features(&self) -> Vec<usize> {
        let p = self.models.first().map_or(0, |m| m.weights.len());
        (0..p)
            .filter(|&j| self.models.iter().any(|m| m.is_active(j)))
            .collect()
    }
}

pub fn select_ensemble(
    path: &RegularizationPath,
    min_active: usize,
    max_active: usize,
    y_params: NormalizationParams,
) -> Result<SourceEnsemble> {
    if min_active > max_active {
        return Err(Error::invalid(format!("empty sparsity band [{min_active}, {max_active}]")));
    }
    let models: Vec<ElasticNetModel> = path
        .models
        .iter()
        .filter(|m| (min_active..=max_active).contains(&m.active_count))
        .cloned()
        .collect();
    if models.is_empty() {
        return Err(Error::EnsembleEmpty {
            min_active,
            max_active,
        });
    }
    Ok(SourceEnsemble {
        models,
        y_params,
        min_active,
        max_active,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferEstimate {
    pub mean: TimeSeries,
    pub lower: TimeSeries,
    pub upper: TimeSeries,
    pub ensemble_size: usize,
}

/// Per-model predictions, denormalised to the source target scale, summarised per day.
pub fn infer(ensemble: &SourceEnsemble, z_s: &DMatrix<f64>, start: NaiveDate) -> Result<TransferEstimate> {
    let preds: Vec<Vec<f64>> = ensemble
        .models
        .iter()
        .map(|m| {
            elastic_net::predict(m, z_s)
                .map(|p| p.into_iter().map(|v| ensemble.y_params.denormalize(v)).collect())
        })
        .collect::<Result<_>>()?;
    let days = z_s.nrows();
    let (mut mean, mut lower, mut upper) = (Vec::with_capacity(days), Vec::with_capacity(days), Vec::with_capacity(days));
    for d in 0..days {
        let column: Vec<f64> = preds.iter().map(|p| p[d]).collect();
        mean.push(timeseries::mean(&column));
        lower.push(timeseries::quantile(&column, LOWER_QUANTILE)?);
        upper.push(timeseries::quantile(&column, UPPER_QUANTILE)?);
    }
    Ok(TransferEstimate {
        mean: TimeSeries::new(start, mean)?,
        lower: TimeSeries::new(start, lower)?,
        upper: TimeSeries::new(start, upper)?,
        ensemble_size: ensemble.models.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftProfile {
    pub shifts: Vec<i64>,
    pub mean: f64,
    /// Mean ± 1.96 population standard deviations across models.
    pub lower: f64,
    pub upper: f64,
}

/// Best global shift per ensemble model, using only that model's active queries.
///
/// `s` holds every source feature column in model order.
pub fn per_model_shift_profile(
    ensemble: &SourceEnsemble,
    s: &DMatrix<f64>,
    t: &DMatrix<f64>,
    max_shift: usize,
) -> Result<ShiftProfile> {
    let table = ShiftTable::new(s, t, max_shift)?;
    let shifts: Vec<i64> = ensemble
        .models
        .iter()
        .map(|m| m.active_features())
        .filter(|a| !a.is_empty())
        .map(|a| table.best_shift(&a))
        .collect();
    if shifts.is_empty() {
        return Err(Error::Degenerate("no ensemble model has an active query".into()));
    }
    let values: Vec<f64> = shifts.iter().map(|&v| v as f64).collect();
    let mean = timeseries::mean(&values);
    let half = 1.96 * timeseries::variance(&values).sqrt();
    Ok(ShiftProfile {
        shifts,
        mean,
        lower: mean - half,
        upper: mean + half,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub max_shift: usize,
    pub min_active: usize,
    pub max_active: usize,
    pub path_size: usize,
    pub lambda_ratio: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            max_shift: DEFAULT_MAX_SHIFT,
            min_active: DEFAULT_MIN_ACTIVE,
            max_active: DEFAULT_MAX_ACTIVE,
            path_size: elastic_net::DEFAULT_PATH_SIZE,
            lambda_ratio: elastic_net::DEFAULT_LAMBDA_RATIO,
        }
    }
}

/// Source training data and the matching target period.
///
/// `source_train` rows are the days with source ground truth `source_y`;
/// `source_align` and `target` cover the same days, starting on `target_start`.
/// All query matrices are expected to be harmonically smoothed already.
#[derive(Clone, Copy, Debug)]
pub struct TransferInputs<'a> {
    pub source_train: &'a DMatrix<f64>,
    pub source_y: &'a [f64],
    pub source_labels: &'a [QueryLabel],
    pub source_align: &'a DMatrix<f64>,
    pub target: &'a DMatrix<f64>,
    pub target_labels: &'a [QueryLabel],
    pub target_start: NaiveDate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferOutcome {
    pub estimate: TransferEstimate,
    pub mapping: QueryMapping,
    pub ensemble: SourceEnsemble,
    pub active_features: Vec<usize>,
    pub zero_mean_columns: Vec<usize>,
}

pub(crate) fn min_max_columns(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = m.clone();
    for j in 0..m.ncols() {
        let (values, _) = timeseries::min_max_values(column(m, j))?;
        out.column_mut(j).copy_from_slice(&values);
    }
    Ok(out)
}

fn select_columns(m: &DMatrix<f64>, columns: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), columns.len(), |i, k| m[(i, columns[k])])
}

pub fn run_transfer(inputs: &TransferInputs<'_>, config: &TransferConfig) -> Result<TransferOutcome> {
    let p = inputs.source_train.ncols();
    if inputs.source_labels.len() != p || inputs.source_align.ncols() != p {
        return Err(Error::invalid("source matrices and labels disagree on the query count"));
    }
    if inputs.source_align.nrows() != inputs.target.nrows() {
        return Err(Error::alignment("source and target alignment periods differ in length"));
    }
    let s_norm = min_max_columns(inputs.source_train)?;
    let (y_norm, y_params) = timeseries::min_max_values(inputs.source_y)?;
    let path = elastic_net::fit_path(&s_norm, &y_norm, config.path_size, config.lambda_ratio)?;
    let ensemble = select_ensemble(&path, config.min_active, config.max_active, y_params)?;
    let active = ensemble.active_features();

    let s_align = select_columns(inputs.source_align, &active);
    let shift = align_temporal(&s_align, inputs.target, config.max_shift)?;
    let labels: Vec<QueryLabel> = active.iter().map(|&j| inputs.source_labels[j].clone()).collect();
    let mapping = map_queries(&s_align, &labels, inputs.target, inputs.target_labels, shift)?;

    let targets: Vec<usize> = mapping.pairs.iter().map(|m| m.target_index).collect();
    let z = min_max_columns(&select_columns(inputs.target, &targets))?;
    let scaled = scale_target(&z, &select_columns(&s_norm, &active))?;
    let mut z_s = DMatrix::zeros(z.nrows(), p);
    for (k, &j) in active.iter().enumerate() {
        z_s.set_column(j, &scaled.matrix.column(k));
    }
    let estimate = infer(&ensemble, &z_s, inputs.target_start)?;
    Ok(TransferOutcome {
        estimate,
        mapping,
        ensemble,
        active_features: active,
        zero_mean_columns: scaled.zero_mean_columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn day0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 2, 1).unwrap()
    }

    /// Smooth random-walk-like columns so that correlations are informative.
    fn wavy(seed: u64, n: usize, p: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params: Vec<(f64, f64, f64)> = (0..p)
            .map(|_| (rng.random_range(5.0..30.0), rng.random_range(0.0..6.0), rng.random_range(0.0..0.01)))
            .collect();
        DMatrix::from_fn(n, p, |i, j| {
            let (period, phase, trend) = params[j];
            1.0 + (i as f64 / period + phase).sin() + trend * i as f64
        })
    }

    fn delay(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| if i < k { 0.0 } else { m[(i - k, j)] })
    }

    fn model(weights: Vec<f64>, intercept: f64) -> ElasticNetModel {
        ElasticNetModel {
            active_count: weights.iter().filter(|v| **v != 0.0).count(),
            weights,
            intercept,
            lambda1: 1.0,
            lambda2: 0.5,
            sweeps: 1,
        }
    }

    fn unit_params() -> NormalizationParams {
        NormalizationParams::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn align_recovers_planted_delay() {
        let s = wavy(1, 200, 6);
        let t = delay(&s, 10);
        // Drop the zero-filled head so the delay is the only difference.
        let s_cut = s.rows(10, 150).into_owned();
        let t_cut = t.rows(10, 150).into_owned();
        assert_eq!(align_temporal(&s_cut, &t_cut, 45).unwrap(), 10);
        assert_eq!(align_temporal(&s_cut, &s_cut, 45).unwrap(), 0);
        assert_eq!(align_temporal(&s_cut, &t_cut, 0).unwrap(), 0);
        let short = s.rows(0, 10).into_owned();
        assert!(matches!(align_temporal(&short, &short, 45), Err(Error::InsufficientOverlap(_))));
    }

    #[test]
    fn mapping_prefers_same_category() {
        let s = wavy(2, 80, 2);
        let t = DMatrix::from_fn(80, 3, |i, j| match j {
            0 => s[(i, 0)],
            1 => -s[(i, 1)],
            _ => s[(i, 1)],
        });
        let sl = [QueryLabel::new("a", "cough"), QueryLabel::new("b", "fever")];
        let tl = [QueryLabel::new("x", "cough"), QueryLabel::new("y", "fever"), QueryLabel::new("z", "rash")];
        let m = map_queries(&s, &sl, &t, &tl, 0).unwrap();
        assert_eq!(m.pairs[0].target, "x");
        // The only fever query wins although the rash copy correlates perfectly.
        assert_eq!(m.pairs[1].target, "y");
        assert!(!m.pairs[1].fallback);

        let sl = [QueryLabel::new("a", "cough"), QueryLabel::new("b", "nose bleed")];
        let m = map_queries(&s, &sl, &t, &tl, 0).unwrap();
        assert!(m.pairs[1].fallback);
        assert_eq!(m.pairs[1].target, "z");
        assert!((m.pairs[1].r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_copy_is_mapped() {
        let mut hits = 0;
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = wavy(seed + 1000, 100, 1);
            let t = DMatrix::from_fn(100, 5, |i, j| {
                if j == 3 {
                    s[(i, 0)] + 0.3 * rng.random::<f64>()
                } else {
                    rng.random::<f64>()
                }
            });
            let sl = [QueryLabel::new("s", "c")];
            let tl: Vec<QueryLabel> = (0..5).map(|j| QueryLabel::new(format!("t{j}"), "c")).collect();
            hits += usize::from(map_queries(&s, &sl, &t, &tl, 0).unwrap().pairs[0].target_index == 3);
        }
        assert!(hits >= 48, "{hits}");
    }

    #[test]
    fn scaling_examples() {
        let s = wavy(3, 30, 2);
        let same = scale_target(&s, &s).unwrap();
        assert_eq!(same.ratios, vec![1.0, 1.0]);
        assert_eq!(same.matrix, s);
        let half = s.map(|v| 0.5 * v);
        let r = scale_target(&half, &s).unwrap();
        for j in 0..2 {
            assert!((r.ratios[j] - 2.0).abs() < 1e-12);
            assert!((r.matrix.column(j).mean() - s.column(j).mean()).abs() < 1e-12);
        }
        let mut z = s.clone();
        z.column_mut(1).fill(0.0);
        let r = scale_target(&z, &s).unwrap();
        assert_eq!(r.zero_mean_columns, vec![1]);
        assert_eq!(r.ratios[1], 1.0);
        assert!(scale_target(&z, &s.columns(0, 1).into_owned()).is_err());
    }

    #[test]
    fn ensemble_band_filter() {
        let counts = [0usize, 2, 3, 49, 50];
        let path = RegularizationPath {
            models: counts
                .iter()
                .map(|&c| model((0..60).map(|j| if j < c { 0.1 } else { 0.0 }).collect(), 0.0))
                .collect(),
            lambda_ratio: 0.5,
            lambda_max: 1.0,
        };
        assert_eq!(select_ensemble(&path, 3, 49, unit_params()).unwrap().models.len(), 2);
        assert_eq!(select_ensemble(&path, 0, 60, unit_params()).unwrap().models.len(), 5);
        assert!(matches!(
            select_ensemble(&path, 61, 62, unit_params()),
            Err(Error::EnsembleEmpty { .. })
        ));
    }

    #[test]
    fn inference_band_examples() {
        let z = DMatrix::from_element(4, 1, 0.0);
        let ens = SourceEnsemble {
            models: vec![model(vec![0.0], 1.0), model(vec![0.0], 3.0), model(vec![0.0], 2.0)],
            y_params: unit_params(),
            min_active: 0,
            max_active: 1,
        };
        let est = infer(&ens, &z, day0()).unwrap();
        assert_eq!(est.ensemble_size, 3);
        for d in 0..4 {
            assert!((est.mean.values()[d] - 2.0).abs() < 1e-12);
            assert!((est.lower.values()[d] - 1.05).abs() < 1e-12);
            assert!((est.upper.values()[d] - 2.95).abs() < 1e-12);
        }

        let mut rev = ens.clone();
        rev.models.reverse();
        assert_eq!(infer(&rev, &z, day0()).unwrap(), est);

        let x = wavy(5, 10, 1);
        let single = SourceEnsemble {
            models: vec![model(vec![2.0], 0.5); 4],
            y_params: NormalizationParams::new(10.0, 30.0).unwrap(),
            min_active: 1,
            max_active: 1,
        };
        let est = infer(&single, &x, day0()).unwrap();
        for d in 0..10 {
            let expected = (2.0 * x[(d, 0)] + 0.5) * 20.0 + 10.0;
            assert!((est.mean.values()[d] - expected).abs() < 1e-12);
            assert!((est.upper.values()[d] - est.lower.values()[d]).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_profile_for_planted_delay() {
        let s = wavy(6, 200, 5);
        let t = delay(&s, 7);
        let s_cut = s.rows(7, 160).into_owned();
        let t_cut = t.rows(7, 160).into_owned();
        let ens = SourceEnsemble {
            models: vec![
                model(vec![1.0, 0.0, 0.0, 0.0, 0.0], 0.0),
                model(vec![1.0, 1.0, 0.0, 0.0, 0.0], 0.0),
                model(vec![0.0, 0.0, 1.0, 1.0, 1.0], 0.0),
            ],
            y_params: unit_params(),
            min_active: 1,
            max_active: 5,
        };
        let prof = per_model_shift_profile(&ens, &s_cut, &t_cut, 45).unwrap();
        assert_eq!(prof.shifts, vec![7, 7, 7]);
        assert_eq!(prof.mean, 7.0);
        assert!(prof.upper - prof.lower < 1e-12);
        assert!(prof.lower <= prof.mean && prof.mean <= prof.upper);
    }

    #[test]
    fn self_transfer_reproduces_source_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = wavy(7, 120, 8);
        let y: Vec<f64> = (0..120)
            .map(|i| 3.0 * s[(i, 0)] + s[(i, 2)] - 0.5 * s[(i, 5)] + 0.05 * rng.random::<f64>())
            .collect();
        let labels: Vec<QueryLabel> = (0..8).map(|j| QueryLabel::new(format!("q{j}"), format!("c{j}"))).collect();
        let config = TransferConfig { path_size: 60, min_active: 1, max_active: 8, ..Default::default() };
        let inputs = TransferInputs {
            source_train: &s,
            source_y: &y,
            source_labels: &labels,
            source_align: &s,
            target: &s,
            target_labels: &labels,
            target_start: day0(),
        };
        let out = run_transfer(&inputs, &config).unwrap();
        assert_eq!(out.mapping.global_shift, 0);
        assert!(out.mapping.pairs.iter().all(|p| p.source == p.target));

        let s_norm = min_max_columns(&s).unwrap();
        for (d, &v) in out.estimate.mean.values().iter().enumerate() {
            let direct: f64 = out
                .ensemble
                .models
                .iter()
                .map(|m| out.ensemble.y_params.denormalize(m.predict_row(&s_norm.row(d).iter().copied().collect::<Vec<_>>())))
                .sum::<f64>()
                / out.ensemble.models.len() as f64;
            assert!((v - direct).abs() < 1e-10);
        }
        let r = timeseries::pearson_values(out.estimate.mean.values(), &y).unwrap();
        assert!(r > 0.9, "{r}");
    }
}
