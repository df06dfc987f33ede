//! Autoregressive separation of media-driven search interest.
//!
//! For each day `t` two models are fitted on the preceding `N` one-step targets:
//! an AR(2) on the search score `g`, and the same model with the news ratio
//! `m_t, m_{t-1}, m_{t-2}` added. Their absolute one-step errors `ε₁`, `ε₂`
//! give `γ_t = ε₂/ε₁` (1 when news does not help), and `g_p = γ g`.

use chrono::{Duration, NaiveDate};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::timeseries::{self, TimeSeries};

pub const DEFAULT_WINDOW: usize = 56;
pub const GAMMA_SMOOTHING_DAYS: usize = 7;
/// Lagged values of `g` used by both models.
const AR_ORDER: usize = 2;

/// Daily share of articles about the epidemic, in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewsRatio {
    series: TimeSeries,
}

impl NewsRatio {
    pub fn new(series: TimeSeries) -> Result<Self> {
        if let Some((i, v)) = series
            .values()
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::invalid(format!(
                "news ratio on {} is {v}, outside [0, 1]",
                series.date_at(i)
            )));
        }
        Ok(Self { series })
    }

    pub fn series(&self) -> &TimeSeries {
        &self.series
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArFit {
    /// `w₁, w₂` and, for the news model, `v₁, v₂, v₃` on `m_t, m_{t-1}, m_{t-2}`.
    pub lag_weights: Vec<f64>,
    pub intercept: f64,
    pub in_sample_mse: f64,
    pub rank_deficient: bool,
}

impl ArFit {
    /// One-step prediction from `[g_{t-1}, g_{t-2}]` or `[g_{t-1}, g_{t-2}, m_t, m_{t-1}, m_{t-2}]`.
    pub fn predict(&self, regressors: &[f64]) -> f64 {
        debug_assert_eq!(regressors.len(), self.lag_weights.len());
        self.intercept
            + self
                .lag_weights
                .iter()
                .zip(regressors)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }
}

fn regressors(g: &[f64], m: Option<&[f64]>, t: usize) -> Vec<f64> {
    let mut row = vec![g[t - 1], g[t - 2]];
    if let Some(m) = m {
        row.extend_from_slice(&[m[t], m[t - 1], m[t - 2]]);
    }
    row
}

fn fit(g: &[f64], m: Option<&[f64]>) -> Result<ArFit> {
    if g.len() < AR_ORDER + 2 {
        return Err(Error::InsufficientHistory {
            needed: AR_ORDER + 2,
            available: g.len(),
        });
    }
    if let Some(m) = m {
        if m.len() != g.len() {
            return Err(Error::alignment(format!(
                "search window has {} days, news window {}",
                g.len(),
                m.len()
            )));
        }
    }
    let rows = g.len() - AR_ORDER;
    let k = if m.is_some() { 6 } else { 3 };
    let mut x = DMatrix::zeros(rows, k);
    for (r, t) in (AR_ORDER..g.len()).enumerate() {
        for (c, v) in regressors(g, m, t).into_iter().enumerate() {
            x[(r, c)] = v;
        }
        x[(r, k - 1)] = 1.0;
    }
    let y = DVector::from_column_slice(&g[AR_ORDER..]);
    let ls = linalg::ols(&x, &y)?;
    let residuals = &y - &x * &ls.coefficients;
    let coef = ls.coefficients.as_slice();
    Ok(ArFit {
        lag_weights: coef[..k - 1].to_vec(),
        intercept: coef[k - 1],
        in_sample_mse: residuals.norm_squared() / rows as f64,
        rank_deficient: ls.rank_deficient,
    })
}

/// AR(2) with intercept fitted by least squares; targets are `g[2..]`.
pub fn fit_ar(g_window: &[f64]) -> Result<ArFit> {
    fit(g_window, None)
}

/// AR(2) plus contemporaneous and two lagged news-ratio terms.
pub fn fit_ar_exog(g_window: &[f64], m_window: &[f64]) -> Result<ArFit> {
    fit(g_window, Some(m_window))
}

/// `ε₂/ε₁` clamped to `[0, 1]`; exactly 1 when `ε₁ ≤ ε₂`.
pub fn gamma_from_errors(e1: f64, e2: f64) -> f64 {
    if e1 <= e2 {
        1.0
    } else {
        (e2 / e1).clamp(0.0, 1.0)
    }
}

/// Days of data needed before `t`: `N` targets plus two lags.
pub fn history_needed(window: usize) -> usize {
    window + AR_ORDER
}

fn gamma_at_values(g: &[f64], m: &[f64], t: usize, window: usize) -> Result<f64> {
    let needed = history_needed(window);
    if t < needed {
        return Err(Error::InsufficientHistory {
            needed,
            available: t,
        });
    }
    if t >= g.len() || t >= m.len() {
        return Err(Error::invalid(format!("day index {t} is past the end of the data")));
    }
    let from = t - needed;
    let ar = fit_ar(&g[from..t])?;
    let arx = fit_ar_exog(&g[from..t], &m[from..t])?;
    let e1 = (g[t] - ar.predict(&regressors(g, None, t))).abs();
    let e2 = (g[t] - arx.predict(&regressors(g, Some(m), t))).abs();
    Ok(gamma_from_errors(e1, e2))
}

/// γ for day index `t`, from models fitted on the `window` targets before it.
///
/// `g` and `m` are used as given; normalise them first.
pub fn gamma_at(g: &TimeSeries, m: &TimeSeries, t: usize, window: usize) -> Result<f64> {
    check_same_span(g, m)?;
    gamma_at_values(g.values(), m.values(), t, window)
}

fn check_same_span(g: &TimeSeries, m: &TimeSeries) -> Result<()> {
    if g.same_span(m) {
        Ok(())
    } else {
        Err(Error::alignment(format!(
            "search score spans {}..={}, news ratio {}..={}",
            g.start(),
            g.end(),
            m.start(),
            m.end()
        )))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowNormalization {
    /// Min-max `g` and `m` once over their whole span.
    #[default]
    FullSpan,
    /// Min-max each fitting window separately; the forecast day reuses the window's scale.
    PerWindow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GammaOptions {
    pub window: usize,
    pub normalization: WindowNormalization,
}

impl Default for GammaOptions {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            normalization: WindowNormalization::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaSeries {
    /// Smoothed γ, the series applied to `g`.
    pub series: TimeSeries,
    /// Daily γ before smoothing.
    pub raw: TimeSeries,
}

fn normalized_window(values: &[f64], from: usize, t: usize) -> Result<Vec<f64>> {
    let (_, params) = timeseries::min_max_values(&values[from..t])?;
    Ok(values[from..=t].iter().map(|&v| params.normalize(v)).collect())
}

pub fn gamma_series(g: &TimeSeries, m: &TimeSeries, options: &GammaOptions) -> Result<GammaSeries> {
    check_same_span(g, m)?;
    let needed = history_needed(options.window);
    let first = needed;
    if g.len() < first + GAMMA_SMOOTHING_DAYS {
        return Err(Error::InsufficientHistory {
            needed: first + GAMMA_SMOOTHING_DAYS,
            available: g.len(),
        });
    }
    let raw: Vec<f64> = match options.normalization {
        WindowNormalization::FullSpan => {
            let (gn, _) = timeseries::min_max_values(g.values())?;
            let (mn, _) = timeseries::min_max_values(m.values())?;
            (first..g.len())
                .map(|t| gamma_at_values(&gn, &mn, t, options.window))
                .collect::<Result<_>>()?
        }
        WindowNormalization::PerWindow => (first..g.len())
            .map(|t| {
                let from = t - needed;
                let gw = normalized_window(g.values(), from, t)?;
                let mw = normalized_window(m.values(), from, t)?;
                gamma_at_values(&gw, &mw, needed, options.window)
            })
            .collect::<Result<_>>()?,
    };
    let raw = TimeSeries::new(g.date_at(first), raw)?;
    let series = timeseries::harmonic_smooth(&raw, GAMMA_SMOOTHING_DAYS)?;
    Ok(GammaSeries { series, raw })
}

/// `g_p = γ g` over the span of `gamma`, which must lie within `g`.
pub fn adjust_signal(g: &TimeSeries, gamma: &TimeSeries) -> Result<TimeSeries> {
    let offset = g.index_of(gamma.start()).filter(|_| gamma.end() <= g.end());
    let offset = offset.ok_or_else(|| {
        Error::alignment(format!(
            "gamma spans {}..={}, outside the signal {}..={}",
            gamma.start(),
            gamma.end(),
            g.start(),
            g.end()
        ))
    })?;
    if let Some(v) = gamma.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("gamma value {v} outside [0, 1]")));
    }
    let values = gamma
        .values()
        .iter()
        .zip(&g.values()[offset..])
        .map(|(c, v)| c * v)
        .collect();
    TimeSeries::new(gamma.start(), values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakReduction {
    pub peak_date: NaiveDate,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    /// Percent reduction of the mean inside the window around the peak.
    pub in_window_pct: f64,
    /// `None` when the window covers the whole span.
    pub out_window_pct: Option<f64>,
    /// Pearson r of raw and adjusted inside the window; `None` if either is flat there.
    pub in_window_r: Option<f64>,
    /// Set when the window had to be cut at the series boundary.
    pub truncated: bool,
}

fn reduction_pct(raw: &[f64], adjusted: &[f64]) -> f64 {
    let r: f64 = raw.iter().sum();
    let a: f64 = adjusted.iter().sum();
    if r == 0.0 {
        0.0
    } else {
        100.0 * (1.0 - a / r)
    }
}

pub fn peak_reduction_report(
    raw: &TimeSeries,
    adjusted: &TimeSeries,
    half_window: usize,
) -> Result<PeakReduction> {
    if !raw.same_span(adjusted) {
        return Err(Error::alignment("raw and adjusted series must share a span"));
    }
    let peak = raw
        .values()
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > raw.values()[best] { i } else { best });
    let lo = peak.saturating_sub(half_window);
    let hi = (peak + half_window).min(raw.len() - 1);
    let truncated = peak < half_window || peak + half_window > raw.len() - 1;
    let (r, a) = (raw.values(), adjusted.values());
    let outside_raw: Vec<f64> = r[..lo].iter().chain(&r[hi + 1..]).copied().collect();
    let outside_adj: Vec<f64> = a[..lo].iter().chain(&a[hi + 1..]).copied().collect();
    Ok(PeakReduction {
        peak_date: raw.date_at(peak),
        window_start: raw.date_at(lo),
        window_end: raw.date_at(hi),
        in_window_pct: reduction_pct(&r[lo..=hi], &a[lo..=hi]),
        out_window_pct: (!outside_raw.is_empty())
            .then(|| reduction_pct(&outside_raw, &outside_adj)),
        in_window_r: timeseries::pearson_values(&r[lo..=hi], &a[lo..=hi]).ok(),
        truncated,
    })
}

/// First day with a smoothed γ for a series starting on `start`.
pub fn first_gamma_date(start: NaiveDate, window: usize) -> NaiveDate {
    start + Duration::days((history_needed(window) + GAMMA_SMOOTHING_DAYS - 1) as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn day0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
    }

    fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn gamma_ratio_examples() {
        assert!((gamma_from_errors(0.4, 0.2) - 0.5).abs() < 1e-15);
        assert_eq!(gamma_from_errors(0.2, 0.4), 1.0);
        assert_eq!(gamma_from_errors(0.3, 0.0), 0.0);
        assert_eq!(gamma_from_errors(0.0, 0.1), 1.0);
        assert_eq!(gamma_from_errors(0.0, 0.0), 1.0);
    }

    #[test]
    fn planted_ar2_is_recovered() {
        let (w1, w2, b) = (0.6, -0.3, 0.2);
        let mut g = vec![0.1, 0.5];
        for t in 2..60 {
            g.push(w1 * g[t - 1] + w2 * g[t - 2] + b);
        }
        let fit = fit_ar(&g[..12]).unwrap();
        assert!(!fit.rank_deficient);
        assert!((fit.lag_weights[0] - w1).abs() < 1e-6);
        assert!((fit.lag_weights[1] - w2).abs() < 1e-6);
        assert!((fit.intercept - b).abs() < 1e-6);
    }

    #[test]
    fn constant_search_predicts_constant() {
        let g = vec![0.37; 20];
        let fit = fit_ar(&g).unwrap();
        assert!(fit.rank_deficient);
        assert!(fit.in_sample_mse < 1e-24);
        assert!((fit.predict(&[0.37, 0.37]) - 0.37).abs() < 1e-12);
    }

    #[test]
    fn white_noise_mse_matches_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = gaussian(&mut rng, 56 * 50);
        let fit = fit_ar(&g).unwrap();
        let var = timeseries::variance(&g);
        assert!((fit.in_sample_mse / var - 1.0).abs() < 0.1);
    }

    #[test]
    fn normal_equations_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = gaussian(&mut rng, 58);
        let m: Vec<f64> = gaussian(&mut rng, 58);
        let fit = fit_ar_exog(&g, &m).unwrap();
        let mut grad = [0.0; 6];
        for t in 2..g.len() {
            let x = regressors(&g, Some(&m), t);
            let r = g[t] - fit.predict(&x);
            for (k, v) in x.iter().chain(std::iter::once(&1.0)).enumerate() {
                grad[k] += r * v;
            }
        }
        assert!(grad.iter().all(|v| v.abs() < 1e-8), "{grad:?}");
    }

    #[test]
    fn nested_model_never_worse_in_sample() {
        for seed in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = gaussian(&mut rng, 58);
            let m: Vec<f64> = (0..58).map(|_| rng.random::<f64>()).collect();
            let ar = fit_ar(&g).unwrap();
            let arx = fit_ar_exog(&g, &m).unwrap();
            assert!(arx.in_sample_mse <= ar.in_sample_mse + 1e-10);
        }
    }

    #[test]
    fn zero_news_reduces_to_ar() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = gaussian(&mut rng, 40);
        let ar = fit_ar(&g).unwrap();
        let arx = fit_ar_exog(&g, &[0.0; 40]).unwrap();
        assert!((ar.in_sample_mse - arx.in_sample_mse).abs() < 1e-12);
        let p1 = ar.predict(&[g[39], g[38]]);
        let p2 = arx.predict(&[g[39], g[38], 0.0, 0.0, 0.0]);
        assert!((p1 - p2).abs() < 1e-10);
    }

    #[test]
    fn search_equal_to_news_fits_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m: Vec<f64> = (0..58).map(|_| rng.random::<f64>()).collect();
        let fit = fit_ar_exog(&m, &m).unwrap();
        assert!(fit.in_sample_mse < 1e-10);
    }

    #[test]
    fn news_helps_out_of_sample_when_planted() {
        let mut wins = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 60;
            let m: Vec<f64> = (0..n + 1).map(|_| rng.random::<f64>()).collect();
            let noise = gaussian(&mut rng, n + 1);
            let mut ar = vec![0.0, 0.0];
            for t in 2..=n {
                ar.push(0.5 * ar[t - 1] - 0.2 * ar[t - 2] + 0.1 * noise[t]);
            }
            let g: Vec<f64> = (0..=n).map(|t| 0.5 * ar[t] + 0.5 * m[t]).collect();
            let e1 = (g[n] - fit_ar(&g[..n]).unwrap().predict(&[g[n - 1], g[n - 2]])).abs();
            let e2 = (g[n]
                - fit_ar_exog(&g[..n], &m[..n])
                    .unwrap()
                    .predict(&[g[n - 1], g[n - 2], m[n], m[n - 1], m[n - 2]]))
            .abs();
            wins += usize::from(e2 < e1);
        }
        assert!(wins > 70, "{wins}");
    }

    #[test]
    fn zero_news_gives_unit_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = TimeSeries::new(day0(), gaussian(&mut rng, 100)).unwrap();
        let m = TimeSeries::constant(day0(), 100, 0.0).unwrap();
        let gamma = gamma_series(&g, &m, &GammaOptions::default()).unwrap();
        assert!(gamma.raw.values().iter().all(|&v| v > 1.0 - 1e-6));
        assert!(gamma.series.values().iter().all(|&v| v > 1.0 - 1e-6 && v <= 1.0));
    }

    #[test]
    fn gamma_series_span_bookkeeping() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = TimeSeries::new(day0(), gaussian(&mut rng, 120)).unwrap();
        let m = TimeSeries::new(day0(), (0..120).map(|_| rng.random::<f64>()).collect()).unwrap();
        for normalization in [WindowNormalization::FullSpan, WindowNormalization::PerWindow] {
            let opts = GammaOptions { window: 30, normalization };
            let gamma = gamma_series(&g, &m, &opts).unwrap();
            assert_eq!(gamma.raw.start(), day0() + Duration::days(32));
            assert_eq!(gamma.series.start(), first_gamma_date(day0(), 30));
            assert_eq!(gamma.series.end(), g.end());
            assert_eq!(gamma.series.len(), 120 - 32 - 6);
            assert!(gamma.series.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let short = TimeSeries::new(day0(), vec![0.5; 35]).unwrap();
        assert!(gamma_series(&short, &short, &GammaOptions { window: 30, ..Default::default() }).is_err());
    }

    #[test]
    fn gamma_at_matches_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = TimeSeries::new(day0(), (0..80).map(|_| rng.random::<f64>()).collect()).unwrap();
        let m = TimeSeries::new(day0(), (0..80).map(|_| rng.random::<f64>()).collect()).unwrap();
        let (gn, _) = timeseries::min_max_normalize(&g).unwrap();
        let (mn, _) = timeseries::min_max_normalize(&m).unwrap();
        let gamma = gamma_series(&g, &m, &GammaOptions { window: 20, ..Default::default() }).unwrap();
        for (k, &v) in gamma.raw.values().iter().enumerate() {
            assert_eq!(gamma_at(&gn, &mn, 22 + k, 20).unwrap(), v);
        }
        assert!(matches!(
            gamma_at(&gn, &mn, 21, 20),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn alternating_raw_gamma_smooths_inside_unit_interval() {
        let raw: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
        let s = timeseries::harmonic_smooth_values(&raw, GAMMA_SMOOTHING_DAYS).unwrap();
        assert!(s.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn adjust_examples() {
        let g = TimeSeries::new(day0(), vec![0.2, 0.4, 0.8, 1.0]).unwrap();
        let ones = TimeSeries::constant(day0(), 4, 1.0).unwrap();
        assert_eq!(adjust_signal(&g, &ones).unwrap(), g);
        let half = TimeSeries::constant(day0(), 4, 0.5).unwrap();
        let gp = adjust_signal(&g, &half).unwrap();
        for (a, b) in gp.values().iter().zip(g.values()) {
            assert_eq!(*a, b / 2.0);
        }
        let gamma = TimeSeries::new(day0() + Duration::days(1), vec![0.3, 0.9]).unwrap();
        let gp = adjust_signal(&g, &gamma).unwrap();
        assert_eq!(gp.start(), gamma.start());
        let gc: Vec<f64> = [0.3, 0.9].iter().zip(&g.values()[1..3]).map(|(c, v)| (1.0 - c) * v).collect();
        for ((p, c), v) in gp.values().iter().zip(gc).zip(&g.values()[1..3]) {
            assert!((p + c - v).abs() <= 2.0 * f64::EPSILON * v);
        }
        let outside = TimeSeries::new(day0() + Duration::days(3), vec![0.5, 0.5]).unwrap();
        assert!(matches!(adjust_signal(&g, &outside), Err(Error::Alignment(_))));
    }

    #[test]
    fn peak_report_examples() {
        let raw: Vec<f64> = (0..100).map(|i| 1.0 + (-((i as f64 - 50.0) / 10.0).powi(2)).exp()).collect();
        let raw = TimeSeries::new(day0(), raw).unwrap();
        let same = peak_reduction_report(&raw, &raw, 14).unwrap();
        assert_eq!(same.peak_date, day0() + Duration::days(50));
        assert_eq!(same.in_window_pct, 0.0);
        assert_eq!(same.out_window_pct, Some(0.0));
        assert!((same.in_window_r.unwrap() - 1.0).abs() < 1e-12);
        assert!(!same.truncated);

        let scaled = raw.map(|v| 0.8 * v).unwrap();
        let r = peak_reduction_report(&raw, &scaled, 14).unwrap();
        assert!((r.in_window_pct - 20.0).abs() < 1e-9);
        assert!((r.out_window_pct.unwrap() - 20.0).abs() < 1e-9);

        let dipped: Vec<f64> = raw
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v * (1.0 - 0.4 * (-((i as f64 - 50.0) / 8.0).powi(2)).exp()))
            .collect();
        let dipped = TimeSeries::new(day0(), dipped).unwrap();
        let r = peak_reduction_report(&raw, &dipped, 14).unwrap();
        assert!(r.in_window_pct > r.out_window_pct.unwrap());

        let wide = peak_reduction_report(&raw, &raw, 70).unwrap();
        assert!(wide.truncated);
        assert_eq!(wide.out_window_pct, None);
    }

    #[test]
    fn news_ratio_bounds() {
        assert!(NewsRatio::new(TimeSeries::new(day0(), vec![0.0, 1.0, 0.25]).unwrap()).is_ok());
        assert!(NewsRatio::new(TimeSeries::new(day0(), vec![0.0, 1.2]).unwrap()).is_err());
    }
}
