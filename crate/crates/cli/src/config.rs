//! Run configuration: a flat TOML table, every key optional, unknown keys rejected.

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::path::Path;

use querycast::news::WindowNormalization;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Cases,
    Deaths,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// First day of the analysis period; earlier days form the historical baseline.
    pub analysis_start: NaiveDate,
    pub analysis_end: Option<NaiveDate>,
    pub smoothing_days: usize,

    pub news_window: usize,
    pub news_normalization: WindowNormalization,
    pub peak_half_window: usize,

    pub source_country: String,
    pub min_active: usize,
    pub max_active: usize,
    pub lambda_ratio: f64,
    pub path_size: usize,
    pub max_shift: usize,

    /// Countries for `impact` and `report`; empty means every country directory found.
    pub countries: Vec<String>,
    pub correlation_shift: i64,
    pub impact_test_days: usize,
    pub impact_max_density: f64,
    pub impact_levels: usize,

    pub gp_lags: usize,
    pub horizons: Vec<usize>,
    pub forecast_outcome: Outcome,
    pub start_threshold: f64,
    pub min_train_rows: usize,
    pub max_test_days: Option<usize>,
    pub gp_restarts: usize,
    pub gp_max_iterations: usize,
    pub warm_start: bool,

    pub seed: u64,

    pub synth_countries: Vec<String>,
    pub synth_history_days: usize,
    pub synth_days: usize,
    pub synth_beta: f64,
    /// Days each successive synthetic country's epidemic trails the previous one.
    pub synth_country_lag: usize,
    pub synth_deaths_lag: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            analysis_start: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            analysis_end: None,
            smoothing_days: 14,
            news_window: 56,
            news_normalization: WindowNormalization::FullSpan,
            peak_half_window: 14,
            source_country: "IT".into(),
            min_active: 3,
            max_active: 49,
            lambda_ratio: 0.5,
            path_size: 1000,
            max_shift: 45,
            countries: Vec::new(),
            correlation_shift: 19,
            impact_test_days: 30,
            impact_max_density: 0.5,
            impact_levels: 10,
            gp_lags: 6,
            horizons: vec![7, 14],
            forecast_outcome: Outcome::Deaths,
            start_threshold: 10.0,
            min_train_rows: 10,
            max_test_days: None,
            gp_restarts: 5,
            gp_max_iterations: 100,
            warm_start: true,
            seed: 0,
            synth_countries: vec!["IT".into(), "UK".into(), "US".into()],
            synth_history_days: 3 * 365,
            synth_days: 200,
            synth_beta: 0.3,
            synth_country_lag: 10,
            synth_deaths_lag: 14,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let config: Self = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Self::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.smoothing_days == 0 {
            bail!("smoothing_days must be positive");
        }
        if self.news_window < 2 {
            bail!("news_window must be at least 2");
        }
        if self.min_active == 0 || self.min_active > self.max_active {
            bail!("need 1 <= min_active <= max_active");
        }
        if !(self.lambda_ratio >= 0.0 && self.lambda_ratio.is_finite()) {
            bail!("lambda_ratio must be finite and non-negative");
        }
        if self.path_size == 0 || self.impact_levels == 0 || self.gp_restarts == 0 {
            bail!("path_size, impact_levels and gp_restarts must be positive");
        }
        if !(self.impact_max_density > 0.0 && self.impact_max_density <= 1.0) {
            bail!("impact_max_density must lie in (0, 1]");
        }
        if self.gp_lags == 0 || self.horizons.is_empty() || self.horizons.contains(&0) {
            bail!("gp_lags and every horizon must be positive");
        }
        if let Some(end) = self.analysis_end {
            if end < self.analysis_start {
                bail!("analysis_end precedes analysis_start");
            }
        }
        if self.synth_days < 2 || self.synth_countries.is_empty() {
            bail!("synthetic data needs at least two days and one country");
        }
        if self.synth_beta.is_nan() || self.synth_beta < 0.0 {
            bail!("synth_beta must be non-negative");
        }
        Ok(())
    }

    /// Canonical text used for hashing: every key, defaults included.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.smoothing_days, c.news_window, c.min_active, c.max_active), (14, 56, 3, 49));
        assert_eq!((c.gp_lags, c.horizons.clone()), (6, vec![7, 14]));
        assert_eq!((c.lambda_ratio, c.path_size, c.max_shift), (0.5, 1000, 45));
        c.validate().unwrap();
    }

    #[test]
    fn partial_file_and_unknown_keys() {
        let c: RunConfig = toml::from_str("news_window = 28\nhorizons = [7]\n").unwrap();
        assert_eq!(c.news_window, 28);
        assert_eq!(c.smoothing_days, 14);
        assert!(toml::from_str::<RunConfig>("newz_window = 28\n").is_err());
    }

    #[test]
    fn canonical_round_trips() {
        let c = RunConfig { max_test_days: Some(20), analysis_end: NaiveDate::from_ymd_opt(2020, 6, 1), ..Default::default() };
        let back: RunConfig = toml::from_str(&c.canonical()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_ranges() {
        assert!(RunConfig { min_active: 50, ..Default::default() }.validate().is_err());
        assert!(RunConfig { impact_max_density: 1.5, ..Default::default() }.validate().is_err());
        assert!(RunConfig { horizons: vec![0], ..Default::default() }.validate().is_err());
    }
}
