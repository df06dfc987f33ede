//! Seeded synthetic country data with planted ground truth.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CountryDataset, NewsCounts};
use crate::news::NewsRatio;
use crate::timeseries::TimeSeries;
use crate::unsupervised::{CategoryKind, SymptomCategory, COVID_TERMS_WEIGHT, FF100_SYMPTOMS};

/// Derivative-of-logistic bump scaled to peak at 1: `4e/(1+e)²`, `e = exp(−r(t−c))`.
pub fn logistic_bump(t: f64, peak: f64, rate: f64) -> f64 {
    let e = (-rate * (t - peak)).exp();
    if !e.is_finite() {
        return 0.0;
    }
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    /// Day index of the peak.
    pub peak: f64,
    pub rate: f64,
    pub amplitude: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewsEpisode {
    pub onset: usize,
    pub offset: usize,
    pub peak: f64,
    pub rate: f64,
    /// Multiplicative noise on the daily ratio.
    pub noise: f64,
    /// Ratio at the peak of the episode.
    pub max_ratio: f64,
}

impl NewsEpisode {
    fn base(&self, t: usize) -> f64 {
        if t < self.onset || t >= self.offset {
            0.0
        } else {
            logistic_bump(t as f64, self.peak, self.rate)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub seed: u64,
    pub country: String,
    pub start: NaiveDate,
    /// Days before the current period, carrying only seasonal baseline activity.
    pub history_days: usize,
    pub days: usize,
    pub waves: Vec<Wave>,
    /// Coupling of query frequencies to the news ratio.
    pub beta: f64,
    pub news: NewsEpisode,
    pub queries_per_category: usize,
    /// Query frequency scale (sessions share) of a fully active symptom.
    pub query_scale: f64,
    pub query_noise: f64,
    /// Relative amplitude of the yearly seasonal baseline.
    pub seasonal_amplitude: f64,
    /// Days by which symptom searches lead infections; one per category, cycled.
    pub symptom_delays: Vec<i64>,
    pub cases_lag: usize,
    pub deaths_lag: usize,
    pub cases_scale: f64,
    pub deaths_scale: f64,
}

impl Default for SyntheticScenario {
    fn default() -> Self {
        Self {
            seed: 0,
            country: "XX".into(),
            start: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            history_days: 0,
            days: 240,
            waves: vec![Wave { peak: 110.0, rate: 0.08, amplitude: 1.0 }],
            beta: 0.0,
            news: NewsEpisode { onset: 40, offset: 130, peak: 80.0, rate: 0.1, noise: 0.2, max_ratio: 0.4 },
            queries_per_category: 2,
            query_scale: 1e-4,
            query_noise: 0.02,
            seasonal_amplitude: 0.2,
            symptom_delays: vec![0],
            cases_lag: 5,
            deaths_lag: 14,
            cases_scale: 2000.0,
            deaths_scale: 100.0,
        }
    }
}

impl SyntheticScenario {
    pub fn validate(&self) -> Result<()> {
        if self.days < 2 || self.queries_per_category == 0 {
            return Err(Error::invalid("scenario needs at least two days and one query per category"));
        }
        if self.symptom_delays.is_empty() {
            return Err(Error::invalid("scenario needs at least one symptom delay"));
        }
        let positive = [self.query_scale, self.cases_scale, self.deaths_scale];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("scales must be positive"));
        }
        let non_negative = [self.beta, self.query_noise, self.seasonal_amplitude, self.news.noise];
        if non_negative.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("coupling and noise levels must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.news.max_ratio) {
            return Err(Error::invalid("peak news ratio must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticQuery {
    pub id: String,
    pub category: String,
    pub series: TimeSeries,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub scenario: SyntheticScenario,
    pub categories: Vec<SymptomCategory>,
    pub queries: Vec<SyntheticQuery>,
    /// Planted infection activity over the full span (history included).
    pub infection: TimeSeries,
    pub news: NewsRatio,
    pub cases: TimeSeries,
    pub deaths: TimeSeries,
    /// First day of the current period.
    pub current_start: NaiveDate,
}

/// Article total used when writing the synthetic news ratio as counts.
pub const SYNTHETIC_ARTICLES_PER_DAY: u64 = 1_000_000;

impl SyntheticDataset {
    pub fn to_dataset(&self) -> Result<CountryDataset> {
        Ok(CountryDataset {
            country: self.scenario.country.clone(),
            queries: self.queries.iter().map(|q| (q.id.clone(), q.series.clone())).collect(),
            categories: self.categories.clone(),
            cases: self.cases.clone(),
            deaths: self.deaths.clone(),
            news: NewsCounts::from_ratio(&self.news, SYNTHETIC_ARTICLES_PER_DAY)?,
        })
    }
}

fn symptom_categories(queries_per_category: usize) -> Result<Vec<SymptomCategory>> {
    let mut out: Vec<SymptomCategory> = FF100_SYMPTOMS
        .iter()
        .map(|(name, w)| {
            let queries = (0..queries_per_category).map(|k| format!("{name} {k}")).collect();
            SymptomCategory::new(*name, *w, CategoryKind::Symptom, queries)
        })
        .collect::<Result<_>>()?;
    let terms = (0..queries_per_category).map(|k| format!("covid {k}")).collect();
    out.push(SymptomCategory::new("covid terms", COVID_TERMS_WEIGHT, CategoryKind::CovidTerms, terms)?);
    Ok(out)
}

/// Random streams are split by purpose so that changing one knob leaves the others intact.
fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

pub fn generate_synthetic(scenario: &SyntheticScenario) -> Result<SyntheticDataset> {
    scenario.validate()?;
    let total = scenario.history_days + scenario.days;
    let h = scenario.history_days as f64;
    let infection: Vec<f64> = (0..total)
        .map(|t| {
            scenario
                .waves
                .iter()
                .map(|w| w.amplitude * logistic_bump(t as f64 - h, w.peak, w.rate))
                .sum()
        })
        .collect();
    let at = |t: i64| -> f64 {
        if t < 0 || t as usize >= total {
            0.0
        } else {
            infection[t as usize]
        }
    };

    let mut news_rng = stream(scenario.seed, 1);
    let news_noise = Normal::new(0.0, 1.0).expect("unit normal");
    let news: Vec<f64> = (0..total)
        .map(|t| {
            let base = if t < scenario.history_days { 0.0 } else { scenario.news.base(t - scenario.history_days) };
            let v = base * (1.0 + scenario.news.noise * news_noise.sample(&mut news_rng));
            (scenario.news.max_ratio * v).clamp(0.0, 1.0)
        })
        .collect();

    let categories = symptom_categories(scenario.queries_per_category)?;
    let mut query_rng = stream(scenario.seed, 2);
    let mut queries = Vec::new();
    for (c, cat) in categories.iter().enumerate() {
        let delay = scenario.symptom_delays[c % scenario.symptom_delays.len()];
        for id in &cat.member_queries {
            let level = 0.1 + 0.1 * query_rng.random::<f64>();
            let phase = query_rng.random_range(0.0..std::f64::consts::TAU);
            let values: Vec<f64> = (0..total)
                .map(|t| {
                    let seasonal = level * (1.0 + scenario.seasonal_amplitude * (t as f64 * std::f64::consts::TAU / 365.25 + phase).sin());
                    let signal = cat.weight * at(t as i64 + delay);
                    let noise = scenario.query_noise * news_noise.sample(&mut query_rng);
                    (scenario.query_scale * (seasonal + signal + scenario.beta * news[t] + noise)).max(0.0)
                })
                .collect();
            queries.push(SyntheticQuery {
                id: id.clone(),
                category: cat.name.clone(),
                series: TimeSeries::new(scenario.start, values)?,
            });
        }
    }

    let mut clinical_rng = stream(scenario.seed, 3);
    let mut counts = |lag: usize, scale: f64| -> Vec<f64> {
        (0..total)
            .map(|t| {
                let mean = scale * at(t as i64 - lag as i64);
                if mean > 0.0 {
                    Poisson::new(mean).expect("positive mean").sample(&mut clinical_rng).round()
                } else {
                    0.0
                }
            })
            .collect()
    };
    let cases = counts(scenario.cases_lag, scenario.cases_scale);
    let deaths = counts(scenario.deaths_lag, scenario.deaths_scale);

    Ok(SyntheticDataset {
        scenario: scenario.clone(),
        categories,
        queries,
        infection: TimeSeries::new(scenario.start, infection)?,
        news: NewsRatio::new(TimeSeries::new(scenario.start, news)?)?,
        cases: TimeSeries::new(scenario.start, cases)?,
        deaths: TimeSeries::new(scenario.start, deaths)?,
        current_start: scenario.start + Duration::days(scenario.history_days as i64),
    })
}

/// Search score `g = g_p + β m` built from an infection wave preceded by a news episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeconfoundingScenario {
    pub seed: u64,
    pub beta: f64,
    pub days: usize,
    pub infection_peak: f64,
    pub infection_rate: f64,
    pub infection_noise: f64,
    pub news: NewsEpisode,
}

impl DeconfoundingScenario {
    pub fn new(seed: u64, beta: f64) -> Self {
        Self {
            seed,
            beta,
            days: 360,
            infection_peak: 260.0,
            infection_rate: 0.06,
            infection_noise: 0.01,
            news: NewsEpisode { onset: 90, offset: 170, peak: 130.0, rate: 0.1, noise: 0.4, max_ratio: 1.0 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeconfoundingData {
    /// Planted infection-driven component.
    pub infection: TimeSeries,
    pub news: TimeSeries,
    pub search: TimeSeries,
}

pub fn generate_deconfounding(s: &DeconfoundingScenario, start: NaiveDate) -> Result<DeconfoundingData> {
    let mut g_rng = stream(s.seed, 11);
    let mut m_rng = stream(s.seed, 12);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let gp: Vec<f64> = (0..s.days)
        .map(|t| logistic_bump(t as f64, s.infection_peak, s.infection_rate) + s.infection_noise * unit.sample(&mut g_rng))
        .collect();
    let raw: Vec<f64> = (0..s.days)
        .map(|t| (s.news.base(t) * (1.0 + s.news.noise * unit.sample(&mut m_rng))).max(0.0))
        .collect();
    let peak = (0..s.days).map(|t| s.news.base(t)).fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::invalid("news episode never becomes active"));
    }
    let m: Vec<f64> = raw.iter().map(|v| (s.news.max_ratio * v / peak).min(1.0)).collect();
    let g: Vec<f64> = gp.iter().zip(&m).map(|(a, b)| a + s.beta * b).collect();
    Ok(DeconfoundingData {
        infection: TimeSeries::new(start, gp)?,
        news: TimeSeries::new(start, m)?,
        search: TimeSeries::new(start, g)?,
    })
}
