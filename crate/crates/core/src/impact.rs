//! Multi-country query correlations and the normalised query impact Θ.
//!
//! Θ(q) sums `f_q · w_q` over density levels, test days and countries, and
//! divides by the sum of the corresponding model estimates `ŷ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::elastic_net::{self, ElasticNetModel};
use crate::error::{Error, Result};
use crate::timeseries;
use crate::transfer::min_max_columns;

/// One country's query frequencies (days × queries) and outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct CountryPanel {
    pub country: String,
    pub queries: DMatrix<f64>,
    pub outcome: Vec<f64>,
}

/// Country blocks stacked row-wise, block `c` holding rows `c·M..(c+1)·M`.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregatedPanel {
    pub z: DMatrix<f64>,
    pub y: Vec<f64>,
    pub country_index: Vec<usize>,
    pub countries: Vec<String>,
    pub query_ids: Vec<String>,
    pub days: usize,
}

impl AggregatedPanel {
    pub fn row(&self, country: usize, day: usize) -> usize {
        country * self.days + day
    }
}

/// Min-max normalises every country block (queries column-wise, and the outcome) and stacks them.
pub fn aggregate_countries(panels: &[CountryPanel], query_ids: &[String]) -> Result<AggregatedPanel> {
    let first = panels
        .first()
        .ok_or_else(|| Error::invalid("no country panels to aggregate"))?;
    let (days, n) = (first.queries.nrows(), query_ids.len());
    for p in panels {
        if p.queries.ncols() != n {
            return Err(Error::alignment(format!(
                "{} has {} queries, vocabulary has {n}",
                p.country,
                p.queries.ncols()
            )));
        }
        if p.queries.nrows() != days || p.outcome.len() != days {
            return Err(Error::alignment(format!(
                "{} covers {} days, expected {days}",
                p.country,
                p.queries.nrows()
            )));
        }
    }
    let c = panels.len();
    let mut z = DMatrix::zeros(c * days, n);
    let mut y = Vec::with_capacity(c * days);
    for (k, p) in panels.iter().enumerate() {
        let block = min_max_columns(&p.queries)?;
        z.view_mut((k * days, 0), (days, n)).copy_from(&block);
        y.extend(timeseries::min_max_values(&p.outcome)?.0);
    }
    Ok(AggregatedPanel {
        z,
        y,
        country_index: (0..c).flat_map(|k| std::iter::repeat_n(k, days)).collect(),
        countries: panels.iter().map(|p| p.country.clone()).collect(),
        query_ids: query_ids.to_vec(),
        days,
    })
}

/// How far the outcome is moved back relative to the queries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeShift {
    Global(i64),
    PerCountry(Vec<i64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureCorrelation {
    pub query: String,
    /// `None` for a constant column.
    pub r: Option<f64>,
    pub rank: usize,
}

/// Pearson r of every query with the outcome `shift` days later, pooled over countries.
pub fn correlate_features(panel: &AggregatedPanel, shift: &OutcomeShift) -> Result<Vec<FeatureCorrelation>> {
    let shifts: Vec<i64> = match shift {
        OutcomeShift::Global(s) => vec![*s; panel.countries.len()],
        OutcomeShift::PerCountry(v) if v.len() == panel.countries.len() => v.clone(),
        OutcomeShift::PerCountry(v) => {
            return Err(Error::invalid(format!(
                "{} shifts for {} countries",
                v.len(),
                panel.countries.len()
            )))
        }
    };
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (c, &s) in shifts.iter().enumerate() {
        let (q_days, y_days) = timeseries::lag_overlap(panel.days, panel.days, s);
        if q_days.len() < 3 {
            return Err(Error::InsufficientOverlap(format!(
                "shift {s} leaves {} days for {}",
                q_days.len(),
                panel.countries[c]
            )));
        }
        pairs.extend(q_days.zip(y_days).map(|(a, b)| (panel.row(c, a), panel.row(c, b))));
    }
    let y: Vec<f64> = pairs.iter().map(|&(_, b)| panel.y[b]).collect();
    let mut out: Vec<FeatureCorrelation> = panel
        .query_ids
        .iter()
        .enumerate()
        .map(|(j, id)| {
            let x: Vec<f64> = pairs.iter().map(|&(a, _)| panel.z[(a, j)]).collect();
            FeatureCorrelation {
                query: id.clone(),
                r: timeseries::pearson_values(&x, &y).ok(),
                rank: 0,
            }
        })
        .collect();
    out.sort_by(|a, b| match (a.r, b.r) {
        (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.query.cmp(&b.query)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.query.cmp(&b.query),
    });
    for (k, f) in out.iter_mut().enumerate() {
        f.rank = k + 1;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactConfig {
    /// Number of final days each used once as the test day.
    pub test_days: usize,
    pub max_density: f64,
    pub density_levels: usize,
    pub path_size: usize,
    pub lambda_ratio: f64,
}

impl Default for ImpactConfig {
    fn default() -> Self {
        Self {
            test_days: 30,
            max_density: 0.5,
            density_levels: 10,
            path_size: elastic_net::DEFAULT_PATH_SIZE,
            lambda_ratio: elastic_net::DEFAULT_LAMBDA_RATIO,
        }
    }
}

/// Integer feature counts spaced evenly from 1% to `max_density` of `n`, each at least 1.
pub fn density_targets(n: usize, max_density: f64, levels: usize) -> Vec<usize> {
    let lo = 0.01 * n as f64;
    let hi = max_density * n as f64;
    (0..levels)
        .map(|k| {
            let frac = if levels == 1 { 1.0 } else { k as f64 / (levels - 1) as f64 };
            ((lo + (hi - lo) * frac).round() as usize).max(1)
        })
        .collect()
}

/// One test row scored by the model selected at one density level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactTerm {
    pub country: usize,
    pub features: Vec<f64>,
    pub estimate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactSelection {
    pub day: usize,
    pub level: usize,
    pub target_active: usize,
    pub model: ElasticNetModel,
    pub test_mse: f64,
    pub terms: Vec<ImpactTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryImpact {
    pub query: String,
    pub theta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    /// In vocabulary order.
    pub impacts: Vec<QueryImpact>,
    /// Strictly positive Θ, largest first.
    pub positive: Vec<QueryImpact>,
    /// Strictly negative Θ, most negative first.
    pub negative: Vec<QueryImpact>,
    pub selections: Vec<ImpactSelection>,
    pub skipped_days: Vec<usize>,
    pub estimate_sum: f64,
    /// Set when the summed estimates are not positive.
    pub nonpositive_denominator: bool,
}

/// Θ from stored selections.
pub fn theta_from_selections(selections: &[ImpactSelection], n_features: usize) -> (Vec<f64>, f64) {
    let mut numerators = vec![0.0; n_features];
    let mut denominator = 0.0;
    for sel in selections {
        for term in &sel.terms {
            for (j, num) in numerators.iter_mut().enumerate() {
                *num += term.features[j] * sel.model.weights[j];
            }
            denominator += term.estimate;
        }
    }
    (numerators.into_iter().map(|v| v / denominator).collect(), denominator)
}

fn select_model<'a>(
    models: &'a [ElasticNetModel],
    mses: &[f64],
    target: usize,
) -> (&'a ElasticNetModel, f64) {
    let distance = models
        .iter()
        .map(|m| m.active_count.abs_diff(target))
        .min()
        .expect("non-empty path");
    // Later path models have smaller λ₁, so `>=` hands ties to them.
    let mut best: Option<usize> = None;
    for (k, m) in models.iter().enumerate() {
        if m.active_count.abs_diff(target) != distance {
            continue;
        }
        if best.is_none_or(|b| mses[k] <= mses[b]) {
            best = Some(k);
        }
    }
    let k = best.expect("at least one model at the minimal distance");
    (&models[k], mses[k])
}

pub fn impact_analysis(panel: &AggregatedPanel, config: &ImpactConfig) -> Result<ImpactReport> {
    if config.test_days == 0 || config.density_levels == 0 {
        return Err(Error::invalid("test days and density levels must be positive"));
    }
    if !(config.max_density > 0.0 && config.max_density <= 1.0) {
        return Err(Error::invalid(format!("max density {} outside (0, 1]", config.max_density)));
    }
    if panel.days < config.test_days + 2 {
        return Err(Error::InsufficientHistory {
            needed: config.test_days + 2,
            available: panel.days,
        });
    }
    let n = panel.query_ids.len();
    let targets = density_targets(n, config.max_density, config.density_levels);
    let countries = panel.countries.len();
    let mut selections = Vec::new();
    let mut skipped_days = Vec::new();
    for day in panel.days - config.test_days..panel.days {
        let train: Vec<usize> = (0..countries)
            .flat_map(|c| (0..day).map(move |d| panel.row(c, d)))
            .collect();
        let test: Vec<usize> = (0..countries).map(|c| panel.row(c, day)).collect();
        let x = panel.z.select_rows(&train);
        let y: Vec<f64> = train.iter().map(|&r| panel.y[r]).collect();
        let path = match elastic_net::fit_path(&x, &y, config.path_size, config.lambda_ratio) {
            Ok(p) => p,
            Err(Error::Degenerate(_)) => {
                skipped_days.push(day);
                continue;
            }
            Err(e) => return Err(e),
        };
        let x_test = panel.z.select_rows(&test);
        let mses: Vec<f64> = path
            .models
            .iter()
            .map(|m| {
                let pred = elastic_net::predict(m, &x_test)?;
                Ok(pred
                    .iter()
                    .zip(&test)
                    .map(|(p, &r)| (p - panel.y[r]).powi(2))
                    .sum::<f64>()
                    / test.len() as f64)
            })
            .collect::<Result<_>>()?;
        for (level, &target) in targets.iter().enumerate() {
            let (model, test_mse) = select_model(&path.models, &mses, target);
            let terms = test
                .iter()
                .map(|&r| {
                    let features: Vec<f64> = panel.z.row(r).iter().copied().collect();
                    ImpactTerm {
                        country: panel.country_index[r],
                        estimate: model.predict_row(&features),
                        features,
                    }
                })
                .collect();
            selections.push(ImpactSelection {
                day,
                level,
                target_active: target,
                model: model.clone(),
                test_mse,
                terms,
            });
        }
    }
    let (theta, estimate_sum) = theta_from_selections(&selections, n);
    let impacts: Vec<QueryImpact> = panel
        .query_ids
        .iter()
        .zip(&theta)
        .map(|(q, &t)| QueryImpact {
            query: q.clone(),
            theta: t,
        })
        .collect();
    let mut positive: Vec<QueryImpact> = impacts.iter().filter(|q| q.theta > 0.0).cloned().collect();
    positive.sort_by(|a, b| b.theta.total_cmp(&a.theta).then_with(|| a.query.cmp(&b.query)));
    let mut negative: Vec<QueryImpact> = impacts.iter().filter(|q| q.theta < 0.0).cloned().collect();
    negative.sort_by(|a, b| a.theta.total_cmp(&b.theta).then_with(|| a.query.cmp(&b.query)));
    Ok(ImpactReport {
        impacts,
        positive,
        negative,
        selections,
        skipped_days,
        estimate_sum,
        nonpositive_denominator: !(estimate_sum > 0.0),
    })
}
