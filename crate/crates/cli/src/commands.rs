//! One function per subcommand. Each loads its inputs, runs the models and stages outputs on a [`Run`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{Duration, NaiveDate};
use nalgebra::DMatrix;
use serde::Serialize;

use querycast::forecast::{self, ForecastKind, ForecastRecord, RollingOptions};
use querycast::gp::GpFitOptions;
use querycast::impact::{self, CountryPanel, ImpactConfig, OutcomeShift};
use querycast::ingest::{self, CountryDataset};
use querycast::news::{self, GammaOptions};
use querycast::synthetic::{self, NewsEpisode, SyntheticScenario, Wave};
use querycast::timeseries::{self, TimeSeries};
use querycast::transfer::{self, QueryLabel, TransferConfig, TransferInputs};
use querycast::unsupervised::{self, ScoreOptions, SymptomPanel};

use crate::config::{Outcome, RunConfig};
use crate::output::{DatedTable, Run};

pub struct Paths {
    pub input_dir: PathBuf,
    pub out_dir: PathBuf,
}

fn load(run: &mut Run, dir: &Path, country: &str) -> Result<CountryDataset> {
    let ds = CountryDataset::load(dir, country)?;
    for rel in ingest::dataset_files(country) {
        run.input(dir, &rel)?;
    }
    Ok(ds)
}

fn f(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

/// Harmonically smoothed series restricted to `[from, to]`.
fn smoothed(series: &TimeSeries, window: usize, from: NaiveDate, to: NaiveDate) -> Result<TimeSeries> {
    let s = timeseries::harmonic_smooth(series, window)?;
    Ok(s.slice_dates(from.max(s.start()), to.min(s.end()))?)
}

fn matrix(columns: &[TimeSeries]) -> DMatrix<f64> {
    let n = columns.first().map_or(0, TimeSeries::len);
    DMatrix::from_fn(n, columns.len(), |i, j| columns[j].values()[i])
}

#[derive(Serialize)]
struct ScoreSummary {
    country: String,
    historical_start: NaiveDate,
    current_start: NaiveDate,
    baseline_seasons: usize,
    constant_categories: Vec<String>,
}

fn unsupervised_score(ds: &CountryDataset, config: &RunConfig) -> Result<(TimeSeries, unsupervised::BaselineBand, ScoreSummary)> {
    let (lo, hi) = ds.common_span(None, config.analysis_end)?;
    let raw = ds
        .categories
        .iter()
        .map(|c| {
            let members: Vec<TimeSeries> = c
                .member_queries
                .iter()
                .map(|q| ds.queries[q].slice_dates(lo, hi))
                .collect::<querycast::Result<_>>()?;
            unsupervised::aggregate_category(&members)
        })
        .collect::<querycast::Result<Vec<_>>>()?;
    let panel = SymptomPanel::from_category_series(ds.categories.clone(), &raw, config.analysis_start, config.smoothing_days)?;
    let (score, band) = unsupervised::build_panel_scores(&panel, &ScoreOptions::default())?;
    let summary = ScoreSummary {
        country: ds.country.clone(),
        historical_start: panel.historical_start,
        current_start: panel.current_start,
        baseline_seasons: band.seasons,
        constant_categories: panel.constant_categories.clone(),
    };
    Ok((score, band, summary))
}

pub fn score(run: &mut Run, config: &RunConfig, paths: &Paths, country: &str) -> Result<()> {
    let ds = load(run, &paths.input_dir, country)?;
    let (score, band, summary) = unsupervised_score(&ds, config)?;
    run.table("score.csv", &DatedTable::new(format!("{country} unsupervised score"), score.start(), score.len()).column("score", score.values().to_vec()))?;
    let baseline = DatedTable::new(format!("{country} historical baseline"), band.mean_trend.start(), band.mean_trend.len())
        .column("mean", band.mean_trend.values().to_vec())
        .column("lower", band.lower.values().to_vec())
        .column("upper", band.upper.values().to_vec());
    run.table("baseline.csv", &baseline)?;
    run.json("score.json", &summary)
}

#[derive(Serialize)]
struct AdjustSummary {
    country: String,
    window: usize,
    normalization: news::WindowNormalization,
    first_gamma_date: NaiveDate,
    mean_gamma: f64,
    peak: news::PeakReduction,
}

pub fn adjust(run: &mut Run, config: &RunConfig, paths: &Paths, country: &str) -> Result<()> {
    let ds = load(run, &paths.input_dir, country)?;
    let (g, _, _) = unsupervised_score(&ds, config)?;
    let m = ds.news.ratio()?;
    let m = m.series().slice_dates(g.start(), g.end()).context("news ratio does not cover the score period")?;
    let options = GammaOptions { window: config.news_window, normalization: config.news_normalization };
    let gamma = news::gamma_series(&g, &m, &options)?;
    let adjusted = news::adjust_signal(&g, &gamma.series)?;
    let (from, to) = (adjusted.start(), adjusted.end());
    let raw = g.slice_dates(from, to)?;
    let peak = news::peak_reduction_report(&raw, &adjusted, config.peak_half_window)?;
    let table = DatedTable::new(format!("{country} news-adjusted score"), from, adjusted.len())
        .column("score", raw.values().to_vec())
        .column("news_ratio", m.slice_dates(from, to)?.values().to_vec())
        .column("gamma", gamma.series.values().to_vec())
        .column("adjusted", adjusted.values().to_vec());
    run.table("adjusted.csv", &table)?;
    run.json(
        "adjust.json",
        &AdjustSummary {
            country: country.into(),
            window: config.news_window,
            normalization: config.news_normalization,
            first_gamma_date: from,
            mean_gamma: gamma.series.values().iter().sum::<f64>() / gamma.series.len() as f64,
            peak,
        },
    )
}

/// Smoothed query matrix and labels over `[from, to]`.
fn query_matrix(ds: &CountryDataset, window: usize, from: NaiveDate, to: NaiveDate) -> Result<(DMatrix<f64>, Vec<QueryLabel>)> {
    let mut cols = Vec::with_capacity(ds.queries.len());
    let mut labels = Vec::with_capacity(ds.queries.len());
    for (id, s) in &ds.queries {
        let sm = smoothed(s, window, from, to)?;
        if sm.start() != from || sm.end() != to {
            bail!("query `{id}` of {} does not cover {from}..={to} after smoothing", ds.country);
        }
        cols.push(sm);
        labels.push(QueryLabel::new(id.clone(), ds.query_category(id)));
    }
    Ok((matrix(&cols), labels))
}

/// Days on which every dataset has smoothed values inside the analysis window.
fn shared_window(sets: &[&CountryDataset], config: &RunConfig) -> Result<(NaiveDate, NaiveDate)> {
    let mut lo = config.analysis_start;
    let mut hi = NaiveDate::MAX;
    for ds in sets {
        let (a, b) = ds.common_span(None, config.analysis_end)?;
        lo = lo.max(a + Duration::days(config.smoothing_days as i64 - 1));
        hi = hi.min(b);
    }
    if lo > hi {
        bail!("the countries share no analysis days");
    }
    Ok((lo, hi))
}

#[derive(Serialize)]
struct TransferSummary {
    source: String,
    target: String,
    global_shift: i64,
    ensemble_size: usize,
    active_queries: Vec<String>,
    zero_mean_columns: Vec<String>,
    shift_profile: transfer::ShiftProfile,
}

pub fn transfer(run: &mut Run, config: &RunConfig, paths: &Paths, country: &str) -> Result<()> {
    let src = load(run, &paths.input_dir, &config.source_country)?;
    let tgt = load(run, &paths.input_dir, country)?;
    let (from, to) = shared_window(&[&src, &tgt], config)?;
    let (s, s_labels) = query_matrix(&src, config.smoothing_days, from, to)?;
    let (t, t_labels) = query_matrix(&tgt, config.smoothing_days, from, to)?;
    let y = smoothed(&src.cases, config.smoothing_days, from, to)?;
    let inputs = TransferInputs {
        source_train: &s,
        source_y: y.values(),
        source_labels: &s_labels,
        source_align: &s,
        target: &t,
        target_labels: &t_labels,
        target_start: from,
    };
    let tc = TransferConfig {
        max_shift: config.max_shift,
        min_active: config.min_active,
        max_active: config.max_active,
        path_size: config.path_size,
        lambda_ratio: config.lambda_ratio,
    };
    let outcome = transfer::run_transfer(&inputs, &tc)?;
    let profile = transfer::per_model_shift_profile(&outcome.ensemble, &s, &t, config.max_shift)?;
    let e = &outcome.estimate;
    let table = DatedTable::new(format!("{} to {country} transfer estimate", config.source_country), e.mean.start(), e.mean.len())
        .column("mean", e.mean.values().to_vec())
        .column("lower", e.lower.values().to_vec())
        .column("upper", e.upper.values().to_vec());
    run.table("transfer.csv", &table)?;
    run.csv(
        "mapping.csv",
        &["source", "target", "category", "r", "fallback"],
        outcome.mapping.pairs.iter().map(|p| vec![p.source.clone(), p.target.clone(), p.category.clone(), f(p.r), p.fallback.to_string()]),
    );
    let name = |j: &usize| s_labels[*j].id.clone();
    run.json(
        "transfer.json",
        &TransferSummary {
            source: config.source_country.clone(),
            target: country.into(),
            global_shift: outcome.mapping.global_shift,
            ensemble_size: e.ensemble_size,
            active_queries: outcome.active_features.iter().map(name).collect(),
            zero_mean_columns: outcome.zero_mean_columns.iter().map(|k| name(&outcome.active_features[*k])).collect(),
            shift_profile: profile,
        },
    )
}

fn country_list(config: &RunConfig, dir: &Path) -> Result<Vec<String>> {
    if !config.countries.is_empty() {
        return Ok(config.countries.clone());
    }
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let entry = entry?;
        if entry.path().join(ingest::QUERIES_FILE).is_file() {
            found.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    found.sort();
    if found.is_empty() {
        bail!("no country directories under {}", dir.display());
    }
    Ok(found)
}

#[derive(Serialize)]
struct ImpactSummary {
    countries: Vec<String>,
    first_day: NaiveDate,
    days: usize,
    correlation_shift: i64,
    skipped_days: Vec<NaiveDate>,
    estimate_sum: f64,
    nonpositive_denominator: bool,
}

pub fn impact(run: &mut Run, config: &RunConfig, paths: &Paths) -> Result<()> {
    let countries = country_list(config, &paths.input_dir)?;
    let sets: Vec<CountryDataset> = countries.iter().map(|c| load(run, &paths.input_dir, c)).collect::<Result<_>>()?;
    let (from, to) = shared_window(&sets.iter().collect::<Vec<_>>(), config)?;
    let query_ids: Vec<String> = sets[0].queries.keys().cloned().collect();
    let mut panels = Vec::new();
    for ds in &sets {
        if !ds.queries.keys().eq(query_ids.iter()) {
            bail!("{} and {} have different query vocabularies", sets[0].country, ds.country);
        }
        let (z, _) = query_matrix(ds, config.smoothing_days, from, to)?;
        let y = smoothed(&ds.cases, config.smoothing_days, from, to)?;
        panels.push(CountryPanel { country: ds.country.clone(), queries: z, outcome: y.values().to_vec() });
    }
    let panel = impact::aggregate_countries(&panels, &query_ids)?;
    let correlations = impact::correlate_features(&panel, &OutcomeShift::Global(config.correlation_shift))?;
    run.csv(
        "correlations.csv",
        &["query", "r", "rank", "undefined"],
        correlations.iter().map(|c| vec![c.query.clone(), opt(c.r), c.rank.to_string(), c.r.is_none().to_string()]),
    );
    let ic = ImpactConfig {
        test_days: config.impact_test_days,
        max_density: config.impact_max_density,
        density_levels: config.impact_levels,
        path_size: config.path_size,
        lambda_ratio: config.lambda_ratio,
    };
    let report = impact::impact_analysis(&panel, &ic)?;
    let ranked = |list: &[impact::QueryImpact], sign: &str| -> Vec<Vec<String>> {
        list.iter().enumerate().map(|(i, q)| vec![q.query.clone(), f(q.theta), (i + 1).to_string(), sign.to_string()]).collect()
    };
    let mut rows = ranked(&report.positive, "positive");
    rows.extend(ranked(&report.negative, "negative"));
    rows.extend(report.impacts.iter().filter(|q| q.theta == 0.0).map(|q| vec![q.query.clone(), f(0.0), String::new(), "zero".into()]));
    run.csv("impact.csv", &["query", "theta", "rank", "sign"], rows);
    run.json(
        "impact.json",
        &ImpactSummary {
            countries,
            first_day: from,
            days: panel.days,
            correlation_shift: config.correlation_shift,
            skipped_days: report.skipped_days.iter().map(|d| from + Duration::days(*d as i64)).collect(),
            estimate_sum: report.estimate_sum,
            nonpositive_denominator: report.nonpositive_denominator,
        },
    )
}

#[derive(Serialize)]
struct ForecastCell {
    kind: ForecastKind,
    horizon: usize,
    mae: f64,
    mae_std: f64,
    points: usize,
    missing: Vec<NaiveDate>,
}

#[derive(Serialize)]
pub struct ForecastSummary {
    pub country: String,
    cells: Vec<ForecastCell>,
}

pub fn forecast(run: &mut Run, config: &RunConfig, paths: &Paths, country: &str, seed: u64) -> Result<()> {
    let ds = load(run, &paths.input_dir, country)?;
    let (from, to) = shared_window(&[&ds], config)?;
    let qs: Vec<TimeSeries> = ds.queries.values().map(|s| smoothed(s, config.smoothing_days, from, to)).collect::<Result<_>>()?;
    let z = forecast::search_signal(&qs)?;
    let y = match config.forecast_outcome {
        Outcome::Cases => &ds.cases,
        Outcome::Deaths => &ds.deaths,
    }
    .slice_dates(from, to)?;
    run.seeds.insert("gp".into(), seed);
    let mut records: Vec<ForecastRecord> = Vec::new();
    for &h in &config.horizons {
        let options = RollingOptions {
            lags: config.gp_lags,
            horizon: h,
            start_threshold: config.start_threshold,
            min_train_rows: config.min_train_rows,
            max_test_days: config.max_test_days,
            gp: GpFitOptions { restarts: config.gp_restarts, max_iterations: config.gp_max_iterations, seed, ..Default::default() },
            warm_start: config.warm_start,
            kinds: ForecastKind::ALL.to_vec(),
        };
        records.extend(forecast::rolling_evaluation(&z, &y, &options)?);
    }
    let rows = records.iter().flat_map(|r| {
        r.points.iter().map(move |p| {
            vec![
                r.kind.label().to_string(),
                r.horizon.to_string(),
                p.origin_date.to_string(),
                p.target_date.to_string(),
                f(p.forecast),
                f(p.stddev),
                f(p.truth),
            ]
        })
    });
    run.csv("forecast_points.csv", &["model", "horizon", "origin", "target", "forecast", "stddev", "truth"], rows);
    run.csv(
        "forecast_summary.csv",
        &["country", "model", "horizon", "mae", "mae_std", "points", "missing"],
        records.iter().map(|r| {
            vec![country.to_string(), r.kind.label().into(), r.horizon.to_string(), f(r.mae), f(r.mae_std), r.points.len().to_string(), r.missing.len().to_string()]
        }),
    );
    let summary = ForecastSummary {
        country: country.into(),
        cells: records
            .iter()
            .map(|r| ForecastCell { kind: r.kind, horizon: r.horizon, mae: r.mae, mae_std: r.mae_std, points: r.points.len(), missing: r.missing.clone() })
            .collect(),
    };
    run.json("forecast.json", &summary)
}

pub fn synth(run: &mut Run, config: &RunConfig, seed: u64) -> Result<()> {
    let start = config.analysis_start - Duration::days(config.synth_history_days as i64);
    let mut scenarios = Vec::new();
    let mut datasets = Vec::new();
    for (k, country) in config.synth_countries.iter().enumerate() {
        let s = SyntheticScenario {
            seed: seed.wrapping_add(k as u64),
            country: country.clone(),
            start,
            history_days: config.synth_history_days,
            days: config.synth_days,
            waves: vec![Wave { peak: 70.0 + (k * config.synth_country_lag) as f64, rate: 0.08, amplitude: 1.0 }],
            beta: config.synth_beta,
            news: NewsEpisode { onset: 20, offset: 110, peak: 55.0, rate: 0.1, noise: 0.2, max_ratio: 0.4 },
            deaths_lag: config.synth_deaths_lag,
            ..Default::default()
        };
        datasets.push(synthetic::generate_synthetic(&s)?.to_dataset()?);
        run.seeds.insert(format!("synth.{country}"), s.seed);
        scenarios.push(s);
    }
    for (path, bytes) in ingest::write_datasets(Path::new(""), &datasets)? {
        run.put(path.to_string_lossy().replace('\\', "/"), bytes);
    }
    run.json("truth.json", &scenarios)
}

#[derive(serde::Deserialize)]
struct StoredCell {
    kind: ForecastKind,
    horizon: usize,
    mae: f64,
}

#[derive(serde::Deserialize)]
struct StoredSummary {
    country: String,
    cells: Vec<StoredCell>,
}

/// Collects `forecast.json` files under the input directory into one country-by-model MAE table.
pub fn report(run: &mut Run, config: &RunConfig, paths: &Paths) -> Result<()> {
    let mut files = Vec::new();
    for dir in std::iter::once(paths.input_dir.clone()).chain(subdirs(&paths.input_dir)?) {
        if dir.join("forecast.json").is_file() {
            files.push(dir.join("forecast.json"));
        }
    }
    if files.is_empty() {
        bail!("no forecast.json under {}", paths.input_dir.display());
    }
    let kinds = [ForecastKind::ArF, ForecastKind::SarF, ForecastKind::PerF];
    let mut columns: Vec<(usize, ForecastKind)> = Vec::new();
    for h in &config.horizons {
        columns.extend(kinds.iter().map(|k| (*h, *k)));
    }
    let mut rows: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for file in &files {
        let rel = file.strip_prefix(&paths.input_dir).unwrap_or(file);
        run.input(&paths.input_dir, rel)?;
        let s: StoredSummary = serde_json::from_slice(&std::fs::read(file)?).with_context(|| format!("parsing {}", file.display()))?;
        let row = rows.entry(s.country).or_insert_with(|| vec![None; columns.len()]);
        for c in s.cells {
            if let Some(i) = columns.iter().position(|col| *col == (c.horizon, c.kind)) {
                row[i] = Some(c.mae);
            }
        }
    }
    let complete: Vec<Vec<f64>> = rows.values().filter_map(|r| r.iter().copied().collect::<Option<Vec<f64>>>()).filter(|r| r.iter().all(|v| v.is_finite())).collect();
    let norm = if complete.len() == rows.len() { forecast::normalize_mae_table(&complete).ok() } else { None };

    let mut header = vec!["country".to_string()];
    header.extend(columns.iter().map(|(h, k)| format!("{} {h}", k.label())));
    let mut table: Vec<Vec<String>> = rows.iter().map(|(c, r)| std::iter::once(c.clone()).chain(r.iter().map(|v| opt(*v))).collect()).collect();
    if let Some(n) = &norm {
        table.push(std::iter::once("normalised mean".to_string()).chain(n.iter().map(|v| f(*v))).collect());
    }
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    run.csv("table.csv", &hdr, table.clone());

    let mut md = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for row in &table {
        let cells: Vec<String> = row.iter().enumerate().map(|(i, c)| if i == 0 { c.clone() } else { c.parse::<f64>().map_or(c.clone(), |v| format!("{v:.3}")) }).collect();
        md.push_str(&format!("| {} |\n", cells.join(" | ")));
    }
    if norm.is_none() {
        md.push_str("\nNormalised means omitted: some cells are missing.\n");
    }
    run.put("report.md", md.into_bytes());
    Ok(())
}

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    out.sort();
    Ok(out)
}
