//! CSV loaders and writers for query frequencies, clinical counts, news counts and categories.
//!
//! Every loader rejects gaps and duplicate dates and reports the offending line.
//! Writers emit the same layouts, so loading what was written gives back equal values.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate};

use crate::error::{Error, Result};
use crate::news::NewsRatio;
use crate::timeseries::TimeSeries;
use crate::unsupervised::{CategoryKind, SymptomCategory};

pub const QUERY_HEADER: [&str; 3] = ["date", "query", "frequency"];
pub const CLINICAL_HEADER: [&str; 4] = ["date", "country", "cases", "deaths"];
pub const NEWS_HEADER: [&str; 3] = ["date", "matched", "total"];
pub const CATEGORY_HEADER: [&str; 4] = ["category", "kind", "weight", "query"];

struct Source<'a> {
    name: &'a str,
}

impl Source<'_> {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Ingestion { source_name: self.name.to_string(), line, message: message.into() }
    }

    fn records<R: Read>(&self, reader: R, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let found = rdr.headers().map_err(|e| self.err(1, e.to_string()))?.clone();
        if found.iter().ne(header.iter().copied()) {
            return Err(self.err(1, format!("expected header `{}`, found `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(","))));
        }
        let mut out = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                self.err(line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            out.push((line, rec));
        }
        Ok(out)
    }

    fn date(&self, line: usize, field: &str) -> Result<NaiveDate> {
        NaiveDate::parse_from_str(field, "%Y-%m-%d").map_err(|_| self.err(line, format!("`{field}` is not an ISO-8601 date")))
    }

    fn non_negative(&self, line: usize, column: &str, field: &str) -> Result<f64> {
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
            Ok(v) => Err(self.err(line, format!("{column} must be finite and non-negative, got {v}"))),
            Err(_) => Err(self.err(line, format!("{column} `{field}` is not a number"))),
        }
    }

    fn count(&self, line: usize, column: &str, field: &str) -> Result<u64> {
        field
            .parse::<u64>()
            .map_err(|_| self.err(line, format!("{column} must be a non-negative integer, got `{field}`")))
    }

    /// Sorts dated values and checks that they cover consecutive days exactly once.
    fn series<T: Copy>(&self, what: &str, mut rows: Vec<(usize, NaiveDate, T)>) -> Result<(NaiveDate, Vec<T>)> {
        rows.sort_by_key(|(line, date, _)| (*date, *line));
        let mut values = Vec::with_capacity(rows.len());
        for pair in rows.windows(2) {
            let ((_, prev, _), (line, date, _)) = (pair[0], pair[1]);
            if date == prev {
                return Err(self.err(line, format!("duplicate row for {what} on {date}")));
            }
            if date != prev + Duration::days(1) {
                return Err(self.err(line, format!("{what} is missing {}", prev + Duration::days(1))));
            }
        }
        let start = rows.first().map(|r| r.1).ok_or_else(|| self.err(0, format!("no rows for {what}")))?;
        values.extend(rows.iter().map(|r| r.2));
        Ok((start, values))
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Ingestion { source_name: path.display().to_string(), line: 0, message: e.to_string() })
}

fn write_err(e: impl std::fmt::Display) -> Error {
    Error::invalid(format!("write failed: {e}"))
}

pub fn read_query_frequencies<R: Read>(reader: R, source_name: &str) -> Result<BTreeMap<String, TimeSeries>> {
    let src = Source { name: source_name };
    let mut by_query: BTreeMap<String, Vec<(usize, NaiveDate, f64)>> = BTreeMap::new();
    for (line, rec) in src.records(reader, &QUERY_HEADER)? {
        let date = src.date(line, &rec[0])?;
        let value = src.non_negative(line, "frequency", &rec[2])?;
        if rec[1].is_empty() {
            return Err(src.err(line, "empty query id"));
        }
        by_query.entry(rec[1].to_string()).or_default().push((line, date, value));
    }
    by_query
        .into_iter()
        .map(|(q, rows)| {
            let (start, values) = src.series(&format!("query `{q}`"), rows)?;
            Ok((q, TimeSeries::new(start, values)?))
        })
        .collect()
}

pub fn load_query_frequencies(path: &Path) -> Result<BTreeMap<String, TimeSeries>> {
    read_query_frequencies(open(path)?, &path.display().to_string())
}

pub fn write_query_frequencies<W: Write>(writer: W, queries: &BTreeMap<String, TimeSeries>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(QUERY_HEADER).map_err(write_err)?;
    for (q, s) in queries {
        for (i, v) in s.values().iter().enumerate() {
            w.write_record([s.date_at(i).to_string(), q.clone(), v.to_string()]).map_err(write_err)?;
        }
    }
    w.flush().map_err(write_err)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clinical {
    pub country: String,
    pub cases: TimeSeries,
    pub deaths: TimeSeries,
}

pub fn read_clinical<R: Read>(reader: R, source_name: &str, country: &str) -> Result<Clinical> {
    let src = Source { name: source_name };
    let mut rows = Vec::new();
    for (line, rec) in src.records(reader, &CLINICAL_HEADER)? {
        let date = src.date(line, &rec[0])?;
        let cases = src.count(line, "cases", &rec[2])?;
        let deaths = src.count(line, "deaths", &rec[3])?;
        if &rec[1] == country {
            rows.push((line, date, (cases as f64, deaths as f64)));
        }
    }
    let (start, values) = src.series(&format!("country `{country}`"), rows)?;
    Ok(Clinical {
        country: country.to_string(),
        cases: TimeSeries::new(start, values.iter().map(|v| v.0).collect())?,
        deaths: TimeSeries::new(start, values.iter().map(|v| v.1).collect())?,
    })
}

pub fn load_clinical(path: &Path, country: &str) -> Result<Clinical> {
    read_clinical(open(path)?, &path.display().to_string(), country)
}

pub fn write_clinical<W: Write>(writer: W, clinical: &[Clinical]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CLINICAL_HEADER).map_err(write_err)?;
    for c in clinical {
        if !c.cases.same_span(&c.deaths) {
            return Err(Error::alignment(format!("cases and deaths of {} differ in span", c.country)));
        }
        for (i, (a, b)) in c.cases.values().iter().zip(c.deaths.values()).enumerate() {
            if a.fract() != 0.0 || b.fract() != 0.0 || *a < 0.0 || *b < 0.0 {
                return Err(Error::invalid(format!("clinical counts of {} on {} are not non-negative integers", c.country, c.cases.date_at(i))));
            }
            w.write_record([c.cases.date_at(i).to_string(), c.country.clone(), (*a as u64).to_string(), (*b as u64).to_string()])
                .map_err(write_err)?;
        }
    }
    w.flush().map_err(write_err)
}

/// Daily article counts; the ratio is `matched / total`.
#[derive(Clone, Debug, PartialEq)]
pub struct NewsCounts {
    pub start: NaiveDate,
    pub matched: Vec<u64>,
    pub total: Vec<u64>,
}

impl NewsCounts {
    pub fn ratio(&self) -> Result<NewsRatio> {
        let values = self.matched.iter().zip(&self.total).map(|(m, t)| *m as f64 / *t as f64).collect();
        NewsRatio::new(TimeSeries::new(self.start, values)?)
    }

    /// Counts out of a fixed daily total, rounding the ratio.
    pub fn from_ratio(ratio: &NewsRatio, total: u64) -> Result<Self> {
        if total == 0 {
            return Err(Error::invalid("article total must be positive"));
        }
        let s = ratio.series();
        Ok(Self {
            start: s.start(),
            matched: s.values().iter().map(|v| (v * total as f64).round() as u64).collect(),
            total: vec![total; s.len()],
        })
    }
}

pub fn read_news_counts<R: Read>(reader: R, source_name: &str) -> Result<NewsCounts> {
    let src = Source { name: source_name };
    let mut rows = Vec::new();
    for (line, rec) in src.records(reader, &NEWS_HEADER)? {
        let date = src.date(line, &rec[0])?;
        let matched = src.count(line, "matched", &rec[1])?;
        let total = src.count(line, "total", &rec[2])?;
        if total == 0 {
            return Err(src.err(line, "total must be positive"));
        }
        if matched > total {
            return Err(src.err(line, format!("matched ({matched}) exceeds total ({total})")));
        }
        rows.push((line, date, (matched, total)));
    }
    let (start, values) = src.series("news counts", rows)?;
    Ok(NewsCounts {
        start,
        matched: values.iter().map(|v| v.0).collect(),
        total: values.iter().map(|v| v.1).collect(),
    })
}

pub fn load_news_counts(path: &Path) -> Result<NewsCounts> {
    read_news_counts(open(path)?, &path.display().to_string())
}

pub fn load_news_ratio(path: &Path) -> Result<NewsRatio> {
    load_news_counts(path)?.ratio()
}

pub fn write_news_counts<W: Write>(writer: W, news: &NewsCounts) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(NEWS_HEADER).map_err(write_err)?;
    for (i, (m, t)) in news.matched.iter().zip(&news.total).enumerate() {
        let date = news.start + Duration::days(i as i64);
        w.write_record([date.to_string(), m.to_string(), t.to_string()]).map_err(write_err)?;
    }
    w.flush().map_err(write_err)
}

fn kind_name(kind: CategoryKind) -> &'static str {
    match kind {
        CategoryKind::Symptom => "symptom",
        CategoryKind::CovidTerms => "covid_terms",
    }
}

/// One row per member query; categories keep their order of first appearance.
pub fn read_categories<R: Read>(reader: R, source_name: &str) -> Result<Vec<SymptomCategory>> {
    let src = Source { name: source_name };
    let mut order: Vec<(String, CategoryKind, f64, usize)> = Vec::new();
    let mut members: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (line, rec) in src.records(reader, &CATEGORY_HEADER)? {
        let name = rec[0].to_string();
        let kind = match &rec[1] {
            "symptom" => CategoryKind::Symptom,
            "covid_terms" => CategoryKind::CovidTerms,
            other => return Err(src.err(line, format!("unknown category kind `{other}`"))),
        };
        let weight = src.non_negative(line, "weight", &rec[2])?;
        match order.iter().find(|o| o.0 == name) {
            Some(o) if o.1 != kind || o.2 != weight => {
                return Err(src.err(line, format!("category `{name}` redefined with a different kind or weight")));
            }
            Some(_) => {}
            None => order.push((name.clone(), kind, weight, line)),
        }
        let list = members.entry(name).or_default();
        if list.iter().any(|q| q == &rec[3]) {
            return Err(src.err(line, format!("query `{}` listed twice", &rec[3])));
        }
        list.push(rec[3].to_string());
    }
    order
        .into_iter()
        .map(|(name, kind, weight, line)| {
            let queries = members.remove(&name).unwrap_or_default();
            SymptomCategory::new(name, weight, kind, queries).map_err(|e| src.err(line, e.to_string()))
        })
        .collect()
}

pub fn load_categories(path: &Path) -> Result<Vec<SymptomCategory>> {
    read_categories(open(path)?, &path.display().to_string())
}

pub fn write_categories<W: Write>(writer: W, categories: &[SymptomCategory]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CATEGORY_HEADER).map_err(write_err)?;
    for c in categories {
        for q in &c.member_queries {
            w.write_record([c.name.as_str(), kind_name(c.kind), &c.weight.to_string(), q]).map_err(write_err)?;
        }
    }
    w.flush().map_err(write_err)
}

/// Checks that every query named by a category has a frequency series.
pub fn check_category_queries(categories: &[SymptomCategory], queries: &BTreeMap<String, TimeSeries>) -> Result<()> {
    for c in categories {
        if let Some(q) = c.member_queries.iter().find(|q| !queries.contains_key(*q)) {
            return Err(Error::invalid(format!("category `{}` names query `{q}` with no frequency data", c.name)));
        }
    }
    Ok(())
}

/// One country's inputs in the on-disk layout
/// `categories.csv`, `clinical.csv`, `<country>/queries.csv`, `<country>/news.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct CountryDataset {
    pub country: String,
    pub queries: BTreeMap<String, TimeSeries>,
    pub categories: Vec<SymptomCategory>,
    pub cases: TimeSeries,
    pub deaths: TimeSeries,
    pub news: NewsCounts,
}

pub const CATEGORIES_FILE: &str = "categories.csv";
pub const CLINICAL_FILE: &str = "clinical.csv";
pub const QUERIES_FILE: &str = "queries.csv";
pub const NEWS_FILE: &str = "news.csv";

/// Files read by [`CountryDataset::load`], relative to the input directory.
pub fn dataset_files(country: &str) -> Vec<std::path::PathBuf> {
    vec![
        CATEGORIES_FILE.into(),
        CLINICAL_FILE.into(),
        Path::new(country).join(QUERIES_FILE),
        Path::new(country).join(NEWS_FILE),
    ]
}

impl CountryDataset {
    pub fn load(dir: &Path, country: &str) -> Result<Self> {
        let categories = load_categories(&dir.join(CATEGORIES_FILE))?;
        let clinical = load_clinical(&dir.join(CLINICAL_FILE), country)?;
        let queries = load_query_frequencies(&dir.join(country).join(QUERIES_FILE))?;
        let news = load_news_counts(&dir.join(country).join(NEWS_FILE))?;
        check_category_queries(&categories, &queries)?;
        Ok(Self { country: country.to_string(), queries, categories, cases: clinical.cases, deaths: clinical.deaths, news })
    }

    pub fn clinical(&self) -> Clinical {
        Clinical { country: self.country.clone(), cases: self.cases.clone(), deaths: self.deaths.clone() }
    }

    /// Latest start and earliest end over every series, optionally narrowed further.
    pub fn common_span(&self, from: Option<NaiveDate>, to: Option<NaiveDate>) -> Result<(NaiveDate, NaiveDate)> {
        let news_end = self.news.start + Duration::days(self.news.total.len() as i64 - 1);
        let mut lo = self.cases.start().max(self.news.start);
        let mut hi = self.cases.end().min(news_end);
        for s in self.queries.values() {
            lo = lo.max(s.start());
            hi = hi.min(s.end());
        }
        if let Some(f) = from {
            lo = lo.max(f);
        }
        if let Some(t) = to {
            hi = hi.min(t);
        }
        if lo > hi {
            return Err(Error::alignment(format!("the inputs of {} share no common days", self.country)));
        }
        Ok((lo, hi))
    }

    /// Category label of every query; queries outside all categories get an empty label.
    pub fn query_category(&self, query: &str) -> String {
        self.categories
            .iter()
            .find(|c| c.member_queries.iter().any(|q| q == query))
            .map(|c| c.name.clone())
            .unwrap_or_default()
    }
}

/// Writes several countries sharing one category file into `dir`.
pub fn write_datasets(dir: &Path, datasets: &[CountryDataset]) -> std::io::Result<Vec<(std::path::PathBuf, Vec<u8>)>> {
    let to_io = |e: Error| std::io::Error::other(e.to_string());
    let mut files = Vec::new();
    let mut buf = Vec::new();
    if let Some(first) = datasets.first() {
        write_categories(&mut buf, &first.categories).map_err(to_io)?;
        files.push((dir.join(CATEGORIES_FILE), std::mem::take(&mut buf)));
    }
    let clinical: Vec<Clinical> = datasets.iter().map(CountryDataset::clinical).collect();
    write_clinical(&mut buf, &clinical).map_err(to_io)?;
    files.push((dir.join(CLINICAL_FILE), std::mem::take(&mut buf)));
    for d in datasets {
        write_query_frequencies(&mut buf, &d.queries).map_err(to_io)?;
        files.push((dir.join(&d.country).join(QUERIES_FILE), std::mem::take(&mut buf)));
        write_news_counts(&mut buf, &d.news).map_err(to_io)?;
        files.push((dir.join(&d.country).join(NEWS_FILE), std::mem::take(&mut buf)));
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn queries(text: &str) -> Result<BTreeMap<String, TimeSeries>> {
        read_query_frequencies(text.as_bytes(), "q.csv")
    }

    fn line_of(e: Error) -> (usize, String) {
        match e {
            Error::Ingestion { line, message, .. } => (line, message),
            other => panic!("expected an ingestion error, got {other:?}"),
        }
    }

    #[test]
    fn two_rows_one_query() {
        let m = queries("date,query,frequency\n2020-03-01,cough,0.5\n2020-03-02,cough,0.25\n").unwrap();
        assert_eq!(m["cough"].values(), &[0.5, 0.25]);
    }

    #[test]
    fn unsorted_rows_are_accepted() {
        let m = queries("date,query,frequency\n2020-03-02,a,2\n2020-03-01,a,1\n").unwrap();
        assert_eq!(m["a"].values(), &[1.0, 2.0]);
    }

    #[test]
    fn gap_names_missing_date() {
        let e = queries("date,query,frequency\n2020-03-01,a,1\n2020-03-03,a,1\n").unwrap_err();
        let (line, msg) = line_of(e);
        assert_eq!(line, 3);
        assert!(msg.contains("2020-03-02"), "{msg}");
    }

    #[test]
    fn duplicate_and_negative_rejected() {
        let (line, msg) = line_of(queries("date,query,frequency\n2020-03-01,a,1\n2020-03-01,a,2\n").unwrap_err());
        assert_eq!(line, 3);
        assert!(msg.contains("duplicate"));
        let (line, _) = line_of(queries("date,query,frequency\n2020-03-01,a,-1\n").unwrap_err());
        assert_eq!(line, 2);
        assert!(queries("date,query,frequency\n03/01/2020,a,1\n").is_err());
        assert!(queries("date,query,freq\n").is_err());
    }

    #[test]
    fn clinical_filters_country() {
        let text = "date,country,cases,deaths\n2020-03-01,UK,1,0\n2020-03-01,US,5,1\n2020-03-02,UK,2,0\n2020-03-03,UK,4,1\n";
        let c = read_clinical(text.as_bytes(), "c.csv", "UK").unwrap();
        assert_eq!(c.cases.values(), &[1.0, 2.0, 4.0]);
        assert_eq!(c.deaths.values(), &[0.0, 0.0, 1.0]);
        let (line, _) = line_of(read_clinical("date,country,cases,deaths\n2020-03-01,UK,1.5,0\n".as_bytes(), "c", "UK").unwrap_err());
        assert_eq!(line, 2);
        assert!(read_clinical(text.as_bytes(), "c.csv", "FR").is_err());
    }

    #[test]
    fn news_ratio_bounds() {
        let r = |m: u64, t: u64| {
            let text = format!("date,matched,total\n2020-03-01,{m},{t}\n");
            read_news_counts(text.as_bytes(), "n").and_then(|c| c.ratio())
        };
        assert_eq!(r(7, 7).unwrap().series().values(), &[1.0]);
        assert_eq!(r(0, 7).unwrap().series().values(), &[0.0]);
        assert!(r(8, 7).is_err());
        assert!(r(0, 0).is_err());
        let v = r(2_535_735, 10_093_349).unwrap().series().values()[0];
        assert!((v - 0.2512).abs() < 5e-5);
    }

    #[test]
    fn round_trips() {
        let day = NaiveDate::from_ymd_opt(2020, 2, 28).unwrap();
        let mut q = BTreeMap::new();
        q.insert("a b".to_string(), TimeSeries::new(day, vec![0.1, 1.0 / 3.0, 2e-7]).unwrap());
        q.insert("c,d".to_string(), TimeSeries::new(day, vec![0.0]).unwrap());
        let mut buf = Vec::new();
        write_query_frequencies(&mut buf, &q).unwrap();
        assert_eq!(queries(std::str::from_utf8(&buf).unwrap()).unwrap(), q);

        let c = Clinical {
            country: "UK".into(),
            cases: TimeSeries::new(day, vec![1.0, 2.0, 3.0]).unwrap(),
            deaths: TimeSeries::new(day, vec![0.0, 0.0, 1.0]).unwrap(),
        };
        let mut buf = Vec::new();
        write_clinical(&mut buf, std::slice::from_ref(&c)).unwrap();
        assert_eq!(read_clinical(buf.as_slice(), "c", "UK").unwrap(), c);

        let n = NewsCounts { start: day, matched: vec![1, 0], total: vec![4, 9] };
        let mut buf = Vec::new();
        write_news_counts(&mut buf, &n).unwrap();
        assert_eq!(read_news_counts(buf.as_slice(), "n").unwrap(), n);

        let cats = vec![
            SymptomCategory::new("fever", 0.5, CategoryKind::Symptom, vec!["fever".into(), "high temperature".into()]).unwrap(),
            SymptomCategory::new("covid terms", 1.0, CategoryKind::CovidTerms, vec!["covid".into()]).unwrap(),
        ];
        let mut buf = Vec::new();
        write_categories(&mut buf, &cats).unwrap();
        assert_eq!(read_categories(buf.as_slice(), "k").unwrap(), cats);
    }

    #[test]
    fn category_conflicts() {
        let text = "category,kind,weight,query\nfever,symptom,0.5,a\nfever,symptom,0.4,b\n";
        let (line, _) = line_of(read_categories(text.as_bytes(), "k").unwrap_err());
        assert_eq!(line, 3);
        assert!(read_categories("category,kind,weight,query\nx,other,0.5,a\n".as_bytes(), "k").is_err());
    }
}
