use std::path::Path;

use querycast::ingest::{self, CountryDataset};
use querycast::news::{self, GammaOptions};
use querycast::synthetic::{self, SyntheticScenario, Wave};
use querycast::timeseries;

fn write_all(files: &[(std::path::PathBuf, Vec<u8>)]) {
    for (path, bytes) in files {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, bytes).unwrap();
    }
}

fn scenario(seed: u64, country: &str, peak: f64) -> SyntheticScenario {
    SyntheticScenario {
        seed,
        country: country.into(),
        days: 120,
        queries_per_category: 1,
        waves: vec![Wave { peak, rate: 0.08, amplitude: 1.0 }],
        beta: 0.4,
        ..Default::default()
    }
}

#[test]
fn synthetic_datasets_survive_the_csv_layout() {
    let dir = std::env::temp_dir().join(format!("querycast-roundtrip-{}", std::process::id()));
    let sets: Vec<CountryDataset> = [("AA", 60.0), ("BB", 75.0)]
        .iter()
        .enumerate()
        .map(|(k, (c, peak))| synthetic::generate_synthetic(&scenario(k as u64, c, *peak)).unwrap().to_dataset().unwrap())
        .collect();
    write_all(&ingest::write_datasets(&dir, &sets).unwrap());
    for d in &sets {
        for rel in ingest::dataset_files(&d.country) {
            assert!(dir.join(rel).is_file());
        }
        let back = CountryDataset::load(&dir, &d.country).unwrap();
        assert_eq!(&back, d);
        let (from, to) = back.common_span(None, None).unwrap();
        assert_eq!((from, to), (d.cases.start(), d.cases.end()));
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn a_gap_in_a_written_file_names_its_line() {
    let dir = std::env::temp_dir().join(format!("querycast-gap-{}", std::process::id()));
    let d = synthetic::generate_synthetic(&scenario(3, "CC", 60.0)).unwrap().to_dataset().unwrap();
    write_all(&ingest::write_datasets(&dir, &[d]).unwrap());
    let path = dir.join("CC").join(ingest::NEWS_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().enumerate().filter(|(i, _)| *i != 10).map(|(_, l)| l).collect();
    std::fs::write(&path, kept.join("\n") + "\n").unwrap();
    let err = CountryDataset::load(&dir, "CC").unwrap_err().to_string();
    assert!(err.contains("missing"), "{err}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn loaded_news_drives_the_adjustment() {
    let s = SyntheticScenario { days: 200, ..scenario(5, "DD", 150.0) };
    let data = synthetic::generate_synthetic(&s).unwrap();
    let dir = std::env::temp_dir().join(format!("querycast-news-{}", std::process::id()));
    write_all(&ingest::write_datasets(&dir, &[data.to_dataset().unwrap()]).unwrap());
    let ratio = ingest::load_news_ratio(&dir.join("DD").join(ingest::NEWS_FILE)).unwrap();
    std::fs::remove_dir_all(Path::new(&dir)).unwrap();

    let qs: Vec<_> = data.queries.iter().map(|q| q.series.clone()).collect();
    let (g, _) = timeseries::min_max_normalize(&querycast::forecast::search_signal(&qs).unwrap()).unwrap();
    let (m, _) = timeseries::min_max_normalize(ratio.series()).unwrap();
    let gamma = news::gamma_series(&g, &m, &GammaOptions::default()).unwrap();
    assert!(gamma.series.values().iter().all(|v| (0.0..=1.0).contains(v)));
    let mean = gamma.series.values().iter().sum::<f64>() / gamma.series.len() as f64;
    assert!(mean < 1.0, "news-driven searches should be discounted somewhere, mean gamma {mean}");
}
