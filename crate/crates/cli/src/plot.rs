//! SVG line plots of emitted tables.

use anyhow::{anyhow, Result};
use chrono::{Duration, NaiveDate};
use plotters::prelude::*;

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(127, 127, 127),
];

pub fn line_plot(title: &str, dates: &[NaiveDate], columns: &[(String, Vec<f64>)]) -> Result<String> {
    let start = *dates.first().ok_or_else(|| anyhow!("nothing to plot"))?;
    let finite = columns.iter().flat_map(|c| c.1.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0) };
    let pad = 0.05 * (hi - lo);
    let x_max = dates.len().max(2) as f64 - 1.0;

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 400)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(30)
            .y_label_area_size(60)
            .build_cartesian_2d(0f64..x_max, (lo - pad)..(hi + pad))
            .map_err(|e| anyhow!("{e}"))?;
        chart
            .configure_mesh()
            .x_labels(6)
            .x_label_formatter(&|x| (start + Duration::days(x.round() as i64)).to_string())
            .draw()
            .map_err(|e| anyhow!("{e}"))?;
        for (k, (name, values)) in columns.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let points = values.iter().enumerate().filter(|(_, v)| v.is_finite()).map(|(i, v)| (i as f64, *v));
            chart
                .draw_series(LineSeries::new(points, color.stroke_width(2)))
                .map_err(|e| anyhow!("{e}"))?
                .label(name.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| anyhow!("{e}"))?;
        root.present().map_err(|e| anyhow!("{e}"))?;
    }
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_deterministic_svg() {
        let d = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let dates: Vec<_> = (0..10).map(|i| d + Duration::days(i)).collect();
        let cols = vec![("a".to_string(), (0..10).map(|i| i as f64).collect()), ("flat".to_string(), vec![1.0; 10])];
        let a = line_plot("t", &dates, &cols).unwrap();
        assert!(a.starts_with("<svg"));
        assert_eq!(a, line_plot("t", &dates, &cols).unwrap());
        assert!(line_plot("t", &[], &[]).is_err());
    }
}
