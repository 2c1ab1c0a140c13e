//! Stratified line plots and the data behind them.

use std::path::Path;

use earsep_core::metrics::{Aggregates, Bin, MetricReport};
use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Category, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub system: String,
    pub si_sdr: Vec<f64>,
    pub stoi: Vec<f64>,
}

/// One stratification axis: shared x values and one series per system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub axis: String,
    pub x: Vec<f64>,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub snr: Panel,
    pub t60: Panel,
}

fn systems(report: &MetricReport) -> Vec<(String, &Aggregates)> {
    let mut v = vec![("Unprocessed".to_string(), &report.unprocessed)];
    if let Some(m) = &report.model {
        v.push((report.system.clone().unwrap_or_else(|| "Model".into()), m));
    }
    v
}

fn panel(report: &MetricReport, axis: &str, bins: fn(&Aggregates) -> &[Bin]) -> Panel {
    let systems = systems(report);
    Panel {
        axis: axis.into(),
        x: bins(systems[0].1).iter().map(|b| b.value).collect(),
        series: systems
            .into_iter()
            .map(|(system, agg)| Series {
                system,
                si_sdr: bins(agg).iter().map(|b| b.mean.si_sdr).collect(),
                stoi: bins(agg).iter().map(|b| b.mean.stoi).collect(),
            })
            .collect(),
    }
}

impl PlotData {
    pub fn from_report(report: &MetricReport) -> Self {
        Self {
            snr: panel(report, "SNR (dB)", |a| &a.by_snr),
            t60: panel(report, "T60 (s)", |a| &a.by_t60),
        }
    }
}

/// Padded range; a single value still gets a non-empty span.
fn range(values: impl Iterator<Item = f64>) -> std::ops::Range<f64> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let pad = if hi > lo { 0.08 * (hi - lo) } else { lo.abs().max(1.0) * 0.1 };
    (lo - pad)..(hi + pad)
}

fn plot_err(e: impl std::fmt::Display) -> CliError {
    CliError::new(Category::Io, format!("plot: {e}"))
}

const COLORS: [RGBColor; 4] = [RGBColor(90, 90, 90), RGBColor(31, 119, 180), RGBColor(214, 39, 40), RGBColor(44, 160, 44)];

/// Two side-by-side charts (SI-SDR and STOI) against the panel's axis.
pub fn render(panel: &Panel, title: &str, path: &Path) -> CliResult<()> {
    let root = SVGBackend::new(path, (1000, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let (left, right) = root.split_horizontally(500);
    let metrics: [(&str, fn(&Series) -> &[f64], &DrawingArea<_, _>); 2] =
        [("SI-SDR (dB)", |s| &s.si_sdr, &left), ("STOI", |s| &s.stoi, &right)];
    for (label, pick, area) in metrics {
        let xr = range(panel.x.iter().copied());
        let yr = range(panel.series.iter().flat_map(|s| pick(s).iter().copied()));
        let mut chart = ChartBuilder::on(area)
            .caption(format!("{title}: {label}"), ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(52)
            .build_cartesian_2d(xr, yr)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc(panel.axis.as_str())
            .y_desc(label)
            .draw()
            .map_err(plot_err)?;
        for (i, s) in panel.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<(f64, f64)> = panel.x.iter().copied().zip(pick(s).iter().copied()).collect();
            chart
                .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
                .map_err(plot_err)?
                .label(s.system.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
            chart
                .draw_series(pts.into_iter().map(|p| Circle::new(p, 4, color.filled())))
                .map_err(plot_err)?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_ranges_are_not_empty() {
        let r = range([0.0].into_iter());
        assert!(r.start < 0.0 && r.end > 0.0);
        let r = range([5.0, 5.0].into_iter());
        assert!(r.start < 5.0 && r.end > 5.0);
    }
}
