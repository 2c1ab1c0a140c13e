use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::SceneMetadata;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceScore {
    pub si_sdr: f64,
    pub si_sdr_clipped: bool,
    pub stoi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub left: SourceScore,
    pub right: SourceScore,
}

impl PairScore {
    pub fn si_sdr(&self) -> f64 {
        0.5 * (self.left.si_sdr + self.right.si_sdr)
    }

    pub fn stoi(&self) -> f64 {
        0.5 * (self.left.stoi + self.right.stoi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub metadata: SceneMetadata,
    /// In-ear mixture channel of each side scored against that side's target.
    pub unprocessed: PairScore,
    pub model: Option<PairScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedExample {
    pub id: String,
    pub error: String,
}

/// Mean over examples (each example already averages its two sources).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub si_sdr: f64,
    pub stoi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub value: f64,
    #[serde(flatten)]
    pub mean: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub overall: Aggregate,
    pub by_snr: Vec<Bin>,
    pub by_t60: Vec<Bin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Label of the evaluated system; `None` for a passthrough run.
    pub system: Option<String>,
    pub records: Vec<ExampleRecord>,
    pub failures: Vec<FailedExample>,
    pub unprocessed: Aggregates,
    pub model: Option<Aggregates>,
}

fn mean_of<'a>(scores: impl Iterator<Item = &'a PairScore>) -> Aggregate {
    let (mut n, mut s, mut q) = (0usize, 0.0, 0.0);
    for p in scores {
        n += 1;
        s += p.si_sdr();
        q += p.stoi();
    }
    let d = n.max(1) as f64;
    Aggregate {
        count: n,
        si_sdr: s / d,
        stoi: q / d,
    }
}

fn distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Aggregates of one system's scores; `pick` returns `None` to skip a record.
pub fn aggregate(records: &[ExampleRecord], pick: impl Fn(&ExampleRecord) -> Option<&PairScore>) -> Aggregates {
    let bins = |key: fn(&SceneMetadata) -> f64| -> Vec<Bin> {
        distinct(records.iter().map(|r| key(&r.metadata)).collect())
            .into_iter()
            .map(|value| Bin {
                value,
                mean: mean_of(records.iter().filter(|r| key(&r.metadata) == value).filter_map(&pick)),
            })
            .collect()
    };
    Aggregates {
        overall: mean_of(records.iter().filter_map(&pick)),
        by_snr: bins(|m| m.snr_db),
        by_t60: bins(|m| m.t60),
    }
}

impl MetricReport {
    pub fn new(system: Option<String>, records: Vec<ExampleRecord>, failures: Vec<FailedExample>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no example could be evaluated ({} failures)",
                failures.len()
            )));
        }
        let unprocessed = aggregate(&records, |r| Some(&r.unprocessed));
        let model = records
            .iter()
            .all(|r| r.model.is_some())
            .then(|| aggregate(&records, |r| r.model.as_ref()));
        Ok(Self {
            system,
            records,
            failures,
            unprocessed,
            model,
        })
    }

    /// Recomputes the aggregates from the records.
    pub fn recomputed(&self) -> Result<Self> {
        Self::new(self.system.clone(), self.records.clone(), self.failures.clone())
    }

    /// Text table with anechoic and reverberant column groups and one row per system.
    pub fn table(&self) -> String {
        let groups: [(&str, fn(f64) -> bool); 2] = [("Anechoic", |t| t == 0.0), ("Reverberant", |t| t > 0.0)];
        let t60s: Vec<String> = self
            .unprocessed
            .by_t60
            .iter()
            .filter(|b| b.value > 0.0)
            .map(|b| format!("{}", b.value))
            .collect();
        let mut rows: Vec<(String, Box<dyn Fn(&ExampleRecord) -> Option<&PairScore>>)> =
            vec![("Unprocessed".into(), Box::new(|r| Some(&r.unprocessed)))];
        if self.model.is_some() {
            let name = self.system.clone().unwrap_or_else(|| "Model".into());
            rows.push((name, Box::new(|r| r.model.as_ref())));
        }
        let name_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(12);
        let mut out = String::new();
        let reverb_title = if t60s.is_empty() {
            "Reverberant".to_string()
        } else {
            format!("Reverberant (T60 = {} s)", t60s.join(", "))
        };
        let _ = writeln!(out, "{:name_w$} | {:^20} | {:^20}", "", "Anechoic", reverb_title);
        let _ = writeln!(out, "{:name_w$} | {:>9} {:>10} | {:>9} {:>10}", "System", "SI-SDR", "STOI", "SI-SDR", "STOI");
        let _ = writeln!(out, "{}", "-".repeat(name_w + 47));
        for (name, pick) in &rows {
            let _ = write!(out, "{:name_w$}", name);
            for (_, in_group) in &groups {
                let agg = mean_of(self.records.iter().filter(|r| in_group(r.metadata.t60)).filter_map(pick));
                if agg.count == 0 {
                    let _ = write!(out, " | {:>9} {:>10}", "-", "-");
                } else {
                    let _ = write!(out, " | {:>9.2} {:>10.3}", agg.si_sdr, agg.stoi);
                }
            }
            out.push('\n');
        }
        if !self.failures.is_empty() {
            let _ = writeln!(out, "\n{} example(s) failed to evaluate", self.failures.len());
        }
        out
    }
}
