//! Aggregate statistics of a benchmark run, in box-plot form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::BenchConfig;
use crate::run::BenchOutput;

/// Reference mean shrink when observational data is added to trial data.
pub const REFERENCE_SHRINK_VS_I: f64 = 0.13;
/// Reference mean shrink when trial data is added to observational data.
pub const REFERENCE_SHRINK_VS_O: f64 = 0.18;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    /// Quartiles by linear interpolation between order statistics; `None` for
    /// an empty sample.
    pub fn of(values: &[f64]) -> Option<Quartiles> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let h = q * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Quartiles {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v[0],
            q1: at(0.25),
            median: at(0.5),
            q3: at(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMeans {
    pub shrink_vs_o: f64,
    pub shrink_vs_i: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub config: BenchConfig,
    pub n_models: usize,
    pub n_records: usize,
    pub n_skipped: usize,
    pub skip_reasons: BTreeMap<String, usize>,
    pub shrink_vs_o: Option<Quartiles>,
    pub shrink_vs_i: Option<Quartiles>,
    /// Published reference means, for qualitative comparison only.
    pub reference: ReferenceMeans,
    /// Fraction of records whose O+I interval lies inside both others.
    pub inclusion_rate: Option<f64>,
    /// Records with each number of data draws.
    pub data_attempts: BTreeMap<usize, usize>,
    /// Place for further per-run statistics (for instance credibility
    /// measures); empty by default.
    pub extensions: BTreeMap<String, serde_json::Value>,
}

pub fn summarize(out: &BenchOutput) -> BenchSummary {
    let collect =
        |f: fn(&crate::run::BenchRecord) -> Option<f64>| -> Vec<f64> { out.records.iter().filter_map(f).collect() };
    let mut skip_reasons = BTreeMap::new();
    for s in &out.skipped {
        *skip_reasons.entry(skip_category(&s.reason)).or_insert(0) += 1;
    }
    let mut data_attempts = BTreeMap::new();
    for r in &out.records {
        *data_attempts.entry(r.data_attempts).or_insert(0) += 1;
    }
    let n = out.records.len();
    BenchSummary {
        config: out.config.clone(),
        n_models: out.config.n_models,
        n_records: n,
        n_skipped: out.skipped.len(),
        skip_reasons,
        shrink_vs_o: Quartiles::of(&collect(|r| r.shrink_vs_o)),
        shrink_vs_i: Quartiles::of(&collect(|r| r.shrink_vs_i)),
        reference: ReferenceMeans {
            shrink_vs_o: REFERENCE_SHRINK_VS_O,
            shrink_vs_i: REFERENCE_SHRINK_VS_I,
        },
        inclusion_rate: (n > 0).then(|| out.records.iter().filter(|r| r.included).count() as f64 / n as f64),
        data_attempts,
        extensions: BTreeMap::new(),
    }
}

fn skip_category(reason: &str) -> String {
    if reason.starts_with("query identified") {
        "identified".into()
    } else if reason.starts_with("gave up") {
        "record ceiling".into()
    } else {
        reason.split(':').next().unwrap_or(reason).to_string()
    }
}

/// Box-plot statistics of both shrink distributions as CSV.
pub fn boxplot_csv(summary: &BenchSummary) -> String {
    let mut out = String::from("series,count,mean,min,q1,median,q3,max\n");
    for (name, q) in [
        ("shrink_vs_o", &summary.shrink_vs_o),
        ("shrink_vs_i", &summary.shrink_vs_i),
    ] {
        match q {
            Some(q) => out.push_str(&format!(
                "{name},{},{},{},{},{},{},{}\n",
                q.count, q.mean, q.min, q.q1, q.median, q.q3, q.max
            )),
            None => out.push_str(&format!("{name},0,,,,,,\n")),
        }
    }
    out
}
