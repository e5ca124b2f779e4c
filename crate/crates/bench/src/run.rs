//! The benchmark loop: sample a model, sample data, fit O / I / O+I, bound
//! PNS(cause -> effect) under each and compare the interval lengths.

use emcc_core::data::total_records;
use emcc_core::emcc::{emcc, restart_rng, EmccResult};
use emcc_core::queries::{bounds, pns, PnsSpec, Query, QueryResult};
use emcc_core::{Pscm, Result, Study};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::BenchConfig;
use crate::sample::{sample_model, sample_studies, SampledModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub n_nodes: usize,
    pub edge_probability: f64,
    pub n_endogenous: usize,
    pub n_exogenous: usize,
    pub endogenous_arcs: usize,
    pub exogenous_cardinalities: Vec<usize>,
}

impl ModelDescriptor {
    fn of(s: &SampledModel) -> Self {
        let m = &s.model;
        let endo = m.endogenous();
        ModelDescriptor {
            n_nodes: s.n_nodes,
            edge_probability: s.edge_probability,
            n_endogenous: endo.len(),
            n_exogenous: m.exogenous().len(),
            endogenous_arcs: endo.iter().map(|&v| m.endogenous_parents(v).len()).sum(),
            exogenous_cardinalities: m.exogenous().iter().map(|&u| m.card(u)).collect(),
        }
    }
}

/// One fit of the benchmark (O, I or O+I).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub compatible: bool,
    pub gap: f64,
    pub tolerance: f64,
    pub retained: usize,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl FitSummary {
    fn width(&self) -> Option<f64> {
        Some(self.upper? - self.lower?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub model_index: usize,
    pub model_seed: u64,
    pub model: ModelDescriptor,
    pub query: String,
    /// Query value under the ground-truth parameters.
    pub true_value: f64,
    pub observational: FitSummary,
    pub interventional: FitSummary,
    pub joint: FitSummary,
    /// `1 - L(O+I) / L(O)`; `None` when `L(O)` is zero.
    pub shrink_vs_o: Option<f64>,
    /// `1 - L(O+I) / L(I)`; `None` when `L(I)` is zero.
    pub shrink_vs_i: Option<f64>,
    /// O+I interval inside both single-source intervals, up to the slack.
    pub included: bool,
    pub n1: u64,
    pub n2: u64,
    pub data_attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub model_index: usize,
    pub model_seed: Option<u64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOutput {
    pub config: BenchConfig,
    pub records: Vec<BenchRecord>,
    pub skipped: Vec<SkipRecord>,
}

enum Cell {
    Record(Box<BenchRecord>),
    Skipped(SkipRecord),
}

/// Run every benchmark cell (in parallel) and collect results by model index.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchOutput> {
    cfg.validate()?;
    let cells: Vec<Cell> = (0..cfg.n_models).into_par_iter().map(|i| run_cell(cfg, i)).collect();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for c in cells {
        match c {
            Cell::Record(r) => records.push(*r),
            Cell::Skipped(s) => {
                log::info!("model {} skipped: {}", s.model_index, s.reason);
                skipped.push(s)
            }
        }
    }
    Ok(BenchOutput {
        config: cfg.clone(),
        records,
        skipped,
    })
}

/// Starting sizes, then sizes grown by `growth_factor` with a final step
/// clamped to the record ceiling.
pub fn n1_schedule(cfg: &BenchConfig) -> Vec<u64> {
    let ceiling = cfg.max_total_records / (1 + cfg.n2_factor);
    let mut out = vec![cfg.n1];
    loop {
        let last = *out.last().expect("nonempty");
        let next = ((last as f64 * cfg.growth_factor).floor() as u64).min(ceiling);
        if next <= last {
            return out;
        }
        out.push(next);
    }
}

fn run_cell(cfg: &BenchConfig, index: usize) -> Cell {
    let mut rng = restart_rng(cfg.seed, index as u64);
    let model_seed: u64 = rng.random();
    let data_seed: u64 = rng.random();
    let skip = |seed: Option<u64>, reason: String| {
        Cell::Skipped(SkipRecord {
            model_index: index,
            model_seed: seed,
            reason,
        })
    };
    let sampled = match sample_model(cfg, model_seed) {
        Ok(s) => s,
        Err(e) => return skip(None, format!("model sampling failed: {e}")),
    };
    let spec = PnsSpec::new(sampled.cause, sampled.effect);
    let query = Query::Pns(spec.clone());
    let query_name = format!(
        "PNS({} -> {})",
        sampled.model.name(sampled.cause),
        sampled.model.name(sampled.effect)
    );
    let true_value = match pns(&sampled.model, &sampled.theta, &spec) {
        Ok(v) => v,
        Err(e) => return skip(Some(model_seed), format!("query failed: {e}")),
    };

    let mut last_reason = String::new();
    for (attempt, n1) in n1_schedule(cfg).into_iter().enumerate() {
        let n2 = cfg.n2(n1);
        let seed = restart_rng(data_seed, attempt as u64).random::<u64>();
        let fitted = sample_studies(&sampled.model, &sampled.theta, sampled.cause, n1, n2, seed).and_then(|s| {
            let fits = [vec![s.observational.clone()], s.interventional(), s.all()];
            fits.iter()
                .map(|studies| fit(cfg, &sampled.model, studies, seed, &query, &query_name))
                .collect::<Result<Vec<_>>>()
        });
        let fits = match fitted {
            Ok(f) => f,
            Err(e) => {
                last_reason = format!("fit failed at n1={n1}: {e}");
                log::info!("model {index}: {last_reason}");
                continue;
            }
        };
        if let Some(k) = fits.iter().position(|f| !f.compatible) {
            last_reason = format!(
                "{} fit incompatible at n1={n1} (gap {:.4}, tolerance {:.4})",
                ["O", "I", "O+I"][k],
                fits[k].gap,
                fits[k].tolerance
            );
            log::info!("model {index}: {last_reason}");
            continue;
        }
        let [o, i, j]: [FitSummary; 3] = fits.try_into().expect("three fits");
        let joint_width = j.width().expect("compatible fit has an interval");
        if !(joint_width > cfg.min_width) {
            return skip(
                Some(model_seed),
                format!("query identified by O+I (width {joint_width:.2e})"),
            );
        }
        let ratio = |single: &FitSummary| {
            let w = single.width().expect("compatible fit has an interval");
            (w > 0.0).then(|| 1.0 - joint_width / w)
        };
        let inside = |single: &FitSummary| {
            j.lower.unwrap() >= single.lower.unwrap() - cfg.inclusion_slack
                && j.upper.unwrap() <= single.upper.unwrap() + cfg.inclusion_slack
        };
        return Cell::Record(Box::new(BenchRecord {
            model_index: index,
            model_seed,
            model: ModelDescriptor::of(&sampled),
            query: query_name,
            true_value,
            shrink_vs_o: ratio(&o),
            shrink_vs_i: ratio(&i),
            included: inside(&o) && inside(&i),
            observational: o,
            interventional: i,
            joint: j,
            n1,
            n2,
            data_attempts: attempt + 1,
        }));
    }
    skip(
        Some(model_seed),
        format!("gave up at the record ceiling; last: {last_reason}"),
    )
}

fn fit(cfg: &BenchConfig, model: &Pscm, studies: &[Study], seed: u64, query: &Query, name: &str) -> Result<FitSummary> {
    let em = cfg.em_for(studies, seed);
    let EmccResult {
        mut params, verdict, ..
    } = emcc(model, studies, &em)?;
    // The noise tolerance only decides compatibility; the bounds come from
    // the runs that reach the best likelihood found.
    let floor = verdict.achieved_ll - cfg.retain_rate * total_records(studies) as f64;
    let keep: Vec<bool> = params.ll_values.iter().map(|&ll| ll >= floor).collect();
    let mut k = keep.iter();
    params.thetas.retain(|_| *k.next().unwrap());
    params.ll_values.retain(|&ll| ll >= floor);
    let interval: Option<QueryResult> = if params.is_empty() {
        None
    } else {
        Some(bounds(model, &params, query, name)?)
    };
    Ok(FitSummary {
        compatible: verdict.compatible && interval.is_some(),
        gap: verdict.gap,
        tolerance: verdict.tolerance,
        retained: params.len(),
        lower: interval.as_ref().map(|q| q.lower),
        upper: interval.as_ref().map(|q| q.upper),
    })
}
