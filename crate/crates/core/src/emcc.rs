//! Multi-study causal EM with random restarts and compatibility checking.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ccomponent::{empirical_network_bound, multinomial_bound};
use crate::compiled::{maximize, CompiledEvidence};
use crate::data::{total_records, Study};
use crate::error::{Error, Result};
use crate::model::{ExoParams, Pscm};

/// Default compatibility tolerance per record, in log-likelihood units.
pub const DEFAULT_COMPAT_RATE: f64 = 1e-4;
/// Initialization attempts per restart before giving up on it.
pub const MAX_INIT_ATTEMPTS: usize = 5;
/// Smallest initial probability; keeps sparse draws strictly interior.
pub const INIT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum InitScheme {
    /// Independent symmetric Dirichlet draws per exogenous variable.
    Dirichlet { concentration: f64 },
    /// Each restart first picks one of the concentrations uniformly at
    /// random, then draws as [`InitScheme::Dirichlet`]. Mixing flat and
    /// sparse draws covers both the simplex interior and its faces.
    DirichletMixture { concentrations: Vec<f64> },
    /// Uniform PMFs (deterministic; every restart starts at the same point).
    Uniform,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Dirichlet { concentration: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub restarts: usize,
    /// Relative log-likelihood change below which a run stops.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub init: InitScheme,
    /// Absolute compatibility tolerance; `None` means `1e-4` per record.
    pub compat_tol: Option<f64>,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            restarts: 30,
            tol: 1e-9,
            max_iter: 1000,
            seed: 0,
            init: InitScheme::default(),
            compat_tol: None,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        let concentrations = match &self.init {
            InitScheme::Dirichlet { concentration } => vec![*concentration],
            InitScheme::DirichletMixture { concentrations } if concentrations.is_empty() => {
                return Err(Error::InvalidConfig("empty Dirichlet mixture".into()))
            }
            InitScheme::DirichletMixture { concentrations } => concentrations.clone(),
            InitScheme::Uniform => vec![],
        };
        if concentrations.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidConfig("Dirichlet concentration must be positive".into()));
        }
        if let Some(t) = self.compat_tol {
            if !(t >= 0.0) {
                return Err(Error::InvalidConfig("compat_tol must be nonnegative".into()));
            }
        }
        Ok(())
    }

    /// Compatibility tolerance for a collection holding `records` records.
    pub fn compat_tolerance(&self, records: u64) -> f64 {
        self.compat_tol.unwrap_or(DEFAULT_COMPAT_RATE * records as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmRunResult {
    pub theta: ExoParams,
    /// Log-likelihood of the initial and of every updated parameter vector.
    pub ll_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl EmRunResult {
    pub fn final_ll(&self) -> f64 {
        *self.ll_trace.last().expect("trace holds the initial value")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub thetas: Vec<ExoParams>,
    pub ll_values: Vec<f64>,
}

impl ParamSet {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityVerdict {
    pub compatible: bool,
    pub achieved_ll: f64,
    pub per_study_max_ll: Vec<f64>,
    pub gap: f64,
    pub tolerance: f64,
}

pub fn check_compatibility(achieved_ll: f64, per_study_max: &[f64], tol: f64) -> CompatibilityVerdict {
    let total: f64 = per_study_max
        .iter()
        .copied()
        .collect::<crate::exact_sum::ExactSum>()
        .value();
    let gap = total - achieved_ll;
    CompatibilityVerdict {
        compatible: gap <= tol,
        achieved_ll,
        per_study_max_ll: per_study_max.to_vec(),
        gap,
        tolerance: tol,
    }
}

/// Draw a starting point according to `scheme`.
pub fn initial_params(base: &Pscm, scheme: &InitScheme, rng: &mut impl Rng) -> ExoParams {
    match scheme {
        InitScheme::Uniform => ExoParams::uniform(base),
        InitScheme::Dirichlet { concentration } => dirichlet_params(base, *concentration, rng),
        InitScheme::DirichletMixture { concentrations } => {
            let c = concentrations[rng.random_range(0..concentrations.len())];
            dirichlet_params(base, c, rng)
        }
    }
}

fn dirichlet_params(base: &Pscm, concentration: f64, rng: &mut impl Rng) -> ExoParams {
    let gamma = Gamma::new(concentration, 1.0).expect("validated concentration");
    let pmfs = base
        .exogenous()
        .into_iter()
        .map(|u| {
            let draws: Vec<f64> = (0..base.card(u)).map(|_| gamma.sample(rng)).collect();
            (u, floor_and_normalize(draws))
        })
        .collect();
    ExoParams::new(pmfs)
}

fn floor_and_normalize(mut p: Vec<f64>) -> Vec<f64> {
    let total: f64 = p.iter().sum();
    if total > 0.0 && total.is_finite() {
        p.iter_mut().for_each(|x| *x /= total);
    } else {
        let k = p.len() as f64;
        p.iter_mut().for_each(|x| *x = 1.0 / k);
    }
    p.iter_mut().for_each(|x| *x = x.max(INIT_FLOOR));
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

/// The random stream of restart `index` under `seed`.
pub fn restart_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One EM update over all studies: pooled posterior counts divided by the
/// total number of records.
pub fn em_step(base: &Pscm, studies: &[Study], theta: &ExoParams) -> Result<ExoParams> {
    if studies.is_empty() {
        return Err(Error::InvalidData("no studies".into()));
    }
    theta.validate(base)?;
    let evidence = CompiledEvidence::new(base, studies)?;
    let e = evidence.expectation(theta)?;
    Ok(maximize(&e.counts, theta))
}

pub fn em_run(base: &Pscm, studies: &[Study], theta0: &ExoParams, cfg: &EmConfig) -> Result<EmRunResult> {
    cfg.validate()?;
    if studies.is_empty() {
        return Err(Error::InvalidData("no studies".into()));
    }
    theta0.validate(base)?;
    em_run_compiled(&CompiledEvidence::new(base, studies)?, theta0, cfg)
}

pub fn em_run_compiled(evidence: &CompiledEvidence, theta0: &ExoParams, cfg: &EmConfig) -> Result<EmRunResult> {
    let mut theta = theta0.clone();
    let mut e = evidence.expectation(&theta)?;
    let mut ll_trace = vec![e.log_likelihood];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let next = maximize(&e.counts, &theta);
        iterations += 1;
        let next_e = evidence.expectation(&next)?;
        let (prev, ll) = (e.log_likelihood, next_e.log_likelihood);
        ll_trace.push(ll);
        theta = next;
        e = next_e;
        if (ll - prev).abs() <= cfg.tol * (1.0 + ll.abs()) {
            converged = true;
            break;
        }
    }
    Ok(EmRunResult {
        theta,
        ll_trace,
        iterations,
        converged,
    })
}

/// A restart: draw a start, run EM, redraw when a record has zero probability.
fn restart(base: &Pscm, evidence: &CompiledEvidence, cfg: &EmConfig, stream: u64) -> (usize, Result<EmRunResult>) {
    let mut rng = restart_rng(cfg.seed, stream);
    let mut last = Err(Error::InvalidConfig("no attempt".into()));
    for attempt in 1..=MAX_INIT_ATTEMPTS {
        let theta0 = initial_params(base, &cfg.init, &mut rng);
        last = em_run_compiled(evidence, &theta0, cfg);
        match &last {
            Err(Error::ZeroProbabilityRecord { .. }) => {
                log::debug!("restart {stream}: zero-probability record on attempt {attempt}");
            }
            _ => return (attempt, last),
        }
    }
    (MAX_INIT_ATTEMPTS, last)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxSource {
    MultinomialBound,
    EmpiricalNetworkBound,
    Em,
}

/// Maximum log-likelihood of one study on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMax {
    pub value: f64,
    pub source: MaxSource,
    pub multinomial_bound: f64,
    pub empirical_network_bound: f64,
    pub em_best: Option<f64>,
    pub em_runs: usize,
}

/// Streams of the per-study runs are disjoint from the joint restarts.
const STUDY_STREAM_BASE: u64 = 1 << 62;

pub fn study_max_loglik(base: &Pscm, study: &Study, cfg: &EmConfig) -> Result<StudyMax> {
    cfg.validate()?;
    let model = study.model(base)?;
    let multinomial = multinomial_bound(&study.data);
    let network = empirical_network_bound(&model, &study.data)?.min(multinomial);
    let tol = cfg.compat_tolerance(study.data.total());
    let evidence = CompiledEvidence::new(base, std::slice::from_ref(study))?;

    let mut best: Option<f64> = None;
    let mut runs = 0;
    for i in 0..cfg.restarts as u64 {
        runs += 1;
        let (_, run) = restart(base, &evidence, cfg, STUDY_STREAM_BASE + i);
        match run {
            Ok(run) => best = Some(best.map_or(run.final_ll(), |b: f64| b.max(run.final_ll()))),
            Err(e) => log::warn!("per-study restart {i} failed: {e}"),
        }
        if best.is_some_and(|b| b >= network - tol) {
            break;
        }
    }
    let (value, source) = match best {
        Some(b) if b >= multinomial - tol => (multinomial, MaxSource::MultinomialBound),
        Some(b) if b >= network - tol => (network, MaxSource::EmpiricalNetworkBound),
        Some(b) => (b, MaxSource::Em),
        None => {
            return Err(Error::EmptyParamSet(
                "every per-study EM run failed; the model cannot explain the study".into(),
            ))
        }
    };
    Ok(StudyMax {
        value,
        source,
        multinomial_bound: multinomial,
        empirical_network_bound: network,
        em_best: best,
        em_runs: runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub restart: usize,
    pub attempts: usize,
    pub iterations: usize,
    pub converged: bool,
    pub initial_ll: Option<f64>,
    pub final_ll: Option<f64>,
    pub gap: Option<f64>,
    pub retained: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmccResult {
    pub params: ParamSet,
    pub verdict: CompatibilityVerdict,
    pub study_max: Vec<StudyMax>,
    pub runs: Vec<RunSummary>,
}

/// Run `cfg.restarts` EM restarts over all studies and keep the parameter
/// vectors whose log-likelihood reaches the sum of per-study maxima.
pub fn emcc(base: &Pscm, studies: &[Study], cfg: &EmConfig) -> Result<EmccResult> {
    cfg.validate()?;
    if studies.is_empty() {
        return Err(Error::InvalidData("no studies".into()));
    }
    let evidence = CompiledEvidence::new(base, studies)?;
    let study_max: Vec<StudyMax> = studies
        .iter()
        .map(|s| study_max_loglik(base, s, cfg))
        .collect::<Result<_>>()?;
    let maxima: Vec<f64> = study_max.iter().map(|m| m.value).collect();
    let tol = cfg.compat_tolerance(total_records(studies));

    let results: Vec<(usize, Result<EmRunResult>)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|i| restart(base, &evidence, cfg, i as u64))
        .collect();

    let mut params = ParamSet::default();
    let mut runs = Vec::with_capacity(results.len());
    let mut best_ll = f64::NEG_INFINITY;
    for (i, (attempts, result)) in results.into_iter().enumerate() {
        match result {
            Ok(run) => {
                let ll = run.final_ll();
                best_ll = best_ll.max(ll);
                let verdict = check_compatibility(ll, &maxima, tol);
                if verdict.compatible {
                    params.thetas.push(run.theta.clone());
                    params.ll_values.push(ll);
                } else {
                    log::info!("restart {i} excluded: gap {:.6} exceeds {:.6}", verdict.gap, tol);
                }
                runs.push(RunSummary {
                    restart: i,
                    attempts,
                    iterations: run.iterations,
                    converged: run.converged,
                    initial_ll: run.ll_trace.first().copied(),
                    final_ll: Some(ll),
                    gap: Some(verdict.gap),
                    retained: verdict.compatible,
                    error: None,
                });
            }
            Err(e) => {
                log::warn!("restart {i} failed: {e}");
                runs.push(RunSummary {
                    restart: i,
                    attempts,
                    iterations: 0,
                    converged: false,
                    initial_ll: None,
                    final_ll: None,
                    gap: None,
                    retained: false,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let verdict = check_compatibility(best_ll, &maxima, tol);
    Ok(EmccResult {
        params,
        verdict,
        study_max,
        runs,
    })
}

/// Per-study log-likelihoods of `theta`, each under its study's model.
pub fn per_study_log_likelihood(base: &Pscm, studies: &[Study], theta: &ExoParams) -> Result<Vec<f64>> {
    studies
        .iter()
        .map(|s| CompiledEvidence::new(base, std::slice::from_ref(s))?.log_likelihood(theta))
        .collect()
}

/// Echo of resolved tolerances, useful in reports.
pub fn resolved_tolerances(cfg: &EmConfig, studies: &[Study]) -> BTreeMap<String, f64> {
    BTreeMap::from([
        ("compat_tol".to_string(), cfg.compat_tolerance(total_records(studies))),
        ("tol".to_string(), cfg.tol),
    ])
}
