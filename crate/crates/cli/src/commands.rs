use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use emcc_bench::{boxplot_csv, grid_oracle, run_benchmark, summarize, BenchConfig, BenchSummary, OracleResult};
use emcc_core::emcc::{emcc, resolved_tolerances, CompatibilityVerdict, EmConfig, StudyMax};
use emcc_core::io::{load_queries, model_to_json, read, to_json, FitResult, LoadedRun, QueryFile, RunManifest};
use emcc_core::queries::{bounds, QueryResult};
use emcc_core::Error;

use crate::error::{CliError, CliResult, ExitCode};
use crate::output::{config_hash, Outputs};

pub const FIT_FILE: &str = "fit.json";
pub const VERDICT_FILE: &str = "verdict.json";
pub const QUERIES_FILE: &str = "queries.json";
pub const ORACLE_FILE: &str = "oracle.json";
pub const BENCH_RECORDS_FILE: &str = "bench_records.jsonl";
pub const BENCH_SKIPPED_FILE: &str = "bench_skipped.jsonl";
pub const BENCH_SUMMARY_FILE: &str = "bench_summary.json";
pub const BENCH_BOXPLOT_FILE: &str = "bench_boxplot.csv";

/// Command-line replacements for manifest EM settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmOverrides {
    pub seed: Option<u64>,
    pub restarts: Option<usize>,
    pub tol: Option<f64>,
    pub compat_tol: Option<f64>,
}

impl EmOverrides {
    pub fn apply(&self, em: &mut EmConfig) {
        if let Some(s) = self.seed {
            em.seed = s;
        }
        if let Some(r) = self.restarts {
            em.restarts = r;
        }
        if let Some(t) = self.tol {
            em.tol = t;
        }
        if let Some(c) = self.compat_tol {
            em.compat_tol = Some(c);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Fit {
        manifest: PathBuf,
        em: EmOverrides,
        out: Option<PathBuf>,
    },
    Check {
        manifest: PathBuf,
        em: EmOverrides,
        out: Option<PathBuf>,
    },
    Query {
        manifest: PathBuf,
        /// Previously written fit result; fit afresh when absent.
        fit: Option<PathBuf>,
        em: EmOverrides,
        paper_rounding: bool,
        out: Option<PathBuf>,
    },
    Bench {
        config: Option<PathBuf>,
        seed: Option<u64>,
        restarts: Option<usize>,
        models: Option<usize>,
        out: Option<PathBuf>,
    },
    Oracle {
        manifest: PathBuf,
        grid_step: f64,
        out: Option<PathBuf>,
    },
}

/// Outcome of a command before anything is written.
#[derive(Debug)]
pub struct Report {
    pub exit: ExitCode,
    pub out_dir: PathBuf,
    pub outputs: Outputs,
    /// One-line human summary for stdout.
    pub message: String,
}

impl Report {
    pub fn commit(self) -> CliResult<(ExitCode, String, Vec<PathBuf>)> {
        let written = self.outputs.commit(&self.out_dir)?;
        Ok((self.exit, self.message, written))
    }
}

pub fn execute(cmd: &Command) -> CliResult<Report> {
    match cmd {
        Command::Fit { manifest, em, out } => fit(manifest, em, out.as_deref()),
        Command::Check { manifest, em, out } => check(manifest, em, out.as_deref()),
        Command::Query {
            manifest,
            fit,
            em,
            paper_rounding,
            out,
        } => query(manifest, fit.as_deref(), em, *paper_rounding, out.as_deref()),
        Command::Bench {
            config,
            seed,
            restarts,
            models,
            out,
        } => bench(config.as_deref(), *seed, *restarts, *models, out.as_deref()),
        Command::Oracle {
            manifest,
            grid_step,
            out,
        } => oracle(manifest, *grid_step, out.as_deref()),
    }
}

/// Run a command and write its outputs.
pub fn run(cmd: &Command) -> CliResult<(ExitCode, String, Vec<PathBuf>)> {
    execute(cmd)?.commit()
}

struct Prepared {
    run: LoadedRun,
    hash: String,
    out_dir: PathBuf,
}

fn prepare(manifest: &Path, em: &EmOverrides, out: Option<&Path>) -> CliResult<Prepared> {
    let (mut m, dir) = RunManifest::load(manifest)?;
    em.apply(&mut m.em);
    let run = m.resolve(&dir)?;
    let mut parts: Vec<Vec<u8>> = vec![
        to_json(&run.manifest.em).into_bytes(),
        model_to_json(&run.model).into_bytes(),
    ];
    for (s, name) in run.studies.iter().zip(&run.study_names) {
        parts.push(name.clone().into_bytes());
        parts.push(format!("{:?}", s.intervention).into_bytes());
        parts.push(s.data.to_csv(&run.model).into_bytes());
    }
    let hash = config_hash(parts.iter().map(Vec::as_slice));
    let out_dir = match (out, &run.manifest.output) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => dir.join(o),
        (None, None) => PathBuf::from("out"),
    };
    Ok(Prepared { run, hash, out_dir })
}

fn verdict_line(v: &CompatibilityVerdict, retained: usize) -> String {
    format!(
        "{}: gap {:.6} (tolerance {:.6}), {retained} parameter vector(s) retained",
        if v.compatible { "compatible" } else { "incompatible" },
        v.gap,
        v.tolerance
    )
}

fn fit(manifest: &Path, em: &EmOverrides, out: Option<&Path>) -> CliResult<Report> {
    let p = prepare(manifest, em, out)?;
    let result = emcc(&p.run.model, &p.run.studies, &p.run.manifest.em)?;
    let file = FitResult::new(&p.run, p.hash, &result);
    let mut outputs = Outputs::default();
    outputs.add(FIT_FILE, to_json(&file));
    Ok(Report {
        exit: exit_for(&result.verdict),
        out_dir: p.out_dir,
        outputs,
        message: verdict_line(&result.verdict, result.params.len()),
    })
}

fn exit_for(v: &CompatibilityVerdict) -> ExitCode {
    if v.compatible {
        ExitCode::Ok
    } else {
        ExitCode::Incompatible
    }
}

#[derive(Debug, Serialize)]
struct VerdictFile {
    seed: u64,
    config_hash: String,
    verdict: CompatibilityVerdict,
    study_max: Vec<StudyMax>,
    tolerances: BTreeMap<String, f64>,
}

fn check(manifest: &Path, em: &EmOverrides, out: Option<&Path>) -> CliResult<Report> {
    let p = prepare(manifest, em, out)?;
    let cfg = &p.run.manifest.em;
    let result = emcc(&p.run.model, &p.run.studies, cfg)?;
    let file = VerdictFile {
        seed: cfg.seed,
        config_hash: p.hash,
        verdict: result.verdict.clone(),
        study_max: result.study_max.clone(),
        tolerances: resolved_tolerances(cfg, &p.run.studies),
    };
    let mut outputs = Outputs::default();
    outputs.add(VERDICT_FILE, to_json(&file));
    Ok(Report {
        exit: exit_for(&result.verdict),
        out_dir: p.out_dir,
        outputs,
        message: verdict_line(&result.verdict, result.params.len()),
    })
}

fn manifest_queries(run: &LoadedRun) -> CliResult<Vec<QueryFile>> {
    if run.manifest.queries.is_empty() {
        return Err(Error::InvalidQuery("the manifest lists no query files".into()).into());
    }
    let mut all = Vec::new();
    for q in &run.manifest.queries {
        all.extend(load_queries(&run.dir.join(q))?.queries);
    }
    Ok(all)
}

#[derive(Debug, Serialize)]
struct QueriesFile {
    seed: u64,
    config_hash: String,
    paper_rounding: bool,
    results: Vec<QueryResult>,
}

fn query(
    manifest: &Path,
    fit_path: Option<&Path>,
    em: &EmOverrides,
    paper_rounding: bool,
    out: Option<&Path>,
) -> CliResult<Report> {
    let p = prepare(manifest, em, out)?;
    let queries = manifest_queries(&p.run)?;
    let m = &p.run.model;
    let fit = match fit_path {
        Some(path) => {
            let f = FitResult::load(path)?;
            if f.config_hash != p.hash {
                log::warn!("{} was fitted under a different configuration", path.display());
            }
            f
        }
        None => FitResult::new(&p.run, p.hash.clone(), &emcc(m, &p.run.studies, &p.run.manifest.em)?),
    };
    let params = fit.param_set(m)?;
    if params.is_empty() {
        return Err(CliError::new(
            ExitCode::Incompatible,
            "incompatible",
            format!(
                "refusing to answer queries: {}; inference under incompatible studies is not tenable",
                verdict_line(&fit.verdict, 0)
            ),
        ));
    }
    let mut results = Vec::new();
    for q in &queries {
        let r = bounds(m, &params, &q.resolve(m)?, q.name())?;
        results.push(if paper_rounding { r.rounded() } else { r });
    }
    let message = results
        .iter()
        .map(|r| format!("{}: [{}, {}]", r.query, r.lower, r.upper))
        .collect::<Vec<_>>()
        .join("; ");
    let file = QueriesFile {
        seed: fit.seed,
        config_hash: fit.config_hash,
        paper_rounding,
        results,
    };
    let mut outputs = Outputs::default();
    outputs.add(QUERIES_FILE, to_json(&file));
    Ok(Report {
        exit: ExitCode::Ok,
        out_dir: p.out_dir,
        outputs,
        message,
    })
}

#[derive(Debug, Serialize)]
struct BenchSummaryFile {
    seed: u64,
    config_hash: String,
    #[serde(flatten)]
    summary: BenchSummary,
}

pub fn load_bench_config(path: Option<&Path>) -> CliResult<BenchConfig> {
    match path {
        None => Ok(BenchConfig::default()),
        Some(p) => {
            let text = read(p)?;
            if text.trim().is_empty() {
                return Ok(BenchConfig::default());
            }
            Ok(serde_json::from_str(&text).map_err(|e| Error::parse(p, e))?)
        }
    }
}

fn bench(
    config: Option<&Path>,
    seed: Option<u64>,
    restarts: Option<usize>,
    models: Option<usize>,
    out: Option<&Path>,
) -> CliResult<Report> {
    let mut cfg = load_bench_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = restarts {
        cfg.em.restarts = r;
    }
    if let Some(n) = models {
        cfg.n_models = n;
    }
    cfg.validate()?;
    let result = run_benchmark(&cfg)?;
    let summary = summarize(&result);
    let hash = config_hash([to_json(&cfg).as_bytes()]);

    let jsonl = |lines: Vec<String>| lines.into_iter().map(|l| l + "\n").collect::<String>();
    let records = jsonl(
        result
            .records
            .iter()
            .map(|r| serde_json::to_string(r).expect("serializable"))
            .collect(),
    );
    let skipped = jsonl(
        result
            .skipped
            .iter()
            .map(|r| serde_json::to_string(r).expect("serializable"))
            .collect(),
    );
    let message = format!(
        "{} record(s), {} skipped; mean shrink vs O {}, vs I {}",
        summary.n_records,
        summary.n_skipped,
        summary
            .shrink_vs_o
            .as_ref()
            .map_or("n/a".into(), |q| format!("{:.3}", q.mean)),
        summary
            .shrink_vs_i
            .as_ref()
            .map_or("n/a".into(), |q| format!("{:.3}", q.mean)),
    );
    let mut outputs = Outputs::default();
    outputs.add(BENCH_RECORDS_FILE, records);
    outputs.add(BENCH_SKIPPED_FILE, skipped);
    outputs.add(BENCH_BOXPLOT_FILE, boxplot_csv(&summary));
    outputs.add(
        BENCH_SUMMARY_FILE,
        to_json(&BenchSummaryFile {
            seed: cfg.seed,
            config_hash: hash,
            summary,
        }),
    );
    Ok(Report {
        exit: ExitCode::Ok,
        out_dir: out.map_or_else(|| PathBuf::from("bench-out"), Path::to_path_buf),
        outputs,
        message,
    })
}

#[derive(Debug, Serialize)]
struct OracleEntry {
    query: String,
    #[serde(flatten)]
    result: OracleResult,
}

#[derive(Debug, Serialize)]
struct OracleFile {
    config_hash: String,
    grid_step: f64,
    compatible: bool,
    results: Vec<OracleEntry>,
}

fn oracle(manifest: &Path, grid_step: f64, out: Option<&Path>) -> CliResult<Report> {
    let p = prepare(manifest, &EmOverrides::default(), out)?;
    let queries = manifest_queries(&p.run)?;
    let m = &p.run.model;
    let mut results = Vec::new();
    for q in &queries {
        let result = grid_oracle(m, &p.run.studies, grid_step, &q.resolve(m)?)?;
        results.push(OracleEntry {
            query: q.name().to_string(),
            result,
        });
    }
    let compatible = results.iter().all(|r| r.result.compatible());
    let message = results
        .iter()
        .map(|r| match (r.result.lower, r.result.upper) {
            (Some(lo), Some(hi)) => format!("{}: [{lo:.4}, {hi:.4}] ± {:.4}", r.query, r.result.slack),
            _ => format!("{}: no grid point compatible", r.query),
        })
        .collect::<Vec<_>>()
        .join("; ");
    let mut outputs = Outputs::default();
    outputs.add(
        ORACLE_FILE,
        to_json(&OracleFile {
            config_hash: p.hash,
            grid_step,
            compatible,
            results,
        }),
    );
    Ok(Report {
        exit: if compatible {
            ExitCode::Ok
        } else {
            ExitCode::Incompatible
        },
        out_dir: p.out_dir,
        outputs,
        message,
    })
}
