//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is never captured. The
//! process fails when a criterion fails that is not listed in
//! `KNOWN_FAILURES`; listed ones are still reported as FAIL.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use emcc_bench::summary::{REFERENCE_SHRINK_VS_I, REFERENCE_SHRINK_VS_O};
use emcc_bench::{grid_oracle, sample_model, sample_studies, tiny_cases, BenchConfig};
use emcc_core::emcc::{em_run, emcc, initial_params, restart_rng, EmConfig, InitScheme};
use emcc_core::inference::{log_likelihood, sequential_log_likelihood};
use emcc_core::queries::bounds;
use rand::Rng;
use rayon::prelude::*;
use serde_json::Value;

/// Criteria that fail for documented reasons (see the README).
const KNOWN_FAILURES: &[u32] = &[9];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn emcc_cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_emcc"))
        .args(args)
        .output()
        .expect("binary runs");
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("output exists")).expect("valid json")
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Run `emcc query` on a bundled manifest; returns the result objects by name.
    fn query(&self, manifest: &str, out: &str, rounding: bool) -> Result<BTreeMap<String, Value>, String> {
        let out_dir = self.path(out);
        let manifest = data(manifest);
        let mut args = vec!["query", manifest.to_str().unwrap(), "--out", out_dir.to_str().unwrap()];
        if rounding {
            args.push("--paper-rounding");
        }
        let (code, text) = emcc_cli(&args);
        if code != 0 {
            return Err(format!("exit {code}: {}", text.trim()));
        }
        Ok(json(&out_dir.join("queries.json"))["results"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| (r["query"].as_str().unwrap().to_string(), r.clone()))
            .collect())
    }
}

fn interval(r: &Value) -> (f64, f64) {
    (r["lower"].as_f64().unwrap(), r["upper"].as_f64().unwrap())
}

fn expect_interval(results: &BTreeMap<String, Value>, name: &str, want: (f64, f64)) -> (bool, String) {
    let got = interval(&results[name]);
    (
        got == want,
        format!(
            "{name} [{:.2}, {:.2}] (want [{:.2}, {:.2}])",
            got.0, got.1, want.0, want.1
        ),
    )
}

fn criterion_1(ws: &Workspace) -> Outcome {
    match ws.query("drug_trial/marginal_joint.manifest.json", "c1", true) {
        Ok(r) => {
            let (ok, d) = expect_interval(&r, "pns", (0.34, 0.43));
            outcome(ok, format!("O+I, r=30: {d}"))
        }
        Err(e) => outcome(false, e),
    }
}

fn criterion_2(ws: &Workspace) -> Outcome {
    match ws.query("drug_trial/marginal_observational.manifest.json", "c2", true) {
        Ok(r) => {
            let (ok, d) = expect_interval(&r, "pns", (0.00, 0.43));
            outcome(ok, format!("O only: {d}"))
        }
        Err(e) => outcome(false, e),
    }
}

fn criterion_3(ws: &Workspace) -> Outcome {
    let run = || -> Result<(bool, String), String> {
        let raw = ws.query("drug_trial/joint.manifest.json", "c3-raw", false)?;
        let rounded = ws.query("drug_trial/joint.manifest.json", "c3", true)?;
        let obs = ws.query("drug_trial/observational.manifest.json", "c3-obs", true)?;
        let mut ok = true;
        let mut parts = Vec::new();
        for (name, v) in [("pns_female", 0.28), ("pns_male", 0.49)] {
            let (lo, hi) = interval(&raw[name]);
            let (rl, ru) = interval(&rounded[name]);
            ok &= hi - lo < 0.005 && rl == v && ru == v;
            parts.push(format!("{name} {rl:.2} (width {:.1e})", hi - lo));
        }
        for (name, want) in [("pns_female", (0.0, 0.28)), ("pns_male", (0.0, 0.58))] {
            let (o, d) = expect_interval(&obs, name, want);
            ok &= o;
            parts.push(format!("O-only {d}"));
        }
        Ok((ok, parts.join("; ")))
    };
    match run() {
        Ok((ok, d)) => outcome(ok, d),
        Err(e) => outcome(false, e),
    }
}

fn criterion_4(ws: &Workspace) -> Outcome {
    match ws.query("drug_trial/marginal_interventional.manifest.json", "c4", true) {
        Ok(r) => {
            let (ok, d) = expect_interval(&r, "pns", (0.28, 0.49));
            outcome(ok, format!("I only: {d}"))
        }
        Err(e) => outcome(false, e),
    }
}

fn criterion_5(ws: &Workspace) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for manifest in [
        "drug_trial/marginal_joint.manifest.json",
        "drug_trial/joint.manifest.json",
    ] {
        let out = ws.path(&format!("c5-{}", manifest.replace('/', "-")));
        let (code, _) = emcc_cli(&[
            "check",
            data(manifest).to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        let v = &json(&out.join("verdict.json"))["verdict"];
        let (gap, tol) = (v["gap"].as_f64().unwrap(), v["tolerance"].as_f64().unwrap());
        ok &= code == 0 && v["compatible"] == true && gap <= tol;
        parts.push(format!("{manifest}: gap {gap:.2e} <= {tol}"));
    }
    let out = ws.path("c5-clones");
    let (code, _) = emcc_cli(&[
        "check",
        data("clones/manifest.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let v = &json(&out.join("verdict.json"))["verdict"];
    let gap = v["gap"].as_f64().unwrap();
    // two studies of 100 records at 90/10 and 10/90: the pooled optimum is
    // 1/2, each study alone reaches its own entropy
    let entropy = -(0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
    let expected = 200.0 * (2f64.ln() - entropy);
    let rel = (gap - expected).abs() / expected;
    ok &= code == 2 && v["compatible"] == false && rel <= 0.01;
    parts.push(format!(
        "clones: incompatible (exit {code}), gap {gap:.4} vs {expected:.4} ({:.3}%)",
        100.0 * rel
    ));
    outcome(ok, parts.join("; "))
}

fn fuzz_config() -> BenchConfig {
    BenchConfig {
        min_nodes: 4,
        max_nodes: 8,
        exogenous_cardinality_cap: 16,
        ..BenchConfig::default()
    }
}

fn criterion_6() -> Outcome {
    let cfg = fuzz_config();
    let results: Vec<Result<(usize, usize), String>> = (0..500u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = restart_rng(0xACCE, i);
            let s = sample_model(&cfg, rng.random()).map_err(|e| e.to_string())?;
            let n1 = rng.random_range(50..500);
            let studies = sample_studies(&s.model, &s.theta, s.cause, n1, 2 * n1, rng.random())
                .map_err(|e| e.to_string())?
                .all();
            let concentration = [1.0, 0.1, 0.02][i as usize % 3];
            let theta0 = initial_params(&s.model, &InitScheme::Dirichlet { concentration }, &mut rng);
            let em = EmConfig {
                max_iter: 300,
                tol: 1e-12,
                ..EmConfig::default()
            };
            let run = em_run(&s.model, &studies, &theta0, &em).map_err(|e| e.to_string())?;
            let violations = run.ll_trace.windows(2).filter(|w| w[1] < w[0] - 1e-9).count();
            Ok((violations, run.ll_trace.len() - 1))
        })
        .collect();
    let errors: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    let (violations, steps) = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .fold((0, 0), |(v, s), (a, b)| (v + a, s + b));
    outcome(
        errors.is_empty() && violations == 0,
        format!(
            "500 runs, {steps} EM steps, {violations} violation(s), {} error(s){}",
            errors.len(),
            errors.first().map_or(String::new(), |e| format!(" (first: {e})"))
        ),
    )
}

fn criterion_7() -> Outcome {
    let cases = match tiny_cases(24, 1, 5000) {
        Ok(c) => c,
        Err(e) => return outcome(false, e.to_string()),
    };
    let results: Vec<Result<(bool, bool, String), String>> = cases
        .par_iter()
        .map(|case| {
            let o = grid_oracle(&case.model, &case.studies, 0.02, &case.query).map_err(|e| e.to_string())?;
            let fit = emcc(
                &case.model,
                &case.studies,
                &EmConfig {
                    seed: 7,
                    ..Default::default()
                },
            )
            .map_err(|e| e.to_string())?;
            let q = bounds(&case.model, &fit.params, &case.query, &case.name).map_err(|e| e.to_string())?;
            let contained = q.points.iter().all(|&p| o.contains(p));
            let narrow = !case.identifiable || q.width() <= 1e-3;
            Ok((
                contained,
                narrow,
                format!("{} [{:.4}, {:.4}]", case.name, q.lower, q.upper),
            ))
        })
        .collect();
    let mut bad = Vec::new();
    let mut identifiable = 0;
    for (r, case) in results.iter().zip(&cases) {
        identifiable += case.identifiable as usize;
        match r {
            Ok((true, true, _)) => {}
            Ok((_, _, d)) => bad.push(d.clone()),
            Err(e) => bad.push(format!("{}: {e}", case.name)),
        }
    }
    outcome(
        bad.is_empty() && cases.len() >= 20,
        format!(
            "{} models ({identifiable} identifiable), {} outside the envelope or too wide{}",
            cases.len(),
            bad.len(),
            bad.first().map_or(String::new(), |b| format!(" (first: {b})"))
        ),
    )
}

fn criterion_8() -> Outcome {
    let cfg = fuzz_config();
    let mut mismatches = 0;
    let mut errors = 0;
    for i in 0..100u64 {
        let mut rng = restart_rng(0xB175, i);
        let mut run = || -> emcc_core::Result<bool> {
            let s = sample_model(&cfg, rng.random())?;
            let studies = sample_studies(&s.model, &s.theta, s.cause, 300, 600, rng.random())?.all();
            let theta = initial_params(&s.model, &InitScheme::Dirichlet { concentration: 0.5 }, &mut rng);
            let a = log_likelihood(&theta, &studies, &s.model)?;
            let b = sequential_log_likelihood(&theta, &studies, &s.model)?;
            Ok(a.to_bits() == b.to_bits())
        };
        match run() {
            Ok(true) => {}
            Ok(false) => mismatches += 1,
            Err(_) => errors += 1,
        }
    }
    outcome(
        mismatches == 0 && errors == 0,
        format!("100 parameter vectors, {mismatches} bitwise mismatch(es), {errors} error(s)"),
    )
}

fn run_bench(ws: &Workspace, out: &str) -> Result<PathBuf, String> {
    let dir = ws.path(out);
    let (code, text) = emcc_cli(&["bench", "--out", dir.to_str().unwrap()]);
    if code != 0 {
        return Err(format!("exit {code}: {}", text.trim()));
    }
    Ok(dir)
}

fn criterion_9(dir: &Result<PathBuf, String>) -> Outcome {
    let dir = match dir {
        Ok(d) => d,
        Err(e) => return outcome(false, e.clone()),
    };
    let s = json(&dir.join("bench_summary.json"));
    let mean = |key: &str| s[key]["mean"].as_f64();
    let (o, i) = (mean("shrink_vs_o"), mean("shrink_vs_i"));
    let inclusion = s["inclusion_rate"].as_f64();
    let pass = s["n_models"] == 130
        && o.is_some_and(|x| x > 0.0)
        && i.is_some_and(|x| x > 0.0)
        && inclusion.is_some_and(|x| x >= 0.95);
    let fmt = |x: Option<f64>| x.map_or("n/a".into(), |v| format!("{:.1}%", 100.0 * v));
    outcome(
        pass,
        format!(
            "{} models, {} records, {} skipped; mean shrink vs O {} (reference {:.0}%), vs I {} (reference {:.0}%); \
             inclusion {} (need >= 95%)",
            s["n_models"],
            s["n_records"],
            s["n_skipped"],
            fmt(o),
            100.0 * REFERENCE_SHRINK_VS_O,
            fmt(i),
            100.0 * REFERENCE_SHRINK_VS_I,
            fmt(inclusion)
        ),
    )
}

fn same_files(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = std::fs::read_dir(a)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for n in &names {
        if std::fs::read(a.join(n)).ok() != std::fs::read(b.join(n)).ok() {
            return Err(format!("{} differs", n.to_string_lossy()));
        }
    }
    Ok(names.len())
}

fn criterion_10(ws: &Workspace, first_bench: &Result<PathBuf, String>) -> Outcome {
    let run = || -> Result<usize, String> {
        let manifest = data("drug_trial/marginal_joint.manifest.json");
        for out in ["c10-a", "c10-b"] {
            let dir = ws.path(out);
            for cmd in ["fit", "query"] {
                let mut args = vec![cmd, manifest.to_str().unwrap(), "--out", dir.to_str().unwrap()];
                if cmd == "query" {
                    args.push("--paper-rounding");
                }
                let (code, text) = emcc_cli(&args);
                if code != 0 {
                    return Err(format!("{cmd}: exit {code}: {}", text.trim()));
                }
            }
        }
        let mut n = same_files(&ws.path("c10-a"), &ws.path("c10-b"))?;
        let first = first_bench.clone()?;
        let second = run_bench(ws, "c10-bench")?;
        n += same_files(&first, &second)?;
        Ok(n)
    };
    match run() {
        Ok(n) => outcome(n >= 6, format!("{n} result files byte-identical across two runs")),
        Err(e) => outcome(false, e),
    }
}

fn main() {
    let ws = Workspace {
        dir: tempfile::tempdir().expect("temporary directory"),
    };
    let started = Instant::now();
    let mut report = Vec::new();
    let mut record = |n: u32, o: Outcome| {
        println!(
            "criterion {n:>2}: {} — {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        report.push((n, o.pass));
    };
    record(1, criterion_1(&ws));
    record(2, criterion_2(&ws));
    record(3, criterion_3(&ws));
    record(4, criterion_4(&ws));
    record(5, criterion_5(&ws));
    record(6, criterion_6());
    record(7, criterion_7());
    record(8, criterion_8());
    let bench = run_bench(&ws, "c9");
    record(9, criterion_9(&bench));
    record(10, criterion_10(&ws, &bench));

    if let Ok(r) = ws.query("drug_trial/joint.manifest.json", "info", false) {
        let (lo, hi) = interval(&r["pns"]);
        println!("info: three-variable model, O+I, unconditional PNS [{lo:.4}, {hi:.4}]");
    }
    let passed = report.iter().filter(|(_, p)| *p).count();
    println!(
        "acceptance: {passed}/{} passed in {:.0?}",
        report.len(),
        started.elapsed()
    );

    let unexpected: Vec<u32> = report
        .iter()
        .filter(|(n, p)| !p && !KNOWN_FAILURES.contains(n))
        .map(|(n, _)| *n)
        .collect();
    for (n, p) in &report {
        if !p && KNOWN_FAILURES.contains(n) {
            println!("criterion {n} is a known failure; see the README");
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
