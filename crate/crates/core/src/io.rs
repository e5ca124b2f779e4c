//! File formats: models, canonical specifications, run manifests, query
//! files and fit results. Variables and states are referenced by name in every
//! file; state cells accept a label or a zero-based index.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::canonical::{build_canonical_pscm, CanonicalOptions, CanonicalSpec, Reduction};
use crate::data::{Dataset, Study};
use crate::emcc::{EmConfig, EmccResult, ParamSet};
use crate::error::{Error, Result};
use crate::model::{ExoParams, Pscm, StructuralEquation, VarId, VarKind, Variable};
use crate::queries::{CounterfactualSpec, Layer, PnsSpec, Query};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableFile {
    pub id: String,
    pub kind: VarKind,
    pub cardinality: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationFile {
    pub child: String,
    pub inputs: Vec<String>,
    /// Child state index per input configuration, mixed-radix order, last
    /// input varying fastest.
    pub table: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub variables: Vec<VariableFile>,
    pub arcs: Vec<(String, String)>,
    pub equations: Vec<EquationFile>,
    #[serde(default)]
    pub interventions: BTreeMap<String, String>,
}

impl ModelFile {
    pub fn from_pscm(m: &Pscm) -> Self {
        let variables = m
            .variables()
            .iter()
            .map(|v| VariableFile {
                id: v.name.clone(),
                kind: v.kind,
                cardinality: v.card,
                labels: v.labels.clone(),
            })
            .collect();
        let equations: Vec<EquationFile> = m
            .equations()
            .map(|eq| EquationFile {
                child: m.name(eq.child).to_string(),
                inputs: eq.inputs.iter().map(|&i| m.name(i).to_string()).collect(),
                table: eq.table.clone(),
            })
            .collect();
        let arcs = equations
            .iter()
            .flat_map(|eq| eq.inputs.iter().map(move |i| (i.clone(), eq.child.clone())))
            .collect();
        let interventions = m
            .interventions()
            .iter()
            .map(|(&v, &s)| (m.name(v).to_string(), m.var(v).state_label(s)))
            .collect();
        ModelFile {
            variables,
            arcs,
            equations,
            interventions,
        }
    }

    pub fn to_pscm(&self) -> Result<Pscm> {
        let variables: Vec<Variable> = self
            .variables
            .iter()
            .map(|v| Variable {
                name: v.id.clone(),
                kind: v.kind,
                card: v.cardinality,
                labels: v.labels.clone(),
            })
            .collect();
        let index: BTreeMap<&str, VarId> = variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.as_str(), VarId(i)))
            .collect();
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::UnknownVariable(name.to_string()))
        };
        let mut equations = Vec::new();
        let mut from_equations = Vec::new();
        for eq in &self.equations {
            let child = lookup(&eq.child)?;
            let inputs: Vec<VarId> = eq.inputs.iter().map(|i| lookup(i)).collect::<Result<_>>()?;
            let cards = inputs.iter().map(|i| variables[i.0].card).collect();
            for &i in &inputs {
                from_equations.push((i, child));
            }
            equations.push(StructuralEquation::new(child, inputs, cards, eq.table.clone()));
        }
        let mut declared: Vec<(VarId, VarId)> = self
            .arcs
            .iter()
            .map(|(p, c)| Ok((lookup(p)?, lookup(c)?)))
            .collect::<Result<_>>()?;
        declared.sort();
        from_equations.sort();
        if declared != from_equations {
            return Err(Error::InvalidModel(
                "arcs do not match the equations' input lists".into(),
            ));
        }
        let mut interventions = BTreeMap::new();
        for (name, state) in &self.interventions {
            let v = lookup(name)?;
            interventions.insert(v, variables[v.0].state_index(state)?);
        }
        Pscm::new(variables, equations, interventions)
    }
}

/// A canonical specification file: endogenous graph plus exogenous assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanonicalFile {
    pub endogenous: Vec<VariableFile>,
    pub arcs: Vec<(String, String)>,
    /// Exogenous name → endogenous children.
    pub exogenous: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinality_cap: Option<usize>,
    /// Exogenous name → explicit cardinality, reached by sampling joint
    /// functions without replacement with the given seed.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub reduce: BTreeMap<String, ReductionFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionFile {
    pub states: usize,
    #[serde(default)]
    pub seed: u64,
}

impl CanonicalFile {
    pub fn to_pscm(&self) -> Result<Pscm> {
        let endogenous: Vec<Variable> = self
            .endogenous
            .iter()
            .map(|v| {
                if v.kind != VarKind::Endogenous {
                    return Err(Error::InvalidModel(format!("'{}' must be endogenous", v.id)));
                }
                Ok(Variable {
                    name: v.id.clone(),
                    kind: VarKind::Endogenous,
                    card: v.cardinality,
                    labels: v.labels.clone(),
                })
            })
            .collect::<Result<_>>()?;
        let pos = |name: &str| {
            endogenous
                .iter()
                .position(|v| v.name == name)
                .ok_or_else(|| Error::UnknownVariable(name.to_string()))
        };
        let arcs = self
            .arcs
            .iter()
            .map(|(p, c)| Ok((pos(p)?, pos(c)?)))
            .collect::<Result<_>>()?;
        let exogenous = self
            .exogenous
            .iter()
            .map(|(u, ch)| Ok((u.clone(), ch.iter().map(|c| pos(c)).collect::<Result<_>>()?)))
            .collect::<Result<_>>()?;
        let spec = CanonicalSpec {
            endogenous,
            arcs,
            exogenous,
        };
        let mut opts = CanonicalOptions::default();
        if let Some(cap) = self.cardinality_cap {
            opts.cap = cap;
        }
        for (u, r) in &self.reduce {
            opts.reductions.insert(
                u.clone(),
                Reduction::Sample {
                    max_states: r.states,
                    seed: r.seed,
                },
            );
        }
        build_canonical_pscm(&spec, &opts)
    }
}

/// Either a full model or a canonical specification (under a `canonical` key).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum AnyModelFile {
    Canonical { canonical: CanonicalFile },
    Full(ModelFile),
}

pub fn parse_model(text: &str, origin: &Path) -> Result<Pscm> {
    let file: AnyModelFile = serde_json::from_str(text).map_err(|e| Error::parse(origin, e))?;
    match file {
        AnyModelFile::Canonical { canonical } => canonical.to_pscm(),
        AnyModelFile::Full(m) => m.to_pscm(),
    }
}

pub fn load_model(path: &Path) -> Result<Pscm> {
    parse_model(&read(path)?, path)
}

/// Pretty JSON with a trailing newline; parse followed by this is the identity
/// on files it produced.
pub fn model_to_json(m: &Pscm) -> String {
    to_json(&ModelFile::from_pscm(m))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn resolve_state(m: &Pscm, var: &str, state: &str) -> Result<(VarId, usize)> {
    let v = m.id_of(var)?;
    Ok((v, m.var(v).state_index(state)?))
}

pub fn resolve_assignment(m: &Pscm, a: &BTreeMap<String, String>) -> Result<BTreeMap<VarId, usize>> {
    a.iter().map(|(v, s)| resolve_state(m, v, s)).collect()
}

// ---------------------------------------------------------------- manifests

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub data: PathBuf,
    #[serde(default)]
    pub intervention: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub model: PathBuf,
    pub studies: Vec<StudyEntry>,
    #[serde(default)]
    pub queries: Vec<PathBuf>,
    #[serde(default)]
    pub em: EmConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// A manifest with its files loaded; relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub manifest: RunManifest,
    pub dir: PathBuf,
    pub model: Pscm,
    pub studies: Vec<Study>,
    pub study_names: Vec<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<(RunManifest, PathBuf)> {
        let text = read(path)?;
        let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((manifest, dir))
    }

    pub fn resolve(&self, dir: &Path) -> Result<LoadedRun> {
        self.em.validate()?;
        if self.studies.is_empty() {
            return Err(Error::InvalidData("the manifest lists no studies".into()));
        }
        let model = load_model(&dir.join(&self.model))?;
        let mut studies = Vec::new();
        let mut names = Vec::new();
        for (i, entry) in self.studies.iter().enumerate() {
            let path = dir.join(&entry.data);
            let data = Dataset::from_csv(&path, &model)?;
            let intervention = resolve_assignment(&model, &entry.intervention)?;
            let study = Study::new(data, intervention).map_err(|e| Error::parse(&path, e))?;
            studies.push(study);
            names.push(entry.name.clone().unwrap_or_else(|| format!("study{}", i + 1)));
        }
        Ok(LoadedRun {
            manifest: self.clone(),
            dir: dir.to_path_buf(),
            model,
            studies,
            study_names: names,
        })
    }
}

// ------------------------------------------------------------------ queries

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetFile {
    #[serde(default = "counterfactual_layer")]
    pub layer: Layer,
    pub variable: String,
    pub state: String,
}

fn counterfactual_layer() -> Layer {
    Layer::Counterfactual
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QueryFile {
    Pns {
        name: String,
        cause: String,
        effect: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        positive_cause: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        negative_cause: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        positive_effect: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        negative_effect: Option<String>,
        #[serde(default)]
        condition: BTreeMap<String, String>,
    },
    Counterfactual {
        name: String,
        #[serde(default)]
        intervention: BTreeMap<String, String>,
        #[serde(default)]
        evidence: BTreeMap<String, String>,
        target: Vec<TargetFile>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySet {
    pub queries: Vec<QueryFile>,
}

impl QueryFile {
    pub fn name(&self) -> &str {
        match self {
            QueryFile::Pns { name, .. } | QueryFile::Counterfactual { name, .. } => name,
        }
    }

    pub fn resolve(&self, m: &Pscm) -> Result<Query> {
        match self {
            QueryFile::Pns {
                cause,
                effect,
                positive_cause,
                negative_cause,
                positive_effect,
                negative_effect,
                condition,
                ..
            } => {
                let c = m.id_of(cause)?;
                let e = m.id_of(effect)?;
                let state = |v: VarId, s: &Option<String>, default: usize| match s {
                    Some(s) => m.var(v).state_index(s),
                    None => Ok(default),
                };
                Ok(Query::Pns(PnsSpec {
                    cause: c,
                    effect: e,
                    cause_states: (state(c, positive_cause, 1)?, state(c, negative_cause, 0)?),
                    effect_states: (state(e, positive_effect, 1)?, state(e, negative_effect, 0)?),
                    condition: resolve_assignment(m, condition)?,
                }))
            }
            QueryFile::Counterfactual {
                intervention,
                evidence,
                target,
                ..
            } => Ok(Query::Counterfactual(CounterfactualSpec {
                twin_interventions: resolve_assignment(m, intervention)?,
                factual_evidence: resolve_assignment(m, evidence)?,
                target: target
                    .iter()
                    .map(|t| {
                        let (v, s) = resolve_state(m, &t.variable, &t.state)?;
                        Ok((t.layer, v, s))
                    })
                    .collect::<Result<_>>()?,
            })),
        }
    }
}

pub fn load_queries(path: &Path) -> Result<QuerySet> {
    serde_json::from_str(&read(path)?).map_err(|e| Error::parse(path, e))
}

// -------------------------------------------------------------- fit results

/// Parameter vectors keyed by exogenous variable name.
pub type NamedParams = BTreeMap<String, Vec<f64>>;

pub fn name_params(m: &Pscm, theta: &ExoParams) -> NamedParams {
    theta
        .pmfs
        .iter()
        .map(|(u, p)| (m.name(*u).to_string(), p.clone()))
        .collect()
}

pub fn unname_params(m: &Pscm, named: &NamedParams) -> Result<ExoParams> {
    let pmfs = named
        .iter()
        .map(|(n, p)| Ok((m.id_of(n)?, p.clone())))
        .collect::<Result<_>>()?;
    let theta = ExoParams::new(pmfs);
    theta.validate(m)?;
    Ok(theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub name: String,
    pub records: u64,
    pub intervention: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub seed: u64,
    pub config_hash: String,
    pub config: EmConfig,
    pub studies: Vec<StudySummary>,
    pub verdict: crate::emcc::CompatibilityVerdict,
    pub study_max: Vec<crate::emcc::StudyMax>,
    pub runs: Vec<crate::emcc::RunSummary>,
    pub thetas: Vec<NamedParams>,
    pub ll_values: Vec<f64>,
}

impl FitResult {
    pub fn new(run: &LoadedRun, config_hash: String, result: &EmccResult) -> Self {
        let m = &run.model;
        FitResult {
            seed: run.manifest.em.seed,
            config_hash,
            config: run.manifest.em.clone(),
            studies: run
                .studies
                .iter()
                .zip(&run.study_names)
                .map(|(s, n)| StudySummary {
                    name: n.clone(),
                    records: s.data.total(),
                    intervention: s
                        .intervention
                        .iter()
                        .map(|(&v, &st)| (m.name(v).to_string(), m.var(v).state_label(st)))
                        .collect(),
                })
                .collect(),
            verdict: result.verdict.clone(),
            study_max: result.study_max.clone(),
            runs: result.runs.clone(),
            thetas: result.params.thetas.iter().map(|t| name_params(m, t)).collect(),
            ll_values: result.params.ll_values.clone(),
        }
    }

    pub fn param_set(&self, m: &Pscm) -> Result<ParamSet> {
        Ok(ParamSet {
            thetas: self.thetas.iter().map(|t| unname_params(m, t)).collect::<Result<_>>()?,
            ll_values: self.ll_values.clone(),
        })
    }

    pub fn load(path: &Path) -> Result<FitResult> {
        serde_json::from_str(&read(path)?).map_err(|e| Error::parse(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::drug_trial_spec;

    #[test]
    fn model_round_trip_is_byte_stable() {
        let m = build_canonical_pscm(&drug_trial_spec(), &CanonicalOptions::default()).unwrap();
        let m = m.intervene(&BTreeMap::from([(VarId(1), 1)])).unwrap();
        let text = model_to_json(&m);
        let back = parse_model(&text, Path::new("mem")).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_json(&back), text);
    }

    #[test]
    fn arcs_must_match_equations() {
        let m = build_canonical_pscm(&drug_trial_spec(), &CanonicalOptions::default()).unwrap();
        let mut file = ModelFile::from_pscm(&m);
        file.arcs.pop();
        assert!(file.to_pscm().is_err());
    }

    #[test]
    fn canonical_file_builds_the_same_model() {
        let text = r#"{"canonical": {
            "endogenous": [
                {"id": "Treatment", "kind": "endogenous", "cardinality": 2, "labels": ["no drug", "drug"]},
                {"id": "Gender", "kind": "endogenous", "cardinality": 2, "labels": ["female", "male"]},
                {"id": "Survival", "kind": "endogenous", "cardinality": 2, "labels": ["dead", "survived"]}
            ],
            "arcs": [["Gender", "Treatment"], ["Treatment", "Survival"], ["Gender", "Survival"]],
            "exogenous": {"U": ["Treatment", "Gender", "Survival"]}
        }}"#;
        let m = parse_model(text, Path::new("mem")).unwrap();
        let expected = build_canonical_pscm(&drug_trial_spec(), &CanonicalOptions::default()).unwrap();
        assert_eq!(m, expected);
    }

    #[test]
    fn query_files_resolve_labels() {
        let m = build_canonical_pscm(&drug_trial_spec(), &CanonicalOptions::default()).unwrap();
        let q: QuerySet = serde_json::from_str(
            r#"{"queries": [
                {"kind": "pns", "name": "female", "cause": "Treatment", "effect": "Survival",
                 "condition": {"Gender": "female"}},
                {"kind": "counterfactual", "name": "cf", "intervention": {"Treatment": "drug"},
                 "evidence": {"Treatment": "no drug", "Survival": "dead"},
                 "target": [{"variable": "Survival", "state": "survived"}]}
            ]}"#,
        )
        .unwrap();
        match q.queries[0].resolve(&m).unwrap() {
            Query::Pns(p) => {
                assert_eq!(p.cause_states, (1, 0));
                assert_eq!(p.condition, BTreeMap::from([(VarId(1), 0)]));
            }
            _ => panic!(),
        }
        match q.queries[1].resolve(&m).unwrap() {
            Query::Counterfactual(c) => assert_eq!(c.target, vec![(Layer::Counterfactual, VarId(2), 1)]),
            _ => panic!(),
        }
    }
}
