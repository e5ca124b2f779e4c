//! Exact inference on a fully specified model viewed as a Bayesian network:
//! structural equations become degenerate CPTs, exogenous PMFs become root
//! priors, and queries are answered by variable elimination.

use std::collections::{BTreeMap, BTreeSet};

use crate::data::Study;
use crate::error::{Error, Result};
use crate::exact_sum::ExactSum;
use crate::factor::Factor;
use crate::model::{ExoParams, Pscm, VarId};

/// Probabilities below this are treated as zero.
pub const PROB_FLOOR: f64 = 1e-300;

/// Min-fill elimination order, ties broken by clique weight and then id.
pub fn min_fill_order(
    scopes: &[Vec<VarId>],
    cards: &BTreeMap<VarId, usize>,
    eliminate: &BTreeSet<VarId>,
) -> Vec<VarId> {
    let mut adj: BTreeMap<VarId, BTreeSet<VarId>> = BTreeMap::new();
    for scope in scopes {
        for &a in scope {
            let entry = adj.entry(a).or_default();
            for &b in scope {
                if a != b {
                    entry.insert(b);
                }
            }
        }
    }
    let mut remaining: BTreeSet<VarId> = eliminate.iter().copied().filter(|v| adj.contains_key(v)).collect();
    let mut order = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let best = remaining
            .iter()
            .map(|&v| {
                let nb: Vec<VarId> = adj[&v].iter().copied().collect();
                let mut fill = 0usize;
                for (i, a) in nb.iter().enumerate() {
                    for b in &nb[i + 1..] {
                        if !adj[a].contains(b) {
                            fill += 1;
                        }
                    }
                }
                let weight = nb
                    .iter()
                    .chain(std::iter::once(&v))
                    .fold(1f64, |w, x| w * cards[x] as f64);
                (fill, weight, v)
            })
            .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)))
            .map(|(_, _, v)| v)
            .expect("nonempty");
        let nb: Vec<VarId> = adj[&best].iter().copied().collect();
        for (i, &a) in nb.iter().enumerate() {
            for &b in &nb[i + 1..] {
                adj.get_mut(&a).expect("neighbour").insert(b);
                adj.get_mut(&b).expect("neighbour").insert(a);
            }
        }
        for a in &nb {
            adj.get_mut(a).expect("neighbour").remove(&best);
        }
        adj.remove(&best);
        remaining.remove(&best);
        order.push(best);
    }
    order
}

/// Sum-product elimination of every variable not in `keep`, following `order`
/// (variables missing from `order` are eliminated last, by id).
pub fn eliminate(mut factors: Vec<Factor>, keep: &[VarId], order: &[VarId]) -> Result<Factor> {
    let keep_set: BTreeSet<VarId> = keep.iter().copied().collect();
    let mut leftover: BTreeSet<VarId> = factors
        .iter()
        .flat_map(|f| f.scope().iter().copied())
        .filter(|v| !keep_set.contains(v))
        .collect();
    for v in order {
        leftover.remove(v);
    }
    for &v in order.iter().chain(leftover.iter()) {
        if keep_set.contains(&v) {
            continue;
        }
        let (with, without): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.contains(v));
        factors = without;
        if with.is_empty() {
            continue;
        }
        let mut iter = with.into_iter();
        let mut prod = iter.next().expect("nonempty");
        for f in iter {
            prod = prod.product(&f)?;
        }
        factors.push(prod.sum_out(v));
    }
    let mut result = Factor::scalar(1.0);
    for f in &factors {
        result = result.product(f)?;
    }
    Ok(result)
}

fn theta_factor(model: &Pscm, theta: &ExoParams, u: VarId) -> Result<Factor> {
    let pmf = theta
        .pmfs
        .get(&u)
        .ok_or_else(|| Error::InvalidParams(format!("missing PMF for '{}'", model.name(u))))?;
    Factor::new(vec![u], vec![model.card(u)], pmf.clone())
}

/// A query compiled against a fixed model, target and evidence; evaluate it for
/// any parameter vector. Only ancestors of the target and evidence take part.
#[derive(Debug, Clone)]
pub struct PreparedQuery {
    target: Vec<VarId>,
    target_cards: Vec<usize>,
    free_target: Vec<VarId>,
    evidence: BTreeMap<VarId, usize>,
    structural: Vec<Factor>,
    exogenous: Vec<VarId>,
    order: Vec<VarId>,
}

impl PreparedQuery {
    pub fn new(model: &Pscm, target: &[VarId], evidence: &BTreeMap<VarId, usize>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &t in target {
            if t.0 >= model.len() || !seen.insert(t) {
                return Err(Error::InvalidQuery(format!("bad target variable {t}")));
            }
        }
        for (&v, &s) in evidence {
            if v.0 >= model.len() || s >= model.card(v) {
                return Err(Error::InvalidQuery(format!("bad evidence on {v}")));
            }
        }
        let relevant = model
            .dag()
            .ancestral_closure(target.iter().chain(evidence.keys()).copied());
        let mut structural = Vec::new();
        let mut exogenous = Vec::new();
        for &v in &relevant {
            if model.is_exogenous(v) {
                exogenous.push(v);
                continue;
            }
            let eq = model.equation(v).expect("endogenous");
            let cpt = eq.to_cpt(model.card(v));
            let mut scope = cpt.conditioners.clone();
            scope.push(v);
            let mut cards = cpt.conditioner_cards.clone();
            cards.push(model.card(v));
            structural.push(Factor::new(scope, cards, cpt.values)?.reduce(evidence));
        }
        let free_target: Vec<VarId> = target.iter().copied().filter(|t| !evidence.contains_key(t)).collect();
        let mut scopes: Vec<Vec<VarId>> = structural.iter().map(|f| f.scope().to_vec()).collect();
        scopes.extend(exogenous.iter().filter(|u| !evidence.contains_key(u)).map(|&u| vec![u]));
        let cards: BTreeMap<VarId, usize> = (0..model.len()).map(|i| (VarId(i), model.card(VarId(i)))).collect();
        let to_eliminate: BTreeSet<VarId> = scopes
            .iter()
            .flatten()
            .copied()
            .filter(|v| !free_target.contains(v))
            .collect();
        let order = min_fill_order(&scopes, &cards, &to_eliminate);
        Ok(PreparedQuery {
            target: target.to_vec(),
            target_cards: target.iter().map(|&t| model.card(t)).collect(),
            free_target,
            evidence: evidence.clone(),
            structural,
            exogenous,
            order,
        })
    }

    /// Unnormalized `P(target, evidence)` over the target in the requested order.
    pub fn joint(&self, model: &Pscm, theta: &ExoParams) -> Result<Factor> {
        let mut factors = self.structural.clone();
        for &u in &self.exogenous {
            factors.push(theta_factor(model, theta, u)?.reduce(&self.evidence));
        }
        let mut result = eliminate(factors, &self.free_target, &self.order)?;
        for &t in &self.free_target {
            if !result.contains(t) {
                result = result.product(&Factor::ones(vec![t], vec![model.card(t)])?)?;
            }
        }
        let result = result.permute(&self.free_target);
        if self.free_target.len() == self.target.len() {
            return Ok(result);
        }
        // expand observed target variables as point masses
        let mut indicator_scope = Vec::new();
        let mut indicator = Factor::scalar(1.0);
        for (&t, &c) in self.target.iter().zip(&self.target_cards) {
            if let Some(&s) = self.evidence.get(&t) {
                let mut vals = vec![0.0; c];
                vals[s] = 1.0;
                indicator = indicator.product(&Factor::new(vec![t], vec![c], vals)?)?;
                indicator_scope.push(t);
            }
        }
        Ok(result.product(&indicator)?.permute(&self.target))
    }

    /// Normalized `P(target | evidence)`.
    pub fn evaluate(&self, model: &Pscm, theta: &ExoParams) -> Result<Factor> {
        let (f, z) = self.joint(model, theta)?.normalized();
        if z < PROB_FLOOR {
            return Err(Error::ZeroEvidence);
        }
        Ok(f)
    }
}

/// `P(target | evidence)` for the model under `theta`.
pub fn query(model: &Pscm, theta: &ExoParams, target: &[VarId], evidence: &BTreeMap<VarId, usize>) -> Result<Factor> {
    PreparedQuery::new(model, target, evidence)?.evaluate(model, theta)
}

/// Probability of a (partial) configuration.
pub fn evidence_probability(model: &Pscm, theta: &ExoParams, evidence: &BTreeMap<VarId, usize>) -> Result<f64> {
    Ok(PreparedQuery::new(model, &[], evidence)?.joint(model, theta)?.total())
}

/// Posterior PMF of every exogenous variable given a complete endogenous record.
pub fn exo_posterior(
    model: &Pscm,
    theta: &ExoParams,
    record: &BTreeMap<VarId, usize>,
) -> Result<BTreeMap<VarId, Vec<f64>>> {
    let endo = model.endogenous();
    if endo.iter().any(|v| !record.contains_key(v)) || record.keys().any(|v| model.is_exogenous(*v)) {
        return Err(Error::InvalidQuery(
            "record must cover exactly the endogenous variables".into(),
        ));
    }
    model
        .exogenous()
        .into_iter()
        .map(|u| {
            let f = query(model, theta, &[u], record)?;
            Ok((u, f.into_values()))
        })
        .collect()
}

/// `log P(record)` with [`PROB_FLOOR`] mapped to negative infinity.
pub fn record_log_probability(model: &Pscm, theta: &ExoParams, record: &BTreeMap<VarId, usize>) -> Result<f64> {
    let p = evidence_probability(model, theta, record)?;
    Ok(if p < PROB_FLOOR { f64::NEG_INFINITY } else { p.ln() })
}

fn study_terms(base: &Pscm, theta: &ExoParams, study: &Study) -> Result<Vec<f64>> {
    let model = study.model(base)?;
    study
        .data
        .rows()
        .iter()
        .map(|(cfg, n)| {
            let lp = record_log_probability(&model, theta, &study.data.evidence(cfg))?;
            Ok(if lp == f64::NEG_INFINITY { lp } else { *n as f64 * lp })
        })
        .collect()
}

/// Log-likelihood of one study under its mutilated clone of `base`, kept as an
/// exact accumulator.
pub fn study_log_likelihood_exact(base: &Pscm, theta: &ExoParams, study: &Study) -> Result<ExactSum> {
    Ok(study_terms(base, theta, study)?.into_iter().collect())
}

/// Multi-study log-likelihood: per-study log-likelihoods, then their sum.
/// Negative infinity if a positive-count record has zero probability.
pub fn log_likelihood(theta: &ExoParams, studies: &[Study], base: &Pscm) -> Result<f64> {
    let mut total = ExactSum::new();
    for study in studies {
        total.merge(&study_log_likelihood_exact(base, theta, study)?);
    }
    Ok(total.value())
}

/// The same quantity computed on the appended dataset: records of all studies
/// one after another, each evaluated under the model of the study it came from.
pub fn sequential_log_likelihood(theta: &ExoParams, studies: &[Study], base: &Pscm) -> Result<f64> {
    let models: Vec<Pscm> = studies.iter().map(|s| s.model(base)).collect::<Result<_>>()?;
    let appended: Vec<(usize, BTreeMap<VarId, usize>, u64)> = studies
        .iter()
        .enumerate()
        .flat_map(|(k, s)| s.data.rows().iter().map(move |(cfg, n)| (k, s.data.evidence(cfg), *n)))
        .collect();
    let mut acc = ExactSum::new();
    for (k, record, n) in &appended {
        let lp = record_log_probability(&models[*k], theta, record)?;
        acc.add(if lp == f64::NEG_INFINITY { lp } else { *n as f64 * lp });
    }
    Ok(acc.value())
}
