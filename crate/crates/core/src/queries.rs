//! Counterfactual queries on fitted models and their bounds over a set of
//! compatible parameter vectors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::emcc::ParamSet;
use crate::error::{Error, Result};
use crate::inference::PreparedQuery;
use crate::model::{ExoParams, Pscm, VarId};
use crate::twin::{multi_copy_network, MultiCopyNetwork};

/// Interval width below which a result is flagged as (numerically) a point.
pub const IDENTIFIABLE_WIDTH: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Factual,
    Counterfactual,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterfactualSpec {
    /// Applied in the counterfactual copy.
    pub twin_interventions: BTreeMap<VarId, usize>,
    /// Observed in the factual copy.
    pub factual_evidence: BTreeMap<VarId, usize>,
    /// Joint event whose probability is returned.
    pub target: Vec<(Layer, VarId, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PnsSpec {
    pub cause: VarId,
    pub effect: VarId,
    /// (positive, negative) states of the cause.
    pub cause_states: (usize, usize),
    /// (positive, negative) states of the effect.
    pub effect_states: (usize, usize),
    pub condition: BTreeMap<VarId, usize>,
}

impl PnsSpec {
    /// Positive is the second declared state, negative the first.
    pub fn new(cause: VarId, effect: VarId) -> Self {
        PnsSpec {
            cause,
            effect,
            cause_states: (1, 0),
            effect_states: (1, 0),
            condition: BTreeMap::new(),
        }
    }

    pub fn given(mut self, condition: BTreeMap<VarId, usize>) -> Self {
        self.condition = condition;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Query {
    Pns(PnsSpec),
    Counterfactual(CounterfactualSpec),
}

/// A query prepared once on its multi-copy network, evaluable for any
/// parameter vector of the base model.
#[derive(Debug, Clone)]
pub struct PreparedCounterfactual {
    network: MultiCopyNetwork,
    prepared: PreparedQuery,
    /// Index of the wanted configuration in the target factor.
    cell: usize,
}

impl PreparedCounterfactual {
    pub fn new(base: &Pscm, query: &Query) -> Result<Self> {
        match query {
            Query::Pns(spec) => Self::pns(base, spec),
            Query::Counterfactual(spec) => Self::counterfactual(base, spec),
        }
    }

    fn pns(base: &Pscm, spec: &PnsSpec) -> Result<Self> {
        for (v, role) in [(spec.cause, "cause"), (spec.effect, "effect")] {
            if v.0 >= base.len() || base.is_exogenous(v) {
                return Err(Error::InvalidQuery(format!("{role} {v} is not endogenous")));
            }
            if base.card(v) != 2 {
                return Err(Error::InvalidQuery(format!(
                    "{role} '{}' must be binary, has {} states",
                    base.name(v),
                    base.card(v)
                )));
            }
        }
        if spec.cause == spec.effect {
            return Err(Error::InvalidQuery("cause and effect coincide".into()));
        }
        for (a, b) in [spec.cause_states, spec.effect_states] {
            if a == b || a > 1 || b > 1 {
                return Err(Error::InvalidQuery("positive and negative states must differ".into()));
            }
        }
        check_evidence(base, &spec.condition)?;
        let network = multi_copy_network(
            base,
            &[
                BTreeMap::from([(spec.cause, spec.cause_states.0)]),
                BTreeMap::from([(spec.cause, spec.cause_states.1)]),
            ],
        )?;
        let target = [network.var(1, spec.effect), network.var(2, spec.effect)];
        let prepared = PreparedQuery::new(&network.model, &target, &spec.condition)?;
        let cell = spec.effect_states.0 * 2 + spec.effect_states.1;
        Ok(PreparedCounterfactual {
            network,
            prepared,
            cell,
        })
    }

    fn counterfactual(base: &Pscm, spec: &CounterfactualSpec) -> Result<Self> {
        check_evidence(base, &spec.factual_evidence)?;
        if spec.target.is_empty() {
            return Err(Error::InvalidQuery("empty target event".into()));
        }
        let network = multi_copy_network(base, std::slice::from_ref(&spec.twin_interventions))?;
        let mut target = Vec::new();
        let mut states = Vec::new();
        let mut cards = Vec::new();
        for &(layer, v, s) in &spec.target {
            if v.0 >= base.len() || base.is_exogenous(v) || s >= base.card(v) {
                return Err(Error::InvalidQuery(format!("bad target {v}={s}")));
            }
            let id = network.var(if layer == Layer::Factual { 0 } else { 1 }, v);
            if target.contains(&id) {
                return Err(Error::InvalidQuery(format!("target repeats {v}")));
            }
            target.push(id);
            states.push(s);
            cards.push(base.card(v));
        }
        let prepared = PreparedQuery::new(&network.model, &target, &spec.factual_evidence)?;
        Ok(PreparedCounterfactual {
            network,
            prepared,
            cell: crate::radix::index(&states, &cards),
        })
    }

    pub fn evaluate(&self, theta: &ExoParams) -> Result<f64> {
        let f = self.prepared.evaluate(&self.network.model, theta)?;
        Ok(f.values()[self.cell].clamp(0.0, 1.0))
    }
}

fn check_evidence(base: &Pscm, evidence: &BTreeMap<VarId, usize>) -> Result<()> {
    for (&v, &s) in evidence {
        if v.0 >= base.len() || base.is_exogenous(v) || s >= base.card(v) {
            return Err(Error::InvalidQuery(format!("bad evidence {v}={s}")));
        }
    }
    Ok(())
}

pub fn counterfactual(base: &Pscm, theta: &ExoParams, spec: &CounterfactualSpec) -> Result<f64> {
    PreparedCounterfactual::new(base, &Query::Counterfactual(spec.clone()))?.evaluate(theta)
}

/// Probability of necessity and sufficiency, optionally conditioned on
/// factual evidence.
pub fn pns(base: &Pscm, theta: &ExoParams, spec: &PnsSpec) -> Result<f64> {
    PreparedCounterfactual::new(base, &Query::Pns(spec.clone()))?.evaluate(theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query: String,
    pub lower: f64,
    pub upper: f64,
    pub points: Vec<f64>,
    pub identifiable: bool,
}

impl QueryResult {
    pub fn from_points(query: impl Into<String>, points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyParamSet("no parameter vectors to evaluate".into()));
        }
        let lower = points.iter().copied().fold(f64::INFINITY, f64::min);
        let upper = points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(QueryResult {
            query: query.into(),
            lower,
            upper,
            points,
            identifiable: upper - lower <= IDENTIFIABLE_WIDTH,
        })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Interval and points rounded to two decimals.
    pub fn rounded(&self) -> QueryResult {
        QueryResult {
            query: self.query.clone(),
            lower: round2(self.lower),
            upper: round2(self.upper),
            points: self.points.iter().map(|&p| round2(p)).collect(),
            identifiable: self.identifiable,
        }
    }
}

pub fn round2(x: f64) -> f64 {
    let r = (x * 100.0).round() / 100.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Evaluate `query` at every retained parameter vector.
pub fn bounds(base: &Pscm, params: &ParamSet, query: &Query, name: &str) -> Result<QueryResult> {
    if params.is_empty() {
        return Err(Error::EmptyParamSet(
            "no parameter vector passed the compatibility filter; the studies look incompatible \
             under this model (or EM did not reach the global maximum)"
                .into(),
        ));
    }
    let prepared = PreparedCounterfactual::new(base, query)?;
    let points = params
        .thetas
        .iter()
        .map(|t| prepared.evaluate(t))
        .collect::<Result<Vec<_>>>()?;
    QueryResult::from_points(name, points)
}

/// `1 - L_joint / L_single` for interval lengths `L`.
pub fn shrink(joint: &QueryResult, single: &QueryResult) -> Result<f64> {
    let single_len = single.width();
    if !(single_len > 0.0) {
        return Err(Error::InvalidQuery("reference interval has zero length".into()));
    }
    Ok(1.0 - joint.width() / single_len)
}
