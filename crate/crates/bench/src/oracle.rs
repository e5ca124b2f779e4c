//! Brute-force bounds for tiny models: enumerate exogenous parameters on a
//! simplex grid, keep those whose induced distributions match every study's
//! empirical distribution, and take the query envelope over them.
//!
//! Everything here works on explicit exogenous states and structural
//! equations; it shares no inference code with the fitting path.

use std::collections::BTreeMap;

use emcc_core::queries::{Layer, Query};
use emcc_core::{Error, ExoParams, Pscm, Result, Study, VarId};
use serde::{Deserialize, Serialize};

/// Largest grid the oracle enumerates.
pub const MAX_GRID_POINTS: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub grid_step: f64,
    pub grid_points: u64,
    pub retained: u64,
    /// Sup-norm tolerance between induced and empirical distributions.
    pub epsilon: f64,
    /// Slack for comparing other estimates with the envelope.
    pub slack: f64,
    /// `None` when no grid point is retained (incompatible at this resolution).
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl OracleResult {
    pub fn compatible(&self) -> bool {
        self.lower.is_some()
    }

    /// Whether `x` lies in the envelope widened by the slack.
    pub fn contains(&self, x: f64) -> bool {
        match (self.lower, self.upper) {
            (Some(lo), Some(hi)) => x >= lo - self.slack && x <= hi + self.slack,
            _ => false,
        }
    }
}

/// Number of free exogenous parameters.
pub fn dimension(model: &Pscm) -> usize {
    model.exogenous().iter().map(|&u| model.card(u) - 1).sum()
}

fn binomial(n: u128, k: u128) -> u128 {
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn steps(grid_step: f64) -> Result<usize> {
    let k = (1.0 / grid_step).round();
    if !(grid_step > 0.0) || k < 1.0 || (k * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "grid step {grid_step} must be 1/k for an integer k"
        )));
    }
    Ok(k as usize)
}

/// Number of grid points: one simplex lattice per exogenous variable.
pub fn grid_size(model: &Pscm, grid_step: f64) -> Result<u128> {
    let k = steps(grid_step)? as u128;
    Ok(model
        .exogenous()
        .iter()
        .map(|&u| binomial(k + model.card(u) as u128 - 1, model.card(u) as u128 - 1))
        .fold(1u128, u128::saturating_mul))
}

/// All compositions of `k` into `parts` nonnegative parts, scaled by `1/k`.
fn simplex_points(k: usize, parts: usize) -> Vec<Vec<f64>> {
    fn rec(left: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for x in 0..=left {
            cur.push(x);
            rec(left - x, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, parts, &mut Vec::new(), &mut out);
    out.into_iter()
        .map(|c| c.into_iter().map(|x| x as f64 / k as f64).collect())
        .collect()
}

/// Endogenous values of every world for one joint exogenous state.
fn world(model: &Pscm, exo: &[VarId], joint: &[usize]) -> Vec<usize> {
    let mut states = vec![0; model.len()];
    for (u, &s) in exo.iter().zip(joint) {
        states[u.0] = s;
    }
    model.propagate(&mut states);
    states
}

/// Joint exogenous states in mixed-radix order (last variable fastest).
fn joint_states(cards: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &c in cards {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..c).map(move |s| {
                    let mut p = prefix.clone();
                    p.push(s);
                    p
                })
            })
            .collect();
    }
    out
}

/// Indicators over joint exogenous states: `(numerator, denominator)` of the
/// query as a ratio of two exogenous events.
fn query_events(base: &Pscm, exo: &[VarId], joints: &[Vec<usize>], query: &Query) -> Result<(Vec<bool>, Vec<bool>)> {
    let factual: Vec<Vec<usize>> = joints.iter().map(|j| world(base, exo, j)).collect();
    let holds = |w: &[usize], ev: &BTreeMap<VarId, usize>| ev.iter().all(|(v, &s)| w[v.0] == s);
    match query {
        Query::Pns(spec) => {
            let pos = base.intervene(&BTreeMap::from([(spec.cause, spec.cause_states.0)]))?;
            let neg = base.intervene(&BTreeMap::from([(spec.cause, spec.cause_states.1)]))?;
            let den: Vec<bool> = factual.iter().map(|w| holds(w, &spec.condition)).collect();
            let num = joints
                .iter()
                .zip(&den)
                .map(|(j, &d)| {
                    d && world(&pos, exo, j)[spec.effect.0] == spec.effect_states.0
                        && world(&neg, exo, j)[spec.effect.0] == spec.effect_states.1
                })
                .collect();
            Ok((num, den))
        }
        Query::Counterfactual(spec) => {
            let twin = base.intervene(&spec.twin_interventions)?;
            let den: Vec<bool> = factual.iter().map(|w| holds(w, &spec.factual_evidence)).collect();
            let num = joints
                .iter()
                .zip(&factual)
                .zip(&den)
                .map(|((j, f), &d)| {
                    let cf = world(&twin, exo, j);
                    d && spec.target.iter().all(|&(layer, v, s)| match layer {
                        Layer::Factual => f[v.0] == s,
                        Layer::Counterfactual => cf[v.0] == s,
                    })
                })
                .collect();
            Ok((num, den))
        }
    }
}

/// One study: the outcome cell of each joint exogenous state and the
/// empirical distribution over cells.
struct StudyCells {
    cell_of: Vec<usize>,
    empirical: Vec<f64>,
}

fn study_cells(base: &Pscm, exo: &[VarId], joints: &[Vec<usize>], study: &Study) -> Result<StudyCells> {
    study.validate_for(base)?;
    let model = study.model(base)?;
    let cols = study.data.columns();
    let cards: Vec<usize> = cols.iter().map(|&c| base.card(c)).collect();
    let index = |w: &[usize]| cols.iter().zip(&cards).fold(0, |acc, (c, &k)| acc * k + w[c.0]);
    let n_cells: usize = cards.iter().product();
    let mut empirical = vec![0.0; n_cells];
    let total = study.data.total() as f64;
    for (row, count) in study.data.rows() {
        let i = row.iter().zip(&cards).fold(0, |acc, (&s, &k)| acc * k + s);
        empirical[i] += *count as f64 / total;
    }
    let cell_of = joints.iter().map(|j| index(&world(&model, exo, j))).collect();
    Ok(StudyCells { cell_of, empirical })
}

/// Grid oracle with the default tolerance `epsilon = grid_step · dimension`.
pub fn grid_oracle(model: &Pscm, studies: &[Study], grid_step: f64, query: &Query) -> Result<OracleResult> {
    let eps = grid_step * dimension(model).max(1) as f64;
    grid_oracle_with(model, studies, grid_step, eps, query)
}

pub fn grid_oracle_with(
    model: &Pscm,
    studies: &[Study],
    grid_step: f64,
    epsilon: f64,
    query: &Query,
) -> Result<OracleResult> {
    let k = steps(grid_step)?;
    let size = grid_size(model, grid_step)?;
    if size > MAX_GRID_POINTS {
        return Err(Error::InvalidConfig(format!(
            "grid has {size} points, the limit is {MAX_GRID_POINTS}"
        )));
    }
    if studies.is_empty() {
        return Err(Error::InvalidData("no studies".into()));
    }
    let exo = model.exogenous();
    let cards: Vec<usize> = exo.iter().map(|&u| model.card(u)).collect();
    let joints = joint_states(&cards);
    let (num, den) = query_events(model, &exo, &joints, query)?;
    let cells = studies
        .iter()
        .map(|s| study_cells(model, &exo, &joints, s))
        .collect::<Result<Vec<_>>>()?;
    let lattices: Vec<Vec<Vec<f64>>> = cards.iter().map(|&c| simplex_points(k, c)).collect();

    let mut idx = vec![0usize; lattices.len()];
    let mut weights = vec![0.0; joints.len()];
    let mut induced: Vec<Vec<f64>> = cells.iter().map(|c| vec![0.0; c.empirical.len()]).collect();
    let (mut retained, mut lower, mut upper) = (0u64, f64::INFINITY, f64::NEG_INFINITY);
    let mut points = 0u64;
    loop {
        points += 1;
        for (w, j) in weights.iter_mut().zip(&joints) {
            *w = j.iter().zip(&idx).zip(&lattices).map(|((&s, &i), l)| l[i][s]).product();
        }
        let fits = cells.iter().zip(induced.iter_mut()).all(|(c, p)| {
            p.iter_mut().for_each(|x| *x = 0.0);
            for (&cell, &w) in c.cell_of.iter().zip(&weights) {
                p[cell] += w;
            }
            p.iter().zip(&c.empirical).all(|(a, b)| (a - b).abs() <= epsilon)
        });
        if fits {
            retained += 1;
            let (mut n, mut d) = (0.0, 0.0);
            for ((&w, &a), &b) in weights.iter().zip(&num).zip(&den) {
                if a {
                    n += w;
                }
                if b {
                    d += w;
                }
            }
            if d > 0.0 {
                let v = n / d;
                lower = lower.min(v);
                upper = upper.max(v);
            }
        }
        // next grid point, last variable fastest
        let mut pos = idx.len();
        loop {
            if pos == 0 {
                let found = lower <= upper;
                return Ok(OracleResult {
                    grid_step,
                    grid_points: points,
                    retained,
                    epsilon,
                    slack: 2.0 * grid_step * dimension(model).max(1) as f64,
                    lower: found.then_some(lower),
                    upper: found.then_some(upper),
                });
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < lattices[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// The value of `query` at explicit parameters, by enumeration of exogenous
/// states. `None` when the conditioning event has probability zero.
pub fn brute_force_query(model: &Pscm, theta: &ExoParams, query: &Query) -> Result<Option<f64>> {
    theta.validate(model)?;
    let exo = model.exogenous();
    let cards: Vec<usize> = exo.iter().map(|&u| model.card(u)).collect();
    let joints = joint_states(&cards);
    let (num, den) = query_events(model, &exo, &joints, query)?;
    let (mut n, mut d) = (0.0, 0.0);
    for ((j, &a), &b) in joints.iter().zip(&num).zip(&den) {
        let w: f64 = exo.iter().zip(j).map(|(&u, &s)| theta.get(u)[s]).product();
        if a {
            n += w;
        }
        if b {
            d += w;
        }
    }
    Ok((d > 0.0).then(|| n / d))
}

/// A study whose counts are `n` times the exact distribution induced by
/// `theta` under `intervention`, rounded to integers (empty cells dropped).
pub fn exact_study(model: &Pscm, theta: &ExoParams, intervention: &BTreeMap<VarId, usize>, n: u64) -> Result<Study> {
    theta.validate(model)?;
    let clone = model.intervene(intervention)?;
    let exo = model.exogenous();
    let endo = model.endogenous();
    let cards: Vec<usize> = exo.iter().map(|&u| model.card(u)).collect();
    let mut mass: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for j in joint_states(&cards) {
        let w: f64 = exo.iter().zip(&j).map(|(&u, &s)| theta.get(u)[s]).product();
        let states = world(&clone, &exo, &j);
        *mass.entry(endo.iter().map(|v| states[v.0]).collect()).or_insert(0.0) += w;
    }
    let rows = mass
        .into_iter()
        .map(|(row, p)| (row, (p * n as f64).round() as u64))
        .filter(|&(_, c)| c > 0);
    Study::new(emcc_core::Dataset::new(endo, rows)?, intervention.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_lattice_counts() {
        assert_eq!(simplex_points(4, 2).len(), 5);
        assert_eq!(simplex_points(50, 4).len(), 23426);
        assert_eq!(binomial(53, 3), 23426);
        for p in simplex_points(5, 3) {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn step_must_divide_one() {
        assert!(steps(0.3).is_err());
        assert_eq!(steps(0.02).unwrap(), 50);
    }

    #[test]
    fn joint_states_are_mixed_radix() {
        assert_eq!(joint_states(&[2, 3])[4], vec![1, 1]);
        assert_eq!(joint_states(&[2, 3]).len(), 6);
    }
}
