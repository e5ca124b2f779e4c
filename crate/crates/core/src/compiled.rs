//! Study evidence compiled for repeated likelihood and posterior evaluation.
//!
//! Given a complete record, every structural equation has its endogenous
//! inputs fixed, so the event "the model reproduces the record" is a 0/1 mask
//! over the joint states of each group of exogenous variables that share
//! endogenous children. The mask does not depend on the parameters; EM only
//! needs the masks and how often each one occurs.

use std::collections::BTreeMap;

use crate::ccomponent::c_components;
use crate::data::Study;
use crate::error::{Error, Result};
use crate::exact_sum::ExactSum;
use crate::inference::PROB_FLOOR;
use crate::model::{ExoParams, Pscm, VarId};
use crate::radix;

/// Largest joint exogenous space of a single component.
pub const MAX_COMPONENT_STATES: usize = 1 << 22;

#[derive(Debug, Clone)]
struct Component {
    exogenous: Vec<VarId>,
    cards: Vec<usize>,
    size: usize,
    /// Distinct masks (bitsets over the joint space) with their total counts.
    entries: Vec<(Vec<u64>, u64)>,
    /// First study and record that produced each entry, for diagnostics.
    origins: Vec<(usize, String)>,
}

#[derive(Debug, Clone)]
pub struct CompiledEvidence {
    components: Vec<Component>,
    total: u64,
}

/// Expected exogenous counts and the log-likelihood at the parameters used.
#[derive(Debug, Clone)]
pub struct Expectation {
    pub counts: BTreeMap<VarId, Vec<f64>>,
    pub log_likelihood: f64,
}

impl CompiledEvidence {
    pub fn new(base: &Pscm, studies: &[Study]) -> Result<Self> {
        let decomposition = c_components(base);
        let mut layouts = Vec::new();
        for c in decomposition.components.iter().filter(|c| !c.exogenous.is_empty()) {
            let cards: Vec<usize> = c.exogenous.iter().map(|&u| base.card(u)).collect();
            let size = radix::size(&cards)
                .filter(|&s| s <= MAX_COMPONENT_STATES)
                .ok_or_else(|| Error::FactorTooLarge(cards.iter().map(|&c| c as u128).product()))?;
            let mut children: Vec<VarId> = c
                .exogenous
                .iter()
                .flat_map(|&u| base.children(u).iter().copied())
                .collect();
            children.sort();
            children.dedup();
            layouts.push((c.exogenous.clone(), cards, size, children));
        }

        let mut merged: Vec<BTreeMap<Vec<u64>, (u64, usize, String)>> = vec![BTreeMap::new(); layouts.len()];
        for (k, study) in studies.iter().enumerate() {
            study.validate_for(base)?;
            let model = study.model(base)?;
            for (row, count) in study.data.rows() {
                let mut states = vec![0usize; model.len()];
                for (&c, &s) in study.data.columns().iter().zip(row) {
                    states[c.0] = s;
                }
                for ((exo, cards, size, children), out) in layouts.iter().zip(merged.iter_mut()) {
                    let mask = record_mask(&model, &mut states, exo, cards, *size, children);
                    if mask.iter().all(|&w| w == 0) {
                        return Err(Error::ImpossibleRecord {
                            study: k,
                            record: describe(&model, study.data.columns(), row),
                        });
                    }
                    out.entry(mask)
                        .or_insert_with(|| (0, k, describe(&model, study.data.columns(), row)))
                        .0 += count;
                }
            }
        }
        let components = layouts
            .into_iter()
            .zip(merged)
            .map(|((exogenous, cards, size, _), entries)| {
                let (entries, origins) = entries
                    .into_iter()
                    .map(|(mask, (count, k, record))| ((mask, count), (k, record)))
                    .unzip();
                Component {
                    exogenous,
                    cards,
                    size,
                    entries,
                    origins,
                }
            })
            .collect();
        Ok(CompiledEvidence {
            components,
            total: crate::data::total_records(studies),
        })
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct (component, mask) entries.
    pub fn entry_count(&self) -> usize {
        self.components.iter().map(|c| c.entries.len()).sum()
    }

    /// Posterior expected counts of every exogenous state, and the
    /// log-likelihood of the parameters that produced them.
    pub fn expectation(&self, theta: &ExoParams) -> Result<Expectation> {
        let mut counts = BTreeMap::new();
        let mut ll = ExactSum::new();
        for c in &self.components {
            let weights = joint_weights(c, theta);
            let mut acc = vec![0.0; c.size];
            for ((mask, count), (study, record)) in c.entries.iter().zip(&c.origins) {
                let mut z = 0.0;
                for_each_bit(mask, |s| z += weights[s]);
                if !(z >= PROB_FLOOR) {
                    return Err(Error::ZeroProbabilityRecord {
                        study: *study,
                        record: record.clone(),
                    });
                }
                ll.add(*count as f64 * z.ln());
                let scale = *count as f64 / z;
                for_each_bit(mask, |s| acc[s] += weights[s] * scale);
            }
            for (u, marginal) in c.exogenous.iter().zip(marginalize(&acc, &c.cards)) {
                counts.insert(*u, marginal);
            }
        }
        Ok(Expectation {
            counts,
            log_likelihood: ll.value(),
        })
    }

    pub fn log_likelihood(&self, theta: &ExoParams) -> Result<f64> {
        let mut ll = ExactSum::new();
        for c in &self.components {
            let weights = joint_weights(c, theta);
            for (mask, count) in &c.entries {
                let mut z = 0.0;
                for_each_bit(mask, |s| z += weights[s]);
                ll.add(if z < PROB_FLOOR {
                    f64::NEG_INFINITY
                } else {
                    *count as f64 * z.ln()
                });
            }
        }
        Ok(ll.value())
    }
}

/// Normalize expected counts into a parameter vector; exogenous variables
/// without components (none in valid models) keep their previous PMF.
pub fn maximize(expected: &BTreeMap<VarId, Vec<f64>>, previous: &ExoParams) -> ExoParams {
    let pmfs = previous
        .pmfs
        .iter()
        .map(|(u, p)| match expected.get(u) {
            Some(n) => {
                let total: f64 = n.iter().sum();
                (*u, n.iter().map(|x| x / total).collect())
            }
            None => (*u, p.clone()),
        })
        .collect();
    ExoParams::new(pmfs)
}

fn record_mask(
    model: &Pscm,
    states: &mut [usize],
    exo: &[VarId],
    cards: &[usize],
    size: usize,
    children: &[VarId],
) -> Vec<u64> {
    let checks: Vec<(VarId, usize)> = children
        .iter()
        .filter(|v| !model.interventions().contains_key(v))
        .map(|&v| (v, states[v.0]))
        .collect();
    let mut mask = vec![0u64; size.div_ceil(64)];
    let mut cfg = vec![0; exo.len()];
    let mut buf = Vec::new();
    for s in 0..size {
        for (u, &x) in exo.iter().zip(&cfg) {
            states[u.0] = x;
        }
        let ok = checks.iter().all(|&(v, observed)| {
            let eq = model.equation(v).expect("endogenous");
            buf.clear();
            buf.extend(eq.inputs.iter().map(|i| states[i.0]));
            eq.eval(&buf) == observed
        });
        if ok {
            mask[s / 64] |= 1 << (s % 64);
        }
        radix::increment(&mut cfg, cards);
    }
    mask
}

fn describe(model: &Pscm, columns: &[VarId], row: &[usize]) -> String {
    columns
        .iter()
        .zip(row)
        .map(|(&c, &s)| format!("{}={}", model.name(c), model.var(c).state_label(s)))
        .collect::<Vec<_>>()
        .join(", ")
}

fn joint_weights(c: &Component, theta: &ExoParams) -> Vec<f64> {
    let mut w = vec![1.0];
    for &u in &c.exogenous {
        let p = theta.get(u);
        let mut next = Vec::with_capacity(w.len() * p.len());
        for &a in &w {
            next.extend(p.iter().map(|&b| a * b));
        }
        w = next;
    }
    w
}

fn marginalize(joint: &[f64], cards: &[usize]) -> Vec<Vec<f64>> {
    let strides = radix::strides(cards);
    cards
        .iter()
        .zip(&strides)
        .map(|(&card, &stride)| {
            let mut m = vec![0.0; card];
            for (s, &x) in joint.iter().enumerate() {
                m[(s / stride) % card] += x;
            }
            m
        })
        .collect()
}

fn for_each_bit(mask: &[u64], mut f: impl FnMut(usize)) {
    for (i, &word) in mask.iter().enumerate() {
        let mut w = word;
        while w != 0 {
            let b = w.trailing_zeros() as usize;
            f(i * 64 + b);
            w &= w - 1;
        }
    }
}
