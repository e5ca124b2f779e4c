#![allow(dead_code)]

use std::collections::BTreeMap;

use emcc_core::canonical::{build_canonical_pscm, CanonicalOptions, CanonicalSpec, Reduction};
use emcc_core::emcc::{initial_params, InitScheme};
use emcc_core::{Dataset, ExoParams, Pscm, Study, VarId, Variable};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random small model: 2–4 endogenous variables (2 or 3 states), random
/// forward arcs, endogenous nodes split over one or two exogenous roots with
/// at most 12 states each.
pub fn random_model(rng: &mut impl Rng) -> Pscm {
    let n = rng.random_range(2..=4);
    let endogenous = (0..n)
        .map(|i| Variable::endogenous(format!("V{i}"), if rng.random_bool(0.25) { 3 } else { 2 }))
        .collect();
    let mut arcs = Vec::new();
    for j in 1..n {
        for i in 0..j {
            if rng.random_bool(0.5) {
                arcs.push((i, j));
            }
        }
    }
    let groups = if n > 2 && rng.random_bool(0.5) { 2 } else { 1 };
    let mut exogenous: Vec<(String, Vec<usize>)> = (0..groups).map(|g| (format!("U{g}"), vec![])).collect();
    for v in 0..n {
        let g = if v < groups { v } else { rng.random_range(0..groups) };
        exogenous[g].1.push(v);
    }
    let mut opts = CanonicalOptions::default();
    for (name, _) in &exogenous {
        opts.reductions.insert(
            name.clone(),
            Reduction::Sample {
                max_states: 12,
                seed: rng.random(),
            },
        );
    }
    build_canonical_pscm(
        &CanonicalSpec {
            endogenous,
            arcs,
            exogenous,
        },
        &opts,
    )
    .unwrap()
}

pub fn random_theta(m: &Pscm, rng: &mut impl Rng) -> ExoParams {
    initial_params(m, &InitScheme::Dirichlet { concentration: 1.0 }, rng)
}

/// Every full assignment of the exogenous variables with its probability and
/// the endogenous states it determines (under the model's interventions).
pub fn worlds(m: &Pscm, theta: &ExoParams) -> Vec<(f64, Vec<usize>)> {
    let exo = m.exogenous();
    let cards: Vec<usize> = exo.iter().map(|&u| m.card(u)).collect();
    let total: usize = cards.iter().product();
    (0..total)
        .map(|i| {
            let us = emcc_core::radix::decode(i, &cards);
            let mut states = vec![0; m.len()];
            let mut p = 1.0;
            for (&u, &s) in exo.iter().zip(&us) {
                states[u.0] = s;
                p *= theta.get(u)[s];
            }
            m.propagate(&mut states);
            (p, states)
        })
        .collect()
}

/// Joint distribution over `vars` by enumeration, mixed-radix order.
pub fn brute_joint(m: &Pscm, theta: &ExoParams, vars: &[VarId]) -> Vec<f64> {
    let cards: Vec<usize> = vars.iter().map(|&v| m.card(v)).collect();
    let mut out = vec![0.0; cards.iter().product()];
    for (p, states) in worlds(m, theta) {
        let cfg: Vec<usize> = vars.iter().map(|v| states[v.0]).collect();
        out[emcc_core::radix::index(&cfg, &cards)] += p;
    }
    out
}

/// `n` records over all endogenous variables drawn from the mutilated model.
pub fn draw_study(
    m: &Pscm,
    theta: &ExoParams,
    intervention: BTreeMap<VarId, usize>,
    n: usize,
    rng: &mut impl Rng,
) -> Study {
    let mutilated = m.intervene(&intervention).unwrap();
    let ws = worlds(&mutilated, theta);
    let dist = WeightedIndex::new(ws.iter().map(|(p, _)| *p)).unwrap();
    let endo = m.endogenous();
    let records = (0..n).map(|_| {
        let states = &ws[dist.sample(rng)].1;
        endo.iter().map(|v| states[v.0]).collect::<Vec<_>>()
    });
    Study::new(Dataset::from_records(endo.clone(), records).unwrap(), intervention).unwrap()
}

/// Observational study plus, half the time, a study intervening on the first
/// endogenous variable.
pub fn random_studies(m: &Pscm, rng: &mut impl Rng) -> Vec<Study> {
    let theta = random_theta(m, rng);
    let mut studies = vec![draw_study(m, &theta, BTreeMap::new(), rng.random_range(20..200), rng)];
    if rng.random_bool(0.5) {
        let v = m.endogenous()[0];
        let s = rng.random_range(0..m.card(v));
        studies.push(draw_study(
            m,
            &theta,
            BTreeMap::from([(v, s)]),
            rng.random_range(20..200),
            rng,
        ));
    }
    studies
}
