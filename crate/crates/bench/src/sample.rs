//! Random canonical models and datasets drawn from them.

use std::collections::BTreeMap;

use emcc_core::canonical::{build_canonical_pscm, CanonicalOptions, CanonicalSpec, Reduction};
use emcc_core::emcc::{initial_params, InitScheme};
use emcc_core::{Dataset, Error, ExoParams, Pscm, Result, Study, VarId, Variable};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::BenchConfig;

/// Graph draws before giving up on a configuration.
pub const MAX_GRAPH_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct SampledModel {
    pub model: Pscm,
    /// Ground-truth exogenous parameters.
    pub theta: ExoParams,
    pub n_nodes: usize,
    pub edge_probability: f64,
    pub graph_attempts: usize,
    /// First endogenous variable in the sampling (topological) order.
    pub cause: VarId,
    /// Last endogenous variable in the sampling order.
    pub effect: VarId,
}

/// Draw a random canonical model.
///
/// Nodes are ordered and each forward arc is present independently. Nodes
/// without parents become exogenous, the rest binary endogenous. Each
/// endogenous node keeps only its lowest-index exogenous parent; a node with
/// none shares the exogenous parent of its lowest-index endogenous parent.
/// Exogenous nodes left without children are dropped. The graph is redrawn
/// unless it has two endogenous nodes and the first is an ancestor of the last.
pub fn sample_model(cfg: &BenchConfig, seed: u64) -> Result<SampledModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 1..=MAX_GRAPH_ATTEMPTS {
        let n = rng.random_range(cfg.min_nodes..=cfg.max_nodes);
        let p = cfg.edge_probability_for(n);
        let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (j, ps) in parents.iter_mut().enumerate() {
            for i in 0..j {
                if rng.random_bool(p) {
                    ps.push(i);
                }
            }
        }
        let Some(spec) = canonical_spec(&parents) else {
            continue;
        };
        let reductions = spec
            .exogenous
            .iter()
            .map(|(name, _)| {
                let r = Reduction::Sample {
                    max_states: cfg.exogenous_cardinality_cap,
                    seed: rng.random(),
                };
                (name.clone(), r)
            })
            .collect();
        let opts = CanonicalOptions {
            cap: cfg.exogenous_cardinality_cap,
            reductions,
        };
        let model = match build_canonical_pscm(&spec, &opts) {
            Ok(m) => m,
            Err(e) => {
                log::debug!("graph {attempt} rejected: {e}");
                continue;
            }
        };
        let theta = initial_params(&model, &InitScheme::Dirichlet { concentration: 1.0 }, &mut rng);
        // Declaration order is the sampling order, a topological order.
        let endo = model.endogenous();
        return Ok(SampledModel {
            cause: endo[0],
            effect: *endo.last().expect("two endogenous nodes"),
            model,
            theta,
            n_nodes: n,
            edge_probability: p,
            graph_attempts: attempt,
        });
    }
    Err(Error::InvalidConfig(format!(
        "no valid graph in {MAX_GRAPH_ATTEMPTS} draws; raise the edge probability or node count"
    )))
}

/// Turn a random DAG (parents point to lower indices) into a canonical
/// specification, or `None` if it violates the structural constraints.
fn canonical_spec(parents: &[Vec<usize>]) -> Option<CanonicalSpec> {
    let n = parents.len();
    let is_root: Vec<bool> = parents.iter().map(Vec::is_empty).collect();
    let endo: Vec<usize> = (0..n).filter(|&v| !is_root[v]).collect();
    if endo.len() < 2 {
        return None;
    }
    let mut pos = vec![usize::MAX; n];
    for (k, &v) in endo.iter().enumerate() {
        pos[v] = k;
    }
    // Exogenous owner of each endogenous node (by node index).
    let mut owner = vec![usize::MAX; n];
    for &v in &endo {
        owner[v] = match parents[v].iter().find(|&&p| is_root[p]) {
            Some(&u) => u,
            None => owner[*parents[v].iter().find(|&&p| !is_root[p])?],
        };
    }
    let arcs: Vec<(usize, usize)> = endo
        .iter()
        .flat_map(|&v| {
            let pos = &pos;
            parents[v]
                .iter()
                .filter(|&&p| !is_root[p])
                .map(move |&p| (pos[p], pos[v]))
        })
        .collect();

    // Ancestry of the last endogenous node over endogenous arcs.
    let mut reaches = vec![false; endo.len()];
    reaches[endo.len() - 1] = true;
    for k in (0..endo.len()).rev() {
        if reaches[k] {
            for &(a, b) in &arcs {
                if b == k {
                    reaches[a] = true;
                }
            }
        }
    }
    if !reaches[0] {
        return None;
    }

    let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &v in &endo {
        children.entry(owner[v]).or_default().push(pos[v]);
    }
    Some(CanonicalSpec {
        endogenous: (1..=endo.len())
            .map(|k| Variable::endogenous(format!("V{k}"), 2))
            .collect(),
        arcs,
        exogenous: children
            .into_values()
            .enumerate()
            .map(|(k, kids)| (format!("U{}", k + 1), kids))
            .collect(),
    })
}

/// An observational study and the two arms of a randomized trial on the cause.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledStudies {
    pub observational: Study,
    /// `do(cause = 0)` and `do(cause = 1)`.
    pub arms: [Study; 2],
}

impl SampledStudies {
    pub fn interventional(&self) -> Vec<Study> {
        self.arms.to_vec()
    }

    /// Observational study first, then both arms.
    pub fn all(&self) -> Vec<Study> {
        let mut v = vec![self.observational.clone()];
        v.extend(self.arms.iter().cloned());
        v
    }
}

/// Ancestral sampling of `n1` observational records and `n2` trial records.
/// Arm 0 gets `floor(n2 / 2)` records and arm 1 the rest.
pub fn sample_studies(
    model: &Pscm,
    theta: &ExoParams,
    cause: VarId,
    n1: u64,
    n2: u64,
    seed: u64,
) -> Result<SampledStudies> {
    theta.validate(model)?;
    if model.card(cause) != 2 || model.is_exogenous(cause) {
        return Err(Error::InvalidModel(
            "the cause must be a binary endogenous variable".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let observational = Study::observational(draw(model, theta, n1, &mut rng)?);
    let half = n2 / 2;
    let mut arm = |state: usize, n: u64| -> Result<Study> {
        let intervention = BTreeMap::from([(cause, state)]);
        let data = draw(&model.intervene(&intervention)?, theta, n, &mut rng)?;
        Study::new(data, intervention)
    };
    let arms = [arm(0, half)?, arm(1, n2 - half)?];
    Ok(SampledStudies { observational, arms })
}

/// `n` records of every endogenous variable.
pub fn draw(model: &Pscm, theta: &ExoParams, n: u64, rng: &mut impl Rng) -> Result<Dataset> {
    let exo = model.exogenous();
    let samplers = exo
        .iter()
        .map(|&u| WeightedIndex::new(theta.get(u)).map_err(|e| Error::InvalidParams(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let endo = model.endogenous();
    let mut states = vec![0; model.len()];
    let mut records = Vec::with_capacity(n as usize);
    for _ in 0..n {
        for (&u, s) in exo.iter().zip(&samplers) {
            states[u.0] = s.sample(rng);
        }
        model.propagate(&mut states);
        records.push(endo.iter().map(|v| states[v.0]).collect());
    }
    Dataset::from_records(endo, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orphan_shares_its_parents_exogenous() {
        // 0 root; 1 <- 0; 2 <- 1 (no root parent); 3 root, childless.
        let parents = vec![vec![], vec![0], vec![1], vec![]];
        let spec = canonical_spec(&parents).unwrap();
        assert_eq!(spec.exogenous, vec![("U1".to_string(), vec![0, 1])]);
        assert_eq!(spec.arcs, vec![(0, 1)]);
    }

    #[test]
    fn cause_must_reach_effect() {
        // 0 root; 1 <- 0; 2 <- 0; no path from node 1 to node 2.
        assert!(canonical_spec(&[vec![], vec![0], vec![0]]).is_none());
        assert!(canonical_spec(&[vec![], vec![0]]).is_none());
    }

    #[test]
    fn extra_root_parents_are_dropped() {
        let parents = vec![vec![], vec![], vec![0, 1], vec![1, 2]];
        let spec = canonical_spec(&parents).unwrap();
        assert_eq!(
            spec.exogenous,
            vec![("U1".to_string(), vec![0]), ("U2".to_string(), vec![1])]
        );
        assert_eq!(spec.arcs, vec![(0, 1)]);
    }
}
