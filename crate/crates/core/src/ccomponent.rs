//! Confounded components and the empirical Bayesian network they induce.

use std::collections::{BTreeMap, BTreeSet};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Pscm, VarId};
use crate::radix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CComponent {
    /// Endogenous members in topological order.
    pub endogenous: Vec<VarId>,
    pub exogenous: Vec<VarId>,
    /// Members plus their endogenous parents, in topological order.
    pub w_set: Vec<VarId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CComponentDecomposition {
    pub components: Vec<CComponent>,
    /// Conditioning set of each endogenous variable, in topological order.
    pub w_of: BTreeMap<VarId, Vec<VarId>>,
}

impl CComponentDecomposition {
    pub fn component_of(&self, v: VarId) -> Option<usize> {
        self.components
            .iter()
            .position(|c| c.endogenous.contains(&v) || c.exogenous.contains(&v))
    }
}

/// Connected components of the graph without endogenous-to-endogenous arcs.
pub fn c_components(model: &Pscm) -> CComponentDecomposition {
    let n = model.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (p, c) in model.dag().arcs() {
        if model.is_exogenous(p) || model.is_exogenous(c) {
            let (a, b) = (find(&mut parent, p.0), find(&mut parent, c.0));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let topo = model.topological_order();
    let mut pos = vec![0; n];
    for (i, v) in topo.iter().enumerate() {
        pos[v.0] = i;
    }

    let mut groups: BTreeMap<usize, (Vec<VarId>, Vec<VarId>)> = BTreeMap::new();
    for &v in topo {
        let root = find(&mut parent, v.0);
        let g = groups.entry(root).or_default();
        if model.is_exogenous(v) {
            g.1.push(v);
        } else {
            g.0.push(v);
        }
    }
    let mut components: Vec<CComponent> = groups
        .into_values()
        .map(|(endogenous, mut exogenous)| {
            exogenous.sort();
            let mut w: BTreeSet<VarId> = endogenous.iter().copied().collect();
            for &v in &endogenous {
                w.extend(model.endogenous_parents(v));
            }
            let mut w_set: Vec<VarId> = w.into_iter().collect();
            w_set.sort_by_key(|v| pos[v.0]);
            CComponent {
                endogenous,
                exogenous,
                w_set,
            }
        })
        .collect();
    // components with endogenous members first, by earliest member
    components.sort_by_key(|c| {
        c.endogenous
            .first()
            .map_or_else(|| (1, c.exogenous[0].0), |v| (0, pos[v.0]))
    });

    let mut w_of = BTreeMap::new();
    for c in &components {
        for &v in &c.endogenous {
            let w: Vec<VarId> = c.w_set.iter().copied().filter(|x| pos[x.0] < pos[v.0]).collect();
            w_of.insert(v, w);
        }
    }
    CComponentDecomposition { components, w_of }
}

/// Frequency estimate of `P(v | w_V)`; `None` marks conditioning
/// configurations that never occur in the data.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCpt {
    pub child: VarId,
    pub child_card: usize,
    pub conditioners: Vec<VarId>,
    pub conditioner_cards: Vec<usize>,
    pub columns: Vec<Option<Vec<f64>>>,
}

impl EmpiricalCpt {
    pub fn prob(&self, child_state: usize, cond: &[usize]) -> Option<f64> {
        self.columns[radix::index(cond, &self.conditioner_cards)]
            .as_ref()
            .map(|col| col[child_state])
    }

    pub fn absent_columns(&self) -> usize {
        self.columns.iter().filter(|c| c.is_none()).count()
    }
}

/// The empirical network: one frequency CPT per endogenous variable and the
/// joint it induces over the endogenous variables (declaration order).
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel {
    pub cpts: BTreeMap<VarId, EmpiricalCpt>,
    pub variables: Vec<VarId>,
    pub cards: Vec<usize>,
    /// Joint over `variables` in mixed-radix order. Renormalized over the
    /// supported configurations when some conditioning column is absent.
    pub joint: Vec<f64>,
    pub has_absent_columns: bool,
}

pub const MAX_JOINT_ENTRIES: usize = 1 << 22;

pub fn empirical_model(model: &Pscm, data: &Dataset) -> Result<EmpiricalModel> {
    data.validate_for(model)?;
    let decomposition = c_components(model);
    let variables = model.endogenous();
    let cards: Vec<usize> = variables.iter().map(|&v| model.card(v)).collect();
    let col_of: BTreeMap<VarId, usize> = data.columns().iter().enumerate().map(|(i, &c)| (c, i)).collect();

    let mut cpts = BTreeMap::new();
    for &v in &variables {
        let cond = decomposition.w_of[&v].clone();
        let cond_cards: Vec<usize> = cond.iter().map(|&c| model.card(c)).collect();
        let n_cols =
            radix::size(&cond_cards).ok_or_else(|| Error::InvalidData("conditioning space overflows".into()))?;
        let card = model.card(v);
        let mut counts = vec![0u64; n_cols * card];
        for (row, n) in data.rows() {
            let cfg: Vec<usize> = cond.iter().map(|c| row[col_of[c]]).collect();
            counts[radix::index(&cfg, &cond_cards) * card + row[col_of[&v]]] += n;
        }
        let columns = counts
            .chunks(card)
            .map(|col| {
                let total: u64 = col.iter().sum();
                (total > 0).then(|| col.iter().map(|&c| c as f64 / total as f64).collect())
            })
            .collect();
        cpts.insert(
            v,
            EmpiricalCpt {
                child: v,
                child_card: card,
                conditioners: cond,
                conditioner_cards: cond_cards,
                columns,
            },
        );
    }

    let size = radix::size(&cards)
        .filter(|&s| s <= MAX_JOINT_ENTRIES)
        .ok_or_else(|| Error::InvalidData("endogenous joint space too large".into()))?;
    let pos: BTreeMap<VarId, usize> = variables.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut joint = Vec::with_capacity(size);
    let mut has_absent = false;
    let mut cfg = vec![0; variables.len()];
    loop {
        let mut p = 1.0;
        for &v in &variables {
            let cpt = &cpts[&v];
            let cond: Vec<usize> = cpt.conditioners.iter().map(|c| cfg[pos[c]]).collect();
            match cpt.prob(cfg[pos[&v]], &cond) {
                Some(q) => p *= q,
                None => {
                    has_absent = true;
                    p = 0.0;
                }
            }
            if p == 0.0 {
                break;
            }
        }
        joint.push(p);
        if !radix::increment(&mut cfg, &cards) {
            break;
        }
    }
    if has_absent {
        let z: f64 = joint.iter().sum();
        joint.iter_mut().for_each(|p| *p /= z);
    }
    Ok(EmpiricalModel {
        cpts,
        variables,
        cards,
        joint,
        has_absent_columns: has_absent,
    })
}

impl EmpiricalModel {
    /// Probability of a complete configuration given in `self.variables` order,
    /// as the product of the frequency CPTs.
    pub fn product_probability(&self, cfg: &[usize]) -> f64 {
        let pos: BTreeMap<VarId, usize> = self.variables.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        self.variables
            .iter()
            .map(|v| {
                let cpt = &self.cpts[v];
                let cond: Vec<usize> = cpt.conditioners.iter().map(|c| cfg[pos[c]]).collect();
                cpt.prob(cfg[pos[v]], &cond).unwrap_or(0.0)
            })
            .product()
    }
}

/// `Σ_v N(v) log(N(v)/N)`: the log-likelihood ceiling of any model on `data`.
pub fn multinomial_bound(data: &Dataset) -> f64 {
    let total = data.total() as f64;
    data.rows()
        .iter()
        .map(|(_, n)| *n as f64 * (*n as f64 / total).ln())
        .collect::<crate::exact_sum::ExactSum>()
        .value()
}

/// Log-likelihood of `data` under its own empirical network; a ceiling for every
/// parameter vector of `model`, attained when the model is expressive enough.
pub fn empirical_network_bound(model: &Pscm, data: &Dataset) -> Result<f64> {
    let decomposition = c_components(model);
    let col_of: BTreeMap<VarId, usize> = data.columns().iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut acc = crate::exact_sum::ExactSum::new();
    for &v in &model.endogenous() {
        let cond = &decomposition.w_of[&v];
        let mut counts: BTreeMap<Vec<usize>, BTreeMap<usize, u64>> = BTreeMap::new();
        for (row, n) in data.rows() {
            let key: Vec<usize> = cond.iter().map(|c| row[col_of[c]]).collect();
            *counts.entry(key).or_default().entry(row[col_of[&v]]).or_default() += n;
        }
        for col in counts.values() {
            let total: u64 = col.values().sum();
            for &n in col.values() {
                acc.add(n as f64 * (n as f64 / total as f64).ln());
            }
        }
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::{build_canonical_pscm, drug_trial_spec, CanonicalOptions, CanonicalSpec};
    use crate::model::Variable;

    fn chain_with_two_confounders() -> Pscm {
        let spec = CanonicalSpec {
            endogenous: (1..=4).map(|i| Variable::endogenous(format!("V{i}"), 2)).collect(),
            arcs: vec![(0, 1), (1, 2), (2, 3)],
            exogenous: vec![("Ua".into(), vec![0, 2]), ("Ub".into(), vec![1, 3])],
        };
        build_canonical_pscm(&spec, &CanonicalOptions::default()).unwrap()
    }

    #[test]
    fn single_shared_exogenous_gives_one_component() {
        let m = build_canonical_pscm(&drug_trial_spec(), &CanonicalOptions::default()).unwrap();
        let d = c_components(&m);
        assert_eq!(d.components.len(), 1);
        assert_eq!(d.components[0].endogenous.len(), 3);
    }

    #[test]
    fn disjoint_chains_give_their_own_components() {
        let spec = CanonicalSpec {
            endogenous: (0..4).map(|i| Variable::endogenous(format!("V{i}"), 2)).collect(),
            arcs: vec![(0, 1), (2, 3)],
            exogenous: vec![("Ua".into(), vec![0, 1]), ("Ub".into(), vec![2, 3])],
        };
        let m = build_canonical_pscm(&spec, &CanonicalOptions::default()).unwrap();
        let d = c_components(&m);
        let sets: Vec<Vec<VarId>> = d.components.iter().map(|c| c.endogenous.clone()).collect();
        assert_eq!(sets, vec![vec![VarId(0), VarId(1)], vec![VarId(2), VarId(3)]]);
    }

    #[test]
    fn interleaved_chain_components_and_w_sets() {
        let m = chain_with_two_confounders();
        let d = c_components(&m);
        let sets: Vec<Vec<VarId>> = d.components.iter().map(|c| c.endogenous.clone()).collect();
        assert_eq!(sets, vec![vec![VarId(0), VarId(2)], vec![VarId(1), VarId(3)]]);
        assert_eq!(d.w_of[&VarId(2)], vec![VarId(0), VarId(1)]);
        assert_eq!(d.w_of[&VarId(0)], vec![]);
        assert_eq!(d.w_of[&VarId(3)], vec![VarId(0), VarId(1), VarId(2)]);

        // brute-force connectivity: V_i ~ V_j iff they share an exogenous parent
        for a in m.endogenous() {
            for b in m.endogenous() {
                let share = m
                    .exogenous_parents(a)
                    .iter()
                    .any(|u| m.exogenous_parents(b).contains(u));
                assert_eq!(share, d.component_of(a) == d.component_of(b));
            }
        }
    }

    #[test]
    fn empirical_cpt_is_the_frequency_ratio() {
        let m = build_canonical_pscm(&drug_trial_spec(), &CanonicalOptions::default()).unwrap();
        // Treatment, Gender, Survival; drug=1, female=0, survived=1
        let d = Dataset::new(
            vec![VarId(0), VarId(1), VarId(2)],
            vec![(vec![1, 0, 1], 378), (vec![1, 0, 0], 1022), (vec![0, 1, 1], 5)],
        )
        .unwrap();
        let e = empirical_model(&m, &d).unwrap();
        let cpt = &e.cpts[&VarId(2)];
        assert_eq!(cpt.conditioners, vec![VarId(1), VarId(0)]);
        assert!((cpt.prob(1, &[0, 1]).unwrap() - 0.27).abs() < 1e-15);
        assert!(cpt.prob(1, &[0, 0]).is_none());
        assert!((e.joint.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_record_gives_point_mass_and_uniform_gives_uniform() {
        let m = chain_with_two_confounders();
        let cols = m.endogenous();
        let d = Dataset::new(cols.clone(), vec![(vec![1, 0, 1, 1], 7)]).unwrap();
        let e = empirical_model(&m, &d).unwrap();
        let idx = radix::index(&[1, 0, 1, 1], &e.cards);
        assert_eq!(e.joint[idx], 1.0);
        assert_eq!(e.joint.iter().sum::<f64>(), 1.0);

        let mut rows = Vec::new();
        let mut cfg = vec![0; 4];
        loop {
            rows.push((cfg.clone(), 1));
            if !radix::increment(&mut cfg, &[2; 4]) {
                break;
            }
        }
        let e = empirical_model(&m, &Dataset::new(cols, rows).unwrap()).unwrap();
        assert!(e.joint.iter().all(|&p| (p - 1.0 / 16.0).abs() < 1e-12));
        assert!(!e.has_absent_columns);
    }
}
