//! Canonical (conservative) specification: each exogenous variable indexes
//! joint choices of deterministic functions for its endogenous children.
//!
//! A function `f: Ω_pa -> Ω_V` is numbered by reading its table (parent
//! configurations in mixed-radix order) as a base-`|Ω_V|` number, first
//! configuration most significant. For a binary `V` with one binary parent this
//! gives `0 = const-0, 1 = identity, 2 = negation, 3 = const-1`. An exogenous
//! state indexes the tuple of its children's functions, children taken in
//! topological order with the first child most significant.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Dag, Pscm, StructuralEquation, VarId, Variable};

pub const DEFAULT_CARDINALITY_CAP: usize = 1024;

/// How the set of function tuples indexed by one exogenous variable is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum Reduction {
    /// Every joint function; rejected if the count exceeds the cap.
    Full,
    /// At most `max_states` tuples drawn uniformly without replacement.
    Sample { max_states: usize, seed: u64 },
    /// Explicit indices into the full enumeration.
    Select(Vec<u128>),
}

#[derive(Debug, Clone)]
pub struct CanonicalSpec {
    /// Endogenous variables (kind is forced to endogenous).
    pub endogenous: Vec<Variable>,
    /// Arcs between endogenous variables, as indices into `endogenous`.
    pub arcs: Vec<(usize, usize)>,
    /// Exogenous roots with their endogenous children (indices into `endogenous`).
    pub exogenous: Vec<(String, Vec<usize>)>,
}

#[derive(Debug, Clone)]
pub struct CanonicalOptions {
    pub cap: usize,
    /// Per-exogenous reduction; missing entries use [`Reduction::Full`].
    pub reductions: BTreeMap<String, Reduction>,
}

impl Default for CanonicalOptions {
    fn default() -> Self {
        CanonicalOptions {
            cap: DEFAULT_CARDINALITY_CAP,
            reductions: BTreeMap::new(),
        }
    }
}

/// Number of functions from a space of `n_cfg` configurations to `card` states.
pub fn function_count(card: usize, n_cfg: usize) -> Option<u128> {
    (card as u128).checked_pow(u32::try_from(n_cfg).ok()?)
}

/// Table of the `index`-th function (see module docs).
pub fn function_table(mut index: u128, card: usize, n_cfg: usize) -> Vec<usize> {
    let mut table = vec![0; n_cfg];
    for slot in table.iter_mut().rev() {
        *slot = (index % card as u128) as usize;
        index /= card as u128;
    }
    table
}

struct ChildInfo {
    card: usize,
    n_cfg: usize,
    count: Option<u128>,
}

pub fn build_canonical_pscm(spec: &CanonicalSpec, opts: &CanonicalOptions) -> Result<Pscm> {
    let n_endo = spec.endogenous.len();
    let invalid = |m: String| Error::InvalidModel(m);
    for &(p, c) in &spec.arcs {
        if p >= n_endo || c >= n_endo || p == c {
            return Err(invalid(format!("bad arc ({p}, {c})")));
        }
    }
    let endo_dag = Dag::new(
        n_endo,
        &spec.arcs.iter().map(|&(p, c)| (VarId(p), VarId(c))).collect::<Vec<_>>(),
    );
    let topo = endo_dag
        .topological_order()
        .ok_or_else(|| invalid("endogenous graph has a cycle".into()))?;
    let topo_pos: Vec<usize> = {
        let mut pos = vec![0; n_endo];
        for (i, v) in topo.iter().enumerate() {
            pos[v.0] = i;
        }
        pos
    };

    let mut owner: Vec<Option<usize>> = vec![None; n_endo];
    for (k, (name, children)) in spec.exogenous.iter().enumerate() {
        if children.is_empty() {
            return Err(invalid(format!("exogenous '{name}' has no children")));
        }
        for &c in children {
            if c >= n_endo {
                return Err(invalid(format!("exogenous '{name}' has unknown child {c}")));
            }
            if owner[c].replace(k).is_some() {
                return Err(invalid(format!(
                    "'{}' has more than one exogenous parent",
                    spec.endogenous[c].name
                )));
            }
        }
    }
    if let Some(c) = owner.iter().position(Option::is_none) {
        return Err(invalid(format!(
            "'{}' has no exogenous parent",
            spec.endogenous[c].name
        )));
    }

    let parents: Vec<Vec<usize>> = (0..n_endo)
        .map(|c| {
            let mut ps: Vec<usize> = endo_dag.parents(VarId(c)).iter().map(|p| p.0).collect();
            ps.sort();
            ps
        })
        .collect();
    let info: Vec<ChildInfo> = (0..n_endo)
        .map(|c| {
            let card = spec.endogenous[c].card;
            let n_cfg = parents[c]
                .iter()
                .map(|&p| spec.endogenous[p].card)
                .try_fold(1usize, |a, b| a.checked_mul(b))
                .unwrap_or(usize::MAX);
            ChildInfo {
                card,
                n_cfg,
                count: function_count(card, n_cfg),
            }
        })
        .collect();

    // tuples[k][state][j] = table of the j-th child of exogenous k
    let mut tuples: Vec<Vec<Vec<Vec<usize>>>> = Vec::with_capacity(spec.exogenous.len());
    let mut ordered_children: Vec<Vec<usize>> = Vec::with_capacity(spec.exogenous.len());
    for (name, children) in &spec.exogenous {
        let mut kids = children.clone();
        kids.sort_by_key(|&c| topo_pos[c]);
        let counts: Vec<Option<u128>> = kids.iter().map(|&c| info[c].count).collect();
        let total: Option<u128> = counts.iter().try_fold(1u128, |acc, c| acc.checked_mul((*c)?));
        let reduction = opts.reductions.get(name).cloned().unwrap_or(Reduction::Full);
        let tables_of = |i: u128| -> Vec<Vec<usize>> {
            split_index(i, &counts)
                .into_iter()
                .zip(&kids)
                .map(|(f, &c)| function_table(f, info[c].card, info[c].n_cfg))
                .collect()
        };
        let chosen: Vec<Vec<Vec<usize>>> = match reduction {
            Reduction::Full => {
                let total = match total {
                    Some(t) if t <= opts.cap as u128 => t,
                    _ => {
                        return Err(Error::CardinalityCap {
                            var: name.clone(),
                            required: total.map_or_else(|| "more than 2^128".into(), |t| t.to_string()),
                            cap: opts.cap,
                        })
                    }
                };
                (0..total).map(tables_of).collect()
            }
            Reduction::Select(indices) => {
                let total = total.ok_or_else(|| invalid(format!("enumeration of '{name}' overflows")))?;
                let mut out = Vec::with_capacity(indices.len());
                let mut seen = BTreeSet::new();
                for i in indices {
                    if i >= total || !seen.insert(i) {
                        return Err(invalid(format!("bad selected state {i} for '{name}'")));
                    }
                    out.push(tables_of(i));
                }
                out
            }
            Reduction::Sample { max_states, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                match total {
                    Some(t) if t <= max_states as u128 => (0..t).map(tables_of).collect(),
                    Some(t) if t <= 1 << 24 => {
                        let mut picked: Vec<usize> = sample_indices(&mut rng, t as usize, max_states).into_vec();
                        picked.sort_unstable();
                        picked.into_iter().map(|i| tables_of(i as u128)).collect()
                    }
                    _ => sample_tables(max_states, &kids, &info, &mut rng),
                }
            }
        };
        if chosen.is_empty() {
            return Err(invalid(format!("exogenous '{name}' has no states")));
        }
        if chosen.len() > opts.cap {
            return Err(Error::CardinalityCap {
                var: name.clone(),
                required: chosen.len().to_string(),
                cap: opts.cap,
            });
        }
        tuples.push(chosen);
        ordered_children.push(kids);
    }

    // Variables: endogenous in declaration order, then exogenous.
    let mut variables: Vec<Variable> = spec
        .endogenous
        .iter()
        .map(|v| Variable {
            kind: crate::model::VarKind::Endogenous,
            ..v.clone()
        })
        .collect();
    for (k, (name, _)) in spec.exogenous.iter().enumerate() {
        variables.push(Variable::exogenous(name.clone(), tuples[k].len()));
    }

    let mut equations = Vec::with_capacity(n_endo);
    for c in 0..n_endo {
        let k = owner[c].expect("checked above");
        let slot = ordered_children[k]
            .iter()
            .position(|&x| x == c)
            .expect("child of owner");
        let u_id = VarId(n_endo + k);
        let u_card = tuples[k].len();
        let n_cfg = info[c].n_cfg;
        let mut table = Vec::with_capacity(n_cfg * u_card);
        for cfg in 0..n_cfg {
            for t in &tuples[k] {
                table.push(t[slot][cfg]);
            }
        }
        let mut inputs: Vec<VarId> = parents[c].iter().map(|&p| VarId(p)).collect();
        let mut input_cards: Vec<usize> = parents[c].iter().map(|&p| spec.endogenous[p].card).collect();
        inputs.push(u_id);
        input_cards.push(u_card);
        equations.push(StructuralEquation::new(VarId(c), inputs, input_cards, table));
    }
    Pscm::new(variables, equations, BTreeMap::new())
}

fn split_index(mut i: u128, counts: &[Option<u128>]) -> Vec<u128> {
    let mut out = vec![0; counts.len()];
    for (slot, c) in out.iter_mut().zip(counts).rev() {
        let c = c.expect("finite when enumerating");
        *slot = i % c;
        i /= c;
    }
    out
}

/// Uniform draws of whole tables, repeats discarded (sampling without
/// replacement when the space is too large to index).
fn sample_tables(max_states: usize, kids: &[usize], info: &[ChildInfo], rng: &mut ChaCha8Rng) -> Vec<Vec<Vec<usize>>> {
    let mut seen = BTreeSet::new();
    while seen.len() < max_states {
        let t: Vec<Vec<usize>> = kids
            .iter()
            .map(|&c| (0..info[c].n_cfg).map(|_| rng.random_range(0..info[c].card)).collect())
            .collect();
        seen.insert(t);
    }
    seen.into_iter().collect()
}

/// The three-variable model with `Gender -> Treatment`, `Gender -> Survival`,
/// `Treatment -> Survival` and one exogenous variable shared by all three.
pub fn drug_trial_spec() -> CanonicalSpec {
    CanonicalSpec {
        endogenous: vec![
            Variable::endogenous("Treatment", 2).with_labels(["no drug", "drug"]),
            Variable::endogenous("Gender", 2).with_labels(["female", "male"]),
            Variable::endogenous("Survival", 2).with_labels(["dead", "survived"]),
        ],
        arcs: vec![(1, 0), (0, 2), (1, 2)],
        exogenous: vec![("U".into(), vec![0, 1, 2])],
    }
}

/// The drug-trial model with Gender marginalised: `Treatment -> Survival` and
/// one shared exogenous variable.
pub fn drug_trial_marginal_spec() -> CanonicalSpec {
    CanonicalSpec {
        endogenous: vec![
            Variable::endogenous("Treatment", 2).with_labels(["no drug", "drug"]),
            Variable::endogenous("Survival", 2).with_labels(["dead", "survived"]),
        ],
        arcs: vec![(0, 1)],
        exogenous: vec![("U".into(), vec![0, 1])],
    }
}
