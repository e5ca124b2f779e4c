//! Twin and multi-copy networks: several endogenous layers sharing one
//! exogenous layer.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{Pscm, StructuralEquation, VarId, Variable};

/// A network with one endogenous layer per copy. Copy 0 reuses the base ids,
/// so exogenous parameters of the base model apply unchanged.
#[derive(Debug, Clone)]
pub struct MultiCopyNetwork {
    pub model: Pscm,
    /// For each copy, base endogenous id → id in `model`.
    pub copies: Vec<BTreeMap<VarId, VarId>>,
}

impl MultiCopyNetwork {
    pub fn var(&self, copy: usize, base_var: VarId) -> VarId {
        self.copies[copy][&base_var]
    }
}

/// Build `1 + interventions.len()` copies of the endogenous layer of `base`.
/// Copy 0 is the factual layer (keeping whatever interventions `base` carries);
/// copy `k ≥ 1` is mutilated by `interventions[k-1]`.
pub fn multi_copy_network(base: &Pscm, interventions: &[BTreeMap<VarId, usize>]) -> Result<MultiCopyNetwork> {
    let endo = base.endogenous();
    for assignment in interventions {
        for &v in assignment.keys() {
            if v.0 >= base.len() || base.is_exogenous(v) {
                return Err(Error::InvalidIntervention(format!("cannot intervene on {v}")));
            }
        }
    }
    let mut variables: Vec<Variable> = base.variables().to_vec();
    let mut equations: Vec<StructuralEquation> = base.equations().cloned().collect();
    let mut all_interventions = base.interventions().clone();
    let mut copies = vec![endo.iter().map(|&v| (v, v)).collect::<BTreeMap<_, _>>()];

    for (k, assignment) in interventions.iter().enumerate() {
        let copy_no = k + 1;
        let map: BTreeMap<VarId, VarId> = endo
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, VarId(variables.len() + i)))
            .collect();
        for &v in &endo {
            let mut var = base.var(v).clone();
            var.name = format!("{}#{copy_no}", var.name);
            variables.push(var);
        }
        for &v in &endo {
            let id = map[&v];
            if let Some(&state) = assignment.get(&v) {
                equations.push(StructuralEquation::constant(id, state));
                all_interventions.insert(id, state);
                continue;
            }
            let eq = base.equation(v).expect("endogenous");
            if let Some(&state) = base.interventions().get(&v) {
                all_interventions.insert(id, state);
            }
            let inputs = eq.inputs.iter().map(|i| map.get(i).copied().unwrap_or(*i)).collect();
            equations.push(StructuralEquation::new(
                id,
                inputs,
                eq.input_cards.clone(),
                eq.table.clone(),
            ));
        }
        copies.push(map);
    }
    let model = Pscm::new(variables, equations, all_interventions)?;
    Ok(MultiCopyNetwork { model, copies })
}

/// Twin network of an unmutilated model: the counterfactual copy (copy 1)
/// carries `counterfactual`. Use [`twin_network_with_factual`] to mutilate the
/// factual copy as well.
pub fn twin_network(pscm: &Pscm, counterfactual: &BTreeMap<VarId, usize>) -> Result<MultiCopyNetwork> {
    if !pscm.interventions().is_empty() {
        return Err(Error::InvalidIntervention(
            "the factual copy carries interventions; use twin_network_with_factual".into(),
        ));
    }
    multi_copy_network(pscm, std::slice::from_ref(counterfactual))
}

pub fn twin_network_with_factual(
    pscm: &Pscm,
    factual: &BTreeMap<VarId, usize>,
    counterfactual: &BTreeMap<VarId, usize>,
) -> Result<MultiCopyNetwork> {
    let base = pscm.intervene(factual)?;
    multi_copy_network(&base, std::slice::from_ref(counterfactual))
}
