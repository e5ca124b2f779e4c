//! Partially specified structural causal models: variables, structural
//! equations, the induced graph, and graph surgery for interventions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Endogenous,
    Exogenous,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub card: usize,
    pub labels: Option<Vec<String>>,
}

impl Variable {
    pub fn endogenous(name: impl Into<String>, card: usize) -> Self {
        Variable {
            name: name.into(),
            kind: VarKind::Endogenous,
            card,
            labels: None,
        }
    }

    pub fn exogenous(name: impl Into<String>, card: usize) -> Self {
        Variable {
            name: name.into(),
            kind: VarKind::Exogenous,
            card,
            labels: None,
        }
    }

    pub fn with_labels<S: Into<String>>(mut self, labels: impl IntoIterator<Item = S>) -> Self {
        self.labels = Some(labels.into_iter().map(Into::into).collect());
        self
    }

    pub fn is_exogenous(&self) -> bool {
        self.kind == VarKind::Exogenous
    }

    /// Resolve a state given either as a label or as a decimal index.
    pub fn state_index(&self, state: &str) -> Result<usize> {
        if let Some(labels) = &self.labels {
            if let Some(i) = labels.iter().position(|l| l == state) {
                return Ok(i);
            }
        }
        match state.trim().parse::<usize>() {
            Ok(i) if i < self.card => Ok(i),
            _ => Err(Error::InvalidState {
                var: self.name.clone(),
                state: state.to_string(),
            }),
        }
    }

    pub fn state_label(&self, state: usize) -> String {
        match &self.labels {
            Some(labels) => labels[state].clone(),
            None => state.to_string(),
        }
    }
}

/// A deterministic map from the joint input configuration to a child state.
///
/// `table` is indexed in mixed-radix order over `inputs` (see [`crate::radix`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuralEquation {
    pub child: VarId,
    pub inputs: Vec<VarId>,
    pub input_cards: Vec<usize>,
    pub table: Vec<usize>,
}

impl StructuralEquation {
    pub fn new(child: VarId, inputs: Vec<VarId>, input_cards: Vec<usize>, table: Vec<usize>) -> Self {
        StructuralEquation {
            child,
            inputs,
            input_cards,
            table,
        }
    }

    pub fn constant(child: VarId, state: usize) -> Self {
        StructuralEquation::new(child, Vec::new(), Vec::new(), vec![state])
    }

    pub fn eval(&self, input_states: &[usize]) -> usize {
        self.table[radix::index(input_states, &self.input_cards)]
    }

    /// Constant value if every configuration maps to the same state.
    pub fn constant_value(&self) -> Option<usize> {
        let first = *self.table.first()?;
        self.table.iter().all(|&s| s == first).then_some(first)
    }

    pub fn is_surjective(&self, child_card: usize) -> bool {
        let hit: BTreeSet<usize> = self.table.iter().copied().collect();
        hit.len() == child_card
    }

    /// The degenerate CPT `P(child | inputs)` induced by the equation.
    pub fn to_cpt(&self, child_card: usize) -> Cpt {
        let mut values = vec![0.0; self.table.len() * child_card];
        for (cfg, &state) in self.table.iter().enumerate() {
            values[cfg * child_card + state] = 1.0;
        }
        Cpt {
            child: self.child,
            child_card,
            conditioners: self.inputs.clone(),
            conditioner_cards: self.input_cards.clone(),
            values,
        }
    }
}

/// Conditional probability table. `values[cfg * child_card + x]` holds
/// `P(child = x | conditioners = cfg)`, with `cfg` in mixed-radix order.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    pub child: VarId,
    pub child_card: usize,
    pub conditioners: Vec<VarId>,
    pub conditioner_cards: Vec<usize>,
    pub values: Vec<f64>,
}

impl Cpt {
    pub fn get(&self, child_state: usize, conditioner_cfg: &[usize]) -> f64 {
        let col = radix::index(conditioner_cfg, &self.conditioner_cards);
        self.values[col * self.child_card + child_state]
    }

    pub fn column(&self, conditioner_cfg: &[usize]) -> &[f64] {
        let col = radix::index(conditioner_cfg, &self.conditioner_cards);
        &self.values[col * self.child_card..(col + 1) * self.child_card]
    }

    pub fn is_degenerate(&self) -> bool {
        self.values.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    pub fn columns_normalized(&self, tol: f64) -> bool {
        self.values
            .chunks(self.child_card)
            .all(|col| (col.iter().sum::<f64>() - 1.0).abs() <= tol)
    }
}

/// The graph induced by a model's equations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    parents: Vec<Vec<VarId>>,
    children: Vec<Vec<VarId>>,
}

impl Dag {
    pub fn new(n: usize, arcs: &[(VarId, VarId)]) -> Self {
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(p, c) in arcs {
            if !parents[c.0].contains(&p) {
                parents[c.0].push(p);
                children[p.0].push(c);
            }
        }
        Dag { parents, children }
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn parents(&self, v: VarId) -> &[VarId] {
        &self.parents[v.0]
    }

    pub fn children(&self, v: VarId) -> &[VarId] {
        &self.children[v.0]
    }

    pub fn arcs(&self) -> Vec<(VarId, VarId)> {
        let mut out = Vec::new();
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                out.push((p, VarId(c)));
            }
        }
        out.sort();
        out
    }

    /// Kahn's algorithm, smallest id first; `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<VarId>> {
        let n = self.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(VarId(i));
            for c in &self.children[i] {
                indeg[c.0] -= 1;
                if indeg[c.0] == 0 {
                    ready.insert(c.0);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// `targets` together with all their ancestors.
    pub fn ancestral_closure(&self, targets: impl IntoIterator<Item = VarId>) -> BTreeSet<VarId> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<VarId> = targets.into_iter().collect();
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                stack.extend(self.parents(v).iter().copied());
            }
        }
        seen
    }

    pub fn descendants(&self, v: VarId) -> BTreeSet<VarId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            for &c in self.children(x) {
                if seen.insert(c) {
                    stack.push(c);
                }
            }
        }
        seen
    }
}

/// A partially specified structural causal model.
///
/// Exogenous variables are roots; every endogenous variable has exactly one
/// structural equation. Intervened variables carry a constant equation and no
/// inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Pscm {
    variables: Vec<Variable>,
    equations: Vec<Option<StructuralEquation>>,
    interventions: BTreeMap<VarId, usize>,
    dag: Dag,
    topo: Vec<VarId>,
}

impl Pscm {
    pub fn new(
        variables: Vec<Variable>,
        equations: Vec<StructuralEquation>,
        interventions: BTreeMap<VarId, usize>,
    ) -> Result<Self> {
        let invalid = |msg: String| Error::InvalidModel(msg);
        let n = variables.len();
        let mut names = BTreeSet::new();
        for v in &variables {
            if !names.insert(v.name.as_str()) {
                return Err(invalid(format!("duplicate variable '{}'", v.name)));
            }
            if v.card == 0 {
                return Err(invalid(format!("variable '{}' has no states", v.name)));
            }
            if let Some(labels) = &v.labels {
                let distinct: BTreeSet<_> = labels.iter().collect();
                if labels.len() != v.card || distinct.len() != v.card {
                    return Err(invalid(format!(
                        "variable '{}' needs {} distinct labels",
                        v.name, v.card
                    )));
                }
            }
        }

        let mut slots: Vec<Option<StructuralEquation>> = vec![None; n];
        for eq in equations {
            let child = variables
                .get(eq.child.0)
                .ok_or_else(|| invalid(format!("equation for unknown variable {}", eq.child)))?;
            if child.is_exogenous() {
                return Err(invalid(format!("exogenous '{}' cannot have an equation", child.name)));
            }
            if slots[eq.child.0].is_some() {
                return Err(invalid(format!("two equations for '{}'", child.name)));
            }
            let mut seen = BTreeSet::new();
            for (&inp, &card) in eq.inputs.iter().zip(&eq.input_cards) {
                let var = variables
                    .get(inp.0)
                    .ok_or_else(|| invalid(format!("'{}' reads unknown input {inp}", child.name)))?;
                if inp == eq.child || !seen.insert(inp) {
                    return Err(invalid(format!("bad input list for '{}'", child.name)));
                }
                if var.card != card {
                    return Err(invalid(format!(
                        "'{}' declares cardinality {card} for input '{}'",
                        child.name, var.name
                    )));
                }
            }
            if eq.inputs.len() != eq.input_cards.len() {
                return Err(invalid(format!("bad input list for '{}'", child.name)));
            }
            let expected = radix::size(&eq.input_cards)
                .ok_or_else(|| invalid(format!("input space of '{}' overflows", child.name)))?;
            if eq.table.len() != expected {
                return Err(invalid(format!(
                    "table of '{}' has {} entries, expected {expected}",
                    child.name,
                    eq.table.len()
                )));
            }
            if eq.table.iter().any(|&s| s >= child.card) {
                return Err(invalid(format!("table of '{}' has an out-of-range state", child.name)));
            }
            let idx = eq.child.0;
            slots[idx] = Some(eq);
        }
        for (i, v) in variables.iter().enumerate() {
            if !v.is_exogenous() && slots[i].is_none() {
                return Err(invalid(format!("endogenous '{}' has no equation", v.name)));
            }
        }

        for (&v, &state) in &interventions {
            let var = variables
                .get(v.0)
                .ok_or_else(|| Error::InvalidIntervention(format!("unknown variable {v}")))?;
            if var.is_exogenous() {
                return Err(Error::InvalidIntervention(format!("'{}' is exogenous", var.name)));
            }
            if state >= var.card {
                return Err(Error::InvalidIntervention(format!(
                    "state {state} out of range for '{}'",
                    var.name
                )));
            }
            let eq = slots[v.0].as_ref().expect("endogenous has an equation");
            if !eq.inputs.is_empty() || eq.table != [state] {
                return Err(Error::InvalidIntervention(format!(
                    "intervened '{}' must have a constant equation without inputs",
                    var.name
                )));
            }
        }

        let mut arcs = Vec::new();
        for eq in slots.iter().flatten() {
            for &inp in &eq.inputs {
                arcs.push((inp, eq.child));
            }
        }
        let dag = Dag::new(n, &arcs);
        let topo = dag
            .topological_order()
            .ok_or_else(|| invalid("the graph has a directed cycle".into()))?;

        for (i, v) in variables.iter().enumerate() {
            let id = VarId(i);
            if v.is_exogenous() || interventions.contains_key(&id) {
                continue;
            }
            if !dag.parents(id).iter().any(|p| variables[p.0].is_exogenous()) {
                return Err(invalid(format!("endogenous '{}' has no exogenous parent", v.name)));
            }
        }

        Ok(Pscm {
            variables,
            equations: slots,
            interventions,
            dag,
            topo,
        })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn card(&self, id: VarId) -> usize {
        self.variables[id.0].card
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn id_of(&self, name: &str) -> Result<VarId> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .map(VarId)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn name(&self, id: VarId) -> &str {
        &self.variables[id.0].name
    }

    pub fn is_exogenous(&self, id: VarId) -> bool {
        self.variables[id.0].is_exogenous()
    }

    /// Endogenous variables in declaration order.
    pub fn endogenous(&self) -> Vec<VarId> {
        self.ids(VarKind::Endogenous)
    }

    /// Exogenous variables in declaration order.
    pub fn exogenous(&self) -> Vec<VarId> {
        self.ids(VarKind::Exogenous)
    }

    fn ids(&self, kind: VarKind) -> Vec<VarId> {
        (0..self.len())
            .map(VarId)
            .filter(|&v| self.variables[v.0].kind == kind)
            .collect()
    }

    pub fn equation(&self, v: VarId) -> Option<&StructuralEquation> {
        self.equations[v.0].as_ref()
    }

    pub fn equations(&self) -> impl Iterator<Item = &StructuralEquation> {
        self.equations.iter().flatten()
    }

    pub fn interventions(&self) -> &BTreeMap<VarId, usize> {
        &self.interventions
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn parents(&self, v: VarId) -> &[VarId] {
        self.dag.parents(v)
    }

    pub fn children(&self, v: VarId) -> &[VarId] {
        self.dag.children(v)
    }

    pub fn topological_order(&self) -> &[VarId] {
        &self.topo
    }

    /// Endogenous variables in topological order.
    pub fn endogenous_topological(&self) -> Vec<VarId> {
        self.topo.iter().copied().filter(|&v| !self.is_exogenous(v)).collect()
    }

    pub fn exogenous_parents(&self, v: VarId) -> Vec<VarId> {
        self.parents(v)
            .iter()
            .copied()
            .filter(|&p| self.is_exogenous(p))
            .collect()
    }

    pub fn endogenous_parents(&self, v: VarId) -> Vec<VarId> {
        self.parents(v)
            .iter()
            .copied()
            .filter(|&p| !self.is_exogenous(p))
            .collect()
    }

    /// Endogenous variables whose equation misses some child state.
    pub fn non_surjective(&self) -> Vec<VarId> {
        self.equations()
            .filter(|eq| !self.interventions.contains_key(&eq.child))
            .filter(|eq| !eq.is_surjective(self.card(eq.child)))
            .map(|eq| eq.child)
            .collect()
    }

    /// Graph surgery: constant equations for the assigned variables, incoming
    /// arcs removed, assignment recorded.
    pub fn intervene(&self, assignments: &BTreeMap<VarId, usize>) -> Result<Pscm> {
        let mut equations: Vec<StructuralEquation> = self.equations().cloned().collect();
        let mut interventions = self.interventions.clone();
        for (&v, &state) in assignments {
            let var = self
                .variables
                .get(v.0)
                .ok_or_else(|| Error::InvalidIntervention(format!("unknown variable {v}")))?;
            if var.is_exogenous() {
                return Err(Error::InvalidIntervention(format!(
                    "cannot intervene on exogenous '{}'",
                    var.name
                )));
            }
            if state >= var.card {
                return Err(Error::InvalidIntervention(format!(
                    "state {state} out of range for '{}'",
                    var.name
                )));
            }
            let slot = equations.iter_mut().find(|eq| eq.child == v).expect("endogenous");
            *slot = StructuralEquation::constant(v, state);
            interventions.insert(v, state);
        }
        Pscm::new(self.variables.clone(), equations, interventions)
    }

    /// Evaluate all equations for a full exogenous assignment (indexed by `VarId`;
    /// entries for endogenous variables are overwritten).
    pub fn propagate(&self, states: &mut [usize]) {
        let mut buf = Vec::new();
        for &v in &self.topo {
            if let Some(eq) = self.equation(v) {
                buf.clear();
                buf.extend(eq.inputs.iter().map(|i| states[i.0]));
                states[v.0] = eq.eval(&buf);
            }
        }
    }
}

/// One PMF per exogenous variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExoParams {
    pub pmfs: BTreeMap<VarId, Vec<f64>>,
}

impl ExoParams {
    pub fn new(pmfs: BTreeMap<VarId, Vec<f64>>) -> Self {
        ExoParams { pmfs }
    }

    pub fn uniform(model: &Pscm) -> Self {
        let pmfs = model
            .exogenous()
            .into_iter()
            .map(|u| {
                let k = model.card(u);
                (u, vec![1.0 / k as f64; k])
            })
            .collect();
        ExoParams { pmfs }
    }

    pub fn get(&self, u: VarId) -> &[f64] {
        &self.pmfs[&u]
    }

    /// Check coverage, nonnegativity and normalization (within 1e-9).
    pub fn validate(&self, model: &Pscm) -> Result<()> {
        let exo = model.exogenous();
        if self.pmfs.len() != exo.len() {
            return Err(Error::InvalidParams(format!(
                "expected {} exogenous PMFs, got {}",
                exo.len(),
                self.pmfs.len()
            )));
        }
        for u in exo {
            let pmf = self
                .pmfs
                .get(&u)
                .ok_or_else(|| Error::InvalidParams(format!("missing PMF for '{}'", model.name(u))))?;
            if pmf.len() != model.card(u) {
                return Err(Error::InvalidParams(format!(
                    "PMF for '{}' has {} entries, expected {}",
                    model.name(u),
                    pmf.len(),
                    model.card(u)
                )));
            }
            if pmf.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidParams(format!("negative entry for '{}'", model.name(u))));
            }
            if (pmf.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParams(format!(
                    "PMF for '{}' does not sum to 1",
                    model.name(u)
                )));
            }
        }
        Ok(())
    }

    pub fn is_interior(&self) -> bool {
        self.pmfs.values().flatten().all(|&p| p > 0.0)
    }

    /// Total number of free parameters.
    pub fn dimension(&self) -> usize {
        self.pmfs.values().map(|p| p.len() - 1).sum()
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &ExoParams) -> f64 {
        self.pmfs
            .iter()
            .flat_map(|(u, p)| p.iter().zip(&other.pmfs[u]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }
}
