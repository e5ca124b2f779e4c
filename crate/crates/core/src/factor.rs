//! Dense potentials over discrete variables.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::VarId;
use crate::radix;

/// Largest number of entries a single factor may hold.
pub const MAX_FACTOR_ENTRIES: usize = 1 << 26;

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    scope: Vec<VarId>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Factor {
    pub fn new(scope: Vec<VarId>, cards: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n = checked_size(&cards)?;
        if scope.len() != cards.len() || values.len() != n {
            return Err(Error::InvalidModel(format!(
                "factor over {} variables with {} values, expected {n}",
                scope.len(),
                values.len()
            )));
        }
        Ok(Factor { scope, cards, values })
    }

    pub fn scalar(value: f64) -> Self {
        Factor {
            scope: Vec::new(),
            cards: Vec::new(),
            values: vec![value],
        }
    }

    pub fn ones(scope: Vec<VarId>, cards: Vec<usize>) -> Result<Self> {
        let n = checked_size(&cards)?;
        Factor::new(scope, cards, vec![1.0; n])
    }

    pub fn scope(&self) -> &[VarId] {
        &self.scope
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn contains(&self, v: VarId) -> bool {
        self.scope.contains(&v)
    }

    pub fn get(&self, config: &[usize]) -> f64 {
        self.values[radix::index(config, &self.cards)]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn product(&self, other: &Factor) -> Result<Factor> {
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        for (&v, &c) in other.scope.iter().zip(&other.cards) {
            if !scope.contains(&v) {
                scope.push(v);
                cards.push(c);
            }
        }
        let n = checked_size(&cards)?;
        let stride_in = |f: &Factor| -> Vec<usize> {
            let own = radix::strides(&f.cards);
            scope
                .iter()
                .map(|v| f.scope.iter().position(|x| x == v).map_or(0, |i| own[i]))
                .collect()
        };
        let (sa, sb) = (stride_in(self), stride_in(other));
        let mut values = Vec::with_capacity(n);
        let mut cfg = vec![0; scope.len()];
        let (mut ia, mut ib) = (0usize, 0usize);
        for _ in 0..n {
            values.push(self.values[ia] * other.values[ib]);
            // odometer step, last digit fastest, keeping both offsets in sync
            for d in (0..cfg.len()).rev() {
                cfg[d] += 1;
                ia += sa[d];
                ib += sb[d];
                if cfg[d] < cards[d] {
                    break;
                }
                ia -= sa[d] * cards[d];
                ib -= sb[d] * cards[d];
                cfg[d] = 0;
            }
        }
        Ok(Factor { scope, cards, values })
    }

    pub fn sum_out(&self, v: VarId) -> Factor {
        let Some(pos) = self.scope.iter().position(|&x| x == v) else {
            return self.clone();
        };
        let card = self.cards[pos];
        let inner: usize = self.cards[pos + 1..].iter().product();
        let outer: usize = self.cards[..pos].iter().product();
        let mut values = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..card {
                let base = (o * card + k) * inner;
                let dst = &mut values[o * inner..(o + 1) * inner];
                for (d, s) in dst.iter_mut().zip(&self.values[base..base + inner]) {
                    *d += s;
                }
            }
        }
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(pos);
        cards.remove(pos);
        Factor { scope, cards, values }
    }

    /// Restrict to the given evidence, dropping the observed variables.
    pub fn reduce(&self, evidence: &BTreeMap<VarId, usize>) -> Factor {
        if !self.scope.iter().any(|v| evidence.contains_key(v)) {
            return self.clone();
        }
        let strides = radix::strides(&self.cards);
        let mut offset = 0;
        let mut scope = Vec::new();
        let mut cards = Vec::new();
        let mut kept_strides = Vec::new();
        for (i, v) in self.scope.iter().enumerate() {
            match evidence.get(v) {
                Some(&s) => offset += s * strides[i],
                None => {
                    scope.push(*v);
                    cards.push(self.cards[i]);
                    kept_strides.push(strides[i]);
                }
            }
        }
        let n: usize = cards.iter().product();
        let mut values = Vec::with_capacity(n);
        let mut cfg = vec![0; cards.len()];
        loop {
            let idx = offset + cfg.iter().zip(&kept_strides).map(|(x, s)| x * s).sum::<usize>();
            values.push(self.values[idx]);
            if !radix::increment(&mut cfg, &cards) {
                break;
            }
        }
        Factor { scope, cards, values }
    }

    /// Reorder the scope; `order` must be a permutation of it.
    pub fn permute(&self, order: &[VarId]) -> Factor {
        debug_assert_eq!(order.len(), self.scope.len());
        if order == self.scope.as_slice() {
            return self.clone();
        }
        let strides = radix::strides(&self.cards);
        let src: Vec<usize> = order
            .iter()
            .map(|v| self.scope.iter().position(|x| x == v).expect("permutation of scope"))
            .collect();
        let cards: Vec<usize> = src.iter().map(|&i| self.cards[i]).collect();
        let mut values = Vec::with_capacity(self.values.len());
        let mut cfg = vec![0; cards.len()];
        loop {
            let idx: usize = cfg.iter().zip(&src).map(|(x, &i)| x * strides[i]).sum();
            values.push(self.values[idx]);
            if !radix::increment(&mut cfg, &cards) {
                break;
            }
        }
        Factor {
            scope: order.to_vec(),
            cards,
            values,
        }
    }

    pub fn normalized(mut self) -> (Factor, f64) {
        let z = self.total();
        if z > 0.0 {
            for v in &mut self.values {
                *v /= z;
            }
        }
        (self, z)
    }
}

fn checked_size(cards: &[usize]) -> Result<usize> {
    match radix::size(cards) {
        Some(n) if n <= MAX_FACTOR_ENTRIES => Ok(n),
        _ => Err(Error::FactorTooLarge(
            cards.iter().fold(1u128, |a, &c| a.saturating_mul(c as u128)),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(scope: &[usize], cards: &[usize], values: &[f64]) -> Factor {
        Factor::new(
            scope.iter().map(|&i| VarId(i)).collect(),
            cards.to_vec(),
            values.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn product_matches_pointwise_definition() {
        let a = f(&[0, 1], &[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let b = f(&[1, 2], &[3, 2], &[1., 10., 100., 1000., 0.5, 0.25]);
        let p = a.product(&b).unwrap();
        assert_eq!(p.scope(), &[VarId(0), VarId(1), VarId(2)]);
        for x in 0..2 {
            for y in 0..3 {
                for z in 0..2 {
                    assert_eq!(p.get(&[x, y, z]), a.get(&[x, y]) * b.get(&[y, z]));
                }
            }
        }
    }

    #[test]
    fn sum_out_and_reduce() {
        let a = f(&[0, 1], &[2, 3], &[1., 2., 3., 4., 5., 6.]);
        assert_eq!(a.sum_out(VarId(1)).values(), &[6., 15.]);
        assert_eq!(a.sum_out(VarId(0)).values(), &[5., 7., 9.]);
        let r = a.reduce(&BTreeMap::from([(VarId(1), 2)]));
        assert_eq!(r.scope(), &[VarId(0)]);
        assert_eq!(r.values(), &[3., 6.]);
    }

    #[test]
    fn permute_preserves_entries() {
        let a = f(&[0, 1, 2], &[2, 3, 2], &(0..12).map(f64::from).collect::<Vec<_>>());
        let p = a.permute(&[VarId(2), VarId(0), VarId(1)]);
        for x in 0..2 {
            for y in 0..3 {
                for z in 0..2 {
                    assert_eq!(p.get(&[z, x, y]), a.get(&[x, y, z]));
                }
            }
        }
    }

    #[test]
    fn oversized_factors_are_rejected() {
        let err = Factor::ones(vec![VarId(0), VarId(1)], vec![1 << 14, 1 << 14]).unwrap_err();
        assert!(matches!(err, Error::FactorTooLarge(_)));
    }
}
