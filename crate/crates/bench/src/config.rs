use emcc_core::data::total_records;
use emcc_core::emcc::{EmConfig, InitScheme};
use emcc_core::{Error, Result, Study};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n_models: usize,
    /// Inclusive range for the total number of graph nodes.
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Arc probability of the random graph; `None` picks
    /// [`calibrated_edge_probability`] for each sampled node count.
    pub edge_probability: Option<f64>,
    pub exogenous_cardinality_cap: usize,
    /// Observational sample size.
    pub n1: u64,
    /// Interventional sample size is `n2_factor · n1`, split over both arms.
    pub n2_factor: u64,
    /// Factor applied to `n1` after a compatibility failure.
    pub growth_factor: f64,
    /// Ceiling on `n1 + n2`.
    pub max_total_records: u64,
    /// Compatibility tolerance, used when `em.compat_tol` is unset.
    pub compat: CompatRule,
    /// Retained parameter vectors must come within `retain_rate · records`
    /// of the best log-likelihood reached on the same fit.
    pub retain_rate: f64,
    /// Intervals narrower than this count as identified and are not recorded.
    pub min_width: f64,
    /// Slack for the interval inclusion check.
    pub inclusion_slack: f64,
    pub em: EmConfig,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n_models: 130,
            min_nodes: 5,
            max_nodes: 15,
            edge_probability: None,
            exogenous_cardinality_cap: 64,
            n1: 1000,
            n2_factor: 2,
            growth_factor: 1.5,
            max_total_records: 5500,
            compat: CompatRule::default(),
            retain_rate: 1e-4,
            min_width: 1e-3,
            inclusion_slack: 0.02,
            em: EmConfig {
                restarts: 100,
                tol: 1e-8,
                max_iter: 500,
                seed: 0,
                init: InitScheme::Dirichlet { concentration: 1.0 },
                compat_tol: None,
            },
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.min_nodes < 2 || self.min_nodes > self.max_nodes {
            return bad("need 2 <= min_nodes <= max_nodes");
        }
        if let Some(p) = self.edge_probability {
            if !(0.0..=1.0).contains(&p) {
                return bad("edge_probability must lie in [0, 1]");
            }
        }
        if self.exogenous_cardinality_cap == 0 {
            return bad("exogenous_cardinality_cap must be positive");
        }
        if self.n1 == 0 {
            return bad("n1 must be at least 1");
        }
        if self.n2_factor == 0 {
            return bad("n2_factor must be at least 1");
        }
        if !(self.growth_factor > 1.0) {
            return bad("growth_factor must exceed 1");
        }
        if self.max_total_records < self.n1 * (1 + self.n2_factor) {
            return bad("max_total_records is below the starting sample size");
        }
        if !(self.compat.scale() >= 0.0)
            || !(self.retain_rate >= 0.0)
            || !(self.min_width >= 0.0)
            || !(self.inclusion_slack >= 0.0)
        {
            return bad("rates and widths must be nonnegative");
        }
        self.em.validate()
    }

    pub fn n2(&self, n1: u64) -> u64 {
        self.n2_factor * n1
    }

    pub fn edge_probability_for(&self, n_nodes: usize) -> f64 {
        self.edge_probability
            .unwrap_or_else(|| calibrated_edge_probability(n_nodes))
    }

    /// EM settings for a fit on `studies`.
    pub fn em_for(&self, studies: &[Study], seed: u64) -> EmConfig {
        EmConfig {
            seed,
            compat_tol: Some(self.em.compat_tol.unwrap_or_else(|| self.compat.tolerance(studies))),
            ..self.em.clone()
        }
    }
}

/// How the compatibility tolerance of a benchmark fit is derived.
///
/// Data sampled from the true model are compatible only up to sampling noise:
/// twice the likelihood gap behaves roughly like a chi-square variable whose
/// degrees of freedom are bounded by the number of distinct records. A
/// tolerance proportional to the record count is either too loose for small
/// models or too tight for large ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompatRule {
    /// `rate · records`.
    PerRecord { rate: f64 },
    /// `(d + sds · sqrt(2 d)) / 2`, `d` the number of distinct records summed
    /// over studies: mean plus `sds` standard deviations of half a
    /// chi-square variable with `d` degrees of freedom.
    ChiSquare { sds: f64 },
}

impl Default for CompatRule {
    fn default() -> Self {
        CompatRule::ChiSquare { sds: 4.0 }
    }
}

impl CompatRule {
    fn scale(&self) -> f64 {
        match *self {
            CompatRule::PerRecord { rate } => rate,
            CompatRule::ChiSquare { sds } => sds,
        }
    }

    pub fn tolerance(&self, studies: &[Study]) -> f64 {
        match *self {
            CompatRule::PerRecord { rate } => rate * total_records(studies) as f64,
            CompatRule::ChiSquare { sds } => {
                let d = studies.iter().map(|s| s.data.rows().len()).sum::<usize>() as f64;
                (d + sds * (2.0 * d).sqrt()) / 2.0
            }
        }
    }
}

/// Expected number of nodes with at least one parent when each of the
/// `n(n-1)/2` forward arcs is present with probability `p`.
pub fn expected_endogenous(n: usize, p: f64) -> f64 {
    (0..n).map(|j| 1.0 - (1.0 - p).powi(j as i32)).sum()
}

/// Smallest multiple of 0.05 giving at least `max(3, n/2)` expected
/// endogenous nodes.
pub fn calibrated_edge_probability(n: usize) -> f64 {
    let target = (n as f64 / 2.0).max(3.0);
    (1..=20)
        .map(|k| k as f64 * 0.05)
        .find(|&p| expected_endogenous(n, p) >= target)
        .unwrap_or(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibrated_probability_meets_the_target() {
        for n in 2..=20 {
            let p = calibrated_edge_probability(n);
            let target = (n as f64 / 2.0).max(3.0);
            if expected_endogenous(n, 1.0) >= target {
                assert!(expected_endogenous(n, p) >= target);
                if p > 0.05 + 1e-12 {
                    assert!(expected_endogenous(n, p - 0.05) < target);
                }
            }
        }
        assert_eq!(expected_endogenous(4, 1.0), 3.0);
    }

    #[test]
    fn empty_json_gives_defaults() {
        let c: BenchConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, BenchConfig::default());
        c.validate().unwrap();
        assert!(serde_json::from_str::<BenchConfig>(r#"{"nmodels": 3}"#).is_err());
    }

    #[test]
    fn tolerance_rules() {
        use emcc_core::{Dataset, VarId};
        let data = Dataset::new(vec![VarId(0)], vec![(vec![0], 10), (vec![1], 40)]).unwrap();
        let studies = vec![Study::observational(data.clone()), Study::observational(data)];
        let per_record = BenchConfig {
            compat: CompatRule::PerRecord { rate: 0.01 },
            ..BenchConfig::default()
        };
        assert_eq!(per_record.em_for(&studies, 7).compat_tol, Some(1.0));
        assert_eq!(per_record.em_for(&studies, 7).seed, 7);
        // d = 4: (4 + 4 * sqrt(8)) / 2
        let tol = BenchConfig::default().em_for(&studies, 0).compat_tol.unwrap();
        assert!((tol - (2.0 + 2.0 * 8f64.sqrt())).abs() < 1e-12);
        let c: BenchConfig = serde_json::from_str(r#"{"compat": {"rule": "per_record", "rate": 0.5}}"#).unwrap();
        assert_eq!(c.compat, CompatRule::PerRecord { rate: 0.5 });
    }
}
