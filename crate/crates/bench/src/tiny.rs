//! Small models on which the grid oracle is affordable (step 0.02).

use std::collections::BTreeMap;

use emcc_core::canonical::{build_canonical_pscm, CanonicalOptions, CanonicalSpec, Reduction};
use emcc_core::emcc::{initial_params, InitScheme};
use emcc_core::queries::{PnsSpec, Query};
use emcc_core::{ExoParams, Pscm, Result, Study, Variable};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::oracle::exact_study;

#[derive(Debug, Clone)]
pub struct TinyCase {
    pub name: String,
    pub model: Pscm,
    /// Parameters the data were drawn from.
    pub theta: ExoParams,
    /// Observational study, then the two trial arms on the cause.
    pub studies: Vec<Study>,
    pub query: Query,
    /// Whether the query is point-identified from the studies.
    pub identifiable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TinyKind {
    /// `X -> Y`, separate exogenous parents with 2 and 4 states.
    Unconfounded,
    /// As `Unconfounded` without the negation function for `Y`, which makes
    /// PNS identifiable from trial data.
    Monotone,
    /// `Z -> X -> Y` with `X` and `Y` sharing a 4-state exogenous parent
    /// (a random subset of the 16 joint functions).
    Instrumental,
}

fn xy_spec() -> CanonicalSpec {
    CanonicalSpec {
        endogenous: vec![Variable::endogenous("X", 2), Variable::endogenous("Y", 2)],
        arcs: vec![(0, 1)],
        exogenous: vec![("UX".into(), vec![0]), ("UY".into(), vec![1])],
    }
}

fn instrumental_spec() -> CanonicalSpec {
    CanonicalSpec {
        endogenous: vec![
            Variable::endogenous("Z", 2),
            Variable::endogenous("X", 2),
            Variable::endogenous("Y", 2),
        ],
        arcs: vec![(0, 1), (1, 2)],
        exogenous: vec![("UZ".into(), vec![0]), ("U".into(), vec![1, 2])],
    }
}

/// One tiny case with `records` records per study, counts proportional to
/// the exact distributions (observational and both trial arms on `X`).
pub fn tiny_case(kind: TinyKind, seed: u64, records: u64) -> Result<TinyCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (spec, reductions, name) = match kind {
        TinyKind::Unconfounded => (xy_spec(), BTreeMap::new(), "unconfounded"),
        TinyKind::Monotone => (
            xy_spec(),
            // const-0, identity, const-1
            BTreeMap::from([("UY".to_string(), Reduction::Select(vec![0, 1, 3]))]),
            "monotone",
        ),
        TinyKind::Instrumental => {
            let mut picked: Vec<u128> = sample_indices(&mut rng, 16, 4).into_iter().map(|i| i as u128).collect();
            picked.sort_unstable();
            (
                instrumental_spec(),
                BTreeMap::from([("U".to_string(), Reduction::Select(picked))]),
                "instrumental",
            )
        }
    };
    let model = build_canonical_pscm(
        &spec,
        &CanonicalOptions {
            reductions,
            ..Default::default()
        },
    )?;
    let theta = initial_params(&model, &InitScheme::Dirichlet { concentration: 1.0 }, &mut rng);
    let cause = model.id_of("X")?;
    let effect = model.id_of("Y")?;
    let studies = [
        BTreeMap::new(),
        BTreeMap::from([(cause, 0)]),
        BTreeMap::from([(cause, 1)]),
    ]
    .iter()
    .map(|i| exact_study(&model, &theta, i, records))
    .collect::<Result<Vec<_>>>()?;
    Ok(TinyCase {
        name: format!("{name}-{seed}"),
        studies,
        query: Query::Pns(PnsSpec::new(cause, effect)),
        identifiable: kind == TinyKind::Monotone,
        model,
        theta,
    })
}

/// `n` cases cycling through the kinds, seeds `seed, seed + 1, ...`.
pub fn tiny_cases(n: usize, seed: u64, records: u64) -> Result<Vec<TinyCase>> {
    let kinds = [TinyKind::Unconfounded, TinyKind::Instrumental, TinyKind::Monotone];
    (0..n)
        .map(|i| tiny_case(kinds[i % kinds.len()], seed + i as u64, records))
        .collect()
}
