use std::collections::BTreeMap;

use emcc_bench::sample::draw;
use emcc_bench::{sample_model, sample_studies, tiny_case, BenchConfig, TinyKind};
use emcc_core::inference;
use emcc_core::io::model_to_json;
use emcc_core::ExoParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn sampled_models_pass_a_structural_audit() {
    let cfg = BenchConfig::default();
    for seed in 0..100 {
        let s = sample_model(&cfg, seed).unwrap();
        let m = &s.model;
        assert!((cfg.min_nodes..=cfg.max_nodes).contains(&s.n_nodes));
        s.theta.validate(m).unwrap();
        assert!(s.theta.is_interior(), "seed {seed}");
        for u in m.exogenous() {
            assert!(m.card(u) <= cfg.exogenous_cardinality_cap);
            assert!(!m.children(u).is_empty());
        }
        for v in m.endogenous() {
            assert_eq!(m.card(v), 2);
            assert_eq!(m.exogenous_parents(v).len(), 1);
            let eq = m.equation(v).unwrap();
            // total: one entry per input configuration, each a valid state
            let n_cfg: usize = eq.inputs.iter().map(|&i| m.card(i)).product();
            assert_eq!(eq.table.len(), n_cfg);
            assert!(eq.table.iter().all(|&x| x < 2));
        }
        let endo = m.endogenous();
        assert_eq!(s.cause, endo[0]);
        let pos = |v| m.topological_order().iter().position(|&x| x == v).unwrap();
        for v in &endo {
            for p in m.endogenous_parents(*v) {
                assert!(pos(p) < pos(*v) && p < *v);
            }
        }
        assert_eq!(s.effect, *endo.last().unwrap());
        assert!(m.endogenous_parents(s.cause).is_empty());
        assert!(m.dag().ancestral_closure([s.effect]).contains(&s.cause), "seed {seed}");
    }
}

#[test]
fn model_sampling_is_deterministic() {
    let cfg = BenchConfig::default();
    for seed in [3, 17] {
        let a = sample_model(&cfg, seed).unwrap();
        let b = sample_model(&cfg, seed).unwrap();
        assert_eq!(model_to_json(&a.model), model_to_json(&b.model));
        assert_eq!(a.theta, b.theta);
    }
}

#[test]
fn no_arcs_means_no_valid_graph() {
    let cfg = BenchConfig {
        edge_probability: Some(0.0),
        ..BenchConfig::default()
    };
    assert!(sample_model(&cfg, 0).is_err());
}

#[test]
fn point_mass_gives_identical_records() {
    let s = sample_model(&BenchConfig::default(), 5).unwrap();
    let point = ExoParams::new(
        s.model
            .exogenous()
            .into_iter()
            .map(|u| {
                let mut p = vec![0.0; s.model.card(u)];
                p[0] = 1.0;
                (u, p)
            })
            .collect(),
    );
    let data = draw(&s.model, &point, 50, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(data.rows().len(), 1);
    assert_eq!(data.total(), 50);
}

#[test]
fn observational_frequencies_approach_the_exact_joint() {
    let case = tiny_case(TinyKind::Instrumental, 4, 10).unwrap();
    let m = &case.model;
    let endo = m.endogenous();
    let cause = m.id_of("X").unwrap();
    let s = sample_studies(m, &case.theta, cause, 100_000, 2, 9).unwrap();
    let exact = inference::query(m, &case.theta, &endo, &BTreeMap::new()).unwrap();
    let data = s.observational.data.reordered(&endo).unwrap();
    let mut empirical = vec![0.0; exact.values().len()];
    for (row, n) in data.rows() {
        let i = row.iter().fold(0, |acc, &x| acc * 2 + x);
        empirical[i] += *n as f64 / 100_000.0;
    }
    let tv: f64 = exact
        .values()
        .iter()
        .zip(&empirical)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.01, "total variation {tv}");
}

#[test]
fn trial_arms_have_fixed_cause_and_split_sizes() {
    let s = sample_model(&BenchConfig::default(), 11).unwrap();
    for n2 in [2000, 7] {
        let studies = sample_studies(&s.model, &s.theta, s.cause, 100, n2, 3).unwrap();
        assert_eq!(studies.observational.data.total(), 100);
        assert!(studies.observational.intervention.is_empty());
        assert_eq!(studies.arms[0].data.total(), n2 / 2);
        assert_eq!(studies.arms[1].data.total(), n2 - n2 / 2);
        for (state, arm) in studies.arms.iter().enumerate() {
            assert_eq!(arm.intervention, BTreeMap::from([(s.cause, state)]));
            let col = arm.data.columns().iter().position(|&c| c == s.cause).unwrap();
            assert!(arm.data.rows().iter().all(|(r, _)| r[col] == state));
        }
    }
}
