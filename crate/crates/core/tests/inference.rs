mod common;

use std::collections::BTreeMap;

use common::{brute_joint, random_model, random_theta, rng};
use emcc_core::canonical::{build_canonical_pscm, drug_trial_spec, CanonicalOptions};
use emcc_core::factor::Factor;
use emcc_core::inference::{self, eliminate};
use emcc_core::{ExoParams, Pscm, VarId};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn drug_trial_joint_factorizes_through_the_exogenous_variable() {
    let m = build_canonical_pscm(&drug_trial_spec(), &CanonicalOptions::default()).unwrap();
    let endo = m.endogenous();
    for seed in 0..5 {
        let theta = random_theta(&m, &mut rng(seed));
        let got = inference::query(&m, &theta, &endo, &BTreeMap::new()).unwrap();
        assert!(close(got.values(), &brute_joint(&m, &theta, &endo), 1e-12));
        assert!((got.total() - 1.0).abs() < 1e-12);
    }
}

/// Structural and exogenous factors of `m`, built independently of the crate.
fn model_factors(m: &Pscm, theta: &ExoParams) -> Vec<Factor> {
    let mut out: Vec<Factor> = m
        .exogenous()
        .into_iter()
        .map(|u| Factor::new(vec![u], vec![m.card(u)], theta.get(u).to_vec()).unwrap())
        .collect();
    for eq in m.equations() {
        let mut scope = eq.inputs.clone();
        scope.push(eq.child);
        let cards: Vec<usize> = scope.iter().map(|&v| m.card(v)).collect();
        let child_card = m.card(eq.child);
        let mut values = vec![0.0; cards.iter().product()];
        for (cfg, &out_state) in eq.table.iter().enumerate() {
            values[cfg * child_card + out_state] = 1.0;
        }
        out.push(Factor::new(scope, cards, values).unwrap());
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn elimination_order_does_not_change_the_result(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let m = random_model(&mut r);
        let theta = random_theta(&m, &mut r);
        let endo = m.endogenous();
        let keep = vec![endo[endo.len() - 1]];
        let mut order: Vec<VarId> = (0..m.len()).map(VarId).filter(|v| !keep.contains(v)).collect();
        let reference = eliminate(model_factors(&m, &theta), &keep, &order).unwrap();
        order.shuffle(&mut r);
        let shuffled = eliminate(model_factors(&m, &theta), &keep, &order).unwrap();
        prop_assert!(close(reference.values(), shuffled.values(), 1e-12));
        prop_assert!(close(reference.values(), &brute_joint(&m, &theta, &keep), 1e-12));
    }

    #[test]
    fn queries_match_enumeration(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let m = random_model(&mut r);
        let theta = random_theta(&m, &mut r);
        let endo = m.endogenous();
        let got = inference::query(&m, &theta, &endo, &BTreeMap::new()).unwrap();
        prop_assert!(close(got.values(), &brute_joint(&m, &theta, &endo), 1e-12));
    }

    #[test]
    fn conditionals_times_evidence_give_the_joint(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let m = random_model(&mut r);
        let theta = random_theta(&m, &mut r);
        let endo = m.endogenous();
        let (target, evidence_var) = (endo[endo.len() - 1], endo[0]);
        let s = r.random_range(0..m.card(evidence_var));
        let evidence = BTreeMap::from([(evidence_var, s)]);
        let pe = inference::evidence_probability(&m, &theta, &evidence).unwrap();
        prop_assume!(pe > 1e-9);
        let conditional = inference::query(&m, &theta, &[target], &evidence).unwrap();
        let joint = brute_joint(&m, &theta, &[evidence_var, target]);
        let k = m.card(target);
        for t in 0..k {
            prop_assert!((conditional.values()[t] * pe - joint[s * k + t]).abs() < 1e-12);
        }
    }

    #[test]
    fn interventions_commute(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let m = random_model(&mut r);
        let endo = m.endogenous();
        let (a, b) = (endo[0], endo[endo.len() - 1]);
        let sa = BTreeMap::from([(a, r.random_range(0..m.card(a)))]);
        let sb = BTreeMap::from([(b, r.random_range(0..m.card(b)))]);
        let ab = m.intervene(&sa).unwrap().intervene(&sb).unwrap();
        let ba = m.intervene(&sb).unwrap().intervene(&sa).unwrap();
        let mut both = sa.clone();
        both.extend(sb);
        prop_assert_eq!(&ab, &ba);
        prop_assert_eq!(&ab, &m.intervene(&both).unwrap());
    }
}
