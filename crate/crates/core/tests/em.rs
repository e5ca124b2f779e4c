mod common;

use common::{random_model, random_studies, random_theta, rng};
use emcc_core::ccomponent::multinomial_bound;
use emcc_core::emcc::{check_compatibility, em_run, em_step, emcc, initial_params, EmConfig, InitScheme};
use emcc_core::inference::{log_likelihood, sequential_log_likelihood};
use emcc_core::{Dataset, Error, Study};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn em_never_decreases_the_likelihood(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let m = random_model(&mut r);
        let studies = random_studies(&m, &mut r);
        let theta0 = random_theta(&m, &mut r);
        let cfg = EmConfig { max_iter: 200, tol: 1e-12, ..Default::default() };
        let run = em_run(&m, &studies, &theta0, &cfg).unwrap();
        for w in run.ll_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9, "{} then {}", w[0], w[1]);
        }
    }

    #[test]
    fn likelihood_never_exceeds_the_saturated_bound(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let m = random_model(&mut r);
        let studies = random_studies(&m, &mut r);
        let theta = random_theta(&m, &mut r);
        let bound: f64 = studies.iter().map(|s| multinomial_bound(&s.data)).sum();
        let ll = log_likelihood(&theta, &studies, &m).unwrap();
        prop_assert!(ll <= bound + 1e-9);
        prop_assert_eq!(ll.to_bits(), sequential_log_likelihood(&theta, &studies, &m).unwrap().to_bits());
    }

    // Splitting a study into two with the same intervention changes nothing.
    #[test]
    fn pooling_studies_with_one_regime_is_invisible(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let m = random_model(&mut r);
        let studies = random_studies(&m, &mut r);
        let theta = random_theta(&m, &mut r);
        let first = &studies[0];
        let rows = first.data.rows();
        prop_assume!(rows.len() >= 2);
        let (a, b) = rows.split_at(rows.len() / 2);
        let part = |rows: &[(Vec<usize>, u64)]| {
            Study::new(Dataset::new(first.data.columns().to_vec(), rows.iter().cloned()).unwrap(), first.intervention.clone()).unwrap()
        };
        let mut split = vec![part(a), part(b)];
        split.extend(studies[1..].iter().cloned());
        let ll = log_likelihood(&theta, &studies, &m).unwrap();
        let ll_split = log_likelihood(&theta, &split, &m).unwrap();
        prop_assert!((ll - ll_split).abs() <= 1e-9 * ll.abs().max(1.0));
        let step = em_step(&m, &studies, &theta).unwrap();
        let step_split = em_step(&m, &split, &theta).unwrap();
        prop_assert!(step.max_abs_diff(&step_split) < 1e-12);
    }
}

#[test]
fn retained_parameters_pass_the_filter_and_nothing_else_does() {
    for seed in 0..12 {
        let mut r = rng(seed);
        let m = random_model(&mut r);
        let studies = random_studies(&m, &mut r);
        let cfg = EmConfig {
            restarts: 8,
            seed,
            ..Default::default()
        };
        let res = emcc(&m, &studies, &cfg).unwrap();
        let maxima: Vec<f64> = res.study_max.iter().map(|s| s.value).collect();
        let tol = res.verdict.tolerance;
        for (theta, &ll) in res.params.thetas.iter().zip(&res.params.ll_values) {
            let recomputed = log_likelihood(theta, &studies, &m).unwrap();
            assert!((recomputed - ll).abs() < 1e-9);
            assert!(check_compatibility(recomputed, &maxima, tol).compatible);
        }
        let kept = res.runs.iter().filter(|s| s.retained).count();
        assert_eq!(kept, res.params.len());
        for run in res.runs.iter().filter(|s| !s.retained) {
            if let Some(gap) = run.gap {
                assert!(gap > tol);
            }
        }
        // the verdict is driven by the best run
        let best = res
            .runs
            .iter()
            .filter_map(|s| s.final_ll)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(res.verdict.achieved_ll, best);
        assert_eq!(res.verdict.compatible, !res.params.is_empty());
    }
}

#[test]
fn fits_do_not_depend_on_the_thread_count() {
    let mut r = rng(3);
    let m = random_model(&mut r);
    let studies = random_studies(&m, &mut r);
    let cfg = EmConfig {
        restarts: 12,
        seed: 5,
        ..Default::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| emcc(&m, &studies, &cfg).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, emcc(&m, &studies, &cfg).unwrap());
    let other = emcc(&m, &studies, &EmConfig { seed: 6, ..cfg.clone() }).unwrap();
    assert_ne!(one.runs, other.runs);
}

#[test]
fn dirichlet_mixtures_validate_and_draw_valid_points() {
    let bad = |concentrations: Vec<f64>| EmConfig {
        init: InitScheme::DirichletMixture { concentrations },
        ..Default::default()
    };
    assert!(matches!(bad(vec![]).validate(), Err(Error::InvalidConfig(_))));
    assert!(bad(vec![1.0, 0.0]).validate().is_err());
    assert!(bad(vec![f64::NAN]).validate().is_err());
    assert!(bad(vec![1.0, 0.1]).validate().is_ok());

    let m = random_model(&mut rng(1));
    let scheme = InitScheme::DirichletMixture {
        concentrations: vec![5.0, 0.05],
    };
    let draws: Vec<_> = (0..20).map(|i| initial_params(&m, &scheme, &mut rng(i))).collect();
    for d in &draws {
        d.validate(&m).unwrap();
        assert!(d.is_interior());
    }
    assert_eq!(draws[4], initial_params(&m, &scheme, &mut rng(4)));
    // sparse draws put almost all mass on few states, flat ones do not
    let max_mass = |d: &emcc_core::ExoParams| {
        d.pmfs
            .values()
            .map(|p| p.iter().copied().fold(0.0, f64::max))
            .fold(0.0, f64::max)
    };
    let masses: Vec<f64> = draws.iter().map(max_mass).collect();
    assert!(masses.iter().any(|&x| x > 0.9) && masses.iter().any(|&x| x < 0.9));
}

#[test]
fn duplicate_studies_stay_compatible() {
    let mut r = rng(8);
    let m = random_model(&mut r);
    let s = random_studies(&m, &mut r).remove(0);
    let res = emcc(
        &m,
        &[s.clone(), s],
        &EmConfig {
            restarts: 10,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(res.verdict.compatible, "gap {}", res.verdict.gap);
}
