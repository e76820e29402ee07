use proptest::prelude::*;
use qsmooth_core::model::{build_composite, build_subsystem, tmss_prior, ALICE};
use qsmooth_core::{Basis, CouplingSpec, Matrix, MeasurementRecord, Party, SmoothingProblem};

fn record(seed: u64, n: usize) -> MeasurementRecord {
    let incs = (0..n).map(|k| ((k as f64 + 0.5) * (1.0 + seed as f64 * 1e-3)).sin() * 0.03).collect();
    MeasurementRecord::scalar(1e-2, incs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn smoother_ignores_bob_dynamics(
        r in 0.0f64..2.0,
        alpha in 0.3f64..2.0,
        gamma in -1.5f64..1.5,
        bob_a in 0.2f64..5.0,
        bob_b in 0.2f64..5.0,
        seed in 0u64..1000,
    ) {
        let alice = CouplingSpec::new(alpha, -gamma, gamma, alpha, Party::Alice).unwrap();
        let prior = tmss_prior(r, &alice.matrix()).unwrap();
        let rec = record(seed, 80);
        let run = |bob: CouplingSpec| {
            let model = build_composite(
                build_subsystem(&alice, Basis::NonOrthogonal).unwrap(),
                build_subsystem(&bob, Basis::NonOrthogonal).unwrap(),
            )
            .unwrap();
            SmoothingProblem::quantum(&model)
                .run_estimation(&prior, &rec)
                .unwrap()
                .smoother
                .into_iter()
                .map(|s| (s.mean0.clone(), s.gain_block(&ALICE), s.error_cov))
                .collect::<Vec<_>>()
        };
        let reference = run(CouplingSpec::identity(Party::Bob));
        let other = run(CouplingSpec::new(bob_a, 0.1, -0.2, bob_b, Party::Bob).unwrap());
        prop_assert_eq!(reference, other);
    }

    #[test]
    fn filter_covariance_is_symmetric_psd(r in 0.0f64..3.0, alpha in 0.2f64..3.0, gamma in -3.0f64..3.0) {
        let alice = CouplingSpec::new(alpha, -gamma, gamma, alpha, Party::Alice).unwrap();
        let model = build_composite(
            build_subsystem(&alice, Basis::NonOrthogonal).unwrap(),
            build_subsystem(&CouplingSpec::identity(Party::Bob), Basis::NonOrthogonal).unwrap(),
        )
        .unwrap();
        let prior = tmss_prior(r, &alice.matrix()).unwrap();
        let snaps = SmoothingProblem::quantum(&model).run_covariances(&prior.cov, 2.0, 5e-3).unwrap();
        prop_assert_eq!(&snaps[0].state.filter_cov, &prior.cov);
        for s in &snaps {
            let cov: &Matrix = &s.state.filter_cov;
            prop_assert_eq!(cov, &cov.transpose());
            let min = cov.clone().symmetric_eigen().eigenvalues.min();
            prop_assert!(min >= -1e-9);
        }
    }
}
