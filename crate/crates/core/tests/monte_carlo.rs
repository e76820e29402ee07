use qsmooth_core::analytic::TmssScenario;
use qsmooth_core::model::BOB;
use qsmooth_core::numerics::gaussian_condition;
use qsmooth_core::simulate::{monte_carlo_error, simulate_record, DiscreteOracle, SimConfig};
use qsmooth_core::{GaussianBelief, LinearModel, Matrix, MeasurementRecord, SmoothingProblem, Vector};

#[test]
fn smoothed_mean_averages_to_prior_mean() {
    let scenario = TmssScenario::identity(1.0).unwrap();
    let model = scenario.model().unwrap();
    let prior = scenario.prior().unwrap();
    let cfg = SimConfig::new(1e-3, 1.0, 4000, 12).unwrap();
    let report = monte_carlo_error(&SmoothingProblem::quantum(&model), &prior, &cfg, &[0.25, 0.5, 1.0]).unwrap();
    for p in &report.points {
        for i in 0..2 {
            assert!(
                p.mean_estimate[i].abs() <= 3.0 * p.mean_stderr[i],
                "t = {}: {} +- {}",
                p.t,
                p.mean_estimate[i],
                p.mean_stderr[i]
            );
        }
    }
    assert!(
        report.innovation_lag1.abs() < report.whiteness_bound(),
        "lag-1 autocorrelation {} above {}",
        report.innovation_lag1,
        report.whiteness_bound()
    );
}

#[test]
fn predicted_error_is_the_propagated_covariance() {
    let scenario = TmssScenario::identity(0.6).unwrap();
    let model = scenario.model().unwrap();
    let prior = scenario.prior().unwrap();
    let problem = SmoothingProblem::quantum(&model);
    let cfg = SimConfig::new(1e-2, 1.0, 10, 1).unwrap();
    let report = monte_carlo_error(&problem, &prior, &cfg, &[0.0, 1.0]).unwrap();
    let snaps = problem.run_covariances(&prior.cov, 1.0, 1e-2).unwrap();
    assert_eq!(report.points[0].predicted, snaps[0].state.error_cov);
    assert_eq!(report.points[1].predicted, snaps.last().unwrap().state.error_cov);
    assert!(monte_carlo_error(&problem, &prior, &cfg, &[1.5]).is_err());
}

#[test]
fn single_step_oracle_is_plain_conditioning() {
    // One Euler step written out by hand and conditioned directly.
    let a = Matrix::from_row_slice(2, 2, &[-0.3, 0.2, 0.0, -0.1]);
    let b = Matrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.4]);
    let c = Matrix::from_row_slice(1, 2, &[1.0, 0.5]);
    let d = Matrix::from_row_slice(1, 2, &[1.0, 0.3]);
    let model = LinearModel::new(a.clone(), b.clone(), c.clone(), d.clone()).unwrap();
    let cov0 = Matrix::from_row_slice(2, 2, &[1.2, 0.3, 0.3, 0.8]);
    let prior = GaussianBelief::new(Vector::from_vec(vec![0.2, -0.4]), cov0.clone()).unwrap();
    let dt = 0.05;
    let dm = 0.07;

    let phi = Matrix::identity(2, 2) + &a * dt;
    let x1 = &phi * &cov0 * phi.transpose() + &b * b.transpose() * dt;
    let x1_x0 = &phi * &cov0;
    let m_x0 = &c * &cov0 * dt;
    let m_x1 = &c * &cov0 * phi.transpose() * dt + &d * b.transpose() * dt;
    let m_m = &c * &cov0 * c.transpose() * (dt * dt) + &d * d.transpose() * dt;
    let mut joint = Matrix::zeros(5, 5);
    joint.view_mut((0, 0), (2, 2)).copy_from(&cov0);
    joint.view_mut((2, 2), (2, 2)).copy_from(&x1);
    joint.view_mut((2, 0), (2, 2)).copy_from(&x1_x0);
    joint.view_mut((0, 2), (2, 2)).copy_from(&x1_x0.transpose());
    joint.view_mut((4, 0), (1, 2)).copy_from(&m_x0);
    joint.view_mut((0, 4), (2, 1)).copy_from(&m_x0.transpose());
    joint.view_mut((4, 2), (1, 2)).copy_from(&m_x1);
    joint.view_mut((2, 4), (2, 1)).copy_from(&m_x1.transpose());
    joint[(4, 4)] = m_m[(0, 0)];
    let m0 = &prior.mean;
    let m1 = &phi * m0;
    let mean = Vector::from_vec(vec![m0[0], m0[1], m1[0], m1[1], (&c * m0)[0] * dt]);
    let (cm, cc) = gaussian_condition(&mean, &joint, &[4], &Vector::from_element(1, dm)).unwrap();

    let record = MeasurementRecord::scalar(dt, vec![dm]).unwrap();
    let post = DiscreteOracle::new(&model, &prior, &[0, 1], 1, dt).unwrap().posterior(&record).unwrap();
    assert!((&post.initial.mean - cm.rows(0, 2)).amax() < 1e-8);
    assert!((&post.terminal.mean - cm.rows(2, 2)).amax() < 1e-8);
    assert!((&post.initial.cov - cc.view((0, 0), (2, 2))).amax() < 1e-8);
    assert!((&post.terminal.cov - cc.view((2, 2), (2, 2))).amax() < 1e-8);
}

#[test]
fn oracle_and_smoother_agree_on_each_record() {
    let scenario = TmssScenario::identity(1.0).unwrap();
    let model = scenario.model().unwrap();
    let prior = scenario.prior().unwrap();
    let dt = 1e-3;
    let cfg = SimConfig::new(dt, 0.5, 5, 3).unwrap();
    let bundle = simulate_record(model.system(), &prior, &cfg).unwrap();
    let oracle = DiscreteOracle::new(model.system(), &prior, &BOB, 500, dt).unwrap();
    let problem = SmoothingProblem::quantum(&model);
    for rec in &bundle.records {
        let est = problem.run_estimation(&prior, rec).unwrap();
        let post = oracle.posterior(rec).unwrap();
        let smoothed = &est.smoother.last().unwrap();
        for i in 0..2 {
            assert!((smoothed.mean0[i] - post.initial.mean[i]).abs() <= f64::max(5e-2, 10.0 * dt));
        }
        assert!((&smoothed.error_cov - &post.initial.cov).amax() < 1e-2);
    }
}
