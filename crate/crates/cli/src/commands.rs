//! Subcommand implementations. Each returns a [`Table`] ready for CSV.

use qsmooth_core::analytic::{
    asymptotic_info, mutual_information_series, s11_closed, smoother_gain_closed, smoothing_error_closed, sweep,
    FilterReference, SqueezingRegime, TmssScenario,
};
use qsmooth_core::model::{build_composite, build_subsystem, qnd_transform, tmss_prior, ALICE, BOB};
use qsmooth_core::simulate::{monte_carlo_error, simulate_record, DiscreteOracle, SimConfig};
use qsmooth_core::{
    Basis, CompositeModel, CouplingSpec, Estimation, GaussianBelief, LinearModel, Matrix, MeasurementRecord, Party,
    SmoothingProblem, Vector,
};

use crate::config::{ScenarioConfig, ORACLE_MAX_STEPS};
use crate::csv::Table;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Filter,
    Smooth,
    Analytic,
    Simulate,
    Oracle,
    Sweep,
    Info,
    Qnd,
}

pub fn run_command(command: Command, cfg: &ScenarioConfig) -> Result<Table, CliError> {
    cfg.validate()?;
    match command {
        Command::Filter => filter(cfg),
        Command::Smooth => smooth(cfg),
        Command::Analytic => analytic(cfg),
        Command::Simulate => simulate(cfg),
        Command::Oracle => oracle(cfg),
        Command::Sweep => sweep_table(cfg),
        Command::Info => info(cfg),
        Command::Qnd => qnd(cfg),
    }
}

fn coupling(c: [f64; 4], party: Party) -> Result<CouplingSpec, CliError> {
    Ok(CouplingSpec::new(c[0], c[1], c[2], c[3], party)?)
}

fn alice_coupling(cfg: &ScenarioConfig) -> Result<CouplingSpec, CliError> {
    let alice = coupling(cfg.alice, Party::Alice)?;
    if alice.is_degenerate() {
        return Err(CliError::Config(format!(
            "Alice's coupling is degenerate (det G = {:e}); run the `qnd` subcommand for this case",
            alice.det()
        )));
    }
    Ok(alice)
}

fn composite(cfg: &ScenarioConfig) -> Result<(CompositeModel, GaussianBelief), CliError> {
    let alice = alice_coupling(cfg)?;
    let bob = coupling(cfg.bob, Party::Bob)?;
    let model = build_composite(
        build_subsystem(&alice, Basis::NonOrthogonal)?,
        build_subsystem(&bob, Basis::NonOrthogonal)?,
    )?;
    let prior = tmss_prior(cfg.r, &alice.matrix())?;
    Ok((model, prior))
}

fn scenario(cfg: &ScenarioConfig) -> Result<TmssScenario, CliError> {
    Ok(TmssScenario::new(cfg.r, alice_coupling(cfg)?, cfg.theta1, cfg.theta2)?)
}

fn sim_config(cfg: &ScenarioConfig, n_traj: usize) -> Result<SimConfig, CliError> {
    Ok(SimConfig::new(cfg.dt, cfg.t_end, n_traj, cfg.seed)?)
}

/// Record of trajectory 0 for the configured seed.
fn sample_record(cfg: &ScenarioConfig, model: &LinearModel, prior: &GaussianBelief) -> Result<MeasurementRecord, CliError> {
    let bundle = simulate_record(model, prior, &sim_config(cfg, 1)?)?;
    Ok(bundle.records.into_iter().next().expect("one trajectory"))
}

fn estimate(cfg: &ScenarioConfig) -> Result<Estimation, CliError> {
    let (model, prior) = composite(cfg)?;
    let record = sample_record(cfg, model.system(), &prior)?;
    log::info!("estimating over {} steps of {}", record.len(), record.dt());
    Ok(SmoothingProblem::quantum(&model).run_estimation(&prior, &record)?)
}

fn upper(m: &Matrix) -> Vec<f64> {
    let n = m.nrows();
    (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect()
}

fn upper_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).flat_map(|i| (i..=n).map(move |j| format!("{prefix}{i}{j}"))).collect()
}

fn header(names: &[String]) -> Table {
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    Table::new(&refs)
}

fn filter(cfg: &ScenarioConfig) -> Result<Table, CliError> {
    let est = estimate(cfg)?;
    let mut names = vec!["t".to_string()];
    names.extend((1..=4).map(|i| format!("mean{i}")));
    names.extend(upper_names("S", 4));
    let mut table = header(&names);
    for k in cfg.sample_indices(est.filter.len() - 1) {
        let f = &est.filter[k];
        let mut row = vec![f.t];
        row.extend(f.mean.iter());
        row.extend(upper(&f.cov));
        table.push(row);
    }
    Ok(table)
}

fn smooth(cfg: &ScenarioConfig) -> Result<Table, CliError> {
    let est = estimate(cfg)?;
    let mut table = Table::new(&["t", "mean0_1", "mean0_2", "K11", "K12", "K21", "K22", "R11", "R12", "R22"]);
    for k in cfg.sample_indices(est.smoother.len() - 1) {
        let s = &est.smoother[k];
        let gain = s.gain_block(&ALICE);
        let mut row = vec![s.t, s.mean0[0], s.mean0[1], gain[(0, 0)], gain[(0, 1)], gain[(1, 0)], gain[(1, 1)]];
        row.extend(upper(&s.error_cov));
        table.push(row);
    }
    Ok(table)
}

fn analytic(cfg: &ScenarioConfig) -> Result<Table, CliError> {
    let scenario = scenario(cfg)?;
    let curves = scenario.curves()?;
    let (c, s) = (cfg.r.cosh(), cfg.r.sinh());
    let mut table = Table::new(&["t", "S11", "K11", "K21", "R11", "R12", "R22", "detR", "h"]);
    for k in cfg.sample_indices(cfg.steps()) {
        let t = k as f64 * cfg.dt;
        let (k11, k21) = smoother_gain_closed(t, &curves);
        let r = smoothing_error_closed(t, &curves);
        let h = curves.h(t);
        table.push(vec![
            t,
            s11_closed(t, curves.delta, curves.s11_0),
            k11,
            k21,
            r[(0, 0)],
            r[(0, 1)],
            r[(1, 1)],
            c * c - h * s * s,
            h,
        ]);
    }
    Ok(table)
}

fn simulate(cfg: &ScenarioConfig) -> Result<Table, CliError> {
    let (model, prior) = composite(cfg)?;
    let sim = sim_config(cfg, cfg.n_traj)?;
    let times: Vec<f64> = cfg.sample_indices(sim.steps()?).iter().map(|&k| k as f64 * cfg.dt).collect();
    log::info!("simulating {} trajectories of {} steps", cfg.n_traj, sim.steps()?);
    let report = monte_carlo_error(&SmoothingProblem::quantum(&model), &prior, &sim, &times)?;
    log::info!(
        "innovation lag-1 autocorrelation {:.3e} (bound {:.3e})",
        report.innovation_lag1,
        report.whiteness_bound()
    );
    let mut table = Table::new(&["t", "Rhat11", "Rhat12", "Rhat22", "stderr11", "stderr12", "stderr22"]);
    for p in &report.points {
        let mut row = vec![p.t];
        row.extend(upper(&p.rhat));
        row.extend(upper(&p.stderr));
        table.push(row);
    }
    Ok(table)
}

fn oracle(cfg: &ScenarioConfig) -> Result<Table, CliError> {
    let steps = cfg.steps();
    if steps > ORACLE_MAX_STEPS {
        return Err(CliError::Config(format!(
            "oracle conditions on t_end/dt = {steps} increments; at most {ORACLE_MAX_STEPS} are supported"
        )));
    }
    let (model, prior) = composite(cfg)?;
    let record = sample_record(cfg, model.system(), &prior)?;
    let est = SmoothingProblem::quantum(&model).run_estimation(&prior, &record)?;
    let post = DiscreteOracle::new(model.system(), &prior, &BOB, record.len(), record.dt())?.posterior(&record)?;
    let smoothed = est.smoother.last().expect("non-empty");
    let filtered = est.filter.last().expect("non-empty");

    let mut names = vec!["t".to_string()];
    let mut row = vec![filtered.t];
    let mut pair = |name: String, oracle: f64, continuous: f64| {
        names.push(format!("{name}_oracle"));
        names.push(format!("{name}_continuous"));
        row.push(oracle);
        row.push(continuous);
    };
    let vec_pairs = |prefix: &str, a: &Vector, b: &Vector| -> Vec<(String, f64, f64)> {
        (0..a.len()).map(|i| (format!("{prefix}{}", i + 1), a[i], b[i])).collect()
    };
    let mat_pairs = |prefix: &str, a: &Matrix, b: &Matrix| -> Vec<(String, f64, f64)> {
        upper_names(prefix, a.nrows()).into_iter().zip(upper(a).into_iter().zip(upper(b))).map(|(n, (x, y))| (n, x, y)).collect()
    };
    let all = [
        vec_pairs("mean0_", &post.initial.mean, &smoothed.mean0),
        mat_pairs("R", &post.initial.cov, &smoothed.error_cov),
        vec_pairs("mean", &post.terminal.mean, &filtered.mean),
        mat_pairs("S", &post.terminal.cov, &filtered.cov),
    ];
    for (name, o, c) in all.into_iter().flatten() {
        pair(name, o, c);
    }
    let mut table = header(&names);
    table.push(row);
    Ok(table)
}

fn sweep_table(cfg: &ScenarioConfig) -> Result<Table, CliError> {
    let grid = cfg.sweep_grid();
    let mut table = Table::new(&["alpha", "gamma", "dIdt0", "Iinf"]);
    for p in sweep(cfg.r, cfg.theta1, cfg.theta2, &grid, &grid)? {
        table.push(vec![p.alpha, p.gamma, p.early_rate, p.asymptote]);
    }
    Ok(table)
}

fn info(cfg: &ScenarioConfig) -> Result<Table, CliError> {
    let scenario = scenario(cfg)?;
    let series = mutual_information_series(&scenario, cfg.t_end, cfg.dt, FilterReference::Propagated)?;
    let mut table = Table::new(&[
        "t",
        "I_total",
        "I_filter",
        "I_smoother",
        "weak_filter",
        "weak_smoother",
        "strong_filter",
        "strong_smoother",
    ]);
    // Approximations outside their domain are written as NaN.
    let approx = |t: f64, regime| asymptotic_info(t, &scenario, regime).unwrap_or((f64::NAN, f64::NAN));
    for k in cfg.sample_indices(series.len() - 1) {
        let p = series[k];
        let (wf, ws) = approx(p.t, SqueezingRegime::Weak);
        let (sf, ss) = approx(p.t, SqueezingRegime::Strong);
        table.push(vec![p.t, p.total, p.filter, p.smoother, wf, ws, sf, ss]);
    }
    Ok(table)
}

fn qnd(cfg: &ScenarioConfig) -> Result<Table, CliError> {
    let spec = coupling(cfg.alice, Party::Alice)?;
    if !spec.is_degenerate() {
        return Err(CliError::Config(format!(
            "qnd needs a degenerate coupling (det G = 0), got det G = {:e}",
            spec.det()
        )));
    }
    let system = qnd_transform(&spec)?.system()?;
    let prior = GaussianBelief::new(Vector::zeros(2), Matrix::identity(2, 2) * cfg.qnd_var0)?;
    let record = sample_record(cfg, &system, &prior)?;
    let est = SmoothingProblem::classical(system).run_estimation(&prior, &record)?;
    let mut table = Table::new(&["t", "xprime_mean", "xprime_var"]);
    for k in cfg.sample_indices(est.filter.len() - 1) {
        let f = &est.filter[k];
        table.push(vec![f.t, f.mean[0], f.cov[(0, 0)]]);
    }
    Ok(table)
}
