//! Seeded Monte Carlo records and the discrete Bayes oracle.
//!
//! Alice's record `m_s` and Bob's initial quadratures commute, and every
//! state and map involved is Gaussian and linear, so their joint statistics
//! are those of the classical model `dX = A X dt + B dW`,
//! `dm = C X dt + D dW` driven by independent unit Wiener channels with
//! symmetrized covariances. Sampling that model is how records are produced
//! here.
//!
//! Trajectory `i` draws from ChaCha8 stream `i` of the configured seed, and
//! per-trajectory results are combined in a fixed order, so the output is
//! bit-identical for any number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{shape_error, Error, Result};
use crate::estimator::{advance_filter_mean, advance_smoothed_mean, innovation, CovariancePath, MeasurementRecord, SmoothingProblem};
use crate::model::{GaussianBelief, LinearModel};
use crate::numerics::{psd_factor, step_count, GaussianConditioner, Matrix, Vector};

/// Trajectories folded together before results are combined. Fixed so
/// the summation order never depends on the thread pool.
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub n_traj: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(dt: f64, t_end: f64, n_traj: usize, seed: u64) -> Result<Self> {
        let cfg = Self { dt, t_end, n_traj, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return Err(Error::InvalidArgument(format!("t_end = {} must be at least dt = {}", self.t_end, self.dt)));
        }
        if self.n_traj == 0 {
            return Err(Error::InvalidArgument("n_traj must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps, `round(t_end / dt)`.
    pub fn steps(&self) -> Result<usize> {
        self.validate()?;
        step_count(self.t_end, self.dt)
    }

    /// Generator for trajectory `i`.
    pub fn rng(&self, i: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(i as u64);
        rng
    }
}

/// Sampled trajectories. `hidden[i][k]` is the state of trajectory `i` at
/// `t = k·dt`, so every path has `steps + 1` entries and every record
/// `steps` increments.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle {
    pub dt: f64,
    pub hidden: Vec<Vec<Vector>>,
    pub records: Vec<MeasurementRecord>,
    pub initial_states: Vec<Vector>,
}

impl TrajectoryBundle {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Draws `X₀`, then a path and its record with Euler–Maruyama steps.
struct Sampler<'a> {
    model: &'a LinearModel,
    mean: &'a Vector,
    factor: Matrix,
    dt: f64,
    sqrt_dt: f64,
}

impl<'a> Sampler<'a> {
    fn new(model: &'a LinearModel, prior: &'a GaussianBelief, dt: f64) -> Result<Self> {
        if prior.dim() != model.state_dim() {
            return Err(shape_error("prior", model.state_dim(), prior.dim()));
        }
        Ok(Self {
            model,
            mean: &prior.mean,
            factor: psd_factor(&prior.cov)?,
            dt,
            sqrt_dt: dt.sqrt(),
        })
    }

    fn initial(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.mean.len();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        (0..n)
            .map(|i| self.mean[i] + (0..n).map(|j| self.factor[(i, j)] * z[j]).sum::<f64>())
            .collect()
    }

    /// Advances `x` in place and writes the increment `dm` produced during
    /// the step.
    fn step(&self, rng: &mut ChaCha8Rng, x: &mut [f64], dw: &mut [f64], scratch: &mut [f64], dm: &mut [f64]) {
        let m = self.model;
        for w in dw.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *w = z * self.sqrt_dt;
        }
        for (i, o) in dm.iter_mut().enumerate() {
            let mut v = 0.0;
            for (j, xj) in x.iter().enumerate() {
                v += m.c[(i, j)] * xj;
            }
            v *= self.dt;
            for (l, w) in dw.iter().enumerate() {
                v += m.d[(i, l)] * w;
            }
            *o = v;
        }
        for (i, o) in scratch.iter_mut().enumerate() {
            let mut drift = 0.0;
            for (j, xj) in x.iter().enumerate() {
                drift += m.a[(i, j)] * xj;
            }
            let mut noise = 0.0;
            for (l, w) in dw.iter().enumerate() {
                noise += m.b[(i, l)] * w;
            }
            *o = x[i] + drift * self.dt + noise;
        }
        x.copy_from_slice(scratch);
    }
}

/// Samples `cfg.n_traj` hidden paths with their records.
///
/// Every path is stored in full, so memory grows as
/// `n_traj · steps · state_dim`; use [`monte_carlo_error`] for large runs.
pub fn simulate_record(model: &LinearModel, prior: &GaussianBelief, cfg: &SimConfig) -> Result<TrajectoryBundle> {
    let steps = cfg.steps()?;
    let sampler = Sampler::new(model, prior, cfg.dt)?;
    let (n, p, q) = (model.state_dim(), model.output_dim(), model.noise_dim());
    let runs: Vec<Result<(Vector, Vec<Vector>, MeasurementRecord)>> = (0..cfg.n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = cfg.rng(i);
            let mut x = sampler.initial(&mut rng);
            let x0 = Vector::from_column_slice(&x);
            let mut path = Vec::with_capacity(steps + 1);
            path.push(x0.clone());
            let mut increments = vec![0.0; steps * p];
            let (mut dw, mut scratch) = (vec![0.0; q], vec![0.0; n]);
            for k in 0..steps {
                sampler.step(&mut rng, &mut x, &mut dw, &mut scratch, &mut increments[k * p..(k + 1) * p]);
                path.push(Vector::from_column_slice(&x));
            }
            Ok((x0, path, MeasurementRecord::new(cfg.dt, p, increments)?))
        })
        .collect();
    let mut bundle = TrajectoryBundle {
        dt: cfg.dt,
        hidden: Vec::with_capacity(cfg.n_traj),
        records: Vec::with_capacity(cfg.n_traj),
        initial_states: Vec::with_capacity(cfg.n_traj),
    };
    for run in runs {
        let (x0, path, record) = run?;
        bundle.initial_states.push(x0);
        bundle.hidden.push(path);
        bundle.records.push(record);
    }
    Ok(bundle)
}

/// Empirical smoothing statistics at one report time.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorPoint {
    pub t: f64,
    /// Sample covariance of `x_0[target] - mean0(t)`.
    pub rhat: Matrix,
    /// Standard error of each entry of `rhat`, `√((R̂ᵢᵢR̂ⱼⱼ + R̂ᵢⱼ²)/n)`.
    pub stderr: Matrix,
    /// Smoother covariance `R(t)` the estimator itself reports.
    pub predicted: Matrix,
    /// Average smoothed mean over trajectories and its standard error.
    pub mean_estimate: Vector,
    pub mean_stderr: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub n_traj: usize,
    pub steps: usize,
    pub points: Vec<ErrorPoint>,
    /// Pooled lag-1 autocorrelation of the innovations `dm - C·mean·dt`.
    pub innovation_lag1: f64,
}

impl MonteCarloReport {
    /// Whiteness bound `3/√(steps·n_traj)` for [`Self::innovation_lag1`].
    pub fn whiteness_bound(&self) -> f64 {
        3.0 / ((self.steps * self.n_traj) as f64).sqrt()
    }
}

/// Running sums over a group of trajectories.
#[derive(Debug, Clone)]
struct Sums {
    err: Vec<f64>,
    err_outer: Vec<f64>,
    est: Vec<f64>,
    est_sq: Vec<f64>,
    lag_num: f64,
    lag_den: f64,
}

impl Sums {
    fn new(points: usize, m: usize) -> Self {
        Self {
            err: vec![0.0; points * m],
            err_outer: vec![0.0; points * m * m],
            est: vec![0.0; points * m],
            est_sq: vec![0.0; points * m],
            lag_num: 0.0,
            lag_den: 0.0,
        }
    }

    fn merge(mut self, other: &Sums) -> Self {
        let add = |a: &mut Vec<f64>, b: &Vec<f64>| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.err, &other.err);
        add(&mut self.err_outer, &other.err_outer);
        add(&mut self.est, &other.est);
        add(&mut self.est_sq, &other.est_sq);
        self.lag_num += other.lag_num;
        self.lag_den += other.lag_den;
        self
    }
}

/// Runs the filter and smoother on `cfg.n_traj` sampled records and
/// compares the smoothed estimate of `x_0[target]` with the sampled value at
/// each time in `report_times` (rounded to the grid).
///
/// Covariances and gains are record-independent, so they are computed once;
/// each trajectory then propagates only means, with the same arithmetic as
/// [`SmoothingProblem::filter_step`] and [`SmoothingProblem::smoother_step`].
pub fn monte_carlo_error(
    problem: &SmoothingProblem,
    prior: &GaussianBelief,
    cfg: &SimConfig,
    report_times: &[f64],
) -> Result<MonteCarloReport> {
    let steps = cfg.steps()?;
    let dt = cfg.dt;
    let model = problem.system();
    let sampler = Sampler::new(model, prior, dt)?;
    let path = problem.covariance_path(&prior.cov, steps, dt)?;
    let report = report_indices(report_times, steps, dt)?;
    let target = problem.target().to_vec();
    let m = target.len();
    let points = report.len();

    let chunks: Vec<Sums> = (0..cfg.n_traj.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut sums = Sums::new(points, m);
            for i in c * CHUNK..((c + 1) * CHUNK).min(cfg.n_traj) {
                run_trajectory(&sampler, &path, cfg, i, &target, &report, &mut sums);
            }
            sums
        })
        .collect();
    let total = chunks.iter().fold(Sums::new(points, m), |acc, s| acc.merge(s));

    let n = cfg.n_traj as f64;
    let points = report
        .iter()
        .enumerate()
        .map(|(p, &k)| {
            let mean_err: Vec<f64> = (0..m).map(|i| total.err[p * m + i] / n).collect();
            let denom = if cfg.n_traj > 1 { n - 1.0 } else { 1.0 };
            let rhat = Matrix::from_fn(m, m, |i, j| {
                (total.err_outer[(p * m + i) * m + j] - n * mean_err[i] * mean_err[j]) / denom
            });
            let stderr = Matrix::from_fn(m, m, |i, j| {
                ((rhat[(i, i)] * rhat[(j, j)] + rhat[(i, j)] * rhat[(i, j)]) / n).sqrt()
            });
            let mean_estimate = Vector::from_fn(m, |i, _| total.est[p * m + i] / n);
            let mean_stderr = Vector::from_fn(m, |i, _| {
                let var = (total.est_sq[p * m + i] - n * mean_estimate[i] * mean_estimate[i]) / denom;
                (var.max(0.0) / n).sqrt()
            });
            ErrorPoint {
                t: k as f64 * dt,
                rhat,
                stderr,
                predicted: path.state(k).error_cov.clone(),
                mean_estimate,
                mean_stderr,
            }
        })
        .collect();
    Ok(MonteCarloReport {
        n_traj: cfg.n_traj,
        steps,
        points,
        innovation_lag1: total.lag_num / total.lag_den,
    })
}

fn report_indices(times: &[f64], steps: usize, dt: f64) -> Result<Vec<usize>> {
    times
        .iter()
        .map(|&t| {
            let k = (t / dt).round();
            if !(k >= 0.0) || k > steps as f64 {
                return Err(Error::InvalidArgument(format!(
                    "report time {t} is outside [0, {}]",
                    steps as f64 * dt
                )));
            }
            Ok(k as usize)
        })
        .collect()
}

fn run_trajectory(
    sampler: &Sampler<'_>,
    path: &CovariancePath,
    cfg: &SimConfig,
    i: usize,
    target: &[usize],
    report: &[usize],
    sums: &mut Sums,
) {
    let model = sampler.model;
    let (n, p, q) = (model.state_dim(), model.output_dim(), model.noise_dim());
    let m = target.len();
    let dt = cfg.dt;
    let mut rng = cfg.rng(i);
    let mut x = sampler.initial(&mut rng);
    let x0: Vec<f64> = target.iter().map(|&j| x[j]).collect();
    let mut mean = sampler.mean.as_slice().to_vec();
    let mut mean0: Vec<f64> = target.iter().map(|&j| sampler.mean[j]).collect();
    let (mut next_mean, mut next_mean0) = (vec![0.0; n], vec![0.0; m]);
    let (mut dw, mut scratch, mut dm) = (vec![0.0; q], vec![0.0; n], vec![0.0; p]);
    let (mut innov, mut prev_innov) = (vec![0.0; p], vec![0.0; p]);

    let record = |p_idx: usize, mean0: &[f64], sums: &mut Sums| {
        for a in 0..m {
            let ea = x0[a] - mean0[a];
            sums.err[p_idx * m + a] += ea;
            sums.est[p_idx * m + a] += mean0[a];
            sums.est_sq[p_idx * m + a] += mean0[a] * mean0[a];
            for b in 0..m {
                sums.err_outer[(p_idx * m + a) * m + b] += ea * (x0[b] - mean0[b]);
            }
        }
    };

    let steps = path.steps();
    let mut next_report = 0;
    for k in 0..=steps {
        while next_report < report.len() && report[next_report] == k {
            record(next_report, &mean0, sums);
            next_report += 1;
        }
        if k == steps {
            break;
        }
        sampler.step(&mut rng, &mut x, &mut dw, &mut scratch, &mut dm);
        innovation(model, &mean, &dm, dt, &mut innov);
        advance_smoothed_mean(path.smoother_gain(k), &mean0, &innov, &mut next_mean0);
        advance_filter_mean(model, path.filter_gain(k), &mean, &innov, dt, &mut next_mean);
        std::mem::swap(&mut mean, &mut next_mean);
        std::mem::swap(&mut mean0, &mut next_mean0);
        for l in 0..p {
            sums.lag_den += innov[l] * innov[l];
            if k > 0 {
                sums.lag_num += innov[l] * prev_innov[l];
            }
        }
        std::mem::swap(&mut innov, &mut prev_innov);
    }
}

/// Conditional distributions computed by the discrete oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePosterior {
    /// Posterior of `x_0[target]`.
    pub initial: GaussianBelief,
    /// Posterior of the state after the last increment.
    pub terminal: GaussianBelief,
}

/// Exact Bayes update for the Euler-discretized model
///
/// ```text
/// Δm_{k+1} = C X_k dt + D ΔW_k,   X_{k+1} = (I + A dt) X_k + B ΔW_k,
/// ```
///
/// with `ΔW_k ~ N(0, I dt)`. The joint covariance of
/// `(X_0[target], X_n, Δm_1, …, Δm_n)` is propagated step by step and
/// factorized once; [`DiscreteOracle::posterior`] then conditions on any
/// record of the same length.
#[derive(Debug, Clone)]
pub struct DiscreteOracle {
    dt: f64,
    steps: usize,
    target: Vec<usize>,
    state_dim: usize,
    output_dim: usize,
    /// Unconditional mean of the joint vector.
    mean: Vector,
    conditioner: GaussianConditioner,
}

impl DiscreteOracle {
    pub fn new(model: &LinearModel, prior: &GaussianBelief, target: &[usize], steps: usize, dt: f64) -> Result<Self> {
        let n = model.state_dim();
        let p = model.output_dim();
        if prior.dim() != n {
            return Err(shape_error("prior", n, prior.dim()));
        }
        if steps == 0 || !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("oracle needs steps >= 1 and dt > 0, got {steps} and {dt}")));
        }
        if target.is_empty() || target.iter().any(|&i| i >= n) {
            return Err(Error::InvalidArgument(format!("oracle target {target:?} is not a subset of 0..{n}")));
        }
        let t = target.len();
        let dim = t + n + steps * p;
        let obs0 = t + n;

        let phi = Matrix::identity(n, n) + &model.a * dt;
        let c_dt = &model.c * dt;
        let bbt_dt = &model.b * model.b.transpose() * dt;
        let bdt_dt = &model.b * model.d.transpose() * dt;
        let ddt_dt = &model.d * model.d.transpose() * dt;

        let mut cov = Matrix::zeros(dim, dim);
        let mut mean = Vector::zeros(dim);
        // Σ_k = Cov(X_k), M_k = Cov(X_k, X_0[target]), Q_k = Cov(X_k, Δm_1..Δm_k).
        let mut sigma = prior.cov.clone();
        let all: Vec<usize> = (0..n).collect();
        let mut cross0 = crate::numerics::select(&prior.cov, &all, target);
        let mut q = Matrix::zeros(n, steps * p);
        let mut x_mean = prior.mean.clone();

        for i in 0..t {
            mean[i] = prior.mean[target[i]];
            for j in 0..t {
                cov[(i, j)] = prior.cov[(target[i], target[j])];
            }
        }
        for k in 0..steps {
            let row = obs0 + k * p;
            // Δm_{k+1} against X_0[target] and the earlier increments.
            let c_cross0 = &c_dt * &cross0;
            let c_q = &c_dt * q.columns(0, k * p);
            let var_m = &c_dt * &sigma * c_dt.transpose() + &ddt_dt;
            let m_mean = &c_dt * &x_mean;
            for a in 0..p {
                mean[row + a] = m_mean[a];
                for i in 0..t {
                    cov[(row + a, i)] = c_cross0[(a, i)];
                    cov[(i, row + a)] = c_cross0[(a, i)];
                }
                for j in 0..k * p {
                    cov[(row + a, obs0 + j)] = c_q[(a, j)];
                    cov[(obs0 + j, row + a)] = c_q[(a, j)];
                }
                for b in 0..p {
                    cov[(row + a, row + b)] = var_m[(a, b)];
                }
            }
            // X_{k+1}.
            let x_m = &phi * &sigma * c_dt.transpose() + &bdt_dt;
            let q_old = q.columns(0, k * p).into_owned();
            q.columns_mut(0, k * p).copy_from(&(&phi * q_old));
            q.columns_mut(k * p, p).copy_from(&x_m);
            cross0 = &phi * &cross0;
            sigma = &phi * &sigma * phi.transpose() + &bbt_dt;
            x_mean = &phi * &x_mean;
        }
        for i in 0..n {
            mean[t + i] = x_mean[i];
            for j in 0..n {
                cov[(t + i, t + j)] = sigma[(i, j)];
            }
            for j in 0..t {
                cov[(t + i, j)] = cross0[(i, j)];
                cov[(j, t + i)] = cross0[(i, j)];
            }
            for j in 0..steps * p {
                cov[(t + i, obs0 + j)] = q[(i, j)];
                cov[(obs0 + j, t + i)] = q[(i, j)];
            }
        }
        let observed: Vec<usize> = (obs0..dim).collect();
        let conditioner = GaussianConditioner::new(&cov, &observed)?;
        Ok(Self {
            dt,
            steps,
            target: target.to_vec(),
            state_dim: n,
            output_dim: p,
            mean,
            conditioner,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn regularized(&self) -> bool {
        self.conditioner.regularized()
    }

    /// Record-independent posterior covariance of `x_0[target]`.
    pub fn initial_covariance(&self) -> Matrix {
        let t = self.target.len();
        self.conditioner.conditional_covariance().view((0, 0), (t, t)).into_owned()
    }

    /// Record-independent posterior covariance of the final state.
    pub fn terminal_covariance(&self) -> Matrix {
        let (t, n) = (self.target.len(), self.state_dim);
        self.conditioner.conditional_covariance().view((t, t), (n, n)).into_owned()
    }

    pub fn posterior(&self, record: &MeasurementRecord) -> Result<OraclePosterior> {
        if record.len() != self.steps || record.dim() != self.output_dim {
            return Err(shape_error(
                "oracle record",
                format!("{} steps of dimension {}", self.steps, self.output_dim),
                format!("{} steps of dimension {}", record.len(), record.dim()),
            ));
        }
        if (record.dt() - self.dt).abs() > 1e-12 * self.dt {
            return Err(Error::InvalidArgument(format!(
                "record step {} differs from oracle step {}",
                record.dt(),
                self.dt
            )));
        }
        let vals = Vector::from_column_slice(record.as_slice());
        let cond_mean = self.conditioner.condition_mean(&self.mean, &vals)?;
        let (t, n) = (self.target.len(), self.state_dim);
        Ok(OraclePosterior {
            initial: GaussianBelief::new(cond_mean.rows(0, t).into_owned(), self.initial_covariance())?,
            terminal: GaussianBelief::new(cond_mean.rows(t, n).into_owned(), self.terminal_covariance())?,
        })
    }
}

/// One-shot oracle: builds a [`DiscreteOracle`] for the record's length and
/// step and conditions on it.
pub fn discrete_oracle(
    model: &LinearModel,
    prior: &GaussianBelief,
    target: &[usize],
    record: &MeasurementRecord,
) -> Result<OraclePosterior> {
    DiscreteOracle::new(model, prior, target, record.len(), record.dt())?.posterior(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_composite, build_subsystem, tmss_prior, Basis, CompositeModel, CouplingSpec, Party, BOB};
    use approx::assert_abs_diff_eq;

    fn identity_model() -> CompositeModel {
        build_composite(
            build_subsystem(&CouplingSpec::identity(Party::Alice), Basis::NonOrthogonal).unwrap(),
            build_subsystem(&CouplingSpec::identity(Party::Bob), Basis::NonOrthogonal).unwrap(),
        )
        .unwrap()
    }

    fn scalar(a: f64, b: f64, c: f64, d: f64) -> LinearModel {
        LinearModel::new(
            Matrix::from_element(1, 1, a),
            Matrix::from_element(1, 1, b),
            Matrix::from_element(1, 1, c),
            Matrix::from_element(1, 1, d),
        )
        .unwrap()
    }

    fn std_prior(n: usize) -> GaussianBelief {
        GaussianBelief::new(Vector::zeros(n), Matrix::identity(n, n)).unwrap()
    }

    #[test]
    fn frozen_state_and_pure_noise_record() {
        let model = scalar(0.0, 0.0, 0.0, 1.0);
        let cfg = SimConfig::new(1e-3, 100.0, 1, 3).unwrap();
        let b = simulate_record(&model, &std_prior(1), &cfg).unwrap();
        let x0 = b.initial_states[0][0];
        assert!(b.hidden[0].iter().all(|x| x[0] == x0));
        let dm = b.records[0].as_slice();
        assert_eq!(dm.len(), 100_000);
        let mean = dm.iter().sum::<f64>() / dm.len() as f64;
        let var = dm.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (dm.len() - 1) as f64;
        assert!((var / 1e-3 - 1.0).abs() < 0.03, "{var}");
    }

    #[test]
    fn sampled_prior_matches_tmss() {
        let model = identity_model();
        let prior = tmss_prior(1.0, &Matrix::identity(2, 2)).unwrap();
        let cfg = SimConfig::new(1e-3, 1e-3, 10_000, 11).unwrap();
        let b = simulate_record(model.system(), &prior, &cfg).unwrap();
        let n = b.len() as f64;
        for i in 0..4 {
            for j in 0..4 {
                let emp = b.initial_states.iter().map(|x| x[i] * x[j]).sum::<f64>() / n;
                let want = prior.cov[(i, j)];
                if want == 0.0 {
                    assert!(emp.abs() < 0.08, "({i},{j}) {emp}");
                } else {
                    assert!((emp / want - 1.0).abs() < 0.05, "({i},{j}) {emp} vs {want}");
                }
            }
        }
    }

    #[test]
    fn same_seed_same_bundle() {
        let model = identity_model();
        let prior = tmss_prior(0.7, &Matrix::identity(2, 2)).unwrap();
        let cfg = SimConfig::new(1e-2, 0.5, 20, 99).unwrap();
        let a = simulate_record(model.system(), &prior, &cfg).unwrap();
        let b = simulate_record(model.system(), &prior, &cfg).unwrap();
        assert_eq!(a, b);
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = single.install(|| simulate_record(model.system(), &prior, &cfg).unwrap());
        assert_eq!(a, c);
        let other = simulate_record(model.system(), &prior, &SimConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(a.records, other.records);
    }

    #[test]
    fn invalid_configs() {
        assert!(SimConfig::new(0.0, 1.0, 1, 0).is_err());
        assert!(SimConfig::new(1e-2, 1e-3, 1, 0).is_err());
        assert!(SimConfig::new(1e-2, 1.0, 0, 0).is_err());
    }

    #[test]
    fn non_psd_prior_rejected() {
        let bad = GaussianBelief {
            mean: Vector::zeros(1),
            cov: Matrix::from_element(1, 1, -1.0),
        };
        let cfg = SimConfig::new(1e-2, 1.0, 1, 0).unwrap();
        assert!(matches!(
            simulate_record(&scalar(0.0, 0.0, 1.0, 1.0), &bad, &cfg),
            Err(Error::InvalidCovariance { .. })
        ));
    }

    #[test]
    fn oracle_hand_example() {
        let model = scalar(0.0, 0.0, 1.0, 1.0);
        let record = MeasurementRecord::scalar(1.0, vec![0.8]).unwrap();
        let post = discrete_oracle(&model, &std_prior(1), &[0], &record).unwrap();
        assert_abs_diff_eq!(post.initial.mean[0], 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(post.initial.cov[(0, 0)], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(post.terminal.mean[0], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn oracle_covariance_ignores_record_values() {
        let model = identity_model();
        let prior = tmss_prior(1.0, &Matrix::identity(2, 2)).unwrap();
        let cfg = SimConfig::new(1e-2, 1.0, 2, 5).unwrap();
        let b = simulate_record(model.system(), &prior, &cfg).unwrap();
        let oracle = DiscreteOracle::new(model.system(), &prior, &BOB, 100, 1e-2).unwrap();
        let p0 = oracle.posterior(&b.records[0]).unwrap();
        let p1 = oracle.posterior(&b.records[1]).unwrap();
        assert_ne!(p0.initial.mean, p1.initial.mean);
        assert!((&p0.initial.cov - &p1.initial.cov).amax() < 1e-10);
        assert!((&p0.terminal.cov - &p1.terminal.cov).amax() < 1e-10);
    }

    /// Discrete Kalman filter for the same Euler discretization, with the
    /// measurement and process noise correlated through `B Dᵀ`.
    fn discrete_kalman(model: &LinearModel, prior: &GaussianBelief, record: &MeasurementRecord) -> (Vector, Matrix) {
        let dt = record.dt();
        let n = model.state_dim();
        let phi = Matrix::identity(n, n) + &model.a * dt;
        let c = &model.c * dt;
        let (mut m, mut p) = (prior.mean.clone(), prior.cov.clone());
        for k in 0..record.len() {
            let y = Vector::from_column_slice(record.increment(k));
            let s = &c * &p * c.transpose() + &model.d * model.d.transpose() * dt;
            let cross = &phi * &p * c.transpose() + &model.b * model.d.transpose() * dt;
            let gain = &cross * s.clone().try_inverse().unwrap();
            let pred = &phi * &p * phi.transpose() + &model.b * model.b.transpose() * dt;
            m = &phi * &m + &gain * (y - &c * &m);
            p = pred - &gain * cross.transpose();
        }
        (m, p)
    }

    #[test]
    fn oracle_terminal_matches_discrete_kalman() {
        let alice = CouplingSpec::new(1.0, 0.3, -0.4, 0.8, Party::Alice).unwrap();
        let model = build_composite(
            build_subsystem(&alice, Basis::NonOrthogonal).unwrap(),
            build_subsystem(&CouplingSpec::identity(Party::Bob), Basis::NonOrthogonal).unwrap(),
        )
        .unwrap();
        let prior = tmss_prior(0.8, &alice.matrix()).unwrap();
        let cfg = SimConfig::new(5e-3, 0.5, 3, 17).unwrap();
        let b = simulate_record(model.system(), &prior, &cfg).unwrap();
        let oracle = DiscreteOracle::new(model.system(), &prior, &BOB, 100, 5e-3).unwrap();
        for rec in &b.records {
            let post = oracle.posterior(rec).unwrap();
            let (m, p) = discrete_kalman(model.system(), &prior, rec);
            assert!((&post.terminal.mean - &m).amax() < 1e-8, "{} vs {}", post.terminal.mean, m);
            assert!((&post.terminal.cov - &p).amax() < 1e-8);
        }
    }

    #[test]
    fn oracle_rejects_mismatched_record() {
        let model = scalar(0.0, 0.0, 1.0, 1.0);
        let oracle = DiscreteOracle::new(&model, &std_prior(1), &[0], 3, 0.1).unwrap();
        assert!(oracle.posterior(&MeasurementRecord::scalar(0.1, vec![0.0; 2]).unwrap()).is_err());
        assert!(oracle.posterior(&MeasurementRecord::scalar(0.2, vec![0.0; 3]).unwrap()).is_err());
    }

    #[test]
    fn no_entanglement_no_information() {
        let model = identity_model();
        let prior = tmss_prior(0.0, &Matrix::identity(2, 2)).unwrap();
        let cfg = SimConfig::new(1e-2, 1.0, 2000, 8).unwrap();
        let rep = monte_carlo_error(&SmoothingProblem::quantum(&model), &prior, &cfg, &[0.0, 0.5, 1.0]).unwrap();
        for pt in &rep.points {
            for i in 0..2 {
                for j in 0..2 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((pt.rhat[(i, j)] - want).abs() < 3.0 * pt.stderr[(i, j)], "{}", pt.rhat);
                }
                // With r = 0 the record says nothing about Bob, so mean0 stays 0.
                assert_eq!(pt.mean_estimate[i], 0.0);
            }
        }
    }

    #[test]
    fn monte_carlo_is_schedule_independent() {
        let model = identity_model();
        let prior = tmss_prior(1.0, &Matrix::identity(2, 2)).unwrap();
        let cfg = SimConfig::new(1e-2, 0.5, 300, 4).unwrap();
        let problem = SmoothingProblem::quantum(&model);
        let a = monte_carlo_error(&problem, &prior, &cfg, &[0.5]).unwrap();
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = single.install(|| monte_carlo_error(&problem, &prior, &cfg, &[0.5]).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn monte_carlo_means_match_step_functions() {
        // The mean-only loop reproduces the full estimator on the same record.
        let model = identity_model();
        let prior = tmss_prior(1.0, &Matrix::identity(2, 2)).unwrap();
        let cfg = SimConfig::new(1e-2, 0.3, 1, 21).unwrap();
        let problem = SmoothingProblem::quantum(&model);
        let b = simulate_record(model.system(), &prior, &cfg).unwrap();
        let est = problem.run_estimation(&prior, &b.records[0]).unwrap();
        let rep = monte_carlo_error(&problem, &prior, &cfg, &[0.3]).unwrap();
        assert_eq!(rep.points[0].mean_estimate, est.smoother.last().unwrap().mean0);
        assert_eq!(rep.points[0].predicted, est.smoother.last().unwrap().error_cov);
    }
}
