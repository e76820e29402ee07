//! Continuous-time filter and fixed-point smoother for linear-Gaussian
//! systems.
//!
//! The filter propagates the conditional mean of `x_t` and its error
//! covariance `S`; the smoother consumes the filter's mean and `S` at every
//! step and propagates the conditional mean of a subset of the initial state
//! `x_0`, the smoothing gain `K = Cov(x_0[target], x_t | record)` and the
//! smoothing error covariance `R`:
//!
//! ```text
//! F  = (S Cᵀ + B Dᵀ)(D Dᵀ)⁻¹
//! Ṡ  = A S + S Aᵀ + B Bᵀ - F (D Dᵀ) Fᵀ
//! K̇  = K Aᵀ - K Cᵀ (D Dᵀ)⁻¹ (S Cᵀ + B Dᵀ)ᵀ,   K(0) = S(0)[target, :]
//! Ṙ  = -K Cᵀ (D Dᵀ)⁻¹ C Kᵀ,                    R(0) = S(0)[target, target]
//! ```
//!
//! Means take Euler steps driven by the innovation `dm - C·mean·dt`; the
//! three covariance ODEs take RK4 steps and are re-symmetrized afterwards.
//! The quantum Alice–Bob problem uses exactly the same arithmetic with the
//! composite model's matrices and Bob's initial pair as the target. Because
//! `C` only reads Alice's first quadrature, the Alice columns of `K` are the
//! 2×2 smoothing gain of the quantum smoother and never depend on Bob's
//! drift.

use crate::error::{shape_error, Error, Result};
use crate::model::{CompositeModel, GaussianBelief, LinearModel, BOB};
use crate::numerics::{min_eigenvalue, rk4_step, select, step_count, symmetrize, Matrix, OdeState, Vector, PSD_TOLERANCE};

/// Sign of the `B Dᵀ` cross term in the filter gain.
///
/// [`GainSign::Plus`] is the correct Kalman–Bucy gain and is what every
/// estimator in this crate uses. [`GainSign::Minus`] exists only so the
/// alternative convention can be evaluated and shown not to reproduce the
/// logistic closed form of the filter variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainSign {
    #[default]
    Plus,
    Minus,
}

impl GainSign {
    fn factor(self) -> f64 {
        match self {
            GainSign::Plus => 1.0,
            GainSign::Minus => -1.0,
        }
    }
}

/// Time-indexed homodyne record: `len()` increments of dimension `dim`
/// sampled with a fixed step.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    dt: f64,
    dim: usize,
    increments: Vec<f64>,
}

impl MeasurementRecord {
    /// `increments` is row-major: step `k` occupies `k*dim..(k+1)*dim`.
    pub fn new(dt: f64, dim: usize, increments: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("record step must be positive, got {dt}")));
        }
        if dim == 0 || increments.is_empty() || !increments.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "record needs a positive number of {dim}-dimensional increments, got {} values",
                increments.len()
            )));
        }
        if increments.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("record increments must be finite".into()));
        }
        Ok(Self { dt, dim, increments })
    }

    pub fn scalar(dt: f64, increments: Vec<f64>) -> Result<Self> {
        Self::new(dt, 1, increments)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.increments.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.increments
    }

    /// Record with every increment multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.dt, self.dim, self.increments.iter().map(|v| v * factor).collect())
    }

    /// Sums groups of `factor` consecutive increments, giving the same
    /// record on a grid `factor` times coarser.
    pub fn coarsened(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.len().is_multiple_of(factor) {
            return Err(Error::InvalidArgument(format!(
                "cannot coarsen {} steps by {factor}",
                self.len()
            )));
        }
        let mut out = Vec::with_capacity(self.increments.len() / factor);
        for k in (0..self.len()).step_by(factor) {
            for i in 0..self.dim {
                out.push((k..k + factor).map(|j| self.increment(j)[i]).sum());
            }
        }
        Self::new(self.dt * factor as f64, self.dim, out)
    }
}

/// Filter output at time `t`: conditional mean and error covariance `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub t: f64,
    pub mean: Vector,
    pub cov: Matrix,
}

/// Smoother output at time `t` for the target block of `x_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherState {
    pub t: f64,
    /// Conditional mean of `x_0[target]`.
    pub mean0: Vector,
    /// `Cov(x_0[target], x_t | record)`, one row per target coordinate and
    /// one column per state coordinate.
    pub gain: Matrix,
    /// Smoothing error covariance of `x_0[target]`.
    pub error_cov: Matrix,
}

impl SmootherState {
    /// Gain columns for the given state coordinates.
    pub fn gain_block(&self, cols: &[usize]) -> Matrix {
        let rows: Vec<usize> = (0..self.gain.nrows()).collect();
        select(&self.gain, &rows, cols)
    }
}

/// `S`, `K` and `R` advanced together by one RK4 integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState {
    pub filter_cov: Matrix,
    pub gain: Matrix,
    pub error_cov: Matrix,
}

impl OdeState for CovarianceState {
    fn add_scaled(&self, rate: &Self, h: f64) -> Self {
        Self {
            filter_cov: self.filter_cov.add_scaled(&rate.filter_cov, h),
            gain: self.gain.add_scaled(&rate.gain, h),
            error_cov: self.error_cov.add_scaled(&rate.error_cov, h),
        }
    }

    fn all_finite(&self) -> bool {
        self.filter_cov.all_finite() && self.gain.all_finite() && self.error_cov.all_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSnapshot {
    pub t: f64,
    pub state: CovarianceState,
}

/// Record-independent covariances and gains on a fixed grid.
#[derive(Debug, Clone)]
pub struct CovariancePath {
    dt: f64,
    states: Vec<CovarianceState>,
    filter_gains: Vec<Matrix>,
    smoother_gains: Vec<Matrix>,
}

impl CovariancePath {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps; there are `steps() + 1` states.
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn state(&self, k: usize) -> &CovarianceState {
        &self.states[k]
    }

    pub fn states(&self) -> &[CovarianceState] {
        &self.states
    }

    /// Filter gain `F` at grid point `k`.
    pub fn filter_gain(&self, k: usize) -> &Matrix {
        &self.filter_gains[k]
    }

    /// Smoother innovation gain `K Cᵀ (D Dᵀ)⁻¹` at grid point `k`.
    pub fn smoother_gain(&self, k: usize) -> &Matrix {
        &self.smoother_gains[k]
    }
}

/// Filter and smoother outputs, both including the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimation {
    pub filter: Vec<FilterState>,
    pub smoother: Vec<SmootherState>,
}

/// A linear-Gaussian system together with the block of the initial state
/// that the fixed-point smoother estimates.
#[derive(Debug, Clone)]
pub struct SmoothingProblem {
    system: LinearModel,
    target: Vec<usize>,
    gain_sign: GainSign,
    bbt: Matrix,
    bdt: Matrix,
}

impl SmoothingProblem {
    pub fn new(system: LinearModel, target: Vec<usize>) -> Result<Self> {
        let n = system.state_dim();
        if target.is_empty() || target.iter().any(|&i| i >= n) {
            return Err(Error::InvalidArgument(format!(
                "smoothing target {target:?} is not a non-empty subset of 0..{n}"
            )));
        }
        let bbt = &system.b * system.b.transpose();
        let bdt = &system.b * system.d.transpose();
        Ok(Self {
            system,
            target,
            gain_sign: GainSign::Plus,
            bbt,
            bdt,
        })
    }

    /// Alice measures, the target is Bob's initial pair.
    pub fn quantum(model: &CompositeModel) -> Self {
        Self::new(model.system().clone(), BOB.to_vec()).expect("Bob's pair is a valid target")
    }

    /// Smooths the whole initial state.
    pub fn classical(system: LinearModel) -> Self {
        let n = system.state_dim();
        Self::new(system, (0..n).collect()).expect("full target is valid")
    }

    pub fn with_gain_sign(mut self, sign: GainSign) -> Self {
        self.gain_sign = sign;
        self
    }

    pub fn system(&self) -> &LinearModel {
        &self.system
    }

    pub fn target(&self) -> &[usize] {
        &self.target
    }

    /// `S Cᵀ ± B Dᵀ`.
    fn cross_term(&self, s: &Matrix) -> Matrix {
        s * self.system.c.transpose() + &self.bdt * self.gain_sign.factor()
    }

    /// Filter gain `(S Cᵀ + B Dᵀ)(D Dᵀ)⁻¹`.
    pub fn filter_gain(&self, s: &Matrix) -> Matrix {
        self.cross_term(s) * self.system.dd_inv()
    }

    /// Smoother innovation gain `K Cᵀ (D Dᵀ)⁻¹`.
    pub fn smoother_gain(&self, k: &Matrix) -> Matrix {
        k * self.system.c.transpose() * self.system.dd_inv()
    }

    /// Right-hand side of the filter Riccati equation.
    pub fn riccati_rhs(&self, s: &Matrix) -> Matrix {
        let a = &self.system.a;
        let cross = self.cross_term(s);
        a * s + s * a.transpose() + &self.bbt - &cross * self.system.dd_inv() * cross.transpose()
    }

    /// Right-hand side of the joint `(S, K, R)` system.
    pub fn covariance_rhs(&self, st: &CovarianceState) -> CovarianceState {
        let cross = self.cross_term(&st.filter_cov);
        // Same association as the filter's F (D Dᵀ)⁻¹ Fᵀ, so that a
        // coordinate with no drift or noise gets bit-identical S and R.
        let k_ct = &st.gain * self.system.c.transpose();
        let k_ct_w = &k_ct * self.system.dd_inv();
        CovarianceState {
            filter_cov: self.riccati_rhs(&st.filter_cov),
            gain: &st.gain * self.system.a.transpose() - &k_ct_w * cross.transpose(),
            error_cov: -(&k_ct_w * k_ct.transpose()),
        }
    }

    fn check_prior(&self, prior: &GaussianBelief) -> Result<()> {
        let n = self.system.state_dim();
        if prior.dim() != n {
            return Err(shape_error("prior", n, prior.dim()));
        }
        Ok(())
    }

    fn check_increment(&self, dm: &[f64]) -> Result<()> {
        if dm.len() != self.system.output_dim() {
            return Err(shape_error("measurement increment", self.system.output_dim(), dm.len()));
        }
        Ok(())
    }

    /// Covariance state at `t = 0` for a prior covariance.
    pub fn initial_covariances(&self, prior_cov: &Matrix) -> CovarianceState {
        let all: Vec<usize> = (0..self.system.state_dim()).collect();
        CovarianceState {
            filter_cov: prior_cov.clone(),
            gain: select(prior_cov, &self.target, &all),
            error_cov: select(prior_cov, &self.target, &self.target),
        }
    }

    pub fn initial_states(&self, prior: &GaussianBelief) -> Result<(FilterState, SmootherState)> {
        self.check_prior(prior)?;
        let cov = self.initial_covariances(&prior.cov);
        let mean0 = Vector::from_iterator(self.target.len(), self.target.iter().map(|&i| prior.mean[i]));
        Ok((
            FilterState {
                t: 0.0,
                mean: prior.mean.clone(),
                cov: prior.cov.clone(),
            },
            SmootherState {
                t: 0.0,
                mean0,
                gain: cov.gain,
                error_cov: cov.error_cov,
            },
        ))
    }

    /// One RK4 step of the joint covariance system with re-symmetrization
    /// and PSD checks at the end of the step.
    pub fn covariance_step(&self, st: &CovarianceState, t: f64, dt: f64) -> Result<CovarianceState> {
        let mut next = rk4_step(&mut |_, y: &CovarianceState| self.covariance_rhs(y), t, st, dt)?;
        symmetrize(&mut next.filter_cov);
        symmetrize(&mut next.error_cov);
        check_stable(&next.filter_cov, t + dt)?;
        check_stable(&next.error_cov, t + dt)?;
        Ok(next)
    }

    fn filter_cov_step(&self, s: &Matrix, t: f64, dt: f64) -> Result<Matrix> {
        let mut next = rk4_step(&mut |_, y: &Matrix| self.riccati_rhs(y), t, s, dt)?;
        symmetrize(&mut next);
        check_stable(&next, t + dt)?;
        Ok(next)
    }

    /// Advances the filter by one increment `dm` over `dt`.
    pub fn filter_step(&self, state: &FilterState, dm: &[f64], dt: f64) -> Result<FilterState> {
        self.check_increment(dm)?;
        let gain = self.filter_gain(&state.cov);
        let mut innov = vec![0.0; dm.len()];
        innovation(&self.system, state.mean.as_slice(), dm, dt, &mut innov);
        let mut mean = Vector::zeros(state.mean.len());
        advance_filter_mean(&self.system, &gain, state.mean.as_slice(), &innov, dt, mean.as_mut_slice());
        let cov = self.filter_cov_step(&state.cov, state.t, dt)?;
        Ok(FilterState { t: state.t + dt, mean, cov })
    }

    /// Advances the smoother by one increment, consuming the filter state at
    /// the start of the step.
    pub fn smoother_step(&self, fstate: &FilterState, sstate: &SmootherState, dm: &[f64], dt: f64) -> Result<SmootherState> {
        self.check_increment(dm)?;
        if (fstate.t - sstate.t).abs() > 1e-9 * dt.max(fstate.t.abs()) {
            return Err(Error::InvalidArgument(format!(
                "filter state at t = {} does not match smoother state at t = {}",
                fstate.t, sstate.t
            )));
        }
        let mut innov = vec![0.0; dm.len()];
        innovation(&self.system, fstate.mean.as_slice(), dm, dt, &mut innov);
        let smoother_gain = self.smoother_gain(&sstate.gain);
        let mut mean0 = Vector::zeros(sstate.mean0.len());
        advance_smoothed_mean(&smoother_gain, sstate.mean0.as_slice(), &innov, mean0.as_mut_slice());
        let joint = CovarianceState {
            filter_cov: fstate.cov.clone(),
            gain: sstate.gain.clone(),
            error_cov: sstate.error_cov.clone(),
        };
        let next = self.covariance_step(&joint, sstate.t, dt)?;
        Ok(SmootherState {
            t: sstate.t + dt,
            mean0,
            gain: next.gain,
            error_cov: next.error_cov,
        })
    }

    /// Runs filter and smoother jointly over a record. Both output series
    /// have `record.len() + 1` entries.
    pub fn run_estimation(&self, prior: &GaussianBelief, record: &MeasurementRecord) -> Result<Estimation> {
        self.check_prior(prior)?;
        if record.dim() != self.system.output_dim() {
            return Err(shape_error("record dimension", self.system.output_dim(), record.dim()));
        }
        let dt = record.dt();
        let (mut f, mut s) = self.initial_states(prior)?;
        let mut filter = Vec::with_capacity(record.len() + 1);
        let mut smoother = Vec::with_capacity(record.len() + 1);
        filter.push(f.clone());
        smoother.push(s.clone());
        for k in 0..record.len() {
            let dm = record.increment(k);
            let s_next = self.smoother_step(&f, &s, dm, dt)?;
            let mut f_next = self.filter_step(&f, dm, dt)?;
            // Pin the grid to k·dt instead of accumulating rounding.
            let t = (k + 1) as f64 * dt;
            f_next.t = t;
            f = f_next;
            s = SmootherState { t, ..s_next };
            filter.push(f.clone());
            smoother.push(s.clone());
        }
        Ok(Estimation { filter, smoother })
    }

    /// Record-independent covariances and gains over `steps` steps of `dt`.
    pub fn covariance_path(&self, prior_cov: &Matrix, steps: usize, dt: f64) -> Result<CovariancePath> {
        let n = self.system.state_dim();
        if prior_cov.shape() != (n, n) {
            return Err(shape_error("prior covariance", format!("{n}x{n}"), format!("{:?}", prior_cov.shape())));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("step must be positive, got {dt}")));
        }
        let mut states = Vec::with_capacity(steps + 1);
        let mut filter_gains = Vec::with_capacity(steps + 1);
        let mut smoother_gains = Vec::with_capacity(steps + 1);
        let mut st = self.initial_covariances(prior_cov);
        for k in 0..=steps {
            filter_gains.push(self.filter_gain(&st.filter_cov));
            smoother_gains.push(self.smoother_gain(&st.gain));
            if k < steps {
                let next = self.covariance_step(&st, k as f64 * dt, dt)?;
                states.push(std::mem::replace(&mut st, next));
            }
        }
        states.push(st);
        Ok(CovariancePath {
            dt,
            states,
            filter_gains,
            smoother_gains,
        })
    }

    /// Deterministic propagation of `S`, `K` and `R` from `t = 0` to `t_end`.
    pub fn run_covariances(&self, prior_cov: &Matrix, t_end: f64, dt: f64) -> Result<Vec<CovarianceSnapshot>> {
        let steps = step_count(t_end, dt)?;
        let h = t_end / steps as f64;
        let path = self.covariance_path(prior_cov, steps, h)?;
        Ok(path
            .states
            .into_iter()
            .enumerate()
            .map(|(k, state)| CovarianceSnapshot { t: k as f64 * h, state })
            .collect())
    }
}

fn check_stable(m: &Matrix, t: f64) -> Result<()> {
    let min = min_eigenvalue(m);
    if min < -PSD_TOLERANCE || !min.is_finite() {
        return Err(Error::NumericalInstability { t, min_eigenvalue: min });
    }
    Ok(())
}

/// `dm - C·mean·dt`.
pub fn innovation(model: &LinearModel, mean: &[f64], dm: &[f64], dt: f64, out: &mut [f64]) {
    let c = &model.c;
    for (i, o) in out.iter_mut().enumerate() {
        let mut pred = 0.0;
        for (j, m) in mean.iter().enumerate() {
            pred += c[(i, j)] * m;
        }
        *o = dm[i] - dt * pred;
    }
}

/// `mean + A·mean·dt + gain·innovation`.
pub fn advance_filter_mean(model: &LinearModel, gain: &Matrix, mean: &[f64], innov: &[f64], dt: f64, out: &mut [f64]) {
    let a = &model.a;
    for (i, o) in out.iter_mut().enumerate() {
        let mut drift = 0.0;
        for (j, m) in mean.iter().enumerate() {
            drift += a[(i, j)] * m;
        }
        let mut update = 0.0;
        for (l, v) in innov.iter().enumerate() {
            update += gain[(i, l)] * v;
        }
        *o = mean[i] + dt * drift + update;
    }
}

/// `mean0 + smoother_gain·innovation`.
pub fn advance_smoothed_mean(smoother_gain: &Matrix, mean0: &[f64], innov: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut update = 0.0;
        for (l, v) in innov.iter().enumerate() {
            update += smoother_gain[(i, l)] * v;
        }
        *o = mean0[i] + update;
    }
}

/// Filter gain for a model and filter covariance, `(S Cᵀ + B Dᵀ)(D Dᵀ)⁻¹`.
pub fn filter_gain(model: &LinearModel, s: &Matrix) -> Matrix {
    (s * model.c.transpose() + &model.b * model.d.transpose()) * model.dd_inv()
}

/// Filter and smoother of the entire initial state for arbitrary
/// `A, B, C, D`.
pub fn classical_filter_smoother(system: LinearModel, prior: &GaussianBelief, record: &MeasurementRecord) -> Result<Estimation> {
    SmoothingProblem::classical(system).run_estimation(prior, record)
}
