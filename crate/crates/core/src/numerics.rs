//! Small dense linear algebra, fixed-step ODE integration, Euler–Maruyama
//! stepping and exact Gaussian conditioning.
//!
//! Everything here is a pure function over `nalgebra` dynamic matrices. The
//! state dimensions in this crate are tiny (1, 2 or 4) except for the batch
//! conditioning performed by the discrete oracle, which is why the PSD and
//! condition-number checks switch to Cholesky-based tests above
//! [`DENSE_EIGEN_LIMIT`].

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{shape_error, Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Eigenvalue floor below which a covariance is rejected.
pub const PSD_TOLERANCE: f64 = 1e-9;
/// Tikhonov shift applied to ill-conditioned observed blocks.
pub const REGULARIZATION_EPS: f64 = 1e-12;
/// Condition number above which the observed block is regularized.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Largest dimension for which exact symmetric eigenvalues are computed.
pub const DENSE_EIGEN_LIMIT: usize = 64;

/// Returns `(M + Mᵀ) / 2`.
pub fn symmetrized(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Symmetrizes `m` in place.
pub fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrized(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Checks that `m` is square, finite and positive semidefinite up to
/// [`PSD_TOLERANCE`].
pub fn check_psd(m: &Matrix) -> Result<()> {
    if !m.is_square() {
        return Err(shape_error("covariance", "square matrix", format!("{}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidCovariance { min_eigenvalue: f64::NAN });
    }
    let n = m.nrows();
    if n <= DENSE_EIGEN_LIMIT {
        let min = min_eigenvalue(m);
        if min < -PSD_TOLERANCE {
            return Err(Error::InvalidCovariance { min_eigenvalue: min });
        }
        return Ok(());
    }
    // λ_min(M) > -tol  <=>  M + tol·I is positive definite.
    let shifted = symmetrized(m) + Matrix::identity(n, n) * PSD_TOLERANCE;
    match Cholesky::new(shifted) {
        Some(_) => Ok(()),
        None => Err(Error::InvalidCovariance { min_eigenvalue: -PSD_TOLERANCE }),
    }
}

/// Condition number of a symmetric positive semidefinite matrix. Exact for
/// small matrices, otherwise estimated from the Cholesky diagonal (a lower
/// bound on the true value).
pub fn condition_number(m: &Matrix) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 1.0;
    }
    if n <= DENSE_EIGEN_LIMIT {
        let eig = SymmetricEigen::new(symmetrized(m)).eigenvalues;
        let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        return if min <= 0.0 { f64::INFINITY } else { max / min };
    }
    match Cholesky::new(symmetrized(m)) {
        Some(chol) => {
            let d = chol.l_dirty().diagonal();
            let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = d.iter().copied().fold(f64::INFINITY, f64::min);
            if min <= 0.0 {
                f64::INFINITY
            } else {
                (max / min).powi(2)
            }
        }
        None => f64::INFINITY,
    }
}

/// Symmetric square root factor `L` with `L·Lᵀ = m` for a PSD matrix. Works
/// for singular covariances, unlike a Cholesky factor.
pub fn psd_factor(m: &Matrix) -> Result<Matrix> {
    check_psd(m)?;
    let eig = SymmetricEigen::new(symmetrized(m));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * Matrix::from_diagonal(&roots))
}

/// A state that can be advanced by an explicit Runge–Kutta scheme.
pub trait OdeState: Clone {
    /// Returns `self + h·rate`.
    fn add_scaled(&self, rate: &Self, h: f64) -> Self;
    fn all_finite(&self) -> bool;
}

impl OdeState for f64 {
    fn add_scaled(&self, rate: &Self, h: f64) -> Self {
        self + h * rate
    }

    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl OdeState for Vector {
    fn add_scaled(&self, rate: &Self, h: f64) -> Self {
        self + rate * h
    }

    fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl OdeState for Matrix {
    fn add_scaled(&self, rate: &Self, h: f64) -> Self {
        self + rate * h
    }

    fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// One classical fourth-order Runge–Kutta step of size `h` from `(t, y)`.
pub fn rk4_step<Y, F>(deriv: &mut F, t: f64, y: &Y, h: f64) -> Result<Y>
where
    Y: OdeState,
    F: FnMut(f64, &Y) -> Y,
{
    let mut eval = |t: f64, y: &Y| {
        let k = deriv(t, y);
        if k.all_finite() {
            Ok(k)
        } else {
            Err(Error::IntegrationDiverged { t })
        }
    };
    let half = 0.5 * h;
    let k1 = eval(t, y)?;
    let k2 = eval(t + half, &y.add_scaled(&k1, half))?;
    let k3 = eval(t + half, &y.add_scaled(&k2, half))?;
    let k4 = eval(t + h, &y.add_scaled(&k3, h))?;
    Ok(y
        .add_scaled(&k1, h / 6.0)
        .add_scaled(&k2, h / 3.0)
        .add_scaled(&k3, h / 3.0)
        .add_scaled(&k4, h / 6.0))
}

/// Number of fixed steps used to cover `span` with nominal step `dt`.
///
/// The count is rounded so that the grid always lands exactly on the end of
/// the span; the effective step is `span / steps`.
pub fn step_count(span: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("step must be positive, got {dt}")));
    }
    if !(span > 0.0) || !span.is_finite() {
        return Err(Error::InvalidArgument(format!("time span must be positive, got {span}")));
    }
    Ok(((span / dt).round() as usize).max(1))
}

/// Fixed-step RK4 integration of `ẏ = deriv(t, y)` from `t0` to `t1`.
///
/// Returns the samples at `t0, t0 + h, …, t1`, including the initial value.
pub fn integrate_ode<Y, F>(mut deriv: F, y0: Y, t0: f64, t1: f64, dt: f64) -> Result<Vec<(f64, Y)>>
where
    Y: OdeState,
    F: FnMut(f64, &Y) -> Y,
{
    let steps = step_count(t1 - t0, dt)?;
    let h = (t1 - t0) / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = y0;
    out.push((t0, y.clone()));
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        y = rk4_step(&mut deriv, t, &y, h)?;
        out.push((t0 + (k + 1) as f64 * h, y.clone()));
    }
    Ok(out)
}

/// One Euler–Maruyama step of `dx = drift·x dt + noise_gain·dW`.
pub fn euler_maruyama_step(
    state: &Vector,
    drift: &Matrix,
    noise_gain: &Matrix,
    dw: &Vector,
    dt: f64,
) -> Result<Vector> {
    let n = state.len();
    if drift.shape() != (n, n) {
        return Err(shape_error("drift", format!("{n}x{n}"), format!("{:?}", drift.shape())));
    }
    if noise_gain.shape() != (n, dw.len()) {
        return Err(shape_error(
            "noise gain",
            format!("{n}x{}", dw.len()),
            format!("{:?}", noise_gain.shape()),
        ));
    }
    Ok(state + drift * state * dt + noise_gain * dw)
}

/// Precomputed Gaussian conditioning operator for a fixed covariance and a
/// fixed set of observed coordinates.
///
/// The conditional covariance and the regression matrix `Σ_ab Σ_bb⁻¹` do not
/// depend on the observed values, so one conditioner can be applied to many
/// observation vectors.
#[derive(Debug, Clone)]
pub struct GaussianConditioner {
    dim: usize,
    latent: Vec<usize>,
    observed: Vec<usize>,
    regression: Matrix,
    cond_cov: Matrix,
    regularized: bool,
}

impl GaussianConditioner {
    pub fn new(cov: &Matrix, observed_idx: &[usize]) -> Result<Self> {
        let n = cov.nrows();
        check_psd(cov)?;
        let mut seen = vec![false; n];
        for &i in observed_idx {
            if i >= n {
                return Err(Error::InvalidArgument(format!("observed index {i} out of range for dimension {n}")));
            }
            if seen[i] {
                return Err(Error::InvalidArgument(format!("observed index {i} repeated")));
            }
            seen[i] = true;
        }
        let latent: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();
        let observed = observed_idx.to_vec();
        let cov = symmetrized(cov);

        let sigma_aa = select(&cov, &latent, &latent);
        if observed.is_empty() {
            return Ok(Self {
                dim: n,
                latent,
                observed,
                regression: Matrix::zeros(sigma_aa.nrows(), 0),
                cond_cov: sigma_aa,
                regularized: false,
            });
        }

        let mut sigma_bb = select(&cov, &observed, &observed);
        let sigma_ba = select(&cov, &observed, &latent);
        let mut regularized = false;
        let cond = condition_number(&sigma_bb);
        if cond > CONDITION_LIMIT {
            log::warn!(
                "observed block condition number {cond:e} exceeds {CONDITION_LIMIT:e}; adding {REGULARIZATION_EPS:e}·I"
            );
            sigma_bb += Matrix::identity(observed.len(), observed.len()) * REGULARIZATION_EPS;
            regularized = true;
        }
        let chol = match Cholesky::new(sigma_bb.clone()) {
            Some(c) => c,
            None if !regularized => {
                log::warn!("observed block is singular; adding {REGULARIZATION_EPS:e}·I");
                regularized = true;
                let shifted = sigma_bb + Matrix::identity(observed.len(), observed.len()) * REGULARIZATION_EPS;
                Cholesky::<f64, Dyn>::new(shifted)
                    .ok_or(Error::InvalidCovariance { min_eigenvalue: -REGULARIZATION_EPS })?
            }
            None => return Err(Error::InvalidCovariance { min_eigenvalue: -REGULARIZATION_EPS }),
        };
        // Σ_bb⁻¹ Σ_ba, transposed to the regression matrix Σ_ab Σ_bb⁻¹.
        let solved = chol.solve(&sigma_ba);
        let regression = solved.transpose();
        let mut cond_cov = sigma_aa - &regression * &sigma_ba;
        symmetrize(&mut cond_cov);
        Ok(Self {
            dim: n,
            latent,
            observed,
            regression,
            cond_cov,
            regularized,
        })
    }

    /// Indices of the unobserved coordinates, in increasing order. The
    /// conditional mean and covariance are expressed in this order.
    pub fn latent(&self) -> &[usize] {
        &self.latent
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    /// `Σ_ab Σ_bb⁻¹`.
    pub fn regression(&self) -> &Matrix {
        &self.regression
    }

    pub fn conditional_covariance(&self) -> &Matrix {
        &self.cond_cov
    }

    /// Whether the observed block had to be regularized.
    pub fn regularized(&self) -> bool {
        self.regularized
    }

    /// Conditional mean of the latent block given `observed_vals`.
    pub fn condition_mean(&self, mean: &Vector, observed_vals: &Vector) -> Result<Vector> {
        if mean.len() != self.dim {
            return Err(shape_error("mean", self.dim, mean.len()));
        }
        if observed_vals.len() != self.observed.len() {
            return Err(shape_error("observed values", self.observed.len(), observed_vals.len()));
        }
        let mu_a = Vector::from_iterator(self.latent.len(), self.latent.iter().map(|&i| mean[i]));
        let resid = Vector::from_iterator(
            self.observed.len(),
            self.observed.iter().zip(observed_vals.iter()).map(|(&i, v)| v - mean[i]),
        );
        Ok(mu_a + &self.regression * resid)
    }
}

/// Exact conditional distribution of the unobserved coordinates of
/// `N(mean, cov)` given the coordinates `observed_idx` equal `observed_vals`.
///
/// Returns the conditional mean and covariance of the latent block, ordered
/// by increasing original index.
pub fn gaussian_condition(
    mean: &Vector,
    cov: &Matrix,
    observed_idx: &[usize],
    observed_vals: &Vector,
) -> Result<(Vector, Matrix)> {
    if mean.len() != cov.nrows() {
        return Err(shape_error("mean", cov.nrows(), mean.len()));
    }
    let conditioner = GaussianConditioner::new(cov, observed_idx)?;
    let m = conditioner.condition_mean(mean, observed_vals)?;
    Ok((m, conditioner.cond_cov))
}

/// Submatrix with the given row and column indices.
pub fn select(m: &Matrix, rows: &[usize], cols: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}
