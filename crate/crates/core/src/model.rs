//! Linear-system construction from measurement couplings, composite
//! Alice–Bob models, and Gaussian priors.
//!
//! Quadratures follow `x = a + a†`, `y = -i(a - a†)`, so `[x, y] = 2i` and
//! the vacuum has unit variance in each quadrature. Every covariance in this
//! crate uses that normalization; the two-mode squeezed vacuum has `cosh r`
//! on its diagonal.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{shape_error, Error, Result};
use crate::numerics::{check_psd, min_eigenvalue, symmetrized, Matrix, Vector};

/// `|det G|` below this value is treated as a degenerate coupling.
pub const DEGENERACY_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Party {
    Alice,
    Bob,
}

/// Coupling of one subsystem to its field, `L = (α + iβ)/2·x + (γ + iδ)/2·y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingSpec {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub label: Party,
    det: f64,
}

impl CouplingSpec {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64, label: Party) -> Result<Self> {
        if ![alpha, beta, gamma, delta].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("coupling coefficients must be finite".into()));
        }
        Ok(Self {
            alpha,
            beta,
            gamma,
            delta,
            label,
            det: alpha * delta - beta * gamma,
        })
    }

    /// `G = I`, the default coupling for Bob.
    pub fn identity(label: Party) -> Self {
        Self::new(1.0, 0.0, 0.0, 1.0, label).expect("finite")
    }

    /// `G = [[α, γ], [β, δ]]`.
    pub fn matrix(&self) -> Matrix {
        Matrix::from_row_slice(2, 2, &[self.alpha, self.gamma, self.beta, self.delta])
    }

    /// `Δ = det G`.
    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn is_degenerate(&self) -> bool {
        self.det.abs() < DEGENERACY_THRESHOLD
    }

    /// Adjugate of `G`, equal to `Δ·G⁻¹` and defined even when `Δ = 0`.
    fn adjugate(&self) -> Matrix {
        Matrix::from_row_slice(2, 2, &[self.delta, -self.gamma, -self.beta, self.alpha])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// Orthonormal quadratures `x = (x, y)`.
    Orthonormal,
    /// Non-orthogonal quadratures `X = G·x`; requires `det G ≠ 0`.
    NonOrthogonal,
    /// QND-rotated quadratures `x′ = T·x` of a degenerate coupling.
    QndRotated,
}

/// Linear model of one subsystem with its homodyne-measured output row.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub basis: Basis,
}

impl SubsystemModel {
    /// Re-expresses the model in the coordinates `z = T·x`.
    pub fn change_basis(&self, t: &Matrix, basis: Basis) -> Result<SubsystemModel> {
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("basis change must be invertible".into()))?;
        Ok(SubsystemModel {
            a: t * &self.a * &t_inv,
            b: t * &self.b,
            c: &self.c * &t_inv,
            d: self.d.clone(),
            basis,
        })
    }

    pub fn system(&self) -> Result<LinearModel> {
        LinearModel::new(self.a.clone(), self.b.clone(), self.c.clone(), self.d.clone())
    }
}

/// Builds one subsystem's drift, noise and output matrices.
///
/// In the non-orthogonal basis the model is `dX = -Δ/2·X dt - Δ dw`,
/// `dm = X₁ dt + dw₁`. In the orthonormal basis it is
/// `dx = -Δ/2·x dt - Δ G⁻¹ dw`, `dm = (α x + γ y) dt + dw₁`, where
/// `Δ G⁻¹` is evaluated as the adjugate so degenerate couplings are allowed.
pub fn build_subsystem(spec: &CouplingSpec, basis: Basis) -> Result<SubsystemModel> {
    let delta = spec.det();
    let measured_noise = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
    match basis {
        Basis::NonOrthogonal => {
            if spec.is_degenerate() {
                return Err(Error::DegenerateCoupling { delta });
            }
            Ok(SubsystemModel {
                a: Matrix::identity(2, 2) * (-delta / 2.0),
                b: Matrix::identity(2, 2) * (-delta),
                c: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
                d: measured_noise,
                basis,
            })
        }
        Basis::Orthonormal => Ok(SubsystemModel {
            a: Matrix::identity(2, 2) * (-delta / 2.0),
            b: -spec.adjugate(),
            c: Matrix::from_row_slice(1, 2, &[spec.alpha, spec.gamma]),
            d: measured_noise,
            basis,
        }),
        Basis::QndRotated => qnd_transform(spec),
    }
}

/// The orthogonal involution `T = (1/√2)[[1, 1], [1, -1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QndTransform {
    pub matrix: Matrix,
}

impl Default for QndTransform {
    fn default() -> Self {
        Self {
            matrix: Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]) * FRAC_1_SQRT_2,
        }
    }
}

impl QndTransform {
    pub fn apply(&self, x: &Vector) -> Vector {
        &self.matrix * x
    }
}

/// Model of a degenerate coupling `G = [[a, a], [b, b]]` in the rotated
/// coordinates `x′ = T·x`.
///
/// The first coordinate `x′ ∝ x + y` has neither drift nor noise, and the
/// measured output reads it with coefficient `√2·a`.
pub fn qnd_transform(spec: &CouplingSpec) -> Result<SubsystemModel> {
    if !spec.is_degenerate() {
        return Err(Error::UnsupportedDegeneracy(format!(
            "QND transform needs det G = 0, got {:e}",
            spec.det()
        )));
    }
    let same = |p: f64, q: f64| (p - q).abs() <= 1e-12 * p.abs().max(q.abs()).max(1.0);
    if !same(spec.alpha, spec.gamma) || !same(spec.beta, spec.delta) {
        return Err(Error::UnsupportedDegeneracy(
            "only G = [[a, a], [b, b]] is supported (alpha = gamma, beta = delta)".into(),
        ));
    }
    let (a, b) = (spec.alpha, spec.beta);
    if a == 0.0 && b == 0.0 {
        return Err(Error::UnsupportedDegeneracy("G = 0 has no measurement coupling".into()));
    }
    Ok(SubsystemModel {
        a: Matrix::zeros(2, 2),
        b: Matrix::from_row_slice(2, 2, &[0.0, 0.0, -2.0 * b, 2.0 * a]) * FRAC_1_SQRT_2,
        c: Matrix::from_row_slice(1, 2, &[2.0 * a * FRAC_1_SQRT_2, 0.0]),
        d: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
        basis: Basis::QndRotated,
    })
}

/// General linear-Gaussian system `dx = A x dt + B dw`, `dm = C x dt + D dw`
/// with `dw dwᵀ = I dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    dd_inv: Matrix,
}

impl LinearModel {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(shape_error("A", "square", format!("{:?}", a.shape())));
        }
        if b.nrows() != n {
            return Err(shape_error("B", format!("{n} rows"), b.nrows()));
        }
        if c.ncols() != n {
            return Err(shape_error("C", format!("{n} columns"), c.ncols()));
        }
        if d.shape() != (c.nrows(), b.ncols()) {
            return Err(shape_error(
                "D",
                format!("{}x{}", c.nrows(), b.ncols()),
                format!("{:?}", d.shape()),
            ));
        }
        if [&a, &b, &c, &d].iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidModel("non-finite coefficient".into()));
        }
        let dd = &d * d.transpose();
        let dd_inv = dd
            .try_inverse()
            .filter(|m| m.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::InvalidModel("D·Dᵀ is singular".into()))?;
        Ok(Self { a, b, c, d, dd_inv })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn noise_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// `(D·Dᵀ)⁻¹`.
    pub fn dd_inv(&self) -> &Matrix {
        &self.dd_inv
    }
}

/// Joint Alice–Bob model. Only Alice's output channel is measured; noise
/// channels are ordered `(w_A, v_A, w_B, v_B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeModel {
    pub alice: SubsystemModel,
    pub bob: SubsystemModel,
    system: LinearModel,
}

/// State indices of Alice's pair.
pub const ALICE: [usize; 2] = [0, 1];
/// State indices of Bob's pair.
pub const BOB: [usize; 2] = [2, 3];

impl CompositeModel {
    pub fn system(&self) -> &LinearModel {
        &self.system
    }

    pub fn a(&self) -> &Matrix {
        &self.system.a
    }

    pub fn b(&self) -> &Matrix {
        &self.system.b
    }

    pub fn c(&self) -> &Matrix {
        &self.system.c
    }

    pub fn d(&self) -> &Matrix {
        &self.system.d
    }
}

pub fn build_composite(alice: SubsystemModel, bob: SubsystemModel) -> Result<CompositeModel> {
    if alice.basis != bob.basis {
        return Err(Error::InvalidModel(format!(
            "subsystems use different bases ({:?} vs {:?})",
            alice.basis, bob.basis
        )));
    }
    for (name, m) in [("Alice", &alice), ("Bob", &bob)] {
        if m.a.shape() != (2, 2) || m.b.shape() != (2, 2) || m.c.shape() != (1, 2) || m.d.shape() != (1, 2) {
            return Err(shape_error("subsystem", "2x2 A, B and 1x2 C, D", name));
        }
    }
    let mut a = Matrix::zeros(4, 4);
    let mut b = Matrix::zeros(4, 4);
    a.view_mut((0, 0), (2, 2)).copy_from(&alice.a);
    a.view_mut((2, 2), (2, 2)).copy_from(&bob.a);
    b.view_mut((0, 0), (2, 2)).copy_from(&alice.b);
    b.view_mut((2, 2), (2, 2)).copy_from(&bob.b);
    let mut c = Matrix::zeros(1, 4);
    let mut d = Matrix::zeros(1, 4);
    c.view_mut((0, 0), (1, 2)).copy_from(&alice.c);
    d.view_mut((0, 0), (1, 2)).copy_from(&alice.d);
    let system = LinearModel::new(a, b, c, d)?;
    Ok(CompositeModel { alice, bob, system })
}

/// Mean and covariance of a Gaussian state or posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: Vector,
    pub cov: Matrix,
}

impl GaussianBelief {
    /// Validates shape and PSD-ness; the covariance is symmetrized.
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(shape_error(
                "covariance",
                format!("{0}x{0}", mean.len()),
                format!("{:?}", cov.shape()),
            ));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("mean must be finite".into()));
        }
        let cov = symmetrized(&cov);
        check_psd(&cov)?;
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `diag(-1, 1)`.
pub fn tmss_j() -> Matrix {
    Matrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0])
}

/// Two-mode squeezed vacuum with Alice's pair expressed as `X = G·x`:
/// `[[cosh r·G Gᵀ, sinh r·G J], [sinh r·J Gᵀ, cosh r·I]]`, zero mean.
pub fn tmss_prior(r: f64, alice_g: &Matrix) -> Result<GaussianBelief> {
    if !r.is_finite() || r < 0.0 {
        return Err(Error::InvalidArgument(format!("squeezing must be finite and non-negative, got {r}")));
    }
    if alice_g.shape() != (2, 2) {
        return Err(shape_error("G", "2x2", format!("{:?}", alice_g.shape())));
    }
    let (ch, sh) = (r.cosh(), r.sinh());
    let j = tmss_j();
    let mut cov = Matrix::zeros(4, 4);
    cov.view_mut((0, 0), (2, 2)).copy_from(&(alice_g * alice_g.transpose() * ch));
    cov.view_mut((0, 2), (2, 2)).copy_from(&(alice_g * &j * sh));
    cov.view_mut((2, 0), (2, 2)).copy_from(&(&j * alice_g.transpose() * sh));
    cov.view_mut((2, 2), (2, 2)).copy_from(&(Matrix::identity(2, 2) * ch));
    GaussianBelief::new(Vector::zeros(4), cov)
}

/// Symplectic form for `n` modes with `[x, y] = 2i`, as the real
/// antisymmetric matrix `Ω` such that the uncertainty principle reads
/// `V + iΩ ⪰ 0`.
pub fn symplectic_form(modes: usize) -> Matrix {
    let mut omega = Matrix::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// Smallest eigenvalue of the Hermitian matrix `V + iΩ`, computed through
/// its real symmetric embedding `[[V, -Ω], [Ω, V]]`.
pub fn uncertainty_min_eigenvalue(cov: &Matrix) -> f64 {
    let n = cov.nrows();
    let omega = symplectic_form(n / 2);
    let mut embed = Matrix::zeros(2 * n, 2 * n);
    embed.view_mut((0, 0), (n, n)).copy_from(cov);
    embed.view_mut((n, n), (n, n)).copy_from(cov);
    embed.view_mut((0, n), (n, n)).copy_from(&(-&omega));
    embed.view_mut((n, 0), (n, n)).copy_from(&omega);
    min_eigenvalue(&embed)
}
