//! Closed-form solutions for the two-mode squeezed example and the
//! information-theoretic diagnostics built on them.
//!
//! All logarithms are natural, so information is reported in nats. Bob's
//! coupling is `G^B = I` throughout.
//!
//! The closed forms assume `S₁₂(0) = 0`, i.e. `αβ + γδ = 0` for Alice's
//! coupling, which keeps Alice's filter covariance diagonal for all time.
//! Scenarios that violate it get [`Error::ClosedFormUnavailable`]; the ODE
//! path in [`crate::estimator`] still applies to them.

use crate::error::{Error, Result};
use crate::estimator::SmoothingProblem;
use crate::model::{build_composite, build_subsystem, tmss_prior, Basis, CompositeModel, CouplingSpec, GaussianBelief, Party};
use crate::numerics::{integrate_ode, select, Matrix};

/// Two-mode squeezed vacuum shared by Alice and Bob, Alice's coupling and a
/// diagonal weight `Θ = diag(Θ₁, Θ₂)` on Bob's initial pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TmssScenario {
    pub r: f64,
    pub alice: CouplingSpec,
    pub theta1: f64,
    pub theta2: f64,
}

impl TmssScenario {
    pub fn new(r: f64, alice: CouplingSpec, theta1: f64, theta2: f64) -> Result<Self> {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::InvalidArgument(format!("squeezing must be finite and non-negative, got {r}")));
        }
        if !(theta1 >= 0.0 && theta2 >= 0.0) {
            return Err(Error::InvalidArgument("weights must be non-negative".into()));
        }
        if alice.is_degenerate() {
            return Err(Error::DegenerateCoupling { delta: alice.det() });
        }
        if alice.det() < 0.0 {
            log::info!("det G = {} < 0: using |det G|, which has the same solution", alice.det());
        }
        Ok(Self { r, alice, theta1, theta2 })
    }

    /// Identity coupling for Alice with unit weights.
    pub fn identity(r: f64) -> Result<Self> {
        Self::new(r, CouplingSpec::identity(Party::Alice), 1.0, 1.0)
    }

    /// `Δ = |det G^A|`.
    pub fn delta(&self) -> f64 {
        self.alice.det().abs()
    }

    pub fn prior(&self) -> Result<GaussianBelief> {
        tmss_prior(self.r, &self.alice.matrix())
    }

    /// Composite model with Bob's coupling `G^B = I`.
    pub fn model(&self) -> Result<CompositeModel> {
        build_composite(
            build_subsystem(&self.alice, Basis::NonOrthogonal)?,
            build_subsystem(&CouplingSpec::identity(Party::Bob), Basis::NonOrthogonal)?,
        )
    }

    /// Closed-form curve parameters; fails when `S₁₂(0) ≠ 0`.
    pub fn curves(&self) -> Result<AnalyticCurves> {
        let prior = self.prior()?;
        let s0 = &prior.cov;
        let scale = s0[(0, 0)].abs().max(s0[(1, 1)].abs()).max(1.0);
        if s0[(0, 1)].abs() > 1e-12 * scale {
            return Err(Error::ClosedFormUnavailable(format!(
                "S12(0) = {:e}; closed forms need alpha*beta + gamma*delta = 0",
                s0[(0, 1)]
            )));
        }
        let delta = self.delta();
        let s11_0 = s0[(0, 0)];
        let s13_0 = s0[(0, 2)];
        let s14_0 = s0[(0, 3)];
        Ok(AnalyticCurves {
            delta,
            s11_0,
            s13_0,
            s14_0,
            bob0: select(s0, &[2, 3], &[2, 3]),
            mu: 1.0 - delta / s11_0,
            theta: self.theta1 * s13_0 * s13_0 + self.theta2 * s14_0 * s14_0,
        })
    }
}

/// Parameters of the closed-form solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticCurves {
    pub delta: f64,
    pub s11_0: f64,
    pub s13_0: f64,
    pub s14_0: f64,
    /// `S^B(0)`.
    pub bob0: Matrix,
    /// `μ = 1 - Δ/S₁₁(0)`.
    pub mu: f64,
    /// `θ = (S₁₃, S₁₄)(0) Θ (S₁₃, S₁₄)(0)ᵀ`.
    pub theta: f64,
}

impl AnalyticCurves {
    /// `h(t) = (1 - e^{-Δt}) / (1 - μ e^{-Δt})`.
    pub fn h(&self, t: f64) -> f64 {
        let e = (-self.delta * t).exp();
        (1.0 - e) / (1.0 - self.mu * e)
    }
}

/// Alice's filter variance `Δ / (1 - μ e^{-Δt})`, `μ = 1 - Δ/S₁₁(0)`.
pub fn s11_closed(t: f64, delta: f64, s11_0: f64) -> f64 {
    let mu = 1.0 - delta / s11_0;
    delta / (1.0 - mu * (-delta * t).exp())
}

/// First column `(K₁₁, K₂₁)` of the smoothing gain.
pub fn smoother_gain_closed(t: f64, curves: &AnalyticCurves) -> (f64, f64) {
    let d = curves.delta;
    let factor = (-d * t / 2.0).exp() * (1.0 - curves.mu) / (1.0 - curves.mu * (-d * t).exp());
    (curves.s13_0 * factor, curves.s14_0 * factor)
}

/// `R^B(t) = S^B(0) - v vᵀ h(t)/S₁₁(0)` with `v = (S₁₃, S₁₄)(0)`.
pub fn smoothing_error_closed(t: f64, curves: &AnalyticCurves) -> Matrix {
    let w = curves.h(t) / curves.s11_0;
    let v = [curves.s13_0, curves.s14_0];
    Matrix::from_fn(2, 2, |i, j| curves.bob0[(i, j)] - v[i] * v[j] * w)
}

/// Information measure `I(t) = θ h(t)/S₁₁(0)` with its initial rate `θ`
/// and asymptote `θ/S₁₁(0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoMeasure {
    pub value: f64,
    pub early_rate: f64,
    pub asymptote: f64,
}

pub fn info_measure(t: f64, curves: &AnalyticCurves) -> InfoMeasure {
    InfoMeasure {
        value: curves.theta * curves.h(t) / curves.s11_0,
        early_rate: curves.theta,
        asymptote: curves.theta / curves.s11_0,
    }
}

/// `det R^B(t) = cosh²r - h(t) sinh²r`, never below 1.
pub fn uncertainty_det(t: f64, scenario: &TmssScenario) -> Result<f64> {
    let curves = scenario.curves()?;
    let (c, s) = (scenario.r.cosh(), scenario.r.sinh());
    Ok(c * c - curves.h(t) * s * s)
}

/// Reference covariance for the filter's information term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterReference {
    /// Bob's unconditional covariance propagated to `t`, so the filter term
    /// is the mutual information between Bob's current pair and the record.
    #[default]
    Propagated,
    /// Bob's covariance at `t = 0`.
    Initial,
}

/// Mutual information between Bob's initial pair and the record, split into
/// the part carried by the filter estimate of Bob's current pair and the
/// remainder supplied by the smoother.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoDecomposition {
    pub t: f64,
    pub total: f64,
    pub filter: f64,
    pub smoother: f64,
}

fn half_log(t: f64, argument: f64) -> Result<f64> {
    if !(argument > 0.0) || !argument.is_finite() {
        return Err(Error::InvalidInformation { t, argument });
    }
    Ok(0.5 * argument.ln())
}

/// Information decomposition at every grid point of `[0, t_end]`.
///
/// `I_total = -½ ln(1 - h tanh²r)`, the filter term is
/// `½ ln det(P^B(t) S^B(t)⁻¹)` where `S^B(t)` comes from the RK4 Riccati run
/// and `P^B(t)` is the reference selected by `reference`, and the smoother
/// term is `½ ln det(S^B(t) R^B(t)⁻¹) + ½ ln det(S^B(0) P^B(t)⁻¹)` so that
/// the two terms add up to the total.
pub fn mutual_information_series(
    scenario: &TmssScenario,
    t_end: f64,
    dt: f64,
    reference: FilterReference,
) -> Result<Vec<InfoDecomposition>> {
    let curves = scenario.curves()?;
    let model = scenario.model()?;
    let prior = scenario.prior()?;
    let problem = SmoothingProblem::quantum(&model);
    let snaps = problem.run_covariances(&prior.cov, t_end, dt)?;

    let bob0 = curves.bob0.clone();
    let bob_a = model.bob.a.clone();
    let bob_bbt = &model.bob.b * model.bob.b.transpose();
    let unconditional = integrate_ode(
        |_, p: &Matrix| &bob_a * p + p * bob_a.transpose() + &bob_bbt,
        bob0.clone(),
        0.0,
        t_end,
        dt,
    )?;

    let tanh2 = scenario.r.tanh().powi(2);
    let det0 = bob0.determinant();
    snaps
        .iter()
        .zip(unconditional.iter())
        .map(|(snap, (_, p))| {
            let t = snap.t;
            let h = curves.h(t);
            let total = -half_log(t, 1.0 - h * tanh2)?;
            let bob_t = select(&snap.state.filter_cov, &[2, 3], &[2, 3]);
            let det_s = bob_t.determinant();
            let det_r = smoothing_error_closed(t, &curves).determinant();
            let det_ref = match reference {
                FilterReference::Propagated => p.determinant(),
                FilterReference::Initial => det0,
            };
            let filter = half_log(t, det_ref / det_s)?;
            let smoother = half_log(t, det_s / det_r)? + half_log(t, det0 / det_ref)?;
            Ok(InfoDecomposition { t, total, filter, smoother })
        })
        .collect()
}

/// Information decomposition at a single time `t`.
pub fn mutual_information(scenario: &TmssScenario, t: f64, dt: f64) -> Result<InfoDecomposition> {
    if t == 0.0 {
        return Ok(InfoDecomposition {
            t,
            total: 0.0,
            filter: 0.0,
            smoother: 0.0,
        });
    }
    let series = mutual_information_series(scenario, t, dt, FilterReference::Propagated)?;
    Ok(*series.last().expect("non-empty series"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqueezingRegime {
    /// `r ≪ 1`.
    Weak,
    /// `r ≫ 1` and `t ≪ r`.
    Strong,
}

/// Asymptotic approximations of the (filter, smoother) information terms.
///
/// Weak squeezing: `½ ln[1/(1 - e^{-t} h r²)]` and
/// `½ ln[(1 - e^{-t} h r²)/(1 - h r²)]`. Strong squeezing at early times:
/// `t - ½ ln(1 - h)` and `-t`.
pub fn asymptotic_info(t: f64, scenario: &TmssScenario, regime: SqueezingRegime) -> Result<(f64, f64)> {
    let h = scenario.curves()?.h(t);
    let r2 = scenario.r * scenario.r;
    match regime {
        SqueezingRegime::Weak => {
            let x = (-t).exp() * h * r2;
            Ok((-half_log(t, 1.0 - x)?, half_log(t, (1.0 - x) / (1.0 - h * r2))?))
        }
        SqueezingRegime::Strong => Ok((t - half_log(t, 1.0 - h)?, -t)),
    }
}

/// One point of the `(α, γ)` sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub alpha: f64,
    pub gamma: f64,
    pub early_rate: f64,
    pub asymptote: f64,
}

/// Evaluates `dI/dt|₀` and `I(∞)` over a grid of `(α, γ)`. Each point uses
/// `G = [[α, γ], [-γ, α]]`, which has `det G = α² + γ²` and satisfies the
/// closed-form condition `S₁₂(0) = 0`.
pub fn sweep(r: f64, theta1: f64, theta2: f64, alphas: &[f64], gammas: &[f64]) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::with_capacity(alphas.len() * gammas.len());
    for &alpha in alphas {
        for &gamma in gammas {
            let alice = CouplingSpec::new(alpha, -gamma, gamma, alpha, Party::Alice)?;
            let scenario = TmssScenario::new(r, alice, theta1, theta2)?;
            let m = info_measure(0.0, &scenario.curves()?);
            out.push(SweepPoint {
                alpha,
                gamma,
                early_rate: m.early_rate,
                asymptote: m.asymptote,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rotated(r: f64) -> TmssScenario {
        // G = [[1, 1], [-1, 1]], Δ = 2.
        TmssScenario::new(r, CouplingSpec::new(1.0, -1.0, 1.0, 1.0, Party::Alice).unwrap(), 1.0, 1.0).unwrap()
    }

    #[test]
    fn s11_limits() {
        assert_abs_diff_eq!(s11_closed(0.0, 1.3, 4.0), 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s11_closed(60.0, 1.3, 4.0), 1.3, epsilon = 1e-12);
        assert_abs_diff_eq!(s11_closed(1.0, 1.0, 2.0), 1.2253996735605641, epsilon = 1e-8);
    }

    #[test]
    fn gain_limits_and_value() {
        let c = TmssScenario::identity(1.0).unwrap().curves().unwrap();
        assert_eq!(smoother_gain_closed(0.0, &c), (c.s13_0, c.s14_0));
        let (k11, k21) = smoother_gain_closed(80.0, &c);
        assert!(k11.abs() < 1e-15 && k21.abs() < 1e-15);
        // S₁₁(0) = cosh 1, so μ = 1 - 1/cosh 1.
        let (k11, k21) = smoother_gain_closed(1.0, &c);
        assert_abs_diff_eq!(c.mu, 1.0 - 1.0 / 1.0f64.cosh(), epsilon = 1e-15);
        assert_abs_diff_eq!(k11, -0.5306331942612391, epsilon = 1e-12);
        assert_eq!(k21, 0.0);
    }

    #[test]
    fn no_entanglement_no_error_reduction() {
        let c = TmssScenario::identity(0.0).unwrap().curves().unwrap();
        for t in [0.0, 0.5, 3.0, 30.0] {
            assert_eq!(smoothing_error_closed(t, &c), Matrix::identity(2, 2));
        }
    }

    #[test]
    fn asymptotic_error_diagonal() {
        for (alpha, gamma) in [(1.0, 0.5), (0.3, 2.0)] {
            let s = TmssScenario::new(1.2, CouplingSpec::new(alpha, -gamma, gamma, alpha, Party::Alice).unwrap(), 1.0, 1.0).unwrap();
            let c = s.curves().unwrap();
            let r = smoothing_error_closed(200.0, &c);
            let (ch, sh) = (1.2f64.cosh(), 1.2f64.sinh());
            let n2 = alpha * alpha + gamma * gamma;
            assert_abs_diff_eq!(r[(0, 0)], ch - alpha * alpha / n2 * sh * sh / ch, epsilon = 1e-12);
            assert_abs_diff_eq!(r[(1, 1)], ch - gamma * gamma / n2 * sh * sh / ch, epsilon = 1e-12);
        }
    }

    #[test]
    fn strong_squeezing_pins_the_correlated_direction() {
        let (alpha, gamma) = (1.0, 2.0);
        for r in [2.0, 4.0, 8.0, 12.0] {
            let s = TmssScenario::new(r, CouplingSpec::new(alpha, -gamma, gamma, alpha, Party::Alice).unwrap(), 1.0, 1.0).unwrap();
            let e = smoothing_error_closed(1e3, &s.curves().unwrap());
            let cosh = r.cosh();
            let ratio = e[(0, 0)] / e[(1, 1)];
            let expected = (gamma * gamma + alpha * alpha / (cosh * cosh)) / (alpha * alpha + gamma * gamma / (cosh * cosh));
            assert_abs_diff_eq!(ratio, expected, epsilon = 1e-6 * expected);
            // Along (-α, γ) the residual variance is 1/cosh r.
            let v = [-alpha, gamma];
            let norm = alpha * alpha + gamma * gamma;
            let along = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| v[i] * e[(i, j)] * v[j]).sum::<f64>() / norm;
            assert_abs_diff_eq!(along, 1.0 / cosh, epsilon = 1e-9);
        }
    }

    #[test]
    fn info_measure_against_closed_expressions() {
        for (alpha, gamma, t1, t2, r) in [(1.0, 1.0, 1.0, 1.0, 1.0), (0.5, 2.0, 0.3, 1.7, 0.8)] {
            let s = TmssScenario::new(r, CouplingSpec::new(alpha, -gamma, gamma, alpha, Party::Alice).unwrap(), t1, t2).unwrap();
            let m = info_measure(0.0, &s.curves().unwrap());
            let w = t1 * alpha * alpha + t2 * gamma * gamma;
            let sh2 = r.sinh().powi(2);
            assert_abs_diff_eq!(m.early_rate, w * sh2, epsilon = 1e-12);
            assert_abs_diff_eq!(m.asymptote, w / (alpha * alpha + gamma * gamma) * sh2 / r.cosh(), epsilon = 1e-12);
            assert_eq!(m.value, 0.0);
        }
        let s = TmssScenario::new(1.0, CouplingSpec::new(1.0, -1.0, 1.0, 1.0, Party::Alice).unwrap(), 1.0, 1.0).unwrap();
        let m = info_measure(0.0, &s.curves().unwrap());
        assert_abs_diff_eq!(m.early_rate, 2.7622, epsilon = 1e-4);
        assert_abs_diff_eq!(m.asymptote, 0.8951, epsilon = 1e-4);
    }

    #[test]
    fn uncertainty_relation_values() {
        for t in [0.0, 1.0, 10.0] {
            assert_abs_diff_eq!(uncertainty_det(t, &TmssScenario::identity(0.0).unwrap()).unwrap(), 1.0, epsilon = 1e-15);
        }
        let s = rotated(1.5);
        assert_abs_diff_eq!(uncertainty_det(0.0, &s).unwrap(), 1.5f64.cosh().powi(2), epsilon = 1e-12);
        assert_abs_diff_eq!(uncertainty_det(50.0, &s).unwrap(), 1.0, epsilon = 1e-9);
        // Matches the determinant of the closed-form error covariance.
        let c = s.curves().unwrap();
        assert_abs_diff_eq!(
            uncertainty_det(0.7, &s).unwrap(),
            smoothing_error_closed(0.7, &c).determinant(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn h_is_monotone_from_zero_to_one() {
        let c = rotated(1.0).curves().unwrap();
        assert_eq!(c.h(0.0), 0.0);
        let mut prev = 0.0;
        for k in 1..2000 {
            let h = c.h(k as f64 * 0.01);
            assert!(h >= prev - 1e-15 && h <= 1.0 + 1e-15, "{h} after {prev}");
            prev = h;
        }
        assert_abs_diff_eq!(c.h(60.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_requires_diagonal_alice_block() {
        let s = TmssScenario::new(1.0, CouplingSpec::new(2.0, 0.5, 0.0, 1.0, Party::Alice).unwrap(), 1.0, 1.0).unwrap();
        assert!(matches!(s.curves(), Err(Error::ClosedFormUnavailable(_))));
    }

    #[test]
    fn negative_determinant_uses_magnitude() {
        let s = TmssScenario::new(1.0, CouplingSpec::new(0.0, 1.0, 1.0, 0.0, Party::Alice).unwrap(), 1.0, 1.0).unwrap();
        assert_eq!(s.delta(), 1.0);
    }

    #[test]
    fn mutual_information_zero_without_squeezing() {
        let s = TmssScenario::identity(0.0).unwrap();
        for p in mutual_information_series(&s, 2.0, 1e-2, FilterReference::Propagated).unwrap() {
            assert!(p.total.abs() < 1e-15 && p.filter.abs() < 1e-12 && p.smoother.abs() < 1e-12);
        }
    }

    #[test]
    fn mutual_information_limit() {
        let s = TmssScenario::identity(1.0).unwrap();
        let i = mutual_information(&s, 40.0, 1e-2).unwrap();
        assert_abs_diff_eq!(i.total, 1.0f64.cosh().ln(), epsilon = 1e-6);
        assert_abs_diff_eq!(i.total, 0.43378, epsilon = 1e-5);
        assert_abs_diff_eq!(i.total, i.filter + i.smoother, epsilon = 1e-9);
    }

    #[test]
    fn weak_limit_vanishes_at_start() {
        let s = TmssScenario::identity(0.05).unwrap();
        let (a, b) = asymptotic_info(0.0, &s, SqueezingRegime::Weak).unwrap();
        assert_eq!((a, b), (0.0, 0.0));
    }

    #[test]
    fn sweep_asymptote_depends_only_on_squeezing() {
        let grid: Vec<f64> = (1..=5).map(|k| k as f64 * 0.4).collect();
        let pts = sweep(1.0, 1.0, 1.0, &grid, &grid).unwrap();
        let first = pts[0].asymptote;
        for p in &pts {
            assert!((p.asymptote - first).abs() < 1e-12);
            assert_abs_diff_eq!(p.early_rate, (p.alpha.powi(2) + p.gamma.powi(2)) * 1.0f64.sinh().powi(2), epsilon = 1e-9);
        }
    }
}
