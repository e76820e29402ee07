//! Fixtures shared by the benchmarks.

use qsmooth_core::model::{build_composite, build_subsystem, tmss_prior};
use qsmooth_core::simulate::{simulate_record, SimConfig};
use qsmooth_core::{Basis, CompositeModel, CouplingSpec, GaussianBelief, MeasurementRecord, Party};

/// Two-mode squeezed scenario with `G = I` for both parties.
pub fn identity_scenario(r: f64) -> (CompositeModel, GaussianBelief) {
    let alice = CouplingSpec::identity(Party::Alice);
    let bob = CouplingSpec::identity(Party::Bob);
    let model = build_composite(
        build_subsystem(&alice, Basis::NonOrthogonal).unwrap(),
        build_subsystem(&bob, Basis::NonOrthogonal).unwrap(),
    )
    .unwrap();
    let prior = tmss_prior(r, &alice.matrix()).unwrap();
    (model, prior)
}

/// One simulated record on `[0, t_end]`.
pub fn record(model: &CompositeModel, prior: &GaussianBelief, dt: f64, t_end: f64) -> MeasurementRecord {
    let cfg = SimConfig::new(dt, t_end, 1, 7).unwrap();
    simulate_record(model.system(), prior, &cfg).unwrap().records.remove(0)
}
