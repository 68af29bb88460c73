//! Near-field maximum-likelihood refinement with the path gains
//! concentrated out by least squares.

use crate::channel::Mask;
use crate::error::{Error, Result};
use crate::linalg::{least_squares, norm_sqr, LsFit};
use crate::model::{StateVector, SystemModel};
use crate::optim::{bfgs, BfgsOptions};
use crate::scenario::Point;
use crate::signal::ObservationTensor;
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    /// Refined state with the least-squares gains attached.
    pub state: StateVector,
    /// `‖y − Υĝ‖² / ‖y‖²` at the returned state.
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The gain solve needed regularization at the returned state.
    pub regularized: bool,
}

/// Concentrated cost `‖y − Υ(s)ĝ(s)‖² / ‖y‖²` and the gain fit.
pub fn concentrated_cost(y: &[C64], model: &SystemModel, state: &StateVector, masks: Option<&[Mask]>) -> (f64, LsFit) {
    let cols = model.templates(state, masks);
    let fit = least_squares(&cols, y);
    (fit.residual_sq / norm_sqr(y), fit)
}

fn refine(
    y: &ObservationTensor,
    model: &SystemModel,
    init: &StateVector,
    masks: Option<&[Mask]>,
    opts: &BfgsOptions,
) -> Result<MleFit> {
    model.check_observation(y)?;
    if let Some(m) = masks {
        if m.len() != init.num_sps() + 1 {
            return Err(Error::Dimension { what: "masks", expected: init.num_sps() + 1, got: m.len() });
        }
    }
    if norm_sqr(y.as_slice()) == 0.0 {
        return Err(Error::Degenerate("observations are all zero".into()));
    }
    if !init.is_finite() {
        return Err(Error::Estimator("non-finite initial state".into()));
    }
    let data = y.as_slice();
    let f = |x: &[f64]| concentrated_cost(data, model, &StateVector::from_params(x), masks).0;
    let x0 = init.to_params();
    let initial_cost = f(&x0);
    let r = bfgs(f, &x0, opts);
    let (x, _) = if r.f <= initial_cost { (r.x.clone(), r.f) } else { (x0, initial_cost) };
    let state = StateVector::from_params(&x);
    let (cost, fit) = concentrated_cost(data, model, &state, masks);
    Ok(MleFit {
        state: state.with_gains(fit.gains),
        cost,
        initial_cost,
        iterations: r.iterations,
        converged: r.converged,
        regularized: fit.regularized,
    })
}

/// LOS-only refinement of `(p_0, β)`.
pub fn los_mle(y: &ObservationTensor, model: &SystemModel, p0: &Point, beta: f64) -> Result<MleFit> {
    refine(y, model, &StateVector::new(*p0, vec![], beta), None, &BfgsOptions::default())
}

/// Joint refinement of the UE, all scatter points and the clock offset.
pub fn full_mle(y: &ObservationTensor, model: &SystemModel, init: &StateVector) -> Result<MleFit> {
    refine(y, model, init, None, &BfgsOptions::default())
}

/// [`full_mle`] under known per-path masks.
pub fn full_mle_masked(y: &ObservationTensor, model: &SystemModel, init: &StateVector, masks: &[Mask]) -> Result<MleFit> {
    refine(y, model, init, Some(masks), &BfgsOptions::default())
}

/// Minimizes the concentrated cost of a noise-free target `mu` over the state.
pub(crate) fn fit_mean(
    mu: &ObservationTensor,
    model: &SystemModel,
    init: &StateVector,
    opts: &BfgsOptions,
) -> Result<MleFit> {
    refine(mu, model, init, None, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{pt, ScenarioConfig};
    use crate::signal::{make_combiners, CombinerKind};

    fn model() -> SystemModel {
        let cfg = ScenarioConfig::default();
        SystemModel::new(&cfg, make_combiners(&cfg, CombinerKind::RandomPhase, 21)).unwrap()
    }

    #[test]
    fn noiseless_los_recovery() {
        let m = model();
        let truth = StateVector::new(pt(2.0, 4.0), vec![], 0.6);
        let y = m.mean_observation(&truth, &[C64::new(1e-4, 2e-4)], None).unwrap();
        let fit = los_mle(&y, &m, &pt(2.03, 3.96), 0.62).unwrap();
        assert!((fit.state.ue_position - truth.ue_position).norm() < 1e-6, "{fit:?}");
        assert!((fit.state.clock_offset_m - 0.6).abs() < 1e-6);
        assert!(fit.cost <= fit.initial_cost);
    }

    #[test]
    fn noiseless_full_recovery() {
        let m = model();
        let truth = StateVector::new(pt(2.0, 4.0), vec![pt(2.0, -2.0)], 1.0);
        let y = m.mean_observation(&truth, &[C64::new(1e-4, 0.0), C64::new(0.0, 5e-6)], None).unwrap();
        let init = StateVector::new(pt(2.01, 4.02), vec![pt(1.99, -2.01)], 1.01);
        let fit = full_mle(&y, &m, &init).unwrap();
        assert!((fit.state.ue_position - truth.ue_position).norm() < 1e-6, "{fit:?}");
        assert!((fit.state.sp_positions[0] - truth.sp_positions[0]).norm() < 1e-6, "{fit:?}");
        assert!((fit.state.clock_offset_m - 1.0).abs() < 1e-6);
        let g = fit.state.gains.unwrap();
        assert!((g[1] - C64::new(0.0, 5e-6)).norm() < 1e-9);
    }

    #[test]
    fn zero_observations_rejected() {
        let m = model();
        let y = m.empty_observation();
        assert!(matches!(los_mle(&y, &m, &pt(1.0, 1.0), 0.0), Err(Error::Degenerate(_))));
    }
}
