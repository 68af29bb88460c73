//! Cramér–Rao bound of the state under the complex Gaussian model.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{StateVector, SystemModel};
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct CrbReport {
    /// Position error bound of the UE, meters.
    pub ue_peb: f64,
    /// Position error bound of each scatter point, meters.
    pub sp_peb: Vec<f64>,
    /// Standard deviation bound of the clock offset, meters.
    pub clock_bound: f64,
    /// Fisher information over `[p_0, p_1…p_L, β, Re α_0, Im α_0, …]`.
    pub fim: DMatrix<f64>,
    /// The FIM could not be inverted; bounds are reported as infinite.
    pub singular: bool,
}

const POSITION_STEP: f64 = 1e-5;
const GAIN_STEP: f64 = 1e-6;

/// FIM `(2/σ²) Re{JᴴJ}` with `J` the central-difference Jacobian of the
/// noise-free mean. `state.gains` must hold the true path gains.
pub fn compute_crb(state: &StateVector, model: &SystemModel, sigma2: f64) -> Result<CrbReport> {
    let gains = state
        .gains
        .as_ref()
        .ok_or_else(|| Error::Config("CRB needs the path gains of the state".into()))?;
    if gains.len() != state.num_sps() + 1 {
        return Err(Error::Dimension { what: "path gains", expected: state.num_sps() + 1, got: gains.len() });
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Config(format!("noise variance must be positive, got {sigma2}")));
    }
    let sp = state.to_params();
    let n_s = sp.len();
    let mut theta = sp.clone();
    for g in gains {
        theta.extend([g.re, g.im]);
    }
    let mean = |th: &[f64]| -> Vec<C64> {
        let st = StateVector::from_params(&th[..n_s]);
        let g: Vec<C64> = th[n_s..].chunks(2).map(|c| C64::new(c[0], c[1])).collect();
        model.mean(&st, &g, None).expect("gain count checked above")
    };
    let cols: Vec<Vec<C64>> = (0..theta.len())
        .map(|i| {
            let h = if i < n_s { POSITION_STEP } else { GAIN_STEP };
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let (a, b) = (mean(&tp), mean(&tm));
            a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect()
        })
        .collect();
    let p = cols.len();
    let fim = DMatrix::from_fn(p, p, |i, j| {
        let s: C64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a.conj() * b).sum();
        2.0 / sigma2 * s.re
    });
    let inv = fim.clone().cholesky().map(|c| c.inverse()).or_else(|| fim.clone().try_inverse());
    let Some(c) = inv.filter(|c| c.iter().all(|v| v.is_finite())) else {
        return Ok(CrbReport {
            ue_peb: f64::INFINITY,
            sp_peb: vec![f64::INFINITY; state.num_sps()],
            clock_bound: f64::INFINITY,
            fim,
            singular: true,
        });
    };
    let block = |i: usize| (c[(i, i)] + c[(i + 1, i + 1)]).max(0.0).sqrt();
    Ok(CrbReport {
        ue_peb: block(0),
        sp_peb: (0..state.num_sps()).map(|l| block(2 + 2 * l)).collect(),
        clock_bound: c[(n_s - 1, n_s - 1)].max(0.0).sqrt(),
        fim,
        singular: false,
    })
}
