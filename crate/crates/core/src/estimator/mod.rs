//! Localization and sensing chain.
//!
//! 1. Far-field angle/delay estimate per subarray, bearing triangulation of
//!    the UE and a clock estimate.
//! 2. Near-field LOS-only refinement of the UE and clock.
//! 3. LOS removal, per-subarray estimates of the scatter paths and a
//!    geometric fit of each scatter point.
//! 4. Joint refinement of every position and the clock.

mod coarse;
mod crb;
mod mle;

use std::io::Write;

use nalgebra::DMatrix;

pub use coarse::{
    coarse_all, coarse_clock, coarse_sa_estimate, estimate_sp, remove_los, remove_los_nf, sp_residuals, triangulate_ue,
    SaEstimate, SearchWindow,
};
pub use crb::{compute_crb, CrbReport};
pub(crate) use mle::fit_mean;
pub use mle::{concentrated_cost, full_mle, full_mle_masked, los_mle, MleFit};

pub use crate::model::StateVector;

use crate::error::{Error, Result};
use crate::linalg::{norm_sqr, project_out};
use crate::model::SystemModel;
use crate::signal::ObservationTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpWeighting {
    Identity,
    /// Per-subarray weights from the inverse residual energy of the path fit.
    InverseVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LosRemoval {
    /// Far-field template of each subarray's LOS estimate.
    FarField,
    /// Near-field template of the LOS-only refined UE.
    NearField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizeOptions {
    pub window: Option<SearchWindow>,
    pub sp_weighting: SpWeighting,
    pub los_removal: LosRemoval,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        Self { window: None, sp_weighting: SpWeighting::Identity, los_removal: LosRemoval::FarField }
    }
}

/// Outputs of every stage of [`localize`].
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub sa_los: Vec<SaEstimate>,
    /// `sa_paths[l][s]`: estimate of scatter path `l` at subarray `s`.
    pub sa_paths: Vec<Vec<SaEstimate>>,
    /// Triangulated UE and the clock estimate from the subarray delays.
    pub sa_state: StateVector,
    /// LOS-only refined UE and clock with the geometric scatter-point fits.
    pub coarse: StateVector,
    pub refined: StateVector,
    pub los_cost: f64,
    /// Full-model cost at `coarse`, before joint refinement.
    pub coarse_cost: f64,
    pub refined_cost: f64,
    pub los_iterations: usize,
    pub full_iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
    pub crb: Option<CrbReport>,
}

impl EstimationReport {
    /// `(stage, quantity, value)` rows.
    pub fn rows(&self) -> Vec<(&'static str, String, f64)> {
        let mut out = Vec::new();
        let mut push_state = |stage: &'static str, s: &StateVector, cost: Option<f64>, iters: Option<usize>| {
            out.push((stage, "ue_x".into(), s.ue_position.x));
            out.push((stage, "ue_y".into(), s.ue_position.y));
            for (l, p) in s.sp_positions.iter().enumerate() {
                out.push((stage, format!("sp{}_x", l + 1), p.x));
                out.push((stage, format!("sp{}_y", l + 1), p.y));
            }
            out.push((stage, "clock_m".into(), s.clock_offset_m));
            if let Some(c) = cost {
                out.push((stage, "cost".into(), c));
            }
            if let Some(i) = iters {
                out.push((stage, "iterations".into(), i as f64));
            }
        };
        push_state("sa", &self.sa_state, None, None);
        push_state("coarse", &self.coarse, Some(self.coarse_cost), Some(self.los_iterations));
        push_state("fine", &self.refined, Some(self.refined_cost), Some(self.full_iterations));
        if let Some(c) = &self.crb {
            out.push(("crb", "ue_peb".into(), c.ue_peb));
            for (l, v) in c.sp_peb.iter().enumerate() {
                out.push(("crb", format!("sp{}_peb", l + 1), *v));
            }
        }
        out
    }
}

/// Writes `trial,stage,quantity,value` rows for a batch of reports.
pub fn write_reports_csv<'a, W: Write>(out: W, reports: impl IntoIterator<Item = (usize, &'a EstimationReport)>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "stage", "quantity", "value"])?;
    for (trial, r) in reports {
        for (stage, q, v) in r.rows() {
            w.write_record([trial.to_string(), stage.to_string(), q, v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn wrap(x: f64) -> f64 {
    (x + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI
}

/// Extracts `num_paths` paths from each subarray block by successive
/// estimation and cancellation, then matches them across subarrays by the
/// angle nearest to the first subarray's estimates.
fn extract_paths(
    y: &ObservationTensor,
    model: &SystemModel,
    window: &SearchWindow,
    num_paths: usize,
) -> Result<(Vec<Vec<SaEstimate>>, Vec<Vec<f64>>)> {
    let s_n = model.num_subarrays();
    let mut per_sa = Vec::with_capacity(s_n);
    let mut energy = Vec::with_capacity(s_n);
    for s in 0..s_n {
        let mut block = y.block(s).to_vec();
        let mut found = Vec::with_capacity(num_paths);
        let mut res = Vec::with_capacity(num_paths);
        for _ in 0..num_paths {
            let e = coarse_sa_estimate(&block, model, s, window)?;
            block = project_out(&model.ff_block_template(s, e.theta, e.tau), &block);
            found.push(e);
            res.push(norm_sqr(&block));
        }
        per_sa.push(found);
        energy.push(res);
    }
    let mut paths = vec![Vec::with_capacity(s_n); num_paths];
    let mut resid = vec![Vec::with_capacity(s_n); num_paths];
    let reference: Vec<f64> = per_sa[0].iter().map(|e| e.theta).collect();
    for (s, found) in per_sa.iter().enumerate() {
        let mut free: Vec<usize> = (0..num_paths).collect();
        for (l, &r) in reference.iter().enumerate() {
            let (pos, &j) = free
                .iter()
                .enumerate()
                .min_by(|a, b| wrap(found[*a.1].theta - r).abs().total_cmp(&wrap(found[*b.1].theta - r).abs()))
                .expect("one candidate per path");
            free.remove(pos);
            paths[l].push(found[j]);
            resid[l].push(energy[s][j]);
        }
    }
    Ok((paths, resid))
}

/// Runs the full chain for `num_sps` scatter points.
pub fn localize(y: &ObservationTensor, model: &SystemModel, num_sps: usize, opts: &LocalizeOptions) -> Result<EstimationReport> {
    model.check_observation(y)?;
    let window = opts.window.clone().unwrap_or_else(|| SearchWindow::for_config(&model.config));
    let layout = &model.layout;
    let mut warnings = Vec::new();

    let sa_los = coarse_all(y, model, &window)?;
    let p_sa = triangulate_ue(&sa_los, layout)?;
    let beta_sa = coarse_clock(&sa_los, &p_sa, layout);
    let sa_state = StateVector::new(p_sa, vec![], beta_sa);

    let los = los_mle(y, model, &p_sa, beta_sa)?;
    if !los.converged {
        warnings.push("LOS-only refinement hit the iteration limit".into());
    }
    let p0 = los.state.ue_position;
    let beta = los.state.clock_offset_m;

    let mut sa_paths = Vec::new();
    let mut sps = Vec::with_capacity(num_sps);
    if num_sps > 0 {
        let residual = match opts.los_removal {
            LosRemoval::FarField => remove_los(y, model, &sa_los)?,
            LosRemoval::NearField => remove_los_nf(y, model, &p0, beta)?,
        };
        let (paths, resid) = extract_paths(&residual, model, &window, num_sps)?;
        for (l, est) in paths.iter().enumerate() {
            let weighting = match opts.sp_weighting {
                SpWeighting::Identity => None,
                SpWeighting::InverseVariance => {
                    let w: Vec<f64> = resid[l].iter().map(|r| 1.0 / r.max(f64::MIN_POSITIVE)).collect();
                    let mean = w.iter().sum::<f64>() / w.len() as f64;
                    let d: Vec<f64> = w.iter().chain(&w).map(|v| v / mean).collect();
                    Some(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)))
                }
            };
            sps.push(estimate_sp(est, &p0, beta, layout, weighting.as_ref())?);
        }
        sa_paths = paths;
    }
    let coarse = StateVector::new(p0, sps, beta);
    let full = full_mle(y, model, &coarse)?;
    if !full.converged {
        warnings.push("joint refinement hit the iteration limit".into());
    }
    if full.regularized {
        warnings.push("path gains needed a regularized solve".into());
    }
    if !full.state.is_finite() {
        return Err(Error::Estimator("joint refinement diverged".into()));
    }
    Ok(EstimationReport {
        sa_los,
        sa_paths,
        sa_state,
        coarse,
        refined: full.state,
        los_cost: los.cost,
        coarse_cost: full.initial_cost,
        refined_cost: full.cost,
        los_iterations: los.iterations,
        full_iterations: full.iterations,
        converged: los.converged && full.converged,
        warnings,
        crb: None,
    })
}
