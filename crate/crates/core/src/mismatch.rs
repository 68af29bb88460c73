//! Pseudotrue state of the unblocked model fitted to blocked observations,
//! and the bias term of the mismatched lower bound.
//!
//! Both models share the noise covariance `σ²I`, so the KL divergence
//! `D(f_B(·|s̄) ‖ f_U(·|s))` of the two complex Gaussians is
//! `‖μ_B(s̄) − μ_U(s)‖² / σ²`. The pseudotrue state is its minimizer with the
//! unblocked path gains fitted by least squares; finding it is a noise-free
//! joint MLE on `μ_B`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::channel::{path_gain, Mask};
use crate::error::{Error, Result};
use crate::estimator::{fit_mean, MleFit, StateVector};
use crate::linalg::norm_sqr;
use crate::model::SystemModel;
use crate::optim::BfgsOptions;
use crate::rng::{derive_seed, substream, tag};
use crate::scenario::{PathSet, Point};

/// Marker reported in place of the misspecified-CRB covariance term.
pub const MCRB_STATUS: &str = "out of scope";

#[derive(Debug, Clone, PartialEq)]
pub struct MismatchReport {
    pub true_state: StateVector,
    pub pseudotrue_state: StateVector,
    /// True minus pseudotrue, over `[p_0, p_1…p_L, β]`.
    pub bias_vector: Vec<f64>,
    pub ue_bias_norm: f64,
    pub sp_bias_norm: Vec<f64>,
    pub clock_bias: f64,
    /// `‖μ_B − μ_U(s_0)‖² / σ²`.
    pub kld_at_optimum: f64,
    /// Same divergence evaluated at the true state.
    pub kld_at_truth: f64,
    pub converged: bool,
    /// Always [`MCRB_STATUS`]: the covariance term is reported as zero.
    pub mcrb: &'static str,
}

const RESTARTS: usize = 3;
const RESTART_RADIUS: f64 = 0.5;

fn random_offset<R: Rng>(rng: &mut R) -> Point {
    let r = RESTART_RADIUS * rng.random::<f64>().sqrt();
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    Point::new(r * a.cos(), r * a.sin())
}

/// Pseudotrue state for `true_state` (gains required) observed through
/// `masks`. Starts at the truth and at three random points within 0.5 m.
pub fn pseudotrue_state(
    true_state: &StateVector,
    masks: &[Mask],
    model: &SystemModel,
    sigma2: f64,
    restart_seed: u64,
) -> Result<MismatchReport> {
    let gains = true_state
        .gains
        .as_ref()
        .ok_or_else(|| Error::Config("pseudotrue search needs the true path gains".into()))?;
    if !(sigma2 > 0.0) {
        return Err(Error::Config(format!("noise variance must be positive, got {sigma2}")));
    }
    let mu = model.mean_observation(true_state, gains, Some(masks))?;
    let energy = norm_sqr(mu.as_slice());
    let opts = BfgsOptions { rel_tol: 1e-12, max_iter: 300, ..Default::default() };
    let truth_fit = fit_mean(&mu, model, true_state, &opts)?;
    let mut best: MleFit = truth_fit.clone();
    let mut rng = substream(restart_seed, &[tag::RESTART]);
    for _ in 0..RESTARTS {
        let mut start = true_state.clone();
        start.ue_position += random_offset(&mut rng);
        for p in &mut start.sp_positions {
            *p += random_offset(&mut rng);
        }
        start.clock_offset_m += rng.random_range(-RESTART_RADIUS..RESTART_RADIUS);
        let fit = fit_mean(&mu, model, &start, &opts)?;
        if fit.cost < best.cost {
            best = fit;
        }
    }
    let truth = true_state.to_params();
    let pseudo = best.state.to_params();
    let bias: Vec<f64> = truth.iter().zip(&pseudo).map(|(a, b)| a - b).collect();
    let l = true_state.num_sps();
    let block = |i: usize| (bias[i].powi(2) + bias[i + 1].powi(2)).sqrt();
    Ok(MismatchReport {
        true_state: true_state.clone(),
        ue_bias_norm: block(0),
        sp_bias_norm: (0..l).map(|i| block(2 + 2 * i)).collect(),
        clock_bias: bias[bias.len() - 1],
        kld_at_optimum: best.cost * energy / sigma2,
        kld_at_truth: truth_fit.initial_cost * energy / sigma2,
        converged: best.converged,
        pseudotrue_state: best.state,
        bias_vector: bias,
        mcrb: MCRB_STATUS,
    })
}

/// High-SNR mismatched lower bound: the bias outer product plus a zero
/// covariance term.
pub fn mismatch_lower_bound(report: &MismatchReport) -> DMatrix<f64> {
    let b = DVector::from_column_slice(&report.bias_vector);
    let mcrb = DMatrix::<f64>::zeros(b.len(), b.len());
    &b * b.transpose() + mcrb
}

/// Rectangular grid of UE positions.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl BiasGrid {
    /// A 5 × 16 m region at 1 m spacing in front of the array.
    pub fn reference() -> Self {
        Self { xs: (1..=5).map(f64::from).collect(), ys: (-8..=8).map(f64::from).collect() }
    }

    pub fn nodes(&self) -> Vec<Point> {
        self.xs.iter().flat_map(|&x| self.ys.iter().map(move |&y| Point::new(x, y))).collect()
    }
}

/// One grid node of a bias map; `pseudo` is `None` when the node failed.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasNode {
    pub true_position: Point,
    pub pseudo_position: Option<Point>,
    pub bias_norm: f64,
    pub error: Option<String>,
}

/// Pseudotrue UE across the grid. `base` supplies scatter points, RCS, path
/// phases and the clock offset; only the UE moves. `masks` holds one mask
/// per path of `base`.
pub fn bias_map(grid: &BiasGrid, masks: &[Mask], model: &SystemModel, base: &PathSet, seed: u64) -> Vec<BiasNode> {
    let sigma2 = model.config.noise_variance();
    grid.nodes()
        .into_par_iter()
        .enumerate()
        .map(|(i, p)| {
            let node = || -> Result<MismatchReport> {
                let paths = PathSet { ue_position: p, ..base.clone() };
                paths.validate(&model.layout)?;
                let gains = (0..paths.num_paths())
                    .map(|l| path_gain(l, &paths, &model.layout, &model.config))
                    .collect::<Result<Vec<_>>>()?;
                let st = StateVector::from_paths(&paths).with_gains(gains);
                pseudotrue_state(&st, masks, model, sigma2, derive_seed(seed, &[i as u64]))
            };
            match node() {
                Ok(r) => BiasNode {
                    true_position: p,
                    pseudo_position: Some(r.pseudotrue_state.ue_position),
                    bias_norm: r.ue_bias_norm,
                    error: None,
                },
                Err(e) => BiasNode { true_position: p, pseudo_position: None, bias_norm: f64::NAN, error: Some(e.to_string()) },
            }
        })
        .collect()
}

/// Writes `x_true,y_true,x_pseudo,y_pseudo,bias_norm`; failed nodes carry NaN.
pub fn write_bias_csv<W: Write>(out: W, nodes: &[BiasNode]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x_true", "y_true", "x_pseudo", "y_pseudo", "bias_norm"])?;
    for n in nodes {
        let (xp, yp) = n.pseudo_position.map_or((f64::NAN, f64::NAN), |p| (p.x, p.y));
        w.write_record([
            n.true_position.x.to_string(),
            n.true_position.y.to_string(),
            xp.to_string(),
            yp.to_string(),
            n.bias_norm.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
