//! Per-subarray far-field channel estimation and the geometric steps built on
//! it: triangulation, clock recovery, LOS removal and scatter-point fitting.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, norm_sqr, project_out};
use crate::model::SystemModel;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::scenario::{bearing, ArrayLayout, Point, ScenarioConfig};
use crate::signal::ObservationTensor;
use crate::C64;

/// Angle (radians from broadside) and delay (meters, clock offset included)
/// of one path seen by one subarray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaEstimate {
    pub theta: f64,
    pub tau: f64,
}

/// Grid search region and resolution for [`coarse_sa_estimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchWindow {
    pub theta_min: f64,
    pub theta_max: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub n_theta: usize,
    pub n_tau: usize,
    pub zoom_stages: usize,
    pub shrink: f64,
}

impl SearchWindow {
    /// Angles over the open half-plane in front of the array and delays over
    /// one ambiguity period `[0, c/Δf)`.
    pub fn for_config(config: &ScenarioConfig) -> Self {
        let edge = PI / 180.0;
        Self {
            theta_min: -FRAC_PI_2 + edge,
            theta_max: FRAC_PI_2 - edge,
            tau_min: 0.0,
            tau_max: config.delay_ambiguity_m(),
            n_theta: 181,
            n_tau: 256,
            zoom_stages: 2,
            shrink: 8.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.n_theta >= 2
            && self.n_tau >= 2
            && self.theta_max > self.theta_min
            && self.tau_max > self.tau_min
            && self.shrink > 1.0
            && [self.theta_min, self.theta_max, self.tau_min, self.tau_max].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Degenerate(format!("empty search window {self:?}")))
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Normalized matched-filter output `|uᴴy|² / (‖u‖²‖y‖²)` of the far-field template.
fn ff_score(model: &SystemModel, s: usize, y: &[C64], yy: f64, theta: f64, tau: f64) -> f64 {
    let u = model.ff_block_template(s, theta, tau);
    let uu = norm_sqr(&u);
    if uu == 0.0 {
        return 0.0;
    }
    dot(&u, y).norm_sqr() / (uu * yy)
}

/// Estimates the dominant path of subarray `s` from its observation block
/// `y_s` (transmission-major): a full grid, `zoom_stages` refined grids and a
/// simplex polish of the projection cost.
pub fn coarse_sa_estimate(y_s: &[C64], model: &SystemModel, s: usize, window: &SearchWindow) -> Result<SaEstimate> {
    window.validate()?;
    check_len("subarray observation block", model.block_len(), y_s.len())?;
    let (g_n, k_n) = (model.num_transmissions(), model.num_subcarriers());
    let yy = norm_sqr(y_s);
    if yy == 0.0 {
        return Err(Error::Degenerate(format!("subarray {s} observations are all zero")));
    }
    let lambdas = model.wavelengths();
    let pilot_energy: Vec<f64> = (0..g_n).map(|g| (0..k_n).map(|k| model.pilots.x(g, k).norm_sqr()).sum()).collect();

    let (mut t_lo, mut t_hi, mut d_lo, mut d_hi) = (window.theta_min, window.theta_max, window.tau_min, window.tau_max);
    let mut best = (0.0, 0.0, -1.0);
    let (mut t_step, mut d_step) = (0.0, 0.0);
    for stage in 0..=window.zoom_stages {
        let thetas = linspace(t_lo, t_hi, window.n_theta);
        // the first delay grid covers a half-open period
        let taus: Vec<f64> = if stage == 0 {
            let st = (d_hi - d_lo) / window.n_tau as f64;
            (0..window.n_tau).map(|i| d_lo + st * i as f64).collect()
        } else {
            linspace(d_lo, d_hi, window.n_tau)
        };
        t_step = thetas[1] - thetas[0];
        d_step = taus[1] - taus[0];
        let conj_delay: Vec<C64> = taus
            .iter()
            .flat_map(|&t| lambdas.iter().map(move |&lk| C64::from_polar(1.0, 2.0 * PI / lk * t)))
            .collect();
        for &theta in &thetas {
            let b = model.ff_beam_gains(s, theta);
            let norm: f64 = b.iter().zip(&pilot_energy).map(|(v, e)| v.norm_sqr() * e).sum();
            if norm == 0.0 {
                continue;
            }
            let mut z = vec![C64::new(0.0, 0.0); k_n];
            for (g, bg) in b.iter().enumerate() {
                for (k, zk) in z.iter_mut().enumerate() {
                    *zk += (bg * model.pilots.x(g, k)).conj() * y_s[g * k_n + k];
                }
            }
            for (j, &tau) in taus.iter().enumerate() {
                let e = &conj_delay[j * k_n..(j + 1) * k_n];
                let acc: C64 = e.iter().zip(&z).map(|(a, b)| a * b).sum();
                let score = acc.norm_sqr() / (norm * yy);
                if score > best.2 {
                    best = (theta, tau, score);
                }
            }
        }
        let (dt, dd) = ((t_hi - t_lo) / window.shrink, (d_hi - d_lo) / window.shrink);
        t_lo = best.0 - dt / 2.0;
        t_hi = best.0 + dt / 2.0;
        d_lo = best.1 - dd / 2.0;
        d_hi = best.1 + dd / 2.0;
    }
    if best.2 < 0.0 {
        return Err(Error::Degenerate(format!("subarray {s}: combiners see no signal at any angle")));
    }
    let r = nelder_mead(
        |x: &[f64]| -ff_score(model, s, y_s, yy, x[0], x[1]),
        &[best.0, best.1],
        &[t_step, d_step],
        &NelderMeadOptions { max_evals: 600, x_tol: 1e-11, f_tol: 1e-15 },
    );
    let (theta, tau) = if -r.f >= best.2 { (r.x[0], r.x[1]) } else { (best.0, best.1) };
    let lim = FRAC_PI_2 - 1e-9;
    Ok(SaEstimate { theta: theta.clamp(-lim, lim), tau })
}

/// Runs [`coarse_sa_estimate`] on every subarray block.
pub fn coarse_all(y: &ObservationTensor, model: &SystemModel, window: &SearchWindow) -> Result<Vec<SaEstimate>> {
    model.check_observation(y)?;
    (0..model.num_subarrays()).map(|s| coarse_sa_estimate(y.block(s), model, s, window)).collect()
}

fn direction(theta: f64) -> Vector2<f64> {
    Vector2::new(theta.cos(), theta.sin())
}

/// Point closest, in summed squared distance, to all subarray bearing lines.
pub fn triangulate_ue(estimates: &[SaEstimate], layout: &ArrayLayout) -> Result<Point> {
    check_len("subarray estimates", layout.num_subarrays(), estimates.len())?;
    triangulate(estimates.iter().map(|e| e.theta).zip(layout.subarray_centers.iter().copied()))
}

fn triangulate(lines: impl Iterator<Item = (f64, Point)>) -> Result<Point> {
    let mut a = Matrix2::zeros();
    let mut b = Vector2::zeros();
    let mut count = 0;
    for (theta, c) in lines {
        let t = direction(theta);
        let p = Matrix2::identity() - t * t.transpose();
        a += p;
        b += p * c;
        count += 1;
    }
    let det = a.determinant();
    if count < 2 || det.abs() < 1e-12 * (count * count) as f64 {
        return Err(Error::RankDeficient("bearing lines are parallel".into()));
    }
    a.try_inverse()
        .map(|inv| inv * b)
        .ok_or_else(|| Error::RankDeficient("bearing lines are parallel".into()))
}

/// Mean of `τ̂_s − ‖p_SA,s − p̂_0‖` over subarrays.
pub fn coarse_clock(estimates: &[SaEstimate], p0: &Point, layout: &ArrayLayout) -> f64 {
    let sum: f64 = estimates
        .iter()
        .zip(&layout.subarray_centers)
        .map(|(e, c)| e.tau - (c - p0).norm())
        .sum();
    sum / estimates.len() as f64
}

/// Projects each subarray block onto the orthogonal complement of its
/// far-field LOS template.
pub fn remove_los(y: &ObservationTensor, model: &SystemModel, los: &[SaEstimate]) -> Result<ObservationTensor> {
    model.check_observation(y)?;
    check_len("LOS estimates", model.num_subarrays(), los.len())?;
    let mut out = y.clone();
    for (s, e) in los.iter().enumerate() {
        let u = model.ff_block_template(s, e.theta, e.tau);
        let r = project_out(&u, y.block(s));
        out.block_mut(s).copy_from_slice(&r);
    }
    Ok(out)
}

/// Same as [`remove_los`] with near-field LOS templates of a hypothesized
/// UE position and clock offset.
pub fn remove_los_nf(y: &ObservationTensor, model: &SystemModel, p0: &Point, beta: f64) -> Result<ObservationTensor> {
    model.check_observation(y)?;
    let st = crate::model::StateVector::new(*p0, vec![], beta);
    let e = model.element_response(p0, model.path_length(0, &st));
    let mut out = y.clone();
    for s in 0..model.num_subarrays() {
        let v = model.combine_block(&e, s, None);
        let r = project_out(&v, y.block(s));
        out.block_mut(s).copy_from_slice(&r);
    }
    Ok(out)
}

fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// Residuals `[θ̂_s − θ_SA,s(p)…, τ̂_s − τ_SA,s(p) − β̂…]` for a scatter point candidate.
pub fn sp_residuals(estimates: &[SaEstimate], p: &Point, p0: &Point, beta: f64, layout: &ArrayLayout) -> Vec<f64> {
    let s_n = estimates.len();
    let mut r = vec![0.0; 2 * s_n];
    for (s, (e, c)) in estimates.iter().zip(&layout.subarray_centers).enumerate() {
        r[s] = wrap_angle(e.theta - bearing(c, p));
        r[s_n + s] = e.tau - ((p0 - p).norm() + (p - c).norm()) - beta;
    }
    r
}

/// Fits the scatter point position to per-subarray angle/delay estimates of
/// its path. `weighting` is the positive-definite `2S × 2S` matrix of the
/// quadratic form; identity when `None`.
pub fn estimate_sp(
    estimates: &[SaEstimate],
    p0: &Point,
    beta: f64,
    layout: &ArrayLayout,
    weighting: Option<&DMatrix<f64>>,
) -> Result<Point> {
    check_len("subarray estimates", layout.num_subarrays(), estimates.len())?;
    let m = 2 * estimates.len();
    let w = match weighting {
        Some(w) => {
            if w.nrows() != m || w.ncols() != m {
                return Err(Error::Dimension { what: "weighting matrix", expected: m, got: w.nrows() });
            }
            if w.clone().cholesky().is_none() {
                return Err(Error::Config("weighting matrix is not positive definite".into()));
            }
            w.clone()
        }
        None => DMatrix::identity(m, m),
    };
    let cost = |x: &[f64]| {
        let r = DVector::from_vec(sp_residuals(estimates, &Point::new(x[0], x[1]), p0, beta, layout));
        (r.transpose() * &w * &r)[(0, 0)]
    };
    let nm = NelderMeadOptions { max_evals: 3000, x_tol: 1e-11, f_tol: 1e-20 };
    let fit = |x0: Point| nelder_mead(cost, &[x0.x, x0.y], &[0.05, 0.05], &nm);

    let init = triangulate(estimates.iter().map(|e| e.theta).zip(layout.subarray_centers.iter().copied()))
        .ok()
        .filter(|p| p.x > 0.0 && p.x.is_finite() && p.y.is_finite() && p.norm() < 1e3);
    let mut best = init.map(fit);
    let accept = |f: f64| f < 1e-2 * m as f64;
    if best.as_ref().map_or(true, |r| !accept(r.f)) {
        // multi-start over the half-plane in front of the array
        let mut starts: Vec<(f64, Point)> = Vec::new();
        for ix in 0..12 {
            for iy in -12..=12 {
                let p = Point::new(0.25 + 0.75 * ix as f64, 0.75 * iy as f64);
                starts.push((cost(&[p.x, p.y]), p));
            }
        }
        starts.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, p) in starts.into_iter().take(4) {
            let r = fit(p);
            if best.as_ref().map_or(true, |b| r.f < b.f) {
                best = Some(r);
            }
        }
    }
    let r = best.ok_or_else(|| Error::Estimator("scatter point fit failed".into()))?;
    let p = Point::new(r.x[0], r.x[1]);
    if !(p.x.is_finite() && p.y.is_finite()) {
        return Err(Error::Estimator("scatter point fit diverged".into()));
    }
    Ok(p)
}
