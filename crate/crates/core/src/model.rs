//! Noise-free observation templates.
//!
//! A path arriving from `source` with total length `len` (geometry plus
//! clock offset) has the element-space response
//! `e_k,n = c_k,n · d_k,n · exp(-j2π len / λ_k)`; after masking and combining
//! it becomes the template `V_s,g,k = x_g,k Σ_n∈s w_g,s,n m_n e_k,n`.

use std::f64::consts::PI;

use crate::channel::{ff_steering, Mask};
use crate::error::{check_len, Error, Result};
use crate::scenario::{build_array, ArrayLayout, PathSet, Point, ScenarioConfig};
use crate::signal::{CombinerSchedule, ObservationTensor, PilotSchedule};
use crate::C64;

/// Estimand `[p_0, p_1..p_L, β]` with optional path gains.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub ue_position: Point,
    pub sp_positions: Vec<Point>,
    pub clock_offset_m: f64,
    pub gains: Option<Vec<C64>>,
}

impl StateVector {
    pub fn new(ue_position: Point, sp_positions: Vec<Point>, clock_offset_m: f64) -> Self {
        Self { ue_position, sp_positions, clock_offset_m, gains: None }
    }

    pub fn from_paths(paths: &PathSet) -> Self {
        Self::new(paths.ue_position, paths.sp_positions.clone(), paths.clock_offset_m)
    }

    pub fn num_sps(&self) -> usize {
        self.sp_positions.len()
    }

    pub fn num_params(&self) -> usize {
        2 * self.num_sps() + 3
    }

    /// `[x0, y0, x1, y1, …, β]`.
    pub fn to_params(&self) -> Vec<f64> {
        let mut v = vec![self.ue_position.x, self.ue_position.y];
        for p in &self.sp_positions {
            v.extend([p.x, p.y]);
        }
        v.push(self.clock_offset_m);
        v
    }

    pub fn from_params(v: &[f64]) -> Self {
        assert!(v.len() >= 3 && v.len() % 2 == 1, "state parameter vector has odd length >= 3");
        let l = (v.len() - 3) / 2;
        Self {
            ue_position: Point::new(v[0], v[1]),
            sp_positions: (0..l).map(|i| Point::new(v[2 + 2 * i], v[3 + 2 * i])).collect(),
            clock_offset_m: v[v.len() - 1],
            gains: None,
        }
    }

    pub fn with_gains(mut self, gains: Vec<C64>) -> Self {
        self.gains = Some(gains);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.to_params().iter().all(|v| v.is_finite())
    }

    /// Position of the last bounce of path `path`.
    pub fn source(&self, path: usize) -> Point {
        if path == 0 {
            self.ue_position
        } else {
            self.sp_positions[path - 1]
        }
    }
}

/// Everything needed to predict observations for a hypothesized state.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub config: ScenarioConfig,
    pub layout: ArrayLayout,
    pub combiners: CombinerSchedule,
    pub pilots: PilotSchedule,
    lambdas: Vec<f64>,
    lambda_c: f64,
}

impl SystemModel {
    pub fn new(config: &ScenarioConfig, combiners: CombinerSchedule) -> Result<Self> {
        let pilots = PilotSchedule::constant(config);
        Self::with_pilots(config, combiners, pilots)
    }

    pub fn with_pilots(config: &ScenarioConfig, combiners: CombinerSchedule, pilots: PilotSchedule) -> Result<Self> {
        let layout = build_array(config)?;
        check_len("combiner transmissions", config.num_transmissions, combiners.num_transmissions)?;
        check_len("combiner subarrays", config.num_subarrays, combiners.num_subarrays)?;
        check_len("combiner length", config.subarray_size(), combiners.subarray_size)?;
        check_len("pilot transmissions", config.num_transmissions, pilots.num_transmissions)?;
        check_len("pilot subcarriers", config.num_subcarriers, pilots.num_subcarriers)?;
        Ok(Self {
            lambdas: config.subcarrier_wavelengths(),
            lambda_c: config.carrier_wavelength(),
            config: config.clone(),
            layout,
            combiners,
            pilots,
        })
    }

    pub fn num_subarrays(&self) -> usize {
        self.combiners.num_subarrays
    }

    pub fn num_transmissions(&self) -> usize {
        self.combiners.num_transmissions
    }

    pub fn num_subcarriers(&self) -> usize {
        self.lambdas.len()
    }

    pub fn subarray_size(&self) -> usize {
        self.combiners.subarray_size
    }

    pub fn block_len(&self) -> usize {
        self.num_transmissions() * self.num_subcarriers()
    }

    pub fn observation_len(&self) -> usize {
        self.num_subarrays() * self.block_len()
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn empty_observation(&self) -> ObservationTensor {
        ObservationTensor::zeros(self.num_subarrays(), self.num_transmissions(), self.num_subcarriers())
    }

    /// Total length of path `path` for `state`, clock offset included.
    pub fn path_length(&self, path: usize, state: &StateVector) -> f64 {
        let pb = self.layout.array_center;
        let p0 = state.ue_position;
        let geo = if path == 0 {
            (p0 - pb).norm()
        } else {
            let pl = state.sp_positions[path - 1];
            (p0 - pl).norm() + (pl - pb).norm()
        };
        geo + state.clock_offset_m
    }

    /// Element-space response `e[k * N + n]` of a source at `source`.
    pub fn element_response(&self, source: &Point, len: f64) -> Vec<C64> {
        let n = self.layout.num_antennas();
        let r = (source - self.layout.array_center).norm();
        let rn: Vec<f64> = self
            .layout
            .antenna_positions
            .iter()
            .map(|b| (source - b).norm().max(1e-12))
            .collect();
        let mut e = Vec::with_capacity(self.lambdas.len() * n);
        for &lk in &self.lambdas {
            let kw = -2.0 * PI / lk;
            let amp = lk * r / self.lambda_c;
            for &d in &rn {
                e.push(C64::from_polar(amp / d, kw * (d - r + len)));
            }
        }
        e
    }

    /// Combines an element-space response into one subarray's block.
    pub fn combine_block(&self, e: &[C64], s: usize, mask: Option<&[C64]>) -> Vec<C64> {
        let (g_n, k_n, ns) = (self.num_transmissions(), self.num_subcarriers(), self.subarray_size());
        let n = self.layout.num_antennas();
        let off = s * ns;
        let mut out = Vec::with_capacity(g_n * k_n);
        let mut masked = vec![C64::new(0.0, 0.0); ns];
        for g in 0..g_n {
            let w = self.combiners.w(g, s);
            for k in 0..k_n {
                let row = &e[k * n + off..k * n + off + ns];
                let acc: C64 = match mask {
                    Some(m) => {
                        for i in 0..ns {
                            masked[i] = row[i] * m[off + i];
                        }
                        w.iter().zip(&masked).map(|(a, b)| a * b).sum()
                    }
                    None => w.iter().zip(row).map(|(a, b)| a * b).sum(),
                };
                out.push(acc * self.pilots.x(g, k));
            }
        }
        out
    }

    pub fn combine(&self, e: &[C64], mask: Option<&[C64]>) -> Vec<C64> {
        (0..self.num_subarrays()).flat_map(|s| self.combine_block(e, s, mask)).collect()
    }

    /// Template of path `path` for `state`, optionally masked.
    pub fn template(&self, path: usize, state: &StateVector, mask: Option<&[C64]>) -> Vec<C64> {
        let e = self.element_response(&state.source(path), self.path_length(path, state));
        self.combine(&e, mask)
    }

    /// Columns `[v_0, v_1, …, v_L]`; `masks` holds one mask per path.
    pub fn templates(&self, state: &StateVector, masks: Option<&[Mask]>) -> Vec<Vec<C64>> {
        (0..=state.num_sps())
            .map(|l| self.template(l, state, masks.map(|m| m[l].as_slice())))
            .collect()
    }

    /// Noise-free observation `Σ α_ℓ v_ℓ`.
    pub fn mean(&self, state: &StateVector, gains: &[C64], masks: Option<&[Mask]>) -> Result<Vec<C64>> {
        check_len("path gains", state.num_sps() + 1, gains.len())?;
        if let Some(m) = masks {
            check_len("masks", state.num_sps() + 1, m.len())?;
            for mk in m {
                check_len("mask length", self.layout.num_antennas(), mk.len())?;
            }
        }
        let mut mu = vec![C64::new(0.0, 0.0); self.observation_len()];
        for (col, g) in self.templates(state, masks).iter().zip(gains) {
            for (m, v) in mu.iter_mut().zip(col) {
                *m += g * v;
            }
        }
        Ok(mu)
    }

    pub fn mean_observation(&self, state: &StateVector, gains: &[C64], masks: Option<&[Mask]>) -> Result<ObservationTensor> {
        let mu = self.mean(state, gains, masks)?;
        ObservationTensor::from_vec(self.num_subarrays(), self.num_transmissions(), self.num_subcarriers(), mu)
    }

    /// `b_g(θ) = w_g,sᵀ a(θ)` for every transmission.
    pub fn ff_beam_gains(&self, s: usize, theta: f64) -> Vec<C64> {
        let a = ff_steering(theta, self.subarray_size());
        (0..self.num_transmissions())
            .map(|g| self.combiners.w(g, s).iter().zip(&a).map(|(w, a)| w * a).sum())
            .collect()
    }

    /// Far-field subarray template `U_g,k = w_gᵀ a(θ) D_k(τ) x_g,k`.
    pub fn ff_block_template(&self, s: usize, theta: f64, tau: f64) -> Vec<C64> {
        let b = self.ff_beam_gains(s, theta);
        let d: Vec<C64> = self.lambdas.iter().map(|&lk| C64::from_polar(1.0, -2.0 * PI / lk * tau)).collect();
        let mut u = Vec::with_capacity(self.block_len());
        for (g, bg) in b.iter().enumerate() {
            for (k, dk) in d.iter().enumerate() {
                u.push(bg * dk * self.pilots.x(g, k));
            }
        }
        u
    }

    pub fn check_observation(&self, y: &ObservationTensor) -> Result<()> {
        if y.num_subarrays != self.num_subarrays()
            || y.num_transmissions != self.num_transmissions()
            || y.num_subcarriers != self.num_subcarriers()
        {
            return Err(Error::Dimension { what: "observation tensor", expected: self.observation_len(), got: y.len() });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::nf_channel;
    use crate::scenario::{bearing, Scenario};
    use crate::signal::{make_combiners, synthesize, CombinerKind};

    fn model(seed: u64) -> (Scenario, SystemModel) {
        let sc = Scenario::reference();
        let w = make_combiners(&sc.config, CombinerKind::RandomPhase, seed);
        let m = SystemModel::new(&sc.config, w).unwrap();
        (sc, m)
    }

    #[test]
    fn mean_matches_channel_synthesis() {
        let (sc, m) = model(5);
        let ps = sc.path_set();
        let masks = [Mask::blocked(100, 4..10), Mask::ones(100)];
        let h = nf_channel(&ps, &masks, &m.layout, &sc.config).unwrap();
        let y = synthesize(&h, &m.combiners, &m.pilots, 0.0, 0).unwrap();
        let gains: Vec<C64> = h.paths.iter().map(|p| p.gain).collect();
        let mu = m.mean(&StateVector::from_paths(&ps), &gains, Some(&masks)).unwrap();
        let scale = mu.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (a, b) in mu.iter().zip(&y.data) {
            assert!((a - b).norm() < 1e-12 * scale);
        }
    }

    #[test]
    fn params_roundtrip() {
        let st = StateVector::new(Point::new(1.0, 2.0), vec![Point::new(3.0, 4.0), Point::new(5.0, 6.0)], 0.7);
        let v = st.to_params();
        assert_eq!(v, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.7]);
        assert_eq!(StateVector::from_params(&v), st);
        assert_eq!(st.num_params(), 7);
    }

    #[test]
    fn ff_template_approximates_los_block_far_away() {
        // a distant source on one subarray looks like a plane wave from its center
        let (_, m) = model(2);
        let s = 1;
        let c = m.layout.subarray_centers[s];
        let src = Point::new(400.0, 150.0);
        let beta = 0.3;
        let st = StateVector::new(src, vec![], beta);
        let e = m.element_response(&src, m.path_length(0, &st));
        let v = m.combine_block(&e, s, None);
        let u = m.ff_block_template(s, bearing(&c, &src), (src - c).norm() + beta);
        let dot: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
        let nu: f64 = u.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let nv: f64 = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        assert!(dot.norm() / (nu * nv) > 0.99);
    }
}
