//! Far-field and near-field OFDM channel synthesis with per-antenna masks.

use std::f64::consts::PI;
use std::io::Write;
use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::scenario::{bearing, ArrayLayout, PathSet, Point, ScenarioConfig};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    Binary,
    Stochastic,
}

/// Per-antenna blockage coefficients of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub coefficients: Vec<C64>,
    pub kind: MaskKind,
}

impl Mask {
    pub fn ones(n: usize) -> Self {
        Self { coefficients: vec![C64::new(1.0, 0.0); n], kind: MaskKind::Binary }
    }

    /// Zeros on the 0-based antenna range `blocked`, ones elsewhere.
    pub fn blocked(n: usize, blocked: Range<usize>) -> Self {
        let mut m = Self::ones(n);
        for c in &mut m.coefficients[blocked] {
            *c = C64::new(0.0, 0.0);
        }
        m
    }

    /// Blocked entries drawn from CN(0.2, 0.2) with the mean split evenly
    /// between real and imaginary parts; other entries are 1.
    pub fn stochastic<R: Rng + ?Sized>(n: usize, blocked: Range<usize>, rng: &mut R) -> Self {
        let mut m = Self::ones(n);
        let mean = 0.2 / 2f64.sqrt();
        let sd = 0.1f64.sqrt();
        for c in &mut m.coefficients[blocked] {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *c = C64::new(mean + sd * re, mean + sd * im);
        }
        m.kind = MaskKind::Stochastic;
        m
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn is_all_ones(&self) -> bool {
        self.coefficients.iter().all(|c| *c == C64::new(1.0, 0.0))
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.coefficients
    }
}

/// Complex gain of path `path` (0 = LOS).
pub fn path_gain(path: usize, paths: &PathSet, layout: &ArrayLayout, config: &ScenarioConfig) -> Result<C64> {
    if path >= paths.num_paths() {
        return Err(Error::Config(format!("path index {path} out of range")));
    }
    let lambda = config.carrier_wavelength();
    let pb = layout.array_center;
    let p0 = paths.ue_position;
    let phase = C64::from_polar(1.0, -paths.path_phases[path]);
    let d0 = (p0 - pb).norm();
    if path == 0 {
        if d0 < 1e-12 {
            return Err(Error::Singularity("UE at the array center".into()));
        }
        return Ok(phase * lambda / (4.0 * PI * d0));
    }
    let pl = paths.sp_positions[path - 1];
    let (a, b) = ((p0 - pl).norm(), (pl - pb).norm());
    if a < 1e-12 || b < 1e-12 {
        return Err(Error::Singularity(format!("scatter point {path} coincides with UE or array center")));
    }
    let rcs = paths.rcs[path - 1];
    Ok(phase * (rcs / (4.0 * PI)).sqrt() * lambda / (4.0 * PI * a * b))
}

/// Far-field steering vector; entry n is `exp(-jπ((N+1)/2 - n) sinϑ)`.
pub fn ff_steering(aoa: f64, n_antennas: usize) -> Vec<C64> {
    let mid = (n_antennas as f64 + 1.0) / 2.0;
    let s = aoa.sin();
    (1..=n_antennas)
        .map(|n| C64::from_polar(1.0, -PI * (mid - n as f64) * s))
        .collect()
}

/// Geometric length of path `path` from the UE to the array reference.
pub fn path_length(path: usize, paths: &PathSet, reference: &Point) -> f64 {
    let p0 = paths.ue_position;
    if path == 0 {
        (p0 - reference).norm()
    } else {
        let pl = paths.sp_positions[path - 1];
        (p0 - pl).norm() + (pl - reference).norm()
    }
}

/// `exp(-j 2π/λ · len)`.
pub fn delay_phase(lambda: f64, len: f64) -> C64 {
    C64::from_polar(1.0, -2.0 * PI / lambda * len)
}

/// Delay component of path `path` at subcarrier `k` (0-based).
pub fn delay_component(k: usize, path: usize, paths: &PathSet, layout: &ArrayLayout, config: &ScenarioConfig) -> C64 {
    let lambda = config.subcarrier_wavelengths()[k];
    delay_phase(lambda, path_length(path, paths, &layout.array_center) + paths.clock_offset_m)
}

/// Near-field amplitude and steering terms for a source, given the
/// subcarrier and carrier wavelengths.
pub fn nf_terms(lambda_k: f64, lambda_c: f64, source: &Point, layout: &ArrayLayout) -> Result<(Vec<f64>, Vec<C64>)> {
    let r = (source - layout.array_center).norm();
    let mut amp = Vec::with_capacity(layout.num_antennas());
    let mut steer = Vec::with_capacity(layout.num_antennas());
    for b in &layout.antenna_positions {
        let rn = (source - b).norm();
        if rn < 1e-12 {
            return Err(Error::Singularity(format!("source {:?} on an antenna", (source.x, source.y))));
        }
        amp.push(lambda_k * r / (lambda_c * rn));
        steer.push(delay_phase(lambda_k, rn - r));
    }
    Ok((amp, steer))
}

/// Near-field terms `(c_k, d_k)` at subcarrier `k` (0-based).
pub fn nf_element_terms(k: usize, source: &Point, layout: &ArrayLayout, config: &ScenarioConfig) -> Result<(Vec<f64>, Vec<C64>)> {
    let lambdas = config.subcarrier_wavelengths();
    if k >= lambdas.len() {
        return Err(Error::Config(format!("subcarrier {k} out of range")));
    }
    nf_terms(lambdas[k], config.carrier_wavelength(), source, layout)
}

/// One path's factors. Arrays over (k, n) are row-major in k.
#[derive(Debug, Clone, PartialEq)]
pub struct PathComponent {
    pub gain: C64,
    pub amplitude: Vec<f64>,
    pub steering: Vec<C64>,
    pub delay: Vec<C64>,
    pub mask: Vec<C64>,
}

impl PathComponent {
    pub fn value(&self, k: usize, n: usize, num_antennas: usize) -> C64 {
        let i = k * num_antennas + n;
        self.gain * self.amplitude[i] * self.mask[n] * self.steering[i] * self.delay[k]
    }
}

/// Per-subcarrier channel vectors plus the per-path decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    pub num_subcarriers: usize,
    pub num_antennas: usize,
    /// `h[k * N + n]`.
    pub h: Vec<C64>,
    pub paths: Vec<PathComponent>,
}

impl ChannelTensor {
    fn from_paths(num_subcarriers: usize, num_antennas: usize, paths: Vec<PathComponent>) -> Self {
        let mut h = vec![C64::new(0.0, 0.0); num_subcarriers * num_antennas];
        for p in &paths {
            for k in 0..num_subcarriers {
                for n in 0..num_antennas {
                    h[k * num_antennas + n] += p.value(k, n, num_antennas);
                }
            }
        }
        Self { num_subcarriers, num_antennas, h, paths }
    }

    pub fn subcarrier(&self, k: usize) -> &[C64] {
        &self.h[k * self.num_antennas..(k + 1) * self.num_antennas]
    }

    /// Writes `antenna,subcarrier,re,im` rows with 1-based indices.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["antenna", "subcarrier", "re", "im"])?;
        for n in 0..self.num_antennas {
            for k in 0..self.num_subcarriers {
                let v = self.h[k * self.num_antennas + n];
                w.write_record([(n + 1).to_string(), (k + 1).to_string(), v.re.to_string(), v.im.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Near-field channel `h_k = Σ α_ℓ c_ℓ,k ⊙ m_ℓ ⊙ d_ℓ,k D_ℓ,k`.
pub fn nf_channel(paths: &PathSet, masks: &[Mask], layout: &ArrayLayout, config: &ScenarioConfig) -> Result<ChannelTensor> {
    paths.validate(layout)?;
    check_len("masks", paths.num_paths(), masks.len())?;
    let n = layout.num_antennas();
    let lambdas = config.subcarrier_wavelengths();
    let lambda_c = config.carrier_wavelength();
    let mut comps = Vec::with_capacity(paths.num_paths());
    for (l, mask) in masks.iter().enumerate() {
        check_len("mask length", n, mask.len())?;
        let src = paths.source(l);
        let len = path_length(l, paths, &layout.array_center) + paths.clock_offset_m;
        let mut amplitude = Vec::with_capacity(lambdas.len() * n);
        let mut steering = Vec::with_capacity(lambdas.len() * n);
        for &lk in &lambdas {
            let (c, d) = nf_terms(lk, lambda_c, &src, layout)?;
            amplitude.extend(c);
            steering.extend(d);
        }
        comps.push(PathComponent {
            gain: path_gain(l, paths, layout, config)?,
            amplitude,
            steering,
            delay: lambdas.iter().map(|&lk| delay_phase(lk, len)).collect(),
            mask: mask.coefficients.clone(),
        });
    }
    Ok(ChannelTensor::from_paths(lambdas.len(), n, comps))
}

/// Far-field channel `h_k = Σ α_ℓ a(ϑ_ℓ) D_k(τ_ℓ)`, with `ϑ_ℓ` the bearing of
/// the last bounce seen from the array center.
pub fn ff_channel(paths: &PathSet, layout: &ArrayLayout, config: &ScenarioConfig) -> Result<ChannelTensor> {
    paths.validate(layout)?;
    let n = layout.num_antennas();
    let lambdas = config.subcarrier_wavelengths();
    let mut comps = Vec::with_capacity(paths.num_paths());
    for l in 0..paths.num_paths() {
        let aoa = bearing(&layout.array_center, &paths.source(l));
        let a = ff_steering(aoa, n);
        let len = path_length(l, paths, &layout.array_center) + paths.clock_offset_m;
        comps.push(PathComponent {
            gain: path_gain(l, paths, layout, config)?,
            amplitude: vec![1.0; lambdas.len() * n],
            steering: a.iter().copied().cycle().take(lambdas.len() * n).collect(),
            delay: lambdas.iter().map(|&lk| delay_phase(lk, len)).collect(),
            mask: vec![C64::new(1.0, 0.0); n],
        });
    }
    Ok(ChannelTensor::from_paths(lambdas.len(), n, comps))
}
