//! Analog combiners, pilots and synthesis of the combined OFDM observations
//! `y_g,k = W_g h_k x_g,k + W_g n_g,k`.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::channel::ChannelTensor;
use crate::error::{check_len, Error, Result};
use crate::rng::{substream, tag};
use crate::scenario::ScenarioConfig;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombinerKind {
    /// i.i.d. uniform phases.
    RandomPhase,
    /// Transmission g uses DFT column `g mod N_S` on every subarray.
    DftCodebook,
    /// Like [`DftCodebook`](Self::DftCodebook) but the columns are visited in
    /// a seeded random order; past `N_S` transmissions columns repeat at random.
    ShuffledDft,
}

/// Block-diagonal combiners: one length-`N_S` vector per (transmission, subarray).
#[derive(Debug, Clone, PartialEq)]
pub struct CombinerSchedule {
    pub kind: CombinerKind,
    pub num_transmissions: usize,
    pub num_subarrays: usize,
    pub subarray_size: usize,
    /// `weights[(g * S + s) * N_S + n]`.
    pub weights: Vec<C64>,
}

impl CombinerSchedule {
    pub fn w(&self, g: usize, s: usize) -> &[C64] {
        let ns = self.subarray_size;
        let i = (g * self.num_subarrays + s) * ns;
        &self.weights[i..i + ns]
    }

    /// The `G × N_S` matrix whose rows are `w_g,sᵀ`.
    pub fn stacked(&self, s: usize) -> DMatrix<C64> {
        DMatrix::from_fn(self.num_transmissions, self.subarray_size, |g, n| self.w(g, s)[n])
    }
}

fn dft_column(ns: usize, col: usize) -> impl Iterator<Item = C64> {
    let scale = 1.0 / (ns as f64).sqrt();
    (0..ns).map(move |n| C64::from_polar(scale, -2.0 * PI * (n * col) as f64 / ns as f64))
}

pub fn make_combiners(config: &ScenarioConfig, kind: CombinerKind, seed: u64) -> CombinerSchedule {
    let (g_n, s_n, ns) = (config.num_transmissions, config.num_subarrays, config.subarray_size());
    let scale = 1.0 / (ns as f64).sqrt();
    let mut rng = substream(seed, &[tag::COMBINER]);
    let mut weights = Vec::with_capacity(g_n * s_n * ns);
    match kind {
        CombinerKind::RandomPhase => {
            for _ in 0..g_n * s_n * ns {
                weights.push(C64::from_polar(scale, rng.random_range(0.0..TAU)));
            }
        }
        CombinerKind::DftCodebook | CombinerKind::ShuffledDft => {
            let cols: Vec<usize> = if kind == CombinerKind::DftCodebook {
                (0..g_n).map(|g| g % ns).collect()
            } else {
                let mut perm: Vec<usize> = (0..ns).collect();
                perm.shuffle(&mut rng);
                (0..g_n).map(|g| if g < ns { perm[g] } else { rng.random_range(0..ns) }).collect()
            };
            for &c in &cols {
                for _ in 0..s_n {
                    weights.extend(dft_column(ns, c));
                }
            }
        }
    }
    CombinerSchedule { kind, num_transmissions: g_n, num_subarrays: s_n, subarray_size: ns, weights }
}

/// Pilot symbols `x_g,k`, stored `[g * K + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSchedule {
    pub num_transmissions: usize,
    pub num_subcarriers: usize,
    pub symbols: Vec<C64>,
}

impl PilotSchedule {
    /// Constant pilots `√P` with zero phase.
    pub fn constant(config: &ScenarioConfig) -> Self {
        let x = C64::new(config.transmit_power_w().sqrt(), 0.0);
        Self {
            num_transmissions: config.num_transmissions,
            num_subcarriers: config.num_subcarriers,
            symbols: vec![x; config.num_transmissions * config.num_subcarriers],
        }
    }

    pub fn x(&self, g: usize, k: usize) -> C64 {
        self.symbols[g * self.num_subcarriers + k]
    }
}

/// Combined observations `y_s,g,k`, flattened subarray-major, then
/// transmission, then subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTensor {
    pub num_subarrays: usize,
    pub num_transmissions: usize,
    pub num_subcarriers: usize,
    pub data: Vec<C64>,
}

impl ObservationTensor {
    pub fn zeros(s: usize, g: usize, k: usize) -> Self {
        Self { num_subarrays: s, num_transmissions: g, num_subcarriers: k, data: vec![C64::new(0.0, 0.0); s * g * k] }
    }

    pub fn from_vec(s: usize, g: usize, k: usize, data: Vec<C64>) -> Result<Self> {
        check_len("observation length", s * g * k, data.len())?;
        Ok(Self { num_subarrays: s, num_transmissions: g, num_subcarriers: k, data })
    }

    pub fn index(&self, s: usize, g: usize, k: usize) -> usize {
        (s * self.num_transmissions + g) * self.num_subcarriers + k
    }

    pub fn get(&self, s: usize, g: usize, k: usize) -> C64 {
        self.data[self.index(s, g, k)]
    }

    pub fn block_len(&self) -> usize {
        self.num_transmissions * self.num_subcarriers
    }

    /// Observations of subarray `s`, ordered by transmission then subcarrier.
    pub fn block(&self, s: usize) -> &[C64] {
        let b = self.block_len();
        &self.data[s * b..(s + 1) * b]
    }

    pub fn block_mut(&mut self, s: usize) -> &mut [C64] {
        let b = self.block_len();
        &mut self.data[s * b..(s + 1) * b]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Writes `s,g,k,re,im` rows with 1-based indices.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "g", "k", "re", "im"])?;
        for s in 0..self.num_subarrays {
            for g in 0..self.num_transmissions {
                for k in 0..self.num_subcarriers {
                    let v = self.get(s, g, k);
                    w.write_record([
                        (s + 1).to_string(),
                        (g + 1).to_string(),
                        (k + 1).to_string(),
                        v.re.to_string(),
                        v.im.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws per-antenna noise for each transmission from its own substream of
/// `noise_seed`, so the result does not depend on evaluation order.
pub fn synthesize(
    channel: &ChannelTensor,
    combiners: &CombinerSchedule,
    pilots: &PilotSchedule,
    sigma2: f64,
    noise_seed: u64,
) -> Result<ObservationTensor> {
    let (s_n, g_n, ns) = (combiners.num_subarrays, combiners.num_transmissions, combiners.subarray_size);
    let (k_n, n) = (channel.num_subcarriers, channel.num_antennas);
    check_len("antennas covered by combiners", n, s_n * ns)?;
    check_len("pilot transmissions", g_n, pilots.num_transmissions)?;
    check_len("pilot subcarriers", k_n, pilots.num_subcarriers)?;
    if !(sigma2 >= 0.0) {
        return Err(Error::Config(format!("noise variance must be non-negative, got {sigma2}")));
    }
    let sd = (sigma2 / 2.0).sqrt();
    // per transmission: S × K outputs
    let per_g: Vec<Vec<C64>> = (0..g_n)
        .into_par_iter()
        .map(|g| {
            let mut rng = substream(noise_seed, &[tag::NOISE, g as u64]);
            let mut out = vec![C64::new(0.0, 0.0); s_n * k_n];
            for k in 0..k_n {
                let hk = channel.subcarrier(k);
                let x = pilots.x(g, k);
                let noise: Vec<C64> = if sigma2 > 0.0 {
                    (0..n)
                        .map(|_| {
                            let re: f64 = rng.sample(StandardNormal);
                            let im: f64 = rng.sample(StandardNormal);
                            C64::new(sd * re, sd * im)
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                for s in 0..s_n {
                    let w = combiners.w(g, s);
                    let off = s * ns;
                    let mut sig = C64::new(0.0, 0.0);
                    let mut nz = C64::new(0.0, 0.0);
                    for i in 0..ns {
                        sig += w[i] * hk[off + i];
                        if sigma2 > 0.0 {
                            nz += w[i] * noise[off + i];
                        }
                    }
                    out[s * k_n + k] = sig * x + nz;
                }
            }
            out
        })
        .collect();
    let mut obs = ObservationTensor::zeros(s_n, g_n, k_n);
    for (g, v) in per_g.into_iter().enumerate() {
        for s in 0..s_n {
            for k in 0..k_n {
                let i = obs.index(s, g, k);
                obs.data[i] = v[s * k_n + k];
            }
        }
    }
    Ok(obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{nf_channel, Mask, PathComponent};
    use crate::scenario::{build_array, Scenario};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn flat_channel(k: usize, values: Vec<C64>) -> ChannelTensor {
        let n = values.len() / k;
        ChannelTensor { num_subcarriers: k, num_antennas: n, h: values, paths: Vec::<PathComponent>::new() }
    }

    #[test]
    fn combiners_unit_norm_and_deterministic() {
        let cfg = ScenarioConfig::default();
        for kind in [CombinerKind::RandomPhase, CombinerKind::DftCodebook, CombinerKind::ShuffledDft] {
            let w = make_combiners(&cfg, kind, 9);
            for g in 0..cfg.num_transmissions {
                for s in 0..cfg.num_subarrays {
                    let e: f64 = w.w(g, s).iter().map(|c| c.norm_sqr()).sum();
                    assert_relative_eq!(e, 1.0, epsilon = 1e-12);
                    assert!(w.w(g, s).iter().all(|c| (c.norm() - 0.2).abs() < 1e-12));
                }
            }
            assert_eq!(w, make_combiners(&cfg, kind, 9));
        }
        assert_ne!(
            make_combiners(&cfg, CombinerKind::RandomPhase, 1),
            make_combiners(&cfg, CombinerKind::RandomPhase, 2)
        );
    }

    #[test]
    fn full_dft_codebook_is_unitary() {
        let cfg = ScenarioConfig::default();
        for kind in [CombinerKind::DftCodebook, CombinerKind::ShuffledDft] {
            let w = make_combiners(&cfg, kind, 4).stacked(0);
            let gram = &w * w.adjoint();
            let eye = DMatrix::<C64>::identity(25, 25);
            assert!((gram - eye).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_input_zero_output() {
        let cfg = ScenarioConfig::default();
        let w = make_combiners(&cfg, CombinerKind::RandomPhase, 0);
        let h = flat_channel(10, vec![C64::new(0.0, 0.0); 1000]);
        let y = synthesize(&h, &w, &PilotSchedule::constant(&cfg), 0.0, 0).unwrap();
        assert!(y.data.iter().all(|v| v.norm() == 0.0));
        assert_eq!(y.len(), 4 * 25 * 10);
    }

    #[test]
    fn two_antenna_example() {
        let cfg = ScenarioConfig {
            num_antennas: 2,
            num_subarrays: 1,
            num_transmissions: 1,
            num_subcarriers: 2,
            ..Default::default()
        };
        let r = 1.0 / 2f64.sqrt();
        let w = CombinerSchedule {
            kind: CombinerKind::RandomPhase,
            num_transmissions: 1,
            num_subarrays: 1,
            subarray_size: 2,
            weights: vec![C64::new(r, 0.0); 2],
        };
        let h = flat_channel(2, vec![C64::new(1.0, 0.0); 4]);
        let y = synthesize(&h, &w, &PilotSchedule::constant(&cfg), 0.0, 0).unwrap();
        let p = cfg.transmit_power_w();
        assert_relative_eq!(y.get(0, 0, 0).re, (2.0 * p).sqrt(), epsilon = 1e-15);
        assert_eq!(y.get(0, 0, 0).im, 0.0);
    }

    #[test]
    fn noise_variance_and_whiteness() {
        let cfg = ScenarioConfig { num_transmissions: 1, num_subcarriers: 2, ..Default::default() };
        let w = make_combiners(&cfg, CombinerKind::RandomPhase, 3);
        let pilots = PilotSchedule::constant(&cfg);
        let h = flat_channel(2, vec![C64::new(0.0, 0.0); 200]);
        let sigma2 = 2.5;
        let draws = 10_000;
        let mut a = Vec::with_capacity(draws);
        let mut b = Vec::with_capacity(draws);
        for t in 0..draws {
            let y = synthesize(&h, &w, &pilots, sigma2, t as u64).unwrap();
            a.push(y.get(0, 0, 0));
            b.push(y.get(1, 0, 1));
        }
        let var = a.iter().map(|v| v.norm_sqr()).sum::<f64>() / draws as f64;
        assert!((var / sigma2 - 1.0).abs() < 0.05, "{var}");
        let vb = b.iter().map(|v| v.norm_sqr()).sum::<f64>() / draws as f64;
        let cross: C64 = a.iter().zip(&b).map(|(x, y)| x * y.conj()).sum::<C64>() / draws as f64;
        assert!(cross.norm() / (var * vb).sqrt() < 0.05);
    }

    #[test]
    fn csv_dump() {
        let y = ObservationTensor::from_vec(1, 2, 1, vec![C64::new(1.0, -2.0), C64::new(0.5, 0.0)]).unwrap();
        let mut buf = Vec::new();
        y.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "s,g,k,re,im\n1,1,1,1,-2\n1,2,1,0.5,0\n");
        assert!(ObservationTensor::from_vec(1, 2, 2, vec![]).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let cfg = ScenarioConfig::default();
        let w = make_combiners(&cfg, CombinerKind::RandomPhase, 0);
        let h = flat_channel(10, vec![C64::new(0.0, 0.0); 990]);
        assert!(synthesize(&h, &w, &PilotSchedule::constant(&cfg), 0.0, 0).is_err());
    }

    fn reference_channel(phase: f64) -> (ScenarioConfig, ChannelTensor) {
        let sc = Scenario { path_phases: Some(vec![phase, 0.4]), ..Scenario::reference() };
        let layout = build_array(&sc.config).unwrap();
        let h = nf_channel(&sc.path_set(), &[Mask::ones(100), Mask::ones(100)], &layout, &sc.config).unwrap();
        (sc.config, h)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn noiseless_synthesis_is_linear(p1 in 0.0f64..6.0, p2 in 0.0f64..6.0, seed in any::<u64>()) {
            let (cfg, ha) = reference_channel(p1);
            let (_, hb) = reference_channel(p2);
            let w = make_combiners(&cfg, CombinerKind::RandomPhase, seed);
            let pilots = PilotSchedule::constant(&cfg);
            let mut hab = ha.clone();
            for (x, y) in hab.h.iter_mut().zip(&hb.h) { *x += y; }
            let ya = synthesize(&ha, &w, &pilots, 0.0, 0).unwrap();
            let yb = synthesize(&hb, &w, &pilots, 0.0, 0).unwrap();
            let yab = synthesize(&hab, &w, &pilots, 0.0, 0).unwrap();
            for i in 0..yab.len() {
                prop_assert!((yab.data[i] - ya.data[i] - yb.data[i]).norm() < 1e-15);
            }
        }

        #[test]
        fn energy_scales_with_power(dbm in -20.0f64..40.0) {
            let (cfg, h) = reference_channel(0.0);
            let w = make_combiners(&cfg, CombinerKind::RandomPhase, 1);
            let e = |c: &ScenarioConfig| synthesize(&h, &w, &PilotSchedule::constant(c), 0.0, 0)
                .unwrap().data.iter().map(|v| v.norm_sqr()).sum::<f64>();
            let base = e(&cfg);
            let other = e(&cfg.with_power_dbm(dbm));
            prop_assert!((other / base - 10f64.powf((dbm - 20.0) / 10.0)).abs() < 1e-9 * other / base);
        }
    }
}
