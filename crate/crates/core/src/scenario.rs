//! System configuration, array geometry and the propagation environment.
//!
//! The array is a uniform linear array on the y-axis with half-wavelength
//! spacing at the carrier, centered at the origin. It is split into `S`
//! contiguous subarrays, each feeding one RF chain. Distances are meters,
//! angles radians and powers dBm throughout.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, tag};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// A point in the 2D plane, in meters.
pub type Point = Vector2<f64>;

/// Shorthand for building a [`Point`].
pub fn pt(x: f64, y: f64) -> Point {
    Point::new(x, y)
}

/// Bearing of `to` seen from `from`, measured from the array broadside (+x)
/// toward +y. A source on broadside has bearing 0.
pub fn bearing(from: &Point, to: &Point) -> f64 {
    let d = to - from;
    d.y.atan2(d.x)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub carrier_frequency_hz: f64,
    pub bandwidth_hz: f64,
    pub num_subcarriers: usize,
    pub num_antennas: usize,
    pub num_subarrays: usize,
    pub num_transmissions: usize,
    pub transmit_power_dbm: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub noise_figure_db: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    /// 28 GHz, 200 MHz, 10 subcarriers, 100 antennas in 4 subarrays,
    /// 25 transmissions at 20 dBm.
    fn default() -> Self {
        Self {
            carrier_frequency_hz: 28e9,
            bandwidth_hz: 200e6,
            num_subcarriers: 10,
            num_antennas: 100,
            num_subarrays: 4,
            num_transmissions: 25,
            transmit_power_dbm: 20.0,
            noise_psd_dbm_per_hz: -173.855,
            noise_figure_db: 13.0,
            rng_seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.carrier_frequency_hz > 0.0) {
            return bad(format!("carrier frequency must be positive, got {}", self.carrier_frequency_hz));
        }
        if !(self.bandwidth_hz > 0.0) {
            return bad(format!("bandwidth must be positive, got {}", self.bandwidth_hz));
        }
        if self.num_subcarriers < 2 {
            return bad(format!("need at least 2 subcarriers, got {}", self.num_subcarriers));
        }
        if self.num_antennas == 0 || self.num_subarrays == 0 || self.num_transmissions == 0 {
            return bad("antenna, subarray and transmission counts must be positive".into());
        }
        if self.num_antennas % self.num_subarrays != 0 {
            return bad(format!(
                "{} antennas cannot be split evenly into {} subarrays",
                self.num_antennas, self.num_subarrays
            ));
        }
        for (name, v) in [
            ("transmit_power_dbm", self.transmit_power_dbm),
            ("noise_psd_dbm_per_hz", self.noise_psd_dbm_per_hz),
            ("noise_figure_db", self.noise_figure_db),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        Ok(())
    }

    pub fn subarray_size(&self) -> usize {
        self.num_antennas / self.num_subarrays
    }

    pub fn carrier_wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.bandwidth_hz / self.num_subcarriers as f64
    }

    /// Subcarrier frequencies: `K` uniformly spaced tones centered on the carrier.
    pub fn subcarrier_frequencies(&self) -> Vec<f64> {
        let k_mid = (self.num_subcarriers as f64 - 1.0) / 2.0;
        let df = self.subcarrier_spacing_hz();
        (0..self.num_subcarriers)
            .map(|k| self.carrier_frequency_hz + (k as f64 - k_mid) * df)
            .collect()
    }

    pub fn subcarrier_wavelengths(&self) -> Vec<f64> {
        self.subcarrier_frequencies()
            .into_iter()
            .map(|f| SPEED_OF_LIGHT / f)
            .collect()
    }

    /// Path-length period of the delay matched filter, `c / Δf`.
    pub fn delay_ambiguity_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.subcarrier_spacing_hz()
    }

    pub fn transmit_power_w(&self) -> f64 {
        dbm_to_watts(self.transmit_power_dbm)
    }

    /// Array extent `(N-1)·λc/2`.
    pub fn aperture_m(&self) -> f64 {
        (self.num_antennas.saturating_sub(1)) as f64 * self.carrier_wavelength() / 2.0
    }

    /// Per-antenna noise variance `N0·W·NF`, in watts.
    pub fn noise_variance(&self) -> f64 {
        noise_variance(self)
    }

    pub fn with_power_dbm(&self, p: f64) -> Self {
        Self { transmit_power_dbm: p, ..self.clone() }
    }

    pub fn with_transmissions(&self, g: usize) -> Self {
        Self { num_transmissions: g, ..self.clone() }
    }
}

/// Fresnel and Fraunhofer distances of the array, in meters.
pub fn field_boundaries(config: &ScenarioConfig) -> (f64, f64) {
    let d = config.aperture_m();
    let lambda = config.carrier_wavelength();
    let fraunhofer = 2.0 * d * d / lambda;
    let fresnel = 0.62 * (d.powi(3) / lambda).sqrt();
    (fresnel, fraunhofer)
}

pub fn noise_variance(config: &ScenarioConfig) -> f64 {
    let dbm = config.noise_psd_dbm_per_hz + 10.0 * config.bandwidth_hz.log10() + config.noise_figure_db;
    dbm_to_watts(dbm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayLayout {
    pub antenna_positions: Vec<Point>,
    pub array_center: Point,
    pub subarray_centers: Vec<Point>,
    pub subarray_ranges: Vec<Range<usize>>,
}

impl ArrayLayout {
    pub fn num_antennas(&self) -> usize {
        self.antenna_positions.len()
    }

    pub fn num_subarrays(&self) -> usize {
        self.subarray_ranges.len()
    }

    pub fn subarray_size(&self) -> usize {
        self.subarray_ranges.first().map_or(0, |r| r.len())
    }
}

pub fn build_array(config: &ScenarioConfig) -> Result<ArrayLayout> {
    config.validate()?;
    let n = config.num_antennas;
    let spacing = config.carrier_wavelength() / 2.0;
    let mid = (n as f64 + 1.0) / 2.0;
    let antenna_positions: Vec<Point> = (1..=n)
        .map(|i| pt(0.0, (i as f64 - mid) * spacing))
        .collect();
    let ns = config.subarray_size();
    let subarray_ranges: Vec<Range<usize>> = (0..config.num_subarrays)
        .map(|s| s * ns..(s + 1) * ns)
        .collect();
    let subarray_centers = subarray_ranges
        .iter()
        .map(|r| antenna_positions[r.clone()].iter().sum::<Point>() / r.len() as f64)
        .collect();
    Ok(ArrayLayout {
        antenna_positions,
        array_center: pt(0.0, 0.0),
        subarray_centers,
        subarray_ranges,
    })
}

/// Propagation environment: UE, scatter points and the UE clock offset.
///
/// `path_phases[0]` belongs to the LOS path and `path_phases[l]` to the
/// l-th scatter point.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub ue_position: Point,
    pub sp_positions: Vec<Point>,
    pub rcs: Vec<f64>,
    pub path_phases: Vec<f64>,
    pub clock_offset_m: f64,
}

impl PathSet {
    pub fn num_sps(&self) -> usize {
        self.sp_positions.len()
    }

    pub fn num_paths(&self) -> usize {
        self.sp_positions.len() + 1
    }

    /// Position of the point the l-th path arrives from (UE for l = 0).
    pub fn source(&self, path: usize) -> Point {
        if path == 0 {
            self.ue_position
        } else {
            self.sp_positions[path - 1]
        }
    }

    pub fn validate(&self, layout: &ArrayLayout) -> Result<()> {
        if self.rcs.len() != self.sp_positions.len() {
            return Err(Error::Dimension {
                what: "rcs values per scatter point",
                expected: self.sp_positions.len(),
                got: self.rcs.len(),
            });
        }
        if self.path_phases.len() != self.num_paths() {
            return Err(Error::Dimension {
                what: "path phases",
                expected: self.num_paths(),
                got: self.path_phases.len(),
            });
        }
        if let Some(c) = self.rcs.iter().find(|c| !(**c > 0.0)) {
            return Err(Error::Config(format!("radar cross section must be positive, got {c}")));
        }
        let points = std::iter::once(&self.ue_position).chain(&self.sp_positions);
        for p in points.clone() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::Config(format!("non-finite position {p:?}")));
            }
            if layout.antenna_positions.iter().any(|b| (p - b).norm() < 1e-9) {
                return Err(Error::Singularity(format!("position {:?} coincides with an antenna", (p.x, p.y))));
            }
        }
        for sp in &self.sp_positions {
            if (sp - self.ue_position).norm() < 1e-9 {
                return Err(Error::Singularity("scatter point coincides with the UE".into()));
            }
        }
        Ok(())
    }
}

/// A scenario as stored on disk: system parameters plus geometry. Path
/// phases are drawn from the seed unless given explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub ue_position: Point,
    pub sp_positions: Vec<Point>,
    pub rcs: Vec<f64>,
    pub clock_offset_m: f64,
    pub path_phases: Option<Vec<f64>>,
}

impl Default for Scenario {
    /// UE at (2, 4) m, one scatter point at (2, -2) m with 0.5 m² RCS.
    fn default() -> Self {
        Self {
            config: ScenarioConfig::default(),
            ue_position: pt(2.0, 4.0),
            sp_positions: vec![pt(2.0, -2.0)],
            rcs: vec![0.5],
            clock_offset_m: 1.0,
            path_phases: None,
        }
    }
}

impl Scenario {
    pub fn reference() -> Self {
        Self::default()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.config.rng_seed = seed;
        self
    }

    /// Realizes the path set, drawing uniform path phases from `seed` when
    /// none are fixed.
    pub fn path_set_with_seed(&self, seed: u64) -> PathSet {
        let path_phases = self.path_phases.clone().unwrap_or_else(|| {
            let mut r = rng::substream(seed, &[tag::PATH_PHASE]);
            (0..=self.sp_positions.len())
                .map(|_| r.random_range(0.0..std::f64::consts::TAU))
                .collect()
        });
        PathSet {
            ue_position: self.ue_position,
            sp_positions: self.sp_positions.clone(),
            rcs: self.rcs.clone(),
            path_phases,
            clock_offset_m: self.clock_offset_m,
        }
    }

    pub fn path_set(&self) -> PathSet {
        self.path_set_with_seed(self.config.rng_seed)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        text.parse()
    }

    /// Serializes to the `key = value` format accepted by [`FromStr`].
    pub fn to_kv_string(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "carrier_frequency_hz = {}", c.carrier_frequency_hz);
        let _ = writeln!(s, "bandwidth_hz = {}", c.bandwidth_hz);
        let _ = writeln!(s, "num_subcarriers = {}", c.num_subcarriers);
        let _ = writeln!(s, "num_antennas = {}", c.num_antennas);
        let _ = writeln!(s, "num_subarrays = {}", c.num_subarrays);
        let _ = writeln!(s, "num_transmissions = {}", c.num_transmissions);
        let _ = writeln!(s, "transmit_power_dbm = {}", c.transmit_power_dbm);
        let _ = writeln!(s, "noise_psd_dbm_per_hz = {}", c.noise_psd_dbm_per_hz);
        let _ = writeln!(s, "noise_figure_db = {}", c.noise_figure_db);
        let _ = writeln!(s, "rng_seed = {}", c.rng_seed);
        let _ = writeln!(s, "ue_position = {}, {}", self.ue_position.x, self.ue_position.y);
        let sps: Vec<String> = self.sp_positions.iter().map(|p| format!("{}, {}", p.x, p.y)).collect();
        let _ = writeln!(s, "sp_positions = {}", if sps.is_empty() { "none".into() } else { sps.join("; ") });
        let rcs: Vec<String> = self.rcs.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "rcs_m2 = {}", rcs.join(", "));
        let _ = writeln!(s, "clock_offset_m = {}", self.clock_offset_m);
        if let Some(ph) = &self.path_phases {
            let ph: Vec<String> = ph.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "path_phases = {}", ph.join(", "));
        }
        s
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    let v = v.trim();
    if v.is_empty() || v.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| parse_num(key, x)).collect()
}

fn parse_point(key: &str, v: &str) -> Result<Point> {
    match parse_list(key, v)?.as_slice() {
        [x, y] => Ok(pt(*x, *y)),
        _ => Err(Error::Config(format!("{key} needs two coordinates, got {v:?}"))),
    }
}

impl FromStr for Scenario {
    type Err = Error;

    /// Parses one `key = value` pair per line; `#` starts a comment. Keys
    /// that are absent keep their default value.
    fn from_str(text: &str) -> Result<Self> {
        let mut sc = Scenario::default();
        let mut rcs_given = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            let c = &mut sc.config;
            match key {
                "carrier_frequency_hz" => c.carrier_frequency_hz = parse_num(key, value)?,
                "bandwidth_hz" => c.bandwidth_hz = parse_num(key, value)?,
                "num_subcarriers" => c.num_subcarriers = parse_num(key, value)?,
                "num_antennas" => c.num_antennas = parse_num(key, value)?,
                "num_subarrays" => c.num_subarrays = parse_num(key, value)?,
                "num_transmissions" => c.num_transmissions = parse_num(key, value)?,
                "transmit_power_dbm" => c.transmit_power_dbm = parse_num(key, value)?,
                "noise_psd_dbm_per_hz" => c.noise_psd_dbm_per_hz = parse_num(key, value)?,
                "noise_figure_db" => c.noise_figure_db = parse_num(key, value)?,
                "rng_seed" => c.rng_seed = parse_num(key, value)?,
                "ue_position" => sc.ue_position = parse_point(key, value)?,
                "sp_positions" => {
                    let v = value.trim();
                    sc.sp_positions = if v.is_empty() || v.eq_ignore_ascii_case("none") {
                        Vec::new()
                    } else {
                        v.split(';').map(|p| parse_point(key, p)).collect::<Result<_>>()?
                    };
                }
                "rcs_m2" => {
                    sc.rcs = parse_list(key, value)?;
                    rcs_given = true;
                }
                "clock_offset_m" => sc.clock_offset_m = parse_num(key, value)?,
                "path_phases" => sc.path_phases = Some(parse_list(key, value)?),
                other => return Err(Error::Config(format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }
        if !rcs_given {
            let fill = sc.rcs.first().copied().unwrap_or(0.5);
            sc.rcs = vec![fill; sc.sp_positions.len()];
        }
        sc.config.validate()?;
        if sc.rcs.len() != sc.sp_positions.len() {
            return Err(Error::Config(format!(
                "{} rcs values for {} scatter points",
                sc.rcs.len(),
                sc.sp_positions.len()
            )));
        }
        Ok(sc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_aperture_and_subarrays() {
        let cfg = ScenarioConfig::default();
        let lambda = cfg.carrier_wavelength();
        assert_relative_eq!(lambda, 0.010707, epsilon = 1e-6);
        assert_relative_eq!(cfg.aperture_m(), 99.0 * lambda / 2.0, epsilon = 1e-12);
        assert!((cfg.aperture_m() - 0.530).abs() < 1e-3);
        let layout = build_array(&cfg).unwrap();
        assert_eq!(layout.subarray_ranges[0], 0..25);
        assert_eq!(layout.num_subarrays(), 4);
        // centers are the mean antenna position
        let c0 = layout.subarray_centers[0];
        assert_relative_eq!(c0.y, (layout.antenna_positions[0].y + layout.antenna_positions[24].y) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn two_element_array() {
        let cfg = ScenarioConfig { num_antennas: 2, num_subarrays: 1, ..Default::default() };
        let layout = build_array(&cfg).unwrap();
        let q = cfg.carrier_wavelength() / 4.0;
        assert_relative_eq!(layout.antenna_positions[0].y, -q, epsilon = 1e-15);
        assert_relative_eq!(layout.antenna_positions[1].y, q, epsilon = 1e-15);
        assert_eq!(layout.array_center, pt(0.0, 0.0));
    }

    #[test]
    fn indivisible_subarrays_rejected() {
        let cfg = ScenarioConfig { num_antennas: 10, num_subarrays: 3, ..Default::default() };
        assert!(matches!(build_array(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn array_is_antisymmetric_and_partitioned() {
        for (n, s) in [(100, 4), (12, 3), (7, 1), (2, 2)] {
            let cfg = ScenarioConfig { num_antennas: n, num_subarrays: s, ..Default::default() };
            let l = build_array(&cfg).unwrap();
            for i in 0..n {
                let sum = l.antenna_positions[i] + l.antenna_positions[n - 1 - i];
                assert!((sum - 2.0 * l.array_center).norm() < 1e-15);
            }
            let mut covered = vec![0u8; n];
            for r in &l.subarray_ranges {
                for i in r.clone() {
                    covered[i] += 1;
                }
            }
            assert!(covered.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn boundaries_reference_config() {
        let (fresnel, fraunhofer) = field_boundaries(&ScenarioConfig::default());
        assert!((fraunhofer - 52.5).abs() < 0.1, "{fraunhofer}");
        assert!((fresnel - 2.31).abs() < 0.01, "{fresnel}");
        let one = ScenarioConfig { num_antennas: 1, num_subarrays: 1, ..Default::default() };
        assert_eq!(field_boundaries(&one), (0.0, 0.0));
    }

    #[test]
    fn boundaries_grow_with_array_size() {
        let mut last = (-1.0, -1.0);
        for n in [2, 4, 16, 64, 100, 256] {
            let cfg = ScenarioConfig { num_antennas: n, num_subarrays: 1, ..Default::default() };
            let b = field_boundaries(&cfg);
            assert!(b.0 > last.0 && b.1 > last.1);
            last = b;
        }
    }

    #[test]
    fn noise_power_levels() {
        let cfg = ScenarioConfig::default();
        let dbm = 10.0 * (noise_variance(&cfg) * 1e3).log10();
        assert!((dbm - (-77.845)).abs() < 0.01, "{dbm}");

        let unit = ScenarioConfig { bandwidth_hz: 1.0, noise_figure_db: 0.0, ..Default::default() };
        assert_relative_eq!(noise_variance(&unit), dbm_to_watts(-173.855), max_relative = 1e-12);

        let double = ScenarioConfig { bandwidth_hz: 400e6, ..Default::default() };
        assert_relative_eq!(noise_variance(&double), 2.0 * noise_variance(&cfg), max_relative = 1e-12);
    }

    #[test]
    fn subcarrier_grid_is_centered() {
        let cfg = ScenarioConfig::default();
        let f = cfg.subcarrier_frequencies();
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        assert_relative_eq!(mean, cfg.carrier_frequency_hz, max_relative = 1e-14);
        assert_relative_eq!(f[1] - f[0], 20e6, max_relative = 1e-9);
        assert_relative_eq!(cfg.delay_ambiguity_m(), 14.9896, epsilon = 1e-3);
    }

    #[test]
    fn scenario_file_roundtrip_and_errors() {
        let sc = Scenario { path_phases: Some(vec![0.1, 0.2]), ..Scenario::reference() };
        let parsed: Scenario = sc.to_kv_string().parse().unwrap();
        assert_eq!(parsed, sc);

        let text = "# comment\nnum_antennas = 64\nnum_subarrays = 4\nue_position = 3, -1\nsp_positions = 2,1; 4,4\nrcs_m2 = 0.5, 1.0\n";
        let parsed: Scenario = text.parse().unwrap();
        assert_eq!(parsed.config.num_antennas, 64);
        assert_eq!(parsed.sp_positions, vec![pt(2.0, 1.0), pt(4.0, 4.0)]);
        assert_eq!(parsed.rcs, vec![0.5, 1.0]);

        assert!("num_antennas = 10\nnum_subarrays = 3".parse::<Scenario>().is_err());
        assert!("bogus = 1".parse::<Scenario>().is_err());
        assert!("ue_position = 1".parse::<Scenario>().is_err());
        assert!("sp_positions = none".parse::<Scenario>().unwrap().sp_positions.is_empty());
    }

    #[test]
    fn path_set_validation() {
        let sc = Scenario::reference();
        let layout = build_array(&sc.config).unwrap();
        let ps = sc.path_set();
        ps.validate(&layout).unwrap();
        assert_eq!(ps.path_phases.len(), 2);
        assert_eq!(ps, sc.path_set());

        let mut on_antenna = ps.clone();
        on_antenna.ue_position = layout.antenna_positions[3];
        assert!(matches!(on_antenna.validate(&layout), Err(Error::Singularity(_))));

        let mut bad_rcs = ps.clone();
        bad_rcs.rcs = vec![-1.0];
        assert!(bad_rcs.validate(&layout).is_err());
    }
}
