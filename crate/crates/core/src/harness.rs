//! Monte-Carlo experiment plans for the four evaluation presets and their
//! long-format result tables.
//!
//! Every trial draws from substreams keyed by `(seed, TRIAL, point, trial)`
//! and results are reduced in trial order, so the table does not depend on
//! the thread count.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;

use crate::blockage::{detect_heuristic, detect_thresholding, detection_accuracy, scan, BlockageCost, HeuristicOptions, MaskHypothesis, ThresholdRule};
use crate::channel::{nf_channel, path_gain, ChannelTensor, Mask};
use crate::error::{Error, Result};
use crate::estimator::{compute_crb, localize, LocalizeOptions, StateVector};
use crate::mismatch::{bias_map, pseudotrue_state, BiasGrid};
use crate::model::SystemModel;
use crate::rng::{derive_seed, substream, tag};
use crate::scenario::{build_array, PathSet, Scenario, ScenarioConfig};
use crate::signal::{make_combiners, synthesize, CombinerKind, ObservationTensor, PilotSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    RmseVsPower,
    BiasMap,
    CostCurve,
    DetectionAccuracy,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::RmseVsPower, Preset::BiasMap, Preset::CostCurve, Preset::DetectionAccuracy];

    pub fn name(self) -> &'static str {
        match self {
            Preset::RmseVsPower => "rmse-vs-power",
            Preset::BiasMap => "bias-map",
            Preset::CostCurve => "cost-curve",
            Preset::DetectionAccuracy => "detection-accuracy",
        }
    }

    /// Short alias (`fig2` … `fig5`).
    pub fn alias(self) -> &'static str {
        match self {
            Preset::RmseVsPower => "fig2",
            Preset::BiasMap => "fig3",
            Preset::CostCurve => "fig4",
            Preset::DetectionAccuracy => "fig5",
        }
    }

    pub fn plan(self, scenario: Scenario) -> ExperimentPlan {
        match self {
            Preset::RmseVsPower => preset_fig2(scenario),
            Preset::BiasMap => preset_fig3(scenario),
            Preset::CostCurve => preset_fig4(scenario),
            Preset::DetectionAccuracy => preset_fig5(scenario),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s || p.alias() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectMethod {
    Thresholding,
    Heuristic,
}

/// One series of a preset. Blocked runs are 1-based and inclusive; for the
/// bias map they index the whole array, otherwise the tested subarray.
#[derive(Debug, Clone, PartialEq)]
pub enum Case {
    Localization,
    Bias { label: String, blocked: (usize, usize) },
    CostCurve { label: String, transmissions: usize, power_dbm: f64, blocked: (usize, usize) },
    Detection { label: String, method: DetectMethod, power_dbm: f64, blocked: (usize, usize), stochastic: bool, biased: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub preset: Preset,
    pub scenario: Scenario,
    pub sweep_name: String,
    pub sweep_values: Vec<f64>,
    pub trials: usize,
    pub cases: Vec<Case>,
    pub grid: BiasGrid,
    pub tested_subarray: usize,
    /// Drop the receiver noise (debugging and exactness checks).
    pub noiseless: bool,
    pub output: Option<PathBuf>,
}

pub const DEFAULT_TRIALS: usize = 100;

fn base_plan(preset: Preset, scenario: Scenario, sweep_name: &str, sweep_values: Vec<f64>, cases: Vec<Case>) -> ExperimentPlan {
    ExperimentPlan {
        preset,
        scenario,
        sweep_name: sweep_name.into(),
        sweep_values,
        trials: DEFAULT_TRIALS,
        cases,
        grid: BiasGrid::reference(),
        tested_subarray: 0,
        noiseless: false,
        output: None,
    }
}

/// Localization RMSE against transmit power, −20…50 dBm in 5 dB steps.
pub fn preset_fig2(scenario: Scenario) -> ExperimentPlan {
    let powers = (0..15).map(|i| -20.0 + 5.0 * i as f64).collect();
    base_plan(Preset::RmseVsPower, scenario, "transmit_power_dbm", powers, vec![Case::Localization])
}

/// Pseudotrue UE over the grid for four blocked runs of the array.
pub fn preset_fig3(scenario: Scenario) -> ExperimentPlan {
    let grid = BiasGrid::reference();
    let nodes = (1..=grid.nodes().len()).map(|i| i as f64).collect();
    let cases = [(100, 100), (96, 100), (76, 80), (56, 60)]
        .into_iter()
        .map(|(a, b)| Case::Bias { label: run_label(a, b), blocked: (a, b) })
        .collect();
    base_plan(Preset::BiasMap, scenario, "grid_node", nodes, cases)
}

/// Averaged blockage cost along the search for three `(G, P)` settings and
/// two blocked runs.
pub fn preset_fig4(scenario: Scenario) -> ExperimentPlan {
    let ns = scenario.config.subarray_size();
    let mut cases = Vec::new();
    for blocked in [(6, 10), (11, 15)] {
        for (g, p) in [(5, 20.0), (20, 20.0), (20, 30.0)] {
            cases.push(Case::CostCurve {
                label: format!("G={g} P={p}dBm {}", run_label(blocked.0, blocked.1)),
                transmissions: g,
                power_dbm: p,
                blocked,
            });
        }
    }
    base_plan(Preset::CostCurve, scenario, "candidate_index", (1..=ns).map(|i| i as f64).collect(), cases)
}

/// Detection accuracy against the number of transmissions, 1…30.
pub fn preset_fig5(scenario: Scenario) -> ExperimentPlan {
    let bench = (5, 10);
    let det = |label: &str, method, power_dbm, blocked, stochastic, biased| Case::Detection {
        label: label.into(),
        method,
        power_dbm,
        blocked,
        stochastic,
        biased,
    };
    let cases = vec![
        det("thresholding", DetectMethod::Thresholding, 20.0, bench, false, false),
        det("heuristic", DetectMethod::Heuristic, 20.0, bench, false, false),
        det("heuristic-low-power", DetectMethod::Heuristic, 0.0, bench, false, false),
        det("heuristic-more-blockage", DetectMethod::Heuristic, 20.0, (5, 15), false, false),
        det("heuristic-non-zero-mask", DetectMethod::Heuristic, 20.0, bench, true, false),
        det("heuristic-biased-pU", DetectMethod::Heuristic, 20.0, bench, false, true),
    ];
    base_plan(Preset::DetectionAccuracy, scenario, "transmissions", (1..=30).map(f64::from).collect(), cases)
}

fn run_label(a: usize, b: usize) -> String {
    if a == b {
        format!("blocked {a}")
    } else {
        format!("blocked {a}-{b}")
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.scenario.config.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.sweep_values.is_empty() {
            return Err(Error::Config("empty sweep".into()));
        }
        if self.sweep_values.iter().any(|v| !v.is_finite()) || self.sweep_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sweep values must be finite and strictly increasing".into()));
        }
        if self.cases.is_empty() {
            return Err(Error::Config("plan has no cases".into()));
        }
        let cfg = &self.scenario.config;
        self.scenario.path_set().validate(&build_array(cfg)?)?;
        if self.tested_subarray >= cfg.num_subarrays {
            return Err(Error::Config(format!("tested subarray {} out of range", self.tested_subarray + 1)));
        }
        let ns = cfg.subarray_size();
        let integral = |v: f64, lo: usize, hi: usize| v.fract() == 0.0 && v >= lo as f64 && v <= hi as f64;
        match self.preset {
            Preset::RmseVsPower => {}
            Preset::BiasMap => {
                let n = self.grid.nodes().len();
                if !self.sweep_values.iter().all(|&v| integral(v, 1, n)) {
                    return Err(Error::Config(format!("grid nodes must be integers in 1..={n}")));
                }
            }
            Preset::CostCurve => {
                if self.sweep_values.len() != ns || !self.sweep_values.iter().all(|&v| integral(v, 1, ns)) {
                    return Err(Error::Config(format!("candidate indices must be 1..={ns}")));
                }
            }
            Preset::DetectionAccuracy => {
                if !self.sweep_values.iter().all(|&v| integral(v, 1, usize::MAX)) {
                    return Err(Error::Config("transmission counts must be positive integers".into()));
                }
            }
        }
        for c in &self.cases {
            let ok = match (self.preset, c) {
                (Preset::RmseVsPower, Case::Localization)
                | (Preset::BiasMap, Case::Bias { .. })
                | (Preset::CostCurve, Case::CostCurve { .. })
                | (Preset::DetectionAccuracy, Case::Detection { .. }) => true,
                _ => false,
            };
            if !ok {
                return Err(Error::Config(format!("case {c:?} does not belong to preset {}", self.preset)));
            }
            let (run, limit) = match c {
                Case::Localization => continue,
                Case::Bias { blocked, .. } => (*blocked, cfg.num_antennas),
                Case::CostCurve { blocked, transmissions, .. } => {
                    if *transmissions == 0 {
                        return Err(Error::Config("cost-curve case needs at least one transmission".into()));
                    }
                    (*blocked, ns)
                }
                Case::Detection { blocked, .. } => (*blocked, ns),
            };
            if run.0 == 0 || run.0 > run.1 || run.1 > limit {
                return Err(Error::Config(format!("blocked run {}-{} outside 1..={limit}", run.0, run.1)));
            }
        }
        Ok(())
    }

    fn sigma2(&self, cfg: &ScenarioConfig) -> f64 {
        if self.noiseless {
            0.0
        } else {
            cfg.noise_variance()
        }
    }

    fn trial_seed(&self, point: usize, trial: usize) -> u64 {
        derive_seed(self.scenario.config.rng_seed, &[tag::TRIAL, point as u64, trial as u64])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub preset: String,
    pub sweep_value: f64,
    pub method: String,
    pub metric: String,
    pub value: f64,
    /// Trials that entered `value`.
    pub trials: usize,
    pub excluded: usize,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub const HEADER: [&'static str; 8] = ["preset", "sweep_value", "method", "metric", "value", "trials", "excluded", "stderr"];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.preset.clone(),
                r.sweep_value.to_string(),
                r.method.clone(),
                r.metric.clone(),
                r.value.to_string(),
                r.trials.to_string(),
                r.excluded.to_string(),
                r.stderr.map(|s| s.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }

    /// Excluded over requested trials, across Monte-Carlo rows.
    pub fn failure_rate(&self) -> f64 {
        let (bad, all) = self.rows.iter().fold((0, 0), |(b, a), r| (b + r.excluded, a + r.trials + r.excluded));
        if all == 0 {
            0.0
        } else {
            bad as f64 / all as f64
        }
    }

    pub fn find(&self, sweep_value: f64, method: &str, metric: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.sweep_value == sweep_value && r.method == method && r.metric == metric)
    }

    /// `value` of every row of `method`/`metric`, in sweep order.
    pub fn series(&self, method: &str, metric: &str) -> Vec<(f64, f64)> {
        self.rows.iter().filter(|r| r.method == method && r.metric == metric).map(|r| (r.sweep_value, r.value)).collect()
    }
}

fn mean_stderr(v: &[f64]) -> (f64, Option<f64>) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, None);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

struct Rows<'a> {
    preset: &'a str,
    out: Vec<ResultRow>,
}

impl Rows<'_> {
    fn push(&mut self, sweep_value: f64, method: &str, metric: &str, value: f64, trials: usize, excluded: usize, stderr: Option<f64>) {
        self.out.push(ResultRow {
            preset: self.preset.into(),
            sweep_value,
            method: method.into(),
            metric: metric.into(),
            value,
            trials,
            excluded,
            stderr,
        });
    }

    /// Mean of the samples with its standard error; `None` samples are
    /// excluded, and a point with no samples left is reported as NaN.
    fn mean(&mut self, sweep_value: f64, method: &str, metric: &str, samples: &[Option<f64>]) {
        let ok: Vec<f64> = samples.iter().flatten().copied().collect();
        if ok.is_empty() {
            self.push(sweep_value, method, metric, f64::NAN, 0, samples.len(), None);
            return;
        }
        let (m, se) = mean_stderr(&ok);
        self.push(sweep_value, method, metric, m, ok.len(), samples.len() - ok.len(), se);
    }

    /// RMSE from squared errors, standard error by the delta method.
    fn rmse(&mut self, sweep_value: f64, method: &str, sq: &[Option<f64>]) {
        let ok: Vec<f64> = sq.iter().flatten().copied().collect();
        if ok.is_empty() {
            self.push(sweep_value, method, "rmse", f64::NAN, 0, sq.len(), None);
            return;
        }
        let (mse, se) = mean_stderr(&ok);
        let rmse = mse.sqrt();
        let se = se.map(|s| if rmse > 0.0 { s / (2.0 * rmse) } else { 0.0 });
        self.push(sweep_value, method, "rmse", rmse, ok.len(), sq.len() - ok.len(), se);
    }
}

/// One synthesized trial.
#[derive(Debug, Clone)]
pub struct Realization {
    pub model: SystemModel,
    pub truth: StateVector,
    pub masks: Vec<Mask>,
    pub channel: ChannelTensor,
    pub observations: ObservationTensor,
}

/// Path gains from the geometry, channel through `masks`, and observations
/// with noise drawn from `noise_seed`.
pub fn realize(
    cfg: &ScenarioConfig,
    paths: &PathSet,
    kind: CombinerKind,
    combiner_seed: u64,
    masks: Vec<Mask>,
    sigma2: f64,
    noise_seed: u64,
) -> Result<Realization> {
    let layout = build_array(cfg)?;
    let combiners = make_combiners(cfg, kind, combiner_seed);
    let gains = (0..paths.num_paths()).map(|l| path_gain(l, paths, &layout, cfg)).collect::<Result<Vec<_>>>()?;
    let channel = nf_channel(paths, &masks, &layout, cfg)?;
    let observations = synthesize(&channel, &combiners, &PilotSchedule::constant(cfg), sigma2, noise_seed)?;
    let model = SystemModel::new(cfg, combiners)?;
    Ok(Realization { model, truth: StateVector::from_paths(paths).with_gains(gains), masks, channel, observations })
}

fn los_masks(n: usize, los: Mask, num_sps: usize) -> Vec<Mask> {
    let mut m = vec![los];
    m.extend((0..num_sps).map(|_| Mask::ones(n)));
    m
}

fn subarray_run(cfg: &ScenarioConfig, blocked: (usize, usize)) -> MaskHypothesis {
    MaskHypothesis::run(cfg.subarray_size(), blocked.0, blocked.1)
}

/// Realization of the first trial at the first sweep point of the first
/// case, for channel and observation dumps.
pub fn sample_realization(plan: &ExperimentPlan) -> Result<Realization> {
    plan.validate()?;
    let sc = &plan.scenario;
    let paths = sc.path_set();
    let seed = plan.trial_seed(0, 0);
    let n = sc.config.num_antennas;
    let l = paths.num_sps();
    match &plan.cases[0] {
        Case::Localization => {
            let cfg = sc.config.with_power_dbm(plan.sweep_values[0]);
            realize(&cfg, &paths, CombinerKind::RandomPhase, sc.config.rng_seed, los_masks(n, Mask::ones(n), l), plan.sigma2(&cfg), seed)
        }
        Case::Bias { blocked, .. } => {
            let cfg = sc.config.clone();
            let los = Mask::blocked(n, blocked.0 - 1..blocked.1);
            realize(&cfg, &paths, CombinerKind::RandomPhase, sc.config.rng_seed, los_masks(n, los, l), plan.sigma2(&cfg), seed)
        }
        Case::CostCurve { transmissions, power_dbm, blocked, .. } => {
            let cfg = sc.config.with_transmissions(*transmissions).with_power_dbm(*power_dbm);
            let los = subarray_run(&cfg, *blocked).to_mask(n, plan.tested_subarray);
            realize(&cfg, &paths, CombinerKind::RandomPhase, seed, los_masks(n, los, l), plan.sigma2(&cfg), seed)
        }
        Case::Detection { .. } => {
            let g = plan.sweep_values[0] as usize;
            detection_realization(plan, &plan.cases[0], g, seed)
        }
    }
}

/// Runs every case of the plan.
pub fn run_monte_carlo(plan: &ExperimentPlan) -> Result<ResultTable> {
    plan.validate()?;
    let mut rows = Rows { preset: plan.preset.name(), out: Vec::new() };
    match plan.preset {
        Preset::RmseVsPower => run_fig2(plan, &mut rows)?,
        Preset::BiasMap => run_fig3(plan, &mut rows)?,
        Preset::CostCurve => run_fig4(plan, &mut rows)?,
        Preset::DetectionAccuracy => run_fig5(plan, &mut rows)?,
    }
    Ok(ResultTable { rows: rows.out })
}

pub const FIG2_SERIES: [&str; 7] = ["p_U-SA", "p_U-Coarse", "p_S-Coarse", "p_U-Fine", "p_S-Fine", "p_U-CRB", "p_S-CRB"];

fn run_fig2(plan: &ExperimentPlan, rows: &mut Rows) -> Result<()> {
    let sc = &plan.scenario;
    let paths = sc.path_set();
    let n = sc.config.num_antennas;
    let l = paths.num_sps();
    for (i, &p) in plan.sweep_values.iter().enumerate() {
        let cfg = sc.config.with_power_dbm(p);
        let sigma2 = plan.sigma2(&cfg);
        let trials: Vec<Option<[Option<f64>; 5]>> = (0..plan.trials)
            .into_par_iter()
            .map(|t| {
                let r = realize(&cfg, &paths, CombinerKind::RandomPhase, sc.config.rng_seed, los_masks(n, Mask::ones(n), l), sigma2, plan.trial_seed(i, t)).ok()?;
                let est = localize(&r.observations, &r.model, l, &LocalizeOptions::default()).ok()?;
                let ue = |s: &StateVector| Some((s.ue_position - paths.ue_position).norm_squared());
                let sp = |s: &StateVector| s.sp_positions.first().map(|q| (q - paths.sp_positions[0]).norm_squared());
                let fine_sp = if est.converged { sp(&est.refined) } else { None };
                Some([ue(&est.sa_state), ue(&est.coarse), sp(&est.coarse), ue(&est.refined), fine_sp])
            })
            .collect();
        for (j, name) in FIG2_SERIES[..5].iter().enumerate() {
            let sq: Vec<Option<f64>> = trials.iter().map(|t| t.and_then(|v| v[j])).collect();
            rows.rmse(p, name, &sq);
        }
        let r = realize(&cfg, &paths, CombinerKind::RandomPhase, sc.config.rng_seed, los_masks(n, Mask::ones(n), l), 0.0, 0)?;
        let crb = compute_crb(&r.truth, &r.model, cfg.noise_variance())?;
        rows.push(p, FIG2_SERIES[5], "peb", crb.ue_peb, 1, 0, None);
        if let Some(&s) = crb.sp_peb.first() {
            rows.push(p, FIG2_SERIES[6], "peb", s, 1, 0, None);
        }
    }
    Ok(())
}

fn run_fig3(plan: &ExperimentPlan, rows: &mut Rows) -> Result<()> {
    let sc = &plan.scenario;
    let cfg = &sc.config;
    let model = SystemModel::new(cfg, make_combiners(cfg, CombinerKind::RandomPhase, cfg.rng_seed))?;
    let base = PathSet { sp_positions: vec![], rcs: vec![], path_phases: vec![0.0], ..sc.path_set() };
    let nodes = plan.grid.nodes();
    let selected: Vec<usize> = plan.sweep_values.iter().map(|v| *v as usize - 1).collect();
    for (c, case) in plan.cases.iter().enumerate() {
        let Case::Bias { label, blocked } = case else { unreachable!("validated") };
        let mask = Mask::blocked(cfg.num_antennas, blocked.0 - 1..blocked.1);
        let all = bias_map(&plan.grid, std::slice::from_ref(&mask), &model, &base, derive_seed(cfg.rng_seed, &[tag::RESTART, c as u64]));
        let mut norms = Vec::new();
        let mut failed = 0;
        for &k in &selected {
            let node = &all[k];
            let v = (k + 1) as f64;
            let bad = usize::from(node.error.is_some());
            failed += bad;
            let (xp, yp) = node.pseudo_position.map_or((f64::NAN, f64::NAN), |p| (p.x, p.y));
            for (metric, value) in
                [("x_true", nodes[k].x), ("y_true", nodes[k].y), ("x_pseudo", xp), ("y_pseudo", yp), ("bias_norm", node.bias_norm)]
            {
                rows.push(v, label, metric, value, 1 - bad, bad, None);
            }
            if bad == 0 {
                norms.push(node.bias_norm);
            }
        }
        if !norms.is_empty() {
            let (mean, se) = mean_stderr(&norms);
            rows.push(0.0, label, "grid_mean_bias_norm", mean, norms.len(), failed, se);
            rows.push(0.0, label, "grid_max_bias_norm", norms.iter().cloned().fold(0.0, f64::max), norms.len(), failed, None);
        }
    }
    Ok(())
}

fn run_fig4(plan: &ExperimentPlan, rows: &mut Rows) -> Result<()> {
    let sc = &plan.scenario;
    let paths = sc.path_set();
    let n = sc.config.num_antennas;
    let l = paths.num_sps();
    for (c, case) in plan.cases.iter().enumerate() {
        let Case::CostCurve { label, transmissions, power_dbm, blocked } = case else { unreachable!("validated") };
        let cfg = sc.config.with_transmissions(*transmissions).with_power_dbm(*power_dbm);
        let sigma2 = plan.sigma2(&cfg);
        let los = subarray_run(&cfg, *blocked).to_mask(n, plan.tested_subarray);
        let curves: Vec<Option<(Vec<f64>, Vec<f64>)>> = (0..plan.trials)
            .into_par_iter()
            .map(|t| {
                let seed = plan.trial_seed(c, t);
                let r = realize(&cfg, &paths, CombinerKind::RandomPhase, seed, los_masks(n, los.clone(), l), sigma2, seed).ok()?;
                let cost = BlockageCost::new(&r.observations, &r.truth, &r.model, plan.tested_subarray).ok()?;
                let s = scan(&cost, true);
                Some((s.curve, s.single[1..].to_vec()))
            })
            .collect();
        for (idx, &v) in plan.sweep_values.iter().enumerate() {
            let scan_c: Vec<Option<f64>> = curves.iter().map(|o| o.as_ref().map(|c| c.0[idx])).collect();
            let single: Vec<Option<f64>> = curves.iter().map(|o| o.as_ref().map(|c| c.1[idx])).collect();
            rows.mean(v, label, "scan_cost", &scan_c);
            rows.mean(v, label, "single_cost", &single);
        }
    }
    Ok(())
}

fn detection_realization(plan: &ExperimentPlan, case: &Case, g: usize, seed: u64) -> Result<Realization> {
    let Case::Detection { method, power_dbm, blocked, stochastic, .. } = case else {
        return Err(Error::Config("not a detection case".into()));
    };
    let sc = &plan.scenario;
    let cfg = sc.config.with_transmissions(g).with_power_dbm(*power_dbm);
    let n = cfg.num_antennas;
    let off = plan.tested_subarray * cfg.subarray_size();
    let range = off + blocked.0 - 1..off + blocked.1;
    let los = if *stochastic { Mask::stochastic(n, range, &mut substream(seed, &[tag::MASK])) } else { Mask::blocked(n, range) };
    let kind = match method {
        DetectMethod::Thresholding => CombinerKind::ShuffledDft,
        DetectMethod::Heuristic => CombinerKind::RandomPhase,
    };
    let paths = sc.path_set();
    let l = paths.num_sps();
    realize(&cfg, &paths, kind, seed, los_masks(n, los, l), plan.sigma2(&cfg), seed)
}

/// Pseudotrue state for the benchmark run with the scenario's combiners at
/// its configured number of transmissions.
pub fn benchmark_pseudotrue(plan: &ExperimentPlan, blocked: (usize, usize)) -> Result<StateVector> {
    let sc = &plan.scenario;
    let cfg = &sc.config;
    let n = cfg.num_antennas;
    let paths = sc.path_set();
    let los = subarray_run(cfg, blocked).to_mask(n, plan.tested_subarray);
    let r = realize(cfg, &paths, CombinerKind::RandomPhase, cfg.rng_seed, los_masks(n, los, paths.num_sps()), 0.0, 0)?;
    let rep = pseudotrue_state(&r.truth, &r.masks, &r.model, cfg.noise_variance(), cfg.rng_seed)?;
    Ok(StateVector { gains: None, ..rep.pseudotrue_state })
}

fn run_fig5(plan: &ExperimentPlan, rows: &mut Rows) -> Result<()> {
    let ns = plan.scenario.config.subarray_size();
    let mut biased_state = None;
    for case in &plan.cases {
        if let Case::Detection { biased: true, blocked, .. } = case {
            biased_state = Some(benchmark_pseudotrue(plan, *blocked)?);
        }
    }
    for (i, &v) in plan.sweep_values.iter().enumerate() {
        let g = v as usize;
        for case in &plan.cases {
            let Case::Detection { label, method, blocked, biased, .. } = case else { unreachable!("validated") };
            let truth = MaskHypothesis::run(ns, blocked.0, blocked.1).to_vec();
            let acc: Vec<Option<f64>> = (0..plan.trials)
                .into_par_iter()
                .map(|t| {
                    let r = detection_realization(plan, case, g, plan.trial_seed(i, t)).ok()?;
                    let det = match method {
                        DetectMethod::Thresholding => {
                            detect_thresholding(&r.observations, &r.model, plan.tested_subarray, &ThresholdRule::default())
                        }
                        DetectMethod::Heuristic => {
                            let st = if *biased { biased_state.clone().expect("computed above") } else { r.truth.clone() };
                            detect_heuristic(&r.observations, &st, &r.model, plan.tested_subarray, HeuristicOptions::default())
                        }
                    }
                    .ok()?;
                    detection_accuracy(&det.estimate, &truth, ns).ok()
                })
                .collect();
            rows.mean(v, label, "accuracy", &acc);
        }
    }
    Ok(())
}
