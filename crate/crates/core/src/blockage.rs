//! Partial LOS blockage detection on one subarray.
//!
//! Hypotheses are binary vectors over the `N_S` antennas under test with a
//! single contiguous run of zeros. Indices in [`MaskHypothesis`] are 1-based
//! to match the usual antenna numbering; index 0 means "no blockage".

use std::io::Write;

use nalgebra::DMatrix;

use crate::channel::Mask;
use crate::error::{check_len, Error, Result};
use crate::estimator::{full_mle_masked, StateVector};
use crate::linalg::least_squares;
use crate::model::SystemModel;
use crate::signal::ObservationTensor;
use crate::C64;

/// All-ones or zeros exactly on `first..=last` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MaskHypothesis {
    pub len: usize,
    pub run: Option<(usize, usize)>,
}

impl MaskHypothesis {
    pub fn all_ones(len: usize) -> Self {
        Self { len, run: None }
    }

    /// `m_<i:j>`; `m_<0:_>` is all-ones.
    pub fn run(len: usize, first: usize, last: usize) -> Self {
        if first == 0 {
            return Self::all_ones(len);
        }
        assert!(first <= last && last <= len, "run {first}..={last} outside 1..={len}");
        Self { len, run: Some((first, last)) }
    }

    /// `m_<i>`.
    pub fn single(len: usize, i: usize) -> Self {
        Self::run(len, i, i)
    }

    pub fn num_blocked(&self) -> usize {
        self.run.map_or(0, |(a, b)| b - a + 1)
    }

    pub fn is_blocked(&self, n: usize) -> bool {
        self.run.is_some_and(|(a, b)| (a - 1..b).contains(&n))
    }

    /// 0/1 entries, 0-based.
    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.len).map(|n| if self.is_blocked(n) { 0.0 } else { 1.0 }).collect()
    }

    /// Full-array mask with this hypothesis on `subarray`.
    pub fn to_mask(&self, num_antennas: usize, subarray: usize) -> Mask {
        match self.run {
            None => Mask::ones(num_antennas),
            Some((a, b)) => {
                let off = subarray * self.len;
                Mask::blocked(num_antennas, off + a - 1..off + b)
            }
        }
    }
}

/// `J(ŝ, m) = ‖y_s − Ỹ_s(ŝ, m) ĝ‖` on one subarray block, with the LOS column
/// masked antenna-wise before combining and the scatter columns unmasked.
#[derive(Debug, Clone)]
pub struct BlockageCost {
    subarray_size: usize,
    /// `los[n][g * K + k]`: LOS contribution of antenna `n` of the subarray.
    los: Vec<Vec<C64>>,
    nlos: Vec<Vec<C64>>,
    y: Vec<C64>,
}

impl BlockageCost {
    pub fn new(y: &ObservationTensor, state: &StateVector, model: &SystemModel, subarray: usize) -> Result<Self> {
        model.check_observation(y)?;
        if subarray >= model.num_subarrays() {
            return Err(Error::Config(format!("subarray {subarray} out of range")));
        }
        let ns = model.subarray_size();
        let n = model.layout.num_antennas();
        let e0 = model.element_response(&state.ue_position, model.path_length(0, state));
        let los = (0..ns)
            .map(|i| {
                let mut only = vec![C64::new(0.0, 0.0); n];
                only[subarray * ns + i] = C64::new(1.0, 0.0);
                model.combine_block(&e0, subarray, Some(&only))
            })
            .collect();
        let nlos = (1..=state.num_sps())
            .map(|l| {
                let e = model.element_response(&state.source(l), model.path_length(l, state));
                model.combine_block(&e, subarray, None)
            })
            .collect();
        Ok(Self { subarray_size: ns, los, nlos, y: y.block(subarray).to_vec() })
    }

    pub fn subarray_size(&self) -> usize {
        self.subarray_size
    }

    /// Cost for arbitrary per-antenna coefficients.
    pub fn eval_coefficients(&self, m: &[C64]) -> Result<f64> {
        check_len("mask hypothesis", self.subarray_size, m.len())?;
        let mut v0 = vec![C64::new(0.0, 0.0); self.y.len()];
        for (col, c) in self.los.iter().zip(m) {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            for (a, b) in v0.iter_mut().zip(col) {
                *a += c * b;
            }
        }
        let mut cols = Vec::with_capacity(1 + self.nlos.len());
        cols.push(v0);
        cols.extend(self.nlos.iter().cloned());
        Ok(least_squares(&cols, &self.y).residual_sq.max(0.0).sqrt())
    }

    pub fn eval(&self, m: &MaskHypothesis) -> f64 {
        let c: Vec<C64> = m.to_vec().into_iter().map(|v| C64::new(v, 0.0)).collect();
        self.eval_coefficients(&c).expect("hypothesis length checked at construction")
    }
}

pub fn blockage_cost(
    y: &ObservationTensor,
    state: &StateVector,
    mask: &MaskHypothesis,
    model: &SystemModel,
    subarray: usize,
) -> Result<f64> {
    let c = BlockageCost::new(y, state, model, subarray)?;
    check_len("mask hypothesis", c.subarray_size, mask.len)?;
    Ok(c.eval(mask))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// 0/1 per antenna under test.
    pub estimate: Vec<f64>,
    /// `(i_L, i_R)`, 1-based, when a contiguous run was declared.
    pub boundaries: Option<(usize, usize)>,
    /// Evaluated `(candidate, J)` pairs in evaluation order.
    pub trace: Vec<(MaskHypothesis, f64)>,
    pub cost: f64,
    pub accuracy: Option<f64>,
}

impl DetectionResult {
    fn from_hypothesis(m: MaskHypothesis, cost: f64, trace: Vec<(MaskHypothesis, f64)>) -> Self {
        Self { estimate: m.to_vec(), boundaries: m.run, trace, cost, accuracy: None }
    }

    pub fn hypothesis(&self) -> Option<MaskHypothesis> {
        let len = self.estimate.len();
        match self.boundaries {
            Some((a, b)) => Some(MaskHypothesis::run(len, a, b)),
            None if self.estimate.iter().all(|&v| v == 1.0) => Some(MaskHypothesis::all_ones(len)),
            None => None,
        }
    }

    pub fn with_truth(mut self, truth: &[f64]) -> Result<Self> {
        self.accuracy = Some(detection_accuracy(&self.estimate, truth, truth.len())?);
        Ok(self)
    }
}

/// Intermediate costs of the contiguous search.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanTrace {
    /// `single[i] = J(m_<i>)` for `i = 0..=N_S`.
    pub single: Vec<f64>,
    pub center: usize,
    /// Cost seen at each antenna index along the search, length `N_S`: the
    /// leftward candidates `J(m_<i:i_C>)` for `i < i_C`, `J(m_<i_C>)` at
    /// `i_C`, then the rightward candidates `J(m_<i_L:i>)` for `i > i_C`.
    pub curve: Vec<f64>,
    pub left: usize,
    pub right: usize,
}

fn argmin_by_key<I: IntoIterator<Item = (usize, f64, usize)>>(it: I) -> (usize, f64) {
    // (index, cost, zeros): ties go to fewer zeros, then first seen.
    let mut best: Option<(usize, f64, usize)> = None;
    for c in it {
        best = match best {
            Some(b) if c.1 > b.1 || (c.1 == b.1 && c.2 >= b.2) => Some(b),
            _ => Some(c),
        };
    }
    let b = best.expect("non-empty candidate set");
    (b.0, b.1)
}

/// Single-blocked sweep plus the leftward and rightward scans around the
/// best single candidate. With `force_center` the center is the best
/// non-empty single candidate even when all-ones scores lower.
pub fn scan(cost: &BlockageCost, force_center: bool) -> ScanTrace {
    let ns = cost.subarray_size;
    let single: Vec<f64> = (0..=ns).map(|i| cost.eval(&MaskHypothesis::single(ns, i))).collect();
    let first = usize::from(force_center);
    let (center, _) = argmin_by_key((first..=ns).map(|i| (i, single[i], usize::from(i > 0))));
    let mut curve = vec![f64::NAN; ns];
    if center == 0 {
        return ScanTrace { single, center, curve, left: 0, right: 0 };
    }
    let left_costs: Vec<(usize, f64)> =
        (1..=center).map(|i| (i, if i == center { single[center] } else { cost.eval(&MaskHypothesis::run(ns, i, center)) })).collect();
    let (left, left_cost) = argmin_by_key(left_costs.iter().map(|&(i, c)| (i, c, center - i + 1)));
    let right_costs: Vec<(usize, f64)> = (center..=ns)
        .map(|i| (i, if i == center { left_cost } else { cost.eval(&MaskHypothesis::run(ns, left, i)) }))
        .collect();
    let (right, _) = argmin_by_key(right_costs.iter().map(|&(i, c)| (i, c, i - left + 1)));
    for &(i, c) in &left_costs {
        curve[i - 1] = c;
    }
    curve[center - 1] = single[center];
    for &(i, c) in &right_costs[1..] {
        curve[i - 1] = c;
    }
    ScanTrace { single, center, curve, left, right }
}

fn heuristic_once(cost: &BlockageCost) -> DetectionResult {
    let ns = cost.subarray_size;
    let t = scan(cost, false);
    let mut trace: Vec<(MaskHypothesis, f64)> =
        t.single.iter().enumerate().map(|(i, &c)| (MaskHypothesis::single(ns, i), c)).collect();
    if t.center == 0 {
        return DetectionResult::from_hypothesis(MaskHypothesis::all_ones(ns), t.single[0], trace);
    }
    for i in 1..t.center {
        trace.push((MaskHypothesis::run(ns, i, t.center), t.curve[i - 1]));
    }
    for i in t.center + 1..=ns {
        trace.push((MaskHypothesis::run(ns, t.left, i), t.curve[i - 1]));
    }
    let m = MaskHypothesis::run(ns, t.left, t.right);
    DetectionResult::from_hypothesis(m, cost.eval(&m), trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HeuristicOptions {
    /// Re-solve the joint MLE under the detected mask, then detect once more.
    pub refine: bool,
}

/// Contiguous-run search: best single blocked antenna, then leftward and
/// rightward extension by full-range argmin.
pub fn detect_heuristic(
    y: &ObservationTensor,
    state: &StateVector,
    model: &SystemModel,
    subarray: usize,
    opts: HeuristicOptions,
) -> Result<DetectionResult> {
    let first = heuristic_once(&BlockageCost::new(y, state, model, subarray)?);
    if !opts.refine {
        return Ok(first);
    }
    let Some(h) = first.hypothesis() else { return Ok(first) };
    let n = model.layout.num_antennas();
    let mut masks = vec![h.to_mask(n, subarray)];
    masks.extend((0..state.num_sps()).map(|_| Mask::ones(n)));
    let fit = full_mle_masked(y, model, state, &masks)?;
    Ok(heuristic_once(&BlockageCost::new(y, &fit.state, model, subarray)?))
}

/// Every contiguous run plus all-ones; global minimizer of `J`.
pub fn detect_exhaustive_oracle(
    y: &ObservationTensor,
    state: &StateVector,
    model: &SystemModel,
    subarray: usize,
) -> Result<DetectionResult> {
    let cost = BlockageCost::new(y, state, model, subarray)?;
    let ns = cost.subarray_size;
    let mut trace = vec![(MaskHypothesis::all_ones(ns), cost.eval(&MaskHypothesis::all_ones(ns)))];
    for i in 1..=ns {
        for j in i..=ns {
            let m = MaskHypothesis::run(ns, i, j);
            trace.push((m, cost.eval(&m)));
        }
    }
    let (best, c) = argmin_by_key(trace.iter().enumerate().map(|(k, (m, c))| (k, *c, m.num_blocked())));
    Ok(DetectionResult::from_hypothesis(trace[best].0, c, trace))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdRule {
    /// Blocked when the statistic is below `fraction` × its median over the subarray.
    MedianRelative { fraction: f64 },
    /// Blocked when the statistic is below `fraction` × the given unblocked
    /// amplitude of each antenna.
    ModelAmplitude { amplitudes: Vec<f64>, fraction: f64 },
}

impl Default for ThresholdRule {
    fn default() -> Self {
        Self::MedianRelative { fraction: 0.5 }
    }
}

/// Unblocked LOS amplitude `|α_0| · mean_k |e_k,n|` of each antenna of `subarray`.
pub fn model_amplitudes(state: &StateVector, model: &SystemModel, subarray: usize) -> Result<Vec<f64>> {
    let g = state
        .gains
        .as_ref()
        .and_then(|g| g.first())
        .ok_or_else(|| Error::Config("model amplitudes need the LOS gain".into()))?;
    let e = model.element_response(&state.ue_position, model.path_length(0, state));
    let (n, k_n, ns) = (model.layout.num_antennas(), model.num_subcarriers(), model.subarray_size());
    Ok((0..ns)
        .map(|i| g.norm() * (0..k_n).map(|k| e[k * n + subarray * ns + i].norm()).sum::<f64>() / k_n as f64)
        .collect())
}

/// Per-antenna statistic `mean_k |ĥ_k,n|` with `ĥ_k = pinv(W̃) ỹ_k`.
pub fn element_statistic(y: &ObservationTensor, model: &SystemModel, subarray: usize) -> Result<Vec<f64>> {
    model.check_observation(y)?;
    let w = model.combiners.stacked(subarray);
    if w.iter().all(|v| v.norm_sqr() == 0.0) {
        return Err(Error::Degenerate("stacked combiner is zero".into()));
    }
    let (g_n, k_n) = (model.num_transmissions(), model.num_subcarriers());
    let pinv = w.pseudo_inverse(1e-9).map_err(|e| Error::Degenerate(e.to_string()))?;
    let yt = DMatrix::from_fn(g_n, k_n, |g, k| y.get(subarray, g, k) / model.pilots.x(g, k));
    let h = pinv * yt;
    Ok((0..h.nrows()).map(|n| h.row(n).iter().map(|v| v.norm()).sum::<f64>() / k_n as f64).collect())
}

/// Element-space recovery through the pseudoinverse of the stacked
/// combiners, then per-antenna thresholding.
pub fn detect_thresholding(
    y: &ObservationTensor,
    model: &SystemModel,
    subarray: usize,
    rule: &ThresholdRule,
) -> Result<DetectionResult> {
    let stat = element_statistic(y, model, subarray)?;
    let thresholds: Vec<f64> = match rule {
        ThresholdRule::MedianRelative { fraction } => {
            let mut s = stat.clone();
            s.sort_by(f64::total_cmp);
            let mid = s.len() / 2;
            let median = if s.len() % 2 == 1 { s[mid] } else { 0.5 * (s[mid - 1] + s[mid]) };
            vec![fraction * median; stat.len()]
        }
        ThresholdRule::ModelAmplitude { amplitudes, fraction } => {
            check_len("model amplitudes", stat.len(), amplitudes.len())?;
            amplitudes.iter().map(|a| fraction * a).collect()
        }
    };
    let estimate: Vec<f64> = stat.iter().zip(&thresholds).map(|(s, t)| if s < t { 0.0 } else { 1.0 }).collect();
    let zeros: Vec<usize> = (0..estimate.len()).filter(|&n| estimate[n] == 0.0).collect();
    let boundaries = match (zeros.first(), zeros.last()) {
        (Some(&a), Some(&b)) if b - a + 1 == zeros.len() => Some((a + 1, b + 1)),
        _ => None,
    };
    Ok(DetectionResult { estimate, boundaries, trace: Vec::new(), cost: f64::NAN, accuracy: None })
}

/// `1 − ‖m̂ − m̄‖² / n_under_test`.
pub fn detection_accuracy(estimate: &[f64], truth: &[f64], n_under_test: usize) -> Result<f64> {
    check_len("mask estimate", truth.len(), estimate.len())?;
    if n_under_test == 0 {
        return Err(Error::Config("no antennas under test".into()));
    }
    let d: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((1.0 - d / n_under_test as f64).clamp(0.0, 1.0))
}

/// Writes `candidate_index,mean_cost` (1-based index).
pub fn write_cost_curve_csv<W: Write>(out: W, curve: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["candidate_index", "mean_cost"])?;
    for (i, c) in curve.iter().enumerate() {
        w.write_record([(i + 1).to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `trial,G,method,accuracy` (1-based trial).
pub fn write_accuracy_csv<'a, W: Write>(out: W, rows: impl IntoIterator<Item = (usize, usize, &'a str, f64)>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "G", "method", "accuracy"])?;
    for (t, g, m, a) in rows {
        w.write_record([(t + 1).to_string(), g.to_string(), m.to_string(), a.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
