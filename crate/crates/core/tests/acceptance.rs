//! Acceptance criteria of the reproduction. Each test prints one
//! `criterion N: PASS|FAIL` line before asserting.

use std::time::{Duration, Instant};

use nfloc_core::blockage::{detect_exhaustive_oracle, detect_heuristic, HeuristicOptions, MaskHypothesis};
use nfloc_core::channel::Mask;
use nfloc_core::estimator::{compute_crb, localize, LocalizeOptions};
use nfloc_core::harness::{benchmark_pseudotrue, preset_fig2, preset_fig3, preset_fig4, preset_fig5, realize, run_monte_carlo, Case, ResultTable};
use nfloc_core::scenario::field_boundaries;
use nfloc_core::signal::CombinerKind;
use nfloc_core::Scenario;

fn report(id: u32, pass: bool, what: &str, detail: String) {
    println!("criterion {id:>2}: {} | {what} | {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {what} ({detail})");
}

fn crb_at(power_dbm: f64) -> (f64, f64) {
    let sc = Scenario::reference();
    let cfg = sc.config.with_power_dbm(power_dbm);
    let paths = sc.path_set();
    let masks = vec![Mask::ones(cfg.num_antennas); paths.num_paths()];
    let r = realize(&cfg, &paths, CombinerKind::RandomPhase, sc.config.rng_seed, masks, 0.0, 0).unwrap();
    let c = compute_crb(&r.truth, &r.model, cfg.noise_variance()).unwrap();
    (c.ue_peb, c.sp_peb[0])
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn criterion_01_crb_values() {
    let t0 = Instant::now();
    let (ue, sp) = crb_at(0.0);
    let dt = t0.elapsed();
    let pass = rel(ue, 0.2720) <= 0.03 && rel(sp, 0.1488) <= 0.03 && dt < Duration::from_secs(10);
    report(
        1,
        pass,
        "CRB at 0 dBm: UE 0.2720 m, SP 0.1488 m within 3%",
        format!("UE {ue:.4} ({:+.1}%), SP {sp:.4} ({:+.1}%), {dt:.2?}", 100.0 * (ue / 0.272 - 1.0), 100.0 * (sp / 0.1488 - 1.0)),
    );
}

#[test]
fn criterion_02_crb_power_law() {
    let pebs: Vec<(f64, f64)> = [-20.0, 0.0, 20.0, 40.0].iter().map(|&p| crb_at(p)).collect();
    let worst = pebs
        .windows(2)
        .flat_map(|w| [rel(w[1].0, 0.1 * w[0].0), rel(w[1].1, 0.1 * w[0].1)])
        .fold(0.0, f64::max);
    report(2, worst <= 1e-6, "PEB(P+20 dB) = 0.1 PEB(P) for P in {-20, 0, 20} dBm", format!("worst relative deviation {worst:.2e}"));
}

fn fig2_high_power() -> ResultTable {
    let mut plan = preset_fig2(Scenario::reference());
    plan.sweep_values = vec![10.0, 20.0, 30.0, 40.0, 50.0];
    run_monte_carlo(&plan).unwrap()
}

fn value(t: &ResultTable, p: f64, method: &str, metric: &str) -> f64 {
    t.find(p, method, metric).map_or(f64::NAN, |r| r.value)
}

#[test]
fn criterion_03_bound_attainment() {
    let t0 = Instant::now();
    let t = fig2_high_power();
    let dt = t0.elapsed();
    let mut pass = dt < Duration::from_secs(15 * 60);
    let mut detail = Vec::new();
    for (p, series, bound) in [
        (10.0, "p_U-Fine", "p_U-CRB"),
        (20.0, "p_U-Fine", "p_U-CRB"),
        (30.0, "p_U-Fine", "p_U-CRB"),
        (30.0, "p_S-Fine", "p_S-CRB"),
        (40.0, "p_S-Fine", "p_S-CRB"),
    ] {
        let ratio = value(&t, p, series, "rmse") / value(&t, p, bound, "peb");
        pass &= (0.8..=2.0).contains(&ratio);
        detail.push(format!("{series}@{p}dBm {ratio:.3}"));
    }
    detail.push(format!("{dt:.1?}"));
    report(3, pass, "fine RMSE / CRB in [0.8, 2.0] over 100 trials", detail.join(", "));
}

#[test]
fn criterion_04_coarse_floor() {
    let mut plan = preset_fig2(Scenario::reference());
    plan.sweep_values = vec![50.0];
    let t = run_monte_carlo(&plan).unwrap();
    let coarse = value(&t, 50.0, "p_U-Coarse", "rmse");
    let crb = value(&t, 50.0, "p_U-CRB", "peb");
    let ratio = coarse / crb;
    report(4, ratio > 2.0, "coarse UE RMSE at 50 dBm exceeds 2x CRB", format!("coarse {coarse:.5} m, CRB {crb:.5} m, ratio {ratio:.2}"));
}

#[test]
fn criterion_05_pseudotrue_point() {
    let plan = preset_fig5(Scenario::reference());
    let s = benchmark_pseudotrue(&plan, (5, 10)).unwrap();
    let p = s.ue_position;
    let pass = (p.x - 2.0691).abs() <= 0.01 && (p.y - 4.1377).abs() <= 0.01;
    report(
        5,
        pass,
        "pseudotrue UE for the benchmark mask = (2.0691, 4.1377) within 0.01 m",
        format!("({:.4}, {:.4}), offsets ({:+.4}, {:+.4})", p.x, p.y, p.x - 2.0691, p.y - 4.1377),
    );
}

#[test]
fn criterion_06_bias_ordering() {
    let t0 = Instant::now();
    let t = run_monte_carlo(&preset_fig3(Scenario::reference())).unwrap();
    let dt = t0.elapsed();
    let mean = |l: &str| value(&t, 0.0, l, "grid_mean_bias_norm");
    let (edge, quarter, middle) = (mean("blocked 96-100"), mean("blocked 76-80"), mean("blocked 56-60"));
    let single_max = value(&t, 0.0, "blocked 100", "grid_max_bias_norm");
    let pass = edge > quarter && quarter > middle && single_max < 0.05 && dt < Duration::from_secs(600);
    report(
        6,
        pass,
        "grid mean bias {96-100} > {76-80} > {56-60} and max bias of {100} < 0.05 m",
        format!("means {edge:.4} / {quarter:.4} / {middle:.4} m, single-antenna max {single_max:.4} m, {dt:.1?}"),
    );
}

#[test]
fn criterion_07_detection_floor() {
    let mut plan = preset_fig5(Scenario::reference());
    plan.cases.retain(|c| matches!(c, Case::Detection { label, .. } if label == "thresholding"));
    plan.sweep_values = vec![1.0];
    let noisy = run_monte_carlo(&plan).unwrap();
    let a1 = value(&noisy, 1.0, "thresholding", "accuracy");
    plan.sweep_values = vec![25.0];
    plan.noiseless = true;
    let clean = run_monte_carlo(&plan).unwrap();
    let a25 = value(&clean, 25.0, "thresholding", "accuracy");
    let pass = (a1 - 0.76).abs() < 1e-12 && a25 == 1.0;
    report(7, pass, "thresholding accuracy 0.76 at G=1 and 1.0 at G=25 without noise", format!("G=1 {a1}, G=25 {a25}"));
}

fn fig5(values: Vec<f64>) -> ResultTable {
    let mut plan = preset_fig5(Scenario::reference());
    plan.cases.retain(|c| matches!(c, Case::Detection { label, .. } if label.starts_with("heuristic")));
    plan.sweep_values = values;
    run_monte_carlo(&plan).unwrap()
}

#[test]
fn criterion_08_heuristic_curve() {
    let t = fig5(vec![5.0, 10.0, 25.0]);
    let mut pass = true;
    let mut detail = Vec::new();
    for (g, want) in [(5.0, 0.906), (10.0, 0.978), (25.0, 0.997)] {
        let a = value(&t, g, "heuristic", "accuracy");
        pass &= (a - want).abs() <= 0.05;
        detail.push(format!("G={g} {a:.4} (target {want})"));
    }
    report(8, pass, "heuristic accuracy at G in {5, 10, 25} within 0.05", detail.join(", "));
}

#[test]
fn criterion_09_variant_ordering() {
    let t = fig5(vec![10.0]);
    let a = |m: &str| value(&t, 10.0, m, "accuracy");
    let h = a("heuristic");
    let gaps = [
        ("low-power", h - a("heuristic-low-power")),
        ("more-blockage", h - a("heuristic-more-blockage")),
        ("non-zero-mask", h - a("heuristic-non-zero-mask")),
    ];
    let biased = (h - a("heuristic-biased-pU")).abs();
    let pass = gaps.iter().all(|(_, g)| *g > 0.01) && biased <= 0.02;
    let mut detail: Vec<String> = gaps.iter().map(|(n, g)| format!("gap {n} {g:.4}")).collect();
    detail.push(format!("heuristic {h:.4}, |biased - heuristic| {biased:.4}"));
    report(9, pass, "variants below heuristic by > 0.01 at G=10, biased within 0.02", detail.join(", "));
}

fn local_min(c: &[f64], i: usize) -> bool {
    let i = i - 1;
    (i == 0 || c[i] < c[i - 1]) && (i + 1 == c.len() || c[i] < c[i + 1])
}

#[test]
fn criterion_10_cost_curve_minima() {
    let mut plan = preset_fig4(Scenario::reference());
    plan.cases.retain(
        |c| matches!(c, Case::CostCurve { transmissions: 20, power_dbm, blocked: (6, 10), .. } if *power_dbm == 30.0),
    );
    let label = match &plan.cases[0] {
        Case::CostCurve { label, .. } => label.clone(),
        _ => unreachable!(),
    };
    let t = run_monte_carlo(&plan).unwrap();
    let scan: Vec<f64> = t.series(&label, "scan_cost").into_iter().map(|v| v.1).collect();
    let single: Vec<f64> = t.series(&label, "single_cost").into_iter().map(|v| v.1).collect();
    let pass = local_min(&scan, 6) && local_min(&scan, 10) && 2.0 * scan[5] <= scan[0];
    report(
        10,
        pass,
        "averaged search cost has local minima at 6 and 10 and J(6) <= J(1)/2 (G=20, 30 dBm)",
        format!(
            "search curve J6/J1 {:.3}, minima 6:{} 10:{}; single-blocked curve J6/J1 {:.3}, minima 6:{} 10:{}",
            scan[5] / scan[0],
            local_min(&scan, 6),
            local_min(&scan, 10),
            single[5] / single[0],
            local_min(&single, 6),
            local_min(&single, 10)
        ),
    );
}

#[test]
fn criterion_11_oracle_equivalence() {
    let t0 = Instant::now();
    let sc = Scenario::reference();
    let cfg = sc.config.with_power_dbm(20.0);
    let paths = sc.path_set();
    let ns = cfg.subarray_size();
    let mut truths = vec![MaskHypothesis::all_ones(ns)];
    for i in 1..=ns {
        for j in i..=ns {
            truths.push(MaskHypothesis::run(ns, i, j));
        }
    }
    let mismatches: Vec<String> = truths
        .iter()
        .filter_map(|h| {
            let masks = vec![h.to_mask(cfg.num_antennas, 0), Mask::ones(cfg.num_antennas)];
            let r = realize(&cfg, &paths, CombinerKind::RandomPhase, cfg.rng_seed, masks, 0.0, 0).unwrap();
            let heur = detect_heuristic(&r.observations, &r.truth, &r.model, 0, HeuristicOptions::default()).unwrap();
            let orc = detect_exhaustive_oracle(&r.observations, &r.truth, &r.model, 0).unwrap();
            (heur.estimate != orc.estimate || orc.hypothesis() != Some(*h)).then(|| format!("{:?}", h.run))
        })
        .collect();
    let dt = t0.elapsed();
    report(
        11,
        mismatches.is_empty() && dt < Duration::from_secs(300),
        "zero-noise heuristic equals the exhaustive oracle on all 326 ground truths",
        format!("{} of {} differ {:?}, {dt:.1?}", mismatches.len(), truths.len(), mismatches),
    );
}

#[test]
fn criterion_12_zero_noise_exactness() {
    let sc = Scenario::reference();
    let paths = sc.path_set();
    let masks = vec![Mask::ones(sc.config.num_antennas); paths.num_paths()];
    let r = realize(&sc.config, &paths, CombinerKind::RandomPhase, sc.config.rng_seed, masks, 0.0, 0).unwrap();
    let est = localize(&r.observations, &r.model, 1, &LocalizeOptions::default()).unwrap();
    let e0 = (est.refined.ue_position - paths.ue_position).norm();
    let e1 = (est.refined.sp_positions[0] - paths.sp_positions[0]).norm();
    let eb = (est.refined.clock_offset_m - paths.clock_offset_m).abs();
    let pass = e0 < 1e-6 && e1 < 1e-6 && eb < 1e-6;
    report(12, pass, "noise-free chain recovers UE, SP and clock to < 1e-6 m", format!("errors {e0:.2e}, {e1:.2e}, {eb:.2e} m"));
}

#[test]
fn criterion_13_field_boundaries() {
    let (fresnel, fraunhofer) = field_boundaries(&Scenario::reference().config);
    let pass = rel(fresnel, 2.2) <= 0.1 && rel(fraunhofer, 50.0) <= 0.1;
    report(13, pass, "Fresnel and Fraunhofer distances within 10% of (2.2, 50) m", format!("({fresnel:.3}, {fraunhofer:.2}) m"));
}
