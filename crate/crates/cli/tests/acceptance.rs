//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured quantities and asserting the stated tolerance and runtime.
//!
//! Run with `cargo test -p lmss-cli --test acceptance -- --nocapture`.

use std::time::Instant;

use rayon::prelude::*;

use lmss_core::existence::{condition_c_check, example_hurst, Verdict};
use lmss_core::field::{
    build_measure_grid, component_norm_inequality_check, decompose_components, synthesize_field,
    FieldSample, GridGeometry,
};
use lmss_core::fit::mean;
use lmss_core::hurst::{HurstSpec, Rect};
use lmss_core::kernel::{
    increment_ratio_scan, normalizing_constant_for, LinearCombination, QuadratureSpec,
};
use lmss_core::lemmas::{verify_int_equiv, Regime};
use lmss_core::local_time::{moment_scaling_probe, occupation_histogram, MomentProbeConfig};
use lmss_core::quad::{integrate_axis, AxisSpec, BreakPoint, Coord};
use lmss_core::rng::RngStream;
use lmss_core::stable::{
    empirical_cf, gamma_integral_closed_form, mc_exp_integral_bound_check, sample_sas,
    StableParams, TriangularSystem,
};

fn check_runtime(started: Instant, limit_s: f64, what: &str) {
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < limit_s, "{what}: runtime {elapsed:.1}s exceeds {limit_s}s");
}

#[test]
fn criterion_01_closed_form_integral() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for &a in &[0.7, 1.0, 2.0] {
        for &b in &[0.0, 1.0, 2.0] {
            for &big_a in &[0.5, 1.0, 3.0] {
                let formula = gamma_integral_closed_form(a, b, big_a).unwrap();
                let cut = (60.0f64 / big_a).powf(1.0 / a).max(1.0);
                let axis = AxisSpec {
                    lower: Some(0.0),
                    upper: cut,
                    breaks: vec![BreakPoint::smooth(1.0)],
                    tail_decay: 0.0,
                };
                let f = |c: Coord| {
                    let x = c.value();
                    x.powf(b) * (-x.powf(a) * big_a).exp()
                };
                let q = integrate_axis(&f, &axis, 1e-9, 1e-14, 4000);
                assert!(q.converged, "a {a} b {b} A {big_a}");
                let rel = (2.0 * q.value - formula).abs() / formula;
                worst = worst.max(rel);
                assert!(rel <= 1e-6, "a {a} b {b} A {big_a}: rel err {rel:.2e}");
            }
        }
    }
    check_runtime(started, 5.0, "criterion 1");
    println!("ACCEPTANCE 1 PASS: closed-form integral, 27 points, worst rel err {worst:.2e}");
}

#[test]
fn criterion_02_stable_sampler_cf() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for (i, &alpha) in [0.7, 1.0, 1.5, 2.0].iter().enumerate() {
        let xs = sample_sas(
            StableParams::new(alpha, 1.0).unwrap(),
            100_000,
            RngStream::new(2026, i as u64),
        )
        .unwrap();
        for &t in &[0.5, 1.0, 2.0] {
            let cf = empirical_cf(&xs, t).unwrap();
            let expect = (-t.powf(alpha)).exp();
            let err = ((cf.re - expect).powi(2) + cf.im.powi(2)).sqrt();
            worst = worst.max(err);
            assert!(err <= 0.02, "alpha {alpha} t {t}: |cf err| = {err:.4}");
        }
    }
    check_runtime(started, 30.0, "criterion 2");
    println!("ACCEPTANCE 2 PASS: stable sampler CF, 12 cells, worst |error| {worst:.4}");
}

#[test]
fn criterion_03_existence_classification() {
    let started = Instant::now();
    let quad = QuadratureSpec::default();
    let cases = [
        (0.5, 2, Verdict::C2, true),
        (0.5, 1, Verdict::C1, true),
        (1.0, 2, Verdict::Fail, false),
        (1.0, 1, Verdict::C1, true),
    ];
    for (k, d, verdict, exists) in cases {
        let ex = example_hurst(2, 0.0, k).unwrap();
        let rep = condition_c_check(&ex.spec, &ex.domain, d, 1e-9, &quad).unwrap();
        assert_eq!(rep.verdict, verdict, "k {k} d {d}");
        assert_eq!(rep.exists, exists, "k {k} d {d}");
    }
    check_runtime(started, 10.0, "criterion 3");
    println!("ACCEPTANCE 3 PASS: existence classification 4/4 on the power-law example");
}

#[test]
fn criterion_04_integral_asymptotics() {
    let started = Instant::now();
    let quad = QuadratureSpec::default();
    let decades = |top: f64, count: usize| -> Vec<f64> {
        (0..count).map(|i| top * 10f64.powf(-(i as f64) / 2.0)).collect()
    };
    // Supercritical: fitted slope within 2% of -(beta - 1/alpha).
    for (alpha, beta, top) in [(2.0, 1.0, 1e-5), (1.5, 1.0, 1e-6), (2.0, 2.0, 1e-2)] {
        let chk =
            verify_int_equiv(alpha, beta, 0.0, 1.0, 0.0, &decades(top, 7), &quad).unwrap();
        assert_eq!(chk.regime, Regime::Supercritical);
        let slope = chk.fitted_slope.unwrap();
        let theory = chk.theory_slope.unwrap();
        assert!(
            (slope - theory).abs() <= 0.02 * theory.abs(),
            "({alpha},{beta}): slope {slope:.5} vs {theory:.5}"
        );
        println!("  supercritical ({alpha},{beta}): slope {slope:.5} vs theory {theory:.5}");
    }
    // Critical: ratio to the log comparator within [0.5, 2].
    let chk = verify_int_equiv(1.0, 1.0, 0.0, 1.0, 0.0, &decades(1e-2, 9), &quad).unwrap();
    assert_eq!(chk.regime, Regime::Critical);
    assert!(chk.ratio_envelope.0 >= 0.5 && chk.ratio_envelope.1 <= 2.0, "{chk:?}");
    // Subcritical: integral varies by < 2x as A -> 0.
    let chk = verify_int_equiv(2.0, 0.25, 0.0, 1.0, 0.3, &decades(1e-1, 7), &quad).unwrap();
    assert_eq!(chk.regime, Regime::Subcritical);
    assert!(chk.ratio_envelope.1 / chk.ratio_envelope.0 < 2.0, "{chk:?}");
    check_runtime(started, 10.0, "criterion 4");
    println!("ACCEPTANCE 4 PASS: three-regime integral asymptotics");
}

/// Rescale components: the synthesized h = 1/2 field has Var X(t) = 2t under
/// the characteristic-function convention, so X / sqrt(2) is standard
/// Brownian motion exactly (in law) on the lattice.
fn standardized(mut f: FieldSample) -> FieldSample {
    for v in f.values.iter_mut() {
        for x in v.iter_mut() {
            *x *= std::f64::consts::FRAC_1_SQRT_2;
        }
    }
    f
}

#[test]
fn criterion_05_brownian_local_time_oracle() {
    let started = Instant::now();
    let spec = HurstSpec::constant(vec![0.5]).unwrap();
    let rect = Rect::new(vec![0.0], vec![1.0]).unwrap();
    let reps = 500usize;
    let estimates: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|k| {
            let geom = GridGeometry::covering(0.5, &[1.0], 1.0 / 512.0).unwrap();
            let grid =
                build_measure_grid(geom, 2.0, RngStream::new(505, k as u64), 10_000_000).unwrap();
            let field = standardized(synthesize_field(&spec, &rect, 256, &[grid], 1.0).unwrap());
            let hist = occupation_histogram(&field, &rect, 64, None, None).unwrap();
            hist.local_time_estimate(&[0.0]).unwrap_or(0.0)
        })
        .collect();
    let m = mean(&estimates);
    let target = (2.0 / std::f64::consts::PI).sqrt();
    let rel = (m - target).abs() / target;
    assert!(rel <= 0.10, "mean {m:.4} vs {target:.4} (rel {rel:.3})");
    check_runtime(started, 300.0, "criterion 5");
    println!(
        "ACCEPTANCE 5 PASS: Brownian local time mean {m:.4} vs sqrt(2/pi) = {target:.4} \
         (rel err {rel:.3}, {reps} replicates)"
    );
}

#[test]
fn criterion_06_moment_scaling() {
    let started = Instant::now();
    // N = 1 Brownian: slope within +-0.1 of 0.5.
    let cfg = MomentProbeConfig {
        spec: HurstSpec::constant(vec![0.5]).unwrap(),
        alpha: 2.0,
        d: 1,
        n: 1,
        deltas: vec![0.5, 0.25, 0.125, 0.0625],
        replicates: 600,
        x: vec![0.0],
        corner: vec![0.0],
        eval_density: 512,
        spacing: 1.0 / 1024.0,
        truncation_l: 0.5,
        seed: RngStream::new(606, 0),
        bandwidth: None,
        max_cells: 10_000_000,
        c_norm: 1.0,
        slope_tolerance: 0.1,
    };
    let rep = moment_scaling_probe(&cfg).unwrap();
    assert!(
        (rep.fitted_slope - 0.5).abs() <= 0.1,
        "N=1 slope {:.4} not within 0.1 of 0.5",
        rep.fitted_slope
    );
    assert!(rep.consistent);
    println!(
        "  N=1 Brownian: slope {:.4} (stderr {:.4}), theory beta_bar {:.2}",
        rep.fitted_slope, rep.slope_stderr, rep.theory_exponent
    );

    // N = 2 Brownian sheet: bound consistency, fitted slope >= 1.5 - 0.15.
    let cfg = MomentProbeConfig {
        spec: HurstSpec::constant(vec![0.5, 0.5]).unwrap(),
        alpha: 2.0,
        d: 1,
        n: 1,
        deltas: vec![0.4, 0.283, 0.2, 0.141, 0.1],
        replicates: 300,
        x: vec![0.0],
        corner: vec![0.5, 0.5],
        eval_density: 48,
        spacing: 0.0125,
        truncation_l: 0.25,
        seed: RngStream::new(607, 0),
        bandwidth: Some(0.5),
        max_cells: 10_000_000,
        c_norm: 1.0,
        slope_tolerance: 0.15,
    };
    let rep = moment_scaling_probe(&cfg).unwrap();
    assert!((rep.theory_exponent - 1.5).abs() < 1e-9);
    assert!(
        rep.fitted_slope >= 1.35,
        "N=2 slope {:.4} below bound-consistency threshold 1.35",
        rep.fitted_slope
    );
    assert!(rep.consistent);
    check_runtime(started, 900.0, "criterion 6");
    println!(
        "ACCEPTANCE 6 PASS: moment scaling; N=2 sheet slope {:.4} >= 1.35 (beta_bar 1.5)",
        rep.fitted_slope
    );
}

#[test]
fn criterion_07_decomposition_and_chain() {
    let started = Instant::now();
    // Reconstruction identity on 20 seeds.
    let spec = HurstSpec::constant(vec![0.6, 0.6]).unwrap();
    let geom = GridGeometry::covering(1.0, &[1.0, 1.0], 1.0 / 32.0).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let grid =
            build_measure_grid(geom.clone(), 2.0, RngStream::new(707, k), 10_000_000).unwrap();
        let d = decompose_components(&spec, &[1.0, 1.0], &grid, 0.5, 1.0).unwrap();
        worst = worst.max(d.reconstruction_rel_err);
        assert!(d.reconstruction_rel_err <= 1e-9, "seed {k}: {}", d.reconstruction_rel_err);
    }
    println!("  reconstruction worst rel err {worst:.2e} over 20 seeds");

    // Norm chain on 50 quadrature trials with n <= 2.
    let spec = HurstSpec::constant(vec![0.6, 0.7]).unwrap();
    let quad = QuadratureSpec { target_rel_err: 1e-5, panels_per_axis: 400, ..Default::default() };
    use rand::Rng;
    let trials: Vec<(Vec<f64>, Vec<f64>, f64)> = {
        let mut rng = RngStream::new(708, 0).rng();
        (0..50)
            .map(|_| {
                let u: Vec<f64> = (0..2).map(|_| rng.gen_range(0.5..0.6)).collect();
                let v: Vec<f64> = (0..2).map(|_| rng.gen_range(0.5..0.6)).collect();
                let a: f64 = rng.gen_range(0.5..2.0);
                (u, v, a)
            })
            .collect()
    };
    let results: Vec<bool> = trials
        .into_par_iter()
        .map(|(u, v, a)| {
            let comb = LinearCombination::new(vec![a, -1.0], vec![u, v]).unwrap();
            component_norm_inequality_check(&spec, &comb, 2.0, &quad, 0.5, 1.0).unwrap().holds
        })
        .collect();
    let holds = results.iter().filter(|&&b| b).count();
    assert_eq!(holds, 50, "chain held on {holds}/50 trials");
    check_runtime(started, 120.0, "criterion 7");
    println!("ACCEPTANCE 7 PASS: reconstruction <= 1e-9 on 20 seeds; norm chain 50/50");
}

#[test]
fn criterion_08_exponential_integral_bound() {
    let started = Instant::now();
    // Exact-equality sanity case: n = 1, b = 0, alpha = 2.
    let sys = TriangularSystem::new(vec![vec![1.0]], vec![0.0]).unwrap();
    let rep = mc_exp_integral_bound_check(&sys, 2.0, 1000, RngStream::new(808, 0)).unwrap();
    let sqrt_pi = std::f64::consts::PI.sqrt();
    assert!((rep.lhs_estimate - sqrt_pi).abs() < 1e-12);
    assert!((rep.rhs_bound - sqrt_pi).abs() < 1e-12);

    use rand::Rng;
    let mut rng = RngStream::new(809, 0).rng();
    let mut satisfied = 0usize;
    let total = 100usize;
    for i in 0..total {
        let n = 1 + i % 3;
        let alpha = [1.0, 1.5, 2.0][(i / 3) % 3];
        let mut matrix = vec![vec![0.0; n]; n];
        for r in 0..n {
            matrix[r][r] = rng.gen_range(0.3..2.0);
            for c in (r + 1)..n {
                matrix[r][c] = rng.gen_range(-1.0..1.0);
            }
        }
        let powers: Vec<f64> = (0..n).map(|_| [0.0, 0.5, 1.0, 2.0][rng.gen_range(0..4)]).collect();
        let sys = TriangularSystem::new(matrix, powers).unwrap();
        let rep =
            mc_exp_integral_bound_check(&sys, alpha, 20_000, RngStream::new(810, i as u64))
                .unwrap();
        if rep.satisfied {
            satisfied += 1;
        }
    }
    assert_eq!(satisfied, total, "bound satisfied on {satisfied}/{total}");
    check_runtime(started, 120.0, "criterion 8");
    println!(
        "ACCEPTANCE 8 PASS: exponential-integral bound {satisfied}/{total} instances, \
         n=1 equality sqrt(pi)"
    );
}

#[test]
fn criterion_09_increment_bound_scan() {
    let started = Instant::now();
    let quad = QuadratureSpec::default();
    // Brownian: ratio identically 1 within 1e-3.
    let spec = HurstSpec::constant(vec![0.5]).unwrap();
    let rect = Rect::new(vec![0.5], vec![0.51]).unwrap();
    let rep =
        increment_ratio_scan(&spec, &rect, 2.0, 8, &quad, RngStream::new(21, 0), 1.0).unwrap();
    assert!((rep.min_ratio - 1.0).abs() <= 1e-3, "min {}", rep.min_ratio);
    assert!((rep.max_ratio - 1.0).abs() <= 1e-3, "max {}", rep.max_ratio);

    // Power-law index example on [0.1, 0.2]: envelope locked to the golden
    // values from the first calibration run (seed 11, 50 pairs).
    let ex = lmss_core::existence::example_hurst(2, 0.0, 0.5).unwrap();
    let scan_rect = Rect::new(vec![0.1], vec![0.2]).unwrap();
    let (_, c_norm) = normalizing_constant_for(&ex.spec, &scan_rect, 2.0, &quad).unwrap();
    let rep = increment_ratio_scan(
        &ex.spec,
        &scan_rect,
        2.0,
        50,
        &quad,
        RngStream::new(11, 0),
        c_norm,
    )
    .unwrap();
    assert!(rep.min_ratio.is_finite() && rep.max_ratio.is_finite());
    assert!(rep.max_ratio / rep.min_ratio <= 10.0, "envelope spread {rep:?}");
    const GOLDEN_MIN: f64 = 0.5100939250257015;
    const GOLDEN_MAX: f64 = 1.0272084874915417;
    assert!(
        (rep.min_ratio - GOLDEN_MIN).abs() <= 1e-3 * GOLDEN_MIN,
        "min ratio drifted: {} vs {GOLDEN_MIN}",
        rep.min_ratio
    );
    assert!(
        (rep.max_ratio - GOLDEN_MAX).abs() <= 1e-3 * GOLDEN_MAX,
        "max ratio drifted: {} vs {GOLDEN_MAX}",
        rep.max_ratio
    );
    check_runtime(started, 300.0, "criterion 9");
    println!(
        "ACCEPTANCE 9 PASS: Brownian ratio = 1 within 1e-3; example envelope \
         [{:.4}, {:.4}] matches golden",
        rep.min_ratio, rep.max_ratio
    );
}

// ---------------------------------------------------------------------------
// Criterion 10: byte-identical outputs for every subcommand.

fn write_config(dir: &std::path::Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run_cli(args: &[&str]) -> std::process::Output {
    let exe = env!("CARGO_BIN_EXE_lmss");
    std::process::Command::new(exe)
        .args(args)
        .env_remove("LMSS_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn data_files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| {
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
}

#[test]
fn criterion_10_determinism_of_subcommands() {
    let started = Instant::now();
    let base = std::env::temp_dir().join(format!("lmss-accept-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);
    std::fs::create_dir_all(&base).unwrap();

    let spec_1d = r#""spec": { "kind": "constant", "params": { "h": [0.5] }, "m": [0.4], "M": [0.6], "c": 1.0 }"#;
    let configs: Vec<(&str, String)> = vec![
        (
            "simulate",
            format!(
                r#"{{ "command": "simulate", "seed": 3, {spec_1d},
                     "params": {{ "alpha": 1.5, "rect": {{ "lower": [0.0], "upper": [1.0] }},
                                  "eval_density": 64, "d": 2, "spacing": 0.0078125,
                                  "truncation_l": 1.0 }} }}"#
            ),
        ),
        (
            "localtime",
            format!(
                r#"{{ "command": "localtime", "seed": 4, {spec_1d},
                     "params": {{ "alpha": 2.0, "rect": {{ "lower": [0.0], "upper": [1.0] }},
                                  "eval_density": 128, "d": 1, "spacing": 0.0078125,
                                  "truncation_l": 1.0, "bins_per_axis": 32,
                                  "x": [0.0], "smoothing_k": 100.0 }} }}"#
            ),
        ),
        (
            "check-existence",
            r#"{ "command": "check-existence", "seed": 1,
                 "params": { "d": 2, "example": { "m": 2, "q": 0.0, "k": 0.5 } } }"#
                .to_string(),
        ),
        (
            "verify-lemmas",
            r#"{ "command": "verify-lemmas", "seed": 7,
                 "params": { "triangle_samples": 2000, "bound_instances": 6,
                             "bound_trials": 1500, "sum_z_trials": 3000 } }"#
                .to_string(),
        ),
        (
            "scan-increments",
            format!(
                r#"{{ "command": "scan-increments", "seed": 11, {spec_1d},
                     "params": {{ "alpha": 2.0, "rect": {{ "lower": [0.5], "upper": [0.51] }},
                                  "pairs": 6 }} }}"#
            ),
        ),
        (
            "scaling-probe",
            format!(
                r#"{{ "command": "scaling-probe", "seed": 9, {spec_1d},
                     "params": {{ "probe": "moment", "alpha": 2.0, "d": 1, "n": 1,
                                  "deltas": [0.5, 0.25, 0.125, 0.0625], "replicates": 40,
                                  "x": [0.0], "corner": [0.0], "eval_density": 128,
                                  "spacing": 0.00390625, "truncation_l": 0.5 }} }}"#
            ),
        ),
        (
            "calibrate-constants",
            r#"{ "command": "calibrate-constants", "seed": 3,
                 "params": { "entries": [ { "alpha": 2.0, "h": [0.75] },
                                          { "alpha": 1.5, "h": [0.6] } ] } }"#
                .to_string(),
        ),
    ];

    for (command, body) in &configs {
        let cfg = write_config(&base, &format!("{command}.json"), body);
        let out_a = base.join(format!("{command}-a"));
        let out_b = base.join(format!("{command}-b"));
        for out in [&out_a, &out_b] {
            let output = run_cli(&[
                command,
                "--config",
                cfg.to_str().unwrap(),
                "--output",
                out.to_str().unwrap(),
            ]);
            assert!(
                output.status.success(),
                "{command} failed: {}",
                String::from_utf8_lossy(&output.stderr)
            );
        }
        let fa = data_files(&out_a);
        let fb = data_files(&out_b);
        assert!(!fa.is_empty(), "{command}: no outputs");
        assert_eq!(fa.len(), fb.len(), "{command}: output sets differ");
        for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
            assert_eq!(na, nb, "{command}: file names differ");
            assert_eq!(ba, bb, "{command}: {na} differs between runs");
        }
        println!("  {command}: {} data files byte-identical", fa.len());
    }

    let _ = std::fs::remove_dir_all(&base);
    check_runtime(started, 600.0, "criterion 10");
    println!("ACCEPTANCE 10 PASS: all subcommands byte-identical across reruns");
}
