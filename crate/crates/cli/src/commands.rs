//! Subcommand implementations: wire configs to the library, write reports.

use std::path::Path;

use serde::Serialize;
use serde_json::json;

use lmss_core::existence::{condition_c_check, example_hurst_with_floor, infimum_sum_inv_h};
use lmss_core::field::{synthesize_field, FieldSample, GridGeometry, MeasureGrid};
use lmss_core::hurst::{HurstSpec, Rect};
use lmss_core::kernel::{
    increment_ratio_scan, normalizing_constant, normalizing_constant_for, synthesis_tail_bound,
    QuadratureSpec,
};
use lmss_core::lemmas::{
    verify_int_equiv, verify_p_weights, verify_sum_z_bound, verify_triangle, SumZInstance,
};
use lmss_core::local_time::{
    holder_scaling_probe, moment_scaling_probe, occupation_histogram, smoothed_local_time,
    HolderProbeConfig, MomentProbeConfig,
};
use lmss_core::rng::RngStream;
use lmss_core::stable::{mc_exp_integral_bound_check, TriangularSystem};

use crate::config::*;
use crate::output::{cached_measure_grid, csv_row, write_json};

pub struct Ctx<'a> {
    pub out_dir: &'a Path,
    pub seed: u64,
    pub max_cells: usize,
}

fn quad_spec(target_rel_err: f64, truncation_l: f64) -> QuadratureSpec {
    QuadratureSpec { truncation_l, target_rel_err, ..Default::default() }
}

fn component_grids(
    geometry: &GridGeometry,
    alpha: f64,
    master: RngStream,
    d: usize,
    max_cells: usize,
) -> CliResult<Vec<MeasureGrid>> {
    (0..d)
        .map(|k| cached_measure_grid(geometry, alpha, master.substream(k as u64), max_cells))
        .collect()
}

fn synthesize(
    spec: &HurstSpec,
    alpha: f64,
    rect: &Rect,
    eval_density: usize,
    spacing: f64,
    truncation_l: f64,
    d: usize,
    ctx: &Ctx,
) -> CliResult<(FieldSample, f64, Vec<f64>)> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(CliError::config(format!("alpha must lie in (0, 2], got {alpha}")));
    }
    let quad = quad_spec(1e-6, truncation_l);
    let (anchor, c_norm) = normalizing_constant_for(spec, rect, alpha, &quad)?;
    let geometry = GridGeometry::covering(truncation_l, &rect.upper, spacing)?;
    let grids = component_grids(&geometry, alpha, RngStream::new(ctx.seed, 0), d, ctx.max_cells)?;
    let field = synthesize_field(spec, rect, eval_density, &grids, c_norm)?;
    Ok((field, c_norm, anchor))
}

#[derive(Serialize)]
struct FieldExportMeta<'a> {
    meta: &'a lmss_core::field::FieldMeta,
    c_norm_anchor: Vec<f64>,
    truncation_tail_bound: f64,
}

fn write_field_csv(dir: &Path, name: &str, field: &FieldSample) -> CliResult<String> {
    let n = field.meta.rect.dims();
    let mut text = String::new();
    for l in 0..n {
        text.push_str(&format!("u_{},", l + 1));
    }
    let cols: Vec<String> = (0..field.meta.d).map(|k| format!("x_{}", k + 1)).collect();
    text.push_str(&cols.join(","));
    text.push('\n');
    for (p, v) in field.points.iter().zip(&field.values) {
        let row: Vec<f64> = p.iter().chain(v.iter()).copied().collect();
        text.push_str(&csv_row(&row));
    }
    crate::output::atomic_write(dir, name, text.as_bytes())?;
    Ok(name.to_string())
}

pub fn simulate(config: &RunConfig, ctx: &Ctx) -> CliResult<Vec<String>> {
    let p: SimulateParams = config.params()?;
    let spec = config.require_spec()?;
    let (field, c_norm, anchor) = synthesize(
        spec,
        p.alpha,
        &p.rect,
        p.eval_density,
        p.spacing,
        p.truncation_l,
        p.d,
        ctx,
    )?;
    let mut outputs = Vec::new();
    outputs.push(write_field_csv(ctx.out_dir, "field.csv", &field)?);
    let h_upper = spec.eval(&anchor)?;
    let tail = synthesis_tail_bound(&h_upper, p.alpha, &p.rect.upper, p.truncation_l);
    write_json(
        ctx.out_dir,
        "field_meta.json",
        &FieldExportMeta { meta: &field.meta, c_norm_anchor: anchor, truncation_tail_bound: tail },
    )?;
    outputs.push("field_meta.json".into());
    let _ = c_norm;
    Ok(outputs)
}

pub fn localtime(config: &RunConfig, ctx: &Ctx) -> CliResult<Vec<String>> {
    let p: LocaltimeParams = config.params()?;
    let spec = config.require_spec()?;
    if p.x.len() != p.d {
        return Err(CliError::config("x must have d components"));
    }
    let (field, _, _) = synthesize(
        spec,
        p.alpha,
        &p.rect,
        p.eval_density,
        p.spacing,
        p.truncation_l,
        p.d,
        ctx,
    )?;
    let hist = occupation_histogram(&field, &p.rect, p.bins_per_axis, p.bandwidth, None)?;

    let mut text = String::new();
    for j in 0..hist.d {
        text.push_str(&format!("center_{},", j + 1));
    }
    text.push_str("density\n");
    let bins = hist.bins_per_axis;
    for (flat, dens) in hist.density.iter().enumerate() {
        let mut centers = Vec::with_capacity(hist.d);
        let mut rem = flat;
        for j in (0..hist.d).rev() {
            let idx = rem % bins;
            rem /= bins;
            centers.push((j, hist.lo[j] + (idx as f64 + 0.5) * hist.bandwidth));
        }
        centers.sort_by_key(|(j, _)| *j);
        let mut row: Vec<f64> = centers.into_iter().map(|(_, c)| c).collect();
        row.push(*dens);
        text.push_str(&csv_row(&row));
    }
    crate::output::atomic_write(ctx.out_dir, "histogram.csv", text.as_bytes())?;

    let estimate = hist.local_time_estimate(&p.x).ok();
    let smoothed = match p.smoothing_k {
        Some(k) => Some(smoothed_local_time(&field, &p.rect, &p.x, k)?),
        None => None,
    };
    write_json(
        ctx.out_dir,
        "estimates.json",
        &json!({
            "x": p.x,
            "histogram_estimate": estimate,
            "smoothed_estimate": smoothed,
            "bandwidth": hist.bandwidth,
            "overflow_mass": hist.overflow_mass,
            "overflow_flag": hist.overflow_flag,
            "total_time_mass": hist.total_time_mass,
        }),
    )?;
    Ok(vec!["histogram.csv".into(), "estimates.json".into()])
}

pub fn check_existence(config: &RunConfig, ctx: &Ctx) -> CliResult<Vec<String>> {
    let p: CheckExistenceParams = config.params()?;
    let (spec, rect, example_note) = match &p.example {
        Some(ex) => {
            let built = example_hurst_with_floor(ex.m, ex.q, ex.k, ex.h_floor.unwrap_or(0.01))?;
            (built.spec, built.domain, Some(json!({
                "m": ex.m, "q": ex.q, "k": ex.k, "h_floor": built.h_floor,
            })))
        }
        None => {
            let spec = config.require_spec()?.clone();
            let rect = p
                .rect
                .clone()
                .ok_or_else(|| CliError::config("check-existence needs `rect` or `example`"))?;
            (spec, rect, None)
        }
    };
    let quad = quad_spec(p.target_rel_err, 10.0);
    let report = condition_c_check(&spec, &rect, p.d, p.equality_tol, &quad)?;
    let inf = infimum_sum_inv_h(&spec, &rect, 33, 6)?;
    write_json(
        ctx.out_dir,
        "existence.json",
        &json!({
            "report": report,
            "infimum_diagnostics": inf,
            "rect": rect,
            "example": example_note,
            "seed": ctx.seed,
        }),
    )?;
    Ok(vec!["existence.json".into()])
}

#[derive(Serialize)]
struct LemmaRow {
    check: String,
    case: String,
    pass: bool,
}

pub fn verify_lemmas(config: &RunConfig, ctx: &Ctx) -> CliResult<Vec<String>> {
    let p: VerifyLemmasParams = config.params()?;
    let quad = QuadratureSpec::default();
    let mut rows: Vec<LemmaRow> = Vec::new();
    let mut detail = Vec::new();

    // Triangle inequality fuzz.
    {
        use rand::Rng;
        let mut rng = RngStream::new(ctx.seed, 1).rng();
        let mut all = true;
        for _ in 0..p.triangle_samples {
            let alpha: f64 = rng.gen_range(0.05..3.0);
            let n = rng.gen_range(1..6);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            all &= verify_triangle(alpha, &x).satisfied;
        }
        rows.push(LemmaRow {
            check: "triangle".into(),
            case: format!("{} fuzz samples", p.triangle_samples),
            pass: all,
        });
        detail.push(json!({"check": "triangle", "samples": p.triangle_samples, "pass": all}));
    }

    // Integral asymptotics in the three regimes.
    {
        let decades = |top: f64, count: usize| -> Vec<f64> {
            (0..count).map(|i| top * 10f64.powf(-(i as f64) / 2.0)).collect()
        };
        let cases: Vec<(&str, f64, f64, f64, Vec<f64>)> = vec![
            ("supercritical alpha=2 beta=1", 2.0, 1.0, 0.0, decades(1e-5, 7)),
            ("supercritical alpha=1.5 beta=1", 1.5, 1.0, 0.0, decades(1e-6, 7)),
            ("supercritical alpha=2 beta=2", 2.0, 2.0, 0.0, decades(1e-2, 7)),
            ("critical alpha=1 beta=1", 1.0, 1.0, 0.0, decades(1e-2, 9)),
            ("subcritical alpha=2 beta=0.25", 2.0, 0.25, 0.3, decades(1e-1, 7)),
        ];
        for (name, alpha, beta, t0, a_values) in cases {
            let chk = verify_int_equiv(alpha, beta, 0.0, 1.0, t0, &a_values, &quad)?;
            rows.push(LemmaRow { check: "int_equiv".into(), case: name.into(), pass: chk.pass });
            detail.push(json!({"check": "int_equiv", "case": name, "result": chk}));
        }
    }

    // Hoelder weight construction.
    {
        let cases: Vec<(Vec<f64>, usize, usize)> = vec![
            (vec![0.5, 0.5], 1, 4),
            (vec![0.4], 1, 3),
            (vec![0.9, 0.9], 2, 10),
            (vec![0.3, 0.6, 0.9], 2, 5),
        ];
        for (h, d, n) in cases {
            let rep = verify_p_weights(&h, d, n)?;
            let name = format!("h={h:?} d={d} n={n}");
            rows.push(LemmaRow { check: "p_weights".into(), case: name.clone(), pass: rep.all_ok });
            detail.push(json!({"check": "p_weights", "case": name, "result": rep}));
        }
    }

    // Exponential-integral bound on random triangular systems.
    {
        use rand::Rng;
        let mut rng = RngStream::new(ctx.seed, 2).rng();
        let mut pass_count = 0usize;
        for i in 0..p.bound_instances {
            let n = 1 + i % 3;
            let alpha = [1.0, 1.5, 2.0][i % 3];
            let mut matrix = vec![vec![0.0; n]; n];
            for r in 0..n {
                matrix[r][r] = rng.gen_range(0.3..2.0);
                for c in (r + 1)..n {
                    matrix[r][c] = rng.gen_range(-1.0..1.0);
                }
            }
            let powers: Vec<f64> = (0..n).map(|_| [0.0, 1.0][rng.gen_range(0..2)]).collect();
            let sys = TriangularSystem::new(matrix, powers)?;
            let rep = mc_exp_integral_bound_check(
                &sys,
                alpha,
                p.bound_trials,
                RngStream::new(ctx.seed, 100 + i as u64),
            )?;
            if rep.satisfied {
                pass_count += 1;
            }
        }
        let pass = pass_count == p.bound_instances;
        rows.push(LemmaRow {
            check: "exp_integral_bound".into(),
            case: format!("{pass_count}/{} instances", p.bound_instances),
            pass,
        });
        detail.push(json!({
            "check": "exp_integral_bound",
            "instances": p.bound_instances,
            "satisfied": pass_count,
        }));
    }

    // Strip-norm bound: calibrate on 3, hold out 8.
    {
        let mk = |a: f64, gap: f64| SumZInstance {
            spec: HurstSpec::constant(vec![0.6]).expect("valid"),
            axis: 0,
            points: vec![vec![a], vec![a + gap]],
            powers: vec![0.0, 0.0],
            alpha: 2.0,
            epsilon: 1e-9,
            c_norm: 1.0,
        };
        let mut c_fit: f64 = 0.0;
        for (i, (a, gap)) in [(0.3, 0.2), (0.5, 0.1), (0.2, 0.4)].iter().enumerate() {
            let rep = verify_sum_z_bound(
                &mk(*a, *gap),
                p.sum_z_trials,
                RngStream::new(ctx.seed, 200 + i as u64),
            )?;
            c_fit = c_fit.max(rep.ratio * (1.0 + 3.0 * rep.lhs_rel_stderr));
        }
        let held = [
            (0.25, 0.3),
            (0.4, 0.25),
            (0.6, 0.15),
            (0.35, 0.05),
            (0.15, 0.35),
            (0.55, 0.2),
            (0.45, 0.08),
            (0.3, 0.5),
        ];
        let mut pass_count = 0usize;
        for (i, (a, gap)) in held.iter().enumerate() {
            let rep = verify_sum_z_bound(
                &mk(*a, *gap),
                p.sum_z_trials,
                RngStream::new(ctx.seed, 300 + i as u64),
            )?;
            if rep.lhs_estimate <= c_fit * rep.form_value * (1.0 + 3.0 * rep.lhs_rel_stderr) {
                pass_count += 1;
            }
        }
        let pass = pass_count * 100 >= held.len() * 95;
        rows.push(LemmaRow {
            check: "strip_norm_bound".into(),
            case: format!("{pass_count}/{} held-out", held.len()),
            pass,
        });
        detail.push(json!({
            "check": "strip_norm_bound",
            "c_fit": c_fit,
            "held_out_pass": pass_count,
            "held_out_total": held.len(),
        }));
    }

    let mut text = String::from("check,case,pass\n");
    for row in &rows {
        text.push_str(&format!("{},{},{}\n", row.check, row.case.replace(',', ";"), row.pass));
    }
    crate::output::atomic_write(ctx.out_dir, "lemmas_summary.csv", text.as_bytes())?;
    write_json(ctx.out_dir, "lemmas_detail.json", &detail)?;
    Ok(vec!["lemmas_summary.csv".into(), "lemmas_detail.json".into()])
}

pub fn scan_increments(config: &RunConfig, ctx: &Ctx) -> CliResult<Vec<String>> {
    let p: ScanIncrementsParams = config.params()?;
    let spec = config.require_spec()?;
    let quad = quad_spec(p.target_rel_err, 10.0);
    let (anchor, c_norm) = normalizing_constant_for(spec, &p.rect, p.alpha, &quad)?;
    let report = increment_ratio_scan(
        spec,
        &p.rect,
        p.alpha,
        p.pairs,
        &quad,
        RngStream::new(ctx.seed, 0),
        c_norm,
    )?;

    let n = p.rect.dims();
    let mut text = String::new();
    for l in 0..n {
        text.push_str(&format!("u_{},", l + 1));
    }
    for l in 0..n {
        text.push_str(&format!("v_{},", l + 1));
    }
    text.push_str("norm,gauge,ratio\n");
    for pair in &report.pairs {
        let row: Vec<f64> = pair
            .u
            .iter()
            .chain(pair.v.iter())
            .copied()
            .chain([pair.norm, pair.gauge, pair.ratio])
            .collect();
        text.push_str(&csv_row(&row));
    }
    crate::output::atomic_write(ctx.out_dir, "increments.csv", text.as_bytes())?;
    write_json(
        ctx.out_dir,
        "increments_summary.json",
        &json!({
            "min_ratio": report.min_ratio,
            "max_ratio": report.max_ratio,
            "pairs": report.pairs.len(),
            "skipped": report.skipped,
            "c_norm": c_norm,
            "c_norm_anchor": anchor,
        }),
    )?;
    Ok(vec!["increments.csv".into(), "increments_summary.json".into()])
}

pub fn scaling_probe(config: &RunConfig, ctx: &Ctx) -> CliResult<Vec<String>> {
    let p: ScalingProbeParams = config.params()?;
    let spec = config.require_spec()?.clone();
    let quad = quad_spec(1e-6, p.truncation_l);
    let report = match p.probe.as_str() {
        "moment" => {
            let corner = p
                .corner
                .clone()
                .ok_or_else(|| CliError::config("moment probe needs `corner`"))?;
            let deltas =
                p.deltas.clone().ok_or_else(|| CliError::config("moment probe needs `deltas`"))?;
            let anchor_rect = Rect::new(
                corner.iter().map(|a| a.max(1e-9)).collect(),
                corner.iter().map(|a| a + deltas[0]).collect(),
            )?;
            let (_, c_norm) = normalizing_constant_for(&spec, &anchor_rect, p.alpha, &quad)?;
            moment_scaling_probe(&MomentProbeConfig {
                spec,
                alpha: p.alpha,
                d: p.d,
                n: p.n.ok_or_else(|| CliError::config("moment probe needs `n`"))?,
                deltas,
                replicates: p.replicates,
                x: p.x.clone(),
                corner,
                eval_density: p.eval_density,
                spacing: p.spacing,
                truncation_l: p.truncation_l,
                seed: RngStream::new(ctx.seed, 0),
                bandwidth: p.bandwidth,
                max_cells: ctx.max_cells,
                c_norm,
                slope_tolerance: p.slope_tolerance,
            })?
        }
        "holder" => {
            let t = p.t.clone().ok_or_else(|| CliError::config("holder probe needs `t`"))?;
            let radii =
                p.radii.clone().ok_or_else(|| CliError::config("holder probe needs `radii`"))?;
            let anchor_rect = Rect::new(
                t.iter().map(|v| (v - radii[0]).max(1e-9)).collect(),
                t.iter().map(|v| v + radii[0]).collect(),
            )?;
            let (_, c_norm) = normalizing_constant_for(&spec, &anchor_rect, p.alpha, &quad)?;
            holder_scaling_probe(&HolderProbeConfig {
                spec,
                alpha: p.alpha,
                d: p.d,
                t,
                radii,
                replicates: p.replicates,
                x: p.x.clone(),
                eval_density: p.eval_density,
                spacing: p.spacing,
                truncation_l: p.truncation_l,
                seed: RngStream::new(ctx.seed, 0),
                bandwidth: p.bandwidth,
                max_cells: ctx.max_cells,
                c_norm,
                growth_tolerance: p.growth_tolerance,
            })?
        }
        other => {
            return Err(CliError::config(format!(
                "unknown probe {other:?}; expected moment | holder"
            )))
        }
    };

    let mut text = String::from("scale,statistic\n");
    for (s, v) in report.scales.iter().zip(&report.statistics) {
        text.push_str(&csv_row(&[*s, *v]));
    }
    crate::output::atomic_write(ctx.out_dir, "scaling.csv", text.as_bytes())?;
    write_json(ctx.out_dir, "scaling_report.json", &report)?;
    Ok(vec!["scaling.csv".into(), "scaling_report.json".into()])
}

pub fn calibrate_constants(config: &RunConfig, ctx: &Ctx) -> CliResult<Vec<String>> {
    let p: CalibrateParams = config.params()?;
    let quad = quad_spec(p.target_rel_err, 10.0);
    let mut entries = Vec::new();
    for e in &p.entries {
        let c = normalizing_constant(&e.h, e.alpha, &quad)?;
        entries.push(json!({
            "alpha": e.alpha,
            "h": e.h,
            "c_H": c,
            "rel_err": p.target_rel_err,
        }));
    }
    write_json(
        ctx.out_dir,
        "c_norm_golden.json",
        &json!({
            "entries": entries,
            "quadrature": { "target_rel_err": p.target_rel_err },
        }),
    )?;
    Ok(vec!["c_norm_golden.json".into()])
}
