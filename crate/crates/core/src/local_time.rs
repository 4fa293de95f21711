//! Local-time estimation from occupation measures of synthesized fields,
//! a Gaussian-smoothed cross-estimator, and the moment / Hoelder scaling
//! probes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::field::{build_component_grids, synthesize_field, FieldSample, GridGeometry};
use crate::fit::{log_log_slope, mean, percentile, sample_std};
use crate::hurst::{beta_bar, beta_exponent, exponent_report, HurstSpec, Rect};
use crate::rng::RngStream;

/// Binned occupation-density estimate over a spatial box lattice.
#[derive(Clone, Debug, Serialize)]
pub struct LocalTimeHistogram {
    pub rect: Rect,
    pub d: usize,
    /// Lower corner of the binned range, per spatial axis.
    pub lo: Vec<f64>,
    /// Bin width (the box-kernel bandwidth), shared across spatial axes.
    pub bandwidth: f64,
    pub bins_per_axis: usize,
    /// Row-major occupation density per bin: lambda_N-mass / bandwidth^d.
    pub density: Vec<f64>,
    /// lambda_N mass that fell outside the binned range.
    pub overflow_mass: f64,
    /// Set when more than 1% of the mass overflowed.
    pub overflow_flag: bool,
    pub time_cell_volume: f64,
    pub total_time_mass: f64,
}

impl LocalTimeHistogram {
    /// Density of the bin containing `x`.
    pub fn local_time_estimate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(CoreError::invalid("local_time_estimate: dimension mismatch"));
        }
        let mut flat = 0usize;
        for j in 0..self.d {
            let idx = (x[j] - self.lo[j]) / self.bandwidth;
            if idx < 0.0 || idx >= self.bins_per_axis as f64 {
                return Err(CoreError::OutOfDomain(format!(
                    "local_time_estimate: x[{j}] = {} outside binned range",
                    x[j]
                )));
            }
            flat = flat * self.bins_per_axis + idx as usize;
        }
        Ok(self.density[flat])
    }

    /// Total binned mass plus overflow; equals lambda_N of the covered rect.
    pub fn binned_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bandwidth.powi(self.d as i32)
    }
}

/// Scott-type default bandwidth from the per-replicate sample itself.
fn scott_bandwidth(values: &[&Vec<f64>], d: usize) -> f64 {
    let r = values.len() as f64;
    let mut sigma = 0.0;
    for j in 0..d {
        let col: Vec<f64> = values.iter().map(|v| v[j]).collect();
        sigma += sample_std(&col);
    }
    sigma /= d as f64;
    sigma * r.powf(-1.0 / (d as f64 + 4.0))
}

/// Histogram the occupation measure of `field` restricted to `rect`.
///
/// `bandwidth = None` selects the Scott-type default and records it in the
/// output; `range = None` centers the binned box on the observed values.
pub fn occupation_histogram(
    field: &FieldSample,
    rect: &Rect,
    bins_per_axis: usize,
    bandwidth: Option<f64>,
    range_lo: Option<Vec<f64>>,
) -> Result<LocalTimeHistogram> {
    let d = field.meta.d;
    if bins_per_axis == 0 {
        return Err(CoreError::invalid("occupation_histogram: need at least one bin"));
    }
    if let Some(bw) = bandwidth {
        if bw <= 0.0 {
            return Err(CoreError::invalid("occupation_histogram: bandwidth must be positive"));
        }
    }
    let selected: Vec<&Vec<f64>> = field
        .points
        .iter()
        .zip(&field.values)
        .filter(|(p, _)| rect.contains(p))
        .map(|(_, v)| v)
        .collect();
    if selected.is_empty() {
        return Err(CoreError::invalid("occupation_histogram: field does not cover rect"));
    }
    let bw = match bandwidth {
        Some(b) => b,
        None => {
            let b = scott_bandwidth(&selected, d);
            if b <= 0.0 {
                return Err(CoreError::invalid(
                    "occupation_histogram: degenerate sample, pass an explicit bandwidth",
                ));
            }
            b
        }
    };
    let lo = match range_lo {
        Some(lo) => {
            if lo.len() != d {
                return Err(CoreError::invalid("occupation_histogram: range dimension mismatch"));
            }
            lo
        }
        None => (0..d)
            .map(|j| {
                let min = selected.iter().map(|v| v[j]).fold(f64::INFINITY, f64::min);
                let max = selected.iter().map(|v| v[j]).fold(f64::NEG_INFINITY, f64::max);
                0.5 * (min + max) - 0.5 * bins_per_axis as f64 * bw
            })
            .collect(),
    };

    let cell_vol = field.time_cell_volume();
    let mut counts = vec![0u64; bins_per_axis.pow(d as u32)];
    let mut overflow = 0u64;
    'outer: for v in &selected {
        let mut flat = 0usize;
        for j in 0..d {
            let idx = (v[j] - lo[j]) / bw;
            if idx < 0.0 || idx >= bins_per_axis as f64 {
                overflow += 1;
                continue 'outer;
            }
            flat = flat * bins_per_axis + idx as usize;
        }
        counts[flat] += 1;
    }
    let inv_bwd = bw.powi(-(d as i32));
    let density: Vec<f64> = counts.iter().map(|&c| c as f64 * cell_vol * inv_bwd).collect();
    let total_mass = selected.len() as f64 * cell_vol;
    let overflow_mass = overflow as f64 * cell_vol;
    Ok(LocalTimeHistogram {
        rect: rect.clone(),
        d,
        lo,
        bandwidth: bw,
        bins_per_axis,
        density,
        overflow_mass,
        overflow_flag: overflow_mass > 0.01 * total_mass,
        time_cell_volume: cell_vol,
        total_time_mass: total_mass,
    })
}

/// Gaussian-smoothed occupation estimator
/// `(2 pi)^{-d} (2 pi k)^{d/2} int_rect exp(-k |X(t) - x|^2 / 2) dt`
/// as a Riemann sum over the evaluation lattice.
pub fn smoothed_local_time(field: &FieldSample, rect: &Rect, x: &[f64], k: f64) -> Result<f64> {
    let d = field.meta.d;
    if k <= 0.0 {
        return Err(CoreError::invalid("smoothed_local_time: k must be positive"));
    }
    if x.len() != d {
        return Err(CoreError::invalid("smoothed_local_time: x dimension mismatch"));
    }
    let cell_vol = field.time_cell_volume();
    let mut acc = 0.0;
    for (p, v) in field.points.iter().zip(&field.values) {
        if !rect.contains(p) {
            continue;
        }
        let sq: f64 = v.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        acc += (-0.5 * k * sq).exp() * cell_vol;
    }
    let tau = std::f64::consts::TAU;
    Ok(tau.powi(-(d as i32)) * (tau * k).powf(d as f64 / 2.0) * acc)
}

/// The local gauge `phi(r) = r^beta (log log 1/r)^{N - beta}`, defined for
/// `r < 1/e`.
pub fn scaling_gauge(r: f64, beta: f64, n_dims: usize) -> Result<f64> {
    if !(r > 0.0 && r < (-1.0f64).exp()) {
        return Err(CoreError::invalid(format!("scaling_gauge: need 0 < r < 1/e, got {r}")));
    }
    let ll = (1.0 / r).ln().ln();
    Ok(r.powf(beta) * ll.powf(n_dims as f64 - beta))
}

/// Per-scale statistics with a fitted log-log slope and the theoretical
/// exponent it is compared against.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingReport {
    pub scales: Vec<f64>,
    pub statistics: Vec<f64>,
    pub fitted_slope: f64,
    pub slope_stderr: f64,
    pub theory_exponent: f64,
    pub tolerance: f64,
    /// Moment probe: `slope >= theory - tol`; Hoelder probe: ratio trend
    /// does not grow as the radius shrinks.
    pub consistent: bool,
    /// 95th percentile of the per-replicate max ratio (Hoelder probe only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percentile95: Option<f64>,
    /// Recorded midpoint of the admissible kappa_n interval.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_choice: Option<f64>,
    pub replicates: usize,
}

/// Configuration for the moment-scaling probe of `E[L(x, I_{a, delta})^n]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentProbeConfig {
    pub spec: HurstSpec,
    pub alpha: f64,
    pub d: usize,
    pub n: usize,
    /// Rectangle edge lengths, decreasing, at least 4 of them.
    pub deltas: Vec<f64>,
    pub replicates: usize,
    pub x: Vec<f64>,
    /// Lower corner `a` of the probed rectangles.
    pub corner: Vec<f64>,
    /// Evaluation points per axis on the largest rectangle.
    pub eval_density: usize,
    pub spacing: f64,
    pub truncation_l: f64,
    pub seed: RngStream,
    pub bandwidth: Option<f64>,
    pub max_cells: usize,
    pub c_norm: f64,
    pub slope_tolerance: f64,
}

fn validate_scales(scales: &[f64]) -> Result<()> {
    if scales.len() < 4 {
        return Err(CoreError::invalid("scaling probe: need at least 4 scales"));
    }
    if scales.windows(2).any(|w| w[1] >= w[0]) || scales.iter().any(|&s| s <= 0.0) {
        return Err(CoreError::invalid("scaling probe: scales must be positive and decreasing"));
    }
    Ok(())
}

/// Estimate `L(x, rect)` from one realized field by box counting at `x`.
fn boxed_local_time(
    field: &FieldSample,
    keep: impl Fn(&[f64]) -> bool,
    x: &[f64],
    bw: f64,
) -> f64 {
    let d = field.meta.d;
    let mut hits = 0u64;
    for (p, v) in field.points.iter().zip(&field.values) {
        if !keep(p) {
            continue;
        }
        if v.iter().zip(x).all(|(a, b)| (a - b).abs() <= 0.5 * bw) {
            hits += 1;
        }
    }
    hits as f64 * field.time_cell_volume() / bw.powi(d as i32)
}

/// Monte Carlo probe of the moment bound `E[L^n] <= c delta^{n beta_bar}`:
/// fits the empirical log-log slope and reports whether it stays above the
/// theoretical exponent minus the tolerance (a bound consistency check, not
/// an equality claim).
pub fn moment_scaling_probe(cfg: &MomentProbeConfig) -> Result<ScalingReport> {
    let n_dims = cfg.spec.dims();
    if n_dims > 2 {
        return Err(CoreError::invalid("moment probe: N <= 2 at desk scale"));
    }
    if cfg.n > 3 {
        return Err(CoreError::invalid("moment probe: moment order n <= 3"));
    }
    validate_scales(&cfg.deltas)?;
    if cfg.corner.len() != n_dims || cfg.x.len() != cfg.d {
        return Err(CoreError::invalid("moment probe: corner/x dimension mismatch"));
    }
    let delta_max = cfg.deltas[0];
    let rect_max = Rect::new(
        cfg.corner.clone(),
        cfg.corner.iter().map(|a| a + delta_max).collect(),
    )?;

    // Theory exponent n * beta_bar over the largest probed rectangle. The
    // rect for beta_bar must avoid the origin where the index may be
    // undefined; nudge the corner inward if needed.
    let theory_rect = Rect::new(
        cfg.corner.iter().map(|&a| a.max(1e-9)).collect(),
        cfg.corner.iter().map(|a| a + delta_max).collect(),
    )?;
    let bbar = beta_bar(&cfg.spec, &theory_rect, cfg.d, 5)?;
    let theory_exponent = cfg.n as f64 * bbar;

    let mid: Vec<f64> = cfg.corner.iter().map(|a| a + 0.5 * delta_max).collect();
    let kappa_choice = exponent_report(&cfg.spec.eval(&mid)?, cfg.d, cfg.n.max(1))
        .ok()
        .map(|r| r.kappa_choice);

    if cfg.n == 0 {
        // E[L^0] = 1 at every scale.
        return Ok(ScalingReport {
            scales: cfg.deltas.clone(),
            statistics: vec![1.0; cfg.deltas.len()],
            fitted_slope: 0.0,
            slope_stderr: 0.0,
            theory_exponent: 0.0,
            tolerance: cfg.slope_tolerance,
            consistent: true,
            percentile95: None,
            kappa_choice,
            replicates: cfg.replicates,
        });
    }

    let geometry =
        GridGeometry::covering(cfg.truncation_l, &rect_max.upper, cfg.spacing)?;
    let per_rep: Vec<Result<Vec<f64>>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|rep| -> Result<Vec<f64>> {
            let master = cfg.seed.substream(rep as u64 * cfg.d as u64);
            let grids =
                build_component_grids(&geometry, cfg.alpha, master, cfg.d, cfg.max_cells)?;
            let field =
                synthesize_field(&cfg.spec, &rect_max, cfg.eval_density, &grids, cfg.c_norm)?;
            let mut row = Vec::with_capacity(cfg.deltas.len());
            for &delta in &cfg.deltas {
                let keep = |p: &[f64]| {
                    p.iter().zip(&cfg.corner).all(|(t, a)| *t >= *a && *t <= *a + delta)
                };
                let bw = match cfg.bandwidth {
                    Some(b) => b,
                    None => {
                        let sel: Vec<&Vec<f64>> = field
                            .points
                            .iter()
                            .zip(&field.values)
                            .filter(|(p, _)| keep(p))
                            .map(|(_, v)| v)
                            .collect();
                        if sel.len() < 8 {
                            return Err(CoreError::invalid(
                                "moment probe: too few evaluation points in smallest rect",
                            ));
                        }
                        let b = scott_bandwidth(&sel, cfg.d);
                        if b <= 0.0 {
                            return Err(CoreError::invalid("moment probe: degenerate bandwidth"));
                        }
                        b
                    }
                };
                let l_hat = boxed_local_time(&field, keep, &cfg.x, bw);
                row.push(l_hat.powi(cfg.n as i32));
            }
            Ok(row)
        })
        .collect();

    let mut stats = vec![0.0f64; cfg.deltas.len()];
    let mut count = 0usize;
    for row in per_rep {
        let row = row?;
        for (s, v) in stats.iter_mut().zip(row) {
            *s += v;
        }
        count += 1;
    }
    for s in stats.iter_mut() {
        *s /= count as f64;
    }
    if stats.iter().any(|&s| s <= 0.0) {
        return Err(CoreError::McVarianceTooHigh(
            "moment probe: empty moment estimate at some scale; increase replicates".into(),
        ));
    }

    let (slope, stderr) = log_log_slope(&cfg.deltas, &stats)?;
    if stderr > 0.2 {
        return Err(CoreError::McVarianceTooHigh(format!(
            "moment probe: slope stderr {stderr:.3} > 0.2; increase replicates"
        )));
    }
    Ok(ScalingReport {
        scales: cfg.deltas.clone(),
        statistics: stats,
        fitted_slope: slope,
        slope_stderr: stderr,
        theory_exponent,
        tolerance: cfg.slope_tolerance,
        consistent: slope >= theory_exponent - cfg.slope_tolerance,
        percentile95: None,
        kappa_choice,
        replicates: count,
    })
}

/// Configuration for the Hoelder gauge probe of
/// `L(x, U(t, r)) / phi_t(r)` over shrinking radii.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HolderProbeConfig {
    pub spec: HurstSpec,
    pub alpha: f64,
    pub d: usize,
    /// Ball center.
    pub t: Vec<f64>,
    /// Radii, decreasing, all < 1/e, at least 4.
    pub radii: Vec<f64>,
    pub replicates: usize,
    pub x: Vec<f64>,
    pub eval_density: usize,
    pub spacing: f64,
    pub truncation_l: f64,
    pub seed: RngStream,
    pub bandwidth: Option<f64>,
    pub max_cells: usize,
    pub c_norm: f64,
    /// Allowed downward slope of the mean ratio in log r before the
    /// boundedness trend is declared violated.
    pub growth_tolerance: f64,
}

/// Probe the local Hoelder condition: per replicate, the max over radii of
/// `L(x, U(t, r)) / phi_t(r)`; reports the empirical 95th percentile as the
/// fitted constant and checks the ratio does not grow as `r` shrinks.
pub fn holder_scaling_probe(cfg: &HolderProbeConfig) -> Result<ScalingReport> {
    let n_dims = cfg.spec.dims();
    validate_scales(&cfg.radii)?;
    if cfg.radii[0] >= (-1.0f64).exp() {
        return Err(CoreError::invalid("holder probe: radii must be < 1/e"));
    }
    if cfg.t.len() != n_dims || cfg.x.len() != cfg.d {
        return Err(CoreError::invalid("holder probe: t/x dimension mismatch"));
    }
    let r_max = cfg.radii[0];
    if cfg.t.iter().any(|&tl| tl - r_max < 0.0) {
        return Err(CoreError::invalid("holder probe: ball must stay inside R_+^N"));
    }
    let rect = Rect::new(
        cfg.t.iter().map(|tl| tl - r_max).collect(),
        cfg.t.iter().map(|tl| tl + r_max).collect(),
    )?;

    let h_t = cfg.spec.eval(&cfg.t)?;
    let identity: Vec<usize> = (0..n_dims).collect();
    let beta = beta_exponent(&h_t, cfg.d, &identity)?;
    let gauges: Vec<f64> = cfg
        .radii
        .iter()
        .map(|&r| scaling_gauge(r, beta, n_dims))
        .collect::<Result<_>>()?;

    let geometry = GridGeometry::covering(cfg.truncation_l, &rect.upper, cfg.spacing)?;
    let per_rep: Vec<Result<Vec<f64>>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|rep| -> Result<Vec<f64>> {
            let master = cfg.seed.substream(rep as u64 * cfg.d as u64);
            let grids =
                build_component_grids(&geometry, cfg.alpha, master, cfg.d, cfg.max_cells)?;
            let field =
                synthesize_field(&cfg.spec, &rect, cfg.eval_density, &grids, cfg.c_norm)?;
            let bw = match cfg.bandwidth {
                Some(b) => b,
                None => {
                    let all: Vec<&Vec<f64>> = field.values.iter().collect();
                    let b = scott_bandwidth(&all, cfg.d);
                    if b <= 0.0 {
                        return Err(CoreError::invalid("holder probe: degenerate bandwidth"));
                    }
                    b
                }
            };
            let mut ratios = Vec::with_capacity(cfg.radii.len());
            for (&r, &gauge) in cfg.radii.iter().zip(&gauges) {
                let keep = |p: &[f64]| {
                    p.iter().zip(&cfg.t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() < r * r
                };
                ratios.push(boxed_local_time(&field, keep, &cfg.x, bw) / gauge);
            }
            Ok(ratios)
        })
        .collect();

    let mut per_radius: Vec<Vec<f64>> = vec![Vec::new(); cfg.radii.len()];
    let mut max_ratios = Vec::new();
    for row in per_rep {
        let row = row?;
        max_ratios.push(row.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        for (bucket, v) in per_radius.iter_mut().zip(row) {
            bucket.push(v);
        }
    }
    let stats: Vec<f64> = per_radius.iter().map(|b| mean(b)).collect();
    if stats.iter().any(|&s| s <= 0.0) {
        return Err(CoreError::McVarianceTooHigh(
            "holder probe: empty ratio estimate at some radius; increase replicates".into(),
        ));
    }
    let (slope, stderr) = log_log_slope(&cfg.radii, &stats)?;
    // Ratio growing as r -> 0 shows up as a negative slope against r.
    let consistent = slope >= -cfg.growth_tolerance;
    Ok(ScalingReport {
        scales: cfg.radii.clone(),
        statistics: stats,
        fitted_slope: slope,
        slope_stderr: stderr,
        theory_exponent: beta,
        tolerance: cfg.growth_tolerance,
        consistent,
        percentile95: Some(percentile(&max_ratios, 0.95)),
        kappa_choice: exponent_report(&h_t, cfg.d, 1).ok().map(|r| r.kappa_choice),
        replicates: max_ratios.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_measure_grid, eval_lattice};

    fn constant_field(value: f64, reps_points: usize) -> FieldSample {
        let rect = Rect::new(vec![0.0], vec![1.0]).unwrap();
        let points = eval_lattice(&rect, reps_points);
        let values = vec![vec![value]; points.len()];
        FieldSample {
            points,
            values,
            meta: crate::field::FieldMeta {
                alpha: 2.0,
                d: 1,
                spacing: 0.1,
                truncation_lower: vec![-1.0],
                streams: vec![RngStream::new(0, 0)],
                c_norm: 1.0,
                rect,
                eval_density: reps_points,
            },
        }
    }

    fn brownian_field(seed: u64, stream: u64, density: usize) -> FieldSample {
        let spec = HurstSpec::constant(vec![0.5]).unwrap();
        let rect = Rect::new(vec![0.0], vec![1.0]).unwrap();
        let geom = GridGeometry::covering(0.5, &[1.0], 1.0 / (2.0 * density as f64)).unwrap();
        let grid = build_measure_grid(geom, 2.0, RngStream::new(seed, stream), 10_000_000).unwrap();
        synthesize_field(&spec, &rect, density, &[grid], 1.0).unwrap()
    }

    /// Rescale to unit-variance components: the synthesized h=1/2 field has
    /// Var X(t) = 2t under the norm convention, so X / sqrt(2) is standard.
    fn standardized(mut f: FieldSample, factor: f64) -> FieldSample {
        for v in f.values.iter_mut() {
            for x in v.iter_mut() {
                *x *= factor;
            }
        }
        f
    }

    #[test]
    fn point_mass_density() {
        let field = constant_field(0.0, 100);
        let rect = field.meta.rect.clone();
        let hist = occupation_histogram(&field, &rect, 11, Some(0.05), Some(vec![-0.275])).unwrap();
        let at_zero = hist.local_time_estimate(&[0.0]).unwrap();
        assert!((at_zero - 1.0 / 0.05).abs() < 1e-9, "{at_zero}");
        let away = hist.local_time_estimate(&[0.2]).unwrap();
        assert_eq!(away, 0.0);
        assert!(hist.local_time_estimate(&[99.0]).is_err());
    }

    #[test]
    fn two_component_histogram_indexing() {
        // A constant 2-component field puts all mass in one planar bin.
        let rect = Rect::new(vec![0.0], vec![1.0]).unwrap();
        let points = eval_lattice(&rect, 64);
        let values = vec![vec![0.3, -0.2]; points.len()];
        let field = FieldSample {
            points,
            values,
            meta: crate::field::FieldMeta {
                alpha: 2.0,
                d: 2,
                spacing: 0.1,
                truncation_lower: vec![-1.0],
                streams: vec![RngStream::new(0, 0)],
                c_norm: 1.0,
                rect: rect.clone(),
                eval_density: 64,
            },
        };
        let bw = 0.1;
        let hist =
            occupation_histogram(&field, &rect, 16, Some(bw), Some(vec![-0.45, -0.95])).unwrap();
        let at = hist.local_time_estimate(&[0.3, -0.2]).unwrap();
        assert!((at - 1.0 / (bw * bw)).abs() < 1e-9, "{at}");
        assert_eq!(hist.local_time_estimate(&[0.3, 0.4]).unwrap(), 0.0);
        assert_eq!(hist.local_time_estimate(&[-0.3, -0.2]).unwrap(), 0.0);
        let mass = hist.binned_mass() + hist.overflow_mass;
        assert!((mass - 1.0).abs() < 1e-9);
        // Smoothed estimator at the field value: (2 pi k)^{d/2} (2 pi)^{-d} vol.
        let k = 25.0;
        let v = smoothed_local_time(&field, &rect, &[0.3, -0.2], k).unwrap();
        let tau = std::f64::consts::TAU;
        let expect = tau.powi(-2) * (tau * k).powf(1.0) * 1.0;
        assert!((v - expect).abs() < 1e-12 * expect, "{v} vs {expect}");
    }

    #[test]
    fn mass_conservation() {
        let field = brownian_field(17, 0, 256);
        let rect = field.meta.rect.clone();
        let hist = occupation_histogram(&field, &rect, 64, None, None).unwrap();
        let mass = hist.binned_mass() + hist.overflow_mass;
        assert!((mass - rect.volume()).abs() < 1e-6 * rect.volume(), "mass {mass}");
    }

    #[test]
    fn additivity_over_partition() {
        let field = brownian_field(23, 0, 256);
        let whole = Rect::new(vec![0.0], vec![1.0]).unwrap();
        let left = Rect::new(vec![0.0], vec![0.5]).unwrap();
        let right = Rect::new(vec![0.5], vec![1.0]).unwrap();
        let bw = 0.05;
        let lo = vec![-4.0];
        let hw = occupation_histogram(&field, &whole, 160, Some(bw), Some(lo.clone())).unwrap();
        let hl = occupation_histogram(&field, &left, 160, Some(bw), Some(lo.clone())).unwrap();
        let hr = occupation_histogram(&field, &right, 160, Some(bw), Some(lo)).unwrap();
        // Centers-aligned split: every evaluation point lands in exactly one half.
        for (dw, (dl, dr)) in
            hw.density.iter().zip(hl.density.iter().zip(hr.density.iter()))
        {
            assert!((dw - (dl + dr)).abs() < 1e-12);
        }
    }

    #[test]
    fn brownian_density_at_zero() {
        // Standard Brownian motion: E L(0, [0,1]) = sqrt(2/pi).
        let reps = 400;
        let estimates: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|k| {
                let field =
                    standardized(brownian_field(31, k as u64, 256), std::f64::consts::FRAC_1_SQRT_2);
                let rect = field.meta.rect.clone();
                let hist = occupation_histogram(&field, &rect, 64, None, None).unwrap();
                match hist.local_time_estimate(&[0.0]) {
                    Ok(v) => v,
                    Err(_) => 0.0,
                }
            })
            .collect();
        let m = mean(&estimates);
        let target = (2.0 / std::f64::consts::PI).sqrt();
        assert!((m - target).abs() < 0.1 * target, "mean {m} vs {target}");
    }

    #[test]
    fn smoothed_matches_formula_for_constant_field() {
        let field = constant_field(0.7, 50);
        let rect = field.meta.rect.clone();
        let k = 40.0;
        let v = smoothed_local_time(&field, &rect, &[0.7], k).unwrap();
        let tau = std::f64::consts::TAU;
        let expect = tau.powi(-1) * (tau * k).sqrt() * rect.volume();
        assert!((v - expect).abs() < 1e-12 * expect);
        // Field bounded away from x: Gaussian tail kills the estimate.
        let far = smoothed_local_time(&field, &rect, &[3.0], 400.0).unwrap();
        assert!(far < 1e-6);
    }

    #[test]
    fn smoothed_cross_checks_histogram() {
        // Bandwidth-matched comparison on the same realizations.
        let reps = 60;
        let mut hist_means = Vec::new();
        let mut smooth_means = Vec::new();
        for k in 0..reps {
            let field = brownian_field(41, k, 256);
            let rect = field.meta.rect.clone();
            let bw = 0.12f64;
            let hist = occupation_histogram(&field, &rect, 64, Some(bw), Some(vec![-3.84])).unwrap();
            hist_means.push(hist.local_time_estimate(&[0.0]).unwrap());
            // Match the box kernel's variance: 1/k = bw^2 / 12.
            let smooth = smoothed_local_time(&field, &rect, &[0.0], 12.0 / (bw * bw)).unwrap();
            smooth_means.push(smooth);
        }
        let h = mean(&hist_means);
        let s = mean(&smooth_means);
        assert!((h - s).abs() < 0.15 * h.max(s), "hist {h} smooth {s}");
    }

    #[test]
    fn scaling_gauge_value() {
        let r = (-std::f64::consts::E).exp();
        let phi = scaling_gauge(r, 0.5, 1).unwrap();
        assert!((phi - (-std::f64::consts::E / 2.0).exp()).abs() < 1e-12);
        assert!((phi - 0.2567).abs() < 2e-4);
        assert!(scaling_gauge(0.5, 0.5, 1).is_err());
    }

    #[test]
    fn moment_probe_zeroth_moment_is_flat() {
        let cfg = MomentProbeConfig {
            spec: HurstSpec::constant(vec![0.5]).unwrap(),
            alpha: 2.0,
            d: 1,
            n: 0,
            deltas: vec![0.5, 0.25, 0.125, 0.0625],
            replicates: 4,
            x: vec![0.0],
            corner: vec![0.0],
            eval_density: 64,
            spacing: 1.0 / 128.0,
            truncation_l: 0.5,
            seed: RngStream::new(1, 0),
            bandwidth: None,
            max_cells: 10_000_000,
            c_norm: 1.0,
            slope_tolerance: 0.1,
        };
        let rep = moment_scaling_probe(&cfg).unwrap();
        assert_eq!(rep.fitted_slope, 0.0);
        assert!(rep.consistent);
    }

    #[test]
    fn estimator_consistency_trend() {
        // Halving the bandwidth and doubling grid density moves the Brownian
        // estimate toward the analytic value on average.
        let target = (2.0 / std::f64::consts::PI).sqrt();
        let reps = 500usize;
        let levels = [(128usize, 0.30f64), (256, 0.15), (512, 0.075)];
        let mut errs = Vec::new();
        for (li, (density, bw)) in levels.iter().enumerate() {
            let estimates: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|k| {
                    let field = standardized(
                        brownian_field(600 + li as u64, k as u64, *density),
                        std::f64::consts::FRAC_1_SQRT_2,
                    );
                    let rect = field.meta.rect.clone();
                    boxed_local_time(&field, |p| rect.contains(p), &[0.0], *bw)
                })
                .collect();
            errs.push((mean(&estimates) - target).abs());
        }
        assert!(
            errs[2] < errs[0] + 0.02,
            "estimate error did not shrink: {errs:?}"
        );
    }
}
