//! Discretized stable random measure and Riemann-sum synthesis of the
//! moving-average fields, plus the component decomposition over the
//! rectangle split of `[0, u]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::hurst::{HurstSpec, Rect};
use crate::kernel::{pow_plus, LinearCombination, NormDomain, QuadratureSpec};
use crate::rng::RngStream;
use crate::stable::standard_sas;

/// Lattice geometry for the measure discretization: cells of side `spacing`
/// covering `[lower_l, lower_l + counts_l * spacing]` per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub lower: Vec<f64>,
    pub spacing: f64,
    pub counts: Vec<usize>,
}

impl GridGeometry {
    /// Geometry covering `[-truncation_l, upper_l]` per axis.
    pub fn covering(truncation_l: f64, upper: &[f64], spacing: f64) -> Result<Self> {
        if spacing <= 0.0 || truncation_l <= 0.0 {
            return Err(CoreError::invalid("geometry: spacing and truncation must be positive"));
        }
        let lower: Vec<f64> = upper.iter().map(|_| -truncation_l).collect();
        let counts: Vec<usize> = upper
            .iter()
            .map(|&u| (((u + truncation_l) / spacing).ceil() as usize).max(1))
            .collect();
        Ok(GridGeometry { lower, spacing, counts })
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    pub fn total_cells(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dims() as i32)
    }

    pub fn axis_upper(&self, l: usize) -> f64 {
        self.lower[l] + self.counts[l] as f64 * self.spacing
    }
}

/// A realized stable random measure on the lattice: one independent
/// `SaS(cell_volume^{1/alpha})` increment per cell, in row-major order.
#[derive(Clone, Debug)]
pub struct MeasureGrid {
    pub geometry: GridGeometry,
    pub alpha: f64,
    pub stream: RngStream,
    pub increments: Vec<f64>,
}

/// Build the lattice of measure increments. Fails fast when the lattice
/// would exceed `max_cells`.
pub fn build_measure_grid(
    geometry: GridGeometry,
    alpha: f64,
    stream: RngStream,
    max_cells: usize,
) -> Result<MeasureGrid> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(CoreError::invalid("measure grid: alpha must lie in (0, 2]"));
    }
    let total = geometry.total_cells();
    if total > max_cells {
        return Err(CoreError::BudgetExceeded { requested: total, budget: max_cells });
    }
    let scale = geometry.cell_volume().powf(1.0 / alpha);
    let mut rng = stream.rng();
    let increments = (0..total).map(|_| scale * standard_sas(&mut rng, alpha)).collect();
    Ok(MeasureGrid { geometry, alpha, stream, increments })
}

impl MeasureGrid {
    /// Coarsen by summing `factor^N` fine cells into each coarse cell.
    /// The coarse increments are exactly the sums of the fine ones, so a
    /// refinement family built from one fine grid is pathwise coupled.
    pub fn aggregate(&self, factor: usize) -> Result<MeasureGrid> {
        if factor < 2 {
            return Err(CoreError::invalid("aggregate: factor must be >= 2"));
        }
        if self.geometry.counts.iter().any(|c| c % factor != 0) {
            return Err(CoreError::invalid("aggregate: counts must be divisible by factor"));
        }
        let n = self.geometry.dims();
        let coarse_counts: Vec<usize> = self.geometry.counts.iter().map(|c| c / factor).collect();
        let coarse_geometry = GridGeometry {
            lower: self.geometry.lower.clone(),
            spacing: self.geometry.spacing * factor as f64,
            counts: coarse_counts.clone(),
        };
        let mut out = vec![0.0f64; coarse_geometry.total_cells()];
        let fine_counts = &self.geometry.counts;
        // Row-major strides for both lattices.
        let stride = |counts: &[usize]| {
            let mut s = vec![1usize; n];
            for l in (0..n.saturating_sub(1)).rev() {
                s[l] = s[l + 1] * counts[l + 1];
            }
            s
        };
        let fs = stride(fine_counts);
        let cs = stride(&coarse_counts);
        for (flat, &inc) in self.increments.iter().enumerate() {
            let mut coarse_flat = 0usize;
            for l in 0..n {
                let idx = (flat / fs[l]) % fine_counts[l];
                coarse_flat += (idx / factor) * cs[l];
            }
            out[coarse_flat] += inc;
        }
        Ok(MeasureGrid {
            geometry: coarse_geometry,
            alpha: self.alpha,
            stream: self.stream,
            increments: out,
        })
    }
}

/// Build `d` independent component measures from consecutive streams of one
/// master stream (component k uses `stream + k`).
pub fn build_component_grids(
    geometry: &GridGeometry,
    alpha: f64,
    master: RngStream,
    d: usize,
    max_cells: usize,
) -> Result<Vec<MeasureGrid>> {
    (0..d)
        .map(|k| build_measure_grid(geometry.clone(), alpha, master.substream(k as u64), max_cells))
        .collect()
}

/// Synthesis metadata carried with every sample for reproducibility.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldMeta {
    pub alpha: f64,
    pub d: usize,
    pub spacing: f64,
    pub truncation_lower: Vec<f64>,
    pub streams: Vec<RngStream>,
    pub c_norm: f64,
    pub rect: Rect,
    pub eval_density: usize,
}

/// Realized field values on an evaluation lattice; `values[p]` holds the `d`
/// components at `points[p]`.
#[derive(Clone, Debug)]
pub struct FieldSample {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    pub meta: FieldMeta,
}

impl FieldSample {
    /// Lebesgue volume of one evaluation cell.
    pub fn time_cell_volume(&self) -> f64 {
        let r = &self.meta.rect;
        (0..r.dims())
            .map(|l| (r.upper[l] - r.lower[l]) / self.meta.eval_density as f64)
            .product()
    }
}

/// Evaluation lattice: cell centers of `eval_density^N` cells in `rect`.
pub fn eval_lattice(rect: &Rect, eval_density: usize) -> Vec<Vec<f64>> {
    let n = rect.dims();
    let mut pts = Vec::with_capacity(eval_density.pow(n as u32));
    let mut idx = vec![0usize; n];
    loop {
        let p: Vec<f64> = (0..n)
            .map(|l| {
                let w = (rect.upper[l] - rect.lower[l]) / eval_density as f64;
                rect.lower[l] + (idx[l] as f64 + 0.5) * w
            })
            .collect();
        pts.push(p);
        let mut l = n;
        loop {
            if l == 0 {
                return pts;
            }
            l -= 1;
            idx[l] += 1;
            if idx[l] < eval_density {
                break;
            }
            idx[l] = 0;
        }
    }
}

/// Exact cell averages of the kernel factor
/// `(u - v)_+^e - (-v)_+^e` over the axis cells. Averaging (rather than
/// midpoint evaluation) keeps the cells containing the singular abscissae
/// finite and is exact for the factorized kernel.
fn axis_factor_averages(geometry: &GridGeometry, l: usize, u_l: f64, e: f64) -> Vec<f64> {
    let s = geometry.spacing;
    let lo = geometry.lower[l];
    let inv = 1.0 / ((1.0 + e) * s);
    (0..geometry.counts[l])
        .map(|i| {
            let a = lo + i as f64 * s;
            let b = a + s;
            let first = (pow_plus(u_l - a, 1.0 + e) - pow_plus(u_l - b, 1.0 + e)) * inv;
            let second = (pow_plus(-a, 1.0 + e) - pow_plus(-b, 1.0 + e)) * inv;
            first - second
        })
        .collect()
}

/// Contract per-axis factor vectors against the increment lattice in fixed
/// row-major order.
fn contract(increments: &[f64], facs: &[Vec<f64>]) -> f64 {
    if facs.len() == 1 {
        return facs[0].iter().zip(increments).map(|(w, m)| w * m).sum();
    }
    let stride = increments.len() / facs[0].len();
    let mut acc = 0.0;
    for (i, &w) in facs[0].iter().enumerate() {
        if w != 0.0 {
            acc += w * contract(&increments[i * stride..(i + 1) * stride], &facs[1..]);
        }
    }
    acc
}

/// Synthesize the `(N, d)` field on the evaluation lattice of `rect` by
/// contracting the kernel against the shared measure increments.
pub fn synthesize_field(
    spec: &HurstSpec,
    rect: &Rect,
    eval_density: usize,
    measures: &[MeasureGrid],
    c_norm: f64,
) -> Result<FieldSample> {
    if measures.is_empty() {
        return Err(CoreError::invalid("synthesize_field: need at least one component measure"));
    }
    let n = spec.dims();
    if rect.dims() != n || measures.iter().any(|m| m.geometry.dims() != n) {
        return Err(CoreError::invalid("synthesize_field: dimension mismatch"));
    }
    let alpha = measures[0].alpha;
    let geometry = &measures[0].geometry;
    if measures.iter().any(|m| m.alpha != alpha || &m.geometry != geometry) {
        return Err(CoreError::invalid("synthesize_field: component measures must share geometry"));
    }
    for l in 0..n {
        if rect.upper[l] > geometry.axis_upper(l) + 1e-9 {
            return Err(CoreError::invalid(format!(
                "synthesize_field: rect axis {l} exceeds measure lattice ({} > {})",
                rect.upper[l],
                geometry.axis_upper(l)
            )));
        }
    }

    let points = eval_lattice(rect, eval_density);
    let values: Vec<Vec<f64>> = points
        .par_iter()
        .map(|u| -> Result<Vec<f64>> {
            let h = spec.eval(u)?;
            let facs: Vec<Vec<f64>> = (0..n)
                .map(|l| axis_factor_averages(geometry, l, u[l], h[l] - 1.0 / alpha))
                .collect();
            Ok(measures.iter().map(|m| c_norm * contract(&m.increments, &facs)).collect())
        })
        .collect::<Result<_>>()?;

    Ok(FieldSample {
        points,
        values,
        meta: FieldMeta {
            alpha,
            d: measures.len(),
            spacing: geometry.spacing,
            truncation_lower: geometry.lower.clone(),
            streams: measures.iter().map(|m| m.stream).collect(),
            c_norm,
            rect: rect.clone(),
            eval_density,
        },
    })
}

/// Split of the `[0, u]`-restricted field value into the corner, edge-strip
/// and bulk contributions over shared increments.
#[derive(Clone, Debug, Serialize)]
pub struct Decomposition {
    /// Value over all cells inside `(0, u]`.
    pub total: f64,
    /// Contribution of `[0, epsilon]^N`.
    pub y1: f64,
    /// Per-axis contributions of the strips with exactly one coordinate
    /// above epsilon.
    pub z: Vec<f64>,
    /// Contribution of the remaining `2^N - N - 1` sub-rectangles.
    pub y2: f64,
    pub reconstruction_rel_err: f64,
}

/// Decompose the `[0, u]` part of the field at a single point over one
/// component measure. Cells are classified by their midpoints; the identity
/// `total = y1 + sum z_l + y2` holds on the shared increments up to
/// accumulation rounding.
pub fn decompose_components(
    spec: &HurstSpec,
    u: &[f64],
    measure: &MeasureGrid,
    epsilon: f64,
    c_norm: f64,
) -> Result<Decomposition> {
    let n = spec.dims();
    if u.len() != n || measure.geometry.dims() != n {
        return Err(CoreError::invalid("decompose_components: dimension mismatch"));
    }
    if epsilon <= 0.0 || u.iter().any(|&x| x <= epsilon) {
        return Err(CoreError::invalid("decompose_components: need 0 < epsilon < u_l"));
    }
    let alpha = measure.alpha;
    let h = spec.eval(u)?;
    let geometry = &measure.geometry;
    let facs: Vec<Vec<f64>> =
        (0..n).map(|l| axis_factor_averages(geometry, l, u[l], h[l] - 1.0 / alpha)).collect();

    let strides = {
        let mut s = vec![1usize; n];
        for l in (0..n - 1).rev() {
            s[l] = s[l + 1] * geometry.counts[l + 1];
        }
        s
    };

    let mut total = 0.0;
    let mut y1 = 0.0;
    let mut z = vec![0.0f64; n];
    let mut y2 = 0.0;
    for (flat, &inc) in measure.increments.iter().enumerate() {
        let mut weight = 1.0;
        let mut inside = true;
        let mut above = 0usize;
        let mut above_axis = 0usize;
        for l in 0..n {
            let idx = (flat / strides[l]) % geometry.counts[l];
            let mid = geometry.lower[l] + (idx as f64 + 0.5) * geometry.spacing;
            if mid <= 0.0 || mid > u[l] {
                inside = false;
                break;
            }
            if mid > epsilon {
                above += 1;
                above_axis = l;
            }
            weight *= facs[l][idx];
        }
        if !inside || weight == 0.0 {
            continue;
        }
        let v = c_norm * weight * inc;
        total += v;
        match above {
            0 => y1 += v,
            1 => z[above_axis] += v,
            _ => y2 += v,
        }
    }
    let recon = y1 + z.iter().sum::<f64>() + y2;
    let denom = total.abs().max(1e-300);
    Ok(Decomposition {
        total,
        y1,
        z,
        y2,
        reconstruction_rel_err: (total - recon).abs() / denom,
    })
}

/// Quadrature verdict on the component-norm chain
/// `||sum a_j X||^alpha >= ||sum a_j Y||^alpha >= sum_l ||sum a_j Z_l||^alpha`.
#[derive(Clone, Debug, Serialize)]
pub struct ChainReport {
    pub x_pow: f64,
    pub y_pow: f64,
    pub z_pows: Vec<f64>,
    pub z_pow_sum: f64,
    pub holds: bool,
}

/// Evaluate the three quantities of the chain over their defining disjoint
/// domains and check the inequalities (up to quadrature tolerance).
pub fn component_norm_inequality_check(
    spec: &HurstSpec,
    comb: &LinearCombination,
    alpha: f64,
    quad: &QuadratureSpec,
    epsilon: f64,
    c_norm: f64,
) -> Result<ChainReport> {
    use crate::kernel::lalpha_norm_pow_on;
    let n = spec.dims();
    if comb.points.len() > 6 {
        return Err(CoreError::invalid("chain check: at most 6 points at desk scale"));
    }
    if epsilon <= 0.0 {
        return Err(CoreError::invalid("chain check: epsilon must be positive"));
    }
    let full = NormDomain::full(&comb.points);
    let upper = full.upper.clone();
    let x_pow = lalpha_norm_pow_on(comb, spec, alpha, quad, c_norm, &full)?;

    let y_domain = NormDomain { lower: vec![Some(0.0); n], upper: upper.clone() };
    let y_pow = lalpha_norm_pow_on(comb, spec, alpha, quad, c_norm, &y_domain)?;

    let mut z_pows = Vec::with_capacity(n);
    for l in 0..n {
        let lower: Vec<Option<f64>> =
            (0..n).map(|p| if p == l { Some(epsilon) } else { Some(0.0) }).collect();
        let upp: Vec<f64> = (0..n).map(|p| if p == l { upper[p] } else { epsilon }).collect();
        let dom = NormDomain { lower, upper: upp };
        z_pows.push(lalpha_norm_pow_on(comb, spec, alpha, quad, c_norm, &dom)?);
    }
    let z_pow_sum: f64 = z_pows.iter().sum();
    let tol = 5.0 * quad.target_rel_err * x_pow.max(1e-300);
    let holds = x_pow + tol >= y_pow && y_pow + tol >= z_pow_sum;
    Ok(ChainReport { x_pow, y_pow, z_pows, z_pow_sum, holds })
}
