//! The moving-average kernel, its normalizing constant, and L^alpha
//! (quasi)norms of finite linear combinations of field values.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::hurst::{HurstSpec, Rect};
use crate::quad::{integrate_axis, integrate_nd, AxisSpec, BreakPoint, Coord};
use crate::rng::RngStream;

/// Controls for the singular-integral quadratures.
///
/// Kernel-norm integrals are evaluated with compactified left tails and
/// power substitutions at the singular abscissae, so no domain truncation
/// enters here; `truncation_l` is the lattice cutoff used by field synthesis
/// and is carried along for provenance.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub truncation_l: f64,
    pub panels_per_axis: usize,
    pub singularity_split: bool,
    pub target_rel_err: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            truncation_l: 10.0,
            panels_per_axis: 2000,
            singularity_split: true,
            target_rel_err: 1e-6,
        }
    }
}

/// `x_+^e` with the indicator convention at `e = 0` and an infinite sentinel
/// exactly on a singular abscissa (`x = 0`, `e < 0`).
pub fn pow_plus(x: f64, e: f64) -> f64 {
    if x > 0.0 {
        x.powf(e)
    } else if x == 0.0 && e < 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// One axis factor `(u - v)_+^e - (-v)_+^e`, evaluated stably: when both
/// power terms are active their difference is taken through
/// `d0^e * expm1(e * ln1p(u / d0))`, which stays accurate for `|v|` far
/// beyond the scale where the naive subtraction cancels (the two terms agree
/// to within a relative `u/|v|`).
fn kernel_factor(u_l: f64, v: Coord, e: f64) -> f64 {
    let d1 = v.distance_from(u_l); // u_l - v
    let d0 = v.distance_from(0.0); // -v
    if d0 <= 0.0 {
        pow_plus(d1, e)
    } else if d1 <= 0.0 {
        -pow_plus(d0, e)
    } else {
        pow_plus(d0, e) * (e * (u_l / d0).ln_1p()).exp_m1()
    }
}

/// Moving-average kernel
/// `g(u, v) = c_norm * prod_l [ (u_l - v_l)_+^{h_l - 1/alpha} - (-v_l)_+^{h_l - 1/alpha} ]`.
///
/// Returns an infinite sentinel exactly at singular points; quadrature nodes
/// never land there.
pub fn kernel_g(h: &[f64], alpha: f64, u: &[f64], v: &[f64], c_norm: f64) -> f64 {
    debug_assert_eq!(h.len(), u.len());
    debug_assert_eq!(h.len(), v.len());
    let mut prod = c_norm;
    for l in 0..h.len() {
        let e = h[l] - 1.0 / alpha;
        let factor = kernel_factor(u[l], Coord::at(v[l]), e);
        prod *= factor;
        if !prod.is_finite() {
            return f64::INFINITY;
        }
        if prod == 0.0 {
            return 0.0;
        }
    }
    prod
}

/// Normalizing constant making the unit-corner field value have norm one:
/// `c = prod_l J_l^{-1/alpha}` with
/// `J_l = int_R |(1 - v)_+^{e_l} - (-v)_+^{e_l}|^alpha dv`, `e_l = h_l - 1/alpha`.
///
/// The `(0, 1)` piece is the exact `1/(alpha h_l)`; the negative half-line is
/// integrated with the tail compactified.
pub fn normalizing_constant(h: &[f64], alpha: f64, quad: &QuadratureSpec) -> Result<f64> {
    if h.iter().any(|&v| v <= 0.0 || v >= 1.0) {
        return Err(CoreError::invalid("normalizing_constant: h must lie in (0,1)^N"));
    }
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(CoreError::invalid("normalizing_constant: alpha must lie in (0, 2]"));
    }
    let mut c = 1.0;
    for &hl in h {
        let e = hl - 1.0 / alpha;
        let exact_piece = 1.0 / (alpha * hl);
        let f = move |v: Coord| kernel_factor(1.0, v, e).abs().powf(alpha);
        let upper_gamma = if quad.singularity_split && e < 0.0 { alpha * hl - 1.0 } else { 0.0 };
        let axis = AxisSpec {
            lower: None,
            upper: 0.0,
            breaks: vec![BreakPoint::singular(0.0, upper_gamma)],
            tail_decay: alpha * hl - 1.0 - alpha,
        };
        let left = integrate_axis(&f, &axis, quad.target_rel_err, 1e-300, quad.panels_per_axis)
            .require_converged("normalizing constant axis integral")?;
        c *= (exact_piece + left.value).powf(-1.0 / alpha);
    }
    Ok(c)
}

/// Kernel combination factor from anchored coordinates; the distance to a
/// panel's singular abscissa stays exact below one ulp of the position.
fn kernel_g_coord(h: &[f64], alpha: f64, u: &[f64], v: &[Coord]) -> f64 {
    let mut prod = 1.0;
    for l in 0..h.len() {
        let e = h[l] - 1.0 / alpha;
        prod *= kernel_factor(u[l], v[l], e);
        if prod == 0.0 {
            return 0.0;
        }
    }
    prod
}

/// Anchor point for the normalizing constant: the all-ones point, clamped
/// into the working rectangle when the spec's evaluator is not defined at 1.
pub fn norm_anchor(rect: &Rect) -> Vec<f64> {
    rect.lower.iter().zip(&rect.upper).map(|(a, b)| 1.0f64.clamp(*a, *b)).collect()
}

/// Normalizing constant for a spec on a rectangle, evaluated at the anchor.
/// Returns the anchor alongside the constant for provenance.
pub fn normalizing_constant_for(
    spec: &HurstSpec,
    rect: &Rect,
    alpha: f64,
    quad: &QuadratureSpec,
) -> Result<(Vec<f64>, f64)> {
    let anchor = norm_anchor(rect);
    let h = spec.eval(&anchor)?;
    let c = normalizing_constant(&h, alpha, quad)?;
    Ok((anchor, c))
}

/// A finite linear combination `sum_j a_j X(u^j)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearCombination {
    pub coefficients: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl LinearCombination {
    pub fn new(coefficients: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.len() != points.len() {
            return Err(CoreError::invalid("linear combination: need matching, nonempty lists"));
        }
        let n = points[0].len();
        if points.iter().any(|p| p.len() != n) {
            return Err(CoreError::invalid("linear combination: ragged point dimensions"));
        }
        if points.iter().flatten().any(|&x| x < 0.0) {
            return Err(CoreError::invalid("linear combination: points must lie in R_+^N"));
        }
        Ok(LinearCombination { coefficients, points })
    }

    pub fn single(point: Vec<f64>) -> Result<Self> {
        LinearCombination::new(vec![1.0], vec![point])
    }

    pub fn dims(&self) -> usize {
        self.points[0].len()
    }
}

/// Integration domain for a combination norm. `None` lower bounds extend to
/// `-infinity`; restricted boxes are used for the component fields.
#[derive(Clone, Debug)]
pub struct NormDomain {
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<f64>,
}

impl NormDomain {
    /// Full space: `(-inf, max_j u_l^j]` per axis (the kernel vanishes above).
    pub fn full(points: &[Vec<f64>]) -> Self {
        let n = points[0].len();
        let upper = (0..n)
            .map(|l| points.iter().map(|p| p[l]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        NormDomain { lower: vec![None; n], upper }
    }
}

/// Norm estimate together with its quadrature error report.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NormValue {
    pub value: f64,
    pub rel_err_est: f64,
    pub evals: u64,
}

/// Build the per-axis integration plans for a combination of kernels.
fn combination_axes(
    points: &[Vec<f64>],
    h_per_point: &[Vec<f64>],
    alpha: f64,
    domain: &NormDomain,
    split: bool,
) -> Vec<AxisSpec> {
    let n = points[0].len();
    (0..n)
        .map(|l| {
            let mut breaks = Vec::new();
            let h_min = h_per_point.iter().map(|h| h[l]).fold(f64::INFINITY, f64::min);
            let h_max = h_per_point.iter().map(|h| h[l]).fold(f64::NEG_INFINITY, f64::max);
            for (p, h) in points.iter().zip(h_per_point) {
                let gamma = if split && h[l] < 1.0 / alpha { alpha * h[l] - 1.0 } else { 0.0 };
                breaks.push(BreakPoint { at: p[l], gamma });
            }
            if domain.lower[l].is_none() {
                // The origin singularity only bites from the left.
                let gamma = if split && h_min < 1.0 / alpha { alpha * h_min - 1.0 } else { 0.0 };
                breaks.push(BreakPoint { at: 0.0, gamma });
            } else {
                breaks.push(BreakPoint::smooth(0.0));
            }
            AxisSpec {
                lower: domain.lower[l],
                upper: domain.upper[l],
                breaks,
                tail_decay: alpha * h_max - 1.0 - alpha,
            }
        })
        .collect()
}

/// L^alpha (quasi)norm of a combination over a restricted domain:
/// `( int_domain | sum_j a_j g^{H(u^j)}(u^j, v) |^alpha dv )^{1/alpha}`.
pub fn lalpha_norm_on(
    comb: &LinearCombination,
    spec: &HurstSpec,
    alpha: f64,
    quad: &QuadratureSpec,
    c_norm: f64,
    domain: &NormDomain,
) -> Result<NormValue> {
    if spec.dims() != comb.dims() {
        return Err(CoreError::invalid("lalpha_norm: spec/combination dimension mismatch"));
    }
    if quad.target_rel_err <= 0.0 {
        return Err(CoreError::invalid("lalpha_norm: target_rel_err must be positive"));
    }
    let h_per_point: Vec<Vec<f64>> =
        comb.points.iter().map(|p| spec.eval(p)).collect::<Result<_>>()?;

    if comb.coefficients.iter().all(|&a| a == 0.0) {
        return Ok(NormValue { value: 0.0, rel_err_est: 0.0, evals: 0 });
    }

    let points = &comb.points;
    let coeffs = &comb.coefficients;
    let axes = combination_axes(points, &h_per_point, alpha, domain, quad.singularity_split);
    if axes.iter().any(|ax| ax.lower.is_some_and(|lo| lo >= ax.upper)) {
        return Ok(NormValue { value: 0.0, rel_err_est: 0.0, evals: 0 });
    }

    let integrand = |v: &[Coord]| -> f64 {
        let mut s = 0.0;
        for (j, p) in points.iter().enumerate() {
            if coeffs[j] != 0.0 {
                s += coeffs[j] * kernel_g_coord(&h_per_point[j], alpha, p, v);
            }
        }
        s.abs().powf(alpha)
    };

    let r = integrate_nd(&integrand, &axes, quad.target_rel_err, 1e-300, quad.panels_per_axis);
    let r = r.require_converged("lalpha_norm")?;
    let value = c_norm * r.value.max(0.0).powf(1.0 / alpha);
    Ok(NormValue {
        value,
        rel_err_est: quad.target_rel_err,
        evals: r.evals,
    })
}

/// Norm over the whole space.
pub fn lalpha_norm(
    comb: &LinearCombination,
    spec: &HurstSpec,
    alpha: f64,
    quad: &QuadratureSpec,
    c_norm: f64,
) -> Result<NormValue> {
    let domain = NormDomain::full(&comb.points);
    lalpha_norm_on(comb, spec, alpha, quad, c_norm, &domain)
}

/// Raw `alpha`-power of the norm (the quantity the chain inequalities compare).
pub fn lalpha_norm_pow_on(
    comb: &LinearCombination,
    spec: &HurstSpec,
    alpha: f64,
    quad: &QuadratureSpec,
    c_norm: f64,
    domain: &NormDomain,
) -> Result<f64> {
    let nv = lalpha_norm_on(comb, spec, alpha, quad, c_norm, domain)?;
    Ok(nv.value.powf(alpha))
}

/// One pair in the increment scan.
#[derive(Clone, Debug, Serialize)]
pub struct IncrementPair {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub norm: f64,
    pub gauge: f64,
    pub ratio: f64,
}

/// Empirical envelope of `||X(u) - X(v)||_alpha / sum_l |u_l - v_l|^{h_l(u_hat)}`.
#[derive(Clone, Debug, Serialize)]
pub struct IncrementScanReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub pairs: Vec<IncrementPair>,
    pub skipped: usize,
}

/// Scan random point pairs in `rect`, evaluating the two-sided increment
/// gauge with `u_hat` fixed at the componentwise midpoint.
pub fn increment_ratio_scan(
    spec: &HurstSpec,
    rect: &Rect,
    alpha: f64,
    pairs: usize,
    quad: &QuadratureSpec,
    stream: RngStream,
    c_norm: f64,
) -> Result<IncrementScanReport> {
    if pairs == 0 {
        return Err(CoreError::invalid("increment_ratio_scan: pairs must be >= 1"));
    }
    let n = rect.dims();
    let mut rng = stream.rng();
    let mut candidates = Vec::with_capacity(pairs);
    let mut skipped = 0usize;
    let min_sep: f64 = 1e-9
        * rect
            .upper
            .iter()
            .zip(&rect.lower)
            .map(|(b, a)| b - a)
            .fold(f64::INFINITY, f64::min);
    while candidates.len() < pairs {
        let u: Vec<f64> =
            (0..n).map(|l| rng.gen_range(rect.lower[l]..rect.upper[l])).collect();
        let v: Vec<f64> =
            (0..n).map(|l| rng.gen_range(rect.lower[l]..rect.upper[l])).collect();
        let sep = u.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        if sep < min_sep {
            skipped += 1;
            if skipped > 100 * pairs {
                return Err(CoreError::invalid("increment_ratio_scan: degenerate rect"));
            }
            continue;
        }
        candidates.push((u, v));
    }

    let records: Vec<Result<IncrementPair>> = candidates
        .into_par_iter()
        .map(|(u, v)| {
            let mid: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect();
            let h_hat = spec.eval(&mid)?;
            let gauge: f64 =
                u.iter().zip(&v).zip(&h_hat).map(|((a, b), h)| (a - b).abs().powf(*h)).sum();
            let comb = LinearCombination::new(vec![1.0, -1.0], vec![u.clone(), v.clone()])?;
            let norm = lalpha_norm(&comb, spec, alpha, quad, c_norm)?.value;
            Ok(IncrementPair { u, v, norm, gauge, ratio: norm / gauge })
        })
        .collect();

    let mut out = Vec::with_capacity(pairs);
    for r in records {
        out.push(r?);
    }
    let min_ratio = out.iter().map(|p| p.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = out.iter().map(|p| p.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(IncrementScanReport { min_ratio, max_ratio, pairs: out, skipped })
}

/// Analytic bound for the synthesis-lattice truncation: mass of
/// `|g|^alpha` beyond `v_l < -L` for a single point, per axis, relative to
/// the corresponding full one-dimensional integral.
pub fn synthesis_tail_bound(h: &[f64], alpha: f64, u: &[f64], trunc_l: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for l in 0..h.len() {
        let e = h[l] - 1.0 / alpha;
        // |phi(v)| <= |e| u_l (-v)^{e-1} for v <= -max(1, u_l)
        let tail = (e.abs() * u[l].max(1e-12)).powf(alpha) * trunc_l.powf(alpha * (h[l] - 1.0))
            / (alpha * (1.0 - h[l]));
        let full = 1.0 / (alpha * h[l]); // lower bound of J_l
        worst = worst.max(tail / full);
    }
    worst
}
