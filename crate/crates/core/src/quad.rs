//! Adaptive Gauss-Kronrod quadrature with support for algebraic endpoint
//! singularities and the left-infinite tails that moving-average kernels
//! produce.
//!
//! Endpoint singularities `f ~ C (x-p)^gamma`, `gamma > -1`, are removed by
//! the power substitution `x = p + t^{1/(1+gamma)}`; the tail `(-inf, -1]` is
//! compactified through `v = -1/s` and the resulting endpoint singularity is
//! substituted away as well, so no hard truncation is needed.

use std::cell::{Cell, RefCell};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{CoreError, Result};

/// Outcome of a quadrature: estimate, error estimate, work counter.
#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: f64,
    pub abs_err: f64,
    pub evals: u64,
    pub converged: bool,
}

impl QuadResult {
    fn zero() -> Self {
        QuadResult { value: 0.0, abs_err: 0.0, evals: 0, converged: true }
    }

    fn merge(&mut self, other: QuadResult) {
        self.value += other.value;
        self.abs_err += other.abs_err;
        self.evals += other.evals;
        self.converged &= other.converged;
    }

    /// Convert into a hard error when the estimate is unusable.
    pub fn require_converged(self, what: &str) -> Result<QuadResult> {
        if self.converged && self.value.is_finite() {
            Ok(self)
        } else {
            Err(CoreError::QuadratureNonconvergence(format!(
                "{what}: estimate {} +- {}",
                self.value, self.abs_err
            )))
        }
    }
}

// 15-point Kronrod abscissae/weights and embedded 7-point Gauss weights (QUADPACK).
const XGK: [f64; 8] = [
    0.9914553711208126,
    0.9491079123427585,
    0.8648644233597691,
    0.7415311855993944,
    0.5860872354676911,
    0.4058451513773972,
    0.2077849550078985,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529225,
    0.06309209262997855,
    0.10479001032225018,
    0.14065325971552592,
    0.1690047266392679,
    0.19035057806478542,
    0.20443294007529889,
    0.20948214108472782,
];
const WG: [f64; 4] = [
    0.1294849661688697,
    0.27970539148927664,
    0.3818300505051189,
    0.41795918367346935,
];

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        let min_err = 50.0 * f64::EPSILON * res_abs;
        if min_err > scaled {
            scaled = min_err;
        }
    }
    scaled
}

/// One 15-point Kronrod panel. Returns (estimate, error estimate).
fn qk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);

    let mut fv = [0.0f64; 15];
    fv[7] = fc;
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    let mut resabs = resk.abs();

    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv[j] = f1;
        fv[14 - j] = f2;
        let fsum = f1 + f2;
        resk += WGK[j] * fsum;
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            // odd Kronrod indices coincide with the 7-point Gauss nodes
            resg += WG[j / 2] * fsum;
        }
    }

    let mean = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv[j] - mean).abs() + (fv[14 - j] - mean).abs());
    }

    let value = resk * half;
    let err = rescale_error((resk - resg) * half, resabs * half.abs(), resasc * half.abs());
    (value, err)
}

#[derive(Debug)]
struct Segment {
    err: f64,
    seq: u64,
    a: f64,
    b: f64,
    value: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap on error; sequence number breaks ties deterministically
        match self.err.partial_cmp(&other.err) {
            Some(Ordering::Equal) | None => other.seq.cmp(&self.seq),
            Some(ord) => ord,
        }
    }
}

/// Globally adaptive integration of `f` over the finite interval `[a, b]`.
///
/// Stops when the summed error estimate drops under
/// `max(abs_floor, rel_tol * |value|)` or the segment budget is exhausted.
pub fn adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_floor: f64,
    max_segments: usize,
) -> QuadResult {
    adaptive_seeded(f, &[a, b], rel_tol, abs_floor, max_segments)
}

/// Adaptive integration with a caller-provided initial partition (edges must
/// be increasing). Grading the seed panels toward a difficult endpoint saves
/// most of the bisection work there.
pub fn adaptive_seeded<F: Fn(f64) -> f64>(
    f: F,
    edges: &[f64],
    rel_tol: f64,
    abs_floor: f64,
    max_segments: usize,
) -> QuadResult {
    if edges.len() < 2 || edges[0] == edges[edges.len() - 1] {
        return QuadResult::zero();
    }
    let mut seq = 0u64;
    let mut heap = BinaryHeap::new();
    let mut evals = 0u64;
    let mut total_val = 0.0;
    let mut total_err = 0.0;
    for win in edges.windows(2) {
        if win[1] <= win[0] {
            continue;
        }
        let (v, e) = qk15(&f, win[0], win[1]);
        evals += 15;
        if !v.is_finite() {
            return QuadResult { value: v, abs_err: f64::INFINITY, evals, converged: false };
        }
        heap.push(Segment { err: e, seq, a: win[0], b: win[1], value: v });
        seq += 1;
        total_val += v;
        total_err += e;
    }

    while heap.len() < max_segments {
        let target = abs_floor.max(rel_tol * total_val.abs());
        if total_err <= target {
            break;
        }
        let worst = heap.pop().expect("heap nonempty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval no longer splittable in f64; keep as-is
            heap.push(worst);
            break;
        }
        total_val -= worst.value;
        total_err -= worst.err;
        let (vl, el) = qk15(&f, worst.a, mid);
        let (vr, er) = qk15(&f, mid, worst.b);
        evals += 30;
        if !vl.is_finite() || !vr.is_finite() {
            return QuadResult {
                value: total_val + worst.value,
                abs_err: f64::INFINITY,
                evals,
                converged: false,
            };
        }
        seq += 1;
        heap.push(Segment { err: el, seq, a: worst.a, b: mid, value: vl });
        seq += 1;
        heap.push(Segment { err: er, seq, a: mid, b: worst.b, value: vr });
        total_val += vl + vr;
        total_err += el + er;
    }

    let target = abs_floor.max(rel_tol * total_val.abs()).max(1e-300);
    let converged = total_err <= target * (1.0 + 1e-9);
    QuadResult { value: total_val, abs_err: total_err, evals, converged }
}

/// Integral of `t -> f_off(t)` over `(0, w]` where `f_off ~ C t^gamma` as
/// `t -> 0+` with `gamma > -1`. `f_off` takes the offset from the singular
/// endpoint, which keeps full precision close to it.
pub fn from_singularity<F: Fn(f64) -> f64>(
    f_off: F,
    w: f64,
    gamma: f64,
    rel_tol: f64,
    abs_floor: f64,
    max_segments: usize,
) -> QuadResult {
    if w <= 0.0 {
        return QuadResult::zero();
    }
    // Geometric grading toward the endpoint seeds the refinement where the
    // non-smooth behavior lives (even after substitution, fractional-power
    // corrections remain there).
    fn graded_edges(top: f64) -> Vec<f64> {
        let mut edges = vec![0.0];
        for k in (0..=20).rev() {
            edges.push(top * 0.5f64.powi(k));
        }
        edges
    }
    if gamma >= 0.0 {
        return adaptive_seeded(f_off, &graded_edges(w), rel_tol, abs_floor, max_segments);
    }
    let p = 1.0 + gamma; // in (0, 1)
    let inv_p = 1.0 / p;
    let g = move |t: f64| {
        if t <= 0.0 {
            return 0.0;
        }
        let x = t.powf(inv_p);
        f_off(x) * inv_p * t.powf(inv_p - 1.0)
    };
    adaptive_seeded(g, &graded_edges(w.powf(p)), rel_tol, abs_floor, max_segments)
}

/// A coordinate carried as `anchor + offset`. Integrands evaluate near
/// algebraic singularities where the distance to the singular abscissa
/// matters below one ulp of the absolute position; panels anchored at the
/// singular point keep that distance exact.
#[derive(Clone, Copy, Debug)]
pub struct Coord {
    pub anchor: f64,
    pub offset: f64,
}

impl Coord {
    pub fn at(value: f64) -> Self {
        Coord { anchor: value, offset: 0.0 }
    }

    pub fn value(&self) -> f64 {
        self.anchor + self.offset
    }

    /// `point - self`, exact when `point` equals the anchor.
    pub fn distance_from(&self, point: f64) -> f64 {
        (point - self.anchor) - self.offset
    }
}

/// A potential algebraic singularity of the integrand at `at`:
/// `f ~ C |x - at|^gamma` on the flagged side(s). `gamma >= 0` marks a mere
/// breakpoint (kink) where panels should split but no substitution is needed.
#[derive(Clone, Copy, Debug)]
pub struct BreakPoint {
    pub at: f64,
    pub gamma: f64,
}

impl BreakPoint {
    pub fn smooth(at: f64) -> Self {
        BreakPoint { at, gamma: 0.0 }
    }
    pub fn singular(at: f64, gamma: f64) -> Self {
        BreakPoint { at, gamma }
    }
}

/// Description of one integration axis: domain, interior break points and
/// the decay exponent of the left tail (`f ~ |v|^{tail_decay}` as
/// `v -> -inf`, needed only when `lower` is `None`).
#[derive(Clone, Debug)]
pub struct AxisSpec {
    pub lower: Option<f64>,
    pub upper: f64,
    pub breaks: Vec<BreakPoint>,
    /// Exponent kappa < -1 such that f(v) = O(|v|^kappa) as v -> -inf.
    pub tail_decay: f64,
}

impl AxisSpec {
    pub fn finite(lower: f64, upper: f64) -> Self {
        AxisSpec { lower: Some(lower), upper, breaks: Vec::new(), tail_decay: 0.0 }
    }
}

/// Integrate a single axis honoring break points, substitutions and the
/// compactified left tail. The integrand receives anchored coordinates; on
/// panels adjacent to a break point the anchor is that abscissa and the
/// offset is exact.
pub fn integrate_axis<F: Fn(Coord) -> f64>(
    f: &F,
    axis: &AxisSpec,
    rel_tol: f64,
    abs_floor: f64,
    max_segments: usize,
) -> QuadResult {
    let mut out = QuadResult::zero();
    let upper = axis.upper;

    let finite_lower = match axis.lower {
        Some(lo) => lo,
        None => {
            // Tail (-inf, anchor]: v = anchor/s with s in (0, 1]. The s = 0
            // endpoint behaves like s^{-tail_decay - 2}.
            let anchor = upper.min(0.0) - 1.0;
            let gamma_s = -axis.tail_decay - 2.0;
            let jac = anchor.abs();
            let tail = from_singularity(
                |s| f(Coord::at(anchor / s)) * jac / (s * s),
                1.0,
                gamma_s,
                rel_tol,
                abs_floor,
                max_segments,
            );
            out.merge(tail);
            anchor
        }
    };

    // Collect, sort, and de-duplicate break points inside [lower, upper].
    let mut brs: Vec<BreakPoint> = axis
        .breaks
        .iter()
        .copied()
        .filter(|b| b.at <= upper && b.at >= finite_lower)
        .collect();
    brs.sort_by(|x, y| x.at.partial_cmp(&y.at).unwrap());
    brs.dedup_by(|b, a| {
        if (b.at - a.at).abs() < 1e-14 {
            a.gamma = a.gamma.min(b.gamma);
            true
        } else {
            false
        }
    });

    // Build panel edges: lower, interior breaks, upper. Break points that
    // coincide with a boundary donate their exponent to that edge.
    let mut lower_edge = BreakPoint::smooth(finite_lower);
    let mut upper_edge = BreakPoint::smooth(upper);
    let mut interior = Vec::with_capacity(brs.len());
    for b in brs {
        if (b.at - finite_lower).abs() < 1e-14 {
            lower_edge.gamma = lower_edge.gamma.min(b.gamma);
        } else if (b.at - upper).abs() < 1e-14 {
            upper_edge.gamma = upper_edge.gamma.min(b.gamma);
        } else {
            interior.push(b);
        }
    }
    let mut edges: Vec<BreakPoint> = Vec::with_capacity(interior.len() + 2);
    edges.push(lower_edge);
    edges.extend(interior);
    edges.push(upper_edge);

    for win in edges.windows(2) {
        let (le, re) = (win[0], win[1]);
        if re.at <= le.at {
            continue;
        }
        let left_sing = le.gamma < 0.0;
        let right_sing = re.gamma < 0.0;
        let width = re.at - le.at;
        match (left_sing, right_sing) {
            (false, false) => out.merge(adaptive(
                |x| f(Coord::at(x)),
                le.at,
                re.at,
                rel_tol,
                abs_floor,
                max_segments,
            )),
            (true, false) => out.merge(from_singularity(
                |t| f(Coord { anchor: le.at, offset: t }),
                width,
                le.gamma,
                rel_tol,
                abs_floor,
                max_segments,
            )),
            (false, true) => out.merge(from_singularity(
                |t| f(Coord { anchor: re.at, offset: -t }),
                width,
                re.gamma,
                rel_tol,
                abs_floor,
                max_segments,
            )),
            (true, true) => {
                let half = 0.5 * width;
                out.merge(from_singularity(
                    |t| f(Coord { anchor: le.at, offset: t }),
                    half,
                    le.gamma,
                    rel_tol,
                    abs_floor,
                    max_segments,
                ));
                out.merge(from_singularity(
                    |t| f(Coord { anchor: re.at, offset: -t }),
                    half,
                    re.gamma,
                    rel_tol,
                    abs_floor,
                    max_segments,
                ));
            }
        }
    }
    out
}

/// Iterated multidimensional integration over a product of axis specs.
/// Inner axes run at a tightened tolerance so the outer error estimate stays
/// meaningful. The integrand receives one anchored coordinate per axis.
pub fn integrate_nd<F: Fn(&[Coord]) -> f64>(
    f: &F,
    axes: &[AxisSpec],
    rel_tol: f64,
    abs_floor: f64,
    max_segments: usize,
) -> QuadResult {
    assert!(!axes.is_empty());
    let coords = RefCell::new(vec![Coord::at(0.0); axes.len()]);
    let evals = Cell::new(0u64);
    let ok = Cell::new(true);

    fn level<F: Fn(&[Coord]) -> f64>(
        f: &F,
        axes: &[AxisSpec],
        k: usize,
        coords: &RefCell<Vec<Coord>>,
        evals: &Cell<u64>,
        ok: &Cell<bool>,
        rel_tol: f64,
        abs_floor: f64,
        max_segments: usize,
    ) -> f64 {
        let axis = &axes[k];
        let inner = |v: Coord| -> f64 {
            coords.borrow_mut()[k] = v;
            if k + 1 == axes.len() {
                evals.set(evals.get() + 1);
                f(&coords.borrow())
            } else {
                level(f, axes, k + 1, coords, evals, ok, rel_tol * 0.3, abs_floor * 0.1, max_segments)
            }
        };
        let r = integrate_axis(&inner, axis, rel_tol, abs_floor, max_segments);
        if !r.converged || !r.value.is_finite() {
            ok.set(false);
        }
        r.value
    }

    let value = level(f, axes, 0, &coords, &evals, &ok, rel_tol, abs_floor, max_segments);
    QuadResult {
        value,
        abs_err: rel_tol * value.abs(),
        evals: evals.get(),
        converged: ok.get() && value.is_finite(),
    }
}
