//! Numerical verification of the standalone analytic lemmas: the power-sum
//! triangle inequalities, the three-regime integral asymptotics, the
//! strip-norm moment bound, and the constructed Hoelder weights.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::fit::log_log_slope;
use crate::hurst::{gamma_index, HurstSpec};
use crate::kernel::{kernel_g, pow_plus, QuadratureSpec};
use crate::quad::{integrate_axis, AxisSpec, BreakPoint, Coord};
use crate::rng::RngStream;
use crate::stable::{exp_power_mass, exp_power_variate};

/// Asymptotic regime of `int_a^b (A + |t - t0|^alpha)^{-beta} dt` as `A -> 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Supercritical,
    Critical,
    Subcritical,
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticCheck {
    pub regime: Regime,
    pub a_values: Vec<f64>,
    pub integral_values: Vec<f64>,
    /// Fitted log-log slope against A (supercritical only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitted_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theory_slope: Option<f64>,
    /// Envelope of integral / comparator across the tested A range.
    pub ratio_envelope: (f64, f64),
    pub pass: bool,
}

/// Evaluate the integral for each `A` and check the regime-appropriate
/// asymptotics: power-law slope when `alpha beta > 1`, logarithmic
/// comparator ratio when `alpha beta = 1`, bounded values when
/// `alpha beta < 1`.
pub fn verify_int_equiv(
    alpha: f64,
    beta: f64,
    a: f64,
    b: f64,
    t0: f64,
    a_values: &[f64],
    quad: &QuadratureSpec,
) -> Result<AsymptoticCheck> {
    if !(alpha > 0.0) || beta < 0.0 || !(0.0 <= a && a < b) || !(a <= t0 && t0 <= b) {
        return Err(CoreError::invalid(
            "verify_int_equiv: need alpha > 0, beta >= 0, 0 <= a < b, t0 in [a, b]",
        ));
    }
    if a_values.len() < 3 || a_values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CoreError::invalid("verify_int_equiv: A values must be decreasing"));
    }
    let span = a_values[0] / a_values[a_values.len() - 1];
    if span < 1e3 * (1.0 - 1e-9) {
        return Err(CoreError::invalid("verify_int_equiv: A values must span >= 3 decades"));
    }

    let mut integrals = Vec::with_capacity(a_values.len());
    for &big_a in a_values {
        // The integrand peaks on a feature of width A^{1/alpha} around t0;
        // graded splits there let the adaptive pass resolve it at any A.
        let w = big_a.powf(1.0 / alpha);
        let mut breaks = vec![BreakPoint::smooth(t0)];
        let mut r = w;
        while r < (b - a) {
            breaks.push(BreakPoint::smooth(t0 + r));
            breaks.push(BreakPoint::smooth(t0 - r));
            r *= 8.0;
        }
        let axis = AxisSpec { lower: Some(a), upper: b, breaks, tail_decay: 0.0 };
        let f = |c: Coord| (big_a + c.distance_from(t0).abs().powf(alpha)).powf(-beta);
        let q = integrate_axis(&f, &axis, quad.target_rel_err, 1e-300, quad.panels_per_axis)
            .require_converged("int_equiv integral")?;
        integrals.push(q.value);
    }

    let product = alpha * beta;
    let (regime, fitted, theory, envelope, pass) = if product > 1.0 + 1e-12 {
        let (slope, _) = log_log_slope(a_values, &integrals)?;
        let theory = -(beta - 1.0 / alpha);
        let ratios: Vec<f64> = a_values
            .iter()
            .zip(&integrals)
            .map(|(&av, &iv)| iv / av.powf(theory))
            .collect();
        let env = envelope_of(&ratios);
        let pass = (slope - theory).abs() <= 0.02 * theory.abs();
        (Regime::Supercritical, Some(slope), Some(theory), env, pass)
    } else if (product - 1.0).abs() <= 1e-12 {
        let ratios: Vec<f64> = a_values
            .iter()
            .zip(&integrals)
            .map(|(&av, &iv)| {
                let c = (1.0 + (b - t0) * av.powf(-1.0 / alpha))
                    * (1.0 + (t0 - a) * av.powf(-1.0 / alpha));
                iv / c.ln()
            })
            .collect();
        let env = envelope_of(&ratios);
        let pass = env.0 >= 0.5 && env.1 <= 2.0;
        (Regime::Critical, None, None, env, pass)
    } else {
        let env = envelope_of(&integrals);
        let pass = env.1 / env.0 < 2.0;
        (Regime::Subcritical, None, None, env, pass)
    };

    Ok(AsymptoticCheck {
        regime,
        a_values: a_values.to_vec(),
        integral_values: integrals,
        fitted_slope: fitted,
        theory_slope: theory,
        ratio_envelope: envelope,
        pass,
    })
}

fn envelope_of(v: &[f64]) -> (f64, f64) {
    (
        v.iter().copied().fold(f64::INFINITY, f64::min),
        v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    )
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TriangleReport {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// `|sum x_l|^alpha <= (N^{alpha-1} v 1) sum |x_l|^alpha`.
pub fn verify_triangle(alpha: f64, x: &[f64]) -> TriangleReport {
    let n = x.len() as f64;
    let lhs = x.iter().sum::<f64>().abs().powf(alpha);
    let rhs = n.powf(alpha - 1.0).max(1.0) * x.iter().map(|v| v.abs().powf(alpha)).sum::<f64>();
    TriangleReport { lhs, rhs, satisfied: lhs <= rhs * (1.0 + 1e-12) + 1e-300 }
}

/// Which explicit weight construction was used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightConstruction {
    /// `p_l = sum_{l'=1..N} h_l / h_{l'}` over all coordinates.
    Full,
    /// Truncated to the first `tau` coordinates.
    Truncated,
}

#[derive(Clone, Debug, Serialize)]
pub struct PWeightsReport {
    pub tau: usize,
    pub construction: WeightConstruction,
    pub p: Vec<f64>,
    pub sum_inv_ok: bool,
    pub load_ok: bool,
    pub delta_ok: bool,
    /// Index (0-based) witnessing the kappa headroom condition, if any.
    pub kappa_witness: Option<usize>,
    pub all_ok: bool,
}

fn check_conditions(h: &[f64], d: usize, n: usize, p: &[f64], tau: usize) -> (bool, bool, bool) {
    let df = d as f64;
    let sum_inv: f64 = p.iter().map(|v| 1.0 / v).sum();
    let sum_inv_ok = (sum_inv - 1.0).abs() <= 1e-12;
    let load_ok = (0..tau).all(|l| h[l] * df / p[l] < 1.0);
    let delta = 1.0 / n as f64;
    let lhs: f64 = (1.0 - delta) * (0..tau).map(|l| h[l] * df / p[l]).sum::<f64>();
    let rhs = h[tau - 1] * df + tau as f64 - (0..tau).map(|l| h[tau - 1] / h[l]).sum::<f64>();
    let delta_ok = lhs <= rhs + 1e-12;
    (sum_inv_ok, load_ok, delta_ok)
}

/// Construct the explicit Hoelder weights for `(h, d)` and check the three
/// defining conditions with `Delta = 1/n`, plus the kappa headroom clause.
///
/// The full construction over all `N` coordinates is tried first; when one
/// of its conditions fails, the tau-truncated analogue is reported instead
/// (and its possibly failing Delta-inequality is reported, not repaired).
pub fn verify_p_weights(h: &[f64], d: usize, n: usize) -> Result<PWeightsReport> {
    if n == 0 {
        return Err(CoreError::invalid("verify_p_weights: n must be >= 1"));
    }
    let dims = h.len();
    let tau = gamma_index(h, d)?; // same threshold index as gamma
    let full_p: Vec<f64> = {
        let s: f64 = h.iter().map(|v| 1.0 / v).sum();
        h.iter().map(|v| v * s).collect()
    };
    let (c1, c2, c3) = check_conditions(h, d, n, &full_p, dims);
    let (construction, p, used_tau, conds) = if c1 && c2 && c3 {
        (WeightConstruction::Full, full_p, dims, (c1, c2, c3))
    } else {
        let s: f64 = h[..tau].iter().map(|v| 1.0 / v).sum();
        let trunc_p: Vec<f64> = h[..tau].iter().map(|v| v * s).collect();
        let conds = check_conditions(h, d, n, &trunc_p, tau);
        (WeightConstruction::Truncated, trunc_p, tau, conds)
    };

    // kappa headroom: for kappa at the midpoint of (0, alpha_tau / (2 tau)),
    // some l0 satisfies h_l0 (d/p_l0 + 2 kappa) < 1.
    let alpha_tau: f64 = h[..used_tau].iter().map(|v| 1.0 / v).sum::<f64>() - d as f64;
    let kappa = 0.25 * alpha_tau / used_tau as f64;
    let kappa_witness =
        (0..used_tau).find(|&l| h[l] * (d as f64 / p[l] + 2.0 * kappa) < 1.0);

    let all_ok = conds.0 && conds.1 && conds.2 && kappa_witness.is_some();
    Ok(PWeightsReport {
        tau,
        construction,
        p,
        sum_inv_ok: conds.0,
        load_ok: conds.1,
        delta_ok: conds.2,
        kappa_witness,
        all_ok,
    })
}

/// Inputs for the strip-norm moment bound check along axis `l`:
/// points with ordered `l`-coordinates and moment powers `b`.
#[derive(Clone, Debug)]
pub struct SumZInstance {
    pub spec: HurstSpec,
    pub axis: usize,
    pub points: Vec<Vec<f64>>,
    pub powers: Vec<f64>,
    pub alpha: f64,
    pub epsilon: f64,
    pub c_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SumZReport {
    pub lhs_estimate: f64,
    pub lhs_rel_stderr: f64,
    /// The product of gap powers the bound is proportional to.
    pub form_value: f64,
    /// lhs / form: the constant the bound transfers.
    pub ratio: f64,
    pub trials: usize,
}

/// Fixed quadrature nodes for the strip-domain norm
/// `||sum_j x_j Z_l(u^j)||_alpha^alpha`, cached as a node x point kernel
/// matrix so each Monte Carlo sample costs one pass over the nodes.
pub struct StripNormCache {
    weights: Vec<f64>,
    kernels: Vec<Vec<f64>>, // kernels[node][j]
    alpha: f64,
}

impl StripNormCache {
    pub fn norm_pow(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (w, krow) in self.weights.iter().zip(&self.kernels) {
            let s: f64 = krow.iter().zip(x).map(|(k, xi)| k * xi).sum();
            acc += w * s.abs().powf(self.alpha);
        }
        acc
    }
}

/// Composite Gauss-Kronrod nodes on `[lo, hi]` with an optional power
/// substitution at the singular right endpoint.
fn panel_nodes(
    lo: f64,
    hi: f64,
    right_gamma: f64,
    panels: usize,
    out: &mut Vec<(f64, f64)>,
) {
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
    let mut push_plain = |a: f64, b: f64, map: &dyn Fn(f64) -> (f64, f64)| {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        for j in 0..8 {
            let w = WGK[j] * h;
            if j == 7 {
                let (v, jac) = map(c);
                out.push((v, w * jac));
            } else {
                for s in [-1.0, 1.0] {
                    let (v, jac) = map(c + s * h * XGK[j]);
                    out.push((v, w * jac));
                }
            }
        }
    };
    if right_gamma != 0.0 {
        // t = (hi - v)^p, v = hi - t^{1/p}; integrate t over (0, (hi-lo)^p].
        let p = 1.0 + right_gamma;
        let inv_p = 1.0 / p;
        let top = (hi - lo).powf(p);
        for i in 0..panels {
            // geometric grading toward t = 0
            let t1 = top * 0.5f64.powi((panels - 1 - i) as i32);
            let t0 = if i == 0 { 0.0 } else { top * 0.5f64.powi((panels - i) as i32) };
            push_plain(t0, t1, &|t: f64| {
                let v = hi - t.powf(inv_p);
                (v, inv_p * t.powf(inv_p - 1.0))
            });
        }
    } else {
        let w = (hi - lo) / panels as f64;
        for i in 0..panels {
            push_plain(lo + i as f64 * w, lo + (i + 1) as f64 * w, &|v: f64| (v, 1.0));
        }
    }
}

/// Build the node cache for one instance.
pub fn strip_norm_cache(inst: &SumZInstance) -> Result<StripNormCache> {
    let n_dims = inst.spec.dims();
    let l = inst.axis;
    if l >= n_dims {
        return Err(CoreError::invalid("sum_z: axis out of range"));
    }
    let h_pts: Vec<Vec<f64>> =
        inst.points.iter().map(|p| inst.spec.eval(p)).collect::<Result<_>>()?;
    let coords: Vec<f64> = inst.points.iter().map(|p| p[l]).collect();
    if coords.windows(2).any(|w| w[1] < w[0] - 1e-15) {
        return Err(CoreError::invalid("sum_z: points must have ordered l-coordinates"));
    }
    if coords[0] <= inst.epsilon {
        return Err(CoreError::invalid("sum_z: points must lie above epsilon on the axis"));
    }

    // Axis l: strips (eps, u^1], (u^1, u^2], ... with a substitution at each
    // singular right endpoint.
    let mut axis_nodes: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_dims];
    let mut edges = vec![inst.epsilon];
    for &c in &coords {
        if c > *edges.last().unwrap() + 1e-15 {
            edges.push(c);
        }
    }
    for win in edges.windows(2) {
        // The |.|^alpha integrand behaves like (edge - v)^{alpha h - 1} at
        // the strip's right edge; substitute that power away whether it is
        // singular or merely non-smooth. Worst exponent wins when several
        // points share the edge.
        let mut gamma: f64 = 0.0;
        for (p, h) in inst.points.iter().zip(&h_pts) {
            if (p[l] - win[1]).abs() < 1e-14 {
                let g = inst.alpha * h[l] - 1.0;
                if g != 0.0 {
                    gamma = if gamma == 0.0 { g } else { gamma.min(g) };
                }
            }
        }
        panel_nodes(win[0], win[1], gamma, 10, &mut axis_nodes[l]);
    }
    // Other axes: [0, epsilon], smooth (points sit above epsilon).
    for (p, nodes) in axis_nodes.iter_mut().enumerate() {
        if p != l {
            if inst.epsilon <= 0.0 {
                return Err(CoreError::invalid("sum_z: epsilon must be positive for N > 1"));
            }
            panel_nodes(0.0, inst.epsilon, 0.0, 4, nodes);
        }
    }
    // Tensor product of the axis nodes.
    let mut weights = Vec::new();
    let mut kernels = Vec::new();
    let mut idx = vec![0usize; n_dims];
    let mut v = vec![0.0f64; n_dims];
    'outer: loop {
        let mut w = 1.0;
        for p in 0..n_dims {
            let (vp, wp) = axis_nodes[p][idx[p]];
            v[p] = vp;
            w *= wp;
        }
        let krow: Vec<f64> = inst
            .points
            .iter()
            .zip(&h_pts)
            .map(|(u, h)| kernel_g(h, inst.alpha, u, &v, inst.c_norm))
            .collect();
        weights.push(w);
        kernels.push(krow);
        let mut p = 0;
        loop {
            idx[p] += 1;
            if idx[p] < axis_nodes[p].len() {
                break;
            }
            idx[p] = 0;
            p += 1;
            if p == n_dims {
                break 'outer;
            }
        }
    }
    Ok(StripNormCache { weights, kernels, alpha: inst.alpha })
}

/// The product of gap powers on the bound's right-hand side,
/// `prod_j (u_l^j - u_l^{j-1})^{-h_l(u^j) (1 + sum_i b_i)}` with `u_l^0 = 0`.
pub fn gap_power_form(inst: &SumZInstance) -> Result<f64> {
    let l = inst.axis;
    let b_sum: f64 = inst.powers.iter().sum();
    let mut prev = 0.0;
    let mut form = 1.0;
    for p in &inst.points {
        let h = inst.spec.eval(p)?;
        let gap = p[l] - prev;
        if gap <= 0.0 {
            return Err(CoreError::invalid("sum_z: coincident l-coordinates"));
        }
        form *= gap.powf(-h[l] * (1.0 + b_sum));
        prev = p[l];
    }
    Ok(form)
}

/// Triangular change of variables used as the importance sampler: the
/// closed-form strip factor matrix `theta_{ij}` from the proof's
/// substitution.
fn theta_matrix(inst: &SumZInstance, h_pts: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = inst.points.len();
    let l = inst.axis;
    let n_dims = inst.spec.dims();
    let mut edges = vec![inst.epsilon.max(0.0)];
    for p in &inst.points {
        edges.push(p[l]);
    }
    let mut theta = vec![vec![0.0; n]; n];
    for i in 0..n {
        let g_i = edges[i + 1] - edges[i];
        if g_i <= 0.0 {
            continue;
        }
        for j in i..n {
            let e_j = h_pts[j][l] - 1.0 / inst.alpha;
            let c_ij = inst.points[j][l] - edges[i];
            // int over the strip of (u_j - v)^{e_j}, averaged by the proof's
            // normalization: g_i^{1/alpha - 1} * int_{strip}
            let strip_int =
                (pow_plus(c_ij, 1.0 + e_j) - pow_plus(c_ij - g_i, 1.0 + e_j)) / (1.0 + e_j);
            let mut cross = 1.0;
            for p in 0..n_dims {
                if p != l {
                    let e_p = h_pts[j][p] - 1.0 / inst.alpha;
                    let u_p = inst.points[j][p];
                    cross *= (pow_plus(u_p, 1.0 + e_p)
                        - pow_plus(u_p - inst.epsilon, 1.0 + e_p))
                        / (1.0 + e_p);
                }
            }
            theta[i][j] = g_i.powf(1.0 / inst.alpha - 1.0) * strip_int * cross;
        }
    }
    theta
}

/// Monte Carlo estimate of
/// `int (prod |x_i|^{b_i}) exp(-||sum_j x_j Z_l(u^j)||_alpha^alpha) dx`
/// with the triangular substitution as importance sampler, reported against
/// the gap-power form of the bound.
pub fn verify_sum_z_bound(
    inst: &SumZInstance,
    trials: usize,
    stream: RngStream,
) -> Result<SumZReport> {
    let n = inst.points.len();
    if n == 0 || n > 3 {
        return Err(CoreError::invalid("sum_z: 1 <= n <= 3 at desk scale"));
    }
    if inst.powers.len() != n {
        return Err(CoreError::invalid("sum_z: powers length mismatch"));
    }
    let h_pts: Vec<Vec<f64>> =
        inst.points.iter().map(|p| inst.spec.eval(p)).collect::<Result<_>>()?;
    let cache = strip_norm_cache(inst)?;
    let theta = theta_matrix(inst, &h_pts);

    // lambda scales the proposal's exponent below the true norm so the
    // weights stay bounded (alpha >= 1; reported stderr covers the rest).
    let n_dims = inst.spec.dims();
    let c51 = if n_dims > 1 {
        inst.epsilon.powf((n_dims as f64 - 1.0) * (1.0 - inst.alpha))
    } else {
        1.0
    };
    let lambda = 0.9 * c51 * inst.c_norm.powf(inst.alpha);
    let lam_root = lambda.powf(1.0 / inst.alpha);

    let mass = exp_power_mass(inst.alpha);
    let diag: f64 = (0..n).map(|i| theta[i][i]).product();
    let prefactor = mass.powi(n as i32) * lambda.powf(-(n as f64) / inst.alpha) / diag;

    let mut rng = stream.rng();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut y = vec![0.0f64; n];
    let mut x = vec![0.0f64; n];
    for _ in 0..trials {
        for yi in y.iter_mut() {
            *yi = exp_power_variate(&mut rng, inst.alpha) / lam_root;
        }
        // back-substitute theta x = y
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in (i + 1)..n {
                s -= theta[i][j] * x[j];
            }
            x[i] = s / theta[i][i];
        }
        let mut w = 1.0;
        for i in 0..n {
            if inst.powers[i] != 0.0 {
                w *= x[i].abs().powf(inst.powers[i]);
            }
        }
        let q = cache.norm_pow(&x);
        let proposal_exp: f64 = lambda * y.iter().map(|yi| yi.abs().powf(inst.alpha)).sum::<f64>();
        w *= (-q + proposal_exp).exp();
        sum += w;
        sum_sq += w * w;
    }
    let mean = sum / trials as f64;
    let var = (sum_sq / trials as f64 - mean * mean).max(0.0);
    let stderr = (var / trials as f64).sqrt();
    if mean <= 0.0 {
        return Err(CoreError::McVarianceTooHigh("sum_z: vanished estimate".into()));
    }
    let rel = stderr / mean;
    if rel > 0.2 {
        return Err(CoreError::McVarianceTooHigh(format!(
            "sum_z: relative stderr {rel:.3} > 0.2"
        )));
    }
    let lhs = prefactor * mean;
    let form = gap_power_form(inst)?;
    Ok(SumZReport {
        lhs_estimate: lhs,
        lhs_rel_stderr: rel,
        form_value: form,
        ratio: lhs / form,
        trials,
    })
}

/// Closed-form strip norm for a single point (used as the n = 1 oracle):
/// `||Z_l(u)||_alpha^alpha = c_norm^alpha * int_strip prod (u_p - v_p)^{alpha e_p} dv`.
pub fn single_point_strip_norm_pow(inst: &SumZInstance) -> Result<f64> {
    if inst.points.len() != 1 {
        return Err(CoreError::invalid("single_point_strip_norm_pow: needs exactly one point"));
    }
    let u = &inst.points[0];
    let h = inst.spec.eval(u)?;
    let l = inst.axis;
    let mut acc = inst.c_norm.powf(inst.alpha);
    for p in 0..inst.spec.dims() {
        let ae = inst.alpha * h[p] - 1.0; // alpha * e_p + alpha - 1
        let (lo, hi) = if p == l { (inst.epsilon, u[p]) } else { (0.0, inst.epsilon) };
        // int_lo^hi (u - v)^{alpha e} dv = [(u-lo)^{ae+1} - (u-hi)^{ae+1}] / (ae+1)
        acc *= (pow_plus(u[p] - lo, ae + 1.0) - pow_plus(u[p] - hi, ae + 1.0)) / (ae + 1.0);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn quad() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn int_equiv_supercritical_closed_form() {
        // alpha=2, beta=1, a=0, b=1, t0=0: I(A) = arctan(A^{-1/2}) / sqrt(A).
        let a_values: Vec<f64> = (0..7).map(|i| 1e-5 * 10f64.powf(-(i as f64) / 2.0)).collect();
        let chk = verify_int_equiv(2.0, 1.0, 0.0, 1.0, 0.0, &a_values, &quad()).unwrap();
        assert_eq!(chk.regime, Regime::Supercritical);
        for (&av, &iv) in a_values.iter().zip(&chk.integral_values) {
            let exact = (1.0 / av.sqrt()).atan() / av.sqrt();
            assert!((iv - exact).abs() < 1e-5 * exact, "A {av}: {iv} vs {exact}");
        }
        assert!(chk.pass, "slope {:?} vs {:?}", chk.fitted_slope, chk.theory_slope);
    }

    #[test]
    fn int_equiv_critical_ratio_is_one() {
        // alpha=1, beta=1, t0=a=0: I(A) = log(1 + (b-a)/A); comparator equal.
        let a_values: Vec<f64> = (0..5).map(|i| 1e-2 * 10f64.powi(-(i as i32))).collect();
        let chk = verify_int_equiv(1.0, 1.0, 0.0, 1.0, 0.0, &a_values, &quad()).unwrap();
        assert_eq!(chk.regime, Regime::Critical);
        assert!(chk.ratio_envelope.0 > 0.99 && chk.ratio_envelope.1 < 1.01, "{chk:?}");
        assert!(chk.pass);
    }

    #[test]
    fn int_equiv_subcritical_bounded() {
        let a_values: Vec<f64> = (0..5).map(|i| 1e-1 * 10f64.powi(-(i as i32))).collect();
        let chk = verify_int_equiv(2.0, 0.25, 0.0, 1.0, 0.3, &a_values, &quad()).unwrap();
        assert_eq!(chk.regime, Regime::Subcritical);
        assert!(chk.pass, "{chk:?}");
    }

    #[test]
    fn triangle_hand_cases_and_fuzz() {
        let r = verify_triangle(0.5, &[1.0, 1.0]);
        assert!((r.lhs - 2f64.sqrt()).abs() < 1e-12 && (r.rhs - 2.0).abs() < 1e-12);
        assert!(r.satisfied);
        let r = verify_triangle(2.0, &[1.0, 1.0]);
        assert!((r.lhs - 4.0).abs() < 1e-12 && (r.rhs - 4.0).abs() < 1e-12);
        let mut rng = RngStream::new(31, 0).rng();
        for _ in 0..10_000 {
            let alpha: f64 = rng.gen_range(0.05..3.0);
            let n = rng.gen_range(1..6);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            assert!(verify_triangle(alpha, &x).satisfied, "alpha {alpha} x {x:?}");
        }
    }

    #[test]
    fn p_weights_examples() {
        let rep = verify_p_weights(&[0.5, 0.5], 1, 4).unwrap();
        assert_eq!(rep.construction, WeightConstruction::Full);
        assert!((rep.p[0] - 2.0).abs() < 1e-12 && (rep.p[1] - 2.0).abs() < 1e-12);
        assert!(rep.sum_inv_ok && rep.load_ok && rep.delta_ok);
        assert!(rep.all_ok);

        let rep = verify_p_weights(&[0.4], 1, 3).unwrap();
        assert_eq!(rep.p, vec![1.0]);
        assert!(rep.load_ok); // collapses to h1 d < 1
        assert!(rep.all_ok);

        let rep = verify_p_weights(&[0.9, 0.9], 2, 10).unwrap();
        assert_eq!(rep.tau, 2);
        assert!((rep.p[0] - 2.0).abs() < 1e-12);
        assert!(rep.sum_inv_ok && rep.load_ok && rep.delta_ok);
    }

    #[test]
    fn p_weights_sum_inverse_is_one_when_constructed() {
        let mut rng = RngStream::new(37, 0).rng();
        for _ in 0..500 {
            let n = rng.gen_range(1..5);
            let h: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
            let s: f64 = h.iter().map(|v| 1.0 / v).sum();
            let d_max = s.floor() as usize;
            if d_max == 0 {
                continue;
            }
            let d = rng.gen_range(1..=d_max.min(6));
            if (d as f64) >= s {
                continue;
            }
            let rep = verify_p_weights(&h, d, 4).unwrap();
            let inv: f64 = rep.p.iter().map(|p| 1.0 / p).sum();
            assert!((inv - 1.0).abs() < 1e-12, "h {h:?} d {d}");
        }
    }

    fn n1_instance(u: f64, h: f64, alpha: f64, eps: f64) -> SumZInstance {
        SumZInstance {
            spec: HurstSpec::constant(vec![h]).unwrap(),
            axis: 0,
            points: vec![vec![u]],
            powers: vec![0.0],
            alpha,
            epsilon: eps,
            c_norm: 1.0,
        }
    }

    #[test]
    fn strip_cache_matches_closed_form() {
        let inst = n1_instance(0.8, 0.7, 2.0, 0.1);
        let cache = strip_norm_cache(&inst).unwrap();
        let q = cache.norm_pow(&[1.0]);
        let exact = single_point_strip_norm_pow(&inst).unwrap();
        assert!((q - exact).abs() < 1e-8 * exact, "{q} vs {exact}");
        // singular case h < 1/alpha
        let inst = n1_instance(0.8, 0.3, 2.0, 0.1);
        let cache = strip_norm_cache(&inst).unwrap();
        let q = cache.norm_pow(&[1.5]);
        let exact = 1.5f64.powi(2) * single_point_strip_norm_pow(&inst).unwrap();
        assert!((q - exact).abs() < 1e-6 * exact, "{q} vs {exact}");
    }

    #[test]
    fn sum_z_n1_matches_closed_form() {
        // n=1, b=0: LHS = (2/alpha) Gamma(1/alpha) ||Z||^{-1}.
        let inst = n1_instance(0.9, 0.6, 2.0, 0.2);
        let rep = verify_sum_z_bound(&inst, 30_000, RngStream::new(41, 0)).unwrap();
        let exact = exp_power_mass(2.0)
            * single_point_strip_norm_pow(&inst).unwrap().powf(-1.0 / 2.0);
        assert!(
            (rep.lhs_estimate - exact).abs() <= (3.0 * rep.lhs_rel_stderr + 1e-6) * exact,
            "mc {} vs exact {exact}",
            rep.lhs_estimate
        );
    }

    #[test]
    fn sum_z_small_u_slope_matches_minus_h() {
        // epsilon -> 0: LHS(u) ~ u^{-h} exactly for the single-point case.
        let h = 0.65;
        let us = [0.4, 0.2, 0.1, 0.05];
        let mut lhs = Vec::new();
        for &u in &us {
            let inst = n1_instance(u, h, 2.0, 1e-9);
            let exact = exp_power_mass(2.0)
                * single_point_strip_norm_pow(&inst).unwrap().powf(-0.5);
            lhs.push(exact);
        }
        let (slope, _) = log_log_slope(&us, &lhs).unwrap();
        assert!((slope + h).abs() < 0.05 * h, "slope {slope}");
    }

    #[test]
    fn sum_z_n2_transfers_constant() {
        // Calibrate the constant on one set of instances, test on held-out.
        let mk = |a: f64, gap: f64| SumZInstance {
            spec: HurstSpec::constant(vec![0.6]).unwrap(),
            axis: 0,
            points: vec![vec![a], vec![a + gap]],
            powers: vec![0.0, 0.0],
            alpha: 2.0,
            epsilon: 1e-9,
            c_norm: 1.0,
        };
        let mut c_fit: f64 = 0.0;
        for (i, (a, gap)) in [(0.3, 0.2), (0.5, 0.1), (0.2, 0.4)].iter().enumerate() {
            let rep = verify_sum_z_bound(&mk(*a, *gap), 20_000, RngStream::new(43, i as u64))
                .unwrap();
            c_fit = c_fit.max(rep.ratio * (1.0 + 3.0 * rep.lhs_rel_stderr));
        }
        let mut pass = 0;
        let held_out = [(0.25, 0.3), (0.4, 0.25), (0.6, 0.15), (0.35, 0.05)];
        for (i, (a, gap)) in held_out.iter().enumerate() {
            let rep =
                verify_sum_z_bound(&mk(*a, *gap), 20_000, RngStream::new(44, i as u64)).unwrap();
            if rep.lhs_estimate <= c_fit * rep.form_value * (1.0 + 3.0 * rep.lhs_rel_stderr) {
                pass += 1;
            }
        }
        assert!(pass >= 3, "held-out transfers {pass}/4");
    }
}
