//! The Hurst functional index `H(u) = (h_1(u), ..., h_N(u))`, its regularity
//! conditions, and the exponent bookkeeping (`gamma`, `beta`, `p_l`,
//! `kappa_n`) that the local-time probes consume.

use itertools::Itertools;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{CoreError, Result};

/// Closed axis-aligned rectangle `[lower, upper]` in `R_+^N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Rect {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(CoreError::invalid("rect: dimension mismatch or empty"));
        }
        for (a, b) in lower.iter().zip(&upper) {
            if !(a < b) || *a < 0.0 {
                return Err(CoreError::invalid(format!(
                    "rect: need 0 <= lower < upper per axis, got [{a}, {b}]"
                )));
            }
        }
        Ok(Rect { lower, upper })
    }

    /// Cube `[a, a + edge]^n`.
    pub fn cube(a: f64, edge: f64, n: usize) -> Result<Self> {
        Rect::new(vec![a; n], vec![a + edge; n])
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dims()
            && u.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (a, b))| *x >= *a - 1e-12 && *x <= *b + 1e-12)
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).product()
    }

    /// Evenly spaced grid with `density` points per axis, endpoints included.
    pub fn grid(&self, density: usize) -> Vec<Vec<f64>> {
        assert!(density >= 2);
        let n = self.dims();
        let mut pts = Vec::with_capacity(density.pow(n as u32));
        let mut idx = vec![0usize; n];
        loop {
            let p: Vec<f64> = (0..n)
                .map(|l| {
                    let t = idx[l] as f64 / (density - 1) as f64;
                    self.lower[l] + t * (self.upper[l] - self.lower[l])
                })
                .collect();
            pts.push(p);
            let mut l = 0;
            loop {
                idx[l] += 1;
                if idx[l] < density {
                    break;
                }
                idx[l] = 0;
                l += 1;
                if l == n {
                    return pts;
                }
            }
        }
    }
}

/// Built-in evaluator families for the functional index.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum HurstEvaluator {
    /// `h_l(u) = h_l` (linear fractional stable sheet).
    Constant { h: Vec<f64> },
    /// `h_l(u) = base_l - (u_l - q_l)^{k_l}` for `u_l >= q_l`.
    PowerLaw { base: Vec<f64>, q: Vec<f64>, k: Vec<f64> },
    /// `h_l(u) = intercept_l + <slopes_l, u>`.
    Affine { intercept: Vec<f64>, slopes: Vec<Vec<f64>> },
    /// Multilinear interpolation of per-component tables over a shared
    /// tensor-product grid; `values[l]` is row-major over `axes`.
    Table { axes: Vec<Vec<f64>>, values: Vec<Vec<f64>> },
}

/// Kind tag distinguishing constant-index sheets from truly multifractional ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HurstKind {
    Constant,
    Functional,
}

/// The functional index together with its declared regularity data:
/// componentwise bounds `m_l <= h_l(u) <= M_l` and the Lipschitz constant
/// `c` of `h_l` with respect to the metric `rho`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HurstSpec {
    #[serde(flatten)]
    pub evaluator: HurstEvaluator,
    /// Lower bounds `m_l`, in (0, 1).
    pub m: Vec<f64>,
    /// Upper bounds `M_l`, in (0, 1).
    #[serde(rename = "M")]
    pub upper_m: Vec<f64>,
    /// Declared Lipschitz constant for the rho-metric smoothness condition.
    pub c: f64,
}

impl HurstSpec {
    pub fn new(evaluator: HurstEvaluator, m: Vec<f64>, upper_m: Vec<f64>, c: f64) -> Result<Self> {
        let spec = HurstSpec { evaluator, m, upper_m, c };
        spec.validate()?;
        Ok(spec)
    }

    /// Constant spec with bounds hugging the constant value.
    pub fn constant(h: Vec<f64>) -> Result<Self> {
        let m: Vec<f64> = h.iter().map(|v| (v - 1e-6).max(1e-9)).collect();
        let upper_m: Vec<f64> = h.iter().map(|v| (v + 1e-6).min(1.0 - 1e-9)).collect();
        HurstSpec::new(HurstEvaluator::Constant { h }, m, upper_m, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dims();
        if n == 0 {
            return Err(CoreError::invalid("hurst spec: zero dimensions"));
        }
        if self.m.len() != n || self.upper_m.len() != n {
            return Err(CoreError::invalid("hurst spec: bound vectors must match dimension"));
        }
        for l in 0..n {
            if !(0.0 < self.m[l] && self.m[l] < self.upper_m[l] && self.upper_m[l] < 1.0) {
                return Err(CoreError::invalid(format!(
                    "hurst spec: need 0 < m_{l} < M_{l} < 1, got ({}, {})",
                    self.m[l], self.upper_m[l]
                )));
            }
        }
        if self.c < 0.0 {
            return Err(CoreError::invalid("hurst spec: lipschitz constant must be >= 0"));
        }
        match &self.evaluator {
            HurstEvaluator::Constant { h } => {
                if h.len() != n {
                    return Err(CoreError::invalid("constant evaluator: wrong dimension"));
                }
            }
            HurstEvaluator::PowerLaw { base, q, k } => {
                if base.len() != n || q.len() != n || k.len() != n {
                    return Err(CoreError::invalid("power_law evaluator: wrong dimension"));
                }
                if k.iter().any(|&v| v <= 0.0) || q.iter().any(|&v| v < 0.0) {
                    return Err(CoreError::invalid("power_law evaluator: need k > 0, q >= 0"));
                }
            }
            HurstEvaluator::Affine { intercept, slopes } => {
                if intercept.len() != n || slopes.len() != n || slopes.iter().any(|s| s.len() != n)
                {
                    return Err(CoreError::invalid("affine evaluator: wrong dimension"));
                }
            }
            HurstEvaluator::Table { axes, values } => {
                if axes.len() != n || values.len() != n {
                    return Err(CoreError::invalid("table evaluator: wrong dimension"));
                }
                let cells: usize = axes.iter().map(|a| a.len()).product();
                if axes.iter().any(|a| a.len() < 2)
                    || axes.iter().any(|a| a.windows(2).any(|w| w[0] >= w[1]))
                {
                    return Err(CoreError::invalid("table evaluator: axes must be increasing"));
                }
                if values.iter().any(|v| v.len() != cells) {
                    return Err(CoreError::invalid("table evaluator: value length mismatch"));
                }
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.m.len()
    }

    pub fn kind(&self) -> HurstKind {
        match self.evaluator {
            HurstEvaluator::Constant { .. } => HurstKind::Constant,
            _ => HurstKind::Functional,
        }
    }

    /// Evaluate `H(u)` without enforcing the declared bounds. Used by the
    /// diagnostic scan, which must be able to observe violations.
    pub fn eval_unchecked(&self, u: &[f64]) -> Result<Vec<f64>> {
        let n = self.dims();
        if u.len() != n {
            return Err(CoreError::invalid("eval: point dimension mismatch"));
        }
        if u.iter().any(|&x| x < 0.0) {
            return Err(CoreError::OutOfDomain(format!("eval: point {u:?} not in R_+^N")));
        }
        match &self.evaluator {
            HurstEvaluator::Constant { h } => Ok(h.clone()),
            HurstEvaluator::PowerLaw { base, q, k } => {
                let mut out = Vec::with_capacity(n);
                for l in 0..n {
                    if u[l] < q[l] - 1e-12 {
                        return Err(CoreError::OutOfDomain(format!(
                            "power_law: u_{l} = {} below offset q_{l} = {}",
                            u[l], q[l]
                        )));
                    }
                    out.push(base[l] - (u[l] - q[l]).max(0.0).powf(k[l]));
                }
                Ok(out)
            }
            HurstEvaluator::Affine { intercept, slopes } => Ok((0..n)
                .map(|l| intercept[l] + slopes[l].iter().zip(u).map(|(s, x)| s * x).sum::<f64>())
                .collect()),
            HurstEvaluator::Table { axes, values } => {
                // Locate u in the tensor grid and interpolate multilinearly.
                let mut cell = Vec::with_capacity(n);
                for l in 0..n {
                    let ax = &axes[l];
                    if u[l] < ax[0] - 1e-12 || u[l] > ax[ax.len() - 1] + 1e-12 {
                        return Err(CoreError::OutOfDomain(format!(
                            "table: u_{l} = {} outside [{}, {}]",
                            u[l],
                            ax[0],
                            ax[ax.len() - 1]
                        )));
                    }
                    let j = match ax.binary_search_by(|p| p.partial_cmp(&u[l]).unwrap()) {
                        Ok(j) => j.min(ax.len() - 2),
                        Err(j) => j.saturating_sub(1).min(ax.len() - 2),
                    };
                    let w = ((u[l] - ax[j]) / (ax[j + 1] - ax[j])).clamp(0.0, 1.0);
                    cell.push((j, w));
                }
                let strides: Vec<usize> = {
                    let mut s = vec![1usize; n];
                    for l in (0..n.saturating_sub(1)).rev() {
                        s[l] = s[l + 1] * axes[l + 1].len();
                    }
                    s
                };
                let mut out = Vec::with_capacity(n);
                for table in values {
                    let mut acc = 0.0;
                    for corner in 0..(1usize << n) {
                        let mut weight = 1.0;
                        let mut index = 0usize;
                        for l in 0..n {
                            let (j, w) = cell[l];
                            if corner >> l & 1 == 1 {
                                weight *= w;
                                index += (j + 1) * strides[l];
                            } else {
                                weight *= 1.0 - w;
                                index += j * strides[l];
                            }
                        }
                        acc += weight * table[index];
                    }
                    out.push(acc);
                }
                Ok(out)
            }
        }
    }

    /// Evaluate `H(u)` and enforce the declared componentwise bounds. A
    /// violation signals a misconfigured spec.
    pub fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        let h = self.eval_unchecked(u)?;
        for l in 0..h.len() {
            if h[l] < self.m[l] - 1e-9 || h[l] > self.upper_m[l] + 1e-9 {
                return Err(CoreError::invalid(format!(
                    "bound violation: h_{l}({u:?}) = {} outside [{}, {}]",
                    h[l], self.m[l], self.upper_m[l]
                )));
            }
        }
        Ok(h)
    }
}

// Manual Deserialize so unknown fields are rejected; a flattened adjacently
// tagged enum would silently swallow them.
impl<'de> Deserialize<'de> for HurstSpec {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            kind: String,
            params: serde_json::Value,
            m: Vec<f64>,
            #[serde(rename = "M")]
            upper_m: Vec<f64>,
            c: f64,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct ConstantParams {
            h: Vec<f64>,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct PowerLawParams {
            base: Vec<f64>,
            q: Vec<f64>,
            k: Vec<f64>,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct AffineParams {
            intercept: Vec<f64>,
            slopes: Vec<Vec<f64>>,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct TableParams {
            axes: Vec<Vec<f64>>,
            values: Vec<Vec<f64>>,
        }

        let raw = Raw::deserialize(de)?;
        let evaluator = match raw.kind.as_str() {
            "constant" => {
                let p: ConstantParams =
                    serde_json::from_value(raw.params).map_err(D::Error::custom)?;
                HurstEvaluator::Constant { h: p.h }
            }
            "power_law" => {
                let p: PowerLawParams =
                    serde_json::from_value(raw.params).map_err(D::Error::custom)?;
                HurstEvaluator::PowerLaw { base: p.base, q: p.q, k: p.k }
            }
            "affine" => {
                let p: AffineParams =
                    serde_json::from_value(raw.params).map_err(D::Error::custom)?;
                HurstEvaluator::Affine { intercept: p.intercept, slopes: p.slopes }
            }
            "table" => {
                let p: TableParams =
                    serde_json::from_value(raw.params).map_err(D::Error::custom)?;
                HurstEvaluator::Table { axes: p.axes, values: p.values }
            }
            other => {
                return Err(D::Error::custom(format!(
                    "unknown hurst kind {other:?}; expected constant | power_law | affine | table"
                )))
            }
        };
        let spec = HurstSpec { evaluator, m: raw.m, upper_m: raw.upper_m, c: raw.c };
        spec.validate().map_err(D::Error::custom)?;
        Ok(spec)
    }
}

/// The anisotropic metric `rho(u, v) = sum_l min(|u_l-v_l|^{m_l}, |u_l-v_l|^{M_l})`.
pub fn rho_metric(u: &[f64], v: &[f64], m: &[f64], upper_m: &[f64]) -> Result<f64> {
    if u.len() != v.len() || u.len() != m.len() || m.len() != upper_m.len() {
        return Err(CoreError::invalid("rho_metric: dimension mismatch"));
    }
    Ok(u.iter()
        .zip(v)
        .zip(m.iter().zip(upper_m))
        .map(|((a, b), (ml, mu))| {
            let d = (a - b).abs();
            d.powf(*ml).min(d.powf(*mu))
        })
        .sum())
}

/// One observed violation of the componentwise bounds.
#[derive(Clone, Debug, Serialize)]
pub struct BoundViolation {
    pub point: Vec<f64>,
    pub axis: usize,
    pub value: f64,
}

/// Outcome of the smoothness/bounds diagnostic scan.
#[derive(Clone, Debug, Serialize)]
pub struct SmoothnessReport {
    /// Max of `|h_l(u) - h_l(v)| / rho(u, v)` over the sampled pairs.
    pub max_ratio: f64,
    pub declared_c: f64,
    pub lipschitz_pass: bool,
    pub bound_violations: Vec<BoundViolation>,
    pub violation_count: usize,
    pub bounds_pass: bool,
    pub points_sampled: usize,
}

/// Scan a grid of points on `rect`, reporting the empirical Lipschitz ratio
/// against the declared constant and any componentwise bound violations.
/// Report-only: a failing spec does not error here.
pub fn check_h1_h2(spec: &HurstSpec, rect: &Rect, grid_density: usize) -> Result<SmoothnessReport> {
    if grid_density < 2 {
        return Err(CoreError::invalid("check_h1_h2: grid_density must be >= 2"));
    }
    if rect.dims() != spec.dims() {
        return Err(CoreError::invalid("check_h1_h2: rect dimension mismatch"));
    }
    let mut points = rect.grid(grid_density);
    // Deterministic thinning keeps the all-pairs scan tractable.
    const MAX_POINTS: usize = 512;
    if points.len() > MAX_POINTS {
        let stride = points.len().div_ceil(MAX_POINTS);
        points = points.into_iter().step_by(stride).collect();
    }
    let values: Vec<Vec<f64>> =
        points.iter().map(|p| spec.eval_unchecked(p)).collect::<Result<_>>()?;

    let mut violations = Vec::new();
    let mut violation_count = 0usize;
    for (p, h) in points.iter().zip(&values) {
        for l in 0..spec.dims() {
            if h[l] < spec.m[l] - 1e-12 || h[l] > spec.upper_m[l] + 1e-12 {
                violation_count += 1;
                if violations.len() < 16 {
                    violations.push(BoundViolation { point: p.clone(), axis: l, value: h[l] });
                }
            }
        }
    }

    let mut max_ratio: f64 = 0.0;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let rho = rho_metric(&points[i], &points[j], &spec.m, &spec.upper_m)?;
            if rho <= 0.0 {
                continue;
            }
            for l in 0..spec.dims() {
                let ratio = (values[i][l] - values[j][l]).abs() / rho;
                max_ratio = max_ratio.max(ratio);
            }
        }
    }

    Ok(SmoothnessReport {
        max_ratio,
        declared_c: spec.c,
        lipschitz_pass: max_ratio <= spec.c * (1.0 + 1e-9),
        bounds_pass: violation_count == 0,
        bound_violations: violations,
        violation_count,
        points_sampled: points.len(),
    })
}

/// Minimal `gamma` in `1..=N` with `d < sum_{l<=gamma} 1/h_l`.
pub fn gamma_index(h: &[f64], d: usize) -> Result<usize> {
    if h.is_empty() || h.iter().any(|&v| v <= 0.0 || v >= 1.0) {
        return Err(CoreError::invalid("gamma_index: h must lie in (0,1)^N"));
    }
    let d = d as f64;
    let mut partial = 0.0;
    for (idx, &hl) in h.iter().enumerate() {
        partial += 1.0 / hl;
        if d < partial {
            return Ok(idx + 1);
        }
    }
    Err(CoreError::ConditionViolated(format!(
        "condition C1 violated: d = {d} >= sum 1/h_l = {partial}"
    )))
}

/// Apply a permutation (0-based) to the index vector.
fn permute(h: &[f64], perm: &[usize]) -> Vec<f64> {
    perm.iter().map(|&i| h[i]).collect()
}

/// The local-time scaling exponent for a permuted index vector:
/// `beta = N - gamma + h_gamma * (sum_{l<=gamma} 1/h_l - d)`, with all
/// quantities read off the permuted vector.
pub fn beta_exponent(h: &[f64], d: usize, perm: &[usize]) -> Result<f64> {
    let n = h.len();
    if perm.len() != n {
        return Err(CoreError::invalid("beta_exponent: permutation length mismatch"));
    }
    let hp = permute(h, perm);
    let gamma = gamma_index(&hp, d)?;
    let partial: f64 = hp[..gamma].iter().map(|v| 1.0 / v).sum();
    Ok(n as f64 - gamma as f64 + hp[gamma - 1] * (partial - d as f64))
}

/// Supremum of `beta` over a sampling grid of `rect` and all axis
/// permutations (exhaustive; N <= 4).
pub fn beta_bar(spec: &HurstSpec, rect: &Rect, d: usize, grid_density: usize) -> Result<f64> {
    let n = spec.dims();
    if n > 4 {
        return Err(CoreError::invalid("beta_bar: exhaustive permutations limited to N <= 4"));
    }
    if grid_density < 2 {
        return Err(CoreError::invalid("beta_bar: grid_density must be >= 2"));
    }
    let perms: Vec<Vec<usize>> = (0..n).permutations(n).collect();
    let mut sup = f64::NEG_INFINITY;
    for v in rect.grid(grid_density) {
        let h = spec.eval(&v)?;
        for perm in &perms {
            sup = sup.max(beta_exponent(&h, d, perm)?);
        }
    }
    Ok(sup)
}

/// Moment-splitting weights `p_l = h_l * sum_{l'} 1/h_{l'}`; always satisfies
/// `sum_l 1/p_l = 1`.
pub fn holder_p_weights(h: &[f64]) -> Vec<f64> {
    let s: f64 = h.iter().map(|v| 1.0 / v).sum();
    h.iter().map(|v| v * s).collect()
}

/// Admissible open interval for the moment-increment exponent `kappa_n`:
/// `n * kappa_n in (0, 1 min alpha_gamma / (2 gamma))` with
/// `alpha_gamma = sum_{l<=gamma} 1/h_l - d`.
pub fn kappa_range(h: &[f64], d: usize, n: usize) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(CoreError::invalid("kappa_range: moment order n must be >= 1"));
    }
    let gamma = gamma_index(h, d).map_err(|e| {
        CoreError::ConditionViolated(format!("kappa_range: empty interval ({e})"))
    })?;
    let alpha_gamma: f64 = h[..gamma].iter().map(|v| 1.0 / v).sum::<f64>() - d as f64;
    let hi = 1.0f64.min(alpha_gamma / (2.0 * gamma as f64)) / n as f64;
    if hi <= 0.0 {
        return Err(CoreError::ConditionViolated("kappa_range: empty interval".into()));
    }
    Ok((0.0, hi))
}

/// Bundle of the exponents at a single index vector.
#[derive(Clone, Debug, Serialize)]
pub struct ExponentReport {
    pub gamma: usize,
    pub beta: f64,
    pub p_weights: Vec<f64>,
    pub kappa_interval: (f64, f64),
    /// Midpoint of the admissible interval; the probes use and record it.
    pub kappa_choice: f64,
}

pub fn exponent_report(h: &[f64], d: usize, n: usize) -> Result<ExponentReport> {
    let identity: Vec<usize> = (0..h.len()).collect();
    let gamma = gamma_index(h, d)?;
    let beta = beta_exponent(h, d, &identity)?;
    let p_weights = holder_p_weights(h);
    let kappa_interval = kappa_range(h, d, n)?;
    Ok(ExponentReport {
        gamma,
        beta,
        p_weights,
        kappa_interval,
        kappa_choice: 0.5 * (kappa_interval.0 + kappa_interval.1),
    })
}
