use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Handle for a reproducible random-number stream.
///
/// The same `(seed, stream)` pair always yields the same sample sequence,
/// independent of thread scheduling. Parallel work gets disjoint streams
/// rather than a shared generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    /// Instantiate the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Derived stream with the same seed and a shifted stream id.
    pub fn substream(&self, offset: u64) -> Self {
        RngStream { seed: self.seed, stream: self.stream.wrapping_add(offset) }
    }
}

/// Uniform draw on the open interval (0, 1); never returns 0 or 1 exactly.
pub fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 && u < 1.0 {
            return u;
        }
    }
}

/// Standard normal via Box-Muller. Consumes exactly two uniforms.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = open_unit(rng);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Gamma(shape, 1) variate, Marsaglia-Tsang with the shape<1 boost.
pub fn gamma_variate(rng: &mut ChaCha8Rng, shape: f64) -> f64 {
    assert!(shape > 0.0, "gamma shape must be positive");
    if shape < 1.0 {
        let g = gamma_variate(rng, shape + 1.0);
        let u = open_unit(rng);
        return g * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = standard_normal(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v3 = v * v * v;
        let u = open_unit(rng);
        if u.ln() < 0.5 * x * x + d - d * v3 + d * v3.ln() {
            return d * v3;
        }
    }
}
