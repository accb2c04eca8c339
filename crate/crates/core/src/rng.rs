//! Counter-based normal noise.
//!
//! The stream is fully specified so other implementations can reproduce it:
//!
//! * key = `mix(seed ^ mix(stream + 0x632BE59BD9B4E019))`
//! * word `i` = `mix(key + (i + 1) * 0x9E3779B97F4A7C15)` (wrapping arithmetic)
//! * uniform `i` = `(word_i >> 11) * 2^-53`, in `[0, 1)`
//! * normals `2j` and `2j + 1` come from Box-Muller on uniforms `2j`, `2j + 1`:
//!   `r = sqrt(-2 ln(1 - u_{2j}))`, `theta = 2 pi u_{2j+1}`, giving
//!   `r cos(theta)` then `r sin(theta)`.
//!
//! `mix` is the SplitMix64 finalizer.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_SALT: u64 = 0x632B_E59B_D9B4_E019;

#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random-access standard normal stream keyed by `(seed, stream)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalStream {
    key: u64,
}

impl NormalStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            key: mix(seed ^ mix(stream.wrapping_add(STREAM_SALT))),
        }
    }

    #[inline]
    pub fn word(&self, i: u64) -> u64 {
        mix(self.key.wrapping_add(i.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    #[inline]
    pub fn uniform(&self, i: u64) -> f64 {
        (self.word(i) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// The `i`-th standard normal sample.
    pub fn normal(&self, i: u64) -> f64 {
        let pair = i / 2;
        let r = (-2.0 * (1.0 - self.uniform(2 * pair)).ln()).sqrt();
        let theta = std::f64::consts::TAU * self.uniform(2 * pair + 1);
        if i.is_multiple_of(2) {
            r * theta.cos()
        } else {
            r * theta.sin()
        }
    }

    /// First `n` samples scaled by `sigma`.
    pub fn normals(&self, n: usize, sigma: f64) -> Vec<f64> {
        (0..n as u64).map(|i| sigma * self.normal(i)).collect()
    }
}
