//! Benchmark fixtures for the elssa criterion suite.

use elssa::rng::NormalStream;
use elssa::synth::{gen_el_like, ElSynthSpec};
use elssa::Image2D;

/// Square noise image with unit variance.
pub fn noise_image(n: usize, seed: u64) -> Image2D {
    Image2D::new(n, n, NormalStream::new(seed, 1).normals(n * n, 1.0)).expect("normal samples are finite")
}

/// Default synthetic EL image.
pub fn el_image(seed: u64) -> Image2D {
    gen_el_like(&ElSynthSpec::preset(seed)).expect("preset is valid").0
}

/// Random vector of length `n`.
pub fn vector(n: usize, seed: u64) -> Vec<f64> {
    NormalStream::new(seed, 2).normals(n, 1.0)
}
