//! Embedding, truncated decomposition, grouping and reconstruction for
//! images (2D-SSA) and for pairs of series (two-channel MSSA).

use std::ops::Range;

use crate::error::{Error, Result};
use crate::grid::{Image2D, Series1D};
use crate::hankel::{hankelize, EmbeddingWindow, HbhOperator, RankOneTerm};
use crate::lowrank::{truncated_svd, LanczosOptions, LinearOperator, SvdTruncation};
use crate::sigmodel::{fit_amplitude_phase, DampedMode, ParametricModel2D};

pub const DEFAULT_IMAGE_TRIPLES: usize = 50;
pub const DEFAULT_MSSA_TRIPLES: usize = 20;

/// Truncated SVD of an image's trajectory matrix.
#[derive(Debug, Clone)]
pub struct Ssa2dDecomposition {
    pub source: Image2D,
    pub window: EmbeddingWindow,
    pub truncation: SvdTruncation,
}

/// Leading `k` triples of the trajectory matrix of `img`. The window defaults
/// to half the image in each direction.
pub fn decompose_2d(
    img: &Image2D,
    window: Option<EmbeddingWindow>,
    k: usize,
    opts: &LanczosOptions,
) -> Result<Ssa2dDecomposition> {
    let window = match window {
        Some(w) if w.dims() != img.dims() => {
            return Err(Error::DimensionMismatch {
                expected: w.dims().0 * w.dims().1,
                actual: img.len(),
            })
        }
        Some(w) => w,
        None => EmbeddingWindow::half(img.dims())?,
    };
    let op = HbhOperator::new(img, window)?;
    let truncation = truncated_svd(&op, k, opts)?;
    Ok(Ssa2dDecomposition {
        source: img.clone(),
        window,
        truncation,
    })
}

fn check_indices(indices: &[usize], available: usize) -> Result<()> {
    match indices.iter().find(|&&i| i >= available) {
        Some(&i) => Err(Error::InvalidInput(format!(
            "triple index {i} out of range ({available} available)"
        ))),
        None => Ok(()),
    }
}

impl Ssa2dDecomposition {
    pub fn len(&self) -> usize {
        self.truncation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truncation.is_empty()
    }

    /// Image reconstructed from the selected triples (0-based).
    pub fn reconstruct(&self, indices: &[usize]) -> Result<Image2D> {
        check_indices(indices, self.len())?;
        let terms: Vec<RankOneTerm<'_>> = indices
            .iter()
            .map(|&i| {
                let t = &self.truncation.triples[i];
                RankOneTerm {
                    sigma: t.sigma,
                    u: &t.u,
                    v: &t.v,
                }
            })
            .collect();
        hankelize(&terms, &self.window)
    }

    pub fn reconstruct_range(&self, range: Range<usize>) -> Result<Image2D> {
        self.reconstruct(&range.collect::<Vec<_>>())
    }
}

/// Which half of an MSSA pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    First,
    Second,
}

/// `[H(a) : H(b)]` for two equal-length series and a common window length.
struct StackedHankel {
    a: HbhOperator,
    b: HbhOperator,
    k: usize,
}

impl LinearOperator for StackedHankel {
    fn nrows(&self) -> usize {
        self.a.window().left_len()
    }
    fn ncols(&self) -> usize {
        2 * self.k
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.a.apply(&x[..self.k]);
        for (yi, zi) in y.iter_mut().zip(self.b.apply(&x[self.k..])) {
            *yi += zi;
        }
        y
    }
    fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut x = self.a.apply_transpose(y);
        x.extend(self.b.apply_transpose(y));
        x
    }
}

/// Two-channel MSSA: truncated SVD of the horizontally stacked trajectory
/// matrices; both channels share the left singular vectors.
#[derive(Debug, Clone)]
pub struct MssaDecomposition {
    pub first: Series1D,
    pub second: Series1D,
    pub window: usize,
    pub truncation: SvdTruncation,
}

/// Window length `L` defaults to `ceil(N / 2)`.
pub fn decompose_mssa(
    a: &Series1D,
    b: &Series1D,
    window: Option<usize>,
    k: usize,
    opts: &LanczosOptions,
) -> Result<MssaDecomposition> {
    let n = a.len();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: b.len(),
        });
    }
    let l = window.unwrap_or(n.div_ceil(2));
    if l < 2 || l + 1 > n {
        return Err(Error::InvalidWindow {
            lx: l,
            ly: 1,
            nx: n,
            ny: 1,
            reason: "MSSA window must lie in [2, N - 1]",
        });
    }
    let w = EmbeddingWindow::new(l, 1, (n, 1))?;
    let op = StackedHankel {
        a: HbhOperator::new(&a.to_column_image(), w)?,
        b: HbhOperator::new(&b.to_column_image(), w)?,
        k: w.kx(),
    };
    let truncation = truncated_svd(&op, k, opts)?;
    Ok(MssaDecomposition {
        first: a.clone(),
        second: b.clone(),
        window: l,
        truncation,
    })
}

impl MssaDecomposition {
    pub fn len(&self) -> usize {
        self.truncation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truncation.is_empty()
    }

    pub fn series_len(&self) -> usize {
        self.first.len()
    }

    fn embedding(&self) -> EmbeddingWindow {
        EmbeddingWindow::new(self.window, 1, (self.series_len(), 1)).expect("validated at construction")
    }

    /// One channel reconstructed from the selected triples.
    pub fn reconstruct(&self, channel: Channel, indices: &[usize]) -> Result<Vec<f64>> {
        check_indices(indices, self.len())?;
        let w = self.embedding();
        let k = w.kx();
        let terms: Vec<RankOneTerm<'_>> = indices
            .iter()
            .map(|&i| {
                let t = &self.truncation.triples[i];
                let v = match channel {
                    Channel::First => &t.v[..k],
                    Channel::Second => &t.v[k..],
                };
                RankOneTerm {
                    sigma: t.sigma,
                    u: &t.u,
                    v,
                }
            })
            .collect();
        Ok(hankelize(&terms, &w)?.into_values())
    }

    /// Amplitudes and phases of one channel's reconstruction (from `indices`)
    /// against modes estimated on the shared subspace.
    pub fn channel_model(
        &self,
        channel: Channel,
        modes: &[DampedMode],
        indices: &[usize],
    ) -> Result<ParametricModel2D> {
        let series = self.reconstruct(channel, indices)?;
        let target = Image2D::new(series.len(), 1, series)?;
        fit_amplitude_phase(modes, &target)
    }
}
