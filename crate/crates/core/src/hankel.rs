//! Hankel-block-Hankel trajectory operator of a 2D array.
//!
//! For a window `(L_x, L_y)` the trajectory matrix has `L_x * L_y` rows and
//! `K_x * K_y` columns. Row `i * L_x + a` and column `j * K_x + b` hold
//! `x(a + b, i + j)`: block `(i, j)` is the Hankel block built from image
//! column `i + j`. Left vectors are therefore `L_x x L_y` windows stored
//! column-major, right vectors `K_x x K_y` arrays stored the same way.
//!
//! Products with the matrix and its transpose are 2D correlations of the
//! source image with the reshaped vector, evaluated with one stored spectrum
//! of the image, so nothing of size `O(N^2)` is ever formed.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::{recycle_complex, recycle_real, smooth_size, Fft2d};
use crate::grid::Image2D;
use crate::lowrank::LinearOperator;

/// Entry guard for dense materialization.
pub const DENSE_ENTRY_LIMIT: usize = 10_000_000;

/// 2D embedding window together with the image shape it applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingWindow {
    lx: usize,
    ly: usize,
    nx: usize,
    ny: usize,
}

impl EmbeddingWindow {
    pub fn new(lx: usize, ly: usize, dims: (usize, usize)) -> Result<Self> {
        let (nx, ny) = dims;
        let err = |reason| Error::InvalidWindow { lx, ly, nx, ny, reason };
        if nx == 0 || ny == 0 {
            return Err(err("image must be non-empty"));
        }
        if lx < 1 || lx > nx {
            return Err(err("L_x must lie in [1, N_x]"));
        }
        if ly < 1 || ly > ny {
            return Err(err("L_y must lie in [1, N_y]"));
        }
        let l = lx * ly;
        if l <= 1 || l >= nx * ny {
            return Err(err("L_x * L_y must lie strictly between 1 and N_x * N_y"));
        }
        Ok(Self { lx, ly, nx, ny })
    }

    /// Window of about half the image in each direction, `(ceil(N_x/2), ceil(N_y/2))`.
    pub fn half(dims: (usize, usize)) -> Result<Self> {
        Self::new(dims.0.div_ceil(2), dims.1.div_ceil(2), dims)
    }

    pub fn lx(&self) -> usize {
        self.lx
    }
    pub fn ly(&self) -> usize {
        self.ly
    }
    pub fn kx(&self) -> usize {
        self.nx - self.lx + 1
    }
    pub fn ky(&self) -> usize {
        self.ny - self.ly + 1
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }
    /// Length of left singular vectors, `L_x * L_y`.
    pub fn left_len(&self) -> usize {
        self.lx * self.ly
    }
    /// Length of right singular vectors, `K_x * K_y`.
    pub fn right_len(&self) -> usize {
        self.kx() * self.ky()
    }
}

/// Number of trajectory entries mapped to pixel `n` of a 1D Hankel embedding.
fn multiplicity(n: usize, len: usize, window: usize) -> usize {
    let k = len - window + 1;
    (n + 1).min(window).min(k).min(len - n)
}

/// Multiplicity table: how many trajectory entries map to each pixel.
pub fn pixel_weights(w: &EmbeddingWindow) -> Image2D {
    let (nx, ny) = w.dims();
    Image2D::from_fn(nx, ny, |n, m| {
        (multiplicity(n, nx, w.lx) * multiplicity(m, ny, w.ly)) as f64
    })
}

/// Dense trajectory matrix. Test oracle; guarded to `DENSE_ENTRY_LIMIT` entries.
pub fn dense_hbh(img: &Image2D, w: &EmbeddingWindow) -> Result<DMatrix<f64>> {
    check_dims(img, w)?;
    let entries = w.left_len() * w.right_len();
    if entries > DENSE_ENTRY_LIMIT {
        return Err(Error::TooLarge {
            entries,
            limit: DENSE_ENTRY_LIMIT,
        });
    }
    let (lx, kx) = (w.lx, w.kx());
    Ok(DMatrix::from_fn(w.left_len(), w.right_len(), |r, c| {
        let (i, a) = (r / lx, r % lx);
        let (j, b) = (c / kx, c % kx);
        img.get(a + b, i + j)
    }))
}

fn check_dims(img: &Image2D, w: &EmbeddingWindow) -> Result<()> {
    if img.dims() != w.dims() {
        return Err(Error::InvalidInput(format!(
            "window built for {:?} applied to a {:?} image",
            w.dims(),
            img.dims()
        )));
    }
    Ok(())
}

/// Implicit trajectory matrix of an image.
#[derive(Debug, Clone)]
pub struct HbhOperator {
    source: Image2D,
    window: EmbeddingWindow,
    plan: Fft2d,
    spectrum: Vec<Complex64>,
}

impl HbhOperator {
    pub fn new(img: &Image2D, w: EmbeddingWindow) -> Result<Self> {
        check_dims(img, &w)?;
        let (nx, ny) = img.dims();
        // the grid is stored transposed (one image column per grid row) so
        // that window vectors, whose fast index runs down image rows, map to
        // contiguous runs
        let plan = Fft2d::new(smooth_size(ny), smooth_size(nx));
        let mut buf = plan.zeroed();
        for n in 0..nx {
            for (m, &x) in img.row(n).iter().enumerate() {
                buf[m * plan.cols() + n] = x;
            }
        }
        let spectrum = plan.forward(&buf, 0..ny);
        Ok(Self {
            source: img.clone(),
            window: w,
            plan,
            spectrum,
        })
    }

    pub fn source(&self) -> &Image2D {
        &self.source
    }

    pub fn window(&self) -> &EmbeddingWindow {
        &self.window
    }

    /// `X v`, with `v` of length `K_x * K_y`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.window.right_len() {
            return Err(Error::DimensionMismatch {
                expected: self.window.right_len(),
                actual: v.len(),
            });
        }
        let w = &self.window;
        Ok(self.correlate(v, (w.kx(), w.ky()), (w.lx, w.ly)))
    }

    /// `X^T u`, with `u` of length `L_x * L_y`.
    pub fn rmatvec(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.window.left_len() {
            return Err(Error::DimensionMismatch {
                expected: self.window.left_len(),
                actual: u.len(),
            });
        }
        let w = &self.window;
        Ok(self.correlate(u, (w.lx, w.ly), (w.kx(), w.ky())))
    }

    /// `out(p, q) = sum_{b, j} x(p + b, q + j) * kernel(b, j)` for `p < out.0`,
    /// `q < out.1`, where `kernel` is a column-major `kdims` array.
    fn correlate(&self, kernel: &[f64], kdims: (usize, usize), out: (usize, usize)) -> Vec<f64> {
        let (kr, kc) = kdims;
        let pc = self.plan.cols();
        let mut buf = self.plan.zeroed();
        // reversed kernel turns the correlation into a convolution
        for (j, col) in kernel.chunks_exact(kr).enumerate() {
            let dst = &mut buf[(kc - 1 - j) * pc..(kc - 1 - j) * pc + kr];
            for (d, &k) in dst.iter_mut().rev().zip(col) {
                *d = k;
            }
        }
        let mut spec = self.plan.forward(&buf, 0..kc);
        recycle_real(buf);
        for (s, x) in spec.iter_mut().zip(&self.spectrum) {
            *s *= x;
        }
        let (or, oc) = out;
        let conv = self.plan.inverse(spec, kc - 1..kc - 1 + oc);
        let mut result = Vec::with_capacity(or * oc);
        for i in 0..oc {
            let start = (i + kc - 1) * pc + kr - 1;
            result.extend_from_slice(&conv[start..start + or]);
        }
        recycle_real(conv);
        result
    }
}

impl LinearOperator for HbhOperator {
    fn nrows(&self) -> usize {
        self.window.left_len()
    }

    fn ncols(&self) -> usize {
        self.window.right_len()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.matvec(v).expect("vector length checked by caller")
    }

    fn apply_transpose(&self, u: &[f64]) -> Vec<f64> {
        self.rmatvec(u).expect("vector length checked by caller")
    }
}

/// A weighted rank-one trajectory term `sigma * u * v^T`.
#[derive(Debug, Clone, Copy)]
pub struct RankOneTerm<'a> {
    pub sigma: f64,
    pub u: &'a [f64],
    pub v: &'a [f64],
}

/// Projects `sum sigma * u * v^T` onto Hankel-block-Hankel matrices and
/// returns the image it embeds: every pixel is the mean of the matrix
/// entries that map to it.
///
/// Each term contributes the full 2D convolution of its reshaped `u` and
/// `v`; contributions are summed in the frequency domain and inverted once.
pub fn hankelize(terms: &[RankOneTerm<'_>], w: &EmbeddingWindow) -> Result<Image2D> {
    for t in terms {
        if t.u.len() != w.left_len() {
            return Err(Error::DimensionMismatch {
                expected: w.left_len(),
                actual: t.u.len(),
            });
        }
        if t.v.len() != w.right_len() {
            return Err(Error::DimensionMismatch {
                expected: w.right_len(),
                actual: t.v.len(),
            });
        }
    }
    let (nx, ny) = w.dims();
    if terms.is_empty() {
        return Ok(Image2D::zeros(nx, ny));
    }
    // transposed grid, as in the operator
    let plan = Fft2d::new(smooth_size(ny), smooth_size(nx));
    let embed = |vec: &[f64], r: usize, c: usize, scale: f64| {
        let mut buf = plan.zeroed();
        for (j, col) in vec.chunks_exact(r).enumerate() {
            for (d, &x) in buf[j * plan.cols()..j * plan.cols() + r].iter_mut().zip(col) {
                *d = scale * x;
            }
        }
        let spec = plan.forward(&buf, 0..c);
        recycle_real(buf);
        spec
    };
    // one contiguous chunk per thread, summed in order, so the result is
    // reproducible for a fixed thread count
    let chunk = terms.len().div_ceil(rayon::current_num_threads());
    let partials: Vec<Vec<Complex64>> = terms
        .par_chunks(chunk)
        .map(|group| {
            let mut acc: Option<Vec<Complex64>> = None;
            for t in group {
                let mut fu = embed(t.u, w.lx, w.ly, t.sigma);
                let fv = embed(t.v, w.kx(), w.ky(), 1.0);
                for (a, b) in fu.iter_mut().zip(&fv) {
                    *a *= b;
                }
                recycle_complex(fv);
                acc = Some(match acc {
                    None => fu,
                    Some(mut acc) => {
                        for (a, b) in acc.iter_mut().zip(&fu) {
                            *a += b;
                        }
                        recycle_complex(fu);
                        acc
                    }
                });
            }
            acc.expect("chunks are non-empty")
        })
        .collect();
    let mut partials = partials.into_iter();
    let mut total = partials.next().expect("terms are non-empty");
    for p in partials {
        for (a, b) in total.iter_mut().zip(&p) {
            *a += b;
        }
    }
    let sums = plan.inverse(total, 0..ny);
    Image2D::new(
        nx,
        ny,
        (0..nx * ny)
            .map(|p| {
                let (n, m) = (p / ny, p % ny);
                let weight = multiplicity(n, nx, w.lx) * multiplicity(m, ny, w.ly);
                sums[m * plan.cols() + n] / weight as f64
            })
            .collect(),
    )
}

/// Trajectory-matrix Frobenius norm squared, `sum_p weight(p) * x(p)^2`.
pub fn trajectory_energy(img: &Image2D, w: &EmbeddingWindow) -> f64 {
    let weights = pixel_weights(w);
    img.values()
        .iter()
        .zip(weights.values())
        .map(|(x, wt)| wt * x * x)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp3() -> Image2D {
        Image2D::from_fn(3, 3, |n, m| (3 * n + m + 1) as f64)
    }

    #[test]
    fn window_constraints() {
        assert!(EmbeddingWindow::new(2, 2, (3, 3)).is_ok());
        assert!(EmbeddingWindow::new(3, 3, (3, 3)).is_err());
        assert!(EmbeddingWindow::new(1, 1, (3, 3)).is_err());
        assert!(EmbeddingWindow::new(0, 2, (3, 3)).is_err());
        assert!(EmbeddingWindow::new(4, 1, (3, 3)).is_err());
        let w = EmbeddingWindow::half((7, 10)).unwrap();
        assert_eq!((w.lx(), w.ly()), (4, 5));
        assert_eq!((w.kx(), w.ky()), (4, 6));
    }

    #[test]
    fn dense_layout_matches_block_structure() {
        let w = EmbeddingWindow::new(2, 2, (3, 3)).unwrap();
        let d = dense_hbh(&ramp3(), &w).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[1., 4., 2., 5., 4., 7., 5., 8., 2., 5., 3., 6., 5., 8., 6., 9.],
        );
        assert_eq!(d, expected);
    }

    #[test]
    fn dense_two_by_two_single_row_window() {
        let (a, b, c, dd) = (1.5, -2.0, 3.25, 7.0);
        let img = Image2D::new(2, 2, vec![a, b, c, dd]).unwrap();
        let w = EmbeddingWindow::new(1, 2, (2, 2)).unwrap();
        let d = dense_hbh(&img, &w).unwrap();
        assert_eq!(d, DMatrix::from_row_slice(2, 2, &[a, c, b, dd]));
    }

    #[test]
    fn dense_constant_image() {
        let img = Image2D::from_fn(4, 5, |_, _| 2.5);
        let w = EmbeddingWindow::new(2, 3, (4, 5)).unwrap();
        assert!(dense_hbh(&img, &w).unwrap().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn dense_guard() {
        let img = Image2D::zeros(200, 200);
        let w = EmbeddingWindow::half((200, 200)).unwrap();
        assert!(matches!(dense_hbh(&img, &w), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn operator_shape_and_small_products() {
        let w = EmbeddingWindow::new(2, 2, (3, 3)).unwrap();
        let op = HbhOperator::new(&ramp3(), w).unwrap();
        assert_eq!((op.nrows(), op.ncols()), (4, 4));
        let col = op.matvec(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let row = op.rmatvec(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        for (got, e) in col.iter().zip([1.0, 4.0, 2.0, 5.0]) {
            assert!((got - e).abs() < 1e-12);
        }
        for (got, e) in row.iter().zip([1.0, 4.0, 2.0, 5.0]) {
            assert!((got - e).abs() < 1e-12);
        }
        assert!(op.matvec(&[0.0; 4]).unwrap().iter().all(|v| v.abs() < 1e-15));
        assert!(op.rmatvec(&[0.0; 4]).unwrap().iter().all(|v| v.abs() < 1e-15));
        assert!(op.matvec(&[1.0; 3]).is_err());
        assert!(op.rmatvec(&[1.0; 5]).is_err());
    }

    #[test]
    fn single_row_image_is_plain_hankel() {
        let row: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).sin()).collect();
        let img = Image2D::new(1, 9, row.clone()).unwrap();
        let w = EmbeddingWindow::new(1, 4, (1, 9)).unwrap();
        let d = dense_hbh(&img, &w).unwrap();
        assert_eq!(d.shape(), (4, 6));
        for r in 0..4 {
            for c in 0..6 {
                assert_eq!(d[(r, c)], row[r + c]);
            }
        }
        let op = HbhOperator::new(&img, w).unwrap();
        let v: Vec<f64> = (0..6).map(|i| i as f64 - 2.0).collect();
        let fast = op.matvec(&v).unwrap();
        let slow = &d * nalgebra::DVector::from_vec(v);
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_examples() {
        let w = EmbeddingWindow::new(2, 2, (3, 3)).unwrap();
        let weights = pixel_weights(&w);
        assert_eq!(weights.values(), &[1., 2., 1., 2., 4., 2., 1., 2., 1.]);

        // L = (1, 1) is not a valid window, but the 1D factor is still 1 everywhere
        assert!((0..5).all(|n| multiplicity(n, 5, 1) == 1));
        let w = EmbeddingWindow::new(1, 2, (3, 4)).unwrap();
        let weights = pixel_weights(&w);
        assert_eq!(weights.get(0, 0), 1.0);
        assert_eq!(weights.get(2, 1), 2.0);

        for (lx, ly, nx, ny) in [(2, 3, 5, 7), (4, 4, 9, 6), (1, 5, 3, 8)] {
            let w = EmbeddingWindow::new(lx, ly, (nx, ny)).unwrap();
            let total: f64 = pixel_weights(&w).values().iter().sum();
            assert_eq!(total as usize, w.left_len() * w.right_len());
        }
    }

    #[test]
    fn weights_match_dense_enumeration() {
        let w = EmbeddingWindow::new(3, 2, (5, 4)).unwrap();
        let mut counts = Image2D::zeros(5, 4);
        let (lx, kx) = (w.lx(), w.kx());
        for r in 0..w.left_len() {
            for c in 0..w.right_len() {
                let (n, m) = (r % lx + c % kx, r / lx + c / kx);
                counts.set(n, m, counts.get(n, m) + 1.0);
            }
        }
        assert_eq!(counts, pixel_weights(&w));
    }

    #[test]
    fn hankelize_unit_corner_entry() {
        let w = EmbeddingWindow::new(2, 2, (3, 3)).unwrap();
        let e1 = [1.0, 0.0, 0.0, 0.0];
        let img = hankelize(&[RankOneTerm { sigma: 1.0, u: &e1, v: &e1 }], &w).unwrap();
        let mut expected = vec![0.0; 9];
        expected[0] = 1.0;
        for (a, b) in img.values().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn hankelize_interior_entry_is_averaged() {
        // entry (row 1, col 0) maps to pixel (1, 0), which has multiplicity 2
        let w = EmbeddingWindow::new(2, 2, (3, 3)).unwrap();
        let u = [0.0, 1.0, 0.0, 0.0];
        let v = [1.0, 0.0, 0.0, 0.0];
        let img = hankelize(&[RankOneTerm { sigma: 3.0, u: &u, v: &v }], &w).unwrap();
        assert!((img.get(1, 0) - 1.5).abs() < 1e-14);
        assert!(img.get(0, 0).abs() < 1e-14);
    }

    #[test]
    fn hankelize_empty_and_mismatch() {
        let w = EmbeddingWindow::new(2, 2, (3, 3)).unwrap();
        assert_eq!(hankelize(&[], &w).unwrap(), Image2D::zeros(3, 3));
        let u = [1.0; 3];
        let v = [1.0; 4];
        assert!(hankelize(&[RankOneTerm { sigma: 1.0, u: &u, v: &v }], &w).is_err());
    }

    #[test]
    fn trajectory_energy_matches_dense() {
        let w = EmbeddingWindow::new(2, 2, (3, 3)).unwrap();
        let d = dense_hbh(&ramp3(), &w).unwrap();
        assert!((trajectory_energy(&ramp3(), &w) - d.norm_squared()).abs() < 1e-12);
        assert_eq!(d.norm_squared(), 480.0);
    }
}
