//! Planned 2D complex transforms used by the trajectory operator.

use std::cell::RefCell;
use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

const POOL_SIZE: usize = 8;

thread_local! {
    static COMPLEX_POOL: RefCell<Vec<Vec<Complex64>>> = const { RefCell::new(Vec::new()) };
    static REAL_POOL: RefCell<Vec<Vec<f64>>> = const { RefCell::new(Vec::new()) };
}

/// Zeroed buffer, reusing a recycled allocation when one is available.
fn take<T: Copy + Default>(pool: &'static std::thread::LocalKey<RefCell<Vec<Vec<T>>>>, len: usize) -> Vec<T> {
    let mut v = pool.with(|p| p.borrow_mut().pop()).unwrap_or_default();
    v.clear();
    v.resize(len, T::default());
    v
}

fn give<T>(pool: &'static std::thread::LocalKey<RefCell<Vec<Vec<T>>>>, v: Vec<T>) {
    pool.with(|p| {
        let mut p = p.borrow_mut();
        if p.len() < POOL_SIZE {
            p.push(v);
        }
    });
}

/// Returns a buffer from `zeroed` or `inverse` for reuse on this thread.
pub fn recycle_real(v: Vec<f64>) {
    give(&REAL_POOL, v);
}

pub fn recycle_complex(v: Vec<Complex64>) {
    give(&COMPLEX_POOL, v);
}

/// Smallest `n' >= n` whose prime factors are all in {2, 3, 5, 7}.
pub fn smooth_size(n: usize) -> usize {
    let mut candidate = n.max(1);
    loop {
        let mut r = candidate;
        for p in [2, 3, 5, 7] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return candidate;
        }
        candidate += 1;
    }
}

/// Forward/inverse plans for real data on a `rows x cols` grid.
///
/// Rows are transformed real-to-complex, leaving `cols / 2 + 1` frequency
/// columns, stored row-major. Rows known to be zero on input, or not needed
/// on output, are skipped.
#[derive(Clone)]
pub struct Fft2d {
    rows: usize,
    cols: usize,
    half: usize,
    row_fwd: Arc<dyn RealToComplex<f64>>,
    row_inv: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2d")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

impl Fft2d {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut real = RealFftPlanner::new();
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            half: cols / 2 + 1,
            row_fwd: real.plan_fft_forward(cols),
            row_inv: real.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Length of a real row-major buffer.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn zeroed(&self) -> Vec<f64> {
        take(&REAL_POOL, self.len())
    }

    /// Row-major real data in (only rows in `active` may be non-zero),
    /// row-major half spectrum out.
    pub fn forward(&self, data: &[f64], active: Range<usize>) -> Vec<Complex64> {
        debug_assert_eq!(data.len(), self.len());
        let (rows, cols, half) = (self.rows, self.cols, self.half);
        let mut spec = take(&COMPLEX_POOL, rows * half);
        let mut input = take(&REAL_POOL, cols);
        let mut scratch = self.row_fwd.make_scratch_vec();
        for r in active.clone() {
            input.copy_from_slice(&data[r * cols..(r + 1) * cols]);
            self.row_fwd
                .process_with_scratch(&mut input, &mut spec[r * half..(r + 1) * half], &mut scratch)
                .expect("buffer lengths match the plan");
        }
        recycle_real(input);
        self.columns(&mut spec, &*self.col_fwd, active, 0..rows);
        spec
    }

    /// Row-major half spectrum in, row-major real data scaled by
    /// `1 / (rows * cols)` out; rows outside `needed` are left at zero.
    pub fn inverse(&self, spectrum: Vec<Complex64>, needed: Range<usize>) -> Vec<f64> {
        let (rows, cols, half) = (self.rows, self.cols, self.half);
        debug_assert_eq!(spectrum.len(), rows * half);
        let mut spec = spectrum;
        self.columns(&mut spec, &*self.col_inv, 0..rows, needed.clone());
        let mut out = take(&REAL_POOL, rows * cols);
        let mut scratch = self.row_inv.make_scratch_vec();
        let scale = 1.0 / self.len() as f64;
        for r in needed {
            let row = &mut spec[r * half..(r + 1) * half];
            // the data is real, so these imaginary parts are rounding noise
            row[0].im = 0.0;
            if cols % 2 == 0 {
                row[half - 1].im = 0.0;
            }
            let dst = &mut out[r * cols..(r + 1) * cols];
            self.row_inv
                .process_with_scratch(row, dst, &mut scratch)
                .expect("buffer lengths match the plan");
            for v in dst.iter_mut() {
                *v *= scale;
            }
        }
        recycle_complex(spec);
        out
    }

    /// Column transforms done a few columns at a time in a small contiguous
    /// tile, so the working set stays in cache. Rows outside `input` are
    /// treated as zero; only rows in `output` are written back.
    fn columns(&self, spec: &mut [Complex64], fft: &dyn Fft<f64>, input: Range<usize>, output: Range<usize>) {
        const TILE: usize = 16;
        let (rows, half) = (self.rows, self.half);
        let zero = Complex64::new(0.0, 0.0);
        // padded stride: power-of-two column lengths would otherwise alias
        // in the cache
        let ld = rows + 4;
        let mut tile = take(&COMPLEX_POOL, TILE * ld);
        let mut scratch = take(&COMPLEX_POOL, fft.get_inplace_scratch_len());
        for c0 in (0..half).step_by(TILE) {
            let w = TILE.min(half - c0);
            if input.len() < rows {
                tile.fill(zero);
            }
            for r in input.clone() {
                let src = &spec[r * half + c0..r * half + c0 + w];
                for (j, &v) in src.iter().enumerate() {
                    tile[j * ld + r] = v;
                }
            }
            for j in 0..w {
                fft.process_with_scratch(&mut tile[j * ld..j * ld + rows], &mut scratch);
            }
            for r in output.clone() {
                let dst = &mut spec[r * half + c0..r * half + c0 + w];
                for (j, v) in dst.iter_mut().enumerate() {
                    *v = tile[j * ld + r];
                }
            }
        }
        recycle_complex(tile);
        recycle_complex(scratch);
    }
}
