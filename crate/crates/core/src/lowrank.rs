//! Truncated SVD of implicit operators.
//!
//! `truncated_svd` runs Golub-Kahan-Lanczos bidiagonalization with full
//! reorthogonalization and thick restarts: after each sweep the leading Ritz
//! triples are kept, the Krylov basis is extended from the residual, and the
//! projected matrix `B = U^T A V` (upper triangular after a restart) is
//! re-decomposed densely. Only products with `A` and `A^T` are used.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rng::NormalStream;

/// Entry guard for `dense_svd_oracle`.
pub const ORACLE_ENTRY_LIMIT: usize = 1_000_000;

/// Relative cutoff below which a singular value counts as numerically zero.
pub const RANK_CUTOFF: f64 = 1e-9;

/// Matrix-free linear map `R^ncols -> R^nrows`.
pub trait LinearOperator: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `A x`, `x.len() == ncols()`.
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    /// `A^T y`, `y.len() == nrows()`.
    fn apply_transpose(&self, y: &[f64]) -> Vec<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (self * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec()
    }
    fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        (self.tr_mul(&nalgebra::DVector::from_column_slice(y)))
            .as_slice()
            .to_vec()
    }
}

/// One singular triple `(sigma, u, v)` with `A v = sigma u`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTriple {
    pub sigma: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Leading singular triples, sorted by non-increasing sigma.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SvdTruncation {
    pub triples: Vec<SvdTriple>,
}

impl SvdTruncation {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.triples.iter().map(|t| t.sigma).collect()
    }

    /// Count of singular values above `cutoff * sigma_1`.
    pub fn numerical_rank(&self, cutoff: f64) -> usize {
        match self.triples.first() {
            None => 0,
            Some(first) if first.sigma <= 0.0 => 0,
            Some(first) => self
                .triples
                .iter()
                .take_while(|t| t.sigma > cutoff * first.sigma)
                .count(),
        }
    }

    /// Left singular vectors of the first `r` triples as columns.
    pub fn left_basis(&self, r: usize) -> DMatrix<f64> {
        let r = r.min(self.len());
        let m = self.triples.first().map_or(0, |t| t.u.len());
        DMatrix::from_fn(m, r, |i, j| self.triples[j].u[i])
    }
}

/// Lanczos controls. `max_restarts` defaults to `10 * k` when `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosOptions {
    pub tol: f64,
    pub max_restarts: Option<usize>,
    pub krylov_dim: Option<usize>,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_restarts: None,
            krylov_dim: None,
            seed: 0x5eed,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Two passes of classical Gram-Schmidt; returns the accumulated coefficients.
fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    for _ in 0..2 {
        let c: Vec<f64> = basis.iter().map(|b| dot(b, w)).collect();
        for (b, ci) in basis.iter().zip(&c) {
            axpy(-ci, b, w);
        }
        for (acc, ci) in coeffs.iter_mut().zip(&c) {
            *acc += ci;
        }
    }
    coeffs
}

/// Random unit vector orthogonal to `basis`.
fn random_orthogonal(len: usize, basis: &[Vec<f64>], stream: &NormalStream, draw: &mut u64) -> Vec<f64> {
    loop {
        let offset = *draw * len as u64;
        *draw += 1;
        let mut w: Vec<f64> = (0..len as u64).map(|i| stream.normal(offset + i)).collect();
        orthogonalize(&mut w, basis);
        let nw = norm(&w);
        if nw > 1e-8 {
            w.iter_mut().for_each(|x| *x /= nw);
            return w;
        }
    }
}

/// Combines basis vectors with the coefficients in column `col` of `coef`.
fn combine(basis: &[Vec<f64>], coef: &DMatrix<f64>, col: usize) -> Vec<f64> {
    let mut out = vec![0.0; basis[0].len()];
    for (i, b) in basis.iter().enumerate() {
        axpy(coef[(i, col)], b, &mut out);
    }
    out
}

fn sorted_svd(b: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let svd = b.svd(true, true);
    let (u, vt) = (svd.u.expect("requested U"), svd.v_t.expect("requested V^T"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let left = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let right = DMatrix::from_fn(vt.ncols(), order.len(), |r, c| vt[(order[c], r)]);
    (sigma, left, right)
}

/// Leading `k` singular triples of `op`, dropping values at or below
/// `RANK_CUTOFF * sigma_1`. `k` is clamped to `min(nrows, ncols)`.
pub fn truncated_svd<A: LinearOperator + ?Sized>(
    op: &A,
    k: usize,
    opts: &LanczosOptions,
) -> Result<SvdTruncation> {
    if k == 0 {
        return Err(Error::InvalidInput("number of triples k must be positive".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance {} must be positive", opts.tol)));
    }
    let (m, n) = (op.nrows(), op.ncols());
    let full = m.min(n);
    let k = k.min(full);
    let p = opts.krylov_dim.unwrap_or(2 * k + 10).clamp(k, full);
    let max_restarts = opts.max_restarts.unwrap_or(10 * k).max(1);
    let stream = NormalStream::new(opts.seed, 0x4c41_4e43);
    let mut draw = 0u64;

    let mut vs: Vec<Vec<f64>> = vec![random_orthogonal(n, &[], &stream, &mut draw)];
    let mut us: Vec<Vec<f64>> = Vec::new();
    let mut b = DMatrix::<f64>::zeros(p, p);
    let mut scale = 0.0f64;
    let mut last_converged = 0;

    for restart in 0..max_restarts {
        let kept = us.len();
        let mut residual = Vec::new();
        let mut beta = 0.0;
        for j in kept..p {
            let mut w = op.apply(&vs[j]);
            let c = orthogonalize(&mut w, &us);
            for (i, ci) in c.iter().enumerate() {
                b[(i, j)] = *ci;
            }
            let alpha = norm(&w);
            scale = scale.max(alpha).max(c.iter().fold(0.0, |a: f64, x| a.max(x.abs())));
            if alpha > 1e-13 * scale && alpha > 0.0 {
                w.iter_mut().for_each(|x| *x /= alpha);
                b[(j, j)] = alpha;
            } else {
                w = random_orthogonal(m, &us, &stream, &mut draw);
                b[(j, j)] = 0.0;
            }
            us.push(w);

            let mut r = op.apply_transpose(&us[j]);
            orthogonalize(&mut r, &vs);
            beta = norm(&r);
            scale = scale.max(beta);
            if j + 1 < p {
                let next = if beta > 1e-13 * scale && beta > 0.0 {
                    r.iter().map(|x| x / beta).collect()
                } else {
                    random_orthogonal(n, &vs, &stream, &mut draw)
                };
                vs.push(next);
            } else {
                residual = r;
            }
        }

        let (sigma, left, right) = sorted_svd(b.clone());
        let sigma1 = sigma[0];
        if sigma1 <= f64::MIN_POSITIVE || sigma1 <= 1e-300 {
            return Ok(SvdTruncation::default());
        }
        let threshold = opts.tol * sigma1;
        let converged = (0..k)
            .filter(|&i| beta * left[(p - 1, i)].abs() <= threshold)
            .count();
        last_converged = converged;
        let exhausted = p == full;
        if converged == k || exhausted {
            let triples = (0..k)
                .take_while(|&i| sigma[i] > RANK_CUTOFF * sigma1)
                .map(|i| SvdTriple {
                    sigma: sigma[i],
                    u: combine(&us, &left, i),
                    v: combine(&vs, &right, i),
                })
                .collect();
            return Ok(SvdTruncation { triples });
        }
        if restart + 1 == max_restarts {
            break;
        }

        // thick restart: keep k Ritz vectors and continue from the residual
        let new_us: Vec<Vec<f64>> = (0..k).map(|i| combine(&us, &left, i)).collect();
        let mut new_vs: Vec<Vec<f64>> = (0..k).map(|i| combine(&vs, &right, i)).collect();
        let next = if beta > 1e-13 * scale && beta > 0.0 {
            let mut r = residual;
            orthogonalize(&mut r, &new_vs);
            let nr = norm(&r);
            r.iter_mut().for_each(|x| *x /= nr);
            r
        } else {
            random_orthogonal(n, &new_vs, &stream, &mut draw)
        };
        new_vs.push(next);
        us = new_us;
        vs = new_vs;
        b = DMatrix::zeros(p, p);
        for (i, s) in sigma.iter().take(k).enumerate() {
            b[(i, i)] = *s;
        }
    }
    Err(Error::NoConvergence {
        iterations: max_restarts,
        converged: last_converged,
        requested: k,
    })
}

/// Full SVD by a direct method, all `min(m, n)` triples including zeros.
pub fn dense_svd_oracle(mat: &DMatrix<f64>) -> Result<SvdTruncation> {
    let entries = mat.nrows() * mat.ncols();
    if entries > ORACLE_ENTRY_LIMIT {
        return Err(Error::TooLarge {
            entries,
            limit: ORACLE_ENTRY_LIMIT,
        });
    }
    if entries == 0 {
        return Ok(SvdTruncation::default());
    }
    let (sigma, left, right) = sorted_svd(mat.clone());
    let triples = sigma
        .iter()
        .enumerate()
        .map(|(i, &s)| SvdTriple {
            sigma: s,
            u: left.column(i).iter().copied().collect(),
            v: right.column(i).iter().copied().collect(),
        })
        .collect();
    Ok(SvdTruncation { triples })
}
