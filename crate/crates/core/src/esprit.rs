//! ESPRIT pole estimation from the left singular subspace of a trajectory
//! matrix.
//!
//! The signal subspace of a sum of damped exponentials is shift invariant:
//! dropping the last (first) sample of every window maps the basis onto
//! itself up to a transform whose eigenvalues are the poles. In 2D there is
//! one such transform per axis. Both share eigenvectors, so the pairs are
//! read off a single eigenbasis of a fixed linear combination.

use std::f64::consts::TAU;

use nalgebra::{Complex, DMatrix, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hankel::EmbeddingWindow;
use crate::sigmodel::DampedMode;

/// Weight of the column-shift matrix in the combined pencil.
pub const PAIRING_WEIGHT: f64 = 0.534_728_170_937_1;

/// Relative singular-value threshold used to size the ESPRIT subspace.
pub const SUBSPACE_THRESHOLD: f64 = 1e-4;

/// Condition number of the joint eigenbasis above which 2D ESPRIT fails.
pub const MAX_EIGENBASIS_CONDITION: f64 = 1e12;

/// Complex poles per row step and per column step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleEstimate {
    pub z_row: Complex64,
    pub z_col: Complex64,
}

impl PoleEstimate {
    pub fn series(z: Complex64) -> Self {
        Self {
            z_row: z,
            z_col: Complex64::new(1.0, 0.0),
        }
    }

    pub fn damping_row(&self) -> f64 {
        self.z_row.norm()
    }
    pub fn damping_col(&self) -> f64 {
        self.z_col.norm()
    }
    /// `arg(z_row) / 2 pi`, in `(-0.5, 0.5]`.
    pub fn freq_row(&self) -> f64 {
        self.z_row.arg() / TAU
    }
    pub fn freq_col(&self) -> f64 {
        self.z_col.arg() / TAU
    }
}

/// Number of leading singular values at or above `SUBSPACE_THRESHOLD * sigma_1`,
/// capped at `cap`.
pub fn signal_rank(sigmas: &[f64], cap: usize) -> usize {
    match sigmas.first() {
        Some(&s1) if s1 > 0.0 => sigmas
            .iter()
            .take(cap)
            .take_while(|&&s| s >= SUBSPACE_THRESHOLD * s1)
            .count(),
        _ => 0,
    }
}

/// Fraction of the trajectory energy the default ESPRIT subspace must cover.
pub const ENERGY_FRACTION: f64 = 0.999;

/// Smallest number of leading triples whose `sigma^2` sum reaches
/// `fraction * total_energy` (all of `sigmas` if it never does).
pub fn energy_rank(sigmas: &[f64], total_energy: f64, fraction: f64) -> usize {
    let target = fraction * total_energy;
    let mut acc = 0.0;
    for (i, s) in sigmas.iter().enumerate() {
        acc += s * s;
        if acc >= target {
            return i + 1;
        }
    }
    sigmas.len()
}

/// Default subspace size: the smaller of `signal_rank` and the
/// `ENERGY_FRACTION` energy count, so that triples dominated by noise stay
/// out of the shift equations.
pub fn default_rank(sigmas: &[f64], total_energy: f64, cap: usize) -> usize {
    signal_rank(sigmas, cap).min(energy_rank(sigmas, total_energy, ENERGY_FRACTION))
}

/// Least-squares solution of `upper * F = lower` by Householder QR.
fn shift_solve(upper: &DMatrix<f64>, lower: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sv = upper.singular_values();
    let (hi, lo) = sv.iter().fold((0.0f64, f64::INFINITY), |(h, l), &s| (h.max(s), l.min(s)));
    if !(lo > 1e-10 * hi) {
        return Err(Error::RankDeficientShift {
            ratio: if hi > 0.0 { lo / hi } else { 0.0 },
        });
    }
    let qr = upper.clone().qr();
    let rhs = qr.q().tr_mul(lower);
    qr.r()
        .solve_upper_triangular(&rhs)
        .ok_or(Error::RankDeficientShift { ratio: 0.0 })
}

fn select_rows(basis: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), basis.ncols(), |i, j| basis[(rows[i], j)])
}

fn complex_schur(m: &DMatrix<f64>) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let mc: DMatrix<Complex<f64>> = m.map(|x| Complex::new(x, 0.0));
    let schur = Schur::try_new(mc, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    Ok(schur.unpack())
}

/// Eigenvalues of a small real matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let (_, t) = complex_schur(m)?;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Eigenvectors (columns) of a small real matrix, from its complex Schur form.
fn eigenvectors(m: &DMatrix<f64>) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    let (q, t) = complex_schur(m)?;
    let r = t.nrows();
    let scale = t.iter().fold(0.0f64, |a, z| a.max(z.norm())).max(f64::MIN_POSITIVE);
    let mut y = DMatrix::<Complex64>::zeros(r, r);
    for k in 0..r {
        let lambda = t[(k, k)];
        y[(k, k)] = Complex64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in j + 1..=k {
                acc += t[(j, l)] * y[(l, k)];
            }
            let mut denom = t[(j, j)] - lambda;
            if denom.norm() < f64::EPSILON * scale {
                denom = Complex64::new(f64::EPSILON * scale, 0.0);
            }
            y[(j, k)] = -acc / denom;
        }
    }
    let mut v = q * y;
    for k in 0..r {
        let nrm = v.column(k).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for i in 0..r {
            v[(i, k)] /= nrm;
        }
    }
    Ok(((0..r).map(|i| t[(i, i)]).collect(), v))
}

/// 1D ESPRIT: poles of the series whose trajectory left subspace is spanned
/// by the columns of `basis` (`L x r`).
pub fn esprit_1d(basis: &DMatrix<f64>) -> Result<Vec<PoleEstimate>> {
    let (l, r) = basis.shape();
    if r == 0 {
        return Err(Error::InvalidInput("ESPRIT needs at least one basis vector".into()));
    }
    if l < r + 1 {
        return Err(Error::InvalidInput(format!(
            "window length {l} too short for a rank-{r} shift system"
        )));
    }
    let upper = basis.rows(0, l - 1).into_owned();
    let lower = basis.rows(1, l - 1).into_owned();
    let f = shift_solve(&upper, &lower)?;
    Ok(eigenvalues(&f)?.into_iter().map(PoleEstimate::series).collect())
}

/// 2D ESPRIT on the left subspace (`L_x L_y x r`) of a Hankel-block-Hankel
/// trajectory matrix. Row poles come from the shift inside each `L_x` block,
/// column poles from the shift between blocks; pairing is through the common
/// eigenbasis of `F_row + PAIRING_WEIGHT * F_col`.
pub fn esprit_2d(basis: &DMatrix<f64>, window: &EmbeddingWindow) -> Result<Vec<PoleEstimate>> {
    let (lx, ly) = (window.lx(), window.ly());
    let r = basis.ncols();
    if basis.nrows() != lx * ly {
        return Err(Error::DimensionMismatch {
            expected: lx * ly,
            actual: basis.nrows(),
        });
    }
    if r == 0 {
        return Err(Error::InvalidInput("ESPRIT needs at least one basis vector".into()));
    }
    if lx < 2 || ly < 2 || (lx - 1) * ly < r || lx * (ly - 1) < r {
        return Err(Error::InvalidInput(format!(
            "window ({lx}, {ly}) too small for a rank-{r} 2D shift system"
        )));
    }
    let mut row_up = Vec::new();
    let mut row_down = Vec::new();
    for i in 0..ly {
        for a in 0..lx - 1 {
            row_up.push(i * lx + a);
            row_down.push(i * lx + a + 1);
        }
    }
    let col_up: Vec<usize> = (0..(ly - 1) * lx).collect();
    let col_down: Vec<usize> = (lx..ly * lx).collect();

    let f_row = shift_solve(&select_rows(basis, &row_up), &select_rows(basis, &row_down))?;
    let f_col = shift_solve(&select_rows(basis, &col_up), &select_rows(basis, &col_down))?;
    let pencil = &f_row + &f_col * PAIRING_WEIGHT;
    let (_, v) = eigenvectors(&pencil)?;

    let sv = v.singular_values();
    let (hi, lo) = sv.iter().fold((0.0f64, f64::INFINITY), |(h, l), &s| (h.max(s), l.min(s)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition < MAX_EIGENBASIS_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let v_inv = v
        .clone()
        .try_inverse()
        .ok_or(Error::IllConditioned { condition })?;
    let to_complex = |m: &DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
    let d_row = &v_inv * to_complex(&f_row) * &v;
    let d_col = &v_inv * to_complex(&f_col) * &v;
    Ok((0..r)
        .map(|i| PoleEstimate {
            z_row: d_row[(i, i)],
            z_col: d_col[(i, i)],
        })
        .collect())
}

/// Real components recovered from a pole list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MergedPoles {
    pub modes: Vec<DampedMode>,
    /// Complex poles without a conjugate partner; each also appears in `modes`.
    pub unpaired: Vec<PoleEstimate>,
}

/// Frequency pair flipped so that `freq_row >= 0`, and `freq_col >= 0` when
/// `freq_row == 0`, with both kept in `(-0.5, 0.5]`.
pub fn canonical_freqs(freq_row: f64, freq_col: f64) -> (f64, f64) {
    let wrap = |w: f64| if w <= -0.5 { w + 1.0 } else { w };
    let (fr, fc) = (wrap(freq_row), wrap(freq_col));
    let flip = fr < 0.0 || (fr == 0.0 && fc < 0.0);
    if flip {
        (wrap(-fr), wrap(-fc))
    } else {
        (fr, fc)
    }
}

fn mode_from(z_row: Complex64, z_col: Complex64, real_row: bool, real_col: bool) -> DampedMode {
    let freq = |z: Complex64, real: bool| {
        if real {
            if z.re >= 0.0 {
                0.0
            } else {
                0.5
            }
        } else {
            z.arg() / TAU
        }
    };
    let (fr, fc) = canonical_freqs(freq(z_row, real_row), freq(z_col, real_col));
    DampedMode::new(z_row.norm(), z_col.norm(), fr, fc)
}

/// Merges conjugate pole pairs (within `tol` in pole space) into real
/// components with canonical frequency signs.
pub fn merge_conjugates(poles: &[PoleEstimate], tol: f64) -> MergedPoles {
    let mut used = vec![false; poles.len()];
    let mut out = MergedPoles::default();
    for i in 0..poles.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let p = poles[i];
        let real_row = p.z_row.im.abs() <= tol;
        let real_col = p.z_col.im.abs() <= tol;
        if real_row && real_col {
            out.modes.push(mode_from(p.z_row, p.z_col, true, true));
            continue;
        }
        let partner = (0..poles.len())
            .filter(|&j| !used[j])
            .map(|j| {
                let q = poles[j];
                let d = (p.z_row - q.z_row.conj()).norm() + (p.z_col - q.z_col.conj()).norm();
                (j, d)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match partner {
            Some((j, d)) if d <= tol => {
                used[j] = true;
                let q = poles[j];
                let z_row = (p.z_row + q.z_row.conj()) * 0.5;
                let z_col = (p.z_col + q.z_col.conj()) * 0.5;
                out.modes.push(mode_from(z_row, z_col, real_row, real_col));
            }
            _ => {
                out.unpaired.push(p);
                out.modes.push(mode_from(p.z_row, p.z_col, real_row, real_col));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Image2D;
    use crate::hankel::{dense_hbh, HbhOperator};
    use crate::lowrank::{dense_svd_oracle, truncated_svd, LanczosOptions};

    fn hankel_basis(series: &[f64], l: usize, r: usize) -> DMatrix<f64> {
        let k = series.len() - l + 1;
        let h = DMatrix::from_fn(l, k, |i, j| series[i + j]);
        let s = dense_svd_oracle(&h).unwrap();
        s.left_basis(r)
    }

    fn image_basis(img: &Image2D, w: EmbeddingWindow, r: usize) -> DMatrix<f64> {
        let op = HbhOperator::new(img, w).unwrap();
        truncated_svd(&op, r, &LanczosOptions::default()).unwrap().left_basis(r)
    }

    #[test]
    fn esprit_1d_cosine() {
        let x: Vec<f64> = (0..100).map(|n| (TAU * n as f64 / 20.0).cos()).collect();
        let poles = esprit_1d(&hankel_basis(&x, 50, 2)).unwrap();
        assert_eq!(poles.len(), 2);
        let mut freqs: Vec<f64> = poles.iter().map(|p| p.freq_row()).collect();
        freqs.sort_by(f64::total_cmp);
        assert!((freqs[0] + 0.05).abs() < 1e-6 && (freqs[1] - 0.05).abs() < 1e-6);
        assert!(poles.iter().all(|p| (p.damping_row() - 1.0).abs() < 1e-6));
    }

    #[test]
    fn esprit_1d_real_poles() {
        let x: Vec<f64> = (0..60).map(|n| 0.95f64.powi(n)).collect();
        let poles = esprit_1d(&hankel_basis(&x, 30, 1)).unwrap();
        assert!((poles[0].z_row - Complex64::new(0.95, 0.0)).norm() < 1e-10);

        let c = vec![3.0; 40];
        let poles = esprit_1d(&hankel_basis(&c, 20, 1)).unwrap();
        assert!((poles[0].z_row - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn esprit_1d_rank_deficient_shift() {
        // a basis that vanishes on all but the last sample cannot be shifted
        let mut b = DMatrix::<f64>::zeros(6, 1);
        b[(5, 0)] = 1.0;
        assert!(matches!(esprit_1d(&b), Err(Error::RankDeficientShift { .. })));
        assert!(esprit_1d(&DMatrix::<f64>::zeros(2, 2)).is_err());
    }

    #[test]
    fn esprit_2d_single_cosine() {
        let img = Image2D::from_fn(40, 40, |n, m| (TAU * (0.3 * n as f64 + 0.2 * m as f64)).cos());
        let w = EmbeddingWindow::new(20, 20, (40, 40)).unwrap();
        let poles = esprit_2d(&image_basis(&img, w, 2), &w).unwrap();
        let merged = merge_conjugates(&poles, 1e-6);
        assert_eq!(merged.modes.len(), 1);
        let m = merged.modes[0];
        assert!((m.freq_row - 0.3).abs() < 1e-6 && (m.freq_col - 0.2).abs() < 1e-6);
        assert!((m.damping_row - 1.0).abs() < 1e-6 && (m.damping_col - 1.0).abs() < 1e-6);
    }

    #[test]
    fn esprit_2d_damped_separable() {
        let img = Image2D::from_fn(30, 30, |n, m| {
            0.98f64.powi(n as i32) * 0.99f64.powi(m as i32) * (TAU * 0.1 * n as f64).cos()
        });
        let w = EmbeddingWindow::new(15, 15, (30, 30)).unwrap();
        let poles = esprit_2d(&image_basis(&img, w, 2), &w).unwrap();
        let m = merge_conjugates(&poles, 1e-6).modes;
        assert_eq!(m.len(), 1);
        assert!((m[0].damping_row - 0.98).abs() < 1e-6);
        assert!((m[0].damping_col - 0.99).abs() < 1e-6);
        assert!((m[0].freq_row - 0.1).abs() < 1e-6 && m[0].freq_col.abs() < 1e-6);
    }

    #[test]
    fn esprit_2d_constant() {
        let img = Image2D::from_fn(12, 12, |_, _| 1.5);
        let w = EmbeddingWindow::half((12, 12)).unwrap();
        let s = dense_svd_oracle(&dense_hbh(&img, &w).unwrap()).unwrap();
        let poles = esprit_2d(&s.left_basis(1), &w).unwrap();
        assert_eq!(poles.len(), 1);
        assert!((poles[0].z_row - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        assert!((poles[0].z_col - Complex64::new(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn esprit_2d_rejects_degenerate_windows() {
        let w = EmbeddingWindow::new(1, 5, (1, 10)).unwrap();
        assert!(esprit_2d(&DMatrix::<f64>::identity(5, 1), &w).is_err());
        let w = EmbeddingWindow::new(3, 3, (6, 6)).unwrap();
        assert!(esprit_2d(&DMatrix::<f64>::identity(8, 1), &w).is_err());
    }

    #[test]
    fn merge_examples() {
        let z = Complex64::from_polar(1.0, TAU * 0.05);
        let merged = merge_conjugates(&[PoleEstimate::series(z), PoleEstimate::series(z.conj())], 1e-8);
        assert_eq!(merged.modes.len(), 1);
        assert!((merged.modes[0].freq_row - 0.05).abs() < 1e-15);
        assert!(merged.unpaired.is_empty());

        let merged = merge_conjugates(&[PoleEstimate::series(Complex64::new(0.95, 0.0))], 1e-8);
        assert_eq!(merged.modes, vec![DampedMode::series(0.95, 0.0)]);

        // perturbed pair: |z - conj(z')| = 2e-3
        let z1 = Complex64::from_polar(0.99, TAU * 0.1);
        let z2 = z1.conj() + Complex64::new(0.0, 2e-3);
        assert!(((z1 - z2.conj()).norm() - 2e-3).abs() < 1e-15);
        let merged = merge_conjugates(&[PoleEstimate::series(z1), PoleEstimate::series(z2)], 1e-2);
        assert_eq!(merged.modes.len(), 1);
        let avg = (z1 + z2.conj()) * 0.5;
        assert!((merged.modes[0].damping_row - avg.norm()).abs() < 1e-15);
        assert!((merged.modes[0].freq_row - avg.arg() / TAU).abs() < 1e-15);

        let lone = merge_conjugates(&[PoleEstimate::series(z1)], 1e-8);
        assert_eq!(lone.unpaired.len(), 1);
        assert_eq!(lone.modes.len(), 1);
    }

    #[test]
    fn canonical_sign_rules() {
        assert_eq!(canonical_freqs(-0.2, 0.1), (0.2, -0.1));
        assert_eq!(canonical_freqs(0.0, -0.3), (0.0, 0.3));
        assert_eq!(canonical_freqs(0.5, -0.1), (0.5, -0.1));
        assert_eq!(canonical_freqs(-0.5, 0.2), (0.5, 0.2));
    }

    #[test]
    fn signal_rank_threshold() {
        assert_eq!(signal_rank(&[10.0, 1.0, 1e-3, 1e-6], 50), 3);
        assert_eq!(signal_rank(&[10.0, 9.0, 8.0], 2), 2);
        assert_eq!(signal_rank(&[], 5), 0);
    }

    #[test]
    fn energy_rank_counts() {
        let s = [3.0, 2.0, 1.0];
        assert_eq!(energy_rank(&s, 14.0, 0.5), 1);
        assert_eq!(energy_rank(&s, 14.0, 0.9), 2);
        assert_eq!(energy_rank(&s, 14.0, 1.0), 3);
        assert_eq!(energy_rank(&s, 100.0, 0.999), 3);
        assert_eq!(default_rank(&[10.0, 1.0, 1e-3, 1e-6], 101.0, 50), 2);
    }
}
