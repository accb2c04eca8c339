//! Parametric finite-rank signal model: sums of exponentially damped 2D
//! cosines,
//!
//! ```text
//! x(n, m) = sum_k s_k rho_r^n rho_c^m cos(2 pi (om_r n + om_c m) + phi_k)
//! ```
//!
//! evaluated analytically at real coordinates. `n` is the row coordinate and
//! `m` the column coordinate. The model class is closed under
//! differentiation along either axis, which is what line detection and the
//! characteristic-length estimate rely on.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{Axis, Image2D};

/// Wraps a phase into `(-pi, pi]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Frequencies (cycles per step) and damping factors of one real component,
/// as estimated by ESPRIT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampedMode {
    pub damping_row: f64,
    pub damping_col: f64,
    pub freq_row: f64,
    pub freq_col: f64,
}

impl DampedMode {
    pub fn new(damping_row: f64, damping_col: f64, freq_row: f64, freq_col: f64) -> Self {
        Self {
            damping_row,
            damping_col,
            freq_row,
            freq_col,
        }
    }

    /// Single-axis mode for series stored as `N x 1` images.
    pub fn series(damping: f64, freq: f64) -> Self {
        Self::new(damping, 1.0, freq, 0.0)
    }

    pub fn freq(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Row => self.freq_row,
            Axis::Col => self.freq_col,
        }
    }

    pub fn damping(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Row => self.damping_row,
            Axis::Col => self.damping_col,
        }
    }

    #[inline]
    fn envelope_and_angle(&self, n: f64, m: f64) -> (f64, f64) {
        let env = (n * self.damping_row.ln() + m * self.damping_col.ln()).exp();
        let angle = TAU * (self.freq_row * n + self.freq_col * m);
        (env, angle)
    }
}

/// One damped cosine `s rho_r^n rho_c^m cos(2 pi (om_r n + om_c m) + phi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidTerm {
    pub amplitude: f64,
    pub mode: DampedMode,
    pub phase: f64,
}

impl SinusoidTerm {
    /// Validated term; dampings must be positive, the phase is wrapped.
    pub fn new(amplitude: f64, mode: DampedMode, phase: f64) -> Result<Self> {
        for rho in [mode.damping_row, mode.damping_col] {
            if !(rho > 0.0) || !rho.is_finite() {
                return Err(Error::NonPositiveDamping(rho));
            }
        }
        if !(amplitude >= 0.0) || !amplitude.is_finite() {
            return Err(Error::InvalidInput(format!("amplitude {amplitude} must be nonnegative")));
        }
        if !mode.freq_row.is_finite() || !mode.freq_col.is_finite() || !phase.is_finite() {
            return Err(Error::InvalidInput("frequencies and phase must be finite".into()));
        }
        Ok(Self {
            amplitude,
            mode,
            phase: wrap_phase(phase),
        })
    }

    /// Undamped cosine `s cos(2 pi (om_r n + om_c m) + phi)`.
    pub fn cosine(amplitude: f64, freq_row: f64, freq_col: f64, phase: f64) -> Self {
        Self::new(amplitude, DampedMode::new(1.0, 1.0, freq_row, freq_col), phase)
            .expect("undamped cosine parameters are valid")
    }

    #[inline]
    pub fn value(&self, n: f64, m: f64) -> f64 {
        let (env, angle) = self.mode.envelope_and_angle(n, m);
        self.amplitude * env * (angle + self.phase).cos()
    }

    /// Closed-form derivative along `axis`, again a single damped cosine.
    pub fn derivative(&self, axis: Axis) -> Result<SinusoidTerm> {
        let rho = self.mode.damping(axis);
        if !(rho > 0.0) {
            return Err(Error::NonPositiveDamping(rho));
        }
        let (log_rho, angular) = (rho.ln(), TAU * self.mode.freq(axis));
        Ok(SinusoidTerm {
            amplitude: self.amplitude * log_rho.hypot(angular),
            mode: self.mode,
            phase: wrap_phase(self.phase + angular.atan2(log_rho)),
        })
    }
}

/// Sum of damped cosines plus the residual of the regression that produced it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParametricModel2D {
    pub terms: Vec<SinusoidTerm>,
    pub fit_rmse: f64,
}

impl ParametricModel2D {
    pub fn new(terms: Vec<SinusoidTerm>) -> Self {
        Self { terms, fit_rmse: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    #[inline]
    pub fn value(&self, n: f64, m: f64) -> f64 {
        self.terms.iter().map(|t| t.value(n, m)).sum()
    }

    /// Values at arbitrary real `(row, col)` coordinates.
    pub fn evaluate(&self, mesh: &[(f64, f64)]) -> Vec<f64> {
        mesh.iter().map(|&(n, m)| self.value(n, m)).collect()
    }

    /// Values on the integer pixel grid of a `rows x cols` image.
    pub fn evaluate_grid(&self, dims: (usize, usize)) -> Image2D {
        Image2D::from_fn(dims.0, dims.1, |n, m| self.value(n as f64, m as f64))
    }

    /// Term-wise derivative along `axis`. `fit_rmse` is carried over unchanged.
    pub fn differentiate(&self, axis: Axis) -> Result<ParametricModel2D> {
        Ok(ParametricModel2D {
            terms: self
                .terms
                .iter()
                .map(|t| t.derivative(axis))
                .collect::<Result<_>>()?,
            fit_rmse: self.fit_rmse,
        })
    }

    /// Sub-model of the terms whose mode satisfies `keep`.
    pub fn filter_terms(&self, mut keep: impl FnMut(&DampedMode) -> bool) -> ParametricModel2D {
        ParametricModel2D {
            terms: self.terms.iter().filter(|t| keep(&t.mode)).copied().collect(),
            fit_rmse: self.fit_rmse,
        }
    }

    /// Concatenation of two models' terms.
    pub fn merged(&self, other: &ParametricModel2D) -> ParametricModel2D {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        ParametricModel2D {
            terms,
            fit_rmse: self.fit_rmse,
        }
    }

    /// Text document with 17 significant digits per value.
    pub fn to_document(&self) -> String {
        let mut s = String::new();
        s.push_str("# elssa parametric model v1\n");
        let _ = writeln!(s, "fit_rmse = {:.16e}", self.fit_rmse);
        let _ = writeln!(s, "terms = {}", self.terms.len());
        s.push_str("# s rho_r rho_c om_r om_c phi\n");
        for t in &self.terms {
            let _ = writeln!(
                s,
                "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                t.amplitude, t.mode.damping_row, t.mode.damping_col, t.mode.freq_row, t.mode.freq_col, t.phase
            );
        }
        s
    }

    pub fn from_document(doc: &str) -> Result<ParametricModel2D> {
        let parse_err = |line: usize, reason: String| Error::Parse {
            what: "model document",
            line,
            reason,
        };
        let mut fit_rmse = None;
        let mut declared = None;
        let mut terms = Vec::new();
        for (i, raw) in doc.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "fit_rmse" => {
                        fit_rmse = Some(value.parse::<f64>().map_err(|e| parse_err(i + 1, e.to_string()))?)
                    }
                    "terms" => {
                        declared = Some(value.parse::<usize>().map_err(|e| parse_err(i + 1, e.to_string()))?)
                    }
                    other => return Err(parse_err(i + 1, format!("unknown key {other:?}"))),
                }
                continue;
            }
            let fields: Vec<f64> = line
                .split_whitespace()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(i + 1, e.to_string()))?;
            if fields.len() != 6 {
                return Err(parse_err(i + 1, format!("expected 6 values, found {}", fields.len())));
            }
            let mode = DampedMode::new(fields[1], fields[2], fields[3], fields[4]);
            terms.push(SinusoidTerm::new(fields[0], mode, fields[5]).map_err(|e| parse_err(i + 1, e.to_string()))?);
        }
        if let Some(n) = declared {
            if n != terms.len() {
                return Err(parse_err(0, format!("declared {n} terms, found {}", terms.len())));
            }
        }
        Ok(ParametricModel2D {
            terms,
            fit_rmse: fit_rmse.unwrap_or(0.0),
        })
    }
}

/// Least-squares amplitudes and phases for known modes.
///
/// Each mode contributes a damped cosine and a damped sine regressor; the
/// sine is dropped when it vanishes on the grid (zero or Nyquist frequency).
/// The system is solved by a streamed Householder QR over row blocks so the
/// full design matrix is never held in memory.
pub fn fit_amplitude_phase(modes: &[DampedMode], target: &Image2D) -> Result<ParametricModel2D> {
    for mode in modes {
        for rho in [mode.damping_row, mode.damping_col] {
            if !(rho > 0.0) || !rho.is_finite() {
                return Err(Error::NonPositiveDamping(rho));
            }
        }
    }
    let (rows, cols) = target.dims();
    let pixels = rows * cols;
    if modes.is_empty() {
        let rmse = (target.values().iter().map(|v| v * v).sum::<f64>() / pixels as f64).sqrt();
        return Ok(ParametricModel2D {
            terms: Vec::new(),
            fit_rmse: rmse,
        });
    }

    // regressor norms decide which sine columns exist and scale the rest
    let mut cos_norm = vec![0.0; modes.len()];
    let mut sin_norm = vec![0.0; modes.len()];
    for n in 0..rows {
        for m in 0..cols {
            for (k, mode) in modes.iter().enumerate() {
                let (env, angle) = mode.envelope_and_angle(n as f64, m as f64);
                cos_norm[k] += (env * angle.cos()).powi(2);
                sin_norm[k] += (env * angle.sin()).powi(2);
            }
        }
    }
    let mut columns: Vec<(usize, bool, f64)> = Vec::new(); // (mode, is_sine, scale)
    for k in 0..modes.len() {
        let (c, s) = (cos_norm[k].sqrt(), sin_norm[k].sqrt());
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::RankDeficientRegressors { first: k, second: k });
        }
        columns.push((k, false, c));
        if s > 1e-10 * c {
            columns.push((k, true, s));
        }
    }
    let p = columns.len();
    let regressors = |n: usize, m: usize, out: &mut [f64]| {
        for (slot, &(k, is_sine, scale)) in out.iter_mut().zip(&columns) {
            let (env, angle) = modes[k].envelope_and_angle(n as f64, m as f64);
            *slot = if is_sine { -env * angle.sin() } else { env * angle.cos() } / scale;
        }
    };

    let chunk = (4 * p).max(256);
    let mut r_mat = DMatrix::<f64>::zeros(0, p);
    let mut z = DVector::<f64>::zeros(0);
    let mut row = vec![0.0; p];
    let mut start = 0;
    while start < pixels {
        let end = (start + chunk).min(pixels);
        let prev = r_mat.nrows();
        let mut block = DMatrix::<f64>::zeros(prev + end - start, p);
        let mut rhs = DVector::<f64>::zeros(prev + end - start);
        block.rows_mut(0, prev).copy_from(&r_mat);
        rhs.rows_mut(0, prev).copy_from(&z);
        for (i, pix) in (start..end).enumerate() {
            let (n, m) = (pix / cols, pix % cols);
            regressors(n, m, &mut row);
            for (j, v) in row.iter().enumerate() {
                block[(prev + i, j)] = *v;
            }
            rhs[prev + i] = target.get(n, m);
        }
        let qr = block.qr();
        let q = qr.q();
        z = q.tr_mul(&rhs);
        r_mat = qr.r();
        start = end;
    }
    if r_mat.nrows() < p {
        return Err(Error::RankDeficientRegressors { first: 0, second: modes.len() - 1 });
    }

    let svd = r_mat.clone().svd(false, true);
    let (smax, smin, imin) = svd.singular_values.iter().enumerate().fold(
        (0.0f64, f64::INFINITY, 0usize),
        |(hi, lo, il), (i, &s)| (hi.max(s), if s < lo { s } else { lo }, if s < lo { i } else { il }),
    );
    if !(smin > 1e-10 * smax) {
        let null = svd.v_t.expect("requested V^T").row(imin).transpose();
        let mut weight = vec![0.0f64; modes.len()];
        for (j, &(k, _, _)) in columns.iter().enumerate() {
            weight[k] += null[j] * null[j];
        }
        let mut order: Vec<usize> = (0..modes.len()).collect();
        order.sort_by(|&a, &b| weight[b].total_cmp(&weight[a]));
        let (a, b) = (order[0], order.get(1).copied().unwrap_or(order[0]));
        return Err(Error::RankDeficientRegressors {
            first: a.min(b),
            second: a.max(b),
        });
    }
    let x = r_mat
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))?;

    let mut cos_coef = vec![0.0; modes.len()];
    let mut sin_coef = vec![0.0; modes.len()];
    for (j, &(k, is_sine, scale)) in columns.iter().enumerate() {
        if is_sine {
            sin_coef[k] = x[j] / scale;
        } else {
            cos_coef[k] = x[j] / scale;
        }
    }
    let terms: Vec<SinusoidTerm> = modes
        .iter()
        .enumerate()
        .map(|(k, &mode)| {
            let (a, b) = (cos_coef[k], sin_coef[k]);
            SinusoidTerm {
                amplitude: a.hypot(b),
                mode,
                phase: wrap_phase(b.atan2(a)),
            }
        })
        .collect();
    let mut model = ParametricModel2D { terms, fit_rmse: 0.0 };
    let mut sse = 0.0;
    for n in 0..rows {
        for m in 0..cols {
            sse += (target.get(n, m) - model.value(n as f64, m as f64)).powi(2);
        }
    }
    model.fit_rmse = (sse / pixels as f64).sqrt();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn term(s: f64, rr: f64, rc: f64, wr: f64, wc: f64, phi: f64) -> SinusoidTerm {
        SinusoidTerm::new(s, DampedMode::new(rr, rc, wr, wc), phi).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let model = ParametricModel2D::new(vec![term(1.0, 1.0, 1.0, 0.0, 0.0, 0.0)]);
        assert_eq!(model.evaluate(&[(3.7, -2.2), (0.0, 0.0)]), vec![1.0, 1.0]);

        let quarter = term(2.0, 1.0, 1.0, 0.25, 0.0, 0.0);
        assert!(quarter.value(1.0, 0.0).abs() < 1e-15);

        // 0.81 * cos(0.4 pi + 0.3), by hand
        let damped = term(1.0, 0.9, 1.0, 0.1, 0.0, 0.3);
        let expected = 0.81 * (0.4 * PI + 0.3).cos();
        assert!((damped.value(2.0, 0.0) - expected).abs() < 1e-15);
        assert!((expected - 0.011470).abs() < 1e-5);
    }

    #[test]
    fn derivative_examples() {
        let c = SinusoidTerm::cosine(1.0, 0.0, 0.05, 0.0);
        let d = c.derivative(Axis::Col).unwrap();
        assert!((d.amplitude - 0.1 * PI).abs() < 1e-15);
        assert!((d.phase - PI / 2.0).abs() < 1e-15);
        for m in [0.0, 1.3, 7.9] {
            let expected = -0.1 * PI * (0.1 * PI * m).sin();
            assert!((d.value(0.0, m) - expected).abs() < 1e-14);
        }

        let constant = SinusoidTerm::cosine(3.0, 0.0, 0.0, 0.0);
        assert_eq!(constant.derivative(Axis::Row).unwrap().amplitude, 0.0);

        let damped = term(1.0, 0.9, 1.0, 0.1, 0.0, 0.0);
        let s = damped.derivative(Axis::Row).unwrap().amplitude;
        let expected = (0.9f64.ln().powi(2) + (0.2 * PI).powi(2)).sqrt();
        assert!((s - expected).abs() < 1e-15);
        assert!((s - 0.637091).abs() < 1e-6);
    }

    #[test]
    fn nonpositive_damping_rejected() {
        assert!(SinusoidTerm::new(1.0, DampedMode::new(0.0, 1.0, 0.1, 0.0), 0.0).is_err());
        assert!(SinusoidTerm::new(1.0, DampedMode::new(1.0, -0.5, 0.1, 0.0), 0.0).is_err());
        assert!(fit_amplitude_phase(&[DampedMode::new(0.0, 1.0, 0.1, 0.0)], &Image2D::zeros(4, 4)).is_err());
    }

    #[test]
    fn second_derivative_of_cosine() {
        let c = SinusoidTerm::cosine(1.5, 0.07, 0.0, 0.4);
        let d2 = c.derivative(Axis::Row).unwrap().derivative(Axis::Row).unwrap();
        assert!((d2.amplitude - 1.5 * (TAU * 0.07).powi(2)).abs() < 1e-14);
        assert!((wrap_phase(d2.phase - 0.4 - PI)).abs() < 1e-14);
    }

    #[test]
    fn phase_wrapping() {
        assert_eq!(wrap_phase(PI), PI);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((wrap_phase(7.0 * TAU + 0.25) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_known_cosine() {
        let target = Image2D::from_fn(100, 1, |n, _| 2.0 * (TAU * n as f64 / 20.0 + PI / 3.0).cos());
        let model = fit_amplitude_phase(&[DampedMode::series(1.0, 0.05)], &target).unwrap();
        assert!((model.terms[0].amplitude - 2.0).abs() < 1e-10);
        assert!((model.terms[0].phase - PI / 3.0).abs() < 1e-10);
        assert!(model.fit_rmse < 1e-12);
    }

    #[test]
    fn fit_zero_target() {
        let modes = [DampedMode::series(1.0, 0.05), DampedMode::series(0.97, 0.2)];
        let model = fit_amplitude_phase(&modes, &Image2D::zeros(64, 1)).unwrap();
        assert!(model.terms.iter().all(|t| t.amplitude == 0.0));
    }

    #[test]
    fn fit_pure_cosine_along_columns() {
        let target = Image2D::from_fn(1, 60, |_, m| (TAU * 0.1 * m as f64).cos());
        let model = fit_amplitude_phase(&[DampedMode::new(1.0, 1.0, 0.0, 0.1)], &target).unwrap();
        assert!((model.terms[0].amplitude - 1.0).abs() < 1e-12);
        assert!(model.terms[0].phase.abs() < 1e-12);
    }

    #[test]
    fn fit_constant_and_nyquist_terms() {
        let target = Image2D::from_fn(12, 10, |n, m| 0.5 + 0.25 * if (n + m) % 2 == 0 { 1.0 } else { -1.0 });
        let modes = [DampedMode::new(1.0, 1.0, 0.0, 0.0), DampedMode::new(1.0, 1.0, 0.5, 0.5)];
        let model = fit_amplitude_phase(&modes, &target).unwrap();
        assert!((model.terms[0].amplitude - 0.5).abs() < 1e-12);
        assert!((model.terms[1].amplitude - 0.25).abs() < 1e-12);
    }

    #[test]
    fn duplicate_frequencies_reported() {
        let target = Image2D::from_fn(40, 3, |n, _| (TAU * 0.1 * n as f64).cos());
        let modes = [
            DampedMode::series(1.0, 0.3),
            DampedMode::series(1.0, 0.1),
            DampedMode::series(0.99, 0.21),
            DampedMode::series(1.0, 0.1),
        ];
        match fit_amplitude_phase(&modes, &target) {
            Err(Error::RankDeficientRegressors { first, second }) => assert_eq!((first, second), (1, 3)),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn filter_examples() {
        let model = ParametricModel2D::new(vec![
            SinusoidTerm::cosine(1.0, 0.05, 0.0, 0.0),
            SinusoidTerm::cosine(1.0, 0.2, 0.0, 0.0),
        ]);
        let kept = model.filter_terms(|m| m.freq_row > 0.1);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept.terms[0].mode.freq_row, 0.2);
        assert!(ParametricModel2D::default().filter_terms(|_| true).is_empty());
        assert_eq!(model.filter_terms(|_| true), model);
    }

    #[test]
    fn document_round_trip() {
        let mut model = ParametricModel2D::new(vec![
            term(1.0 / 3.0, 0.987654321, 1.0, 0.123456789, -0.2, 2.5),
            term(7.25e-3, 1.01, 0.95, 0.0, 0.5, -1.0),
        ]);
        model.fit_rmse = 0.0331;
        let doc = model.to_document();
        assert_eq!(ParametricModel2D::from_document(&doc).unwrap(), model);
        assert!(ParametricModel2D::from_document("1 2 3\n").is_err());
        assert!(ParametricModel2D::from_document("terms = 2\n1 1 1 0 0 0\n").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_term() -> impl Strategy<Value = SinusoidTerm> {
            (0.2f64..2.0, 0.9f64..1.05, 0.9f64..1.05, -0.5f64..0.5, -0.5f64..0.5, -3.0f64..3.0)
                .prop_map(|(s, rr, rc, wr, wc, phi)| term(s, rr, rc, wr, wc, phi))
        }

        proptest! {
            #[test]
            fn derivative_matches_central_differences(t in arb_term(), n in 0.0f64..30.0, m in 0.0f64..30.0) {
                let h = 1e-4;
                let scale = t.amplitude.max(1.0) * t.mode.damping_row.max(1.0).powf(n + 1.0)
                    * t.mode.damping_col.max(1.0).powf(m + 1.0);
                let dr = t.derivative(Axis::Row).unwrap().value(n, m);
                let fd_r = (t.value(n + h, m) - t.value(n - h, m)) / (2.0 * h);
                prop_assert!((dr - fd_r).abs() <= 1e-6 * scale);
                let dc = t.derivative(Axis::Col).unwrap().value(n, m);
                let fd_c = (t.value(n, m + h) - t.value(n, m - h)) / (2.0 * h);
                prop_assert!((dc - fd_c).abs() <= 1e-6 * scale);
            }

            #[test]
            fn filter_partition_is_linear(terms in proptest::collection::vec(arb_term(), 0..6), cut in -0.5f64..0.5) {
                let model = ParametricModel2D::new(terms);
                let hi = model.filter_terms(|m| m.freq_row > cut);
                let lo = model.filter_terms(|m| !(m.freq_row > cut));
                for (n, m) in [(0.0, 0.0), (3.5, 1.25), (10.0, 7.0)] {
                    prop_assert!((hi.value(n, m) + lo.value(n, m) - model.value(n, m)).abs() < 1e-12);
                }
            }

            #[test]
            fn fit_recovers_noiseless_terms(
                s in 0.5f64..2.0, phi in -3.0f64..3.0, wr in 0.03f64..0.45,
                wc in -0.4f64..0.4, rho in 0.98f64..1.01,
            ) {
                let truth = term(s, rho, 1.0, wr, wc, phi);
                let other = term(0.7, 1.0, 0.99, 0.015, 0.02, 1.0);
                let target = ParametricModel2D::new(vec![truth, other]).evaluate_grid((24, 20));
                let fit = fit_amplitude_phase(&[truth.mode, other.mode], &target).unwrap();
                prop_assert!((fit.terms[0].amplitude - s).abs() <= 1e-8 * s);
                prop_assert!(wrap_phase(fit.terms[0].phase - phi).abs() <= 1e-8);
            }
        }
    }
}
