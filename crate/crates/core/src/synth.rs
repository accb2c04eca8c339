//! Synthetic inputs with known ground truth: EL-like module images, the
//! shifted series pair used to benchmark stitch estimation, and tiled
//! voltage profiles with a known characteristic length.

use std::f64::consts::{FRAC_PI_2, TAU};

use crate::error::{Error, Result};
use crate::grid::{Axis, Image2D, Series1D};
use crate::rng::NormalStream;
use crate::sigmodel::{DampedMode, ParametricModel2D, SinusoidTerm};

/// Exact evaluation of one term on the integer grid.
pub fn gen_cosine2d(term: SinusoidTerm, dims: (usize, usize)) -> Image2D {
    ParametricModel2D::new(vec![term]).evaluate_grid(dims)
}

/// Gaussian dip `-depth * exp(-d^2 / (2 radius^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Defect {
    pub center: (f64, f64),
    pub radius: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElSynthSpec {
    pub dims: (usize, usize),
    pub n_cells: usize,
    pub cell_period: f64,
    pub cell_axis: Axis,
    /// Amplitude of the fundamental; harmonics follow `HARMONICS`.
    pub cell_amplitude: f64,
    /// Position of the first cell boundary along the cell axis.
    pub cell_offset: f64,
    pub trend: ParametricModel2D,
    pub defects: Vec<Defect>,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Relative amplitudes of the cell harmonics.
pub const HARMONICS: [f64; 3] = [1.0, 0.3, 0.1];

impl ElSynthSpec {
    /// A 128 x 96 module with 10 cells of 12 px along the rows, a smooth
    /// trend, three defects and noise 0.02; trend phases and defect sites
    /// vary with `seed`.
    pub fn preset(seed: u64) -> Self {
        let u = NormalStream::new(seed, 100);
        let mut k = 0u64;
        let mut draw = || {
            k += 1;
            u.uniform(k)
        };
        let trend = ParametricModel2D::new(vec![
            SinusoidTerm::cosine(0.8, 0.0, 0.0, 0.0),
            SinusoidTerm::cosine(0.15, 0.015 + 0.01 * draw(), 0.01 + 0.01 * draw(), TAU * draw()),
            SinusoidTerm::cosine(0.1, 0.0, 0.025 + 0.01 * draw(), TAU * draw()),
        ]);
        let dims = (128, 96);
        let defects = (0..3)
            .map(|_| Defect {
                center: (10.0 + 108.0 * draw(), 10.0 + 76.0 * draw()),
                radius: 1.5 + 1.5 * draw(),
                depth: 0.1 + 0.1 * draw(),
            })
            .collect();
        Self {
            dims,
            n_cells: 10,
            cell_period: 12.0,
            cell_axis: Axis::Row,
            cell_amplitude: 0.25,
            cell_offset: 4.0 + 4.0 * draw(),
            trend,
            defects,
            noise_sigma: 0.02,
            seed,
        }
    }

    /// Cell pattern as a model: three harmonics of `1 / cell_period` in sine
    /// phase, so intensity ramps across each cell and drops at its edge.
    pub fn cell_model(&self) -> ParametricModel2D {
        let f0 = 1.0 / self.cell_period;
        ParametricModel2D::new(
            HARMONICS
                .iter()
                .enumerate()
                .map(|(h, &a)| {
                    let f = f0 * (h + 1) as f64;
                    let phase = -FRAC_PI_2 - TAU * f * self.cell_offset;
                    let (fr, fc) = match self.cell_axis {
                        Axis::Row => (f, 0.0),
                        Axis::Col => (0.0, f),
                    };
                    SinusoidTerm::new(self.cell_amplitude * a, DampedMode::new(1.0, 1.0, fr, fc), phase)
                        .expect("finite cell term")
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElGroundTruth {
    pub trend: Image2D,
    pub cell: Image2D,
    pub defects: Image2D,
    pub noise: Image2D,
}

/// `X = trend + cell + defects + noise`, summed in that order.
pub fn gen_el_like(spec: &ElSynthSpec) -> Result<(Image2D, ElGroundTruth)> {
    let (rows, cols) = spec.dims;
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidInput("synthetic image needs at least 2 x 2 pixels".into()));
    }
    if !(spec.cell_period > 2.0) || !spec.noise_sigma.is_finite() || spec.noise_sigma < 0.0 {
        return Err(Error::InvalidInput("cell period must exceed 2 px and noise must be >= 0".into()));
    }
    let trend = spec.trend.evaluate_grid(spec.dims);
    let cell = spec.cell_model().evaluate_grid(spec.dims);
    let defects = Image2D::from_fn(rows, cols, |n, m| {
        spec.defects
            .iter()
            .map(|d| {
                let r2 = (n as f64 - d.center.0).powi(2) + (m as f64 - d.center.1).powi(2);
                -d.depth * (-r2 / (2.0 * d.radius * d.radius)).exp()
            })
            .sum()
    });
    let noise = Image2D::new(rows, cols, NormalStream::new(spec.seed, 0).normals(rows * cols, spec.noise_sigma))?;
    let img = &(&(&trend + &cell) + &defects) + &noise;
    Ok((
        img,
        ElGroundTruth {
            trend,
            cell,
            defects,
            noise,
        },
    ))
}

/// Noise-free parts of the shifted pair, `x = 1..=n`.
pub fn s1_s2_signals(shift: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let c = |x: f64, t: f64| (TAU * x / t).cos();
    (1..=n)
        .map(|i| {
            let x = i as f64;
            (
                c(x, 50.0) + c(x, 20.0) + c(x, 30.0),
                2.0 * c(x, 70.0) + c(x + shift, 20.0) + c(x + shift, 30.0),
            )
        })
        .unzip()
}

/// The shifted pair with independent unit-variance noise (streams 1 and 2 of
/// `seed`). The period-20 and period-30 parts of the second series lead the
/// first by `shift`.
pub fn gen_s1_s2(shift: f64, n: usize, seed: u64) -> Result<(Series1D, Series1D)> {
    if n < 100 {
        return Err(Error::InvalidInput(format!("series length {n} must be at least 100")));
    }
    let (mut a, mut b) = s1_s2_signals(shift, n);
    let (na, nb) = (NormalStream::new(seed, 1), NormalStream::new(seed, 2));
    for i in 0..n {
        a[i] += na.normal(i as u64);
        b[i] += nb.normal(i as u64);
    }
    Ok((Series1D::new(a)?, Series1D::new(b)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharLengthProfile {
    pub lambda0: f64,
    pub cell_width: usize,
    pub n_cells: usize,
    pub rows: usize,
    pub c: f64,
    pub c0: f64,
    pub v_edge: f64,
}

impl CharLengthProfile {
    /// Voltage at column `x`: `V_edge cosh(lambda0 (x - x_c)) / cosh(lambda0 w / 2)`
    /// with `x_c` the centre of the cell containing `x`.
    pub fn voltage(&self, x: usize) -> f64 {
        let w = self.cell_width as f64;
        let cell = (x / self.cell_width) as f64;
        let xc = cell * w + (w - 1.0) / 2.0;
        self.v_edge * (self.lambda0 * (x as f64 - xc)).cosh() / (self.lambda0 * w / 2.0).cosh()
    }
}

/// `I = c exp(c0 V)`, constant along rows and tiled over `n_cells` cells
/// along the columns.
pub fn gen_charlen_profile(p: &CharLengthProfile) -> Result<Image2D> {
    if !(p.lambda0 > 0.0) || !(p.c > 0.0) || !(p.c0 > 0.0) {
        return Err(Error::InvalidInput("lambda0, c and c0 must be positive".into()));
    }
    if p.cell_width < 2 || p.n_cells == 0 || p.rows == 0 {
        return Err(Error::InvalidInput("profile needs cell width >= 2, n_cells >= 1, rows >= 1".into()));
    }
    let v: Vec<f64> = (0..p.cell_width * p.n_cells).map(|x| p.voltage(x)).collect();
    Ok(Image2D::from_fn(p.rows, v.len(), |_, m| p.c * (p.c0 * v[m]).exp()))
}
