//! EL image applications: decomposition into global, cell and aperiodic
//! parts; sub-pixel interconnection-line detection; characteristic length
//! of the lateral voltage; and stitch-shift estimation between slices.

use std::f64::consts::TAU;
use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::esprit::{default_rank, esprit_1d, esprit_2d, merge_conjugates, PoleEstimate};
use crate::grid::{log_transform, Axis, Image2D, Series1D};
use crate::hankel::{trajectory_energy, EmbeddingWindow};
use crate::lowrank::LanczosOptions;
use crate::sigmodel::{wrap_phase, DampedMode, ParametricModel2D};
use crate::ssa2d::{decompose_2d, decompose_mssa, Channel, DEFAULT_IMAGE_TRIPLES, DEFAULT_MSSA_TRIPLES};

/// Poles closer to the origin than this decay within one pixel and are dropped.
pub const MIN_POLE_MODULUS: f64 = 1e-2;
/// Poles whose envelope over the grid would exceed `e^MAX_ENVELOPE_EXPONENT` are dropped.
pub const MAX_ENVELOPE_EXPONENT: f64 = 600.0;
pub const DEFAULT_MERGE_TOL: f64 = 1e-6;
/// `|ln(I / c)|` below which the characteristic length is undefined.
pub const LOG_RATIO_EPS: f64 = 1e-3;
pub const DEFAULT_N_CELLS: usize = 150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Additive,
    /// Decompose `ln X`; all outputs live in the log domain.
    Multiplicative,
}

fn usable(p: &PoleEstimate, dims: (usize, usize)) -> bool {
    let (ar, ac) = (p.damping_row(), p.damping_col());
    let finite = ar.is_finite() && ac.is_finite() && p.freq_row().is_finite() && p.freq_col().is_finite();
    finite
        && ar >= MIN_POLE_MODULUS
        && ac >= MIN_POLE_MODULUS
        && ar.ln().abs() * dims.0 as f64 + ac.ln().abs() * dims.1 as f64 <= MAX_ENVELOPE_EXPONENT
}

/// Real modes from a pole list, ignoring poles that cannot be evaluated on
/// a grid of `dims`.
pub fn usable_modes(poles: &[PoleEstimate], dims: (usize, usize), merge_tol: f64) -> Vec<DampedMode> {
    let kept: Vec<PoleEstimate> = poles.iter().copied().filter(|p| usable(p, dims)).collect();
    merge_conjugates(&kept, merge_tol).modes
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElOptions {
    pub n_cells: usize,
    pub cell_axis: Axis,
    pub k: usize,
    pub mode: Mode,
    pub window: Option<EmbeddingWindow>,
    /// ESPRIT subspace size; defaults to `esprit::default_rank`.
    pub rank: Option<usize>,
    pub merge_tol: f64,
    pub log_floor: f64,
    pub lanczos: LanczosOptions,
}

impl Default for ElOptions {
    fn default() -> Self {
        Self {
            n_cells: DEFAULT_N_CELLS,
            cell_axis: Axis::Row,
            k: DEFAULT_IMAGE_TRIPLES,
            mode: Mode::Additive,
            window: None,
            rank: None,
            merge_tol: DEFAULT_MERGE_TOL,
            log_floor: 1e-6,
            lanczos: LanczosOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ElDecomposition {
    pub g: Image2D,
    pub s: Image2D,
    pub r: Image2D,
    pub model_s: ParametricModel2D,
    pub model_g: ParametricModel2D,
    pub mode: Mode,
    pub window: EmbeddingWindow,
    pub sigmas: Vec<f64>,
    /// Squared Frobenius norm of the full trajectory matrix.
    pub energy: f64,
    /// Size of the subspace handed to ESPRIT.
    pub rank: usize,
    /// RMS of the image the decomposition ran on minus the fitted model.
    pub model_rmse: f64,
}

impl ElDecomposition {
    /// RMS misfit of the regression against the low-rank reconstruction.
    pub fn fit_rmse(&self) -> f64 {
        self.model_s.fit_rmse
    }

    /// Combined fitted model `G + S`.
    pub fn model(&self) -> ParametricModel2D {
        self.model_g.merged(&self.model_s)
    }
}

/// Splits `X` (or `ln X`) into `G + S + R`: global-intensity terms, cell
/// terms with `|omega_axis| > n_cells / N_axis`, and the rest.
pub fn el_decompose(x: &Image2D, opts: &ElOptions) -> Result<ElDecomposition> {
    if opts.n_cells == 0 {
        return Err(Error::InvalidInput("n_cells must be at least 1".into()));
    }
    let y = match opts.mode {
        Mode::Additive => x.clone(),
        Mode::Multiplicative => log_transform(x, opts.log_floor)?,
    };
    let dims = y.dims();
    let d = decompose_2d(&y, opts.window, opts.k, &opts.lanczos)?;
    let energy = trajectory_energy(&y, &d.window);
    let sigmas = d.truncation.sigmas();
    let rank = opts.rank.unwrap_or_else(|| default_rank(&sigmas, energy, opts.k)).min(d.len());

    let model = if rank == 0 {
        ParametricModel2D::default()
    } else {
        let poles = esprit_2d(&d.truncation.left_basis(rank), &d.window)?;
        let modes = usable_modes(&poles, dims, opts.merge_tol);
        let target = d.reconstruct_range(0..rank)?;
        fit_amplitude_phase_checked(&modes, &target)?
    };
    let threshold = opts.n_cells as f64 / y.extent(opts.cell_axis) as f64;
    let is_cell = |m: &DampedMode| m.freq(opts.cell_axis).abs() > threshold;
    let mut model_s = model.filter_terms(is_cell);
    let mut model_g = model.filter_terms(|m| !is_cell(m));
    model_s.fit_rmse = model.fit_rmse;
    model_g.fit_rmse = model.fit_rmse;

    let s = model_s.evaluate_grid(dims);
    let g = model_g.evaluate_grid(dims);
    let r = Image2D::from_fn(dims.0, dims.1, |n, m| y.get(n, m) - s.get(n, m) - g.get(n, m));
    let model_rmse = (r.values().iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt();
    Ok(ElDecomposition {
        g,
        s,
        r,
        model_s,
        model_g,
        mode: opts.mode,
        window: d.window,
        sigmas,
        energy,
        rank,
        model_rmse,
    })
}

fn fit_amplitude_phase_checked(modes: &[DampedMode], target: &Image2D) -> Result<ParametricModel2D> {
    let model = crate::sigmodel::fit_amplitude_phase(modes, target)?;
    if !model.fit_rmse.is_finite() {
        return Err(Error::Numerical("fitted model is not finite on the grid".into()));
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineOptions {
    pub cell_axis: Axis,
    /// Mesh points per pixel along the cell axis.
    pub refine: usize,
    /// Bisection bracket width in pixels; `None` keeps the linear
    /// interpolation of the mesh crossing.
    pub bisect_tol: Option<f64>,
    /// Largest jump along the cell axis between consecutive levels of one line.
    pub max_jump: f64,
}

impl Default for LineOptions {
    fn default() -> Self {
        Self {
            cell_axis: Axis::Row,
            refine: 4,
            bisect_tol: Some(1e-6),
            max_jump: 2.0,
        }
    }
}

/// Polylines of `(row, col)` points in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LineSet {
    pub lines: Vec<Vec<(f64, f64)>>,
    pub cell_axis: Axis,
}

impl LineSet {
    pub fn point_count(&self) -> usize {
        self.lines.iter().map(Vec::len).sum()
    }

    /// `line,level,coordinate` rows: level is the integer position along the
    /// other axis, coordinate the sub-pixel position along the cell axis.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (i, line) in self.lines.iter().enumerate() {
            for &(r, c) in line {
                let (level, coord) = match self.cell_axis {
                    Axis::Row => (c, r),
                    Axis::Col => (r, c),
                };
                out.push_str(&format!("{i},{level:?},{coord:?}\n"));
            }
        }
        out
    }

    /// Minima at one level, in increasing order.
    pub fn minima_at(&self, level: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .lines
            .iter()
            .flatten()
            .filter_map(|&(r, c)| match self.cell_axis {
                Axis::Row if c == level as f64 => Some(r),
                Axis::Col if r == level as f64 => Some(c),
                _ => None,
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Local minima of the cell model along `cell_axis`: minus-to-plus sign
/// changes of the analytic derivative on a refined mesh, at each integer
/// level of the other axis, chained across levels into polylines.
pub fn detect_lines(model_s: &ParametricModel2D, dims: (usize, usize), opts: &LineOptions) -> Result<LineSet> {
    if model_s.is_empty() {
        return Err(Error::InvalidInput("cell model has no terms".into()));
    }
    if opts.refine == 0 {
        return Err(Error::InvalidInput("mesh refinement must be at least 1".into()));
    }
    let ds = model_s.differentiate(opts.cell_axis)?;
    let (along, levels) = match opts.cell_axis {
        Axis::Row => (dims.0, dims.1),
        Axis::Col => (dims.1, dims.0),
    };
    let at = |t: f64, level: f64| match opts.cell_axis {
        Axis::Row => ds.value(t, level),
        Axis::Col => ds.value(level, t),
    };
    let steps = (along.saturating_sub(1)) * opts.refine;
    let h = 1.0 / opts.refine as f64;

    let per_level: Vec<Vec<f64>> = (0..levels)
        .into_par_iter()
        .map(|lv| {
            let level = lv as f64;
            let mut minima = Vec::new();
            let mut prev = at(0.0, level);
            for j in 0..steps {
                let (t0, t1) = (j as f64 * h, (j + 1) as f64 * h);
                let next = at(t1, level);
                if prev < 0.0 && next >= 0.0 {
                    let root = match opts.bisect_tol {
                        None => t0 - prev * (t1 - t0) / (next - prev),
                        Some(tol) => {
                            let (mut lo, mut hi) = (t0, t1);
                            while hi - lo > tol {
                                let mid = 0.5 * (lo + hi);
                                if at(mid, level) < 0.0 {
                                    lo = mid;
                                } else {
                                    hi = mid;
                                }
                            }
                            0.5 * (lo + hi)
                        }
                    };
                    minima.push(root);
                }
                prev = next;
            }
            minima
        })
        .collect();

    // greedy chaining: extend the line whose last point (on the previous
    // level) is closest, otherwise start a new one
    let mut lines: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut open: Vec<usize> = Vec::new();
    for (lv, minima) in per_level.iter().enumerate() {
        let mut next_open = Vec::new();
        let mut taken = vec![false; open.len()];
        for &t in minima {
            let best = open
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken[*i])
                .map(|(i, &li)| (i, li, (lines[li].last().expect("non-empty").1 - t).abs()))
                .filter(|&(_, _, d)| d <= opts.max_jump)
                .min_by(|a, b| a.2.total_cmp(&b.2));
            match best {
                Some((i, li, _)) => {
                    taken[i] = true;
                    lines[li].push((lv, t));
                    next_open.push(li);
                }
                None => {
                    lines.push(vec![(lv, t)]);
                    next_open.push(lines.len() - 1);
                }
            }
        }
        open = next_open;
    }
    let lines = lines
        .into_iter()
        .map(|line| {
            line.into_iter()
                .map(|(lv, t)| match opts.cell_axis {
                    Axis::Row => (t, lv as f64),
                    Axis::Col => (lv as f64, t),
                })
                .collect()
        })
        .collect();
    Ok(LineSet {
        lines,
        cell_axis: opts.cell_axis,
    })
}

/// Smooth intensity `I` given as a fitted model of `I` itself or of `ln I`.
#[derive(Debug, Clone, PartialEq)]
pub enum IntensityModel {
    Linear(ParametricModel2D),
    Log(ParametricModel2D),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharLengthField {
    /// `lambda^2` in 1/px^2; 0 where masked.
    pub lambda_sq: Image2D,
    pub mask: Vec<bool>,
}

impl CharLengthField {
    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&v| v).count()
    }

    /// `sqrt(lambda^2)` at valid pixels with `lambda^2 >= 0`.
    pub fn lambdas(&self) -> Vec<f64> {
        self.lambda_sq
            .values()
            .iter()
            .zip(&self.mask)
            .filter(|(l, &ok)| ok && **l >= 0.0)
            .map(|(l, _)| l.sqrt())
            .collect()
    }

    pub fn median_lambda(&self) -> Option<f64> {
        median(self.lambdas())
    }

    pub fn mask_image(&self) -> Image2D {
        let (r, c) = self.lambda_sq.dims();
        Image2D::new(r, c, self.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
            .expect("mask matches field")
    }
}

pub fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// `lambda^2 = (I'' I - I'^2) / (I^2 ln(I / c))` from analytic derivatives
/// along `direction`; `c0` only scales the voltage and cancels here, but is
/// validated so that the reported field stays tied to `V = ln(I/c) / c0`.
pub fn char_length(
    model: &IntensityModel,
    dims: (usize, usize),
    c: f64,
    c0: f64,
    direction: Axis,
) -> Result<CharLengthField> {
    if !(c > 0.0) || !c.is_finite() || !(c0 > 0.0) || !c0.is_finite() {
        return Err(Error::InvalidInput(format!("c = {c} and c0 = {c0} must be positive")));
    }
    let base = match model {
        IntensityModel::Linear(m) | IntensityModel::Log(m) => m,
    };
    let d1 = base.differentiate(direction)?;
    let d2 = d1.differentiate(direction)?;
    let ln_c = c.ln();
    let (rows, cols) = dims;
    let mut mask = vec![false; rows * cols];
    let mut out = vec![0.0; rows * cols];
    for n in 0..rows {
        for m in 0..cols {
            let (x, y) = (n as f64, m as f64);
            let (f, f1, f2) = (base.value(x, y), d1.value(x, y), d2.value(x, y));
            // curvature = (I'' I - I'^2) / I^2 = (ln I)''
            let (curvature, log_ratio) = match model {
                IntensityModel::Linear(_) => {
                    if !(f > 0.0) {
                        continue;
                    }
                    ((f2 * f - f1 * f1) / (f * f), (f / c).ln())
                }
                IntensityModel::Log(_) => (f2, f - ln_c),
            };
            if !(log_ratio.abs() >= LOG_RATIO_EPS) || !curvature.is_finite() {
                continue;
            }
            mask[n * cols + m] = true;
            out[n * cols + m] = curvature / log_ratio;
        }
    }
    if !mask.iter().any(|&b| b) {
        return Err(Error::Numerical("characteristic length is undefined at every pixel".into()));
    }
    Ok(CharLengthField {
        lambda_sq: Image2D::new(rows, cols, out)?,
        mask,
    })
}

/// `c0 = q / (k T)` for temperature `T` in kelvin.
pub fn thermal_c0(temperature: f64) -> Result<f64> {
    const Q: f64 = 1.602176634e-19;
    const K_B: f64 = 1.380649e-23;
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidInput(format!("temperature {temperature} K must be positive")));
    }
    Ok(Q / (K_B * temperature))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregate {
    /// Component shift of largest magnitude.
    #[default]
    Max,
    Median,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StitchOptions {
    /// Axis that indexes the slices; `Row` compares image rows and measures
    /// shifts along the columns.
    pub slice_axis: Axis,
    /// MSSA window length; defaults to half the slice length.
    pub window: Option<usize>,
    /// Frequency band of cell components; defaults to `[0.7, 1.3] n_cells / N`.
    pub band: Option<(f64, f64)>,
    pub n_cells: usize,
    pub k: usize,
    /// ESPRIT subspace size; defaults as in `ElOptions::rank`.
    pub rank: Option<usize>,
    pub aggregate: Aggregate,
    /// Slice indices whose pair with the previous slice is estimated; other
    /// entries stay 0.
    pub slices: Option<Range<usize>>,
    pub merge_tol: f64,
    pub lanczos: LanczosOptions,
}

impl Default for StitchOptions {
    fn default() -> Self {
        Self {
            slice_axis: Axis::Row,
            window: None,
            band: None,
            n_cells: DEFAULT_N_CELLS,
            k: DEFAULT_MSSA_TRIPLES,
            rank: None,
            aggregate: Aggregate::Max,
            slices: None,
            merge_tol: DEFAULT_MERGE_TOL,
            lanczos: LanczosOptions::default(),
        }
    }
}

/// Relative shifts between adjacent slices: entry `i` is the shift of slice
/// `i + 1` against slice `i`, so that `slice_{i+1}(t) ~ slice_i(t + shift)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementMap {
    pub shifts: Vec<f64>,
    /// Pairs without any in-band component (shift recorded as 0).
    pub flagged: Vec<bool>,
    pub axis: Axis,
}

impl DisplacementMap {
    pub fn new(shifts: Vec<f64>, axis: Axis) -> Self {
        let flagged = vec![false; shifts.len()];
        Self { shifts, flagged, axis }
    }

    pub fn negated(&self) -> Self {
        Self {
            shifts: self.shifts.iter().map(|s| -s).collect(),
            ..self.clone()
        }
    }

    pub fn to_csv(&self) -> String {
        self.shifts.iter().map(|s| format!("{s:?}\n")).collect()
    }
}

/// Per-component shifts between two series: `wrap(phi_b - phi_a) / (2 pi omega)`
/// for every shared component with `omega` in `band`.
pub fn pair_shifts(
    a: &Series1D,
    b: &Series1D,
    band: (f64, f64),
    opts: &StitchOptions,
) -> Result<Vec<(f64, f64)>> {
    let d = decompose_mssa(a, b, opts.window, opts.k, &opts.lanczos)?;
    let energy = |s: &Series1D| {
        let w = EmbeddingWindow::new(d.window, 1, (s.len(), 1)).expect("validated by decompose_mssa");
        trajectory_energy(&s.to_column_image(), &w)
    };
    let total = energy(a) + energy(b);
    let rank = opts.rank.unwrap_or_else(|| default_rank(&d.truncation.sigmas(), total, opts.k)).min(d.len());
    if rank == 0 {
        return Ok(Vec::new());
    }
    let poles = esprit_1d(&d.truncation.left_basis(rank))?;
    let modes = usable_modes(&poles, (a.len(), 1), opts.merge_tol);
    let indices: Vec<usize> = (0..rank).collect();
    let fa = d.channel_model(Channel::First, &modes, &indices)?;
    let fb = d.channel_model(Channel::Second, &modes, &indices)?;
    Ok(fa
        .terms
        .iter()
        .zip(&fb.terms)
        .filter(|(ta, _)| {
            let w = ta.mode.freq_row;
            w >= band.0 && w <= band.1 && w > 0.0
        })
        .map(|(ta, tb)| {
            let w = ta.mode.freq_row;
            (w, wrap_phase(tb.phase - ta.phase) / (TAU * w))
        })
        .collect())
}

fn aggregate(shifts: &[f64], how: Aggregate) -> Option<f64> {
    match how {
        Aggregate::Max => shifts.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())),
        Aggregate::Median => median(shifts.to_vec()),
    }
}

fn slice(x: &Image2D, axis: Axis, i: usize) -> Vec<f64> {
    match axis {
        Axis::Row => x.row(i).to_vec(),
        Axis::Col => x.column(i),
    }
}

/// Shift map between adjacent slices from two-channel MSSA phase differences
/// of the in-band (cell) components. Pairs are processed in parallel.
pub fn stitch_displacement(x: &Image2D, opts: &StitchOptions) -> Result<DisplacementMap> {
    let count = x.extent(opts.slice_axis);
    let len = x.extent(opts.slice_axis.other());
    if count < 2 {
        return Err(Error::InvalidInput("need at least two slices".into()));
    }
    let band = match opts.band {
        Some(b) => b,
        None => {
            let f = opts.n_cells as f64 / len as f64;
            (0.7 * f, 1.3 * f)
        }
    };
    if !(band.0 > 0.0 && band.0 <= band.1 && band.1 < 0.5) {
        return Err(Error::InvalidInput(format!(
            "cell band [{}, {}] must lie within (0, 0.5)",
            band.0, band.1
        )));
    }
    let range = opts.slices.clone().unwrap_or(1..count);
    if range.start < 1 || range.end > count {
        return Err(Error::InvalidInput(format!(
            "slice range {range:?} must lie within 1..{count}"
        )));
    }
    let results: Vec<(usize, Option<f64>)> = range
        .into_par_iter()
        .map(|i| {
            let a = Series1D::new(slice(x, opts.slice_axis, i - 1))?;
            let b = Series1D::new(slice(x, opts.slice_axis, i))?;
            let shifts: Vec<f64> = pair_shifts(&a, &b, band, opts)?.into_iter().map(|(_, s)| s).collect();
            Ok((i, aggregate(&shifts, opts.aggregate)))
        })
        .collect::<Result<_>>()?;
    let mut map = DisplacementMap::new(vec![0.0; count - 1], opts.slice_axis);
    for (i, s) in results {
        match s {
            Some(v) => map.shifts[i - 1] = v,
            None => map.flagged[i - 1] = true,
        }
    }
    Ok(map)
}

/// Resamples every slice at `t + D_i`, where `D` is the cumulative sum of the
/// map anchored at 0 for the first slice; linear interpolation, edge clamping.
pub fn apply_displacement(x: &Image2D, map: &DisplacementMap) -> Result<Image2D> {
    let count = x.extent(map.axis);
    if map.shifts.len() + 1 != count {
        return Err(Error::DimensionMismatch {
            expected: count.saturating_sub(1),
            actual: map.shifts.len(),
        });
    }
    let mut offsets = vec![0.0; count];
    for i in 1..count {
        offsets[i] = offsets[i - 1] + map.shifts[i - 1];
    }
    let len = x.extent(map.axis.other());
    let sample = |s: &[f64], t: f64| {
        let t = t.clamp(0.0, (len - 1) as f64);
        let i = (t.floor() as usize).min(len - 1);
        if i + 1 >= len {
            return s[len - 1];
        }
        let f = t - i as f64;
        s[i] * (1.0 - f) + s[i + 1] * f
    };
    let slices: Vec<Vec<f64>> = (0..count).map(|i| slice(x, map.axis, i)).collect();
    Ok(match map.axis {
        Axis::Row => Image2D::from_fn(x.rows(), x.cols(), |n, m| sample(&slices[n], m as f64 + offsets[n])),
        Axis::Col => Image2D::from_fn(x.rows(), x.cols(), |n, m| sample(&slices[m], n as f64 + offsets[m])),
    })
}
