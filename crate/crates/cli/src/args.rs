use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use elssa::elproc::{Aggregate, DEFAULT_N_CELLS};
use elssa::ssa2d::{DEFAULT_IMAGE_TRIPLES, DEFAULT_MSSA_TRIPLES};
use elssa::{Axis, Mode};

#[derive(Debug, Parser)]
#[command(name = "elssa", version, about = "2D singular spectrum analysis of EL images")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split an image into global (G), cell (S) and residual (R) parts.
    Decompose(DecomposeArgs),
    /// Sub-pixel interconnection lines from a cell model.
    DetectLines(DetectLinesArgs),
    /// Inverse characteristic length of the lateral voltage.
    Charlen(CharlenArgs),
    /// Estimate and undo stitch shifts between image slices.
    Unstitch(UnstitchArgs),
    /// Generate synthetic test data.
    Synth(SynthArgs),
    /// Pole estimates of the dominant signal subspace.
    Esprit(EspritArgs),
    /// Time the decomposition over a range of image sizes.
    Bench(BenchArgs),
}

/// `auto` or `LX,LY`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowSpec {
    #[default]
    Auto,
    Explicit(usize, usize),
}

impl FromStr for WindowSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(WindowSpec::Auto);
        }
        let (lx, ly) = parse_pair::<usize>(s)?;
        Ok(WindowSpec::Explicit(lx, ly))
    }
}

/// Two comma separated values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair<T>(pub T, pub T);

impl<T: FromStr> FromStr for Pair<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_pair(s).map(|(a, b)| Pair(a, b))
    }
}

fn parse_pair<T: FromStr>(s: &str) -> Result<(T, T), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected two comma separated values, got '{s}'"))?;
    let parse = |v: &str| v.trim().parse::<T>().map_err(|_| format!("cannot parse '{v}'"));
    Ok((parse(a)?, parse(b)?))
}

/// `START:END`, a half-open range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceRange(pub std::ops::Range<usize>);

impl FromStr for SliceRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("expected START:END, got '{s}'"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("cannot parse '{v}'"));
        Ok(SliceRange(parse(a)?..parse(b)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    Row,
    Col,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Axis {
        match a {
            AxisArg::Row => Axis::Row,
            AxisArg::Col => Axis::Col,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Additive,
    Multiplicative,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Additive => Mode::Additive,
            ModeArg::Multiplicative => Mode::Multiplicative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Png16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregateArg {
    Max,
    Median,
}

impl From<AggregateArg> for Aggregate {
    fn from(a: AggregateArg) -> Aggregate {
        match a {
            AggregateArg::Max => Aggregate::Max,
            AggregateArg::Median => Aggregate::Median,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IntensityArg {
    /// The model describes the intensity itself.
    Linear,
    /// The model describes the log intensity.
    Log,
}

/// Embedding and truncation settings shared by the SSA-based commands.
#[derive(Debug, Clone, Args)]
pub struct SsaArgs {
    /// Embedding window, `auto` (half the image) or `LX,LY`.
    #[arg(long, default_value = "auto")]
    pub window: WindowSpec,

    /// Number of eigentriples to compute.
    #[arg(long, default_value_t = DEFAULT_IMAGE_TRIPLES)]
    pub k: usize,

    /// ESPRIT subspace size (default: chosen from the singular values).
    #[arg(long)]
    pub rank: Option<usize>,

    /// Seed of the Lanczos start vector.
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ElArgs {
    #[command(flatten)]
    pub ssa: SsaArgs,

    /// Number of cells along the cell axis.
    #[arg(long, default_value_t = DEFAULT_N_CELLS)]
    pub n_cells: usize,

    /// Axis along which the cell pattern repeats.
    #[arg(long, value_enum, default_value_t = AxisArg::Row)]
    pub cell_axis: AxisArg,

    #[arg(long, value_enum, default_value_t = ModeArg::Additive)]
    pub mode: ModeArg,
}

#[derive(Debug, Clone, Args)]
pub struct DecomposeArgs {
    /// Input image (csv or png).
    #[arg(long)]
    pub input: PathBuf,

    /// Directory for G, S, R, the model documents and the report.
    #[arg(long)]
    pub out_dir: PathBuf,

    /// Format of the component images.
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,

    #[command(flatten)]
    pub el: ElArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DetectLinesArgs {
    /// Image to decompose; its cell model is searched for lines.
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    pub input: Option<PathBuf>,

    /// Cell model document, used instead of decomposing an image.
    #[arg(long, requires = "dims")]
    pub model: Option<PathBuf>,

    /// Grid size `ROWS,COLS` for `--model`.
    #[arg(long)]
    pub dims: Option<Pair<usize>>,

    /// Output csv of `line,level,coordinate` rows.
    #[arg(long)]
    pub output: PathBuf,

    /// Mesh points per pixel for the derivative sign search.
    #[arg(long, default_value_t = 4)]
    pub refine: usize,

    /// Bisection tolerance in pixels.
    #[arg(long, default_value_t = 1e-6)]
    pub bisect_tol: f64,

    /// Locate minima by linear interpolation on the mesh only.
    #[arg(long)]
    pub no_bisect: bool,

    /// Largest jump in pixels between chained points of one line.
    #[arg(long, default_value_t = 2.0)]
    pub max_jump: f64,

    #[command(flatten)]
    pub el: ElArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CharlenArgs {
    /// Image to decompose; the fitted model G + S is used.
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    pub input: Option<PathBuf>,

    /// Model document, used instead of decomposing an image.
    #[arg(long, requires = "dims")]
    pub model: Option<PathBuf>,

    /// Grid size `ROWS,COLS` for `--model`.
    #[arg(long)]
    pub dims: Option<Pair<usize>>,

    /// Whether the model is of the intensity or of its logarithm
    /// (default: log after a multiplicative decomposition, linear otherwise).
    #[arg(long, value_enum)]
    pub intensity: Option<IntensityArg>,

    /// Intensity scale `c` in `I = c exp(c0 V)`.
    #[arg(long)]
    pub c: f64,

    /// Inverse thermal voltage in 1/V.
    #[arg(long, conflicts_with = "temperature", required_unless_present = "temperature")]
    pub c0: Option<f64>,

    /// Temperature in kelvin, converted to `c0 = q / (k T)`.
    #[arg(long)]
    pub temperature: Option<f64>,

    /// Differentiation direction (default: the cell axis).
    #[arg(long, value_enum)]
    pub direction: Option<AxisArg>,

    /// Directory for the field, mask, model and report.
    #[arg(long)]
    pub out_dir: PathBuf,

    #[command(flatten)]
    pub el: ElArgs,
}

#[derive(Debug, Clone, Args)]
pub struct UnstitchArgs {
    #[arg(long)]
    pub input: PathBuf,

    /// Directory for the corrected image, the shifts and the report.
    #[arg(long)]
    pub out_dir: PathBuf,

    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,

    /// Axis indexing the slices; `row` compares image rows.
    #[arg(long, value_enum, default_value_t = AxisArg::Row)]
    pub slice_axis: AxisArg,

    /// MSSA window length (default: half the slice length).
    #[arg(long)]
    pub window: Option<usize>,

    /// Cell frequency band `LO,HI` in cycles per pixel
    /// (default: n_cells / length with a 30% margin).
    #[arg(long)]
    pub band: Option<Pair<f64>>,

    #[arg(long, default_value_t = DEFAULT_N_CELLS)]
    pub n_cells: usize,

    #[arg(long, default_value_t = DEFAULT_MSSA_TRIPLES)]
    pub k: usize,

    #[arg(long)]
    pub rank: Option<usize>,

    /// How per-component shifts of one slice pair are combined.
    #[arg(long, value_enum, default_value_t = AggregateArg::Max)]
    pub aggregate: AggregateArg,

    /// Slices to estimate, `START:END` (default: all).
    #[arg(long)]
    pub slices: Option<SliceRange>,

    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub kind: SynthKind,
}

#[derive(Debug, Clone, Subcommand)]
pub enum SynthKind {
    /// EL-like module image: trend, cell stripes, defects and noise.
    El {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the noise level.
        #[arg(long)]
        noise: Option<f64>,
        /// Also write the ground-truth components here.
        #[arg(long)]
        truth_dir: Option<PathBuf>,
    },
    /// Two shifted noisy test series, written as a two-row image.
    S1s2 {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 7.0)]
        shift: f64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// cosh voltage profile through `I = c exp(c0 V)`.
    Charlen {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        lambda0: f64,
        #[arg(long, default_value_t = 60)]
        cell_width: usize,
        #[arg(long, default_value_t = 1)]
        n_cells: usize,
        #[arg(long, default_value_t = 24)]
        rows: usize,
        #[arg(long, default_value_t = 2.0)]
        c: f64,
        #[arg(long, default_value_t = 300.0)]
        temperature: f64,
        #[arg(long, default_value_t = 0.05)]
        v_edge: f64,
        /// Relative intensity noise.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Single 2D cosine.
    Cosine {
        #[arg(long)]
        output: PathBuf,
        /// `ROWS,COLS`.
        #[arg(long)]
        dims: Pair<usize>,
        /// `FREQ_ROW,FREQ_COL` in cycles per pixel.
        #[arg(long)]
        freq: Pair<f64>,
        #[arg(long, default_value_t = 1.0)]
        amplitude: f64,
        #[arg(long, default_value_t = 0.0)]
        phase: f64,
        /// Additive Gaussian noise level.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Args)]
pub struct EspritArgs {
    #[arg(long)]
    pub input: PathBuf,

    /// Directory for the pole table, the fitted model and the report.
    #[arg(long)]
    pub out_dir: PathBuf,

    #[command(flatten)]
    pub ssa: SsaArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Square image sides.
    #[arg(long, value_delimiter = ',', default_values_t = [250, 500, 1000, 2000])]
    pub sizes: Vec<usize>,

    #[arg(long, default_value_t = 10)]
    pub k: usize,

    /// Timed repetitions per size; the fastest is reported.
    #[arg(long, default_value_t = 1)]
    pub reps: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Also write the report as JSON here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_spec_parses() {
        assert_eq!("auto".parse::<WindowSpec>().unwrap(), WindowSpec::Auto);
        assert_eq!("12, 7".parse::<WindowSpec>().unwrap(), WindowSpec::Explicit(12, 7));
        assert!("12".parse::<WindowSpec>().is_err());
        assert!("a,b".parse::<WindowSpec>().is_err());
    }

    #[test]
    fn slice_range_parses() {
        assert_eq!("1:5".parse::<SliceRange>().unwrap(), SliceRange(1..5));
        assert!("1-5".parse::<SliceRange>().is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
