//! Two-dimensional singular spectrum analysis for electroluminescence (EL)
//! images of thin-film photovoltaic modules.
//!
//! The crate embeds images into Hankel-block-Hankel trajectory operators,
//! computes truncated SVDs with a matrix-free Lanczos solver, estimates
//! damped-sinusoid parameters with ESPRIT, and builds the EL applications on
//! top of the resulting parametric model: component separation, sub-pixel
//! interconnection-line detection, inverse characteristic length and stitch
//! correction.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod elproc;
pub mod error;
pub mod esprit;
mod fft;
pub mod grid;
pub mod hankel;
pub mod lowrank;
pub mod rng;
pub mod sigmodel;
pub mod ssa2d;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{load_image, log_transform, save_image, Axis, Image2D, ImageFormat, Series1D};
pub use sigmodel::{fit_amplitude_phase, DampedMode, ParametricModel2D, SinusoidTerm};
pub use hankel::{dense_hbh, hankelize, pixel_weights, EmbeddingWindow, HbhOperator, RankOneTerm};
pub use lowrank::{dense_svd_oracle, truncated_svd, LanczosOptions, LinearOperator, SvdTriple, SvdTruncation};

pub use esprit::{esprit_1d, esprit_2d, merge_conjugates, MergedPoles, PoleEstimate};
pub use ssa2d::{decompose_2d, decompose_mssa, Channel, MssaDecomposition, Ssa2dDecomposition};
pub use elproc::{
    apply_displacement, char_length, detect_lines, el_decompose, stitch_displacement, CharLengthField,
    DisplacementMap, ElDecomposition, ElOptions, IntensityModel, LineOptions, LineSet, Mode, StitchOptions,
};
