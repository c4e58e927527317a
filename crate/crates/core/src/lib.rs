//! Drought probability forecasting on monthly PDSI grids.
//!
//! The crate turns a (time, row, col) PDSI tensor into per-cell drought
//! labels, fits one of several forecasters (class-prior and rolling
//! baselines, logistic regression, gradient-boosted trees, a ConvLSTM), and
//! scores each grid cell's test-period forecast separately before taking the
//! median over cells.

pub mod cli;
pub mod config;
pub mod convlstm;
pub mod cube;
pub mod error;
pub mod features;
pub mod forecast;
pub mod gbdt;
pub mod harness;
pub mod labels;
pub mod linear;
pub mod metrics;
pub mod models;
pub mod render;
pub mod rng;
pub mod synth;

pub use cube::{crop_center, out_of_time_split, summarize, PdsiCube, RegionStats};
pub use error::{Error, Result};
pub use features::{build_design, DesignMatrix, WindowSpec};
pub use forecast::ForecastCube;
pub use labels::{binarize, bin_multiclass, severity_class, ClassScheme, LabelCube, Severity};
pub use metrics::{per_cell_map, Metric, MetricMap};
pub use synth::{generate, SynthParams};
