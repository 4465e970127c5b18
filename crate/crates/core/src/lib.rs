//! Depth estimation from three range-gated intensity slices.
//!
//! The crate covers the whole chain: the gated-imaging forward model
//! ([`gating`]), synthetic scenes ([`scene`]), closed-form estimators
//! ([`classic`]), dataset preparation ([`dataset`]), a small regression
//! network ([`nn`]) and evaluation ([`eval`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classic;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gating;
pub mod nn;
pub mod quadrature;
pub mod raster;
pub mod scene;
pub mod seed;

pub use classic::{baseline_estimate, build_section_table, BaselineOptions, SectionTable};
pub use config::RunConfig;
pub use dataset::{
    build_dataset, load_samples, prefilter, split, standardize, write_samples, DatasetVariant, PipelineReport,
    RawDataset, StandardizedSample, VariantTag,
};
pub use error::{Error, Result};
pub use eval::{binned_mae, compare_estimators, render_depth_map, BinnedError, DepthEstimator, DepthMap};
pub use gating::{
    rip, rip_breakpoints, slice_support, Atmosphere, GateShape, PulseShape, SliceConfig, Waveform,
    SPEED_OF_LIGHT_M_PER_NS,
};
pub use nn::{predict_depth, Activation, NetworkArch, NetworkModel, TrainConfig};
pub use raster::Raster;
pub use scene::{NoiseModel, Sample, ScenePoint, Simulator, SliceImageSet};
