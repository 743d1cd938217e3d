//! Deformable-object segmentation by learned space and shape parameters.
//!
//! The pipeline localizes an object with an ensemble of bounding-line
//! detectors plus an orientation detector, selects a group mean shape by
//! aspect ratio, and then refines the aligned mean by estimating one PCA
//! mode weight at a time with per-mode classifiers. Everything trains from
//! scratch on landmark-annotated images; a synthetic benchmark generator
//! provides ground truth for end-to-end verification.
//!
//! Module map:
//!
//! - [`image`] — normalized rasters, PGM/PNG I/O, resampling, rasterization
//! - [`nn`] — denoising-autoencoder pre-training and sigmoid-network
//!   fine-tuning
//! - [`shape`] — Procrustes alignment, the PCA shape model, aspect-ratio
//!   grouping, landmark interpolation
//! - [`space`] — bounding-line and orientation detectors (localization)
//! - [`modes`] — per-mode shape-weight detectors and the segmentation
//!   recursion
//! - [`data`] — manifests, augmentation, the synthetic benchmark generator
//! - [`metrics`] / [`eval`] — segmentation metrics, cross-validation,
//!   reports
//! - [`pipeline`] — training/segmentation orchestration shared by the CLI
//!   and the C API

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod image;
pub mod metrics;
pub mod modes;
pub mod nn;
pub mod pipeline;
pub mod shape;
pub mod space;

pub use error::{Error, Result};
