//! Benchmark harness for left-ventricle endocardium segmentation on
//! ultrasound-like images.
//!
//! The crate covers the full experiment lifecycle:
//!
//! 1. **`synth`** – deterministic echo-phantom generation (sector geometry,
//!    speckle, simulated second-observer annotations), dataset I/O, resizing
//!    and patient-disjoint splitting.
//! 2. **`nets`** – three encoder-decoder segmentation architectures built
//!    from a shared, configurable layer graph (plain CPU tensor ops, f32 or
//!    f64).
//! 3. **`train`** – Adam/NLL training loop with per-epoch validation Dice,
//!    checkpointing and a reproducible history.
//! 4. **`metrics`** – Dice coefficient, Moore-neighbor contour extraction and
//!    exact symmetric Hausdorff distance.
//! 5. **`scenarios`** – the model benchmark and the five-way inter-observer
//!    comparison (OA/OB/POA/POB).
//! 6. **`report`** – contour overlays, mean±SD tables and training plots.
//!
//! Everything is seed-deterministic: the same seeds and configuration
//! reproduce the same dataset bytes, the same training history and the same
//! evaluation tables.

pub mod config;
pub mod error;
pub mod metrics;
pub mod nets;
pub mod report;
pub mod scenarios;
pub mod synth;
pub mod train;
pub mod types;

pub use config::{ModelConfig, Normalization, TrainConfig, Upsampling, Variant};
pub use error::{Error, Result};
pub use types::{
    AnnotationRecord, Contour, ImageFrame, MetricPair, Operator, ScenarioLabel, ScenarioResult,
    SegMask,
};
