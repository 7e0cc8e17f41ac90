//! Pure algorithms behind a visible-to-thermal domain adaptation pipeline.
//!
//! The crate is `no_std` (it only needs `alloc`) and performs no IO. It covers
//! annotation geometry, 8-bit image transforms (grayscale translation,
//! histogram matching, intensity inversion), renewed source domain assembly,
//! VOC-style detection scoring (IoU matching, precision/recall, AP, mAP),
//! a seeded synthetic scene generator with a threshold blob detector, and
//! ablation grid planning and table rendering.
//!
//! File formats, external stages and the command line live in the
//! `fakethermal` companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod ablation;
pub mod domain;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod synth;

pub use domain::{DatasetError, DomainDataset, Record, SpectralPairing};
pub use eval::{Detection, EvalError, EvalParams, EvalReport, Interpolation, PrCurve};
pub use geometry::{AnnotationError, AnnotationSet, BoundingBox, ObjectInstance};
pub use image::{GrayImage, Image, RgbImage};
