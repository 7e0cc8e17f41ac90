//! Dataset IO, fake thermal source construction, external stage hooks and
//! the ablation runner built on `fakethermal-core`.
//!
//! On disk a domain is `<root>/images/*.png` with VOC-style
//! `<root>/annotations/*.xml`; detections are a JSON list of
//! `{image_id, class_label, score, box}`.

#![forbid(unsafe_code)]

pub mod error;
pub mod hook;
pub mod io;
pub mod mock;
pub mod pipeline;
pub mod translate;
pub mod voc;

pub use error::{Error, Result};
pub use fakethermal_core as core;
