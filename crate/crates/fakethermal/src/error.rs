use std::path::PathBuf;

use fakethermal_core::ablation::GridError;
use fakethermal_core::synth::SynthError;
use fakethermal_core::{AnnotationError, DatasetError, EvalError};
use thiserror::Error;

use crate::hook::HookError;
use crate::voc::VocError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Voc {
        path: PathBuf,
        #[source]
        source: VocError,
    },

    #[error("{}: {message}", path.display())]
    ImageDecode { path: PathBuf, message: String },

    #[error("{}: unsupported image format {format}; expected 8-bit gray or 8-bit RGB", path.display())]
    UnsupportedImage { path: PathBuf, format: String },

    #[error("{}: no annotation for image '{stem}'", root.display())]
    MissingAnnotation { root: PathBuf, stem: String },

    #[error("{}: no translated image for '{stem}'", dir.display())]
    MissingTranslation { dir: PathBuf, stem: String },

    #[error("'{image_id}': image is {}x{} but the annotation frame is {}x{}", image.0, image.1, annotation.0, annotation.1)]
    DimensionMismatch {
        image_id: String,
        image: (u32, u32),
        annotation: (u32, u32),
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Annotation(#[from] AnnotationError),

    #[error(transparent)]
    Dataset(#[from] DatasetError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error(transparent)]
    Synth(#[from] SynthError),

    #[error(transparent)]
    Grid(#[from] GridError),

    #[error(transparent)]
    Hook(#[from] HookError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Self::Json {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
