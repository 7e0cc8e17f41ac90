//! The built-in detector used as a train and detect stage.
//!
//! "Training" fits a [`CalibratedDetector`] to a labelled source domain and
//! optionally re-adapts it to unlabelled target images; the fitted model is
//! stored as `model.json`.

use std::path::{Path, PathBuf};

use fakethermal_core::synth::CalibratedDetector;
use fakethermal_core::Detection;

use crate::error::Result;
use crate::io::{load_domain, read_json, write_detections, write_json, DETECTIONS_FILE};
use crate::pipeline::StageConfig;

pub const MODEL_FILE: &str = "model.json";

/// Fits to `source`, then re-adapts to the images under `target` if given.
pub fn train(source: &Path, target: Option<&Path>) -> Result<CalibratedDetector> {
    let model = CalibratedDetector::fit(&load_domain(source, true)?)?;
    match target {
        Some(t) => Ok(model.readapt(&load_domain(t, false)?)),
        None => Ok(model),
    }
}

/// Writes `<out>/model.json` and returns its path.
pub fn train_to(source: &Path, target: Option<&Path>, out: &Path) -> Result<PathBuf> {
    let model = train(source, target)?;
    let path = out.join(MODEL_FILE);
    write_json(&path, &model)?;
    Ok(path)
}

/// Model for a detect stage: an explicit model file, else the train
/// output named by a row config, else a fresh fit to `source`.
pub fn resolve_model(
    source: &Path,
    model: Option<&Path>,
    config: Option<&Path>,
) -> Result<CalibratedDetector> {
    if let Some(m) = model {
        return read_json(m);
    }
    if let Some(c) = config {
        let stage: StageConfig = read_json(c)?;
        if let Some(dir) = stage.train_dir {
            let m = dir.join(MODEL_FILE);
            if m.is_file() {
                return read_json(&m);
            }
        }
    }
    train(source, None)
}

/// Detects on every image under `target` and writes `<out>/detections.json`.
pub fn detect_to(model: &CalibratedDetector, target: &Path, out: &Path) -> Result<Vec<Detection>> {
    let dets = model.detect_domain(&load_domain(target, false)?);
    write_detections(&out.join(DETECTIONS_FILE), &dets)?;
    Ok(dets)
}
