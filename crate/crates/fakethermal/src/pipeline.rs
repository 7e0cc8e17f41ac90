//! Ablation rows end to end: source domain construction, external train and
//! detect stages, and evaluation against the thermal ground truth.
//!
//! Every row works inside its own directory:
//!
//! ```text
//! <row>/row.json        stage config handed to hooks as {CONFIG}
//! <row>/target/         unlabelled target images ({TARGET_DIR} for training)
//! <row>/target_test/    unlabelled test split, when a split file is given
//! <row>/translated/     translate hook output
//! <row>/source/         the (renewed) source domain ({SOURCE_DIR})
//! <row>/train/          train hook output
//! <row>/detect/         detect hook output, detections.json
//! <row>/report.json     evaluation report
//! <row>/hooks.log       hook stdout and stderr
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use fakethermal_core::ablation::{
    plan_grid, render_ablation_table, AblationRow, GridAxes, GridError, RowConfig, RowOutcome,
    StageAvailability, Translation,
};
use fakethermal_core::domain::build_renewed_source;
use fakethermal_core::eval::evaluate;
use fakethermal_core::{DomainDataset, EvalParams, EvalReport};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hook::{run_stage_hook, Artifact, Placeholder};
use crate::io::{load_domain, read_detections, read_json, read_split, save_domain, write_json};
use crate::translate::{ingest_translated, translate_gray};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hooks {
    pub translate: Option<String>,
    pub train: Option<String>,
    pub detect: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Labelled visible domain.
    pub visible: PathBuf,
    /// Thermal domain; its annotations are only used for evaluation.
    pub target: PathBuf,
    pub out: PathBuf,
    /// Pre-translated images (`<id>.png`), used instead of a translate hook.
    #[serde(default)]
    pub translated: Option<PathBuf>,
    /// Target ids to detect on and evaluate, one per line.
    #[serde(default)]
    pub split: Option<PathBuf>,
}

/// The JSON document driving `ablate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    pub axes: GridAxes,
    #[serde(default)]
    pub hooks: Hooks,
    pub paths: Paths,
    #[serde(default)]
    pub eval: EvalParams,
    pub seed: u64,
    #[serde(default)]
    pub timeout_secs: Option<f64>,
    /// Run rows concurrently; each row still has its own directory.
    #[serde(default)]
    pub parallel: bool,
}

/// One fully specified ablation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub row: RowConfig,
    pub hooks: Hooks,
    /// `paths.out` is this row's own directory.
    pub paths: Paths,
    pub eval: EvalParams,
    pub seed: u64,
    pub timeout_secs: Option<f64>,
}

/// Written to `<row>/row.json` and bound to `{CONFIG}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub row: RowConfig,
    pub seed: u64,
    pub source_dir: PathBuf,
    pub target_dir: PathBuf,
    pub test_dir: PathBuf,
    /// Train stage output, present for re-adaptation rows.
    pub train_dir: Option<PathBuf>,
}

pub const ROW_FILE: &str = "row.json";
pub const REPORT_FILE: &str = "report.json";
pub const ABLATION_REPORT_FILE: &str = "ablation_report.json";
pub const ABLATION_TABLE_FILE: &str = "ablation_table.txt";

fn availability(hooks: &Hooks, paths: &Paths) -> StageAvailability {
    StageAvailability {
        translation: hooks.translate.is_some() || paths.translated.is_some(),
        train: hooks.train.is_some(),
        detect: hooks.detect.is_some(),
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl AblationConfig {
    /// Reads a config file; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.paths.visible);
        resolve(base, &mut cfg.paths.target);
        resolve(base, &mut cfg.paths.out);
        if let Some(p) = cfg.paths.translated.as_mut() {
            resolve(base, p);
        }
        if let Some(p) = cfg.paths.split.as_mut() {
            resolve(base, p);
        }
        Ok(cfg)
    }

    /// Expands the grid into row configs, each with its own output directory.
    pub fn plan(&self) -> Result<Vec<PipelineConfig>> {
        let rows = plan_grid(&self.axes, availability(&self.hooks, &self.paths))?;
        Ok(rows
            .into_iter()
            .enumerate()
            .map(|(i, row)| PipelineConfig {
                row,
                hooks: self.hooks.clone(),
                paths: Paths {
                    out: self.paths.out.join(format!("{:02}_{}", i + 1, row.slug())),
                    ..self.paths.clone()
                },
                eval: self.eval.clone(),
                seed: self.seed,
                timeout_secs: self.timeout_secs,
            })
            .collect())
    }
}

/// A row failure: the stage it happened in and why.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} stage: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

trait AtStage<T> {
    fn at(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T, E: Into<Error>> AtStage<T> for std::result::Result<T, E> {
    fn at(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|e| StageError {
            stage,
            error: e.into(),
        })
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.row.translation == Translation::None && self.row.inversion {
            return Err(Error::InvalidConfig(format!(
                "row [{}]: inversion needs a translation step",
                self.row
            )));
        }
        let axes = GridAxes {
            translation: vec![self.row.translation],
            inversion: vec![self.row.inversion],
            readapt: vec![self.row.readapt],
        };
        plan_grid(&axes, availability(&self.hooks, &self.paths))?;
        Ok(())
    }

    fn timeout(&self) -> Option<Duration> {
        self.timeout_secs.map(Duration::from_secs_f64)
    }

    fn dir(&self, name: &str) -> PathBuf {
        self.paths.out.join(name)
    }

    fn bindings(&self, source: &Path, target: &Path, out: &Path) -> BTreeMap<Placeholder, PathBuf> {
        let mut b = BTreeMap::from([
            (Placeholder::SourceDir, source.to_path_buf()),
            (Placeholder::TargetDir, target.to_path_buf()),
            (Placeholder::OutDir, out.to_path_buf()),
        ]);
        // absent when build_source_for is called outside run()
        let row_file = self.dir(ROW_FILE);
        if row_file.is_file() {
            b.insert(Placeholder::Config, row_file);
        }
        b
    }

    /// Source domain for this row: the visible domain, its luma, or
    /// externally translated images, optionally united with inverted copies.
    ///
    /// `target_dir` is handed to a translate hook as `{TARGET_DIR}`.
    pub fn build_source_for(
        &self,
        visible: &DomainDataset,
        target_dir: &Path,
    ) -> Result<DomainDataset> {
        let translated = match self.row.translation {
            Translation::None => visible.clone(),
            Translation::Gray => translate_gray(visible)?,
            Translation::External => {
                let dir = match (&self.paths.translated, &self.hooks.translate) {
                    (Some(dir), _) => dir.clone(),
                    (None, Some(template)) => {
                        let out = self.dir("translated");
                        // leftovers must not satisfy the output contract
                        if out.exists() {
                            fs::remove_dir_all(&out).map_err(|e| Error::io(&out, e))?;
                        }
                        let ids = visible.ids().map(String::from).collect();
                        run_stage_hook(
                            template,
                            &self.bindings(&self.paths.visible, target_dir, &out),
                            &Artifact::TranslatedImages(ids),
                            self.timeout(),
                            Some(&self.dir("hooks.log")),
                        )?;
                        out
                    }
                    (None, None) => {
                        return Err(GridError::InvalidCombination {
                            row: self.row,
                            missing: "translate",
                        }
                        .into())
                    }
                };
                ingest_translated(&dir, visible)?
            }
        };
        if self.row.inversion {
            Ok(build_renewed_source(&translated)?)
        } else {
            Ok(translated)
        }
    }

    /// Runs the row and writes every intermediate domain under `paths.out`.
    pub fn run(
        &self,
        visible: &DomainDataset,
        target: &DomainDataset,
    ) -> Result<EvalReport, StageError> {
        self.validate().at("config")?;
        let row_dir = &self.paths.out;
        if row_dir.exists() {
            fs::remove_dir_all(row_dir)
                .map_err(|e| Error::io(row_dir, e))
                .at("setup")?;
        }
        fs::create_dir_all(row_dir)
            .map_err(|e| Error::io(row_dir, e))
            .at("setup")?;

        let target_dir = self.dir("target");
        save_domain(&target.unlabelled(), &target_dir).at("setup")?;
        let eval_target = match &self.paths.split {
            Some(split) => {
                let ids = read_split(split).at("setup")?;
                target.subset(ids.iter().map(String::as_str))
            }
            None => target.clone(),
        };
        let test_dir = if self.paths.split.is_some() {
            let dir = self.dir("target_test");
            save_domain(&eval_target.unlabelled(), &dir).at("setup")?;
            dir
        } else {
            target_dir.clone()
        };
        let source_dir = self.dir("source");
        let train_dir = self.row.readapt.then(|| self.dir("train"));
        let stage = StageConfig {
            row: self.row,
            seed: self.seed,
            source_dir: source_dir.clone(),
            target_dir: target_dir.clone(),
            test_dir: test_dir.clone(),
            train_dir: train_dir.clone(),
        };
        write_json(&self.dir(ROW_FILE), &stage).at("setup")?;

        info!("[{}] building source domain", self.row.slug());
        let source = self.build_source_for(visible, &target_dir).at("source")?;
        save_domain(&source, &source_dir).at("source")?;

        let log = self.dir("hooks.log");
        if let Some(train_dir) = &train_dir {
            info!("[{}] train stage", self.row.slug());
            let template = self.hooks.train.as_deref().expect("validated");
            run_stage_hook(
                template,
                &self.bindings(&source_dir, &target_dir, train_dir),
                &Artifact::NonEmptyDir,
                self.timeout(),
                Some(&log),
            )
            .at("train")?;
        }

        info!("[{}] detect stage", self.row.slug());
        let template = self.hooks.detect.as_deref().expect("validated");
        let outcome = run_stage_hook(
            template,
            &self.bindings(&source_dir, &test_dir, &self.dir("detect")),
            &Artifact::Detections,
            self.timeout(),
            Some(&log),
        )
        .at("detect")?;

        let dets = read_detections(&outcome.artifact).at("evaluate")?;
        let report = evaluate(&dets, &eval_target, &self.eval).at("evaluate")?;
        write_json(&self.dir(REPORT_FILE), &report).at("evaluate")?;
        Ok(report)
    }
}

/// Executed rows in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn table(&self) -> String {
        render_ablation_table(&self.rows)
    }
}

/// Runs one validated row; see [`PipelineConfig::run`].
pub fn run_pipeline(
    cfg: &PipelineConfig,
    visible: &DomainDataset,
    target: &DomainDataset,
) -> Result<EvalReport, StageError> {
    cfg.run(visible, target)
}

fn run_row(cfg: &PipelineConfig, visible: &DomainDataset, target: &DomainDataset) -> AblationRow {
    let outcome = match cfg.run(visible, target) {
        Ok(report) => RowOutcome::Completed(report),
        Err(e) => {
            log::warn!("[{}] failed: {e}", cfg.row.slug());
            RowOutcome::Failed {
                stage: e.stage.into(),
                message: e.error.to_string(),
            }
        }
    };
    AblationRow {
        config: cfg.row,
        outcome,
    }
}

/// Runs `rows` against already loaded domains. A failing row is recorded and
/// the remaining rows still run.
pub fn run_rows(
    rows: &[PipelineConfig],
    visible: &DomainDataset,
    target: &DomainDataset,
    parallel: bool,
) -> AblationReport {
    let rows = if parallel {
        rows.par_iter()
            .map(|cfg| run_row(cfg, visible, target))
            .collect()
    } else {
        rows.iter()
            .map(|cfg| run_row(cfg, visible, target))
            .collect()
    };
    AblationReport { rows }
}

/// Loads both domains, runs the planned grid and writes the report JSON and
/// text table into `paths.out`.
pub fn run_ablation(cfg: &AblationConfig) -> Result<AblationReport> {
    let rows = cfg.plan()?;
    let visible = load_domain(&cfg.paths.visible, true)?;
    let target = load_domain(&cfg.paths.target, true)?;
    let report = run_rows(&rows, &visible, &target, cfg.parallel);
    write_json(&cfg.paths.out.join(ABLATION_REPORT_FILE), &report)?;
    let table_path = cfg.paths.out.join(ABLATION_TABLE_FILE);
    fs::write(&table_path, report.table()).map_err(|e| Error::io(&table_path, e))?;
    Ok(report)
}
