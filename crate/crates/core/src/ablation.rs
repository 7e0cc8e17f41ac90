//! Ablation grid planning and report tables.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::eval::{mean_ap, EvalError, EvalParams, EvalReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Translation {
    /// Train on the visible images as they are.
    None,
    /// BT.601 luma of the visible images.
    Gray,
    /// Images produced by an external translator (or a translate hook).
    External,
}

impl Translation {
    pub fn display_name(self) -> &'static str {
        match self {
            Self::None => "No",
            Self::Gray => "Gray",
            Self::External => "External",
        }
    }
}

/// One ablation row: translation mode, intensity inversion and re-adaptation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowConfig {
    pub translation: Translation,
    pub inversion: bool,
    pub readapt: bool,
}

impl RowConfig {
    /// Short filesystem-safe name, e.g. `gray_inv_ra`.
    pub fn slug(&self) -> String {
        let mut s = String::from(match self.translation {
            Translation::None => "none",
            Translation::Gray => "gray",
            Translation::External => "external",
        });
        if self.inversion {
            s.push_str("_inv");
        }
        if self.readapt {
            s.push_str("_ra");
        }
        s
    }
}

impl fmt::Display for RowConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} / inversion {} / re-adaptation {}",
            self.translation.display_name(),
            if self.inversion { "on" } else { "off" },
            if self.readapt { "on" } else { "off" }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridAxes {
    pub translation: Vec<Translation>,
    pub inversion: Vec<bool>,
    pub readapt: Vec<bool>,
}

impl GridAxes {
    /// The published ablation grid: three translation modes, both inversion
    /// settings and both re-adaptation settings.
    pub fn full() -> Self {
        Self {
            translation: Vec::from([Translation::None, Translation::Gray, Translation::External]),
            inversion: Vec::from([false, true]),
            readapt: Vec::from([false, true]),
        }
    }
}

/// Which external stages are available to the rows of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageAvailability {
    /// A translate hook or a directory of pre-translated images.
    pub translation: bool,
    pub train: bool,
    pub detect: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GridError {
    EmptyAxis(&'static str),
    InvalidCombination {
        row: RowConfig,
        missing: &'static str,
    },
}

impl fmt::Display for GridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyAxis(axis) => write!(f, "grid axis '{axis}' has no values"),
            Self::InvalidCombination { row, missing } => {
                write!(
                    f,
                    "row [{row}] requires the {missing} stage, which is not configured"
                )
            }
        }
    }
}

impl core::error::Error for GridError {}

/// Expands the axes into rows, ordered by translation, then re-adaptation,
/// then inversion.
///
/// Rows combining no translation with inversion are skipped: inversion acts
/// on fake thermal images, which do not exist without a translation step.
/// Duplicate axis values are collapsed.
pub fn plan_grid(axes: &GridAxes, stages: StageAvailability) -> Result<Vec<RowConfig>, GridError> {
    fn dedup<T: Copy + PartialEq>(v: &[T]) -> Vec<T> {
        let mut out: Vec<T> = Vec::with_capacity(v.len());
        for &x in v {
            if !out.contains(&x) {
                out.push(x);
            }
        }
        out
    }
    if axes.translation.is_empty() {
        return Err(GridError::EmptyAxis("translation"));
    }
    if axes.inversion.is_empty() {
        return Err(GridError::EmptyAxis("inversion"));
    }
    if axes.readapt.is_empty() {
        return Err(GridError::EmptyAxis("readapt"));
    }
    let mut rows = Vec::new();
    for translation in dedup(&axes.translation) {
        for readapt in dedup(&axes.readapt) {
            for inversion in dedup(&axes.inversion) {
                if translation == Translation::None && inversion {
                    continue;
                }
                let row = RowConfig {
                    translation,
                    inversion,
                    readapt,
                };
                if !stages.detect {
                    return Err(GridError::InvalidCombination {
                        row,
                        missing: "detect",
                    });
                }
                if translation == Translation::External && !stages.translation {
                    return Err(GridError::InvalidCombination {
                        row,
                        missing: "translate",
                    });
                }
                if readapt && !stages.train {
                    return Err(GridError::InvalidCombination {
                        row,
                        missing: "train",
                    });
                }
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Result of one executed row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: RowConfig,
    pub outcome: RowOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowOutcome {
    Completed(EvalReport),
    Failed { stage: String, message: String },
}

/// Builds a report from per-class AP values in `[0, 1]`, with the mean
/// computed over all listed classes.
pub fn report_from_class_aps(
    per_class: &BTreeMap<String, f64>,
    params: EvalParams,
) -> Result<EvalReport, EvalError> {
    let aps: BTreeMap<String, Option<f64>> = per_class
        .iter()
        .map(|(k, v)| (k.clone(), Some(*v)))
        .collect();
    let map_value = mean_ap(&aps)?;
    Ok(EvalReport {
        per_class_ap: per_class.clone(),
        undefined_classes: Vec::new(),
        map_value,
        params,
        counts: BTreeMap::new(),
        unknown_class_detections: BTreeMap::new(),
        unknown_image_detections: 0,
    })
}

/// Fraction in `[0, 1]` as a percentage with one decimal.
pub fn percent(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

const FAILED_CELL: &str = "—";

fn render_grid(header: Vec<String>, body: Vec<Vec<String>>, notes: Vec<String>) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            core::iter::once(&header)
                .chain(body.iter())
                .map(|r| r[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            s.push_str(cell);
            if i + 1 < cells.len() {
                for _ in cell.chars().count()..*w {
                    s.push(' ');
                }
            }
        }
        s.push('\n');
        s
    };
    let mut out = line(&header);
    for row in &body {
        out.push_str(&line(row));
    }
    for n in notes {
        out.push_str(&n);
        out.push('\n');
    }
    out
}

fn class_columns<'a>(reports: impl Iterator<Item = &'a EvalReport>) -> Vec<String> {
    let mut set = BTreeSet::new();
    for r in reports {
        set.extend(r.per_class_ap.keys().cloned());
        set.extend(r.undefined_classes.iter().cloned());
    }
    set.into_iter().collect()
}

fn class_cells(report: &EvalReport, classes: &[String]) -> Vec<String> {
    classes
        .iter()
        .map(|c| {
            report
                .per_class_ap
                .get(c)
                .map_or_else(|| "n/a".to_string(), |v| percent(*v))
        })
        .collect()
}

/// Aligned table with one named row per report: class APs then mAP, in
/// percent with one decimal.
pub fn render_eval_table(rows: &[(&str, &EvalReport)]) -> String {
    let classes = class_columns(rows.iter().map(|(_, r)| *r));
    let mut header = Vec::from([String::from("Method")]);
    header.extend(classes.iter().cloned());
    header.push("mAP".into());
    let body = rows
        .iter()
        .map(|(name, r)| {
            let mut cells = Vec::from([String::from(*name)]);
            cells.extend(class_cells(r, &classes));
            cells.push(percent(r.map_value));
            cells
        })
        .collect();
    render_grid(header, body, Vec::new())
}

/// Ablation table: Image trans, Int-Inv, R-A, class APs, mAP. Failed rows
/// get placeholder cells and a numbered note.
pub fn render_ablation_table(rows: &[AblationRow]) -> String {
    let classes = class_columns(rows.iter().filter_map(|r| match &r.outcome {
        RowOutcome::Completed(rep) => Some(rep),
        RowOutcome::Failed { .. } => None,
    }));
    let mut header: Vec<String> = ["Image trans", "Int-Inv", "R-A"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(classes.iter().cloned());
    header.push("mAP".into());
    let mut notes = Vec::new();
    let body = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let c = row.config;
            let mut cells = Vec::from([
                c.translation.display_name().to_string(),
                String::from(if c.inversion { "√" } else { "-" }),
                String::from(if c.readapt { "√" } else { "-" }),
            ]);
            match &row.outcome {
                RowOutcome::Completed(rep) => {
                    cells.extend(class_cells(rep, &classes));
                    cells.push(percent(rep.map_value));
                }
                RowOutcome::Failed { stage, message } => {
                    cells.extend(classes.iter().map(|_| FAILED_CELL.to_string()));
                    cells.push(FAILED_CELL.to_string());
                    notes.push(format!("row {} failed at {stage}: {message}", i + 1));
                }
            }
            cells
        })
        .collect();
    render_grid(header, body, notes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const ALL: StageAvailability = StageAvailability {
        translation: true,
        train: true,
        detect: true,
    };

    #[test]
    fn published_grid_has_ten_rows() {
        let rows = plan_grid(&GridAxes::full(), ALL).unwrap();
        assert_eq!(rows.len(), 10);
        let slugs: Vec<String> = rows.iter().map(RowConfig::slug).collect();
        assert_eq!(
            slugs,
            [
                "none",
                "none_ra",
                "gray",
                "gray_inv",
                "gray_ra",
                "gray_inv_ra",
                "external",
                "external_inv",
                "external_ra",
                "external_inv_ra"
            ]
        );
    }

    #[test]
    fn product_of_two_translations() {
        let axes = GridAxes {
            translation: vec![Translation::Gray, Translation::External],
            inversion: vec![true, false],
            readapt: vec![true, false],
        };
        assert_eq!(plan_grid(&axes, ALL).unwrap().len(), 8);
    }

    #[test]
    fn single_values() {
        let axes = GridAxes {
            translation: vec![Translation::Gray],
            inversion: vec![true],
            readapt: vec![false],
        };
        assert_eq!(
            plan_grid(&axes, ALL).unwrap(),
            [RowConfig {
                translation: Translation::Gray,
                inversion: true,
                readapt: false
            }]
        );
    }

    #[test]
    fn missing_hooks() {
        let axes = GridAxes {
            translation: vec![Translation::Gray],
            inversion: vec![false],
            readapt: vec![true],
        };
        let no_train = StageAvailability {
            train: false,
            ..ALL
        };
        assert!(matches!(
            plan_grid(&axes, no_train),
            Err(GridError::InvalidCombination {
                missing: "train",
                ..
            })
        ));
        let axes = GridAxes {
            translation: vec![Translation::External],
            inversion: vec![false],
            readapt: vec![false],
        };
        let no_tr = StageAvailability {
            translation: false,
            ..ALL
        };
        assert!(matches!(
            plan_grid(&axes, no_tr),
            Err(GridError::InvalidCombination {
                missing: "translate",
                ..
            })
        ));
        let axes = GridAxes {
            translation: vec![],
            inversion: vec![false],
            readapt: vec![false],
        };
        assert_eq!(
            plan_grid(&axes, ALL),
            Err(GridError::EmptyAxis("translation"))
        );
    }

    fn report(values: &[(&str, f64)]) -> EvalReport {
        let m = values.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        report_from_class_aps(&m, EvalParams::default()).unwrap()
    }

    #[test]
    fn ablation_table_layout() {
        let ok = AblationRow {
            config: RowConfig {
                translation: Translation::Gray,
                inversion: true,
                readapt: false,
            },
            outcome: RowOutcome::Completed(report(&[("car", 0.5), ("person", 0.25)])),
        };
        let text = render_ablation_table(core::slice::from_ref(&ok));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0].split_whitespace().collect::<Vec<_>>(),
            ["Image", "trans", "Int-Inv", "R-A", "car", "person", "mAP"]
        );
        assert_eq!(
            lines[1].split_whitespace().collect::<Vec<_>>(),
            ["Gray", "√", "-", "50.0", "25.0", "37.5"]
        );

        let failed = AblationRow {
            config: RowConfig {
                translation: Translation::External,
                inversion: false,
                readapt: true,
            },
            outcome: RowOutcome::Failed {
                stage: "train".into(),
                message: "exit status 3".into(),
            },
        };
        let text = render_ablation_table(&[ok, failed]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(
            lines[2].split_whitespace().collect::<Vec<_>>(),
            ["External", "-", "√", "—", "—", "—"]
        );
        assert_eq!(lines[3], "row 2 failed at train: exit status 3");
    }

    #[test]
    fn percent_rounding() {
        assert_eq!(percent(0.08776), "8.8");
        assert_eq!(percent(0.0136), "1.4");
        assert_eq!(percent(1.0), "100.0");
    }
}
