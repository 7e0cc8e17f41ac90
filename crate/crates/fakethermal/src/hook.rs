//! External stage hooks.
//!
//! A hook is a shell command template such as
//! `python train.py --src {SOURCE_DIR} --tgt {TARGET_DIR} --out {OUT_DIR}`.
//! Placeholders are substituted with shell-quoted paths, the command runs
//! under `sh -c`, and the stage succeeds only when it exits with status 0
//! and leaves its contract artifact behind.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::io::DETECTIONS_FILE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Placeholder {
    SourceDir,
    TargetDir,
    OutDir,
    Config,
}

impl Placeholder {
    pub const ALL: [Placeholder; 4] =
        [Self::SourceDir, Self::TargetDir, Self::OutDir, Self::Config];

    pub fn name(self) -> &'static str {
        match self {
            Self::SourceDir => "SOURCE_DIR",
            Self::TargetDir => "TARGET_DIR",
            Self::OutDir => "OUT_DIR",
            Self::Config => "CONFIG",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// What a stage must leave in its `OUT_DIR`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Artifact {
    /// `<OUT_DIR>/<id>.png` for every listed id.
    TranslatedImages(Vec<String>),
    /// `<OUT_DIR>/detections.json`.
    Detections,
    /// At least one entry in `OUT_DIR`.
    NonEmptyDir,
}

#[derive(Debug, Error)]
pub enum HookError {
    #[error("placeholder {{{0}}} is not one of SOURCE_DIR, TARGET_DIR, OUT_DIR, CONFIG or has no binding")]
    UnresolvedPlaceholder(String),
    #[error("unterminated placeholder in hook template '{0}'")]
    UnterminatedPlaceholder(String),
    #[error("bound path {} does not exist", .0.display())]
    MissingPath(PathBuf),
    #[error("hook failed with {status}: {command}")]
    HookFailed { command: String, status: String },
    #[error("hook exited 0 but did not produce {expected}")]
    MissingOutput { expected: String },
    #[error("hook timed out after {0:?}")]
    Timeout(Duration),
    #[error("could not run hook: {0}")]
    Spawn(std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub command: String,
    pub out_dir: PathBuf,
    /// The contract artifact: the detections file, or `OUT_DIR` itself.
    pub artifact: PathBuf,
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// Names of every `{NAME}` placeholder in `template`, in order.
pub fn placeholders(template: &str) -> Result<Vec<String>, HookError> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        let end = after
            .find('}')
            .ok_or_else(|| HookError::UnterminatedPlaceholder(template.into()))?;
        out.push(after[..end].to_string());
        rest = &after[end + 1..];
    }
    Ok(out)
}

/// Substitutes every placeholder with its shell-quoted binding.
pub fn render_template(
    template: &str,
    bindings: &BTreeMap<Placeholder, PathBuf>,
) -> Result<String, HookError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        let end = after
            .find('}')
            .ok_or_else(|| HookError::UnterminatedPlaceholder(template.into()))?;
        let name = &after[..end];
        let path = Placeholder::from_name(name)
            .and_then(|p| bindings.get(&p))
            .ok_or_else(|| HookError::UnresolvedPlaceholder(name.into()))?;
        out.push_str(&shell_quote(&path.to_string_lossy()));
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn wait_with_timeout(
    child: &mut std::process::Child,
    timeout: Option<Duration>,
) -> Result<ExitStatus, HookError> {
    let Some(limit) = timeout else {
        return child.wait().map_err(HookError::Spawn);
    };
    let start = Instant::now();
    loop {
        if let Some(status) = child.try_wait().map_err(HookError::Spawn)? {
            return Ok(status);
        }
        if start.elapsed() >= limit {
            let _ = child.kill();
            let _ = child.wait();
            return Err(HookError::Timeout(limit));
        }
        thread::sleep(Duration::from_millis(10));
    }
}

fn check_artifact(out_dir: &Path, artifact: &Artifact) -> Result<PathBuf, HookError> {
    match artifact {
        Artifact::Detections => {
            let p = out_dir.join(DETECTIONS_FILE);
            if p.is_file() {
                Ok(p)
            } else {
                Err(HookError::MissingOutput {
                    expected: p.display().to_string(),
                })
            }
        }
        Artifact::TranslatedImages(ids) => {
            if let Some(id) = ids
                .iter()
                .find(|id| !out_dir.join(format!("{id}.png")).is_file())
            {
                return Err(HookError::MissingOutput {
                    expected: out_dir.join(format!("{id}.png")).display().to_string(),
                });
            }
            Ok(out_dir.to_path_buf())
        }
        Artifact::NonEmptyDir => {
            let non_empty = fs::read_dir(out_dir)
                .map(|mut d| d.next().is_some())
                .unwrap_or(false);
            if non_empty {
                Ok(out_dir.to_path_buf())
            } else {
                Err(HookError::MissingOutput {
                    expected: format!("files in {}", out_dir.display()),
                })
            }
        }
    }
}

/// Runs one stage.
///
/// `OUT_DIR` is created if needed; every other bound path must exist.
/// Hook stdout and stderr are appended to `log` when given.
pub fn run_stage_hook(
    template: &str,
    bindings: &BTreeMap<Placeholder, PathBuf>,
    artifact: &Artifact,
    timeout: Option<Duration>,
    log: Option<&Path>,
) -> Result<StageOutcome, HookError> {
    let command = render_template(template, bindings)?;
    let out_dir = bindings
        .get(&Placeholder::OutDir)
        .cloned()
        .ok_or_else(|| HookError::UnresolvedPlaceholder(Placeholder::OutDir.name().into()))?;
    fs::create_dir_all(&out_dir).map_err(HookError::Spawn)?;
    for (p, path) in bindings {
        if *p != Placeholder::OutDir && !path.exists() {
            return Err(HookError::MissingPath(path.clone()));
        }
    }

    let mut cmd = Command::new("sh");
    cmd.arg("-c").arg(&command).stdin(Stdio::null());
    match log {
        Some(path) => {
            let file = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(HookError::Spawn)?;
            cmd.stdout(file.try_clone().map_err(HookError::Spawn)?)
                .stderr(file);
        }
        None => {
            cmd.stdout(Stdio::null()).stderr(Stdio::null());
        }
    }
    let mut child = cmd.spawn().map_err(HookError::Spawn)?;
    let status = wait_with_timeout(&mut child, timeout)?;
    if !status.success() {
        return Err(HookError::HookFailed {
            command,
            status: status.to_string(),
        });
    }
    let artifact = check_artifact(&out_dir, artifact)?;
    Ok(StageOutcome {
        command,
        out_dir,
        artifact,
    })
}
