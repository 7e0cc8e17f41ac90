use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fakethermal::error::{Error, Result};
use fakethermal::io::{
    load_domain, read_detections, read_gray, read_image, read_json, read_split, save_domain,
    write_detections, write_image, write_json,
};
use fakethermal::mock;
use fakethermal::pipeline::{AblationConfig, AblationReport, ABLATION_REPORT_FILE};
use fakethermal::translate::{ingest_translated, translate_gray, translate_histmatch};
use fakethermal_core::ablation::render_eval_table;
use fakethermal_core::domain::{build_renewed_source, pair_spectral};
use fakethermal_core::eval::evaluate;
use fakethermal_core::image::intensity_invert;
use fakethermal_core::synth::{
    generate_domains, threshold_detect, DetectPolarity, DetectorParams, Polarity, SynthParams,
};
use fakethermal_core::{DomainDataset, EvalParams, EvalReport, Image, Interpolation};
use serde::Serialize;

/// Visible-to-thermal domain adaptation toolkit: fake thermal source
/// domains, intensity inversion, VOC-style evaluation and ablation runs.
#[derive(Debug, Parser)]
#[command(name = "fakethermal", version)]
struct Cli {
    /// Worker threads for per-image work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a domain on disk and print a summary.
    Ingest(IngestArgs),
    /// Build a fake thermal domain from a visible domain.
    Translate(TranslateArgs),
    /// Invert an 8-bit gray PNG.
    Invert(InvertArgs),
    /// Union of a fake thermal domain and its inverted copies.
    BuildRenewed(BuildRenewedArgs),
    /// Generate paired synthetic visible and thermal domains.
    Synth(SynthArgs),
    /// Run the built-in threshold detector.
    Detect(DetectArgs),
    /// Fit the built-in detector, optionally re-adapted to target images.
    Train(TrainArgs),
    /// Score a detections file against a labelled domain.
    Eval(EvalArgs),
    /// Run an ablation grid from a JSON config.
    Ablate(AblateArgs),
    /// Render saved reports as a table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    root: PathBuf,
    /// Images only; annotations are not read.
    #[arg(long)]
    unlabelled: bool,
    /// Second domain to pair with by image id.
    #[arg(long)]
    pair: Option<PathBuf>,
    /// Write the summary as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TranslateMode {
    Gray,
    Histmatch,
    External,
}

#[derive(Debug, Args)]
struct TranslateArgs {
    mode: TranslateMode,
    /// Labelled visible domain.
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Thermal domain whose histogram is matched (histmatch).
    #[arg(long, required_if_eq("mode", "histmatch"))]
    reference: Option<PathBuf>,
    /// Match each image to the reference image with the same id (histmatch).
    #[arg(long)]
    per_image: bool,
    /// Directory of translated `<id>.png` files (external).
    #[arg(long, required_if_eq("mode", "external"))]
    images: Option<PathBuf>,
    /// Write `<out>/<id>.png` only, the translate stage contract.
    #[arg(long)]
    flat: bool,
}

#[derive(Debug, Args)]
struct InvertArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BuildRenewedArgs {
    /// Labelled gray fake thermal domain.
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolarityArg {
    Bright,
    Dark,
}

impl From<PolarityArg> for Polarity {
    fn from(p: PolarityArg) -> Self {
        match p {
            PolarityArg::Bright => Polarity::Bright,
            PolarityArg::Dark => Polarity::Dark,
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Writes `<out>/visible` and `<out>/thermal`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    /// JSON file with generator parameters; flags below override it.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Fraction of thermal objects brighter than the background.
    #[arg(long)]
    mix: Option<f64>,
    #[arg(long, value_enum)]
    visible_polarity: Option<PolarityArg>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    min_objects: Option<usize>,
    #[arg(long)]
    max_objects: Option<usize>,
    #[arg(long)]
    noise: Option<u8>,
    /// Comma-separated class labels.
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<String>>,
    #[arg(long, default_value = "synth")]
    name: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DetectPolarityArg {
    Bright,
    Dark,
    Both,
}

impl From<DetectPolarityArg> for DetectPolarity {
    fn from(p: DetectPolarityArg) -> Self {
        match p {
            DetectPolarityArg::Bright => DetectPolarity::Bright,
            DetectPolarityArg::Dark => DetectPolarity::Dark,
            DetectPolarityArg::Both => DetectPolarity::Both,
        }
    }
}

/// Either raw thresholding of one image (`--image --threshold`), or a stage
/// run over a domain (`--target --out`, with `--source`, `--model` or
/// `--config` supplying the model).
#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["image", "target"]))]
struct DetectArgs {
    #[arg(long, requires = "threshold")]
    image: Option<PathBuf>,
    #[arg(long, requires = "image")]
    threshold: Option<u8>,
    #[arg(long, value_enum, default_value = "bright", requires = "image")]
    polarity: DetectPolarityArg,
    #[arg(long, default_value_t = 1, requires = "image")]
    min_area: u32,
    #[arg(long, default_value = "object", requires = "image")]
    label: String,
    /// Unlabelled images to detect on.
    #[arg(long, requires = "out")]
    target: Option<PathBuf>,
    /// Labelled domain to fit on when no trained model is available.
    #[arg(long, requires = "target")]
    source: Option<PathBuf>,
    #[arg(long, requires = "target")]
    model: Option<PathBuf>,
    /// Row config; its train output is used when present.
    #[arg(long, requires = "target")]
    config: Option<PathBuf>,
    /// Detections file (raw mode, default stdout) or output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    source: PathBuf,
    /// Unlabelled images to re-adapt to.
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Accepted for the hook contract; unused.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    AllPoints,
    ElevenPoint,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    detections: PathBuf,
    /// Labelled thermal domain.
    #[arg(long)]
    target: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    #[arg(long, value_enum, default_value = "all-points")]
    mode: ModeArg,
    /// Pixel-inclusive areas (+1 per axis).
    #[arg(long)]
    legacy_area: bool,
    /// Comma-separated classes to score (default: every class in the ground truth).
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<String>>,
    /// Image ids to evaluate on, one per line.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Report JSON (default: eval_report.json next to the detections).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Row name in the printed table.
    #[arg(long, default_value = "detections")]
    name: String,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run rows concurrently.
    #[arg(long)]
    parallel: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Evaluation or ablation report JSON files.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Row names for evaluation reports, in order (default: file stem).
    #[arg(long)]
    name: Vec<String>,
}

#[derive(Serialize)]
struct DomainSummary {
    name: String,
    images: usize,
    labelled: bool,
    objects: BTreeMap<String, usize>,
    difficult: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pairing: Option<PairingSummary>,
}

#[derive(Serialize)]
struct PairingSummary {
    pairs: usize,
    unpaired: Vec<String>,
    unpaired_other: Vec<String>,
}

fn summarize(d: &DomainDataset) -> DomainSummary {
    let mut objects = BTreeMap::new();
    let mut difficult = 0;
    for r in d.records() {
        for o in r.annotations.objects() {
            *objects.entry(o.class_label.clone()).or_insert(0) += 1;
            difficult += usize::from(o.difficult);
        }
    }
    DomainSummary {
        name: d.name().into(),
        images: d.len(),
        labelled: d.labelled(),
        objects,
        difficult,
        pairing: None,
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!(
        "{}",
        serde_json::to_string_pretty(v).map_err(|e| Error::json("<stdout>", e))?
    );
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let domain = load_domain(&a.root, !a.unlabelled)?;
    let mut summary = summarize(&domain);
    if let Some(other) = &a.pair {
        let other = load_domain(other, !a.unlabelled)?;
        let p = pair_spectral(&domain, &other)?;
        summary.pairing = Some(PairingSummary {
            pairs: p.pairs.len(),
            unpaired: p.unpaired_visible,
            unpaired_other: p.unpaired_thermal,
        });
    }
    if let Some(out) = &a.out {
        write_json(out, &summary)?;
    }
    print_json(&summary)
}

fn write_flat(domain: &DomainDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })?;
    for r in domain.records() {
        write_image(&dir.join(format!("{}.png", r.image_id())), &r.image)?;
    }
    Ok(())
}

fn translate(a: TranslateArgs) -> Result<()> {
    let source = load_domain(&a.source, true)?;
    let out = match a.mode {
        TranslateMode::Gray => translate_gray(&source)?,
        TranslateMode::Histmatch => {
            let reference = load_domain(a.reference.as_deref().expect("required by clap"), false)?;
            translate_histmatch(&source, &reference, a.per_image)?
        }
        TranslateMode::External => {
            ingest_translated(a.images.as_deref().expect("required by clap"), &source)?
        }
    };
    if a.flat {
        write_flat(&out, &a.out)?;
    } else {
        save_domain(&out, &a.out)?;
    }
    log::info!("wrote {} images to {}", out.len(), a.out.display());
    Ok(())
}

fn invert(a: InvertArgs) -> Result<()> {
    let img = read_gray(&a.input)?;
    write_image(&a.out, &Image::Gray(intensity_invert(&img)))
}

fn build_renewed(a: BuildRenewedArgs) -> Result<()> {
    let renewed = build_renewed_source(&load_domain(&a.source, true)?)?;
    save_domain(&renewed, &a.out)?;
    log::info!("wrote {} images to {}", renewed.len(), a.out.display());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut p: SynthParams = match &a.params {
        Some(path) => read_json(path)?,
        None => SynthParams::default(),
    };
    p.seed = a.seed;
    if let Some(v) = a.mix {
        p.polarity_mix = v;
    }
    if let Some(v) = a.visible_polarity {
        p.visible_polarity = v.into();
    }
    if let Some(v) = a.width {
        p.width = v;
    }
    if let Some(v) = a.height {
        p.height = v;
    }
    if let Some(v) = a.min_objects {
        p.min_objects = v;
    }
    if let Some(v) = a.max_objects {
        p.max_objects = v;
    }
    if let Some(v) = a.noise {
        p.noise = v;
    }
    if let Some(v) = a.classes {
        p.classes = v;
    }
    let (visible, thermal) = generate_domains(&p, a.count, &a.name)?;
    save_domain(&visible, &a.out.join("visible"))?;
    save_domain(&thermal, &a.out.join("thermal"))?;
    write_json(&a.out.join("synth_params.json"), &p)
}

fn detect(a: DetectArgs) -> Result<()> {
    if let Some(image) = &a.image {
        let img = read_image(image)?.to_gray();
        let id = image
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image");
        let params = DetectorParams::new(
            a.threshold.expect("required by clap"),
            a.polarity.into(),
            a.min_area,
            a.label,
        );
        let dets = threshold_detect(id, &img, &params);
        return match &a.out {
            Some(out) => write_detections(out, &dets),
            None => print_json(&dets),
        };
    }
    let target = a.target.as_deref().expect("input group");
    let out = a.out.as_deref().expect("required by clap");
    if a.model.is_none() && a.source.is_none() {
        return Err(Error::InvalidConfig(
            "detect over a domain needs --source or --model".into(),
        ));
    }
    let source = a.source.as_deref().unwrap_or(Path::new(""));
    let model = mock::resolve_model(source, a.model.as_deref(), a.config.as_deref())?;
    let dets = mock::detect_to(&model, target, out)?;
    log::info!("{} detections", dets.len());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let path = mock::train_to(&a.source, a.target.as_deref(), &a.out)?;
    log::info!("model written to {}", path.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let dets = read_detections(&a.detections)?;
    let mut target = load_domain(&a.target, true)?;
    if let Some(split) = &a.split {
        let ids = read_split(split)?;
        target = target.subset(ids.iter().map(String::as_str));
    }
    let params = EvalParams {
        iou_threshold: a.iou,
        interpolation: match a.mode {
            ModeArg::AllPoints => Interpolation::AllPoints,
            ModeArg::ElevenPoint => Interpolation::ElevenPoint,
        },
        legacy_area: a.legacy_area,
        classes: a.classes,
    };
    let report = evaluate(&dets, &target, &params)?;
    let out = a
        .out
        .unwrap_or_else(|| a.detections.with_file_name("eval_report.json"));
    write_json(&out, &report)?;
    if !report.undefined_classes.is_empty() {
        log::warn!(
            "no ground truth for: {}",
            report.undefined_classes.join(", ")
        );
    }
    print!("{}", render_eval_table(&[(a.name.as_str(), &report)]));
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let mut cfg = AblationConfig::load(&a.config)?;
    cfg.parallel |= a.parallel;
    let report = fakethermal::pipeline::run_ablation(&cfg)?;
    print!("{}", report.table());
    log::info!(
        "report written to {}",
        cfg.paths.out.join(ABLATION_REPORT_FILE).display()
    );
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let mut evals: Vec<(String, EvalReport)> = Vec::new();
    let mut names = a.name.into_iter();
    for path in &a.reports {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        if let Ok(ablation) = serde_json::from_str::<AblationReport>(&text) {
            print!("{}", ablation.table());
            continue;
        }
        let report: EvalReport = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let name = names.next().unwrap_or_else(|| {
            path.file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("report")
                .to_string()
        });
        evals.push((name, report));
    }
    if !evals.is_empty() {
        let rows: Vec<(&str, &EvalReport)> = evals.iter().map(|(n, r)| (n.as_str(), r)).collect();
        print!("{}", render_eval_table(&rows));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Translate(a) => translate(a),
        Command::Invert(a) => invert(a),
        Command::BuildRenewed(a) => build_renewed(a),
        Command::Synth(a) => synth(a),
        Command::Detect(a) => detect(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
