//! Seeded synthetic visible/thermal scene pairs and a threshold blob
//! detector.
//!
//! Scenes are flat backgrounds with axis-aligned rectangles and ellipses.
//! Each object has a thermal polarity (brighter or darker than the
//! background) drawn from a configurable mix, so detector behaviour under
//! polarity mismatch can be measured exactly. The [`CalibratedDetector`] is
//! a tiny stand-in for a trained detector: it "trains" on a labelled domain
//! by estimating object polarity, contrast and size per class.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{DatasetError, DomainDataset, Record};
use crate::eval::Detection;
use crate::geometry::{AnnotationSet, BoundingBox, ObjectInstance};
use crate::image::{GrayImage, Image, RgbImage};

#[derive(Debug, Clone, PartialEq)]
pub enum SynthError {
    PlacementFailure { placed: usize, requested: usize },
    InvalidParams(&'static str),
    Dataset(DatasetError),
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PlacementFailure { placed, requested } => {
                write!(
                    f,
                    "could only place {placed} of {requested} objects in the frame"
                )
            }
            Self::InvalidParams(why) => write!(f, "invalid synthesis parameters: {why}"),
            Self::Dataset(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for SynthError {}

impl From<DatasetError> for SynthError {
    fn from(e: DatasetError) -> Self {
        Self::Dataset(e)
    }
}

/// Whether an object is brighter or darker than its background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Bright,
    Dark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub width: u32,
    pub height: u32,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Fraction of objects drawn brighter than the background in the
    /// thermal rendition. Per scene, `round(mix * n)` objects are bright.
    pub polarity_mix: f64,
    /// Polarity of every object in the luma of the visible rendition.
    pub visible_polarity: Polarity,
    pub thermal_background: u8,
    pub thermal_contrast: u8,
    pub visible_background: u8,
    pub visible_contrast: u8,
    /// Uniform per-pixel jitter in `[-noise, noise]`.
    pub noise: u8,
    /// Each class gets its own slice of `[min_size, max_size]`.
    pub classes: Vec<String>,
    pub min_size: u32,
    pub max_size: u32,
    pub ellipses: bool,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            width: 96,
            height: 72,
            min_objects: 2,
            max_objects: 4,
            polarity_mix: 1.0,
            visible_polarity: Polarity::Bright,
            thermal_background: 90,
            thermal_contrast: 60,
            visible_background: 150,
            visible_contrast: 70,
            noise: 6,
            classes: vec!["car".into(), "person".into()],
            min_size: 6,
            max_size: 21,
            ellipses: true,
            max_attempts: 500,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..=1.0).contains(&self.polarity_mix) {
            return Err(SynthError::InvalidParams("polarity_mix must lie in [0, 1]"));
        }
        if self.min_objects > self.max_objects {
            return Err(SynthError::InvalidParams("min_objects exceeds max_objects"));
        }
        if self.classes.is_empty() || self.classes.iter().any(String::is_empty) {
            return Err(SynthError::InvalidParams(
                "at least one non-empty class label is required",
            ));
        }
        if self.min_size == 0 || self.min_size > self.max_size {
            return Err(SynthError::InvalidParams(
                "object sizes need 1 <= min_size <= max_size",
            ));
        }
        if self.max_size > self.width || self.max_size > self.height {
            return Err(SynthError::InvalidParams("max_size exceeds the frame"));
        }
        if ((self.max_size - self.min_size + 1) as usize) < self.classes.len() {
            return Err(SynthError::InvalidParams(
                "size range too narrow for one band per class",
            ));
        }
        Ok(())
    }

    /// Inclusive side-length band of class `k`.
    fn size_band(&self, k: usize) -> (u32, u32) {
        let span = self.max_size - self.min_size + 1;
        let n = self.classes.len() as u32;
        let k = k as u32;
        (
            self.min_size + k * span / n,
            self.min_size + (k + 1) * span / n - 1,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub visible: RgbImage,
    pub thermal: GrayImage,
    pub annotations: AnnotationSet,
    /// Thermal polarity of each annotated object, in annotation order.
    pub polarities: Vec<Polarity>,
}

fn offset_level(background: u8, contrast: u8, polarity: Polarity) -> u8 {
    match polarity {
        Polarity::Bright => background.saturating_add(contrast),
        Polarity::Dark => background.saturating_sub(contrast),
    }
}

// Zero-luma tints so the visible rendition is coloured but converts back to
// (almost exactly) the intended gray level.
const TINTS: [[i16; 3]; 4] = [[24, -12, -1], [-24, 12, 1], [-10, 2, 16], [10, -2, -16]];

fn tinted(v: u8, class: usize) -> [u8; 3] {
    let t = TINTS[class % TINTS.len()];
    [0, 1, 2].map(|c| (i16::from(v) + t[c]).clamp(0, 255) as u8)
}

fn jitter(rng: &mut ChaCha8Rng, v: u8, amplitude: u8) -> u8 {
    if amplitude == 0 {
        return v;
    }
    let a = i16::from(amplitude);
    (i16::from(v) + rng.random_range(-a..=a)).clamp(0, 255) as u8
}

struct Placement {
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    class: usize,
    ellipse: bool,
}

impl Placement {
    fn covers(&self, px: u32, py: u32) -> bool {
        if px < self.x || py < self.y || px >= self.x + self.w || py >= self.y + self.h {
            return false;
        }
        if !self.ellipse {
            return true;
        }
        let (w, h) = (i64::from(self.w), i64::from(self.h));
        let dx = 2 * i64::from(px - self.x) + 1 - w;
        let dy = 2 * i64::from(py - self.y) + 1 - h;
        dx * dx * h * h + dy * dy * w * w <= w * w * h * h
    }

    /// Keeps one clear pixel between objects so 4-connected blobs never merge.
    fn separated(&self, other: &Placement) -> bool {
        self.x + self.w < other.x
            || other.x + other.w < self.x
            || self.y + self.h < other.y
            || other.y + other.h < self.y
    }
}

/// Renders one visible/thermal pair with exact annotations.
pub fn generate_scene(params: &SynthParams, image_id: &str) -> Result<Scene, SynthError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = rng.random_range(params.min_objects..=params.max_objects);

    let mut placed: Vec<Placement> = Vec::with_capacity(n);
    while placed.len() < n {
        let mut ok = false;
        for _ in 0..params.max_attempts.max(1) {
            let class = rng.random_range(0..params.classes.len());
            let (lo, hi) = params.size_band(class);
            let w = rng.random_range(lo..=hi);
            let h = rng.random_range(lo..=hi);
            let x = rng.random_range(0..=params.width - w);
            let y = rng.random_range(0..=params.height - h);
            let ellipse = params.ellipses && rng.random_bool(0.5);
            let cand = Placement {
                x,
                y,
                w,
                h,
                class,
                ellipse,
            };
            if placed.iter().all(|p| p.separated(&cand)) {
                placed.push(cand);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(SynthError::PlacementFailure {
                placed: placed.len(),
                requested: n,
            });
        }
    }

    // exactly round(mix * n) bright objects, positions shuffled
    let n_bright = ((params.polarity_mix * n as f64) + 0.5) as usize;
    let mut polarities: Vec<Polarity> = (0..n)
        .map(|i| {
            if i < n_bright {
                Polarity::Bright
            } else {
                Polarity::Dark
            }
        })
        .collect();
    polarities.shuffle(&mut rng);

    let (w, h) = (params.width, params.height);
    let mut visible = RgbImage::filled(w, h, [params.visible_background; 3]);
    let mut thermal = GrayImage::filled(w, h, params.thermal_background);
    let mut objects = Vec::with_capacity(n);
    for (p, &pol) in placed.iter().zip(&polarities) {
        let t_level = offset_level(params.thermal_background, params.thermal_contrast, pol);
        let v_level = offset_level(
            params.visible_background,
            params.visible_contrast,
            params.visible_polarity,
        );
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for py in p.y..p.y + p.h {
            for px in p.x..p.x + p.w {
                if p.covers(px, py) {
                    thermal.set(px, py, t_level);
                    visible.set(px, py, tinted(v_level, p.class));
                    x0 = x0.min(px);
                    y0 = y0.min(py);
                    x1 = x1.max(px);
                    y1 = y1.max(py);
                }
            }
        }
        let bbox = BoundingBox::new(
            f64::from(x0),
            f64::from(y0),
            f64::from(x1 + 1),
            f64::from(y1 + 1),
        )
        .expect("drawn shapes cover at least one pixel");
        objects.push(
            ObjectInstance::new(params.classes[p.class].clone(), bbox, false)
                .expect("labels validated"),
        );
    }

    if params.noise > 0 {
        for y in 0..h {
            for x in 0..w {
                let t = jitter(&mut rng, thermal.get(x, y), params.noise);
                thermal.set(x, y, t);
                let d = i16::from(jitter(&mut rng, 128, params.noise)) - 128;
                let v = visible
                    .get(x, y)
                    .map(|c| (i16::from(c) + d).clamp(0, 255) as u8);
                visible.set(x, y, v);
            }
        }
    }

    let annotations =
        AnnotationSet::new(image_id, w, h, objects).expect("boxes lie inside the frame");
    Ok(Scene {
        visible,
        thermal,
        annotations,
        polarities,
    })
}

/// Image id used for the `index`-th generated scene.
pub fn scene_id(index: usize) -> String {
    format!("{index:06}")
}

/// Generates `count` scenes with seeds `params.seed + i` and returns the
/// visible (RGB) and thermal (gray) domains, both labelled.
pub fn generate_domains(
    params: &SynthParams,
    count: usize,
    name: &str,
) -> Result<(DomainDataset, DomainDataset), SynthError> {
    let mut visible = Vec::with_capacity(count);
    let mut thermal = Vec::with_capacity(count);
    for i in 0..count {
        let p = SynthParams {
            seed: params.seed.wrapping_add(i as u64),
            ..params.clone()
        };
        let scene = generate_scene(&p, &scene_id(i))?;
        visible.push(Record::new(
            Image::Rgb(scene.visible),
            scene.annotations.clone(),
        )?);
        thermal.push(Record::new(Image::Gray(scene.thermal), scene.annotations)?);
    }
    Ok((
        DomainDataset::new(format!("{name}_visible"), visible, true)?,
        DomainDataset::new(format!("{name}_thermal"), thermal, true)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectPolarity {
    Bright,
    Dark,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Bright pixels satisfy `p > threshold`; dark pixels `255 - p > threshold`.
    pub threshold: u8,
    pub polarity: DetectPolarity,
    /// Minimum component size in pixels (at least 1).
    pub min_area: u32,
    /// Class label attached to every detection.
    pub label: String,
}

impl DetectorParams {
    pub fn new(
        threshold: u8,
        polarity: DetectPolarity,
        min_area: u32,
        label: impl Into<String>,
    ) -> Self {
        Self {
            threshold,
            polarity,
            min_area: min_area.max(1),
            label: label.into(),
        }
    }
}

/// One 4-connected component of above-threshold pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub polarity: Polarity,
    pub area: u32,
    pub bbox: BoundingBox,
    /// Mean of `(q - threshold) / (255 - threshold)` over the component,
    /// where `q` is the pixel value in the blob's polarity.
    pub contrast: f64,
}

fn components(
    img: &GrayImage,
    threshold: u8,
    polarity: Polarity,
    min_area: u32,
    out: &mut Vec<Blob>,
) {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let value = |p: u8| match polarity {
        Polarity::Bright => p,
        Polarity::Dark => 255 - p,
    };
    let px = img.pixels();
    let mut seen = vec![false; px.len()];
    let mut queue = VecDeque::new();
    let denom = f64::from(255 - threshold);
    for start in 0..px.len() {
        if seen[start] || value(px[start]) <= threshold {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut area = 0u32;
        let mut contrast_sum = 0.0;
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            area += 1;
            contrast_sum += f64::from(value(px[i]) - threshold) / denom;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            let mut visit = |j: usize| {
                if !seen[j] && value(px[j]) > threshold {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if area >= min_area {
            let bbox = BoundingBox::new(x0 as f64, y0 as f64, (x1 + 1) as f64, (y1 + 1) as f64)
                .expect("component spans at least one pixel");
            out.push(Blob {
                polarity,
                area,
                bbox,
                contrast: contrast_sum / f64::from(area),
            });
        }
    }
}

/// Connected components beyond `params.threshold` in the configured
/// polarity, bright components first, each in raster order of its first pixel.
pub fn find_blobs(img: &GrayImage, params: &DetectorParams) -> Vec<Blob> {
    let mut out = Vec::new();
    let min_area = params.min_area.max(1);
    if matches!(
        params.polarity,
        DetectPolarity::Bright | DetectPolarity::Both
    ) {
        components(img, params.threshold, Polarity::Bright, min_area, &mut out);
    }
    if matches!(params.polarity, DetectPolarity::Dark | DetectPolarity::Both) {
        components(img, params.threshold, Polarity::Dark, min_area, &mut out);
    }
    out
}

pub fn threshold_detect(
    image_id: &str,
    img: &GrayImage,
    params: &DetectorParams,
) -> Vec<Detection> {
    find_blobs(img, params)
        .into_iter()
        .map(|b| {
            Detection::new(
                image_id,
                params.label.clone(),
                b.contrast.clamp(0.0, 1.0),
                b.bbox,
            )
            .expect("contrast is a finite value in [0, 1]")
        })
        .collect()
}

/// Median of a gray image via its histogram (lower median).
pub fn median_level(img: &GrayImage) -> u8 {
    let h = img.histogram();
    let half = h.total().div_ceil(2);
    let mut acc = 0;
    for (level, &c) in h.bins().iter().enumerate() {
        acc += c;
        if acc >= half && c > 0 {
            return level as u8;
        }
    }
    0
}

fn median_u8(values: &mut [u8]) -> Option<u8> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    Some(values[(values.len() - 1) / 2])
}

/// Inclusive range of mean side lengths seen for a class during calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePrototype {
    pub label: String,
    pub min_side: f64,
    pub max_side: f64,
}

impl SizePrototype {
    fn distance(&self, side: f64) -> f64 {
        if side < self.min_side {
            self.min_side - side
        } else if side > self.max_side {
            side - self.max_side
        } else {
            0.0
        }
    }
}

/// Detection rule for one polarity, relative to each image's median level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarityRule {
    pub polarity: Polarity,
    /// Threshold offset above the image background, in the polarity's
    /// value space (`p` for bright, `255 - p` for dark).
    pub offset: u8,
}

/// A threshold detector fitted to a labelled domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedDetector {
    pub rules: Vec<PolarityRule>,
    pub min_area: u32,
    pub prototypes: Vec<SizePrototype>,
}

pub const FALLBACK_LABEL: &str = "object";

impl CalibratedDetector {
    /// Fits polarity rules, minimum blob area and class size prototypes to
    /// the ground truth of `source`. RGB images are converted to luma.
    ///
    /// For each annotated object the interior median is compared with the
    /// median of the pixels outside every box; objects above the background
    /// vote for a bright rule, objects below for a dark rule. A rule's offset
    /// sits halfway between the background and the median object contrast.
    pub fn fit(source: &DomainDataset) -> Result<Self, SynthError> {
        if !source.labelled() {
            return Err(SynthError::Dataset(DatasetError::NotLabelled(
                source.name().into(),
            )));
        }
        let mut contrasts: [Vec<u8>; 2] = [Vec::new(), Vec::new()];
        let mut min_area = u32::MAX;
        let mut sides: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
        for r in source.records() {
            let objects = r.annotations.objects();
            if objects.is_empty() {
                continue;
            }
            let gray = r.image.to_gray();
            let (w, h) = (gray.width(), gray.height());
            let pixel_box = |o: &ObjectInstance| {
                let b = &o.bbox;
                let x0 = b.xmin() as u32;
                let y0 = b.ymin() as u32;
                let x1 = (b.xmax() as u32).max(x0 + 1).min(w);
                let y1 = (b.ymax() as u32).max(y0 + 1).min(h);
                (x0, y0, x1, y1)
            };
            let boxes: Vec<_> = objects.iter().map(pixel_box).collect();
            let mut outside = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    if !boxes
                        .iter()
                        .any(|&(x0, y0, x1, y1)| x >= x0 && x < x1 && y >= y0 && y < y1)
                    {
                        outside.push(gray.get(x, y));
                    }
                }
            }
            let background = median_u8(&mut outside).unwrap_or_else(|| median_level(&gray));
            for (o, &(x0, y0, x1, y1)) in objects.iter().zip(&boxes) {
                let mut inside = Vec::with_capacity(((x1 - x0) * (y1 - y0)) as usize);
                for y in y0..y1 {
                    for x in x0..x1 {
                        inside.push(gray.get(x, y));
                    }
                }
                let level = median_u8(&mut inside).unwrap_or(background);
                match level.cmp(&background) {
                    core::cmp::Ordering::Greater => contrasts[0].push(level - background),
                    core::cmp::Ordering::Less => contrasts[1].push(background - level),
                    core::cmp::Ordering::Equal => {}
                }
                min_area = min_area.min((x1 - x0) * (y1 - y0));
                let side = (o.bbox.width() + o.bbox.height()) / 2.0;
                let e = sides.entry(o.class_label.as_str()).or_insert((side, side));
                e.0 = e.0.min(side);
                e.1 = e.1.max(side);
            }
        }
        let mut rules = Vec::new();
        for (k, polarity) in [Polarity::Bright, Polarity::Dark].into_iter().enumerate() {
            if let Some(c) = median_u8(&mut contrasts[k]) {
                rules.push(PolarityRule {
                    polarity,
                    offset: c / 2,
                });
            }
        }
        let prototypes = sides
            .into_iter()
            .map(|(label, (min_side, max_side))| SizePrototype {
                label: label.into(),
                min_side,
                max_side,
            })
            .collect();
        Ok(Self {
            rules,
            min_area: if min_area == u32::MAX {
                1
            } else {
                (min_area / 4).max(1)
            },
            prototypes,
        })
    }

    /// Unsupervised adjustment to an unlabelled target domain.
    ///
    /// For each rule, target pixels deviating from their image median by more
    /// than half the current offset are treated as object candidates; the
    /// offset moves to half their median deviation.
    pub fn readapt(&self, target: &DomainDataset) -> Self {
        let grays: Vec<GrayImage> = target.records().iter().map(|r| r.image.to_gray()).collect();
        let medians: Vec<u8> = grays.iter().map(median_level).collect();
        let rules = self
            .rules
            .iter()
            .map(|rule| {
                let floor = rule.offset / 2;
                let mut devs = Vec::new();
                for (g, &m) in grays.iter().zip(&medians) {
                    for &p in g.pixels() {
                        let d = match rule.polarity {
                            Polarity::Bright => i16::from(p) - i16::from(m),
                            Polarity::Dark => i16::from(m) - i16::from(p),
                        };
                        if d > i16::from(floor) {
                            devs.push(d as u8);
                        }
                    }
                }
                match median_u8(&mut devs) {
                    Some(d) => PolarityRule {
                        polarity: rule.polarity,
                        offset: (d / 2).max(floor + 1),
                    },
                    None => rule.clone(),
                }
            })
            .collect();
        Self {
            rules,
            ..self.clone()
        }
    }

    fn classify(&self, bbox: &BoundingBox) -> String {
        let side = (bbox.width() + bbox.height()) / 2.0;
        self.prototypes
            .iter()
            .map(|p| (p.distance(side), p))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map_or_else(|| FALLBACK_LABEL.into(), |(_, p)| p.label.clone())
    }

    /// The absolute detector settings this model applies to `img`.
    pub fn params_for(&self, img: &GrayImage) -> Vec<DetectorParams> {
        let m = median_level(img);
        self.rules
            .iter()
            .map(|rule| {
                let base = match rule.polarity {
                    Polarity::Bright => m,
                    Polarity::Dark => 255 - m,
                };
                let polarity = match rule.polarity {
                    Polarity::Bright => DetectPolarity::Bright,
                    Polarity::Dark => DetectPolarity::Dark,
                };
                DetectorParams::new(
                    base.saturating_add(rule.offset),
                    polarity,
                    self.min_area,
                    FALLBACK_LABEL,
                )
            })
            .collect()
    }

    pub fn detect(&self, image_id: &str, img: &GrayImage) -> Vec<Detection> {
        let mut out = Vec::new();
        for params in self.params_for(img) {
            for mut d in threshold_detect(image_id, img, &params) {
                d.class_label = self.classify(&d.bbox);
                out.push(d);
            }
        }
        out
    }

    /// Runs [`Self::detect`] over every image of `domain`, in record order.
    pub fn detect_domain(&self, domain: &DomainDataset) -> Vec<Detection> {
        domain
            .records()
            .iter()
            .flat_map(|r| self.detect(r.image_id(), &r.image.to_gray()))
            .collect()
    }

    pub fn polarity(&self) -> Option<DetectPolarity> {
        let bright = self.rules.iter().any(|r| r.polarity == Polarity::Bright);
        let dark = self.rules.iter().any(|r| r.polarity == Polarity::Dark);
        match (bright, dark) {
            (true, true) => Some(DetectPolarity::Both),
            (true, false) => Some(DetectPolarity::Bright),
            (false, true) => Some(DetectPolarity::Dark),
            (false, false) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::iou;
    use crate::image::intensity_invert;

    fn square_image(bg: u8, fg: u8) -> GrayImage {
        let mut img = GrayImage::filled(20, 16, bg);
        for y in 4..9 {
            for x in 6..13 {
                img.set(x, y, fg);
            }
        }
        img
    }

    fn clean(mix: f64, seed: u64) -> SynthParams {
        SynthParams {
            polarity_mix: mix,
            noise: 0,
            seed,
            ..SynthParams::default()
        }
    }

    #[test]
    fn blank_image_no_detections() {
        // bright space 90, dark space 165
        let img = GrayImage::filled(10, 10, 90);
        let p = DetectorParams::new(170, DetectPolarity::Both, 1, "x");
        assert!(threshold_detect("a", &img, &p).is_empty());
    }

    #[test]
    fn bright_square_found_exactly() {
        let img = square_image(128, 250);
        let p = DetectorParams::new(200, DetectPolarity::Bright, 1, "x");
        let d = threshold_detect("a", &img, &p);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].bbox.as_array(), [6.0, 4.0, 13.0, 9.0]);
        // (250 - 200) / (255 - 200)
        assert!((d[0].score() - 50.0 / 55.0).abs() < 1e-12);
    }

    #[test]
    fn bright_square_missed_with_dark_polarity() {
        let img = square_image(128, 250);
        let p = DetectorParams::new(200, DetectPolarity::Dark, 1, "x");
        assert!(threshold_detect("a", &img, &p).is_empty());
    }

    #[test]
    fn four_connectivity_keeps_diagonals_apart() {
        let mut img = GrayImage::filled(4, 4, 0);
        img.set(0, 0, 255);
        img.set(1, 1, 255);
        let p = DetectorParams::new(100, DetectPolarity::Bright, 1, "x");
        assert_eq!(threshold_detect("a", &img, &p).len(), 2);
        let p = DetectorParams::new(100, DetectPolarity::Bright, 2, "x");
        assert!(threshold_detect("a", &img, &p).is_empty());
    }

    #[test]
    fn empty_scene() {
        let p = SynthParams {
            min_objects: 0,
            max_objects: 0,
            ..clean(1.0, 3)
        };
        let s = generate_scene(&p, "e").unwrap();
        assert!(s.annotations.objects().is_empty());
        assert!(s
            .thermal
            .pixels()
            .iter()
            .all(|&v| v == p.thermal_background));
        assert!(s
            .visible
            .pixels()
            .iter()
            .all(|&v| v == [p.visible_background; 3]));
    }

    #[test]
    fn scenes_are_deterministic() {
        let p = SynthParams {
            seed: 42,
            ..SynthParams::default()
        };
        assert_eq!(
            generate_scene(&p, "a").unwrap(),
            generate_scene(&p, "a").unwrap()
        );
        let q = SynthParams {
            seed: 43,
            ..p.clone()
        };
        assert_ne!(
            generate_scene(&p, "a").unwrap(),
            generate_scene(&q, "a").unwrap()
        );
    }

    #[test]
    fn full_bright_mix() {
        for seed in 0..20 {
            let s = generate_scene(&clean(1.0, seed), "a").unwrap();
            assert!(s.polarities.iter().all(|&p| p == Polarity::Bright));
            for o in s.annotations.objects() {
                let x = (o.bbox.xmin() + o.bbox.xmax()) / 2.0;
                let y = (o.bbox.ymin() + o.bbox.ymax()) / 2.0;
                assert!(s.thermal.get(x as u32, y as u32) > 90);
            }
        }
    }

    #[test]
    fn placement_failure_reported() {
        let p = SynthParams {
            width: 10,
            height: 10,
            min_objects: 20,
            max_objects: 20,
            min_size: 4,
            max_size: 5,
            classes: vec!["a".into()],
            max_attempts: 50,
            ..SynthParams::default()
        };
        assert!(matches!(
            generate_scene(&p, "a"),
            Err(SynthError::PlacementFailure { requested: 20, .. })
        ));
    }

    #[test]
    fn invalid_params_rejected() {
        let p = SynthParams {
            polarity_mix: 1.5,
            ..SynthParams::default()
        };
        assert!(matches!(p.validate(), Err(SynthError::InvalidParams(_))));
    }

    #[test]
    fn clean_scene_soundness_and_blindness() {
        for seed in 0..30 {
            for (mix, polarity, expect_all) in [
                (1.0, DetectPolarity::Bright, true),
                (0.0, DetectPolarity::Dark, true),
                (0.0, DetectPolarity::Bright, false),
                (1.0, DetectPolarity::Dark, false),
            ] {
                let s = generate_scene(&clean(mix, seed), "a").unwrap();
                // background 90 -> bright space 90 / dark space 165; objects at +-60
                let threshold = if polarity == DetectPolarity::Bright {
                    120
                } else {
                    195
                };
                let dets = threshold_detect(
                    "a",
                    &s.thermal,
                    &DetectorParams::new(threshold, polarity, 1, "x"),
                );
                if expect_all {
                    assert_eq!(dets.len(), s.annotations.objects().len());
                    for o in s.annotations.objects() {
                        assert!(dets.iter().any(|d| iou(&d.bbox, &o.bbox, false) == 1.0));
                    }
                } else {
                    assert!(dets.is_empty());
                }
            }
        }
    }

    #[test]
    fn inversion_bridge() {
        for seed in 0..20 {
            let s = generate_scene(&clean(0.0, seed), "a").unwrap();
            let dark = threshold_detect(
                "a",
                &s.thermal,
                &DetectorParams::new(195, DetectPolarity::Dark, 1, "x"),
            );
            let inv = intensity_invert(&s.thermal);
            let bright = threshold_detect(
                "a",
                &inv,
                &DetectorParams::new(195, DetectPolarity::Bright, 1, "x"),
            );
            let boxes = |v: &[Detection]| v.iter().map(|d| d.bbox).collect::<Vec<_>>();
            assert_eq!(boxes(&dark), boxes(&bright));
        }
    }

    #[test]
    fn calibration_learns_polarity_and_classes() {
        let p = SynthParams {
            seed: 7,
            ..SynthParams::default()
        };
        let (_, thermal) = generate_domains(&p, 10, "s").unwrap();
        let det = CalibratedDetector::fit(&thermal).unwrap();
        assert_eq!(det.polarity(), Some(DetectPolarity::Bright));
        assert_eq!(det.prototypes.len(), 2);
        let mixed = SynthParams {
            polarity_mix: 0.5,
            ..p
        };
        let (_, thermal) = generate_domains(&mixed, 10, "s").unwrap();
        let det = CalibratedDetector::fit(&thermal).unwrap();
        assert_eq!(det.polarity(), Some(DetectPolarity::Both));
        let dets = det.detect_domain(&thermal);
        let report =
            crate::eval::evaluate(&dets, &thermal, &crate::eval::EvalParams::default()).unwrap();
        assert!(report.map_value > 0.95, "{report:?}");
    }

    #[test]
    fn readapt_tracks_lower_target_contrast() {
        let src = SynthParams {
            seed: 1,
            thermal_contrast: 80,
            ..SynthParams::default()
        };
        let tgt = SynthParams {
            seed: 100,
            thermal_contrast: 30,
            ..SynthParams::default()
        };
        let (_, source) = generate_domains(&src, 10, "s").unwrap();
        let (_, target) = generate_domains(&tgt, 10, "t").unwrap();
        let det = CalibratedDetector::fit(&source).unwrap();
        let adapted = det.readapt(&target.unlabelled());
        assert!(adapted.rules[0].offset < det.rules[0].offset);
        let params = crate::eval::EvalParams::default();
        let before = crate::eval::evaluate(&det.detect_domain(&target), &target, &params).unwrap();
        let after =
            crate::eval::evaluate(&adapted.detect_domain(&target), &target, &params).unwrap();
        assert!(
            after.map_value > before.map_value,
            "{} vs {}",
            after.map_value,
            before.map_value
        );
    }
}
