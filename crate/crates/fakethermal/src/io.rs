//! On-disk domains (`images/*.png` + `annotations/*.xml`), 8-bit PNG
//! images and detection result files.

use std::fs;
use std::path::{Path, PathBuf};

use fakethermal_core::{
    AnnotationSet, Detection, DomainDataset, GrayImage, Image, Record, RgbImage,
};
use image::{DynamicImage, ImageFormat};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::voc::{parse_voc_annotation, serialize_voc_annotation_with_depth};

pub const IMAGES_DIR: &str = "images";
pub const ANNOTATIONS_DIR: &str = "annotations";
pub const DETECTIONS_FILE: &str = "detections.json";

/// Decodes an 8-bit gray or RGB PNG. Any other layout is rejected.
pub fn read_image(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| Error::ImageDecode {
        path: path.into(),
        message: e.to_string(),
    })?;
    let (w, h) = (img.width(), img.height());
    match img {
        DynamicImage::ImageLuma8(buf) => Ok(Image::Gray(
            GrayImage::from_raw(w, h, buf.into_raw()).expect("decoder sizes agree"),
        )),
        DynamicImage::ImageRgb8(buf) => Ok(Image::Rgb(
            RgbImage::from_interleaved(w, h, buf.as_raw()).expect("decoder sizes agree"),
        )),
        other => Err(Error::UnsupportedImage {
            path: path.into(),
            format: format!("{:?}", other.color()),
        }),
    }
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let dynamic = match img {
        Image::Gray(g) => DynamicImage::ImageLuma8(
            image::GrayImage::from_raw(g.width(), g.height(), g.pixels().to_vec())
                .expect("sizes agree"),
        ),
        Image::Rgb(c) => DynamicImage::ImageRgb8(
            image::RgbImage::from_raw(c.width(), c.height(), c.interleaved()).expect("sizes agree"),
        ),
    };
    dynamic
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::ImageDecode {
            path: path.into(),
            message: e.to_string(),
        })
}

pub fn read_gray(path: &Path) -> Result<GrayImage> {
    match read_image(path)? {
        Image::Gray(g) => Ok(g),
        Image::Rgb(_) => Err(Error::UnsupportedImage {
            path: path.into(),
            format: "Rgb8".into(),
        }),
    }
}

/// `.png` files directly inside `dir`, as `(stem, path)` sorted by stem.
pub fn list_png(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn domain_name(root: &Path) -> String {
    root.file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("domain")
        .to_string()
}

fn load_record(root: &Path, stem: &str, image_path: &Path, labelled: bool) -> Result<Record> {
    let image = read_image(image_path)?;
    let dims = (image.width(), image.height());
    let annotations = if labelled {
        let xml_path = root.join(ANNOTATIONS_DIR).join(format!("{stem}.xml"));
        if !xml_path.is_file() {
            return Err(Error::MissingAnnotation {
                root: root.into(),
                stem: stem.into(),
            });
        }
        let xml = fs::read_to_string(&xml_path).map_err(|e| Error::io(&xml_path, e))?;
        let ann = parse_voc_annotation(&xml).map_err(|source| Error::Voc {
            path: xml_path.clone(),
            source,
        })?;
        if (ann.width(), ann.height()) != dims {
            return Err(Error::DimensionMismatch {
                image_id: stem.into(),
                image: dims,
                annotation: (ann.width(), ann.height()),
            });
        }
        ann.with_image_id(stem)
    } else {
        AnnotationSet::empty(stem, dims.0, dims.1)?
    };
    Ok(Record::new(image, annotations)?)
}

/// Loads a domain from `<root>/images/*.png` and, when `labelled`, the
/// matching `<root>/annotations/<stem>.xml` files. Records are ordered by
/// image id whatever the decode order.
pub fn load_domain(root: &Path, labelled: bool) -> Result<DomainDataset> {
    let images = list_png(&root.join(IMAGES_DIR))?;
    let records = images
        .par_iter()
        .map(|(stem, path)| load_record(root, stem, path, labelled))
        .collect::<Result<Vec<_>>>()?;
    Ok(DomainDataset::new(domain_name(root), records, labelled)?)
}

/// Writes `domain` in the layout [`load_domain`] reads. Annotations are only
/// written for labelled domains.
pub fn save_domain(domain: &DomainDataset, root: &Path) -> Result<()> {
    let images = root.join(IMAGES_DIR);
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let annotations = root.join(ANNOTATIONS_DIR);
    if domain.labelled() {
        fs::create_dir_all(&annotations).map_err(|e| Error::io(&annotations, e))?;
    }
    domain.records().par_iter().try_for_each(|r| -> Result<()> {
        write_image(&images.join(format!("{}.png", r.image_id())), &r.image)?;
        if domain.labelled() {
            let depth = match r.image {
                Image::Gray(_) => 1,
                Image::Rgb(_) => 3,
            };
            let path = annotations.join(format!("{}.xml", r.image_id()));
            let xml = serialize_voc_annotation_with_depth(&r.annotations, depth);
            fs::write(&path, xml).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a detection results file: a JSON list of
/// `{image_id, class_label, score, box: [xmin, ymin, xmax, ymax]}`.
pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    read_json(path)
}

pub fn write_detections(path: &Path, dets: &[Detection]) -> Result<()> {
    write_json(path, dets)
}

/// Image ids listed one per line; blank lines and `#` comments are ignored.
pub fn read_split(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}
