//! Fake thermal source domains: grayscale and histogram-matched stand-ins,
//! and ingestion of images produced by an external translator.

use std::path::Path;

use fakethermal_core::domain::pair_spectral;
use fakethermal_core::image::{histogram_match_to, to_grayscale, Histogram};
use fakethermal_core::{DatasetError, DomainDataset, Image, Record};
use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::read_image;

/// Name given to a fake thermal domain derived from `source`.
pub fn fake_thermal_name(source: &DomainDataset) -> String {
    format!("{}_ft", source.name())
}

/// Pairs each record of the labelled `source` with `<dir>/<image_id>.png`.
///
/// Translated images must have the annotated frame size. 8-bit RGB outputs
/// (common for image translation networks) are reduced to luma.
pub fn ingest_translated(dir: &Path, source: &DomainDataset) -> Result<DomainDataset> {
    if !source.labelled() {
        return Err(DatasetError::NotLabelled(source.name().into()).into());
    }
    let records = source
        .records()
        .par_iter()
        .map(|r| {
            let path = dir.join(format!("{}.png", r.image_id()));
            if !path.is_file() {
                return Err(Error::MissingTranslation {
                    dir: dir.into(),
                    stem: r.image_id().into(),
                });
            }
            let image = match read_image(&path)? {
                Image::Rgb(c) => Image::Gray(to_grayscale(&c)),
                gray => gray,
            };
            let dims = (image.width(), image.height());
            let frame = (r.annotations.width(), r.annotations.height());
            if dims != frame {
                return Err(Error::DimensionMismatch {
                    image_id: r.image_id().into(),
                    image: dims,
                    annotation: frame,
                });
            }
            Ok(Record::new(image, r.annotations.clone())?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DomainDataset::new(
        fake_thermal_name(source),
        records,
        true,
    )?)
}

pub fn translate_gray(source: &DomainDataset) -> Result<DomainDataset> {
    let records: Vec<Record> = source
        .records()
        .par_iter()
        .map(|r| Record {
            image: Image::Gray(r.image.to_gray()),
            annotations: r.annotations.clone(),
        })
        .collect();
    Ok(DomainDataset::new(
        fake_thermal_name(source),
        records,
        source.labelled(),
    )?)
}

/// Pooled intensity histogram of every image in `domain`.
pub fn pooled_histogram(domain: &DomainDataset) -> Histogram {
    let mut h = Histogram::default();
    for r in domain.records() {
        h.accumulate(&r.image.to_gray());
    }
    h
}

/// Histogram-matches the luma of each source image to the thermal domain.
///
/// By default every image is matched to the pooled histogram of `reference`;
/// with `per_image`, each image is matched to the reference image with the
/// same id, and ids without a counterpart are an error.
pub fn translate_histmatch(
    source: &DomainDataset,
    reference: &DomainDataset,
    per_image: bool,
) -> Result<DomainDataset> {
    let pooled = (!per_image).then(|| pooled_histogram(reference));
    if per_image {
        let pairing = pair_spectral(source, reference)?;
        if let Some(id) = pairing.unpaired_visible.first() {
            return Err(Error::MissingTranslation {
                dir: reference.name().into(),
                stem: id.clone(),
            });
        }
    }
    let records = source
        .records()
        .par_iter()
        .map(|r| {
            let hist = match &pooled {
                Some(h) => h.clone(),
                None => reference
                    .get(r.image_id())
                    .expect("paired above")
                    .image
                    .to_gray()
                    .histogram(),
            };
            let matched = histogram_match_to(&r.image.to_gray(), &hist);
            if let Some(w) = matched.warning {
                warn!("{}: {w}", r.image_id());
            }
            Record {
                image: Image::Gray(matched.image),
                annotations: r.annotations.clone(),
            }
        })
        .collect();
    Ok(DomainDataset::new(
        fake_thermal_name(source),
        records,
        source.labelled(),
    )?)
}
