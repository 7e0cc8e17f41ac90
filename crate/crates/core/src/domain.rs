//! Image domains (source, renewed source, target) and the operations that
//! combine them.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::geometry::AnnotationSet;
use crate::image::{intensity_invert, GrayImage, Image};

/// Suffix appended to the ids of inverted copies in a renewed source domain.
pub const INVERTED_SUFFIX: &str = "_inv";

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetError {
    DuplicateId(String),
    /// An unlabelled domain was given a record with objects.
    LabelsOnUnlabelled(String),
    /// A record's image size disagrees with its annotation frame.
    DimensionMismatch {
        image_id: String,
        image: (u32, u32),
        annotation: (u32, u32),
    },
    /// Two records of the renewed domain would share an id.
    IdCollision(String),
    NotGray(String),
    NotLabelled(String),
    EmptyIntersection,
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateId(id) => write!(f, "duplicate image id '{id}'"),
            Self::LabelsOnUnlabelled(id) => {
                write!(
                    f,
                    "record '{id}' carries objects but the domain is unlabelled"
                )
            }
            Self::DimensionMismatch {
                image_id,
                image,
                annotation,
            } => write!(
                f,
                "image '{image_id}' is {}x{} but its annotation frame is {}x{}",
                image.0, image.1, annotation.0, annotation.1
            ),
            Self::IdCollision(id) => write!(f, "renewed domain id collision on '{id}'"),
            Self::NotGray(id) => write!(f, "image '{id}' is not single-channel"),
            Self::NotLabelled(name) => write!(f, "domain '{name}' is not labelled"),
            Self::EmptyIntersection => f.write_str("the two domains share no image ids"),
        }
    }
}

impl core::error::Error for DatasetError {}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub image: Image,
    pub annotations: AnnotationSet,
}

impl Record {
    pub fn new(image: Image, annotations: AnnotationSet) -> Result<Self, DatasetError> {
        let dims = (image.width(), image.height());
        let frame = (annotations.width(), annotations.height());
        if dims != frame {
            return Err(DatasetError::DimensionMismatch {
                image_id: annotations.image_id().into(),
                image: dims,
                annotation: frame,
            });
        }
        Ok(Self { image, annotations })
    }

    pub fn image_id(&self) -> &str {
        self.annotations.image_id()
    }
}

/// A named set of images with per-image annotations, sorted by image id.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    name: String,
    records: Vec<Record>,
    labelled: bool,
}

impl DomainDataset {
    /// Sorts `records` by image id and checks the domain invariants.
    pub fn new(
        name: impl Into<String>,
        mut records: Vec<Record>,
        labelled: bool,
    ) -> Result<Self, DatasetError> {
        records.sort_by(|a, b| a.image_id().cmp(b.image_id()));
        for pair in records.windows(2) {
            if pair[0].image_id() == pair[1].image_id() {
                return Err(DatasetError::DuplicateId(pair[0].image_id().into()));
            }
        }
        if !labelled {
            if let Some(r) = records.iter().find(|r| !r.annotations.objects().is_empty()) {
                return Err(DatasetError::LabelsOnUnlabelled(r.image_id().into()));
            }
        }
        Ok(Self {
            name: name.into(),
            records,
            labelled,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn labelled(&self) -> bool {
        self.labelled
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(Record::image_id)
    }

    pub fn get(&self, image_id: &str) -> Option<&Record> {
        self.records
            .binary_search_by(|r| r.image_id().cmp(image_id))
            .ok()
            .map(|i| &self.records[i])
    }

    /// Same images with every annotation list emptied.
    pub fn unlabelled(&self) -> Self {
        let records = self
            .records
            .iter()
            .map(|r| Record {
                image: r.image.clone(),
                annotations: r.annotations.without_objects(),
            })
            .collect();
        Self {
            name: self.name.clone(),
            records,
            labelled: false,
        }
    }

    /// Records whose id is in `ids`, keeping the domain name and label flag.
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Self {
        let keep: BTreeMap<&str, ()> = ids.into_iter().map(|id| (id, ())).collect();
        let records = self
            .records
            .iter()
            .filter(|r| keep.contains_key(r.image_id()))
            .cloned()
            .collect();
        Self {
            name: self.name.clone(),
            records,
            labelled: self.labelled,
        }
    }

    /// Applies `f` to every image, keeping annotations.
    pub fn map_images<F>(&self, name: impl Into<String>, mut f: F) -> Result<Self, DatasetError>
    where
        F: FnMut(&Record) -> Image,
    {
        let records = self
            .records
            .iter()
            .map(|r| Record::new(f(r), r.annotations.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(name, records, self.labelled)
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }
}

/// Result of pairing two spectra of the same capture set by image id.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPairing<'a> {
    pub pairs: Vec<(&'a Record, &'a Record)>,
    pub unpaired_visible: Vec<String>,
    pub unpaired_thermal: Vec<String>,
}

pub fn pair_spectral<'a>(
    visible: &'a DomainDataset,
    thermal: &'a DomainDataset,
) -> Result<SpectralPairing<'a>, DatasetError> {
    let mut pairs = Vec::new();
    let mut unpaired_visible = Vec::new();
    let mut unpaired_thermal = Vec::new();
    let (a, b) = (visible.records(), thermal.records());
    let (mut i, mut j) = (0, 0);
    // Both sides are sorted by id.
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(v), Some(t)) => match v.image_id().cmp(t.image_id()) {
                core::cmp::Ordering::Equal => {
                    pairs.push((v, t));
                    i += 1;
                    j += 1;
                }
                core::cmp::Ordering::Less => {
                    unpaired_visible.push(v.image_id().into());
                    i += 1;
                }
                core::cmp::Ordering::Greater => {
                    unpaired_thermal.push(t.image_id().into());
                    j += 1;
                }
            },
            (Some(v), None) => {
                unpaired_visible.push(v.image_id().into());
                i += 1;
            }
            (None, Some(t)) => {
                unpaired_thermal.push(t.image_id().into());
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    if pairs.is_empty() {
        return Err(DatasetError::EmptyIntersection);
    }
    Ok(SpectralPairing {
        pairs,
        unpaired_visible,
        unpaired_thermal,
    })
}

/// Union of a fake thermal domain and its intensity-inverted copy.
///
/// Every record `x` gains a twin `x_inv` whose image is `255 - p` per pixel
/// and whose annotation set is a copy of `x`'s under the new id.
pub fn build_renewed_source(fake_thermal: &DomainDataset) -> Result<DomainDataset, DatasetError> {
    if !fake_thermal.labelled() {
        return Err(DatasetError::NotLabelled(fake_thermal.name().into()));
    }
    let mut records = Vec::with_capacity(fake_thermal.len() * 2);
    for r in fake_thermal.records() {
        let gray: &GrayImage = r
            .image
            .as_gray()
            .ok_or_else(|| DatasetError::NotGray(r.image_id().into()))?;
        let inv_id = format!("{}{}", r.image_id(), INVERTED_SUFFIX);
        if fake_thermal.get(&inv_id).is_some() {
            return Err(DatasetError::IdCollision(inv_id));
        }
        records.push(r.clone());
        records.push(Record {
            image: Image::Gray(intensity_invert(gray)),
            annotations: r.annotations.with_image_id(inv_id),
        });
    }
    DomainDataset::new(format!("{}_renewed", fake_thermal.name()), records, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundingBox, ObjectInstance};
    use alloc::string::ToString;
    use alloc::vec;

    fn rec(id: &str, objects: usize) -> Record {
        let objs = (0..objects)
            .map(|i| {
                let x = i as f64;
                ObjectInstance::new(
                    "car",
                    BoundingBox::new(x, 0.0, x + 1.0, 2.0).unwrap(),
                    false,
                )
                .unwrap()
            })
            .collect();
        Record::new(
            Image::Gray(GrayImage::filled(8, 4, 40)),
            AnnotationSet::new(id, 8, 4, objs).unwrap(),
        )
        .unwrap()
    }

    fn domain(ids: &[&str], labelled: bool) -> DomainDataset {
        let n = usize::from(labelled);
        DomainDataset::new("d", ids.iter().map(|id| rec(id, n)).collect(), labelled).unwrap()
    }

    #[test]
    fn records_sorted_and_unique() {
        let d = domain(&["c", "a", "b"], true);
        assert_eq!(d.ids().collect::<Vec<_>>(), ["a", "b", "c"]);
        let dup = DomainDataset::new("d", vec![rec("a", 0), rec("a", 0)], true);
        assert_eq!(dup, Err(DatasetError::DuplicateId("a".into())));
    }

    #[test]
    fn unlabelled_domain_rejects_objects() {
        let err = DomainDataset::new("t", vec![rec("a", 1)], false).unwrap_err();
        assert_eq!(err, DatasetError::LabelsOnUnlabelled("a".into()));
    }

    #[test]
    fn pairing_reports_unpaired() {
        let v = domain(&["a", "b", "c"], true);
        let t = domain(&["b", "c", "d"], false);
        let p = pair_spectral(&v, &t).unwrap();
        let ids: Vec<_> = p
            .pairs
            .iter()
            .map(|(a, b)| (a.image_id(), b.image_id()))
            .collect();
        assert_eq!(ids, [("b", "b"), ("c", "c")]);
        assert_eq!(p.unpaired_visible, ["a"]);
        assert_eq!(p.unpaired_thermal, ["d"]);
    }

    #[test]
    fn pairing_identical_and_disjoint() {
        let v = domain(&["a", "b", "c", "d"], true);
        assert_eq!(pair_spectral(&v, &v).unwrap().pairs.len(), 4);
        let t = domain(&["x", "y"], false);
        assert_eq!(pair_spectral(&v, &t), Err(DatasetError::EmptyIntersection));
    }

    #[test]
    fn renewed_source_doubles() {
        let d = domain(&["a", "b", "c"], true);
        let renewed = build_renewed_source(&d).unwrap();
        assert_eq!(renewed.len(), 6);
        for r in d.records() {
            let twin = renewed.get(&(r.image_id().to_string() + "_inv")).unwrap();
            assert_eq!(twin.annotations.objects(), r.annotations.objects());
            assert_eq!(twin.image.as_gray().unwrap().pixels()[0], 215);
            assert_eq!(renewed.get(r.image_id()).unwrap(), r);
        }
    }

    #[test]
    fn renewed_source_empty() {
        let d = domain(&[], true);
        assert!(build_renewed_source(&d).unwrap().is_empty());
    }

    #[test]
    fn renewed_source_collision() {
        let d = domain(&["a", "a_inv"], true);
        assert_eq!(
            build_renewed_source(&d),
            Err(DatasetError::IdCollision("a_inv".into()))
        );
    }

    #[test]
    fn renewed_source_requires_gray() {
        let r = Record::new(
            Image::Rgb(crate::image::RgbImage::filled(8, 4, [1, 2, 3])),
            AnnotationSet::empty("a", 8, 4).unwrap(),
        )
        .unwrap();
        let d = DomainDataset::new("v", vec![r], true).unwrap();
        assert_eq!(
            build_renewed_source(&d),
            Err(DatasetError::NotGray("a".into()))
        );
    }
}
