//! Boxes, labelled objects and per-image annotation sets.
//!
//! Boxes use the continuous pixel convention: a box covers
//! `[xmin, xmax) x [ymin, ymax)` and its area is `(xmax - xmin) * (ymax - ymin)`.
//! The classic VOC `+1` convention is only available at scoring time through
//! [`crate::EvalParams::legacy_area`].

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub enum AnnotationError {
    /// `xmax <= xmin` or `ymax <= ymin`.
    DegenerateBox {
        xmin: f64,
        ymin: f64,
        xmax: f64,
        ymax: f64,
    },
    NegativeCoordinate,
    NonFinite,
    EmptyLabel,
    /// Object `index` of `image_id` extends past the `width x height` frame.
    OutOfFrame {
        image_id: String,
        index: usize,
    },
    ZeroSizedFrame {
        image_id: String,
    },
}

impl fmt::Display for AnnotationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DegenerateBox { xmin, ymin, xmax, ymax } => write!(
                f,
                "degenerate box [{xmin}, {ymin}, {xmax}, {ymax}]: requires xmax > xmin and ymax > ymin"
            ),
            Self::NegativeCoordinate => f.write_str("box coordinates must be non-negative"),
            Self::NonFinite => f.write_str("box coordinates must be finite"),
            Self::EmptyLabel => f.write_str("object class label is empty"),
            Self::OutOfFrame { image_id, index } => {
                write!(f, "object {index} of image '{image_id}' lies outside the image frame")
            }
            Self::ZeroSizedFrame { image_id } => {
                write!(f, "image '{image_id}' has a zero width or height")
            }
        }
    }
}

impl core::error::Error for AnnotationError {}

/// Axis-aligned box in pixel coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    xmin: f64,
    ymin: f64,
    xmax: f64,
    ymax: f64,
}

impl BoundingBox {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self, AnnotationError> {
        if ![xmin, ymin, xmax, ymax].iter().all(|v| v.is_finite()) {
            return Err(AnnotationError::NonFinite);
        }
        if xmax <= xmin || ymax <= ymin {
            return Err(AnnotationError::DegenerateBox {
                xmin,
                ymin,
                xmax,
                ymax,
            });
        }
        if xmin < 0.0 || ymin < 0.0 {
            return Err(AnnotationError::NegativeCoordinate);
        }
        Ok(Self {
            xmin,
            ymin,
            xmax,
            ymax,
        })
    }

    pub fn xmin(&self) -> f64 {
        self.xmin
    }

    pub fn ymin(&self) -> f64 {
        self.ymin
    }

    pub fn xmax(&self) -> f64 {
        self.xmax
    }

    pub fn ymax(&self) -> f64 {
        self.ymax
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.xmin, self.ymin, self.xmax, self.ymax]
    }

    /// True when the box fits inside a `width x height` frame.
    pub fn within(&self, width: u32, height: u32) -> bool {
        self.xmax <= f64::from(width) && self.ymax <= f64::from(height)
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = AnnotationError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.as_array()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub class_label: String,
    pub bbox: BoundingBox,
    pub difficult: bool,
}

impl ObjectInstance {
    pub fn new(
        class_label: impl Into<String>,
        bbox: BoundingBox,
        difficult: bool,
    ) -> Result<Self, AnnotationError> {
        let class_label = class_label.into();
        if class_label.is_empty() {
            return Err(AnnotationError::EmptyLabel);
        }
        Ok(Self {
            class_label,
            bbox,
            difficult,
        })
    }
}

/// All objects annotated on one image, in document order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAnnotationSet")]
pub struct AnnotationSet {
    image_id: String,
    width: u32,
    height: u32,
    objects: Vec<ObjectInstance>,
}

impl AnnotationSet {
    pub fn new(
        image_id: impl Into<String>,
        width: u32,
        height: u32,
        objects: Vec<ObjectInstance>,
    ) -> Result<Self, AnnotationError> {
        let image_id = image_id.into();
        if width == 0 || height == 0 {
            return Err(AnnotationError::ZeroSizedFrame { image_id });
        }
        for (index, obj) in objects.iter().enumerate() {
            if obj.class_label.is_empty() {
                return Err(AnnotationError::EmptyLabel);
            }
            if !obj.bbox.within(width, height) {
                return Err(AnnotationError::OutOfFrame { image_id, index });
            }
        }
        Ok(Self {
            image_id,
            width,
            height,
            objects,
        })
    }

    /// An annotation frame with no objects, as used by unlabelled domains.
    pub fn empty(
        image_id: impl Into<String>,
        width: u32,
        height: u32,
    ) -> Result<Self, AnnotationError> {
        Self::new(image_id, width, height, Vec::new())
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    /// Same objects and frame under a different image id.
    pub fn with_image_id(&self, image_id: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            ..self.clone()
        }
    }

    /// Drops every object, keeping the frame.
    pub fn without_objects(&self) -> Self {
        Self {
            objects: Vec::new(),
            ..self.clone()
        }
    }
}

#[derive(Deserialize)]
struct RawAnnotationSet {
    image_id: String,
    width: u32,
    height: u32,
    objects: Vec<ObjectInstance>,
}

impl TryFrom<RawAnnotationSet> for AnnotationSet {
    type Error = AnnotationError;

    fn try_from(raw: RawAnnotationSet) -> Result<Self, Self::Error> {
        Self::new(raw.image_id, raw.width, raw.height, raw.objects)
    }
}
