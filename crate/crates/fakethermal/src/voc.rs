//! PASCAL VOC style annotation XML.
//!
//! Only `filename`, `size/{width,height}` and `object/{name,difficult,bndbox}`
//! are read; every other element is skipped. The image id is the filename
//! without its extension.

use std::fmt::Write as _;

use fakethermal_core::{AnnotationError, AnnotationSet, BoundingBox, ObjectInstance};
use roxmltree::{Document, Node};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum VocError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("missing required element <{0}>")]
    MissingField(String),
    #[error("element <{field}> holds '{value}', expected a number")]
    InvalidNumber { field: String, value: String },
    #[error("degenerate box [{xmin}, {ymin}, {xmax}, {ymax}]")]
    DegenerateBox {
        xmin: f64,
        ymin: f64,
        xmax: f64,
        ymax: f64,
    },
    #[error(transparent)]
    Annotation(AnnotationError),
}

impl From<AnnotationError> for VocError {
    fn from(e: AnnotationError) -> Self {
        match e {
            AnnotationError::DegenerateBox {
                xmin,
                ymin,
                xmax,
                ymax,
            } => Self::DegenerateBox {
                xmin,
                ymin,
                xmax,
                ymax,
            },
            other => Self::Annotation(other),
        }
    }
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children()
        .find(|c| c.is_element() && c.tag_name().name() == name)
}

fn required<'a, 'i>(node: Node<'a, 'i>, name: &str, path: &str) -> Result<Node<'a, 'i>, VocError> {
    child(node, name).ok_or_else(|| VocError::MissingField(format!("{path}{name}")))
}

fn text_of(node: Node<'_, '_>) -> String {
    node.text().unwrap_or("").trim().to_string()
}

fn number<T: std::str::FromStr>(node: Node<'_, '_>, field: &str) -> Result<T, VocError> {
    let value = text_of(node);
    value.parse().map_err(|_| VocError::InvalidNumber {
        field: field.into(),
        value,
    })
}

/// Strips the final extension from a VOC `filename`.
pub fn image_id_from_filename(filename: &str) -> &str {
    match filename.rfind('.') {
        Some(i) if i > 0 => &filename[..i],
        _ => filename,
    }
}

pub fn parse_voc_annotation(xml: &str) -> Result<AnnotationSet, VocError> {
    let doc = Document::parse(xml).map_err(|e| VocError::MalformedXml(e.to_string()))?;
    let root = doc.root_element();
    let filename = text_of(required(root, "filename", "")?);
    let size = required(root, "size", "")?;
    let width: u32 = number(required(size, "width", "size/")?, "width")?;
    let height: u32 = number(required(size, "height", "size/")?, "height")?;

    let mut objects = Vec::new();
    for obj in root
        .children()
        .filter(|c| c.is_element() && c.tag_name().name() == "object")
    {
        let name = text_of(required(obj, "name", "object/")?);
        let difficult = match child(obj, "difficult") {
            Some(d) => number::<u8>(d, "difficult")? != 0,
            None => false,
        };
        let bndbox = required(obj, "bndbox", "object/")?;
        let mut coords = [0f64; 4];
        for (slot, field) in coords.iter_mut().zip(["xmin", "ymin", "xmax", "ymax"]) {
            *slot = number(required(bndbox, field, "object/bndbox/")?, field)?;
        }
        let [xmin, ymin, xmax, ymax] = coords;
        let bbox = BoundingBox::new(xmin, ymin, xmax, ymax)?;
        objects.push(ObjectInstance::new(name, bbox, difficult)?);
    }
    Ok(AnnotationSet::new(
        image_id_from_filename(&filename),
        width,
        height,
        objects,
    )?)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Writes `ann` as VOC XML with `<depth>` set to `depth` (1 for gray, 3 for RGB).
pub fn serialize_voc_annotation_with_depth(ann: &AnnotationSet, depth: u8) -> String {
    let mut s = String::new();
    s.push_str("<annotation>\n");
    let _ = writeln!(s, "  <filename>{}.png</filename>", escape(ann.image_id()));
    s.push_str("  <size>\n");
    let _ = writeln!(s, "    <width>{}</width>", ann.width());
    let _ = writeln!(s, "    <height>{}</height>", ann.height());
    let _ = writeln!(s, "    <depth>{depth}</depth>");
    s.push_str("  </size>\n");
    for o in ann.objects() {
        let b = &o.bbox;
        s.push_str("  <object>\n");
        let _ = writeln!(s, "    <name>{}</name>", escape(&o.class_label));
        let _ = writeln!(s, "    <difficult>{}</difficult>", u8::from(o.difficult));
        s.push_str("    <bndbox>\n");
        // `{}` on f64 prints the shortest representation that parses back exactly.
        let _ = writeln!(s, "      <xmin>{}</xmin>", b.xmin());
        let _ = writeln!(s, "      <ymin>{}</ymin>", b.ymin());
        let _ = writeln!(s, "      <xmax>{}</xmax>", b.xmax());
        let _ = writeln!(s, "      <ymax>{}</ymax>", b.ymax());
        s.push_str("    </bndbox>\n");
        s.push_str("  </object>\n");
    }
    s.push_str("</annotation>\n");
    s
}

pub fn serialize_voc_annotation(ann: &AnnotationSet) -> String {
    serialize_voc_annotation_with_depth(ann, 3)
}
