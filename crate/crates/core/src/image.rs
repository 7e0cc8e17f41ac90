//! 8-bit raster images and the intensity transforms used to build fake
//! thermal source domains.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelCountMismatch {
    pub expected: usize,
    pub actual: usize,
}

impl fmt::Display for PixelCountMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "pixel buffer holds {} values, expected {}",
            self.actual, self.expected
        )
    }
}

impl core::error::Error for PixelCountMismatch {}

/// Single-channel 8-bit image, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn from_raw(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, PixelCountMismatch> {
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(PixelCountMismatch {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = value;
    }

    /// Count of pixels at each of the 256 levels.
    pub fn histogram(&self) -> Histogram {
        let mut h = Histogram::default();
        h.accumulate(self);
        h
    }
}

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RgbImage {
    width: u32,
    height: u32,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn from_raw(
        width: u32,
        height: u32,
        pixels: Vec<[u8; 3]>,
    ) -> Result<Self, PixelCountMismatch> {
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(PixelCountMismatch {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from interleaved `RGBRGB...` bytes.
    pub fn from_interleaved(
        width: u32,
        height: u32,
        bytes: &[u8],
    ) -> Result<Self, PixelCountMismatch> {
        let expected = width as usize * height as usize;
        if bytes.len() != expected * 3 {
            return Err(PixelCountMismatch {
                expected,
                actual: bytes.len() / 3,
            });
        }
        let pixels = bytes.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, value: [u8; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn interleaved(&self) -> Vec<u8> {
        self.pixels.iter().flatten().copied().collect()
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: [u8; 3]) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = value;
    }
}

/// A decoded domain image: visible domains hold RGB, thermal and fake
/// thermal domains hold single-channel images.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Image {
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl Image {
    pub fn width(&self) -> u32 {
        match self {
            Self::Gray(g) => g.width(),
            Self::Rgb(c) => c.width(),
        }
    }

    pub fn height(&self) -> u32 {
        match self {
            Self::Gray(g) => g.height(),
            Self::Rgb(c) => c.height(),
        }
    }

    pub fn as_gray(&self) -> Option<&GrayImage> {
        match self {
            Self::Gray(g) => Some(g),
            Self::Rgb(_) => None,
        }
    }

    /// Gray view of the image, converting RGB with [`to_grayscale`].
    pub fn to_gray(&self) -> GrayImage {
        match self {
            Self::Gray(g) => g.clone(),
            Self::Rgb(c) => to_grayscale(c),
        }
    }
}

impl From<GrayImage> for Image {
    fn from(g: GrayImage) -> Self {
        Self::Gray(g)
    }
}

impl From<RgbImage> for Image {
    fn from(c: RgbImage) -> Self {
        Self::Rgb(c)
    }
}

/// `255 - p` on every pixel.
pub fn intensity_invert(img: &GrayImage) -> GrayImage {
    GrayImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|&p| 255 - p).collect(),
    }
}

/// BT.601 luma of one pixel, rounded half up.
///
/// Computed in integer thousandths so `(v, v, v)` always maps to `v`.
pub fn luma(rgb: [u8; 3]) -> u8 {
    let [r, g, b] = rgb.map(u32::from);
    let scaled = 299 * r + 587 * g + 114 * b;
    ((scaled + 500) / 1000).min(255) as u8
}

pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    GrayImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|&p| luma(p)).collect(),
    }
}

/// Copies the gray channel into all three RGB channels.
pub fn replicate3(img: &GrayImage) -> RgbImage {
    RgbImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|&p| [p, p, p]).collect(),
    }
}

/// 256-bin intensity histogram. Bins are `u64` so histograms of whole
/// domains can be pooled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    bins: [u64; 256],
}

impl Default for Histogram {
    fn default() -> Self {
        Self { bins: [0; 256] }
    }
}

impl Histogram {
    pub fn accumulate(&mut self, img: &GrayImage) {
        for &p in &img.pixels {
            self.bins[p as usize] += 1;
        }
    }

    pub fn bins(&self) -> &[u64; 256] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    /// The single occupied level, if exactly one level is occupied.
    pub fn constant_level(&self) -> Option<u8> {
        let mut occupied = self.bins.iter().enumerate().filter(|(_, &c)| c > 0);
        let first = occupied.next()?;
        match occupied.next() {
            Some(_) => None,
            None => Some(first.0 as u8),
        }
    }

    fn cumulative(&self) -> [u64; 256] {
        let mut cdf = [0u64; 256];
        let mut acc = 0;
        for (c, &b) in cdf.iter_mut().zip(self.bins.iter()) {
            acc += b;
            *c = acc;
        }
        cdf
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistMatchWarning {
    /// Every reference pixel has this level, so the whole output collapses to it.
    ConstantReference(u8),
    /// The reference histogram is empty; the input is returned unchanged.
    EmptyReference,
}

impl fmt::Display for HistMatchWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ConstantReference(v) => {
                write!(
                    f,
                    "reference has the single intensity {v}; output is constant"
                )
            }
            Self::EmptyReference => {
                f.write_str("reference histogram is empty; input left unchanged")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistMatch {
    pub image: GrayImage,
    pub warning: Option<HistMatchWarning>,
}

/// Monotone lookup table sending each level of `source` to the smallest
/// reference level whose cumulative share reaches the source level's
/// cumulative share.
pub fn matching_lut(source: &Histogram, reference: &Histogram) -> [u8; 256] {
    let src_total = u128::from(source.total());
    let ref_total = u128::from(reference.total());
    let mut lut = [0u8; 256];
    if src_total == 0 || ref_total == 0 {
        for (i, v) in lut.iter_mut().enumerate() {
            *v = i as u8;
        }
        return lut;
    }
    let src_cdf = source.cumulative();
    let ref_cdf = reference.cumulative();
    let mut r = 0usize;
    for (level, slot) in lut.iter_mut().enumerate() {
        // src_cdf[level] / src_total <= ref_cdf[r] / ref_total, cross-multiplied.
        let need = u128::from(src_cdf[level]) * ref_total;
        while r < 255 && u128::from(ref_cdf[r]) * src_total < need {
            r += 1;
        }
        *slot = r as u8;
    }
    lut
}

/// Remaps `img` so its cumulative histogram follows `reference`.
pub fn histogram_match_to(img: &GrayImage, reference: &Histogram) -> HistMatch {
    let warning = if reference.total() == 0 {
        Some(HistMatchWarning::EmptyReference)
    } else {
        reference
            .constant_level()
            .map(HistMatchWarning::ConstantReference)
    };
    let lut = matching_lut(&img.histogram(), reference);
    let pixels = img.pixels.iter().map(|&p| lut[p as usize]).collect();
    HistMatch {
        image: GrayImage {
            width: img.width,
            height: img.height,
            pixels,
        },
        warning,
    }
}

pub fn histogram_match(img: &GrayImage, reference: &GrayImage) -> HistMatch {
    histogram_match_to(img, &reference.histogram())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(w: u32, h: u32, px: &[u8]) -> GrayImage {
        GrayImage::from_raw(w, h, px.to_vec()).unwrap()
    }

    #[test]
    fn inversion_endpoints() {
        let img = gray(3, 1, &[0, 100, 255]);
        assert_eq!(intensity_invert(&img).pixels(), &[255, 155, 0]);
    }

    #[test]
    fn luma_values() {
        // 0.299 * 255 = 76.245
        assert_eq!(luma([255, 0, 0]), 76);
        // 0.587 * 255 = 149.685, 0.114 * 255 = 29.07
        assert_eq!(luma([0, 255, 0]), 150);
        assert_eq!(luma([0, 0, 255]), 29);
        assert_eq!(luma([0, 0, 0]), 0);
        for v in 0..=255u8 {
            assert_eq!(luma([v, v, v]), v);
        }
    }

    #[test]
    fn luma_rounds_half_up() {
        // 0.114 * 250 = 28.5 exactly
        assert_eq!(luma([0, 0, 250]), 29);
        // 0.299 * 5 = 1.495
        assert_eq!(luma([5, 0, 0]), 1);
    }

    #[test]
    fn pixel_count_checked() {
        assert_eq!(
            GrayImage::from_raw(2, 2, vec![0; 3]),
            Err(PixelCountMismatch {
                expected: 4,
                actual: 3
            })
        );
    }

    #[test]
    fn histmatch_self_is_identity() {
        let img = gray(4, 2, &[3, 3, 10, 50, 50, 50, 200, 201]);
        let out = histogram_match(&img, &img);
        assert_eq!(out.image, img);
        assert_eq!(out.warning, None);
    }

    #[test]
    fn histmatch_constant_reference() {
        let img = GrayImage::filled(5, 5, 10);
        let reference = GrayImage::filled(3, 3, 200);
        let out = histogram_match(&img, &reference);
        assert!(out.image.pixels().iter().all(|&p| p == 200));
        assert_eq!(out.warning, Some(HistMatchWarning::ConstantReference(200)));
    }

    #[test]
    fn histmatch_two_levels() {
        let img = gray(4, 1, &[0, 255, 0, 255]);
        let reference = gray(2, 2, &[100, 200, 200, 100]);
        let out = histogram_match(&img, &reference);
        assert_eq!(out.image.pixels(), &[100, 200, 100, 200]);
    }

    /// Brute-force CDF matching: for each occupied source level, scan every
    /// reference level from 0 with rational comparisons.
    fn brute_match_level(src: &GrayImage, reference: &GrayImage, level: u8) -> u8 {
        let n_src = src.pixels().len() as u64;
        let n_ref = reference.pixels().len() as u64;
        let src_le = src.pixels().iter().filter(|&&p| p <= level).count() as u64;
        for r in 0..=255u8 {
            let ref_le = reference.pixels().iter().filter(|&&p| p <= r).count() as u64;
            if ref_le * n_src >= src_le * n_ref {
                return r;
            }
        }
        255
    }

    fn arb_gray(max_side: u32) -> impl Strategy<Value = GrayImage> {
        (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), (w * h) as usize)
                .prop_map(move |px| GrayImage::from_raw(w, h, px).unwrap())
        })
    }

    proptest! {
        #[test]
        fn inversion_is_involution(img in arb_gray(24)) {
            prop_assert_eq!(intensity_invert(&intensity_invert(&img)), img);
        }

        #[test]
        fn inversion_reverses_histogram(img in arb_gray(24)) {
            let h = img.histogram();
            let hi = intensity_invert(&img).histogram();
            for k in 0..256 {
                prop_assert_eq!(hi.bins()[k], h.bins()[255 - k]);
            }
        }

        #[test]
        fn grayscale_stable_through_replication(
            px in proptest::collection::vec(any::<[u8; 3]>(), 12)
        ) {
            let rgb = RgbImage::from_raw(4, 3, px).unwrap();
            let g = to_grayscale(&rgb);
            prop_assert_eq!(to_grayscale(&replicate3(&g)), g);
        }

        #[test]
        fn histmatch_is_monotone_and_matches_brute_force(
            img in arb_gray(12), reference in arb_gray(12)
        ) {
            let out = histogram_match(&img, &reference).image;
            prop_assert_eq!(out.width(), img.width());
            prop_assert_eq!(out.height(), img.height());
            for (i, &p) in img.pixels().iter().enumerate() {
                for (j, &q) in img.pixels().iter().enumerate() {
                    if p <= q {
                        prop_assert!(out.pixels()[i] <= out.pixels()[j]);
                    }
                }
                prop_assert_eq!(out.pixels()[i], brute_match_level(&img, &reference, p));
            }
        }
    }
}
