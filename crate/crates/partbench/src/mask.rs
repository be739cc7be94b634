//! Binary segmentation masks and their run-length encoding.
//!
//! The RLE follows the COCO convention: pixels are scanned in column-major
//! order and run lengths alternate background/foreground, starting with
//! background (so a mask whose first pixel is foreground starts with a zero
//! run). The packed string form of the COCO convention is accepted when
//! deserializing, but masks are always serialized as integer run lists.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MaskError {
    #[error("run lengths sum to {actual}, expected {expected}")]
    LengthMismatch { expected: u64, actual: u64 },
    #[error("mask dimensions {a:?} do not match {b:?}")]
    DimensionMismatch { a: (u32, u32), b: (u32, u32) },
    #[error("zero-length run at index {index} (only a single leading zero is allowed)")]
    InvalidRun { index: usize },
    #[error("mask must have at least one pixel, got {height}x{width}")]
    InvalidDimensions { height: u32, width: u32 },
    #[error("undecodable packed run-length string at byte {pos}")]
    BadPackedCounts { pos: usize },
}

/// Dense binary mask, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: u32,
    width: u32,
    data: Vec<bool>,
}

impl BinaryMask {
    /// Builds a mask from row-major pixel data of length `height * width`.
    pub fn new(height: u32, width: u32, data: Vec<bool>) -> Result<Self, MaskError> {
        if height == 0 || width == 0 {
            return Err(MaskError::InvalidDimensions { height, width });
        }
        let expected = height as u64 * width as u64;
        if data.len() as u64 != expected {
            return Err(MaskError::LengthMismatch {
                expected,
                actual: data.len() as u64,
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: u32, width: u32) -> Result<Self, MaskError> {
        Self::new(height, width, vec![false; (height * width) as usize])
    }

    /// Builds a mask by evaluating `f(row, col)` for every pixel.
    pub fn from_fn(
        height: u32,
        width: u32,
        mut f: impl FnMut(u32, u32) -> bool,
    ) -> Result<Self, MaskError> {
        if height == 0 || width == 0 {
            return Err(MaskError::InvalidDimensions { height, width });
        }
        let mut data = Vec::with_capacity((height * width) as usize);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.height, self.width)
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        self.data[(row * self.width + col) as usize]
    }

    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        self.data[(row * self.width + col) as usize] = value;
    }

    pub fn pixels(&self) -> &[bool] {
        &self.data
    }

    /// Number of foreground pixels.
    pub fn area(&self) -> u64 {
        self.data.iter().filter(|&&p| p).count() as u64
    }

    /// Tight axis-aligned bounding box `(x, y, w, h)`, or `None` for an
    /// empty mask. `x` is the column of the left edge, `y` the row of the
    /// top edge.
    pub fn bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let mut min_r = u32::MAX;
        let mut max_r = 0u32;
        let mut min_c = u32::MAX;
        let mut max_c = 0u32;
        let mut any = false;
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    any = true;
                    min_r = min_r.min(r);
                    max_r = max_r.max(r);
                    min_c = min_c.min(c);
                    max_c = max_c.max(c);
                }
            }
        }
        any.then(|| (min_c, min_r, max_c - min_c + 1, max_r - min_r + 1))
    }

    /// Pixelwise OR of two masks of identical dimensions.
    pub fn union(&self, other: &Self) -> Result<Self, MaskError> {
        check_dims(self, other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a || b)
            .collect();
        Self::new(self.height, self.width, data)
    }
}

fn check_dims(a: &BinaryMask, b: &BinaryMask) -> Result<(), MaskError> {
    if a.dims() != b.dims() {
        return Err(MaskError::DimensionMismatch {
            a: a.dims(),
            b: b.dims(),
        });
    }
    Ok(())
}

/// Intersection-over-union of two masks of identical dimensions.
///
/// Both masks empty counts as a perfect match (1.0); an empty mask against
/// a non-empty one scores 0.0.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MaskError> {
    check_dims(a, b)?;
    let mut inter = 0u64;
    let mut uni = 0u64;
    for (&pa, &pb) in a.data.iter().zip(&b.data) {
        inter += (pa && pb) as u64;
        uni += (pa || pb) as u64;
    }
    if uni == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / uni as f64)
}

/// Run-length-coded mask in the COCO column-major convention.
///
/// Validated on construction: runs sum to `height * width` and contain no
/// zero-length run except a single leading one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RleRepr", into = "RleRepr")]
pub struct MaskRle {
    height: u32,
    width: u32,
    counts: Vec<u32>,
}

impl MaskRle {
    pub fn new(height: u32, width: u32, counts: Vec<u32>) -> Result<Self, MaskError> {
        if height == 0 || width == 0 {
            return Err(MaskError::InvalidDimensions { height, width });
        }
        for (i, &c) in counts.iter().enumerate() {
            if c == 0 && i > 0 {
                return Err(MaskError::InvalidRun { index: i });
            }
        }
        let expected = height as u64 * width as u64;
        let actual: u64 = counts.iter().map(|&c| c as u64).sum();
        if actual != expected {
            return Err(MaskError::LengthMismatch { expected, actual });
        }
        Ok(Self {
            height,
            width,
            counts,
        })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.height, self.width)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Foreground pixel count, read off the odd-indexed runs.
    pub fn area(&self) -> u64 {
        self.counts
            .iter()
            .skip(1)
            .step_by(2)
            .map(|&c| c as u64)
            .sum()
    }
}

/// Encodes a dense mask into canonical RLE.
pub fn rle_encode(mask: &BinaryMask) -> MaskRle {
    let mut counts = Vec::new();
    let mut current = false; // runs start with background
    let mut run = 0u32;
    for c in 0..mask.width {
        for r in 0..mask.height {
            let p = mask.get(r, c);
            if p == current {
                run += 1;
            } else {
                counts.push(run);
                current = p;
                run = 1;
            }
        }
    }
    counts.push(run);
    MaskRle::new(mask.height, mask.width, counts).expect("encoder emits canonical runs")
}

/// Expands an RLE back into a dense mask. Inverse of [`rle_encode`].
pub fn rle_decode(rle: &MaskRle) -> BinaryMask {
    let mut mask = BinaryMask::zeros(rle.height, rle.width).expect("validated dims");
    let mut pos = 0u64;
    let mut fg = false;
    for &run in &rle.counts {
        if fg {
            for i in pos..pos + run as u64 {
                let col = (i / rle.height as u64) as u32;
                let row = (i % rle.height as u64) as u32;
                mask.set(row, col, true);
            }
        }
        pos += run as u64;
        fg = !fg;
    }
    mask
}

#[derive(Serialize, Deserialize)]
struct RleRepr {
    size: [u32; 2],
    counts: RleCounts,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RleCounts {
    Ints(Vec<u32>),
    Packed(String),
}

impl TryFrom<RleRepr> for MaskRle {
    type Error = MaskError;

    fn try_from(repr: RleRepr) -> Result<Self, MaskError> {
        let [height, width] = repr.size;
        let counts = match repr.counts {
            RleCounts::Ints(v) => v,
            RleCounts::Packed(s) => unpack_counts(&s)?,
        };
        MaskRle::new(height, width, counts)
    }
}

impl From<MaskRle> for RleRepr {
    fn from(rle: MaskRle) -> Self {
        RleRepr {
            size: [rle.height, rle.width],
            counts: RleCounts::Ints(rle.counts),
        }
    }
}

/// Decodes the packed ASCII run-length string of the COCO convention.
///
/// Values are little-endian base-32 digits offset by 48, with bit 5 as a
/// continuation flag and bit 4 of the final digit as the sign; every run
/// after the third is stored as a delta against the run two places back.
pub fn unpack_counts(s: &str) -> Result<Vec<u32>, MaskError> {
    let bytes = s.as_bytes();
    let mut counts: Vec<i64> = Vec::new();
    let mut p = 0usize;
    while p < bytes.len() {
        let mut x: i64 = 0;
        let mut k = 0u32;
        loop {
            if p >= bytes.len() || bytes[p] < 48 {
                return Err(MaskError::BadPackedCounts { pos: p });
            }
            let c = (bytes[p] - 48) as i64;
            x |= (c & 0x1f) << (5 * k);
            p += 1;
            k += 1;
            if c & 0x20 == 0 {
                if c & 0x10 != 0 {
                    x |= -1i64 << (5 * k);
                }
                break;
            }
        }
        if counts.len() > 2 {
            x += counts[counts.len() - 2];
        }
        counts.push(x);
    }
    counts
        .into_iter()
        .map(|c| u32::try_from(c).map_err(|_| MaskError::BadPackedCounts { pos: p }))
        .collect()
}

/// Packs integer runs into the COCO ASCII string form.
pub fn pack_counts(counts: &[u32]) -> String {
    let mut out = String::new();
    for (i, &c) in counts.iter().enumerate() {
        let mut x = c as i64;
        if i > 2 {
            x -= counts[i - 2] as i64;
        }
        loop {
            let mut digit = (x & 0x1f) as u8;
            x >>= 5;
            let more = if digit & 0x10 != 0 { x != -1 } else { x != 0 };
            if more {
                digit |= 0x20;
            }
            out.push((digit + 48) as char);
            if !more {
                break;
            }
        }
    }
    out
}
