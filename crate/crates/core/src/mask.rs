//! Binary-mask value types and the exact pixel-set kernels everything else
//! is built on: IoU, boolean set algebra, connected components, bounding
//! boxes, morphology, translation, and the RLE codec.
//!
//! Masks are bit-packed row-major, one padded strip of `u64` words per row,
//! so set algebra and area counting run wordwise. Unused tail bits of each
//! row strip are kept zero at all times.

use std::fmt;

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

/// Pixel connectivity for component extraction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Connectivity {
    #[default]
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

/// A dense binary segmentation mask.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BinaryMask({}x{}, {} px)",
            self.width,
            self.height,
            self.count()
        )
    }
}

impl BinaryMask {
    /// All-zero mask. Panics if either dimension is zero.
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "mask dimensions must be >= 1");
        let words_per_row = width.div_ceil(WORD_BITS);
        BinaryMask {
            width,
            height,
            words_per_row,
            words: vec![0; words_per_row * height],
        }
    }

    /// All-one mask.
    pub fn filled(width: usize, height: usize) -> Self {
        let mut m = Self::new(width, height);
        for row in 0..height {
            let strip = m.row_mut(row);
            for w in strip.iter_mut() {
                *w = u64::MAX;
            }
        }
        m.mask_row_tails();
        m
    }

    /// Build a mask from a per-pixel predicate over (row, col), evaluated
    /// in row-major order.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for r in 0..height {
            for c in 0..width {
                if f(r, c) {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// (width, height)
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    fn row(&self, r: usize) -> &[u64] {
        &self.words[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    #[inline]
    fn row_mut(&mut self, r: usize) -> &mut [u64] {
        &mut self.words[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    /// Bits above `width` in the last word of each row strip must stay zero.
    fn tail_mask(&self) -> u64 {
        let rem = self.width % WORD_BITS;
        if rem == 0 {
            u64::MAX
        } else {
            (1u64 << rem) - 1
        }
    }

    fn mask_row_tails(&mut self) {
        let tail = self.tail_mask();
        let wpr = self.words_per_row;
        for r in 0..self.height {
            self.words[r * wpr + wpr - 1] &= tail;
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.height && col < self.width);
        let w = self.words[row * self.words_per_row + col / WORD_BITS];
        (w >> (col % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        assert!(row < self.height && col < self.width, "pixel out of bounds");
        let idx = row * self.words_per_row + col / WORD_BITS;
        let bit = 1u64 << (col % WORD_BITS);
        if value {
            self.words[idx] |= bit;
        } else {
            self.words[idx] &= !bit;
        }
    }

    /// Number of set pixels.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    fn check_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                lhs: self.dims(),
                rhs: other.dims(),
            });
        }
        Ok(())
    }

    /// Pixelwise OR.
    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (o, w) in out.words.iter_mut().zip(&other.words) {
            *o |= w;
        }
        Ok(out)
    }

    /// Pixelwise AND.
    pub fn intersect(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (o, w) in out.words.iter_mut().zip(&other.words) {
            *o &= w;
        }
        Ok(out)
    }

    /// Pixelwise AND-NOT (pixels of `self` not in `other`).
    pub fn subtract(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (o, w) in out.words.iter_mut().zip(&other.words) {
            *o &= !w;
        }
        Ok(out)
    }

    /// Pixelwise NOT.
    pub fn complement(&self) -> BinaryMask {
        let mut out = self.clone();
        for w in out.words.iter_mut() {
            *w = !*w;
        }
        out.mask_row_tails();
        out
    }

    /// |a ∩ b| / |a ∪ b|. Two empty masks agree perfectly: 1.0.
    pub fn iou(&self, other: &BinaryMask) -> Result<f64> {
        self.check_dims(other)?;
        let mut inter = 0u64;
        let mut uni = 0u64;
        for (a, b) in self.words.iter().zip(&other.words) {
            inter += (a & b).count_ones() as u64;
            uni += (a | b).count_ones() as u64;
        }
        if uni == 0 {
            Ok(1.0)
        } else {
            Ok(inter as f64 / uni as f64)
        }
    }

    /// Intersection pixel count without allocating.
    pub fn intersection_count(&self, other: &BinaryMask) -> Result<usize> {
        self.check_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum())
    }

    /// Shift by (`dr`, `dc`) pixels; pixels shifted past the border are lost,
    /// vacated pixels are zero.
    pub fn translate(&self, dr: isize, dc: isize) -> BinaryMask {
        let mut out = BinaryMask::new(self.width, self.height);
        out.or_translated(self, dr, dc);
        out
    }

    /// `self |= translate(src, dr, dc)`; dimensions must already match.
    fn or_translated(&mut self, src: &BinaryMask, dr: isize, dc: isize) {
        debug_assert_eq!(self.dims(), src.dims());
        let h = self.height as isize;
        let wpr = self.words_per_row;
        let mut shifted = vec![0u64; wpr];
        for dst_row in 0..h {
            let src_row = dst_row - dr;
            if src_row < 0 || src_row >= h {
                continue;
            }
            shift_row(src.row(src_row as usize), &mut shifted, dc);
            let dst = self.row_mut(dst_row as usize);
            for (d, s) in dst.iter_mut().zip(&shifted) {
                *d |= s;
            }
        }
        self.mask_row_tails();
    }

    /// `self &= translate(src, dr, dc)` with zero fill outside the border.
    fn and_translated(&mut self, src: &BinaryMask, dr: isize, dc: isize) {
        debug_assert_eq!(self.dims(), src.dims());
        let h = self.height as isize;
        let wpr = self.words_per_row;
        let mut shifted = vec![0u64; wpr];
        for dst_row in 0..h {
            let src_row = dst_row - dr;
            let dst = self.row_mut(dst_row as usize);
            if src_row < 0 || src_row >= h {
                dst.iter_mut().for_each(|w| *w = 0);
                continue;
            }
            shift_row(src.row(src_row as usize), &mut shifted, dc);
            for (d, s) in dst.iter_mut().zip(&shifted) {
                *d &= s;
            }
        }
        self.mask_row_tails();
    }

    /// Dilation by a Euclidean disk of the given radius.
    pub fn dilate(&self, radius: usize) -> BinaryMask {
        if radius == 0 {
            return self.clone();
        }
        let mut out = BinaryMask::new(self.width, self.height);
        for &(dr, dc) in disk_offsets(radius).iter() {
            out.or_translated(self, dr, dc);
        }
        out
    }

    /// Erosion by a Euclidean disk; pixels beyond the border count as zero,
    /// so the mask shrinks at image edges.
    pub fn erode(&self, radius: usize) -> BinaryMask {
        if radius == 0 {
            return self.clone();
        }
        let mut out = BinaryMask::filled(self.width, self.height);
        for &(dr, dc) in disk_offsets(radius).iter() {
            out.and_translated(self, dr, dc);
        }
        out
    }

    /// Tightest box covering all set pixels; `None` for an empty mask.
    pub fn bounding_box(&self) -> Option<BBox> {
        let wpr = self.words_per_row;
        let mut row_min = None;
        let mut row_max = 0;
        let mut col_or = vec![0u64; wpr];
        for r in 0..self.height {
            let strip = self.row(r);
            if strip.iter().any(|&w| w != 0) {
                if row_min.is_none() {
                    row_min = Some(r);
                }
                row_max = r;
                for (acc, w) in col_or.iter_mut().zip(strip) {
                    *acc |= w;
                }
            }
        }
        let row_min = row_min?;
        let col_min = col_or
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 0)
            .map(|(i, w)| i * WORD_BITS + w.trailing_zeros() as usize)
            .unwrap();
        let col_max = col_or
            .iter()
            .enumerate()
            .rev()
            .find(|(_, &w)| w != 0)
            .map(|(i, w)| i * WORD_BITS + (WORD_BITS - 1 - w.leading_zeros() as usize))
            .unwrap();
        Some(BBox {
            row_min,
            col_min,
            row_max,
            col_max,
        })
    }

    /// Connected component with the largest pixel count. Empty input gives an
    /// empty output. Ties go to the component containing the smallest
    /// row-major pixel index, which the row-major scan yields for free.
    pub fn largest_connected_component(&self, connectivity: Connectivity) -> BinaryMask {
        let mut visited = BinaryMask::new(self.width, self.height);
        let mut best: Vec<(usize, usize)> = Vec::new();
        let mut current: Vec<(usize, usize)> = Vec::new();
        let mut stack: Vec<(usize, usize)> = Vec::new();
        let offsets = connectivity.offsets();

        for r in 0..self.height {
            let strip = self.row(r);
            if strip.iter().all(|&w| w == 0) {
                continue;
            }
            for c in 0..self.width {
                if !self.get(r, c) || visited.get(r, c) {
                    continue;
                }
                current.clear();
                stack.push((r, c));
                visited.set(r, c, true);
                while let Some((pr, pc)) = stack.pop() {
                    current.push((pr, pc));
                    for &(dr, dc) in offsets {
                        let nr = pr as isize + dr;
                        let nc = pc as isize + dc;
                        if nr < 0
                            || nc < 0
                            || nr >= self.height as isize
                            || nc >= self.width as isize
                        {
                            continue;
                        }
                        let (nr, nc) = (nr as usize, nc as usize);
                        if self.get(nr, nc) && !visited.get(nr, nc) {
                            visited.set(nr, nc, true);
                            stack.push((nr, nc));
                        }
                    }
                }
                if current.len() > best.len() {
                    std::mem::swap(&mut best, &mut current);
                }
            }
        }

        let mut out = BinaryMask::new(self.width, self.height);
        for &(pr, pc) in &best {
            out.set(pr, pc, true);
        }
        out
    }

    /// Set-pixel coordinates in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height)
            .flat_map(move |r| (0..self.width).map(move |c| (r, c)))
            .filter(move |&(r, c)| self.get(r, c))
    }
}

/// Shift one row strip by `dc` columns (positive = toward higher columns),
/// zero-filling. `dst` must have the strip length.
fn shift_row(src: &[u64], dst: &mut [u64], dc: isize) {
    let n = src.len();
    if dc == 0 {
        dst.copy_from_slice(src);
        return;
    }
    let shift = dc.unsigned_abs();
    let q = shift / WORD_BITS;
    let s = shift % WORD_BITS;
    if dc > 0 {
        for i in (0..n).rev() {
            let lo = if i >= q { src[i - q] } else { 0 };
            let carry = if s > 0 && i >= q + 1 {
                src[i - q - 1] >> (WORD_BITS - s)
            } else {
                0
            };
            dst[i] = if s == 0 { lo } else { (lo << s) | carry };
        }
    } else {
        for i in 0..n {
            let lo = if i + q < n { src[i + q] } else { 0 };
            let carry = if s > 0 && i + q + 1 < n {
                src[i + q + 1] << (WORD_BITS - s)
            } else {
                0
            };
            dst[i] = if s == 0 { lo } else { (lo >> s) | carry };
        }
    }
}

/// Offsets (dr, dc) with dr² + dc² ≤ radius².
fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let r2 = r * r;
    let mut out = Vec::new();
    for dr in -r..=r {
        for dc in -r..=r {
            if dr * dr + dc * dc <= r2 {
                out.push((dr, dc));
            }
        }
    }
    out
}

/// Inclusive pixel-index bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BBox {
    pub row_min: usize,
    pub col_min: usize,
    pub row_max: usize,
    pub col_max: usize,
}

impl BBox {
    /// Pixel area with inclusive extents.
    pub fn area(&self) -> usize {
        (self.row_max - self.row_min + 1) * (self.col_max - self.col_min + 1)
    }

    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        let row_min = self.row_min.max(other.row_min);
        let col_min = self.col_min.max(other.col_min);
        let row_max = self.row_max.min(other.row_max);
        let col_max = self.col_max.min(other.col_max);
        if row_min > row_max || col_min > col_max {
            None
        } else {
            Some(BBox {
                row_min,
                col_min,
                row_max,
                col_max,
            })
        }
    }
}

/// area(inner ∩ outer) / area(outer), inclusive pixel extents.
pub fn bbox_overlap_ratio(inner: &BBox, outer: &BBox) -> f64 {
    let inter = match inner.intersect(outer) {
        Some(b) => b.area(),
        None => 0,
    };
    inter as f64 / outer.area() as f64
}

/// Run-length encoded mask: alternating run lengths over the row-major pixel
/// stream, first run counting zeros (may be 0), later runs strictly positive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RleMask {
    pub width: usize,
    pub height: usize,
    pub runs: Vec<u32>,
}

impl RleMask {
    fn validate(&self) -> Result<()> {
        let total: u64 = self.runs.iter().map(|&r| r as u64).sum();
        let expect = (self.width * self.height) as u64;
        if total != expect {
            return Err(Error::InvalidRle(format!(
                "run sum {total} != {}x{} = {expect}",
                self.width, self.height
            )));
        }
        if self.runs.iter().skip(1).any(|&r| r == 0) {
            return Err(Error::InvalidRle(
                "zero-length run after the first".to_string(),
            ));
        }
        Ok(())
    }

    /// `W H r0 r1 r2 ...`, decimal, space separated.
    pub fn to_text_line(&self) -> String {
        let mut s = format!("{} {}", self.width, self.height);
        for r in &self.runs {
            s.push(' ');
            s.push_str(&r.to_string());
        }
        s
    }

    pub fn from_text_line(line: &str) -> Result<RleMask> {
        let mut it = line.split_whitespace();
        let width: usize = it
            .next()
            .ok_or_else(|| Error::InvalidRle("missing width".into()))?
            .parse()
            .map_err(|e| Error::InvalidRle(format!("bad width: {e}")))?;
        let height: usize = it
            .next()
            .ok_or_else(|| Error::InvalidRle("missing height".into()))?
            .parse()
            .map_err(|e| Error::InvalidRle(format!("bad height: {e}")))?;
        let runs = it
            .map(|tok| {
                tok.parse::<u32>()
                    .map_err(|e| Error::InvalidRle(format!("bad run '{tok}': {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if width == 0 || height == 0 {
            return Err(Error::InvalidRle("zero dimension".into()));
        }
        let rle = RleMask {
            width,
            height,
            runs,
        };
        rle.validate()?;
        Ok(rle)
    }
}

/// Canonical RLE: no zero-length interior runs, leading zero run only when
/// the mask starts with a set pixel.
pub fn rle_encode(m: &BinaryMask) -> RleMask {
    let mut runs = Vec::new();
    let mut value = false;
    let mut run = 0u32;
    for r in 0..m.height() {
        for c in 0..m.width() {
            let bit = m.get(r, c);
            if bit == value {
                run += 1;
            } else {
                runs.push(run);
                value = bit;
                run = 1;
            }
        }
    }
    runs.push(run);
    RleMask {
        width: m.width(),
        height: m.height(),
        runs,
    }
}

pub fn rle_decode(rle: &RleMask) -> Result<BinaryMask> {
    rle.validate()?;
    let mut m = BinaryMask::new(rle.width, rle.height);
    let mut pos = 0usize;
    let mut value = false;
    for &run in &rle.runs {
        if value {
            for i in pos..pos + run as usize {
                m.set(i / rle.width, i % rle.width, true);
            }
        }
        pos += run as usize;
        value = !value;
    }
    Ok(m)
}
