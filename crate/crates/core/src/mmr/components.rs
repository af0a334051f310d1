//! Binary masks and 8-connected component labeling.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::shape("binary_mask", format!("{height}x{width} needs {} bits", height * width)));
        }
        Ok(Self { height, width, bits })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    /// Interprets a 2-D tensor of zeros and ones.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (h, w) = match *t.shape() {
            [h, w] => (h, w),
            ref s => return Err(Error::shape("binary_mask", format!("expected H x W, got {s:?}"))),
        };
        let mut bits = Vec::with_capacity(h * w);
        for &v in t.data() {
            match v {
                0.0 => bits.push(false),
                1.0 => bits.push(true),
                other => return Err(Error::invalid("binary_mask", format!("non-binary value {other}"))),
            }
        }
        Self::new(h, w, bits)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            &[self.height, self.width],
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .expect("extents match by construction")
    }
}

/// Inclusive pixel bounds of a region.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bounds {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    /// `(row, col)` pixels in raster order.
    pub pixels: Vec<(usize, usize)>,
    pub bounds: Bounds,
}

/// Labeled connected regions plus a per-pixel label map (0 = background, `k + 1` = region `k`).
#[derive(Clone, Debug)]
pub struct Labeling {
    pub regions: Vec<Region>,
    pub labels: Vec<usize>,
    pub height: usize,
    pub width: usize,
}

/// Labels 8-connected foreground regions. Regions are numbered in raster order of their first pixel.
pub fn connected_components(mask: &BinaryMask) -> Labeling {
    let (h, w) = (mask.height, mask.width);
    let mut labels = vec![0usize; h * w];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask.bits[start] || labels[start] != 0 {
            continue;
        }
        let label = regions.len() + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(p) = queue.pop_front() {
            let (r, c) = (p / w, p % w);
            pixels.push((r, c));
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let q = nr as usize * w + nc as usize;
                    if mask.bits[q] && labels[q] == 0 {
                        labels[q] = label;
                        queue.push_back(q);
                    }
                }
            }
        }
        pixels.sort_unstable();
        let bounds = Bounds {
            top: pixels.iter().map(|p| p.0).min().unwrap(),
            left: pixels.iter().map(|p| p.1).min().unwrap(),
            bottom: pixels.iter().map(|p| p.0).max().unwrap(),
            right: pixels.iter().map(|p| p.1).max().unwrap(),
        };
        regions.push(Region { pixels, bounds });
    }
    Labeling {
        regions,
        labels,
        height: h,
        width: w,
    }
}
