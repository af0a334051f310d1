//! Point and box prompts derived from connected anomalous regions.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::mmr::components::Region;
use crate::rng::labeled_rng;

/// A pixel position; `x` is the column, `y` the row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Point {
    pub x: usize,
    pub y: usize,
}

/// An axis-aligned box with top-left corner `(x, y)` (column, row) and extents `h x w`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PromptBox {
    pub x: usize,
    pub y: usize,
    pub h: usize,
    pub w: usize,
}

impl PromptBox {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.y && row < self.y + self.h && col >= self.x && col < self.x + self.w
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.h > 0 && self.w > 0 && self.y + self.h <= height && self.x + self.w <= width
    }

    /// Squared distance from a point to the nearest pixel of the box (0 inside).
    pub fn distance_sq(&self, p: Point) -> usize {
        let gap = |v: usize, lo: usize, len: usize| {
            if v < lo {
                lo - v
            } else if v >= lo + len {
                v + 1 - (lo + len)
            } else {
                0
            }
        };
        let (dx, dy) = (gap(p.x, self.x, self.w), gap(p.y, self.y, self.h));
        dx * dx + dy * dy
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PromptSet {
    pub points: Vec<Point>,
    pub boxes: Vec<PromptBox>,
}

impl PromptSet {
    /// Debug dump: `P x y` per point, then `B x y h w` per box.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            writeln!(out, "P {} {}", p.x, p.y).unwrap();
        }
        for b in &self.boxes {
            writeln!(out, "B {} {} {} {}", b.x, b.y, b.h, b.w).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut set = PromptSet::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let kind = fields.next().unwrap();
            let nums = fields
                .map(str::parse::<usize>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::invalid("prompt_parse", format!("line {}: {e}", n + 1)))?;
            match (kind, nums.as_slice()) {
                ("P", &[x, y]) => set.points.push(Point { x, y }),
                ("B", &[x, y, h, w]) => set.boxes.push(PromptBox { x, y, h, w }),
                _ => return Err(Error::invalid("prompt_parse", format!("line {}: `{line}`", n + 1))),
            }
        }
        Ok(set)
    }

    /// Whether every point and box lies inside a `height x width` image.
    pub fn within(&self, height: usize, width: usize) -> bool {
        self.points.iter().all(|p| p.x < width && p.y < height) && self.boxes.iter().all(|b| b.fits(height, width))
    }
}

/// Sampled points plus a flag raised when points were requested but no anomalous pixel exists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointSample {
    pub points: Vec<Point>,
    pub no_support: bool,
}

/// Draws `m` points uniformly from the union of region pixels: without replacement when there are
/// at least `m` pixels, with replacement otherwise.
pub fn extract_points(regions: &[Region], m: usize, seed: u64) -> PointSample {
    let mut support: Vec<(usize, usize)> = regions.iter().flat_map(|r| r.pixels.iter().copied()).collect();
    support.sort_unstable();
    if m == 0 || support.is_empty() {
        return PointSample {
            points: Vec::new(),
            no_support: m > 0,
        };
    }
    let mut rng = labeled_rng(seed, "mmr.points");
    let picks: Vec<usize> = if support.len() >= m {
        sample(&mut rng, support.len(), m).into_vec()
    } else {
        (0..m).map(|_| rng.random_range(0..support.len())).collect()
    };
    PointSample {
        points: picks
            .into_iter()
            .map(|i| Point {
                x: support[i].1,
                y: support[i].0,
            })
            .collect(),
        no_support: false,
    }
}

/// One bounding box per region, grown by one pixel on every side and clamped to the image.
pub fn extract_boxes(regions: &[Region], height: usize, width: usize) -> Vec<PromptBox> {
    regions
        .iter()
        .map(|r| {
            let b = r.bounds;
            let top = b.top.saturating_sub(1);
            let left = b.left.saturating_sub(1);
            let bottom = (b.bottom + 1).min(height - 1);
            let right = (b.right + 1).min(width - 1);
            PromptBox {
                x: left,
                y: top,
                h: bottom - top + 1,
                w: right - left + 1,
            }
        })
        .collect()
}
