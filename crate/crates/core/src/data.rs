//! Procedural grayscale inspection images with pixel-exact defect masks.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::loss::GroundTruth;
use crate::rng::{derive_seed, labeled_rng};
use crate::tensor::Tensor;

/// Standard deviation of the per-pixel sensor noise.
pub const NOISE_SIGMA: f64 = 0.02;
pub const MIN_EXTENT: usize = 32;
/// Upper bound on the anomalous fraction of any sample.
pub const MAX_DEFECT_FRACTION: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DefectKind {
    BrightBlob,
    DarkBlob,
    Scratch,
    MissingPatch,
}

impl DefectKind {
    pub const ALL: [DefectKind; 4] = [Self::BrightBlob, Self::DarkBlob, Self::Scratch, Self::MissingPatch];

    pub fn name(self) -> &'static str {
        match self {
            Self::BrightBlob => "bright_blob",
            Self::DarkBlob => "dark_blob",
            Self::Scratch => "scratch",
            Self::MissingPatch => "missing_patch",
        }
    }
}

impl fmt::Display for DefectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticSample {
    pub image: Tensor,
    pub mask: GroundTruth,
    pub category: String,
    /// Kind of the first inserted defect.
    pub defect_kind: DefectKind,
}

/// `count` samples of `extent x extent`; sample `i` depends only on `(seed, i)`.
pub fn generate_dataset(count: usize, extent: usize, seed: u64, category: &str) -> Result<Vec<SyntheticSample>> {
    if count == 0 {
        return Err(Error::invalid("generate_dataset", "count must be at least 1"));
    }
    (0..count).map(|i| generate_sample(i, extent, seed, category)).collect()
}

/// Train split of a run seeded with `seed`.
pub fn train_split(count: usize, extent: usize, seed: u64, category: &str) -> Result<Vec<SyntheticSample>> {
    generate_dataset(count, extent, derive_seed(seed, "data.train"), category)
}

/// Held-out split of a run seeded with `seed`; disjoint stream from [`train_split`].
pub fn test_split(count: usize, extent: usize, seed: u64, category: &str) -> Result<Vec<SyntheticSample>> {
    generate_dataset(count, extent, derive_seed(seed, "data.test"), category)
}

pub fn generate_sample(index: usize, extent: usize, seed: u64, category: &str) -> Result<SyntheticSample> {
    if extent < MIN_EXTENT {
        return Err(Error::invalid("generate_dataset", format!("extent {extent} is below {MIN_EXTENT}")));
    }
    let mut rng = labeled_rng(seed, &format!("sample:{index}"));
    let n = extent as f64;
    let mut image = background(&mut rng, extent);
    let mut mask = vec![false; extent * extent];
    let defects = if rng.random_bool(0.3) { 2 } else { 1 };
    let first = DefectKind::ALL[rng.random_range(0..4)];
    for k in 0..defects {
        let kind = if k == 0 { first } else { DefectKind::ALL[rng.random_range(0..4)] };
        let footprint = defect_footprint(&mut rng, kind, extent);
        let contrast = rng.random_range(0.3..0.45);
        let fill = rng.random_range(0.02..0.1);
        for (i, &inside) in footprint.iter().enumerate() {
            if !inside {
                continue;
            }
            mask[i] = true;
            image[i] = match kind {
                DefectKind::BrightBlob => image[i] + contrast,
                DefectKind::DarkBlob => image[i] - contrast,
                DefectKind::Scratch => image[i] + if index.is_multiple_of(2) { contrast } else { -contrast },
                DefectKind::MissingPatch => fill,
            };
        }
    }
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    for v in image.iter_mut() {
        *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
    }
    let fraction = mask.iter().filter(|&&m| m).count() as f64 / (n * n);
    debug_assert!(fraction > 0.0 && fraction <= MAX_DEFECT_FRACTION);
    Ok(SyntheticSample {
        image: Tensor::new(&[extent, extent], image)?,
        mask: GroundTruth::new(Tensor::new(&[extent, extent], mask.iter().map(|&m| f64::from(u8::from(m))).collect())?)?,
        category: category.to_string(),
        defect_kind: first,
    })
}

/// Near-uniform surface with a gentle linear gradient and low-frequency ripple.
fn background(rng: &mut ChaCha8Rng, extent: usize) -> Vec<f64> {
    let n = extent as f64;
    let base = rng.random_range(0.45..0.55);
    let amp = rng.random_range(0.0..0.08);
    let angle = rng.random_range(0.0..2.0 * PI);
    let (fx, fy, phase) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), rng.random_range(0.0..2.0 * PI));
    (0..extent * extent)
        .map(|i| {
            let (y, x) = ((i / extent) as f64 / n, (i % extent) as f64 / n);
            let ramp = amp * (x * angle.cos() + y * angle.sin() - 0.5);
            let ripple = 0.015 * (2.0 * PI * (fx * x + fy * y) + phase).sin();
            base + ramp + ripple
        })
        .collect()
}

fn defect_footprint(rng: &mut ChaCha8Rng, kind: DefectKind, extent: usize) -> Vec<bool> {
    let n = extent as f64;
    let margin = 0.15 * n;
    let cy = rng.random_range(margin..n - margin);
    let cx = rng.random_range(margin..n - margin);
    let cell = |f: &dyn Fn(f64, f64) -> bool| -> Vec<bool> {
        (0..extent * extent).map(|i| f((i / extent) as f64 + 0.5, (i % extent) as f64 + 0.5)).collect()
    };
    match kind {
        DefectKind::BrightBlob | DefectKind::DarkBlob => {
            let (ry, rx) = (rng.random_range(0.06..0.14) * n, rng.random_range(0.06..0.14) * n);
            let rot = rng.random_range(0.0..PI);
            cell(&|y, x| {
                let (dy, dx) = (y - cy, x - cx);
                let (u, v) = (dx * rot.cos() + dy * rot.sin(), -dx * rot.sin() + dy * rot.cos());
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            })
        }
        DefectKind::Scratch => {
            let len = rng.random_range(0.3..0.55) * n;
            let angle = rng.random_range(0.0..PI);
            let half_width = rng.random_range(1.0..1.8);
            let (ux, uy) = (angle.cos(), angle.sin());
            cell(&|y, x| {
                let (dy, dx) = (y - cy, x - cx);
                let along = dx * ux + dy * uy;
                let across = -dx * uy + dy * ux;
                along.abs() <= len / 2.0 && across.abs() <= half_width
            })
        }
        DefectKind::MissingPatch => {
            let (hh, hw) = (rng.random_range(0.05..0.11) * n, rng.random_range(0.05..0.11) * n);
            cell(&|y, x| (y - cy).abs() <= hh && (x - cx).abs() <= hw)
        }
    }
}
