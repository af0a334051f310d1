//! Mask refinement: rough map -> binary mask -> point/box prompts -> decoder masks -> fused map.

pub mod components;
pub mod prompts;

use crate::encoders::{MaskDecoder, SamMaskSet};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use components::{connected_components, BinaryMask, Bounds, Labeling, Region};
pub use prompts::{extract_boxes, extract_points, Point, PointSample, PromptBox, PromptSet};

/// Default binarization threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.47;
/// Default number of shared point prompts.
pub const DEFAULT_POINTS: usize = 3;

fn dims2(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match *t.shape() {
        [h, w] => Ok((h, w)),
        ref s => Err(Error::shape(op, format!("expected H x W, got {s:?}"))),
    }
}

/// A pixel is anomalous iff its foreground probability is strictly above `threshold`.
pub fn binarize(foreground: &Tensor, threshold: f64) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid("binarize", format!("threshold {threshold} outside [0, 1]")));
    }
    let (h, w) = dims2(foreground, "binarize")?;
    BinaryMask::new(h, w, foreground.data().iter().map(|&v| v > threshold).collect())
}

/// Min-max normalization to `[0, 1]`; a constant map becomes all `0.5`.
pub fn normalize_map(x: &Tensor) -> Tensor {
    let (lo, hi) = x
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    let data = if !(range > 0.0) {
        vec![0.5; x.len()]
    } else {
        x.data().iter().map(|&v| (v - lo) / range).collect()
    };
    Tensor::new(x.shape(), data).expect("normalized values are finite")
}

/// Everything produced by one refinement pass.
#[derive(Clone, Debug)]
pub struct Refinement {
    pub binary: BinaryMask,
    pub prompts: PromptSet,
    /// Raised when points were requested but the binary mask was empty.
    pub no_point_support: bool,
    pub masks: Option<SamMaskSet>,
    pub refined: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineParams {
    pub threshold: f64,
    pub points: usize,
    pub seed: u64,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            points: DEFAULT_POINTS,
            seed: 0,
        }
    }
}

/// Builds the prompt set for a rough foreground map.
pub fn build_prompts(rough: &Tensor, params: &RefineParams) -> Result<(BinaryMask, PromptSet, bool)> {
    let binary = binarize(rough, params.threshold)?;
    let labeling = connected_components(&binary);
    let sample = extract_points(&labeling.regions, params.points, params.seed);
    let boxes = extract_boxes(&labeling.regions, binary.height(), binary.width());
    Ok((
        binary,
        PromptSet {
            points: sample.points,
            boxes,
        },
        sample.no_support,
    ))
}

/// Fuses decoder masks into the rough map: `normalize(rough + sum_i sum_j mask_ij * score_ij)`.
/// With no boxes the decoder is not called and the result is `normalize(rough)`.
pub fn refine(rough: &Tensor, image: &Tensor, decoder: &dyn MaskDecoder, params: &RefineParams) -> Result<Refinement> {
    let (h, w) = dims2(rough, "refine")?;
    if image.shape() != rough.shape() {
        return Err(Error::shape(
            "refine",
            format!("rough map {:?} vs image {:?}", rough.shape(), image.shape()),
        ));
    }
    let (binary, prompts, no_point_support) = build_prompts(rough, params)?;
    if prompts.boxes.is_empty() {
        return Ok(Refinement {
            binary,
            prompts,
            no_point_support,
            masks: None,
            refined: normalize_map(rough),
        });
    }
    let masks = decoder.decode(image, rough, &prompts)?;
    let mut fused = rough.data().to_vec();
    // ordered reduction: box-major, then granularity
    for (set, scores) in masks.masks.iter().zip(&masks.scores) {
        for (mask, &score) in set.iter().zip(scores) {
            for (v, &bit) in fused.iter_mut().zip(mask.bits()) {
                if bit {
                    *v += score;
                }
            }
        }
    }
    let fused = Tensor::new(&[h, w], fused)?;
    Ok(Refinement {
        binary,
        prompts,
        no_point_support,
        masks: Some(masks),
        refined: normalize_map(&fused),
    })
}
