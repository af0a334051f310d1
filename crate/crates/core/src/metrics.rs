//! Pixel-level segmentation metrics: AUROC, average precision, F1-max and PRO.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::loss::GroundTruth;
use crate::mmr::{connected_components, BinaryMask};
use crate::tensor::Tensor;

/// Integration bound on the false-positive rate for PRO.
pub const PRO_FPR_LIMIT: f64 = 0.3;

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPixels {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl ScoredPixels {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::shape("metrics", format!("{} scores vs {} labels", scores.len(), labels.len())));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite { op: "metrics" });
        }
        Ok(Self { scores, labels })
    }

    pub fn from_map(map: &Tensor, gt: &GroundTruth) -> Result<Self> {
        if map.shape() != gt.mask().shape() {
            return Err(Error::shape("metrics", format!("map {:?} vs mask {:?}", map.shape(), gt.mask().shape())));
        }
        Self::new(map.data().to_vec(), gt.mask().data().iter().map(|&v| v > 0.5).collect())
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Indices ordered by descending score, ties by ascending index.
    fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].partial_cmp(&self.scores[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        idx
    }

    /// Ranked indices grouped into runs of equal score.
    fn tie_groups(&self) -> Vec<Vec<usize>> {
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in self.ranked() {
            match groups.last_mut() {
                Some(g) if self.scores[g[0]] == self.scores[i] => g.push(i),
                _ => groups.push(vec![i]),
            }
        }
        groups
    }
}

/// Probability that a random positive outscores a random negative; ties count one half.
pub fn auroc(sp: &ScoredPixels) -> Result<f64> {
    let pos = sp.positives();
    let neg = sp.labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("auroc", "both classes must be present"));
    }
    // Mann-Whitney U from mid-ranks (ascending, 1-based), doubled to stay integral.
    let mut groups = sp.tie_groups();
    groups.reverse();
    let mut rank_sum_x2 = 0u64;
    let mut seen = 0u64;
    for g in &groups {
        let n = g.len() as u64;
        let mid_x2 = 2 * seen + n + 1;
        let p = g.iter().filter(|&&i| sp.labels[i]).count() as u64;
        rank_sum_x2 += p * mid_x2;
        seen += n;
    }
    let pos_u = pos as u64;
    let u_x2 = rank_sum_x2 - pos_u * (pos_u + 1);
    Ok(u_x2 as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Step-wise average precision over the descending ranking (stable on ties).
pub fn average_precision(sp: &ScoredPixels) -> Result<f64> {
    let pos = sp.positives();
    if pos == 0 {
        return Err(Error::invalid("average_precision", "no positive labels"));
    }
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, i) in sp.ranked().into_iter().enumerate() {
        if sp.labels[i] {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / pos as f64)
}

/// Best F1 over thresholds at every distinct score (predict positive iff score >= t).
pub fn f1_max(sp: &ScoredPixels) -> Result<f64> {
    let pos = sp.positives();
    if pos == 0 {
        return Err(Error::invalid("f1_max", "no positive labels"));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best: f64 = 0.0;
    for g in sp.tie_groups() {
        for &i in &g {
            if sp.labels[i] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let fneg = pos - tp;
        best = best.max(2.0 * tp as f64 / (2 * tp + fp + fneg) as f64);
    }
    Ok(best)
}

/// Trapezoidal area under `(fpr, value)` points up to `limit`, normalized by `limit`.
/// Points must be sorted by non-decreasing `fpr`.
pub fn area_to_limit(points: &[(f64, f64)], limit: f64) -> f64 {
    let mut area = 0.0;
    for pair in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
        if x0 >= limit {
            break;
        }
        if x1 > limit {
            let y = y0 + (y1 - y0) * (limit - x0) / (x1 - x0);
            area += (limit - x0) * (y0 + y) / 2.0;
            break;
        }
        area += (x1 - x0) * (y0 + y1) / 2.0;
    }
    area / limit
}

/// Per-region overlap: the mean fraction of each ground-truth region (8-connected) covered by
/// the prediction, traced over every score threshold and integrated against the false-positive
/// rate up to [`PRO_FPR_LIMIT`].
pub fn pro(map: &Tensor, gt: &GroundTruth) -> Result<f64> {
    let sp = ScoredPixels::from_map(map, gt)?;
    let mask = BinaryMask::from_tensor(gt.mask())?;
    let labeling = connected_components(&mask);
    if labeling.regions.is_empty() {
        return Err(Error::invalid("pro", "ground truth has no anomalous region"));
    }
    let neg = sp.labels.len() - sp.positives();
    if neg == 0 {
        return Err(Error::invalid("pro", "ground truth has no normal pixels"));
    }
    let sizes: Vec<f64> = labeling.regions.iter().map(|r| r.pixels.len() as f64).collect();
    let nreg = sizes.len() as f64;
    let mut covered = vec![0usize; sizes.len()];
    let mut overlap_sum = 0.0;
    let mut fp = 0usize;
    let mut curve = vec![(0.0, 0.0)];
    for g in sp.tie_groups() {
        for &i in &g {
            match labeling.labels[i] {
                0 => fp += 1,
                l => {
                    covered[l - 1] += 1;
                    overlap_sum += 1.0 / sizes[l - 1];
                }
            }
        }
        curve.push((fp as f64 / neg as f64, overlap_sum / nreg));
        if fp as f64 / neg as f64 > PRO_FPR_LIMIT {
            break;
        }
    }
    Ok(area_to_limit(&curve, PRO_FPR_LIMIT))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub auroc: f64,
    pub ap: f64,
    pub f1_max: f64,
    pub pro: f64,
}

impl MetricsReport {
    pub fn evaluate(map: &Tensor, gt: &GroundTruth) -> Result<Self> {
        let sp = ScoredPixels::from_map(map, gt)?;
        Ok(Self {
            auroc: auroc(&sp)?,
            ap: average_precision(&sp)?,
            f1_max: f1_max(&sp)?,
            pro: pro(map, gt)?,
        })
    }

    pub fn mean(reports: &[MetricsReport]) -> Option<MetricsReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let sum = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricsReport {
            auroc: sum(|r| r.auroc),
            ap: sum(|r| r.ap),
            f1_max: sum(|r| r.f1_max),
            pro: sum(|r| r.pro),
        })
    }

    pub fn values(&self) -> [f64; 4] {
        [self.auroc, self.ap, self.f1_max, self.pro]
    }
}

/// Header line, one line per image, then a `mean` footer.
pub fn reports_to_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("image,auroc,ap,f1_max,pro\n");
    let line = |out: &mut String, label: &str, r: &MetricsReport| {
        writeln!(out, "{label},{:.6},{:.6},{:.6},{:.6}", r.auroc, r.ap, r.f1_max, r.pro).unwrap();
    };
    for (i, r) in reports.iter().enumerate() {
        line(&mut out, &i.to_string(), r);
    }
    if let Some(m) = MetricsReport::mean(reports) {
        line(&mut out, "mean", &m);
    }
    out
}
