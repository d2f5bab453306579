//! Confusion-matrix accounting and pixel-level segmentation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::image::{BinaryMask, ProbabilityMap};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Counts of the four prediction outcomes. Integral in hard mode, real-valued
/// in soft mode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tps: f64,
    pub fps: f64,
    pub tns: f64,
    pub fns: f64,
    pub n: f64,
}

impl ConfusionCounts {
    pub fn is_valid(&self) -> bool {
        let parts = [self.tps, self.fps, self.tns, self.fns];
        parts.iter().all(|v| *v >= 0.0 && v.is_finite())
            && (parts.iter().sum::<f64>() - self.n).abs() <= 1e-6 * self.n.max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

impl MetricReport {
    /// Arithmetic mean of several reports, field by field.
    pub fn mean(reports: &[MetricReport]) -> MetricReport {
        if reports.is_empty() {
            return MetricReport::default();
        }
        let n = reports.len() as f64;
        let mut acc = MetricReport::default();
        for r in reports {
            acc.precision += r.precision;
            acc.recall += r.recall;
            acc.f1 += r.f1;
            acc.iou += r.iou;
        }
        MetricReport {
            precision: acc.precision / n,
            recall: acc.recall / n,
            f1: acc.f1 / n,
            iou: acc.iou / n,
        }
    }
}

pub fn confusion_counts(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    check_shape(gt.shape(), pred.shape())?;
    let mut c = [0u64; 4];
    for (&p, &g) in pred.pixels().iter().zip(gt.pixels().iter()) {
        // index: 0 tn, 1 fn, 2 fp, 3 tp
        c[(p as usize) << 1 | g as usize] += 1;
    }
    Ok(ConfusionCounts {
        tps: c[3] as f64,
        fps: c[2] as f64,
        tns: c[0] as f64,
        fns: c[1] as f64,
        n: pred.pixels().len() as f64,
    })
}

/// Product-form relaxation of [`confusion_counts`]; identical on binary inputs.
pub fn soft_confusion_counts(prob: &ProbabilityMap, gt: &BinaryMask) -> Result<ConfusionCounts> {
    check_shape(gt.shape(), prob.shape())?;
    let mut out = ConfusionCounts { n: prob.len() as f64, ..Default::default() };
    for (&o, &g) in prob.pixels().iter().zip(gt.pixels().iter()) {
        if g == 1 {
            out.tps += o;
            out.fns += 1.0 - o;
        } else {
            out.fps += o;
            out.tns += 1.0 - o;
        }
    }
    Ok(out)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Precision, recall, F1 and IoU. A metric whose denominator vanishes is 0.
pub fn metrics(c: &ConfusionCounts) -> MetricReport {
    let precision = ratio(c.tps, c.tps + c.fps);
    let recall = ratio(c.tps, c.tps + c.fns);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    let iou = ratio(c.tps, c.tps + c.fps + c.fns);
    MetricReport { precision, recall, f1, iou }
}

pub fn binarize(prob: &ProbabilityMap, threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold {threshold} must lie in (0, 1)")));
    }
    Ok(BinaryMask::from_fn(prob.shape(), |y, x| prob.pixels()[[y, x]] >= threshold))
}

/// Binarize then score against the ground truth.
pub fn score(prob: &ProbabilityMap, gt: &BinaryMask, threshold: f64) -> Result<MetricReport> {
    let pred = binarize(prob, threshold)?;
    Ok(metrics(&confusion_counts(&pred, gt)?))
}
