//! Intersection-over-union, fold aggregation and dispersion statistics.

use std::ops::Add;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::data_model::{BinaryMask, ScoreMap};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Thresholds logits: pixel = 1 iff score >= threshold (0 logits = p 0.5).
pub fn binarize<T: Scalar>(scores: &ScoreMap<T>, threshold: T) -> BinaryMask {
    let (w, h) = scores.dims();
    BinaryMask::new(w, h, scores.data().iter().map(|&s| (s >= threshold) as u8).collect())
        .expect("dimensions come from a valid score map")
}

/// Running pixel counts of overlap and union.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoUAccumulator {
    pub intersection_sum: u64,
    pub union_sum: u64,
}

impl IoUAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, pred: &BinaryMask, truth: &BinaryMask) -> Result<()> {
        if pred.dims() != truth.dims() {
            return Err(Error::ShapeMismatch(format!(
                "prediction {:?} vs truth {:?}",
                pred.dims(),
                truth.dims()
            )));
        }
        let (mut inter, mut union) = (0u64, 0u64);
        for (&p, &t) in pred.data().iter().zip(truth.data()) {
            let (p, t) = (p != 0, t != 0);
            inter += (p && t) as u64;
            union += (p || t) as u64;
        }
        self.intersection_sum += inter;
        self.union_sum += union;
        Ok(())
    }

    /// Intersection over union; 1.0 when both masks were empty everywhere.
    pub fn value(&self) -> f64 {
        if self.union_sum == 0 {
            1.0
        } else {
            self.intersection_sum as f64 / self.union_sum as f64
        }
    }
}

impl Add for IoUAccumulator {
    type Output = IoUAccumulator;

    fn add(self, rhs: Self) -> Self {
        IoUAccumulator {
            intersection_sum: self.intersection_sum + rhs.intersection_sum,
            union_sum: self.union_sum + rhs.union_sum,
        }
    }
}

pub fn iou_accumulate(acc: IoUAccumulator, pred: &BinaryMask, truth: &BinaryMask) -> Result<IoUAccumulator> {
    let mut acc = acc;
    acc.record(pred, truth)?;
    Ok(acc)
}

pub fn iou_value(acc: &IoUAccumulator) -> f64 {
    acc.value()
}

/// IoU of a single mask pair.
pub fn iou(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    Ok(iou_accumulate(IoUAccumulator::new(), pred, truth)?.value())
}

/// Aggregate and per-image-mean IoU over a set of mask pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub aggregate: f64,
    pub per_image_mean: f64,
    pub images: usize,
}

pub fn score_pairs<'a>(pairs: impl IntoIterator<Item = (&'a BinaryMask, &'a BinaryMask)>) -> Result<FoldScore> {
    let mut acc = IoUAccumulator::new();
    let mut sum = 0.0;
    let mut n = 0;
    for (pred, truth) in pairs {
        let mut one = IoUAccumulator::new();
        one.record(pred, truth)?;
        sum += one.value();
        acc = acc + one;
        n += 1;
    }
    Ok(FoldScore { aggregate: acc.value(), per_image_mean: if n == 0 { 1.0 } else { sum / n as f64 }, images: n })
}

/// Mean and three spread measures of a list of values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionStats<T> {
    pub mean: T,
    pub population_variance: T,
    pub sample_variance: T,
    pub mean_abs_deviation: T,
}

pub fn dispersion<T: Float>(values: &[T]) -> Result<DispersionStats<T>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("dispersion needs at least one value"));
    }
    let n = T::from(values.len()).expect("length fits in a float");
    let mean = values.iter().fold(T::zero(), |a, &v| a + v) / n;
    let ss = values.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean));
    let abs = values.iter().fold(T::zero(), |a, &v| a + (v - mean).abs());
    let sample_variance = if values.len() > 1 { ss / (n - T::one()) } else { T::zero() };
    Ok(DispersionStats {
        mean,
        population_variance: ss / n,
        sample_variance,
        mean_abs_deviation: abs / n,
    })
}

/// Relative change from `before` to `after`, in percent.
pub fn improvement_percent(before: f64, after: f64) -> Result<f64> {
    if !(before > 0.0) {
        return Err(Error::NonPositiveBaseline(before));
    }
    Ok(100.0 * (after - before) / before)
}

/// Percent with two decimals, e.g. `27.01%`.
pub fn format_percent(p: f64) -> String {
    format!("{p:.2}%")
}
