//! Binary cross-entropy, the Lovász hinge (Lovász extension of the Jaccard
//! loss evaluated at hinge errors) and their weighted sum, each with its
//! gradient with respect to the logits.

use serde::{Deserialize, Serialize};

use crate::data_model::{BinaryMask, ScoreMap};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lovasz_weight: f64,
    pub ce_weight: f64,
    pub use_lovasz: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lovasz_weight: 0.02, ce_weight: 1.0, use_lovasz: true }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lovasz_weight >= 0.0 && self.ce_weight >= 0.0) {
            return Err(Error::InvalidConfig("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// A loss value with its gradient, laid out like the score map.
#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput<T> {
    pub value: T,
    pub grad: Vec<T>,
}

fn check_dims<T: Scalar>(scores: &ScoreMap<T>, truth: &BinaryMask) -> Result<()> {
    if scores.dims() != truth.dims() {
        return Err(Error::ShapeMismatch(format!("scores {:?} vs truth {:?}", scores.dims(), truth.dims())));
    }
    Ok(())
}

fn sigmoid<T: Scalar>(s: T) -> T {
    if s >= T::zero() {
        T::one() / (T::one() + (-s).exp())
    } else {
        let e = s.exp();
        e / (T::one() + e)
    }
}

/// Mean sigmoid cross-entropy over pixels.
pub fn ce_loss<T: Scalar>(scores: &ScoreMap<T>, truth: &BinaryMask) -> Result<LossOutput<T>> {
    check_dims(scores, truth)?;
    let n = T::from_usize(scores.len()).expect("pixel count fits");
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(scores.len());
    for (&s, &y) in scores.data().iter().zip(truth.data()) {
        let y = if y != 0 { T::one() } else { T::zero() };
        // max(s,0) - s*y + ln(1 + e^-|s|) == -[y ln σ(s) + (1-y) ln(1-σ(s))]
        total += s.max(T::zero()) - s * y + (-s.abs()).exp().ln_1p();
        grad.push((sigmoid(s) - y) / n);
    }
    Ok(LossOutput { value: total / n, grad })
}

/// Gradient of the Lovász extension of the Jaccard loss, for truth labels
/// already sorted by decreasing error.
pub fn lovasz_grad_coefficients<T: Scalar>(sorted_truth: &[u8]) -> Result<Vec<T>> {
    if sorted_truth.is_empty() {
        return Err(Error::EmptyInput("lovasz coefficients need at least one label"));
    }
    let positives = sorted_truth.iter().filter(|&&y| y != 0).count();
    let p = T::from_usize(positives).expect("count fits");
    let mut out = Vec::with_capacity(sorted_truth.len());
    let (mut cum_pos, mut cum_neg) = (0usize, 0usize);
    let mut prev = T::zero();
    for &y in sorted_truth {
        if y != 0 {
            cum_pos += 1;
        } else {
            cum_neg += 1;
        }
        let intersection = p - T::from_usize(cum_pos).expect("count fits");
        let union = p + T::from_usize(cum_neg).expect("count fits");
        let jacc = T::one() - intersection / union;
        out.push(jacc - prev);
        prev = jacc;
    }
    Ok(out)
}

/// Lovász hinge for one image.
///
/// Errors are sorted with a stable descending sort, so ties keep their
/// pixel order. The gradient is the subgradient for that fixed order.
pub fn lovasz_hinge<T: Scalar>(scores: &ScoreMap<T>, truth: &BinaryMask) -> Result<LossOutput<T>> {
    check_dims(scores, truth)?;
    let signs: Vec<T> = truth.data().iter().map(|&y| if y != 0 { T::one() } else { -T::one() }).collect();
    let errors: Vec<T> = scores
        .data()
        .iter()
        .zip(&signs)
        .map(|(&s, &sign)| (T::one() - s * sign).max(T::zero()))
        .collect();
    let mut order: Vec<usize> = (0..errors.len()).collect();
    order.sort_by(|&a, &b| errors[b].partial_cmp(&errors[a]).expect("errors are finite"));
    let sorted_truth: Vec<u8> = order.iter().map(|&i| (truth.data()[i] != 0) as u8).collect();
    let g = lovasz_grad_coefficients::<T>(&sorted_truth)?;

    let mut value = T::zero();
    let mut grad = vec![T::zero(); errors.len()];
    for (rank, &i) in order.iter().enumerate() {
        if errors[i] > T::zero() {
            value += errors[i] * g[rank];
            grad[i] = -signs[i] * g[rank];
        }
    }
    Ok(LossOutput { value, grad })
}

/// `ce_weight * ce + lovasz_weight * lovasz` (the Lovász term only when
/// enabled), for one image.
pub fn combined_loss<T: Scalar>(scores: &ScoreMap<T>, truth: &BinaryMask, cfg: &LossConfig) -> Result<LossOutput<T>> {
    let ce = ce_loss(scores, truth)?;
    let ce_w = T::from_f64_lossy(cfg.ce_weight);
    if !cfg.use_lovasz {
        if cfg.ce_weight == 1.0 {
            return Ok(ce);
        }
        return Ok(LossOutput { value: ce.value * ce_w, grad: ce.grad.into_iter().map(|g| g * ce_w).collect() });
    }
    let lov = lovasz_hinge(scores, truth)?;
    let lov_w = T::from_f64_lossy(cfg.lovasz_weight);
    Ok(LossOutput {
        value: ce_w * ce.value + lov_w * lov.value,
        grad: ce.grad.iter().zip(&lov.grad).map(|(&a, &b)| ce_w * a + lov_w * b).collect(),
    })
}

/// [`combined_loss`] averaged over a batch; gradients are those of the
/// batch mean.
pub fn batch_loss<T: Scalar>(
    scores: &[ScoreMap<T>],
    truths: &[BinaryMask],
    cfg: &LossConfig,
) -> Result<(T, Vec<Vec<T>>)> {
    if scores.len() != truths.len() {
        return Err(Error::ShapeMismatch(format!("{} score maps vs {} masks", scores.len(), truths.len())));
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput("loss over an empty batch"));
    }
    let b = T::from_usize(scores.len()).expect("batch fits");
    let mut total = T::zero();
    let mut grads = Vec::with_capacity(scores.len());
    for (s, t) in scores.iter().zip(truths) {
        let out = combined_loss(s, t, cfg)?;
        total += out.value;
        grads.push(out.grad.into_iter().map(|g| g / b).collect());
    }
    Ok((total / b, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn map(w: usize, h: usize, v: Vec<f64>) -> ScoreMap<f64> {
        ScoreMap::new(w, h, v).unwrap()
    }

    fn mask(w: usize, h: usize, v: Vec<u8>) -> BinaryMask {
        BinaryMask::new(w, h, v).unwrap()
    }

    #[test]
    fn ce_at_zero_logits_is_ln2() {
        let truth = mask(3, 2, vec![1, 0, 1, 1, 0, 0]);
        let out = ce_loss(&ScoreMap::filled(3, 2, 0.0f64), &truth).unwrap();
        assert_relative_eq!(out.value, std::f64::consts::LN_2, epsilon = 1e-12);
        assert_relative_eq!(out.grad[0], -0.5 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(out.grad[1], 0.5 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn ce_saturated_and_single_pixel() {
        let truth = mask(2, 2, vec![1, 0, 0, 1]);
        let out = ce_loss(&map(2, 2, vec![40.0, -40.0, -40.0, 40.0]), &truth).unwrap();
        assert!(out.value < 1e-10);
        let one = ce_loss(&map(1, 1, vec![1.0]), &mask(1, 1, vec![1])).unwrap();
        assert_relative_eq!(one.value, (1.0 + (-1.0f64).exp()).ln(), epsilon = 1e-15);
        assert!((one.value - 0.313262).abs() < 1e-6);
    }

    #[test]
    fn ce_is_stable_for_huge_logits() {
        let truth = mask(2, 1, vec![0, 1]);
        let out = ce_loss(&map(2, 1, vec![1e4, -1e4]), &truth).unwrap();
        assert_relative_eq!(out.value, 1e4, max_relative = 1e-12);
        assert!(out.grad.iter().all(|g| g.is_finite()));
        let out32 = ce_loss(&ScoreMap::new(2, 1, vec![1e4f32, -1e4]).unwrap(), &truth).unwrap();
        assert!(out32.value.is_finite());
    }

    #[test]
    fn lovasz_coefficient_examples() {
        assert_eq!(lovasz_grad_coefficients::<f64>(&[1]).unwrap(), vec![1.0]);
        assert_eq!(lovasz_grad_coefficients::<f64>(&[0, 0]).unwrap(), vec![1.0, 0.0]);
        assert!(lovasz_grad_coefficients::<f64>(&[]).is_err());
        let g = lovasz_grad_coefficients::<f64>(&[0, 1, 1, 0]).unwrap();
        for (a, b) in g.iter().zip([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn lovasz_zero_when_all_margins_hold() {
        let truth = mask(2, 2, vec![1, 0, 1, 0]);
        let out = lovasz_hinge(&map(2, 2, vec![1.0, -1.0, 3.0, -2.5]), &truth).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn lovasz_single_error_example() {
        let out = lovasz_hinge(&map(4, 1, vec![2.0, 2.0, 1.0, -2.0]), &mask(4, 1, vec![1, 1, 0, 0])).unwrap();
        assert_relative_eq!(out.value, 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(out.grad[2], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(out.grad[0], 0.0);
    }

    #[test]
    fn lovasz_ties_do_not_change_the_value() {
        // four equal errors, labels interleaved; any tie order gives the same value
        let truth = mask(4, 1, vec![1, 0, 1, 0]);
        let scores = map(4, 1, vec![0.5, -0.5, 0.5, -0.5]);
        let base = lovasz_hinge(&scores, &truth).unwrap().value;
        let perm = [2usize, 3, 0, 1];
        let truth_p = mask(4, 1, perm.iter().map(|&i| truth.data()[i]).collect());
        let scores_p = map(4, 1, perm.iter().map(|&i| scores.data()[i]).collect());
        assert_relative_eq!(lovasz_hinge(&scores_p, &truth_p).unwrap().value, base, epsilon = 1e-15);
    }

    #[test]
    fn combined_without_lovasz_is_plain_ce() {
        let truth = mask(3, 1, vec![1, 0, 1]);
        let s = map(3, 1, vec![0.3, -1.2, 2.0]);
        let cfg = LossConfig { use_lovasz: false, ..Default::default() };
        assert_eq!(combined_loss(&s, &truth, &cfg).unwrap(), ce_loss(&s, &truth).unwrap());
    }

    #[test]
    fn combined_perfect_prediction_vanishes() {
        let truth = mask(2, 2, vec![1, 0, 0, 1]);
        let s = map(2, 2, vec![40.0, -40.0, -40.0, 40.0]);
        assert!(combined_loss(&s, &truth, &LossConfig::default()).unwrap().value < 1e-9);
    }

    #[test]
    fn combined_matches_independent_terms() {
        let mut r = rng::seeded(5);
        let s = map(8, 8, (0..64).map(|_| r.gen_range(-3.0..3.0)).collect());
        let truth = mask(8, 8, (0..64).map(|_| r.gen_range(0..2)).collect());
        let ce = ce_loss(&s, &truth).unwrap().value;
        let lov = lovasz_hinge(&s, &truth).unwrap().value;
        let both = combined_loss(&s, &truth, &LossConfig::default()).unwrap().value;
        assert_relative_eq!(both, ce + 0.02 * lov, epsilon = 1e-14);
    }

    #[test]
    fn ce_midpoint_convexity_probe() {
        let mut r = rng::seeded(17);
        for _ in 0..200 {
            let truth = mask(4, 4, (0..16).map(|_| r.gen_range(0..2)).collect());
            let a: Vec<f64> = (0..16).map(|_| r.gen_range(-6.0..6.0)).collect();
            let b: Vec<f64> = (0..16).map(|_| r.gen_range(-6.0..6.0)).collect();
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let f = |v: Vec<f64>| ce_loss(&map(4, 4, v), &truth).unwrap().value;
            let (fa, fb) = (f(a), f(b));
            assert!(f(mid) <= 0.5 * (fa + fb) + 1e-12);
        }
    }

    #[test]
    fn batch_loss_averages_images() {
        let t1 = mask(2, 1, vec![1, 0]);
        let t2 = mask(2, 1, vec![0, 0]);
        let s1 = map(2, 1, vec![0.5, 0.1]);
        let s2 = map(2, 1, vec![-0.7, 1.5]);
        let cfg = LossConfig::default();
        let (v, g) = batch_loss(&[s1.clone(), s2.clone()], &[t1.clone(), t2.clone()], &cfg).unwrap();
        let a = combined_loss(&s1, &t1, &cfg).unwrap();
        let b = combined_loss(&s2, &t2, &cfg).unwrap();
        assert_relative_eq!(v, 0.5 * (a.value + b.value), epsilon = 1e-15);
        assert_relative_eq!(g[1][1], 0.5 * b.grad[1], epsilon = 1e-15);
    }
}
