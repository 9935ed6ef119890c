//! Fold construction, arm-specific input preparation, SGD with a
//! per-iteration learning-rate schedule, and best-IoU model retention.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data_model::{AnnotatedSample, BinaryMask, ExperimentArm, FoldPlan, GrayImage};
use crate::enhance::{clahe, EnhanceConfig};
use crate::error::{Error, Result};
use crate::losses::{batch_loss, LossConfig};
use crate::metrics::{binarize, score_pairs, FoldScore};
use crate::network::{backward, build_model, forward, FeatureMap, Mode, ModelParams, NetworkConfig};
use crate::preprocess::{augment_sixfold, crop_roi, crop_roi_mask, resize, AugmentConfig, DeviceCropProfile};
use crate::rng::{self, derive_seed, Rng};
use crate::scalar::Scalar;

/// Assigns ids to `k` test folds: sort, seeded shuffle, optionally drop
/// `len % k` ids, then deal round-robin.
pub fn make_folds<S: AsRef<str>>(ids: &[S], k: usize, seed: u64, trim_to_divisible: bool) -> Result<FoldPlan> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if ids.len() < k {
        return Err(Error::TooFewSamples { samples: ids.len(), k });
    }
    let mut sorted: Vec<String> = ids.iter().map(|s| s.as_ref().to_string()).collect();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidConfig("fold ids must be unique".into()));
    }
    let mut r = rng::seeded(seed);
    sorted.shuffle(&mut r);
    let drop = if trim_to_divisible { sorted.len() % k } else { 0 };
    let mut dropped: Vec<String> = sorted.drain(..drop).collect();
    dropped.sort();
    let assignments = sorted.into_iter().enumerate().map(|(i, id)| (id, i % k)).collect();
    Ok(FoldPlan { k, seed, assignments, dropped })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    /// `lr_initial - iteration * lr_decrement`.
    Linear,
    /// `lr_initial * (1 - iteration / horizon)^power`.
    Polynomial { power: f64, horizon: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_decrement: f64,
    pub lr_floor: f64,
    pub schedule: LrSchedule,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
    pub arm: ExperimentArm,
    /// Weight of the running-statistics update per training step.
    pub bn_momentum: f64,
    pub lovasz_weight: f64,
    pub ce_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            lr_initial: 0.01,
            lr_decrement: 1e-5,
            lr_floor: 1e-5,
            schedule: LrSchedule::Linear,
            momentum: 0.0,
            epochs: 60,
            seed: 0,
            arm: ExperimentArm::MixedOptimization,
            bn_momentum: 0.1,
            lovasz_weight: 0.02,
            ce_weight: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr_initial > 0.0 && self.lr_initial.is_finite()) {
            return bad(format!("lr_initial must be positive, got {}", self.lr_initial));
        }
        if !(self.lr_decrement >= 0.0 && self.lr_floor >= 0.0) {
            return bad("lr_decrement and lr_floor must be non-negative".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return bad(format!("bn_momentum must be in [0, 1], got {}", self.bn_momentum));
        }
        if let LrSchedule::Polynomial { power, horizon } = self.schedule {
            if !(power > 0.0) || horizon == 0 {
                return bad("polynomial schedule needs power > 0 and horizon >= 1".into());
            }
        }
        self.loss().validate()
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig { lovasz_weight: self.lovasz_weight, ce_weight: self.ce_weight, use_lovasz: self.arm.use_lovasz() }
    }
}

/// Learning rate used at optimizer step `iteration` (0-based).
pub fn lr_at(cfg: &TrainConfig, iteration: usize) -> f64 {
    let raw = match cfg.schedule {
        LrSchedule::Linear => cfg.lr_initial - iteration as f64 * cfg.lr_decrement,
        LrSchedule::Polynomial { power, horizon } => {
            let frac = 1.0 - (iteration as f64 / horizon as f64).min(1.0);
            cfg.lr_initial * frac.powf(power)
        }
    };
    raw.max(cfg.lr_floor)
}

/// One SGD step with heavy-ball momentum: `v = m v + g`, `w -= lr v`.
/// `velocity` is created on first use.
pub fn sgd_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &crate::network::Gradients<T>,
    lr: T,
    momentum: T,
    velocity: &mut BTreeMap<String, Vec<T>>,
) -> Result<()> {
    for (name, g) in &grads.grads {
        let len = params.params.get(name).map(|t| t.len());
        if len != Some(g.len()) {
            return Err(Error::ShapeMismatch(format!("gradient {name} does not match a parameter")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    for (name, g) in &grads.grads {
        let w = params.params.get_mut(name).expect("checked above");
        let v = velocity.entry(name.clone()).or_insert_with(|| vec![T::zero(); g.len()]);
        for ((w, v), &g) in w.data.iter_mut().zip(v.iter_mut()).zip(g) {
            *v = momentum * *v + g;
            *w -= lr * *v;
        }
    }
    Ok(())
}

/// A network-ready image/label pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSample {
    /// Id of the source sample (shared by all its augmented copies).
    pub id: String,
    pub image: GrayImage,
    pub mask: BinaryMask,
}

/// How raw samples become network inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepConfig {
    pub input_size: usize,
    /// Resize target the random crops are drawn from.
    pub pre_crop_size: usize,
    pub crops_per_image: usize,
    /// Apply the device ROI crop first (off for images already cropped).
    pub crop_roi: bool,
    pub augment: bool,
    pub enhance: EnhanceConfig,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            input_size: 224,
            pre_crop_size: 256,
            crops_per_image: 2,
            crop_roi: true,
            augment: true,
            enhance: EnhanceConfig::default(),
        }
    }
}

impl PrepConfig {
    /// Same geometry at a different input size, keeping the pre-crop ratio.
    pub fn at_size(input_size: usize) -> Self {
        Self { input_size, pre_crop_size: (input_size * 8).div_ceil(7), ..Self::default() }
    }

    fn roi(&self, sample: &AnnotatedSample) -> Result<(GrayImage, BinaryMask)> {
        if !self.crop_roi {
            return Ok((sample.image.clone(), sample.consensus.clone()));
        }
        let profile = DeviceCropProfile::for_device(sample.device);
        Ok((crop_roi(&sample.image, &profile)?, crop_roi_mask(&sample.consensus, &profile)?))
    }

    fn finish(&self, arm: ExperimentArm, image: GrayImage) -> Result<GrayImage> {
        if arm.use_clahe() {
            clahe(&image, &self.enhance)
        } else {
            Ok(image)
        }
    }
}

/// Evaluation input: ROI, resize, and CLAHE when the arm uses it.
pub fn prepare_eval(sample: &AnnotatedSample, arm: ExperimentArm, prep: &PrepConfig) -> Result<PreparedSample> {
    let (img, mask) = prep.roi(sample)?;
    let n = prep.input_size;
    Ok(PreparedSample {
        id: sample.id.clone(),
        image: prep.finish(arm, resize(&img, n, n))?,
        mask: resize(&mask, n, n),
    })
}

/// Training inputs: ROI, the six-fold augmentation (seeded per sample id),
/// and CLAHE on every resulting network input when the arm uses it.
pub fn prepare_train(
    sample: &AnnotatedSample,
    arm: ExperimentArm,
    prep: &PrepConfig,
    seed: u64,
) -> Result<Vec<PreparedSample>> {
    if !prep.augment {
        return Ok(vec![prepare_eval(sample, arm, prep)?]);
    }
    let (img, mask) = prep.roi(sample)?;
    let aug = AugmentConfig {
        pre_crop_size: prep.pre_crop_size,
        final_size: prep.input_size,
        crops_per_image: prep.crops_per_image,
        seed: derive_seed(seed, &sample.id),
    };
    augment_sixfold(&img, &mask, &aug)?
        .into_iter()
        .map(|p| Ok(PreparedSample { id: sample.id.clone(), image: prep.finish(arm, p.image)?, mask: p.mask }))
        .collect()
}

pub fn prepare_train_set(
    samples: &[&AnnotatedSample],
    arm: ExperimentArm,
    prep: &PrepConfig,
    seed: u64,
) -> Result<Vec<PreparedSample>> {
    let mut out = Vec::new();
    for s in samples {
        out.extend(prepare_train(s, arm, prep, seed)?);
    }
    Ok(out)
}

pub fn prepare_eval_set(samples: &[&AnnotatedSample], arm: ExperimentArm, prep: &PrepConfig) -> Result<Vec<PreparedSample>> {
    samples.iter().map(|s| prepare_eval(s, arm, prep)).collect()
}

const EVAL_BATCH: usize = 8;

/// Inference-mode predictions at threshold 0 for every sample.
pub fn predict_masks<T: Scalar>(params: &ModelParams<T>, samples: &[PreparedSample]) -> Result<Vec<BinaryMask>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_BATCH) {
        let imgs: Vec<&GrayImage> = chunk.iter().map(|s| &s.image).collect();
        let logits = forward(params, &FeatureMap::from_images(&imgs)?, Mode::Eval)?.logits;
        out.extend(logits.to_score_maps()?.iter().map(|m| binarize(m, T::zero())));
    }
    Ok(out)
}

/// Aggregate and per-image IoU of the model's predictions.
pub fn evaluate<T: Scalar>(params: &ModelParams<T>, samples: &[PreparedSample]) -> Result<FoldScore> {
    let preds = predict_masks(params, samples)?;
    score_pairs(preds.iter().zip(samples.iter().map(|s| &s.mask)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean training loss over the epoch's steps.
    pub loss: f64,
    pub val_iou: f64,
    /// Rate used by the epoch's last step.
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Earliest epoch attaining `best_iou`; 0 before the first epoch.
    pub best_epoch: usize,
    pub best_iou: f64,
}

impl TrainHistory {
    fn push(&mut self, r: EpochRecord) -> bool {
        let improved = self.records.is_empty() || r.val_iou > self.best_iou;
        if improved {
            self.best_iou = r.val_iou;
            self.best_epoch = r.epoch;
        }
        self.records.push(r);
        improved
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,val_iou,lr\n");
        for r in &self.records {
            writeln!(s, "{},{:.6},{:.6},{:.8}", r.epoch, r.loss, r.val_iou, r.lr).expect("string write");
        }
        s
    }
}

/// Epoch-by-epoch training loop that keeps the parameters of the best
/// validation epoch.
pub struct Trainer<T: Scalar> {
    cfg: TrainConfig,
    params: ModelParams<T>,
    velocity: BTreeMap<String, Vec<T>>,
    train: Vec<PreparedSample>,
    val: Vec<PreparedSample>,
    holdout: BTreeSet<String>,
    rng: Rng,
    iteration: usize,
    best: ModelParams<T>,
    history: TrainHistory,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(params: ModelParams<T>, train: Vec<PreparedSample>, val: Vec<PreparedSample>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(Error::EmptyInput("training set"));
        }
        if val.is_empty() {
            return Err(Error::EmptyInput("validation set"));
        }
        let rng = rng::seeded(derive_seed(cfg.seed, "shuffle"));
        Ok(Self {
            best: params.clone(),
            params,
            velocity: BTreeMap::new(),
            train,
            val,
            holdout: BTreeSet::new(),
            rng,
            iteration: 0,
            history: TrainHistory::default(),
            cfg,
        })
    }

    /// Ids that must never contribute a gradient; checked every epoch.
    pub fn with_holdout(mut self, ids: impl IntoIterator<Item = String>) -> Result<Self> {
        self.holdout = ids.into_iter().collect();
        self.check_holdout()?;
        Ok(self)
    }

    fn check_holdout(&self) -> Result<()> {
        match self.train.iter().find(|s| self.holdout.contains(&s.id)) {
            Some(s) => Err(Error::Dataset(format!("held-out sample {} is in the training set", s.id))),
            None => Ok(()),
        }
    }

    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        self.check_holdout()?;
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut self.rng);
        let loss_cfg = self.cfg.loss();
        let momentum = T::from_f64_lossy(self.cfg.momentum);
        let bn_momentum = T::from_f64_lossy(self.cfg.bn_momentum);
        let mut loss_sum = 0.0;
        let mut steps = 0;
        let mut lr = lr_at(&self.cfg, self.iteration);
        for batch in order.chunks(self.cfg.batch_size) {
            let imgs: Vec<&GrayImage> = batch.iter().map(|&i| &self.train[i].image).collect();
            let masks: Vec<BinaryMask> = batch.iter().map(|&i| self.train[i].mask.clone()).collect();
            let input = FeatureMap::from_images(&imgs)?;
            let pass = forward(&self.params, &input, Mode::Train)?;
            let scores = pass.logits.to_score_maps()?;
            let (loss, grads) = batch_loss(&scores, &masks, &loss_cfg)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteActivation("training loss diverged".into()));
            }
            let dl = FeatureMap::from_data(1, input.batch, input.height, input.width, grads.concat())?;
            let g = backward(&self.params, &pass.tape, &dl)?;
            lr = lr_at(&self.cfg, self.iteration);
            sgd_step(&mut self.params, &g, T::from_f64_lossy(lr), momentum, &mut self.velocity)?;
            self.params.update_running_stats(&pass.tape, bn_momentum);
            self.iteration += 1;
            loss_sum += loss.to_f64_lossy();
            steps += 1;
        }
        let val_iou = evaluate(&self.params, &self.val)?.aggregate;
        let record = EpochRecord { epoch: self.history.records.len() + 1, loss: loss_sum / steps as f64, val_iou, lr };
        if self.history.push(record) {
            self.best = self.params.clone();
        }
        Ok(record)
    }

    /// Runs the remaining configured epochs.
    pub fn run(&mut self) -> Result<()> {
        while self.history.records.len() < self.cfg.epochs {
            self.run_epoch()?;
        }
        Ok(())
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn best(&self) -> &ModelParams<T> {
        &self.best
    }

    pub fn history(&self) -> &TrainHistory {
        &self.history
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn into_best(self) -> (ModelParams<T>, TrainHistory) {
        (self.best, self.history)
    }
}

/// Trains a fresh network for `train_cfg.epochs` epochs and returns the
/// best-validation parameters with the full history.
pub fn train_fold<T: Scalar>(
    train: Vec<PreparedSample>,
    val: Vec<PreparedSample>,
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
) -> Result<(ModelParams<T>, TrainHistory)> {
    let params = build_model(net_cfg)?;
    let mut t = Trainer::new(params, train, val, train_cfg.clone())?;
    t.run()?;
    Ok(t.into_best())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::Device;
    use crate::network::Gradients;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:03}")).collect()
    }

    #[test]
    fn fold_sizes() {
        let p = make_folds(&ids(180), 10, 1, true).unwrap();
        assert_eq!(p.fold_sizes(), vec![18; 10]);
        let p = make_folds(&ids(135), 10, 1, false).unwrap();
        let mut sizes = p.fold_sizes();
        sizes.sort();
        assert_eq!(sizes, [vec![13; 5], vec![14; 5]].concat());
        let p = make_folds(&ids(185), 10, 3, true).unwrap();
        assert_eq!(p.dropped.len(), 5);
        assert_eq!(p.len(), 180);
        assert!(matches!(make_folds(&ids(3), 5, 0, false), Err(Error::TooFewSamples { samples: 3, k: 5 })));
        assert!(make_folds(&["a", "a", "b"], 2, 0, false).is_err());
    }

    #[test]
    fn lr_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(&cfg, 0), 0.01);
        assert!((lr_at(&cfg, 100) - 0.009).abs() < 1e-15);
        assert_eq!(lr_at(&cfg, 1_000_000), 1e-5);
        let poly = TrainConfig { schedule: LrSchedule::Polynomial { power: 0.9, horizon: 100 }, ..cfg };
        assert_eq!(lr_at(&poly, 0), 0.01);
        assert!((lr_at(&poly, 50) - 0.01 * 0.5f64.powf(0.9)).abs() < 1e-15);
        assert_eq!(lr_at(&poly, 100), 1e-5);
        for c in [&poly, &TrainConfig::default()] {
            let rates: Vec<f64> = (0..2000).step_by(7).map(|it| lr_at(c, it)).collect();
            assert!(rates.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    fn one_param_model(w0: f64) -> ModelParams<f64> {
        let mut m = build_model::<f64>(&NetworkConfig { base_channels: 1, depth: 2, ..Default::default() }).unwrap();
        m.params.get_mut("head.bias").unwrap().data[0] = w0;
        m
    }

    fn grad_of(g: f64) -> Gradients<f64> {
        Gradients { grads: [("head.bias".to_string(), vec![g])].into() }
    }

    #[test]
    fn sgd_arithmetic() {
        let mut m = one_param_model(1.0);
        let mut v = BTreeMap::new();
        sgd_step(&mut m, &grad_of(0.5), 0.01, 0.0, &mut v).unwrap();
        assert!((m.param("head.bias")[0] - 0.995).abs() < 1e-15);
        sgd_step(&mut m, &grad_of(0.0), 0.01, 0.0, &mut v).unwrap();
        assert!((m.param("head.bias")[0] - 0.995).abs() < 1e-15);

        let mut m = one_param_model(0.0);
        let mut v = BTreeMap::new();
        sgd_step(&mut m, &grad_of(1.0), 0.1, 0.9, &mut v).unwrap();
        sgd_step(&mut m, &grad_of(1.0), 0.1, 0.9, &mut v).unwrap();
        assert!((m.param("head.bias")[0] + 0.29).abs() < 1e-12);

        assert!(matches!(sgd_step(&mut m, &grad_of(f64::NAN), 0.1, 0.0, &mut v), Err(Error::NonFiniteGradient(_))));
        let wrong = Gradients { grads: [("head.bias".to_string(), vec![1.0, 2.0])].into() };
        assert!(matches!(sgd_step(&mut m, &wrong, 0.1, 0.0, &mut v), Err(Error::ShapeMismatch(_))));
    }

    fn tiny_sample(id: &str, shift: usize) -> AnnotatedSample {
        let mask = BinaryMask::from_fn(16, 16, |x, y| (4 + shift..10 + shift).contains(&x) && (5..11).contains(&y));
        let image = GrayImage::from_fn(16, 16, |x, y| if mask.get(x, y) { 40 } else { 150 + ((x * 3 + y) % 20) as u8 });
        AnnotatedSample::new(id, Device::Synthetic, image, mask)
    }

    fn tiny_prep() -> PrepConfig {
        PrepConfig { input_size: 16, pre_crop_size: 20, crop_roi: false, ..PrepConfig::default() }
    }

    #[test]
    fn preparation_follows_the_arm() {
        let s = tiny_sample("a", 0);
        let prep = tiny_prep();
        let plain = prepare_train(&s, ExperimentArm::Original, &prep, 5).unwrap();
        assert_eq!(plain.len(), 6);
        assert!(plain.iter().all(|p| p.id == "a" && p.image.dims() == (16, 16)));
        assert_eq!(plain[0].image, s.image);
        let enhanced = prepare_train(&s, ExperimentArm::Enhanced, &prep, 5).unwrap();
        assert_eq!(enhanced[0].image, clahe(&s.image, &prep.enhance).unwrap());
        assert_eq!(enhanced[0].mask, plain[0].mask);
        let eval = prepare_eval(&s, ExperimentArm::MixedOptimization, &prep).unwrap();
        assert_eq!(eval.image, enhanced[0].image);
        let no_aug = PrepConfig { augment: false, ..prep };
        assert_eq!(prepare_train(&s, ExperimentArm::Original, &no_aug, 5).unwrap().len(), 1);
    }

    #[test]
    fn history_tracks_earliest_best() {
        let mut h = TrainHistory::default();
        for (e, iou) in [(1, 0.2), (2, 0.5), (3, 0.5), (4, 0.4)] {
            h.push(EpochRecord { epoch: e, loss: 1.0, val_iou: iou, lr: 0.01 });
        }
        assert_eq!((h.best_epoch, h.best_iou), (2, 0.5));
        assert!(h.to_csv().starts_with("epoch,loss,val_iou,lr\n1,1.000000,0.200000,0.01000000\n"));
        assert_eq!(h.to_csv().lines().count(), 5);
    }

    #[test]
    fn training_is_deterministic_and_guards_holdout() {
        let samples = [tiny_sample("a", 0), tiny_sample("b", 3), tiny_sample("c", 5)];
        let refs: Vec<&AnnotatedSample> = samples.iter().collect();
        let prep = tiny_prep();
        let train = prepare_train_set(&refs[..2], ExperimentArm::MixedOptimization, &prep, 1).unwrap();
        let val = prepare_eval_set(&refs[2..], ExperimentArm::MixedOptimization, &prep).unwrap();
        let net = NetworkConfig { base_channels: 2, depth: 2, seed: 1, ..Default::default() };
        let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
        let (best_a, hist_a) = train_fold::<f32>(train.clone(), val.clone(), &net, &cfg).unwrap();
        let (best_b, hist_b) = train_fold::<f32>(train.clone(), val.clone(), &net, &cfg).unwrap();
        assert_eq!(hist_a, hist_b);
        assert_eq!(best_a, best_b);
        assert_eq!(hist_a.records.len(), 3);
        let max = hist_a.records.iter().map(|r| r.val_iou).fold(f64::MIN, f64::max);
        assert_eq!(hist_a.best_iou, max);
        assert!(hist_a.best_iou >= hist_a.records.last().unwrap().val_iou);
        assert_eq!(evaluate(&best_a, &val).unwrap().aggregate, hist_a.best_iou);

        let t = Trainer::new(build_model::<f32>(&net).unwrap(), train, val, cfg).unwrap();
        assert!(matches!(t.with_holdout(["b".to_string()]), Err(Error::Dataset(_))));
    }

    proptest! {
        #[test]
        fn folds_partition_the_ids(n in 1usize..120, k in 1usize..12, seed: u64, trim: bool) {
            prop_assume!(n >= k);
            let all = ids(n);
            let p = make_folds(&all, k, seed, trim).unwrap();
            prop_assert_eq!(p.len() + p.dropped.len(), n);
            let sizes = p.fold_sizes();
            let (lo, hi) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            if trim { prop_assert_eq!(lo, hi); }
            let mut seen: Vec<&str> = (0..k).flat_map(|f| p.test_ids(f)).chain(p.dropped.iter().map(|s| s.as_str())).collect();
            seen.sort();
            let mut expect: Vec<&str> = all.iter().map(|s| s.as_str()).collect();
            expect.sort();
            prop_assert_eq!(seen, expect);
            prop_assert_eq!(make_folds(&all, k, seed, trim).unwrap(), p);
        }
    }
}
