//! Shared domain types: images, masks, score maps, annotated samples, fold
//! plans and experiment arms.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr<u8>")]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_grid(width, height, data.len())?;
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }
}

/// Row-major {0,1} label grid: 0 background, 1 nerve trunk.
///
/// [`BinaryMask::new`] rejects anything but 0/1. [`BinaryMask::from_raw`]
/// keeps arbitrary bytes so that externally produced masks can be inspected
/// with [`validate_sample`] before normalization.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr<u8>")]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_grid(width, height, data.len())?;
        if let Some(bad) = data.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidConfig(format!("mask label {bad} is not 0 or 1")));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_grid(width, height, data.len())?;
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self { width, height, data: vec![0; width * height] }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self { width, height, data: vec![1; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y) as u8);
            }
        }
        Self { width, height, data }
    }

    /// Maps any nonzero byte to 1, so {0,255} PNG masks load as {0,1}.
    pub fn from_nonzero(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_grid(width, height, data.len())?;
        Ok(Self { width, height, data: data.into_iter().map(|v| (v != 0) as u8).collect() })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v as u8;
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v <= 1)
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Mask with labels scaled to {0,255} for PNG export.
    pub fn to_png_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| if v != 0 { 255 } else { 0 }).collect()
    }
}

/// Per-pixel real-valued logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr<T>", bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ScoreMap<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> ScoreMap<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        check_grid(width, height, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation("score map".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0 && value.is_finite());
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Deserialize)]
struct GridRepr<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl TryFrom<GridRepr<u8>> for GrayImage {
    type Error = Error;

    fn try_from(g: GridRepr<u8>) -> Result<Self> {
        GrayImage::new(g.width, g.height, g.data)
    }
}

impl TryFrom<GridRepr<u8>> for BinaryMask {
    type Error = Error;

    fn try_from(g: GridRepr<u8>) -> Result<Self> {
        BinaryMask::new(g.width, g.height, g.data)
    }
}

impl<T: Scalar> TryFrom<GridRepr<T>> for ScoreMap<T> {
    type Error = Error;

    fn try_from(g: GridRepr<T>) -> Result<Self> {
        ScoreMap::new(g.width, g.height, g.data)
    }
}

fn check_grid(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::ShapeMismatch(format!("grid {width}x{height} has a zero dimension")));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::ShapeMismatch(format!(
            "grid {width}x{height} needs {} values, got {len}",
            width.saturating_mul(height)
        )));
    }
    Ok(())
}

/// Acquisition source of a sample. Also the directory name used on disk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Device {
    #[serde(rename = "YGY")]
    Ygy,
    #[serde(rename = "BK3000_IF1")]
    Bk3000If1,
    #[serde(rename = "BK3000_IF2")]
    Bk3000If2,
    #[serde(rename = "SYNTHETIC")]
    Synthetic,
}

impl Device {
    pub const ALL: [Device; 4] = [Device::Ygy, Device::Bk3000If1, Device::Bk3000If2, Device::Synthetic];

    pub fn as_str(self) -> &'static str {
        match self {
            Device::Ygy => "YGY",
            Device::Bk3000If1 => "BK3000_IF1",
            Device::Bk3000If2 => "BK3000_IF2",
            Device::Synthetic => "SYNTHETIC",
        }
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Device {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Device::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown device {s:?}")))
    }
}

/// One image with its consensus label and optional per-rater labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSample {
    pub id: String,
    pub device: Device,
    pub image: GrayImage,
    pub consensus: BinaryMask,
    #[serde(default)]
    pub rater_masks: BTreeMap<String, BinaryMask>,
    #[serde(default)]
    pub second_pass_masks: BTreeMap<String, BinaryMask>,
}

impl AnnotatedSample {
    pub fn new(id: impl Into<String>, device: Device, image: GrayImage, consensus: BinaryMask) -> Self {
        Self {
            id: id.into(),
            device,
            image,
            consensus,
            rater_masks: BTreeMap::new(),
            second_pass_masks: BTreeMap::new(),
        }
    }
}

/// A broken invariant found by [`validate_sample`] or [`validate_dataset`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    DimensionMismatch { what: String, expected: (usize, usize), found: (usize, usize) },
    NonBinaryLabel { what: String, value: u8 },
    BadLength { what: String },
    DuplicateId(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch { what, expected, found } => write!(
                f,
                "dimension mismatch: {what} is {}x{}, image is {}x{}",
                found.0, found.1, expected.0, expected.1
            ),
            Violation::NonBinaryLabel { what, value } => {
                write!(f, "non-binary label: {what} contains {value}")
            }
            Violation::BadLength { what } => write!(f, "bad length: {what}"),
            Violation::DuplicateId(id) => write!(f, "duplicate id: {id}"),
        }
    }
}

/// Lists every broken invariant of a sample. Never fails.
pub fn validate_sample(sample: &AnnotatedSample) -> Vec<Violation> {
    let mut out = Vec::new();
    let image_dims = sample.image.dims();
    if sample.image.data.len() != image_dims.0 * image_dims.1 {
        out.push(Violation::BadLength { what: "image".into() });
    }

    let masks = std::iter::once(("consensus".to_string(), &sample.consensus))
        .chain(sample.rater_masks.iter().map(|(r, m)| (format!("rater {r}"), m)))
        .chain(sample.second_pass_masks.iter().map(|(r, m)| (format!("rater {r} second pass"), m)));
    for (what, mask) in masks {
        if mask.data.len() != mask.width * mask.height {
            out.push(Violation::BadLength { what: what.clone() });
        }
        if mask.dims() != image_dims {
            out.push(Violation::DimensionMismatch {
                what: what.clone(),
                expected: image_dims,
                found: mask.dims(),
            });
        }
        if let Some(&value) = mask.data.iter().find(|&&v| v > 1) {
            out.push(Violation::NonBinaryLabel { what, value });
        }
    }
    out
}

/// [`validate_sample`] over a dataset, plus id uniqueness.
pub fn validate_dataset(samples: &[AnnotatedSample]) -> Vec<Violation> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for s in samples {
        if !seen.insert(s.id.as_str()) {
            out.push(Violation::DuplicateId(s.id.clone()));
        }
        out.extend(validate_sample(s));
    }
    out
}

/// Seeded assignment of sample ids to `k` test folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: BTreeMap<String, usize>,
    /// Ids removed to make the dataset divisible by `k`.
    #[serde(default)]
    pub dropped: Vec<String>,
}

impl FoldPlan {
    /// Test ids of fold `fold`, sorted.
    pub fn test_ids(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// Ids of every other fold, sorted.
    pub fn train_ids(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f != fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

/// The four experiment arms. Each arm fixes whether CLAHE enhancement and
/// the Lovász hinge term are enabled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentArm {
    Original,
    ModifiedLoss,
    Enhanced,
    MixedOptimization,
}

impl ExperimentArm {
    pub const ALL: [ExperimentArm; 4] = [
        ExperimentArm::Original,
        ExperimentArm::ModifiedLoss,
        ExperimentArm::Enhanced,
        ExperimentArm::MixedOptimization,
    ];

    pub fn use_clahe(self) -> bool {
        matches!(self, ExperimentArm::Enhanced | ExperimentArm::MixedOptimization)
    }

    pub fn use_lovasz(self) -> bool {
        matches!(self, ExperimentArm::ModifiedLoss | ExperimentArm::MixedOptimization)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentArm::Original => "original",
            ExperimentArm::ModifiedLoss => "modified_loss",
            ExperimentArm::Enhanced => "enhanced",
            ExperimentArm::MixedOptimization => "mixed_optimization",
        }
    }

    /// Column heading used in rendered tables.
    pub fn title(self) -> &'static str {
        match self {
            ExperimentArm::Original => "Original images",
            ExperimentArm::ModifiedLoss => "Modified loss function",
            ExperimentArm::Enhanced => "Enhanced images",
            ExperimentArm::MixedOptimization => "Mixed-optimization",
        }
    }
}

impl fmt::Display for ExperimentArm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentArm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        ExperimentArm::ALL
            .into_iter()
            .find(|a| a.as_str() == norm)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown arm {s:?}")))
    }
}
