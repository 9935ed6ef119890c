use serde::{Deserialize, Serialize};

use crate::data_model::{GrayImage, ScoreMap};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Batch of feature maps stored channel-major: `[channel][image][row][col]`.
///
/// With this layout one channel of the whole batch is a contiguous run,
/// convolutions over the batch are single strided GEMMs, and concatenation
/// along channels is a plain append.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    pub channels: usize,
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn zeros(channels: usize, batch: usize, height: usize, width: usize) -> Self {
        Self { channels, batch, height, width, data: vec![T::zero(); channels * batch * height * width] }
    }

    pub fn from_data(channels: usize, batch: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * batch * height * width {
            return Err(Error::ShapeMismatch(format!(
                "feature map {channels}x{batch}x{height}x{width} needs {} values, got {}",
                channels * batch * height * width,
                data.len()
            )));
        }
        Ok(Self { channels, batch, height, width, data })
    }

    /// Single-channel batch with intensities scaled to [0, 1].
    pub fn from_images(images: &[&GrayImage]) -> Result<Self> {
        let first = images.first().ok_or(Error::EmptyInput("network input batch"))?;
        let (w, h) = first.dims();
        let mut data = Vec::with_capacity(images.len() * w * h);
        let scale = T::from_f64_lossy(1.0 / 255.0);
        for img in images {
            if img.dims() != (w, h) {
                return Err(Error::ShapeMismatch(format!("batch mixes {:?} and {:?}", (w, h), img.dims())));
            }
            data.extend(img.data().iter().map(|&v| T::from_u8(v).expect("u8 fits") * scale));
        }
        Ok(Self { channels: 1, batch: images.len(), height: h, width: w, data })
    }

    /// Single-channel batch from score maps (all the same size).
    pub fn from_score_maps(maps: &[ScoreMap<T>]) -> Result<Self> {
        let first = maps.first().ok_or(Error::EmptyInput("score map batch"))?;
        let (w, h) = first.dims();
        let mut data = Vec::with_capacity(maps.len() * w * h);
        for m in maps {
            if m.dims() != (w, h) {
                return Err(Error::ShapeMismatch(format!("batch mixes {:?} and {:?}", (w, h), m.dims())));
            }
            data.extend_from_slice(m.data());
        }
        Ok(Self { channels: 1, batch: maps.len(), height: h, width: w, data })
    }

    /// Splits a single-channel batch into per-image score maps.
    pub fn to_score_maps(&self) -> Result<Vec<ScoreMap<T>>> {
        if self.channels != 1 {
            return Err(Error::ShapeMismatch(format!("expected 1 channel, got {}", self.channels)));
        }
        self.data
            .chunks(self.plane())
            .map(|c| ScoreMap::new(self.width, self.height, c.to_vec()))
            .collect()
    }

    #[inline]
    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    /// Elements per channel across the batch.
    #[inline]
    pub fn channel_len(&self) -> usize {
        self.batch * self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.channel_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.channel_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Image `b` of channel `c`.
    pub fn plane_of(&self, c: usize, b: usize) -> &[T] {
        let p = self.plane();
        let start = (c * self.batch + b) * p;
        &self.data[start..start + p]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        (self.channels, self.batch, self.height, self.width)
            == (other.channels, other.batch, other.height, other.width)
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.channels, self.batch, self.height, self.width]
    }

    /// Appends `other`'s channels after this map's channels.
    pub fn concat_channels(mut self, other: &Self) -> Result<Self> {
        if (self.batch, self.height, self.width) != (other.batch, other.height, other.width) {
            return Err(Error::ShapeMismatch(format!(
                "concat {:?} with {:?}",
                self.shape(),
                other.shape()
            )));
        }
        self.data.extend_from_slice(&other.data);
        self.channels += other.channels;
        Ok(self)
    }

    /// Splits off the first `channels` channels.
    pub fn split_channels(mut self, channels: usize) -> (Self, Self) {
        let n = self.channel_len();
        let tail = self.data.split_off(channels * n);
        let rest = Self {
            channels: self.channels - channels,
            batch: self.batch,
            height: self.height,
            width: self.width,
            data: tail,
        };
        self.channels = channels;
        (self, rest)
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert!(self.same_shape(other), "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Named dense parameter block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], v: T) -> Self {
        Self { shape: shape.to_vec(), data: vec![v; shape.iter().product()] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}
