//! CLAHE contrast enhancement and grayscale histogram reports.
//!
//! The CLAHE variant here is fully pinned down so results are byte-exact:
//!
//! 1. The image is padded on the right/bottom by edge replication until its
//!    dimensions divide the tile grid.
//! 2. Each tile histogram is clipped at
//!    `T = max(1, floor(clip_limit * tile_area / 256))`; the clipped excess is
//!    spread evenly over all bins, with the remainder going one count per bin
//!    from bin 0 upward.
//! 3. A tile's mapping is its CDF scaled to [0, 255], rounded half up.
//! 4. Each output pixel bilinearly blends the mappings of the four nearest
//!    tile centres (clamped at the borders). All interpolation weights are
//!    rational, so the blend is evaluated in integers and rounded half up.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data_model::GrayImage;
use crate::error::{Error, Result};

pub const BINS: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnhanceConfig {
    pub clip_limit: f64,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub bins: usize,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self { clip_limit: 1.0, tiles_x: 8, tiles_y: 8, bins: BINS }
    }
}

impl EnhanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_limit > 0.0 && self.clip_limit.is_finite()) {
            return Err(Error::InvalidConfig(format!("clip_limit must be positive, got {}", self.clip_limit)));
        }
        if self.tiles_x == 0 || self.tiles_y == 0 {
            return Err(Error::InvalidConfig("tile grid must be at least 1x1".into()));
        }
        if self.bins != BINS {
            return Err(Error::InvalidConfig(format!("bins must be {BINS}, got {}", self.bins)));
        }
        Ok(())
    }

    /// Per-bin clip threshold for a tile of `tile_area` pixels.
    pub fn clip_threshold(&self, tile_area: usize) -> u32 {
        let t = (self.clip_limit * tile_area as f64 / self.bins as f64).floor();
        (t as u32).max(1)
    }
}

/// Intensity mappings of every tile, row-major over the tile grid.
#[derive(Clone, Debug)]
pub struct TileMappings {
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub tile_width: usize,
    pub tile_height: usize,
    pub luts: Vec<[u8; BINS]>,
}

impl TileMappings {
    pub fn lut(&self, tx: usize, ty: usize) -> &[u8; BINS] {
        &self.luts[ty * self.tiles_x + tx]
    }
}

/// Builds the clipped-histogram mapping of every tile.
pub fn tile_mappings(image: &GrayImage, cfg: &EnhanceConfig) -> Result<TileMappings> {
    cfg.validate()?;
    let (w, h) = image.dims();
    if w < cfg.tiles_x || h < cfg.tiles_y {
        return Err(Error::TileTooSmall { width: w, height: h, tiles_x: cfg.tiles_x, tiles_y: cfg.tiles_y });
    }
    let tw = w.div_ceil(cfg.tiles_x);
    let th = h.div_ceil(cfg.tiles_y);
    let area = tw * th;
    let threshold = cfg.clip_threshold(area);

    let mut luts = Vec::with_capacity(cfg.tiles_x * cfg.tiles_y);
    for ty in 0..cfg.tiles_y {
        for tx in 0..cfg.tiles_x {
            let mut hist = [0u32; BINS];
            for y in ty * th..(ty + 1) * th {
                let row = image.row(y.min(h - 1));
                for x in tx * tw..(tx + 1) * tw {
                    hist[row[x.min(w - 1)] as usize] += 1;
                }
            }
            luts.push(clipped_lut(&mut hist, threshold, area));
        }
    }
    Ok(TileMappings { tiles_x: cfg.tiles_x, tiles_y: cfg.tiles_y, tile_width: tw, tile_height: th, luts })
}

fn clipped_lut(hist: &mut [u32; BINS], threshold: u32, area: usize) -> [u8; BINS] {
    let mut excess = 0u32;
    for b in hist.iter_mut() {
        if *b > threshold {
            excess += *b - threshold;
            *b = threshold;
        }
    }
    let share = excess / BINS as u32;
    let remainder = (excess % BINS as u32) as usize;
    for (i, b) in hist.iter_mut().enumerate() {
        *b += share + (i < remainder) as u32;
    }

    let area = area as u64;
    let mut lut = [0u8; BINS];
    let mut cdf = 0u64;
    for (v, &count) in hist.iter().enumerate() {
        cdf += count as u64;
        lut[v] = ((2 * 255 * cdf + area) / (2 * area)).min(255) as u8;
    }
    lut
}

/// One axis of the tile-centre interpolation: the two tiles to blend and the
/// weight numerator of the second tile over a denominator of `2 * tile`.
fn axis_taps(len: usize, tile: usize, tiles: usize) -> Vec<(usize, usize, u64)> {
    (0..len)
        .map(|p| {
            // doubled coordinates: pixel centre 2p+1, tile i centre 2*i*tile + tile
            let pos = 2 * p as i64 + 1 - tile as i64;
            let i0 = pos.div_euclid(2 * tile as i64);
            let frac = pos.rem_euclid(2 * tile as i64) as u64;
            let lo = i0.clamp(0, tiles as i64 - 1) as usize;
            let hi = (i0 + 1).clamp(0, tiles as i64 - 1) as usize;
            (lo, hi, frac)
        })
        .collect()
}

pub fn clahe(image: &GrayImage, cfg: &EnhanceConfig) -> Result<GrayImage> {
    let maps = tile_mappings(image, cfg)?;
    let (w, h) = image.dims();
    let (tw, th) = (maps.tile_width as u64, maps.tile_height as u64);
    let xt = axis_taps(w, maps.tile_width, maps.tiles_x);
    let yt = axis_taps(h, maps.tile_height, maps.tiles_y);
    let den = 4 * tw * th;

    let mut out = Vec::with_capacity(w * h);
    for (y, &(y0, y1, fy)) in yt.iter().enumerate() {
        let wy1 = fy;
        let wy0 = 2 * th - fy;
        for (x, &(x0, x1, fx)) in xt.iter().enumerate() {
            let v = image.get(x, y) as usize;
            let wx1 = fx;
            let wx0 = 2 * tw - fx;
            let num = maps.lut(x0, y0)[v] as u64 * wx0 * wy0
                + maps.lut(x1, y0)[v] as u64 * wx1 * wy0
                + maps.lut(x0, y1)[v] as u64 * wx0 * wy1
                + maps.lut(x1, y1)[v] as u64 * wx1 * wy1;
            out.push(((2 * num + den) / (2 * den)).min(255) as u8);
        }
    }
    GrayImage::new(w, h, out)
}

/// Pooled 256-bin intensity histogram of a set of images.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub bins: Vec<u64>,
    pub source_tag: String,
}

pub fn dataset_histogram<'a>(
    images: impl IntoIterator<Item = &'a GrayImage>,
    tag: impl Into<String>,
) -> Result<HistogramReport> {
    let mut bins = vec![0u64; BINS];
    let mut any = false;
    for img in images {
        any = true;
        for &v in img.data() {
            bins[v as usize] += 1;
        }
    }
    if !any {
        return Err(Error::EmptyInput("histogram needs at least one image"));
    }
    Ok(HistogramReport { bins, source_tag: tag.into() })
}

impl HistogramReport {
    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    /// Smallest intensity whose cumulative share reaches `q` (0..=1).
    pub fn percentile(&self, q: f64) -> u8 {
        let total = self.total();
        let target = (q.clamp(0.0, 1.0) * total as f64).ceil().max(1.0) as u64;
        let mut acc = 0;
        for (v, &c) in self.bins.iter().enumerate() {
            acc += c;
            if acc >= target {
                return v as u8;
            }
        }
        255
    }

    /// Share of pixels with intensity strictly below `level`.
    pub fn mass_below(&self, level: usize) -> f64 {
        let below: u64 = self.bins[..level.min(BINS)].iter().sum();
        below as f64 / self.total().max(1) as f64
    }

    /// Number of local maxima after smoothing with a centred moving average
    /// of `window` bins, ignoring peaks below `min_share` of the top peak.
    pub fn mode_count(&self, window: usize, min_share: f64) -> usize {
        let half = window / 2;
        let smooth: Vec<f64> = (0..BINS)
            .map(|i| {
                let lo = i.saturating_sub(half);
                let hi = (i + half).min(BINS - 1);
                self.bins[lo..=hi].iter().sum::<u64>() as f64 / (hi - lo + 1) as f64
            })
            .collect();
        let top = smooth.iter().cloned().fold(0.0, f64::max);
        let mut peaks = 0;
        let mut i = 0;
        while i < BINS {
            // plateau [i, j)
            let mut j = i + 1;
            while j < BINS && smooth[j] == smooth[i] {
                j += 1;
            }
            let left_lower = i == 0 || smooth[i - 1] < smooth[i];
            let right_lower = j == BINS || smooth[j] < smooth[i];
            if left_lower && right_lower && smooth[i] >= min_share * top && smooth[i] > 0.0 {
                peaks += 1;
            }
            i = j;
        }
        peaks
    }

    /// `bin,count` CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin,count\n");
        for (b, c) in self.bins.iter().enumerate() {
            let _ = writeln!(s, "{b},{c}");
        }
        s
    }

    /// Whitespace-separated two-column text for plotting tools.
    pub fn to_plot_text(&self) -> String {
        let mut s = format!("# {}\n# intensity count\n", self.source_tag);
        for (b, c) in self.bins.iter().enumerate() {
            let _ = writeln!(s, "{b} {c}");
        }
        s
    }
}
