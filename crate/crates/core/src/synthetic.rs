//! Ultrasound-like phantoms and simulated raters.
//!
//! A phantom is a dark, speckled tissue background carrying a few
//! hypoechoic elliptical trunks with bright rims. Frames are rendered at
//! device-capture size with the picture inside the synthetic device's ROI
//! and screen furniture (text blocks, a gray bar) around it, so the crop
//! stage runs exactly as on real captures.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{AnnotatedSample, BinaryMask, Device, GrayImage};
use crate::error::{Error, Result};
use crate::preprocess::DeviceCropProfile;
use crate::rng::{self, derive_seed, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub count: usize,
    pub frame_width: usize,
    pub frame_height: usize,
    /// Inclusive range of trunks per image.
    pub trunks_per_image: (usize, usize),
    /// Trunk radius range in pixels at the 224 network scale.
    pub trunk_radius: (f64, f64),
    /// 0 disables speckle, 1 is fully developed Rayleigh speckle.
    pub speckle_scale: f64,
    pub background_level: f64,
    pub rim_brightness: f64,
    /// Render square `n`×`n` images that are already the ROI (no frame).
    pub network_scale: Option<usize>,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            count: 100,
            frame_width: 700,
            frame_height: 600,
            trunks_per_image: (1, 3),
            trunk_radius: (8.0, 24.0),
            speckle_scale: 1.0,
            background_level: 40.0,
            rim_brightness: 170.0,
            network_scale: None,
            seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.count == 0 {
            return bad("phantom count must be at least 1".into());
        }
        let (rlo, rhi) = self.trunk_radius;
        if !(rlo > 0.0 && rlo <= rhi && rhi.is_finite()) {
            return bad(format!("trunk radius range must be positive and ordered, got {rlo}..{rhi}"));
        }
        if self.trunks_per_image.0 > self.trunks_per_image.1 {
            return bad("trunks_per_image range is reversed".into());
        }
        if !(0.0..=255.0).contains(&self.background_level) || !(0.0..=255.0).contains(&self.rim_brightness) {
            return bad("intensity levels must lie in [0, 255]".into());
        }
        if !(self.speckle_scale >= 0.0 && self.speckle_scale <= 1.0) {
            return bad(format!("speckle_scale must be in [0, 1], got {}", self.speckle_scale));
        }
        match self.network_scale {
            Some(n) if n < 16 => bad(format!("network-scale phantoms need at least 16 pixels, got {n}")),
            Some(_) => Ok(()),
            None => {
                let (w, h) = DeviceCropProfile::SYNTHETIC.min_frame();
                if self.frame_width < w || self.frame_height < h {
                    return bad(format!("frame must be at least {w}x{h} to hold the ROI"));
                }
                Ok(())
            }
        }
    }

    /// Frame size and ROI rectangle `(x, y, w, h)`.
    fn geometry(&self) -> ((usize, usize), (usize, usize, usize, usize)) {
        match self.network_scale {
            Some(n) => ((n, n), (0, 0, n, n)),
            None => {
                let p = DeviceCropProfile::SYNTHETIC;
                ((self.frame_width, self.frame_height), (p.origin_x, p.origin_y, p.crop_width, p.crop_height))
            }
        }
    }
}

/// Rotated ellipse in frame pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

impl Ellipse {
    /// Squared normalized radius of a point; `<= 1` inside.
    pub fn level(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (s, c) = self.theta.sin_cos();
        let u = (dx * c + dy * s) / self.a;
        let v = (-dx * s + dy * c) / self.b;
        u * u + v * v
    }

    /// Membership of pixel `(x, y)` judged at its centre.
    pub fn contains_pixel(&self, x: usize, y: usize) -> bool {
        self.level(x as f64 + 0.5, y as f64 + 0.5) <= 1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub sample: AnnotatedSample,
    pub trunks: Vec<Ellipse>,
}

fn rayleigh_unit_mean(r: &mut Rng) -> f64 {
    // Rayleigh with sigma chosen so the mean is 1.
    let sigma = (2.0 / std::f64::consts::PI).sqrt();
    let u: f64 = r.gen_range(f64::EPSILON..1.0);
    sigma * (-2.0 * u.ln()).sqrt()
}

fn place_trunks(cfg: &PhantomConfig, roi: (usize, usize, usize, usize), r: &mut Rng) -> Vec<Ellipse> {
    let (x0, y0, w, h) = roi;
    let (sx, sy) = (w as f64 / 224.0, h as f64 / 224.0);
    let n = r.gen_range(cfg.trunks_per_image.0..=cfg.trunks_per_image.1);
    let mut out: Vec<Ellipse> = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n && attempts < 200 {
        attempts += 1;
        let radius = r.gen_range(cfg.trunk_radius.0..=cfg.trunk_radius.1);
        let aspect: f64 = r.gen_range(0.75..1.33);
        let a = radius * aspect * sx;
        let b = radius / aspect * sy;
        let reach = a.max(b) * 1.5;
        if 2.0 * reach >= w as f64 || 2.0 * reach >= h as f64 {
            continue;
        }
        let cx = r.gen_range(x0 as f64 + reach..(x0 + w) as f64 - reach);
        let cy = r.gen_range(y0 as f64 + reach..(y0 + h) as f64 - reach);
        let clear = out.iter().all(|e| {
            let d = ((e.cx - cx).powi(2) + (e.cy - cy).powi(2)).sqrt();
            d > 1.4 * (e.a.max(e.b) + a.max(b))
        });
        if clear {
            out.push(Ellipse { cx, cy, a, b, theta: r.gen_range(0.0..std::f64::consts::PI) });
        }
    }
    out
}

fn draw_furniture(img: &mut GrayImage, roi: (usize, usize, usize, usize), r: &mut Rng) {
    let (w, h) = img.dims();
    let (x0, y0, rw, rh) = roi;
    let outside = |x: usize, y: usize| x < x0 || y < y0 || x >= x0 + rw || y >= y0 + rh;
    // text-like blocks along the top and bottom margins
    for band in [(y0.saturating_sub(30), y0.saturating_sub(14)), (y0 + rh + 20, y0 + rh + 36)] {
        let mut x = 10 + r.gen_range(0..20);
        while x + 12 < w.min(x0 + rw) {
            let len = r.gen_range(4..12);
            let level = r.gen_range(180..=255u8);
            for yy in band.0..band.1.min(h) {
                for xx in x..x + len {
                    if outside(xx, yy) {
                        img.set(xx, yy, level);
                    }
                }
            }
            x += len + r.gen_range(3..9);
        }
    }
    // gray-scale bar right of the picture
    let bx = x0 + rw + 30;
    for y in y0..(y0 + rh).min(h) {
        let level = (255 * (y - y0) / rh.max(1)) as u8;
        for x in bx..(bx + 12).min(w) {
            img.set(x, y, level);
        }
    }
}

/// Renders one phantom from its own seed.
pub fn generate_phantom(cfg: &PhantomConfig, id: &str, seed: u64) -> Result<Phantom> {
    cfg.validate()?;
    let ((fw, fh), roi) = cfg.geometry();
    let (x0, y0, rw, rh) = roi;
    let mut r = rng::seeded(seed);
    let trunks = place_trunks(cfg, roi, &mut r);

    // Two gently curved bright fascia bands per picture.
    let bands: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            (
                r.gen_range(y0 as f64..(y0 + rh) as f64),
                r.gen_range(0.02..0.08) * rh as f64,
                r.gen_range(0.5..2.0) * std::f64::consts::PI / rw as f64,
                r.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let band_width = (rh as f64 / 120.0).max(1.0);
    let rim = 0.45;

    let mut img = GrayImage::filled(fw, fh, 0);
    let bg = cfg.background_level;
    for y in y0..y0 + rh {
        for x in x0..x0 + rw {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut level = bg;
            for &(c, amp, freq, phase) in &bands {
                let d = (py - (c + amp * (freq * (px - x0 as f64) + phase).sin())).abs();
                if d < band_width {
                    level = level.max(bg + 0.5 * (cfg.rim_brightness - bg) * (1.0 - d / band_width));
                }
            }
            for e in &trunks {
                let q = e.level(px, py).sqrt();
                if q <= 1.0 {
                    level = 0.35 * bg;
                } else if q < 1.0 + rim {
                    level = level.max(cfg.rim_brightness * (1.0 - (q - 1.0) / rim));
                }
            }
            let speckle = 1.0 + cfg.speckle_scale * (rayleigh_unit_mean(&mut r) - 1.0);
            img.set(x, y, (level * speckle).round().clamp(0.0, 255.0) as u8);
        }
    }
    if cfg.network_scale.is_none() {
        draw_furniture(&mut img, roi, &mut r);
    }
    let mask = BinaryMask::from_fn(fw, fh, |x, y| trunks.iter().any(|e| e.contains_pixel(x, y)));
    Ok(Phantom { sample: AnnotatedSample::new(id, Device::Synthetic, img, mask), trunks })
}

/// Phantom `i` is `syn{i:04}`, rendered from a seed derived from its id.
pub fn generate_phantom_dataset(cfg: &PhantomConfig) -> Result<Vec<Phantom>> {
    cfg.validate()?;
    (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            let id = format!("syn{i:04}");
            let seed = derive_seed(cfg.seed, &id);
            generate_phantom(cfg, &id, seed)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RaterSimConfig {
    /// Positive grows the mask by this many pixels, negative shrinks it.
    pub dilate_or_erode: i32,
    pub boundary_jitter_sd: f64,
    pub drop_probability: f64,
    pub seed: u64,
}

impl Default for RaterSimConfig {
    fn default() -> Self {
        Self { dilate_or_erode: 0, boundary_jitter_sd: 0.0, drop_probability: 0.0, seed: 0 }
    }
}

impl RaterSimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(Error::InvalidConfig(format!("drop_probability must be in [0, 1], got {}", self.drop_probability)));
        }
        if !(self.boundary_jitter_sd >= 0.0 && self.boundary_jitter_sd.is_finite()) {
            return Err(Error::InvalidConfig("boundary_jitter_sd must be finite and non-negative".into()));
        }
        Ok(())
    }
}

const FAR: f64 = 1e20;

/// 1-D squared distance transform of a sampled function (lower envelope
/// of parabolas). Unreachable samples carry `FAR`.
fn dt1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let key = |q: usize| f[q] + (q * q) as f64;
    for q in 1..n {
        let mut s = (key(q) - key(v[k])) / (2.0 * (q - v[k]) as f64);
        while s <= z[k] {
            k -= 1;
            s = (key(q) - key(v[k])) / (2.0 * (q - v[k]) as f64);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance from every pixel to the nearest pixel where
/// `target` holds (infinite when there is none).
pub fn squared_distance_to(target: &[bool], width: usize, height: usize) -> Vec<f64> {
    let mut g: Vec<f64> = target.iter().map(|&t| if t { 0.0 } else { FAR }).collect();
    let n = width.max(height);
    let (mut v, mut z, mut buf, mut out) = (vec![0; n], vec![0.0; n + 1], vec![0.0; n], vec![0.0; n]);
    for x in 0..width {
        for y in 0..height {
            buf[y] = g[y * width + x];
        }
        dt1d(&buf[..height], &mut out[..height], &mut v, &mut z);
        for y in 0..height {
            g[y * width + x] = out[y];
        }
    }
    for y in 0..height {
        let row = &mut g[y * width..(y + 1) * width];
        buf[..width].copy_from_slice(row);
        dt1d(&buf[..width], &mut out[..width], &mut v, &mut z);
        row.copy_from_slice(&out[..width]);
    }
    for v in g.iter_mut() {
        if *v >= FAR {
            *v = f64::INFINITY;
        }
    }
    g
}

/// Smooth random field: Gaussian values on a coarse grid, bilinearly
/// interpolated.
fn smooth_noise(width: usize, height: usize, sd: f64, cell: usize, r: &mut Rng) -> Vec<f64> {
    let gw = width / cell + 2;
    let gh = height / cell + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| sd * Distribution::<f64>::sample(&StandardNormal, r)).collect();
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        let fy = y as f64 / cell as f64;
        let (iy, ty) = (fy.floor() as usize, fy.fract());
        for x in 0..width {
            let fx = x as f64 / cell as f64;
            let (ix, tx) = (fx.floor() as usize, fx.fract());
            let g = |i: usize, j: usize| grid[j * gw + i];
            let top = g(ix, iy) * (1.0 - tx) + g(ix + 1, iy) * tx;
            let bot = g(ix, iy + 1) * (1.0 - tx) + g(ix + 1, iy + 1) * tx;
            out[y * width + x] = top * (1.0 - ty) + bot * ty;
        }
    }
    out
}

/// 8-connected component labels (0 = background) and the component count.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, u32) {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if mask.data()[start] == 0 || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (x, y) = ((p % w) as isize, (p / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if mask.data()[q] != 0 && labels[q] == 0 {
                        labels[q] = next;
                        stack.push(q);
                    }
                }
            }
        }
    }
    (labels, next)
}

/// Perturbs a consensus mask the way a human rater might disagree with it:
/// grow or shrink by a Euclidean radius, wobble the boundary with a smooth
/// random offset, then drop whole components at random.
pub fn simulate_rater(consensus: &BinaryMask, cfg: &RaterSimConfig) -> Result<BinaryMask> {
    cfg.validate()?;
    let (w, h) = consensus.dims();
    let mut r = rng::seeded(cfg.seed);
    let mut out = if cfg.dilate_or_erode == 0 && cfg.boundary_jitter_sd == 0.0 {
        consensus.clone()
    } else {
        let fg: Vec<bool> = consensus.data().iter().map(|&v| v != 0).collect();
        let bg: Vec<bool> = fg.iter().map(|&v| !v).collect();
        let to_fg = squared_distance_to(&fg, w, h);
        let to_bg = squared_distance_to(&bg, w, h);
        let jitter = if cfg.boundary_jitter_sd > 0.0 {
            smooth_noise(w, h, cfg.boundary_jitter_sd, 8, &mut r)
        } else {
            vec![0.0; w * h]
        };
        let data = (0..w * h)
            .map(|i| {
                let t = cfg.dilate_or_erode as f64 + jitter[i];
                let keep = if t >= 0.0 { fg[i] || to_fg[i] <= t * t } else { fg[i] && to_bg[i] > t * t };
                keep as u8
            })
            .collect();
        BinaryMask::new(w, h, data)?
    };
    if cfg.drop_probability > 0.0 {
        let (labels, n) = label_components(&out);
        let dropped: Vec<bool> = (0..=n).map(|l| l > 0 && r.gen_bool(cfg.drop_probability)).collect();
        let data = labels.iter().map(|&l| (l > 0 && !dropped[l as usize]) as u8).collect();
        out = BinaryMask::new(w, h, data)?;
    }
    Ok(out)
}

/// A simulated rater: first-pass and optional second-pass perturbations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaterSpec {
    pub id: String,
    pub first: RaterSimConfig,
    pub second: Option<RaterSimConfig>,
}

/// Fills `rater_masks` (and `second_pass_masks`) of every sample, seeding
/// each mask from the rater config seed, the sample id and the rater id.
pub fn attach_raters(samples: &mut [AnnotatedSample], raters: &[RaterSpec]) -> Result<()> {
    for s in samples.iter_mut() {
        for rater in raters {
            let tag = format!("{}/{}", s.id, rater.id);
            let first = RaterSimConfig { seed: derive_seed(rater.first.seed, &tag), ..rater.first.clone() };
            s.rater_masks.insert(rater.id.clone(), simulate_rater(&s.consensus, &first)?);
            if let Some(second) = &rater.second {
                let cfg = RaterSimConfig { seed: derive_seed(second.seed, &tag), ..second.clone() };
                s.second_pass_masks.insert(rater.id.clone(), simulate_rater(&s.consensus, &cfg)?);
            }
        }
    }
    Ok(())
}

/// Three raters of increasing disagreement with the consensus.
pub fn default_raters(seed: u64) -> Vec<RaterSpec> {
    let mk = |d: i32, sd: f64, p: f64, tag: &str| RaterSimConfig {
        dilate_or_erode: d,
        boundary_jitter_sd: sd,
        drop_probability: p,
        seed: derive_seed(seed, tag),
    };
    vec![
        RaterSpec { id: "a".into(), first: mk(2, 1.0, 0.0, "a"), second: Some(mk(1, 0.5, 0.0, "a2")) },
        RaterSpec { id: "b".into(), first: mk(-4, 2.5, 0.05, "b"), second: Some(mk(-2, 1.0, 0.0, "b2")) },
        RaterSpec { id: "c".into(), first: mk(7, 4.0, 0.15, "c"), second: Some(mk(3, 2.0, 0.05, "c2")) },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::iou;
    use crate::preprocess::{crop_roi, crop_roi_mask};
    use proptest::prelude::*;

    fn disk(n: usize, r: f64) -> BinaryMask {
        let c = n as f64 / 2.0;
        BinaryMask::from_fn(n, n, |x, y| (x as f64 + 0.5 - c).powi(2) + (y as f64 + 0.5 - c).powi(2) <= r * r)
    }

    #[test]
    fn masks_match_the_ellipse_oracle() {
        let cfg = PhantomConfig { count: 6, seed: 3, ..Default::default() };
        let phantoms = generate_phantom_dataset(&cfg).unwrap();
        assert_eq!(phantoms.len(), 6);
        for p in &phantoms {
            let m = &p.sample.consensus;
            assert_eq!(m.dims(), (700, 600));
            for y in 0..600 {
                for x in 0..700 {
                    let inside = p.trunks.iter().any(|e| e.contains_pixel(x, y));
                    assert_eq!(m.get(x, y), inside);
                }
            }
            assert!(!p.trunks.is_empty() && p.trunks.len() <= 3);
            // foreground only inside the ROI
            let prof = DeviceCropProfile::SYNTHETIC;
            assert_eq!(crop_roi_mask(m, &prof).unwrap().count_ones(), m.count_ones());
        }
        assert_eq!(generate_phantom_dataset(&cfg).unwrap(), phantoms);
    }

    #[test]
    fn no_trunks_means_empty_masks() {
        let cfg = PhantomConfig { count: 3, trunks_per_image: (0, 0), network_scale: Some(64), ..Default::default() };
        for p in generate_phantom_dataset(&cfg).unwrap() {
            assert_eq!(p.sample.consensus.count_ones(), 0);
        }
    }

    #[test]
    fn phantoms_are_dark_and_trunks_hypoechoic() {
        let p = &generate_phantom_dataset(&PhantomConfig { count: 1, seed: 8, ..Default::default() }).unwrap()[0];
        let roi = crop_roi(&p.sample.image, &DeviceCropProfile::SYNTHETIC).unwrap();
        let mask = crop_roi_mask(&p.sample.consensus, &DeviceCropProfile::SYNTHETIC).unwrap();
        let mean = |sel: bool| {
            let v: Vec<f64> = roi.data().iter().zip(mask.data()).filter(|(_, &m)| (m != 0) == sel).map(|(&i, _)| i as f64).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (inside, outside) = (mean(true), mean(false));
        assert!(inside < outside, "{inside} vs {outside}");
        assert!(outside < 80.0);
    }

    #[test]
    fn invalid_configs() {
        assert!(PhantomConfig { count: 0, ..Default::default() }.validate().is_err());
        assert!(PhantomConfig { trunk_radius: (0.0, 3.0), ..Default::default() }.validate().is_err());
        assert!(PhantomConfig { frame_width: 500, ..Default::default() }.validate().is_err());
        assert!(PhantomConfig { background_level: 300.0, ..Default::default() }.validate().is_err());
        assert!(RaterSimConfig { drop_probability: 1.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let mut r = rng::seeded(5);
        let (w, h) = (13, 9);
        let target: Vec<bool> = (0..w * h).map(|_| r.gen_bool(0.1)).collect();
        let d = squared_distance_to(&target, w, h);
        for p in 0..w * h {
            let best = (0..w * h)
                .filter(|&q| target[q])
                .map(|q| {
                    let dx = (p % w) as f64 - (q % w) as f64;
                    let dy = (p / w) as f64 - (q / w) as f64;
                    dx * dx + dy * dy
                })
                .fold(f64::INFINITY, f64::min);
            assert_eq!(d[p], best);
        }
        assert!(squared_distance_to(&[false; 6], 3, 2).iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn rater_examples() {
        let m = disk(64, 20.0);
        assert_eq!(simulate_rater(&m, &RaterSimConfig::default()).unwrap(), m);
        let grown = simulate_rater(&m, &RaterSimConfig { dilate_or_erode: 1, ..Default::default() }).unwrap();
        assert!(grown.count_ones() > m.count_ones());
        let eroded = simulate_rater(&m, &RaterSimConfig { dilate_or_erode: -2, ..Default::default() }).unwrap();
        let v = iou(&eroded, &m).unwrap();
        assert!((v - 0.81).abs() <= 0.02, "{v}");
        let gone = simulate_rater(&m, &RaterSimConfig { drop_probability: 1.0, ..Default::default() }).unwrap();
        assert_eq!(gone.count_ones(), 0);
    }

    #[test]
    fn components_are_eight_connected() {
        let m = BinaryMask::new(4, 3, vec![1, 0, 0, 1, 0, 1, 0, 1, 0, 0, 0, 0]).unwrap();
        let (labels, n) = label_components(&m);
        assert_eq!(n, 2);
        assert_eq!(labels[0], labels[5]);
        assert_eq!(labels[3], labels[7]);
    }

    #[test]
    fn default_raters_disagree_increasingly() {
        let cfg = PhantomConfig { count: 12, seed: 2, network_scale: Some(224), ..Default::default() };
        let mut samples: Vec<AnnotatedSample> = generate_phantom_dataset(&cfg).unwrap().into_iter().map(|p| p.sample).collect();
        attach_raters(&mut samples, &default_raters(1)).unwrap();
        let score = |rater: &str| {
            crate::metrics::score_pairs(samples.iter().map(|s| (&s.rater_masks[rater], &s.consensus))).unwrap().aggregate
        };
        let (a, b, c) = (score("a"), score("b"), score("c"));
        assert!(a > b && b > c, "{a} {b} {c}");
        for s in &samples {
            assert!(s.second_pass_masks.contains_key("c"));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn nonzero_morphology_always_changes_the_mask(
            bits in proptest::collection::vec(proptest::bool::weighted(0.3), 20 * 15),
            radius in 1i32..4,
            grow: bool,
            p in 0.0f64..1.0,
            seed: u64,
        ) {
            let m = BinaryMask::from_fn(20, 15, |x, y| bits[y * 20 + x]);
            prop_assume!(m.count_ones() > 0 && m.count_ones() < 300);
            let cfg = RaterSimConfig { dilate_or_erode: if grow { radius } else { -radius }, drop_probability: p, seed, ..Default::default() };
            let out = simulate_rater(&m, &cfg).unwrap();
            prop_assert!(out.is_binary());
            prop_assert_ne!(out, m);
        }
    }
}
