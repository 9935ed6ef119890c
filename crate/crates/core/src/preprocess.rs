//! Device ROI cropping, resizing, polygon rasterization and the six-fold
//! training augmentation.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data_model::{BinaryMask, Device, GrayImage};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Where the ultrasound picture sits inside a device's screen capture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceCropProfile {
    pub device: Device,
    pub origin_x: usize,
    pub origin_y: usize,
    pub crop_width: usize,
    pub crop_height: usize,
}

impl DeviceCropProfile {
    pub const YGY: DeviceCropProfile = DeviceCropProfile {
        device: Device::Ygy,
        origin_x: 87,
        origin_y: 47,
        crop_width: 510,
        crop_height: 356,
    };
    pub const BK3000_IF1: DeviceCropProfile = DeviceCropProfile {
        device: Device::Bk3000If1,
        origin_x: 278,
        origin_y: 174,
        crop_width: 553,
        crop_height: 492,
    };
    pub const BK3000_IF2: DeviceCropProfile = DeviceCropProfile {
        device: Device::Bk3000If2,
        origin_x: 165,
        origin_y: 172,
        crop_width: 595,
        crop_height: 529,
    };
    /// Synthetic phantoms are rendered into a YGY-shaped frame.
    pub const SYNTHETIC: DeviceCropProfile = DeviceCropProfile { device: Device::Synthetic, ..Self::YGY };

    pub fn for_device(device: Device) -> DeviceCropProfile {
        match device {
            Device::Ygy => Self::YGY,
            Device::Bk3000If1 => Self::BK3000_IF1,
            Device::Bk3000If2 => Self::BK3000_IF2,
            Device::Synthetic => Self::SYNTHETIC,
        }
    }

    /// Smallest frame the ROI fits in.
    pub fn min_frame(&self) -> (usize, usize) {
        (self.origin_x + self.crop_width, self.origin_y + self.crop_height)
    }
}

/// Pure geometric operations shared by images and masks. Images resample
/// bilinearly, masks by nearest neighbour so they stay binary.
pub trait Raster: Sized + Clone {
    fn dims(&self) -> (usize, usize);
    fn resized(&self, width: usize, height: usize) -> Self;
    fn flipped_horizontally(&self) -> Self;
    fn cropped(&self, x: usize, y: usize, width: usize, height: usize) -> Self;
}

impl Raster for GrayImage {
    fn dims(&self) -> (usize, usize) {
        GrayImage::dims(self)
    }

    fn resized(&self, width: usize, height: usize) -> Self {
        resize_bilinear(self, width, height)
    }

    fn flipped_horizontally(&self) -> Self {
        let w = self.width();
        GrayImage::from_fn(w, self.height(), |x, y| self.get(w - 1 - x, y))
    }

    fn cropped(&self, x0: usize, y0: usize, width: usize, height: usize) -> Self {
        GrayImage::from_fn(width, height, |x, y| self.get(x0 + x, y0 + y))
    }
}

impl Raster for BinaryMask {
    fn dims(&self) -> (usize, usize) {
        BinaryMask::dims(self)
    }

    fn resized(&self, width: usize, height: usize) -> Self {
        let (sw, sh) = self.dims();
        let xs: Vec<usize> = (0..width).map(|x| nearest_source(x, sw, width)).collect();
        let ys: Vec<usize> = (0..height).map(|y| nearest_source(y, sh, height)).collect();
        BinaryMask::from_fn(width, height, |x, y| self.get(xs[x], ys[y]))
    }

    fn flipped_horizontally(&self) -> Self {
        let w = self.width();
        BinaryMask::from_fn(w, self.height(), |x, y| self.get(w - 1 - x, y))
    }

    fn cropped(&self, x0: usize, y0: usize, width: usize, height: usize) -> Self {
        BinaryMask::from_fn(width, height, |x, y| self.get(x0 + x, y0 + y))
    }
}

/// Extracts the device ROI. Output pixel (0,0) is input pixel
/// (origin_x, origin_y).
pub fn crop_roi(image: &GrayImage, profile: &DeviceCropProfile) -> Result<GrayImage> {
    check_roi(image.dims(), profile)?;
    Ok(image.cropped(profile.origin_x, profile.origin_y, profile.crop_width, profile.crop_height))
}

/// [`crop_roi`] for a label mask aligned with the frame.
pub fn crop_roi_mask(mask: &BinaryMask, profile: &DeviceCropProfile) -> Result<BinaryMask> {
    check_roi(mask.dims(), profile)?;
    Ok(mask.cropped(profile.origin_x, profile.origin_y, profile.crop_width, profile.crop_height))
}

fn check_roi((width, height): (usize, usize), p: &DeviceCropProfile) -> Result<()> {
    let (need_w, need_h) = p.min_frame();
    if width < need_w || height < need_h || p.crop_width == 0 || p.crop_height == 0 {
        return Err(Error::ImageTooSmall {
            width,
            height,
            x: p.origin_x,
            y: p.origin_y,
            crop_width: p.crop_width,
            crop_height: p.crop_height,
        });
    }
    Ok(())
}

/// Resizes an image (bilinear) or a mask (nearest neighbour).
pub fn resize<R: Raster>(x: &R, width: usize, height: usize) -> R {
    assert!(width > 0 && height > 0, "resize target must be positive");
    if x.dims() == (width, height) {
        return x.clone();
    }
    x.resized(width, height)
}

/// Mirrors columns: column c maps to column width-1-c.
pub fn horizontal_flip<R: Raster>(x: &R) -> R {
    x.flipped_horizontally()
}

// Half-pixel-centre mapping; an identity resize maps every pixel onto itself.
fn source_coord(dst: usize, src_len: usize, dst_len: usize) -> f64 {
    let scale = src_len as f64 / dst_len as f64;
    ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64)
}

fn nearest_source(dst: usize, src_len: usize, dst_len: usize) -> usize {
    let scale = src_len as f64 / dst_len as f64;
    (((dst as f64 + 0.5) * scale).floor() as usize).min(src_len - 1)
}

fn resize_bilinear(img: &GrayImage, width: usize, height: usize) -> GrayImage {
    let (sw, sh) = img.dims();
    let taps = |len_dst: usize, len_src: usize| -> Vec<(usize, usize, f64)> {
        (0..len_dst)
            .map(|d| {
                let s = source_coord(d, len_src, len_dst);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(len_src - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let xt = taps(width, sw);
    let yt = taps(height, sh);
    GrayImage::from_fn(width, height, |x, y| {
        let (x0, x1, fx) = xt[x];
        let (y0, y1, fy) = yt[y];
        let top = img.get(x0, y0) as f64 * (1.0 - fx) + img.get(x1, y0) as f64 * fx;
        let bottom = img.get(x0, y1) as f64 * (1.0 - fx) + img.get(x1, y1) as f64 * fx;
        let v = top * (1.0 - fy) + bottom * fy;
        (v + 0.5).floor().clamp(0.0, 255.0) as u8
    })
}

/// Closed polygon in image coordinates (pixel (x,y) covers [x,x+1)×[y,y+1)).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<(f64, f64)>,
}

impl Polygon {
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidConfig("polygon vertex is not finite".into()));
        }
        let poly = Self { vertices };
        let distinct = poly.distinct_vertices();
        if distinct < 3 {
            return Err(Error::DegeneratePolygon { distinct });
        }
        Ok(poly)
    }

    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { vertices: vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)] }
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    fn distinct_vertices(&self) -> usize {
        let mut pts: Vec<(u64, u64)> =
            self.vertices.iter().map(|(x, y)| (x.to_bits(), y.to_bits())).collect();
        pts.sort_unstable();
        pts.dedup();
        pts.len()
    }
}

/// Rasterizes the union of polygons: a pixel is set iff its centre lies
/// inside at least one polygon under the even-odd rule.
pub fn rasterize_polygons(polys: &[Polygon], width: usize, height: usize) -> Result<BinaryMask> {
    assert!(width > 0 && height > 0, "raster dimensions must be positive");
    let mut mask = BinaryMask::zeros(width, height);
    let mut parity = vec![0u8; width + 1];
    for poly in polys {
        let distinct = poly.distinct_vertices();
        if distinct < 3 {
            return Err(Error::DegeneratePolygon { distinct });
        }
        let v = &poly.vertices;
        for y in 0..height {
            let yc = y as f64 + 0.5;
            parity.iter_mut().for_each(|p| *p = 0);
            let mut j = v.len() - 1;
            for i in 0..v.len() {
                let (xi, yi) = v[i];
                let (xj, yj) = v[j];
                if (yi > yc) != (yj > yc) {
                    let xcross = (xj - xi) * (yc - yi) / (yj - yi) + xi;
                    // pixels whose centre lies strictly left of the crossing
                    let n = toggled_prefix(xcross, width);
                    parity[0] ^= 1;
                    parity[n] ^= 1;
                }
                j = i;
            }
            let mut inside = 0u8;
            for x in 0..width {
                inside ^= parity[x];
                if inside == 1 {
                    mask.set(x, y, true);
                }
            }
        }
    }
    Ok(mask)
}

/// Number of leading pixels x with `x + 0.5 < xcross`, clamped to the row.
fn toggled_prefix(xcross: f64, width: usize) -> usize {
    let guess = (xcross - 0.5).ceil();
    let mut n = if guess <= 0.0 { 0 } else { (guess as usize).min(width) };
    while n > 0 && !((n - 1) as f64 + 0.5 < xcross) {
        n -= 1;
    }
    while n < width && (n as f64 + 0.5) < xcross {
        n += 1;
    }
    n
}

/// A polygon with its annotation label, as found in annotation files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPolygon {
    pub label: String,
    pub points: Vec<[f64; 2]>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnnotationFile {
    List(Vec<LabeledPolygon>),
    // Labelme-style document with the polygons under "shapes".
    Shapes { shapes: Vec<LabeledPolygon> },
}

pub fn parse_annotation(json: &str) -> Result<Vec<LabeledPolygon>> {
    Ok(match serde_json::from_str::<AnnotationFile>(json)? {
        AnnotationFile::List(v) => v,
        AnnotationFile::Shapes { shapes } => shapes,
    })
}

/// Trunk polygons are those whose label begins with "BP".
pub fn trunk_polygons(shapes: &[LabeledPolygon]) -> Result<Vec<Polygon>> {
    shapes
        .iter()
        .filter(|s| s.label.starts_with("BP"))
        .map(|s| Polygon::new(s.points.iter().map(|p| (p[0], p[1])).collect()))
        .collect()
}

/// Crops `size`×`size` at a uniformly drawn offset, same offset for both.
pub fn random_crop(
    image: &GrayImage,
    mask: &BinaryMask,
    size: usize,
    rng: &mut Rng,
) -> Result<(GrayImage, BinaryMask)> {
    let (x, y) = random_crop_offset(image, mask, size, rng)?;
    Ok((image.cropped(x, y, size, size), mask.cropped(x, y, size, size)))
}

/// Draws the offset [`random_crop`] would use.
pub fn random_crop_offset(
    image: &GrayImage,
    mask: &BinaryMask,
    size: usize,
    rng: &mut Rng,
) -> Result<(usize, usize)> {
    let (w, h) = image.dims();
    if mask.dims() != (w, h) {
        return Err(Error::ShapeMismatch(format!(
            "image {w}x{h} vs mask {}x{}",
            mask.width(),
            mask.height()
        )));
    }
    if size == 0 || size > w || size > h {
        return Err(Error::CropTooLarge { size, width: w, height: h });
    }
    Ok((rng.gen_range(0..=w - size), rng.gen_range(0..=h - size)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub pre_crop_size: usize,
    pub final_size: usize,
    pub crops_per_image: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { pre_crop_size: 256, final_size: 224, crops_per_image: 2, seed: 0 }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.final_size == 0 || self.pre_crop_size <= self.final_size {
            return Err(Error::InvalidConfig(format!(
                "augmentation needs pre_crop_size > final_size > 0, got {} and {}",
                self.pre_crop_size, self.final_size
            )));
        }
        Ok(())
    }

    /// Number of training pairs one source pair expands into.
    pub fn multiplicity(&self) -> usize {
        2 * (1 + self.crops_per_image)
    }
}

/// How an augmented pair was derived from its source ROI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentTransform {
    pub flipped: bool,
    /// Crop offset in the `pre_crop_size` resize; `None` for the plain resize.
    pub crop_offset: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedPair {
    pub image: GrayImage,
    pub mask: BinaryMask,
    pub transform: AugmentTransform,
}

/// Expands one ROI pair into `2 * (1 + crops_per_image)` training pairs,
/// ordered `[original, crop_1.., flipped, flipped_crop_1..]`, all
/// `final_size`×`final_size`.
///
/// The plain entries are resized straight to `final_size`; the crops are
/// taken from a `pre_crop_size` resize so that a random crop is possible.
pub fn augment_sixfold(
    image: &GrayImage,
    mask: &BinaryMask,
    cfg: &AugmentConfig,
) -> Result<Vec<AugmentedPair>> {
    cfg.validate()?;
    if image.dims() != mask.dims() {
        return Err(Error::ShapeMismatch(format!(
            "image {:?} vs mask {:?}",
            image.dims(),
            mask.dims()
        )));
    }
    let mut rng = rng::seeded(cfg.seed);
    let base_img = resize(image, cfg.final_size, cfg.final_size);
    let base_mask = resize(mask, cfg.final_size, cfg.final_size);
    let pre_img = resize(image, cfg.pre_crop_size, cfg.pre_crop_size);
    let pre_mask = resize(mask, cfg.pre_crop_size, cfg.pre_crop_size);

    let mut out = Vec::with_capacity(cfg.multiplicity());
    for flipped in [false, true] {
        let (bi, bm, pi, pm) = if flipped {
            (
                horizontal_flip(&base_img),
                horizontal_flip(&base_mask),
                horizontal_flip(&pre_img),
                horizontal_flip(&pre_mask),
            )
        } else {
            (base_img.clone(), base_mask.clone(), pre_img.clone(), pre_mask.clone())
        };
        out.push(AugmentedPair {
            image: bi,
            mask: bm,
            transform: AugmentTransform { flipped, crop_offset: None },
        });
        for _ in 0..cfg.crops_per_image {
            let (x, y) = random_crop_offset(&pi, &pm, cfg.final_size, &mut rng)?;
            out.push(AugmentedPair {
                image: pi.cropped(x, y, cfg.final_size, cfg.final_size),
                mask: pm.cropped(x, y, cfg.final_size, cfg.final_size),
                transform: AugmentTransform { flipped, crop_offset: Some((x, y)) },
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| ((x * 7 + y * 13) % 251) as u8)
    }

    #[test]
    fn builtin_profiles_match_the_device_geometry() {
        let p = DeviceCropProfile::YGY;
        assert_eq!((p.origin_x, p.origin_y, p.crop_width, p.crop_height), (87, 47, 510, 356));
        let p = DeviceCropProfile::BK3000_IF1;
        assert_eq!((p.origin_x, p.origin_y, p.crop_width, p.crop_height), (278, 174, 553, 492));
        let p = DeviceCropProfile::BK3000_IF2;
        assert_eq!((p.origin_x, p.origin_y, p.crop_width, p.crop_height), (165, 172, 595, 529));
    }

    #[test]
    fn crop_roi_moves_origin_marker_to_zero() {
        let mut img = GrayImage::filled(700, 600, 0);
        img.set(87, 47, 255);
        let out = crop_roi(&img, &DeviceCropProfile::YGY).unwrap();
        assert_eq!(out.dims(), (510, 356));
        assert_eq!(out.get(0, 0), 255);
        assert_eq!(out.data().iter().filter(|&&v| v == 255).count(), 1);
    }

    #[test]
    fn crop_roi_rejects_small_frames() {
        let img = GrayImage::filled(400, 300, 0);
        assert!(matches!(crop_roi(&img, &DeviceCropProfile::YGY), Err(Error::ImageTooSmall { .. })));
        // exactly large enough
        let img = GrayImage::filled(597, 403, 0);
        assert!(crop_roi(&img, &DeviceCropProfile::YGY).is_ok());
    }

    #[test]
    fn resize_reaches_network_size() {
        let roi = frame(510, 356);
        assert_eq!(resize(&roi, 224, 224).dims(), (224, 224));
    }

    #[test]
    fn resize_preserves_constants_and_identity() {
        let c = GrayImage::filled(510, 356, 77);
        assert!(resize(&c, 224, 224).data().iter().all(|&v| v == 77));
        let up = resize(&GrayImage::filled(7, 5, 200), 31, 29);
        assert!(up.data().iter().all(|&v| v == 200));
        let img = frame(224, 224);
        assert_eq!(resize(&img, 224, 224), img);
        assert_eq!(img.resized(224, 224), img);
        let m = BinaryMask::from_fn(224, 224, |x, y| (x + y) % 3 == 0);
        assert_eq!(m.resized(224, 224), m);
    }

    #[test]
    fn bilinear_interpolates_between_neighbours() {
        // 2x1 -> 4x1 with half-pixel centres: taps at -0.25, 0.25, 0.75, 1.25
        let img = GrayImage::new(2, 1, vec![0, 100]).unwrap();
        let out = resize(&img, 4, 1);
        assert_eq!(out.data(), &[0, 25, 75, 100]);
    }

    #[test]
    fn full_canvas_rectangle_sets_every_pixel() {
        let m = rasterize_polygons(&[Polygon::rect(0.0, 0.0, 20.0, 10.0)], 20, 10).unwrap();
        assert_eq!(m.count_ones(), 200);
    }

    #[test]
    fn disjoint_rectangles_union() {
        let polys = [Polygon::rect(10.0, 10.0, 15.0, 15.0), Polygon::rect(50.0, 60.0, 54.0, 64.0)];
        let m = rasterize_polygons(&polys, 100, 100).unwrap();
        assert_eq!(m.count_ones(), 41);
    }

    #[test]
    fn degenerate_polygon_is_rejected() {
        let e = Polygon::new(vec![(0.0, 0.0), (1.0, 1.0), (0.0, 0.0)]).unwrap_err();
        assert!(matches!(e, Error::DegeneratePolygon { distinct: 2 }));
    }

    // Independent oracle: classic ray-casting test at each pixel centre.
    fn brute_force(polys: &[Polygon], w: usize, h: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            polys.iter().any(|p| {
                let v = p.vertices();
                let mut inside = false;
                let mut j = v.len() - 1;
                for i in 0..v.len() {
                    let (xi, yi) = v[i];
                    let (xj, yj) = v[j];
                    if ((yi > py) != (yj > py)) && (px < (xj - xi) * (py - yi) / (yj - yi) + xi) {
                        inside = !inside;
                    }
                    j = i;
                }
                inside
            })
        })
    }

    #[test]
    fn triangle_matches_brute_force() {
        let tri = Polygon::new(vec![(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)]).unwrap();
        let m = rasterize_polygons(std::slice::from_ref(&tri), 20, 20).unwrap();
        let oracle = brute_force(&[tri], 20, 20);
        assert_eq!(m, oracle);
        // centres (x+.5, y+.5) with x+y+1 < 10 → 45; those on the hypotenuse are excluded
        assert_eq!(m.count_ones(), 45);
    }

    #[test]
    fn annotation_json_keeps_bp_labels_only() {
        let json = r#"[{"label":"BP1","points":[[0,0],[4,0],[4,4],[0,4]]},
                       {"label":"artery","points":[[5,5],[9,5],[9,9]]},
                       {"label":"BP2","points":[[6,0],[8,0],[8,2],[6,2]]}]"#;
        let shapes = parse_annotation(json).unwrap();
        let polys = trunk_polygons(&shapes).unwrap();
        assert_eq!(polys.len(), 2);
        assert_eq!(rasterize_polygons(&polys, 10, 10).unwrap().count_ones(), 20);
        let labelme = r#"{"version":"5.0","shapes":[{"label":"BP","points":[[0,0],[2,0],[2,2]],"shape_type":"polygon"}]}"#;
        assert_eq!(parse_annotation(labelme).unwrap().len(), 1);
    }

    #[test]
    fn flip_examples() {
        let img = GrayImage::from_fn(8, 4, |x, _| if x < 4 { 255 } else { 0 });
        let f = horizontal_flip(&img);
        assert_eq!(f, GrayImage::from_fn(8, 4, |x, _| if x >= 4 { 255 } else { 0 }));
        let sym = GrayImage::from_fn(9, 3, |x, y| (x.abs_diff(4) * 10 + y) as u8);
        assert_eq!(horizontal_flip(&sym), sym);
    }

    #[test]
    fn random_crop_offsets_stay_in_range_and_are_seeded() {
        let img = frame(256, 256);
        let mask = BinaryMask::from_fn(256, 256, |x, y| (x / 16 + y / 16) % 2 == 0);
        let mut a = rng::seeded(3);
        let mut b = rng::seeded(3);
        for _ in 0..200 {
            let (x, y) = random_crop_offset(&img, &mask, 224, &mut a).unwrap();
            assert!(x <= 32 && y <= 32);
            assert_eq!((x, y), random_crop_offset(&img, &mask, 224, &mut b).unwrap());
        }
        let (ci, cm) = random_crop(&img, &mask, 224, &mut rng::seeded(9)).unwrap();
        assert_eq!(ci.dims(), (224, 224));
        assert_eq!(cm.dims(), (224, 224));
        let (full_i, full_m) = random_crop(&img, &mask, 256, &mut a).unwrap();
        assert_eq!((full_i, full_m), (img.clone(), mask.clone()));
        assert!(matches!(random_crop(&img, &mask, 257, &mut a), Err(Error::CropTooLarge { .. })));
    }

    #[test]
    fn sixfold_layout() {
        let img = frame(510, 356);
        let mask = BinaryMask::from_fn(510, 356, |x, y| (200..260).contains(&x) && (100..140).contains(&y));
        let cfg = AugmentConfig { seed: 11, ..Default::default() };
        let out = augment_sixfold(&img, &mask, &cfg).unwrap();
        assert_eq!(out.len(), 6);
        for p in &out {
            assert_eq!(p.image.dims(), (224, 224));
            assert_eq!(p.mask.dims(), (224, 224));
            assert!(p.mask.is_binary());
        }
        assert_eq!(out[3].image, horizontal_flip(&out[0].image));
        assert_eq!(out[3].mask, horizontal_flip(&out[0].mask));
        let flags: Vec<_> = out.iter().map(|p| (p.transform.flipped, p.transform.crop_offset.is_some())).collect();
        assert_eq!(
            flags,
            vec![(false, false), (false, true), (false, true), (true, false), (true, true), (true, true)]
        );
        assert_eq!(out, augment_sixfold(&img, &mask, &cfg).unwrap());
    }

    proptest! {
        #[test]
        fn flip_is_an_involution(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
            let img = GrayImage::from_fn(w, h, |x, y| (seed.wrapping_mul(31).wrapping_add((x * 17 + y * 3) as u64) % 256) as u8);
            prop_assert_eq!(horizontal_flip(&horizontal_flip(&img)), img);
        }

        #[test]
        fn rasterizer_matches_ray_casting(
            pts in proptest::collection::vec((-3.0f64..23.0, -3.0f64..23.0), 3..8),
            w in 1usize..20, h in 1usize..20,
        ) {
            if let Ok(p) = Polygon::new(pts) {
                let polys = [p];
                prop_assert_eq!(rasterize_polygons(&polys, w, h).unwrap(), brute_force(&polys, w, h));
            }
        }

        #[test]
        fn augmentation_keeps_masks_aligned(seed in any::<u64>(), w in 40usize..80, h in 40usize..80) {
            let mask = BinaryMask::from_fn(w, h, |x, y| ((x * 3 + y * 5 + seed as usize) % 7) < 3);
            let img = GrayImage::from_fn(w, h, |x, y| if mask.get(x, y) { 200 } else { 20 });
            let cfg = AugmentConfig { pre_crop_size: 36, final_size: 32, crops_per_image: 2, seed };
            let pre = resize(&mask, 36, 36);
            let base = resize(&mask, 32, 32);
            for p in augment_sixfold(&img, &mask, &cfg).unwrap() {
                prop_assert!(p.mask.is_binary());
                let src = if p.transform.flipped { (horizontal_flip(&base), horizontal_flip(&pre)) } else { (base.clone(), pre.clone()) };
                let expect = match p.transform.crop_offset {
                    None => src.0,
                    Some((x, y)) => src.1.cropped(x, y, 32, 32),
                };
                prop_assert_eq!(p.mask, expect);
            }
        }
    }
}
