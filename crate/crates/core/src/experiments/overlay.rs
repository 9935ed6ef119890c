//! Visual check of a prediction: grayscale frame, predicted region tinted
//! green, ground-truth outline in red.

use image::{Rgb, RgbImage};

use crate::data_model::{BinaryMask, GrayImage};
use crate::error::{Error, Result};

pub const PREDICTION_COLOR: [u8; 3] = [0, 255, 0];
pub const TRUTH_COLOR: [u8; 3] = [255, 0, 0];

/// `0.6 * base + 0.4 * color`, rounded.
fn blend(base: u8, color: u8) -> u8 {
    ((3 * base as u32 + 2 * color as u32 + 2) / 5) as u8
}

/// A truth pixel is on the outline when one of its 4-neighbours lies inside
/// the image and outside the truth.
pub fn boundary(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        if !mask.get(x, y) {
            return false;
        }
        (x > 0 && !mask.get(x - 1, y))
            || (x + 1 < w && !mask.get(x + 1, y))
            || (y > 0 && !mask.get(x, y - 1))
            || (y + 1 < h && !mask.get(x, y + 1))
    })
}

pub fn render_overlay(image: &GrayImage, pred: &BinaryMask, truth: &BinaryMask) -> Result<RgbImage> {
    let (w, h) = image.dims();
    if pred.dims() != (w, h) || truth.dims() != (w, h) {
        return Err(Error::ShapeMismatch(format!(
            "overlay image {:?}, prediction {:?}, truth {:?}",
            image.dims(),
            pred.dims(),
            truth.dims()
        )));
    }
    let outline = boundary(truth);
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        if outline.get(x, y) {
            return Rgb(TRUTH_COLOR);
        }
        let v = image.get(x, y);
        if pred.get(x, y) {
            Rgb(PREDICTION_COLOR.map(|c| blend(v, c)))
        } else {
            Rgb([v, v, v])
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_masks_give_the_gray_frame() {
        let img = GrayImage::from_fn(5, 4, |x, y| (x * 40 + y * 7) as u8);
        let out = render_overlay(&img, &BinaryMask::zeros(5, 4), &BinaryMask::zeros(5, 4)).unwrap();
        for (x, y, p) in out.enumerate_pixels() {
            let v = img.get(x as usize, y as usize);
            assert_eq!(p.0, [v, v, v]);
        }
    }

    #[test]
    fn full_masks_blend_everywhere() {
        let img = GrayImage::filled(3, 3, 100);
        let full = BinaryMask::ones(3, 3);
        let out = render_overlay(&img, &full, &full).unwrap();
        // a full-frame truth has no inside neighbour outside it, hence no outline
        assert!(out.pixels().all(|p| p.0 == [60, 162, 60]));
    }

    #[test]
    fn outline_is_drawn_over_the_tint() {
        let img = GrayImage::filled(5, 5, 0);
        let truth = BinaryMask::from_fn(5, 5, |x, y| (1..4).contains(&x) && (1..4).contains(&y));
        let b = boundary(&truth);
        assert_eq!(b.count_ones(), 8);
        assert!(!b.get(2, 2));
        let out = render_overlay(&img, &truth, &truth).unwrap();
        assert_eq!(out.get_pixel(1, 1).0, TRUTH_COLOR);
        assert_eq!(out.get_pixel(2, 2).0, [0, 102, 0]);
        assert!(render_overlay(&img, &BinaryMask::zeros(4, 5), &truth).is_err());
    }
}
