//! Pixel operations: resampling, geometric warps, photometric blends and
//! random erasing.
//!
//! Geometric warps map every output pixel back into the source image and
//! sample it bilinearly; source neighbours outside the image read as black.
//! Coordinates are pixel centres, and rotation and shear pivot on the image
//! centre `((w - 1) / 2, (h - 1) / 2)`.

use serde::{Deserialize, Serialize};

use super::image::{to_u8, Image};
use crate::rng::SplitMix64;

/// Bilinear resize with half-pixel centre alignment and edge clamping.
pub fn resize_bilinear(img: &Image, new_width: u32, new_height: u32) -> Image {
    assert!(new_width > 0 && new_height > 0);
    let (sw, sh) = (img.width(), img.height());
    let axis = |dst: u32, src: u32| -> Vec<(u32, u32, f64)> {
        let scale = f64::from(src) / f64::from(dst);
        (0..dst)
            .map(|d| {
                let s = ((f64::from(d) + 0.5) * scale - 0.5).clamp(0.0, f64::from(src - 1));
                let lo = s.floor() as u32;
                let hi = (lo + 1).min(src - 1);
                (lo, hi, s - f64::from(lo))
            })
            .collect()
    };
    let xs = axis(new_width, sw);
    let ys = axis(new_height, sh);
    Image::from_fn(new_width, new_height, |x, y| {
        let (x0, x1, fx) = xs[x as usize];
        let (y0, y1, fy) = ys[y as usize];
        let (a, b, c, d) = (img.get(x0, y0), img.get(x1, y0), img.get(x0, y1), img.get(x1, y1));
        std::array::from_fn(|ch| {
            let top = f64::from(a[ch]) * (1.0 - fx) + f64::from(b[ch]) * fx;
            let bottom = f64::from(c[ch]) * (1.0 - fx) + f64::from(d[ch]) * fx;
            to_u8(top * (1.0 - fy) + bottom * fy)
        })
    })
}

/// Centre crop; the offset is `floor((side - crop) / 2)` on each axis.
/// Panics when the crop exceeds the image.
pub fn center_crop(img: &Image, crop_width: u32, crop_height: u32) -> Image {
    assert!(crop_width <= img.width() && crop_height <= img.height());
    let left = (img.width() - crop_width) / 2;
    let top = (img.height() - crop_height) / 2;
    Image::from_fn(crop_width, crop_height, |x, y| img.get(x + left, y + top))
}

/// Length the shorter side is resized to before cropping: `round(1.1 * crop)`.
pub fn resize_target(crop: u32) -> u32 {
    (1.1 * f64::from(crop)).round() as u32
}

/// Output size of the aspect-preserving resize that brings the shorter
/// side to `resize_target(crop)`.
pub fn preprocess_resize_dims(width: u32, height: u32, crop: u32) -> (u32, u32) {
    let target = resize_target(crop);
    let shorter = width.min(height);
    let scale = f64::from(target) / f64::from(shorter);
    let scaled = |side: u32| {
        if side == shorter {
            target
        } else {
            ((f64::from(side) * scale).round() as u32).max(target)
        }
    };
    (scaled(width), scaled(height))
}

/// Resize the shorter side to `round(1.1 * crop)` (bilinear, aspect kept),
/// then centre-crop to `crop x crop`.
pub fn preprocess(img: &Image, crop: u32) -> Image {
    assert!(crop >= 1, "crop must be at least one pixel");
    let (w, h) = preprocess_resize_dims(img.width(), img.height(), crop);
    let resized = if (w, h) == (img.width(), img.height()) { img.clone() } else { resize_bilinear(img, w, h) };
    center_crop(&resized, crop, crop)
}

pub fn hflip(img: &Image) -> Image {
    let w = img.width();
    Image::from_fn(w, img.height(), |x, y| img.get(w - 1 - x, y))
}

fn sample_bilinear_black(img: &Image, sx: f64, sy: f64) -> [u8; 3] {
    let (w, h) = (i64::from(img.width()), i64::from(img.height()));
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let fetch = |x: i64, y: i64| -> [f64; 3] {
        if x < 0 || y < 0 || x >= w || y >= h {
            [0.0; 3]
        } else {
            img.get(x as u32, y as u32).map(f64::from)
        }
    };
    let weights = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
    let corners = [(x0, y0), (x0 + 1, y0), (x0, y0 + 1), (x0 + 1, y0 + 1)];
    let mut acc = [0.0; 3];
    for (&(cx, cy), &wt) in corners.iter().zip(&weights) {
        if wt == 0.0 {
            continue;
        }
        let px = fetch(cx, cy);
        for ch in 0..3 {
            acc[ch] += px[ch] * wt;
        }
    }
    acc.map(to_u8)
}

/// Warps by an inverse map from output to source coordinates.
fn warp(img: &Image, inverse: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    Image::from_fn(img.width(), img.height(), |x, y| {
        let (sx, sy) = inverse(f64::from(x), f64::from(y));
        sample_bilinear_black(img, sx, sy)
    })
}

fn center(img: &Image) -> (f64, f64) {
    ((f64::from(img.width()) - 1.0) / 2.0, (f64::from(img.height()) - 1.0) / 2.0)
}

/// `x' = x + m (y - cy)`.
pub fn shear_x(img: &Image, m: f64) -> Image {
    let (_, cy) = center(img);
    warp(img, |x, y| (x - m * (y - cy), y))
}

/// `y' = y + m (x - cx)`.
pub fn shear_y(img: &Image, m: f64) -> Image {
    let (cx, _) = center(img);
    warp(img, |x, y| (x, y - m * (x - cx)))
}

pub fn translate_x(img: &Image, pixels: f64) -> Image {
    warp(img, |x, y| (x - pixels, y))
}

pub fn translate_y(img: &Image, pixels: f64) -> Image {
    warp(img, |x, y| (x, y - pixels))
}

/// Counter-clockwise as displayed (y axis pointing down).
pub fn rotate(img: &Image, degrees: f64) -> Image {
    let (cx, cy) = center(img);
    let (sin, cos) = degrees.to_radians().sin_cos();
    warp(img, |x, y| {
        let (dx, dy) = (x - cx, y - cy);
        (cx + cos * dx - sin * dy, cy + sin * dx + cos * dy)
    })
}

fn blend_with(img: &Image, degenerate: impl Fn(u32, u32, usize) -> f64, m: f64) -> Image {
    Image::from_fn(img.width(), img.height(), |x, y| {
        let px = img.get(x, y);
        std::array::from_fn(|ch| {
            let a = degenerate(x, y, ch);
            to_u8(a + (f64::from(px[ch]) - a) * m)
        })
    })
}

fn luma(px: [u8; 3]) -> f64 {
    0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2])
}

/// Blend towards black.
pub fn brightness(img: &Image, m: f64) -> Image {
    blend_with(img, |_, _, _| 0.0, m)
}

/// Blend towards the image's mean luma.
pub fn contrast(img: &Image, m: f64) -> Image {
    let n = f64::from(img.width()) * f64::from(img.height());
    let mean = img.pixels().chunks_exact(3).map(|p| luma([p[0], p[1], p[2]])).sum::<f64>() / n;
    blend_with(img, |_, _, _| mean, m)
}

/// Blend towards the per-pixel luma (saturation).
pub fn color(img: &Image, m: f64) -> Image {
    blend_with(img, |x, y, _| luma(img.get(x, y)), m)
}

/// Blend towards a 3x3 smoothed copy (centre weight 5, neighbours 1, border
/// pixels left unsmoothed).
pub fn sharpness(img: &Image, m: f64) -> Image {
    let (w, h) = (img.width(), img.height());
    let smoothed = Image::from_fn(w, h, |x, y| {
        if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
            return img.get(x, y);
        }
        let mut acc = [0.0f64; 3];
        for dy in 0..3 {
            for dx in 0..3 {
                let weight = if dx == 1 && dy == 1 { 5.0 } else { 1.0 };
                let px = img.get(x + dx - 1, y + dy - 1);
                for ch in 0..3 {
                    acc[ch] += weight * f64::from(px[ch]);
                }
            }
        }
        acc.map(|v| to_u8(v / 13.0))
    });
    blend_with(img, |x, y, ch| f64::from(smoothed.get(x, y)[ch]), m)
}

/// Inverts every channel value at or above `threshold`.
pub fn solarize(img: &Image, threshold: f64) -> Image {
    Image::from_fn(img.width(), img.height(), |x, y| {
        img.get(x, y).map(|v| if f64::from(v) >= threshold { 255 - v } else { v })
    })
}

/// Keeps the top `round(bits)` bits (clamped to 1..=8) of each channel.
pub fn posterize(img: &Image, bits: f64) -> Image {
    let bits = bits.round().clamp(1.0, 8.0) as u32;
    let mask = !((1u16 << (8 - bits)) - 1) as u8;
    Image::from_fn(img.width(), img.height(), |x, y| img.get(x, y).map(|v| v & mask))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EraseParams {
    pub area_min: f64,
    pub area_max: f64,
    pub aspect_min: f64,
    pub aspect_max: f64,
}

impl Default for EraseParams {
    fn default() -> Self {
        Self { area_min: 0.02, area_max: 0.33, aspect_min: 0.3, aspect_max: 3.3 }
    }
}

/// Erased rectangle, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EraseRect {
    pub left: u32,
    pub top: u32,
    pub width: u32,
    pub height: u32,
}

const ERASE_ATTEMPTS: usize = 100;

/// One Bernoulli(p) draw decides; on success a rectangle is sampled (area
/// ratio uniform, aspect log-uniform, retried until its rounded size fits
/// the image with an area ratio inside the bounds) and filled with uniform
/// random bytes. If no attempt fits, the smallest rectangle reaching
/// `area_min` is used, which for a 1x1 image is the single pixel.
pub fn random_erase(img: &Image, p: f64, params: &EraseParams, rng: &mut SplitMix64) -> (Image, Option<EraseRect>) {
    if !rng.bernoulli(p) {
        return (img.clone(), None);
    }
    let (w, h) = (img.width(), img.height());
    let area = f64::from(w) * f64::from(h);
    let mut chosen = None;
    for _ in 0..ERASE_ATTEMPTS {
        let target = area * rng.uniform(params.area_min, params.area_max);
        let aspect = rng.uniform(params.aspect_min.ln(), params.aspect_max.ln()).exp();
        let eh = (target * aspect).sqrt().round() as u32;
        let ew = (target / aspect).sqrt().round() as u32;
        if eh == 0 || ew == 0 || eh > h || ew > w {
            continue;
        }
        let ratio = f64::from(eh) * f64::from(ew) / area;
        if ratio >= params.area_min && ratio <= params.area_max {
            chosen = Some((ew, eh));
            break;
        }
    }
    let (ew, eh) = chosen.unwrap_or_else(|| {
        let side = (params.area_min * area).sqrt().ceil().max(1.0) as u32;
        (side.min(w), side.min(h))
    });
    let left = rng.below((w - ew + 1) as usize) as u32;
    let top = rng.below((h - eh + 1) as usize) as u32;
    let mut out = img.clone();
    for y in top..top + eh {
        for x in left..left + ew {
            let v = std::array::from_fn(|_| rng.below(256) as u8);
            out.put(x, y, v);
        }
    }
    (out, Some(EraseRect { left, top, width: ew, height: eh }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(w: u32, h: u32) -> Image {
        Image::from_fn(w, h, |x, y| [(x * 16 + y) as u8, (y * 16 + x) as u8, ((x + y) * 8) as u8])
    }

    #[test]
    fn preprocess_dims() {
        assert_eq!(resize_target(512), 563);
        assert_eq!(resize_target(224), 246);
        // 1000 wide, 800 high: scale 563/800, 1000 * 0.70375 = 703.75
        assert_eq!(preprocess_resize_dims(1000, 800, 512), (704, 563));
        assert_eq!(preprocess_resize_dims(224, 224, 224), (246, 246));
        let out = preprocess(&pattern(1000, 800), 512);
        assert_eq!((out.width(), out.height()), (512, 512));
    }

    #[test]
    fn preprocess_exact_size_is_center_crop() {
        // crop 20 -> shorter side 22, already there: one pixel trimmed per edge
        let img = pattern(22, 22);
        let out = preprocess(&img, 20);
        assert_eq!(out, Image::from_fn(20, 20, |x, y| img.get(x + 1, y + 1)));
    }

    #[test]
    fn preprocess_upscales_tiny_images() {
        let out = preprocess(&Image::filled(1, 1, [9, 8, 7]), 4);
        assert_eq!((out.width(), out.height()), (4, 4));
        assert!(out.pixels().chunks(3).all(|p| p == [9, 8, 7]));
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = Image::filled(7, 3, [10, 200, 33]);
        let out = resize_bilinear(&img, 15, 8);
        assert!(out.pixels().chunks(3).all(|p| p == [10, 200, 33]));
    }

    #[test]
    fn hflip_cases() {
        let img = pattern(5, 4);
        assert_eq!(hflip(&hflip(&img)), img);
        let one = Image::filled(1, 1, [1, 2, 3]);
        assert_eq!(hflip(&one), one);
        let ab = Image::new(2, 1, vec![1, 1, 1, 2, 2, 2]).unwrap();
        assert_eq!(hflip(&ab).pixels(), &[2, 2, 2, 1, 1, 1]);
    }

    #[test]
    fn identity_magnitudes() {
        let img = pattern(9, 7);
        assert_eq!(brightness(&img, 1.0), img);
        assert_eq!(contrast(&img, 1.0), img);
        assert_eq!(sharpness(&img, 1.0), img);
        assert_eq!(color(&img, 1.0), img);
        assert_eq!(shear_x(&img, 0.0), img);
        assert_eq!(shear_y(&img, 0.0), img);
        assert_eq!(translate_x(&img, 0.0), img);
        assert_eq!(translate_y(&img, 0.0), img);
        assert_eq!(rotate(&img, 0.0), img);
        assert_eq!(posterize(&img, 8.0), img);
    }

    #[test]
    fn rotate_quarter_turn_4x4() {
        let img = pattern(4, 4);
        let out = rotate(&img, 90.0);
        for y in 0..4 {
            for x in 0..4 {
                let expected = img.get(3 - y, x);
                let got = out.get(x, y);
                for ch in 0..3 {
                    assert!((i16::from(got[ch]) - i16::from(expected[ch])).abs() <= 1);
                }
            }
        }
    }

    #[test]
    fn translate_fills_black() {
        let img = Image::filled(4, 2, [100, 100, 100]);
        let out = translate_x(&img, 2.0);
        assert_eq!(out.get(0, 0), [0, 0, 0]);
        assert_eq!(out.get(1, 1), [0, 0, 0]);
        assert_eq!(out.get(2, 0), [100, 100, 100]);
        let out = translate_y(&img, -1.0);
        assert_eq!(out.get(0, 1), [0, 0, 0]);
        assert_eq!(out.get(3, 0), [100, 100, 100]);
    }

    #[test]
    fn photometric_extremes() {
        let img = pattern(6, 6);
        assert!(brightness(&img, 0.0).pixels().iter().all(|&v| v == 0));
        let flat = contrast(&img, 0.0);
        let first = flat.get(0, 0);
        assert!(flat.pixels().chunks(3).all(|p| p == first));
        assert_eq!(brightness(&Image::filled(1, 1, [200, 10, 0]), 2.0).get(0, 0), [255, 20, 0]);
        let gray = color(&Image::filled(1, 1, [255, 0, 0]), 0.0).get(0, 0);
        assert_eq!(gray, [76, 76, 76]);
    }

    #[test]
    fn solarize_and_posterize() {
        let img = Image::new(2, 1, vec![0, 127, 128, 200, 255, 10]).unwrap();
        assert_eq!(solarize(&img, 128.0).pixels(), &[0, 127, 127, 55, 0, 10]);
        assert_eq!(posterize(&img, 2.0).pixels(), &[0, 64, 128, 192, 192, 0]);
    }

    #[test]
    fn erase_bounds() {
        let img = pattern(40, 30);
        for seed in 0..200 {
            let mut rng = SplitMix64::new(seed);
            let (out, rect) = random_erase(&img, 1.0, &EraseParams::default(), &mut rng);
            let r = rect.unwrap();
            assert!(r.left + r.width <= 40 && r.top + r.height <= 30);
            let ratio = f64::from(r.width * r.height) / 1200.0;
            assert!((0.02..=0.33).contains(&ratio), "{ratio}");
            for y in 0..30 {
                for x in 0..40 {
                    let inside = x >= r.left && x < r.left + r.width && y >= r.top && y < r.top + r.height;
                    if !inside {
                        assert_eq!(out.get(x, y), img.get(x, y));
                    }
                }
            }
        }
    }

    #[test]
    fn erase_probability_zero_and_single_pixel() {
        let img = pattern(8, 8);
        for seed in 0..20 {
            let (out, rect) = random_erase(&img, 0.0, &EraseParams::default(), &mut SplitMix64::new(seed));
            assert_eq!(out, img);
            assert!(rect.is_none());
        }
        let one = Image::filled(1, 1, [5, 5, 5]);
        let (_, rect) = random_erase(&one, 1.0, &EraseParams::default(), &mut SplitMix64::new(3));
        assert_eq!(rect, Some(EraseRect { left: 0, top: 0, width: 1, height: 1 }));
    }
}
