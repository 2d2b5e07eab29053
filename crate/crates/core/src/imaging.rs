//! Pixel kernels: affine warps, enhancement blending, quantization,
//! inversion and histogram operations.
//!
//! All kernels take and return valid [`Image`]s — samples clamped to range,
//! dimensions unchanged — so compositions never observe out-of-range values.
//! Everything here is a pure function over immutable inputs and safe to call
//! from many threads at once.

use crate::error::{Error, Result};
use std::path::Path;

/// Fill value used for reads outside the source rectangle of a warp.
/// Mid-grey avoids injecting pure black as a spurious feature.
pub const WARP_FILL: u8 = 128;

/// ITU-R 601 luma weights.
const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// Fixed-size 3-channel raster with 8-bit storage, row-major RGB interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    /// Construct from raw interleaved RGB samples.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(
                "image dimensions must be at least 1x1".into(),
            ));
        }
        if pixels.len() != width * height * Self::CHANNELS {
            return Err(Error::DimensionMismatch(format!(
                "expected {} samples for {}x{}x3, got {}",
                width * height * Self::CHANNELS,
                width,
                height,
                pixels.len()
            )));
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    /// A uniform image of the given RGB value.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height * Self::CHANNELS);
        for _ in 0..width * height {
            pixels.extend_from_slice(&rgb);
        }
        Image {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * Self::CHANNELS + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.pixels[(y * self.width + x) * Self::CHANNELS + c] = v;
    }

    /// Lossless float working form, samples in [0, 1].
    pub fn to_float(&self) -> Vec<f32> {
        self.pixels.iter().map(|&p| p as f32 / 255.0).collect()
    }

    /// Back from the float working form, clamping to [0, 1] first.
    pub fn from_float(width: usize, height: usize, samples: &[f32]) -> Result<Self> {
        if samples.len() != width * height * Self::CHANNELS {
            return Err(Error::DimensionMismatch(format!(
                "expected {} float samples, got {}",
                width * height * Self::CHANNELS,
                samples.len()
            )));
        }
        let pixels = samples
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        Image::from_pixels(width, height, pixels)
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Write as an 8-bit RGB PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .ok_or_else(|| Error::InvalidParameter("pixel buffer size mismatch".into()))?;
        buf.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    /// Read an 8-bit RGB PNG.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.into_rgb8();
        Image::from_pixels(img.width() as usize, img.height() as usize, img.into_raw())
    }
}

/// Six coefficients of the inverse mapping from output pixel coordinates to
/// source coordinates: `(u, v) = (a*x + b*y + c, d*x + e*y + f)`, with the
/// origin at the image center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMatrix {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl AffineMatrix {
    pub const IDENTITY: AffineMatrix = AffineMatrix {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 0.0,
        e: 1.0,
        f: 0.0,
    };

    /// Horizontal shear with coefficient `m` about the center.
    pub fn shear_x(m: f64) -> Self {
        AffineMatrix {
            a: 1.0,
            b: m,
            c: 0.0,
            d: 0.0,
            e: 1.0,
            f: 0.0,
        }
    }

    /// Vertical shear with coefficient `m` about the center.
    pub fn shear_y(m: f64) -> Self {
        AffineMatrix {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: m,
            e: 1.0,
            f: 0.0,
        }
    }

    /// Content shift by `(dx, dy)` pixels.
    pub fn translate(dx: f64, dy: f64) -> Self {
        AffineMatrix {
            a: 1.0,
            b: 0.0,
            c: -dx,
            d: 0.0,
            e: 1.0,
            f: -dy,
        }
    }

    /// Rotation by `degrees` about the center.
    pub fn rotate(degrees: f64) -> Self {
        let t = degrees.to_radians();
        let (sin, cos) = t.sin_cos();
        AffineMatrix {
            a: cos,
            b: sin,
            c: 0.0,
            d: -sin,
            e: cos,
            f: 0.0,
        }
    }

    #[inline]
    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.a * x + self.b * y + self.c,
            self.d * x + self.e * y + self.f,
        )
    }
}

#[inline]
fn bilinear_tap(img: &Image, ix: i64, iy: i64, c: usize, fill: u8) -> f32 {
    if ix < 0 || iy < 0 || ix >= img.width as i64 || iy >= img.height as i64 {
        fill as f32 / 255.0
    } else {
        img.get(ix as usize, iy as usize, c) as f32 / 255.0
    }
}

/// Warp `img` through the inverse mapping `m`, sampling bilinearly.
/// Reads outside the source rectangle see `fill` on all channels.
/// The identity matrix reproduces the input bit-exactly.
pub fn affine_warp(img: &Image, m: &AffineMatrix, fill: u8) -> Image {
    let (w, h) = (img.width, img.height);
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut out = vec![0u8; w * h * Image::CHANNELS];
    for y in 0..h {
        for x in 0..w {
            let (u, v) = m.map(x as f64 - cx, y as f64 - cy);
            let sx = u + cx;
            let sy = v + cy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = (sx - x0) as f32;
            let fy = (sy - y0) as f32;
            let (x0, y0) = (x0 as i64, y0 as i64);
            for c in 0..Image::CHANNELS {
                let v00 = bilinear_tap(img, x0, y0, c, fill);
                let v10 = bilinear_tap(img, x0 + 1, y0, c, fill);
                let v01 = bilinear_tap(img, x0, y0 + 1, c, fill);
                let v11 = bilinear_tap(img, x0 + 1, y0 + 1, c, fill);
                let top = v00 * (1.0 - fx) + v10 * fx;
                let bottom = v01 * (1.0 - fx) + v11 * fx;
                let val = (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0);
                out[(y * w + x) * Image::CHANNELS + c] = (val * 255.0).round() as u8;
            }
        }
    }
    Image {
        width: w,
        height: h,
        pixels: out,
    }
}

/// Per-sample `out = degenerate + factor * (original - degenerate)` in float
/// form, clamped. `factor` outside [0, 1] extrapolates.
pub fn blend(degenerate: &Image, original: &Image, factor: f64) -> Result<Image> {
    if !degenerate.same_dims(original) {
        return Err(Error::DimensionMismatch(format!(
            "blend inputs {}x{} vs {}x{}",
            degenerate.width, degenerate.height, original.width, original.height
        )));
    }
    let f = factor as f32;
    let pixels = degenerate
        .pixels
        .iter()
        .zip(original.pixels.iter())
        .map(|(&d, &o)| {
            let d = d as f32 / 255.0;
            let o = o as f32 / 255.0;
            let v = (d + f * (o - d)).clamp(0.0, 1.0);
            (v * 255.0).round() as u8
        })
        .collect();
    Ok(Image {
        width: degenerate.width,
        height: degenerate.height,
        pixels,
    })
}

/// Keep the top `bits` bits of every sample, zeroing the rest.
pub fn posterize(img: &Image, bits: u32) -> Result<Image> {
    if bits > 8 {
        return Err(Error::InvalidParameter(format!(
            "posterize bits must be in [0, 8], got {bits}"
        )));
    }
    let mask: u8 = if bits == 0 {
        0
    } else {
        (0xFFu16 << (8 - bits)) as u8
    };
    let pixels = img.pixels.iter().map(|&p| p & mask).collect();
    Ok(Image {
        width: img.width,
        height: img.height,
        pixels,
    })
}

/// Invert every sample at or above `threshold`.
pub fn solarize(img: &Image, threshold: u32) -> Result<Image> {
    if threshold > 255 {
        return Err(Error::InvalidParameter(format!(
            "solarize threshold must be in [0, 255], got {threshold}"
        )));
    }
    let t = threshold as u8;
    let pixels = img
        .pixels
        .iter()
        .map(|&p| if p >= t { 255 - p } else { p })
        .collect();
    Ok(Image {
        width: img.width,
        height: img.height,
        pixels,
    })
}

/// Linearly remap each channel so its minimum goes to 0 and maximum to 255.
/// Constant channels are left unchanged.
pub fn autocontrast(img: &Image) -> Image {
    let mut out = img.clone();
    for c in 0..Image::CHANNELS {
        let mut lo = 255u8;
        let mut hi = 0u8;
        for p in img.pixels[c..].iter().step_by(Image::CHANNELS) {
            lo = lo.min(*p);
            hi = hi.max(*p);
        }
        if lo >= hi {
            continue;
        }
        let scale = 255.0 / (hi - lo) as f64;
        let mut lut = [0u8; 256];
        for (v, slot) in lut.iter_mut().enumerate() {
            *slot = (((v as f64 - lo as f64) * scale).round().clamp(0.0, 255.0)) as u8;
        }
        for p in out.pixels[c..].iter_mut().step_by(Image::CHANNELS) {
            *p = lut[*p as usize];
        }
    }
    out
}

fn equalize_lut(hist: &[u64; 256], total: u64) -> [u8; 256] {
    let mut lut = [0u8; 256];
    let mut cdf = [0u64; 256];
    let mut acc = 0u64;
    for (v, &count) in hist.iter().enumerate() {
        acc += count;
        cdf[v] = acc;
    }
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    if total == cdf_min {
        // constant channel: identity
        for (v, slot) in lut.iter_mut().enumerate() {
            *slot = v as u8;
        }
        return lut;
    }
    let denom = (total - cdf_min) as f64;
    for v in 0..256 {
        let num = cdf[v].saturating_sub(cdf_min) as f64;
        lut[v] = ((num * 255.0 / denom).round().clamp(0.0, 255.0)) as u8;
    }
    lut
}

/// Per-channel histogram equalization: values remap to
/// `round(255 * (cdf(v) - cdf_min) / (N - cdf_min))` where `cdf_min` is the
/// first nonzero cumulative count. Constant channels pass through.
pub fn equalize(img: &Image) -> Image {
    let mut out = img.clone();
    let total = (img.width * img.height) as u64;
    for c in 0..Image::CHANNELS {
        let mut hist = [0u64; 256];
        for p in img.pixels[c..].iter().step_by(Image::CHANNELS) {
            hist[*p as usize] += 1;
        }
        let lut = equalize_lut(&hist, total);
        for p in out.pixels[c..].iter_mut().step_by(Image::CHANNELS) {
            *p = lut[*p as usize];
        }
    }
    out
}

#[inline]
fn luma(r: u8, g: u8, b: u8) -> f64 {
    LUMA_R * r as f64 + LUMA_G * g as f64 + LUMA_B * b as f64
}

/// Replace each pixel by its ITU-R 601 luminance on all three channels.
pub fn greyscale(img: &Image) -> Image {
    let mut pixels = Vec::with_capacity(img.pixels.len());
    for px in img.pixels.chunks_exact(Image::CHANNELS) {
        let l = luma(px[0], px[1], px[2]).round().clamp(0.0, 255.0) as u8;
        pixels.extend_from_slice(&[l, l, l]);
    }
    Image {
        width: img.width,
        height: img.height,
        pixels,
    }
}

/// Mean ITU-R 601 luminance over all pixels, in [0, 255].
pub fn mean_luminance(img: &Image) -> f64 {
    let mut sum = 0.0;
    for px in img.pixels.chunks_exact(Image::CHANNELS) {
        sum += luma(px[0], px[1], px[2]);
    }
    sum / (img.width * img.height) as f64
}

/// 3x3 smoothing blur (center weight 5, neighbors 1, normalized by 13) with
/// clamp-to-edge padding. Degenerate reference for the sharpness enhancement.
pub fn smooth(img: &Image) -> Image {
    let (w, h) = (img.width as i64, img.height as i64);
    let mut out = vec![0u8; img.pixels.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..Image::CHANNELS {
                let mut acc = 0.0f64;
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let sx = (x + dx).clamp(0, w - 1) as usize;
                        let sy = (y + dy).clamp(0, h - 1) as usize;
                        let weight = if dx == 0 && dy == 0 { 5.0 } else { 1.0 };
                        acc += weight * img.get(sx, sy, c) as f64;
                    }
                }
                out[((y * w + x) as usize) * Image::CHANNELS + c] =
                    (acc / 13.0).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Image {
        width: img.width,
        height: img.height,
        pixels: out,
    }
}

/// Mirror left-right. Exact index reversal, no resampling.
pub fn flip_horizontal(img: &Image) -> Image {
    let (w, h) = (img.width, img.height);
    let mut out = vec![0u8; img.pixels.len()];
    for y in 0..h {
        for x in 0..w {
            let src = (y * w + x) * Image::CHANNELS;
            let dst = (y * w + (w - 1 - x)) * Image::CHANNELS;
            out[dst..dst + Image::CHANNELS].copy_from_slice(&img.pixels[src..src + Image::CHANNELS]);
        }
    }
    Image {
        width: w,
        height: h,
        pixels: out,
    }
}

/// Crop the rectangle at `(x0, y0)` of size `cw x ch` and bilinearly resize it
/// back to the full image size. `(x0 + cw, y0 + ch)` must stay in bounds.
pub fn crop_resize(img: &Image, x0: usize, y0: usize, cw: usize, ch: usize) -> Result<Image> {
    if cw == 0 || ch == 0 || x0 + cw > img.width || y0 + ch > img.height {
        return Err(Error::InvalidParameter(format!(
            "crop {cw}x{ch}+{x0}+{y0} outside {}x{}",
            img.width, img.height
        )));
    }
    let (w, h) = (img.width, img.height);
    let sx = cw as f64 / w as f64;
    let sy = ch as f64 / h as f64;
    let mut out = vec![0u8; img.pixels.len()];
    for y in 0..h {
        let src_y = ((y as f64 + 0.5) * sy - 0.5 + y0 as f64).max(0.0);
        let iy = src_y.floor() as usize;
        let iy1 = (iy + 1).min(img.height - 1);
        let fy = (src_y - iy as f64) as f32;
        for x in 0..w {
            let src_x = ((x as f64 + 0.5) * sx - 0.5 + x0 as f64).max(0.0);
            let ix = src_x.floor() as usize;
            let ix1 = (ix + 1).min(img.width - 1);
            let fx = (src_x - ix as f64) as f32;
            for c in 0..Image::CHANNELS {
                let v00 = img.get(ix, iy, c) as f32 / 255.0;
                let v10 = img.get(ix1, iy, c) as f32 / 255.0;
                let v01 = img.get(ix, iy1, c) as f32 / 255.0;
                let v11 = img.get(ix1, iy1, c) as f32 / 255.0;
                let top = v00 * (1.0 - fx) + v10 * fx;
                let bottom = v01 * (1.0 - fx) + v11 * fx;
                let v = (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0);
                out[(y * w + x) * Image::CHANNELS + c] = (v * 255.0).round() as u8;
            }
        }
    }
    Image::from_pixels(w, h, out)
}

/// Tile images (all same size) into a `cols`-wide contact sheet with a 2px
/// separator, for visual inspection dumps.
pub fn tile_grid(images: &[Image], cols: usize) -> Result<Image> {
    if images.is_empty() || cols == 0 {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    let (w, h) = (images[0].width, images[0].height);
    if images.iter().any(|i| i.width != w || i.height != h) {
        return Err(Error::DimensionMismatch("grid tiles differ in size".into()));
    }
    let pad = 2;
    let rows = images.len().div_ceil(cols);
    let gw = cols * (w + pad) - pad;
    let gh = rows * (h + pad) - pad;
    let mut grid = Image::filled(gw, gh, [255, 255, 255]);
    for (i, img) in images.iter().enumerate() {
        let ox = (i % cols) * (w + pad);
        let oy = (i / cols) * (h + pad);
        for y in 0..h {
            for x in 0..w {
                for c in 0..Image::CHANNELS {
                    grid.set(ox + x, oy + y, c, img.get(x, y, c));
                }
            }
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    pub(crate) fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = crate::rng::stream(&[seed, 0xC0FFEE]);
        let pixels = (0..w * h * Image::CHANNELS).map(|_| rng.gen()).collect();
        Image::from_pixels(w, h, pixels).unwrap()
    }

    /// Straight-line transcription of the warp contract, written against the
    /// stated postcondition rather than the kernel: per output pixel, map
    /// through the matrix, take four taps with fill outside the rectangle,
    /// interpolate, clamp.
    fn warp_oracle(img: &Image, m: &AffineMatrix, fill: u8) -> Image {
        let (w, h) = (img.width(), img.height());
        let cx = (w as f64 - 1.0) / 2.0;
        let cy = (h as f64 - 1.0) / 2.0;
        let mut out = Image::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                let u = m.a * (x as f64 - cx) + m.b * (y as f64 - cy) + m.c + cx;
                let v = m.d * (x as f64 - cx) + m.e * (y as f64 - cy) + m.f + cy;
                for c in 0..Image::CHANNELS {
                    let tap = |tx: f64, ty: f64| -> f32 {
                        let (tx, ty) = (tx.floor() as i64, ty.floor() as i64);
                        if tx < 0 || ty < 0 || tx >= w as i64 || ty >= h as i64 {
                            fill as f32 / 255.0
                        } else {
                            img.get(tx as usize, ty as usize, c) as f32 / 255.0
                        }
                    };
                    let fx = (u - u.floor()) as f32;
                    let fy = (v - v.floor()) as f32;
                    let a = tap(u.floor(), v.floor());
                    let b = tap(u.floor() + 1.0, v.floor());
                    let cc = tap(u.floor(), v.floor() + 1.0);
                    let d = tap(u.floor() + 1.0, v.floor() + 1.0);
                    let val = (a * (1.0 - fx) + b * fx) * (1.0 - fy)
                        + (cc * (1.0 - fx) + d * fx) * fy;
                    out.set(x, y, c, (val.clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
        out
    }

    #[test]
    fn float_round_trip_is_identity_for_all_values() {
        let pixels: Vec<u8> = (0..=255).flat_map(|v| [v, v, v]).collect();
        let img = Image::from_pixels(16, 16, pixels).unwrap();
        let back = Image::from_float(16, 16, &img.to_float()).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn warp_identity_is_bit_exact_for_any_fill() {
        let img = random_image(13, 9, 1);
        for fill in [0, 77, 128, 255] {
            assert_eq!(affine_warp(&img, &AffineMatrix::IDENTITY, fill), img);
        }
    }

    #[test]
    fn warp_full_translate_is_uniform_fill() {
        let img = random_image(8, 8, 2);
        let m = AffineMatrix::translate(img.width() as f64, 0.0);
        let out = affine_warp(&img, &m, 128);
        assert!(out.pixels().iter().all(|&p| p == 128));
    }

    #[test]
    fn warp_rotate_90_matches_oracle_on_test_pattern() {
        // 4x4 pattern with distinct values per pixel.
        let pixels: Vec<u8> = (0..4 * 4 * 3).map(|i| (i * 5 % 251) as u8).collect();
        let img = Image::from_pixels(4, 4, pixels).unwrap();
        let m = AffineMatrix::rotate(90.0);
        assert_eq!(affine_warp(&img, &m, 128), warp_oracle(&img, &m, 128));
    }

    #[test]
    fn warp_matches_oracle_on_random_matrices() {
        let img = random_image(11, 7, 3);
        let mut rng = crate::rng::stream(&[99]);
        for _ in 0..20 {
            let m = AffineMatrix {
                a: rng.gen_range(-1.5..1.5),
                b: rng.gen_range(-1.5..1.5),
                c: rng.gen_range(-4.0..4.0),
                d: rng.gen_range(-1.5..1.5),
                e: rng.gen_range(-1.5..1.5),
                f: rng.gen_range(-4.0..4.0),
            };
            assert_eq!(affine_warp(&img, &m, 128), warp_oracle(&img, &m, 128));
        }
    }

    #[test]
    fn blend_endpoints_are_exact() {
        let a = random_image(6, 6, 4);
        let b = random_image(6, 6, 5);
        assert_eq!(blend(&a, &b, 0.0).unwrap(), a);
        assert_eq!(blend(&a, &b, 1.0).unwrap(), b);
        for t in [-3.0, 0.25, 2.0] {
            assert_eq!(blend(&a, &a, t).unwrap(), a);
        }
    }

    #[test]
    fn blend_extrapolation_matches_elementwise_formula() {
        let grey = Image::filled(4, 4, [128, 128, 128]);
        let mut checker = Image::filled(4, 4, [0, 0, 0]);
        for y in 0..4 {
            for x in 0..4 {
                if (x + y) % 2 == 0 {
                    for c in 0..3 {
                        checker.set(x, y, c, 255);
                    }
                }
            }
        }
        let out = blend(&grey, &checker, 2.0).unwrap();
        for (i, (&d, &o)) in grey.pixels().iter().zip(checker.pixels()).enumerate() {
            let expect = ((d as f32 / 255.0 + 2.0 * (o as f32 / 255.0 - d as f32 / 255.0))
                .clamp(0.0, 1.0)
                * 255.0)
                .round() as u8;
            assert_eq!(out.pixels()[i], expect);
        }
    }

    #[test]
    fn blend_rejects_dimension_mismatch() {
        let a = Image::filled(4, 4, [0, 0, 0]);
        let b = Image::filled(4, 5, [0, 0, 0]);
        assert!(blend(&a, &b, 0.5).is_err());
    }

    #[test]
    fn posterize_masks_low_bits() {
        let img = Image::filled(2, 2, [0xB7, 0x01, 0xFF]);
        let out = posterize(&img, 3).unwrap();
        // bitmask oracle: 0xB7 & 0xE0
        assert_eq!(out.get(0, 0, 0), 0xA0);
        assert_eq!(out.get(0, 0, 1), 0x00);
        assert_eq!(out.get(0, 0, 2), 0xE0);
        let img2 = random_image(5, 5, 6);
        assert_eq!(posterize(&img2, 8).unwrap(), img2);
        assert!(posterize(&img2, 0).unwrap().pixels().iter().all(|&p| p == 0));
        assert!(posterize(&img2, 9).is_err());
    }

    #[test]
    fn posterize_is_idempotent() {
        let img = random_image(7, 7, 7);
        for bits in 0..=8 {
            let once = posterize(&img, bits).unwrap();
            assert_eq!(posterize(&once, bits).unwrap(), once);
        }
    }

    #[test]
    fn solarize_follows_threshold_rule() {
        let img = Image::filled(1, 1, [200, 10, 128]);
        let out = solarize(&img, 128).unwrap();
        assert_eq!(out.get(0, 0, 0), 55); // 255 - 200
        assert_eq!(out.get(0, 0, 1), 10);
        assert_eq!(out.get(0, 0, 2), 127);
        let zeros = Image::filled(3, 3, [0, 0, 0]);
        assert_eq!(solarize(&zeros, 1).unwrap(), zeros);
        let img2 = random_image(4, 4, 8);
        let inverted = solarize(&img2, 0).unwrap();
        for (o, i) in inverted.pixels().iter().zip(img2.pixels()) {
            assert_eq!(*o, 255 - *i);
        }
        // threshold 0 inverts; applying twice restores
        assert_eq!(solarize(&inverted, 0).unwrap(), img2);
        assert!(solarize(&img2, 256).is_err());
    }

    #[test]
    fn autocontrast_identity_on_full_range_channel() {
        let mut img = random_image(16, 16, 9);
        img.set(0, 0, 0, 0);
        img.set(1, 0, 0, 255);
        img.set(0, 0, 1, 0);
        img.set(1, 0, 1, 255);
        img.set(0, 0, 2, 0);
        img.set(1, 0, 2, 255);
        assert_eq!(autocontrast(&img), img);
        let constant = Image::filled(4, 4, [42, 200, 7]);
        assert_eq!(autocontrast(&constant), constant);
    }

    #[test]
    fn autocontrast_remaps_min_max() {
        let mut img = Image::filled(2, 2, [50, 50, 50]);
        img.set(0, 0, 0, 100);
        let out = autocontrast(&img);
        assert_eq!(out.get(0, 0, 0), 255);
        assert_eq!(out.get(1, 0, 0), 0);
        // untouched channels constant
        assert_eq!(out.get(0, 0, 1), 50);
    }

    /// Independent cumulative-histogram computation for a single channel.
    fn equalize_channel_oracle(values: &[u8]) -> Vec<u8> {
        let n = values.len() as f64;
        let mut hist = [0f64; 256];
        for &v in values {
            hist[v as usize] += 1.0;
        }
        let mut cdf = [0f64; 256];
        let mut acc = 0.0;
        for v in 0..256 {
            acc += hist[v];
            cdf[v] = acc;
        }
        let cdf_min = cdf.iter().copied().find(|&c| c > 0.0).unwrap();
        if (n - cdf_min).abs() < f64::EPSILON {
            return values.to_vec();
        }
        values
            .iter()
            .map(|&v| ((cdf[v as usize] - cdf_min) * 255.0 / (n - cdf_min)).round() as u8)
            .collect()
    }

    #[test]
    fn equalize_matches_cdf_oracle_on_two_level_image() {
        // 75% zeros, 25% full white
        let mut img = Image::filled(4, 4, [0, 0, 0]);
        for i in 0..4 {
            img.set(i, 0, 0, 255);
            img.set(i, 0, 1, 255);
            img.set(i, 0, 2, 255);
        }
        let out = equalize(&img);
        for c in 0..3 {
            let channel: Vec<u8> = img.pixels()[c..].iter().step_by(3).copied().collect();
            let expect = equalize_channel_oracle(&channel);
            let got: Vec<u8> = out.pixels()[c..].iter().step_by(3).copied().collect();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn equalize_matches_cdf_oracle_on_random_images() {
        for seed in 10..14 {
            let img = random_image(9, 6, seed);
            let out = equalize(&img);
            for c in 0..3 {
                let channel: Vec<u8> = img.pixels()[c..].iter().step_by(3).copied().collect();
                let expect = equalize_channel_oracle(&channel);
                let got: Vec<u8> = out.pixels()[c..].iter().step_by(3).copied().collect();
                assert_eq!(got, expect);
            }
        }
    }

    #[test]
    fn equalize_constant_image_unchanged() {
        let img = Image::filled(5, 5, [90, 13, 255]);
        assert_eq!(equalize(&img), img);
    }

    #[test]
    fn greyscale_is_idempotent_and_three_channel() {
        let img = random_image(8, 8, 20);
        let grey = greyscale(&img);
        for px in grey.pixels().chunks_exact(3) {
            assert_eq!(px[0], px[1]);
            assert_eq!(px[1], px[2]);
        }
        assert_eq!(greyscale(&grey), grey);
    }

    #[test]
    fn kernels_preserve_dims_and_range_on_random_images() {
        for seed in 30..34 {
            let img = random_image(10, 12, seed);
            let outputs = [
                affine_warp(&img, &AffineMatrix::rotate(33.0), 128),
                blend(&greyscale(&img), &img, 4.5).unwrap(),
                posterize(&img, 2).unwrap(),
                solarize(&img, 100).unwrap(),
                autocontrast(&img),
                equalize(&img),
                greyscale(&img),
                smooth(&img),
            ];
            for out in outputs {
                assert!(out.same_dims(&img));
                assert_eq!(out.pixels().len(), img.pixels().len());
            }
        }
    }

    #[test]
    fn crop_resize_full_frame_is_identity() {
        let img = random_image(14, 10, 40);
        let out = crop_resize(&img, 0, 0, 14, 10).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn flip_is_exact_mirror() {
        let img = random_image(9, 4, 41);
        let flipped = flip_horizontal(&img);
        for y in 0..4 {
            for x in 0..9 {
                for c in 0..3 {
                    assert_eq!(flipped.get(x, y, c), img.get(8 - x, y, c));
                }
            }
        }
        assert_eq!(flip_horizontal(&flipped), img);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = random_image(12, 5, 50);
        img.save_png(&path).unwrap();
        assert_eq!(Image::load_png(&path).unwrap(), img);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_image() -> impl Strategy<Value = Image> {
            ((1usize..12), (1usize..12)).prop_flat_map(|(w, h)| {
                proptest::collection::vec(any::<u8>(), w * h * 3)
                    .prop_map(move |px| Image::from_pixels(w, h, px).unwrap())
            })
        }

        proptest! {
            #[test]
            fn kernels_preserve_dims_and_validity(img in arb_image(), bits in 0u32..=8, thr in 0u32..=255, f in -12.0f64..12.0) {
                for out in [
                    affine_warp(&img, &AffineMatrix::rotate(f * 10.0), 128),
                    blend(&greyscale(&img), &img, f).unwrap(),
                    posterize(&img, bits).unwrap(),
                    solarize(&img, thr).unwrap(),
                    autocontrast(&img),
                    equalize(&img),
                    smooth(&img),
                ] {
                    prop_assert!(out.same_dims(&img));
                    prop_assert_eq!(out.pixels().len(), img.pixels().len());
                }
            }

            #[test]
            fn posterize_idempotent_and_blend_endpoints(img in arb_image(), bits in 0u32..=8) {
                let once = posterize(&img, bits).unwrap();
                prop_assert_eq!(posterize(&once, bits).unwrap(), once);
                let grey = greyscale(&img);
                prop_assert_eq!(blend(&grey, &img, 0.0).unwrap(), grey.clone());
                prop_assert_eq!(blend(&grey, &img, 1.0).unwrap(), img.clone());
            }

            #[test]
            fn float_round_trip_identity(img in arb_image()) {
                let back = Image::from_float(img.width(), img.height(), &img.to_float()).unwrap();
                prop_assert_eq!(back, img);
            }

            #[test]
            fn warp_identity_any_fill(img in arb_image(), fill in any::<u8>()) {
                prop_assert_eq!(affine_warp(&img, &AffineMatrix::IDENTITY, fill), img);
            }
        }
    }
}
