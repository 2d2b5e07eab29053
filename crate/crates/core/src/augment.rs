//! Transform inventory, magnitude ranges, uniform sampling, and the weak and
//! wider augmentation pipelines.
//!
//! The search space comes in three variants. `Default` carries the classic
//! narrow ranges, `Wide` the ranges used by search-free uniform sampling, and
//! `Wider` expands them further so extreme transformations become reachable.
//! One operation and one magnitude are drawn uniformly per image.

use crate::error::{Error, Result};
use crate::imaging::{self, AffineMatrix, Image, WARP_FILL};
use crate::rng::SampleRng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// The fourteen transform tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformOp {
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
    Rotate,
    Posterize,
    Solarize,
    Contrast,
    Color,
    Brightness,
    Sharpness,
    AutoContrast,
    Equalize,
    Grey,
}

pub const ALL_OPS: [TransformOp; 14] = [
    TransformOp::ShearX,
    TransformOp::ShearY,
    TransformOp::TranslateX,
    TransformOp::TranslateY,
    TransformOp::Rotate,
    TransformOp::Posterize,
    TransformOp::Solarize,
    TransformOp::Contrast,
    TransformOp::Color,
    TransformOp::Brightness,
    TransformOp::Sharpness,
    TransformOp::AutoContrast,
    TransformOp::Equalize,
    TransformOp::Grey,
];

impl TransformOp {
    pub fn is_parameterless(self) -> bool {
        matches!(
            self,
            TransformOp::AutoContrast | TransformOp::Equalize | TransformOp::Grey
        )
    }

    /// Integer-magnitude ops draw from the integer lattice of their range.
    pub fn is_integer(self) -> bool {
        matches!(self, TransformOp::Posterize | TransformOp::Solarize)
    }

    /// The magnitude at which `apply` is a pixel-exact identity, when one
    /// exists. Solarize has none: any threshold may invert something.
    pub fn identity_magnitude(self) -> Option<f64> {
        match self {
            TransformOp::ShearX
            | TransformOp::ShearY
            | TransformOp::TranslateX
            | TransformOp::TranslateY
            | TransformOp::Rotate
            | TransformOp::Contrast
            | TransformOp::Color
            | TransformOp::Brightness
            | TransformOp::Sharpness => Some(0.0),
            TransformOp::Posterize => Some(8.0),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TransformOp::ShearX => "ShearX",
            TransformOp::ShearY => "ShearY",
            TransformOp::TranslateX => "TranslateX",
            TransformOp::TranslateY => "TranslateY",
            TransformOp::Rotate => "Rotate",
            TransformOp::Posterize => "Posterize",
            TransformOp::Solarize => "Solarize",
            TransformOp::Contrast => "Contrast",
            TransformOp::Color => "Color",
            TransformOp::Brightness => "Brightness",
            TransformOp::Sharpness => "Sharpness",
            TransformOp::AutoContrast => "AutoContrast",
            TransformOp::Equalize => "Equalize",
            TransformOp::Grey => "Grey",
        }
    }
}

/// Search-space variant tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceVariant {
    Default,
    Wide,
    Wider,
}

impl SpaceVariant {
    pub fn name(self) -> &'static str {
        match self {
            SpaceVariant::Default => "default",
            SpaceVariant::Wide => "wide",
            SpaceVariant::Wider => "wider",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(SpaceVariant::Default),
            "wide" => Ok(SpaceVariant::Wide),
            "wider" => Ok(SpaceVariant::Wider),
            other => Err(Error::InvalidParameter(format!(
                "unknown space variant `{other}` (expected default|wide|wider)"
            ))),
        }
    }
}

/// Magnitude range of one op in one variant, or `Parameterless`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MagnitudeRange {
    Real(f64, f64),
    Integer(i64, i64),
    Parameterless,
}

/// Reference side length at which the translate constants are quoted.
pub const REFERENCE_SIDE: usize = 224;

/// The transform inventory for one variant at a given image side length.
/// Translate ranges scale with the side so full-frame-shift semantics carry
/// over to smaller images; at the reference side the constants are exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub variant: SpaceVariant,
    pub side: usize,
}

impl SearchSpace {
    pub fn new(variant: SpaceVariant, side: usize) -> Self {
        SearchSpace { variant, side }
    }

    fn translate_extent(&self) -> f64 {
        match self.variant {
            // full-frame shift
            SpaceVariant::Wider => self.side as f64,
            // 32 at 224, scaled proportionally and rounded elsewhere
            _ => (32.0 * self.side as f64 / REFERENCE_SIDE as f64).round(),
        }
    }

    /// The magnitude range for `op` under this space.
    pub fn range(&self, op: TransformOp) -> MagnitudeRange {
        use MagnitudeRange::*;
        use SpaceVariant::*;
        let t = self.translate_extent();
        match op {
            TransformOp::ShearX | TransformOp::ShearY => match self.variant {
                Default => Real(-0.3, 0.3),
                Wide | Wider => Real(-1.0, 1.0),
            },
            TransformOp::TranslateX | TransformOp::TranslateY => Real(-t, t),
            TransformOp::Rotate => match self.variant {
                Default => Real(-30.0, 30.0),
                Wide | Wider => Real(-135.0, 135.0),
            },
            TransformOp::Posterize => match self.variant {
                Default => Integer(4, 8),
                Wide => Integer(2, 8),
                Wider => Integer(0, 8),
            },
            TransformOp::Solarize => Integer(0, 255),
            TransformOp::Contrast | TransformOp::Color | TransformOp::Sharpness => {
                match self.variant {
                    Default | Wide => Real(-1.0, 1.0),
                    Wider => Real(-10.0, 10.0),
                }
            }
            TransformOp::Brightness => match self.variant {
                Default | Wide => Real(-1.0, 1.0),
                Wider => Real(-1.0, 10.0),
            },
            TransformOp::AutoContrast | TransformOp::Equalize | TransformOp::Grey => Parameterless,
        }
    }
}

/// One sampled transform: the op, its magnitude (integral for integer ops,
/// absent for parameterless ones), and the stream that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppliedTransform {
    pub op: TransformOp,
    pub magnitude: Option<f64>,
    pub provenance: crate::rng::StreamKey,
}

/// Draw one op uniformly over the fourteen, then its magnitude uniformly over
/// the op's range (integer lattice for integer ops).
pub fn sample(space: &SearchSpace, rng: &mut SampleRng) -> AppliedTransform {
    let op = ALL_OPS[rng.rng.gen_range(0..ALL_OPS.len())];
    let magnitude = match space.range(op) {
        MagnitudeRange::Real(lo, hi) => Some(rng.rng.gen_range(lo..=hi)),
        MagnitudeRange::Integer(lo, hi) => Some(rng.rng.gen_range(lo..=hi) as f64),
        MagnitudeRange::Parameterless => None,
    };
    AppliedTransform {
        op,
        magnitude,
        provenance: rng.key,
    }
}

fn require_magnitude(t: &AppliedTransform) -> Result<f64> {
    t.magnitude.ok_or_else(|| {
        Error::InvalidParameter(format!("{} requires a magnitude", t.op.name()))
    })
}

fn integer_magnitude(t: &AppliedTransform, lo: i64, hi: i64) -> Result<i64> {
    let m = require_magnitude(t)?;
    if m.fract() != 0.0 || m < lo as f64 || m > hi as f64 {
        return Err(Error::InvalidParameter(format!(
            "{} magnitude {m} outside integer range [{lo}, {hi}]",
            t.op.name()
        )));
    }
    Ok(m as i64)
}

/// Apply a sampled transform. Magnitude mapping: shear coefficient, pixel
/// offset, or degrees for the geometric ops; bits kept for Posterize;
/// threshold for Solarize; blend factor `1 + m` against the op's degenerate
/// image for the enhancement ops.
pub fn apply(t: &AppliedTransform, img: &Image) -> Result<Image> {
    match t.op {
        TransformOp::ShearX => Ok(imaging::affine_warp(
            img,
            &AffineMatrix::shear_x(require_magnitude(t)?),
            WARP_FILL,
        )),
        TransformOp::ShearY => Ok(imaging::affine_warp(
            img,
            &AffineMatrix::shear_y(require_magnitude(t)?),
            WARP_FILL,
        )),
        TransformOp::TranslateX => Ok(imaging::affine_warp(
            img,
            &AffineMatrix::translate(require_magnitude(t)?, 0.0),
            WARP_FILL,
        )),
        TransformOp::TranslateY => Ok(imaging::affine_warp(
            img,
            &AffineMatrix::translate(0.0, require_magnitude(t)?),
            WARP_FILL,
        )),
        TransformOp::Rotate => Ok(imaging::affine_warp(
            img,
            &AffineMatrix::rotate(require_magnitude(t)?),
            WARP_FILL,
        )),
        TransformOp::Posterize => imaging::posterize(img, integer_magnitude(t, 0, 8)? as u32),
        TransformOp::Solarize => imaging::solarize(img, integer_magnitude(t, 0, 255)? as u32),
        TransformOp::Contrast => {
            let grey = imaging::mean_luminance(img).round().clamp(0.0, 255.0) as u8;
            let degenerate = Image::filled(img.width(), img.height(), [grey, grey, grey]);
            imaging::blend(&degenerate, img, 1.0 + require_magnitude(t)?)
        }
        TransformOp::Color => {
            let degenerate = imaging::greyscale(img);
            imaging::blend(&degenerate, img, 1.0 + require_magnitude(t)?)
        }
        TransformOp::Brightness => {
            let degenerate = Image::filled(img.width(), img.height(), [0, 0, 0]);
            imaging::blend(&degenerate, img, 1.0 + require_magnitude(t)?)
        }
        TransformOp::Sharpness => {
            let degenerate = imaging::smooth(img);
            imaging::blend(&degenerate, img, 1.0 + require_magnitude(t)?)
        }
        TransformOp::AutoContrast => Ok(imaging::autocontrast(img)),
        TransformOp::Equalize => Ok(imaging::equalize(img)),
        TransformOp::Grey => Ok(imaging::greyscale(img)),
    }
}

/// Configuration of the always-on weak pipeline: random horizontal flip,
/// random resized crop, slight color jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakConfig {
    pub flip_prob: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub jitter_brightness: f64,
    pub jitter_contrast: f64,
    pub jitter_saturation: f64,
}

impl Default for WeakConfig {
    fn default() -> Self {
        WeakConfig {
            flip_prob: 0.5,
            scale_min: 0.7,
            scale_max: 1.0,
            jitter_brightness: 0.3,
            jitter_contrast: 0.3,
            jitter_saturation: 0.3,
        }
    }
}

impl WeakConfig {
    /// A configuration whose every sub-op degenerates to the identity.
    pub fn identity() -> Self {
        WeakConfig {
            flip_prob: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
            jitter_brightness: 0.0,
            jitter_contrast: 0.0,
            jitter_saturation: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::InvalidParameter(format!(
                "flip probability {} outside [0, 1]",
                self.flip_prob
            )));
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max && self.scale_max <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "crop scale range [{}, {}] must lie within (0, 1]",
                self.scale_min, self.scale_max
            )));
        }
        for (name, s) in [
            ("brightness", self.jitter_brightness),
            ("contrast", self.jitter_contrast),
            ("saturation", self.jitter_saturation),
        ] {
            if s < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} jitter strength {s} must be >= 0"
                )));
            }
        }
        Ok(())
    }
}

fn jitter_brightness(img: &Image, factor: f64) -> Image {
    let black = Image::filled(img.width(), img.height(), [0, 0, 0]);
    imaging::blend(&black, img, factor).expect("same dims")
}

fn jitter_contrast(img: &Image, factor: f64) -> Image {
    let grey = imaging::mean_luminance(img).round().clamp(0.0, 255.0) as u8;
    let degenerate = Image::filled(img.width(), img.height(), [grey, grey, grey]);
    imaging::blend(&degenerate, img, factor).expect("same dims")
}

fn jitter_saturation(img: &Image, factor: f64) -> Image {
    let degenerate = imaging::greyscale(img);
    imaging::blend(&degenerate, img, factor).expect("same dims")
}

/// The weak pipeline, in fixed order: flip, random resized crop (aspect 1),
/// then brightness/contrast/saturation jitter with factors drawn uniformly
/// from `[1 - s, 1 + s]`. Consumes a fixed number of draws regardless of
/// outcome so downstream draws stay aligned.
pub fn weak_augment(img: &Image, cfg: &WeakConfig, rng: &mut SampleRng) -> Image {
    let flip = rng.rng.gen_range(0.0..1.0) < cfg.flip_prob;
    let scale = rng.rng.gen_range(cfg.scale_min..=cfg.scale_max);
    let (w, h) = (img.width(), img.height());
    let cw = ((w as f64 * scale.sqrt()).round() as usize).clamp(1, w);
    let ch = ((h as f64 * scale.sqrt()).round() as usize).clamp(1, h);
    let x0 = rng.rng.gen_range(0..=(w - cw) as u64) as usize;
    let y0 = rng.rng.gen_range(0..=(h - ch) as u64) as usize;
    let fb = rng
        .rng
        .gen_range(1.0 - cfg.jitter_brightness..=1.0 + cfg.jitter_brightness);
    let fc = rng
        .rng
        .gen_range(1.0 - cfg.jitter_contrast..=1.0 + cfg.jitter_contrast);
    let fs = rng
        .rng
        .gen_range(1.0 - cfg.jitter_saturation..=1.0 + cfg.jitter_saturation);

    let mut out = if flip {
        imaging::flip_horizontal(img)
    } else {
        img.clone()
    };
    if cw != w || ch != h || x0 != 0 || y0 != 0 {
        out = imaging::crop_resize(&out, x0, y0, cw, ch).expect("crop stays in bounds");
    }
    if fb != 1.0 {
        out = jitter_brightness(&out, fb);
    }
    if fc != 1.0 {
        out = jitter_contrast(&out, fc);
    }
    if fs != 1.0 {
        out = jitter_saturation(&out, fs);
    }
    out
}

/// One uniformly sampled transform from `space`, applied on top of the weak
/// output. Returns the image and the audit record.
pub fn wider_augment(
    weak_img: &Image,
    space: &SearchSpace,
    rng: &mut SampleRng,
) -> (Image, AppliedTransform) {
    let t = sample(space, rng);
    let img = apply(&t, weak_img).expect("sampled magnitude is in range");
    (img, t)
}
