//! The ten RandAug image operations and their magnitude scales.
//!
//! Magnitudes run over `1..=10` and map linearly onto operation strength:
//!
//! | op | parameter at magnitude `m` |
//! |----|----------------------------|
//! | rotation | ±3·m degrees |
//! | shearX / shearY | ±0.03·m shear factor |
//! | translateX / translateY | ±0.03·m·(width or height) pixels |
//! | posterize | `max(1, 8 − ⌊4m/10⌋)` bits |
//! | solarize | threshold `1 − m/10` |
//! | color | saturation factor `1 ± 0.09·m` |
//! | autocontrast, equalize | none (magnitude fixed at 1) |
//!
//! Geometric operations resample bilinearly and fill with zeros outside the
//! source image.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

pub const MAX_MAGNITUDE: u8 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpType {
    Color,
    Rotation,
    AutoContrast,
    Equalize,
    Posterize,
    Solarize,
    #[serde(rename = "shearX")]
    ShearX,
    #[serde(rename = "shearY")]
    ShearY,
    #[serde(rename = "translateX")]
    TranslateX,
    #[serde(rename = "translateY")]
    TranslateY,
}

pub const ALL_OPS: [OpType; 10] = [
    OpType::Color,
    OpType::Rotation,
    OpType::AutoContrast,
    OpType::Equalize,
    OpType::Posterize,
    OpType::Solarize,
    OpType::ShearX,
    OpType::ShearY,
    OpType::TranslateX,
    OpType::TranslateY,
];

/// Transformation subset whose distortion grows monotonically with magnitude.
pub const MOTIVATION_OPS: [OpType; 5] = [
    OpType::Rotation,
    OpType::Posterize,
    OpType::Solarize,
    OpType::ShearX,
    OpType::ShearY,
];

impl OpType {
    pub fn name(self) -> &'static str {
        match self {
            OpType::Color => "color",
            OpType::Rotation => "rotation",
            OpType::AutoContrast => "autocontrast",
            OpType::Equalize => "equalize",
            OpType::Posterize => "posterize",
            OpType::Solarize => "solarize",
            OpType::ShearX => "shearX",
            OpType::ShearY => "shearY",
            OpType::TranslateX => "translateX",
            OpType::TranslateY => "translateY",
        }
    }

    /// `false` for autocontrast and equalize.
    pub fn has_magnitude(self) -> bool {
        !matches!(self, OpType::AutoContrast | OpType::Equalize)
    }

    pub fn index(self) -> usize {
        ALL_OPS.iter().position(|&o| o == self).unwrap()
    }
}

impl fmt::Display for OpType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_OPS
            .iter()
            .copied()
            .find(|o| o.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown augmentation op {s:?}")))
    }
}

/// A concrete RandAug draw: operation, magnitude and direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandAugParams {
    pub op: OpType,
    pub magnitude: u8,
    /// Selects the negative direction for signed operations.
    pub negate: bool,
}

impl RandAugParams {
    pub fn new(op: OpType, magnitude: u8, negate: bool) -> Result<Self> {
        let p = if op.has_magnitude() {
            Self {
                op,
                magnitude,
                negate,
            }
        } else {
            Self {
                op,
                magnitude: 1,
                negate: false,
            }
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.magnitude == 0 || self.magnitude > MAX_MAGNITUDE {
            return Err(Error::InvalidConfig(format!(
                "magnitude {} outside 1..={MAX_MAGNITUDE}",
                self.magnitude
            )));
        }
        if !self.op.has_magnitude() && self.magnitude != 1 {
            return Err(Error::InvalidConfig(format!(
                "{} takes no magnitude",
                self.op
            )));
        }
        Ok(())
    }

    fn signed(&self, value: f64) -> f64 {
        if self.negate {
            -value
        } else {
            value
        }
    }
}

pub fn rotation_degrees(m: u8) -> f64 {
    3.0 * m as f64
}
pub fn shear_factor(m: u8) -> f64 {
    0.03 * m as f64
}
pub fn translate_fraction(m: u8) -> f64 {
    0.03 * m as f64
}
pub fn posterize_bits(m: u8) -> u32 {
    (8 - (m as i32 * 4 / 10)).max(1) as u32
}
pub fn solarize_threshold(m: u8) -> f64 {
    1.0 - m as f64 / 10.0
}
pub fn color_delta(m: u8) -> f64 {
    0.09 * m as f64
}

pub fn apply_randaug_op<T: Scalar>(image: &Image<T>, params: &RandAugParams) -> Result<Image<T>> {
    params.validate()?;
    let m = params.magnitude;
    let out = match params.op {
        OpType::Color => color(image, 1.0 + params.signed(color_delta(m))),
        OpType::Rotation => rotate(image, params.signed(rotation_degrees(m))),
        OpType::AutoContrast => autocontrast(image),
        OpType::Equalize => equalize(image),
        OpType::Posterize => posterize(image, posterize_bits(m)),
        OpType::Solarize => solarize(image, solarize_threshold(m)),
        OpType::ShearX => shear_x(image, params.signed(shear_factor(m))),
        OpType::ShearY => shear_y(image, params.signed(shear_factor(m))),
        OpType::TranslateX => translate(
            image,
            params.signed(translate_fraction(m) * image.width() as f64),
            0.0,
        ),
        OpType::TranslateY => translate(
            image,
            0.0,
            params.signed(translate_fraction(m) * image.height() as f64),
        ),
    };
    Ok(out.clamp_unit())
}

fn bilinear(plane: &[f64], w: usize, h: usize, sx: f64, sy: f64) -> f64 {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let px = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            plane[y as usize * w + x as usize]
        }
    };
    let mut v = px(x0, y0) * (1.0 - fx) * (1.0 - fy);
    if fx != 0.0 {
        v += px(x0 + 1, y0) * fx * (1.0 - fy);
    }
    if fy != 0.0 {
        v += px(x0, y0 + 1) * (1.0 - fx) * fy;
        if fx != 0.0 {
            v += px(x0 + 1, y0 + 1) * fx * fy;
        }
    }
    v
}

/// Resamples every channel at `source(x, y)` for each output pixel.
fn warp<T: Scalar>(image: &Image<T>, source: impl Fn(f64, f64) -> (f64, f64)) -> Image<T> {
    let (c, h, w) = (image.channels(), image.height(), image.width());
    let mut out = Image::filled(c, h, w, T::zero());
    for ch in 0..c {
        let plane: Vec<f64> = image.plane(ch).iter().map(|v| v.f64()).collect();
        let dst = out.plane_mut(ch);
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = source(x as f64, y as f64);
                dst[y * w + x] = T::of(bilinear(&plane, w, h, sx, sy));
            }
        }
    }
    out
}

fn center<T: Scalar>(image: &Image<T>) -> (f64, f64) {
    (
        (image.width() as f64 - 1.0) / 2.0,
        (image.height() as f64 - 1.0) / 2.0,
    )
}

/// Counter-clockwise rotation about the image centre.
pub fn rotate<T: Scalar>(image: &Image<T>, degrees: f64) -> Image<T> {
    if degrees == 0.0 {
        return image.clone();
    }
    let (cx, cy) = center(image);
    let (s, c) = degrees.to_radians().sin_cos();
    warp(image, |x, y| {
        let (dx, dy) = (x - cx, y - cy);
        (c * dx - s * dy + cx, s * dx + c * dy + cy)
    })
}

pub fn shear_x<T: Scalar>(image: &Image<T>, factor: f64) -> Image<T> {
    let (_, cy) = center(image);
    warp(image, |x, y| (x + factor * (y - cy), y))
}

pub fn shear_y<T: Scalar>(image: &Image<T>, factor: f64) -> Image<T> {
    let (cx, _) = center(image);
    warp(image, |x, y| (x, y + factor * (x - cx)))
}

/// Moves content by `(dx, dy)` pixels.
pub fn translate<T: Scalar>(image: &Image<T>, dx: f64, dy: f64) -> Image<T> {
    warp(image, |x, y| (x - dx, y - dy))
}

/// Keeps `bits` bits of precision: `v ↦ min(⌊v·2^b⌋, 2^b − 1) / 2^b`.
pub fn posterize<T: Scalar>(image: &Image<T>, bits: u32) -> Image<T> {
    let levels = (1u64 << bits.clamp(1, 16)) as f64;
    image.map(|v| T::of((v.f64() * levels).floor().clamp(0.0, levels - 1.0) / levels))
}

/// Inverts every intensity strictly above `threshold`.
pub fn solarize<T: Scalar>(image: &Image<T>, threshold: f64) -> Image<T> {
    image.map(|v| if v.f64() > threshold { T::one() - v } else { v })
}

/// Saturation blend towards (`factor < 1`) or away from the luminance image.
/// Identity for images that are not RGB.
pub fn color<T: Scalar>(image: &Image<T>, factor: f64) -> Image<T> {
    if image.channels() != 3 || factor == 1.0 {
        return image.clone();
    }
    let n = image.height() * image.width();
    let d = image.data();
    let mut out = image.clone();
    let od = out.data_mut();
    for i in 0..n {
        let (r, g, b) = (d[i].f64(), d[n + i].f64(), d[2 * n + i].f64());
        let gray = 0.299 * r + 0.587 * g + 0.114 * b;
        for (ch, v) in [r, g, b].into_iter().enumerate() {
            od[ch * n + i] = T::of(gray + factor * (v - gray));
        }
    }
    out
}

/// Per-channel linear stretch of `[min, max]` onto `[0, 1]`.
pub fn autocontrast<T: Scalar>(image: &Image<T>) -> Image<T> {
    let mut out = image.clone();
    for ch in 0..image.channels() {
        let plane = out.plane_mut(ch);
        let lo = plane.iter().fold(f64::INFINITY, |m, v| m.min(v.f64()));
        let hi = plane.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.f64()));
        if hi > lo {
            for v in plane.iter_mut() {
                *v = T::of((v.f64() - lo) / (hi - lo));
            }
        }
    }
    out
}

/// Per-channel histogram equalisation over 256 levels.
pub fn equalize<T: Scalar>(image: &Image<T>) -> Image<T> {
    let mut out = image.clone();
    for ch in 0..image.channels() {
        let plane = out.plane_mut(ch);
        let levels: Vec<usize> = plane
            .iter()
            .map(|v| (v.f64().clamp(0.0, 1.0) * 255.0).round() as usize)
            .collect();
        let mut hist = [0usize; 256];
        for &l in &levels {
            hist[l] += 1;
        }
        let nonzero: Vec<usize> = hist.iter().copied().filter(|&c| c > 0).collect();
        if nonzero.len() <= 1 {
            continue;
        }
        let step = (nonzero.iter().sum::<usize>() - nonzero.last().unwrap()) / 255;
        if step == 0 {
            continue;
        }
        let mut lut = [0usize; 256];
        let mut acc = step / 2;
        for (i, slot) in lut.iter_mut().enumerate() {
            *slot = (acc / step).min(255);
            acc += hist[i];
        }
        for (v, &l) in plane.iter_mut().zip(&levels) {
            *v = T::of(lut[l] as f64 / 255.0);
        }
    }
    out
}
