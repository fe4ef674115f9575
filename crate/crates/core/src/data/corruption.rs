//! Locally generated corruption benchmark: six kinds, five severities each.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    GaussianNoise,
    ImpulseNoise,
    GaussianBlur,
    Brightness,
    Contrast,
    Pixelate,
}

pub const CORRUPTION_KINDS: [CorruptionKind; 6] = [
    CorruptionKind::GaussianNoise,
    CorruptionKind::ImpulseNoise,
    CorruptionKind::GaussianBlur,
    CorruptionKind::Brightness,
    CorruptionKind::Contrast,
    CorruptionKind::Pixelate,
];

pub const MAX_SEVERITY: u8 = 5;

impl CorruptionKind {
    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::ImpulseNoise => "impulse_noise",
            CorruptionKind::GaussianBlur => "gaussian_blur",
            CorruptionKind::Brightness => "brightness",
            CorruptionKind::Contrast => "contrast",
            CorruptionKind::Pixelate => "pixelate",
        }
    }

    /// Parameter for severities 1..=5.
    pub fn table(self) -> [f64; 5] {
        match self {
            CorruptionKind::GaussianNoise => [0.04, 0.06, 0.08, 0.09, 0.10],
            CorruptionKind::ImpulseNoise => [0.01, 0.02, 0.03, 0.05, 0.07],
            CorruptionKind::GaussianBlur => [0.4, 0.6, 0.8, 1.0, 1.2],
            CorruptionKind::Brightness => [0.05, 0.10, 0.15, 0.20, 0.25],
            CorruptionKind::Contrast => [0.75, 0.6, 0.5, 0.4, 0.3],
            CorruptionKind::Pixelate => [0.9, 0.8, 0.7, 0.6, 0.5],
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CORRUPTION_KINDS
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown corruption {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: u8,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: u8) -> Result<Self> {
        if !(1..=MAX_SEVERITY).contains(&severity) {
            return Err(Error::InvalidConfig(format!(
                "severity {severity} outside 1..={MAX_SEVERITY}"
            )));
        }
        Ok(CorruptionSpec { kind, severity })
    }

    pub fn param(&self) -> f64 {
        self.kind.table()[self.severity as usize - 1]
    }

    /// All 30 (kind, severity) cells.
    pub fn suite() -> Vec<CorruptionSpec> {
        CORRUPTION_KINDS
            .iter()
            .flat_map(|&kind| (1..=MAX_SEVERITY).map(move |severity| CorruptionSpec { kind, severity }))
            .collect()
    }
}

pub fn corrupt<T: Scalar, R: Rng + ?Sized>(
    image: &Image<T>,
    spec: &CorruptionSpec,
    rng: &mut R,
) -> Image<T> {
    corrupt_with_param(image, spec.kind, spec.param(), rng)
}

/// Applies `kind` at an explicit parameter value, clamped to `[0,1]`.
pub fn corrupt_with_param<T: Scalar, R: Rng + ?Sized>(
    image: &Image<T>,
    kind: CorruptionKind,
    param: f64,
    rng: &mut R,
) -> Image<T> {
    let out = match kind {
        CorruptionKind::GaussianNoise => {
            let normal = Normal::new(0.0, param.max(0.0)).expect("finite std");
            let mut out = image.clone();
            for v in out.data_mut() {
                *v += T::of(normal.sample(rng));
            }
            out
        }
        CorruptionKind::ImpulseNoise => {
            let mut out = image.clone();
            // two draws per pixel whatever the outcome, so a shared stream gives
            // nested corrupted sets across severities
            for v in out.data_mut() {
                let hit = rng.random::<f64>() < param;
                let salt = rng.random_bool(0.5);
                if hit {
                    *v = if salt { T::one() } else { T::zero() };
                }
            }
            out
        }
        CorruptionKind::GaussianBlur => gaussian_blur(image, param),
        CorruptionKind::Brightness => image.map(|v| v + T::of(param)),
        CorruptionKind::Contrast => {
            let mut out = image.clone();
            for c in 0..image.channels() {
                let plane = out.plane_mut(c);
                let mean = plane.iter().map(|v| v.f64()).sum::<f64>() / plane.len() as f64;
                for v in plane.iter_mut() {
                    *v = T::of(v.f64() * param + mean * (1.0 - param));
                }
            }
            out
        }
        CorruptionKind::Pixelate => pixelate(image, param),
    };
    out.clamp_unit()
}

fn gaussian_blur<T: Scalar>(image: &Image<T>, sigma: f64) -> Image<T> {
    if !(sigma > 0.0) {
        return image.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let (h, w) = (image.height() as isize, image.width() as isize);
    let mut out = image.clone();
    for c in 0..image.channels() {
        let src: Vec<f64> = image.plane(c).iter().map(|v| v.f64()).collect();
        let mut tmp = vec![0.0; src.len()];
        // edges replicate the border pixel
        for y in 0..h {
            for x in 0..w {
                tmp[(y * w + x) as usize] = (-radius..=radius)
                    .map(|d| kernel[(d + radius) as usize] * src[(y * w + (x + d).clamp(0, w - 1)) as usize])
                    .sum();
            }
        }
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let v: f64 = (-radius..=radius)
                    .map(|d| kernel[(d + radius) as usize] * tmp[((y + d).clamp(0, h - 1) * w + x) as usize])
                    .sum();
                dst[(y * w + x) as usize] = T::of(v);
            }
        }
    }
    out
}

/// Area-weighted box average onto a `scale`-sized grid, upsampled back by
/// replication.
fn pixelate<T: Scalar>(image: &Image<T>, scale: f64) -> Image<T> {
    let (h, w) = (image.height(), image.width());
    let sh = ((h as f64 * scale).round() as usize).clamp(1, h);
    let sw = ((w as f64 * scale).round() as usize).clamp(1, w);
    if (sh, sw) == (h, w) {
        return image.clone();
    }
    let ys = overlap_weights(h, sh);
    let xs = overlap_weights(w, sw);
    let mut out = image.clone();
    for c in 0..image.channels() {
        let src = image.plane(c);
        let mut cells = vec![0.0; sh * sw];
        for (cy, wy) in ys.iter().enumerate() {
            for (cx, wx) in xs.iter().enumerate() {
                let mut sum = 0.0;
                let mut area = 0.0;
                for &(y, fy) in wy {
                    for &(x, fx) in wx {
                        sum += fy * fx * src[y * w + x].f64();
                        area += fy * fx;
                    }
                }
                cells[cy * sw + cx] = sum / area;
            }
        }
        let dst = out.plane_mut(c);
        for y in 0..h {
            let cy = ((2 * y + 1) * sh / (2 * h)).min(sh - 1);
            for x in 0..w {
                let cx = ((2 * x + 1) * sw / (2 * w)).min(sw - 1);
                dst[y * w + x] = T::of(cells[cy * sw + cx]);
            }
        }
    }
    out
}

/// For each of `cells` output cells, the source pixels it covers with their
/// overlap lengths.
fn overlap_weights(len: usize, cells: usize) -> Vec<Vec<(usize, f64)>> {
    let step = len as f64 / cells as f64;
    (0..cells)
        .map(|k| {
            let (a, b) = (k as f64 * step, (k + 1) as f64 * step);
            (a.floor() as usize..(b.ceil() as usize).min(len))
                .map(|p| (p, (b.min(p as f64 + 1.0) - a.max(p as f64)).max(0.0)))
                .filter(|&(_, f)| f > 0.0)
                .collect()
        })
        .collect()
}
