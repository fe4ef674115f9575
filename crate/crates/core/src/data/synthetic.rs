//! Offline class-conditional gratings.
//!
//! Class `k` of `K` is a sinusoidal grating at orientation `k·180°/K` with
//! random frequency, phase, amplitude and an orientation jitter, overlaid
//! with a class-independent distractor grating and Gaussian pixel noise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{purpose, stream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub samples: usize,
    pub seed: u64,
    pub size: usize,
    pub channels: usize,
    /// Standard deviation of the additive pixel noise.
    pub noise: f64,
    /// Maximum orientation jitter in degrees.
    pub jitter_degrees: f64,
    /// Maximum amplitude of the distractor grating.
    pub distractor: f64,
}

impl SyntheticSpec {
    pub fn new(classes: usize, samples: usize, seed: u64) -> Self {
        SyntheticSpec {
            classes,
            samples,
            seed,
            size: 16,
            channels: 1,
            noise: 0.15,
            jitter_degrees: 6.0,
            distractor: 0.0,
        }
    }
}

pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<Dataset<T>> {
    if spec.classes < 2 || spec.size < 2 || !(spec.channels == 1 || spec.channels == 3) {
        return Err(Error::InvalidConfig(format!(
            "synthetic data needs K >= 2, size >= 2 and 1 or 3 channels, got {spec:?}"
        )));
    }
    if !(spec.noise >= 0.0) || !(spec.jitter_degrees >= 0.0) || !(spec.distractor >= 0.0) {
        return Err(Error::InvalidConfig(
            "synthetic noise, jitter and distractor must be >= 0".into(),
        ));
    }
    let s = spec.size;
    let noise = Normal::new(0.0, spec.noise).expect("finite std");
    let mut images = Vec::with_capacity(spec.samples);
    let mut labels = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let mut rng = stream(&[spec.seed, purpose::DATA, i as u64]);
        let y = rng.random_range(0..spec.classes);
        let jitter = rng.random_range(-spec.jitter_degrees..=spec.jitter_degrees);
        let theta = (y as f64 * 180.0 / spec.classes as f64 + jitter).to_radians();
        let freq = rng.random_range(0.12..0.22);
        let phase = rng.random_range(0.0..2.0 * PI);
        let amp = rng.random_range(0.25..0.45);
        let d_theta = rng.random_range(0.0..PI);
        let d_freq = rng.random_range(0.08..0.3);
        let d_phase = rng.random_range(0.0..2.0 * PI);
        let d_amp = spec.distractor * rng.random::<f64>();
        let gains: Vec<f64> = (0..spec.channels)
            .map(|_| if spec.channels == 1 { 1.0 } else { rng.random_range(0.7..1.0) })
            .collect();
        let c = (s as f64 - 1.0) / 2.0;
        let (cos, sin) = (theta.cos(), theta.sin());
        let (d_cos, d_sin) = (d_theta.cos(), d_theta.sin());
        let mut data = Vec::with_capacity(spec.channels * s * s);
        for &g in &gains {
            for py in 0..s {
                for px in 0..s {
                    let (x, y) = (px as f64 - c, py as f64 - c);
                    let u = x * cos + y * sin;
                    let w = x * d_cos + y * d_sin;
                    let v = 0.5
                        + g * amp * (2.0 * PI * freq * u + phase).cos()
                        + g * d_amp * (2.0 * PI * d_freq * w + d_phase).cos()
                        + noise.sample(&mut rng);
                    data.push(T::of(v.clamp(0.0, 1.0)));
                }
            }
        }
        images.push(Image::new(spec.channels, s, s, data)?);
        labels.push(y);
    }
    Dataset::new(
        format!("synthetic-k{}-n{}-s{}", spec.classes, spec.samples, spec.seed),
        images,
        labels,
        spec.classes,
    )
}
