use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// `C×H×W` image with intensities in `[0, 1]`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if channels * height * width != data.len() || data.is_empty() {
            return Err(Error::RejectedInput(format!(
                "{}x{}x{} image with {} values",
                channels,
                height,
                width,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }
    pub fn data(&self) -> &[T] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn clamp_unit(mut self) -> Self {
        for v in &mut self.data {
            *v = v.max(T::zero()).min(T::one());
        }
        self
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|&v| v >= T::zero() && v <= T::one())
    }

    /// `weight·self + (1 − weight)·other`.
    pub fn blend(&self, other: &Image<T>, weight: f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::RejectedInput(format!(
                "blend of {:?} with {:?}",
                self.shape(),
                other.shape()
            )));
        }
        // endpoints are returned verbatim so the convex combination is exact there
        if weight == 1.0 {
            return Ok(self.clone());
        }
        if weight == 0.0 {
            return Ok(other.clone());
        }
        let (a, b) = (T::of(weight), T::of(1.0 - weight));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&x, &y)| a * x + b * y)
            .collect();
        Ok(Self {
            data,
            ..self.clone()
        })
    }

    pub fn max_abs_diff(&self, other: &Image<T>) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.f64() - b.f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }
}

/// Stacks equally shaped images into a `[b, c, h, w]` tensor.
pub fn stack<T: Scalar>(images: &[&Image<T>]) -> Result<Tensor<T>> {
    let first = images
        .first()
        .ok_or_else(|| Error::RejectedInput("empty batch".into()))?;
    let shape = first.shape();
    let mut data = Vec::with_capacity(images.len() * first.data.len());
    for img in images {
        if img.shape() != shape {
            return Err(Error::RejectedInput(format!(
                "batch mixes shapes {:?} and {:?}",
                shape,
                img.shape()
            )));
        }
        data.extend_from_slice(&img.data);
    }
    Tensor::new(vec![images.len(), shape[0], shape[1], shape[2]], data)
}

/// Splits a `[b, c, h, w]` tensor back into images.
pub fn unstack<T: Scalar>(batch: &Tensor<T>) -> Result<Vec<Image<T>>> {
    let s = batch.shape();
    if s.len() != 4 {
        return Err(Error::RejectedInput(format!("unstack of shape {s:?}")));
    }
    let n = s[1] * s[2] * s[3];
    batch
        .data()
        .chunks(n)
        .map(|c| Image::new(s[1], s[2], s[3], c.to_vec()))
        .collect()
}
