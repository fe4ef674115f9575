//! IDX and CIFAR binary parsers, plus writers for fixtures.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_RECORD: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("four bytes")))
        .ok_or_else(|| Error::format(offset as u64, "truncated header"))
}

fn idx_header(bytes: &[u8], magic: u32, rank: usize) -> Result<Vec<usize>> {
    let m = be_u32(bytes, 0)?;
    if m != magic {
        return Err(Error::format(
            0,
            format!("magic {m:#010x}, expected {magic:#010x}"),
        ));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| be_u32(bytes, 4 + 4 * i).map(|d| d as usize))
        .collect::<Result<_>>()?;
    let header = 4 + 4 * rank;
    let payload: usize = dims.iter().product();
    if bytes.len() < header + payload {
        return Err(Error::format(
            bytes.len() as u64,
            format!("payload truncated, expected {} bytes", header + payload),
        ));
    }
    if bytes.len() > header + payload {
        return Err(Error::format(
            (header + payload) as u64,
            "trailing bytes after payload",
        ));
    }
    Ok(dims)
}

/// `n × h × w` unsigned-byte images as single-channel images.
pub fn parse_idx_images<T: Scalar>(bytes: &[u8]) -> Result<Vec<Image<T>>> {
    let dims = idx_header(bytes, IDX_IMAGES_MAGIC, 3)?;
    let (n, h, w) = (dims[0], dims[1], dims[2]);
    if (h == 0 || w == 0) && n > 0 {
        return Err(Error::format(8, "zero image dimension"));
    }
    let payload = &bytes[16..];
    (0..n)
        .map(|i| {
            let px = &payload[i * h * w..(i + 1) * h * w];
            Image::new(1, h, w, px.iter().map(|&b| T::of(b as f64 / 255.0)).collect())
        })
        .collect()
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    idx_header(bytes, IDX_LABELS_MAGIC, 1)?;
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

pub fn write_idx_images<T: Scalar>(images: &[Image<T>]) -> Result<Vec<u8>> {
    let (h, w) = images.first().map_or((0, 0), |im| (im.height(), im.width()));
    let mut out = Vec::new();
    out.extend(IDX_IMAGES_MAGIC.to_be_bytes());
    for d in [images.len(), h, w] {
        out.extend((d as u32).to_be_bytes());
    }
    for im in images {
        if im.channels() != 1 || im.height() != h || im.width() != w {
            return Err(Error::RejectedInput("IDX images must be single-channel and equal size".into()));
        }
        out.extend(im.data().iter().map(|v| to_byte(*v)));
    }
    Ok(out)
}

pub fn write_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend(IDX_LABELS_MAGIC.to_be_bytes());
    out.extend((labels.len() as u32).to_be_bytes());
    for &y in labels {
        out.push(u8::try_from(y).map_err(|_| Error::InvalidLabel(format!("label {y} exceeds a byte")))?);
    }
    Ok(out)
}

/// CIFAR-10 binary batch: records of one label byte then 1024 bytes per
/// channel (R, G, B), each row-major 32×32.
pub fn parse_cifar<T: Scalar>(bytes: &[u8]) -> Result<(Vec<Image<T>>, Vec<usize>)> {
    if bytes.len() % CIFAR_RECORD != 0 {
        let whole = bytes.len() / CIFAR_RECORD * CIFAR_RECORD;
        return Err(Error::format(
            whole as u64,
            format!("partial record of {} bytes", bytes.len() - whole),
        ));
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in bytes.chunks(CIFAR_RECORD).enumerate() {
        let y = rec[0] as usize;
        if y >= 10 {
            return Err(Error::format((i * CIFAR_RECORD) as u64, format!("label byte {y}")));
        }
        labels.push(y);
        images.push(Image::new(
            3,
            CIFAR_SIDE,
            CIFAR_SIDE,
            rec[1..].iter().map(|&b| T::of(b as f64 / 255.0)).collect(),
        )?);
    }
    Ok((images, labels))
}

pub fn write_cifar<T: Scalar>(images: &[Image<T>], labels: &[usize]) -> Result<Vec<u8>> {
    if images.len() != labels.len() {
        return Err(Error::RejectedInput("image and label counts differ".into()));
    }
    let mut out = Vec::with_capacity(images.len() * CIFAR_RECORD);
    for (im, &y) in images.iter().zip(labels) {
        if im.shape() != [3, CIFAR_SIDE, CIFAR_SIDE] || y >= 10 {
            return Err(Error::RejectedInput("CIFAR records are 3×32×32 with labels < 10".into()));
        }
        out.push(y as u8);
        out.extend(im.data().iter().map(|v| to_byte(*v)));
    }
    Ok(out)
}

fn to_byte<T: Scalar>(v: T) -> u8 {
    (v.f64().clamp(0.0, 1.0) * 255.0).round() as u8
}
