//! Binary PGM (P5), binary PPM (P6) and AGT1 raw tensor files.
//!
//! AGT1 layout: magic `AGT1`, u8 dtype code (0 = f32, 1 = f64), u8 rank,
//! `rank` little-endian u32 dims, then the payload little-endian in row-major
//! order. Rank 4 is N×H×W×C, rank 3 H×W×C, rank 2 H×W and rank 1 a channel
//! vector.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DType, Real, Shape, Tensor};

pub const AGT_MAGIC: &[u8; 4] = b"AGT1";

/// A tensor of either precision, as read from an AGT1 file.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::F32(_) => DType::F32,
            AnyTensor::F64(_) => DType::F64,
        }
    }

    pub fn shape(&self) -> Shape {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::F64(t) => t.shape(),
        }
    }

    pub fn cast<T: Real>(&self) -> Tensor<T> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }
}

/// Serialises a tensor as one rank-4 AGT1 record.
pub fn encode_agt<T: Real>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 2 + 16 + t.len() * T::DTYPE.size_bytes());
    out.extend_from_slice(AGT_MAGIC);
    out.push(T::DTYPE.code());
    out.push(4);
    for d in t.shape().dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

fn decode_payload<T: Real>(shape: Shape, bytes: &[u8]) -> Result<Tensor<T>> {
    let size = T::DTYPE.size_bytes();
    let data = bytes.chunks_exact(size).map(T::read_le).collect();
    Tensor::new(shape, data)
}

/// Parses one AGT1 record from the front of `bytes`; returns it with the
/// number of bytes consumed.
pub fn decode_agt(bytes: &[u8], origin: &Path) -> Result<(AnyTensor, usize)> {
    let fail = |msg: &str| Error::format(origin, msg);
    if bytes.len() < 6 || &bytes[..4] != AGT_MAGIC {
        return Err(fail("bad AGT1 magic"));
    }
    let dtype = DType::from_code(bytes[4]).ok_or_else(|| fail("unknown dtype code"))?;
    let rank = bytes[5] as usize;
    if !(1..=4).contains(&rank) {
        return Err(fail("rank must be 1..=4"));
    }
    let header = 6 + 4 * rank;
    if bytes.len() < header {
        return Err(fail("truncated header"));
    }
    let dims: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let shape = match dims.as_slice() {
        [n, h, w, c] => Shape::new(*n, *h, *w, *c),
        [h, w, c] => Shape::new(1, *h, *w, *c),
        [h, w] => Shape::new(1, *h, *w, 1),
        [c] => Shape::vector(1, *c),
        _ => unreachable!("rank checked"),
    };
    let len = shape.numel() * dtype.size_bytes();
    let payload = bytes
        .get(header..header + len)
        .ok_or_else(|| fail("truncated payload"))?;
    let t = match dtype {
        DType::F32 => AnyTensor::F32(decode_payload(shape, payload)?),
        DType::F64 => AnyTensor::F64(decode_payload(shape, payload)?),
    };
    Ok((t, header + len))
}

pub fn save_agt<T: Real>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    fs::write(path, encode_agt(t))?;
    Ok(())
}

pub fn load_agt(path: impl AsRef<Path>) -> Result<AnyTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let (t, used) = decode_agt(&bytes, path)?;
    if used != bytes.len() {
        return Err(Error::format(path, "trailing bytes after AGT1 record"));
    }
    Ok(t)
}

/// Header of a binary PNM file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PnmHeader {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
}

fn parse_pnm_header(bytes: &[u8], origin: &Path) -> Result<(PnmHeader, usize)> {
    let fail = |msg: &str| Error::format(origin, msg);
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(fail("not a binary PGM/PPM file")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(fail("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(fail("expected a number in header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fail("header number out of range"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(fail("missing whitespace after maxval")),
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(fail("maxval must be in 1..=65535"));
    }
    Ok((
        PnmHeader {
            channels,
            width,
            height,
            maxval: maxval as u16,
        },
        pos,
    ))
}

/// Raw samples of a binary PNM file.
pub fn decode_pnm_samples(bytes: &[u8], origin: &Path) -> Result<(PnmHeader, Vec<u16>)> {
    let (header, start) = parse_pnm_header(bytes, origin)?;
    let count = header.width * header.height * header.channels;
    let wide = header.maxval > 255;
    let need = count * if wide { 2 } else { 1 };
    let payload = bytes
        .get(start..start + need)
        .ok_or_else(|| Error::format(origin, "truncated payload"))?;
    let samples = if wide {
        payload
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        payload.iter().map(|&b| b as u16).collect()
    };
    Ok((header, samples))
}

/// Decodes a P5/P6 image into a `1×H×W×C` tensor scaled to `[0, 1]`.
pub fn decode_pnm(bytes: &[u8], origin: &Path) -> Result<Tensor<f64>> {
    let (h, samples) = decode_pnm_samples(bytes, origin)?;
    let scale = h.maxval as f64;
    Tensor::new(
        Shape::new(1, h.height, h.width, h.channels),
        samples.iter().map(|&s| s as f64 / scale).collect(),
    )
}

/// Encodes raw samples as P5 (1 channel) or P6 (3 channels).
pub fn encode_pnm_samples(header: PnmHeader, samples: &[u16]) -> Result<Vec<u8>> {
    let magic = match header.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::invalid(format!("PNM supports 1 or 3 channels, got {c}"))),
    };
    if header.maxval == 0 {
        return Err(Error::invalid("maxval must be positive"));
    }
    if samples.len() != header.width * header.height * header.channels {
        return Err(Error::invalid("sample count does not match header"));
    }
    let mut out = format!("{magic}\n{} {}\n{}\n", header.width, header.height, header.maxval).into_bytes();
    for &s in samples {
        if s > header.maxval {
            return Err(Error::invalid(format!("sample {s} above maxval")));
        }
        if header.maxval > 255 {
            out.extend_from_slice(&s.to_be_bytes());
        } else {
            out.push(s as u8);
        }
    }
    Ok(out)
}

/// Quantises a `1×H×W×C` image in `[0, 1]` to `maxval` levels and encodes it.
pub fn encode_pnm<T: Real>(image: &Tensor<T>, maxval: u16) -> Result<Vec<u8>> {
    let s = image.shape();
    if s.n != 1 {
        return Err(Error::invalid("PNM encodes a single image"));
    }
    let m = maxval as f64;
    let samples: Vec<u16> = image
        .data()
        .iter()
        .map(|v| (v.as_f64().clamp(0.0, 1.0) * m).round() as u16)
        .collect();
    encode_pnm_samples(
        PnmHeader {
            channels: s.c,
            width: s.w,
            height: s.h,
            maxval,
        },
        &samples,
    )
}

pub fn save_pnm<T: Real>(path: impl AsRef<Path>, image: &Tensor<T>, maxval: u16) -> Result<()> {
    let bytes = encode_pnm(image, maxval)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Loads a P5, P6 or AGT1 file (detected by magic) as a `1×H×W×C` image.
pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.starts_with(AGT_MAGIC) {
        let (t, _) = decode_agt(&bytes, path)?;
        let t = t.cast::<f64>();
        if t.shape().n != 1 {
            return Err(Error::format(path, "image tensors must have batch size 1"));
        }
        Ok(t)
    } else {
        decode_pnm(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn here() -> &'static Path {
        Path::new("<memory>")
    }

    #[test]
    fn p5_scaling() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 128, 64]);
        let t = decode_pnm(&bytes, here()).unwrap();
        assert_eq!(t.shape(), Shape::new(1, 2, 2, 1));
        assert_eq!(t.data()[0], 0.0);
        assert_eq!(t.data()[1], 1.0);
        assert!((t.data()[2] - 128.0 / 255.0).abs() < 1e-15);
        assert!((t.data()[3] - 64.0 / 255.0).abs() < 1e-15);
        assert!((t.data()[2] - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn p6_channels() {
        let mut bytes = b"P6 3 1 255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 0, 255, 0, 0, 0, 255]);
        let t = decode_pnm(&bytes, here()).unwrap();
        assert_eq!(t.shape(), Shape::new(1, 1, 3, 3));
        assert_eq!(t.data(), &[1., 0., 0., 0., 1., 0., 0., 0., 1.]);
    }

    #[test]
    fn comments_and_sixteen_bit() {
        let mut bytes = b"P5\n# made by hand\n1 # width\n2\n65535\n".to_vec();
        bytes.extend_from_slice(&[0xff, 0xff, 0x80, 0x00]);
        let t = decode_pnm(&bytes, here()).unwrap();
        assert_eq!(t.data()[0], 1.0);
        assert!((t.data()[1] - 32768.0 / 65535.0).abs() < 1e-15);
    }

    #[test]
    fn pnm_errors() {
        assert!(decode_pnm(b"P3\n1 1\n255\n0", here()).is_err());
        assert!(decode_pnm(b"P5\n1 1\n0\n\x00", here()).is_err());
        assert!(decode_pnm(b"P5\n2 2\n255\n\x00\x01", here()).is_err());
        assert!(decode_pnm(b"P5\n2", here()).is_err());
    }

    #[test]
    fn agt_errors() {
        assert!(decode_agt(b"AGT2\x00\x01", here()).is_err());
        assert!(decode_agt(b"AGT1\x07\x01\x01\x00\x00\x00", here()).is_err());
        let mut ok = encode_agt(&Tensor::<f32>::full(Shape::vector(1, 3), 1.5));
        ok.truncate(ok.len() - 1);
        assert!(decode_agt(&ok, here()).is_err());
    }

    #[test]
    fn agt_lower_ranks() {
        let mut bytes = AGT_MAGIC.to_vec();
        bytes.extend_from_slice(&[1, 2, 2, 0, 0, 0, 1, 0, 0, 0]);
        bytes.extend_from_slice(&0.25f64.to_le_bytes());
        bytes.extend_from_slice(&0.75f64.to_le_bytes());
        let (t, used) = decode_agt(&bytes, here()).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(t.shape(), Shape::new(1, 2, 1, 1));
        assert_eq!(t.dtype(), DType::F64);
    }
}
