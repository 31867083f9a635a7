//! Binary PGM (`P5`) and PPM (`P6`) frames, 8 bits per sample.
//!
//! Pixel values in `[-1, 1]` map to bytes with `round((v + 1) / 2 · 255)`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub fn to_byte(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 0.5 * 255.0).round() as u8
}

pub fn from_byte(b: u8) -> f64 {
    b as f64 / 255.0 * 2.0 - 1.0
}

/// A decoded frame: `channels` is 1 for PGM, 3 for PPM; `data` is planar
/// `C × H × W` in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

/// Encodes a planar `C × H × W` frame (`C` of 1 or 3).
pub fn encode(channels: usize, height: usize, width: usize, planar: &[f64]) -> Result<Vec<u8>> {
    let plane = height * width;
    if planar.len() != channels * plane {
        return Err(Error::ShapeMismatch(format!(
            "frame {channels}x{height}x{width} needs {} values, got {}",
            channels * plane,
            planar.len()
        )));
    }
    let magic = match channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::ShapeMismatch(format!("unsupported channel count {c}"))),
    };
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.reserve(planar.len());
    for i in 0..plane {
        for c in 0..channels {
            out.push(to_byte(planar[c * plane + i]));
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Frame> {
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated netpbm header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let channels = match tokens[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        m => return Err(Error::Parse(format!("unsupported netpbm magic {m:?}"))),
    };
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Parse(format!("bad netpbm number {s:?}")))
    };
    let width = num(&tokens[1])?;
    let height = num(&tokens[2])?;
    if num(&tokens[3])? != 255 {
        return Err(Error::Parse("only 8-bit netpbm files are supported".into()));
    }
    let plane = width * height;
    let need = pos + plane * channels;
    if bytes.len() < need {
        return Err(Error::TruncatedPayload {
            expected: need,
            actual: bytes.len(),
        });
    }
    let raster = &bytes[pos..need];
    let mut data = vec![0.0; plane * channels];
    for i in 0..plane {
        for c in 0..channels {
            data[c * plane + i] = from_byte(raster[i * channels + c]);
        }
    }
    Ok(Frame {
        channels,
        height,
        width,
        data,
    })
}

pub fn write_frame(path: impl AsRef<Path>, channels: usize, height: usize, width: usize, planar: &[f64]) -> Result<()> {
    fs::write(path, encode(channels, height, width, planar)?)?;
    Ok(())
}

pub fn read_frame(path: impl AsRef<Path>) -> Result<Frame> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_mapping() {
        assert_eq!(to_byte(-1.0), 0);
        assert_eq!(to_byte(1.0), 255);
        assert_eq!(to_byte(0.0), 128);
        assert_eq!(from_byte(0), -1.0);
        assert_eq!(from_byte(255), 1.0);
        for b in 0..=255u8 {
            assert_eq!(to_byte(from_byte(b)), b);
        }
    }

    #[test]
    fn pgm_golden() {
        let bytes = encode(1, 1, 2, &[-1.0, 1.0]).unwrap();
        assert_eq!(bytes, b"P5\n2 1\n255\n\x00\xff".to_vec());
        let f = decode(&bytes).unwrap();
        assert_eq!((f.channels, f.height, f.width), (1, 1, 2));
        assert_eq!(f.data, vec![-1.0, 1.0]);
    }

    #[test]
    fn ppm_interleaves_channels() {
        // planar R=[1,-1], G=[-1,-1], B=[-1,1]
        let planar = [1.0, -1.0, -1.0, -1.0, -1.0, 1.0];
        let bytes = encode(3, 1, 2, &planar).unwrap();
        assert_eq!(&bytes[bytes.len() - 6..], &[255, 0, 0, 0, 0, 255]);
        assert_eq!(decode(&bytes).unwrap().data, planar.to_vec());
    }

    #[test]
    fn header_comments_and_errors() {
        let f = decode(b"P5\n# made by hand\n1 1\n255\n\x80").unwrap();
        assert_eq!(f.data.len(), 1);
        assert!(decode(b"P2\n1 1\n255\n0").is_err());
        assert!(decode(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }
}
