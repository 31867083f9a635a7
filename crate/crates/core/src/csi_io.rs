//! The `.csib` CSI container and CSV export of amplitude matrices.
//!
//! Layout (all multi-byte integers little-endian):
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `"CSIB"`                          |
//! | 4      | 2    | version, always 1                      |
//! | 6      | 1    | receive antennas Θ                     |
//! | 7      | 1    | transmit antennas Γ                    |
//! | 8      | 1    | subcarriers K                          |
//! | 9      | 4    | packets P                              |
//! | 13     | 2    | flags, bit 0 = timestamps present      |
//! | 15     | 8·P  | optional u64 millisecond timestamps    |
//! | …      | 2·PΘΓK | `(re, im)` as `i8` pairs, packet-major, then θ, γ, κ |

use std::fs;
use std::path::Path;

use crate::csi::{ComplexCfr, CsiDims, CsiSequence};
use crate::error::{Error, Result};
use crate::sanitizer::AmplitudeMatrix;

pub const CSIB_MAGIC: [u8; 4] = *b"CSIB";
pub const CSIB_VERSION: u16 = 1;
pub const CSIB_HEADER_LEN: usize = 15;
pub const FLAG_TIMESTAMPS: u16 = 1;

/// Decoded fixed-size `.csib` header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsibHeader {
    pub magic: [u8; 4],
    pub version: u16,
    pub n_rx: u8,
    pub n_tx: u8,
    pub n_sub: u8,
    pub n_pkt: u32,
    pub flags: u16,
}

impl CsibHeader {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.push(self.n_rx);
        out.push(self.n_tx);
        out.push(self.n_sub);
        out.extend_from_slice(&self.n_pkt.to_le_bytes());
        out.extend_from_slice(&self.flags.to_le_bytes());
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < CSIB_HEADER_LEN {
            return Err(Error::TruncatedPayload {
                expected: CSIB_HEADER_LEN,
                actual: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != CSIB_MAGIC {
            return Err(Error::BadMagic {
                expected: CSIB_MAGIC,
                found: magic,
            });
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CSIB_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        Ok(Self {
            magic,
            version,
            n_rx: bytes[6],
            n_tx: bytes[7],
            n_sub: bytes[8],
            n_pkt: u32::from_le_bytes(bytes[9..13].try_into().unwrap()),
            flags: u16::from_le_bytes([bytes[13], bytes[14]]),
        })
    }

    pub fn has_timestamps(&self) -> bool {
        self.flags & FLAG_TIMESTAMPS != 0
    }

    /// Total file length implied by the header.
    pub fn file_len(&self) -> usize {
        let p = self.n_pkt as usize;
        let cells = p * self.n_rx as usize * self.n_tx as usize * self.n_sub as usize;
        let ts = if self.has_timestamps() { 8 * p } else { 0 };
        CSIB_HEADER_LEN + ts + 2 * cells
    }
}

fn to_i8(v: f64) -> Result<i8> {
    let r = v.round();
    if !(-128.0..=127.0).contains(&r) {
        return Err(Error::RangeOverflow(v));
    }
    Ok(r as i8)
}

fn count_u8(n: usize, what: &str) -> Result<u8> {
    u8::try_from(n).map_err(|_| Error::InvalidSequence(format!("{what} = {n} exceeds 255")))
}

/// Serializes a sequence. CFR components are rounded to the nearest integer.
pub fn write_csib(seq: &CsiSequence) -> Result<Vec<u8>> {
    let d = seq.dims();
    let header = CsibHeader {
        magic: CSIB_MAGIC,
        version: CSIB_VERSION,
        n_rx: count_u8(d.n_rx, "n_rx")?,
        n_tx: count_u8(d.n_tx, "n_tx")?,
        n_sub: count_u8(d.n_sub, "n_sub")?,
        n_pkt: u32::try_from(seq.n_pkt())
            .map_err(|_| Error::InvalidSequence("too many packets".into()))?,
        flags: if seq.timestamps().is_some() {
            FLAG_TIMESTAMPS
        } else {
            0
        },
    };
    let mut out = Vec::with_capacity(header.file_len());
    header.encode(&mut out);
    if let Some(ts) = seq.timestamps() {
        for t in ts {
            out.extend_from_slice(&t.to_le_bytes());
        }
    }
    for v in seq.values() {
        out.push(to_i8(v.re)? as u8);
        out.push(to_i8(v.im)? as u8);
    }
    Ok(out)
}

pub fn read_csib(bytes: &[u8]) -> Result<CsiSequence> {
    let header = CsibHeader::decode(bytes)?;
    if header.n_rx == 0 || header.n_tx == 0 || header.n_sub == 0 || header.n_pkt == 0 {
        return Err(Error::Parse("csib header counts must be >= 1".into()));
    }
    let expected = header.file_len();
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Parse(format!(
            "{} trailing bytes after csib payload",
            bytes.len() - expected
        )));
    }
    let p = header.n_pkt as usize;
    let mut cursor = CSIB_HEADER_LEN;
    let timestamps = if header.has_timestamps() {
        let ts = bytes[cursor..cursor + 8 * p]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect::<Vec<_>>();
        cursor += 8 * p;
        Some(ts)
    } else {
        None
    };
    let values = bytes[cursor..]
        .chunks_exact(2)
        .map(|c| ComplexCfr {
            re: c[0] as i8 as f64,
            im: c[1] as i8 as f64,
        })
        .collect();
    let dims = CsiDims {
        n_rx: header.n_rx as usize,
        n_tx: header.n_tx as usize,
        n_sub: header.n_sub as usize,
    };
    CsiSequence::new(dims, p, values, timestamps)
}

pub fn save_csib(path: impl AsRef<Path>, seq: &CsiSequence) -> Result<()> {
    fs::write(path, write_csib(seq)?)?;
    Ok(())
}

pub fn load_csib(path: impl AsRef<Path>) -> Result<CsiSequence> {
    read_csib(&fs::read(path)?)
}

/// `P` data rows under a `k0,...,k{K-1}` header, six fractional digits.
pub fn export_amplitude_csv(a: &AmplitudeMatrix) -> String {
    let (p, k) = a.shape();
    let mut out = String::with_capacity((p + 1) * k * 12);
    let header: Vec<String> = (0..k).map(|i| format!("k{i}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in a.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_amplitude_csv(text: &str) -> Result<AmplitudeMatrix> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty amplitude csv".into()))?;
    let k = header.split(',').count();
    for (i, name) in header.split(',').enumerate() {
        if name.trim() != format!("k{i}") {
            return Err(Error::Parse(format!("unexpected column name {name:?}")));
        }
    }
    let mut data = Vec::new();
    let mut p = 0;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for cell in line.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Parse(format!("line {}: bad number {cell:?}", lineno + 2))
            })?;
            data.push(v);
        }
        if data.len() - before != k {
            return Err(Error::Parse(format!(
                "line {}: expected {k} columns",
                lineno + 2
            )));
        }
        p += 1;
    }
    AmplitudeMatrix::new(p, k, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_seq(ts: Option<Vec<u64>>, p: usize) -> CsiSequence {
        let dims = CsiDims { n_rx: 1, n_tx: 1, n_sub: 1 };
        let values = (0..p)
            .map(|i| ComplexCfr { re: 3.0 + i as f64, im: 4.0 })
            .collect();
        CsiSequence::new(dims, p, values, ts).unwrap()
    }

    #[test]
    fn golden_single_cell() {
        let bytes = write_csib(&unit_seq(None, 1)).unwrap();
        assert_eq!(
            bytes,
            vec![
                b'C', b'S', b'I', b'B', // magic
                0x01, 0x00, // version
                0x01, 0x01, 0x01, // rx, tx, sub
                0x01, 0x00, 0x00, 0x00, // packets
                0x00, 0x00, // flags
                0x03, 0x04, // (re, im)
            ]
        );
    }

    #[test]
    fn timestamps_precede_payload() {
        let seq = unit_seq(Some(vec![10, 0x0102]), 2);
        let bytes = write_csib(&seq).unwrap();
        assert_eq!(bytes.len(), CSIB_HEADER_LEN + 16 + 4);
        assert_eq!(&bytes[13..15], &[0x01, 0x00]);
        assert_eq!(&bytes[15..23], &10u64.to_le_bytes());
        assert_eq!(&bytes[23..31], &0x0102u64.to_le_bytes());
        assert_eq!(&bytes[31..], &[3, 4, 4, 4]);
        assert_eq!(read_csib(&bytes).unwrap(), seq);
    }

    #[test]
    fn negative_components_use_twos_complement() {
        let dims = CsiDims { n_rx: 1, n_tx: 1, n_sub: 2 };
        let seq = CsiSequence::new(
            dims,
            1,
            vec![
                ComplexCfr { re: -1.0, im: -128.0 },
                ComplexCfr { re: 127.0, im: 0.4 },
            ],
            None,
        )
        .unwrap();
        let bytes = write_csib(&seq).unwrap();
        assert_eq!(&bytes[CSIB_HEADER_LEN..], &[0xff, 0x80, 0x7f, 0x00]);
    }

    #[test]
    fn range_overflow() {
        let dims = CsiDims { n_rx: 1, n_tx: 1, n_sub: 1 };
        for bad in [127.6, -128.6, 300.0] {
            let seq =
                CsiSequence::new(dims, 1, vec![ComplexCfr { re: bad, im: 0.0 }], None).unwrap();
            assert!(matches!(write_csib(&seq), Err(Error::RangeOverflow(_))));
        }
    }

    #[test]
    fn bad_magic() {
        let mut bytes = write_csib(&unit_seq(None, 1)).unwrap();
        bytes[0] = b'X';
        assert!(matches!(read_csib(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn unsupported_version() {
        let mut bytes = write_csib(&unit_seq(None, 1)).unwrap();
        bytes[4] = 2;
        assert!(matches!(read_csib(&bytes), Err(Error::UnsupportedVersion(2))));
    }

    #[test]
    fn truncated_payload() {
        let seq = unit_seq(None, 10);
        let bytes = write_csib(&seq).unwrap();
        let cut = &bytes[..CSIB_HEADER_LEN + 2 * 5];
        assert!(matches!(
            read_csib(cut),
            Err(Error::TruncatedPayload { expected: 35, actual: 25 })
        ));
        assert!(matches!(
            read_csib(&bytes[..7]),
            Err(Error::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = write_csib(&unit_seq(None, 1)).unwrap();
        bytes.push(0);
        assert!(matches!(read_csib(&bytes), Err(Error::Parse(_))));
    }

    #[test]
    fn csv_examples() {
        let a = AmplitudeMatrix::new(1, 1, vec![5.0]).unwrap();
        assert_eq!(export_amplitude_csv(&a), "k0\n5.000000\n");
        let b = AmplitudeMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.25]).unwrap();
        let text = export_amplitude_csv(&b);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text, "k0,k1\n1.000000,2.000000\n3.000000,4.250000\n");
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        assert!(parse_amplitude_csv("k0,k1\n1,2\n3\n").is_err());
        assert!(parse_amplitude_csv("a,b\n1,2\n").is_err());
    }
}
