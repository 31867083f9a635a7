//! Writes a small capture to the `.csib` container, reads it back and
//! exports the condensed amplitudes as CSV.

use csi2video::csi::{ComplexCfr, CsiDims, CsiSequence};
use csi2video::csi_io::{export_amplitude_csv, read_csib, write_csib, CSIB_HEADER_LEN};
use csi2video::sanitizer::{sanitize_sequence, HampelConfig};

fn main() -> csi2video::Result<()> {
    let dims = CsiDims { n_rx: 2, n_tx: 2, n_sub: 4 };
    let seq = CsiSequence::from_fn(dims, 6, |p, rx, tx, k| {
        ComplexCfr::new((p + k) as f64 - 3.0, (rx * 2 + tx) as f64).unwrap()
    })?
    .with_timestamps(Some((0..6).map(|p| 1_000 * p as u64).collect()))?;

    let bytes = write_csib(&seq)?;
    println!("{} bytes ({} header)", bytes.len(), CSIB_HEADER_LEN);
    let back = read_csib(&bytes)?;
    assert_eq!(back, seq);
    assert_eq!(write_csib(&back)?, bytes);

    let amps = sanitize_sequence(&back, &HampelConfig::new(3, 3.0)?)?;
    print!("{}", export_amplitude_csv(&amps));
    Ok(())
}
