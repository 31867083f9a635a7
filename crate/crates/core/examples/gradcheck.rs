//! Runs the finite-difference gradient suite over every differentiable
//! primitive, loss and model objective.

use csi2video::verify::{format_report, gradient_suite};

fn main() -> csi2video::Result<()> {
    let seeds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let checks = gradient_suite(seeds, false)?;
    print!("{}", format_report(&checks, seeds));
    Ok(())
}
