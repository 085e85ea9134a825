//! Permeability of a centered disk under mesh refinement, with Richardson
//! extrapolation assuming first-order convergence.
//!
//! ```text
//! cargo run --release --example convergence -- [radius] [regime...]
//! ```

use std::time::Instant;

use tpm_core::{build_geometry, permeability, ObstacleShape, Regime, SolverConfig};

fn main() -> tpm_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let radius: f64 = args.next().map(|r| r.parse().expect("radius")).unwrap_or(0.25);
    let mut regimes: Vec<Regime> = args.map(|r| r.parse()).collect::<tpm_core::Result<_>>()?;
    if regimes.is_empty() {
        regimes = Regime::ALL.to_vec();
    }
    for regime in regimes {
        let mut values = Vec::new();
        for n in sizes() {
            let t = Instant::now();
            let geom = build_geometry(ObstacleShape::disk(radius), n, 16)?;
            let k = permeability(regime, &geom, &SolverConfig::default())?;
            println!(
                "{regime} n={n:<4} k11={:.10} iterations={:?} ({:.1}s)",
                k.k[0][0],
                k.iterations,
                t.elapsed().as_secs_f64()
            );
            values.push(k.k[0][0]);
        }
        let rich = |a: f64, b: f64| 2.0 * b - a;
        println!(
            "{regime} extrapolated {:.8} (32/64) {:.8} (64/128), observed order {:.2}",
            rich(values[0], values[1]),
            rich(values[1], values[2]),
            ((values[1] - values[0]) / (values[2] - values[1])).abs().log2()
        );
    }
    Ok(())
}

/// Resolutions from `TPM_SIZES` (comma separated), default 32,64,128.
fn sizes() -> Vec<usize> {
    std::env::var("TPM_SIZES")
        .ok()
        .map(|s| s.split(',').map(|n| n.trim().parse().expect("TPM_SIZES")).collect())
        .unwrap_or_else(|| vec![32, 64, 128])
}
