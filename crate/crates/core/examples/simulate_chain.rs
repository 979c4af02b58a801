//! Simulate the reference three-mass chain and compare its spectrum with
//! the exact modes.

use kfssi::signal::welch_psd;
use kfssi::sim::{exact_modes, reference_excitation, simulate, ChainModel};

fn main() -> kfssi::Result<()> {
    let model = ChainModel::reference();
    let truth = exact_modes(&model)?;
    let ts = simulate(&model, &reference_excitation(1))?;
    println!("{} samples at {} Hz, channels {:?}", ts.len(), ts.rate(), ts.channels().iter().map(|c| &c.name).collect::<Vec<_>>());

    let spec = welch_psd(&ts.accelerations()?, 1024, 0.5)?;
    println!("{:>8} {:>8} {:>10}", "f (Hz)", "zeta %", "PSD peak");
    for (f, z) in truth.frequencies.iter().zip(&truth.damping_ratios) {
        let peak = spec.peak_frequency(2, f - 0.4, f + 0.4);
        println!("{f:8.3} {:8.2} {peak:10.3}", 100.0 * z);
    }
    Ok(())
}
