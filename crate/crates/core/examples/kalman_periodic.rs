//! Reconstruct the periodic part of a response with the square-root
//! Kalman filter and subtract it.

use kfssi::kalman::{estimate_periodic, tuned_bank, KalmanTuning};
use kfssi::sim::{reference_excitation, reference_harmonics, simulate, ChainModel, ExcitationSpec};

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn main() -> kfssi::Result<()> {
    let model = ChainModel::reference();
    let exc = reference_excitation(7);
    let noisy = simulate(&model, &exc)?.accelerations()?;
    // the same noise without the harmonic forcing
    let clean = simulate(&model, &ExcitationSpec { harmonics: None, ..exc.clone() })?.accelerations()?;

    let bank = tuned_bank(&reference_harmonics(), &noisy, &KalmanTuning::default())?;
    let periodic = estimate_periodic(&bank, &noisy)?;

    let burn = noisy.len() / 10;
    println!("{:>4} {:>10} {:>12} {:>12}", "ch", "raw rms", "periodic rms", "residual err");
    for ((raw, per), truth) in noisy.channels().iter().zip(periodic.channels()).zip(clean.channels()) {
        let err: Vec<f64> = (burn..raw.data.len())
            .map(|k| raw.data[k] - per.data[k] - truth.data[k])
            .collect();
        println!("{:>4} {:10.4} {:12.4} {:12.4}", raw.name, rms(&raw.data[burn..]), rms(&per.data[burn..]), rms(&err));
    }
    Ok(())
}
