//! Locate harmonic lines, once from the rotor speed and once blind from
//! the kurtosis and entropy of narrow bands.

use kfssi::harmonics::{classify, entropy_sweep, kurtosis_candidates, kurtosis_sweep, rotor_harmonics, ClassifyThresholds, SpeedUnit, SweepParams};
use kfssi::sim::{reference_excitation, reference_harmonics, simulate, ChainModel, REFERENCE_HARMONIC_AMPLITUDE};

fn main() -> kfssi::Result<()> {
    let mut exc = reference_excitation(3);
    if let Some(h) = exc.harmonics.as_mut() {
        // stronger lines than the default make the blind search easy to read
        h.amplitudes = vec![10.0 * REFERENCE_HARMONIC_AMPLITUDE; h.amplitudes.len()];
    }
    let ts = simulate(&ChainModel::reference(), &exc)?;

    let rpm = &ts.channel("rotor_rpm").expect("simulated rotor").data;
    let from_rotor = rotor_harmonics(rpm, SpeedUnit::Rpm, &reference_harmonics().multipliers, None)?;
    println!("rotor: 1P = {:.3} Hz, speed cv = {:.1e}", from_rotor.set.base_freq, from_rotor.speed_cv);

    let params = SweepParams { bandwidth: 0.5, ..SweepParams::default() };
    let grid = params.default_grid(ts.rate());
    let kurt = kurtosis_sweep(&ts, &grid, &params)?;
    let ent = entropy_sweep(&ts, &grid, &params)?;
    let t = ClassifyThresholds::default();
    println!("kurtosis candidates: {:?}", kurtosis_candidates(&kurt, t).iter().map(|f| format!("{f:.2}")).collect::<Vec<_>>());

    println!("{:>5} {:>7} {:>9} {:>14} {:>14}", "line", "f (Hz)", "kurtosis", "verdict", "entropy");
    let kv = classify(&kurt, &from_rotor.set, t);
    let ev = classify(&ent, &from_rotor.set, t);
    for (k, e) in kv.iter().zip(&ev) {
        let fmt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.2}"));
        println!("{:>5} {:7.2} {:>9} {:>14} {:>8} {:?}", k.label, k.freq, fmt(k.value), format!("{:?}", k.verdict), fmt(e.value), e.verdict);
    }
    Ok(())
}
