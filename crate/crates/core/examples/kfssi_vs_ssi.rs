//! Plain SSI against KF-SSI on a response with in-band harmonics.

use kfssi::harmonics::HarmonicSet;
use kfssi::identify::{kfssi_pipeline, ssi_pipeline, IdentifyConfig, OrderRange};
use kfssi::sim::{exact_modes, reference_excitation, simulate, ChainModel};

fn main() -> kfssi::Result<()> {
    let model = ChainModel::reference();
    let truth = exact_modes(&model)?;
    let exc = reference_excitation(2);
    let set: HarmonicSet = exc.harmonics.as_ref().map(|h| h.set.clone()).unwrap_or_else(HarmonicSet::empty);
    let ts = simulate(&model, &exc)?;

    let cfg = IdentifyConfig { orders: OrderRange { min: 2, max: 30, step: 2 }, ..Default::default() };
    let near_line = |f: f64, d: f64| d < 0.2 && set.freqs().iter().any(|h| (f - h).abs() < 0.02 * h);
    for (name, rows) in [("ssi", ssi_pipeline(&ts, &cfg)?), ("kf-ssi", kfssi_pipeline(&ts, &set, &cfg)?)] {
        let poles: Vec<_> = rows.iter().flat_map(|r| &r.modes).collect();
        let harmonic = poles.iter().filter(|m| near_line(m.frequency, m.damping_pct)).count();
        println!("{name:>7}: {} poles over orders 2..30, {harmonic} of them harmonic", poles.len());
        if let Some(r) = rows.iter().find(|r| r.order == 6) {
            let s: Vec<String> = r.modes.iter().map(|m| format!("{:.3} Hz/{:.2}%", m.frequency, m.damping_pct)).collect();
            println!("         order 6: {}", s.join(", "));
        }
    }
    let t: Vec<String> = truth.frequencies.iter().zip(&truth.damping_ratios).map(|(f, z)| format!("{f:.3} Hz/{:.2}%", 100.0 * z)).collect();
    println!("   exact: {}", t.join(", "));
    Ok(())
}
