//! Modified LSCE: the harmonic roots are fixed in the characteristic
//! polynomial and only the structural poles are fitted.

use kfssi::harmonics::HarmonicSet;
use kfssi::lsce::{correlations, harmonic_polynomial, modified_lsce};
use kfssi::sim::{exact_modes, reference_excitation, simulate, ChainModel};

fn main() -> kfssi::Result<()> {
    let model = ChainModel::reference();
    let exc = reference_excitation(5);
    let set = exc.harmonics.as_ref().map_or_else(HarmonicSet::empty, |h| h.set.clone());
    let ts = simulate(&model, &exc)?.accelerations()?;

    let corr = correlations(&ts, 250, 2)?;
    let m = harmonic_polynomial(&set, ts.dt()).len() - 1;
    println!("{} harmonic lines fix {m} roots", set.len());
    for free in [6, 10, 16] {
        let r = modified_lsce(&corr, &set, m + free)?;
        let s: Vec<String> = r.modes.iter().filter(|m| m.damping_pct > 0.0 && m.damping_pct < 20.0).map(|m| format!("{:.3}/{:.2}%", m.frequency, m.damping_pct)).collect();
        println!("free order {free:>2} (cond {:.1e}): {}", r.condition, s.join(" "));
    }
    let truth = exact_modes(&model)?;
    println!("exact: {:?}", truth.frequencies.iter().map(|f| format!("{f:.3}")).collect::<Vec<_>>());
    Ok(())
}
