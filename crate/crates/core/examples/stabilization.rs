//! Build a stabilization diagram and interpret it automatically.

use kfssi::harmonics::HarmonicSet;
use kfssi::identify::{factor_for, IdentifyConfig};
use kfssi::sim::{reference_excitation, simulate, ChainModel};
use kfssi::stabilize::{interpret_factor, InterpretParams, StabilityTolerances};

fn main() -> kfssi::Result<()> {
    let exc = reference_excitation(4);
    let set = exc.harmonics.as_ref().map_or_else(HarmonicSet::empty, |h| h.set.clone());
    let ts = simulate(&ChainModel::reference(), &exc)?;
    let cfg = IdentifyConfig::default();
    let factor = factor_for(&ts, &set, &cfg)?;

    let (diag, interp) = interpret_factor(&factor, &cfg.orders.orders()?, StabilityTolerances::default(), &InterpretParams::default())?;
    for order in &diag.orders {
        let row: String = diag
            .entries
            .iter()
            .zip(&diag.stable_flags)
            .filter(|(e, _)| e.order == *order)
            .map(|(e, s)| format!(" {:6.3}{}", e.frequency, if *s == Some(true) { '*' } else { ' ' }))
            .collect();
        println!("n={order:>2}:{row}");
    }
    println!("selected order {}; clusters {:?} with counts {:?}", interp.selected_order, interp.unique_freqs.iter().map(|f| format!("{f:.3}")).collect::<Vec<_>>(), interp.occurrence_counts);
    for m in &interp.modes {
        println!("  {:.4} Hz  {:.3} %", m.frequency, m.damping_pct);
    }
    Ok(())
}
