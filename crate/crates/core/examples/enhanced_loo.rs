//! Enhanced KF-SSI over several records, with leave-one-out spread.

use kfssi::harmonics::HarmonicSet;
use kfssi::identify::{factor_for, IdentifyConfig};
use kfssi::sim::{reference_excitation, simulate, ChainModel};
use kfssi::stabilize::{interpret_factor, leave_one_out_factors, loo_aggregate, InterpretParams, StabilityTolerances};

fn main() -> kfssi::Result<()> {
    let model = ChainModel::reference();
    let cfg = IdentifyConfig::default();
    let orders = cfg.orders.orders()?;
    let factors = (0..6)
        .map(|seed| {
            let exc = reference_excitation(100 + seed);
            let set = exc.harmonics.as_ref().map_or_else(HarmonicSet::empty, |h| h.set.clone());
            factor_for(&simulate(&model, &exc)?, &set, &cfg)
        })
        .collect::<kfssi::Result<Vec<_>>>()?;

    let stab = StabilityTolerances::default();
    let params = InterpretParams::default();
    let single = factors
        .iter()
        .map(|f| interpret_factor(f, &orders, stab, &params).map(|r| r.1))
        .collect::<kfssi::Result<Vec<_>>>()?;
    let loo = leave_one_out_factors(&factors)?
        .iter()
        .map(|f| interpret_factor(f, &orders, stab, &params).map(|r| r.1))
        .collect::<kfssi::Result<Vec<_>>>()?;

    for (name, runs) in [("per record", single), ("leave-one-out", loo)] {
        println!("{name}:");
        for m in loo_aggregate(&runs)?.modes {
            let (f, d) = (m.frequency, m.damping_pct);
            println!("  mode {}: f {:.4} [{:.4}, {:.4}]  zeta {:.3} [{:.3}, {:.3}] %", m.mode, f.median, f.q1, f.q3, d.median, d.q1, d.q3);
        }
    }
    Ok(())
}
