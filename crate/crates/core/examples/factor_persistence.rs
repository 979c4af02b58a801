//! Save the accumulated `L` factor, reload it later and fold in a new
//! record without touching the old data.

use kfssi::harmonics::HarmonicSet;
use kfssi::identify::{concat, enhanced_factor, factor_for, pair_for, IdentifyConfig};
use kfssi::io::{read_factor, write_factor};
use kfssi::sim::{reference_excitation, simulate, ChainModel};

fn main() -> kfssi::Result<()> {
    let model = ChainModel::reference();
    let cfg = IdentifyConfig::default();
    let records = (0..3)
        .map(|s| {
            let exc = reference_excitation(200 + s);
            let set = exc.harmonics.as_ref().map_or_else(HarmonicSet::empty, |h| h.set.clone());
            Ok((simulate(&model, &exc)?, set))
        })
        .collect::<kfssi::Result<Vec<_>>>()?;

    let path = std::env::temp_dir().join("kfssi_factor.txt");
    write_factor(&path, &factor_for(&records[0].0, &records[0].1, &cfg)?)?;
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0));

    let mut factor = read_factor(&path)?;
    for (ts, set) in &records[1..] {
        factor = concat(&factor, &pair_for(ts, set, &cfg)?)?;
    }
    let direct = enhanced_factor(&records, &cfg)?;
    let diff = (factor.l() - direct.l()).amax() / direct.l().amax();
    println!("{} batches, {} samples; relative difference to one pass {diff:.1e}", factor.meta.batches, factor.meta.sample_count);
    Ok(())
}
