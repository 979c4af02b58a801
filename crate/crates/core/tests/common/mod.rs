#![allow(dead_code)]

use kfssi::harmonics::HarmonicSet;
use kfssi::identify::ModalEstimate;
use kfssi::sim::{reference_excitation, ExcitationSpec, HarmonicForcing, ModalTruth};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Three harmonics inside the structural band: 1.8, 4.5 and 7.2 Hz.
pub fn three_harmonics() -> HarmonicSet {
    HarmonicSet::new(0.3, vec![6.0, 15.0, 24.0]).unwrap()
}

/// White noise plus the three in-band harmonics on the top mass.
pub fn three_harmonic_excitation(seed: u64, amplitude: f64) -> ExcitationSpec {
    let mut exc = reference_excitation(seed);
    exc.harmonics = Some(HarmonicForcing {
        set: three_harmonics(),
        amplitudes: vec![amplitude; 3],
        phases: vec![0.0, 1.1, 2.3],
        dof: 2,
    });
    exc
}

pub fn white_noise_excitation(seed: u64) -> ExcitationSpec {
    ExcitationSpec {
        harmonics: None,
        ..reference_excitation(seed)
    }
}

pub fn nearest(modes: &[ModalEstimate], f: f64) -> Option<&ModalEstimate> {
    modes
        .iter()
        .min_by(|a, b| (a.frequency - f).abs().total_cmp(&(b.frequency - f).abs()))
}

pub fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Every true mode has an estimate within `tol_f` relative frequency and
/// `tol_z` relative damping ratio.
pub fn matches_truth(modes: &[ModalEstimate], truth: &ModalTruth, tol_f: f64, tol_z: f64) -> bool {
    truth
        .frequencies
        .iter()
        .zip(&truth.damping_ratios)
        .all(|(f, z)| match nearest(modes, *f) {
            Some(m) => rel(m.frequency, *f) < tol_f && rel(m.damping_ratio(), *z) < tol_z,
            None => false,
        })
}

/// Near-undamped pole at a harmonic: ζ < 0.2 % within 2 % of a line.
pub fn is_harmonic_pole(m: &ModalEstimate, set: &HarmonicSet) -> bool {
    m.damping_pct < 0.2 && set.freqs().iter().any(|h| rel(m.frequency, *h) < 0.02)
}

pub fn est(order: usize, f: f64, d: f64) -> ModalEstimate {
    ModalEstimate {
        frequency: f,
        damping_pct: d,
        order,
        pole_re: 0.0,
        pole_im: 0.0,
        unstable: false,
        channel_energy: None,
    }
}
