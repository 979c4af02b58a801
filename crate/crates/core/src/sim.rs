//! Lumped mass-spring-damper chain driven by white noise and rotor harmonics.
//!
//! Mass 0 is tied to ground through spring/damper 0; mass `i` is tied to
//! mass `i-1` through spring/damper `i`. The continuous model
//! `M q̈ + C q̇ + K q = f` is written in first-order companion form and
//! discretized with an exact zero-order hold, so the discrete poles are
//! `exp(λ·Δt)` of the continuous ones. Outputs are accelerations.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::HarmonicSet;
use crate::signal::{Channel, ChannelRole, MultiChannelTimeSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainModel {
    pub masses: Vec<f64>,
    pub stiffnesses: Vec<f64>,
    pub dampings: Vec<f64>,
}

impl ChainModel {
    pub fn new(masses: Vec<f64>, stiffnesses: Vec<f64>, dampings: Vec<f64>) -> Result<Self> {
        let m = ChainModel {
            masses,
            stiffnesses,
            dampings,
        };
        m.validate()?;
        Ok(m)
    }

    /// Three equal masses with modes near 2.24, 6.28 and 9.07 Hz and
    /// damping ratios of roughly 1.4 %, 3.9 % and 5.7 %.
    pub fn reference() -> Self {
        ChainModel {
            masses: vec![1.0; 3],
            stiffnesses: vec![1000.0; 3],
            dampings: vec![2.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.masses.len();
        if n == 0 {
            return Err(Error::invalid("chain needs at least one mass"));
        }
        if self.stiffnesses.len() != n || self.dampings.len() != n {
            return Err(Error::invalid(format!(
                "chain lengths differ: {} masses, {} springs, {} dampers",
                n,
                self.stiffnesses.len(),
                self.dampings.len()
            )));
        }
        if self.masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::invalid("masses must be positive"));
        }
        if self.stiffnesses.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(Error::invalid("stiffnesses must be positive"));
        }
        if self.dampings.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::invalid("dampings must be non-negative"));
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.masses.len()
    }

    fn chain_matrix(values: &[f64]) -> DMatrix<f64> {
        let n = values.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] += values[i];
            if i > 0 {
                m[(i - 1, i - 1)] += values[i];
                m[(i, i - 1)] -= values[i];
                m[(i - 1, i)] -= values[i];
            }
        }
        m
    }

    pub fn stiffness_matrix(&self) -> DMatrix<f64> {
        Self::chain_matrix(&self.stiffnesses)
    }

    pub fn damping_matrix(&self) -> DMatrix<f64> {
        Self::chain_matrix(&self.dampings)
    }

    fn inv_mass(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.dof(),
            self.masses.iter().map(|m| 1.0 / m),
        ))
    }

    /// Continuous state matrix and force input matrix for state `[q; q̇]`.
    pub fn companion(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.dof();
        let minv = self.inv_mass();
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        a.view_mut((0, n), (n, n)).fill_with_identity();
        a.view_mut((n, 0), (n, n)).copy_from(&(-&minv * self.stiffness_matrix()));
        a.view_mut((n, n), (n, n)).copy_from(&(-&minv * self.damping_matrix()));
        let mut b = DMatrix::zeros(2 * n, n);
        b.view_mut((n, 0), (n, n)).copy_from(&minv);
        (a, b)
    }

    /// Acceleration output `q̈ = C x + D f`.
    pub fn acceleration_output(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let (a, b) = self.companion();
        let n = self.dof();
        (a.rows(n, n).clone_owned(), b.rows(n, n).clone_owned())
    }

    /// Exact zero-order-hold discretization at step `dt`.
    pub fn discretize(&self, dt: f64) -> DiscreteChain {
        let (a, b) = self.companion();
        let (ns, ni) = b.shape();
        let mut aug = DMatrix::zeros(ns + ni, ns + ni);
        aug.view_mut((0, 0), (ns, ns)).copy_from(&(a * dt));
        aug.view_mut((0, ns), (ns, ni)).copy_from(&(b * dt));
        let e = aug.exp();
        let (c, d) = self.acceleration_output();
        DiscreteChain {
            a: e.view((0, 0), (ns, ns)).clone_owned(),
            b: e.view((0, ns), (ns, ni)).clone_owned(),
            c,
            d,
            dt,
        }
    }
}

/// Discrete-time chain: `x⁺ = A x + B f`, `y = C x + D f`.
#[derive(Debug, Clone)]
pub struct DiscreteChain {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub dt: f64,
}

/// Exact modal parameters of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalTruth {
    pub frequencies: Vec<f64>,
    pub damping_ratios: Vec<f64>,
    pub mode_count: usize,
    /// Modes with a real eigenvalue pair (ζ ≥ 1), excluded from the lists.
    #[serde(default)]
    pub overdamped: usize,
}

/// Solve the quadratic eigenvalue problem through the companion matrix.
pub fn exact_modes(model: &ChainModel) -> Result<ModalTruth> {
    model.validate()?;
    let (a, _) = model.companion();
    let eig = a.complex_eigenvalues();
    let scale = eig.iter().map(|l| l.norm()).fold(0.0, f64::max).max(1.0);
    let mut modes = Vec::new();
    let mut real = 0usize;
    for l in eig.iter() {
        if l.im.abs() <= 1e-10 * scale {
            real += 1;
        } else if l.im > 0.0 {
            let w = l.norm();
            modes.push((w / (2.0 * PI), -l.re / w));
        }
    }
    modes.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(ModalTruth {
        frequencies: modes.iter().map(|m| m.0).collect(),
        damping_ratios: modes.iter().map(|m| m.1).collect(),
        mode_count: modes.len(),
        overdamped: real / 2,
    })
}

/// Sinusoidal forcing at the harmonic lines of a rotor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicForcing {
    pub set: HarmonicSet,
    /// Force amplitude per harmonic (N).
    pub amplitudes: Vec<f64>,
    /// Phase per harmonic (rad); zeros when empty.
    #[serde(default)]
    pub phases: Vec<f64>,
    /// Index of the mass the forcing acts on.
    pub dof: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSpec {
    /// Standard deviation of the white force on every mass (N).
    pub noise_std: f64,
    #[serde(default)]
    pub harmonics: Option<HarmonicForcing>,
    /// Linear drift of the 1P frequency (Hz/s).
    #[serde(default)]
    pub drift_rate: f64,
    pub duration: f64,
    pub rate: f64,
    pub seed: u64,
    /// Initial displacement of every mass (m); rest when absent.
    #[serde(default)]
    pub initial_displacement: Option<Vec<f64>>,
}

impl ExcitationSpec {
    pub fn sample_count(&self) -> Result<usize> {
        let raw = self.duration * self.rate;
        let n = raw.round();
        if !(self.duration > 0.0 && self.rate > 0.0) || (raw - n).abs() > 1e-6 || n < 2.0 {
            return Err(Error::invalid(format!(
                "duration {} s at {} Hz must give an integer count of at least 2 samples",
                self.duration, self.rate
            )));
        }
        Ok(n as usize)
    }

    fn max_base_freq(&self, base: f64) -> f64 {
        base + (self.drift_rate * self.duration).max(0.0)
    }

    pub fn validate(&self, model: &ChainModel) -> Result<()> {
        self.sample_count()?;
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::invalid("noise_std must be non-negative"));
        }
        if let Some(h) = &self.harmonics {
            let freqs = h.set.freqs();
            if h.amplitudes.len() != freqs.len() {
                return Err(Error::invalid("one amplitude per harmonic is required"));
            }
            if !h.phases.is_empty() && h.phases.len() != freqs.len() {
                return Err(Error::invalid("one phase per harmonic is required"));
            }
            if h.dof >= model.dof() {
                return Err(Error::invalid(format!("harmonic forcing dof {} out of range", h.dof)));
            }
            let top = h.set.multipliers.iter().cloned().fold(0.0, f64::max)
                * self.max_base_freq(h.set.base_freq);
            if top >= 0.5 * self.rate {
                return Err(Error::Nyquist {
                    freq: top,
                    nyquist: 0.5 * self.rate,
                });
            }
        }
        if let Some(q0) = &self.initial_displacement {
            if q0.len() != model.dof() {
                return Err(Error::invalid("initial displacement needs one value per mass"));
            }
        }
        Ok(())
    }
}

/// Rotor at 18 rpm (0.3 Hz) with lines at 1P, 3P, 6P, 9P, 12P, 15P, 18P,
/// 24P, 27P and 36P.
pub fn reference_harmonics() -> HarmonicSet {
    HarmonicSet::new(0.3, vec![1.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 24.0, 27.0, 36.0])
        .expect("valid reference harmonics")
}

/// Ten minutes at 25 Hz of unit white forcing on every mass, with the
/// reference harmonics driving the top mass.
pub fn reference_excitation(seed: u64) -> ExcitationSpec {
    let set = reference_harmonics();
    let k = set.len();
    ExcitationSpec {
        noise_std: 1.0,
        harmonics: Some(HarmonicForcing {
            set,
            amplitudes: vec![REFERENCE_HARMONIC_AMPLITUDE; k],
            phases: (0..k).map(|i| 0.7 * i as f64).collect(),
            dof: 2,
        }),
        drift_rate: 0.0,
        duration: 600.0,
        rate: 25.0,
        seed,
        initial_displacement: None,
    }
}

/// Force amplitude of every reference harmonic (N).
pub const REFERENCE_HARMONIC_AMPLITUDE: f64 = 2.0;

/// Simulated accelerations `a1..aN` plus the rotor speed `rotor_rpm`
/// (zero when no harmonic forcing is configured).
pub fn simulate(model: &ChainModel, exc: &ExcitationSpec) -> Result<MultiChannelTimeSeries> {
    model.validate()?;
    exc.validate(model)?;
    let n = exc.sample_count()?;
    let dof = model.dof();
    let dt = 1.0 / exc.rate;
    let sys = model.discretize(dt);

    let mut rng = ChaCha8Rng::seed_from_u64(exc.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut x = DVector::zeros(2 * dof);
    if let Some(q0) = &exc.initial_displacement {
        for (i, v) in q0.iter().enumerate() {
            x[i] = *v;
        }
    }
    let mut f = DVector::zeros(dof);
    let mut out = vec![Vec::with_capacity(n); dof];
    let mut rotor = Vec::with_capacity(n);
    let (freqs, base) = match &exc.harmonics {
        Some(h) => (h.set.multipliers.clone(), h.set.base_freq),
        None => (Vec::new(), 0.0),
    };

    for k in 0..n {
        let t = k as f64 * dt;
        for v in f.iter_mut() {
            *v = exc.noise_std * normal.sample(&mut rng);
        }
        if let Some(h) = &exc.harmonics {
            // cycles of the 1P line elapsed at time t
            let cycles = base * t + 0.5 * exc.drift_rate * t * t;
            let mut force = 0.0;
            for (i, m) in freqs.iter().enumerate() {
                let phase = h.phases.get(i).copied().unwrap_or(0.0);
                force += h.amplitudes[i] * (2.0 * PI * m * cycles + phase).sin();
            }
            f[h.dof] += force;
        }
        rotor.push(if exc.harmonics.is_some() {
            60.0 * (base + exc.drift_rate * t)
        } else {
            0.0
        });
        let y = &sys.c * &x + &sys.d * &f;
        for (o, v) in out.iter_mut().zip(y.iter()) {
            o.push(*v);
        }
        x = &sys.a * &x + &sys.b * &f;
    }

    let mut channels: Vec<Channel> = out
        .into_iter()
        .enumerate()
        .map(|(i, d)| Channel::acceleration(format!("a{}", i + 1), d))
        .collect();
    channels.push(Channel::new("rotor_rpm", ChannelRole::RotorSpeed, rotor));
    let mut ts = MultiChannelTimeSeries::new(exc.rate, channels)?;
    ts.meta.insert("seed".into(), exc.seed.to_string());
    Ok(ts)
}
