//! Command-line front end: `simulate`, `localize`, `identify`, `aggregate`.
//!
//! Every option can come from a JSON [`RunConfig`] (`--config`); flags
//! override the file, and the file overrides the defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{
    classify, entropy_sweep, kurtosis_candidates, kurtosis_sweep, rotor_harmonics, ClassifyThresholds,
    HarmonicSet, SpeedUnit, SweepParams,
};
use crate::identify::{
    enhanced_factor, factor_for, IdentifyConfig, LFactor, ModalEstimate, OrderEstimates, OrderRange,
};
use crate::io;
use crate::lsce::{correlations, harmonic_polynomial, modified_lsce};
use crate::signal::{decimate, detrend, welch_psd, yaw_transform, ChannelRole, MultiChannelTimeSeries, Yaw};
use crate::sim::{exact_modes, reference_excitation, simulate, ChainModel, ExcitationSpec, ModalTruth};
use crate::stabilize::{
    auto_interpret, leave_one_out_factors, loo_aggregate, InterpretParams,
    InterpretationResult, LooSummary, StabilityTolerances, StabilizationDiagram,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Ssi,
    #[default]
    Kfssi,
    EnhancedKfssi,
    Mlsce,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Ssi => "ssi",
            Algorithm::Kfssi => "kfssi",
            Algorithm::EnhancedKfssi => "enhanced-kfssi",
            Algorithm::Mlsce => "mlsce",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub model: ChainModel,
    pub excitation: ExcitationSpec,
    pub datasets: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            model: ChainModel::reference(),
            excitation: reference_excitation(1),
            datasets: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarmonicConfig {
    pub multipliers: Vec<f64>,
    pub unit: SpeedUnit,
    pub gear_ratio: Option<f64>,
    /// A fixed harmonic set (JSON) used instead of the rotor channel.
    pub file: Option<PathBuf>,
}

impl Default for HarmonicConfig {
    fn default() -> Self {
        HarmonicConfig {
            multipliers: crate::sim::reference_harmonics().multipliers,
            unit: SpeedUnit::Rpm,
            gear_ratio: None,
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub detrend: bool,
    pub decimate: Option<usize>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            detrend: true,
            decimate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LsceConfig {
    /// Highest correlation lag (samples).
    pub max_lag: usize,
    /// Reference channel index; the last acceleration channel when absent.
    pub reference: Option<usize>,
    /// Degrees of the free factor; the full order adds two per harmonic.
    pub orders: OrderRange,
}

impl Default for LsceConfig {
    fn default() -> Self {
        LsceConfig {
            max_lag: 250,
            reference: None,
            orders: OrderRange { min: 2, max: 40, step: 2 },
        }
    }
}

/// Complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub sim: SimConfig,
    pub harmonics: HarmonicConfig,
    pub preprocess: PreprocessConfig,
    pub identify: IdentifyConfig,
    pub stability: StabilityTolerances,
    pub interpret: InterpretParams,
    pub lsce: LsceConfig,
    /// Indicator sweep settings; bandwidth defaults to 2 % of Nyquist.
    pub sweep: Option<SweepParams>,
    pub classify: ClassifyThresholds,
    pub algorithm: Algorithm,
    pub output_dir: PathBuf,
    /// Reported frequencies are divided by this (Hz); physical units if unset.
    pub normalize: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: Vec::new(),
            manifest: None,
            sim: SimConfig::default(),
            harmonics: HarmonicConfig::default(),
            preprocess: PreprocessConfig::default(),
            identify: IdentifyConfig::default(),
            stability: StabilityTolerances::default(),
            interpret: InterpretParams::default(),
            lsce: LsceConfig::default(),
            sweep: None,
            classify: ClassifyThresholds::default(),
            algorithm: Algorithm::default(),
            output_dir: PathBuf::from("out"),
            normalize: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_f", self.stability.tol_f),
            ("tol_d", self.stability.tol_d),
            ("cluster tol", self.interpret.tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(r) = self.normalize {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::invalid(format!("normalization frequency must be positive, got {r}")));
            }
        }
        if self.interpret.n_min == 0 {
            return Err(Error::invalid("n_min must be at least 1"));
        }
        for o in [self.identify.orders, self.lsce.orders] {
            if o.min % 2 == 1 || o.step % 2 == 1 {
                return Err(Error::invalid("sweep orders must be even"));
            }
            o.orders()?;
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "kfssi", version, about = "Output-only modal identification with harmonic removal")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write simulated datasets, a manifest and the ground truth.
    Simulate(SimulateArgs),
    /// Locate harmonic lines from the rotor speed or indicator sweeps.
    Localize(LocalizeArgs),
    /// Identify modes and write the stabilization diagram.
    Identify(IdentifyArgs),
    /// Leave-one-out box statistics over a dataset list.
    Aggregate(AggregateArgs),
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Harmonic multipliers, e.g. 1,3,6,9,12.
    #[arg(long, value_delimiter = ',')]
    pub multipliers: Option<Vec<f64>>,
    /// Harmonic set JSON used instead of the rotor channel.
    #[arg(long)]
    pub harmonics: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub speed_unit: Option<SpeedUnitArg>,
    #[arg(long)]
    pub gear_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SpeedUnitArg {
    Rpm,
    Hz,
}

#[derive(Debug, Args, Default)]
pub struct IdentifyOptions {
    #[arg(long, value_enum)]
    pub algorithm: Option<Algorithm>,
    #[arg(long)]
    pub block_rows: Option<usize>,
    #[arg(long)]
    pub order_min: Option<usize>,
    #[arg(long)]
    pub order_max: Option<usize>,
    #[arg(long)]
    pub order_step: Option<usize>,
    #[arg(long)]
    pub tol_f: Option<f64>,
    #[arg(long)]
    pub tol_d: Option<f64>,
    #[arg(long)]
    pub cluster_tol: Option<f64>,
    #[arg(long)]
    pub n_min: Option<usize>,
    #[arg(long)]
    pub max_lag: Option<usize>,
    /// Largest free-factor degree of the mlsce sweep.
    #[arg(long)]
    pub lsce_order_max: Option<usize>,
    /// Report frequencies divided by this reference (Hz).
    #[arg(long, value_name = "HZ")]
    pub normalize: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub datasets: Option<usize>,
    /// Seconds per dataset.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Time-series CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Also write Kurtosis and Entropy curves.
    #[arg(long)]
    pub indicators: bool,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub options: IdentifyOptions,
    /// Time-series CSV; repeat for enhanced-kfssi.
    #[arg(long)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Continue an enhanced-kfssi factor saved by an earlier run.
    #[arg(long)]
    pub factor_in: Option<PathBuf>,
    /// Where to save the enhanced-kfssi factor (default `<out>/factor.txt`).
    #[arg(long)]
    pub factor_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub options: IdentifyOptions,
    #[arg(long)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Algorithms to aggregate side by side.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub algorithms: Option<Vec<Algorithm>>,
}

fn base_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    if let Some(m) = &common.multipliers {
        cfg.harmonics.multipliers = m.clone();
    }
    if let Some(h) = &common.harmonics {
        cfg.harmonics.file = Some(h.clone());
    }
    if let Some(u) = common.speed_unit {
        cfg.harmonics.unit = match u {
            SpeedUnitArg::Rpm => SpeedUnit::Rpm,
            SpeedUnitArg::Hz => SpeedUnit::Hz,
        };
    }
    if let Some(g) = common.gear_ratio {
        cfg.harmonics.gear_ratio = Some(g);
    }
    Ok(cfg)
}

fn apply_options(cfg: &mut RunConfig, o: &IdentifyOptions) {
    if let Some(a) = o.algorithm {
        cfg.algorithm = a;
    }
    if let Some(v) = o.block_rows {
        cfg.identify.block_rows = v;
    }
    if let Some(v) = o.order_min {
        cfg.identify.orders.min = v;
    }
    if let Some(v) = o.order_max {
        cfg.identify.orders.max = v;
    }
    if let Some(v) = o.order_step {
        cfg.identify.orders.step = v;
    }
    if let Some(v) = o.tol_f {
        cfg.stability.tol_f = v;
    }
    if let Some(v) = o.tol_d {
        cfg.stability.tol_d = v;
    }
    if let Some(v) = o.cluster_tol {
        cfg.interpret.tol = v;
    }
    if let Some(v) = o.n_min {
        cfg.interpret.n_min = v;
    }
    if let Some(v) = o.max_lag {
        cfg.lsce.max_lag = v;
    }
    if let Some(v) = o.lsce_order_max {
        cfg.lsce.orders.max = v;
    }
    if o.normalize.is_some() {
        cfg.normalize = o.normalize;
    }
}

/// Parse arguments and run; the error's exit code is the process status.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => {
            let mut cfg = base_config(&a.common)?;
            if let Some(s) = a.seed {
                cfg.sim.excitation.seed = s;
            }
            if let Some(n) = a.datasets {
                cfg.sim.datasets = n;
            }
            if let Some(d) = a.duration {
                cfg.sim.excitation.duration = d;
            }
            if let Some(r) = a.rate {
                cfg.sim.excitation.rate = r;
            }
            cmd_simulate(&cfg).map(|_| ())
        }
        Command::Localize(a) => {
            let cfg = base_config(&a.common)?;
            cmd_localize(&cfg, &a.input, a.indicators).map(|_| ())
        }
        Command::Identify(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_options(&mut cfg, &a.options);
            if !a.input.is_empty() {
                cfg.inputs = a.input.clone();
            }
            if a.manifest.is_some() {
                cfg.manifest = a.manifest.clone();
            }
            cmd_identify(&cfg, a.factor_in.as_deref(), a.factor_out.as_deref()).map(|_| ())
        }
        Command::Aggregate(a) => {
            let mut cfg = base_config(&a.common)?;
            apply_options(&mut cfg, &a.options);
            if !a.input.is_empty() {
                cfg.inputs = a.input.clone();
            }
            if a.manifest.is_some() {
                cfg.manifest = a.manifest.clone();
            }
            let algs = a
                .algorithms
                .unwrap_or_else(|| vec![Algorithm::Kfssi, Algorithm::EnhancedKfssi]);
            cmd_aggregate(&cfg, &algs).map(|_| ())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub modes: ModalTruth,
    pub harmonics: Option<HarmonicSet>,
    pub model: ChainModel,
    pub excitation: ExcitationSpec,
    pub seeds: Vec<u64>,
}

/// Simulated datasets `dataset_NN.csv` (seeds `seed, seed+1, …`), a
/// `manifest.csv` and `truth.json`. Returns the dataset paths.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let sim = &cfg.sim;
    if sim.datasets == 0 {
        return Err(Error::invalid("at least one dataset is required"));
    }
    sim.excitation.validate(&sim.model)?;
    let truth = exact_modes(&sim.model)?;
    let seeds: Vec<u64> = (0..sim.datasets as u64).map(|i| sim.excitation.seed + i).collect();
    let out = &cfg.output_dir;
    let paths: Vec<PathBuf> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let exc = ExcitationSpec {
                seed,
                ..sim.excitation.clone()
            };
            let ts = simulate(&sim.model, &exc)?;
            let path = out.join(format!("dataset_{i:02}.csv"));
            io::write_series(&path, &ts)?;
            Ok(path)
        })
        .collect::<Result<_>>()?;
    let entries: Vec<io::ManifestEntry> = paths
        .iter()
        .map(|p| io::ManifestEntry {
            path: PathBuf::from(p.file_name().expect("file name")),
            group: None,
        })
        .collect();
    io::write_text(&out.join("manifest.csv"), &io::manifest_to_csv(&entries))?;
    io::write_json(
        &out.join("truth.json"),
        &GroundTruth {
            modes: truth,
            harmonics: sim.excitation.harmonics.as_ref().map(|h| h.set.clone()),
            model: sim.model.clone(),
            excitation: sim.excitation.clone(),
            seeds,
        },
    )?;
    Ok(paths)
}

/// Read a series and apply yaw rotation (when a yaw channel is present),
/// detrending and decimation.
pub fn load_dataset(path: &Path, cfg: &RunConfig) -> Result<MultiChannelTimeSeries> {
    let mut ts = io::read_series(path)?;
    if let Some(yaw) = ts.first_with_role(ChannelRole::Yaw).map(|c| c.data.clone()) {
        ts = yaw_transform(&ts, Yaw::Series(&yaw))?;
    }
    if cfg.preprocess.detrend {
        ts = detrend(&ts)?;
    }
    if let Some(f) = cfg.preprocess.decimate {
        ts = decimate(&ts, f, None)?;
    }
    Ok(ts)
}

/// Harmonic lines for one dataset: a configured set file, else the rotor
/// channel.
pub fn dataset_harmonics(ts: &MultiChannelTimeSeries, cfg: &RunConfig) -> Result<HarmonicSet> {
    if let Some(f) = &cfg.harmonics.file {
        let set: HarmonicSet = io::read_json(f)?;
        set.check_nyquist(ts.rate())?;
        return Ok(set);
    }
    let rotor = ts
        .first_with_role(ChannelRole::RotorSpeed)
        .ok_or(Error::HarmonicsUnresolved)?;
    let set = rotor_harmonics(
        &rotor.data,
        cfg.harmonics.unit,
        &cfg.harmonics.multipliers,
        cfg.harmonics.gear_ratio,
    )?
    .set;
    set.check_nyquist(ts.rate())?;
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizeSummary {
    pub method: String,
    pub harmonics: HarmonicSet,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speed_cv: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub kurtosis_verdicts: Vec<crate::harmonics::CandidateVerdict>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub entropy_verdicts: Vec<crate::harmonics::CandidateVerdict>,
}

/// `harmonics.json` and `localize.json`, plus `kurtosis.csv` and
/// `entropy.csv` when indicators are requested or no rotor channel exists.
pub fn cmd_localize(cfg: &RunConfig, input: &Path, indicators: bool) -> Result<LocalizeSummary> {
    let ts = load_dataset(input, cfg)?;
    let rotor = ts.first_with_role(ChannelRole::RotorSpeed);
    let out = &cfg.output_dir;
    let curves = if indicators || rotor.is_none() {
        let params = cfg.sweep.clone().unwrap_or_else(|| SweepParams::for_rate(ts.rate()));
        let grid = params.default_grid(ts.rate());
        let k = kurtosis_sweep(&ts, &grid, &params)?;
        let e = entropy_sweep(&ts, &grid, &params)?;
        io::write_text(&out.join("kurtosis.csv"), &k.to_csv())?;
        io::write_text(&out.join("entropy.csv"), &e.to_csv())?;
        Some((k, e))
    } else {
        None
    };
    let (method, set, cv) = match rotor {
        Some(r) => {
            let rh = rotor_harmonics(&r.data, cfg.harmonics.unit, &cfg.harmonics.multipliers, cfg.harmonics.gear_ratio)?;
            ("rotor".to_string(), rh.set, Some(rh.speed_cv))
        }
        None => {
            let (k, _) = curves.as_ref().expect("curves computed without rotor");
            let found = kurtosis_candidates(k, cfg.classify);
            if found.is_empty() {
                return Err(Error::HarmonicsUnresolved);
            }
            ("kurtosis".to_string(), HarmonicSet::from_freqs(found)?, None)
        }
    };
    set.check_nyquist(ts.rate())?;
    let (kv, ev) = match &curves {
        Some((k, e)) => (classify(k, &set, cfg.classify), classify(e, &set, cfg.classify)),
        None => (Vec::new(), Vec::new()),
    };
    let summary = LocalizeSummary {
        method,
        harmonics: set,
        speed_cv: cv,
        kurtosis_verdicts: kv,
        entropy_verdicts: ev,
    };
    io::write_json(&out.join("harmonics.json"), &summary.harmonics)?;
    io::write_json(&out.join("localize.json"), &summary)?;
    Ok(summary)
}

fn dataset_paths(cfg: &RunConfig) -> Result<Vec<io::ManifestEntry>> {
    let mut out: Vec<io::ManifestEntry> = cfg
        .inputs
        .iter()
        .map(|p| io::ManifestEntry {
            path: p.clone(),
            group: None,
        })
        .collect();
    if let Some(m) = &cfg.manifest {
        out.extend(io::read_manifest(m)?);
    }
    if out.is_empty() {
        return Err(Error::invalid("no input datasets given"));
    }
    Ok(out)
}

/// LSCE at full orders `deg H + o` for each configured order `o`.
pub fn mlsce_sweep(ts: &MultiChannelTimeSeries, harmonics: &HarmonicSet, cfg: &RunConfig) -> Result<Vec<OrderEstimates>> {
    let acc = ts.accelerations()?;
    let reference = cfg.lsce.reference.unwrap_or(acc.channel_count() - 1);
    let corr = correlations(&acc, cfg.lsce.max_lag, reference)?;
    let m = harmonic_polynomial(harmonics, ts.dt()).len() - 1;
    let orders = cfg.lsce.orders.orders()?;
    Ok(orders
        .par_iter()
        .map(|&o| match modified_lsce(&corr, harmonics, m + o) {
            Ok(r) => OrderEstimates {
                order: m + o,
                modes: r.modes,
                error: None,
            },
            Err(e) => OrderEstimates {
                order: m + o,
                modes: Vec::new(),
                error: Some(e.to_string()),
            },
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyReport {
    pub algorithm: Algorithm,
    pub datasets: Vec<PathBuf>,
    pub harmonics: Vec<HarmonicSet>,
    pub interpretation: InterpretationResult,
    pub failed_orders: Vec<(usize, String)>,
}

/// `stabilization.csv`, `interpretation.json`, `spectrum.csv` and, for
/// enhanced-kfssi, the accumulated factor.
pub fn cmd_identify(cfg: &RunConfig, factor_in: Option<&Path>, factor_out: Option<&Path>) -> Result<IdentifyReport> {
    cfg.validate()?;
    let entries = dataset_paths(cfg)?;
    if cfg.algorithm != Algorithm::EnhancedKfssi && (entries.len() != 1 || factor_in.is_some()) {
        return Err(Error::invalid(format!(
            "{} takes exactly one dataset; use enhanced-kfssi to combine several",
            cfg.algorithm.as_str()
        )));
    }
    let datasets = entries
        .iter()
        .map(|e| load_dataset(&e.path, cfg))
        .collect::<Result<Vec<_>>>()?;
    let harmonics = datasets
        .iter()
        .map(|ts| match cfg.algorithm {
            Algorithm::Ssi => Ok(HarmonicSet::empty()),
            _ => dataset_harmonics(ts, cfg),
        })
        .collect::<Result<Vec<_>>>()?;
    let orders = cfg.identify.orders.orders()?;
    let out = &cfg.output_dir;

    let mut diag = match cfg.algorithm {
        Algorithm::Ssi | Algorithm::Kfssi => {
            let f = factor_for(&datasets[0], &harmonics[0], &cfg.identify)?;
            let rows = crate::identify::identify_factor(&f, &orders)?;
            StabilizationDiagram::from_estimates(rows, cfg.stability)?
        }
        Algorithm::EnhancedKfssi => {
            let pairs: Vec<(MultiChannelTimeSeries, HarmonicSet)> =
                datasets.iter().cloned().zip(harmonics.iter().cloned()).collect();
            let mut factor = enhanced_factor(&pairs, &cfg.identify)?;
            if let Some(p) = factor_in {
                let prev = io::read_factor(p)?;
                factor = crate::identify::merge(&[&prev, &factor])?;
            }
            io::write_factor(&factor_out.map(Path::to_path_buf).unwrap_or_else(|| out.join("factor.txt")), &factor)?;
            let rows = crate::identify::identify_factor(&factor, &orders)?;
            StabilizationDiagram::from_estimates(rows, cfg.stability)?
        }
        Algorithm::Mlsce => {
            let rows = mlsce_sweep(&datasets[0], &harmonics[0], cfg)?;
            StabilizationDiagram::from_estimates(rows, cfg.stability)?
        }
    };
    let mut interpretation = auto_interpret(&diag, &cfg.interpret)?;
    if let Some(r) = cfg.normalize {
        scale_modes(&mut diag.entries, r);
        scale_modes(&mut interpretation.modes, r);
        interpretation.unique_freqs.iter_mut().for_each(|f| *f /= r);
    }
    io::write_text(&out.join("stabilization.csv"), &diag.to_csv())?;
    let seg = datasets[0].len().min(1024);
    let spec = welch_psd(&datasets[0].accelerations()?, seg, 0.5)?;
    io::write_text(&out.join("spectrum.csv"), &io::spectrum_to_csv(&spec))?;
    let report = IdentifyReport {
        algorithm: cfg.algorithm,
        datasets: entries.into_iter().map(|e| e.path).collect(),
        harmonics,
        interpretation,
        failed_orders: diag.failures.clone(),
    };
    io::write_json(&out.join("interpretation.json"), &report)?;
    Ok(report)
}

fn scale_modes(modes: &mut [ModalEstimate], reference: f64) {
    for m in modes {
        m.frequency /= reference;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: String,
    pub algorithm: Algorithm,
    pub summary: LooSummary,
    /// Runs whose diagram had no persistent modes.
    pub failed_runs: usize,
}

fn interpret_runs(
    runs: impl IndexedParallelIterator<Item = Result<Vec<OrderEstimates>>>,
    cfg: &RunConfig,
) -> Result<(Vec<InterpretationResult>, usize)> {
    let out: Vec<Result<InterpretationResult>> = runs
        .map(|rows| {
            let diag = StabilizationDiagram::from_estimates(rows?, cfg.stability)?;
            auto_interpret(&diag, &cfg.interpret)
        })
        .collect();
    let mut ok = Vec::new();
    let mut failed = 0;
    for r in out {
        match r {
            Ok(v) => ok.push(v),
            Err(Error::NoPersistentModes) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((ok, failed))
}

/// Box statistics per group and algorithm. Plain algorithms contribute one
/// run per dataset; enhanced-kfssi one run per left-out dataset.
pub fn aggregate_datasets(
    datasets: &[(MultiChannelTimeSeries, HarmonicSet)],
    cfg: &RunConfig,
    algorithms: &[Algorithm],
    group: &str,
) -> Result<Vec<AggregateRow>> {
    if datasets.len() < 3 {
        return Err(Error::invalid(format!(
            "group `{group}` has {} datasets; at least 3 are required",
            datasets.len()
        )));
    }
    let orders = cfg.identify.orders.orders()?;
    let needs_kf = algorithms
        .iter()
        .any(|a| matches!(a, Algorithm::Kfssi | Algorithm::EnhancedKfssi));
    let kf_factors: Vec<LFactor> = if needs_kf {
        datasets
            .par_iter()
            .map(|(ts, h)| factor_for(ts, h, &cfg.identify))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let mut rows = Vec::new();
    for &alg in algorithms {
        let (results, failed) = match alg {
            Algorithm::Ssi => interpret_runs(
                datasets.par_iter().map(|(ts, _)| {
                    let f = factor_for(ts, &HarmonicSet::empty(), &cfg.identify)?;
                    crate::identify::identify_factor(&f, &orders)
                }),
                cfg,
            )?,
            Algorithm::Kfssi => interpret_runs(
                kf_factors
                    .par_iter()
                    .map(|f| crate::identify::identify_factor(f, &orders)),
                cfg,
            )?,
            Algorithm::EnhancedKfssi => {
                let loo = leave_one_out_factors(&kf_factors)?;
                interpret_runs(loo.par_iter().map(|f| crate::identify::identify_factor(f, &orders)), cfg)?
            }
            Algorithm::Mlsce => interpret_runs(datasets.par_iter().map(|(ts, h)| mlsce_sweep(ts, h, cfg)), cfg)?,
        };
        let summary = loo_aggregate(&results)?;
        rows.push(AggregateRow {
            group: group.to_string(),
            algorithm: alg,
            summary,
            failed_runs: failed,
        });
    }
    Ok(rows)
}

fn box_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::from(
        "group,algorithm,mode,n,excluded,freq_median,freq_q1,freq_q3,freq_min,freq_max,\
         damp_median,damp_q1,damp_q3,damp_min,damp_max\n",
    );
    for r in rows {
        for m in &r.summary.modes {
            let (f, d) = (&m.frequency, &m.damping_pct);
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.group,
                r.algorithm.as_str(),
                m.mode,
                f.n,
                m.excluded,
                f.median,
                f.q1,
                f.q3,
                f.min,
                f.max,
                d.median,
                d.q1,
                d.q3,
                d.min,
                d.max
            ));
        }
    }
    s
}

/// `box_stats.csv` and `aggregate.json`, one block per (group, algorithm).
pub fn cmd_aggregate(cfg: &RunConfig, algorithms: &[Algorithm]) -> Result<Vec<AggregateRow>> {
    cfg.validate()?;
    let entries = dataset_paths(cfg)?;
    let only_ssi = algorithms.iter().all(|a| *a == Algorithm::Ssi);
    let loaded = entries
        .par_iter()
        .map(|e| {
            let ts = load_dataset(&e.path, cfg)?;
            let h = if only_ssi {
                HarmonicSet::empty()
            } else {
                dataset_harmonics(&ts, cfg)?
            };
            // manifest column first, then the dataset's own `# group=` header
            let group = e
                .group
                .clone()
                .or_else(|| ts.meta.get("group").cloned())
                .unwrap_or_else(|| "all".into());
            Ok((group, ts, h))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut groups: BTreeMap<String, Vec<(MultiChannelTimeSeries, HarmonicSet)>> = BTreeMap::new();
    for (g, ts, h) in loaded {
        groups.entry(g).or_default().push((ts, h));
    }
    let mut rows = Vec::new();
    for (group, datasets) in groups {
        rows.extend(aggregate_datasets(&datasets, cfg, algorithms, &group)?);
    }
    if let Some(r) = cfg.normalize {
        for row in &mut rows {
            for m in &mut row.summary.modes {
                m.representative /= r;
                let f = &mut m.frequency;
                for v in [&mut f.median, &mut f.q1, &mut f.q3, &mut f.min, &mut f.max] {
                    *v /= r;
                }
            }
            row.summary.unmatched.iter_mut().for_each(|f| *f /= r);
        }
    }
    let out = &cfg.output_dir;
    io::write_text(&out.join("box_stats.csv"), &box_csv(&rows))?;
    io::write_json(&out.join("aggregate.json"), &rows)?;
    Ok(rows)
}

/// Modes of an interpretation nearest to each target frequency.
pub fn nearest_modes<'a>(modes: &'a [ModalEstimate], targets: &[f64]) -> Vec<Option<&'a ModalEstimate>> {
    targets
        .iter()
        .map(|t| {
            modes
                .iter()
                .min_by(|a, b| (a.frequency - t).abs().total_cmp(&(b.frequency - t).abs()))
        })
        .collect()
}
