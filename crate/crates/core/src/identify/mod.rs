//! LQ-based harmonic removal, SSI and modal extraction.

mod lfactor;
mod pipeline;
mod ssi;

pub use lfactor::{concat, merge, remove_harmonic_rows, stack_lq, EditedData, FactorMeta, LFactor};
pub use pipeline::{
    enhanced_factor, enhanced_kfssi, factor_for, pair_for, identify_factor, kfssi_pipeline, ssi_pipeline, sweep_orders,
    IdentifyConfig, OrderEstimates, OrderRange,
};
pub use ssi::{modal_params, pole_to_modal, ssi, ModalEstimate, ModalSet, SsiSolver, StateSpaceModel, RANK_TOL};
