//! Time-series model, preprocessing, spectra and block-Hankel assembly.

mod hankel;
mod preprocess;
mod series;
mod spectrum;

pub use hankel::{build_hankel, HankelPair};
pub use preprocess::{decimate, detrend, detrend_slice, yaw_transform, Yaw};
pub use series::{Channel, ChannelRole, MultiChannelTimeSeries};
pub(crate) use series::{mean, rms, variance};
pub use spectrum::{hann, welch_psd, Spectrum};
