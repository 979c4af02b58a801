use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a channel measures. Only acceleration channels enter identification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelRole {
    Acceleration,
    /// Rotor (or generator) speed, in rpm.
    RotorSpeed,
    /// Nacelle yaw angle, in radians.
    Yaw,
    Other,
}

impl ChannelRole {
    /// Role inferred from a CSV column name.
    pub fn from_name(name: &str) -> Self {
        match name.to_ascii_lowercase().as_str() {
            "rotor_rpm" | "rotor" | "rotor_speed" | "generator_rpm" => ChannelRole::RotorSpeed,
            "yaw" | "yaw_rad" => ChannelRole::Yaw,
            "group" => ChannelRole::Other,
            _ => ChannelRole::Acceleration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub role: ChannelRole,
    pub data: Vec<f64>,
}

impl Channel {
    pub fn new(name: impl Into<String>, role: ChannelRole, data: Vec<f64>) -> Self {
        Channel {
            name: name.into(),
            role,
            data,
        }
    }

    pub fn acceleration(name: impl Into<String>, data: Vec<f64>) -> Self {
        Self::new(name, ChannelRole::Acceleration, data)
    }
}

/// Uniformly sampled multi-sensor record.
///
/// Construction validates that every channel has the same length (at least
/// two samples), the rate is positive and no sample is NaN or infinite.
/// Gaps are rejected rather than interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiChannelTimeSeries {
    rate: f64,
    channels: Vec<Channel>,
    pub start_time: Option<f64>,
    pub meta: BTreeMap<String, String>,
}

impl MultiChannelTimeSeries {
    pub fn new(rate: f64, channels: Vec<Channel>) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid(format!("sample rate must be positive, got {rate}")));
        }
        let Some(first) = channels.first() else {
            return Err(Error::invalid("time series needs at least one channel"));
        };
        let len = first.data.len();
        if len < 2 {
            return Err(Error::InsufficientSamples {
                required: 2,
                available: len,
            });
        }
        for ch in &channels {
            if ch.data.len() != len {
                return Err(Error::invalid(format!(
                    "channel `{}` has {} samples, expected {len}",
                    ch.name,
                    ch.data.len()
                )));
            }
            if let Some(i) = ch.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "channel `{}` has a non-finite sample at index {i}",
                    ch.name
                )));
            }
        }
        Ok(MultiChannelTimeSeries {
            rate,
            channels,
            start_time: None,
            meta: BTreeMap::new(),
        })
    }

    /// Convenience constructor for acceleration-only data named `ch1..chN`.
    pub fn from_columns(rate: f64, columns: Vec<Vec<f64>>) -> Result<Self> {
        let channels = columns
            .into_iter()
            .enumerate()
            .map(|(i, d)| Channel::acceleration(format!("ch{}", i + 1), d))
            .collect();
        Self::new(rate, channels)
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate
    }

    pub fn nyquist(&self) -> f64 {
        0.5 * self.rate
    }

    pub fn len(&self) -> usize {
        self.channels[0].data.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.rate
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn first_with_role(&self, role: ChannelRole) -> Option<&Channel> {
        self.channels.iter().find(|c| c.role == role)
    }

    /// A copy restricted to the acceleration channels.
    pub fn accelerations(&self) -> Result<Self> {
        let channels: Vec<Channel> = self
            .channels
            .iter()
            .filter(|c| c.role == ChannelRole::Acceleration)
            .cloned()
            .collect();
        if channels.is_empty() {
            return Err(Error::invalid("no acceleration channels"));
        }
        self.with_channels(channels)
    }

    /// Same rate and metadata, different channels.
    pub fn with_channels(&self, channels: Vec<Channel>) -> Result<Self> {
        let mut out = Self::new(self.rate, channels)?;
        out.start_time = self.start_time;
        out.meta = self.meta.clone();
        Ok(out)
    }

    /// Same layout with every channel's samples replaced via `f`.
    pub fn map_channels<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&Channel) -> Result<Vec<f64>>,
    {
        let channels = self
            .channels
            .iter()
            .map(|c| Ok(Channel::new(c.name.clone(), c.role, f(c)?)))
            .collect::<Result<Vec<_>>>()?;
        self.with_channels(channels)
    }

    pub fn with_rate(mut self, rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid(format!("sample rate must be positive, got {rate}")));
        }
        self.rate = rate;
        Ok(self)
    }

    /// Time stamps relative to `start_time` (zero when absent).
    pub fn times(&self) -> Vec<f64> {
        let t0 = self.start_time.unwrap_or(0.0);
        (0..self.len()).map(|i| t0 + i as f64 / self.rate).collect()
    }
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub(crate) fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

pub(crate) fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}
