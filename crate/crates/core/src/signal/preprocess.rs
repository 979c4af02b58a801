use super::series::{Channel, ChannelRole, MultiChannelTimeSeries};
use crate::error::{Error, Result};
use crate::filter::Sos;

/// Nacelle yaw, either per sample or constant over the record (radians).
#[derive(Debug, Clone, Copy)]
pub enum Yaw<'a> {
    Constant(f64),
    Series(&'a [f64]),
}

impl Yaw<'_> {
    fn at(&self, i: usize) -> f64 {
        match self {
            Yaw::Constant(v) => *v,
            Yaw::Series(s) => s[i],
        }
    }
}

fn split_axis(name: &str) -> Option<(&str, char)> {
    let lower = name.to_ascii_lowercase();
    let axis = match lower.chars().last()? {
        c @ ('x' | 'y') => c,
        _ => return None,
    };
    let stem = &name[..name.len() - 1];
    let stem = stem.strip_suffix('_').unwrap_or(stem);
    Some((stem, axis))
}

fn label(stem: &str, dir: &str) -> String {
    if stem.is_empty() {
        dir.to_string()
    } else {
        format!("{stem}_{dir}")
    }
}

/// Rotate every `<stem>_x`/`<stem>_y` acceleration pair into the rotor frame.
///
/// Positive yaw turns the sensor frame counterclockwise seen from above, and
/// `FA = x·cos(yaw) + y·sin(yaw)`, `SS = −x·sin(yaw) + y·cos(yaw)`. Output
/// channels are named `<stem>_FA` and `<stem>_SS`; other roles pass through.
pub fn yaw_transform(ts: &MultiChannelTimeSeries, yaw: Yaw<'_>) -> Result<MultiChannelTimeSeries> {
    if let Yaw::Series(s) = yaw {
        if s.len() != ts.len() {
            return Err(Error::invalid(format!(
                "yaw series has {} samples, data has {}",
                s.len(),
                ts.len()
            )));
        }
    }
    let mut out = Vec::new();
    let mut used = vec![false; ts.channel_count()];
    for (i, ch) in ts.channels().iter().enumerate() {
        if ch.role != ChannelRole::Acceleration {
            out.push(ch.clone());
            used[i] = true;
            continue;
        }
        if used[i] {
            continue;
        }
        let (stem, axis) = split_axis(&ch.name).ok_or_else(|| Error::UnpairedChannel(ch.name.clone()))?;
        let partner_axis = if axis == 'x' { 'y' } else { 'x' };
        let partner = ts.channels().iter().enumerate().position(|(j, c)| {
            j != i
                && !used[j]
                && c.role == ChannelRole::Acceleration
                && split_axis(&c.name).is_some_and(|(s, a)| s == stem && a == partner_axis)
        });
        let Some(j) = partner else {
            return Err(Error::UnpairedChannel(ch.name.clone()));
        };
        used[i] = true;
        used[j] = true;
        let (x, y) = if axis == 'x' {
            (&ch.data, &ts.channels()[j].data)
        } else {
            (&ts.channels()[j].data, &ch.data)
        };
        let mut fa = Vec::with_capacity(x.len());
        let mut ss = Vec::with_capacity(x.len());
        for k in 0..x.len() {
            let (s, c) = yaw.at(k).sin_cos();
            fa.push(x[k] * c + y[k] * s);
            ss.push(-x[k] * s + y[k] * c);
        }
        out.push(Channel::acceleration(label(stem, "FA"), fa));
        out.push(Channel::acceleration(label(stem, "SS"), ss));
    }
    ts.with_channels(out)
}

/// Least-squares line through `x` (against sample index) subtracted.
pub fn detrend_slice(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let tm = (n - 1.0) / 2.0;
    let xm = x.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let dt = i as f64 - tm;
        sxy += dt * (v - xm);
        sxx += dt * dt;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    x.iter()
        .enumerate()
        .map(|(i, v)| v - xm - slope * (i as f64 - tm))
        .collect()
}

/// Remove mean and linear trend from every acceleration channel.
pub fn detrend(ts: &MultiChannelTimeSeries) -> Result<MultiChannelTimeSeries> {
    ts.map_channels(|c| {
        Ok(if c.role == ChannelRole::Acceleration {
            detrend_slice(&c.data)
        } else {
            c.data.clone()
        })
    })
}

/// Reduce the rate by an integer factor after an order-8 zero-phase
/// Butterworth lowpass at 80 % of the new Nyquist frequency.
///
/// When `band_of_interest` (Hz) exceeds the new Nyquist frequency the
/// result carries a `warning` entry in its metadata.
pub fn decimate(
    ts: &MultiChannelTimeSeries,
    factor: usize,
    band_of_interest: Option<f64>,
) -> Result<MultiChannelTimeSeries> {
    if factor == 0 {
        return Err(Error::invalid("decimation factor must be >= 1"));
    }
    if factor == 1 {
        return Ok(ts.clone());
    }
    let new_rate = ts.rate() / factor as f64;
    let lp = Sos::butter_lowpass(8, 0.8 * 0.5 * new_rate, ts.rate())?;
    let pad = (3 * 8 * factor).min(ts.len() - 1);
    let out = ts.map_channels(|c| {
        let filtered = if c.role == ChannelRole::Acceleration {
            lp.filtfilt(&c.data, pad)
        } else {
            c.data.clone()
        };
        Ok(filtered.into_iter().step_by(factor).collect())
    })?;
    let mut out = out.with_rate(new_rate)?;
    if let Some(band) = band_of_interest {
        if band > 0.5 * new_rate {
            out.meta.insert(
                "warning".into(),
                format!(
                    "band of interest {band} Hz exceeds decimated Nyquist {} Hz",
                    0.5 * new_rate
                ),
            );
        }
    }
    Ok(out)
}
