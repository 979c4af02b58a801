//! File formats.
//!
//! * Time series: CSV with header `t,<channel>,...`; leading `# key=value`
//!   lines carry metadata. The rate comes from the time column, which must
//!   be uniformly spaced.
//! * L factor: text container, `# key=value` header lines followed by the
//!   rows of the full square `L` as CSV, floats in shortest round-trip form.
//! * Manifest: CSV `path,group` (`group` optional); relative paths resolve
//!   against the manifest's directory.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::identify::{FactorMeta, LFactor};
use crate::signal::{Channel, ChannelRole, MultiChannelTimeSeries, Spectrum};

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Split `# key=value` lines off the top of a text file.
fn split_header(text: &str) -> (BTreeMap<String, String>, &str) {
    let mut meta = BTreeMap::new();
    let mut rest = text;
    while let Some(line) = rest.lines().next() {
        let Some(body) = line.strip_prefix('#') else { break };
        if let Some((k, v)) = body.split_once('=') {
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
        rest = rest[line.len()..].trim_start_matches(['\r', '\n']);
    }
    (meta, rest)
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

/// Time-series CSV text (time column from `start_time`, default 0).
pub fn series_to_csv(ts: &MultiChannelTimeSeries) -> Result<String> {
    let mut out = String::new();
    for (k, v) in &ts.meta {
        out.push_str(&format!("# {k}={v}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend(ts.channels().iter().map(|c| c.name.clone()));
    w.write_record(&header)?;
    let times = ts.times();
    for (i, t) in times.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(ts.channels().iter().map(|c| c.data[i].to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(out)
}

pub fn write_series(path: &Path, ts: &MultiChannelTimeSeries) -> Result<()> {
    write_text(path, &series_to_csv(ts)?)
}

/// Parse time-series CSV text; `path` is used in error messages.
pub fn parse_series(text: &str, path: &Path) -> Result<MultiChannelTimeSeries> {
    let (meta, body) = split_header(text);
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 {
        return Err(format_err(path, "expected a time column and at least one channel"));
    }
    if !matches!(header[0].to_ascii_lowercase().as_str(), "t" | "time") {
        return Err(format_err(path, format!("first column must be `t`, found `{}`", header[0])));
    }
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(format_err(path, format!("row {} has {} fields", line + 1, rec.len())));
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| format_err(path, format!("row {}: `{field}` is not a number", line + 1)))?;
            cols[c].push(v);
        }
    }
    let t = std::mem::take(&mut cols[0]);
    if t.len() < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            available: t.len(),
        });
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(format_err(path, "time column must increase"));
    }
    if t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.max(1.0)) {
        return Err(format_err(path, "time column is not uniformly sampled"));
    }
    let channels = header[1..]
        .iter()
        .zip(cols.drain(1..))
        .map(|(name, data)| Channel::new(name.clone(), ChannelRole::from_name(name), data))
        .collect();
    let mut ts = MultiChannelTimeSeries::new(1.0 / dt, channels)?;
    ts.start_time = Some(t[0]);
    ts.meta = meta;
    Ok(ts)
}

pub fn read_series(path: &Path) -> Result<MultiChannelTimeSeries> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_series(&text, path)
}

const FACTOR_TAG: &str = "kfssi-lfactor";
const FACTOR_VERSION: &str = "1";

pub fn factor_to_text(f: &LFactor) -> String {
    let m = &f.meta;
    let mut s = format!("# format={FACTOR_TAG}\n# version={FACTOR_VERSION}\n");
    for (k, v) in [
        ("periodic_rows", f.periodic_rows().to_string()),
        ("raw_rows", f.raw_rows().to_string()),
        ("block_rows", m.block_rows.to_string()),
        ("channels", m.channels.to_string()),
        ("rate", m.rate.to_string()),
        ("sample_count", m.sample_count.to_string()),
        ("batches", m.batches.to_string()),
        ("rank_deficient", m.rank_deficient.to_string()),
    ] {
        s.push_str(&format!("# {k}={v}\n"));
    }
    let l = f.l();
    for i in 0..l.nrows() {
        let row: Vec<String> = (0..l.ncols()).map(|j| l[(i, j)].to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_factor(text: &str, path: &Path) -> Result<LFactor> {
    let (meta, body) = split_header(text);
    let get = |k: &str| {
        meta.get(k)
            .ok_or_else(|| format_err(path, format!("missing `{k}` header")))
    };
    if get("format")? != FACTOR_TAG {
        return Err(format_err(path, "not an L-factor file"));
    }
    if get("version")? != FACTOR_VERSION {
        return Err(format_err(path, format!("unsupported version {}", get("version")?)));
    }
    fn num<T: std::str::FromStr>(v: &str, k: &str, path: &Path) -> Result<T> {
        v.parse().map_err(|_| format_err(path, format!("bad `{k}` value `{v}`")))
    }
    let p: usize = num(get("periodic_rows")?, "periodic_rows", path)?;
    let r: usize = num(get("raw_rows")?, "raw_rows", path)?;
    let fm = FactorMeta {
        block_rows: num(get("block_rows")?, "block_rows", path)?,
        channels: num(get("channels")?, "channels", path)?,
        rate: num(get("rate")?, "rate", path)?,
        sample_count: num(get("sample_count")?, "sample_count", path)?,
        batches: num(get("batches")?, "batches", path)?,
        rank_deficient: num(get("rank_deficient")?, "rank_deficient", path)?,
    };
    let n = p + r;
    let mut values = Vec::with_capacity(n * n);
    let mut rows = 0;
    for line in body.lines().filter(|l| !l.trim().is_empty()) {
        let before = values.len();
        for field in line.split(',') {
            values.push(num::<f64>(field.trim(), "matrix entry", path)?);
        }
        if values.len() - before != n {
            return Err(format_err(path, format!("row {} has {} entries, expected {n}", rows + 1, values.len() - before)));
        }
        rows += 1;
    }
    if rows != n {
        return Err(format_err(path, format!("expected {n} rows, found {rows}")));
    }
    LFactor::from_parts(DMatrix::from_row_slice(n, n, &values), p, fm)
        .map_err(|e| format_err(path, e.to_string()))
}

pub fn write_factor(path: &Path, f: &LFactor) -> Result<()> {
    write_text(path, &factor_to_text(f))
}

pub fn read_factor(path: &Path) -> Result<LFactor> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_factor(&text, path)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub group: Option<String>,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_ascii_lowercase).collect();
    let pi = header
        .iter()
        .position(|h| h == "path")
        .ok_or_else(|| format_err(path, "manifest needs a `path` column"))?;
    let gi = header.iter().position(|h| h == "group");
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let p = rec.get(pi).unwrap_or("");
        if p.is_empty() {
            continue;
        }
        let p = PathBuf::from(p);
        out.push(ManifestEntry {
            path: if p.is_absolute() { p } else { base.join(p) },
            group: gi.and_then(|g| rec.get(g)).filter(|g| !g.is_empty()).map(str::to_string),
        });
    }
    Ok(out)
}

pub fn manifest_to_csv(entries: &[ManifestEntry]) -> String {
    let mut s = String::from("path,group\n");
    for e in entries {
        s.push_str(&format!("{},{}\n", e.path.display(), e.group.as_deref().unwrap_or("")));
    }
    s
}

/// `freq,<channel>...` rows.
pub fn spectrum_to_csv(spec: &Spectrum) -> String {
    let mut s = String::from("freq");
    for n in &spec.channel_names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for (i, f) in spec.freqs.iter().enumerate() {
        s.push_str(&f.to_string());
        for p in &spec.power {
            s.push(',');
            s.push_str(&p[i].to_string());
        }
        s.push('\n');
    }
    s
}
