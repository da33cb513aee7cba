//! Experiment configuration and on-disk formats.
//!
//! Dataset files are a one-line preamble, a TOML header and a raw payload:
//!
//! ```text
//! HBNPUF-DATASET 1 0000000000001234\n   <- header length in bytes, 16 digits
//! <TOML header: dims, sample times, config, per-class records>
//! <payload: packed bits, LSB-first, index ((((s*Ni+i)*Nc+c)*Nr+r)*N+n)*T+t>
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::{DatasetMetadata, Dims, ResponseTensor};
use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::params::{PairNormMode, SimConfig};
use crate::stats::{Knob, SeriesSet, StatsSeries, SweepCurve, ZReport};

pub const DATASET_MAGIC: &str = "HBNPUF-DATASET";
pub const DATASET_VERSION: u32 = 1;
pub const BIT_ORDER: &str = "row-major [s,i,c,r,n,t], lsb-first";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub dataset: Option<PathBuf>,
    pub stats: Option<PathBuf>,
    pub sweep: Option<PathBuf>,
    pub fit: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub knob: Knob,
    pub values: Vec<f64>,
    #[serde(default = "default_eval_time")]
    pub eval_time_ns: f64,
}

fn default_eval_time() -> f64 {
    6.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSpec {
    pub reference: Option<PathBuf>,
}

/// Everything a CLI run needs: simulation parameters plus paths and pipeline settings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub threads: Option<usize>,
    pub sim: SimConfig,
    pub output: OutputPaths,
    pub sweep: Option<SweepSpec>,
    pub compare: CompareSpec,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            Error::config(
                "config",
                e.to_string().lines().collect::<Vec<_>>().join(" "),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be >= 1"));
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(Error::config("sweep.values", "must not be empty"));
            }
            if sw.values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config("sweep.values", "must be strictly increasing"));
            }
        }
        for (field, p) in [
            ("output.dataset", &self.output.dataset),
            ("output.stats", &self.output.stats),
            ("output.sweep", &self.output.sweep),
            ("output.fit", &self.output.fit),
        ] {
            if p.as_ref().is_some_and(|p| p.as_os_str().is_empty()) {
                return Err(Error::config(field, "path must not be empty"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetHeader {
    format_version: u32,
    bit_order: String,
    payload_bytes: u64,
    dims: Dims,
    sample_times_ns: Vec<f64>,
    metadata: Option<DatasetMetadata>,
}

pub fn encode_dataset(x: &ResponseTensor) -> Result<Vec<u8>> {
    let header = DatasetHeader {
        format_version: DATASET_VERSION,
        bit_order: BIT_ORDER.to_string(),
        payload_bytes: x.payload().len() as u64,
        dims: x.dims(),
        sample_times_ns: x.sample_times_ns().to_vec(),
        metadata: x.metadata().cloned(),
    };
    let text = toml::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(64 + text.len() + x.payload().len());
    writeln!(out, "{DATASET_MAGIC} {DATASET_VERSION} {:016}", text.len())?;
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(x.payload());
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<ResponseTensor> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing dataset preamble".into()))?;
    let preamble = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Format("preamble is not UTF-8".into()))?;
    let mut parts = preamble.split(' ');
    if parts.next() != Some(DATASET_MAGIC) {
        return Err(Error::Format("not a dataset file (bad magic)".into()));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Format("bad version in preamble".into()))?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let header_len: usize = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Format("bad header length in preamble".into()))?;
    let header_start = nl + 1;
    let header_end = header_start
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    let text = std::str::from_utf8(&bytes[header_start..header_end])
        .map_err(|_| Error::Format("header is not UTF-8".into()))?;
    let header: DatasetHeader = toml::from_str(text).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    let payload = &bytes[header_end..];
    if payload.len() as u128 != header.dims.payload_bytes() || payload.len() as u64 != header.payload_bytes {
        return Err(Error::Format(format!(
            "payload length mismatch: file has {} bytes, dims require {}",
            payload.len(),
            header.dims.payload_bytes()
        )));
    }
    ResponseTensor::from_payload(header.dims, header.sample_times_ns, payload.to_vec(), header.metadata)
}

pub fn write_dataset(path: &Path, x: &ResponseTensor) -> Result<()> {
    fs::write(path, encode_dataset(x)?)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<ResponseTensor> {
    decode_dataset(&fs::read(path)?)
}

fn mode_name(mode: PairNormMode) -> &'static str {
    match mode {
        PairNormMode::PairCount => "pair-count",
        PairNormMode::PaperLiteral => "paper-literal",
    }
}

pub const STATS_COLUMNS: &str = "class,time_ns,mu_inter,mu_intra,delta_mu";

/// Per-class rows, then `mean` and `std` rows, then `t_opt` comment lines.
pub fn format_stats_table(st: &StatsSeries, mode: PairNormMode) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# mode={}", mode_name(mode));
    let _ = writeln!(out, "{STATS_COLUMNS}");
    for (s, c) in st.per_class.iter().enumerate() {
        for (t, time) in st.sample_times_ns.iter().enumerate() {
            let _ = writeln!(out, "{s},{time},{},{},{}", c.mu_inter[t], c.mu_intra[t], c.delta_mu[t]);
        }
    }
    let e = &st.ensemble;
    for (t, time) in st.sample_times_ns.iter().enumerate() {
        let _ = writeln!(out, "mean,{time},{},{},{}", e.mu_inter_mean[t], e.mu_intra_mean[t], e.delta_mu_mean[t]);
    }
    for (t, time) in st.sample_times_ns.iter().enumerate() {
        let _ = writeln!(out, "std,{time},{},{},{}", e.mu_inter_std[t], e.mu_intra_std[t], e.delta_mu_std[t]);
    }
    for (s, c) in st.per_class.iter().enumerate() {
        let _ = writeln!(
            out,
            "# t_opt class={s} time_ns={} delta_mu={}",
            st.sample_times_ns[c.t_opt_index], c.delta_mu[c.t_opt_index]
        );
    }
    let _ = writeln!(
        out,
        "# t_opt ensemble time_ns={} delta_mu={} mu_inter={} mu_intra={}",
        st.t_opt_ns(),
        e.delta_mu_mean[e.t_opt_index],
        e.mu_inter_mean[e.t_opt_index],
        e.mu_intra_mean[e.t_opt_index]
    );
    out
}

/// Per-class curves read back from a stats table.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsTable {
    pub sample_times_ns: Vec<f64>,
    pub mu_inter: Vec<Vec<f64>>,
    pub mu_intra: Vec<Vec<f64>>,
    pub delta_mu: Vec<Vec<f64>>,
}

impl StatsTable {
    pub fn series(&self, column: &str) -> Result<SeriesSet> {
        let per_class = match column {
            "mu_inter" => &self.mu_inter,
            "mu_intra" => &self.mu_intra,
            "delta_mu" => &self.delta_mu,
            other => return Err(Error::param(format!("unknown column {other}"))),
        };
        Ok(SeriesSet {
            sample_times_ns: self.sample_times_ns.clone(),
            per_class: per_class.clone(),
        })
    }
}

fn parse_f64(field: &str, line_no: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {line_no}: cannot parse `{field}` as a number")))
}

/// Reads the per-class rows of a stats table. Summary rows and comments are ignored,
/// so an external table needs only the header and per-class rows.
pub fn parse_stats_table(text: &str) -> Result<StatsTable> {
    let mut saw_header = false;
    let mut classes: Vec<(String, Vec<[f64; 4]>)> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line.replace(' ', "") != STATS_COLUMNS {
                return Err(Error::Format(format!("line {line_no}: expected header `{STATS_COLUMNS}`")));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!("line {line_no}: expected 5 columns")));
        }
        let class = fields[0].trim();
        if class == "mean" || class == "std" {
            continue;
        }
        class
            .parse::<usize>()
            .map_err(|_| Error::Format(format!("line {line_no}: bad class label `{class}`")))?;
        let row = [
            parse_f64(fields[1], line_no)?,
            parse_f64(fields[2], line_no)?,
            parse_f64(fields[3], line_no)?,
            parse_f64(fields[4], line_no)?,
        ];
        match classes.iter_mut().find(|(c, _)| c == class) {
            Some((_, rows)) => rows.push(row),
            None => classes.push((class.to_string(), vec![row])),
        }
    }
    if classes.is_empty() {
        return Err(Error::Format("stats table has no class rows".into()));
    }
    let times: Vec<f64> = classes[0].1.iter().map(|r| r[0]).collect();
    for (label, rows) in &classes {
        let t: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        if t != times {
            return Err(Error::Format(format!("class {label} uses a different time grid")));
        }
    }
    let column = |k: usize| classes.iter().map(|(_, rows)| rows.iter().map(|r| r[k]).collect()).collect();
    Ok(StatsTable {
        sample_times_ns: times,
        mu_inter: column(1),
        mu_intra: column(2),
        delta_mu: column(3),
    })
}

pub fn format_sweep_table(curve: &SweepCurve) -> String {
    let mut out = String::new();
    let other = match curve.knob {
        Knob::Sigma => "epsilon",
        Knob::Epsilon => "sigma",
    };
    let _ = writeln!(
        out,
        "# knob={} statistic={} {other}={} eval_time_ns={}",
        curve.knob.name(),
        curve.knob.statistic_name(),
        curve.fixed,
        curve.eval_time_ns
    );
    let _ = writeln!(out, "knob_value,statistic,std_err");
    for k in 0..curve.xs.len() {
        let _ = writeln!(out, "{},{},{}", curve.xs[k], curve.ys[k], curve.std_errs[k]);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub std_errs: Vec<f64>,
}

pub fn parse_sweep_table(text: &str) -> Result<SweepTable> {
    let mut table = SweepTable {
        xs: Vec::new(),
        ys: Vec::new(),
        std_errs: Vec::new(),
    };
    let mut saw_header = false;
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line.replace(' ', "") != "knob_value,statistic,std_err" {
                return Err(Error::Format(format!("line {line_no}: expected sweep header")));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Format(format!("line {line_no}: expected 3 columns")));
        }
        table.xs.push(parse_f64(fields[0], line_no)?);
        table.ys.push(parse_f64(fields[1], line_no)?);
        table.std_errs.push(parse_f64(fields[2], line_no)?);
    }
    if !saw_header {
        return Err(Error::Format("sweep table has no header".into()));
    }
    Ok(table)
}

pub const FIT_COLUMNS: &str = "A,B,C,std_A,std_B,std_C,residual_rms,converged,iterations";

/// The fit row followed by a blank line and an `x,y` curve sampled at `curve_points` points.
pub fn format_fit(fit: &FitResult, x_range: (f64, f64), curve_points: usize) -> String {
    let mut out = String::new();
    let p = fit.params;
    let _ = writeln!(out, "{FIT_COLUMNS}");
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{}",
        p.a, p.b, p.c, fit.std_errs[0], fit.std_errs[1], fit.std_errs[2], fit.residual_rms, fit.converged, fit.iterations
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "x,y");
    let n = curve_points.max(2);
    for k in 0..n {
        let x = x_range.0 + (x_range.1 - x_range.0) * k as f64 / (n - 1) as f64;
        let _ = writeln!(out, "{x},{}", p.eval(x));
    }
    out
}

pub fn format_z_report(times: &[f64], reports: &[(&str, ZReport)]) -> String {
    let mut out = String::new();
    let names: Vec<String> = reports.iter().map(|(n, _)| format!("z_{n}")).collect();
    let _ = writeln!(out, "time_ns,{}", names.join(","));
    for (t, time) in times.iter().enumerate() {
        let cells: Vec<String> = reports
            .iter()
            .map(|(_, r)| r.z[t].map_or_else(|| "undefined".to_string(), |v| v.to_string()))
            .collect();
        let _ = writeln!(out, "{time},{}", cells.join(","));
    }
    let rms: Vec<String> = reports.iter().map(|(n, r)| format!("{n}={}", r.z_rms)).collect();
    let _ = writeln!(out, "# z_rms {}", rms.join(" "));
    out
}
