//! CSV and JSON result files, per-user CDFs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::SCHEMA_VERSION;
use crate::error::{io_err, Result, SimError};
use crate::experiment::{ResultRecord, TrajectoryRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

pub const CSV_HEADER: [&str; 8] = ["sweep_axis", "sweep_value", "pa", "combiner", "power", "statistic", "value", "std_err"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub sweep_axis: String,
    pub sweep_value: f64,
    pub pa: String,
    pub combiner: String,
    pub power: String,
    pub statistic: String,
    pub value: f64,
    pub std_err: Option<f64>,
}

/// JSON document of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub schema_version: u32,
    pub records: Vec<ResultRecord>,
}

/// Statistic rows of one record.
pub fn csv_rows(r: &ResultRecord) -> Vec<CsvRow> {
    let row = |statistic: &str, value: f64, std_err: Option<f64>| CsvRow {
        sweep_axis: r.sweep_axis.clone(),
        sweep_value: r.sweep_value,
        pa: r.pa.clone(),
        combiner: r.combiner.clone(),
        power: r.power.clone(),
        statistic: statistic.into(),
        value,
        std_err,
    };
    let mut rows = vec![row("sum_se_per_cell", r.sum_se_per_cell, Some(r.sum_se_std_err))];
    if let Some(se) = r.sum_se_drop_std_err {
        rows.push(row("sum_se_per_cell_by_drop", r.sum_se_per_cell, Some(se)));
    }
    if !r.per_user_se.is_empty() {
        let mut s = r.per_user_se.clone();
        s.sort_by(f64::total_cmp);
        rows.push(row("user_se_mean", s.iter().sum::<f64>() / s.len() as f64, None));
        rows.push(row("user_se_p05", quantile(&s, 0.05), None));
        rows.push(row("user_se_min", s[0], None));
    }
    if let Some(v) = r.det_sum_se_per_cell {
        rows.push(row("det_sum_se_per_cell", v, None));
    }
    if let Some(v) = r.det_gap {
        rows.push(row("det_mc_sinr_gap", v, None));
    }
    rows.push(row("exchange_per_bs", r.exchange_per_bs, None));
    rows
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, f) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Writes `records` to `path` as statistic rows (CSV) or the full records (JSON).
pub fn emit_results(records: &[ResultRecord], path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            let rows: Vec<CsvRow> = records.iter().flat_map(csv_rows).collect();
            write_csv(path, &CSV_HEADER, &rows)
        }
        Format::Json => {
            let mut w = create(path)?;
            let doc = ResultsFile { schema_version: SCHEMA_VERSION, records: records.to_vec() };
            serde_json::to_writer_pretty(&mut w, &doc)?;
            w.write_all(b"\n").map_err(io_err(path))?;
            w.flush().map_err(io_err(path))?;
            Ok(())
        }
    }
}

pub fn read_results_json(path: &Path) -> Result<ResultsFile> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub sweep_value: f64,
    pub pa: String,
    pub combiner: String,
    pub power: String,
    pub se: f64,
    pub cdf: f64,
}

pub const CDF_HEADER: [&str; 6] = ["sweep_value", "pa", "combiner", "power", "se", "cdf"];

/// Empirical CDF of the per-user SE of every record, at `points` equispaced
/// values between the smallest and largest sample (every sorted sample when
/// `points` is 0).
pub fn per_user_cdf(records: &[ResultRecord], points: usize) -> Result<Vec<CdfRow>> {
    if records.is_empty() {
        return Err(SimError::Config("no records to build a CDF from".into()));
    }
    let mut out = Vec::new();
    for r in records {
        if r.per_user_se.is_empty() {
            return Err(SimError::Config(format!("record {}/{}/{} has no per-user samples", r.pa, r.combiner, r.power)));
        }
        let mut s = r.per_user_se.clone();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        let row = |se: f64, cdf: f64| CdfRow {
            sweep_value: r.sweep_value,
            pa: r.pa.clone(),
            combiner: r.combiner.clone(),
            power: r.power.clone(),
            se,
            cdf,
        };
        let (lo, hi) = (s[0], s[s.len() - 1]);
        if points == 0 {
            out.extend(s.iter().enumerate().map(|(i, &x)| row(x, (i + 1) as f64 / n)));
        } else if hi == lo || points == 1 {
            out.push(row(hi, 1.0));
        } else {
            for i in 0..points {
                let x = if i + 1 == points { hi } else { lo + (hi - lo) * i as f64 / (points - 1) as f64 };
                let count = s.partition_point(|&v| v <= x);
                out.push(row(x, count as f64 / n));
            }
        }
    }
    Ok(out)
}

pub fn write_cdf(rows: &[CdfRow], path: &Path) -> Result<()> {
    write_csv(path, &CDF_HEADER, rows)
}

pub const TRAJECTORY_HEADER: [&str; 7] = ["sweep_value", "pa", "power", "stage", "iteration", "objective", "residual"];

pub fn write_trajectories(rows: &[TrajectoryRow], path: &Path) -> Result<()> {
    write_csv(path, &TRAJECTORY_HEADER, rows)
}

#[derive(Serialize)]
struct TimingRow<'a> {
    sweep_value: f64,
    pa: &'a str,
    combiner: &'a str,
    power: &'a str,
    wall_clock_s: f64,
}

/// Wall-clock seconds per record; kept apart from the deterministic result files.
pub fn write_timing(records: &[ResultRecord], path: &Path) -> Result<()> {
    let rows: Vec<TimingRow> = records
        .iter()
        .map(|r| TimingRow {
            sweep_value: r.sweep_value,
            pa: &r.pa,
            combiner: &r.combiner,
            power: &r.power,
            wall_clock_s: r.wall_clock_s,
        })
        .collect();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &rows)?;
    w.flush().map_err(io_err(path))?;
    Ok(())
}
