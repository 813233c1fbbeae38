//! Plain-text sweep tables and run manifests.
//!
//! A table is a `#`-prefixed header (format version, axis, master seed and
//! the configuration as TOML) followed by CSV rows with the columns in
//! [`COLUMNS`]. Reals carry 12 significant digits, so a loaded table saves
//! back to identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::sweep::{Series, SeriesPoint, SweepResult};
use super::trial::to_hex;
use crate::config::SystemConfig;
use crate::error::{Error, Result};

pub const FORMAT_LINE: &str = "# pgi-sweep v1";
pub const COLUMNS: [&str; 6] = ["axis_value", "scheme", "mean_sum_rate", "ci95", "trials", "failed_trials"];
const CONFIG_PREFIX: &str = "# config: ";

fn real(x: f64) -> String {
    format!("{x:.11e}")
}

/// Serializes `result` to the table format.
pub fn to_table_string(result: &SweepResult) -> Result<String> {
    result.check()?;
    let mut head = format!("{FORMAT_LINE}\n# axis={}\n# master_seed={}\n", result.axis_name, result.master_seed);
    for line in result.config.to_toml_string().lines() {
        head.push_str(CONFIG_PREFIX);
        head.push_str(line);
        head.push('\n');
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS).map_err(csv_err)?;
    for (i, &v) in result.axis_values.iter().enumerate() {
        for s in &result.series {
            let p = s.points[i];
            w.write_record([
                real(v),
                s.scheme.clone(),
                real(p.mean),
                real(p.ci95),
                p.trials.to_string(),
                p.failed_trials.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| Error::Schema(e.to_string()))?)
        .expect("csv output of UTF-8 fields");
    Ok(head + &body)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Schema(e.to_string())
}

/// Parses the table format.
pub fn from_table_str(text: &str) -> Result<SweepResult> {
    let mut lines = text.lines();
    match lines.next() {
        Some(FORMAT_LINE) => {}
        Some(other) => return Err(Error::Schema(format!("unsupported format line `{other}`"))),
        None => return Err(Error::Schema("empty table".into())),
    }
    let mut axis_name = None;
    let mut master_seed = None;
    let mut config_text = String::new();
    let mut body_start = text.len();
    let mut offset = FORMAT_LINE.len() + 1;
    for line in lines {
        if let Some(rest) = line.strip_prefix(CONFIG_PREFIX) {
            config_text.push_str(rest);
            config_text.push('\n');
        } else if let Some(rest) = line.strip_prefix("# axis=") {
            axis_name = Some(rest.to_string());
        } else if let Some(rest) = line.strip_prefix("# master_seed=") {
            master_seed = Some(rest.parse::<u64>().map_err(|e| Error::Schema(format!("master_seed: {e}")))?);
        } else if !line.starts_with('#') {
            body_start = offset;
            break;
        }
        offset += line.len() + 1;
    }
    let axis_name = axis_name.ok_or_else(|| Error::Schema("missing axis header".into()))?;
    let master_seed = master_seed.ok_or_else(|| Error::Schema("missing master_seed header".into()))?;
    let config = SystemConfig::from_toml_str(&config_text)
        .map_err(|e| Error::Schema(format!("embedded config: {e}")))?;

    let mut reader = csv::Reader::from_reader(text.get(body_start..).unwrap_or("").as_bytes());
    let headers = reader.headers().map_err(csv_err)?.clone();
    let mut index = [0usize; 6];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
    }
    let mut axis_values: Vec<f64> = Vec::new();
    let mut series: Vec<Series> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let field = |c: usize| record.get(index[c]).ok_or_else(|| Error::Schema(format!("row {row} is short")));
        let num = |c: usize| -> Result<f64> {
            field(c)?.parse().map_err(|e| Error::Schema(format!("row {row}, {}: {e}", COLUMNS[c])))
        };
        let count = |c: usize| -> Result<usize> {
            field(c)?.parse().map_err(|e| Error::Schema(format!("row {row}, {}: {e}", COLUMNS[c])))
        };
        let v = num(0)?;
        let vi = match axis_values.iter().position(|&x| x.to_bits() == v.to_bits()) {
            Some(i) => i,
            None => {
                axis_values.push(v);
                axis_values.len() - 1
            }
        };
        let scheme = field(1)?;
        let si = match series.iter().position(|s| s.scheme == scheme) {
            Some(i) => i,
            None => {
                series.push(Series { scheme: scheme.to_string(), points: Vec::new() });
                series.len() - 1
            }
        };
        if series[si].points.len() != vi {
            return Err(Error::Schema(format!("row {row}: scheme `{scheme}` rows out of axis order")));
        }
        series[si].points.push(SeriesPoint {
            mean: num(2)?,
            ci95: num(3)?,
            trials: count(4)?,
            failed_trials: count(5)?,
        });
    }
    if series.is_empty() {
        return Err(Error::Schema("table has no rows".into()));
    }
    let result = SweepResult { axis_name, axis_values, series, config, master_seed };
    result.check()?;
    Ok(result)
}

/// Writes `result` to `path`.
pub fn save(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_table_string(result)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<SweepResult> {
    from_table_str(&fs::read_to_string(path)?)
}

/// Git-style content digest: SHA-256 of `blob <len>\0<content>`.
pub fn content_digest(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    to_hex(&h.finalize())
}

/// Conventional table file name inside an output directory.
pub fn table_file_name(axis_name: &str) -> String {
    format!("sweep_{axis_name}.csv")
}

/// Saves the table into `dir` and writes `manifest.txt` next to it.
///
/// The manifest records the seed, the sweep request, a digest of the
/// inputs (config plus request) and one of the table itself.
pub fn write_manifest(dir: impl AsRef<Path>, result: &SweepResult, trials: usize) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let table_path = dir.join(table_file_name(&result.axis_name));
    let table = to_table_string(result)?;
    fs::write(&table_path, &table)?;
    let values: Vec<String> = result.axis_values.iter().map(|v| v.to_string()).collect();
    let config = result.config.to_toml_string();
    let request = format!(
        "axis={}\nvalues={}\ntrials={trials}\nmaster_seed={}\n",
        result.axis_name,
        values.join(","),
        result.master_seed
    );
    let inputs = format!("{request}{config}");
    let manifest = format!(
        "# pgi-run-manifest v1\n{request}table={}\ntable_digest=sha256:{}\ninput_digest=sha256:{}\n[config]\n{config}",
        table_file_name(&result.axis_name),
        content_digest(table.as_bytes()),
        content_digest(inputs.as_bytes()),
    );
    let manifest_path = dir.join("manifest.txt");
    fs::write(&manifest_path, manifest)?;
    Ok((table_path, manifest_path))
}
