//! CSV and JSON emission. All files are written to a temporary sibling and
//! renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use horizon_cert::estimation::write_gamma_csv;

use crate::error::{CliError, CliResult};
use crate::pipeline::{CertificationReport, ReportRow};

pub const REPORT_HEADER: &str = "param,method,terminal,alpha,n_min,provenance";

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

/// One line per row. The σ path is appended to the parameter label as
/// `;sigma=<path>`. Failed rows keep their slot with empty values and
/// provenance `error`; the message is in the JSON sidecar.
pub fn write_rows_csv<W: Write>(mut w: W, rows: &[ReportRow]) -> std::io::Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in rows {
        let provenance = match (&r.error, r.provenance) {
            (Some(_), _) => "error".to_string(),
            (None, Some(p)) => p.to_string(),
            (None, None) => "given".to_string(),
        };
        writeln!(
            w,
            "{};sigma={},{},{},{},{},{}",
            r.param,
            r.sigma.label(),
            r.method,
            r.terminal,
            num(r.alpha),
            num(r.n_min),
            provenance
        )?;
    }
    Ok(())
}

pub fn rows_csv(rows: &[ReportRow]) -> String {
    let mut buf = Vec::new();
    write_rows_csv(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn json<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

/// report.csv, report.json, one trace CSV and JSON per simulated design and
/// the LP dumps. Returns the written paths in order.
pub fn emit_reports(report: &CertificationReport, dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> CliResult<()> {
        let path = dir.join(name);
        write_atomic(&path, &bytes)?;
        written.push(path);
        Ok(())
    };
    if !report.rows.is_empty() {
        put("report.csv".into(), rows_csv(&report.rows).into_bytes())?;
    }
    put("report.json".into(), json(report))?;
    for sim in &report.simulations {
        if let (Some(trace), Some(meta)) = (&sim.trace, &sim.meta) {
            let mut buf = Vec::new();
            trace.write_csv(&mut buf).expect("writing to memory");
            put(format!("trace_{}.csv", sim.name), buf)?;
            put(format!("trace_{}.json", sim.name), json(meta))?;
        }
    }
    for dump in &report.lp_dumps {
        put(
            format!("lp/{}", dump.file_name),
            dump.text.clone().into_bytes(),
        )?;
    }
    Ok(written)
}

/// gamma_<sigma>.csv per path and gamma_<sigma>_<terminal>.csv holding
/// γ_{k,f} for each terminal cost.
pub fn emit_gamma(report: &CertificationReport, dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    for snap in &report.snapshots {
        let Some(provenance) = snap.provenance else {
            continue;
        };
        let mode = snap.sigma.label();
        let (name, gamma) = match (&snap.terminal_constants, &snap.constants) {
            (Some(t), _) => (format!("gamma_{mode}_{}.csv", snap.terminal), &t.gamma_f),
            (None, Some(c)) if snap.terminal == "none" => (format!("gamma_{mode}.csv"), &c.gamma),
            _ => continue,
        };
        let mut buf = Vec::new();
        write_gamma_csv(&mut buf, gamma, mode, provenance).expect("writing to memory");
        let path = dir.join(name);
        write_atomic(&path, &buf)?;
        written.push(path);
    }
    let path = dir.join("constants.json");
    write_atomic(&path, &json(report))?;
    written.push(path);
    Ok(written)
}
