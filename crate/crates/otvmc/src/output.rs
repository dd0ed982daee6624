//! CSV persistence of observable time series.
//!
//! One row per recorded time; floating point is serialized with 17
//! significant digits so a write/read round trip is lossless. The same
//! schema is shared by the simulator, the oracles, and `compare`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::observables::ObservableRecord;

/// Column order of the ensemble CSV. Covariance entries are the upper
/// triangle in row-major order, each followed by its standard error.
pub const CSV_COLUMNS: [&str; 22] = [
    "t", "Mx", "Mx_err", "My", "My_err", "Mz", "Mz_err", "Cxx", "Cxx_err", "Cxy", "Cxy_err",
    "Cxz", "Cxz_err", "Cyy", "Cyy_err", "Cyz", "Cyz_err", "Czz", "Czz_err", "xi2", "xi2_err",
    "n_traj",
];

/// Index pairs of the upper covariance triangle, in column order.
pub const UPPER_TRIANGLE: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

pub fn records_to_csv(records: &[ObservableRecord]) -> String {
    let mut out = String::with_capacity(64 + records.len() * 512);
    out.push_str(&CSV_COLUMNS.join(","));
    out.push('\n');
    for r in records {
        let mut fields: Vec<String> = Vec::with_capacity(CSV_COLUMNS.len());
        fields.push(format!("{:.16e}", r.t));
        for i in 0..3 {
            fields.push(format!("{:.16e}", r.m[i]));
            fields.push(format!("{:.16e}", r.m_err[i]));
        }
        for (i, j) in UPPER_TRIANGLE {
            fields.push(format!("{:.16e}", r.c[i][j]));
            fields.push(format!("{:.16e}", r.c_err[i][j]));
        }
        fields.push(format!("{:.16e}", r.xi2));
        fields.push(format!("{:.16e}", r.xi2_err));
        fields.push(r.n_traj.to_string());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<ObservableRecord>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV".into()))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names != CSV_COLUMNS {
        return Err(Error::Parse(format!(
            "unexpected CSV header: {header:?}"
        )));
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != CSV_COLUMNS.len() {
            return Err(Error::Parse(format!(
                "line {}: expected {} fields, got {}",
                lineno + 2,
                CSV_COLUMNS.len(),
                fields.len()
            )));
        }
        let num = |k: usize| -> Result<f64> {
            fields[k].parse::<f64>().map_err(|e| {
                Error::Parse(format!("line {}: field {}: {e}", lineno + 2, CSV_COLUMNS[k]))
            })
        };
        let mut m = [0.0; 3];
        let mut m_err = [0.0; 3];
        for i in 0..3 {
            m[i] = num(1 + 2 * i)?;
            m_err[i] = num(2 + 2 * i)?;
        }
        let mut c = [[0.0; 3]; 3];
        let mut c_err = [[0.0; 3]; 3];
        for (k, (i, j)) in UPPER_TRIANGLE.iter().enumerate() {
            let v = num(7 + 2 * k)?;
            let e = num(8 + 2 * k)?;
            c[*i][*j] = v;
            c[*j][*i] = v;
            c_err[*i][*j] = e;
            c_err[*j][*i] = e;
        }
        records.push(ObservableRecord {
            t: num(0)?,
            m,
            m_err,
            c,
            c_err,
            xi2: num(19)?,
            xi2_err: num(20)?,
            n_traj: fields[21].parse::<usize>().map_err(|e| {
                Error::Parse(format!("line {}: field n_traj: {e}", lineno + 2))
            })?,
        });
    }
    Ok(records)
}

/// Writes atomically: the content lands in a sibling temp file first and is
/// renamed into place, so readers never observe a partial table.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp_path = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp_path, content)?;
    std::fs::rename(&tmp_path, path)?;
    Ok(())
}

pub fn write_records_csv(path: &Path, records: &[ObservableRecord]) -> Result<()> {
    write_atomic(path, &records_to_csv(records))
}

pub fn read_records_csv(path: &Path) -> Result<Vec<ObservableRecord>> {
    parse_csv(&std::fs::read_to_string(path)?)
}
