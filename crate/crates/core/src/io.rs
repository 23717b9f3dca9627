//! File formats: moment tables, solver histories, density snapshots and
//! JSON manifests. Every file is written to a temporary sibling and renamed
//! into place.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{CslError, Result};
use crate::estimators::{EnsembleMoments, MomentRow};
use crate::fokker_planck::{FPEState, PhaseMoments};

/// Build version, `git describe` style when the source tree is a checkout.
pub const VERSION: &str = env!("CSL_BUILD_VERSION");

pub const MOMENTS_SCHEMA: &str = "# csl-diffusion moments v1";
pub const MOMENTS_HEADER: [&str; 9] = [
    "t", "mean_x", "var_x", "mean_p", "var_p", "cov_xp", "se_var_x", "se_var_p", "n_alive",
];
pub const FPE_SCHEMA: &str = "# csl-diffusion fpe-moments v1";
pub const NOISE_SCHEMA: &str = "# csl-diffusion noise-verify v1";
pub const PLOT_SCHEMA: &str = "# csl-diffusion plot-data v1";

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| CslError::Config(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CslError::Config(format!("json: {e}")))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

/// Renders a CSV with a schema comment line and a header row.
pub fn render_csv(schema: &str, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(schema);
    out.push('\n');
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn moments_to_csv(m: &EnsembleMoments) -> String {
    let rows: Vec<Vec<String>> = m
        .rows
        .iter()
        .map(|r| {
            vec![
                num(r.t),
                num(r.mean_x),
                num(r.var_x),
                num(r.mean_p),
                num(r.var_p),
                num(r.cov_xp),
                num(r.se_var_x),
                num(r.se_var_p),
                r.n_alive.to_string(),
            ]
        })
        .collect();
    render_csv(MOMENTS_SCHEMA, &MOMENTS_HEADER, &rows)
}

fn parse_err(line: usize, msg: impl Into<String>) -> CslError {
    CslError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parses a moments CSV; errors report 1-based file line numbers.
pub fn moments_from_csv(text: &str) -> Result<EnsembleMoments> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?
        .clone();
    let header_line = text
        .lines()
        .position(|l| !l.trim_start().starts_with('#'))
        .map_or(1, |i| i + 1);
    let cols: Vec<usize> = MOMENTS_HEADER
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| parse_err(header_line, format!("missing column {name}")))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec
            .map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |k: usize| -> Result<f64> {
            let raw = rec.get(cols[k]).unwrap_or("");
            raw.parse::<f64>().map_err(|_| {
                parse_err(
                    line,
                    format!("column {}: cannot parse {raw:?}", MOMENTS_HEADER[k]),
                )
            })
        };
        let n_raw = rec.get(cols[8]).unwrap_or("");
        rows.push(MomentRow {
            t: field(0)?,
            mean_x: field(1)?,
            var_x: field(2)?,
            mean_p: field(3)?,
            var_p: field(4)?,
            cov_xp: field(5)?,
            se_var_x: field(6)?,
            se_var_p: field(7)?,
            n_alive: n_raw
                .parse()
                .map_err(|_| parse_err(line, format!("column n_alive: cannot parse {n_raw:?}")))?,
        });
    }
    Ok(EnsembleMoments { rows })
}

pub fn read_moments(path: &Path) -> Result<EnsembleMoments> {
    moments_from_csv(&std::fs::read_to_string(path)?)
}

pub fn fpe_moments_to_csv(m: &[PhaseMoments]) -> String {
    let rows: Vec<Vec<String>> = m
        .iter()
        .map(|r| {
            vec![
                num(r.t),
                num(r.mean_x),
                num(r.var_x),
                num(r.var_p),
                num(r.cov_xp),
                num(r.mass),
            ]
        })
        .collect();
    render_csv(
        FPE_SCHEMA,
        &["t", "mean_x", "var_x", "var_p", "cov_xp", "mass"],
        &rows,
    )
}

/// Plain-text matrix: one header line, then one row of `n_p` values per x cell.
pub fn density_to_text(s: &FPEState) -> String {
    let g = &s.grid;
    let mut out = format!(
        "# t={} n_x={} n_p={} x=[{},{}] p=[{},{}]\n",
        s.t, g.n_x, g.n_p, g.x_min, g.x_max, g.p_min, g.p_max
    );
    for i in 0..g.n_x {
        let row: Vec<String> = (0..g.n_p).map(|j| num(s.at(i, j))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EnsembleMoments {
        EnsembleMoments {
            rows: (0..5)
                .map(|i| MomentRow {
                    t: 0.1 * i as f64,
                    mean_x: 1.0 / 3.0,
                    var_x: 2.0f64.sqrt() * i as f64,
                    mean_p: -1e-17,
                    var_p: 1e300,
                    cov_xp: 0.0,
                    se_var_x: 0.5,
                    se_var_p: f64::NAN,
                    n_alive: 10 - i,
                })
                .collect(),
        }
    }

    #[test]
    fn moments_csv_round_trip_is_exact() {
        let m = sample();
        let text = moments_to_csv(&m);
        assert!(text.starts_with(MOMENTS_SCHEMA));
        let back = moments_from_csv(&text).unwrap();
        assert_eq!(back.rows.len(), 5);
        for (a, b) in m.rows.iter().zip(&back.rows) {
            assert_eq!(a.var_x.to_bits(), b.var_x.to_bits());
            assert_eq!(a.mean_x.to_bits(), b.mean_x.to_bits());
            assert!(b.se_var_p.is_nan());
            assert_eq!(a.n_alive, b.n_alive);
        }
    }

    #[test]
    fn malformed_csv_reports_line() {
        let mut text = moments_to_csv(&sample());
        text = text.replacen("0.5,NaN,8", "0.5,oops,8", 1);
        match moments_from_csv(&text) {
            Err(CslError::Parse { line, msg }) => {
                assert_eq!(line, 5, "{msg}");
                assert!(msg.contains("se_var_p"));
            }
            other => panic!("{other:?}"),
        }
        match moments_from_csv("t,mean_x\n1,2\n") {
            Err(CslError::Parse { line: 1, msg }) => assert!(msg.contains("var_x")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.txt");
        atomic_write(&path, b"one").unwrap();
        atomic_write(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        let entries: Vec<_> = std::fs::read_dir(path.parent().unwrap()).unwrap().collect();
        assert_eq!(entries.len(), 1);
    }
}
