//! Plot-ready series from a result table.
//!
//! Each file holds whitespace-separated `x y stderr` lines. Scalar metrics
//! become one file per protocol label with the swept parameter on the x
//! axis; `active` series become one file per threshold with rounds on the
//! x axis; `forms` adds one overlay file per bound form and label.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::{Error, Row};

/// Selections understood besides plain metric names.
pub const ACTIVE: &str = "active";
pub const FORMS: &str = "forms";
pub const DEFAULT_SELECTION: [&str; 3] = ["delay_mean", ACTIVE, FORMS];

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            ':' => '-',
            '~' => '_',
            c if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') => c,
            _ => '_',
        })
        .collect()
}

fn axis(row: &Row, name: &str) -> f64 {
    match name {
        "t" => row.t as f64,
        "ell" => row.ell.unwrap_or(0) as f64,
        "fan_out" => row.fan_out as f64,
        "alpha" => row.alpha as f64,
        _ => row.n as f64,
    }
}

/// The first of n, t, ℓ, fan-out that takes more than one value.
fn swept_axis(rows: &[&Row]) -> &'static str {
    for name in ["n", "t", "ell", "fan_out"] {
        let first = rows.first().map(|r| axis(r, name));
        if rows.iter().any(|r| Some(axis(r, name)) != first) {
            return name;
        }
    }
    "n"
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "0".to_string(), |v| v.to_string())
}

/// Writes series files for `selection` into `dir` and returns their paths
/// in creation order. An empty selection writes nothing.
pub fn emit_plot_data(rows: &[Row], dir: &Path, selection: &[String]) -> Result<Vec<PathBuf>, Error> {
    if selection.is_empty() {
        log::warn!("no metrics selected; nothing to write");
        return Ok(Vec::new());
    }
    let mut files: BTreeMap<String, String> = BTreeMap::new();
    let mut by_experiment: BTreeMap<&str, Vec<&Row>> = BTreeMap::new();
    for r in rows {
        by_experiment.entry(&r.experiment).or_default().push(r);
    }
    let selected = |m: &str| selection.iter().any(|s| s == m);

    for (exp, rows) in &by_experiment {
        if selected(ACTIVE) {
            for r in rows.iter().filter(|r| r.metric.starts_with("active@")) {
                let round = &r.metric["active@".len()..];
                let name = format!("{exp}_active_{}_t{}.dat", file_safe(&r.protocol), r.t);
                let _ = writeln!(files.entry(name).or_default(), "{round} {} {}", r.value, fmt_opt(r.stderr));
            }
        }
        let scalar: Vec<&Row> = rows.iter().copied().filter(|r| !r.metric.starts_with("active@")).collect();
        let x = swept_axis(&scalar);
        for r in &scalar {
            let wanted = selected(&r.metric) || (selected(FORMS) && r.metric.starts_with("form_"));
            if !wanted {
                continue;
            }
            let name = format!("{exp}_{}_{}.dat", r.metric, file_safe(&r.protocol));
            let _ = writeln!(files.entry(name).or_default(), "{} {} {}", axis(r, x), r.value, fmt_opt(r.stderr));
        }
    }

    if files.is_empty() {
        log::warn!("selection {selection:?} matched no rows; nothing to write");
        return Ok(Vec::new());
    }
    fs::create_dir_all(dir)?;
    let mut out = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body)?;
        out.push(path);
    }
    Ok(out)
}
