use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::experiments::{Experiment, RunOutput, Setup, Table};

pub const UNITS: &str = "hbar = m = 1; energies and temperatures in units of omega (k_B = 1); time in units of 1/omega";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        write!(s, "{b:02x}").expect("writing to a String cannot fail");
    }
    s
}

/// Shortest round-trip form; exponent notation outside `[1e-4, 1e15)`.
fn cell(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

pub fn render_csv(table: &Table) -> String {
    let mut s = format!("# {}\n{}\n", table.units, table.columns.join(","));
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|&v| cell(v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

#[derive(Debug, Serialize)]
pub struct WrittenFile {
    pub file: String,
    pub sha256: String,
}

pub fn write_tables(dir: &Path, tables: &[Table]) -> std::io::Result<Vec<WrittenFile>> {
    fs::create_dir_all(dir)?;
    tables
        .iter()
        .map(|t| {
            let text = render_csv(t);
            let file = format!("{}.csv", t.name);
            fs::write(dir.join(&file), &text)?;
            Ok(WrittenFile {
                file,
                sha256: sha256_hex(text.as_bytes()),
            })
        })
        .collect()
}

pub fn config_hash(config: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    sha256_hex(canonical.as_bytes())
}

/// Provenance document; deterministic (sorted keys, no timestamps).
pub fn provenance(exp: Experiment, setup: &Setup, out: &RunOutput, files: &[WrittenFile]) -> Value {
    let b = &setup.basis;
    json!({
        "experiment": exp.name(),
        "description": exp.description(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": setup.config,
        "config_sha256": config_hash(&setup.config),
        "matter": {
            "spec": setup.spec,
            "levels": b.levels(),
            "omega0": b.omega0(),
            "omega1": b.omega1(),
            "anharmonicity": b.anharmonicity(),
            "x10": b.x10(),
        },
        "cutoffs": out.cutoffs,
        "convergence": out.convergence,
        "trajectory_checks": out.trajectory_checks,
        "tolerances": setup.config.tolerances,
        "units": UNITS,
        "outputs": files,
    })
}

pub fn write_provenance(dir: &Path, exp: Experiment, doc: &Value) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(doc).expect("provenance serializes");
    fs::write(dir.join(format!("{}.provenance.json", exp.name())), text + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn csv_layout() {
        let t = Table {
            name: "t".into(),
            units: "u".into(),
            columns: vec!["a".into(), "b".into()],
            rows: vec![vec![0.5, f64::NAN], vec![1.5e-30, -0.0]],
        };
        assert_eq!(render_csv(&t), "# u\na,b\n0.5,NaN\n1.5e-30,-0\n");
    }
}
