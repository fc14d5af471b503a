//! Deterministic artifact emission: pass/fail check lines, Monte-Carlo
//! estimate rows, `report.json`, and digest-stamped CSV tables. Identical
//! effective configurations produce byte-identical artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::PathBuf;

use riesz_lab::rational::{to_f64, Rat};
use serde::Serialize;

/// One verified statement: its identifier, outcome, and a human line.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// One Monte-Carlo estimate next to its oracle.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateRow {
    pub target: String,
    pub mean: f64,
    pub n: u64,
    pub ci99: f64,
    pub oracle: f64,
    pub pass: bool,
}

#[derive(Serialize)]
struct Report<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    config_sha256: &'a str,
    effective_config: &'a BTreeMap<String, String>,
    checks: &'a [Check],
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    estimates: &'a [EstimateRow],
    failures: Vec<&'a str>,
    pass: bool,
}

/// Collects checks, estimates and tables while a runner executes, then
/// writes `report.json` and `tables/*.csv` under the output directory,
/// each stamped with the digest of the effective configuration.
pub struct Artifacts {
    out_dir: PathBuf,
    pub checks: Vec<Check>,
    pub estimates: Vec<EstimateRow>,
    tables: Vec<(String, String, Vec<String>)>,
}

impl Artifacts {
    pub fn new(out_dir: PathBuf) -> Self {
        Artifacts { out_dir, checks: Vec::new(), estimates: Vec::new(), tables: Vec::new() }
    }

    /// Records one check and echoes it; returns `pass` for chaining.
    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) -> bool {
        let detail = detail.into();
        println!("[{}] {name} — {detail}", if pass { "PASS" } else { "FAIL" });
        self.checks.push(Check { name: name.to_string(), pass, detail });
        pass
    }

    /// Records one estimate row and mirrors it as a check.
    pub fn estimate(&mut self, row: EstimateRow) {
        let detail = format!(
            "mean {:.6} vs oracle {:.6} (n = {}, ci99 = {:.2e})",
            row.mean, row.oracle, row.n, row.ci99
        );
        println!("[{}] {} — {detail}", if row.pass { "PASS" } else { "FAIL" }, row.target);
        self.checks.push(Check { name: row.target.clone(), pass: row.pass, detail });
        self.estimates.push(row);
    }

    /// Queues a CSV table; `rows` are complete comma-joined lines.
    pub fn table(&mut self, name: &str, header: &str, rows: Vec<String>) {
        self.tables.push((name.to_string(), header.to_string(), rows));
    }

    /// Writes every artifact and reports whether all checks passed.
    pub fn finish(
        self,
        subcommand: &str,
        effective: &BTreeMap<String, String>,
    ) -> io::Result<bool> {
        let sha256 = crate::config::digest(subcommand, effective);
        let failures: Vec<&str> =
            self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        let pass = failures.is_empty();
        let report = Report {
            tool: "riesz-lab",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config_sha256: &sha256,
            effective_config: effective,
            checks: &self.checks,
            estimates: &self.estimates,
            failures,
            pass,
        };
        let tables_dir = self.out_dir.join("tables");
        fs::create_dir_all(&tables_dir)?;
        for (name, header, rows) in &self.tables {
            let mut content = format!("# config_sha256 = {sha256}\n{header}\n");
            for row in rows {
                content.push_str(row);
                content.push('\n');
            }
            fs::write(tables_dir.join(name), content)?;
        }
        let path = self.out_dir.join("report.json");
        let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
        json.push('\n');
        fs::write(&path, json)?;
        println!("report: {}", path.display());
        Ok(pass)
    }
}

/// The three-column exact-plus-decimal rendering of a rational:
/// `numerator,denominator,decimal`.
pub fn rat_cols(x: &Rat) -> String {
    format!("{},{},{}", x.numer(), x.denom(), to_f64(x))
}
