//! Artifacts: CSV tables, JSON side files, checks and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Format a double with 17 significant digits (round-trip exact).
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// A pass/fail check with the measured value and its target.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable target, e.g. `|x − 2π| ≤ 1e-8`.
    pub target: String,
    pub pass: bool,
    /// Non-gating checks are reported but never change the exit code.
    pub gating: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, target: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            value,
            target: target.into(),
            pass,
            gating: true,
        }
    }

    /// `|value − expected| ≤ tol`.
    pub fn close(name: impl Into<String>, value: f64, expected: f64, tol: f64) -> Self {
        let pass = (value - expected).abs() <= tol;
        Self::new(name, value, format!("{} ± {tol:e}", num(expected)), pass)
    }

    /// `value ≤ bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(name, value, format!("≤ {bound:e}"), value <= bound)
    }

    /// `value ≥ bound`.
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(name, value, format!("≥ {bound:e}"), value >= bound)
    }

    /// A boolean property; the value column is `1` or `0`.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, "true", ok)
    }

    pub fn non_gating(mut self) -> Self {
        self.gating = false;
        self
    }

    pub fn line(&self) -> String {
        let mark = match (self.pass, self.gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "note",
        };
        format!(
            "[{mark}] {:<44} {:>24}   target {}",
            self.name,
            num(self.value),
            self.target
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Collects files written into one output directory.
#[derive(Debug)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub files: Vec<OutputFile>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Record a file that was written into the directory by other means.
    pub fn register(&mut self, name: &str) -> Result<()> {
        let bytes = fs::read(self.path(name)).with_context(|| format!("reading back {name}"))?;
        self.files.retain(|f| f.path != name);
        self.files.push(OutputFile {
            path: name.to_string(),
            sha256: hex(&Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Write an RFC 4180 table; numbers go through [`num`].
    pub fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let path = self.path(name);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_path(&path)
            .with_context(|| format!("creating {}", path.display()))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        drop(w);
        self.register(name)
    }

    pub fn json(&mut self, name: &str, value: &Value) -> Result<()> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value)? + "\n";
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.register(name)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// Everything a subcommand produced.
#[derive(Debug)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub artifacts: Artifacts,
    /// Extra fields merged into the manifest under `"results"`.
    pub results: Value,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.gating).all(|c| c.pass)
    }
}

pub struct ManifestInput<'a> {
    pub command: &'a str,
    pub argv: &'a [String],
    pub config: &'a Value,
    pub threads: usize,
    pub wall: Duration,
    pub error: Option<String>,
}

/// Write `manifest.json`; it lists every other file with its hash.
pub fn write_manifest(out: &Outcome, m: &ManifestInput) -> Result<()> {
    let status = if m.error.is_none() && out.passed() {
        "pass"
    } else {
        "fail"
    };
    let doc = json!({
        "tool": "bubbletree",
        "command": m.command,
        "argv": m.argv,
        "versions": {
            "bubbletree-cli": env!("CARGO_PKG_VERSION"),
            "bubbletree-core": bubbletree::VERSION,
        },
        "threads": m.threads,
        "wall_time_s": m.wall.as_secs_f64(),
        "status": status,
        "error": m.error,
        "config": m.config,
        "checks": out.checks,
        "results": out.results,
        "outputs": out.artifacts.files,
    });
    let path = out.artifacts.path("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for v in [std::f64::consts::PI, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17);
        }
        assert_eq!(num(f64::INFINITY), "inf");
    }

    #[test]
    fn gating() {
        let a = Check::close("a", 1.0, 1.0, 1e-9);
        let b = Check::at_most("b", 2.0, 1.0).non_gating();
        assert!(a.pass && !b.pass);
        assert!(b.line().starts_with("[note]"));
    }
}
