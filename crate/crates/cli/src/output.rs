use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// SHA-256 of the config serialized with sorted object keys.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let value = serde_json::to_value(config)?;
    let canonical = serde_json::to_string(&value)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<String>,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Output directory that records every file written to it.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
    started: u64,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
            started: unix_now(),
        })
    }

    fn track(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.root.join(name)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.track(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let path = self.track(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `manifest.json` listing everything written so far.
    pub fn finish<T: Serialize>(mut self, command: &str, config: &T, master_seed: u64) -> Result<PathBuf> {
        let manifest = RunManifest {
            tool: "rcsbench",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_sha256: config_hash(config)?,
            master_seed,
            started_unix: self.started,
            finished_unix: unix_now(),
            outputs: self.written.clone(),
        };
        self.write_json("manifest.json", &manifest)?;
        Ok(self.root)
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Gnuplot script drawing `(title, using-clause)` series from one CSV file.
pub fn gnuplot_script(csv: &str, labels: (&str, &str), logy: bool, series: &[(String, String)]) -> String {
    let (xlabel, ylabel) = labels;
    let mut s = format!("set datafile separator ','\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'\nset key outside\n");
    if logy {
        s.push_str("set logscale y\n");
    }
    s.push_str("plot \\\n");
    let plots: Vec<String> = series
        .iter()
        .map(|(title, using)| format!("  '{csv}' skip 1 using {using} with linespoints title '{title}'"))
        .collect();
    s.push_str(&plots.join(", \\\n"));
    s.push('\n');
    s
}

/// Using-clause selecting rows whose first column equals `key`.
pub fn filtered(key: &str, x: usize, y: usize) -> String {
    format!("{x}:(strcol(1) eq '{key}' ? ${y} : NaN)")
}
