//! Report envelope, file output and summary statistics.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

pub const VERSION: &str = concat!("cdfbandit ", env!("CARGO_PKG_VERSION"));

/// Overall outcome of a command, ordered by severity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    ThresholdFailed,
    BudgetExceeded,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::ThresholdFailed => 1,
            Status::BudgetExceeded => 3,
        }
    }
}

/// Everything a command reports. Contains no timings, so identical configs give identical bytes.
#[derive(Clone, Debug, Serialize)]
pub struct Report<C, R, A> {
    pub command: String,
    pub version: String,
    pub config: C,
    pub seeds: Vec<u64>,
    pub runs: Vec<R>,
    pub aggregate: A,
    pub status: Status,
    pub files: Vec<String>,
}

impl<C: Serialize, R: Serialize, A: Serialize> Report<C, R, A> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// Output directory with a record of every file written to it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> anyhow::Result<String> {
        let path = self.root.join(name);
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(name.to_string())
    }

    pub fn write_csv(
        &mut self,
        name: &str,
        header: &[String],
        rows: &[Vec<String>],
    ) -> anyhow::Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().context("flushing CSV")?;
        self.write(name, &bytes)
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Writes `report.json` and, separately, `timing.json`.
    pub fn finish<C: Serialize, R: Serialize, A: Serialize>(
        &mut self,
        report: &mut Report<C, R, A>,
        timing: &BTreeMap<String, f64>,
    ) -> anyhow::Result<()> {
        report.files = self.files.clone();
        report.files.push("report.json".into());
        self.write("report.json", report.to_json().as_bytes())?;
        let timing = serde_json::to_string_pretty(timing)?;
        fs::write(self.root.join("timing.json"), timing).context("cannot write timing.json")?;
        Ok(())
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
