//! Run directory writers. Numeric payloads (report, CSV) never contain
//! timings, so identical inputs give identical bytes; the manifest carries
//! the wall clock.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// CSV field with 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct RunDir {
    root: PathBuf,
    outputs: Vec<String>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<RunDir> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(RunDir {
            root: root.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.root.join(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn binary(&mut self, name: &str, ens: &msinv_core::stochastic::ProcessEnsemble) -> Result<()> {
        let path = self.path(name);
        let f = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        let mut w = BufWriter::new(f);
        msinv_core::io::write_ensemble(ens, &mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

#[derive(Serialize)]
pub struct Versions {
    pub msinv_core: &'static str,
    pub msinv_cli: &'static str,
}

#[derive(Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_hash: String,
    pub seed: u64,
    pub workers: usize,
    pub versions: Versions,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
