//! In-memory artifacts and their promotion to the output directory.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Ordered set of named output files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts(Vec<Artifact>);

impl Artifacts {
    pub fn push(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        let name = name.into();
        debug_assert!(self.get(&name).is_none(), "duplicate artifact {name}");
        self.0.push(Artifact { name, bytes });
    }

    pub fn extend(&mut self, other: Artifacts) {
        for a in other.0 {
            self.push(a.name, a.bytes);
        }
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.0
            .iter()
            .find(|a| a.name == name)
            .map(|a| a.bytes.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Artifact> {
        self.0.iter()
    }

    pub fn names(&self) -> Vec<&str> {
        self.0.iter().map(|a| a.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// CSV with a leading `# config_hash=` comment line.
pub fn csv_bytes<R: Serialize>(config_hash: &str, rows: &[R]) -> Result<Vec<u8>> {
    let mut out = format!("# config_hash={config_hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    Ok(out)
}

/// CSV with a header but no typed rows, for layouts known only at run time.
pub fn csv_records(
    config_hash: &str,
    header: &[String],
    records: &[Vec<String>],
) -> Result<Vec<u8>> {
    let mut out = format!("# config_hash={config_hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header)?;
        for r in records {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    Ok(out)
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

/// Writes every artifact into a staging directory under `dir`, then renames
/// them into place. Nothing is promoted unless all writes succeed.
pub fn promote(artifacts: &Artifacts, dir: &Path) -> Result<()> {
    for a in artifacts.iter() {
        if a.name.is_empty() || a.name.contains(['/', '\\']) || a.name.starts_with('.') {
            bail!("refusing artifact name {:?}", a.name);
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let staging = tempfile::Builder::new()
        .prefix(".staging-")
        .tempdir_in(dir)
        .with_context(|| format!("cannot stage in {}", dir.display()))?;
    for a in artifacts.iter() {
        let path = staging.path().join(&a.name);
        let mut f =
            fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        f.write_all(&a.bytes)?;
        f.sync_all()?;
    }
    for a in artifacts.iter() {
        let target = dir.join(&a.name);
        fs::rename(staging.path().join(&a.name), &target)
            .with_context(|| format!("cannot promote {}", target.display()))?;
    }
    Ok(())
}
