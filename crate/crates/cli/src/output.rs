//! Staged output directory: files are written to a sibling scratch
//! directory and moved into place only once the whole run has succeeded.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde_json::json;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

pub struct Staging {
    dir: PathBuf,
    target: PathBuf,
    checked: BTreeMap<String, String>,
    unchecked: Vec<String>,
    done: bool,
}

impl Staging {
    pub fn new(target: &Path) -> anyhow::Result<Self> {
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
        let name = target
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into());
        let dir = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir,
            target: target.to_path_buf(),
            checked: BTreeMap::new(),
            unchecked: Vec::new(),
            done: false,
        })
    }

    /// Writes a file whose checksum goes into the manifest.
    pub fn write(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> anyhow::Result<()>,
    ) -> anyhow::Result<()> {
        let bytes = self.write_raw(name, body)?;
        self.checked
            .insert(name.to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    /// Writes a file that varies between identical runs (timings).
    pub fn write_unchecked(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> anyhow::Result<()>,
    ) -> anyhow::Result<()> {
        self.write_raw(name, body)?;
        self.unchecked.push(name.to_string());
        Ok(())
    }

    fn write_raw(
        &self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> anyhow::Result<()>,
    ) -> anyhow::Result<Vec<u8>> {
        let mut bytes = Vec::new();
        body(&mut bytes)?;
        let path = self.dir.join(name);
        let mut f =
            fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        Ok(bytes)
    }

    /// Writes the manifest, then moves every file into the target directory.
    pub fn commit(
        mut self,
        command: &str,
        config: &serde_json::Value,
        data_sha256: &str,
    ) -> anyhow::Result<Vec<String>> {
        let content_hash = {
            let mut h = Sha256::new();
            h.update(serde_json::to_vec(config)?);
            h.update(data_sha256.as_bytes());
            for (name, sum) in &self.checked {
                h.update(name.as_bytes());
                h.update(sum.as_bytes());
            }
            hex::encode(h.finalize())
        };
        let manifest = json!({
            "tool": concat!("epfcal ", env!("CARGO_PKG_VERSION")),
            "command": command,
            "config": config,
            "data_sha256": data_sha256,
            "content_hash": content_hash,
            "files": self.checked,
            "unchecked": self.unchecked,
        });
        self.write_raw(MANIFEST, |b| {
            Ok(serde_json::to_writer_pretty(b, &manifest)?)
        })?;

        fs::create_dir_all(&self.target)
            .with_context(|| format!("cannot create {}", self.target.display()))?;
        let mut names: Vec<String> = self.checked.keys().cloned().collect();
        names.extend(self.unchecked.iter().cloned());
        names.push(MANIFEST.to_string());
        for name in &names {
            fs::rename(self.dir.join(name), self.target.join(name))
                .with_context(|| format!("cannot move {name} into {}", self.target.display()))?;
        }
        fs::remove_dir(&self.dir)?;
        self.done = true;
        Ok(names)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
