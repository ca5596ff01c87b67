//! Output directories: one writer at a time, all-or-nothing artifacts and a
//! manifest describing how they were made.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::settings::Settings;

pub const MANIFEST_SCHEMA: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.txt";
const LOCK: &str = ".gsae.lock";

pub struct RunDir {
    dir: PathBuf,
    created_dir: bool,
    staged: Vec<(String, Vec<u8>)>,
    started: Instant,
}

#[derive(Serialize)]
struct FileDigest {
    name: String,
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    tool_version: &'a str,
    command: &'a str,
    prng: &'a str,
    seed: u64,
    float32: bool,
    threads: usize,
    config: &'a std::collections::BTreeMap<String, String>,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    summary: serde_json::Value,
    wall_time_seconds: f64,
}

pub struct RunInfo<'a> {
    pub command: &'a str,
    pub seed: u64,
    pub float32: bool,
    pub threads: usize,
}

pub fn sha256_file(path: &Path) -> io::Result<(String, u64)> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut n = 0u64;
    loop {
        let k = f.read(&mut buf)?;
        if k == 0 {
            break;
        }
        h.update(&buf[..k]);
        n += k as u64;
    }
    Ok((hex::encode(h.finalize()), n))
}

impl RunDir {
    /// Creates `dir` if needed and takes its lock.
    pub fn open(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        let lock = dir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                bail!(
                    "{} is locked by another run (remove {} if that run is gone)",
                    dir.display(),
                    lock.display()
                )
            }
            Err(e) => return Err(e).with_context(|| format!("locking {}", dir.display())),
        }
        Ok(RunDir {
            dir: dir.to_path_buf(),
            created_dir,
            staged: Vec::new(),
            started: Instant::now(),
        })
    }

    /// Queues an artifact; nothing touches the disk before [`commit`](Self::commit).
    pub fn stage(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.staged.push((name.to_string(), contents.into()));
    }

    pub fn stage_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.stage(name, text);
        Ok(())
    }

    /// Writes every staged artifact, the resolved config and the manifest.
    /// On failure the files written so far are removed again.
    pub fn commit(
        mut self,
        settings: &Settings,
        info: &RunInfo,
        summary: serde_json::Value,
    ) -> Result<()> {
        let mut inputs = Vec::new();
        for (key, path) in settings.inputs() {
            let (sha256, bytes) =
                sha256_file(path).with_context(|| format!("hashing {}", path.display()))?;
            inputs.push(FileDigest {
                name: key.clone(),
                path: path.display().to_string(),
                sha256,
                bytes,
            });
        }
        self.stage(CONFIG, settings.to_config_text());
        let outputs = self
            .staged
            .iter()
            .map(|(name, data)| FileDigest {
                name: name.clone(),
                path: name.clone(),
                sha256: hex::encode(Sha256::digest(data)),
                bytes: data.len() as u64,
            })
            .collect();
        let manifest = Manifest {
            schema_version: MANIFEST_SCHEMA,
            tool_version: env!("CARGO_PKG_VERSION"),
            command: info.command,
            prng: gsae::rng::PRNG_NAME,
            seed: info.seed,
            float32: info.float32,
            threads: info.threads,
            config: settings.resolved(),
            inputs,
            outputs,
            summary,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        self.stage(MANIFEST, text);

        let staged = std::mem::take(&mut self.staged);
        let mut written = Vec::new();
        for (name, data) in &staged {
            let path = self.dir.join(name);
            if let Err(e) = write_atomic(&path, data) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                return Err(e).with_context(|| format!("writing {}", path.display()));
            }
            written.push(path);
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, data: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, data)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.dir.join(LOCK));
        if self.created_dir {
            // only removes the directory if the run left nothing in it
            let _ = fs::remove_dir(&self.dir);
        }
    }
}
