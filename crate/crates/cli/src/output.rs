//! Artifact directory: fixed-name files, 17-digit JSON, manifest with
//! checksums.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use srqe::scalar::fmt17;

/// Formatter writing every float with 17 significant digits.
struct Digits17;

impl serde_json::ser::Formatter for Digits17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        w.write_all(fmt17(value as f64).as_bytes())
    }
}

pub fn json_string(value: &impl Serialize) -> io::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17);
    value.serialize(&mut ser).map_err(io::Error::other)?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(io::Error::other)
}

pub struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        body(&mut w)?;
        w.flush()?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> io::Result<()> {
        let text = json_string(value)?;
        self.write(name, |w| w.write_all(text.as_bytes()))
    }

    pub fn manifest(&self, inputs: Value, wall_seconds: f64) -> io::Result<()> {
        let mut outputs = Vec::new();
        for name in &self.files {
            let bytes = std::fs::read(self.dir.join(name))?;
            outputs.push(json!({ "file": name, "bytes": bytes.len(), "sha256": hex::encode(Sha256::digest(&bytes)) }));
        }
        let manifest = json!({
            "tool": "srqe",
            "version": env!("CARGO_PKG_VERSION"),
            "core_version": srqe::VERSION,
            "inputs": inputs,
            "wall_time_seconds": wall_seconds,
            "outputs": outputs,
        });
        std::fs::write(self.dir.join("manifest.json"), json_string(&manifest)?)
    }
}
