use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use snapspec_core::pipeline::hash_bytes;
use snapspec_core::scene::{read_cube, write_cube, Precision};
use snapspec_core::{Error, Result, SpectralCube};

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| io_err(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| io_err(path, e))
}

pub fn load_cube(path: &Path) -> Result<SpectralCube> {
    Ok(read_cube(open(path)?)?.0)
}

pub fn cube_bytes(cube: &SpectralCube, f64: bool) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_cube(
        cube,
        if f64 { Precision::F64 } else { Precision::F32 },
        &mut buf,
    )?;
    Ok(buf)
}

/// Outputs are always new files; refusing to overwrite also keeps inputs
/// untouched.
pub fn ensure_absent(path: &Path) -> Result<()> {
    if path.exists() {
        return Err(Error::InvalidValue(format!(
            "output {} already exists",
            path.display()
        )));
    }
    Ok(())
}

pub fn create_dir(path: &Path) -> Result<()> {
    ensure_absent(path)?;
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = File::create_new(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))?;
    f.write_all(bytes)
        .and_then(|_| f.flush())
        .map_err(|e| io_err(path, e))
}

pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Canonical `key = value` description of one command invocation.
#[derive(Default)]
pub struct RunDescription {
    text: String,
}

impl RunDescription {
    pub fn new(command: &str) -> Self {
        Self {
            text: format!("command = {command}\n"),
        }
    }

    pub fn set(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.text.push_str(&format!("{key} = {value}\n"));
        self
    }

    /// Record an input by content, so the hash pins the data it was fed.
    pub fn input(self, key: &str, path: &Path) -> Result<Self> {
        let digest = hash_bytes(&read_bytes(path)?);
        Ok(self.set(key, digest))
    }

    pub fn hash(&self) -> String {
        hash_bytes(self.text.as_bytes())
    }
}
