use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Serialize)]
struct InputDigest {
    path: PathBuf,
    bytes: u64,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    command: &'a str,
    argv: Vec<String>,
    config: &'a C,
    inputs: Vec<InputDigest>,
    output: &'a Path,
}

fn digest(path: &Path) -> Result<InputDigest, CliError> {
    let mut file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        bytes += n as u64;
        hasher.update(&buf[..n]);
    }
    Ok(InputDigest {
        path: path.to_path_buf(),
        bytes,
        sha256: hex::encode(hasher.finalize()),
    })
}

/// Path of the manifest written beside `output`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// Records the configuration, input digests and tool versions that produced `output`.
pub fn write_manifest<C: Serialize>(
    output: &Path,
    command: &str,
    config: &C,
    inputs: &[&Path],
) -> Result<(), CliError> {
    let manifest = Manifest {
        tool: "refcast",
        version: env!("CARGO_PKG_VERSION"),
        core_version: refcast::VERSION,
        command,
        argv: std::env::args().collect(),
        config,
        inputs: inputs.iter().map(|p| digest(p)).collect::<Result<_, _>>()?,
        output,
    };
    let path = manifest_path(output);
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Output(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

/// Opens `path` for writing, or standard output when `None`.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| CliError::io(p, e))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

/// Serializes rows as CSV with a header taken from the row type.
pub fn write_rows<T: Serialize>(rows: &[T], mut out: impl Write) -> Result<(), CliError> {
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for row in rows {
            w.serialize(row).map_err(CliError::csv)?;
        }
        w.flush().map_err(CliError::write)?;
    }
    out.flush().map_err(CliError::write)
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, mut out: impl Write) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| match e.io_error_kind() {
        Some(std::io::ErrorKind::BrokenPipe) => CliError::Closed,
        _ => CliError::Output(e.to_string()),
    })?;
    writeln!(out).and_then(|_| out.flush()).map_err(CliError::write)
}
