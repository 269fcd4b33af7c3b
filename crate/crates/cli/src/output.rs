use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::CliError;

/// Output paths of one run. Every path is checked before anything is written.
pub struct Outputs {
    force: bool,
    paths: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(force: bool) -> Self {
        Outputs {
            force,
            paths: Vec::new(),
        }
    }

    pub fn claim(&mut self, path: impl Into<PathBuf>) -> Result<PathBuf, CliError> {
        let path = path.into();
        if path.exists() && !self.force {
            return Err(CliError::Usage(format!(
                "{} exists; pass --force to overwrite",
                path.display()
            )));
        }
        self.paths.push(path.clone());
        Ok(path)
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.paths
    }
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Dense row-major CSV with a `rows=..,cols=..` header line.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<(), CliError> {
    let mut w = create(path)?;
    writeln!(w, "rows={},cols={}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, CliError> {
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(CliError::Data(format!("{what} has ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

/// Replaces `{r}` in a path template.
pub fn expand(template: &Path, r: usize) -> PathBuf {
    PathBuf::from(template.to_string_lossy().replace("{r}", &r.to_string()))
}

pub fn replicate_template(template: &Path, what: &str) -> Result<(), CliError> {
    if template.to_string_lossy().contains("{r}") {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--replicates needs `{{r}}` in the {what} path")))
    }
}

/// Keeps file names portable: `s(x2)` becomes `x2`.
pub fn file_stem(label: &str) -> String {
    let inner = label
        .strip_prefix("s(")
        .and_then(|s| s.strip_suffix(')'))
        .unwrap_or(label);
    inner
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub argv: Vec<String>,
    pub spec: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub seed: Option<u64>,
    pub replicate: Option<usize>,
    pub version: &'static str,
    pub wall_time_s: f64,
    pub outputs: Vec<PathBuf>,
}

pub struct ManifestBuilder {
    pub command: &'static str,
    pub argv: Vec<String>,
    pub spec: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub seed: Option<u64>,
    pub replicate: Option<usize>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &'static str, argv: &[String], started: Instant) -> Self {
        ManifestBuilder {
            command,
            argv: argv.to_vec(),
            spec: None,
            data: None,
            model: None,
            seed: None,
            replicate: None,
            started,
        }
    }

    pub fn finish(self, outputs: &Outputs, path: &Path) -> Result<(), CliError> {
        let mut listed = outputs.paths().to_vec();
        listed.retain(|p| p != path);
        let m = Manifest {
            command: self.command.to_string(),
            argv: self.argv,
            spec: self.spec,
            data: self.data,
            model: self.model,
            seed: self.seed,
            replicate: self.replicate,
            version: env!("CARGO_PKG_VERSION"),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs: listed,
        };
        write_json(path, &m)
    }
}
