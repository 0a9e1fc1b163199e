//! Shared plumbing: error codes, output directory and run manifest.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use latent_lob::exec::{with_workers, Execution};
use latent_lob::LobError;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Config(String),
    Numeric(String),
    Crisis(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Crisis(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
            CliError::Crisis(m) => write!(f, "aborted: {m}"),
        }
    }
}

impl From<LobError> for CliError {
    fn from(e: LobError) -> Self {
        let m = e.to_string();
        match e {
            LobError::InvalidParameter { .. } | LobError::InvalidConfig(_) | LobError::Unsupported(_) => {
                CliError::Config(m)
            }
            LobError::LiquidityCrisis(_) | LobError::DomainOverflow { .. } => CliError::Crisis(m),
            LobError::Io(_) | LobError::Csv(_) => CliError::Io(m),
            _ => CliError::Numeric(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub enum Status {
    Complete,
    /// Outputs were written but the computation stopped early.
    Partial(String),
}

/// Output directory that remembers every file written to it.
pub struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Output { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn write<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), LobError>,
    {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        self.files.push(name.to_string());
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }
}

/// Serialises with object keys sorted at every level.
pub fn canonical_json(v: &Value) -> String {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let body: Vec<String> =
                keys.iter().map(|k| format!("{}:{}", Value::String((*k).clone()), canonical_json(&m[*k]))).collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(a) => format!("[{}]", a.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

pub fn digest<T: Serialize>(config: &T) -> Result<String, CliError> {
    let v = serde_json::to_value(config)?;
    Ok(hex::encode(Sha256::digest(canonical_json(&v).as_bytes())))
}

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_digest: String,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
    pub status: String,
    pub message: Option<String>,
}

pub struct Global {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub dry_run: bool,
}

pub trait Job: Serialize + DeserializeOwned + Default + Sync {
    const NAME: &'static str;

    fn set_seed(&mut self, _seed: u64) {}

    fn seed(&self) -> Option<u64> {
        None
    }

    fn validate(&self) -> Result<(), CliError>;

    fn execute(&self, out: &mut Output, exec: Execution) -> Result<Status, CliError>;
}

pub fn load<J: Job>(path: Option<&Path>) -> Result<J, CliError> {
    let Some(path) = path else {
        return Ok(J::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Loads, overrides, validates and runs a job, then writes `manifest.json`.
pub fn drive<J: Job>(g: &Global, overrides: impl FnOnce(&mut J)) -> Result<(), CliError> {
    let mut job: J = load(g.config.as_deref())?;
    if let Some(s) = g.seed {
        job.set_seed(s);
    }
    overrides(&mut job);
    job.validate()?;
    if g.dry_run {
        println!("{}", serde_json::to_string_pretty(&job)?);
        return Ok(());
    }
    let started = Instant::now();
    let mut out = Output::new(&g.out)?;
    let result = with_workers(g.workers, || job.execute(&mut out, Execution::default()));
    let (status, message) = match &result {
        Ok(Status::Complete) => ("complete", None),
        Ok(Status::Partial(m)) => ("partial", Some(m.clone())),
        Err(e) => ("failed", Some(e.to_string())),
    };
    let mut outputs = out.files.clone();
    outputs.sort();
    let manifest = RunManifest {
        command: J::NAME.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: digest(&job)?,
        seed: job.seed(),
        outputs,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        status: status.to_string(),
        message,
    };
    out.json("manifest.json", &manifest)?;
    match result? {
        Status::Complete => {
            println!("{}: wrote {} files to {}", J::NAME, manifest.outputs.len() + 1, g.out.display());
            Ok(())
        }
        Status::Partial(m) => Err(CliError::Crisis(format!("{m}; partial outputs in {}", g.out.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"b": 1, "a": {"y": [1, 2], "x": null}}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"a": {"x": null, "y": [1, 2]}, "b": 1}"#).unwrap();
        assert_eq!(canonical_json(&a), canonical_json(&b));
        assert_eq!(canonical_json(&a), r#"{"a":{"x":null,"y":[1,2]},"b":1}"#);
        assert_eq!(digest(&a).unwrap(), digest(&b).unwrap());
        assert_eq!(digest(&a).unwrap().len(), 64);
    }

    #[test]
    fn error_codes_are_distinct() {
        let codes = [
            CliError::Io(String::new()).exit_code(),
            CliError::Config(String::new()).exit_code(),
            CliError::Numeric(String::new()).exit_code(),
            CliError::Crisis(String::new()).exit_code(),
        ];
        assert_eq!(codes, [1, 2, 3, 4]);
        assert_eq!(CliError::from(LobError::DomainOverflow { step: 3 }).exit_code(), 4);
        assert_eq!(CliError::from(LobError::InvalidConfig("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(LobError::Singular { row: 0 }).exit_code(), 3);
    }
}
