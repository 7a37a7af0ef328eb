use std::fs::File;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::CliError;
use crate::evaluation::GroupMetrics;

/// Tag identifying the code that produced an artifact.
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), "-", env!("CARGO_PKG_VERSION"));

/// Machine-readable result of one command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub command: String,
    pub code_version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub results: T,
}

impl<T> Report<T> {
    pub fn new(command: &str, seed: u64, config: &RunConfig, results: T) -> Self {
        Self {
            command: command.to_string(),
            code_version: CODE_VERSION.to_string(),
            seed,
            config: config.clone(),
            results,
        }
    }
}

/// A freshly created output directory. Every file inside is named
/// `<run id>.<suffix>`, and the run id carries the seed.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub id: String,
    pub path: PathBuf,
}

impl RunDir {
    /// Creates `<root>/<command>-s<seed>-<fingerprint>-<n>` with the smallest
    /// `n` not already taken.
    pub fn create(
        root: &Path,
        command: &str,
        seed: u64,
        fingerprint: &[u8],
    ) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| {
            CliError::User(format!(
                "cannot create output directory {}: {e}",
                root.display()
            ))
        })?;
        let hash = Sha256::digest(fingerprint);
        let short: String = hash[..4].iter().map(|b| format!("{b:02x}")).collect();
        for n in 1.. {
            let id = format!("{command}-s{seed}-{short}-{n:03}");
            let path = root.join(&id);
            match std::fs::create_dir(&path) {
                Ok(()) => return Ok(Self { id, path }),
                Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
                Err(e) => {
                    return Err(CliError::User(format!(
                        "cannot create run directory {}: {e}",
                        path.display()
                    )))
                }
            }
        }
        unreachable!("unbounded search")
    }

    pub fn file(&self, suffix: &str) -> PathBuf {
        self.path.join(format!("{}.{suffix}", self.id))
    }

    /// Creates a new file; never replaces an existing one.
    pub fn create_file(&self, suffix: &str) -> Result<(PathBuf, File), CliError> {
        let path = self.file(suffix);
        let f = File::create_new(&path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok((path, f))
    }

    pub fn write(&self, suffix: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let (path, mut f) = self.create_file(suffix)?;
        f.write_all(bytes)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportPaths {
    pub report: PathBuf,
    pub table: PathBuf,
    pub config: PathBuf,
}

/// Writes the JSON report, the human-readable table and the config echo.
pub fn write_report<T: Serialize>(
    run: &RunDir,
    report: &Report<T>,
    table: &str,
    config_echo: &str,
) -> Result<ReportPaths, CliError> {
    let mut json =
        serde_json::to_string_pretty(report).map_err(|e| CliError::Runtime(e.to_string()))?;
    json.push('\n');
    let header = format!(
        "# {} seed={} code={}\n",
        report.command, report.seed, report.code_version
    );
    Ok(ReportPaths {
        report: run.write("report.json", json.as_bytes())?,
        table: run.write("table.txt", format!("{header}{table}").as_bytes())?,
        config: run.write("config.toml", config_echo.as_bytes())?,
    })
}

pub fn read_report<T: DeserializeOwned>(path: &Path) -> Result<Report<T>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

/// Per-sex and per-age-group rows for one set of predictions.
pub fn render_groups(g: &GroupMetrics) -> String {
    let mut out = format!(
        "{:<8} {:>6} {:>16} {:>8} {:>8}\n",
        "group", "n", "MAE±std", "RMSE", "R2"
    );
    let rows = [
        ("overall", Some(g.overall)),
        ("male", g.male),
        ("female", g.female),
    ]
    .into_iter()
    .chain(["G1", "G2", "G3", "G4"].into_iter().zip(g.age_groups));
    for (name, m) in rows {
        match m {
            Some(m) => out.push_str(&format!(
                "{:<8} {:>6} {:>16} {:>8.3} {:>8}\n",
                name,
                m.n,
                format!("{:.3}±{:.3}", m.mae, m.mae_std),
                m.rmse,
                m.r2.map_or("-".to_string(), |r| format!("{r:.3}"))
            )),
            None => out.push_str(&format!(
                "{name:<8} {:>6} {:>16} {:>8} {:>8}\n",
                0, "-", "-", "-"
            )),
        }
    }
    out.push_str(&format!("unbinned {:>6}\n", g.unbinned));
    out
}
