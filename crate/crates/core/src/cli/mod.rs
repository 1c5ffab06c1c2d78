//! The `glla` command line: one subcommand per pipeline stage.
//!
//! Every stage reads the previous stage's encrypted bundle from the output
//! directory and writes its own. Exit codes are stable:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | other failure |
//! | 2 | configuration |
//! | 3 | source (extraction) |
//! | 4 | stage order |
//! | 5 | privacy threshold |

mod config;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analytics::{self, AnalysisOptions, AnalyticsError};
use crate::anonymize::{self, AnonymizationPolicy, AnonymizeError, RiskReport, UtilityReport};
use crate::extract::{self, ExtractError, RetryPolicy};
use crate::identity::{self, IdentityError};
use crate::model::{self, CohortDataset, Granularity, Stage};
use crate::synthgen::{self, CohortSpec, SynthError};
use crate::vault::{self, VaultError, VaultKey};

pub use config::PipelineConfig;

pub const RAW_FILE: &str = "raw.glds.enc";
pub const RESOLVED_FILE: &str = "resolved.glds.enc";
pub const ANONYMISED_FILE: &str = "anonymised.glds.enc";
pub const RISK_FILE: &str = "anonymised.risk.json";
pub const REPORT_FILE: &str = "report.json";
pub const SYNTH_BUNDLE: &str = "cohort.glds";
pub const SYNTH_TRUTH: &str = "cohort.truth.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Source(ExtractError),
    #[error("{0}")]
    Stage(String),
    #[error("{error}")]
    Threshold { error: AnonymizeError, report: RiskReport },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Other(_) => 1,
            CliError::Config(_) => 2,
            CliError::Source(_) => 3,
            CliError::Stage(_) => 4,
            CliError::Threshold { .. } => 5,
        }
    }
}

impl From<ExtractError> for CliError {
    fn from(e: ExtractError) -> Self {
        match e {
            ExtractError::Config(m) => CliError::Config(m),
            e => CliError::Source(e),
        }
    }
}

impl From<VaultError> for CliError {
    fn from(e: VaultError) -> Self {
        match e {
            VaultError::MissingKey(_) | VaultError::MalformedKey(_) | VaultError::KeyLength(_) => {
                CliError::Config(e.to_string())
            }
            VaultError::StageMismatch { .. } => CliError::Stage(e.to_string()),
            e => CliError::Other(e.to_string()),
        }
    }
}

impl From<AnonymizeError> for CliError {
    fn from(e: AnonymizeError) -> Self {
        match e {
            AnonymizeError::Config(_) | AnonymizeError::Usage(_) => CliError::Config(e.to_string()),
            AnonymizeError::Stage { .. } => CliError::Stage(e.to_string()),
            AnonymizeError::Threshold { ref report, .. } => {
                let report = report.clone();
                CliError::Threshold { error: e, report }
            }
            e => CliError::Other(e.to_string()),
        }
    }
}

impl From<AnalyticsError> for CliError {
    fn from(e: AnalyticsError) -> Self {
        match e {
            AnalyticsError::Stage { .. } => CliError::Stage(e.to_string()),
            e => CliError::Other(e.to_string()),
        }
    }
}

impl From<IdentityError> for CliError {
    fn from(e: IdentityError) -> Self {
        match e {
            IdentityError::AliasFile { .. } | IdentityError::UnknownAlias(_) => CliError::Config(e.to_string()),
            e => CliError::Other(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Spec(_) => CliError::Config(e.to_string()),
            e => CliError::Other(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Table,
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GranularityArg {
    Day,
    Week,
}

#[derive(Debug, Parser)]
#[command(name = "glla", version, about = "Privacy-preserving learning analytics over course repositories")]
pub struct Cli {
    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract every configured source into an encrypted raw bundle
    Extract {
        #[arg(long)]
        config: PathBuf,
    },
    /// Merge actor records that belong to the same person
    Resolve {
        #[arg(long)]
        config: PathBuf,
        /// raw bundle; defaults to the output directory's
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Apply the anonymisation policy and check re-identification risk
    Anonymize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Compute the analytics report from the anonymised bundle
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = GranularityArg::Day)]
        granularity: GranularityArg,
    },
    /// Generate a synthetic cohort from a spec file
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// output directory; defaults to the spec file's directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// also write repositories, recorded API responses, marks and a pipeline config
        #[arg(long)]
        fixtures: bool,
    },
    /// Re-encrypt every stage bundle under a new key
    Rekey {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        new_key_env: String,
    },
}

/// Parse `args`, run, report errors on stderr and return the exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match run(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if let CliError::Threshold { report, .. } = &e {
                let _ = writeln!(stderr, "{}", serde_json::to_string_pretty(report).expect("json"));
            }
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Extract { config } => cmd_extract(&PipelineConfig::load(config)?, cli.format, out),
        Command::Resolve { config, input } => cmd_resolve(&PipelineConfig::load(config)?, input.as_deref(), cli.format, out),
        Command::Anonymize { config, input } => {
            cmd_anonymize(&PipelineConfig::load(config)?, input.as_deref(), cli.format, out)
        }
        Command::Analyze { config, input, granularity } => {
            let granularity = match granularity {
                GranularityArg::Day => Granularity::Day,
                GranularityArg::Week => Granularity::Week,
            };
            cmd_analyze(&PipelineConfig::load(config)?, input.as_deref(), AnalysisOptions { granularity }, cli.format, out)
        }
        Command::Synth { config, out: dir, fixtures } => cmd_synth(config, dir.as_deref(), *fixtures, cli.format, out),
        Command::Rekey { config, new_key_env } => cmd_rekey(&PipelineConfig::load(config)?, new_key_env, cli.format, out),
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Other(format!("{}: {e}", path.display()))
}

/// Write via a temporary file in the same directory and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

fn remove_if_present(path: &Path) -> Result<(), CliError> {
    match std::fs::remove_file(path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(io_err(path, e)),
    }
}

fn load_key(config: &PipelineConfig) -> Result<VaultKey, CliError> {
    Ok(VaultKey::from_env(&config.key_env)?)
}

fn read_stage(path: &Path, expected: Stage, key: &VaultKey) -> Result<CohortDataset, CliError> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::Stage(format!("no {expected} bundle at {}; run the earlier stage first", path.display())))
        }
        Err(e) => return Err(io_err(path, e)),
    };
    let ds = vault::open_dataset(&bytes, key)?;
    if ds.stage() != expected {
        return Err(CliError::Stage(format!("stage {}, expected {expected}", ds.stage())));
    }
    Ok(ds)
}

fn write_stage(path: &Path, ds: &CohortDataset, key: &VaultKey) -> Result<(), CliError> {
    write_atomic(path, &vault::seal_dataset(ds, key)?)
}

#[derive(Debug, Serialize)]
struct StageSummary<'a> {
    stage: Stage,
    output: String,
    content_hash: &'a str,
    records: BTreeMap<String, u64>,
}

fn print_summary(ds: &CohortDataset, path: &Path, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let summary = StageSummary {
        stage: ds.stage(),
        output: path.display().to_string(),
        content_hash: &ds.manifest.content_hash,
        records: ds.table_sizes(),
    };
    let text = match format {
        Format::Structured => serde_json::to_string_pretty(&summary).expect("json") + "\n",
        Format::Table => {
            let mut s = format!("{} bundle written to {}\n", summary.stage, summary.output);
            for (table, n) in &summary.records {
                s.push_str(&format!("  {table:<20} {n:>8}\n"));
            }
            s
        }
    };
    out.write_all(text.as_bytes()).map_err(|e| CliError::Other(e.to_string()))
}

pub fn cmd_extract(config: &PipelineConfig, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let key = load_key(config)?;
    let path = config.output_dir().join(RAW_FILE);
    let ds = match extract::extract_all(&config.sources, RetryPolicy::default(), config.parallelism) {
        Ok(ds) => ds,
        Err(e) => {
            remove_if_present(&path)?;
            return Err(e.into());
        }
    };
    write_stage(&path, &ds, &key)?;
    print_summary(&ds, &path, format, out)
}

pub fn cmd_resolve(
    config: &PipelineConfig,
    input: Option<&Path>,
    format: Format,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let key = load_key(config)?;
    let dir = config.output_dir();
    let raw = read_stage(&input.map(Path::to_path_buf).unwrap_or_else(|| dir.join(RAW_FILE)), Stage::Raw, &key)?;
    let rules = match &config.alias_path {
        Some(p) => identity::load_alias_file(Path::new(p))?,
        None => Vec::new(),
    };
    let (resolved, _) = identity::resolve(&raw, &rules)?;
    let path = dir.join(RESOLVED_FILE);
    write_stage(&path, &resolved, &key)?;
    print_summary(&resolved, &path, format, out)
}

#[derive(Debug, Serialize)]
struct RiskSidecar<'a> {
    risk: &'a RiskReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    utility: Option<&'a UtilityReport>,
    k_threshold: usize,
    released: bool,
}

pub fn cmd_anonymize(
    config: &PipelineConfig,
    input: Option<&Path>,
    format: Format,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let key = load_key(config)?;
    let policy = AnonymizationPolicy::load(Path::new(&config.policy_path))?;
    let dir = config.output_dir();
    let input = input.map(Path::to_path_buf).unwrap_or_else(|| dir.join(RESOLVED_FILE));
    let resolved = read_stage(&input, Stage::Resolved, &key)?;
    let path = dir.join(ANONYMISED_FILE);
    let risk_path = dir.join(RISK_FILE);

    let pkey = anonymize::pseudonym_key(&key);
    match anonymize::apply_policy(&resolved, &policy, pkey.as_bytes(), config.parallelism) {
        Ok(a) => {
            let sidecar = RiskSidecar { risk: &a.risk, utility: Some(&a.utility), k_threshold: policy.k_threshold, released: true };
            write_stage(&path, &a.dataset, &key)?;
            write_atomic(&risk_path, &json_bytes(&sidecar))?;
            print_summary(&a.dataset, &path, format, out)?;
            let text = match format {
                Format::Structured => String::from_utf8(json_bytes(&sidecar)).expect("utf8"),
                Format::Table => format!(
                    "achieved k {} (threshold {}), prosecutor risk {:.4}\n",
                    a.risk.achieved_k, policy.k_threshold, a.risk.prosecutor_risk
                ),
            };
            out.write_all(text.as_bytes()).map_err(|e| CliError::Other(e.to_string()))
        }
        Err(e) => {
            remove_if_present(&path)?;
            if let AnonymizeError::Threshold { report, k_threshold } = &e {
                let sidecar = RiskSidecar { risk: report, utility: None, k_threshold: *k_threshold, released: false };
                write_atomic(&risk_path, &json_bytes(&sidecar))?;
            }
            Err(e.into())
        }
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("json");
    v.push(b'\n');
    v
}

pub fn cmd_analyze(
    config: &PipelineConfig,
    input: Option<&Path>,
    options: AnalysisOptions,
    format: Format,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let key = load_key(config)?;
    let dir = config.output_dir();
    let input = input.map(Path::to_path_buf).unwrap_or_else(|| dir.join(ANONYMISED_FILE));
    let ds = read_stage(&input, Stage::Anonymised, &key)?;
    let report = analytics::analyze(&ds, options)?;
    let bytes = json_bytes(&report);
    write_atomic(&dir.join(REPORT_FILE), &bytes)?;
    let text = match format {
        Format::Structured => bytes,
        Format::Table => analytics::render_table(&report).into_bytes(),
    };
    out.write_all(&text).map_err(|e| CliError::Other(e.to_string()))
}

pub fn cmd_synth(
    spec_path: &Path,
    dir: Option<&Path>,
    fixtures: bool,
    format: Format,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| CliError::Config(format!("{}: {e}", spec_path.display())))?;
    let spec = CohortSpec::from_toml(&text)?;
    let dir = dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| spec_path.parent().unwrap_or(Path::new(".")).to_path_buf());
    let cohort = synthgen::generate_cohort(&spec);
    let ds = cohort.dataset();
    let bundle = model::serialize(&ds).map_err(|e| CliError::Other(e.to_string()))?;
    write_atomic(&dir.join(SYNTH_BUNDLE), &bundle)?;
    write_atomic(&dir.join(SYNTH_TRUTH), &json_bytes(&cohort.truth))?;
    let config = if fixtures { Some(cohort.materialize(&dir)?) } else { None };

    let text = match format {
        Format::Structured => String::from_utf8(json_bytes(&serde_json::json!({
            "bundle": dir.join(SYNTH_BUNDLE),
            "truth": dir.join(SYNTH_TRUTH),
            "pipeline_config": config,
            "records": ds.table_sizes(),
        })))
        .expect("utf8"),
        Format::Table => {
            let mut s = format!("synthetic cohort written to {}\n", dir.join(SYNTH_BUNDLE).display());
            for (table, n) in ds.table_sizes() {
                s.push_str(&format!("  {table:<20} {n:>8}\n"));
            }
            if let Some(c) = config {
                s.push_str(&format!("pipeline config: {}\n", c.display()));
            }
            s
        }
    };
    out.write_all(text.as_bytes()).map_err(|e| CliError::Other(e.to_string()))
}

/// Decrypt every stage bundle with the current key, then rewrite each under
/// the new one. Nothing is rewritten unless every bundle opened.
pub fn cmd_rekey(config: &PipelineConfig, new_key_env: &str, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let old = load_key(config)?;
    let new = VaultKey::from_env(new_key_env)?;
    let dir = config.output_dir();
    let mut opened = Vec::new();
    for name in [RAW_FILE, RESOLVED_FILE, ANONYMISED_FILE] {
        let path = dir.join(name);
        match std::fs::read(&path) {
            Ok(bytes) => opened.push((path, vault::open_dataset(&bytes, &old)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(io_err(&path, e)),
        }
    }
    for (path, ds) in &opened {
        write_stage(path, ds, &new)?;
    }
    let names: Vec<String> = opened.iter().map(|(p, _)| p.display().to_string()).collect();
    let text = match format {
        Format::Structured => String::from_utf8(json_bytes(&serde_json::json!({ "rekeyed": names }))).expect("utf8"),
        Format::Table => names.iter().map(|n| format!("rekeyed {n}\n")).collect(),
    };
    out.write_all(text.as_bytes()).map_err(|e| CliError::Other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(CliError::Other(String::new()).exit_code(), 1);
        assert_eq!(CliError::Config(String::new()).exit_code(), 2);
        assert_eq!(CliError::from(ExtractError::Config("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(ExtractError::Http { endpoint: "e".into(), status: 404 }).exit_code(), 3);
        assert_eq!(CliError::Stage(String::new()).exit_code(), 4);
        assert_eq!(CliError::from(VaultError::Authentication).exit_code(), 1);
        assert_eq!(CliError::from(VaultError::MissingKey("K".into())).exit_code(), 2);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn parses_global_format_after_subcommand() {
        let cli = Cli::try_parse_from(["glla", "analyze", "--config", "c.toml", "--format", "structured"]).unwrap();
        assert_eq!(cli.format, Format::Structured);
        assert!(matches!(cli.command, Command::Analyze { granularity: GranularityArg::Day, .. }));
    }
}
