//! The `localcorr` command line.
//!
//! Every command writes its artifacts plus a `manifest.json` into
//! `--output-dir`. Failures print a JSON error object on stderr and exit
//! nonzero.

mod commands;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Error;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "LOCALCORR_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "localcorr",
    version,
    about = "Local correlation pricing toolkit"
)]
pub struct Cli {
    /// Snapshot file, or the recipe file for `synth`.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true, default_value = ".")]
    pub output_dir: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to $LOCALCORR_THREADS, then to all cores.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = LogFormat::Text)]
    pub log: LogFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LogFormat {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic snapshot from a recipe.
    Synth(SynthArgs),
    /// Compare the index smile with Gaussian-copula basket prices.
    Decode(DecodeArgs),
    /// Dump local-vol grids for every constituent and the index.
    Calibrate(CalibrateArgs),
    /// Price payoffs with the local correlation Monte Carlo.
    Price(PriceArgs),
    /// Correlation diagnostics per strike bucket.
    Diagnose(DiagnoseArgs),
    /// Dump the precomputed correlation table.
    DumpTable(DumpTableArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Decode(_) => "decode",
            Command::Calibrate(_) => "calibrate",
            Command::Price(_) => "price",
            Command::Diagnose(_) => "diagnose",
            Command::DumpTable(_) => "dump-table",
        }
    }
}

fn default_moneyness() -> Vec<f64> {
    vec![0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3]
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Output file name inside the output directory.
    #[arg(long, default_value = "snapshot.json")]
    pub out: String,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct DecodeArgs {
    #[arg(long)]
    pub maturity: f64,
    /// Strikes as fractions of the index spot.
    #[arg(long, value_delimiter = ',', default_values_t = default_moneyness())]
    pub strikes: Vec<f64>,
    /// Flat correlations to sweep. Without this or `--center`, the flat
    /// correlation matching the at-the-money index vol is used.
    #[arg(long, value_delimiter = ',', conflicts_with = "center")]
    pub rho: Vec<f64>,
    /// `identity`, `flat:<rho>`, `sectors:<sizes>:<intra>:<inter>` or a JSON
    /// file of rows.
    #[arg(long)]
    pub center: Option<String>,
    #[arg(long, default_value_t = 1 << 18)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = SamplerArg::Sobol)]
    pub sampler: SamplerArg,
    /// Largest market-minus-copula gap, in vol points, still called
    /// consistent.
    #[arg(long, default_value_t = 0.3)]
    pub tolerance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerArg {
    Sobol,
    PseudoRandom,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct CalibrateArgs {
    /// Last grid time; defaults to the last index maturity.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 20)]
    pub steps_per_year: usize,
    #[arg(long, default_value_t = 241)]
    pub nodes: usize,
    /// Grid half-width in standard deviations of log spot.
    #[arg(long, default_value_t = 6.0)]
    pub width: f64,
}

/// Simulation settings shared by `price` and `diagnose`.
#[derive(Clone, Debug, Args, Serialize)]
pub struct SimArgs {
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 100)]
    pub steps_per_year: usize,
    /// Table entries; even counts are rounded up to odd.
    #[arg(long, default_value_t = 2001)]
    pub states: usize,
    /// Table spacing; defaults to a spacing that reaches near the bounds.
    #[arg(long)]
    pub shift: Option<f64>,
    #[arg(long, default_value = "flat:0.5")]
    pub center: String,
    #[arg(long, value_enum, default_value_t = BoundsArg::Clamp)]
    pub bounds_policy: BoundsArg,
    /// Factorize the exact family member every step instead of using the
    /// table.
    #[arg(long)]
    pub exact: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsArg {
    Clamp,
    Strict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayoffArg {
    IndexCall,
    IndexPut,
    WorstOfPut,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct PriceArgs {
    #[arg(long, value_enum)]
    pub payoff: PayoffArg,
    #[arg(long)]
    pub maturity: f64,
    /// Strikes as fractions of the initial index level (index options) or
    /// of each initial spot (worst-of).
    #[arg(long, alias = "strike", value_delimiter = ',', default_value = "1.0")]
    pub strikes: Vec<f64>,
    /// Simulate the index alone under its own local vol.
    #[arg(long)]
    pub index_as_asset: bool,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub maturity: f64,
    /// Strike buckets as fractions of the initial index level.
    #[arg(long, value_delimiter = ',', default_value = "0.7,0.8,0.9,1.0,1.1,1.2")]
    pub moneyness: Vec<f64>,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct DumpTableArgs {
    /// Asset count when no snapshot is given.
    #[arg(long)]
    pub assets: Option<usize>,
    #[arg(long, default_value_t = 101)]
    pub states: usize,
    #[arg(long)]
    pub shift: Option<f64>,
    #[arg(long, default_value = "flat:0.5")]
    pub center: String,
}

/// Error with the step that produced it.
#[derive(Debug)]
pub struct AppError {
    pub context: String,
    pub source: Error,
}

impl AppError {
    fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "error": {
                "kind": self.source.kind(),
                "context": self.context,
                "message": self.source.to_string(),
            }
        })
    }
}

pub(crate) trait Context<T> {
    fn context(self, what: impl Into<String>) -> Result<T, AppError>;
}

impl<T> Context<T> for crate::Result<T> {
    fn context(self, what: impl Into<String>) -> Result<T, AppError> {
        self.map_err(|source| AppError {
            context: what.into(),
            source,
        })
    }
}

/// Run with the process arguments and return the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let report = serde_json::json!({
                "error": {"kind": "usage", "context": "parsing arguments", "message": e.to_string().trim()}
            });
            eprintln!("{report}");
            return 2;
        }
    };
    init_logging(cli.log);
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{}: {}", e.context, e.source);
            eprintln!("{}", e.to_json());
            1
        }
    }
}

fn init_logging(format: LogFormat) {
    let mut builder =
        env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    if format == LogFormat::Json {
        builder.format(|buf, record| {
            let line = serde_json::json!({
                "level": record.level().to_string(),
                "target": record.target(),
                "message": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    }
    let _ = builder.try_init();
}

/// Execute a parsed command line.
pub fn run(cli: &Cli) -> Result<(), AppError> {
    let start = Instant::now();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidInput("--threads must be positive".into()))
                .context("configuring workers");
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    std::fs::create_dir_all(&cli.output_dir)
        .map_err(|source| Error::Io {
            path: cli.output_dir.clone(),
            source,
        })
        .context("creating output directory")?;
    let input_digest = match &cli.input {
        Some(p) => Some(file_digest(p).context("hashing input")?),
        None => None,
    };
    let seed = cli.seed.unwrap_or(0);
    let out = Output::new(&cli.output_dir);
    log::info!("{} starting", cli.command.name());
    let (config, files) = match &cli.command {
        Command::Synth(a) => (to_value(a), commands::synth(cli, a, &out)?),
        Command::Decode(a) => (to_value(a), commands::decode(cli, a, seed, &out)?),
        Command::Calibrate(a) => (to_value(a), commands::calibrate(cli, a, &out)?),
        Command::Price(a) => (to_value(a), commands::price(cli, a, seed, &out)?),
        Command::Diagnose(a) => (to_value(a), commands::diagnose(cli, a, seed, &out)?),
        Command::DumpTable(a) => (to_value(a), commands::dump_table(cli, a, &out)?),
    };
    let manifest = RunManifest::new(
        cli.command.name(),
        &config,
        cli.seed,
        input_digest,
        files,
        start.elapsed().as_secs_f64(),
    );
    out.json("manifest.json", &manifest)?;
    log::info!(
        "{} finished in {:.2}s",
        cli.command.name(),
        manifest.runtime_seconds
    );
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn file_digest(path: &Path) -> crate::Result<String> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// What produced a set of outputs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 over the command name, its arguments and the seed.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub input_digest: Option<String>,
    pub version: String,
    pub outputs: Vec<String>,
    pub runtime_seconds: f64,
}

impl RunManifest {
    fn new(
        command: &str,
        config: &serde_json::Value,
        seed: Option<u64>,
        input_digest: Option<String>,
        outputs: Vec<String>,
        runtime_seconds: f64,
    ) -> Self {
        let canonical = serde_json::json!({"command": command, "config": config, "seed": seed});
        Self {
            command: command.to_string(),
            config_hash: hex::encode(Sha256::digest(canonical.to_string().as_bytes())),
            seed,
            input_digest,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs,
            runtime_seconds,
        }
    }
}

/// Writes files into the output directory.
pub(crate) struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn io(&self, name: &str, source: std::io::Error) -> AppError {
        AppError {
            context: format!("writing {name}"),
            source: Error::Io {
                path: self.path(name),
                source,
            },
        }
    }

    pub(crate) fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), AppError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Schema(e.to_string()))
            .context(format!("serializing {name}"))?;
        text.push('\n');
        std::fs::write(self.path(name), text).map_err(|e| self.io(name, e))
    }

    pub(crate) fn with_writer(
        &self,
        name: &str,
        f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
    ) -> Result<(), AppError> {
        let file = std::fs::File::create(self.path(name)).map_err(|e| self.io(name, e))?;
        let mut w = std::io::BufWriter::new(file);
        f(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| self.io(name, e))
    }
}
