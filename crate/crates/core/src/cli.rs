//! Command-line front end: `extract`, `fit`, `simulate` and `report`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 empty result.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Config, L5M10Mode};
use crate::error::{Error, Result};
use crate::features::{Feature, FeatureTable};
use crate::ingest::write_rejects;
use crate::pipeline::{extract, CohortSummary, Extraction, InputPaths, RawInputs};
use crate::stats::design::Subset;
use crate::stats::report::{seasonal_profile_report, write_profile_csv, ProfileRow};
use crate::stats::tables::{fit_all, write_lrt_csv, write_model_fits_csv, FitTables};
use crate::synth::{write_feature_panel, write_raw_streams, SynthConfig, Truth};
use crate::windowing::write_windows_csv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetSelector {
    All,
    #[value(name = "pre_covid")]
    PreCovid,
    Both,
}

impl SubsetSelector {
    pub fn subsets(self) -> Vec<Subset> {
        match self {
            SubsetSelector::All => vec![Subset::All],
            SubsetSelector::PreCovid => vec![Subset::PreCovid],
            SubsetSelector::Both => vec![Subset::All, Subset::PreCovid],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Profile,
    PerDay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimLevel {
    /// Raw sensor streams (five input CSVs).
    Raw,
    /// Feature table drawn directly from the mixed model.
    Panel,
}

#[derive(Debug, Parser)]
#[command(name = "circadia", version, about = "Circadian rhythm features from wearable data and their seasonal association with depression scores")]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Windows and the twelve features from the five input CSVs.
    Extract {
        /// Directory holding participants.csv, phq8.csv, sleep.csv, steps.csv and hr.csv.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bin_minutes: Option<u32>,
        #[arg(long, value_enum)]
        l5m10_mode: Option<ModeArg>,
    },
    /// Mixed models, likelihood-ratio tests and model selection.
    Fit {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        subset: SubsetSelector,
    },
    /// Synthetic cohort with planted effects.
    Simulate {
        /// Synthetic cohort TOML; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "raw")]
        level: SimLevel,
    },
    /// Monthly per-participant normalized feature curves.
    Report {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Recorded before any output so a run can be repeated exactly.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub inputs: BTreeMap<String, PathBuf>,
    pub config_path: Option<PathBuf>,
    pub config_sha256: String,
    pub subset: Option<SubsetSelector>,
    pub output_dir: PathBuf,
    pub options: BTreeMap<String, String>,
}

impl RunManifest {
    fn new(command: &str, out: &Path, config_path: Option<&Path>, config_bytes: &[u8]) -> Self {
        RunManifest {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            inputs: BTreeMap::new(),
            config_path: config_path.map(Path::to_path_buf),
            config_sha256: hex(&Sha256::digest(config_bytes)),
            subset: None,
            output_dir: out.to_path_buf(),
            options: BTreeMap::new(),
        }
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let path = out.join("manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

fn load_config(path: &Path) -> Result<(Config, Vec<u8>)> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Config(format!("{}: not UTF-8", path.display())))?;
    Ok((Config::from_toml_str(&text)?, bytes))
}

#[derive(Debug, Clone)]
pub struct ExtractArgs {
    pub input: PathBuf,
    pub config: PathBuf,
    pub out: PathBuf,
    pub bin_minutes: Option<u32>,
    pub l5m10_mode: Option<L5M10Mode>,
}

/// Writes `features.csv`, `windows.csv` and `rejects.csv`. Fails with
/// [`Error::NoIncludedWindows`] (after writing the window table) when no
/// window survives inclusion.
pub fn cmd_extract(args: &ExtractArgs) -> Result<Extraction> {
    let (mut cfg, bytes) = load_config(&args.config)?;
    if let Some(b) = args.bin_minutes {
        cfg.features.bin_minutes = b;
    }
    if let Some(m) = args.l5m10_mode {
        cfg.features.l5m10_mode = m;
    }
    cfg.validate()?;
    let paths = InputPaths::in_dir(&args.input);
    for (_, p) in paths.all() {
        if !p.is_file() {
            return Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "input file missing")));
        }
    }

    let mut manifest = RunManifest::new("extract", &args.out, Some(&args.config), &bytes);
    for (kind, p) in paths.all() {
        manifest.inputs.insert(kind.file_name().into(), p.to_path_buf());
    }
    manifest.options.insert("bin_minutes".into(), cfg.features.bin_minutes.to_string());
    manifest.options.insert(
        "l5m10_mode".into(),
        match cfg.features.l5m10_mode {
            L5M10Mode::Profile => "profile",
            L5M10Mode::PerDay => "per-day",
        }
        .into(),
    );
    manifest.write(&args.out)?;

    let inputs = RawInputs::load(&paths, &cfg)?;
    let extraction = extract(&inputs, &cfg)?;
    drop(inputs);

    write_windows_csv(create(&args.out.join("windows.csv"))?, &extraction.windows)?;
    write_rejects(&args.out.join("rejects.csv"), &extraction.rejects)?;
    extraction.features.write_file(&args.out.join("features.csv"))?;
    println!("{}", CohortSummary::of(&extraction.windows));
    if extraction.features.rows.is_empty() {
        return Err(Error::NoIncludedWindows);
    }
    Ok(extraction)
}

#[derive(Debug, Clone)]
pub struct FitArgs {
    pub features: PathBuf,
    pub config: PathBuf,
    pub out: PathBuf,
    pub subset: SubsetSelector,
}

/// Writes `model_fits.csv` and `lrt.csv`.
pub fn cmd_fit(args: &FitArgs) -> Result<FitTables> {
    let (cfg, bytes) = load_config(&args.config)?;
    let mut manifest = RunManifest::new("fit", &args.out, Some(&args.config), &bytes);
    manifest.inputs.insert("features.csv".into(), args.features.clone());
    manifest.subset = Some(args.subset);
    manifest.write(&args.out)?;

    let table = FeatureTable::read_file(&args.features)?;
    let tables = fit_all(&table, &cfg.sites, &args.subset.subsets())?;
    write_model_fits_csv(create(&args.out.join("model_fits.csv"))?, &tables.coefficients)?;
    write_lrt_csv(create(&args.out.join("lrt.csv"))?, &tables.lrts)?;

    for subset in args.subset.subsets() {
        println!("Selected models ({subset}):");
        for f in Feature::ALL {
            let chosen = tables
                .selected_model(f, subset)
                .map_or_else(|| "unfitted".to_string(), |m| format!("Model {m}"));
            println!("  {:<24}{chosen}", f.column());
        }
    }
    Ok(tables)
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub level: SimLevel,
}

/// Raw level: the five input CSVs, `config.toml` and `truth.json`. Panel
/// level: `features.csv`, `config.toml` and `truth.json`.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<Truth> {
    let (mut cfg, bytes) = match &args.config {
        Some(p) => {
            let bytes = read_bytes(p)?;
            let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Config(format!("{}: not UTF-8", p.display())))?;
            (SynthConfig::from_toml_str(&text)?, bytes)
        }
        None => {
            let cfg = SynthConfig::default();
            let bytes = cfg.to_toml_string().into_bytes();
            (cfg, bytes)
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let mut manifest = RunManifest::new("simulate", &args.out, args.config.as_deref(), &bytes);
    manifest.options.insert("seed".into(), cfg.seed.to_string());
    manifest.options.insert(
        "level".into(),
        match args.level {
            SimLevel::Raw => "raw",
            SimLevel::Panel => "panel",
        }
        .into(),
    );
    manifest.write(&args.out)?;
    match args.level {
        SimLevel::Raw => write_raw_streams(&cfg, &args.out),
        SimLevel::Panel => write_feature_panel(&cfg, &args.out),
    }
}

#[derive(Debug, Clone)]
pub struct ReportArgs {
    pub features: PathBuf,
    pub out: PathBuf,
}

/// Writes `seasonal_profile.csv`.
pub fn cmd_report(args: &ReportArgs) -> Result<Vec<ProfileRow>> {
    let bytes = read_bytes(&args.features)?;
    let mut manifest = RunManifest::new("report", &args.out, None, &bytes);
    manifest.inputs.insert("features.csv".into(), args.features.clone());
    manifest.write(&args.out)?;
    let table = FeatureTable::read_csv(&bytes[..], &args.features)?;
    let rows = seasonal_profile_report(&table)?;
    write_profile_csv(create(&args.out.join("seasonal_profile.csv"))?, &rows)?;
    Ok(rows)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract {
            input,
            config,
            out,
            bin_minutes,
            l5m10_mode,
        } => cmd_extract(&ExtractArgs {
            input,
            config,
            out,
            bin_minutes,
            l5m10_mode: l5m10_mode.map(|m| match m {
                ModeArg::Profile => L5M10Mode::Profile,
                ModeArg::PerDay => L5M10Mode::PerDay,
            }),
        })
        .map(|_| ()),
        Command::Fit {
            features,
            config,
            out,
            subset,
        } => cmd_fit(&FitArgs {
            features,
            config,
            out,
            subset,
        })
        .map(|_| ()),
        Command::Simulate {
            config,
            out,
            seed,
            level,
        } => cmd_simulate(&SimulateArgs {
            config,
            out,
            seed,
            level,
        })
        .map(|_| ()),
        Command::Report { features, out } => cmd_report(&ReportArgs { features, out }).map(|_| ()),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let threads = cli.threads;
    let result = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| dispatch(cli)),
            Err(e) => Err(Error::Config(format!("thread pool: {e}"))),
        },
        None => dispatch(cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
