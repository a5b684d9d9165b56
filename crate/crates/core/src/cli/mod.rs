//! Command-line front end: subcommand parsing, configuration files, run
//! manifests and exit codes.

mod commands;
mod tables;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cloudgrid::{read_cmg, CloudMaskSeries, Site};
use crate::error::{Error, Result};
use crate::io::{encode_pgm, parse_sites, write_atomic, RasterScale};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING_INPUT: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "OGSNET_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "ogsnet",
    version,
    about = "Optical ground-station network analysis",
    args_override_self = true
)]
pub struct Cli {
    /// Key/value file (`key = value` per line); its entries override flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cloud-mask series.
    Synth(SynthArgs),
    /// Per-pixel (and optionally per-site) availability.
    Availability(AvailabilityArgs),
    /// Per-site ROI time series and monthly availability.
    SiteSeries(SiteSeriesArgs),
    /// Correlation of every pixel with each site.
    CorrSurface(CorrSurfaceArgs),
    /// Pairwise site correlation matrix.
    CorrMatrix(CorrMatrixArgs),
    /// Monte Carlo distribution of available-site counts.
    Outage(OutageArgs),
    /// Greedy network site selection.
    Optimize(OptimizeArgs),
    /// Mean daily LEO link duration versus inclination.
    Passes(PassesArgs),
    /// GEO visibility and outage versus longitude.
    Geo(GeoArgs),
    /// Availability-weighted network capacity versus inclination.
    Capacity(CapacityArgs),
    /// Network summary table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Bits,
    Ascii,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 64)]
    pub n_lat: usize,
    #[arg(long, default_value_t = 64)]
    pub n_lon: usize,
    /// Southern edge of the grid, degrees.
    #[arg(long, default_value_t = -45.0, allow_negative_numbers = true)]
    pub lat_min: f64,
    /// Western edge of the grid, degrees.
    #[arg(long, default_value_t = 110.0, allow_negative_numbers = true)]
    pub lon_min: f64,
    /// Pixel edge, degrees.
    #[arg(long, default_value_t = 0.5)]
    pub pixel_size: f64,
    #[arg(long, default_value_t = 2000)]
    pub frames: usize,
    /// Gaussian correlation length of the latent field, pixels.
    #[arg(long, default_value_t = 6.0)]
    pub corr_length: f64,
    /// Uniform cloud probability.
    #[arg(long, default_value_t = 0.31, conflicts_with = "omega_field")]
    pub omega: f64,
    /// Per-pixel cloud probability matrix (north row first).
    #[arg(long)]
    pub omega_field: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Encoding::Bits)]
    pub encoding: Encoding,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AvailabilityArgs {
    #[arg(long)]
    pub masks: PathBuf,
    /// Per-pixel availability matrix.
    #[arg(long)]
    pub out: PathBuf,
    /// Grayscale raster of the availability grid.
    #[arg(long)]
    pub raster: Option<PathBuf>,
    /// Sites to tabulate; requires --site-table.
    #[arg(long, requires = "site_table")]
    pub sites: Option<PathBuf>,
    /// Per-site availability table (CSV).
    #[arg(long, requires = "sites")]
    pub site_table: Option<PathBuf>,
    #[arg(long, default_value_t = crate::cloudgrid::DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SiteSeriesArgs {
    /// Cloud-mask files, one per data source.
    #[arg(long, required = true)]
    pub masks: Vec<PathBuf>,
    #[arg(long)]
    pub sites: PathBuf,
    #[arg(long, default_value_t = crate::cloudgrid::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Long table of per-frame ROI values.
    #[arg(long)]
    pub out: PathBuf,
    /// Monthly availability table; a `_sources` table is written beside it.
    #[arg(long)]
    pub seasonal: Option<PathBuf>,
    #[arg(long, default_value_t = 3.0)]
    pub outlier_z: f64,
    #[arg(long, default_value_t = 0.01)]
    pub outlier_min_sigma: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct CorrSurfaceArgs {
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub sites: PathBuf,
    #[arg(long, default_value_t = crate::cloudgrid::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Contour levels to list.
    #[arg(long, value_delimiter = ',', default_values_t = crate::correlation::CONTOUR_LEVELS)]
    pub levels: Vec<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CorrMatrixArgs {
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub sites: PathBuf,
    #[arg(long, default_value_t = crate::cloudgrid::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[command(group = clap::ArgGroup::new("marginals").required(true).args(["avail", "omega"]))]
#[command(group = clap::ArgGroup::new("dependence").args(["corr", "r", "gamma"]))]
pub struct OutageArgs {
    /// Per-site availability table.
    #[arg(long)]
    pub avail: Option<PathBuf>,
    /// Cloud probabilities, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub omega: Option<Vec<f64>>,
    /// Repeat a single --omega value for this many sites.
    #[arg(long, requires = "omega")]
    pub n: Option<usize>,
    /// Site correlation matrix (CSV).
    #[arg(long)]
    pub corr: Option<PathBuf>,
    /// Common pairwise correlation; independent sites when no dependence is given.
    #[arg(long, allow_negative_numbers = true)]
    pub r: Option<f64>,
    /// Covariance matrix (whitespace separated).
    #[arg(long)]
    pub gamma: Option<PathBuf>,
    #[arg(long, default_value_t = crate::dgmodel::DEFAULT_SAMPLES)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Clamp cloud probabilities of 0 or 1 instead of failing.
    #[arg(long)]
    pub clamp_degenerate: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub masks: PathBuf,
    /// Sites to add.
    #[arg(long)]
    pub n: usize,
    /// Existing sites to grow from.
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    /// Scale the objective by the latitude weighting.
    #[arg(long)]
    pub lat_weight: bool,
    #[arg(long, default_value_t = crate::optimizer::LATITUDE_SLOPE, allow_negative_numbers = true)]
    pub lat_slope: f64,
    /// Apply the latitude weighting to the correlation term only.
    #[arg(long, requires = "lat_weight")]
    pub lat_weight_corr_only: bool,
    /// Weight of the cloud-fraction term.
    #[arg(long, default_value_t = 1.0)]
    pub w0: f64,
    /// Region raster matching the grid; zero pixels are excluded.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Exclusion radius around chosen sites, pixels.
    #[arg(long, default_value_t = 0.0)]
    pub min_separation: f64,
    #[arg(long, default_value_t = crate::cloudgrid::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Selection JSON; site table and step rasters are written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PassesArgs {
    #[arg(long)]
    pub sites: PathBuf,
    /// Orbit altitude, km.
    #[arg(long, default_value_t = crate::orbits::DEFAULT_ALTITUDE_KM)]
    pub alt: f64,
    /// Inclination sweep `start:stop:step`, degrees.
    #[arg(long, default_value = "20:100:5")]
    pub inc: String,
    #[arg(long, default_value_t = crate::orbits::DEFAULT_DAYS)]
    pub days: f64,
    #[arg(long, default_value_t = crate::orbits::DEFAULT_MIN_ELEVATION_DEG)]
    pub min_elev: f64,
    /// Sampling step, seconds.
    #[arg(long, default_value_t = crate::orbits::DEFAULT_STEP_S)]
    pub step: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GeoArgs {
    #[arg(long)]
    pub sites: PathBuf,
    /// Longitude sweep `start:stop:step`, degrees.
    #[arg(long, default_value = "-180:180:1", allow_hyphen_values = true)]
    pub lon: String,
    #[arg(long, default_value_t = crate::orbits::DEFAULT_MIN_ELEVATION_DEG)]
    pub min_elev: f64,
    /// Per-site availability table.
    #[arg(long)]
    pub avail: PathBuf,
    /// Site correlation matrix; independent sites when absent.
    #[arg(long)]
    pub corr: Option<PathBuf>,
    /// Draws per distinct visible set.
    #[arg(long, default_value_t = 10_000_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub clamp_degenerate: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CapacityArgs {
    /// Link-duration table from `passes`.
    #[arg(long)]
    pub tau: PathBuf,
    /// Availability table of one network, `label=path` or `path`; repeatable.
    #[arg(long, required = true)]
    pub avail: Vec<String>,
    #[arg(long, default_value_t = crate::capacity::DEFAULT_BITRATE_BPS)]
    pub bitrate: f64,
    /// Label of the network the ratios refer to; defaults to the first.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Per-inclination table; a `_summary` table is written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub masks: PathBuf,
    /// Network site table, `label=path` or `path`; repeatable.
    #[arg(long, required = true)]
    pub sites: Vec<String>,
    #[arg(long, default_value_t = crate::cloudgrid::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = crate::dgmodel::DEFAULT_SAMPLES)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub clamp_degenerate: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs the tool on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    if let Some(path) = config_path(&argv) {
        match config_args(&path) {
            Ok(extra) => argv.extend(extra),
            Err(e) => return report_error(&e),
        }
    }
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let result = match cli.threads {
        Some(0) => Err(Error::InvalidArgument("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))
            .and_then(|pool| pool.install(|| dispatch(&cli, argv))),
        None => dispatch(&cli, argv),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &Error) -> i32 {
    eprintln!("ogsnet: error: {e}");
    exit_code(e)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_MISSING_INPUT,
        e if e.is_validation() => EXIT_VALIDATION,
        _ => EXIT_FAILURE,
    }
}

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().map(|a| a.to_string_lossy());
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(|p| PathBuf::from(p.into_owned()));
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Turns `key = value` lines into trailing flags. `true` enables a switch,
/// `false` leaves it unset; other values are passed through.
fn config_args(path: &Path) -> Result<Vec<OsString>> {
    let text = crate::io::read_to_string(path)?;
    parse_config(&text)
}

fn parse_config(text: &str) -> Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("config line {}: expected key = value", i + 1)))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(Error::Parse(format!("config line {}: invalid key", i + 1)));
        }
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            v => {
                out.push(format!("--{key}").into());
                out.push(v.into());
            }
        }
    }
    Ok(out)
}

fn dispatch(cli: &Cli, argv: Vec<String>) -> Result<()> {
    let mut ctx = Ctx::new(argv, rayon::current_num_threads());
    match &cli.command {
        Command::Synth(a) => commands::synth(&mut ctx, a),
        Command::Availability(a) => commands::availability(&mut ctx, a),
        Command::SiteSeries(a) => commands::site_series(&mut ctx, a),
        Command::CorrSurface(a) => commands::corr_surface(&mut ctx, a),
        Command::CorrMatrix(a) => commands::corr_matrix(&mut ctx, a),
        Command::Outage(a) => commands::outage(&mut ctx, a),
        Command::Optimize(a) => commands::optimize(&mut ctx, a),
        Command::Passes(a) => commands::passes(&mut ctx, a),
        Command::Geo(a) => commands::geo(&mut ctx, a),
        Command::Capacity(a) => commands::capacity(&mut ctx, a),
        Command::Report(a) => commands::report(&mut ctx, a),
    }
}

#[derive(Debug, Serialize)]
struct InputRecord {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RasterRecord {
    path: String,
    width: usize,
    height: usize,
    scale: RasterScale,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    argv: &'a [String],
    parameters: serde_json::Value,
    threads: usize,
    inputs: &'a [InputRecord],
    outputs: Vec<String>,
    rasters: &'a [RasterRecord],
    results: &'a serde_json::Map<String, serde_json::Value>,
    created_utc: String,
}

/// Per-run bookkeeping. Outputs are staged in memory and only written once
/// the command has succeeded, so a failing run leaves no files behind.
pub(crate) struct Ctx {
    argv: Vec<String>,
    threads: usize,
    inputs: Vec<InputRecord>,
    pending: Vec<(PathBuf, Vec<u8>)>,
    rasters: Vec<RasterRecord>,
    results: serde_json::Map<String, serde_json::Value>,
}

impl Ctx {
    fn new(argv: Vec<String>, threads: usize) -> Self {
        Ctx {
            argv,
            threads,
            inputs: Vec::new(),
            pending: Vec::new(),
            rasters: Vec::new(),
            results: serde_json::Map::new(),
        }
    }

    pub(crate) fn input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let digest = Sha256::digest(&bytes);
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            bytes: bytes.len() as u64,
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        });
        Ok(bytes)
    }

    pub(crate) fn input_text(&mut self, path: &Path) -> Result<String> {
        String::from_utf8(self.input(path)?).map_err(|_| Error::Parse(format!("{}: not UTF-8 text", path.display())))
    }

    pub(crate) fn masks(&mut self, path: &Path) -> Result<CloudMaskSeries> {
        read_cmg(&self.input(path)?)
    }

    pub(crate) fn sites(&mut self, path: &Path) -> Result<Vec<Site>> {
        parse_sites(&self.input_text(path)?)
    }

    pub(crate) fn output(&mut self, path: &Path, bytes: impl Into<Vec<u8>>) {
        self.pending.push((path.to_path_buf(), bytes.into()));
    }

    pub(crate) fn raster(&mut self, path: &Path, values: &[f64], width: usize, height: usize) {
        let (bytes, scale) = encode_pgm(values, width, height);
        self.rasters.push(RasterRecord {
            path: path.display().to_string(),
            width,
            height,
            scale,
        });
        self.output(path, bytes);
    }

    pub(crate) fn result(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.results.insert(key.to_owned(), serde_json::to_value(value)?);
        Ok(())
    }

    /// Writes staged outputs and the manifest `<primary>.manifest.json`.
    pub(crate) fn finish(&self, command: &str, primary: &Path, params: &impl Serialize) -> Result<()> {
        for (path, bytes) in &self.pending {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            write_atomic(path, bytes)?;
        }
        let manifest = Manifest {
            tool: "ogsnet",
            version: env!("CARGO_PKG_VERSION"),
            command,
            argv: &self.argv,
            parameters: serde_json::to_value(params)?,
            threads: self.threads,
            inputs: &self.inputs,
            outputs: self.pending.iter().map(|(p, _)| p.display().to_string()).collect(),
            rasters: &self.rasters,
            results: &self.results,
            created_utc: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        write_atomic(&manifest_path(primary), &json)
    }
}

pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().map(|n| n.to_os_string()).unwrap_or_else(|| "ogsnet".into());
    name.push(".manifest.json");
    primary.with_file_name(name)
}

/// `dir/stem<suffix>` for an output path `dir/stem.ext`.
pub(crate) fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines_become_flags() {
        let args = parse_config("# comment\nsamples = 1000\nclamp_degenerate = true\nlat-weight = false\n").unwrap();
        let args: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(args, ["--samples", "1000", "--clamp-degenerate"]);
        assert!(parse_config("nonsense").is_err());
        assert!(parse_config("config = x").is_err());
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("a/sel.json"), "_sites.csv"), PathBuf::from("a/sel_sites.csv"));
        assert_eq!(manifest_path(Path::new("a/t.csv")), PathBuf::from("a/t.csv.manifest.json"));
    }

    #[test]
    fn help_and_unknown_flag_codes() {
        assert_eq!(run(["ogsnet", "--help"]), EXIT_OK);
        assert_eq!(run(["ogsnet", "outage", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["ogsnet", "frobnicate"]), EXIT_USAGE);
    }
}
