//! Experiment configuration: built-in defaults, a flat JSON config file and
//! command-line flags, merged in that order (flags win).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use mimo_ace::channel::{Normalization, Training};
use mimo_ace::comms::{Constellation, Csi, DftScaling, OfdmParams};
use mimo_ace::estimators::{AlgoConfig, Variant};
use mimo_ace::experiment::{RunConfig, Threshold};
use mimo_ace::SignalMode;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Mse,
    Ber,
    TraceStepSize,
    Sweep,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Mse => "mse",
            Command::Ber => "ber",
            Command::TraceStepSize => "trace-step-size",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

/// Where a resolved parameter came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Default,
    File,
    Flag,
}

/// Received SNR in dB, or noiseless (`inf`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr(pub Option<f64>);

impl FromStr for Snr {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "none" | "noiseless" => Ok(Snr(None)),
            other => match other.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Snr(Some(v))),
                _ => Err(CliError::Config(format!("invalid SNR `{s}` (dB value or `inf`)"))),
            },
        }
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("inf"),
        }
    }
}

impl Serialize for Snr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) => s.serialize_f64(v),
            None => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(Snr(Some(v))),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Option<Vec<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match Option::<OneOrMany<T>>::deserialize(d)? {
        None => None,
        Some(OneOrMany::One(v)) => Some(vec![v]),
        Some(OneOrMany::Many(v)) => Some(v),
    })
}

/// Every tunable key. The same struct is read from the config file and
/// from the flags; absent keys fall through to the next source.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Algorithms, e.g. `iss,vss,za-vss,rza-vss`.
    #[arg(long = "algo", value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Option::is_none")]
    pub algorithms: Option<Vec<String>>,

    /// Received SNR grid in dB (`inf` for noiseless).
    #[arg(long = "snr", value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<Vec<Snr>>,

    /// Dominant taps per link.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<Vec<usize>>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,

    /// `real` or `complex`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_t: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_r: Option<usize>,

    /// Taps per link.
    #[arg(long = "taps")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_window: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady_window: Option<usize>,

    /// `qpsk` or `gaussian`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<String>,

    /// `exact` or `expectation`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalization: Option<String>,

    /// Fixed step-size(s) of ISS variants.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,

    /// Maximal step-size(s) of VSS variants.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Option::is_none")]
    pub mu_max: Option<Vec<f64>>,

    /// VSS threshold; follows the SNR when unset.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_za: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_rza: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_rza: Option<f64>,

    /// Data constellations for `ber`, e.g. `qam16,qam64,qam128`.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Option::is_none")]
    pub constellations: Option<Vec<String>>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bits_per_point: Option<u64>,

    /// `estimated`, `perfect` or `both`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csi: Option<String>,

    /// `unitary` or `literal`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dft: Option<String>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_subcarriers: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cp_len: Option<usize>,
}

impl Settings {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// One estimator run by the experiment, with the file label it writes under.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgoEntry {
    pub label: String,
    pub algo: AlgoConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CsiSelection {
    Estimated,
    Perfect,
    Both,
}

impl CsiSelection {
    pub fn modes(self) -> &'static [Csi] {
        match self {
            CsiSelection::Estimated => &[Csi::Estimated],
            CsiSelection::Perfect => &[Csi::Perfect],
            CsiSelection::Both => &[Csi::Estimated, Csi::Perfect],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSettings {
    pub constellations: Vec<Constellation>,
    pub bits_per_point: u64,
    pub csi: CsiSelection,
    pub ofdm: OfdmParams,
}

/// Fully resolved and validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub command: Command,
    /// Shared run parameters; `algo`, `snr_db` and `t` are replaced per run.
    pub run: RunConfig,
    pub algorithms: Vec<AlgoEntry>,
    pub snr_grid: Vec<Snr>,
    pub sparsity: Vec<usize>,
    pub output_dir: PathBuf,
    pub format: Format,
    pub link: LinkSettings,
    /// Every key with its final value; usable as a config file on its own.
    pub resolved: Settings,
    pub provenance: BTreeMap<&'static str, Source>,
}

impl ExperimentSpec {
    /// Run configuration for one algorithm at one grid point.
    pub fn run_config(&self, algo: &AlgoConfig, snr: Snr, t: usize) -> RunConfig {
        RunConfig {
            algo: *algo,
            snr_db: snr.0,
            t,
            ..self.run
        }
    }

    /// JSON echo of the resolved keys and their provenance.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::json!({
            "command": self.command,
            "config": self.resolved,
            "provenance": self.provenance,
        })
    }
}

pub const DEFAULT_ALGORITHMS: [&str; 4] = ["iss-nlms", "vss-nlms", "za-vss-nlms", "rza-vss-nlms"];

fn parse_named<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| CliError::Config(format!("{key}: {e}")))
}

fn format_step(v: f64) -> String {
    format!("{v}").replace('.', "p")
}

/// Merges defaults, the optional config file and flags, then validates.
pub fn parse_config(command: Command, file: Option<&Settings>, flags: &Settings) -> Result<ExperimentSpec> {
    let empty = Settings::default();
    let file = file.unwrap_or(&empty);
    let mut provenance = BTreeMap::new();

    macro_rules! pick {
        ($field:ident, $default:expr) => {{
            let (value, source) = if let Some(v) = flags.$field.clone() {
                (v, Source::Flag)
            } else if let Some(v) = file.$field.clone() {
                (v, Source::File)
            } else {
                ($default, Source::Default)
            };
            provenance.insert(stringify!($field), source);
            value
        }};
    }
    macro_rules! pick_opt {
        ($field:ident) => {{
            let (value, source) = if flags.$field.is_some() {
                (flags.$field.clone(), Source::Flag)
            } else if file.$field.is_some() {
                (file.$field.clone(), Source::File)
            } else {
                (None, Source::Default)
            };
            provenance.insert(stringify!($field), source);
            value
        }};
    }

    let step_grid = match command {
        Command::TraceStepSize => vec![0.5, 1.0],
        _ => Vec::new(),
    };
    let default_algorithms: Vec<String> = match command {
        Command::TraceStepSize => vec!["iss-nlms".into(), "za-vss-nlms".into()],
        _ => DEFAULT_ALGORITHMS.iter().map(|s| s.to_string()).collect(),
    };
    let default_snr: Vec<Snr> = match command {
        Command::Ber => [5.0, 10.0, 15.0, 20.0, 25.0, 30.0].map(|v| Snr(Some(v))).to_vec(),
        Command::Sweep => [5.0, 10.0, 20.0].map(|v| Snr(Some(v))).to_vec(),
        _ => vec![Snr(Some(10.0))],
    };
    let default_sparsity = match command {
        Command::Sweep => vec![1, 4],
        _ => vec![1],
    };

    let algorithms = pick!(algorithms, default_algorithms);
    let snr_grid = pick!(snr_db, default_snr);
    let sparsity = pick!(sparsity, default_sparsity);
    let runs = pick!(runs, 200);
    let seed = pick!(seed, 0);
    let out = pick!(out, PathBuf::from("out"));
    let format = pick!(format, Format::Both);
    let mode = pick!(mode, SignalMode::Complex.as_str().to_string());
    let n_t = pick!(n_t, 2);
    let n_r = pick!(n_r, 2);
    let l = pick!(l, 16);
    let max_iter = pick!(max_iter, 5000);
    let tol = pick!(tol, 1e-5);
    let stop_window = pick!(stop_window, 100);
    let steady_window = pick!(steady_window, 200);
    let training = pick!(training, "qpsk".to_string());
    let normalization = pick!(normalization, "exact".to_string());
    let mu = pick!(mu, if step_grid.is_empty() { vec![0.5] } else { step_grid.clone() });
    let mu_max = pick!(mu_max, if step_grid.is_empty() { vec![1.0] } else { step_grid.clone() });
    let c = pick_opt!(c);
    let beta = pick!(beta, mimo_ace::estimators::DEFAULT_BETA);
    let gamma_za = pick_opt!(gamma_za);
    let gamma_rza = pick_opt!(gamma_rza);
    let epsilon_rza = pick!(epsilon_rza, mimo_ace::estimators::DEFAULT_EPSILON_RZA);
    let constellations = pick!(
        constellations,
        vec!["qam16".to_string(), "qam64".to_string(), "qam128".to_string()]
    );
    let bits_per_point = pick!(bits_per_point, 1_000_000);
    let csi = pick!(csi, "estimated".to_string());
    let dft = pick!(dft, "unitary".to_string());
    let num_subcarriers = pick!(num_subcarriers, l);
    let cp_len = pick!(cp_len, l);

    if algorithms.is_empty() {
        return Err(CliError::Config("algorithms must not be empty".into()));
    }
    if snr_grid.is_empty() || sparsity.is_empty() || mu.is_empty() || mu_max.is_empty() {
        return Err(CliError::Config("snr_db, sparsity, mu and mu_max need at least one value".into()));
    }
    if matches!(command, Command::Mse | Command::TraceStepSize | Command::Ber) && sparsity.len() > 1 {
        return Err(CliError::Config(format!(
            "{} takes a single sparsity value; use sweep for grids",
            command.as_str()
        )));
    }
    if matches!(command, Command::Mse | Command::TraceStepSize) && snr_grid.len() > 1 {
        return Err(CliError::Config(format!(
            "{} takes a single SNR; use sweep for grids",
            command.as_str()
        )));
    }
    if command == Command::Ber && snr_grid.iter().any(|s| s.0.is_none()) {
        return Err(CliError::Config("ber needs finite SNR values".into()));
    }

    let mut entries = Vec::new();
    for name in &algorithms {
        let variant: Variant = parse_named("algorithms", name)?;
        let steps = if variant.is_vss() { &mu_max } else { &mu };
        for &step in steps {
            let mut algo = if variant.is_vss() {
                AlgoConfig::new(variant).with_mu_max(step)
            } else {
                AlgoConfig::new(variant).with_mu(step)
            };
            algo.reset_penalties();
            algo.beta = beta;
            algo.epsilon_rza = epsilon_rza;
            if let Some(g) = gamma_za {
                algo.gamma_za = g;
            }
            if let Some(g) = gamma_rza {
                algo.gamma_rza = g;
            }
            let label = if steps.len() > 1 {
                let key = if variant.is_vss() { "mumax" } else { "mu" };
                format!("{}_{key}{}", variant.name(), format_step(step))
            } else {
                variant.name().to_string()
            };
            if entries.iter().any(|e: &AlgoEntry| e.label == label) {
                return Err(CliError::Config(format!("algorithm `{label}` listed twice")));
            }
            entries.push(AlgoEntry { label, algo });
        }
    }

    let mut run = RunConfig::new(entries[0].algo);
    run.n_t = n_t;
    run.n_r = n_r;
    run.l = l;
    run.t = sparsity[0];
    run.snr_db = snr_grid[0].0;
    run.max_iter = max_iter;
    run.tol = tol;
    run.num_runs = runs;
    run.seed = seed;
    run.mode = parse_named("mode", &mode)?;
    run.training = parse_named::<Training>("training", &training)?;
    run.normalization = parse_named::<Normalization>("normalization", &normalization)?;
    run.steady_window = steady_window;
    run.stop_window = stop_window;
    run.threshold = match c {
        Some(c) => Threshold::Fixed(c),
        None => Threshold::BySnr,
    };

    let constellation_list = constellations
        .iter()
        .map(|name| parse_named::<Constellation>("constellations", name))
        .collect::<Result<Vec<_>>>()?;
    if command == Command::Ber && constellation_list.is_empty() {
        return Err(CliError::Config("constellations must not be empty".into()));
    }
    let csi = match csi.to_ascii_lowercase().as_str() {
        "estimated" => CsiSelection::Estimated,
        "perfect" => CsiSelection::Perfect,
        "both" => CsiSelection::Both,
        other => {
            return Err(CliError::Config(format!(
                "csi: unknown value `{other}` (expected estimated|perfect|both)"
            )))
        }
    };
    let dft = match dft.to_ascii_lowercase().as_str() {
        "unitary" => DftScaling::Unitary,
        "literal" => DftScaling::Literal,
        other => {
            return Err(CliError::Config(format!(
                "dft: unknown value `{other}` (expected unitary|literal)"
            )))
        }
    };
    if bits_per_point == 0 {
        return Err(CliError::Config("bits_per_point = 0 violates bits_per_point ≥ 1".into()));
    }
    if command == Command::Ber {
        if num_subcarriers < l {
            return Err(CliError::Config(format!(
                "num_subcarriers = {num_subcarriers} violates num_subcarriers ≥ L = {l}"
            )));
        }
        if cp_len + 1 < l {
            return Err(CliError::Config(format!("cp_len = {cp_len} violates cp_len ≥ L - 1 = {}", l - 1)));
        }
        if n_r < n_t {
            return Err(CliError::Config(format!(
                "ber needs N_r ≥ N_t for zero-forcing (got {n_r} x {n_t})"
            )));
        }
    }

    for entry in &entries {
        for &snr in &snr_grid {
            for &t in &sparsity {
                let cfg = RunConfig {
                    algo: entry.algo,
                    snr_db: snr.0,
                    t,
                    ..run
                };
                cfg.validate()
                    .map_err(|e| CliError::Config(format!("{}: {e}", entry.label)))?;
            }
        }
    }

    let resolved = Settings {
        algorithms: Some(algorithms),
        snr_db: Some(snr_grid.clone()),
        sparsity: Some(sparsity.clone()),
        runs: Some(runs),
        seed: Some(seed),
        out: Some(out.clone()),
        format: Some(format),
        mode: Some(run.mode.as_str().to_string()),
        n_t: Some(n_t),
        n_r: Some(n_r),
        l: Some(l),
        max_iter: Some(max_iter),
        tol: Some(tol),
        stop_window: Some(stop_window),
        steady_window: Some(steady_window),
        training: Some(training.to_ascii_lowercase()),
        normalization: Some(normalization.to_ascii_lowercase()),
        mu: Some(mu),
        mu_max: Some(mu_max),
        c,
        beta: Some(beta),
        gamma_za,
        gamma_rza,
        epsilon_rza: Some(epsilon_rza),
        constellations: Some(constellation_list.iter().map(|c| c.name()).collect()),
        bits_per_point: Some(bits_per_point),
        csi: Some(csi_name(csi).to_string()),
        dft: Some(dft_name(dft).to_string()),
        num_subcarriers: Some(num_subcarriers),
        cp_len: Some(cp_len),
    };

    Ok(ExperimentSpec {
        command,
        run,
        algorithms: entries,
        snr_grid,
        sparsity,
        output_dir: out,
        format,
        link: LinkSettings {
            constellations: constellation_list,
            bits_per_point,
            csi,
            ofdm: OfdmParams {
                num_subcarriers,
                cp_len,
                dft,
            },
        },
        resolved,
        provenance,
    })
}

fn csi_name(csi: CsiSelection) -> &'static str {
    match csi {
        CsiSelection::Estimated => "estimated",
        CsiSelection::Perfect => "perfect",
        CsiSelection::Both => "both",
    }
}

fn dft_name(dft: DftScaling) -> &'static str {
    match dft {
        DftScaling::Unitary => "unitary",
        DftScaling::Literal => "literal",
    }
}
