use serde::Deserialize;
use sha2::{Digest, Sha256};

use twoway::channel::Dmc;
use twoway::protocol::GeneralCode;
use twoway::source::{DistortionMeasure, JointSource};

use crate::CliError;

/// A whole experiment document. Every section is optional at parse time;
/// each verb asks for the ones it needs.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub out: Option<String>,
    pub source: Option<SourceSpec>,
    pub channel: Option<ChannelSpec>,
    pub channel1: Option<ChannelSpec>,
    pub channel2: Option<ChannelSpec>,
    pub distortion: Option<DistortionSpec>,
    pub distortion1: Option<DistortionSpec>,
    pub distortion2: Option<DistortionSpec>,
    pub rd: Option<RdSection>,
    pub converse: Option<ConverseSection>,
    pub kaspi: Option<KaspiSection>,
    pub separation: Option<SeparationSection>,
    pub transform: Option<TransformSection>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    DoublySymmetric { crossover: f64 },
    Independent { p1: Vec<f64>, p2: Vec<f64> },
    /// Rows indexed by x1, columns by x2.
    Joint { matrix: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    Bsc { p: f64 },
    Bec { e: f64 },
    Identity { size: usize },
    /// Rows indexed by input, columns by output.
    Matrix { matrix: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistortionSpec {
    Hamming { size: usize },
    Matrix { matrix: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RdSection {
    /// Source pmf; defaults to the first marginal of `[source]`.
    pub p: Option<Vec<f64>>,
    pub targets: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverseSection {
    /// JSON code file; when set, only this code is checked.
    pub code_file: Option<String>,
    #[serde(default = "default_codes")]
    pub codes: usize,
    #[serde(default = "default_block_lengths")]
    pub block_lengths: Vec<usize>,
    #[serde(default = "default_rounds")]
    pub rounds: Vec<usize>,
    #[serde(default = "default_round_length_max")]
    pub round_length_max: usize,
}

impl Default for ConverseSection {
    fn default() -> Self {
        Self {
            code_file: None,
            codes: default_codes(),
            block_lengths: default_block_lengths(),
            rounds: default_rounds(),
            round_length_max: default_round_length_max(),
        }
    }
}

fn default_codes() -> usize {
    100
}
fn default_block_lengths() -> Vec<usize> {
    vec![1, 2]
}
fn default_rounds() -> Vec<usize> {
    vec![2]
}
fn default_round_length_max() -> usize {
    2
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KaspiSection {
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    /// `kaspi-sweep` targets as `[d1, d2]` pairs.
    pub targets: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_q")]
    pub q: usize,
    pub aux_sizes: Option<Vec<usize>>,
    pub weights: Option<[f64; 2]>,
    pub restarts: Option<usize>,
    pub max_sweeps: Option<usize>,
}

fn default_q() -> usize {
    2
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparationSection {
    pub d1: f64,
    pub d2: f64,
    #[serde(default = "default_q")]
    pub q: usize,
    pub n: usize,
    pub margin: f64,
    pub trials: usize,
    pub restarts: Option<usize>,
    pub max_codebook_bits: Option<usize>,
    pub codebook_slack: Option<f64>,
    pub calibration_trials: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSection {
    /// JSON code file; otherwise a random code is drawn from the seed.
    pub code_file: Option<String>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_lifts")]
    pub lifts: Vec<usize>,
}

impl Default for TransformSection {
    fn default() -> Self {
        Self {
            code_file: None,
            n: default_n(),
            horizon: default_horizon(),
            lifts: default_lifts(),
        }
    }
}

fn default_n() -> usize {
    1
}
fn default_horizon() -> usize {
    3
}
fn default_lifts() -> Vec<usize> {
    vec![1, 4, 16]
}

/// Parsed config plus the hash of the bytes it came from.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub config: Config,
    pub sha256: String,
    /// Directory of the config file, for resolving relative code files.
    pub base: std::path::PathBuf,
}

pub fn parse(text: &str) -> Result<Config, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

pub fn load(path: Option<&std::path::Path>) -> Result<Loaded, CliError> {
    let Some(path) = path else {
        return Ok(Loaded {
            config: Config::default(),
            sha256: hex::encode(Sha256::digest(b"")),
            base: ".".into(),
        });
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config = parse(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok(Loaded {
        config,
        sha256: hex::encode(Sha256::digest(text.as_bytes())),
        base: path.parent().map(|p| p.to_path_buf()).unwrap_or_else(|| ".".into()),
    })
}

fn missing(section: &str) -> CliError {
    CliError::Config(format!("missing [{section}] section"))
}

fn field(section: &str, e: twoway::Error) -> CliError {
    CliError::Config(format!("[{section}]: {e}"))
}

impl SourceSpec {
    pub fn build(&self) -> Result<JointSource, CliError> {
        match self {
            SourceSpec::DoublySymmetric { crossover } => JointSource::doubly_symmetric(*crossover),
            SourceSpec::Independent { p1, p2 } => JointSource::independent(p1, p2),
            SourceSpec::Joint { matrix } => JointSource::from_rows(matrix),
        }
        .map_err(|e| field("source", e))
    }
}

impl ChannelSpec {
    pub fn build(&self, name: &str) -> Result<Dmc, CliError> {
        match self {
            ChannelSpec::Bsc { p } => Dmc::bsc(*p),
            ChannelSpec::Bec { e } => Dmc::bec(*e),
            ChannelSpec::Identity { size } => Dmc::identity(*size),
            ChannelSpec::Matrix { matrix } => Dmc::from_rows(matrix),
        }
        .map_err(|e| field(name, e))
    }
}

impl DistortionSpec {
    pub fn build(&self, name: &str) -> Result<DistortionMeasure, CliError> {
        match self {
            DistortionSpec::Hamming { size } => DistortionMeasure::hamming(*size),
            DistortionSpec::Matrix { matrix } => DistortionMeasure::from_rows(matrix),
        }
        .map_err(|e| field(name, e))
    }
}

impl Config {
    pub fn source(&self) -> Result<JointSource, CliError> {
        self.source.as_ref().ok_or_else(|| missing("source"))?.build()
    }

    /// `[channel]` alone.
    pub fn channel(&self) -> Result<Dmc, CliError> {
        self.channel.as_ref().ok_or_else(|| missing("channel"))?.build("channel")
    }

    /// `[channel1]`/`[channel2]`, each falling back to `[channel]`.
    pub fn channels(&self) -> Result<(Dmc, Dmc), CliError> {
        let pick = |own: &Option<ChannelSpec>, name: &str| -> Result<Dmc, CliError> {
            match own.as_ref().or(self.channel.as_ref()) {
                Some(s) => s.build(name),
                None => Err(missing(name)),
            }
        };
        Ok((pick(&self.channel1, "channel1")?, pick(&self.channel2, "channel2")?))
    }

    /// `[distortion1]`/`[distortion2]`, falling back to `[distortion]`,
    /// then to Hamming on the matching source alphabet.
    pub fn distortions(&self, source: &JointSource) -> Result<(DistortionMeasure, DistortionMeasure), CliError> {
        let pick = |own: &Option<DistortionSpec>, name: &str, size: usize| match own
            .as_ref()
            .or(self.distortion.as_ref())
        {
            Some(s) => s.build(name),
            None => DistortionMeasure::hamming(size).map_err(|e| field(name, e)),
        };
        Ok((
            pick(&self.distortion1, "distortion1", source.size1())?,
            pick(&self.distortion2, "distortion2", source.size2())?,
        ))
    }
}

pub fn read_code(base: &std::path::Path, file: &str) -> Result<GeneralCode, CliError> {
    let path = base.join(file);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    GeneralCode::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
