//! The run configuration: one TOML file, overridable from the command line.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wvn_core::construction::{Envelope, GrowthMode, ScalingPolicy};
use wvn_core::verify::{Experiment, Operator, Perturbation};
use wvn_core::PotentialSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Finite,
    Infinite,
}

impl From<Mode> for GrowthMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Finite => GrowthMode::Finite,
            Mode::Infinite => GrowthMode::Infinite,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Embedding,
    NoEmbedding,
}

/// `"zero"`, `"cosine amp=A freq=m"`, or a Fourier table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialConfig {
    Named(String),
    Spec(PotentialSpec),
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self::Named("zero".into())
    }
}

impl PotentialConfig {
    pub fn spec(&self) -> anyhow::Result<PotentialSpec> {
        let s = match self {
            Self::Spec(s) => return Ok(s.clone()),
            Self::Named(s) => s,
        };
        let mut words = s.split_whitespace();
        match words.next() {
            Some("zero") if words.next().is_none() => Ok(PotentialSpec::Zero),
            Some("cosine") => {
                let (mut amp, mut freq) = (None, None);
                for w in words {
                    match w.split_once('=') {
                        Some(("amp", v)) => amp = Some(v.parse::<f64>().with_context(|| format!("amp in {s:?}"))?),
                        Some(("freq", v)) => freq = Some(v.parse::<u32>().with_context(|| format!("freq in {s:?}"))?),
                        _ => bail!("unknown cosine parameter {w:?} in {s:?}"),
                    }
                }
                Ok(PotentialSpec::Cosine {
                    amp: amp.ok_or_else(|| anyhow!("cosine needs amp= in {s:?}"))?,
                    freq: freq.unwrap_or(1),
                })
            }
            _ => bail!("unknown potential {s:?}; expected \"zero\" or \"cosine amp=A freq=m\""),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    Continuous {
        #[serde(default)]
        potential: PotentialConfig,
    },
    Jacobi {
        a: Vec<f64>,
        b: Vec<f64>,
    },
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self::Continuous {
            potential: PotentialConfig::default(),
        }
    }
}

impl OperatorConfig {
    pub fn resolve(&self) -> anyhow::Result<Operator> {
        Ok(match self {
            Self::Continuous { potential } => Operator::Continuous {
                potential: potential.spec()?,
            },
            Self::Jacobi { a, b } => Operator::Jacobi {
                a: a.clone(),
                b: b.clone(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandsConfig {
    pub e_min: Option<f64>,
    pub e_max: Option<f64>,
    /// Interior `k(E)` samples per band.
    #[serde(default = "default_k_samples")]
    pub k_samples: usize,
}

fn default_k_samples() -> usize {
    10
}

impl Default for BandsConfig {
    fn default() -> Self {
        Self {
            e_min: None,
            e_max: None,
            k_samples: default_k_samples(),
        }
    }
}

fn default_perturbation() -> Perturbation {
    Perturbation {
        amplitude: 0.1,
        frequency: 2.0,
        phase: 0.0,
    }
}

fn default_start() -> f64 {
    10.0
}

fn default_horizon() -> f64 {
    1e5
}

fn default_probes() -> usize {
    8
}

fn default_slack() -> f64 {
    0.5
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub operator: OperatorConfig,
    #[serde(default)]
    pub eigenvalues: Vec<f64>,
    /// Boundary angles in `[0, π)`; drawn from `seed` when omitted.
    pub angles: Option<Vec<f64>>,
    #[serde(default)]
    pub mode: Mode,
    /// Overrides `policy.epochs`.
    pub epochs: Option<usize>,
    /// Entries override the mode's default scaling policy.
    #[serde(default)]
    pub policy: toml::Table,
    /// `h` for infinite mode; `ln(2 + x)` when omitted.
    pub envelope: Option<Envelope>,
    #[serde(default)]
    pub experiment: ExperimentKind,
    /// No-embedding energy; the first eigenvalue when omitted.
    pub energy: Option<f64>,
    #[serde(default = "default_perturbation")]
    pub perturbation: Perturbation,
    #[serde(default = "default_start")]
    pub start: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_slack")]
    pub slack: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub bands: BandsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config parses")
    }
}

/// Command-line overrides of config fields of the same names.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub epochs: Option<usize>,
    pub policy: Vec<String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        // toml's messages carry line and column
        toml::from_str(text).map_err(|e| anyhow!("config parse error: {e}"))
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) -> anyhow::Result<()> {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(m) = o.mode {
            self.mode = m;
        }
        if let Some(e) = o.epochs {
            self.epochs = Some(e);
        }
        for kv in &o.policy {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| anyhow!("--policy expects KEY=VAL, got {kv:?}"))?;
            let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {v}"))
                .map_err(|e| anyhow!("--policy {k}: {e}"))?
                .remove("v")
                .expect("parsed key");
            self.policy.insert(k.trim().to_string(), value);
        }
        Ok(())
    }

    /// The mode's default policy with the configured overrides applied.
    pub fn scaling_policy(&self) -> anyhow::Result<ScalingPolicy> {
        let base = match self.mode {
            Mode::Finite => ScalingPolicy::default(),
            Mode::Infinite => ScalingPolicy::infinite_default(),
        };
        let mut table = toml::Table::try_from(&base)?;
        for (k, v) in &self.policy {
            if !table.contains_key(k) {
                bail!("unknown policy key {k:?}");
            }
            table.insert(k.clone(), v.clone());
        }
        if let Some(e) = self.epochs {
            table.insert("epochs".into(), toml::Value::Integer(e as i64));
        }
        let p: ScalingPolicy = table.try_into().map_err(|e| anyhow!("policy: {e}"))?;
        p.validate()?;
        Ok(p)
    }

    pub fn operator(&self) -> anyhow::Result<Operator> {
        self.operator.resolve()
    }

    pub fn boundary_angles(&self) -> anyhow::Result<Vec<f64>> {
        match &self.angles {
            Some(a) if a.len() != self.eigenvalues.len() => {
                bail!("{} angles for {} eigenvalues", a.len(), self.eigenvalues.len())
            }
            Some(a) => Ok(a.clone()),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                Ok(self
                    .eigenvalues
                    .iter()
                    .map(|_| rng.gen_range(0.0..std::f64::consts::PI))
                    .collect())
            }
        }
    }

    pub fn envelope(&self) -> Envelope {
        self.envelope.unwrap_or(Envelope::Log { shift: 2.0 })
    }

    /// The embedding experiment for the configured mode.
    pub fn embedding(&self) -> anyhow::Result<Experiment> {
        let operator = self.operator()?;
        let angles = self.boundary_angles()?;
        let policy = self.scaling_policy()?;
        Ok(match self.mode {
            Mode::Finite => Experiment::EmbeddingFinite {
                operator,
                eigenvalues: self.eigenvalues.clone(),
                angles,
                policy,
            },
            Mode::Infinite => Experiment::EmbeddingInfinite {
                operator,
                eigenvalues: self.eigenvalues.clone(),
                angles,
                envelope: self.envelope(),
                policy,
            },
        })
    }

    pub fn experiment(&self) -> anyhow::Result<Experiment> {
        match self.experiment {
            ExperimentKind::Embedding => self.embedding(),
            ExperimentKind::NoEmbedding => Ok(Experiment::NoEmbedding {
                operator: self.operator()?,
                perturbation: self.perturbation,
                energy: self
                    .energy
                    .or_else(|| self.eigenvalues.first().copied())
                    .ok_or_else(|| anyhow!("no_embedding needs `energy` or one eigenvalue"))?,
                start: self.start,
                horizon: self.horizon,
                probes: self.probes,
                slack: self.slack,
            }),
        }
    }

    /// SHA-256 of the resolved configuration.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(canon.as_bytes()))
    }
}
