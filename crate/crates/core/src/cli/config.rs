use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arch::{plate_spec, shg_vowel_spec, vowel_numerical_spec, ArchSpec, KernelSpec};
use crate::digital::FitConfig;
use crate::error::{PatError, Result};
use crate::train::{hex, Algorithm, OptimizerConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// SHG vowel network on the formant CSV, falling back to synthetic vowels.
    VowelNumerical,
    /// Five-stage SHG network on the same vowel data.
    ShgVowel,
    /// Linear plate network on pooled MNIST.
    PlateMnist,
    /// The vowel network on synthetic vowels, whatever is on disk.
    Synthetic,
}

/// Experiment config as written by the user. Unset fields take task defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    #[serde(default)]
    pub algorithms: Option<Vec<Algorithm>>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Number of physical stages for the vowel networks.
    #[serde(default)]
    pub n_layers: Option<usize>,
    /// Plate kernel.
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    /// Replaces the task's architecture entirely.
    #[serde(default)]
    pub arch: Option<ArchSpec>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub fit: Option<FitConfig>,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    /// Maximum number of examples read from disk.
    #[serde(default)]
    pub limit: Option<usize>,
    #[serde(default)]
    pub test_fraction: Option<f64>,
    /// Digital model JSON; fitted on the fly when absent.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// Fully explicit config, echoed into every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub task: Task,
    pub algorithms: Vec<Algorithm>,
    pub seed: u64,
    pub arch: ArchSpec,
    pub train: TrainConfig,
    pub fit: FitConfig,
    pub data_dir: PathBuf,
    pub limit: Option<usize>,
    pub test_fraction: f64,
    pub model: Option<PathBuf>,
    /// Not echoed, so reruns into different directories produce identical files.
    #[serde(skip)]
    pub out: PathBuf,
}

pub const PLATE_DIM: usize = 196;

pub fn default_kernel() -> KernelSpec {
    KernelSpec::DampedCosine {
        d: PLATE_DIM,
        decay: 100.0,
        period: 9.0,
    }
}

impl RunConfig {
    pub fn new(task: Task) -> Self {
        RunConfig {
            task,
            algorithms: None,
            seed: None,
            n_layers: None,
            kernel: None,
            arch: None,
            train: None,
            fit: None,
            data_dir: None,
            limit: None,
            test_fraction: None,
            model: None,
            out: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PatError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| PatError::Config(format!("{}: {e}", path.display())))
    }

    /// Fills in task defaults. A seed given here wins over the file's seeds.
    pub fn resolve(&self, seed_override: Option<u64>, out_override: Option<&Path>) -> Result<ResolvedConfig> {
        let seed = seed_override.or(self.seed).unwrap_or(0);
        let vowel = matches!(self.task, Task::VowelNumerical | Task::Synthetic);
        let mut arch = match (&self.arch, self.task) {
            (Some(a), _) => a.clone(),
            (None, Task::VowelNumerical | Task::Synthetic) => vowel_numerical_spec(self.n_layers.unwrap_or(3), seed),
            (None, Task::ShgVowel) => shg_vowel_spec(self.n_layers.unwrap_or(5), seed),
            (None, Task::PlateMnist) => {
                let kernel = self.kernel.clone().unwrap_or_else(default_kernel);
                let d = match &kernel {
                    KernelSpec::Values { values } => values.len(),
                    KernelSpec::DampedCosine { d, .. } | KernelSpec::Impulse { d } => *d,
                };
                plate_spec(kernel, d, seed)?
            }
        };
        let mut train = self.train.clone().unwrap_or_else(|| {
            let epochs = match self.task {
                Task::PlateMnist => 200,
                Task::ShgVowel => 1000,
                _ => 3000,
            };
            TrainConfig::new(epochs, OptimizerConfig::adadelta(1.0), seed)
        });
        let mut fit = self.fit.clone().unwrap_or_else(|| FitConfig {
            reversal_augment: vowel,
            hidden: if self.task == Task::PlateMnist { vec![] } else { FitConfig::default().hidden },
            ..FitConfig::default()
        });
        if seed_override.is_some() || self.seed.is_some() {
            arch.seed = seed;
            train.seed = seed;
            fit.seed = seed;
        }
        let algorithms = self.algorithms.clone().unwrap_or_else(|| match self.task {
            Task::PlateMnist => vec![Algorithm::IdealBp],
            _ => Algorithm::ALL.to_vec(),
        });
        let resolved = ResolvedConfig {
            task: self.task,
            algorithms,
            seed,
            arch,
            train,
            fit,
            data_dir: self.data_dir.clone().unwrap_or_else(crate::data::data_dir),
            limit: self.limit.or((self.task == Task::PlateMnist).then_some(10_000)),
            test_fraction: self.test_fraction.unwrap_or(0.2),
            model: self.model.clone(),
            out: out_override.map(Path::to_path_buf).or_else(|| self.out.clone()).unwrap_or_else(|| "out".into()),
        };
        resolved.validate()?;
        Ok(resolved)
    }
}

impl ResolvedConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.train.validate()?;
        self.fit.validate()?;
        if self.algorithms.is_empty() {
            return Err(PatError::Config("no algorithms selected".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(PatError::Config(format!("test_fraction {} not in (0, 1)", self.test_fraction)));
        }
        if self.task == Task::PlateMnist {
            let (img, lab) = crate::data::mnist_paths(&self.data_dir);
            for p in [img, lab] {
                if !p.exists() {
                    return Err(PatError::Config(format!("dataset file {} not found", p.display())));
                }
            }
        }
        if let Some(m) = &self.model {
            if !m.exists() {
                return Err(PatError::Config(format!("model file {} not found", m.display())));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_json().to_string().as_bytes());
        hex(&h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let bad = r#"{"task": "synthetic", "epochz": 3}"#;
        assert!(serde_json::from_str::<RunConfig>(bad).is_err());
        let ok: RunConfig = serde_json::from_str(r#"{"task": "synthetic", "algorithms": ["pat", "ideal"]}"#).unwrap();
        assert_eq!(ok.algorithms.unwrap(), vec![Algorithm::Pat, Algorithm::IdealBp]);
    }

    #[test]
    fn seed_override_reaches_every_component() {
        let r = RunConfig::new(Task::Synthetic).resolve(Some(9), None).unwrap();
        assert_eq!((r.arch.seed, r.train.seed, r.fit.seed), (9, 9, 9));
        assert!(r.fit.reversal_augment);
        let a = RunConfig::new(Task::Synthetic).resolve(Some(1), None).unwrap();
        assert_ne!(a.hash(), r.hash());
        let elsewhere = RunConfig::new(Task::Synthetic).resolve(Some(1), Some(Path::new("x"))).unwrap();
        assert_eq!(a.hash(), elsewhere.hash());
    }

    #[test]
    fn missing_dataset_is_a_config_error() {
        let mut c = RunConfig::new(Task::PlateMnist);
        c.data_dir = Some("/nonexistent".into());
        assert!(matches!(c.resolve(None, None), Err(PatError::Config(_))));
    }
}
