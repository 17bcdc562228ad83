//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use risklab::baselines::{default_ridge_grid, KernelSpec};
use risklab::rng::stream_rng_raw;
use risklab::{NoiseConfig, TeacherParams, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TeacherSpec {
    /// `W = I_d`, first `ceil(d/2)` second-layer weights `+1`, the rest `-1`.
    IdentityHalfSigns {
        d: usize,
    },
    /// Orthonormal random rows scaled to singular values from 1 down to `sigma_min`.
    RandomWellConditioned {
        d: usize,
        m: usize,
        #[serde(default = "default_sigma_min")]
        sigma_min: f64,
        #[serde(default)]
        seed: u64,
    },
    Explicit {
        a: Vec<f64>,
        w: Vec<Vec<f64>>,
    },
}

fn default_sigma_min() -> f64 {
    0.5
}

/// Stream id for drawing random teachers, separate from every per-run stream.
const TEACHER_STREAM: u64 = 0x7e;

impl TeacherSpec {
    pub fn build(&self) -> Result<TeacherParams> {
        let teacher = match self {
            TeacherSpec::IdentityHalfSigns { d } => {
                if *d < 2 {
                    return Err(CliError::Invalid(format!(
                        "teacher d must be >= 2, got {d}"
                    )));
                }
                TeacherParams::identity_half_signs(*d)
            }
            TeacherSpec::RandomWellConditioned {
                d,
                m,
                sigma_min,
                seed,
            } => {
                let mut rng = stream_rng_raw(*seed, TEACHER_STREAM);
                TeacherParams::random_well_conditioned(*m, *d, *sigma_min, &mut rng)?
            }
            TeacherSpec::Explicit { a, w } => {
                let m = w.len();
                let d = w.first().map_or(0, Vec::len);
                if w.iter().any(|row| row.len() != d) {
                    return Err(CliError::Invalid(
                        "teacher rows have different lengths".into(),
                    ));
                }
                let w = Array2::from_shape_vec((m, d), w.concat())
                    .map_err(|e| CliError::Invalid(e.to_string()))?;
                TeacherParams::new(Array1::from(a.clone()), w)?
            }
        };
        Ok(teacher)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub n: usize,
    pub noise: NoiseConfig,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            noise: NoiseConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSpec {
    pub kernels: Vec<KernelSpec>,
    pub ridge_grid: Vec<f64>,
    pub holdout_fraction: f64,
    /// Fresh sphere points per Monte-Carlo risk estimate.
    pub mc_samples: usize,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        Self {
            kernels: vec![
                KernelSpec::ArcCosine1,
                KernelSpec::Rbf { gamma: 1.0 },
                KernelSpec::Ntk2Relu,
            ],
            ridge_grid: default_ridge_grid(),
            holdout_fraction: 0.2,
            mc_samples: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub n_list: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            n_list: vec![250, 500, 1000, 2000, 4000],
            seeds: (0..5).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSpec {
    pub d: usize,
    pub m: usize,
    /// Sample size of the datasets used for the empirical objectives.
    pub n: usize,
    pub points: usize,
}

impl Default for GradcheckSpec {
    fn default() -> Self {
        Self {
            d: 5,
            m: 3,
            n: 40,
            points: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BumpCheckSpec {
    pub dims: Vec<usize>,
    pub deltas: Vec<f64>,
    pub points: usize,
}

impl Default for BumpCheckSpec {
    fn default() -> Self {
        Self {
            dims: vec![3, 10],
            deltas: vec![0.05, 0.1, 0.25, 0.5],
            points: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapSpec {
    pub n_list: Vec<usize>,
    pub trials: usize,
    /// Size of the fixed random parameter sample searched for the supremum.
    pub thetas: usize,
}

impl Default for GapSpec {
    fn default() -> Self {
        Self {
            n_list: vec![100, 1000, 10_000],
            trials: 5,
            thetas: 1000,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub teacher: TeacherSpec,
    #[serde(default)]
    pub data: DataSpec,
    /// `train.seed` is replaced by the run seed.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub baselines: BaselineSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub gradcheck: GradcheckSpec,
    #[serde(default)]
    pub bump: BumpCheckSpec,
    #[serde(default)]
    pub gap: GapSpec,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.teacher.build()?;
        if self.data.n == 0 {
            return Err(CliError::Invalid("data.n must be >= 1".into()));
        }
        self.data.noise.validate()?;
        self.train.validate()?;
        for k in &self.baselines.kernels {
            k.validate()?;
        }
        if self.baselines.ridge_grid.is_empty()
            || self
                .baselines
                .ridge_grid
                .iter()
                .any(|l| !(*l > 0.0) || !l.is_finite())
        {
            return Err(CliError::Invalid(
                "ridge grid must be non-empty and positive".into(),
            ));
        }
        let h = self.baselines.holdout_fraction;
        if !(h > 0.0 && h < 1.0) {
            return Err(CliError::Invalid(format!(
                "holdout fraction {h} not in (0, 1)"
            )));
        }
        if self.baselines.mc_samples < 2 {
            return Err(CliError::Invalid("mc_samples must be >= 2".into()));
        }
        check_increasing("sweep.n_list", &self.sweep.n_list)?;
        if self.sweep.seeds.is_empty() {
            return Err(CliError::Invalid("sweep.seeds must not be empty".into()));
        }
        check_increasing("gap.n_list", &self.gap.n_list)?;
        if self.gap.trials == 0 || self.gap.thetas == 0 {
            return Err(CliError::Invalid(
                "gap trials and thetas must be >= 1".into(),
            ));
        }
        if self.bump.deltas.iter().any(|d| !(*d > 0.0 && *d <= 0.5)) {
            return Err(CliError::Invalid("bump deltas must lie in (0, 1/2]".into()));
        }
        if self.bump.dims.iter().any(|d| *d < 2) {
            return Err(CliError::Invalid("bump dims must be >= 2".into()));
        }
        let g = &self.gradcheck;
        if g.m == 0 || g.m > g.d || g.n == 0 {
            return Err(CliError::Invalid(
                "gradcheck needs 1 <= m <= d and n >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Training configuration with the seed replaced.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }
}

fn check_increasing(name: &str, list: &[usize]) -> Result<()> {
    if list.is_empty() || list[0] == 0 {
        return Err(CliError::Invalid(format!(
            "{name} must be non-empty and positive"
        )));
    }
    if list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Invalid(format!(
            "{name} must be strictly increasing"
        )));
    }
    Ok(())
}
