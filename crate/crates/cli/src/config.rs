use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use handfield::fusion::FusionConfig;
use handfield::hand_model::{PerturbationConfig, TrajectoryConfig};
use handfield::metrics::JointMap;
use handfield::sensor_sim::SensorModelConfig;
use handfield::visibility::VisibilityOptions;
use handfield::{io, FieldOfView, HandModel, Layout, SwarmConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Which sensor layout a command uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LayoutChoice {
    Initial,
    OptimizedTable2,
    File(PathBuf),
}

impl FromStr for LayoutChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "" => Err("layout must be 'initial', 'optimized-table2' or a file path".into()),
            "initial" => Ok(LayoutChoice::Initial),
            "optimized-table2" => Ok(LayoutChoice::OptimizedTable2),
            path => Ok(LayoutChoice::File(PathBuf::from(path))),
        }
    }
}

impl TryFrom<String> for LayoutChoice {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<LayoutChoice> for String {
    fn from(c: LayoutChoice) -> String {
        c.to_string()
    }
}

impl fmt::Display for LayoutChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayoutChoice::Initial => f.write_str("initial"),
            LayoutChoice::OptimizedTable2 => f.write_str("optimized-table2"),
            LayoutChoice::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl LayoutChoice {
    pub fn load(&self) -> Result<Layout, CliError> {
        let layout = match self {
            LayoutChoice::Initial => Layout::initial(),
            LayoutChoice::OptimizedTable2 => Layout::reference_optimized(),
            LayoutChoice::File(path) => {
                let file = crate::open_input(path)?;
                serde_json::from_reader(file)
                    .map_err(|e| CliError::usage(format!("{}: bad layout file: {e}", path.display())))?
            }
        };
        if layout.sensors.is_empty() {
            return Err(CliError::usage(format!("layout '{self}' has no sensors")));
        }
        let mut ids: Vec<u32> = layout.sensors.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::usage(format!("layout '{self}' repeats a sensor id")));
        }
        Ok(layout)
    }
}

/// Everything a pipeline run depends on, in one JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Monte Carlo expansion seed.
    pub seed: u64,
    pub samples_per_frame: usize,
    pub model: HandModel,
    pub trajectories: TrajectoryConfig,
    pub perturbation: PerturbationConfig,
    /// Pyramid used for placement scoring and ray tracing. The sensing
    /// pyramid is `sensor.fov`.
    pub optimization_fov: FieldOfView,
    pub visibility: VisibilityOptions,
    pub swarm: SwarmConfig,
    pub layout: LayoutChoice,
    pub sensor: SensorModelConfig,
    /// Sensors of the layout that `simulate` leaves out.
    pub disabled_sensors: Vec<u32>,
    pub fusion: FusionConfig,
    pub joints: JointMap,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 11,
            samples_per_frame: 3,
            model: HandModel::default(),
            trajectories: TrajectoryConfig::default(),
            perturbation: PerturbationConfig::default(),
            optimization_fov: FieldOfView::optimization(),
            visibility: VisibilityOptions::default(),
            swarm: SwarmConfig::default(),
            layout: LayoutChoice::OptimizedTable2,
            sensor: SensorModelConfig::default(),
            disabled_sensors: Vec::new(),
            fusion: FusionConfig::default(),
            joints: JointMap::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads a pipeline config, or a bare swarm config applied to the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let config = match serde_json::from_str::<PipelineConfig>(&text) {
            Ok(c) => c,
            Err(pipeline_err) => match serde_json::from_str::<SwarmConfig>(&text) {
                Ok(swarm) => PipelineConfig {
                    swarm,
                    ..Self::default()
                },
                Err(_) => {
                    return Err(CliError::usage(format!(
                        "{}: malformed config: {pipeline_err}",
                        path.display()
                    )))
                }
            },
        };
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        HandModel::new(self.model.dims, self.model.bounds).map_err(CliError::config)?;
        self.sensor.validate().map_err(CliError::config)?;
        self.fusion.validate().map_err(CliError::config)?;
        if self.samples_per_frame == 0 {
            return Err(CliError::usage("samples_per_frame must be at least 1"));
        }
        if let LayoutChoice::File(path) = &self.layout {
            if !path.is_file() {
                return Err(CliError::usage(format!("layout file {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(&bytes))
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            monte_carlo: self.seed,
            swarm: self.swarm.seed,
            sensor: self.sensor.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Seeds {
    pub monte_carlo: u64,
    pub swarm: u64,
    pub sensor: u64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    io::write_json(path, value).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}
