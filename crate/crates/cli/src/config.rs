use std::path::{Path, PathBuf};

use echoview_core::dataset::{GenerationConfig, Split, SplitPlan};
use echoview_core::eval::EvalConfig;
use echoview_core::neural::TrainConfig;
use echoview_core::view::{FrameConfig, PoseSamplingLimits, ViewLabel};
use echoview_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Everything a run needs. Read from TOML; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for pose sampling and network initialisation.
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    pub image_size: usize,
    /// Output root. The `ECHOVIEW_OUT` variable and `--out` take precedence.
    pub out: Option<PathBuf>,
    pub prepare: PrepareConfig,
    pub views: FrameConfig,
    pub sampling: SamplingConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareConfig {
    pub phantom_seeds: Vec<u64>,
    /// Icosphere subdivisions of the phantom ventricles.
    pub phantom_detail: u32,
    /// Extra subject meshes (OBJ with landmark sidecars).
    pub mesh_paths: Vec<PathBuf>,
    /// Vertex budget of the template; `None` keeps the first subject as is.
    pub template_vertices: Option<usize>,
    pub rigid_prealign: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub per_view_count: usize,
    pub field_of_view_mm: f64,
    pub split: SplitPlan,
    pub limits: PoseSamplingLimits,
    pub views: Vec<ViewLabel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub encoder_channels: Vec<usize>,
    pub channel_plan: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub split: Split,
    /// Score the ground truth itself instead of model predictions.
    pub gt_as_prediction: bool,
    /// Marker tolerance in mm; defaults to 2% of the template diagonal.
    pub marker_epsilon: Option<f64>,
    pub depth_weight: f64,
    pub bbox_depth_frac: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: 0,
            image_size: 64,
            out: None,
            prepare: PrepareConfig::default(),
            views: FrameConfig::default(),
            sampling: SamplingConfig::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            phantom_seeds: vec![0, 1, 2, 3],
            phantom_detail: 3,
            mesh_paths: Vec::new(),
            template_vertices: Some(500),
            rigid_prealign: false,
        }
    }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            per_view_count: 4,
            field_of_view_mm: 200.0,
            split: SplitPlan::default(),
            limits: PoseSamplingLimits::default(),
            views: ViewLabel::ALL.to_vec(),
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            encoder_channels: echoview_core::neural::Architecture::DEFAULT_ENCODER.to_vec(),
            channel_plan: echoview_core::neural::Architecture::DEFAULT_PLAN.to_vec(),
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            split: Split::Test,
            gt_as_prediction: false,
            marker_epsilon: None,
            depth_weight: EvalConfig::default().depth_weight,
            bbox_depth_frac: EvalConfig::default().bbox_depth_frac,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0);
            Error::Config(format!("{}:{line}: {}", path.display(), e.message()))
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut config = config;
        for p in &mut config.prepare.mesh_paths {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.prepare.phantom_seeds.is_empty() && self.prepare.mesh_paths.is_empty() {
            return Err(Error::Config("prepare: no phantom_seeds and no mesh_paths".into()));
        }
        if !(1..=5).contains(&self.prepare.phantom_detail) {
            return Err(Error::Config("prepare.phantom_detail must be between 1 and 5".into()));
        }
        for p in &self.prepare.mesh_paths {
            if !p.is_file() {
                return Err(Error::Config(format!("prepare.mesh_paths: {} does not exist", p.display())));
            }
        }
        if let Some(eps) = self.eval.marker_epsilon {
            if !(eps > 0.0) {
                return Err(Error::Config("eval.marker_epsilon must be positive".into()));
            }
        }
        self.generation().validate()?;
        self.train.validate()?;
        let m = self.eval_metrics();
        if !(m.depth_weight >= 0.0) || !(m.bbox_depth_frac > 0.0) {
            return Err(Error::Config("eval.depth_weight must be >= 0 and eval.bbox_depth_frac > 0".into()));
        }
        self.architecture(1).validate()
    }

    pub fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            per_view_count: self.sampling.per_view_count,
            image_size: self.image_size,
            seed: self.seed,
            field_of_view_mm: self.sampling.field_of_view_mm,
            limits: self.sampling.limits,
            frames: self.views,
            split: self.sampling.split,
            views: self.sampling.views.clone(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn eval_metrics(&self) -> EvalConfig {
        EvalConfig {
            depth_weight: self.eval.depth_weight,
            bbox_depth_frac: self.eval.bbox_depth_frac,
        }
    }

    pub fn architecture(&self, vertex_count: usize) -> echoview_core::neural::Architecture {
        echoview_core::neural::Architecture {
            image_size: self.image_size,
            encoder_channels: self.model.encoder_channels.clone(),
            channel_plan: self.model.channel_plan.clone(),
            spiral_len: self.train.spiral_len,
            vertex_count,
        }
    }
}
