//! Synthetic view samples: generation, file layout and manifests.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! <root>/manifest.json
//! <root>/train/sample_000000.pgm + .meta
//! <root>/val/...
//! <root>/test/...
//! ```

mod io;

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mesh::AnatomicalMesh;
use crate::view::{
    apply_sector, make_sector, rasterize, sample_pose, slice_mesh, standard_frame, to_plane_coords,
    FrameConfig, ImagePlacement, LabelImage, PlanePose, PoseSamplingLimits, SectorCone, ViewLabel,
};
use crate::{parallel, Error, Result, Vec3};

pub use io::{read_pgm, read_sample, sample_stem, write_pgm, write_sample};

pub const GENERATOR_VERSION: &str = "echoview-gen/1";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One training example. `gt_coords` are plane-frame pixel coordinates of every
/// template vertex; the image plane is z = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewSample {
    pub sample_id: u64,
    pub mesh_id: String,
    pub view: ViewLabel,
    pub image: LabelImage,
    pub gt_coords: Vec<Vec3>,
    pub pose: PlanePose,
    pub sector: SectorCone,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.dir_name() == s)
            .ok_or_else(|| format!("unknown split {s:?} (expected train, val or test)"))
    }
}

/// Fractions of meshes held out for validation and test; meshes are assigned
/// in input order: train first, then val, then test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitPlan {
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            val_fraction: 0.1,
            test_fraction: 0.1,
        }
    }
}

impl SplitPlan {
    pub fn all_train() -> Self {
        SplitPlan {
            val_fraction: 0.0,
            test_fraction: 0.0,
        }
    }

    pub fn assign(&self, mesh_count: usize) -> Vec<Split> {
        let n_val = (mesh_count as f64 * self.val_fraction).floor() as usize;
        let n_test = (mesh_count as f64 * self.test_fraction).floor() as usize;
        let n_train = mesh_count.saturating_sub(n_val + n_test).max(1.min(mesh_count));
        let n_val = n_val.min(mesh_count - n_train);
        (0..mesh_count)
            .map(|i| {
                if i < n_train {
                    Split::Train
                } else if i < n_train + n_val {
                    Split::Val
                } else {
                    Split::Test
                }
            })
            .collect()
    }
}

/// Everything that determines the generated samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub per_view_count: usize,
    pub image_size: usize,
    pub seed: u64,
    pub field_of_view_mm: f64,
    pub limits: PoseSamplingLimits,
    pub frames: FrameConfig,
    pub split: SplitPlan,
    /// Views to generate, each `per_view_count` times per mesh.
    #[serde(default = "all_views")]
    pub views: Vec<ViewLabel>,
}

fn all_views() -> Vec<ViewLabel> {
    ViewLabel::ALL.to_vec()
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            per_view_count: 4,
            image_size: 64,
            seed: 0,
            field_of_view_mm: 200.0,
            limits: PoseSamplingLimits::default(),
            frames: FrameConfig::default(),
            split: SplitPlan::default(),
            views: all_views(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        let mut views = self.views.clone();
        views.sort();
        views.dedup();
        if views.is_empty() || views.len() != self.views.len() {
            return Err(Error::Config("views must be a non-empty list without repeats".into()));
        }
        if self.per_view_count == 0 {
            return Err(Error::Config("per_view_count must be at least 1".into()));
        }
        if self.image_size < 16 {
            return Err(Error::Config(format!("image_size {} must be at least 16", self.image_size)));
        }
        if !(self.field_of_view_mm > 0.0) {
            return Err(Error::Config("field_of_view_mm must be positive".into()));
        }
        let SplitPlan {
            val_fraction,
            test_fraction,
        } = self.split;
        if !(0.0..1.0).contains(&val_fraction) || !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::Config("split fractions must lie in [0, 1)".into()));
        }
        self.limits.validate()
    }

    pub fn placement(&self) -> ImagePlacement {
        ImagePlacement::new(self.image_size, self.field_of_view_mm)
    }
}

/// Generates one sample. The RNG stream is keyed by `sample_id`, so a sample
/// only depends on (seed, sample_id, mesh, view).
pub fn generate_sample(
    mesh: &AnatomicalMesh,
    view: ViewLabel,
    sample_id: u64,
    config: &GenerationConfig,
) -> Result<ViewSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(sample_id);
    let frame = standard_frame(&mesh.landmarks, view, &config.frames)?;
    let pose = config
        .placement()
        .place(&sample_pose(&frame, config.limits.get(view), &mut rng));
    let raster = rasterize(&slice_mesh(mesh, &pose), config.image_size);
    let sector = make_sector(&mut rng, config.image_size);
    Ok(ViewSample {
        sample_id,
        mesh_id: mesh.mesh_id.clone(),
        view,
        image: apply_sector(&raster, &sector),
        gt_coords: to_plane_coords(&mesh.vertices, &pose),
        pose,
        sector,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub sample_id: u64,
    pub mesh_id: String,
    pub view: ViewLabel,
    /// Path of the sample stem relative to the dataset root.
    pub stem: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshEntry {
    pub mesh_id: String,
    pub split: Split,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<SampleEntry>,
    pub val: Vec<SampleEntry>,
    pub test: Vec<SampleEntry>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[SampleEntry] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut Vec<SampleEntry> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub generator_version: String,
    pub template_topology: String,
    pub vertex_count: usize,
    pub config: GenerationConfig,
    pub meshes: Vec<MeshEntry>,
    pub splits: Splits,
}

impl DatasetManifest {
    pub fn image_size(&self) -> usize {
        self.config.image_size
    }

    pub fn master_seed(&self) -> u64 {
        self.config.seed
    }

    /// Splits must be disjoint and partition by mesh.
    pub fn validate(&self) -> Result<()> {
        for entry_split in Split::ALL {
            for e in self.splits.get(entry_split) {
                let owner = self.meshes.iter().find(|m| m.mesh_id == e.mesh_id).ok_or_else(|| {
                    Error::Validation(format!("sample {} refers to unknown mesh {}", e.sample_id, e.mesh_id))
                })?;
                if owner.split != entry_split {
                    return Err(Error::Validation(format!(
                        "mesh {} appears in split {:?} but is assigned to {:?}",
                        e.mesh_id, entry_split, owner.split
                    )));
                }
            }
        }
        let mut ids: Vec<u64> = Split::ALL
            .iter()
            .flat_map(|s| self.splits.get(*s).iter().map(|e| e.sample_id))
            .collect();
        let n = ids.len();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != n {
            return Err(Error::Validation("sample ids repeat across splits".into()));
        }
        Ok(())
    }

    pub fn read(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.line(), e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        let path = root.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Loads the samples of one split in manifest order.
    pub fn load_split(&self, root: &Path, split: Split) -> Result<Vec<ViewSample>> {
        let entries = self.splits.get(split);
        let loaded = parallel::map_slice(entries, |e| read_sample(&root.join(&e.stem)));
        let samples = loaded.into_iter().collect::<Result<Vec<_>>>()?;
        for s in &samples {
            if s.gt_coords.len() != self.vertex_count {
                return Err(Error::Validation(format!(
                    "sample {} has {} vertices, manifest says {}",
                    s.sample_id,
                    s.gt_coords.len(),
                    self.vertex_count
                )));
            }
        }
        Ok(samples)
    }
}

/// Sample plan: (mesh index, view, sample id, split) for every sample, in id order.
fn plan(meshes: &[AnatomicalMesh], config: &GenerationConfig) -> Vec<(usize, ViewLabel, u64, Split)> {
    let splits = config.split.assign(meshes.len());
    let mut out = Vec::new();
    let mut id = 0u64;
    for (mi, split) in splits.iter().enumerate() {
        for &view in &config.views {
            for _ in 0..config.per_view_count {
                out.push((mi, view, id, *split));
                id += 1;
            }
        }
    }
    out
}

fn check_meshes(meshes: &[AnatomicalMesh]) -> Result<String> {
    let first = meshes
        .first()
        .ok_or_else(|| Error::Config("dataset generation needs at least one mesh".into()))?;
    let topo = first.topology_hash();
    for m in meshes {
        if m.topology_hash() != topo {
            return Err(Error::Validation(format!(
                "mesh {} does not share the template topology",
                m.mesh_id
            )));
        }
    }
    let mut ids: Vec<&str> = meshes.iter().map(|m| m.mesh_id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Validation("mesh ids must be unique".into()));
    }
    Ok(topo)
}

/// Generates all samples in memory (mesh x view x count), in sample-id order.
pub fn generate_samples(meshes: &[AnatomicalMesh], config: &GenerationConfig) -> Result<Vec<(ViewSample, Split)>> {
    config.validate()?;
    check_meshes(meshes)?;
    let plan = plan(meshes, config);
    parallel::map_slice(&plan, |&(mi, view, id, split)| {
        generate_sample(&meshes[mi], view, id, config).map(|s| (s, split))
    })
    .into_iter()
    .collect()
}

/// Generates and writes a dataset under `root`; the manifest is written last.
pub fn generate_dataset(meshes: &[AnatomicalMesh], config: &GenerationConfig, root: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let topology = check_meshes(meshes)?;
    for s in Split::ALL {
        let dir = root.join(s.dir_name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let plan = plan(meshes, config);
    let written = parallel::map_slice(&plan, |&(mi, view, id, split)| -> Result<SampleEntry> {
        let sample = generate_sample(&meshes[mi], view, id, config)?;
        write_sample(&sample, &root.join(split.dir_name()))?;
        Ok(SampleEntry {
            sample_id: id,
            mesh_id: sample.mesh_id,
            view,
            stem: format!("{}/{}", split.dir_name(), sample_stem(id)),
        })
    });
    let mut splits = Splits::default();
    for (entry, (_, _, _, split)) in written.into_iter().zip(&plan) {
        splits.get_mut(*split).push(entry?);
    }
    let assignment = config.split.assign(meshes.len());
    let manifest = DatasetManifest {
        generator_version: GENERATOR_VERSION.into(),
        template_topology: topology,
        vertex_count: meshes[0].vertex_count(),
        config: config.clone(),
        meshes: meshes
            .iter()
            .zip(assignment)
            .map(|(m, split)| MeshEntry {
                mesh_id: m.mesh_id.clone(),
                split,
            })
            .collect(),
        splits,
    };
    manifest.validate()?;
    manifest.write(root)?;
    Ok(manifest)
}
