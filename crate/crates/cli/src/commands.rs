use std::fs;
use std::path::{Path, PathBuf};

use echoview_core::correspondence::{prepare_corresponded, CorrespondenceOptions};
use echoview_core::dataset::{generate_dataset, DatasetManifest, Split, ViewSample};
use echoview_core::eval::{build_report, write_report, EvalContext};
use echoview_core::mesh::{generate_phantom, load_mesh, save_mesh, AnatomicalMesh};
use echoview_core::neural::{
    build_spirals, load_checkpoint, predict_coords, save_checkpoint, train, write_loss_csv, CheckpointMeta, GcnModel,
    Network, Precision, PreparedSample, Scalar,
};
use echoview_core::verify::{gradient_suite, slicing_suite, view_recovery_suite, SuiteOutcome};
use echoview_core::view::{default_marker_epsilon, encode_all_markers};
use echoview_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

const PREPARED_FILE: &str = "prepared.json";
const TEMPLATE_FILE: &str = "template.obj";

/// Resolved output locations under one root.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn meshes(&self) -> PathBuf {
        self.root.join("meshes")
    }
    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }
    pub fn model(&self) -> PathBuf {
        self.root.join("model")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.model().join("checkpoint.bin")
    }
    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}

/// Record of a `prepare` run, written next to the meshes.
#[derive(Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PreparedSet {
    template_topology: String,
    vertex_count: usize,
    seed: u64,
    meshes: Vec<String>,
}

fn subjects(config: &RunConfig) -> Result<Vec<AnatomicalMesh>> {
    let p = &config.prepare;
    let mut out: Vec<AnatomicalMesh> = p
        .phantom_seeds
        .iter()
        .map(|&s| generate_phantom(s, p.phantom_detail))
        .collect();
    for path in &p.mesh_paths {
        out.push(load_mesh(path)?);
    }
    let mut ids: Vec<&str> = out.iter().map(|m| m.mesh_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("mesh id {} is used twice", w[0])));
    }
    Ok(out)
}

fn corresponded(config: &RunConfig) -> Result<(AnatomicalMesh, Vec<AnatomicalMesh>)> {
    let options = CorrespondenceOptions {
        rigid_prealign: config.prepare.rigid_prealign,
    };
    prepare_corresponded(&subjects(config)?, config.prepare.template_vertices, options)
}

pub fn prepare(config: &RunConfig, layout: &Layout) -> Result<()> {
    let (template, meshes) = corresponded(config)?;
    let dir = layout.meshes();
    mkdir(&dir)?;
    save_mesh(&template, &dir.join(TEMPLATE_FILE))?;
    for m in &meshes {
        save_mesh(m, &dir.join(format!("{}.obj", m.mesh_id)))?;
    }
    let record = PreparedSet {
        template_topology: template.topology_hash(),
        vertex_count: template.vertex_count(),
        seed: config.seed,
        meshes: meshes.iter().map(|m| m.mesh_id.clone()).collect(),
    };
    let path = dir.join(PREPARED_FILE);
    let text = serde_json::to_string_pretty(&record).expect("record serialises") + "\n";
    fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
    println!(
        "prepared {} meshes on template {} ({} vertices) in {}",
        meshes.len(),
        record.template_topology,
        record.vertex_count,
        dir.display()
    );
    Ok(())
}

fn load_template(layout: &Layout) -> Result<AnatomicalMesh> {
    let path = layout.meshes().join(TEMPLATE_FILE);
    if !path.is_file() {
        return Err(Error::Validation(format!("{} not found; run `prepare` first", path.display())));
    }
    load_mesh(&path)
}

fn load_prepared(layout: &Layout) -> Result<(AnatomicalMesh, Vec<AnatomicalMesh>)> {
    let template = load_template(layout)?;
    let path = layout.meshes().join(PREPARED_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let record: PreparedSet =
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    if record.template_topology != template.topology_hash() {
        return Err(Error::Validation(format!(
            "{} records topology {}, but the template has {}",
            path.display(),
            record.template_topology,
            template.topology_hash()
        )));
    }
    let meshes = record
        .meshes
        .iter()
        .map(|id| load_mesh(&layout.meshes().join(format!("{id}.obj"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((template, meshes))
}

pub fn generate(config: &RunConfig, layout: &Layout) -> Result<()> {
    let (_, meshes) = load_prepared(layout)?;
    let root = layout.dataset();
    let manifest = generate_dataset(&meshes, &config.generation(), &root)?;
    println!(
        "generated {} samples ({} train / {} val / {} test) at {}px from {} meshes in {}",
        manifest.splits.len(),
        manifest.splits.train.len(),
        manifest.splits.val.len(),
        manifest.splits.test.len(),
        manifest.image_size(),
        manifest.meshes.len(),
        root.display()
    );
    Ok(())
}

fn load_dataset(layout: &Layout, template: &AnatomicalMesh) -> Result<DatasetManifest> {
    let root = layout.dataset();
    let manifest = DatasetManifest::read(&root)?;
    if manifest.template_topology != template.topology_hash() {
        return Err(Error::Validation(format!(
            "dataset was generated for topology {}, template is {}",
            manifest.template_topology,
            template.topology_hash()
        )));
    }
    Ok(manifest)
}

fn train_with<T: Scalar>(
    config: &RunConfig,
    layout: &Layout,
    template: &AnatomicalMesh,
    manifest: &DatasetManifest,
    train_set: &[ViewSample],
    val_set: &[ViewSample],
) -> Result<()> {
    let tcfg = config.train_config();
    let mut arch = config.architecture(template.vertex_count());
    arch.image_size = manifest.image_size();
    let spirals = build_spirals(&template.adjacency(), &template.faces, arch.spiral_len)?;
    let model = GcnModel::<T>::new(arch.clone(), spirals, tcfg.seed)?;
    let prep = |s: &[ViewSample]| s.iter().map(PreparedSample::<T>::from_sample).collect::<Vec<_>>();
    let outcome = train(model, &tcfg, &prep(train_set), &prep(val_set))?;
    let dir = layout.model();
    mkdir(&dir)?;
    let best = &outcome.history[outcome.best_epoch - 1];
    let meta = CheckpointMeta {
        architecture: arch,
        precision: tcfg.precision,
        template_topology: template.topology_hash(),
        seed: tcfg.seed,
        epoch: outcome.best_epoch,
        steps: outcome.trainer.steps,
        val_loss: best.val_loss,
    };
    save_checkpoint(&layout.checkpoint(), &meta, &outcome.best_weights)?;
    write_loss_csv(&dir.join("loss.csv"), &outcome.history)?;
    let last = outcome.history.last().expect("at least one epoch");
    println!(
        "trained {} epochs ({} steps): final train loss {:.6}, best epoch {} -> {}",
        outcome.history.len(),
        outcome.trainer.steps,
        last.train_loss,
        outcome.best_epoch,
        layout.checkpoint().display()
    );
    Ok(())
}

pub fn train_cmd(config: &RunConfig, layout: &Layout) -> Result<()> {
    let template = load_template(layout)?;
    let manifest = load_dataset(layout, &template)?;
    let root = layout.dataset();
    let train_set = manifest.load_split(&root, Split::Train)?;
    if train_set.is_empty() {
        return Err(Error::Validation("the training split is empty".into()));
    }
    let val_set = manifest.load_split(&root, Split::Val)?;
    match config.train.precision {
        Precision::F32 => train_with::<f32>(config, layout, &template, &manifest, &train_set, &val_set),
        Precision::F64 => train_with::<f64>(config, layout, &template, &manifest, &train_set, &val_set),
    }
}

fn predictions<T: Scalar>(
    ctx: &EvalContext,
    samples: &[ViewSample],
    layout: &Layout,
    template: &AnatomicalMesh,
    weights: Network<T>,
    arch: echoview_core::neural::Architecture,
) -> Result<Vec<echoview_core::eval::SampleEval>> {
    let spirals = build_spirals(&template.adjacency(), &template.faces, arch.spiral_len)?;
    let model = GcnModel::with_network(arch, spirals, weights)?;
    let _ = layout;
    ctx.evaluate_all(samples, |s| {
        predict_coords(&model, &PreparedSample::<T>::from_sample(s).input)
    })
}

pub fn eval(config: &RunConfig, layout: &Layout) -> Result<()> {
    let template = load_template(layout)?;
    let manifest = load_dataset(layout, &template)?;
    let split = config.eval.split;
    let samples = manifest.load_split(&layout.dataset(), split)?;
    if samples.is_empty() {
        return Err(Error::Validation(format!("the {} split is empty", split.dir_name())));
    }
    let eps = config.eval.marker_epsilon.unwrap_or_else(|| default_marker_epsilon(&template));
    let ctx = EvalContext {
        structure_of_vertex: template.structure_of_vertex.clone(),
        markers: encode_all_markers(&template, eps, &manifest.config.frames)?,
        config: config.eval_metrics(),
    };
    let evals = if config.eval.gt_as_prediction {
        ctx.evaluate_all(&samples, |s| Ok(s.gt_coords.clone()))?
    } else {
        let ck = load_checkpoint(&layout.checkpoint())?;
        if ck.meta.template_topology != template.topology_hash() {
            return Err(Error::Validation(format!(
                "checkpoint was trained on topology {}, template is {}",
                ck.meta.template_topology,
                template.topology_hash()
            )));
        }
        let arch = ck.meta.architecture.clone();
        match ck.meta.precision {
            Precision::F32 => predictions::<f32>(&ctx, &samples, layout, &template, ck.network(), arch)?,
            Precision::F64 => predictions::<f64>(&ctx, &samples, layout, &template, ck.network(), arch)?,
        }
    };
    let report = build_report(&evals);
    write_report(&layout.eval(), &report, &evals)?;
    print!("{}", report.to_text());
    println!("report written to {}", layout.eval().display());
    Ok(())
}

fn print_suite(s: &SuiteOutcome) {
    let status = if s.passed() { "PASS" } else { "FAIL" };
    println!("{status} {}: {}", s.name, s.summary);
    for f in &s.failures {
        println!("    {f}");
    }
}

/// Runs every oracle suite; returns whether all passed.
pub fn verify(config: &RunConfig) -> Result<bool> {
    let slicing = slicing_suite(config.seed, 50, config.image_size.max(64));
    print_suite(&slicing);
    let grads = gradient_suite(config.seed);
    print_suite(&grads);
    let (template, meshes) = corresponded(config)?;
    let eps = config.eval.marker_epsilon.unwrap_or_else(|| default_marker_epsilon(&template));
    let markers = encode_all_markers(&template, eps, &config.views)?;
    let views = view_recovery_suite(&meshes, &markers, &config.views, config.image_size, &config.eval_metrics())?;
    print_suite(&views);
    Ok(slicing.passed() && grads.passed() && views.passed())
}
