//! Geometric evaluation of predicted meshes: view recognition by plane
//! fitting, mean keypoint error and box-level chamber localisation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::dataset::ViewSample;
use crate::mesh::StructureId;
use crate::parallel;
use crate::view::{ViewLabel, ViewMarkerSet};
use crate::{Error, Mat3, Result, Vec3};

/// Least-squares plane `{x : normal . x = offset}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneFit {
    pub normal: Vec3,
    pub offset: f64,
    /// RMS point-to-plane distance.
    pub residual: f64,
}

pub fn fit_plane(points: &[Vec3]) -> Result<PlaneFit> {
    if points.len() < 3 {
        return Err(Error::Geometry(format!("plane fit needs 3 points, got {}", points.len())));
    }
    let m = points.len() as f64;
    let c = points.iter().sum::<Vec3>() / m;
    let cov = points.iter().fold(Mat3::zeros(), |acc, p| {
        let d = p - c;
        acc + d * d.transpose()
    }) / m;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (mid, top) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if !(top > 0.0) || mid <= 1e-12 * top {
        return Err(Error::Geometry("plane fit on collinear or coincident points".into()));
    }
    let mut normal: Vec3 = eig.eigenvectors.column(order[0]).into_owned().normalize();
    if let Some(first) = normal.iter().find(|v| v.abs() > 1e-12) {
        if *first < 0.0 {
            normal = -normal;
        }
    }
    let offset = normal.dot(&c);
    let residual = (points.iter().map(|p| (normal.dot(p) - offset).powi(2)).sum::<f64>() / m).sqrt();
    Ok(PlaneFit {
        normal,
        offset,
        residual,
    })
}

/// Angle in degrees between a plane and the image plane `z = 0`.
pub fn dihedral_to_image_plane(fit: &PlaneFit) -> f64 {
    fit.normal.z.abs().min(1.0).acos().to_degrees()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Degrees of score per unit of mean marker depth relative to the image size.
    pub depth_weight: f64,
    /// Vertices within this fraction of the image size of `z = 0` define boxes.
    pub bbox_depth_frac: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            depth_weight: 90.0,
            bbox_depth_frac: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewPrediction {
    pub view: ViewLabel,
    /// Score per view in [`ViewLabel::ALL`] order; lower is better.
    pub scores: [f64; 4],
}

/// Scores each view by how well its marker vertices in the prediction lie
/// on the image plane and picks the lowest; ties go to the earlier view.
pub fn predict_view(
    pred: &[Vec3],
    markers: &[ViewMarkerSet],
    image_size: usize,
    config: &EvalConfig,
) -> Result<ViewPrediction> {
    let mut scores = [f64::INFINITY; 4];
    for view in ViewLabel::ALL {
        let set = markers
            .iter()
            .find(|m| m.view == view)
            .ok_or_else(|| Error::Config(format!("no marker set for view {view}")))?;
        let mut pts = Vec::with_capacity(set.vertex_indices.len());
        for &i in &set.vertex_indices {
            pts.push(*pred.get(i).ok_or_else(|| {
                Error::Shape(format!("marker vertex {i} out of range for {} predicted vertices", pred.len()))
            })?);
        }
        if let Ok(fit) = fit_plane(&pts) {
            let depth = pts.iter().map(|p| p.z.abs()).sum::<f64>() / pts.len() as f64;
            let s = dihedral_to_image_plane(&fit) + config.depth_weight * depth / image_size as f64;
            if s.is_finite() {
                scores[view.code()] = s;
            }
        }
    }
    let mut best = 0;
    for k in 1..4 {
        if scores[k] < scores[best] {
            best = k;
        }
    }
    Ok(ViewPrediction {
        view: ViewLabel::ALL[best],
        scores,
    })
}

/// Mean Euclidean vertex error as a percentage of the image size.
pub fn mkpts_err(pred: &[Vec3], gt: &[Vec3], image_size: usize) -> f64 {
    assert_eq!(pred.len(), gt.len(), "prediction and ground truth differ in vertex count");
    let mean = pred.iter().zip(gt).map(|(p, g)| (p - g).norm()).sum::<f64>() / pred.len() as f64;
    100.0 * mean / image_size as f64
}

/// Axis-aligned box in image coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Box2 {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Box2 {
    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]).max(0.0) * (self.max[1] - self.min[1]).max(0.0)
    }
}

/// Box around the structure's vertices lying near the image plane.
pub fn structure_bbox(
    coords: &[Vec3],
    structure_of_vertex: &[StructureId],
    structure: StructureId,
    image_size: usize,
    depth_frac: f64,
) -> Option<Box2> {
    let limit = depth_frac * image_size as f64;
    coords
        .iter()
        .zip(structure_of_vertex)
        .filter(|(p, s)| **s == structure && p.z.abs() < limit)
        .fold(None, |b: Option<Box2>, (p, _)| {
            Some(match b {
                None => Box2 {
                    min: [p.x, p.y],
                    max: [p.x, p.y],
                },
                Some(b) => Box2 {
                    min: [b.min[0].min(p.x), b.min[1].min(p.y)],
                    max: [b.max[0].max(p.x), b.max[1].max(p.y)],
                },
            })
        })
}

/// Intersection over union; two identical zero-area boxes count as 1.
pub fn bbox_iou(a: &Box2, b: &Box2) -> f64 {
    let w = (a.max[0].min(b.max[0]) - a.min[0].max(b.min[0])).max(0.0);
    let h = (a.max[1].min(b.max[1]) - a.min[1].max(b.min[1])).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else if a == b {
        1.0
    } else {
        0.0
    }
}

/// Per-sample metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleEval {
    pub sample_id: u64,
    pub view: ViewLabel,
    pub predicted: ViewPrediction,
    pub mkpts_err: f64,
    /// IoU per structure (index order of [`StructureId::ALL`]); `None` when
    /// either box is missing.
    pub iou: [Option<f64>; 4],
    pub gt_box_missing: [bool; 4],
    pub pred_box_missing: [bool; 4],
}

/// Everything needed to score predictions against a template topology.
#[derive(Clone, Debug)]
pub struct EvalContext {
    pub structure_of_vertex: Vec<StructureId>,
    pub markers: Vec<ViewMarkerSet>,
    pub config: EvalConfig,
}

impl EvalContext {
    pub fn evaluate(&self, sample: &ViewSample, pred: &[Vec3]) -> Result<SampleEval> {
        let n = self.structure_of_vertex.len();
        if pred.len() != n || sample.gt_coords.len() != n {
            return Err(Error::Shape(format!(
                "sample {}: {} predicted and {} ground-truth vertices for a {n}-vertex template",
                sample.sample_id,
                pred.len(),
                sample.gt_coords.len()
            )));
        }
        let size = sample.image.size;
        let predicted = predict_view(pred, &self.markers, size, &self.config)?;
        let mut iou = [None; 4];
        let mut gt_box_missing = [false; 4];
        let mut pred_box_missing = [false; 4];
        for s in StructureId::ALL {
            let k = s.index();
            let frac = self.config.bbox_depth_frac;
            let g = structure_bbox(&sample.gt_coords, &self.structure_of_vertex, s, size, frac);
            let p = structure_bbox(pred, &self.structure_of_vertex, s, size, frac);
            gt_box_missing[k] = g.is_none();
            pred_box_missing[k] = p.is_none();
            if let (Some(g), Some(p)) = (g, p) {
                iou[k] = Some(bbox_iou(&g, &p));
            }
        }
        Ok(SampleEval {
            sample_id: sample.sample_id,
            view: sample.view,
            predicted,
            mkpts_err: mkpts_err(pred, &sample.gt_coords, size),
            iou,
            gt_box_missing,
            pred_box_missing,
        })
    }

    /// Evaluates every sample in parallel; results keep the input order.
    pub fn evaluate_all<F>(&self, samples: &[ViewSample], predict: F) -> Result<Vec<SampleEval>>
    where
        F: Fn(&ViewSample) -> Result<Vec<Vec3>> + Sync + Send,
    {
        parallel::map_slice(samples, |s| predict(s).and_then(|p| self.evaluate(s, &p)))
            .into_iter()
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub samples: usize,
    /// Rows are true views, columns predicted views.
    pub confusion: [[usize; 4]; 4],
    /// `None` where undefined (no predictions or no support).
    pub precision: [Option<f64>; 4],
    pub recall: [Option<f64>; 4],
    /// Support-weighted mean of per-view recall.
    pub weighted_accuracy: f64,
    pub mkpts_mean: f64,
    /// Population standard deviation over samples.
    pub mkpts_std: f64,
    pub miou: [Option<f64>; 4],
    pub iou_count: [usize; 4],
    pub gt_box_missing: [usize; 4],
    pub pred_box_missing: [usize; 4],
}

pub fn build_report(evals: &[SampleEval]) -> EvalReport {
    let mut confusion = [[0usize; 4]; 4];
    let mut iou_sum = [0.0; 4];
    let mut iou_count = [0usize; 4];
    let mut gt_box_missing = [0usize; 4];
    let mut pred_box_missing = [0usize; 4];
    for e in evals {
        confusion[e.view.code()][e.predicted.view.code()] += 1;
        for k in 0..4 {
            if let Some(v) = e.iou[k] {
                iou_sum[k] += v;
                iou_count[k] += 1;
            }
            gt_box_missing[k] += e.gt_box_missing[k] as usize;
            pred_box_missing[k] += e.pred_box_missing[k] as usize;
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let support: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
    let predicted: Vec<usize> = (0..4).map(|c| confusion.iter().map(|r| r[c]).sum()).collect();
    let correct: usize = (0..4).map(|k| confusion[k][k]).sum();
    let n = evals.len();
    let mean = if n > 0 {
        evals.iter().map(|e| e.mkpts_err).sum::<f64>() / n as f64
    } else {
        f64::NAN
    };
    let var = if n > 0 {
        evals.iter().map(|e| (e.mkpts_err - mean).powi(2)).sum::<f64>() / n as f64
    } else {
        f64::NAN
    };
    EvalReport {
        samples: n,
        confusion,
        precision: std::array::from_fn(|k| ratio(confusion[k][k], predicted[k])),
        recall: std::array::from_fn(|k| ratio(confusion[k][k], support[k])),
        weighted_accuracy: ratio(correct, n).unwrap_or(f64::NAN),
        mkpts_mean: mean,
        mkpts_std: var.sqrt(),
        miou: std::array::from_fn(|k| ratio(1, iou_count[k]).map(|inv| iou_sum[k] * inv)),
        iou_count,
        gt_box_missing,
        pred_box_missing,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl EvalReport {
    /// Long-format CSV: `metric,key,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,key,value\n");
        writeln!(s, "samples,all,{}", self.samples).unwrap();
        writeln!(s, "weighted_accuracy,all,{:.6}", self.weighted_accuracy).unwrap();
        writeln!(s, "mkpts_err_mean_pct,all,{:.6}", self.mkpts_mean).unwrap();
        writeln!(s, "mkpts_err_std_pct,all,{:.6}", self.mkpts_std).unwrap();
        for v in ViewLabel::ALL {
            writeln!(s, "precision,{v},{}", opt(self.precision[v.code()])).unwrap();
            writeln!(s, "recall,{v},{}", opt(self.recall[v.code()])).unwrap();
        }
        for st in StructureId::ALL {
            let k = st.index();
            writeln!(s, "miou,{st},{}", opt(self.miou[k])).unwrap();
            writeln!(s, "iou_samples,{st},{}", self.iou_count[k]).unwrap();
            writeln!(s, "gt_box_missing,{st},{}", self.gt_box_missing[k]).unwrap();
            writeln!(s, "pred_box_missing,{st},{}", self.pred_box_missing[k]).unwrap();
        }
        s
    }

    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for v in ViewLabel::ALL {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
        for v in ViewLabel::ALL {
            write!(s, "{v}").unwrap();
            for c in self.confusion[v.code()] {
                write!(s, ",{c}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "samples: {}", self.samples).unwrap();
        writeln!(s, "weighted view accuracy: {:.4}", self.weighted_accuracy).unwrap();
        writeln!(s, "mkptsErr: {:.2} +- {:.2} % of image size", self.mkpts_mean, self.mkpts_std).unwrap();
        writeln!(s, "\nview     precision  recall  support").unwrap();
        for v in ViewLabel::ALL {
            let k = v.code();
            let support: usize = self.confusion[k].iter().sum();
            let p = self.precision[k].map_or("-".into(), |x| format!("{x:.4}"));
            let r = self.recall[k].map_or("-".into(), |x| format!("{x:.4}"));
            writeln!(s, "{:<8} {p:>9}  {r:>6}  {support:>7}", v.name()).unwrap();
        }
        writeln!(s, "\nstructure  mIoU    boxes  missing(gt/pred)").unwrap();
        for st in StructureId::ALL {
            let k = st.index();
            let m = self.miou[k].map_or("-".into(), |x| format!("{x:.4}"));
            writeln!(
                s,
                "{:<9} {m:>6}  {:>5}  {}/{}",
                st.name(),
                self.iou_count[k],
                self.gt_box_missing[k],
                self.pred_box_missing[k]
            )
            .unwrap();
        }
        writeln!(s, "\nconfusion (rows true, columns predicted)").unwrap();
        s.push_str(&self.confusion_csv());
        s
    }
}

pub fn samples_csv(evals: &[SampleEval]) -> String {
    let mut s = String::from("sample_id,view,predicted,mkpts_err_pct,iou_lv,iou_rv,iou_la,iou_ra\n");
    for e in evals {
        write!(s, "{},{},{},{:.6}", e.sample_id, e.view, e.predicted.view, e.mkpts_err).unwrap();
        for v in e.iou {
            write!(s, ",{}", opt(v)).unwrap();
        }
        s.push('\n');
    }
    s
}

/// Writes `report.csv`, `confusion.csv`, `samples.csv` and `report.txt`.
pub fn write_report(dir: &Path, report: &EvalReport, evals: &[SampleEval]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in [
        ("report.csv", report.to_csv()),
        ("confusion.csv", report.confusion_csv()),
        ("samples.csv", samples_csv(evals)),
        ("report.txt", report.to_text()),
    ] {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}
