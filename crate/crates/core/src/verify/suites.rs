use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck;
use super::voxel::{label_iou, oracle_label_image};
use crate::eval::{predict_view, EvalConfig};
use crate::mesh::{generate_phantom, AnatomicalMesh};
use crate::parallel;
use crate::view::{
    rasterize, sample_pose, slice_mesh, standard_frame, to_plane_coords, FrameConfig, ImagePlacement,
    PoseSamplingLimits, ViewLabel, ViewMarkerSet,
};
use crate::Result;

/// Result of one verification suite.
#[derive(Clone, Debug)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
    pub summary: String,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.cases > 0 && self.failures.is_empty()
    }
}

pub const SLICING_MIN_IOU: f64 = 0.95;

/// Rasterised slices of random phantom poses against point-in-mesh labels.
pub fn slicing_suite(seed: u64, cases: usize, image_size: usize) -> SuiteOutcome {
    let meshes: Vec<AnatomicalMesh> = (0..5).map(|k| generate_phantom(seed.wrapping_add(k), 2)).collect();
    let limits = PoseSamplingLimits::default();
    let frames = FrameConfig::default();
    let place = ImagePlacement::new(image_size, 200.0);
    let results = parallel::map_range(cases, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mesh = &meshes[rng.random_range(0..meshes.len())];
        let view = ViewLabel::ALL[rng.random_range(0..4)];
        let frame = standard_frame(&mesh.landmarks, view, &frames)?;
        let pose = place.place(&sample_pose(&frame, limits.get(view), &mut rng));
        let raster = rasterize(&slice_mesh(mesh, &pose), image_size);
        let oracle = oracle_label_image(mesh, &pose, image_size);
        Ok::<_, crate::Error>((mesh.mesh_id.clone(), view, label_iou(&raster, &oracle)))
    });
    let mut failures = Vec::new();
    let mut worst = f64::INFINITY;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((id, view, iou)) => {
                worst = worst.min(iou);
                if !(iou >= SLICING_MIN_IOU) {
                    failures.push(format!("case {i} ({id}, {view}): IoU {iou:.4}"));
                }
            }
            Err(e) => failures.push(format!("case {i}: {e}")),
        }
    }
    SuiteOutcome {
        name: "slicing",
        cases,
        summary: format!("{cases} poses at {image_size}px, worst IoU {worst:.4} (need >= {SLICING_MIN_IOU})"),
        failures,
    }
}

/// Central-difference checks of every layer and the full model.
pub fn gradient_suite(seed: u64) -> SuiteOutcome {
    let checks = gradcheck::run_all(seed);
    let failures = checks
        .iter()
        .filter(|c| !c.passed())
        .map(|c| format!("{}: max rel. err {:.3e} (tol {:.0e})", c.name, c.max_rel_err, c.tolerance))
        .collect();
    let summary = checks
        .iter()
        .map(|c| format!("{} {:.1e}", c.name, c.max_rel_err))
        .collect::<Vec<_>>()
        .join(", ");
    SuiteOutcome {
        name: "gradients",
        cases: checks.len(),
        failures,
        summary,
    }
}

/// Ground-truth coordinates at exact standard frames must be classified as
/// the view they were cut at.
pub fn view_recovery_suite(
    meshes: &[AnatomicalMesh],
    markers: &[ViewMarkerSet],
    frames: &FrameConfig,
    image_size: usize,
    config: &EvalConfig,
) -> Result<SuiteOutcome> {
    let place = ImagePlacement::new(image_size, 200.0);
    let mut failures = Vec::new();
    let mut cases = 0;
    let mut margin = f64::INFINITY;
    for mesh in meshes {
        for view in ViewLabel::ALL {
            let pose = place.place(&standard_frame(&mesh.landmarks, view, frames)?);
            let coords = to_plane_coords(&mesh.vertices, &pose);
            let p = predict_view(&coords, markers, image_size, config)?;
            cases += 1;
            let own = p.scores[view.code()];
            let other = (0..4)
                .filter(|&k| k != view.code())
                .map(|k| p.scores[k])
                .fold(f64::INFINITY, f64::min);
            margin = margin.min(other - own);
            if p.view != view {
                failures.push(format!("{} {view}: predicted {} (scores {:?})", mesh.mesh_id, p.view, p.scores));
            }
        }
    }
    Ok(SuiteOutcome {
        name: "view-recovery",
        cases,
        summary: format!("{cases} mesh/view cases, smallest score margin {margin:.2}"),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::{prepare_corresponded, CorrespondenceOptions};
    use crate::view::{default_marker_epsilon, encode_all_markers};

    #[test]
    fn suites_pass_on_small_inputs() {
        assert!(slicing_suite(3, 4, 64).passed());
        assert!(gradient_suite(1).passed());
        let phantoms: Vec<_> = (0..3).map(|s| generate_phantom(s, 2)).collect();
        let (template, meshes) = prepare_corresponded(&phantoms, Some(400), CorrespondenceOptions::default()).unwrap();
        let frames = FrameConfig::default();
        let markers = encode_all_markers(&template, default_marker_epsilon(&template), &frames).unwrap();
        let out = view_recovery_suite(&meshes, &markers, &frames, 64, &EvalConfig::default()).unwrap();
        assert!(out.passed(), "{out:?}");
    }
}
