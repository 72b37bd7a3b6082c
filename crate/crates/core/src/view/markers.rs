use super::{standard_frame, FrameConfig, ViewLabel};
use crate::mesh::AnatomicalMesh;
use crate::{Error, Result};

/// Template vertices lying close to one view's standard plane.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewMarkerSet {
    pub view: ViewLabel,
    pub vertex_indices: Vec<usize>,
    pub epsilon: f64,
}

/// Two percent of the bounding-box diagonal.
pub fn default_marker_epsilon(mesh: &AnatomicalMesh) -> f64 {
    0.02 * mesh.bounds().diagonal()
}

pub fn encode_view_markers(
    template: &AnatomicalMesh,
    view: ViewLabel,
    epsilon: f64,
    frames: &FrameConfig,
) -> Result<ViewMarkerSet> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("marker epsilon {epsilon} must be positive")));
    }
    let pose = standard_frame(&template.landmarks, view, frames)?;
    let vertex_indices: Vec<usize> = template
        .vertices
        .iter()
        .enumerate()
        .filter(|(_, v)| pose.apply(**v).z.abs() <= epsilon)
        .map(|(i, _)| i)
        .collect();
    if vertex_indices.len() < 3 {
        return Err(Error::Geometry(format!(
            "only {} template vertices within {epsilon} mm of the {view} plane; increase epsilon",
            vertex_indices.len()
        )));
    }
    Ok(ViewMarkerSet {
        view,
        vertex_indices,
        epsilon,
    })
}

/// Marker sets for all four views, in [`ViewLabel::ALL`] order.
pub fn encode_all_markers(template: &AnatomicalMesh, epsilon: f64, frames: &FrameConfig) -> Result<Vec<ViewMarkerSet>> {
    ViewLabel::ALL
        .iter()
        .map(|v| encode_view_markers(template, *v, epsilon, frames))
        .collect()
}
