use nalgebra::Rotation3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ViewLabel;
use crate::{Error, Mat3, Result, Vec3};

/// Similarity map from model millimetres to the plane frame:
/// `p = scale * (rotation * v + translation)`. In the plane frame x and y are
/// image axes (pixels once placed) and z is depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanePose {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub scale: f64,
    pub view: ViewLabel,
}

impl PlanePose {
    pub fn identity(view: ViewLabel) -> Self {
        PlanePose {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
            scale: 1.0,
            view,
        }
    }

    #[inline]
    pub fn apply(&self, v: Vec3) -> Vec3 {
        (self.rotation * v + self.translation) * self.scale
    }

    #[inline]
    pub fn apply_inverse(&self, p: Vec3) -> Vec3 {
        self.rotation.transpose() * (p / self.scale - self.translation)
    }

    /// Pose whose `apply` is this pose's `apply_inverse`.
    pub fn inverse(&self) -> PlanePose {
        let rt = self.rotation.transpose();
        PlanePose {
            rotation: rt,
            translation: -(rt * self.translation) * self.scale,
            scale: 1.0 / self.scale,
            view: self.view,
        }
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        (self.rotation.transpose() * self.rotation - Mat3::identity()).abs().max() <= tol
            && self.rotation.determinant() > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !self.is_orthonormal(1e-9) {
            return Err(Error::Geometry("pose rotation is not orthonormal".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Geometry(format!("pose scale {} must be positive", self.scale)));
        }
        Ok(())
    }

    /// Composes with a perturbation expressed in the plane frame: rotate by
    /// `delta` about the frame origin, shift by `shift` (mm), scale by `factor`.
    pub fn perturbed(&self, delta: &Mat3, shift: Vec3, factor: f64) -> PlanePose {
        PlanePose {
            rotation: delta * self.rotation,
            translation: delta * self.translation + shift,
            scale: self.scale * factor,
            view: self.view,
        }
    }
}

/// Maps a pose in millimetres onto an image: `pixels_per_mm = image_size / field_of_view_mm`
/// and the frame origin lands on `origin_px`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagePlacement {
    pub image_size: usize,
    pub field_of_view_mm: f64,
    /// Origin position as a fraction of the image size (x, y).
    pub origin_frac: [f64; 2],
}

impl ImagePlacement {
    pub fn new(image_size: usize, field_of_view_mm: f64) -> Self {
        ImagePlacement {
            image_size,
            field_of_view_mm,
            origin_frac: [0.5, 0.62],
        }
    }

    pub fn place(&self, pose: &PlanePose) -> PlanePose {
        let s = pose.scale * self.image_size as f64 / self.field_of_view_mm;
        let off = Vec3::new(
            self.origin_frac[0] * self.image_size as f64,
            self.origin_frac[1] * self.image_size as f64,
            0.0,
        );
        PlanePose {
            rotation: pose.rotation,
            translation: pose.translation + off / s,
            scale: s,
            view: pose.view,
        }
    }
}

/// Uniform ranges `[low, high]` for one view.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRanges {
    /// Rotations about the plane-frame x, y, z axes, degrees.
    pub rotation_deg: [[f64; 2]; 3],
    /// Shifts along plane-frame x, y, z, millimetres.
    pub translation_mm: [[f64; 2]; 3],
    /// Multiplicative scale factor.
    pub scale: [f64; 2],
}

impl PoseRanges {
    pub fn zero() -> Self {
        PoseRanges {
            rotation_deg: [[0.0; 2]; 3],
            translation_mm: [[0.0; 2]; 3],
            scale: [1.0, 1.0],
        }
    }

    pub fn symmetric(tilt_deg: f64, spin_deg: f64, shift_mm: f64, depth_mm: f64, scale_frac: f64) -> Self {
        PoseRanges {
            rotation_deg: [[-tilt_deg, tilt_deg], [-tilt_deg, tilt_deg], [-spin_deg, spin_deg]],
            translation_mm: [[-shift_mm, shift_mm], [-shift_mm, shift_mm], [-depth_mm, depth_mm]],
            scale: [1.0 - scale_frac, 1.0 + scale_frac],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .rotation_deg
            .iter()
            .chain(&self.translation_mm)
            .chain(std::iter::once(&self.scale));
        for r in all {
            if !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite() {
                return Err(Error::Config(format!("range [{}, {}] is not ordered", r[0], r[1])));
            }
        }
        if self.scale[0] <= 0.0 {
            return Err(Error::Config("scale range must be positive".into()));
        }
        Ok(())
    }
}

/// Per-view sampling ranges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSamplingLimits {
    pub a2ch: PoseRanges,
    pub a4ch: PoseRanges,
    pub a5ch: PoseRanges,
    pub aplax: PoseRanges,
}

impl Default for PoseSamplingLimits {
    fn default() -> Self {
        let r = PoseRanges::symmetric(6.0, 10.0, 5.0, 3.0, 0.1);
        PoseSamplingLimits {
            a2ch: r,
            a4ch: r,
            a5ch: PoseRanges::symmetric(4.0, 10.0, 5.0, 3.0, 0.1),
            aplax: r,
        }
    }
}

impl PoseSamplingLimits {
    pub fn uniform(r: PoseRanges) -> Self {
        PoseSamplingLimits {
            a2ch: r,
            a4ch: r,
            a5ch: r,
            aplax: r,
        }
    }

    pub fn get(&self, view: ViewLabel) -> &PoseRanges {
        match view {
            ViewLabel::A2ch => &self.a2ch,
            ViewLabel::A4ch => &self.a4ch,
            ViewLabel::A5ch => &self.a5ch,
            ViewLabel::Aplax => &self.aplax,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ViewLabel::ALL.iter().try_for_each(|v| self.get(*v).validate())
    }
}

fn uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    r[0] + (r[1] - r[0]) * rng.random::<f64>()
}

/// Standard frame perturbed by uniform draws from `ranges`.
pub fn sample_pose(frame: &PlanePose, ranges: &PoseRanges, rng: &mut impl Rng) -> PlanePose {
    let angles: [f64; 3] = std::array::from_fn(|k| uniform(rng, ranges.rotation_deg[k]).to_radians());
    let shift = Vec3::from(std::array::from_fn::<f64, 3, _>(|k| uniform(rng, ranges.translation_mm[k])));
    let factor = uniform(rng, ranges.scale);
    let delta = Rotation3::from_euler_angles(angles[0], angles[1], angles[2]);
    frame.perturbed(delta.matrix(), shift, factor)
}

/// Plane-frame coordinates of every vertex.
pub fn to_plane_coords(vertices: &[Vec3], pose: &PlanePose) -> Vec<Vec3> {
    vertices.iter().map(|v| pose.apply(*v)).collect()
}
