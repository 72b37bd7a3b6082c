use nalgebra::{Rotation3, Unit};
use serde::{Deserialize, Serialize};

use super::{PlanePose, ViewLabel};
use crate::mesh::Landmarks;
use crate::{Error, Mat3, Result, Vec3};

/// Rotations that derive the other standard views from the four-chamber frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameConfig {
    /// a5ch: tilt of the a4ch plane about the in-plane lateral axis through the
    /// apex, towards the aortic valve.
    pub a5ch_tilt_deg: f64,
    /// a2ch: rotation of the a4ch frame about the apex-mitral axis.
    pub a2ch_rotation_deg: f64,
    /// aplax: rotation of the a4ch frame about the apex-mitral axis.
    pub aplax_rotation_deg: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            a5ch_tilt_deg: 15.0,
            a2ch_rotation_deg: 60.0,
            aplax_rotation_deg: 120.0,
        }
    }
}

const DEGENERATE: f64 = 1e-6;

/// Four-chamber frame: origin midway between the mitral and tricuspid centres,
/// +y from the apex towards that origin, +x towards the mitral valve, z normal.
fn a4ch_axes(lm: &Landmarks) -> Result<(Vec3, [Vec3; 3])> {
    let apex = lm.lv_apex();
    let origin = (lm.mitral() + lm.tricuspid()) * 0.5;
    let long = origin - apex;
    if long.norm() < DEGENERATE {
        return Err(Error::Geometry("apex coincides with the valve midpoint".into()));
    }
    let ey = long.normalize();
    let lateral = lm.mitral() - lm.tricuspid();
    let ortho = lateral - ey * lateral.dot(&ey);
    if ortho.norm() < DEGENERATE {
        return Err(Error::Geometry("apex and valve centres are collinear".into()));
    }
    let ex = ortho.normalize();
    let ez = ex.cross(&ey);
    Ok((origin, [ex, ey, ez]))
}

fn pose_from_axes(origin: Vec3, axes: [Vec3; 3], view: ViewLabel) -> PlanePose {
    let rotation = Mat3::from_rows(&[axes[0].transpose(), axes[1].transpose(), axes[2].transpose()]);
    PlanePose {
        rotation,
        translation: -(rotation * origin),
        scale: 1.0,
        view,
    }
}

/// Standard-view pose (unit scale) for a mesh's landmarks. Every view is the
/// four-chamber frame rotated about an axis through the LV apex.
pub fn standard_frame(lm: &Landmarks, view: ViewLabel, config: &FrameConfig) -> Result<PlanePose> {
    let (origin, axes) = a4ch_axes(lm)?;
    let apex = lm.lv_apex();
    let rotate = |axis: Vec3, deg: f64| {
        let q = Rotation3::from_axis_angle(&Unit::new_normalize(axis), deg.to_radians());
        let axes = axes.map(|a| q * a);
        (apex + q * (origin - apex), axes)
    };
    let (o, a) = match view {
        ViewLabel::A4ch => (origin, axes),
        ViewLabel::A5ch => {
            let aortic = lm.aortic();
            let plus = rotate(axes[0], config.a5ch_tilt_deg);
            let minus = rotate(axes[0], -config.a5ch_tilt_deg);
            let dist = |(o, a): &(Vec3, [Vec3; 3])| (aortic - o).dot(&a[2]).abs();
            if dist(&minus) < dist(&plus) {
                minus
            } else {
                plus
            }
        }
        ViewLabel::A2ch | ViewLabel::Aplax => {
            let axis = lm.mitral() - apex;
            if axis.norm() < DEGENERATE {
                return Err(Error::Geometry("apex coincides with the mitral centre".into()));
            }
            let deg = if view == ViewLabel::A2ch {
                config.a2ch_rotation_deg
            } else {
                config.aplax_rotation_deg
            };
            rotate(axis, deg)
        }
    };
    Ok(pose_from_axes(o, a, view))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_phantom;
    use rand::{Rng, SeedableRng};

    fn normal(p: &PlanePose) -> Vec3 {
        p.rotation.row(2).transpose()
    }

    #[test]
    fn a4ch_contains_construction_points() {
        let m = generate_phantom(0, 2);
        let lm = &m.landmarks;
        let p = standard_frame(lm, ViewLabel::A4ch, &FrameConfig::default()).unwrap();
        for q in [lm.lv_apex(), lm.mitral(), lm.tricuspid(), (lm.mitral() + lm.tricuspid()) * 0.5] {
            assert!(p.apply(q).z.abs() < 1e-6);
        }
        assert!(p.apply((lm.mitral() + lm.tricuspid()) * 0.5).norm() < 1e-9);
        assert!(p.is_orthonormal(1e-9));
    }

    #[test]
    fn view_dihedral_angles() {
        let m = generate_phantom(3, 2);
        let cfg = FrameConfig::default();
        let n4 = normal(&standard_frame(&m.landmarks, ViewLabel::A4ch, &cfg).unwrap());
        let angle = |v| {
            let n = normal(&standard_frame(&m.landmarks, v, &cfg).unwrap());
            n.dot(&n4).clamp(-1.0, 1.0).acos().to_degrees()
        };
        assert!((angle(ViewLabel::A5ch) - 15.0).abs() < 1e-6);
        assert!((angle(ViewLabel::A2ch) - 60.0).abs() < 1e-6);
        assert!((angle(ViewLabel::Aplax) - 120.0).abs() < 1e-6);
    }

    #[test]
    fn a5ch_tilts_towards_aortic_valve_and_keeps_apex() {
        let m = generate_phantom(7, 2);
        let cfg = FrameConfig::default();
        let a4 = standard_frame(&m.landmarks, ViewLabel::A4ch, &cfg).unwrap();
        let a5 = standard_frame(&m.landmarks, ViewLabel::A5ch, &cfg).unwrap();
        let ao = m.landmarks.aortic();
        assert!(a5.apply(ao).z.abs() < a4.apply(ao).z.abs());
        assert!(a5.apply(m.landmarks.lv_apex()).z.abs() < 1e-9);
    }

    #[test]
    fn a2ch_and_aplax_contain_apex_and_mitral() {
        let m = generate_phantom(2, 2);
        for v in [ViewLabel::A2ch, ViewLabel::Aplax] {
            let p = standard_frame(&m.landmarks, v, &FrameConfig::default()).unwrap();
            assert!(p.apply(m.landmarks.lv_apex()).z.abs() < 1e-9);
            assert!(p.apply(m.landmarks.mitral()).z.abs() < 1e-9);
        }
    }

    #[test]
    fn collinear_landmarks_are_rejected() {
        let lm = Landmarks {
            lv_apex: [0.0, 0.0, 0.0],
            mitral_center: [0.0, 1.0, 0.0],
            tricuspid_center: [0.0, 2.0, 0.0],
            aortic_valve_center: [1.0, 1.0, 0.0],
        };
        assert!(standard_frame(&lm, ViewLabel::A4ch, &FrameConfig::default()).is_err());
    }

    #[test]
    fn frames_are_rotation_equivariant() {
        let m = generate_phantom(1, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let cfg = FrameConfig::default();
        for _ in 0..5 {
            let axis = Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), rng.random::<f64>() * 6.0);
            let shift = Vec3::new(3.0, -4.0, 12.0);
            let moved = m.landmarks.map(|p| rot * p + shift);
            for v in ViewLabel::ALL {
                let a = standard_frame(&m.landmarks, v, &cfg).unwrap();
                let b = standard_frame(&moved, v, &cfg).unwrap();
                // R_b = R_a * rot^T
                let expected = a.rotation * rot.matrix().transpose();
                assert!((b.rotation - expected).abs().max() < 1e-9);
                for q in m.vertices.iter().step_by(37) {
                    assert!((a.apply(*q) - b.apply(rot * q + shift)).norm() < 1e-9);
                }
            }
        }
    }
}
