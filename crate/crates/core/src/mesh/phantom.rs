//! Procedural four-chamber phantom built from subdivided icosahedra.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AnatomicalMesh, Landmarks, StructureId};
use crate::Vec3;

/// Rotates the base icosahedron about z so that vertices 2 and 1 sit exactly
/// on the -y and +y poles.
fn pole_aligned(p: Vec3) -> Vec3 {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let r = (1.0 + t * t).sqrt();
    // rotation taking (-1, -t)/r to (0, -1)
    let (c, s) = (t / r, 1.0 / r);
    Vec3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z)
}

/// Unit icosphere after `subdivisions` rounds of 4-to-1 splitting. Faces are
/// counter-clockwise seen from outside.
pub fn icosphere(subdivisions: u32) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| pole_aligned(Vec3::from(*p).normalize()))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = if a < b { (a, b) } else { (b, a) };
            *midpoint.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (vertices, faces)
}

/// Ellipsoid parameters of one chamber.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chamber {
    pub center: Vec3,
    pub semi_axes: Vec3,
}

/// Construction parameters of a phantom heart. Model frame: +y points from the
/// apex towards the atria, +x towards the left heart, +z anterior.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomShape {
    pub lv: Chamber,
    pub rv: Chamber,
    pub la: Chamber,
    pub ra: Chamber,
}

const VALVE_GAP_MM: f64 = 8.0;
const SEPTUM_GAP_MM: f64 = 5.0;
const NOMINAL_SEMI_AXES: [[f64; 3]; 4] = [
    [22.0, 42.0, 22.0], // LV
    [19.0, 36.0, 17.0], // RV
    [18.0, 20.0, 17.0], // LA
    [18.0, 21.0, 17.0], // RA
];
/// Per-axis relative perturbation of the semi-axes.
const AXIS_JITTER: f64 = 0.12;
const DEPTH_JITTER_MM: f64 = 3.0;

impl PhantomShape {
    pub fn nominal() -> Self {
        Self::from_axes(NOMINAL_SEMI_AXES.map(Vec3::from), [0.0; 4])
    }

    /// Seeded patient-like variation of the nominal shape.
    pub fn sample(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axes = NOMINAL_SEMI_AXES.map(|a| {
            Vec3::from(a).map(|c| c * rng.random_range(1.0 - AXIS_JITTER..=1.0 + AXIS_JITTER))
        });
        let depth = [0; 4].map(|_| rng.random_range(-DEPTH_JITTER_MM..=DEPTH_JITTER_MM));
        Self::from_axes(axes, depth)
    }

    /// Ventricles hang below the valve plane (y = 0), atria sit above it; left
    /// and right chambers are separated by the septal gap.
    fn from_axes(axes: [Vec3; 4], depth: [f64; 4]) -> Self {
        let place = |a: Vec3, left: bool, upper: bool, dz: f64| {
            let x = SEPTUM_GAP_MM / 2.0 + a.x;
            let y = VALVE_GAP_MM / 2.0 + a.y;
            Chamber {
                center: Vec3::new(if left { x } else { -x }, if upper { y } else { -y }, dz),
                semi_axes: a,
            }
        };
        PhantomShape {
            lv: place(axes[0], true, false, depth[0]),
            rv: place(axes[1], false, false, depth[1]),
            la: place(axes[2], true, true, depth[2]),
            ra: place(axes[3], false, true, depth[3]),
        }
    }

    pub fn chamber(&self, s: StructureId) -> &Chamber {
        match s {
            StructureId::LV => &self.lv,
            StructureId::RV => &self.rv,
            StructureId::LA => &self.la,
            StructureId::RA => &self.ra,
        }
    }

    pub fn landmarks(&self) -> Landmarks {
        let lv = &self.lv;
        let apex = lv.center - Vec3::new(0.0, lv.semi_axes.y, 0.0);
        let mitral = Vec3::new(lv.center.x, 0.0, lv.center.z);
        let tricuspid = Vec3::new(self.rv.center.x, 0.0, self.rv.center.z);
        let aortic = Vec3::new(
            lv.center.x - 0.5 * lv.semi_axes.x,
            0.0,
            lv.center.z + 0.5 * lv.semi_axes.z,
        );
        Landmarks {
            lv_apex: apex.into(),
            mitral_center: mitral.into(),
            tricuspid_center: tricuspid.into(),
            aortic_valve_center: aortic.into(),
        }
    }

    /// Ventricles use `detail` subdivisions, atria one fewer.
    pub fn build(&self, detail: u32, mesh_id: impl Into<String>) -> AnatomicalMesh {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        let mut labels = Vec::new();
        for s in StructureId::ALL {
            let level = match s {
                StructureId::LV | StructureId::RV => detail,
                StructureId::LA | StructureId::RA => detail.saturating_sub(1),
            };
            let (unit, tris) = icosphere(level);
            let ch = self.chamber(s);
            let base = vertices.len();
            vertices.extend(unit.iter().map(|u| ch.center + u.component_mul(&ch.semi_axes)));
            faces.extend(tris.iter().map(|f| f.map(|i| i + base)));
            labels.extend(std::iter::repeat_n(s, unit.len()));
        }
        AnatomicalMesh::new(vertices, faces, labels, self.landmarks(), mesh_id)
            .expect("phantom construction yields a valid mesh")
    }
}

/// Seeded phantom; `detail` >= 1 controls the subdivision level.
pub fn generate_phantom(seed: u64, detail: u32) -> AnatomicalMesh {
    PhantomShape::sample(seed).build(detail.max(1), format!("phantom_{seed:04}"))
}
