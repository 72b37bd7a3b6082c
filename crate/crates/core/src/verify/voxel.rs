//! Point-in-mesh sampling of a cut plane, independent of contour chaining.
//!
//! Each sample row is a 3D line inside the cut plane; its crossings with every
//! triangle are found in model space with a Moller-Trumbore test, and a sample
//! is inside a structure when an odd number of crossings lies to its right.

use crate::mesh::{AnatomicalMesh, StructureId};
use crate::view::{LabelImage, PlanePose, DRAW_ORDER};
use crate::Vec3;

/// Regular sample grid in plane-frame units: sample (i, j) sits at
/// `origin + ((i + 0.5) * step, (j + 0.5) * step)`.
#[derive(Clone, Copy, Debug)]
pub struct PlaneGrid {
    pub origin: [f64; 2],
    pub step: f64,
    pub cols: usize,
    pub rows: usize,
}

/// Per-structure inside masks (row-major, `rows * cols`), indexed like
/// [`StructureId::ALL`].
pub fn inside_masks(mesh: &AnatomicalMesh, pose: &PlanePose, grid: &PlaneGrid) -> [Vec<bool>; 4] {
    let plane: Vec<Vec3> = mesh.vertices.iter().map(|v| pose.apply(*v)).collect();
    let dir = pose.apply_inverse(Vec3::new(1.0, 0.0, 0.0)) - pose.apply_inverse(Vec3::zeros());
    let mut masks: [Vec<bool>; 4] = Default::default();
    for s in StructureId::ALL {
        let tris: Vec<[usize; 3]> = mesh.faces_of(s).copied().collect();
        let mask = &mut masks[s.index()];
        mask.resize(grid.rows * grid.cols, false);
        let mut hits: Vec<f64> = Vec::new();
        for row in 0..grid.rows {
            let yc = grid.origin[1] + (row as f64 + 0.5) * grid.step;
            let origin = pose.apply_inverse(Vec3::new(0.0, yc, 0.0));
            hits.clear();
            for t in &tris {
                // cull triangles whose plane-frame extent cannot meet this row
                let (zs, ys) = (t.map(|i| plane[i].z), t.map(|i| plane[i].y));
                let zmin = zs.iter().cloned().fold(f64::INFINITY, f64::min);
                let zmax = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let ymin = ys.iter().cloned().fold(f64::INFINITY, f64::min);
                let ymax = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if zmin > 0.0 || zmax < 0.0 || ymin > yc || ymax < yc {
                    continue;
                }
                let p = t.map(|i| mesh.vertices[i]);
                if let Some(s_hit) = line_triangle(origin, dir, p) {
                    hits.push(s_hit);
                }
            }
            for col in 0..grid.cols {
                let xc = grid.origin[0] + (col as f64 + 0.5) * grid.step;
                let right = hits.iter().filter(|&&h| h > xc).count();
                mask[row * grid.cols + col] = right % 2 == 1;
            }
        }
    }
    masks
}

/// Parameter `s` with `origin + s * dir` on the triangle, if any.
fn line_triangle(origin: Vec3, dir: Vec3, p: [Vec3; 3]) -> Option<f64> {
    let e1 = p[1] - p[0];
    let e2 = p[2] - p[0];
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-14 * e1.norm() * e2.norm() * dir.norm() {
        return None;
    }
    let inv = 1.0 / det;
    let sv = origin - p[0];
    let u = sv.dot(&h) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = sv.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&q) * inv)
}

/// Label image obtained by point-in-mesh tests at pixel centres, with the same
/// draw priority as the rasteriser.
pub fn oracle_label_image(mesh: &AnatomicalMesh, pose: &PlanePose, image_size: usize) -> LabelImage {
    let grid = PlaneGrid {
        origin: [0.0, 0.0],
        step: 1.0,
        cols: image_size,
        rows: image_size,
    };
    let masks = inside_masks(mesh, pose, &grid);
    let mut img = LabelImage::new(image_size);
    for s in DRAW_ORDER {
        for (px, inside) in img.pixels.iter_mut().zip(&masks[s.index()]) {
            if *inside {
                *px = s.code();
            }
        }
    }
    img
}

/// Per-structure cross-section area (plane units squared) from sampling the
/// plane at `step` over the mesh's plane-frame bounding box.
pub fn oracle_areas(mesh: &AnatomicalMesh, pose: &PlanePose, step: f64) -> [f64; 4] {
    let plane: Vec<Vec3> = mesh.vertices.iter().map(|v| pose.apply(*v)).collect();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &plane {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let grid = PlaneGrid {
        origin: [lo[0] - step, lo[1] - step],
        step,
        cols: ((hi[0] - lo[0]) / step).ceil() as usize + 2,
        rows: ((hi[1] - lo[1]) / step).ceil() as usize + 2,
    };
    let masks = inside_masks(mesh, pose, &grid);
    masks.map(|m| m.iter().filter(|b| **b).count() as f64 * step * step)
}

/// Foreground IoU of two label images: pixels with equal nonzero labels over
/// pixels that are nonzero in either image. Two empty images score 1.
pub fn label_iou(a: &LabelImage, b: &LabelImage) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.pixels.iter().zip(&b.pixels) {
        if x != 0 || y != 0 {
            union += 1;
            if x == y {
                inter += 1;
            }
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
