use std::collections::BTreeMap;

use super::PlanePose;
use crate::mesh::{ordered, AnatomicalMesh, StructureId};
use crate::Vec3;

/// Closed ring of plane-frame (x, y) points; the last point connects back to
/// the first.
pub type Polygon = Vec<[f64; 2]>;

/// All contours of one structure in a cut.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureSlice {
    pub structure: StructureId,
    pub polygons: Vec<Polygon>,
}

/// Plane-frame depths closer than this to zero are pushed to `+ON_PLANE_NUDGE`.
const ON_PLANE_NUDGE: f64 = 1e-9;

/// Signed shoelace area.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

/// Intersects the mesh with the plane z = 0 of `pose` and chains the crossing
/// segments into closed contours per structure. Structures the plane misses are
/// omitted.
pub fn slice_mesh(mesh: &AnatomicalMesh, pose: &PlanePose) -> Vec<StructureSlice> {
    let pts: Vec<Vec3> = mesh
        .vertices
        .iter()
        .map(|v| {
            let mut p = pose.apply(*v);
            if p.z.abs() < ON_PLANE_NUDGE {
                p.z += ON_PLANE_NUDGE;
            }
            p
        })
        .collect();

    let mut out = Vec::new();
    for s in StructureId::ALL {
        // crossing edge -> the (at most two) crossing edges sharing a face with it
        let mut links: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for f in mesh.faces_of(s) {
            let mut crossing = [(0, 0); 2];
            let mut k = 0;
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                if (pts[a].z > 0.0) != (pts[b].z > 0.0) {
                    if k < 2 {
                        crossing[k] = ordered(a, b);
                    }
                    k += 1;
                }
            }
            if k == 2 {
                links.entry(crossing[0]).or_default().push(crossing[1]);
                links.entry(crossing[1]).or_default().push(crossing[0]);
            }
        }
        if links.is_empty() {
            continue;
        }

        let point = |(a, b): (usize, usize)| -> [f64; 2] {
            let (pa, pb) = (pts[a], pts[b]);
            let t = pa.z / (pa.z - pb.z);
            [pa.x + t * (pb.x - pa.x), pa.y + t * (pb.y - pa.y)]
        };

        let mut visited: BTreeMap<(usize, usize), bool> = links.keys().map(|k| (*k, false)).collect();
        let mut polygons = Vec::new();
        for &start in links.keys() {
            if visited[&start] {
                continue;
            }
            let mut ring = Vec::new();
            let mut prev = None;
            let mut cur = start;
            loop {
                visited.insert(cur, true);
                ring.push(point(cur));
                let next = links[&cur]
                    .iter()
                    .copied()
                    .find(|n| Some(*n) != prev && !visited[n]);
                match next {
                    Some(n) => {
                        prev = Some(cur);
                        cur = n;
                    }
                    None => break,
                }
            }
            if ring.len() >= 3 && polygon_area(&ring).abs() > 0.0 {
                polygons.push(ring);
            }
        }
        if !polygons.is_empty() {
            out.push(StructureSlice { structure: s, polygons });
        }
    }
    out
}
