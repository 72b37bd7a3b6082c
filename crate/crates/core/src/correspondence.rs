//! Template downsampling and cross-mesh vertex correspondence.
//!
//! Workflow: the template is downsampled to the working vertex budget first, then
//! every subject is corresponded to the downsampled template.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::mesh::{AnatomicalMesh, Landmarks, StructureId};
use crate::{parallel, Error, Result, Vec3};

/// Subject mesh resampled onto the template's vertex indexing.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondedMesh {
    pub template_topology_id: String,
    pub vertices: Vec<Vec3>,
    pub structure_of_vertex: Vec<StructureId>,
    pub landmarks: Landmarks,
    pub mesh_id: String,
}

impl CorrespondedMesh {
    /// Attaches the template connectivity, yielding a sliceable mesh.
    pub fn to_mesh(&self, template: &AnatomicalMesh) -> Result<AnatomicalMesh> {
        if template.topology_hash() != self.template_topology_id {
            return Err(Error::Validation(format!(
                "mesh {} was corresponded to topology {}, not {}",
                self.mesh_id,
                self.template_topology_id,
                template.topology_hash()
            )));
        }
        AnatomicalMesh::new(
            self.vertices.clone(),
            template.faces.clone(),
            self.structure_of_vertex.clone(),
            self.landmarks,
            self.mesh_id.clone(),
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CorrespondenceOptions {
    /// Match centroid and RMS radius of the subject to the template first.
    pub rigid_prealign: bool,
}

/// For each template vertex, the nearest subject vertex of the same structure
/// (lowest index on ties).
pub fn establish_correspondence(
    template: &AnatomicalMesh,
    subject: &AnatomicalMesh,
    options: CorrespondenceOptions,
) -> Result<CorrespondedMesh> {
    let mut candidates: [Vec<usize>; 4] = Default::default();
    for (i, s) in subject.structure_of_vertex.iter().enumerate() {
        candidates[s.index()].push(i);
    }
    for s in StructureId::ALL {
        if candidates[s.index()].is_empty() {
            return Err(Error::Validation(format!(
                "subject {} has no {s} vertices",
                subject.mesh_id
            )));
        }
    }

    let subject = if options.rigid_prealign {
        prealign(template, subject)
    } else {
        subject.clone()
    };

    let vertices = parallel::map_range(template.vertex_count(), |i| {
        let p = template.vertices[i];
        let pool = &candidates[template.structure_of_vertex[i].index()];
        let mut best = pool[0];
        let mut best_d = (subject.vertices[best] - p).norm_squared();
        for &j in &pool[1..] {
            let d = (subject.vertices[j] - p).norm_squared();
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        subject.vertices[best]
    });

    Ok(CorrespondedMesh {
        template_topology_id: template.topology_hash(),
        vertices,
        structure_of_vertex: template.structure_of_vertex.clone(),
        landmarks: subject.landmarks,
        mesh_id: subject.mesh_id.clone(),
    })
}

/// Builds a template from the first subject (downsampled to
/// `template_vertices` when given) and corresponds every subject to it.
/// Returns the template and one mesh per subject, all sharing its topology.
pub fn prepare_corresponded(
    subjects: &[AnatomicalMesh],
    template_vertices: Option<usize>,
    options: CorrespondenceOptions,
) -> Result<(AnatomicalMesh, Vec<AnatomicalMesh>)> {
    let first = subjects
        .first()
        .ok_or_else(|| Error::Validation("no subject meshes to prepare".into()))?;
    let mut template = match template_vertices {
        Some(n) => downsample(first, n)?,
        None => first.clone(),
    };
    template.mesh_id = "template".into();
    let meshes = parallel::map_slice(subjects, |s| {
        establish_correspondence(&template, s, options).and_then(|c| c.to_mesh(&template))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((template, meshes))
}

fn centroid_and_radius(points: &[Vec3]) -> (Vec3, f64) {
    let c = points.iter().sum::<Vec3>() / points.len() as f64;
    let r = (points.iter().map(|p| (p - c).norm_squared()).sum::<f64>() / points.len() as f64).sqrt();
    (c, r)
}

fn prealign(template: &AnatomicalMesh, subject: &AnatomicalMesh) -> AnatomicalMesh {
    let (ct, rt) = centroid_and_radius(&template.vertices);
    let (cs, rs) = centroid_and_radius(&subject.vertices);
    let k = if rs > 0.0 { rt / rs } else { 1.0 };
    subject.transformed(|p| ct + (p - cs) * k)
}

/// Splits `target` over structures proportionally to their vertex share
/// (largest remainder, ties by structure order).
fn structure_budgets(counts: [usize; 4], target: usize) -> [usize; 4] {
    let total: usize = counts.iter().sum();
    let mut budget = [0usize; 4];
    let mut rema = [(0usize, 0usize); 4];
    for k in 0..4 {
        let exact = target * counts[k];
        budget[k] = exact / total;
        rema[k] = (exact % total, k);
    }
    let mut left = target - budget.iter().sum::<usize>();
    rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, k) in rema.iter() {
        if left == 0 {
            break;
        }
        budget[k] += 1;
        left -= 1;
    }
    budget
}

/// Reduces the mesh to `target_count` vertices by repeatedly collapsing the
/// shortest admissible edge of each structure. The surviving endpoint keeps its
/// position, so the result is a vertex subset of the input.
pub fn downsample(mesh: &AnatomicalMesh, target_count: usize) -> Result<AnatomicalMesh> {
    let n = mesh.vertex_count();
    if target_count > n {
        return Err(Error::Validation(format!(
            "cannot downsample {n} vertices to a larger count {target_count}"
        )));
    }
    if target_count == n {
        return Ok(mesh.clone());
    }
    let mut counts = [0usize; 4];
    for s in &mesh.structure_of_vertex {
        counts[s.index()] += 1;
    }
    let budgets = structure_budgets(counts, target_count);
    if let Some(k) = (0..4).find(|&k| budgets[k] < 4) {
        return Err(Error::Validation(format!(
            "target {target_count} leaves {} vertices for {}; closed surfaces need at least 4",
            budgets[k],
            StructureId::ALL[k]
        )));
    }

    let mut d = Decimator::new(mesh);
    d.run(&budgets)?;
    d.finish(mesh)
}

struct Decimator {
    pos: Vec<Vec3>,
    label: Vec<usize>,
    faces: Vec<[usize; 3]>,
    face_alive: Vec<bool>,
    vertex_faces: Vec<Vec<usize>>,
    vertex_alive: Vec<bool>,
    version: Vec<u32>,
    heap: BinaryHeap<Reverse<(u64, usize, usize, u32, u32)>>,
}

impl Decimator {
    fn new(mesh: &AnatomicalMesh) -> Self {
        let n = mesh.vertex_count();
        let mut vertex_faces = vec![Vec::new(); n];
        for (fi, f) in mesh.faces.iter().enumerate() {
            for &v in f {
                vertex_faces[v].push(fi);
            }
        }
        let mut d = Decimator {
            pos: mesh.vertices.clone(),
            label: mesh.structure_of_vertex.iter().map(|s| s.index()).collect(),
            faces: mesh.faces.clone(),
            face_alive: vec![true; mesh.faces.len()],
            vertex_faces,
            vertex_alive: vec![true; n],
            version: vec![0; n],
            heap: BinaryHeap::new(),
        };
        for (a, nbrs) in mesh.adjacency().iter().enumerate() {
            for &b in nbrs.iter().filter(|&&b| b > a) {
                d.push_edge(a, b);
            }
        }
        d
    }

    fn push_edge(&mut self, a: usize, b: usize) {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        // non-negative f64 bit patterns order like their values
        let len = (self.pos[a] - self.pos[b]).norm().to_bits();
        self.heap
            .push(Reverse((len, a, b, self.version[a], self.version[b])));
    }

    fn neighbours(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.vertex_faces[v]
            .iter()
            .flat_map(|&f| self.faces[f])
            .filter(|&u| u != v)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn run(&mut self, budgets: &[usize; 4]) -> Result<()> {
        let mut remaining = [0usize; 4];
        for &l in &self.label {
            remaining[l] += 1;
        }
        while remaining.iter().zip(budgets).any(|(r, b)| r > b) {
            let Some(Reverse((_, a, b, va, vb))) = self.heap.pop() else {
                return Err(Error::Geometry(format!(
                    "no admissible edge collapse left (per-structure counts {remaining:?}, budgets {budgets:?})"
                )));
            };
            if !self.vertex_alive[a] || !self.vertex_alive[b] || self.version[a] != va || self.version[b] != vb {
                continue;
            }
            let s = self.label[a];
            if remaining[s] <= budgets[s] {
                continue;
            }
            if self.try_collapse(b, a) || self.try_collapse(a, b) {
                remaining[s] -= 1;
            }
        }
        Ok(())
    }

    /// Merges `gone` into `keep` if the link condition holds and no surviving
    /// face flips or degenerates.
    fn try_collapse(&mut self, gone: usize, keep: usize) -> bool {
        let shared: Vec<usize> = self.vertex_faces[gone]
            .iter()
            .copied()
            .filter(|f| self.faces[*f].contains(&keep))
            .collect();
        if shared.len() != 2 {
            return false;
        }
        let mut opposite: Vec<usize> = shared
            .iter()
            .flat_map(|&f| self.faces[f])
            .filter(|&u| u != gone && u != keep)
            .collect();
        opposite.sort_unstable();
        let na = self.neighbours(gone);
        let nb = self.neighbours(keep);
        let common: Vec<usize> = na.iter().copied().filter(|u| nb.binary_search(u).is_ok()).collect();
        if common != opposite {
            return false;
        }
        // a tetrahedron cannot lose a vertex and stay closed
        if na.len() + nb.len() - common.len() <= 4 {
            return false;
        }

        let target = self.pos[keep];
        for &f in &self.vertex_faces[gone] {
            if shared.contains(&f) {
                continue;
            }
            let tri = self.faces[f];
            let before = normal(&self.pos, tri, None);
            let after = normal(&self.pos, tri, Some((gone, target)));
            let area = after.norm();
            if area <= 1e-12 * before.norm().max(1e-300) || before.dot(&after) <= 0.0 {
                return false;
            }
        }

        for &f in &shared {
            self.face_alive[f] = false;
            for v in self.faces[f] {
                self.vertex_faces[v].retain(|&g| g != f);
            }
        }
        let moved = std::mem::take(&mut self.vertex_faces[gone]);
        for &f in &moved {
            for v in self.faces[f].iter_mut() {
                if *v == gone {
                    *v = keep;
                }
            }
            self.vertex_faces[keep].push(f);
        }
        self.vertex_alive[gone] = false;
        self.version[gone] += 1;
        self.version[keep] += 1;
        for u in self.neighbours(keep) {
            self.push_edge(keep, u);
        }
        true
    }

    fn finish(self, mesh: &AnatomicalMesh) -> Result<AnatomicalMesh> {
        let mut remap = vec![usize::MAX; self.pos.len()];
        let mut vertices = Vec::new();
        let mut labels = Vec::new();
        for (i, alive) in self.vertex_alive.iter().enumerate() {
            if *alive {
                remap[i] = vertices.len();
                vertices.push(self.pos[i]);
                labels.push(mesh.structure_of_vertex[i]);
            }
        }
        let faces = self
            .faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, a)| **a)
            .map(|(f, _)| f.map(|v| remap[v]))
            .collect();
        AnatomicalMesh::new(vertices, faces, labels, mesh.landmarks, mesh.mesh_id.clone())
    }
}

fn normal(pos: &[Vec3], tri: [usize; 3], replace: Option<(usize, Vec3)>) -> Vec3 {
    let p = |i: usize| match replace {
        Some((v, q)) if v == i => q,
        _ => pos[i],
    };
    let (a, b, c) = (p(tri[0]), p(tri[1]), p(tri[2]));
    (b - a).cross(&(c - a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_phantom;

    #[test]
    fn budgets_sum_to_target() {
        let b = structure_budgets([2562, 2562, 642, 642], 2008);
        assert_eq!(b.iter().sum::<usize>(), 2008);
        assert_eq!(b[0], b[1]);
        assert!(b[2] < b[0]);
    }

    #[test]
    fn identity_when_target_equals_count() {
        let m = generate_phantom(1, 2);
        assert_eq!(downsample(&m, m.vertex_count()).unwrap(), m);
    }

    #[test]
    fn too_small_target_is_rejected() {
        let m = generate_phantom(1, 2);
        assert!(downsample(&m, 10).is_err());
        assert!(downsample(&m, m.vertex_count() + 1).is_err());
    }

    #[test]
    fn downsample_keeps_closed_genus_zero_chambers() {
        let m = generate_phantom(2, 3);
        let small = downsample(&m, 500).unwrap();
        assert_eq!(small.vertex_count(), 500);
        for s in StructureId::ALL {
            assert_eq!(small.euler_characteristic(s), 2, "{s}");
        }
        // surviving vertices are a subset of the input
        for v in &small.vertices {
            assert!(m.vertices.contains(v));
        }
    }

    #[test]
    fn self_correspondence_is_identity() {
        let m = generate_phantom(5, 2);
        let c = establish_correspondence(&m, &m, Default::default()).unwrap();
        assert_eq!(c.vertices, m.vertices);
        assert_eq!(c.to_mesh(&m).unwrap(), m);
    }

    #[test]
    fn translated_subject_gives_rigid_offset() {
        let m = generate_phantom(5, 2);
        let shift = Vec3::new(1.0, 0.0, 0.0);
        let moved = m.transformed(|p| p + shift);
        let c = establish_correspondence(&m, &moved, Default::default()).unwrap();
        for (a, b) in c.vertices.iter().zip(&m.vertices) {
            assert_eq!(*a, b + shift);
        }
    }

    #[test]
    fn prealign_removes_translation() {
        let m = generate_phantom(5, 2);
        let moved = m.transformed(|p| p * 1.3 + Vec3::new(40.0, -7.0, 3.0));
        let opts = CorrespondenceOptions { rigid_prealign: true };
        let c = establish_correspondence(&m, &moved, opts).unwrap();
        for (a, b) in c.vertices.iter().zip(&m.vertices) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn corresponded_labels_follow_template() {
        let t = downsample(&generate_phantom(0, 2), 300).unwrap();
        let s = generate_phantom(1, 2);
        let c = establish_correspondence(&t, &s, Default::default()).unwrap();
        assert_eq!(c.structure_of_vertex, t.structure_of_vertex);
        assert_eq!(c.vertices.len(), t.vertex_count());
        let mesh = c.to_mesh(&t).unwrap();
        assert_eq!(mesh.mesh_id, s.mesh_id);
    }
}
