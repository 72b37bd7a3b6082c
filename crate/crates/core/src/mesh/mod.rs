//! Multi-structure triangle meshes.

mod io;
mod phantom;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

pub use io::{landmark_path, load_mesh, save_mesh, structure_histogram};
pub use phantom::{generate_phantom, icosphere, Chamber, PhantomShape};

/// Cardiac structure carried by a vertex. Integer codes double as raster labels
/// (0 is background).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StructureId {
    LV = 1,
    RV = 2,
    LA = 3,
    RA = 4,
}

impl StructureId {
    pub const ALL: [StructureId; 4] = [StructureId::LV, StructureId::RV, StructureId::LA, StructureId::RA];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(StructureId::LV),
            2 => Some(StructureId::RV),
            3 => Some(StructureId::LA),
            4 => Some(StructureId::RA),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StructureId::LV => "LV",
            StructureId::RV => "RV",
            StructureId::LA => "LA",
            StructureId::RA => "RA",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Position in [`StructureId::ALL`].
    pub fn index(self) -> usize {
        self as usize - 1
    }
}

impl fmt::Display for StructureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Anatomical landmarks in model coordinates (millimetres).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmarks {
    pub lv_apex: [f64; 3],
    pub mitral_center: [f64; 3],
    pub tricuspid_center: [f64; 3],
    pub aortic_valve_center: [f64; 3],
}

impl Landmarks {
    pub const NAMES: [&'static str; 4] = ["lv_apex", "mitral_center", "tricuspid_center", "aortic_valve_center"];

    pub fn points(&self) -> [Vec3; 4] {
        [
            Vec3::from(self.lv_apex),
            Vec3::from(self.mitral_center),
            Vec3::from(self.tricuspid_center),
            Vec3::from(self.aortic_valve_center),
        ]
    }

    pub fn lv_apex(&self) -> Vec3 {
        Vec3::from(self.lv_apex)
    }

    pub fn mitral(&self) -> Vec3 {
        Vec3::from(self.mitral_center)
    }

    pub fn tricuspid(&self) -> Vec3 {
        Vec3::from(self.tricuspid_center)
    }

    pub fn aortic(&self) -> Vec3 {
        Vec3::from(self.aortic_valve_center)
    }

    pub fn map(&self, f: impl Fn(Vec3) -> Vec3) -> Landmarks {
        let g = |p: [f64; 3]| -> [f64; 3] { f(Vec3::from(p)).into() };
        Landmarks {
            lv_apex: g(self.lv_apex),
            mitral_center: g(self.mitral_center),
            tricuspid_center: g(self.tricuspid_center),
            aortic_valve_center: g(self.aortic_valve_center),
        }
    }
}

/// Four-chamber heart surface. Every face belongs to exactly one structure and
/// each structure is a closed, consistently oriented triangle surface.
#[derive(Clone, Debug, PartialEq)]
pub struct AnatomicalMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub structure_of_vertex: Vec<StructureId>,
    pub landmarks: Landmarks,
    pub mesh_id: String,
}

/// Landmarks may sit this fraction of the bounding-box diagonal outside the box.
/// Decimated or corresponded surfaces lose their extreme vertices, so a landmark
/// on the original surface (the apex) can fall just outside the reduced box.
pub const LANDMARK_BOX_SLACK: f64 = 0.05;

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Aabb> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        Some(Aabb { min, max })
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] - tol && p[k] <= self.max[k] + tol)
    }
}

impl AnatomicalMesh {
    /// Builds a mesh and checks every invariant.
    pub fn new(
        vertices: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
        structure_of_vertex: Vec<StructureId>,
        landmarks: Landmarks,
        mesh_id: impl Into<String>,
    ) -> Result<Self> {
        let mesh = AnatomicalMesh {
            vertices,
            faces,
            structure_of_vertex,
            landmarks,
            mesh_id: mesh_id.into(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn structure_of_face(&self, face: &[usize; 3]) -> StructureId {
        self.structure_of_vertex[face[0]]
    }

    /// Indices of the faces belonging to `structure`.
    pub fn faces_of(&self, structure: StructureId) -> impl Iterator<Item = &[usize; 3]> + '_ {
        self.faces
            .iter()
            .filter(move |f| self.structure_of_vertex[f[0]] == structure)
    }

    pub fn vertices_of(&self, structure: StructureId) -> impl Iterator<Item = usize> + '_ {
        self.structure_of_vertex
            .iter()
            .enumerate()
            .filter(move |(_, s)| **s == structure)
            .map(|(i, _)| i)
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices).unwrap_or(Aabb {
            min: Vec3::zeros(),
            max: Vec3::zeros(),
        })
    }

    /// Checks index ranges, per-structure closed orientable manifoldness, label
    /// coverage and landmark placement.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if n == 0 {
            return Err(Error::Validation("mesh has no vertices".into()));
        }
        if self.structure_of_vertex.len() != n {
            return Err(Error::Validation(format!(
                "{} structure labels for {} vertices",
                self.structure_of_vertex.len(),
                n
            )));
        }
        if let Some(i) = self.vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Validation(format!("vertex {i} is not finite")));
        }
        let mut referenced = vec![false; n];
        for (fi, f) in self.faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= n) {
                return Err(Error::Validation(format!(
                    "face {fi} references vertex {bad} but mesh has {n} vertices"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Validation(format!("face {fi} is degenerate: {f:?}")));
            }
            let s = self.structure_of_vertex[f[0]];
            if f.iter().any(|&i| self.structure_of_vertex[i] != s) {
                return Err(Error::Validation(format!("face {fi} spans several structures")));
            }
            for &i in f {
                referenced[i] = true;
            }
        }
        if let Some(i) = referenced.iter().position(|r| !r) {
            return Err(Error::Validation(format!("vertex {i} is not used by any face")));
        }
        for s in StructureId::ALL {
            if !self.structure_of_vertex.contains(&s) {
                return Err(Error::Validation(format!("structure {s} is missing")));
            }
        }
        check_closed_oriented(&self.faces)?;

        let bounds = self.bounds();
        let tol = LANDMARK_BOX_SLACK * bounds.diagonal();
        for (name, p) in Landmarks::NAMES.iter().zip(self.landmarks.points()) {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::Validation(format!("landmark {name} is not finite")));
            }
            if !bounds.contains(&p, tol) {
                return Err(Error::Validation(format!(
                    "landmark {name} lies outside the mesh bounding box"
                )));
            }
        }
        Ok(())
    }

    /// Sorted per-vertex neighbour lists. Faces never span structures, so the
    /// adjacency is block-diagonal across structures.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        build_adjacency(self.vertices.len(), &self.faces)
    }

    /// Number of distinct undirected edges.
    pub fn edge_count(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| (0..3).map(move |k| ordered(f[k], f[(k + 1) % 3])))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }

    /// Euler characteristic V - E + F of one structure.
    pub fn euler_characteristic(&self, structure: StructureId) -> i64 {
        let faces: Vec<[usize; 3]> = self.faces_of(structure).copied().collect();
        let v = self.vertices_of(structure).count() as i64;
        let mut edges: Vec<(usize, usize)> = faces
            .iter()
            .flat_map(|f| (0..3).map(move |k| ordered(f[k], f[(k + 1) % 3])))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        v - edges.len() as i64 + faces.len() as i64
    }

    /// Applies a rigid (or similarity) map to vertices and landmarks.
    pub fn transformed(&self, f: impl Fn(Vec3) -> Vec3) -> AnatomicalMesh {
        AnatomicalMesh {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            faces: self.faces.clone(),
            structure_of_vertex: self.structure_of_vertex.clone(),
            landmarks: self.landmarks.map(&f),
            mesh_id: self.mesh_id.clone(),
        }
    }

    /// Longest edge length over the whole mesh.
    /// Stable identifier of the connectivity (vertex count, faces, labels).
    pub fn topology_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.vertices.len() as u64).to_le_bytes());
        for f in &self.faces {
            for &i in f {
                h.update((i as u64).to_le_bytes());
            }
        }
        h.update(self.structure_of_vertex.iter().map(|s| s.code()).collect::<Vec<u8>>());
        hex::encode(&h.finalize()[..8])
    }

    pub fn max_edge_length(&self) -> f64 {
        self.faces
            .iter()
            .flat_map(|f| (0..3).map(move |k| (f[k], f[(k + 1) % 3])))
            .map(|(a, b)| (self.vertices[a] - self.vertices[b]).norm())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn build_adjacency(n: usize, faces: &[[usize; 3]]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for f in faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Every undirected edge must be shared by exactly two faces, traversed once in
/// each direction.
pub(crate) fn check_closed_oriented(faces: &[[usize; 3]]) -> Result<()> {
    let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3);
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            let e = (f[k], f[(k + 1) % 3]);
            if directed.insert(e, fi).is_some() {
                return Err(Error::Validation(format!(
                    "edge {}-{} is used twice with the same orientation (non-manifold or inconsistent winding)",
                    e.0, e.1
                )));
            }
        }
    }
    for &(a, b) in directed.keys() {
        if !directed.contains_key(&(b, a)) {
            return Err(Error::Validation(format!(
                "open surface: edge {a}-{b} belongs to a single face"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn tetra(offset: usize) -> Vec<[usize; 3]> {
        let o = offset;
        vec![[o, o + 2, o + 1], [o, o + 1, o + 3], [o + 1, o + 2, o + 3], [o, o + 3, o + 2]]
    }

    pub(crate) fn tetra_points(shift: Vec3) -> Vec<Vec3> {
        vec![
            Vec3::new(0.0, 0.0, 0.0) + shift,
            Vec3::new(1.0, 0.0, 0.0) + shift,
            Vec3::new(0.0, 1.0, 0.0) + shift,
            Vec3::new(0.0, 0.0, 1.0) + shift,
        ]
    }

    /// Four disjoint tetrahedra, one per structure.
    pub(crate) fn four_tetra_mesh() -> AnatomicalMesh {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        let mut labels = Vec::new();
        for (k, s) in StructureId::ALL.into_iter().enumerate() {
            vertices.extend(tetra_points(Vec3::new(2.0 * k as f64, 0.0, 0.0)));
            faces.extend(tetra(4 * k));
            labels.extend([s; 4]);
        }
        let lm = Landmarks {
            lv_apex: [0.1, 0.1, 0.1],
            mitral_center: [2.1, 0.1, 0.1],
            tricuspid_center: [4.1, 0.1, 0.1],
            aortic_valve_center: [6.1, 0.1, 0.1],
        };
        AnatomicalMesh::new(vertices, faces, labels, lm, "tetras").unwrap()
    }

    #[test]
    fn tetrahedron_neighbours() {
        let mesh = four_tetra_mesh();
        let adj = mesh.adjacency();
        assert_eq!(adj[0], vec![1, 2, 3]);
        assert!(adj.iter().all(|n| n.len() == 3));
    }

    #[test]
    fn adjacency_is_block_diagonal() {
        let mesh = four_tetra_mesh();
        for (i, n) in mesh.adjacency().iter().enumerate() {
            for &j in n {
                assert_eq!(mesh.structure_of_vertex[i], mesh.structure_of_vertex[j]);
            }
        }
    }

    #[test]
    fn open_surface_is_rejected() {
        let mut mesh = four_tetra_mesh();
        mesh.faces.pop();
        let err = mesh.validate().unwrap_err().to_string();
        assert!(err.contains("open surface"), "{err}");
    }

    #[test]
    fn flipped_face_is_rejected() {
        let mut mesh = four_tetra_mesh();
        mesh.faces[0].swap(1, 2);
        assert!(mesh.validate().is_err());
    }

    #[test]
    fn missing_structure_is_rejected() {
        let mut mesh = four_tetra_mesh();
        mesh.faces.truncate(12);
        mesh.vertices.truncate(12);
        mesh.structure_of_vertex.truncate(12);
        mesh.landmarks.aortic_valve_center = [4.1, 0.1, 0.1];
        let err = mesh.validate().unwrap_err().to_string();
        assert!(err.contains("RA"), "{err}");
    }

    #[test]
    fn landmark_outside_bounds_is_rejected() {
        let mut mesh = four_tetra_mesh();
        mesh.landmarks.lv_apex = [0.0, 0.0, 5.0];
        assert!(mesh.validate().is_err());
    }

    #[test]
    fn tetra_euler_characteristic() {
        let mesh = four_tetra_mesh();
        for s in StructureId::ALL {
            assert_eq!(mesh.euler_characteristic(s), 2);
        }
    }

    #[test]
    fn cube_diagonal() {
        let pts: Vec<Vec3> = (0..8)
            .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        let b = Aabb::from_points(&pts).unwrap();
        assert!((b.diagonal() - 3f64.sqrt()).abs() < 1e-15);
        let moved: Vec<Vec3> = pts.iter().map(|p| p + Vec3::new(5.0, -3.0, 11.0)).collect();
        let b2 = Aabb::from_points(&moved).unwrap();
        assert!((b2.diagonal() - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn structure_codes_are_stable() {
        assert_eq!(StructureId::LV.code(), 1);
        assert_eq!(StructureId::RV.code(), 2);
        assert_eq!(StructureId::LA.code(), 3);
        assert_eq!(StructureId::RA.code(), 4);
        for s in StructureId::ALL {
            assert_eq!(StructureId::from_code(s.code()), Some(s));
            assert_eq!(StructureId::from_name(s.name()), Some(s));
        }
        assert_eq!(StructureId::from_code(0), None);
    }
}
