//! Wavefront OBJ reading/writing with a JSON landmark sidecar.
//!
//! Grammar accepted by [`load_mesh`]:
//!
//! ```text
//! # comment              ignored
//! o <name>               optional mesh id
//! v <x> <y> <z>          vertex, millimetres
//! g <LV|RV|LA|RA>        selects the structure for following faces
//! f <i> <j> <k>          1-based triangle; `i/t/n` forms keep only `i`
//! ```
//!
//! The structure of each vertex is the group of the faces using it. The sidecar
//! `<stem>.landmarks.json` holds `mesh_id` and the four landmark points as
//! three-element arrays.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AnatomicalMesh, Landmarks, StructureId};
use crate::{Error, Result, Vec3};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    mesh_id: Option<String>,
    lv_apex: Option<[f64; 3]>,
    mitral_center: Option<[f64; 3]>,
    tricuspid_center: Option<[f64; 3]>,
    aortic_valve_center: Option<[f64; 3]>,
}

/// Sidecar path for a mesh file: `heart.obj` -> `heart.landmarks.json`.
pub fn landmark_path(mesh_path: &Path) -> PathBuf {
    mesh_path.with_extension("landmarks.json")
}

pub fn save_mesh(mesh: &AnatomicalMesh, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(mesh.vertices.len() * 40 + mesh.faces.len() * 24);
    let _ = writeln!(out, "# four-chamber mesh");
    let _ = writeln!(out, "o {}", mesh.mesh_id);
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    let mut current = None;
    for f in &mesh.faces {
        let s = mesh.structure_of_face(f);
        if current != Some(s) {
            let _ = writeln!(out, "g {s}");
            current = Some(s);
        }
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;

    let lm = &mesh.landmarks;
    let sidecar = Sidecar {
        mesh_id: Some(mesh.mesh_id.clone()),
        lv_apex: Some(lm.lv_apex),
        mitral_center: Some(lm.mitral_center),
        tricuspid_center: Some(lm.tricuspid_center),
        aortic_valve_center: Some(lm.aortic_valve_center),
    };
    let side = landmark_path(path);
    let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serialises");
    text.push('\n');
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

pub fn load_mesh(path: &Path) -> Result<AnatomicalMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut face_structure = Vec::new();
    let mut group: Option<StructureId> = None;
    let mut object_name = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let tag = tokens.next().unwrap_or("");
        let args: Vec<&str> = tokens.collect();
        match tag {
            "v" => {
                if args.len() < 3 {
                    return Err(Error::parse(path, line, "vertex needs three coordinates"));
                }
                let mut c = [0.0; 3];
                for (k, a) in args.iter().take(3).enumerate() {
                    c[k] = a
                        .parse::<f64>()
                        .map_err(|_| Error::parse(path, line, format!("bad coordinate {a:?}")))?;
                }
                vertices.push(Vec3::from(c));
            }
            "g" => {
                let name = args.first().copied().unwrap_or("");
                group = Some(StructureId::from_name(name).ok_or_else(|| {
                    Error::parse(path, line, format!("unknown structure group {name:?}"))
                })?);
            }
            "f" => {
                let s = group.ok_or_else(|| Error::parse(path, line, "face outside of a structure group"))?;
                if args.len() != 3 {
                    return Err(Error::parse(path, line, "only triangle faces are supported"));
                }
                let mut f = [0usize; 3];
                for (k, a) in args.iter().enumerate() {
                    let idx = a.split('/').next().unwrap_or("");
                    let one_based: usize = idx
                        .parse()
                        .map_err(|_| Error::parse(path, line, format!("bad face index {a:?}")))?;
                    if one_based == 0 || one_based > vertices.len() {
                        return Err(Error::parse(
                            path,
                            line,
                            format!("face index {one_based} out of range (have {} vertices)", vertices.len()),
                        ));
                    }
                    f[k] = one_based - 1;
                }
                faces.push(f);
                face_structure.push(s);
            }
            "o" => object_name = args.first().map(|s| s.to_string()),
            "vn" | "vt" | "s" | "usemtl" | "mtllib" => {}
            other => return Err(Error::parse(path, line, format!("unsupported record {other:?}"))),
        }
    }

    let mut labels: Vec<Option<StructureId>> = vec![None; vertices.len()];
    for (f, s) in faces.iter().zip(&face_structure) {
        for &i in f {
            match labels[i] {
                None => labels[i] = Some(*s),
                Some(prev) if prev != *s => {
                    return Err(Error::Validation(format!(
                        "vertex {} is used by both {prev} and {s}",
                        i + 1
                    )))
                }
                _ => {}
            }
        }
    }
    let structure_of_vertex = labels
        .iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| Error::Validation(format!("vertex {} belongs to no structure", i + 1))))
        .collect::<Result<Vec<_>>>()?;

    let side = landmark_path(path);
    let side_text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: Sidecar = serde_json::from_str(&side_text).map_err(|e| Error::parse(&side, e.line(), e.to_string()))?;
    let missing = |name: &str| Error::Validation(format!("landmark {name} missing from {}", side.display()));
    let landmarks = Landmarks {
        lv_apex: sidecar.lv_apex.ok_or_else(|| missing("lv_apex"))?,
        mitral_center: sidecar.mitral_center.ok_or_else(|| missing("mitral_center"))?,
        tricuspid_center: sidecar.tricuspid_center.ok_or_else(|| missing("tricuspid_center"))?,
        aortic_valve_center: sidecar.aortic_valve_center.ok_or_else(|| missing("aortic_valve_center"))?,
    };
    let mesh_id = sidecar
        .mesh_id
        .or(object_name)
        .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());

    AnatomicalMesh::new(vertices, faces, structure_of_vertex, landmarks, mesh_id)
}

/// Per-structure vertex counts, handy for summaries.
pub fn structure_histogram(mesh: &AnatomicalMesh) -> BTreeMap<StructureId, usize> {
    let mut h = BTreeMap::new();
    for s in &mesh.structure_of_vertex {
        *h.entry(*s).or_insert(0) += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_phantom, tests::four_tetra_mesh};

    fn write(dir: &Path, name: &str, obj: &str, landmarks: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, obj).unwrap();
        fs::write(landmark_path(&p), landmarks).unwrap();
        p
    }

    const LM: &str = r#"{"lv_apex":[0,0,0],"mitral_center":[0,0,0],"tricuspid_center":[0,0,0],"aortic_valve_center":[0,0,0]}"#;

    #[test]
    fn two_triangle_group_is_open() {
        let dir = tempfile::tempdir().unwrap();
        let obj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\ng LV\nf 1 2 3\nf 2 4 3\n";
        let p = write(dir.path(), "open.obj", obj, LM);
        let err = load_mesh(&p).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn out_of_range_face_index_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut obj = String::new();
        for i in 0..8 {
            obj += &format!("v {} {} {}\n", i & 1, (i >> 1) & 1, (i >> 2) & 1);
        }
        obj += "g LV\nf 1 2 10\n";
        let p = write(dir.path(), "bad.obj", &obj, LM);
        let err = load_mesh(&p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 10, .. }), "{err}");
    }

    #[test]
    fn phantom_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = generate_phantom(3, 2);
        let p = dir.path().join("phantom.obj");
        save_mesh(&mesh, &p).unwrap();
        let back = load_mesh(&p).unwrap();
        assert_eq!(back, mesh);
        assert_eq!(structure_histogram(&back), structure_histogram(&mesh));
    }

    #[test]
    fn second_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = generate_phantom(11, 1);
        let a = dir.path().join("a.obj");
        let b = dir.path().join("b.obj");
        save_mesh(&mesh, &a).unwrap();
        save_mesh(&load_mesh(&a).unwrap(), &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(fs::read(landmark_path(&a)).unwrap(), fs::read(landmark_path(&b)).unwrap());
    }

    #[test]
    fn save_into_missing_directory_fails() {
        let dir = tempfile::tempdir().unwrap();
        let err = save_mesh(&four_tetra_mesh(), &dir.path().join("nope/mesh.obj")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn missing_landmark_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.obj");
        save_mesh(&four_tetra_mesh(), &p).unwrap();
        fs::write(landmark_path(&p), r#"{"lv_apex":[0.1,0.1,0.1]}"#).unwrap();
        let err = load_mesh(&p).unwrap_err().to_string();
        assert!(err.contains("mitral_center"), "{err}");
    }
}
