use crate::{Error, Result};

/// Fixed-length spiral neighbourhoods: row `i` starts with `i`, continues with
/// its one-ring in face order, then outer rings, padded with [`SpiralIndex::pad`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpiralIndex {
    pub len: usize,
    pub vertex_count: usize,
    pub indices: Vec<usize>,
}

impl SpiralIndex {
    /// Sentinel index; gathers a zero feature row.
    pub fn pad(&self) -> usize {
        self.vertex_count
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[i * self.len..(i + 1) * self.len]
    }

    /// Same spirals with `extra` sentinel slots appended.
    pub fn padded(&self, extra: usize) -> SpiralIndex {
        let len = self.len + extra;
        let mut indices = Vec::with_capacity(self.vertex_count * len);
        for i in 0..self.vertex_count {
            indices.extend_from_slice(self.row(i));
            indices.extend(std::iter::repeat_n(self.pad(), extra));
        }
        SpiralIndex {
            len,
            vertex_count: self.vertex_count,
            indices,
        }
    }

    /// Applies a vertex relabelling `new = perm[old]`.
    pub fn relabelled(&self, perm: &[usize]) -> SpiralIndex {
        let n = self.vertex_count;
        let mut indices = vec![n; self.indices.len()];
        for old in 0..n {
            let row: Vec<usize> = self
                .row(old)
                .iter()
                .map(|&j| if j == n { n } else { perm[j] })
                .collect();
            indices[perm[old] * self.len..(perm[old] + 1) * self.len].copy_from_slice(&row);
        }
        SpiralIndex {
            len: self.len,
            vertex_count: n,
            indices,
        }
    }
}

/// Cyclic one-ring of `v` following face winding, starting at the lowest
/// neighbour.
fn one_ring(v: usize, adjacency: &[Vec<usize>], vertex_faces: &[Vec<[usize; 3]>]) -> Result<Vec<usize>> {
    let nbrs = &adjacency[v];
    let mut next = Vec::with_capacity(nbrs.len());
    for f in &vertex_faces[v] {
        let p = f.iter().position(|&x| x == v).expect("face contains vertex");
        next.push((f[(p + 1) % 3], f[(p + 2) % 3]));
    }
    let Some(&start) = nbrs.first() else {
        return Err(Error::Geometry(format!("vertex {v} has no neighbours")));
    };
    let mut ring = Vec::with_capacity(nbrs.len());
    let mut cur = start;
    loop {
        ring.push(cur);
        let Some(&(_, n)) = next.iter().find(|(a, _)| *a == cur) else {
            return Err(Error::Geometry(format!(
                "vertex {v} lies on a boundary; spirals need closed surfaces"
            )));
        };
        if n == start {
            break;
        }
        if ring.len() > nbrs.len() {
            return Err(Error::Geometry(format!("vertex {v} has a non-manifold one-ring")));
        }
        cur = n;
    }
    if ring.len() != nbrs.len() {
        return Err(Error::Geometry(format!(
            "vertex {v} lies on a boundary or a non-manifold fan"
        )));
    }
    Ok(ring)
}

/// Builds spirals of length `len` (>= 2) for a closed, consistently oriented
/// surface described by `adjacency` and `faces`.
pub fn build_spirals(adjacency: &[Vec<usize>], faces: &[[usize; 3]], len: usize) -> Result<SpiralIndex> {
    if len < 2 {
        return Err(Error::Config(format!("spiral length {len} must be at least 2")));
    }
    let n = adjacency.len();
    let mut vertex_faces = vec![Vec::new(); n];
    for f in faces {
        for &v in f {
            vertex_faces[v].push(*f);
        }
    }
    let rings = (0..n)
        .map(|v| one_ring(v, adjacency, &vertex_faces))
        .collect::<Result<Vec<_>>>()?;

    let mut indices = Vec::with_capacity(n * len);
    let mut seen = vec![usize::MAX; n];
    for v in 0..n {
        let mut spiral = vec![v];
        seen[v] = v;
        let mut frontier = vec![v];
        while spiral.len() < len && !frontier.is_empty() {
            let mut next = Vec::new();
            for &u in &frontier {
                for &w in &rings[u] {
                    if seen[w] != v {
                        seen[w] = v;
                        next.push(w);
                    }
                }
            }
            spiral.extend_from_slice(&next);
            frontier = next;
        }
        spiral.truncate(len);
        spiral.resize(len, n);
        indices.extend_from_slice(&spiral);
    }
    Ok(SpiralIndex {
        len,
        vertex_count: n,
        indices,
    })
}
