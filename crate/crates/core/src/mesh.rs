//! Tetrahedral meshes, global node numbering and the periodic honeycomb cell.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::kernels::ElementGeometry;
use crate::refelement::NodeSet;
use crate::refgeom::BarycentricPoint;

/// Unit-cube corners of the six tetrahedra cut by the planes `x1 = x2`,
/// `x2 = x3` and `x1 = x3`, one per ordering of the coordinates.
pub fn kuhn_tets() -> [[[f64; 3]; 4]; 6] {
    let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    orders.map(|o| {
        let mut v = [[0.0; 3]; 4];
        for k in 0..3 {
            v[k + 1] = v[k];
            v[k + 1][o[k]] = 1.0;
        }
        // odd permutations come out negatively oriented
        if orientation(&v) < 0.0 {
            v.swap(1, 2);
        }
        v
    })
}

fn orientation(v: &[[f64; 3]; 4]) -> f64 {
    let e = |i: usize| Vector3::from(v[i]) - Vector3::from(v[0]);
    Matrix3::from_columns(&[e(1), e(2), e(3)]).determinant()
}

#[derive(Debug, Clone)]
pub struct TetMesh {
    pub vertices: Vec<[f64; 3]>,
    pub tets: Vec<[usize; 4]>,
    pub geometry: Vec<ElementGeometry>,
}

impl TetMesh {
    /// Validates orientation and index ranges and precomputes element maps.
    pub fn new(vertices: Vec<[f64; 3]>, tets: Vec<[usize; 4]>) -> Result<Self> {
        let mut geometry = Vec::with_capacity(tets.len());
        for t in &tets {
            if let Some(&bad) = t.iter().find(|&&i| i >= vertices.len()) {
                return Err(Error::InvalidInput(format!("vertex index {bad} out of range")));
            }
            geometry.push(ElementGeometry::from_vertices(&t.map(|i| vertices[i]))?);
        }
        Ok(TetMesh {
            vertices,
            tets,
            geometry,
        })
    }

    pub fn len(&self) -> usize {
        self.tets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tets.is_empty()
    }

    pub fn volume(&self) -> f64 {
        self.geometry.iter().map(|g| g.volume()).sum()
    }

    pub fn min_det(&self) -> f64 {
        self.geometry.iter().map(|g| g.det).fold(f64::INFINITY, f64::min)
    }

    /// Longest edge over all elements.
    pub fn max_edge(&self) -> f64 {
        self.edge_lengths().fold(0.0, f64::max)
    }

    pub fn min_edge(&self) -> f64 {
        self.edge_lengths().fold(f64::INFINITY, f64::min)
    }

    fn edge_lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.tets.iter().flat_map(move |t| {
            (0..4).flat_map(move |a| {
                ((a + 1)..4).map(move |b| {
                    (Vector3::from(self.vertices[t[a]]) - Vector3::from(self.vertices[t[b]])).norm()
                })
            })
        })
    }

    /// Faces (sorted vertex triples) with the elements and local face index
    /// (the opposite local vertex) that use them.
    pub fn faces(&self) -> Result<HashMap<[usize; 3], Vec<(usize, usize)>>> {
        let mut faces: HashMap<[usize; 3], Vec<(usize, usize)>> = HashMap::new();
        for (e, t) in self.tets.iter().enumerate() {
            for skip in 0..4 {
                let mut f = [0; 3];
                let mut k = 0;
                for (j, &v) in t.iter().enumerate() {
                    if j != skip {
                        f[k] = v;
                        k += 1;
                    }
                }
                f.sort_unstable();
                faces.entry(f).or_default().push((e, skip));
            }
        }
        if let Some((f, users)) = faces.iter().find(|(_, u)| u.len() > 2) {
            return Err(Error::NonConformingMesh(format!(
                "face {f:?} shared by {} elements",
                users.len()
            )));
        }
        Ok(faces)
    }

    /// Applies a permutation to the element list (for invariance checks).
    pub fn permuted(&self, order: &[usize]) -> TetMesh {
        TetMesh {
            vertices: self.vertices.clone(),
            tets: order.iter().map(|&i| self.tets[i]).collect(),
            geometry: order.iter().map(|&i| self.geometry[i]).collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("tetmesh 1\n");
        let _ = writeln!(s, "{} {}", self.vertices.len(), self.tets.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{:.16e} {:.16e} {:.16e}", v[0], v[1], v[2]);
        }
        for t in &self.tets {
            let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], t[3]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let perr = |line: usize, message: &str| Error::Parse {
            line,
            message: message.to_string(),
        };
        let (ln, header) = lines.next().ok_or_else(|| perr(1, "empty mesh file"))?;
        if header != "tetmesh 1" {
            return Err(perr(ln, "expected header 'tetmesh 1'"));
        }
        let (ln, counts) = lines.next().ok_or_else(|| perr(ln + 1, "missing counts line"))?;
        let c: Vec<usize> = counts
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| perr(ln, "bad count")))
            .collect::<Result<_>>()?;
        if c.len() != 2 {
            return Err(perr(ln, "counts line needs two integers"));
        }
        let (nv, nt) = (c[0], c[1]);
        let mut vertices = Vec::with_capacity(nv);
        let mut last = ln;
        for _ in 0..nv {
            let (ln, l) = lines.next().ok_or_else(|| perr(last + 1, "missing vertex line"))?;
            last = ln;
            let x: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| perr(ln, "bad coordinate")))
                .collect::<Result<_>>()?;
            if x.len() != 3 {
                return Err(perr(ln, "vertex line needs three coordinates"));
            }
            vertices.push([x[0], x[1], x[2]]);
        }
        let mut tets = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (ln, l) = lines.next().ok_or_else(|| perr(last + 1, "missing tet line"))?;
            last = ln;
            let t: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| perr(ln, "bad vertex index")))
                .collect::<Result<_>>()?;
            if t.len() != 4 {
                return Err(perr(ln, "tet line needs four indices"));
            }
            if let Some(bad) = t.iter().find(|&&i| i >= nv) {
                return Err(perr(ln, &format!("vertex index {bad} out of range")));
            }
            let tet = [t[0], t[1], t[2], t[3]];
            if orientation(&tet.map(|i| vertices[i])) <= 0.0 {
                return Err(perr(ln, "tetrahedron has nonpositive volume"));
            }
            tets.push(tet);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(perr(ln, "trailing data"));
        }
        TetMesh::new(vertices, tets)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDomain {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl BoxDomain {
    pub fn unit() -> Self {
        BoxDomain {
            lo: [0.0; 3],
            hi: [1.0; 3],
        }
    }

    pub fn symmetric(l: [f64; 3]) -> Self {
        BoxDomain {
            lo: l.map(|x| -x),
            hi: l,
        }
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|i| self.hi[i] - self.lo[i]).product()
    }
}

/// Smooth displacement vanishing on the box boundary; `amplitude` bounds
/// each diagonal entry of its gradient.
fn distortion(x: [f64; 3], dom: &BoxDomain, amplitude: f64) -> [f64; 3] {
    use std::f64::consts::PI;
    let len: [f64; 3] = [0, 1, 2].map(|i| dom.hi[i] - dom.lo[i]);
    let xi: [f64; 3] = [0, 1, 2].map(|i| (x[i] - dom.lo[i]) / len[i]);
    let mut out = x;
    for i in 0..3 {
        let mut f = amplitude * len[i] / (2.0 * PI) * (2.0 * PI * xi[i]).sin();
        for j in 0..3 {
            if j != i {
                f *= (PI * xi[j]).sin();
            }
        }
        out[i] += f;
    }
    out
}

/// `6 nx ny nz` tetrahedra filling the box, optionally distorted.
pub fn build_block_mesh(n: [usize; 3], dom: BoxDomain, amplitude: f64) -> Result<TetMesh> {
    if n.contains(&0) {
        return Err(Error::InvalidInput("block counts must be positive".into()));
    }
    if !(0.0..=0.3).contains(&amplitude) {
        return Err(Error::InvalidInput(format!(
            "distortion amplitude {amplitude} outside [0, 0.3]"
        )));
    }
    let vid = |i: usize, j: usize, k: usize| (k * (n[1] + 1) + j) * (n[0] + 1) + i;
    let mut vertices = Vec::with_capacity((n[0] + 1) * (n[1] + 1) * (n[2] + 1));
    for k in 0..=n[2] {
        for j in 0..=n[1] {
            for i in 0..=n[0] {
                let idx = [i, j, k];
                let x = [0, 1, 2].map(|d| {
                    if idx[d] == n[d] {
                        dom.hi[d]
                    } else {
                        dom.lo[d] + (dom.hi[d] - dom.lo[d]) * idx[d] as f64 / n[d] as f64
                    }
                });
                vertices.push(if amplitude > 0.0 { distortion(x, &dom, amplitude) } else { x });
            }
        }
    }
    let local = kuhn_tets();
    let mut tets = Vec::with_capacity(6 * n[0] * n[1] * n[2]);
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                for t in &local {
                    tets.push(t.map(|c| {
                        vid(i + c[0] as usize, j + c[1] as usize, k + c[2] as usize)
                    }));
                }
            }
        }
    }
    TetMesh::new(vertices, tets)
}

/// Spatial hash for merging coincident points.
struct PointMerger {
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<usize>>,
    points: Vec<[f64; 3]>,
}

impl PointMerger {
    fn new(tol: f64) -> Self {
        PointMerger {
            cell: tol,
            buckets: HashMap::new(),
            points: Vec::new(),
        }
    }

    fn key(&self, x: &[f64; 3]) -> [i64; 3] {
        x.map(|v| (v / self.cell).floor() as i64)
    }

    /// Index of an existing point within the tolerance, or a new index.
    fn insert(&mut self, x: [f64; 3]) -> (usize, bool) {
        let k = self.key(&x);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &id in ids {
                            let p = self.points[id];
                            if (0..3).all(|d| (p[d] - x[d]).abs() <= self.cell) {
                                return (id, false);
                            }
                        }
                    }
                }
            }
        }
        let id = self.points.len();
        self.points.push(x);
        self.buckets.entry(k).or_default().push(id);
        (id, true)
    }
}

/// Global numbering of the element nodes.
#[derive(Debug, Clone)]
pub struct DofMap {
    /// `local[e][i]` is the global index of local node `i` of element `e`.
    pub local: Vec<Vec<usize>>,
    pub coords: Vec<[f64; 3]>,
    pub boundary: Vec<bool>,
    /// Nodes of the reference element, in local order.
    pub ref_nodes: Vec<BarycentricPoint>,
}

impl DofMap {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn free_count(&self) -> usize {
        self.boundary.iter().filter(|b| !**b).count()
    }
}

/// Numbers the physical images of the reference nodes, merging coincident
/// images of nodes that lie on element faces.
pub fn enumerate_global_dofs(mesh: &TetMesh, nodes: &NodeSet) -> Result<DofMap> {
    let faces = mesh.faces()?;
    let ref_nodes = nodes.points();
    let tol = mesh.min_edge() * 1e-8;
    let mut merger = PointMerger::new(tol);
    let mut local = Vec::with_capacity(mesh.len());
    let mut coords = Vec::new();
    for g in &mesh.geometry {
        let mut ids = Vec::with_capacity(ref_nodes.len());
        for b in &ref_nodes {
            let x = g.map_bary(b);
            let interior = element_coords(b).iter().all(|&l| l > 1e-12);
            let id = if interior {
                // interior nodes are never shared
                let id = merger.points.len();
                merger.points.push(x);
                id
            } else {
                merger.insert(x).0
            };
            if id == coords.len() {
                coords.push(x);
            }
            ids.push(id);
        }
        local.push(ids);
    }
    let mut boundary = vec![false; coords.len()];
    for users in faces.values() {
        if users.len() == 1 {
            let (e, skip) = users[0];
            for (i, b) in ref_nodes.iter().enumerate() {
                if element_coords(b)[skip].abs() <= 1e-12 {
                    boundary[local[e][i]] = true;
                }
            }
        }
    }
    Ok(DofMap {
        local,
        coords,
        boundary,
        ref_nodes,
    })
}

/// Barycentric coordinates ordered by local vertex: vertex 0 is the
/// reference origin, vertex `k` the unit point on axis `k`.
pub fn element_coords(b: &BarycentricPoint) -> [f64; 4] {
    [b.0[3], b.0[0], b.0[1], b.0[2]]
}

/// Lattice transform of the tetragonal disphenoid honeycomb.
pub fn honeycomb_transform() -> Matrix3<f64> {
    Matrix3::new(
        1.0,
        -1.0 / 3.0,
        -1.0 / 3.0,
        0.0,
        (8.0f64 / 9.0).sqrt(),
        -(2.0f64 / 9.0).sqrt(),
        0.0,
        0.0,
        (2.0f64 / 3.0).sqrt(),
    )
}

/// Periodic cell `T [0,1)^3` split into six tetrahedra, with every element
/// node mapped to an owned representative and a lattice shift.
#[derive(Debug, Clone)]
pub struct PeriodicCell {
    pub transform: Matrix3<f64>,
    pub vertices: Vec<[[f64; 3]; 4]>,
    pub geometry: Vec<ElementGeometry>,
    /// `nodes[e][i] = (owned index, shift)` with image `T (y_owned + shift)`.
    pub nodes: Vec<Vec<(usize, [i32; 3])>>,
    /// Lattice coordinates of the owned nodes, in `[0, 1)^3`.
    pub owned: Vec<[f64; 3]>,
}

impl PeriodicCell {
    pub fn new(transform: Matrix3<f64>, nodes: &NodeSet) -> Result<Self> {
        let ref_nodes = nodes.points();
        let mut merger = PointMerger::new(1e-9);
        let mut owned = Vec::new();
        let mut cell_nodes = Vec::new();
        let mut vertices = Vec::new();
        let mut geometry = Vec::new();
        for lat in kuhn_tets() {
            let g_lat = ElementGeometry::from_vertices(&lat)?;
            let phys = lat.map(|v| {
                let x = transform * Vector3::from(v);
                [x[0], x[1], x[2]]
            });
            geometry.push(ElementGeometry::from_vertices(&phys)?);
            vertices.push(phys);
            let mut ids = Vec::new();
            for b in &ref_nodes {
                let y = g_lat.map_bary(b);
                let mut shift = [0i32; 3];
                let mut r = y;
                for d in 0..3 {
                    let mut s = y[d].floor();
                    if y[d] - s > 1.0 - 1e-9 {
                        s += 1.0;
                    }
                    shift[d] = s as i32;
                    r[d] = (y[d] - s).max(0.0);
                }
                let (id, fresh) = merger.insert(r);
                if fresh {
                    owned.push(r);
                }
                ids.push((id, shift));
            }
            cell_nodes.push(ids);
        }
        Ok(PeriodicCell {
            transform,
            vertices,
            geometry,
            nodes: cell_nodes,
            owned,
        })
    }

    pub fn honeycomb(nodes: &NodeSet) -> Result<Self> {
        Self::new(honeycomb_transform(), nodes)
    }

    pub fn n0(&self) -> usize {
        self.owned.len()
    }

    /// Average element volume `det(T) / 6`.
    pub fn average_volume(&self) -> f64 {
        self.geometry.iter().map(|g| g.volume()).sum::<f64>() / self.geometry.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refelement::{p2n15_nodes, vertex_nodes};

    #[test]
    fn unit_cube_six_tets() {
        let m = build_block_mesh([1, 1, 1], BoxDomain::unit(), 0.0).unwrap();
        assert_eq!(m.len(), 6);
        assert!((m.volume() - 1.0).abs() < 1e-15);
        for g in &m.geometry {
            assert!((g.det - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn block_vertex_count() {
        let m = build_block_mesh([2, 2, 2], BoxDomain::unit(), 0.0).unwrap();
        assert_eq!(m.len(), 48);
        let d = enumerate_global_dofs(&m, &vertex_nodes()).unwrap();
        assert_eq!(d.len(), 27);
        assert_eq!(d.free_count(), 1);
    }

    #[test]
    fn single_tet_p2n15() {
        let m = TetMesh::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![[0, 1, 2, 3]],
        )
        .unwrap();
        let d = enumerate_global_dofs(&m, &p2n15_nodes()).unwrap();
        assert_eq!(d.len(), 15);
        assert_eq!(d.free_count(), 1);
    }

    #[test]
    fn two_tets_sharing_a_face() {
        let m = TetMesh::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]],
            vec![[0, 1, 2, 3], [0, 2, 1, 4]],
        )
        .unwrap();
        let d = enumerate_global_dofs(&m, &p2n15_nodes()).unwrap();
        assert_eq!(d.len(), 23);
    }

    #[test]
    fn overshared_face_is_rejected() {
        let v = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]];
        let m = TetMesh::new(v, vec![[0, 1, 2, 3], [0, 2, 1, 4], [0, 1, 2, 3]]).unwrap();
        assert!(matches!(
            enumerate_global_dofs(&m, &p2n15_nodes()),
            Err(Error::NonConformingMesh(_))
        ));
    }

    #[test]
    fn honeycomb_volume() {
        let c = PeriodicCell::honeycomb(&vertex_nodes()).unwrap();
        let expect = 2.0 * 3f64.sqrt() / 27.0;
        for g in &c.geometry {
            assert!((g.volume() - expect).abs() < 1e-15);
        }
        assert_eq!(c.n0(), 1);
    }

    #[test]
    fn mesh_text_errors_have_line_numbers() {
        let bad = "tetmesh 1\n4 1\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 1 2 7\n";
        assert!(matches!(TetMesh::from_text(bad), Err(Error::Parse { line: 7, .. })));
        let inverted = "tetmesh 1\n4 1\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 2 1 3\n";
        assert!(matches!(TetMesh::from_text(inverted), Err(Error::Parse { line: 7, .. })));
    }
}
