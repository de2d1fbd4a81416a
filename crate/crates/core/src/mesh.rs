//! Conforming 2D triangle and quadrilateral meshes.
//!
//! Cells list their vertices counterclockwise. Local edge `k` of a cell runs
//! from local vertex `k` to local vertex `k+1`. Each global edge stores its
//! vertex pair sorted by id and a unit normal that points from the lower-id
//! adjacent cell to the higher-id one, or outward on the boundary.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::reference_vertices;
use crate::{Tensor, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellType {
    Triangle,
    Quadrilateral,
}

impl CellType {
    pub fn n_vertices(self) -> usize {
        match self {
            CellType::Triangle => 3,
            CellType::Quadrilateral => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellType::Triangle => "tri",
            CellType::Quadrilateral => "quad",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tri" | "triangle" => Some(CellType::Triangle),
            "quad" | "quadrilateral" => Some(CellType::Quadrilateral),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Edge {
    /// Endpoint vertex ids, sorted ascending.
    pub vertices: [usize; 2],
    /// Adjacent cells, ascending; one entry on the boundary.
    pub cells: Vec<usize>,
    /// Unit normal, from `cells[0]` towards `cells[1]` (outward on the boundary).
    pub normal: Vec2,
    pub length: f64,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.cells.len() == 1
    }

    pub fn midpoint(&self, nodes: &[Vec2]) -> Vec2 {
        0.5 * (nodes[self.vertices[0]] + nodes[self.vertices[1]])
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };

    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub cell_type: CellType,
    pub nodes: Vec<Vec2>,
    pub cells: Vec<Vec<usize>>,
    pub edges: Vec<Edge>,
    /// Global edge id of each local edge.
    pub cell_edges: Vec<Vec<usize>>,
    /// Edges meeting at each vertex, ascending.
    pub vertex_edges: Vec<Vec<usize>>,
    /// Cells sharing each vertex, ascending.
    pub vertex_cells: Vec<Vec<usize>>,
    /// Tag of every boundary edge.
    pub boundary_tags: BTreeMap<usize, String>,
}

impl Mesh {
    pub const DIM: usize = 2;

    /// Builds the edge structure from nodes and cells. Boundary edges with a
    /// vertex pair found in `tagged` take that tag; the rest get `default_tag`.
    pub fn from_cells(
        cell_type: CellType,
        nodes: Vec<Vec2>,
        cells: Vec<Vec<usize>>,
        tagger: impl Fn(Vec2, [usize; 2]) -> Option<String>,
    ) -> Result<Self> {
        let nv = cell_type.n_vertices();
        for (c, cell) in cells.iter().enumerate() {
            if cell.len() != nv {
                return Err(Error::Mesh(format!(
                    "cell {c} has {} vertices, expected {nv}",
                    cell.len()
                )));
            }
            if let Some(&v) = cell.iter().find(|&&v| v >= nodes.len()) {
                return Err(Error::Mesh(format!("cell {c} references missing node {v}")));
            }
        }
        let mut lookup: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut cell_edges = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            let mut local = Vec::with_capacity(nv);
            for k in 0..nv {
                let (a, b) = (cell[k], cell[(k + 1) % nv]);
                if a == b {
                    return Err(Error::Mesh(format!("cell {c} has a repeated vertex")));
                }
                let key = [a.min(b), a.max(b)];
                let id = *lookup.entry(key).or_insert_with(|| {
                    let d = nodes[b] - nodes[a];
                    let len = d.norm();
                    edges.push(Edge {
                        vertices: key,
                        cells: Vec::new(),
                        normal: Vec2::new(d.y, -d.x) / len,
                        length: len,
                    });
                    edges.len() - 1
                });
                let e = &mut edges[id];
                if e.cells.len() == 2 {
                    return Err(Error::Mesh(format!(
                        "edge ({}, {}) is shared by more than two cells",
                        key[0], key[1]
                    )));
                }
                if e.cells.len() == 1 {
                    let first = e.cells[0];
                    let c0 = &cells[first];
                    let pos = c0.iter().position(|&v| v == a).unwrap();
                    // conforming neighbours traverse the shared edge in opposite directions
                    if c0[(pos + nv - 1) % nv] != b {
                        return Err(Error::Mesh(format!(
                            "cells {first} and {c} have inconsistent orientation"
                        )));
                    }
                }
                e.cells.push(c);
                local.push(id);
            }
            cell_edges.push(local);
        }
        // normals were set from the first (lowest-id) cell as its outward normal

        let mut vertex_edges = vec![Vec::new(); nodes.len()];
        for (id, e) in edges.iter().enumerate() {
            if e.length <= 0.0 {
                return Err(Error::Mesh(format!("edge {id} has zero length")));
            }
            for &v in &e.vertices {
                vertex_edges[v].push(id);
            }
        }
        let mut vertex_cells = vec![Vec::new(); nodes.len()];
        for (c, cell) in cells.iter().enumerate() {
            for &v in cell {
                vertex_cells[v].push(c);
            }
        }
        let mut boundary_tags = BTreeMap::new();
        for (id, e) in edges.iter().enumerate() {
            if e.is_boundary() {
                let tag = tagger(e.midpoint(&nodes), e.vertices).unwrap_or_else(|| "boundary".into());
                boundary_tags.insert(id, tag);
            }
        }
        let mesh = Mesh {
            cell_type,
            nodes,
            cells,
            edges,
            cell_edges,
            vertex_edges,
            vertex_cells,
            boundary_tags,
        };
        for c in 0..mesh.n_cells() {
            mesh.element_map(c)?;
        }
        Ok(mesh)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn boundary_edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.boundary_tags.keys().copied()
    }

    /// Boundary edges carrying `tag`.
    pub fn edges_with_tag<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = usize> + 'a {
        self.boundary_tags
            .iter()
            .filter(move |(_, t)| t.as_str() == tag)
            .map(|(&e, _)| e)
    }

    /// Sign of the global edge normal relative to the outward normal of `cell`.
    pub fn edge_sign(&self, edge: usize, cell: usize) -> f64 {
        if self.edges[edge].cells[0] == cell {
            1.0
        } else {
            -1.0
        }
    }

    /// Reference-to-physical map of a cell; fails on inverted cells.
    pub fn element_map(&self, cell: usize) -> Result<ElementMap> {
        let v: Vec<Vec2> = self.cells[cell].iter().map(|&i| self.nodes[i]).collect();
        let map = match self.cell_type {
            CellType::Triangle => ElementMap {
                cell,
                cell_type: self.cell_type,
                origin: v[0],
                a: v[1] - v[0],
                b: v[2] - v[0],
                r: Vec2::zeros(),
            },
            CellType::Quadrilateral => ElementMap {
                cell,
                cell_type: self.cell_type,
                origin: v[0],
                a: v[1] - v[0],
                b: v[3] - v[0],
                r: (v[2] - v[3]) - (v[1] - v[0]),
            },
        };
        for (i, &xh) in reference_vertices(self.cell_type).iter().enumerate() {
            let j = map.det(xh);
            if !(j > 0.0) {
                return Err(Error::InvertedCell {
                    cell,
                    vertex: i,
                    jacobian: j,
                });
            }
        }
        Ok(map)
    }

    pub fn cell_vertices(&self, cell: usize) -> Vec<Vec2> {
        self.cells[cell].iter().map(|&i| self.nodes[i]).collect()
    }

    /// Largest vertex-to-vertex distance in a cell.
    pub fn cell_diameter(&self, cell: usize) -> f64 {
        let v = self.cell_vertices(cell);
        let mut d: f64 = 0.0;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                d = d.max((v[i] - v[j]).norm());
            }
        }
        d
    }

    pub fn max_diameter(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_diameter(c)).fold(0.0, f64::max)
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        let v = self.cell_vertices(cell);
        let n = v.len();
        0.5 * (0..n)
            .map(|i| {
                let (p, q) = (v[i], v[(i + 1) % n]);
                p.x * q.y - q.x * p.y
            })
            .sum::<f64>()
    }

    pub fn cell_centroid(&self, cell: usize) -> Vec2 {
        let v = self.cell_vertices(cell);
        v.iter().sum::<Vec2>() / v.len() as f64
    }

    /// Cells sharing an edge with `cell`.
    pub fn edge_neighbors(&self, cell: usize) -> Vec<usize> {
        self.cell_edges[cell]
            .iter()
            .filter_map(|&e| self.edges[e].cells.iter().copied().find(|&c| c != cell))
            .collect()
    }

    /// `|(v2 − v3) − (v1 − v0)|` per quadrilateral; zero for triangles.
    pub fn parallelogram_defect(&self, cell: usize) -> f64 {
        match self.cell_type {
            CellType::Triangle => 0.0,
            CellType::Quadrilateral => {
                let v = self.cell_vertices(cell);
                ((v[2] - v[3]) - (v[1] - v[0])).norm()
            }
        }
    }

    pub fn max_parallelogram_defect(&self) -> f64 {
        (0..self.n_cells())
            .map(|c| self.parallelogram_defect(c))
            .fold(0.0, f64::max)
    }

    /// Checks that the stored tags sit exactly on the boundary edges.
    pub fn validate(&self) -> Result<()> {
        for (id, e) in self.edges.iter().enumerate() {
            if e.cells.is_empty() || e.cells.len() > 2 {
                return Err(Error::Mesh(format!("edge {id} has {} cells", e.cells.len())));
            }
            if e.is_boundary() != self.boundary_tags.contains_key(&id) {
                return Err(Error::Mesh(format!("edge {id} tag does not match its adjacency")));
            }
        }
        for c in 0..self.n_cells() {
            self.element_map(c)?;
        }
        Ok(())
    }
}

/// Tags by edge midpoint on a rectangle: left/right/bottom/top.
fn rect_tagger(r: Rect) -> impl Fn(Vec2, [usize; 2]) -> Option<String> {
    move |m: Vec2, _| {
        let tol = 1e-10 * ((r.x1 - r.x0).abs() + (r.y1 - r.y0).abs());
        let tag = if (m.x - r.x0).abs() < tol {
            "left"
        } else if (m.x - r.x1).abs() < tol {
            "right"
        } else if (m.y - r.y0).abs() < tol {
            "bottom"
        } else if (m.y - r.y1).abs() < tol {
            "top"
        } else {
            return None;
        };
        Some(tag.to_string())
    }
}

/// Structured mesh of a rectangle with `nx × ny` squares; triangle mode splits
/// each along the bottom-left to top-right diagonal.
pub fn build_rectangle_mesh(domain: Rect, nx: usize, ny: usize, cell_type: CellType) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(format!(
            "cell counts must be positive, got {nx}×{ny}"
        )));
    }
    if !(domain.x1 > domain.x0 && domain.y1 > domain.y0) {
        return Err(Error::InvalidArgument(format!("degenerate rectangle {domain:?}")));
    }
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push(Vec2::new(
                domain.x0 + (domain.x1 - domain.x0) * i as f64 / nx as f64,
                domain.y0 + (domain.y1 - domain.y0) * j as f64 / ny as f64,
            ));
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (bl, br, tr, tl) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            match cell_type {
                CellType::Quadrilateral => cells.push(vec![bl, br, tr, tl]),
                CellType::Triangle => {
                    cells.push(vec![bl, br, tr]);
                    cells.push(vec![bl, tr, tl]);
                }
            }
        }
    }
    Mesh::from_cells(cell_type, nodes, cells, rect_tagger(domain))
}

/// Moves every node by the smooth map
/// `(x̂ + 0.03 cos 3πx̂ cos 3πŷ, ŷ − 0.04 cos 3πx̂ cos 3πŷ)`.
pub fn distort_example2(mesh: &Mesh) -> Mesh {
    let mut out = mesh.clone();
    for p in out.nodes.iter_mut() {
        let c = (3.0 * PI * p.x).cos() * (3.0 * PI * p.y).cos();
        *p = Vec2::new(p.x + 0.03 * c, p.y - 0.04 * c);
    }
    out.update_edge_geometry();
    out
}

impl Mesh {
    /// Recomputes edge normals and lengths after nodes have moved.
    fn update_edge_geometry(&mut self) {
        for (id, e) in self.edges.iter_mut().enumerate() {
            let first = e.cells[0];
            let cell = &self.cells[first];
            let k = self.cell_edges[first].iter().position(|&x| x == id).unwrap();
            let d = self.nodes[cell[(k + 1) % cell.len()]] - self.nodes[cell[k]];
            e.length = d.norm();
            e.normal = Vec2::new(d.y, -d.x) / e.length;
        }
    }
}

/// Splits every cell into four. New nodes are appended as edge midpoints (in
/// edge order) followed by cell centres (quadrilaterals only).
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    let mut nodes = mesh.nodes.clone();
    let n0 = nodes.len();
    for e in &mesh.edges {
        nodes.push(e.midpoint(&mesh.nodes));
    }
    let nv = mesh.cell_type.n_vertices();
    let mut centre = vec![usize::MAX; mesh.n_cells()];
    if mesh.cell_type == CellType::Quadrilateral {
        for c in 0..mesh.n_cells() {
            centre[c] = nodes.len();
            nodes.push(mesh.cell_vertices(c).iter().sum::<Vec2>() / 4.0);
        }
    }
    let mut cells = Vec::with_capacity(4 * mesh.n_cells());
    for (c, cell) in mesh.cells.iter().enumerate() {
        let m: Vec<usize> = mesh.cell_edges[c].iter().map(|&e| n0 + e).collect();
        match mesh.cell_type {
            CellType::Quadrilateral => {
                let ctr = centre[c];
                cells.push(vec![cell[0], m[0], ctr, m[3]]);
                cells.push(vec![m[0], cell[1], m[1], ctr]);
                cells.push(vec![ctr, m[1], cell[2], m[2]]);
                cells.push(vec![m[3], ctr, m[2], cell[3]]);
            }
            CellType::Triangle => {
                cells.push(vec![cell[0], m[0], m[2]]);
                cells.push(vec![m[0], cell[1], m[1]]);
                cells.push(vec![m[2], m[1], cell[2]]);
                cells.push(vec![m[0], m[1], m[2]]);
            }
        }
        debug_assert_eq!(cell.len(), nv);
    }
    // a child boundary edge inherits the tag of the parent edge whose midpoint it touches
    let mut child_tag: HashMap<[usize; 2], String> = HashMap::new();
    for (&e, tag) in &mesh.boundary_tags {
        let [a, b] = mesh.edges[e].vertices;
        let mid = n0 + e;
        child_tag.insert([a.min(mid), a.max(mid)], tag.clone());
        child_tag.insert([b.min(mid), b.max(mid)], tag.clone());
    }
    Mesh::from_cells(mesh.cell_type, nodes, cells, move |_, key| child_tag.get(&key).cloned())
        .expect("refinement of a valid mesh is valid")
}

/// Affine (triangle) or bilinear (quadrilateral) reference map
/// `F(x̂) = origin + a x̂ + b ŷ + r x̂ ŷ`.
#[derive(Clone, Copy, Debug)]
pub struct ElementMap {
    pub cell: usize,
    pub cell_type: CellType,
    origin: Vec2,
    a: Vec2,
    b: Vec2,
    r: Vec2,
}

impl ElementMap {
    pub fn map(&self, xh: Vec2) -> Vec2 {
        self.origin + self.a * xh.x + self.b * xh.y + self.r * (xh.x * xh.y)
    }

    /// `DF_E(x̂)`, columns ∂F/∂x̂ and ∂F/∂ŷ.
    pub fn jacobian(&self, xh: Vec2) -> Tensor {
        let c0 = self.a + self.r * xh.y;
        let c1 = self.b + self.r * xh.x;
        Tensor::new(c0.x, c1.x, c0.y, c1.y)
    }

    pub fn det(&self, xh: Vec2) -> f64 {
        self.jacobian(xh).determinant()
    }

    /// Contravariant Piola transform `(1/J) DF v̂`.
    pub fn piola_vector(&self, vh: Vec2, xh: Vec2) -> Vec2 {
        let df = self.jacobian(xh);
        df * vh / df.determinant()
    }

    /// Row-wise Piola transform `(1/J) τ̂ DFᵀ`.
    pub fn piola_tensor(&self, th: Tensor, xh: Vec2) -> Tensor {
        let df = self.jacobian(xh);
        th * df.transpose() / df.determinant()
    }

    /// Inverse map by Newton iteration (exact after one step for triangles).
    pub fn inverse(&self, x: Vec2) -> Vec2 {
        let mut xh = Vec2::new(0.5, 0.5);
        for _ in 0..50 {
            let res = self.map(xh) - x;
            let Some(inv) = self.jacobian(xh).try_inverse() else {
                break;
            };
            let dx = inv * res;
            xh -= dx;
            if dx.norm() < 1e-15 {
                break;
            }
        }
        xh
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_counts() {
        let m = build_rectangle_mesh(Rect::UNIT, 1, 1, CellType::Quadrilateral).unwrap();
        assert_eq!((m.n_cells(), m.n_nodes(), m.boundary_tags.len()), (1, 4, 4));
        let m = build_rectangle_mesh(Rect::UNIT, 2, 2, CellType::Quadrilateral).unwrap();
        assert_eq!((m.n_cells(), m.n_nodes(), m.n_edges()), (4, 9, 12));
        assert_eq!(m.boundary_tags.len(), 8);
        let t = build_rectangle_mesh(Rect::UNIT, 1, 1, CellType::Triangle).unwrap();
        assert_eq!((t.n_cells(), t.n_edges()), (2, 5));
        let interior: Vec<_> = t.edges.iter().filter(|e| !e.is_boundary()).collect();
        assert_eq!(interior.len(), 1);
        assert_eq!(interior[0].cells, vec![0, 1]);
        assert_eq!(interior[0].vertices, [0, 3]);
    }

    #[test]
    fn rectangle_errors() {
        assert!(build_rectangle_mesh(Rect::UNIT, 0, 2, CellType::Triangle).is_err());
        let flat = Rect::new(0.0, 1.0, 1.0, 1.0);
        assert!(build_rectangle_mesh(flat, 2, 2, CellType::Triangle).is_err());
    }

    #[test]
    fn tags_and_normals() {
        let m = build_rectangle_mesh(Rect::new(-1.0, 1.0, 0.0, 2.0), 3, 2, CellType::Triangle).unwrap();
        for (&e, tag) in &m.boundary_tags {
            let n = m.edges[e].normal;
            let expect = match tag.as_str() {
                "left" => Vec2::new(-1.0, 0.0),
                "right" => Vec2::new(1.0, 0.0),
                "bottom" => Vec2::new(0.0, -1.0),
                "top" => Vec2::new(0.0, 1.0),
                other => panic!("unexpected tag {other}"),
            };
            assert!((n - expect).norm() < 1e-14);
        }
        for e in m.edges.iter().filter(|e| !e.is_boundary()) {
            let (c0, c1) = (m.cell_centroid(e.cells[0]), m.cell_centroid(e.cells[1]));
            assert!(e.normal.dot(&(c1 - c0)) > 0.0);
            assert!(e.cells[0] < e.cells[1]);
        }
    }

    #[test]
    fn distortion_map_values() {
        let m = build_rectangle_mesh(Rect::UNIT, 2, 2, CellType::Quadrilateral).unwrap();
        let d = distort_example2(&m);
        assert!((d.nodes[4] - Vec2::new(0.5, 0.5)).norm() < 1e-15);
        assert!((d.nodes[0] - Vec2::new(0.03, -0.04)).norm() < 1e-15);
    }

    #[test]
    fn refinement_counts_and_tags() {
        let m = build_rectangle_mesh(Rect::UNIT, 1, 1, CellType::Quadrilateral).unwrap();
        let r = refine_uniform(&m);
        assert_eq!((r.n_cells(), r.n_nodes()), (4, 9));
        let rr = refine_uniform(&r);
        assert_eq!(rr.n_cells(), 16 * m.n_cells());
        for tag in ["left", "right", "bottom", "top"] {
            assert_eq!(rr.edges_with_tag(tag).count(), 4);
        }
        let t = build_rectangle_mesh(Rect::UNIT, 2, 3, CellType::Triangle).unwrap();
        let tr = refine_uniform(&t);
        assert_eq!(tr.n_cells(), 4 * t.n_cells());
        assert!((tr.max_diameter() - 0.5 * t.max_diameter()).abs() < 1e-14);
        tr.validate().unwrap();
    }

    #[test]
    fn element_map_examples() {
        let m = build_rectangle_mesh(Rect::UNIT, 2, 2, CellType::Quadrilateral).unwrap();
        let f = m.element_map(0).unwrap();
        let xh = Vec2::new(0.3, 0.8);
        assert!((f.jacobian(xh) - Tensor::identity() * 0.5).norm() < 1e-15);
        assert!((f.det(xh) - 0.25).abs() < 1e-15);
        let v = f.piola_vector(Vec2::new(1.0, 0.0), xh);
        assert!((v - Vec2::new(2.0, 0.0)).norm() < 1e-15);
        let unit = build_rectangle_mesh(Rect::UNIT, 1, 1, CellType::Quadrilateral).unwrap();
        let id = unit.element_map(0).unwrap();
        assert!((id.map(xh) - xh).norm() < 1e-15);
        assert!((id.inverse(Vec2::new(0.2, 0.9)) - Vec2::new(0.2, 0.9)).norm() < 1e-14);
    }

    #[test]
    fn inverted_cell_is_reported() {
        let nodes = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        let err = Mesh::from_cells(CellType::Triangle, nodes, vec![vec![0, 2, 1]], |_, _| None);
        assert!(matches!(err, Err(Error::InvertedCell { cell: 0, .. })));
    }
}
