//! Conforming triangulations of the unit square.
//!
//! Triangles are stored counterclockwise. Local edge `k` of a triangle joins
//! local vertices `(k + 1) % 3` and `(k + 2) % 3`, i.e. it is the edge opposite
//! vertex `k`.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Point = [f64; 2];

const GEOM_TOL: f64 = 1e-12;

/// One of the four sides of the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    /// Whether `p` lies on this side (to geometric tolerance).
    pub fn contains(self, p: Point) -> bool {
        match self {
            Side::Left => p[0].abs() <= GEOM_TOL,
            Side::Right => (p[0] - 1.0).abs() <= GEOM_TOL,
            Side::Bottom => p[1].abs() <= GEOM_TOL,
            Side::Top => (p[1] - 1.0).abs() <= GEOM_TOL,
        }
    }

    pub fn parse(s: &str) -> Result<Side> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            "bottom" => Ok(Side::Bottom),
            "top" => Ok(Side::Top),
            other => Err(Error::Config(format!("unknown boundary side `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    /// Endpoints with `vertices[0] < vertices[1]`.
    pub vertices: [usize; 2],
    /// Adjacent triangles; the second is `None` on the boundary.
    pub triangles: [Option<usize>; 2],
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.triangles[1].is_none()
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    triangle_edges: Vec<[usize; 3]>,
    boundary: Vec<(usize, Side)>,
}

impl Mesh {
    /// Builds a mesh from raw connectivity, deriving edges and boundary markers.
    pub fn from_triangles(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Mesh> {
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {t} has non-positive area {area:e}")));
            }
        }

        let mut edges: Vec<Edge> = Vec::new();
        let mut lookup: HashMap<[usize; 2], usize> = HashMap::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut local = [0usize; 3];
            for (k, slot) in local.iter_mut().enumerate() {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let key = [a.min(b), a.max(b)];
                let id = match lookup.get(&key) {
                    Some(&id) => {
                        let edge = &mut edges[id];
                        if edge.triangles[1].is_some() {
                            return Err(Error::InvalidMesh(format!(
                                "edge {key:?} shared by more than two triangles"
                            )));
                        }
                        edge.triangles[1] = Some(t);
                        id
                    }
                    None => {
                        edges.push(Edge { vertices: key, triangles: [Some(t), None] });
                        lookup.insert(key, edges.len() - 1);
                        edges.len() - 1
                    }
                };
                *slot = id;
            }
            triangle_edges.push(local);
        }

        let mut boundary = Vec::new();
        for (id, edge) in edges.iter().enumerate() {
            if !edge.is_boundary() {
                continue;
            }
            let p = vertices[edge.vertices[0]];
            let q = vertices[edge.vertices[1]];
            let side = Side::ALL
                .into_iter()
                .find(|s| s.contains(p) && s.contains(q))
                .ok_or_else(|| {
                    Error::InvalidMesh(format!("boundary edge {id} does not lie on the unit square boundary"))
                })?;
            boundary.push((id, side));
        }

        Ok(Mesh { vertices, triangles, edges, triangle_edges, boundary })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Global edge ids of each triangle, indexed by the opposite local vertex.
    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    /// Boundary edges with their side marker.
    pub fn boundary_edges(&self) -> &[(usize, Side)] {
        &self.boundary
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn barycenter(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Largest edge length.
    pub fn max_edge_length(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| {
                let p = self.vertices[e.vertices[0]];
                let q = self.vertices[e.vertices[1]];
                (p[0] - q[0]).hypot(p[1] - q[1])
            })
            .fold(0.0, f64::max)
    }

    /// Checks every invariant of a valid unit-square mesh.
    pub fn validate(&self) -> Result<()> {
        for t in 0..self.num_triangles() {
            if self.area(t) <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {t} is not counterclockwise")));
            }
        }
        let total = self.total_area();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMesh(format!("total area {total} differs from 1")));
        }
        let mut incidence = vec![0usize; self.num_edges()];
        for local in &self.triangle_edges {
            for &e in local {
                incidence[e] += 1;
            }
        }
        for (id, edge) in self.edges.iter().enumerate() {
            let expected = if edge.is_boundary() { 1 } else { 2 };
            if incidence[id] != expected {
                return Err(Error::InvalidMesh(format!("edge {id} has incidence {}", incidence[id])));
            }
        }
        let marked: f64 = self
            .boundary
            .iter()
            .map(|&(e, _)| {
                let [p, q] = self.edges[e].vertices.map(|v| self.vertices[v]);
                (p[0] - q[0]).hypot(p[1] - q[1])
            })
            .sum();
        if (marked - 4.0).abs() > 1e-12 {
            return Err(Error::InvalidMesh(format!("boundary length {marked} differs from 4")));
        }
        Ok(())
    }

    /// Writes the mesh as a legacy ASCII VTK unstructured grid.
    ///
    /// `point_data` values are one per vertex; `cell_data` one per triangle.
    pub fn to_vtk(&self, title: &str, point_data: &[(&str, VtkValues<'_>)], cell_data: &[(&str, VtkValues<'_>)]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# vtk DataFile Version 3.0");
        let _ = writeln!(out, "{}", title.lines().next().unwrap_or(""));
        let _ = writeln!(out, "ASCII");
        let _ = writeln!(out, "DATASET UNSTRUCTURED_GRID");
        let _ = writeln!(out, "POINTS {} double", self.num_vertices());
        for p in &self.vertices {
            let _ = writeln!(out, "{} {} 0", fmt_f64(p[0]), fmt_f64(p[1]));
        }
        let _ = writeln!(out, "CELLS {} {}", self.num_triangles(), 4 * self.num_triangles());
        for t in &self.triangles {
            let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(out, "CELL_TYPES {}", self.num_triangles());
        for _ in &self.triangles {
            let _ = writeln!(out, "5");
        }
        write_vtk_block(&mut out, "POINT_DATA", self.num_vertices(), point_data);
        write_vtk_block(&mut out, "CELL_DATA", self.num_triangles(), cell_data);
        out
    }
}

/// Attribute payload for VTK export.
#[derive(Clone, Copy, Debug)]
pub enum VtkValues<'a> {
    Scalars(&'a [f64]),
    Vectors(&'a [[f64; 2]]),
}

fn write_vtk_block(out: &mut String, header: &str, count: usize, data: &[(&str, VtkValues<'_>)]) {
    if data.is_empty() {
        return;
    }
    let _ = writeln!(out, "{header} {count}");
    for (name, values) in data {
        match values {
            VtkValues::Scalars(v) => {
                debug_assert_eq!(v.len(), count);
                let _ = writeln!(out, "SCALARS {name} double 1");
                let _ = writeln!(out, "LOOKUP_TABLE default");
                for x in v.iter() {
                    let _ = writeln!(out, "{}", fmt_f64(*x));
                }
            }
            VtkValues::Vectors(v) => {
                debug_assert_eq!(v.len(), count);
                let _ = writeln!(out, "VECTORS {name} double");
                for x in v.iter() {
                    let _ = writeln!(out, "{} {} 0", fmt_f64(x[0]), fmt_f64(x[1]));
                }
            }
        }
    }
}

/// Shortest round-trip decimal representation; never locale dependent.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Structured triangulation of `[0,1]^2` with `n` cells per side.
///
/// Every grid square is split along its lower-left to upper-right diagonal.
pub fn build_unit_square_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::Config("mesh resolution n must be at least 1".into()));
    }
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            // exact endpoints so boundary tests are clean
            let x = if i == n { 1.0 } else { i as f64 * h };
            let y = if j == n { 1.0 } else { j as f64 * h };
            vertices.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v11, v01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Mesh::from_triangles(vertices, triangles)
}

/// Splits every triangle into three around its barycenter.
pub fn barycentric_refine(mesh: &Mesh) -> Result<Mesh> {
    let mut vertices = mesh.vertices.clone();
    let mut triangles = Vec::with_capacity(3 * mesh.num_triangles());
    for (t, &[a, b, c]) in mesh.triangles.iter().enumerate() {
        vertices.push(mesh.barycenter(t));
        let m = vertices.len() - 1;
        triangles.push([a, b, m]);
        triangles.push([b, c, m]);
        triangles.push([c, a, m]);
    }
    Mesh::from_triangles(vertices, triangles)
}

/// For each fine triangle, the coarse triangle that contains its barycenter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellMap {
    pub coarse_of_fine: Vec<usize>,
    pub num_coarse: usize,
}

impl CellMap {
    /// Fine triangles grouped by coarse cell, in increasing fine index.
    pub fn fine_cells(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_coarse];
        for (f, &c) in self.coarse_of_fine.iter().enumerate() {
            groups[c].push(f);
        }
        groups
    }
}

pub fn build_cell_map(fine: &Mesh, coarse: &Mesh) -> Result<CellMap> {
    let boxes: Vec<[f64; 4]> = (0..coarse.num_triangles())
        .map(|t| {
            let pts = coarse.triangle_points(t);
            let xs = pts.map(|p| p[0]);
            let ys = pts.map(|p| p[1]);
            [
                xs.iter().copied().fold(f64::INFINITY, f64::min),
                xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                ys.iter().copied().fold(f64::INFINITY, f64::min),
                ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ]
        })
        .collect();

    let mut coarse_of_fine = Vec::with_capacity(fine.num_triangles());
    for f in 0..fine.num_triangles() {
        let p = fine.barycenter(f);
        // lowest coarse index wins ties on shared edges
        let hit = (0..coarse.num_triangles()).find(|&c| {
            let b = boxes[c];
            p[0] >= b[0] - GEOM_TOL
                && p[0] <= b[1] + GEOM_TOL
                && p[1] >= b[2] - GEOM_TOL
                && p[1] <= b[3] + GEOM_TOL
                && point_in_triangle(p, coarse.triangle_points(c))
        });
        match hit {
            Some(c) => coarse_of_fine.push(c),
            None => {
                return Err(Error::InvalidMesh(format!(
                    "fine triangle {f} (barycenter {p:?}) lies in no coarse triangle"
                )))
            }
        }
    }
    Ok(CellMap { coarse_of_fine, num_coarse: coarse.num_triangles() })
}

fn point_in_triangle(p: Point, [a, b, c]: [Point; 3]) -> bool {
    let scale = signed_area(a, b, c);
    let tol = -GEOM_TOL * scale.max(1.0);
    signed_area(a, b, p) >= tol && signed_area(b, c, p) >= tol && signed_area(c, a, p) >= tol
}
