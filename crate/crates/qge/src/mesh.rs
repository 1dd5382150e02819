//! Structured triangulations of rectangular basins.
//!
//! The rectangle is cut into nx x ny squares and every square is split along
//! its lower-left to upper-right diagonal, producing two congruent
//! counterclockwise triangles. Every edge carries a canonical orientation,
//! from its lower-numbered vertex to its higher-numbered one; the edge normal
//! is that tangent rotated by +90 degrees. Orientation therefore never
//! depends on which cell an edge is seen from, which is what makes the
//! normal-derivative degree of freedom of the C1 element single-valued.

use crate::error::QgeError;
use std::io::Write;

const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug)]
pub struct Edge {
    /// Endpoint vertex indices, ascending; the canonical tangent points from
    /// `v[0]` to `v[1]`.
    pub v: [usize; 2],
    /// Adjacent cells; boundary edges have exactly one.
    pub cells: [Option<usize>; 2],
    pub boundary: bool,
}

#[derive(Clone, Debug)]
pub struct Cell {
    /// Vertex indices in counterclockwise order.
    pub v: [usize; 3],
    /// Edges in traversal order (v0-v1, v1-v2, v2-v0).
    pub edges: [usize; 3],
    /// +1 when the traversal direction matches the canonical edge direction.
    pub edge_sign: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub edges: Vec<Edge>,
    pub cells: Vec<Cell>,
    pub vertex_boundary: Vec<bool>,
    pub width: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    /// Grid spacing; cells are right triangles with legs of this length.
    pub h: f64,
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    pub fn cell_vertex_coords(&self, c: usize) -> [[f64; 2]; 3] {
        let cell = &self.cells[c];
        let mut out = [[0.0; 2]; 3];
        for (k, &v) in cell.v.iter().enumerate() {
            out[k] = [self.vertices[v].x, self.vertices[v].y];
        }
        out
    }

    /// Unit tangent of the canonical edge orientation.
    pub fn edge_tangent(&self, e: usize) -> [f64; 2] {
        let edge = &self.edges[e];
        let a = self.vertices[edge.v[0]];
        let b = self.vertices[edge.v[1]];
        let dx = b.x - a.x;
        let dy = b.y - a.y;
        let len = (dx * dx + dy * dy).sqrt();
        [dx / len, dy / len]
    }

    /// Canonical tangent rotated by +90 degrees.
    pub fn edge_normal(&self, e: usize) -> [f64; 2] {
        let t = self.edge_tangent(e);
        [-t[1], t[0]]
    }

    pub fn edge_midpoint(&self, e: usize) -> Point {
        let edge = &self.edges[e];
        let a = self.vertices[edge.v[0]];
        let b = self.vertices[edge.v[1]];
        Point { x: 0.5 * (a.x + b.x), y: 0.5 * (a.y + b.y) }
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        let v = self.cell_vertex_coords(c);
        0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
    }

    /// Locate the cell containing the point by grid arithmetic; points on
    /// shared edges resolve to one of the adjacent cells deterministically.
    pub fn locate(&self, x: f64, y: f64) -> Result<usize, QgeError> {
        let tol = BOUNDARY_TOL * self.width.max(self.height).max(1.0);
        if x < -tol || x > self.width + tol || y < -tol || y > self.height + tol {
            return Err(QgeError::PointOutsideDomain { x, y });
        }
        let xc = x.clamp(0.0, self.width);
        let yc = y.clamp(0.0, self.height);
        let i = ((xc / self.h) as usize).min(self.nx - 1);
        let j = ((yc / self.h) as usize).min(self.ny - 1);
        let fx = xc / self.h - i as f64;
        let fy = yc / self.h - j as f64;
        let square = j * self.nx + i;
        Ok(if fy <= fx { 2 * square } else { 2 * square + 1 })
    }

    /// Plain-text dump: `v x y` per vertex, `c i j k` per cell, `e i j b`
    /// per edge with b = 1 on the boundary.
    pub fn dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in &self.vertices {
            writeln!(out, "v {} {}", p.x, p.y)?;
        }
        for c in &self.cells {
            writeln!(out, "c {} {} {}", c.v[0], c.v[1], c.v[2])?;
        }
        for e in &self.edges {
            writeln!(out, "e {} {} {}", e.v[0], e.v[1], u8::from(e.boundary))?;
        }
        Ok(())
    }
}

/// Build the structured triangulation of [0, width] x [0, height].
///
/// The subdivision counts must give square cells (width/nx == height/ny), and
/// the diagonal of every square runs from its lower-left corner to its
/// upper-right corner.
pub fn generate_rectangle_mesh(
    width: f64,
    height: f64,
    nx: usize,
    ny: usize,
) -> Result<Mesh, QgeError> {
    if !(width > 0.0) || !(height > 0.0) {
        return Err(QgeError::InvalidMesh(format!(
            "extents must be positive, got {width} x {height}"
        )));
    }
    if nx == 0 || ny == 0 {
        return Err(QgeError::InvalidMesh(format!(
            "subdivision counts must be positive, got {nx} x {ny}"
        )));
    }
    let hx = width / nx as f64;
    let hy = height / ny as f64;
    if (hx - hy).abs() > 1e-12 * hx.max(hy) {
        return Err(QgeError::InvalidMesh(format!(
            "cells must be square: width/nx = {hx} but height/ny = {hy}"
        )));
    }
    let h = hx;

    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Point { x: i as f64 * h, y: j as f64 * h });
        }
    }

    // Edge enumeration: all horizontals, then verticals, then diagonals.
    let n_horiz = (ny + 1) * nx;
    let n_vert = ny * (nx + 1);
    let horiz = |i: usize, j: usize| j * nx + i;
    let vert = |i: usize, j: usize| n_horiz + j * (nx + 1) + i;
    let diag = |i: usize, j: usize| n_horiz + n_vert + j * nx + i;

    let mut edges = Vec::with_capacity(n_horiz + n_vert + nx * ny);
    for j in 0..=ny {
        for i in 0..nx {
            edges.push(Edge { v: [vid(i, j), vid(i + 1, j)], cells: [None, None], boundary: false });
        }
    }
    for j in 0..ny {
        for i in 0..=nx {
            edges.push(Edge { v: [vid(i, j), vid(i, j + 1)], cells: [None, None], boundary: false });
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            edges.push(Edge { v: [vid(i, j), vid(i + 1, j + 1)], cells: [None, None], boundary: false });
        }
    }

    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let v00 = vid(i, j);
            let v10 = vid(i + 1, j);
            let v11 = vid(i + 1, j + 1);
            let v01 = vid(i, j + 1);
            // Lower triangle: traversal order is horizontal, vertical, diagonal.
            cells.push(Cell {
                v: [v00, v10, v11],
                edges: [horiz(i, j), vert(i + 1, j), diag(i, j)],
                edge_sign: [1.0, 1.0, -1.0],
            });
            // Upper triangle.
            cells.push(Cell {
                v: [v00, v11, v01],
                edges: [diag(i, j), horiz(i, j + 1), vert(i, j)],
                edge_sign: [1.0, -1.0, -1.0],
            });
        }
    }

    for (c, cell) in cells.iter().enumerate() {
        for &e in &cell.edges {
            let slot = &mut edges[e].cells;
            if slot[0].is_none() {
                slot[0] = Some(c);
            } else {
                debug_assert!(slot[1].is_none(), "edge shared by more than two cells");
                slot[1] = Some(c);
            }
        }
    }
    for edge in edges.iter_mut() {
        edge.boundary = edge.cells[1].is_none();
    }

    let tol = BOUNDARY_TOL * width.max(height).max(1.0);
    let vertex_boundary = vertices
        .iter()
        .map(|p| p.x.abs() <= tol || (p.x - width).abs() <= tol || p.y.abs() <= tol || (p.y - height).abs() <= tol)
        .collect();

    Ok(Mesh { vertices, edges, cells, vertex_boundary, width, height, nx, ny, h })
}
