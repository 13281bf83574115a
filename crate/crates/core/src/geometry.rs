//! Spatial graph construction: Delaunay station edges, k-nearest grid links,
//! and the equirectangular projection shared by every distance computation.
//!
//! Delaunay is incremental insertion (Bowyer-Watson) over a triangle soup
//! with one symbolic "ghost" vertex standing in for the region outside the
//! convex hull, so no oversized super-triangle is needed. Predicates are f64
//! determinants with a relative tolerance of 1e-12; exactly cocircular quads
//! may triangulate with either diagonal.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub type Point = (f64, f64);

const REL_TOL: f64 = 1e-12;
const GHOST: usize = usize::MAX;

/// Scale longitudes by cos(mean latitude) so Euclidean distances in the
/// projected plane approximate great-circle distances over a small region.
pub fn project(lat: f64, lon: f64, mean_lat_deg: f64) -> Point {
    (lon * mean_lat_deg.to_radians().cos(), lat)
}

fn orient(a: Point, b: Point, c: Point) -> (f64, f64) {
    let t1 = (b.0 - a.0) * (c.1 - a.1);
    let t2 = (b.1 - a.1) * (c.0 - a.0);
    (t1 - t2, t1.abs() + t2.abs())
}

/// Positive when `p` lies strictly inside the circumcircle of CCW (a, b, c).
/// Returns (determinant, magnitude scale) for relative-tolerance tests.
fn incircle(a: Point, b: Point, c: Point, p: Point) -> (f64, f64) {
    let (ax, ay) = (a.0 - p.0, a.1 - p.1);
    let (bx, by) = (b.0 - p.0, b.1 - p.1);
    let (cx, cy) = (c.0 - p.0, c.1 - p.1);
    let (aq, bq, cq) = (ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy);
    let terms = [
        ax * (by * cq) , -(ax * (bq * cy)),
        -(ay * (bx * cq)), ay * (bq * cx),
        aq * (bx * cy), -(aq * (by * cx)),
    ];
    let det: f64 = terms.iter().sum();
    let scale: f64 = terms.iter().map(|t| t.abs()).sum();
    (det, scale)
}

fn strictly_positive(det: f64, scale: f64) -> bool {
    det > REL_TOL * scale
}

/// Edges of the Delaunay triangulation of projected points, as sorted
/// undirected index pairs.
pub fn delaunay(points: &[Point]) -> Result<Vec<(usize, usize)>> {
    let n = points.len();
    if n < 3 {
        return Err(Error::Geometry(format!(
            "delaunay needs at least 3 points, got {n}"
        )));
    }
    {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            points[i]
                .partial_cmp(&points[j])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for w in order.windows(2) {
            if points[w[0]] == points[w[1]] {
                return Err(Error::Geometry(format!(
                    "duplicate points at indices {} and {}",
                    w[0].min(w[1]),
                    w[0].max(w[1])
                )));
            }
        }
    }

    // First non-collinear triple seeds the triangulation.
    let mut seed = None;
    'outer: for k in 2..n {
        for j in 1..k {
            for i in 0..j {
                let (det, scale) = orient(points[i], points[j], points[k]);
                if det.abs() > REL_TOL * scale.max(f64::MIN_POSITIVE) {
                    seed = Some((i, j, k));
                    break 'outer;
                }
            }
        }
    }
    let Some((i0, i1, i2)) = seed else {
        return Err(Error::Geometry("all points are collinear".into()));
    };

    let (mut a, mut b, c) = (i0, i1, i2);
    if orient(points[a], points[b], points[c]).0 < 0.0 {
        std::mem::swap(&mut a, &mut b);
    }
    // Real triangles are stored CCW; ghost triangles carry GHOST in one slot
    // with their stored real edge being the reverse of the CCW hull edge.
    let mut tris: Vec<[usize; 3]> = vec![[a, b, c], [b, a, GHOST], [c, b, GHOST], [a, c, GHOST]];

    for pi in 0..n {
        if pi == i0 || pi == i1 || pi == i2 {
            continue;
        }
        insert_point(points, &mut tris, pi)?;
    }

    let mut edges: Vec<(usize, usize)> = Vec::new();
    for t in &tris {
        if t.contains(&GHOST) {
            continue;
        }
        for (u, v) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            edges.push((u.min(v), u.max(v)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(edges)
}

fn insert_point(points: &[Point], tris: &mut Vec<[usize; 3]>, pi: usize) -> Result<()> {
    let p = points[pi];
    let mut bad = Vec::new();
    for (ti, t) in tris.iter().enumerate() {
        let is_bad = if let Some(k) = t.iter().position(|&v| v == GHOST) {
            let e0 = t[(k + 1) % 3];
            let e1 = t[(k + 2) % 3];
            // Ghost region: strictly left of the stored (reversed hull) edge.
            let (det, scale) = orient(points[e0], points[e1], p);
            strictly_positive(det, scale)
        } else {
            let (det, scale) = incircle(points[t[0]], points[t[1]], points[t[2]], p);
            strictly_positive(det, scale)
        };
        if is_bad {
            bad.push(ti);
        }
    }
    if bad.is_empty() {
        return Err(Error::Geometry(format!(
            "degenerate configuration inserting point {pi}"
        )));
    }

    // Directed boundary edges: those whose reverse is not among the bad set.
    let mut dir_edges = Vec::with_capacity(bad.len() * 3);
    for &ti in &bad {
        let t = tris[ti];
        dir_edges.push((t[0], t[1]));
        dir_edges.push((t[1], t[2]));
        dir_edges.push((t[2], t[0]));
    }
    let boundary: Vec<(usize, usize)> = dir_edges
        .iter()
        .filter(|(u, v)| !dir_edges.contains(&(*v, *u)))
        .cloned()
        .collect();

    for &ti in bad.iter().rev() {
        tris.swap_remove(ti);
    }
    for (u, v) in boundary {
        tris.push([pi, u, v]);
    }
    Ok(())
}

/// All n(n-1)/2 undirected pairs.
pub fn fully_connected(n: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            edges.push((i, j));
        }
    }
    edges
}

fn dist2(a: Point, b: Point) -> f64 {
    let (dx, dy) = (a.0 - b.0, a.1 - b.1);
    dx * dx + dy * dy
}

/// Per station, the `k` nearest cell indices, ascending by Euclidean
/// distance with index tie-break.
pub fn knn_grid_links(stations: &[Point], cells: &[Point], k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if k > cells.len() {
        return Err(Error::Config(format!(
            "k = {k} exceeds the {} grid cells",
            cells.len()
        )));
    }
    let mut links = Vec::with_capacity(stations.len());
    for &s in stations {
        let mut order: Vec<usize> = (0..cells.len()).collect();
        order.sort_by(|&i, &j| {
            dist2(s, cells[i])
                .partial_cmp(&dist2(s, cells[j]))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(i.cmp(&j))
        });
        order.truncate(k);
        links.push(order);
    }
    Ok(links)
}

pub fn nearest_cell(station: Point, cells: &[Point]) -> Result<usize> {
    Ok(knn_grid_links(&[station], cells, 1)?[0][0])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationGraphMode {
    Delaunay,
    FullyConnected,
}

impl std::fmt::Display for StationGraphMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StationGraphMode::Delaunay => write!(f, "delaunay"),
            StationGraphMode::FullyConnected => write!(f, "fully_connected"),
        }
    }
}

/// The heterogeneous station/grid graph: bidirectional station edges plus
/// uni-directional grid-to-station links.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeteroGraph {
    pub mode: StationGraphMode,
    pub k: usize,
    /// Projected station coordinates.
    pub station_coords: Vec<Point>,
    /// Projected coordinates of every mesh cell, row-major.
    pub cell_coords: Vec<Point>,
    /// Undirected station pairs, each stored with i < j.
    pub station_edges: Vec<(usize, usize)>,
    /// Per station: k nearest cells, ascending by distance.
    pub grid_links: Vec<Vec<usize>>,
    /// Sorted union of all linked cells; sample grid blocks carry only these.
    pub active_cells: Vec<usize>,
    /// Affine coordinate standardization (center, scale) applied before
    /// coordinates enter a model.
    pub coord_center: Point,
    pub coord_scale: Point,
}

impl HeteroGraph {
    pub fn build(
        station_coords: Vec<Point>,
        cell_coords: Vec<Point>,
        mode: StationGraphMode,
        k: usize,
    ) -> Result<Self> {
        let station_edges = match mode {
            StationGraphMode::Delaunay => delaunay(&station_coords)?,
            StationGraphMode::FullyConnected => fully_connected(station_coords.len()),
        };
        let grid_links = knn_grid_links(&station_coords, &cell_coords, k)?;
        let mut active_cells: Vec<usize> = grid_links.iter().flatten().cloned().collect();
        active_cells.sort_unstable();
        active_cells.dedup();

        let all: Vec<Point> = station_coords
            .iter()
            .chain(cell_coords.iter())
            .cloned()
            .collect();
        let nf = all.len() as f64;
        let center = (
            all.iter().map(|p| p.0).sum::<f64>() / nf,
            all.iter().map(|p| p.1).sum::<f64>() / nf,
        );
        let var = (
            all.iter().map(|p| (p.0 - center.0).powi(2)).sum::<f64>() / nf,
            all.iter().map(|p| (p.1 - center.1).powi(2)).sum::<f64>() / nf,
        );
        let scale = (var.0.sqrt().max(1e-9), var.1.sqrt().max(1e-9));

        Ok(Self {
            mode,
            k,
            station_coords,
            cell_coords,
            station_edges,
            grid_links,
            active_cells,
            coord_center: center,
            coord_scale: scale,
        })
    }

    pub fn n_stations(&self) -> usize {
        self.station_coords.len()
    }

    pub fn standardize(&self, p: Point) -> Point {
        (
            (p.0 - self.coord_center.0) / self.coord_scale.0,
            (p.1 - self.coord_center.1) / self.coord_scale.1,
        )
    }

    /// Nearest mesh cell per station (`grid_links[i][0]`).
    pub fn nearest(&self, station: usize) -> usize {
        self.grid_links[station][0]
    }

    /// Index of `cell` within `active_cells`.
    pub fn active_index(&self, cell: usize) -> usize {
        self.active_cells.binary_search(&cell).expect("linked cell is active")
    }

    /// Sorted neighbor lists from the undirected station edges.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.n_stations()];
        for &(i, j) in &self.station_edges {
            nbrs[i].push(j);
            nbrs[j].push(i);
        }
        for l in nbrs.iter_mut() {
            l.sort_unstable();
        }
        nbrs
    }
}
