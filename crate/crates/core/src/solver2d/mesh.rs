use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Triangulation of the unit disk.
///
/// Built from a hexagonal fan around the origin by repeated red refinement.
/// New boundary vertices are pushed radially onto the unit circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskMesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Boundary vertex indices ordered by angle.
    pub boundary: Vec<usize>,
    /// Angles of `boundary`, each in `[-π, π)`.
    pub boundary_theta: Vec<f64>,
    /// Consecutive pairs of the boundary loop, closing back to the start.
    pub boundary_edges: Vec<[usize; 2]>,
    pub h_max: f64,
    pub n_refine: usize,
}

fn midpoint(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Angle in `[-π, π)`.
pub(crate) fn angle(p: [f64; 2]) -> f64 {
    let t = p[1].atan2(p[0]);
    if t >= PI {
        t - 2.0 * PI
    } else {
        t
    }
}

fn boundary_edge_set(triangles: &[[usize; 3]]) -> Vec<(usize, usize)> {
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            *count.entry(edge_key(t[k], t[(k + 1) % 3])).or_default() += 1;
        }
    }
    let mut edges: Vec<(usize, usize)> = count.into_iter().filter_map(|(e, c)| (c == 1).then_some(e)).collect();
    edges.sort_unstable();
    edges
}

/// Maps the flat hexagon (unit circumradius) onto the unit disk sector by sector.
fn hexagon_to_disk(q: [f64; 2]) -> [f64; 2] {
    let r = q[0].hypot(q[1]);
    if r == 0.0 {
        return [0.0, 0.0];
    }
    let sector = PI / 3.0;
    let k = (((q[1].atan2(q[0]) + PI) / sector).floor() as i64).rem_euclid(6) as f64;
    let (t0, t1) = (-PI + k * sector, -PI + (k + 1.0) * sector);
    let (v0, v1) = ([t0.cos(), t0.sin()], [t1.cos(), t1.sin()]);
    // q = a v0 + b v1
    let det = v0[0] * v1[1] - v1[0] * v0[1];
    let a = (q[0] * v1[1] - v1[0] * q[1]) / det;
    let b = (v0[0] * q[1] - q[0] * v0[1]) / det;
    let rho = a + b;
    let theta = t0 + sector * (b / rho);
    if (rho - 1.0).abs() < 1e-14 {
        // exactly on the circle
        return [theta.cos(), theta.sin()];
    }
    [rho * theta.cos(), rho * theta.sin()]
}

impl DiskMesh {
    /// Hexagonal fan refined `n_refine` times.
    ///
    /// Refinement happens on the flat hexagon; each of its six sectors is then
    /// mapped smoothly onto a disk sector by `(ρ, t) ↦ ρ e^{i(θ_k + tπ/3)}`.
    /// Boundary midpoints therefore land on the radial projection of the
    /// chord midpoint, and interior vertices follow the same smooth map
    /// instead of inheriting a kink from every refinement level.
    pub fn build(n_refine: usize) -> DiskMesh {
        let mut reference = vec![[0.0, 0.0]];
        for k in 0..6 {
            let t = -PI + k as f64 * PI / 3.0;
            reference.push([t.cos(), t.sin()]);
        }
        let mut triangles: Vec<[usize; 3]> = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();

        for _ in 0..n_refine {
            let mut mids: HashMap<(usize, usize), usize> = HashMap::new();
            let mut next = Vec::with_capacity(4 * triangles.len());
            for t in &triangles {
                let mut m = [0usize; 3];
                for k in 0..3 {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    m[k] = *mids.entry(edge_key(a, b)).or_insert_with(|| {
                        reference.push(midpoint(reference[a], reference[b]));
                        reference.len() - 1
                    });
                }
                // m[k] sits on the edge t[k] -> t[k+1]
                next.push([t[0], m[0], m[2]]);
                next.push([m[0], t[1], m[1]]);
                next.push([m[2], m[1], t[2]]);
                next.push([m[0], m[1], m[2]]);
            }
            triangles = next;
        }
        let vertices: Vec<[f64; 2]> = reference.iter().map(|&q| hexagon_to_disk(q)).collect();

        let mut boundary: Vec<usize> = boundary_edge_set(&triangles)
            .into_iter()
            .flat_map(|(a, b)| [a, b])
            .collect();
        boundary.sort_unstable();
        boundary.dedup();
        let mut tagged: Vec<(f64, usize)> = boundary.iter().map(|&i| (angle(vertices[i]), i)).collect();
        tagged.sort_by(|a, b| a.0.total_cmp(&b.0));
        let boundary: Vec<usize> = tagged.iter().map(|t| t.1).collect();
        let boundary_theta: Vec<f64> = tagged.iter().map(|t| t.0).collect();
        let nb = boundary.len();
        let boundary_edges = (0..nb).map(|i| [boundary[i], boundary[(i + 1) % nb]]).collect();

        let mut h_max = 0.0f64;
        for t in &triangles {
            for k in 0..3 {
                let (p, q) = (vertices[t[k]], vertices[t[(k + 1) % 3]]);
                h_max = h_max.max((p[0] - q[0]).hypot(p[1] - q[1]));
            }
        }
        DiskMesh {
            vertices,
            triangles,
            boundary,
            boundary_theta,
            boundary_edges,
            h_max,
            n_refine,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }

    /// Signed area of triangle `t` (positive for counter-clockwise order).
    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn barycenter(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        let mut worst = 180.0f64;
        for t in &self.triangles {
            for k in 0..3 {
                let o = self.vertices[t[k]];
                let p = self.vertices[t[(k + 1) % 3]];
                let q = self.vertices[t[(k + 2) % 3]];
                let u = [p[0] - o[0], p[1] - o[1]];
                let v = [q[0] - o[0], q[1] - o[1]];
                let c = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                worst = worst.min(c.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        worst
    }

    /// Lumped boundary quadrature weights: half the arc to each neighbour.
    pub fn arc_weights(&self) -> Vec<f64> {
        let nb = self.n_boundary();
        (0..nb)
            .map(|i| 0.5 * (self.arc_length(i) + self.arc_length((i + nb - 1) % nb)))
            .collect()
    }

    /// Arc length from boundary position `i` to `i + 1` (cyclic).
    pub fn arc_length(&self, i: usize) -> f64 {
        let nb = self.n_boundary();
        let a = self.boundary_theta[i];
        let b = self.boundary_theta[(i + 1) % nb];
        if i + 1 == nb {
            b + 2.0 * PI - a
        } else {
            b - a
        }
    }

    /// Stable identifier for manifests.
    pub fn id(&self) -> String {
        format!("disk-hexfan-r{}-v{}", self.n_refine, self.n_vertices())
    }
}
