use std::fmt;
use std::sync::Arc;

use super::mesh::DiskMesh;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub type Mat2 = [[f64; 2]; 2];

/// Symmetric, uniformly elliptic coefficient matrix `A(x)`.
#[derive(Clone)]
pub struct MatrixField {
    sampler: Arc<dyn Fn([f64; 2]) -> Mat2 + Send + Sync>,
    ellipticity_floor: f64,
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixField")
            .field("ellipticity_floor", &self.ellipticity_floor)
            .finish_non_exhaustive()
    }
}

impl MatrixField {
    pub fn new(ellipticity_floor: f64, sampler: impl Fn([f64; 2]) -> Mat2 + Send + Sync + 'static) -> Self {
        Self {
            sampler: Arc::new(sampler),
            ellipticity_floor,
        }
    }

    pub fn identity() -> Self {
        Self::new(1.0, |_| [[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn ellipticity_floor(&self) -> f64 {
        self.ellipticity_floor
    }

    pub fn sample(&self, p: [f64; 2]) -> Mat2 {
        (self.sampler)(p)
    }

    /// Samples at `p` and checks symmetry and the ellipticity floor.
    fn checked_sample(&self, p: [f64; 2], triangle: usize) -> Result<Mat2> {
        let a = self.sample(p);
        let scale = a[0][0].abs().max(a[1][1].abs()).max(1.0);
        if !a.iter().flatten().all(|v| v.is_finite()) || (a[0][1] - a[1][0]).abs() > 1e-14 * scale {
            return Err(Error::Data(format!(
                "coefficient matrix at the barycenter of triangle {triangle} is not finite and symmetric"
            )));
        }
        let half_tr = 0.5 * (a[0][0] + a[1][1]);
        let rad = (0.25 * (a[0][0] - a[1][1]).powi(2) + a[0][1] * a[0][1]).sqrt();
        let lambda_min = half_tr - rad;
        if lambda_min < self.ellipticity_floor * (1.0 - 1e-12) {
            return Err(Error::Data(format!(
                "ellipticity violated in triangle {triangle}: smallest eigenvalue {lambda_min} < {}",
                self.ellipticity_floor
            )));
        }
        Ok(a)
    }
}

/// Gradients of the three barycentric coordinates of a triangle, and its area.
pub fn p1_gradients(p: [[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    let inv = 1.0 / (2.0 * area);
    let mut g = [[0.0; 2]; 3];
    for k in 0..3 {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        g[k] = [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv];
    }
    (g, area)
}

/// P1 element matrix `∫_T ∇φ_i · A ∇φ_j` for constant `A`.
pub fn element_stiffness(p: [[f64; 2]; 3], a: &Mat2) -> [[f64; 3]; 3] {
    let (g, area) = p1_gradients(p);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        let ag = [
            a[0][0] * g[i][0] + a[0][1] * g[i][1],
            a[1][0] * g[i][0] + a[1][1] * g[i][1],
        ];
        for j in 0..3 {
            k[j][i] = area * (g[j][0] * ag[0] + g[j][1] * ag[1]);
        }
    }
    k
}

/// Element matrices of every triangle with `A` sampled at its barycenter.
pub fn element_matrices(mesh: &DiskMesh, a: &MatrixField) -> Result<Vec<[[f64; 3]; 3]>> {
    (0..mesh.triangles.len())
        .map(|t| {
            let at = a.checked_sample(mesh.barycenter(t), t)?;
            Ok(element_stiffness(mesh.triangles[t].map(|i| mesh.vertices[i]), &at))
        })
        .collect()
}

/// Scatters per-triangle element matrices, each scaled by `scale[t]`.
pub fn scatter(mesh: &DiskMesh, elements: &[[[f64; 3]; 3]], scale: Option<&[f64]>) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(9 * elements.len());
    for (t, ke) in elements.iter().enumerate() {
        let s = scale.map_or(1.0, |s| s[t]);
        let tri = mesh.triangles[t];
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri[i], tri[j], s * ke[i][j]));
            }
        }
    }
    let n = mesh.n_vertices();
    CsrMatrix::from_triplets(n, n, triplets)
}

/// Global P1 stiffness matrix with one-point (barycenter) coefficient evaluation.
pub fn assemble_stiffness(mesh: &DiskMesh, a: &MatrixField) -> Result<CsrMatrix> {
    Ok(scatter(mesh, &element_matrices(mesh, a)?, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_element() {
        let k = element_stiffness([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], &[[1.0, 0.0], [0.0, 1.0]]);
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - expected[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stiffness_kernel_and_symmetry() {
        let mesh = DiskMesh::build(3);
        let a = MatrixField::new(0.5, |p| {
            let off = 0.2 * p[0] * p[1];
            [[1.0 + 0.3 * p[0] * p[0], off], [off, 1.0 + 0.1 * p[1]]]
        });
        let k = assemble_stiffness(&mesh, &a).unwrap();
        assert!(k.asymmetry() <= 1e-14);
        let ones = vec![1.0; mesh.n_vertices()];
        assert!(k.mul_vec(&ones).iter().all(|r| r.abs() <= 1e-10));
        // positive semidefinite on a few probes
        for s in 1..5 {
            let x: Vec<f64> = mesh.vertices.iter().map(|p| (s as f64 * p[0]).sin() + p[1]).collect();
            let kx = k.mul_vec(&x);
            assert!(x.iter().zip(&kx).map(|(a, b)| a * b).sum::<f64>() >= -1e-12);
        }
    }

    #[test]
    fn ellipticity_violation_names_triangle() {
        let mesh = DiskMesh::build(1);
        let a = MatrixField::new(0.5, |p| {
            let d = if p[0] > 0.3 { 0.1 } else { 1.0 };
            [[d, 0.0], [0.0, 1.0]]
        });
        match assemble_stiffness(&mesh, &a) {
            Err(Error::Data(msg)) => assert!(msg.contains("triangle")),
            other => panic!("expected data error, got {other:?}"),
        }
    }
}
