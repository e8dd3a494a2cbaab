//! Small 3×3 statistics shared by ground fitting and geometric scoring.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::geometry::Vec3;

pub(crate) fn to_na(v: Vec3) -> Vector3<f64> {
    Vector3::new(v.x, v.y, v.z)
}

pub(crate) fn from_na(v: &Vector3<f64>) -> Vec3 {
    Vec3::new(v.x, v.y, v.z)
}

/// Sample mean and population covariance (divide by `n`).
pub(crate) fn mean_and_covariance<'a>(points: impl IntoIterator<Item = &'a Vec3> + Clone) -> (Vec3, Matrix3<f64>) {
    let mut n = 0usize;
    let mut sum = Vector3::zeros();
    for p in points.clone() {
        sum += to_na(*p);
        n += 1;
    }
    if n == 0 {
        return (Vec3::ZERO, Matrix3::zeros());
    }
    let mean = sum / n as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = to_na(*p) - mean;
        cov += d * d.transpose();
    }
    (from_na(&mean), cov / n as f64)
}

/// Plane through the centroid whose normal is the least-variance direction.
pub(crate) fn fit_plane<'a>(points: impl IntoIterator<Item = &'a Vec3> + Clone) -> (Vec3, Vec3) {
    let (centroid, cov) = mean_and_covariance(points);
    let eig = SymmetricEigen::new(cov);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("three eigenvalues");
    let normal = from_na(&eig.eigenvectors.column(imin).into_owned()).normalized();
    (centroid, normal)
}
