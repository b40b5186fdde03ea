use nalgebra::{Matrix3, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CloudIndex, Plane, PipelineConfig};
use crate::error::{Error, Result};
use crate::lane::{PointCloud, Vec3};
use crate::scene::mix_seed;

/// RANSAC result over a cylindrical neighbourhood.
#[derive(Debug, Clone)]
pub struct PlaneFit {
    pub plane: Plane,
    /// Cloud indices inside the xy radius.
    pub neighborhood: Vec<usize>,
    /// Neighbourhood indices within the inlier threshold of the final plane.
    pub inliers: Vec<usize>,
}

/// Local ground plane around `center`.
///
/// The neighbourhood is every point within `radius` of `center` in xy. The
/// RANSAC stream is keyed on the centre coordinates and `cfg.seed`, so a
/// given query always draws the same samples regardless of call order.
pub fn fit_local_ground_plane(
    cloud: &PointCloud,
    center: &Vec3,
    radius: f64,
    cfg: &PipelineConfig,
) -> Result<Plane> {
    let positions: Vec<Vec3> = cloud.points.iter().map(|p| p.position()).collect();
    let r2 = radius * radius;
    let neighborhood: Vec<usize> = positions
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let (dx, dy) = (p.x - center.x, p.y - center.y);
            dx * dx + dy * dy <= r2
        })
        .map(|(i, _)| i)
        .collect();
    fit_plane_ransac(&positions, neighborhood, center, cfg).map(|f| f.plane)
}

pub(crate) fn fit_with_index(
    index: &CloudIndex,
    center: &Vec3,
    radius: f64,
    cfg: &PipelineConfig,
) -> Result<PlaneFit> {
    let neighborhood = index.within_xy(center.x, center.y, radius);
    fit_plane_ransac(index.positions(), neighborhood, center, cfg)
}

fn covariance(points: &[Vec3], idx: &[usize]) -> (Vec3, Matrix3<f64>) {
    let n = idx.len() as f64;
    let centroid = idx.iter().map(|&i| points[i]).sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for &i in idx {
        let d = points[i] - centroid;
        cov += d * d.transpose();
    }
    (centroid, cov / n)
}

/// Total-least-squares plane through the indexed points.
fn least_squares_plane(points: &[Vec3], idx: &[usize]) -> Option<Plane> {
    let (centroid, cov) = covariance(points, idx);
    let eig = SymmetricEigen::new(cov);
    let (min_i, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    Plane::through(&centroid, eig.eigenvectors.column(min_i).into_owned())
}

fn fit_plane_ransac(
    points: &[Vec3],
    neighborhood: Vec<usize>,
    center: &Vec3,
    cfg: &PipelineConfig,
) -> Result<PlaneFit> {
    let n = neighborhood.len();
    if n < 3 {
        return Err(Error::InsufficientPoints { found: n });
    }
    let (_, cov) = covariance(points, &neighborhood);
    let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    if ev[1] <= 1e-12 * ev[2].max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateNeighborhood);
    }

    let threshold = cfg.ransac_inlier_threshold;
    let count_inliers = |plane: &Plane| {
        neighborhood
            .iter()
            .filter(|&&i| plane.distance(&points[i]) <= threshold)
            .count()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
        cfg.seed,
        center.x.to_bits(),
        center.y.to_bits(),
        center.z.to_bits(),
    ]));
    let mut best: Option<(usize, Plane)> = None;
    for _ in 0..cfg.ransac_iterations {
        let pick = sample(&mut rng, n, 3);
        let a = points[neighborhood[pick.index(0)]];
        let b = points[neighborhood[pick.index(1)]];
        let c = points[neighborhood[pick.index(2)]];
        let normal = (b - a).cross(&(c - a));
        if normal.norm() < 1e-12 {
            continue;
        }
        let Some(candidate) = Plane::through(&a, normal) else {
            continue;
        };
        let count = count_inliers(&candidate);
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, candidate));
        }
    }
    let (_, candidate) = best.ok_or(Error::DegenerateNeighborhood)?;

    let consensus: Vec<usize> = neighborhood
        .iter()
        .copied()
        .filter(|&i| candidate.distance(&points[i]) <= threshold)
        .collect();
    let plane = if consensus.len() >= 3 {
        least_squares_plane(points, &consensus).unwrap_or(candidate)
    } else {
        candidate
    };
    let inliers = neighborhood
        .iter()
        .copied()
        .filter(|&i| plane.distance(&points[i]) <= threshold)
        .collect();
    Ok(PlaneFit {
        plane,
        neighborhood,
        inliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lane::Point3I;
    use rand::Rng;

    fn cloud(points: &[Vec3]) -> PointCloud {
        PointCloud::new(
            "t",
            points.iter().map(|p| Point3I::from_position(p, 0.2)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn exact_horizontal_plane() {
        let pts: Vec<Vec3> = (0..25)
            .map(|i| Vec3::new((i % 5) as f64 * 0.3, (i / 5) as f64 * 0.3, 0.0))
            .collect();
        let plane = fit_local_ground_plane(
            &cloud(&pts),
            &Vec3::new(0.6, 0.6, 0.0),
            2.0,
            &PipelineConfig::default(),
        )
        .unwrap();
        assert!((plane.normal() - Vec3::z()).norm() < 1e-12);
        assert!(plane.offset().abs() < 1e-12);
    }

    #[test]
    fn two_points_are_insufficient() {
        let pts = [Vec3::new(0., 0., 0.), Vec3::new(0.1, 0., 0.)];
        assert!(matches!(
            fit_local_ground_plane(&cloud(&pts), &Vec3::zeros(), 2.0, &PipelineConfig::default()),
            Err(Error::InsufficientPoints { found: 2 })
        ));
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pts: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64 * 0.1, 0.0, 0.0)).collect();
        assert!(matches!(
            fit_local_ground_plane(&cloud(&pts), &Vec3::zeros(), 2.0, &PipelineConfig::default()),
            Err(Error::DegenerateNeighborhood)
        ));
    }

    #[test]
    fn tilted_plane_with_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = Vec::new();
        for _ in 0..180 {
            let (x, y) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            pts.push(Vec3::new(x, y, 0.05 * x + 1.0));
        }
        for _ in 0..20 {
            let (x, y) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            pts.push(Vec3::new(x, y, rng.random_range(1.2..2.0)));
        }
        let plane =
            fit_local_ground_plane(&cloud(&pts), &Vec3::zeros(), 2.5, &PipelineConfig::default())
                .unwrap();
        let truth = Vec3::new(-0.05, 0.0, 1.0).normalize();
        assert!(plane.normal().angle(&truth).to_degrees() < 1.0);
    }

    #[test]
    fn ransac_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Vec3> = (0..100)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.05..0.05),
                )
            })
            .collect();
        let c = cloud(&pts);
        let cfg = PipelineConfig::default();
        let a = fit_local_ground_plane(&c, &Vec3::zeros(), 2.0, &cfg).unwrap();
        let b = fit_local_ground_plane(&c, &Vec3::zeros(), 2.0, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
