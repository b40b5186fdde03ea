use std::collections::{BTreeSet, HashMap};

use laneforge_core::lane::distance_to_polyline;
use laneforge_core::raster::NOISE;
use laneforge_core::{
    cluster_instances, lift_mask_to_3d, pillarize, rasterize_lanes, voxelize, GridGeometry,
    LanePolyline, Point3I, PointCloud, Roi, Vec3, VoxelConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, half: f64) -> PointCloud {
    let pts = (0..n)
        .map(|_| {
            Point3I::new(
                rng.random_range(-half..half) as f32,
                rng.random_range(-half..half) as f32,
                rng.random_range(-3.0..1.0) as f32,
                rng.random_range(0.0..1.0) as f32,
            )
        })
        .collect();
    PointCloud::new("r", pts).unwrap()
}

#[test]
fn pillar_counts_match_direct_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let roi = Roi::new(-10.0, 10.0, -5.0, 5.0).unwrap();
    let cloud = random_cloud(&mut rng, 1000, 12.0);
    let inside = cloud
        .points
        .iter()
        .filter(|p| {
            let (x, y) = (p.x as f64, p.y as f64);
            (-10.0..=10.0).contains(&x) && (-5.0..=5.0).contains(&y)
        })
        .count();
    let grid = pillarize(&cloud, roi, 0.04).unwrap();
    assert_eq!(grid.total_count(), inside as u64);
    assert_eq!(grid.dropped(), 1000 - inside);
    for p in &cloud.points {
        let (x, y) = (p.x as f64, p.y as f64);
        if let Some((ix, iy)) = grid.geometry().cell_of(x, y) {
            let (x0, y0) = (-10.0 + ix as f64 * 0.04, -5.0 + iy as f64 * 0.04);
            assert!(x >= x0 - 1e-9 && x < x0 + 0.04 + 1e-9);
            assert!(y >= y0 - 1e-9 && y < y0 + 0.04 + 1e-9);
        }
    }
}

#[test]
fn halving_resolution_quadruples_cells() {
    for res in [0.04, 0.08, 0.16, 0.32, 0.5, 1.0] {
        let a = GridGeometry::new(Roi::default(), res).unwrap();
        let b = GridGeometry::new(Roi::default(), res / 2.0).unwrap();
        assert_eq!(b.cell_count(), 4 * a.cell_count(), "{res}");
    }
}

fn random_lane(rng: &mut ChaCha8Rng, id: u32) -> LanePolyline {
    let n = rng.random_range(2..8);
    let mut p = Vec3::new(
        rng.random_range(-12.0..12.0),
        rng.random_range(-6.0..6.0),
        rng.random_range(-2.2..-1.8),
    );
    let mut pts = vec![p];
    for _ in 1..n {
        p += Vec3::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-0.1..0.1),
        );
        pts.push(p);
    }
    LanePolyline::from_unclean(id, pts).unwrap()
}

/// Cells hit by samples every 0.01 m along each segment, both ends included.
fn sampled_cells(lanes: &[LanePolyline], g: &GridGeometry) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for lane in lanes {
        for w in lane.points().windows(2) {
            let len = (w[1] - w[0]).xy().norm();
            let steps = (len / 0.01).floor() as usize;
            for k in 0..=steps {
                let p = w[0] + (w[1] - w[0]) * (k as f64 * 0.01 / len);
                if let Some(c) = g.cell_of(p.x, p.y) {
                    out.insert(c);
                }
            }
            if let Some(c) = g.cell_of(w[1].x, w[1].y) {
                out.insert(c);
            }
        }
    }
    out
}

/// Length of the xy segment inside a closed box.
fn length_in_box(a: &Vec3, b: &Vec3, lo: (f64, f64), hi: (f64, f64)) -> f64 {
    let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
    let d = b - a;
    for (p, q) in [
        (-d.x, a.x - lo.0),
        (d.x, hi.0 - a.x),
        (-d.y, a.y - lo.1),
        (d.y, hi.1 - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return 0.0;
            }
        } else if p < 0.0 {
            t0 = t0.max(q / p);
        } else {
            t1 = t1.min(q / p);
        }
    }
    if t1 > t0 {
        (t1 - t0) * d.xy().norm()
    } else {
        0.0
    }
}

#[test]
fn rasterization_matches_dense_sampling() {
    let roi = Roi::new(-10.0, 10.0, -5.0, 5.0).unwrap();
    let g = GridGeometry::new(roi, 0.32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut extra_cells = 0;
    for trial in 0..30 {
        let lanes: Vec<LanePolyline> = (0..3).map(|i| random_lane(&mut rng, i)).collect();
        let mask = rasterize_lanes(&lanes, roi, 0.32).unwrap();
        let got: BTreeSet<(usize, usize)> = mask.flagged().map(|(x, y, _)| (x, y)).collect();
        let want = sampled_cells(&lanes, &g);
        assert!(want.is_subset(&got), "trial {trial}: sampled cell missing");
        // Cells the samples skipped are clipped by under one sample step.
        for &(ix, iy) in got.difference(&want) {
            extra_cells += 1;
            let lo = (roi.x_min + ix as f64 * 0.32, roi.y_min + iy as f64 * 0.32);
            let hi = (lo.0 + 0.32, lo.1 + 0.32);
            let longest = lanes
                .iter()
                .flat_map(|l| l.points().windows(2).map(|w| length_in_box(&w[0], &w[1], lo, hi)).collect::<Vec<_>>())
                .fold(0.0, f64::max);
            assert!(longest < 0.01 + 1e-9, "trial {trial}: cell ({ix},{iy}) has {longest}");
        }
    }
    assert!(extra_cells < 30, "{extra_cells}");
}

#[test]
fn lifted_proposals_stay_near_source() {
    let roi = Roi::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let half_diag = 0.32 * std::f64::consts::SQRT_2 / 2.0;
    for _ in 0..20 {
        let lane = random_lane(&mut rng, 0);
        let mask = rasterize_lanes(std::slice::from_ref(&lane), roi, 0.32).unwrap();
        let (zmin, zmax) = lane
            .points()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.z), b.max(p.z)));
        let xy: Vec<Vec3> = lane.points().iter().map(|p| Vec3::new(p.x, p.y, 0.0)).collect();
        for p in lift_mask_to_3d(&mask) {
            let d = distance_to_polyline(&Vec3::new(p.x, p.y, 0.0), &xy);
            assert!(d <= half_diag + 1e-9, "{d}");
            assert!(p.z >= zmin - 1e-12 && p.z <= zmax + 1e-12);
        }
    }
}

#[test]
fn voxel_assignment_matches_floor_division() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cloud = random_cloud(&mut rng, 5000, 3.0);
    let cfg = VoxelConfig::default();
    let grid = voxelize(&cloud, &cfg).unwrap();
    assert!(grid.len() < cfg.max_voxels);
    assert_eq!(grid.dropped(), 0);
    let mut seen = vec![false; cloud.len()];
    for v in grid.voxels() {
        for &i in &v.points {
            let p = cloud.points[i].position();
            let want = [
                (p.x / 0.1).floor() as i64,
                (p.y / 0.1).floor() as i64,
                (p.z / 0.2).floor() as i64,
            ];
            assert_eq!(v.index, want);
            seen[i] = true;
        }
    }
    assert!(seen.iter().all(|&s| s));
}

/// Core points, their eps-connected components, and each point's set of
/// reachable components.
fn closure_oracle(pts: &[Vec3], eps: f64, min_pts: usize) -> (Vec<Option<usize>>, Vec<BTreeSet<usize>>) {
    let n = pts.len();
    let near = |i: usize, j: usize| (pts[i] - pts[j]).xy().norm_squared() <= eps * eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    // Transitive closure by repeated relaxation.
    let mut comp: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if core[i] && core[j] && near(i, j) && comp[j] > comp[i] {
                    comp[j] = comp[i];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let core_comp: Vec<Option<usize>> = (0..n).map(|i| core[i].then_some(comp[i])).collect();
    let reach = (0..n)
        .map(|i| (0..n).filter(|&j| core[j] && near(i, j)).map(|j| comp[j]).collect())
        .collect();
    (core_comp, reach)
}

fn check_against_closure(pts: &[Vec3], labels: &[i32], eps: f64, min_pts: usize) {
    let (core, reach) = closure_oracle(pts, eps, min_pts);
    let mut comp_to_label: HashMap<usize, i32> = HashMap::new();
    let mut label_to_comp: HashMap<i32, usize> = HashMap::new();
    for i in 0..pts.len() {
        if let Some(c) = core[i] {
            assert_ne!(labels[i], NOISE);
            assert_eq!(*comp_to_label.entry(c).or_insert(labels[i]), labels[i]);
            assert_eq!(*label_to_comp.entry(labels[i]).or_insert(c), c);
        }
    }
    for i in 0..pts.len() {
        if core[i].is_none() {
            if reach[i].is_empty() {
                assert_eq!(labels[i], NOISE, "point {i}");
            } else {
                let c = label_to_comp[&labels[i]];
                assert!(reach[i].contains(&c), "point {i}");
            }
        }
    }
}

#[test]
fn dbscan_matches_closure_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let n = rng.random_range(1..=50);
        let pts: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(rng.random_range(0.0..6.0), rng.random_range(0.0..3.0), 0.0))
            .collect();
        let eps = rng.random_range(0.3..1.2);
        let min_pts = rng.random_range(1..6);
        let labels = cluster_instances(&pts, eps, min_pts).unwrap();
        check_against_closure(&pts, &labels, eps, min_pts);
    }
}

proptest! {
    #[test]
    fn dbscan_permutation_invariant(
        raw in prop::collection::vec((0.0..5.0f64, 0.0..5.0f64), 1..50),
        shuffle_seed in any::<u64>(),
    ) {
        let pts: Vec<Vec3> = raw.iter().map(|&(x, y)| Vec3::new(x, y, 0.0)).collect();
        let labels = cluster_instances(&pts, 0.8, 3).unwrap();
        let mut order: Vec<usize> = (0..pts.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let permuted: Vec<Vec3> = order.iter().map(|&i| pts[i]).collect();
        let plabels = cluster_instances(&permuted, 0.8, 3).unwrap();
        check_against_closure(&permuted, &plabels, 0.8, 3);
        // Core-point partitions agree up to renaming.
        let (core, _) = closure_oracle(&pts, 0.8, 3);
        let mut map = HashMap::new();
        for (k, &i) in order.iter().enumerate() {
            if core[i].is_some() {
                prop_assert_eq!(*map.entry(labels[i]).or_insert(plabels[k]), plabels[k]);
            }
        }
    }

    #[test]
    fn voxelize_conserves_points(
        raw in prop::collection::vec((-2.0..2.0f32, -2.0..2.0f32, -1.0..1.0f32), 0..300),
        per_voxel in 1usize..6,
        max_voxels in 1usize..50,
    ) {
        let cloud = PointCloud::new(
            "p",
            raw.iter().map(|&(x, y, z)| Point3I::new(x, y, z, 0.5)).collect(),
        ).unwrap();
        let cfg = VoxelConfig { voxel_size: [0.5, 0.5, 0.4], max_points_per_voxel: per_voxel, max_voxels };
        let grid = voxelize(&cloud, &cfg).unwrap();
        prop_assert_eq!(grid.stored() + grid.dropped(), cloud.len());
        prop_assert!(grid.len() <= max_voxels);
        for v in grid.voxels() {
            prop_assert!(v.points.len() <= per_voxel);
            prop_assert!(v.points.windows(2).all(|w| w[0] < w[1]));
            for &i in &v.points {
                let p = cloud.points[i].position();
                for k in 0..3 {
                    let d = cfg.voxel_size[k];
                    prop_assert!(v.index[k] as f64 * d <= p[k] && p[k] < (v.index[k] + 1) as f64 * d);
                }
            }
        }
    }

    #[test]
    fn pillarize_partitions_points(
        raw in prop::collection::vec((-6.0..6.0f32, -6.0..6.0f32), 0..300),
        res in prop::sample::select(vec![0.1, 0.25, 0.5, 1.0]),
    ) {
        let roi = Roi::new(-5.0, 5.0, -5.0, 5.0).unwrap();
        let cloud = PointCloud::new(
            "p",
            raw.iter().map(|&(x, y)| Point3I::new(x, y, 0.0, 0.5)).collect(),
        ).unwrap();
        let grid = pillarize(&cloud, roi, res).unwrap();
        prop_assert_eq!(grid.total_count() as usize + grid.dropped(), cloud.len());
    }
}
