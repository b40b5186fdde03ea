//! Seeded synthetic surround-view scenes with ground truth.
//!
//! The scene is a tilted ground plane `z = -sensor_height + ground_slope·x`
//! carrying `lane_count` parallel painted lanes `y = a·x³ + offset`. Returns
//! are drawn ring-style around the sensor (areal density falls off as
//! 1/range) and classified as lane paint when they land within half a paint
//! width of a lane. Curb strips and shrub clusters sit above the ground at
//! paint-like intensity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lane::{polyline_resample, LanePolyline, Point3I, PointCloud, Roi, Vec3};
use crate::spatial::XyGrid;

/// Vertex spacing of the dense ground-truth lanes.
pub const DENSE_SPACING: f64 = 0.1;
const CURVE_STEP: f64 = 0.01;
const CURB_HEIGHT: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    /// Sensor mount height above the ground at the origin (m).
    pub sensor_height: f64,
    /// Ground dz/dx.
    pub ground_slope: f64,
    pub lane_count: u32,
    /// Lateral distance between neighbouring lanes (m).
    pub lane_spacing: f64,
    /// Cubic coefficient shared by every lane (m⁻²).
    pub lane_curvature_a: f64,
    /// Painted stripe width (m).
    pub lane_width: f64,
    /// Mean returns per m² over the roi.
    pub point_density: f64,
    /// Standard deviation of ground/paint height noise, clamped at 3σ (m).
    pub noise_sigma: f64,
    pub intensity_sigma: f64,
    pub lane_intensity_mean: f64,
    pub ground_intensity_mean: f64,
    pub distractor_intensity_mean: f64,
    /// Share of draws aimed at curbs and shrubs. Distractors farther than
    /// the near curb are thinned in proportion to range.
    pub distractor_fraction: f64,
    /// Curb distance beyond the outermost lane (m).
    pub curb_margin: f64,
    pub shrub_clusters: u32,
    /// Inner radius of the ring sampler (m).
    pub min_range: f64,
    /// Spacing of the manual-annotation surrogate (m).
    pub sparse_spacing: f64,
    /// Height jitter σ of the manual-annotation surrogate, clamped at 3σ (m).
    pub sparse_jitter: f64,
    pub roi: Roi,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sensor_height: 2.0,
            ground_slope: 0.01,
            lane_count: 4,
            lane_spacing: 3.5,
            lane_curvature_a: 2e-5,
            lane_width: 0.15,
            point_density: 5.0,
            noise_sigma: 0.01,
            intensity_sigma: 0.05,
            lane_intensity_mean: 0.8,
            ground_intensity_mean: 0.2,
            distractor_intensity_mean: 0.8,
            distractor_fraction: 0.05,
            curb_margin: 1.0,
            shrub_clusters: 8,
            min_range: 1.0,
            sparse_spacing: 8.0,
            sparse_jitter: 0.02,
            roi: Roi::default(),
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("scene: {msg}")));
        Roi::new(self.roi.x_min, self.roi.x_max, self.roi.y_min, self.roi.y_max)?;
        if !(self.point_density > 0.0 && self.point_density.is_finite()) {
            return bad("point_density must be > 0");
        }
        if !(self.noise_sigma >= 0.0 && self.intensity_sigma >= 0.0 && self.sparse_jitter >= 0.0) {
            return bad("noise_sigma, intensity_sigma and sparse_jitter must be >= 0");
        }
        for (name, v) in [
            ("lane_intensity_mean", self.lane_intensity_mean),
            ("ground_intensity_mean", self.ground_intensity_mean),
            ("distractor_intensity_mean", self.distractor_intensity_mean),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.distractor_fraction) {
            return bad("distractor_fraction must lie in [0, 1)");
        }
        if !(self.lane_width > 0.0 && self.lane_spacing > 0.0 && self.sparse_spacing > 0.0) {
            return bad("lane_width, lane_spacing and sparse_spacing must be > 0");
        }
        if !(self.min_range >= 0.0 && self.curb_margin >= 0.0) {
            return bad("min_range and curb_margin must be >= 0");
        }
        if !(self.sensor_height.is_finite()
            && self.ground_slope.is_finite()
            && self.lane_curvature_a.is_finite())
        {
            return bad("geometry parameters must be finite");
        }
        Ok(())
    }

    pub fn ground_z(&self, x: f64, _y: f64) -> f64 {
        -self.sensor_height + self.ground_slope * x
    }

    /// Unit upward normal of the ground plane.
    pub fn ground_normal(&self) -> Vec3 {
        Vec3::new(-self.ground_slope, 0.0, 1.0).normalize()
    }

    pub fn lane_offset(&self, lane: u32) -> f64 {
        (lane as f64 - (self.lane_count as f64 - 1.0) / 2.0) * self.lane_spacing
    }

    fn outer_offset(&self) -> f64 {
        if self.lane_count == 0 {
            0.0
        } else {
            (self.lane_count as f64 - 1.0) / 2.0 * self.lane_spacing
        }
    }

    fn centerline_y(&self, x: f64, lateral: f64) -> f64 {
        self.lane_curvature_a * x * x * x + lateral
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointClass {
    Ground,
    LanePaint,
    Distractor,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub cloud: PointCloud,
    /// Ground-truth class of each cloud point.
    pub classes: Vec<PointClass>,
    pub gt_dense_lanes: Vec<LanePolyline>,
    pub gt_sparse_lanes: Vec<LanePolyline>,
    /// Height offsets applied to each sparse lane point.
    pub sparse_z_offsets: Vec<Vec<f64>>,
}

/// A jittered subsample of a dense lane with its logged height offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAnnotation {
    pub lane: LanePolyline,
    pub z_offsets: Vec<f64>,
}

pub(crate) fn clamped_normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let n = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    n.sample(rng).clamp(-3.0 * sigma, 3.0 * sigma)
}

fn sample_intensity(rng: &mut ChaCha8Rng, mean: f64, sigma: f64) -> f64 {
    (mean + clamped_normal(rng, sigma)).clamp(0.0, 1.0)
}

/// Resamples a dense lane at `spacing` and jitters every height by a
/// 3σ-clamped Gaussian of standard deviation `jitter`.
pub fn sparsify_annotation(
    dense: &LanePolyline,
    spacing: f64,
    jitter: f64,
    seed: u64,
) -> Result<SparseAnnotation> {
    if !(spacing > 0.0) || !(jitter >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "sparsify: spacing {spacing} must be > 0 and jitter {jitter} >= 0"
        )));
    }
    let base = if dense.len() >= 2 {
        polyline_resample(dense, spacing)?
    } else {
        dense.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offsets = Vec::with_capacity(base.len());
    let points = base
        .points()
        .iter()
        .map(|p| {
            let dz = clamped_normal(&mut rng, jitter);
            offsets.push(dz);
            Vec3::new(p.x, p.y, p.z + dz)
        })
        .collect();
    Ok(SparseAnnotation {
        lane: LanePolyline::new(dense.instance_id(), points)?,
        z_offsets: offsets,
    })
}

fn dense_lane(cfg: &SceneConfig, lane: u32) -> Option<LanePolyline> {
    let roi = &cfg.roi;
    let lateral = cfg.lane_offset(lane);
    let steps = (roi.width_x() / CURVE_STEP).ceil() as usize;

    // Longest contiguous in-roi run of the finely sampled curve.
    let mut best: Vec<Vec3> = Vec::new();
    let mut run: Vec<Vec3> = Vec::new();
    for i in 0..=steps {
        let x = (roi.x_min + i as f64 * CURVE_STEP).min(roi.x_max);
        let y = cfg.centerline_y(x, lateral);
        if roi.contains(x, y) {
            run.push(Vec3::new(x, y, cfg.ground_z(x, y)));
        } else if !run.is_empty() {
            if run.len() > best.len() {
                best = std::mem::take(&mut run);
            }
            run.clear();
        }
    }
    if run.len() > best.len() {
        best = run;
    }
    if best.len() < 2 {
        return None;
    }
    let fine = LanePolyline::from_unclean(lane, best).ok()?;
    polyline_resample(&fine, DENSE_SPACING).ok()
}

/// Derives independent stream seeds from a base seed.
pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        // splitmix64 finalizer
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

struct PaintIndex {
    lanes: Vec<Vec<[f64; 2]>>,
    vertex_owner: Vec<(usize, usize)>,
    grid: XyGrid,
}

impl PaintIndex {
    fn new(lanes: &[LanePolyline]) -> Self {
        let lanes: Vec<Vec<[f64; 2]>> = lanes
            .iter()
            .map(|l| l.points().iter().map(|p| [p.x, p.y]).collect())
            .collect();
        let mut xy = Vec::new();
        let mut vertex_owner = Vec::new();
        for (li, l) in lanes.iter().enumerate() {
            for (vi, p) in l.iter().enumerate() {
                xy.push(*p);
                vertex_owner.push((li, vi));
            }
        }
        Self {
            lanes,
            vertex_owner,
            grid: XyGrid::new(xy, 0.5),
        }
    }

    /// xy distance to the nearest lane polyline, if closer than `limit`.
    fn distance_within(&self, x: f64, y: f64, limit: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        self.grid
            .for_each_within(x, y, limit + DENSE_SPACING, |i| {
                let (li, vi) = self.vertex_owner[i];
                let lane = &self.lanes[li];
                for (a, b) in [(vi.wrapping_sub(1), vi), (vi, vi + 1)] {
                    if a >= lane.len() || b >= lane.len() {
                        continue;
                    }
                    let d = segment_distance_xy([x, y], lane[a], lane[b]);
                    if d <= limit && best.is_none_or(|cur| d < cur) {
                        best = Some(d);
                    }
                }
            });
        best
    }
}

pub(crate) fn segment_distance_xy(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (ex, ey) = (p[0] - (a[0] + t * dx), p[1] - (a[1] + t * dy));
    (ex * ex + ey * ey).sqrt()
}

/// Generates a scene; a pure function of `config`.
pub fn generate_scene(config: &SceneConfig) -> Result<SyntheticScene> {
    config.validate()?;
    let cfg = config;
    let roi = cfg.roi;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let gt_dense_lanes: Vec<LanePolyline> =
        (0..cfg.lane_count).filter_map(|i| dense_lane(cfg, i)).collect();
    let mut gt_sparse_lanes = Vec::with_capacity(gt_dense_lanes.len());
    let mut sparse_z_offsets = Vec::with_capacity(gt_dense_lanes.len());
    for lane in &gt_dense_lanes {
        let seed = mix_seed(&[cfg.seed, 0x5A, lane.instance_id() as u64]);
        let sparse = sparsify_annotation(lane, cfg.sparse_spacing, cfg.sparse_jitter, seed)?;
        gt_sparse_lanes.push(sparse.lane);
        sparse_z_offsets.push(sparse.z_offsets);
    }
    let paint = PaintIndex::new(&gt_dense_lanes);
    let half_width = cfg.lane_width / 2.0;

    let corners = [
        (roi.x_min, roi.y_min),
        (roi.x_min, roi.y_max),
        (roi.x_max, roi.y_min),
        (roi.x_max, roi.y_max),
    ];
    let r_max = corners
        .iter()
        .map(|(x, y)| x.hypot(*y))
        .fold(0.0f64, f64::max);
    let nearest_x = 0.0f64.clamp(roi.x_min, roi.x_max);
    let nearest_y = 0.0f64.clamp(roi.y_min, roi.y_max);
    let r_min = cfg.min_range.max(nearest_x.hypot(nearest_y)).min(r_max);

    let outer = cfg.outer_offset();
    let shrub_centres: Vec<(f64, f64)> = (0..cfg.shrub_clusters)
        .map(|_| {
            let x = rng.random_range(roi.x_min..=roi.x_max);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let lateral = side * (outer + cfg.curb_margin + rng.random_range(1.0..6.0));
            (x, cfg.centerline_y(x, lateral))
        })
        .collect();
    let shrub_spread = Normal::new(0.0, 0.4).expect("constant sigma");
    let distractor_ref_range = (outer + cfg.curb_margin).max(cfg.min_range);

    let target = (cfg.point_density * roi.area()).round() as usize;
    let max_attempts = target.saturating_mul(10_000).max(1_000);
    let mut points = Vec::with_capacity(target);
    let mut classes = Vec::with_capacity(target);
    let mut attempts = 0usize;

    while points.len() < target && attempts < max_attempts {
        attempts += 1;
        let distractor = rng.random::<f64>() < cfg.distractor_fraction;
        let (x, y, z, class) = if distractor {
            let (x, y, dz) = if shrub_centres.is_empty() || rng.random_bool(0.5) {
                let x = rng.random_range(roi.x_min..=roi.x_max);
                let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let lateral = side * (outer + cfg.curb_margin) + rng.random_range(-0.05..0.05);
                let dz = CURB_HEIGHT + rng.random_range(-0.03..0.03);
                (x, cfg.centerline_y(x, lateral), dz)
            } else {
                let (cx, cy) = shrub_centres[rng.random_range(0..shrub_centres.len())];
                let x = cx + shrub_spread.sample(&mut rng);
                let y = cy + shrub_spread.sample(&mut rng);
                (x, y, rng.random_range(0.1..0.3))
            };
            // Thin with range like ground returns, whose areal density falls as 1/r.
            if rng.random::<f64>() * x.hypot(y) > distractor_ref_range {
                continue;
            }
            (x, y, cfg.ground_z(x, y) + dz, PointClass::Distractor)
        } else {
            let r = rng.random_range(r_min..=r_max);
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let (x, y) = (r * theta.cos(), r * theta.sin());
            let class = if paint.distance_within(x, y, half_width).is_some() {
                PointClass::LanePaint
            } else {
                PointClass::Ground
            };
            let z = cfg.ground_z(x, y) + clamped_normal(&mut rng, cfg.noise_sigma);
            (x, y, z, class)
        };
        if !roi.contains(x, y) {
            continue;
        }
        let mean = match class {
            PointClass::Ground => cfg.ground_intensity_mean,
            PointClass::LanePaint => cfg.lane_intensity_mean,
            PointClass::Distractor => cfg.distractor_intensity_mean,
        };
        let intensity = sample_intensity(&mut rng, mean, cfg.intensity_sigma);
        points.push(Point3I::from_position(&Vec3::new(x, y, z), intensity));
        classes.push(class);
    }

    Ok(SyntheticScene {
        config: cfg.clone(),
        cloud: PointCloud::new(format!("synthetic-{:016x}", cfg.seed), points)?,
        classes,
        gt_dense_lanes,
        gt_sparse_lanes,
        sparse_z_offsets,
    })
}
