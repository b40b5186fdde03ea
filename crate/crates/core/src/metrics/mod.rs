//! Lane evaluation: one-to-one matching of predicted and ground-truth lanes,
//! precision/recall/F1, unilateral Chamfer distances, and dataset
//! statistics.

mod hungarian;
mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lane::{
    cumulative_arc_length, point_at_arc_length, polyline_length, polyline_resample,
    project_onto_polyline, LanePolyline, Vec3,
};
use crate::spatial::KdTree;

pub use hungarian::{hungarian, Assignment};
pub use stats::{
    dataset_stats, Histogram1D, Histogram2D, HistogramConfig, LaneStats, StatsConfig, StatsReport,
    XyHistogramConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Spacing for match costs and for predicted lanes before Chamfer (m).
    pub resample_spacing: f64,
    /// Matched pairs with a larger mean distance are dissolved (m).
    pub match_threshold: f64,
    pub stats: StatsConfig,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            resample_spacing: 0.5,
            match_threshold: 1.5,
            stats: StatsConfig::default(),
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.resample_spacing > 0.0 && self.resample_spacing.is_finite()) {
            return Err(Error::InvalidConfig("metrics: resample_spacing must be > 0".into()));
        }
        if !(self.match_threshold >= 0.0) {
            return Err(Error::InvalidConfig("metrics: match_threshold must be >= 0".into()));
        }
        self.stats.validate()
    }
}

fn nearest_mean<const D: usize>(a: &[[f64; D]], b: Vec<[f64; D]>) -> f64 {
    let tree = KdTree::new(b);
    let sum: f64 = a
        .iter()
        .map(|p| tree.nearest(p).map_or(f64::INFINITY, |(_, d2)| d2.sqrt()))
        .sum();
    sum / a.len() as f64
}

/// Mean over `a` of the distance to the nearest point of `b`.
pub fn chamfer_unilateral(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let pa: Vec<[f64; 3]> = a.iter().map(|p| [p.x, p.y, p.z]).collect();
    Ok(nearest_mean(&pa, b.iter().map(|p| [p.x, p.y, p.z]).collect()))
}

/// [`chamfer_unilateral`] with heights ignored.
pub fn chamfer_unilateral_bev(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let pa: Vec<[f64; 2]> = a.iter().map(|p| [p.x, p.y]).collect();
    Ok(nearest_mean(&pa, b.iter().map(|p| [p.x, p.y]).collect()))
}

/// Resampled points; lanes too short to resample are returned as is.
fn resampled(lane: &LanePolyline, spacing: f64) -> Result<Vec<Vec3>> {
    if lane.len() < 2 {
        return Ok(lane.points().to_vec());
    }
    Ok(polyline_resample(lane, spacing)?.into_points())
}

/// Mean distance between two resampled lanes after arc-length alignment.
///
/// The shorter lane is walked over its own extent; its start is projected
/// onto the longer lane and each of its points is compared with the longer
/// lane's point at the same arc-length offset from there. Direction is taken
/// from the projections of both ends.
pub fn lane_match_cost(a: &[Vec3], b: &[Vec3]) -> f64 {
    let (short, long) = if polyline_length(a) <= polyline_length(b) {
        (a, b)
    } else {
        (b, a)
    };
    let cum_long = cumulative_arc_length(long);
    let (_, s0) = project_onto_polyline(&short[0], long);
    let (_, s1) = project_onto_polyline(&short[short.len() - 1], long);
    let dir = if s1 >= s0 { 1.0 } else { -1.0 };
    let cum_short = cumulative_arc_length(short);
    let total: f64 = short
        .iter()
        .zip(&cum_short)
        .map(|(p, &t)| (p - point_at_arc_length(long, &cum_long, s0 + dir * t)).norm())
        .sum();
    total / short.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub pred: usize,
    pub gt: usize,
    /// Mean aligned pointwise distance (m).
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
}

/// Minimum-total-cost one-to-one assignment; pairs above
/// `match_threshold` are dissolved afterwards.
pub fn match_lanes(
    pred: &[LanePolyline],
    gt: &[LanePolyline],
    resample_spacing: f64,
    match_threshold: f64,
) -> Result<MatchResult> {
    if !(resample_spacing > 0.0 && resample_spacing.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "resample spacing must be positive, got {resample_spacing}"
        )));
    }
    let rp: Vec<Vec<Vec3>> = pred.iter().map(|l| resampled(l, resample_spacing)).collect::<Result<_>>()?;
    let rg: Vec<Vec<Vec3>> = gt.iter().map(|l| resampled(l, resample_spacing)).collect::<Result<_>>()?;
    let cost: Vec<Vec<f64>> = rp
        .iter()
        .map(|p| rg.iter().map(|g| lane_match_cost(p, g)).collect())
        .collect();
    let assignment = hungarian(&cost)?;
    let mut used_pred = vec![false; pred.len()];
    let mut used_gt = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (i, j) in assignment.pairs {
        if cost[i][j] <= match_threshold {
            used_pred[i] = true;
            used_gt[j] = true;
            pairs.push(MatchPair {
                pred: i,
                gt: j,
                cost: cost[i][j],
            });
        }
    }
    Ok(MatchResult {
        pairs,
        unmatched_pred: (0..pred.len()).filter(|&i| !used_pred[i]).collect(),
        unmatched_gt: (0..gt.len()).filter(|&j| !used_gt[j]).collect(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf1 {
    /// Zero denominators give 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

pub fn prf1(m: &MatchResult) -> Prf1 {
    Prf1::from_counts(m.pairs.len(), m.unmatched_pred.len(), m.unmatched_gt.len())
}

/// A matched pair with its Chamfer distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEval {
    pub pred_instance: u32,
    pub gt_instance: u32,
    pub cost: f64,
    pub cd_3d: f64,
    pub cd_bev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEval {
    pub frame_id: String,
    #[serde(flatten)]
    pub counts: Prf1,
    /// Mean over matched pairs; `None` without matches.
    pub cd_3d: Option<f64>,
    pub cd_bev: Option<f64>,
    pub pairs: Vec<PairEval>,
}

/// Matches one frame and measures each matched predicted lane, resampled at
/// `resample_spacing`, against its ground-truth points.
pub fn evaluate_frame(
    frame_id: &str,
    pred: &[LanePolyline],
    gt: &[LanePolyline],
    cfg: &MetricsConfig,
) -> Result<FrameEval> {
    cfg.validate()?;
    let m = match_lanes(pred, gt, cfg.resample_spacing, cfg.match_threshold)?;
    let mut pairs = Vec::with_capacity(m.pairs.len());
    for pair in &m.pairs {
        let p = resampled(&pred[pair.pred], cfg.resample_spacing)?;
        // Gt vertices plus its own resample, so identical lanes measure exactly zero.
        let mut g = gt[pair.gt].points().to_vec();
        g.extend(resampled(&gt[pair.gt], cfg.resample_spacing)?);
        let g = g.as_slice();
        pairs.push(PairEval {
            pred_instance: pred[pair.pred].instance_id(),
            gt_instance: gt[pair.gt].instance_id(),
            cost: pair.cost,
            cd_3d: chamfer_unilateral(&p, g)?,
            cd_bev: chamfer_unilateral_bev(&p, g)?,
        });
    }
    let mean = |f: fn(&PairEval) -> f64| {
        (!pairs.is_empty()).then(|| pairs.iter().map(f).sum::<f64>() / pairs.len() as f64)
    };
    Ok(FrameEval {
        frame_id: frame_id.to_string(),
        counts: prf1(&m),
        cd_3d: mean(|p| p.cd_3d),
        cd_bev: mean(|p| p.cd_bev),
        pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Counts and ratios summed over all frames.
    #[serde(flatten)]
    pub counts: Prf1,
    /// Mean over every matched pair of every frame.
    pub cd_3d: Option<f64>,
    pub cd_bev: Option<f64>,
    pub resample_spacing: f64,
    pub match_threshold: f64,
    /// Sorted by frame id.
    pub frames: Vec<FrameEval>,
}

impl EvalReport {
    pub fn aggregate(mut frames: Vec<FrameEval>, cfg: &MetricsConfig) -> Self {
        frames.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
        let (tp, fp, fn_) = frames.iter().fold((0, 0, 0), |(a, b, c), f| {
            (a + f.counts.tp, b + f.counts.fp, c + f.counts.fn_)
        });
        let all: Vec<&PairEval> = frames.iter().flat_map(|f| &f.pairs).collect();
        let mean = |f: fn(&PairEval) -> f64| {
            (!all.is_empty()).then(|| all.iter().map(|p| f(p)).sum::<f64>() / all.len() as f64)
        };
        Self {
            counts: Prf1::from_counts(tp, fp, fn_),
            cd_3d: mean(|p| p.cd_3d),
            cd_bev: mean(|p| p.cd_bev),
            resample_spacing: cfg.resample_spacing,
            match_threshold: cfg.match_threshold,
            frames,
        }
    }
}
