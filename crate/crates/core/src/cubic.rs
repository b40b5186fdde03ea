//! Per-lane cubic model `v = a·u³ + b·u² + c·u + d`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lane::OrderingAxis;

/// Which coordinate a curve predicts from the ordering-axis abscissa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CurveDimension {
    /// Offset perpendicular to the ordering axis (y for frontal lanes).
    #[default]
    Lateral,
    /// Height.
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicCurve {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub axis: OrderingAxis,
    pub dimension: CurveDimension,
}

impl CubicCurve {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self {
            a,
            b,
            c,
            d,
            axis: OrderingAxis::X,
            dimension: CurveDimension::Lateral,
        }
    }

    pub fn with_axis(mut self, axis: OrderingAxis, dimension: CurveDimension) -> Self {
        self.axis = axis;
        self.dimension = dimension;
        self
    }

    pub fn coefficients(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn eval(&self, u: f64) -> f64 {
        eval_cubic(self, u)
    }
}

pub fn eval_cubic(curve: &CubicCurve, u: f64) -> f64 {
    curve.a.mul_add(u, curve.b).mul_add(u, curve.c).mul_add(u, curve.d)
}

/// Least-squares cubic through `(u, v)` samples.
///
/// The design matrix is built on `t = (u - centre) / half_range` so that the
/// solve stays well conditioned for abscissae tens of metres from the origin;
/// coefficients are expanded back to the raw abscissa afterwards.
pub fn fit_cubic(samples: &[(f64, f64)]) -> Result<CubicCurve> {
    let distinct = count_distinct(samples.iter().map(|s| s.0));
    if distinct < 4 {
        return Err(Error::RankDeficient { distinct });
    }
    if samples.iter().any(|(u, v)| !u.is_finite() || !v.is_finite()) {
        return Err(Error::InvalidConfig("non-finite cubic sample".into()));
    }

    let n = samples.len();
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.0), hi.max(s.0))
        });
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let k = 1.0 / half;

    let design = DMatrix::from_fn(n, 4, |i, j| ((samples[i].0 - centre) * k).powi(3 - j as i32));
    let rhs = DVector::from_iterator(n, samples.iter().map(|s| s.1));
    let svd = design.svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-12)
        .map_err(|_| Error::RankDeficient { distinct })?;
    let (p3, p2, p1, p0) = (sol[0], sol[1], sol[2], sol[3]);

    // t = k·(u − c0): expand p3·t³ + p2·t² + p1·t + p0 in powers of u.
    let (c0, k2, k3) = (centre, k * k, k * k * k);
    Ok(CubicCurve::new(
        p3 * k3,
        p2 * k2 - 3.0 * p3 * k3 * c0,
        p1 * k - 2.0 * p2 * k2 * c0 + 3.0 * p3 * k3 * c0 * c0,
        p0 - p1 * k * c0 + p2 * k2 * c0 * c0 - p3 * k3 * c0 * c0 * c0,
    ))
}

fn count_distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}
