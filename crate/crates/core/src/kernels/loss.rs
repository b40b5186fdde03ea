use crate::error::{Error, Result};
use crate::lane::Vec3;
use crate::spatial::KdTree;

/// Probabilities are clamped to `[BCE_CLAMP, 1 − BCE_CLAMP]`.
pub const BCE_CLAMP: f64 = 1e-7;

/// Confidence-label distance threshold (m).
pub const DEFAULT_TAU: f64 = 0.5;

pub fn bce_loss(p: f64, y: bool) -> f64 {
    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// d(bce)/dp; zero where the clamp is active.
pub fn bce_grad(p: f64, y: bool) -> f64 {
    if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&p) {
        return 0.0;
    }
    if y {
        -1.0 / p
    } else {
        1.0 / (1.0 - p)
    }
}

/// Mean loss over a batch; `None` when empty or the lengths differ.
pub fn bce_mean(p: &[f64], y: &[bool]) -> Option<f64> {
    if p.is_empty() || p.len() != y.len() {
        return None;
    }
    Some(p.iter().zip(y).map(|(&p, &y)| bce_loss(p, y)).sum::<f64>() / p.len() as f64)
}

pub fn smooth_l1(x: f64, beta: f64) -> f64 {
    let a = x.abs();
    if a < beta {
        0.5 * x * x / beta
    } else {
        a - 0.5 * beta
    }
}

pub fn smooth_l1_grad(x: f64, beta: f64) -> f64 {
    if x.abs() < beta {
        x / beta
    } else {
        x.signum()
    }
}

/// True where the nearest ground-truth point lies within `tau`.
pub fn confidence_labels(proposals: &[Vec3], gt_points: &[Vec3], tau: f64) -> Result<Vec<bool>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidConfig(format!("tau must be > 0, got {tau}")));
    }
    if gt_points.is_empty() {
        return Ok(vec![false; proposals.len()]);
    }
    let tree = KdTree::new(gt_points.iter().map(|p| [p.x, p.y, p.z]).collect());
    Ok(proposals
        .iter()
        .map(|p| {
            tree.nearest(&[p.x, p.y, p.z])
                .is_some_and(|(_, d2)| d2.sqrt() <= tau)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((bce_loss(0.5, true) - ln2).abs() < 1e-15);
        assert!((bce_loss(0.5, false) - ln2).abs() < 1e-15);
        assert!((bce_loss(1.0 - 1e-7, true) - 1e-7).abs() < 1e-12);
        assert!(bce_loss(1.0, true) > 0.0);
        assert!(bce_loss(0.0, true).is_finite());
        assert_eq!(bce_mean(&[], &[]), None);
    }

    #[test]
    fn smooth_l1_branches() {
        assert_eq!(smooth_l1(0.0, 1.0), 0.0);
        assert_eq!(smooth_l1(1.0, 1.0), 0.5);
        assert_eq!(smooth_l1(2.0, 1.0), 1.5);
        assert_eq!(smooth_l1(-2.0, 1.0), 1.5);
    }

    #[test]
    fn smooth_l1_continuous_at_beta() {
        for beta in [0.5, 1.0, 2.0] {
            for x0 in [beta, -beta] {
                let h = 1e-10;
                let (below, above) = if x0 > 0.0 { (x0 - h, x0 + h) } else { (x0 + h, x0 - h) };
                assert!((smooth_l1(below, beta) - smooth_l1(above, beta)).abs() < 1e-9);
                assert!((smooth_l1_grad(below, beta) - smooth_l1_grad(above, beta)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn labels_at_threshold() {
        let gt = [Vec3::zeros()];
        let props = [Vec3::zeros(), Vec3::new(0.4, 0.0, 0.0), Vec3::new(0.6, 0.0, 0.0)];
        assert_eq!(
            confidence_labels(&props, &gt, DEFAULT_TAU).unwrap(),
            vec![true, true, false]
        );
        assert_eq!(confidence_labels(&props, &[], 0.5).unwrap(), vec![false; 3]);
        assert!(confidence_labels(&props, &gt, 0.0).is_err());
    }
}
