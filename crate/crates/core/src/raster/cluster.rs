use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::lane::Vec3;
use crate::spatial::XyGrid;

/// Label of points that belong to no cluster.
pub const NOISE: i32 = -1;

/// DBSCAN over xy. A point is core when at least `min_pts` points, itself
/// included, lie within `eps`. Clusters are numbered from 0 in the order
/// their first core point appears; a border point joins the first cluster
/// that reaches it.
pub fn cluster_instances(proposals: &[Vec3], eps: f64, min_pts: usize) -> Result<Vec<i32>> {
    if !(eps > 0.0 && eps.is_finite()) || min_pts == 0 {
        return Err(Error::InvalidConfig(format!(
            "dbscan needs eps > 0 and min_pts >= 1, got {eps} and {min_pts}"
        )));
    }
    let n = proposals.len();
    let grid = XyGrid::new(proposals.iter().map(|p| [p.x, p.y]).collect(), eps);
    let neighbors = |i: usize| grid.within(proposals[i].x, proposals[i].y, eps);

    let mut labels = vec![None::<i32>; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if labels[start].is_some() {
            continue;
        }
        let seed = neighbors(start);
        if seed.len() < min_pts {
            labels[start] = Some(NOISE);
            continue;
        }
        let id = next;
        next += 1;
        labels[start] = Some(id);
        queue.extend(seed);
        while let Some(j) = queue.pop_front() {
            match labels[j] {
                Some(NOISE) => labels[j] = Some(id),
                None => {
                    labels[j] = Some(id);
                    let nb = neighbors(j);
                    if nb.len() >= min_pts {
                        queue.extend(nb);
                    }
                }
                Some(_) => {}
            }
        }
    }
    Ok(labels.into_iter().map(|l| l.unwrap_or(NOISE)).collect())
}
