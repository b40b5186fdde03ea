use crate::error::{Error, Result};

/// Minimum-cost assignment of a rectangular cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs, ascending by row; `min(rows, cols)` of them.
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

/// Shortest-augmenting-path Hungarian method with row and column
/// potentials, O(n²m) for n ≤ m. Wider-than-tall inputs are transposed.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Assignment> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if cost.iter().any(|r| r.len() != cols) {
        return Err(Error::ShapeMismatch("ragged cost matrix".into()));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidConfig("cost matrix has non-finite entries".into()));
    }
    if rows == 0 || cols == 0 {
        return Ok(Assignment {
            pairs: Vec::new(),
            total: 0.0,
        });
    }
    let mut pairs = if rows <= cols {
        solve(rows, cols, |i, j| cost[i][j])
    } else {
        solve(cols, rows, |i, j| cost[j][i])
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect()
    };
    pairs.sort_unstable();
    let total = pairs.iter().map(|&(r, c)| cost[r][c]).sum();
    Ok(Assignment { pairs, total })
}

fn solve(n: usize, m: usize, a: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    // 1-based with column 0 as the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| (p[j] - 1, j - 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_instance() {
        let c = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = hungarian(&c).unwrap();
        assert_eq!(a.pairs, vec![(0, 1), (1, 0), (2, 2)]);
        assert_eq!(a.total, 5.0);
    }

    #[test]
    fn rectangular_both_ways() {
        let c = vec![vec![1.0, 9.0, 0.5], vec![2.0, 0.1, 7.0]];
        let a = hungarian(&c).unwrap();
        assert_eq!(a.pairs, vec![(0, 2), (1, 1)]);
        let t: Vec<Vec<f64>> = (0..3).map(|j| (0..2).map(|i| c[i][j]).collect()).collect();
        let b = hungarian(&t).unwrap();
        assert_eq!(b.pairs, vec![(1, 1), (2, 0)]);
        assert_eq!(a.total, b.total);
    }

    #[test]
    fn empty_and_invalid() {
        assert!(hungarian(&[]).unwrap().pairs.is_empty());
        assert!(hungarian(&[vec![], vec![]]).unwrap().pairs.is_empty());
        assert!(hungarian(&[vec![f64::NAN]]).is_err());
        assert!(hungarian(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
