//! Dynamic time warping with steps (1,0), (0,1) and (1,1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwAlignment {
    pub distance: f64,
    /// Index pairs from (0, 0) to (n-1, m-1).
    pub path: Vec<(usize, usize)>,
    /// Cost of each path step, parallel to `path`.
    pub step_costs: Vec<f64>,
}

/// Alignment of two index ranges under an arbitrary non-negative cost.
/// Backtracking prefers the diagonal, then a step in the first sequence.
pub fn dtw_with(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Result<DtwAlignment> {
    if n == 0 || m == 0 {
        return Err(Error::Input("dtw needs two non-empty sequences".into()));
    }
    let mut c = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            c[i * m + j] = cost(i, j);
        }
    }
    let mut d = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { d[(i - 1) * m + j - 1] } else { f64::INFINITY };
                let up = if i > 0 { d[(i - 1) * m + j] } else { f64::INFINITY };
                let left = if j > 0 { d[i * m + j - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            d[i * m + j] = best + c[i * m + j];
        }
    }
    let (mut i, mut j) = (n - 1, m - 1);
    let mut path = vec![(i, j)];
    while i > 0 || j > 0 {
        let diag = if i > 0 && j > 0 { d[(i - 1) * m + j - 1] } else { f64::INFINITY };
        let up = if i > 0 { d[(i - 1) * m + j] } else { f64::INFINITY };
        let left = if j > 0 { d[i * m + j - 1] } else { f64::INFINITY };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i, j));
    }
    path.reverse();
    let step_costs = path.iter().map(|&(i, j)| c[i * m + j]).collect();
    Ok(DtwAlignment { distance: d[n * m - 1], path, step_costs })
}

/// Euclidean-cost alignment of two planar point sequences.
pub fn dtw(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<DtwAlignment> {
    dtw_with(a.len(), b.len(), |i, j| ((a[i][0] - b[j][0]).powi(2) + (a[i][1] - b[j][1]).powi(2)).sqrt())
}
