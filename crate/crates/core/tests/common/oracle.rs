//! Exhaustive vertex enumeration for the buyer's problem on small grids.
//!
//! Every vertex of `{m ≥ 0 : Σm = 1, Σm(θ−θ0) = 0, I_F ≥ 0}` is the solution of a square
//! system: pick the binding `I_F` rows and a support of matching size.

use infoscreen_core::dist::Grid;

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let pivot = a[col].clone();
        for r in 0..n {
            if r != col {
                let f = a[r][col] / pivot[col];
                for (x, y) in a[r][col..].iter_mut().zip(&pivot[col..]) {
                    *x -= f * y;
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn subsets(items: &[usize], size: usize) -> Vec<Vec<usize>> {
    if size == 0 {
        return vec![vec![]];
    }
    if items.len() < size {
        return vec![];
    }
    let mut out = subsets(&items[1..], size - 1);
    for s in &mut out {
        s.insert(0, items[0]);
    }
    out.extend(subsets(&items[1..], size));
    out
}

/// Best objective over all vertices whose support has at most `max_support` nodes.
pub fn enumerate(grid: &Grid, prior: &[f64], phi: &[f64], max_support: usize) -> f64 {
    let theta = grid.nodes();
    let n = theta.len();
    let hull: Vec<usize> = (0..n).filter(|&k| prior[k] > 0.0).collect();
    let (lo, hi) = (hull[0], *hull.last().unwrap());
    let cols: Vec<usize> = (lo..=hi).collect();
    let rows: Vec<usize> = (lo + 1..hi).collect();
    let mean: f64 = (0..n).map(|k| prior[k] * theta[k]).sum();
    let hinge = |k: usize, i: usize| (theta[k] - theta[i]).max(0.0);
    let rhs = |k: usize| (0..n).map(|i| prior[i] * hinge(k, i)).sum::<f64>();
    let feasible = |m: &[f64]| {
        rows.iter().all(|&k| cols.iter().map(|&i| m[i] * hinge(k, i)).sum::<f64>() <= rhs(k) + 1e-10)
    };
    let mut best = f64::NEG_INFINITY;
    for b in 0..=rows.len() {
        for binding in subsets(&rows, b) {
            let size = 2 + b;
            if size > max_support {
                continue;
            }
            for support in subsets(&cols, size) {
                let mut a = vec![vec![1.0; size], support.iter().map(|&i| theta[i] - mean).collect()];
                let mut rhs_v = vec![1.0, 0.0];
                for &k in &binding {
                    a.push(support.iter().map(|&i| hinge(k, i)).collect());
                    rhs_v.push(rhs(k));
                }
                let Some(x) = solve_dense(a, rhs_v) else { continue };
                if x.iter().any(|v| *v < -1e-12) {
                    continue;
                }
                let mut m = vec![0.0; n];
                for (j, &i) in support.iter().enumerate() {
                    m[i] = x[j].max(0.0);
                }
                if feasible(&m) {
                    best = best.max((0..n).map(|i| m[i] * phi[i]).sum());
                }
            }
        }
    }
    // A point mass at a node mean has a one-node support, which the loop above never builds
    // when the hull is a single node.
    if let Some(k) = (lo..=hi).find(|&k| (theta[k] - mean).abs() < 1e-12) {
        best = best.max(phi[k]);
    }
    best
}
