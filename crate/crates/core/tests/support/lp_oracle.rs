//! Brute-force vertex enumeration for small transportation problems.

use nalgebra::DMatrix;

/// Every vertex of `{T >= 0, rows = w, cols = 1/N}` is a basic solution on
/// a spanning tree of `2N - 1` cells. Enumerate all cell subsets of that
/// size, keep acyclic ones, solve for flows by leaf peeling and return the
/// cheapest nonnegative one.
pub fn brute_force_min(cost: &DMatrix<f64>, weights: &[f64]) -> (f64, Vec<DMatrix<f64>>) {
    let n = weights.len();
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let k = 2 * n - 1;
    let mut best = f64::INFINITY;
    let mut vertices = Vec::new();
    let mut chosen = Vec::with_capacity(k);
    combinations(cells.len(), k, 0, &mut chosen, &mut |subset| {
        let basis: Vec<(usize, usize)> = subset.iter().map(|&c| cells[c]).collect();
        if !is_acyclic(n, &basis) {
            return;
        }
        let Some(flows) = peel(n, &basis, weights) else { return };
        if flows.iter().any(|f| *f < -1e-12) {
            return;
        }
        let mut t = DMatrix::zeros(n, n);
        for (&(i, j), f) in basis.iter().zip(&flows) {
            t[(i, j)] = f.max(0.0);
        }
        let obj = t.component_mul(cost).sum();
        best = best.min(obj);
        vertices.push(t);
    });
    (best, vertices)
}

fn combinations(
    total: usize,
    k: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]),
) {
    if chosen.len() == k {
        visit(chosen);
        return;
    }
    for c in start..total {
        if total - c < k - chosen.len() {
            break;
        }
        chosen.push(c);
        combinations(total, k, c + 1, chosen, visit);
        chosen.pop();
    }
}

fn is_acyclic(n: usize, basis: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..2 * n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for &(i, j) in basis {
        let (a, b) = (find(&mut parent, i), find(&mut parent, n + j));
        if a == b {
            return false;
        }
        parent[a] = b;
    }
    true
}

fn peel(n: usize, basis: &[(usize, usize)], weights: &[f64]) -> Option<Vec<f64>> {
    let mut residual: Vec<f64> = weights.to_vec();
    residual.extend(std::iter::repeat_n(1.0 / n as f64, n));
    let mut flows = vec![f64::NAN; basis.len()];
    let mut open: Vec<bool> = vec![true; basis.len()];
    for _ in 0..basis.len() {
        let mut degree = vec![0usize; 2 * n];
        for (e, &(i, j)) in basis.iter().enumerate() {
            if open[e] {
                degree[i] += 1;
                degree[n + j] += 1;
            }
        }
        let (e, leaf) = basis.iter().enumerate().find_map(|(e, &(i, j))| {
            if !open[e] {
                None
            } else if degree[i] == 1 {
                Some((e, i))
            } else if degree[n + j] == 1 {
                Some((e, n + j))
            } else {
                None
            }
        })?;
        let (i, j) = basis[e];
        let other = if leaf == i { n + j } else { i };
        flows[e] = residual[leaf];
        residual[other] -= flows[e];
        residual[leaf] = 0.0;
        open[e] = false;
    }
    Some(flows)
}
