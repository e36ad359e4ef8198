//! Discrete optimal transport between an equally weighted ensemble and the
//! same sample locations carrying likelihood weights.
//!
//! The plan `T` minimizes `sum_ij t_ij * D_ij` subject to column sums `1/N`,
//! row sums `w_i` and `t_ij >= 0`. Resampling then maps the prior ensemble to
//! `X+ = X- * N * T`, so every posterior member is a convex combination of
//! prior members.
//!
//! The linear program is solved with a primal transportation simplex over a
//! spanning-tree basis of the bipartite row/column graph.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};

/// Absolute tolerance on `sum(w) == 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// Entries of a solved plan in `[-PLAN_DUST, 0)` are treated as zero.
pub const PLAN_DUST: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMetric {
    #[default]
    Euclidean,
    SquaredEuclidean,
}

impl fmt::Display for CostMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostMetric::Euclidean => "euclidean",
            CostMetric::SquaredEuclidean => "squared_euclidean",
        })
    }
}

impl FromStr for CostMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(CostMetric::Euclidean),
            "squared_euclidean" => Ok(CostMetric::SquaredEuclidean),
            other => Err(Error::InvalidParameter(format!("unknown cost metric `{other}`"))),
        }
    }
}

/// Normalized nonnegative weights, one per ensemble member.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Validates already-normalized weights.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_entries(&weights)?;
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::MarginalInfeasible { sum });
        }
        Ok(Self(weights))
    }

    /// Normalizes nonnegative raw weights to sum to one.
    pub fn from_unnormalized(raw: Vec<f64>) -> Result<Self> {
        check_entries(&raw)?;
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(Error::InvalidWeights(format!("cannot normalize weights summing to {sum}")));
        }
        Ok(Self(raw.into_iter().map(|w| w / sum).collect()))
    }

    pub fn uniform(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        Ok(Self(vec![1.0 / count as f64; count]))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_entries(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidWeights("empty weight vector".into()));
    }
    if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidWeights(format!("weight {i} is {w}")));
    }
    Ok(())
}

/// Pairwise distances between ensemble members.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    costs: DMatrix<f64>,
    metric: CostMetric,
}

impl CostMatrix {
    /// Wraps an arbitrary square matrix, checking nonnegativity only. Used to
    /// pose transport problems whose costs are not ensemble distances.
    pub fn from_matrix(costs: DMatrix<f64>, metric: CostMetric) -> Result<Self> {
        if costs.nrows() != costs.ncols() || costs.nrows() == 0 {
            return Err(Error::InvalidParameter(format!(
                "cost matrix must be square and nonempty, got {}x{}",
                costs.nrows(),
                costs.ncols()
            )));
        }
        if costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidParameter("cost entries must be finite and >= 0".into()));
        }
        Ok(Self { costs, metric })
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.costs
    }

    pub fn metric(&self) -> CostMetric {
        self.metric
    }

    pub fn size(&self) -> usize {
        self.costs.nrows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    plan: DMatrix<f64>,
    objective_value: f64,
}

impl TransportPlan {
    /// Wraps a plan without validating it; see [`verify_plan`].
    pub fn new(plan: DMatrix<f64>, objective_value: f64) -> Self {
        Self { plan, objective_value }
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.plan
    }

    pub fn objective_value(&self) -> f64 {
        self.objective_value
    }

    pub fn size(&self) -> usize {
        self.plan.nrows()
    }
}

/// Builds the symmetric, zero-diagonal matrix of member-to-member distances.
pub fn build_cost_matrix(ensemble: &Ensemble, metric: CostMetric) -> CostMatrix {
    let count = ensemble.len();
    let members = ensemble.as_matrix();
    let mut costs = DMatrix::zeros(count, count);
    for i in 0..count {
        for j in (i + 1)..count {
            let sq = members
                .column(i)
                .iter()
                .zip(members.column(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            let d = match metric {
                CostMetric::Euclidean => sq.sqrt(),
                CostMetric::SquaredEuclidean => sq,
            };
            costs[(i, j)] = d;
            costs[(j, i)] = d;
        }
    }
    CostMatrix { costs, metric }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Hard cap on simplex pivots; `None` scales with problem size.
    pub max_pivots: Option<usize>,
    /// Reduced costs above `-cost_tolerance * max(1, max_cost)` count as
    /// optimal.
    pub cost_tolerance: f64,
    /// Consecutive degenerate pivots tolerated before switching to Bland's
    /// rule until the next nondegenerate pivot.
    pub degenerate_streak_limit: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_pivots: None, cost_tolerance: 1e-12, degenerate_streak_limit: None }
    }
}

/// Solves the transport LP with default solver options.
pub fn solve_transport(cost: &CostMatrix, weights: &WeightVector) -> Result<TransportPlan> {
    solve_transport_with(cost, weights, &SolverOptions::default())
}

pub fn solve_transport_with(
    cost: &CostMatrix,
    weights: &WeightVector,
    options: &SolverOptions,
) -> Result<TransportPlan> {
    let count = cost.size();
    if weights.len() != count {
        return Err(Error::DimensionMismatch {
            context: "transport weights",
            expected: count,
            got: weights.len(),
        });
    }
    let sum: f64 = weights.as_slice().iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::MarginalInfeasible { sum });
    }
    let demand = vec![1.0 / count as f64; count];
    let plan = TransportationSimplex::new(cost.as_matrix(), weights.as_slice(), &demand, options).solve()?;
    let objective_value = plan.component_mul(cost.as_matrix()).sum();
    Ok(TransportPlan { plan, objective_value })
}

/// Resamples `prior` through `plan`: posterior member `j` is
/// `N * sum_i t_ij * prior_i`.
pub fn apply_transport(prior: &Ensemble, plan: &TransportPlan) -> Result<Ensemble> {
    let count = prior.len();
    let t = plan.as_matrix();
    if t.nrows() != count || t.ncols() != count {
        return Err(Error::InvalidPlan(format!(
            "plan is {}x{} but the ensemble has {count} members",
            t.nrows(),
            t.ncols()
        )));
    }
    Ensemble::from_matrix(prior.as_matrix() * t * count as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PlanReport {
    pub max_column_violation: f64,
    pub max_row_violation: f64,
    pub min_entry: f64,
    pub passed: bool,
}

/// Checks plan marginals and nonnegativity against `tolerance`.
pub fn verify_plan(plan: &TransportPlan, weights: &WeightVector, tolerance: f64) -> PlanReport {
    let t = plan.as_matrix();
    let count = t.ncols();
    let w = weights.as_slice();
    let target_col = 1.0 / count as f64;
    let max_column_violation = t.column_iter().map(|c| (c.sum() - target_col).abs()).fold(0.0, f64::max);
    let max_row_violation = if w.len() == t.nrows() {
        t.row_iter().zip(w).map(|(r, wi)| (r.sum() - wi).abs()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let min_entry = t.iter().copied().fold(f64::INFINITY, f64::min);
    let passed =
        max_column_violation <= tolerance && max_row_violation <= tolerance && min_entry >= -tolerance;
    PlanReport { max_column_violation, max_row_violation, min_entry, passed }
}

#[derive(Clone, Copy, Debug)]
struct BasicCell {
    row: usize,
    col: usize,
    flow: f64,
}

/// Primal transportation simplex.
///
/// Nodes `0..m` are supply rows, `m..m+n` demand columns. The basis is always
/// a spanning tree of `m + n - 1` cells; degenerate basic cells carry zero
/// flow. Entering cells come from block-search pricing; long runs of
/// degenerate pivots switch to Bland's rule, which cannot cycle.
struct TransportationSimplex<'a> {
    cost: &'a DMatrix<f64>,
    supply: &'a [f64],
    demand: &'a [f64],
    rows: usize,
    cols: usize,
    cells: Vec<BasicCell>,
    adjacency: Vec<Vec<usize>>,
    potential: Vec<f64>,
    parent_cell: Vec<usize>,
    parent_node: Vec<usize>,
    depth: Vec<usize>,
    tolerance: f64,
    max_pivots: usize,
    streak_limit: usize,
    block_size: usize,
    cursor: usize,
}

const NO_PARENT: usize = usize::MAX;

impl<'a> TransportationSimplex<'a> {
    fn new(cost: &'a DMatrix<f64>, supply: &'a [f64], demand: &'a [f64], options: &SolverOptions) -> Self {
        let rows = supply.len();
        let cols = demand.len();
        let nodes = rows + cols;
        let max_cost = cost.iter().copied().fold(0.0, f64::max);
        let total = rows * cols;
        Self {
            cost,
            supply,
            demand,
            rows,
            cols,
            cells: Vec::with_capacity(nodes - 1),
            adjacency: vec![Vec::new(); nodes],
            potential: vec![0.0; nodes],
            parent_cell: vec![NO_PARENT; nodes],
            parent_node: vec![NO_PARENT; nodes],
            depth: vec![0; nodes],
            tolerance: options.cost_tolerance * max_cost.max(1.0),
            max_pivots: options.max_pivots.unwrap_or(10_000 + 50 * nodes * nodes),
            streak_limit: options.degenerate_streak_limit.unwrap_or(2 * nodes),
            block_size: ((total as f64).sqrt().ceil() as usize).max(10).min(total),
            cursor: 0,
        }
    }

    fn solve(mut self) -> Result<DMatrix<f64>> {
        self.initial_basis();
        let mut pivots = 0usize;
        let mut degenerate_pivots = 0usize;
        let mut streak = 0usize;
        loop {
            self.update_tree();
            let bland = streak >= self.streak_limit;
            let entering = if bland { self.bland_entering() } else { self.block_entering() };
            let Some((row, col, reduced)) = entering else { break };
            if pivots >= self.max_pivots {
                return Err(Error::NonConvergence { pivots, degenerate_pivots, min_reduced_cost: reduced });
            }
            let theta = self.pivot(row, col, bland);
            pivots += 1;
            if theta > 0.0 {
                streak = 0;
            } else {
                streak += 1;
                degenerate_pivots += 1;
            }
        }
        self.recompute_flows()?;
        let mut plan = DMatrix::zeros(self.rows, self.cols);
        for cell in &self.cells {
            plan[(cell.row, cell.col)] = cell.flow;
        }
        Ok(plan)
    }

    /// Matrix-minimum starting basis. Each allocation retires exactly one
    /// row or column (both only for the final cell), which yields a spanning
    /// tree even when supplies and demands exhaust simultaneously.
    fn initial_basis(&mut self) {
        let mut order: Vec<usize> = (0..self.rows * self.cols).collect();
        order.sort_by(|&a, &b| {
            let ca = self.cost[(a / self.cols, a % self.cols)];
            let cb = self.cost[(b / self.cols, b % self.cols)];
            ca.total_cmp(&cb).then(a.cmp(&b))
        });
        let mut supply = self.supply.to_vec();
        let mut demand = self.demand.to_vec();
        let mut row_done = vec![false; self.rows];
        let mut col_done = vec![false; self.cols];
        let mut rows_left = self.rows;
        let mut cols_left = self.cols;
        for idx in order {
            let (i, j) = (idx / self.cols, idx % self.cols);
            if row_done[i] || col_done[j] {
                continue;
            }
            let flow = supply[i].min(demand[j]);
            supply[i] -= flow;
            demand[j] -= flow;
            self.add_cell(BasicCell { row: i, col: j, flow });
            if rows_left == 1 && cols_left == 1 {
                break;
            }
            let retire_row = if rows_left == 1 {
                false
            } else if cols_left == 1 {
                true
            } else {
                supply[i] <= demand[j]
            };
            if retire_row {
                row_done[i] = true;
                rows_left -= 1;
            } else {
                col_done[j] = true;
                cols_left -= 1;
            }
        }
        debug_assert_eq!(self.cells.len(), self.rows + self.cols - 1);
    }

    fn add_cell(&mut self, cell: BasicCell) -> usize {
        let slot = self.cells.len();
        self.cells.push(cell);
        self.adjacency[cell.row].push(slot);
        self.adjacency[self.rows + cell.col].push(slot);
        slot
    }

    /// Recomputes potentials (`u_i + v_j = c_ij` on basic cells) and parent
    /// pointers by breadth-first search from row 0.
    fn update_tree(&mut self) {
        let nodes = self.rows + self.cols;
        self.parent_cell.fill(NO_PARENT);
        self.parent_node.fill(NO_PARENT);
        let mut visited = vec![false; nodes];
        let mut queue = VecDeque::with_capacity(nodes);
        visited[0] = true;
        self.potential[0] = 0.0;
        self.depth[0] = 0;
        queue.push_back(0);
        while let Some(node) = queue.pop_front() {
            for &slot in &self.adjacency[node] {
                let cell = self.cells[slot];
                let other = if node < self.rows { self.rows + cell.col } else { cell.row };
                if visited[other] {
                    continue;
                }
                visited[other] = true;
                self.potential[other] = self.cost[(cell.row, cell.col)] - self.potential[node];
                self.parent_cell[other] = slot;
                self.parent_node[other] = node;
                self.depth[other] = self.depth[node] + 1;
                queue.push_back(other);
            }
        }
        debug_assert!(visited.iter().all(|v| *v), "basis is not a spanning tree");
    }

    #[inline]
    fn reduced_cost(&self, row: usize, col: usize) -> f64 {
        self.cost[(row, col)] - self.potential[row] - self.potential[self.rows + col]
    }

    fn block_entering(&mut self) -> Option<(usize, usize, f64)> {
        let total = self.rows * self.cols;
        let mut best: Option<(usize, f64)> = None;
        let mut scanned_in_block = 0;
        for step in 0..total {
            let idx = (self.cursor + step) % total;
            let rc = self.reduced_cost(idx / self.cols, idx % self.cols);
            if rc < -self.tolerance && best.is_none_or(|(_, b)| rc < b) {
                best = Some((idx, rc));
            }
            scanned_in_block += 1;
            if scanned_in_block == self.block_size {
                scanned_in_block = 0;
                if let Some((idx, rc)) = best {
                    self.cursor = (self.cursor + step + 1) % total;
                    return Some((idx / self.cols, idx % self.cols, rc));
                }
            }
        }
        best.map(|(idx, rc)| {
            self.cursor = (idx + 1) % total;
            (idx / self.cols, idx % self.cols, rc)
        })
    }

    fn bland_entering(&self) -> Option<(usize, usize, f64)> {
        (0..self.rows * self.cols).find_map(|idx| {
            let (i, j) = (idx / self.cols, idx % self.cols);
            let rc = self.reduced_cost(i, j);
            (rc < -self.tolerance).then_some((i, j, rc))
        })
    }

    /// Sends flow around the cycle closed by the entering cell and returns
    /// the step length.
    fn pivot(&mut self, row: usize, col: usize, bland: bool) -> f64 {
        // Tree path from the entering column up to the common ancestor, then
        // down to the entering row. Signs alternate starting with `-`.
        let mut a = self.rows + col;
        let mut b = row;
        let mut from_col = Vec::new();
        let mut from_row = Vec::new();
        while a != b {
            if self.depth[a] >= self.depth[b] {
                from_col.push(self.parent_cell[a]);
                a = self.parent_node[a];
            } else {
                from_row.push(self.parent_cell[b]);
                b = self.parent_node[b];
            }
        }
        let cycle: Vec<usize> = from_col.into_iter().chain(from_row.into_iter().rev()).collect();

        let mut leaving = None::<usize>;
        let mut theta = f64::INFINITY;
        for &slot in cycle.iter().step_by(2) {
            let flow = self.cells[slot].flow;
            let better = match leaving {
                None => true,
                Some(_) if flow < theta => true,
                Some(cur) => bland && flow == theta && self.cell_index(slot) < self.cell_index(cur),
            };
            if better {
                theta = flow;
                leaving = Some(slot);
            }
        }
        let leaving = leaving.expect("cycle always contains a decreasing cell");
        let theta = theta.max(0.0);

        for (k, &slot) in cycle.iter().enumerate() {
            let cell = &mut self.cells[slot];
            if k % 2 == 0 {
                cell.flow = (cell.flow - theta).max(0.0);
            } else {
                cell.flow += theta;
            }
        }

        let old = self.cells[leaving];
        remove_slot(&mut self.adjacency[old.row], leaving);
        remove_slot(&mut self.adjacency[self.rows + old.col], leaving);
        self.cells[leaving] = BasicCell { row, col, flow: theta };
        self.adjacency[row].push(leaving);
        self.adjacency[self.rows + col].push(leaving);
        theta
    }

    fn cell_index(&self, slot: usize) -> usize {
        let c = self.cells[slot];
        c.row * self.cols + c.col
    }

    /// Re-derives basic flows from the original marginals by peeling leaves
    /// off the basis tree, removing drift accumulated over pivots.
    fn recompute_flows(&mut self) -> Result<()> {
        let nodes = self.rows + self.cols;
        let mut residual: Vec<f64> = self.supply.iter().chain(self.demand.iter()).copied().collect();
        let mut degree: Vec<usize> = self.adjacency.iter().map(Vec::len).collect();
        let mut done = vec![false; self.cells.len()];
        let mut leaves: Vec<usize> = (0..nodes).filter(|&v| degree[v] == 1).collect();
        let mut assigned = 0;
        while let Some(node) = leaves.pop() {
            if degree[node] != 1 {
                continue;
            }
            let Some(&slot) = self.adjacency[node].iter().find(|&&s| !done[s]) else {
                continue;
            };
            let cell = self.cells[slot];
            let other = if node < self.rows { self.rows + cell.col } else { cell.row };
            let flow = residual[node];
            self.cells[slot].flow = flow;
            residual[other] -= flow;
            residual[node] = 0.0;
            done[slot] = true;
            assigned += 1;
            degree[node] -= 1;
            degree[other] -= 1;
            if degree[other] == 1 {
                leaves.push(other);
            }
        }
        debug_assert_eq!(assigned, self.cells.len());
        for cell in &mut self.cells {
            if cell.flow < 0.0 {
                if cell.flow < -1e-9 {
                    return Err(Error::InvalidPlan(format!(
                        "optimal basis has negative flow {:e} at ({}, {})",
                        cell.flow, cell.row, cell.col
                    )));
                }
                cell.flow = 0.0;
            }
        }
        Ok(())
    }
}

fn remove_slot(list: &mut Vec<usize>, slot: usize) {
    if let Some(pos) = list.iter().position(|&s| s == slot) {
        list.swap_remove(pos);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    #[test]
    fn cost_matrix_examples() {
        let e = Ensemble::from_members(&[dvector![0.0, 0.0], dvector![3.0, 4.0]]).unwrap();
        let d = build_cost_matrix(&e, CostMetric::Euclidean);
        assert_eq!(d.as_matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, 5.0, 5.0, 0.0]));
        let d2 = build_cost_matrix(&e, CostMetric::SquaredEuclidean);
        assert_eq!(d2.as_matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, 25.0, 25.0, 0.0]));
        let single = Ensemble::from_scalars(&[7.0]).unwrap();
        assert_eq!(build_cost_matrix(&single, CostMetric::Euclidean).as_matrix()[(0, 0)], 0.0);
    }

    #[test]
    fn single_member_plan() {
        let cost = CostMatrix::from_matrix(DMatrix::zeros(1, 1), CostMetric::Euclidean).unwrap();
        let plan = solve_transport(&cost, &WeightVector::new(vec![1.0]).unwrap()).unwrap();
        assert_eq!(plan.as_matrix()[(0, 0)], 1.0);
        assert_eq!(plan.objective_value(), 0.0);
    }

    #[test]
    fn uniform_weights_stay_put() {
        let cost = CostMatrix::from_matrix(
            DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 3.0, 0.0]),
            CostMetric::Euclidean,
        )
        .unwrap();
        let plan = solve_transport(&cost, &WeightVector::uniform(2).unwrap()).unwrap();
        assert_abs_diff_eq!(
            plan.as_matrix(),
            &DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]),
            epsilon = 1e-15
        );
        assert_eq!(plan.objective_value(), 0.0);
    }

    #[test]
    fn indicator_weights_force_single_row() {
        let cost = CostMatrix::from_matrix(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.7, 1.7, 0.0]),
            CostMetric::Euclidean,
        )
        .unwrap();
        let plan = solve_transport(&cost, &WeightVector::new(vec![1.0, 0.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(
            plan.as_matrix(),
            &DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 0.0]),
            epsilon = 1e-15
        );
        let prior = Ensemble::from_scalars(&[-3.0, 8.0]).unwrap();
        let post = apply_transport(&prior, &plan).unwrap();
        assert_eq!(post.as_matrix().as_slice(), &[-3.0, -3.0]);
    }

    #[test]
    fn mean_of_resampled_scalar_prior() {
        let prior = Ensemble::from_scalars(&[0.0, 2.0]).unwrap();
        let weights = WeightVector::new(vec![0.25, 0.75]).unwrap();
        let plan = solve_transport(&build_cost_matrix(&prior, CostMetric::Euclidean), &weights).unwrap();
        let post = apply_transport(&prior, &plan).unwrap();
        assert_abs_diff_eq!(post.mean()[0], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn identity_plan_is_fixed_point() {
        let prior =
            Ensemble::from_members(&[dvector![1.0, 2.0], dvector![-4.0, 0.5], dvector![3.0, 3.0]]).unwrap();
        let plan = TransportPlan::new(DMatrix::identity(3, 3) / 3.0, 0.0);
        let post = apply_transport(&prior, &plan).unwrap();
        assert_abs_diff_eq!(post.as_matrix(), prior.as_matrix(), epsilon = 1e-15);
    }

    #[test]
    fn size_mismatch_rejected() {
        let prior = Ensemble::from_scalars(&[0.0, 1.0, 2.0]).unwrap();
        let plan = TransportPlan::new(DMatrix::identity(2, 2) / 2.0, 0.0);
        assert!(matches!(apply_transport(&prior, &plan), Err(Error::InvalidPlan(_))));

        let cost = build_cost_matrix(&prior, CostMetric::Euclidean);
        let err = solve_transport(&cost, &WeightVector::uniform(2).unwrap()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn unbalanced_weights_are_infeasible() {
        assert!(matches!(WeightVector::new(vec![0.5, 0.4]), Err(Error::MarginalInfeasible { .. })));
        assert!(matches!(WeightVector::new(vec![1.5, -0.5]), Err(Error::InvalidWeights(_))));
        let w = WeightVector::from_unnormalized(vec![1.0, 3.0]).unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.75]);
    }

    #[test]
    fn pivot_limit_reports_nonconvergence() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let members: Vec<_> = (0..30).map(|_| dvector![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let prior = Ensemble::from_members(&members).unwrap();
        let cost = build_cost_matrix(&prior, CostMetric::Euclidean);
        let weights =
            WeightVector::from_unnormalized((0..30).map(|_| rng.random::<f64>()).collect()).unwrap();
        let options = SolverOptions { max_pivots: Some(0), ..SolverOptions::default() };
        match solve_transport_with(&cost, &weights, &options) {
            Err(Error::NonConvergence { pivots: 0, min_reduced_cost, .. }) => {
                assert!(min_reduced_cost < 0.0)
            }
            other => panic!("expected nonconvergence, got {other:?}"),
        }
        assert!(solve_transport(&cost, &weights).is_ok());
    }

    #[test]
    fn verify_plan_examples() {
        let weights = WeightVector::new(vec![0.5, 0.5]).unwrap();
        let good = TransportPlan::new(DMatrix::identity(2, 2) / 2.0, 0.0);
        assert!(verify_plan(&good, &weights, 1e-9).passed);

        let negative =
            TransportPlan::new(DMatrix::from_row_slice(2, 2, &[0.5 + 1e-6, -1e-6, -1e-6, 0.5 + 1e-6]), 0.0);
        let report = verify_plan(&negative, &weights, 1e-9);
        assert!(!report.passed);
        assert_eq!(report.min_entry, -1e-6);

        let row_off = TransportPlan::new(DMatrix::from_row_slice(2, 2, &[0.5 + 1e-3, 0.0, -1e-3, 0.5]), 0.0);
        let report = verify_plan(&row_off, &weights, 1e-9);
        assert!(!report.passed);
        assert_abs_diff_eq!(report.max_row_violation, 1e-3, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_ties_terminate() {
        // Equally spaced points on a line: many optimal plans and heavy
        // degeneracy in the basis.
        let values: Vec<f64> = (0..40).map(|i| (i % 5) as f64).collect();
        let prior = Ensemble::from_scalars(&values).unwrap();
        let cost = build_cost_matrix(&prior, CostMetric::Euclidean);
        let mut raw = vec![0.0; 40];
        raw[3] = 1.0;
        raw[17] = 1.0;
        let weights = WeightVector::from_unnormalized(raw).unwrap();
        let plan = solve_transport(&cost, &weights).unwrap();
        assert!(verify_plan(&plan, &weights, 1e-12).passed);
    }
}
