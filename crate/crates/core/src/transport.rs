//! Exact optimal transport between distributions on the state space.
//!
//! [`kantorovich`] solves the transportation problem with a primal network
//! simplex on the bipartite supply/demand graph restricted to the supports of
//! the two distributions. Every answer carries its own optimality proof: the
//! primal plan and a potential vector `u` with `u_i - u_j <= d(i, j)` and
//! `0 <= u_i <= 1` whose objective `sum_i (p_i - q_i) u_i` equals the plan's
//! cost. A solution whose certificate does not close is an error.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::math::abs;
use crate::mdp::Distribution;
use crate::partition::Partition;
use crate::TOLERANCE;

/// A symmetric, zero-diagonal, 1-bounded semimetric on `n` states.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Checks symmetry, the zero diagonal, the `[0, 1]` range and the
    /// triangle inequality, all at [`TOLERANCE`].
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        check_len("distance matrix", n * n, data.len())?;
        let d = DistanceMatrix { n, data };
        d.check()?;
        Ok(d)
    }

    pub fn zeros(n: usize) -> Self {
        DistanceMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// The discrete metric: 1 between distinct states.
    pub fn discrete(n: usize) -> Self {
        Self::from_upper_unchecked(n, |_, _| 1.0)
    }

    /// Builds the matrix from `f(i, j)` for `i < j`, mirrored, with a zero
    /// diagonal. Only use with values already known to form a semimetric.
    pub(crate) fn from_upper_unchecked(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        DistanceMatrix { n, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &DistanceMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| f64::max(m, abs(a - b)))
    }

    /// Whether `self <= other` entrywise within `tol`.
    pub fn le(&self, other: &DistanceMatrix, tol: f64) -> bool {
        self.data
            .iter()
            .zip(&other.data)
            .all(|(a, b)| *a <= b + tol)
    }

    /// Smallest off-diagonal entry strictly above `floor`, if any.
    pub fn min_entry_above(&self, floor: f64) -> Option<f64> {
        self.data
            .iter()
            .copied()
            .filter(|&x| x > floor)
            .fold(None, |m, x| Some(m.map_or(x, |m: f64| m.min(x))))
    }

    /// The worst triangle-inequality excess `d(i,k) - d(i,j) - d(j,k)`
    /// above `tol`, with its witness.
    pub fn triangle_violation(&self, tol: f64) -> Option<(usize, usize, usize, f64)> {
        let n = self.n;
        let mut worst: Option<(usize, usize, usize, f64)> = None;
        for i in 0..n {
            for j in 0..n {
                let dij = self.get(i, j);
                for k in 0..n {
                    let excess = self.get(i, k) - dij - self.get(j, k);
                    if excess > tol && worst.is_none_or(|w| excess > w.3) {
                        worst = Some((i, j, k, excess));
                    }
                }
            }
        }
        worst
    }

    /// Full semimetric check at [`TOLERANCE`].
    pub fn check(&self) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if abs(self.get(i, i)) > TOLERANCE {
                return Err(Error::InvalidMetric(format!(
                    "nonzero diagonal d({i},{i}) = {}",
                    self.get(i, i)
                )));
            }
            for j in 0..n {
                let x = self.get(i, j);
                if !(-TOLERANCE..=1.0 + TOLERANCE).contains(&x) {
                    return Err(Error::InvalidMetric(format!(
                        "d({i},{j}) = {x} not in [0,1]"
                    )));
                }
                if abs(x - self.get(j, i)) > TOLERANCE {
                    return Err(Error::InvalidMetric(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        if let Some((i, j, k, excess)) = self.triangle_violation(TOLERANCE) {
            return Err(Error::InvalidMetric(format!(
                "triangle inequality fails: d({i},{k}) exceeds d({i},{j}) + d({j},{k}) by {excess}"
            )));
        }
        Ok(())
    }
}

/// An optimal coupling together with its dual certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    n: usize,
    flow: Vec<f64>,
    cost: f64,
    potentials: Vec<f64>,
    duality_gap: f64,
}

impl TransportPlan {
    /// Mass moved from source state `k` to destination state `j`.
    #[inline]
    pub fn flow(&self, k: usize, j: usize) -> f64 {
        self.flow[k * self.n + j]
    }

    /// Row-major `n × n` flow matrix.
    pub fn flows(&self) -> &[f64] {
        &self.flow
    }

    /// `(k, j, flow)` for every positive entry, row-major.
    pub fn nonzero_flows(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n;
        self.flow
            .iter()
            .enumerate()
            .filter(|(_, &f)| f > 0.0)
            .map(move |(idx, &f)| (idx / n, idx % n, f))
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// Optimal `u` for `max sum_i (p_i - q_i) u_i` subject to
    /// `u_i - u_j <= d(i, j)` and `0 <= u_i <= 1`, shifted so `min u = 0`.
    pub fn dual_potentials(&self) -> &[f64] {
        &self.potentials
    }

    /// `|primal cost - dual objective|`.
    pub fn duality_gap(&self) -> f64 {
        self.duality_gap
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Half the L1 distance between two distributions.
pub fn total_variation(p: &Distribution, q: &Distribution) -> Result<f64> {
    check_len("distribution", p.len(), q.len())?;
    Ok(total_variation_slices(p.as_slice(), q.as_slice()))
}

pub(crate) fn total_variation_slices(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| abs(a - b)).sum::<f64>()
}

/// Optimal transport cost `K(d)(p, q)` with primal and dual certificates.
pub fn kantorovich(
    d: &DistanceMatrix,
    p: &Distribution,
    q: &Distribution,
) -> Result<TransportPlan> {
    check_len("distribution", d.len(), p.len())?;
    check_len("distribution", d.len(), q.len())?;
    kantorovich_slices(d, p.as_slice(), q.as_slice())
}

const REDUCED_COST_EPS: f64 = 1e-12;

pub(crate) fn kantorovich_slices(
    d: &DistanceMatrix,
    p: &[f64],
    q: &[f64],
) -> Result<TransportPlan> {
    let n = d.len();
    if p == q {
        let mut flow = vec![0.0; n * n];
        for (i, &w) in p.iter().enumerate() {
            flow[i * n + i] = w;
        }
        return Ok(TransportPlan {
            n,
            flow,
            cost: 0.0,
            potentials: vec![0.0; n],
            duality_gap: 0.0,
        });
    }

    let sources: Vec<usize> = (0..n).filter(|&i| p[i] > 0.0).collect();
    let sinks: Vec<usize> = (0..n).filter(|&j| q[j] > 0.0).collect();
    if sources.is_empty() || sinks.is_empty() {
        return Err(Error::InvalidParameter("distribution without mass".into()));
    }
    let supply: Vec<f64> = sources.iter().map(|&i| p[i]).collect();
    let demand: Vec<f64> = sinks.iter().map(|&j| q[j]).collect();
    let mut sx = NetworkSimplex::new(&sources, &sinks, &supply, &demand, |i, j| d.get(i, j));
    sx.solve()?;

    let mut flow = vec![0.0; n * n];
    let mut cost = 0.0;
    for (a, &i) in sources.iter().enumerate() {
        for (b, &j) in sinks.iter().enumerate() {
            let x = sx.flow[a * sx.n + b];
            flow[i * n + j] = x;
            cost += x * d.get(i, j);
        }
    }

    // Extend the sink potentials to every state by the d-transform
    // u(i) = min_b (d(i, sink_b) - beta_b); this is 1-Lipschitz in d and
    // attains the primal cost.
    let mut potentials: Vec<f64> = (0..n)
        .map(|i| {
            sinks
                .iter()
                .zip(&sx.beta)
                .map(|(&j, &b)| d.get(i, j) - b)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let shift = potentials.iter().copied().fold(f64::INFINITY, f64::min);
    for u in potentials.iter_mut() {
        *u -= shift;
    }
    let dual: f64 = (0..n).map(|i| (p[i] - q[i]) * potentials[i]).sum();
    let plan = TransportPlan {
        n,
        flow,
        cost,
        potentials,
        duality_gap: abs(cost - dual),
    };
    certify(d, p, q, &plan)?;
    Ok(plan)
}

fn certify(d: &DistanceMatrix, p: &[f64], q: &[f64], plan: &TransportPlan) -> Result<()> {
    let n = plan.n;
    if plan.duality_gap > TOLERANCE {
        return Err(Error::Certification(format!(
            "duality gap {}",
            plan.duality_gap
        )));
    }
    for k in 0..n {
        let row: f64 = (0..n).map(|j| plan.flow(k, j)).sum();
        let col: f64 = (0..n).map(|j| plan.flow(j, k)).sum();
        if abs(row - p[k]) > TOLERANCE || abs(col - q[k]) > TOLERANCE {
            return Err(Error::Certification(format!("marginals off at state {k}")));
        }
    }
    if plan.flow.iter().any(|&x| x < 0.0) {
        return Err(Error::Certification("negative flow".into()));
    }
    let u = &plan.potentials;
    for i in 0..n {
        if !(u[i] >= -TOLERANCE && u[i] <= 1.0 + TOLERANCE) {
            return Err(Error::Certification(format!(
                "potential u[{i}] = {} outside [0,1]",
                u[i]
            )));
        }
        for j in 0..n {
            if u[i] - u[j] > d.get(i, j) + TOLERANCE {
                return Err(Error::Certification(format!(
                    "dual infeasible: u[{i}] - u[{j}] > d({i},{j})"
                )));
            }
        }
    }
    Ok(())
}

/// Transportation simplex on an `m × n` bipartite network, tracking a
/// spanning-tree basis of `m + n - 1` cells.
///
/// Entering and leaving cells follow Bland's lowest-index rule, which rules
/// out cycling on degenerate pivots.
struct NetworkSimplex {
    m: usize,
    n: usize,
    cost: Vec<f64>,
    flow: Vec<f64>,
    basic: Vec<bool>,
    basis: Vec<usize>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    // Tree scratch, nodes 0..m are sources and m..m+n sinks.
    adjacency: Vec<Vec<(usize, usize)>>,
    parent: Vec<usize>,
    parent_cell: Vec<usize>,
    depth: Vec<usize>,
    queue: Vec<usize>,
}

impl NetworkSimplex {
    fn new(
        sources: &[usize],
        sinks: &[usize],
        supply: &[f64],
        demand: &[f64],
        ground: impl Fn(usize, usize) -> f64,
    ) -> Self {
        let (m, n) = (sources.len(), sinks.len());
        let mut cost = Vec::with_capacity(m * n);
        for &i in sources {
            for &j in sinks {
                cost.push(ground(i, j));
            }
        }
        let mut sx = NetworkSimplex {
            m,
            n,
            cost,
            flow: vec![0.0; m * n],
            basic: vec![false; m * n],
            basis: Vec::with_capacity(m + n - 1),
            alpha: vec![0.0; m],
            beta: vec![0.0; n],
            adjacency: vec![Vec::new(); m + n],
            parent: vec![0; m + n],
            parent_cell: vec![0; m + n],
            depth: vec![0; m + n],
            queue: Vec::with_capacity(m + n),
        };
        sx.north_west_corner(supply, demand);
        sx
    }

    /// Staircase initial basis; always exactly `m + n - 1` cells forming a tree.
    fn north_west_corner(&mut self, supply: &[f64], demand: &[f64]) {
        let mut rs = supply.to_vec();
        let mut rd = demand.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let cell = i * self.n + j;
            let last = i + 1 == self.m && j + 1 == self.n;
            let x = if last {
                rs[i].max(0.0)
            } else {
                rs[i].min(rd[j]).max(0.0)
            };
            self.flow[cell] = x;
            self.basic[cell] = true;
            self.basis.push(cell);
            rs[i] -= x;
            rd[j] -= x;
            if last {
                break;
            }
            if i + 1 == self.m {
                j += 1;
            } else if j + 1 == self.n || rs[i] <= rd[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    /// Roots the basis tree at source 0 and recomputes potentials with
    /// `alpha_i + beta_j = c_ij` on basic cells.
    fn refresh_tree(&mut self) {
        let m = self.m;
        for adj in self.adjacency.iter_mut() {
            adj.clear();
        }
        for &cell in &self.basis {
            let (i, j) = (cell / self.n, cell % self.n);
            self.adjacency[i].push((m + j, cell));
            self.adjacency[m + j].push((i, cell));
        }
        self.queue.clear();
        self.queue.push(0);
        self.alpha[0] = 0.0;
        self.parent[0] = usize::MAX;
        self.depth[0] = 0;
        let mut head = 0;
        while head < self.queue.len() {
            let node = self.queue[head];
            head += 1;
            for k in 0..self.adjacency[node].len() {
                let (next, cell) = self.adjacency[node][k];
                if next == self.parent[node] && cell == self.parent_cell[node] {
                    continue;
                }
                self.parent[next] = node;
                self.parent_cell[next] = cell;
                self.depth[next] = self.depth[node] + 1;
                if node < m {
                    self.beta[next - m] = self.cost[cell] - self.alpha[node];
                } else {
                    self.alpha[next] = self.cost[cell] - self.beta[node - m];
                }
                self.queue.push(next);
            }
        }
    }

    fn entering_cell(&self) -> Option<usize> {
        (0..self.m * self.n).find(|&cell| {
            !self.basic[cell]
                && self.cost[cell] - self.alpha[cell / self.n] - self.beta[cell % self.n]
                    < -REDUCED_COST_EPS
        })
    }

    /// Basis cells on the tree path from sink `j` to source `i`, in walking order.
    fn tree_path(&self, i: usize, j: usize) -> Vec<usize> {
        let mut from_sink = Vec::new();
        let mut from_source = Vec::new();
        let (mut a, mut b) = (i, self.m + j);
        while self.depth[a] > self.depth[b] {
            from_source.push(self.parent_cell[a]);
            a = self.parent[a];
        }
        while self.depth[b] > self.depth[a] {
            from_sink.push(self.parent_cell[b]);
            b = self.parent[b];
        }
        while a != b {
            from_source.push(self.parent_cell[a]);
            a = self.parent[a];
            from_sink.push(self.parent_cell[b]);
            b = self.parent[b];
        }
        from_sink.extend(from_source.into_iter().rev());
        from_sink
    }

    fn solve(&mut self) -> Result<()> {
        let cap = 10_000 + 50 * self.m * self.n;
        for _ in 0..cap {
            self.refresh_tree();
            let Some(entering) = self.entering_cell() else {
                return Ok(());
            };
            let path = self.tree_path(entering / self.n, entering % self.n);
            // Cells at even positions lose flow, odd positions gain it.
            let mut theta = f64::INFINITY;
            let mut leaving = usize::MAX;
            for &cell in path.iter().step_by(2) {
                let x = self.flow[cell];
                if x < theta || (x == theta && cell < leaving) {
                    theta = x;
                    leaving = cell;
                }
            }
            for (k, &cell) in path.iter().enumerate() {
                if k % 2 == 0 {
                    self.flow[cell] -= theta;
                } else {
                    self.flow[cell] += theta;
                }
            }
            self.flow[entering] += theta;
            self.flow[leaving] = 0.0;
            self.basic[leaving] = false;
            self.basic[entering] = true;
            let slot = self
                .basis
                .iter()
                .position(|&c| c == leaving)
                .expect("leaving cell is basic");
            self.basis[slot] = entering;
        }
        Err(Error::Certification(format!(
            "network simplex did not converge within {cap} pivots"
        )))
    }
}

/// Optimal transport cost computed on the quotient by `blocks`, which must be
/// classes of states at distance zero under `d`.
///
/// The ground cost between blocks `C` and `D` is `min_{i in C, j in D} d(i, j)`.
pub fn quotient_kantorovich(
    d: &DistanceMatrix,
    blocks: &Partition,
    p: &Distribution,
    q: &Distribution,
) -> Result<f64> {
    let n = d.len();
    check_len("partition", n, blocks.n_states())?;
    check_len("distribution", n, p.len())?;
    check_len("distribution", n, q.len())?;
    for block in blocks.blocks() {
        for &i in block {
            for &j in block {
                if d.get(i, j) > TOLERANCE {
                    return Err(Error::InvalidPartition(format!(
                        "states {i} and {j} share a block but d = {}",
                        d.get(i, j)
                    )));
                }
            }
        }
    }
    let k = blocks.len();
    let mass = |w: &[f64]| -> Vec<f64> {
        blocks
            .blocks()
            .iter()
            .map(|b| b.iter().map(|&s| w[s]).sum())
            .collect()
    };
    let (pc, qc) = (mass(p.as_slice()), mass(q.as_slice()));
    let ground = DistanceMatrix::from_upper_unchecked(k, |c, e| {
        let mut best = f64::INFINITY;
        for &i in &blocks.blocks()[c] {
            for &j in &blocks.blocks()[e] {
                best = best.min(d.get(i, j));
            }
        }
        best
    });
    Ok(kantorovich_slices(&ground, &pc, &qc)?.cost())
}
