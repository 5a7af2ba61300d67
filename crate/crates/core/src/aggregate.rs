//! Metric-driven state aggregation and value-error bounds.
//!
//! States are grouped into epsilon-clusters around seed states, the aggregate
//! MDP averages rewards and block-transition probabilities over each cluster,
//! and the bound
//!
//! ```text
//! c_R |V*(rho(s)) - V*(s)| <= g(s, d) + gamma / (1 - gamma) * max_u g(u, d)
//! ```
//!
//! is evaluated, where `g(s, d)` is the mean distance from `s` to the members
//! of its own cluster. It needs `gamma <= c_T`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dp::{backup_iterates, value_iteration};
use crate::error::{check_len, Error, Result};
use crate::math::abs;
use crate::mdp::{Mdp, MetricParams};
use crate::metrics::MetricResult;
use crate::partition::{class_probability, Partition};
use crate::transport::DistanceMatrix;
use crate::TOLERANCE;

/// How cluster seeds are visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeedOrder {
    /// Ascending state index.
    #[default]
    Index,
    /// Greedy farthest-point order starting from state 0.
    Farthest,
}

impl SeedOrder {
    pub fn order(&self, d: &DistanceMatrix) -> Vec<usize> {
        match self {
            SeedOrder::Index => (0..d.len()).collect(),
            SeedOrder::Farthest => farthest_point_order(d),
        }
    }
}

/// State 0 first, then repeatedly the state farthest from everything chosen
/// so far (ties to the lowest index).
pub fn farthest_point_order(d: &DistanceMatrix) -> Vec<usize> {
    let n = d.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order = vec![0];
    let mut taken = vec![false; n];
    taken[0] = true;
    let mut nearest: Vec<f64> = (0..n).map(|s| d.get(0, s)).collect();
    while order.len() < n {
        let mut best = usize::MAX;
        for s in 0..n {
            if !taken[s] && (best == usize::MAX || nearest[s] > nearest[best]) {
                best = s;
            }
        }
        taken[best] = true;
        order.push(best);
        for (s, near) in nearest.iter_mut().enumerate() {
            *near = near.min(d.get(best, s));
        }
    }
    order
}

/// Greedy epsilon-clustering: visit states in `seed_order`, join the first
/// cluster whose seed lies within `epsilon`, otherwise open a new cluster
/// seeded by this state.
pub fn epsilon_partition(
    d: &DistanceMatrix,
    epsilon: f64,
    seed_order: &[usize],
) -> Result<Partition> {
    let n = d.len();
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} must be >= 0"
        )));
    }
    check_len("seed order", n, seed_order.len())?;
    let mut seen = vec![false; n];
    for &s in seed_order {
        if s >= n || seen[s] {
            return Err(Error::InvalidParameter(
                "seed order is not a permutation".into(),
            ));
        }
        seen[s] = true;
    }
    let mut seeds: Vec<usize> = Vec::new();
    let mut label = vec![0; n];
    for &s in seed_order {
        match seeds.iter().position(|&c| d.get(c, s) <= epsilon) {
            Some(k) => label[s] = k,
            None => {
                label[s] = seeds.len();
                seeds.push(s);
            }
        }
    }
    Ok(Partition::from_block_of(label))
}

/// A partition together with the averaged MDP over its blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateMdp {
    pub partition: Partition,
    pub quotient: Mdp,
}

impl AggregateMdp {
    /// State to block map.
    pub fn rho(&self) -> &[usize] {
        self.partition.block_of()
    }
}

/// Averages rewards and block-transition probabilities over each block.
pub fn build_aggregate(mdp: &Mdp, blocks: &Partition) -> Result<AggregateMdp> {
    check_len("partition", mdp.n_states(), blocks.n_states())?;
    let k = blocks.len();
    let n_actions = mdp.n_actions();
    let mut rewards = vec![0.0; n_actions * k];
    let mut transitions = vec![0.0; n_actions * k * k];
    for a in 0..n_actions {
        for (c, members) in blocks.blocks().iter().enumerate() {
            let size = members.len() as f64;
            rewards[a * k + c] = members.iter().map(|&s| mdp.reward(a, s)).sum::<f64>() / size;
            for (e, target) in blocks.blocks().iter().enumerate() {
                let mass: f64 = members
                    .iter()
                    .map(|&s| class_probability(mdp.row(a, s), target))
                    .sum();
                transitions[(a * k + c) * k + e] = mass / size;
            }
        }
    }
    let labels = mdp.state_labels().map(|names| {
        blocks
            .blocks()
            .iter()
            .map(|members| {
                let parts: Vec<&str> = members.iter().map(|&s| names[s].as_str()).collect();
                parts.join("+")
            })
            .collect()
    });
    let quotient = Mdp::new(k, mdp.actions().to_vec(), rewards, transitions, labels)?;
    Ok(AggregateMdp {
        partition: blocks.clone(),
        quotient,
    })
}

/// Mean distance from `state` to the members of its block (itself included).
pub fn avg_class_distance(state: usize, d: &DistanceMatrix, blocks: &Partition) -> f64 {
    let class = blocks.class_of(state);
    class.iter().map(|&t| d.get(state, t)).sum::<f64>() / class.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// `g(s, d)` per state.
    pub g: Vec<f64>,
    /// Upper bound on `|V(rho(s)) - V(s)|` per state.
    pub per_state_bound: Vec<f64>,
    pub max_bound: f64,
    /// `2 epsilon / (c_R (1 - gamma))`, when a clustering radius was supplied.
    pub naive_bound: Option<f64>,
    /// Measured `|V(rho(s)) - V(s)|` per state.
    pub true_error: Option<Vec<f64>>,
    pub max_true_error: Option<f64>,
    /// Numerical slack owed to approximate value functions.
    pub slack: f64,
}

impl BoundReport {
    /// Whether every measured error is within its bound plus the slack.
    pub fn holds(&self) -> bool {
        match &self.true_error {
            Some(errors) => errors
                .iter()
                .zip(&self.per_state_bound)
                .all(|(e, b)| *e <= b + self.slack),
            None => true,
        }
    }
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(0.0, f64::max)
}

fn lifted_errors(original: &[f64], quotient: &[f64], blocks: &Partition) -> Vec<f64> {
    original
        .iter()
        .enumerate()
        .map(|(s, v)| abs(quotient[blocks.block_index(s)] - v))
        .collect()
}

/// Infinite-horizon aggregation bound, evaluated with `d` in place of the
/// exact fixed-point metric.
///
/// Because an iterated metric may sit up to `residual_bound` below the fixed
/// point, `(1 + gamma / (1 - gamma)) * residual_bound` is added to every
/// bound. `true_error` compares value iteration on both MDPs at accuracy
/// `epsilon_vi`, so it carries a slack of `2 epsilon_vi`.
pub fn bound_theorem52(
    mdp: &Mdp,
    d: &MetricResult,
    blocks: &Partition,
    params: &MetricParams,
    epsilon_vi: f64,
    epsilon: Option<f64>,
) -> Result<BoundReport> {
    params.require_bounds()?;
    let n = mdp.n_states();
    check_len("distance matrix", n, d.distances.len())?;
    check_len("partition", n, blocks.n_states())?;
    let gamma = params.gamma;
    let horizon = gamma / (1.0 - gamma);

    let g: Vec<f64> = (0..n)
        .map(|s| avg_class_distance(s, &d.distances, blocks))
        .collect();
    let max_g = max_of(&g);
    let correction = (1.0 + horizon) * d.residual_bound;
    let per_state_bound: Vec<f64> = g
        .iter()
        .map(|gs| (gs + horizon * max_g + correction) / params.c_r)
        .collect();

    let original = value_iteration(mdp, gamma, epsilon_vi)?;
    let aggregate = build_aggregate(mdp, blocks)?;
    let reduced = value_iteration(&aggregate.quotient, gamma, epsilon_vi)?;
    let true_error = lifted_errors(&original.values, &reduced.values, blocks);

    Ok(BoundReport {
        max_bound: max_of(&per_state_bound),
        g,
        per_state_bound,
        naive_bound: epsilon.map(|e| 2.0 * e / (params.c_r * (1.0 - gamma))),
        max_true_error: Some(max_of(&true_error)),
        true_error: Some(true_error),
        slack: 2.0 * epsilon_vi,
    })
}

/// Finite-horizon bound after `n` backups, given the metric iterates
/// `d_1, ..., d_n`:
///
/// ```text
/// c_R |V_n(rho(s)) - V_n(s)| <= g(s, d_n) + sum_{k=1}^{n-1} gamma^(n-k) max_u g(u, d_k)
/// ```
///
/// `true_error` is measured on exactly `n` backups of both MDPs.
pub fn finite_n_bound(
    mdp: &Mdp,
    iterates: &[DistanceMatrix],
    blocks: &Partition,
    params: &MetricParams,
) -> Result<BoundReport> {
    params.require_bounds()?;
    let n_states = mdp.n_states();
    check_len("partition", n_states, blocks.n_states())?;
    let Some(last) = iterates.last() else {
        return Err(Error::InvalidParameter(
            "need at least one metric iterate".into(),
        ));
    };
    for d in iterates {
        check_len("distance matrix", n_states, d.len())?;
    }
    let horizon = iterates.len();
    let gamma = params.gamma;

    let mut tail = 0.0;
    let mut weight = 1.0;
    // k runs from n-1 down to 1 with weight gamma^(n-k).
    for d in iterates[..horizon - 1].iter().rev() {
        weight *= gamma;
        let max_g = (0..n_states)
            .map(|s| avg_class_distance(s, d, blocks))
            .fold(0.0, f64::max);
        tail += weight * max_g;
    }
    let g: Vec<f64> = (0..n_states)
        .map(|s| avg_class_distance(s, last, blocks))
        .collect();
    let per_state_bound: Vec<f64> = g.iter().map(|gs| (gs + tail) / params.c_r).collect();

    let aggregate = build_aggregate(mdp, blocks)?;
    let original = backup_iterates(mdp, gamma, horizon)?;
    let reduced = backup_iterates(&aggregate.quotient, gamma, horizon)?;
    let true_error = lifted_errors(&original[horizon], &reduced[horizon], blocks);

    Ok(BoundReport {
        max_bound: max_of(&per_state_bound),
        g,
        per_state_bound,
        naive_bound: None,
        max_true_error: Some(max_of(&true_error)),
        true_error: Some(true_error),
        slack: TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::value_iteration;
    use crate::mdp::{figure1::*, gen_figure1, gen_grid, gen_random};
    use crate::metrics::{fixed_point_metric, fixed_point_metric_traced, tv_metric};

    fn params(gamma: f64, delta: f64) -> MetricParams {
        MetricParams::for_discount(gamma, delta).unwrap()
    }

    fn line(points: &[f64]) -> DistanceMatrix {
        let n = points.len();
        DistanceMatrix::new(
            n,
            (0..n * n)
                .map(|k| (points[k / n] - points[k % n]).abs())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn epsilon_partition_endpoints() {
        let d = line(&[0.0, 0.1, 0.35, 0.9]);
        let order: Vec<usize> = (0..4).collect();
        assert_eq!(
            epsilon_partition(&d, 0.9, &order).unwrap(),
            Partition::single_block(4)
        );
        assert_eq!(
            epsilon_partition(&d, 0.0, &order).unwrap(),
            Partition::singletons(4)
        );
        let p = epsilon_partition(&d, 0.3, &order).unwrap();
        assert_eq!(p.blocks(), &[vec![0, 1], vec![2], vec![3]]);
    }

    #[test]
    fn epsilon_partition_follows_seed_order() {
        let d = line(&[0.0, 0.2, 0.4]);
        // Seeding at the middle state swallows both ends.
        assert_eq!(epsilon_partition(&d, 0.2, &[1, 0, 2]).unwrap().len(), 1);
        assert_eq!(epsilon_partition(&d, 0.2, &[0, 1, 2]).unwrap().len(), 2);
        assert!(epsilon_partition(&d, 0.2, &[0, 0, 2]).is_err());
        assert!(epsilon_partition(&d, 0.2, &[0, 1]).is_err());
        assert!(epsilon_partition(&d, -1.0, &[0, 1, 2]).is_err());
    }

    #[test]
    fn cluster_diameter_is_at_most_two_epsilon() {
        for seed in 0..10 {
            let m = gen_random(9, 2, seed, 3).unwrap();
            let d = fixed_point_metric(&m, &params(0.5, 1e-4))
                .unwrap()
                .distances;
            for &eps in &[0.02, 0.05, 0.1, 0.2] {
                for order in [SeedOrder::Index, SeedOrder::Farthest] {
                    let seeds = order.order(&d);
                    let p = epsilon_partition(&d, eps, &seeds).unwrap();
                    for block in p.blocks() {
                        let seed_state = *seeds.iter().find(|s| block.contains(s)).unwrap();
                        for &a in block {
                            assert!(d.get(seed_state, a) <= eps);
                            for &b in block {
                                assert!(d.get(a, b) <= 2.0 * eps + 1e-12);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn farthest_order_is_a_permutation() {
        let d = line(&[0.0, 0.1, 0.9, 0.5]);
        assert_eq!(farthest_point_order(&d), vec![0, 2, 3, 1]);
    }

    #[test]
    fn branching_mid_epsilon_recovers_bisimulation() {
        let prm = params(0.5, 1e-10);
        let m = gen_figure1(0.3, 0.3, 0.5).unwrap();
        let d = fixed_point_metric(&m, &prm).unwrap().distances;
        // Closed forms with c_R = 1 - c_T: d(u,v) = r, d(s,u) = c_T (1-p) r and
        // d(s,v) = c_R r + c_T p r, so the smallest nonzero distance is d(s,u).
        let smallest = prm.c_t * 0.7 * 0.5;
        assert!((d.min_entry_above(1e-9).unwrap() - smallest).abs() < 1e-8);
        let p = epsilon_partition(&d, smallest / 2.0, &[0, 1, 2, 3]).unwrap();
        assert_eq!(p.blocks(), &[vec![S, T], vec![U], vec![V]]);
    }

    #[test]
    fn aggregate_of_singletons_is_the_original() {
        let m = gen_random(5, 2, 7, 3).unwrap();
        let agg = build_aggregate(&m, &Partition::singletons(5)).unwrap();
        assert_eq!(agg.quotient.rewards(), m.rewards());
        assert_eq!(agg.quotient.transitions(), m.transitions());
        assert_eq!(agg.rho(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn aggregate_of_one_block_averages_rewards() {
        let m = gen_random(4, 3, 11, 2).unwrap();
        let agg = build_aggregate(&m, &Partition::single_block(4)).unwrap();
        assert_eq!(agg.quotient.n_states(), 1);
        for a in 0..3 {
            let mean = (0..4).map(|s| m.reward(a, s)).sum::<f64>() / 4.0;
            assert!((agg.quotient.reward(a, 0) - mean).abs() < 1e-15);
            assert!((agg.quotient.row(a, 0)[0] - 1.0).abs() < 1e-12);
        }
        assert!(agg.quotient.validate().is_empty());
    }

    #[test]
    fn aggregating_bisimilar_states_preserves_values() {
        let m = gen_figure1(0.3, 0.3, 0.8).unwrap();
        let blocks = Partition::from_block_of(vec![0, 0, 1, 2]);
        let agg = build_aggregate(&m, &blocks).unwrap();
        assert!(agg.quotient.validate().is_empty());
        let v = value_iteration(&m, 0.9, 1e-10).unwrap().values;
        let w = value_iteration(&agg.quotient, 0.9, 1e-10).unwrap().values;
        for s in 0..4 {
            assert!((v[s] - w[blocks.block_index(s)]).abs() <= 2e-10);
        }
        let labels = agg.quotient.state_labels().unwrap();
        assert_eq!(labels[0], "s+t");
    }

    #[test]
    fn avg_class_distance_examples() {
        let d = line(&[0.0, 0.4, 0.9]);
        let blocks = Partition::from_block_of(vec![0, 0, 1]);
        assert_eq!(avg_class_distance(2, &d, &blocks), 0.0);
        assert!((avg_class_distance(0, &d, &blocks) - 0.2).abs() < 1e-15);
        // One block over the branching MDP with p = q: from u the distances are
        // d(u,s) = d(u,t) = c_T (1-p) r and d(u,v) = r.
        let prm = params(0.5, 1e-12);
        let (p, r) = (0.3, 0.6);
        let m = gen_figure1(p, p, r).unwrap();
        let d = fixed_point_metric(&m, &prm).unwrap().distances;
        let g_u = (0.0 + r + 2.0 * prm.c_t * (1.0 - p) * r) / 4.0;
        assert!((avg_class_distance(U, &d, &Partition::single_block(4)) - g_u).abs() < 1e-9);
    }

    #[test]
    fn bound_singletons_have_zero_g() {
        let m = gen_random(6, 2, 5, 3).unwrap();
        let prm = params(0.7, 1e-3);
        let d = fixed_point_metric(&m, &prm).unwrap();
        let rep =
            bound_theorem52(&m, &d, &Partition::singletons(6), &prm, 1e-8, Some(0.0)).unwrap();
        assert!(rep.g.iter().all(|&g| g == 0.0));
        let correction = (1.0 + 0.7 / 0.3) * d.residual_bound / prm.c_r;
        for b in &rep.per_state_bound {
            assert!((b - correction).abs() < 1e-12);
        }
        assert!(rep.max_true_error.unwrap() <= 2e-8);
        assert!(rep.holds());
    }

    #[test]
    fn bound_precondition() {
        let m = gen_random(4, 2, 5, 2).unwrap();
        let prm = MetricParams::new(0.9, 0.5, 0.5, 0.01).unwrap();
        let d = tv_metric(&m, &prm, 0.0).unwrap();
        assert!(matches!(
            bound_theorem52(&m, &d, &Partition::singletons(4), &prm, 1e-6, None),
            Err(Error::BoundPrecondition(_))
        ));
    }

    #[test]
    fn bound_below_naive_and_above_truth() {
        for seed in 0..10 {
            let m = gen_random(8, 3, seed, 3).unwrap();
            for &gamma in &[0.3, 0.8] {
                let prm = params(gamma, 1.0).with_bound_resolution(1e-10).unwrap();
                for d in [
                    fixed_point_metric(&m, &prm).unwrap(),
                    tv_metric(&m, &prm, 0.0).unwrap(),
                ] {
                    for &eps in &[0.0, 0.01, 0.05, 0.2, 1.0] {
                        let blocks = epsilon_partition(
                            &d.distances,
                            eps,
                            &SeedOrder::Index.order(&d.distances),
                        )
                        .unwrap();
                        let rep = bound_theorem52(&m, &d, &blocks, &prm, 1e-8, Some(eps)).unwrap();
                        assert!(rep.holds(), "seed {seed} gamma {gamma} eps {eps}");
                        assert!(rep.max_bound <= rep.naive_bound.unwrap() + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn finite_bound_one_step() {
        let m = gen_random(6, 2, 3, 3).unwrap();
        let prm = params(0.6, 1e-3);
        let (_, trace) = fixed_point_metric_traced(&m, &prm).unwrap();
        let blocks = Partition::from_block_of(vec![0, 0, 1, 1, 2, 2]);
        let rep = finite_n_bound(&m, &trace[..1], &blocks, &prm).unwrap();
        for s in 0..6 {
            let want = avg_class_distance(s, &trace[0], &blocks) / prm.c_r;
            assert!((rep.per_state_bound[s] - want).abs() < 1e-15);
        }
        assert!(rep.holds());
    }

    #[test]
    fn finite_bound_two_steps_on_branching() {
        // One block over all four states. V_2 of the original is
        // (gamma (1-p) r, gamma (1-q) r, 0, r + gamma r); the aggregate is one
        // state with mean reward r/4, so its V_2 is (1 + gamma) r / 4.
        let (p, q, r) = (0.2, 0.6, 0.8);
        let prm = params(0.5, 1e-3);
        let m = gen_figure1(p, q, r).unwrap();
        let (_, trace) = fixed_point_metric_traced(&m, &prm).unwrap();
        let blocks = Partition::single_block(4);
        let rep = finite_n_bound(&m, &trace[..2], &blocks, &prm).unwrap();
        let gamma = prm.gamma;
        let v2 = [
            gamma * (1.0 - p) * r,
            gamma * (1.0 - q) * r,
            0.0,
            r + gamma * r,
        ];
        let agg = (1.0 + gamma) * r / 4.0;
        let errors = rep.true_error.as_ref().unwrap();
        for s in 0..4 {
            assert!((errors[s] - (v2[s] - agg).abs()).abs() < 1e-12);
        }
        // d_1 = c_R |dr|: only pairs with v differ, by c_R r.
        let max_g1 = 3.0 * prm.c_r * r / 4.0;
        let d2 = &trace[1];
        for s in 0..4 {
            let g2: f64 = (0..4).map(|t| d2.get(s, t)).sum::<f64>() / 4.0;
            let want = (g2 + gamma * max_g1) / prm.c_r;
            assert!((rep.per_state_bound[s] - want).abs() < 1e-12);
        }
        assert!(rep.holds());
    }

    #[test]
    fn finite_bound_holds_on_random_mdps() {
        for seed in 0..20 {
            let m = gen_random(8, 2, 100 + seed, 4).unwrap();
            let prm = params(0.5, 1e-3);
            let (_, trace) = fixed_point_metric_traced(&m, &prm).unwrap();
            let d5 = &trace[4];
            for &eps in &[0.05, 0.1, 0.3] {
                let blocks = epsilon_partition(d5, eps, &SeedOrder::Index.order(d5)).unwrap();
                let rep = finite_n_bound(&m, &trace[..5], &blocks, &prm).unwrap();
                assert!(rep.holds(), "seed {seed} eps {eps}");
            }
        }
    }

    #[test]
    fn grid_bound_holds() {
        let g = gen_grid(5, 5).unwrap();
        let prm = params(0.9, 1e-12);
        let d = fixed_point_metric(&g, &prm).unwrap();
        for &eps in &[0.01, 0.05, 0.1, 0.3] {
            let blocks =
                epsilon_partition(&d.distances, eps, &SeedOrder::Index.order(&d.distances))
                    .unwrap();
            let rep = bound_theorem52(&g, &d, &blocks, &prm, 1e-8, Some(eps)).unwrap();
            assert!(rep.holds());
            assert!(rep.max_bound <= rep.naive_bound.unwrap() + 1e-9);
        }
    }
}
