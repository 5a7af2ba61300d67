//! Bisimulation metrics for finite Markov decision processes.
//!
//! The crate computes two state metrics on a finite MDP:
//!
//! * the fixed-point Kantorovich metric, the least fixed point of
//!   `F(d)(s, s') = max_a (c_R |r_s^a - r_s'^a| + c_T K(d)(P_s^a, P_s'^a))`,
//!   where `K(d)` is the optimal-transport distance under ground metric `d`;
//! * the total-variation metric `F(I)`, where `I` is the 0/1 indicator of
//!   non-bisimilarity, which has a closed form over the bisimulation partition.
//!
//! Either metric drives greedy epsilon-clustering of states into an aggregate
//! MDP, and the [`aggregate`] module certifies how far the aggregate's optimal
//! values can drift from the original ones.
//!
//! Everything here is pure computation over `alloc` collections; file formats,
//! the command line and experiment sweeps live in the `mdp-metrics-cli` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod aggregate;
pub mod dp;
pub mod error;
mod math;
pub mod mdp;
pub mod metrics;
pub mod partition;
pub mod transport;

pub use aggregate::{
    avg_class_distance, bound_theorem52, build_aggregate, epsilon_partition, farthest_point_order,
    finite_n_bound, AggregateMdp, BoundReport, SeedOrder,
};
pub use dp::{
    backup_iterates, bellman_backup, evaluate_policy, greedy_policy, value_iteration,
    value_iteration_capped, Policy, ValueFunction, ValueIteration, DEFAULT_ITERATION_CAP,
};
pub use error::{Error, Result};
pub use mdp::{
    gen_figure1, gen_grid, gen_random, normalize_rewards, Distribution, Mdp, MetricParams,
    Violation,
};
pub use metrics::{
    apply_f, discrete_nonbisim_metric, fixed_point_metric, fixed_point_metric_traced, tv_metric,
    MetricKind, MetricResult,
};
pub use partition::{bisimulation_partition, class_probability, induced_partition, Partition};
pub use transport::{
    kantorovich, quotient_kantorovich, total_variation, DistanceMatrix, TransportPlan,
};

/// Absolute tolerance used for every equality check on probabilities,
/// distances and certificates.
pub const TOLERANCE: f64 = 1e-9;
