//! The fixed-point Kantorovich bisimulation metric and the total-variation
//! bisimulation metric.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::math::{abs, ceil, ln, powi};
use crate::mdp::{Mdp, MetricParams};
use crate::partition::{bisimulation_partition, class_probability, Partition};
use crate::transport::{kantorovich_slices, DistanceMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    /// Least fixed point of `F`, approximated from below by iteration.
    Fixpoint,
    /// `F` applied to the non-bisimilarity indicator.
    Tv,
}

impl MetricKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::Fixpoint => "fixpoint",
            MetricKind::Tv => "tv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricResult {
    pub distances: DistanceMatrix,
    pub iterations: usize,
    /// Guaranteed upper bound on `sup |d_true - distances|`; the returned
    /// matrix never exceeds the true metric.
    pub residual_bound: f64,
    pub kind: MetricKind,
}

/// `F(d)(s, s') = max_a (c_R |r_s^a - r_s'^a| + c_T K(d)(P_s^a, P_s'^a))`.
pub fn apply_f(mdp: &Mdp, d: &DistanceMatrix, params: &MetricParams) -> Result<DistanceMatrix> {
    check_len("distance matrix", mdp.n_states(), d.len())?;
    if params.c_r + params.c_t > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "c_R + c_T = {} > 1",
            params.c_r + params.c_t
        )));
    }
    let n = mdp.n_states();
    let mut pairs = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let mut best: f64 = 0.0;
            for a in 0..mdp.n_actions() {
                let reward_gap = params.c_r * abs(mdp.reward(a, i) - mdp.reward(a, j));
                let transport = if params.c_t > 0.0 {
                    kantorovich_slices(d, mdp.row(a, i), mdp.row(a, j))?.cost()
                } else {
                    0.0
                };
                best = best.max(reward_gap + params.c_t * transport);
            }
            pairs.push(best.clamp(0.0, 1.0));
        }
    }
    let mut it = pairs.into_iter();
    Ok(DistanceMatrix::from_upper_unchecked(n, |_, _| {
        it.next().unwrap_or(0.0)
    }))
}

/// `ceil(ln delta / ln c_T)`, the number of applications of `F` after which
/// the iterate is within `delta` of the fixed point.
pub fn fixed_point_iterations(c_t: f64, delta: f64) -> usize {
    let n = ceil(ln(delta) / ln(c_t));
    if n > 0.0 {
        n as usize
    } else {
        0
    }
}

/// Iterates `d_0 = 0, d_{k+1} = F(d_k)` for `ceil(ln delta / ln c_T)` steps.
///
/// Stops early, with residual 0, if an application of `F` leaves the iterate
/// unchanged. With `c_T = 0` a single application is exact.
pub fn fixed_point_metric(mdp: &Mdp, params: &MetricParams) -> Result<MetricResult> {
    run_fixed_point(mdp, params, |_| {})
}

/// Like [`fixed_point_metric`] but also returns every iterate `d_1, ..., d_N`.
pub fn fixed_point_metric_traced(
    mdp: &Mdp,
    params: &MetricParams,
) -> Result<(MetricResult, Vec<DistanceMatrix>)> {
    let mut trace = Vec::new();
    let result = run_fixed_point(mdp, params, |d| trace.push(d.clone()))?;
    Ok((result, trace))
}

fn run_fixed_point(
    mdp: &Mdp,
    params: &MetricParams,
    mut record: impl FnMut(&DistanceMatrix),
) -> Result<MetricResult> {
    if !(params.c_t >= 0.0 && params.c_t < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "c_T = {} must lie in [0,1) for fixed-point iteration",
            params.c_t
        )));
    }
    if !(params.delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta = {} must be positive",
            params.delta
        )));
    }
    let n = mdp.n_states();
    let mut current = DistanceMatrix::zeros(n);
    if params.c_t == 0.0 {
        let d = apply_f(mdp, &current, params)?;
        record(&d);
        return Ok(MetricResult {
            distances: d,
            iterations: 1,
            residual_bound: 0.0,
            kind: MetricKind::Fixpoint,
        });
    }
    let steps = fixed_point_iterations(params.c_t, params.delta);
    for k in 0..steps {
        let next = apply_f(mdp, &current, params)?;
        record(&next);
        let settled = next == current;
        current = next;
        if settled {
            return Ok(MetricResult {
                distances: current,
                iterations: k + 1,
                residual_bound: 0.0,
                kind: MetricKind::Fixpoint,
            });
        }
    }
    Ok(MetricResult {
        distances: current,
        iterations: steps,
        residual_bound: powi(params.c_t, steps as u32),
        kind: MetricKind::Fixpoint,
    })
}

/// 0 within blocks, 1 across blocks.
pub fn discrete_nonbisim_metric(blocks: &Partition) -> DistanceMatrix {
    DistanceMatrix::from_upper_unchecked(blocks.n_states(), |i, j| {
        if blocks.same_block(i, j) {
            0.0
        } else {
            1.0
        }
    })
}

/// The total-variation bisimulation metric: `F` applied to the
/// non-bisimilarity indicator, using the closed form
/// `K(I)(P, Q) = 1/2 sum_C |P(C) - Q(C)|` over bisimulation classes.
///
/// `tol` is passed to [`bisimulation_partition`].
pub fn tv_metric(mdp: &Mdp, params: &MetricParams, tol: f64) -> Result<MetricResult> {
    let blocks = bisimulation_partition(mdp, tol);
    Ok(tv_metric_on(mdp, params, &blocks))
}

pub(crate) fn tv_metric_on(mdp: &Mdp, params: &MetricParams, blocks: &Partition) -> MetricResult {
    let (n, k) = (mdp.n_states(), blocks.len());
    let n_actions = mdp.n_actions();
    // class_mass[(a * n + s) * k + c] = P_s^a(C_c)
    let mut class_mass = Vec::with_capacity(n_actions * n * k);
    for a in 0..n_actions {
        for s in 0..n {
            let row = mdp.row(a, s);
            class_mass.extend(blocks.blocks().iter().map(|b| class_probability(row, b)));
        }
    }
    let distances = DistanceMatrix::from_upper_unchecked(n, |i, j| {
        let mut best: f64 = 0.0;
        for a in 0..n_actions {
            let pi = &class_mass[(a * n + i) * k..(a * n + i + 1) * k];
            let pj = &class_mass[(a * n + j) * k..(a * n + j + 1) * k];
            let tv = 0.5 * pi.iter().zip(pj).map(|(x, y)| abs(x - y)).sum::<f64>();
            let reward_gap = abs(mdp.reward(a, i) - mdp.reward(a, j));
            best = best.max(params.c_r * reward_gap + params.c_t * tv);
        }
        best.clamp(0.0, 1.0)
    });
    MetricResult {
        distances,
        iterations: 1,
        residual_bound: 0.0,
        kind: MetricKind::Tv,
    }
}
