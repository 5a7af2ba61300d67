//! Value iteration, greedy policies and policy evaluation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::error::{check_len, Error, Result};
use crate::math::abs;
use crate::mdp::Mdp;

/// Default cap on the number of backups performed by [`value_iteration`].
pub const DEFAULT_ITERATION_CAP: u64 = 10_000_000;

/// One value per state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction(Vec<f64>);

impl ValueFunction {
    pub fn new(values: Vec<f64>) -> Self {
        ValueFunction(values)
    }

    pub fn zeros(n: usize) -> Self {
        ValueFunction(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Sup-norm distance to another value function of the same length.
    pub fn max_abs_diff(&self, other: &ValueFunction) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0, |m, (a, b)| f64::max(m, abs(a - b)))
    }
}

impl Deref for ValueFunction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// An action index per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(mdp: &Mdp, actions: Vec<usize>) -> Result<Self> {
        check_len("policy", mdp.n_states(), actions.len())?;
        if let Some((s, &a)) = actions
            .iter()
            .enumerate()
            .find(|(_, &a)| a >= mdp.n_actions())
        {
            return Err(Error::InvalidParameter(format!(
                "policy picks action {a} in state {s}, but there are only {}",
                mdp.n_actions()
            )));
        }
        Ok(Policy(actions))
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl Deref for Policy {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueIteration {
    pub values: ValueFunction,
    pub iterations: u64,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "gamma = {gamma} not in (0,1)"
        )))
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} must be positive"
        )))
    }
}

/// `r_s^a + gamma * sum_t P^a_{st} v(t)`, summed in ascending successor order.
#[inline]
fn q_value(mdp: &Mdp, gamma: f64, v: &[f64], action: usize, state: usize) -> f64 {
    let expected: f64 = mdp
        .row(action, state)
        .iter()
        .zip(v)
        .map(|(p, x)| p * x)
        .sum();
    mdp.reward(action, state) + gamma * expected
}

fn backup_into(mdp: &Mdp, gamma: f64, v: &[f64], out: &mut [f64]) {
    for (s, o) in out.iter_mut().enumerate() {
        *o = (0..mdp.n_actions())
            .map(|a| q_value(mdp, gamma, v, a, s))
            .fold(f64::NEG_INFINITY, f64::max);
    }
}

/// One Bellman optimality backup.
pub fn bellman_backup(mdp: &Mdp, gamma: f64, v: &ValueFunction) -> Result<ValueFunction> {
    check_gamma(gamma)?;
    check_len("value function", mdp.n_states(), v.len())?;
    let mut out = vec![0.0; mdp.n_states()];
    backup_into(mdp, gamma, v, &mut out);
    Ok(ValueFunction(out))
}

/// `V_0 = 0, V_1, ..., V_n` produced by exactly `n` backups.
pub fn backup_iterates(mdp: &Mdp, gamma: f64, n: usize) -> Result<Vec<ValueFunction>> {
    check_gamma(gamma)?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(ValueFunction::zeros(mdp.n_states()));
    for k in 0..n {
        let mut next = vec![0.0; mdp.n_states()];
        backup_into(mdp, gamma, &out[k], &mut next);
        out.push(ValueFunction(next));
    }
    Ok(out)
}

/// Stopping threshold on consecutive iterates that guarantees `epsilon`
/// accuracy of the returned iterate.
pub fn stopping_threshold(gamma: f64, epsilon: f64) -> f64 {
    epsilon * (1.0 - gamma) / (2.0 * gamma)
}

fn iterate_until<F>(
    n: usize,
    gamma: f64,
    epsilon: f64,
    cap: u64,
    mut step: F,
) -> Result<ValueIteration>
where
    F: FnMut(&[f64], &mut [f64]),
{
    check_gamma(gamma)?;
    check_epsilon(epsilon)?;
    let threshold = stopping_threshold(gamma, epsilon);
    let mut current = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    while iterations < cap {
        step(&current, &mut next);
        iterations += 1;
        let diff = current
            .iter()
            .zip(&next)
            .fold(0.0, |m, (a, b)| f64::max(m, abs(a - b)));
        core::mem::swap(&mut current, &mut next);
        if diff <= threshold {
            return Ok(ValueIteration {
                values: ValueFunction(current),
                iterations,
            });
        }
    }
    Err(Error::CapReached { iterations })
}

/// Value iteration from `V_0 = 0`, stopping at the first iterate whose change
/// is at most `epsilon (1 - gamma) / (2 gamma)`; the result is within
/// `epsilon` of `V*` in sup norm.
pub fn value_iteration(mdp: &Mdp, gamma: f64, epsilon: f64) -> Result<ValueIteration> {
    value_iteration_capped(mdp, gamma, epsilon, DEFAULT_ITERATION_CAP)
}

pub fn value_iteration_capped(
    mdp: &Mdp,
    gamma: f64,
    epsilon: f64,
    cap: u64,
) -> Result<ValueIteration> {
    iterate_until(mdp.n_states(), gamma, epsilon, cap, |v, out| {
        backup_into(mdp, gamma, v, out)
    })
}

/// Per-state argmax of the backup; ties go to the lowest action index.
pub fn greedy_policy(mdp: &Mdp, gamma: f64, v: &ValueFunction) -> Result<Policy> {
    check_len("value function", mdp.n_states(), v.len())?;
    let actions = (0..mdp.n_states())
        .map(|s| {
            let mut best = 0;
            let mut best_q = q_value(mdp, gamma, v, 0, s);
            for a in 1..mdp.n_actions() {
                let q = q_value(mdp, gamma, v, a, s);
                if q > best_q {
                    best = a;
                    best_q = q;
                }
            }
            best
        })
        .collect();
    Ok(Policy(actions))
}

/// Iterative policy evaluation with the same stopping rule as
/// [`value_iteration`].
pub fn evaluate_policy(
    mdp: &Mdp,
    gamma: f64,
    policy: &Policy,
    epsilon: f64,
) -> Result<ValueFunction> {
    let policy = Policy::new(mdp, policy.0.clone())?;
    let outcome = iterate_until(
        mdp.n_states(),
        gamma,
        epsilon,
        DEFAULT_ITERATION_CAP,
        |v, out| {
            for (s, o) in out.iter_mut().enumerate() {
                *o = q_value(mdp, gamma, v, policy[s], s);
            }
        },
    )?;
    Ok(outcome.values)
}
