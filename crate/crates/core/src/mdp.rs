//! MDP data model, validation, reward normalization and instance generators.
//!
//! Rewards are stored action-major (`rewards[a * n + s]`) and transitions as a
//! dense `[action][state][successor]` cube, which matches the on-disk layout.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::math::abs;
use crate::TOLERANCE;

/// A single broken invariant, reported by [`Mdp::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum {
        action: usize,
        state: usize,
        sum: f64,
    },
    NegativeProbability {
        action: usize,
        state: usize,
        successor: usize,
        value: f64,
    },
    RewardRange {
        action: usize,
        state: usize,
        value: f64,
    },
}

impl Violation {
    /// Short category name, e.g. `row-sum`.
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::RowSum { .. } => "row-sum",
            Violation::NegativeProbability { .. } => "negative-probability",
            Violation::RewardRange { .. } => "reward-range",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { action, state, sum } => write!(
                f,
                "row-sum: transitions[{action}][{state}] sums to {sum}, not 1"
            ),
            Violation::NegativeProbability {
                action,
                state,
                successor,
                value,
            } => write!(
                f,
                "negative-probability: transitions[{action}][{state}][{successor}] = {value}"
            ),
            Violation::RewardRange {
                action,
                state,
                value,
            } => write!(
                f,
                "reward-range: rewards[{action}][{state}] = {value} not in [0,1]"
            ),
        }
    }
}

/// A finite MDP with rewards in `[0, 1]`.
///
/// Construction only checks that the arrays have consistent shapes; use
/// [`Mdp::validate`] (or [`Mdp::new_validated`]) for the probabilistic and
/// reward-range invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    n_states: usize,
    actions: Vec<String>,
    rewards: Vec<f64>,
    transitions: Vec<f64>,
    state_labels: Option<Vec<String>>,
}

impl Mdp {
    pub fn new(
        n_states: usize,
        actions: Vec<String>,
        rewards: Vec<f64>,
        transitions: Vec<f64>,
        state_labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::InvalidParameter(
                "an MDP needs at least one state".into(),
            ));
        }
        if actions.is_empty() {
            return Err(Error::InvalidParameter(
                "an MDP needs at least one action".into(),
            ));
        }
        let n_actions = actions.len();
        check_len("rewards", n_actions * n_states, rewards.len())?;
        check_len(
            "transitions",
            n_actions * n_states * n_states,
            transitions.len(),
        )?;
        if let Some(labels) = &state_labels {
            check_len("state_labels", n_states, labels.len())?;
        }
        Ok(Mdp {
            n_states,
            actions,
            rewards,
            transitions,
            state_labels,
        })
    }

    /// Like [`Mdp::new`] but also rejects MDPs with invariant violations.
    pub fn new_validated(
        n_states: usize,
        actions: Vec<String>,
        rewards: Vec<f64>,
        transitions: Vec<f64>,
        state_labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let mdp = Self::new(n_states, actions, rewards, transitions, state_labels)?;
        let violations = mdp.validate();
        if violations.is_empty() {
            Ok(mdp)
        } else {
            Err(Error::Validation(violations))
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn state_labels(&self) -> Option<&[String]> {
        self.state_labels.as_deref()
    }

    pub fn with_state_labels(mut self, labels: Vec<String>) -> Result<Self> {
        check_len("state_labels", self.n_states, labels.len())?;
        self.state_labels = Some(labels);
        Ok(self)
    }

    #[inline]
    pub fn reward(&self, action: usize, state: usize) -> f64 {
        self.rewards[action * self.n_states + state]
    }

    /// Action-major reward table, `rewards[a * n + s]`.
    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Flat transition cube, `transitions[(a * n + s) * n + s']`.
    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    /// The successor distribution of `state` under `action`.
    #[inline]
    pub fn row(&self, action: usize, state: usize) -> &[f64] {
        let n = self.n_states;
        let start = (action * n + state) * n;
        &self.transitions[start..start + n]
    }

    /// Reports every broken invariant; an empty list means the MDP is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for a in 0..self.n_actions() {
            for s in 0..self.n_states {
                let r = self.reward(a, s);
                if !(0.0..=1.0).contains(&r) {
                    out.push(Violation::RewardRange {
                        action: a,
                        state: s,
                        value: r,
                    });
                }
                let row = self.row(a, s);
                let mut sum = 0.0;
                for (t, &p) in row.iter().enumerate() {
                    if p < 0.0 || p.is_nan() {
                        out.push(Violation::NegativeProbability {
                            action: a,
                            state: s,
                            successor: t,
                            value: p,
                        });
                    }
                    sum += p;
                }
                if !(abs(sum - 1.0) <= TOLERANCE) {
                    out.push(Violation::RowSum {
                        action: a,
                        state: s,
                        sum,
                    });
                }
            }
        }
        out
    }
}

/// Affinely maps all rewards into `[0, 1]` by subtracting the minimum and
/// dividing by the range. A constant reward table maps to all zeros.
pub fn normalize_rewards(mdp: &Mdp) -> Result<Mdp> {
    if let Some(bad) = mdp.rewards.iter().find(|r| !r.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite reward {bad}")));
    }
    let min = mdp.rewards.iter().copied().fold(f64::INFINITY, f64::min);
    let max = mdp
        .rewards
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let rewards = if range > 0.0 {
        mdp.rewards
            .iter()
            .map(|r| ((r - min) / range).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; mdp.rewards.len()]
    };
    Ok(Mdp {
        rewards,
        ..mdp.clone()
    })
}

/// A probability distribution over state indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("empty distribution".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "negative or non-finite weight {w}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if abs(sum - 1.0) > TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        Ok(Distribution(weights))
    }

    pub fn point_mass(n: usize, state: usize) -> Self {
        let mut w = vec![0.0; n];
        w[state] = 1.0;
        Distribution(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Discount and metric weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricParams {
    pub gamma: f64,
    pub c_r: f64,
    pub c_t: f64,
    /// Target accuracy of the fixed-point metric.
    pub delta: f64,
}

impl MetricParams {
    pub const DEFAULT_DELTA: f64 = 0.01;

    pub fn new(gamma: f64, c_r: f64, c_t: f64, delta: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma = {gamma} not in (0,1)"
            )));
        }
        if !(0.0..=1.0).contains(&c_r) || !(0.0..=1.0).contains(&c_t) {
            return Err(Error::InvalidParameter(format!(
                "c_R = {c_r}, c_T = {c_t} must lie in [0,1]"
            )));
        }
        // 1 - gamma + gamma may land one ulp above 1.
        if c_r + c_t > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "c_R + c_T = {} > 1",
                c_r + c_t
            )));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "delta = {delta} must be positive"
            )));
        }
        Ok(MetricParams {
            gamma,
            c_r,
            c_t,
            delta,
        })
    }

    /// `c_R = 1 - gamma`, `c_T = gamma`.
    pub fn for_discount(gamma: f64, delta: f64) -> Result<Self> {
        Self::new(gamma, 1.0 - gamma, gamma, delta)
    }

    /// Picks `delta` so that the residual correction added by
    /// [`crate::aggregate::bound_theorem52`], `c_T^N / (c_R (1 - gamma))`,
    /// is at most `tol`.
    pub fn with_bound_resolution(mut self, tol: f64) -> Result<Self> {
        let delta = tol * self.c_r * (1.0 - self.gamma);
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bound resolution {tol} needs c_R > 0 and tol > 0"
            )));
        }
        self.delta = delta;
        Ok(self)
    }

    /// Whether the value-bound theorems apply (`gamma <= c_T` and `c_R > 0`).
    pub fn bounds_apply(&self) -> bool {
        self.gamma <= self.c_t && self.c_r > 0.0
    }

    pub(crate) fn require_bounds(&self) -> Result<()> {
        if self.gamma > self.c_t {
            return Err(Error::BoundPrecondition(format!(
                "gamma = {} exceeds c_T = {}",
                self.gamma, self.c_t
            )));
        }
        if !(self.c_r > 0.0) {
            return Err(Error::BoundPrecondition("c_R must be positive".into()));
        }
        Ok(())
    }
}

pub const GRID_ACTIONS: [&str; 5] = ["north", "south", "east", "west", "stay"];

/// The gridworld of width × height cells, indexed row-major from the
/// north-west corner.
///
/// Every action moves uniformly to one of the in-grid 4-neighbours; actions
/// only differ in reward. Moving south out of row `i` (1-based, `i < height`)
/// pays `0.1 i`, moving east out of column `j` (`j < width`) pays
/// `0.5 + 0.03 (j - 1)`, and staying in the south-east corner pays 1.
pub fn gen_grid(width: usize, height: usize) -> Result<Mdp> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter(
            "grid dimensions must be positive".into(),
        ));
    }
    // Beyond these sizes the reward schedule leaves [0, 1].
    if height > 11 || width > 17 {
        return Err(Error::InvalidParameter(format!(
            "{width}x{height} grid: reward schedule only fits [0,1] up to 17 columns and 11 rows"
        )));
    }
    let n = width * height;
    let n_actions = GRID_ACTIONS.len();
    let mut rewards = vec![0.0; n_actions * n];
    let mut transitions = vec![0.0; n_actions * n * n];
    let mut labels = Vec::with_capacity(n);

    for row in 0..height {
        for col in 0..width {
            let s = row * width + col;
            labels.push(format!("r{}c{}", row + 1, col + 1));

            let mut neighbours = Vec::with_capacity(4);
            if row > 0 {
                neighbours.push(s - width);
            }
            if row + 1 < height {
                neighbours.push(s + width);
            }
            if col + 1 < width {
                neighbours.push(s + 1);
            }
            if col > 0 {
                neighbours.push(s - 1);
            }
            for a in 0..n_actions {
                let base = (a * n + s) * n;
                if neighbours.is_empty() {
                    transitions[base + s] = 1.0;
                } else {
                    let w = 1.0 / neighbours.len() as f64;
                    for &t in &neighbours {
                        transitions[base + t] = w;
                    }
                }
            }

            if row + 1 < height {
                rewards[n + s] = (row + 1) as f64 / 10.0;
            }
            if col + 1 < width {
                rewards[2 * n + s] = (50 + 3 * col) as f64 / 100.0;
            }
            if row + 1 == height && col + 1 == width {
                rewards[4 * n + s] = 1.0;
            }
        }
    }
    Mdp::new(
        n,
        GRID_ACTIONS.iter().map(|a| a.to_string()).collect(),
        rewards,
        transitions,
        Some(labels),
    )
}

/// Indices of the four states of [`gen_figure1`].
pub mod figure1 {
    pub const S: usize = 0;
    pub const T: usize = 1;
    pub const U: usize = 2;
    pub const V: usize = 3;
}

/// The four-state, one-action family: `s` reaches `u` with probability `p`
/// and `v` otherwise, `t` reaches `u` with probability `q` and `v` otherwise,
/// `u` and `v` are absorbing, and only `v` is rewarded (`r_v`).
pub fn gen_figure1(p: f64, q: f64, r_v: f64) -> Result<Mdp> {
    for (name, x) in [("p", p), ("q", q), ("r_v", r_v)] {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidParameter(format!(
                "{name} = {x} not in [0,1]"
            )));
        }
    }
    use figure1::*;
    let n = 4;
    let mut transitions = vec![0.0; n * n];
    transitions[S * n + U] = p;
    transitions[S * n + V] = 1.0 - p;
    transitions[T * n + U] = q;
    transitions[T * n + V] = 1.0 - q;
    transitions[U * n + U] = 1.0;
    transitions[V * n + V] = 1.0;
    let mut rewards = vec![0.0; n];
    rewards[V] = r_v;
    Mdp::new(
        n,
        vec!["a".to_string()],
        rewards,
        transitions,
        Some(["s", "t", "u", "v"].iter().map(|l| l.to_string()).collect()),
    )
}

/// A seeded random MDP: every (action, state) row has `branching` distinct
/// successors with uniformly drawn, normalized weights; rewards are uniform
/// in `[0, 1)`.
pub fn gen_random(n_states: usize, n_actions: usize, seed: u64, branching: usize) -> Result<Mdp> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::InvalidParameter(
            "need at least one state and one action".into(),
        ));
    }
    if branching == 0 || branching > n_states {
        return Err(Error::InvalidParameter(format!(
            "branching = {branching} must lie in [1, {n_states}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_states;
    let mut transitions = vec![0.0; n_actions * n * n];
    let mut weights = vec![0.0; branching];
    for a in 0..n_actions {
        for s in 0..n {
            let mut succ = index::sample(&mut rng, n, branching).into_vec();
            succ.sort_unstable();
            for w in weights.iter_mut() {
                // (0, 1] so no successor is drawn with zero mass.
                *w = 1.0 - rng.gen::<f64>();
            }
            let total: f64 = weights.iter().sum();
            let base = (a * n + s) * n;
            for (&t, &w) in succ.iter().zip(&weights) {
                transitions[base + t] = w / total;
            }
        }
    }
    let rewards = (0..n_actions * n).map(|_| rng.gen::<f64>()).collect();
    Mdp::new(
        n,
        (0..n_actions).map(|a| format!("a{a}")).collect(),
        rewards,
        transitions,
        None,
    )
}
