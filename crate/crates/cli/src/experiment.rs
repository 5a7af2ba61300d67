//! Epsilon sweeps over aggregation radius, discount and metric.

use std::io::Write;
use std::time::Instant;

use mdp_metrics::{
    bound_theorem52, epsilon_partition, fixed_point_metric, tv_metric, Mdp, MetricKind,
    MetricParams, MetricResult, SeedOrder, TOLERANCE,
};
use thiserror::Error;

pub const CSV_HEADER: [&str; 9] = [
    "epsilon",
    "gamma",
    "metric_kind",
    "n_blocks",
    "true_error",
    "theorem_bound",
    "naive_bound",
    "metric_ms",
    "total_ms",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub epsilon: f64,
    pub gamma: f64,
    pub metric_kind: MetricKind,
    pub n_blocks: usize,
    /// Largest measured `|V(rho(s)) - V(s)|`.
    pub true_error: f64,
    /// Largest per-state bound.
    pub theorem_bound: f64,
    pub naive_bound: f64,
    pub metric_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub gammas: Vec<f64>,
    /// The sweep visits `eps_steps + 1` evenly spaced radii in `[0, 1]`.
    pub eps_steps: usize,
    pub metrics: Vec<MetricKind>,
    pub seed_order: SeedOrder,
    pub epsilon_vi: f64,
    /// Largest residual correction tolerated in the reported bound; sets the
    /// fixed-point `delta`.
    pub bound_resolution: f64,
    /// Tolerance for the bisimulation partition behind the TV metric.
    pub partition_tol: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            gammas: vec![0.1, 0.5, 0.9],
            eps_steps: 50,
            metrics: vec![MetricKind::Fixpoint, MetricKind::Tv],
            seed_order: SeedOrder::Index,
            epsilon_vi: 1e-8,
            bound_resolution: 1e-10,
            partition_tol: TOLERANCE,
        }
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Core(#[from] mdp_metrics::Error),
    #[error("row (epsilon={epsilon}, gamma={gamma}, metric={kind}) breaks an invariant: {reason}")]
    Invariant {
        epsilon: f64,
        gamma: f64,
        kind: &'static str,
        reason: String,
    },
}

/// `k + 1` evenly spaced points from 0 to 1, both ends exact.
pub fn epsilon_grid(k: usize) -> Vec<f64> {
    if k == 0 {
        return vec![0.0, 1.0];
    }
    (0..=k).map(|i| i as f64 / k as f64).collect()
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

pub fn compute_metric(
    mdp: &Mdp,
    kind: MetricKind,
    params: &MetricParams,
    partition_tol: f64,
) -> mdp_metrics::Result<MetricResult> {
    match kind {
        MetricKind::Fixpoint => fixed_point_metric(mdp, params),
        MetricKind::Tv => tv_metric(mdp, params, partition_tol),
    }
}

/// Runs the sweep and checks every row; rows come back sorted by
/// `(gamma, epsilon, metric_kind)`.
pub fn run_sweep(mdp: &Mdp, config: &SweepConfig) -> Result<Vec<ExperimentRow>, SweepError> {
    let grid = epsilon_grid(config.eps_steps);
    let mut rows = Vec::new();
    for &gamma in &config.gammas {
        let params = MetricParams::for_discount(gamma, 1.0)?
            .with_bound_resolution(config.bound_resolution)?;
        for &kind in &config.metrics {
            let start = Instant::now();
            let metric = compute_metric(mdp, kind, &params, config.partition_tol)?;
            let metric_ms = elapsed_ms(start);
            let order = config.seed_order.order(&metric.distances);
            for &epsilon in &grid {
                let start = Instant::now();
                let blocks = epsilon_partition(&metric.distances, epsilon, &order)?;
                let report = bound_theorem52(
                    mdp,
                    &metric,
                    &blocks,
                    &params,
                    config.epsilon_vi,
                    Some(epsilon),
                )?;
                let row = ExperimentRow {
                    epsilon,
                    gamma,
                    metric_kind: kind,
                    n_blocks: blocks.len(),
                    true_error: report.max_true_error.unwrap_or(0.0),
                    theorem_bound: report.max_bound,
                    naive_bound: report.naive_bound.unwrap_or(f64::INFINITY),
                    metric_ms,
                    total_ms: metric_ms + elapsed_ms(start),
                };
                if !report.holds() {
                    return Err(invariant(
                        &row,
                        "a state's true error exceeds its bound".into(),
                    ));
                }
                check_row(&row, mdp.n_states(), report.slack)?;
                rows.push(row);
            }
        }
    }
    sort_rows(&mut rows);
    Ok(rows)
}

fn invariant(row: &ExperimentRow, reason: String) -> SweepError {
    SweepError::Invariant {
        epsilon: row.epsilon,
        gamma: row.gamma,
        kind: row.metric_kind.as_str(),
        reason,
    }
}

pub fn check_row(row: &ExperimentRow, n_states: usize, slack: f64) -> Result<(), SweepError> {
    if !(row.true_error <= row.theorem_bound + slack) {
        return Err(invariant(
            row,
            format!(
                "true_error {} > theorem_bound {} + {slack}",
                row.true_error, row.theorem_bound
            ),
        ));
    }
    if !(row.theorem_bound <= row.naive_bound + TOLERANCE) {
        return Err(invariant(
            row,
            format!(
                "theorem_bound {} > naive_bound {}",
                row.theorem_bound, row.naive_bound
            ),
        ));
    }
    if row.n_blocks < 1 || row.n_blocks > n_states {
        return Err(invariant(
            row,
            format!("n_blocks {} outside [1, {n_states}]", row.n_blocks),
        ));
    }
    Ok(())
}

pub fn sort_rows(rows: &mut [ExperimentRow]) {
    rows.sort_by(|a, b| {
        a.gamma
            .total_cmp(&b.gamma)
            .then(a.epsilon.total_cmp(&b.epsilon))
            .then(a.metric_kind.as_str().cmp(b.metric_kind.as_str()))
    });
}

/// Soft expectation: the TV metric should be cheaper than the fixed point.
pub fn timing_warnings(rows: &[ExperimentRow]) -> Vec<String> {
    let mut gammas: Vec<f64> = rows.iter().map(|r| r.gamma).collect();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    let time_of = |gamma: f64, kind: MetricKind| {
        rows.iter()
            .find(|r| r.gamma == gamma && r.metric_kind == kind)
            .map(|r| r.metric_ms)
    };
    gammas
        .into_iter()
        .filter_map(|gamma| {
            let tv = time_of(gamma, MetricKind::Tv)?;
            let fix = time_of(gamma, MetricKind::Fixpoint)?;
            (tv >= fix)
                .then(|| format!("gamma={gamma}: tv metric took {tv:.3} ms, fixpoint {fix:.3} ms"))
        })
        .collect()
}

pub fn write_rows<W: Write>(out: W, rows: &[ExperimentRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.epsilon.to_string(),
            r.gamma.to_string(),
            r.metric_kind.as_str().to_string(),
            r.n_blocks.to_string(),
            r.true_error.to_string(),
            r.theorem_bound.to_string(),
            r.naive_bound.to_string(),
            format!("{:.3}", r.metric_ms),
            format!("{:.3}", r.total_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}
