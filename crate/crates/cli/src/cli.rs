use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mdp_metrics::{
    bound_theorem52, build_aggregate, epsilon_partition, gen_figure1, gen_grid, gen_random,
    greedy_policy, value_iteration, Mdp, MetricKind, MetricParams, MetricResult, SeedOrder,
    TOLERANCE,
};

use crate::experiment::{self, compute_metric, SweepConfig};
use crate::format::{self, FormatError};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "mdp-metrics",
    version,
    about = "Bisimulation metrics and state aggregation for finite MDPs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an MDP document.
    Gen {
        #[command(subcommand)]
        family: GenFamily,
    },
    /// Solve for optimal values with value iteration.
    Solve {
        mdp: PathBuf,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        /// Value CSV; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write the greedy policy CSV here.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Compute a state metric and write it as a distance CSV.
    Metric {
        mdp: PathBuf,
        #[command(flatten)]
        metric: MetricArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Cluster states within epsilon and write the aggregate MDP.
    Aggregate {
        mdp: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, value_enum, default_value_t = SeedOrderArg::Index)]
        seed_order: SeedOrderArg,
        /// Use this distance CSV instead of computing a metric.
        #[arg(long)]
        distances: Option<PathBuf>,
        #[command(flatten)]
        metric: OptionalMetricArgs,
        /// Partition text file.
        #[arg(long)]
        partition: Option<PathBuf>,
        /// Aggregate MDP document; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Evaluate the aggregation error bound against the measured error.
    Bounds {
        mdp: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, value_enum, default_value_t = SeedOrderArg::Index)]
        seed_order: SeedOrderArg,
        #[arg(long = "epsilon-vi", default_value_t = 1e-8)]
        epsilon_vi: f64,
        #[command(flatten)]
        metric: MetricArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Sweep epsilon over [0, 1] for several discounts and metrics.
    Experiment {
        /// MDP document; the gridworld when omitted.
        mdp: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        width: usize,
        #[arg(long, default_value_t = 5)]
        height: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 0.9])]
        gammas: Vec<f64>,
        #[arg(long = "eps-steps", default_value_t = 50)]
        eps_steps: usize,
        #[arg(long, value_delimiter = ',', value_enum, default_values_t = [KindArg::Fixpoint, KindArg::Tv])]
        metrics: Vec<KindArg>,
        #[arg(long, value_enum, default_value_t = SeedOrderArg::Index)]
        seed_order: SeedOrderArg,
        #[arg(long = "epsilon-vi", default_value_t = 1e-8)]
        epsilon_vi: f64,
        /// Largest residual correction allowed in the reported bounds.
        #[arg(long, default_value_t = 1e-10)]
        bound_resolution: f64,
        #[arg(long, default_value_t = TOLERANCE)]
        partition_tol: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum GenFamily {
    /// Gridworld with uniform moves to adjacent cells.
    Grid {
        width: usize,
        height: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Four-state example: s and t branch to absorbing u and v.
    Figure1 {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long = "rv")]
        r_v: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Random sparse MDP.
    Random {
        #[arg(long)]
        states: usize,
        #[arg(long, default_value_t = 1)]
        actions: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        branching: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Fixpoint,
    Tv,
}

impl From<KindArg> for MetricKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Fixpoint => MetricKind::Fixpoint,
            KindArg::Tv => MetricKind::Tv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SeedOrderArg {
    Index,
    Farthest,
}

impl From<SeedOrderArg> for SeedOrder {
    fn from(s: SeedOrderArg) -> Self {
        match s {
            SeedOrderArg::Index => SeedOrder::Index,
            SeedOrderArg::Farthest => SeedOrder::Farthest,
        }
    }
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Fixpoint)]
    kind: KindArg,
    #[arg(long)]
    gamma: f64,
    /// Reward weight; defaults to 1 - gamma.
    #[arg(long = "cR")]
    c_r: Option<f64>,
    /// Transition weight; defaults to gamma.
    #[arg(long = "cT")]
    c_t: Option<f64>,
    #[arg(long, default_value_t = MetricParams::DEFAULT_DELTA)]
    delta: f64,
    /// Tolerance of the bisimulation partition behind the TV metric.
    #[arg(long, default_value_t = TOLERANCE)]
    partition_tol: f64,
}

impl MetricArgs {
    fn params(&self) -> Result<MetricParams, CliError> {
        let c_r = self.c_r.unwrap_or(1.0 - self.gamma);
        let c_t = self.c_t.unwrap_or(self.gamma);
        Ok(MetricParams::new(self.gamma, c_r, c_t, self.delta)?)
    }

    fn compute(&self, mdp: &Mdp) -> Result<(MetricResult, MetricParams), CliError> {
        let params = self.params()?;
        let d = compute_metric(mdp, self.kind.into(), &params, self.partition_tol)?;
        Ok((d, params))
    }
}

/// Metric flags that are only needed when no distance file is supplied.
#[derive(Debug, Args)]
pub struct OptionalMetricArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Fixpoint)]
    kind: KindArg,
    #[arg(long, required_unless_present = "distances")]
    gamma: Option<f64>,
    #[arg(long = "cR")]
    c_r: Option<f64>,
    #[arg(long = "cT")]
    c_t: Option<f64>,
    #[arg(long, default_value_t = MetricParams::DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = TOLERANCE)]
    partition_tol: f64,
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_error(p, e))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn io_error(path: &Path, source: io::Error) -> CliError {
    CliError::Format(FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn finish(mut out: Box<dyn Write>, path: Option<&Path>) -> Result<(), CliError> {
    out.flush()
        .map_err(|e| io_error(path.unwrap_or(Path::new("<stdout>")), e))
}

fn emit_mdp(mdp: &Mdp, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => {
            format::write_mdp(mdp, p)?;
            let back = format::read_mdp(p)?;
            if &back != mdp {
                return Err(CliError::Format(FormatError::Parse(format!(
                    "{}: read-back differs from the generated MDP",
                    p.display()
                ))));
            }
            Ok(())
        }
        None => {
            let mut out = open_output(None)?;
            out.write_all(format::mdp_to_string(mdp).as_bytes())
                .map_err(|e| io_error(Path::new("<stdout>"), e))?;
            finish(out, None)
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen { family } => {
            let (mdp, output) = match family {
                GenFamily::Grid {
                    width,
                    height,
                    output,
                } => (gen_grid(width, height)?, output),
                GenFamily::Figure1 { p, q, r_v, output } => (gen_figure1(p, q, r_v)?, output),
                GenFamily::Random {
                    states,
                    actions,
                    seed,
                    branching,
                    output,
                } => (gen_random(states, actions, seed, branching)?, output),
            };
            emit_mdp(&mdp, output.as_deref())
        }
        Command::Solve {
            mdp,
            gamma,
            epsilon,
            output,
            policy,
        } => {
            let mdp = format::read_mdp(&mdp)?;
            let solved = value_iteration(&mdp, gamma, epsilon)?;
            eprintln!("iterations={}", solved.iterations);
            let out = open_output(output.as_deref())?;
            format::write_values(out, &solved.values)?;
            if let Some(path) = policy {
                let pi = greedy_policy(&mdp, gamma, &solved.values)?;
                let out = open_output(Some(&path))?;
                format::write_policy(out, &pi)?;
            }
            Ok(())
        }
        Command::Metric {
            mdp,
            metric,
            output,
        } => {
            let mdp = format::read_mdp(&mdp)?;
            let (d, _) = metric.compute(&mdp)?;
            eprintln!(
                "kind={} iterations={} residual_bound={}",
                d.kind.as_str(),
                d.iterations,
                d.residual_bound
            );
            let out = open_output(output.as_deref())?;
            format::write_distances(out, &d.distances, mdp.state_labels())?;
            Ok(())
        }
        Command::Aggregate {
            mdp,
            epsilon,
            seed_order,
            distances,
            metric,
            partition,
            output,
        } => {
            let mdp = format::read_mdp(&mdp)?;
            let d = match distances {
                Some(path) => format::read_distances(&path)?,
                None => {
                    let args = MetricArgs {
                        kind: metric.kind,
                        gamma: metric.gamma.ok_or_else(|| {
                            CliError::Usage("--gamma is required without --distances".into())
                        })?,
                        c_r: metric.c_r,
                        c_t: metric.c_t,
                        delta: metric.delta,
                        partition_tol: metric.partition_tol,
                    };
                    args.compute(&mdp)?.0.distances
                }
            };
            if d.len() != mdp.n_states() {
                return Err(CliError::Format(FormatError::Dimension(format!(
                    "distance matrix has {} states, MDP has {}",
                    d.len(),
                    mdp.n_states()
                ))));
            }
            let order = SeedOrder::from(seed_order).order(&d);
            let blocks = epsilon_partition(&d, epsilon, &order)?;
            let aggregate = build_aggregate(&mdp, &blocks)?;
            eprintln!("n_blocks={}", blocks.len());
            if let Some(path) = partition {
                let mut out = open_output(Some(&path))?;
                format::write_partition(&mut out, &blocks).map_err(|e| io_error(&path, e))?;
                finish(out, Some(&path))?;
            }
            emit_mdp(&aggregate.quotient, output.as_deref())
        }
        Command::Bounds {
            mdp,
            epsilon,
            seed_order,
            epsilon_vi,
            metric,
            output,
        } => {
            let mdp = format::read_mdp(&mdp)?;
            let (d, params) = metric.compute(&mdp)?;
            let order = SeedOrder::from(seed_order).order(&d.distances);
            let blocks = epsilon_partition(&d.distances, epsilon, &order)?;
            let report = bound_theorem52(&mdp, &d, &blocks, &params, epsilon_vi, Some(epsilon))?;
            let out = open_output(output.as_deref())?;
            format::write_bound_report(out, &report)?;
            if !report.holds() {
                return Err(CliError::BoundViolated(format!(
                    "max true error {:?} exceeds the bound {} + {}",
                    report.max_true_error, report.max_bound, report.slack
                )));
            }
            Ok(())
        }
        Command::Experiment {
            mdp,
            width,
            height,
            gammas,
            eps_steps,
            metrics,
            seed_order,
            epsilon_vi,
            bound_resolution,
            partition_tol,
            output,
        } => {
            let mdp = match mdp {
                Some(path) => format::read_mdp(&path)?,
                None => gen_grid(width, height)?,
            };
            let config = SweepConfig {
                gammas,
                eps_steps,
                metrics: metrics.into_iter().map(MetricKind::from).collect(),
                seed_order: seed_order.into(),
                epsilon_vi,
                bound_resolution,
                partition_tol,
            };
            let rows = experiment::run_sweep(&mdp, &config)?;
            for w in experiment::timing_warnings(&rows) {
                eprintln!("warning: {w}");
            }
            let out = open_output(output.as_deref())?;
            experiment::write_rows(out, &rows).map_err(FormatError::from)?;
            Ok(())
        }
    }
}
