//! On-disk formats: the JSON MDP document and the CSV/text outputs.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use mdp_metrics::{BoundReport, DistanceMatrix, Mdp, Partition, Policy, TransportPlan};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MDP_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed document: {0}")]
    Parse(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("MDP fails validation: {0}")]
    Validation(mdp_metrics::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl FormatError {
    fn io(path: &Path, source: io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpDocument {
    version: u32,
    n_states: usize,
    actions: Vec<String>,
    rewards: Vec<Vec<f64>>,
    transitions: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state_labels: Option<Vec<String>>,
}

fn expect_len(what: &str, expected: usize, found: usize) -> Result<(), FormatError> {
    if expected == found {
        Ok(())
    } else {
        Err(FormatError::Dimension(format!(
            "{what}: expected {expected} entries, found {found}"
        )))
    }
}

impl MdpDocument {
    fn from_mdp(mdp: &Mdp) -> Self {
        let (n, na) = (mdp.n_states(), mdp.n_actions());
        MdpDocument {
            version: MDP_FORMAT_VERSION,
            n_states: n,
            actions: mdp.actions().to_vec(),
            rewards: (0..na)
                .map(|a| (0..n).map(|s| mdp.reward(a, s)).collect())
                .collect(),
            transitions: (0..na)
                .map(|a| (0..n).map(|s| mdp.row(a, s).to_vec()).collect())
                .collect(),
            state_labels: mdp.state_labels().map(<[String]>::to_vec),
        }
    }

    fn into_mdp(self) -> Result<Mdp, FormatError> {
        if self.version != MDP_FORMAT_VERSION {
            return Err(FormatError::Parse(format!(
                "unsupported version {} (expected {MDP_FORMAT_VERSION})",
                self.version
            )));
        }
        let (n, na) = (self.n_states, self.actions.len());
        expect_len("rewards", na, self.rewards.len())?;
        for (a, row) in self.rewards.iter().enumerate() {
            expect_len(&format!("rewards[{a}]"), n, row.len())?;
        }
        expect_len("transitions", na, self.transitions.len())?;
        for (a, rows) in self.transitions.iter().enumerate() {
            expect_len(&format!("transitions[{a}]"), n, rows.len())?;
            for (s, row) in rows.iter().enumerate() {
                expect_len(&format!("transitions[{a}][{s}]"), n, row.len())?;
            }
        }
        if let Some(labels) = &self.state_labels {
            expect_len("state_labels", n, labels.len())?;
        }
        let rewards = self.rewards.into_iter().flatten().collect();
        let transitions = self.transitions.into_iter().flatten().flatten().collect();
        let mdp = Mdp::new(n, self.actions, rewards, transitions, self.state_labels)
            .map_err(|e| FormatError::Dimension(e.to_string()))?;
        let violations = mdp.validate();
        if !violations.is_empty() {
            return Err(FormatError::Validation(mdp_metrics::Error::Validation(
                violations,
            )));
        }
        Ok(mdp)
    }
}

pub fn parse_mdp(text: &str) -> Result<Mdp, FormatError> {
    let doc: MdpDocument =
        serde_json::from_str(text).map_err(|e| FormatError::Parse(e.to_string()))?;
    doc.into_mdp()
}

pub fn mdp_to_string(mdp: &Mdp) -> String {
    let mut text =
        serde_json::to_string_pretty(&MdpDocument::from_mdp(mdp)).expect("MDP document serializes");
    text.push('\n');
    text
}

pub fn read_mdp(path: &Path) -> Result<Mdp, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_mdp(&text)
}

pub fn write_mdp(mdp: &Mdp, path: &Path) -> Result<(), FormatError> {
    fs::write(path, mdp_to_string(mdp)).map_err(|e| FormatError::io(path, e))
}

/// `state_index,value`
pub fn write_values<W: Write>(out: W, values: &[f64]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state_index", "value"])?;
    for (s, v) in values.iter().enumerate() {
        w.write_record([s.to_string(), v.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `state_index,action_index`
pub fn write_policy<W: Write>(out: W, policy: &Policy) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state_index", "action_index"])?;
    for (s, a) in policy.iter().enumerate() {
        w.write_record([s.to_string(), a.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One row per state. A header of state labels is written when `labels` is given.
pub fn write_distances<W: Write>(
    out: W,
    d: &DistanceMatrix,
    labels: Option<&[String]>,
) -> Result<(), FormatError> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    if let Some(labels) = labels {
        w.write_record(labels)?;
    }
    let n = d.len();
    for i in 0..n {
        w.write_record((0..n).map(|j| d.get(i, j).to_string()))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a distance CSV, with or without a label header, and checks it is a
/// 1-bounded semimetric.
pub fn read_distances(path: &Path) -> Result<DistanceMatrix, FormatError> {
    let file = fs::File::open(path).map_err(|e| FormatError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(|x| x.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if line == 0 => continue,
            Err(e) => {
                return Err(FormatError::Parse(format!("line {}: {e}", line + 1)));
            }
        }
    }
    let n = rows.len();
    for (i, row) in rows.iter().enumerate() {
        expect_len(&format!("distance row {i}"), n, row.len())?;
    }
    DistanceMatrix::new(n, rows.into_iter().flatten().collect()).map_err(FormatError::Validation)
}

/// `block_id: s1 s2 ...`, one line per block.
pub fn write_partition<W: Write>(mut out: W, blocks: &Partition) -> io::Result<()> {
    write!(out, "{blocks}")
}

/// `state,g,bound,true_error` per state, then a `#` summary line.
pub fn write_bound_report<W: Write>(mut out: W, report: &BoundReport) -> Result<(), FormatError> {
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["state", "g", "bound", "true_error"])?;
        for (s, (g, b)) in report.g.iter().zip(&report.per_state_bound).enumerate() {
            let err = report
                .true_error
                .as_ref()
                .map_or(String::new(), |e| e[s].to_string());
            w.write_record([s.to_string(), g.to_string(), b.to_string(), err])?;
        }
        w.flush().map_err(csv::Error::from)?;
    }
    let naive = report.naive_bound.map_or(String::new(), |x| x.to_string());
    let max_err = report
        .max_true_error
        .map_or(String::new(), |x| x.to_string());
    writeln!(
        out,
        "# max_bound={},naive_bound={naive},max_true_error={max_err},slack={}",
        report.max_bound, report.slack
    )
    .map_err(|e| FormatError::Csv(e.into()))
}

/// `k,j,flow` for every positive flow.
pub fn write_plan<W: Write>(out: W, plan: &TransportPlan) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "j", "flow"])?;
    for (k, j, f) in plan.nonzero_flows() {
        w.write_record([k.to_string(), j.to_string(), f.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
