//! Run reports: the Pareto front in raw orientation, the selected
//! configuration, and the per-iteration hypervolume trace, rendered as JSON
//! or fixed-schema CSV. Both formats come from one structure, so their
//! numeric content is identical.

use serde::Serialize;

use mmmo_core::engine::final_select;
use mmmo_core::moo::{EvaluationRecord, Objective, ParetoArchive};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct IterationHv {
    pub iteration: u32,
    pub hypervolume: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub label: String,
    pub evaluations: usize,
    pub objective_names: Vec<String>,
    pub selected: EvaluationRecord,
    pub front_ids: Vec<u64>,
    /// Nondominated raw objective vectors, ordered by record id.
    pub front_raw: Vec<Vec<f64>>,
    pub hv_trace: Vec<IterationHv>,
    pub final_hypervolume: f64,
    pub records: Vec<EvaluationRecord>,
}

/// Builds the report by replaying the archive iteration by iteration. The
/// hypervolume trace is re-verified to be nondecreasing, as the engine
/// guarantees.
pub fn build_report(
    records: &[EvaluationRecord],
    objective_spec: &[Objective],
    label: &str,
) -> CliResult<RunReport> {
    if records.is_empty() {
        return Err(CliError::runtime("no records to report"));
    }
    let mut iterations: Vec<u32> = records.iter().map(|r| r.iteration).collect();
    iterations.dedup();

    let mut hv_trace = Vec::with_capacity(iterations.len());
    let mut archive: Option<ParetoArchive> = None;
    let mut cursor = 0usize;
    for &iter in &iterations {
        let end = records[cursor..]
            .iter()
            .position(|r| r.iteration != iter)
            .map_or(records.len(), |p| cursor + p);
        let batch: Vec<EvaluationRecord> = records[cursor..end].to_vec();
        cursor = end;
        match archive.as_mut() {
            Some(a) => a.push_batch(batch)?,
            None => archive = Some(ParetoArchive::from_records(batch)?),
        }
        let hv = archive.as_ref().expect("archive built").hypervolume()?;
        hv_trace.push(IterationHv { iteration: iter, hypervolume: hv });
    }
    for pair in hv_trace.windows(2) {
        if pair[1].hypervolume < pair[0].hypervolume - 1e-9 {
            return Err(CliError::runtime(format!(
                "hypervolume trace decreased between iterations {} and {}",
                pair[0].iteration, pair[1].iteration
            )));
        }
    }

    let archive = archive.expect("records nonempty");
    let selected = final_select(&archive, objective_spec)?;
    let front_ids: Vec<u64> = archive.front_records().map(|r| r.id).collect();
    let front_raw: Vec<Vec<f64>> = archive.front_records().map(|r| r.raw.clone()).collect();
    let final_hypervolume = hv_trace.last().expect("nonempty trace").hypervolume;
    Ok(RunReport {
        label: label.to_string(),
        evaluations: records.len(),
        objective_names: objective_spec.iter().map(|o| o.name.clone()).collect(),
        selected,
        front_ids,
        front_raw,
        hv_trace,
        final_hypervolume,
        records: records.to_vec(),
    })
}

pub fn to_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).expect("report serialization is infallible")
}

/// Fixed CSV schema:
/// `id,iteration,weight_1..weight_N,density_1..density_N,score_<task>..,sparsity,on_front`.
/// The sparsity column is empty for runs without the sparsity objective.
pub fn to_csv(report: &RunReport, objective_spec: &[Objective]) -> String {
    let n_models = report.records[0].config.n_models();
    let task_cols: Vec<(usize, &str)> = objective_spec
        .iter()
        .enumerate()
        .filter(|(_, o)| o.name != "sparsity")
        .map(|(j, o)| (j, o.name.as_str()))
        .collect();
    let sparsity_col = objective_spec.iter().position(|o| o.name == "sparsity");

    let mut out = String::from("id,iteration");
    for i in 1..=n_models {
        out.push_str(&format!(",weight_{i}"));
    }
    for i in 1..=n_models {
        out.push_str(&format!(",density_{i}"));
    }
    for (_, name) in &task_cols {
        out.push_str(&format!(",score_{name}"));
    }
    out.push_str(",sparsity,on_front\n");

    for r in &report.records {
        out.push_str(&format!("{},{}", r.id, r.iteration));
        for w in r.config.weights() {
            out.push_str(&format!(",{w}"));
        }
        for d in r.config.densities() {
            out.push_str(&format!(",{d}"));
        }
        for (j, _) in &task_cols {
            out.push_str(&format!(",{}", r.raw[*j]));
        }
        match sparsity_col {
            Some(j) => out.push_str(&format!(",{}", r.raw[j])),
            None => out.push(','),
        }
        out.push_str(&format!(",{}\n", report.front_ids.contains(&r.id)));
    }
    out
}
