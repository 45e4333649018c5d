//! Batch runs behind the `reproduce` command.

use rayon::prelude::*;

use crate::bcd::{run_bcd, BcdReport};
use crate::error::Result;
use crate::metrics::{improvement_metrics, sg_tdma_schedule, MetricsReport};
use crate::model::Instance;
use crate::scenario::{sweep_scenario, table1_scenarios, table2_scenarios, Scenario, SWEEP_STRONGEST_DB};

/// BCD result and its comparison against SG+TDMA for one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub name: String,
    pub instance: Instance,
    pub report: BcdReport,
    pub metrics: MetricsReport,
}

pub fn evaluate(scenario: &Scenario) -> Result<ScenarioOutcome> {
    let instance = scenario.instance()?;
    let report = run_bcd(&instance, &scenario.solver)?;
    let baseline = sg_tdma_schedule(&instance)?;
    let metrics = improvement_metrics(&report.schedule, &baseline, &instance)?;
    Ok(ScenarioOutcome {
        name: scenario.name.clone(),
        instance,
        report,
        metrics,
    })
}

fn evaluate_all(scenarios: &[Scenario]) -> Result<Vec<ScenarioOutcome>> {
    scenarios.par_iter().map(evaluate).collect()
}

/// S1, S1~, S2, S2~ in that order.
pub fn table1() -> Result<Vec<ScenarioOutcome>> {
    evaluate_all(&table1_scenarios())
}

/// The six harvest sequences with the six-user loss set.
pub fn table2() -> Result<Vec<ScenarioOutcome>> {
    evaluate_all(&table2_scenarios())
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub strongest_db: f64,
    pub users: usize,
    pub outcome: ScenarioOutcome,
}

/// 2..=8 users for each strongest-user path loss.
pub fn sweep_users() -> Result<Vec<SweepRow>> {
    let grid: Vec<(f64, usize)> = SWEEP_STRONGEST_DB
        .iter()
        .flat_map(|&db| (2..=8).map(move |n| (db, n)))
        .collect();
    grid.par_iter()
        .map(|&(db, n)| {
            Ok(SweepRow {
                strongest_db: db,
                users: n,
                outcome: evaluate(&sweep_scenario(db, n))?,
            })
        })
        .collect()
}
