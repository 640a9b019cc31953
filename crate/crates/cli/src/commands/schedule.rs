use ksgdiffuse::Schedule;
use serde::{Deserialize, Serialize};

use crate::config::ScheduleSpec;
use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    /// Position in this schedule.
    pub t: usize,
    /// Timestep of the original schedule.
    pub label: usize,
    pub beta: f64,
    pub alpha: f64,
    pub alpha_bar: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub schedule: String,
    pub num_steps: usize,
    pub rows: Vec<Row>,
}

pub fn table(schedule: &Schedule) -> Table {
    let rows = (0..schedule.num_steps())
        .map(|i| Row {
            t: i + 1,
            label: schedule.labels()[i],
            beta: schedule.betas()[i],
            alpha: schedule.alphas()[i],
            alpha_bar: schedule.alpha_bars()[i],
            sigma2: schedule.sigma2s()[i],
        })
        .collect();
    Table {
        schedule: schedule.to_string(),
        num_steps: schedule.num_steps(),
        rows,
    }
}

pub fn dump(spec: &ScheduleSpec, respace: Option<usize>) -> CliResult<String> {
    let mut schedule = spec.build()?;
    if let Some(n) = respace {
        schedule = schedule.respace(n)?;
    }
    let mut text = serde_json::to_string_pretty(&table(&schedule))?;
    text.push('\n');
    Ok(text)
}
