//! `simulate`: protocol Monte Carlo, one row per behaviour (and fixed message).

use serde::Serialize;

use crate::protocol::{monte_carlo, MessageChoice, SimReport};

use super::config::RunConfig;
use super::{render_csv, render_json, CliError, CommandOutput, OutputFormat, EXIT_OK};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateRow {
    pub behavior: String,
    pub trials: u64,
    #[serde(rename = "decodeErrRate")]
    pub decode_err_rate: f64,
    #[serde(rename = "falseRejectRate")]
    pub false_reject_rate: f64,
    #[serde(rename = "adversaryWinRate")]
    pub adversary_win_rate: f64,
    #[serde(rename = "winBound")]
    pub win_bound: f64,
    pub n: usize,
    #[serde(rename = "RT")]
    pub rt: f64,
    #[serde(rename = "PT")]
    pub pt: f64,
    pub seed: u64,
}

impl SimulateRow {
    pub fn from_report(r: &SimReport) -> Self {
        Self {
            behavior: r.behavior.clone(),
            trials: r.trials,
            decode_err_rate: r.decode_error_rate,
            false_reject_rate: r.false_reject_rate,
            adversary_win_rate: r.adversary_win_rate,
            win_bound: r.win_bound,
            n: r.rate.n,
            rt: r.rate.rt,
            pt: r.rate.pt,
            seed: r.seed,
        }
    }
}

fn label(name: &str, choice: &MessageChoice, indices: Option<&Vec<u64>>) -> String {
    match (choice, indices) {
        (MessageChoice::Fixed(_), Some(ix)) => {
            let s: Vec<String> = ix.iter().map(u64::to_string).collect();
            format!("{name}/s={}", s.join("."))
        }
        _ => name.to_string(),
    }
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<(Vec<SimReport>, CommandOutput), CliError> {
    let params = cfg.validate_simulate()?;
    let choices = cfg.message_choices(&params)?;
    let mut reports = Vec::new();
    for spec in &cfg.simulate.behaviors {
        let behavior = spec.build(&params).map_err(|e| CliError::Config(e.to_string()))?;
        for (i, choice) in choices.iter().enumerate() {
            let mut report = monte_carlo(
                &params,
                &cfg.channel,
                &behavior,
                choice,
                cfg.simulate.trials,
                cfg.workers,
                cfg.seed,
            )
            .map_err(|e| CliError::Run(e.to_string()))?;
            report.behavior = label(&spec.label(), choice, cfg.simulate.messages.as_ref().map(|m| &m[i]));
            reports.push(report);
        }
    }
    let text = match cfg.format {
        OutputFormat::Csv => {
            let rows: Vec<SimulateRow> = reports.iter().map(SimulateRow::from_report).collect();
            render_csv("simulate", cfg, &rows)?
        }
        OutputFormat::Json => render_json("simulate", cfg, &reports)?,
    };
    Ok((reports, CommandOutput { text, exit_code: EXIT_OK }))
}
