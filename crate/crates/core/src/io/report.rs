use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::Mechanism;

/// Outcome of one (alpha, mechanism) cell. Metric fields are `None` when the
/// cell failed, in which case `error` says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    pub mechanism: Mechanism,
    pub converged: bool,
    pub iterations: usize,
    #[serde(rename = "SC")]
    pub social_cost: Option<f64>,
    #[serde(rename = "SC_opt")]
    pub social_cost_opt: Option<f64>,
    #[serde(rename = "C")]
    pub system_cost: Option<f64>,
    #[serde(rename = "C_opt")]
    pub system_cost_opt: Option<f64>,
    /// `null` when undefined (zero optimal social cost).
    #[serde(rename = "PoA")]
    pub poa: Option<f64>,
    #[serde(rename = "PoE")]
    pub poe: Option<f64>,
    pub max_regret: Option<f64>,
    pub aggregate_profile: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario_id: String,
    pub seed: u64,
    /// Preference weight used for every consumer, when uniform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    pub alpha_grid: Vec<f64>,
    pub per_alpha: Vec<AlphaResult>,
}

/// Writes reports as pretty JSON: a single object for one report, an array
/// otherwise.
pub fn write_report(reports: &[ScenarioReport], path: &Path) -> Result<()> {
    let mut text = render_report(reports)?;
    text.push('\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn render_report(reports: &[ScenarioReport]) -> Result<String> {
    Ok(match reports {
        [one] => serde_json::to_string_pretty(one)?,
        many => serde_json::to_string_pretty(many)?,
    })
}

/// Long-format CSV `day,alpha,mechanism,metric,value`, one row per metric.
/// `PoA` rows carry the limit value 1 where the ratio is undefined and a
/// `PoA_defined` row flags it.
pub fn render_sweep_csv(reports: &[ScenarioReport]) -> String {
    let mut out = String::from("day,alpha,mechanism,metric,value\n");
    for report in reports {
        for cell in &report.per_alpha {
            let mut row = |metric: &str, value: String| {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    report.scenario_id, cell.alpha, cell.mechanism, metric, value
                );
            };
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            row("converged", u8::from(cell.converged).to_string());
            row("iterations", cell.iterations.to_string());
            row("SC", opt(cell.social_cost));
            row("SC_opt", opt(cell.social_cost_opt));
            row("C", opt(cell.system_cost));
            row("C_opt", opt(cell.system_cost_opt));
            let poa = if cell.error.is_none() {
                Some(cell.poa.unwrap_or(1.0))
            } else {
                None
            };
            row("PoA", opt(poa));
            row("PoA_defined", u8::from(cell.poa.is_some()).to_string());
            row("PoE", opt(cell.poe));
            for (h, v) in cell.aggregate_profile.iter().enumerate() {
                row(&format!("load_h{h:02}"), v.to_string());
            }
        }
    }
    out
}

pub fn write_sweep_csv(reports: &[ScenarioReport], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, render_sweep_csv(reports))?;
    Ok(())
}
