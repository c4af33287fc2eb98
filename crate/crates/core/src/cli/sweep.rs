//! Alpha sweeps over a set of scenarios.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{best_response_dynamics, BrdConfig, EquilibriumReport, PlayerOrder};
use crate::io::{calibrate_omega, AlphaResult, ScenarioFile, ScenarioReport};
use crate::metrics::EfficiencyRecord;
use crate::model::{GameInstance, Mechanism};
use crate::solver::{minimize_social_cost, minimize_system_cost, CentralOptimum, DEFAULT_DESCENT_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub alpha_grid: Vec<f64>,
    pub mechanisms: Vec<Mechanism>,
    pub seed: u64,
    pub brd: BrdConfig,
    pub descent_tol: f64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

/// `n` evenly spaced points covering `[0, 1]`.
pub fn linspace_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

impl SweepConfig {
    pub fn new(alpha_grid: Vec<f64>, mechanisms: Vec<Mechanism>, seed: u64) -> Result<Self> {
        let cfg = Self {
            alpha_grid,
            mechanisms,
            seed,
            brd: BrdConfig::with_seed(seed),
            descent_tol: DEFAULT_DESCENT_TOL,
            threads: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha_grid.is_empty() {
            return Err(Error::InvalidInstance("empty alpha grid".into()));
        }
        if self.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidInstance("alpha grid values must lie in [0, 1]".into()));
        }
        if self.alpha_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInstance("alpha grid must be sorted and distinct".into()));
        }
        if self.mechanisms.is_empty() {
            return Err(Error::InvalidInstance("no mechanism selected".into()));
        }
        Ok(())
    }
}

/// A scenario with its preference weights fixed and its system optimum cached.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub file: ScenarioFile,
    /// Uniform weight, when it was calibrated here.
    pub omega: Option<f64>,
    pub base: GameInstance,
    pub system_opt: CentralOptimum,
}

impl PreparedScenario {
    /// Calibrates missing weights from the system optimum, which does not
    /// depend on them.
    pub fn new(file: ScenarioFile, descent_tol: f64) -> Result<Self> {
        let unweighted = file.instance_with_default_weight(0.0, Mechanism::HourlyProportional, 0.0)?;
        let system_opt = minimize_system_cost(&unweighted, descent_tol)?;
        let (file, omega) = if file.has_weights() {
            (file, None)
        } else {
            let omega = calibrate_omega(&unweighted, &system_opt.loads)?;
            (file.with_uniform_weight(omega), Some(omega))
        };
        let base = file.instance(0.0, Mechanism::HourlyProportional)?;
        Ok(Self {
            file,
            omega,
            base,
            system_opt,
        })
    }

    pub fn instance(&self, alpha: f64, mechanism: Mechanism) -> Result<GameInstance> {
        Ok(self.base.with_alpha(alpha)?.with_mechanism(mechanism))
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Player-order seed of one sweep cell, independent of scheduling.
pub fn cell_seed(seed: u64, scenario: usize, alpha_index: usize, mechanism: Mechanism) -> u64 {
    let m = match mechanism {
        Mechanism::DailyProportional => 0,
        Mechanism::HourlyProportional => 1,
    };
    splitmix(splitmix(splitmix(seed ^ scenario as u64) ^ alpha_index as u64) ^ m)
}

/// Equilibrium and efficiency of one cell.
pub fn solve_cell(
    prepared: &PreparedScenario,
    alpha: f64,
    mechanism: Mechanism,
    brd: &BrdConfig,
    social_opt: f64,
) -> Result<(EquilibriumReport, EfficiencyRecord)> {
    let instance = prepared.instance(alpha, mechanism)?;
    let report = best_response_dynamics(&instance, &instance.preferred_loads(), brd)?;
    let record = EfficiencyRecord::evaluate(&instance, &report.loads, social_opt, prepared.system_opt.value)?;
    Ok((report, record))
}

pub(crate) fn alpha_result(
    alpha: f64,
    mechanism: Mechanism,
    outcome: Result<(EquilibriumReport, EfficiencyRecord)>,
) -> AlphaResult {
    match outcome {
        Ok((report, record)) => AlphaResult {
            alpha,
            mechanism,
            converged: report.converged,
            iterations: report.iterations_used,
            social_cost: Some(record.social_cost_eq),
            social_cost_opt: Some(record.social_cost_opt),
            system_cost: Some(record.system_cost_eq),
            system_cost_opt: Some(record.system_cost_opt),
            poa: record.poa,
            poe: Some(record.poe),
            max_regret: Some(report.max_regret()),
            aggregate_profile: report.loads.aggregate(),
            error: None,
        },
        Err(e) => AlphaResult {
            alpha,
            mechanism,
            converged: false,
            iterations: 0,
            social_cost: None,
            social_cost_opt: None,
            system_cost: None,
            system_cost_opt: None,
            poa: None,
            poe: None,
            max_regret: None,
            aggregate_profile: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

fn sweep_scenario(index: usize, prepared: &PreparedScenario, cfg: &SweepConfig) -> ScenarioReport {
    let per_alpha: Vec<Vec<AlphaResult>> = cfg
        .alpha_grid
        .par_iter()
        .enumerate()
        .map(|(ai, &alpha)| {
            let social_opt = prepared
                .instance(alpha, Mechanism::HourlyProportional)
                .and_then(|inst| minimize_social_cost(&inst, cfg.descent_tol))
                .map(|opt| opt.value);
            cfg.mechanisms
                .par_iter()
                .map(|&mech| {
                    let brd = BrdConfig {
                        player_order: match cfg.brd.player_order {
                            PlayerOrder::Cyclic => PlayerOrder::Cyclic,
                            PlayerOrder::RandomSeeded(_) => {
                                PlayerOrder::RandomSeeded(cell_seed(cfg.seed, index, ai, mech))
                            }
                        },
                        ..cfg.brd
                    };
                    let outcome = match &social_opt {
                        Ok(sc) => solve_cell(prepared, alpha, mech, &brd, *sc),
                        Err(e) => Err(Error::InvalidInstance(format!("social optimum: {e}"))),
                    };
                    alpha_result(alpha, mech, outcome)
                })
                .collect()
        })
        .collect();
    let mut per_alpha: Vec<AlphaResult> = per_alpha.into_iter().flatten().collect();
    per_alpha.sort_by(|a, b| a.alpha.total_cmp(&b.alpha).then(a.mechanism.cmp(&b.mechanism)));
    ScenarioReport {
        scenario_id: prepared.file.meta.scenario_id.clone(),
        seed: cfg.seed,
        omega: prepared.omega,
        alpha_grid: cfg.alpha_grid.clone(),
        per_alpha,
    }
}

/// Runs every (scenario, alpha, mechanism) cell. Failed cells are recorded
/// in the output; the sweep itself fails only on preparation errors.
pub fn run_sweep(scenarios: &[ScenarioFile], cfg: &SweepConfig) -> Result<Vec<ScenarioReport>> {
    cfg.validate()?;
    let work = || -> Result<Vec<ScenarioReport>> {
        let prepared = scenarios
            .par_iter()
            .map(|f| PreparedScenario::new(f.clone(), cfg.descent_tol))
            .collect::<Result<Vec<_>>>()?;
        Ok(prepared
            .par_iter()
            .enumerate()
            .map(|(i, p)| sweep_scenario(i, p, cfg))
            .collect())
    };
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInstance(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}
