//! Best-response dynamics, potential functions and equilibrium checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{utility, GameInstance, LoadMatrix, Mechanism, FEASIBILITY_TOL};
use crate::solver::{best_response, solve_diagonal_qp, DiagonalQp, DEFAULT_BUDGET_TOL};

/// Default cap on best-response passes.
pub const DEFAULT_MAX_ITERATIONS: usize = 150;

/// Default threshold (¢) on the total improvement of one pass.
pub const DEFAULT_IMPROVEMENT_TOL: f64 = 1e-12;

/// Order in which consumers best-respond within a pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "seed", rename_all = "snake_case")]
pub enum PlayerOrder {
    /// A fresh random permutation of the consumers on every pass.
    RandomSeeded(u64),
    Cyclic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrdConfig {
    /// Maximum number of passes; one pass lets every consumer respond once.
    pub max_iterations: usize,
    pub improvement_tol: f64,
    pub player_order: PlayerOrder,
    /// Budget tolerance handed to the quadratic solver.
    pub solver_tol: f64,
}

impl Default for BrdConfig {
    fn default() -> Self {
        Self {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            improvement_tol: DEFAULT_IMPROVEMENT_TOL,
            player_order: PlayerOrder::RandomSeeded(0),
            solver_tol: DEFAULT_BUDGET_TOL,
        }
    }
}

impl BrdConfig {
    pub fn cyclic() -> Self {
        Self {
            player_order: PlayerOrder::Cyclic,
            ..Self::default()
        }
    }

    pub fn with_seed(seed: u64) -> Self {
        Self {
            player_order: PlayerOrder::RandomSeeded(seed),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidInstance("max_iterations must be >= 1".into()));
        }
        if !(self.improvement_tol > 0.0) {
            return Err(Error::InvalidInstance("improvement_tol must be > 0".into()));
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::InvalidInstance("solver_tol must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub loads: LoadMatrix,
    /// Number of passes performed.
    pub iterations_used: usize,
    pub converged: bool,
    /// Potential at the start and after every single best response.
    pub potential_trace: Vec<f64>,
    pub per_user_regret: Vec<f64>,
    pub player_order: PlayerOrder,
}

impl EquilibriumReport {
    pub fn max_regret(&self) -> f64 {
        self.per_user_regret.iter().copied().fold(0.0, f64::max)
    }
}

/// Runs best-response dynamics from `start`.
///
/// A pass lets every consumer best-respond once. The run stops after the first
/// pass whose total improvement is at most `improvement_tol` (or the first
/// pass, for a single consumer) and after which no consumer can improve by more than `improvement_tol`; otherwise it stops
/// at `max_iterations` with `converged = false`.
pub fn best_response_dynamics(
    instance: &GameInstance,
    start: &LoadMatrix,
    cfg: &BrdConfig,
) -> Result<EquilibriumReport> {
    cfg.validate()?;
    start.check_feasible(instance, FEASIBILITY_TOL)?;
    if instance.mechanism() == Mechanism::DailyProportional && !(instance.total_energy() > 0.0) {
        return Err(Error::NoFlexibleEnergy);
    }
    if instance.alpha() >= 1.0 {
        if let Some(index) = instance
            .consumers()
            .iter()
            .position(|c| c.preference_weight() <= 0.0)
        {
            return Err(Error::DegenerateBestResponse { index });
        }
    }

    let n_users = instance.n_consumers();
    let mut loads = start.clone();
    let mut trace = vec![potential(instance, &loads)?];
    let mut order: Vec<usize> = (0..n_users).collect();
    let mut rng = match cfg.player_order {
        PlayerOrder::RandomSeeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        PlayerOrder::Cyclic => None,
    };

    let mut iterations_used = 0;
    let mut converged = false;
    let mut regrets = vec![0.0; n_users];
    while iterations_used < cfg.max_iterations {
        iterations_used += 1;
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        let mut pass_improvement = 0.0;
        for &n in &order {
            let br = best_response(instance, &loads, n, cfg.solver_tol)?;
            pass_improvement += br.improvement;
            loads.set_row(n, &br.profile);
            trace.push(potential(instance, &loads)?);
        }
        // A lone consumer is already at its optimum after one exact response.
        if pass_improvement <= cfg.improvement_tol || n_users == 1 {
            regrets = regret_vector(instance, &loads, cfg.solver_tol)?;
            if regrets.iter().all(|&r| r <= cfg.improvement_tol) {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        regrets = regret_vector(instance, &loads, cfg.solver_tol)?;
    }

    Ok(EquilibriumReport {
        loads,
        iterations_used,
        converged,
        potential_trace: trace,
        per_user_regret: regrets,
        player_order: cfg.player_order,
    })
}

fn regret_vector(instance: &GameInstance, loads: &LoadMatrix, tol: f64) -> Result<Vec<f64>> {
    (0..instance.n_consumers())
        .map(|n| best_response(instance, loads, n, tol).map(|br| br.improvement))
        .collect()
}

/// Potential of the game: a weighted potential under daily billing, an exact
/// one under hourly billing.
pub fn potential(instance: &GameInstance, loads: &LoadMatrix) -> Result<f64> {
    let alpha = instance.alpha();
    let cost = instance.cost_model();
    let aggregate = loads.aggregate();
    let consumers = instance.consumers();
    match instance.mechanism() {
        Mechanism::DailyProportional => {
            let total = instance.total_energy();
            let mut discomfort = 0.0;
            for (n, c) in consumers.iter().enumerate() {
                if !(c.energy_need() > 0.0) {
                    return Err(Error::ZeroEnergyConsumer { index: n });
                }
                discomfort += total / c.energy_need() * utility(c, loads.row(n))?;
            }
            Ok((1.0 - alpha) * cost.total_flexible_cost(&aggregate) - alpha * discomfort)
        }
        Mechanism::HourlyProportional => {
            let a2 = cost.quad_coeff();
            let mut congestion = 0.0;
            for (h, &agg) in aggregate.iter().enumerate() {
                let own_sq: f64 = loads.rows().map(|row| row[h] * row[h]).sum();
                congestion += 0.5 * a2 * (agg * agg + own_sq) + cost.linear_coeff(h) * agg;
            }
            let mut discomfort = 0.0;
            for (n, c) in consumers.iter().enumerate() {
                discomfort += utility(c, loads.row(n))?;
            }
            Ok((1.0 - alpha) * congestion - alpha * discomfort)
        }
    }
}

/// Regret of every consumer at `loads`, and whether `loads` is an
/// `tolerance`-equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretCheck {
    pub regrets: Vec<f64>,
    pub tolerance: f64,
}

impl RegretCheck {
    pub fn max_regret(&self) -> f64 {
        self.regrets.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_equilibrium(&self) -> bool {
        self.max_regret() <= self.tolerance
    }
}

pub fn verify_equilibrium(instance: &GameInstance, loads: &LoadMatrix, tol: f64) -> Result<RegretCheck> {
    loads.check_feasible(instance, FEASIBILITY_TOL)?;
    Ok(RegretCheck {
        regrets: regret_vector(instance, loads, DEFAULT_BUDGET_TOL)?,
        tolerance: tol,
    })
}

/// Random feasible profile: each row is the Euclidean projection of a uniform
/// point of the box onto the consumer's constraint set.
pub fn random_feasible_profile<R: Rng>(instance: &GameInstance, rng: &mut R) -> Result<LoadMatrix> {
    let mut loads = LoadMatrix::zeros(instance.n_consumers(), instance.hours());
    for (n, c) in instance.consumers().iter().enumerate() {
        if let Some(pinned) = c.pinned_profile() {
            loads.set_row(n, pinned);
            continue;
        }
        let target: Vec<f64> = c
            .lower()
            .iter()
            .zip(c.upper())
            .map(|(&lo, &hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
            .collect();
        let qp = DiagonalQp::new(
            vec![1.0; instance.hours()],
            target.iter().map(|t| -2.0 * t).collect(),
            c.energy_need(),
            c.lower().to_vec(),
            c.upper().to_vec(),
        )?;
        loads.set_row(n, &solve_diagonal_qp(&qp, DEFAULT_BUDGET_TOL)?.x);
    }
    Ok(loads)
}
