//! Social cost, system cost, price of anarchy and price of efficiency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{objective, GameInstance, LoadMatrix, Mechanism};

/// Optimal social costs at or below this magnitude make the price of anarchy
/// undefined.
pub const ZERO_OPTIMUM_TOL: f64 = 1e-12;

/// `sum_n f_n^alpha`.
pub fn social_cost(instance: &GameInstance, loads: &LoadMatrix) -> Result<f64> {
    (0..instance.n_consumers())
        .map(|n| objective(instance, loads, n))
        .sum()
}

/// `sum_h C_h(l^h)` at the aggregate of `loads`.
pub fn system_cost(instance: &GameInstance, loads: &LoadMatrix) -> f64 {
    instance.cost_model().total_flexible_cost(&loads.aggregate())
}

/// `SC(eq) / SC*`, or `None` when the optimum is zero (alpha = 1). The
/// equilibrium is unique, so the supremum over equilibria is its value.
pub fn price_of_anarchy(
    instance: &GameInstance,
    eq_loads: &LoadMatrix,
    opt_social: f64,
) -> Result<Option<f64>> {
    poa_ratio(social_cost(instance, eq_loads)?, opt_social)
}

/// `C(eq) / C*`.
pub fn price_of_efficiency(
    instance: &GameInstance,
    eq_loads: &LoadMatrix,
    opt_system: f64,
) -> Result<f64> {
    poe_ratio(system_cost(instance, eq_loads), opt_system)
}

pub fn poa_ratio(social_eq: f64, opt_social: f64) -> Result<Option<f64>> {
    if opt_social < -1e-9 {
        return Err(Error::NegativeOptimum(opt_social));
    }
    if opt_social.abs() <= ZERO_OPTIMUM_TOL {
        return Ok(None);
    }
    Ok(Some(social_eq / opt_social))
}

pub fn poe_ratio(system_eq: f64, opt_system: f64) -> Result<f64> {
    if !(opt_system > 0.0) {
        return Err(Error::NonPositiveSystemOptimum(opt_system));
    }
    Ok(system_eq / opt_system)
}

/// Efficiency of one equilibrium at one preference factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRecord {
    pub alpha: f64,
    pub mechanism: Mechanism,
    pub social_cost_eq: f64,
    pub social_cost_opt: f64,
    pub system_cost_eq: f64,
    pub system_cost_opt: f64,
    /// `None` when the optimal social cost vanishes.
    pub poa: Option<f64>,
    pub poe: f64,
}

impl EfficiencyRecord {
    pub fn evaluate(
        instance: &GameInstance,
        eq_loads: &LoadMatrix,
        opt_social: f64,
        opt_system: f64,
    ) -> Result<Self> {
        let social_cost_eq = social_cost(instance, eq_loads)?;
        let system_cost_eq = system_cost(instance, eq_loads);
        Ok(Self {
            alpha: instance.alpha(),
            mechanism: instance.mechanism(),
            social_cost_eq,
            social_cost_opt: opt_social,
            system_cost_eq,
            system_cost_opt: opt_system,
            poa: poa_ratio(social_cost_eq, opt_social)?,
            poe: poe_ratio(system_cost_eq, opt_system)?,
        })
    }

    /// Price of anarchy with the undefined point replaced by its limit 1.
    pub fn poa_or_limit(&self) -> f64 {
        self.poa.unwrap_or(1.0)
    }
}
