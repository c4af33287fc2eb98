//! Scenario ingestion, price-curve fitting, preference-weight calibration,
//! synthetic scenarios and result serialization.

mod report;
mod scenario;
mod synthetic;
mod tariff;

pub use report::{render_report, render_sweep_csv, write_report, write_sweep_csv, AlphaResult, ScenarioReport};
pub use scenario::{
    load_scenario, render_csv, sidecar_path, write_scenario, CostCoefficients, ScenarioConsumer,
    ScenarioFile, ScenarioMeta,
};
pub use synthetic::{generate_synthetic_scenario, EvProfileParams, SyntheticParams};
pub use tariff::{fit_price_curve, PriceCurve, TariffPoints, REFERENCE_TARIFF};

use crate::error::{Error, Result};
use crate::model::{squared_distance, GameInstance, LoadMatrix};

/// Uniform preference weight `C* / sum_n |l*_n - lhat_n|^2` that puts bills
/// and discomfort on the same scale.
pub fn calibrate_omega(instance: &GameInstance, system_optimum: &LoadMatrix) -> Result<f64> {
    let optimum_cost = instance
        .cost_model()
        .total_flexible_cost(&system_optimum.aggregate());
    let displacement: f64 = instance
        .consumers()
        .iter()
        .zip(system_optimum.rows())
        .map(|(c, row)| squared_distance(row, c.preferred()))
        .sum();
    let scale = instance.total_energy().powi(2).max(1.0);
    if displacement <= 1e-14 * scale {
        return Err(Error::OmegaUndefined);
    }
    Ok(optimum_cost / displacement)
}
