//! Self-check of the engine against closed forms and structural identities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analytic::TwoPeriodScenario;
use crate::error::Result;
use crate::game::{best_response_dynamics, potential, random_feasible_profile, BrdConfig};
use crate::io::{generate_synthetic_scenario, SyntheticParams};
use crate::metrics::system_cost;
use crate::model::{bill, objective, GameInstance, LoadMatrix, Mechanism};
use crate::solver::{best_response, solve_diagonal_qp, DiagonalQp};

/// Improvement tolerance (¢) of the dynamics in oracle comparisons.
pub const ORACLE_IMPROVEMENT_TOL: f64 = 1e-20;
pub const ORACLE_MAX_ITERATIONS: usize = 3000;

#[derive(Debug, Clone, Default)]
pub struct ValidationOptions {
    /// Replaces the dynamics' improvement tolerance; used to confirm that a
    /// sloppy engine is caught.
    pub brd_tolerance_override: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Dynamics run to numerical convergence; the slow contraction of daily
/// billing at small alpha needs far more passes than the default cap.
fn brd_config(opts: &ValidationOptions, seed: u64) -> BrdConfig {
    let mut cfg = BrdConfig::with_seed(seed);
    cfg.improvement_tol = opts.brd_tolerance_override.unwrap_or(ORACLE_IMPROVEMENT_TOL);
    cfg.max_iterations = ORACLE_MAX_ITERATIONS;
    cfg
}

fn two_period_scenarios(seed: u64, count: usize) -> Result<Vec<TwoPeriodScenario>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(2..=6);
            TwoPeriodScenario::random(&mut rng, n)
        })
        .collect()
}

fn small_instances(seed: u64) -> Result<Vec<GameInstance>> {
    let mut out = Vec::new();
    for day in 0..3 {
        let file = generate_synthetic_scenario(seed, &SyntheticParams::new(8, 12, day))?;
        out.push(file.instance_with_default_weight(0.5, Mechanism::HourlyProportional, 3.0)?);
    }
    Ok(out)
}

fn alpha_grid(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| i as f64 / (n - 1) as f64)
}

fn closed_form_equivalence(opts: &ValidationOptions, mechanism: Mechanism) -> Result<f64> {
    let mut worst = 0.0_f64;
    for (k, s) in two_period_scenarios(11, 5)?.iter().enumerate() {
        for alpha in alpha_grid(21) {
            let inst = s.to_game_instance(alpha, mechanism)?;
            let eq = best_response_dynamics(&inst, &inst.preferred_loads(), &brd_config(opts, k as u64))?;
            let err = match mechanism {
                Mechanism::DailyProportional if alpha == 0.0 => {
                    (eq.loads.aggregate()[0] - s.dp_aggregate_peak(0.0)).abs()
                }
                _ => {
                    let expected = match mechanism {
                        Mechanism::DailyProportional => s.dp_equilibrium(alpha)?,
                        Mechanism::HourlyProportional => s.hp_equilibrium(alpha)?,
                    };
                    expected
                        .iter()
                        .enumerate()
                        .map(|(n, e)| {
                            let row = eq.loads.row(n);
                            (row[0] - e.peak).abs().max((row[1] - e.off_peak).abs())
                        })
                        .fold(0.0, f64::max)
                }
            };
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn potential_descent(opts: &ValidationOptions) -> Result<f64> {
    let mut worst = 0.0_f64;
    for inst in small_instances(21)? {
        for mechanism in Mechanism::ALL {
            for alpha in [0.1, 0.5, 0.9] {
                let inst = inst.with_alpha(alpha)?.with_mechanism(mechanism);
                let report = best_response_dynamics(&inst, &inst.preferred_loads(), &brd_config(opts, 3))?;
                let scale = report.potential_trace.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
                for w in report.potential_trace.windows(2) {
                    worst = worst.max((w[1] - w[0]) / scale);
                }
            }
        }
    }
    Ok(worst)
}

/// Largest mismatch between a unilateral change of a consumer's objective and
/// the matching (weighted) change of the potential.
fn potential_identity(mechanism: Mechanism) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0_f64;
    for inst in small_instances(31)? {
        let inst = inst.with_alpha(rng.gen_range(0.0..1.0))?.with_mechanism(mechanism);
        let base = random_feasible_profile(&inst, &mut rng)?;
        let other = random_feasible_profile(&inst, &mut rng)?;
        for n in 0..inst.n_consumers() {
            let mut moved = base.clone();
            moved.set_row(n, other.row(n));
            let df = objective(&inst, &moved, n)? - objective(&inst, &base, n)?;
            let weight = match mechanism {
                Mechanism::DailyProportional => inst.consumers()[n].energy_need() / inst.total_energy(),
                Mechanism::HourlyProportional => 1.0,
            };
            let dw = weight * (potential(&inst, &moved)? - potential(&inst, &base)?);
            worst = worst.max((df - dw).abs() / df.abs().max(1.0));
        }
    }
    Ok(worst)
}

/// Smallest `C_DP - C_HP` over the two-period grid, closed form and simulated.
fn system_cost_ordering(opts: &ValidationOptions) -> Result<(f64, f64)> {
    let (mut closed, mut simulated) = (f64::INFINITY, f64::INFINITY);
    for (k, s) in two_period_scenarios(41, 5)?.iter().enumerate() {
        for alpha in alpha_grid(11) {
            let c = s.closed_form_costs(alpha)?;
            closed = closed.min(c.system_dp - c.system_hp);
            let mut cost = [0.0; 2];
            for (slot, mechanism) in cost.iter_mut().zip(Mechanism::ALL) {
                let inst = s.to_game_instance(alpha, mechanism)?;
                let eq = best_response_dynamics(&inst, &inst.preferred_loads(), &brd_config(opts, k as u64))?;
                *slot = system_cost(&inst, &eq.loads);
            }
            simulated = simulated.min(cost[0] - cost[1]);
        }
    }
    Ok((closed, simulated))
}

/// Largest slope of the daily-billing social cost over the two-period grid.
fn social_cost_monotone() -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for s in two_period_scenarios(51, 5)? {
        for alpha in alpha_grid(200) {
            worst = worst.max(s.social_dp_slope(alpha));
        }
    }
    Ok(worst)
}

fn solver_kkt() -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let h = rng.gen_range(2..=8);
        let lower: Vec<f64> = (0..h).map(|_| rng.gen_range(0.0..1.0)).collect();
        let upper: Vec<f64> = lower.iter().map(|l| l + rng.gen_range(0.1..2.0)).collect();
        let budget = rng.gen_range(lower.iter().sum::<f64>()..=upper.iter().sum::<f64>());
        let qp = DiagonalQp::new(
            (0..h).map(|_| rng.gen_range(0.1..5.0)).collect(),
            (0..h).map(|_| rng.gen_range(-5.0..5.0)).collect(),
            budget,
            lower,
            upper,
        )?;
        let sol = solve_diagonal_qp(&qp, 1e-12)?;
        let grad = qp.gradient(&sol.x);
        let scale = grad.iter().fold(1.0_f64, |a, g| a.max(g.abs()));
        for i in 0..h {
            let r = grad[i] - sol.multiplier;
            let violation = if sol.x[i] <= qp.lower()[i] + 1e-12 {
                (-r).max(0.0)
            } else if sol.x[i] >= qp.upper()[i] - 1e-12 {
                r.max(0.0)
            } else {
                r.abs()
            };
            worst = worst.max(violation / scale);
        }
        worst = worst.max((sol.x.iter().sum::<f64>() - budget).abs());
    }
    Ok(worst)
}

fn cost_recovery() -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let mut worst = 0.0_f64;
    for inst in small_instances(71)? {
        for mechanism in Mechanism::ALL {
            let inst = inst.with_mechanism(mechanism);
            for _ in 0..10 {
                let loads = random_feasible_profile(&inst, &mut rng)?;
                let billed: f64 = (0..inst.n_consumers())
                    .map(|n| bill(&inst, &loads, n))
                    .sum::<Result<f64>>()?;
                let cost = system_cost(&inst, &loads);
                worst = worst.max((billed - cost).abs() / cost.abs().max(1.0));
            }
        }
    }
    Ok(worst)
}

/// Regret of a best response to an equilibrium must vanish.
fn best_response_fixed_point(opts: &ValidationOptions) -> Result<f64> {
    let mut worst = 0.0_f64;
    for inst in small_instances(81)? {
        let report = best_response_dynamics(&inst, &inst.preferred_loads(), &brd_config(opts, 9))?;
        let loads: &LoadMatrix = &report.loads;
        for n in 0..inst.n_consumers() {
            worst = worst.max(best_response(&inst, loads, n, 1e-12)?.improvement);
        }
    }
    Ok(worst)
}

fn outcome(name: &'static str, value: Result<f64>, pass: impl Fn(f64) -> bool, what: &str) -> CheckOutcome {
    match value {
        Ok(v) => CheckOutcome {
            name,
            passed: pass(v),
            detail: format!("{what} = {v:.3e}"),
        },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

pub fn run_validation(opts: &ValidationOptions) -> Vec<CheckOutcome> {
    let mut out = vec![
        outcome(
            "two-period equilibrium matches closed form (DP)",
            closed_form_equivalence(opts, Mechanism::DailyProportional),
            |v| v <= 1e-6,
            "max deviation",
        ),
        outcome(
            "two-period equilibrium matches closed form (HP)",
            closed_form_equivalence(opts, Mechanism::HourlyProportional),
            |v| v <= 1e-6,
            "max deviation",
        ),
        outcome(
            "potential never increases along best responses",
            potential_descent(opts),
            |v| v <= 1e-9,
            "max relative increase",
        ),
        outcome(
            "weighted potential tracks unilateral deviations (DP)",
            potential_identity(Mechanism::DailyProportional),
            |v| v <= 1e-9,
            "max relative mismatch",
        ),
        outcome(
            "exact potential tracks unilateral deviations (HP)",
            potential_identity(Mechanism::HourlyProportional),
            |v| v <= 1e-9,
            "max relative mismatch",
        ),
    ];
    match system_cost_ordering(opts) {
        Ok((closed, simulated)) => out.push(CheckOutcome {
            name: "hourly billing never costs more than daily billing",
            passed: closed >= -1e-9 && simulated >= -1e-9,
            detail: format!("min gap closed form = {closed:.3e}, simulated = {simulated:.3e}"),
        }),
        Err(e) => out.push(outcome("hourly billing never costs more than daily billing", Err(e), |_| false, "")),
    }
    out.extend([
        outcome(
            "daily-billing social cost decreases in alpha",
            social_cost_monotone(),
            |v| v < 0.0,
            "max slope",
        ),
        outcome("quadratic solver meets optimality conditions", solver_kkt(), |v| v <= 1e-7, "max residual"),
        outcome("bills recover the system cost", cost_recovery(), |v| v <= 1e-9, "max relative gap"),
        outcome(
            "no consumer can improve at the computed equilibrium",
            best_response_fixed_point(opts),
            |v| v <= 1e-8,
            "max improvement",
        ),
    ]);
    out
}
