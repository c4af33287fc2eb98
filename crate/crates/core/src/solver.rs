//! Exact minimizer for separable convex quadratics over a budget-constrained
//! box, plus the best-response and centralized problems built on it.

use crate::error::{Error, Result};
use crate::model::{squared_distance, GameInstance, LoadMatrix, Mechanism};

/// Hard cap on multiplier bisection steps.
pub const MAX_BISECTION_ITERATIONS: usize = 200;

/// Relative bracket width at which the multiplier search stops.
const BRACKET_RTOL: f64 = 1e-13;

/// Default absolute tolerance on the budget constraint.
pub const DEFAULT_BUDGET_TOL: f64 = 1e-9;

/// Default relative tolerance on the per-cycle objective decrease of the
/// centralized block-coordinate descent.
pub const DEFAULT_DESCENT_TOL: f64 = 1e-10;

/// Cycle cap for the centralized descent.
pub const MAX_DESCENT_CYCLES: usize = 100_000;

/// `min sum_h q_h x_h^2 + p_h x_h` subject to `sum_h x_h = budget` and
/// `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalQp {
    quad: Vec<f64>,
    lin: Vec<f64>,
    budget: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DiagonalQp {
    pub fn new(
        quad: Vec<f64>,
        lin: Vec<f64>,
        budget: f64,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let h = quad.len();
        for len in [lin.len(), lower.len(), upper.len()] {
            if len != h {
                return Err(Error::LengthMismatch {
                    expected: h,
                    found: len,
                });
            }
        }
        if let Some((index, &value)) = quad.iter().enumerate().find(|(_, q)| !(**q > 0.0)) {
            return Err(Error::NonConvexQp { index, value });
        }
        let lower_sum: f64 = lower.iter().sum();
        let upper_sum: f64 = upper.iter().sum();
        let slack = DEFAULT_BUDGET_TOL * budget.abs().max(1.0);
        if budget < lower_sum - slack || budget > upper_sum + slack || lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::InfeasibleBudget {
                budget,
                lower_sum,
                upper_sum,
            });
        }
        Ok(Self {
            quad,
            lin,
            budget,
            lower,
            upper,
        })
    }

    pub fn dim(&self) -> usize {
        self.quad.len()
    }

    pub fn quad(&self) -> &[f64] {
        &self.quad
    }

    pub fn lin(&self) -> &[f64] {
        &self.lin
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.quad.iter().zip(&self.lin))
            .map(|(&x, (&q, &p))| (q * x + p) * x)
            .sum()
    }

    /// `objective(from) - objective(to)`, evaluated through the differences
    /// `from - to` so that tiny improvements are not lost to cancellation.
    pub fn decrease(&self, from: &[f64], to: &[f64]) -> f64 {
        from.iter()
            .zip(to)
            .zip(self.quad.iter().zip(&self.lin))
            .map(|((&a, &b), (&q, &p))| (a - b) * (q * (a + b) + p))
            .sum()
    }

    /// Same as [`decrease`](Self::decrease) for two points with the same
    /// budget, with the gradient centred on `multiplier`. The centring term
    /// vanishes on the budget plane and removes the rounding of `sum(from - to)`.
    pub fn decrease_on_budget(&self, from: &[f64], to: &[f64], multiplier: f64) -> f64 {
        from.iter()
            .zip(to)
            .zip(self.quad.iter().zip(&self.lin))
            .map(|((&a, &b), (&q, &p))| (a - b) * (q * (a + b) + p - multiplier))
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.quad.iter().zip(&self.lin))
            .map(|(&x, (&q, &p))| 2.0 * q * x + p)
            .collect()
    }

    fn point_at(&self, multiplier: f64, out: &mut [f64]) -> f64 {
        let mut sum = 0.0;
        for h in 0..self.dim() {
            let raw = (multiplier - self.lin[h]) / (2.0 * self.quad[h]);
            let x = raw.clamp(self.lower[h], self.upper[h]);
            out[h] = x;
            sum += x;
        }
        sum
    }
}

/// Minimizer of a [`DiagonalQp`] together with its budget multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub multiplier: f64,
    pub iterations: usize,
}

/// Solves `qp` by bisection on the budget multiplier.
///
/// The map `lambda -> sum_h clip((lambda - p_h) / 2q_h, lower_h, upper_h)` is
/// nondecreasing and piecewise linear; the root is bracketed by the smallest
/// and largest breakpoints, bisected, then polished by solving the linear
/// equation on the final free set exactly.
pub fn solve_diagonal_qp(qp: &DiagonalQp, tol: f64) -> Result<QpSolution> {
    let h = qp.dim();
    let lower_sum: f64 = qp.lower.iter().sum();
    let upper_sum: f64 = qp.upper.iter().sum();
    let breakpoint = |bound: &[f64], k: usize| qp.lin[k] + 2.0 * qp.quad[k] * bound[k];
    let mut lo = (0..h).map(|k| breakpoint(&qp.lower, k)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..h).map(|k| breakpoint(&qp.upper, k)).fold(f64::NEG_INFINITY, f64::max);

    if qp.budget <= lower_sum {
        return Ok(QpSolution {
            x: qp.lower.clone(),
            multiplier: lo,
            iterations: 0,
        });
    }
    if qp.budget >= upper_sum {
        return Ok(QpSolution {
            x: qp.upper.clone(),
            multiplier: hi,
            iterations: 0,
        });
    }

    let scale = lo.abs().max(hi.abs()).max(1.0);
    let mut x = vec![0.0; h];
    let mut iterations = 0;
    while hi - lo > BRACKET_RTOL * scale {
        if iterations == MAX_BISECTION_ITERATIONS {
            return Err(Error::SolverNoConvergence { iterations });
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if qp.point_at(mid, &mut x) < qp.budget {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }

    let mut multiplier = 0.5 * (lo + hi);
    let mut residual = qp.budget - qp.point_at(multiplier, &mut x);

    // Polish on the free set identified by the bracket.
    let (mut inv_sum, mut fixed_sum, mut shifted) = (0.0, 0.0, 0.0);
    for k in 0..h {
        if x[k] > qp.lower[k] && x[k] < qp.upper[k] {
            let inv = 1.0 / (2.0 * qp.quad[k]);
            inv_sum += inv;
            shifted += qp.lin[k] * inv;
        } else {
            fixed_sum += x[k];
        }
    }
    if inv_sum > 0.0 {
        let exact = (qp.budget - fixed_sum + shifted) / inv_sum;
        let mut candidate = vec![0.0; h];
        let r = qp.budget - qp.point_at(exact, &mut candidate);
        if r.abs() <= residual.abs() {
            multiplier = exact;
            residual = r;
            x = candidate;
        }
    }

    // Spread any rounding residue, preferring free coordinates so that
    // clipped ones stay on their bounds.
    let free: Vec<bool> = (0..h).map(|k| x[k] > qp.lower[k] && x[k] < qp.upper[k]).collect();
    for pass_free in [true, false] {
        for k in (0..h).filter(|&k| free[k] == pass_free) {
            if residual == 0.0 {
                break;
            }
            let room = if residual > 0.0 {
                qp.upper[k] - x[k]
            } else {
                qp.lower[k] - x[k]
            };
            let step = if residual > 0.0 {
                residual.min(room)
            } else {
                residual.max(room)
            };
            x[k] += step;
            residual -= step;
        }
    }

    let total: f64 = x.iter().sum();
    if (total - qp.budget).abs() > tol {
        return Err(Error::SolverNoConvergence { iterations });
    }
    Ok(QpSolution {
        x,
        multiplier,
        iterations,
    })
}

/// Builds the quadratic program whose objective differs from
/// `l_n -> f_n(l_n, l_-n)` by a constant.
///
/// Both billing rules give `q_h = (1 - alpha) beta a2 + alpha w` and
/// `p_h = (1 - alpha) beta (a1_h + gamma a2 L_-n^h) - 2 alpha w lhat^h`, with
/// `(beta, gamma) = (E_n / E, 2)` for daily and `(1, 1)` for hourly billing.
pub fn assemble_best_response(
    instance: &GameInstance,
    loads: &LoadMatrix,
    n: usize,
) -> Result<DiagonalQp> {
    let consumer = instance.consumer(n)?;
    let alpha = instance.alpha();
    let weight = consumer.preference_weight();
    if alpha >= 1.0 && weight <= 0.0 {
        return Err(Error::DegenerateBestResponse { index: n });
    }
    let (share, coupling) = match instance.mechanism() {
        Mechanism::DailyProportional => {
            let total = instance.total_energy();
            if !(total > 0.0) {
                return Err(Error::NoFlexibleEnergy);
            }
            (consumer.energy_need() / total, 2.0)
        }
        Mechanism::HourlyProportional => (1.0, 1.0),
    };
    let others = loads.aggregate_without(n);
    block_qp(instance, n, &others, (1.0 - alpha) * share, coupling, alpha * weight)
}

/// Block of user `n` for a cost weighted by `cost_weight` with
/// `coupling * a2 * others` cross term and `pref_weight` on the distance term.
fn block_qp(
    instance: &GameInstance,
    n: usize,
    others: &[f64],
    cost_weight: f64,
    coupling: f64,
    pref_weight: f64,
) -> Result<DiagonalQp> {
    let consumer = &instance.consumers()[n];
    let cost = instance.cost_model();
    let a2 = cost.quad_coeff();
    let hours = instance.hours();
    let q = cost_weight * a2 + pref_weight;
    let quad = vec![q; hours];
    let lin = (0..hours)
        .map(|h| {
            cost_weight * (cost.linear_coeff(h) + coupling * a2 * others[h])
                - 2.0 * pref_weight * consumer.preferred()[h]
        })
        .collect();
    DiagonalQp::new(
        quad,
        lin,
        consumer.energy_need(),
        consumer.lower().to_vec(),
        consumer.upper().to_vec(),
    )
}

/// Exact best response of consumer `n` to the others' loads, with the
/// objective decrease it achieves relative to the current row.
#[derive(Debug, Clone)]
pub struct BestResponse {
    pub profile: Vec<f64>,
    pub improvement: f64,
}

pub fn best_response(
    instance: &GameInstance,
    loads: &LoadMatrix,
    n: usize,
    tol: f64,
) -> Result<BestResponse> {
    let consumer = instance.consumer(n)?;
    if let Some(pinned) = consumer.pinned_profile() {
        return Ok(BestResponse {
            profile: pinned.to_vec(),
            improvement: 0.0,
        });
    }
    let qp = assemble_best_response(instance, loads, n)?;
    let sol = solve_diagonal_qp(&qp, tol)?;
    let improvement = qp.decrease_on_budget(loads.row(n), &sol.x, sol.multiplier).max(0.0);
    Ok(BestResponse {
        profile: sol.x,
        improvement,
    })
}

/// Result of a centralized block-coordinate descent.
#[derive(Debug, Clone)]
pub struct CentralOptimum {
    pub loads: LoadMatrix,
    pub value: f64,
    pub cycles: usize,
    pub converged: bool,
}

/// `(1 - alpha) sum_h C_h(l^h) + alpha sum_n w_n |l_n - lhat_n|^2`.
pub fn social_objective(instance: &GameInstance, loads: &LoadMatrix) -> f64 {
    let alpha = instance.alpha();
    let system = if alpha < 1.0 {
        instance.cost_model().total_flexible_cost(&loads.aggregate())
    } else {
        0.0
    };
    let discomfort: f64 = instance
        .consumers()
        .iter()
        .zip(loads.rows())
        .map(|(c, row)| c.preference_weight() * squared_distance(row, c.preferred()))
        .sum();
    (1.0 - alpha) * system + alpha * discomfort
}

/// Minimizes the social cost over the joint feasible set by cyclic exact
/// block minimization, starting from the preferred profiles.
///
/// Stops once a full cycle decreases the objective by less than
/// `tol * max(1, |SC|)`.
pub fn minimize_social_cost(instance: &GameInstance, tol: f64) -> Result<CentralOptimum> {
    let alpha = instance.alpha();
    let mut loads = instance.preferred_loads();
    if alpha >= 1.0 {
        // Every discomfort term vanishes at the preferred profile, including
        // consumers with zero weight for whom any feasible point is optimal.
        return Ok(CentralOptimum {
            value: social_objective(instance, &loads),
            loads,
            cycles: 0,
            converged: true,
        });
    }
    let n_users = instance.n_consumers();
    let hours = instance.hours();
    let mut aggregate = loads.aggregate();
    let mut value = social_objective(instance, &loads);
    let mut others = vec![0.0; hours];
    for cycle in 1..=MAX_DESCENT_CYCLES {
        let mut decrease = 0.0;
        for n in 0..n_users {
            let consumer = &instance.consumers()[n];
            if consumer.pinned_profile().is_some() {
                continue;
            }
            for h in 0..hours {
                others[h] = aggregate[h] - loads.row(n)[h];
            }
            let qp = block_qp(
                instance,
                n,
                &others,
                1.0 - alpha,
                2.0,
                alpha * consumer.preference_weight(),
            )?;
            let sol = solve_diagonal_qp(&qp, DEFAULT_BUDGET_TOL)?;
            decrease += qp.decrease_on_budget(loads.row(n), &sol.x, sol.multiplier).max(0.0);
            for h in 0..hours {
                aggregate[h] = others[h] + sol.x[h];
            }
            loads.set_row(n, &sol.x);
        }
        // Resynchronize to keep the running aggregate free of drift.
        aggregate = loads.aggregate();
        value = social_objective(instance, &loads);
        if decrease < tol * value.abs().max(1.0) {
            return Ok(CentralOptimum {
                loads,
                value,
                cycles: cycle,
                converged: true,
            });
        }
    }
    Ok(CentralOptimum {
        loads,
        value,
        cycles: MAX_DESCENT_CYCLES,
        converged: false,
    })
}

/// Minimizes the system cost `sum_h C_h(l^h)` over the joint feasible set.
pub fn minimize_system_cost(instance: &GameInstance, tol: f64) -> Result<CentralOptimum> {
    minimize_social_cost(&instance.with_alpha(0.0)?, tol)
}
