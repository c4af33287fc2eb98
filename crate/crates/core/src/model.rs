//! Domain types of the consumption game and the closed-form cost, utility,
//! billing and objective functions.
//!
//! Units are kWh for energy and ¢ for money throughout. A profile is a vector
//! indexed by hour; a [`LoadMatrix`] stacks one profile per consumer.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when validating input energy balances.
pub const ENERGY_BALANCE_RTOL: f64 = 1e-9;

/// Absolute slack accepted on bounds and budgets when checking that a load
/// matrix produced by the solver is feasible.
pub const FEASIBILITY_TOL: f64 = 1e-7;

/// Billing rule used to split the flexible system cost among consumers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mechanism {
    /// Daily proportional: each consumer pays its share of the daily energy.
    #[serde(rename = "DP")]
    DailyProportional,
    /// Hourly proportional: each hour's cost is split by that hour's consumption.
    #[serde(rename = "HP")]
    HourlyProportional,
}

impl Mechanism {
    pub const ALL: [Mechanism; 2] = [Mechanism::DailyProportional, Mechanism::HourlyProportional];

    pub fn short_name(self) -> &'static str {
        match self {
            Mechanism::DailyProportional => "DP",
            Mechanism::HourlyProportional => "HP",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl std::str::FromStr for Mechanism {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dp" | "daily" => Ok(Mechanism::DailyProportional),
            "hp" | "hourly" => Ok(Mechanism::HourlyProportional),
            other => Err(format!("unknown mechanism `{other}` (expected dp or hp)")),
        }
    }
}

/// The discrete set of time periods of one day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonGrid {
    hours: usize,
}

impl HorizonGrid {
    pub fn new(hours: usize) -> Result<Self> {
        if hours < 2 {
            return Err(Error::InvalidInstance(format!(
                "horizon needs at least 2 hours, got {hours}"
            )));
        }
        Ok(Self { hours })
    }

    pub fn hours(&self) -> usize {
        self.hours
    }
}

/// One flexible consumer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsumerSpec {
    id: String,
    preferred: Vec<f64>,
    energy_need: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    preference_weight: f64,
}

impl ConsumerSpec {
    /// Builds a consumer after checking that its preferred profile is a
    /// feasible point of its own constraint set.
    pub fn new(
        id: impl Into<String>,
        preferred: Vec<f64>,
        energy_need: f64,
        lower: Vec<f64>,
        upper: Vec<f64>,
        preference_weight: f64,
    ) -> Result<Self> {
        let spec = Self {
            id: id.into(),
            preferred,
            energy_need,
            lower,
            upper,
            preference_weight,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Consumer with `[0, upper]` bounds whose need is the sum of its preferred profile.
    pub fn with_zero_floor(
        id: impl Into<String>,
        preferred: Vec<f64>,
        upper: Vec<f64>,
        preference_weight: f64,
    ) -> Result<Self> {
        let energy: f64 = preferred.iter().sum();
        let lower = vec![0.0; preferred.len()];
        Self::new(id, preferred, energy, lower, upper, preference_weight)
    }

    fn invalid(&self, message: String) -> Error {
        Error::InvalidConsumer {
            id: self.id.clone(),
            message,
        }
    }

    fn validate(&self) -> Result<()> {
        let h = self.preferred.len();
        if self.lower.len() != h || self.upper.len() != h {
            return Err(self.invalid(format!(
                "profile lengths differ (preferred {h}, lower {}, upper {})",
                self.lower.len(),
                self.upper.len()
            )));
        }
        let all = self
            .preferred
            .iter()
            .chain(&self.lower)
            .chain(&self.upper)
            .chain([&self.energy_need, &self.preference_weight]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(self.invalid("non-finite value".into()));
        }
        if self.preference_weight < 0.0 {
            return Err(self.invalid(format!(
                "preference weight {} is negative",
                self.preference_weight
            )));
        }
        for hour in 0..h {
            let (lo, pref, hi) = (self.lower[hour], self.preferred[hour], self.upper[hour]);
            if lo < 0.0 {
                return Err(self.invalid(format!("hour {hour}: lower bound {lo} is negative")));
            }
            if lo > hi {
                return Err(self.invalid(format!(
                    "hour {hour}: lower bound {lo} exceeds upper bound {hi}"
                )));
            }
            if pref < lo || pref > hi {
                return Err(self.invalid(format!(
                    "hour {hour}: preferred load {pref} outside [{lo}, {hi}]"
                )));
            }
        }
        let total: f64 = self.preferred.iter().sum();
        let scale = self.energy_need.abs().max(1.0);
        if (total - self.energy_need).abs() > ENERGY_BALANCE_RTOL * scale {
            return Err(self.invalid(format!(
                "preferred profile sums to {total}, energy need is {}",
                self.energy_need
            )));
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn preferred(&self) -> &[f64] {
        &self.preferred
    }

    pub fn energy_need(&self) -> f64 {
        self.energy_need
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn preference_weight(&self) -> f64 {
        self.preference_weight
    }

    pub fn hours(&self) -> usize {
        self.preferred.len()
    }

    pub fn with_preference_weight(&self, weight: f64) -> Result<Self> {
        let mut spec = self.clone();
        spec.preference_weight = weight;
        spec.validate()?;
        Ok(spec)
    }

    /// True when the budget leaves no freedom: the only feasible profile is
    /// the lower (or upper) bound vector.
    pub fn pinned_profile(&self) -> Option<&[f64]> {
        let lo: f64 = self.lower.iter().sum();
        let hi: f64 = self.upper.iter().sum();
        let slack = FEASIBILITY_TOL * self.energy_need.abs().max(1.0);
        if hi - lo <= slack || self.energy_need - lo <= 0.0 {
            Some(&self.lower)
        } else if hi - self.energy_need <= 0.0 {
            Some(&self.upper)
        } else {
            None
        }
    }
}

/// Quadratic provider cost `a0 + a1 L + a2 L^2` of the total hourly load,
/// together with the aggregate nonflexible load of every hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    a0: f64,
    a1: f64,
    a2: f64,
    nonflexible: Vec<f64>,
}

impl CostModel {
    pub fn new(a0: f64, a1: f64, a2: f64, nonflexible: Vec<f64>) -> Result<Self> {
        if !(a2 > 0.0) || !a2.is_finite() {
            return Err(Error::InvalidInstance(format!(
                "quadratic cost coefficient must be positive, got {a2}"
            )));
        }
        if !a0.is_finite() || !a1.is_finite() {
            return Err(Error::InvalidInstance("non-finite cost coefficient".into()));
        }
        if let Some((h, v)) = nonflexible
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(Error::InvalidInstance(format!(
                "nonflexible load at hour {h} is {v}, must be finite and >= 0"
            )));
        }
        Ok(Self {
            a0,
            a1,
            a2,
            nonflexible,
        })
    }

    /// Pure quadratic `C_h(l) = l^2` with no background load.
    pub fn pure_quadratic(hours: usize) -> Self {
        Self {
            a0: 0.0,
            a1: 0.0,
            a2: 1.0,
            nonflexible: vec![0.0; hours],
        }
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn a2(&self) -> f64 {
        self.a2
    }

    pub fn nonflexible(&self) -> &[f64] {
        &self.nonflexible
    }

    pub fn hours(&self) -> usize {
        self.nonflexible.len()
    }

    /// Linear coefficient of the flexible cost at `hour`: `a1 + 2 a2 l_NF`.
    /// May be negative for a small background load.
    pub fn linear_coeff(&self, hour: usize) -> f64 {
        self.a1 + 2.0 * self.a2 * self.nonflexible[hour]
    }

    /// Quadratic coefficient of the flexible cost; hour-independent.
    pub fn quad_coeff(&self) -> f64 {
        self.a2
    }

    /// Cost of the total load `L` under the provider's tariff.
    pub fn provider_cost(&self, total_load: f64) -> f64 {
        self.a0 + self.a1 * total_load + self.a2 * total_load * total_load
    }

    /// Surplus cost induced by `agg_load` of flexible consumption at `hour`.
    pub fn flexible_cost(&self, hour: usize, agg_load: f64) -> Result<f64> {
        if hour >= self.nonflexible.len() {
            return Err(Error::HourOutOfRange {
                hour,
                hours: self.nonflexible.len(),
            });
        }
        Ok(self.flexible_cost_unchecked(hour, agg_load))
    }

    pub(crate) fn flexible_cost_unchecked(&self, hour: usize, agg_load: f64) -> f64 {
        (self.linear_coeff(hour) + self.a2 * agg_load) * agg_load
    }

    /// Marginal per-unit price `a1_h + a2 l` at hour `hour`.
    pub fn unit_price(&self, hour: usize, agg_load: f64) -> f64 {
        self.linear_coeff(hour) + self.a2 * agg_load
    }

    /// Sum of the hourly flexible costs of an aggregate profile.
    pub fn total_flexible_cost(&self, aggregate: &[f64]) -> f64 {
        aggregate
            .iter()
            .enumerate()
            .map(|(h, &l)| self.flexible_cost_unchecked(h, l))
            .sum()
    }
}

/// Consumers, costs, preference factor and billing rule: everything a
/// best-response dynamics needs.
#[derive(Debug, Clone, PartialEq)]
pub struct GameInstance {
    grid: HorizonGrid,
    consumers: Vec<ConsumerSpec>,
    cost_model: CostModel,
    alpha: f64,
    mechanism: Mechanism,
}

impl GameInstance {
    pub fn new(
        consumers: Vec<ConsumerSpec>,
        cost_model: CostModel,
        alpha: f64,
        mechanism: Mechanism,
    ) -> Result<Self> {
        let grid = HorizonGrid::new(cost_model.hours())?;
        if consumers.is_empty() {
            return Err(Error::InvalidInstance("no consumers".into()));
        }
        if let Some(c) = consumers.iter().find(|c| c.hours() != grid.hours()) {
            return Err(Error::InvalidConsumer {
                id: c.id.clone(),
                message: format!(
                    "profile has {} hours, horizon has {}",
                    c.hours(),
                    grid.hours()
                ),
            });
        }
        check_alpha(alpha)?;
        Ok(Self {
            grid,
            consumers,
            cost_model,
            alpha,
            mechanism,
        })
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            alpha,
            ..self.clone()
        })
    }

    pub fn with_mechanism(&self, mechanism: Mechanism) -> Self {
        Self {
            mechanism,
            ..self.clone()
        }
    }

    pub fn with_uniform_weight(&self, weight: f64) -> Result<Self> {
        let consumers = self
            .consumers
            .iter()
            .map(|c| c.with_preference_weight(weight))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            consumers,
            ..self.clone()
        })
    }

    pub fn grid(&self) -> HorizonGrid {
        self.grid
    }

    pub fn hours(&self) -> usize {
        self.grid.hours()
    }

    pub fn n_consumers(&self) -> usize {
        self.consumers.len()
    }

    pub fn consumers(&self) -> &[ConsumerSpec] {
        &self.consumers
    }

    pub fn consumer(&self, n: usize) -> Result<&ConsumerSpec> {
        self.consumers.get(n).ok_or(Error::ConsumerOutOfRange {
            index: n,
            count: self.consumers.len(),
        })
    }

    pub fn cost_model(&self) -> &CostModel {
        &self.cost_model
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mechanism(&self) -> Mechanism {
        self.mechanism
    }

    /// Total flexible energy `E` over all consumers.
    pub fn total_energy(&self) -> f64 {
        self.consumers.iter().map(|c| c.energy_need).sum()
    }

    /// The profile where everybody consumes as preferred.
    pub fn preferred_loads(&self) -> LoadMatrix {
        let mut values = Vec::with_capacity(self.n_consumers() * self.hours());
        for c in &self.consumers {
            values.extend_from_slice(&c.preferred);
        }
        LoadMatrix {
            hours: self.hours(),
            values,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInstance(format!(
            "preference factor must lie in [0, 1], got {alpha}"
        )));
    }
    Ok(())
}

/// Per-consumer per-hour flexible consumption, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadMatrix {
    hours: usize,
    values: Vec<f64>,
}

impl LoadMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let hours = rows.first().map(Vec::len).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * hours);
        for row in rows {
            if row.len() != hours {
                return Err(Error::LengthMismatch {
                    expected: hours,
                    found: row.len(),
                });
            }
            values.extend(row);
        }
        Ok(Self { hours, values })
    }

    pub fn zeros(consumers: usize, hours: usize) -> Self {
        Self {
            hours,
            values: vec![0.0; consumers * hours],
        }
    }

    pub fn hours(&self) -> usize {
        self.hours
    }

    pub fn n_consumers(&self) -> usize {
        self.values.len().checked_div(self.hours).unwrap_or(0)
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.hours..(n + 1) * self.hours]
    }

    pub fn row_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.values[n * self.hours..(n + 1) * self.hours]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.hours.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn set_row(&mut self, n: usize, row: &[f64]) {
        self.row_mut(n).copy_from_slice(row);
    }

    /// Aggregate flexible load `l^h = sum_n l_n^h`.
    pub fn aggregate(&self) -> Vec<f64> {
        let mut agg = vec![0.0; self.hours];
        for row in self.rows() {
            for (a, v) in agg.iter_mut().zip(row) {
                *a += v;
            }
        }
        agg
    }

    /// Load of everybody but consumer `n`, computed without subtraction so it
    /// stays exact when `n` dominates the aggregate.
    pub fn aggregate_without(&self, n: usize) -> Vec<f64> {
        let mut agg = vec![0.0; self.hours];
        for (m, row) in self.rows().enumerate() {
            if m == n {
                continue;
            }
            for (a, v) in agg.iter_mut().zip(row) {
                *a += v;
            }
        }
        agg
    }

    /// Largest absolute componentwise difference to `other`.
    pub fn max_abs_diff(&self, other: &LoadMatrix) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Checks shape, bounds and energy balance against `instance`.
    pub fn check_feasible(&self, instance: &GameInstance, tol: f64) -> Result<()> {
        if self.hours != instance.hours() || self.n_consumers() != instance.n_consumers() {
            return Err(Error::InfeasibleProfile(format!(
                "shape {}x{} does not match instance {}x{}",
                self.n_consumers(),
                self.hours,
                instance.n_consumers(),
                instance.hours()
            )));
        }
        for (n, c) in instance.consumers().iter().enumerate() {
            let row = self.row(n);
            for h in 0..self.hours {
                if row[h] < c.lower[h] - tol || row[h] > c.upper[h] + tol {
                    return Err(Error::InfeasibleProfile(format!(
                        "consumer {} hour {h}: {} outside [{}, {}]",
                        c.id, row[h], c.lower[h], c.upper[h]
                    )));
                }
            }
            let total: f64 = row.iter().sum();
            if (total - c.energy_need).abs() > tol * c.energy_need.abs().max(1.0) {
                return Err(Error::InfeasibleProfile(format!(
                    "consumer {} consumes {total}, needs {}",
                    c.id, c.energy_need
                )));
            }
        }
        Ok(())
    }
}

/// Utility `-w sum_h (l^h - lhat^h)^2` of a profile: nonpositive, zero at the
/// preferred profile.
pub fn utility(consumer: &ConsumerSpec, profile: &[f64]) -> Result<f64> {
    if profile.len() != consumer.hours() {
        return Err(Error::LengthMismatch {
            expected: consumer.hours(),
            found: profile.len(),
        });
    }
    Ok(-consumer.preference_weight * squared_distance(profile, &consumer.preferred))
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_loads(instance: &GameInstance, loads: &LoadMatrix, n: usize) -> Result<()> {
    if loads.hours() != instance.hours() {
        return Err(Error::LengthMismatch {
            expected: instance.hours(),
            found: loads.hours(),
        });
    }
    if loads.n_consumers() != instance.n_consumers() {
        return Err(Error::LengthMismatch {
            expected: instance.n_consumers(),
            found: loads.n_consumers(),
        });
    }
    instance.consumer(n)?;
    Ok(())
}

/// Bill of consumer `n` under the instance's mechanism.
///
/// The hourly rule is evaluated in per-unit-price form
/// `sum_h l_n^h (a1_h + a2 l^h)`, which equals the proportional split wherever
/// the hourly aggregate is positive and stays defined when it vanishes.
pub fn bill(instance: &GameInstance, loads: &LoadMatrix, n: usize) -> Result<f64> {
    check_loads(instance, loads, n)?;
    let cost = instance.cost_model();
    match instance.mechanism() {
        Mechanism::DailyProportional => {
            let total = instance.total_energy();
            if !(total > 0.0) {
                return Err(Error::NoFlexibleEnergy);
            }
            let share = instance.consumers()[n].energy_need() / total;
            Ok(share * cost.total_flexible_cost(&loads.aggregate()))
        }
        Mechanism::HourlyProportional => {
            let agg = loads.aggregate();
            Ok(loads
                .row(n)
                .iter()
                .zip(&agg)
                .enumerate()
                .map(|(h, (&own, &total))| own * cost.unit_price(h, total))
                .sum())
        }
    }
}

/// Consumer objective `(1 - alpha) b_n - alpha u_n`.
pub fn objective(instance: &GameInstance, loads: &LoadMatrix, n: usize) -> Result<f64> {
    let alpha = instance.alpha();
    let b = if alpha < 1.0 {
        bill(instance, loads, n)?
    } else {
        check_loads(instance, loads, n)?;
        0.0
    };
    let u = utility(&instance.consumers()[n], loads.row(n))?;
    Ok((1.0 - alpha) * b - alpha * u)
}
