//! Closed-form equilibria and costs of the two-period game with costs
//! `C_h(l) = l^2`, unit preference weights and no background load.
//!
//! These formulas are independent of the iterative engine and serve as its
//! oracle.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{ConsumerSpec, CostModel, GameInstance, Mechanism};

/// Peak/off-peak profile of one consumer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakOffPeak {
    pub peak: f64,
    pub off_peak: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPeriodScenario {
    preferred_peak: Vec<f64>,
    energy: Vec<f64>,
}

/// `phi(alpha) = 2 alpha / ((1 + alpha) + (1 - alpha) N)`.
pub fn phi(alpha: f64, n_users: usize) -> f64 {
    2.0 * alpha / ((1.0 + alpha) + (1.0 - alpha) * n_users as f64)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidTwoPeriod(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

impl TwoPeriodScenario {
    /// Validates the interior-equilibrium conditions of both mechanisms; the
    /// closed forms hold only under them.
    pub fn new(preferred_peak: Vec<f64>, energy: Vec<f64>) -> Result<Self> {
        if preferred_peak.is_empty() {
            return Err(Error::InvalidTwoPeriod("no consumers".into()));
        }
        if preferred_peak.len() != energy.len() {
            return Err(Error::LengthMismatch {
                expected: energy.len(),
                found: preferred_peak.len(),
            });
        }
        for (n, (&p, &e)) in preferred_peak.iter().zip(&energy).enumerate() {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::InvalidTwoPeriod(format!("consumer {n}: energy {e} must be > 0")));
            }
            if !(0.0..=e).contains(&p) {
                return Err(Error::InvalidTwoPeriod(format!(
                    "consumer {n}: preferred peak {p} outside [0, {e}]"
                )));
            }
        }
        let s = Self {
            preferred_peak,
            energy,
        };
        let (total, peak, off) = (s.total_energy(), s.aggregate_peak(), s.aggregate_off_peak());
        if peak < off {
            return Err(Error::InvalidTwoPeriod(format!(
                "aggregate preferred peak {peak} below off-peak {off}"
            )));
        }
        let n_users = s.n_users() as f64;
        let spread = s.spread();
        for n in 0..s.n_users() {
            let (p, e) = (s.preferred_peak[n], s.energy[n]);
            if p / e + 0.5 < peak / total {
                return Err(Error::InvalidTwoPeriod(format!(
                    "consumer {n} violates the daily-billing interior condition"
                )));
            }
            if 2.0 * (n_users - 1.0) * p < spread - e {
                return Err(Error::InvalidTwoPeriod(format!(
                    "consumer {n} violates the hourly-billing interior condition"
                )));
            }
        }
        Ok(s)
    }

    /// Draws a valid scenario with `n_users` consumers by rejection sampling.
    pub fn random<R: Rng>(rng: &mut R, n_users: usize) -> Result<Self> {
        for _ in 0..10_000 {
            let energy: Vec<f64> = (0..n_users).map(|_| rng.gen_range(0.5..3.0)).collect();
            let peak = energy
                .iter()
                .map(|e| e * rng.gen_range(0.2..=1.0))
                .collect();
            if let Ok(s) = Self::new(peak, energy) {
                return Ok(s);
            }
        }
        Err(Error::InvalidTwoPeriod("rejection sampling exhausted".into()))
    }

    pub fn n_users(&self) -> usize {
        self.energy.len()
    }

    pub fn preferred_peak(&self) -> &[f64] {
        &self.preferred_peak
    }

    pub fn energy(&self) -> &[f64] {
        &self.energy
    }

    pub fn preferred_off_peak(&self, n: usize) -> f64 {
        self.energy[n] - self.preferred_peak[n]
    }

    pub fn total_energy(&self) -> f64 {
        self.energy.iter().sum()
    }

    pub fn aggregate_peak(&self) -> f64 {
        self.preferred_peak.iter().sum()
    }

    pub fn aggregate_off_peak(&self) -> f64 {
        self.total_energy() - self.aggregate_peak()
    }

    /// `D`: preferred peak minus preferred off-peak aggregate.
    pub fn spread(&self) -> f64 {
        self.aggregate_peak() - self.aggregate_off_peak()
    }

    /// `V_E = sum_n E_n^2 / E^2`.
    pub fn energy_concentration(&self) -> f64 {
        let e = self.total_energy();
        self.energy.iter().map(|x| x * x).sum::<f64>() / (e * e)
    }

    /// Unique equilibrium under daily billing for `alpha` in `(0, 1]`.
    pub fn dp_equilibrium(&self, alpha: f64) -> Result<Vec<PeakOffPeak>> {
        check_alpha(alpha)?;
        if alpha == 0.0 {
            return Err(Error::DegenerateKkt);
        }
        let e = self.total_energy();
        let shift = 0.5 * (1.0 - alpha) * (-self.spread());
        Ok((0..self.n_users())
            .map(|n| {
                let peak = self.preferred_peak[n] + self.energy[n] / e * shift;
                PeakOffPeak {
                    peak,
                    off_peak: self.energy[n] - peak,
                }
            })
            .collect())
    }

    /// Unique equilibrium under hourly billing for `alpha` in `[0, 1]`.
    pub fn hp_equilibrium(&self, alpha: f64) -> Result<Vec<PeakOffPeak>> {
        check_alpha(alpha)?;
        let f = phi(alpha, self.n_users());
        let factor = (1.0 - alpha) / (2.0 * (1.0 + alpha));
        Ok((0..self.n_users())
            .map(|n| {
                let own = self.preferred_off_peak(n) - self.preferred_peak[n];
                let peak = self.preferred_peak[n] + factor * (f * (-self.spread()) + own);
                PeakOffPeak {
                    peak,
                    off_peak: self.energy[n] - peak,
                }
            })
            .collect())
    }

    /// Aggregate peak load at the daily-billing equilibrium (any alpha).
    pub fn dp_aggregate_peak(&self, alpha: f64) -> f64 {
        0.5 * self.total_energy() + 0.5 * alpha * self.spread()
    }

    /// Aggregate peak load at the hourly-billing equilibrium.
    pub fn hp_aggregate_peak(&self, alpha: f64) -> f64 {
        0.5 * self.total_energy() + 0.5 * phi(alpha, self.n_users()) * self.spread()
    }

    pub fn closed_form_costs(&self, alpha: f64) -> Result<ClosedFormCosts> {
        check_alpha(alpha)?;
        let e2 = self.total_energy().powi(2);
        let d2 = self.spread().powi(2);
        let f = phi(alpha, self.n_users());
        let v = self.energy_concentration();
        Ok(ClosedFormCosts {
            system_dp: 0.5 * (e2 + alpha * alpha * d2),
            system_hp: 0.5 * (e2 + f * f * d2),
            social_dp: (1.0 - alpha)
                * (0.5 * e2 + 0.5 * d2 * (alpha * alpha + v * (1.0 - alpha) * alpha)),
        })
    }

    /// Minimal system cost `E^2 / 2`, reached by an even split.
    pub fn optimal_system_cost(&self) -> f64 {
        0.5 * self.total_energy().powi(2)
    }

    /// `C_DP - C_HP` in factored form:
    /// `(alpha^2 D^2 / 2) (1 - 4 / (N (1 - alpha) + (1 + alpha))^2)`.
    pub fn system_cost_gap(&self, alpha: f64) -> f64 {
        let n = self.n_users() as f64;
        let denom = n * (1.0 - alpha) + (1.0 + alpha);
        0.5 * alpha * alpha * self.spread().powi(2) * (1.0 - 4.0 / (denom * denom))
    }

    /// Derivative of the daily-billing equilibrium social cost in alpha.
    pub fn social_dp_slope(&self, alpha: f64) -> f64 {
        let e2 = self.total_energy().powi(2);
        let d2 = self.spread().powi(2);
        let v = self.energy_concentration();
        0.5 * d2 * (-3.0 * (1.0 - v) * alpha * alpha + 2.0 * (1.0 - 2.0 * v) * alpha)
            + 0.5 * (d2 * v - e2)
    }

    /// The equivalent game: two hours, `C_h(l) = l^2`, unit weights and
    /// bounds `[0, E_n]`.
    pub fn to_game_instance(&self, alpha: f64, mechanism: Mechanism) -> Result<GameInstance> {
        let consumers = (0..self.n_users())
            .map(|n| {
                let e = self.energy[n];
                ConsumerSpec::new(
                    format!("user{n}"),
                    vec![self.preferred_peak[n], self.preferred_off_peak(n)],
                    e,
                    vec![0.0, 0.0],
                    vec![e, e],
                    1.0,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        GameInstance::new(consumers, CostModel::pure_quadratic(2), alpha, mechanism)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormCosts {
    pub system_dp: f64,
    pub system_hp: f64,
    pub social_dp: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1() -> TwoPeriodScenario {
        TwoPeriodScenario::new(vec![1.0; 5], vec![1.0; 5]).unwrap()
    }

    #[test]
    fn phi_endpoints() {
        assert_eq!(phi(0.0, 5), 0.0);
        assert_eq!(phi(1.0, 5), 1.0);
        assert_eq!(phi(1.0, 1), 1.0);
    }

    #[test]
    fn dp_examples() {
        let s = fig1();
        for (eq, pref) in s.dp_equilibrium(1.0).unwrap().iter().zip(s.preferred_peak()) {
            assert_eq!(eq.peak, *pref);
        }
        let eq = s.dp_equilibrium(0.5).unwrap();
        for user in &eq {
            assert!((user.peak - 0.75).abs() < 1e-15);
            assert!((user.off_peak - 0.25).abs() < 1e-15);
        }
        let agg: f64 = eq.iter().map(|u| u.peak).sum();
        assert!((agg - s.dp_aggregate_peak(0.5)).abs() < 1e-12);
        assert!(matches!(s.dp_equilibrium(0.0), Err(Error::DegenerateKkt)));
    }

    #[test]
    fn hp_examples() {
        let s = fig1();
        let eq = s.hp_equilibrium(0.0).unwrap();
        for user in &eq {
            assert!((user.peak - 0.5).abs() < 1e-15);
        }
        for alpha in [0.0, 0.3, 0.8, 1.0] {
            let agg: f64 = s.hp_equilibrium(alpha).unwrap().iter().map(|u| u.peak).sum();
            assert!((agg - s.hp_aggregate_peak(alpha)).abs() < 1e-12);
        }
    }

    #[test]
    fn cost_endpoints() {
        let s = TwoPeriodScenario::new(vec![1.0, 0.8, 1.5], vec![1.2, 1.0, 2.0]).unwrap();
        let e2 = s.total_energy().powi(2);
        let d2 = s.spread().powi(2);
        let c0 = s.closed_form_costs(0.0).unwrap();
        assert!((c0.system_dp - e2 / 2.0).abs() < 1e-12 && (c0.system_hp - e2 / 2.0).abs() < 1e-12);
        let c1 = s.closed_form_costs(1.0).unwrap();
        assert!((c1.system_dp - 0.5 * (e2 + d2)).abs() < 1e-12);
        assert!((c1.system_hp - 0.5 * (e2 + d2)).abs() < 1e-12);
        assert_eq!(c1.social_dp, 0.0);
    }

    #[test]
    fn fig1_poe_is_alpha_squared() {
        let s = fig1();
        for i in 0..=20 {
            let alpha = i as f64 / 20.0;
            let c = s.closed_form_costs(alpha).unwrap();
            let poe = c.system_dp / s.optimal_system_cost();
            assert!((poe - 1.0 - alpha * alpha).abs() < 1e-12);
            if alpha > 0.0 && alpha < 1.0 {
                assert!(c.system_hp < c.system_dp);
            }
        }
    }

    #[test]
    fn gap_identity_and_slope() {
        let s = TwoPeriodScenario::new(vec![1.0, 0.8, 1.5, 0.4], vec![1.2, 1.0, 2.0, 0.9]).unwrap();
        for i in 0..=50 {
            let alpha = i as f64 / 50.0;
            let c = s.closed_form_costs(alpha).unwrap();
            assert!((c.system_dp - c.system_hp - s.system_cost_gap(alpha)).abs() < 1e-12);
            if alpha > 0.0 && alpha < 1.0 {
                let h = 1e-6;
                let fd = (s.closed_form_costs(alpha + h).unwrap().social_dp
                    - s.closed_form_costs(alpha - h).unwrap().social_dp)
                    / (2.0 * h);
                assert!((fd - s.social_dp_slope(alpha)).abs() < 1e-6, "{fd} vs {}", s.social_dp_slope(alpha));
            }
        }
    }

    #[test]
    fn rejects_invalid_scenarios() {
        // Aggregate preferred peak below off-peak.
        assert!(TwoPeriodScenario::new(vec![0.1, 0.2], vec![1.0, 1.0]).is_err());
        // Daily-billing condition: user 1 prefers off-peak while the rest is all peak.
        assert!(TwoPeriodScenario::new(vec![4.0, 0.0], vec![4.0, 1.0]).is_err());
        assert!(TwoPeriodScenario::new(vec![], vec![]).is_err());
        assert!(TwoPeriodScenario::new(vec![2.0], vec![1.0]).is_err());
    }
}
