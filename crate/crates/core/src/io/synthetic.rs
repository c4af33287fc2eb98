//! Seeded generator of realistic residential scenarios: a peaky aggregate
//! background load and one EV-like flexible consumer per home.
//!
//! Every consumer has charging habits (charger power, usual arrival time,
//! typical daily energy) and a history of `history_days` days. The scenario
//! for day `d` uses that day's charging block as preferred profile, zero lower
//! bounds, and upper bounds equal to the largest load the consumer ever drew
//! at each hour over the history (zero at hours never used).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{CostCoefficients, ScenarioConsumer, ScenarioFile, ScenarioMeta};
use super::tariff::{fit_price_curve, TariffPoints};
use crate::error::{Error, Result};

const NONFLEX_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvProfileParams {
    /// Charger powers (kW) a home may have.
    pub charge_powers: Vec<f64>,
    /// Range of a home's typical daily charging energy (kWh).
    pub daily_energy: (f64, f64),
    /// Range of a home's usual arrival hour.
    pub arrival_window: (f64, f64),
    /// Day-to-day spread of the arrival hour.
    pub arrival_jitter: f64,
    /// Probability that a day's charge starts during working hours instead.
    pub daytime_probability: f64,
}

impl Default for EvProfileParams {
    fn default() -> Self {
        Self {
            charge_powers: vec![3.3, 6.6],
            daily_energy: (4.0, 14.0),
            arrival_window: (16.5, 21.0),
            arrival_jitter: 1.5,
            daytime_probability: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub users: usize,
    pub hours: usize,
    /// Which day of the history becomes the preferred profile.
    pub day: u32,
    pub history_days: u32,
    pub ev: EvProfileParams,
    /// Tariff used to fit the provider cost; defaults to the reference tariff
    /// rescaled to `users` homes.
    pub tariff: Option<TariffPoints>,
}

impl SyntheticParams {
    pub fn new(users: usize, hours: usize, day: u32) -> Self {
        Self {
            users,
            hours,
            day,
            history_days: 31,
            ev: EvProfileParams::default(),
            tariff: None,
        }
    }
}

struct Habits {
    power: f64,
    arrival: f64,
    energy: f64,
}

fn circular_bump(t: f64, center: f64, width: f64) -> f64 {
    let mut d = (t - center).abs() % 24.0;
    if d > 12.0 {
        d = 24.0 - d;
    }
    (-0.5 * (d / width).powi(2)).exp()
}

/// Normalized daily shape in `[0, ~1]`: night trough, morning bump, evening peak.
fn background_shape(t: f64) -> f64 {
    0.05 + 0.3 * circular_bump(t, 7.5, 1.5) + 0.15 * circular_bump(t, 13.0, 3.0)
        + 0.85 * circular_bump(t, 19.0, 2.2)
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn charging_block(hours: usize, start_hour: f64, energy: f64, power: f64) -> Vec<f64> {
    let slot = 24.0 / hours as f64;
    let capacity = round3(power * slot);
    let mut remaining = round3(energy.min(0.9 * capacity * hours as f64));
    let mut profile = vec![0.0; hours];
    let mut h = ((start_hour.rem_euclid(24.0)) / slot).floor() as usize % hours;
    while remaining > 0.0 {
        let take = remaining.min(capacity);
        profile[h] = take;
        remaining = round3(remaining - take);
        h = (h + 1) % hours;
    }
    profile
}

/// Generates one day of a synthetic scenario; deterministic in `seed`.
pub fn generate_synthetic_scenario(seed: u64, params: &SyntheticParams) -> Result<ScenarioFile> {
    if params.users == 0 {
        return Err(Error::InvalidInstance("synthetic scenario needs at least one user".into()));
    }
    if params.hours < 2 {
        return Err(Error::InvalidInstance("synthetic scenario needs at least two hours".into()));
    }
    if params.day >= params.history_days {
        return Err(Error::InvalidInstance(format!(
            "day {} outside a history of {} days",
            params.day, params.history_days
        )));
    }
    let ev = &params.ev;
    if ev.charge_powers.is_empty() || ev.charge_powers.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::InvalidInstance("charger powers must be positive".into()));
    }
    let hours = params.hours;
    let slot = 24.0 / hours as f64;

    let mut consumers = Vec::with_capacity(params.users);
    for user in 0..params.users {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1 + user as u64);
        let habits = Habits {
            power: ev.charge_powers[rng.gen_range(0..ev.charge_powers.len())],
            arrival: rng.gen_range(ev.arrival_window.0..=ev.arrival_window.1),
            energy: rng.gen_range(ev.daily_energy.0..=ev.daily_energy.1),
        };
        let mut upper = vec![0.0_f64; hours];
        let mut today = Vec::new();
        for day in 0..params.history_days {
            let start = if rng.gen_bool(ev.daytime_probability) {
                rng.gen_range(8.0..15.0)
            } else {
                habits.arrival + rng.gen_range(-ev.arrival_jitter..=ev.arrival_jitter)
            };
            let energy = (habits.energy * rng.gen_range(0.6..1.4)).max(0.5);
            let profile = charging_block(hours, start, energy, habits.power);
            for (u, p) in upper.iter_mut().zip(&profile) {
                *u = u.max(*p);
            }
            if day == params.day {
                today = profile;
            }
        }
        consumers.push(ScenarioConsumer {
            id: format!("ev{user:02}"),
            energy: today.iter().sum(),
            omega: None,
            preferred: today,
            lower: vec![0.0; hours],
            upper,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(NONFLEX_STREAM + params.day as u64);
    let homes = params.users as f64 / 30.0;
    let day_level = rng.gen_range(0.9..1.1);
    let nonflexible = (0..hours)
        .map(|h| {
            let t = (h as f64 + 0.5) * slot;
            let noise = 1.0 + rng.gen_range(-0.06..0.06);
            round3(homes * slot * (17.8 + 41.1 * background_shape(t)) * day_level * noise)
        })
        .collect();

    let tariff = params
        .tariff
        .unwrap_or_else(|| TariffPoints::reference_for(params.users));
    let curve = fit_price_curve(&tariff)?;
    let file = ScenarioFile {
        meta: ScenarioMeta {
            scenario_id: format!("synthetic-s{seed}-d{:02}", params.day),
            hours,
            cost: CostCoefficients {
                a0: curve.a0,
                a1: curve.a1,
                a2: curve.a2,
            },
            seed: Some(seed),
            day: Some(params.day),
        },
        nonflexible,
        consumers,
    };
    file.validate()?;
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_seed() {
        let p = SyntheticParams::new(8, 24, 3);
        assert_eq!(
            generate_synthetic_scenario(11, &p).unwrap(),
            generate_synthetic_scenario(11, &p).unwrap()
        );
        assert_ne!(
            generate_synthetic_scenario(11, &p).unwrap(),
            generate_synthetic_scenario(12, &p).unwrap()
        );
    }

    #[test]
    fn charging_block_is_contiguous() {
        let b = charging_block(24, 22.5, 10.0, 3.3);
        assert_eq!(&b[22..24], &[3.3, 3.3]);
        assert_eq!(b[0], 3.3);
        assert!((b[1] - 0.1).abs() < 1e-12);
        assert!((b.iter().sum::<f64>() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn generated_days_validate() {
        for day in [0, 9, 30] {
            for hours in [2, 12, 24] {
                let f = generate_synthetic_scenario(5, &SyntheticParams::new(30, hours, day)).unwrap();
                f.validate().unwrap();
                assert!(f.consumers.iter().all(|c| c.energy > 0.0));
            }
        }
        assert!(generate_synthetic_scenario(5, &SyntheticParams::new(0, 24, 0)).is_err());
        assert!(generate_synthetic_scenario(5, &SyntheticParams::new(3, 24, 31)).is_err());
    }

    #[test]
    fn background_load_is_realistic() {
        let f = generate_synthetic_scenario(1, &SyntheticParams::new(30, 24, 0)).unwrap();
        let nf = &f.nonflexible;
        let min = nf.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = nf.iter().cloned().fold(0.0, f64::max);
        assert!(min > 10.0 && min < 25.0, "{min}");
        assert!(max > 45.0 && max < 70.0, "{max}");
    }
}
