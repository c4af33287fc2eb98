#![allow(dead_code)]

use std::path::{Path, PathBuf};

use drgame::model::{ConsumerSpec, CostModel, GameInstance, Mechanism};
use drgame::solver::DiagonalQp;
use rand::Rng;

pub fn bundled_scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/synthetic-n30-h24.csv")
}

/// Random instance with up to `max_users` consumers over `2..=max_hours`
/// hours. Some hours are pinned (equal bounds) and some lower bounds are
/// positive; every consumer has positive energy.
pub fn random_instance<R: Rng>(rng: &mut R, max_users: usize, max_hours: usize) -> GameInstance {
    let hours = rng.gen_range(2..=max_hours);
    let users = rng.gen_range(1..=max_users);
    let nonflexible = (0..hours).map(|_| rng.gen_range(0.0..20.0)).collect();
    let cost = CostModel::new(
        rng.gen_range(0.0..50.0),
        rng.gen_range(-3.0..3.0),
        rng.gen_range(0.05..1.0),
        nonflexible,
    )
    .unwrap();
    let consumers = (0..users)
        .map(|n| loop {
            let lower: Vec<f64> = (0..hours)
                .map(|_| if rng.gen_bool(0.3) { rng.gen_range(0.0..0.5) } else { 0.0 })
                .collect();
            let upper: Vec<f64> = lower
                .iter()
                .map(|l| if rng.gen_bool(0.1) { *l } else { l + rng.gen_range(0.2..3.0) })
                .collect();
            let preferred: Vec<f64> = lower
                .iter()
                .zip(&upper)
                .map(|(l, u)| l + rng.gen_range(0.0..=1.0) * (u - l))
                .collect();
            let energy: f64 = preferred.iter().sum();
            if energy > 0.1 {
                break ConsumerSpec::new(
                    format!("c{n}"),
                    preferred,
                    energy,
                    lower,
                    upper,
                    rng.gen_range(0.2..5.0),
                )
                .unwrap();
            }
        })
        .collect();
    let mechanism = if rng.gen_bool(0.5) {
        Mechanism::DailyProportional
    } else {
        Mechanism::HourlyProportional
    };
    GameInstance::new(consumers, cost, rng.gen_range(0.0..1.0), mechanism).unwrap()
}

pub fn random_qp<R: Rng>(rng: &mut R, hours: usize) -> DiagonalQp {
    let lower: Vec<f64> = (0..hours).map(|_| rng.gen_range(0.0..1.0)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + rng.gen_range(0.2..2.0)).collect();
    let budget = rng.gen_range(lower.iter().sum::<f64>()..=upper.iter().sum::<f64>());
    DiagonalQp::new(
        (0..hours).map(|_| rng.gen_range(0.1..5.0)).collect(),
        (0..hours).map(|_| rng.gen_range(-5.0..5.0)).collect(),
        budget,
        lower,
        upper,
    )
    .unwrap()
}

/// Minimizer over a grid of step `step` on the first `H - 1` coordinates,
/// the last one fixed by the budget.
pub fn grid_minimizer(qp: &DiagonalQp, step: f64) -> Vec<f64> {
    let h = qp.dim();
    let (lo, hi) = (qp.lower(), qp.upper());
    let mut best = (f64::INFINITY, vec![0.0; h]);
    let mut x = vec![0.0; h];
    let steps: Vec<usize> = (0..h - 1).map(|k| ((hi[k] - lo[k]) / step).floor() as usize + 1).collect();
    let mut idx = vec![0usize; h - 1];
    loop {
        for k in 0..h - 1 {
            x[k] = (lo[k] + idx[k] as f64 * step).min(hi[k]);
        }
        let rest = qp.budget() - x[..h - 1].iter().sum::<f64>();
        if rest >= lo[h - 1] - 1e-12 && rest <= hi[h - 1] + 1e-12 {
            x[h - 1] = rest;
            let v = qp.objective(&x);
            if v < best.0 {
                best = (v, x.clone());
            }
        }
        let mut k = 0;
        loop {
            if k == h - 1 {
                return best.1;
            }
            idx[k] += 1;
            if idx[k] <= steps[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}
