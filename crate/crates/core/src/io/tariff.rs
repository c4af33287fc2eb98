//! Quadratic provider cost fitted to three (load, unit price) tariff points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference tariff: off-peak, base and peak unit prices (¢/kWh) paired with
/// the minimum, mean and maximum hourly nonflexible load (kWh) of 30 homes.
pub const REFERENCE_TARIFF: [(f64, f64); 3] = [(17.8, 5.5), (33.8, 8.0), (58.9, 14.0)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TariffPoints {
    points: [(f64, f64); 3],
}

impl TariffPoints {
    /// Three `(load, unit_price)` pairs with distinct positive loads.
    pub fn new(points: [(f64, f64); 3]) -> Result<Self> {
        for (load, price) in points {
            if !(load > 0.0) || !load.is_finite() || !price.is_finite() {
                return Err(Error::InvalidInstance(format!(
                    "tariff point ({load}, {price}) needs a finite positive load"
                )));
            }
        }
        for i in 0..3 {
            for j in i + 1..3 {
                if points[i].0 == points[j].0 {
                    return Err(Error::SingularTariff);
                }
            }
        }
        Ok(Self { points })
    }

    pub fn reference() -> Self {
        Self {
            points: REFERENCE_TARIFF,
        }
    }

    /// Reference tariff with its loads rescaled from 30 homes to `n_homes`.
    pub fn reference_for(n_homes: usize) -> Self {
        let scale = n_homes as f64 / 30.0;
        Self {
            points: REFERENCE_TARIFF.map(|(l, p)| (l * scale, p)),
        }
    }

    pub fn points(&self) -> [(f64, f64); 3] {
        self.points
    }
}

/// `C(L) = a0 + a1 L + a2 L^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceCurve {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

impl PriceCurve {
    pub fn cost(&self, load: f64) -> f64 {
        self.a0 + self.a1 * load + self.a2 * load * load
    }

    pub fn unit_price(&self, load: f64) -> f64 {
        self.cost(load) / load
    }
}

/// Interpolates the cost curve whose per-unit price `C(L)/L` matches the
/// three tariff points.
pub fn fit_price_curve(tariff: &TariffPoints) -> Result<PriceCurve> {
    let mut m = [[0.0; 4]; 3];
    for (row, (load, price)) in m.iter_mut().zip(tariff.points) {
        *row = [1.0, load, load * load, price * load];
    }
    // Gaussian elimination with partial pivoting on the augmented system.
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        if m[pivot][col].abs() < 1e-12 * m[pivot].iter().fold(0.0_f64, |a, v| a.max(v.abs())) {
            return Err(Error::SingularTariff);
        }
        m.swap(col, pivot);
        for r in col + 1..3 {
            let f = m[r][col] / m[col][col];
            for c in col..4 {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut coef = [0.0; 3];
    for r in (0..3).rev() {
        let tail: f64 = (r + 1..3).map(|c| m[r][c] * coef[c]).sum();
        coef[r] = (m[r][3] - tail) / m[r][r];
    }
    let curve = PriceCurve {
        a0: coef[0],
        a1: coef[1],
        a2: coef[2],
    };
    if !(curve.a2 > 0.0) {
        return Err(Error::NonConvexTariff(curve.a2));
    }
    Ok(curve)
}
