//! Scenario files: a CSV of hourly vectors plus a JSON sidecar of scalars.
//!
//! The CSV header is `kind,id,energy,omega,h0,...,h{H-1}`. Row kinds:
//!
//! * `nonflexible` — aggregate background load (exactly one row; `id`,
//!   `energy` and `omega` empty);
//! * `preferred` — a consumer's preferred profile, its energy need and an
//!   optional preference weight;
//! * `lower`, `upper` — that consumer's hourly bounds (`energy`, `omega` empty).
//!
//! The sidecar `<stem>.json` holds the scenario id, horizon, provider cost
//! coefficients and optional seed/day metadata.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConsumerSpec, CostModel, GameInstance, Mechanism};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostCoefficients {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

/// Scalar metadata stored in the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub scenario_id: String,
    pub hours: usize,
    pub cost: CostCoefficients,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub day: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConsumer {
    pub id: String,
    pub energy: f64,
    pub omega: Option<f64>,
    pub preferred: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub meta: ScenarioMeta,
    pub nonflexible: Vec<f64>,
    pub consumers: Vec<ScenarioConsumer>,
}

impl ScenarioFile {
    pub fn hours(&self) -> usize {
        self.meta.hours
    }

    pub fn cost_model(&self) -> Result<CostModel> {
        let c = self.meta.cost;
        CostModel::new(c.a0, c.a1, c.a2, self.nonflexible.clone())
    }

    pub fn has_weights(&self) -> bool {
        self.consumers.iter().all(|c| c.omega.is_some())
    }

    /// Builds the game; consumers without a weight get `default_weight`.
    pub fn instance_with_default_weight(
        &self,
        alpha: f64,
        mechanism: Mechanism,
        default_weight: f64,
    ) -> Result<GameInstance> {
        let consumers = self
            .consumers
            .iter()
            .map(|c| {
                ConsumerSpec::new(
                    c.id.clone(),
                    c.preferred.clone(),
                    c.energy,
                    c.lower.clone(),
                    c.upper.clone(),
                    c.omega.unwrap_or(default_weight),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        GameInstance::new(consumers, self.cost_model()?, alpha, mechanism)
    }

    /// Builds the game; every consumer must carry a weight.
    pub fn instance(&self, alpha: f64, mechanism: Mechanism) -> Result<GameInstance> {
        if let Some(c) = self.consumers.iter().find(|c| c.omega.is_none()) {
            return Err(Error::InvalidConsumer {
                id: c.id.clone(),
                message: "no preference weight (calibrate first)".into(),
            });
        }
        self.instance_with_default_weight(alpha, mechanism, 0.0)
    }

    pub fn with_uniform_weight(&self, omega: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.consumers {
            c.omega = Some(omega);
        }
        out
    }

    /// Checks every invariant a game instance needs, reporting the CSV line of
    /// the offending row.
    pub fn validate(&self) -> Result<()> {
        self.validate_at(&PathBuf::from("<memory>"), None)
    }

    fn validate_at(&self, path: &Path, lines: Option<&BTreeMap<String, usize>>) -> Result<()> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.display().to_string(),
            line,
            message,
        };
        if self.consumers.is_empty() {
            return Err(parse_err(0, "no consumers".into()));
        }
        self.cost_model().map_err(|e| parse_err(0, e.to_string()))?;
        if self.nonflexible.len() != self.meta.hours {
            return Err(parse_err(
                0,
                format!(
                    "nonflexible row has {} hours, sidecar declares {}",
                    self.nonflexible.len(),
                    self.meta.hours
                ),
            ));
        }
        for c in &self.consumers {
            let line = lines.and_then(|l| l.get(&c.id).copied()).unwrap_or(0);
            if let Some(w) = c.omega {
                if !(w >= 0.0) {
                    return Err(parse_err(line, format!("user {}: omega {w} must be >= 0", c.id)));
                }
            }
            ConsumerSpec::new(
                c.id.clone(),
                c.preferred.clone(),
                c.energy,
                c.lower.clone(),
                c.upper.clone(),
                c.omega.unwrap_or(0.0),
            )
            .map_err(|e| parse_err(line, format!("user {}: {e}", c.id)))?;
            if c.preferred.len() != self.meta.hours {
                return Err(parse_err(line, format!("user {}: wrong number of hours", c.id)));
            }
        }
        Ok(())
    }
}

/// Path of the JSON sidecar belonging to a scenario CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn parse_number(field: &str, path: &Path, line: usize, column: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line,
        message: format!("column {column}: `{field}` is not a number"),
    })
}

/// Reads and validates a scenario CSV and its sidecar.
pub fn load_scenario(path: &Path) -> Result<ScenarioFile> {
    let csv_path = path.with_extension("csv");
    let meta: ScenarioMeta = serde_json::from_str(&fs::read_to_string(sidecar_path(&csv_path))?)?;
    let err = |line: usize, message: String| Error::Parse {
        path: csv_path.display().to_string(),
        line,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(&csv_path)?;
    let headers = reader.headers()?.clone();
    let expected: Vec<String> = ["kind", "id", "energy", "omega"]
        .into_iter()
        .map(String::from)
        .chain((0..meta.hours).map(|h| format!("h{h}")))
        .collect();
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(err(
            1,
            format!("header must be `{}` for a {}-hour horizon", expected.join(","), meta.hours),
        ));
    }

    let mut nonflexible = None;
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, ScenarioConsumer> = BTreeMap::new();
    let mut lines = BTreeMap::new();
    let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();

    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let kind = record[0].trim().to_string();
        let id = record[1].trim().to_string();
        let mut values = Vec::with_capacity(meta.hours);
        for h in 0..meta.hours {
            values.push(parse_number(&record[4 + h], &csv_path, line, &format!("h{h}"))?);
        }
        if kind == "nonflexible" {
            if nonflexible.replace(values).is_some() {
                return Err(err(line, "duplicate nonflexible row".into()));
            }
            continue;
        }
        if !matches!(kind.as_str(), "preferred" | "lower" | "upper") {
            return Err(err(line, format!("unknown row kind `{kind}`")));
        }
        if id.is_empty() {
            return Err(err(line, "missing user id".into()));
        }
        if let Some(prev) = seen.insert((id.clone(), kind.clone()), line) {
            return Err(err(
                line,
                format!("duplicate `{kind}` row for user {id} (first at line {prev})"),
            ));
        }
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            ScenarioConsumer {
                id: id.clone(),
                energy: f64::NAN,
                omega: None,
                preferred: Vec::new(),
                lower: Vec::new(),
                upper: Vec::new(),
            }
        });
        match kind.as_str() {
            "preferred" => {
                entry.energy = parse_number(&record[2], &csv_path, line, "energy")?;
                let omega = record[3].trim();
                if !omega.is_empty() {
                    entry.omega = Some(parse_number(omega, &csv_path, line, "omega")?);
                }
                entry.preferred = values;
                lines.insert(id.clone(), line);
            }
            "lower" => entry.lower = values,
            _ => entry.upper = values,
        }
    }

    let nonflexible = nonflexible.ok_or_else(|| err(0, "missing nonflexible row".into()))?;
    let mut consumers = Vec::with_capacity(order.len());
    for id in order {
        let c = rows.remove(&id).expect("id recorded on insert");
        for (kind, v) in [("preferred", &c.preferred), ("lower", &c.lower), ("upper", &c.upper)] {
            if v.is_empty() {
                return Err(err(0, format!("user {id}: missing `{kind}` row")));
            }
        }
        consumers.push(c);
    }
    let file = ScenarioFile {
        meta,
        nonflexible,
        consumers,
    };
    file.validate_at(&csv_path, Some(&lines))?;
    Ok(file)
}

/// Renders the CSV body in canonical form (shortest round-trip float text,
/// LF line endings).
pub fn render_csv(file: &ScenarioFile) -> String {
    let mut out = String::from("kind,id,energy,omega");
    for h in 0..file.meta.hours {
        out.push_str(&format!(",h{h}"));
    }
    out.push('\n');
    let mut row = |kind: &str, id: &str, energy: String, omega: String, values: &[f64]| {
        out.push_str(&format!("{kind},{id},{energy},{omega}"));
        for v in values {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    };
    row("nonflexible", "", String::new(), String::new(), &file.nonflexible);
    for c in &file.consumers {
        let omega = c.omega.map(|w| w.to_string()).unwrap_or_default();
        row("preferred", &c.id, c.energy.to_string(), omega, &c.preferred);
        row("lower", &c.id, String::new(), String::new(), &c.lower);
        row("upper", &c.id, String::new(), String::new(), &c.upper);
    }
    out
}

/// Writes `<stem>.csv` and `<stem>.json`.
pub fn write_scenario(file: &ScenarioFile, path: &Path) -> Result<()> {
    let csv_path = path.with_extension("csv");
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&csv_path, render_csv(file))?;
    let mut meta = serde_json::to_string_pretty(&file.meta)?;
    meta.push('\n');
    fs::write(sidecar_path(&csv_path), meta)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ScenarioFile {
        ScenarioFile {
            meta: ScenarioMeta {
                scenario_id: "tiny".into(),
                hours: 3,
                cost: CostCoefficients {
                    a0: 1.0,
                    a1: -0.5,
                    a2: 0.25,
                },
                seed: Some(4),
                day: None,
            },
            nonflexible: vec![10.0, 20.5, 15.0],
            consumers: vec![
                ScenarioConsumer {
                    id: "u0".into(),
                    energy: 3.0,
                    omega: Some(2.5),
                    preferred: vec![1.0, 2.0, 0.0],
                    lower: vec![0.0; 3],
                    upper: vec![2.0, 2.0, 1.0],
                },
                ScenarioConsumer {
                    id: "u1".into(),
                    energy: 0.7,
                    omega: None,
                    preferred: vec![0.1, 0.2, 0.4],
                    lower: vec![0.0, 0.1, 0.0],
                    upper: vec![1.0; 3],
                },
            ],
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.csv");
        let file = sample();
        write_scenario(&file, &path).unwrap();
        let loaded = load_scenario(&path).unwrap();
        assert_eq!(loaded, file);
        let first = fs::read_to_string(&path).unwrap();
        write_scenario(&loaded, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), first);
    }

    #[test]
    fn energy_mismatch_names_user() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut file = sample();
        file.consumers[1].energy = 5.0;
        write_scenario(&file, &path).unwrap();
        let msg = load_scenario(&path).unwrap_err().to_string();
        assert!(msg.contains("u1"), "{msg}");
        assert!(msg.contains(":6:"), "{msg}");
    }

    #[test]
    fn empty_user_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        let mut file = sample();
        file.consumers.clear();
        write_scenario(&file, &path).unwrap();
        let msg = load_scenario(&path).unwrap_err().to_string();
        assert!(msg.contains("no consumers"), "{msg}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.csv");
        let mut file = sample();
        file.consumers[1].id = "u0".into();
        write_scenario(&file, &path).unwrap();
        let msg = load_scenario(&path).unwrap_err().to_string();
        assert!(msg.contains("duplicate"), "{msg}");
    }

    #[test]
    fn instance_needs_weights() {
        let file = sample();
        assert!(file.instance(0.5, Mechanism::DailyProportional).is_err());
        let inst = file.with_uniform_weight(3.0).instance(0.5, Mechanism::DailyProportional).unwrap();
        assert_eq!(inst.consumers()[0].preference_weight(), 3.0);
        assert_eq!(inst.cost_model().linear_coeff(1), -0.5 + 2.0 * 0.25 * 20.5);
    }
}
