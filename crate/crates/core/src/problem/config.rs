//! JSON problem files.
//!
//! ```json
//! {
//!   "dim": 1,
//!   "box": [[-2, 2]],
//!   "dynamics": ["-x1 + u"],
//!   "cost": "min(abs(x1-1) - 1/4, abs(x1+1) + 1/4) + abs(u)",
//!   "control": {"lo": "-2 + x1", "hi": "2 + x1", "samples": 201, "mandatory": [0]},
//!   "storage": "min(abs(x1-1) + 1/2, abs(x1+1)) / 2",
//!   "shift_c": 0,
//!   "grid": {"nodes": [401], "mandatory": [[-1, 0, 1]]}
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::exprlang::Expr;

use super::{ControlInterval, Equilibrium, GridSpec, Model, ProblemError, ProblemSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub dim: usize,
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    pub dynamics: Vec<String>,
    pub cost: String,
    pub control: ControlConfig,
    #[serde(default)]
    pub storage: Option<String>,
    #[serde(default)]
    pub shift_c: Option<f64>,
    #[serde(default)]
    pub discount: Option<f64>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub equilibrium: Option<EquilibriumConfig>,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub lo: String,
    pub hi: String,
    pub samples: usize,
    #[serde(default)]
    pub mandatory: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nodes: Vec<usize>,
    #[serde(default)]
    pub mandatory: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumConfig {
    pub x: Vec<f64>,
    pub u: f64,
}

/// Reads a problem file, parses every expression and runs the control
/// invariance sweep on the configured grid.
pub fn load_config(path: impl AsRef<Path>) -> Result<ProblemSpec, ProblemError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut spec = parse_config(&text)?;
    if spec.name.is_empty() {
        spec.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Model::new(&spec)?;
    Ok(spec)
}

/// Parses a problem file without sweeping the grid.
pub fn parse_config(text: &str) -> Result<ProblemSpec, ProblemError> {
    let cfg: ConfigFile =
        serde_json::from_str(text).map_err(|e| ProblemError::Config(e.to_string()))?;
    cfg.into_spec()
}

impl ConfigFile {
    pub fn into_spec(self) -> Result<ProblemSpec, ProblemError> {
        let dim = self.dim;
        let parse = |what: &str, src: &str| {
            Expr::parse_with_dim(src, dim).map_err(|source| ProblemError::Parse {
                what: what.to_string(),
                source,
            })
        };
        let dynamics = self
            .dynamics
            .iter()
            .enumerate()
            .map(|(i, s)| parse(&format!("dynamics[{i}]"), s))
            .collect::<Result<Vec<_>, _>>()?;
        let cost = parse("cost", &self.cost)?;
        let control = ControlInterval {
            lo: parse("control.lo", &self.control.lo)?,
            hi: parse("control.hi", &self.control.hi)?,
            samples: self.control.samples,
            mandatory: self.control.mandatory,
        };
        let storage = self.storage.as_deref().map(|s| parse("storage", s)).transpose()?;
        let default_nodes = if dim == 1 { 401 } else { 101 };
        let grid = match self.grid {
            Some(g) => GridSpec {
                nodes: g.nodes,
                mandatory: g.mandatory,
            },
            None => GridSpec {
                nodes: vec![default_nodes; dim],
                mandatory: Vec::new(),
            },
        };
        let spec = ProblemSpec {
            name: self.name.unwrap_or_default(),
            dim,
            bounds: self.bounds.iter().map(|b| (b[0], b[1])).collect(),
            dynamics,
            cost,
            control,
            discount: self.discount,
            storage,
            equilibrium: self.equilibrium.map(|e| Equilibrium { x: e.x, u: e.u }),
            shift_c: self.shift_c,
            grid,
            attachments: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escaping_dynamics_rejected() {
        let text = r#"{
            "dim": 1, "box": [[-1, 1]], "dynamics": ["x1 + 10*u"], "cost": "abs(u)",
            "control": {"lo": "-1", "hi": "1", "samples": 5},
            "grid": {"nodes": [11]}
        }"#;
        let spec = parse_config(text).unwrap();
        match Model::new(&spec) {
            Err(ProblemError::Invariance { count, worst }) => {
                assert!(count > 0);
                assert_eq!(worst.image.len(), 1);
                assert!(worst.distance >= 9.0);
            }
            other => panic!("expected invariance error, got {other:?}"),
        }
    }

    #[test]
    fn missing_cost_is_a_schema_error() {
        let text = r#"{"dim": 1, "box": [[0, 1]], "dynamics": ["x1"],
            "control": {"lo": "0", "hi": "0", "samples": 1}}"#;
        match parse_config(text) {
            Err(ProblemError::Config(msg)) => assert!(msg.contains("cost"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn expression_errors_name_the_field() {
        let text = r#"{"dim": 1, "box": [[0, 1]], "dynamics": ["x1 +"], "cost": "0",
            "control": {"lo": "0", "hi": "0", "samples": 1}}"#;
        match parse_config(text) {
            Err(ProblemError::Parse { what, .. }) => assert_eq!(what, "dynamics[0]"),
            other => panic!("unexpected {other:?}"),
        }
        let text = r#"{"dim": 1, "box": [[0, 1]], "dynamics": ["x2"], "cost": "0",
            "control": {"lo": "0", "hi": "0", "samples": 1}}"#;
        assert!(parse_config(text).is_err());
    }
}
