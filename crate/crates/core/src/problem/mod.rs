//! Optimal control problems on compact boxes: specification, sampling onto
//! grids, built-in examples, configuration files and simulation.

mod builtins;
mod config;
mod grid;
mod model;
mod simulate;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::exprlang::{EvalError, Expr, ParseError};

pub use builtins::{
    builtin, builtin_names, builtin_with, BuiltinInfo, BuiltinParams, LqClosedForm, BUILTINS,
};
pub use config::{load_config, parse_config, ConfigFile};
pub use grid::{project, Grid, GridFunction, PROJECTION_EPS};
pub use model::{InvarianceViolation, Model, Transition};
pub use simulate::{simulate, Policy, Trajectory};

pub(crate) use grid::{merge_points, project_in_place};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("mandatory point {point} lies outside [{lo}, {hi}]")]
    MandatoryOutsideBox { point: f64, lo: f64, hi: f64 },
    #[error("{what}: {source}")]
    Parse {
        what: String,
        #[source]
        source: ParseError,
    },
    #[error("evaluating {what} at x={x:?}, u={u}: {source}")]
    Eval {
        what: String,
        x: Vec<f64>,
        u: f64,
        #[source]
        source: EvalError,
    },
    #[error("empty control interval at x={x:?}: lo={lo} > hi={hi}")]
    EmptyControlSet { x: Vec<f64>, lo: f64, hi: f64 },
    #[error(
        "control invariance violated at {count} sample(s); worst: x={:?}, u={}, f(x,u)={:?}",
        worst.x, worst.u, worst.image
    )]
    Invariance {
        count: usize,
        worst: InvarianceViolation,
    },
    #[error("unknown builtin problem `{0}`")]
    UnknownBuiltin(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The state-dependent control interval `[lo(x), hi(x)]`, sampled with
/// `samples` uniform points plus any mandatory points that fall inside it.
#[derive(Debug, Clone)]
pub struct ControlInterval {
    pub lo: Expr,
    pub hi: Expr,
    pub samples: usize,
    pub mandatory: Vec<f64>,
}

impl ControlInterval {
    pub fn new(lo: Expr, hi: Expr, samples: usize) -> ControlInterval {
        ControlInterval {
            lo,
            hi,
            samples,
            mandatory: Vec::new(),
        }
    }

    pub fn with_mandatory(mut self, points: &[f64]) -> ControlInterval {
        self.mandatory.extend_from_slice(points);
        self
    }

    /// Sorted control samples at state `x`. A degenerate interval yields a
    /// single sample.
    pub fn samples_at(&self, x: &[f64]) -> Result<Vec<f64>, ProblemError> {
        let eval = |e: &Expr, what: &str| {
            e.eval(x, 0.0).map_err(|source| ProblemError::Eval {
                what: what.to_string(),
                x: x.to_vec(),
                u: 0.0,
                source,
            })
        };
        let lo = eval(&self.lo, "control lower bound")?;
        let hi = eval(&self.hi, "control upper bound")?;
        if lo > hi {
            return Err(ProblemError::EmptyControlSet {
                x: x.to_vec(),
                lo,
                hi,
            });
        }
        if lo == hi || self.samples < 2 {
            return Ok(vec![lo]);
        }
        let m = (self.samples - 1) as f64;
        let uniform: Vec<f64> = (0..self.samples)
            .map(|k| {
                if k == 0 {
                    lo
                } else if k == self.samples - 1 {
                    hi
                } else {
                    (lo * (m - k as f64) + hi * k as f64) / m
                }
            })
            .collect();
        let inside: Vec<f64> = self
            .mandatory
            .iter()
            .copied()
            .filter(|p| (lo..=hi).contains(p))
            .collect();
        Ok(merge_points(&uniform, &inside, hi - lo))
    }
}

/// An equilibrium pair `(x_e, u_e)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub x: Vec<f64>,
    pub u: f64,
}

/// Grid resolution: node counts per dimension and mandatory node
/// coordinates per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub nodes: Vec<usize>,
    pub mandatory: Vec<Vec<f64>>,
}

/// How a labelled function attached to a problem is evaluated.
#[derive(Clone)]
pub enum FunctionSource {
    Expr(Expr),
    Native(fn(&[f64]) -> f64),
}

/// A named function shipped with a problem, e.g. a storage function or an
/// analytic fixed point.
#[derive(Clone)]
pub struct NamedFunction {
    pub name: String,
    pub role: FunctionRole,
    pub source: FunctionSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionRole {
    Storage,
    FixedPoint,
    Initial,
}

impl NamedFunction {
    pub fn expr(name: &str, role: FunctionRole, src: &str) -> NamedFunction {
        NamedFunction {
            name: name.to_string(),
            role,
            source: FunctionSource::Expr(Expr::parse(src).expect("builtin expression parses")),
        }
    }

    pub fn native(name: &str, role: FunctionRole, f: fn(&[f64]) -> f64) -> NamedFunction {
        NamedFunction {
            name: name.to_string(),
            role,
            source: FunctionSource::Native(f),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        match &self.source {
            FunctionSource::Expr(e) => e.eval(x, 0.0),
            FunctionSource::Native(f) => Ok(f(x)),
        }
    }

    pub fn sample(&self, grid: &Arc<Grid>) -> Result<GridFunction, EvalError> {
        GridFunction::try_from_fn(grid.clone(), |x| self.eval(x))
    }
}

impl fmt::Debug for NamedFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let src = match &self.source {
            FunctionSource::Expr(e) => e.to_string(),
            FunctionSource::Native(_) => "<native>".to_string(),
        };
        f.debug_struct("NamedFunction")
            .field("name", &self.name)
            .field("role", &self.role)
            .field("source", &src)
            .finish()
    }
}

/// A discrete-time optimal control problem `x+ = f(x,u)` with stage cost
/// `l(x,u)` on a box, with a scalar control in `[lo(x), hi(x)]`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub dim: usize,
    pub bounds: Vec<(f64, f64)>,
    pub dynamics: Vec<Expr>,
    pub cost: Expr,
    pub control: ControlInterval,
    /// Continuation weight; `None` means undiscounted.
    pub discount: Option<f64>,
    pub storage: Option<Expr>,
    pub equilibrium: Option<Equilibrium>,
    pub shift_c: Option<f64>,
    pub grid: GridSpec,
    pub attachments: Vec<NamedFunction>,
}

impl ProblemSpec {
    pub fn discount_factor(&self) -> f64 {
        self.discount.unwrap_or(1.0)
    }

    pub fn build_grid(&self) -> Result<Grid, ProblemError> {
        Grid::build(&self.bounds, &self.grid.nodes, &self.grid.mandatory)
    }

    /// Same problem at another resolution. Mandatory grid and control points
    /// are kept.
    pub fn with_resolution(&self, nodes: &[usize], control_samples: usize) -> ProblemSpec {
        let mut spec = self.clone();
        spec.grid.nodes = nodes.to_vec();
        spec.control.samples = control_samples;
        spec
    }

    pub fn with_discount(&self, gamma: Option<f64>) -> ProblemSpec {
        let mut spec = self.clone();
        spec.discount = gamma;
        spec
    }

    pub fn attachment(&self, name: &str) -> Option<&NamedFunction> {
        self.attachments.iter().find(|a| a.name == name)
    }

    /// Storage function: the explicit one if set, else the first attached
    /// function with the storage role.
    pub fn storage_function(&self) -> Option<NamedFunction> {
        if let Some(e) = &self.storage {
            return Some(NamedFunction {
                name: "storage".to_string(),
                role: FunctionRole::Storage,
                source: FunctionSource::Expr(e.clone()),
            });
        }
        self.attachments
            .iter()
            .find(|a| a.role == FunctionRole::Storage)
            .cloned()
    }

    pub fn stage_cost(&self, x: &[f64], u: f64) -> Result<f64, ProblemError> {
        self.cost.eval(x, u).map_err(|source| ProblemError::Eval {
            what: "stage cost".to_string(),
            x: x.to_vec(),
            u,
            source,
        })
    }

    /// Unprojected successor `f(x,u)`.
    pub fn successor(&self, x: &[f64], u: f64) -> Result<Vec<f64>, ProblemError> {
        self.dynamics
            .iter()
            .enumerate()
            .map(|(i, e)| {
                e.eval(x, u).map_err(|source| ProblemError::Eval {
                    what: format!("dynamics component {}", i + 1),
                    x: x.to_vec(),
                    u,
                    source,
                })
            })
            .collect()
    }

    /// Structural checks that do not need a grid sweep.
    pub fn validate(&self) -> Result<(), ProblemError> {
        let invalid = |m: String| Err(ProblemError::Invalid(m));
        if self.dim == 0 || self.dim > 9 {
            return invalid(format!("state dimension must be in 1..=9, got {}", self.dim));
        }
        if self.bounds.len() != self.dim {
            return invalid(format!("{} box bounds for dimension {}", self.bounds.len(), self.dim));
        }
        if self.dynamics.len() != self.dim {
            return invalid(format!(
                "{} dynamics components for dimension {}",
                self.dynamics.len(),
                self.dim
            ));
        }
        if self.grid.nodes.len() != self.dim {
            return invalid(format!("{} grid node counts for dimension {}", self.grid.nodes.len(), self.dim));
        }
        if self.control.samples == 0 {
            return invalid("control sample count must be positive".into());
        }
        if let Some(g) = self.discount {
            if !(g > 0.0 && g <= 1.0) {
                return invalid(format!("discount must lie in (0, 1], got {g}"));
            }
        }
        let parse_err = |what: &str, source: ParseError| ProblemError::Parse {
            what: what.to_string(),
            source,
        };
        for (i, e) in self.dynamics.iter().enumerate() {
            e.check_dim(self.dim)
                .map_err(|s| parse_err(&format!("dynamics component {}", i + 1), s))?;
        }
        self.cost.check_dim(self.dim).map_err(|s| parse_err("cost", s))?;
        self.control.lo.check_dim(self.dim).map_err(|s| parse_err("control lo", s))?;
        self.control.hi.check_dim(self.dim).map_err(|s| parse_err("control hi", s))?;
        if self.control.lo.uses_control() || self.control.hi.uses_control() {
            return invalid("control bounds may not depend on u".into());
        }
        if let Some(s) = &self.storage {
            s.check_dim(self.dim).map_err(|e| parse_err("storage", e))?;
        }
        if let Some(eq) = &self.equilibrium {
            if eq.x.len() != self.dim {
                return invalid("equilibrium state has the wrong dimension".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(lo: &str, hi: &str, n: usize) -> ControlInterval {
        ControlInterval::new(Expr::parse(lo).unwrap(), Expr::parse(hi).unwrap(), n)
    }

    #[test]
    fn samples_include_endpoints_and_mandatory() {
        let c = interval("-2+x1", "2+x1", 5).with_mandatory(&[0.0, 9.0]);
        let s = c.samples_at(&[0.5]).unwrap();
        assert_eq!(s.first(), Some(&-1.5));
        assert_eq!(s.last(), Some(&2.5));
        assert!(s.contains(&0.0));
        assert_eq!(s.len(), 6);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn degenerate_interval_single_sample() {
        let c = interval("0", "0", 201);
        assert_eq!(c.samples_at(&[0.3]).unwrap(), vec![0.0]);
    }

    #[test]
    fn empty_interval_is_an_error() {
        let c = interval("1", "x1", 3);
        assert!(matches!(c.samples_at(&[0.0]), Err(ProblemError::EmptyControlSet { .. })));
    }
}
