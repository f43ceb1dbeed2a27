//! Built-in example problems.
//!
//! Every builtin ships with its default grid (401 nodes in 1D, 101x101 in
//! 2D, kink points forced onto the grid) and with any storage functions and
//! analytic fixed points known for it, attached as named functions.

use crate::exprlang::Expr;

use super::{
    ControlInterval, Equilibrium, FunctionRole, GridSpec, NamedFunction, ProblemError,
    ProblemSpec,
};

const KINKS: [f64; 7] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];
const NODES_1D: usize = 401;
const NODES_2D: usize = 101;
const CONTROL_SAMPLES: usize = 201;

/// Name, one-line description and category of a builtin.
#[derive(Debug, Clone, Copy)]
pub struct BuiltinInfo {
    pub name: &'static str,
    pub tag: &'static str,
    pub description: &'static str,
}

pub const BUILTINS: &[BuiltinInfo] = &[
    BuiltinInfo {
        name: "bilinear-lsc",
        tag: "regularity",
        description: "x+ = x(1+u), u in [-2,0]; lower semicontinuous fixed point",
    },
    BuiltinInfo {
        name: "bilinear-unbounded",
        tag: "regularity",
        description: "x+ = xu on [0,1], u in [1/2,1]; zero average cost, unbounded total cost",
    },
    BuiltinInfo {
        name: "cubic-autonomous",
        tag: "regularity",
        description: "x+ = 1.5x - 0.5x^3 with zero cost; continuous and discontinuous fixed points",
    },
    BuiltinInfo {
        name: "logistic-chaos",
        tag: "complex-regime",
        description: "logistic map x+ = ux(1-x); optimal regime is chaotic at u = 18/5",
    },
    BuiltinInfo {
        name: "lq-discounted",
        tag: "discounting",
        description: "x+ = (x+u)/2, cost (x-1)^2 + u^2 with discount factor",
    },
    BuiltinInfo {
        name: "nonunique-eps",
        tag: "non-uniqueness",
        description: "x+ = -x+u, cost eps*x + |u|; a family of Bellman solutions",
    },
    BuiltinInfo {
        name: "pwl-shifted",
        tag: "shift-recovery",
        description: "piecewise-linear cost with optimal average -7/2",
    },
    BuiltinInfo {
        name: "pwl-zero-avg",
        tag: "terminal-penalty",
        description: "x+ = -x+u, piecewise-linear cost with optimal average 0 and period-2 optimum",
    },
    BuiltinInfo {
        name: "rotation-2d",
        tag: "complex-regime",
        description: "2D rotation with input, period-4 free response",
    },
    BuiltinInfo {
        name: "two-policies",
        tag: "non-uniqueness",
        description: "x+ = x+u on [-1,1], cost 1-|x|+|u|/2; two optimal equilibria",
    },
    BuiltinInfo {
        name: "usc-modified",
        tag: "regularity",
        description: "x+ = u(1.5x - 0.5x^3) on [0,1]; upper semicontinuous fixed point",
    },
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|b| b.name)
}

/// Parameters of the parameterised builtins.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinParams {
    /// Cost slope of `nonunique-eps` (default 0.1).
    pub epsilon: Option<f64>,
    /// Discount factor of `lq-discounted` (default 0.9).
    pub discount: Option<f64>,
}

pub fn builtin(name: &str) -> Result<ProblemSpec, ProblemError> {
    builtin_with(name, BuiltinParams::default())
}

fn e(src: &str) -> Expr {
    Expr::parse(src).expect("builtin expression parses")
}

fn kinks_in(lo: f64, hi: f64) -> Vec<f64> {
    KINKS.iter().copied().filter(|k| (lo..=hi).contains(k)).collect()
}

struct Builder {
    spec: ProblemSpec,
}

impl Builder {
    fn scalar(name: &str, lo: f64, hi: f64, f: &str, cost: &str, u_lo: &str, u_hi: &str) -> Builder {
        Builder {
            spec: ProblemSpec {
                name: name.to_string(),
                dim: 1,
                bounds: vec![(lo, hi)],
                dynamics: vec![e(f)],
                cost: e(cost),
                control: ControlInterval::new(e(u_lo), e(u_hi), CONTROL_SAMPLES),
                discount: None,
                storage: None,
                equilibrium: None,
                shift_c: None,
                grid: GridSpec {
                    nodes: vec![NODES_1D],
                    mandatory: vec![kinks_in(lo, hi)],
                },
                attachments: Vec::new(),
            },
        }
    }

    fn controls(mut self, mandatory: &[f64]) -> Builder {
        self.spec.control.mandatory.extend_from_slice(mandatory);
        self
    }

    fn attach(mut self, f: NamedFunction) -> Builder {
        self.spec.attachments.push(f);
        self
    }

    fn shift(mut self, c: f64) -> Builder {
        self.spec.shift_c = Some(c);
        self
    }

    fn equilibrium(mut self, x: &[f64], u: f64) -> Builder {
        self.spec.equilibrium = Some(Equilibrium { x: x.to_vec(), u });
        self
    }
}

fn lsc_fixed_point(x: &[f64]) -> f64 {
    if x[0] <= 0.0 {
        0.0
    } else {
        1.0 + x[0]
    }
}

fn cubic_min_limit(x: &[f64]) -> f64 {
    if x[0] < 0.0 {
        -1.0
    } else {
        x[0]
    }
}

fn cubic_max_limit(x: &[f64]) -> f64 {
    if x[0] > 0.0 {
        1.0
    } else {
        x[0]
    }
}

fn usc_fixed_point(x: &[f64]) -> f64 {
    if x[0] > 0.0 {
        x[0] - 2.0
    } else {
        0.0
    }
}

const LAMBDA1: &str = "min(abs(x1-1) + 1/2, abs(x1+1)) / 2";
const LAMBDA2: &str = "-min(abs(x1+1) + 1/4, abs(x1-1) - 1/4, 2*abs(x1+1))";
const NEG_SIN: &str = "-sin(x1)";

pub fn builtin_with(name: &str, params: BuiltinParams) -> Result<ProblemSpec, ProblemError> {
    use FunctionRole::*;
    let b = match name {
        "pwl-zero-avg" => Builder::scalar(
            name,
            -2.0,
            2.0,
            "-x1 + u",
            "min(abs(x1-1) - 1/4, abs(x1+1) + 1/4) + abs(u)",
            "-2 + x1",
            "2 + x1",
        )
        .controls(&[0.0])
        .shift(0.0)
        .attach(NamedFunction::expr("lambda1", Storage, LAMBDA1))
        .attach(NamedFunction::expr("lambda2", Storage, LAMBDA2)),
        "pwl-shifted" => Builder::scalar(
            name,
            -2.0,
            2.0,
            "-x1 + u",
            "min(abs(x1-1) - 15/4, abs(x1+1) - 13/4) + abs(u)",
            "-2 + x1",
            "2 + x1",
        )
        .controls(&[0.0])
        .shift(-3.5)
        .attach(NamedFunction::expr("lambda1", Storage, LAMBDA1))
        .attach(NamedFunction::expr("neg-sin", Initial, NEG_SIN)),
        "nonunique-eps" => {
            let eps = params.epsilon.unwrap_or(0.1);
            let mut b = Builder::scalar(
                name,
                -2.0,
                2.0,
                "-x1 + u",
                &format!("{eps} * x1 + abs(u)"),
                "-2 + x1",
                "2 + x1",
            )
            .controls(&[0.0])
            .equilibrium(&[0.0], 0.0);
            for (label, alpha) in [("psi-a0", 0.0), ("psi-a0.3", 0.3), ("psi-a0.6", 0.6)] {
                b = b.attach(NamedFunction::expr(
                    label,
                    FixedPoint,
                    &format!("{alpha} * abs(x1) + {eps} * x1 / 2"),
                ));
            }
            b
        }
        "two-policies" => Builder::scalar(
            name,
            -1.0,
            1.0,
            "x1 + u",
            "1 - abs(x1) + abs(u)/2",
            "-1 - x1",
            "1 - x1",
        )
        .controls(&[0.0])
        .attach(NamedFunction::expr("psi1", FixedPoint, "1 - abs(x1) + (1 + x1)/2"))
        .attach(NamedFunction::expr("psi2", FixedPoint, "1 - abs(x1) + (1 - x1)/2"))
        .attach(NamedFunction::expr("psi-min", FixedPoint, "3/2 * (1 - abs(x1))")),
        "bilinear-lsc" => Builder::scalar(
            name,
            -2.0,
            2.0,
            "x1 * (1 + u)",
            "max(0, x1) + abs(u)",
            "-2",
            "0",
        )
        .controls(&[-1.0, 0.0])
        .shift(0.0)
        .attach(NamedFunction::native("psi-lsc", FixedPoint, lsc_fixed_point))
        .attach(NamedFunction::expr("zero", Storage, "0")),
        "bilinear-unbounded" => Builder::scalar(
            name,
            0.0,
            1.0,
            "x1 * u",
            "abs(u - 1) + abs(x1)",
            "1/2",
            "1",
        )
        .controls(&[1.0])
        .shift(0.0)
        .equilibrium(&[0.0], 1.0)
        .attach(NamedFunction::expr("zero", Storage, "0")),
        "cubic-autonomous" => {
            Builder::scalar(name, -1.0, 1.0, "3/2*x1 - 1/2*x1^3", "0", "0", "0")
                .attach(NamedFunction::expr("identity", Initial, "x1"))
                .attach(NamedFunction::native("psi-hat", FixedPoint, cubic_min_limit))
                .attach(NamedFunction::native("psi-check", FixedPoint, cubic_max_limit))
        }
        "usc-modified" => Builder::scalar(
            name,
            0.0,
            1.0,
            "u * (3/2*x1 - 1/2*x1^3)",
            "abs(u - 1) - u * (3/2*x1 - 1/2*x1^3) + x1",
            "0",
            "1",
        )
        .controls(&[1.0])
        .attach(NamedFunction::native("psi-bar", FixedPoint, usc_fixed_point))
        .attach(NamedFunction::expr("identity", FixedPoint, "x1"))
        .attach(NamedFunction::expr("neg-identity", Initial, "-x1")),
        "logistic-chaos" => Builder::scalar(
            name,
            0.0,
            1.0,
            "u * x1 * (1 - x1)",
            "x1^2 - (u * x1 * (1 - x1))^2 + abs(u - 18/5)",
            "0",
            "4",
        )
        .controls(&[3.6])
        .shift(0.0)
        .equilibrium(&[0.0], 3.6)
        .attach(NamedFunction::expr("neg-square", Storage, "-x1^2"))
        .attach(NamedFunction::expr("square", FixedPoint, "x1^2"))
        .attach(NamedFunction::expr("sin4", Initial, "sin(4*x1)")),
        "rotation-2d" => {
            let spec = ProblemSpec {
                name: name.to_string(),
                dim: 2,
                bounds: vec![(-1.0, 1.0), (-1.0, 1.0)],
                dynamics: vec![e("x2 + u"), e("-x1")],
                cost: e("abs(u) + x1^2 - abs(x1)/2"),
                // 101 samples keep x1+ on the 101-node lattice.
                control: ControlInterval::new(e("-1 - x2"), e("1 - x2"), NODES_2D),
                discount: None,
                storage: None,
                equilibrium: Some(Equilibrium {
                    x: vec![0.0, 0.0],
                    u: 0.0,
                }),
                shift_c: None,
                grid: GridSpec {
                    nodes: vec![NODES_2D, NODES_2D],
                    mandatory: vec![kinks_in(-1.0, 1.0), kinks_in(-1.0, 1.0)],
                },
                attachments: Vec::new(),
            };
            Builder { spec }.controls(&[0.0])
        }
        "lq-discounted" => {
            let gamma = params.discount.unwrap_or(0.9);
            let mut b = Builder::scalar(
                name,
                -2.0,
                2.0,
                "(x1 + u) / 2",
                "(x1 - 1)^2 + u^2",
                "-2",
                "2",
            )
            .controls(&[0.5])
            .equilibrium(&[0.5], 0.5);
            b.spec.discount = Some(gamma);
            b
        }
        other => return Err(ProblemError::UnknownBuiltin(other.to_string())),
    };
    Ok(b.spec)
}

/// Closed-form discounted LQ solution for `lq-discounted`:
/// `J(x) = a x^2 + b x + d`, feedback `u(x) = -(b g + a g x)/(a g + 4)`.
/// `a` is the positive root of `g a^2 + (4 - 2g) a - 4 = 0`, i.e.
/// `(g - 2 + sqrt(g^2 + 4)) / g`; the closed-loop equilibrium is `g/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqClosedForm {
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub d: f64,
}

impl LqClosedForm {
    pub fn new(gamma: f64) -> LqClosedForm {
        let a = (gamma - 2.0 + (gamma * gamma + 4.0).sqrt()) / gamma;
        let b = -(2.0 * a * gamma + 8.0) / (a * gamma + 4.0 - 2.0 * gamma);
        let d = (4.0 * a * gamma + 16.0 - b * b * gamma * gamma)
            / ((4.0 * a * gamma + 16.0) * (1.0 - gamma));
        LqClosedForm { gamma, a, b, d }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.a * x * x + self.b * x + self.d
    }

    pub fn feedback(&self, x: f64) -> f64 {
        -(self.b * self.gamma + self.a * self.gamma * x) / (self.a * self.gamma + 4.0)
    }

    /// Equilibrium of the closed loop.
    pub fn equilibrium(&self) -> f64 {
        -self.b * self.gamma / (2.0 * self.a * self.gamma + 4.0)
    }

    /// Feedback as an expression in `x1`, for simulation.
    pub fn feedback_expr(&self) -> Expr {
        let g = self.gamma;
        Expr::parse(&format!(
            "-({b} * {g} + {a} * {g} * x1) / ({a} * {g} + 4)",
            a = self.a,
            b = self.b
        ))
        .expect("feedback expression parses")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn costs_and_dynamics_match_definitions() {
        let p = builtin("pwl-zero-avg").unwrap();
        assert_eq!(p.stage_cost(&[1.0], 0.0).unwrap(), -0.25);
        let p = builtin("logistic-chaos").unwrap();
        assert_eq!(p.successor(&[0.5], 4.0).unwrap(), vec![1.0]);
        let p = builtin("rotation-2d").unwrap();
        assert_eq!(p.successor(&[0.3, 0.7], 0.0).unwrap(), vec![0.7, -0.3]);
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(builtin("nope"), Err(ProblemError::UnknownBuiltin(_))));
    }

    #[test]
    fn names_sorted() {
        let names: Vec<_> = builtin_names().collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        for n in names {
            builtin(n).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn lq_closed_form_solves_discounted_bellman_equation() {
        // J(x) = min_u l(x,u) + g J((x+u)/2); at the minimiser the first-order
        // condition holds and both sides agree.
        for g in [0.5, 0.9, 0.99] {
            let lq = LqClosedForm::new(g);
            for x in [-1.0, -0.3, 0.0, 0.7, 1.5] {
                let u = lq.feedback(x);
                let rhs = (x - 1.0_f64).powi(2) + u * u + g * lq.value((x + u) / 2.0);
                assert!((lq.value(x) - rhs).abs() < 1e-10, "g={g} x={x}");
                let h = 1e-5;
                let q = |u: f64| u * u + g * lq.value((x + u) / 2.0);
                assert!(q(u) <= q(u + h) && q(u) <= q(u - h));
            }
            // the equilibrium is a fixed point of the closed loop
            let xe = lq.equilibrium();
            assert!(((xe + lq.feedback(xe)) / 2.0 - xe).abs() < 1e-12);
            assert!((xe - g / 2.0).abs() < 1e-12);
        }
    }
}
