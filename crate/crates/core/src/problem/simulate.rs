use crate::exprlang::Expr;

use super::{project_in_place, GridFunction, ProblemError, ProblemSpec};

/// A feedback law used for closed-loop simulation.
#[derive(Debug, Clone)]
pub enum Policy {
    /// `u = e(x)`; a constant expression gives an open-loop constant input.
    Expr(Expr),
    /// Node-wise control table, multilinearly interpolated between nodes.
    Table(GridFunction),
    /// Greedy with respect to a value function: at the current state pick the
    /// sampled control minimising `l(x,u) + gamma * psi(f(x,u))`.
    Greedy(GridFunction),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<f64>,
    pub costs: Vec<f64>,
    /// `running_average[t]` is the mean of `costs[0..=t]`.
    pub running_average: Vec<f64>,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has an initial state")
    }

    pub fn average_cost(&self) -> f64 {
        self.running_average.last().copied().unwrap_or(0.0)
    }
}

/// Runs `horizon` steps of the projected closed loop from `x0`. Controls are
/// clamped into the feasible interval at each state.
pub fn simulate(
    spec: &ProblemSpec,
    policy: &Policy,
    x0: &[f64],
    horizon: usize,
) -> Result<Trajectory, ProblemError> {
    let mut x = x0.to_vec();
    project_in_place(&mut x, &spec.bounds);
    let mut traj = Trajectory {
        states: vec![x.clone()],
        controls: Vec::with_capacity(horizon),
        costs: Vec::with_capacity(horizon),
        running_average: Vec::with_capacity(horizon),
    };
    let mut total = 0.0;
    for t in 0..horizon {
        let u = choose(spec, policy, &x)?;
        let cost = spec.stage_cost(&x, u)?;
        let mut next = spec.successor(&x, u)?;
        project_in_place(&mut next, &spec.bounds);
        total += cost;
        traj.controls.push(u);
        traj.costs.push(cost);
        traj.running_average.push(total / (t + 1) as f64);
        traj.states.push(next.clone());
        x = next;
    }
    Ok(traj)
}

fn choose(spec: &ProblemSpec, policy: &Policy, x: &[f64]) -> Result<f64, ProblemError> {
    let eval = |e: &Expr, what: &str| {
        e.eval(x, 0.0).map_err(|source| ProblemError::Eval {
            what: what.to_string(),
            x: x.to_vec(),
            u: 0.0,
            source,
        })
    };
    let lo = eval(&spec.control.lo, "control lower bound")?;
    let hi = eval(&spec.control.hi, "control upper bound")?;
    let u = match policy {
        Policy::Expr(e) => eval(e, "policy")?,
        Policy::Table(table) => table.interpolate(x),
        Policy::Greedy(psi) => {
            let gamma = spec.discount_factor();
            let mut best = (f64::INFINITY, lo);
            for u in spec.control.samples_at(x)? {
                let mut next = spec.successor(x, u)?;
                project_in_place(&mut next, &spec.bounds);
                let q = spec.stage_cost(x, u)? + gamma * psi.interpolate(&next);
                if q < best.0 {
                    best = (q, u);
                }
            }
            best.1
        }
    };
    Ok(u.clamp(lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin, builtin_with, BuiltinParams, LqClosedForm};

    #[test]
    fn zero_input_period_two() {
        let spec = builtin("pwl-zero-avg").unwrap();
        let tr = simulate(&spec, &Policy::Expr(Expr::constant(0.0)), &[1.0], 100).unwrap();
        for (t, x) in tr.states.iter().enumerate() {
            assert_eq!(x[0], if t % 2 == 0 { 1.0 } else { -1.0 });
        }
        assert_eq!(tr.average_cost(), 0.0);
    }

    #[test]
    fn logistic_average_vanishes() {
        let spec = builtin("logistic-chaos").unwrap();
        let tr = simulate(&spec, &Policy::Expr(Expr::constant(3.6)), &[0.5], 10_000).unwrap();
        assert!(tr.average_cost().abs() < 1e-3);
    }

    #[test]
    fn lq_feedback_reaches_equilibrium() {
        let spec = builtin_with("lq-discounted", BuiltinParams { discount: Some(0.9), epsilon: None }).unwrap();
        let lq = LqClosedForm::new(0.9);
        let tr = simulate(&spec, &Policy::Expr(lq.feedback_expr()), &[0.0], 200).unwrap();
        assert!((tr.final_state()[0] - lq.equilibrium()).abs() < 1e-6);
    }

    #[test]
    fn cubic_map_settles_on_stable_equilibria() {
        let spec = builtin("cubic-autonomous").unwrap();
        let zero = Policy::Expr(Expr::constant(0.0));
        let up = simulate(&spec, &zero, &[0.5], 200).unwrap();
        let down = simulate(&spec, &zero, &[-0.5], 200).unwrap();
        assert!((up.final_state()[0] - 1.0).abs() <= 1e-6);
        assert!((down.final_state()[0] + 1.0).abs() <= 1e-6);
    }
}
