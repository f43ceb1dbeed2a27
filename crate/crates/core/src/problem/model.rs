use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::{project_in_place, Grid, GridFunction, ProblemError, ProblemSpec};

/// A sampled `(x, u)` pair that leaves the state box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceViolation {
    pub x: Vec<f64>,
    pub u: f64,
    pub image: Vec<f64>,
    pub distance: f64,
}

/// One sampled control at a node together with everything the Bellman
/// operator needs: stage cost, projected successor and its interpolation
/// stencil.
#[derive(Debug, Clone, Copy)]
pub struct Transition<'a> {
    pub u: f64,
    pub cost: f64,
    pub successor: &'a [f64],
    pub stencil: &'a [(u32, f64)],
}

/// A problem sampled onto its grid and control samples.
///
/// Stage costs, successors and interpolation stencils do not depend on the
/// value function, so they are tabulated once here and every Bellman sweep
/// is pure arithmetic.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ProblemSpec,
    grid: Arc<Grid>,
    gamma: f64,
    node_start: Vec<usize>,
    controls: Vec<f64>,
    costs: Vec<f64>,
    successors: Vec<f64>,
    stencil_start: Vec<usize>,
    stencil: Vec<(u32, f64)>,
}

struct NodeTable {
    controls: Vec<f64>,
    costs: Vec<f64>,
    successors: Vec<f64>,
    stencil_len: Vec<usize>,
    stencil: Vec<(u32, f64)>,
    violations: Vec<InvarianceViolation>,
}

impl Model {
    /// Samples `spec`. Fails on expression domain errors, empty control sets
    /// and control-invariance violations beyond the projection tolerance.
    pub fn new(spec: &ProblemSpec) -> Result<Model, ProblemError> {
        spec.validate()?;
        let grid = Arc::new(spec.build_grid()?);
        Model::on_grid(spec, grid)
    }

    /// Samples `spec` on an explicit grid (which must cover the spec's box).
    pub fn on_grid(spec: &ProblemSpec, grid: Arc<Grid>) -> Result<Model, ProblemError> {
        spec.validate()?;
        let dim = spec.dim;
        let tables: Vec<NodeTable> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let x = grid.node(i);
                let controls = spec.control.samples_at(&x)?;
                let mut t = NodeTable {
                    costs: Vec::with_capacity(controls.len()),
                    successors: Vec::with_capacity(controls.len() * dim),
                    stencil_len: Vec::with_capacity(controls.len()),
                    stencil: Vec::new(),
                    violations: Vec::new(),
                    controls,
                };
                let mut st = Vec::with_capacity(1 << dim);
                for &u in &t.controls {
                    t.costs.push(spec.stage_cost(&x, u)?);
                    let raw = spec.successor(&x, u)?;
                    let mut next = raw.clone();
                    if project_in_place(&mut next, &spec.bounds) {
                        let distance = raw
                            .iter()
                            .zip(&next)
                            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                        t.violations.push(InvarianceViolation {
                            x: x.clone(),
                            u,
                            image: raw,
                            distance,
                        });
                    }
                    grid.stencil(&next, &mut st);
                    t.stencil_len.push(st.len());
                    t.stencil.extend_from_slice(&st);
                    t.successors.extend_from_slice(&next);
                }
                Ok(t)
            })
            .collect::<Result<_, ProblemError>>()?;

        let violations: Vec<InvarianceViolation> =
            tables.iter().flat_map(|t| t.violations.iter().cloned()).collect();
        if let Some(worst) = violations
            .iter()
            .max_by(|a, b| a.distance.total_cmp(&b.distance))
        {
            return Err(ProblemError::Invariance {
                count: violations.len(),
                worst: worst.clone(),
            });
        }

        let total: usize = tables.iter().map(|t| t.controls.len()).sum();
        let mut model = Model {
            spec: spec.clone(),
            grid,
            gamma: spec.discount_factor(),
            node_start: Vec::with_capacity(tables.len() + 1),
            controls: Vec::with_capacity(total),
            costs: Vec::with_capacity(total),
            successors: Vec::with_capacity(total * dim),
            stencil_start: Vec::with_capacity(total + 1),
            stencil: Vec::new(),
        };
        model.node_start.push(0);
        model.stencil_start.push(0);
        for t in tables {
            model.controls.extend_from_slice(&t.controls);
            model.costs.extend_from_slice(&t.costs);
            model.successors.extend_from_slice(&t.successors);
            for len in t.stencil_len {
                let last = *model.stencil_start.last().expect("non-empty");
                model.stencil_start.push(last + len);
            }
            model.stencil.extend_from_slice(&t.stencil);
            model.node_start.push(model.controls.len());
        }
        Ok(model)
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn discount(&self) -> f64 {
        self.gamma
    }

    pub fn node_count(&self) -> usize {
        self.grid.len()
    }

    /// Total number of sampled `(x, u)` pairs.
    pub fn sample_count(&self) -> usize {
        self.controls.len()
    }

    pub fn controls_at(&self, node: usize) -> &[f64] {
        &self.controls[self.node_start[node]..self.node_start[node + 1]]
    }

    pub fn transitions(&self, node: usize) -> impl Iterator<Item = Transition<'_>> + '_ {
        let dim = self.spec.dim;
        (self.node_start[node]..self.node_start[node + 1]).map(move |j| Transition {
            u: self.controls[j],
            cost: self.costs[j],
            successor: &self.successors[j * dim..(j + 1) * dim],
            stencil: &self.stencil[self.stencil_start[j]..self.stencil_start[j + 1]],
        })
    }

    /// One Bellman backup: for every node the minimum over control samples of
    /// `cost + gamma * psi(successor)`, and the index (within the node's
    /// control list) of the first minimiser. Earlier samples have smaller
    /// `u`, so ties resolve toward the smallest control.
    pub fn backup(&self, psi: &GridFunction) -> (Vec<f64>, Vec<usize>) {
        assert_eq!(psi.values().len(), self.grid.len(), "value function is on another grid");
        let values = psi.values();
        let gamma = self.gamma;
        (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let mut best = f64::INFINITY;
                let mut arg = 0;
                for j in self.node_start[i]..self.node_start[i + 1] {
                    let st = &self.stencil[self.stencil_start[j]..self.stencil_start[j + 1]];
                    let cont: f64 = st.iter().map(|&(k, w)| w * values[k as usize]).sum();
                    let q = self.costs[j] + gamma * cont;
                    if q < best {
                        best = q;
                        arg = j - self.node_start[i];
                    }
                }
                (best, arg)
            })
            .unzip()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::builtin;

    #[test]
    fn affine_builtin_successors_are_nodes() {
        let model = Model::new(&builtin("pwl-zero-avg").unwrap()).unwrap();
        for i in 0..model.node_count() {
            for t in model.transitions(i) {
                assert_eq!(t.stencil.len(), 1);
                assert_eq!(t.stencil[0].1, 1.0);
            }
        }
    }

    #[test]
    fn controls_are_sorted_per_node() {
        let model = Model::new(&builtin("logistic-chaos").unwrap()).unwrap();
        for i in 0..model.node_count() {
            let c = model.controls_at(i);
            assert!(c.windows(2).all(|w| w[0] < w[1]));
            assert!(c.contains(&3.6));
        }
    }
}
