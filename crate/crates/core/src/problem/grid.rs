//! Rectilinear grids over the state box and node-valued functions with
//! multilinear interpolation.

use std::sync::Arc;

use super::ProblemError;

/// Absolute tolerance for clamping successor states back into the box.
pub const PROJECTION_EPS: f64 = 1e-6;

// Cell fractions closer than this to 0 or 1 snap onto the node, so that
// successors that land on nodes up to rounding interpolate exactly.
const SNAP: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Vec<f64>>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    /// Uniform nodes per dimension, augmented by `mandatory` points (kink
    /// locations), sorted and deduplicated.
    pub fn build(
        bounds: &[(f64, f64)],
        nodes_per_dim: &[usize],
        mandatory: &[Vec<f64>],
    ) -> Result<Grid, ProblemError> {
        if bounds.is_empty() || bounds.len() != nodes_per_dim.len() {
            return Err(ProblemError::Invalid(format!(
                "grid needs one node count per dimension ({} bounds, {} counts)",
                bounds.len(),
                nodes_per_dim.len()
            )));
        }
        let axes = bounds
            .iter()
            .zip(nodes_per_dim)
            .enumerate()
            .map(|(d, (&(lo, hi), &n))| {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(ProblemError::Invalid(format!(
                        "degenerate box [{lo}, {hi}] in dimension {}",
                        d + 1
                    )));
                }
                if n < 2 {
                    return Err(ProblemError::Invalid(format!(
                        "dimension {} needs at least 2 nodes, got {n}",
                        d + 1
                    )));
                }
                let extra = mandatory.get(d).map(Vec::as_slice).unwrap_or(&[]);
                for &p in extra {
                    if !(lo..=hi).contains(&p) {
                        return Err(ProblemError::MandatoryOutsideBox {
                            point: p,
                            lo,
                            hi,
                        });
                    }
                }
                Ok(merge_points(&uniform(lo, hi, n), extra, hi - lo))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Grid::from_axes(axes))
    }

    /// Builds a grid from explicit, strictly increasing axes.
    pub fn from_axes(axes: Vec<Vec<f64>>) -> Grid {
        let mut strides = vec![1; axes.len()];
        for d in (0..axes.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * axes[d + 1].len();
        }
        let len = axes.iter().map(Vec::len).product();
        Grid { axes, strides, len }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn axis(&self, d: usize) -> &[f64] {
        &self.axes[d]
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.axes
            .iter()
            .map(|a| (a[0], *a.last().expect("non-empty axis")))
            .collect()
    }

    /// Smallest spacing between neighbouring nodes along dimension `d`.
    pub fn min_spacing(&self, d: usize) -> f64 {
        self.axes[d]
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Coordinates of node `index`, written into `out`.
    pub fn node_into(&self, index: usize, out: &mut [f64]) {
        let mut rest = index;
        for (d, axis) in self.axes.iter().enumerate() {
            let i = rest / self.strides[d];
            rest %= self.strides[d];
            out[d] = axis[i];
        }
    }

    pub fn node(&self, index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.node_into(index, &mut out);
        out
    }

    /// Cell index and fractional position of `x` along axis `d`; the last
    /// node maps to the last cell.
    fn locate(&self, d: usize, x: f64) -> (usize, f64) {
        let axis = &self.axes[d];
        let n = axis.len();
        let x = x.clamp(axis[0], axis[n - 1]);
        let upper = axis.partition_point(|&a| a <= x).clamp(1, n - 1);
        let i = upper - 1;
        let mut t = (x - axis[i]) / (axis[i + 1] - axis[i]);
        if t < SNAP {
            t = 0.0;
        } else if t > 1.0 - SNAP {
            t = 1.0;
        }
        (i, t)
    }

    /// Multilinear interpolation weights at `x` (assumed inside the box).
    /// Zero weights are dropped; the weights are nonnegative and sum to one.
    pub fn stencil(&self, x: &[f64], out: &mut Vec<(u32, f64)>) {
        out.clear();
        out.push((0, 1.0));
        for d in 0..self.dim() {
            let (i, t) = self.locate(d, x[d]);
            let stride = self.strides[d];
            let n = out.len();
            for k in 0..n {
                let (base, w) = out[k];
                let lo_idx = base + (i * stride) as u32;
                if t == 0.0 {
                    out[k] = (lo_idx, w);
                } else if t == 1.0 {
                    out[k] = (lo_idx + stride as u32, w);
                } else {
                    out[k] = (lo_idx, w * (1.0 - t));
                    out.push((lo_idx + stride as u32, w * t));
                }
            }
        }
    }

    /// Cell index per axis containing `x`.
    pub fn cell_of(&self, x: &[f64]) -> Vec<usize> {
        (0..self.dim()).map(|d| self.locate(d, x[d]).0).collect()
    }
}

fn uniform(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let m = (n - 1) as f64;
    // Convex-combination form keeps symmetric boxes exactly symmetric.
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (lo * (m - i as f64) + hi * i as f64) / m
            }
        })
        .collect()
}

/// Merges `extra` into sorted `base`, preferring the exact `extra` value when
/// two points coincide within `1e-12 * width`.
pub(crate) fn merge_points(base: &[f64], extra: &[f64], width: f64) -> Vec<f64> {
    let tol = 1e-12 * width.abs().max(f64::MIN_POSITIVE);
    let mut pts: Vec<(f64, bool)> = base
        .iter()
        .map(|&p| (p, false))
        .chain(extra.iter().map(|&p| (p, true)))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, bool)> = Vec::with_capacity(pts.len());
    for (p, forced) in pts {
        match out.last_mut() {
            Some(last) if (p - last.0).abs() <= tol => {
                if forced && !last.1 {
                    *last = (p, true);
                }
            }
            _ => out.push((p, forced)),
        }
    }
    out.into_iter().map(|(p, _)| p).collect()
}

/// Componentwise clamp into the box. The flag reports whether any component
/// had to move by more than [`PROJECTION_EPS`].
pub fn project(x: &[f64], bounds: &[(f64, f64)]) -> (Vec<f64>, bool) {
    let mut out = x.to_vec();
    let flag = project_in_place(&mut out, bounds);
    (out, flag)
}

pub(crate) fn project_in_place(x: &mut [f64], bounds: &[(f64, f64)]) -> bool {
    let mut escaped = false;
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        let c = v.clamp(lo, hi);
        if (c - *v).abs() > PROJECTION_EPS {
            escaped = true;
        }
        *v = c;
    }
    escaped
}

/// A real value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    /// Panics if the value count does not match the grid or a value is not
    /// finite.
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> GridFunction {
        assert_eq!(grid.len(), values.len(), "value count must match the grid");
        assert!(
            values.iter().all(|v| v.is_finite()),
            "grid function values must be finite"
        );
        GridFunction { grid, values }
    }

    pub fn constant(grid: Arc<Grid>, value: f64) -> GridFunction {
        let n = grid.len();
        GridFunction::new(grid, vec![value; n])
    }

    pub fn from_fn(grid: Arc<Grid>, mut f: impl FnMut(&[f64]) -> f64) -> GridFunction {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|i| {
                grid.node_into(i, &mut x);
                f(&x)
            })
            .collect();
        GridFunction::new(grid, values)
    }

    pub fn try_from_fn<E>(
        grid: Arc<Grid>,
        mut f: impl FnMut(&[f64]) -> Result<f64, E>,
    ) -> Result<GridFunction, E> {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|i| {
                grid.node_into(i, &mut x);
                f(&x)
            })
            .collect::<Result<Vec<_>, E>>()?;
        Ok(GridFunction::new(grid, values))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid
    }

    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let mut st = Vec::with_capacity(1 << self.grid.dim());
        self.grid.stencil(x, &mut st);
        st.iter().map(|&(i, w)| w * self.values[i as usize]).sum()
    }

    /// Applies `f` nodewise, keeping the grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Combines two functions on the same grid nodewise.
    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        assert_eq!(self.values.len(), other.values.len(), "grid mismatch");
        GridFunction::new(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add_const(&self, c: f64) -> GridFunction {
        self.map(|v| v + c)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max - min` over nodes.
    pub fn range(&self) -> f64 {
        self.max_value() - self.min_value()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |self - other|` over nodes.
    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "grid mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}
