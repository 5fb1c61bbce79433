//! Uniform space-time grids and nodal fields.
//!
//! Space is discretized by `M` equal subintervals of `(0, l)` (so `M + 1`
//! nodes including both boundaries), time by `N` equal steps of `(0, T]`.
//! A [`GridField`] holds one nodal snapshot; Dirichlet states keep exact
//! zeros at both boundary nodes.

use crate::error::{Error, Result};

/// Uniform discretization of the space-time cylinder `(0, l) x (0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    l: f64,
    t_end: f64,
    m: usize,
    n: usize,
}

impl GridSpec {
    pub fn new(l: f64, t_end: f64, m: usize, n: usize) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::invalid(format!("domain length l = {l} must be positive")));
        }
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::invalid(format!("horizon T = {t_end} must be positive")));
        }
        if m < 2 {
            return Err(Error::invalid(format!("M = {m} spatial subintervals, need at least 2")));
        }
        if n < 1 {
            return Err(Error::invalid(format!("N = {n} time steps, need at least 1")));
        }
        Ok(GridSpec { l, t_end, m, n })
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Number of spatial subintervals; nodes are indexed `0..=M`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of time steps; rows are indexed `0..=N`.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta_y(&self) -> f64 {
        self.l / self.m as f64
    }

    pub fn delta_t(&self) -> f64 {
        self.t_end / self.n as f64
    }

    /// Spatial node `y_j = j l / M`.
    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.l / self.m as f64
    }

    /// Time point `t_k = k T / N`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.t_end / self.n as f64
    }
}

/// Nodal values of a field on the `M + 1` spatial grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    values: Vec<f64>,
}

impl GridField {
    /// Wraps nodal values; the length must be `M + 1` for some `M >= 2`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::invalid(format!(
                "a nodal field needs at least 3 values, got {}",
                values.len()
            )));
        }
        Ok(GridField { values })
    }

    /// The zero field on a grid with `m` subintervals.
    pub fn zeros(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid(format!("M = {m} spatial subintervals, need at least 2")));
        }
        Ok(GridField { values: vec![0.0; m + 1] })
    }

    /// Number of spatial subintervals `M` (one less than the node count).
    pub fn m(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Largest boundary magnitude; zero for an exact Dirichlet state.
    pub fn boundary_defect(&self) -> f64 {
        self.values[0].abs().max(self.values[self.values.len() - 1].abs())
    }

    /// Forces exact zeros at both boundary nodes.
    pub fn clamp_boundary(&mut self) {
        let last = self.values.len() - 1;
        self.values[0] = 0.0;
        self.values[last] = 0.0;
    }
}
