//! Advisory mesh-admissibility check for the small-diffusivity regime.
//!
//! As the diffusivity shrinks, discretization errors must shrink with it
//! for the discrete estimators to track their continuous counterparts.
//! The check compares the actual spacings against power-law thresholds in
//! `nu`: the time spacing must satisfy `delta_t <= nu^(1/(2 beta gamma_t))`
//! and the space spacing `delta_y <= nu^a delta_t^b` with
//! `a = (gamma_y + 1/(2 beta)) / (gamma_tilde_y - 1/p_y)` and
//! `b = 1 / (gamma_tilde_y - 1/p_y)`. The report carries the two ratios
//! (actual over threshold; below 1 passes) and an overall status. It is
//! advisory: callers decide what to do with a warning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::ModelSpec;

/// Exponent bundle for the admissibility thresholds.
///
/// Constraints: `beta > 1`; `0 < gamma_t < (1 - 1/beta) / 2`;
/// `p_y > 1 / gamma_tilde_y`; `0 < gamma_y < (1 - 1/beta) / 2 - 1/p_y`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MeshPolicy {
    beta: f64,
    gamma_t: f64,
    gamma_y: f64,
    p_y: f64,
    gamma_tilde_y: f64,
}

impl MeshPolicy {
    pub fn new(beta: f64, gamma_t: f64, gamma_y: f64, p_y: f64, gamma_tilde_y: f64) -> Result<Self> {
        for &(name, v) in &[
            ("beta", beta),
            ("gamma_t", gamma_t),
            ("gamma_y", gamma_y),
            ("p_y", p_y),
            ("gamma_tilde_y", gamma_tilde_y),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("mesh policy {name} = {v} must be finite")));
            }
        }
        if !(beta > 1.0) {
            return Err(Error::invalid(format!("mesh policy beta = {beta} must exceed 1")));
        }
        let half_gap = 0.5 * (1.0 - 1.0 / beta);
        if !(gamma_t > 0.0 && gamma_t < half_gap) {
            return Err(Error::invalid(format!(
                "mesh policy gamma_t = {gamma_t} must lie in (0, {half_gap})"
            )));
        }
        if !(gamma_tilde_y > 0.0) {
            return Err(Error::invalid(format!(
                "mesh policy gamma_tilde_y = {gamma_tilde_y} must be positive"
            )));
        }
        if !(p_y > 1.0 / gamma_tilde_y) {
            return Err(Error::invalid(format!(
                "mesh policy p_y = {p_y} must exceed 1/gamma_tilde_y = {}",
                1.0 / gamma_tilde_y
            )));
        }
        let space_cap = half_gap - 1.0 / p_y;
        if !(gamma_y > 0.0 && gamma_y < space_cap) {
            return Err(Error::invalid(format!(
                "mesh policy gamma_y = {gamma_y} must lie in (0, {space_cap})"
            )));
        }
        Ok(MeshPolicy { beta, gamma_t, gamma_y, p_y, gamma_tilde_y })
    }

    /// A serviceable default: `beta = 2`, `gamma_t = 0.24`, `gamma_y = 0.04`,
    /// `p_y = 8`, `gamma_tilde_y = 1`.
    pub fn standard() -> Self {
        MeshPolicy::new(2.0, 0.24, 0.04, 8.0, 1.0).expect("standard policy is admissible")
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma_t(&self) -> f64 {
        self.gamma_t
    }

    pub fn gamma_y(&self) -> f64 {
        self.gamma_y
    }

    pub fn p_y(&self) -> f64 {
        self.p_y
    }

    pub fn gamma_tilde_y(&self) -> f64 {
        self.gamma_tilde_y
    }

    /// Threshold exponent for the time spacing: `1 / (2 beta gamma_t)`.
    pub fn time_exponent(&self) -> f64 {
        1.0 / (2.0 * self.beta * self.gamma_t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshStatus {
    Pass,
    Warn,
}

/// Outcome of the admissibility check. Ratios below 1 pass.
#[derive(Clone, Debug)]
pub struct MeshReport {
    pub nu: f64,
    pub delta_t: f64,
    pub delta_y: f64,
    /// `delta_t / nu^(1/(2 beta gamma_t))`.
    pub r_t: f64,
    /// `delta_y / (nu^a delta_t^b)`.
    pub r_y: f64,
    pub time_ok: bool,
    pub space_ok: bool,
    pub status: MeshStatus,
    /// The time threshold itself; the opening step of the time grid should
    /// also not fall far below it, since the first increment is the one the
    /// estimators discard.
    pub time_threshold: f64,
}

/// Admissibility of explicit spacings at diffusivity `nu`.
pub fn check_mesh_spacings(
    nu: f64,
    delta_t: f64,
    delta_y: f64,
    policy: &MeshPolicy,
) -> Result<MeshReport> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::invalid(format!("diffusivity nu = {nu} must be positive")));
    }
    for &(name, v) in &[("delta_t", delta_t), ("delta_y", delta_y)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("spacing {name} = {v} must be positive")));
        }
    }
    let time_threshold = nu.powf(policy.time_exponent());
    let r_t = delta_t / time_threshold;

    let slack = policy.gamma_tilde_y - 1.0 / policy.p_y; // positive by construction
    let a = (policy.gamma_y + 1.0 / (2.0 * policy.beta)) / slack;
    let b = 1.0 / slack;
    let r_y = delta_y / (nu.powf(a) * delta_t.powf(b));

    let time_ok = r_t < 1.0;
    let space_ok = r_y < 1.0;
    Ok(MeshReport {
        nu,
        delta_t,
        delta_y,
        r_t,
        r_y,
        time_ok,
        space_ok,
        status: if time_ok && space_ok { MeshStatus::Pass } else { MeshStatus::Warn },
        time_threshold,
    })
}

/// Admissibility of a model/grid pair.
pub fn check_mesh(model: &ModelSpec, grid: &GridSpec, policy: &MeshPolicy) -> Result<MeshReport> {
    check_mesh_spacings(model.nu(), grid.delta_t(), grid.delta_y(), policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_constraints_are_enforced() {
        assert!(MeshPolicy::new(2.0, 0.24, 0.04, 8.0, 1.0).is_ok());
        // gamma_t at or above (1 - 1/beta)/2 = 0.25 is out.
        assert!(MeshPolicy::new(2.0, 0.25, 0.04, 8.0, 1.0).is_err());
        assert!(MeshPolicy::new(2.0, 0.0, 0.04, 8.0, 1.0).is_err());
        // beta must exceed 1.
        assert!(MeshPolicy::new(1.0, 0.1, 0.04, 8.0, 1.0).is_err());
        // p_y must exceed 1/gamma_tilde_y.
        assert!(MeshPolicy::new(2.0, 0.24, 0.04, 0.9, 1.0).is_err());
        // gamma_y capped by (1 - 1/beta)/2 - 1/p_y = 0.125 at p_y = 8.
        assert!(MeshPolicy::new(2.0, 0.24, 0.125, 8.0, 1.0).is_err());
        assert!(MeshPolicy::new(2.0, 0.24, 0.12, 8.0, 1.0).is_ok());
        MeshPolicy::standard();
    }

    #[test]
    fn time_ratio_matches_the_power_law() {
        // beta = 2, gamma_t = 0.24: threshold exponent 1/(2*2*0.24) = 25/24.
        let policy = MeshPolicy::standard();
        let expo = policy.time_exponent();
        assert!((expo - 25.0 / 24.0).abs() < 1e-12);

        let nu = 0.01_f64;
        // delta_t = nu^1.1 sits below the threshold: ratio nu^(1.1 - 25/24) ~ 0.764.
        let fine = check_mesh_spacings(nu, nu.powf(1.1), 1e-30, &policy).unwrap();
        assert!((fine.r_t - nu.powf(1.1 - expo)).abs() < 1e-12);
        assert!((fine.r_t - 0.7644).abs() < 1e-3);
        assert!(fine.time_ok);

        // delta_t = nu^0.5 sits far above it: ratio ~ 12.1.
        let coarse = check_mesh_spacings(nu, nu.powf(0.5), 1e-30, &policy).unwrap();
        assert!((coarse.r_t - nu.powf(0.5 - expo)).abs() < 1e-10);
        assert!((coarse.r_t - 12.115).abs() < 1e-2);
        assert!(!coarse.time_ok);
        assert_eq!(coarse.status, MeshStatus::Warn);
    }

    #[test]
    fn space_ratio_matches_the_power_law() {
        let policy = MeshPolicy::standard();
        // slack = 1 - 1/8 = 0.875; a = (0.04 + 0.25)/0.875; b = 1/0.875.
        let nu = 0.01_f64;
        let dt = nu.powf(1.1);
        let a = (0.04 + 0.25) / 0.875;
        let b = 1.0 / 0.875;
        let threshold = nu.powf(a) * dt.powf(b);
        let pass = check_mesh_spacings(nu, dt, threshold * 0.5, &policy).unwrap();
        assert!((pass.r_y - 0.5).abs() < 1e-12);
        assert!(pass.space_ok);
        assert_eq!(pass.status, MeshStatus::Pass);
        let warn = check_mesh_spacings(nu, dt, threshold * 2.0, &policy).unwrap();
        assert!((warn.r_y - 2.0).abs() < 1e-12);
        assert!(!warn.space_ok);
        assert_eq!(warn.status, MeshStatus::Warn);
    }

    #[test]
    fn realistic_grids_warn_in_space() {
        // The space threshold shrinks much faster than any practical grid:
        // at nu = 0.01 it is around nu^(a + 1.1 b) ~ 1e-3.2... times smaller
        // than the time step, far below delta_y = 1/256.
        use crate::model::{SigmaSpec, Theta};
        use crate::reaction::ReactionFn;
        use crate::spectral::DomainSpec;
        let policy = MeshPolicy::standard();
        let dom = DomainSpec::for_grid(1.0, 2.0, 256).unwrap();
        let model = ModelSpec::new(
            dom,
            0.01,
            Theta::Const(1.0),
            ReactionFn::f1(),
            SigmaSpec::Const(1.0),
            1.0,
        )
        .unwrap();
        let grid = GridSpec::new(1.0, 1.0, 256, 65536).unwrap();
        let report = check_mesh(&model, &grid, &policy).unwrap();
        assert!(!report.space_ok, "r_y = {} should warn on a realistic grid", report.r_y);
        assert_eq!(report.status, MeshStatus::Warn);
        assert!((report.delta_t - 1.0 / 65536.0).abs() < 1e-18);
        assert!((report.delta_y - 1.0 / 256.0).abs() < 1e-18);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let policy = MeshPolicy::standard();
        assert!(check_mesh_spacings(0.0, 1e-3, 1e-3, &policy).is_err());
        assert!(check_mesh_spacings(0.01, 0.0, 1e-3, &policy).is_err());
        assert!(check_mesh_spacings(0.01, 1e-3, f64::NAN, &policy).is_err());
    }
}
