//! Full problem description: operator, drift, noise, horizon, initial state.

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::reaction::ReactionFn;
use crate::spectral::DomainSpec;

/// Reaction intensity in front of `f(X)`. Either a constant or an affine
/// field `theta(y, t) = c0 + cy * y + ct * t` for the pointwise estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Theta {
    Const(f64),
    Affine { c0: f64, cy: f64, ct: f64 },
}

impl Theta {
    pub fn validate(&self) -> Result<()> {
        let all_finite = match self {
            Theta::Const(c) => c.is_finite(),
            Theta::Affine { c0, cy, ct } => c0.is_finite() && cy.is_finite() && ct.is_finite(),
        };
        if all_finite {
            Ok(())
        } else {
            Err(Error::invalid("reaction intensity must be finite"))
        }
    }

    #[inline]
    pub fn at(&self, y: f64, t: f64) -> f64 {
        match self {
            Theta::Const(c) => *c,
            Theta::Affine { c0, cy, ct } => c0 + cy * y + ct * t,
        }
    }

    /// `Some(theta)` when the intensity does not vary in space or time.
    pub fn as_const(&self) -> Option<f64> {
        match self {
            Theta::Const(c) => Some(*c),
            Theta::Affine { c0, cy, ct } => (*cy == 0.0 && *ct == 0.0).then_some(*c0),
        }
    }

    /// Whether the intensity depends on time (constant-in-time intensities
    /// can be folded into a per-node table once per run).
    pub fn time_dependent(&self) -> bool {
        matches!(self, Theta::Affine { ct, .. } if *ct != 0.0)
    }
}

/// Noise amplitude `sigma(y)`: a positive constant or one positive value per
/// grid node.
#[derive(Clone, Debug, PartialEq)]
pub enum SigmaSpec {
    Const(f64),
    Nodal(Vec<f64>),
}

impl SigmaSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            SigmaSpec::Const(c) => {
                if !(c.is_finite() && *c > 0.0) {
                    return Err(Error::invalid(format!(
                        "noise amplitude must be positive and finite, got {c}"
                    )));
                }
            }
            SigmaSpec::Nodal(values) => {
                if values.is_empty() {
                    return Err(Error::invalid("nodal noise amplitude table is empty"));
                }
                for (j, v) in values.iter().enumerate() {
                    if !(v.is_finite() && *v > 0.0) {
                        return Err(Error::invalid(format!(
                            "noise amplitude at node {j} must be positive and finite, got {v}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Materializes one value per node of an `m`-cell grid (`m + 1` values).
    pub fn nodal(&self, m: usize) -> Result<Vec<f64>> {
        self.validate()?;
        match self {
            SigmaSpec::Const(c) => Ok(vec![*c; m + 1]),
            SigmaSpec::Nodal(values) => {
                if values.len() != m + 1 {
                    return Err(Error::GridMismatch {
                        what: format!(
                            "noise amplitude table has {} entries, grid has {} nodes",
                            values.len(),
                            m + 1
                        ),
                    });
                }
                Ok(values.clone())
            }
        }
    }

    /// Smallest amplitude over the nodes (positive after validation).
    pub fn inf(&self) -> f64 {
        match self {
            SigmaSpec::Const(c) => *c,
            SigmaSpec::Nodal(values) => values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// Everything that defines one stochastic evolution problem.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    dom: DomainSpec,
    nu: f64,
    theta: Theta,
    reaction: ReactionFn,
    sigma: SigmaSpec,
    t_end: f64,
    x0: Option<GridField>,
}

impl ModelSpec {
    pub fn new(
        dom: DomainSpec,
        nu: f64,
        theta: Theta,
        reaction: ReactionFn,
        sigma: SigmaSpec,
        t_end: f64,
    ) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::invalid(format!("diffusivity must be positive, got {nu}")));
        }
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::invalid(format!("time horizon must be positive, got {t_end}")));
        }
        theta.validate()?;
        sigma.validate()?;
        Ok(ModelSpec { dom, nu, theta, reaction, sigma, t_end, x0: None })
    }

    /// Replaces the zero initial state with a given field (boundary values
    /// must vanish).
    pub fn with_x0(mut self, x0: GridField) -> Result<Self> {
        let defect = x0.boundary_defect();
        if defect > crate::spectral::BOUNDARY_TOL {
            return Err(Error::BoundaryViolation {
                index: if x0.values()[0].abs() >= x0.values()[x0.m()].abs() { 0 } else { x0.m() },
                value: defect,
            });
        }
        self.x0 = Some(x0);
        Ok(self)
    }

    /// Same model with a different diffusivity (used by parameter sweeps).
    pub fn with_nu(mut self, nu: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::invalid(format!("diffusivity must be positive, got {nu}")));
        }
        self.nu = nu;
        Ok(self)
    }

    pub fn dom(&self) -> &DomainSpec {
        &self.dom
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn theta(&self) -> &Theta {
        &self.theta
    }

    pub fn reaction(&self) -> &ReactionFn {
        &self.reaction
    }

    pub fn sigma(&self) -> &SigmaSpec {
        &self.sigma
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn x0(&self) -> Option<&GridField> {
        self.x0.as_ref()
    }

    /// Stable fingerprint of the model parameters, stored with every
    /// trajectory so estimators can detect a model/data mismatch cheaply.
    /// FNV-1a over the canonical little-endian encoding of the fields.
    pub fn tag(&self) -> u64 {
        let mut bytes: Vec<u8> = Vec::with_capacity(256);
        let push_f64 = |bytes: &mut Vec<u8>, v: f64| bytes.extend_from_slice(&v.to_le_bytes());
        push_f64(&mut bytes, self.dom.l());
        push_f64(&mut bytes, self.dom.alpha());
        bytes.extend_from_slice(&(self.dom.modes() as u64).to_le_bytes());
        push_f64(&mut bytes, self.nu);
        match self.theta {
            Theta::Const(c) => {
                bytes.push(0);
                push_f64(&mut bytes, c);
            }
            Theta::Affine { c0, cy, ct } => {
                bytes.push(1);
                push_f64(&mut bytes, c0);
                push_f64(&mut bytes, cy);
                push_f64(&mut bytes, ct);
            }
        }
        bytes.extend_from_slice(self.reaction.name().as_bytes());
        bytes.push(0xff);
        match &self.sigma {
            SigmaSpec::Const(c) => {
                bytes.push(0);
                push_f64(&mut bytes, *c);
            }
            SigmaSpec::Nodal(values) => {
                bytes.push(1);
                bytes.extend_from_slice(&(values.len() as u64).to_le_bytes());
                for v in values {
                    push_f64(&mut bytes, *v);
                }
            }
        }
        push_f64(&mut bytes, self.t_end);
        if let Some(x0) = &self.x0 {
            bytes.push(1);
            for v in x0.values() {
                push_f64(&mut bytes, *v);
            }
        } else {
            bytes.push(0);
        }
        fnv1a64(&bytes)
    }

    /// Initial row of a trajectory on `grid` (zeros unless an initial state
    /// was attached).
    pub fn initial_row(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        match &self.x0 {
            None => Ok(vec![0.0; grid.m() + 1]),
            Some(x0) => {
                if x0.m() != grid.m() {
                    return Err(Error::GridMismatch {
                        what: format!(
                            "initial state has {} cells, grid has {}",
                            x0.m(),
                            grid.m()
                        ),
                    });
                }
                Ok(x0.values().to_vec())
            }
        }
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x00000100000001b3);
    }
    hash
}
