//! Pointwise reaction nonlinearities.
//!
//! The drift of the field equation is `theta * f(X)` for a scalar function
//! `f` applied node by node. Four built-ins cover the study designs:
//!
//! * `f1`: `f(y) = -y (2 + sin y)` — globally damping, linear growth;
//! * `f2`: `f(y) = -(y^3 - 9 y)` — double-well drift with stable points at
//!   `y = ±3` and an unstable point at 0, superlinear growth;
//! * `linear`: `f(y) = y` — the identity, the only reaction the mode-wise
//!   estimator accepts;
//! * `zero`: `f ≡ 0` — switches the reaction off entirely.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Damped,     // f1
    DoubleWell, // f2
    Linear,
    Zero,
    Custom { f: ScalarFn, df: Option<ScalarFn>, linear_growth: bool },
}

/// A named scalar reaction with optional derivative.
#[derive(Clone)]
pub struct ReactionFn {
    name: String,
    kind: Kind,
}

impl ReactionFn {
    /// `f(y) = -y (2 + sin y)`.
    pub fn f1() -> Self {
        ReactionFn { name: "f1".into(), kind: Kind::Damped }
    }

    /// `f(y) = -(y^3 - 9 y)`.
    pub fn f2() -> Self {
        ReactionFn { name: "f2".into(), kind: Kind::DoubleWell }
    }

    /// `f(y) = y`.
    pub fn linear() -> Self {
        ReactionFn { name: "linear".into(), kind: Kind::Linear }
    }

    /// `f ≡ 0`.
    pub fn zero() -> Self {
        ReactionFn { name: "zero".into(), kind: Kind::Zero }
    }

    /// Looks up a built-in by its configuration name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "f1" => Ok(Self::f1()),
            "f2" => Ok(Self::f2()),
            "linear" => Ok(Self::linear()),
            "zero" => Ok(Self::zero()),
            other => Err(Error::invalid(format!(
                "unknown reaction '{other}' (built-ins: f1, f2, linear, zero)"
            ))),
        }
    }

    /// A user-supplied reaction. `linear_growth` declares `|f(y)| <= C (1 + |y|)`
    /// and controls the solver's mesh guard.
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: Option<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
        linear_growth: bool,
    ) -> Self {
        ReactionFn {
            name: name.into(),
            kind: Kind::Custom {
                f: Arc::new(f),
                df: df.map(|d| Arc::from(d) as ScalarFn),
                linear_growth,
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        match &self.kind {
            Kind::Damped => -y * (2.0 + y.sin()),
            Kind::DoubleWell => -(y * y * y - 9.0 * y),
            Kind::Linear => y,
            Kind::Zero => 0.0,
            Kind::Custom { f, .. } => f(y),
        }
    }

    /// Derivative, when one is known.
    pub fn derivative(&self, y: f64) -> Option<f64> {
        match &self.kind {
            Kind::Damped => Some(-(2.0 + y.sin()) - y * y.cos()),
            Kind::DoubleWell => Some(-(3.0 * y * y - 9.0)),
            Kind::Linear => Some(1.0),
            Kind::Zero => Some(0.0),
            Kind::Custom { df, .. } => df.as_ref().map(|d| d(y)),
        }
    }

    /// Whether this reaction is exactly the identity map.
    pub fn is_identity(&self) -> bool {
        matches!(self.kind, Kind::Linear)
    }

    /// Whether `|f(y)|` grows at most linearly in `|y|`.
    pub fn linear_growth(&self) -> bool {
        match &self.kind {
            Kind::Damped | Kind::Linear | Kind::Zero => true,
            Kind::DoubleWell => false,
            Kind::Custom { linear_growth, .. } => *linear_growth,
        }
    }
}

impl fmt::Debug for ReactionFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReactionFn").field("name", &self.name).finish()
    }
}
