//! JSON run configuration: strict parsing (unknown keys are errors) and
//! construction of the validated domain objects, with every complaint
//! labelled by the JSON path it came from.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::estimate::{BandwidthPolicy, KnownPhysics, NonparamSpec, Window};
use crate::grid::GridSpec;
use crate::mc::{EstimatorChoice, McConfig};
use crate::mesh::MeshPolicy;
use crate::model::{ModelSpec, SigmaSpec, Theta};
use crate::reaction::ReactionFn;
use crate::simulate::{ForwardPolicy, SimOptions};
use crate::spectral::{from_spectral, DomainSpec, SpectralField};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    #[serde(default)]
    pub estimator: Option<EstimatorSection>,
    #[serde(default)]
    pub mc: Option<McSection>,
    #[serde(default)]
    pub mesh_policy: Option<MeshPolicySection>,
    #[serde(default)]
    pub output: Option<OutputSection>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub l: f64,
    pub alpha: f64,
    pub nu: f64,
    /// Constant intensity; exactly one of `theta` / `theta_field`.
    #[serde(default)]
    pub theta: Option<f64>,
    /// Affine intensity `c0 + cy y + ct t`.
    #[serde(default)]
    pub theta_field: Option<ThetaFieldSection>,
    /// Reaction name: `f1`, `f2`, `linear`, or `zero`.
    pub reaction: String,
    /// Either a positive scalar or `M + 1` nodal values.
    pub sigma: SigmaIn,
    #[serde(rename = "T")]
    pub t_end: f64,
    /// Spectral truncation; defaults to `M - 1`.
    #[serde(default)]
    pub modes: Option<usize>,
    /// Initial state as leading eigenmode coefficients (default: rest).
    #[serde(default)]
    pub x0_modes: Option<Vec<f64>>,
    /// Disable to integrate the deterministic flow.
    #[serde(default)]
    pub noise: Option<bool>,
    /// Sup-norm blow-up guard.
    #[serde(default)]
    pub guard: Option<f64>,
    /// Run superlinear reactions on grids with `N < M^2`.
    #[serde(default)]
    pub force: Option<bool>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaFieldSection {
    pub c0: f64,
    #[serde(default)]
    pub cy: f64,
    #[serde(default)]
    pub ct: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum SigmaIn {
    Const(f64),
    Nodal(Vec<f64>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    /// Estimator the Monte-Carlo harness runs: `global` (default),
    /// `localized`, or `spectral`.
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub window: Option<WindowSection>,
    #[serde(default)]
    pub nonparam: Option<NonparamSection>,
    #[serde(default = "default_alpha_bar")]
    pub alpha_bar: f64,
    #[serde(default)]
    pub forward_policy: Option<ForwardPolicy>,
    /// Mode count for the spectral estimator (default: diffusivity-adapted).
    #[serde(default)]
    pub modes: Option<usize>,
}

fn default_alpha_bar() -> f64 {
    0.05
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub y0: f64,
    pub t0: f64,
    pub delta_y: f64,
    pub delta_t: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonparamSection {
    #[serde(default = "default_smoothness")]
    pub eta_y: f64,
    #[serde(default = "default_smoothness")]
    pub eta_t: f64,
    /// Evaluation points as `[y, t]` pairs.
    pub points: Vec<(f64, f64)>,
    /// Fixed window half-widths; omitted means rate-optimal ones.
    #[serde(default)]
    pub bandwidth: Option<WindowlessBandwidth>,
}

fn default_smoothness() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowlessBandwidth {
    pub delta_y: f64,
    pub delta_t: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub nus: Vec<f64>,
    pub runs: usize,
    pub base_seed: u64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshPolicySection {
    pub beta: f64,
    pub gamma_t: f64,
    pub gamma_y: f64,
    pub p_y: f64,
    pub tilde_gamma_y: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Subset of `csv`, `plot`.
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_dir() -> PathBuf {
    PathBuf::from(".")
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "plot".into()]
}

/// Parses a JSON run configuration; syntax and unknown-key complaints
/// carry the parser's location information.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| Error::config("<document>", e.to_string()))?;
    cfg.validate_output()?;
    Ok(cfg)
}

fn at(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::config(path, other.to_string()),
    }
}

impl RunConfig {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.model.l, self.model.t_end, self.grid.m, self.grid.n)
            .map_err(at("grid"))
    }

    fn domain(&self) -> Result<DomainSpec> {
        let grid = self.grid()?;
        let modes = self.model.modes.unwrap_or(grid.m() - 1);
        DomainSpec::new(self.model.l, self.model.alpha, modes).map_err(at("model"))
    }

    fn theta(&self) -> Result<Theta> {
        match (self.model.theta, &self.model.theta_field) {
            (Some(c), None) => Ok(Theta::Const(c)),
            (None, Some(f)) => Ok(Theta::Affine { c0: f.c0, cy: f.cy, ct: f.ct }),
            (Some(_), Some(_)) => Err(Error::config(
                "model.theta",
                "theta and theta_field are mutually exclusive",
            )),
            (None, None) => Err(Error::config(
                "model.theta",
                "one of theta or theta_field is required",
            )),
        }
    }

    fn sigma(&self) -> SigmaSpec {
        match &self.model.sigma {
            SigmaIn::Const(c) => SigmaSpec::Const(*c),
            SigmaIn::Nodal(v) => SigmaSpec::Nodal(v.clone()),
        }
    }

    fn reaction(&self) -> Result<ReactionFn> {
        ReactionFn::from_name(&self.model.reaction).map_err(at("model.reaction"))
    }

    /// The fully validated model, including any spectral initial state.
    pub fn model(&self) -> Result<ModelSpec> {
        let grid = self.grid()?;
        let model = ModelSpec::new(
            self.domain()?,
            self.model.nu,
            self.theta().map_err(at("model.theta"))?,
            self.reaction()?,
            self.sigma(),
            self.model.t_end,
        )
        .map_err(at("model"))?;
        // The nodal sigma table must fit the grid.
        model.sigma().nodal(grid.m()).map_err(at("model.sigma"))?;
        match &self.model.x0_modes {
            None => Ok(model),
            Some(coeffs) => {
                let s = SpectralField::new(coeffs.clone()).map_err(at("model.x0_modes"))?;
                let x0 = from_spectral(&s, &grid).map_err(at("model.x0_modes"))?;
                model.with_x0(x0).map_err(at("model.x0_modes"))
            }
        }
    }

    pub fn sim_options(&self) -> Result<SimOptions> {
        let mut opts = SimOptions::default();
        if let Some(noise) = self.model.noise {
            opts.noise = noise;
        }
        if let Some(guard) = self.model.guard {
            if !(guard.is_finite() && guard > 0.0) {
                return Err(Error::config(
                    "model.guard",
                    format!("blow-up guard {guard} must be positive"),
                ));
            }
            opts.guard = guard;
        }
        if let Some(force) = self.model.force {
            opts.force = force;
        }
        Ok(opts)
    }

    pub fn forward_policy(&self) -> ForwardPolicy {
        self.estimator
            .as_ref()
            .and_then(|e| e.forward_policy)
            .unwrap_or(ForwardPolicy::Exact)
    }

    pub fn alpha_bar(&self) -> Result<f64> {
        let a = self.estimator.as_ref().map_or(0.05, |e| e.alpha_bar);
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::config(
                "estimator.alpha_bar",
                format!("miscoverage level {a} must lie in (0, 1)"),
            ));
        }
        Ok(a)
    }

    /// The estimator-side view of the model.
    pub fn physics(&self) -> Result<KnownPhysics> {
        KnownPhysics::new(
            self.domain()?,
            self.model.nu,
            self.reaction()?,
            self.sigma(),
            self.forward_policy(),
        )
        .map_err(at("model"))
    }

    /// The observation window; requires `estimator.window`.
    pub fn window(&self) -> Result<Window> {
        let w = self
            .estimator
            .as_ref()
            .and_then(|e| e.window.as_ref())
            .ok_or_else(|| Error::config("estimator.window", "a window section is required"))?;
        Window::new(w.y0, w.t0, w.delta_y, w.delta_t).map_err(at("estimator.window"))
    }

    pub fn spectral_modes(&self) -> Option<usize> {
        self.estimator.as_ref().and_then(|e| e.modes)
    }

    /// The pointwise estimation plan; requires `estimator.nonparam`.
    pub fn nonparam(&self) -> Result<NonparamSpec> {
        let np = self
            .estimator
            .as_ref()
            .and_then(|e| e.nonparam.as_ref())
            .ok_or_else(|| Error::config("estimator.nonparam", "a nonparam section is required"))?;
        for &(name, v) in &[("eta_y", np.eta_y), ("eta_t", np.eta_t)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(
                    format!("estimator.nonparam.{name}"),
                    format!("smoothness order {v} must be positive"),
                ));
            }
        }
        if np.points.is_empty() {
            return Err(Error::config(
                "estimator.nonparam.points",
                "at least one evaluation point is required",
            ));
        }
        let bandwidth = match &np.bandwidth {
            None => BandwidthPolicy::Optimal,
            Some(b) => BandwidthPolicy::Fixed { delta_y: b.delta_y, delta_t: b.delta_t },
        };
        Ok(NonparamSpec {
            eta_y: np.eta_y,
            eta_t: np.eta_t,
            points: np.points.clone(),
            bandwidth,
        })
    }

    /// The Monte-Carlo experiment; requires the `mc` section.
    pub fn mc_config(&self) -> Result<McConfig> {
        let mc = self
            .mc
            .as_ref()
            .ok_or_else(|| Error::config("mc", "an mc section is required"))?;
        let estimator = match self.estimator.as_ref().and_then(|e| e.kind.as_deref()) {
            None | Some("global") => EstimatorChoice::Global,
            Some("localized") => EstimatorChoice::Localized(self.window()?),
            Some("spectral") => EstimatorChoice::Spectral { modes: self.spectral_modes() },
            Some(other) => {
                return Err(Error::config(
                    "estimator.kind",
                    format!("unknown estimator kind {other:?} (expected global, localized, or spectral)"),
                ))
            }
        };
        let cfg = McConfig {
            model: self.model()?,
            grid: self.grid()?,
            nus: mc.nus.clone(),
            runs: mc.runs,
            base_seed: mc.base_seed,
            alpha_bar: self.alpha_bar()?,
            estimator,
            forward: self.forward_policy(),
            sim: self.sim_options()?,
        };
        cfg.validate().map_err(at("mc"))?;
        Ok(cfg)
    }

    /// Mesh admissibility policy; defaults to the standard one.
    pub fn mesh_policy(&self) -> Result<MeshPolicy> {
        match &self.mesh_policy {
            None => Ok(MeshPolicy::standard()),
            Some(p) => MeshPolicy::new(p.beta, p.gamma_t, p.gamma_y, p.p_y, p.tilde_gamma_y)
                .map_err(at("mesh_policy")),
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.as_ref().map_or_else(default_dir, |o| o.dir.clone())
    }

    /// Whether an output format (`csv`, `plot`) was requested.
    pub fn wants_format(&self, format: &str) -> bool {
        match &self.output {
            None => default_formats().iter().any(|f| f == format),
            Some(o) => o.formats.iter().any(|f| f == format),
        }
    }

    fn validate_output(&self) -> Result<()> {
        if let Some(o) = &self.output {
            for f in &o.formats {
                if f != "csv" && f != "plot" {
                    return Err(Error::config(
                        "output.formats",
                        format!("unknown format {f:?} (expected csv or plot)"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The base seed, when an `mc` section provides one.
    pub fn base_seed(&self) -> Option<u64> {
        self.mc.as_ref().map(|m| m.base_seed)
    }
}
