//! Estimators for the reaction intensity from one observed trajectory.
//!
//! All estimators are ratios of a martingale-increment sum to an observed
//! information: the intensity estimate regresses increments
//! `X_{k+1} - S X_k` (with `S` a one-step diffusion map, see
//! [`ForwardPolicy`](crate::simulate::ForwardPolicy)) on the drift direction
//! `f(X_k)`, weighted by `sigma^{-2}`. The global version sums over the
//! whole space-time grid, the localized version over a space-time window,
//! the nonparametric version assembles per-point localized estimates at
//! bandwidths balancing bias and variance, and the mode-wise version works
//! on eigenmode coefficient paths. The first time increment is always left
//! out of the sums, so estimates are unaffected by how the state at `t_0`
//! was prepared.

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::SigmaSpec;
use crate::reaction::ReactionFn;
use crate::simulate::{ForwardPolicy, Trajectory};
use crate::spectral::{eigen, phi, DomainSpec, SpectralEngine};
use crate::stats::normal_quantile;

/// Everything an estimator is allowed to know: the operator, the
/// diffusivity, the reaction shape, the noise amplitude, and which one-step
/// diffusion map to regress against. The intensity itself is what's being
/// estimated.
#[derive(Clone, Debug)]
pub struct KnownPhysics {
    dom: DomainSpec,
    nu: f64,
    reaction: ReactionFn,
    sigma: SigmaSpec,
    forward: ForwardPolicy,
}

impl KnownPhysics {
    pub fn new(
        dom: DomainSpec,
        nu: f64,
        reaction: ReactionFn,
        sigma: SigmaSpec,
        forward: ForwardPolicy,
    ) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::invalid(format!("diffusivity nu = {nu} must be positive")));
        }
        sigma.validate()?;
        Ok(KnownPhysics { dom, nu, reaction, sigma, forward })
    }

    pub fn dom(&self) -> &DomainSpec {
        &self.dom
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn reaction(&self) -> &ReactionFn {
        &self.reaction
    }

    pub fn sigma(&self) -> &SigmaSpec {
        &self.sigma
    }

    pub fn forward(&self) -> ForwardPolicy {
        self.forward
    }
}

/// A space-time observation window centered at `(y0, t0)`.
///
/// Space: nodes in `[y0 - delta_y l / 2, y0 + delta_y l / 2]` (closed, with
/// a half-spacing tolerance), where `delta_y` in `(0, 1]` is the fraction of
/// the domain the window covers; parts past a boundary select nothing.
/// Time: increments whose left endpoint lies strictly inside
/// `(t0 - delta_t, t0 + delta_t)`, so `delta_t` is a half-width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    y0: f64,
    t0: f64,
    delta_y: f64,
    delta_t: f64,
}

impl Window {
    pub fn new(y0: f64, t0: f64, delta_y: f64, delta_t: f64) -> Result<Self> {
        for &(name, v) in &[("y0", y0), ("t0", t0), ("delta_y", delta_y), ("delta_t", delta_t)] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("window {name} = {v} must be finite")));
            }
        }
        if !(delta_y > 0.0 && delta_y <= 1.0) {
            return Err(Error::invalid(format!(
                "space bandwidth delta_y = {delta_y} must lie in (0, 1]"
            )));
        }
        if !(delta_t > 0.0) {
            return Err(Error::invalid(format!(
                "time bandwidth delta_t = {delta_t} must be positive"
            )));
        }
        Ok(Window { y0, t0, delta_y, delta_t })
    }

    /// The window covering all of `(0, l) x (0, T)`.
    pub fn full(grid: &GridSpec) -> Self {
        Window {
            y0: 0.5 * grid.l(),
            t0: 0.5 * grid.t_end(),
            delta_y: 1.0,
            delta_t: 0.5 * grid.t_end(),
        }
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn delta_y(&self) -> f64 {
        self.delta_y
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    /// Spatial extent `[lo, hi]` on a domain of length `l`: centered on the
    /// anchor and covering a `delta_y` fraction of the domain.
    pub fn space_span(&self, l: f64) -> (f64, f64) {
        let half = 0.5 * self.delta_y * l;
        (self.y0 - half, self.y0 + half)
    }

    /// Temporal extent `(t0 - delta_t, t0 + delta_t)`.
    pub fn time_span(&self) -> (f64, f64) {
        (self.t0 - self.delta_t, self.t0 + self.delta_t)
    }
}

/// One intensity estimate with its observed information and a two-sided
/// normal confidence interval at miscoverage level `alpha_bar`.
#[derive(Clone, Debug)]
pub struct EstimateResult {
    pub theta_hat: f64,
    /// Observed information (the regression denominator); the estimator's
    /// asymptotic variance is its inverse.
    pub fisher: f64,
    /// `fisher^{-1/2}`.
    pub stderr: f64,
    pub ci: (f64, f64),
    pub alpha_bar: f64,
    /// Number of time increments entering the sums.
    pub n_increments: usize,
    /// The window used, when the estimate is localized.
    pub window: Option<Window>,
}

/// Two-sided normal interval `theta_hat -+ q_{1 - alpha_bar/2} fisher^{-1/2}`.
pub fn confidence_interval(theta_hat: f64, fisher: f64, alpha_bar: f64) -> Result<(f64, f64)> {
    if !(fisher.is_finite() && fisher > 0.0) {
        return Err(Error::invalid(format!("information {fisher} must be positive")));
    }
    if !(alpha_bar > 0.0 && alpha_bar < 1.0) {
        return Err(Error::invalid(format!(
            "miscoverage level alpha_bar = {alpha_bar} must lie in (0, 1)"
        )));
    }
    let half = normal_quantile(1.0 - 0.5 * alpha_bar)? / fisher.sqrt();
    Ok((theta_hat - half, theta_hat + half))
}

/// Inclusive node range and inclusive increment-start range selected by a
/// window on a given grid.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Selection {
    j_lo: usize,
    j_hi: usize,
    k_first: usize,
    k_last: usize,
}

impl Selection {
    fn increments(&self) -> usize {
        if self.k_last >= self.k_first {
            self.k_last - self.k_first + 1
        } else {
            0
        }
    }

    fn interior_nodes(&self, m: usize) -> usize {
        let lo = self.j_lo.max(1);
        let hi = self.j_hi.min(m - 1);
        if hi >= lo {
            hi - lo + 1
        } else {
            0
        }
    }
}

fn global_selection(grid: &GridSpec) -> Selection {
    Selection { j_lo: 0, j_hi: grid.m(), k_first: 1, k_last: grid.n().saturating_sub(1) }
}

fn window_selection(grid: &GridSpec, win: &Window) -> Selection {
    let dy = grid.delta_y();
    let (lo, hi) = win.space_span(grid.l());
    let stol = 1e-9 * dy;
    let j_lo = (((lo - stol) / dy).ceil()).max(0.0) as usize;
    let j_hi = ((((hi + stol) / dy).floor()).max(0.0) as usize).min(grid.m());

    let dt = grid.delta_t();
    let (t_lo, t_hi) = win.time_span();
    // Smallest k with t_k strictly above t_lo, largest with t_k strictly
    // below t_hi; increments always start at k >= 1 and end by k = N - 1.
    let k_first = (((t_lo / dt).floor()) as usize + 1).max(1);
    let k_last = (((t_hi / dt).max(0.0).ceil()) as usize)
        .saturating_sub(1)
        .min(grid.n().saturating_sub(1));
    Selection { j_lo, j_hi, k_first, k_last }
}

fn check_physics(traj: &Trajectory, phys: &KnownPhysics) -> Result<()> {
    let grid = traj.grid();
    if (phys.dom.l() - grid.l()).abs() > 1e-12 * grid.l() {
        return Err(Error::GridMismatch {
            what: format!("physics domain length {} vs trajectory length {}", phys.dom.l(), grid.l()),
        });
    }
    if (phys.nu - traj.nu()).abs() > 1e-12 * traj.nu() {
        return Err(Error::GridMismatch {
            what: format!("physics diffusivity {} vs trajectory diffusivity {}", phys.nu, traj.nu()),
        });
    }
    if (phys.dom.alpha() - traj.alpha()).abs() > 1e-12 * traj.alpha() {
        return Err(Error::GridMismatch {
            what: format!(
                "physics fractional order {} vs trajectory order {}",
                phys.dom.alpha(),
                traj.alpha()
            ),
        });
    }
    Ok(())
}

/// Shared core: regression of forward increments on the drift direction
/// over the selected nodes and increments. Per-increment contributions to
/// the numerator and the information are each summed in time order, so a
/// partition of the time range splits the information sum term by term.
fn estimate_core(
    traj: &Trajectory,
    phys: &KnownPhysics,
    alpha_bar: f64,
    sel: Selection,
    window: Option<Window>,
) -> Result<EstimateResult> {
    check_physics(traj, phys)?;
    let grid = traj.grid();
    let m = grid.m();
    let engine = SpectralEngine::new(&phys.dom, m)?;
    let sigma = phys.sigma.nodal(m)?;
    let inv2: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    let dt = grid.delta_t();
    let dy = grid.delta_y();
    let factors: Vec<f64> = engine
        .mu
        .iter()
        .map(|&mu| phys.forward.factor(phys.nu, mu, dt))
        .collect();

    let mut ws = engine.workspace();
    let mut coeffs = vec![0.0; engine.modes()];
    let mut fwd = vec![0.0; m - 1];
    let reaction = &phys.reaction;
    let mut num = 0.0;
    let mut den = 0.0;
    for k in sel.k_first..=sel.k_last {
        let row = traj.row(k);
        let next = traj.row(k + 1);
        engine.analyze(&row[1..m], &mut coeffs, &mut ws);
        for (c, f) in coeffs.iter_mut().zip(&factors) {
            *c *= f;
        }
        engine.synthesize(&coeffs, &mut fwd, &mut ws);
        let mut num_k = 0.0;
        let mut den_k = 0.0;
        for j in sel.j_lo..=sel.j_hi {
            // Trapezoid weight over the selected node range; the forward
            // map keeps boundary nodes at exactly zero.
            let w = if j == sel.j_lo || j == sel.j_hi { 0.5 * dy } else { dy };
            let fx = reaction.eval(row[j]);
            let sx = if j == 0 || j == m { 0.0 } else { fwd[j - 1] };
            let wf = w * inv2[j] * fx;
            num_k += wf * (next[j] - sx);
            den_k += wf * fx;
        }
        num += num_k;
        den += den_k * dt;
    }
    if !(den > 1e-300) {
        return Err(Error::ZeroInformation);
    }
    let theta_hat = num / den;
    let ci = confidence_interval(theta_hat, den, alpha_bar)?;
    Ok(EstimateResult {
        theta_hat,
        fisher: den,
        stderr: 1.0 / den.sqrt(),
        ci,
        alpha_bar,
        n_increments: sel.increments(),
        window,
    })
}

/// Intensity estimate over the whole space-time grid.
pub fn estimate_global(
    traj: &Trajectory,
    phys: &KnownPhysics,
    alpha_bar: f64,
) -> Result<EstimateResult> {
    if traj.grid().n() < 2 {
        return Err(Error::invalid("the global estimator needs at least 2 time steps"));
    }
    estimate_core(traj, phys, alpha_bar, global_selection(traj.grid()), None)
}

/// Intensity estimate over one space-time window.
pub fn estimate_localized(
    traj: &Trajectory,
    phys: &KnownPhysics,
    window: &Window,
    alpha_bar: f64,
) -> Result<EstimateResult> {
    let grid = traj.grid();
    let l = grid.l();
    let t_end = grid.t_end();
    if !(window.y0 > 0.0 && window.y0 < l) {
        return Err(Error::invalid(format!(
            "window anchor y0 = {} must lie strictly inside (0, {l})",
            window.y0
        )));
    }
    if !(window.t0 > 0.0 && window.t0 < t_end) {
        return Err(Error::invalid(format!(
            "window center t0 = {} must lie strictly inside (0, {t_end})",
            window.t0
        )));
    }
    let max_dt = window.t0.min(t_end - window.t0);
    if window.delta_t > max_dt * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "time bandwidth {} reaches outside (0, {t_end}) from t0 = {}",
            window.delta_t, window.t0
        )));
    }
    let max_half_y = window.y0.min(l - window.y0);
    if 0.5 * window.delta_y * l > max_half_y * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "space bandwidth {} reaches outside (0, {l}) from y0 = {}",
            window.delta_y, window.y0
        )));
    }
    let sel = window_selection(grid, window);
    if sel.interior_nodes(grid.m()) < 2 {
        return Err(Error::EmptyWindow {
            what: format!(
                "space range [{:.6}, {:.6}] holds fewer than 2 interior nodes",
                window.space_span(l).0,
                window.space_span(l).1
            ),
        });
    }
    if sel.increments() < 2 {
        let (t_lo, t_hi) = window.time_span();
        return Err(Error::EmptyWindow {
            what: format!("time range ({t_lo:.6}, {t_hi:.6}) holds fewer than 2 increments"),
        });
    }
    estimate_core(traj, phys, alpha_bar, sel, Some(*window))
}

/// Per-mode drift estimator for a scalar linear evolution
/// `dx = (theta - nu mu) x dt + noise`, from a sampled path of `(t, x)`:
/// the ratio of `sum x_k (x_{k+1} - x_k + nu mu x_k dt_k)` to
/// `sum x_k^2 dt_k` over every consecutive pair of the given path.
pub fn ou_mle(path: &[(f64, f64)], nu: f64, mu: f64) -> Result<f64> {
    if path.len() < 2 {
        return Err(Error::invalid("mode path needs at least 2 samples"));
    }
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::invalid(format!("diffusivity nu = {nu} must be positive")));
    }
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::invalid(format!("eigenvalue mu = {mu} must be nonnegative")));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for pair in path.windows(2) {
        let (t0, x0) = pair[0];
        let (t1, x1) = pair[1];
        let dt = t1 - t0;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!(
                "mode path times must strictly increase ({t0} then {t1})"
            )));
        }
        num += x0 * (x1 - x0 + nu * mu * x0 * dt);
        den += x0 * x0 * dt;
    }
    if !(den > 1e-300) {
        return Err(Error::ZeroInformation);
    }
    Ok(num / den)
}

/// Default mode count for the mode-wise estimator: the largest `k` with
/// `nu * lambda_k <= 1` (at least 1, at most the domain's truncation).
pub fn default_mode_count(nu: f64, dom: &DomainSpec) -> Result<usize> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::invalid(format!("diffusivity nu = {nu} must be positive")));
    }
    let mut count = 0usize;
    for k in 1..=dom.modes() {
        let (lambda, _) = eigen(k, dom)?;
        if nu * lambda <= 1.0 {
            count = k;
        } else {
            break;
        }
    }
    Ok(count.max(1))
}

/// Mode-wise intensity estimate: the per-mode drift regressions of the
/// first `modes` eigenmode paths, aggregated into one ratio. Requires the
/// identity reaction and a constant noise amplitude.
pub fn estimate_spectral(
    traj: &Trajectory,
    phys: &KnownPhysics,
    modes: Option<usize>,
    alpha_bar: f64,
) -> Result<EstimateResult> {
    check_physics(traj, phys)?;
    if !phys.reaction.is_identity() {
        return Err(Error::NonlinearReaction { name: phys.reaction.name().to_string() });
    }
    let sigma = match phys.sigma {
        SigmaSpec::Const(s) => s,
        SigmaSpec::Nodal(_) => {
            return Err(Error::invalid(
                "the mode-wise estimator needs a constant noise amplitude",
            ))
        }
    };
    let grid = traj.grid();
    let m = grid.m();
    let n = grid.n();
    if n < 2 {
        return Err(Error::invalid("the mode-wise estimator needs at least 2 time steps"));
    }
    let cap = phys.dom.modes().min(m - 1);
    let k_modes = match modes {
        Some(k) => {
            if k < 1 || k > cap {
                return Err(Error::invalid(format!(
                    "mode count {k} outside the usable range 1..={cap}"
                )));
            }
            k
        }
        None => default_mode_count(phys.nu, &phys.dom)?.min(cap),
    };
    let dom_k = phys.dom.with_modes(k_modes)?;
    let engine = SpectralEngine::new(&dom_k, m)?;
    let mut ws = engine.workspace();
    let dt = grid.delta_t();
    let numu: Vec<f64> = engine.mu.iter().map(|&mu| phys.nu * mu).collect();

    let mut prev = vec![0.0; k_modes];
    let mut cur = vec![0.0; k_modes];
    // The first increment (rows 0 -> 1) is skipped, so the regression
    // starts from the state at t_1.
    engine.analyze(&traj.row(1)[1..m], &mut prev, &mut ws);
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 1..n {
        engine.analyze(&traj.row(k + 1)[1..m], &mut cur, &mut ws);
        let mut num_k = 0.0;
        let mut den_k = 0.0;
        for i in 0..k_modes {
            let x = prev[i];
            num_k += x * (cur[i] - x + numu[i] * x * dt);
            den_k += x * x;
        }
        num += num_k;
        den += den_k * dt;
        std::mem::swap(&mut prev, &mut cur);
    }
    if !(den > 1e-300) {
        return Err(Error::ZeroInformation);
    }
    let theta_hat = num / den;
    let fisher = den / (sigma * sigma);
    let ci = confidence_interval(theta_hat, fisher, alpha_bar)?;
    Ok(EstimateResult {
        theta_hat,
        fisher,
        stderr: 1.0 / fisher.sqrt(),
        ci,
        alpha_bar,
        n_increments: n - 1,
        window: None,
    })
}

/// Bandwidth pair balancing squared bias against variance for given
/// space/time smoothness orders, at noise intensity `phi_value`.
#[derive(Clone, Copy, Debug)]
pub struct Bandwidths {
    pub delta_y: f64,
    pub delta_t: f64,
    /// Harmonic aggregate of the smoothness orders.
    pub eta_eff: f64,
}

/// Rate-optimal window half-widths for pointwise estimation under smoothness
/// `eta_y` in space and `eta_t` in time:
/// `delta_y = phi^(-eta_eff / (eta_y (2 eta_eff + 1)))` and likewise in
/// time, with `1/eta_eff = 1/eta_y + 1/eta_t`. Requires `phi_value > 1`
/// (windows would not shrink otherwise).
pub fn optimal_bandwidths(eta_y: f64, eta_t: f64, phi_value: f64) -> Result<Bandwidths> {
    for &(name, v) in &[("eta_y", eta_y), ("eta_t", eta_t)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("smoothness {name} = {v} must be positive")));
        }
    }
    if !(phi_value.is_finite() && phi_value > 1.0) {
        return Err(Error::PhiTooSmall { phi: phi_value });
    }
    let eta_eff = 1.0 / (1.0 / eta_y + 1.0 / eta_t);
    let denom = 2.0 * eta_eff + 1.0;
    let delta_y = phi_value.powf(-eta_eff / (eta_y * denom));
    let delta_t = phi_value.powf(-eta_eff / (eta_t * denom));
    Ok(Bandwidths { delta_y, delta_t, eta_eff })
}

/// How the nonparametric estimator picks its window half-widths.
#[derive(Clone, Debug)]
pub enum BandwidthPolicy {
    /// Rate-optimal half-widths from the trajectory's own noise intensity.
    Optimal,
    /// Fixed half-widths, clipped per point to fit the domain.
    Fixed { delta_y: f64, delta_t: f64 },
}

/// Evaluation plan for pointwise intensity estimation.
#[derive(Clone, Debug)]
pub struct NonparamSpec {
    pub eta_y: f64,
    pub eta_t: f64,
    /// `(y0, t0)` evaluation points.
    pub points: Vec<(f64, f64)>,
    pub bandwidth: BandwidthPolicy,
}

/// One pointwise estimate; failures (a window too small for the grid, an
/// anchor outside the domain) are recorded per point rather than aborting
/// the whole sweep.
#[derive(Debug)]
pub struct PointEstimate {
    pub y0: f64,
    pub t0: f64,
    /// Window half-widths actually used, after clipping to the domain.
    pub delta_y: f64,
    pub delta_t: f64,
    pub outcome: Result<EstimateResult>,
}

/// Pointwise intensity estimates at each requested point, over windows
/// `(y0 - delta_y, y0 + delta_y) x (t0 - delta_t, t0 + delta_t)` with the
/// half-widths from the bandwidth policy clipped to fit `(0, l) x (0, T)`.
pub fn estimate_nonparametric(
    traj: &Trajectory,
    phys: &KnownPhysics,
    spec: &NonparamSpec,
    alpha_bar: f64,
) -> Result<Vec<PointEstimate>> {
    check_physics(traj, phys)?;
    if spec.points.is_empty() {
        return Err(Error::invalid("pointwise estimation needs at least one evaluation point"));
    }
    let grid = traj.grid();
    let l = grid.l();
    let t_end = grid.t_end();
    let (base_dy, base_dt) = match &spec.bandwidth {
        BandwidthPolicy::Optimal => {
            let phi_value = phi(traj.nu(), t_end, &phys.dom)?;
            let bw = optimal_bandwidths(spec.eta_y, spec.eta_t, phi_value)?;
            (bw.delta_y, bw.delta_t)
        }
        BandwidthPolicy::Fixed { delta_y, delta_t } => {
            if !(delta_y.is_finite() && *delta_y > 0.0 && *delta_y <= l) {
                return Err(Error::invalid(format!(
                    "fixed space bandwidth {delta_y} must lie in (0, {l}]"
                )));
            }
            if !(delta_t.is_finite() && *delta_t > 0.0) {
                return Err(Error::invalid(format!(
                    "fixed time bandwidth {delta_t} must be positive"
                )));
            }
            (*delta_y, *delta_t)
        }
    };

    let mut out = Vec::with_capacity(spec.points.len());
    for &(y0, t0) in &spec.points {
        if !(y0 > 0.0 && y0 < l && t0 > 0.0 && t0 < t_end) {
            out.push(PointEstimate {
                y0,
                t0,
                delta_y: base_dy,
                delta_t: base_dt,
                outcome: Err(Error::invalid(format!(
                    "evaluation point ({y0}, {t0}) lies outside (0, {l}) x (0, {t_end})"
                ))),
            });
            continue;
        }
        let delta_y = base_dy.min(y0).min(l - y0);
        let delta_t = base_dt.min(t0).min(t_end - t0);
        let outcome = Window::new(y0, t0, 2.0 * delta_y / l, delta_t)
            .and_then(|w| estimate_localized(traj, phys, &w, alpha_bar));
        out.push(PointEstimate { y0, t0, delta_y, delta_t, outcome });
    }
    Ok(out)
}
