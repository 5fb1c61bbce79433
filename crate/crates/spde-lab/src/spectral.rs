//! Eigenbasis of the Dirichlet fractional Laplacian on an interval.
//!
//! The operator `nu * (-Laplace)^(alpha/2)` on `(0, l)` with Dirichlet
//! boundary diagonalizes in the sine basis
//! `e_k(y) = sqrt(2/l) sin(k pi y / l)` with Laplace eigenvalues
//! `lambda_k = (k pi / l)^2` and fractional eigenvalues
//! `mu_k = lambda_k^(alpha/2)`. This module owns that basis: nodal <->
//! spectral transforms (a type-I discrete sine transform run through an
//! FFT), the diffusion semigroup, the noise-intensity integral [`phi`], and
//! the heat kernel. Everything downstream (solver, estimators, information
//! functionals) is built on these operations.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};

/// Continuous-problem description: interval length, fractional order, and
/// the number of retained eigenmodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    l: f64,
    alpha: f64,
    modes: usize,
}

impl DomainSpec {
    pub fn new(l: f64, alpha: f64, modes: usize) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::invalid(format!("domain length l = {l} must be positive")));
        }
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(Error::invalid(format!(
                "fractional order alpha = {alpha} must lie in (1, 2]"
            )));
        }
        if modes < 1 {
            return Err(Error::invalid("the spectral truncation needs at least 1 mode"));
        }
        Ok(DomainSpec { l, alpha, modes })
    }

    /// Full-rank truncation for a grid with `m` subintervals (`K = M - 1`),
    /// the default used throughout the solver and estimators.
    pub fn for_grid(l: f64, alpha: f64, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid(format!("M = {m} spatial subintervals, need at least 2")));
        }
        DomainSpec::new(l, alpha, m - 1)
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of retained eigenmodes `K`.
    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Copy of this domain with a different truncation level.
    pub fn with_modes(&self, modes: usize) -> Result<Self> {
        DomainSpec::new(self.l, self.alpha, modes)
    }
}

/// Coefficients of a field in the sine eigenbasis, `k = 1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("a spectral field needs at least one coefficient"));
        }
        Ok(SpectralField { coeffs })
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Euclidean norm of the coefficient vector; by Parseval this is the
    /// `L^2(0, l)` norm of the represented field.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Laplace and fractional eigenvalues `(lambda_k, mu_k)` of mode `k >= 1`.
pub fn eigen(k: usize, dom: &DomainSpec) -> Result<(f64, f64)> {
    if k < 1 {
        return Err(Error::invalid("eigenmode index k starts at 1"));
    }
    let freq = k as f64 * PI / dom.l;
    let lambda = freq * freq;
    Ok((lambda, fractional_power(lambda, dom.alpha)))
}

/// `lambda^(alpha/2)`, with the common `alpha = 2` case kept bit-exact.
fn fractional_power(lambda: f64, alpha: f64) -> f64 {
    if alpha == 2.0 {
        lambda
    } else {
        lambda.powf(alpha / 2.0)
    }
}

// ---------------------------------------------------------------------------
// Type-I discrete sine transform
// ---------------------------------------------------------------------------

/// Shared FFT plans keyed by grid subinterval count `M` (FFT length `2M`).
static FFT_PLANS: Lazy<Mutex<HashMap<usize, Arc<dyn Fft<f64>>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

fn fft_plan(m: usize) -> Arc<dyn Fft<f64>> {
    let mut plans = FFT_PLANS.lock().expect("fft plan cache poisoned");
    plans
        .entry(m)
        .or_insert_with(|| FftPlanner::new().plan_fft_forward(2 * m))
        .clone()
}

/// Scratch buffers for repeated sine transforms of one size.
pub(crate) struct DstWorkspace {
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
    pub(crate) real: Vec<f64>,
}

impl DstWorkspace {
    pub(crate) fn new(m: usize) -> Self {
        let plan = fft_plan(m);
        DstWorkspace {
            buf: vec![Complex::new(0.0, 0.0); 2 * m],
            scratch: vec![Complex::new(0.0, 0.0); plan.get_inplace_scratch_len()],
            real: vec![0.0; m - 1],
        }
    }
}

/// Unnormalized type-I DST of size `M - 1` on a grid with `M` subintervals:
/// `out[k-1] = sum_{j=1}^{M-1} x[j-1] sin(pi j k / M)`.
///
/// Realized as a length-`2M` FFT of the odd extension; the matrix is
/// symmetric and satisfies `S^2 = (M/2) I`, which makes the nodal <->
/// spectral round trip exact up to rounding.
pub(crate) struct SineTransform {
    m: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl SineTransform {
    pub(crate) fn new(m: usize) -> Self {
        SineTransform { m, fft: fft_plan(m) }
    }

    pub(crate) fn apply(&self, x: &[f64], out: &mut [f64], ws: &mut DstWorkspace) {
        let m = self.m;
        debug_assert_eq!(x.len(), m - 1);
        debug_assert_eq!(out.len(), m - 1);
        let buf = &mut ws.buf;
        buf[0] = Complex::new(0.0, 0.0);
        buf[m] = Complex::new(0.0, 0.0);
        for j in 1..m {
            let v = x[j - 1];
            buf[j] = Complex::new(v, 0.0);
            buf[2 * m - j] = Complex::new(-v, 0.0);
        }
        self.fft.process_with_scratch(buf, &mut ws.scratch);
        for k in 1..m {
            out[k - 1] = -0.5 * buf[k].im;
        }
    }
}

// ---------------------------------------------------------------------------
// Spectral engine: transforms plus cached eigenvalues for one (domain, grid)
// ---------------------------------------------------------------------------

/// Transform pair and eigenvalue table bound to one domain and grid size.
/// The hot loops (solver steps, estimator sweeps) go through this so plans
/// and eigenvalues are computed once.
pub(crate) struct SpectralEngine {
    m: usize,
    modes: usize,
    tf: SineTransform,
    pub(crate) mu: Vec<f64>,
    analyze_scale: f64,
    synth_scale: f64,
}

impl SpectralEngine {
    pub(crate) fn new(dom: &DomainSpec, m: usize) -> Result<Self> {
        if dom.modes > m - 1 {
            return Err(Error::invalid(format!(
                "truncation K = {} exceeds the grid capacity M - 1 = {}",
                dom.modes,
                m - 1
            )));
        }
        let mu = (1..=dom.modes)
            .map(|k| eigen(k, dom).map(|(_, mu)| mu))
            .collect::<Result<Vec<_>>>()?;
        Ok(SpectralEngine {
            m,
            modes: dom.modes,
            tf: SineTransform::new(m),
            mu,
            analyze_scale: dom.l / m as f64 * (2.0 / dom.l).sqrt(),
            synth_scale: (2.0 / dom.l).sqrt(),
        })
    }

    pub(crate) fn workspace(&self) -> DstWorkspace {
        DstWorkspace::new(self.m)
    }

    pub(crate) fn modes(&self) -> usize {
        self.modes
    }

    /// Projects interior nodal values (length `M - 1`) onto the first `K`
    /// eigenmodes with quadrature weight `l / M`.
    pub(crate) fn analyze(&self, interior: &[f64], coeffs: &mut [f64], ws: &mut DstWorkspace) {
        debug_assert_eq!(coeffs.len(), self.modes);
        let mut full = std::mem::take(&mut ws.real);
        self.tf.apply(interior, &mut full, ws);
        for k in 0..self.modes {
            coeffs[k] = self.analyze_scale * full[k];
        }
        ws.real = full;
    }

    /// Evaluates a coefficient vector (length `K`) at the interior nodes.
    pub(crate) fn synthesize(&self, coeffs: &[f64], interior: &mut [f64], ws: &mut DstWorkspace) {
        debug_assert_eq!(coeffs.len(), self.modes);
        let mut padded = std::mem::take(&mut ws.real);
        padded[..self.modes].copy_from_slice(coeffs);
        padded[self.modes..].fill(0.0);
        self.tf.apply(&padded, interior, ws);
        ws.real = padded;
        for v in interior.iter_mut() {
            *v *= self.synth_scale;
        }
    }
}

// ---------------------------------------------------------------------------
// Public transform operations
// ---------------------------------------------------------------------------

/// Boundary tolerance for Dirichlet states entering the analysis transform.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Projects a nodal Dirichlet field onto the first `K` eigenmodes.
///
/// Rejects fields whose boundary values exceed [`BOUNDARY_TOL`] and
/// truncations with `K > M - 1`.
pub fn to_spectral(g: &GridField, dom: &DomainSpec) -> Result<SpectralField> {
    let m = g.m();
    let values = g.values();
    for &(idx, v) in &[(0usize, values[0]), (m, values[m])] {
        if v.abs() > BOUNDARY_TOL {
            return Err(Error::BoundaryViolation { index: idx, value: v });
        }
    }
    let engine = SpectralEngine::new(dom, m)?;
    let mut ws = engine.workspace();
    let mut coeffs = vec![0.0; dom.modes];
    engine.analyze(&values[1..m], &mut coeffs, &mut ws);
    SpectralField::new(coeffs)
}

/// Evaluates a spectral field at the nodes of `grid`; boundary nodes are
/// exact zeros.
pub fn from_spectral(s: &SpectralField, grid: &GridSpec) -> Result<GridField> {
    let m = grid.m();
    if s.modes() > m - 1 {
        return Err(Error::invalid(format!(
            "truncation K = {} exceeds the grid capacity M - 1 = {}",
            s.modes(),
            m - 1
        )));
    }
    let dom = DomainSpec::new(grid.l(), 2.0, s.modes())?;
    let engine = SpectralEngine::new(&dom, m)?;
    let mut ws = engine.workspace();
    let mut field = GridField::zeros(m)?;
    {
        let values = field.values_mut();
        let (_, interior) = values.split_first_mut().expect("nonempty");
        let last = interior.len() - 1;
        engine.synthesize(s.coeffs(), &mut interior[..last], &mut ws);
    }
    field.clamp_boundary();
    Ok(field)
}

/// Applies the diffusion semigroup at time `nu * t`: `c_k -> exp(-nu mu_k t) c_k`.
pub fn apply_semigroup(s: &SpectralField, nu: f64, t: f64, dom: &DomainSpec) -> Result<SpectralField> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("semigroup time t = {t} must be nonnegative")));
    }
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::invalid(format!("diffusivity nu = {nu} must be nonnegative")));
    }
    if s.modes() > dom.modes {
        return Err(Error::invalid(format!(
            "field has {} modes but the domain retains only {}",
            s.modes(),
            dom.modes
        )));
    }
    let mut out = s.coeffs().to_vec();
    for (k, c) in out.iter_mut().enumerate() {
        let (_, mu) = eigen(k + 1, dom)?;
        *c *= (-nu * mu * t).exp();
    }
    SpectralField::new(out)
}

/// Noise-intensity integral: the accumulated squared Hilbert-Schmidt norm of
/// the semigroup,
/// `phi(nu, t) = sum_{k=1}^{K} (1 - exp(-2 mu_k nu t)) / (2 mu_k nu)`.
///
/// This is the closed form of `int_0^t ||S_{nu s}||_HS^2 ds` for the
/// truncated basis; it scales like `nu^(-1/alpha) t^(1 - 1/alpha)` as
/// `nu -> 0`. `t = 0` returns exactly 0.
pub fn phi(nu: f64, t: f64, dom: &DomainSpec) -> Result<f64> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::invalid(format!("diffusivity nu = {nu} must be positive")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("time t = {t} must be nonnegative")));
    }
    let mut total = 0.0;
    for k in 1..=dom.modes {
        let (_, mu) = eigen(k, dom)?;
        let decay = 2.0 * mu * nu;
        // (1 - exp(-decay * t)) / decay without cancellation for small exponents.
        total += -(-decay * t).exp_m1() / decay;
    }
    Ok(total)
}

/// Heat kernel of the `nu`-scaled semigroup at time `t > 0`:
/// `G(t, x, y) = sum_{k=1}^{K} exp(-nu mu_k t) e_k(x) e_k(y)`.
///
/// Returns the truncated value together with a rigorous bound on the
/// dropped tail, `(2/l) sum_{k>K} exp(-nu mu_k t)`, estimated through the
/// geometric bound implied by the increasing eigenvalue gaps.
pub fn green_kernel(t: f64, x: f64, y: f64, nu: f64, dom: &DomainSpec) -> Result<(f64, f64)> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("kernel time t = {t} must be positive")));
    }
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::invalid(format!("diffusivity nu = {nu} must be positive")));
    }
    for &(name, v) in &[("x", x), ("y", y)] {
        if !(0.0..=dom.l).contains(&v) {
            return Err(Error::invalid(format!("{name} = {v} lies outside [0, {}]", dom.l)));
        }
    }
    let scale = 2.0 / dom.l;
    let mut value = 0.0;
    for k in 1..=dom.modes {
        let (_, mu) = eigen(k, dom)?;
        let freq = k as f64 * PI / dom.l;
        // The sine factors are multiplied first so that the sum is
        // symmetric in (x, y) down to the last bit.
        let cross = (freq * x).sin() * (freq * y).sin();
        value += (-nu * mu * t).exp() * scale * cross;
    }
    // Tail: mu_k gaps increase for alpha in (1, 2], so the dropped sum is
    // dominated by a geometric series with ratio exp(-gap * nu * t).
    let (_, mu_next) = eigen(dom.modes + 1, dom)?;
    let (_, mu_next2) = eigen(dom.modes + 2, dom)?;
    let gap = mu_next2 - mu_next;
    let denom = -(-gap * nu * t).exp_m1();
    let tail = scale * (-nu * mu_next * t).exp() / denom;
    Ok((value, tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Recursive adaptive Simpson quadrature, used as an independent oracle
    /// for the closed-form expressions in this module.
    pub(crate) fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
        }
        fn recurse(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            fa: f64,
            b: f64,
            fb: f64,
            whole: f64,
            m: f64,
            fm: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let (left, lm, flm) = simpson(f, a, fa, m, fm);
            let (right, rm, frm) = simpson(f, m, fm, b, fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                left + right + delta / 15.0
            } else {
                recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                    + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let (whole, m, fm) = simpson(f, a, fa, b, fb);
        recurse(f, a, fa, b, fb, whole, m, fm, tol, 40)
    }

    fn rand_interior(m: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m - 1).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn eigen_matches_known_values() {
        let dom = DomainSpec::new(1.0, 2.0, 8).unwrap();
        let (lambda2, mu2) = eigen(2, &dom).unwrap();
        assert!((lambda2 - 4.0 * PI * PI).abs() < 1e-12);
        assert_eq!(lambda2, mu2); // alpha = 2 keeps mu = lambda bit-exact

        let dom_frac = DomainSpec::new(1.0, 1.5, 8).unwrap();
        let (lambda1, mu1) = eigen(1, &dom_frac).unwrap();
        assert!((lambda1 - PI * PI).abs() < 1e-12);
        assert!((mu1 - PI.powf(1.5)).abs() < 1e-12);
        assert!((mu1 - 5.568328).abs() < 1e-6);
    }

    #[test]
    fn eigen_growth_constant_is_exact() {
        // mu_k / k^alpha = (pi / l)^alpha for every k; check far apart modes.
        let dom = DomainSpec::new(2.0, 1.7, 2048).unwrap();
        let (_, mu_a) = eigen(512, &dom).unwrap();
        let (_, mu_b) = eigen(1024, &dom).unwrap();
        let ra = mu_a / 512f64.powf(1.7);
        let rb = mu_b / 1024f64.powf(1.7);
        assert!((ra / rb - 1.0).abs() < 1e-3 * 1e-3); // far below the 0.1% gate
        assert!((ra - (PI / 2.0).powf(1.7)).abs() < 1e-12);
    }

    #[test]
    fn eigen_rejects_mode_zero() {
        let dom = DomainSpec::new(1.0, 2.0, 4).unwrap();
        assert!(eigen(0, &dom).is_err());
    }

    #[test]
    fn domain_spec_validates_inputs() {
        assert!(DomainSpec::new(1.0, 1.0, 4).is_err()); // alpha must exceed 1
        assert!(DomainSpec::new(1.0, 2.5, 4).is_err());
        assert!(DomainSpec::new(-1.0, 2.0, 4).is_err());
        assert!(DomainSpec::new(1.0, 2.0, 0).is_err());
        assert!(DomainSpec::new(1.0, 2.0, 1).is_ok());
        assert_eq!(DomainSpec::for_grid(1.0, 2.0, 256).unwrap().modes(), 255);
    }

    #[test]
    fn sine_transform_matches_direct_sum() {
        // The FFT-based DST must agree with the O(n^2) definition.
        let m = 24;
        let x = rand_interior(m, 7);
        let tf = SineTransform::new(m);
        let mut ws = DstWorkspace::new(m);
        let mut fast = vec![0.0; m - 1];
        tf.apply(&x, &mut fast, &mut ws);
        for k in 1..m {
            let direct: f64 = (1..m)
                .map(|j| x[j - 1] * (PI * (j * k) as f64 / m as f64).sin())
                .sum();
            assert!(
                (fast[k - 1] - direct).abs() < 1e-11,
                "mode {k}: fast {} vs direct {}",
                fast[k - 1],
                direct
            );
        }
    }

    #[test]
    fn transform_round_trip_is_exact_at_full_rank() {
        let m = 256;
        let grid = GridSpec::new(1.0, 1.0, m, 1).unwrap();
        let dom = DomainSpec::for_grid(1.0, 2.0, m).unwrap();
        let mut values = vec![0.0; m + 1];
        values[1..m].copy_from_slice(&rand_interior(m, 42));
        let g = GridField::new(values).unwrap();

        let c = to_spectral(&g, &dom).unwrap();
        let back = from_spectral(&c, &grid).unwrap();
        let sup = g
            .values()
            .iter()
            .zip(back.values())
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        assert!(sup < 1e-12, "round-trip sup error {sup}");

        // Same in the other direction: coefficients -> nodes -> coefficients.
        let c2 = to_spectral(&back, &dom).unwrap();
        let sup_c = c
            .coeffs()
            .iter()
            .zip(c2.coeffs())
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        assert!(sup_c < 1e-12, "coefficient round-trip sup error {sup_c}");
    }

    #[test]
    fn transform_preserves_l2_norm() {
        // Parseval with the l/M quadrature weight is exact on the grid.
        let m = 128;
        let l = 2.0;
        let dom = DomainSpec::for_grid(l, 2.0, m).unwrap();
        let mut values = vec![0.0; m + 1];
        values[1..m].copy_from_slice(&rand_interior(m, 11));
        let g = GridField::new(values).unwrap();
        let c = to_spectral(&g, &dom).unwrap();
        let nodal: f64 = g.values().iter().map(|v| v * v).sum::<f64>() * l / m as f64;
        let spectral: f64 = c.coeffs().iter().map(|v| v * v).sum();
        assert!((nodal - spectral).abs() < 1e-12 * nodal.max(1.0));
    }

    #[test]
    fn to_spectral_rejects_boundary_violation() {
        let dom = DomainSpec::for_grid(1.0, 2.0, 8).unwrap();
        let mut values = vec![0.0; 9];
        values[8] = 1e-9;
        let g = GridField::new(values).unwrap();
        match to_spectral(&g, &dom) {
            Err(Error::BoundaryViolation { index: 8, .. }) => {}
            other => panic!("expected boundary violation, got {other:?}"),
        }
    }

    #[test]
    fn transforms_reject_overfull_truncation() {
        let dom = DomainSpec::new(1.0, 2.0, 8).unwrap(); // K = 8 > M - 1 = 7
        let g = GridField::zeros(8).unwrap();
        assert!(to_spectral(&g, &dom).is_err());
        let s = SpectralField::new(vec![0.0; 8]).unwrap();
        let grid = GridSpec::new(1.0, 1.0, 8, 1).unwrap();
        assert!(from_spectral(&s, &grid).is_err());
    }

    #[test]
    fn semigroup_matches_frozen_decay_factor() {
        // One step of length 1 at nu = 0.01 damps mode 1 by exp(-0.01 pi^2).
        let dom = DomainSpec::new(1.0, 2.0, 4).unwrap();
        let s = SpectralField::new(vec![1.0, 0.5, -0.25, 0.125]).unwrap();
        let out = apply_semigroup(&s, 0.01, 1.0, &dom).unwrap();
        let expected = (-0.01 * PI * PI).exp();
        assert!((out.coeffs()[0] - expected).abs() < 1e-15);
        assert!((expected - 0.906018).abs() < 1e-6);
        // t = 0 is the identity, bit for bit.
        let id = apply_semigroup(&s, 0.01, 0.0, &dom).unwrap();
        assert_eq!(id.coeffs(), s.coeffs());
    }

    #[test]
    fn semigroup_rejects_negative_time() {
        let dom = DomainSpec::new(1.0, 2.0, 4).unwrap();
        let s = SpectralField::new(vec![1.0; 4]).unwrap();
        assert!(apply_semigroup(&s, 0.01, -1e-9, &dom).is_err());
    }

    #[test]
    fn phi_matches_single_mode_quadrature() {
        // K = 1, nu = 1, T = 1: phi = (1 - exp(-2 pi^2)) / (2 pi^2), which an
        // independent adaptive quadrature of exp(-2 pi^2 s) reproduces.
        let dom = DomainSpec::new(1.0, 2.0, 1).unwrap();
        let value = phi(1.0, 1.0, &dom).unwrap();
        let oracle = adaptive_simpson(&|s| (-2.0 * PI * PI * s).exp(), 0.0, 1.0, 1e-13);
        assert!((value - oracle).abs() < 1e-10, "phi {value} vs quadrature {oracle}");
        assert!((value - 0.050660592).abs() < 1e-7);
    }

    #[test]
    fn phi_matches_multi_mode_quadrature() {
        let dom = DomainSpec::new(1.5, 1.6, 64).unwrap();
        let nu = 0.05;
        let t = 0.8;
        let value = phi(nu, t, &dom).unwrap();
        let integrand = |s: f64| -> f64 {
            (1..=64)
                .map(|k| {
                    let (_, mu) = eigen(k, &dom).unwrap();
                    (-2.0 * nu * mu * s).exp()
                })
                .sum()
        };
        let oracle = adaptive_simpson(&integrand, 0.0, t, 1e-12);
        assert!(
            (value - oracle).abs() < 1e-10 * value.max(1.0),
            "phi {value} vs quadrature {oracle}"
        );
    }

    #[test]
    fn phi_is_zero_at_time_zero_and_rejects_bad_nu() {
        let dom = DomainSpec::new(1.0, 2.0, 16).unwrap();
        assert_eq!(phi(0.3, 0.0, &dom).unwrap(), 0.0);
        assert!(phi(0.0, 1.0, &dom).is_err());
        assert!(phi(-0.1, 1.0, &dom).is_err());
        assert!(phi(f64::NAN, 1.0, &dom).is_err());
    }

    #[test]
    fn green_kernel_is_symmetric_and_positive_on_diagonal() {
        let dom = DomainSpec::new(1.0, 2.0, 64).unwrap();
        let (vxy, _) = green_kernel(0.05, 0.3, 0.7, 0.5, &dom).unwrap();
        let (vyx, _) = green_kernel(0.05, 0.7, 0.3, 0.5, &dom).unwrap();
        assert_eq!(vxy, vyx);
        let (diag, _) = green_kernel(0.05, 0.4, 0.4, 0.5, &dom).unwrap();
        assert!(diag > 0.0);
    }

    #[test]
    fn green_kernel_rejects_time_zero_and_reports_tail() {
        let dom = DomainSpec::new(1.0, 2.0, 8).unwrap();
        assert!(green_kernel(0.0, 0.3, 0.7, 0.5, &dom).is_err());
        let (_, tail_small) = green_kernel(0.05, 0.3, 0.7, 0.5, &dom).unwrap();
        let richer = dom.with_modes(32).unwrap();
        let (_, tail_large) = green_kernel(0.05, 0.3, 0.7, 0.5, &richer).unwrap();
        assert!(tail_small > 0.0);
        assert!(tail_large < tail_small, "tail bound must shrink as K grows");
    }

    #[test]
    fn green_kernel_tail_bound_dominates_true_tail() {
        // Compare the reported bound against the explicitly summed tail.
        let dom = DomainSpec::new(1.0, 1.8, 12).unwrap();
        let nu = 0.4;
        let t = 0.1;
        let (_, bound) = green_kernel(t, 0.25, 0.6, nu, &dom).unwrap();
        let big = dom.with_modes(4000).unwrap();
        let mut true_tail = 0.0;
        for k in 13..=4000 {
            let (_, mu) = eigen(k, &big).unwrap();
            true_tail += 2.0 / dom.l() * (-nu * mu * t).exp();
        }
        assert!(bound >= true_tail, "bound {bound} below actual tail {true_tail}");
        assert!(bound < 10.0 * true_tail + 1e-300, "bound {bound} is wildly loose");
    }

    #[test]
    fn green_kernel_agrees_with_semigroup_route() {
        // Propagating z under the semigroup and integrating z against the
        // kernel are the same operation on the retained modes.
        let m = 64;
        let dom = DomainSpec::for_grid(1.0, 2.0, m).unwrap();
        let grid = GridSpec::new(1.0, 1.0, m, 1).unwrap();
        let nu = 0.05;
        let t = 0.2;
        // z built from low modes so the fine-grid quadrature resolves it.
        let amps = [0.8, -0.4, 0.25, 0.0, 0.1, -0.05];
        let zf = |y: f64| -> f64 {
            amps.iter()
                .enumerate()
                .map(|(i, a)| a * (2.0_f64).sqrt() * ((i + 1) as f64 * PI * y).sin())
                .sum()
        };
        let mut z = vec![0.0; dom.modes()];
        z[..amps.len()].copy_from_slice(&amps);
        let s = SpectralField::new(z).unwrap();
        let propagated = from_spectral(&apply_semigroup(&s, nu, t, &dom).unwrap(), &grid).unwrap();

        for &xj in &[13usize, 32, 49] {
            let x = grid.node(xj);
            // Composite Simpson on a grid 64x finer than the nodal one.
            let fine = 4096usize;
            let h = 1.0 / fine as f64;
            let mut quad = 0.0;
            for i in 0..=fine {
                let y = i as f64 * h;
                let (gk, _) = green_kernel(t, x, y, nu, &dom).unwrap();
                let w = if i == 0 || i == fine {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                quad += w * gk * zf(y);
            }
            quad *= h / 3.0;
            let diff = (quad - propagated.values()[xj]).abs();
            assert!(diff < 1e-8, "node {xj}: kernel route {quad} vs semigroup route differ by {diff}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_semigroup_composition(
            nu in 1e-4..1.0f64,
            t1 in 0.0..2.0f64,
            t2 in 0.0..2.0f64,
            alpha in 1.01..=2.0f64,
            seed in 0u64..1000,
        ) {
            let dom = DomainSpec::new(1.0, alpha, 16).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coeffs: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = SpectralField::new(coeffs).unwrap();
            let two_steps =
                apply_semigroup(&apply_semigroup(&s, nu, t1, &dom).unwrap(), nu, t2, &dom).unwrap();
            let one_step = apply_semigroup(&s, nu, t1 + t2, &dom).unwrap();
            for (a, b) in two_steps.coeffs().iter().zip(one_step.coeffs()) {
                prop_assert!((a - b).abs() < 1e-13, "composition defect {}", (a - b).abs());
            }
        }

        #[test]
        fn prop_semigroup_contracts(
            nu in 1e-4..1.0f64,
            t in 0.0..5.0f64,
            alpha in 1.01..=2.0f64,
            seed in 0u64..1000,
        ) {
            let dom = DomainSpec::new(1.0, alpha, 12).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coeffs: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let s = SpectralField::new(coeffs).unwrap();
            let out = apply_semigroup(&s, nu, t, &dom).unwrap();
            prop_assert!(out.norm() <= s.norm() * (1.0 + 1e-15));
        }

        #[test]
        fn prop_phi_two_sided_time_bound(
            nu in 1e-4..1.0f64,
            t1 in 1e-3..2.0f64,
            scale in 1.0..4.0f64,
            alpha in 1.01..=2.0f64,
        ) {
            // phi grows in t but sublinearly: phi(t1) <= phi(t2) <= (t2/t1) phi(t1).
            let dom = DomainSpec::new(1.0, alpha, 32).unwrap();
            let t2 = t1 * scale;
            let p1 = phi(nu, t1, &dom).unwrap();
            let p2 = phi(nu, t2, &dom).unwrap();
            prop_assert!(p2 >= p1 * (1.0 - 1e-12));
            prop_assert!(p2 <= t2 / t1 * p1 * (1.0 + 1e-12));
        }

        #[test]
        fn prop_round_trip_any_grid(
            m in 3usize..64,
            seed in 0u64..1000,
        ) {
            let dom = DomainSpec::for_grid(1.0, 2.0, m).unwrap();
            let grid = GridSpec::new(1.0, 1.0, m, 1).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut values = vec![0.0; m + 1];
            for v in values[1..m].iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            let g = GridField::new(values).unwrap();
            let back = from_spectral(&to_spectral(&g, &dom).unwrap(), &grid).unwrap();
            for (a, b) in g.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
