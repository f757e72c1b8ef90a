//! Levi's parametrix: q₀ = (𝓛ˣ - 𝓛ʸ)p^y, the Volterra equation
//! q = q₀ + q₀ ⊛ q and the kernel p = p^y + p^· ⊛ q.
//!
//! Time integrals use product integration on a uniform mesh t_j = jΔ. On the
//! first interval q - q₀ is taken linear with value zero at s = 0, so the
//! singular part q₀(s) is integrated directly. On later intervals q is
//! piecewise linear. Space integrals are trapezoidal on a grid that is
//! uniform in a core box and geometrically stretched out to X_max.

use ndarray::{Array2, Axis, Zip};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::model::{dist, norm, sub, ModelSpec, Point};
use crate::numerics::{integrate, integrate_to_inf, GaussRule, Lu, Spline};
use crate::stable_density::{
    apply_frozen_generator, build_symbol, density, shared_bank, tail_series, BankSlice, Estimate,
    FrozenSymbol, JumpIntegral, StableBank,
};

/// Discretisation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridOptions {
    /// Spacing of the uniform core.
    pub h: f64,
    /// Half-width of the uniform core.
    pub x_core: f64,
    /// Truncation radius.
    pub x_max: f64,
    /// Ratio between consecutive spacings outside the core.
    pub stretch: f64,
    /// Number of time steps on (0, 1].
    pub steps: usize,
    /// Final time.
    pub t_max: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            h: 0.1,
            x_core: 4.0,
            x_max: 60.0,
            stretch: 1.15,
            steps: 40,
            t_max: 1.0,
        }
    }
}

/// Space-time grid. `points` is the tensor grid built from `axis`.
#[derive(Clone, Debug)]
pub struct SpaceTimeGrid {
    pub dim: usize,
    pub opts: GridOptions,
    pub axis: Vec<f64>,
    pub axis_weights: Vec<f64>,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub t_nodes: Vec<f64>,
    pub dt: f64,
}

fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let lo = if i == 0 { x[0] } else { x[i - 1] };
            let hi = if i + 1 == n { x[n - 1] } else { x[i + 1] };
            0.5 * (hi - lo)
        })
        .collect()
}

impl SpaceTimeGrid {
    pub fn new(dim: usize, opts: &GridOptions) -> Result<Self> {
        let bad = |m: &str| Err(Error::Validation(m.to_string()));
        if !(opts.h > 0.0) {
            return bad("grid.h must be > 0");
        }
        if !(opts.x_max >= 5.0) {
            return bad("grid.x_max must be >= 5");
        }
        if !(opts.x_core > 0.0 && opts.x_core <= opts.x_max) {
            return bad("grid.x_core must lie in (0, x_max]");
        }
        if !(opts.stretch >= 1.0) {
            return bad("grid.stretch must be >= 1");
        }
        if opts.steps < 2 {
            return bad("grid.steps must be >= 2");
        }
        if !(opts.t_max > 0.0 && opts.t_max <= 1.0) {
            return bad("grid.t_max must lie in (0, 1]");
        }
        if dim != 1 && dim != 2 {
            return bad("grid dimension must be 1 or 2");
        }
        let n = (opts.x_core / opts.h).round() as i64;
        let core = n as f64 * opts.h;
        let mut right = vec![];
        let (mut x, mut dx) = (core, opts.h);
        if core < opts.x_max {
            loop {
                dx *= opts.stretch;
                if x + 1.5 * dx >= opts.x_max {
                    right.push(opts.x_max);
                    break;
                }
                x += dx;
                right.push(x);
            }
        }
        let mut axis: Vec<f64> = right.iter().rev().map(|v| -v).collect();
        axis.extend((-n..=n).map(|k| k as f64 * opts.h));
        axis.extend(right.iter().copied());
        let axis_weights = trapezoid_weights(&axis);
        let (points, weights) = if dim == 1 {
            (axis.iter().map(|&v| [v, 0.0]).collect(), axis_weights.clone())
        } else {
            let mut p = vec![];
            let mut w = vec![];
            for (i, &a) in axis.iter().enumerate() {
                for (j, &b) in axis.iter().enumerate() {
                    p.push([a, b]);
                    w.push(axis_weights[i] * axis_weights[j]);
                }
            }
            (p, w)
        };
        let dt = opts.t_max / opts.steps as f64;
        let t_nodes = (1..=opts.steps).map(|j| j as f64 * dt).collect();
        Ok(SpaceTimeGrid {
            dim,
            opts: opts.clone(),
            axis,
            axis_weights,
            points,
            weights,
            t_nodes,
            dt,
        })
    }

    /// Halves h and Δ and refines the stretched part to match.
    pub fn refined(&self) -> Result<Self> {
        let o = &self.opts;
        SpaceTimeGrid::new(
            self.dim,
            &GridOptions {
                h: o.h / 2.0,
                stretch: o.stretch.sqrt(),
                steps: o.steps * 2,
                ..o.clone()
            },
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&(self.dim, &self.opts)).expect("grid serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Index of the grid point at `x`, if there is one.
    pub fn index_of(&self, x: &Point) -> Option<usize> {
        self.points.iter().position(|p| dist(p, x) < 1e-9)
    }

    /// Index of the time node `t` (0-based: t_nodes[j]).
    pub fn t_index(&self, t: f64) -> Option<usize> {
        self.t_nodes.iter().position(|s| (s - t).abs() < 1e-9 * t.max(1.0))
    }
}

/// Evaluation of q₀ and of the frozen densities on grid pairs.
enum Engine {
    /// κ independent of z: spectral profiles.
    Fast {
        bank: Arc<StableBank>,
        cols: Vec<Arc<BankSlice>>,
        alpha: Vec<f64>,
        m: Vec<f64>,
        /// b-node weights per row index.
        row_w: Vec<Vec<f64>>,
        /// far-field series of Φ_{α(z_k), α(x_i)} per pair.
        pair_series: OnceLock<Vec<Vec<(f64, f64)>>>,
    },
    /// z-dependent κ: fused quadrature against tabulated symbols.
    General { syms: Vec<FrozenSymbol> },
}

/// Evaluation context for one model on one grid.
pub struct Kernels<'a> {
    pub spec: &'a ModelSpec,
    pub grid: &'a SpaceTimeGrid,
    engine: Engine,
    threads: usize,
}

fn fill_rows<F>(threads: usize, nrows: usize, ncols: usize, f: F) -> Array2<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let mut data = vec![0.0; nrows * ncols];
    let threads = threads.max(1).min(nrows.max(1));
    if threads == 1 {
        for (i, row) in data.chunks_mut(ncols).enumerate() {
            f(i, row);
        }
    } else {
        let per = nrows.div_ceil(threads);
        std::thread::scope(|scope| {
            for (c, chunk) in data.chunks_mut(per * ncols).enumerate() {
                let f = &f;
                scope.spawn(move || {
                    for (r, row) in chunk.chunks_mut(ncols).enumerate() {
                        f(c * per + r, row);
                    }
                });
            }
        });
    }
    Array2::from_shape_vec((nrows, ncols), data).expect("shape")
}

impl<'a> Kernels<'a> {
    pub fn new(spec: &'a ModelSpec, grid: &'a SpaceTimeGrid, threads: usize) -> Result<Self> {
        if spec.dim != grid.dim {
            return Err(Error::Validation("grid and model dimensions differ".into()));
        }
        let engine = if spec.z_independent() {
            let bank = shared_bank(spec.dim, spec.bounds.alpha_lo, spec.bounds.alpha_hi);
            let alpha: Vec<f64> = grid.points.iter().map(|p| spec.alpha(p)).collect();
            let m: Vec<f64> = grid.points.iter().map(|p| spec.multiplier(p)).collect();
            let mut cache: Vec<(u64, Arc<BankSlice>)> = vec![];
            let cols = alpha
                .iter()
                .map(|a| {
                    if let Some((_, s)) = cache.iter().find(|(k, _)| *k == a.to_bits()) {
                        return s.clone();
                    }
                    let s = Arc::new(bank.slice(*a));
                    cache.push((a.to_bits(), s.clone()));
                    s
                })
                .collect::<Vec<_>>();
            let row_w = alpha.iter().map(|b| bank.b_nodes.coefficients(*b)).collect();
            Engine::Fast {
                bank,
                cols,
                alpha,
                m,
                row_w,
                pair_series: OnceLock::new(),
            }
        } else {
            let syms = grid
                .points
                .iter()
                .map(|p| build_symbol(spec, p))
                .collect::<Result<Vec<_>>>()?;
            Engine::General { syms }
        };
        Ok(Kernels {
            spec,
            grid,
            engine,
            threads,
        })
    }

    /// q₀(τ, x_i, z_k).
    pub fn q0(&self, tau: f64, i: usize, k: usize) -> Result<f64> {
        match &self.engine {
            Engine::Fast {
                bank,
                cols,
                alpha,
                m,
                row_w,
                pair_series,
            } => {
                if alpha[i] == alpha[k] && m[i] == m[k] {
                    return Ok(0.0);
                }
                let n = alpha.len();
                let pair_series = pair_series.get_or_init(|| {
                    let vmax = bank.vmax();
                    let mut all = Vec::with_capacity(n * n);
                    for i in 0..n {
                        for k in 0..n {
                            if alpha[i] == alpha[k] && m[i] == m[k] {
                                all.push(vec![]);
                            } else {
                                all.push(tail_series(self.spec.dim, alpha[k], alpha[i], vmax));
                            }
                        }
                    }
                    all
                });
                let col = &cols[k];
                let r = dist(&self.grid.points[i], &self.grid.points[k]);
                let d = self.spec.dim as f64;
                let (a, b) = (alpha[k], alpha[i]);
                let s = col.scale(m[k], tau);
                let v = r / s;
                let rate = m[k] * s.powf(-d - a) * col.rate.eval(v);
                let cross = m[i] * s.powf(-d - b) * col.cross_parts(&row_w[i], &pair_series[i * n + k], v);
                Ok(rate - cross)
            }
            Engine::General { syms } => {
                let x = &self.grid.points[i];
                let z = &self.grid.points[k];
                Ok(q0_fused(self.spec, &syms[k], tau, x, z)?.value)
            }
        }
    }

    /// p^{z_k}(τ, x_i - z_k).
    pub fn frozen_density(&self, tau: f64, i: usize, k: usize) -> Result<f64> {
        let x = &self.grid.points[i];
        let z = &self.grid.points[k];
        match &self.engine {
            Engine::Fast { cols, m, .. } => Ok(cols[k].density(m[k], tau, dist(x, z)).max(0.0)),
            Engine::General { syms } => density(&syms[k], tau, &sub(x, z)),
        }
    }

    /// ∂_τ p^{z_k}(τ, x_i - z_k).
    pub fn frozen_rate(&self, tau: f64, i: usize, k: usize) -> Result<f64> {
        match &self.engine {
            Engine::Fast { cols, m, .. } => {
                Ok(cols[k].time_derivative(m[k], tau, dist(&self.grid.points[i], &self.grid.points[k])))
            }
            Engine::General { syms } => {
                let x = &self.grid.points[i];
                let z = &self.grid.points[k];
                Ok(apply_frozen_generator(self.spec, z, &syms[k], tau, &sub(x, z))?.value)
            }
        }
    }

    /// Raw q₀(τ, x_i, z_k) for all pairs.
    pub fn q0_matrix(&self, tau: f64) -> Result<Array2<f64>> {
        let n = self.grid.len();
        let failed = std::sync::Mutex::new(None);
        let m = fill_rows(self.threads, n, n, |i, row| {
            for (k, slot) in row.iter_mut().enumerate() {
                match self.q0(tau, i, k) {
                    Ok(v) => *slot = v,
                    Err(e) => {
                        *failed.lock().unwrap() = Some(e);
                        *slot = f64::NAN;
                    }
                }
            }
        });
        if let Some(e) = failed.into_inner().unwrap() {
            return Err(e);
        }
        check_finite(&m, tau)?;
        Ok(m)
    }

    /// Trapezoidal operator f ↦ ∫p^z(τ, x - z) f(z) dz with the diagonal
    /// corrected so that each row carries the exact mass of the box.
    pub fn density_operator(&self, tau: f64) -> Result<Array2<f64>> {
        let n = self.grid.len();
        let w = &self.grid.weights;
        let mut m = fill_rows(self.threads, n, n, |i, row| {
            for (k, slot) in row.iter_mut().enumerate() {
                *slot = self.frozen_density(tau, i, k).unwrap_or(f64::NAN) * w[k];
            }
        });
        check_finite(&m, tau)?;
        for i in 0..n {
            let mass = self.box_mass(tau, i)?;
            let row_sum: f64 = m.row(i).sum();
            m[[i, i]] += mass - row_sum;
        }
        Ok(m)
    }

    /// ∫_{box} p^z(τ, x_i - z) dz with the freeze point moving with z.
    pub fn box_mass(&self, tau: f64, i: usize) -> Result<f64> {
        let x = self.grid.points[i];
        let xm = self.grid.opts.x_max;
        match &self.engine {
            Engine::Fast { bank, .. } => Ok(moving_mass(self.spec, bank, tau, &x, Some(xm))),
            Engine::General { syms } => {
                // frozen at x: the slice of the symbol at x
                let sym = &syms[i];
                let f = |z: &Point| density(sym, tau, &sub(&x, z)).unwrap_or(f64::NAN);
                Ok(box_integral(self.spec.dim, &f, &x, tau.powf(1.0 / sym.alpha_y), xm))
            }
        }
    }
}

fn check_finite(m: &Array2<f64>, t: f64) -> Result<()> {
    for ((i, k), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { t, x: i, y: k });
        }
    }
    Ok(())
}

/// Gauss panels graded around `x` with width scale `sigma`, clipped to
/// [-xm, xm] (or unbounded when `xm` is infinite).
fn graded_panels(x: f64, sigma: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    let mut s = sigma / 8.0;
    while s < 2.0 * (hi - lo) {
        for c in [x - s, x + s] {
            if c > lo && c < hi {
                pts.push(c);
            }
        }
        s *= 2.0;
    }
    if x > lo && x < hi {
        pts.push(x);
    }
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    pts
}

fn box_integral(dim: usize, f: &dyn Fn(&Point) -> f64, x: &Point, sigma: f64, xm: f64) -> f64 {
    let rule = GaussRule::new(8);
    if dim == 1 {
        let pts = graded_panels(x[0], sigma, -xm, xm);
        return pts.windows(2).map(|w| rule.integrate(w[0], w[1], |z| f(&[z, 0.0]))).sum();
    }
    // polar about x, rays clipped to the box
    let nang = 32;
    let mut total = 0.0;
    for k in 0..nang {
        let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / nang as f64;
        let u = [th.cos(), th.sin()];
        let mut len = f64::INFINITY;
        for c in 0..2 {
            if u[c] > 1e-14 {
                len = len.min((xm - x[c]) / u[c]);
            } else if u[c] < -1e-14 {
                len = len.min((-xm - x[c]) / u[c]);
            }
        }
        let pts = graded_panels(0.0, sigma, 0.0, len.max(0.0));
        let ray: f64 = pts
            .windows(2)
            .map(|w| rule.integrate(w[0], w[1], |r| r * f(&[x[0] + r * u[0], x[1] + r * u[1]])))
            .sum();
        total += ray * 2.0 * std::f64::consts::PI / nang as f64;
    }
    total
}

/// ∫ p^z(t, x - z) dz over the box [-xm, xm]^d, or over R^d when `xm` is
/// `None`, using the interpolated profile bank.
pub fn moving_mass(spec: &ModelSpec, bank: &StableBank, t: f64, x: &Point, xm: Option<f64>) -> f64 {
    let d = spec.dim as i32;
    let f = |z: &Point| {
        let a = spec.alpha(z);
        let s = (spec.multiplier(z) * t).powf(1.0 / a);
        bank.phi0(a, dist(x, z) / s) * s.powi(-d)
    };
    let sigma = (spec.multiplier(x) * t).powf(1.0 / spec.alpha(x));
    match xm {
        Some(xm) => box_integral(spec.dim, &f, x, sigma, xm),
        None => {
            if spec.dim == 1 {
                let g = |z: f64| f(&[z, 0.0]);
                let pts = graded_panels(x[0], sigma, x[0] - 64.0, x[0] + 64.0);
                let mid = integrate(g, &pts, 1e-14, 1e-11, 2000).value;
                let r = integrate_to_inf(g, x[0] + 64.0, 64.0, 1e-15, 1e-10, 400).value;
                let l = integrate_to_inf(|s| g(-s), -(x[0] - 64.0), 64.0, 1e-15, 1e-10, 400).value;
                mid + r + l
            } else {
                let inner = box_integral(2, &f, x, sigma, 64.0 + norm(x));
                let r0 = 64.0;
                let tail = integrate_to_inf(
                    |r| {
                        let mut acc = 0.0;
                        let n = 32;
                        for k in 0..n {
                            let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
                            acc += f(&[r * th.cos(), r * th.sin()]);
                        }
                        acc * r * 2.0 * std::f64::consts::PI / n as f64
                    },
                    r0 + norm(x),
                    r0,
                    1e-15,
                    1e-8,
                    200,
                )
                .value;
                inner + tail
            }
        }
    }
}

/// |∫p^y(t, x - y) dy - 1| with the freeze point y moving.
pub fn near_unit_mass_p_y(spec: &ModelSpec, t: f64, x: &Point) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Precondition("t must lie in (0, 1]".into()));
    }
    if !spec.z_independent() {
        return Err(Error::Precondition(
            "moving-point mass is evaluated for z-independent coefficients".into(),
        ));
    }
    let bank = shared_bank(spec.dim, spec.bounds.alpha_lo, spec.bounds.alpha_hi);
    Ok((moving_mass(spec, &bank, t, x, None) - 1.0).abs())
}

/// q₀(t,x,y) = ½∫δ_{p^y}(t,x-y;z)[κ(x,z)|z|^{-d-α(x)} - κ(y,z)|z|^{-d-α(y)}]dz
/// as one quadrature of the kernel difference.
pub fn compute_q0(spec: &ModelSpec, t: f64, x: &Point, y: &Point) -> Result<Estimate> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Precondition("t must lie in (0, 1]".into()));
    }
    if spec.alpha(x) == spec.alpha(y) && spec.kappa.is_constant() {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let sym = build_symbol(spec, y)?;
    q0_fused(spec, &sym, t, x, y)
}

fn q0_fused(spec: &ModelSpec, sym: &FrozenSymbol, t: f64, x: &Point, y: &Point) -> Result<Estimate> {
    let ax = spec.alpha(x);
    let ay = spec.alpha(y);
    let d = spec.dim as f64;
    let u = sub(x, y);
    let p0 = density(sym, t, &u)?;
    let diff = |z: &Point| -> f64 {
        let a = [u[0] + z[0], u[1] + z[1]];
        let b = [u[0] - z[0], u[1] - z[1]];
        density(sym, t, &a).unwrap_or(f64::NAN) + density(sym, t, &b).unwrap_or(f64::NAN) - 2.0 * p0
    };
    let kernel = |z: &Point| {
        let r = norm(z);
        spec.kappa(x, z) * r.powf(-d - ax) - spec.kappa(y, z) * r.powf(-d - ay)
    };
    let width = match sym.multiplier() {
        Some(m) => (m * t).powf(1.0 / ay),
        None => t.powf(1.0 / ay),
    };
    let q = JumpIntegral {
        dim: spec.dim,
        delta: 0.5 * width.min(t.powf(1.0 / ay)),
        alpha_inner: ax.max(ay),
        zmax: 50.0,
        features: vec![(norm(&u), width)],
        diff: &diff,
        kernel: &kernel,
    };
    let est = q.evaluate();
    if !est.value.is_finite() {
        return Err(Error::Quadrature {
            estimate: f64::INFINITY,
            tolerance: 0.0,
        });
    }
    let scale = p0 / t + est.value.abs();
    let tol = 1e-3 * scale;
    if est.error > tol.max(1e-13) {
        return Err(Error::Quadrature {
            estimate: est.error,
            tolerance: tol,
        });
    }
    Ok(est)
}

/// q₀ from the interpolated profile bank; κ must not depend on z.
pub fn q0_spectral(spec: &ModelSpec, t: f64, x: &Point, y: &Point) -> Result<f64> {
    if !spec.z_independent() {
        return Err(Error::Precondition("spectral q0 needs z-independent coefficients".into()));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Precondition("t must lie in (0, 1]".into()));
    }
    let (a, b) = (spec.alpha(y), spec.alpha(x));
    let (my, mx) = (spec.multiplier(y), spec.multiplier(x));
    if a == b && mx == my {
        return Ok(0.0);
    }
    let bank = shared_bank(spec.dim, spec.bounds.alpha_lo, spec.bounds.alpha_hi);
    let slice = bank.slice(a);
    let cw = slice.cross_weights(b);
    let r = dist(x, y);
    Ok(slice.operator(my, t, mx, &cw, r) - slice.time_derivative(my, t, r))
}

/// q₀ as the difference of two separate generator applications; an
/// independent check on [`compute_q0`].
pub fn q0_two_calls(spec: &ModelSpec, t: f64, x: &Point, y: &Point) -> Result<Estimate> {
    let sym = build_symbol(spec, y)?;
    let u = sub(x, y);
    let a = apply_frozen_generator(spec, x, &sym, t, &u)?;
    let b = apply_frozen_generator(spec, y, &sym, t, &u)?;
    Ok(Estimate {
        value: a.value - b.value,
        error: a.error + b.error,
    })
}

/// Iterative scheme for the discrete Volterra system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Successive substitution q ← q₀ + q₀ ⊛ q.
    Picard,
    /// Direct time marching; same fixed point, one solve per step.
    Marching,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tol: f64,
    pub n_max: usize,
    pub method: Method,
    pub threads: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-6,
            n_max: 20,
            method: Method::Picard,
            threads: 1,
        }
    }
}

/// Time quadrature on the uniform mesh.
struct TimeRule {
    dt: f64,
    /// (τ, weight of E_n, weight of F_n) for the first panel.
    first: Vec<(f64, f64, f64)>,
    panel: GaussRule,
    /// (s, weight) on (0, Δ) for the tail-corrected first interval, j ≥ 2.
    head: Vec<(f64, f64)>,
    /// Same for j = 1, clustered at both ends.
    head1: Vec<(f64, f64)>,
}

impl TimeRule {
    fn new(dt: f64) -> Self {
        let g8 = GaussRule::new(8);
        let g6 = GaussRule::new(6);
        let first = g8
            .on(0.0, 1.0)
            .map(|(u, w)| {
                let tau = dt * u * u;
                let jac = 2.0 * dt * u * w;
                (tau, jac * (dt - tau) / dt, jac * tau / dt)
            })
            .collect();
        let head = g6.on(0.0, 1.0).map(|(u, w)| (dt * u * u, 2.0 * dt * u * w)).collect();
        let head1 = g8
            .on(0.0, 1.0)
            .map(|(u, w)| (dt * u * u * (3.0 - 2.0 * u), 6.0 * dt * u * (1.0 - u) * w))
            .collect();
        TimeRule {
            dt,
            first,
            panel: GaussRule::new(4),
            head,
            head1,
        }
    }

    /// Quadrature of panel n (1-based) for the hat weights of E_n and F_n.
    fn panel_points(&self, n: usize) -> Vec<(f64, f64, f64)> {
        if n == 1 {
            return self.first.clone();
        }
        let dt = self.dt;
        let lo = (n - 1) as f64 * dt;
        let hi = n as f64 * dt;
        self.panel
            .on(lo, hi)
            .map(|(tau, w)| (tau, w * (hi - tau) / dt, w * (tau - lo) / dt))
            .collect()
    }

    fn head_points(&self, j: usize) -> &[(f64, f64)] {
        if j == 1 {
            &self.head1
        } else {
            &self.head
        }
    }
}

fn scale_columns(m: &mut Array2<f64>, w: &[f64]) {
    for mut row in m.axis_iter_mut(Axis(0)) {
        for (v, wk) in row.iter_mut().zip(w) {
            *v *= wk;
        }
    }
}

fn sup_abs(m: &Array2<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn sup_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut s = 0.0f64;
    Zip::from(a).and(b).for_each(|x, y| s = s.max((x - y).abs()));
    s
}

/// Coefficient matrices of the discrete Volterra system
/// Q_j = K_j + C_j Q_1 + Σ_{i=2}^{j-1} G_{j-i+1} Q_i + E_1 Q_j (j ≥ 2),
/// Q_1 = K_1 + S_1 Q_1.
struct VolterraSystem {
    k: Vec<Array2<f64>>,
    c: Vec<Array2<f64>>,
    g: Vec<Array2<f64>>,
    e1: Array2<f64>,
    s1: Array2<f64>,
}

impl VolterraSystem {
    /// One substitution sweep: returns the right side evaluated at `q`.
    fn apply(&self, q: &[Array2<f64>]) -> Vec<Array2<f64>> {
        let m = q.len();
        let mut out = Vec::with_capacity(m);
        out.push(&self.k[0] + &self.s1.dot(&q[0]));
        for j in 1..m {
            let mut r = &self.k[j] + &self.c[j].dot(&q[0]);
            for i in 1..j {
                r = r + self.g[j - i].dot(&q[i]);
            }
            r = r + self.e1.dot(&q[j]);
            out.push(r);
        }
        out
    }

    fn march(&self) -> Result<Vec<Array2<f64>>> {
        let n = self.e1.nrows();
        let m = self.k.len();
        let ident = Array2::<f64>::eye(n);
        let lu_s = Lu::new(n, (&ident - &self.s1).into_raw_vec_and_offset().0);
        let lu_e = Lu::new(n, (&ident - &self.e1).into_raw_vec_and_offset().0);
        let solve = |lu: &Lu, rhs: Array2<f64>| -> Array2<f64> {
            let ny = rhs.ncols();
            let mut b = rhs.as_standard_layout().into_owned().into_raw_vec_and_offset().0;
            lu.solve(&mut b, ny);
            Array2::from_shape_vec((n, ny), b).expect("shape")
        };
        let mut q: Vec<Array2<f64>> = Vec::with_capacity(m);
        q.push(solve(&lu_s, self.k[0].clone()));
        for j in 1..m {
            let mut r = &self.k[j] + &self.c[j].dot(&q[0]);
            for i in 1..j {
                r = r + self.g[j - i].dot(&q[i]);
            }
            q.push(solve(&lu_e, r));
        }
        Ok(q)
    }
}

/// Outcome of the Volterra solve for a set of target columns.
#[derive(Clone, Debug)]
pub struct ParametrixState {
    pub grid: SpaceTimeGrid,
    /// Grid indices of the targets y.
    pub targets: Vec<usize>,
    /// q(t_j, z, y): one Nz × Ny matrix per time node.
    pub q: Vec<Array2<f64>>,
    /// q₀(t_j, z, y) on the same layout.
    pub q0: Vec<Array2<f64>>,
    /// q₀ on the head quadrature points of the first interval.
    q0_head: Vec<Array2<f64>>,
    q0_head1: Vec<Array2<f64>>,
    pub iteration: usize,
    /// delta_sup per iteration, per time node.
    pub delta_sup: Vec<Vec<f64>>,
    pub converged: bool,
    /// sup-norm of q - q₀ - q₀ ⊛ q on the grid.
    pub residual: f64,
    pub method: Method,
}

impl ParametrixState {
    /// max over time nodes of delta_sup for each iteration.
    pub fn delta_history(&self) -> Vec<f64> {
        self.delta_sup
            .iter()
            .map(|d| d.iter().fold(0.0f64, |a, v| a.max(*v)))
            .collect()
    }
}

/// Solves q = q₀ + q₀ ⊛ q on the grid for the given targets.
pub fn solve_q(
    spec: &ModelSpec,
    grid: &SpaceTimeGrid,
    targets: &[usize],
    opts: &SolverOptions,
) -> Result<ParametrixState> {
    if !(opts.tol > 0.0) {
        return Err(Error::Validation("solver.tol must be > 0".into()));
    }
    let kern = Kernels::new(spec, grid, opts.threads)?;
    solve_with(&kern, targets, opts)
}

fn columns(m: &Array2<f64>, targets: &[usize]) -> Array2<f64> {
    m.select(Axis(1), targets)
}

/// As [`solve_q`] with a prepared evaluation context.
pub fn solve_with(kern: &Kernels, targets: &[usize], opts: &SolverOptions) -> Result<ParametrixState> {
    let grid = kern.grid;
    let n = grid.len();
    if targets.iter().any(|&t| t >= n) {
        return Err(Error::Validation("target index outside the grid".into()));
    }
    let steps = grid.t_nodes.len();
    let rule = TimeRule::new(grid.dt);
    let w = &grid.weights;
    let weighted = |tau: f64| -> Result<Array2<f64>> {
        let mut m = kern.q0_matrix(tau)?;
        scale_columns(&mut m, w);
        Ok(m)
    };
    let q0_head: Vec<Array2<f64>> = rule
        .head
        .iter()
        .map(|(s, _)| kern.q0_matrix(*s).map(|m| columns(&m, targets)))
        .collect::<Result<_>>()?;
    let q0_head1: Vec<Array2<f64>> = rule
        .head1
        .iter()
        .map(|(s, _)| kern.q0_matrix(*s).map(|m| columns(&m, targets)))
        .collect::<Result<_>>()?;
    let mut q0: Vec<Array2<f64>> = vec![];
    let mut k: Vec<Array2<f64>> = vec![];
    let mut c = vec![];
    let mut g = vec![];
    let mut e1 = Array2::zeros((n, n));
    let mut s1 = Array2::zeros((n, n));
    let mut f_prev: Option<Array2<f64>> = None;
    for step in 1..=steps {
        let mut e = Array2::<f64>::zeros((n, n));
        let mut f = Array2::<f64>::zeros((n, n));
        for (tau, we, wf) in rule.panel_points(step) {
            let r = kern.q0_matrix(tau)?;
            e.scaled_add(we, &r);
            f.scaled_add(wf, &r);
        }
        scale_columns(&mut e, w);
        scale_columns(&mut f, w);
        let tj = grid.t_nodes[step - 1];
        let q0j = columns(&kern.q0_matrix(tj)?, targets);
        let heads = if step == 1 { &q0_head1 } else { &q0_head };
        let mut tmat = Array2::<f64>::zeros((n, targets.len()));
        let mut smat = Array2::<f64>::zeros((n, n));
        for ((s, ws), q0s) in rule.head_points(step).iter().zip(heads) {
            let a = weighted(tj - s)?;
            tmat = tmat + a.dot(q0s) * *ws;
            smat.scaled_add(ws * s / grid.dt, &a);
        }
        let q01 = if step == 1 { q0j.clone() } else { q0[0].clone() };
        let kj = &q0j + &tmat - smat.dot(&q01);
        if step == 1 {
            e1 = e.clone();
            s1 = smat.clone();
            c.push(Array2::zeros((0, 0)));
            g.push(Array2::zeros((0, 0)));
        } else {
            let fp = f_prev.as_ref().expect("previous panel");
            c.push(&smat + fp);
            g.push(&e + fp);
        }
        q0.push(q0j);
        k.push(kj);
        f_prev = Some(f);
        log::debug!("assembled time panel {step}/{steps}");
    }
    let sys = VolterraSystem { k, c, g, e1, s1 };
    let mut history = vec![];
    let (q, iteration, converged) = match opts.method {
        Method::Marching => (sys.march()?, 1, true),
        Method::Picard => {
            let mut q = q0.clone();
            let mut it = 0;
            let mut ok = false;
            while it < opts.n_max {
                let next = sys.apply(&q);
                it += 1;
                let deltas: Vec<f64> = next.iter().zip(&q).map(|(a, b)| sup_diff(a, b)).collect();
                let scale = next.iter().map(sup_abs).fold(0.0f64, f64::max).max(1e-300);
                for (j, m) in next.iter().enumerate() {
                    if m.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite {
                            t: grid.t_nodes[j],
                            x: 0,
                            y: 0,
                        });
                    }
                }
                let rel = deltas.iter().fold(0.0f64, |a, v| a.max(*v)) / scale;
                history.push(deltas);
                q = next;
                if rel < opts.tol || scale <= 1e-300 {
                    ok = true;
                    break;
                }
            }
            (q, it, ok)
        }
    };
    let next = sys.apply(&q);
    let residual = next.iter().zip(&q).map(|(a, b)| sup_diff(a, b)).fold(0.0f64, f64::max);
    let state = ParametrixState {
        grid: grid.clone(),
        targets: targets.to_vec(),
        q,
        q0,
        q0_head,
        q0_head1,
        iteration,
        delta_sup: history,
        converged,
        residual,
        method: opts.method,
    };
    if !state.converged {
        return Err(Error::NonConvergence {
            iterations: state.iteration,
            last_delta: state.delta_history().last().copied().unwrap_or(f64::NAN),
            history: state.delta_history(),
        });
    }
    Ok(state)
}

/// Where a kernel came from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub model_hash: String,
    pub grid_hash: String,
    pub tol: f64,
    pub iterations: usize,
    pub method: Method,
    pub delta_history: Vec<f64>,
    pub residual: f64,
    pub clamped: usize,
    pub max_correction: f64,
}

/// p(t_j, x_i, y_l) on the grid for a set of targets.
#[derive(Clone, Debug)]
pub struct HeatKernelField {
    pub grid: SpaceTimeGrid,
    pub targets: Vec<usize>,
    /// One Nx × Ny matrix per time node.
    pub p: Vec<Array2<f64>>,
    /// The frozen part p^y(t_j, x_i - y_l).
    pub p_y: Vec<Array2<f64>>,
    pub provenance: Provenance,
}

/// p = p^y + p^· ⊛ q with the rule used for q.
pub fn assemble_kernel(spec: &ModelSpec, state: &ParametrixState, threads: usize) -> Result<HeatKernelField> {
    if !state.converged {
        return Err(Error::Precondition("parametrix state has not converged".into()));
    }
    let grid = &state.grid;
    let kern = Kernels::new(spec, grid, threads)?;
    assemble_with(&kern, state)
}

/// As [`assemble_kernel`] with a prepared evaluation context.
pub fn assemble_with(kern: &Kernels, state: &ParametrixState) -> Result<HeatKernelField> {
    let grid = kern.grid;
    let spec = kern.spec;
    let targets = &state.targets;
    let steps = grid.t_nodes.len();
    let n = grid.len();
    let ny = targets.len();
    let rule = TimeRule::new(grid.dt);
    let q = &state.q;
    let lin = &q[0] - &state.q0[0];
    let mut p_y = Vec::with_capacity(steps);
    let mut p = Vec::with_capacity(steps);
    for &tj in &grid.t_nodes {
        let m = fill_rows(kern.threads, n, ny, |i, row| {
            for (l, slot) in row.iter_mut().enumerate() {
                *slot = kern.frozen_density(tj, i, targets[l]).unwrap_or(f64::NAN);
            }
        });
        check_finite(&m, tj)?;
        p.push(m.clone());
        p_y.push(m);
    }
    if spec.is_constant() {
        log::debug!("constant model: kernel equals the frozen density");
    } else {
        for j in 1..=steps {
            let tj = grid.t_nodes[j - 1];
            let heads = if j == 1 { &state.q0_head1 } else { &state.q0_head };
            for ((s, ws), q0s) in rule.head_points(j).iter().zip(heads) {
                let pm = kern.density_operator(tj - s)?;
                let data = q0s + &(&lin * (s / grid.dt));
                p[j - 1] = &p[j - 1] + &(pm.dot(&data) * *ws);
            }
        }
        for panel in 1..steps {
            let mut e = Array2::<f64>::zeros((n, n));
            let mut f = Array2::<f64>::zeros((n, n));
            for (tau, we, wf) in rule.panel_points(panel) {
                let pm = kern.density_operator(tau)?;
                e.scaled_add(we, &pm);
                f.scaled_add(wf, &pm);
            }
            for j in (panel + 1)..=steps {
                // interval [t_{i-1}, t_i] with i = j - panel + 1 ≥ 2
                let i = j - panel + 1;
                p[j - 1] = &p[j - 1] + &e.dot(&q[i - 1]) + &f.dot(&q[i - 2]);
            }
        }
    }
    let mut clamped = 0;
    let mut max_corr = 0.0f64;
    for j in 0..steps {
        for l in 0..ny {
            let peak = p[j].column(l).iter().fold(0.0f64, |a, v| a.max(*v));
            for i in 0..n {
                let v = p[j][[i, l]];
                max_corr = max_corr.max((v - p_y[j][[i, l]]).abs());
                if v < 0.0 {
                    if -v < 1e-8 * peak {
                        p[j][[i, l]] = 0.0;
                        clamped += 1;
                    } else {
                        return Err(Error::Negative {
                            t: grid.t_nodes[j],
                            x: grid.points[i][0],
                            y: grid.points[targets[l]][0],
                            value: v,
                        });
                    }
                }
            }
        }
    }
    if clamped > 0 {
        log::warn!("clamped {clamped} tiny negative kernel values");
    }
    Ok(HeatKernelField {
        grid: grid.clone(),
        targets: targets.clone(),
        p,
        p_y,
        provenance: Provenance {
            model_hash: spec.hash(),
            grid_hash: grid.hash(),
            tol: 0.0,
            iterations: state.iteration,
            method: state.method,
            delta_history: state.delta_history(),
            residual: state.residual,
            clamped,
            max_correction: max_corr,
        },
    })
}

/// Solve and assemble for every grid node as a target.
pub fn build_kernel(spec: &ModelSpec, grid: &SpaceTimeGrid, opts: &SolverOptions) -> Result<(ParametrixState, HeatKernelField)> {
    let kern = Kernels::new(spec, grid, opts.threads)?;
    let targets: Vec<usize> = (0..grid.len()).collect();
    let state = solve_with(&kern, &targets, opts)?;
    let mut field = assemble_with(&kern, &state)?;
    field.provenance.tol = opts.tol;
    Ok((state, field))
}

impl HeatKernelField {
    /// Column of target `y`, if it is one.
    pub fn target_column(&self, y: &Point) -> Option<usize> {
        self.targets.iter().position(|&k| dist(&self.grid.points[k], y) < 1e-9)
    }

    pub fn value(&self, j: usize, i: usize, l: usize) -> f64 {
        self.p[j][[i, l]]
    }

    /// p(t_j, x, y_l) at an off-grid x: the frozen part is exact and the
    /// correction is interpolated (natural spline in d = 1, bilinear in d = 2).
    pub fn interpolate(&self, kern: &Kernels, j: usize, x: &Point, l: usize) -> Result<f64> {
        let corr = self.correction(j, x, l);
        let y = &self.grid.points[self.targets[l]];
        let t = self.grid.t_nodes[j];
        let py = kern.density_at(t, x, self.targets[l], y)?;
        Ok(py + corr)
    }

    /// Natural spline of the correction p - p^y along the axis (d = 1).
    pub fn correction_spline(&self, j: usize, l: usize) -> Spline {
        let c: Vec<f64> = (0..self.grid.len()).map(|i| self.p[j][[i, l]] - self.p_y[j][[i, l]]).collect();
        Spline::natural(&self.grid.axis, &c)
    }

    /// Interpolated p - p^y at an arbitrary point.
    pub fn correction(&self, j: usize, x: &Point, l: usize) -> f64 {
        let g = &self.grid;
        let na = g.axis.len();
        let xm = g.opts.x_max;
        if g.dim == 1 {
            if x[0].abs() > xm {
                return 0.0;
            }
            return self.correction_spline(j, l).eval(x[0]);
        }
        if x[0].abs() > xm || x[1].abs() > xm {
            return 0.0;
        }
        let locate = |v: f64| -> (usize, f64) {
            let k = g.axis.partition_point(|a| *a <= v).clamp(1, na - 1) - 1;
            (k, (v - g.axis[k]) / (g.axis[k + 1] - g.axis[k]))
        };
        let (a, fa) = locate(x[0]);
        let (b, fb) = locate(x[1]);
        let c = |i: usize, k: usize| {
            let idx = i * na + k;
            self.p[j][[idx, l]] - self.p_y[j][[idx, l]]
        };
        (1.0 - fa) * (1.0 - fb) * c(a, b) + fa * (1.0 - fb) * c(a + 1, b) + (1.0 - fa) * fb * c(a, b + 1) + fa * fb * c(a + 1, b + 1)
    }

    /// Writes `t, x…, y…, p` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let g = &self.grid;
        if g.dim == 1 {
            writeln!(out, "t,x,y,p")?;
        } else {
            writeln!(out, "t,x1,x2,y1,y2,p")?;
        }
        for (j, t) in g.t_nodes.iter().enumerate() {
            for (l, &k) in self.targets.iter().enumerate() {
                let y = g.points[k];
                for (i, x) in g.points.iter().enumerate() {
                    let v = self.p[j][[i, l]];
                    if g.dim == 1 {
                        writeln!(out, "{t},{},{},{v:e}", x[0], y[0])?;
                    } else {
                        writeln!(out, "{t},{},{},{},{},{v:e}", x[0], x[1], y[0], y[1])?;
                    }
                }
            }
        }
        Ok(())
    }

    /// JSON sidecar describing the kernel.
    pub fn sidecar(&self, config_hash: &str) -> serde_json::Value {
        serde_json::json!({
            "config_hash": config_hash,
            "model_hash": self.provenance.model_hash,
            "grid_hash": self.provenance.grid_hash,
            "grid": self.grid.opts,
            "dim": self.grid.dim,
            "nodes": self.grid.len(),
            "targets": self.targets.len(),
            "tolerance": self.provenance.tol,
            "iterations": self.provenance.iterations,
            "method": self.provenance.method,
            "delta_history": self.provenance.delta_history,
            "residual": self.provenance.residual,
            "clamped": self.provenance.clamped,
            "max_correction": self.provenance.max_correction,
        })
    }
}

impl Kernels<'_> {
    /// p^{y}(t, x - y) for the target with grid index `k` and position `y`.
    pub fn density_at(&self, t: f64, x: &Point, k: usize, y: &Point) -> Result<f64> {
        match &self.engine {
            Engine::Fast { cols, m, .. } => Ok(cols[k].density(m[k], t, dist(x, y)).max(0.0)),
            Engine::General { syms } => density(&syms[k], t, &sub(x, y)),
        }
    }

    /// Frozen symbol tables of the grid point `k` when κ is z-independent.
    pub fn slice(&self, k: usize) -> Option<(&BankSlice, f64)> {
        match &self.engine {
            Engine::Fast { cols, m, .. } => Some((&cols[k], m[k])),
            Engine::General { .. } => None,
        }
    }

    pub fn symbol(&self, k: usize) -> Option<&FrozenSymbol> {
        match &self.engine {
            Engine::General { syms } => Some(&syms[k]),
            Engine::Fast { .. } => None,
        }
    }

    pub fn threads(&self) -> usize {
        self.threads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GridOptions {
        GridOptions {
            h: 0.25,
            x_core: 3.0,
            x_max: 20.0,
            stretch: 1.3,
            steps: 10,
            t_max: 1.0,
        }
    }

    #[test]
    fn grid_shape() {
        let g = SpaceTimeGrid::new(1, &GridOptions::default()).unwrap();
        assert_eq!(g.axis[0], -60.0);
        assert_eq!(*g.axis.last().unwrap(), 60.0);
        assert!(g.axis.windows(2).all(|w| w[1] > w[0]));
        assert!(g.index_of(&[0.0, 0.0]).is_some());
        assert!((g.weights.iter().sum::<f64>() - 120.0).abs() < 1e-9);
        let r = g.refined().unwrap();
        assert_eq!(r.t_nodes.len(), 80);
        assert!(r.len() > g.len());
        assert!(SpaceTimeGrid::new(1, &GridOptions { x_max: 4.0, x_core: 2.0, ..small() }).is_err());
    }

    #[test]
    fn constant_model_gives_frozen_density() {
        let spec = ModelSpec::constant(1, 1.0, 1.0 / std::f64::consts::PI).unwrap();
        let grid = SpaceTimeGrid::new(1, &small()).unwrap();
        let (state, field) = build_kernel(&spec, &grid, &SolverOptions::default()).unwrap();
        assert!(state.q.iter().all(|m| m.iter().all(|v| *v == 0.0)));
        let i0 = grid.index_of(&[0.0, 0.0]).unwrap();
        let j = grid.t_index(1.0).unwrap();
        let l = field.target_column(&[0.0, 0.0]).unwrap();
        assert!((field.value(j, i0, l) - 1.0 / std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn fast_and_fused_q0_agree() {
        let spec = ModelSpec::varorder();
        let grid = SpaceTimeGrid::new(1, &small()).unwrap();
        let kern = Kernels::new(&spec, &grid, 1).unwrap();
        for (xi, zi) in [(0.5, 0.0), (1.0, -1.0), (0.0, 2.0), (3.0, 0.25)] {
            let i = grid.index_of(&[xi, 0.0]).unwrap();
            let k = grid.index_of(&[zi, 0.0]).unwrap();
            for t in [0.05, 0.3, 1.0] {
                let fast = kern.q0(t, i, k).unwrap();
                let fused = compute_q0(&spec, t, &[xi, 0.0], &[zi, 0.0]).unwrap();
                let two = q0_two_calls(&spec, t, &[xi, 0.0], &[zi, 0.0]).unwrap();
                let band = fused.error + two.error + 1e-9;
                assert!((two.value - fused.value).abs() < band, "t={t} x={xi} z={zi}");
                assert!((fast - fused.value).abs() < band + 1e-5 * fused.value.abs());
            }
        }
    }

    #[test]
    fn picard_matches_marching() {
        let spec = ModelSpec::varorder();
        let grid = SpaceTimeGrid::new(1, &small()).unwrap();
        let kern = Kernels::new(&spec, &grid, 2).unwrap();
        let targets: Vec<usize> = [0.0, 1.0].iter().map(|y| grid.index_of(&[*y, 0.0]).unwrap()).collect();
        let pic = solve_with(&kern, &targets, &SolverOptions::default()).unwrap();
        assert!(pic.converged && pic.iteration <= 20);
        let h = pic.delta_history();
        assert!(h.last().unwrap() < &h[0]);
        let mar = solve_with(
            &kern,
            &targets,
            &SolverOptions {
                method: Method::Marching,
                ..Default::default()
            },
        )
        .unwrap();
        let scale = mar.q.iter().map(sup_abs).fold(0.0, f64::max);
        let diff = pic.q.iter().zip(&mar.q).map(|(a, b)| sup_diff(a, b)).fold(0.0, f64::max);
        assert!(diff < 1e-5 * scale, "{diff} vs {scale}");
    }

    #[test]
    fn row_mass_near_one() {
        let spec = ModelSpec::varorder();
        let grid = SpaceTimeGrid::new(1, &small()).unwrap();
        let (_, field) = build_kernel(&spec, &grid, &SolverOptions::default()).unwrap();
        let i0 = grid.index_of(&[0.0, 0.0]).unwrap();
        let j = grid.t_index(0.5).unwrap();
        let row: f64 = (0..grid.len()).map(|l| field.p[j][[i0, l]] * grid.weights[l]).sum();
        assert!((row - 1.0).abs() < 0.05, "mass {row}");
        assert!(field.p.iter().all(|m| m.iter().all(|v| *v >= 0.0)));
    }

    #[test]
    fn unit_mass_of_moving_frozen_density() {
        let spec = ModelSpec::varorder();
        let e = near_unit_mass_p_y(&spec, 0.5, &[0.0, 0.0]).unwrap();
        assert!(e < 0.2, "{e}");
        let c = ModelSpec::constant(1, 1.3, 1.0).unwrap();
        assert!(near_unit_mass_p_y(&c, 0.5, &[0.3, 0.0]).unwrap() < 1e-6);
    }
}
