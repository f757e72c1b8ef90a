//! The envelope family ρ^{y,β}_γ, its heavy-tailed variant ρ̃ and numerical
//! certificates for the mass and convolution inequalities built on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use statrs::function::beta::beta as beta_fn;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{dist, norm, sub, ModelSpec, Point};
use crate::numerics::{integrate, integrate_to_inf, GaussRule, QuadResult};

const LOG_TIE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RhoParams {
    pub gamma: f64,
    pub beta: f64,
    pub y: Point,
    /// ε = 0 gives ρ, ε > 0 the variant with far field |x|^{-(d+α₁-ε)}.
    pub eps: f64,
}

impl RhoParams {
    pub fn new(gamma: f64, beta: f64, y: Point) -> Self {
        RhoParams {
            gamma,
            beta,
            y,
            eps: 0.0,
        }
    }

    pub fn tilde(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }
}

/// ρ with the near/far crossover at radius `r0`.
pub fn rho_with_radius(p: &RhoParams, spec: &ModelSpec, t: f64, x: &Point, r0: f64) -> f64 {
    rho_at(p.gamma, p.beta, spec.alpha(&p.y), p.eps, spec, t, norm(x), r0)
}

/// ρ^{y,β}_γ(t,x), or ρ̃ when `eps > 0`.
pub fn rho(p: &RhoParams, spec: &ModelSpec, t: f64, x: &Point) -> f64 {
    rho_with_radius(p, spec, t, x, 1.0)
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn rho_at(gamma: f64, beta: f64, ay: f64, eps: f64, spec: &ModelSpec, t: f64, r: f64, r0: f64) -> f64 {
    let d = spec.dim as f64;
    let a1 = spec.bounds.alpha_lo;
    let cut = if beta == 0.0 { 1.0 } else { r.powf(beta).min(1.0) };
    let shape = if r <= r0 {
        (t.powf(1.0 / ay) + r).powf(-d - ay)
    } else {
        r.powf(-(d + a1 - eps))
    };
    t.powf(gamma) * cut * shape
}

/// One inequality evaluation.
#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub quadrature_error: f64,
    pub params: serde_json::Value,
}

/// Mass inequality with the index moving under the integral and frozen at x.
#[derive(Clone, Debug, Serialize)]
pub struct MassReport {
    pub moving: FitReport,
    pub frozen: FitReport,
    /// Ratios against the α₂-uniform right side t^{β/α₂-1} ∨ 1.
    pub moving_uniform_ratio: f64,
    pub frozen_uniform_ratio: f64,
}

/// Four-term convolution bound in its pointwise and α₂-uniform forms.
#[derive(Clone, Debug, Serialize)]
pub struct ConvolutionReport {
    pub pointwise: FitReport,
    pub uniform: FitReport,
}

/// Result of a randomized sweep: the fitted constant is the largest ratio.
#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub name: String,
    pub draws: usize,
    pub constant: f64,
    pub min_ratio: f64,
    pub worst_case: Option<FitReport>,
    pub pass: bool,
}

impl SweepReport {
    fn from_reports(name: &str, reports: Vec<FitReport>) -> Self {
        let mut constant = 0.0f64;
        let mut min_ratio = f64::INFINITY;
        let mut worst = None;
        let mut finite = true;
        for r in reports.iter() {
            if !r.ratio.is_finite() || r.ratio <= 0.0 {
                finite = false;
            }
            min_ratio = min_ratio.min(r.ratio);
            if r.ratio > constant {
                constant = r.ratio;
                worst = Some(r.clone());
            }
        }
        SweepReport {
            name: name.to_string(),
            draws: reports.len(),
            constant,
            min_ratio,
            worst_case: worst,
            pass: finite && !reports.is_empty() && constant < 1e6,
        }
    }
}

/// ∫_{R^d} f by adaptive quadrature split at the given radii around each
/// centre. In d = 2 the plane is cut along the bisector of two centres and
/// each half is integrated in polar coordinates about its own centre.
pub fn integrate_space(
    dim: usize,
    f: &dyn Fn(&Point) -> f64,
    centres: &[(Point, Vec<f64>)],
    epsrel: f64,
) -> QuadResult {
    if dim == 1 {
        let mut pts = vec![];
        for (c, radii) in centres {
            pts.push(c[0]);
            for r in radii {
                pts.push(c[0] - r);
                pts.push(c[0] + r);
            }
        }
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let lo = pts[0];
        let hi = *pts.last().unwrap();
        let g = |z: f64| f(&[z, 0.0]);
        let mid = integrate(g, &pts, 0.0, epsrel, 4000);
        let right = integrate_to_inf(g, hi, 1.0, 0.0, epsrel, 400);
        let left = integrate_to_inf(|s| g(-s), -lo, 1.0, 0.0, epsrel, 400);
        return QuadResult {
            value: mid.value + right.value + left.value,
            error: mid.error + right.error + left.error,
            evaluations: mid.evaluations + right.evaluations + left.evaluations,
        };
    }
    let mut value = 0.0;
    let mut error = 0.0;
    let mut evals = 0;
    let distinct: Vec<&(Point, Vec<f64>)> = centres
        .iter()
        .enumerate()
        .filter(|(i, (c, _))| !centres[..*i].iter().any(|(o, _)| dist(o, c) < 1e-12))
        .map(|(_, c)| c)
        .collect();
    let rule = GaussRule::new(16);
    for (ci, (c, radii)) in distinct.iter().enumerate() {
        let others: Vec<Point> = distinct
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != ci)
            .map(|(_, (o, _))| *o)
            .collect();
        // angular panels with edges towards the other centres
        let mut edges = vec![0.0, 2.0 * PI];
        for o in &others {
            let v = sub(o, c);
            let th = v[1].atan2(v[0]).rem_euclid(2.0 * PI);
            edges.push(th);
        }
        let n_panels = 8;
        for k in 1..n_panels {
            edges.push(2.0 * PI * k as f64 / n_panels as f64);
        }
        edges.sort_by(|a, b| a.total_cmp(b));
        edges.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        for w in edges.windows(2) {
            for (th, wt) in rule.on(w[0], w[1]) {
                let u = [th.cos(), th.sin()];
                // ray length inside this centre's cell
                let mut len = f64::INFINITY;
                for o in &others {
                    let v = sub(o, c);
                    let proj = u[0] * v[0] + u[1] * v[1];
                    if proj > 1e-14 {
                        len = len.min(norm(&v).powi(2) / (2.0 * proj));
                    }
                }
                let radial = |r: f64| r * f(&[c[0] + r * u[0], c[1] + r * u[1]]);
                let mut pts = vec![0.0];
                for r in radii {
                    if *r < len {
                        pts.push(*r);
                    }
                }
                for o in &others {
                    let d = dist(o, c);
                    if d < len {
                        pts.push(d);
                    }
                }
                pts.sort_by(|a, b| a.total_cmp(b));
                pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
                let res = if len.is_finite() {
                    pts.push(len);
                    integrate(radial, &pts, 0.0, epsrel, 400)
                } else {
                    let last = *pts.last().unwrap();
                    let head = if pts.len() > 1 {
                        integrate(radial, &pts, 0.0, epsrel, 400)
                    } else {
                        QuadResult {
                            value: 0.0,
                            error: 0.0,
                            evaluations: 0,
                        }
                    };
                    let tail = integrate_to_inf(radial, last, 1.0, 0.0, epsrel, 200);
                    QuadResult {
                        value: head.value + tail.value,
                        error: head.error + tail.error,
                        evaluations: head.evaluations + tail.evaluations,
                    }
                };
                value += wt * res.value;
                error += wt * res.error;
                evals += res.evaluations;
            }
        }
    }
    QuadResult {
        value,
        error,
        evaluations: evals,
    }
}

fn log_factor(t: f64, b: f64, a: f64) -> f64 {
    if (b - a).abs() < LOG_TIE {
        1.0 + t.ln().abs()
    } else {
        1.0
    }
}

/// ∫ρ^{z,β}_0(t,x-z)dz against (t^{β/α(x)-1} ∨ 1)(1 + |log t| 𝟙_{β=α(x)}).
pub fn check_mass_inequality(spec: &ModelSpec, beta: f64, t: f64, x: &Point) -> Result<MassReport> {
    let a2 = spec.bounds.alpha_hi;
    if !(0.0..a2).contains(&beta) {
        return Err(Error::Precondition(format!("beta = {beta} must lie in [0, {a2})")));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Precondition("t must lie in (0, 1]".into()));
    }
    let ax = spec.alpha(x);
    let radii = vec![t.powf(1.0 / ax), 1.0, 0.1, 3.0];
    let moving = |z: &Point| {
        let az = spec.alpha(z);
        rho_at(0.0, beta, az, 0.0, spec, t, dist(x, z), 1.0)
    };
    let frozen = |z: &Point| rho_at(0.0, beta, ax, 0.0, spec, t, dist(x, z), 1.0);
    let lm = integrate_space(spec.dim, &moving, &[(*x, radii.clone())], 1e-9);
    let lf = integrate_space(spec.dim, &frozen, &[(*x, radii)], 1e-9);
    let rhs = t.powf(beta / ax - 1.0).max(1.0) * log_factor(t, beta, ax);
    let uniform = t.powf(beta / a2 - 1.0).max(1.0);
    let params = json!({"beta": beta, "t": t, "x": x});
    let report = |name: &str, q: &QuadResult| FitReport {
        name: name.into(),
        lhs: q.value,
        rhs,
        ratio: q.value / rhs,
        quadrature_error: q.error,
        params: params.clone(),
    };
    Ok(MassReport {
        moving: report("mass_moving_index", &lm),
        frozen: report("mass_frozen_index", &lf),
        moving_uniform_ratio: lm.value / uniform,
        frozen_uniform_ratio: lf.value / uniform,
    })
}

/// Exponents and parameters of a two-factor convolution.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConvParams {
    pub theta1: f64,
    pub theta2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

fn convolution_lhs(spec: &ModelSpec, c: &ConvParams, s: f64, t: f64, x: &Point, y: &Point, tol: f64) -> QuadResult {
    let ay = spec.alpha(y);
    let ax = spec.alpha(x);
    let f = |z: &Point| {
        let az = spec.alpha(z);
        rho_at(c.theta1, c.beta1, az, 0.0, spec, t - s, dist(x, z), 1.0)
            * rho_at(c.theta2, c.beta2, ay, 0.0, spec, s, dist(z, y), 1.0)
    };
    let centres = [
        (*x, vec![(t - s).powf(1.0 / ax), 1.0]),
        (*y, vec![s.powf(1.0 / ay), 1.0]),
    ];
    integrate_space(spec.dim, &f, &centres, tol)
}

#[allow(clippy::too_many_arguments)]
fn four_term_rhs(spec: &ModelSpec, c: &ConvParams, s: f64, t: f64, x: &Point, y: &Point, ax: f64, ay: f64) -> f64 {
    let u = sub(x, y);
    let rho0 = |beta: f64| rho(&RhoParams::new(0.0, beta, *y), spec, t, &u);
    let b12 = c.beta1 + c.beta2;
    let ts = t - s;
    let term1 = ts.powf(c.theta1 + (b12 / ax).min(1.0) - 1.0) * s.powf(c.theta2) * log_factor(ts, b12, ax);
    let term2 = ts.powf(c.theta1) * s.powf(c.theta2 + (b12 / ay).min(1.0) - 1.0) * log_factor(s, b12, ay);
    let term3 = ts.powf(c.theta1 + (c.beta1 / ax).min(1.0) - 1.0) * s.powf(c.theta2) * log_factor(ts, c.beta1, ax);
    let term4 = ts.powf(c.theta1) * s.powf(c.theta2 + (c.beta2 / ay).min(1.0) - 1.0) * log_factor(s, c.beta2, ay);
    (term1 + term2) * rho0(0.0) + term3 * rho0(c.beta2) + term4 * rho0(c.beta1)
}

/// ∫ρ^{z,β₁}_{θ₁}(t-s,x-z)ρ^{y,β₂}_{θ₂}(s,z-y)dz against the four-term bound,
/// with the local indices α(x), α(y) and with α₂ throughout.
pub fn check_convolution_inequality(
    spec: &ModelSpec,
    c: &ConvParams,
    s: f64,
    t: f64,
    x: &Point,
    y: &Point,
) -> Result<ConvolutionReport> {
    if !(0.0 < s && s < t && t <= 1.0) {
        return Err(Error::Precondition("need 0 < s < t <= 1".into()));
    }
    for b in [c.beta1, c.beta2] {
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::Precondition(format!("beta = {b} must lie in (0, 1)")));
        }
    }
    let lhs = convolution_lhs(spec, c, s, t, x, y, 1e-9);
    let ax = spec.alpha(x);
    let ay = spec.alpha(y);
    let a2 = spec.bounds.alpha_hi;
    let rp = four_term_rhs(spec, c, s, t, x, y, ax, ay);
    let ru = four_term_rhs(spec, c, s, t, x, y, a2, a2);
    let params = json!({"params": c, "s": s, "t": t, "x": x, "y": y});
    Ok(ConvolutionReport {
        pointwise: FitReport {
            name: "convolution_local_index".into(),
            lhs: lhs.value,
            rhs: rp,
            ratio: lhs.value / rp,
            quadrature_error: lhs.error,
            params: params.clone(),
        },
        uniform: FitReport {
            name: "convolution_uniform_index".into(),
            lhs: lhs.value,
            rhs: ru,
            ratio: lhs.value / ru,
            quadrature_error: lhs.error,
            params,
        },
    })
}

/// 𝓑(a, b) = Γ(a)Γ(b)/Γ(a+b).
pub fn beta_function(a: f64, b: f64) -> f64 {
    beta_fn(a, b)
}

/// ∫₀ᵗ g(s, t-s) ds for g with power behaviour s^{b-1} at 0 and (t-s)^{a-1} at t:
/// each half is mapped so the endpoint power becomes smooth.
pub fn singular_time_integral(g: &dyn Fn(f64, f64) -> f64, t: f64, a: f64, b: f64, epsrel: f64) -> QuadResult {
    let half = 0.5 * t;
    let pa = 1.0 / a.clamp(0.05, 1.0);
    let pb = 1.0 / b.clamp(0.05, 1.0);
    let left = integrate(
        |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let s = half * u.powf(pb);
            g(s, t - s) * half * pb * u.powf(pb - 1.0)
        },
        &[0.0, 0.25, 1.0],
        0.0,
        epsrel,
        400,
    );
    let right = integrate(
        |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let r = half * u.powf(pa);
            g(t - r, r) * half * pa * u.powf(pa - 1.0)
        },
        &[0.0, 0.25, 1.0],
        0.0,
        epsrel,
        400,
    );
    QuadResult {
        value: left.value + right.value,
        error: left.error + right.error,
        evaluations: left.evaluations + right.evaluations,
    }
}

/// ∫₀ᵗ(t-s)^{γ-1}s^{β-1}ds by quadrature, to be compared with t^{γ+β-1}𝓑(γ,β).
pub fn beta_time_identity(gamma: f64, beta: f64, t: f64) -> (f64, f64) {
    let g = |s: f64, r: f64| r.powf(gamma - 1.0) * s.powf(beta - 1.0);
    let q = singular_time_integral(&g, t, gamma, beta, 1e-13);
    (q.value, t.powf(gamma + beta - 1.0) * beta_function(gamma, beta))
}

/// Which hypothesis set of the time-integrated bound to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BetaVariant {
    /// Local indices; needs β₁+β₂ < α(x)∧α(y).
    Local,
    /// Uniform index α₂; needs β₁+β₂ < α₂.
    Uniform,
}

/// ∫₀ᵗ∫ρρ dz ds against c𝓑(β₁/α₂+θ₁, β₂/α₂+θ₂)(ρ + ρ + ρ)(t,x-y).
pub fn check_beta_time_integral(
    spec: &ModelSpec,
    c: &ConvParams,
    variant: BetaVariant,
    t: f64,
    x: &Point,
    y: &Point,
) -> Result<FitReport> {
    let ax = spec.alpha(x);
    let ay = spec.alpha(y);
    let a2 = spec.bounds.alpha_hi;
    let b12 = c.beta1 + c.beta2;
    let (lx, ly, lmax) = match variant {
        BetaVariant::Local => {
            if b12 >= ax.min(ay) {
                return Err(Error::Precondition("beta1 + beta2 must be below min(alpha(x), alpha(y))".into()));
            }
            (ax, ay, ax.max(ay))
        }
        BetaVariant::Uniform => {
            if b12 >= a2 {
                return Err(Error::Precondition("beta1 + beta2 must be below alpha_hi".into()));
            }
            (a2, a2, a2)
        }
    };
    if c.theta1 + c.beta1 / lx <= 0.0 || c.theta2 + c.beta2 / ly <= 0.0 {
        return Err(Error::Precondition("theta_i + beta_i / alpha must be positive".into()));
    }
    let ba = c.beta1 / a2 + c.theta1;
    let bb = c.beta2 / a2 + c.theta2;
    if ba <= 0.0 || bb <= 0.0 {
        return Err(Error::Precondition("Beta arguments must be positive".into()));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Precondition("t must lie in (0, 1]".into()));
    }
    let inner = |s: f64, _: f64| {
        if s <= 0.0 || s >= t {
            return 0.0;
        }
        convolution_lhs(spec, c, s, t, x, y, 1e-5).value
    };
    let ea = c.theta1 + c.beta1 / lx.max(1e-12);
    let eb = c.theta2 + c.beta2 / ly.max(1e-12);
    let q = singular_time_integral(&inner, t, ea.min(1.0), eb.min(1.0), 1e-4);
    let u = sub(x, y);
    let th = c.theta1 + c.theta2;
    let r = |g: f64, b: f64| rho(&RhoParams::new(g, b, *y), spec, t, &u);
    let rhs = beta_function(ba, bb)
        * (r(th + b12 / lmax, 0.0) + r(th + c.beta1 / lx, c.beta2) + r(th + c.beta2 / ly, c.beta1));
    Ok(FitReport {
        name: match variant {
            BetaVariant::Local => "beta_time_local".into(),
            BetaVariant::Uniform => "beta_time_uniform".into(),
        },
        lhs: q.value,
        rhs,
        ratio: q.value / rhs,
        quadrature_error: q.error,
        params: json!({"params": c, "t": t, "x": x, "y": y, "variant": variant}),
    })
}

fn draw_point(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Point {
    let mut p = [0.0; 2];
    for slot in p.iter_mut().take(dim) {
        *slot = rng.random_range(-radius..radius);
    }
    p
}

fn draw_time(rng: &mut ChaCha8Rng, lo: f64) -> f64 {
    (rng.random_range(lo.ln()..0.0f64)).exp()
}

/// Both mass inequality variants over `n` seeded draws of (β, t, x).
pub fn sweep_mass(spec: &ModelSpec, n: usize, seed: u64) -> Result<(SweepReport, SweepReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a2 = spec.bounds.alpha_hi;
    let mut moving = vec![];
    let mut frozen = vec![];
    for _ in 0..n {
        let beta = rng.random_range(0.0..0.95 * a2);
        let t = draw_time(&mut rng, 0.01);
        let x = draw_point(&mut rng, spec.dim, 3.0);
        let r = check_mass_inequality(spec, beta, t, &x)?;
        moving.push(r.moving);
        frozen.push(r.frozen);
    }
    Ok((
        SweepReport::from_reports("mass_moving_index", moving),
        SweepReport::from_reports("mass_frozen_index", frozen),
    ))
}

/// Convolution inequality, local and uniform forms, over `n` seeded draws.
pub fn sweep_convolution(spec: &ModelSpec, n: usize, seed: u64) -> Result<(SweepReport, SweepReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut local = vec![];
    let mut uniform = vec![];
    for _ in 0..n {
        let c = ConvParams {
            theta1: rng.random_range(-0.5..0.5),
            theta2: rng.random_range(-0.5..0.5),
            beta1: rng.random_range(0.05..0.95),
            beta2: rng.random_range(0.05..0.95),
        };
        let t = draw_time(&mut rng, 0.02);
        let s = t * rng.random_range(0.01..0.99);
        let x = draw_point(&mut rng, spec.dim, 3.0);
        let y = draw_point(&mut rng, spec.dim, 3.0);
        let r = check_convolution_inequality(spec, &c, s, t, &x, &y)?;
        local.push(r.pointwise);
        uniform.push(r.uniform);
    }
    Ok((
        SweepReport::from_reports("convolution_local_index", local),
        SweepReport::from_reports("convolution_uniform_index", uniform),
    ))
}

/// Time-integrated bound over `n` admissible draws; `times` pins t when given.
pub fn sweep_beta(spec: &ModelSpec, variant: BetaVariant, n: usize, seed: u64, times: Option<&[f64]>) -> Result<SweepReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a1 = spec.bounds.alpha_lo;
    let a2 = spec.bounds.alpha_hi;
    let cap = match variant {
        BetaVariant::Local => a1,
        BetaVariant::Uniform => a2,
    };
    let bmax = (0.5 * cap - 0.01).min(0.95);
    let mut out = vec![];
    for i in 0..n {
        let beta1 = rng.random_range(0.05..bmax);
        let beta2 = rng.random_range(0.05..bmax);
        let lo1 = -beta1 / a2 + 0.05;
        let lo2 = -beta2 / a2 + 0.05;
        let c = ConvParams {
            theta1: rng.random_range(lo1..0.5),
            theta2: rng.random_range(lo2..0.5),
            beta1,
            beta2,
        };
        let t = match times {
            Some(ts) => ts[i % ts.len()],
            None => draw_time(&mut rng, 0.02),
        };
        let x = draw_point(&mut rng, spec.dim, 2.0);
        let y = draw_point(&mut rng, spec.dim, 2.0);
        out.push(check_beta_time_integral(spec, &c, variant, t, &x, &y)?);
    }
    let name = match variant {
        BetaVariant::Local => "beta_time_local",
        BetaVariant::Uniform => "beta_time_uniform",
    };
    Ok(SweepReport::from_reports(name, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AlphaFn, Bounds, KappaFn};

    fn constant(a: f64) -> ModelSpec {
        ModelSpec::new(
            1,
            AlphaFn::Constant { value: a },
            KappaFn::Constant { value: 1.0 },
            Bounds {
                alpha_lo: a,
                alpha_hi: a,
                kappa_lo: 1.0,
                kappa_hi: 1.0,
                beta0: 1.0,
                c_alpha: 0.0,
                c_kappa: 0.0,
            },
        )
        .unwrap()
    }

    fn varorder() -> ModelSpec {
        ModelSpec::new(
            1,
            AlphaFn::Bump {
                a: 1.0,
                b: 0.4,
                c: [0.0, 0.0],
                w: 1.0,
            },
            KappaFn::Constant { value: 1.0 },
            Bounds {
                alpha_lo: 1.0,
                alpha_hi: 1.4,
                kappa_lo: 1.0,
                kappa_hi: 1.0,
                beta0: 1.0,
                c_alpha: 0.4,
                c_kappa: 0.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn rho_examples() {
        let s = constant(1.0);
        let p = RhoParams::new(1.0, 0.0, [0.0, 0.0]);
        assert!((rho(&p, &s, 1.0, &[0.0, 0.0]) - 1.0).abs() < 1e-15);
        let s = constant(0.5);
        let p = RhoParams::new(0.0, 0.0, [0.0, 0.0]);
        assert!((rho(&p, &s, 1.0, &[2.0, 0.0]) - 2f64.powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn rho_jump_at_unit_radius() {
        let s = varorder();
        let y = [0.3, 0.0];
        let ay = s.alpha(&y);
        let p = RhoParams::new(0.2, 0.0, y);
        let t: f64 = 0.3;
        let inside = rho(&p, &s, t, &[1.0, 0.0]);
        let outside = rho(&p, &s, t, &[1.0 + 1e-12, 0.0]);
        let expected = (t.powf(1.0 / ay) + 1.0).powf(1.0 + ay);
        assert!((outside / inside - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn tilde_dominates_outside_unit_ball() {
        let s = varorder();
        let p = RhoParams::new(0.0, 0.5, [0.0, 0.0]);
        let q = p.tilde(0.3);
        for &r in &[0.2, 0.9, 1.0, 1.5, 7.0] {
            let a = rho(&p, &s, 0.4, &[r, 0.0]);
            let b = rho(&q, &s, 0.4, &[r, 0.0]);
            if r <= 1.0 {
                assert_eq!(a, b);
            } else {
                assert!(b > a);
            }
        }
    }

    #[test]
    fn crossover_radius_equivalence() {
        let s = varorder();
        let p = RhoParams::new(0.0, 0.3, [0.0, 0.0]);
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 1..400 {
            let r = i as f64 * 0.02;
            for &t in &[0.01, 0.1, 1.0] {
                let base = rho(&p, &s, t, &[r, 0.0]);
                for r0 in [0.5, 2.0] {
                    let q = rho_with_radius(&p, &s, t, &[r, 0.0], r0) / base;
                    lo = lo.min(q);
                    hi = hi.max(q);
                }
            }
        }
        assert!(lo > 0.05 && hi < 20.0, "{lo} {hi}");
    }

    #[test]
    fn frozen_and_moving_coincide_for_constant_index() {
        let s = constant(1.3);
        let r = check_mass_inequality(&s, 0.4, 0.3, &[0.2, 0.0]).unwrap();
        assert!((r.moving.lhs - r.frozen.lhs).abs() < 1e-9 * r.frozen.lhs);
    }

    #[test]
    fn mass_of_cauchy_envelope_closed_form() {
        // β = 0, α = 1, d = 1: 2∫₀¹(t+r)^{-2}dr + 2∫₁^∞ r^{-2}dr
        let s = constant(1.0);
        let t = 0.2;
        let r = check_mass_inequality(&s, 0.0, t, &[0.0, 0.0]).unwrap();
        let exact = 2.0 * (1.0 / t - 1.0 / (1.0 + t)) + 2.0;
        assert!((r.moving.lhs - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn beta_identity() {
        let (q, b) = beta_time_identity(0.5, 0.5, 1.0);
        assert!((b - PI).abs() < 1e-12);
        assert!((q - PI).abs() < 1e-9, "{q}");
        let (q, b) = beta_time_identity(0.3, 1.7, 0.4);
        assert!((q - b).abs() < 1e-9 * b, "{q} {b}");
    }

    #[test]
    fn beta_preconditions() {
        let s = varorder();
        let c = ConvParams {
            theta1: 0.1,
            theta2: 0.1,
            beta1: 0.8,
            beta2: 0.7,
        };
        assert!(check_beta_time_integral(&s, &c, BetaVariant::Uniform, 0.5, &[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn plane_integration_of_separated_bumps() {
        let f = |z: &Point| {
            let a = (-(z[0] * z[0] + z[1] * z[1])).exp();
            let b = (-((z[0] - 2.0).powi(2) + (z[1] - 1.0).powi(2))).exp();
            a + 2.0 * b
        };
        let q = integrate_space(2, &f, &[([0.0, 0.0], vec![1.0]), ([2.0, 1.0], vec![1.0])], 1e-10);
        assert!((q.value - 3.0 * PI).abs() < 1e-7, "{}", q.value);
    }
}
