//! Monte Carlo for the process generated by 𝓛: a frozen-coefficient Euler
//! scheme and statistical oracles built on it (kernel density estimates,
//! exit probabilities, the Lévy system identity, a martingale check).
//!
//! Each path draws from its own ChaCha stream selected by the path index,
//! so results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{norm, ModelSpec, Point};
use crate::numerics::{GaussRule, Spline};
use crate::stable_density::JumpIntegral;

/// Standard symmetric stable vector with E e^{iξ·X} = e^{-|ξ|^a}.
pub fn standard_stable<R: Rng>(dim: usize, a: f64, rng: &mut R) -> Point {
    if dim == 1 {
        // Chambers–Mallows–Stuck
        let u = PI * (rng.random::<f64>() - 0.5);
        let w: f64 = Exp1.sample(rng);
        if a == 1.0 {
            return [u.tan(), 0.0];
        }
        let x = (a * u).sin() / u.cos().powf(1.0 / a) * (((1.0 - a) * u).cos() / w).powf((1.0 - a) / a);
        return [x, 0.0];
    }
    // sub-Gaussian: X = √S G with S positive (a/2)-stable, G ~ N(0, 2I)
    let s = positive_stable(a / 2.0, rng);
    let g1: f64 = StandardNormal.sample(rng);
    let g2: f64 = StandardNormal.sample(rng);
    let c = (2.0 * s).sqrt();
    [c * g1, c * g2]
}

/// Positive stable variable with E e^{-sS} = e^{-s^b}, b ∈ (0, 1) (Kanter).
pub fn positive_stable<R: Rng>(b: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let w: f64 = Exp1.sample(rng);
    let num = (b * PI * u).sin().powf(b) * ((1.0 - b) * PI * u).sin().powf(1.0 - b);
    let a = (num / (PI * u).sin()).powf(1.0 / (1.0 - b));
    (a / w).powf((1.0 - b) / b)
}

/// How one step of the scheme is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exact draw from p^x(h, ·) when κ does not depend on z.
    FrozenStable,
    /// Compound-Poisson jumps above h^{1/α(x)} plus a Gaussian with the
    /// variance of the small jumps.
    CompoundPoisson,
}

/// One Euler step from `x` over time `h`.
pub struct Stepper<'a> {
    spec: &'a ModelSpec,
    scheme: Scheme,
    radial: GaussRule,
}

impl<'a> Stepper<'a> {
    pub fn new(spec: &'a ModelSpec) -> Self {
        let scheme = if spec.z_independent() {
            Scheme::FrozenStable
        } else {
            Scheme::CompoundPoisson
        };
        Stepper {
            spec,
            scheme,
            radial: GaussRule::new(16),
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn increment<R: Rng>(&self, x: &Point, h: f64, rng: &mut R) -> Point {
        let spec = self.spec;
        let a = spec.alpha(x);
        match self.scheme {
            Scheme::FrozenStable => {
                let s = (spec.multiplier(x) * h).powf(1.0 / a);
                let v = standard_stable(spec.dim, a, rng);
                [s * v[0], s * v[1]]
            }
            Scheme::CompoundPoisson => self.compound_poisson(x, a, h, rng),
        }
    }

    fn compound_poisson<R: Rng>(&self, x: &Point, a: f64, h: f64, rng: &mut R) -> Point {
        let spec = self.spec;
        let dim = spec.dim;
        let eps = h.powf(1.0 / a);
        let surface = if dim == 1 { 2.0 } else { 2.0 * PI };
        let khi = spec.bounds.kappa_hi;
        let rate = khi * surface * eps.powf(-a) / a * h;
        let mut out = [0.0; 2];
        let n = if rate > 0.0 {
            Poisson::new(rate).map(|p| p.sample(rng) as u64).unwrap_or(0)
        } else {
            0
        };
        for _ in 0..n {
            let r = eps * rng.random::<f64>().max(f64::MIN_POSITIVE).powf(-1.0 / a);
            let u = direction(dim, rng);
            let z = [r * u[0], r * u[1]];
            if rng.random::<f64>() * khi < spec.kappa(x, &z) {
                out[0] += z[0];
                out[1] += z[1];
            }
        }
        // per-coordinate variance h/d ∫_{|z|<ε}|z|²κ(x,z)|z|^{-d-a}dz
        let dirs: Vec<Point> = if dim == 1 {
            vec![[1.0, 0.0], [-1.0, 0.0]]
        } else {
            (0..8).map(|k| {
                let th = PI * k as f64 / 4.0;
                [th.cos(), th.sin()]
            })
            .collect()
        };
        let var = self.radial.integrate(0.0, 1.0, |v| {
            // r = ε v^{1/(2-a)} removes the endpoint singularity of r^{1-a}
            let p = 1.0 / (2.0 - a);
            let r = eps * v.powf(p);
            let drdv = eps * p * v.powf(p - 1.0);
            let kav: f64 = dirs.iter().map(|u| spec.kappa(x, &[r * u[0], r * u[1]])).sum::<f64>() / dirs.len() as f64;
            kav * r.powf(1.0 - a) * drdv
        }) * surface
            / dim as f64;
        let sd = (var * h).sqrt();
        for c in out.iter_mut().take(dim) {
            let g: f64 = StandardNormal.sample(rng);
            *c += sd * g;
        }
        out
    }
}

fn direction<R: Rng>(dim: usize, rng: &mut R) -> Point {
    if dim == 1 {
        if rng.random::<bool>() {
            [1.0, 0.0]
        } else {
            [-1.0, 0.0]
        }
    } else {
        let th = 2.0 * PI * rng.random::<f64>();
        [th.cos(), th.sin()]
    }
}

/// Random stream of path `index` under `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn step_count(t: f64, h: f64) -> usize {
    ((t / h) - 1e-9).ceil().max(1.0) as usize
}

/// Runs `f(path_index)` for every path on `threads` workers, keeping order.
fn par_paths<T: Send, F: Fn(usize) -> T + Sync>(n: usize, threads: usize, f: F) -> Vec<T> {
    let threads = threads.max(1).min(n.max(1));
    if threads == 1 {
        return (0..n).map(f).collect();
    }
    let per = n.div_ceil(threads);
    let mut out: Vec<Vec<T>> = Vec::with_capacity(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|c| {
                let f = &f;
                scope.spawn(move || (c * per..((c + 1) * per).min(n)).map(f).collect::<Vec<T>>())
            })
            .collect();
        for h in handles {
            out.push(h.join().expect("worker panicked"));
        }
    });
    out.into_iter().flatten().collect()
}

/// Terminal states of independent paths started at `x0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub n_paths: usize,
    pub h_step: f64,
    pub x0: Point,
    pub t: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub dim: usize,
    pub terminal: Vec<Point>,
}

pub fn simulate(
    spec: &ModelSpec,
    x0: &Point,
    t: f64,
    n_paths: usize,
    h_step: f64,
    seed: u64,
    threads: usize,
) -> Result<PathEnsemble> {
    if n_paths < 1 {
        return Err(Error::Validation("n_paths must be >= 1".into()));
    }
    if !(h_step > 0.0 && h_step <= t) {
        return Err(Error::Validation("h_step must lie in (0, t]".into()));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Validation("t must lie in (0, 1]".into()));
    }
    let stepper = Stepper::new(spec);
    let steps = step_count(t, h_step);
    let terminal = par_paths(n_paths, threads, |p| {
        let mut rng = path_rng(seed, p as u64);
        let mut x = *x0;
        let mut s = 0.0;
        for _ in 0..steps {
            let h = h_step.min(t - s);
            let dx = stepper.increment(&x, h, &mut rng);
            x = [x[0] + dx[0], x[1] + dx[1]];
            s += h;
        }
        x
    });
    Ok(PathEnsemble {
        n_paths,
        h_step,
        x0: *x0,
        t,
        seed,
        scheme: stepper.scheme(),
        dim: spec.dim,
        terminal,
    })
}

impl PathEnsemble {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        if self.dim == 1 {
            writeln!(out, "path,x")?;
            for (i, p) in self.terminal.iter().enumerate() {
                writeln!(out, "{i},{:e}", p[0])?;
            }
        } else {
            writeln!(out, "path,x1,x2")?;
            for (i, p) in self.terminal.iter().enumerate() {
                writeln!(out, "{i},{:e},{:e}", p[0], p[1])?;
            }
        }
        Ok(())
    }

    /// Half the Silverman bandwidth, with the spread taken from the
    /// interquartile range.
    pub fn default_bandwidth(&self) -> f64 {
        let mut v: Vec<f64> = self.terminal.iter().map(|p| p[0] - self.x0[0]).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        let q = |f: f64| v[((v.len() - 1) as f64 * f).round() as usize];
        let iqr = q(0.75) - q(0.25);
        let n = v.len() as f64;
        0.5 * 0.9 * (iqr / 1.34) * n.powf(-1.0 / (4.0 + self.dim as f64))
    }
}

/// An estimate with its standard error.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Stat {
    pub estimate: f64,
    pub stderr: f64,
}

/// Number of batches for batch-mean standard errors.
pub const BATCHES: usize = 16;

fn batch_means(values: &[f64]) -> Stat {
    let n = values.len();
    let b = BATCHES.min(n.max(1));
    let per = n / b;
    if per == 0 {
        let m = values.iter().sum::<f64>() / n.max(1) as f64;
        return Stat {
            estimate: m,
            stderr: f64::INFINITY,
        };
    }
    let means: Vec<f64> = (0..b)
        .map(|k| values[k * per..(k + 1) * per].iter().sum::<f64>() / per as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1).max(1) as f64;
    Stat {
        estimate: mean,
        stderr: (var / b as f64).sqrt(),
    }
}

/// Gaussian-kernel estimate of p(t, x₀, y).
pub fn kde_density(ens: &PathEnsemble, y: &Point, bandwidth: f64) -> Result<Stat> {
    if !(bandwidth > 0.0) {
        return Err(Error::Validation("bandwidth must be > 0".into()));
    }
    let d = ens.dim as i32;
    let norm_c = (2.0 * PI).powf(-(d as f64) / 2.0) * bandwidth.powi(-d);
    let vals: Vec<f64> = ens
        .terminal
        .iter()
        .map(|p| {
            let r2 = (p[0] - y[0]).powi(2) + if d == 2 { (p[1] - y[1]).powi(2) } else { 0.0 };
            norm_c * (-0.5 * r2 / (bandwidth * bandwidth)).exp()
        })
        .collect();
    Ok(batch_means(&vals))
}

/// Empirical probability with a Wilson score interval.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Probability {
    pub estimate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub n: usize,
}

impl Probability {
    pub fn wilson(successes: usize, n: usize) -> Self {
        let z = 1.959_963_984_540_054;
        let nf = n as f64;
        let p = successes as f64 / nf;
        let den = 1.0 + z * z / nf;
        let centre = (p + z * z / (2.0 * nf)) / den;
        let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / den;
        Probability {
            estimate: p,
            wilson_low: centre - half,
            wilson_high: centre + half,
            n,
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.wilson_high - self.wilson_low)
    }
}

/// P_x(τ_{B(x,Ar)} ≤ r^{α(x)}). Steps are r^{α(x)}/256, so exits between
/// steps are missed and the estimate is biased low.
pub fn exit_time_stat(
    spec: &ModelSpec,
    x: &Point,
    r: f64,
    a: f64,
    n_paths: usize,
    seed: u64,
    threads: usize,
) -> Result<Probability> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Validation("r must lie in (0, 1)".into()));
    }
    if !(a > 0.0) {
        return Err(Error::Validation("A must be > 0".into()));
    }
    let stepper = Stepper::new(spec);
    let horizon = r.powf(spec.alpha(x));
    let steps = 256;
    let h = horizon / steps as f64;
    let radius = a * r;
    let exits = par_paths(n_paths, threads, |p| {
        let mut rng = path_rng(seed, p as u64);
        let mut y = *x;
        for _ in 0..steps {
            let dx = stepper.increment(&y, h, &mut rng);
            y = [y[0] + dx[0], y[1] + dx[1]];
            if norm(&[y[0] - x[0], y[1] - x[1]]) >= radius {
                return true;
            }
        }
        false
    });
    Ok(Probability::wilson(exits.iter().filter(|e| **e).count(), n_paths))
}

/// Pair functions g(x, y) for the Lévy system identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairFunction {
    Zero,
    /// 𝟙_{|y − x| > delta}.
    FarJump { delta: f64 },
}

impl PairFunction {
    fn eval(&self, x: &Point, y: &Point) -> f64 {
        match self {
            PairFunction::Zero => 0.0,
            PairFunction::FarJump { delta } => {
                if norm(&[y[0] - x[0], y[1] - x[1]]) > *delta {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// ∫ g(x, y) J(x, y) dy.
    fn jump_mass(&self, spec: &ModelSpec, x: &Point, rule: &GaussRule) -> f64 {
        match self {
            PairFunction::Zero => 0.0,
            PairFunction::FarJump { delta } => {
                let a = spec.alpha(x);
                let d = spec.dim;
                if spec.z_independent() {
                    let s = if d == 1 { 2.0 } else { 2.0 * PI };
                    return spec.kappa.far(x) * s * delta.powf(-a) / a;
                }
                // r = δ u^{-1/a}: ∫_δ^∞ k(r) r^{-1-a} dr = δ^{-a}/a ∫_0^1 k du
                let dirs: Vec<Point> = if d == 1 {
                    vec![[1.0, 0.0], [-1.0, 0.0]]
                } else {
                    (0..32)
                        .map(|k| {
                            let th = 2.0 * PI * (k as f64 + 0.5) / 32.0;
                            [th.cos(), th.sin()]
                        })
                        .collect()
                };
                let wdir = if d == 1 { 1.0 } else { 2.0 * PI / 32.0 };
                let mut acc = 0.0;
                for u in &dirs {
                    acc += wdir
                        * rule.integrate(0.0, 1.0, |v| {
                            let r = delta * v.max(1e-300).powf(-1.0 / a);
                            spec.kappa(x, &[r * u[0], r * u[1]])
                        });
                }
                acc * delta.powf(-a) / a
            }
        }
    }
}

/// Both sides of E Σ_{s≤t} g(X_{s−}, X_s) = E ∫_0^t ∫ g(X_s, y) J(X_s, y) dy ds.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LevySystem {
    pub lhs: Stat,
    pub rhs: Stat,
    pub threshold: f64,
}

impl LevySystem {
    pub fn combined_stderr(&self) -> f64 {
        (self.lhs.stderr.powi(2) + self.rhs.stderr.powi(2)).sqrt()
    }
}

/// Jumps are the increments with |ΔX| above 3·h^{1/α₂}.
pub fn jump_threshold(spec: &ModelSpec, h_step: f64) -> f64 {
    3.0 * h_step.powf(1.0 / spec.bounds.alpha_hi)
}

#[allow(clippy::too_many_arguments)]
pub fn levy_system_check(
    spec: &ModelSpec,
    x0: &Point,
    t: f64,
    g: PairFunction,
    n_paths: usize,
    h_step: f64,
    seed: u64,
    threads: usize,
) -> Result<LevySystem> {
    let threshold = jump_threshold(spec, h_step);
    if let PairFunction::FarJump { delta } = g {
        if delta <= threshold {
            return Err(Error::Validation(format!(
                "delta = {delta} is below the jump resolution {threshold}"
            )));
        }
    }
    if !(h_step > 0.0 && h_step <= t && t <= 1.0) {
        return Err(Error::Validation("need 0 < h_step <= t <= 1".into()));
    }
    let stepper = Stepper::new(spec);
    let rule = GaussRule::new(24);
    let steps = step_count(t, h_step);
    let pairs = par_paths(n_paths, threads, |p| {
        let mut rng = path_rng(seed, p as u64);
        let mut x = *x0;
        let mut s = 0.0;
        let (mut lhs, mut rhs) = (0.0, 0.0);
        for _ in 0..steps {
            let h = h_step.min(t - s);
            rhs += h * g.jump_mass(spec, &x, &rule);
            let dx = stepper.increment(&x, h, &mut rng);
            let y = [x[0] + dx[0], x[1] + dx[1]];
            if norm(&dx) > threshold {
                lhs += g.eval(&x, &y);
            }
            x = y;
            s += h;
        }
        (lhs, rhs)
    });
    let l: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let r: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok(LevySystem {
        lhs: batch_means(&l),
        rhs: batch_means(&r),
        threshold,
    })
}

/// 𝓛f for f(x) = exp(−|x − c|²/w²) by the symmetric quadrature.
pub fn generator_of_bump(spec: &ModelSpec, c: &Point, w: f64, x: &Point) -> f64 {
    let f = |p: &Point| (-((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / (w * w)).exp();
    let a = spec.alpha(x);
    let d = spec.dim as f64;
    let f0 = f(x);
    let diff = |z: &Point| f(&[x[0] + z[0], x[1] + z[1]]) + f(&[x[0] - z[0], x[1] - z[1]]) - 2.0 * f0;
    let kernel = |z: &Point| spec.kappa(x, z) * norm(z).powf(-d - a);
    let dx = norm(&[x[0] - c[0], x[1] - c[1]]);
    JumpIntegral {
        dim: spec.dim,
        delta: 0.1 * w,
        alpha_inner: a,
        zmax: 50.0 * w.max(1.0) + dx,
        features: vec![(dx, w)],
        diff: &diff,
        kernel: &kernel,
    }
    .evaluate()
    .value
}

/// Mean of M_t^f = f(X_t) − f(X_0) − ∫_0^t 𝓛f(X_s)ds for the Gaussian bump
/// f centred at x₀ with width 1 (d = 1 tabulates 𝓛f on [−40, 40]).
pub fn martingale_check(
    spec: &ModelSpec,
    x0: &Point,
    t: f64,
    n_paths: usize,
    h_step: f64,
    seed: u64,
    threads: usize,
) -> Result<Stat> {
    if !(h_step > 0.0 && h_step <= t && t <= 1.0) {
        return Err(Error::Validation("need 0 < h_step <= t <= 1".into()));
    }
    let w = 1.0;
    let f = |p: &Point| (-((p[0] - x0[0]).powi(2) + (p[1] - x0[1]).powi(2)) / (w * w)).exp();
    let table = if spec.dim == 1 {
        let xs: Vec<f64> = (0..=1600).map(|k| x0[0] - 40.0 + 0.05 * k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|v| generator_of_bump(spec, x0, w, &[*v, 0.0])).collect();
        Some(Spline::natural(&xs, &ys))
    } else {
        None
    };
    let lf = |p: &Point| match &table {
        Some(s) if (p[0] - x0[0]).abs() <= 40.0 => s.eval(p[0]),
        _ => generator_of_bump(spec, x0, w, p),
    };
    let stepper = Stepper::new(spec);
    let steps = step_count(t, h_step);
    let vals = par_paths(n_paths, threads, |p| {
        let mut rng = path_rng(seed, p as u64);
        let mut x = *x0;
        let mut s = 0.0;
        let mut integral = 0.0;
        for _ in 0..steps {
            let h = h_step.min(t - s);
            let y = {
                let dx = stepper.increment(&x, h, &mut rng);
                [x[0] + dx[0], x[1] + dx[1]]
            };
            // trapezoid in time along the path
            integral += 0.5 * h * (lf(&x) + lf(&y));
            x = y;
            s += h;
        }
        f(&x) - f(x0) - integral
    });
    Ok(batch_means(&vals))
}

/// Kolmogorov–Smirnov distance between two samples of the first coordinate.
pub fn ks_distance(a: &[Point], b: &[Point]) -> f64 {
    let mut x: Vec<f64> = a.iter().map(|p| p[0]).collect();
    let mut y: Vec<f64> = b.iter().map(|p| p[0]).collect();
    x.sort_by(|p, q| p.total_cmp(q));
    y.sort_by(|p, q| p.total_cmp(q));
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        if x[i] <= y[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / x.len() as f64 - j as f64 / y.len() as f64).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_samples_have_the_right_characteristic_function() {
        let mut rng = path_rng(11, 0);
        for (dim, a) in [(1, 0.7), (1, 1.0), (1, 1.6), (2, 0.8), (2, 1.5)] {
            let n = 40_000;
            let xs: Vec<Point> = (0..n).map(|_| standard_stable(dim, a, &mut rng)).collect();
            for xi in [0.5, 1.0, 2.0] {
                let ecf = xs.iter().map(|p| (xi * p[0]).cos()).sum::<f64>() / n as f64;
                let exact = (-f64::powf(xi, a)).exp();
                assert!((ecf - exact).abs() < 0.02, "dim {dim} a {a} xi {xi}: {ecf} vs {exact}");
            }
        }
    }

    #[test]
    fn cauchy_single_step_quartiles() {
        let spec = ModelSpec::constant(1, 1.0, 1.0 / PI).unwrap();
        let ens = simulate(&spec, &[0.0, 0.0], 0.5, 20_000, 0.5, 3, 2).unwrap();
        let mut v: Vec<f64> = ens.terminal.iter().map(|p| p[0]).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        let q = |f: f64| v[(f * (v.len() - 1) as f64) as usize];
        assert!(q(0.5).abs() < 0.03);
        assert!(((q(0.75) - q(0.25)) - 1.0).abs() < 0.05);
    }

    #[test]
    fn reproducible_and_thread_independent() {
        let spec = ModelSpec::varorder();
        let a = simulate(&spec, &[0.0, 0.0], 0.25, 64, 1.0 / 64.0, 9, 1).unwrap();
        let b = simulate(&spec, &[0.0, 0.0], 0.25, 64, 1.0 / 64.0, 9, 3).unwrap();
        assert_eq!(a.terminal, b.terminal);
        let c = simulate(&spec, &[0.0, 0.0], 0.25, 64, 1.0 / 64.0, 10, 1).unwrap();
        assert_ne!(a.terminal, c.terminal);
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        let p = Probability::wilson(30, 100);
        assert!(p.wilson_low < 0.3 && 0.3 < p.wilson_high);
        assert!((p.half_width() - 0.0887).abs() < 1e-3);
    }

    #[test]
    fn cauchy_kde_matches_closed_form() {
        let spec = ModelSpec::constant(1, 1.0, 1.0 / PI).unwrap();
        let ens = simulate(&spec, &[0.0, 0.0], 0.5, 40_000, 0.5, 9, 2).unwrap();
        let bw = ens.default_bandwidth();
        for y in [0.0, 0.5, 1.5] {
            let s = kde_density(&ens, &[y, 0.0], bw).unwrap();
            let exact = 0.5 / (PI * (0.25 + y * y));
            // Gaussian smoothing bias of the peak is O(bw²p'')
            let bias = bw * bw * 2.0 / (PI * 0.125);
            assert!((s.estimate - exact).abs() < 4.0 * s.stderr + bias, "y={y} {s:?} {exact}");
        }
    }

    #[test]
    fn cauchy_far_jump_count() {
        let spec = ModelSpec::constant(1, 1.0, 1.0 / PI).unwrap();
        let t = 0.5;
        let r = levy_system_check(&spec, &[0.0, 0.0], t, PairFunction::FarJump { delta: 1.0 }, 20_000, 1.0 / 256.0, 4, 2)
            .unwrap();
        let exact = 2.0 * t / PI;
        assert!((r.rhs.estimate - exact).abs() < 1e-3, "{r:?}");
        assert!((r.lhs.estimate - r.rhs.estimate).abs() < 3.0 * r.combined_stderr() + 1e-3, "{r:?}");
    }

    #[test]
    fn exit_probability_extremes() {
        let spec = ModelSpec::varorder();
        let wide = exit_time_stat(&spec, &[0.0, 0.0], 0.1, 1e6, 500, 2, 1).unwrap();
        assert_eq!(wide.estimate, 0.0);
        let tight = exit_time_stat(&spec, &[0.0, 0.0], 0.1, 1e-6, 500, 2, 1).unwrap();
        assert_eq!(tight.estimate, 1.0);
        assert!(exit_time_stat(&spec, &[0.0, 0.0], 1.5, 1.0, 10, 2, 1).is_err());
    }

    #[test]
    fn zero_pair_function() {
        let spec = ModelSpec::varorder();
        let r = levy_system_check(&spec, &[0.0, 0.0], 0.25, PairFunction::Zero, 100, 1.0 / 64.0, 1, 1).unwrap();
        assert_eq!(r.lhs.estimate, 0.0);
        assert_eq!(r.rhs.estimate, 0.0);
    }

    #[test]
    fn compound_poisson_scheme_matches_frozen_draws() {
        let spec = ModelSpec::constant(1, 1.2, 1.0).unwrap();
        let mut general = Stepper::new(&spec);
        general.scheme = Scheme::CompoundPoisson;
        let frozen = Stepper::new(&spec);
        let run = |st: &Stepper, seed: u64| -> Vec<Point> {
            (0..10_000u64)
                .map(|i| {
                    let mut rng = path_rng(seed, i);
                    let mut x = 0.0;
                    for _ in 0..64 {
                        x += st.increment(&[x, 0.0], 0.25 / 64.0, &mut rng)[0];
                    }
                    [x, 0.0]
                })
                .collect()
        };
        let d = ks_distance(&run(&frozen, 5), &run(&general, 6));
        assert!(d < 0.03, "{d}");
    }
}
