//! Frozen-coefficient densities p^y(t,x), their second differences and the
//! action of frozen operators on them.
//!
//! When κ does not depend on z the frozen symbol is m(y)|ξ|^{α(y)} and every
//! quantity reduces to the radial profiles
//!
//! Φ_{a,b}(v) = (2π)^{-d} ∫ |ξ|^b e^{-|ξ|^a} e^{iξ·v} dξ,
//!
//! which are tabulated once per (a, b) and interpolated in a and b on
//! Chebyshev nodes. The general case tabulates ψ^y and inverts per time slice.

use rustfft::{num_complex::Complex, FftPlanner};
use statrs::function::gamma::ln_gamma;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::model::{frac_laplacian_const, norm, ModelSpec, Point};
use crate::numerics::{hurwitz_zeta, integrate, recip_gamma, spline_uniform, ChebNodes, GaussRule, Spline};

/// Table range of the profiles in scaled distance.
pub const VMAX_1D: f64 = 24.0;
pub const VMAX_2D: f64 = 12.0;

/// Far-field series Σ c_k v^{-e_k} of Φ_{a,b}, truncated where the terms
/// stop decreasing at v = vref.
pub fn tail_series(dim: usize, a: f64, b: f64, vref: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut last = f64::INFINITY;
    let mut first = 0.0f64;
    for k in 0..120 {
        let kf = k as f64;
        let lnfact = ln_gamma(kf + 1.0);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let (c, e) = if dim == 1 {
            let s = b + a * kf + 1.0;
            let cs = (PI * s / 2.0).cos();
            let cs = if cs.abs() < 1e-14 { 0.0 } else { cs };
            (sign / PI * (ln_gamma(s) - lnfact).exp() * cs, s)
        } else {
            let mu = b + 1.0 + a * kf;
            let c = sign / (2.0 * PI)
                * (mu * 2f64.ln() + ln_gamma((1.0 + mu) / 2.0) - lnfact).exp()
                * recip_gamma((1.0 - mu) / 2.0);
            let c = if c.abs() < 1e-300 { 0.0 } else { c };
            (c, mu + 1.0)
        };
        let term = (c * vref.powf(-e)).abs();
        if c != 0.0 {
            if first == 0.0 {
                first = term;
            }
            if k > 2 && term > last {
                break;
            }
            last = term;
            out.push((c, e));
            if term < 1e-18 * first {
                break;
            }
        }
    }
    out
}

fn eval_series(series: &[(f64, f64)], v: f64) -> f64 {
    let lv = v.ln();
    series.iter().map(|(c, e)| c * (-e * lv).exp()).sum()
}

/// One radial profile tabulated on [0, vmax] with second derivatives, plus
/// its far-field series.
#[derive(Clone, Debug)]
pub struct Profile {
    pub dv: f64,
    pub y: Vec<f64>,
    pub y2: Vec<f64>,
    pub series: Vec<(f64, f64)>,
}

impl Profile {
    pub fn vmax(&self) -> f64 {
        self.dv * (self.y.len() - 1) as f64
    }

    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        match spline_uniform(&self.y, &self.y2, self.dv, v) {
            Some(f) => f,
            None => eval_series(&self.series, v),
        }
    }
}

fn fft_cosine(g: &[f64], n: usize) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = g.iter().map(|x| Complex::new(*x, 0.0)).collect();
    buf.resize(n, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    buf
}

/// Spacing that keeps e^{-ξ^a} negligible at the Nyquist frequency.
fn profile_spacing(a: f64) -> f64 {
    (2.0 * PI / 38f64.powf(1.0 / a)).min(0.01)
}

/// Φ_{a,b} in d = 1 by a cosine FFT. The periodisation caused by the
/// algebraic tails is removed with the far-field series.
pub fn build_profile_1d(a: f64, b: f64) -> Profile {
    let dv0 = profile_spacing(a);
    let nt = (VMAX_1D / dv0).ceil() as usize + 1;
    let dv = VMAX_1D / (nt - 1) as f64;
    let n = (4 * nt).next_power_of_two().max(1 << 16);
    let l = n as f64 * dv;
    let dxi = 2.0 * PI / l;
    let transform = |p: f64| -> Vec<f64> {
        let g: Vec<f64> = (0..n)
            .map(|k| {
                let xi = k as f64 * dxi;
                let v = if k == 0 {
                    if p == 0.0 {
                        0.5
                    } else {
                        0.0
                    }
                } else {
                    (p * xi.ln() - xi.powf(a)).exp()
                };
                if v < 1e-300 {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        let f = fft_cosine(&g, n);
        let series = tail_series(1, a, p, 600.0);
        (0..nt)
            .map(|j| {
                let v = j as f64 * dv;
                let periodic = f[j].re * dxi / PI;
                let alias: f64 = series
                    .iter()
                    .map(|(c, e)| {
                        c * l.powf(-e) * (hurwitz_zeta(*e, 1.0 + v / l) + hurwitz_zeta(*e, 1.0 - v / l))
                    })
                    .sum();
                periodic - alias
            })
            .collect()
    };
    let y = transform(b);
    let y2: Vec<f64> = transform(b + 2.0).into_iter().map(|v| -v).collect();
    Profile {
        dv,
        y,
        y2,
        series: tail_series(1, a, b, VMAX_1D),
    }
}

/// Φ_{a,b} in d = 2 by direct Hankel quadrature.
pub fn build_profile_2d(a: f64, b: f64) -> Profile {
    let g = |xi: f64| if xi <= 0.0 { 0.0 } else { ((b + 1.0) * xi.ln() - xi.powf(a)).exp() };
    hankel_table(&g, 38f64.powf(1.0 / a) * 1.05, VMAX_2D, 0.02, tail_series(2, a, b, VMAX_2D))
}

/// f(r) = (2π)^{-1} ∫₀^∞ G(ξ) J₀(ξr) dξ tabulated with f'' on [0, rmax]. G
/// already contains the Jacobian factor ξ.
fn hankel_table(g: &dyn Fn(f64) -> f64, ximax: f64, rmax: f64, dr: f64, series: Vec<(f64, f64)>) -> Profile {
    let nt = (rmax / dr).round() as usize + 1;
    let dr = rmax / (nt - 1) as f64;
    let mut nodes = Vec::new();
    let head = GaussRule::new(20);
    let xi1 = 0.5f64.min(ximax);
    for (s, w) in head.on(0.0, 1.0) {
        let xi = xi1 * s * s;
        nodes.push((xi, w * 2.0 * xi1 * s * g(xi)));
    }
    let width = (PI / (2.0 * rmax)).min(0.5);
    let rule = GaussRule::new(8);
    let mut lo = xi1;
    while lo < ximax {
        let hi = (lo + width).min(ximax);
        for (xi, w) in rule.on(lo, hi) {
            nodes.push((xi, w * g(xi)));
        }
        lo = hi;
    }
    let mut y = vec![0.0; nt];
    let mut y2 = vec![0.0; nt];
    for j in 0..nt {
        let r = j as f64 * dr;
        let (mut s0, mut s2) = (0.0, 0.0);
        for (xi, w) in &nodes {
            let x = xi * r;
            let j0 = libm::j0(x);
            let j1_over = if x < 1e-8 { 0.5 } else { libm::j1(x) / x };
            s0 += w * j0;
            s2 += w * xi * xi * (-j0 + j1_over);
        }
        y[j] = s0 / (2.0 * PI);
        y2[j] = s2 / (2.0 * PI);
    }
    Profile { dv: dr, y, y2, series }
}

fn build_profile(dim: usize, a: f64, b: f64) -> Profile {
    if dim == 1 {
        build_profile_1d(a, b)
    } else {
        build_profile_2d(a, b)
    }
}

/// Profiles Φ_{a,0}, Φ_{a,a} and Φ_{a,b} on Chebyshev nodes of [lo, hi].
#[derive(Clone, Debug)]
pub struct StableBank {
    pub dim: usize,
    pub a_nodes: ChebNodes,
    pub b_nodes: ChebNodes,
    dens: Vec<Profile>,
    rate: Vec<Profile>,
    cross: Vec<Vec<Profile>>,
}

impl StableBank {
    pub fn new(dim: usize, lo: f64, hi: f64) -> Self {
        let n = if dim == 1 { 10 } else { 6 };
        let a_nodes = ChebNodes::new(lo, hi, n);
        let b_nodes = ChebNodes::new(lo, hi, n);
        let mut dens = vec![];
        let mut rate = vec![];
        let mut cross = vec![];
        for &a in &a_nodes.nodes {
            dens.push(build_profile(dim, a, 0.0));
            rate.push(build_profile(dim, a, a));
            if b_nodes.len() == 1 {
                cross.push(vec![rate.last().unwrap().clone()]);
            } else {
                cross.push(b_nodes.nodes.iter().map(|&b| build_profile(dim, a, b)).collect());
            }
        }
        StableBank {
            dim,
            a_nodes,
            b_nodes,
            dens,
            rate,
            cross,
        }
    }

    pub fn vmax(&self) -> f64 {
        self.dens[0].vmax()
    }

    /// Φ_{a,0}(v) for any a in the bank range.
    pub fn phi0(&self, a: f64, v: f64) -> f64 {
        if v > self.vmax() {
            return eval_series(&tail_series(self.dim, a, 0.0, self.vmax()), v);
        }
        let c = self.a_nodes.coefficients(a);
        c.iter().zip(&self.dens).map(|(w, p)| w * p.eval(v)).sum()
    }

    /// Contracts the tables at a fixed a.
    pub fn slice(&self, a: f64) -> BankSlice {
        let c = self.a_nodes.coefficients(a);
        let combine = |ps: &[&Profile]| -> (Vec<f64>, Vec<f64>) {
            let len = ps[0].y.len();
            let mut y = vec![0.0; len];
            let mut y2 = vec![0.0; len];
            for (w, p) in c.iter().zip(ps) {
                for i in 0..len {
                    y[i] += w * p.y[i];
                    y2[i] += w * p.y2[i];
                }
            }
            (y, y2)
        };
        let vmax = self.vmax();
        let dv = self.dens[0].dv;
        let d: Vec<&Profile> = self.dens.iter().collect();
        let (y, y2) = combine(&d);
        let dens = Profile {
            dv,
            y,
            y2,
            series: tail_series(self.dim, a, 0.0, vmax),
        };
        let r: Vec<&Profile> = self.rate.iter().collect();
        let (y, y2) = combine(&r);
        let rate = Profile {
            dv,
            y,
            y2,
            series: tail_series(self.dim, a, a, vmax),
        };
        let nb = self.b_nodes.len();
        let len = dens.y.len();
        let mut cy = vec![0.0; len * nb];
        let mut cy2 = vec![0.0; len * nb];
        for j in 0..nb {
            let col: Vec<&Profile> = self.cross.iter().map(|row| &row[j]).collect();
            let (y, y2) = combine(&col);
            for i in 0..len {
                cy[i * nb + j] = y[i];
                cy2[i * nb + j] = y2[i];
            }
        }
        BankSlice {
            dim: self.dim,
            a,
            dv,
            vmax,
            dens,
            rate,
            nb,
            cross_y: cy,
            cross_y2: cy2,
            b_nodes: self.b_nodes.clone(),
        }
    }
}

/// Weights for evaluating the cross profile at a fixed b.
#[derive(Clone, Debug)]
pub struct CrossWeights {
    pub b: f64,
    pub w: Vec<f64>,
    pub series: Vec<(f64, f64)>,
}

/// Bank tables contracted at one index a.
#[derive(Clone, Debug)]
pub struct BankSlice {
    pub dim: usize,
    pub a: f64,
    dv: f64,
    vmax: f64,
    pub dens: Profile,
    pub rate: Profile,
    nb: usize,
    cross_y: Vec<f64>,
    cross_y2: Vec<f64>,
    b_nodes: ChebNodes,
}

impl BankSlice {
    pub fn vmax(&self) -> f64 {
        self.vmax
    }

    pub fn cross_weights(&self, b: f64) -> CrossWeights {
        CrossWeights {
            b,
            w: self.b_nodes.coefficients(b),
            series: tail_series(self.dim, self.a, b, self.vmax),
        }
    }

    /// Φ_{a,b}(v) through precomputed weights.
    #[inline]
    pub fn cross(&self, cw: &CrossWeights, v: f64) -> f64 {
        self.cross_parts(&cw.w, &cw.series, v)
    }

    /// Φ_{a,b}(v) from b-node weights and the far-field series of (a, b).
    #[inline]
    pub fn cross_parts(&self, w: &[f64], series: &[(f64, f64)], v: f64) -> f64 {
        if v > self.vmax {
            return eval_series(series, v);
        }
        let s = v / self.dv;
        let nb = self.nb;
        let len = self.cross_y.len() / nb;
        let i = (s as usize).min(len - 2);
        let bb = s - i as f64;
        let aa = 1.0 - bb;
        let h2 = self.dv * self.dv / 6.0;
        let ca = (aa * aa * aa - aa) * h2;
        let cb = (bb * bb * bb - bb) * h2;
        let (y0, y1) = (&self.cross_y[i * nb..(i + 1) * nb], &self.cross_y[(i + 1) * nb..(i + 2) * nb]);
        let (z0, z1) = (&self.cross_y2[i * nb..(i + 1) * nb], &self.cross_y2[(i + 1) * nb..(i + 2) * nb]);
        let mut acc = 0.0;
        for j in 0..nb {
            acc += w[j] * (aa * y0[j] + bb * y1[j] + ca * z0[j] + cb * z1[j]);
        }
        acc
    }

    pub fn scale(&self, m: f64, t: f64) -> f64 {
        (m * t).powf(1.0 / self.a)
    }

    /// p(t, r) for the symbol m|ξ|^a.
    #[inline]
    pub fn density(&self, m: f64, t: f64, r: f64) -> f64 {
        let s = self.scale(m, t);
        self.dens.eval(r / s) * s.powi(-(self.dim as i32))
    }

    /// ∂_t p(t, r) = -m σ^{-d-a} Φ_{a,a}(r/σ).
    #[inline]
    pub fn time_derivative(&self, m: f64, t: f64, r: f64) -> f64 {
        let s = self.scale(m, t);
        -m * s.powf(-(self.dim as f64) - self.a) * self.rate.eval(r / s)
    }

    /// Frozen operator of symbol m_x|ξ|^b applied to p(t, ·) at distance r.
    #[inline]
    pub fn operator(&self, m: f64, t: f64, mx: f64, cw: &CrossWeights, r: f64) -> f64 {
        let s = self.scale(m, t);
        -mx * s.powf(-(self.dim as f64) - cw.b) * self.cross(cw, r / s)
    }
}

type SliceKey = (usize, u64);

fn slice_cache() -> &'static Mutex<HashMap<SliceKey, Arc<BankSlice>>> {
    static CACHE: OnceLock<Mutex<HashMap<SliceKey, Arc<BankSlice>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Tables for a single index a, shared process-wide.
pub fn single_slice(dim: usize, a: f64) -> Arc<BankSlice> {
    let key = (dim, a.to_bits());
    if let Some(s) = slice_cache().lock().unwrap().get(&key) {
        return s.clone();
    }
    let s = Arc::new(StableBank::new(dim, a, a).slice(a));
    slice_cache().lock().unwrap().insert(key, s.clone());
    s
}

fn bank_cache() -> &'static Mutex<HashMap<(usize, u64, u64), Arc<StableBank>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64, u64), Arc<StableBank>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Bank covering [lo, hi], shared process-wide.
pub fn shared_bank(dim: usize, lo: f64, hi: f64) -> Arc<StableBank> {
    let key = (dim, lo.to_bits(), hi.to_bits());
    if let Some(b) = bank_cache().lock().unwrap().get(&key) {
        return b.clone();
    }
    let b = Arc::new(StableBank::new(dim, lo, hi));
    bank_cache().lock().unwrap().insert(key, b.clone());
    b
}

/// Tabulated characteristic exponent for a z-dependent coefficient, stored
/// as ψ(ξ)/|ξ|^α against log ξ.
#[derive(Clone, Debug)]
pub struct PsiTable {
    alpha: f64,
    ratio: Spline,
    pub log_xi: Vec<f64>,
    pub values: Vec<f64>,
}

impl PsiTable {
    pub fn eval(&self, xi: f64) -> f64 {
        let xi = xi.abs();
        if xi == 0.0 {
            return 0.0;
        }
        let (lo, hi) = self.ratio.domain();
        let l = xi.ln().clamp(lo, hi);
        self.ratio.eval(l) * xi.powf(self.alpha)
    }
}

/// Per-time inversion of a tabulated symbol.
#[derive(Clone, Debug)]
pub struct DensitySlice {
    pub t: f64,
    pub table: Profile,
    /// p ≈ tail_coeff · |x|^{-d-α} beyond the table.
    pub tail_coeff: f64,
    pub tail_exponent: f64,
    pub clamped: usize,
}

impl DensitySlice {
    pub fn eval(&self, r: f64) -> f64 {
        if r > self.table.vmax() {
            return self.tail_coeff * r.powf(-self.tail_exponent);
        }
        spline_uniform(&self.table.y, &self.table.y2, self.table.dv, r)
            .unwrap()
            .max(0.0)
    }
}

#[derive(Debug)]
pub enum SymbolKind {
    PowerLaw { m: f64, slice: Arc<BankSlice> },
    Tabulated {
        psi: PsiTable,
        kappa_far: f64,
        cache: Mutex<HashMap<u64, Arc<DensitySlice>>>,
    },
}

/// Frozen symbol ψ^y of the Lévy measure κ(y,z)|z|^{-d-α(y)}dz.
#[derive(Debug)]
pub struct FrozenSymbol {
    pub y: Point,
    pub alpha_y: f64,
    pub dim: usize,
    pub kind: SymbolKind,
}

impl FrozenSymbol {
    pub fn exact_power_law(&self) -> bool {
        matches!(self.kind, SymbolKind::PowerLaw { .. })
    }

    pub fn psi(&self, xi: f64) -> f64 {
        match &self.kind {
            SymbolKind::PowerLaw { m, .. } => m * xi.abs().powf(self.alpha_y),
            SymbolKind::Tabulated { psi, .. } => psi.eval(xi),
        }
    }

    /// Multiplier m(y) in the power-law case.
    pub fn multiplier(&self) -> Option<f64> {
        match &self.kind {
            SymbolKind::PowerLaw { m, .. } => Some(*m),
            _ => None,
        }
    }

    pub fn density_slice(&self, t: f64) -> Result<Arc<DensitySlice>> {
        match &self.kind {
            SymbolKind::PowerLaw { .. } => Err(Error::Precondition(
                "power-law symbols evaluate densities directly".into(),
            )),
            SymbolKind::Tabulated {
                psi,
                kappa_far,
                cache,
            } => {
                if let Some(s) = cache.lock().unwrap().get(&t.to_bits()) {
                    return Ok(s.clone());
                }
                let s = Arc::new(invert_symbol(self.dim, psi, self.alpha_y, *kappa_far, t)?);
                cache.lock().unwrap().insert(t.to_bits(), s.clone());
                Ok(s)
            }
        }
    }
}

/// ψ^y(ξ) = ∫(1 - cos⟨ξ,z⟩) κ(y,z)|z|^{-d-α(y)} dz.
pub fn build_symbol(spec: &ModelSpec, y: &Point) -> Result<FrozenSymbol> {
    let a = spec.alpha(y);
    let d = spec.dim;
    if spec.z_independent() {
        return Ok(FrozenSymbol {
            y: *y,
            alpha_y: a,
            dim: d,
            kind: SymbolKind::PowerLaw {
                m: spec.multiplier(y),
                slice: single_slice(d, a),
            },
        });
    }
    let c = frac_laplacian_const(d, a);
    let k0 = spec.kappa(y, &[0.0, 0.0]);
    let kfar = spec.kappa.far(y);
    let unit = |r: f64| -> Point { [r, 0.0] };
    // v(r) = κ(y, r) - κ(y, 0), w(r) = v(r) r^{-1-α}
    let w = |r: f64| (spec.kappa(y, &unit(r)) - k0) * r.powf(-1.0 - a);
    let radial_factor = if d == 1 { 2.0 } else { 2.0 * PI };
    let i0 = {
        let head = integrate(w, &[0.0, 0.5, 1.0, 4.0, 16.0], 1e-13, 1e-11, 400);
        let tail = crate::numerics::integrate_to_inf(w, 16.0, 16.0, 1e-13, 1e-11, 400);
        head.value + tail.value
    };
    // second derivative of v at 0 for the large-ξ asymptotics
    let hh = 1e-3;
    let v2 = (spec.kappa(y, &unit(hh)) - k0) * 2.0 / (hh * hh);
    let osc = |xi: f64| -> Result<f64> {
        if xi > 200.0 {
            let s = 2.0 - a;
            let asym = if d == 1 {
                (ln_gamma(s)).exp() * (PI * s / 2.0).cos()
            } else {
                2f64.powf(1.0 - a) * (ln_gamma(s / 2.0)).exp() * recip_gamma(a / 2.0)
            };
            return Ok(0.5 * v2 * asym * xi.powf(a - 2.0));
        }
        let kern = |r: f64| {
            let c = if d == 1 { (xi * r).cos() } else { libm::j0(xi * r) };
            c * w(r)
        };
        let rmax = 400.0;
        let period = PI / xi;
        let mut pts = vec![0.0];
        let mut r = period.min(1.0);
        while r < rmax {
            pts.push(r);
            r += period.max(0.25);
        }
        pts.push(rmax);
        let res = integrate(kern, &pts, 1e-13, 1e-10, 20 * pts.len());
        if res.error > 1e-7 * (1.0 + res.value.abs()) {
            return Err(Error::Quadrature {
                estimate: res.error,
                tolerance: 1e-7,
            });
        }
        Ok(res.value)
    };
    let mut log_xi = vec![];
    let mut ratio = vec![];
    let n = 240;
    for i in 0..n {
        let l = (1e-4f64).ln() + (1e9f64).ln() * i as f64 / (n - 1) as f64;
        let xi = l.exp();
        let extra = radial_factor * (i0 - osc(xi)?);
        let psi = k0 * xi.powf(a) / c + extra;
        log_xi.push(l);
        ratio.push(psi / xi.powf(a));
    }
    let spline = Spline::natural(&log_xi, &ratio);
    let values = log_xi.iter().zip(&ratio).map(|(l, r)| r * (a * l).exp()).collect();
    let _ = kfar;
    Ok(FrozenSymbol {
        y: *y,
        alpha_y: a,
        dim: d,
        kind: SymbolKind::Tabulated {
            psi: PsiTable {
                alpha: a,
                ratio: spline,
                log_xi,
                values,
            },
            kappa_far: kfar,
            cache: Mutex::new(HashMap::new()),
        },
    })
}

fn invert_symbol(dim: usize, psi: &PsiTable, alpha: f64, kappa_far: f64, t: f64) -> Result<DensitySlice> {
    // cutoff with e^{-tψ} below 1e-16
    let target = 37.0 / t;
    let (mut lo, mut hi) = (1e-3f64, 1e9f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if psi.eval(mid) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let cutoff = hi;
    let xtab = if dim == 1 { 40.0 } else { 16.0 };
    let table = if dim == 1 {
        let dx = (2.0 * PI / cutoff).min(0.02);
        let nt = (xtab / dx).ceil() as usize + 1;
        let dx = xtab / (nt - 1) as f64;
        let n = (4 * nt).next_power_of_two().max(1 << 14);
        let l = n as f64 * dx;
        let dxi = 2.0 * PI / l;
        let leading = t * kappa_far;
        let run = |p: i32, coef: f64, e: f64| -> Vec<f64> {
            let g: Vec<f64> = (0..n)
                .map(|k| {
                    let xi = k as f64 * dxi;
                    let v = xi.powi(p) * (-t * psi.eval(xi)).exp();
                    if k == 0 {
                        0.5 * v
                    } else {
                        v
                    }
                })
                .collect();
            let f = fft_cosine(&g, n);
            (0..nt)
                .map(|j| {
                    let v = j as f64 * dx;
                    f[j].re * dxi / PI
                        - coef * l.powf(-e) * (hurwitz_zeta(e, 1.0 + v / l) + hurwitz_zeta(e, 1.0 - v / l))
                })
                .collect()
        };
        let y = run(0, leading, 1.0 + alpha);
        let y2: Vec<f64> = run(2, -leading * (1.0 + alpha) * (2.0 + alpha), 3.0 + alpha)
            .into_iter()
            .map(|v| -v)
            .collect();
        Profile {
            dv: dx,
            y,
            y2,
            series: vec![],
        }
    } else {
        let g = |xi: f64| xi * (-t * psi.eval(xi)).exp();
        hankel_table(&g, cutoff, xtab, (2.0 * PI / cutoff).min(0.02).max(0.005), vec![])
    };
    let peak = table.y[0];
    let mut clamped = 0;
    let mut y = table.y.clone();
    for (j, v) in y.iter_mut().enumerate() {
        if *v < 0.0 {
            if -*v < 1e-8 * peak {
                *v = 0.0;
                clamped += 1;
            } else {
                return Err(Error::Ringing {
                    x: j as f64 * table.dv,
                    value: *v,
                });
            }
        }
    }
    if clamped > 0 {
        log::debug!("clamped {clamped} negative density values at t = {t}");
    }
    let e = dim as f64 + alpha;
    let edge = table.vmax();
    let tail_coeff = y[y.len() - 1] * edge.powf(e);
    Ok(DensitySlice {
        t,
        table: Profile { y, ..table },
        tail_coeff,
        tail_exponent: e,
        clamped,
    })
}

/// p^y(t, x).
pub fn density(sym: &FrozenSymbol, t: f64, x: &Point) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Precondition("density needs t > 0".into()));
    }
    let r = norm(x);
    match &sym.kind {
        SymbolKind::PowerLaw { m, slice } => Ok(slice.density(*m, t, r).max(0.0)),
        SymbolKind::Tabulated { .. } => Ok(sym.density_slice(t)?.eval(r)),
    }
}

/// δ_{p^y}(t,x;z) = p^y(t,x+z) + p^y(t,x-z) - 2p^y(t,x).
pub fn second_difference(sym: &FrozenSymbol, t: f64, x: &Point, z: &Point) -> Result<f64> {
    let xp = [x[0] + z[0], x[1] + z[1]];
    let xm = [x[0] - z[0], x[1] - z[1]];
    Ok(density(sym, t, &xp)? + density(sym, t, &xm)? - 2.0 * density(sym, t, x)?)
}

/// Value and estimated error of a quadrature.
#[derive(Clone, Copy, Debug)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Radial description of a jump integrand for the symmetric quadrature.
pub struct JumpIntegral<'a> {
    pub dim: usize,
    /// Inner region radius; the substitution there assumes the kernel
    /// behaves like r^{-d-alpha_inner}.
    pub delta: f64,
    pub alpha_inner: f64,
    pub zmax: f64,
    /// Radii where the integrand has structure, with their widths.
    pub features: Vec<(f64, f64)>,
    /// D(z) = f(x+z) + f(x-z) - 2 f(x).
    pub diff: &'a dyn Fn(&Point) -> f64,
    /// Full jump kernel k(z), including |z|^{-d-α}.
    pub kernel: &'a dyn Fn(&Point) -> f64,
}

impl JumpIntegral<'_> {
    fn radial(&self, r: f64, angles: &[(Point, f64)]) -> f64 {
        let mut s = 0.0;
        for (u, w) in angles {
            let z = [r * u[0], r * u[1]];
            s += w * (self.diff)(&z) * (self.kernel)(&z);
        }
        s * r.powi(self.dim as i32 - 1)
    }

    fn angles(&self, n: usize) -> Vec<(Point, f64)> {
        if self.dim == 1 {
            // ½ ∫_R = ∫_0^∞ in one direction because D is even
            vec![([1.0, 0.0], 1.0)]
        } else {
            (0..n)
                .map(|i| {
                    let th = PI * (i as f64 + 0.5) / n as f64;
                    ([th.cos(), th.sin()], PI / n as f64)
                })
                .collect()
        }
    }

    fn panels(&self, per_decade: usize) -> Vec<f64> {
        let mut pts = vec![self.delta];
        let span = (self.zmax / self.delta).log10().max(0.0);
        let n = ((span * per_decade as f64).ceil() as usize).max(1);
        for k in 1..=n {
            pts.push(self.delta * (self.zmax / self.delta).powf(k as f64 / n as f64));
        }
        for (c, w) in &self.features {
            for m in [-4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0] {
                let r = c + m * w;
                if r > self.delta && r < self.zmax {
                    pts.push(r);
                }
            }
        }
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * b.abs().max(1e-300));
        pts
    }

    fn rule(&self, npts: usize, per_decade: usize, nang: usize) -> f64 {
        let rule = GaussRule::new(npts);
        let angles = self.angles(nang);
        let a = self.alpha_inner;
        // inner: r = δ u^{1/(2-a)}
        let p = 1.0 / (2.0 - a);
        let mut inner = 0.0;
        for (u, w) in rule.on(0.0, 1.0) {
            let r = self.delta * u.powf(p);
            let drdu = self.delta * p * u.powf(p - 1.0);
            inner += w * self.radial(r, &angles) * drdu;
        }
        let pts = self.panels(per_decade);
        let mut outer = 0.0;
        for win in pts.windows(2) {
            outer += rule.integrate(win[0], win[1], |r| self.radial(r, &angles));
        }
        let tail = crate::numerics::integrate_to_inf(
            |r| self.radial(r, &angles),
            self.zmax,
            self.zmax,
            1e-14,
            1e-9,
            200,
        );
        inner + outer + tail.value
    }

    /// ½∫ D(z) k(z) dz with an error estimate from a coarser rule.
    pub fn evaluate(&self) -> Estimate {
        let fine = self.rule(10, 8, 48);
        let coarse = self.rule(6, 5, 32);
        Estimate {
            value: fine,
            error: (fine - coarse).abs(),
        }
    }
}

/// 𝓛ʷ p^y(t,·)(x) by the symmetric second-difference quadrature.
pub fn apply_frozen_generator(
    spec: &ModelSpec,
    w: &Point,
    sym: &FrozenSymbol,
    t: f64,
    x: &Point,
) -> Result<Estimate> {
    if !(t > 0.0) {
        return Err(Error::Precondition("generator needs t > 0".into()));
    }
    let aw = spec.alpha(w);
    let d = spec.dim as f64;
    let p0 = density(sym, t, x)?;
    let diff = |z: &Point| -> f64 {
        let xp = [x[0] + z[0], x[1] + z[1]];
        let xm = [x[0] - z[0], x[1] - z[1]];
        density(sym, t, &xp).unwrap_or(f64::NAN) + density(sym, t, &xm).unwrap_or(f64::NAN) - 2.0 * p0
    };
    let kernel = |z: &Point| spec.kappa(w, z) * norm(z).powf(-d - aw);
    let scale = t.powf(1.0 / sym.alpha_y);
    let width = match sym.multiplier() {
        Some(m) => (m * t).powf(1.0 / sym.alpha_y),
        None => scale,
    };
    let q = JumpIntegral {
        dim: spec.dim,
        delta: scale.min(width) * 0.5,
        alpha_inner: aw,
        zmax: 50.0,
        features: vec![(norm(x), width)],
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
    let tol = 1e-5 * (est.value.abs() + p0 / t);
    if est.error > tol.max(1e-12) {
        return Err(Error::Quadrature {
            estimate: est.error,
            tolerance: tol,
        });
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AlphaFn, Bounds, KappaFn};

    fn cauchy_spec(k: f64) -> ModelSpec {
        ModelSpec::new(
            1,
            AlphaFn::Constant { value: 1.0 },
            KappaFn::Constant { value: k },
            Bounds {
                alpha_lo: 1.0,
                alpha_hi: 1.0,
                kappa_lo: k,
                kappa_hi: k,
                beta0: 1.0,
                c_alpha: 0.0,
                c_kappa: 0.0,
            },
        )
        .unwrap()
    }

    fn cauchy(t: f64, x: f64) -> f64 {
        t / (PI * (t * t + x * x))
    }

    #[test]
    fn cauchy_profile_matches_closed_form() {
        let p = build_profile_1d(1.0, 0.0);
        for &v in &[0.0, 0.37, 1.0, 3.3, 10.0, 23.9, 24.0, 30.0, 100.0, 1e4] {
            let exact = 1.0 / (PI * (1.0 + v * v));
            assert!((p.eval(v) - exact).abs() < 1e-10 * exact.max(1e-3), "v={v} {} {exact}", p.eval(v));
        }
        // Φ_{1,1}(v) = (1 - v²)/(π (1 + v²)²)
        let q = build_profile_1d(1.0, 1.0);
        for &v in &[0.0f64, 0.5, 2.0, 20.0, 40.0] {
            let exact = (1.0 - v * v) / (PI * (1.0 + v * v).powi(2));
            assert!((q.eval(v) - exact).abs() < 1e-10, "v={v}");
        }
    }

    #[test]
    fn gaussian_limit_profile() {
        // a = 2 is not an admissible index, but the transform must still
        // produce the heat kernel of e^{-ξ²}.
        let p = build_profile_1d(1.999999, 0.0);
        let g = |v: f64| (-v * v / 4.0).exp() / (4.0 * PI).sqrt();
        assert!((p.eval(0.0) - g(0.0)).abs() < 1e-6);
        assert!((p.eval(1.5) - g(1.5)).abs() < 1e-6);
    }

    #[test]
    fn two_dim_cauchy_profile() {
        // d = 2, a = 1: Φ(r) = (1/2π) (1 + r²)^{-3/2}
        let p = build_profile_2d(1.0, 0.0);
        for &r in &[0.0f64, 0.5, 2.0, 11.0, 15.0, 40.0] {
            let exact = (1.0 + r * r).powf(-1.5) / (2.0 * PI);
            assert!((p.eval(r) - exact).abs() < 1e-7 * exact.max(1e-4), "r={r} {} {exact}", p.eval(r));
        }
    }

    #[test]
    fn cauchy_density_examples() {
        let s = cauchy_spec(1.0 / PI);
        let sym = build_symbol(&s, &[0.0, 0.0]).unwrap();
        assert!((sym.psi(2.0) - 2.0).abs() < 1e-12);
        assert_eq!(sym.psi(0.0), 0.0);
        assert!((density(&sym, 1.0, &[0.0, 0.0]).unwrap() - 1.0 / PI).abs() < 1e-10);
        assert!((density(&sym, 1.0, &[1.0, 0.0]).unwrap() - 0.5 / PI).abs() < 1e-10);
        let s2 = cauchy_spec(2.0 / PI);
        let sym2 = build_symbol(&s2, &[0.0, 0.0]).unwrap();
        assert!((sym2.psi(1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn generator_on_cauchy() {
        let s = cauchy_spec(1.0 / PI);
        let sym = build_symbol(&s, &[0.0, 0.0]).unwrap();
        let l = apply_frozen_generator(&s, &[0.0, 0.0], &sym, 1.0, &[0.0, 0.0]).unwrap();
        assert!((l.value + 1.0 / PI).abs() < 1e-6 / PI, "{l:?}");
        // ∂_t of t/(π(t²+x²)) = (x² - t²)/(π(t²+x²)²)
        for &(t, x) in &[(0.5, 1.0), (0.1, 0.05), (0.25, 3.0)] {
            let l = apply_frozen_generator(&s, &[0.0, 0.0], &sym, t, &[x, 0.0]).unwrap();
            let exact = (x * x - t * t) / (PI * (t * t + x * x).powi(2));
            assert!((l.value - exact).abs() < 1e-6 * exact.abs().max(cauchy(t, x) / t), "t={t} x={x} {l:?} {exact}");
        }
    }

    #[test]
    fn generator_linear_in_kappa() {
        let s1 = cauchy_spec(1.0 / PI);
        let s2 = cauchy_spec(2.0 / PI);
        let sym = build_symbol(&s1, &[0.0, 0.0]).unwrap();
        let a = apply_frozen_generator(&s1, &[0.0, 0.0], &sym, 0.5, &[0.3, 0.0]).unwrap();
        let b = apply_frozen_generator(&s2, &[0.0, 0.0], &sym, 0.5, &[0.3, 0.0]).unwrap();
        assert!((b.value - 2.0 * a.value).abs() < 1e-12 * a.value.abs().max(1.0));
    }

    #[test]
    fn bank_interpolates_between_nodes() {
        let bank = StableBank::new(1, 1.0, 1.4);
        let a = 1.2345;
        let exact = build_profile_1d(a, 0.0);
        let ex_cross = build_profile_1d(a, 1.111);
        let sl = bank.slice(a);
        let cw = sl.cross_weights(1.111);
        for &v in &[0.0, 0.4, 2.0, 7.0, 23.0, 50.0] {
            assert!((sl.dens.eval(v) - exact.eval(v)).abs() < 1e-9, "v={v}");
            assert!((bank.phi0(a, v) - exact.eval(v)).abs() < 1e-9, "v={v}");
            assert!((sl.cross(&cw, v) - ex_cross.eval(v)).abs() < 1e-8, "v={v}");
        }
    }

    #[test]
    fn separable_symbol_inverts_to_a_density() {
        let spec = ModelSpec::new(
            1,
            AlphaFn::Constant { value: 1.2 },
            KappaFn::Separable {
                k0: 1.0,
                kb: 0.5,
                c: [0.0, 0.0],
                w: 1.0,
                ell: 1.0,
            },
            Bounds {
                alpha_lo: 1.2,
                alpha_hi: 1.2,
                kappa_lo: 1.0,
                kappa_hi: 1.5,
                beta0: 1.0,
                c_alpha: 0.0,
                c_kappa: 0.5,
            },
        )
        .unwrap();
        let sym = build_symbol(&spec, &[0.0, 0.0]).unwrap();
        // ψ against direct quadrature of the definition
        for &xi in &[0.3, 2.0, 17.0] {
            let f = |r: f64| 2.0 * (1.0 - (xi * r).cos()) * spec.kappa(&[0.0, 0.0], &[r, 0.0]) * r.powf(-2.2);
            let mut pts = vec![0.0];
            let mut r = 0.01;
            while r < 2000.0 {
                pts.push(r);
                r *= 1.2;
            }
            let head = integrate(f, &pts, 1e-12, 1e-12, 20000).value;
            let tail = 2.0 * 1.0 * 2000f64.powf(-1.2) / 1.2;
            let direct = head + tail;
            assert!((sym.psi(xi) - direct).abs() < 1e-4 * direct, "xi={xi} {} {direct}", sym.psi(xi));
        }
        let slice = sym.density_slice(0.5).unwrap();
        let mass = 2.0
            * integrate(|r| slice.eval(r), &[0.0, 1.0, 5.0, 40.0], 1e-12, 1e-10, 400).value
            + 2.0 * slice.tail_coeff * 40f64.powf(1.0 - slice.tail_exponent) / (slice.tail_exponent - 1.0);
        assert!((mass - 1.0).abs() < 1e-4, "{mass}");
    }
}
