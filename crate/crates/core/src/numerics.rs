//! Quadrature rules, interpolation and a few special functions.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// A fixed Gauss–Legendre rule mapped to arbitrary panels.
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        GaussRule { x, w }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        let mut s = 0.0;
        for (xi, wi) in self.x.iter().zip(&self.w) {
            s += wi * f(c + h * xi);
        }
        s * h
    }

    /// Nodes and weights on [a, b].
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        self.x.iter().zip(&self.w).map(move |(x, w)| (c + h * x, w * h))
    }
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        rk += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            rg += WG[j / 2] * (f1 + f2);
        }
    }
    let val = rk * h;
    let err = ((rk - rg) * h).abs();
    (val, err)
}

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Adaptive Gauss–Kronrod (7/15) on [pts[0], pts[last]] with the interior
/// points used as forced breakpoints.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    pts: &[f64],
    epsabs: f64,
    epsrel: f64,
    limit: usize,
) -> QuadResult {
    let mut intervals: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut evals = 0;
    for w in pts.windows(2) {
        if w[1] > w[0] {
            let (v, e) = gk15(&mut f, w[0], w[1]);
            evals += 15;
            intervals.push((w[0], w[1], v, e));
        }
    }
    loop {
        let total: f64 = intervals.iter().map(|i| i.2).sum();
        let err: f64 = intervals.iter().map(|i| i.3).sum();
        if err <= epsabs.max(epsrel * total.abs()) || intervals.len() >= limit {
            return QuadResult {
                value: total,
                error: err,
                evaluations: evals,
            };
        }
        let (k, _) = intervals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .3.total_cmp(&b.1 .3))
            .unwrap();
        let (a, b, _, _) = intervals.swap_remove(k);
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            return QuadResult {
                value: total,
                error: err,
                evaluations: evals,
            };
        }
        let (v1, e1) = gk15(&mut f, a, m);
        let (v2, e2) = gk15(&mut f, m, b);
        evals += 30;
        intervals.push((a, m, v1, e1));
        intervals.push((m, b, v2, e2));
    }
}

/// ∫_a^∞ f by the map x = a + s/(1-s) on [0,1).
pub fn integrate_to_inf<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    scale: f64,
    epsabs: f64,
    epsrel: f64,
    limit: usize,
) -> QuadResult {
    integrate(
        |s| {
            if s >= 1.0 {
                return 0.0;
            }
            let x = a + scale * s / (1.0 - s);
            f(x) * scale / ((1.0 - s) * (1.0 - s))
        },
        &[0.0, 0.5, 0.9, 0.99, 1.0],
        epsabs,
        epsrel,
        limit,
    )
}

/// Chebyshev points of the second kind mapped to [lo, hi] with barycentric
/// weights. A degenerate interval gives a single node.
#[derive(Clone, Debug)]
pub struct ChebNodes {
    pub nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl ChebNodes {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        if hi - lo < 1e-12 || n < 2 {
            return ChebNodes {
                nodes: vec![0.5 * (lo + hi)],
                weights: vec![1.0],
            };
        }
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for j in 0..n {
            let x = (PI * j as f64 / (n - 1) as f64).cos();
            nodes.push(0.5 * (lo + hi) - 0.5 * (hi - lo) * x);
            let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n - 1 {
                w *= 0.5;
            }
            weights.push(w);
        }
        ChebNodes { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Interpolation coefficients c_j with f(x) ≈ Σ c_j f(x_j).
    pub fn coefficients(&self, x: f64) -> Vec<f64> {
        let n = self.nodes.len();
        if n == 1 {
            return vec![1.0];
        }
        let mut c = vec![0.0; n];
        for (j, xj) in self.nodes.iter().enumerate() {
            if x == *xj {
                c[j] = 1.0;
                return c;
            }
        }
        let mut s = 0.0;
        for j in 0..n {
            c[j] = self.weights[j] / (x - self.nodes[j]);
            s += c[j];
        }
        for cj in c.iter_mut() {
            *cj /= s;
        }
        c
    }
}

/// Evaluates a cubic spline on the uniform grid x_i = i·h from values and
/// second derivatives. Returns None outside the table.
#[inline]
pub fn spline_uniform(y: &[f64], y2: &[f64], h: f64, x: f64) -> Option<f64> {
    let s = x / h;
    let n = y.len();
    if !(s >= 0.0) || s > (n - 1) as f64 {
        return None;
    }
    let i = (s as usize).min(n - 2);
    let b = s - i as f64;
    let a = 1.0 - b;
    let h2 = h * h / 6.0;
    Some(a * y[i] + b * y[i + 1] + ((a * a * a - a) * y2[i] + (b * b * b - b) * y2[i + 1]) * h2)
}

/// Natural cubic spline through (x_i, y_i) on an arbitrary increasing grid.
#[derive(Clone, Debug)]
pub struct Spline {
    x: Vec<f64>,
    y: Vec<f64>,
    y2: Vec<f64>,
}

impl Spline {
    pub fn natural(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        let mut y2 = vec![0.0; n];
        if n > 2 {
            let mut u = vec![0.0; n];
            for i in 1..n - 1 {
                let sig = (x[i] - x[i - 1]) / (x[i + 1] - x[i - 1]);
                let p = sig * y2[i - 1] + 2.0;
                y2[i] = (sig - 1.0) / p;
                let d = (y[i + 1] - y[i]) / (x[i + 1] - x[i]) - (y[i] - y[i - 1]) / (x[i] - x[i - 1]);
                u[i] = (6.0 * d / (x[i + 1] - x[i - 1]) - sig * u[i - 1]) / p;
            }
            y2[n - 1] = 0.0;
            for k in (0..n - 1).rev() {
                y2[k] = y2[k] * y2[k + 1] + u[k];
            }
        }
        Spline {
            x: x.to_vec(),
            y: y.to_vec(),
            y2,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if n == 1 {
            return self.y[0];
        }
        let k = match self.x.partition_point(|v| *v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let a = (self.x[k + 1] - t) / h;
        let b = (t - self.x[k]) / h;
        a * self.y[k]
            + b * self.y[k + 1]
            + ((a * a * a - a) * self.y2[k] + (b * b * b - b) * self.y2[k + 1]) * h * h / 6.0
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }
}

/// Hurwitz zeta ζ(s, q) = Σ_{m≥0} (m+q)^{-s} for s > 1, q > 0, by
/// Euler–Maclaurin summation.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    let n = 12usize;
    let mut sum = 0.0;
    for m in 0..n {
        sum += (m as f64 + q).powf(-s);
    }
    let a = n as f64 + q;
    sum += a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s);
    // Bernoulli corrections B_{2k}/(2k)! · s(s+1)...(s+2k-2) a^{-s-2k+1}
    let b2k = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0];
    let mut fact = 1.0;
    let mut poch = s;
    let mut apow = a.powf(-s - 1.0);
    for (k, b) in b2k.iter().enumerate() {
        let kk = 2 * (k + 1);
        fact *= (kk * (kk - 1)) as f64;
        sum += b / fact * poch * apow;
        poch *= (s + kk as f64 - 1.0) * (s + kk as f64);
        apow /= a * a;
    }
    sum
}

/// 1/Γ(z) for any real z, zero at the poles.
pub fn recip_gamma(z: f64) -> f64 {
    use statrs::function::gamma::gamma;
    if z <= 0.0 && z == z.floor() {
        return 0.0;
    }
    if z < 0.5 {
        // 1/Γ(z) = Γ(1-z) sin(πz)/π
        gamma(1.0 - z) * (PI * z).sin() / PI
    } else {
        1.0 / gamma(z)
    }
}

/// Dense LU factorisation with partial pivoting of a row-major n×n matrix.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl Lu {
    pub fn new(n: usize, mut a: Vec<f64>) -> Self {
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
            }
            let d = a[k * n + k];
            for i in k + 1..n {
                let l = a[i * n + k] / d;
                a[i * n + k] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        a[i * n + j] -= l * a[k * n + j];
                    }
                }
            }
        }
        Lu { n, a, piv }
    }

    /// Solves A X = B in place for a row-major n×m right-hand side.
    pub fn solve(&self, b: &mut [f64], m: usize) {
        let n = self.n;
        let orig = b.to_vec();
        for i in 0..n {
            b[i * m..(i + 1) * m].copy_from_slice(&orig[self.piv[i] * m..(self.piv[i] + 1) * m]);
        }
        for i in 0..n {
            for k in 0..i {
                let l = self.a[i * n + k];
                if l != 0.0 {
                    for j in 0..m {
                        b[i * m + j] -= l * b[k * m + j];
                    }
                }
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.a[i * n + k];
                if u != 0.0 {
                    for j in 0..m {
                        b[i * m + j] -= u * b[k * m + j];
                    }
                }
            }
            let d = self.a[i * n + i];
            for j in 0..m {
                b[i * m + j] /= d;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let r = GaussRule::new(6);
        let v = r.integrate(0.0, 2.0, |x| x.powi(11));
        assert!((v - 2f64.powi(12) / 12.0).abs() < 1e-10);
        let s: f64 = r.w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let r = integrate(|x: f64| x.powf(-0.5), &[0.0, 1.0], 1e-10, 1e-10, 200);
        assert!((r.value - 2.0).abs() < 1e-8, "{r:?}");
        let r = integrate_to_inf(|x: f64| 1.0 / (1.0 + x * x), 0.0, 1.0, 1e-12, 1e-12, 200);
        assert!((r.value - PI / 2.0).abs() < 1e-10);
    }

    #[test]
    fn zeta_values() {
        assert!((hurwitz_zeta(2.0, 1.0) - PI * PI / 6.0).abs() < 1e-12);
        assert!((hurwitz_zeta(3.0, 1.0) - 1.202056903159594).abs() < 1e-12);
        let direct: f64 = (0..200000).map(|m| (m as f64 + 2.5).powf(-2.7)).sum::<f64>()
            + (200000.0f64 + 2.5).powf(-1.7) / 1.7;
        assert!((hurwitz_zeta(2.7, 2.5) - direct).abs() < 1e-9);
    }

    #[test]
    fn recip_gamma_reflection() {
        assert!((recip_gamma(-0.5) * statrs::function::gamma::gamma(-0.5) - 1.0).abs() < 1e-12);
        assert_eq!(recip_gamma(-2.0), 0.0);
        assert!((recip_gamma(3.0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn chebyshev_interpolates_smooth() {
        let c = ChebNodes::new(1.0, 1.4, 10);
        let f = |a: f64| (a * 3.0).sin() * a.exp();
        let x = 1.2345;
        let v: f64 = c.coefficients(x).iter().zip(&c.nodes).map(|(w, n)| w * f(*n)).sum();
        assert!((v - f(x)).abs() < 1e-10);
    }

    #[test]
    fn natural_spline_and_lu() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.1).powf(1.3)).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let s = Spline::natural(&x, &y);
        assert!((s.eval(2.0) - 2f64.sin()).abs() < 1e-4);
        let a = vec![4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0];
        let lu = Lu::new(3, a.clone());
        let mut b = vec![1.0, 2.0, 3.0];
        lu.solve(&mut b, 1);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * b[j]).sum();
            assert!((r - (i + 1) as f64).abs() < 1e-12);
        }
    }
}
