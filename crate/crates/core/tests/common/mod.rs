//! Independent numerical oracles shared by the integration tests.
//!
//! Nothing here calls into the library's own numerics, so agreement between
//! the two is meaningful.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Adaptive Gauss–Kronrod (7/15) quadrature on `[a, b]`.
pub fn quad<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (val, err) = gk15(f, a, b);
    quad_rec(f, a, b, val, err, tol, 0)
}

fn quad_rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, val: f64, err: f64, tol: f64, depth: u32) -> f64 {
    if err <= tol || depth > 40 {
        return val;
    }
    let m = 0.5 * (a + b);
    let (lv, le) = gk15(f, a, m);
    let (rv, re) = gk15(f, m, b);
    quad_rec(f, a, m, lv, le, 0.5 * tol, depth + 1) + quad_rec(f, m, b, rv, re, 0.5 * tol, depth + 1)
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

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Central difference `(f(x+h) − f(x−h)) / 2h`.
pub fn central_diff<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Central-difference gradient with per-coordinate step `h·(1+|z_i|)`.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, z: &[f64], h: f64) -> Vec<f64> {
    let mut zz = z.to_vec();
    (0..z.len())
        .map(|i| {
            let step = h * (1.0 + z[i].abs());
            zz[i] = z[i] + step;
            let up = f(&zz);
            zz[i] = z[i] - step;
            let dn = f(&zz);
            zz[i] = z[i];
            (up - dn) / (2.0 * step)
        })
        .collect()
}

/// Max over components of `|a − b| / max(|b|, floor)`.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(floor)).fold(0.0, f64::max)
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in it {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Double-double accumulation of `Σ a_i b_i` (error-free products and sums).
pub fn dot_dd(a: &[f64], b: &[f64]) -> f64 {
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let p = x * y;
        let pe = x.mul_add(*y, -p);
        let s = hi + p;
        let bb = s - hi;
        let se = (hi - (s - bb)) + (p - bb);
        hi = s;
        lo += se + pe;
    }
    hi + lo
}

/// Plain bisection for a sign change on `[lo, hi]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "no sign change on [{lo}, {hi}]");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Every sign change of `f` on a uniform grid of `[0, 1]`, refined by bisection.
pub fn all_roots<F: Fn(f64) -> f64>(f: F, grid: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    let mut prev = f(0.0);
    for i in 1..=grid {
        let x = i as f64 / grid as f64;
        let cur = f(x);
        if prev * cur < 0.0 {
            roots.push(bisect(&f, (i - 1) as f64 / grid as f64, x));
        }
        prev = cur;
    }
    roots
}

/// Sign changes of the centered-difference derivative on an `n`-point grid.
pub fn derivative_sign_changes<F: Fn(f64) -> f64>(f: F, n: usize) -> usize {
    let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let d: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
    let mut count = 0;
    let mut last = 0.0f64;
    for v in d {
        if v == 0.0 {
            continue;
        }
        if last != 0.0 && (v > 0.0) != (last > 0.0) {
            count += 1;
        }
        last = v;
    }
    count
}

/// Random coefficient vector of dimension `p` with norm drawn uniformly in `[lo, hi]`.
pub fn random_beta<R: Rng>(rng: &mut R, p: usize, lo: f64, hi: f64) -> Vec<f64> {
    let dir: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r = rng.random_range(lo..=hi);
    dir.iter().map(|v| v * r / norm).collect()
}

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `v(t) = Σ β_j √2 cos(jπt)` by direct summation.
pub fn v_direct(beta: &[f64], t: f64) -> f64 {
    beta.iter()
        .enumerate()
        .map(|(j, b)| b * 2f64.sqrt() * ((j + 1) as f64 * std::f64::consts::PI * t).cos())
        .sum()
}

/// `γ'(t) = (cos r + sin r / r · v(t))²` straight from the definition.
pub fn gamma_deriv_direct(beta: &[f64], t: f64) -> f64 {
    let r = beta.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        return 1.0;
    }
    let q = r.cos() + r.sin() / r * v_direct(beta, t);
    q * q
}

/// Hermite cubic through `(b_k, λ_k)` with zero slopes, written out per segment.
pub fn hermite_direct(nodes: &[f64], lambda: &[f64], x: f64) -> f64 {
    let k = nodes.windows(2).position(|w| x <= w[1]).unwrap_or(nodes.len() - 2);
    let t = (x - nodes[k]) / (nodes[k + 1] - nodes[k]);
    let h00 = 2.0 * t.powi(3) - 3.0 * t * t + 1.0;
    let h01 = -2.0 * t.powi(3) + 3.0 * t * t;
    h00 * lambda[k] + h01 * lambda[k + 1]
}
