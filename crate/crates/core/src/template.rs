//! Template functions with exactly `M` stationary points.
//!
//! A template is pinned by an alternating height vector `λ` at nodes
//! `0 = b₀ < b₁ < … < b_{M+1} = 1`. Both families here are linear in `λ`:
//! `g_λ(x) = Σ_k λ_k w_k(x)`, which is what the likelihood gradient uses.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};

/// Which alternating pattern the heights follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    /// `λ₀ < λ₁ > λ₂ < …`: the first stationary point is a maximum.
    Plus,
    /// `λ₀ > λ₁ < λ₂ > …`: the first stationary point is a minimum.
    Minus,
}

impl Sign {
    /// Sign of the increment `λ_k − λ_{k−1}` for `k ≥ 1`.
    pub fn step(self, k: usize) -> f64 {
        let first = match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        };
        if k % 2 == 1 {
            first
        } else {
            -first
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// Template heights `λ₀..λ_{M+1}` with strict alternation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightVector {
    lambda: Vec<f64>,
    sign: Sign,
}

impl HeightVector {
    pub fn new(lambda: Vec<f64>, sign: Sign) -> Result<Self> {
        if lambda.len() < 2 {
            return Err(Error::InvalidArgument("height vector needs at least two entries".into()));
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite template height".into()));
        }
        for k in 1..lambda.len() {
            let inc = lambda[k] - lambda[k - 1];
            if !(inc * sign.step(k) > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "heights do not alternate at index {k} for sign {sign:?}"
                )));
            }
        }
        Ok(Self { lambda, sign })
    }

    /// Number of interior stationary points.
    pub fn m(&self) -> usize {
        self.lambda.len() - 2
    }

    pub fn values(&self) -> &[f64] {
        &self.lambda
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    /// The unconstrained coordinates that reconstruct these heights.
    pub fn to_unconstrained(&self) -> UnconstrainedHeights {
        let l = self.lambda.windows(2).map(|w| (w[1] - w[0]).abs().ln()).collect();
        UnconstrainedHeights { lambda0: self.lambda[0], l, sign: self.sign }
    }
}

/// `λ₀` plus log absolute increments `l_k = ln|λ_k − λ_{k−1}|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnconstrainedHeights {
    pub lambda0: f64,
    pub l: Vec<f64>,
    pub sign: Sign,
}

impl UnconstrainedHeights {
    pub fn m(&self) -> usize {
        self.l.len().saturating_sub(1)
    }
}

/// Cumulative sum of signed increments `±exp(l_k)`.
///
/// Alternation holds by construction; an increment that underflows to zero
/// is reported as an error rather than returned as a tie.
pub fn heights_reconstruct(u: &UnconstrainedHeights) -> Result<HeightVector> {
    let mut lambda = Vec::with_capacity(u.l.len() + 1);
    lambda.push(u.lambda0);
    let mut acc = u.lambda0;
    for (k, l) in u.l.iter().enumerate() {
        acc += u.sign.step(k + 1) * l.exp();
        lambda.push(acc);
    }
    HeightVector::new(lambda, u.sign)
}

/// Unchecked reconstruction for hot loops; may contain ties after underflow.
pub(crate) fn reconstruct_into(u_lambda0: f64, l: &[f64], sign: Sign, out: &mut Vec<f64>) {
    out.clear();
    out.push(u_lambda0);
    let mut acc = u_lambda0;
    for (k, lk) in l.iter().enumerate() {
        acc += sign.step(k + 1) * lk.exp();
        out.push(acc);
    }
}

/// Options for the penalized B-spline template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BSplineOptions {
    pub degree: usize,
    /// Interior knots, strictly increasing inside `(0, 1)`.
    pub knots: Vec<f64>,
    /// Weight on the second-difference penalty.
    pub penalty: f64,
    /// Fractions `δ_ℓ` of each segment at which fill points are generated.
    pub fill: Vec<f64>,
}

impl BSplineOptions {
    pub fn with_knot_count(count: usize) -> Self {
        let knots = (1..=count).map(|i| i as f64 / (count + 1) as f64).collect();
        Self { knots, ..Self::default() }
    }
}

impl Default for BSplineOptions {
    fn default() -> Self {
        let knots = (1..=100).map(|i| i as f64 / 101.0).collect();
        let fill = (1..=19).map(|i| i as f64 * 0.05).collect();
        Self { degree: 3, knots, penalty: 1e6, fill }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TemplateFamily {
    #[default]
    Hermite,
    BSpline(BSplineOptions),
}

/// Node layout and interpolation family of a template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    nodes: Vec<f64>,
    family: TemplateFamily,
}

impl TemplateSpec {
    pub fn new(nodes: Vec<f64>, family: TemplateFamily) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidArgument("template needs at least two nodes".into()));
        }
        if nodes[0] != 0.0 || *nodes.last().unwrap() != 1.0 {
            return Err(Error::InvalidArgument("template nodes must start at 0 and end at 1".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("template nodes must be strictly increasing".into()));
        }
        if let TemplateFamily::BSpline(opts) = &family {
            if opts.degree < 2 {
                return Err(Error::InvalidArgument("B-spline template degree must be at least 2".into()));
            }
            if opts.knots.iter().any(|k| !(*k > 0.0 && *k < 1.0))
                || opts.knots.windows(2).any(|w| !(w[1] > w[0]))
            {
                return Err(Error::InvalidArgument(
                    "B-spline knots must be strictly increasing inside (0, 1)".into(),
                ));
            }
            if !(opts.penalty >= 0.0) {
                return Err(Error::InvalidArgument("B-spline penalty must be nonnegative".into()));
            }
            if opts.fill.iter().any(|d| !(0.0..=1.0).contains(d)) {
                return Err(Error::InvalidArgument("fill fractions must lie in [0, 1]".into()));
            }
        }
        Ok(Self { nodes, family })
    }

    /// Equally spaced nodes `b_k = k/(M+1)`.
    pub fn default_nodes(m: usize) -> Vec<f64> {
        (0..=m + 1).map(|k| k as f64 / (m + 1) as f64).collect()
    }

    pub fn hermite(m: usize) -> Self {
        Self { nodes: Self::default_nodes(m), family: TemplateFamily::Hermite }
    }

    pub fn bspline(m: usize, opts: BSplineOptions) -> Result<Self> {
        Self::new(Self::default_nodes(m), TemplateFamily::BSpline(opts))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Interior nodes `b₁..b_M`, the template's stationary points.
    pub fn interior_nodes(&self) -> &[f64] {
        &self.nodes[1..self.nodes.len() - 1]
    }

    pub fn m(&self) -> usize {
        self.nodes.len() - 2
    }

    pub fn family(&self) -> &TemplateFamily {
        &self.family
    }

    fn check_heights(&self, heights: &HeightVector) -> Result<()> {
        if heights.values().len() != self.nodes.len() {
            return Err(Error::InvalidArgument(format!(
                "{} heights for {} nodes",
                heights.values().len(),
                self.nodes.len()
            )));
        }
        Ok(())
    }
}

/// Hermite cubic interpolant with zero slopes at every node.
pub fn hermite_eval(spec: &TemplateSpec, heights: &HeightVector, x: f64) -> Result<f64> {
    check_unit("x", x)?;
    spec.check_heights(heights)?;
    Ok(hermite_value(&spec.nodes, heights.values(), x))
}

/// Derivative of [`hermite_eval`]; one-sided (from the right segment) at interior nodes.
pub fn hermite_deriv(spec: &TemplateSpec, heights: &HeightVector, x: f64) -> Result<f64> {
    check_unit("x", x)?;
    spec.check_heights(heights)?;
    Ok(hermite_slope(&spec.nodes, heights.values(), x))
}

fn hermite_local(nodes: &[f64], x: f64) -> (usize, f64, f64) {
    let last = nodes.len() - 2;
    let k = match nodes.partition_point(|b| *b <= x) {
        0 => 0,
        i => (i - 1).min(last),
    };
    let width = nodes[k + 1] - nodes[k];
    (k, (x - nodes[k]) / width, width)
}

fn hermite_value(nodes: &[f64], lambda: &[f64], x: f64) -> f64 {
    let (k, t, _) = hermite_local(nodes, x);
    let t2 = t * t;
    let h01 = -2.0 * t2 * t + 3.0 * t2;
    lambda[k] + h01 * (lambda[k + 1] - lambda[k])
}

fn hermite_slope(nodes: &[f64], lambda: &[f64], x: f64) -> f64 {
    let (k, t, width) = hermite_local(nodes, x);
    6.0 * (t - t * t) * (lambda[k + 1] - lambda[k]) / width
}

/// Count strict sign changes of the forward-difference derivative of `g`
/// on a uniform grid of `grid_size` points over `[0, 1]`.
///
/// Differences below `1e-12` of the largest one are treated as flat and
/// skipped, so numerically constant stretches do not register as extrema.
pub fn count_stationary<G: Fn(f64) -> f64>(g: G, grid_size: usize) -> usize {
    let n = grid_size.max(101);
    let vals: Vec<f64> = (0..n).map(|i| g(i as f64 / (n - 1) as f64)).collect();
    let diffs: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = diffs.iter().fold(0.0f64, |a, d| a.max(d.abs()));
    if scale == 0.0 {
        return 0;
    }
    let mut last = 0.0f64;
    let mut changes = 0;
    for d in diffs {
        if d.abs() <= 1e-12 * scale {
            continue;
        }
        if last != 0.0 && d.signum() != last {
            changes += 1;
        }
        last = d.signum();
    }
    changes
}

/// Full clamped knot vector for interior knots `interior` and `degree`.
fn full_knots(interior: &[f64], degree: usize) -> Vec<f64> {
    let mut k = vec![0.0; degree + 1];
    k.extend_from_slice(interior);
    k.extend(std::iter::repeat(1.0).take(degree + 1));
    k
}

/// Span index `i` with `knots[i] <= x < knots[i+1]` (the last span for `x = 1`).
fn find_span(knots: &[f64], degree: usize, x: f64) -> usize {
    let n_basis = knots.len() - degree - 1;
    if x >= knots[n_basis] {
        return n_basis - 1;
    }
    let i = knots.partition_point(|k| *k <= x);
    (i - 1).clamp(degree, n_basis - 1)
}

/// Nonzero basis values `N_{span−degree..=span}` at `x` (Cox–de Boor).
fn basis_funs(knots: &[f64], span: usize, degree: usize, x: f64) -> Vec<f64> {
    let mut n = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    n[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    n
}

/// Values and first derivatives of the nonzero B-splines at `x`.
fn basis_with_deriv(knots: &[f64], degree: usize, x: f64) -> (usize, Vec<f64>, Vec<f64>) {
    let span = find_span(knots, degree, x);
    let vals = basis_funs(knots, span, degree, x);
    let lower = basis_funs(knots, span, degree - 1, x);
    let d = degree as f64;
    let mut ders = vec![0.0; degree + 1];
    for (r, der) in ders.iter_mut().enumerate() {
        // global index j = span − degree + r
        let j = span - degree + r;
        // N_{j,d−1} is lower[r − 1], N_{j+1,d−1} is lower[r]
        let a = if r >= 1 {
            let den = knots[j + degree] - knots[j];
            if den > 0.0 { lower[r - 1] / den } else { 0.0 }
        } else {
            0.0
        };
        let b = if r < degree {
            let den = knots[j + degree + 1] - knots[j + 1];
            if den > 0.0 { lower[r] / den } else { 0.0 }
        } else {
            0.0
        };
        *der = d * (a - b);
    }
    (span - degree, vals, ders)
}

/// Equality-constrained penalized least-squares B-spline template.
///
/// Minimizes `Σ (λ_{k,ℓ} − θᵀΦ(b_{k,ℓ}))² + α‖Dθ‖²` (second differences) subject
/// to `θᵀΦ(b_k) = λ_k` at every node and `θᵀΦ'(b_k) = 0` at interior nodes,
/// by solving the KKT system directly. Returns `θ` of length `K + m + 1`.
pub fn bspline_template_fit(spec: &TemplateSpec, heights: &HeightVector) -> Result<Vec<f64>> {
    spec.check_heights(heights)?;
    let TemplateFamily::BSpline(opts) = spec.family() else {
        return Err(Error::InvalidArgument("template family is not B-spline".into()));
    };
    let system = KktSystem::build(&spec.nodes, opts)?;
    let theta = system.solve(&[heights.values().to_vec()])?;
    Ok(theta.into_iter().next().unwrap())
}

struct KktSystem {
    knots: Vec<f64>,
    degree: usize,
    n_basis: usize,
    nodes: Vec<f64>,
    fill: Vec<f64>,
    lu: nalgebra::linalg::FullPivLU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    fill_design: DMatrix<f64>,
    n_con: usize,
}

impl KktSystem {
    fn build(nodes: &[f64], opts: &BSplineOptions) -> Result<Self> {
        let degree = opts.degree;
        let knots = full_knots(&opts.knots, degree);
        let n_basis = knots.len() - degree - 1;
        let m = nodes.len() - 2;

        let row = |x: f64, deriv: bool| -> DVector<f64> {
            let (first, vals, ders) = basis_with_deriv(&knots, degree, x);
            let mut r = DVector::zeros(n_basis);
            let src = if deriv { &ders } else { &vals };
            for (i, v) in src.iter().enumerate() {
                r[first + i] = *v;
            }
            r
        };

        // fill design: one row per (segment, δ)
        let n_fill = (nodes.len() - 1) * opts.fill.len();
        let mut fill_design = DMatrix::zeros(n_fill, n_basis);
        let mut r = 0;
        for k in 0..nodes.len() - 1 {
            for delta in &opts.fill {
                let x = nodes[k] + delta * (nodes[k + 1] - nodes[k]);
                fill_design.set_row(r, &row(x, false).transpose());
                r += 1;
            }
        }

        let n_diff = n_basis.saturating_sub(2);
        let mut diff = DMatrix::zeros(n_diff, n_basis);
        for i in 0..n_diff {
            diff[(i, i)] = 1.0;
            diff[(i, i + 1)] = -2.0;
            diff[(i, i + 2)] = 1.0;
        }

        let n_con = nodes.len() + m;
        let mut con = DMatrix::zeros(n_con, n_basis);
        for (k, b) in nodes.iter().enumerate() {
            con.set_row(k, &row(*b, false).transpose());
        }
        for (k, b) in nodes[1..=m].iter().enumerate() {
            con.set_row(nodes.len() + k, &row(*b, true).transpose());
        }

        // name the deficient block before attempting the full solve
        let value_rows = con.rows(0, nodes.len()).into_owned();
        if rank(&value_rows) < nodes.len() {
            return Err(Error::IllPosed("node value constraints are linearly dependent".into()));
        }
        if rank(&con) < n_con {
            return Err(Error::IllPosed(
                "node derivative constraints are dependent on the value constraints".into(),
            ));
        }

        let q = (fill_design.transpose() * &fill_design + opts.penalty * diff.transpose() * &diff) * 2.0;
        let dim = n_basis + n_con;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (n_basis, n_basis)).copy_from(&q);
        kkt.view_mut((0, n_basis), (n_basis, n_con)).copy_from(&con.transpose());
        kkt.view_mut((n_basis, 0), (n_con, n_basis)).copy_from(&con);

        let reduced_ok = positive_on_null_space(&q, &con);
        let lu = kkt.full_piv_lu();
        if !lu.is_invertible() || !reduced_ok {
            return Err(Error::IllPosed(
                "penalized least-squares block is singular on the constraint null space; add fill points or penalty"
                    .into(),
            ));
        }
        Ok(Self {
            knots,
            degree,
            n_basis,
            nodes: nodes.to_vec(),
            fill: opts.fill.clone(),
            lu,
            fill_design,
            n_con,
        })
    }

    /// Solve for one coefficient vector per height vector.
    fn solve(&self, heights: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let m = self.nodes.len() - 2;
        let mut out = Vec::with_capacity(heights.len());
        for lambda in heights {
            let mut fill_target = DVector::zeros(self.fill_design.nrows());
            let mut r = 0;
            for k in 0..self.nodes.len() - 1 {
                for delta in &self.fill {
                    fill_target[r] = lambda[k] + delta * (lambda[k + 1] - lambda[k]);
                    r += 1;
                }
            }
            let c = self.fill_design.transpose() * fill_target * 2.0;
            let mut rhs = DVector::zeros(self.n_basis + self.n_con);
            rhs.rows_mut(0, self.n_basis).copy_from(&c);
            for k in 0..self.nodes.len() {
                rhs[self.n_basis + k] = lambda[k];
            }
            // derivative rows are homogeneous
            debug_assert_eq!(self.n_con, self.nodes.len() + m);
            let sol = self
                .lu
                .solve(&rhs)
                .ok_or_else(|| Error::IllPosed("KKT solve failed".into()))?;
            if sol.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("non-finite B-spline coefficients".into()));
            }
            out.push(sol.rows(0, self.n_basis).iter().copied().collect());
        }
        Ok(out)
    }
}

/// Is `q` positive definite on the null space of `con` (full row rank)?
fn positive_on_null_space(q: &DMatrix<f64>, con: &DMatrix<f64>) -> bool {
    let n = con.ncols();
    let k = con.nrows();
    if k >= n {
        return true;
    }
    // orthonormal basis of null(con): trailing right singular vectors
    let svd = con.transpose().svd(true, false);
    let Some(u) = svd.u else { return false };
    let full = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 });
    let basis = full - &u * u.transpose();
    let reduced = basis.transpose() * q * &basis;
    let eig = nalgebra::SymmetricEigen::new((&reduced + reduced.transpose()) * 0.5);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    let lmax = vals.first().copied().unwrap_or(0.0);
    // the projector has rank n − k; its k zero directions are not part of the null space
    lmax > 0.0 && vals[n - k - 1] > lmax * 1e-14
}

fn rank(a: &DMatrix<f64>) -> usize {
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return 0;
    }
    let tol = smax * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON * 1e3;
    svd.singular_values.iter().filter(|s| **s > tol).count()
}

/// A template family ready for evaluation at arbitrary heights.
///
/// For the B-spline family the KKT system is linear in `λ`, so one solve per
/// unit height vector yields cardinal coefficient vectors and any template is
/// their `λ`-weighted sum.
#[derive(Debug, Clone)]
pub enum TemplateBasis {
    Hermite { nodes: Vec<f64> },
    BSpline { knots: Vec<f64>, degree: usize, cardinal: Vec<Vec<f64>> },
}

impl TemplateBasis {
    pub fn new(spec: &TemplateSpec) -> Result<Self> {
        match spec.family() {
            TemplateFamily::Hermite => Ok(Self::Hermite { nodes: spec.nodes.clone() }),
            TemplateFamily::BSpline(opts) => {
                let system = KktSystem::build(&spec.nodes, opts)?;
                let unit: Vec<Vec<f64>> = (0..spec.nodes.len())
                    .map(|k| {
                        let mut e = vec![0.0; spec.nodes.len()];
                        e[k] = 1.0;
                        e
                    })
                    .collect();
                let cardinal = system.solve(&unit)?;
                Ok(Self::BSpline { knots: system.knots, degree: system.degree, cardinal })
            }
        }
    }

    /// Number of heights the basis expects.
    pub fn len(&self) -> usize {
        match self {
            Self::Hermite { nodes } => nodes.len(),
            Self::BSpline { cardinal, .. } => cardinal.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, lambda: &[f64], x: f64) -> f64 {
        match self {
            Self::Hermite { nodes } => hermite_value(nodes, lambda, x),
            Self::BSpline { .. } => {
                let (mut w, mut dw) = (vec![0.0; lambda.len()], vec![0.0; lambda.len()]);
                self.weights(x, &mut w, &mut dw);
                w.iter().zip(lambda).map(|(a, b)| a * b).sum()
            }
        }
    }

    pub fn deriv(&self, lambda: &[f64], x: f64) -> f64 {
        match self {
            Self::Hermite { nodes } => hermite_slope(nodes, lambda, x),
            Self::BSpline { .. } => {
                let (mut w, mut dw) = (vec![0.0; lambda.len()], vec![0.0; lambda.len()]);
                self.weights(x, &mut w, &mut dw);
                dw.iter().zip(lambda).map(|(a, b)| a * b).sum()
            }
        }
    }

    /// `w_k(x)` and `w_k'(x)` with `g_λ(x) = Σ_k λ_k w_k(x)`.
    pub fn weights(&self, x: f64, w: &mut [f64], dw: &mut [f64]) {
        w.iter_mut().for_each(|v| *v = 0.0);
        dw.iter_mut().for_each(|v| *v = 0.0);
        match self {
            Self::Hermite { nodes } => {
                let (k, t, width) = hermite_local(nodes, x);
                let t2 = t * t;
                let h01 = -2.0 * t2 * t + 3.0 * t2;
                let dh01 = 6.0 * (t - t2) / width;
                w[k] = 1.0 - h01;
                w[k + 1] = h01;
                dw[k] = -dh01;
                dw[k + 1] = dh01;
            }
            Self::BSpline { knots, degree, cardinal } => {
                let (first, vals, ders) = basis_with_deriv(knots, *degree, x);
                for (k, theta) in cardinal.iter().enumerate() {
                    let mut a = 0.0;
                    let mut b = 0.0;
                    for i in 0..=*degree {
                        a += theta[first + i] * vals[i];
                        b += theta[first + i] * ders[i];
                    }
                    w[k] = a;
                    dw[k] = b;
                }
            }
        }
    }
}

/// A concrete template: a family basis with fixed heights.
#[derive(Debug, Clone)]
pub struct Template {
    basis: TemplateBasis,
    heights: HeightVector,
}

impl Template {
    pub fn new(spec: &TemplateSpec, heights: HeightVector) -> Result<Self> {
        spec.check_heights(&heights)?;
        Ok(Self { basis: TemplateBasis::new(spec)?, heights })
    }

    /// Build and reject a B-spline fit that picked up extra extrema.
    pub fn new_checked(spec: &TemplateSpec, heights: HeightVector, grid_size: usize) -> Result<Self> {
        let template = Self::new(spec, heights)?;
        let found = count_stationary(|x| template.value(x), grid_size);
        let expected = template.heights.m();
        if found != expected {
            return Err(Error::ExtraStationaryPoints { expected, found });
        }
        Ok(template)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.basis.value(self.heights.values(), x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.basis.deriv(self.heights.values(), x)
    }

    pub fn heights(&self) -> &HeightVector {
        &self.heights
    }
}
