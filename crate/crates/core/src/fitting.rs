//! Bounded nonlinear least squares and the fit pipelines built on it:
//! free-space spectra and the σ_SD sweep, cavity transmission, envelope and
//! decay fits for g, the g-curve crossing, Purcell arithmetic, saturation and
//! power-law fits.
//!
//! The objective is always the unweighted sum of squared residuals.
//! Amplitudes and backgrounds enter linearly and are eliminated by variable
//! projection, so the iterative search only sees the nonlinear parameters.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    bin_stored_components, cavity_decay_basis, decay_model_freespace, DecayComponent, FreeSpaceDecay, IrfKernel,
};
use crate::envelope::{envelope_lines, EnvelopeOptions};
use crate::error::{check_finite, check_positive, Error, Result};
use crate::lineshape::{SampledCurve, VoigtProfile};
use crate::quantities::{energy_to_rate, rate_to_energy, CavityParams, EmitterParams};

/// One nonlinear parameter: start value, box and a typical scale that sets
/// finite-difference steps and the initial simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub init: f64,
    pub lower: f64,
    pub upper: f64,
    pub scale: f64,
}

impl ParamSpec {
    pub fn new(name: &str, init: f64, lower: f64, upper: f64) -> Self {
        let scale = if init != 0.0 {
            init.abs()
        } else if (upper - lower).is_finite() {
            0.01 * (upper - lower)
        } else {
            1.0
        };
        Self {
            name: name.to_string(),
            init,
            lower,
            upper,
            scale,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }
}

/// A coefficient entering the model linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTerm {
    pub name: String,
    pub nonnegative: bool,
}

impl LinearTerm {
    pub fn nonnegative(name: &str) -> Self {
        Self {
            name: name.to_string(),
            nonnegative: true,
        }
    }

    pub fn free(name: &str) -> Self {
        Self {
            name: name.to_string(),
            nonnegative: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizerOptions {
    pub max_eval: usize,
    /// Largest allowed cosine between the residual vector and any free
    /// Jacobian column at a converged point.
    pub gtol: f64,
    pub ftol: f64,
    pub xtol: f64,
}

impl Default for MinimizerOptions {
    fn default() -> Self {
        Self {
            max_eval: 3000,
            gtol: 1e-6,
            ftol: 1e-13,
            xtol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    /// Standard error from the curvature at the optimum scaled by the
    /// residual variance. Infinite when the parameter is not identifiable.
    pub uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<FitParam>,
    pub ssr: f64,
    pub n_eval: usize,
    /// Set only when the projected-gradient criterion holds at the result.
    pub converged: bool,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.value)
    }

    pub fn uncertainty(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.uncertainty)
    }

    fn get(&self, name: &str) -> f64 {
        self.value(name).expect("parameter produced by this module")
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn check_specs(specs: &[ParamSpec]) -> Result<()> {
    for s in specs {
        check_finite("init", s.init)?;
        check_positive("scale", s.scale)?;
        if !(s.lower <= s.init && s.init <= s.upper) {
            return Err(Error::Precondition(format!(
                "initial value {} of {} outside [{}, {}]",
                s.init, s.name, s.lower, s.upper
            )));
        }
    }
    Ok(())
}

/// Residual evaluator with an evaluation counter. Failed or non-finite
/// evaluations away from the start are treated as infinitely bad.
struct Objective<'a> {
    f: &'a (dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a),
    n_eval: usize,
    n_res: usize,
    /// Residual norm treated as an exact fit (roundoff level of the data).
    floor: f64,
}

impl Objective<'_> {
    fn eval(&mut self, x: &[f64]) -> Option<Vec<f64>> {
        self.n_eval += 1;
        match (self.f)(x) {
            Ok(r) if r.len() == self.n_res && r.iter().all(|v| v.is_finite()) => Some(r),
            _ => None,
        }
    }
}

struct Bounds<'a> {
    lower: Vec<f64>,
    upper: Vec<f64>,
    scale: Vec<f64>,
    _specs: &'a [ParamSpec],
}

impl<'a> Bounds<'a> {
    fn new(specs: &'a [ParamSpec]) -> Self {
        Self {
            lower: specs.iter().map(|s| s.lower).collect(),
            upper: specs.iter().map(|s| s.upper).collect(),
            scale: specs.iter().map(|s| s.scale).collect(),
            _specs: specs,
        }
    }

    fn clamp(&self, x: &mut [f64]) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
    }
}

/// Forward-difference Jacobian of the residuals, stepping inward at an upper bound.
fn jacobian(obj: &mut Objective, b: &Bounds, x: &[f64], r: &[f64]) -> Option<DMatrix<f64>> {
    let (n, p) = (r.len(), x.len());
    let mut jac = DMatrix::zeros(n, p);
    for j in 0..p {
        let mut h = 1e-7 * b.scale[j];
        if x[j] + h > b.upper[j] {
            h = -h;
        }
        let mut xh = x.to_vec();
        xh[j] += h;
        let h = xh[j] - x[j];
        let rh = obj.eval(&xh)?;
        for i in 0..n {
            jac[(i, j)] = (rh[i] - r[i]) / h;
        }
    }
    Some(jac)
}

/// Parameters free to move: those not pinned at a bound by the gradient.
fn free_set(b: &Bounds, x: &[f64], grad: &DVector<f64>) -> Vec<usize> {
    (0..x.len())
        .filter(|&j| !((x[j] <= b.lower[j] && grad[j] > 0.0) || (x[j] >= b.upper[j] && grad[j] < 0.0)))
        .collect()
}

/// Worst cosine between the residual vector and a free Jacobian column.
fn gradient_cosine(b: &Bounds, x: &[f64], jac: &DMatrix<f64>, r: &[f64], floor: f64) -> f64 {
    let rv = DVector::from_column_slice(r);
    let rn = rv.norm();
    if rn <= floor {
        return 0.0;
    }
    let grad = jac.transpose() * &rv;
    free_set(b, x, &grad)
        .into_iter()
        .map(|j| {
            let cn = jac.column(j).norm();
            if cn == 0.0 {
                0.0
            } else {
                grad[j].abs() / (cn * rn)
            }
        })
        .fold(0.0, f64::max)
}

struct Point {
    x: Vec<f64>,
    r: Vec<f64>,
    f: f64,
}

/// Projected Levenberg–Marquardt with Marquardt diagonal scaling. Only steps
/// that lower the SSR are accepted.
fn levenberg_marquardt(obj: &mut Objective, b: &Bounds, start: Point, opts: &MinimizerOptions) -> Point {
    let p = start.x.len();
    let mut cur = start;
    let mut lambda = -1.0;
    let mut nu = 2.0;
    while obj.n_eval + p < opts.max_eval {
        let Some(jac) = jacobian(obj, b, &cur.x, &cur.r) else {
            break;
        };
        if gradient_cosine(b, &cur.x, &jac, &cur.r, obj.floor) <= opts.gtol {
            break;
        }
        let rv = DVector::from_column_slice(&cur.r);
        let grad = jac.transpose() * &rv;
        let a = jac.transpose() * &jac;
        let free = free_set(b, &cur.x, &grad);
        if free.is_empty() {
            break;
        }
        let diag_max = free.iter().map(|&j| a[(j, j)]).fold(0.0, f64::max);
        if diag_max == 0.0 {
            break;
        }
        if lambda < 0.0 {
            lambda = 1e-3;
        }
        let mut accepted = false;
        while obj.n_eval < opts.max_eval {
            let k = free.len();
            let mut m = DMatrix::zeros(k, k);
            let mut rhs = DVector::zeros(k);
            for (ii, &i) in free.iter().enumerate() {
                rhs[ii] = -grad[i];
                for (jj, &j) in free.iter().enumerate() {
                    m[(ii, jj)] = a[(i, j)];
                }
                let d = a[(i, i)].max(1e-12 * diag_max);
                m[(ii, ii)] += lambda * d;
            }
            let Some(step) = m.cholesky().map(|c| c.solve(&rhs)) else {
                lambda *= nu;
                nu *= 2.0;
                if lambda > 1e20 {
                    break;
                }
                continue;
            };
            let mut x_new = cur.x.clone();
            for (ii, &i) in free.iter().enumerate() {
                x_new[i] += step[ii];
            }
            b.clamp(&mut x_new);
            let dx: Vec<f64> = (0..p).map(|j| x_new[j] - cur.x[j]).collect();
            let small_step = (0..p).all(|j| dx[j].abs() <= opts.xtol * (cur.x[j].abs() + b.scale[j]));
            if dx.iter().all(|d| *d == 0.0) {
                break;
            }
            let trial = obj.eval(&x_new);
            let f_new = trial.as_deref().map(sum_sq).unwrap_or(f64::INFINITY);
            if f_new < cur.f {
                let pred_r = &rv + &jac * DVector::from_column_slice(&dx);
                let predicted = cur.f - pred_r.norm_squared();
                let rho = if predicted > 0.0 { (cur.f - f_new) / predicted } else { 0.0 };
                lambda *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
                lambda = lambda.max(1e-15);
                nu = 2.0;
                let rel_drop = (cur.f - f_new) / cur.f;
                cur = Point {
                    x: x_new,
                    r: trial.expect("finite trial"),
                    f: f_new,
                };
                accepted = true;
                if rel_drop <= opts.ftol || small_step {
                    return cur;
                }
                break;
            }
            if small_step {
                return cur;
            }
            lambda *= nu;
            nu *= 2.0;
            if lambda > 1e20 {
                break;
            }
        }
        if !accepted {
            break;
        }
    }
    cur
}

/// Nelder–Mead on the box (vertices are clamped). Used when the
/// Gauss–Newton search stalls away from a stationary point.
fn nelder_mead(obj: &mut Objective, b: &Bounds, start: Point, budget_end: usize) -> Point {
    let p = start.x.len();
    let f_of = |obj: &mut Objective, x: &[f64]| obj.eval(x).map(|r| (sum_sq(&r), r));
    let mut simplex: Vec<Point> = vec![start];
    for j in 0..p {
        let mut x = simplex[0].x.clone();
        let mut step = 0.05 * b.scale[j];
        if x[j] + step > b.upper[j] {
            step = -step;
        }
        x[j] += step;
        b.clamp(&mut x);
        let (f, r) = f_of(obj, &x).unwrap_or((f64::INFINITY, Vec::new()));
        simplex.push(Point { x, r, f });
    }
    let make = |obj: &mut Objective, x: Vec<f64>| {
        let mut x = x;
        b.clamp(&mut x);
        let (f, r) = f_of(obj, &x).unwrap_or((f64::INFINITY, Vec::new()));
        Point { x, r, f }
    };
    while obj.n_eval + p + 2 <= budget_end {
        simplex.sort_by(|a, b| a.f.total_cmp(&b.f));
        let (best, worst) = (simplex[0].f, simplex[p].f);
        if (worst - best).abs() <= 1e-14 * best.abs() + f64::MIN_POSITIVE {
            break;
        }
        let centroid: Vec<f64> = (0..p)
            .map(|j| simplex[..p].iter().map(|v| v.x[j]).sum::<f64>() / p as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> { (0..p).map(|j| centroid[j] + t * (simplex[p].x[j] - centroid[j])).collect() };
        let refl = make(obj, along(-1.0));
        if refl.f < simplex[0].f {
            let exp = make(obj, along(-2.0));
            simplex[p] = if exp.f < refl.f { exp } else { refl };
        } else if refl.f < simplex[p - 1].f {
            simplex[p] = refl;
        } else {
            let t = if refl.f < simplex[p].f { -0.5 } else { 0.5 };
            let con = make(obj, along(t));
            if con.f < simplex[p].f.min(refl.f) {
                simplex[p] = con;
            } else {
                let x0 = simplex[0].x.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = (0..p).map(|j| x0[j] + 0.5 * (v.x[j] - x0[j])).collect();
                    *v = make(obj, x);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.f.total_cmp(&b.f));
    simplex.swap_remove(0)
}

struct Minimum {
    x: Vec<f64>,
    f: f64,
    jac: Option<DMatrix<f64>>,
    converged: bool,
    n_eval: usize,
}

/// Runs LM, falls back to Nelder–Mead plus a second LM pass if the gradient
/// test fails, and returns the best point seen with its Jacobian.
fn minimize_residuals(
    f: &(dyn Fn(&[f64]) -> Result<Vec<f64>> + '_),
    data: &[f64],
    specs: &[ParamSpec],
    opts: &MinimizerOptions,
) -> Result<Minimum> {
    check_specs(specs)?;
    let x0: Vec<f64> = specs.iter().map(|s| s.init).collect();
    let r0 = f(&x0)?;
    if r0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("model is not finite at the initial parameters".into()));
    }
    let mut obj = Objective {
        f,
        n_eval: 1,
        n_res: r0.len(),
        floor: 1e-12 * sum_sq(data).sqrt(),
    };
    let b = Bounds::new(specs);
    let f0 = sum_sq(&r0);
    if specs.is_empty() {
        return Ok(Minimum {
            x: x0,
            f: f0,
            jac: Some(DMatrix::zeros(obj.n_res, 0)),
            converged: true,
            n_eval: 1,
        });
    }
    let mut best = levenberg_marquardt(&mut obj, &b, Point { x: x0, r: r0, f: f0 }, opts);
    let mut jac = jacobian(&mut obj, &b, &best.x, &best.r);
    let mut cosine = jac.as_ref().map_or(f64::INFINITY, |j| gradient_cosine(&b, &best.x, j, &best.r, obj.floor));
    if cosine > opts.gtol && obj.n_eval + 4 * (specs.len() + 1) < opts.max_eval {
        let nm_end = obj.n_eval + (opts.max_eval - obj.n_eval) / 2;
        let nm = nelder_mead(&mut obj, &b, Point { x: best.x.clone(), r: best.r.clone(), f: best.f }, nm_end);
        if nm.f < best.f {
            let polished = levenberg_marquardt(&mut obj, &b, nm, opts);
            if polished.f < best.f {
                best = polished;
                jac = jacobian(&mut obj, &b, &best.x, &best.r);
                cosine = jac.as_ref().map_or(f64::INFINITY, |j| gradient_cosine(&b, &best.x, j, &best.r, obj.floor));
            }
        }
    }
    Ok(Minimum {
        converged: cosine <= opts.gtol,
        x: best.x,
        f: best.f,
        jac,
        n_eval: obj.n_eval,
    })
}

/// `sqrt(diag(s² (JᵀJ)⁺))` with `s² = SSR/(n − p)`.
fn standard_errors(jac: &DMatrix<f64>, ssr: f64) -> Vec<f64> {
    let (n, p) = jac.shape();
    if p == 0 {
        return Vec::new();
    }
    if n <= p {
        return vec![f64::INFINITY; p];
    }
    let s2 = ssr / (n - p) as f64;
    // Column scaling keeps the normal matrix well conditioned.
    let norms: Vec<f64> = (0..p).map(|j| jac.column(j).norm()).collect();
    let mut scaled = jac.clone();
    for (j, n) in norms.iter().enumerate() {
        if *n > 0.0 {
            scaled.column_mut(j).scale_mut(1.0 / n);
        }
    }
    let a = scaled.transpose() * &scaled;
    match a.clone().cholesky() {
        Some(ch) if norms.iter().all(|n| *n > 0.0) => {
            let inv = ch.inverse();
            (0..p)
                .map(|j| (s2 * inv[(j, j)]).max(0.0).sqrt() / norms[j])
                .collect()
        }
        _ => vec![f64::INFINITY; p],
    }
}

/// Minimizes `Σ (model(x) − data)²` over the box given by `specs`.
///
/// Deterministic for identical inputs. The returned SSR never exceeds the
/// SSR at the initial parameters. Running out of evaluations yields a result
/// with `converged = false` rather than an error.
pub fn minimize_ssr(
    model: impl Fn(&[f64]) -> Result<Vec<f64>>,
    data: &[f64],
    specs: &[ParamSpec],
    opts: &MinimizerOptions,
) -> Result<FitResult> {
    let residuals = |x: &[f64]| -> Result<Vec<f64>> {
        let m = model(x)?;
        if m.len() != data.len() {
            return Err(Error::Precondition(format!(
                "model produced {} values for {} data points",
                m.len(),
                data.len()
            )));
        }
        Ok(m.iter().zip(data).map(|(m, d)| m - d).collect())
    };
    let min = minimize_residuals(&residuals, data, specs, opts)?;
    let errs = min
        .jac
        .as_ref()
        .map_or_else(|| vec![f64::INFINITY; specs.len()], |j| standard_errors(j, min.f));
    Ok(FitResult {
        params: specs
            .iter()
            .zip(&min.x)
            .zip(errs)
            .map(|((s, &value), uncertainty)| FitParam {
                name: s.name.clone(),
                value,
                uncertainty,
            })
            .collect(),
        ssr: min.f,
        n_eval: min.n_eval,
        converged: min.converged,
    })
}

/// Least-squares coefficients for `columns · c ≈ y` with `c_j ≥ 0` where
/// `nonneg[j]`. Enumerates supports; the optimum is the best feasible
/// unconstrained solution over them.
pub fn constrained_linear_lsq(columns: &[Vec<f64>], y: &[f64], nonneg: &[bool]) -> Vec<f64> {
    let k = columns.len();
    let n = y.len();
    let norms: Vec<f64> = columns.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let optional: Vec<usize> = (0..k).filter(|&j| nonneg[j] && norms[j] > 0.0).collect();
    let fixed: Vec<usize> = (0..k).filter(|&j| !nonneg[j] && norms[j] > 0.0).collect();
    let yv = DVector::from_column_slice(y);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0..(1usize << optional.len()) {
        let support: Vec<usize> = fixed
            .iter()
            .copied()
            .chain(optional.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &j)| j))
            .collect();
        let mut coef = vec![0.0; k];
        if !support.is_empty() {
            let a = DMatrix::from_fn(n, support.len(), |i, s| columns[support[s]][i] / norms[support[s]]);
            let svd = a.svd(true, true);
            let Ok(sol) = svd.solve(&yv, 1e-12) else { continue };
            for (s, &j) in support.iter().enumerate() {
                coef[j] = sol[s] / norms[j];
            }
            if support.iter().any(|&j| nonneg[j] && coef[j] < 0.0) {
                continue;
            }
        }
        let ssr: f64 = (0..n)
            .map(|i| {
                let m: f64 = support.iter().map(|&j| coef[j] * columns[j][i]).sum();
                (m - y[i]).powi(2)
            })
            .sum();
        if best.as_ref().is_none_or(|(b, _)| ssr < *b) {
            best = Some((ssr, coef));
        }
    }
    best.map(|(_, c)| c).unwrap_or_else(|| vec![0.0; k])
}

fn combine(columns: &[Vec<f64>], coef: &[f64]) -> Vec<f64> {
    let n = columns.first().map_or(0, |c| c.len());
    (0..n).map(|i| columns.iter().zip(coef).map(|(c, a)| a * c[i]).sum()).collect()
}

/// Fits `Σ_j c_j · basis_j(x)` where `x` are the nonlinear parameters and
/// `c` the linear terms, by variable projection. Reported parameters are the
/// nonlinear ones followed by the linear ones; uncertainties come from the
/// full Jacobian at the optimum.
pub fn fit_separable(
    basis: impl Fn(&[f64]) -> Result<Vec<Vec<f64>>>,
    data: &[f64],
    nonlinear: &[ParamSpec],
    linear: &[LinearTerm],
    opts: &MinimizerOptions,
) -> Result<FitResult> {
    let nonneg: Vec<bool> = linear.iter().map(|t| t.nonnegative).collect();
    let columns_at = |x: &[f64]| -> Result<Vec<Vec<f64>>> {
        let cols = basis(x)?;
        if cols.len() != linear.len() || cols.iter().any(|c| c.len() != data.len()) {
            return Err(Error::Precondition("basis shape does not match the data and linear terms".into()));
        }
        Ok(cols)
    };
    let residuals = |x: &[f64]| -> Result<Vec<f64>> {
        let cols = columns_at(x)?;
        let coef = constrained_linear_lsq(&cols, data, &nonneg);
        Ok(combine(&cols, &coef).iter().zip(data).map(|(m, d)| m - d).collect())
    };
    let min = minimize_residuals(&residuals, data, nonlinear, opts)?;
    let cols = columns_at(&min.x)?;
    let coef = constrained_linear_lsq(&cols, data, &nonneg);
    let base = combine(&cols, &coef);
    let ssr: f64 = base.iter().zip(data).map(|(m, d)| (m - d).powi(2)).sum();

    // Full Jacobian: nonlinear columns at fixed coefficients, then the basis.
    let p = nonlinear.len();
    let n = data.len();
    let mut jac = DMatrix::zeros(n, p + linear.len());
    let mut n_eval = min.n_eval + 1;
    for (j, s) in nonlinear.iter().enumerate() {
        let mut h = 1e-7 * s.scale;
        if min.x[j] + h > s.upper {
            h = -h;
        }
        let mut xh = min.x.clone();
        xh[j] += h;
        n_eval += 1;
        let shifted = combine(&columns_at(&xh)?, &coef);
        for i in 0..n {
            jac[(i, j)] = (shifted[i] - base[i]) / h;
        }
    }
    for (k, c) in cols.iter().enumerate() {
        for i in 0..n {
            jac[(i, p + k)] = c[i];
        }
    }
    let errs = standard_errors(&jac, ssr);
    let mut params: Vec<FitParam> = nonlinear
        .iter()
        .zip(&min.x)
        .map(|(s, &value)| FitParam {
            name: s.name.clone(),
            value,
            uncertainty: 0.0,
        })
        .collect();
    params.extend(linear.iter().zip(&coef).map(|(t, &value)| FitParam {
        name: t.name.clone(),
        value,
        uncertainty: 0.0,
    }));
    for (prm, e) in params.iter_mut().zip(errs) {
        prm.uncertainty = e;
    }
    Ok(FitResult {
        params,
        ssr,
        n_eval,
        converged: min.converged,
    })
}

// ---------------------------------------------------------------------------
// Free-space spectrum

/// Starting point for the doublet fit. Energies and FWHM linewidths in µeV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubletInit {
    pub gamma1_uev: f64,
    pub gamma2_uev: f64,
    pub omega0_uev: f64,
    pub delta_uev: f64,
}

impl DoubletInit {
    /// Centroid of the background-subtracted spectrum, with both lines given
    /// the width left over after removing the splitting from the overall FWHM.
    pub fn guess(data: &SampledCurve, delta_uev: f64) -> Self {
        let floor = data.values.iter().copied().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = data.values.iter().map(|v| v - floor).collect();
        let total: f64 = w.iter().sum();
        let omega0 = if total > 0.0 {
            (0..data.len()).map(|i| w[i] * data.axis(i)).sum::<f64>() / total
        } else {
            0.5 * (data.start + data.end())
        };
        let half = 0.5 * w.iter().copied().fold(0.0, f64::max);
        let above: Vec<f64> = (0..data.len()).filter(|&i| w[i] >= half).map(|i| data.axis(i)).collect();
        let fwhm = match (above.first(), above.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        };
        let width = (fwhm - delta_uev).max(10.0 * data.step);
        Self {
            gamma1_uev: width,
            gamma2_uev: width,
            omega0_uev: omega0,
            delta_uev,
        }
    }
}

const DOUBLET_LINEAR: [&str; 3] = ["a1", "a2", "background"];

/// Voigt doublet basis `[V₁, V₂, 1]` with line 1 at ω₀ − Δ/2.
fn doublet_basis(data: &SampledCurve, sigma_sd: f64, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let (g1, g2, w0, d) = (x[0], x[1], x[2], x[3]);
    let v1 = VoigtProfile::new(g1, sigma_sd)?;
    let v2 = VoigtProfile::new(g2, sigma_sd)?;
    let axis = data.axis_values();
    Ok(vec![
        axis.iter().map(|w| v1.eval(w - (w0 - 0.5 * d))).collect(),
        axis.iter().map(|w| v2.eval(w - (w0 + 0.5 * d))).collect(),
        vec![1.0; axis.len()],
    ])
}

/// Fits `A₁·V(Γ₁, σ_SD) + A₂·V(Γ₂, σ_SD) + B` with σ_SD held fixed.
pub fn fit_freespace_spectrum(data: &SampledCurve, sigma_sd: f64, init: &DoubletInit) -> Result<FitResult> {
    crate::error::check_nonnegative("sigma_sd", sigma_sd)?;
    let span = data.end() - data.start;
    let min_width = 0.05 * data.step;
    let g_hi = 10.0 * span;
    let specs = [
        ParamSpec::new("gamma1_uev", init.gamma1_uev.clamp(min_width, g_hi), min_width, g_hi),
        ParamSpec::new("gamma2_uev", init.gamma2_uev.clamp(min_width, g_hi), min_width, g_hi),
        ParamSpec::new("omega0_uev", init.omega0_uev, data.start, data.end())
            .with_scale(init.gamma1_uev.max(data.step)),
        ParamSpec::new("delta_uev", init.delta_uev.clamp(0.0, span), 0.0, span)
            .with_scale(init.delta_uev.max(init.gamma1_uev).max(data.step)),
    ];
    let linear = [
        LinearTerm::nonnegative(DOUBLET_LINEAR[0]),
        LinearTerm::nonnegative(DOUBLET_LINEAR[1]),
        LinearTerm::free(DOUBLET_LINEAR[2]),
    ];
    fit_separable(
        |x| doublet_basis(data, sigma_sd, x),
        &data.values,
        &specs,
        &linear,
        &MinimizerOptions::default(),
    )
}

/// Model curve of a doublet fit, for plotting against the data.
pub fn freespace_fit_curve(data: &SampledCurve, sigma_sd: f64, fit: &FitResult) -> Result<SampledCurve> {
    let x = ["gamma1_uev", "gamma2_uev", "omega0_uev", "delta_uev"].map(|n| fit.get(n));
    let coef = DOUBLET_LINEAR.map(|n| fit.get(n));
    let cols = doublet_basis(data, sigma_sd, &x)?;
    SampledCurve::new(data.start, data.step, combine(&cols, &coef))
}

/// Instantaneous linewidths fitted at each assumed σ_SD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinewidthTable {
    pub sigma_sd_grid: Vec<f64>,
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub ssr: Vec<f64>,
    pub converged: Vec<bool>,
    /// σ_SD of the lowest SSR.
    pub best_sigma_sd: f64,
    /// Γᵢ nonincreasing in σ_SD within 2% slack.
    pub monotone: bool,
}

impl LinewidthTable {
    pub fn new(sigma_sd_grid: Vec<f64>, gamma1: Vec<f64>, gamma2: Vec<f64>, ssr: Vec<f64>, converged: Vec<bool>) -> Result<Self> {
        let n = sigma_sd_grid.len();
        if n == 0 || gamma1.len() != n || gamma2.len() != n || ssr.len() != n || converged.len() != n {
            return Err(Error::Precondition("linewidth table columns must be nonempty and of equal length".into()));
        }
        check_ascending("sigma_sd_grid", &sigma_sd_grid)?;
        let best = (0..n).min_by(|&a, &b| ssr[a].total_cmp(&ssr[b])).expect("nonempty");
        let nonincreasing = |g: &[f64]| g.windows(2).all(|w| w[1] <= 1.02 * w[0]);
        let monotone = nonincreasing(&gamma1) && nonincreasing(&gamma2);
        Ok(Self {
            best_sigma_sd: sigma_sd_grid[best],
            sigma_sd_grid,
            gamma1,
            gamma2,
            ssr,
            converged,
            monotone,
        })
    }

    /// (Γ₁, Γ₂) at `sigma_sd` by piecewise-linear interpolation.
    pub fn linewidths_at(&self, sigma_sd: f64) -> Result<(f64, f64)> {
        let g = &self.sigma_sd_grid;
        let (lo, hi) = (g[0], g[g.len() - 1]);
        let tol = 1e-9 * (hi - lo).abs().max(1.0);
        if !(sigma_sd >= lo - tol && sigma_sd <= hi + tol) {
            return Err(Error::Precondition(format!("σ_SD = {sigma_sd} outside the table range [{lo}, {hi}]")));
        }
        let s = sigma_sd.clamp(lo, hi);
        let k = g.partition_point(|v| *v <= s).clamp(1, g.len().max(2) - 1);
        if g.len() == 1 {
            return Ok((self.gamma1[0], self.gamma2[0]));
        }
        let t = (s - g[k - 1]) / (g[k] - g[k - 1]);
        let lerp = |v: &[f64]| v[k - 1] + t * (v[k] - v[k - 1]);
        Ok((lerp(&self.gamma1), lerp(&self.gamma2)))
    }
}

fn check_ascending(name: &'static str, v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter {
            name,
            reason: "values must be finite and strictly ascending".into(),
        });
    }
    Ok(())
}

/// Uniform σ_SD grid `0, step, …, ≤ max` (µeV).
pub fn sigma_sd_grid(max: f64, step: f64) -> Result<Vec<f64>> {
    check_positive("step", step)?;
    crate::error::check_nonnegative("max", max)?;
    let n = (max / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| i as f64 * step).collect())
}

/// Runs [`fit_freespace_spectrum`] at each σ_SD of `grid`, in parallel.
pub fn build_linewidth_table(data: &SampledCurve, grid: &[f64], init: &DoubletInit) -> Result<(LinewidthTable, Vec<FitResult>)> {
    if grid.is_empty() {
        return Err(Error::Precondition("σ_SD grid is empty".into()));
    }
    check_ascending("sigma_sd_grid", grid)?;
    let fits: Vec<FitResult> = grid
        .par_iter()
        .map(|&s| fit_freespace_spectrum(data, s, init))
        .collect::<Result<_>>()?;
    let table = LinewidthTable::new(
        grid.to_vec(),
        fits.iter().map(|f| f.get("gamma1_uev")).collect(),
        fits.iter().map(|f| f.get("gamma2_uev")).collect(),
        fits.iter().map(|f| f.ssr).collect(),
        fits.iter().map(|f| f.converged).collect(),
    )?;
    Ok((table, fits))
}

// ---------------------------------------------------------------------------
// Cavity transmission

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionInit {
    pub kappa_uev: f64,
    pub sigma_vib_uev: f64,
    pub omega0_uev: f64,
    /// Co-fit κ instead of holding it at `kappa_uev`.
    #[serde(default)]
    pub fit_kappa: bool,
}

/// Fits `A·V(ħκ, σ_vib)(ω − ω₀) + B` to a cavity transmission spectrum.
pub fn fit_cavity_transmission(data: &SampledCurve, init: &TransmissionInit) -> Result<FitResult> {
    check_positive("kappa_uev", init.kappa_uev)?;
    let span = data.end() - data.start;
    let axis = data.axis_values();
    let kappa = init.kappa_uev;
    let mut specs = vec![
        ParamSpec::new("sigma_vib_uev", init.sigma_vib_uev.clamp(0.0, span), 0.0, span)
            .with_scale(init.sigma_vib_uev.max(kappa)),
        ParamSpec::new("omega0_uev", init.omega0_uev, data.start, data.end()).with_scale(kappa),
    ];
    if init.fit_kappa {
        specs.push(ParamSpec::new("kappa_uev", kappa, 0.05 * data.step, 10.0 * span));
    }
    let basis = |x: &[f64]| -> Result<Vec<Vec<f64>>> {
        let k = if init.fit_kappa { x[2] } else { kappa };
        let v = VoigtProfile::new(k, x[0])?;
        Ok(vec![axis.iter().map(|w| v.eval(w - x[1])).collect(), vec![1.0; axis.len()]])
    };
    let mut fit = fit_separable(
        basis,
        &data.values,
        &specs,
        &[LinearTerm::nonnegative("amplitude"), LinearTerm::free("background")],
        &MinimizerOptions::default(),
    )?;
    if !init.fit_kappa {
        fit.params.push(FitParam {
            name: "kappa_uev".into(),
            value: kappa,
            uncertainty: 0.0,
        });
    }
    Ok(fit)
}

/// Full width at half maximum of a Voigt profile (Olivero–Longbothum, ~0.02%).
pub fn voigt_fwhm(gamma_w: f64, sigma: f64) -> f64 {
    let fg = 2.0 * (2.0 * 2f64.ln()).sqrt() * sigma;
    0.5346 * gamma_w + (0.2166 * gamma_w * gamma_w + fg * fg).sqrt()
}

// ---------------------------------------------------------------------------
// Envelope and decay fits for g

/// Cavity and emitter quantities held fixed while g is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedSystem {
    pub kappa_inv_ns: f64,
    pub sigma_vib_uev: f64,
    pub delta_uev: f64,
    /// Radiative rate, from the free-space lifetime.
    pub gamma_inv_ns: f64,
    #[serde(default)]
    pub storage_rate_inv_ns: Option<f64>,
    #[serde(default = "default_mode_order")]
    pub mode_order: u32,
}

fn default_mode_order() -> u32 {
    1
}

impl FixedSystem {
    fn cavity(&self, omega_a_bar: f64) -> Result<CavityParams> {
        match self.storage_rate_inv_ns {
            Some(s) => CavityParams::with_storage_rate(omega_a_bar, self.kappa_inv_ns, self.sigma_vib_uev, self.mode_order, s),
            None => CavityParams::new(omega_a_bar, self.kappa_inv_ns, self.sigma_vib_uev, self.mode_order),
        }
    }

    /// Emitter with γ*ᵢ = Γᵢ/ħ − γ. Amplitudes are unit; fits scale them.
    fn emitter(&self, table: &LinewidthTable, sigma_sd: f64, omega_x_bar: f64) -> Result<EmitterParams> {
        let (g1, g2) = table.linewidths_at(sigma_sd)?;
        let gs = |gw: f64| {
            let v = energy_to_rate(gw) - self.gamma_inv_ns;
            if v < 0.0 {
                Err(Error::Domain(format!(
                    "instantaneous linewidth {gw} µeV is below the radiative width {} µeV",
                    rate_to_energy(self.gamma_inv_ns)
                )))
            } else {
                Ok(v)
            }
        };
        EmitterParams::new(omega_x_bar, self.delta_uev, self.gamma_inv_ns, gs(g1)?, gs(g2)?, sigma_sd, 1.0, 1.0)
    }
}

/// g fitted at one assumed σ_SD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GEstimate {
    pub sigma_sd_uev: f64,
    /// Mean instantaneous linewidth ħ(γ+γ*) of the two lines, µeV.
    pub linewidth_uev: f64,
    pub g_uev: f64,
    pub fit: FitResult,
}

fn mean_linewidth(table: &LinewidthTable, sigma_sd: f64) -> Result<f64> {
    let (a, b) = table.linewidths_at(sigma_sd)?;
    Ok(0.5 * (a + b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeInit {
    pub g_uev: f64,
    pub omega_x_bar_uev: f64,
    pub omega_a_bar_uev: f64,
}

const ENVELOPE_NONLINEAR: [&str; 3] = ["g_uev", "omega_x_bar_uev", "omega_a_bar_uev"];

fn envelope_basis(
    data: &SampledCurve,
    table: &LinewidthTable,
    sigma_sd: f64,
    fixed: &FixedSystem,
    x: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let e = fixed.emitter(table, sigma_sd, x[1])?;
    let c = fixed.cavity(x[2])?;
    let [e1, e2] = envelope_lines(&e, &c, energy_to_rate(x[0]), &data.grid(), EnvelopeOptions::default());
    Ok(vec![e1.values, e2.values, vec![1.0; data.len()]])
}

/// Fits g, ω̄_X and ω̄_a (with A₁, A₂, B linear) to a spectral envelope at
/// the linewidths the table assigns to `sigma_sd`. γ stays frozen.
pub fn fit_envelope_for_g(
    data: &SampledCurve,
    table: &LinewidthTable,
    sigma_sd: f64,
    fixed: &FixedSystem,
    init: &EnvelopeInit,
) -> Result<GEstimate> {
    let linewidth = mean_linewidth(table, sigma_sd)?;
    let span = data.end() - data.start;
    let kappa_uev = rate_to_energy(fixed.kappa_inv_ns);
    let specs = [
        ParamSpec::new(ENVELOPE_NONLINEAR[0], init.g_uev.clamp(0.0, span), 0.0, span).with_scale(init.g_uev.max(kappa_uev * 0.1)),
        ParamSpec::new(ENVELOPE_NONLINEAR[1], init.omega_x_bar_uev, data.start - span, data.end() + span)
            .with_scale(linewidth),
        ParamSpec::new(ENVELOPE_NONLINEAR[2], init.omega_a_bar_uev, data.start - span, data.end() + span)
            .with_scale(linewidth),
    ];
    let opts = MinimizerOptions {
        max_eval: 400,
        ..MinimizerOptions::default()
    };
    let fit = fit_separable(
        |x| envelope_basis(data, table, sigma_sd, fixed, x),
        &data.values,
        &specs,
        &[LinearTerm::nonnegative("a1"), LinearTerm::nonnegative("a2"), LinearTerm::free("background")],
        &opts,
    )?;
    Ok(GEstimate {
        sigma_sd_uev: sigma_sd,
        linewidth_uev: linewidth,
        g_uev: fit.get("g_uev"),
        fit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayInit {
    pub g_uev: f64,
    pub gamma_long_inv_ns: f64,
    pub t0_ns: f64,
    /// Doublet–cavity mean detuning ω̄_X − ω̄_a during the decay acquisition, µeV.
    #[serde(default)]
    pub detuning_uev: f64,
}

fn decay_basis(
    data: &SampledCurve,
    irf: &IrfKernel,
    table: &LinewidthTable,
    sigma_sd: f64,
    fixed: &FixedSystem,
    detuning: f64,
    x: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let e = fixed.emitter(table, sigma_sd, detuning)?;
    let c = fixed.cavity(0.0)?;
    let [l1, l2, long] = cavity_decay_basis(&e, &c, energy_to_rate(x[0]), x[1], x[2], irf, &data.grid())?;
    Ok(vec![l1.values, l2.values, long.values, vec![1.0; data.len()]])
}

/// Fits g, γ_long and t₀ (with A₁, A₂, A_long, background linear) to a
/// cavity decay at the linewidths the table assigns to `sigma_sd`. Times in ns.
pub fn fit_decay_for_g(
    data: &SampledCurve,
    irf: &IrfKernel,
    table: &LinewidthTable,
    sigma_sd: f64,
    fixed: &FixedSystem,
    init: &DecayInit,
) -> Result<GEstimate> {
    let linewidth = mean_linewidth(table, sigma_sd)?;
    let span = data.end() - data.start;
    let kappa_uev = rate_to_energy(fixed.kappa_inv_ns);
    let g_hi = 20.0 * kappa_uev.max(linewidth);
    let specs = [
        ParamSpec::new("g_uev", init.g_uev.clamp(0.0, g_hi), 0.0, g_hi).with_scale(init.g_uev.max(0.1 * kappa_uev)),
        ParamSpec::new("gamma_long_inv_ns", init.gamma_long_inv_ns, 1e-3 / span, 1e3 / data.step.max(1e-6))
            .with_scale(init.gamma_long_inv_ns),
        ParamSpec::new("t0_ns", init.t0_ns, data.start, data.end()).with_scale(0.01),
    ];
    let opts = MinimizerOptions {
        max_eval: 600,
        ..MinimizerOptions::default()
    };
    let fit = fit_separable(
        |x| decay_basis(data, irf, table, sigma_sd, fixed, init.detuning_uev, x),
        &data.values,
        &specs,
        &[
            LinearTerm::nonnegative("a1"),
            LinearTerm::nonnegative("a2"),
            LinearTerm::nonnegative("a_long"),
            LinearTerm::free("background"),
        ],
        &opts,
    )?;
    Ok(GEstimate {
        sigma_sd_uev: sigma_sd,
        linewidth_uev: linewidth,
        g_uev: fit.get("g_uev"),
        fit,
    })
}

/// g fitted at every σ_SD of the table, in parallel, as a curve against the
/// instantaneous linewidth.
pub fn envelope_g_curve(
    data: &SampledCurve,
    table: &LinewidthTable,
    fixed: &FixedSystem,
    init: &EnvelopeInit,
) -> Result<(GCurve, Vec<GEstimate>)> {
    let ests: Vec<GEstimate> = table
        .sigma_sd_grid
        .par_iter()
        .map(|&s| fit_envelope_for_g(data, table, s, fixed, init))
        .collect::<Result<_>>()?;
    Ok((GCurve::from_estimates(&ests, GSource::Envelope)?, ests))
}

pub fn decay_g_curve(
    data: &SampledCurve,
    irf: &IrfKernel,
    table: &LinewidthTable,
    fixed: &FixedSystem,
    init: &DecayInit,
) -> Result<(GCurve, Vec<GEstimate>)> {
    let ests: Vec<GEstimate> = table
        .sigma_sd_grid
        .par_iter()
        .map(|&s| fit_decay_for_g(data, irf, table, s, fixed, init))
        .collect::<Result<_>>()?;
    Ok((GCurve::from_estimates(&ests, GSource::Decay)?, ests))
}

// ---------------------------------------------------------------------------
// Crossing

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GSource {
    Envelope,
    Decay,
}

/// g (µeV) against the instantaneous linewidth ħ(γ+γ*) (µeV).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GCurve {
    pub gamma_axis: Vec<f64>,
    pub g_values: Vec<f64>,
    pub source: GSource,
}

impl GCurve {
    pub fn new(gamma_axis: Vec<f64>, g_values: Vec<f64>, source: GSource) -> Result<Self> {
        if gamma_axis.len() != g_values.len() || gamma_axis.is_empty() {
            return Err(Error::Precondition("g curve needs equal, nonempty axis and value lists".into()));
        }
        check_ascending("gamma_axis", &gamma_axis)?;
        if g_values.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::InvalidParameter {
                name: "g_values",
                reason: "g values must be finite and positive".into(),
            });
        }
        Ok(Self {
            gamma_axis,
            g_values,
            source,
        })
    }

    /// Sorts estimates by linewidth.
    pub fn from_estimates(ests: &[GEstimate], source: GSource) -> Result<Self> {
        let mut pts: Vec<(f64, f64)> = ests.iter().map(|e| (e.linewidth_uev, e.g_uev)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self::new(pts.iter().map(|p| p.0).collect(), pts.iter().map(|p| p.1).collect(), source)
    }

    /// Piecewise-linear value; `None` outside the axis range.
    pub fn at(&self, x: f64) -> Option<f64> {
        let a = &self.gamma_axis;
        if x < a[0] || x > a[a.len() - 1] {
            return None;
        }
        if a.len() == 1 {
            return Some(self.g_values[0]);
        }
        let k = a.partition_point(|v| *v <= x).clamp(1, a.len() - 1);
        let t = (x - a[k - 1]) / (a[k] - a[k - 1]);
        Some(self.g_values[k - 1] + t * (self.g_values[k] - self.g_values[k - 1]))
    }

    /// True if every step is strictly decreasing (`sign = -1`) or increasing (`+1`).
    pub fn is_strictly_monotone(&self, sign: f64) -> bool {
        self.g_values.windows(2).all(|w| sign * (w[1] - w[0]) > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingResult {
    /// Crossing abscissa ħ(γ+γ*), µeV. The smallest-linewidth crossing.
    pub gamma_star_total: f64,
    pub g_cross: f64,
    pub all_crossings: Vec<(f64, f64)>,
    /// The curves coincide over the whole overlap.
    pub degenerate: bool,
}

/// Intersections of the two piecewise-linear curves over their common range.
pub fn find_crossing(env: &GCurve, dec: &GCurve) -> Result<CrossingResult> {
    let lo = env.gamma_axis[0].max(dec.gamma_axis[0]);
    let hi = env.gamma_axis[env.gamma_axis.len() - 1].min(dec.gamma_axis[dec.gamma_axis.len() - 1]);
    if lo > hi {
        return Err(Error::Precondition(format!("g curves do not overlap: common range [{lo}, {hi}] is empty")));
    }
    let mut knots: Vec<f64> = env
        .gamma_axis
        .iter()
        .chain(&dec.gamma_axis)
        .copied()
        .filter(|x| *x >= lo && *x <= hi)
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let diff = |x: f64| env.at(x).expect("in range") - dec.at(x).expect("in range");
    let scale = env.g_values.iter().chain(&dec.g_values).fold(0.0f64, |m, v| m.max(v.abs()));
    let is_zero = |d: f64| d.abs() <= 1e-12 * scale;
    let d: Vec<f64> = knots.iter().map(|&x| diff(x)).collect();
    if d.iter().all(|v| is_zero(*v)) {
        return Ok(CrossingResult {
            gamma_star_total: knots[0],
            g_cross: env.at(knots[0]).expect("in range"),
            all_crossings: knots.iter().map(|&x| (x, env.at(x).expect("in range"))).collect(),
            degenerate: true,
        });
    }
    let mut roots: Vec<f64> = Vec::new();
    for (k, &x) in knots.iter().enumerate() {
        if is_zero(d[k]) {
            roots.push(x);
        }
    }
    for k in 1..knots.len() {
        let (a, b) = (d[k - 1], d[k]);
        if !is_zero(a) && !is_zero(b) && a.signum() != b.signum() {
            // The difference is linear between knots.
            roots.push(knots[k - 1] + (knots[k] - knots[k - 1]) * a / (a - b));
        }
    }
    if roots.is_empty() {
        let min_gap = d.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        return Err(Error::NoCrossing { min_gap });
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup();
    let all: Vec<(f64, f64)> = roots.iter().map(|&x| (x, env.at(x).expect("in range"))).collect();
    Ok(CrossingResult {
        gamma_star_total: all[0].0,
        g_cross: all[0].1,
        all_crossings: all,
        degenerate: false,
    })
}

// ---------------------------------------------------------------------------
// Lifetimes

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeInit {
    /// One or two lifetimes, ns.
    pub taus_ns: Vec<f64>,
    pub t0_ns: f64,
}

/// Fits `B + IRF ⋆ Θ Σ Aᵢ e^{−(t−t₀)/τᵢ}` (one or two components).
pub fn fit_freespace_lifetime(data: &SampledCurve, irf: &IrfKernel, init: &LifetimeInit) -> Result<FitResult> {
    let k = init.taus_ns.len();
    if !(1..=2).contains(&k) {
        return Err(Error::InvalidParameter {
            name: "taus_ns",
            reason: "one or two lifetimes".into(),
        });
    }
    let span = data.end() - data.start;
    let grid = data.grid();
    let mut specs: Vec<ParamSpec> = init
        .taus_ns
        .iter()
        .enumerate()
        .map(|(i, &tau)| ParamSpec::new(&format!("tau{}_ns", i + 1), tau, 0.05 * data.step, 100.0 * span))
        .collect();
    specs.push(ParamSpec::new("t0_ns", init.t0_ns, data.start, data.end()).with_scale(0.01));
    let basis = |x: &[f64]| -> Result<Vec<Vec<f64>>> {
        let mut cols = Vec::with_capacity(k + 1);
        for &tau in &x[..k] {
            let m = FreeSpaceDecay {
                components: vec![(1.0, tau)],
                t0: x[k],
                background: 0.0,
            };
            cols.push(decay_model_freespace(&m, irf, &grid)?.values);
        }
        cols.push(vec![1.0; grid.len]);
        Ok(cols)
    };
    let mut linear: Vec<LinearTerm> = (1..=k).map(|i| LinearTerm::nonnegative(&format!("a{i}"))).collect();
    linear.push(LinearTerm::free("background"));
    fit_separable(basis, &data.values, &specs, &linear, &MinimizerOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityLifetimeInit {
    pub tau_ns: f64,
    pub t0_ns: f64,
    pub storage_rate_inv_ns: f64,
    /// Adds a long phenomenological component when set.
    #[serde(default)]
    pub tau_long_ns: Option<f64>,
}

/// Fits `B + IRF ⋆ storage ⋆ Θ (A e^{−(t−t₀)/τ} [+ A_long e^{−(t−t₀)/τ_long}])`
/// with the storage rate held fixed.
pub fn fit_cavity_lifetime(data: &SampledCurve, irf: &IrfKernel, init: &CavityLifetimeInit) -> Result<FitResult> {
    check_positive("storage_rate_inv_ns", init.storage_rate_inv_ns)?;
    let span = data.end() - data.start;
    let grid = data.grid();
    let mut specs = vec![
        ParamSpec::new("tau_ns", init.tau_ns, 0.05 * data.step, 100.0 * span),
        ParamSpec::new("t0_ns", init.t0_ns, data.start, data.end()).with_scale(0.01),
    ];
    if let Some(tl) = init.tau_long_ns {
        specs.push(ParamSpec::new("tau_long_ns", tl, 0.05 * data.step, 100.0 * span));
    }
    let basis = |x: &[f64]| -> Result<Vec<Vec<f64>>> {
        let stored = |tau: f64| {
            let comp = [DecayComponent {
                amplitude: 1.0,
                rate: 1.0 / tau,
            }];
            irf.convolve(&bin_stored_components(&comp, init.storage_rate_inv_ns, x[1], &grid))
                .map(|c| c.values)
        };
        let mut cols = vec![stored(x[0])?];
        if x.len() > 2 {
            cols.push(stored(x[2])?);
        }
        cols.push(vec![1.0; grid.len]);
        Ok(cols)
    };
    let mut linear = vec![LinearTerm::nonnegative("a")];
    if init.tau_long_ns.is_some() {
        linear.push(LinearTerm::nonnegative("a_long"));
    }
    linear.push(LinearTerm::free("background"));
    fit_separable(basis, &data.values, &specs, &linear, &MinimizerOptions::default())
}

// ---------------------------------------------------------------------------
// Purcell arithmetic

/// F_p = (τ_fs/τ_cav − 1)/η_QY.
pub fn purcell_from_acceleration(tau_fs: f64, tau_cav: f64, eta_qy: f64) -> Result<f64> {
    check_positive("tau_fs", tau_fs)?;
    check_positive("tau_cav", tau_cav)?;
    if !(eta_qy > 0.0 && eta_qy.is_finite()) {
        return Err(Error::Domain(format!("quantum yield must be positive, got {eta_qy}")));
    }
    Ok((tau_fs / tau_cav - 1.0) / eta_qy)
}

/// τ_fs/τ_cav = 1 + η_QY·F_p.
pub fn acceleration_from_purcell(purcell: f64, eta_qy: f64) -> Result<f64> {
    check_finite("purcell", purcell)?;
    if !(eta_qy > 0.0 && eta_qy.is_finite()) {
        return Err(Error::Domain(format!("quantum yield must be positive, got {eta_qy}")));
    }
    Ok(1.0 + eta_qy * purcell)
}

/// Harmonic combination (1/q_cav + 1/q_em)⁻¹; `q_em = ∞` gives q_cav.
pub fn effective_quality_factor(q_cav: f64, q_em: f64) -> Result<f64> {
    check_positive("q_cav", q_cav)?;
    if !(q_em > 0.0) {
        return Err(Error::InvalidParameter {
            name: "q_em",
            reason: format!("must be > 0, got {q_em}"),
        });
    }
    Ok(1.0 / (1.0 / q_cav + 1.0 / q_em))
}

/// λ³/V from a wavelength (nm) and a mode volume (µm³).
pub fn lambda3_over_v(lambda_nm: f64, volume_um3: f64) -> Result<f64> {
    check_positive("lambda_nm", lambda_nm)?;
    check_positive("volume_um3", volume_um3)?;
    Ok((lambda_nm * 1e-3).powi(3) / volume_um3)
}

/// F_p = (3/4π²)·n⁻³·Q_eff·(λ³/V).
pub fn purcell_theoretical(n: f64, q_cav: f64, q_em: f64, lambda3_over_v: f64) -> Result<f64> {
    check_positive("n", n)?;
    check_positive("lambda3_over_v", lambda3_over_v)?;
    let q = effective_quality_factor(q_cav, q_em)?;
    Ok(3.0 / (4.0 * std::f64::consts::PI.powi(2)) / n.powi(3) * q * lambda3_over_v)
}

// ---------------------------------------------------------------------------
// Saturation, power law, regression

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    pub i_sat: f64,
    pub p_sat: f64,
    pub fit: FitResult,
}

/// I(P) = I_sat·(P/P_sat)/(1 + P/P_sat).
pub fn saturation_model(p: f64, i_sat: f64, p_sat: f64) -> f64 {
    let x = p / p_sat;
    i_sat * x / (1.0 + x)
}

pub fn fit_saturation(data: &[(f64, f64)]) -> Result<SaturationFit> {
    if data.len() < 3 {
        return Err(Error::Precondition("saturation fit needs at least 3 points".into()));
    }
    for &(p, i) in data {
        crate::error::check_nonnegative("power", p)?;
        check_finite("intensity", i)?;
    }
    let powers: Vec<f64> = data.iter().map(|d| d.0).collect();
    let y: Vec<f64> = data.iter().map(|d| d.1).collect();
    let p_max = powers.iter().copied().fold(0.0, f64::max);
    let p_min = powers.iter().copied().filter(|p| *p > 0.0).fold(f64::INFINITY, f64::min);
    if !(p_max > 0.0) {
        return Err(Error::Domain("saturation fit needs a positive power".into()));
    }
    let mut sorted = powers.clone();
    sorted.sort_by(f64::total_cmp);
    let init = sorted[sorted.len() / 2].max(p_min);
    let specs = [ParamSpec::new("p_sat", init, 1e-3 * p_min, 1e3 * p_max)];
    let fit = fit_separable(
        |x| Ok(vec![powers.iter().map(|&p| saturation_model(p, 1.0, x[0])).collect()]),
        &y,
        &specs,
        &[LinearTerm::nonnegative("i_sat")],
        &MinimizerOptions::default(),
    )?;
    Ok(SaturationFit {
        i_sat: fit.get("i_sat"),
        p_sat: fit.get("p_sat"),
        fit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least-squares line through (x, y).
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Precondition("regression needs at least two paired points".into()));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all abscissae are equal".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub prefactor: f64,
    pub r_squared: f64,
}

/// I = c·P^α by least squares on log I against log P.
pub fn fit_power_law(data: &[(f64, f64)]) -> Result<PowerLawFit> {
    if data.iter().any(|&(p, i)| !(p > 0.0 && i > 0.0 && p.is_finite() && i.is_finite())) {
        return Err(Error::Domain("power-law fit needs positive powers and intensities".into()));
    }
    let lx: Vec<f64> = data.iter().map(|d| d.0.ln()).collect();
    let ly: Vec<f64> = data.iter().map(|d| d.1.ln()).collect();
    let l = linear_regression(&lx, &ly)?;
    Ok(PowerLawFit {
        alpha: l.slope,
        prefactor: l.intercept.exp(),
        r_squared: l.r_squared,
    })
}
