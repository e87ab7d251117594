//! Spectral envelope of the emitter–cavity system under a fluctuating cavity
//! resonance: the exact marginal over cavity energy, the full double integral
//! over spectral diffusion and vibrations, the small-coupling approximation and
//! the dip metric.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lineshape::{SampledCurve, UniformGrid, VoigtProfile};
use crate::quadrature::{gauss_legendre, normal_rule, semi_infinite};
use crate::quantities::{energy_to_rate, rate_to_energy, CavityParams, EmitterParams, Line, HBAR_UEV_NS};
use crate::spectrum::{effective_rates, SpectrumKernel, SubsystemParams};

/// Below this ratio γ*/γ_all the closed-form amplitudes lose more than ~1e-8
/// to cancellation and the numeric marginal is used instead.
const MIN_DEPHASING_RATIO: f64 = 1e-8;

/// `∫ S(ω; ω_X, ω_a) dω_a` written as two Lorentzians centered on ω_X.
/// Widths and amplitudes are in rate units and may be complex conjugate
/// pairs; only their real sum is physical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalDecomposition {
    /// Emitter energy the components are centered on, µeV.
    pub omega_x: f64,
    pub ell_plus: Complex64,
    pub ell_minus: Complex64,
    pub a_plus: Complex64,
    pub a_minus: Complex64,
    pub gamma_all: f64,
    pub gamma_cap_all: f64,
    pub kappa_tilde: Complex64,
}

impl MarginalDecomposition {
    /// Marginal at energy `omega` (µeV). Dimensionless.
    pub fn eval(&self, omega: f64) -> f64 {
        let x = energy_to_rate(omega - self.omega_x);
        let term = |a: Complex64, l: Complex64| {
            let u = x / (0.5 * l);
            a / (1.0 + u * u)
        };
        (term(self.a_plus, self.ell_plus) + term(self.a_minus, self.ell_minus)).re
    }

    pub fn curve(&self, grid: &UniformGrid) -> SampledCurve {
        SampledCurve::from_fn(grid, |w| self.eval(w))
    }
}

/// Closed-form marginal over the cavity energy.
pub fn marginal_exact(p: &SubsystemParams) -> Result<MarginalDecomposition> {
    p.validate()?;
    if p.g == 0.0 {
        return Err(Error::Domain("marginal decomposition needs g > 0".into()));
    }
    let (ga, gs, k, g) = (p.gamma, p.gamma_star, p.kappa, p.g);
    let gall = p.gamma_all();
    if gs < MIN_DEPHASING_RATIO * gall {
        return Err(Error::Degenerate(
            "decomposition amplitudes vanish with pure dephasing: use marginal_numeric".into(),
        ));
    }
    let g2 = g * g;
    let gcap = (gall * gall + 4.0 * g2 * gall * (ga + k) / (ga * k)).sqrt();
    let kt = Complex64::new(-4.0 * g2 + (0.5 * (gcap - gall) + k).powi(2), 0.0).sqrt();
    let base = 0.5 * (gall + gcap);
    let numerator = 32.0 * g2 * g2 * gall * k * gs;
    let amp = |sign: f64| {
        let d1 = gall + gcap + sign * 2.0 * kt;
        let d2 = gall * gall - gall * gcap + 2.0 * gcap * k + sign * 2.0 * gall * kt;
        sign * numerator / (ga * ga * gcap * kt * d1 * d2)
    };
    Ok(MarginalDecomposition {
        omega_x: p.omega_x,
        ell_plus: base + kt,
        ell_minus: base - kt,
        a_plus: amp(1.0),
        a_minus: amp(-1.0),
        gamma_all: gall,
        gamma_cap_all: gcap,
        kappa_tilde: kt,
    })
}

/// Numeric `∫ S(ω; ω_X, ω_a) dω_a` at one energy (µeV).
///
/// The integrand is analytic within κ/2 of the real ω_a axis, so a uniform
/// trapezoid with step κ/8 converges geometrically on the central window.
/// The x⁻² tails are mapped onto a finite interval.
pub fn marginal_numeric_at(p: &SubsystemParams, omega: f64) -> f64 {
    if p.g == 0.0 {
        return 0.0;
    }
    let w = energy_to_rate(omega);
    let wx = energy_to_rate(p.omega_x);
    let width = p.gamma_all() + 2.0 * p.g;
    let lo = w.min(wx) - 30.0 * width;
    let hi = w.max(wx) + 30.0 * width;
    let h_target = p.kappa.min(p.gamma_all()) / 8.0;
    let n = ((hi - lo) / h_target).ceil() as usize;
    let h = (hi - lo) / n as f64;
    let f = |wa: f64| {
        let q = SubsystemParams {
            omega_a: rate_to_energy(wa),
            ..*p
        };
        SpectrumKernel::new(&q).density_rate(w)
    };
    let mut central = 0.5 * (f(lo) + f(hi));
    for i in 1..n {
        central += f(lo + i as f64 * h);
    }
    central *= h;
    let (x, wts) = gauss_legendre(48);
    let right = semi_infinite(f, hi, 30.0 * width, &x, &wts);
    let left = semi_infinite(|t| f(2.0 * lo - t), lo, 30.0 * width, &x, &wts);
    central + right + left
}

pub fn marginal_numeric(p: &SubsystemParams, grid: &UniformGrid) -> SampledCurve {
    let values = (0..grid.len)
        .into_par_iter()
        .map(|i| marginal_numeric_at(p, grid.at(i)))
        .collect();
    SampledCurve {
        start: grid.start,
        step: grid.step,
        values,
    }
}

/// Marginal via the closed form when it is well conditioned, numerically otherwise.
pub fn marginal_value(p: &SubsystemParams, omega: f64) -> f64 {
    match marginal_exact(p) {
        Ok(m) => m.eval(omega),
        Err(_) => marginal_numeric_at(p, omega),
    }
}

/// Accuracy control for [`envelope_full`]. `refine = 2` halves every quadrature step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOptions {
    pub refine: f64,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self { refine: 1.0 }
    }
}

/// Per-line precomputation for the double Gaussian average.
///
/// With δ = ω_X − ω_a, the spectrum depends on ω only through ω − ω_X, and on
/// the cavity only through δ. δ is Gaussian with variance σ_SD² + σ_vib², and
/// ω_X given δ is Gaussian with variance σ_SD²σ_vib²/(σ_SD² + σ_vib²). The
/// average is taken over δ, then over ω_X given δ.
struct LineAverage {
    /// Roots relative to ω_X and kernel scale, per δ node (rate units).
    nodes: Vec<DeltaNode>,
    cond_offsets: Vec<f64>,
    cond_weights: Vec<f64>,
}

struct DeltaNode {
    weight: f64,
    /// Conditional mean of ω_X, as a rate.
    mean: f64,
    ax: f64,
    bx2: f64,
    aa: f64,
    ba2: f64,
    scale: f64,
}

impl LineAverage {
    fn new(e: &EmitterParams, c: &CavityParams, g: f64, line: Line, opts: EnvelopeOptions) -> Self {
        let center = e.omega_x_bar + e.line_offset(line);
        let gamma_star = e.gamma_star(line);
        let (s_sd, s_vib) = (e.sigma_sd, c.sigma_vib);
        let s_tot = (s_sd * s_sd + s_vib * s_vib).sqrt();
        let s_cond = if s_tot > 0.0 { s_sd * s_vib / s_tot } else { 0.0 };
        let rho = if s_tot > 0.0 { s_sd * s_sd / (s_tot * s_tot) } else { 0.0 };
        // Narrowest half-width of the homogeneous structure, µeV.
        let half = 0.5 * rate_to_energy(c.kappa.min(e.gamma + gamma_star));
        let feat = 0.31 * half / opts.refine;
        let delta_step = feat.max(0.7 * s_cond / opts.refine);
        let (d_off, d_w) = normal_rule(s_tot, delta_step);
        let (cond_offsets, cond_weights) = normal_rule(s_cond, feat);
        let delta0 = center - c.omega_a_bar;
        let nodes = d_off
            .iter()
            .zip(&d_w)
            .map(|(&off, &weight)| {
                let delta = delta0 + off;
                let p = SubsystemParams {
                    omega_x: delta,
                    omega_a: 0.0,
                    gamma: e.gamma,
                    gamma_star,
                    kappa: c.kappa,
                    g,
                };
                let k = SpectrumKernel::new(&p);
                let wx = energy_to_rate(delta);
                DeltaNode {
                    weight,
                    mean: energy_to_rate(center + rho * off),
                    ax: k.root_x.re - wx,
                    bx2: k.root_x.im * k.root_x.im,
                    aa: k.root_a.re - wx,
                    ba2: k.root_a.im * k.root_a.im,
                    scale: k.scale,
                }
            })
            .collect();
        Self {
            nodes,
            cond_offsets: cond_offsets.into_iter().map(energy_to_rate).collect(),
            cond_weights,
        }
    }

    /// Averaged density per µeV at `omega` (µeV).
    fn eval(&self, omega: f64) -> f64 {
        let w = energy_to_rate(omega);
        let mut total = 0.0;
        for n in &self.nodes {
            if n.scale == 0.0 {
                continue;
            }
            let base = w - n.mean;
            let mut inner = 0.0;
            for (off, cw) in self.cond_offsets.iter().zip(&self.cond_weights) {
                let u = base - off;
                let dx = u - n.ax;
                let da = u - n.aa;
                inner += cw / ((dx * dx + n.bx2) * (da * da + n.ba2));
            }
            total += n.weight * n.scale * inner;
        }
        total / HBAR_UEV_NS
    }
}

/// Unit-amplitude envelopes of each line, `[E₁, E₂]`, without background.
pub fn envelope_lines(
    e: &EmitterParams,
    c: &CavityParams,
    g: f64,
    grid: &UniformGrid,
    opts: EnvelopeOptions,
) -> [SampledCurve; 2] {
    Line::BOTH.map(|line| {
        let avg = LineAverage::new(e, c, g, line, opts);
        let values = (0..grid.len).into_par_iter().map(|i| avg.eval(grid.at(i))).collect();
        SampledCurve {
            start: grid.start,
            step: grid.step,
            values,
        }
    })
}

/// Envelope `A₁E₁ + A₂E₂`, averaged over spectral diffusion (σ_SD) of the
/// emitter and vibrations (σ_vib) of the cavity. `g` is a rate.
pub fn envelope_full(e: &EmitterParams, c: &CavityParams, g: f64, grid: &UniformGrid) -> SampledCurve {
    envelope_full_with(e, c, g, grid, EnvelopeOptions::default())
}

pub fn envelope_full_with(
    e: &EmitterParams,
    c: &CavityParams,
    g: f64,
    grid: &UniformGrid,
    opts: EnvelopeOptions,
) -> SampledCurve {
    let [e1, e2] = envelope_lines(e, c, g, grid, opts);
    SampledCurve {
        start: grid.start,
        step: grid.step,
        values: e1
            .values
            .iter()
            .zip(&e2.values)
            .map(|(a, b)| e.a1 * a + e.a2 * b)
            .collect(),
    }
}

/// Weight of the 2κ-broadened term relative to the free-space term for one line.
fn correction_ratio(e: &EmitterParams, c: &CavityParams, g: f64, line: Line) -> f64 {
    let gs = e.gamma_star(line);
    if gs + c.kappa == 0.0 {
        return 0.0;
    }
    gs / (gs + c.kappa) * g * g / (c.kappa * e.gamma)
}

/// Small-coupling envelope: the free-space doublet Voigt spectrum plus a
/// copy broadened by 2κ, scaled by g². The cavity presence probability is
/// taken as flat.
pub fn envelope_approx(e: &EmitterParams, c: &CavityParams, g: f64, grid: &UniformGrid) -> Result<SampledCurve> {
    let two_kappa = rate_to_energy(2.0 * c.kappa);
    let mut parts = Vec::new();
    for line in Line::BOTH {
        let gw = rate_to_energy(e.instantaneous_linewidth(line));
        parts.push((
            e.omega_x_bar + e.line_offset(line),
            e.amplitude(line),
            correction_ratio(e, c, g, line),
            VoigtProfile::new(gw, e.sigma_sd)?,
            VoigtProfile::new(gw + two_kappa, e.sigma_sd)?,
        ));
    }
    // g → 0 keeps the free-space shape rather than collapsing to zero.
    let prefactor = if g > 0.0 { g * g } else { 1.0 };
    Ok(SampledCurve::from_fn(grid, |w| {
        prefactor
            * parts
                .iter()
                .map(|(center, a, r, v, vb)| a * (v.eval(w - center) + r * vb.eval(w - center)))
                .sum::<f64>()
    }))
}

/// Closed-form (dip − dip_fs)/dip_fs of the small-coupling envelope for a
/// symmetric doublet, with the maxima taken at ±Δ/2.
pub fn normalized_dip_approx(e: &EmitterParams, c: &CavityParams, g: f64) -> Result<f64> {
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if !same(e.a1, e.a2) || !same(e.gamma_star_1, e.gamma_star_2) {
        return Err(Error::Precondition(
            "normalized dip approximation needs a symmetric doublet (A₁ = A₂, γ*₁ = γ*₂)".into(),
        ));
    }
    let r = correction_ratio(e, c, g, Line::One);
    if r == 0.0 {
        return Ok(0.0);
    }
    let gw = rate_to_energy(e.instantaneous_linewidth(Line::One));
    let free = VoigtProfile::new(gw, e.sigma_sd)?;
    let broad = VoigtProfile::new(gw + rate_to_energy(2.0 * c.kappa), e.sigma_sd)?;
    let half = 0.5 * e.delta;
    let doublet = |v: &VoigtProfile, x: f64| v.eval(x - half) + v.eval(x + half);
    let (s0, sh) = (doublet(&free, 0.0), doublet(&free, half));
    let (c0, ch) = (doublet(&broad, 0.0), doublet(&broad, half));
    Ok(r * (c0 / s0 - ch / sh) / (1.0 + r * ch / sh))
}

/// Envelope dip metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipReport {
    /// Left maximum.
    pub max1: f64,
    /// Right maximum.
    pub max2: f64,
    pub min: f64,
    pub dip: f64,
    /// Present once [`DipReport::with_vibration_correction`] is applied.
    pub dip_corrected: Option<f64>,
    /// Positions of (left max, min, right max).
    pub extremum_positions: [f64; 3],
}

impl DipReport {
    pub fn with_vibration_correction(mut self, delta: f64, sigma_vib: f64) -> Result<Self> {
        self.dip_corrected = Some(dip_vibration_correction(self.dip, delta, sigma_vib)?);
        Ok(self)
    }
}

/// Half-width of the quadratic refinement window, in samples.
const REFINE_HALF_WINDOW: usize = 5;

/// Locates the two maxima of a doublet and the minimum between them, refining
/// each by a least-squares parabola over ±5 samples.
///
/// The first maximum is the global one; the second is the largest local
/// maximum at least `delta_hint/2` away from it.
pub fn dip_value(curve: &SampledCurve, delta_hint: f64) -> Result<DipReport> {
    let v = &curve.values;
    let n = v.len();
    if n < 5 {
        return Err(Error::NoDoublet("curve has fewer than five samples".into()));
    }
    let top = curve.argmax();
    let min_sep = (0.5 * delta_hint / curve.step).max(1.0);
    let mut second: Option<usize> = None;
    for i in 1..n - 1 {
        let is_peak = v[i] >= v[i - 1] && v[i] >= v[i + 1] && (v[i] > v[i - 1] || v[i] > v[i + 1]);
        if !is_peak || (i as f64 - top as f64).abs() < min_sep {
            continue;
        }
        if second.is_none_or(|s| v[i] > v[s]) {
            second = Some(i);
        }
    }
    let second = second.ok_or_else(|| Error::NoDoublet("only one maximum found".into()))?;
    let (left, right) = if top < second { (top, second) } else { (second, top) };
    let mut low = left + 1;
    for i in left + 1..right {
        if v[i] < v[low] {
            low = i;
        }
    }
    if !(v[low] < v[left] && v[low] < v[right]) {
        return Err(Error::NoDoublet("no minimum between the maxima".into()));
    }
    let (x1, m1) = refine_extremum(curve, left);
    let (xm, mm) = refine_extremum(curve, low);
    let (x2, m2) = refine_extremum(curve, right);
    Ok(DipReport {
        max1: m1,
        max2: m2,
        min: mm,
        dip: mm / (0.5 * (m1 + m2)),
        dip_corrected: None,
        extremum_positions: [x1, xm, x2],
    })
}

/// Vertex of the least-squares parabola through samples around `i`; falls
/// back to the sample itself when the vertex leaves the window.
fn refine_extremum(curve: &SampledCurve, i: usize) -> (f64, f64) {
    let n = curve.len();
    let lo = i.saturating_sub(REFINE_HALF_WINDOW);
    let hi = (i + REFINE_HALF_WINDOW).min(n - 1);
    let raw = (curve.axis(i), curve.values[i]);
    if hi - lo < 2 {
        return raw;
    }
    // Fit y = c0 + c1 t + c2 t² with t in sample units relative to i.
    let mut s = [0.0f64; 5];
    let mut r = [0.0f64; 3];
    for j in lo..=hi {
        let t = j as f64 - i as f64;
        let y = curve.values[j];
        let mut tp = 1.0;
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += tp;
            if k < 3 {
                r[k] += tp * y;
            }
            tp *= t;
        }
    }
    let m = nalgebra::Matrix3::new(s[0], s[1], s[2], s[1], s[2], s[3], s[2], s[3], s[4]);
    let Some(c) = m.lu().solve(&nalgebra::Vector3::new(r[0], r[1], r[2])) else {
        return raw;
    };
    if c[2] == 0.0 {
        return raw;
    }
    let t = -c[1] / (2.0 * c[2]);
    if t.abs() > REFINE_HALF_WINDOW as f64 || !t.is_finite() {
        return raw;
    }
    (curve.axis(i) + t * curve.step, c[0] + c[1] * t + c[2] * t * t)
}

/// Removes the vibration-induced envelope tilt between center and lines.
pub fn dip_vibration_correction(dip: f64, delta: f64, sigma_vib: f64) -> Result<f64> {
    if !(sigma_vib > 0.0) {
        return Err(Error::Domain(format!("sigma_vib must be > 0, got {sigma_vib}")));
    }
    let half = 0.5 * delta;
    Ok(dip * (-(half * half) / (2.0 * sigma_vib * sigma_vib)).exp())
}

/// Convenience: spectrum parameters of one line at explicit energies.
pub fn line_subsystem(e: &EmitterParams, c: &CavityParams, g: f64, line: Line, omega_x: f64, omega_a: f64) -> SubsystemParams {
    SubsystemParams {
        omega_x,
        omega_a,
        gamma: e.gamma,
        gamma_star: e.gamma_star(line),
        kappa: c.kappa,
        g,
    }
}

/// Roots of one line (rate units), exposed for diagnostics.
pub fn line_roots(p: &SubsystemParams) -> (Complex64, Complex64) {
    effective_rates(p)
}
