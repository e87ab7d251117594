//! Time-resolved photoluminescence models: detuning-dependent coupling rates
//! and efficiencies, instantaneous and detuning-averaged decays, cavity
//! storage and IRF convolutions, and the best single-exponential reduction.
//!
//! Times are in ns, rates in ns⁻¹, detunings in µeV.

use serde::{Deserialize, Serialize};

use crate::error::{check_nonnegative, check_positive, Error, Result};
use crate::lineshape::{convolve_uniform, SampledCurve, UniformGrid};
use crate::quadrature::{gauss_legendre, normal_rule};
use crate::quantities::{energy_to_rate, rate_to_energy, CavityParams, EmitterParams, Line};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayModelParams {
    pub emitter: EmitterParams,
    pub cavity: CavityParams,
    /// Coupling rate, ns⁻¹.
    pub g: f64,
    pub a_long: f64,
    pub gamma_long: f64,
    pub t0: f64,
    pub background: f64,
}

impl DecayModelParams {
    pub fn validate(&self) -> Result<()> {
        self.emitter.validate()?;
        self.cavity.validate()?;
        check_nonnegative("g", self.g)?;
        check_nonnegative("a_long", self.a_long)?;
        check_nonnegative("gamma_long", self.gamma_long)?;
        crate::error::check_finite("t0", self.t0)?;
        crate::error::check_finite("background", self.background)?;
        Ok(())
    }
}

/// Instrument response on a time axis (ns), with unit Riemann integral.
#[derive(Debug, Clone, PartialEq)]
pub struct IrfKernel {
    curve: SampledCurve,
}

impl IrfKernel {
    /// Accepts a nonnegative curve and rescales it to unit integral.
    pub fn new(curve: SampledCurve) -> Result<Self> {
        if curve.values.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidParameter {
                name: "irf",
                reason: "response must be nonnegative".into(),
            });
        }
        let total = curve.integral();
        if !(total > 0.0) {
            return Err(Error::Degenerate("instrument response has zero area".into()));
        }
        Ok(Self {
            curve: curve.scaled(1.0 / total),
        })
    }

    /// Preprocesses a measured histogram: subtracts the mean of bins more than
    /// 0.2 ns before the peak, clips at zero and normalizes.
    pub fn from_measured(raw: &SampledCurve) -> Result<Self> {
        let peak_t = raw.axis(raw.argmax());
        let pre: Vec<f64> = (0..raw.len())
            .filter(|&i| raw.axis(i) < peak_t - 0.2)
            .map(|i| raw.values[i])
            .collect();
        let offset = if pre.is_empty() {
            0.0
        } else {
            pre.iter().sum::<f64>() / pre.len() as f64
        };
        let cleaned = SampledCurve {
            start: raw.start,
            step: raw.step,
            values: raw.values.iter().map(|v| (v - offset).max(0.0)).collect(),
        };
        Self::new(cleaned)
    }

    /// Gaussian response of full width at half maximum `fwhm` centered at zero.
    pub fn gaussian(fwhm: f64, step: f64) -> Result<Self> {
        check_positive("fwhm", fwhm)?;
        check_positive("step", step)?;
        let sigma = fwhm / (2.0 * (2.0 * 2f64.ln()).sqrt());
        let half = (6.0 * sigma / step).ceil() as usize;
        let grid = UniformGrid::new(-(half as f64) * step, step, 2 * half + 1)?;
        Self::new(SampledCurve::from_fn(&grid, |t| crate::lineshape::gaussian(t, sigma)))
    }

    /// Single-bin impulse at `t = 0`.
    pub fn impulse(step: f64) -> Result<Self> {
        Self::new(SampledCurve::new(0.0, step, vec![1.0 / step])?)
    }

    pub fn curve(&self) -> &SampledCurve {
        &self.curve
    }

    /// The response on a different step, renormalized.
    pub fn with_step(&self, step: f64) -> Result<Self> {
        if ((step - self.curve.step) / step).abs() <= 1e-12 {
            return Ok(self.clone());
        }
        let c = &self.curve;
        let span = c.end() - c.start;
        let n = (span / step).floor() as usize + 1;
        Self::new(c.resample(&UniformGrid::new(c.start, step, n)?))
    }

    /// `IRF ⋆ curve`, resampled onto the curve's grid.
    pub fn convolve(&self, curve: &SampledCurve) -> Result<SampledCurve> {
        let k = self.with_step(curve.step)?;
        let full = convolve_uniform(curve, &k.curve)?;
        Ok(full.resample(&curve.grid()))
    }
}

/// Effective emitter–cavity coupling rate of one line at doublet–cavity
/// detuning `delta` (µeV).
pub fn coupling_rate_r(e: &EmitterParams, c: &CavityParams, g: f64, line: Line, delta: f64) -> f64 {
    let width = c.kappa + e.gamma + e.gamma_star(line);
    let x = energy_to_rate(delta + e.line_offset(line)) / (0.5 * width);
    4.0 * g * g / width / (1.0 + x * x)
}

/// Single-photon efficiency for coupling rate `r`.
pub fn efficiency_from_rate(r: f64, gamma: f64, kappa: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    if r.is_infinite() {
        return kappa / (gamma + kappa);
    }
    r * kappa / (gamma * kappa + r * (gamma + kappa))
}

pub fn efficiency_beta_delta(e: &EmitterParams, c: &CavityParams, g: f64, line: Line, delta: f64) -> f64 {
    efficiency_from_rate(coupling_rate_r(e, c, g, line, delta), e.gamma, c.kappa)
}

/// Exponential component `amplitude · exp(−rate (t − t0))` for t ≥ t0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayComponent {
    pub amplitude: f64,
    pub rate: f64,
}

/// Components of the short decay of `line` at unit line amplitude.
fn line_components(e: &EmitterParams, c: &CavityParams, g: f64, line: Line, delta: f64, weight: f64) -> DecayComponent {
    let r = coupling_rate_r(e, c, g, line, delta);
    let beta = efficiency_from_rate(r, e.gamma, c.kappa);
    DecayComponent {
        amplitude: weight * beta * (e.gamma + r),
        rate: e.gamma + r,
    }
}

/// Components at a fixed detuning, amplitudes including A₁ and A₂.
pub fn instantaneous_components(e: &EmitterParams, c: &CavityParams, g: f64, delta: f64) -> Vec<DecayComponent> {
    Line::BOTH
        .iter()
        .map(|&line| line_components(e, c, g, line, delta, e.amplitude(line)))
        .collect()
}

/// Detuning nodes and weights for the Gaussian average over
/// δ ~ N(ω̄_X − ω̄_a, σ_SD² + σ_vib²).
fn detuning_rule(e: &EmitterParams, c: &CavityParams) -> (Vec<f64>, Vec<f64>) {
    let sigma = (e.sigma_sd * e.sigma_sd + c.sigma_vib * c.sigma_vib).sqrt();
    let narrow = c.kappa + e.gamma + e.gamma_star_1.min(e.gamma_star_2);
    let (nodes, weights) = normal_rule(sigma, 0.31 * 0.5 * rate_to_energy(narrow));
    let center = e.omega_x_bar - c.omega_a_bar;
    (nodes.into_iter().map(|d| center + d).collect(), weights)
}

/// Per-line components of the detuning-averaged short decay at unit line amplitude.
pub fn averaged_line_components(e: &EmitterParams, c: &CavityParams, g: f64, line: Line) -> Vec<DecayComponent> {
    let (nodes, weights) = detuning_rule(e, c);
    nodes
        .iter()
        .zip(&weights)
        .map(|(&d, &w)| line_components(e, c, g, line, d, w))
        .collect()
}

/// Components of the detuning-averaged short decay, amplitudes including A₁, A₂.
pub fn averaged_components(e: &EmitterParams, c: &CavityParams, g: f64) -> Vec<DecayComponent> {
    let mut out = Vec::new();
    for line in Line::BOTH {
        let a = e.amplitude(line);
        out.extend(averaged_line_components(e, c, g, line).into_iter().map(|k| DecayComponent {
            amplitude: a * k.amplitude,
            rate: k.rate,
        }));
    }
    out
}

/// Point samples of Σ aₖ e^{−γₖ(t−t0)} for t ≥ t0, zero before.
pub fn sample_components(components: &[DecayComponent], t0: f64, grid: &UniformGrid) -> SampledCurve {
    SampledCurve::from_fn(grid, |t| {
        if t < t0 {
            return 0.0;
        }
        let tau = t - t0;
        components.iter().map(|k| k.amplitude * (-k.rate * tau).exp()).sum()
    })
}

pub fn decay_instantaneous(e: &EmitterParams, c: &CavityParams, g: f64, delta: f64, t0: f64, grid: &UniformGrid) -> SampledCurve {
    sample_components(&instantaneous_components(e, c, g, delta), t0, grid)
}

pub fn decay_detuning_averaged(e: &EmitterParams, c: &CavityParams, g: f64, t0: f64, grid: &UniformGrid) -> SampledCurve {
    sample_components(&averaged_components(e, c, g), t0, grid)
}

/// Unnormalized storage kernel `exp(−κ_s (t − t0))` for t ≥ t0 (peak 1, area 1/κ_s).
pub fn storage_kernel(c: &CavityParams, grid: &UniformGrid, t0: f64) -> SampledCurve {
    SampledCurve::from_fn(grid, |t| if t < t0 { 0.0 } else { (-c.storage_rate * (t - t0)).exp() })
}

/// `(1 − e^{−x})/x` with its limit 1 at x = 0, for x ≥ 0.
fn one_minus_exp_over_x(x: f64) -> f64 {
    if x < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

/// `∫₀^τ e^{−a s} e^{−b (τ−s)} ds`, symmetric in the two rates.
fn exp_convolution(a: f64, b: f64, tau: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    (-lo * tau).exp() * tau * one_minus_exp_over_x((hi - lo) * tau)
}

/// Storage-convolved components, sampled on the grid. The storage kernel
/// starts at zero delay, so the result is continuous at t0.
pub fn sample_stored_components(components: &[DecayComponent], storage_rate: f64, t0: f64, grid: &UniformGrid) -> SampledCurve {
    SampledCurve::from_fn(grid, |t| {
        if t <= t0 {
            return 0.0;
        }
        let tau = t - t0;
        components
            .iter()
            .map(|k| k.amplitude * exp_convolution(k.rate, storage_rate, tau))
            .sum()
    })
}

/// Gauss–Legendre order per bin in [`bin_stored_components`]; exact to
/// ~1e-12 while rate·step stays below 1.
const BIN_NODES: usize = 6;

/// Storage-convolved components averaged over each histogram bin
/// `[t − h/2, t + h/2]`. Unlike point sampling, the result is C¹ in t0, so
/// fits whose onset lands on a bin centre do not stall on a kink.
pub fn bin_stored_components(components: &[DecayComponent], storage_rate: f64, t0: f64, grid: &UniformGrid) -> SampledCurve {
    let (x, w) = gauss_legendre(BIN_NODES);
    let h = grid.step;
    SampledCurve::from_fn(grid, |t| {
        let (lo, hi) = ((t - 0.5 * h).max(t0), t + 0.5 * h);
        if hi <= lo {
            return 0.0;
        }
        let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        let integral: f64 = x
            .iter()
            .zip(&w)
            .map(|(xi, wi)| {
                let tau = c + r * xi - t0;
                wi * components
                    .iter()
                    .map(|k| k.amplitude * exp_convolution(k.rate, storage_rate, tau))
                    .sum::<f64>()
            })
            .sum();
        integral * r / h
    })
}

/// Free-space decay: mono- or multi-exponential with lifetimes in ns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeSpaceDecay {
    /// (amplitude, lifetime τ in ns) pairs.
    pub components: Vec<(f64, f64)>,
    pub t0: f64,
    pub background: f64,
}

/// Exponential sampled on the grid; the cell containing t0 is weighted by the
/// fraction of it lying after t0 so the curve is continuous in t0.
pub fn sample_exponential_onset(rate: f64, t0: f64, grid: &UniformGrid) -> SampledCurve {
    let h = grid.step;
    SampledCurve::from_fn(grid, |t| {
        let frac = ((t + 0.5 * h - t0) / h).clamp(0.0, 1.0);
        if frac == 0.0 {
            0.0
        } else {
            frac * (-rate * (t - t0).max(0.0)).exp()
        }
    })
}

pub fn decay_model_freespace(model: &FreeSpaceDecay, irf: &IrfKernel, grid: &UniformGrid) -> Result<SampledCurve> {
    let mut pre = SampledCurve::zeros(grid);
    for &(a, tau) in &model.components {
        check_positive("tau", tau)?;
        let s = sample_exponential_onset(1.0 / tau, model.t0, grid);
        pre.values.iter_mut().zip(&s.values).for_each(|(p, v)| *p += a * v);
    }
    let mut out = irf.convolve(&pre)?;
    out.values.iter_mut().for_each(|v| *v += model.background);
    Ok(out)
}

/// A₁τ₁ / (A₁τ₁ + A₂τ₂).
pub fn intensity_ratio(a1: f64, tau1: f64, a2: f64, tau2: f64) -> f64 {
    let (i1, i2) = (a1 * tau1, a2 * tau2);
    i1 / (i1 + i2)
}

/// Unit-amplitude basis curves `[line 1, line 2, long]` of the cavity decay,
/// each passed through storage and the IRF.
pub fn cavity_decay_basis(
    e: &EmitterParams,
    c: &CavityParams,
    g: f64,
    gamma_long: f64,
    t0: f64,
    irf: &IrfKernel,
    grid: &UniformGrid,
) -> Result<[SampledCurve; 3]> {
    let stored = |comps: &[DecayComponent]| irf.convolve(&bin_stored_components(comps, c.storage_rate, t0, grid));
    let l1 = stored(&averaged_line_components(e, c, g, Line::One))?;
    let l2 = stored(&averaged_line_components(e, c, g, Line::Two))?;
    let long = stored(&[DecayComponent {
        amplitude: 1.0,
        rate: gamma_long,
    }])?;
    Ok([l1, l2, long])
}

/// background + IRF ⋆ storage ⋆ (averaged short decay + long component).
pub fn decay_model_cavity(params: &DecayModelParams, irf: &IrfKernel, grid: &UniformGrid) -> Result<SampledCurve> {
    params.validate()?;
    let e = &params.emitter;
    let [l1, l2, long] = cavity_decay_basis(e, &params.cavity, params.g, params.gamma_long, params.t0, irf, grid)?;
    let values = (0..grid.len)
        .map(|i| params.background + e.a1 * l1.values[i] + e.a2 * l2.values[i] + params.a_long * long.values[i])
        .collect();
    SampledCurve::new(grid.start, grid.step, values)
}

/// Default time grid: 4 ps step over [t0 − 0.5 ns, t0 + 5 ns].
pub fn default_time_grid(t0: f64) -> UniformGrid {
    UniformGrid {
        start: t0 - 0.5,
        step: 0.004,
        len: 1376,
    }
}

/// Best single exponential `C e^{−γt}` in the continuous least-squares sense
/// over t ≥ 0.
///
/// Eliminating C leaves Σ Cₖ(γ − γₖ)/(γ + γₖ)² = 0, whose roots lie between
/// the smallest and largest rate. Each sign change on a log scan is bisected;
/// the root with the lowest residual wins.
pub fn effective_single_exponential(components: &[DecayComponent]) -> Result<(f64, f64)> {
    let comps: Vec<&DecayComponent> = components.iter().filter(|k| k.amplitude != 0.0).collect();
    if comps.is_empty() {
        return Err(Error::Domain("no component with nonzero amplitude".into()));
    }
    for k in &comps {
        check_positive("rate", k.rate)?;
        check_nonnegative("amplitude", k.amplitude)?;
    }
    let lo = comps.iter().map(|k| k.rate).fold(f64::INFINITY, f64::min);
    let hi = comps.iter().map(|k| k.rate).fold(0.0, f64::max);
    let c_of = |g: f64| 2.0 * g * comps.iter().map(|k| k.amplitude / (g + k.rate)).sum::<f64>();
    if hi - lo <= 1e-14 * hi {
        let g = comps.iter().map(|k| k.amplitude * k.rate).sum::<f64>() / comps.iter().map(|k| k.amplitude).sum::<f64>();
        return Ok((c_of(g), g));
    }
    let h = |g: f64| {
        comps
            .iter()
            .map(|k| k.amplitude * (g - k.rate) / ((g + k.rate) * (g + k.rate)))
            .sum::<f64>()
    };
    let score = |g: f64| {
        let s: f64 = comps.iter().map(|k| k.amplitude / (g + k.rate)).sum();
        g * s * s
    };
    const SCAN: usize = 200;
    let ratio = (hi / lo).ln();
    let at = |i: usize| lo * (ratio * i as f64 / SCAN as f64).exp();
    let mut best: Option<(f64, f64)> = None;
    let mut prev = (lo, h(lo));
    for i in 1..=SCAN {
        let x = if i == SCAN { hi } else { at(i) };
        let hx = h(x);
        if prev.1 == 0.0 || prev.1.signum() != hx.signum() {
            let root = if prev.1 == 0.0 { prev.0 } else { bisect(&h, prev.0, x, prev.1) };
            let s = score(root);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((root, s));
            }
        }
        prev = (x, hx);
    }
    if prev.1 == 0.0 {
        let s = score(prev.0);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((prev.0, s));
        }
    }
    match best {
        Some((g, _)) => Ok((c_of(g), g)),
        None => Err(Error::NonConvergence {
            iterations: SCAN,
            last: hi,
        }),
    }
}

fn bisect(h: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut ha: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let hm = h(m);
        if hm == 0.0 {
            return m;
        }
        if hm.signum() == ha.signum() {
            a = m;
            ha = hm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Amplitude-weighted mean rate and total amplitude (small-spread limit).
pub fn weighted_mean_rate(components: &[DecayComponent]) -> (f64, f64) {
    let total: f64 = components.iter().map(|k| k.amplitude).sum();
    let mean = components.iter().map(|k| k.amplitude * k.rate).sum::<f64>() / total;
    (total, mean)
}

/// Cavity-induced rate averaged over a flat detuning distribution, 2g²/(κ+γ*).
pub fn effective_rate_large_modulation(g: f64, kappa: f64, gamma_star: f64) -> f64 {
    2.0 * g * g / (kappa + gamma_star)
}
