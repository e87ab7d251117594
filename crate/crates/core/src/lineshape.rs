//! Unit-area lineshapes, the Voigt profile and a uniform-grid convolution
//! engine shared by the spectral and temporal models.
//!
//! Curves carry no units. Energy-domain callers use µeV, time-domain callers ns.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_nonnegative, check_positive, Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Uniform axis description: `start + i * step` for `i < len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformGrid {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        check_finite("start", start)?;
        check_positive("step", step)?;
        if len == 0 {
            return Err(Error::InvalidParameter {
                name: "len",
                reason: "grid must have at least one point".into(),
            });
        }
        Ok(Self { start, step, len })
    }

    /// Grid covering `[lo, hi]` with spacing at most `max_step`.
    pub fn spanning(lo: f64, hi: f64, max_step: f64) -> Result<Self> {
        check_finite("lo", lo)?;
        check_finite("hi", hi)?;
        check_positive("max_step", max_step)?;
        if hi <= lo {
            return Err(Error::Domain(format!("empty span [{lo}, {hi}]")));
        }
        let intervals = ((hi - lo) / max_step).ceil().max(1.0) as usize;
        Self::new(lo, (hi - lo) / intervals as f64, intervals + 1)
    }

    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.at(i)).collect()
    }

    pub fn end(&self) -> f64 {
        self.at(self.len - 1)
    }
}

/// Values on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledCurve {
    pub start: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl SampledCurve {
    pub fn new(start: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        check_finite("start", start)?;
        check_positive("step", step)?;
        if values.is_empty() {
            return Err(Error::InvalidParameter {
                name: "values",
                reason: "curve must be non-empty".into(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "values",
                reason: format!("non-finite sample {bad}"),
            });
        }
        Ok(Self { start, step, values })
    }

    /// Samples `f` on `grid`.
    pub fn from_fn(grid: &UniformGrid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            start: grid.start,
            step: grid.step,
            values: (0..grid.len).map(|i| f(grid.at(i))).collect(),
        }
    }

    pub fn zeros(grid: &UniformGrid) -> Self {
        Self {
            start: grid.start,
            step: grid.step,
            values: vec![0.0; grid.len],
        }
    }

    pub fn grid(&self) -> UniformGrid {
        UniformGrid {
            start: self.start,
            step: self.step,
            len: self.values.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn axis(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn axis_values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.axis(i)).collect()
    }

    pub fn end(&self) -> f64 {
        self.axis(self.len() - 1)
    }

    /// Riemann sum `step * Σ values`. Exact bookkeeping under
    /// [`convolve_uniform`]: the output integral is the product of the input integrals.
    pub fn integral(&self) -> f64 {
        self.step * self.values.iter().sum::<f64>()
    }

    pub fn trapezoid(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        self.step * (self.values.iter().sum::<f64>() - 0.5 * (self.values[0] + self.values[n - 1]))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            start: self.start,
            step: self.step,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Multiplies the axis by `factor` (> 0), e.g. ps → ns. Values are unchanged.
    pub fn rescale_axis(&self, factor: f64) -> Self {
        Self {
            start: self.start * factor,
            step: self.step * factor,
            values: self.values.clone(),
        }
    }

    /// Linear interpolation; zero outside the sampled range.
    pub fn interp(&self, x: f64) -> f64 {
        let pos = (x - self.start) / self.step;
        let last = (self.len() - 1) as f64;
        if !(pos >= 0.0 && pos <= last) {
            if (pos - last).abs() < 1e-9 {
                return self.values[self.len() - 1];
            }
            return 0.0;
        }
        let i = pos.floor() as usize;
        if i + 1 >= self.len() {
            return self.values[self.len() - 1];
        }
        let frac = pos - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    pub fn resample(&self, grid: &UniformGrid) -> Self {
        Self::from_fn(grid, |x| self.interp(x))
    }

    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let pairs = read_pairs_csv(path)?;
        curve_from_pairs(&pairs)
    }

    pub fn to_csv(&self, path: impl AsRef<Path>, header: (&str, &str)) -> Result<()> {
        let rows: Vec<(f64, f64)> = (0..self.len()).map(|i| (self.axis(i), self.values[i])).collect();
        write_pairs_csv(path, header, &rows)
    }
}

/// Reads a two-column CSV; a first line that does not parse as numbers is
/// treated as a header.
pub fn read_pairs_csv(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: display.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("{display}: {e}")))?;
        if record.len() < 2 {
            return Err(Error::Parse(format!("{display}: row {} has fewer than two columns", row + 1)));
        }
        let x = record[0].parse::<f64>();
        let y = record[1].parse::<f64>();
        match (x, y) {
            (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => out.push((x, y)),
            _ if row == 0 => continue,
            _ => {
                return Err(Error::Parse(format!(
                    "{display}: row {} is not a pair of finite numbers",
                    row + 1
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Parse(format!("{display}: no data rows")));
    }
    Ok(out)
}

pub fn write_pairs_csv(path: impl AsRef<Path>, header: (&str, &str), rows: &[(f64, f64)]) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e: csv::Error| Error::Parse(format!("{}: {e}", path.display()));
    let mut writer = csv::Writer::from_path(path).map_err(io_err)?;
    writer.write_record([header.0, header.1]).map_err(io_err)?;
    for (x, y) in rows {
        writer
            .write_record([format!("{x}"), format!("{y}")])
            .map_err(io_err)?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Builds a curve from (axis, value) rows that must be uniformly spaced.
pub fn curve_from_pairs(pairs: &[(f64, f64)]) -> Result<SampledCurve> {
    if pairs.len() < 2 {
        return Err(Error::Parse("a curve needs at least two rows".into()));
    }
    let n = pairs.len();
    let x0 = pairs[0].0;
    let step = (pairs[n - 1].0 - x0) / (n - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::Parse("axis must be strictly increasing".into()));
    }
    for (i, (x, _)) in pairs.iter().enumerate() {
        if (x - (x0 + i as f64 * step)).abs() > 1e-5 * step {
            return Err(Error::Parse(format!("axis is not uniform at row {}", i + 1)));
        }
    }
    SampledCurve::new(x0, step, pairs.iter().map(|p| p.1).collect())
}

/// Unit-area Lorentzian of full width `gamma_w` centered at zero.
#[inline]
pub fn lorentzian(x: f64, gamma_w: f64) -> f64 {
    let hw = 0.5 * gamma_w;
    hw / (PI * (x * x + hw * hw))
}

/// Unit-area Gaussian of standard deviation `sigma` centered at zero.
#[inline]
pub fn gaussian(x: f64, sigma: f64) -> f64 {
    let u = x / sigma;
    (-0.5 * u * u).exp() / (SQRT_2PI * sigma)
}

pub fn lorentzian_eval(omega: f64, gamma_w: f64, omega0: f64) -> Result<f64> {
    check_positive("gamma_w", gamma_w)
        .map_err(|_| Error::Domain(format!("Lorentzian width must be > 0, got {gamma_w}")))?;
    Ok(lorentzian(omega - omega0, gamma_w))
}

pub fn gaussian_eval(omega: f64, sigma: f64, omega0: f64) -> Result<f64> {
    check_positive("sigma", sigma)
        .map_err(|_| Error::Domain(format!("Gaussian width must be > 0, got {sigma}")))?;
    Ok(gaussian(omega - omega0, sigma))
}

pub fn voigt_eval(omega: f64, gamma_w: f64, sigma: f64, omega0: f64) -> Result<f64> {
    Ok(VoigtProfile::new(gamma_w, sigma)?.eval(omega - omega0))
}

/// Gaussian half-extent of the convolution grid, in standard deviations.
const VOIGT_EXTENT_SIGMAS: f64 = 10.0;
/// Node budget before switching to cell-averaged Lorentzian sampling.
const VOIGT_MAX_NODES: usize = 4001;

#[derive(Debug, Clone)]
enum VoigtMode {
    Lorentzian,
    /// `Σ w_j L(x − u_j)`.
    Sampled,
    /// `Σ w_j ⟨L⟩_cell(x − u_j)`, used when the Lorentzian is narrower than the grid step.
    CellAveraged { h: f64 },
}

/// Lorentzian ⋆ Gaussian, evaluated as a grid convolution over the Gaussian
/// variable. Reusable for many abscissae.
///
/// The grid step is fine enough to resolve both factors, so the discrete sum
/// converges geometrically. Weights are renormalized so the profile keeps unit
/// area exactly.
#[derive(Debug, Clone)]
pub struct VoigtProfile {
    gamma_w: f64,
    sigma: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    mode: VoigtMode,
}

impl VoigtProfile {
    pub fn new(gamma_w: f64, sigma: f64) -> Result<Self> {
        check_positive("gamma_w", gamma_w)
            .map_err(|_| Error::Domain(format!("Lorentzian width must be > 0, got {gamma_w}")))?;
        check_nonnegative("sigma", sigma)
            .map_err(|_| Error::Domain(format!("Gaussian width must be >= 0, got {sigma}")))?;
        if sigma == 0.0 {
            return Ok(Self {
                gamma_w,
                sigma,
                nodes: Vec::new(),
                weights: Vec::new(),
                mode: VoigtMode::Lorentzian,
            });
        }
        let extent = VOIGT_EXTENT_SIGMAS * sigma;
        let ideal = (gamma_w / 8.0).min(0.5 * sigma);
        let half_nodes = (extent / ideal).ceil() as usize;
        let (half_nodes, mode) = if 2 * half_nodes < VOIGT_MAX_NODES {
            (half_nodes, VoigtMode::Sampled)
        } else {
            let m = (VOIGT_MAX_NODES - 1) / 2;
            (m, VoigtMode::CellAveraged { h: extent / m as f64 })
        };
        let h = extent / half_nodes as f64;
        let nodes: Vec<f64> = (0..=2 * half_nodes)
            .map(|j| (j as f64 - half_nodes as f64) * h)
            .collect();
        let mut weights: Vec<f64> = nodes.iter().map(|&u| gaussian(u, sigma)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self {
            gamma_w,
            sigma,
            nodes,
            weights,
            mode,
        })
    }

    pub fn gamma_w(&self) -> f64 {
        self.gamma_w
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Density at offset `x` from the center.
    pub fn eval(&self, x: f64) -> f64 {
        match self.mode {
            VoigtMode::Lorentzian => lorentzian(x, self.gamma_w),
            VoigtMode::Sampled => self
                .nodes
                .iter()
                .zip(&self.weights)
                .map(|(u, w)| w * lorentzian(x - u, self.gamma_w))
                .sum(),
            VoigtMode::CellAveraged { h } => {
                let hw = 0.5 * self.gamma_w;
                self.nodes
                    .iter()
                    .zip(&self.weights)
                    .map(|(u, w)| {
                        let d = x - u;
                        let span = ((d + 0.5 * h) / hw).atan() - ((d - 0.5 * h) / hw).atan();
                        w * span / (PI * h)
                    })
                    .sum()
            }
        }
    }
}

/// Kernels shorter than this are convolved by direct summation.
const DIRECT_CONVOLUTION_LIMIT: usize = 512;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Discrete linear convolution scaled by the step. Output starts at
/// `a.start + b.start` and has `a.len() + b.len() - 1` samples.
pub fn convolve_uniform(a: &SampledCurve, b: &SampledCurve) -> Result<SampledCurve> {
    if ((a.step - b.step) / a.step).abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "convolution needs equal steps, got {} and {}",
            a.step, b.step
        )));
    }
    let values = if a.len().min(b.len()) < DIRECT_CONVOLUTION_LIMIT {
        convolve_direct(&a.values, &b.values)
    } else {
        convolve_fft(&a.values, &b.values)
    };
    Ok(SampledCurve {
        start: a.start + b.start,
        step: a.step,
        values: values.into_iter().map(|v| v * a.step).collect(),
    })
}

pub(crate) fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let n = long.len() + short.len() - 1;
    let mut out = vec![0.0; n];
    for (j, &s) in short.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        for (o, &l) in out[j..j + long.len()].iter_mut().zip(long) {
            *o += s * l;
        }
    }
    out
}

pub(crate) fn convolve_fft(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len() + b.len() - 1;
    let m = n.next_power_of_two();
    let (fwd, inv) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(m), p.plan_fft_inverse(m))
    });
    let mut fa: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fa.resize(m, Complex64::new(0.0, 0.0));
    let mut fb: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fb.resize(m, Complex64::new(0.0, 0.0));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / m as f64;
    fa[..n].iter().map(|c| c.re * scale).collect()
}
