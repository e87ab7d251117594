//! Independent numerical references: adaptive Gauss–Kronrod quadrature,
//! Gauss–Hermite rules, a brute-force single-exponential minimizer and seeded
//! Poisson data. None of these share kernels with the model modules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lineshape::SampledCurve;
use crate::quantities::HBAR_UEV_NS;
use crate::spectrum::SubsystemParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum QuadratureMethod {
    Adaptive,
    GaussHermite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub method: QuadratureMethod,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Subdivision budget (adaptive) or node count (Gauss–Hermite).
    pub budget: usize,
}

impl QuadratureSpec {
    pub fn adaptive(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Self {
        Self {
            method: QuadratureMethod::Adaptive,
            abs_tol,
            rel_tol,
            budget: max_subdivisions,
        }
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self::adaptive(1e-300, 1e-12, 2000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    /// False when the subdivision budget ran out before the tolerance was met.
    pub certified: bool,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    let mut vals = [0.0; 15];
    vals[7] = fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let (f1, f2) = (f(c - x), f(c + x));
        vals[j] = f1;
        vals[14 - j] = f2;
        k += WGK[j] * (f1 + f2);
        abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * k;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((vals[j] - mean).abs() + (vals[14 - j] - mean).abs());
    }
    let (k, abs, asc) = (k * h, abs * h.abs(), asc * h.abs());
    let mut err = (k - g * h).abs();
    if asc != 0.0 && err != 0.0 {
        err = asc * (1.0f64).min((200.0 * err / asc).powf(1.5));
    }
    if abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * abs);
    }
    Segment { a, b, value: k, error: err }
}

/// Globally adaptive Gauss–Kronrod 7/15 quadrature. Infinite limits are
/// mapped onto finite ones with `x = t/(1−t²)` or `x = a ± t/(1−t)`.
pub fn quad_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, spec: &QuadratureSpec) -> QuadResult {
    match (a.is_finite(), b.is_finite()) {
        (true, true) => gk_adaptive(&f, a, b, spec),
        (false, false) => gk_adaptive(
            &|t: f64| {
                let d = 1.0 - t * t;
                f(t / d) * (1.0 + t * t) / (d * d)
            },
            -1.0,
            1.0,
            spec,
        ),
        (true, false) => gk_adaptive(
            &|t: f64| {
                let d = 1.0 - t;
                f(a + t / d) / (d * d)
            },
            0.0,
            1.0,
            spec,
        ),
        (false, true) => gk_adaptive(
            &|t: f64| {
                let d = 1.0 - t;
                f(b - t / d) / (d * d)
            },
            0.0,
            1.0,
            spec,
        ),
    }
}

fn gk_adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, spec: &QuadratureSpec) -> QuadResult {
    let mut heap = BinaryHeap::new();
    let first = kronrod15(f, a, b);
    let (mut value, mut error) = (first.value, first.error);
    heap.push(first);
    let mut splits = 0;
    loop {
        if error <= spec.abs_tol.max(spec.rel_tol * value.abs()) {
            return QuadResult { value, error, certified: true };
        }
        if splits >= spec.budget {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            heap.push(worst);
            break;
        }
        let (l, r) = (kronrod15(f, worst.a, m), kronrod15(f, m, worst.b));
        value += l.value + r.value - worst.value;
        error += l.error + r.error - worst.error;
        heap.push(l);
        heap.push(r);
        splits += 1;
    }
    // Re-sum to shed drift from the running updates.
    let value = heap.iter().map(|s| s.value).sum::<f64>();
    let error = heap.iter().map(|s| s.error).sum::<f64>();
    QuadResult {
        value,
        error,
        certified: error <= spec.abs_tol.max(spec.rel_tol * value.abs()),
    }
}

/// Nodes and weights for `∫ e^{−x²} f(x) dx`, exact for polynomials of degree
/// below `2·order`. Newton iteration on the orthonormal Hermite recurrence.
pub fn gauss_hermite_nodes(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return Err(Error::InvalidParameter {
            name: "order",
            reason: "order must be >= 1".into(),
        });
    }
    let n = order;
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / j as f64).sqrt() * p2 - ((j - 1) as f64 / j as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    x.reverse();
    w.reverse();
    Ok((x, w))
}

/// Roots of `(ω − ω_X − iΓ/2)(ω − ω_a − iκ/2) = g²` by the quadratic
/// formula, in rate units.
pub fn oracle_roots(p: &SubsystemParams) -> (Complex64, Complex64) {
    let a = Complex64::new(p.omega_x / HBAR_UEV_NS, 0.5 * (p.gamma + p.gamma_star));
    let b = Complex64::new(p.omega_a / HBAR_UEV_NS, 0.5 * p.kappa);
    let disc = ((a - b) * (a - b) + 4.0 * p.g * p.g).sqrt();
    (0.5 * (a + b + disc), 0.5 * (a + b - disc))
}

/// Spectrum per unit rate at angular frequency `w`, assembled from
/// [`oracle_roots`] and a separate evaluation of the efficiency and the
/// normalization integral.
pub fn oracle_spectrum_rate(p: &SubsystemParams, w: f64) -> f64 {
    if p.g == 0.0 {
        return 0.0;
    }
    let (r1, r2) = oracle_roots(p);
    let total = p.gamma + p.gamma_star + p.kappa;
    let det = (p.omega_x - p.omega_a) / HBAR_UEV_NS;
    let lorentz = 1.0 + (2.0 * det / total).powi(2);
    let beta = 4.0 * p.g * p.g / (4.0 * p.g * p.g * (1.0 + p.gamma / p.kappa) + p.gamma * total * lorentz);
    let integral = 2.0 * std::f64::consts::PI
        / (total * (p.g * p.g + 0.25 * (p.gamma + p.gamma_star) * p.kappa * lorentz));
    beta / integral / ((w - r1).norm_sqr() * (w - r2).norm_sqr())
}

/// `∫₀^∞ (Σ Cₖe^{−γₖt} − C e^{−γt})² dt` from the pairwise closed forms.
fn single_exponential_residual(components: &[(f64, f64)], c: f64, g: f64) -> f64 {
    let mut s = 0.0;
    for &(ci, gi) in components {
        for &(cj, gj) in components {
            s += ci * cj / (gi + gj);
        }
        s -= 2.0 * c * ci / (g + gi);
    }
    s + c * c / (2.0 * g)
}

/// Brute-force best single exponential: a 2-D grid over (C, γ) followed by a
/// shrinking pattern search. `components` holds (amplitude, rate) pairs.
pub fn oracle_best_single_exponential(components: &[(f64, f64)]) -> (f64, f64) {
    if components.len() == 1 {
        return components[0];
    }
    let g_lo = components.iter().map(|c| c.1).fold(f64::INFINITY, f64::min) * 0.5;
    let g_hi = components.iter().map(|c| c.1).fold(0.0, f64::max) * 2.0;
    let c_hi = 2.0 * components.iter().map(|c| c.0).sum::<f64>();
    let n = 240;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=n {
        let g = g_lo * (g_hi / g_lo).powf(i as f64 / n as f64);
        for j in 1..=n {
            let c = c_hi * j as f64 / n as f64;
            let r = single_exponential_residual(components, c, g);
            if r < best.0 {
                best = (r, c, g);
            }
        }
    }
    let (mut r, mut c, mut g) = best;
    let (mut dc, mut dg) = (c_hi / n as f64, g * ((g_hi / g_lo).ln() / n as f64));
    for _ in 0..4000 {
        let mut moved = false;
        for (sc, sg) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
            let (cc, gg) = (c + sc * dc, g + sg * dg);
            if gg <= 0.0 {
                continue;
            }
            let rr = single_exponential_residual(components, cc, gg);
            if rr < r {
                (r, c, g) = (rr, cc, gg);
                moved = true;
            }
        }
        if !moved {
            dc *= 0.5;
            dg *= 0.5;
            if dc < 1e-14 * c.abs().max(1e-300) && dg < 1e-14 * g {
                break;
            }
        }
    }
    (c, g)
}

/// Poisson counts with expectation proportional to `model`, summing in
/// expectation to `total_counts`. Deterministic per seed.
pub fn synth_generate(model: &SampledCurve, total_counts: f64, seed: u64) -> Result<SampledCurve> {
    if model.values.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidParameter {
            name: "model",
            reason: "expected counts must be nonnegative".into(),
        });
    }
    let sum: f64 = model.values.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::Degenerate("model has zero total".into()));
    }
    let scale = total_counts / sum;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = model
        .values
        .iter()
        .map(|&m| {
            let lambda = m * scale;
            if lambda <= 0.0 {
                0.0
            } else {
                Poisson::new(lambda).map(|p| p.sample(&mut rng)).unwrap_or(lambda)
            }
        })
        .collect();
    SampledCurve::new(model.start, model.step, values)
}

/// Expected counts per bin used by [`synth_generate`].
pub fn synth_expectation(model: &SampledCurve, total_counts: f64) -> SampledCurve {
    let sum: f64 = model.values.iter().sum();
    model.scaled(total_counts / sum)
}

pub mod verify {
    //! Oracle cross-checks of every closed form, bundled as a report.

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use serde::{Deserialize, Serialize};

    use super::*;
    use crate::dynamics::{averaged_components, effective_single_exponential, DecayComponent};
    use crate::envelope::marginal_exact;
    use crate::quantities::{CavityParams, EmitterParams, Line};
    use crate::spectrum::{density_integral, SubsystemParams};

    #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
    #[serde(default)]
    pub struct VerifyOptions {
        pub seed: u64,
        pub draws: usize,
        /// Relative error injected into every closed form under test.
        pub perturbation: f64,
    }

    impl Default for VerifyOptions {
        fn default() -> Self {
            Self {
                seed: 7,
                draws: 20,
                perturbation: 0.0,
            }
        }
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct CheckResult {
        pub name: String,
        pub worst_relative_error: f64,
        pub tolerance: f64,
        pub pass: bool,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct VerifyReport {
        pub schema_version: u32,
        pub checks: Vec<CheckResult>,
        pub all_pass: bool,
    }

    fn check(name: &str, errors: impl IntoIterator<Item = f64>, tolerance: f64) -> CheckResult {
        let worst = errors.into_iter().fold(0.0f64, |a, e| if e.is_nan() { f64::INFINITY } else { a.max(e) });
        CheckResult {
            name: name.into(),
            worst_relative_error: worst,
            tolerance,
            pass: worst <= tolerance,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    /// Draws spanning weak and strong coupling (rates in ns⁻¹, energies in µeV).
    pub fn random_subsystem(rng: &mut ChaCha8Rng) -> SubsystemParams {
        let gamma = 10f64.powf(rng.random_range(-1.0..1.5));
        let gamma_star = 10f64.powf(rng.random_range(-1.0..2.7));
        let kappa = 10f64.powf(rng.random_range(0.0..2.7));
        let g = 10f64.powf(rng.random_range(-1.0..2.7));
        let detuning = rng.random_range(-300.0..300.0);
        SubsystemParams {
            omega_x: detuning,
            omega_a: 0.0,
            gamma,
            gamma_star,
            kappa,
            g,
        }
    }

    pub fn run(opts: &VerifyOptions) -> VerifyReport {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let bump = 1.0 + opts.perturbation;
        let spec = QuadratureSpec::adaptive(1e-300, 1e-12, 4000);
        let draws: Vec<SubsystemParams> = (0..opts.draws).map(|_| random_subsystem(&mut rng)).collect();
        let mut checks = Vec::new();

        checks.push(check(
            "spectrum_normalization_vs_quadrature",
            draws.iter().map(|p| {
                let (x, a) = oracle_roots(p);
                let q = quad_adaptive(
                    |w| 1.0 / ((w - x).norm_sqr() * (w - a).norm_sqr()),
                    f64::NEG_INFINITY,
                    f64::INFINITY,
                    &spec,
                );
                rel(density_integral(p) * bump, q.value)
            }),
            1e-8,
        ));

        checks.push(check(
            "marginal_decomposition_vs_quadrature",
            draws.iter().take(opts.draws.min(10)).flat_map(|p| {
                let m = marginal_exact(p).expect("draws have dephasing and coupling");
                [0.0, 37.0].map(|omega| {
                    let w = crate::quantities::energy_to_rate(omega);
                    let q = quad_adaptive(
                        |wa| {
                            let s = SubsystemParams {
                                omega_a: wa * HBAR_UEV_NS,
                                ..*p
                            };
                            oracle_spectrum_rate(&s, w)
                        },
                        f64::NEG_INFINITY,
                        f64::INFINITY,
                        &QuadratureSpec::adaptive(1e-300, 1e-10, 4000),
                    );
                    rel(m.eval(omega) * bump, q.value)
                })
            }),
            1e-6,
        ));

        checks.push(check(
            "gauss_hermite_moments",
            [5usize, 20, 41].into_iter().map(|n| {
                let (x, w) = gauss_hermite_nodes(n).expect("order >= 1");
                let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
                rel(m2 * bump, std::f64::consts::PI.sqrt() / 2.0)
            }),
            1e-12,
        ));

        checks.push(check(
            "best_single_exponential_vs_brute_force",
            (0..opts.draws.min(10)).map(|_| {
                let comps = [
                    (rng.random_range(0.1..3.0), rng.random_range(1.0..10.0)),
                    (rng.random_range(0.1..3.0), rng.random_range(1.0..10.0)),
                ];
                let dc: Vec<DecayComponent> = comps
                    .iter()
                    .map(|&(amplitude, rate)| DecayComponent { amplitude, rate })
                    .collect();
                let (_, g) = effective_single_exponential(&dc).expect("positive rates");
                let (_, go) = oracle_best_single_exponential(&comps);
                rel(g * bump, go)
            }),
            1e-2,
        ));

        let e = EmitterParams::new(0.0, 700.0, 8.26, 372.0, 372.0, 70.0, 1.0, 0.8).expect("valid");
        let c = CavityParams::new(0.0, 167.0, 679.4, 14).expect("valid");
        let g = 60.0;
        checks.push(check(
            "detuning_average_fubini",
            [{
                let comps = averaged_components(&e, &c, g);
                let time_integral: f64 = comps.iter().map(|k| k.amplitude / k.rate).sum();
                let sigma = (e.sigma_sd.powi(2) + c.sigma_vib.powi(2)).sqrt();
                let q = quad_adaptive(
                    |d| {
                        let w = (-0.5 * (d / sigma).powi(2)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                        w * Line::BOTH
                            .iter()
                            .map(|&l| e.amplitude(l) * crate::dynamics::efficiency_beta_delta(&e, &c, g, l, d))
                            .sum::<f64>()
                    },
                    f64::NEG_INFINITY,
                    f64::INFINITY,
                    &spec,
                );
                rel(time_integral * bump, q.value)
            }],
            1e-4,
        ));

        let kappa: f64 = 200.0;
        let gamma = kappa / 100.0;
        let gs = 50.0;
        // R_eff = 0.1γ: the limit needs a small spread of rates around γ.
        let g = (0.1 * gamma * (kappa + gs) / 2.0).sqrt();
        let width = crate::quantities::rate_to_energy(kappa + gamma + gs);
        let e = EmitterParams::new(0.0, 0.0, gamma, gs, gs, 0.0, 1.0, 0.0).expect("valid");
        let c = CavityParams::new(0.0, kappa, 50.0 * width, 1).expect("valid");
        checks.push(check(
            "large_modulation_effective_rate",
            [{
                let (_, ge) = effective_single_exponential(&averaged_components(&e, &c, g)).expect("components");
                let target = gamma + crate::dynamics::effective_rate_large_modulation(g, kappa, gs);
                rel(ge, target * bump)
            }],
            2e-2,
        ));

        let all_pass = checks.iter().all(|c| c.pass);
        VerifyReport {
            schema_version: 1,
            checks,
            all_pass,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn adaptive_examples() {
        let r = quad_adaptive(|x| x * x, 0.0, 1.0, &QuadratureSpec::default());
        assert!((r.value - 1.0 / 3.0).abs() < 1e-12 && r.certified);
        let gw = 2.0;
        let l = |x: f64| (gw / 2.0) / (PI * (x * x + gw * gw / 4.0));
        let r = quad_adaptive(l, -1e6 * gw, 1e6 * gw, &QuadratureSpec::default());
        assert!((r.value - (1.0 - 2.0 / (PI * 2e6))).abs() < 1e-6);
        let r = quad_adaptive(l, f64::NEG_INFINITY, f64::INFINITY, &QuadratureSpec::default());
        assert!((r.value - 1.0).abs() < 1e-10);
        let r = quad_adaptive(|x| (-x).exp(), 0.0, f64::INFINITY, &QuadratureSpec::default());
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn error_estimate_bounds_true_error() {
        let cases: Vec<(Box<dyn Fn(f64) -> f64>, f64, f64, f64)> = vec![
            (Box::new(|x: f64| x.sin()), 0.0, PI, 2.0),
            (Box::new(|x: f64| 1.0 / (1.0 + x * x)), -50.0, 50.0, 2.0 * 50f64.atan()),
            (Box::new(|x: f64| x.sqrt()), 0.0, 1.0, 2.0 / 3.0),
            (Box::new(|x: f64| (-x * x).exp()), -10.0, 10.0, PI.sqrt()),
        ];
        for (f, a, b, exact) in cases {
            for budget in [0, 1, 3, 10, 100] {
                let r = quad_adaptive(&f, a, b, &QuadratureSpec::adaptive(1e-300, 1e-14, budget));
                assert!(r.error >= (r.value - exact).abs(), "estimate {} < error {}", r.error, (r.value - exact).abs());
            }
        }
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let r = quad_adaptive(|x| (1.0 / x).sin(), 1e-6, 1.0, &QuadratureSpec::adaptive(1e-300, 1e-14, 5));
        assert!(!r.certified);
    }

    #[test]
    fn hermite_examples() {
        let (x, w) = gauss_hermite_nodes(1).unwrap();
        assert_eq!(x, vec![0.0]);
        assert_relative_eq!(w[0], PI.sqrt(), max_relative = 1e-14);
        let (x, w) = gauss_hermite_nodes(5).unwrap();
        let m8: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((m8 - 105.0 * PI.sqrt() / 16.0).abs() < 1e-12);
        for n in [1, 2, 3, 7, 20, 41, 82] {
            let (x, w) = gauss_hermite_nodes(n).unwrap();
            assert_relative_eq!(w.iter().sum::<f64>(), PI.sqrt(), max_relative = 1e-12);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
        assert!(gauss_hermite_nodes(0).is_err());
    }

    #[test]
    fn best_single_exponential_examples() {
        assert_eq!(oracle_best_single_exponential(&[(2.0, 3.0)]), (2.0, 3.0));
        let eps = 0.01;
        let (_, g) = oracle_best_single_exponential(&[(1.0, 5.0 * (1.0 - eps)), (1.0, 5.0 * (1.0 + eps))]);
        assert!((g - 5.0).abs() < 5.0 * 5.0 * eps * eps);
    }

    #[test]
    fn synth_is_deterministic_and_poissonian() {
        let model = SampledCurve::new(0.0, 1.0, (0..200).map(|i| 1.0 + (i as f64 * 0.05).sin().abs()).collect()).unwrap();
        let a = synth_generate(&model, 1e5, 42).unwrap();
        let b = synth_generate(&model, 1e5, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_generate(&model, 1e5, 43).unwrap());
        let n = 1e5;
        for seed in 0..50 {
            let total: f64 = synth_generate(&model, n, seed).unwrap().values.iter().sum();
            assert!((total - n).abs() <= 3.0 * n.sqrt());
        }
    }

    #[test]
    fn synth_mean_converges_to_model() {
        let model = SampledCurve::new(0.0, 1.0, (0..50).map(|i| 1.0 + i as f64).collect()).unwrap();
        let expect = synth_expectation(&model, 2e5);
        let mut mean = vec![0.0; 50];
        for seed in 0..1000 {
            let s = synth_generate(&model, 2e5, seed).unwrap();
            mean.iter_mut().zip(&s.values).for_each(|(m, v)| *m += v / 1000.0);
        }
        for (m, e) in mean.iter().zip(&expect.values) {
            if *e >= 100.0 {
                assert!((m - e).abs() <= 0.01 * e);
            }
        }
    }

    #[test]
    fn verify_passes_and_detects_perturbation() {
        let opts = verify::VerifyOptions {
            draws: 6,
            ..Default::default()
        };
        let ok = verify::run(&opts);
        assert!(ok.all_pass, "{ok:#?}");
        let bad = verify::run(&verify::VerifyOptions {
            perturbation: 1e-3,
            ..opts
        });
        assert!(!bad.all_pass);
        assert_eq!(ok.checks.len(), bad.checks.len());
    }
}
