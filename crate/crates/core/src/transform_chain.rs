//! Second evaluation path: heat equation, lens transform, gauge normalization.
//!
//! `u₀ ↦ w` solves `∂ₜw = ∂ₓₓw` with `w(0,x) = u₀(σx)`;
//! the lens transform maps `w` to `v`, the solution of
//! `∂ₜv = σ²∂ₓₓv ∓ x²v`; and `u = v/(1 ∓ I(t))` with
//! `I(t) = ∫₀ᵗ∫x²v`. Only the heat kernel convolution is done by quadrature
//! here, so agreement with [`crate::closed_form`] is a genuine cross-check.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::closed_form::SMALL_TIME;
use crate::gaussian_dynamics::{extinction_time, ln_cosh, tanh_sech};
use crate::model::{heat_cap, FitnessSign, Survival, ValidatedDatum};
use crate::quadrature::{
    datum_integral, integrate_log, integrate_with_breakpoints, Domain, GaussianWeight,
    IntegralPath, QuadratureError,
};
use crate::DEFAULT_TOL;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("t = {t} is beyond the inverted lens cap π/(4σ) = {cap}")]
    BeyondHeatCap { t: f64, cap: f64 },
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
}

/// Heat-kernel convolution `(4πt)^{−1/2} ∫ e^{−(x−y)²/(4t)} w₀(y) dy`.
pub fn heat_solve<F: Fn(f64) -> f64>(w0: F, t: f64, x: f64) -> Result<f64, ChainError> {
    if !(t > 0.0) {
        return Err(ChainError::NonPositiveTime(t));
    }
    let s = (2.0 * t).sqrt();
    let points: Vec<f64> = [-12.0, -6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0, 12.0]
        .iter()
        .map(|k| x + k * s)
        .collect();
    let r = integrate_with_breakpoints(
        |y| (-(x - y) * (x - y) / (4.0 * t)).exp() * w0(y),
        Domain::WholeLine,
        &points,
        1e-12,
    )?;
    Ok(r.value() / (4.0 * PI * t).sqrt())
}

/// `ln w(τ, ξ)` for `w(0, y) = u₀(σy)`.
fn ln_heat_of_datum(
    d: &ValidatedDatum,
    sigma: f64,
    tau: f64,
    xi: f64,
    tol: f64,
) -> Result<f64, QuadratureError> {
    let s = (2.0 * tau).sqrt();
    let mut points: Vec<f64> = d.breakpoints().iter().map(|b| b / sigma).collect();
    points.extend(
        [-12.0, -6.0, -3.0, -1.5, 0.0, 1.5, 3.0, 6.0, 12.0]
            .iter()
            .map(|k| xi + k * s),
    );
    let domain = match d.integration_domain() {
        Domain::Finite(lo, hi) => Domain::Finite(lo / sigma, hi / sigma),
        other => other,
    };
    let ln_f = |y: f64| -(xi - y) * (xi - y) / (4.0 * tau) + d.ln_density(sigma * y);
    let (lo, hi) = d.bulk_domain();
    let (lo, hi) = (lo / sigma, hi / sigma);
    let center = xi.clamp(lo, hi);
    if center != xi {
        let peak = golden_max(&ln_f, center.min(xi), center.max(xi));
        let h = s.min((hi - lo) / 20.0);
        points.extend(
            [-12.0, -6.0, -3.0, -1.5, 0.0, 1.5, 3.0, 6.0, 12.0]
                .iter()
                .map(|k| peak + k * h),
        );
    }
    let r = integrate_log(|y| (ln_f(y), 1.0), domain, &points, tol)?;
    Ok(r.log_abs - 0.5 * (4.0 * PI * tau).ln())
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut e = a + r * (b - a);
    let (mut fc, mut fe) = (f(c), f(e));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc >= fe {
            b = e;
            e = c;
            fe = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + r * (b - a);
            fe = f(e);
        }
    }
    0.5 * (a + b)
}

/// Lens transform at `(t, x)`:
/// `v(t,x) = prefactor · e^{gauge_exponent} · w(tau, xi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LensMap {
    pub tau: f64,
    pub xi: f64,
    /// `ln cosh(2σt)^{−1/2}` or `ln cos(2σt)^{−1/2}`.
    pub ln_prefactor: f64,
    pub gauge_exponent: f64,
}

impl LensMap {
    pub fn prefactor(&self) -> f64 {
        self.ln_prefactor.exp()
    }
}

pub fn lens_harmonic(sigma: f64, t: f64, x: f64) -> LensMap {
    let z = 2.0 * sigma * t;
    let (th, sech) = tanh_sech(z);
    LensMap {
        tau: th / (2.0 * sigma),
        xi: x * sech / sigma,
        ln_prefactor: -0.5 * ln_cosh(z),
        gauge_exponent: -th * x * x / (2.0 * sigma),
    }
}

pub fn lens_inverted(sigma: f64, t: f64, x: f64) -> Result<LensMap, ChainError> {
    let cap = heat_cap(sigma);
    if t >= cap {
        return Err(ChainError::BeyondHeatCap { t, cap });
    }
    let (sin, cos) = (2.0 * sigma * t).sin_cos();
    let tan = sin / cos;
    Ok(LensMap {
        tau: tan / (2.0 * sigma),
        xi: x / (sigma * cos),
        ln_prefactor: -0.5 * cos.ln(),
        gauge_exponent: tan * x * x / (2.0 * sigma),
    })
}

/// Per-time quantities of the pipeline; evaluating many `x` at one `t`
/// reuses the normalization integral.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChainIntermediate {
    pub sigma: f64,
    pub fitness: FitnessSign,
    pub t: f64,
    /// Heat time `τ(t)`.
    pub tau: f64,
    /// Normalization integral `I(t)`.
    pub i_value: f64,
    /// `ln(1 − I)` (harmonic) or `ln(1 + I)` (inverted).
    pub ln_gauge: f64,
    tol: f64,
}

impl ChainIntermediate {
    pub fn new(
        d: &ValidatedDatum,
        sigma: f64,
        fitness: FitnessSign,
        t: f64,
        tol: f64,
    ) -> Result<Survival<Self>, ChainError> {
        if !(t > 0.0) {
            return Err(ChainError::NonPositiveTime(t));
        }
        let lens = match fitness {
            FitnessSign::Harmonic => lens_harmonic(sigma, t, 0.0),
            FitnessSign::Inverted => match lens_inverted(sigma, t, 0.0) {
                Ok(l) => l,
                Err(ChainError::BeyondHeatCap { .. }) => return Ok(Survival::Extinct),
                Err(e) => return Err(e),
            },
        };
        let (i_value, ln_gauge) = match normalization(d, sigma, fitness, t, tol)? {
            Survival::Alive(v) => v,
            Survival::Extinct => return Ok(Survival::Extinct),
        };
        Ok(Survival::Alive(Self {
            sigma,
            fitness,
            t,
            tau: lens.tau,
            i_value,
            ln_gauge,
            tol,
        }))
    }

    fn lens(&self, x: f64) -> LensMap {
        match self.fitness {
            FitnessSign::Harmonic => lens_harmonic(self.sigma, self.t, x),
            FitnessSign::Inverted => {
                lens_inverted(self.sigma, self.t, x).expect("checked at construction")
            }
        }
    }

    /// `ln v(t, x)`.
    pub fn ln_v(&self, d: &ValidatedDatum, x: f64) -> Result<f64, ChainError> {
        let lens = self.lens(x);
        let ln_w = ln_heat_of_datum(d, self.sigma, lens.tau, lens.xi, self.tol)?;
        Ok(lens.ln_prefactor + lens.gauge_exponent + ln_w)
    }

    pub fn v(&self, d: &ValidatedDatum, x: f64) -> Result<f64, ChainError> {
        Ok(self.ln_v(d, x)?.exp())
    }

    pub fn u(&self, d: &ValidatedDatum, x: f64) -> Result<f64, ChainError> {
        Ok((self.ln_v(d, x)? - self.ln_gauge).exp())
    }
}

/// `(I(t), ln(1 ∓ I(t)))` from the closed form of `I`.
fn normalization(
    d: &ValidatedDatum,
    sigma: f64,
    fitness: FitnessSign,
    t: f64,
    tol: f64,
) -> Result<Survival<(f64, f64)>, ChainError> {
    let z = 2.0 * sigma * t;
    match fitness {
        FitnessSign::Harmonic => {
            let (th, _) = tanh_sech(z);
            let weight = GaussianWeight::Growth {
                gamma: -th / (2.0 * sigma),
            };
            let ln_d = datum_integral(d, weight, 0, tol, IntegralPath::Quadrature)?.log_abs;
            let ln_gauge = -0.5 * ln_cosh(z) + ln_d;
            Ok(Survival::Alive((-ln_gauge.exp_m1(), ln_gauge)))
        }
        FitnessSign::Inverted => {
            let cap = heat_cap(sigma);
            if t >= cap {
                return Err(ChainError::BeyondHeatCap { t, cap });
            }
            if t >= extinction_time(d, sigma).time {
                return Ok(Survival::Extinct);
            }
            let tan = z.tan();
            let weight = GaussianWeight::Growth {
                gamma: tan / (2.0 * sigma),
            };
            let ln_d = match datum_integral(d, weight, 0, tol, IntegralPath::Quadrature) {
                Ok(r) => r.log_abs,
                Err(QuadratureError::Divergent) => return Ok(Survival::Extinct),
                Err(e) => return Err(e.into()),
            };
            let ln_gauge = -0.5 * z.cos().ln() + ln_d;
            Ok(Survival::Alive((ln_gauge.exp_m1(), ln_gauge)))
        }
    }
}

/// `I(t) = 1 − cosh(2σt)^{−1/2}∫e^{−tanh(2σt)z²/(2σ)}u₀` (harmonic) or
/// `cos(2σt)^{−1/2}∫e^{tan(2σt)z²/(2σ)}u₀ − 1` (inverted).
///
/// Extinct once the inverted integral diverges; `I → +∞` as `t ↑ T`.
#[allow(non_snake_case)]
pub fn normalization_I(
    d: &ValidatedDatum,
    sigma: f64,
    fitness: FitnessSign,
    t: f64,
) -> Result<Survival<f64>, ChainError> {
    if t == 0.0 {
        return Ok(Survival::Alive(0.0));
    }
    Ok(normalization(d, sigma, fitness, t, DEFAULT_TOL)?.map(|(i, _)| i))
}

/// `u(t, x)` through the full pipeline.
pub fn chain_evaluate(
    d: &ValidatedDatum,
    sigma: f64,
    fitness: FitnessSign,
    t: f64,
    x: f64,
) -> Result<Survival<f64>, ChainError> {
    if t < SMALL_TIME / sigma {
        return Ok(Survival::Alive(d.density(x)));
    }
    match ChainIntermediate::new(d, sigma, fitness, t, DEFAULT_TOL)? {
        Survival::Alive(c) => Ok(Survival::Alive(c.u(d, x)?)),
        Survival::Extinct => Ok(Survival::Extinct),
    }
}

/// [`chain_evaluate`] on a grid of `x` at one time.
pub fn chain_evaluate_grid(
    d: &ValidatedDatum,
    sigma: f64,
    fitness: FitnessSign,
    t: f64,
    xs: &[f64],
) -> Result<Survival<Vec<f64>>, ChainError> {
    if t < SMALL_TIME / sigma {
        return Ok(Survival::Alive(xs.iter().map(|&x| d.density(x)).collect()));
    }
    match ChainIntermediate::new(d, sigma, fitness, t, DEFAULT_TOL)? {
        Survival::Alive(c) => xs
            .iter()
            .map(|&x| c.u(d, x))
            .collect::<Result<Vec<_>, _>>()
            .map(Survival::Alive),
        Survival::Extinct => Ok(Survival::Extinct),
    }
}
