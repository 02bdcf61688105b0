//! Closed-form solution of the replicator-mutator equation.
//!
//! For `t > 0`, with `g = tanh(2σt)`, `κ = 1/cosh(2σt)` (harmonic fitness) or
//! `g = tan(2σt)`, `κ = 1/cos(2σt)` (inverted fitness) and `s = ∓1`,
//!
//! ```text
//! u(t,x) = (2πσg)^{-1/2} e^{s g x²/(2σ)} ∫ e^{−(κx − y)²/(2σg)} u₀(y) dy
//!          ───────────────────────────────────────────────────────────
//!                          ∫ e^{s g y²/(2σ)} u₀(y) dy
//! ```
//!
//! and the second moment is `σg + κ² M₂/M₀`, with `Mₖ = ∫ e^{s g y²/(2σ)} yᵏ u₀`.
//! Everything is carried on the log scale.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::gaussian_dynamics::{extinction_time, tanh_sech, ExtinctionReport};
use crate::model::{FitnessSign, Parameters, Survival, ValidatedDatum};
use crate::quadrature::{
    datum_integral, integrate_with_breakpoints, Domain, GaussianWeight, IntegralPath,
    QuadratureError,
};
use crate::DEFAULT_TOL;

/// Below `SMALL_TIME/σ` the kernel is numerically a Dirac mass and `u₀` is
/// returned instead.
pub const SMALL_TIME: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosedFormError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Relative tolerance of the datum integrals.
    pub tol: f64,
    pub path: IntegralPath,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            path: IntegralPath::Auto,
        }
    }
}

/// A field value together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pointwise {
    pub u: f64,
    /// `t` was below the small-time threshold and `u₀(x)` was returned.
    pub small_time_fallback: bool,
}

/// Time-dependent factors shared by every `x` at a given `t`.
#[derive(Debug, Clone, Copy)]
struct Slice {
    sign: f64,
    sigma: f64,
    /// tanh(2σt) or tan(2σt)
    g: f64,
    /// 1/cosh(2σt) or 1/cos(2σt)
    kappa: f64,
    ln_denominator: f64,
    small_time: bool,
}

impl Slice {
    fn new(
        datum: &ValidatedDatum,
        params: Parameters,
        extinction: Option<&ExtinctionReport>,
        t: f64,
        opts: EvalOptions,
    ) -> Result<Survival<Slice>, ClosedFormError> {
        if !(t >= 0.0) {
            return Err(ClosedFormError::NegativeTime(t));
        }
        let sigma = params.sigma();
        if let Some(report) = extinction {
            if t >= report.time {
                return Ok(Survival::Extinct);
            }
        }
        let sign = params.fitness().sign();
        let (g, kappa) = trig_factors(params.fitness(), sigma, t);
        let small_time = t < SMALL_TIME / sigma;
        let ln_denominator = if small_time {
            0.0
        } else {
            let weight = GaussianWeight::Growth {
                gamma: sign * g / (2.0 * sigma),
            };
            match datum_integral(datum, weight, 0, opts.tol, opts.path) {
                Ok(r) => r.log_abs,
                Err(QuadratureError::Divergent) => return Ok(Survival::Extinct),
                Err(e) => return Err(e.into()),
            }
        };
        Ok(Survival::Alive(Slice {
            sign,
            sigma,
            g,
            kappa,
            ln_denominator,
            small_time,
        }))
    }

    fn value(
        &self,
        datum: &ValidatedDatum,
        x: f64,
        opts: EvalOptions,
    ) -> Result<Pointwise, ClosedFormError> {
        if self.small_time {
            return Ok(Pointwise {
                u: datum.density(x),
                small_time_fallback: true,
            });
        }
        let variance = self.sigma * self.g;
        let kernel = GaussianWeight::Kernel {
            center: self.kappa * x,
            variance,
        };
        let numerator = datum_integral(datum, kernel, 0, opts.tol, opts.path)?;
        let ln_u = -0.5 * (2.0 * PI * variance).ln() + self.sign * self.g * x * x / (2.0 * self.sigma)
            + numerator.log_abs
            - self.ln_denominator;
        Ok(Pointwise {
            u: ln_u.exp(),
            small_time_fallback: false,
        })
    }
}

/// `(tanh 2σt, 1/cosh 2σt)` or `(tan 2σt, 1/cos 2σt)`.
pub(crate) fn trig_factors(fitness: FitnessSign, sigma: f64, t: f64) -> (f64, f64) {
    let z = 2.0 * sigma * t;
    match fitness {
        FitnessSign::Harmonic => tanh_sech(z),
        FitnessSign::Inverted => {
            let (sin, cos) = z.sin_cos();
            (sin / cos, 1.0 / cos)
        }
    }
}

fn second_moment_at(
    datum: &ValidatedDatum,
    params: Parameters,
    extinction: Option<&ExtinctionReport>,
    t: f64,
    opts: EvalOptions,
) -> Result<Survival<f64>, ClosedFormError> {
    if !(t >= 0.0) {
        return Err(ClosedFormError::NegativeTime(t));
    }
    if let Some(report) = extinction {
        if t >= report.time {
            return Ok(Survival::Extinct);
        }
    }
    let sigma = params.sigma();
    let (g, kappa) = trig_factors(params.fitness(), sigma, t);
    let weight = GaussianWeight::Growth {
        gamma: params.fitness().sign() * g / (2.0 * sigma),
    };
    let moments = datum_integral(datum, weight, 0, opts.tol, opts.path)
        .and_then(|m0| Ok((m0, datum_integral(datum, weight, 2, opts.tol, opts.path)?)));
    match moments {
        Ok((m0, m2)) => {
            let ratio = (m2.log_abs - m0.log_abs).exp();
            Ok(Survival::Alive(sigma * g + kappa * kappa * ratio))
        }
        Err(QuadratureError::Divergent) => Ok(Survival::Extinct),
        Err(e) => Err(e.into()),
    }
}

/// Lazily evaluated solution `u(t,x)` with its scalar channels.
///
/// For inverted fitness the extinction time is computed once at
/// construction and every query at `t ≥ T` returns [`Survival::Extinct`].
#[derive(Debug, Clone)]
pub struct SolutionField {
    params: Parameters,
    datum: ValidatedDatum,
    opts: EvalOptions,
    extinction: Option<ExtinctionReport>,
}

impl SolutionField {
    pub fn new(params: Parameters, datum: ValidatedDatum) -> Self {
        Self::with_options(params, datum, EvalOptions::default())
    }

    pub fn with_options(params: Parameters, datum: ValidatedDatum, opts: EvalOptions) -> Self {
        let extinction = match params.fitness() {
            FitnessSign::Harmonic => None,
            FitnessSign::Inverted => Some(extinction_time(&datum, params.sigma())),
        };
        Self {
            params,
            datum,
            opts,
            extinction,
        }
    }

    pub fn params(&self) -> Parameters {
        self.params
    }

    pub fn datum(&self) -> &ValidatedDatum {
        &self.datum
    }

    pub fn options(&self) -> EvalOptions {
        self.opts
    }

    /// `None` for harmonic fitness.
    pub fn extinction(&self) -> Option<&ExtinctionReport> {
        self.extinction.as_ref()
    }

    fn slice(&self, t: f64) -> Result<Survival<Slice>, ClosedFormError> {
        Slice::new(&self.datum, self.params, self.extinction.as_ref(), t, self.opts)
    }

    pub fn value(&self, t: f64, x: f64) -> Result<Survival<Pointwise>, ClosedFormError> {
        match self.slice(t)? {
            Survival::Alive(s) => Ok(Survival::Alive(s.value(&self.datum, x, self.opts)?)),
            Survival::Extinct => Ok(Survival::Extinct),
        }
    }

    pub fn u(&self, t: f64, x: f64) -> Result<Survival<f64>, ClosedFormError> {
        Ok(self.value(t, x)?.map(|p| p.u))
    }

    /// `u(t, ·)` on a grid; the time factors are computed once.
    pub fn values(&self, t: f64, xs: &[f64]) -> Result<Survival<Vec<f64>>, ClosedFormError> {
        match self.slice(t)? {
            Survival::Alive(s) => xs
                .iter()
                .map(|&x| s.value(&self.datum, x, self.opts).map(|p| p.u))
                .collect::<Result<Vec<_>, _>>()
                .map(Survival::Alive),
            Survival::Extinct => Ok(Survival::Extinct),
        }
    }

    /// `∫x²u(t,x)dx` from the weighted moments of `u₀`.
    pub fn second_moment(&self, t: f64) -> Result<Survival<f64>, ClosedFormError> {
        second_moment_at(&self.datum, self.params, self.extinction.as_ref(), t, self.opts)
    }

    /// `f̄(t) = ∫ f u`, i.e. `∓` the second moment.
    pub fn mean_fitness(&self, t: f64) -> Result<Survival<f64>, ClosedFormError> {
        let sign = self.params.fitness().sign();
        Ok(self.second_moment(t)?.map(|m| sign * m))
    }

    /// `∫ xᵏ u(t,x) dx` by quadrature of the evaluated field.
    pub fn field_moment(&self, t: f64, k: i32) -> Result<Survival<f64>, ClosedFormError> {
        let slice = match self.slice(t)? {
            Survival::Alive(s) => s,
            Survival::Extinct => return Ok(Survival::Extinct),
        };
        let width = (self.params.sigma() * slice.g).sqrt();
        let kappa = if slice.small_time { 1.0 } else { slice.kappa };
        let mut points: Vec<f64> = Vec::new();
        for b in self.datum.breakpoints() {
            for j in [-8.0, -4.0, -2.0, 0.0, 2.0, 4.0, 8.0] {
                points.push(b * kappa + j * width);
            }
        }
        // The datum integrals are nested inside; keep the outer tolerance looser.
        let outer_tol = (self.opts.tol * 10.0).max(1e-12);
        let failure = std::cell::Cell::new(None);
        let r = integrate_with_breakpoints(
            |x| match slice.value(&self.datum, x, self.opts) {
                Ok(p) => p.u * x.powi(k),
                Err(e) => {
                    failure.set(Some(e));
                    0.0
                }
            },
            self.datum.integration_domain_for_field(slice.small_time),
            &points,
            outer_tol,
        )?;
        if let Some(e) = failure.take() {
            return Err(e);
        }
        Ok(Survival::Alive(r.value()))
    }

    /// `∫ u(t,x) dx` by quadrature of the evaluated field.
    pub fn mass(&self, t: f64) -> Result<Survival<f64>, ClosedFormError> {
        self.field_moment(t, 0)
    }
}

impl ValidatedDatum {
    fn integration_domain_for_field(&self, small_time: bool) -> Domain {
        if small_time {
            self.integration_domain()
        } else {
            Domain::WholeLine
        }
    }
}

/// Harmonic-fitness solution at one point.
pub fn evaluate_harmonic(
    d: &ValidatedDatum,
    sigma: f64,
    t: f64,
    x: f64,
) -> Result<Pointwise, ClosedFormError> {
    let params = Parameters::new(sigma, FitnessSign::Harmonic)
        .expect("sigma must be positive");
    match Slice::new(d, params, None, t, EvalOptions::default())? {
        Survival::Alive(s) => s.value(d, x, EvalOptions::default()),
        Survival::Extinct => unreachable!("harmonic solutions never go extinct"),
    }
}

/// Inverted-fitness solution at one point; extinct for `t ≥ T`.
pub fn evaluate_inverted(
    d: &ValidatedDatum,
    sigma: f64,
    t: f64,
    x: f64,
) -> Result<Survival<Pointwise>, ClosedFormError> {
    let params = Parameters::new(sigma, FitnessSign::Inverted).expect("sigma must be positive");
    let report = extinction_time(d, sigma);
    match Slice::new(d, params, Some(&report), t, EvalOptions::default())? {
        Survival::Alive(s) => Ok(Survival::Alive(s.value(d, x, EvalOptions::default())?)),
        Survival::Extinct => Ok(Survival::Extinct),
    }
}

/// `σ tanh(2σt) + cosh(2σt)^{−2} M₂/M₀` with weights `e^{−tanh(2σt)y²/(2σ)}`.
pub fn second_moment_harmonic(d: &ValidatedDatum, sigma: f64, t: f64) -> Result<f64, ClosedFormError> {
    let params = Parameters::new(sigma, FitnessSign::Harmonic).expect("sigma must be positive");
    match second_moment_at(d, params, None, t, EvalOptions::default())? {
        Survival::Alive(m) => Ok(m),
        Survival::Extinct => unreachable!("harmonic solutions never go extinct"),
    }
}

/// `σ tan(2σt) + cos(2σt)^{−2} M₂/M₀` with weights `e^{+tan(2σt)y²/(2σ)}`.
pub fn second_moment_inverted(
    d: &ValidatedDatum,
    sigma: f64,
    t: f64,
) -> Result<Survival<f64>, ClosedFormError> {
    let params = Parameters::new(sigma, FitnessSign::Inverted).expect("sigma must be positive");
    let report = extinction_time(d, sigma);
    second_moment_at(d, params, Some(&report), t, EvalOptions::default())
}

/// `f̄(t) = −∫x²u` (harmonic) or `+∫x²u` (inverted).
pub fn mean_fitness(
    d: &ValidatedDatum,
    sigma: f64,
    fitness: FitnessSign,
    t: f64,
) -> Result<Survival<f64>, ClosedFormError> {
    let m = match fitness {
        FitnessSign::Harmonic => Survival::Alive(second_moment_harmonic(d, sigma, t)?),
        FitnessSign::Inverted => second_moment_inverted(d, sigma, t)?,
    };
    Ok(m.map(|m| fitness.sign() * m))
}

/// Fundamental solution `ψ(t,x) = (2πσ tanh 2σt)^{−1/2} e^{−x²/(2σ tanh 2σt)}`.
pub fn asymptotic_profile_psi(sigma: f64, t: f64, x: f64) -> f64 {
    let (th, _) = tanh_sech(2.0 * sigma * t);
    let v = sigma * th;
    (-x * x / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()
}

/// Universal stationary Gaussian `φ(x) = (2πσ)^{−1/2} e^{−x²/(2σ)}`.
pub fn stationary_profile_phi(sigma: f64, x: f64) -> f64 {
    (-x * x / (2.0 * sigma)).exp() / (2.0 * PI * sigma).sqrt()
}
